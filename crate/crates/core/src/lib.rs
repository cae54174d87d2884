pub mod linalg;
pub mod integrate;
pub mod statespace;
pub mod sdp;
pub mod zf;
pub mod certify;
pub mod field;
pub mod sim;
pub mod config;
pub mod cli;
