fn main() {
    std::process::exit(srcseek::cli::run());
}
