//! Command-line entry point.
//!
//! Exit codes: 0 success / feasible / connected, 1 error, 2 infeasible or
//! not connected, 3 simulation did not converge.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::certify::{bisect_alpha, sig12, sweep, write_sweep_csv, RateCertificate, SweepRow, SweepSpec};
use crate::config::{ConfigError, RunConfig};
use crate::sdp::ClarabelBackend;
use crate::sim::{
    ball_radius, check_initial_ball, equilibrium_state, estimate_decay_rate, fnv1a, sample_in_ball, simulate,
    NoisePolicy, SimError,
};
use crate::statespace::check_equilibrium_family;

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_NEGATIVE: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;

/// Gap allowed between the observed and the certified rate.
pub const SOUNDNESS_SLACK: f64 = 0.01;

#[derive(Debug, Parser)]
#[command(name = "srcseek", version, about = "Rate certificates and simulations for cooperative source seeking")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads for sweeps and batches of simulations.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory, overriding `[output] dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Bisect the certified convergence rate of one configuration.
    Certify,
    /// Rate table over (k_d, delta, L).
    Sweep,
    /// Connectivity and sector bounds of a scenario.
    Graphcheck,
    /// Simulate the network and estimate the observed decay rate.
    Simulate,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Run(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

fn run_err(e: impl std::fmt::Display) -> CliError {
    CliError::Run(e.to_string())
}

/// Parses `args` (including the program name) and runs the subcommand.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}

pub fn run() -> i32 {
    run_from(std::env::args_os())
}

fn load(cli: &Cli) -> Result<RunConfig, CliError> {
    let path = cli.config.as_ref().ok_or_else(|| CliError::Run("--config <path> is required".into()))?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(w) = cli.workers {
        if w == 0 {
            return Err(CliError::Run("--workers must be positive".into()));
        }
        cfg.workers = Some(w);
    }
    Ok(cfg)
}

fn out_dir(cli: &Cli, cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let dir = cli.out.clone().unwrap_or_else(|| cfg.out_dir());
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn with_workers<R: Send>(workers: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R, CliError> {
    match workers {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build().map_err(run_err)?;
            Ok(pool.install(f))
        }
    }
}

fn execute(cli: &Cli) -> Result<i32, CliError> {
    let cfg = load(cli)?;
    match cli.command {
        Command::Certify => cmd_certify(cli, &cfg),
        Command::Sweep => cmd_sweep(cli, &cfg),
        Command::Graphcheck => cmd_graphcheck(&cfg),
        Command::Simulate => cmd_simulate(cli, &cfg),
    }
}

fn cmd_certify(cli: &Cli, cfg: &RunConfig) -> Result<i32, CliError> {
    let plant = cfg.plant()?;
    let params = cfg.certify_params(plant.d());
    let cert = bisect_alpha(&plant, params, &cfg.bisection(), &ClarabelBackend::default()).map_err(run_err)?;
    let path = out_dir(cli, cfg)?.join("certificate.toml");
    fs::write(&path, cert.to_toml())?;
    println!(
        "alpha_star = {}  status = {}  probes = {}  monotone = {}",
        sig12(cert.alpha_or_sentinel()),
        cert.status(),
        cert.trace.len(),
        cert.monotone
    );
    println!("certificate written to {}", path.display());
    Ok(if cert.alpha_star.is_some() { EXIT_OK } else { EXIT_NEGATIVE })
}

/// Per `(k_d, δ)`: the largest swept `L` such that it and every smaller
/// swept `L` were certified; `None` if the smallest already fails.
pub fn sweep_thresholds(rows: &[SweepRow]) -> Vec<(f64, f64, Option<f64>)> {
    let mut out: Vec<(f64, f64, Option<f64>, bool)> = Vec::new();
    for r in rows {
        let feasible = r.status == "feasible";
        match out.last_mut() {
            Some(last) if last.0 == r.k_d && last.1 == r.delta => {
                if last.3 && feasible {
                    last.2 = Some(r.l);
                } else {
                    last.3 = false;
                }
            }
            _ => out.push((r.k_d, r.delta, feasible.then_some(r.l), feasible)),
        }
    }
    out.into_iter().map(|(k, d, l, _)| (k, d, l)).collect()
}

fn cmd_sweep(cli: &Cli, cfg: &RunConfig) -> Result<i32, CliError> {
    let section = cfg.sweep.as_ref().ok_or_else(|| CliError::Run("missing [sweep] section".into()))?;
    let spec = SweepSpec {
        k_d: section.k_d.values(),
        delta: section.delta.values(),
        l: section.l.values(),
        m: cfg.multiplier.m,
        nu: cfg.multiplier.nu,
        bisection: cfg.bisection(),
    };
    // Structural problems with the model abort the whole sweep.
    cfg.plant()?;
    let backend = ClarabelBackend::default();
    let rows = with_workers(cfg.workers, || sweep(|k_d| cfg.plant_with_kd(k_d), &spec, &backend))?;
    let path = out_dir(cli, cfg)?.join("sweep.csv");
    write_sweep_csv(&rows, BufWriter::new(File::create(&path)?))?;
    for r in rows.iter().filter(|r| r.error.is_some()) {
        eprintln!("cell k_d={} delta={} L={}: {}", r.k_d, r.delta, r.l, r.error.as_deref().unwrap_or(""));
    }
    if spec.l.len() > 1 {
        for (k_d, delta, l_star) in sweep_thresholds(&rows) {
            match l_star {
                Some(l) => println!("threshold k_d={} delta={} L*={}", sig12(k_d), sig12(delta), sig12(l)),
                None => println!("threshold k_d={} delta={} L*=none", sig12(k_d), sig12(delta)),
            }
        }
    }
    println!("{} rows written to {}", rows.len(), path.display());
    Ok(EXIT_OK)
}

fn cmd_graphcheck(cfg: &RunConfig) -> Result<i32, CliError> {
    let (_, graph) = cfg.scenario()?;
    let connected = graph.check_path_to_informed();
    let (m_f, l_f) = graph.sector_bounds();
    let (lam_s, lam_b) = laplacian_extremes(&graph);
    println!("agents = {}  informed = {}  d = {}", graph.n(), graph.informed().len(), graph.d());
    println!("connected_to_informed = {connected}");
    println!("lambda_min(L_s) = {}", sig12(lam_s));
    println!("lambda_max(L_b) = {}", sig12(lam_b));
    if connected {
        println!("certified sector = ({}, {})", sig12(m_f), sig12(l_f));
        println!("member of S({}, {}) = {}", sig12(cfg.multiplier.m), sig12(cfg.multiplier.l), graph.certify_sector(cfg.multiplier.m, cfg.multiplier.l));
        Ok(EXIT_OK)
    } else {
        println!("certified sector = none");
        Ok(EXIT_NEGATIVE)
    }
}

fn laplacian_extremes(graph: &crate::field::FieldGraph) -> (f64, f64) {
    let (l_s, l_b) = graph.grounded_laplacians();
    (crate::linalg::lambda_min(&l_s), crate::linalg::lambda_max(&l_b))
}

fn cmd_simulate(cli: &Cli, cfg: &RunConfig) -> Result<i32, CliError> {
    let (scenario_text, graph) = cfg.scenario()?;
    let plant = cfg.plant()?;
    let eq = check_equilibrium_family(&plant);
    if !eq.holds {
        return Err(CliError::Run("plant has no output-parametrized equilibrium family".into()));
    }
    let cert = match &cfg.simulation.certificate {
        Some(p) => {
            let text = crate::config::read_text(&cfg.resolve(p))?;
            Some(RateCertificate::from_toml(&text).map_err(run_err)?)
        }
        None => None,
    };
    let y_star = graph.minimize_f().map_err(run_err)?;
    let eta_star = equilibrium_state(&plant, &eq.witness, &y_star);
    let n_g = plant.n_states();
    let c = (0..graph.n())
        .map(|i| ball_radius(&plant, &eta_star.rows(i * n_g, n_g).into_owned()))
        .fold(f64::INFINITY, f64::min);
    let scenario_hash = fnv1a(scenario_text.as_bytes());
    let sim_cfg = cfg.sim_config();
    let dir = out_dir(cli, cfg)?;
    let runs: Vec<u64> = (0..cfg.simulation.runs as u64).map(|k| cfg.seed.wrapping_add(k)).collect();

    let results = with_workers(cfg.workers, || {
        runs.par_iter()
            .map(|&seed| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ scenario_hash);
                let ball = cert.as_ref().and_then(|c| c.payload.as_ref()).map(|p| &p.x0);
                let eta0 = match ball {
                    Some(x0) if c.is_finite() => {
                        let cond = crate::linalg::spd_condition(x0);
                        sample_in_ball(&eta_star, 0.9 * c / cond.sqrt(), &mut rng)
                    }
                    _ => {
                        let s = cfg.simulation.init_spread;
                        eta_star.map(|v| v + rng.gen_range(-s..=s))
                    }
                };
                let in_ball = ball.map(|x0| check_initial_ball(x0, c, &eta0, &eta_star));
                let noise = NoisePolicy { mode: cfg.noise.mode, delta: cfg.noise.delta, period: cfg.noise.period, seed };
                let traj = simulate(&graph, &plant, &noise, &eta0, &sim_cfg, scenario_hash);
                (seed, in_ball, traj)
            })
            .collect::<Vec<_>>()
    })?;

    let mut code = EXIT_OK;
    let mut report = String::new();
    for (seed, in_ball, traj) in results {
        let traj = traj.map_err(run_err)?;
        let stem = format!("trajectory_seed{seed}");
        traj.write_csv(BufWriter::new(File::create(dir.join(format!("{stem}.csv")))?))?;
        fs::write(dir.join(format!("{stem}.toml")), traj.meta_toml())?;
        let last_y = traj.y.last().cloned().unwrap_or_else(|| DVector::zeros(0));
        let final_err = (&last_y - &y_star).norm();
        let _ = write!(report, "seed {seed}: final |y - y*| = {}", sig12(final_err));
        if let Some(ok) = in_ball {
            let _ = write!(report, "  initial_ball = {ok}");
        }
        if traj.meta.left_parameter_set {
            let _ = write!(report, "  LEFT PARAMETER SET");
        }
        match estimate_decay_rate(&traj, &y_star) {
            Ok(fit) => {
                let _ = write!(report, "  alpha_hat = {}  r2 = {}", sig12(fit.alpha_hat), sig12(fit.r_squared));
                if let Some(a) = cert.as_ref().and_then(|c| c.alpha_star) {
                    let pass = fit.alpha_hat >= a - SOUNDNESS_SLACK;
                    let _ = write!(report, "  alpha_star = {}  soundness = {}", sig12(a), if pass { "PASS" } else { "FAIL" });
                }
            }
            Err(SimError::NotConverged { initial_error, final_error }) => {
                let _ = write!(
                    report,
                    "  NOT CONVERGED (error {} -> {})",
                    sig12(initial_error),
                    sig12(final_error)
                );
                code = EXIT_NOT_CONVERGED;
            }
            Err(e) => {
                let _ = write!(report, "  rate unavailable: {e}");
            }
        }
        report.push('\n');
    }
    print!("{report}");
    println!("y* = {:?}", y_star.as_slice());
    Ok(code)
}
