//! End-to-end acceptance checks; one PASS/FAIL line per criterion.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use srcseek::certify::{
    assemble_full_lmi, assemble_single_agent_lmi, bisect, bisect_alpha, solve_feasibility, stability_threshold,
    BisectionConfig, CertifyParams, ProbeResult, RateCertificate, DEFAULT_TOL,
};
use srcseek::field::{cycle_edges, random_edges, random_spd, Check, FieldGraph, ScalarField};
use srcseek::linalg;
use srcseek::sdp::{ClarabelBackend, SdpStatus};
use srcseek::sim::{
    ball_radius, check_initial_ball, equilibrium_state, estimate_decay_rate, sample_in_ball, simulate,
    FrictionVehicle, NoiseMode, NoisePolicy, SimConfig,
};
use srcseek::statespace::{augment_with_filter, check_equilibrium_family, double_integrator, AugmentedPlant};
use srcseek::zf::{build_multiplier, build_variable_constraints, iqc_residual};

const TOL: f64 = DEFAULT_TOL;
/// Criterion 2: oracle slack.
const ORACLE_SLACK: f64 = 1e-6;
/// Criterion 3: allowed shortfall of the observed rate.
const RATE_SLACK: f64 = 0.01;
/// Criterion 5: eigenvalue tolerance.
const EIG_TOL: f64 = 1e-9;
/// Criterion 6: minimizer tolerance.
const MIN_TOL: f64 = 1e-6;
/// Criterion 7: residual defect allowed at the coarsest step, relative to
/// the signal energy; it must shrink in proportion to dt.
const IQC_REL_TOL: f64 = 1e-3;
/// Criterion 8: consensus tolerance.
const CONSENSUS_TOL: f64 = 1e-3;

struct Outcome {
    pass: bool,
    detail: String,
}

fn backend() -> ClarabelBackend {
    ClarabelBackend::default()
}

fn di(k_d: f64) -> AugmentedPlant {
    augment_with_filter(&double_integrator(1), 1.0, k_d).unwrap()
}

fn vehicle(k_d: f64) -> AugmentedPlant {
    FrictionVehicle::default().plant(1.0, k_d).unwrap()
}

fn certify(plant: &AugmentedPlant, nu: usize, l: f64, delta: f64) -> RateCertificate {
    bisect_alpha(plant, CertifyParams::new(nu, 1.0, l, delta, plant.d()), &BisectionConfig::default(), &backend())
        .unwrap()
}

fn feasible(status: SdpStatus) -> bool {
    status == SdpStatus::Feasible
}

/// Connected random graph: a random spanning tree plus extra edges.
fn connected_edges(n: usize, extra: f64, rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
    let mut edges: Vec<(usize, usize)> = (1..n).map(|i| (rng.gen_range(0..i), i)).collect();
    for e in random_edges(n, extra, rng) {
        if !edges.contains(&e) {
            edges.push(e);
        }
    }
    edges
}

fn random_informed(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let k = rng.gen_range(1..=n);
    let mut all: Vec<usize> = (0..n).collect();
    for i in 0..n {
        let j = rng.gen_range(i..n);
        all.swap(i, j);
    }
    let mut out = all[..k].to_vec();
    out.sort_unstable();
    out
}

fn random_vec(len: usize, half: f64, rng: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_fn(len, |_, _| rng.gen_range(-half..half))
}

fn random_field(d: usize, m_psi: f64, l_psi: f64, radial: bool, rng: &mut ChaCha8Rng) -> ScalarField {
    let center = random_vec(d, 3.0, rng);
    if radial {
        ScalarField::radial(center, rng.gen_range(0.5..2.0), m_psi, l_psi).unwrap()
    } else {
        ScalarField::quadratic_centered(random_spd(d, m_psi, l_psi, rng), center).unwrap()
    }
}

fn criterion_1() -> Outcome {
    let plant = di(9.0);
    let params = CertifyParams::new(1, 1.0, 10.0, 0.0, 1);
    let cfg = BisectionConfig::default();
    let single = certify(&plant, 1, 10.0, 0.0).alpha_star.unwrap_or(0.0);
    let mut pass = single > 0.0;
    let mut notes = Vec::new();
    for n in [2usize, 3] {
        let mut mismatches = 0;
        for k in 0..10 {
            let alpha = 2.0 * single * k as f64 / 9.0;
            let s = solve_feasibility(&assemble_single_agent_lmi(&plant, params, alpha).unwrap(), &backend()).status;
            let f = solve_feasibility(&assemble_full_lmi(&plant, n, params, alpha).unwrap(), &backend()).status;
            if feasible(s) != feasible(f) {
                mismatches += 1;
            }
        }
        let full = bisect(&cfg, |alpha| {
            let r = solve_feasibility(&assemble_full_lmi(&plant, n, params, alpha).unwrap(), &backend());
            ProbeResult { status: r.status, max_violation: r.max_violation, payload: None::<()> }
        })
        .alpha_star
        .unwrap_or(-1.0);
        let ok = mismatches == 0 && (full - single).abs() <= 2.0 * TOL;
        pass &= ok;
        notes.push(format!("N={n}: {mismatches} mismatches, alpha*_full={full:.6}"));
    }
    Outcome { pass, detail: format!("alpha*_single={single:.6}; {}", notes.join("; ")) }
}

/// Slowest decay rate of `[[0, 1], [−λ, −k_d]]` over `λ ∈ [1, 10]`.
fn oracle_rate(k_d: f64) -> f64 {
    (0..=10_000)
        .map(|i| {
            let lambda = 1.0 + 9.0 * i as f64 / 10_000.0;
            let disc = k_d * k_d - 4.0 * lambda;
            if disc >= 0.0 {
                (k_d - disc.sqrt()) / 2.0
            } else {
                k_d / 2.0
            }
        })
        .fold(f64::INFINITY, f64::min)
}

fn criterion_2(certs: &[(f64, RateCertificate)]) -> Outcome {
    let mut pass = true;
    let mut notes = Vec::new();
    for (k_d, cert) in certs {
        let oracle = oracle_rate(*k_d);
        let a = cert.alpha_or_sentinel();
        pass &= a > 0.0 && a <= oracle + ORACLE_SLACK;
        notes.push(format!("k_d={k_d}: alpha*={a:.6} oracle={oracle:.6} ratio={:.3}", a / oracle));
    }
    Outcome { pass, detail: notes.join("; ") }
}

struct SimCase {
    label: String,
    plant: AugmentedPlant,
    cert: RateCertificate,
    delta: f64,
}

fn criterion_3(cases: &[SimCase], scenarios: usize) -> Outcome {
    let mut failures = Vec::new();
    let mut worst = f64::INFINITY;
    let mut total = 0;
    for (ci, case) in cases.iter().enumerate() {
        let alpha_star = case.cert.alpha_star.expect("criterion 3 certificates are feasible");
        let x0 = &case.cert.payload.as_ref().expect("payload").x0;
        let eq = check_equilibrium_family(&case.plant);
        let t_end = (10.0 / alpha_star).max(40.0);
        let sim_cfg = SimConfig { t_end, dt: 0.01, sample_every: 10 };
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + ci as u64);
        for s in 0..scenarios {
            // Reject until the composite field is certified for S(1, 10).
            let graph = loop {
                let n = rng.gen_range(2..=4);
                let m_psi = rng.gen_range(1.0..4.0);
                let l_psi = rng.gen_range(m_psi..8.0);
                let field = random_field(1, m_psi, l_psi, rng.gen_bool(0.3), &mut rng);
                let r = if rng.gen_bool(0.5) { random_vec(n, 2.0, &mut rng) } else { DVector::zeros(n) };
                let g = FieldGraph::new(n, connected_edges(n, 0.5, &mut rng), random_informed(n, &mut rng), r, field)
                    .unwrap();
                if g.certify_sector(1.0, 10.0) {
                    break g;
                }
            };
            let y_star = graph.minimize_f().unwrap();
            let eta_star = equilibrium_state(&case.plant, &eq.witness, &y_star);
            let n_g = case.plant.n_states();
            let c = (0..graph.n())
                .map(|i| ball_radius(&case.plant, &eta_star.rows(i * n_g, n_g).into_owned()))
                .fold(f64::INFINITY, f64::min);
            let eta0 = if c.is_finite() {
                let radius = 0.9 * c / linalg::spd_condition(x0).sqrt();
                sample_in_ball(&eta_star, radius, &mut rng)
            } else {
                eta_star.map(|v| v + rng.gen_range(-2.0..2.0))
            };
            assert!(check_initial_ball(x0, c, &eta0, &eta_star), "initial state outside the certified ball");
            let mode = if s % 2 == 0 { NoiseMode::Opposing } else { NoiseMode::PiecewiseRandom };
            let noise = NoisePolicy { mode, delta: case.delta, period: 0.5, seed: s as u64 };
            let traj = simulate(&graph, &case.plant, &noise, &eta0, &sim_cfg, s as u64).unwrap();
            total += 1;
            match estimate_decay_rate(&traj, &y_star) {
                Ok(fit) => {
                    worst = worst.min(fit.alpha_hat - alpha_star);
                    if fit.alpha_hat < alpha_star - RATE_SLACK || traj.meta.left_parameter_set {
                        failures.push(format!("{} #{s}: alpha_hat={:.4}", case.label, fit.alpha_hat));
                    }
                }
                Err(e) => failures.push(format!("{} #{s}: {e}", case.label)),
            }
        }
    }
    let detail = format!(
        "{total} simulations over {} certificates, min(alpha_hat - alpha*)={worst:.4}{}",
        cases.len(),
        if failures.is_empty() { String::new() } else { format!("; failures: {}", failures.join(", ")) }
    );
    Outcome { pass: failures.is_empty(), detail }
}

fn criterion_4() -> Outcome {
    let k_ds = [3.0, 5.0, 7.0, 9.0, 12.0, 20.0, 30.0];
    let deltas = [0.0, 0.3, 0.5, 0.9];
    let table: Vec<Vec<f64>> = k_ds
        .iter()
        .map(|&k| deltas.iter().map(|&dl| certify(&vehicle(k), 1, 10.0, dl).alpha_or_sentinel()).collect())
        .collect();
    let delta_trend = table.iter().all(|row| row.windows(2).all(|w| w[1] <= w[0]));

    let mut l_trend = true;
    for k in [9.0, 20.0] {
        for dl in [0.0, 0.3] {
            let by_l: Vec<f64> =
                [10.0, 20.0, 40.0].iter().map(|&l| certify(&vehicle(k), 1, l, dl).alpha_or_sentinel()).collect();
            l_trend &= by_l.windows(2).all(|w| w[1] <= w[0]);
        }
    }

    let plant = vehicle(20.0);
    let thresholds: Vec<f64> = deltas
        .iter()
        .map(|&dl| {
            let t = stability_threshold(&plant, CertifyParams::new(1, 1.0, 10.0, dl, 1), TOL, (1.0, 400.0), 0.5, &backend())
                .unwrap();
            if t.saturated {
                f64::INFINITY
            } else {
                t.l_star.unwrap_or(0.0)
            }
        })
        .collect();
    let threshold_trend = thresholds.windows(2).all(|w| w[1] < w[0]) && thresholds.iter().all(|l| l.is_finite());

    let argmax: Vec<usize> = (0..deltas.len())
        .map(|j| {
            (0..k_ds.len())
                .max_by(|&a, &b| table[a][j].total_cmp(&table[b][j]))
                .unwrap()
        })
        .collect();
    let interior = argmax
        .iter()
        .enumerate()
        .all(|(j, &i)| i > 0 && i + 1 < k_ds.len() && table[i][j] > 0.0);
    let argmax_trend = interior && argmax.windows(2).all(|w| w[1] >= w[0]);

    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join("/");
    let detail = format!(
        "alpha(delta) {}, alpha(L) {}, L*={} {}, argmax k_d={} {}",
        if delta_trend { "non-increasing" } else { "VIOLATED" },
        if l_trend { "non-increasing" } else { "VIOLATED" },
        fmt(&thresholds),
        if threshold_trend { "decreasing" } else { "NOT decreasing" },
        argmax.iter().map(|&i| k_ds[i].to_string()).collect::<Vec<_>>().join("/"),
        if argmax_trend { "interior, non-decreasing" } else { "VIOLATED" },
    );
    Outcome { pass: delta_trend && l_trend && threshold_trend && argmax_trend, detail }
}

fn criterion_5() -> Outcome {
    let field = ScalarField::quadratic_centered(DMatrix::from_element(1, 1, 66.0), DVector::from_element(1, 250.0)).unwrap();
    let c10 = FieldGraph::new(10, cycle_edges(10), (0..10).collect(), DVector::zeros(10), field).unwrap();
    let (m, l) = c10.sector_bounds();
    let cycle_ok = (m - 66.0).abs() <= EIG_TOL && (l - 70.0).abs() <= EIG_TOL && c10.certify_sector(1.0, 70.0);

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut agree, mut reachable) = (0, 0);
    for _ in 0..50 {
        let n = rng.gen_range(3..=10);
        let edges = random_edges(n, rng.gen_range(0.05..0.4), &mut rng);
        let k = rng.gen_range(1..=2);
        let informed: Vec<usize> = random_informed(n, &mut rng).into_iter().take(k).collect();
        let psi = ScalarField::radial(DVector::zeros(1), 1.0, 1.0, 5.0).unwrap();
        let g = FieldGraph::new(n, edges, informed, DVector::zeros(n), psi).unwrap();
        let (l_s, _) = g.grounded_laplacians();
        let positive = linalg::lambda_min(&l_s) > EIG_TOL;
        let bfs = g.check_path_to_informed();
        reachable += bfs as usize;
        agree += (positive == bfs) as usize;
    }
    Outcome {
        pass: cycle_ok && agree == 50 && reachable > 0 && reachable < 50,
        detail: format!(
            "C10: lambda_min(L_s)={m:.12} lambda_max(L_b)={l:.12}; random graphs: {agree}/50 agree ({reachable} reachable)"
        ),
    }
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut failures = Vec::new();
    let mut worst: f64 = 0.0;
    for s in 0..100 {
        let kind = s % 4;
        let n = rng.gen_range(2..=6);
        let d = rng.gen_range(1..=2);
        let m_psi = rng.gen_range(1.0..3.0);
        let l_psi = rng.gen_range(m_psi..6.0);
        let field = random_field(d, m_psi, l_psi, kind == 3 || (kind == 0 && rng.gen_bool(0.5)), &mut rng);
        let y_opt = field.y_opt().unwrap().clone();
        let edges = connected_edges(n, 0.4, &mut rng);
        let informed = match kind {
            1 => vec![rng.gen_range(0..n)],
            2 | 3 => {
                let mut v = random_informed(n, &mut rng);
                if v.len() < 2 {
                    v = vec![0, n - 1];
                }
                v
            }
            _ => random_informed(n, &mut rng),
        };
        let r = if kind == 0 { DVector::zeros(n * d) } else { random_vec(n * d, 2.0, &mut rng) };
        let g = FieldGraph::new(n, edges, informed.clone(), r.clone(), field).unwrap();
        let z = g.minimize_f().unwrap();
        let agent = |i: usize| z.rows(i * d, d).into_owned();
        let (err, ok) = match kind {
            0 => {
                let e = (0..n).map(|i| (agent(i) - &y_opt).norm()).fold(0.0, f64::max);
                (e, e <= MIN_TOL)
            }
            1 => {
                let l = informed[0];
                let e = (0..n)
                    .map(|j| (agent(j) - (&y_opt + r.rows(j * d, d) - r.rows(l * d, d))).norm())
                    .fold(0.0, f64::max);
                (e, e <= MIN_TOL)
            }
            2 => {
                let com = informed.iter().fold(DVector::zeros(d), |acc, &i| acc + agent(i)) / informed.len() as f64;
                let e = (com - &y_opt).norm();
                (e, e <= MIN_TOL)
            }
            _ => {
                let report = g.check_minimizer_geometry(&z);
                (0.0, report.convex_hull == Check::Pass && report.all_pass())
            }
        };
        worst = worst.max(err);
        if !ok {
            failures.push(format!("#{s} kind {kind} err={err:e}"));
        }
    }
    Outcome {
        pass: failures.is_empty(),
        detail: format!(
            "100 scenarios (25 per lemma case), worst error {worst:.2e}{}",
            if failures.is_empty() { String::new() } else { format!("; failures: {}", failures.join(", ")) }
        ),
    }
}

/// Random feasible `(H, P₁, P₃)` for order `nu`, returned as the middle matrix.
fn random_feasible_p(nu: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let set = build_variable_constraints(nu).unwrap();
    loop {
        let (p1, p3): (Vec<f64>, Vec<f64>) = if nu == 1 {
            (vec![rng.gen_range(0.05..2.0)], vec![rng.gen_range(0.05..2.0)])
        } else {
            ((0..nu).map(|_| rng.gen_range(-1.0..2.0)).collect(), (0..nu).map(|_| rng.gen_range(-1.0..2.0)).collect())
        };
        let chain: f64 = p1.iter().chain(&p3).zip(set.chain_gain.iter().chain(&set.chain_gain)).map(|(p, g)| p * g).sum();
        let h = -chain + rng.gen_range(0.0..1.0);
        let ok = nu == 1 || set.find_storage(h, &p1, &p3, 1e-7, &backend()).is_some();
        if ok {
            return set.assemble_p(h, &p1, &p3);
        }
    }
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let horizon: f64 = 20.0;
    let steps: [f64; 3] = [0.02, 0.01, 0.005];
    let mut checked = 0;
    let mut failures = Vec::new();
    let mut worst_ratio: f64 = 0.0;
    for _ in 0..20 {
        let d = rng.gen_range(1..=2);
        let hessian = random_spd(d, 1.0, 10.0, &mut rng);
        let modes: Vec<(DVector<f64>, f64, f64, f64)> = (0..3)
            .map(|_| {
                (
                    random_vec(d, 1.0, &mut rng),
                    rng.gen_range(0.1..1.0),
                    rng.gen_range(0.0..3.0),
                    rng.gen_range(0.0..std::f64::consts::TAU),
                )
            })
            .collect();
        let signal = |t: f64| -> DVector<f64> {
            modes
                .iter()
                .fold(DVector::zeros(d), |acc, (a, s, w, p)| acc + a * ((-s * t).exp() * (w * t + p).cos()))
        };
        let samples: Vec<Vec<_>> = (0..5).map(|_| vec![random_feasible_p(1, &mut rng), random_feasible_p(2, &mut rng)]).collect();
        for ps in &samples {
            for (nu_idx, p) in ps.iter().enumerate() {
                let nu = nu_idx + 1;
                for alpha in [0.0, 0.05] {
                    let mult = build_multiplier(nu, alpha, 1.0, 10.0, d).unwrap();
                    let mut ok = true;
                    for &dt in &steps {
                        let n = (horizon / dt).round() as usize + 1;
                        let y: Vec<DVector<f64>> = (0..n).map(|k| signal(k as f64 * dt)).collect();
                        let u: Vec<DVector<f64>> = y.iter().map(|v| &hessian * v).collect();
                        let energy: f64 = y
                            .iter()
                            .zip(&u)
                            .enumerate()
                            .map(|(k, (a, b))| (2.0 * alpha * k as f64 * dt).exp() * (a.norm_squared() + b.norm_squared()) * dt)
                            .sum();
                        let scale = p.abs().max() * energy;
                        let residual = iqc_residual(&mult, p, &y, &u, dt).unwrap();
                        let tol = IQC_REL_TOL * scale * dt / steps[0];
                        worst_ratio = worst_ratio.max(-residual / tol);
                        ok &= residual >= -tol;
                    }
                    checked += 1;
                    if !ok {
                        failures.push(format!("nu={nu} alpha={alpha}"));
                    }
                }
            }
        }
    }
    Outcome {
        pass: failures.is_empty(),
        detail: format!(
            "{checked} (field, P, nu, alpha) combinations at dt={steps:?}, worst defect/tol={worst_ratio:.3}{}",
            if failures.is_empty() { String::new() } else { format!("; failures: {}", failures.join(", ")) }
        ),
    }
}

fn criterion_8() -> Outcome {
    let plant = vehicle(100.0);
    let field = ScalarField::quadratic_centered(DMatrix::from_element(1, 1, 66.0), DVector::from_element(1, 250.0)).unwrap();
    let graph = FieldGraph::new(10, cycle_edges(10), (0..10).collect(), DVector::zeros(10), field).unwrap();
    let y_star = DVector::from_element(10, 250.0);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut pass = true;
    let mut notes = Vec::new();
    for mode in [NoiseMode::Opposing, NoiseMode::PiecewiseRandom] {
        // Positions and filter states near the source, small velocities.
        let eta0 = DVector::from_fn(40, |i, _| match i % 4 {
            0 | 2 => 250.0 + rng.gen_range(-5.0..5.0),
            _ => rng.gen_range(-1.0..1.0),
        });
        let noise = NoisePolicy { mode, delta: 0.5, period: 0.5, seed: 8 };
        let cfg = SimConfig { t_end: 50.0, dt: 1e-3, sample_every: 100 };
        let traj = simulate(&graph, &plant, &noise, &eta0, &cfg, 0).unwrap();
        let last = traj.y.last().unwrap();
        let spread = (last - &y_star).amax();
        let converged = estimate_decay_rate(&traj, &y_star).is_ok() && !traj.meta.left_parameter_set;
        pass &= converged && spread <= CONSENSUS_TOL;
        notes.push(format!("{mode:?}: max|y_i(50) - 250|={spread:.2e}"));
    }
    Outcome { pass, detail: notes.join("; ") }
}

fn criterion_9() -> Outcome {
    let cfg = BisectionConfig::default();
    let threshold = 0.1404;
    let result = bisect(&cfg, |alpha| ProbeResult {
        status: if alpha <= threshold { SdpStatus::Feasible } else { SdpStatus::Infeasible },
        max_violation: 0.0,
        payload: None::<()>,
    });
    let a = result.alpha_star.unwrap_or(-1.0);
    let probes = result.trace.len();
    let budget = cfg.midpoint_count() + 1;
    Outcome {
        pass: a <= threshold && threshold - a <= TOL && probes <= budget && result.monotone,
        detail: format!("alpha*={a} ({} below threshold), {probes} probes (budget {budget})", threshold - a),
    }
}

fn main() {
    let start = Instant::now();
    let mut results: Vec<(usize, Outcome, f64)> = Vec::new();
    let mut run = |id: usize, f: &mut dyn FnMut() -> Outcome| {
        let t = Instant::now();
        let out = f();
        let secs = t.elapsed().as_secs_f64();
        println!("criterion {id}: {} — {} [{secs:.1}s]", if out.pass { "PASS" } else { "FAIL" }, out.detail);
        results.push((id, out, secs));
    };

    run(1, &mut criterion_1);
    let di_certs: Vec<(f64, RateCertificate)> = [5.0, 9.0, 20.0].iter().map(|&k| (k, certify(&di(k), 1, 10.0, 0.0))).collect();
    run(2, &mut || criterion_2(&di_certs));
    run(3, &mut || {
        let mut cases: Vec<SimCase> = di_certs
            .iter()
            .map(|(k, c)| SimCase { label: format!("double-integrator k_d={k}"), plant: di(*k), cert: c.clone(), delta: 0.0 })
            .collect();
        for delta in [0.0, 0.3, 0.5] {
            let plant = vehicle(12.0);
            let cert = certify(&plant, 1, 10.0, delta);
            cases.push(SimCase { label: format!("friction-vehicle delta={delta}"), plant, cert, delta });
        }
        criterion_3(&cases, 50)
    });
    run(4, &mut criterion_4);
    run(5, &mut criterion_5);
    run(6, &mut criterion_6);
    run(7, &mut criterion_7);
    run(8, &mut criterion_8);
    run(9, &mut criterion_9);

    let failed: Vec<usize> = results.iter().filter(|r| !r.1.pass).map(|r| r.0).collect();
    println!(
        "acceptance: {}/{} criteria passed in {:.1}s",
        results.len() - failed.len(),
        results.len(),
        start.elapsed().as_secs_f64()
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
