//! Fixed-step multi-agent simulation with bounded multiplicative gradient
//! noise, empirical decay-rate estimation and the friction-vehicle model.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::FieldGraph;
use crate::integrate::rk4_step;
use crate::linalg;
use crate::statespace::{
    augment_with_filter, AugmentedPlant, ModelError, ParamGrid, ParamStateSpace, Realization, Scheduling,
    DEFAULT_POINTS_PER_AXIS,
};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid setting: {0}")]
    Setting(String),
    #[error("trajectory did not converge (final error {final_error:e}, initial {initial_error:e})")]
    NotConverged { initial_error: f64, final_error: f64 },
    #[error("too few samples above the noise floor to fit a rate")]
    TooFewSamples,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Point mass with speed-proportional friction under the stand-in tracking
/// controller `u_F = m_v (k_x (q − x) + k_v (p − v))`. The closed loop is
/// affine in the scheduling parameter `ρ = |v|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrictionVehicle {
    pub m_v: f64,
    pub b_v: f64,
    pub k_x: f64,
    pub k_v: f64,
    pub rho_max: f64,
    pub grid_points: usize,
}

impl Default for FrictionVehicle {
    fn default() -> Self {
        Self { m_v: 1.0, b_v: 1.0, k_x: 4.0, k_v: 4.0, rho_max: 5.0, grid_points: DEFAULT_POINTS_PER_AXIS }
    }
}

impl FrictionVehicle {
    /// Closed-loop realization at scheduling value `rho`; states `[x, v]`,
    /// inputs `[q, p]`, output `x`.
    pub fn realization(&self, rho: f64) -> Realization {
        Realization::new(
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -self.k_x, -(self.b_v / self.m_v) * rho - self.k_v]),
            DMatrix::from_row_slice(2, 2, &[0.0, 0.0, self.k_x, self.k_v]),
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            DMatrix::zeros(1, 2),
        )
    }

    pub fn model(&self) -> Result<ParamStateSpace, ModelError> {
        for (name, v) in [("m_v", self.m_v), ("b_v", self.b_v), ("k_x", self.k_x), ("k_v", self.k_v), ("rho_max", self.rho_max)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ModelError::NonPositiveGain { name, value: v });
            }
        }
        let grid = ParamGrid::uniform(&[0.0], &[self.rho_max], self.grid_points)?;
        let realizations = grid.points().iter().map(|p| self.realization(p[0])).collect();
        ParamStateSpace::new(1, grid, realizations)?.with_scheduling(Scheduling { state_index: vec![1] })
    }

    pub fn plant(&self, k_p: f64, k_d: f64) -> Result<AugmentedPlant, ModelError> {
        augment_with_filter(&self.model()?, k_p, k_d)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseMode {
    None,
    Opposing,
    PiecewiseRandom,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoisePolicy {
    pub mode: NoiseMode,
    pub delta: f64,
    /// Hold time of each random direction.
    pub period: f64,
    pub seed: u64,
}

impl NoisePolicy {
    pub fn none() -> Self {
        Self { mode: NoiseMode::None, delta: 0.0, period: 1.0, seed: 0 }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(SimError::Setting(format!("noise level must be non-negative, got {}", self.delta)));
        }
        if !(self.period > 0.0 && self.period.is_finite()) {
            return Err(SimError::Setting(format!("noise period must be positive, got {}", self.period)));
        }
        Ok(())
    }
}

/// Noise `e` with `‖e‖ ≤ δ‖g‖` for gradient `g` at time `t`.
pub fn sample_noise(policy: &NoisePolicy, gradient: &DVector<f64>, t: f64) -> DVector<f64> {
    let n = gradient.len();
    if policy.delta == 0.0 {
        return DVector::zeros(n);
    }
    match policy.mode {
        NoiseMode::None => DVector::zeros(n),
        NoiseMode::Opposing => gradient * -policy.delta,
        NoiseMode::PiecewiseRandom => random_direction(policy.seed, (t / policy.period).floor() as u64, n)
            * (policy.delta * gradient.norm()),
    }
}

/// Uniform unit vector, fixed by `(seed, slot)`.
fn random_direction(seed: u64, slot: u64, n: usize) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(slot);
    loop {
        let v = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = v.norm();
        if norm > 1e-300 {
            return v / norm;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub t_end: f64,
    pub dt: f64,
    /// Record every `sample_every`-th step (the last step is always kept).
    pub sample_every: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self { t_end: 50.0, dt: 1e-3, sample_every: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub scenario_hash: u64,
    pub seed: u64,
    pub dt: f64,
    pub t_end: f64,
    pub n_agents: usize,
    pub d: usize,
    pub left_parameter_set: bool,
    pub failed: bool,
}

#[derive(Debug, Clone)]
pub struct SimTrajectory {
    pub t: Vec<f64>,
    /// Stacked agent states.
    pub eta: Vec<DVector<f64>>,
    pub y: Vec<DVector<f64>>,
    /// Gradient `∇f(y)`.
    pub u: Vec<DVector<f64>>,
    pub e: Vec<DVector<f64>>,
    /// Applied input `u + e`.
    pub u_n: Vec<DVector<f64>>,
    /// Scheduling values, concatenated over agents (empty for LTI plants).
    pub rho: Vec<Vec<f64>>,
    pub meta: TrajectoryMeta,
}

struct Evaluation {
    y: DVector<f64>,
    u: DVector<f64>,
    e: DVector<f64>,
    rho: Vec<f64>,
    deriv: DVector<f64>,
    inside: bool,
}

struct Stepper<'a> {
    graph: &'a FieldGraph,
    plant: &'a AugmentedPlant,
    noise: &'a NoisePolicy,
    n_agents: usize,
    n_g: usize,
    d: usize,
}

impl Stepper<'_> {
    fn evaluate(&self, t: f64, x: &DVector<f64>) -> Evaluation {
        let (n_g, d) = (self.n_g, self.d);
        let lti = self.plant.aug.is_lti();
        let mut reals = Vec::with_capacity(self.n_agents);
        let mut rho = Vec::new();
        let mut inside = true;
        let mut y = DVector::zeros(self.n_agents * d);
        for i in 0..self.n_agents {
            let eta = x.rows(i * n_g, n_g);
            let r = if lti {
                self.plant.aug.realizations()[0].clone()
            } else {
                let rho_i = self.plant.scheduling_of(eta.as_slice());
                let (r, ok) = self.plant.aug.realization_at(&rho_i);
                inside &= ok;
                rho.extend(rho_i);
                r
            };
            y.rows_mut(i * d, d).copy_from(&(&r.c * eta));
            reals.push(r);
        }
        let u = self.graph.grad_f(&y);
        let e = sample_noise(self.noise, &u, t);
        let u_n = &u + &e;
        let mut deriv = DVector::zeros(x.len());
        for (i, r) in reals.iter().enumerate() {
            let eta = x.rows(i * n_g, n_g);
            deriv
                .rows_mut(i * n_g, n_g)
                .copy_from(&(&r.a * eta + &r.b * u_n.rows(i * d, d)));
        }
        Evaluation { y, u, e, rho, deriv, inside }
    }
}

/// Integrates the closed loop `η̇ᵢ = A_G(ρᵢ)ηᵢ + B_G(ρᵢ)(uᵢ + eᵢ)`,
/// `u = ∇f(y)`, with classic RK4. Noise is re-evaluated at every stage.
pub fn simulate(
    graph: &FieldGraph,
    plant: &AugmentedPlant,
    noise: &NoisePolicy,
    eta0: &DVector<f64>,
    cfg: &SimConfig,
    scenario_hash: u64,
) -> Result<SimTrajectory, SimError> {
    noise.validate()?;
    if !(cfg.dt > 0.0 && cfg.t_end > 0.0 && cfg.sample_every > 0) {
        return Err(SimError::Setting("need dt > 0, t_end > 0 and sample_every > 0".into()));
    }
    if graph.d() != plant.d() {
        return Err(SimError::Dimension(format!("field has d = {}, plant d = {}", graph.d(), plant.d())));
    }
    let n_agents = graph.n();
    let n_g = plant.n_states();
    if eta0.len() != n_agents * n_g {
        return Err(SimError::Dimension(format!(
            "initial state has {} entries, expected {}",
            eta0.len(),
            n_agents * n_g
        )));
    }
    let stepper = Stepper { graph, plant, noise, n_agents, n_g, d: plant.d() };
    let steps = (cfg.t_end / cfg.dt).round().max(1.0) as usize;
    let mut traj = SimTrajectory {
        t: Vec::new(),
        eta: Vec::new(),
        y: Vec::new(),
        u: Vec::new(),
        e: Vec::new(),
        u_n: Vec::new(),
        rho: Vec::new(),
        meta: TrajectoryMeta {
            scenario_hash,
            seed: noise.seed,
            dt: cfg.dt,
            t_end: cfg.t_end,
            n_agents,
            d: plant.d(),
            left_parameter_set: false,
            failed: false,
        },
    };
    let record = |traj: &mut SimTrajectory, t: f64, x: &DVector<f64>, ev: Evaluation| {
        traj.t.push(t);
        traj.eta.push(x.clone());
        traj.u_n.push(&ev.u + &ev.e);
        traj.y.push(ev.y);
        traj.u.push(ev.u);
        traj.e.push(ev.e);
        traj.rho.push(ev.rho);
    };
    let mut x = eta0.clone();
    let ev = stepper.evaluate(0.0, &x);
    traj.meta.left_parameter_set |= !ev.inside;
    record(&mut traj, 0.0, &x, ev);
    for k in 1..=steps {
        let t0 = (k - 1) as f64 * cfg.dt;
        x = rk4_step(|t, s| stepper.evaluate(t, s).deriv, t0, &x, cfg.dt);
        let t = k as f64 * cfg.dt;
        if !x.iter().all(|v| v.is_finite()) {
            traj.meta.failed = true;
            break;
        }
        let ev = stepper.evaluate(t, &x);
        traj.meta.left_parameter_set |= !ev.inside;
        if k % cfg.sample_every == 0 || k == steps {
            record(&mut traj, t, &x, ev);
        }
    }
    Ok(traj)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    pub alpha_hat: f64,
    pub r_squared: f64,
    pub samples: usize,
}

/// Errors below this fraction of the largest error are treated as the
/// numerical floor (set by the accuracy of `y*` and the integrator).
pub const RATE_FLOOR_REL: f64 = 1e-6;

/// Least-squares slope of `log‖y(t) − y*‖` on `[0.1T, 0.8T]`, truncated where
/// the error first reaches the numerical floor. If fewer than five samples
/// remain, the whole segment before the floor is used instead.
pub fn estimate_decay_rate(traj: &SimTrajectory, y_star: &DVector<f64>) -> Result<DecayFit, SimError> {
    let errors: Vec<f64> = traj.y.iter().map(|y| (y - y_star).norm()).collect();
    let (Some(&first), Some(&last)) = (errors.first(), errors.last()) else {
        return Err(SimError::TooFewSamples);
    };
    if traj.meta.failed || !(last < 1e-3 * first) {
        return Err(SimError::NotConverged { initial_error: first, final_error: last });
    }
    let t_end = *traj.t.last().expect("non-empty trajectory");
    let floor = (RATE_FLOOR_REL * errors.iter().copied().fold(0.0, f64::max)).max(1e-12);
    let cutoff = errors.iter().position(|&e| e <= floor).unwrap_or(errors.len());
    let (lo, hi) = (0.1 * t_end, 0.8 * t_end);
    let select = |lo: f64, hi: f64| -> Vec<(f64, f64)> {
        traj.t[..cutoff]
            .iter()
            .zip(&errors[..cutoff])
            .filter(|(&t, _)| t >= lo && t <= hi)
            .map(|(&t, &e)| (t, e.ln()))
            .collect()
    };
    let mut pts = select(lo, hi);
    if pts.len() < 5 {
        pts = select(0.0, t_end);
    }
    if pts.len() < 3 {
        return Err(SimError::TooFewSamples);
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ml = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let stt: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let stl: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - ml)).sum();
    let slope = stl / stt;
    let sse: f64 = pts.iter().map(|p| (p.1 - ml - slope * (p.0 - mt)).powi(2)).sum();
    let sst: f64 = pts.iter().map(|p| (p.1 - ml).powi(2)).sum();
    let r_squared = if sst > 0.0 { 1.0 - sse / sst } else { 1.0 };
    Ok(DecayFit { alpha_hat: -slope, r_squared, samples: pts.len() })
}

/// Radius `c` of the largest ball around `eta_star` (one agent) whose
/// scheduling values stay inside the parameter box; infinite for LTI plants.
pub fn ball_radius(plant: &AugmentedPlant, eta_star: &DVector<f64>) -> f64 {
    let Some(s) = plant.aug.scheduling() else {
        return f64::INFINITY;
    };
    let grid = plant.aug.grid();
    s.state_index
        .iter()
        .enumerate()
        .map(|(k, &i)| {
            // ρ = |v| ranges over [max(0, |v*| − c), |v*| + c] on the ball.
            let v = eta_star[i].abs();
            let (lo, hi) = (grid.lower()[k], grid.upper()[k]);
            let up = hi - v;
            if lo <= 0.0 { up } else { up.min(v - lo) }
        })
        .fold(f64::INFINITY, f64::min)
}

/// `‖η₀ − η*‖ < c / √cond(𝒳₀)`; `I_N ⊗ 𝒳₀` has the same condition number.
pub fn check_initial_ball(x0: &DMatrix<f64>, c: f64, eta0: &DVector<f64>, eta_star: &DVector<f64>) -> bool {
    let cond = linalg::spd_condition(x0);
    let dist = (eta0 - eta_star).norm();
    if c.is_infinite() {
        return cond.is_finite();
    }
    dist < c / cond.sqrt()
}

/// Uniform sample from the open ball of radius `radius` around `center`.
pub fn sample_in_ball<R: Rng>(center: &DVector<f64>, radius: f64, rng: &mut R) -> DVector<f64> {
    let n = center.len();
    let dir = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let norm = dir.norm();
    if n == 0 || norm == 0.0 {
        return center.clone();
    }
    let scale: f64 = rng.gen_range(0.0..1.0f64).powf(1.0 / n as f64);
    center + dir * (radius * scale / norm)
}

/// Stacked equilibrium state placing every agent's output at `y_star`.
pub fn equilibrium_state(plant: &AugmentedPlant, witness: &DMatrix<f64>, y_star: &DVector<f64>) -> DVector<f64> {
    let d = plant.d();
    let n = y_star.len() / d;
    let n_g = plant.n_states();
    let mut out = DVector::zeros(n * n_g);
    for i in 0..n {
        out.rows_mut(i * n_g, n_g).copy_from(&(witness * y_star.rows(i * d, d)));
    }
    out
}

/// 64-bit FNV-1a, used to tag trajectories with their scenario.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

impl SimTrajectory {
    /// Columns `t, agent, state..., y..., u..., e_norm, grad_norm, rho...`,
    /// where `u` is the applied input and the norms are network-wide.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let n = self.meta.n_agents;
        let d = self.meta.d;
        let n_g = self.eta.first().map_or(0, |e| e.len() / n.max(1));
        let n_rho = self.rho.first().map_or(0, |r| r.len() / n.max(1));
        let mut header = vec!["t".to_string(), "agent".to_string()];
        header.extend((0..n_g).map(|k| format!("state_{k}")));
        header.extend((0..d).map(|k| format!("y_{k}")));
        header.extend((0..d).map(|k| format!("u_{k}")));
        header.push("e_norm".into());
        header.push("grad_norm".into());
        header.extend((0..n_rho).map(|k| format!("rho_{k}")));
        writeln!(out, "{}", header.join(","))?;
        for s in 0..self.t.len() {
            let e_norm = self.e[s].norm();
            let g_norm = self.u[s].norm();
            for i in 0..n {
                let mut row = vec![self.t[s].to_string(), i.to_string()];
                row.extend(self.eta[s].rows(i * n_g, n_g).iter().map(|v| v.to_string()));
                row.extend(self.y[s].rows(i * d, d).iter().map(|v| v.to_string()));
                row.extend(self.u_n[s].rows(i * d, d).iter().map(|v| v.to_string()));
                row.push(e_norm.to_string());
                row.push(g_norm.to_string());
                row.extend(self.rho[s][i * n_rho..(i + 1) * n_rho].iter().map(|v| v.to_string()));
                writeln!(out, "{}", row.join(","))?;
            }
        }
        Ok(())
    }

    pub fn meta_toml(&self) -> String {
        toml::to_string(&self.meta).expect("metadata serializes")
    }
}
