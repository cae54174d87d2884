//! Robust-performance LMIs, rate bisection and parameter sweeps.
//!
//! The plant channel takes `[u; e]` (gradient and multiplicative noise) and
//! emits `[ỹ; u]` into the Zames–Falb filter and `[e; u]` into the noise
//! quadratic `λ(δ²‖u‖² − ‖e‖²)`. One dissipation LMI is imposed per grid
//! point with a single storage matrix `𝒳₀`.

use std::io::Write;
use std::ops::Range;
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg;
use crate::sdp::{LmiConstraint, ScalarConstraint, SdpBackend, SdpReport, SdpRequest, SdpStatus, Sense};
use crate::statespace::{check_equilibrium_family, stack_agents, AugmentedPlant, ModelError, Realization};
use crate::zf::{build_multiplier, build_variable_constraints, ZfError, ZfMultiplier, ZfValues, ZfVarIndex, ZfVariableSet};

/// Default bisection tolerance, `2⁻¹³`.
pub const DEFAULT_TOL: f64 = 1.0 / 8192.0;
/// Strictness margin relative to the problem scale.
pub const MARGIN_RTOL: f64 = 1e-7;
/// Largest agent count accepted by [`assemble_full_lmi`].
pub const MAX_FULL_AGENTS: usize = 4;
/// Table value for "infeasible already at `α_lo`".
pub const INFEASIBLE_SENTINEL: f64 = -1.0;

#[derive(Debug, Error)]
pub enum CertifyError {
    #[error("plant has no common equilibrium family")]
    Equilibrium,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("{0} agents requested, at most {MAX_FULL_AGENTS} supported")]
    TooManyAgents(usize),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error(transparent)]
    Multiplier(#[from] ZfError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("certificate file: {0}")]
    Format(String),
}

/// Multiplier and noise data shared by every probe of a bisection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertifyParams {
    pub nu: usize,
    pub m: f64,
    pub l: f64,
    pub delta: f64,
    /// Spatial dimension the multiplier is built for; must match the plant.
    pub d: usize,
}

impl CertifyParams {
    pub fn new(nu: usize, m: f64, l: f64, delta: f64, d: usize) -> Self {
        Self { nu, m, l, delta, d }
    }
}

/// Positions of the decision variables in the flat vector.
#[derive(Debug, Clone)]
pub struct VarLayout {
    /// Entries of `𝒳₀` (or `𝒳`), ordered like [`linalg::sym_basis`].
    pub storage: Range<usize>,
    pub storage_dim: usize,
    pub zf: ZfVarIndex,
    pub lambda: usize,
    pub n_vars: usize,
}

#[derive(Debug, Clone)]
pub struct CertificationProblem {
    pub request: SdpRequest,
    pub layout: VarLayout,
    pub zf_set: ZfVariableSet,
    pub params: CertifyParams,
    pub alpha: f64,
    pub n_agents: usize,
    /// Number of plant states per agent.
    pub n_g: usize,
    /// Outer size of each dissipation block.
    pub block_dim: usize,
}

/// Decision-variable values of a feasible problem.
#[derive(Debug, Clone, PartialEq)]
pub struct CertificatePayload {
    pub x0: DMatrix<f64>,
    pub zf: ZfValues,
    pub lambda: f64,
}

impl CertificationProblem {
    pub fn payload(&self, x: &[f64]) -> CertificatePayload {
        CertificatePayload {
            x0: linalg::sym_from_values(self.layout.storage_dim, &x[self.layout.storage.clone()]),
            zf: self.zf_set.values(&self.layout.zf, x),
            lambda: x[self.layout.lambda],
        }
    }

    /// Flat decision vector for given variable values.
    pub fn variables(&self, storage: &DMatrix<f64>, zf: &ZfValues, lambda: f64) -> Vec<f64> {
        let l = &self.layout;
        let mut x = vec![0.0; l.n_vars];
        for (v, (i, j)) in l.storage.clone().zip(linalg::sym_basis(l.storage_dim)) {
            x[v] = storage[(i, j)];
        }
        x[l.zf.h] = zf.h;
        x[l.zf.p1.clone()].copy_from_slice(&zf.p1);
        x[l.zf.p3.clone()].copy_from_slice(&zf.p3);
        let k = self.params.nu - 1;
        for (v, (i, j)) in l.zf.x1.clone().zip(linalg::sym_basis(k)) {
            x[v] = zf.x1[(i, j)];
        }
        for (v, (i, j)) in l.zf.x3.clone().zip(linalg::sym_basis(k)) {
            x[v] = zf.x3[(i, j)];
        }
        x[l.lambda] = lambda;
        x
    }
}

/// Series interconnection of one plant realization with the multiplier.
struct Channel {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    /// `[𝒞₁ 𝒟₁]`
    g1: DMatrix<f64>,
    /// `[𝒞₂ 𝒟₂]`
    g2: DMatrix<f64>,
}

fn channel(r: &Realization, mult: &ZfMultiplier) -> Channel {
    let dd = mult.d;
    let n_g = r.n_x();
    let pi = &mult.realization;
    let n_pi = pi.n_x();
    let n = n_g + n_pi;
    let b_y = pi.b.columns(0, dd).into_owned();
    let b_u = pi.b.columns(dd, dd).into_owned();
    let d_y = pi.d.columns(0, dd).into_owned();
    let d_u = pi.d.columns(dd, dd).into_owned();

    let mut a = DMatrix::zeros(n, n);
    a.view_mut((0, 0), (n_g, n_g)).copy_from(&r.a);
    a.view_mut((n_g, 0), (n_pi, n_g)).copy_from(&(&b_y * &r.c));
    a.view_mut((n_g, n_g), (n_pi, n_pi)).copy_from(&pi.a);

    let mut b = DMatrix::zeros(n, 2 * dd);
    b.view_mut((0, 0), (n_g, dd)).copy_from(&r.b);
    b.view_mut((0, dd), (n_g, dd)).copy_from(&r.b);
    b.view_mut((n_g, 0), (n_pi, dd)).copy_from(&b_u);

    let n_z = pi.n_y();
    let mut g1 = DMatrix::zeros(n_z, n + 2 * dd);
    g1.view_mut((0, 0), (n_z, n_g)).copy_from(&(&d_y * &r.c));
    g1.view_mut((0, n_g), (n_z, n_pi)).copy_from(&pi.c);
    g1.view_mut((0, n), (n_z, dd)).copy_from(&d_u);

    let mut g2 = DMatrix::zeros(2 * dd, n + 2 * dd);
    g2.view_mut((0, n + dd), (dd, dd)).fill_with_identity();
    g2.view_mut((dd, n), (dd, dd)).fill_with_identity();
    Channel { a, b, g1, g2 }
}

fn assemble(
    realizations: &[Realization],
    params: CertifyParams,
    dd: usize,
    alpha: f64,
    n_agents: usize,
) -> Result<CertificationProblem, CertifyError> {
    if !(params.delta >= 0.0 && params.delta.is_finite()) {
        return Err(CertifyError::Argument(format!("noise level must be non-negative, got {}", params.delta)));
    }
    let mult = build_multiplier(params.nu, alpha, params.m, params.l, dd)?;
    let zf_set = build_variable_constraints(params.nu)?;
    let n_g = realizations[0].n_x();
    let n = n_g + mult.n_states();
    let block_dim = n + 2 * dd;

    let storage_len = n * (n + 1) / 2;
    let mut next = storage_len;
    let zf_idx = zf_set.allocate(&mut next);
    let lambda = next;
    let n_vars = next + 1;
    let layout = VarLayout { storage: 0..storage_len, storage_dim: n, zf: zf_idx.clone(), lambda, n_vars };

    let channels: Vec<Channel> = realizations.iter().map(|r| channel(r, &mult)).collect();
    let scale = channels
        .iter()
        .flat_map(|c| [&c.a, &c.b, &c.g1])
        .flat_map(|m| m.iter())
        .fold(1.0f64, |acc, v| acc.max(v.abs()));
    let margin = MARGIN_RTOL * scale;
    let mut request = SdpRequest::new(n_vars, margin);
    request.var_bound = Some(1.0);

    let basis = linalg::sym_basis(n);
    let eye_dd = DMatrix::<f64>::identity(dd, dd);
    let p_terms: Vec<(usize, DMatrix<f64>)> = zf_set
        .p_terms(&zf_idx)
        .into_iter()
        .map(|(v, p)| (v, linalg::kron(&p, &eye_dd)))
        .collect();
    let mut noise = DMatrix::zeros(2 * dd, 2 * dd);
    noise.view_mut((0, 0), (dd, dd)).copy_from(&(&eye_dd * -1.0));
    noise.view_mut((dd, dd), (dd, dd)).copy_from(&(&eye_dd * params.delta.powi(2)));

    for (k, ch) in channels.iter().enumerate() {
        let mut lmi = LmiConstraint::new(format!("dissipation[{k}]"), block_dim, Sense::NegDef);
        for (var, &(i, j)) in basis.iter().enumerate() {
            let e = linalg::sym_unit(n, i, j);
            let mut t = DMatrix::zeros(block_dim, block_dim);
            t.view_mut((0, 0), (n, n))
                .copy_from(&(ch.a.transpose() * &e + &e * &ch.a + &e * (2.0 * alpha)));
            let eb = &e * &ch.b;
            t.view_mut((0, n), (n, 2 * dd)).copy_from(&eb);
            t.view_mut((n, 0), (2 * dd, n)).copy_from(&eb.transpose());
            lmi.add_term(var, t);
        }
        for (var, p) in &p_terms {
            lmi.add_term(*var, ch.g1.transpose() * p * &ch.g1);
        }
        lmi.add_term(lambda, ch.g2.transpose() * &noise * &ch.g2);
        request.lmis.push(lmi);
    }

    let mut pos = LmiConstraint::new("storage", n, Sense::PosDef);
    for (var, &(i, j)) in basis.iter().enumerate() {
        pos.add_term(var, linalg::sym_unit(n, i, j));
    }
    request.lmis.push(pos);
    request.scalars.push(ScalarConstraint { label: "lambda".into(), constant: 0.0, terms: vec![(lambda, 1.0)] });
    let (l1, positivity) = zf_set.constraints(&zf_idx);
    request.scalars.push(l1);
    request.lmis.extend(positivity);

    Ok(CertificationProblem { request, layout, zf_set, params, alpha, n_agents, n_g, block_dim })
}

fn check_plant(plant: &AugmentedPlant, params: &CertifyParams, alpha: f64) -> Result<(), CertifyError> {
    if params.d != plant.d() {
        return Err(CertifyError::Dimension(format!(
            "multiplier built for d = {}, plant has d = {}",
            params.d,
            plant.d()
        )));
    }
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(CertifyError::Argument(format!("rate must be non-negative, got {alpha}")));
    }
    if !check_equilibrium_family(plant).holds {
        return Err(CertifyError::Equilibrium);
    }
    Ok(())
}

/// Decomposed single-agent LMI with storage `𝒳₀`.
pub fn assemble_single_agent_lmi(
    plant: &AugmentedPlant,
    params: CertifyParams,
    alpha: f64,
) -> Result<CertificationProblem, CertifyError> {
    check_plant(plant, &params, alpha)?;
    assemble(plant.aug.realizations(), params, plant.d(), alpha, 1)
}

/// Full `N`-agent LMI with an unstructured storage matrix, imposed for every
/// assignment of grid points to agents.
pub fn assemble_full_lmi(
    plant: &AugmentedPlant,
    n_agents: usize,
    params: CertifyParams,
    alpha: f64,
) -> Result<CertificationProblem, CertifyError> {
    if n_agents == 0 || n_agents > MAX_FULL_AGENTS {
        return Err(CertifyError::TooManyAgents(n_agents));
    }
    check_plant(plant, &params, alpha)?;
    let n_points = plant.aug.grid().len();
    let mut realizations = Vec::new();
    let mut assignment = vec![0usize; n_agents];
    loop {
        let stacked = stack_agents(plant, &assignment)?;
        realizations.push(stacked.realizations()[0].clone());
        // Odometer increment over all grid assignments.
        let mut k = 0;
        while k < n_agents {
            assignment[k] += 1;
            if assignment[k] < n_points {
                break;
            }
            assignment[k] = 0;
            k += 1;
        }
        if k == n_agents {
            break;
        }
    }
    assemble(&realizations, params, n_agents * plant.d(), alpha, n_agents)
}

/// Block-diagonal lift `I_N ⊗ 𝒳₀` written in the state ordering of the full
/// problem (agent-major plant states, then multiplier states whose spatial
/// index runs over all agents).
pub fn lift_storage(x0: &DMatrix<f64>, n_g: usize, d: usize, nu: usize, n_agents: usize) -> DMatrix<f64> {
    let local = n_g + 2 * nu * d;
    assert_eq!(x0.nrows(), local, "storage size does not match the layout");
    let nd = n_agents * d;
    let global = |agent: usize, i: usize| {
        if i < n_g {
            agent * n_g + i
        } else {
            let k = (i - n_g) / d;
            let c = (i - n_g) % d;
            n_agents * n_g + k * nd + agent * d + c
        }
    };
    let size = n_agents * local;
    let mut out = DMatrix::zeros(size, size);
    for agent in 0..n_agents {
        for i in 0..local {
            for j in 0..local {
                out[(global(agent, i), global(agent, j))] = x0[(i, j)];
            }
        }
    }
    out
}

pub fn solve_feasibility(problem: &CertificationProblem, backend: &dyn SdpBackend) -> SdpReport {
    backend.solve(&problem.request)
}

/// Bracket and resolution of a rate bisection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BisectionConfig {
    pub alpha_lo: f64,
    pub alpha_hi: f64,
    pub tol: f64,
}

impl Default for BisectionConfig {
    fn default() -> Self {
        Self { alpha_lo: 0.0, alpha_hi: 1.0, tol: DEFAULT_TOL }
    }
}

impl BisectionConfig {
    /// Number of midpoints probed after `α_lo`.
    pub fn midpoint_count(&self) -> usize {
        ((self.alpha_hi - self.alpha_lo) / self.tol).log2().ceil().max(0.0) as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub alpha: f64,
    pub status: String,
    pub max_violation: f64,
    pub solve_ms: f64,
}

impl Probe {
    pub fn feasible(&self) -> bool {
        self.status == SdpStatus::Feasible.as_str()
    }
}

/// Outcome of one probe: status, violation and an optional payload kept for
/// the best feasible point.
pub struct ProbeResult<T> {
    pub status: SdpStatus,
    pub max_violation: f64,
    pub payload: Option<T>,
}

#[derive(Debug, Clone)]
pub struct Bisection<T> {
    pub alpha_star: Option<f64>,
    pub trace: Vec<Probe>,
    pub monotone: bool,
    pub payload: Option<T>,
}

/// Generic rate bisection. Probes `α_lo` first, then the midpoints of the
/// current bracket; `α_hi` itself is never probed. Numerical failures count
/// as infeasible.
pub fn bisect<T>(cfg: &BisectionConfig, mut probe: impl FnMut(f64) -> ProbeResult<T>) -> Bisection<T> {
    let mut trace = Vec::new();
    let mut run = |alpha: f64, trace: &mut Vec<Probe>| {
        let start = Instant::now();
        let r = probe(alpha);
        trace.push(Probe {
            alpha,
            status: r.status.as_str().to_string(),
            max_violation: r.max_violation,
            solve_ms: start.elapsed().as_secs_f64() * 1e3,
        });
        r
    };
    let first = run(cfg.alpha_lo, &mut trace);
    if first.status != SdpStatus::Feasible {
        return Bisection { alpha_star: None, trace, monotone: true, payload: None };
    }
    let (mut lo, mut hi) = (cfg.alpha_lo, cfg.alpha_hi);
    let mut payload = first.payload;
    for _ in 0..cfg.midpoint_count() {
        let mid = 0.5 * (lo + hi);
        let r = run(mid, &mut trace);
        if r.status == SdpStatus::Feasible {
            lo = mid;
            payload = r.payload;
        } else {
            hi = mid;
        }
    }
    // Largest prefix of feasible probes, in increasing α.
    let mut sorted: Vec<&Probe> = trace.iter().collect();
    sorted.sort_by(|a, b| a.alpha.total_cmp(&b.alpha));
    let prefix = sorted.iter().take_while(|p| p.feasible()).count();
    let monotone = sorted[prefix..].iter().all(|p| !p.feasible());
    let best = sorted[prefix - 1].alpha;
    if best != lo {
        payload = None;
    }
    Bisection { alpha_star: Some(best), trace, monotone, payload }
}

/// Inputs a certificate was computed from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateInputs {
    pub k_p: f64,
    pub k_d: f64,
    pub m: f64,
    pub l: f64,
    pub delta: f64,
    pub nu: usize,
    pub d: usize,
    pub grid_id: String,
}

#[derive(Debug, Clone)]
pub struct RateCertificate {
    pub inputs: CertificateInputs,
    /// `None` when the LMI is infeasible already at `α_lo`.
    pub alpha_star: Option<f64>,
    pub bisection: BisectionConfig,
    pub margin: f64,
    pub payload: Option<CertificatePayload>,
    pub trace: Vec<Probe>,
    pub monotone: bool,
}

impl RateCertificate {
    /// `alpha_star`, or the sentinel `-1`.
    pub fn alpha_or_sentinel(&self) -> f64 {
        self.alpha_star.unwrap_or(INFEASIBLE_SENTINEL)
    }

    pub fn status(&self) -> &'static str {
        match self.alpha_star {
            Some(_) => "feasible",
            None => "infeasible",
        }
    }

    pub fn solve_ms(&self) -> f64 {
        self.trace.iter().map(|p| p.solve_ms).sum()
    }
}

/// Compact description of a parameter grid.
pub fn grid_id(plant: &AugmentedPlant) -> String {
    let g = plant.aug.grid();
    if g.dim() == 0 {
        return "lti".to_string();
    }
    let axes: Vec<String> = (0..g.dim())
        .map(|k| format!("[{},{}]x{}", g.lower()[k], g.upper()[k], g.axes()[k].len()))
        .collect();
    axes.join("*")
}

/// Largest certified rate for `plant` on the bisection lattice.
pub fn bisect_alpha(
    plant: &AugmentedPlant,
    params: CertifyParams,
    cfg: &BisectionConfig,
    backend: &dyn SdpBackend,
) -> Result<RateCertificate, CertifyError> {
    if !(cfg.alpha_hi > cfg.alpha_lo && cfg.alpha_lo >= 0.0 && cfg.tol > 0.0) {
        return Err(CertifyError::Argument(format!(
            "need 0 <= alpha_lo < alpha_hi and tol > 0, got {cfg:?}"
        )));
    }
    // Surface structural errors before any solve.
    let margin = assemble_single_agent_lmi(plant, params, cfg.alpha_lo)?.request.margin;
    let result = bisect(cfg, |alpha| match assemble(plant.aug.realizations(), params, plant.d(), alpha, 1) {
        Ok(problem) => {
            let report = solve_feasibility(&problem, backend);
            let payload = (report.status == SdpStatus::Feasible).then(|| problem.payload(&report.x));
            ProbeResult { status: report.status, max_violation: report.max_violation, payload }
        }
        Err(_) => ProbeResult { status: SdpStatus::NumericalFailure, max_violation: f64::INFINITY, payload: None },
    });
    Ok(RateCertificate {
        inputs: CertificateInputs {
            k_p: plant.k_p,
            k_d: plant.k_d,
            m: params.m,
            l: params.l,
            delta: params.delta,
            nu: params.nu,
            d: params.d,
            grid_id: grid_id(plant),
        },
        alpha_star: result.alpha_star,
        bisection: *cfg,
        margin,
        payload: result.payload,
        trace: result.trace,
        monotone: result.monotone,
    })
}

/// Re-evaluates the stored variables against a freshly assembled LMI at
/// `alpha` and returns the largest violation.
pub fn replay(cert: &RateCertificate, plant: &AugmentedPlant, alpha: f64) -> Result<f64, CertifyError> {
    let payload = cert
        .payload
        .as_ref()
        .ok_or_else(|| CertifyError::Argument("certificate carries no variables".into()))?;
    let i = &cert.inputs;
    let problem = assemble_single_agent_lmi(plant, CertifyParams::new(i.nu, i.m, i.l, i.delta, i.d), alpha)?;
    if payload.x0.nrows() != problem.layout.storage_dim {
        return Err(CertifyError::Dimension("stored storage matrix has the wrong size".into()));
    }
    let x = problem.variables(&payload.x0, &payload.zf, payload.lambda);
    Ok(problem.request.max_violation(&x))
}

/// Largest `L ≥ l_lo` (to within `tol`) for which the LMI is feasible at the
/// first positive lattice rate `probe_alpha`.
#[derive(Debug, Clone, PartialEq)]
pub struct Threshold {
    /// `None` when even `l_lo` is not certified.
    pub l_star: Option<f64>,
    /// True when `l_hi` itself was certified, so the threshold lies beyond.
    pub saturated: bool,
}

pub fn stability_threshold(
    plant: &AugmentedPlant,
    params: CertifyParams,
    probe_alpha: f64,
    l_range: (f64, f64),
    tol: f64,
    backend: &dyn SdpBackend,
) -> Result<Threshold, CertifyError> {
    let (l_lo, l_hi) = l_range;
    if !(l_lo >= params.m && l_hi > l_lo && tol > 0.0) {
        return Err(CertifyError::Argument(format!("bad threshold bracket [{l_lo}, {l_hi}]")));
    }
    let feasible = |l: f64| -> Result<bool, CertifyError> {
        let p = assemble_single_agent_lmi(plant, CertifyParams { l, ..params }, probe_alpha)?;
        Ok(solve_feasibility(&p, backend).status == SdpStatus::Feasible)
    };
    if !feasible(l_lo)? {
        return Ok(Threshold { l_star: None, saturated: false });
    }
    if feasible(l_hi)? {
        return Ok(Threshold { l_star: Some(l_hi), saturated: true });
    }
    let (mut lo, mut hi) = (l_lo, l_hi);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if feasible(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Threshold { l_star: Some(lo), saturated: false })
}

/// Grid of a rate sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub k_d: Vec<f64>,
    pub delta: Vec<f64>,
    pub l: Vec<f64>,
    pub m: f64,
    pub nu: usize,
    pub bisection: BisectionConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub k_d: f64,
    pub delta: f64,
    pub m: f64,
    pub l: f64,
    pub nu: usize,
    pub alpha_star: f64,
    pub status: String,
    pub solve_ms: f64,
    pub error: Option<String>,
}

/// Bisects every `(k_d, δ, L)` cell in parallel. Cell errors are recorded in
/// the row and never abort the sweep; rows come back sorted by `(k_d, δ, L)`.
pub fn sweep<G>(make_plant: G, spec: &SweepSpec, backend: &dyn SdpBackend) -> Vec<SweepRow>
where
    G: Fn(f64) -> Result<AugmentedPlant, ModelError> + Sync,
{
    let cells: Vec<(f64, f64, f64)> = spec
        .k_d
        .iter()
        .flat_map(|&k| spec.delta.iter().flat_map(move |&dl| spec.l.iter().map(move |&l| (k, dl, l))))
        .collect();
    let mut rows: Vec<SweepRow> = cells
        .par_iter()
        .map(|&(k_d, delta, l)| {
            let start = Instant::now();
            let outcome = make_plant(k_d).map_err(CertifyError::from).and_then(|plant| {
                let params = CertifyParams::new(spec.nu, spec.m, l, delta, plant.d());
                bisect_alpha(&plant, params, &spec.bisection, backend)
            });
            let solve_ms = start.elapsed().as_secs_f64() * 1e3;
            let (alpha_star, status, error) = match outcome {
                Ok(cert) => (cert.alpha_or_sentinel(), cert.status().to_string(), None),
                Err(e) => (INFEASIBLE_SENTINEL, "error".to_string(), Some(e.to_string())),
            };
            SweepRow { k_d, delta, m: spec.m, l, nu: spec.nu, alpha_star, status, solve_ms, error }
        })
        .collect();
    rows.sort_by(|a, b| {
        a.k_d
            .total_cmp(&b.k_d)
            .then(a.delta.total_cmp(&b.delta))
            .then(a.l.total_cmp(&b.l))
    });
    rows
}

/// Shortest decimal form of `v` rounded to 12 significant digits.
pub fn sig12(v: f64) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    let rounded: f64 = format!("{v:.11e}").parse().expect("formatted float parses");
    format!("{rounded}")
}

pub const SWEEP_HEADER: &str = "k_d,delta,m,L,nu,alpha_star,status,solve_ms";

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{SWEEP_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{:.3}",
            sig12(r.k_d),
            sig12(r.delta),
            sig12(r.m),
            sig12(r.l),
            r.nu,
            sig12(r.alpha_star),
            r.status,
            r.solve_ms
        )?;
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct CertificateFile {
    inputs: CertificateInputs,
    alpha_star: f64,
    status: String,
    margin: f64,
    monotone: bool,
    bisection: BisectionConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    payload: Option<PayloadFile>,
    #[serde(default)]
    trace: Vec<Probe>,
}

#[derive(Debug, Serialize, Deserialize)]
struct PayloadFile {
    x0: Vec<Vec<f64>>,
    h: f64,
    p1: Vec<f64>,
    p3: Vec<f64>,
    x1: Vec<Vec<f64>>,
    x3: Vec<Vec<f64>>,
    lambda: f64,
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn matrix_of(rows: &[Vec<f64>], name: &str) -> Result<DMatrix<f64>, CertifyError> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(CertifyError::Format(format!("{name} is not square")));
    }
    Ok(DMatrix::from_row_iterator(n, n, rows.iter().flatten().copied()))
}

impl RateCertificate {
    /// TOML certificate; floats round-trip exactly.
    pub fn to_toml(&self) -> String {
        let file = CertificateFile {
            inputs: self.inputs.clone(),
            alpha_star: self.alpha_or_sentinel(),
            status: self.status().to_string(),
            margin: self.margin,
            monotone: self.monotone,
            bisection: self.bisection,
            payload: self.payload.as_ref().map(|p| PayloadFile {
                x0: rows_of(&p.x0),
                h: p.zf.h,
                p1: p.zf.p1.clone(),
                p3: p.zf.p3.clone(),
                x1: rows_of(&p.zf.x1),
                x3: rows_of(&p.zf.x3),
                lambda: p.lambda,
            }),
            trace: self.trace.clone(),
        };
        toml::to_string(&file).expect("certificate serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self, CertifyError> {
        let f: CertificateFile = toml::from_str(text).map_err(|e| CertifyError::Format(e.to_string()))?;
        let alpha_star = match f.status.as_str() {
            "feasible" => Some(f.alpha_star),
            "infeasible" => None,
            other => return Err(CertifyError::Format(format!("unknown status {other:?}"))),
        };
        let payload = match f.payload {
            Some(p) => {
                let x0 = matrix_of(&p.x0, "x0")?;
                let zf = ZfValues {
                    h: p.h,
                    p1: p.p1,
                    p3: p.p3,
                    x1: matrix_of(&p.x1, "x1")?,
                    x3: matrix_of(&p.x3, "x3")?,
                };
                if zf.p1.len() != f.inputs.nu || zf.p3.len() != f.inputs.nu {
                    return Err(CertifyError::Format("multiplier coefficients do not match nu".into()));
                }
                Some(CertificatePayload { x0, zf, lambda: p.lambda })
            }
            None => None,
        };
        Ok(Self {
            inputs: f.inputs,
            alpha_star,
            bisection: f.bisection,
            margin: f.margin,
            payload,
            trace: f.trace,
            monotone: f.monotone,
        })
    }
}
