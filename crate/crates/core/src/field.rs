//! Scalar fields, interaction graphs and the composite objective
//! `f(y) = ½ (y − r)ᵀ (ℒ ⊗ I_d)(y − r) + Σ_{i informed} ψ(yᵢ)`.

use std::collections::VecDeque;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg;

pub const GD_MAX_ITER: usize = 1_000_000;
pub const GD_RTOL: f64 = 1e-11;
/// Distance tolerance of the convex-hull test.
pub const HULL_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("invalid field: {0}")]
    Field(String),
    #[error("invalid graph: {0}")]
    Graph(String),
    #[error("some agents have no path to an informed agent")]
    Unreachable,
    #[error("gradient descent stopped after {iterations} iterations with ‖∇f‖ = {grad_norm:e}")]
    NoConvergence { iterations: usize, grad_norm: f64 },
    #[error("scenario file: {0}")]
    Format(String),
}

pub type GradFn = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
pub type ValueFn = Arc<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum FieldKind {
    /// `ψ(y) = yᵀQy + bᵀy + c`
    Quadratic { q: DMatrix<f64>, b: DVector<f64>, c: f64 },
    /// `ψ(y) = φ(‖y − center‖)` with the pseudo-Huber profile
    /// `φ'(s) = (m + (L − m)/√(1 + s²/w²))·s`.
    Radial { center: DVector<f64>, width: f64 },
    /// Gradient callback; the value callback is optional and only used for
    /// line searches.
    Custom { grad: GradFn, value: Option<ValueFn> },
}

impl fmt::Debug for FieldKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Quadratic { q, b, c } => f.debug_struct("Quadratic").field("q", q).field("b", b).field("c", c).finish(),
            Self::Radial { center, width } => {
                f.debug_struct("Radial").field("center", center).field("width", width).finish()
            }
            Self::Custom { .. } => f.write_str("Custom"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScalarField {
    d: usize,
    kind: FieldKind,
    m: f64,
    l: f64,
    y_opt: Option<DVector<f64>>,
}

fn check_sector(m: f64, l: f64) -> Result<(), FieldError> {
    if !(m > 0.0 && m <= l && l.is_finite()) {
        return Err(FieldError::Field(format!("need 0 < m <= L, got m = {m}, L = {l}")));
    }
    Ok(())
}

impl ScalarField {
    /// Quadratic field; the sector is read off the spectrum of `2Q`.
    pub fn quadratic(q: DMatrix<f64>, b: DVector<f64>, c: f64) -> Result<Self, FieldError> {
        let d = q.nrows();
        if d == 0 || q.ncols() != d || b.len() != d {
            return Err(FieldError::Field("quadratic field needs square Q and matching b".into()));
        }
        if (&q - q.transpose()).norm() > 1e-12 * (1.0 + q.norm()) {
            return Err(FieldError::Field("Q must be symmetric".into()));
        }
        let q = linalg::symmetrize(&q);
        let two_q = &q * 2.0;
        let ev = linalg::sym_eigenvalues(&two_q);
        let (m, l) = (ev[0], ev[d - 1]);
        check_sector(m, l)?;
        let y_opt = two_q
            .clone()
            .cholesky()
            .ok_or_else(|| FieldError::Field("2Q is not positive definite".into()))?
            .solve(&(-&b));
        Ok(Self { d, kind: FieldKind::Quadratic { q, b, c }, m, l, y_opt: Some(y_opt) })
    }

    /// `ψ(y) = ½ (y − y_opt)ᵀ H (y − y_opt)`.
    pub fn quadratic_centered(hessian: DMatrix<f64>, y_opt: DVector<f64>) -> Result<Self, FieldError> {
        if hessian.nrows() != y_opt.len() {
            return Err(FieldError::Field("hessian and center sizes differ".into()));
        }
        let b = -(&hessian * &y_opt);
        let c = 0.5 * y_opt.dot(&(&hessian * &y_opt));
        let mut field = Self::quadratic(&hessian * 0.5, b, c)?;
        field.y_opt = Some(y_opt);
        Ok(field)
    }

    pub fn radial(center: DVector<f64>, width: f64, m: f64, l: f64) -> Result<Self, FieldError> {
        check_sector(m, l)?;
        if center.is_empty() || !(width > 0.0 && width.is_finite()) {
            return Err(FieldError::Field("radial field needs a centre and positive width".into()));
        }
        Ok(Self { d: center.len(), kind: FieldKind::Radial { center: center.clone(), width }, m, l, y_opt: Some(center) })
    }

    pub fn custom(d: usize, grad: GradFn, value: Option<ValueFn>, m: f64, l: f64, y_opt: Option<DVector<f64>>) -> Result<Self, FieldError> {
        check_sector(m, l)?;
        if d == 0 || y_opt.as_ref().is_some_and(|y| y.len() != d) {
            return Err(FieldError::Field("custom field dimension mismatch".into()));
        }
        Ok(Self { d, kind: FieldKind::Custom { grad, value }, m, l, y_opt })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn kind(&self) -> &FieldKind {
        &self.kind
    }

    /// Declared sector `(m_ψ, L_ψ)`.
    pub fn sector(&self) -> (f64, f64) {
        (self.m, self.l)
    }

    pub fn y_opt(&self) -> Option<&DVector<f64>> {
        self.y_opt.as_ref()
    }

    pub fn grad(&self, y: &DVector<f64>) -> DVector<f64> {
        match &self.kind {
            FieldKind::Quadratic { q, .. } => {
                let y_opt = self.y_opt.as_ref().expect("quadratic fields know their minimizer");
                q * (y - y_opt) * 2.0
            }
            FieldKind::Radial { center, width } => {
                let dy = y - center;
                let s2 = dy.norm_squared();
                dy * (self.m + (self.l - self.m) / (1.0 + s2 / width.powi(2)).sqrt())
            }
            FieldKind::Custom { grad, .. } => grad(y),
        }
    }

    pub fn value(&self, y: &DVector<f64>) -> Option<f64> {
        match &self.kind {
            FieldKind::Quadratic { q, b, c } => {
                // Centred form keeps values accurate near the optimum.
                let y_opt = self.y_opt.as_ref().expect("quadratic fields know their minimizer");
                let z = y - y_opt;
                Some(z.dot(&(q * &z)) + c + 0.5 * b.dot(y_opt))
            }
            FieldKind::Radial { center, width } => {
                let s2 = (y - center).norm_squared();
                let w2 = width.powi(2);
                Some(0.5 * self.m * s2 + (self.l - self.m) * w2 * ((1.0 + s2 / w2).sqrt() - 1.0))
            }
            FieldKind::Custom { value, .. } => value.as_ref().map(|v| v(y)),
        }
    }

    /// Secant test `m‖Δ‖² ≤ (∇ψ(y₁) − ∇ψ(y₂))ᵀΔ ≤ L‖Δ‖²` on `samples` random
    /// pairs drawn from a box of half-width `spread` around the optimum.
    pub fn sampled_sector_check<R: Rng>(&self, samples: usize, spread: f64, rng: &mut R) -> bool {
        let center = self.y_opt.clone().unwrap_or_else(|| DVector::zeros(self.d));
        let tol = 1e-9;
        (0..samples).all(|_| {
            let y1 = &center + DVector::from_fn(self.d, |_, _| rng.gen_range(-spread..spread));
            let y2 = &center + DVector::from_fn(self.d, |_, _| rng.gen_range(-spread..spread));
            let dy = &y1 - &y2;
            let n2 = dy.norm_squared();
            let s = (self.grad(&y1) - self.grad(&y2)).dot(&dy);
            s >= self.m * n2 * (1.0 - tol) - tol && s <= self.l * n2 * (1.0 + tol) + tol
        })
    }
}

/// Undirected interaction graph with informed agents and formation offsets.
#[derive(Debug, Clone)]
pub struct FieldGraph {
    n: usize,
    edges: Vec<(usize, usize)>,
    informed: Vec<usize>,
    r: DVector<f64>,
    field: ScalarField,
}

impl FieldGraph {
    pub fn new(
        n: usize,
        edges: Vec<(usize, usize)>,
        informed: Vec<usize>,
        r: DVector<f64>,
        field: ScalarField,
    ) -> Result<Self, FieldError> {
        if n == 0 {
            return Err(FieldError::Graph("no agents".into()));
        }
        let mut norm_edges = Vec::with_capacity(edges.len());
        for (i, j) in edges {
            if i >= n || j >= n {
                return Err(FieldError::Graph(format!("edge ({i}, {j}) out of range")));
            }
            if i == j {
                return Err(FieldError::Graph(format!("self-loop at {i}")));
            }
            norm_edges.push((i.min(j), i.max(j)));
        }
        norm_edges.sort_unstable();
        norm_edges.dedup();
        let mut informed = informed;
        informed.sort_unstable();
        informed.dedup();
        if informed.is_empty() {
            return Err(FieldError::Graph("informed set is empty".into()));
        }
        if let Some(&i) = informed.iter().find(|&&i| i >= n) {
            return Err(FieldError::Graph(format!("informed agent {i} out of range")));
        }
        if r.len() != n * field.d() {
            return Err(FieldError::Graph(format!("r has {} entries, expected {}", r.len(), n * field.d())));
        }
        Ok(Self { n, edges: norm_edges, informed, r, field })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.field.d()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn informed(&self) -> &[usize] {
        &self.informed
    }

    pub fn is_informed(&self, i: usize) -> bool {
        self.informed.binary_search(&i).is_ok()
    }

    pub fn r(&self) -> &DVector<f64> {
        &self.r
    }

    pub fn field(&self) -> &ScalarField {
        &self.field
    }

    pub fn laplacian(&self) -> DMatrix<f64> {
        let mut lap = DMatrix::zeros(self.n, self.n);
        for &(i, j) in &self.edges {
            lap[(i, i)] += 1.0;
            lap[(j, j)] += 1.0;
            lap[(i, j)] -= 1.0;
            lap[(j, i)] -= 1.0;
        }
        lap
    }

    /// `(ℒ + m_ψE, ℒ + L_ψE)` with `E` the informed indicator.
    pub fn grounded_laplacians(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let lap = self.laplacian();
        let (m, l) = self.field.sector();
        let (mut ls, mut lb) = (lap.clone(), lap);
        for &i in &self.informed {
            ls[(i, i)] += m;
            lb[(i, i)] += l;
        }
        (ls, lb)
    }

    /// Extreme eigenvalues `(λ_min(ℒ_s), λ_max(ℒ_b))`.
    pub fn sector_bounds(&self) -> (f64, f64) {
        let (ls, lb) = self.grounded_laplacians();
        (linalg::lambda_min(&ls), linalg::lambda_max(&lb))
    }

    /// True iff `mI ⪯ ℒ_s` and `ℒ_b ⪯ LI`, which places `f` in `𝒮(m, L)`.
    pub fn certify_sector(&self, m: f64, l: f64) -> bool {
        let (lo, hi) = self.sector_bounds();
        let tol = 1e-9 * hi.abs().max(1.0);
        lo > 0.0 && lo >= m - tol && hi <= l + tol
    }

    /// Breadth-first search from the informed set.
    pub fn check_path_to_informed(&self) -> bool {
        let mut adj = vec![Vec::new(); self.n];
        for &(i, j) in &self.edges {
            adj[i].push(j);
            adj[j].push(i);
        }
        let mut seen = vec![false; self.n];
        let mut queue: VecDeque<usize> = self.informed.iter().copied().collect();
        for &i in &self.informed {
            seen[i] = true;
        }
        while let Some(i) = queue.pop_front() {
            for &j in &adj[i] {
                if !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        seen.iter().all(|&s| s)
    }

    fn agent(&self, y: &DVector<f64>, i: usize) -> DVector<f64> {
        y.rows(i * self.d(), self.d()).into_owned()
    }

    fn laplacian_term(&self, y: &DVector<f64>) -> DVector<f64> {
        let d = self.d();
        let z = y - &self.r;
        let mut out = DVector::zeros(self.n * d);
        for &(i, j) in &self.edges {
            let diff = z.rows(i * d, d) - z.rows(j * d, d);
            let mut oi = out.rows_mut(i * d, d);
            oi += &diff;
            let mut oj = out.rows_mut(j * d, d);
            oj -= &diff;
        }
        out
    }

    /// Objective value, when the field provides values.
    pub fn f_value(&self, y: &DVector<f64>) -> Option<f64> {
        let z = y - &self.r;
        let mut total = 0.5 * z.dot(&self.laplacian_term(y));
        for &i in &self.informed {
            total += self.field.value(&self.agent(y, i))?;
        }
        Some(total)
    }

    pub fn grad_f(&self, y: &DVector<f64>) -> DVector<f64> {
        let d = self.d();
        let mut g = self.laplacian_term(y);
        for &i in &self.informed {
            let gi = self.field.grad(&self.agent(y, i));
            let mut slot = g.rows_mut(i * d, d);
            slot += gi;
        }
        g
    }

    /// Gradient descent with Armijo backtracking from `y = r`.
    pub fn minimize_f(&self) -> Result<DVector<f64>, FieldError> {
        if !self.check_path_to_informed() {
            return Err(FieldError::Unreachable);
        }
        let (_, l_f) = self.sector_bounds();
        let step0 = 1.0 / l_f;
        let mut y = self.r.clone();
        let mut g = self.grad_f(&y);
        let tol = GD_RTOL * (1.0 + g.norm());
        let mut fy = self.f_value(&y);
        for _ in 0..GD_MAX_ITER {
            let gn2 = g.norm_squared();
            if gn2.sqrt() <= tol {
                return Ok(y);
            }
            let mut step = step0;
            let mut next = None;
            for _ in 0..40 {
                let cand = &y - &g * step;
                let fc = self.f_value(&cand);
                let accept = match (fy, fc) {
                    (Some(f0), Some(fc)) => {
                        // Below rounding level the test is meaningless and
                        // 1/L_f is a descent step for f ∈ 𝒮(m, L_f) anyway.
                        let resolvable = 0.5 * step * gn2 > 1e-12 * (1.0 + f0.abs());
                        !resolvable || fc <= f0 - 0.5 * step * gn2
                    }
                    _ => true,
                };
                if accept {
                    next = Some((cand, fc));
                    break;
                }
                step *= 0.5;
            }
            let next = next.unwrap_or_else(|| {
                let cand = &y - &g * step;
                let fc = self.f_value(&cand);
                (cand, fc)
            });
            y = next.0;
            fy = next.1;
            g = self.grad_f(&y);
        }
        Err(FieldError::NoConvergence { iterations: GD_MAX_ITER, grad_norm: g.norm() })
    }

    /// Checks the structural properties of a minimizer `y_star`.
    pub fn check_minimizer_geometry(&self, y_star: &DVector<f64>) -> GeometryReport {
        let z: Vec<DVector<f64>> = self.informed.iter().map(|&i| self.agent(y_star, i)).collect();
        let grads: Vec<DVector<f64>> = z.iter().map(|zi| self.field.grad(zi)).collect();
        let scale = 1.0 + grads.iter().map(|g| g.norm()).fold(0.0, f64::max);
        let sum: DVector<f64> = grads.iter().fold(DVector::zeros(self.d()), |acc, g| acc + g);
        let gradient_balance = Check::from(sum.norm() <= 1e-6 * scale);

        let Some(y_opt) = self.field.y_opt() else {
            return GeometryReport {
                gradient_balance,
                halfspace: Check::NotApplicable,
                center_of_mass: Check::NotApplicable,
                convex_hull: Check::NotApplicable,
            };
        };
        let halfspace = Check::from(
            z.iter()
                .zip(&grads)
                .all(|(zi, gi)| gi.dot(&(zi - y_opt)) >= -1e-9 * scale * (1.0 + (zi - y_opt).norm())),
        );
        let center_of_mass = match self.field.kind() {
            FieldKind::Quadratic { .. } => {
                let mean = z.iter().fold(DVector::zeros(self.d()), |acc, zi| acc + zi) / z.len() as f64;
                Check::from((mean - y_opt).norm() <= 1e-6)
            }
            _ => Check::NotApplicable,
        };
        let convex_hull = match self.field.kind() {
            FieldKind::Radial { .. } => match self.d() {
                1 | 2 => Check::from(hull_distance(&z, y_opt) <= HULL_TOL),
                _ => Check::Unchecked,
            },
            _ => Check::NotApplicable,
        };
        GeometryReport { gradient_balance, halfspace, center_of_mass, convex_hull }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Check {
    Pass,
    Fail,
    Unchecked,
    NotApplicable,
}

impl From<bool> for Check {
    fn from(ok: bool) -> Self {
        if ok {
            Check::Pass
        } else {
            Check::Fail
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GeometryReport {
    /// Informed gradients sum to zero.
    pub gradient_balance: Check,
    /// `∇ψ(zᵢ)ᵀ(zᵢ − y_opt) ≥ 0` for every informed `i`.
    pub halfspace: Check,
    /// Quadratic fields: mean informed position equals `y_opt`.
    pub center_of_mass: Check,
    /// Radial fields, `d ≤ 2`: `y_opt` lies in the hull of informed positions.
    pub convex_hull: Check,
}

impl GeometryReport {
    pub fn all_pass(&self) -> bool {
        [self.gradient_balance, self.halfspace, self.center_of_mass, self.convex_hull]
            .iter()
            .all(|c| *c != Check::Fail)
    }
}

fn cross(o: &[f64; 2], a: &[f64; 2], b: &[f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn segment_distance(a: &[f64; 2], b: &[f64; 2], q: &[f64; 2]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((q[0] - a[0]) * ab[0] + (q[1] - a[1]) * ab[1]) / len2).clamp(0.0, 1.0)
    };
    ((a[0] + t * ab[0] - q[0]).powi(2) + (a[1] + t * ab[1] - q[1]).powi(2)).sqrt()
}

/// Euclidean distance from `q` to the convex hull of `points` (zero inside);
/// defined for `d ∈ {1, 2}`.
pub fn hull_distance(points: &[DVector<f64>], q: &DVector<f64>) -> f64 {
    assert!(!points.is_empty(), "hull of an empty set");
    if q.len() == 1 {
        let lo = points.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
        let hi = points.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
        return (lo - q[0]).max(q[0] - hi).max(0.0);
    }
    assert_eq!(q.len(), 2, "hull test needs d <= 2");
    let mut pts: Vec<[f64; 2]> = points.iter().map(|p| [p[0], p[1]]).collect();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    let qp = [q[0], q[1]];
    // Andrew's monotone chain, counter-clockwise, collinear points dropped.
    let mut hull: Vec<[f64; 2]> = Vec::new();
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &[f64; 2]>> =
            if pass == 0 { Box::new(pts.iter()) } else { Box::new(pts.iter().rev()) };
        for p in iter {
            while hull.len() >= start + 2 && cross(&hull[hull.len() - 2], &hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(*p);
        }
        hull.pop();
    }
    match hull.len() {
        0 => segment_distance(&pts[0], &pts[0], &qp),
        1 => segment_distance(&hull[0], &hull[0], &qp),
        2 => segment_distance(&hull[0], &hull[1], &qp),
        k => {
            let scale = pts.iter().flat_map(|p| p.iter()).fold(1.0f64, |a, v| a.max(v.abs()));
            let inside = (0..k).all(|i| cross(&hull[i], &hull[(i + 1) % k], &qp) >= -1e-12 * scale * scale);
            if inside {
                0.0
            } else {
                (0..k)
                    .map(|i| segment_distance(&hull[i], &hull[(i + 1) % k], &qp))
                    .fold(f64::INFINITY, f64::min)
            }
        }
    }
}

pub fn cycle_edges(n: usize) -> Vec<(usize, usize)> {
    match n {
        0 | 1 => Vec::new(),
        2 => vec![(0, 1)],
        _ => (0..n).map(|i| (i, (i + 1) % n)).collect(),
    }
}

pub fn path_edges(n: usize) -> Vec<(usize, usize)> {
    (1..n).map(|i| (i - 1, i)).collect()
}

pub fn complete_edges(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect()
}

/// Erdős–Rényi edge set with edge probability `p`.
pub fn random_edges<R: Rng>(n: usize, p: f64, rng: &mut R) -> Vec<(usize, usize)> {
    complete_edges(n).into_iter().filter(|_| rng.gen_bool(p)).collect()
}

/// Symmetric matrix with eigenvalues drawn from `[lo, hi]`, both endpoints included when `d ≥ 2`.
pub fn random_spd<R: Rng>(d: usize, lo: f64, hi: f64, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let q = g.qr().q();
    let eig = DVector::from_fn(d, |i, _| match i {
        0 => lo,
        1 => hi,
        _ => rng.gen_range(lo..=hi),
    });
    let eig = if d == 1 { DVector::from_element(1, rng.gen_range(lo..=hi)) } else { eig };
    linalg::symmetrize(&(&q * DMatrix::from_diagonal(&eig) * q.transpose()))
}

/// Field/graph scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub n: usize,
    pub d: usize,
    /// `cycle`, `path` or `complete`; merged with `edges`.
    #[serde(default)]
    pub topology: Option<String>,
    #[serde(default)]
    pub edges: Vec<[usize; 2]>,
    /// Zero-based agent indices; empty means every agent is informed.
    #[serde(default)]
    pub informed: Vec<usize>,
    /// Formation offsets, `n·d` entries; zeros when omitted.
    #[serde(default)]
    pub r: Vec<f64>,
    pub field: FieldSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FieldSpec {
    /// `ψ(y) = ½ (y − center)ᵀ H (y − center)`, `hessian` row-major.
    Quadratic { hessian: Vec<f64>, center: Vec<f64> },
    Radial { center: Vec<f64>, width: f64, m: f64, l: f64 },
}

impl ScenarioFile {
    pub fn build(&self) -> Result<FieldGraph, FieldError> {
        let field = match &self.field {
            FieldSpec::Quadratic { hessian, center } => {
                if hessian.len() != self.d * self.d || center.len() != self.d {
                    return Err(FieldError::Format("field sizes do not match d".into()));
                }
                ScalarField::quadratic_centered(
                    DMatrix::from_row_slice(self.d, self.d, hessian),
                    DVector::from_column_slice(center),
                )?
            }
            FieldSpec::Radial { center, width, m, l } => {
                if center.len() != self.d {
                    return Err(FieldError::Format("field centre does not match d".into()));
                }
                ScalarField::radial(DVector::from_column_slice(center), *width, *m, *l)?
            }
        };
        let mut edges: Vec<(usize, usize)> = self.edges.iter().map(|e| (e[0], e[1])).collect();
        match self.topology.as_deref() {
            None => {}
            Some("cycle") => edges.extend(cycle_edges(self.n)),
            Some("path") => edges.extend(path_edges(self.n)),
            Some("complete") => edges.extend(complete_edges(self.n)),
            Some(other) => return Err(FieldError::Format(format!("unknown topology {other:?}"))),
        }
        let informed = if self.informed.is_empty() { (0..self.n).collect() } else { self.informed.clone() };
        let r = if self.r.is_empty() {
            DVector::zeros(self.n * self.d)
        } else {
            DVector::from_column_slice(&self.r)
        };
        FieldGraph::new(self.n, edges, informed, r, field)
    }

    pub fn from_toml(text: &str) -> Result<Self, FieldError> {
        toml::from_str(text).map_err(|e| FieldError::Format(e.to_string()))
    }
}
