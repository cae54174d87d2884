//! Backend-neutral LMI feasibility requests.
//!
//! A request is a list of symmetric affine matrix functions
//! `F(x) = F₀ + Σ xᵢ Fᵢ` of a flat decision vector, each required to satisfy
//! `F(x) ⪯ −εI` or `F(x) ⪰ εI`, plus scalar affine constraints `g(x) ≥ 0`.
//! Backends return an [`SdpReport`]; the report status is always decided by
//! replaying the returned point against the request, never by trusting the
//! backend's own status flag.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};
use nalgebra::DMatrix;

use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    /// `F(x) ⪯ −εI`
    NegDef,
    /// `F(x) ⪰ εI`
    PosDef,
}

#[derive(Debug, Clone)]
pub struct LmiConstraint {
    pub label: String,
    pub constant: DMatrix<f64>,
    pub terms: Vec<(usize, DMatrix<f64>)>,
    pub sense: Sense,
}

impl LmiConstraint {
    pub fn new(label: impl Into<String>, dim: usize, sense: Sense) -> Self {
        Self {
            label: label.into(),
            constant: DMatrix::zeros(dim, dim),
            terms: Vec::new(),
            sense,
        }
    }

    pub fn dim(&self) -> usize {
        self.constant.nrows()
    }

    /// Adds `coeff · x[var]`, merging with an existing term for the same variable.
    pub fn add_term(&mut self, var: usize, coeff: DMatrix<f64>) {
        debug_assert_eq!(coeff.shape(), self.constant.shape());
        if coeff.iter().all(|&v| v == 0.0) {
            return;
        }
        let coeff = linalg::symmetrize(&coeff);
        match self.terms.iter_mut().find(|(v, _)| *v == var) {
            Some((_, m)) => *m += coeff,
            None => self.terms.push((var, coeff)),
        }
    }

    pub fn evaluate(&self, x: &[f64]) -> DMatrix<f64> {
        let mut out = self.constant.clone();
        for (v, m) in &self.terms {
            out += m * x[*v];
        }
        out
    }

    /// Amount by which the strict inequality with margin `eps` is violated.
    pub fn violation(&self, x: &[f64], eps: f64) -> f64 {
        let f = self.evaluate(x);
        match self.sense {
            Sense::NegDef => (linalg::lambda_max(&f) + eps).max(0.0),
            Sense::PosDef => (eps - linalg::lambda_min(&f)).max(0.0),
        }
    }
}

/// `constant + Σ coeff·x[var] ≥ 0`.
#[derive(Debug, Clone)]
pub struct ScalarConstraint {
    pub label: String,
    pub constant: f64,
    pub terms: Vec<(usize, f64)>,
}

impl ScalarConstraint {
    pub fn evaluate(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|(v, c)| c * x[*v]).sum::<f64>()
    }
}

#[derive(Debug, Clone)]
pub struct SdpRequest {
    pub n_vars: usize,
    pub lmis: Vec<LmiConstraint>,
    pub scalars: Vec<ScalarConstraint>,
    /// Strictness margin ε shared by all matrix constraints.
    pub margin: f64,
    /// Optional box `|xᵢ| ≤ bound`, used to normalise homogeneous problems.
    pub var_bound: Option<f64>,
}

impl SdpRequest {
    pub fn new(n_vars: usize, margin: f64) -> Self {
        Self { n_vars, lmis: Vec::new(), scalars: Vec::new(), margin, var_bound: None }
    }

    /// Largest violation over all constraints at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let lmi = self
            .lmis
            .iter()
            .map(|c| c.violation(x, self.margin))
            .fold(0.0, f64::max);
        let scalar = self
            .scalars
            .iter()
            .map(|s| (-s.evaluate(x)).max(0.0))
            .fold(0.0, f64::max);
        lmi.max(scalar)
    }

    /// Status implied by a candidate point: violations up to ε/10 count as
    /// feasible, (ε/10, ε] as a numerical failure, anything larger as infeasible.
    pub fn classify(&self, x: &[f64]) -> (SdpStatus, f64) {
        let v = self.max_violation(x);
        let status = if !v.is_finite() {
            SdpStatus::NumericalFailure
        } else if v <= self.margin / 10.0 {
            SdpStatus::Feasible
        } else if v <= self.margin {
            SdpStatus::NumericalFailure
        } else {
            SdpStatus::Infeasible
        };
        (status, v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdpStatus {
    Feasible,
    Infeasible,
    NumericalFailure,
}

impl SdpStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            SdpStatus::Feasible => "feasible",
            SdpStatus::Infeasible => "infeasible",
            SdpStatus::NumericalFailure => "numerical-failure",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SdpReport {
    pub status: SdpStatus,
    pub x: Vec<f64>,
    pub max_violation: f64,
    /// Largest common margin the backend found (`t*`), when it reports one.
    pub margin_found: Option<f64>,
    pub diagnostics: String,
}

/// A semidefinite feasibility solver.
pub trait SdpBackend: Send + Sync {
    fn solve(&self, request: &SdpRequest) -> SdpReport;
}

/// Interior-point backend built on Clarabel. It maximises a common margin
/// `t ≤ 1` with `F(x) ⪯ −tI` / `F(x) ⪰ tI` and then replays the optimiser.
#[derive(Debug, Clone)]
pub struct ClarabelBackend {
    pub max_iter: u32,
    pub tol: f64,
}

impl Default for ClarabelBackend {
    fn default() -> Self {
        Self { max_iter: 200, tol: 1e-9 }
    }
}

struct ColumnBuilder {
    cols: Vec<Vec<(usize, f64)>>,
}

impl ColumnBuilder {
    fn push(&mut self, col: usize, row: usize, v: f64) {
        if v != 0.0 {
            self.cols[col].push((row, v));
        }
    }

    fn into_csc(self, rows: usize) -> CscMatrix<f64> {
        let n = self.cols.len();
        let mut colptr = Vec::with_capacity(n + 1);
        let mut rowval = Vec::new();
        let mut nzval = Vec::new();
        colptr.push(0);
        for mut col in self.cols {
            col.sort_by_key(|e| e.0);
            for (r, v) in col {
                rowval.push(r);
                nzval.push(v);
            }
            colptr.push(rowval.len());
        }
        CscMatrix::new(rows, n, colptr, rowval, nzval)
    }
}

impl SdpBackend for ClarabelBackend {
    fn solve(&self, request: &SdpRequest) -> SdpReport {
        let n = request.n_vars;
        let t_col = n;
        let mut a = ColumnBuilder { cols: vec![Vec::new(); n + 1] };
        let mut b: Vec<f64> = Vec::new();
        let mut cones: Vec<SupportedConeT<f64>> = Vec::new();

        // Nonnegative rows: scalar constraints, variable box, cap on t.
        let mut nonneg = 0;
        for s in &request.scalars {
            for &(v, c) in &s.terms {
                a.push(v, b.len(), -c);
            }
            b.push(s.constant);
            nonneg += 1;
        }
        if let Some(bound) = request.var_bound {
            for v in 0..n {
                a.push(v, b.len(), 1.0);
                b.push(bound);
                a.push(v, b.len(), -1.0);
                b.push(bound);
                nonneg += 2;
            }
        }
        a.push(t_col, b.len(), 1.0);
        b.push(1.0);
        nonneg += 1;
        cones.push(SupportedConeT::NonnegativeConeT(nonneg));

        for lmi in &request.lmis {
            let dim = lmi.dim();
            let row0 = b.len();
            let sign = match lmi.sense {
                Sense::NegDef => -1.0,
                Sense::PosDef => 1.0,
            };
            // Slack = sign·F(x) − tI must be PSD.
            b.extend(linalg::svec(&(&lmi.constant * sign)));
            for (v, m) in &lmi.terms {
                for (k, val) in linalg::svec(m).into_iter().enumerate() {
                    a.push(*v, row0 + k, -sign * val);
                }
            }
            let mut k = 0;
            for j in 0..dim {
                for i in 0..=j {
                    if i == j {
                        a.push(t_col, row0 + k, 1.0);
                    }
                    k += 1;
                }
            }
            cones.push(SupportedConeT::PSDTriangleConeT(dim));
        }

        let rows = b.len();
        let a_csc = a.into_csc(rows);
        let p = CscMatrix::<f64>::zeros((n + 1, n + 1));
        let mut q = vec![0.0; n + 1];
        q[t_col] = -1.0;

        let settings = DefaultSettingsBuilder::default()
            .verbose(false)
            .max_iter(self.max_iter)
            .tol_gap_abs(self.tol)
            .tol_gap_rel(self.tol)
            .tol_feas(self.tol)
            .build()
            .expect("valid clarabel settings");

        let failure = |msg: String| SdpReport {
            status: SdpStatus::NumericalFailure,
            x: vec![0.0; n],
            max_violation: f64::INFINITY,
            margin_found: None,
            diagnostics: msg,
        };
        let mut solver = match DefaultSolver::new(&p, &q, &a_csc, &b, &cones, settings) {
            Ok(s) => s,
            Err(e) => return failure(format!("clarabel setup failed: {e:?}")),
        };
        solver.solve();
        let sol = &solver.solution;
        let usable = matches!(
            sol.status,
            SolverStatus::Solved | SolverStatus::AlmostSolved | SolverStatus::MaxIterations | SolverStatus::InsufficientProgress
        );
        if !usable || sol.x.iter().any(|v| !v.is_finite()) {
            return failure(format!("clarabel status {:?}", sol.status));
        }
        let x = sol.x[..n].to_vec();
        let (mut status, max_violation) = request.classify(&x);
        let converged = matches!(sol.status, SolverStatus::Solved | SolverStatus::AlmostSolved);
        if !converged && status == SdpStatus::Infeasible {
            status = SdpStatus::NumericalFailure;
        }
        SdpReport {
            status,
            x,
            max_violation,
            margin_found: Some(sol.x[t_col]),
            diagnostics: format!("clarabel status {:?}, {} iterations", sol.status, sol.iterations),
        }
    }
}
