//! Zames–Falb multipliers for gradients of functions in `S(m, L)`.
//!
//! [`build_multiplier`] realizes `Π₀ = π_{m,L} ⊗ I_d`, the filter that maps
//! `[ỹ; ũ]` to the signal `z̃` entering the α-IQC, and
//! [`build_variable_constraints`] describes the set of admissible middle
//! matrices `P` through the scalar L1-type constraint and the two
//! positivity LMIs on the filter-bank coefficients.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::integrate::rk4_step;
use crate::linalg;
use crate::sdp::{LmiConstraint, ScalarConstraint, SdpBackend, SdpRequest, SdpStatus, Sense};
use crate::statespace::Realization;

/// Pole of the multiplier filter chain.
pub const BETA: f64 = -1.0;

#[derive(Debug, Error, PartialEq)]
pub enum ZfError {
    #[error("multiplier order must be at least 1")]
    Order,
    #[error("sector bounds must satisfy 0 < m <= L, got m = {m}, L = {l}")]
    Sector { m: f64, l: f64 },
    #[error("rate must be non-negative, got {0}")]
    Rate(f64),
    #[error("spatial dimension must be at least 1")]
    Dimension,
    #[error("sample mismatch: {0}")]
    Samples(String),
}

/// Lower-bidiagonal chain `A_ν` (β on the diagonal, 1 below) and `B_ν = e₁`.
pub fn chain(nu: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut a = DMatrix::from_diagonal_element(nu, nu, BETA);
    for k in 1..nu {
        a[(k, k - 1)] = 1.0;
    }
    let mut b = DMatrix::zeros(nu, 1);
    b[(0, 0)] = 1.0;
    (a, b)
}

/// `A_ν⁻¹ B_ν` by forward substitution.
pub fn chain_inverse_input(nu: usize) -> Vec<f64> {
    let mut v = Vec::with_capacity(nu);
    let mut prev = 1.0 / BETA;
    v.push(prev);
    for _ in 1..nu {
        prev = -prev / BETA;
        v.push(prev);
    }
    v
}

/// Realization of `Π₀ = π_{m,L} ⊗ I_d`: `2νd` states, `2d` inputs `[ỹ; ũ]`,
/// `2(ν+1)d` outputs.
#[derive(Debug, Clone)]
pub struct ZfMultiplier {
    pub nu: usize,
    pub alpha: f64,
    pub m: f64,
    pub l: f64,
    pub d: usize,
    pub realization: Realization,
}

impl ZfMultiplier {
    pub fn n_states(&self) -> usize {
        2 * self.nu * self.d
    }

    pub fn n_outputs(&self) -> usize {
        2 * (self.nu + 1) * self.d
    }
}

pub fn build_multiplier(nu: usize, alpha: f64, m: f64, l: f64, d: usize) -> Result<ZfMultiplier, ZfError> {
    if nu < 1 {
        return Err(ZfError::Order);
    }
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(ZfError::Rate(alpha));
    }
    if !(m > 0.0 && m <= l && l.is_finite()) {
        return Err(ZfError::Sector { m, l });
    }
    if d < 1 {
        return Err(ZfError::Dimension);
    }
    let (a_nu, b_nu) = chain(nu);
    let a_alpha = &a_nu - DMatrix::<f64>::identity(nu, nu) * (2.0 * alpha);
    let a = linalg::blkdiag(&[&a_alpha, &a_alpha]);
    let mut b = DMatrix::zeros(2 * nu, 2);
    b.view_mut((0, 0), (nu, 1)).copy_from(&(&b_nu * -m));
    b.view_mut((0, 1), (nu, 1)).copy_from(&b_nu);
    b.view_mut((nu, 0), (nu, 1)).copy_from(&(&b_nu * l));
    b.view_mut((nu, 1), (nu, 1)).copy_from(&(&b_nu * -1.0));
    let mut c = DMatrix::zeros(2 * nu + 2, 2 * nu);
    c.view_mut((1, 0), (nu, nu)).fill_with_identity();
    c.view_mut((nu + 2, nu), (nu, nu)).fill_with_identity();
    let mut dm = DMatrix::zeros(2 * nu + 2, 2);
    dm[(0, 0)] = -m;
    dm[(0, 1)] = 1.0;
    dm[(nu + 1, 0)] = l;
    dm[(nu + 1, 1)] = -1.0;
    let eye = DMatrix::<f64>::identity(d, d);
    Ok(ZfMultiplier {
        nu,
        alpha,
        m,
        l,
        d,
        realization: Realization::new(
            linalg::kron(&a, &eye),
            linalg::kron(&b, &eye),
            linalg::kron(&c, &eye),
            linalg::kron(&dm, &eye),
        ),
    })
}

/// Indices of the multiplier decision variables in a flat decision vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ZfVarIndex {
    pub h: usize,
    pub p1: Range<usize>,
    pub p3: Range<usize>,
    /// Symmetric `(ν−1)×(ν−1)` matrices, ordered like [`linalg::sym_basis`].
    pub x1: Range<usize>,
    pub x3: Range<usize>,
}

/// Values of the multiplier decision variables.
#[derive(Debug, Clone, PartialEq)]
pub struct ZfValues {
    pub h: f64,
    pub p1: Vec<f64>,
    pub p3: Vec<f64>,
    pub x1: DMatrix<f64>,
    pub x3: DMatrix<f64>,
}

/// The constraint set for `(H, P₁, P₃, X₁, X₃)`.
#[derive(Debug, Clone)]
pub struct ZfVariableSet {
    pub nu: usize,
    /// Closed-form `A_ν⁻¹ B_ν`.
    pub chain_gain: Vec<f64>,
    /// Controllable-canonical realization of
    /// `[1, s, …, s^{ν−1}]ᵀ / (s − β)^{ν−1}` with `ν − 1` states.
    pub filter_bank: Realization,
    /// `diag(1/√0!, …, 1/√(ν−1)!)`.
    pub r_scale: DMatrix<f64>,
}

pub fn build_variable_constraints(nu: usize) -> Result<ZfVariableSet, ZfError> {
    if nu < 1 {
        return Err(ZfError::Order);
    }
    let k = nu - 1;
    // (s − β)^k = s^k + Σ_j coef[j] s^j.
    let coef: Vec<f64> = (0..k)
        .map(|j| binomial(k, j) * (-BETA).powi((k - j) as i32))
        .collect();
    let mut a = DMatrix::zeros(k, k);
    for i in 0..k.saturating_sub(1) {
        a[(i, i + 1)] = 1.0;
    }
    let mut b = DMatrix::zeros(k, 1);
    let mut c = DMatrix::zeros(nu, k);
    let mut d = DMatrix::zeros(nu, 1);
    if k > 0 {
        for j in 0..k {
            a[(k - 1, j)] = -coef[j];
            c[(j, j)] = 1.0;
            c[(k, j)] = -coef[j];
        }
        b[(k - 1, 0)] = 1.0;
    }
    d[(k, 0)] = 1.0;
    let mut fact = 1.0;
    let r_scale = DMatrix::from_diagonal(&DVector::from_iterator(
        nu,
        (0..nu).map(|i| {
            if i > 0 {
                fact *= i as f64;
            }
            1.0 / fact.sqrt()
        }),
    ));
    Ok(ZfVariableSet {
        nu,
        chain_gain: chain_inverse_input(nu),
        filter_bank: Realization::new(a, b, c, d),
        r_scale,
    })
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

impl ZfVariableSet {
    /// Size of the middle matrix `P`.
    pub fn p_dim(&self) -> usize {
        2 * (self.nu + 1)
    }

    fn sym_len(&self) -> usize {
        let k = self.nu - 1;
        k * (k + 1) / 2
    }

    /// Reserves decision variables starting at `*next`.
    pub fn allocate(&self, next: &mut usize) -> ZfVarIndex {
        let mut take = |n: usize| {
            let r = *next..*next + n;
            *next += n;
            r
        };
        let h = take(1).start;
        let p1 = take(self.nu);
        let p3 = take(self.nu);
        let x1 = take(self.sym_len());
        let x3 = take(self.sym_len());
        ZfVarIndex { h, p1, p3, x1, x3 }
    }

    /// `P = [[0, K], [Kᵀ, 0]]` with `K = [[H, −P₃ᵀ], [−P₁, 0]]`, partitioned `(1, ν, 1, ν)`.
    pub fn assemble_p(&self, h: f64, p1: &[f64], p3: &[f64]) -> DMatrix<f64> {
        let nu = self.nu;
        let half = nu + 1;
        let mut k = DMatrix::zeros(half, half);
        k[(0, 0)] = h;
        for j in 0..nu {
            k[(0, 1 + j)] = -p3[j];
            k[(1 + j, 0)] = -p1[j];
        }
        let mut p = DMatrix::zeros(2 * half, 2 * half);
        p.view_mut((0, half), (half, half)).copy_from(&k);
        p.view_mut((half, 0), (half, half)).copy_from(&k.transpose());
        p
    }

    /// `∂P/∂xᵢ` for every multiplier variable appearing in `P`.
    pub fn p_terms(&self, idx: &ZfVarIndex) -> Vec<(usize, DMatrix<f64>)> {
        let nu = self.nu;
        let zeros = vec![0.0; nu];
        let mut out = vec![(idx.h, self.assemble_p(1.0, &zeros, &zeros))];
        for j in 0..nu {
            let mut unit = zeros.clone();
            unit[j] = 1.0;
            out.push((idx.p1.start + j, self.assemble_p(0.0, &unit, &zeros)));
            out.push((idx.p3.start + j, self.assemble_p(0.0, &zeros, &unit)));
        }
        out
    }

    /// `H + (P₁ + P₃) A_ν⁻¹ B_ν ≥ 0`.
    pub fn l1_constraint(&self, idx: &ZfVarIndex) -> ScalarConstraint {
        let mut terms = vec![(idx.h, 1.0)];
        for (j, &g) in self.chain_gain.iter().enumerate() {
            terms.push((idx.p1.start + j, g));
            terms.push((idx.p3.start + j, g));
        }
        ScalarConstraint { label: "zf-l1".into(), constant: 0.0, terms }
    }

    /// Positivity LMI (`⪰ εI`) for coefficient vector `p` and storage `x`.
    pub fn positivity_lmi(&self, label: &str, p: Range<usize>, x: Range<usize>) -> LmiConstraint {
        let nu = self.nu;
        let k = nu - 1;
        let fb = &self.filter_bank;
        let mut lmi = LmiConstraint::new(label, nu, Sense::PosDef);
        // Output map [R C̃, R D̃] of the filter bank.
        let out = linalg::hstack(&[&(&self.r_scale * &fb.c), &(&self.r_scale * &fb.d)]);
        for j in 0..nu {
            let row = out.row(j).transpose();
            lmi.add_term(p.start + j, &row * row.transpose());
        }
        for (var, (i, jj)) in x.zip(linalg::sym_basis(k)) {
            let e = linalg::sym_unit(k, i, jj);
            let mut m = DMatrix::zeros(nu, nu);
            m.view_mut((0, 0), (k, k))
                .copy_from(&(fb.a.transpose() * &e + &e * &fb.a));
            let eb = &e * &fb.b;
            m.view_mut((0, k), (k, 1)).copy_from(&eb);
            m.view_mut((k, 0), (1, k)).copy_from(&eb.transpose());
            lmi.add_term(var, m);
        }
        lmi
    }

    /// All membership constraints: the scalar constraint and both positivity LMIs.
    pub fn constraints(&self, idx: &ZfVarIndex) -> (ScalarConstraint, [LmiConstraint; 2]) {
        (
            self.l1_constraint(idx),
            [
                self.positivity_lmi("zf-positivity-1", idx.p1.clone(), idx.x1.clone()),
                self.positivity_lmi("zf-positivity-3", idx.p3.clone(), idx.x3.clone()),
            ],
        )
    }

    /// Reads multiplier values out of a decision vector.
    pub fn values(&self, idx: &ZfVarIndex, x: &[f64]) -> ZfValues {
        let k = self.nu - 1;
        ZfValues {
            h: x[idx.h],
            p1: x[idx.p1.clone()].to_vec(),
            p3: x[idx.p3.clone()].to_vec(),
            x1: linalg::sym_from_values(k, &x[idx.x1.clone()]),
            x3: linalg::sym_from_values(k, &x[idx.x3.clone()]),
        }
    }

    /// Checks `(H, P₁, P₃)` against the scalar constraint and searches for
    /// storage matrices `X₁, X₃` making both positivity LMIs strict.
    pub fn find_storage(
        &self,
        h: f64,
        p1: &[f64],
        p3: &[f64],
        margin: f64,
        backend: &dyn SdpBackend,
    ) -> Option<ZfValues> {
        let l1 = h + p1.iter().chain(p3).zip(self.chain_gain.iter().chain(&self.chain_gain)).map(|(p, g)| p * g).sum::<f64>();
        if l1 < 0.0 {
            return None;
        }
        let k = self.nu - 1;
        let mut storage = Vec::new();
        for p in [p1, p3] {
            let n_x = k * (k + 1) / 2;
            let mut req = SdpRequest::new(n_x, margin);
            req.var_bound = Some(1e3 * (1.0 + p.iter().fold(0.0f64, |a, v| a.max(v.abs()))));
            // Variables 0..n_x are X; P enters as a constant.
            let fixed = self.positivity_lmi("positivity", n_x..n_x + self.nu, 0..n_x);
            let mut lmi = LmiConstraint::new("positivity", self.nu, Sense::PosDef);
            for (var, m) in fixed.terms {
                if var >= n_x {
                    lmi.constant += m * p[var - n_x];
                } else {
                    lmi.add_term(var, m);
                }
            }
            req.lmis.push(lmi);
            let report = backend.solve(&req);
            if report.status != SdpStatus::Feasible {
                return None;
            }
            storage.push(linalg::sym_from_values(k, &report.x));
        }
        let x3 = storage.pop()?;
        let x1 = storage.pop()?;
        Some(ZfValues { h, p1: p1.to_vec(), p3: p3.to_vec(), x1, x3 })
    }
}

/// Trapezoidal approximation of `∫₀ᵀ e^{2αt} z̃ᵀ (P ⊗ I_d) z̃ dt`, where `z̃`
/// is the multiplier response to the sampled pair `(ỹ, ũ)` on a uniform grid
/// of step `dt`. The multiplier state is integrated with RK4, the inputs
/// being interpolated linearly between samples.
pub fn iqc_residual(
    mult: &ZfMultiplier,
    p: &DMatrix<f64>,
    y_tilde: &[DVector<f64>],
    u_tilde: &[DVector<f64>],
    dt: f64,
) -> Result<f64, ZfError> {
    let d = mult.d;
    if y_tilde.len() != u_tilde.len() {
        return Err(ZfError::Samples(format!("{} y samples, {} u samples", y_tilde.len(), u_tilde.len())));
    }
    if y_tilde.iter().chain(u_tilde).any(|v| v.len() != d) {
        return Err(ZfError::Samples(format!("samples must have dimension {d}")));
    }
    if p.shape() != (2 * (mult.nu + 1), 2 * (mult.nu + 1)) {
        return Err(ZfError::Samples("middle matrix has the wrong size".into()));
    }
    if !(dt > 0.0) {
        return Err(ZfError::Samples("time step must be positive".into()));
    }
    if y_tilde.is_empty() {
        return Ok(0.0);
    }
    let r = &mult.realization;
    let weight = linalg::kron(p, &DMatrix::identity(d, d));
    let inputs: Vec<DVector<f64>> = y_tilde
        .iter()
        .zip(u_tilde)
        .map(|(y, u)| {
            let mut w = DVector::zeros(2 * d);
            w.rows_mut(0, d).copy_from(y);
            w.rows_mut(d, d).copy_from(u);
            w
        })
        .collect();
    let integrand = |k: usize, x: &DVector<f64>| {
        let z = &r.c * x + &r.d * &inputs[k];
        (2.0 * mult.alpha * k as f64 * dt).exp() * z.dot(&(&weight * &z))
    };
    let mut x = DVector::zeros(mult.n_states());
    let mut total = 0.0;
    let mut prev = integrand(0, &x);
    for k in 1..inputs.len() {
        let (w0, w1) = (&inputs[k - 1], &inputs[k]);
        let t0 = (k - 1) as f64 * dt;
        let rhs = |t: f64, s: &DVector<f64>| {
            let theta = ((t - t0) / dt).clamp(0.0, 1.0);
            let w = w0 * (1.0 - theta) + w1 * theta;
            &r.a * s + &r.b * w
        };
        x = rk4_step(rhs, t0, &x, dt);
        let cur = integrand(k, &x);
        total += 0.5 * dt * (prev + cur);
        prev = cur;
    }
    Ok(total)
}
