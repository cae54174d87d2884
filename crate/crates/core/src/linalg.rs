//! Small dense linear-algebra helpers shared by the model, multiplier and
//! certification code. Everything here works on `nalgebra::DMatrix<f64>`.

use nalgebra::DMatrix;

/// Relative singular-value threshold used for every rank and null-space decision.
pub const RANK_RTOL: f64 = 1e-9;

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = DMatrix::zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            let s = a[(i, j)];
            if s != 0.0 {
                out.view_mut((i * br, j * bc), (br, bc)).copy_from(&(b * s));
            }
        }
    }
    out
}

/// Block-diagonal concatenation.
pub fn blkdiag(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), b.shape()).copy_from(*b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// Stacks matrices with equal column counts on top of each other.
pub fn vstack(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let cols = blocks.first().map_or(0, |b| b.ncols());
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut r = 0;
    for b in blocks {
        assert_eq!(b.ncols(), cols, "vstack column mismatch");
        out.view_mut((r, 0), b.shape()).copy_from(*b);
        r += b.nrows();
    }
    out
}

/// Places matrices side by side.
pub fn hstack(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let rows = blocks.first().map_or(0, |b| b.nrows());
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut c = 0;
    for b in blocks {
        assert_eq!(b.nrows(), rows, "hstack row mismatch");
        out.view_mut((0, c), b.shape()).copy_from(*b);
        c += b.ncols();
    }
    out
}

pub fn all_finite(m: &DMatrix<f64>) -> bool {
    m.iter().all(|v| v.is_finite())
}

/// `(m + mᵀ) / 2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Eigenvalues of the symmetric part of `m`, ascending.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let eig = symmetrize(m).symmetric_eigenvalues();
    let mut v: Vec<f64> = eig.iter().copied().collect();
    v.sort_by(|a, b| a.total_cmp(b));
    v
}

pub fn lambda_min(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m).first().copied().unwrap_or(f64::INFINITY)
}

pub fn lambda_max(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m).last().copied().unwrap_or(f64::NEG_INFINITY)
}

/// Singular values of `m` together with the full right singular basis
/// (columns of `V`, `ncols × ncols`).
fn full_svd(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let (r, c) = m.shape();
    if c == 0 {
        return (Vec::new(), DMatrix::zeros(0, 0));
    }
    // Zero-padding to a tall matrix makes the thin SVD return all of V.
    let padded = if r < c {
        let mut p = DMatrix::zeros(c, c);
        p.view_mut((0, 0), (r, c)).copy_from(m);
        p
    } else {
        m.clone()
    };
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    (sv, v_t.transpose())
}

/// Numerical rank with threshold `RANK_RTOL × σ_max`.
pub fn rank(m: &DMatrix<f64>) -> usize {
    let (sv, _) = full_svd(m);
    let smax = sv.iter().copied().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_RTOL * smax).count()
}

/// Orthonormal basis of the right null space, one column per null direction.
pub fn null_space(m: &DMatrix<f64>) -> DMatrix<f64> {
    let c = m.ncols();
    let (sv, v) = full_svd(m);
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..c)
        .filter(|&k| smax == 0.0 || sv[k] <= RANK_RTOL * smax)
        .collect();
    let mut out = DMatrix::zeros(c, keep.len());
    for (j, &k) in keep.iter().enumerate() {
        out.set_column(j, &v.column(k));
    }
    out
}

/// Least-squares solution of `a x = b` through the pseudo-inverse.
pub fn lstsq(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    if a.ncols() == 0 {
        return DMatrix::zeros(0, b.ncols());
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    svd.solve(b, RANK_RTOL * smax.max(f64::MIN_POSITIVE))
        .expect("svd computed with both bases")
}

/// Condition number of a symmetric positive-definite matrix.
pub fn spd_condition(m: &DMatrix<f64>) -> f64 {
    let ev = sym_eigenvalues(m);
    match (ev.first(), ev.last()) {
        (Some(&lo), Some(&hi)) if lo > 0.0 => hi / lo,
        (Some(_), Some(_)) => f64::INFINITY,
        _ => 1.0,
    }
}

/// Scaled half-vectorisation of a symmetric matrix: upper triangle in
/// column-major order with off-diagonal entries multiplied by √2, so that
/// `⟨svec(a), svec(b)⟩ = tr(ab)`.
pub fn svec(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut out = Vec::with_capacity(n * (n + 1) / 2);
    for j in 0..n {
        for i in 0..=j {
            if i == j {
                out.push(m[(i, j)]);
            } else {
                out.push(std::f64::consts::SQRT_2 * 0.5 * (m[(i, j)] + m[(j, i)]));
            }
        }
    }
    out
}

/// Index pairs `(i, j)`, `i ≤ j`, of a symmetric `n × n` decision matrix.
pub fn sym_basis(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|j| (0..=j).map(move |i| (i, j))).collect()
}

/// Symmetric unit matrix `eᵢeⱼᵀ + eⱼeᵢᵀ` (or `eᵢeᵢᵀ` on the diagonal).
pub fn sym_unit(n: usize, i: usize, j: usize) -> DMatrix<f64> {
    let mut e = DMatrix::zeros(n, n);
    e[(i, j)] = 1.0;
    e[(j, i)] = 1.0;
    e
}

/// Rebuilds a symmetric matrix from values ordered like [`sym_basis`].
pub fn sym_from_values(n: usize, values: &[f64]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    for (&(i, j), &v) in sym_basis(n).iter().zip(values) {
        m[(i, j)] = v;
        m[(j, i)] = v;
    }
    m
}
