//! Gridded state-space models and the virtual-vehicle filter augmentation.
//!
//! A [`ParamStateSpace`] stores one `(A, B, C, D)` realization per point of a
//! tensor-product [`ParamGrid`]. LTI models are the special case of a grid
//! with a single point and zero parameter dimension.

use std::ops::Range;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg;

/// Default number of grid points per parameter axis.
pub const DEFAULT_POINTS_PER_AXIS: usize = 11;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite entry in {0}")]
    NonFinite(String),
    #[error("gain {name} must be positive, got {value}")]
    NonPositiveGain { name: &'static str, value: f64 },
    #[error("invalid parameter grid: {0}")]
    Grid(String),
    #[error("grid point index {index} out of range ({len} points)")]
    GridPoint { index: usize, len: usize },
    #[error("model file: {0}")]
    Format(String),
}

/// One `(A, B, C, D)` quadruple.
#[derive(Debug, Clone, PartialEq)]
pub struct Realization {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
}

impl Realization {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>, d: DMatrix<f64>) -> Self {
        Self { a, b, c, d }
    }

    pub fn n_x(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_u(&self) -> usize {
        self.b.ncols()
    }

    pub fn n_y(&self) -> usize {
        self.c.nrows()
    }

    fn check(&self, n_x: usize, n_u: usize, n_y: usize) -> Result<(), ModelError> {
        let want = [
            ("A", self.a.shape(), (n_x, n_x)),
            ("B", self.b.shape(), (n_x, n_u)),
            ("C", self.c.shape(), (n_y, n_x)),
            ("D", self.d.shape(), (n_y, n_u)),
        ];
        for (name, got, exp) in want {
            if got != exp {
                return Err(ModelError::Dimension(format!(
                    "{name} is {}x{}, expected {}x{}",
                    got.0, got.1, exp.0, exp.1
                )));
            }
        }
        for (name, m) in [("A", &self.a), ("B", &self.b), ("C", &self.c), ("D", &self.d)] {
            if !linalg::all_finite(m) {
                return Err(ModelError::NonFinite(name.to_string()));
            }
        }
        Ok(())
    }

    fn affine(&self, w_self: f64, other: &Realization, w_other: f64) -> Realization {
        Realization {
            a: &self.a * w_self + &other.a * w_other,
            b: &self.b * w_self + &other.b * w_other,
            c: &self.c * w_self + &other.c * w_other,
            d: &self.d * w_self + &other.d * w_other,
        }
    }
}

/// Tensor-product grid over an axis-aligned parameter box.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrid {
    lower: Vec<f64>,
    upper: Vec<f64>,
    axes: Vec<Vec<f64>>,
    points: Vec<Vec<f64>>,
}

impl ParamGrid {
    /// The zero-dimensional grid of an LTI model.
    pub fn lti() -> Self {
        Self {
            lower: Vec::new(),
            upper: Vec::new(),
            axes: Vec::new(),
            points: vec![Vec::new()],
        }
    }

    /// `points_per_axis` uniformly spaced values on every axis of the box.
    pub fn uniform(lower: &[f64], upper: &[f64], points_per_axis: usize) -> Result<Self, ModelError> {
        if lower.len() != upper.len() {
            return Err(ModelError::Grid("box bounds differ in length".into()));
        }
        let axes = lower
            .iter()
            .zip(upper)
            .map(|(&lo, &hi)| {
                if lo == hi {
                    vec![lo]
                } else {
                    let n = points_per_axis.max(2);
                    (0..n)
                        .map(|k| {
                            if k + 1 == n {
                                hi
                            } else {
                                lo + (hi - lo) * k as f64 / (n - 1) as f64
                            }
                        })
                        .collect()
                }
            })
            .collect();
        Self::from_axes(lower.to_vec(), upper.to_vec(), axes)
    }

    /// Grid from explicit per-axis values. Each axis must be strictly
    /// increasing, lie in the box and contain both box ends.
    pub fn from_axes(lower: Vec<f64>, upper: Vec<f64>, axes: Vec<Vec<f64>>) -> Result<Self, ModelError> {
        if lower.len() != upper.len() || lower.len() != axes.len() {
            return Err(ModelError::Grid("box and axes have different dimensions".into()));
        }
        for (k, axis) in axes.iter().enumerate() {
            let (lo, hi) = (lower[k], upper[k]);
            if !(lo.is_finite() && hi.is_finite()) || lo > hi {
                return Err(ModelError::Grid(format!("axis {k}: bad bounds [{lo}, {hi}]")));
            }
            if axis.is_empty() {
                return Err(ModelError::Grid(format!("axis {k} is empty")));
            }
            if axis.windows(2).any(|w| w[1] <= w[0]) {
                return Err(ModelError::Grid(format!("axis {k} not strictly increasing")));
            }
            if axis[0] != lo || axis[axis.len() - 1] != hi {
                return Err(ModelError::Grid(format!("axis {k} must include both box ends")));
            }
        }
        let mut points: Vec<Vec<f64>> = vec![Vec::new()];
        for axis in &axes {
            points = points
                .into_iter()
                .flat_map(|p| {
                    axis.iter().map(move |&v| {
                        let mut q = p.clone();
                        q.push(v);
                        q
                    })
                })
                .collect();
        }
        Ok(Self { lower, upper, axes, points })
    }

    /// Degenerate box holding exactly one point.
    pub fn single(point: Vec<f64>) -> Result<Self, ModelError> {
        let axes = point.iter().map(|&v| vec![v]).collect();
        Self::from_axes(point.clone(), point, axes)
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn axes(&self) -> &[Vec<f64>] {
        &self.axes
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn contains(&self, rho: &[f64]) -> bool {
        rho.len() == self.dim()
            && rho
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(&r, (&lo, &hi))| r >= lo && r <= hi)
    }

    /// Flat index of the point with per-axis indices `idx` (last axis fastest).
    fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter()
            .zip(&self.axes)
            .fold(0, |acc, (&i, axis)| acc * axis.len() + i)
    }
}

/// Maps the state of a quasi-LPV model to its scheduling parameter:
/// `ρ_k = |x[state_index[k]]|`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scheduling {
    pub state_index: Vec<usize>,
}

/// A family of realizations sampled on a parameter grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStateSpace {
    n_x: usize,
    n_u: usize,
    n_y: usize,
    d: usize,
    grid: ParamGrid,
    realizations: Vec<Realization>,
    scheduling: Option<Scheduling>,
}

impl ParamStateSpace {
    pub fn new(d: usize, grid: ParamGrid, realizations: Vec<Realization>) -> Result<Self, ModelError> {
        let first = realizations
            .first()
            .ok_or_else(|| ModelError::Dimension("no realizations".into()))?;
        let (n_x, n_u, n_y) = (first.n_x(), first.n_u(), first.n_y());
        if realizations.len() != grid.len() {
            return Err(ModelError::Dimension(format!(
                "{} realizations for {} grid points",
                realizations.len(),
                grid.len()
            )));
        }
        for r in &realizations {
            r.check(n_x, n_u, n_y)?;
        }
        if d == 0 {
            return Err(ModelError::Dimension("spatial dimension must be at least 1".into()));
        }
        Ok(Self { n_x, n_u, n_y, d, grid, realizations, scheduling: None })
    }

    pub fn lti(d: usize, realization: Realization) -> Result<Self, ModelError> {
        Self::new(d, ParamGrid::lti(), vec![realization])
    }

    pub fn with_scheduling(mut self, scheduling: Scheduling) -> Result<Self, ModelError> {
        if scheduling.state_index.len() != self.grid.dim() {
            return Err(ModelError::Dimension(format!(
                "scheduling map has {} entries, grid has dimension {}",
                scheduling.state_index.len(),
                self.grid.dim()
            )));
        }
        if scheduling.state_index.iter().any(|&i| i >= self.n_x) {
            return Err(ModelError::Dimension("scheduling state index out of range".into()));
        }
        self.scheduling = Some(scheduling);
        Ok(self)
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn n_u(&self) -> usize {
        self.n_u
    }

    pub fn n_y(&self) -> usize {
        self.n_y
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn grid(&self) -> &ParamGrid {
        &self.grid
    }

    pub fn realizations(&self) -> &[Realization] {
        &self.realizations
    }

    pub fn realization(&self, index: usize) -> Result<&Realization, ModelError> {
        self.realizations.get(index).ok_or(ModelError::GridPoint {
            index,
            len: self.realizations.len(),
        })
    }

    pub fn scheduling(&self) -> Option<&Scheduling> {
        self.scheduling.as_ref()
    }

    pub fn is_lti(&self) -> bool {
        self.realizations.len() == 1
    }

    /// Multilinear interpolation between grid points. Outside the box the
    /// boundary cells are extended linearly, which is exact for models that
    /// are affine in the parameter. The flag reports whether `rho` was inside.
    pub fn realization_at(&self, rho: &[f64]) -> (Realization, bool) {
        let inside = self.grid.contains(rho);
        if self.is_lti() || rho.len() != self.grid.dim() {
            return (self.realizations[0].clone(), inside || self.is_lti());
        }
        // Per axis: lower neighbour index and weight of the upper neighbour.
        let cells: Vec<(usize, f64, bool)> = self
            .grid
            .axes
            .iter()
            .zip(rho)
            .map(|(axis, &r)| {
                if axis.len() == 1 {
                    return (0, 0.0, false);
                }
                let mut k = axis.partition_point(|&v| v <= r);
                k = k.clamp(1, axis.len() - 1) - 1;
                let w = (r - axis[k]) / (axis[k + 1] - axis[k]);
                (k, w, true)
            })
            .collect();
        let dim = cells.len();
        let mut acc: Option<Realization> = None;
        for corner in 0..(1usize << dim) {
            let mut weight = 1.0;
            let mut idx = Vec::with_capacity(dim);
            let mut skip = false;
            for (axis, &(k, w, two)) in cells.iter().enumerate() {
                let upper = corner >> axis & 1 == 1;
                if !two && upper {
                    skip = true;
                    break;
                }
                weight *= if !two {
                    1.0
                } else if upper {
                    w
                } else {
                    1.0 - w
                };
                idx.push(if upper { k + 1 } else { k });
            }
            if skip || weight == 0.0 {
                continue;
            }
            let r = &self.realizations[self.grid.flat_index(&idx)];
            acc = Some(match acc {
                None => r.affine(weight, r, 0.0),
                Some(a) => a.affine(1.0, r, weight),
            });
        }
        let out = acc.unwrap_or_else(|| {
            // Every corner had zero weight only if rho sits on a grid point
            // of an axis whose upper neighbour was excluded; fall back to it.
            let idx: Vec<usize> = cells.iter().map(|c| c.0).collect();
            self.realizations[self.grid.flat_index(&idx)].clone()
        });
        (out, inside)
    }

    /// Applies `x ↦ T x` to every realization: `(TAT⁻¹, TB, CT⁻¹, D)`.
    pub fn similarity(&self, t: &DMatrix<f64>) -> Result<Self, ModelError> {
        let t_inv = t
            .clone()
            .try_inverse()
            .ok_or_else(|| ModelError::Dimension("similarity transform is singular".into()))?;
        let realizations = self
            .realizations
            .iter()
            .map(|r| Realization {
                a: t * &r.a * &t_inv,
                b: t * &r.b,
                c: &r.c * &t_inv,
                d: r.d.clone(),
            })
            .collect();
        let mut out = Self::new(self.d, self.grid.clone(), realizations)?;
        out.scheduling = None;
        Ok(out)
    }
}

/// Index ranges of the vehicle, position-reference and velocity-reference
/// blocks inside the augmented state `η = [x; q; p]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateLayout {
    pub x: Range<usize>,
    pub q: Range<usize>,
    pub p: Range<usize>,
}

/// A vehicle model closed with the second-order reference filter
/// `q̇ = p, ṗ = −k_d p − k_p u`.
#[derive(Debug, Clone)]
pub struct AugmentedPlant {
    pub base: ParamStateSpace,
    pub k_p: f64,
    pub k_d: f64,
    pub aug: ParamStateSpace,
    pub layout: StateLayout,
}

impl AugmentedPlant {
    pub fn d(&self) -> usize {
        self.aug.d()
    }

    pub fn n_states(&self) -> usize {
        self.aug.n_x()
    }

    /// Scheduling parameter for an augmented state, if the model is quasi-LPV.
    pub fn scheduling_of(&self, eta: &[f64]) -> Vec<f64> {
        match self.aug.scheduling() {
            Some(s) => s.state_index.iter().map(|&i| eta[i].abs()).collect(),
            None => Vec::new(),
        }
    }
}

/// Builds `(A_G, B_G, C_G)` at every grid point of `base`.
///
/// `base` must take inputs ordered `[q; p]` (so `n_u = 2d`) and emit the
/// position `y` (`n_y = d`). A feedthrough `D = [D_q D_p]` in the base model
/// appears in the output row as `C_G = [C  D_q  D_p]`.
pub fn augment_with_filter(base: &ParamStateSpace, k_p: f64, k_d: f64) -> Result<AugmentedPlant, ModelError> {
    let d = base.n_y();
    if d != base.d() {
        return Err(ModelError::Dimension(format!(
            "output count {} differs from spatial dimension {}",
            d,
            base.d()
        )));
    }
    if base.n_u() != 2 * d {
        return Err(ModelError::Dimension(format!(
            "base has {} inputs, expected 2·{} = {}",
            base.n_u(),
            d,
            2 * d
        )));
    }
    for (name, value) in [("k_p", k_p), ("k_d", k_d)] {
        if !(value > 0.0 && value.is_finite()) {
            return Err(ModelError::NonPositiveGain { name, value });
        }
    }
    let n = base.n_x();
    let n_g = n + 2 * d;
    let eye = DMatrix::<f64>::identity(d, d);
    let realizations = base
        .realizations()
        .iter()
        .map(|r| {
            let mut a = DMatrix::zeros(n_g, n_g);
            a.view_mut((0, 0), (n, n)).copy_from(&r.a);
            a.view_mut((0, n), (n, 2 * d)).copy_from(&r.b);
            a.view_mut((n, n + d), (d, d)).copy_from(&eye);
            a.view_mut((n + d, n + d), (d, d)).copy_from(&(&eye * -k_d));
            let mut b = DMatrix::zeros(n_g, d);
            b.view_mut((n + d, 0), (d, d)).copy_from(&(&eye * -k_p));
            let mut c = DMatrix::zeros(d, n_g);
            c.view_mut((0, 0), (d, n)).copy_from(&r.c);
            c.view_mut((0, n), (d, 2 * d)).copy_from(&r.d);
            Realization::new(a, b, c, DMatrix::zeros(d, d))
        })
        .collect();
    let mut aug = ParamStateSpace::new(d, base.grid().clone(), realizations)?;
    if let Some(s) = base.scheduling() {
        aug = aug.with_scheduling(s.clone())?;
    }
    Ok(AugmentedPlant {
        base: base.clone(),
        k_p,
        k_d,
        aug,
        layout: StateLayout { x: 0..n, q: n..n + d, p: n + d..n + 2 * d },
    })
}

/// Outcome of the common-equilibrium test.
#[derive(Debug, Clone)]
pub struct EquilibriumCheck {
    pub holds: bool,
    /// Column `k` is an equilibrium state whose output is the `k`-th unit
    /// vector at every grid point. Empty when `holds` is false.
    pub witness: DMatrix<f64>,
}

impl EquilibriumCheck {
    /// Equilibrium state producing output `y` (requires `holds`).
    pub fn state_for(&self, y: &[f64]) -> Vec<f64> {
        let y = nalgebra::DVector::from_column_slice(y);
        (&self.witness * y).iter().copied().collect()
    }
}

/// Checks that for every output target there is one state `η*` with
/// `A_G(ρ) η* = 0` and `C_G(ρ) η* = y*` at all grid points simultaneously.
pub fn check_equilibrium_family(plant: &AugmentedPlant) -> EquilibriumCheck {
    let aug = &plant.aug;
    let d = aug.d();
    let a_blocks: Vec<&DMatrix<f64>> = aug.realizations().iter().map(|r| &r.a).collect();
    let null = linalg::null_space(&linalg::vstack(&a_blocks));
    let fail = EquilibriumCheck { holds: false, witness: DMatrix::zeros(0, 0) };
    if null.ncols() == 0 {
        return fail;
    }
    let cn: Vec<DMatrix<f64>> = aug.realizations().iter().map(|r| &r.c * &null).collect();
    let stacked_cn = linalg::vstack(&cn.iter().collect::<Vec<_>>());
    let targets = linalg::vstack(&vec![&DMatrix::<f64>::identity(d, d); aug.realizations().len()]);
    let w = linalg::lstsq(&stacked_cn, &targets);
    let residual = (&stacked_cn * &w - &targets).norm();
    let scale = 1.0 + stacked_cn.norm() * w.norm();
    if residual > 1e-8 * scale {
        return fail;
    }
    EquilibriumCheck { holds: true, witness: &null * w }
}

/// Block-diagonal model of `assignment.len()` agents, agent `i` frozen at
/// grid point `assignment[i]`. The result is LTI with output dimension `N·d`.
pub fn stack_agents(plant: &AugmentedPlant, assignment: &[usize]) -> Result<ParamStateSpace, ModelError> {
    if assignment.is_empty() {
        return Err(ModelError::Dimension("at least one agent required".into()));
    }
    let aug = &plant.aug;
    let parts: Vec<&Realization> = assignment
        .iter()
        .map(|&k| aug.realization(k))
        .collect::<Result<_, _>>()?;
    let pick = |f: fn(&Realization) -> &DMatrix<f64>| -> DMatrix<f64> {
        linalg::blkdiag(&parts.iter().map(|r| f(r)).collect::<Vec<_>>())
    };
    let realization = Realization::new(pick(|r| &r.a), pick(|r| &r.b), pick(|r| &r.c), pick(|r| &r.d));
    let point: Vec<f64> = assignment
        .iter()
        .flat_map(|&k| aug.grid().points()[k].iter().copied())
        .collect();
    ParamStateSpace::new(aug.d() * assignment.len(), ParamGrid::single(point)?, vec![realization])
}

/// Ideal position tracking `y = q` in `d` dimensions: no vehicle states, so
/// the augmented plant is the pure double integrator `q̈ = −k_d q̇ − k_p u`.
pub fn double_integrator(d: usize) -> ParamStateSpace {
    let mut feed = DMatrix::zeros(d, 2 * d);
    feed.view_mut((0, 0), (d, d)).fill_with_identity();
    ParamStateSpace::lti(
        d,
        Realization::new(DMatrix::zeros(0, 0), DMatrix::zeros(0, 2 * d), DMatrix::zeros(d, 0), feed),
    )
    .expect("double integrator dimensions are consistent")
}

/// One-dimensional point mass under PD tracking,
/// `ẋ = v, v̇ = k_x (q − x) + k_v (p − v), y = x`.
pub fn tracking_loop(k_x: f64, k_v: f64) -> ParamStateSpace {
    ParamStateSpace::lti(
        1,
        Realization::new(
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -k_x, -k_v]),
            DMatrix::from_row_slice(2, 2, &[0.0, 0.0, k_x, k_v]),
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            DMatrix::zeros(1, 2),
        ),
    )
    .expect("tracking loop dimensions are consistent")
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    n_x: usize,
    n_u: usize,
    n_y: usize,
    d: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
    axes: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scheduling: Option<Vec<usize>>,
    realization: Vec<RealizationFile>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RealizationFile {
    point: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
    d: Vec<f64>,
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().iter().copied().collect()
}

fn from_row_major(rows: usize, cols: usize, data: &[f64], name: &str) -> Result<DMatrix<f64>, ModelError> {
    if data.len() != rows * cols {
        return Err(ModelError::Format(format!(
            "{name} has {} entries, expected {rows}x{cols}",
            data.len()
        )));
    }
    Ok(DMatrix::from_row_slice(rows, cols, data))
}

impl ParamStateSpace {
    /// Plain-text (TOML) model file. Floats are written in shortest
    /// round-trip form, so reading the file back is bit-exact.
    pub fn to_model_string(&self) -> String {
        let file = ModelFile {
            n_x: self.n_x,
            n_u: self.n_u,
            n_y: self.n_y,
            d: self.d,
            lower: self.grid.lower.clone(),
            upper: self.grid.upper.clone(),
            axes: self.grid.axes.clone(),
            scheduling: self.scheduling.as_ref().map(|s| s.state_index.clone()),
            realization: self
                .realizations
                .iter()
                .zip(self.grid.points())
                .map(|(r, p)| RealizationFile {
                    point: p.clone(),
                    a: row_major(&r.a),
                    b: row_major(&r.b),
                    c: row_major(&r.c),
                    d: row_major(&r.d),
                })
                .collect(),
        };
        toml::to_string(&file).expect("model file serializes")
    }

    pub fn from_model_str(text: &str) -> Result<Self, ModelError> {
        let file: ModelFile = toml::from_str(text).map_err(|e| ModelError::Format(e.to_string()))?;
        let grid = if file.axes.is_empty() {
            ParamGrid::lti()
        } else {
            ParamGrid::from_axes(file.lower, file.upper, file.axes)?
        };
        if file.realization.len() != grid.len() {
            return Err(ModelError::Format(format!(
                "{} realizations for {} grid points",
                file.realization.len(),
                grid.len()
            )));
        }
        let mut realizations = Vec::with_capacity(grid.len());
        for (r, p) in file.realization.iter().zip(grid.points()) {
            if &r.point != p {
                return Err(ModelError::Format(format!("realization point {:?} out of grid order", r.point)));
            }
            realizations.push(Realization::new(
                from_row_major(file.n_x, file.n_x, &r.a, "a")?,
                from_row_major(file.n_x, file.n_u, &r.b, "b")?,
                from_row_major(file.n_y, file.n_x, &r.c, "c")?,
                from_row_major(file.n_y, file.n_u, &r.d, "d")?,
            ));
        }
        let model = Self::new(file.d, grid, realizations)?;
        match file.scheduling {
            Some(idx) => model.with_scheduling(Scheduling { state_index: idx }),
            None => Ok(model),
        }
    }
}
