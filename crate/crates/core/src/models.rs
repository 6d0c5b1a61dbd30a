//! Signal–observation models and the augmented system built from them.
//!
//! The base model is
//!
//! ```text
//! X_t = X_0 + ∫_0^t a(X_s) ds + sigma0 W_t
//! Z_t = ∫_0^t h(X_s) ds + N_t
//! ```
//!
//! with `X_0` correlated to `N` through a [`CorrelationSpec`]. Filtering
//! works on the augmented state `U = (X, Xbar, N)` of dimension `2m + n`,
//! where `Xbar_t = X_0 + ∫_0^t p(s) N_s ds`; in those coordinates the
//! system is driven by the transformed noise and has coefficients
//!
//! ```text
//! b(U_t) = ( a(X_t), p(t) N_t, g'(t) Xbar_t + r(t) N_t )
//! sigma  = ( sigma0, 0, 0 )        c = ( 0, 0, I_n )
//! k(U_t) = h(X_t) + g'(t) Xbar_t + r(t) N_t
//! ```
//!
//! The linear builder additionally exposes `b` and `k` as matrices so the
//! Riccati machinery can run on them; the nonlinear builder shares the same
//! representation through closures. Time-dependent entries are tabulated on
//! the grid once and never re-evaluated, for reproducibility.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde_json::Value;

use crate::corrkernel::{
    CorrelationSpec, KernelRegistry, KernelTable, PolyKernel, RampKernel,
};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::serial::{mat_from_rows, rows_from_json, vec_from_json};

/// Time-dependent matrix coefficient: a constant or an evaluator.
#[derive(Clone)]
pub enum Coeff {
    Const(DMatrix<f64>),
    Fn(Arc<dyn Fn(f64) -> DMatrix<f64> + Send + Sync>),
}

impl Coeff {
    pub fn at(&self, t: f64) -> DMatrix<f64> {
        match self {
            Coeff::Const(m) => m.clone(),
            Coeff::Fn(f) => f(t),
        }
    }

    pub fn constant(m: DMatrix<f64>) -> Self {
        Coeff::Const(m)
    }
}

/// Linear model `dX = a(t) X dt + sigma0 dW`, `dZ = h(t) X dt + dN`.
#[derive(Clone)]
pub struct LinearModel {
    pub a: Coeff,
    pub sigma0: DMatrix<f64>,
    pub h: Coeff,
    pub corr: CorrelationSpec,
    pub init_mean: DVector<f64>,
}

impl LinearModel {
    pub fn validate(&self) -> Result<()> {
        let m = self.corr.dim_signal();
        let n = self.corr.dim_obs();
        let a0 = self.a.at(0.0);
        if a0.nrows() != m || a0.ncols() != m {
            return Err(Error::DimensionMismatch(format!(
                "a must be {m}x{m}, got {}x{}",
                a0.nrows(),
                a0.ncols()
            )));
        }
        let h0 = self.h.at(0.0);
        if h0.nrows() != n || h0.ncols() != m {
            return Err(Error::DimensionMismatch(format!(
                "h must be {n}x{m}, got {}x{}",
                h0.nrows(),
                h0.ncols()
            )));
        }
        if self.sigma0.nrows() != m {
            return Err(Error::DimensionMismatch(format!(
                "sigma0 must have {m} rows, got {}",
                self.sigma0.nrows()
            )));
        }
        if self.init_mean.len() != m {
            return Err(Error::DimensionMismatch(format!(
                "init_mean must have length {m}, got {}",
                self.init_mean.len()
            )));
        }
        Ok(())
    }

    pub fn dim_signal(&self) -> usize {
        self.corr.dim_signal()
    }
    pub fn dim_obs(&self) -> usize {
        self.corr.dim_obs()
    }
    pub fn dim_noise(&self) -> usize {
        self.sigma0.ncols()
    }
    pub fn horizon(&self) -> f64 {
        self.corr.horizon()
    }

    /// Same model with the correlation dropped (`rho ≡ 0`, prior covariance
    /// unchanged): what a filter that ignores the anticipation assumes.
    pub fn decorrelated(&self) -> Result<LinearModel> {
        let corr = CorrelationSpec::uncorrelated(
            self.corr.sigma0_cov().clone(),
            self.corr.dim_obs(),
            self.corr.horizon(),
        )?;
        Ok(LinearModel {
            a: self.a.clone(),
            sigma0: self.sigma0.clone(),
            h: self.h.clone(),
            corr,
            init_mean: self.init_mean.clone(),
        })
    }
}

/// Nonlinear model `dX = a(X) dt + dW`, `dZ = h(X) dt + dN` (unit signal
/// noise coefficient; use the linear model when `sigma0` matters).
#[derive(Clone)]
pub struct NonlinearModel {
    pub drift_a: Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>,
    pub obs_h: Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>,
    pub corr: CorrelationSpec,
    pub init_mean: DVector<f64>,
    /// User-supplied Lipschitz estimate for step-size guidance.
    pub lipschitz_hint: f64,
}

impl NonlinearModel {
    /// Wrap a constant-coefficient linear model.
    pub fn from_linear(model: &LinearModel) -> NonlinearModel {
        let a = model.a.at(0.0);
        let h = model.h.at(0.0);
        let lipschitz_hint = a.norm().max(h.norm());
        NonlinearModel {
            drift_a: Arc::new(move |x| &a * x),
            obs_h: Arc::new(move |x| &h * x),
            corr: model.corr.clone(),
            init_mean: model.init_mean.clone(),
            lipschitz_hint,
        }
    }

    pub fn dim_signal(&self) -> usize {
        self.corr.dim_signal()
    }
    pub fn dim_obs(&self) -> usize {
        self.corr.dim_obs()
    }
}

/// Coefficients of the augmented system in `U = (X, Xbar, N)`.
///
/// The enlargement transform is built for a *centered* initial condition, so
/// when `E[X_0] != 0` the drift and observation carry the affine correction
/// `-g'(t) E[X_0]` (the `Xbar` block keeps its uncentered meaning
/// `Xbar_0 = X_0`). For zero-mean models the correction vanishes and the
/// system is exactly the linear block form.
pub struct AugmentedCoefficients {
    m: usize,
    n: usize,
    l: usize,
    pub grid: TimeGrid,
    pub table: Arc<KernelTable>,
    /// `(2m+n) x l` block column `(sigma0; 0; 0)`.
    pub sigma: DMatrix<f64>,
    /// `(2m+n) x n` block column `(0; 0; I_n)`.
    pub c: DMatrix<f64>,
    /// `E[X_0]`, entering the affine correction.
    pub init_mean: DVector<f64>,
    kind: AugKind,
}

enum AugKind {
    Linear {
        b_cells: Vec<DMatrix<f64>>,
        k_cells: Vec<DMatrix<f64>>,
    },
    Nonlinear {
        drift_a: Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>,
        obs_h: Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>,
    },
}

impl AugmentedCoefficients {
    pub fn dim_u(&self) -> usize {
        2 * self.m + self.n
    }
    pub fn dim_signal(&self) -> usize {
        self.m
    }
    pub fn dim_obs(&self) -> usize {
        self.n
    }
    pub fn dim_noise(&self) -> usize {
        self.l
    }

    /// Affine drift correction `beta = (0, 0, -g'_cell E[X_0])` for one grid
    /// cell, or `None` when it vanishes identically.
    pub fn drift_offset(&self, cell: usize) -> Option<DVector<f64>> {
        if self.init_mean.norm() == 0.0 {
            return None;
        }
        let gp_mu = self.table.cell_g_prime(cell) * &self.init_mean;
        let mut out = DVector::zeros(self.dim_u());
        out.rows_mut(2 * self.m, self.n).copy_from(&(-&gp_mu));
        Some(out)
    }

    /// Affine observation correction `kappa = -g'_cell E[X_0]`.
    pub fn obs_offset(&self, cell: usize) -> Option<DVector<f64>> {
        if self.init_mean.norm() == 0.0 {
            return None;
        }
        Some(-(self.table.cell_g_prime(cell) * &self.init_mean))
    }

    /// Drift `b` on grid cell `cell` at state `u`, including the affine
    /// mean correction.
    pub fn drift(&self, cell: usize, u: &DVector<f64>) -> DVector<f64> {
        match &self.kind {
            AugKind::Linear { b_cells, .. } => {
                let mut out = &b_cells[cell] * u;
                if let Some(beta) = self.drift_offset(cell) {
                    out += beta;
                }
                out
            }
            AugKind::Nonlinear { drift_a, .. } => {
                let (m, n) = (self.m, self.n);
                let x = u.rows(0, m).into_owned();
                let xbar_centered = u.rows(m, m) - &self.init_mean;
                let nu = u.rows(2 * m, n).into_owned();
                let mut out = DVector::zeros(2 * m + n);
                out.rows_mut(0, m).copy_from(&drift_a(&x));
                out.rows_mut(m, m)
                    .copy_from(&(self.table.cell_p(cell) * &nu));
                let third =
                    self.table.cell_g_prime(cell) * xbar_centered + self.table.cell_r(cell) * &nu;
                out.rows_mut(2 * m, n).copy_from(&third);
                out
            }
        }
    }

    /// Allocation-light variants for hot loops (the particle filter calls
    /// these once per particle per step).
    pub fn drift_into(&self, cell: usize, u: &DVector<f64>, out: &mut DVector<f64>) {
        match &self.kind {
            AugKind::Linear { b_cells, .. } => {
                out.gemv(1.0, &b_cells[cell], u, 0.0);
                if let Some(beta) = self.drift_offset(cell) {
                    *out += beta;
                }
            }
            AugKind::Nonlinear { drift_a, .. } => {
                let (m, n) = (self.m, self.n);
                let x = u.rows(0, m).into_owned();
                out.rows_mut(0, m).copy_from(&drift_a(&x));
                let p = self.table.cell_p(cell);
                let gp = self.table.cell_g_prime(cell);
                let r = self.table.cell_r(cell);
                for i in 0..m {
                    let mut acc = 0.0;
                    for j in 0..n {
                        acc += p[(i, j)] * u[2 * m + j];
                    }
                    out[m + i] = acc;
                }
                for i in 0..n {
                    let mut acc = 0.0;
                    for j in 0..m {
                        acc += gp[(i, j)] * (u[m + j] - self.init_mean[j]);
                    }
                    for j in 0..n {
                        acc += r[(i, j)] * u[2 * m + j];
                    }
                    out[2 * m + i] = acc;
                }
            }
        }
    }

    pub fn obs_into(&self, cell: usize, u: &DVector<f64>, out: &mut DVector<f64>) {
        match &self.kind {
            AugKind::Linear { k_cells, .. } => {
                out.gemv(1.0, &k_cells[cell], u, 0.0);
                if let Some(kappa) = self.obs_offset(cell) {
                    *out += kappa;
                }
            }
            AugKind::Nonlinear { obs_h, .. } => {
                let (m, n) = (self.m, self.n);
                let x = u.rows(0, m).into_owned();
                out.copy_from(&obs_h(&x));
                let gp = self.table.cell_g_prime(cell);
                let r = self.table.cell_r(cell);
                for i in 0..n {
                    let mut acc = 0.0;
                    for j in 0..m {
                        acc += gp[(i, j)] * (u[m + j] - self.init_mean[j]);
                    }
                    for j in 0..n {
                        acc += r[(i, j)] * u[2 * m + j];
                    }
                    out[i] += acc;
                }
            }
        }
    }

    /// Observation drift `k` on grid cell `cell` at state `u`, including the
    /// affine mean correction.
    pub fn obs(&self, cell: usize, u: &DVector<f64>) -> DVector<f64> {
        match &self.kind {
            AugKind::Linear { k_cells, .. } => {
                let mut out = &k_cells[cell] * u;
                if let Some(kappa) = self.obs_offset(cell) {
                    out += kappa;
                }
                out
            }
            AugKind::Nonlinear { obs_h, .. } => {
                let (m, n) = (self.m, self.n);
                let x = u.rows(0, m).into_owned();
                let xbar_centered = u.rows(m, m) - &self.init_mean;
                let nu = u.rows(2 * m, n).into_owned();
                obs_h(&x)
                    + self.table.cell_g_prime(cell) * xbar_centered
                    + self.table.cell_r(cell) * nu
            }
        }
    }

    /// Drift matrix on a cell; available for linear builds only.
    pub fn b_matrix(&self, cell: usize) -> Option<&DMatrix<f64>> {
        match &self.kind {
            AugKind::Linear { b_cells, .. } => Some(&b_cells[cell]),
            AugKind::Nonlinear { .. } => None,
        }
    }

    /// Observation matrix on a cell; available for linear builds only.
    pub fn k_matrix(&self, cell: usize) -> Option<&DMatrix<f64>> {
        match &self.kind {
            AugKind::Linear { k_cells, .. } => Some(&k_cells[cell]),
            AugKind::Nonlinear { .. } => None,
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(self.kind, AugKind::Linear { .. })
    }
}

fn augmented_sigma_c(m: usize, n: usize, sigma0: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let l = sigma0.ncols();
    let dim = 2 * m + n;
    let mut sigma = DMatrix::zeros(dim, l);
    sigma.view_mut((0, 0), (m, l)).copy_from(sigma0);
    let mut c = DMatrix::zeros(dim, n);
    c.view_mut((2 * m, 0), (n, n))
        .copy_from(&DMatrix::identity(n, n));
    (sigma, c)
}

/// Assemble the augmented linear system on `grid`: one block matrix pair per
/// grid cell,
///
/// ```text
/// b = [ a     0     0  ]        k = [ h  g'  r ]
///     [ 0     0     p  ]
///     [ 0     g'    r  ]
/// ```
///
/// where `a`, `h` are sampled at the cell's left node (the Euler tabulation
/// convention) and the kernel blocks `g'`, `r`, `p` are exact cell averages:
/// near the support endpoint of a strong correlation the kernels concentrate
/// in a boundary layer far below the grid scale, and point samples would
/// lose that coefficient mass entirely.
pub fn build_augmented_linear(
    model: &LinearModel,
    grid: &TimeGrid,
) -> Result<AugmentedCoefficients> {
    model.validate()?;
    let table = Arc::new(KernelTable::build(&model.corr, grid)?);
    let (m, n) = (model.dim_signal(), model.dim_obs());
    let dim = 2 * m + n;
    let mut b_cells = Vec::with_capacity(grid.steps());
    let mut k_cells = Vec::with_capacity(grid.steps());
    for cell in 0..grid.steps() {
        let t = grid.time(cell);
        let a_t = model.a.at(t);
        let h_t = model.h.at(t);
        let gp = table.cell_g_prime(cell);
        let r = table.cell_r(cell);
        let p = table.cell_p(cell);

        let mut b = DMatrix::zeros(dim, dim);
        b.view_mut((0, 0), (m, m)).copy_from(&a_t);
        b.view_mut((m, 2 * m), (m, n)).copy_from(p);
        b.view_mut((2 * m, m), (n, m)).copy_from(gp);
        b.view_mut((2 * m, 2 * m), (n, n)).copy_from(r);
        b_cells.push(b);

        let mut k = DMatrix::zeros(n, dim);
        k.view_mut((0, 0), (n, m)).copy_from(&h_t);
        k.view_mut((0, m), (n, m)).copy_from(gp);
        k.view_mut((0, 2 * m), (n, n)).copy_from(r);
        k_cells.push(k);
    }
    let (sigma, c) = augmented_sigma_c(m, n, &model.sigma0);
    Ok(AugmentedCoefficients {
        m,
        n,
        l: model.dim_noise(),
        grid: *grid,
        table,
        sigma,
        c,
        init_mean: model.init_mean.clone(),
        kind: AugKind::Linear { b_cells, k_cells },
    })
}

/// Assemble the augmented nonlinear system on `grid`; drift and observation
/// stay closures over the tabulated kernels.
pub fn build_augmented_nonlinear(
    model: &NonlinearModel,
    grid: &TimeGrid,
) -> Result<AugmentedCoefficients> {
    let table = Arc::new(KernelTable::build(&model.corr, grid)?);
    let (m, n) = (model.dim_signal(), model.dim_obs());
    let (sigma, c) = augmented_sigma_c(m, n, &DMatrix::identity(m, m));
    Ok(AugmentedCoefficients {
        m,
        n,
        l: m,
        grid: *grid,
        table,
        sigma,
        c,
        init_mean: model.init_mean.clone(),
        kind: AugKind::Nonlinear {
            drift_a: model.drift_a.clone(),
            obs_h: model.obs_h.clone(),
        },
    })
}

/// Auxiliary path `Xbar_t = X_0 + ∫_0^t p(s) N_s ds` (cumulative trapezoid).
pub fn xbar_path(
    corr: &CorrelationSpec,
    grid: &TimeGrid,
    n_path: &[DVector<f64>],
    x0: &DVector<f64>,
) -> Result<Vec<DVector<f64>>> {
    if n_path.len() != grid.nodes() {
        return Err(Error::GridMismatch(format!(
            "N path has {} nodes, grid has {}",
            n_path.len(),
            grid.nodes()
        )));
    }
    let dt = grid.dt();
    let mut out = Vec::with_capacity(grid.nodes());
    out.push(x0.clone());
    let mut acc = DVector::zeros(corr.dim_signal());
    let mut prev = corr.rho_second(grid.time(0)).transpose() * &n_path[0];
    for k in 0..grid.steps() {
        let next = corr.rho_second(grid.time(k + 1)).transpose() * &n_path[k + 1];
        acc += 0.5 * dt * (&prev + &next);
        out.push(x0 + &acc);
        prev = next;
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Built-in scenarios
// ---------------------------------------------------------------------------

/// 6x2 selector mapping the two noise components onto the range / bearing
/// blocks of the radar state (range, range rate, maneuver 1, bearing,
/// bearing rate, maneuver 2).
pub fn radar_selector() -> DMatrix<f64> {
    DMatrix::from_row_slice(
        6,
        2,
        &[
            1.0, 0.0, //
            0.0, 0.0, //
            1.0, 0.0, //
            0.0, 1.0, //
            0.0, 0.0, //
            0.0, 1.0,
        ],
    )
}

/// Radar correlation: `X_0 = xi + gamma M N_1` gives `rho(t) = gamma (t ∧ 1) M^T`
/// and `Cov(X_0) = I_6 + gamma^2 M M^T`.
pub fn radar_correlation(gamma: f64, horizon: f64) -> CorrelationSpec {
    let m_sel = radar_selector();
    let sigma = DMatrix::identity(6, 6) + gamma * gamma * (&m_sel * m_sel.transpose());
    if gamma == 0.0 {
        return CorrelationSpec::uncorrelated(sigma, 2, horizon).expect("valid correlation structure");
    }
    CorrelationSpec::new(
        sigma,
        Arc::new(RampKernel {
            coeff: gamma * m_sel.transpose(),
            t0: 1.0,
        }),
        horizon,
    )
    .expect("valid correlation structure")
}

pub const RADAR_KAPPA: f64 = 0.5;
pub const RADAR_SIGMA1: f64 = 103.0 / 3.0;
pub const RADAR_SIGMA2: f64 = 1.3;
pub const RADAR_SIGMA_THETA: f64 = 0.017;

/// The radar-tracking model: 6-state range/bearing dynamics with
/// maneuver-correlated noise, range and bearing observed through `1/sigma_theta`,
/// and an initial condition anticipating the observation noise at strength
/// `gamma`.
pub fn radar_model(gamma: f64) -> LinearModel {
    radar_model_with_horizon(gamma, 1.0)
}

pub fn radar_model_with_horizon(gamma: f64, horizon: f64) -> LinearModel {
    let k1 = RADAR_KAPPA - 1.0;
    let a = DMatrix::from_row_slice(
        6,
        6,
        &[
            0.0, 1.0, 0.0, 0.0, 0.0, 0.0, //
            0.0, 0.0, 1.0, 0.0, 0.0, 0.0, //
            0.0, 0.0, k1, 0.0, 0.0, 0.0, //
            0.0, 0.0, 0.0, 0.0, 1.0, 0.0, //
            0.0, 0.0, 0.0, 0.0, 0.0, 1.0, //
            0.0, 0.0, 0.0, 0.0, 0.0, k1,
        ],
    );
    let mut sigma0 = DMatrix::zeros(6, 2);
    sigma0[(2, 0)] = RADAR_SIGMA1;
    sigma0[(5, 1)] = RADAR_SIGMA2;
    let mut h = DMatrix::zeros(2, 6);
    h[(0, 0)] = 1.0 / RADAR_SIGMA_THETA;
    h[(1, 3)] = 1.0 / RADAR_SIGMA_THETA;
    LinearModel {
        a: Coeff::constant(a),
        sigma0,
        h: Coeff::constant(h),
        corr: radar_correlation(gamma, horizon),
        init_mean: DVector::zeros(6),
    }
}

/// Scalar demonstration model: `a = 0`, `h = 1`, `sigma0 = 1`, `Sigma = 1`,
/// `rho(t) = t` on a 0.9 horizon (the Gram matrix hits zero at `t = 1`).
pub fn scalar_demo_model() -> LinearModel {
    let corr = CorrelationSpec::new(
        DMatrix::from_element(1, 1, 1.0),
        Arc::new(PolyKernel::linear(DMatrix::from_element(1, 1, 1.0))),
        0.9,
    )
    .expect("valid correlation structure");
    LinearModel {
        a: Coeff::constant(DMatrix::zeros(1, 1)),
        sigma0: DMatrix::from_element(1, 1, 1.0),
        h: Coeff::constant(DMatrix::from_element(1, 1, 1.0)),
        corr,
        init_mean: DVector::from_element(1, 1.0),
    }
}

/// Scalar model with a smooth compactly supported correlation: `a = 0`,
/// `h = 1`, `sigma0 = 1`, `Sigma = 1`, `rho'` a bump on `[0, 0.5]` carrying
/// `∫ rho'^2 = 0.8` of the unit prior variance. After `t = 0.5` the
/// anticipative coefficients vanish and the filter relaxes to the classical
/// one, which makes this the long-horizon stability scenario.
pub fn scalar_bump_model(horizon: f64) -> LinearModel {
    let corr = CorrelationSpec::new(
        DMatrix::from_element(1, 1, 1.0),
        Arc::new(
            crate::corrkernel::BumpKernel::new(
                DMatrix::from_element(1, 1, 0.8_f64.sqrt()),
                0.5,
            )
            .expect("valid bump"),
        ),
        horizon,
    )
    .expect("valid correlation structure");
    LinearModel {
        a: Coeff::constant(DMatrix::zeros(1, 1)),
        sigma0: DMatrix::from_element(1, 1, 1.0),
        h: Coeff::constant(DMatrix::from_element(1, 1, 1.0)),
        corr,
        init_mean: DVector::zeros(1),
    }
}

/// Parameters a named scenario accepts.
#[derive(Debug, Clone, Copy)]
pub struct ScenarioParams {
    pub gamma: f64,
    pub horizon: Option<f64>,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        ScenarioParams {
            gamma: 1.0,
            horizon: None,
        }
    }
}

type ScenarioBuilder = fn(&ScenarioParams) -> LinearModel;

/// Built-in scenarios addressable by string id.
pub struct ScenarioRegistry {
    builders: BTreeMap<&'static str, ScenarioBuilder>,
}

impl ScenarioRegistry {
    pub fn with_builtins() -> Self {
        let mut builders: BTreeMap<&'static str, ScenarioBuilder> = BTreeMap::new();
        builders.insert("radar", |p| {
            radar_model_with_horizon(p.gamma, p.horizon.unwrap_or(1.0))
        });
        builders.insert("scalar-demo", |_| scalar_demo_model());
        builders.insert("scalar-bump", |p| {
            scalar_bump_model(p.horizon.unwrap_or(20.0))
        });
        ScenarioRegistry { builders }
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.builders.keys().copied().collect()
    }

    pub fn build(&self, name: &str, params: &ScenarioParams) -> Result<LinearModel> {
        let builder = self.builders.get(name).ok_or_else(|| Error::UnknownName {
            kind: "scenario",
            name: name.to_string(),
            known: self.names().join(", "),
        })?;
        Ok(builder(params))
    }
}

/// Parse a linear model from its JSON description:
/// `{"type": "linear", "a": [[..]], "h": [[..]], "sigma0": [[..]],
///   "init_mean": [..], "corr": {"sigma": [[..]], "horizon": T, "kernel": {..}}}`.
pub fn linear_model_from_json(desc: &Value) -> Result<LinearModel> {
    let ty = desc.get("type").and_then(Value::as_str).unwrap_or("linear");
    if ty != "linear" {
        return Err(Error::InvalidConfig(format!(
            "unsupported model type '{ty}' (only 'linear' models load from JSON)"
        )));
    }
    let get = |field: &str| -> Result<&Value> {
        desc.get(field)
            .ok_or_else(|| Error::InvalidConfig(format!("model description missing '{field}'")))
    };
    let a = mat_from_rows(&rows_from_json(get("a")?)?)?;
    let h = mat_from_rows(&rows_from_json(get("h")?)?)?;
    let sigma0 = mat_from_rows(&rows_from_json(get("sigma0")?)?)?;
    let corr_desc = get("corr")?;
    let sigma = mat_from_rows(&rows_from_json(
        corr_desc
            .get("sigma")
            .ok_or_else(|| Error::InvalidConfig("corr description missing 'sigma'".into()))?,
    )?)?;
    let horizon = corr_desc
        .get("horizon")
        .and_then(Value::as_f64)
        .ok_or_else(|| Error::InvalidConfig("corr description missing 'horizon'".into()))?;
    let kernel = KernelRegistry::with_builtins().build(
        corr_desc
            .get("kernel")
            .ok_or_else(|| Error::InvalidConfig("corr description missing 'kernel'".into()))?,
    )?;
    let corr = CorrelationSpec::new(sigma, kernel, horizon)?;
    let init_mean = match desc.get("init_mean") {
        Some(v) => vec_from_json(v)?,
        None => DVector::zeros(corr.dim_signal()),
    };
    let model = LinearModel {
        a: Coeff::constant(a),
        sigma0,
        h: Coeff::constant(h),
        corr,
        init_mean,
    };
    model.validate()?;
    Ok(model)
}
