//! Deterministic coefficients of the enlargement-of-filtration transform.
//!
//! Given the correlation `rho(t) = E[N_t X_0^T]` between the observation
//! noise `N` and the initial condition `X_0` (with `Cov(X_0) = Sigma`), the
//! noise can be turned into a Brownian motion of the enlarged filtration by
//! subtracting a drift built from a handful of deterministic kernels:
//!
//! ```text
//! Gram(t) = Sigma - ∫_0^t rho'(u)^T rho'(u) du        (residual covariance)
//! g'(t)   = rho'(t) Gram(t)^{-1},  g(0) = 0           (while rho' != 0)
//! p(s)    = rho''(s)^T
//! q(s)    = -g(s) rho''(s)^T - g'(s) rho'(s)^T
//! lambda(t, s) = g(t) p(s) + q(s)
//! r(t)    = lambda(t, t) = -g'(t) rho'(t)^T
//! N~_t    = N_t - ∫_0^t lambda(t, u) N_u du - g(t) X_0
//! ```
//!
//! All integrals are composite trapezoid sums on the caller's uniform grid,
//! matching the Euler discretization used downstream; the cumulative values
//! are tabulated per grid node in a [`KernelTable`]. Kernels with a jump in
//! `rho'` (the ramp family) are evaluated one-sided, and integration stops
//! contributing exactly at the support endpoint, so a grid node placed at
//! the kink keeps the quadrature second order.

pub mod families;

use std::sync::Arc;

use nalgebra::DMatrix;
use serde_json::json;

use crate::error::{tol, Error, Result};
use crate::grid::TimeGrid;
use crate::linalg;
pub use families::{
    BumpKernel, CorrelationKernel, CustomKernel, KernelRegistry, PolyKernel, RampKernel,
    ZeroKernel,
};

/// Correlation structure between the initial condition and the observation
/// noise: dimensions, `Cov(X_0)`, the kernel `rho` and the horizon.
#[derive(Clone)]
pub struct CorrelationSpec {
    dim_signal: usize,
    dim_obs: usize,
    sigma0_cov: DMatrix<f64>,
    kernel: Arc<dyn CorrelationKernel>,
    horizon: f64,
}

impl CorrelationSpec {
    pub fn new(
        sigma0_cov: DMatrix<f64>,
        kernel: Arc<dyn CorrelationKernel>,
        horizon: f64,
    ) -> Result<Self> {
        let m = kernel.dim_signal();
        let n = kernel.dim_obs();
        let _ = n;
        if sigma0_cov.nrows() != m || sigma0_cov.ncols() != m {
            return Err(Error::DimensionMismatch(format!(
                "Sigma must be {m}x{m}, got {}x{}",
                sigma0_cov.nrows(),
                sigma0_cov.ncols()
            )));
        }
        if !(horizon > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        if linalg::frob_diff(&sigma0_cov, &sigma0_cov.transpose()) > tol::RESIDUAL {
            return Err(Error::InvalidConfig("Sigma must be symmetric".into()));
        }
        let min_eig = linalg::min_eigenvalue(&sigma0_cov);
        if min_eig < -tol::PSD {
            return Err(Error::NotPsd { min_eig });
        }
        if kernel.rho(0.0).norm() > tol::ZERO {
            return Err(Error::InvalidConfig("rho(0) must vanish".into()));
        }
        Ok(CorrelationSpec {
            dim_signal: m,
            dim_obs: n,
            sigma0_cov,
            kernel,
            horizon,
        })
    }

    /// Classical spec with `rho ≡ 0`.
    pub fn uncorrelated(sigma0_cov: DMatrix<f64>, dim_obs: usize, horizon: f64) -> Result<Self> {
        let m = sigma0_cov.nrows();
        CorrelationSpec::new(
            sigma0_cov,
            Arc::new(ZeroKernel {
                dim_obs,
                dim_signal: m,
            }),
            horizon,
        )
    }

    pub fn dim_signal(&self) -> usize {
        self.dim_signal
    }
    pub fn dim_obs(&self) -> usize {
        self.dim_obs
    }
    pub fn horizon(&self) -> f64 {
        self.horizon
    }
    pub fn sigma0_cov(&self) -> &DMatrix<f64> {
        &self.sigma0_cov
    }
    pub fn kernel(&self) -> &Arc<dyn CorrelationKernel> {
        &self.kernel
    }
    pub fn rho(&self, t: f64) -> DMatrix<f64> {
        self.kernel.rho(t)
    }
    pub fn rho_prime(&self, t: f64) -> DMatrix<f64> {
        self.kernel.rho_prime(t)
    }
    pub fn rho_second(&self, t: f64) -> DMatrix<f64> {
        self.kernel.rho_second(t)
    }

    pub fn is_zero(&self) -> bool {
        self.kernel.support_end() == Some(0.0)
    }

    /// Finite-difference consistency of the supplied derivatives, sampled
    /// away from kink points. Used by model validation and tests.
    pub fn validate_smoothness(&self, samples: usize) -> Result<()> {
        let eps = 1e-6 * self.horizon;
        let kink = self.kernel.support_end().unwrap_or(f64::INFINITY);
        for i in 1..samples {
            let t = self.horizon * i as f64 / samples as f64;
            if (t - kink).abs() < 10.0 * eps {
                continue;
            }
            let fd1 = (self.rho(t + eps) - self.rho(t - eps)) / (2.0 * eps);
            let d1 = self.rho_prime(t);
            let scale = 1.0 + d1.norm();
            if (fd1 - &d1).norm() > 1e-4 * scale {
                return Err(Error::InvalidConfig(format!(
                    "rho' inconsistent with rho at t = {t}"
                )));
            }
            let fd2 = (self.rho_prime(t + eps) - self.rho_prime(t - eps)) / (2.0 * eps);
            let d2 = self.rho_second(t);
            if (fd2 - &d2).norm() > 1e-3 * (1.0 + d2.norm()) {
                return Err(Error::InvalidConfig(format!(
                    "rho'' inconsistent with rho' at t = {t}"
                )));
            }
        }
        Ok(())
    }
}

/// Residual covariance `Sigma - ∫_0^t rho'(u)^T rho'(u) du` by composite
/// trapezoid quadrature on `grid`, symmetrized.
pub fn gram(spec: &CorrelationSpec, grid: &TimeGrid, t: f64) -> Result<DMatrix<f64>> {
    if !(0.0..=spec.horizon + 1e-12).contains(&t) || !grid.contains(t) {
        return Err(Error::QuadratureDomain {
            t,
            horizon: spec.horizon.min(grid.horizon()),
        });
    }
    let dt = grid.dt();
    let cutoff = support_cutoff(spec, grid);
    let mut acc = DMatrix::zeros(spec.dim_signal, spec.dim_signal);
    let mut k = 0usize;
    let mut prev = integrand(spec, grid.time(0));
    while k + 1 <= grid.steps() && grid.time(k + 1) <= t + 1e-12 {
        let next = integrand(spec, grid.time(k + 1));
        if k < cutoff {
            acc += 0.5 * dt * (&prev + &next);
        }
        prev = next;
        k += 1;
        if k == grid.steps() {
            break;
        }
    }
    // Partial cell up to t itself.
    let t_k = grid.time(k);
    if t > t_k + 1e-12 && k < cutoff {
        let next = integrand(spec, t);
        acc += 0.5 * (t - t_k) * (&prev + &next);
    }
    Ok(linalg::symmetrized(&(spec.sigma0_cov.clone() - acc)))
}

fn integrand(spec: &CorrelationSpec, t: f64) -> DMatrix<f64> {
    let rp = spec.rho_prime(t);
    rp.transpose() * rp
}

/// First cell index at/after which `rho'` vanishes identically, i.e. cells
/// `[t_k, t_{k+1}]` with `k >= cutoff` contribute nothing to integrals of
/// `rho'`-derived quantities. `grid.steps()` when the support covers the
/// whole horizon.
fn support_cutoff(spec: &CorrelationSpec, grid: &TimeGrid) -> usize {
    match spec.kernel.support_end() {
        None => grid.steps(),
        Some(s_end) => {
            if s_end >= grid.horizon() - 1e-12 {
                grid.steps()
            } else {
                // First node with t_k >= s_end.
                let mut k = grid.nearest(s_end);
                while grid.time(k) < s_end - 1e-12 {
                    k += 1;
                }
                k
            }
        }
    }
}

/// Per-cell kernel integrals computed by refined trapezoid quadrature.
struct CellMass {
    /// `∫ rho'^T rho'` over the cell.
    d_consumed: DMatrix<f64>,
    /// `∫ g'`.
    d_g: DMatrix<f64>,
    /// `∫ -g' rho'^T`.
    int_r: DMatrix<f64>,
    /// `∫ rho''^T`.
    int_p: DMatrix<f64>,
    /// `∫ (-g rho''^T - g' rho'^T)`.
    int_q: DMatrix<f64>,
    /// `∫ rho''^T w(u)` with `w(u) = (u - t_k)/dt`: the first moment
    /// locating the mass inside the cell.
    mom_p: DMatrix<f64>,
    /// `∫ q w(u)`.
    mom_q: DMatrix<f64>,
}

/// Integrate the kernel quantities across `[t0, t1]` with `sub` trapezoid
/// sub-cells, starting from the running values `consumed_start`, `g_start`.
fn cell_quadrature(
    spec: &CorrelationSpec,
    t0: f64,
    t1: f64,
    cell_dt: f64,
    consumed_start: &DMatrix<f64>,
    g_start: &DMatrix<f64>,
    gram_scale: f64,
    sub: usize,
) -> Result<CellMass> {
    let m = spec.dim_signal;
    let n = spec.dim_obs;
    let h = (t1 - t0) / sub as f64;
    let mut consumed = consumed_start.clone();
    let mut g = g_start.clone();
    let mut d_consumed = DMatrix::zeros(m, m);
    let mut d_g = DMatrix::zeros(n, m);
    let mut int_r = DMatrix::zeros(n, n);
    let mut int_p = DMatrix::zeros(m, n);
    let mut int_q = DMatrix::zeros(n, n);
    let mut mom_p = DMatrix::zeros(m, n);
    let mut mom_q = DMatrix::zeros(n, n);

    let eval = |tau: f64, consumed: &DMatrix<f64>| -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let rp = spec.rho_prime(tau);
        let gp = if rp.norm() > tol::ZERO {
            let gram = linalg::symmetrized(&(&spec.sigma0_cov - consumed));
            // The expensive eigen-based condition check runs per node; here
            // a failed Cholesky is the singularity signal.
            match linalg::solve_right_spd(&gram, &rp) {
                Some(sol) => sol,
                None => {
                    let min_eig = linalg::min_eigenvalue(&gram);
                    let cond = gram_scale / min_eig.max(f64::MIN_POSITIVE);
                    return Err(Error::GramSingular { t: tau, cond });
                }
            }
        } else {
            DMatrix::zeros(n, m)
        };
        Ok((rp, gp))
    };

    let (mut rp_prev, mut gp_prev) = eval(t0, &consumed)?;
    let mut p_prev = spec.rho_second(t0).transpose();
    for i in 0..sub {
        let tau = t0 + (i + 1) as f64 * h;
        // Advance the consumed mass first so g' at tau uses Gram(tau).
        let rp_next = spec.rho_prime(tau);
        let f_prev = rp_prev.transpose() * &rp_prev;
        let f_next = rp_next.transpose() * &rp_next;
        let dc = 0.5 * h * (f_prev + f_next);
        consumed += &dc;
        d_consumed += &dc;
        let (_, gp_next) = eval(tau, &consumed)?;
        let p_next = spec.rho_second(tau).transpose();

        let dg = 0.5 * h * (&gp_prev + &gp_next);
        let r_prev = -(&gp_prev * rp_prev.transpose());
        let r_next = -(&gp_next * rp_next.transpose());
        int_r += 0.5 * h * (&r_prev + &r_next);
        int_p += 0.5 * h * (&p_prev + &p_next);
        let q_prev = -(&g * &p_prev) + &r_prev;
        let g_next = &g + &dg;
        let q_next = -(&g_next * &p_next) + &r_next;
        int_q += 0.5 * h * (&q_prev + &q_next);
        // First moments relative to the cell start, in units of the cell.
        let w_prev = (tau - h - t0) / cell_dt;
        let w_next = (tau - t0) / cell_dt;
        mom_p += 0.5 * h * (&p_prev * w_prev + &p_next * w_next);
        mom_q += 0.5 * h * (q_prev * w_prev + q_next * w_next);
        g = g_next;
        d_g += dg;

        rp_prev = rp_next;
        gp_prev = gp_next;
        p_prev = p_next;
    }
    Ok(CellMass {
        d_consumed,
        d_g,
        int_r,
        int_p,
        int_q,
        mom_p,
        mom_q,
    })
}

fn mass_dist(a: &CellMass, b: &CellMass) -> f64 {
    (&a.d_consumed - &b.d_consumed).norm()
        + (&a.d_g - &b.d_g).norm()
        + (&a.int_r - &b.int_r).norm()
        + (&a.int_p - &b.int_p).norm()
        + (&a.int_q - &b.int_q).norm()
        + (&a.mom_p - &b.mom_p).norm()
        + (&a.mom_q - &b.mom_q).norm()
}

fn mass_scale(a: &CellMass) -> f64 {
    a.d_consumed.norm() + a.d_g.norm() + a.int_r.norm() + a.int_p.norm() + a.int_q.norm()
}

/// Tabulated enlargement kernels on one grid: node values of `g`, `g'`, the
/// Gram matrix, `p`, `q`, `r`, plus exact per-cell averages of the
/// `rho'`-derived coefficients. The averages matter when the kernels have a
/// boundary layer near the support endpoint (strong anticipation): point
/// samples on the grid cannot represent the layer, while the cell masses,
/// computed by per-cell Richardson-refined quadrature, carry the full
/// information into the filter coefficients.
pub struct KernelTable {
    grid: TimeGrid,
    t0: f64,
    t0_idx: usize,
    g: Vec<DMatrix<f64>>,
    g_prime: Vec<DMatrix<f64>>,
    gram: Vec<DMatrix<f64>>,
    r: Vec<DMatrix<f64>>,
    p: Vec<DMatrix<f64>>,
    q: Vec<DMatrix<f64>>,
    // Per-cell averages and first moments (length = grid.steps()).
    cell_g_prime: Vec<DMatrix<f64>>,
    cell_r: Vec<DMatrix<f64>>,
    cell_p: Vec<DMatrix<f64>>,
    cell_q: Vec<DMatrix<f64>>,
    cell_p_mom: Vec<DMatrix<f64>>,
    cell_q_mom: Vec<DMatrix<f64>>,
}

impl KernelTable {
    /// Build the table for `spec` on `grid`. Fails with [`Error::GramSingular`]
    /// when `Sigma - ∫ rho'^T rho'` becomes numerically singular inside the
    /// support of `rho'`, which signals that `X_0` is measurable from the
    /// noise history and no enlargement drift exists.
    pub fn build(spec: &CorrelationSpec, grid: &TimeGrid) -> Result<Self> {
        if grid.horizon() > spec.horizon + 1e-9 {
            return Err(Error::QuadratureDomain {
                t: grid.horizon(),
                horizon: spec.horizon,
            });
        }
        let nodes = grid.nodes();
        let dt = grid.dt();
        let m = spec.dim_signal;
        let n = spec.dim_obs;
        let s_end = spec.kernel.support_end().unwrap_or(f64::INFINITY);

        let rho_prime: Vec<DMatrix<f64>> = grid.times().map(|t| spec.rho_prime(t)).collect();
        let p: Vec<DMatrix<f64>> = grid
            .times()
            .map(|t| spec.rho_second(t).transpose())
            .collect();

        // Support endpoint: largest node where rho' is non-zero.
        let t0_idx = (0..nodes)
            .rev()
            .find(|&k| rho_prime[k].norm() > tol::ZERO)
            .unwrap_or(0);
        let t0 = if rho_prime[t0_idx].norm() > tol::ZERO {
            grid.time(t0_idx)
        } else {
            0.0
        };

        let gram_scale = spec.sigma0_cov.norm().max(tol::ZERO);
        // Rough magnitude of the kernels, for the per-cell error target.
        let mass_scale_hint = (0..=8)
            .map(|i| spec.rho_prime(t0 * i as f64 / 8.0).norm())
            .fold(1.0_f64, f64::max);
        let zero_mass = |_: ()| CellMass {
            d_consumed: DMatrix::zeros(m, m),
            d_g: DMatrix::zeros(n, m),
            int_r: DMatrix::zeros(n, n),
            int_p: DMatrix::zeros(m, n),
            int_q: DMatrix::zeros(n, n),
            mom_p: DMatrix::zeros(m, n),
            mom_q: DMatrix::zeros(n, n),
        };

        // One adaptive pass per cell: double the sub-resolution until the
        // cell masses stabilize. Everything downstream is assembled from
        // these masses, so layers far below the grid scale are integrated
        // exactly rather than sampled.
        let mut consumed = DMatrix::zeros(m, m);
        let mut g_run = DMatrix::zeros(n, m);
        let mut gram_tab = Vec::with_capacity(nodes);
        gram_tab.push(linalg::symmetrized(&(spec.sigma0_cov.clone() - &consumed)));
        let mut g_tab = Vec::with_capacity(nodes);
        g_tab.push(g_run.clone());
        let mut cell_g_prime = Vec::with_capacity(grid.steps());
        let mut cell_r = Vec::with_capacity(grid.steps());
        let mut cell_p = Vec::with_capacity(grid.steps());
        let mut cell_q = Vec::with_capacity(grid.steps());
        let mut cell_p_mom = Vec::with_capacity(grid.steps());
        let mut cell_q_mom = Vec::with_capacity(grid.steps());
        for k in 0..grid.steps() {
            let t_a = grid.time(k);
            // Stop integrating rho'-derived quantities at the support
            // endpoint; past it every integrand vanishes identically.
            let t_b = grid.time(k + 1).min(s_end.max(t_a));
            let mass = if t_b <= t_a + 1e-15
                || (spec.rho_prime(t_a).norm() <= tol::ZERO
                    && spec.rho_prime(0.5 * (t_a + t_b)).norm() <= tol::ZERO
                    && spec.rho_prime(t_b).norm() <= tol::ZERO
                    && spec.rho_second(0.5 * (t_a + t_b)).norm() <= tol::ZERO)
            {
                zero_mass(())
            } else {
                // Accept a cell once the doubled estimate is within eight
                // digits of its own mass (plus a floor): per-cell errors are
                // O(mass), so the accumulated error stays below the test
                // tolerances on every grid size.
                let floor = 1e-12 * (1.0 + mass_scale_hint) * dt;
                let mut sub = 2usize;
                let mut prev =
                    cell_quadrature(spec, t_a, t_b, dt, &consumed, &g_run, gram_scale, sub)?;
                loop {
                    sub *= 2;
                    let next =
                        cell_quadrature(spec, t_a, t_b, dt, &consumed, &g_run, gram_scale, sub)?;
                    let err = mass_dist(&prev, &next);
                    let tol_cell = floor + 1e-8 * mass_scale(&next);
                    prev = next;
                    if err <= tol_cell || sub >= 8192 {
                        break;
                    }
                }
                prev
            };
            consumed += &mass.d_consumed;
            g_run += &mass.d_g;
            gram_tab.push(linalg::symmetrized(&(spec.sigma0_cov.clone() - &consumed)));
            g_tab.push(g_run.clone());
            cell_g_prime.push(&mass.d_g / dt);
            cell_r.push(&mass.int_r / dt);
            cell_p.push(&mass.int_p / dt);
            cell_q.push(&mass.int_q / dt);
            cell_p_mom.push(&mass.mom_p / dt);
            cell_q_mom.push(&mass.mom_q / dt);
        }

        // Node values of g' = rho' Gram^{-1} wherever rho' is non-zero.
        let scale = linalg::min_eigenvalue(&gram_tab[0])
            .max(gram_tab[0].norm())
            .max(tol::ZERO);
        let mut g_prime = Vec::with_capacity(nodes);
        for k in 0..nodes {
            if rho_prime[k].norm() > tol::ZERO {
                let min_eig = linalg::min_eigenvalue(&gram_tab[k]);
                let cond = scale / min_eig.max(f64::MIN_POSITIVE);
                if min_eig <= 0.0 || cond > tol::COND_MAX {
                    return Err(Error::GramSingular {
                        t: grid.time(k),
                        cond,
                    });
                }
                let sol = linalg::solve_right_spd(&gram_tab[k], &rho_prime[k]).ok_or(
                    Error::GramSingular {
                        t: grid.time(k),
                        cond,
                    },
                )?;
                g_prime.push(sol);
            } else {
                g_prime.push(DMatrix::zeros(n, m));
            }
        }

        let r: Vec<DMatrix<f64>> = (0..nodes)
            .map(|k| -(&g_prime[k] * rho_prime[k].transpose()))
            .collect();
        let q: Vec<DMatrix<f64>> = (0..nodes).map(|k| -(&g_tab[k] * &p[k]) + &r[k]).collect();

        Ok(KernelTable {
            grid: *grid,
            t0,
            t0_idx,
            g: g_tab,
            g_prime,
            gram: gram_tab,
            r,
            p,
            q,
            cell_g_prime,
            cell_r,
            cell_p,
            cell_q,
            cell_p_mom,
            cell_q_mom,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    /// Support endpoint of `rho'` detected on the grid (0 for the zero
    /// kernel, the horizon for fully supported kernels).
    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn t0_index(&self) -> usize {
        self.t0_idx
    }

    pub fn g_node(&self, k: usize) -> &DMatrix<f64> {
        &self.g[k]
    }
    pub fn g_prime_node(&self, k: usize) -> &DMatrix<f64> {
        &self.g_prime[k]
    }
    pub fn gram_node(&self, k: usize) -> &DMatrix<f64> {
        &self.gram[k]
    }
    pub fn r_node(&self, k: usize) -> &DMatrix<f64> {
        &self.r[k]
    }
    pub fn p_node(&self, k: usize) -> &DMatrix<f64> {
        &self.p[k]
    }
    pub fn q_node(&self, k: usize) -> &DMatrix<f64> {
        &self.q[k]
    }

    /// Exact average of `g'` over cell `[t_k, t_{k+1}]`.
    pub fn cell_g_prime(&self, k: usize) -> &DMatrix<f64> {
        &self.cell_g_prime[k]
    }
    /// Exact average of `r = -g' rho'^T` over cell `k`.
    pub fn cell_r(&self, k: usize) -> &DMatrix<f64> {
        &self.cell_r[k]
    }
    /// Exact average of `p = rho''^T` over cell `k`.
    pub fn cell_p(&self, k: usize) -> &DMatrix<f64> {
        &self.cell_p[k]
    }
    /// Exact average of `q = -g rho''^T - g' rho'^T` over cell `k`.
    pub fn cell_q(&self, k: usize) -> &DMatrix<f64> {
        &self.cell_q[k]
    }
    /// First moment of `p` over cell `k` (weight `(u - t_k)/dt`).
    pub fn cell_p_moment(&self, k: usize) -> &DMatrix<f64> {
        &self.cell_p_mom[k]
    }
    /// First moment of `q` over cell `k`.
    pub fn cell_q_moment(&self, k: usize) -> &DMatrix<f64> {
        &self.cell_q_mom[k]
    }

    fn interp(&self, tab: &[DMatrix<f64>], t: f64) -> DMatrix<f64> {
        let dt = self.grid.dt();
        let x = (t / dt).clamp(0.0, self.grid.steps() as f64);
        let k = (x.floor() as usize).min(self.grid.steps() - 1);
        let frac = x - k as f64;
        if frac.abs() < 1e-12 {
            tab[k].clone()
        } else {
            &tab[k] * (1.0 - frac) + &tab[k + 1] * frac
        }
    }

    pub fn g_at(&self, t: f64) -> DMatrix<f64> {
        self.interp(&self.g, t)
    }

    pub fn g_prime_at(&self, t: f64) -> DMatrix<f64> {
        if t > self.t0 + 1e-12 {
            return DMatrix::zeros(self.g_prime[0].nrows(), self.g_prime[0].ncols());
        }
        self.interp(&self.g_prime, t)
    }

    pub fn gram_at(&self, t: f64) -> DMatrix<f64> {
        self.interp(&self.gram, t)
    }

    /// Serialize to the inspection/golden-file JSON layout
    /// `{grid, g, g_prime, r, T0}` with matrices flattened row-major.
    pub fn to_json(&self) -> serde_json::Value {
        let flat = |tab: &[DMatrix<f64>]| -> Vec<Vec<f64>> {
            tab.iter().map(crate::serial::flat_from_mat).collect()
        };
        json!({
            "grid": self.grid.times().collect::<Vec<f64>>(),
            "g": flat(&self.g),
            "g_prime": flat(&self.g_prime),
            "r": flat(&self.r),
            "T0": self.t0,
        })
    }
}

/// Two-parameter kernel `lambda(t, s) = g(t) p(s) + q(s)` with `g`, `g'`
/// read from the table (nearest grid point with linear interpolation).
pub fn lambda_kernel(
    table: &KernelTable,
    spec: &CorrelationSpec,
    t: f64,
    s: f64,
) -> Result<DMatrix<f64>> {
    if s > t + 1e-12 {
        return Err(Error::DomainOrder { t, s });
    }
    if !table.grid.contains(t) {
        return Err(Error::QuadratureDomain {
            t,
            horizon: table.grid.horizon(),
        });
    }
    let p_s = spec.rho_second(s).transpose();
    let q_s = -(table.g_at(s) * &p_s) - table.g_prime_at(s) * spec.rho_prime(s).transpose();
    Ok(table.g_at(t) * p_s + q_s)
}

/// Diagonal coefficient `r(t) = lambda(t, t) = -g'(t) rho'(t)^T`.
pub fn r_coeff(table: &KernelTable, spec: &CorrelationSpec, t: f64) -> Result<DMatrix<f64>> {
    if !table.grid.contains(t) {
        return Err(Error::QuadratureDomain {
            t,
            horizon: table.grid.horizon(),
        });
    }
    Ok(-(table.g_prime_at(t) * spec.rho_prime(t).transpose()))
}

/// Largest grid time where `rho'` does not vanish (0 when `rho' ≡ 0`,
/// the horizon when `rho'(T) != 0`).
pub fn support_endpoint(spec: &CorrelationSpec, grid: &TimeGrid) -> f64 {
    for k in (0..grid.nodes()).rev() {
        if spec.rho_prime(grid.time(k)).norm() > tol::ZERO {
            return grid.time(k);
        }
    }
    0.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::radar_correlation;

    fn scalar_linear_spec(horizon: f64) -> CorrelationSpec {
        CorrelationSpec::new(
            DMatrix::from_element(1, 1, 1.0),
            Arc::new(PolyKernel::linear(DMatrix::from_element(1, 1, 1.0))),
            horizon,
        )
        .unwrap()
    }

    #[test]
    fn gram_closed_form_linear() {
        // Sigma = 1, rho(t) = t: Gram(t) = 1 - t.
        let spec = scalar_linear_spec(0.9);
        let grid = TimeGrid::new(0.9, 900).unwrap();
        let g = gram(&spec, &grid, 0.5).unwrap();
        assert!((g[(0, 0)] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn gram_zero_kernel_is_sigma() {
        let sigma = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.5]);
        let spec = CorrelationSpec::uncorrelated(sigma.clone(), 3, 1.0).unwrap();
        let grid = TimeGrid::new(1.0, 64).unwrap();
        for &t in &[0.0, 0.25, 1.0] {
            assert!(linalg::frob_diff(&gram(&spec, &grid, t).unwrap(), &sigma) < 1e-14);
        }
    }

    #[test]
    fn gram_radar_closed_form() {
        // Radar: Sigma = I + g^2 M M^T, rho'(s) = g M^T on [0,1]
        // => Gram(t) = I + (1 - t) g^2 M M^T; at gamma = 1, Gram(1) = I.
        let spec = radar_correlation(1.0, 1.0);
        let grid = TimeGrid::new(1.0, 1000).unwrap();
        let g1 = gram(&spec, &grid, 1.0).unwrap();
        assert!(linalg::frob_diff(&g1, &DMatrix::identity(6, 6)) < 1e-10);
        let m_sel = crate::models::radar_selector();
        for &t in &[0.25, 0.5, 0.75] {
            let expected = DMatrix::identity(6, 6) + (1.0 - t) * (&m_sel * m_sel.transpose());
            assert!(linalg::frob_diff(&gram(&spec, &grid, t).unwrap(), &expected) < 1e-10);
        }
    }

    #[test]
    fn gram_rejects_out_of_domain() {
        let spec = scalar_linear_spec(0.9);
        let grid = TimeGrid::new(0.9, 90).unwrap();
        assert!(matches!(
            gram(&spec, &grid, 1.5),
            Err(Error::QuadratureDomain { .. })
        ));
    }

    #[test]
    fn g_and_g_prime_closed_form_linear() {
        // g'(t) = 1/(1-t), g(t) = -ln(1-t).
        let spec = scalar_linear_spec(0.9);
        let grid = TimeGrid::new(0.9, 9000).unwrap();
        let table = KernelTable::build(&spec, &grid).unwrap();
        let k_half = grid.index_of(0.5).unwrap();
        assert!((table.g_prime_node(k_half)[(0, 0)] - 2.0).abs() < 1e-6);
        assert!((table.g_node(k_half)[(0, 0)] - std::f64::consts::LN_2).abs() < 1e-7);
    }

    #[test]
    fn g_zero_kernel_vanishes() {
        let spec = CorrelationSpec::uncorrelated(DMatrix::identity(2, 2), 1, 1.0).unwrap();
        let grid = TimeGrid::new(1.0, 32).unwrap();
        let table = KernelTable::build(&spec, &grid).unwrap();
        for k in 0..grid.nodes() {
            assert_eq!(table.g_node(k).norm(), 0.0);
            assert_eq!(table.g_prime_node(k).norm(), 0.0);
        }
        assert_eq!(table.t0(), 0.0);
    }

    #[test]
    fn g_prime_radar_matrix_closed_form() {
        // g'(t) = M^T (I + (1-t) M M^T)^{-1} at gamma = 1, checked at 5 nodes.
        let spec = radar_correlation(1.0, 1.0);
        let grid = TimeGrid::new(1.0, 1000).unwrap();
        let table = KernelTable::build(&spec, &grid).unwrap();
        let m_sel = crate::models::radar_selector();
        for &t in &[0.0, 0.2, 0.5, 0.8, 1.0] {
            let k = grid.index_of(t).unwrap();
            let inv = (DMatrix::identity(6, 6) + (1.0 - t) * (&m_sel * m_sel.transpose()))
                .try_inverse()
                .unwrap();
            let expected = m_sel.transpose() * inv;
            assert!(
                linalg::frob_diff(table.g_prime_node(k), &expected) < 1e-9,
                "t = {t}"
            );
        }
    }

    #[test]
    fn gram_singular_detected() {
        // Sigma = 1 with rho(t) = t becomes singular at t = 1.
        let spec = scalar_linear_spec(1.0);
        let grid = TimeGrid::new(1.0, 1000).unwrap();
        match KernelTable::build(&spec, &grid) {
            Err(Error::GramSingular { t, .. }) => assert!(t > 0.99),
            other => panic!("expected GramSingular, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn lambda_scalar_linear() {
        // rho'' = 0 so lambda(t, s) = q(s) = -g'(s) = -1/(1-s).
        let spec = scalar_linear_spec(0.9);
        let grid = TimeGrid::new(0.9, 900).unwrap();
        let table = KernelTable::build(&spec, &grid).unwrap();
        let lam = lambda_kernel(&table, &spec, 0.8, 0.5).unwrap();
        assert!((lam[(0, 0)] + 2.0).abs() < 1e-9);
        assert!(matches!(
            lambda_kernel(&table, &spec, 0.4, 0.5),
            Err(Error::DomainOrder { .. })
        ));
    }

    #[test]
    fn lambda_zero_kernel() {
        let spec = CorrelationSpec::uncorrelated(DMatrix::identity(1, 1), 1, 1.0).unwrap();
        let grid = TimeGrid::new(1.0, 32).unwrap();
        let table = KernelTable::build(&spec, &grid).unwrap();
        assert_eq!(lambda_kernel(&table, &spec, 0.7, 0.3).unwrap().norm(), 0.0);
    }

    #[test]
    fn lambda_matches_derivative_identity() {
        // lambda(t, s) = d/ds [ g(t) rho'(s)^T - g(s) rho'(s)^T ] checked by
        // central differences for the quadratic kernel, Sigma = 2.
        let spec = CorrelationSpec::new(
            DMatrix::from_element(1, 1, 2.0),
            Arc::new(PolyKernel {
                coeff: DMatrix::from_element(1, 1, 1.0),
                power: 2,
            }),
            1.0,
        )
        .unwrap();
        let grid = TimeGrid::new(1.0, 4000).unwrap();
        let table = KernelTable::build(&spec, &grid).unwrap();
        let pairs = [(0.9, 0.4), (0.7, 0.2), (0.5, 0.5), (0.95, 0.8)];
        for &(t, s) in &pairs {
            let lam = lambda_kernel(&table, &spec, t, s).unwrap()[(0, 0)];
            let eps = 1e-4;
            let f = |u: f64| {
                (table.g_at(t)[(0, 0)] - table.g_at(u)[(0, 0)]) * spec.rho_prime(u)[(0, 0)]
            };
            let fd = (f(s + eps) - f(s - eps)) / (2.0 * eps);
            assert!((lam - fd).abs() < 1e-6, "(t,s) = ({t},{s}): {lam} vs {fd}");
        }
    }

    #[test]
    fn r_scalar_linear_and_beyond_support() {
        let spec = scalar_linear_spec(0.9);
        let grid = TimeGrid::new(0.9, 900).unwrap();
        let table = KernelTable::build(&spec, &grid).unwrap();
        let r = r_coeff(&table, &spec, 0.5).unwrap();
        assert!((r[(0, 0)] + 2.0).abs() < 1e-9);
        // Compact support: r vanishes beyond T0.
        let bump_spec = CorrelationSpec::new(
            DMatrix::from_element(1, 1, 1.0),
            Arc::new(BumpKernel::new(DMatrix::from_element(1, 1, 0.5), 0.5).unwrap()),
            2.0,
        )
        .unwrap();
        let grid2 = TimeGrid::new(2.0, 800).unwrap();
        let table2 = KernelTable::build(&bump_spec, &grid2).unwrap();
        for &t in &[0.6, 1.0, 2.0] {
            assert_eq!(r_coeff(&table2, &bump_spec, t).unwrap().norm(), 0.0);
        }
    }

    #[test]
    fn r_radar_at_origin() {
        // r(0) = -M^T (I + M M^T)^{-1} M at gamma = 1.
        let spec = radar_correlation(1.0, 1.0);
        let grid = TimeGrid::new(1.0, 500).unwrap();
        let table = KernelTable::build(&spec, &grid).unwrap();
        let m_sel = crate::models::radar_selector();
        let inv = (DMatrix::identity(6, 6) + &m_sel * m_sel.transpose())
            .try_inverse()
            .unwrap();
        let expected = -(m_sel.transpose() * inv * &m_sel);
        assert!(linalg::frob_diff(&r_coeff(&table, &spec, 0.0).unwrap(), &expected) < 1e-10);
    }

    #[test]
    fn support_endpoint_cases() {
        let grid = TimeGrid::new(2.0, 200).unwrap();
        let zero = CorrelationSpec::uncorrelated(DMatrix::identity(1, 1), 1, 2.0).unwrap();
        assert_eq!(support_endpoint(&zero, &grid), 0.0);
        // Radar correlation on a longer horizon: support ends at 1.
        let radar = radar_correlation(1.0, 2.0);
        assert_eq!(support_endpoint(&radar, &grid), 1.0);
        // Fully supported kernel: endpoint is the horizon.
        let lin = scalar_linear_spec(2.0);
        // Sigma = 1 is too small for this horizon; endpoint detection does
        // not touch the Gram matrix, so it still works.
        assert_eq!(support_endpoint(&lin, &grid), 2.0);
    }

    #[test]
    fn g_prime_vanishes_strictly_beyond_t0() {
        let spec = radar_correlation(1.0, 2.0);
        let grid = TimeGrid::new(2.0, 400).unwrap();
        let table = KernelTable::build(&spec, &grid).unwrap();
        assert_eq!(table.t0(), 1.0);
        for k in 0..grid.nodes() {
            if grid.time(k) > 1.0 {
                assert_eq!(table.g_prime_node(k).norm(), 0.0);
                assert_eq!(table.r_node(k).norm(), 0.0);
            }
        }
        // g stays constant after the support.
        let g_at_t0 = table.g_at(1.0);
        assert!(linalg::frob_diff(&table.g_at(2.0), &g_at_t0) < 1e-14);
        // Gram stays constant too: no mass is integrated past the kink.
        assert!(linalg::frob_diff(&table.gram_at(2.0), &table.gram_at(1.0)) < 1e-14);
    }

    #[test]
    fn table_json_layout() {
        let spec = scalar_linear_spec(0.5);
        let grid = TimeGrid::new(0.5, 10).unwrap();
        let table = KernelTable::build(&spec, &grid).unwrap();
        let v = table.to_json();
        assert_eq!(v["grid"].as_array().unwrap().len(), 11);
        assert_eq!(v["g"].as_array().unwrap().len(), 11);
        assert!((v["T0"].as_f64().unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(v["g"][0][0].as_f64().unwrap(), 0.0);
    }
}
