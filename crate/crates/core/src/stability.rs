//! Long-run behaviour of the constant-coefficient filter.
//!
//! For `dX = a X dt + dW`, `dZ = h X dt + dN` with the correlation vanishing
//! after a finite time, the signal block of the filter covariance converges
//! to the solution `gamma_inf` of the algebraic Riccati equation
//!
//! ```text
//! gamma a^T + a gamma + I - gamma h^T h gamma = 0,
//! ```
//!
//! at an exponential rate bounded below by the spectral margin
//! `lambda_0 = min(-Re mu)` over eigenvalues `mu` of `a - gamma h^T h`,
//! provided `(a, h)` is detectable and `(a, I)` is stabilizable. This module
//! computes `gamma_inf` (by integrating the differential Riccati equation to
//! its fixed point), the margin, the Hautus detectability/stabilizability
//! tests, least-squares decay-rate fits, and the closed-form Wasserstein
//! distance between Gaussian filter laws.

use nalgebra::{Complex, DMatrix, DVector};
use serde_json::json;

use crate::error::{tol, Error, Result};
use crate::grid::TimeGrid;
use crate::kalman::{riccati_integrate, LtvSystem};
use crate::linalg;

/// Hautus rank test for detectability: for every eigenvalue `mu` of `a`
/// with `Re mu >= 0`, `rank([mu I - a; h]) = m`.
pub fn detectable(a: &DMatrix<f64>, h: &DMatrix<f64>) -> bool {
    let m = a.nrows();
    let a_c = linalg::to_complex(a);
    let h_c = linalg::to_complex(h);
    for mu in linalg::eigenvalues(a) {
        if mu.re < -tol::ZERO {
            continue;
        }
        let shifted = DMatrix::<Complex<f64>>::identity(m, m) * mu - &a_c;
        let mut pencil = DMatrix::zeros(m + h.nrows(), m);
        pencil.view_mut((0, 0), (m, m)).copy_from(&shifted);
        pencil.view_mut((m, 0), (h.nrows(), m)).copy_from(&h_c);
        if linalg::rank_complex(&pencil, 1e-10) < m {
            return false;
        }
    }
    true
}

/// Hautus rank test for stabilizability: for every eigenvalue `mu` of `a`
/// with `Re mu >= 0`, `rank([mu I - a, b]) = m`.
pub fn stabilizable(a: &DMatrix<f64>, b_in: &DMatrix<f64>) -> bool {
    let m = a.nrows();
    let a_c = linalg::to_complex(a);
    let b_c = linalg::to_complex(b_in);
    for mu in linalg::eigenvalues(a) {
        if mu.re < -tol::ZERO {
            continue;
        }
        let shifted = DMatrix::<Complex<f64>>::identity(m, m) * mu - &a_c;
        let mut pencil = DMatrix::zeros(m, m + b_in.ncols());
        pencil.view_mut((0, 0), (m, m)).copy_from(&shifted);
        pencil.view_mut((0, m), (m, b_in.ncols())).copy_from(&b_c);
        if linalg::rank_complex(&pencil, 1e-10) < m {
            return false;
        }
    }
    true
}

/// Solve `gamma a^T + a gamma + I - gamma h^T h gamma = 0` by integrating
/// the differential Riccati equation from `I` until the residual norm drops
/// below `1e-10` (or error out at `t = 200`).
pub fn solve_are(a: &DMatrix<f64>, h: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let m = a.nrows();
    if !detectable(a, h) {
        return Err(Error::NotDetectable);
    }
    if !stabilizable(a, &DMatrix::identity(m, m)) {
        return Err(Error::NotStabilizable);
    }
    // Reuse the Riccati integrator on a constant-coefficient system with
    // unit process noise and no noise correlation, in chunks.
    let horizon = 200.0;
    let chunk = 5.0;
    let grid = TimeGrid::new(chunk, 500)?;
    let sys = LtvSystem {
        grid,
        b: crate::kalman::PiecewiseCoeffs::from_samples(&grid, |_| a.clone()),
        k: crate::kalman::PiecewiseCoeffs::from_samples(&grid, |_| h.clone()),
        sigma: DMatrix::identity(m, m),
        c: DMatrix::zeros(m, h.nrows()),
        beta: None,
        kappa: None,
    };
    let mut p = DMatrix::identity(m, m);
    let mut elapsed = 0.0;
    while elapsed < horizon {
        let path = riccati_integrate(&sys, &p)?;
        p = path.last().unwrap().clone();
        elapsed += chunk;
        if are_residual_matrix(a, h, &p).norm() < 1e-10 {
            return Ok(p);
        }
    }
    Err(Error::NoConvergence { horizon })
}

/// Residual matrix of the algebraic Riccati equation at `gamma`.
pub fn are_residual_matrix(
    a: &DMatrix<f64>,
    h: &DMatrix<f64>,
    gamma: &DMatrix<f64>,
) -> DMatrix<f64> {
    let m = a.nrows();
    gamma * a.transpose() + a * gamma + DMatrix::identity(m, m)
        - gamma * h.transpose() * h * gamma
}

/// Spectral margin `lambda_0 = min(-Re mu)` over eigenvalues of
/// `a - gamma_inf h^T h`. Errors when the margin is not positive.
pub fn spectral_margin(
    a: &DMatrix<f64>,
    h: &DMatrix<f64>,
    gamma_inf: &DMatrix<f64>,
) -> Result<f64> {
    let closed_loop = a - gamma_inf * h.transpose() * h;
    let margin = linalg::eigenvalues(&closed_loop)
        .iter()
        .map(|mu| -mu.re)
        .fold(f64::INFINITY, f64::min);
    if margin <= tol::ZERO {
        return Err(Error::NonPositiveMargin { value: margin });
    }
    Ok(margin)
}

/// Exponential decay fit of `||P11_t - gamma_inf||_F` on a window:
/// least-squares line through `(t, log ||.||)`, returned as
/// `(rate, prefactor, residual)` with `rate = -slope`.
pub fn decay_fit(
    grid: &TimeGrid,
    p11_path: &[DMatrix<f64>],
    gamma_inf: &DMatrix<f64>,
    window: (f64, f64),
) -> Result<(f64, f64, f64)> {
    let (t_a, t_b) = window;
    let mut ts = Vec::new();
    let mut logs = Vec::new();
    let mut all_below_floor = true;
    for (k, t) in grid.times().enumerate() {
        if t < t_a - 1e-12 || t > t_b + 1e-12 {
            continue;
        }
        let diff = linalg::frob_diff(&p11_path[k], gamma_inf);
        if diff >= 1e-13 {
            all_below_floor = false;
        }
        ts.push(t);
        logs.push(diff.max(1e-300).ln());
    }
    if ts.len() < 10 {
        return Err(Error::WindowTooShort {
            points: ts.len(),
            min: 10,
        });
    }
    if all_below_floor {
        return Err(Error::DifferenceBelowFloor);
    }
    let n = ts.len() as f64;
    let mean_t = ts.iter().sum::<f64>() / n;
    let mean_l = logs.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (t, l) in ts.iter().zip(&logs) {
        sxx += (t - mean_t).powi(2);
        sxy += (t - mean_t) * (l - mean_l);
    }
    let slope = sxy / sxx;
    let intercept = mean_l - slope * mean_t;
    let residual = ts
        .iter()
        .zip(&logs)
        .map(|(t, l)| (l - (slope * t + intercept)).powi(2))
        .sum::<f64>()
        .sqrt()
        / n.sqrt();
    Ok((-slope, intercept.exp(), residual))
}

/// 2-Wasserstein distance between Gaussians, from
/// `W2^2 = |mu1 - mu2|^2 + tr(C1 + C2 - 2 (C1^{1/2} C2 C1^{1/2})^{1/2})`.
pub fn wasserstein_gaussian(
    mean1: &DVector<f64>,
    cov1: &DMatrix<f64>,
    mean2: &DVector<f64>,
    cov2: &DMatrix<f64>,
) -> Result<f64> {
    for c in [cov1, cov2] {
        let min_eig = linalg::min_eigenvalue(c);
        if min_eig < -tol::PSD * (1.0 + c.norm()) {
            return Err(Error::NotPsd { min_eig });
        }
    }
    let root1 = linalg::sqrt_psd(cov1);
    let inner = linalg::sqrt_psd(&(&root1 * cov2 * &root1));
    let bures = (cov1 + cov2 - 2.0 * inner).trace().max(0.0);
    Ok(((mean1 - mean2).norm_squared() + bures).sqrt())
}

/// Summary of the stability analysis of one constant-coefficient model.
pub struct StabilityReport {
    pub gamma_inf: DMatrix<f64>,
    pub lambda0: f64,
    pub detectable: bool,
    pub stabilizable: bool,
    pub are_residual: f64,
    /// `(rate, prefactor, fit residual)` from [`decay_fit`], when a window
    /// was analyzed.
    pub decay: Option<(f64, f64, f64)>,
    /// `W2(N(x^_t, P11_t), N(x^0_t, P0_t))` per grid node, when the
    /// anticipative and classical runs were compared.
    pub wasserstein_path: Option<Vec<f64>>,
}

impl StabilityReport {
    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "gamma_inf": crate::serial::rows_from_mat(&self.gamma_inf),
            "lambda0": self.lambda0,
            "detectable": self.detectable,
            "stabilizable": self.stabilizable,
            "are_residual": self.are_residual,
            "decay_fit": self.decay.map(|(r, c, res)| json!({
                "rate": r, "prefactor": c, "residual": res,
            })),
            "wasserstein_path": self.wasserstein_path,
        })
    }
}

/// Compute `gamma_inf`, `lambda_0` and the ARE residual for constant `(a, h)`.
pub fn analyze(a: &DMatrix<f64>, h: &DMatrix<f64>) -> Result<StabilityReport> {
    let det = detectable(a, h);
    let stab = stabilizable(a, &DMatrix::identity(a.nrows(), a.nrows()));
    let gamma_inf = solve_are(a, h)?;
    let lambda0 = spectral_margin(a, h, &gamma_inf)?;
    let are_residual = are_residual_matrix(a, h, &gamma_inf).norm();
    Ok(StabilityReport {
        gamma_inf,
        lambda0,
        detectable: det,
        stabilizable: stab,
        are_residual,
        decay: None,
        wasserstein_path: None,
    })
}
