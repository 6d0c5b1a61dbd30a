//! Bootstrap particle approximation of the nonlinear filter on the
//! augmented state.
//!
//! The ensemble is a weighted cloud approximating the conditional law of
//! `U = (X, Xbar, N)` given the observations. One assimilation step is
//!
//! 1. `reweight`: multiply weights by the Gaussian likelihood factor
//!    `exp(k(U)^T dz - 1/2 |k(U)|^2 dt)` (log-space, renormalized);
//! 2. `resample_systematic` when the effective sample size drops below
//!    half the ensemble;
//! 3. `propagate`: advance each particle by Euler–Maruyama. Because the
//!    observation noise also drives the `N` block (`c = (0,0,I)`), the
//!    reference-measure dynamics are `dU = (b - c k) dt + c dZ + sigma dW`:
//!    the observed increment rides the `c` channel while `W` stays an
//!    independent draw per particle. For `c = 0` this is plain prior
//!    propagation.
//!
//! The per-step log of the unnormalized weight sum is recorded as a Monte
//! Carlo estimate of the evidence increments; no stochastic PDE is solved.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::linalg;
use crate::models::{build_augmented_nonlinear, AugmentedCoefficients, NonlinearModel};
use crate::rng::CounterStream;

/// Weighted particle cloud at one time node.
pub struct Ensemble {
    pub particles: Vec<DVector<f64>>,
    pub weights: Vec<f64>,
    pub time_idx: usize,
}

impl Ensemble {
    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    /// Effective sample size `1 / Σ w_i^2`, in `[1, N]`.
    pub fn ess(&self) -> f64 {
        1.0 / self.weights.iter().map(|w| w * w).sum::<f64>()
    }

    pub fn moments(&self) -> (DVector<f64>, DMatrix<f64>) {
        linalg::weighted_moments(&self.particles, &self.weights)
    }

    fn normalize(&mut self) -> Result<()> {
        let sum: f64 = self.weights.iter().sum();
        if !(sum > 0.0) || !sum.is_finite() {
            return Err(Error::AllWeightsZero);
        }
        for w in &mut self.weights {
            *w /= sum;
        }
        Ok(())
    }
}

/// Draw the initial cloud: `X` and `Xbar` blocks share one draw of
/// `X_0 ~ N(mean, Sigma)`, the `N` block starts at zero.
pub fn initial_ensemble(
    coeffs: &AugmentedCoefficients,
    mean: &DVector<f64>,
    sigma0_cov: &DMatrix<f64>,
    n_part: usize,
    stream: &CounterStream,
) -> Ensemble {
    let m = coeffs.dim_signal();
    let dim = coeffs.dim_u();
    let root = linalg::sqrt_psd(sigma0_cov);
    let mut particles = Vec::with_capacity(n_part);
    for i in 0..n_part {
        let zeta = DVector::from_fn(m, |r, _| stream.normal((i * m + r) as u64));
        let x0 = mean + &root * zeta;
        let mut u = DVector::zeros(dim);
        u.rows_mut(0, m).copy_from(&x0);
        u.rows_mut(m, m).copy_from(&x0);
        particles.push(u);
    }
    Ensemble {
        particles,
        weights: vec![1.0 / n_part as f64; n_part],
        time_idx: 0,
    }
}

/// Advance every particle across one grid cell. `dz` is the observed
/// increment riding the `c` channel; `counter_base` addresses this step's
/// block of the random stream.
pub fn propagate(
    ensemble: &mut Ensemble,
    coeffs: &AugmentedCoefficients,
    dz: &DVector<f64>,
    stream: &CounterStream,
    counter_base: u64,
) {
    let grid = &coeffs.grid;
    let dt = grid.dt();
    let sqrt_dt = dt.sqrt();
    let node = ensemble.time_idx;
    let l = coeffs.dim_noise();
    let dim = coeffs.dim_u();
    let mut drift = DVector::zeros(dim);
    let mut obs = DVector::zeros(coeffs.dim_obs());
    let mut w_draw = DVector::zeros(l);
    let mut cn = DVector::zeros(dim);
    for (i, u) in ensemble.particles.iter_mut().enumerate() {
        coeffs.drift_into(node, u, &mut drift);
        coeffs.obs_into(node, u, &mut obs);
        for r in 0..l {
            w_draw[r] = sqrt_dt * stream.normal(counter_base + (i * l + r) as u64);
        }
        // c channel: observed increment minus the particle's own
        // observation drift (the implied transformed-noise increment).
        obs.axpy(1.0 / dt.max(f64::MIN_POSITIVE), dz, -1.0); // obs <- dz/dt - obs
        cn.gemv(dt, &coeffs.c, &obs, 0.0);
        u.axpy(dt, &drift, 1.0);
        u.gemv(1.0, &coeffs.sigma, &w_draw, 1.0);
        *u += &cn;
    }
    ensemble.time_idx += 1;
}

/// Multiply weights by `exp(k(u)^T dz - 1/2 |k(u)|^2 dt)` in log space and
/// renormalize. Returns the log of the unnormalized weight sum (the
/// evidence increment). Errors with [`Error::AllWeightsZero`] when the
/// maximum log weight is not finite.
pub fn reweight(
    ensemble: &mut Ensemble,
    coeffs: &AugmentedCoefficients,
    dz: &DVector<f64>,
    dt: f64,
) -> Result<f64> {
    let node = ensemble.time_idx;
    let mut logs: Vec<f64> = Vec::with_capacity(ensemble.len());
    let mut k_u = DVector::zeros(coeffs.dim_obs());
    for (u, w) in ensemble.particles.iter().zip(&ensemble.weights) {
        coeffs.obs_into(node, u, &mut k_u);
        let factor = k_u.dot(dz) - 0.5 * k_u.norm_squared() * dt;
        logs.push(w.max(f64::MIN_POSITIVE).ln() + factor);
    }
    let max_log = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max_log.is_finite() {
        return Err(Error::AllWeightsZero);
    }
    let mut sum = 0.0;
    for (w, lg) in ensemble.weights.iter_mut().zip(&logs) {
        *w = (lg - max_log).exp();
        sum += *w;
    }
    ensemble.normalize()?;
    Ok(max_log + sum.ln())
}

/// Systematic resampling with a caller-supplied uniform offset: particle
/// `i`'s offspring count is `floor` or `ceil` of `N w_i`, deterministically
/// within one of the expectation.
pub fn resample_systematic(ensemble: &mut Ensemble, offset: f64) {
    let n = ensemble.len();
    let mut picks = Vec::with_capacity(n);
    let mut cum = 0.0;
    let mut i = 0usize;
    for j in 0..n {
        let target = (j as f64 + offset) / n as f64;
        while cum + ensemble.weights[i] < target && i + 1 < n {
            cum += ensemble.weights[i];
            i += 1;
        }
        picks.push(i);
    }
    let new_particles: Vec<DVector<f64>> =
        picks.iter().map(|&i| ensemble.particles[i].clone()).collect();
    ensemble.particles = new_particles;
    ensemble.weights = vec![1.0 / n as f64; n];
}

/// Estimates produced by one particle-filter run.
pub struct ParticleRun {
    pub grid: TimeGrid,
    /// Weighted mean of the augmented state per node.
    pub mean: Vec<DVector<f64>>,
    /// Weighted covariance of the augmented state per node.
    pub cov: Vec<DMatrix<f64>>,
    pub ess: Vec<f64>,
    /// Per-step log evidence increments (`log Σ unnormalized weights`).
    pub log_evidence_increments: Vec<f64>,
    pub signal_dim: usize,
}

impl ParticleRun {
    pub fn x_hat(&self, node: usize) -> DVector<f64> {
        self.mean[node].rows(0, self.signal_dim).into_owned()
    }

    pub fn p11(&self, node: usize) -> DMatrix<f64> {
        self.cov[node]
            .view((0, 0), (self.signal_dim, self.signal_dim))
            .into_owned()
    }

    /// CSV with columns `t, x_hat_1.., p11_diag.., ess`.
    pub fn to_csv(&self) -> String {
        let m = self.signal_dim;
        let mut out = String::from("t");
        for i in 1..=m {
            out.push_str(&format!(",x_hat_{i}"));
        }
        for i in 1..=m {
            out.push_str(&format!(",p11_{i}{i}"));
        }
        out.push_str(",ess\n");
        for (k, t) in self.grid.times().enumerate() {
            out.push_str(&format!("{t:.12e}"));
            for i in 0..m {
                out.push_str(&format!(",{:.12e}", self.mean[k][i]));
            }
            for i in 0..m {
                out.push_str(&format!(",{:.12e}", self.cov[k][(i, i)]));
            }
            out.push_str(&format!(",{:.6}\n", self.ess[k]));
        }
        out
    }
}

/// Resampling trigger: effective sample size below half the ensemble.
pub const RESAMPLE_FRACTION: f64 = 0.5;

/// Full assimilation loop: reweight, resample when degenerate, propagate.
///
/// Deterministic in `(seed, model, data)`: particle noise comes from stream
/// 0 of `seed`, resampling offsets from stream 1.
pub fn run_particle_filter(
    model: &NonlinearModel,
    z_path: &[DVector<f64>],
    grid: &TimeGrid,
    n_part: usize,
    seed: u64,
) -> Result<ParticleRun> {
    if n_part == 0 {
        return Err(Error::InvalidConfig("need at least one particle".into()));
    }
    if z_path.len() != grid.nodes() {
        return Err(Error::GridMismatch(format!(
            "observation path has {} nodes, grid has {}",
            z_path.len(),
            grid.nodes()
        )));
    }
    let coeffs = build_augmented_nonlinear(model, grid)?;
    let noise_stream = CounterStream::new(seed, 0);
    let resample_stream = CounterStream::new(seed, 1);
    let mut ensemble = initial_ensemble(
        &coeffs,
        &model.init_mean,
        model.corr.sigma0_cov(),
        n_part,
        &noise_stream,
    );
    let dt = grid.dt();
    let l = coeffs.dim_noise();
    let init_counters = (n_part * model.dim_signal()) as u64;
    let per_step = (n_part * l) as u64;

    let mut mean = Vec::with_capacity(grid.nodes());
    let mut cov = Vec::with_capacity(grid.nodes());
    let mut ess = Vec::with_capacity(grid.nodes());
    let mut log_evidence_increments = Vec::with_capacity(grid.steps());
    let (m0, c0) = ensemble.moments();
    mean.push(m0);
    cov.push(c0);
    ess.push(ensemble.ess());

    for j in 0..grid.steps() {
        let dz = &z_path[j + 1] - &z_path[j];
        let log_inc = reweight(&mut ensemble, &coeffs, &dz, dt)?;
        log_evidence_increments.push(log_inc);
        if ensemble.ess() < RESAMPLE_FRACTION * n_part as f64 {
            let offset = resample_stream.uniform(j as u64).min(1.0 - 1e-12);
            resample_systematic(&mut ensemble, offset);
        }
        propagate(
            &mut ensemble,
            &coeffs,
            &dz,
            &noise_stream,
            init_counters + j as u64 * per_step,
        );
        let (mj, cj) = ensemble.moments();
        mean.push(mj);
        cov.push(cj);
        ess.push(ensemble.ess());
    }

    Ok(ParticleRun {
        grid: *grid,
        mean,
        cov,
        ess,
        log_evidence_increments,
        signal_dim: model.dim_signal(),
    })
}
