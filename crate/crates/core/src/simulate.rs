//! Reproducible Monte Carlo realizations of `(X_0, W, N, X, Z)`.
//!
//! The correlation between `X_0` and the noise is realized noise-first:
//!
//! ```text
//! X_0 = mean + Σ_j c_j^T ΔN_j + L ζ,   c_j = (rho(t_{j+1}) - rho(t_j)) / dt
//! ```
//!
//! with `ζ` standard normal independent of `(W, N)` and `L L^T` the residual
//! covariance `Sigma - Σ_j dt c_j^T c_j`. The increment weights `c_j` make the
//! cross-covariance `E[N_{t_k} X_0^T]` equal `rho(t_k)` *exactly* at every
//! grid node, and the residual dominates the continuous-time one by the
//! Cauchy–Schwarz inequality, so it stays positive semidefinite whenever the
//! model is admissible.
//!
//! Draws come from counter-based streams keyed by `(seed, stream_id, step)`:
//! bundles are bit-reproducible and order-independent across workers.

use nalgebra::{DMatrix, DVector};

use crate::corrkernel::{CorrelationSpec, KernelTable};
use crate::error::{tol, Error, Result};
use crate::grid::TimeGrid;
use crate::linalg;
use crate::models::{LinearModel, NonlinearModel};
use crate::rng::CounterStream;

/// One Monte Carlo realization on a grid. `w` and `n` are cumulative noise
/// paths starting at zero; `x` and `z` are the signal and observation paths.
#[derive(Debug, Clone)]
pub struct PathBundle {
    pub grid: TimeGrid,
    pub x0: DVector<f64>,
    pub w: Vec<DVector<f64>>,
    pub n: Vec<DVector<f64>>,
    pub x: Vec<DVector<f64>>,
    pub z: Vec<DVector<f64>>,
    pub seed: u64,
    pub stream_id: u64,
}

/// Increment weights and residual factor realizing the correlation of `X_0`
/// with the noise increments on a given grid.
pub struct InitialConditionSampler {
    /// `c_j`, one `n x m` matrix per grid cell.
    weights: Vec<DMatrix<f64>>,
    /// PSD square root of the residual covariance.
    residual_sqrt: DMatrix<f64>,
    mean: DVector<f64>,
}

impl InitialConditionSampler {
    pub fn build(
        spec: &CorrelationSpec,
        grid: &TimeGrid,
        mean: &DVector<f64>,
    ) -> Result<InitialConditionSampler> {
        let dt = grid.dt();
        let m = spec.dim_signal();
        let mut weights = Vec::with_capacity(grid.steps());
        let mut consumed = DMatrix::zeros(m, m);
        let mut rho_prev = spec.rho(0.0);
        for k in 0..grid.steps() {
            let rho_next = spec.rho(grid.time(k + 1));
            let c = (&rho_next - &rho_prev) / dt;
            consumed += dt * (c.transpose() * &c);
            weights.push(c);
            rho_prev = rho_next;
        }
        let residual = linalg::symmetrized(&(spec.sigma0_cov() - consumed));
        let min_eig = linalg::min_eigenvalue(&residual);
        if min_eig < -tol::PSD {
            return Err(Error::ResidualCovNotPSD { min_eig });
        }
        Ok(InitialConditionSampler {
            weights,
            residual_sqrt: linalg::sqrt_psd(&residual),
            mean: mean.clone(),
        })
    }

    /// Assemble `X_0` from the noise increments and an independent draw.
    pub fn sample(&self, dn: &[DVector<f64>], zeta: &DVector<f64>) -> DVector<f64> {
        let mut x0 = &self.mean + &self.residual_sqrt * zeta;
        for (c, dnk) in self.weights.iter().zip(dn) {
            x0 += c.transpose() * dnk;
        }
        x0
    }

    pub fn weights(&self) -> &[DMatrix<f64>] {
        &self.weights
    }

    pub fn residual_sqrt(&self) -> &DMatrix<f64> {
        &self.residual_sqrt
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }
}

/// Raw Gaussian material for one bundle: `ζ` plus per-step `ΔW`, `ΔN`.
struct NoiseDraws {
    zeta: DVector<f64>,
    dw: Vec<DVector<f64>>,
    dn: Vec<DVector<f64>>,
}

fn draw_noise(
    grid: &TimeGrid,
    m: usize,
    l: usize,
    n: usize,
    seed: u64,
    stream_id: u64,
) -> NoiseDraws {
    let stream = CounterStream::new(seed, stream_id);
    let sqrt_dt = grid.dt().sqrt();
    let zeta = DVector::from_fn(m, |i, _| stream.normal(i as u64));
    let per_step = (l + n) as u64;
    let base = m as u64;
    let mut dw = Vec::with_capacity(grid.steps());
    let mut dn = Vec::with_capacity(grid.steps());
    for j in 0..grid.steps() as u64 {
        let step_base = base + j * per_step;
        dw.push(DVector::from_fn(l, |i, _| {
            sqrt_dt * stream.normal(step_base + i as u64)
        }));
        dn.push(DVector::from_fn(n, |i, _| {
            sqrt_dt * stream.normal(step_base + l as u64 + i as u64)
        }));
    }
    NoiseDraws { zeta, dw, dn }
}

fn cumulative(increments: &[DVector<f64>], dim: usize) -> Vec<DVector<f64>> {
    let mut out = Vec::with_capacity(increments.len() + 1);
    out.push(DVector::zeros(dim));
    for inc in increments {
        let next = out.last().unwrap() + inc;
        out.push(next);
    }
    out
}

fn assemble_bundle(
    grid: &TimeGrid,
    sampler: &InitialConditionSampler,
    draws: NoiseDraws,
    drift: impl Fn(usize, &DVector<f64>) -> DVector<f64>,
    diffuse: impl Fn(&DVector<f64>) -> DVector<f64>,
    obs: impl Fn(usize, &DVector<f64>) -> DVector<f64>,
    seed: u64,
    stream_id: u64,
) -> PathBundle {
    let dt = grid.dt();
    let x0 = sampler.sample(&draws.dn, &draws.zeta);
    let n_dim = draws.dn.first().map_or(0, |v| v.len());

    // Signal by Euler–Maruyama.
    let mut x = Vec::with_capacity(grid.nodes());
    x.push(x0.clone());
    for k in 0..grid.steps() {
        let cur = &x[k];
        let next = cur + drift(k, cur) * dt + diffuse(&draws.dw[k]);
        x.push(next);
    }

    // Observation by cumulative trapezoid of h(X) plus the noise.
    let mut z = Vec::with_capacity(grid.nodes());
    z.push(DVector::zeros(n_dim));
    let mut h_prev = obs(0, &x[0]);
    for k in 0..grid.steps() {
        let h_next = obs(k + 1, &x[k + 1]);
        let next = &z[k] + 0.5 * dt * (&h_prev + &h_next) + &draws.dn[k];
        z.push(next);
        h_prev = h_next;
    }

    let w = cumulative(&draws.dw, draws.dw.first().map_or(0, |v| v.len()));
    let n = cumulative(&draws.dn, n_dim);
    PathBundle {
        grid: *grid,
        x0,
        w,
        n,
        x,
        z,
        seed,
        stream_id,
    }
}

/// Simulate one linear-model bundle at `(seed, stream_id)`.
pub fn sample_bundle(
    model: &LinearModel,
    grid: &TimeGrid,
    seed: u64,
    stream_id: u64,
) -> Result<PathBundle> {
    model.validate()?;
    if grid.horizon() > model.horizon() + 1e-9 {
        return Err(Error::QuadratureDomain {
            t: grid.horizon(),
            horizon: model.horizon(),
        });
    }
    let sampler = InitialConditionSampler::build(&model.corr, grid, &model.init_mean)?;
    let draws = draw_noise(
        grid,
        model.dim_signal(),
        model.dim_noise(),
        model.dim_obs(),
        seed,
        stream_id,
    );
    let a_nodes: Vec<DMatrix<f64>> = grid.times().map(|t| model.a.at(t)).collect();
    let h_nodes: Vec<DMatrix<f64>> = grid.times().map(|t| model.h.at(t)).collect();
    let sigma0 = model.sigma0.clone();
    Ok(assemble_bundle(
        grid,
        &sampler,
        draws,
        |k, x| &a_nodes[k] * x,
        |dw| &sigma0 * dw,
        |k, x| &h_nodes[k] * x,
        seed,
        stream_id,
    ))
}

/// Simulate one nonlinear-model bundle (unit signal-noise coefficient).
pub fn sample_bundle_nonlinear(
    model: &NonlinearModel,
    grid: &TimeGrid,
    seed: u64,
    stream_id: u64,
) -> Result<PathBundle> {
    if grid.horizon() > model.corr.horizon() + 1e-9 {
        return Err(Error::QuadratureDomain {
            t: grid.horizon(),
            horizon: model.corr.horizon(),
        });
    }
    let sampler = InitialConditionSampler::build(&model.corr, grid, &model.init_mean)?;
    let m = model.dim_signal();
    let draws = draw_noise(grid, m, m, model.dim_obs(), seed, stream_id);
    let drift = model.drift_a.clone();
    let obs = model.obs_h.clone();
    Ok(assemble_bundle(
        grid,
        &sampler,
        draws,
        move |_, x| drift(x),
        |dw| dw.clone(),
        move |_, x| obs(x),
        seed,
        stream_id,
    ))
}

/// Rebuild a bundle on a coarser grid from the same underlying noise: the
/// coarse increments are the path differences of the fine bundle, `X_0` is
/// kept (its joint law with the coarse increments is exactly the coarse-model
/// law), and `X`, `Z` are regenerated by the coarse recursion. Used by the
/// convergence studies so resolutions share one realization.
pub fn coarsen_bundle(model: &LinearModel, fine: &PathBundle, factor: usize) -> Result<PathBundle> {
    let grid = fine.grid.coarsen(factor)?;
    let dt = grid.dt();
    let take = |path: &[DVector<f64>]| -> Vec<DVector<f64>> {
        (0..grid.nodes()).map(|k| path[k * factor].clone()).collect()
    };
    let w = take(&fine.w);
    let n = take(&fine.n);

    let a_nodes: Vec<DMatrix<f64>> = grid.times().map(|t| model.a.at(t)).collect();
    let h_nodes: Vec<DMatrix<f64>> = grid.times().map(|t| model.h.at(t)).collect();

    let mut x = Vec::with_capacity(grid.nodes());
    x.push(fine.x0.clone());
    for k in 0..grid.steps() {
        let dw = &w[k + 1] - &w[k];
        let next = &x[k] + (&a_nodes[k] * &x[k]) * dt + &model.sigma0 * dw;
        x.push(next);
    }
    let mut z = Vec::with_capacity(grid.nodes());
    z.push(DVector::zeros(model.dim_obs()));
    for k in 0..grid.steps() {
        let dn = &n[k + 1] - &n[k];
        let h0 = &h_nodes[k] * &x[k];
        let h1 = &h_nodes[k + 1] * &x[k + 1];
        let next = &z[k] + 0.5 * dt * (h0 + h1) + dn;
        z.push(next);
    }
    Ok(PathBundle {
        grid,
        x0: fine.x0.clone(),
        w,
        n,
        x,
        z,
        seed: fine.seed,
        stream_id: fine.stream_id,
    })
}

/// Transformed noise `N~_t = N_t - ∫_0^t lambda(t,u) N_u du - g(t) X_0`
/// (centered initial condition when the caller supplies a mean via
/// [`tilde_n_path_centered`]).
///
/// The kernel is separable, `lambda(t,u) = g(t) p(u) + q(u)`, so the
/// two-parameter integral reduces to two cumulative sums and the whole path
/// costs `O(K)`. Each cell contributes its exact kernel mass (the table's
/// per-cell averages) against the midpoint of the noise path, which keeps
/// the quadrature second order even when the kernels concentrate in a
/// boundary layer near the support endpoint.
pub fn tilde_n_path(
    bundle: &PathBundle,
    table: &KernelTable,
    spec: &CorrelationSpec,
) -> Result<Vec<DVector<f64>>> {
    tilde_n_path_centered(bundle, table, spec, None)
}

/// [`tilde_n_path`] with the initial condition centered at `mean`: the
/// enlargement transform subtracts `g(t) (X_0 - mean)`.
pub fn tilde_n_path_centered(
    bundle: &PathBundle,
    table: &KernelTable,
    _spec: &CorrelationSpec,
    mean: Option<&DVector<f64>>,
) -> Result<Vec<DVector<f64>>> {
    bundle.grid.assert_same(table.grid(), "tilde_n_path")?;
    let grid = &bundle.grid;
    let dt = grid.dt();
    let n_dim = bundle.n[0].len();
    let x0_centered = match mean {
        Some(mu) => &bundle.x0 - mu,
        None => bundle.x0.clone(),
    };

    let mut out = Vec::with_capacity(grid.nodes());
    out.push(bundle.n[0].clone());
    let mut cum_p = DVector::zeros(bundle.x0.len());
    let mut cum_q = DVector::zeros(n_dim);
    for k in 0..grid.steps() {
        // ∫_cell f(u) N_u du with N linear within the cell: the cell's mass
        // weights N at the left node and its first moment weights the
        // increment, so mass concentrated anywhere inside the cell (kernel
        // boundary layers) is placed correctly.
        let dn = &bundle.n[k + 1] - &bundle.n[k];
        cum_p += dt * (table.cell_p(k) * &bundle.n[k] + table.cell_p_moment(k) * &dn);
        cum_q += dt * (table.cell_q(k) * &bundle.n[k] + table.cell_q_moment(k) * &dn);
        let g = table.g_node(k + 1);
        let tilde = &bundle.n[k + 1] - g * (&cum_p + &x0_centered) - &cum_q;
        out.push(tilde);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Exports
// ---------------------------------------------------------------------------

const BUNDLE_MAGIC: u32 = 0x414b_4231; // "AKB1"

impl PathBundle {
    /// CSV with columns `t, x_1..x_m, z_1..z_n`.
    pub fn to_csv(&self) -> String {
        let m = self.x0.len();
        let n = self.z[0].len();
        let mut out = String::from("t");
        for i in 1..=m {
            out.push_str(&format!(",x_{i}"));
        }
        for i in 1..=n {
            out.push_str(&format!(",z_{i}"));
        }
        out.push('\n');
        for (k, t) in self.grid.times().enumerate() {
            out.push_str(&format!("{t:.12e}"));
            for i in 0..m {
                out.push_str(&format!(",{:.12e}", self.x[k][i]));
            }
            for i in 0..n {
                out.push_str(&format!(",{:.12e}", self.z[k][i]));
            }
            out.push('\n');
        }
        out
    }

    /// Compact binary dump: a 32-byte header (magic, dims, steps, seed,
    /// stream id) followed by `(K+1) x (1 + m + n)` little-endian f64 rows
    /// `t, x, z`.
    pub fn to_binary(&self) -> Vec<u8> {
        let m = self.x0.len() as u32;
        let n = self.z[0].len() as u32;
        let k = self.grid.steps() as u32;
        let mut out = Vec::with_capacity(32 + (k as usize + 1) * (1 + m as usize + n as usize) * 8);
        out.extend_from_slice(&BUNDLE_MAGIC.to_le_bytes());
        out.extend_from_slice(&m.to_le_bytes());
        out.extend_from_slice(&n.to_le_bytes());
        out.extend_from_slice(&k.to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&self.stream_id.to_le_bytes());
        for (idx, t) in self.grid.times().enumerate() {
            out.extend_from_slice(&t.to_le_bytes());
            for i in 0..m as usize {
                out.extend_from_slice(&self.x[idx][i].to_le_bytes());
            }
            for i in 0..n as usize {
                out.extend_from_slice(&self.z[idx][i].to_le_bytes());
            }
        }
        out
    }

    /// Decode a binary dump produced by [`PathBundle::to_binary`]. The noise
    /// paths are not part of the dump; they come back empty.
    pub fn from_binary(bytes: &[u8]) -> Result<PathBundle> {
        let bad = |msg: &str| Error::InvalidConfig(format!("bundle dump: {msg}"));
        if bytes.len() < 32 {
            return Err(bad("truncated header"));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        if u32_at(0) != BUNDLE_MAGIC {
            return Err(bad("bad magic"));
        }
        let m = u32_at(4) as usize;
        let n = u32_at(8) as usize;
        let k = u32_at(12) as usize;
        let seed = u64_at(16);
        let stream_id = u64_at(24);
        let row = 1 + m + n;
        let expect = 32 + (k + 1) * row * 8;
        if bytes.len() != expect {
            return Err(bad("size mismatch"));
        }
        let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let mut x = Vec::with_capacity(k + 1);
        let mut z = Vec::with_capacity(k + 1);
        let mut horizon = 0.0;
        for idx in 0..=k {
            let base = 32 + idx * row * 8;
            horizon = f64_at(base);
            x.push(DVector::from_fn(m, |i, _| f64_at(base + 8 + 8 * i)));
            z.push(DVector::from_fn(n, |i, _| f64_at(base + 8 * (1 + m) + 8 * i)));
        }
        let grid = TimeGrid::new(horizon, k)?;
        Ok(PathBundle {
            grid,
            x0: x[0].clone(),
            w: Vec::new(),
            n: Vec::new(),
            x,
            z,
            seed,
            stream_id,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corrkernel::CorrelationSpec;
    use crate::models::{radar_model, scalar_demo_model, Coeff, LinearModel};

    fn degenerate_model() -> LinearModel {
        // sigma0 = 0, a = 0, h = 0: X ≡ X_0 and Z ≡ N.
        let corr = CorrelationSpec::uncorrelated(DMatrix::identity(2, 2), 1, 1.0).unwrap();
        LinearModel {
            a: Coeff::constant(DMatrix::zeros(2, 2)),
            sigma0: DMatrix::zeros(2, 1),
            h: Coeff::constant(DMatrix::zeros(1, 2)),
            corr,
            init_mean: DVector::from_vec(vec![0.5, -1.0]),
        }
    }

    #[test]
    fn zero_noise_degenerate_paths() {
        let model = degenerate_model();
        let grid = TimeGrid::new(1.0, 32).unwrap();
        let b = sample_bundle(&model, &grid, 9, 0).unwrap();
        for k in 0..grid.nodes() {
            assert_eq!(b.x[k], b.x0);
            assert_eq!(b.z[k], b.n[k]);
        }
        assert_eq!(b.w[0].norm(), 0.0);
        assert_eq!(b.z[0].norm(), 0.0);
    }

    #[test]
    fn bit_identical_replay() {
        let model = scalar_demo_model();
        let grid = TimeGrid::new(0.9, 128).unwrap();
        let a = sample_bundle(&model, &grid, 42, 3).unwrap();
        let b = sample_bundle(&model, &grid, 42, 3).unwrap();
        for k in 0..grid.nodes() {
            assert_eq!(a.x[k], b.x[k]);
            assert_eq!(a.z[k], b.z[k]);
        }
        let c = sample_bundle(&model, &grid, 42, 4).unwrap();
        assert_ne!(a.x[10], c.x[10]);
    }

    #[test]
    fn initial_condition_cross_covariance_is_exact_in_law() {
        // With the increment weights, E[N_t X_0^T] = rho(t) exactly; check
        // the estimator converges there (radar, gamma = 1, t = 0.5).
        let model = radar_model(1.0);
        let grid = TimeGrid::new(1.0, 64).unwrap();
        let n_paths = 4000;
        let t_idx = grid.index_of(0.5).unwrap();
        let mut acc = DMatrix::zeros(2, 6);
        for s in 0..n_paths {
            let b = sample_bundle(&model, &grid, 11, s).unwrap();
            acc += &b.n[t_idx] * b.x0.transpose();
        }
        acc /= n_paths as f64;
        let expected = model.corr.rho(0.5);
        // SE per entry is about sqrt(0.5 * 3) / sqrt(4000) ~ 0.02.
        let err = (&acc - &expected).abs().max();
        assert!(err < 0.08, "max entry error {err}");
    }

    #[test]
    fn independent_when_uncorrelated() {
        let model = degenerate_model();
        let grid = TimeGrid::new(1.0, 16).unwrap();
        let n_paths = 4000;
        let mut acc = DMatrix::zeros(1, 2);
        for s in 0..n_paths {
            let b = sample_bundle(&model, &grid, 5, s).unwrap();
            acc += b.n.last().unwrap() * (&b.x0 - &model.init_mean).transpose();
        }
        acc /= n_paths as f64;
        assert!(acc.abs().max() < 3.0 / (n_paths as f64).sqrt() * 1.5);
    }

    #[test]
    fn tilde_n_equals_n_for_zero_kernel() {
        let model = degenerate_model();
        let grid = TimeGrid::new(1.0, 64).unwrap();
        let table = KernelTable::build(&model.corr, &grid).unwrap();
        let b = sample_bundle(&model, &grid, 1, 2).unwrap();
        let tn = tilde_n_path(&b, &table, &model.corr).unwrap();
        for k in 0..grid.nodes() {
            assert_eq!(tn[k], b.n[k]);
        }
    }

    #[test]
    fn tilde_n_quadratic_variation_band() {
        // Scalar rho(t) = t on [0, 0.9]: Σ (ΔN~)^2 within [0.8 T, 1.2 T].
        let model = scalar_demo_model();
        let grid = TimeGrid::new(0.9, 4096).unwrap();
        let table = KernelTable::build(&model.corr, &grid).unwrap();
        let b = sample_bundle(&model, &grid, 7, 0).unwrap();
        let tn = tilde_n_path(&b, &table, &model.corr).unwrap();
        let qv: f64 = (0..grid.steps())
            .map(|k| (tn[k + 1][0] - tn[k][0]).powi(2))
            .sum();
        assert!(qv > 0.8 * 0.9 && qv < 1.2 * 0.9, "qv = {qv}");
    }

    #[test]
    fn euler_weak_error_scalar_mean() {
        // dX = a X dt + dW with a = -0.8: E[X_T] = e^{aT} E[X_0] up to
        // first-order Euler bias.
        let corr = CorrelationSpec::uncorrelated(DMatrix::identity(1, 1), 1, 1.0).unwrap();
        let model = LinearModel {
            a: Coeff::constant(DMatrix::from_element(1, 1, -0.8)),
            sigma0: DMatrix::from_element(1, 1, 1.0),
            h: Coeff::constant(DMatrix::from_element(1, 1, 1.0)),
            corr,
            init_mean: DVector::from_element(1, 1.0),
        };
        let grid = TimeGrid::new(1.0, 100).unwrap();
        let n_paths = 100_000u64;
        let mut acc = 0.0;
        for s in 0..n_paths {
            acc += sample_bundle(&model, &grid, 2024, s).unwrap().x.last().unwrap()[0];
        }
        let mean = acc / n_paths as f64;
        let exact = (-0.8_f64).exp();
        let se = 1.0 / (n_paths as f64).sqrt();
        let euler_bias = 0.5 * 0.8 * 0.8 * exact * grid.dt() * 1.5;
        assert!(
            (mean - exact).abs() < 3.0 * se + euler_bias,
            "mean {mean} vs {exact}"
        );
    }

    #[test]
    fn coarsen_preserves_noise_and_x0() {
        // Non-zero drift, so the Euler path actually depends on the step.
        let mut model = scalar_demo_model();
        model.a = Coeff::constant(DMatrix::from_element(1, 1, -0.7));
        let fine_grid = TimeGrid::new(0.9, 128).unwrap();
        let fine = sample_bundle(&model, &fine_grid, 3, 1).unwrap();
        let coarse = coarsen_bundle(&model, &fine, 2).unwrap();
        assert_eq!(coarse.grid.steps(), 64);
        assert_eq!(coarse.x0, fine.x0);
        for k in 0..coarse.grid.nodes() {
            assert_eq!(coarse.n[k], fine.n[2 * k]);
            assert_eq!(coarse.w[k], fine.w[2 * k]);
        }
        // Coarse signal differs from the fine one (different Euler step).
        assert!((coarse.x.last().unwrap()[0] - fine.x.last().unwrap()[0]).abs() > 0.0);
    }

    #[test]
    fn binary_round_trip() {
        let model = scalar_demo_model();
        let grid = TimeGrid::new(0.9, 16).unwrap();
        let b = sample_bundle(&model, &grid, 77, 8).unwrap();
        let bytes = b.to_binary();
        assert_eq!(bytes.len(), 32 + 17 * 3 * 8);
        let back = PathBundle::from_binary(&bytes).unwrap();
        assert_eq!(back.seed, 77);
        assert_eq!(back.stream_id, 8);
        assert_eq!(back.grid, b.grid);
        for k in 0..grid.nodes() {
            assert_eq!(back.x[k], b.x[k]);
            assert_eq!(back.z[k], b.z[k]);
        }
        // Determinism: regenerating gives byte-identical dumps.
        let again = sample_bundle(&model, &grid, 77, 8).unwrap().to_binary();
        assert_eq!(bytes, again);
    }

    #[test]
    fn csv_shape() {
        let model = degenerate_model();
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let b = sample_bundle(&model, &grid, 0, 0).unwrap();
        let csv = b.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "t,x_1,x_2,z_1");
        assert_eq!(csv.lines().count(), 6);
    }
}
