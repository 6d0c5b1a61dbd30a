//! Monte Carlo experiments: paired error-ratio tables and grid-convergence
//! studies.
//!
//! The ratio experiment simulates paths of a correlated model, runs the
//! anticipative filter and the classical baseline on the *same* observation
//! record (paired comparison, which cancels most of the path-to-path
//! variance), accumulates squared errors at the evaluation times, and
//! reports per-component ratios
//!
//! ```text
//! R_i(t) = sqrt( E|X^i_t - x^ant_i|^2 / E|X^i_t - x^cls_i|^2 )
//! ```
//!
//! with delta-method standard errors. Paths are dispatched to a worker pool
//! and reduced in stream order, so results do not depend on scheduling.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::kalman::{anticipative_filter, classical_baseline};
use crate::models::{linear_model_from_json, LinearModel, ScenarioParams, ScenarioRegistry};
use crate::simulate::{coarsen_bundle, sample_bundle};

/// Declarative description of one Monte Carlo scenario run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioConfig {
    /// Built-in scenario id (e.g. `"radar"`) or a path to a model JSON file.
    pub scenario: String,
    /// Anticipation strength passed to scenarios that take one.
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    /// Horizon of the run.
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    /// Number of grid steps.
    #[serde(default = "default_steps")]
    pub grid_k: usize,
    #[serde(default = "default_paths")]
    pub n_paths: u64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Output kinds the CLI should emit: `csv`, `json`, `plotdata`.
    #[serde(default)]
    pub outputs: Vec<String>,
    #[serde(default)]
    pub eval_times: Vec<f64>,
}

fn default_gamma() -> f64 {
    1.0
}
fn default_horizon() -> f64 {
    1.0
}
fn default_steps() -> usize {
    1000
}
fn default_paths() -> u64 {
    2000
}
fn default_seed() -> u64 {
    42
}

impl ScenarioConfig {
    pub fn defaults(scenario: &str) -> ScenarioConfig {
        ScenarioConfig {
            scenario: scenario.to_string(),
            gamma: default_gamma(),
            horizon: default_horizon(),
            grid_k: default_steps(),
            n_paths: default_paths(),
            seed: default_seed(),
            outputs: vec!["csv".into(), "json".into()],
            eval_times: vec![0.75, 1.0],
        }
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.horizon, self.grid_k)
    }

    pub fn validate(&self) -> Result<TimeGrid> {
        if self.n_paths < 1 {
            return Err(Error::InvalidConfig("n_paths must be >= 1".into()));
        }
        let grid = self.grid()?;
        for &t in &self.eval_times {
            grid.index_of(t)?;
        }
        Ok(grid)
    }

    /// Resolve the model: a registry id first, then a JSON file path.
    pub fn build_model(&self) -> Result<LinearModel> {
        let registry = ScenarioRegistry::with_builtins();
        let params = ScenarioParams {
            gamma: self.gamma,
            horizon: Some(self.horizon),
        };
        match registry.build(&self.scenario, &params) {
            Ok(model) => Ok(model),
            Err(Error::UnknownName { .. }) if self.scenario.contains('.') => {
                let text = std::fs::read_to_string(&self.scenario)
                    .map_err(|e| Error::io(&self.scenario, e))?;
                let desc: Value = serde_json::from_str(&text)?;
                linear_model_from_json(&desc)
            }
            Err(e) => Err(e),
        }
    }
}

/// Error ratios of the anticipative filter against the classical baseline
/// at one evaluation time.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RatioReport {
    pub eval_time: f64,
    pub ratios: Vec<f64>,
    pub std_errs: Vec<f64>,
    pub n_paths: u64,
    pub seed: u64,
}

impl RatioReport {
    /// CSV row block: header `t,R1..Rm,se1..sem`.
    pub fn csv_header(dim: usize) -> String {
        let mut h = String::from("t");
        for i in 1..=dim {
            h.push_str(&format!(",R{i}"));
        }
        for i in 1..=dim {
            h.push_str(&format!(",se{i}"));
        }
        h
    }

    pub fn csv_row(&self) -> String {
        let mut row = format!("{:.6}", self.eval_time);
        for r in &self.ratios {
            row.push_str(&format!(",{:.6}", r));
        }
        for se in &self.std_errs {
            row.push_str(&format!(",{:.6}", se));
        }
        row
    }
}

/// Per-path squared errors of both filters at the evaluation times.
struct PathErrors {
    /// `[eval][component]` squared error of the anticipative filter.
    ant: Vec<Vec<f64>>,
    /// Same for the classical baseline.
    cls: Vec<Vec<f64>>,
}

/// Run the paired Monte Carlo ratio experiment.
pub fn monte_carlo_ratios(
    model: &LinearModel,
    grid: &TimeGrid,
    n_paths: u64,
    seed: u64,
    eval_times: &[f64],
) -> Result<Vec<RatioReport>> {
    let m = model.dim_signal();
    let eval_nodes: Vec<usize> = eval_times
        .iter()
        .map(|&t| grid.index_of(t))
        .collect::<Result<_>>()?;
    let ant = anticipative_filter(model, grid)?;
    let cls = classical_baseline(model, grid)?;

    // One entry per path, in stream order: reduction below is sequential so
    // the result is independent of worker scheduling.
    let per_path: Vec<Result<PathErrors>> = (0..n_paths)
        .into_par_iter()
        .map(|stream| {
            let bundle = sample_bundle(model, grid, seed, stream)?;
            let run_a = ant.run(&bundle.z)?;
            let run_c = cls.run(&bundle.z)?;
            let mut ant_errs = Vec::with_capacity(eval_nodes.len());
            let mut cls_errs = Vec::with_capacity(eval_nodes.len());
            for &node in &eval_nodes {
                let xa = run_a.x_hat(node);
                let xc = run_c.x_hat(node);
                let truth = &bundle.x[node];
                ant_errs.push((0..m).map(|i| (truth[i] - xa[i]).powi(2)).collect());
                cls_errs.push((0..m).map(|i| (truth[i] - xc[i]).powi(2)).collect());
            }
            Ok(PathErrors {
                ant: ant_errs,
                cls: cls_errs,
            })
        })
        .collect();

    // Accumulate sums, squares and cross products for the delta method.
    let n_eval = eval_nodes.len();
    let mut sa = vec![vec![0.0; m]; n_eval];
    let mut sb = vec![vec![0.0; m]; n_eval];
    let mut saa = vec![vec![0.0; m]; n_eval];
    let mut sbb = vec![vec![0.0; m]; n_eval];
    let mut sab = vec![vec![0.0; m]; n_eval];
    for entry in per_path {
        let errs = entry?;
        for w in 0..n_eval {
            for i in 0..m {
                let a = errs.ant[w][i];
                let b = errs.cls[w][i];
                sa[w][i] += a;
                sb[w][i] += b;
                saa[w][i] += a * a;
                sbb[w][i] += b * b;
                sab[w][i] += a * b;
            }
        }
    }

    let nf = n_paths as f64;
    let mut reports = Vec::with_capacity(n_eval);
    for (w, &t) in eval_times.iter().enumerate() {
        let mut ratios = Vec::with_capacity(m);
        let mut std_errs = Vec::with_capacity(m);
        for i in 0..m {
            let a = sa[w][i] / nf;
            let b = sb[w][i] / nf;
            if b < 1e-300 {
                return Err(Error::DivisionByZero);
            }
            let ratio = (a / b).sqrt();
            // Delta method on R = sqrt(A/B) with sample moments.
            let var_a = (saa[w][i] / nf - a * a).max(0.0) / nf;
            let var_b = (sbb[w][i] / nf - b * b).max(0.0) / nf;
            let cov_ab = (sab[w][i] / nf - a * b) / nf;
            let da = 1.0 / (2.0 * (a * b).sqrt().max(1e-300));
            let db = -(a.sqrt()) / (2.0 * b.powf(1.5).max(1e-300));
            let var_r = (da * da * var_a + db * db * var_b + 2.0 * da * db * cov_ab).max(0.0);
            ratios.push(ratio);
            std_errs.push(var_r.sqrt());
        }
        reports.push(RatioReport {
            eval_time: t,
            ratios,
            std_errs,
            n_paths,
            seed,
        });
    }
    Ok(reports)
}

/// Result of rerunning a fixed realization at several grid resolutions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub k_list: Vec<usize>,
    /// Terminal estimate (first signal component) per resolution.
    pub terminal: Vec<f64>,
    /// `|x^(K_i) - x^(K_{i+1})|` between successive resolutions.
    pub differences: Vec<f64>,
    /// `log2(d_i / d_{i+1})` where both differences are resolvable.
    pub orders: Vec<f64>,
}

/// Rerun fixed-seed realizations of `model` at each resolution in `k_list`
/// (all must divide the largest, so every resolution shares the underlying
/// noise) and report terminal differences between successive resolutions
/// plus the empirical convergence order.
///
/// A single path's Richardson ratio is noisy — the discretization error has
/// a mean-zero random component — so differences are root-mean-squared over
/// `n_paths` streams; the reported `terminal` values belong to stream 0.
pub fn convergence_study(
    model: &LinearModel,
    horizon: f64,
    k_list: &[usize],
    seed: u64,
    n_paths: u64,
) -> Result<ConvergenceReport> {
    if k_list.is_empty() {
        return Err(Error::InvalidConfig("k_list must not be empty".into()));
    }
    if n_paths == 0 {
        return Err(Error::InvalidConfig("n_paths must be >= 1".into()));
    }
    let mut sorted = k_list.to_vec();
    sorted.sort_unstable();
    let k_max = *sorted.last().unwrap();
    for &k in &sorted {
        if k_max % k != 0 {
            return Err(Error::InvalidConfig(format!(
                "every K must divide the finest K = {k_max}; {k} does not"
            )));
        }
    }
    let fine_grid = TimeGrid::new(horizon, k_max)?;
    let mut filters = Vec::with_capacity(sorted.len());
    for &k in &sorted {
        let grid = TimeGrid::new(horizon, k)?;
        filters.push(anticipative_filter(model, &grid)?);
    }

    let mut terminal = vec![0.0; sorted.len()];
    let mut sq_diff = vec![0.0; sorted.len().saturating_sub(1)];
    for stream in 0..n_paths {
        let fine = sample_bundle(model, &fine_grid, seed, stream)?;
        let mut values = Vec::with_capacity(sorted.len());
        for (i, &k) in sorted.iter().enumerate() {
            let bundle = if k == k_max {
                fine.clone()
            } else {
                coarsen_bundle(model, &fine, k_max / k)?
            };
            let run = filters[i].run(&bundle.z)?;
            values.push(run.x_hat(bundle.grid.steps())[0]);
        }
        if stream == 0 {
            terminal.copy_from_slice(&values);
        }
        for i in 0..values.len() - 1 {
            sq_diff[i] += (values[i + 1] - values[i]).powi(2);
        }
    }

    let differences: Vec<f64> = sq_diff
        .iter()
        .map(|s| (s / n_paths as f64).sqrt())
        .collect();
    let mut orders = Vec::new();
    for pair in differences.windows(2) {
        if pair[0] > 1e-14 && pair[1] > 1e-14 {
            orders.push((pair[0] / pair[1]).log2());
        }
    }
    Ok(ConvergenceReport {
        k_list: sorted,
        terminal,
        differences,
        orders,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::scalar_demo_model;

    #[test]
    fn config_validation() {
        let mut cfg = ScenarioConfig::defaults("radar");
        cfg.grid_k = 100;
        cfg.eval_times = vec![0.75, 1.0];
        cfg.validate().unwrap();
        cfg.eval_times = vec![0.7503];
        assert!(cfg.validate().is_err());
        cfg.eval_times.clear();
        cfg.n_paths = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn ratios_unity_when_uncorrelated() {
        // rho = 0: the two filters coincide, so R = 1 exactly.
        let model = scalar_demo_model().decorrelated().unwrap();
        let grid = TimeGrid::new(0.9, 60).unwrap();
        let reports = monte_carlo_ratios(&model, &grid, 50, 7, &[0.45, 0.9]).unwrap();
        for rep in &reports {
            for (r, se) in rep.ratios.iter().zip(&rep.std_errs) {
                assert!((r - 1.0).abs() < 1e-9, "ratio {r}");
                assert!(*se < 1e-9);
            }
        }
    }

    #[test]
    fn ratios_below_one_with_correlation() {
        let model = scalar_demo_model();
        let grid = TimeGrid::new(0.9, 90).unwrap();
        let reports = monte_carlo_ratios(&model, &grid, 400, 11, &[0.9]).unwrap();
        let r = reports[0].ratios[0];
        assert!(r < 1.0, "expected improvement, got {r}");
        assert!(reports[0].std_errs[0] > 0.0);
        let header = RatioReport::csv_header(1);
        assert_eq!(header, "t,R1,se1");
        assert!(reports[0].csv_row().starts_with("0.9"));
    }

    #[test]
    fn ratios_deterministic_across_runs() {
        let model = scalar_demo_model();
        let grid = TimeGrid::new(0.9, 45).unwrap();
        let a = monte_carlo_ratios(&model, &grid, 64, 3, &[0.9]).unwrap();
        let b = monte_carlo_ratios(&model, &grid, 64, 3, &[0.9]).unwrap();
        assert_eq!(a[0].ratios, b[0].ratios);
        assert_eq!(a[0].std_errs, b[0].std_errs);
    }

    #[test]
    fn convergence_zero_difference_for_identical_k() {
        let model = scalar_demo_model();
        let report = convergence_study(&model, 0.9, &[64, 64], 5, 1).unwrap();
        assert_eq!(report.differences[0], 0.0);
    }

    #[test]
    fn convergence_first_order_euler() {
        let model = scalar_demo_model();
        let report = convergence_study(&model, 0.9, &[64, 128, 256, 512], 5, 32).unwrap();
        assert_eq!(report.differences.len(), 3);
        // Successive differences shrink roughly 2x per doubling.
        let mean_order = report.orders.iter().sum::<f64>() / report.orders.len() as f64;
        assert!(
            (0.6..1.6).contains(&mean_order),
            "orders {:?}",
            report.orders
        );
    }

    #[test]
    fn convergence_rejects_non_nested() {
        let model = scalar_demo_model();
        assert!(convergence_study(&model, 0.9, &[60, 128], 5, 4).is_err());
    }
}
