//! Built-in correlation kernel families.
//!
//! A correlation kernel is the map `t -> rho(t) = E[N_t X_0^T]` together with
//! its first two derivatives. The toolkit never differentiates user kernels
//! symbolically: every family supplies `rho`, `rho'` and `rho''` in closed
//! form (the bump family integrates its own profile once, at construction).
//!
//! Families are registered by name so models can be described in JSON and
//! selected from the command line:
//!
//! | name     | shape                                  |
//! |----------|----------------------------------------|
//! | `zero`   | `rho ≡ 0` (classical, uncorrelated)    |
//! | `linear` | `rho(t) = t C`                         |
//! | `poly`   | `rho(t) = t^p C`                       |
//! | `ramp`   | `rho(t) = min(t, t0) C` (kink at `t0`) |
//! | `bump`   | smooth `rho'` compactly supported on `[0, t0]` |
//!
//! The ramp family has a discontinuous `rho'` at `t0`; evaluation is
//! one-sided (left-continuous), so `rho'(t0)` is the pre-kink value and the
//! support endpoint is detected exactly when `t0` is a grid node.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::serial::{mat_from_rows, rows_from_json};

/// Evaluators for one correlation structure `rho(t) = E[N_t X_0^T]`.
pub trait CorrelationKernel: Send + Sync {
    fn name(&self) -> &'static str;
    /// Observation dimension `n` (rows of `rho`).
    fn dim_obs(&self) -> usize;
    /// Signal dimension `m` (columns of `rho`).
    fn dim_signal(&self) -> usize;
    fn rho(&self, t: f64) -> DMatrix<f64>;
    /// Left-continuous at kink points.
    fn rho_prime(&self, t: f64) -> DMatrix<f64>;
    fn rho_second(&self, t: f64) -> DMatrix<f64>;
    /// Endpoint after which `rho'` vanishes identically, if the family
    /// knows one. Quadrature uses this to integrate exactly across the
    /// jump of the ramp family.
    fn support_end(&self) -> Option<f64> {
        None
    }
}

/// `rho ≡ 0`: the classical, uncorrelated model.
pub struct ZeroKernel {
    pub dim_obs: usize,
    pub dim_signal: usize,
}

impl CorrelationKernel for ZeroKernel {
    fn name(&self) -> &'static str {
        "zero"
    }
    fn dim_obs(&self) -> usize {
        self.dim_obs
    }
    fn dim_signal(&self) -> usize {
        self.dim_signal
    }
    fn rho(&self, _t: f64) -> DMatrix<f64> {
        DMatrix::zeros(self.dim_obs, self.dim_signal)
    }
    fn rho_prime(&self, _t: f64) -> DMatrix<f64> {
        DMatrix::zeros(self.dim_obs, self.dim_signal)
    }
    fn rho_second(&self, _t: f64) -> DMatrix<f64> {
        DMatrix::zeros(self.dim_obs, self.dim_signal)
    }
    fn support_end(&self) -> Option<f64> {
        Some(0.0)
    }
}

/// `rho(t) = t^p C` for an integer power `p >= 1`.
pub struct PolyKernel {
    pub coeff: DMatrix<f64>,
    pub power: u32,
}

impl PolyKernel {
    pub fn linear(coeff: DMatrix<f64>) -> Self {
        PolyKernel { coeff, power: 1 }
    }
}

impl CorrelationKernel for PolyKernel {
    fn name(&self) -> &'static str {
        if self.power == 1 {
            "linear"
        } else {
            "poly"
        }
    }
    fn dim_obs(&self) -> usize {
        self.coeff.nrows()
    }
    fn dim_signal(&self) -> usize {
        self.coeff.ncols()
    }
    fn rho(&self, t: f64) -> DMatrix<f64> {
        &self.coeff * t.powi(self.power as i32)
    }
    fn rho_prime(&self, t: f64) -> DMatrix<f64> {
        &self.coeff * (self.power as f64 * t.powi(self.power as i32 - 1))
    }
    fn rho_second(&self, t: f64) -> DMatrix<f64> {
        if self.power < 2 {
            DMatrix::zeros(self.coeff.nrows(), self.coeff.ncols())
        } else {
            let p = self.power as f64;
            &self.coeff * (p * (p - 1.0) * t.powi(self.power as i32 - 2))
        }
    }
}

/// `rho(t) = min(t, t0) C`: constant `rho' = C` up to `t0`, zero after.
///
/// This is the shape used by the radar-tracking scenario, where the initial
/// condition is a multiple of the observation noise at time `t0 = 1`.
pub struct RampKernel {
    pub coeff: DMatrix<f64>,
    pub t0: f64,
}

impl CorrelationKernel for RampKernel {
    fn name(&self) -> &'static str {
        "ramp"
    }
    fn dim_obs(&self) -> usize {
        self.coeff.nrows()
    }
    fn dim_signal(&self) -> usize {
        self.coeff.ncols()
    }
    fn rho(&self, t: f64) -> DMatrix<f64> {
        &self.coeff * t.min(self.t0)
    }
    fn rho_prime(&self, t: f64) -> DMatrix<f64> {
        // Left-continuous: the kink node carries the pre-kink value.
        if t <= self.t0 {
            self.coeff.clone()
        } else {
            DMatrix::zeros(self.coeff.nrows(), self.coeff.ncols())
        }
    }
    fn rho_second(&self, _t: f64) -> DMatrix<f64> {
        DMatrix::zeros(self.coeff.nrows(), self.coeff.ncols())
    }
    fn support_end(&self) -> Option<f64> {
        Some(self.t0)
    }
}

/// Smooth compactly supported kernel: `rho'(t) = phi(t/t0) * scale` with
/// `phi` the standard bump profile, normalized so that
/// `∫_0^{t0} phi(t/t0)^2 dt = 1` and hence `∫ rho'^T rho' = scale^T scale`.
pub struct BumpKernel {
    scale: DMatrix<f64>,
    t0: f64,
    norm: f64,
    /// Cumulative profile `∫_0^t phi` on a fine private grid.
    cum: Vec<f64>,
}

impl BumpKernel {
    const FINE: usize = 8192;

    pub fn new(scale: DMatrix<f64>, t0: f64) -> Result<Self> {
        if !(t0 > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "bump kernel support endpoint must be positive, got {t0}"
            )));
        }
        // Normalize the squared profile to unit integral over [0, t0].
        let raw = |x: f64| -> f64 {
            if x <= 0.0 || x >= 1.0 {
                0.0
            } else {
                (-1.0 / (x * (1.0 - x))).exp()
            }
        };
        let h = 1.0 / Self::FINE as f64;
        let mut sq = 0.0;
        for i in 0..Self::FINE {
            let a = raw(i as f64 * h);
            let b = raw((i + 1) as f64 * h);
            sq += 0.5 * h * (a * a + b * b);
        }
        let norm = 1.0 / (sq * t0).sqrt();
        let mut cum = Vec::with_capacity(Self::FINE + 1);
        cum.push(0.0);
        let mut acc = 0.0;
        for i in 0..Self::FINE {
            let a = raw(i as f64 * h);
            let b = raw((i + 1) as f64 * h);
            acc += 0.5 * h * t0 * (a + b) * norm;
            cum.push(acc);
        }
        Ok(BumpKernel {
            scale,
            t0,
            norm,
            cum,
        })
    }

    fn profile(&self, t: f64) -> f64 {
        let x = t / self.t0;
        if x <= 0.0 || x >= 1.0 {
            0.0
        } else {
            self.norm * (-1.0 / (x * (1.0 - x))).exp()
        }
    }

    fn profile_deriv(&self, t: f64) -> f64 {
        let x = t / self.t0;
        if x <= 0.0 || x >= 1.0 {
            0.0
        } else {
            let u = x * (1.0 - x);
            // d/dx exp(-1/u) = exp(-1/u) * u' / u^2 with u' = 1 - 2x.
            self.profile(t) * (1.0 - 2.0 * x) / (u * u) / self.t0
        }
    }

    fn cum_profile(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        if t >= self.t0 {
            return *self.cum.last().unwrap();
        }
        let x = t / self.t0 * Self::FINE as f64;
        let i = (x.floor() as usize).min(Self::FINE - 1);
        let frac = x - i as f64;
        self.cum[i] + frac * (self.cum[i + 1] - self.cum[i])
    }
}

impl CorrelationKernel for BumpKernel {
    fn name(&self) -> &'static str {
        "bump"
    }
    fn dim_obs(&self) -> usize {
        self.scale.nrows()
    }
    fn dim_signal(&self) -> usize {
        self.scale.ncols()
    }
    fn rho(&self, t: f64) -> DMatrix<f64> {
        &self.scale * self.cum_profile(t)
    }
    fn rho_prime(&self, t: f64) -> DMatrix<f64> {
        &self.scale * self.profile(t)
    }
    fn rho_second(&self, t: f64) -> DMatrix<f64> {
        &self.scale * self.profile_deriv(t)
    }
    fn support_end(&self) -> Option<f64> {
        Some(self.t0)
    }
}

/// Closure-backed kernel, mainly for tests and one-off experiments.
pub struct CustomKernel {
    pub dim_obs: usize,
    pub dim_signal: usize,
    pub rho: Box<dyn Fn(f64) -> DMatrix<f64> + Send + Sync>,
    pub rho_prime: Box<dyn Fn(f64) -> DMatrix<f64> + Send + Sync>,
    pub rho_second: Box<dyn Fn(f64) -> DMatrix<f64> + Send + Sync>,
    pub support_end: Option<f64>,
}

impl CorrelationKernel for CustomKernel {
    fn name(&self) -> &'static str {
        "custom"
    }
    fn dim_obs(&self) -> usize {
        self.dim_obs
    }
    fn dim_signal(&self) -> usize {
        self.dim_signal
    }
    fn rho(&self, t: f64) -> DMatrix<f64> {
        (self.rho)(t)
    }
    fn rho_prime(&self, t: f64) -> DMatrix<f64> {
        (self.rho_prime)(t)
    }
    fn rho_second(&self, t: f64) -> DMatrix<f64> {
        (self.rho_second)(t)
    }
    fn support_end(&self) -> Option<f64> {
        self.support_end
    }
}

type KernelBuilder = fn(&Value) -> Result<Arc<dyn CorrelationKernel>>;

/// Name-indexed registry of kernel families, used when a correlation
/// structure is described in JSON (`{"kind": "ramp", "c": [[...]], "t0": 1}`).
pub struct KernelRegistry {
    builders: BTreeMap<&'static str, KernelBuilder>,
}

impl KernelRegistry {
    pub fn with_builtins() -> Self {
        let mut builders: BTreeMap<&'static str, KernelBuilder> = BTreeMap::new();
        builders.insert("zero", build_zero);
        builders.insert("linear", build_linear);
        builders.insert("poly", build_poly);
        builders.insert("ramp", build_ramp);
        builders.insert("bump", build_bump);
        KernelRegistry { builders }
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.builders.keys().copied().collect()
    }

    pub fn build(&self, desc: &Value) -> Result<Arc<dyn CorrelationKernel>> {
        let kind = desc
            .get("kind")
            .and_then(Value::as_str)
            .ok_or_else(|| Error::InvalidConfig("kernel description needs a 'kind'".into()))?;
        let builder = self.builders.get(kind).ok_or_else(|| Error::UnknownName {
            kind: "correlation kernel",
            name: kind.to_string(),
            known: self.names().join(", "),
        })?;
        builder(desc)
    }
}

fn field_matrix(desc: &Value, field: &str) -> Result<DMatrix<f64>> {
    let rows = rows_from_json(desc.get(field).ok_or_else(|| {
        Error::InvalidConfig(format!("kernel description missing '{field}'"))
    })?)?;
    mat_from_rows(&rows)
}

fn field_f64(desc: &Value, field: &str) -> Result<f64> {
    desc.get(field)
        .and_then(Value::as_f64)
        .ok_or_else(|| Error::InvalidConfig(format!("kernel description missing '{field}'")))
}

fn build_zero(desc: &Value) -> Result<Arc<dyn CorrelationKernel>> {
    let n = desc.get("dim_obs").and_then(Value::as_u64).unwrap_or(1) as usize;
    let m = desc.get("dim_signal").and_then(Value::as_u64).unwrap_or(1) as usize;
    Ok(Arc::new(ZeroKernel {
        dim_obs: n,
        dim_signal: m,
    }))
}

fn build_linear(desc: &Value) -> Result<Arc<dyn CorrelationKernel>> {
    Ok(Arc::new(PolyKernel::linear(field_matrix(desc, "c")?)))
}

fn build_poly(desc: &Value) -> Result<Arc<dyn CorrelationKernel>> {
    let power = desc
        .get("power")
        .and_then(Value::as_u64)
        .ok_or_else(|| Error::InvalidConfig("poly kernel needs a 'power'".into()))?
        as u32;
    if power == 0 {
        return Err(Error::InvalidConfig(
            "poly kernel power must be >= 1 so that rho(0) = 0".into(),
        ));
    }
    Ok(Arc::new(PolyKernel {
        coeff: field_matrix(desc, "c")?,
        power,
    }))
}

fn build_ramp(desc: &Value) -> Result<Arc<dyn CorrelationKernel>> {
    Ok(Arc::new(RampKernel {
        coeff: field_matrix(desc, "c")?,
        t0: field_f64(desc, "t0")?,
    }))
}

fn build_bump(desc: &Value) -> Result<Arc<dyn CorrelationKernel>> {
    Ok(Arc::new(BumpKernel::new(
        field_matrix(desc, "scale")?,
        field_f64(desc, "t0")?,
    )?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ramp_is_left_continuous_at_kink() {
        let k = RampKernel {
            coeff: DMatrix::from_element(1, 1, 2.0),
            t0: 1.0,
        };
        assert_eq!(k.rho_prime(1.0)[(0, 0)], 2.0);
        assert_eq!(k.rho_prime(1.0 + 1e-9)[(0, 0)], 0.0);
        assert_eq!(k.rho(1.5)[(0, 0)], 2.0);
    }

    #[test]
    fn bump_profile_normalized_and_smooth() {
        let k = BumpKernel::new(DMatrix::from_element(1, 1, 0.7), 0.5).unwrap();
        // ∫ rho'^2 over the support must equal scale^2.
        let n = 100_000;
        let h = 0.5 / n as f64;
        let mut acc = 0.0;
        for i in 0..n {
            let a = k.rho_prime(i as f64 * h)[(0, 0)];
            let b = k.rho_prime((i + 1) as f64 * h)[(0, 0)];
            acc += 0.5 * h * (a * a + b * b);
        }
        assert!((acc - 0.49).abs() < 1e-6, "got {acc}");
        assert_eq!(k.rho_prime(0.0)[(0, 0)], 0.0);
        assert_eq!(k.rho_prime(0.5)[(0, 0)], 0.0);
        // rho levels off after the support.
        let total = k.rho(0.5)[(0, 0)];
        assert_eq!(k.rho(5.0)[(0, 0)], total);
    }

    #[test]
    fn bump_second_derivative_matches_finite_differences() {
        let k = BumpKernel::new(DMatrix::from_element(1, 1, 1.0), 1.0).unwrap();
        for &t in &[0.2, 0.4, 0.6, 0.8] {
            let eps = 1e-6;
            let fd = (k.rho_prime(t + eps)[(0, 0)] - k.rho_prime(t - eps)[(0, 0)]) / (2.0 * eps);
            let exact = k.rho_second(t)[(0, 0)];
            assert!((fd - exact).abs() < 1e-5 * (1.0 + exact.abs()), "t = {t}");
        }
    }

    #[test]
    fn registry_builds_by_name() {
        let reg = KernelRegistry::with_builtins();
        let desc = serde_json::json!({"kind": "ramp", "c": [[1.0, 0.0]], "t0": 1.0});
        let k = reg.build(&desc).unwrap();
        assert_eq!(k.dim_obs(), 1);
        assert_eq!(k.dim_signal(), 2);
        assert!(reg.build(&serde_json::json!({"kind": "nope"})).is_err());
    }
}
