//! Closed-form bounds: the gradient second-moment function `u(α)`, its minimum
//! `ũ`, the `4u/(λ²T)` convergence bound, privacy/learning trade-off curves
//! and upload accounting.

use serde::Serialize;

use crate::coding::NoiseParams;
use crate::error::{Error, Result};
use crate::privacy::epsilon_of;
use crate::training::alpha_oracle;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BoundInputs {
    pub p: f64,
    pub n_devices: usize,
    pub beta_sq: f64,
    pub c_sq: f64,
    pub d: usize,
    pub o: usize,
    pub sigma1_sq: f64,
    pub sigma2_sq: f64,
    pub lambda: f64,
    pub steps: usize,
}

impl BoundInputs {
    /// Setting of the trade-off study: d = 100, o = 10, p = 0.1, N = 5,
    /// β = 10, C = 1, T = 1000, λ = 1, unit noise.
    pub fn reference() -> Self {
        BoundInputs {
            p: 0.1,
            n_devices: 5,
            beta_sq: 100.0,
            c_sq: 1.0,
            d: 100,
            o: 10,
            sigma1_sq: 1.0,
            sigma2_sq: 1.0,
            lambda: 1.0,
            steps: 1000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.p) {
            return Err(Error::param("p", "must lie in [0, 1)"));
        }
        if self.n_devices == 0 || self.d == 0 || self.o == 0 || self.steps == 0 {
            return Err(Error::param("n_devices/d/o/steps", "must be positive"));
        }
        for (name, v) in [("beta_sq", self.beta_sq), ("c_sq", self.c_sq), ("lambda", self.lambda)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(name, "must be positive and finite"));
            }
        }
        for (name, v) in [("sigma1_sq", self.sigma1_sq), ("sigma2_sq", self.sigma2_sq)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::param(name, "must be finite and non-negative"));
            }
        }
        Ok(())
    }

    pub fn noise(&self) -> NoiseParams {
        NoiseParams {
            sigma1_sq: self.sigma1_sq,
            sigma2_sq: self.sigma2_sq,
        }
    }

    pub fn with_sigma_sq(&self, sigma_sq: f64) -> Self {
        BoundInputs {
            sigma1_sq: sigma_sq,
            sigma2_sq: sigma_sq,
            ..*self
        }
    }

    /// The weight minimizing [`u_of`] for these inputs.
    pub fn optimal_alpha(&self) -> f64 {
        alpha_oracle(self.p, self.n_devices, self.beta_sq, self.c_sq, self.d, self.o, self.noise())
    }

    /// Quadratic coefficient of `u` in α: `Nβ²p/(1−p) + Ndσ₁²C² + Nσ₂²od`.
    pub fn quadratic_coefficient(&self) -> f64 {
        let (n, d, o) = (self.n_devices as f64, self.d as f64, self.o as f64);
        n * self.beta_sq * self.p / (1.0 - self.p) + n * d * self.sigma1_sq * self.c_sq + n * self.sigma2_sq * o * d
    }
}

/// `u(α) = [α²p + (1−p)(α + (1−α)/(1−p))² + N − 1]·Nβ² + α²Ndσ₁²C² + α²Nσ₂²od`.
pub fn u_of(inputs: &BoundInputs, alpha: f64) -> f64 {
    let BoundInputs { p, beta_sq, c_sq, sigma1_sq, sigma2_sq, .. } = *inputs;
    let (n, d, o) = (inputs.n_devices as f64, inputs.d as f64, inputs.o as f64);
    let mixed = alpha + (1.0 - alpha) / (1.0 - p);
    let bracket = alpha * alpha * p + (1.0 - p) * mixed * mixed + n - 1.0;
    bracket * n * beta_sq + alpha * alpha * n * d * sigma1_sq * c_sq + alpha * alpha * n * sigma2_sq * o * d
}

/// `ũ = min_α u(α) = −a²/k + Nβ²/(1−p) + Nβ²(N−1)` with `a = pNβ²/(1−p)` and
/// `k` the [quadratic coefficient](BoundInputs::quadratic_coefficient).
pub fn u_tilde(inputs: &BoundInputs) -> f64 {
    let n = inputs.n_devices as f64;
    let p = inputs.p;
    let a = p * n * inputs.beta_sq / (1.0 - p);
    let k = inputs.quadratic_coefficient();
    let reduction = if k == 0.0 { 0.0 } else { a * a / k };
    -reduction + n * inputs.beta_sq / (1.0 - p) + n * inputs.beta_sq * (n - 1.0)
}

/// `4·u_sup / (λ²·T)`.
pub fn convergence_bound(inputs: &BoundInputs, u_sup: f64) -> f64 {
    4.0 * u_sup / (inputs.lambda * inputs.lambda * inputs.steps as f64)
}

/// How α is chosen along a trade-off curve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum CurvePolicy {
    Fixed(f64),
    Adaptive,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TradeoffPoint {
    pub sigma_sq: f64,
    pub epsilon: f64,
    pub alpha: f64,
    pub u: f64,
    pub bound: f64,
}

/// Evaluates (ε, bound) along `σ₁² = σ₂² = σ²` for each grid value.
pub fn tradeoff_curve(base: &BoundInputs, sigma_grid: &[f64], policy: CurvePolicy) -> Result<Vec<TradeoffPoint>> {
    base.validate()?;
    if sigma_grid.is_empty() {
        return Err(Error::param("sigma_grid", "grid must contain at least one value"));
    }
    if let CurvePolicy::Fixed(a) = policy {
        if !(0.0..=1.0).contains(&a) {
            return Err(Error::param("alpha", "fixed weight must lie in [0, 1]"));
        }
    }
    sigma_grid
        .iter()
        .map(|&s| {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::param("sigma_grid", format!("variances must be positive, got {s}")));
            }
            let inputs = base.with_sigma_sq(s);
            let epsilon = epsilon_of(inputs.noise(), inputs.d, inputs.o)?.epsilon;
            let (alpha, u) = match policy {
                CurvePolicy::Fixed(a) => (a, u_of(&inputs, a)),
                CurvePolicy::Adaptive => (inputs.optimal_alpha(), u_tilde(&inputs)),
            };
            Ok(TradeoffPoint {
                sigma_sq: s,
                epsilon,
                alpha,
                u,
                bound: convergence_bound(&inputs, u),
            })
        })
        .collect()
}

/// `points` values spaced evenly in log10 between `lo` and `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi >= lo && points >= 1) {
        return Err(Error::param("grid", "need 0 < lo <= hi and at least one point"));
    }
    if points == 1 {
        return Ok(vec![lo]);
    }
    let (a, b) = (lo.log10(), hi.log10());
    Ok((0..points)
        .map(|k| 10f64.powf(a + (b - a) * k as f64 / (points - 1) as f64))
        .collect())
}

/// Bits uploaded by the devices over a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct CommOverhead {
    /// One-shot coded upload: `φ(d² + od)N`.
    pub psi1: u128,
    /// Gradient uploads over `T` iterations: `φ·T·o·d·N`.
    pub psi2: u128,
    pub psi_total: u128,
}

pub fn comm_overhead(phi_bits: u64, d: u64, o: u64, n_devices: u64, steps: u64) -> Result<CommOverhead> {
    if phi_bits == 0 || d == 0 || o == 0 || n_devices == 0 {
        return Err(Error::param("phi/d/o/n", "must be positive"));
    }
    let mul = |a: u128, b: u128, what: &'static str| a.checked_mul(b).ok_or(Error::Overflow(what));
    let (phi, d, o, n, t) = (phi_bits as u128, d as u128, o as u128, n_devices as u128, steps as u128);
    let per_device = mul(d, d, "d²")?
        .checked_add(mul(o, d, "o·d")?)
        .ok_or(Error::Overflow("d² + o·d"))?;
    let psi1 = mul(mul(phi, per_device, "psi1")?, n, "psi1")?;
    let psi2 = mul(mul(mul(mul(phi, t, "psi2")?, o, "psi2")?, d, "psi2")?, n, "psi2")?;
    let psi_total = psi1.checked_add(psi2).ok_or(Error::Overflow("psi"))?;
    Ok(CommOverhead { psi1, psi2, psi_total })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_inputs(rng: &mut ChaCha8Rng) -> BoundInputs {
        BoundInputs {
            p: rng.random_range(0.0..0.95),
            n_devices: rng.random_range(1..200),
            beta_sq: 10f64.powf(rng.random_range(-2.0..4.0)),
            c_sq: 10f64.powf(rng.random_range(-2.0..2.0)),
            d: rng.random_range(1..120),
            o: rng.random_range(1..20),
            sigma1_sq: 10f64.powf(rng.random_range(-3.0..3.0)),
            sigma2_sq: 10f64.powf(rng.random_range(-3.0..3.0)),
            lambda: 10f64.powf(rng.random_range(-1.0..2.0)),
            steps: rng.random_range(1..5000),
        }
    }

    #[test]
    fn u_collapses_without_stragglers_or_noise() {
        let base = BoundInputs { p: 0.0, ..BoundInputs::reference() };
        let n2b2 = 25.0 * 100.0;
        assert!((u_of(&base, 0.0) - n2b2).abs() < 1e-9);
        let silent = BoundInputs { sigma1_sq: 0.0, sigma2_sq: 0.0, p: 0.3, ..BoundInputs::reference() };
        assert!((u_of(&silent, 1.0) - n2b2).abs() < 1e-9);
        assert!((u_tilde(&silent) - n2b2).abs() < 1e-9);
    }

    #[test]
    fn reference_setting_values() {
        let inputs = BoundInputs::reference();
        assert!((inputs.optimal_alpha() - 0.01).abs() < 1e-15);
        assert!((u_of(&inputs, 0.01) - 2555.0).abs() < 1e-6);
        assert!((u_tilde(&inputs) - 2555.0).abs() < 1e-6);
        assert!((convergence_bound(&inputs, 2555.0) - 10.22).abs() < 1e-12);
    }

    #[test]
    fn bound_arithmetic() {
        let inputs = BoundInputs { lambda: 2.0, steps: 100, ..BoundInputs::reference() };
        assert!((convergence_bound(&inputs, 1000.0) - 10.0).abs() < 1e-12);
        let doubled = BoundInputs { steps: 200, ..inputs };
        assert!((convergence_bound(&doubled, 1000.0) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn u_tilde_is_u_at_optimal_alpha() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let inputs = random_inputs(&mut rng);
            let direct = u_of(&inputs, inputs.optimal_alpha());
            let closed = u_tilde(&inputs);
            assert!(((direct - closed) / closed).abs() < 1e-9, "{inputs:?}");
        }
    }

    #[test]
    fn quadratic_coefficient_matches_numeric_extraction() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let inputs = random_inputs(&mut rng);
            // u is exactly quadratic in α: second difference / h² recovers 2k.
            let h = 0.25;
            let second = u_of(&inputs, 2.0 * h) - 2.0 * u_of(&inputs, h) + u_of(&inputs, 0.0);
            let k = second / (2.0 * h * h);
            let expected = inputs.quadratic_coefficient();
            assert!(((k - expected) / expected).abs() < 1e-9);
        }
    }

    #[test]
    fn u_tilde_falls_with_noise() {
        let base = BoundInputs::reference();
        let grid = log_grid(1e-3, 1e3, 30).unwrap();
        for w in grid.windows(2) {
            assert!(u_tilde(&base.with_sigma_sq(w[0])) < u_tilde(&base.with_sigma_sq(w[1])));
            let only1 = BoundInputs { sigma1_sq: w[0], ..base };
            let only1b = BoundInputs { sigma1_sq: w[1], ..base };
            assert!(u_tilde(&only1) < u_tilde(&only1b));
        }
    }

    #[test]
    fn curve_cases() {
        let base = BoundInputs::reference();
        assert!(tradeoff_curve(&base, &[], CurvePolicy::Adaptive).is_err());
        assert!(tradeoff_curve(&base, &[0.0], CurvePolicy::Adaptive).is_err());
        assert!(tradeoff_curve(&base, &[1.0], CurvePolicy::Fixed(1.5)).is_err());
        let one = tradeoff_curve(&base, &[1.0], CurvePolicy::Adaptive).unwrap();
        assert_eq!(one.len(), 1);
        assert!((one[0].bound - 10.22).abs() < 1e-9);

        let far = tradeoff_curve(&base, &[1e12], CurvePolicy::Adaptive).unwrap()[0];
        // α → 0: u → (1/(1 − p) + N − 1)·N·β²
        let limit = 4.0 * (1.0 / 0.9 + 4.0) * 5.0 * 100.0 / 1000.0;
        assert!(far.epsilon < 1e-9);
        assert!((far.bound - limit).abs() < 1e-6);
    }

    #[test]
    fn overhead_values() {
        let c = comm_overhead(32, 10, 10, 100, 1000).unwrap();
        assert_eq!((c.psi1, c.psi2, c.psi_total), (640_000, 320_000_000, 320_640_000));
        let zero = comm_overhead(32, 10, 10, 100, 0).unwrap();
        assert_eq!((zero.psi2, zero.psi_total), (0, zero.psi1));
        let long = comm_overhead(32, 10, 10, 100, 100_000).unwrap();
        assert_eq!(long.psi2 / long.psi1, 100_000 * 10 / 20);
        assert!(comm_overhead(u64::MAX, u64::MAX, u64::MAX, u64::MAX, u64::MAX).is_err());
        assert!(comm_overhead(0, 1, 1, 1, 1).is_err());
    }
}
