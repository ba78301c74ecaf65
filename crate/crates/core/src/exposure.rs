//! The exposure curve `η(x)` and the exposure-count distribution.
//!
//! `η(x) = (ρ1/ρ2) · x · exp(1 − x/ρ2)` is the probability of infection upon the
//! `x`-th exposure. It is zero at `x = 0`, peaks at `x = ρ2` with value `ρ1`, and
//! decays exponentially afterwards. Exposure counts by time `t` are Poisson with
//! mean `Λ_int(t) + Λ_ext(t)`.

use std::f64::consts::E;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameters of the exposure curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExposureCurve {
    /// Peak infection probability, in `(0, 1]`.
    pub rho1: f64,
    /// Exposure count at which the peak is attained, `> 0`.
    pub rho2: f64,
}

impl ExposureCurve {
    pub fn new(rho1: f64, rho2: f64) -> Result<Self> {
        if !(rho1 > 0.0 && rho1 <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "rho1 must lie in (0, 1], got {rho1}"
            )));
        }
        if !(rho2 > 0.0 && rho2.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "rho2 must be positive, got {rho2}"
            )));
        }
        Ok(ExposureCurve { rho1, rho2 })
    }

    #[inline]
    pub fn eta(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        self.rho1 / self.rho2 * x * (1.0 - x / self.rho2).exp()
    }

    /// `∫_0^a η(y) dy = ρ1·e·[ρ2 − e^{−a/ρ2}(a + ρ2)]`.
    #[inline]
    pub fn eta_integral(&self, a: f64) -> f64 {
        if a <= 0.0 {
            return 0.0;
        }
        let r = self.rho2;
        let u = a / r;
        // ρ2 − e^{−u}(a + ρ2) = ρ2·[1 − e^{−u}(1 + u)], written to keep precision for small u
        let bracket = if u < 1e-3 {
            // 1 − e^{−u}(1+u) = u²/2 − u³/3 + u⁴/8 − …
            u * u * (0.5 - u / 3.0 + u * u / 8.0 - u * u * u / 30.0)
        } else {
            -(-u).exp_m1() - u * (-u).exp()
        };
        self.rho1 * E * r * bracket
    }

    /// `(η(a), ∫_0^a η)` sharing one exponential.
    #[inline]
    pub fn eta_and_integral(&self, a: f64) -> (f64, f64) {
        if a <= 0.0 {
            return (0.0, 0.0);
        }
        let u = a / self.rho2;
        if u < 0.5 {
            return (self.eta(a), self.eta_integral(a));
        }
        let decay = (-u).exp();
        let scale = self.rho1 * E;
        (
            scale * u * decay,
            scale * self.rho2 * (1.0 - decay * (1.0 + u)),
        )
    }

    /// `lim_{a→∞} ∫_0^a η = ρ1·e·ρ2`.
    pub fn eta_total(&self) -> f64 {
        self.rho1 * E * self.rho2
    }
}

pub fn eta(curve: &ExposureCurve, x: f64) -> f64 {
    curve.eta(x)
}

pub fn eta_integral(curve: &ExposureCurve, a: f64) -> f64 {
    curve.eta_integral(a)
}

/// `ln(n!)`: exact summation for small `n`, Stirling series beyond.
pub fn ln_factorial(n: u64) -> f64 {
    if n < 32 {
        return (2..=n).map(|k| (k as f64).ln()).sum();
    }
    let x = n as f64;
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    x * x.ln() - x
        + 0.5 * (2.0 * std::f64::consts::PI * x).ln()
        + inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 * (1.0 / 1260.0 - inv2 / 1680.0)))
}

/// Probability of exactly `n` exposures when their expected number is `mean`:
/// the `dt → 0` limit of the binomial exposure model, `e^{−Λ} Λ^n / n!`.
pub fn p_exp(n: u64, mean: f64) -> f64 {
    if mean <= 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    if n < 32 {
        return (-mean + n as f64 * mean.ln() - ln_factorial(n)).exp();
    }
    // Stirling form with the large terms cancelled analytically
    let x = n as f64;
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let series = inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 * (1.0 / 1260.0 - inv2 / 1680.0)));
    (x * ((mean - x) / x).ln_1p() + (x - mean)
        - 0.5 * (2.0 * std::f64::consts::PI * x).ln()
        - series)
        .exp()
}

/// Poisson probabilities over the window of counts that carries all but
/// ~1e-10 of the mass.
#[derive(Debug, Clone, PartialEq)]
pub struct PoissonWindow {
    /// Count corresponding to `weights[0]`.
    pub first: usize,
    pub weights: Vec<f64>,
}

impl PoissonWindow {
    pub fn new(mean: f64) -> Self {
        let (first, last) = poisson_support(mean);
        if mean <= 0.0 {
            return PoissonWindow {
                first: 0,
                weights: vec![1.0],
            };
        }
        let mut weights = Vec::with_capacity(last - first + 1);
        let mut p = p_exp(first as u64, mean);
        weights.push(p);
        for n in first + 1..=last {
            p *= mean / n as f64;
            weights.push(p);
        }
        PoissonWindow { first, weights }
    }

    pub fn last(&self) -> usize {
        self.first + self.weights.len() - 1
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.weights
            .iter()
            .enumerate()
            .map(move |(i, &w)| (self.first + i, w))
    }
}

/// Truncation range `[lo, hi]` for the Poisson sum: `hi = max(30, ⌈Λ + 12√Λ⌉)`
/// and `lo` symmetric below the mean.
pub fn poisson_support(mean: f64) -> (usize, usize) {
    if mean <= 0.0 {
        return (0, 0);
    }
    let spread = 12.0 * mean.sqrt();
    let hi = (mean + spread).ceil().max(30.0) as usize;
    let lo = (mean - spread).floor().max(0.0) as usize;
    (lo, hi)
}

/// `Σ_n P_exp(n; Λ) · Π_{k ≤ n} (1 − η(k))`: probability of still being
/// uninfected with `Λ` expected exposures.
pub fn infection_survival(curve: &ExposureCurve, mean: f64) -> f64 {
    let window = PoissonWindow::new(mean);
    let mut survive = 1.0;
    let mut k = 0usize;
    let mut total = 0.0;
    for (n, w) in window.iter() {
        while k < n {
            k += 1;
            survive *= 1.0 - curve.eta(k as f64);
        }
        total += w * survive;
    }
    total
}

/// Running products `Π_{k ≤ n} (1 − η(k))` for one curve, tabulated until
/// `η` has decayed below double precision so later entries are constant.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalTable {
    curve: ExposureCurve,
    products: Vec<f64>,
}

impl SurvivalTable {
    pub fn new(curve: &ExposureCurve) -> Self {
        let mut products = vec![1.0];
        let mut survive = 1.0;
        let mut k = 1usize;
        loop {
            let eta = curve.eta(k as f64);
            survive *= 1.0 - eta;
            products.push(survive);
            if k as f64 > curve.rho2 && eta < 1e-18 {
                break;
            }
            k += 1;
        }
        SurvivalTable {
            curve: *curve,
            products,
        }
    }

    pub fn curve(&self) -> &ExposureCurve {
        &self.curve
    }

    /// `Π_{k ≤ n} (1 − η(k))`.
    pub fn product(&self, n: usize) -> f64 {
        self.products[n.min(self.products.len() - 1)]
    }

    /// Survival as `Λ → ∞`.
    pub fn floor(&self) -> f64 {
        self.products[self.products.len() - 1]
    }

    /// Survival with `mean` expected exposures and its derivative in `mean`.
    pub fn survival_and_slope(&self, mean: f64) -> (f64, f64) {
        if mean <= 0.0 {
            return (1.0, -self.curve.eta(1.0));
        }
        let (first, last) = poisson_support(mean);
        let mut w = p_exp(first as u64, mean);
        let mut value = 0.0;
        let mut slope = 0.0;
        let mut q = self.product(first);
        for n in first..=last {
            let next = self.product(n + 1);
            value += w * q;
            slope += w * (next - q);
            q = next;
            w *= mean / (n + 1) as f64;
        }
        (value, slope)
    }
}

/// Infection CDF `F = Σ_n P_exp(n; Λ) · [1 − Π_{k ≤ n}(1 − η(k))]`.
pub fn infection_cdf(curve: &ExposureCurve, mean: f64) -> f64 {
    if mean <= 0.0 {
        return 0.0;
    }
    (1.0 - infection_survival(curve, mean)).max(0.0)
}
