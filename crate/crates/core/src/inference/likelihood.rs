//! Log-likelihood of the observed infections and the `ρ1` stationarity solve.
//!
//! Each node's exposure count at its horizon is Poisson with mean
//! `Λ_int^(i) + Λ_ext`. An infected node contributes
//! `Σ_n w(n)[log η(n) + Σ_{k<n} log(1−η(k))]`, where `w(n)` is the Poisson
//! probability of `n − 1` earlier exposures; an uninfected node contributes
//! `Σ_n P(n) Σ_{k≤n} log(1−η(k))`.
//!
//! Both sums only depend on the exposure counts through two mass vectors:
//! `A_k`, the expected number of infections that happened on the `k`-th
//! exposure, and `B_k`, the expected number of `k`-th exposures that were
//! survived. With those, `L = Σ_k A_k log η(k) + B_k log(1−η(k))` and the
//! stationarity condition in `ρ1` is `Σ_k A_k = Σ_k B_k · η(k)/(1−η(k))`.
//!
//! The full likelihood keeps the logarithm outside the sum over exposure
//! counts. Its stationarity condition has the same form once the Poisson
//! weights are replaced by each node's count distribution conditioned on its
//! outcome, so repeatedly solving with reweighted masses climbs it.

use crate::exposure::{ExposureCurve, PoissonWindow, SurvivalTable};
use crate::numeric::{bisect, compensated_sum, KahanSum};

use super::profile::EventProfile;
use super::tracked::TrackedNodeSet;

/// Floor used in place of zero inside logarithms.
pub const LOG_FLOOR: f64 = 1e-300;

/// Range of admissible `ρ1` values.
pub const RHO1_MIN: f64 = 1e-6;
pub const RHO1_MAX: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct CountMasses {
    /// `infect_at[k]`: expected infections on the `k`-th exposure (index 0 unused).
    pub infect_at: Vec<f64>,
    /// `survived[k]`: expected survived `k`-th exposures (index 0 unused).
    pub survived: Vec<f64>,
    pub infections: f64,
}

/// Law of the index of the infecting exposure: the exposures already
/// received before it are Poisson with mean `mean`, so it is `1 + Poisson`.
fn infecting_window(mean: f64) -> PoissonWindow {
    let w = PoissonWindow::new(mean);
    PoissonWindow {
        first: w.first + 1,
        weights: w.weights,
    }
}

/// Reweights `window` by `factor(n)` and renormalizes; keeps the prior
/// weights when every factor vanishes.
fn reweight(window: &mut PoissonWindow, factor: impl Fn(usize) -> f64) {
    let first = window.first;
    let scaled: Vec<f64> = window
        .weights
        .iter()
        .enumerate()
        .map(|(i, &w)| w * factor(first + i))
        .collect();
    let total: f64 = scaled.iter().sum();
    if total > 0.0 && total.is_finite() {
        window.weights = scaled.into_iter().map(|w| w / total).collect();
    }
}

impl CountMasses {
    /// Masses under the Poisson exposure law.
    pub fn collect(tracked: &TrackedNodeSet, profile: &EventProfile) -> Self {
        Self::collect_with(tracked, profile, None)
    }

    /// Masses under each node's exposure law conditioned on its observed
    /// outcome given `curve`: infected nodes weight `n` by
    /// `η(n) Π_{k<n}(1−η(k))`, uninfected ones by `Π_{k≤n}(1−η(k))`.
    pub fn collect_posterior(
        tracked: &TrackedNodeSet,
        profile: &EventProfile,
        curve: &ExposureCurve,
    ) -> Self {
        Self::collect_with(tracked, profile, Some(&SurvivalTable::new(curve)))
    }

    fn collect_with(
        tracked: &TrackedNodeSet,
        profile: &EventProfile,
        posterior: Option<&SurvivalTable>,
    ) -> Self {
        let ext_max = profile.cumulative_at(tracked.tau_max);
        let mut infection_end: Vec<KahanSum> = Vec::new();
        let mut survival_end: Vec<KahanSum> = Vec::new();
        let grow = |v: &mut Vec<KahanSum>, n: usize| {
            if v.len() <= n {
                v.resize(n + 1, KahanSum::new());
            }
        };

        for node in &tracked.infected {
            let t = node.infected_at.unwrap_or(tracked.tau_max);
            let mean = node.internal_at_horizon + profile.cumulative_at(t);
            let mut w = infecting_window(mean);
            if let Some(table) = posterior {
                let curve = table.curve();
                reweight(&mut w, |n| curve.eta(n as f64) * table.product(n - 1));
            }
            grow(&mut infection_end, w.last());
            for (n, p) in w.iter() {
                infection_end[n].add(p);
            }
        }
        for node in &tracked.exposed {
            let mut w = PoissonWindow::new(node.internal_at_horizon + ext_max);
            if let Some(table) = posterior {
                reweight(&mut w, |n| table.product(n));
            }
            grow(&mut survival_end, w.last());
            for (n, p) in w.iter() {
                survival_end[n].add(p);
            }
        }
        if tracked.grouped > 0 {
            let g = tracked.grouped as f64;
            let mut w = PoissonWindow::new(ext_max);
            if let Some(table) = posterior {
                reweight(&mut w, |n| table.product(n));
            }
            grow(&mut survival_end, w.last());
            for (n, p) in w.iter() {
                survival_end[n].add(g * p);
            }
        }

        let len = infection_end.len().max(survival_end.len()).max(2);
        let value = |v: &Vec<KahanSum>, n: usize| v.get(n).map_or(0.0, KahanSum::value);
        let infect_at: Vec<f64> = (0..len)
            .map(|k| {
                if k == 0 {
                    0.0
                } else {
                    value(&infection_end, k)
                }
            })
            .collect();
        // survived[k] = Σ_{n>k} infection_end[n] + Σ_{n≥k} survival_end[n]
        let mut survived = vec![0.0; len];
        let mut inf_tail = 0.0;
        let mut surv_tail = 0.0;
        for k in (1..len).rev() {
            surv_tail += value(&survival_end, k);
            survived[k] = inf_tail + surv_tail;
            inf_tail += value(&infection_end, k);
        }
        CountMasses {
            infect_at,
            survived,
            infections: tracked.infected.len() as f64,
        }
    }

    pub fn max_count(&self) -> usize {
        self.infect_at.len() - 1
    }

    /// `(L, floored)` for the given curve.
    pub fn log_likelihood(&self, curve: &ExposureCurve) -> (f64, bool) {
        let mut floored = false;
        let mut acc = KahanSum::new();
        for k in 1..self.infect_at.len() {
            let eta = curve.eta(k as f64);
            let a = self.infect_at[k];
            let b = self.survived[k];
            if a > 0.0 {
                if eta <= 0.0 {
                    floored = true;
                }
                acc.add(a * eta.max(LOG_FLOOR).ln());
            }
            if b > 0.0 {
                let q = 1.0 - eta;
                if q <= 0.0 {
                    floored = true;
                }
                acc.add(b * q.max(LOG_FLOOR).ln());
            }
        }
        (acc.value(), floored)
    }

    /// `Σ_k B_k η(k)/(1−η(k))`, strictly increasing in `ρ1`.
    pub fn stationarity_rhs(&self, rho1: f64, rho2: f64) -> f64 {
        let curve = ExposureCurve { rho1, rho2 };
        compensated_sum((1..self.survived.len()).map(|k| {
            let b = self.survived[k];
            if b == 0.0 {
                return 0.0;
            }
            let eta = curve.eta(k as f64);
            if eta >= 1.0 {
                f64::INFINITY
            } else {
                b * eta / (1.0 - eta)
            }
        }))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rho1Solution {
    pub rho1: f64,
    /// The root lies at or beyond an end of `[RHO1_MIN, RHO1_MAX]`.
    pub saturated: bool,
}

/// Root of `|I| = Σ_k B_k η(k)/(1−η(k))` in `ρ1`, clamped to the admissible range.
pub fn solve_rho1_from_masses(masses: &CountMasses, rho2: f64) -> Rho1Solution {
    let target = compensated_sum(masses.infect_at.iter().copied());
    let f = |rho1: f64| masses.stationarity_rhs(rho1, rho2) - target;
    if f(RHO1_MAX) <= 0.0 {
        return Rho1Solution {
            rho1: RHO1_MAX,
            saturated: true,
        };
    }
    if f(RHO1_MIN) >= 0.0 {
        return Rho1Solution {
            rho1: RHO1_MIN,
            saturated: true,
        };
    }
    // bisection on log ρ1 keeps relative precision across the whole range
    let log_root = bisect(|x| f(x.exp()), RHO1_MIN.ln(), RHO1_MAX.ln(), 1e-14);
    Rho1Solution {
        rho1: log_root.exp().clamp(RHO1_MIN, RHO1_MAX),
        saturated: false,
    }
}

pub fn solve_rho1(tracked: &TrackedNodeSet, rho2: f64, profile: &EventProfile) -> Rho1Solution {
    solve_rho1_from_masses(&CountMasses::collect(tracked, profile), rho2)
}

/// Approximate log-likelihood. The flag reports whether a zero probability
/// had to be floored at [`LOG_FLOOR`].
pub fn log_likelihood(
    tracked: &TrackedNodeSet,
    curve: &ExposureCurve,
    profile: &EventProfile,
) -> (f64, bool) {
    CountMasses::collect(tracked, profile).log_likelihood(curve)
}

/// Full log-likelihood `Σ_{i∈I} log dF_i/dt + Σ_{i∉I} log(1 − F_i)` with
/// integer exposure counts. The infection density of node `i` is its
/// exposure rate `λ_ext + λ_int^(i)` times the probability that the next
/// exposure infects it.
pub fn exact_log_likelihood(
    tracked: &TrackedNodeSet,
    curve: &ExposureCurve,
    profile: &EventProfile,
) -> (f64, bool) {
    let table = SurvivalTable::new(curve);
    let mut floored = false;
    let mut log_floored = |v: f64| {
        if v <= 0.0 || !v.is_finite() {
            floored = true;
            LOG_FLOOR.ln()
        } else {
            v.ln()
        }
    };
    let mut acc = KahanSum::new();
    for node in &tracked.infected {
        let t = node.infected_at.unwrap_or(tracked.tau_max);
        let mean = node.internal_at_horizon + profile.cumulative_at(t);
        let rate = node.internal_rate_at_horizon + profile.rate_at(t);
        let hit: f64 = infecting_window(mean)
            .iter()
            .map(|(n, w)| w * curve.eta(n as f64) * table.product(n - 1))
            .sum();
        acc.add(log_floored(rate) + log_floored(hit));
    }
    let ext_max = profile.cumulative_at(tracked.tau_max);
    for node in &tracked.exposed {
        let (s, _) = table.survival_and_slope(node.internal_at_horizon + ext_max);
        acc.add(log_floored(s));
    }
    if tracked.grouped > 0 {
        let (s, _) = table.survival_and_slope(ext_max);
        acc.add(tracked.grouped as f64 * log_floored(s));
    }
    (acc.value(), floored)
}

/// Stationary `ρ1` of the full likelihood after one reweighting step at `curve`.
pub fn solve_rho1_exact_step(
    tracked: &TrackedNodeSet,
    curve: &ExposureCurve,
    profile: &EventProfile,
) -> Rho1Solution {
    solve_rho1_from_masses(
        &CountMasses::collect_posterior(tracked, profile, curve),
        curve.rho2,
    )
}
