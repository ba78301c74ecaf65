//! Fitting the exposure curve and the event profile to one observed contagion.
//!
//! For each integer `ρ2` the fit alternates between the `ρ1` stationarity
//! solve (profile fixed) and the event-profile solve (curve fixed) until both
//! settle, scores the pair by log-likelihood, and keeps the best. The profile
//! is re-solved once more at the winning curve.

mod event_solver;
mod likelihood;
mod profile;
mod tracked;

use serde::{Deserialize, Serialize};

pub use event_solver::{
    expected_survivors, solve_anchor, solve_anchor_from, solve_event_profile,
    solve_event_profile_from, ProfileSolution, SolverSettings, SurvivalForm,
};
pub use likelihood::{
    exact_log_likelihood, log_likelihood, solve_rho1, solve_rho1_exact_step,
    solve_rho1_from_masses, CountMasses, Rho1Solution, LOG_FLOOR, RHO1_MAX, RHO1_MIN,
};
pub use profile::{dense_anchors, interpolate_profile, quantile_anchors, Anchor, EventProfile};
pub use tracked::{build_tracked_set, AnchorColumn, TrackedNode, TrackedNodeSet};

use crate::error::{Error, Result};
use crate::exposure::ExposureCurve;
use crate::hazards::HazardModel;
use crate::network::Network;
use crate::trace::ContagionTrace;

/// Objective used to pick `ρ1` and to compare values of `ρ2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LikelihoodForm {
    /// Poisson-weighted sums of per-exposure log probabilities, without the
    /// exposure-rate factor of the infection density.
    #[default]
    Approximate,
    /// Log infection densities and log survival probabilities.
    Exact,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    /// Number of quantile anchors.
    pub anchors: usize,
    /// Anchor at every distinct infection time instead of quantiles.
    pub dense: bool,
    /// `ρ2` is scanned over `1..=rho2_max`.
    pub rho2_max: u32,
    /// Fold never-internally-exposed nodes into one term.
    pub grouping: bool,
    pub max_iterations: usize,
    /// Relative change in `ρ1` below which the alternation may stop.
    pub rho1_tolerance: f64,
    /// Largest relative change of any anchor below which it may stop.
    pub profile_tolerance: f64,
    /// Starting `ρ1` for each `ρ2`.
    pub rho1_init: f64,
    pub solver: SolverSettings,
    pub likelihood: LikelihoodForm,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            anchors: 20,
            dense: false,
            rho2_max: 20,
            grouping: true,
            max_iterations: 50,
            rho1_tolerance: 1e-4,
            profile_tolerance: 1e-3,
            rho1_init: 0.5,
            solver: SolverSettings::default(),
            likelihood: LikelihoodForm::Approximate,
        }
    }
}

impl FitOptions {
    /// Integer exposure counts throughout: discrete survival in the profile
    /// solve and the full likelihood for `ρ1` and `ρ2`.
    pub fn exact() -> Self {
        FitOptions {
            solver: SolverSettings {
                survival: SurvivalForm::Discrete,
                ..SolverSettings::default()
            },
            likelihood: LikelihoodForm::Exact,
            ..FitOptions::default()
        }
    }

    fn log_likelihood(
        &self,
        tracked: &TrackedNodeSet,
        curve: &ExposureCurve,
        profile: &EventProfile,
    ) -> (f64, bool) {
        match self.likelihood {
            LikelihoodForm::Approximate => log_likelihood(tracked, curve, profile),
            LikelihoodForm::Exact => exact_log_likelihood(tracked, curve, profile),
        }
    }

    fn stationary_rho1(
        &self,
        tracked: &TrackedNodeSet,
        curve: &ExposureCurve,
        profile: &EventProfile,
    ) -> Rho1Solution {
        match self.likelihood {
            LikelihoodForm::Approximate => solve_rho1(tracked, curve.rho2, profile),
            LikelihoodForm::Exact => solve_rho1_exact_step(tracked, curve, profile),
        }
    }
}

/// Outcome of the alternation at one fixed `ρ2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Rho2Scan {
    pub rho2: u32,
    pub rho1: f64,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Expected exposures of one infected node at its infection time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeSplit {
    pub node: usize,
    pub time: f64,
    pub external: f64,
    pub internal: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferenceResult {
    pub curve: ExposureCurve,
    pub profile: EventProfile,
    pub log_likelihood: f64,
    /// The winning `ρ2` converged.
    pub converged: bool,
    pub scan: Vec<Rho2Scan>,
    pub rho1_saturated: bool,
    pub saturated_anchors: Vec<usize>,
    pub clamped_anchors: Vec<usize>,
    pub likelihood_floored: bool,
    pub splits: Vec<NodeSplit>,
    pub n_infections: usize,
    pub duration_hours: f64,
}

impl InferenceResult {
    /// `ρ2` as the integer the scan ran over.
    pub fn rho2(&self) -> u32 {
        self.curve.rho2.round() as u32
    }

    pub fn iterations(&self) -> usize {
        self.scan
            .iter()
            .find(|s| s.rho2 == self.rho2())
            .map_or(0, |s| s.iterations)
    }

    pub fn to_json(&self) -> ResultJson {
        ResultJson {
            rho1: self.curve.rho1,
            rho2: self.rho2(),
            log_likelihood: self.log_likelihood,
            converged: self.converged,
            anchors: self.profile.anchors(),
            external_fraction: external_fraction(self).aggregate,
            n_infections: self.n_infections,
            duration_hours: self.duration_hours,
        }
    }
}

/// Result JSON artifact; key names and order are part of the file contract.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultJson {
    pub rho1: f64,
    pub rho2: u32,
    pub log_likelihood: f64,
    pub converged: bool,
    pub anchors: Vec<Anchor>,
    pub external_fraction: f64,
    pub n_infections: usize,
    pub duration_hours: f64,
}

impl ResultJson {
    pub fn profile(&self) -> Result<EventProfile> {
        EventProfile::from_anchors(&self.anchors)
    }
}

/// Anchor times for a trace under the given options.
pub fn anchor_times(trace: &ContagionTrace, opts: &FitOptions) -> Vec<f64> {
    if opts.dense {
        dense_anchors(trace)
    } else {
        quantile_anchors(trace, opts.anchors.max(1))
    }
}

struct Alternation {
    rho1: f64,
    solution: ProfileSolution,
    iterations: usize,
    converged: bool,
}

/// Alternates the two solves at fixed `ρ2`. Each round maps `ρ1` to the
/// stationary `ρ1` of the profile solved at it; the fixed point of that map
/// is found with secant steps in `log ρ1`, kept inside a bracket that starts
/// as the whole admissible range and falls back to the plain alternation step
/// or bisection.
fn alternate(
    tracked: &TrackedNodeSet,
    rho2: f64,
    opts: &FitOptions,
    start: Option<(f64, &EventProfile)>,
) -> Alternation {
    let solve_at = |log_rho1: f64, warm: Option<&EventProfile>| {
        let curve = ExposureCurve {
            rho1: log_rho1.exp().clamp(RHO1_MIN, RHO1_MAX),
            rho2,
        };
        solve_event_profile_from(tracked, &curve, &tracked.survivors, warm, &opts.solver)
    };
    let mut lo = RHO1_MIN.ln();
    let mut hi = RHO1_MAX.ln();
    let (init, warm) = match start {
        Some((rho1, profile)) => (rho1, Some(profile)),
        None => (opts.rho1_init, None),
    };
    let mut x = init.clamp(RHO1_MIN, RHO1_MAX).ln();
    let mut solution = solve_at(x, warm);
    let mut previous: Option<(f64, f64)> = None;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iterations {
        iterations += 1;
        let curve = ExposureCurve {
            rho1: x.exp().clamp(RHO1_MIN, RHO1_MAX),
            rho2,
        };
        let gx = opts
            .stationary_rho1(tracked, &curve, &solution.profile)
            .rho1
            .ln();
        let residual = gx - x;
        if residual > 0.0 {
            lo = x;
        } else if residual < 0.0 {
            hi = x;
        }
        let mut next = gx;
        if let Some((xp, rp)) = previous {
            if residual != rp {
                next = x - residual * (x - xp) / (residual - rp);
            }
        }
        if !(next > lo && next < hi) {
            next = if gx > lo && gx < hi {
                gx
            } else {
                0.5 * (lo + hi)
            };
        }
        if residual == 0.0 {
            next = x;
        }
        previous = Some((x, residual));
        let candidate = solve_at(next, Some(&solution.profile));
        let d_rho1 = (next - x).abs().exp_m1();
        let d_profile = candidate.profile.max_relative_change(&solution.profile);
        x = next;
        solution = candidate;
        if residual.abs().exp_m1() < opts.rho1_tolerance
            && d_rho1 < opts.rho1_tolerance
            && d_profile < opts.profile_tolerance
        {
            converged = true;
            break;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    Alternation {
        rho1: x.exp().clamp(RHO1_MIN, RHO1_MAX),
        solution,
        iterations,
        converged,
    }
}

/// Fits `(ρ1, ρ2, Λ_ext)` to one contagion.
pub fn fit(
    net: &Network,
    trace: &ContagionTrace,
    hazard: &HazardModel,
    opts: &FitOptions,
) -> Result<InferenceResult> {
    if trace.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 infections, got {}",
            trace.len()
        )));
    }
    if trace.last_time().unwrap() <= 0.0 {
        return Err(Error::InsufficientData(
            "all infections happen at t = 0; no time course to fit".into(),
        ));
    }
    if opts.rho2_max < 1 {
        return Err(Error::InvalidConfig("rho2_max must be at least 1".into()));
    }
    hazard.validate()?;
    let anchors = anchor_times(trace, opts);
    let tracked = build_tracked_set(net, trace, hazard, &anchors, opts.grouping)?;
    fit_tracked(&tracked, trace, opts)
}

/// The alternating scan on a prepared [`TrackedNodeSet`].
pub fn fit_tracked(
    tracked: &TrackedNodeSet,
    trace: &ContagionTrace,
    opts: &FitOptions,
) -> Result<InferenceResult> {
    let mut scan = Vec::with_capacity(opts.rho2_max as usize);
    let mut best: Option<(f64, u32, f64, bool)> = None;
    let mut previous: Option<Alternation> = None;
    for rho2 in 1..=opts.rho2_max {
        let r2 = rho2 as f64;
        // the neighbouring ρ2 is a good starting point when it converged
        let start = previous
            .as_ref()
            .filter(|p| p.converged)
            .map(|p| (p.rho1, &p.solution.profile));
        let alt = alternate(tracked, r2, opts, start);
        let curve = ExposureCurve {
            rho1: alt.rho1,
            rho2: r2,
        };
        let (l, _) = opts.log_likelihood(tracked, &curve, &alt.solution.profile);
        log::debug!(
            "rho2={rho2} rho1={:.6} L={l:.6} iterations={} converged={}",
            alt.rho1,
            alt.iterations,
            alt.converged
        );
        scan.push(Rho2Scan {
            rho2,
            rho1: alt.rho1,
            log_likelihood: l,
            iterations: alt.iterations,
            converged: alt.converged,
        });
        if best.is_none_or(|(best_l, ..)| l >= best_l) {
            best = Some((l, rho2, alt.rho1, alt.converged));
        }
        previous = Some(alt);
    }
    let (_, rho2, rho1, converged) = best.expect("rho2_max >= 1");
    let curve = ExposureCurve {
        rho1,
        rho2: rho2 as f64,
    };
    let final_solution = solve_event_profile(tracked, &curve, &tracked.survivors, &opts.solver);
    let (l, floored) = opts.log_likelihood(tracked, &curve, &final_solution.profile);
    let rho1_saturated = opts
        .stationary_rho1(tracked, &curve, &final_solution.profile)
        .saturated;

    let splits = tracked
        .infected
        .iter()
        .map(|n| {
            let t = n.infected_at.unwrap_or(tracked.tau_max);
            NodeSplit {
                node: n.node,
                time: t,
                external: final_solution.profile.cumulative_at(t),
                internal: n.internal_at_horizon,
            }
        })
        .collect();

    Ok(InferenceResult {
        curve,
        profile: final_solution.profile,
        log_likelihood: l,
        converged,
        scan,
        rho1_saturated,
        saturated_anchors: final_solution.saturated,
        clamped_anchors: final_solution.clamped,
        likelihood_floored: floored,
        splits,
        n_infections: trace.len(),
        duration_hours: trace.duration(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExternalFraction {
    /// `(node, Λ_ext / (Λ_ext + Λ_int))` at each infection.
    pub per_node: Vec<(usize, f64)>,
    /// `Σ Λ_ext / Σ (Λ_ext + Λ_int)` over infected nodes.
    pub aggregate: f64,
    /// Nodes whose expected exposure at infection was zero; counted as
    /// purely external.
    pub degenerate: Vec<usize>,
}

pub fn external_fraction_of(splits: &[NodeSplit]) -> ExternalFraction {
    let mut per_node = Vec::with_capacity(splits.len());
    let mut degenerate = Vec::new();
    let mut ext = 0.0;
    let mut total = 0.0;
    for s in splits {
        let denom = s.external + s.internal;
        if denom > 0.0 {
            per_node.push((s.node, s.external / denom));
        } else {
            per_node.push((s.node, 1.0));
            degenerate.push(s.node);
        }
        ext += s.external;
        total += denom;
    }
    let aggregate = if total > 0.0 { ext / total } else { 1.0 };
    ExternalFraction {
        per_node,
        aggregate,
        degenerate,
    }
}

pub fn external_fraction(result: &InferenceResult) -> ExternalFraction {
    external_fraction_of(&result.splits)
}
