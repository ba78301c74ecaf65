//! Event-profile inference for a fixed exposure curve.
//!
//! At each anchor `t_m` the expected number of uninfected nodes,
//! `Σ_i exp(−∫_0^{Λ_m + Λ_int^(i)(t_m)} η)`, strictly decreases in `Λ_m`; the
//! observed count `S(t_m)` pins `Λ_m` down by bisection.

use crate::exposure::{ExposureCurve, SurvivalTable};
use crate::numeric::chunked_sum_pair;

use super::profile::EventProfile;
use super::tracked::{AnchorColumn, TrackedNodeSet};

/// How a node's survival probability is computed from its expected exposures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SurvivalForm {
    /// `exp(−∫_0^Λ η)`, treating the exposure count as continuous.
    #[default]
    Continuous,
    /// `Σ_n P_exp(n; Λ) Π_{k ≤ n} (1 − η(k))` over integer counts.
    Discrete,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    /// Absolute tolerance on each `Λ_m`.
    pub tolerance: f64,
    /// Value assigned to anchors that cannot be matched at any finite `Λ`.
    pub cap: f64,
    pub survival: SurvivalForm,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            tolerance: 1e-8,
            cap: 1e4,
            survival: SurvivalForm::Continuous,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileSolution {
    pub profile: EventProfile,
    /// Anchors where even `Λ → ∞` leaves more expected survivors than observed.
    pub saturated: Vec<usize>,
    /// Anchors where the previous anchor's value already explains the
    /// observed survivors, so `Λ_m` was held flat.
    pub clamped: Vec<usize>,
}

/// Per-node survival model shared by every anchor of one solve.
enum Survival<'a> {
    Continuous(&'a ExposureCurve),
    Discrete(SurvivalTable),
}

impl<'a> Survival<'a> {
    fn new(curve: &'a ExposureCurve, form: SurvivalForm) -> Self {
        match form {
            SurvivalForm::Continuous => Survival::Continuous(curve),
            SurvivalForm::Discrete => Survival::Discrete(SurvivalTable::new(curve)),
        }
    }

    /// Survival at `mean` expected exposures and its derivative.
    fn term(&self, mean: f64) -> (f64, f64) {
        match self {
            Survival::Continuous(curve) => {
                let (eta, h) = curve.eta_and_integral(mean);
                let s = (-h).exp();
                (s, -eta * s)
            }
            Survival::Discrete(table) => table.survival_and_slope(mean),
        }
    }

    /// Survival as `Λ → ∞`.
    fn floor(&self) -> f64 {
        match self {
            Survival::Continuous(curve) => (-curve.eta_total()).exp(),
            Survival::Discrete(table) => table.floor(),
        }
    }
}

/// Expected survivors at one anchor given external level `lambda`.
pub fn expected_survivors(
    column: &AnchorColumn,
    curve: &ExposureCurve,
    form: SurvivalForm,
    lambda: f64,
) -> f64 {
    survivors_and_slope(column, &Survival::new(curve, form), lambda).0
}

/// Expected survivors and their derivative in `lambda`.
fn survivors_and_slope(column: &AnchorColumn, model: &Survival, lambda: f64) -> (f64, f64) {
    let (mut value, mut slope) = chunked_sum_pair(&column.positive, |&x| model.term(lambda + x));
    if column.zero_count > 0 {
        let (s, d) = model.term(lambda);
        value += column.zero_count as f64 * s;
        slope += column.zero_count as f64 * d;
    }
    (value, slope)
}

/// Solves one anchor with `Λ ≥ lower`. Returns `(Λ, saturated, clamped)`.
pub fn solve_anchor(
    column: &AnchorColumn,
    curve: &ExposureCurve,
    survivors: f64,
    lower: f64,
    settings: &SolverSettings,
) -> (f64, bool, bool) {
    solve_anchor_from(column, curve, survivors, lower, None, settings)
}

/// [`solve_anchor`] starting the search at `guess`. Newton steps are taken
/// whenever they stay inside the current bracket, bisection otherwise.
pub fn solve_anchor_from(
    column: &AnchorColumn,
    curve: &ExposureCurve,
    survivors: f64,
    lower: f64,
    guess: Option<f64>,
    settings: &SolverSettings,
) -> (f64, bool, bool) {
    let model = Survival::new(curve, settings.survival);
    solve_with(column, &model, survivors, lower, guess, settings)
}

fn solve_with(
    column: &AnchorColumn,
    model: &Survival,
    survivors: f64,
    lower: f64,
    guess: Option<f64>,
    settings: &SolverSettings,
) -> (f64, bool, bool) {
    let cap = settings.cap.max(lower);
    let floor = column.population() as f64 * model.floor();
    let eval = |x: f64| {
        let (v, d) = survivors_and_slope(column, model, x);
        (v - survivors, d)
    };

    let mut lo = lower;
    let mut hi = f64::INFINITY;
    let mut x = match guess {
        Some(g) if g > lower && g < cap => g,
        _ => lower,
    };
    let (mut f, mut d) = eval(x);
    if x > lower {
        if f > 0.0 {
            lo = x;
        } else {
            hi = x;
            let (fl, dl) = eval(lower);
            (x, f, d) = (lower, fl, dl);
        }
    }
    if x == lower && f <= 0.0 {
        return (lower, false, f < 0.0);
    }
    if floor >= survivors {
        return (cap, true, false);
    }

    for _ in 0..400 {
        if f == 0.0 {
            return (x, false, false);
        }
        if f > 0.0 {
            lo = lo.max(x);
        } else {
            hi = hi.min(x);
        }
        if hi - lo <= settings.tolerance {
            return (0.5 * (lo + hi), false, false);
        }
        let newton = if d < 0.0 { x - f / d } else { f64::NAN };
        let next = if newton > lo && newton < hi {
            newton
        } else if hi.is_finite() {
            0.5 * (lo + hi)
        } else {
            lo + 2.0 * (lo - lower).max(1.0)
        };
        if next >= cap && !hi.is_finite() {
            let (fc, _) = eval(cap);
            if fc > 0.0 {
                return (cap, true, false);
            }
            hi = cap;
            x = 0.5 * (lo + hi);
        } else {
            if (next - x).abs() <= 0.25 * settings.tolerance {
                return (next, false, false);
            }
            x = next;
        }
        (f, d) = eval(x);
    }
    (x, false, false)
}

/// Solves every anchor in order, enforcing `Λ_m ≥ Λ_{m−1}`.
pub fn solve_event_profile(
    tracked: &TrackedNodeSet,
    curve: &ExposureCurve,
    survivors: &[f64],
    settings: &SolverSettings,
) -> ProfileSolution {
    solve_event_profile_from(tracked, curve, survivors, None, settings)
}

/// [`solve_event_profile`] seeding each anchor's search with `warm`.
pub fn solve_event_profile_from(
    tracked: &TrackedNodeSet,
    curve: &ExposureCurve,
    survivors: &[f64],
    warm: Option<&EventProfile>,
    settings: &SolverSettings,
) -> ProfileSolution {
    assert_eq!(survivors.len(), tracked.columns.len());
    let mut values = Vec::with_capacity(survivors.len());
    let mut saturated = Vec::new();
    let mut clamped = Vec::new();
    let mut lower = 0.0;
    let model = Survival::new(curve, settings.survival);
    for (m, (column, &s)) in tracked.columns.iter().zip(survivors).enumerate() {
        let guess = warm.and_then(|w| w.cumulative_values().get(m).copied());
        let (lambda, sat, clamp) = solve_with(column, &model, s, lower, guess, settings);
        if sat {
            saturated.push(m);
        }
        if clamp {
            clamped.push(m);
        }
        values.push(lambda);
        lower = lambda;
    }
    let profile = EventProfile::new(tracked.anchors.clone(), values)
        .expect("anchors are strictly increasing and values non-decreasing");
    ProfileSolution {
        profile,
        saturated,
        clamped,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hazards::HazardModel;
    use crate::inference::tracked::build_tracked_set;
    use crate::network::Network;
    use crate::trace::{ContagionTrace, Infection};
    use std::f64::consts::LN_2;

    fn column(zeros: usize, positive: Vec<f64>) -> AnchorColumn {
        AnchorColumn {
            zero_count: zeros,
            positive,
        }
    }

    #[test]
    fn nothing_infected_gives_zero() {
        let curve = ExposureCurve::new(0.3, 2.0).unwrap();
        let col = column(5, vec![]);
        let (l, sat, clamp) = solve_anchor(&col, &curve, 5.0, 0.0, &SolverSettings::default());
        assert_eq!((l, sat, clamp), (0.0, false, false));
    }

    #[test]
    fn two_nodes_one_survivor() {
        // 2·exp(−H(Λ)) = 1  ⇔  H(Λ) = ln 2
        let curve = ExposureCurve::new(0.5, 1.0).unwrap();
        let col = column(2, vec![]);
        let (l, sat, _) = solve_anchor(&col, &curve, 1.0, 0.0, &SolverSettings::default());
        assert!(!sat);
        assert!((curve.eta_integral(l) - LN_2).abs() < 1e-8);
        assert!((l - 1.711).abs() < 2e-3, "{l}");
        // same instance with explicit zeros (ungrouped representation)
        let col = column(0, vec![0.0, 0.0]);
        let (l2, _, _) = solve_anchor(&col, &curve, 1.0, 0.0, &SolverSettings::default());
        assert!((l - l2).abs() < 1e-9);
    }

    #[test]
    fn saturation_flagged() {
        let curve = ExposureCurve::new(0.05, 1.0).unwrap();
        // floor = 10·exp(−0.136) ≈ 8.73 > 5
        let col = column(10, vec![]);
        let settings = SolverSettings::default();
        let (l, sat, _) = solve_anchor(&col, &curve, 5.0, 0.0, &settings);
        assert!(sat);
        assert_eq!(l, settings.cap);
    }

    #[test]
    fn clamped_when_internal_exposure_explains_more_than_observed() {
        let curve = ExposureCurve::new(0.9, 1.0).unwrap();
        let col = column(0, vec![5.0, 5.0]);
        let (l, sat, clamp) = solve_anchor(&col, &curve, 1.9, 0.7, &SolverSettings::default());
        assert_eq!(l, 0.7);
        assert!(!sat && clamp);
    }

    #[test]
    fn rhs_strictly_decreasing() {
        let curve = ExposureCurve::new(0.2, 3.0).unwrap();
        let col = column(40, vec![0.3, 1.2, 2.5, 0.01]);
        let mut prev = f64::INFINITY;
        for i in 0..200 {
            let v = expected_survivors(&col, &curve, SurvivalForm::Continuous, i as f64 * 0.1);
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn fewer_survivors_never_lowers_profile() {
        let curve = ExposureCurve::new(0.3, 2.0).unwrap();
        let col = column(100, vec![0.5, 1.5, 0.2]);
        let mut prev = -1.0;
        for s in [103.0, 90.0, 60.0, 45.0, 30.0] {
            let (l, _, _) = solve_anchor(&col, &curve, s, 0.0, &SolverSettings::default());
            assert!(l >= prev);
            prev = l;
        }
    }

    #[test]
    fn warm_start_agrees_with_cold() {
        let curve = ExposureCurve::new(0.3, 2.0).unwrap();
        let col = column(500, vec![0.5, 1.5, 0.2, 3.0, 0.01]);
        let settings = SolverSettings::default();
        let (cold, _, _) = solve_anchor(&col, &curve, 300.0, 0.1, &settings);
        for g in [0.0, 0.2, cold, cold * 0.5, cold * 3.0, 50.0, 1e5] {
            let (warm, sat, clamp) =
                solve_anchor_from(&col, &curve, 300.0, 0.1, Some(g), &settings);
            assert!(!sat && !clamp);
            assert!((warm - cold).abs() < 1e-8, "{g}: {warm} vs {cold}");
        }
        let (l, _, clamp) = solve_anchor_from(&col, &curve, 504.0, 0.7, Some(2.0), &settings);
        assert_eq!(l, 0.7);
        assert!(clamp);
    }

    #[test]
    fn slope_matches_finite_difference() {
        let curve = ExposureCurve::new(0.2, 3.0).unwrap();
        let col = column(40, vec![0.3, 1.2, 2.5, 0.01]);
        for form in [SurvivalForm::Continuous, SurvivalForm::Discrete] {
            let model = Survival::new(&curve, form);
            for lambda in [0.0001, 0.3, 1.0, 4.0, 12.0, 40.0] {
                let h = 1e-6;
                let fd = (expected_survivors(&col, &curve, form, lambda + h)
                    - expected_survivors(&col, &curve, form, lambda - h))
                    / (2.0 * h);
                let (_, d) = survivors_and_slope(&col, &model, lambda);
                assert!((d - fd).abs() < 1e-6, "{form:?} {lambda}: {d} vs {fd}");
            }
        }
    }

    #[test]
    fn profile_is_monotone() {
        let net = Network::from_edges(30, &[(0, 1), (1, 2), (2, 3), (4, 5)]).unwrap();
        let infections: Vec<Infection> = [(0, 1.0), (1, 2.0), (4, 2.5), (2, 3.0), (9, 3.5)]
            .iter()
            .map(|&(node, time)| Infection { node, time })
            .collect();
        let trace = ContagionTrace::new(infections).unwrap();
        let h = HazardModel::Constant { rate: 1.0 };
        let set = build_tracked_set(&net, &trace, &h, &[1.0, 2.0, 3.0, 3.5], true).unwrap();
        let curve = ExposureCurve::new(0.4, 2.0).unwrap();
        let sol = solve_event_profile(&set, &curve, &set.survivors, &SolverSettings::default());
        let v = sol.profile.cumulative_values();
        assert!(v.windows(2).all(|w| w[1] >= w[0]));
        assert!(sol.saturated.is_empty());
    }
}
