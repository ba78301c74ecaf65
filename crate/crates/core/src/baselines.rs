//! Naive estimators that read the exposure curve and the external rate
//! directly off the observed infections, ignoring exposure delays and
//! out-of-network influence.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::Network;
use crate::rate_table::RatePoint;
use crate::trace::ContagionTrace;

/// Number of bins used when no bin width is given.
pub const DEFAULT_BINS: usize = 40;

/// One point of the naive exposure curve: of the `n` nodes that ever had
/// exactly `x` infected in-neighbours while uninfected, the fraction `value`
/// became infected before an `(x+1)`-th neighbour did.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NaiveEtaPoint {
    pub x: u32,
    pub value: f64,
    pub n: u64,
}

/// Baseline JSON artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineJson {
    pub eta_naive: Vec<NaiveEtaPoint>,
    pub lambda_naive: Vec<RatePoint>,
}

/// Number of infected in-neighbours each node had strictly before its own
/// infection (all of them for uninfected nodes).
fn prior_neighbor_counts(net: &Network, times: &[f64]) -> Vec<u32> {
    (0..net.node_count())
        .map(|v| {
            let own = times[v];
            net.in_neighbors(v)
                .iter()
                .filter(|&&j| times[j as usize] < own)
                .count() as u32
        })
        .collect()
}

/// Exposure curve estimated by counting, for each `x ≥ 1`, how often a node
/// with `x` infected in-neighbours was infected at that level. Levels nobody
/// reached are omitted.
pub fn naive_exposure_curve(net: &Network, trace: &ContagionTrace) -> Result<Vec<NaiveEtaPoint>> {
    trace.check_nodes(net)?;
    let times = trace.times_by_node(net.node_count());
    let counts = prior_neighbor_counts(net, &times);
    let max = counts.iter().copied().max().unwrap_or(0) as usize;
    let mut reached = vec![0u64; max + 1];
    let mut infected_at = vec![0u64; max + 1];
    for (v, &c) in counts.iter().enumerate() {
        if c == 0 {
            continue;
        }
        // reaching level c implies having passed through every level below it
        reached[c as usize] += 1;
        if times[v].is_finite() {
            infected_at[c as usize] += 1;
        }
    }
    for x in (1..max).rev() {
        reached[x] += reached[x + 1];
    }
    Ok((1..=max)
        .filter(|&x| reached[x] > 0)
        .map(|x| NaiveEtaPoint {
            x: x as u32,
            value: infected_at[x] as f64 / reached[x] as f64,
            n: reached[x],
        })
        .collect())
}

/// Infections whose node had no infected in-neighbour at that instant.
pub fn external_infections(net: &Network, trace: &ContagionTrace) -> Result<Vec<usize>> {
    trace.check_nodes(net)?;
    let times = trace.times_by_node(net.node_count());
    Ok(trace
        .iter()
        .filter(|inf| {
            net.in_neighbors(inf.node)
                .iter()
                .all(|&j| times[j as usize] >= inf.time)
        })
        .map(|inf| inf.node)
        .collect())
}

/// Bin width splitting `[0, last infection]` into [`DEFAULT_BINS`] bins.
pub fn default_bin_width(trace: &ContagionTrace) -> f64 {
    match trace.last_time() {
        Some(t) if t > 0.0 => t / DEFAULT_BINS as f64,
        _ => 1.0,
    }
}

/// Histogram of external infections per hour in bins `[k·w, (k+1)·w)`,
/// reported at bin centres. Only the shape is meaningful; the scale is
/// typically far larger than the true per-node exposure rate.
pub fn naive_event_profile(
    net: &Network,
    trace: &ContagionTrace,
    bin_width: f64,
) -> Result<Vec<RatePoint>> {
    if !(bin_width > 0.0 && bin_width.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "bin width must be positive, got {bin_width}"
        )));
    }
    let external = external_infections(net, trace)?;
    let Some(last) = trace.last_time() else {
        return Ok(Vec::new());
    };
    let bins = (last / bin_width).floor() as usize + 1;
    let mut counts = vec![0u64; bins];
    let times = trace.times_by_node(net.node_count());
    for v in external {
        let k = ((times[v] / bin_width).floor() as usize).min(bins - 1);
        counts[k] += 1;
    }
    Ok(counts
        .iter()
        .enumerate()
        .map(|(k, &c)| RatePoint {
            t: (k as f64 + 0.5) * bin_width,
            value: c as f64 / bin_width,
        })
        .collect())
}

pub fn baseline(net: &Network, trace: &ContagionTrace, bin_width: f64) -> Result<BaselineJson> {
    Ok(BaselineJson {
        eta_naive: naive_exposure_curve(net, trace)?,
        lambda_naive: naive_event_profile(net, trace, bin_width)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exposure::ExposureCurve;
    use crate::hazards::HazardModel;
    use crate::network::generate_preferential_attachment;
    use crate::rate_table::RateTable;
    use crate::simulator::{simulate, SimulationConfig};
    use crate::trace::Infection;
    use proptest::prelude::*;

    fn trace(items: &[(usize, f64)]) -> ContagionTrace {
        ContagionTrace::new(
            items
                .iter()
                .map(|&(node, time)| Infection { node, time })
                .collect(),
        )
        .unwrap()
    }

    fn star(leaves: usize) -> Network {
        let edges: Vec<(usize, usize)> = (1..=leaves).map(|v| (0, v)).collect();
        Network::from_edges(leaves + 1, &edges).unwrap()
    }

    #[test]
    fn edgeless_has_no_levels() {
        let net = Network::empty(5);
        let t = trace(&[(0, 1.0), (3, 2.0)]);
        assert!(naive_exposure_curve(&net, &t).unwrap().is_empty());
    }

    #[test]
    fn star_three_of_ten() {
        let net = star(10);
        let t = trace(&[(0, 0.0), (2, 1.0), (5, 1.5), (7, 3.0)]);
        let eta = naive_exposure_curve(&net, &t).unwrap();
        assert_eq!(eta.len(), 1);
        assert_eq!(eta[0].x, 1);
        assert_eq!(eta[0].n, 10);
        assert!((eta[0].value - 0.3).abs() < 1e-15);
    }

    #[test]
    fn simultaneous_neighbor_does_not_count() {
        let net = Network::from_edges(2, &[(0, 1)]).unwrap();
        let t = trace(&[(0, 1.0), (1, 1.0)]);
        assert!(naive_exposure_curve(&net, &t).unwrap().is_empty());
        assert_eq!(external_infections(&net, &t).unwrap(), vec![0, 1]);
    }

    #[test]
    fn profile_all_internal_is_zero() {
        let net = Network::from_edges(3, &[(0, 1), (1, 2), (2, 0)]).unwrap();
        // node 0 has in-neighbour 2, which is infected later, so 0 is external
        let t = trace(&[(0, 1.0), (1, 2.0), (2, 3.0)]);
        let p = naive_event_profile(&net, &t, 0.5).unwrap();
        let total: f64 = p.iter().map(|r| r.value * 0.5).sum();
        assert_eq!(total, 1.0);
        let net = Network::from_edges(3, &[(0, 1), (1, 2), (2, 0), (1, 0)]).unwrap();
        let t = trace(&[(1, 0.5), (0, 1.0), (2, 3.0)]);
        let p = naive_event_profile(&net, &t, 0.5).unwrap();
        // node 1 has in-neighbour 0 infected later: external
        assert_eq!(p.iter().filter(|r| r.value > 0.0).count(), 1);
    }

    #[test]
    fn binning_example() {
        let net = Network::empty(2);
        let t = trace(&[(0, 1.0), (1, 2.5)]);
        let p = naive_event_profile(&net, &t, 1.0).unwrap();
        let values: Vec<f64> = p.iter().map(|r| r.value).collect();
        assert_eq!(values, vec![0.0, 1.0, 1.0]);
        assert_eq!(p[1].t, 1.5);
    }

    #[test]
    fn bad_bin_width() {
        let net = Network::empty(2);
        let t = trace(&[(0, 1.0)]);
        assert!(naive_event_profile(&net, &t, 0.0).is_err());
    }

    #[test]
    fn first_exposure_estimate_matches_curve_on_star() {
        // each leaf has a single in-neighbour, so the naive estimate is
        // unbiased once every exposure has been delivered
        let leaves = 2000;
        let net = star(leaves);
        let curve = ExposureCurve::new(0.2, 1.0).unwrap();
        let horizon = 40.0;
        let runs = 5;
        let mut infected = 0u64;
        let mut reached = 0u64;
        for seed in 0..runs {
            let mut cfg = SimulationConfig::new(
                &net,
                curve,
                RateTable::constant(0.0, horizon).unwrap(),
                HazardModel::Constant { rate: 1.0 },
                0.05,
                horizon,
                seed,
            );
            cfg.seed_nodes = vec![0];
            let out = simulate(&cfg).unwrap();
            assert_eq!(out.internal_pending, 0);
            let eta = naive_exposure_curve(&net, &out.trace).unwrap();
            infected += (eta[0].value * eta[0].n as f64).round() as u64;
            reached += eta[0].n;
        }
        let p = infected as f64 / reached as f64;
        let se = (0.2f64 * 0.8 / reached as f64).sqrt();
        assert!((p - 0.2).abs() < 3.0 * se, "{p}");
    }

    proptest! {
        #[test]
        fn values_bounded_and_denominators_non_increasing(
            seed in 0u64..500,
            picks in proptest::collection::vec((0usize..200, 0.0f64..10.0), 1..80),
        ) {
            let net = generate_preferential_attachment(200, 3, seed).unwrap();
            let mut seen = std::collections::HashSet::new();
            let items: Vec<(usize, f64)> = picks.into_iter().filter(|p| seen.insert(p.0)).collect();
            let t = trace(&items);
            let eta = naive_exposure_curve(&net, &t).unwrap();
            for w in eta.windows(2) {
                prop_assert!(w[1].n <= w[0].n);
            }
            // levels are contiguous from 1
            for (i, p) in eta.iter().enumerate() {
                prop_assert_eq!(p.x as usize, i + 1);
                prop_assert!((0.0..=1.0).contains(&p.value));
            }
            let w = default_bin_width(&t);
            let profile = naive_event_profile(&net, &t, w).unwrap();
            let total: f64 = profile.iter().map(|r| r.value * w).sum();
            let ext = external_infections(&net, &t).unwrap().len() as f64;
            prop_assert!((total - ext).abs() < 1e-9);
        }
    }
}
