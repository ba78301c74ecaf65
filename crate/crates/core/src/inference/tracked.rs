//! Node bookkeeping for inference: infected nodes, uninfected nodes reached by
//! at least one internal exposure, and everything else folded into one group.

use crate::error::{Error, Result};
use crate::hazards::HazardModel;
use crate::network::Network;
use crate::trace::ContagionTrace;

#[derive(Debug, Clone, PartialEq)]
pub struct TrackedNode {
    pub node: usize,
    /// Infection time, `None` for uninfected nodes.
    pub infected_at: Option<f64>,
    /// `Λ_int` at the node's own likelihood horizon (`τ_i`, or `τ_max` when
    /// uninfected).
    pub internal_at_horizon: f64,
    /// `λ_int` at the same horizon: the expected rate of internal exposures.
    pub internal_rate_at_horizon: f64,
}

/// Internal exposure levels of all individually tracked nodes at one anchor,
/// with nodes at exactly zero counted rather than listed.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorColumn {
    pub zero_count: usize,
    pub positive: Vec<f64>,
}

impl AnchorColumn {
    pub fn population(&self) -> usize {
        self.zero_count + self.positive.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackedNodeSet {
    pub node_count: usize,
    pub anchors: Vec<f64>,
    /// Observed number of uninfected nodes at each anchor.
    pub survivors: Vec<f64>,
    pub tau_max: f64,
    pub infected: Vec<TrackedNode>,
    /// Uninfected nodes tracked one by one.
    pub exposed: Vec<TrackedNode>,
    /// Uninfected nodes with `Λ_int ≡ 0`, represented by their count.
    pub grouped: usize,
    pub columns: Vec<AnchorColumn>,
    /// Nodes with at least one infected in-neighbour; the inner loops scale
    /// with this count.
    pub internally_exposed: usize,
}

impl TrackedNodeSet {
    pub fn infected_count(&self) -> usize {
        self.infected.len()
    }
}

/// Builds the tracked set. With `grouping` off every uninfected node is tracked
/// individually and anchor columns list zeros explicitly; results must not
/// depend on the choice.
pub fn build_tracked_set(
    net: &Network,
    trace: &ContagionTrace,
    hazard: &HazardModel,
    anchors: &[f64],
    grouping: bool,
) -> Result<TrackedNodeSet> {
    if trace.is_empty() {
        return Err(Error::InsufficientData("trace has no infections".into()));
    }
    trace.check_nodes(net)?;
    let n = net.node_count();
    let times = trace.times_by_node(n);
    let tau_max = trace.last_time().unwrap();

    let survivors = anchors
        .iter()
        .map(|&a| (n - trace.infections().partition_point(|i| i.time <= a)) as f64)
        .collect();

    // candidates: infected nodes, then uninfected nodes with an infected in-neighbour
    let mut is_candidate = vec![false; n];
    let mut order: Vec<usize> = Vec::new();
    for inf in trace.iter() {
        is_candidate[inf.node] = true;
        order.push(inf.node);
    }
    let infected_len = order.len();
    if grouping {
        for inf in trace.iter() {
            for &v in net.out_neighbors(inf.node) {
                let v = v as usize;
                if !is_candidate[v] {
                    is_candidate[v] = true;
                    order.push(v);
                }
            }
        }
    } else {
        order.extend((0..n).filter(|&v| !is_candidate[v]));
    }

    let mut columns: Vec<AnchorColumn> = anchors
        .iter()
        .map(|_| AnchorColumn {
            zero_count: 0,
            positive: Vec::new(),
        })
        .collect();
    let mut infected = Vec::with_capacity(infected_len);
    let mut exposed = Vec::with_capacity(order.len() - infected_len);
    let mut neighbor_times: Vec<f64> = Vec::new();
    let mut internally_exposed = 0;

    for (pos, &v) in order.iter().enumerate() {
        neighbor_times.clear();
        neighbor_times.extend(
            net.in_neighbors(v)
                .iter()
                .map(|&j| times[j as usize])
                .filter(|t| t.is_finite()),
        );
        if !neighbor_times.is_empty() {
            internally_exposed += 1;
        }
        let internal = |t: f64| -> f64 {
            neighbor_times
                .iter()
                .filter(|&&tau| tau <= t)
                .map(|&tau| hazard.cdf(t - tau))
                .sum()
        };
        let internal_rate = |t: f64| -> f64 {
            neighbor_times
                .iter()
                .filter(|&&tau| tau <= t)
                .map(|&tau| hazard.rate(t - tau) * (1.0 - hazard.cdf(t - tau)))
                .sum()
        };
        for (col, &a) in columns.iter_mut().zip(anchors) {
            let x = internal(a);
            if x > 0.0 && grouping {
                col.positive.push(x);
            } else if grouping {
                col.zero_count += 1;
            } else {
                col.positive.push(x);
            }
        }
        if pos < infected_len {
            let t = times[v];
            infected.push(TrackedNode {
                node: v,
                infected_at: Some(t),
                internal_at_horizon: internal(t),
                internal_rate_at_horizon: internal_rate(t),
            });
        } else {
            exposed.push(TrackedNode {
                node: v,
                infected_at: None,
                internal_at_horizon: internal(tau_max),
                internal_rate_at_horizon: internal_rate(tau_max),
            });
        }
    }

    let grouped = n - order.len();
    if grouping {
        for col in &mut columns {
            col.zero_count += grouped;
        }
    }

    Ok(TrackedNodeSet {
        node_count: n,
        anchors: anchors.to_vec(),
        survivors,
        tau_max,
        infected,
        exposed,
        grouped,
        columns,
        internally_exposed,
    })
}
