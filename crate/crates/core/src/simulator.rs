//! Discrete-time generative simulator.
//!
//! Time advances in steps of `dt` hours. During each step every node receives
//! an external exposure with probability equal to the step's share of the event
//! profile, and every pending edge exposure fires with the probability the
//! internal hazard assigns to that step of elapsed time. Each received exposure
//! is followed by a Bernoulli draw with bias `η(x)`, `x` being the running
//! exposure count of the node. An infected node schedules exactly one exposure
//! per out-neighbour.
//!
//! Per-step probabilities are `1 − exp(−∫ rate)` over the step, which equals
//! `rate · dt` to first order and makes internal delays exact at grid points.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exposure::ExposureCurve;
use crate::hazards::HazardModel;
use crate::network::Network;
use crate::rate_table::{RatePoint, RateTable};
use crate::trace::{ContagionTrace, Infection};

/// Largest per-step probability accepted before the Bernoulli approximation
/// is considered invalid.
pub const MAX_STEP_PROBABILITY: f64 = 0.1;

/// Per-step probability targeted by [`default_dt`].
pub const TARGET_STEP_PROBABILITY: f64 = 0.01;

/// Internal delays whose remaining survival is below this are not checked
/// against [`MAX_STEP_PROBABILITY`]; they essentially never happen.
const NEGLIGIBLE_SURVIVAL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct SimulationConfig<'a> {
    pub network: &'a Network,
    pub curve: ExposureCurve,
    /// Ground-truth external rate `λ_ext(t)` per node.
    pub profile: RateTable,
    pub hazard: HazardModel,
    pub dt: f64,
    pub horizon: f64,
    pub seed: u64,
    /// Nodes infected at time 0 before the first step.
    pub seed_nodes: Vec<usize>,
    /// Keep every delivered exposure in the result.
    pub record_exposures: bool,
}

impl<'a> SimulationConfig<'a> {
    pub fn new(
        network: &'a Network,
        curve: ExposureCurve,
        profile: RateTable,
        hazard: HazardModel,
        dt: f64,
        horizon: f64,
        seed: u64,
    ) -> Self {
        SimulationConfig {
            network,
            curve,
            profile,
            hazard,
            dt,
            horizon,
            seed,
            seed_nodes: Vec::new(),
            record_exposures: false,
        }
    }
}

/// Longest delay whose survival under `hazard` is still above
/// [`NEGLIGIBLE_SURVIVAL`], capped at `horizon`.
fn relevant_delay(hazard: &HazardModel, horizon: f64) -> f64 {
    let limit = -NEGLIGIBLE_SURVIVAL.ln();
    if hazard.cumulative(horizon) <= limit {
        return horizon;
    }
    let (mut lo, mut hi) = (0.0, horizon);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if hazard.cumulative(mid) > limit {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Largest step keeping both per-step probabilities near 1%: the external
/// rate over `[0, horizon]` and the internal hazard over every delay that
/// still has non-negligible survival.
pub fn default_dt(profile: &RateTable, hazard: &HazardModel, horizon: f64) -> f64 {
    let peak = profile
        .max_on(0.0, horizon)
        .max(hazard.max_rate(0.0, relevant_delay(hazard, horizon)));
    let dt = if peak > 0.0 {
        TARGET_STEP_PROBABILITY / peak
    } else {
        horizon / 1000.0
    };
    dt.min(horizon / 100.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExposureKind {
    External,
    Internal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Trigger {
    Seed,
    External,
    Internal,
}

/// Ground truth attached to one infection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InfectionAnnotation {
    pub node: usize,
    /// Kind of the exposure that caused the infection.
    pub trigger: Trigger,
    pub internal_exposures: u32,
    pub external_exposures: u32,
}

impl InfectionAnnotation {
    /// Infected having received only external exposures.
    pub fn is_external(&self) -> bool {
        self.trigger != Trigger::Seed && self.internal_exposures == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExposureEvent {
    pub time: f64,
    pub node: usize,
    pub kind: ExposureKind,
}

#[derive(Debug, Clone)]
pub struct SimulationOutput {
    pub trace: ContagionTrace,
    /// One entry per infection, in trace order.
    pub annotations: Vec<InfectionAnnotation>,
    pub exposures: Option<Vec<ExposureEvent>>,
    pub internal_delivered: usize,
    /// Edge exposures scheduled but not delivered by the horizon.
    pub internal_pending: usize,
}

impl SimulationOutput {
    pub fn external_infections(&self) -> Vec<usize> {
        self.annotations
            .iter()
            .filter(|a| a.is_external())
            .map(|a| a.node)
            .collect()
    }
}

/// Ground-truth JSON artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub rho1: f64,
    pub rho2: f64,
    pub lambda_ext: Vec<RatePoint>,
    pub external_infections: Vec<usize>,
}

impl GroundTruth {
    pub fn from_run(cfg: &SimulationConfig<'_>, out: &SimulationOutput) -> Self {
        GroundTruth {
            rho1: cfg.curve.rho1,
            rho2: cfg.curve.rho2,
            lambda_ext: cfg.profile.points(),
            external_infections: out.external_infections(),
        }
    }

    pub fn profile(&self) -> Result<RateTable> {
        RateTable::from_points(&self.lambda_ext)
    }
}

/// Cumulative hazard at whole multiples of `dt`, used to draw delays by
/// inversion: a delay of `d` steps has survival `exp(−H(d·dt))`.
struct DelaySampler {
    cumulative: Vec<f64>,
}

impl DelaySampler {
    fn new(hazard: &HazardModel, dt: f64, steps: usize) -> Result<Self> {
        let mut cumulative: Vec<f64> = Vec::with_capacity(steps + 1);
        cumulative.push(0.0);
        for d in 1..=steps {
            let h = hazard.cumulative(d as f64 * dt);
            let prev = cumulative[d - 1];
            if (-prev).exp() > NEGLIGIBLE_SURVIVAL {
                let p = -(-(h - prev)).exp_m1();
                if p > MAX_STEP_PROBABILITY {
                    return Err(Error::StepTooLarge {
                        prob: p,
                        cap: MAX_STEP_PROBABILITY,
                        source_name: "internal hazard",
                    });
                }
            }
            cumulative.push(h);
        }
        Ok(DelaySampler { cumulative })
    }

    /// Number of steps (≥ 1) until the exposure fires, or `None` past the table.
    fn sample<R: Rng>(&self, rng: &mut R) -> Option<usize> {
        let target = -(1.0 - rng.random::<f64>()).ln();
        let d = self.cumulative.partition_point(|&h| h < target);
        (d < self.cumulative.len()).then_some(d.max(1))
    }
}

/// Runs one simulation. Deterministic for a fixed configuration.
pub fn simulate(cfg: &SimulationConfig<'_>) -> Result<SimulationOutput> {
    let net = cfg.network;
    let n = net.node_count();
    if !(cfg.dt > 0.0 && cfg.dt.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "dt must be positive, got {}",
            cfg.dt
        )));
    }
    if !(cfg.horizon > 0.0 && cfg.horizon.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "horizon must be positive, got {}",
            cfg.horizon
        )));
    }
    cfg.hazard.validate()?;
    if let Some(&bad) = cfg.seed_nodes.iter().find(|&&u| u >= n) {
        return Err(Error::UnknownNode(bad));
    }
    let steps = (cfg.horizon / cfg.dt).round().max(1.0) as usize;
    let dt = cfg.dt;

    // External per-step probabilities.
    let mut ext_prob = Vec::with_capacity(steps);
    for s in 0..steps {
        let a = s as f64 * dt;
        let mass = cfg.profile.cumulative(a + dt) - cfg.profile.cumulative(a);
        let p = -(-mass).exp_m1();
        if p > MAX_STEP_PROBABILITY {
            return Err(Error::StepTooLarge {
                prob: p,
                cap: MAX_STEP_PROBABILITY,
                source_name: "external profile",
            });
        }
        ext_prob.push(p);
    }
    let delays = DelaySampler::new(&cfg.hazard, dt, steps)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut count = vec![0u32; n];
    let mut internal_count = vec![0u32; n];
    let mut infected = vec![false; n];
    let mut buckets: Vec<Vec<u32>> = vec![Vec::new(); steps];
    let mut infections = Vec::new();
    let mut annotations = Vec::new();
    let mut exposures = cfg.record_exposures.then(Vec::new);
    let mut internal_delivered = 0usize;
    let mut internal_pending = 0usize;

    // Schedules one exposure per out-neighbour of a node whose infection is
    // stamped at `stamp_step · dt`.
    let schedule = |u: usize,
                    stamp_step: usize,
                    rng: &mut ChaCha8Rng,
                    buckets: &mut Vec<Vec<u32>>,
                    pending: &mut usize| {
        for &v in net.out_neighbors(u) {
            match delays.sample(rng) {
                Some(d) if stamp_step + d - 1 < steps => buckets[stamp_step + d - 1].push(v),
                _ => *pending += 1,
            }
        }
    };

    let mut seeds = cfg.seed_nodes.clone();
    seeds.sort_unstable();
    seeds.dedup();
    for &u in &seeds {
        infected[u] = true;
        infections.push(Infection { node: u, time: 0.0 });
        annotations.push(InfectionAnnotation {
            node: u,
            trigger: Trigger::Seed,
            internal_exposures: 0,
            external_exposures: 0,
        });
    }
    for &u in &seeds {
        schedule(u, 0, &mut rng, &mut buckets, &mut internal_pending);
    }

    let mut arrivals: Vec<(u32, ExposureKind)> = Vec::new();
    for s in 0..steps {
        let stamp = (s + 1) as f64 * dt;
        arrivals.clear();
        let p = ext_prob[s];
        if p > 0.0 && n > 0 {
            let k = Binomial::new(n as u64, p)
                .map_err(|e| Error::InvalidConfig(e.to_string()))?
                .sample(&mut rng) as usize;
            if k > 0 {
                let mut picked: Vec<usize> = index::sample(&mut rng, n, k).into_vec();
                picked.sort_unstable();
                arrivals.extend(
                    picked
                        .into_iter()
                        .map(|v| (v as u32, ExposureKind::External)),
                );
            }
        }
        let internal = std::mem::take(&mut buckets[s]);
        internal_delivered += internal.len();
        arrivals.extend(internal.iter().map(|&v| (v, ExposureKind::Internal)));

        for &(v, kind) in &arrivals {
            let v = v as usize;
            count[v] += 1;
            if kind == ExposureKind::Internal {
                internal_count[v] += 1;
            }
            if let Some(log) = exposures.as_mut() {
                log.push(ExposureEvent {
                    time: stamp,
                    node: v,
                    kind,
                });
            }
            if infected[v] {
                continue;
            }
            if rng.random::<f64>() < cfg.curve.eta(count[v] as f64) {
                infected[v] = true;
                infections.push(Infection {
                    node: v,
                    time: stamp,
                });
                annotations.push(InfectionAnnotation {
                    node: v,
                    trigger: match kind {
                        ExposureKind::External => Trigger::External,
                        ExposureKind::Internal => Trigger::Internal,
                    },
                    internal_exposures: internal_count[v],
                    external_exposures: count[v] - internal_count[v],
                });
                schedule(v, s + 1, &mut rng, &mut buckets, &mut internal_pending);
            }
        }
    }
    // infections were pushed in time order already; keep the annotation order
    let trace = ContagionTrace::new(infections)?;
    Ok(SimulationOutput {
        trace,
        annotations,
        exposures,
        internal_delivered,
        internal_pending,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::generate_preferential_attachment;

    fn curve(r1: f64, r2: f64) -> ExposureCurve {
        ExposureCurve::new(r1, r2).unwrap()
    }

    #[test]
    fn zero_profile_gives_empty_trace() {
        let net = generate_preferential_attachment(300, 2, 1).unwrap();
        let cfg = SimulationConfig::new(
            &net,
            curve(0.5, 1.0),
            RateTable::constant(0.0, 10.0).unwrap(),
            HazardModel::Constant { rate: 1.0 },
            0.01,
            10.0,
            3,
        );
        let out = simulate(&cfg).unwrap();
        assert!(out.trace.is_empty());
        assert_eq!(out.internal_delivered, 0);
    }

    #[test]
    fn edgeless_first_arrival_matches_poisson() {
        // η(1) = 1: every node is infected by its first external exposure.
        let net = Network::empty(2000);
        let c: f64 = 0.15;
        let horizon = 4.0;
        let expected = 1.0 - (-c * horizon).exp();
        let mut fractions = Vec::new();
        for seed in 0..20 {
            let cfg = SimulationConfig::new(
                &net,
                curve(1.0, 1.0),
                RateTable::constant(c, horizon).unwrap(),
                HazardModel::Constant { rate: 1.0 },
                0.02,
                horizon,
                seed,
            );
            let out = simulate(&cfg).unwrap();
            fractions.push(out.trace.len() as f64 / 2000.0);
        }
        let mean = fractions.iter().sum::<f64>() / 20.0;
        let se = (expected * (1.0 - expected) / (2000.0 * 20.0)).sqrt();
        assert!(
            (mean - expected).abs() < 3.0 * se,
            "mean {mean} expected {expected}"
        );
    }

    #[test]
    fn star_leaf_infection_times() {
        // center 0 -> leaves 1..=leaves
        let leaves = 4000;
        let edges: Vec<_> = (1..=leaves).map(|v| (0, v)).collect();
        let net = Network::from_edges(leaves + 1, &edges).unwrap();
        let rate = 0.8;
        let c = curve(0.3, 1.0);
        let mut cfg = SimulationConfig::new(
            &net,
            c,
            RateTable::constant(0.0, 5.0).unwrap(),
            HazardModel::Constant { rate },
            0.01,
            5.0,
            9,
        );
        cfg.seed_nodes = vec![0];
        let out = simulate(&cfg).unwrap();
        for t in [0.5, 1.0, 2.0, 4.0] {
            let observed = out
                .trace
                .iter()
                .filter(|i| i.node != 0 && i.time <= t + 1e-9)
                .count() as f64
                / leaves as f64;
            let p = c.eta(1.0) * (1.0 - (-rate * t).exp());
            let se = (p * (1.0 - p) / leaves as f64).sqrt();
            assert!((observed - p).abs() < 3.5 * se, "t={t}: {observed} vs {p}");
        }
        // every leaf got exactly one exposure within the horizon or is pending
        assert_eq!(out.internal_delivered + out.internal_pending, leaves);
    }

    #[test]
    fn step_cap_enforced() {
        let net = Network::empty(10);
        let cfg = SimulationConfig::new(
            &net,
            curve(0.5, 1.0),
            RateTable::constant(5.0, 10.0).unwrap(),
            HazardModel::Constant { rate: 1.0 },
            0.1,
            10.0,
            0,
        );
        assert!(matches!(simulate(&cfg), Err(Error::StepTooLarge { .. })));

        let cfg = SimulationConfig::new(
            &net,
            curve(0.5, 1.0),
            RateTable::constant(0.01, 10.0).unwrap(),
            HazardModel::Constant { rate: 5.0 },
            0.1,
            10.0,
            0,
        );
        assert!(matches!(simulate(&cfg), Err(Error::StepTooLarge { .. })));
    }

    #[test]
    fn reproducible_and_annotated() {
        let net = generate_preferential_attachment(2000, 2, 5).unwrap();
        let mut cfg = SimulationConfig::new(
            &net,
            curve(0.2, 2.0),
            RateTable::new(vec![0.0, 5.0, 10.0], vec![0.05, 0.4, 0.0]).unwrap(),
            HazardModel::Linear { slope: 1.0 },
            0.01,
            12.0,
            42,
        );
        cfg.record_exposures = true;
        let a = simulate(&cfg).unwrap();
        let b = simulate(&cfg).unwrap();
        assert_eq!(a.trace, b.trace);
        assert!(a.trace.len() > 50);
        assert_eq!(a.annotations.len(), a.trace.len());

        let log = a.exposures.as_ref().unwrap();
        let times = a.trace.times_by_node(net.node_count());
        for ann in &a.annotations {
            if ann.is_external() {
                // no internal exposure reached the node up to its infection
                let t = times[ann.node];
                assert!(!log.iter().any(|e| e.node == ann.node
                    && e.kind == ExposureKind::Internal
                    && e.time <= t));
            }
        }
        // exposure conservation
        let sent: usize = a.trace.iter().map(|i| net.out_degree(i.node)).sum();
        assert_eq!(a.internal_delivered + a.internal_pending, sent);
        let internal_logged = log
            .iter()
            .filter(|e| e.kind == ExposureKind::Internal)
            .count();
        assert_eq!(internal_logged, a.internal_delivered);
        assert!(a
            .trace
            .iter()
            .all(|i| i.time > 0.0 && i.time <= 12.0 + 1e-9));
    }

    #[test]
    fn default_dt_caps_probability() {
        let p = RateTable::new(vec![0.0, 1.0, 2.0], vec![0.0, 2.0, 0.0]).unwrap();
        let dt = default_dt(&p, &HazardModel::Constant { rate: 0.5 }, 2.0);
        assert!(2.0 * dt <= 0.01 + 1e-12);
    }

    #[test]
    fn default_dt_respects_internal_hazard() {
        let p = RateTable::constant(0.01, 50.0).unwrap();
        let h = HazardModel::Linear { slope: 1.0 };
        let dt = default_dt(&p, &h, 50.0);
        // survival exp(-d^2/2) reaches 1e-9 near d = 6.44
        assert!((0.01 / 6.5..=0.01 / 6.4).contains(&dt));
        let net = Network::from_edges(2, &[(0, 1)]).unwrap();
        let cfg = SimulationConfig::new(
            &net,
            ExposureCurve::new(0.5, 1.0).unwrap(),
            p,
            h,
            dt,
            50.0,
            1,
        );
        assert!(simulate(&cfg).is_ok());
    }
}
