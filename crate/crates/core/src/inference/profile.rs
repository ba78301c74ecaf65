use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::ContagionTrace;

/// Cumulative external exposure `Λ_ext` at anchor times. Between anchors
/// `Λ_ext` is linear (so `λ_ext` is piecewise constant); before the first
/// anchor it rises linearly from `Λ_ext(0) = 0`; after the last anchor it is
/// frozen.
#[derive(Debug, Clone, PartialEq)]
pub struct EventProfile {
    times: Vec<f64>,
    cumulative: Vec<f64>,
}

/// One anchor row of the result JSON.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub t: f64,
    #[serde(rename = "Lambda_ext")]
    pub cumulative: f64,
    #[serde(rename = "lambda_ext")]
    pub rate: f64,
}

impl EventProfile {
    pub fn new(times: Vec<f64>, cumulative: Vec<f64>) -> Result<Self> {
        if times.len() != cumulative.len() || times.is_empty() {
            return Err(Error::InvalidConfig(
                "event profile needs one cumulative value per anchor".into(),
            ));
        }
        if times[0] < 0.0 || times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidConfig(
                "anchor times must be non-negative and strictly increasing".into(),
            ));
        }
        if cumulative[0] < 0.0 || cumulative.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidConfig(
                "cumulative external exposure must be non-negative and non-decreasing".into(),
            ));
        }
        Ok(EventProfile { times, cumulative })
    }

    /// Zero profile on the given anchors.
    pub fn zero(times: Vec<f64>) -> Self {
        let cumulative = vec![0.0; times.len()];
        EventProfile { times, cumulative }
    }

    pub fn from_anchors(anchors: &[Anchor]) -> Result<Self> {
        Self::new(
            anchors.iter().map(|a| a.t).collect(),
            anchors.iter().map(|a| a.cumulative).collect(),
        )
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn cumulative_values(&self) -> &[f64] {
        &self.cumulative
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Segment `m` spans `(t_{m-1}, t_m]` with `t_{-1} = 0`.
    fn segment(&self, t: f64) -> usize {
        self.times.partition_point(|&x| x < t)
    }

    fn segment_bounds(&self, m: usize) -> (f64, f64, f64, f64) {
        if m == 0 {
            (0.0, 0.0, self.times[0], self.cumulative[0])
        } else {
            (
                self.times[m - 1],
                self.cumulative[m - 1],
                self.times[m],
                self.cumulative[m],
            )
        }
    }

    pub fn cumulative_at(&self, t: f64) -> f64 {
        if t <= 0.0 {
            // an anchor at exactly zero carries its own value
            return if self.times[0] <= 0.0 && t >= 0.0 {
                self.cumulative[0]
            } else {
                0.0
            };
        }
        let m = self.segment(t);
        if m >= self.times.len() {
            return *self.cumulative.last().unwrap();
        }
        let (t0, c0, t1, c1) = self.segment_bounds(m);
        if t1 <= t0 {
            return c1;
        }
        c0 + (c1 - c0) * (t - t0) / (t1 - t0)
    }

    pub fn rate_at(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        let m = self.segment(t);
        if m >= self.times.len() {
            return 0.0;
        }
        self.segment_rate(m)
    }

    fn segment_rate(&self, m: usize) -> f64 {
        let (t0, c0, t1, c1) = self.segment_bounds(m);
        if t1 > t0 {
            (c1 - c0) / (t1 - t0)
        } else {
            0.0
        }
    }

    /// Backward finite differences of `Λ_ext` at each anchor.
    pub fn rates(&self) -> Vec<f64> {
        (0..self.times.len())
            .map(|m| self.segment_rate(m))
            .collect()
    }

    pub fn anchors(&self) -> Vec<Anchor> {
        self.times
            .iter()
            .zip(&self.cumulative)
            .zip(self.rates())
            .map(|((&t, &cumulative), rate)| Anchor {
                t,
                cumulative,
                rate,
            })
            .collect()
    }

    /// Largest relative change of any anchor value against `other`.
    pub(crate) fn max_relative_change(&self, other: &EventProfile) -> f64 {
        self.cumulative
            .iter()
            .zip(&other.cumulative)
            .map(|(a, b)| (a - b).abs() / a.abs().max(b.abs()).max(1e-8))
            .fold(0.0, f64::max)
    }
}

/// `(Λ_ext(t), λ_ext(t))` from the piecewise-linear interpolation.
pub fn interpolate_profile(profile: &EventProfile, t: f64) -> (f64, f64) {
    (profile.cumulative_at(t), profile.rate_at(t))
}

/// Anchor times at which `m/M` of the infections have occurred, `m = 1..=M`.
/// Ties collapse to a single anchor; the last anchor is the last infection.
pub fn quantile_anchors(trace: &ContagionTrace, m: usize) -> Vec<f64> {
    let n = trace.len();
    if n == 0 || m == 0 {
        return Vec::new();
    }
    let infections = trace.infections();
    let mut out: Vec<f64> = Vec::with_capacity(m);
    for k in 1..=m {
        let idx = (k * n).div_ceil(m) - 1;
        let t = infections[idx].time;
        if out.last().is_none_or(|&last| t > last) {
            out.push(t);
        }
    }
    out
}

/// Every distinct infection time.
pub fn dense_anchors(trace: &ContagionTrace) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::with_capacity(trace.len());
    for inf in trace.iter() {
        if out.last().is_none_or(|&last| inf.time > last) {
            out.push(inf.time);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::Infection;

    fn profile() -> EventProfile {
        EventProfile::new(vec![1.0, 2.0, 4.0], vec![1.0, 2.0, 4.0]).unwrap()
    }

    #[test]
    fn exact_at_anchors() {
        let p = profile();
        for (&t, &c) in p.times().iter().zip(p.cumulative_values()) {
            assert_eq!(interpolate_profile(&p, t).0, c);
        }
    }

    #[test]
    fn midpoint_and_frozen_tail() {
        let p = profile();
        assert_eq!(interpolate_profile(&p, 3.0), (3.0, 1.0));
        assert_eq!(interpolate_profile(&p, 0.5), (0.5, 1.0));
        assert_eq!(interpolate_profile(&p, 10.0), (4.0, 0.0));
        assert_eq!(interpolate_profile(&p, 0.0).0, 0.0);
    }

    #[test]
    fn finite_difference_rates() {
        let p = EventProfile::new(vec![1.0, 2.0, 4.0], vec![0.5, 2.5, 3.5]).unwrap();
        assert_eq!(p.rates(), vec![0.5, 2.0, 0.5]);
        let a = p.anchors();
        assert_eq!(a[1].t, 2.0);
        assert_eq!(a[1].cumulative, 2.5);
        assert_eq!(a[1].rate, 2.0);
        let json = serde_json::to_string(&a[0]).unwrap();
        assert_eq!(json, r#"{"t":1.0,"Lambda_ext":0.5,"lambda_ext":0.5}"#);
    }

    #[test]
    fn anchor_at_zero() {
        let p = EventProfile::new(vec![0.0, 2.0], vec![0.4, 1.0]).unwrap();
        assert_eq!(p.cumulative_at(0.0), 0.4);
        assert!((p.cumulative_at(1.0) - 0.7).abs() < 1e-15);
    }

    #[test]
    fn rejects_decreasing() {
        assert!(EventProfile::new(vec![1.0, 2.0], vec![2.0, 1.0]).is_err());
        assert!(EventProfile::new(vec![1.0, 1.0], vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn quantile_anchor_placement() {
        let trace = ContagionTrace::new(
            (0..10)
                .map(|i| Infection {
                    node: i,
                    time: i as f64 + 1.0,
                })
                .collect(),
        )
        .unwrap();
        assert_eq!(quantile_anchors(&trace, 5), vec![2.0, 4.0, 6.0, 8.0, 10.0]);
        assert_eq!(quantile_anchors(&trace, 20).len(), 10);
        assert_eq!(*quantile_anchors(&trace, 3).last().unwrap(), 10.0);

        let tied = ContagionTrace::new(
            (0..6)
                .map(|i| Infection {
                    node: i,
                    time: if i < 4 { 1.0 } else { 2.0 },
                })
                .collect(),
        )
        .unwrap();
        assert_eq!(quantile_anchors(&tied, 6), vec![1.0, 2.0]);
        assert_eq!(dense_anchors(&tied), vec![1.0, 2.0]);
    }
}
