//! Internal hazard families for the delay between a node's infection and the
//! exposure it sends along each outgoing edge. Time is in hours.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::network::Network;
use crate::rate_table::RateTable;

/// Default lower cut-off for the reciprocal family.
pub const DEFAULT_RECIPROCAL_T0: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub enum HazardModel {
    /// `λ(t) = rate`.
    Constant { rate: f64 },
    /// `λ(t) = slope · t` (Rayleigh-distributed delays).
    Linear { slope: f64 },
    /// `λ(t) = alpha / t` for `t ≥ t0`, zero before. Survival is `(t0/t)^alpha`.
    Reciprocal { alpha: f64, t0: f64 },
    /// Piecewise-linear tabulated rate, zero outside the table.
    Tabulated(RateTable),
}

impl HazardModel {
    /// Default for social-network delays: `0.14 / t` with a one-hour floor.
    pub fn twitter_default() -> Self {
        HazardModel::Reciprocal {
            alpha: 0.14,
            t0: DEFAULT_RECIPROCAL_T0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            HazardModel::Constant { rate } => rate.is_finite() && rate >= 0.0,
            HazardModel::Linear { slope } => slope.is_finite() && slope >= 0.0,
            HazardModel::Reciprocal { alpha, t0 } => {
                alpha.is_finite() && alpha >= 0.0 && t0.is_finite() && t0 > 0.0
            }
            HazardModel::Tabulated(_) => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidHazard(self.to_string()))
        }
    }

    /// Hazard rate at elapsed time `t`.
    pub fn rate(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        match self {
            HazardModel::Constant { rate } => *rate,
            HazardModel::Linear { slope } => slope * t,
            HazardModel::Reciprocal { alpha, t0 } => {
                if t < *t0 {
                    0.0
                } else {
                    alpha / t
                }
            }
            HazardModel::Tabulated(table) => table.rate(t),
        }
    }

    /// `∫_0^t λ(s) ds`.
    pub fn cumulative(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        match self {
            HazardModel::Constant { rate } => rate * t,
            HazardModel::Linear { slope } => 0.5 * slope * t * t,
            HazardModel::Reciprocal { alpha, t0 } => {
                if t <= *t0 {
                    0.0
                } else {
                    alpha * (t / t0).ln()
                }
            }
            HazardModel::Tabulated(table) => table.cumulative(t) - table.cumulative(0.0),
        }
    }

    /// Probability that an exposure has been sent within `t` hours of the
    /// sender's infection.
    pub fn cdf(&self, t: f64) -> f64 {
        -(-self.cumulative(t)).exp_m1()
    }

    /// Largest hazard rate on `[a, b]`.
    pub fn max_rate(&self, a: f64, b: f64) -> f64 {
        let a = a.max(0.0);
        match self {
            HazardModel::Constant { rate } => *rate,
            HazardModel::Linear { slope } => slope * b,
            HazardModel::Reciprocal { alpha, t0 } => {
                if b < *t0 {
                    0.0
                } else {
                    alpha / a.max(*t0)
                }
            }
            HazardModel::Tabulated(table) => table.max_on(a, b),
        }
    }
}

/// Free-function form of [`HazardModel::cdf`]; negative `t` gives 0.
pub fn hazard_cdf(h: &HazardModel, t: f64) -> f64 {
    h.cdf(t)
}

impl fmt::Display for HazardModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HazardModel::Constant { rate } => write!(f, "constant:{rate}"),
            HazardModel::Linear { slope } => write!(f, "linear:{slope}"),
            HazardModel::Reciprocal { alpha, t0 } => write!(f, "reciprocal:{alpha},{t0}"),
            HazardModel::Tabulated(t) => write!(f, "tabulated({} knots)", t.times().len()),
        }
    }
}

/// Parses `constant:c`, `linear:a`, or `reciprocal:alpha[,t0]`.
impl FromStr for HazardModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidHazard(s.to_string());
        let (kind, args) = s.split_once(':').ok_or_else(bad)?;
        let nums: Vec<f64> = args
            .split(',')
            .map(|a| a.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad())?;
        let model = match (kind.trim(), nums.as_slice()) {
            ("constant", [c]) => HazardModel::Constant { rate: *c },
            ("linear", [a]) => HazardModel::Linear { slope: *a },
            ("reciprocal", [alpha]) => HazardModel::Reciprocal {
                alpha: *alpha,
                t0: DEFAULT_RECIPROCAL_T0,
            },
            ("reciprocal", [alpha, t0]) => HazardModel::Reciprocal {
                alpha: *alpha,
                t0: *t0,
            },
            _ => return Err(bad()),
        };
        model.validate()?;
        Ok(model)
    }
}

/// Infected in-neighbour times of one node; evaluates its expected cumulative
/// internal exposure.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct InternalExposure {
    pub neighbor_times: Vec<f64>,
}

impl InternalExposure {
    /// Expected internal exposures received by `t`. Neighbours infected after
    /// `t` contribute nothing.
    pub fn cumulative(&self, h: &HazardModel, t: f64) -> f64 {
        self.neighbor_times
            .iter()
            .filter(|&&tau| tau <= t)
            .map(|&tau| h.cdf(t - tau))
            .sum()
    }
}

/// `Λ_int` for node `i` at time `t`, given per-node infection times
/// (`f64::INFINITY` for nodes never infected).
pub fn lambda_int_cumulative(
    net: &Network,
    infection_times: &[f64],
    h: &HazardModel,
    i: usize,
    t: f64,
) -> Result<f64> {
    if !net.contains_node(i) {
        return Err(Error::UnknownNode(i));
    }
    Ok(net
        .in_neighbors(i)
        .iter()
        .map(|&j| {
            infection_times
                .get(j as usize)
                .copied()
                .unwrap_or(f64::INFINITY)
        })
        .filter(|&tau| tau <= t)
        .map(|tau| h.cdf(t - tau))
        .sum())
}
