use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const PROFILE_HEADER: &str = "t,lambda";

/// A rate tabulated at knots and linearly interpolated between them.
/// The rate is zero outside `[first knot, last knot]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateTable {
    times: Vec<f64>,
    values: Vec<f64>,
    /// Integral from the first knot up to each knot.
    prefix: Vec<f64>,
}

/// One row of a tabulated rate, as written in JSON artifacts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub t: f64,
    pub value: f64,
}

impl RateTable {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::InvalidConfig(
                "rate table needs equally many times and values".into(),
            ));
        }
        if times.is_empty() {
            return Err(Error::InvalidConfig("rate table is empty".into()));
        }
        if times.iter().chain(&values).any(|x| !x.is_finite()) {
            return Err(Error::InvalidConfig(
                "rate table contains non-finite entries".into(),
            ));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidConfig(
                "rate table times must be strictly increasing".into(),
            ));
        }
        if values.iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidConfig("rates must be non-negative".into()));
        }
        let mut prefix = Vec::with_capacity(times.len());
        prefix.push(0.0);
        for i in 1..times.len() {
            let seg = 0.5 * (values[i] + values[i - 1]) * (times[i] - times[i - 1]);
            prefix.push(prefix[i - 1] + seg);
        }
        Ok(RateTable {
            times,
            values,
            prefix,
        })
    }

    pub fn from_points(points: &[RatePoint]) -> Result<Self> {
        Self::new(
            points.iter().map(|p| p.t).collect(),
            points.iter().map(|p| p.value).collect(),
        )
    }

    /// Constant rate on `[0, end]`.
    pub fn constant(value: f64, end: f64) -> Result<Self> {
        Self::new(vec![0.0, end], vec![value, value])
    }

    /// Samples `f` on a uniform grid of `points` knots over `[0, end]`.
    pub fn sample<F: Fn(f64) -> f64>(f: F, end: f64, points: usize) -> Result<Self> {
        let points = points.max(2);
        let times: Vec<f64> = (0..points)
            .map(|i| end * i as f64 / (points - 1) as f64)
            .collect();
        let values = times.iter().map(|&t| f(t)).collect();
        Self::new(times, values)
    }

    pub fn points(&self) -> Vec<RatePoint> {
        self.times
            .iter()
            .zip(&self.values)
            .map(|(&t, &value)| RatePoint { t, value })
            .collect()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    fn segment(&self, t: f64) -> usize {
        // index i with times[i] <= t < times[i + 1]
        self.times.partition_point(|&x| x <= t).saturating_sub(1)
    }

    pub fn rate(&self, t: f64) -> f64 {
        if t < self.start() || t > self.end() || t.is_nan() {
            return 0.0;
        }
        let i = self.segment(t);
        if i + 1 >= self.times.len() {
            return self.values[i];
        }
        let w = (t - self.times[i]) / (self.times[i + 1] - self.times[i]);
        self.values[i] + w * (self.values[i + 1] - self.values[i])
    }

    /// Integral of the rate from `-inf` (equivalently the first knot) to `t`.
    pub fn cumulative(&self, t: f64) -> f64 {
        if t <= self.start() || t.is_nan() {
            return 0.0;
        }
        if t >= self.end() {
            return *self.prefix.last().unwrap();
        }
        let i = self.segment(t);
        let dt = t - self.times[i];
        let v = self.rate(t);
        self.prefix[i] + 0.5 * (self.values[i] + v) * dt
    }

    /// Largest rate on `[a, b]`; piecewise linearity means knots and ends suffice.
    pub fn max_on(&self, a: f64, b: f64) -> f64 {
        let mut best = self.rate(a).max(self.rate(b));
        for (&t, &v) in self.times.iter().zip(&self.values) {
            if t >= a && t <= b {
                best = best.max(v);
            }
        }
        best
    }
}

/// Parses a `t,lambda` CSV (header required) into a rate table.
pub fn parse_profile_csv(text: &str, path: &Path) -> Result<RateTable> {
    let err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == PROFILE_HEADER => {}
        _ => return Err(err(1, format!("expected header {PROFILE_HEADER:?}"))),
    }
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (idx, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let Some((t, v)) = line.split_once(',') else {
            return Err(err(idx + 1, "expected \"t,lambda\"".into()));
        };
        let num = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| err(idx + 1, format!("invalid number {s:?}")))
        };
        times.push(num(t)?);
        values.push(num(v)?);
    }
    RateTable::new(times, values)
}

pub fn load_profile_csv(path: impl AsRef<Path>) -> Result<RateTable> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    parse_profile_csv(&text, path)
}

pub fn format_profile_csv(table: &RateTable) -> String {
    let mut out = format!("{PROFILE_HEADER}\n");
    for (t, v) in table.times().iter().zip(table.values()) {
        let _ = writeln!(out, "{t},{v}");
    }
    out
}
