//! Observed infections of a single contagion, and the infections TSV format
//! (`node<TAB>time_hours`, ascending by time, no header).

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::network::Network;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Infection {
    pub node: usize,
    /// Hours since the contagion first appeared.
    pub time: f64,
}

/// Infection times of one contagion, sorted by time with unique nodes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ContagionTrace {
    infections: Vec<Infection>,
}

impl ContagionTrace {
    /// Sorts by time (stable, so equal times keep input order) and checks
    /// that nodes are unique and times finite and non-negative.
    pub fn new(mut infections: Vec<Infection>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(infections.len());
        for inf in &infections {
            if !inf.time.is_finite() || inf.time < 0.0 {
                return Err(Error::InvalidTrace(format!(
                    "node {} has invalid infection time {}",
                    inf.node, inf.time
                )));
            }
            if !seen.insert(inf.node) {
                return Err(Error::InvalidTrace(format!(
                    "node {} is infected more than once",
                    inf.node
                )));
            }
        }
        infections.sort_by(|a, b| a.time.total_cmp(&b.time));
        Ok(ContagionTrace { infections })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.infections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.infections.is_empty()
    }

    pub fn infections(&self) -> &[Infection] {
        &self.infections
    }

    pub fn iter(&self) -> impl Iterator<Item = &Infection> {
        self.infections.iter()
    }

    pub fn first_time(&self) -> Option<f64> {
        self.infections.first().map(|i| i.time)
    }

    /// Time of the last observed infection.
    pub fn last_time(&self) -> Option<f64> {
        self.infections.last().map(|i| i.time)
    }

    /// Hours from first to last infection.
    pub fn duration(&self) -> f64 {
        match (self.first_time(), self.last_time()) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        }
    }

    /// Per-node infection time, `f64::INFINITY` for nodes never infected.
    pub fn times_by_node(&self, n: usize) -> Vec<f64> {
        let mut times = vec![f64::INFINITY; n];
        for inf in &self.infections {
            if inf.node < n {
                times[inf.node] = inf.time;
            }
        }
        times
    }

    /// Errors if any infected node is absent from `net`.
    pub fn check_nodes(&self, net: &Network) -> Result<()> {
        match self.infections.iter().find(|i| !net.contains_node(i.node)) {
            Some(bad) => Err(Error::UnknownNode(bad.node)),
            None => Ok(()),
        }
    }
}

pub fn parse_infections(text: &str, path: &Path) -> Result<ContagionTrace> {
    let mut infections = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        let err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            msg,
        };
        let (node, time) = line
            .split_once('\t')
            .ok_or_else(|| err("expected \"node<TAB>time_hours\"".into()))?;
        let node = node
            .trim()
            .parse::<usize>()
            .map_err(|_| err(format!("invalid node id {node:?}")))?;
        let time = time
            .trim()
            .parse::<f64>()
            .map_err(|_| err(format!("invalid time {time:?}")))?;
        infections.push(Infection { node, time });
    }
    ContagionTrace::new(infections)
}

pub fn load_infections(path: impl AsRef<Path>) -> Result<ContagionTrace> {
    let path = path.as_ref();
    parse_infections(&fs::read_to_string(path)?, path)
}

pub fn format_infections(trace: &ContagionTrace) -> String {
    let mut out = String::new();
    for inf in trace.iter() {
        let _ = writeln!(out, "{}\t{}", inf.node, inf.time);
    }
    out
}

pub fn save_infections(trace: &ContagionTrace, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, format_infections(trace))?;
    Ok(())
}
