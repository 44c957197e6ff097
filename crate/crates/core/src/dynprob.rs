//! A growing event universe: the set of outcomes known to be possible at a
//! time is exactly the set observed up to then. Outcomes outside it have no
//! probability at all, not even zero.

use std::collections::{BTreeSet, HashMap};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DynprobError {
    #[error("observation at t={t} precedes the last observation at t={last}")]
    OutOfOrder { t: u64, last: u64 },
    #[error("smoothing constant must be finite and non-negative, got {0}")]
    BadAlpha(f64),
    #[error("empty outcome name")]
    EmptyOutcome,
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "UPPERCASE")]
pub enum Estimate {
    Defined { probability: f64, unseen_mass: f64 },
    Undefined,
}

impl Estimate {
    pub fn probability(&self) -> Option<f64> {
        match self {
            Estimate::Defined { probability, .. } => Some(*probability),
            Estimate::Undefined => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventUniverse {
    alpha: f64,
    names: Vec<String>,
    index: HashMap<String, usize>,
    /// Observation times per outcome, non-decreasing.
    times: Vec<Vec<u64>>,
    timeline: Vec<(u64, usize)>,
}

impl EventUniverse {
    pub fn new(alpha: f64) -> Result<Self, DynprobError> {
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(DynprobError::BadAlpha(alpha));
        }
        Ok(EventUniverse {
            alpha,
            names: Vec::new(),
            index: HashMap::new(),
            times: Vec::new(),
            timeline: Vec::new(),
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn len(&self) -> usize {
        self.timeline.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timeline.is_empty()
    }

    pub fn last_time(&self) -> Option<u64> {
        self.timeline.last().map(|&(t, _)| t)
    }

    pub fn observe(&mut self, t: u64, outcome: &str) -> Result<(), DynprobError> {
        if outcome.is_empty() {
            return Err(DynprobError::EmptyOutcome);
        }
        if let Some(last) = self.last_time() {
            if t < last {
                return Err(DynprobError::OutOfOrder { t, last });
            }
        }
        let id = match self.index.get(outcome) {
            Some(&id) => id,
            None => {
                let id = self.names.len();
                self.names.push(outcome.to_string());
                self.index.insert(outcome.to_string(), id);
                self.times.push(Vec::new());
                id
            }
        };
        self.times[id].push(t);
        self.timeline.push((t, id));
        Ok(())
    }

    /// Observations as `(t, outcome)` in arrival order.
    pub fn timeline(&self) -> impl Iterator<Item = (u64, &str)> {
        self.timeline.iter().map(|&(t, id)| (t, self.names[id].as_str()))
    }

    fn count_at(&self, id: usize, t: u64) -> u64 {
        self.times[id].partition_point(|&x| x <= t) as u64
    }

    /// Outcomes observed at or before `t`.
    pub fn universe_at(&self, t: u64) -> BTreeSet<String> {
        self.names
            .iter()
            .zip(&self.times)
            .filter(|(_, ts)| ts[0] <= t)
            .map(|(n, _)| n.clone())
            .collect()
    }

    /// Number of observations at or before `t`.
    pub fn total_at(&self, t: u64) -> u64 {
        self.timeline.partition_point(|&(x, _)| x <= t) as u64
    }

    fn denominator(&self, t: u64) -> (f64, usize) {
        let known = self.times.iter().filter(|ts| ts[0] <= t).count();
        (self.total_at(t) as f64 + self.alpha * known as f64 + self.alpha, known)
    }

    /// Mass reserved for outcomes not yet observed by `t`.
    pub fn unseen_mass(&self, t: u64) -> f64 {
        let (den, known) = self.denominator(t);
        if known == 0 || den == 0.0 {
            return 1.0;
        }
        self.alpha / den
    }

    /// `(count + α) / (total + α|Ω(t)| + α)` for a known outcome.
    pub fn estimate(&self, t: u64, outcome: &str) -> Estimate {
        let Some(&id) = self.index.get(outcome) else {
            return Estimate::Undefined;
        };
        let c = self.count_at(id, t);
        if c == 0 {
            return Estimate::Undefined;
        }
        let (den, _) = self.denominator(t);
        Estimate::Defined {
            probability: (c as f64 + self.alpha) / den,
            unseen_mass: self.alpha / den,
        }
    }

    /// Rebuilds a universe from `(t, outcome)` observations.
    pub fn replay<'a>(alpha: f64, obs: impl IntoIterator<Item = (u64, &'a str)>) -> Result<Self, DynprobError> {
        let mut u = EventUniverse::new(alpha)?;
        for (t, o) in obs {
            u.observe(t, o)?;
        }
        Ok(u)
    }

    /// Reads a `t TAB outcome` log.
    pub fn read<R: BufRead>(alpha: f64, reader: R) -> Result<Self, DynprobError> {
        let mut u = EventUniverse::new(alpha)?;
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |reason: String| DynprobError::Parse { line: i + 1, reason };
            let (t, o) = line
                .split_once('\t')
                .ok_or_else(|| err("expected `t\\toutcome`".into()))?;
            let t: u64 = t.trim().parse().map_err(|_| err(format!("bad time {t:?}")))?;
            u.observe(t, o.trim()).map_err(|e| err(e.to_string()))?;
        }
        Ok(u)
    }

    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for (t, o) in self.timeline() {
            writeln!(w, "{t}\t{o}")?;
        }
        Ok(())
    }
}
