//! Arrival processes for the primary transmit queue.
//!
//! Arrivals are i.i.d. batches across slots: Bernoulli (0/1 packet per slot)
//! or a general finite pmf over batch sizes. The analysis consumes exactly
//! two statistics — the mean rate and `Pr(no arrival in a slot)` — which
//! drive throughput constraints and busy/idle-cycle means respectively.
//!
//! `draw` consumes exactly one uniform variate per slot for every variant,
//! so swapping processes never desynchronizes the other random streams of a
//! seeded run.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

/// Errors from arrival-process construction.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrafficError {
    /// A probability lies outside `[0, 1]` or is not finite.
    #[error("probability {value} for {name} outside [0, 1]")]
    InvalidProbability {
        /// Which parameter was rejected.
        name: &'static str,
        /// The rejected value.
        value: f64,
    },
    /// The pmf has no entries.
    #[error("empty pmf")]
    EmptyPmf,
    /// The same batch size appears twice in a pmf.
    #[error("duplicate pmf entry for batch size {0}")]
    DuplicateEntry(u32),
    /// Pmf masses do not sum to 1 within `1e-12`.
    #[error("pmf masses sum to {sum:.17}, expected 1 within 1e-12")]
    NotNormalized {
        /// The offending sum.
        sum: f64,
    },
    /// A pmf key could not be parsed as a batch size.
    #[error("pmf key {0:?} is not a nonnegative integer")]
    BadKey(String),
}

/// I.i.d. per-slot batch arrival process.
#[derive(Debug, Clone, PartialEq)]
pub enum ArrivalProcess {
    /// One packet with probability `lambda`, none otherwise.
    Bernoulli {
        /// Arrival probability per slot.
        lambda: f64,
    },
    /// General finite pmf over batch sizes (sorted, strictly increasing).
    Pmf {
        /// `(batch size, mass)` pairs, sorted by batch size.
        entries: Vec<(u32, f64)>,
    },
}

impl ArrivalProcess {
    /// Bernoulli arrivals with rate `lambda`.
    pub fn bernoulli(lambda: f64) -> Result<Self, TrafficError> {
        if !lambda.is_finite() || !(0.0..=1.0).contains(&lambda) {
            return Err(TrafficError::InvalidProbability {
                name: "lambda",
                value: lambda,
            });
        }
        Ok(ArrivalProcess::Bernoulli { lambda })
    }

    /// General batch pmf from `(batch size, mass)` pairs.
    pub fn from_pmf(entries: &[(u32, f64)]) -> Result<Self, TrafficError> {
        if entries.is_empty() {
            return Err(TrafficError::EmptyPmf);
        }
        let mut sorted: Vec<(u32, f64)> = entries.to_vec();
        sorted.sort_by_key(|(k, _)| *k);
        for window in sorted.windows(2) {
            if window[0].0 == window[1].0 {
                return Err(TrafficError::DuplicateEntry(window[0].0));
            }
        }
        for &(_, p) in &sorted {
            if !p.is_finite() || !(-1e-12..=1.0 + 1e-12).contains(&p) {
                return Err(TrafficError::InvalidProbability {
                    name: "pmf mass",
                    value: p,
                });
            }
        }
        let sum: f64 = sorted.iter().map(|(_, p)| p).sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(TrafficError::NotNormalized { sum });
        }
        for (_, p) in &mut sorted {
            *p = p.max(0.0) / sum;
        }
        Ok(ArrivalProcess::Pmf { entries: sorted })
    }

    /// Mean arrivals per slot.
    pub fn mean(&self) -> f64 {
        match self {
            ArrivalProcess::Bernoulli { lambda } => *lambda,
            ArrivalProcess::Pmf { entries } => {
                entries.iter().map(|&(k, p)| k as f64 * p).sum()
            }
        }
    }

    /// `Pr(no arrival in a slot)`.
    pub fn p_zero(&self) -> f64 {
        match self {
            ArrivalProcess::Bernoulli { lambda } => 1.0 - lambda,
            ArrivalProcess::Pmf { entries } => entries
                .iter()
                .find(|(k, _)| *k == 0)
                .map(|(_, p)| *p)
                .unwrap_or(0.0),
        }
    }

    /// Draws one slot's batch size (consumes exactly one uniform variate).
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        let u: f64 = rng.gen();
        match self {
            ArrivalProcess::Bernoulli { lambda } => u32::from(u < *lambda),
            ArrivalProcess::Pmf { entries } => {
                let mut cum = 0.0;
                for &(k, p) in entries {
                    cum += p;
                    if u < cum {
                        return k;
                    }
                }
                entries.last().map(|&(k, _)| k).unwrap_or(0)
            }
        }
    }
}

/// On-disk arrival description.
///
/// ```json
/// {"kind": "bernoulli", "lambda": 0.3}
/// {"kind": "pmf", "probs": {"0": 0.5, "2": 0.5}}
/// ```
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ArrivalSpecFile {
    /// Bernoulli arrivals.
    Bernoulli {
        /// Arrival probability per slot.
        lambda: f64,
    },
    /// General batch pmf keyed by batch size.
    Pmf {
        /// Map from batch size (as a decimal string) to probability mass.
        probs: BTreeMap<String, f64>,
    },
}

impl ArrivalSpecFile {
    /// Materializes the validated process.
    pub fn build(&self) -> Result<ArrivalProcess, TrafficError> {
        match self {
            ArrivalSpecFile::Bernoulli { lambda } => ArrivalProcess::bernoulli(*lambda),
            ArrivalSpecFile::Pmf { probs } => {
                let mut entries = Vec::with_capacity(probs.len());
                for (key, &mass) in probs {
                    let k: u32 = key
                        .trim()
                        .parse()
                        .map_err(|_| TrafficError::BadKey(key.clone()))?;
                    entries.push((k, mass));
                }
                ArrivalProcess::from_pmf(&entries)
            }
        }
    }
}
