//! Scenario files and grid-style argument parsing.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use cogsim_core::{Algorithm, ArrivalProcess, ArrivalSpecFile, ChannelSpecFile, ErasureSpec};

/// On-disk scenario: a channel description plus optional arrivals and an
/// optional admissibility waiver.
///
/// ```json
/// {
///   "mode": "independent",
///   "tx1": { "2": 0.2, "3": 0.8, "4": 0.5 },
///   "tx2": { "3": 0.2, "4": 0.2 },
///   "arrivals": { "kind": "bernoulli", "lambda": 0.3 },
///   "admissible": true
/// }
/// ```
///
/// `mode: "joint"` instead takes `tx1_patterns` (8 reception-set
/// probabilities for node-1 transmissions, index bit 0 ↔ node 2, bit 1 ↔
/// node 3, bit 2 ↔ node 4) and `tx2_patterns` (4 probabilities, bit 0 ↔
/// node 3, bit 1 ↔ node 4).
#[derive(Debug, Deserialize)]
pub struct ScenarioFile {
    #[serde(flatten)]
    pub channel: ChannelSpecFile,
    /// Primary arrival process; commands may override or require it.
    pub arrivals: Option<ArrivalSpecFile>,
    /// When `false`, skips the relay-admissibility requirement
    /// (eps{3}^1 >= eps{3}^2). Defaults to enforcing it.
    pub admissible: Option<bool>,
}

/// A scenario with its pieces resolved.
pub struct Scenario {
    pub spec: ErasureSpec,
    pub arrivals: Option<ArrivalProcess>,
    pub enforce_admissible: bool,
}

impl Scenario {
    /// Loads and validates a scenario file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading scenario file {}", path.display()))?;
        let file: ScenarioFile = serde_json::from_str(&text)
            .with_context(|| format!("parsing scenario file {}", path.display()))?;
        let enforce = file.admissible.unwrap_or(true);
        let spec = file
            .channel
            .build(enforce)
            .with_context(|| format!("building channel from {}", path.display()))?;
        let arrivals = file
            .arrivals
            .as_ref()
            .map(|a| a.build())
            .transpose()
            .with_context(|| format!("building arrival process from {}", path.display()))?;
        Ok(Scenario {
            spec,
            arrivals,
            enforce_admissible: enforce,
        })
    }

    /// Loads a scenario without refusing inadmissible channels.
    ///
    /// `enforce_admissible` still records the file's wish, so the caller can
    /// report admissibility as a checked property instead of a load error.
    pub fn load_lenient(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading scenario file {}", path.display()))?;
        let file: ScenarioFile = serde_json::from_str(&text)
            .with_context(|| format!("parsing scenario file {}", path.display()))?;
        let spec = file
            .channel
            .build(false)
            .with_context(|| format!("building channel from {}", path.display()))?;
        let arrivals = file
            .arrivals
            .as_ref()
            .map(|a| a.build())
            .transpose()
            .with_context(|| format!("building arrival process from {}", path.display()))?;
        Ok(Scenario {
            spec,
            arrivals,
            enforce_admissible: file.admissible.unwrap_or(true),
        })
    }
}

/// Parses `a:b:step` (inclusive grid) or a single number.
pub fn parse_grid(text: &str, name: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = text.split(':').collect();
    let grid = match parts.as_slice() {
        [single] => vec![single
            .parse::<f64>()
            .with_context(|| format!("{name}: bad number {single:?}"))?],
        [a, b, step] => {
            let (a, b, step) = (
                a.parse::<f64>().with_context(|| format!("{name}: bad start {a:?}"))?,
                b.parse::<f64>().with_context(|| format!("{name}: bad end {b:?}"))?,
                step.parse::<f64>()
                    .with_context(|| format!("{name}: bad step {step:?}"))?,
            );
            if step <= 0.0 || !step.is_finite() {
                bail!("{name}: step must be positive, got {step}");
            }
            if b < a {
                bail!("{name}: end {b} below start {a}");
            }
            let count = ((b - a) / step + 1e-9).floor() as usize + 1;
            (0..count).map(|i| a + i as f64 * step).collect()
        }
        _ => bail!("{name}: expected NUMBER or START:END:STEP, got {text:?}"),
    };
    if grid.is_empty() {
        bail!("{name}: empty grid");
    }
    for &v in &grid {
        if !v.is_finite() || !(0.0..=1.0).contains(&v) {
            bail!("{name}: value {v} outside [0, 1]");
        }
    }
    Ok(grid)
}

/// The mixing-bias argument: a fixed grid or per-point optimization.
#[derive(Debug, Clone, PartialEq)]
pub enum MixArg {
    Auto,
    Grid(Vec<f64>),
}

/// Parses `--q`: `auto` or a grid.
pub fn parse_mix(text: &str) -> Result<MixArg> {
    if text.eq_ignore_ascii_case("auto") {
        Ok(MixArg::Auto)
    } else {
        Ok(MixArg::Grid(parse_grid(text, "--q")?))
    }
}

/// Parses `--alg`: comma-separated protocol ids.
pub fn parse_algorithms(text: &str) -> Result<Vec<Algorithm>> {
    let mut algs = Vec::new();
    for part in text.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let id: u8 = part
            .parse()
            .with_context(|| format!("--alg: bad protocol id {part:?}"))?;
        let alg = Algorithm::from_id(id).map_err(|e| anyhow::anyhow!("--alg: {e}"))?;
        if !algs.contains(&alg) {
            algs.push(alg);
        }
    }
    if algs.is_empty() {
        bail!("--alg: empty algorithm list");
    }
    Ok(algs)
}

/// Parses `--seed`: comma-separated seeds.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    let mut seeds = Vec::new();
    for part in text.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        seeds.push(
            part.parse::<u64>()
                .with_context(|| format!("--seed: bad seed {part:?}"))?,
        );
    }
    if seeds.is_empty() {
        bail!("--seed: empty seed list");
    }
    Ok(seeds)
}
