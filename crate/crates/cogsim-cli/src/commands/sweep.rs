//! `cogsim sweep`: batched parameter sweeps with flat tabular output.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use serde_json::Value;

use cogsim_core::analytic::{optimal_mix, ChannelMoments};
use cogsim_core::engine::{self, RunConfig};
use cogsim_core::{Algorithm, ArrivalProcess};

use crate::commands::{metrics_flat_json, metrics_row, METRICS_COLUMNS};
use crate::output::{
    describe_spec, json_document, render_json, write_text, ConfigHeader, CsvTable, Format,
};
use crate::pool;
use crate::scenario::{parse_algorithms, parse_grid, parse_mix, parse_seeds, MixArg, Scenario};

/// Arguments of `cogsim sweep`.
#[derive(Debug, clap::Args)]
pub struct Args {
    /// Scenario file (channel description).
    #[arg(long)]
    pub spec: PathBuf,
    /// Comma-separated protocol ids (1, 3, 4, 5).
    #[arg(long, default_value = "1,3,4,5")]
    pub alg: String,
    /// Primary Bernoulli arrival rate or grid `a:b:step`.
    #[arg(long)]
    pub lambda: String,
    /// Mixing-coin bias for protocol 5: grid, single value, or `auto`
    /// (optimal at each arrival rate).
    #[arg(long, default_value = "auto")]
    pub q: String,
    /// Slots per run.
    #[arg(long, default_value_t = 1_000_000)]
    pub horizon: u64,
    /// Slots discarded before measurement (default: horizon / 10).
    #[arg(long)]
    pub warmup: Option<u64>,
    /// Comma-separated master seeds.
    #[arg(long, default_value = "1")]
    pub seed: String,
    /// Output path (stdout if omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Output format.
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

pub fn run(args: Args) -> Result<ExitCode> {
    let scenario = Scenario::load(&args.spec)?;
    let algs = parse_algorithms(&args.alg)?;
    let lambdas = parse_grid(&args.lambda, "--lambda")?;
    let seeds = parse_seeds(&args.seed)?;
    let mix = parse_mix(&args.q)?;
    let moments = ChannelMoments::from_spec(&scenario.spec);

    // Row order is fixed: algorithm, then arrival rate, then bias, then seed.
    let mut runs: Vec<(f64, RunConfig)> = Vec::new();
    for &alg in &algs {
        for &lambda in &lambdas {
            let qs: Vec<f64> = if alg == Algorithm::CodedMixing {
                match &mix {
                    MixArg::Auto => vec![optimal_mix(&moments, lambda).0],
                    MixArg::Grid(g) => g.clone(),
                }
            } else {
                vec![0.0]
            };
            for q in qs {
                for &seed in &seeds {
                    let arrivals = ArrivalProcess::bernoulli(lambda).expect("grid checked");
                    let mut cfg = RunConfig::new(alg, scenario.spec.clone(), arrivals)
                        .with_horizon(args.horizon)
                        .with_mix_q(q)
                        .with_seed(seed);
                    cfg.warmup = args.warmup;
                    runs.push((lambda, cfg));
                }
            }
        }
    }

    let results = pool::run_indexed(runs.len(), pool::default_threads(), |i| {
        engine::run(&runs[i].1)
    });
    let mut metrics = Vec::with_capacity(results.len());
    for r in results {
        metrics.push(r.context("simulation failed")?);
    }

    let mut header = ConfigHeader::new("sweep");
    for (k, v) in describe_spec(&args.spec, &scenario.spec) {
        header.push(&k, v);
    }
    header.push("alg", &args.alg);
    header.push("lambda", &args.lambda);
    header.push("q", &args.q);
    header.push("horizon", args.horizon);
    header.push("warmup", args.warmup.unwrap_or(args.horizon / 10));
    header.push("seed", &args.seed);

    let content = match args.format {
        Format::Csv => {
            let rows = runs
                .iter()
                .zip(&metrics)
                .map(|((lambda, _), m)| metrics_row(*lambda, m))
                .collect();
            CsvTable {
                columns: METRICS_COLUMNS.to_vec(),
                rows,
            }
            .render(&header)
        }
        Format::Json => {
            let payload: Vec<Value> = runs
                .iter()
                .zip(&metrics)
                .map(|((lambda, _), m)| metrics_flat_json(*lambda, m))
                .collect();
            render_json(&json_document(&header, "runs", Value::Array(payload)))
        }
    };
    write_text(args.out.as_ref(), &content)?;
    Ok(ExitCode::SUCCESS)
}
