//! `cogsim simulate`: detailed single runs, optionally with a per-slot trace.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use serde_json::Value;

use cogsim_core::analytic::{optimal_mix, ChannelMoments};
use cogsim_core::engine::{self, RunConfig};
use cogsim_core::{Algorithm, ArrivalProcess};

use crate::output::{
    describe_spec, json_document, render_json, write_text, ConfigHeader, CsvTable, Format,
};
use crate::pool;
use crate::scenario::{
    parse_algorithms, parse_grid, parse_mix, parse_seeds, MixArg, Scenario,
};
use crate::commands::{metrics_row, METRICS_COLUMNS};

/// Arguments of `cogsim simulate`.
#[derive(Debug, clap::Args)]
pub struct Args {
    /// Scenario file (channel plus optional arrivals).
    #[arg(long)]
    pub spec: PathBuf,
    /// Comma-separated protocol ids (1, 3, 4, 5).
    #[arg(long, default_value = "1,3,4,5")]
    pub alg: String,
    /// Primary Bernoulli arrival rate or grid `a:b:step`; overrides the
    /// scenario's arrival process.
    #[arg(long)]
    pub lambda: Option<String>,
    /// Mixing-coin bias for protocol 5: grid `a:b:step`, single value, or
    /// `auto` (optimal at each arrival rate).
    #[arg(long, default_value = "0")]
    pub q: String,
    /// Slots to simulate.
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
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Write a per-slot trace CSV here (single run only).
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

/// One resolved run point.
struct Point {
    alg: Algorithm,
    lambda: f64,
    arrivals: ArrivalProcess,
    q: f64,
    seed: u64,
}

pub fn run(args: Args) -> Result<ExitCode> {
    let scenario = Scenario::load(&args.spec)?;
    let algs = parse_algorithms(&args.alg)?;
    let seeds = parse_seeds(&args.seed)?;
    let mix = parse_mix(&args.q)?;
    let moments = ChannelMoments::from_spec(&scenario.spec);

    // Arrival grid: --lambda wins; otherwise the scenario must provide one.
    let arrival_points: Vec<(f64, ArrivalProcess)> = match &args.lambda {
        Some(text) => parse_grid(text, "--lambda")?
            .into_iter()
            .map(|l| (l, ArrivalProcess::bernoulli(l).expect("grid checked")))
            .collect(),
        None => match &scenario.arrivals {
            Some(a) => vec![(a.mean(), a.clone())],
            None => bail!("scenario {} has no arrivals; pass --lambda", args.spec.display()),
        },
    };

    let mut points = Vec::new();
    for &alg in &algs {
        for (lambda, arrivals) in &arrival_points {
            let qs: Vec<f64> = if alg == Algorithm::CodedMixing {
                match &mix {
                    MixArg::Auto => vec![optimal_mix(&moments, *lambda).0],
                    MixArg::Grid(g) => g.clone(),
                }
            } else {
                vec![0.0]
            };
            for q in qs {
                for &seed in &seeds {
                    points.push(Point {
                        alg,
                        lambda: *lambda,
                        arrivals: arrivals.clone(),
                        q,
                        seed,
                    });
                }
            }
        }
    }

    let mut header = ConfigHeader::new("simulate");
    for (k, v) in describe_spec(&args.spec, &scenario.spec) {
        header.push(&k, v);
    }
    header.push("alg", &args.alg);
    header.push("lambda", args.lambda.as_deref().unwrap_or("(scenario)"));
    header.push("q", &args.q);
    header.push("horizon", args.horizon);
    header.push(
        "warmup",
        args.warmup.unwrap_or(args.horizon / 10),
    );
    header.push("seed", &args.seed);

    if let Some(trace_path) = &args.trace {
        if points.len() != 1 {
            bail!(
                "--trace needs exactly one run (got {} combinations); \
                 narrow --alg/--lambda/--q/--seed",
                points.len()
            );
        }
        write_trace(&points[0], &scenario, &args, trace_path, &header)?;
    }

    let configs: Vec<RunConfig> = points
        .iter()
        .map(|p| {
            let mut cfg = RunConfig::new(p.alg, scenario.spec.clone(), p.arrivals.clone())
                .with_horizon(args.horizon)
                .with_mix_q(p.q)
                .with_seed(p.seed);
            cfg.warmup = args.warmup;
            cfg
        })
        .collect();
    let results = pool::run_indexed(configs.len(), pool::default_threads(), |i| {
        engine::run(&configs[i])
    });

    let mut metrics = Vec::with_capacity(results.len());
    for r in results {
        metrics.push(r.context("simulation failed")?);
    }

    let content = match args.format {
        Format::Json => {
            let payload: Vec<Value> = metrics
                .iter()
                .map(|m| serde_json::to_value(m).expect("metrics serialize"))
                .collect();
            render_json(&json_document(&header, "runs", Value::Array(payload)))
        }
        Format::Csv => {
            let rows = points
                .iter()
                .zip(&metrics)
                .map(|(p, m)| metrics_row(p.lambda, m))
                .collect();
            CsvTable {
                columns: METRICS_COLUMNS.to_vec(),
                rows,
            }
            .render(&header)
        }
    };
    write_text(args.out.as_ref(), &content)?;
    Ok(ExitCode::SUCCESS)
}

/// Streams one run's per-slot trace as CSV.
fn write_trace(
    point: &Point,
    scenario: &Scenario,
    args: &Args,
    path: &PathBuf,
    header: &ConfigHeader,
) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    w.write_all(header.csv_comments().as_bytes())?;
    writeln!(
        w,
        "slot,kind,transmitter,payload,received,backlog,q1_len,relay_forward,relay_unseen,relay_seen,parked_secondary,deliveries"
    )?;
    let mut cfg = RunConfig::new(point.alg, scenario.spec.clone(), point.arrivals.clone())
        .with_horizon(args.horizon)
        .with_mix_q(point.q)
        .with_seed(point.seed);
    cfg.warmup = args.warmup;
    let mut io_err: Option<std::io::Error> = None;
    engine::run_observed(&cfg, |obs| {
        if io_err.is_some() {
            return;
        }
        let payload = match &obs.decision.payload {
            cogsim_core::protocols::Payload::Plain { session, id } => {
                format!("{session:?}:{id}").to_lowercase()
            }
            cogsim_core::protocols::Payload::Coded { primary, secondary } => {
                format!("coded:p{primary}+s{secondary}")
            }
        };
        let received: String = (2..=4)
            .filter(|&n| obs.event.received_by(n))
            .map(|n| n.to_string())
            .collect();
        let (fwd, unseen, seen) = obs.state.relay_occupancy();
        let delivered: String = obs
            .deliveries
            .iter()
            .map(|d| {
                let side = match d.session {
                    cogsim_core::Session::Primary => "p",
                    cogsim_core::Session::Secondary => "s",
                };
                format!("{side}{}", d.id)
            })
            .collect::<Vec<_>>()
            .join("+");
        if let Err(e) = writeln!(
            w,
            "{},{:?},{},{},{},{},{},{},{},{},{},{}",
            obs.slot,
            obs.decision.kind,
            obs.event.transmitter(),
            payload,
            received,
            obs.backlog,
            obs.state.q1_len(),
            fwd,
            unseen,
            seen,
            obs.state.q2_held3_len(),
            delivered
        ) {
            io_err = Some(e);
        }
    })
    .context("trace run failed")?;
    if let Some(e) = io_err {
        return Err(e).context("writing trace");
    }
    w.flush().context("flushing trace")?;
    Ok(())
}
