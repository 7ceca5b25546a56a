//! `cogsim region`: analytic stable-throughput regions.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use serde_json::{json, Value};

use cogsim_core::analytic::{
    service_slots_per_packet, uncodable_slots_per_packet, BoundaryPoint, ChannelMoments,
    HalfPlane, ThroughputRegion,
};
use cogsim_core::Algorithm;

use crate::output::{
    describe_spec, fmt_f64, json_document, render_json, write_text, ConfigHeader, CsvTable,
    Format,
};
use crate::scenario::{parse_algorithms, parse_mix, MixArg, Scenario};

/// Arguments of `cogsim region`.
#[derive(Debug, clap::Args)]
pub struct Args {
    /// Scenario file (channel description).
    #[arg(long)]
    pub spec: PathBuf,
    /// Comma-separated protocol ids (1, 3, 4, 5).
    #[arg(long, default_value = "1,3,4,5")]
    pub alg: String,
    /// Mixing-coin bias for protocol 5: `auto` optimizes the bias at every
    /// boundary point (the full region); a grid `a:b:step` emits one
    /// fixed-bias region per value instead.
    #[arg(long, default_value = "auto")]
    pub q: String,
    /// Boundary samples per region.
    #[arg(long, default_value_t = 201)]
    pub points: usize,
    /// Output path (stdout if omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Output format.
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

/// One emitted region: either the exact protocol region or a fixed-bias
/// slice of the mixing protocol's.
struct RegionOut {
    algorithm: Algorithm,
    fixed_q: Option<f64>,
    r1_max: f64,
    constraints: Vec<HalfPlane>,
    boundary: Vec<BoundaryPoint>,
}

impl RegionOut {
    fn from_region(r: ThroughputRegion) -> Self {
        RegionOut {
            algorithm: r.algorithm,
            fixed_q: None,
            r1_max: r.r1_max,
            constraints: r.constraints,
            boundary: r.boundary,
        }
    }

    /// The mixing protocol pinned at one coin bias: the intersection of its
    /// two rate constraints at that bias.
    fn fixed_mix(m: &ChannelMoments, q: f64, points: usize) -> Self {
        let phi = service_slots_per_packet(m, q);
        let psi = uncodable_slots_per_packet(m, q);
        let constraints = vec![
            HalfPlane {
                a: phi,
                b: 1.0 / (1.0 - m.e34_tx2),
            },
            HalfPlane {
                a: psi,
                b: 1.0 / (1.0 - m.e4_tx2),
            },
        ];
        let r1_max = 1.0 / phi;
        let n = points.max(2);
        let boundary = (0..n)
            .map(|i| {
                let r1 = r1_max * i as f64 / (n - 1) as f64;
                let r2 = constraints
                    .iter()
                    .map(|h| (1.0 - h.a * r1) / h.b)
                    .fold(f64::INFINITY, f64::min)
                    .max(0.0);
                BoundaryPoint {
                    r1,
                    r2,
                    mix_q: Some(q),
                }
            })
            .collect();
        RegionOut {
            algorithm: Algorithm::CodedMixing,
            fixed_q: Some(q),
            r1_max,
            constraints,
            boundary,
        }
    }

    fn to_json(&self) -> Value {
        let mut obj = json!({
            "algorithm": self.algorithm,
            "r1_max": self.r1_max,
            "constraints": self.constraints,
            "boundary": self.boundary,
        });
        if let Some(q) = self.fixed_q {
            obj["fixed_q"] = json!(q);
        }
        obj
    }
}

pub fn run(args: Args) -> Result<ExitCode> {
    let scenario = Scenario::load(&args.spec)?;
    let algs = parse_algorithms(&args.alg)?;
    let mix = parse_mix(&args.q)?;
    let moments = ChannelMoments::from_spec(&scenario.spec);

    let mut regions = Vec::new();
    for &alg in &algs {
        if alg == Algorithm::CodedMixing {
            match &mix {
                MixArg::Auto => regions.push(RegionOut::from_region(
                    ThroughputRegion::compute(alg, &scenario.spec, args.points)
                        .context("computing region")?,
                )),
                MixArg::Grid(grid) => {
                    for &q in grid {
                        regions.push(RegionOut::fixed_mix(&moments, q, args.points));
                    }
                }
            }
        } else {
            regions.push(RegionOut::from_region(
                ThroughputRegion::compute(alg, &scenario.spec, args.points)
                    .context("computing region")?,
            ));
        }
    }

    let mut header = ConfigHeader::new("region");
    for (k, v) in describe_spec(&args.spec, &scenario.spec) {
        header.push(&k, v);
    }
    header.push("alg", &args.alg);
    header.push("q", &args.q);
    header.push("points", args.points);
    for r in &regions {
        let tag = match r.fixed_q {
            Some(q) => format!("region_{}_q{}", r.algorithm.id(), q),
            None => format!("region_{}", r.algorithm.id()),
        };
        let cs: Vec<String> = r
            .constraints
            .iter()
            .map(|h| format!("{}*r1+{}*r2<=1", fmt_f64(h.a), fmt_f64(h.b)))
            .collect();
        header.push(
            &tag,
            format!("r1_max={} constraints=[{}]", fmt_f64(r.r1_max), cs.join("; ")),
        );
    }

    let content = match args.format {
        Format::Json => {
            let payload: Vec<Value> = regions.iter().map(RegionOut::to_json).collect();
            render_json(&json_document(&header, "regions", Value::Array(payload)))
        }
        Format::Csv => {
            let rows = regions
                .iter()
                .flat_map(|r| {
                    r.boundary.iter().map(|p| {
                        vec![
                            r.algorithm.id().to_string(),
                            fmt_f64(p.r1),
                            fmt_f64(p.r2),
                            p.mix_q.map(fmt_f64).unwrap_or_default(),
                        ]
                    })
                })
                .collect();
            CsvTable {
                columns: vec!["algorithm", "r1", "r2", "mix_q"],
                rows,
            }
            .render(&header)
        }
    };
    write_text(args.out.as_ref(), &content)?;
    Ok(ExitCode::SUCCESS)
}
