//! `cogsim dominance`: coupled sampling of the direct and relayed service
//! laws, checking pathwise dominance and both marginals.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};

use cogsim_core::dominance::dominance_report;

use crate::output::{
    describe_spec, fmt_f64, json_document, render_json, write_text, ConfigHeader, CsvTable,
    Format,
};
use crate::scenario::{parse_seeds, Scenario};

/// Arguments of `cogsim dominance`.
#[derive(Debug, clap::Args)]
pub struct Args {
    /// Scenario file (channel description).
    #[arg(long)]
    pub spec: PathBuf,
    /// Number of coupled service-time draws.
    #[arg(long, default_value_t = 100_000)]
    pub draws: u64,
    /// Master seed (first entry of a comma-separated list is used).
    #[arg(long, default_value = "1")]
    pub seed: String,
    /// Output path (stdout if omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Output format.
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

pub fn run(args: Args) -> Result<ExitCode> {
    let scenario = Scenario::load(&args.spec)?;
    let seed = parse_seeds(&args.seed)?[0];

    let report = dominance_report(&scenario.spec, args.draws, seed)
        .context("running the coupled sampler")?;

    let mut header = ConfigHeader::new("dominance");
    for (k, v) in describe_spec(&args.spec, &scenario.spec) {
        header.push(&k, v);
    }
    header.push("draws", args.draws);
    header.push("seed", seed);

    let content = match args.format {
        Format::Json => render_json(&json_document(
            &header,
            "report",
            serde_json::to_value(&report).expect("report serializes"),
        )),
        Format::Csv => {
            let pairs: Vec<(&str, String)> = vec![
                ("draws", report.draws.to_string()),
                ("violations", report.violations.to_string()),
                ("mean_direct", fmt_f64(report.mean_direct)),
                ("mean_forwarding", fmt_f64(report.mean_forwarding)),
                ("expected_mean_direct", fmt_f64(report.expected_mean_direct)),
                (
                    "expected_mean_forwarding",
                    fmt_f64(report.expected_mean_forwarding),
                ),
                ("via_relay_fraction", fmt_f64(report.via_relay_fraction)),
                (
                    "ks_direct_vs_geometric_statistic",
                    fmt_f64(report.ks_direct_vs_geometric.statistic),
                ),
                (
                    "ks_direct_vs_geometric_critical_1pct",
                    fmt_f64(report.ks_direct_vs_geometric.critical_1pct),
                ),
                (
                    "ks_direct_vs_geometric_reject",
                    report.ks_direct_vs_geometric.reject.to_string(),
                ),
                (
                    "ks_forwarding_vs_sim_statistic",
                    fmt_f64(report.ks_forwarding_vs_sim.statistic),
                ),
                (
                    "ks_forwarding_vs_sim_critical_1pct",
                    fmt_f64(report.ks_forwarding_vs_sim.critical_1pct),
                ),
                (
                    "ks_forwarding_vs_sim_reject",
                    report.ks_forwarding_vs_sim.reject.to_string(),
                ),
                ("theta_corr_z2", fmt_f64(report.theta_corr_z2)),
                ("theta_corr_z3", fmt_f64(report.theta_corr_z3)),
                ("slots", report.slots.to_string()),
            ];
            let rows = pairs
                .into_iter()
                .map(|(k, v)| vec![k.to_string(), v])
                .collect();
            CsvTable {
                columns: vec!["key", "value"],
                rows,
            }
            .render(&header)
        }
    };
    write_text(args.out.as_ref(), &content)?;

    let clean = report.violations == 0
        && !report.ks_direct_vs_geometric.reject
        && !report.ks_forwarding_vs_sim.reject;
    let summary = format!(
        "dominance: {} draws, {} violations, means {:.4}/{:.4} (direct/forwarding), \
         KS geo {:.4}<{:.4} {}, KS sim {:.4}<{:.4} {}",
        report.draws,
        report.violations,
        report.mean_direct,
        report.mean_forwarding,
        report.ks_direct_vs_geometric.statistic,
        report.ks_direct_vs_geometric.critical_1pct,
        if report.ks_direct_vs_geometric.reject { "REJECT" } else { "ok" },
        report.ks_forwarding_vs_sim.statistic,
        report.ks_forwarding_vs_sim.critical_1pct,
        if report.ks_forwarding_vs_sim.reject { "REJECT" } else { "ok" },
    );
    // Keep stdout machine-readable when the report itself goes there.
    if args.out.is_some() {
        println!("{summary}");
    } else {
        eprintln!("{summary}");
    }

    Ok(if clean { ExitCode::SUCCESS } else { ExitCode::from(2) })
}
