//! `cogsim validate`: cross-checks a scenario's simulator behavior against
//! the closed-form model and prints a PASS/FAIL/SKIP line per check.
//!
//! SKIP marks insufficient data (short horizon, too few cycles, waived
//! admissibility), which is deliberately distinct from FAIL: only FAIL
//! signals disagreement between simulation and theory.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;

use cogsim_core::analytic::{
    chain_identity_gaps, check_service_slope, cycle_means, service_slots_per_packet,
    ChannelMoments, ServiceChain, ThroughputRegion,
};
use cogsim_core::dominance::dominance_report;
use cogsim_core::engine::{self, RunConfig};
use cogsim_core::{Algorithm, ArrivalProcess};

use crate::output::{describe_spec, json_document, render_json, write_text, ConfigHeader};
use crate::scenario::{parse_seeds, Scenario};

/// Arguments of `cogsim validate`.
#[derive(Debug, clap::Args)]
pub struct Args {
    /// Scenario file (channel description).
    #[arg(long)]
    pub spec: PathBuf,
    /// Slots per simulation check (shorter horizons downgrade
    /// simulation-backed checks to SKIP).
    #[arg(long, default_value_t = 300_000)]
    pub horizon: u64,
    /// Master seed (first entry of a comma-separated list is used).
    #[arg(long, default_value = "1")]
    pub seed: String,
    /// Write the full report as JSON here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
enum Status {
    Pass,
    Fail,
    Skip,
}

#[derive(Debug, Serialize)]
struct Check {
    name: String,
    status: Status,
    detail: String,
}

/// Minimum horizon for simulation-backed checks to be meaningful.
const MIN_SIM_HORIZON: u64 = 10_000;

pub fn run(args: Args) -> Result<ExitCode> {
    let scenario = Scenario::load_lenient(&args.spec)?;
    let seed = parse_seeds(&args.seed)?[0];
    let spec = &scenario.spec;
    let m = ChannelMoments::from_spec(spec);
    let horizon = args.horizon;
    // Monte-Carlo agreement tolerance: absolute floor plus a CLT-style term
    // so short horizons stay meaningful without false alarms.
    let sim_tol = (10.0 / (horizon.max(1) as f64).sqrt()).max(0.01);
    let sims_ok = horizon >= MIN_SIM_HORIZON;

    let mut checks: Vec<Check> = Vec::new();

    // 1. Relay admissibility (the relay's channel to node 3 must be at least
    //    as good as the source's).
    let admissible = m.admissible();
    checks.push(if admissible {
        Check {
            name: "admissibility".into(),
            status: Status::Pass,
            detail: format!(
                "eps3_tx1={} >= eps3_tx2={}",
                round6(m.e3_tx1),
                round6(m.e3_tx2)
            ),
        }
    } else if !scenario.enforce_admissible {
        Check {
            name: "admissibility".into(),
            status: Status::Skip,
            detail: format!(
                "waived by scenario (eps3_tx1={} < eps3_tx2={})",
                round6(m.e3_tx1),
                round6(m.e3_tx2)
            ),
        }
    } else {
        Check {
            name: "admissibility".into(),
            status: Status::Fail,
            detail: format!(
                "eps3_tx1={} < eps3_tx2={}; relaying can hurt (set \"admissible\": false to waive)",
                round6(m.e3_tx1),
                round6(m.e3_tx2)
            ),
        }
    });

    // 2. Service-chain identities: stationary distribution versus the two
    //    closed forms, across the bias range.
    checks.push(match chain_gaps_over_grid(&m) {
        Ok(gap) => Check {
            name: "chain-identities".into(),
            status: if gap <= 1e-10 { Status::Pass } else { Status::Fail },
            detail: format!("max closed-form gap {gap:.2e} (tol 1e-10)"),
        },
        Err(e) => Check {
            name: "chain-identities".into(),
            status: Status::Fail,
            detail: format!("chain not solvable: {e}"),
        },
    });

    // 3. Bias sensitivity: closed-form derivative versus finite differences.
    let slope = check_service_slope(&m, 101);
    checks.push(Check {
        name: "slope-formula".into(),
        status: if slope.formula_matches { Status::Pass } else { Status::Fail },
        detail: format!(
            "max rel err {:.2e}, slope range [{}, {}]",
            slope.max_rel_err,
            round6(slope.min_slope),
            round6(slope.max_slope)
        ),
    });

    // 4. Saturation throughput per protocol.
    for &alg in &Algorithm::ALL {
        let name = format!("saturation-{}", alg.id());
        let q = if alg == Algorithm::CodedMixing { 0.5 } else { 0.0 };
        let mu = match alg {
            Algorithm::NoCooperation => m.mu1_no_cooperation(),
            Algorithm::Forwarding | Algorithm::Coding => m.mu1_forwarding(),
            Algorithm::CodedMixing => 1.0 / service_slots_per_packet(&m, q),
        };
        checks.push(if !sims_ok {
            skip_short(name, horizon)
        } else {
            let cfg = RunConfig::new(
                alg,
                spec.clone(),
                ArrivalProcess::bernoulli(1.0).expect("constant"),
            )
            .with_horizon(horizon)
            .with_mix_q(q)
            .with_seed(seed);
            match engine::run(&cfg) {
                Ok(metrics) => {
                    let err = (metrics.r1 - mu).abs();
                    Check {
                        name,
                        status: if err <= sim_tol { Status::Pass } else { Status::Fail },
                        detail: format!(
                            "sim r1={} vs analytic mu={} (err {:.4}, tol {:.4})",
                            round6(metrics.r1),
                            round6(mu),
                            err,
                            sim_tol
                        ),
                    }
                }
                Err(e) => Check {
                    name,
                    status: Status::Fail,
                    detail: format!("simulation error: {e}"),
                },
            }
        });
    }

    // 5. Region boundary per protocol: secondary throughput at two interior
    //    primary loads must match the analytic boundary.
    for &alg in &Algorithm::ALL {
        let name = format!("boundary-{}", alg.id());
        if !sims_ok {
            checks.push(skip_short(name, horizon));
            continue;
        }
        let region = match ThroughputRegion::compute(alg, spec, 101) {
            Ok(r) => r,
            Err(e) => {
                checks.push(Check {
                    name,
                    status: Status::Fail,
                    detail: format!("region not computable: {e}"),
                });
                continue;
            }
        };
        let mut worst = 0.0f64;
        let mut parts = Vec::new();
        let mut failed_run = None;
        for (k, frac) in [0.4, 0.75].into_iter().enumerate() {
            let r1 = frac * region.r1_max;
            let (r2_pred, q_opt) = region.r2_max_with_q(r1);
            let cfg = RunConfig::new(
                alg,
                spec.clone(),
                ArrivalProcess::bernoulli(r1).expect("inside region"),
            )
            .with_horizon(horizon)
            .with_mix_q(q_opt.unwrap_or(0.0))
            .with_seed(seed.wrapping_add(k as u64));
            match engine::run(&cfg) {
                Ok(metrics) => {
                    let err = (metrics.r2 - r2_pred).abs();
                    worst = worst.max(err);
                    parts.push(format!(
                        "r1={}: sim r2={} vs {}",
                        round6(r1),
                        round6(metrics.r2),
                        round6(r2_pred)
                    ));
                }
                Err(e) => failed_run = Some(format!("simulation error: {e}")),
            }
        }
        checks.push(match failed_run {
            Some(detail) => Check {
                name,
                status: Status::Fail,
                detail,
            },
            None => Check {
                name,
                status: if worst <= sim_tol { Status::Pass } else { Status::Fail },
                detail: format!("{} (worst err {:.4}, tol {:.4})", parts.join("; "), worst, sim_tol),
            },
        });
    }

    // 6. Mean service time under saturation versus the phase chain.
    checks.push(if !sims_ok {
        skip_short("service-mean".into(), horizon)
    } else {
        let cfg = RunConfig::new(
            Algorithm::Coding,
            spec.clone(),
            ArrivalProcess::bernoulli(1.0).expect("constant"),
        )
        .with_horizon(horizon)
        .with_seed(seed.wrapping_add(10));
        match (engine::run(&cfg), ServiceChain::build(&m, 0.0)) {
            (Ok(metrics), Ok(chain)) => {
                let predicted = chain.mean_service();
                let rel = (metrics.service.mean - predicted).abs() / predicted;
                Check {
                    name: "service-mean".into(),
                    status: if rel <= 0.03 { Status::Pass } else { Status::Fail },
                    detail: format!(
                        "sim {} vs chain {} (rel err {:.4}, tol 0.03)",
                        round6(metrics.service.mean),
                        round6(predicted),
                        rel
                    ),
                }
            }
            (Err(e), _) => Check {
                name: "service-mean".into(),
                status: Status::Fail,
                detail: format!("simulation error: {e}"),
            },
            (_, Err(e)) => Check {
                name: "service-mean".into(),
                status: Status::Fail,
                detail: format!("chain not solvable: {e}"),
            },
        }
    });

    // 7. Busy/idle cycle means at light load versus the renewal formulas.
    checks.push(busy_idle_check(&m, spec, horizon, seed, sims_ok));

    // 8. Pathwise relaying dominance, quick sample.
    checks.push(if !admissible {
        Check {
            name: "dominance-quick".into(),
            status: Status::Skip,
            detail: "inadmissible channel: coupling not defined".into(),
        }
    } else {
        match dominance_report(spec, 10_000, seed) {
            Ok(rep) => {
                let clean = rep.violations == 0
                    && !rep.ks_direct_vs_geometric.reject
                    && !rep.ks_forwarding_vs_sim.reject;
                Check {
                    name: "dominance-quick".into(),
                    status: if clean { Status::Pass } else { Status::Fail },
                    detail: format!(
                        "{} draws, {} violations; KS geo {:.4}/{:.4}, KS sim {:.4}/{:.4}",
                        rep.draws,
                        rep.violations,
                        rep.ks_direct_vs_geometric.statistic,
                        rep.ks_direct_vs_geometric.critical_1pct,
                        rep.ks_forwarding_vs_sim.statistic,
                        rep.ks_forwarding_vs_sim.critical_1pct
                    ),
                }
            }
            Err(e) => Check {
                name: "dominance-quick".into(),
                status: Status::Fail,
                detail: format!("coupling failed: {e}"),
            },
        }
    });

    // 9. The mixing protocol at bias 0 must reproduce the coding protocol
    //    slot for slot.
    checks.push(mix_zero_check(&m, spec, seed));

    // Report.
    let width = checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
    for c in &checks {
        let status = match c.status {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Skip => "SKIP",
        };
        println!("{:<width$}  {status}  {}", c.name, c.detail, width = width);
    }
    let failed = checks.iter().filter(|c| c.status == Status::Fail).count();
    let skipped = checks.iter().filter(|c| c.status == Status::Skip).count();
    let passed = checks.len() - failed - skipped;
    println!("validation: {passed} passed, {failed} failed, {skipped} skipped");

    if let Some(out) = &args.out {
        let mut header = ConfigHeader::new("validate");
        for (k, v) in describe_spec(&args.spec, spec) {
            header.push(&k, v);
        }
        header.push("horizon", horizon);
        header.push("seed", seed);
        let payload = serde_json::to_value(&checks).expect("checks serialize");
        let mut doc = json_document(&header, "checks", payload);
        doc["failed"] = Value::from(failed);
        doc["skipped"] = Value::from(skipped);
        doc["passed"] = Value::from(passed);
        write_text(Some(out), &render_json(&doc))?;
    }

    Ok(if failed >  0 {
        ExitCode::from(2)
    } else {
        ExitCode::SUCCESS
    })
}

fn round6(v: f64) -> f64 {
    (v * 1e6).round() / 1e6
}

fn skip_short(name: String, horizon: u64) -> Check {
    Check {
        name,
        status: Status::Skip,
        detail: format!("insufficient data: horizon {horizon} < {MIN_SIM_HORIZON}"),
    }
}

/// Largest closed-form gap of the service chain over a bias grid.
fn chain_gaps_over_grid(m: &ChannelMoments) -> Result<f64> {
    let mut worst = 0.0f64;
    for i in 0..=10 {
        let q = i as f64 / 10.0;
        let (gap_phi, gap_psi) = chain_identity_gaps(m, q).context("chain identities")?;
        worst = worst.max(gap_phi).max(gap_psi);
    }
    Ok(worst)
}

fn busy_idle_check(
    m: &ChannelMoments,
    spec: &cogsim_core::ErasureSpec,
    horizon: u64,
    seed: u64,
    sims_ok: bool,
) -> Check {
    let name = "busy-idle".to_string();
    if !sims_ok {
        return skip_short(name, horizon);
    }
    let mu = m.mu1_no_cooperation();
    let lambda = 0.3 * mu;
    let arrivals = ArrivalProcess::bernoulli(lambda).expect("scaled below capacity");
    let predicted = match cycle_means(lambda, mu, 1.0 - lambda) {
        Ok(cm) => cm,
        Err(e) => {
            return Check {
                name,
                status: Status::Fail,
                detail: format!("cycle formulas rejected the load: {e}"),
            }
        }
    };
    let cfg = RunConfig::new(Algorithm::NoCooperation, spec.clone(), arrivals)
        .with_horizon(horizon)
        .with_seed(seed.wrapping_add(20));
    match engine::run(&cfg) {
        Ok(metrics) => {
            if metrics.cycles.insufficient {
                return Check {
                    name,
                    status: Status::Skip,
                    detail: format!(
                        "insufficient data: only {} busy / {} idle cycles measured",
                        metrics.cycles.busy_cycles, metrics.cycles.idle_cycles
                    ),
                };
            }
            let rel_busy = (metrics.cycles.busy_mean - predicted.busy).abs() / predicted.busy;
            let rel_idle = (metrics.cycles.idle_mean - predicted.idle).abs() / predicted.idle;
            let worst = rel_busy.max(rel_idle);
            Check {
                name,
                status: if worst <= 0.05 { Status::Pass } else { Status::Fail },
                detail: format!(
                    "busy {} vs {}, idle {} vs {} (worst rel err {:.4}, tol 0.05)",
                    round6(metrics.cycles.busy_mean),
                    round6(predicted.busy),
                    round6(metrics.cycles.idle_mean),
                    round6(predicted.idle),
                    worst
                ),
            }
        }
        Err(e) => Check {
            name,
            status: Status::Fail,
            detail: format!("simulation error: {e}"),
        },
    }
}

/// Runs the coding protocol and the mixing protocol at bias 0 on identical
/// streams; their delivery sequences must agree exactly.
fn mix_zero_check(m: &ChannelMoments, spec: &cogsim_core::ErasureSpec, seed: u64) -> Check {
    let name = "mix-zero-equivalence".to_string();
    let lambda = (0.8 * m.mu1_forwarding()).min(1.0);
    let horizon = 50_000;
    let run_one = |alg: Algorithm| {
        let mut cfg = RunConfig::new(
            alg,
            spec.clone(),
            ArrivalProcess::bernoulli(lambda).expect("scaled below 1"),
        )
        .with_horizon(horizon)
        .with_mix_q(0.0)
        .with_seed(seed.wrapping_add(30));
        cfg.record_deliveries = true;
        engine::run(&cfg)
    };
    match (run_one(Algorithm::Coding), run_one(Algorithm::CodedMixing)) {
        (Ok(a), Ok(b)) => {
            let same = a.deliveries == b.deliveries
                && a.delivered_primary == b.delivered_primary
                && a.delivered_secondary == b.delivered_secondary;
            Check {
                name,
                status: if same { Status::Pass } else { Status::Fail },
                detail: format!(
                    "{} slots: {} primary + {} secondary deliveries {}",
                    horizon,
                    a.delivered_primary,
                    a.delivered_secondary,
                    if same { "identical" } else { "DIVERGED" }
                ),
            }
        }
        (Err(e), _) | (_, Err(e)) => Check {
            name,
            status: Status::Fail,
            detail: format!("simulation error: {e}"),
        },
    }
}
