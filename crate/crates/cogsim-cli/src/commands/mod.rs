//! The five subcommands and their shared row formats.

pub mod dominance;
pub mod region;
pub mod simulate;
pub mod sweep;
pub mod validate;

use cogsim_core::RunMetrics;
use serde_json::{json, Value};

use crate::output::fmt_f64;

/// Flat per-run columns shared by `simulate` and `sweep` tables.
pub(crate) const METRICS_COLUMNS: &[&str] = &[
    "algorithm",
    "lambda",
    "mix_q",
    "seed",
    "horizon",
    "warmup",
    "measured_slots",
    "r1",
    "r2",
    "service_mean",
    "service_p50",
    "service_p95",
    "service_p99",
    "service_max",
    "busy_mean",
    "idle_mean",
    "busy_cycles",
    "idle_cycles",
    "cycles_insufficient",
    "backlog_mean",
    "backlog_max",
    "backlog_final",
    "trend_slope",
    "stable",
    "delivered_primary",
    "delivered_secondary",
];

/// One flat CSV row for a finished run.
pub(crate) fn metrics_row(lambda: f64, m: &RunMetrics) -> Vec<String> {
    vec![
        m.algorithm.id().to_string(),
        fmt_f64(lambda),
        fmt_f64(m.mix_q),
        m.seed.to_string(),
        m.horizon.to_string(),
        m.warmup.to_string(),
        m.measured_slots.to_string(),
        fmt_f64(m.r1),
        fmt_f64(m.r2),
        fmt_f64(m.service.mean),
        m.service.p50.to_string(),
        m.service.p95.to_string(),
        m.service.p99.to_string(),
        m.service.max.to_string(),
        fmt_f64(m.cycles.busy_mean),
        fmt_f64(m.cycles.idle_mean),
        m.cycles.busy_cycles.to_string(),
        m.cycles.idle_cycles.to_string(),
        m.cycles.insufficient.to_string(),
        fmt_f64(m.backlog_mean),
        m.backlog_max.to_string(),
        m.backlog_final.to_string(),
        fmt_f64(m.trend_slope),
        m.is_stable().to_string(),
        m.delivered_primary.to_string(),
        m.delivered_secondary.to_string(),
    ]
}

/// The same flat view as a JSON object (sweep's JSON format).
pub(crate) fn metrics_flat_json(lambda: f64, m: &RunMetrics) -> Value {
    json!({
        "algorithm": m.algorithm.id(),
        "lambda": lambda,
        "mix_q": m.mix_q,
        "seed": m.seed,
        "horizon": m.horizon,
        "warmup": m.warmup,
        "measured_slots": m.measured_slots,
        "r1": m.r1,
        "r2": m.r2,
        "service_mean": m.service.mean,
        "service_p50": m.service.p50,
        "service_p95": m.service.p95,
        "service_p99": m.service.p99,
        "service_max": m.service.max,
        "busy_mean": m.cycles.busy_mean,
        "idle_mean": m.cycles.idle_mean,
        "busy_cycles": m.cycles.busy_cycles,
        "idle_cycles": m.cycles.idle_cycles,
        "cycles_insufficient": m.cycles.insufficient,
        "backlog_mean": m.backlog_mean,
        "backlog_max": m.backlog_max,
        "backlog_final": m.backlog_final,
        "trend_slope": m.trend_slope,
        "stable": m.is_stable(),
        "delivered_primary": m.delivered_primary,
        "delivered_secondary": m.delivered_secondary,
    })
}
