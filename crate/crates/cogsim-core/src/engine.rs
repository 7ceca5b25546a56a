//! Slotted-time simulation engine: drives a protocol state machine over a
//! sampled channel and collects throughput, service-time, backlog and
//! busy/idle-cycle statistics, deterministically per seed.
//!
//! Slot anatomy (fixed order):
//!
//! 1. primary arrivals join `q1`,
//! 2. backlog sample (this is the queue-length process all stability and
//!    cycle statistics are defined on),
//! 3. scheduling (node 2 has learnt the system state from past feedback),
//! 4. one channel draw for the scheduled transmitter,
//! 5. outcome application + broadcast feedback.
//!
//! Three independent ChaCha12 streams derive from the master seed: arrivals,
//! channel, and the mixing coin. Two runs with the same seed therefore see
//! identical arrival and channel randomness even across different protocols,
//! which makes paired comparisons (and the coding-vs-mixing equivalence at
//! `q = 0`) exact rather than statistical.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::Serialize;

use crate::channel::{ErasureSpec, ReceptionEvent};
use crate::protocols::{
    apply_outcome, check_invariants, schedule, Algorithm, Delivery, ProtocolError, Session,
    SlotDecision, SystemState,
};
use crate::stats::{linear_slope, Histogram};
use crate::traffic::ArrivalProcess;

/// Sub-stream ids for the per-seed ChaCha12 streams.
const STREAM_ARRIVALS: u64 = 1;
const STREAM_CHANNEL: u64 = 2;
const STREAM_COIN: u64 = 3;
/// Stream reserved for the coupled dominance draws (never used by runs, so
/// oracle and simulation stay comparable under one master seed).
pub(crate) const STREAM_COUPLING: u64 = 4;

/// Maximum number of strided backlog samples kept per run.
const BACKLOG_SAMPLES: u64 = 2048;

/// Deep invariant checks run every this many slots (cheap checks run every
/// slot).
const DEEP_CHECK_STRIDE: u64 = 4096;

/// Minimum completed busy cycles before cycle means are considered reliable.
const MIN_CYCLES: u64 = 100;

/// Errors from engine configuration and execution.
#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    /// Rejected configuration.
    #[error("invalid run configuration: {detail}")]
    InvalidConfig {
        /// What was wrong.
        detail: String,
    },
    /// The protocol state machine detected a violation.
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

/// One simulation run's configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    /// Protocol to simulate.
    pub algorithm: Algorithm,
    /// Channel law.
    pub channel: ErasureSpec,
    /// Primary arrival process.
    pub arrivals: ArrivalProcess,
    /// Mixing-coin bias (protocol 5 only; ignored otherwise).
    pub mix_q: f64,
    /// Number of slots to simulate.
    pub horizon: u64,
    /// Slots discarded before measurement; defaults to `horizon / 10`.
    pub warmup: Option<u64>,
    /// Master seed for the three derived random streams.
    pub seed: u64,
    /// Keep the full per-slot backlog trajectory (4 bytes per slot).
    pub record_backlog: bool,
    /// Keep every delivery record (id and slot stamps).
    pub record_deliveries: bool,
}

impl RunConfig {
    /// Configuration with conventional defaults: horizon 1e6, warmup 10%,
    /// seed 1, `mix_q` 0, no heavyweight recording.
    pub fn new(algorithm: Algorithm, channel: ErasureSpec, arrivals: ArrivalProcess) -> Self {
        RunConfig {
            algorithm,
            channel,
            arrivals,
            mix_q: 0.0,
            horizon: 1_000_000,
            warmup: None,
            seed: 1,
            record_backlog: false,
            record_deliveries: false,
        }
    }

    /// Sets the slot horizon.
    pub fn with_horizon(mut self, horizon: u64) -> Self {
        self.horizon = horizon;
        self
    }

    /// Sets an explicit warmup (slots discarded before measurement).
    pub fn with_warmup(mut self, warmup: u64) -> Self {
        self.warmup = Some(warmup);
        self
    }

    /// Sets the master seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Sets the mixing-coin bias.
    pub fn with_mix_q(mut self, q: f64) -> Self {
        self.mix_q = q;
        self
    }

    /// Warmup actually used.
    pub fn effective_warmup(&self) -> u64 {
        self.warmup.unwrap_or(self.horizon / 10)
    }

    fn validate(&self) -> Result<u64, EngineError> {
        if self.horizon == 0 {
            return Err(EngineError::InvalidConfig {
                detail: "horizon must be at least 1 slot".into(),
            });
        }
        let warmup = self.effective_warmup();
        if warmup >= self.horizon {
            return Err(EngineError::InvalidConfig {
                detail: format!("warmup {warmup} leaves no measured slots of {}", self.horizon),
            });
        }
        if !self.mix_q.is_finite() || !(0.0..=1.0).contains(&self.mix_q) {
            return Err(EngineError::InvalidConfig {
                detail: format!("mix_q {} outside [0, 1]", self.mix_q),
            });
        }
        Ok(warmup)
    }
}

/// Busy/idle-cycle statistics of the primary backlog process.
///
/// A busy cycle is a maximal run of slots with positive backlog (sampled
/// post-arrival); only cycles that start inside the measurement window and
/// complete before the horizon are counted.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct CycleStats {
    /// Mean busy-cycle length in slots.
    pub busy_mean: f64,
    /// Mean idle-cycle length in slots.
    pub idle_mean: f64,
    /// Completed busy cycles counted.
    pub busy_cycles: u64,
    /// Completed idle cycles counted.
    pub idle_cycles: u64,
    /// Fewer than 100 completed busy cycles: means are unreliable.
    pub insufficient: bool,
}

/// Service-time summary derived from the histogram.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct ServiceSummary {
    /// Completed primary services measured.
    pub count: u64,
    /// Mean service slots.
    pub mean: f64,
    /// Median (nearest rank).
    pub p50: u32,
    /// 95th percentile (nearest rank).
    pub p95: u32,
    /// 99th percentile (nearest rank).
    pub p99: u32,
    /// Largest observed service time.
    pub max: u32,
}

impl ServiceSummary {
    fn from_histogram(h: &Histogram) -> Self {
        ServiceSummary {
            count: h.total(),
            mean: h.mean(),
            p50: h.percentile(0.50).unwrap_or(0),
            p95: h.percentile(0.95).unwrap_or(0),
            p99: h.percentile(0.99).unwrap_or(0),
            max: h.max().unwrap_or(0),
        }
    }
}

/// Everything measured by one run.
#[derive(Debug, Clone, Serialize)]
pub struct RunMetrics {
    /// Protocol id.
    pub algorithm: Algorithm,
    /// Master seed.
    pub seed: u64,
    /// Mixing-coin bias echoed from the configuration.
    pub mix_q: f64,
    /// Total slots simulated.
    pub horizon: u64,
    /// Warmup slots discarded.
    pub warmup: u64,
    /// Slots contributing to measurements.
    pub measured_slots: u64,
    /// Primary packets delivered in the measurement window.
    pub delivered_primary: u64,
    /// Secondary packets delivered in the measurement window.
    pub delivered_secondary: u64,
    /// Primary throughput, packets per slot.
    pub r1: f64,
    /// Secondary throughput, packets per slot.
    pub r2: f64,
    /// Service-time summary over measured primary deliveries.
    pub service: ServiceSummary,
    /// Full service-time histogram (slots -> count).
    pub service_histogram: Histogram,
    /// Busy/idle-cycle statistics.
    pub cycles: CycleStats,
    /// Mean primary backlog over measured slots.
    pub backlog_mean: f64,
    /// Maximum primary backlog over measured slots.
    pub backlog_max: u32,
    /// Backlog at the final slot.
    pub backlog_final: u32,
    /// Least-squares backlog slope (packets/slot) over the last half of the
    /// strided samples; the stability verdict compares it to
    /// `10 / sqrt(horizon)`.
    pub trend_slope: f64,
    /// Strided `(slot, backlog)` samples (at most 2048).
    pub backlog_samples: Vec<(u64, u32)>,
    /// Full backlog trajectory, when requested.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub backlog_trajectory: Option<Vec<u32>>,
    /// Every delivery, when requested.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub deliveries: Option<Vec<Delivery>>,
}

impl RunMetrics {
    /// Stability threshold for this run's horizon.
    pub fn slope_threshold(&self) -> f64 {
        stability_threshold(self.horizon)
    }

    /// Stability verdict: backlog trend below `10 / sqrt(horizon)`.
    pub fn is_stable(&self) -> bool {
        self.trend_slope <= self.slope_threshold()
    }
}

/// Per-slot observation passed to [`run_observed`] callbacks (e.g. trace
/// writers).
#[derive(Debug)]
pub struct SlotObservation<'a> {
    /// Slot index.
    pub slot: u64,
    /// Scheduling decision.
    pub decision: SlotDecision,
    /// Sampled reception outcome.
    pub event: ReceptionEvent,
    /// Backlog sampled after arrivals, before transmission.
    pub backlog: u32,
    /// Deliveries completed this slot.
    pub deliveries: &'a [Delivery],
    /// State after the outcome was applied.
    pub state: &'a SystemState,
}

/// Runs one simulation.
pub fn run(cfg: &RunConfig) -> Result<RunMetrics, EngineError> {
    run_observed(cfg, |_| {})
}

/// Runs one simulation, invoking `observer` after every slot.
pub fn run_observed<F: FnMut(&SlotObservation<'_>)>(
    cfg: &RunConfig,
    mut observer: F,
) -> Result<RunMetrics, EngineError> {
    let warmup = cfg.validate()?;
    let horizon = cfg.horizon;
    let measured_slots = horizon - warmup;

    let mut arrival_rng = stream_rng(cfg.seed, STREAM_ARRIVALS);
    let mut channel_rng = stream_rng(cfg.seed, STREAM_CHANNEL);
    let mut coin_rng = stream_rng(cfg.seed, STREAM_COIN);

    let mut state = SystemState::new();
    let mut out: Vec<Delivery> = Vec::with_capacity(2);

    let mut service = Histogram::new();
    let mut delivered_primary = 0u64;
    let mut delivered_secondary = 0u64;
    let mut last_primary_delivered = 0u64;

    let mut backlog_sum = 0u128;
    let mut backlog_max = 0u32;
    let mut backlog_final = 0u32;
    let sample_stride = (horizon / BACKLOG_SAMPLES).max(1);
    let mut samples: Vec<(u64, u32)> = Vec::with_capacity(BACKLOG_SAMPLES as usize + 1);
    let mut trajectory: Option<Vec<u32>> = cfg
        .record_backlog
        .then(|| Vec::with_capacity(horizon.min(100_000_000) as usize));
    let mut deliveries: Option<Vec<Delivery>> = cfg.record_deliveries.then(Vec::new);

    // Busy/idle run-length tracking over the post-arrival backlog.
    let mut cycle = CycleTracker::new(warmup);

    for slot in 0..horizon {
        let batch = cfg.arrivals.draw(&mut arrival_rng);
        if batch > 0 {
            state.admit_primary(slot, batch);
        }
        let backlog = state.primary_backlog();
        backlog_final = backlog;
        cycle.observe(slot, backlog > 0);
        if slot >= warmup {
            backlog_sum += u128::from(backlog);
            backlog_max = backlog_max.max(backlog);
        }
        if slot % sample_stride == 0 {
            samples.push((slot, backlog));
        }
        if let Some(t) = trajectory.as_mut() {
            t.push(backlog);
        }

        let decision = schedule(cfg.algorithm, &mut state, slot, cfg.mix_q, &mut coin_rng);
        let event = cfg.channel.sample(decision.transmitter(), &mut channel_rng);
        out.clear();
        apply_outcome(cfg.algorithm, &mut state, &decision, &event, slot, &mut out)?;

        for d in &out {
            match d.session {
                Session::Primary => {
                    // Feedback is broadcast, so in-order delivery within the
                    // primary session is a hard protocol property.
                    if d.id <= last_primary_delivered {
                        return Err(ProtocolError::InvariantViolated {
                            slot,
                            check: "in_order_delivery",
                            detail: format!(
                                "primary {} delivered after {}",
                                d.id, last_primary_delivered
                            ),
                        }
                        .into());
                    }
                    last_primary_delivered = d.id;
                    if slot >= warmup {
                        delivered_primary += 1;
                        let s = d.service_slots().ok_or_else(|| {
                            EngineError::from(ProtocolError::InvariantViolated {
                                slot,
                                check: "service_accounting",
                                detail: format!("primary {} delivered without service start", d.id),
                            })
                        })?;
                        service.push(s as u32);
                    }
                }
                Session::Secondary => {
                    if slot >= warmup {
                        delivered_secondary += 1;
                    }
                }
            }
        }
        if let Some(v) = deliveries.as_mut() {
            v.extend_from_slice(&out);
        }

        check_invariants(cfg.algorithm, &state, slot, slot % DEEP_CHECK_STRIDE == 0)?;
        observer(&SlotObservation {
            slot,
            decision,
            event,
            backlog,
            deliveries: &out,
            state: &state,
        });
    }

    let trend_slope = slope_from_samples(&samples);
    let cycles = cycle.finish();

    Ok(RunMetrics {
        algorithm: cfg.algorithm,
        seed: cfg.seed,
        mix_q: cfg.mix_q,
        horizon,
        warmup,
        measured_slots,
        delivered_primary,
        delivered_secondary,
        r1: delivered_primary as f64 / measured_slots as f64,
        r2: delivered_secondary as f64 / measured_slots as f64,
        service: ServiceSummary::from_histogram(&service),
        service_histogram: service,
        cycles,
        backlog_mean: backlog_sum as f64 / measured_slots as f64,
        backlog_max,
        backlog_final,
        trend_slope,
        backlog_samples: samples,
        backlog_trajectory: trajectory,
        deliveries,
    })
}

/// Stability threshold on the backlog trend: `10 / sqrt(horizon)` packets
/// per slot.
pub fn stability_threshold(horizon: u64) -> f64 {
    10.0 / (horizon as f64).sqrt()
}

/// Least-squares slope over the last half of the strided samples.
fn slope_from_samples(samples: &[(u64, u32)]) -> f64 {
    let tail = &samples[samples.len() / 2..];
    let pts: Vec<(f64, f64)> = tail.iter().map(|&(s, b)| (s as f64, b as f64)).collect();
    linear_slope(&pts)
}

/// One λ-point of a stability sweep.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct StabilityPoint {
    /// Bernoulli arrival rate probed.
    pub lambda: f64,
    /// Measured backlog trend, packets per slot.
    pub slope: f64,
    /// Decision threshold `10 / sqrt(horizon)`.
    pub threshold: f64,
    /// Verdict: trend at or below threshold.
    pub stable: bool,
    /// Final backlog, a secondary diagnostic.
    pub backlog_final: u32,
    /// Maximum measured backlog.
    pub backlog_max: u32,
}

/// Runs the base configuration across Bernoulli arrival rates and classifies
/// each as stable or unstable by the backlog trend.
pub fn stability_probe(
    base: &RunConfig,
    lambdas: &[f64],
) -> Result<Vec<StabilityPoint>, EngineError> {
    let mut points = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let arrivals =
            ArrivalProcess::bernoulli(lambda).map_err(|e| EngineError::InvalidConfig {
                detail: e.to_string(),
            })?;
        let cfg = RunConfig {
            arrivals,
            ..base.clone()
        };
        let metrics = run(&cfg)?;
        points.push(StabilityPoint {
            lambda,
            slope: metrics.trend_slope,
            threshold: metrics.slope_threshold(),
            stable: metrics.is_stable(),
            backlog_final: metrics.backlog_final,
            backlog_max: metrics.backlog_max,
        });
    }
    Ok(points)
}

/// Derives one of the independent per-seed random streams.
pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Tracks maximal runs of busy (backlog > 0) and idle slots.
struct CycleTracker {
    warmup: u64,
    current: Option<bool>,
    run_start: u64,
    busy_sum: u64,
    busy_cycles: u64,
    idle_sum: u64,
    idle_cycles: u64,
}

impl CycleTracker {
    fn new(warmup: u64) -> Self {
        CycleTracker {
            warmup,
            current: None,
            run_start: 0,
            busy_sum: 0,
            busy_cycles: 0,
            idle_sum: 0,
            idle_cycles: 0,
        }
    }

    fn observe(&mut self, slot: u64, busy: bool) {
        match self.current {
            Some(state) if state == busy => {}
            Some(state) => {
                self.close(state, slot);
                self.current = Some(busy);
                self.run_start = slot;
            }
            None => {
                self.current = Some(busy);
                self.run_start = slot;
            }
        }
    }

    fn close(&mut self, state: bool, end_slot: u64) {
        // Count only cycles that started inside the measurement window; the
        // run ending at `end_slot` (exclusive) has length end - start.
        if self.run_start >= self.warmup {
            let len = end_slot - self.run_start;
            if state {
                self.busy_sum += len;
                self.busy_cycles += 1;
            } else {
                self.idle_sum += len;
                self.idle_cycles += 1;
            }
        }
    }

    fn finish(self) -> CycleStats {
        // The final, unfinished run is discarded.
        CycleStats {
            busy_mean: ratio(self.busy_sum, self.busy_cycles),
            idle_mean: ratio(self.idle_sum, self.idle_cycles),
            busy_cycles: self.busy_cycles,
            idle_cycles: self.idle_cycles,
            insufficient: self.busy_cycles < MIN_CYCLES,
        }
    }
}

fn ratio(sum: u64, count: u64) -> f64 {
    if count == 0 {
        0.0
    } else {
        sum as f64 / count as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::Transmitter;
    use crate::protocols::SlotKind;

    fn example_channel() -> ErasureSpec {
        ErasureSpec::from_marginals_independent(0.2, 0.8, 0.5, 0.2, 0.2, true).unwrap()
    }

    #[test]
    fn rejects_bad_configs() {
        let mut cfg = RunConfig::new(
            Algorithm::NoCooperation,
            example_channel(),
            ArrivalProcess::bernoulli(0.1).unwrap(),
        );
        cfg.horizon = 0;
        assert!(matches!(run(&cfg), Err(EngineError::InvalidConfig { .. })));
        cfg.horizon = 100;
        cfg.warmup = Some(100);
        assert!(matches!(run(&cfg), Err(EngineError::InvalidConfig { .. })));
        cfg.warmup = None;
        cfg.mix_q = 1.5;
        assert!(matches!(run(&cfg), Err(EngineError::InvalidConfig { .. })));
    }

    #[test]
    fn identical_seeds_reproduce_exactly() {
        let mut cfg = RunConfig::new(
            Algorithm::Forwarding,
            example_channel(),
            ArrivalProcess::bernoulli(0.3).unwrap(),
        );
        cfg.horizon = 20_000;
        cfg.seed = 42;
        cfg.record_deliveries = true;
        let a = run(&cfg).unwrap();
        let b = run(&cfg).unwrap();
        assert_eq!(a.delivered_primary, b.delivered_primary);
        assert_eq!(a.deliveries.as_ref().unwrap(), b.deliveries.as_ref().unwrap());
        cfg.seed = 43;
        let c = run(&cfg).unwrap();
        assert_ne!(
            a.deliveries.as_ref().unwrap(),
            c.deliveries.as_ref().unwrap(),
            "different seeds should perturb the path"
        );
    }

    #[test]
    fn arrival_and_channel_streams_are_shared_across_protocols() {
        // With the same seed, the slot-by-slot channel draws for the same
        // transmitter sequence coincide; compare via secondary-only traffic
        // (empty primary queue makes every protocol schedule node 2).
        let mut cfg = RunConfig::new(
            Algorithm::NoCooperation,
            example_channel(),
            ArrivalProcess::bernoulli(0.0).unwrap(),
        );
        cfg.horizon = 5_000;
        cfg.seed = 7;
        let base = run(&cfg).unwrap();
        cfg.algorithm = Algorithm::Forwarding;
        let other = run(&cfg).unwrap();
        assert_eq!(base.delivered_secondary, other.delivered_secondary);
    }

    #[test]
    fn observer_sees_every_slot() {
        let mut cfg = RunConfig::new(
            Algorithm::Coding,
            example_channel(),
            ArrivalProcess::bernoulli(0.2).unwrap(),
        );
        cfg.horizon = 1_000;
        let mut slots = 0u64;
        let mut node2_slots = 0u64;
        run_observed(&cfg, |obs| {
            assert_eq!(obs.slot, slots);
            slots += 1;
            if obs.decision.transmitter() == Transmitter::Node2 {
                node2_slots += 1;
            }
            if obs.decision.kind == SlotKind::SecondaryFresh {
                assert_eq!(obs.state.q1_len(), 0, "secondary slots only when idle");
            }
        })
        .unwrap();
        assert_eq!(slots, 1_000);
        assert!(node2_slots > 0);
    }

    #[test]
    fn cycle_tracker_counts_runs() {
        // Pattern: 3 busy, 2 idle, 1 busy, 4 idle (trailing run discarded).
        let pattern = [true, true, true, false, false, true, false, false, false, false];
        let mut t = CycleTracker::new(0);
        for (slot, &b) in pattern.iter().enumerate() {
            t.observe(slot as u64, b);
        }
        let stats = t.finish();
        assert_eq!(stats.busy_cycles, 2);
        assert_eq!(stats.idle_cycles, 1);
        assert!((stats.busy_mean - 2.0).abs() < 1e-12);
        assert!((stats.idle_mean - 2.0).abs() < 1e-12);
        assert!(stats.insufficient);
    }

    #[test]
    fn warmup_is_excluded_from_measurement() {
        let mut cfg = RunConfig::new(
            Algorithm::NoCooperation,
            example_channel(),
            ArrivalProcess::bernoulli(0.1).unwrap(),
        );
        cfg.horizon = 50_000;
        cfg.warmup = Some(25_000);
        let m = run(&cfg).unwrap();
        assert_eq!(m.measured_slots, 25_000);
        // Throughput ~ lambda for a stable queue; crude sanity bounds only.
        assert!(m.r1 > 0.07 && m.r1 < 0.13, "r1 = {}", m.r1);
    }

    #[test]
    fn saturated_queue_grows_and_is_flagged_unstable() {
        let mut cfg = RunConfig::new(
            Algorithm::NoCooperation,
            example_channel(),
            ArrivalProcess::bernoulli(0.9).unwrap(),
        );
        cfg.horizon = 100_000;
        let m = run(&cfg).unwrap();
        // mu1 = 0.2: queue grows at ~0.7 packets/slot.
        assert!(!m.is_stable());
        assert!(m.trend_slope > 0.5);
        assert!((m.r1 - 0.2).abs() < 0.02, "saturation throughput, r1 = {}", m.r1);
    }

    #[test]
    fn stability_probe_flips_across_mu() {
        let mut base = RunConfig::new(
            Algorithm::NoCooperation,
            example_channel(),
            ArrivalProcess::bernoulli(0.1).unwrap(),
        );
        base.horizon = 200_000;
        let pts = stability_probe(&base, &[0.1, 0.3]).unwrap();
        assert!(pts[0].stable, "lambda 0.1 < mu 0.2 must be stable");
        assert!(!pts[1].stable, "lambda 0.3 > mu 0.2 must diverge");
    }
}
