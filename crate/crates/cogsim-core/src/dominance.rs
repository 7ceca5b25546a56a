//! Pathwise-dominance oracle: a coupling of the direct and the forwarding
//! protocol on one probability space under which every sampled service time
//! satisfies `S_forwarding <= S_direct`.
//!
//! Construction, per slot `t`:
//!
//! * draw the joint node-1 reception pair `(Z2, Z3)` from its four-cell law
//!   (`Z_k = 1` means node `k` receives),
//! * draw an independent thinning coin `theta` with
//!   `Pr(theta = 0) = eps{3}^2 / eps{3}^1`, legal whenever the channel is
//!   admissible (`eps{3}^1 >= eps{3}^2`).
//!
//! The direct chain delivers at the first slot with `Z3 = 1`, a geometric
//! with success rate `1 - eps{3}^1`. The forwarding chain hands off at the
//! first slot with `Z2 = 1` or `Z3 = 1`; afterwards a relay slot succeeds
//! when `Z3 = 1` or `theta = 1`, which happens with probability exactly
//! `1 - eps{3}^2` — the relay's true success rate — while containing the
//! direct chain's success event slot by slot. Hence the forwarding service
//! can never finish later, and both marginals are distributed as in the real
//! protocols. The report cross-checks the marginals: the direct side against
//! the closed-form geometric, the forwarding side against service times
//! measured by the discrete-event simulator.

use rand::Rng;
use serde::Serialize;

use crate::analytic::ChannelMoments;
use crate::channel::ErasureSpec;
use crate::engine::{self, RunConfig};
use crate::protocols::Algorithm;
use crate::stats::{
    binary_correlation, ks_one_sample, ks_one_sample_critical_1pct, ks_two_sample,
    ks_two_sample_critical_1pct, Histogram,
};
use crate::traffic::ArrivalProcess;

/// Per-draw iteration cap: a single coupled service exceeding this many
/// slots indicates a channel too degenerate to sample.
const SLOT_CAP: u64 = 10_000_000;

/// Errors from the dominance oracle.
#[derive(Debug, thiserror::Error)]
pub enum DominanceError {
    /// The coupling coin needs `eps{3}^1 >= eps{3}^2`.
    #[error("channel is inadmissible: eps{{3}}^1 = {eps3_tx1} < eps{{3}}^2 = {eps3_tx2}")]
    Inadmissible {
        /// Node-3 erasure under node-1 transmissions.
        eps3_tx1: f64,
        /// Node-3 erasure under node-2 transmissions.
        eps3_tx2: f64,
    },
    /// Some service time is infinite (an erasure probability is 1).
    #[error("channel never delivers: {detail}")]
    NeverDelivers {
        /// Which event never happens.
        detail: String,
    },
    /// A single draw exceeded the per-draw slot cap.
    #[error("coupled draw exceeded {cap} slots")]
    MaxIterations {
        /// The cap that was hit.
        cap: u64,
    },
    /// The internal cross-check simulation failed.
    #[error("internal simulation failed: {0}")]
    Sim(#[from] engine::EngineError),
}

/// One coupled sample of both protocols' service times.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CoupledDraw {
    /// Slots the direct protocol needs.
    pub service_direct: u64,
    /// Slots the forwarding protocol needs (never larger).
    pub service_forwarding: u64,
    /// Slot of the forwarding handoff (first reception by node 2 or 3).
    pub handoff_slot: u64,
    /// Whether the forwarding copy was delivered by the relay.
    pub via_relay: bool,
}

/// Running sums over all coupled slots, for independence diagnostics of the
/// thinning coin.
#[derive(Debug, Clone, Copy, Default)]
pub struct SlotTally {
    n: u64,
    sum_theta: u64,
    sum_z2: u64,
    sum_z3: u64,
    sum_theta_z2: u64,
    sum_theta_z3: u64,
}

impl SlotTally {
    fn observe(&mut self, z2: bool, z3: bool, theta: bool) {
        self.n += 1;
        self.sum_theta += theta as u64;
        self.sum_z2 += z2 as u64;
        self.sum_z3 += z3 as u64;
        self.sum_theta_z2 += (theta && z2) as u64;
        self.sum_theta_z3 += (theta && z3) as u64;
    }

    /// Number of slots observed.
    pub fn slots(&self) -> u64 {
        self.n
    }

    /// Sample correlation between the coin and node-2 reception.
    pub fn theta_corr_z2(&self) -> f64 {
        binary_correlation(self.n, self.sum_theta, self.sum_z2, self.sum_theta_z2)
    }

    /// Sample correlation between the coin and node-3 reception.
    pub fn theta_corr_z3(&self) -> f64 {
        binary_correlation(self.n, self.sum_theta, self.sum_z3, self.sum_theta_z3)
    }
}

/// Slot-level parameters of the coupling.
#[derive(Debug, Clone, Copy)]
struct CouplingLaw {
    /// `Pr(Z2 = 0, Z3 = 0)`.
    p00: f64,
    /// `Pr(Z2 = 1, Z3 = 0)`.
    p10: f64,
    /// `Pr(Z2 = 0, Z3 = 1)`.
    p01: f64,
    /// `Pr(theta = 0) = eps{3}^2 / eps{3}^1` (0 when node 3 always hears
    /// node 1 — the coin is then never consulted anyway).
    p_theta0: f64,
}

impl CouplingLaw {
    fn new(m: &ChannelMoments) -> Result<Self, DominanceError> {
        let (a, b, e2, e) = (m.e3_tx1, m.e23_tx1, m.e2_tx1, m.e3_tx2);
        if a < e {
            return Err(DominanceError::Inadmissible {
                eps3_tx1: a,
                eps3_tx2: e,
            });
        }
        if a >= 1.0 - 1e-12 {
            return Err(DominanceError::NeverDelivers {
                detail: "node 3 never hears node 1".into(),
            });
        }
        if b >= 1.0 - 1e-12 {
            return Err(DominanceError::NeverDelivers {
                detail: "neither node 2 nor node 3 ever hears node 1".into(),
            });
        }
        Ok(CouplingLaw {
            p00: b,
            p10: a - b,
            p01: e2 - b,
            p_theta0: if a > 0.0 { e / a } else { 0.0 },
        })
    }
}

/// Draws one coupled service-time pair; slot variables also feed `tally`.
fn draw_coupled<R: Rng + ?Sized>(
    law: &CouplingLaw,
    rng: &mut R,
    tally: &mut SlotTally,
) -> Result<CoupledDraw, DominanceError> {
    let mut s_direct: Option<u64> = None;
    let mut s_fwd: Option<u64> = None;
    let mut handoff: Option<u64> = None;
    let mut via_relay = false;
    let mut t = 0u64;
    while s_direct.is_none() || s_fwd.is_none() {
        t += 1;
        if t > SLOT_CAP {
            return Err(DominanceError::MaxIterations { cap: SLOT_CAP });
        }
        let u: f64 = rng.gen();
        let (z2, z3) = if u < law.p00 {
            (false, false)
        } else if u < law.p00 + law.p10 {
            (true, false)
        } else if u < law.p00 + law.p10 + law.p01 {
            (false, true)
        } else {
            (true, true)
        };
        let theta = rng.gen::<f64>() >= law.p_theta0;
        tally.observe(z2, z3, theta);

        if z3 && s_direct.is_none() {
            s_direct = Some(t);
        }
        if s_fwd.is_none() {
            match handoff {
                None => {
                    if z3 {
                        handoff = Some(t);
                        s_fwd = Some(t);
                    } else if z2 {
                        handoff = Some(t);
                    }
                }
                Some(_) => {
                    if z3 || theta {
                        s_fwd = Some(t);
                        via_relay = true;
                    }
                }
            }
        }
    }
    Ok(CoupledDraw {
        service_direct: s_direct.expect("loop exits only when set"),
        service_forwarding: s_fwd.expect("loop exits only when set"),
        handoff_slot: handoff.expect("set no later than s_fwd"),
        via_relay,
    })
}

/// Result of a one- or two-sample Kolmogorov–Smirnov comparison at the 1%
/// level.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct KsOutcome {
    /// The KS statistic (sup-distance between CDFs).
    pub statistic: f64,
    /// Critical value at the 1% level for the sample sizes involved.
    pub critical_1pct: f64,
    /// Whether the statistic exceeds the critical value.
    pub reject: bool,
    /// First sample size.
    pub n: u64,
    /// Second sample size (two-sample comparisons only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<u64>,
}

/// Full dominance-oracle report.
#[derive(Debug, Clone, Serialize)]
pub struct DominanceReport {
    /// Number of coupled draws.
    pub draws: u64,
    /// Draws with `service_forwarding > service_direct` (must be 0).
    pub violations: u64,
    /// Sample mean of the direct service time.
    pub mean_direct: f64,
    /// Sample mean of the forwarding service time.
    pub mean_forwarding: f64,
    /// Closed-form direct mean `1 / (1 - eps{3}^1)`.
    pub expected_mean_direct: f64,
    /// Closed-form forwarding mean (reciprocal saturation throughput).
    pub expected_mean_forwarding: f64,
    /// Fraction of draws finished by the relay.
    pub via_relay_fraction: f64,
    /// Direct marginal against its closed-form geometric law.
    pub ks_direct_vs_geometric: KsOutcome,
    /// Forwarding marginal against simulator-measured service times.
    pub ks_forwarding_vs_sim: KsOutcome,
    /// Coin/node-2 sample correlation (diagnostic, near 0).
    pub theta_corr_z2: f64,
    /// Coin/node-3 sample correlation (diagnostic, near 0).
    pub theta_corr_z3: f64,
    /// Total coupled slots examined.
    pub slots: u64,
}

/// Runs `draws` coupled draws on `spec` and cross-checks both marginals.
///
/// The forwarding marginal is compared two-sample against service times
/// measured by the discrete-event simulator running the forwarding protocol
/// at 80% load (service laws there do not depend on load: every service
/// starts with a fresh head transmission and an empty relay).
pub fn dominance_report(
    spec: &ErasureSpec,
    draws: u64,
    seed: u64,
) -> Result<DominanceReport, DominanceError> {
    let m = ChannelMoments::from_spec(spec);
    let law = CouplingLaw::new(&m)?;
    let mut rng = engine::stream_rng(seed, engine::STREAM_COUPLING);
    let mut tally = SlotTally::default();

    let mut hist_direct = Histogram::new();
    let mut hist_fwd = Histogram::new();
    let mut violations = 0u64;
    let mut via_relay = 0u64;
    let mut sum_direct = 0u64;
    let mut sum_fwd = 0u64;
    for _ in 0..draws {
        let draw = draw_coupled(&law, &mut rng, &mut tally)?;
        if draw.service_forwarding > draw.service_direct {
            violations += 1;
        }
        via_relay += draw.via_relay as u64;
        sum_direct += draw.service_direct;
        sum_fwd += draw.service_forwarding;
        hist_direct.push(draw.service_direct.min(u32::MAX as u64) as u32);
        hist_fwd.push(draw.service_forwarding.min(u32::MAX as u64) as u32);
    }

    let a = m.e3_tx1;
    let mu_fwd = m.mu1_forwarding();
    let ks_geo_stat = ks_one_sample(&hist_direct, |k| 1.0 - a.powi(k as i32));
    let ks_direct_vs_geometric = KsOutcome {
        statistic: ks_geo_stat,
        critical_1pct: ks_one_sample_critical_1pct(hist_direct.total()),
        reject: ks_geo_stat > ks_one_sample_critical_1pct(hist_direct.total()),
        n: hist_direct.total(),
        m: None,
    };

    // Simulator cross-check sample of forwarding service times.
    let target = draws.clamp(1, 50_000);
    let lambda = (0.8 * mu_fwd).min(1.0);
    let horizon = ((target as f64 * 1.5 / lambda).ceil() as u64).clamp(10_000, 20_000_000);
    let cfg = RunConfig::new(
        Algorithm::Forwarding,
        spec.clone(),
        ArrivalProcess::bernoulli(lambda).expect("0 < lambda <= 0.8"),
    )
    .with_horizon(horizon)
    .with_seed(seed.wrapping_add(1));
    let metrics = engine::run(&cfg)?;
    let sim_hist = &metrics.service_histogram;
    let ks_fwd_stat = ks_two_sample(&hist_fwd, sim_hist);
    let crit_fwd = ks_two_sample_critical_1pct(hist_fwd.total(), sim_hist.total());
    let ks_forwarding_vs_sim = KsOutcome {
        statistic: ks_fwd_stat,
        critical_1pct: crit_fwd,
        reject: ks_fwd_stat > crit_fwd,
        n: hist_fwd.total(),
        m: Some(sim_hist.total()),
    };

    Ok(DominanceReport {
        draws,
        violations,
        mean_direct: sum_direct as f64 / draws.max(1) as f64,
        mean_forwarding: sum_fwd as f64 / draws.max(1) as f64,
        expected_mean_direct: 1.0 / (1.0 - a),
        expected_mean_forwarding: 1.0 / mu_fwd,
        via_relay_fraction: via_relay as f64 / draws.max(1) as f64,
        ks_direct_vs_geometric,
        ks_forwarding_vs_sim,
        theta_corr_z2: tally.theta_corr_z2(),
        theta_corr_z3: tally.theta_corr_z3(),
        slots: tally.slots(),
    })
}
