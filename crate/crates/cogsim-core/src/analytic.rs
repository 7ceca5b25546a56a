//! Closed-form performance analysis: saturation throughputs, the service-time
//! Markov chain of the coding protocols, stable-throughput regions, the
//! mixing-coin optimizer, busy/idle-cycle means and the generic
//! renewal-reward queue rate.
//!
//! Shorthand used throughout (all erasure probabilities, see
//! [`ChannelMoments`]):
//!
//! ```text
//!   a = eps{3}^1    b = eps{2,3}^1   c = eps{3,4}^1   d = eps{2,3,4}^1
//!   e = eps{3}^2    f = eps{3,4}^2   e4 = eps{4}^2
//!   g(q) = 1 - q c - (1 - q) f
//! ```
//!
//! The in-service primary packet under the coding protocols moves through
//! five phases; `pi` below is the stationary law of the phase process sampled
//! at service slots:
//!
//! ```text
//!   Fresh            node 1 transmits, a service starts or restarts
//!   RelayUnseen      node 2 holds it, node 4 does not (mixing coin active)
//!   RelaySeen        node 2 holds it, node 4 holds a copy (coding possible)
//!   SourceRetxSeen   node 1 retransmits, node 4 holds a copy
//!   SourceRetxUnseen node 1 retransmits, node 4 has nothing
//! ```
//!
//! `Fresh` is visited exactly once per service, so the mean service time is
//! `1 / pi[Fresh]` (Kac's recurrence-time identity), and the fraction of
//! service slots available for coded secondary traffic is `pi[RelaySeen]`.

use serde::Serialize;

use crate::channel::{ErasureSpec, NodeSet, Transmitter};
use crate::protocols::Algorithm;

/// Errors from the analytic layer.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnalyticError {
    /// A transition-matrix row does not sum to 1.
    #[error("transition row {row} sums to {sum}, expected 1")]
    BadMatrixRow {
        /// The offending row.
        row: usize,
        /// Its sum.
        sum: f64,
    },
    /// A transition probability is negative beyond tolerance.
    #[error("negative transition probability {value} at ({row}, {col})")]
    NegativeEntry {
        /// Row index.
        row: usize,
        /// Column index.
        col: usize,
        /// The rejected value.
        value: f64,
    },
    /// The stationary solve failed (matrix defect or residual too large).
    #[error("stationary solve failed: {detail}")]
    SingularChain {
        /// Diagnostic text.
        detail: String,
    },
    /// Mixing bias outside `[0, 1]`.
    #[error("mixing bias {0} outside [0, 1]")]
    InvalidMix(f64),
    /// A required denominator vanishes (some erasure probability is 1): the
    /// protocol cannot make progress on this channel.
    #[error("degenerate channel: {detail}")]
    DegenerateChannel {
        /// Which denominator vanished.
        detail: String,
    },
    /// Load at or beyond capacity: cycle means are undefined.
    #[error("load rho = {rho} is not in [0, 1)")]
    UnstableLoad {
        /// Offered load.
        rho: f64,
    },
    /// `Pr(at least one arrival) = 0`: cycles never start.
    #[error("degenerate arrival process: no slot ever sees an arrival")]
    NoArrivals,
    /// Invalid renewal-queue parameters.
    #[error("invalid renewal parameters: {detail}")]
    InvalidRenewal {
        /// Diagnostic text.
        detail: String,
    },
}

/// The erasure-probability partial sums the analysis consumes.
///
/// Superscript 1/2 denotes node-1/node-2 transmissions; the subscript is the
/// listener set that misses the packet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChannelMoments {
    /// `eps{2}^1`.
    pub e2_tx1: f64,
    /// `eps{3}^1` — shorthand `a`.
    pub e3_tx1: f64,
    /// `eps{4}^1`.
    pub e4_tx1: f64,
    /// `eps{2,3}^1` — shorthand `b`.
    pub e23_tx1: f64,
    /// `eps{3,4}^1` — shorthand `c`.
    pub e34_tx1: f64,
    /// `eps{2,3,4}^1` — shorthand `d`.
    pub e234_tx1: f64,
    /// `eps{3}^2` — shorthand `e`.
    pub e3_tx2: f64,
    /// `eps{4}^2`.
    pub e4_tx2: f64,
    /// `eps{3,4}^2` — shorthand `f`.
    pub e34_tx2: f64,
}

impl ChannelMoments {
    /// Extracts the moments from a validated channel spec.
    pub fn from_spec(spec: &ErasureSpec) -> Self {
        let p1 = |nodes: &[u8]| {
            spec.erasure_prob(Transmitter::Node1, NodeSet::new(nodes).expect("valid set"))
                .expect("node-1 sets are always reachable")
        };
        let p2 = |nodes: &[u8]| {
            spec.erasure_prob(Transmitter::Node2, NodeSet::new(nodes).expect("valid set"))
                .expect("subsets of {3,4} are reachable from node 2")
        };
        ChannelMoments {
            e2_tx1: p1(&[2]),
            e3_tx1: p1(&[3]),
            e4_tx1: p1(&[4]),
            e23_tx1: p1(&[2, 3]),
            e34_tx1: p1(&[3, 4]),
            e234_tx1: p1(&[2, 3, 4]),
            e3_tx2: p2(&[3]),
            e4_tx2: p2(&[4]),
            e34_tx2: p2(&[3, 4]),
        }
    }

    /// Relay premise: node 2 hears node 1's packets at least as reliably as
    /// node 3 hears node 2's (`a >= e`).
    pub fn admissible(&self) -> bool {
        self.e3_tx1 >= self.e3_tx2 - 1e-12
    }

    /// Stronger premise under which the mixing coin degenerates to `q = 0`:
    /// additionally `c >= f`.
    pub fn strongly_admissible(&self) -> bool {
        self.admissible() && self.e34_tx1 >= self.e34_tx2 - 1e-12
    }

    /// Saturation throughput of the primary session without cooperation:
    /// `1 - a`.
    pub fn mu1_no_cooperation(&self) -> f64 {
        1.0 - self.e3_tx1
    }

    /// Saturation throughput with relay forwarding:
    /// `(1-e)(1-b) / (1-e+a-b)`.
    pub fn mu1_forwarding(&self) -> f64 {
        let (a, b, e) = (self.e3_tx1, self.e23_tx1, self.e3_tx2);
        (1.0 - e) * (1.0 - b) / (1.0 - e + a - b)
    }

    /// `g(q) = 1 - q c - (1-q) f`, the per-slot progress probability of the
    /// mixed unseen-relay phase.
    pub fn g(&self, q: f64) -> f64 {
        1.0 - q * self.e34_tx1 - (1.0 - q) * self.e34_tx2
    }

    /// Guards every denominator the coding analysis divides by.
    fn check_nondegenerate(&self) -> Result<(), AnalyticError> {
        for (name, one_minus) in [
            ("1 - eps{3}^1", 1.0 - self.e3_tx1),
            ("1 - eps{2,3}^1", 1.0 - self.e23_tx1),
            ("1 - eps{2,3,4}^1", 1.0 - self.e234_tx1),
            ("1 - eps{3}^2", 1.0 - self.e3_tx2),
            ("1 - eps{4}^2", 1.0 - self.e4_tx2),
            ("1 - eps{3,4}^2", 1.0 - self.e34_tx2),
        ] {
            if one_minus <= 1e-12 {
                return Err(AnalyticError::DegenerateChannel {
                    detail: format!("{name} vanishes"),
                });
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Closed forms for the coding protocols
// ---------------------------------------------------------------------------

/// Mixing correction of the mean service time:
/// `C1(q) = (a-e)(c-d) / ((1-d)(1-e)) * q / g(q)`.
pub fn mixing_correction_service(m: &ChannelMoments, q: f64) -> f64 {
    let (a, c, d, e) = (m.e3_tx1, m.e34_tx1, m.e234_tx1, m.e3_tx2);
    (a - e) * (c - d) / ((1.0 - d) * (1.0 - e)) * q / m.g(q)
}

/// Mixing correction of the codable-slot count:
/// `C2(q) = (c-d)(f-c) / ((1-d)(1-f)) * q / g(q)`.
pub fn mixing_correction_codable(m: &ChannelMoments, q: f64) -> f64 {
    let (c, d, f) = (m.e34_tx1, m.e234_tx1, m.e34_tx2);
    (c - d) * (f - c) / ((1.0 - d) * (1.0 - f)) * q / m.g(q)
}

/// Mean service slots per primary packet, `1 / pi[Fresh]`:
///
/// ```text
///   (1 + a - e - b) / ((1-e)(1-b)) + C1(q)
/// ```
///
/// `q = 0` specializes to the plain coding protocol (and equals
/// `1 / mu1_forwarding` — relaying and coding share service dynamics).
pub fn service_slots_per_packet(m: &ChannelMoments, q: f64) -> f64 {
    let (a, b, e) = (m.e3_tx1, m.e23_tx1, m.e3_tx2);
    (1.0 + a - e - b) / ((1.0 - e) * (1.0 - b)) + mixing_correction_service(m, q)
}

/// Mean service slots per primary packet NOT available for coded secondary
/// traffic, `(1 - pi[RelaySeen]) / pi[Fresh]`:
///
/// ```text
///   (c-d) / ((1-f)(1-d)) + 1/(1-b) - C2(q)
/// ```
pub fn uncodable_slots_per_packet(m: &ChannelMoments, q: f64) -> f64 {
    let (b, c, d, f) = (m.e23_tx1, m.e34_tx1, m.e234_tx1, m.e34_tx2);
    (c - d) / ((1.0 - f) * (1.0 - d)) + 1.0 / (1.0 - b) - mixing_correction_codable(m, q)
}

/// Closed-form derivative of [`service_slots_per_packet`] in `q`:
///
/// ```text
///   (a-e)(c-d)(1-f) / ((1-e)(1-d) g(q)^2)
/// ```
///
/// Its sign is the sign of `(a-e)(c-d)`, so the mean service time is monotone
/// in the coin bias; under admissibility it is nondecreasing.
pub fn service_slope(m: &ChannelMoments, q: f64) -> f64 {
    let (a, c, d, e, f) = (m.e3_tx1, m.e34_tx1, m.e234_tx1, m.e3_tx2, m.e34_tx2);
    let g = m.g(q);
    (a - e) * (c - d) * (1.0 - f) / ((1.0 - e) * (1.0 - d) * g * g)
}

/// Finite-difference cross-check of [`service_slope`].
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SlopeCheck {
    /// Largest relative error between central differences and the formula.
    pub max_rel_err: f64,
    /// Smallest closed-form slope over the grid.
    pub min_slope: f64,
    /// Largest closed-form slope over the grid.
    pub max_slope: f64,
    /// Whether the finite differences confirm the formula (rel. err < 1e-3).
    pub formula_matches: bool,
}

/// Compares [`service_slope`] against central finite differences of
/// [`service_slots_per_packet`] on an interior grid of `samples` points.
pub fn check_service_slope(m: &ChannelMoments, samples: usize) -> SlopeCheck {
    let samples = samples.max(2);
    let h = 1e-6;
    let mut max_rel_err: f64 = 0.0;
    let mut min_slope = f64::INFINITY;
    let mut max_slope = f64::NEG_INFINITY;
    for i in 0..samples {
        let q = h + (1.0 - 2.0 * h) * i as f64 / (samples - 1) as f64;
        let formula = service_slope(m, q);
        let fd = (service_slots_per_packet(m, q + h) - service_slots_per_packet(m, q - h))
            / (2.0 * h);
        let err = (fd - formula).abs() / formula.abs().max(1e-6);
        max_rel_err = max_rel_err.max(err);
        min_slope = min_slope.min(formula);
        max_slope = max_slope.max(formula);
    }
    SlopeCheck {
        max_rel_err,
        min_slope,
        max_slope,
        formula_matches: max_rel_err < 1e-3,
    }
}

// ---------------------------------------------------------------------------
// The five-phase service chain
// ---------------------------------------------------------------------------

/// Phase of the in-service primary packet, sampled once per service slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ServicePhase {
    /// First transmission of the packet by node 1 (exactly once per service).
    Fresh,
    /// Relay buffer holds it; node 4 has no copy.
    RelayUnseen,
    /// Relay buffer holds it; node 4 holds a copy (coded slots possible).
    RelaySeen,
    /// Node-1 retransmission while node 4 holds a copy.
    SourceRetxSeen,
    /// Node-1 retransmission with node 4 empty-handed.
    SourceRetxUnseen,
}

impl ServicePhase {
    /// Number of phases.
    pub const COUNT: usize = 5;

    /// All phases in matrix order.
    pub const ALL: [ServicePhase; 5] = [
        ServicePhase::Fresh,
        ServicePhase::RelayUnseen,
        ServicePhase::RelaySeen,
        ServicePhase::SourceRetxSeen,
        ServicePhase::SourceRetxUnseen,
    ];

    /// Matrix index of the phase.
    pub fn index(self) -> usize {
        match self {
            ServicePhase::Fresh => 0,
            ServicePhase::RelayUnseen => 1,
            ServicePhase::RelaySeen => 2,
            ServicePhase::SourceRetxSeen => 3,
            ServicePhase::SourceRetxUnseen => 4,
        }
    }
}

/// The service-phase Markov chain with its stationary law.
#[derive(Debug, Clone, Serialize)]
pub struct ServiceChain {
    /// Row-stochastic transition matrix in [`ServicePhase::ALL`] order.
    pub transition: [[f64; 5]; 5],
    /// Stationary distribution.
    pub stationary: [f64; 5],
}

impl ServiceChain {
    /// Builds the chain for coin bias `q` (`q = 0` is the plain coding
    /// protocol).
    ///
    /// Transition structure: a fresh slot or a node-1 retransmission sees the
    /// reception pattern of a node-1 slot; the mixed unseen-relay phase
    /// blends node-1 (probability `q`) and node-2 dynamics; the seen phases
    /// complete at the respective node-3 reception rates.
    pub fn build(m: &ChannelMoments, q: f64) -> Result<Self, AnalyticError> {
        if !q.is_finite() || !(0.0..=1.0).contains(&q) {
            return Err(AnalyticError::InvalidMix(q));
        }
        m.check_nondegenerate()?;
        let (a, b, c, d) = (m.e3_tx1, m.e23_tx1, m.e34_tx1, m.e234_tx1);
        let (e, f) = (m.e3_tx2, m.e34_tx2);
        let g = m.g(q);
        if g <= 1e-12 {
            return Err(AnalyticError::DegenerateChannel {
                detail: "g(q) vanishes: neither transmitter reaches nodes 3 or 4".into(),
            });
        }

        // Node-1 slot outcomes (fresh and source-retransmission rows):
        //   complete             1 - a
        //   -> RelayUnseen       c - d      (2 receives, 3 and 4 erased)
        //   -> RelaySeen         a - b - c + d  (2 and 4 receive, 3 erased)
        //   -> SourceRetxSeen    b - d      (only 4 receives)
        //   -> SourceRetxUnseen  d          (everyone erased)
        let node1_row = [1.0 - a, c - d, a - b - c + d, b - d, d];
        let transition = [
            node1_row,
            [
                q * (1.0 - a) + (1.0 - q) * (1.0 - e),
                q * c + (1.0 - q) * f,
                q * (a - c) + (1.0 - q) * (e - f),
                0.0,
                0.0,
            ],
            [1.0 - e, 0.0, e, 0.0, 0.0],
            [1.0 - a, 0.0, a - b, b, 0.0],
            node1_row,
        ];

        let rows: Vec<Vec<f64>> = transition.iter().map(|r| r.to_vec()).collect();
        let pi = stationary_distribution(&rows)?;
        let mut stationary = [0.0; 5];
        stationary.copy_from_slice(&pi);
        Ok(ServiceChain {
            transition,
            stationary,
        })
    }

    /// Convenience: extracts moments from an [`ErasureSpec`] first.
    pub fn from_spec(spec: &ErasureSpec, q: f64) -> Result<Self, AnalyticError> {
        Self::build(&ChannelMoments::from_spec(spec), q)
    }

    /// Stationary probability of a phase.
    pub fn phase(&self, p: ServicePhase) -> f64 {
        self.stationary[p.index()]
    }

    /// `pi[Fresh]`: the primary saturation throughput (services per slot).
    pub fn pi_fresh(&self) -> f64 {
        self.phase(ServicePhase::Fresh)
    }

    /// `pi[RelaySeen]`: fraction of service slots carrying codable traffic.
    pub fn pi_relay_seen(&self) -> f64 {
        self.phase(ServicePhase::RelaySeen)
    }

    /// Mean service slots per packet, `1 / pi[Fresh]`.
    pub fn mean_service(&self) -> f64 {
        1.0 / self.pi_fresh()
    }

    /// Mean codable (seen-relay) slots per service.
    pub fn relay_seen_visits(&self) -> f64 {
        self.pi_relay_seen() / self.pi_fresh()
    }
}

/// Gap between the chain solution and the closed forms at bias `q`:
/// `(|phi - 1/pi_F|, |psi - (1 - pi_R)/pi_F|)`. Both must vanish to solver
/// precision; this is the self-check the `validate` command reports.
pub fn chain_identity_gaps(m: &ChannelMoments, q: f64) -> Result<(f64, f64), AnalyticError> {
    let chain = ServiceChain::build(m, q)?;
    let phi = service_slots_per_packet(m, q);
    let psi = uncodable_slots_per_packet(m, q);
    let gap_phi = (phi - chain.mean_service()).abs();
    let gap_psi = (psi - (1.0 - chain.pi_relay_seen()) / chain.pi_fresh()).abs();
    Ok((gap_phi, gap_psi))
}

/// Stationary distribution of a row-stochastic matrix by Gauss–Jordan
/// elimination with partial pivoting (one balance equation replaced by the
/// normalization).
///
/// Rows must be nonnegative within `1e-12` and sum to 1 within `1e-9`. The
/// result is residual-checked: `|pi P - pi|` must stay below `1e-10`.
pub fn stationary_distribution(rows: &[Vec<f64>]) -> Result<Vec<f64>, AnalyticError> {
    let n = rows.len();
    if n == 0 {
        return Err(AnalyticError::SingularChain {
            detail: "empty matrix".into(),
        });
    }
    for (i, row) in rows.iter().enumerate() {
        if row.len() != n {
            return Err(AnalyticError::SingularChain {
                detail: format!("row {i} has length {}, expected {n}", row.len()),
            });
        }
        let mut sum = 0.0;
        for (j, &p) in row.iter().enumerate() {
            if !p.is_finite() || p < -1e-12 {
                return Err(AnalyticError::NegativeEntry {
                    row: i,
                    col: j,
                    value: p,
                });
            }
            sum += p;
        }
        if (sum - 1.0).abs() > 1e-9 {
            return Err(AnalyticError::BadMatrixRow { row: i, sum });
        }
    }

    // Augmented system: (P^T - I) pi = 0 with the last equation replaced by
    // sum(pi) = 1.
    let mut aug = vec![vec![0.0f64; n + 1]; n];
    for i in 0..n {
        for j in 0..n {
            aug[i][j] = rows[j][i] - if i == j { 1.0 } else { 0.0 };
        }
    }
    aug[n - 1] = vec![1.0; n + 1];

    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&r, &s| {
                aug[r][col]
                    .abs()
                    .partial_cmp(&aug[s][col].abs())
                    .expect("finite entries")
            })
            .expect("nonempty range");
        if aug[pivot][col].abs() < 1e-14 {
            return Err(AnalyticError::SingularChain {
                detail: format!("pivot {col} vanished"),
            });
        }
        aug.swap(col, pivot);
        let pivot_row = aug[col].clone();
        for (r, row) in aug.iter_mut().enumerate() {
            if r != col {
                let factor = row[col] / pivot_row[col];
                if factor != 0.0 {
                    for (t, &p) in row[col..].iter_mut().zip(&pivot_row[col..]) {
                        *t -= factor * p;
                    }
                }
            }
        }
    }
    let mut pi: Vec<f64> = (0..n).map(|i| aug[i][n] / aug[i][i]).collect();
    for p in &mut pi {
        if *p < 0.0 && *p > -1e-12 {
            *p = 0.0;
        }
    }

    // Residual check against the original balance equations.
    for j in 0..n {
        let balance: f64 = (0..n).map(|i| pi[i] * rows[i][j]).sum();
        if (balance - pi[j]).abs() > 1e-10 {
            return Err(AnalyticError::SingularChain {
                detail: format!(
                    "residual {:.3e} at state {j} exceeds 1e-10",
                    (balance - pi[j]).abs()
                ),
            });
        }
    }
    Ok(pi)
}

// ---------------------------------------------------------------------------
// Busy/idle cycles and the renewal queue
// ---------------------------------------------------------------------------

/// Mean busy- and idle-cycle lengths of the primary backlog process.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CycleMeans {
    /// Mean busy-cycle slots: `rho / ((1 - rho) Pr(A >= 1))`.
    pub busy: f64,
    /// Mean idle-cycle slots: `1 / Pr(A >= 1)`.
    pub idle: f64,
}

/// Busy/idle means for arrival rate `lambda`, service rate `mu` and
/// per-slot no-arrival probability `p_zero`.
///
/// Self-consistency: `busy / (busy + idle) = rho` and the M/G/1-style
/// identity `busy = E[S] / (1 - rho) * lambda / Pr(A >= 1) ... ` reduce to
/// the same expression; both are exercised in tests against a cycle-counting
/// simulation.
pub fn cycle_means(lambda: f64, mu: f64, p_zero: f64) -> Result<CycleMeans, AnalyticError> {
    if !(lambda.is_finite() && mu.is_finite() && p_zero.is_finite())
        || lambda < 0.0
        || mu <= 0.0
        || !(0.0..=1.0).contains(&p_zero)
    {
        return Err(AnalyticError::InvalidRenewal {
            detail: format!("lambda {lambda}, mu {mu}, p_zero {p_zero}"),
        });
    }
    let p_plus = 1.0 - p_zero;
    if p_plus <= 0.0 {
        return Err(AnalyticError::NoArrivals);
    }
    let rho = lambda / mu;
    if rho >= 1.0 {
        return Err(AnalyticError::UnstableLoad { rho });
    }
    Ok(CycleMeans {
        busy: rho / ((1.0 - rho) * p_plus),
        idle: 1.0 / p_plus,
    })
}

/// Parameters of the generic renewal-reward queue: a queue observed over
/// i.i.d. renewal cycles, receiving `arrivals` per cycle in expectation and
/// seeing `chances` service opportunities per cycle, each consuming a
/// geometric service of mean `slots_per_service` opportunities.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RenewalQueueParams {
    /// `E[A0]`: mean arrivals per cycle.
    pub arrivals_per_cycle: f64,
    /// `E[H0]`: mean service opportunities per cycle.
    pub chances_per_cycle: f64,
    /// `E[S1]`: mean opportunities consumed per served packet.
    pub slots_per_service: f64,
    /// `E[G0]`: mean cycle length in slots.
    pub cycle_slots: f64,
}

/// Long-run departure rate of the renewal queue:
///
/// ```text
///   r = E[A0] / E[G0]                 if E[A0] <= E[H0] / E[S1]   (stable)
///       E[H0] / (E[G0] E[S1])         otherwise                   (saturated)
/// ```
pub fn renewal_queue_rate(p: &RenewalQueueParams) -> Result<f64, AnalyticError> {
    let ok = p.arrivals_per_cycle.is_finite()
        && p.chances_per_cycle.is_finite()
        && p.slots_per_service.is_finite()
        && p.cycle_slots.is_finite()
        && p.arrivals_per_cycle >= 0.0
        && p.chances_per_cycle >= 0.0
        && p.slots_per_service > 0.0
        && p.cycle_slots > 0.0;
    if !ok {
        return Err(AnalyticError::InvalidRenewal {
            detail: format!("{p:?}"),
        });
    }
    if p.arrivals_per_cycle * p.slots_per_service <= p.chances_per_cycle {
        Ok(p.arrivals_per_cycle / p.cycle_slots)
    } else {
        Ok(p.chances_per_cycle / (p.cycle_slots * p.slots_per_service))
    }
}

// ---------------------------------------------------------------------------
// Throughput regions
// ---------------------------------------------------------------------------

/// One linear constraint `a * r1 + b * r2 <= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HalfPlane {
    /// Coefficient of the primary rate.
    pub a: f64,
    /// Coefficient of the secondary rate.
    pub b: f64,
}

/// One sampled point of a region's upper boundary.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BoundaryPoint {
    /// Primary rate.
    pub r1: f64,
    /// Largest stable secondary rate at `r1`.
    pub r2: f64,
    /// Optimal coin bias achieving `r2` (mixing protocol only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mix_q: Option<f64>,
}

#[derive(Debug, Clone)]
enum RegionKind {
    /// Intersection of the half-planes in `constraints`.
    Polyhedral,
    /// Union over the coin bias; evaluated through the optimizer.
    MixOptimized,
}

/// A protocol's stable-throughput region in the `(r1, r2)` plane.
#[derive(Debug, Clone)]
pub struct ThroughputRegion {
    /// Protocol the region belongs to.
    pub algorithm: Algorithm,
    /// Exact half-plane description (empty for the mixing protocol, whose
    /// region is a union of polyhedra and generally not polyhedral itself —
    /// use `boundary`).
    pub constraints: Vec<HalfPlane>,
    /// Uniform samples of the upper boundary from `r1 = 0` to `r1_max`.
    pub boundary: Vec<BoundaryPoint>,
    /// Largest stable primary rate.
    pub r1_max: f64,
    kind: RegionKind,
    moments: ChannelMoments,
}

impl ThroughputRegion {
    /// Computes a protocol's region with `samples` boundary points.
    pub fn compute(
        algorithm: Algorithm,
        spec: &ErasureSpec,
        samples: usize,
    ) -> Result<Self, AnalyticError> {
        let m = ChannelMoments::from_spec(spec);
        m.check_nondegenerate()?;
        let den_e4 = 1.0 - m.e4_tx2;
        let (constraints, r1_max, kind) = match algorithm {
            Algorithm::NoCooperation => {
                let mu = m.mu1_no_cooperation();
                if mu <= 1e-12 {
                    return Err(AnalyticError::DegenerateChannel {
                        detail: "direct link never delivers".into(),
                    });
                }
                (
                    vec![HalfPlane {
                        a: 1.0 / mu,
                        b: 1.0 / den_e4,
                    }],
                    mu,
                    RegionKind::Polyhedral,
                )
            }
            Algorithm::Forwarding => {
                let mu = m.mu1_forwarding();
                (
                    vec![HalfPlane {
                        a: 1.0 / mu,
                        b: 1.0 / den_e4,
                    }],
                    mu,
                    RegionKind::Polyhedral,
                )
            }
            Algorithm::Coding => {
                let phi = service_slots_per_packet(&m, 0.0);
                let psi = uncodable_slots_per_packet(&m, 0.0);
                let den_f = 1.0 - m.e34_tx2;
                (
                    vec![
                        HalfPlane {
                            a: phi,
                            b: 1.0 / den_f,
                        },
                        HalfPlane {
                            a: psi,
                            b: 1.0 / den_e4,
                        },
                    ],
                    1.0 / phi,
                    RegionKind::Polyhedral,
                )
            }
            Algorithm::CodedMixing => {
                // The mean service time is monotone in q, so the largest
                // stable r1 sits at one of the endpoints.
                let r1_max = (1.0 / service_slots_per_packet(&m, 0.0))
                    .max(1.0 / service_slots_per_packet(&m, 1.0));
                (Vec::new(), r1_max, RegionKind::MixOptimized)
            }
        };
        let mut region = ThroughputRegion {
            algorithm,
            constraints,
            boundary: Vec::new(),
            r1_max,
            kind,
            moments: m,
        };
        let samples = samples.max(2);
        region.boundary = (0..samples)
            .map(|i| {
                let r1 = r1_max * i as f64 / (samples - 1) as f64;
                let (r2, mix_q) = region.r2_max_with_q(r1);
                BoundaryPoint { r1, r2, mix_q }
            })
            .collect();
        Ok(region)
    }

    /// Largest stable `r2` at primary rate `r1` (0 beyond `r1_max`).
    pub fn r2_max(&self, r1: f64) -> f64 {
        self.r2_max_with_q(r1).0
    }

    /// As [`ThroughputRegion::r2_max`], also reporting the optimal coin bias
    /// for the mixing protocol.
    pub fn r2_max_with_q(&self, r1: f64) -> (f64, Option<f64>) {
        if r1 < 0.0 || r1 > self.r1_max + 1e-12 {
            return (0.0, None);
        }
        match self.kind {
            RegionKind::Polyhedral => {
                let r2 = self
                    .constraints
                    .iter()
                    .map(|h| (1.0 - h.a * r1) / h.b)
                    .fold(f64::INFINITY, f64::min);
                (r2.max(0.0), None)
            }
            RegionKind::MixOptimized => {
                let (q, r2) = optimal_mix(&self.moments, r1);
                (r2, Some(q))
            }
        }
    }

    /// Membership test with additive slack.
    pub fn contains(&self, r1: f64, r2: f64, slack: f64) -> bool {
        r1 >= -slack && r2 >= -slack && r1 <= self.r1_max + slack && r2 <= self.r2_max(r1) + slack
    }

    /// The moments the region was computed from.
    pub fn moments(&self) -> &ChannelMoments {
        &self.moments
    }
}

/// Optimal mixing bias at primary rate `r1`: maximizes
///
/// ```text
///   min( (1-f) (1 - r1 phi(q)),  (1-e4) (1 - r1 psi(q)) )
/// ```
///
/// over `q` in `[0, 1]`. Both branches are monotone in `q` (fixed-sign
/// derivatives), so their pointwise minimum is unimodal: a coarse grid scan
/// plus golden-section refinement finds the maximizer. Ties resolve to the
/// smallest `q`, so channels where mixing cannot help return exactly `q = 0`.
///
/// Returns `(q_opt, r2_max)` with `r2_max` clamped at 0.
pub fn optimal_mix(m: &ChannelMoments, r1: f64) -> (f64, f64) {
    let den_f = 1.0 - m.e34_tx2;
    let den_e4 = 1.0 - m.e4_tx2;
    let value = |q: f64| {
        let line_coded = den_f * (1.0 - r1 * service_slots_per_packet(m, q));
        let line_plain = den_e4 * (1.0 - r1 * uncodable_slots_per_packet(m, q));
        line_coded.min(line_plain)
    };

    const GRID: usize = 101;
    let mut best_i = 0;
    let mut best_v = f64::NEG_INFINITY;
    for i in 0..GRID {
        let q = i as f64 / (GRID - 1) as f64;
        let v = value(q);
        if v > best_v {
            best_v = v;
            best_i = i;
        }
    }
    let mut best_q = best_i as f64 / (GRID - 1) as f64;

    // Golden-section refinement inside the bracketing grid cells.
    let mut lo = if best_i == 0 {
        0.0
    } else {
        (best_i - 1) as f64 / (GRID - 1) as f64
    };
    let mut hi = ((best_i + 1).min(GRID - 1)) as f64 / (GRID - 1) as f64;
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = value(x1);
    let mut f2 = value(x2);
    for _ in 0..70 {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = value(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = value(x1);
        }
    }
    let candidate = 0.5 * (lo + hi);
    if value(candidate) > best_v {
        best_q = candidate;
        best_v = value(candidate);
    }
    (best_q, best_v.max(0.0))
}
