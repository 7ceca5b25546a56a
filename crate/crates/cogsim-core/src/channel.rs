//! Broadcast erasure channel for the four-node cognitive-radio topology.
//!
//! Node 1 (primary source) is overheard by nodes {2, 3, 4}; node 2 (secondary
//! source / relay) is overheard by {3, 4}. One node transmits per slot, and
//! the channel erases the slot at each listener, i.i.d. across slots but with
//! arbitrary correlation *across listeners* within a slot.
//!
//! The canonical representation is the distribution of the **exact reception
//! set**: eight pattern probabilities for node-1 slots (subsets of {2,3,4})
//! and four for node-2 slots (subsets of {3,4}). Every quantity the analysis
//! needs has the form
//!
//! ```text
//!   eps_S = Pr(transmission erased at every node of S)
//!         = sum of patterns R with R disjoint from S,
//! ```
//!
//! a partial sum over the table, so correlated listeners cost nothing extra.
//! Independent per-listener erasures are a convenience constructor that fills
//! the table with products.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

/// Tolerance for "probabilities sum to one" checks on user-supplied tables.
const NORM_TOL: f64 = 1e-12;

/// Errors from channel-spec construction and queries.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ChannelError {
    /// A supplied pattern probability is negative (beyond tolerance) or not
    /// finite.
    #[error("pattern probability {value} at index {index} is not a probability")]
    InvalidPattern {
        /// Index into the offending pattern table.
        index: usize,
        /// The rejected value.
        value: f64,
    },
    /// A pattern table has the wrong number of entries.
    #[error("expected {expected} pattern probabilities, got {got}")]
    PatternCount {
        /// Required table length (8 for node 1, 4 for node 2).
        expected: usize,
        /// Supplied length.
        got: usize,
    },
    /// Pattern probabilities do not sum to 1 within `1e-12`.
    #[error("pattern probabilities sum to {sum:.17}, expected 1 within 1e-12")]
    NotNormalized {
        /// The offending sum.
        sum: f64,
    },
    /// A marginal erasure probability lies outside `[0, 1]`.
    #[error("erasure probability {value} for {name} outside [0, 1]")]
    InvalidMarginal {
        /// Which marginal was rejected.
        name: &'static str,
        /// The rejected value.
        value: f64,
    },
    /// Cooperation premise violated: the relay must hear node 1 at least as
    /// reliably as the destination, i.e. erasures must satisfy
    /// `eps3_tx1 >= eps3_tx2`.
    #[error(
        "inadmissible spec: direct-link erasure eps3_tx1 = {eps3_tx1} is smaller \
         than relay-link erasure eps3_tx2 = {eps3_tx2}"
    )]
    Inadmissible {
        /// Erasure probability of node-1 transmissions at node 3.
        eps3_tx1: f64,
        /// Erasure probability of node-2 transmissions at node 3.
        eps3_tx2: f64,
    },
    /// Queried node set contains a node the transmitter cannot reach.
    #[error("node set {set} is not receivable from {tx}")]
    UnreachableSet {
        /// The transmitter queried.
        tx: Transmitter,
        /// The offending set.
        set: NodeSet,
    },
    /// Node id outside the listener set {2, 3, 4}.
    #[error("node {0} is not a listener (valid nodes: 2, 3, 4)")]
    InvalidNode(u8),
}

/// Which source is on the air during a slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Transmitter {
    /// Node 1, the primary source (listeners: nodes 2, 3, 4).
    Node1,
    /// Node 2, the secondary source / relay (listeners: nodes 3, 4).
    Node2,
}

impl fmt::Display for Transmitter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Transmitter::Node1 => write!(f, "node1"),
            Transmitter::Node2 => write!(f, "node2"),
        }
    }
}

/// A set of listener nodes, drawn from {2, 3, 4}.
///
/// Stored as a bitmask with bit `k - 2` standing for node `k`.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeSet(u8);

impl NodeSet {
    /// The empty set (erasure "at every node of {}" is vacuously certain).
    pub const EMPTY: NodeSet = NodeSet(0);

    /// Builds a set from node ids; each must be 2, 3 or 4.
    pub fn new(nodes: &[u8]) -> Result<Self, ChannelError> {
        let mut mask = 0u8;
        for &n in nodes {
            if !(2..=4).contains(&n) {
                return Err(ChannelError::InvalidNode(n));
            }
            mask |= 1 << (n - 2);
        }
        Ok(NodeSet(mask))
    }

    /// Whether `node` belongs to the set.
    pub fn contains(self, node: u8) -> bool {
        (2..=4).contains(&node) && self.0 & (1 << (node - 2)) != 0
    }

    /// Number of nodes in the set.
    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    /// Whether the set is empty.
    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    /// Whether every node of `other` belongs to this set.
    pub fn contains_all(self, other: NodeSet) -> bool {
        self.0 & other.0 == other.0
    }

    pub(crate) fn mask(self) -> u8 {
        self.0
    }

    pub(crate) fn from_mask(mask: u8) -> Self {
        debug_assert!(mask < 8);
        NodeSet(mask)
    }
}

impl fmt::Debug for NodeSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "NodeSet{self}")
    }
}

impl fmt::Display for NodeSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        let mut first = true;
        for node in 2u8..=4 {
            if self.contains(node) {
                if !first {
                    write!(f, ",")?;
                }
                write!(f, "{node}")?;
                first = false;
            }
        }
        write!(f, "}}")
    }
}

/// Outcome of one slot: which listeners decoded the transmission.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReceptionEvent {
    tx: Transmitter,
    received: NodeSet,
}

impl ReceptionEvent {
    /// Assembles an event; node-2 events must not claim reception at node 2.
    pub fn new(tx: Transmitter, received: NodeSet) -> Self {
        debug_assert!(
            tx == Transmitter::Node1 || !received.contains(2),
            "node 2 cannot receive its own transmission"
        );
        ReceptionEvent { tx, received }
    }

    /// The node that was on the air.
    pub fn transmitter(self) -> Transmitter {
        self.tx
    }

    /// Whether `node` decoded the slot.
    pub fn received_by(self, node: u8) -> bool {
        self.received.contains(node)
    }

    /// The exact reception set.
    pub fn received_set(self) -> NodeSet {
        self.received
    }
}

/// Joint erasure law for both transmitters, stored as exact-reception-set
/// pattern probabilities.
///
/// Construction validates and normalizes the tables; all queries afterwards
/// are infallible except for reachability checks.
#[derive(Debug, Clone, PartialEq)]
pub struct ErasureSpec {
    /// `Pr(exact reception set of a node-1 slot)`, indexed by bitmask with
    /// bit 0 = node 2, bit 1 = node 3, bit 2 = node 4.
    tx1: [f64; 8],
    /// `Pr(exact reception set of a node-2 slot)`, indexed by bitmask with
    /// bit 0 = node 3, bit 1 = node 4.
    tx2: [f64; 4],
}

impl ErasureSpec {
    /// Builds a spec from full pattern tables.
    ///
    /// Each table must be entrywise in `[0, 1]` (tiny negative noise up to
    /// `1e-12` is clamped) and sum to 1 within `1e-12`; the stored tables are
    /// renormalized exactly. With `enforce_admissible`, rejects specs where
    /// the relay link to node 3 is worse than the direct link
    /// (`eps3_tx1 < eps3_tx2`).
    pub fn from_joint(
        tx1_patterns: [f64; 8],
        tx2_patterns: [f64; 4],
        enforce_admissible: bool,
    ) -> Result<Self, ChannelError> {
        let tx1 = validate_table(&tx1_patterns)?;
        let tx2 = validate_table(&tx2_patterns)?;
        let spec = ErasureSpec {
            tx1: tx1.try_into().expect("length preserved"),
            tx2: tx2.try_into().expect("length preserved"),
        };
        if enforce_admissible && !spec.is_admissible() {
            return Err(ChannelError::Inadmissible {
                eps3_tx1: spec.eps3_tx1(),
                eps3_tx2: spec.eps3_tx2(),
            });
        }
        Ok(spec)
    }

    /// Builds a spec with independent per-listener erasures from marginals.
    ///
    /// `eps*_tx1` are erasure probabilities of node-1 transmissions at nodes
    /// 2/3/4; `eps*_tx2` of node-2 transmissions at nodes 3/4.
    pub fn from_marginals_independent(
        eps2_tx1: f64,
        eps3_tx1: f64,
        eps4_tx1: f64,
        eps3_tx2: f64,
        eps4_tx2: f64,
        enforce_admissible: bool,
    ) -> Result<Self, ChannelError> {
        for (name, value) in [
            ("eps2_tx1", eps2_tx1),
            ("eps3_tx1", eps3_tx1),
            ("eps4_tx1", eps4_tx1),
            ("eps3_tx2", eps3_tx2),
            ("eps4_tx2", eps4_tx2),
        ] {
            if !value.is_finite() || !(0.0..=1.0).contains(&value) {
                return Err(ChannelError::InvalidMarginal { name, value });
            }
        }
        let mut tx1 = [0.0f64; 8];
        for (mask, slot) in tx1.iter_mut().enumerate() {
            let p2 = if mask & 0b001 != 0 { 1.0 - eps2_tx1 } else { eps2_tx1 };
            let p3 = if mask & 0b010 != 0 { 1.0 - eps3_tx1 } else { eps3_tx1 };
            let p4 = if mask & 0b100 != 0 { 1.0 - eps4_tx1 } else { eps4_tx1 };
            *slot = p2 * p3 * p4;
        }
        let mut tx2 = [0.0f64; 4];
        for (mask, slot) in tx2.iter_mut().enumerate() {
            let p3 = if mask & 0b01 != 0 { 1.0 - eps3_tx2 } else { eps3_tx2 };
            let p4 = if mask & 0b10 != 0 { 1.0 - eps4_tx2 } else { eps4_tx2 };
            *slot = p3 * p4;
        }
        Self::from_joint(tx1, tx2, enforce_admissible)
    }

    /// `Pr(transmission by `tx` erased at every node of `nodes`)`.
    ///
    /// The empty set yields 1. For node-2 transmissions the set must lie
    /// within {3, 4}.
    pub fn erasure_prob(&self, tx: Transmitter, nodes: NodeSet) -> Result<f64, ChannelError> {
        match tx {
            Transmitter::Node1 => {
                let s = nodes.mask();
                Ok(self
                    .tx1
                    .iter()
                    .enumerate()
                    .filter(|(mask, _)| *mask as u8 & s == 0)
                    .map(|(_, p)| p)
                    .sum())
            }
            Transmitter::Node2 => {
                if nodes.contains(2) {
                    return Err(ChannelError::UnreachableSet { tx, set: nodes });
                }
                // Internal bit layout for {3,4}-subsets is the {2,3,4} mask
                // shifted right by one.
                let s = nodes.mask() >> 1;
                Ok(self
                    .tx2
                    .iter()
                    .enumerate()
                    .filter(|(mask, _)| *mask as u8 & s == 0)
                    .map(|(_, p)| p)
                    .sum())
            }
        }
    }

    /// Shorthand: erasure of node-1 slots at node 3.
    pub fn eps3_tx1(&self) -> f64 {
        self.erasure_prob(Transmitter::Node1, NodeSet::new(&[3]).expect("valid"))
            .expect("node-1 set")
    }

    /// Shorthand: erasure of node-2 slots at node 3.
    pub fn eps3_tx2(&self) -> f64 {
        self.erasure_prob(Transmitter::Node2, NodeSet::new(&[3]).expect("valid"))
            .expect("node-2 set")
    }

    /// Whether the relay premise `eps3_tx1 >= eps3_tx2` holds (up to 1e-12).
    pub fn is_admissible(&self) -> bool {
        self.eps3_tx1() >= self.eps3_tx2() - NORM_TOL
    }

    /// Draws the exact reception set of one slot.
    pub fn sample<R: Rng + ?Sized>(&self, tx: Transmitter, rng: &mut R) -> ReceptionEvent {
        let u: f64 = rng.gen();
        let mask = match tx {
            Transmitter::Node1 => draw_index(&self.tx1, u) as u8,
            // Stored node-2 masks cover {3,4}; shift into the {2,3,4} layout.
            Transmitter::Node2 => (draw_index(&self.tx2, u) as u8) << 1,
        };
        ReceptionEvent::new(tx, NodeSet::from_mask(mask))
    }

    /// Node-1 pattern table (bit 0 = node 2, bit 1 = node 3, bit 2 = node 4).
    pub fn tx1_patterns(&self) -> &[f64; 8] {
        &self.tx1
    }

    /// Node-2 pattern table (bit 0 = node 3, bit 1 = node 4).
    pub fn tx2_patterns(&self) -> &[f64; 4] {
        &self.tx2
    }
}

fn validate_table(table: &[f64]) -> Result<Vec<f64>, ChannelError> {
    let mut cleaned = Vec::with_capacity(table.len());
    for (index, &value) in table.iter().enumerate() {
        if !value.is_finite() || !(-NORM_TOL..=1.0 + NORM_TOL).contains(&value) {
            return Err(ChannelError::InvalidPattern { index, value });
        }
        cleaned.push(value.max(0.0));
    }
    let sum: f64 = cleaned.iter().sum();
    if (sum - 1.0).abs() > NORM_TOL {
        return Err(ChannelError::NotNormalized { sum });
    }
    for value in &mut cleaned {
        *value /= sum;
    }
    Ok(cleaned)
}

/// Inverse-cdf draw over a normalized table; `u` is uniform on [0, 1).
fn draw_index(table: &[f64], u: f64) -> usize {
    let mut cum = 0.0;
    for (i, &p) in table.iter().enumerate() {
        cum += p;
        if u < cum {
            return i;
        }
    }
    // Floating-point slack: fall back to the last entry with positive mass.
    table
        .iter()
        .rposition(|&p| p > 0.0)
        .unwrap_or(table.len() - 1)
}

/// On-disk channel description.
///
/// ```json
/// {"mode": "independent",
///  "tx1": {"2": 0.2, "3": 0.8, "4": 0.5},
///  "tx2": {"3": 0.2, "4": 0.2}}
/// ```
///
/// or, fully general:
///
/// ```json
/// {"mode": "joint",
///  "tx1_patterns": [p0, ..., p7],
///  "tx2_patterns": [p0, ..., p3]}
/// ```
///
/// Pattern indices are reception-set bitmasks: for `tx1_patterns` bit 0 =
/// node 2, bit 1 = node 3, bit 2 = node 4; for `tx2_patterns` bit 0 = node 3,
/// bit 1 = node 4.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum ChannelSpecFile {
    /// Independent per-listener erasures given by marginals.
    Independent {
        /// Erasure marginals of node-1 transmissions, keyed by listener id.
        tx1: Tx1Marginals,
        /// Erasure marginals of node-2 transmissions, keyed by listener id.
        tx2: Tx2Marginals,
    },
    /// Fully general exact-reception-set distributions.
    Joint {
        /// Eight pattern probabilities for node-1 slots.
        tx1_patterns: Vec<f64>,
        /// Four pattern probabilities for node-2 slots.
        tx2_patterns: Vec<f64>,
    },
}

/// Marginal erasure probabilities for node-1 transmissions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Tx1Marginals {
    /// At node 2.
    #[serde(rename = "2")]
    pub node2: f64,
    /// At node 3.
    #[serde(rename = "3")]
    pub node3: f64,
    /// At node 4.
    #[serde(rename = "4")]
    pub node4: f64,
}

/// Marginal erasure probabilities for node-2 transmissions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Tx2Marginals {
    /// At node 3.
    #[serde(rename = "3")]
    pub node3: f64,
    /// At node 4.
    #[serde(rename = "4")]
    pub node4: f64,
}

impl ChannelSpecFile {
    /// Materializes the validated spec.
    pub fn build(&self, enforce_admissible: bool) -> Result<ErasureSpec, ChannelError> {
        match self {
            ChannelSpecFile::Independent { tx1, tx2 } => ErasureSpec::from_marginals_independent(
                tx1.node2,
                tx1.node3,
                tx1.node4,
                tx2.node3,
                tx2.node4,
                enforce_admissible,
            ),
            ChannelSpecFile::Joint {
                tx1_patterns,
                tx2_patterns,
            } => {
                let tx1: [f64; 8] =
                    tx1_patterns
                        .as_slice()
                        .try_into()
                        .map_err(|_| ChannelError::PatternCount {
                            expected: 8,
                            got: tx1_patterns.len(),
                        })?;
                let tx2: [f64; 4] =
                    tx2_patterns
                        .as_slice()
                        .try_into()
                        .map_err(|_| ChannelError::PatternCount {
                            expected: 4,
                            got: tx2_patterns.len(),
                        })?;
                ErasureSpec::from_joint(tx1, tx2, enforce_admissible)
            }
        }
    }
}
