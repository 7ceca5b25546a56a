//! Slotted-time simulator and analytic verifier for cooperative
//! cognitive-radio MAC protocols over broadcast erasure channels.
//!
//! Four half-duplex nodes share one channel: a primary source (node 1)
//! streaming to its destination (node 3), and a secondary source (node 2)
//! streaming to its destination (node 4). Node 2 defers to primary traffic
//! and, in the cooperative protocols, overhears failed primary packets,
//! relays them, and XORs them with its own traffic when node 4 already
//! holds the primary packet as side information. Per-slot broadcast
//! feedback tells every node who received what.
//!
//! The crate provides:
//!
//! * [`channel`] — broadcast erasure channels as distributions over
//!   exact reception sets, with correlated or independent listener erasures;
//! * [`traffic`] — slot-level arrival processes;
//! * [`protocols`] — the four protocol state machines (ids 1, 3, 4, 5)
//!   with built-in invariant checking;
//! * [`engine`] — the deterministic discrete-event loop, stability probes
//!   and cycle measurements;
//! * [`analytic`] — closed-form throughputs, the five-phase service chain,
//!   stable-throughput regions and the mixing-coin optimizer;
//! * [`dominance`] — a coupling oracle certifying pathwise service-time
//!   dominance of forwarding over direct transmission;
//! * [`stats`] — histograms and the test statistics the verifiers use.
//!
//! Determinism: every run derives three ChaCha12 streams (arrivals,
//! channel, coin) from one master seed, so any two runs sharing a seed see
//! identical arrivals and channel noise even across different protocols.

pub mod analytic;
pub mod channel;
pub mod dominance;
pub mod engine;
pub mod protocols;
pub mod stats;
pub mod traffic;

pub use channel::{ChannelSpecFile, ErasureSpec, NodeSet, ReceptionEvent, Transmitter};
pub use engine::{RunConfig, RunMetrics, StabilityPoint};
pub use protocols::{Algorithm, Delivery, Session};
pub use traffic::{ArrivalProcess, ArrivalSpecFile};
