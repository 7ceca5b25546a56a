//! Slot-level state machines for the four transmission protocols.
//!
//! Setting: the primary session is node 1 -> node 3 and the secondary session
//! is node 2 -> node 4. Node 2 is cognitive — it defers whenever node 1 has
//! backlog, learns everyone's reception state from the broadcast ACK/NACK
//! feedback that closes each slot, and (in the cooperative protocols) keeps
//! overheard primary packets to retransmit on node 1's behalf. Exactly one
//! node transmits per slot.
//!
//! Protocol ids follow the CLI numbering:
//!
//! * **1 — `NoCooperation`**: node 2 only uses slots node 1 leaves idle.
//! * **3 — `Forwarding`**: node 2 also buffers one overheard primary packet
//!   at a time and forwards it until node 3 receives it.
//! * **4 — `Coding`**: node 2 tracks whether node 4 already holds the
//!   buffered primary packet. Once it does, the packet is retransmitted
//!   XOR-ed with a secondary packet that node 3 already holds, so a single
//!   slot can advance both sessions (node 3 strips the secondary half with
//!   its stored copy; node 4 strips the primary half with its own).
//! * **5 — `CodedMixing`**: like `Coding`, but while node 4 still lacks the
//!   buffered packet, a per-slot coin picks the retransmitter: node 1 with
//!   probability `q`, node 2 otherwise. Node 1's channel may reach node 4
//!   better, which is exactly the trade the coin exploits.
//!
//! The secondary queue is saturated: node 2 always has a fresh packet of its
//! own, minted lazily when first scheduled.

use std::collections::VecDeque;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{ReceptionEvent, Transmitter};

/// Errors raised by the protocol state machines.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProtocolError {
    /// Algorithm id not in {1, 3, 4, 5}.
    #[error("unknown algorithm id {0} (valid ids: 1, 3, 4, 5)")]
    UnknownAlgorithm(u8),
    /// A structural invariant failed; the state machine is corrupt.
    #[error("slot {slot}: invariant `{check}` violated: {detail}")]
    InvariantViolated {
        /// Slot at which the violation was detected.
        slot: u64,
        /// Name of the violated invariant.
        check: &'static str,
        /// Human-readable context.
        detail: String,
    },
    /// The applied reception event was sampled for the wrong transmitter.
    #[error("slot {slot}: event transmitter {got} does not match scheduled {want}")]
    TransmitterMismatch {
        /// Slot of the mismatch.
        slot: u64,
        /// Transmitter carried by the event.
        got: Transmitter,
        /// Transmitter the decision scheduled.
        want: Transmitter,
    },
}

/// Transmission protocol selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    /// Id 1: node 2 uses only idle slots.
    NoCooperation,
    /// Id 3: plus single-packet relay forwarding.
    Forwarding,
    /// Id 4: plus node-4 side information and XOR coding.
    Coding,
    /// Id 5: plus coin-mixed retransmitter choice while node 4 lacks the
    /// buffered packet.
    CodedMixing,
}

impl Algorithm {
    /// All protocols, in id order.
    pub const ALL: [Algorithm; 4] = [
        Algorithm::NoCooperation,
        Algorithm::Forwarding,
        Algorithm::Coding,
        Algorithm::CodedMixing,
    ];

    /// Stable numeric id used by the CLI and output files.
    pub fn id(self) -> u8 {
        match self {
            Algorithm::NoCooperation => 1,
            Algorithm::Forwarding => 3,
            Algorithm::Coding => 4,
            Algorithm::CodedMixing => 5,
        }
    }

    /// Inverse of [`Algorithm::id`].
    pub fn from_id(id: u8) -> Result<Self, ProtocolError> {
        match id {
            1 => Ok(Algorithm::NoCooperation),
            3 => Ok(Algorithm::Forwarding),
            4 => Ok(Algorithm::Coding),
            5 => Ok(Algorithm::CodedMixing),
            other => Err(ProtocolError::UnknownAlgorithm(other)),
        }
    }

    /// Whether node 2 relays primary packets at all.
    pub fn is_cooperative(self) -> bool {
        !matches!(self, Algorithm::NoCooperation)
    }

    /// Whether node 2 tracks node-4 copies and codes across sessions.
    pub fn uses_coding(self) -> bool {
        matches!(self, Algorithm::Coding | Algorithm::CodedMixing)
    }

    /// Whether the mixing coin is consulted.
    pub fn uses_mix_coin(self) -> bool {
        matches!(self, Algorithm::CodedMixing)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Algorithm::NoCooperation => "no-cooperation",
            Algorithm::Forwarding => "forwarding",
            Algorithm::Coding => "coding",
            Algorithm::CodedMixing => "coded-mixing",
        };
        write!(f, "{name}")
    }
}

impl Serialize for Algorithm {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(self.id())
    }
}

impl<'de> Deserialize<'de> for Algorithm {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let id = u8::deserialize(d)?;
        Algorithm::from_id(id).map_err(serde::de::Error::custom)
    }
}

/// Which traffic flow a packet belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Session {
    /// Node 1 -> node 3.
    Primary,
    /// Node 2 -> node 4.
    Secondary,
}

/// Monotone per-session packet identifier (1-based).
pub type PacketId = u64;

/// A data packet with the slots needed for delay accounting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Packet {
    /// Per-session id, strictly increasing in arrival order.
    pub id: PacketId,
    /// Owning session.
    pub session: Session,
    /// Slot in which the packet entered its source queue.
    pub arrival_slot: u64,
    /// First slot in which its source transmitted it (service start);
    /// `None` until then.
    pub head_slot: Option<u64>,
}

/// What the scheduled transmission carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Payload {
    /// A single uncoded packet.
    Plain {
        /// Owning session of the packet.
        session: Session,
        /// Packet id.
        id: PacketId,
    },
    /// XOR of one primary and one secondary packet. Node 3 recovers the
    /// primary half using its stored secondary copy; node 4 recovers the
    /// secondary half using its stored primary copy.
    Coded {
        /// Id of the primary-session packet in the combination.
        primary: PacketId,
        /// Id of the secondary-session packet in the combination.
        secondary: PacketId,
    },
}

/// The scheduling case chosen for a slot; fixes transmitter, payload and how
/// the reception outcome is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotKind {
    /// Node 1 sends the head-of-line primary packet.
    PrimaryHead,
    /// Node 1 retransmits the packet mirrored in the relay buffer
    /// (`CodedMixing`, coin chose node 1).
    PrimaryMirrored,
    /// Node 2 retransmits the mirrored packet (`CodedMixing`, coin chose
    /// node 2).
    RelayMirrored,
    /// Node 2 forwards its buffered primary packet (`Forwarding`).
    RelayForward,
    /// Node 2 retransmits a primary packet node 4 does not hold (`Coding`).
    RelayUnseen,
    /// Node 2 retransmits a node-4-held primary packet uncoded (no decodable
    /// secondary packet available to pair it with).
    RelaySeenPlain,
    /// Node 2 sends primary XOR secondary, decodable at both destinations.
    RelaySeenCoded,
    /// Node 2 sends a fresh secondary packet (primary system idle).
    SecondaryFresh,
}

impl SlotKind {
    /// The node on the air for this kind of slot.
    pub fn transmitter(self) -> Transmitter {
        match self {
            SlotKind::PrimaryHead | SlotKind::PrimaryMirrored => Transmitter::Node1,
            _ => Transmitter::Node2,
        }
    }
}

/// One slot's scheduling decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SlotDecision {
    /// Scheduling case.
    pub kind: SlotKind,
    /// Transmitted payload.
    pub payload: Payload,
}

impl SlotDecision {
    /// The node on the air.
    pub fn transmitter(&self) -> Transmitter {
        self.kind.transmitter()
    }
}

/// A packet handed to its destination.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Delivery {
    /// Owning session.
    pub session: Session,
    /// Packet id.
    pub id: PacketId,
    /// Slot of delivery.
    pub slot: u64,
    /// Slot the packet entered its source queue.
    pub arrival_slot: u64,
    /// First slot the packet was transmitted (service start).
    pub head_slot: Option<u64>,
}

impl Delivery {
    /// Service time in slots (first transmission through delivery,
    /// inclusive); `None` if the packet was never head-of-line.
    pub fn service_slots(&self) -> Option<u64> {
        self.head_slot.map(|h| self.slot - h + 1)
    }
}

/// Complete protocol state. Buffers unused by simpler protocols stay empty,
/// so one struct serves all four state machines.
#[derive(Debug, Clone, Default)]
pub struct SystemState {
    /// Primary transmit queue at node 1 (front = in service).
    q1: VecDeque<Packet>,
    /// `Forwarding` relay buffer: one overheard primary packet.
    relay_fwd: Option<Packet>,
    /// Coding relay buffer for a primary packet node 4 has NOT received.
    relay_unseen: Option<Packet>,
    /// Coding relay buffer for a primary packet node 4 HAS received.
    relay_seen: Option<Packet>,
    /// Node 4's stored copy of the in-service primary packet, if any.
    node4_copy: Option<PacketId>,
    /// Secondary packets node 3 already holds, queued at node 2 for coded
    /// service (front = oldest).
    q2_held3: VecDeque<Packet>,
    /// Node 3's own record of those copies; must mirror `q2_held3` exactly.
    node3_held: VecDeque<PacketId>,
    /// Lazily minted head of the saturated secondary queue.
    secondary_head: Option<Packet>,
    next_primary_id: PacketId,
    next_secondary_id: PacketId,
}

impl SystemState {
    /// Fresh, empty state.
    pub fn new() -> Self {
        Self::default()
    }

    /// Admits `count` primary arrivals in `slot`.
    pub fn admit_primary(&mut self, slot: u64, count: u32) {
        for _ in 0..count {
            self.next_primary_id += 1;
            self.q1.push_back(Packet {
                id: self.next_primary_id,
                session: Session::Primary,
                arrival_slot: slot,
                head_slot: None,
            });
        }
    }

    /// Number of distinct undelivered primary packets in the system.
    ///
    /// Under `CodedMixing` the mirrored packet sits both at the head of `q1`
    /// and in the relay buffer; it is counted once.
    pub fn primary_backlog(&self) -> u32 {
        let mut n = self.q1.len();
        if self.relay_fwd.is_some() {
            n += 1;
        }
        if let Some(p) = &self.relay_unseen {
            if self.q1.front().map(|h| h.id) != Some(p.id) {
                n += 1;
            }
        }
        if self.relay_seen.is_some() {
            n += 1;
        }
        n as u32
    }

    /// Length of node 1's own queue.
    pub fn q1_len(&self) -> usize {
        self.q1.len()
    }

    /// Occupancy of the three relay buffers `(forward, unseen, seen)`.
    pub fn relay_occupancy(&self) -> (bool, bool, bool) {
        (
            self.relay_fwd.is_some(),
            self.relay_unseen.is_some(),
            self.relay_seen.is_some(),
        )
    }

    /// Number of stored secondary packets awaiting coded service.
    pub fn q2_held3_len(&self) -> usize {
        self.q2_held3.len()
    }

    /// Node 4's stored primary-packet id, if any.
    pub fn node4_copy(&self) -> Option<PacketId> {
        self.node4_copy
    }

    /// Ids minted so far `(primary, secondary)`.
    pub fn minted(&self) -> (PacketId, PacketId) {
        (self.next_primary_id, self.next_secondary_id)
    }

    fn mint_secondary(&mut self, slot: u64) -> Packet {
        if self.secondary_head.is_none() {
            self.next_secondary_id += 1;
            self.secondary_head = Some(Packet {
                id: self.next_secondary_id,
                session: Session::Secondary,
                arrival_slot: slot,
                head_slot: None,
            });
        }
        *self.secondary_head.as_ref().expect("just minted")
    }
}

/// Picks the slot's transmission under `alg`, stamping service starts and
/// minting the secondary head on demand.
///
/// `mix_q` and `coin_rng` are consulted only by `CodedMixing`, and only when
/// the unseen relay buffer is occupied; other protocols never touch the coin
/// stream.
pub fn schedule<R: Rng + ?Sized>(
    alg: Algorithm,
    state: &mut SystemState,
    slot: u64,
    mix_q: f64,
    coin_rng: &mut R,
) -> SlotDecision {
    match alg {
        Algorithm::NoCooperation => {
            if let Some(head) = state.q1.front_mut() {
                head.head_slot.get_or_insert(slot);
                plain_decision(SlotKind::PrimaryHead, head.session, head.id)
            } else {
                secondary_fresh(state, slot)
            }
        }
        Algorithm::Forwarding => {
            if let Some(p) = &state.relay_fwd {
                plain_decision(SlotKind::RelayForward, p.session, p.id)
            } else if let Some(head) = state.q1.front_mut() {
                head.head_slot.get_or_insert(slot);
                plain_decision(SlotKind::PrimaryHead, head.session, head.id)
            } else {
                secondary_fresh(state, slot)
            }
        }
        Algorithm::Coding => {
            if let Some(p) = &state.relay_unseen {
                plain_decision(SlotKind::RelayUnseen, p.session, p.id)
            } else {
                schedule_seen_or_fresh(state, slot)
            }
        }
        Algorithm::CodedMixing => {
            if let Some(p) = &state.relay_unseen {
                let node1_turn = coin_rng.gen::<f64>() < mix_q;
                debug_assert_eq!(
                    state.q1.front().map(|h| h.id),
                    Some(p.id),
                    "mirrored packet must be the q1 head"
                );
                let kind = if node1_turn {
                    SlotKind::PrimaryMirrored
                } else {
                    SlotKind::RelayMirrored
                };
                plain_decision(kind, p.session, p.id)
            } else {
                schedule_seen_or_fresh(state, slot)
            }
        }
    }
}

/// Shared tail of the coding schedules: seen-relay service, then the primary
/// head, then fresh secondary traffic.
fn schedule_seen_or_fresh(state: &mut SystemState, slot: u64) -> SlotDecision {
    if let Some(p) = &state.relay_seen {
        if let Some(partner) = state.q2_held3.front() {
            SlotDecision {
                kind: SlotKind::RelaySeenCoded,
                payload: Payload::Coded {
                    primary: p.id,
                    secondary: partner.id,
                },
            }
        } else {
            plain_decision(SlotKind::RelaySeenPlain, p.session, p.id)
        }
    } else if let Some(head) = state.q1.front_mut() {
        head.head_slot.get_or_insert(slot);
        plain_decision(SlotKind::PrimaryHead, head.session, head.id)
    } else {
        secondary_fresh(state, slot)
    }
}

fn secondary_fresh(state: &mut SystemState, slot: u64) -> SlotDecision {
    state.mint_secondary(slot);
    let head = state.secondary_head.as_mut().expect("minted above");
    head.head_slot.get_or_insert(slot);
    plain_decision(SlotKind::SecondaryFresh, head.session, head.id)
}

fn plain_decision(kind: SlotKind, session: Session, id: PacketId) -> SlotDecision {
    SlotDecision {
        kind,
        payload: Payload::Plain { session, id },
    }
}

/// Applies one slot's reception outcome, pushing 0..=2 deliveries into `out`
/// (a coded slot can complete a packet of each session).
///
/// `out` is an out-parameter so the hot loop never allocates; the caller
/// clears it each slot.
pub fn apply_outcome(
    alg: Algorithm,
    state: &mut SystemState,
    decision: &SlotDecision,
    event: &ReceptionEvent,
    slot: u64,
    out: &mut Vec<Delivery>,
) -> Result<(), ProtocolError> {
    if event.transmitter() != decision.transmitter() {
        return Err(ProtocolError::TransmitterMismatch {
            slot,
            got: event.transmitter(),
            want: decision.transmitter(),
        });
    }
    let rcv2 = event.received_by(2);
    let rcv3 = event.received_by(3);
    let rcv4 = event.received_by(4);

    match (alg, decision.kind) {
        (Algorithm::NoCooperation, SlotKind::PrimaryHead) => {
            if rcv3 {
                let p = pop_head(state, slot, decision)?;
                out.push(delivered(p, slot));
            }
        }
        (Algorithm::Forwarding, SlotKind::PrimaryHead) => {
            if rcv3 {
                let p = pop_head(state, slot, decision)?;
                out.push(delivered(p, slot));
            } else if rcv2 {
                let p = pop_head(state, slot, decision)?;
                state.relay_fwd = Some(p);
            }
        }
        (Algorithm::Forwarding, SlotKind::RelayForward) => {
            if rcv3 {
                let p = take_buffer(&mut state.relay_fwd, slot, decision)?;
                out.push(delivered(p, slot));
            }
        }
        (Algorithm::Coding | Algorithm::CodedMixing, SlotKind::PrimaryHead) => {
            apply_coding_primary_head(alg, state, decision, slot, rcv2, rcv3, rcv4, out)?;
        }
        (Algorithm::Coding, SlotKind::RelayUnseen) => {
            if rcv3 {
                let p = take_buffer(&mut state.relay_unseen, slot, decision)?;
                out.push(delivered(p, slot));
            } else if rcv4 {
                let p = take_buffer(&mut state.relay_unseen, slot, decision)?;
                state.node4_copy = Some(p.id);
                state.relay_seen = Some(p);
            }
        }
        (Algorithm::CodedMixing, SlotKind::PrimaryMirrored | SlotKind::RelayMirrored) => {
            // Node 2's reception is irrelevant: it already holds the packet.
            if rcv3 {
                let p = take_buffer(&mut state.relay_unseen, slot, decision)?;
                let head = pop_head_expecting(state, p.id, slot, decision)?;
                debug_assert_eq!(head.head_slot, p.head_slot);
                out.push(delivered(p, slot));
            } else if rcv4 {
                let p = take_buffer(&mut state.relay_unseen, slot, decision)?;
                pop_head_expecting(state, p.id, slot, decision)?;
                state.node4_copy = Some(p.id);
                state.relay_seen = Some(p);
            }
        }
        (Algorithm::Coding | Algorithm::CodedMixing, SlotKind::RelaySeenPlain) => {
            if rcv3 {
                let p = take_buffer(&mut state.relay_seen, slot, decision)?;
                state.node4_copy = None;
                out.push(delivered(p, slot));
            }
        }
        (Algorithm::Coding | Algorithm::CodedMixing, SlotKind::RelaySeenCoded) => {
            apply_coded(state, decision, slot, rcv3, rcv4, out)?;
        }
        (_, SlotKind::SecondaryFresh) => {
            if rcv4 {
                let p = take_buffer(&mut state.secondary_head, slot, decision)?;
                out.push(delivered(p, slot));
            } else if alg.uses_coding() && rcv3 {
                // Node 3 keeps the overheard secondary packet as future
                // coding side information; node 2 requeues it accordingly.
                let p = take_buffer(&mut state.secondary_head, slot, decision)?;
                state.q2_held3.push_back(p);
                state.node3_held.push_back(p.id);
            }
        }
        (alg, kind) => {
            return Err(ProtocolError::InvariantViolated {
                slot,
                check: "schedule_kind",
                detail: format!("protocol {alg} cannot produce slot kind {kind:?}"),
            });
        }
    }
    Ok(())
}

/// Node-1 head transmission under the coding protocols: classify the
/// reception pattern, accounting for whether node 4 already holds the packet.
#[allow(clippy::too_many_arguments)]
fn apply_coding_primary_head(
    alg: Algorithm,
    state: &mut SystemState,
    decision: &SlotDecision,
    slot: u64,
    rcv2: bool,
    rcv3: bool,
    rcv4: bool,
    out: &mut Vec<Delivery>,
) -> Result<(), ProtocolError> {
    let head_id = match state.q1.front() {
        Some(p) => p.id,
        None => {
            return Err(corrupt(slot, decision, "q1 empty on head transmission"));
        }
    };
    if let Some(copy) = state.node4_copy {
        if copy != head_id {
            return Err(ProtocolError::InvariantViolated {
                slot,
                check: "node4_copy_tracks_head",
                detail: format!("node 4 holds {copy} but head is {head_id}"),
            });
        }
    }
    let seen4 = state.node4_copy.is_some();

    if rcv3 {
        // Delivered; node 4 discards any stored copy on the ACK.
        let p = pop_head(state, slot, decision)?;
        state.node4_copy = None;
        out.push(delivered(p, slot));
    } else if rcv2 && (rcv4 || seen4) {
        // Node 2 can retransmit and node 4 holds it: seen-relay service.
        let p = pop_head(state, slot, decision)?;
        state.node4_copy = Some(p.id);
        state.relay_seen = Some(p);
    } else if rcv2 {
        // Node 2 holds it, node 4 does not: unseen-relay service. Under
        // CodedMixing node 1 stays responsible too, so the packet remains at
        // the head of q1 (mirrored); under Coding node 2 takes over alone.
        match alg {
            Algorithm::Coding => {
                let p = pop_head(state, slot, decision)?;
                state.relay_unseen = Some(p);
            }
            Algorithm::CodedMixing => {
                let p = *state.q1.front().expect("head checked above");
                state.relay_unseen = Some(p);
            }
            _ => unreachable!("coding head handler is only called for coding protocols"),
        }
    } else if rcv4 && !seen4 {
        // Only the side listener caught it: remember the copy at node 4.
        state.node4_copy = Some(head_id);
    }
    Ok(())
}

/// Coded retransmission: node 3 may decode the primary half, node 4 the
/// secondary half; both may happen in the same slot.
fn apply_coded(
    state: &mut SystemState,
    decision: &SlotDecision,
    slot: u64,
    rcv3: bool,
    rcv4: bool,
    out: &mut Vec<Delivery>,
) -> Result<(), ProtocolError> {
    let (primary_id, secondary_id) = match decision.payload {
        Payload::Coded { primary, secondary } => (primary, secondary),
        Payload::Plain { .. } => {
            return Err(corrupt(slot, decision, "coded slot with plain payload"));
        }
    };
    // Decodability preconditions, checked against both mirrors before any
    // mutation: node 4 must hold the primary packet, node 3 the secondary.
    if state.node4_copy != Some(primary_id) {
        return Err(ProtocolError::InvariantViolated {
            slot,
            check: "coded_decodable_at_node4",
            detail: format!(
                "coded slot pairs primary {primary_id} but node 4 holds {:?}",
                state.node4_copy
            ),
        });
    }
    if state.node3_held.front() != Some(&secondary_id) {
        return Err(ProtocolError::InvariantViolated {
            slot,
            check: "coded_decodable_at_node3",
            detail: format!(
                "coded slot pairs secondary {secondary_id} but node 3 holds {:?}",
                state.node3_held.front()
            ),
        });
    }

    if rcv4 {
        // Node 4 XORs out its stored primary copy and recovers the secondary
        // packet; both sides drop the consumed copy on the ACK.
        let sp = state
            .q2_held3
            .pop_front()
            .ok_or_else(|| corrupt(slot, decision, "q2_held3 empty on coded slot"))?;
        state.node3_held.pop_front();
        if sp.id != secondary_id {
            return Err(corrupt(slot, decision, "coded secondary id mismatch"));
        }
        out.push(delivered(sp, slot));
    }
    if rcv3 {
        // Node 3 XORs out its stored secondary copy and recovers the primary
        // packet: the primary service completes.
        let p = take_buffer(&mut state.relay_seen, slot, decision)?;
        if p.id != primary_id {
            return Err(corrupt(slot, decision, "coded primary id mismatch"));
        }
        state.node4_copy = None;
        out.push(delivered(p, slot));
    }
    Ok(())
}

fn pop_head(
    state: &mut SystemState,
    slot: u64,
    decision: &SlotDecision,
) -> Result<Packet, ProtocolError> {
    state
        .q1
        .pop_front()
        .ok_or_else(|| corrupt(slot, decision, "q1 empty"))
}

fn pop_head_expecting(
    state: &mut SystemState,
    id: PacketId,
    slot: u64,
    decision: &SlotDecision,
) -> Result<Packet, ProtocolError> {
    let head = pop_head(state, slot, decision)?;
    if head.id != id {
        return Err(corrupt(slot, decision, "mirrored head id mismatch"));
    }
    Ok(head)
}

fn take_buffer(
    buffer: &mut Option<Packet>,
    slot: u64,
    decision: &SlotDecision,
) -> Result<Packet, ProtocolError> {
    buffer
        .take()
        .ok_or_else(|| corrupt(slot, decision, "scheduled buffer is empty"))
}

fn corrupt(slot: u64, decision: &SlotDecision, detail: &str) -> ProtocolError {
    ProtocolError::InvariantViolated {
        slot,
        check: "schedule_state_consistency",
        detail: format!("{detail} (kind {:?})", decision.kind),
    }
}

fn delivered(p: Packet, slot: u64) -> Delivery {
    Delivery {
        session: p.session,
        id: p.id,
        slot,
        arrival_slot: p.arrival_slot,
        head_slot: p.head_slot,
    }
}

/// Structural invariants of the protocol state; `deep` additionally walks the
/// queues (O(n)) instead of only checking heads and lengths.
pub fn check_invariants(
    alg: Algorithm,
    state: &SystemState,
    slot: u64,
    deep: bool,
) -> Result<(), ProtocolError> {
    let fail = |check: &'static str, detail: String| {
        Err(ProtocolError::InvariantViolated {
            slot,
            check,
            detail,
        })
    };

    // Buffers foreign to the protocol must stay empty.
    if alg != Algorithm::Forwarding && state.relay_fwd.is_some() {
        return fail("foreign_buffer", "relay_fwd used outside Forwarding".into());
    }
    if !alg.uses_coding()
        && (state.relay_unseen.is_some()
            || state.relay_seen.is_some()
            || state.node4_copy.is_some()
            || !state.q2_held3.is_empty())
    {
        return fail(
            "foreign_buffer",
            "coding buffers used by a non-coding protocol".into(),
        );
    }

    // At most one primary packet is in service, hence in at most one relay
    // buffer.
    let occupied = usize::from(state.relay_fwd.is_some())
        + usize::from(state.relay_unseen.is_some())
        + usize::from(state.relay_seen.is_some());
    if occupied > 1 {
        return fail(
            "single_service",
            format!("{occupied} relay buffers occupied"),
        );
    }

    // Node 4 side information: a seen packet must be exactly the buffered or
    // head packet; an unseen buffer excludes any node-4 copy of it.
    if let Some(p) = &state.relay_seen {
        if state.node4_copy != Some(p.id) {
            return fail(
                "seen_implies_copy",
                format!("relay_seen {} but node4 holds {:?}", p.id, state.node4_copy),
            );
        }
    }
    if let Some(copy) = state.node4_copy {
        let at_seen = state.relay_seen.as_ref().map(|p| p.id) == Some(copy);
        let at_head = state.q1.front().map(|p| p.id) == Some(copy);
        if !at_seen && !at_head {
            return fail(
                "copy_tracks_service",
                format!("node4 copy {copy} matches neither relay_seen nor q1 head"),
            );
        }
    }
    if state.relay_unseen.is_some() && state.node4_copy.is_some() {
        return fail(
            "unseen_excludes_copy",
            "node 4 holds a copy while the unseen buffer is occupied".into(),
        );
    }

    // Mixing mirror: the unseen packet must also head q1 under CodedMixing,
    // and must NOT linger in q1 under plain Coding.
    if let Some(p) = &state.relay_unseen {
        let head = state.q1.front().map(|h| h.id);
        match alg {
            Algorithm::CodedMixing if head != Some(p.id) => {
                return fail(
                    "mirror_head",
                    format!("unseen {} not mirrored at q1 head {head:?}", p.id),
                );
            }
            Algorithm::Coding if head == Some(p.id) => {
                return fail(
                    "relay_owns_packet",
                    format!("unseen {} still queued at node 1", p.id),
                );
            }
            _ => {}
        }
    }

    // Node-3 mirror of the stored secondary packets.
    if state.node3_held.len() != state.q2_held3.len() {
        return fail(
            "node3_mirror_len",
            format!(
                "node 3 tracks {} copies, node 2 queues {}",
                state.node3_held.len(),
                state.q2_held3.len()
            ),
        );
    }
    if state.node3_held.front() != state.q2_held3.front().map(|p| &p.id) {
        return fail(
            "node3_mirror_head",
            format!(
                "mirror heads diverge: {:?} vs {:?}",
                state.node3_held.front(),
                state.q2_held3.front().map(|p| p.id)
            ),
        );
    }
    if deep {
        for (i, (copy, packet)) in state.node3_held.iter().zip(&state.q2_held3).enumerate() {
            if *copy != packet.id {
                return fail(
                    "node3_mirror_deep",
                    format!("mirror diverges at position {i}: {copy} vs {}", packet.id),
                );
            }
        }
        let mut prev = 0;
        for p in &state.q1 {
            if p.id <= prev {
                return fail("q1_fifo_order", format!("id {} after {prev}", p.id));
            }
            prev = p.id;
        }
        for p in [&state.relay_fwd, &state.relay_unseen, &state.relay_seen]
            .into_iter()
            .flatten()
        {
            if p.head_slot.is_none() {
                return fail(
                    "relayed_implies_in_service",
                    format!("buffered packet {} was never transmitted", p.id),
                );
            }
        }
    }
    Ok(())
}
