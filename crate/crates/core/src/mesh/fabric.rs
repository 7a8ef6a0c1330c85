use std::collections::BTreeMap;

use serde::Serialize;

use super::MeshError;
use crate::CoreId;

/// Bytes of postbox memory owned by each core.
pub const POSTBOX_BYTES: usize = 256;
/// tag, length, version, ack.
pub const SLOT_HEADER: usize = 4;
/// Largest participant count whose slots still carry a 4-byte word.
pub const MAX_PARTICIPANTS: usize = POSTBOX_BYTES / (SLOT_HEADER + 4) + 1;

pub(crate) mod tag {
    pub const LIST_HEAD: u8 = 5;
    pub const STR_HEAD: u8 = 6;
    pub const DATA: u8 = 7;
    pub const REJECT: u8 = 0x3f;
    /// Set on chunks that belong to a collective.
    pub const COLLECTIVE: u8 = 0x40;
}

/// Which call a message was sent on behalf of.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OpKind {
    Send,
    SendRecv,
    Reduce,
    Bcast,
}

impl OpKind {
    pub const ALL: [OpKind; 4] = [OpKind::Send, OpKind::SendRecv, OpKind::Reduce, OpKind::Bcast];

    pub fn name(self) -> &'static str {
        match self {
            OpKind::Send => "send",
            OpKind::SendRecv => "sendrecv",
            OpKind::Reduce => "reduce",
            OpKind::Bcast => "bcast",
        }
    }
}

/// One line of the message trace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TraceRecord {
    pub src: CoreId,
    pub dst: CoreId,
    #[serde(rename = "type")]
    pub kind: &'static str,
    pub bytes: usize,
    /// Lamport time of the send at the source.
    pub time: u64,
    pub op: OpKind,
}

/// Decoded header of one postbox slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SlotHeader {
    pub tag: u8,
    pub len: u8,
    pub version: u8,
    pub ack: u8,
}

impl SlotHeader {
    pub fn fresh(&self) -> bool {
        self.version != self.ack
    }
}

/// The postbox memory of every participant plus message bookkeeping.
///
/// Core `r`'s 256 bytes are split into one slot per peer; the slot written
/// by sender `s` sits at index `s` (or `s - 1` when `s > r`). A slot is
/// fresh while its version differs from its ack; the receiver consumes it
/// by copying the version into the ack.
#[derive(Debug)]
pub struct Fabric {
    ids: Vec<CoreId>,
    slot_size: usize,
    memory: Vec<u8>,
    stamps: Vec<u64>,
    clocks: Vec<u64>,
    tracing: bool,
    trace: Vec<TraceRecord>,
    counts: BTreeMap<OpKind, u64>,
    sent: Vec<BTreeMap<OpKind, u64>>,
    epoch: u64,
}

impl Fabric {
    /// A fabric for participants with the given program-visible ids, in rank order.
    pub fn new(ids: Vec<CoreId>) -> Result<Fabric, MeshError> {
        let n = ids.len();
        if n == 0 || n > MAX_PARTICIPANTS {
            return Err(MeshError::TooManyParticipants { count: n, max: MAX_PARTICIPANTS });
        }
        let peers = (n - 1).max(1);
        let slot_size = POSTBOX_BYTES / peers;
        Ok(Fabric {
            slot_size,
            memory: vec![0; n * POSTBOX_BYTES],
            stamps: vec![0; n * peers],
            clocks: vec![0; n],
            tracing: false,
            trace: Vec::new(),
            counts: BTreeMap::new(),
            sent: vec![BTreeMap::new(); n],
            epoch: 0,
            ids,
        })
    }

    pub fn set_tracing(&mut self, on: bool) {
        self.tracing = on;
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn id_of(&self, rank: usize) -> CoreId {
        self.ids[rank]
    }

    pub fn rank_of(&self, id: CoreId) -> Option<usize> {
        self.ids.iter().position(|&i| i == id)
    }

    pub fn slot_size(&self) -> usize {
        self.slot_size
    }

    /// Payload bytes available per chunk.
    pub fn capacity(&self) -> usize {
        self.slot_size - SLOT_HEADER
    }

    /// Incremented on every change to postbox memory.
    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    /// The raw 256 bytes of `rank`'s postbox.
    pub fn postbox(&self, rank: usize) -> &[u8] {
        &self.memory[rank * POSTBOX_BYTES..(rank + 1) * POSTBOX_BYTES]
    }

    fn slot_index(&self, receiver: usize, sender: usize) -> usize {
        debug_assert_ne!(receiver, sender);
        let peer = if sender < receiver { sender } else { sender - 1 };
        receiver * (self.len() - 1).max(1) + peer
    }

    fn slot_offset(&self, receiver: usize, sender: usize) -> usize {
        let peer = if sender < receiver { sender } else { sender - 1 };
        receiver * POSTBOX_BYTES + peer * self.slot_size
    }

    pub fn header(&self, receiver: usize, sender: usize) -> SlotHeader {
        let o = self.slot_offset(receiver, sender);
        let m = &self.memory[o..o + SLOT_HEADER];
        SlotHeader { tag: m[0], len: m[1], version: m[2], ack: m[3] }
    }

    /// Writes one chunk into `to`'s slot for `from` if the previous chunk
    /// has been consumed. Payload goes in before the version moves.
    pub(crate) fn try_write(&mut self, from: usize, to: usize, tag: u8, payload: &[u8], stamp: u64) -> bool {
        debug_assert!(payload.len() <= self.capacity());
        let h = self.header(to, from);
        if h.fresh() {
            return false;
        }
        let o = self.slot_offset(to, from);
        self.memory[o + SLOT_HEADER..o + SLOT_HEADER + payload.len()].copy_from_slice(payload);
        self.memory[o] = tag;
        self.memory[o + 1] = payload.len() as u8;
        let si = self.slot_index(to, from);
        self.stamps[si] = stamp;
        self.memory[o + 2] = h.version.wrapping_add(1);
        self.epoch += 1;
        true
    }

    /// Consumes a fresh chunk from `from` whose tag satisfies `accept`.
    pub(crate) fn try_take(&mut self, me: usize, from: usize, accept: impl Fn(u8) -> bool) -> Option<(u8, Vec<u8>, u64)> {
        let h = self.header(me, from);
        if !h.fresh() || !accept(h.tag) {
            return None;
        }
        let o = self.slot_offset(me, from);
        let payload = self.memory[o + SLOT_HEADER..o + SLOT_HEADER + h.len as usize].to_vec();
        let stamp = self.stamps[self.slot_index(me, from)];
        self.memory[o + 3] = h.version;
        self.epoch += 1;
        Some((h.tag, payload, stamp))
    }

    /// Consumes a fresh chunk while marking it refused, so the sender fails too.
    pub(crate) fn reject(&mut self, me: usize, from: usize) {
        let o = self.slot_offset(me, from);
        self.memory[o] = tag::REJECT;
        self.memory[o + 3] = self.memory[o + 2];
        self.epoch += 1;
    }

    /// State of the chunk `from` last wrote to `to`.
    pub(crate) fn delivery(&self, from: usize, to: usize) -> Delivery {
        let h = self.header(to, from);
        if h.fresh() {
            Delivery::Pending
        } else if h.tag == tag::REJECT {
            Delivery::Rejected
        } else {
            Delivery::Consumed
        }
    }

    /// Starts a message: ticks the sender's clock, counts and traces it.
    pub(crate) fn begin_message(&mut self, from: usize, to: usize, kind: &'static str, bytes: usize, op: OpKind) -> u64 {
        self.clocks[from] += 1;
        let time = self.clocks[from];
        *self.counts.entry(op).or_default() += 1;
        *self.sent[from].entry(op).or_default() += 1;
        if self.tracing {
            self.trace.push(TraceRecord { src: self.ids[from], dst: self.ids[to], kind, bytes, time, op });
        }
        time
    }

    pub(crate) fn observe(&mut self, me: usize, stamp: u64) {
        self.clocks[me] = self.clocks[me].max(stamp) + 1;
    }

    pub fn clock(&self, rank: usize) -> u64 {
        self.clocks[rank]
    }

    pub fn trace(&self) -> &[TraceRecord] {
        &self.trace
    }

    pub fn take_trace(&mut self) -> Vec<TraceRecord> {
        std::mem::take(&mut self.trace)
    }

    /// Messages started, per operation kind.
    pub fn counts(&self) -> &BTreeMap<OpKind, u64> {
        &self.counts
    }

    pub fn total_messages(&self) -> u64 {
        self.counts.values().sum()
    }

    /// Messages started by `rank`, per operation kind.
    pub fn sent_by(&self, rank: usize) -> &BTreeMap<OpKind, u64> {
        &self.sent[rank]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Delivery {
    Pending,
    Consumed,
    Rejected,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn postbox_is_exactly_256_bytes_per_core() {
        for n in 1..=MAX_PARTICIPANTS {
            let f = Fabric::new((0..n as u16).collect()).unwrap();
            assert_eq!(f.postbox(n - 1).len(), 256);
            let peers = (n - 1).max(1);
            assert!(peers * f.slot_size() <= 256);
            assert!(f.capacity() >= 4);
        }
        assert!(Fabric::new((0..34).collect()).is_err());
    }

    #[test]
    fn version_and_ack() {
        let mut f = Fabric::new(vec![0, 1, 2]).unwrap();
        assert!(!f.header(1, 0).fresh());
        assert!(f.try_write(0, 1, 1, &[7, 0, 0, 0], 1));
        assert!(f.header(1, 0).fresh());
        assert!(!f.try_write(0, 1, 1, &[8, 0, 0, 0], 2), "slot still fresh");
        // other senders' slots are independent
        assert!(!f.header(1, 2).fresh());
        let (t, p, s) = f.try_take(1, 0, |_| true).unwrap();
        assert_eq!((t, p, s), (1, vec![7, 0, 0, 0], 1));
        assert_eq!(f.delivery(0, 1), Delivery::Consumed);
        assert!(f.try_take(1, 0, |_| true).is_none());
    }

    #[test]
    fn version_wraps() {
        let mut f = Fabric::new(vec![0, 1]).unwrap();
        for i in 0..600u32 {
            assert!(f.try_write(0, 1, 1, &i.to_le_bytes(), 0));
            let (_, p, _) = f.try_take(1, 0, |_| true).unwrap();
            assert_eq!(p, i.to_le_bytes());
        }
        assert_eq!(f.header(1, 0).version, (600 % 256) as u8);
    }
}
