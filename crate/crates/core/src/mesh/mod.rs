//! Postbox message passing between cores: point-to-point send/recv,
//! pairwise exchange and tree-based collectives.

mod envelope;
mod fabric;
mod ops;

use thiserror::Error;

use crate::CoreId;

pub use envelope::{Envelope, Scalar};
pub use fabric::{Fabric, OpKind, SlotHeader, TraceRecord, MAX_PARTICIPANTS, POSTBOX_BYTES, SLOT_HEADER};
pub use ops::{CollectiveOp, CommOp, RecvOp, SendOp};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MeshError {
    #[error("invalid core id {id}")]
    InvalidPeer { id: i64 },
    #[error("core {id} cannot communicate with itself")]
    SelfTarget { id: CoreId },
    #[error("count mismatch with core {peer}: expected {expected} elements, message has {}", got.map_or("a single value".to_string(), |g| g.to_string()))]
    CountMismatch { peer: CoreId, expected: usize, got: Option<usize> },
    #[error("core {peer} refused the message (count mismatch)")]
    Rejected { peer: CoreId },
    #[error("cannot reduce a value of type {kind}")]
    NotReducible { kind: &'static str },
    #[error("integer overflow in reduction")]
    Overflow,
    #[error("message of {count} elements is too large")]
    TooLarge { count: usize },
    #[error("{count} participants: the postbox layout supports 1 to {max}")]
    TooManyParticipants { count: usize, max: usize },
    #[error("protocol error from core {peer}: {msg}")]
    Protocol { peer: CoreId, msg: &'static str },
}
