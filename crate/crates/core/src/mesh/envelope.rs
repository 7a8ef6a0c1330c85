use std::fmt;

use crate::{Int, Real};

/// A value that fits in one 4-byte postbox word.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scalar {
    Int(Int),
    Real(Real),
    Bool(bool),
    None,
}

impl Scalar {
    pub(crate) fn tag(self) -> u8 {
        match self {
            Scalar::Int(_) => 1,
            Scalar::Real(_) => 2,
            Scalar::Bool(_) => 3,
            Scalar::None => 4,
        }
    }

    pub(crate) fn word(self) -> [u8; 4] {
        match self {
            Scalar::Int(v) => v.to_le_bytes(),
            Scalar::Real(v) => v.to_bits().to_le_bytes(),
            Scalar::Bool(b) => (b as u32).to_le_bytes(),
            Scalar::None => [0; 4],
        }
    }

    pub(crate) fn from_parts(tag: u8, word: [u8; 4]) -> Option<Scalar> {
        Some(match tag {
            1 => Scalar::Int(i32::from_le_bytes(word)),
            2 => Scalar::Real(f32::from_bits(u32::from_le_bytes(word))),
            3 => Scalar::Bool(u32::from_le_bytes(word) != 0),
            4 => Scalar::None,
            _ => return None,
        })
    }

    pub fn type_name(self) -> &'static str {
        match self {
            Scalar::Int(_) => "int",
            Scalar::Real(_) => "real",
            Scalar::Bool(_) => "bool",
            Scalar::None => "none",
        }
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scalar::Int(v) => write!(f, "{v}"),
            Scalar::Real(v) => f.write_str(&crate::scalar::format_real(*v)),
            Scalar::Bool(b) => f.write_str(if *b { "True" } else { "False" }),
            Scalar::None => f.write_str("None"),
        }
    }
}

/// Everything a single message can carry.
#[derive(Debug, Clone, PartialEq)]
pub enum Envelope {
    Scalar(Scalar),
    List(Vec<Scalar>),
    Str(Vec<u8>),
}

impl Envelope {
    /// Element count as seen by a receiver's length argument.
    pub fn count(&self) -> Option<usize> {
        match self {
            Envelope::Scalar(_) => None,
            Envelope::List(v) => Some(v.len()),
            Envelope::Str(s) => Some(s.len()),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Envelope::Scalar(s) => s.type_name(),
            Envelope::List(_) => "list",
            Envelope::Str(_) => "string",
        }
    }

    /// Bytes of payload on the wire, excluding chunk headers.
    pub fn payload_bytes(&self) -> usize {
        match self {
            Envelope::Scalar(_) => 4,
            Envelope::List(v) => 4 + 5 * v.len(),
            Envelope::Str(s) => 4 + s.len(),
        }
    }
}
