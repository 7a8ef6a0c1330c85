use thiserror::Error;

use super::isa::{OperandKind, Opcode};

/// Magic prefix of a serialized image.
pub const IMAGE_MAGIC: [u8; 8] = *b"EPYCODE\0";
pub const IMAGE_VERSION: u8 = 1;
const HEADER_LEN: usize = 8 + 1 + 2 + 4;

/// Name tables kept alongside an image for diagnostics; never serialized.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Symbols {
    /// Global names indexed by slot.
    pub globals: Vec<String>,
    /// Function names with the offset of their `FUNCTION` header.
    pub functions: Vec<(String, u32)>,
}

/// A compiled program: the code bytes plus what the loader needs to place it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProgramImage {
    /// Number of 4-byte global slots, including the top level's temporaries.
    pub global_count: u16,
    pub code: Vec<u8>,
    /// Offset of the first top-level instruction.
    pub entry: u32,
    pub symbols: Option<Symbols>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("truncated image: instruction at offset {offset} needs {needed} bytes, {available} available")]
    Truncated { offset: u32, needed: usize, available: usize },
    #[error("unknown opcode 0x{byte:02x} at offset {offset}")]
    UnknownOpcode { offset: u32, byte: u8 },
    #[error("bad image header: {0}")]
    Header(String),
}

/// One instruction decoded with the declared operand widths.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decoded {
    pub offset: u32,
    pub opcode: Opcode,
    /// Operands as raw unsigned values, fixed operands first then the tail.
    pub operands: Vec<u32>,
    pub len: usize,
}

impl Decoded {
    pub fn kinds(&self) -> impl Iterator<Item = OperandKind> + '_ {
        let fixed = self.opcode.operands();
        let tail = self.opcode.tail().map(|t| t.kind);
        (0..self.operands.len()).map(move |i| fixed.get(i).copied().unwrap_or_else(|| tail.unwrap()))
    }

    /// Absolute target of a relative jump operand.
    pub fn jump_target(&self, rel: u32) -> i64 {
        self.offset as i64 + self.len as i64 + rel as u16 as i16 as i64
    }
}

fn read(code: &[u8], at: usize, width: usize) -> u32 {
    match width {
        1 => code[at] as u32,
        2 => u16::from_le_bytes([code[at], code[at + 1]]) as u32,
        _ => u32::from_le_bytes([code[at], code[at + 1], code[at + 2], code[at + 3]]),
    }
}

/// Decodes the instruction starting at `offset`.
pub fn decode_at(code: &[u8], offset: usize) -> Result<Decoded, DecodeError> {
    let truncated = |needed: usize| DecodeError::Truncated {
        offset: offset as u32,
        needed,
        available: code.len().saturating_sub(offset),
    };
    let byte = *code.get(offset).ok_or_else(|| truncated(1))?;
    let opcode = Opcode::from_u8(byte).ok_or(DecodeError::UnknownOpcode { offset: offset as u32, byte })?;
    let mut at = offset + 1;
    let mut operands = Vec::with_capacity(opcode.operands().len());
    for kind in opcode.operands() {
        if at + kind.width() > code.len() {
            return Err(truncated(at + kind.width() - offset));
        }
        operands.push(read(code, at, kind.width()));
        at += kind.width();
    }
    if let Some(tail) = opcode.tail() {
        let n = tail.len(operands[tail.count_from]);
        let need = n * tail.kind.width();
        if at + need > code.len() {
            return Err(truncated(at + need - offset));
        }
        for _ in 0..n {
            operands.push(read(code, at, tail.kind.width()));
            at += tail.kind.width();
        }
    }
    Ok(Decoded { offset: offset as u32, opcode, operands, len: at - offset })
}

/// Decodes a whole code region front to back.
pub fn decode_all(code: &[u8]) -> Result<Vec<Decoded>, DecodeError> {
    let mut out = Vec::new();
    let mut at = 0;
    while at < code.len() {
        let d = decode_at(code, at)?;
        at += d.len;
        out.push(d);
    }
    Ok(out)
}

/// Bytes of a `STRING` instruction's payload words, without padding.
pub fn string_bytes(d: &Decoded) -> Vec<u8> {
    let len = d.operands[0] as usize;
    let mut bytes: Vec<u8> = d.operands[1..].iter().flat_map(|w| w.to_le_bytes()).collect();
    bytes.truncate(len);
    bytes
}

impl ProgramImage {
    /// Bytes the loader places in core memory for code plus globals.
    pub fn footprint(&self) -> usize {
        self.code.len() + 4 * self.global_count as usize
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.code.len());
        out.extend_from_slice(&IMAGE_MAGIC);
        out.push(IMAGE_VERSION);
        out.extend_from_slice(&self.global_count.to_le_bytes());
        out.extend_from_slice(&self.entry.to_le_bytes());
        out.extend_from_slice(&self.code);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<ProgramImage, DecodeError> {
        if bytes.len() < HEADER_LEN {
            return Err(DecodeError::Header(format!("{} bytes is shorter than the {HEADER_LEN}-byte header", bytes.len())));
        }
        if bytes[..8] != IMAGE_MAGIC {
            return Err(DecodeError::Header("bad magic".into()));
        }
        if bytes[8] != IMAGE_VERSION {
            return Err(DecodeError::Header(format!("unsupported version {}", bytes[8])));
        }
        let global_count = u16::from_le_bytes([bytes[9], bytes[10]]);
        let entry = u32::from_le_bytes([bytes[11], bytes[12], bytes[13], bytes[14]]);
        let code = bytes[HEADER_LEN..].to_vec();
        if entry as usize >= code.len() {
            return Err(DecodeError::Header(format!("entry offset {entry} outside {}-byte code", code.len())));
        }
        Ok(ProgramImage { global_count, code, entry, symbols: None })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_round_trip() {
        let img = ProgramImage { global_count: 3, code: vec![0x14, 0, 0, 0, 0, 0, 0, 0, 0, 0], entry: 0, symbols: None };
        let bytes = img.to_bytes();
        assert_eq!(&bytes[..8], b"EPYCODE\0");
        assert_eq!(bytes.len(), 15 + 10);
        assert_eq!(ProgramImage::from_bytes(&bytes).unwrap(), img);
        assert!(matches!(ProgramImage::from_bytes(&bytes[..10]), Err(DecodeError::Header(_))));
    }

    #[test]
    fn truncated_operand_reports_offset() {
        // MOVE wants 4 operand bytes
        let code = [0x00, 0x01, 0x02, 0x00, 0x03];
        let err = decode_all(&code).unwrap_err();
        assert_eq!(err, DecodeError::Truncated { offset: 1, needed: 5, available: 4 });
        assert!(err.to_string().contains("offset 1"));
    }

    #[test]
    fn unknown_opcode() {
        assert_eq!(decode_all(&[0x00, 0x7f]).unwrap_err(), DecodeError::UnknownOpcode { offset: 1, byte: 0x7f });
    }
}
