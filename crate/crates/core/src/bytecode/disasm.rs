//! Text listing of an image, and the assembler that reads it back.

use std::fmt::Write as _;

use thiserror::Error;

use super::image::{decode_all, string_bytes, DecodeError, Decoded, ProgramImage};
use super::isa::{write_operand, BinaryOp, OperandKind, Opcode, UnaryOp};
use crate::intrinsic::Intrinsic;

/// One line per instruction: offset, mnemonic, operands.
///
/// Variables print as `g<n>` (global slot) or `l<n>` (frame slot), jumps
/// as signed displacements with the absolute target in a trailing comment.
pub fn disassemble(image: &ProgramImage) -> Result<String, DecodeError> {
    let mut out = String::new();
    let _ = writeln!(out, "; globals {} entry {} size {}", image.global_count, image.entry, image.code.len());
    if let Some(sym) = &image.symbols {
        for (name, addr) in &sym.functions {
            let _ = writeln!(out, "; function {name} @{addr}");
        }
        for (i, name) in sym.globals.iter().enumerate() {
            let _ = writeln!(out, "; global g{i} {name}");
        }
    }
    for d in decode_all(&image.code)? {
        let _ = write!(out, "{:06}  {}", d.offset, d.opcode.mnemonic());
        let mut comment = None;
        if d.opcode == Opcode::String {
            let _ = write!(out, " {} {:?}", d.operands[0], String::from_utf8_lossy(&string_bytes(&d)));
        } else {
            for (i, (kind, &v)) in d.kinds().zip(&d.operands).enumerate() {
                out.push(' ');
                match kind {
                    OperandKind::Var => {
                        let gc = image.global_count as u32;
                        let _ = if v < gc { write!(out, "g{v}") } else { write!(out, "l{}", v - gc) };
                    }
                    OperandKind::Op => out.push_str(&op_text(d.opcode, i, v as u8)),
                    OperandKind::Const => {
                        let _ = match d.opcode {
                            Opcode::ConstReal => write!(out, "{:?}", f32::from_bits(v)),
                            Opcode::ConstInt => write!(out, "{}", v as i32),
                            _ => write!(out, "{v}"),
                        };
                    }
                    OperandKind::Addr => {
                        let _ = write!(out, "@{v}");
                    }
                    OperandKind::Jump => {
                        let _ = write!(out, "{:+}", v as u16 as i16);
                        comment = Some(d.jump_target(v));
                    }
                }
            }
        }
        if let Some(t) = comment {
            let _ = write!(out, "  ; -> {t}");
        }
        out.push('\n');
    }
    Ok(out)
}

fn op_text(opcode: Opcode, index: usize, v: u8) -> String {
    let named = match (opcode, index) {
        (Opcode::Binary, 1) => BinaryOp::from_u8(v).map(|o| o.symbol().to_string()),
        (Opcode::Unary, 1) => UnaryOp::from_u8(v).map(|o| o.symbol().to_string()),
        (Opcode::Intrinsic, 1) => Intrinsic::from_code(v).map(|i| i.name().to_string()),
        (Opcode::ConstBool, 1) if v <= 1 => Some(if v == 1 { "True" } else { "False" }.to_string()),
        _ => return v.to_string(),
    };
    named.unwrap_or_else(|| format!("#{v}"))
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {msg}")]
pub struct AsmError {
    pub line: usize,
    pub msg: String,
}

/// Reads a listing produced by [`disassemble`] back into an image.
pub fn assemble(text: &str) -> Result<ProgramImage, AsmError> {
    let mut global_count = None;
    let mut entry = None;
    let mut code = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let err = |msg: String| AsmError { line, msg };
        let trimmed = raw.trim();
        if let Some(header) = trimmed.strip_prefix("; globals ") {
            let parts: Vec<&str> = header.split_whitespace().collect();
            if parts.len() < 3 || parts[1] != "entry" {
                return Err(err("malformed header".into()));
            }
            global_count = Some(parts[0].parse::<u16>().map_err(|e| err(e.to_string()))?);
            entry = Some(parts[2].parse::<u32>().map_err(|e| err(e.to_string()))?);
            continue;
        }
        if trimmed.is_empty() || trimmed.starts_with(';') {
            continue;
        }
        let gc = global_count.ok_or_else(|| err("instruction before the '; globals' header".into()))?;
        let (offset, rest) = trimmed.split_once(char::is_whitespace).ok_or_else(|| err("missing mnemonic".into()))?;
        let offset: usize = offset.parse().map_err(|_| err(format!("bad offset '{offset}'")))?;
        if offset != code.len() {
            return Err(err(format!("offset {offset} does not match position {}", code.len())));
        }
        let rest = rest.trim_start();
        let (mnemonic, args) = rest.split_once(' ').unwrap_or((rest, ""));
        let opcode = Opcode::ALL
            .iter()
            .copied()
            .find(|o| o.mnemonic() == mnemonic)
            .ok_or_else(|| err(format!("unknown mnemonic '{mnemonic}'")))?;
        code.push(opcode as u8);
        if opcode == Opcode::String {
            let (len, lit) = args.trim().split_once(' ').ok_or_else(|| err("STRING needs a length and text".into()))?;
            let len: u32 = len.parse().map_err(|_| err(format!("bad length '{len}'")))?;
            let bytes = unquote(lit.trim()).map_err(err)?.into_bytes();
            if bytes.len() != len as usize {
                return Err(err(format!("length {len} does not match {} text bytes", bytes.len())));
            }
            write_operand(&mut code, OperandKind::Const, len);
            let mut padded = bytes;
            padded.resize((len as usize).div_ceil(4) * 4, 0);
            code.extend_from_slice(&padded);
            continue;
        }
        let args = args.split(';').next().unwrap_or("");
        let words: Vec<&str> = args.split_whitespace().collect();
        let fixed = opcode.operands();
        let mut values = Vec::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            let kind = match fixed.get(i) {
                Some(k) => *k,
                None => opcode.tail().map(|t| t.kind).ok_or_else(|| err(format!("too many operands for {mnemonic}")))?,
            };
            let v = parse_operand(opcode, i, kind, w, gc).ok_or_else(|| err(format!("bad operand '{w}'")))?;
            values.push(v);
            write_operand(&mut code, kind, v);
        }
        let expected = fixed.len()
            + opcode.tail().map(|t| values.get(t.count_from).map(|c| t.len(*c)).unwrap_or(0)).unwrap_or(0);
        if values.len() != expected {
            return Err(err(format!("{mnemonic} expects {expected} operands, found {}", values.len())));
        }
    }
    let global_count = global_count.ok_or(AsmError { line: 0, msg: "missing '; globals' header".into() })?;
    Ok(ProgramImage { global_count, code, entry: entry.unwrap_or(0), symbols: None })
}

fn parse_operand(opcode: Opcode, index: usize, kind: OperandKind, w: &str, gc: u16) -> Option<u32> {
    match kind {
        OperandKind::Var => {
            if let Some(g) = w.strip_prefix('g') {
                g.parse::<u16>().ok().filter(|g| *g < gc).map(u32::from)
            } else {
                let l: u32 = w.strip_prefix('l')?.parse().ok()?;
                let id = l + gc as u32;
                (id <= u16::MAX as u32).then_some(id)
            }
        }
        OperandKind::Op => {
            if let Some(raw) = w.strip_prefix('#') {
                return raw.parse::<u8>().ok().map(u32::from);
            }
            let v = match (opcode, index) {
                (Opcode::Binary, 1) => BinaryOp::from_symbol(w)? as u8,
                (Opcode::Unary, 1) => UnaryOp::from_symbol(w)? as u8,
                (Opcode::Intrinsic, 1) => Intrinsic::by_name(w)?.code(),
                (Opcode::ConstBool, 1) => match w {
                    "True" => 1,
                    "False" => 0,
                    _ => w.parse().ok()?,
                },
                _ => w.parse().ok()?,
            };
            Some(v as u32)
        }
        OperandKind::Const => match opcode {
            Opcode::ConstReal => w.parse::<f32>().ok().map(f32::to_bits),
            Opcode::ConstInt => w.parse::<i32>().ok().map(|v| v as u32),
            _ => w.parse().ok(),
        },
        OperandKind::Addr => w.strip_prefix('@')?.parse().ok(),
        OperandKind::Jump => w.parse::<i16>().ok().map(|v| v as u16 as u32),
    }
}

/// Inverse of `{:?}` formatting for strings.
fn unquote(lit: &str) -> Result<String, String> {
    let inner = lit
        .strip_prefix('"')
        .and_then(|s| s.strip_suffix('"'))
        .ok_or_else(|| format!("expected a quoted string, found {lit}"))?;
    let mut out = String::new();
    let mut chars = inner.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('n') => out.push('\n'),
            Some('t') => out.push('\t'),
            Some('r') => out.push('\r'),
            Some('0') => out.push('\0'),
            Some(c @ ('\\' | '"' | '\'')) => out.push(c),
            Some('u') => {
                let rest: String = chars.by_ref().take_while(|c| *c != '}').collect();
                let hex = rest.strip_prefix('{').ok_or("bad \\u escape")?;
                let cp = u32::from_str_radix(hex, 16).map_err(|e| e.to_string())?;
                out.push(char::from_u32(cp).ok_or("bad code point")?);
            }
            other => return Err(format!("unknown escape {other:?}")),
        }
    }
    Ok(out)
}

/// Instructions of an image as decoded records; convenience for tests.
pub fn instructions(image: &ProgramImage) -> Result<Vec<Decoded>, DecodeError> {
    decode_all(&image.code)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compile_source;

    #[test]
    fn round_trip_with_every_operand_kind() {
        let src = "from parallel import *\ndef f(a, b=2):\n  if not a:\n    return -a\n  return a ** b\nx=[1, 2.5, True, none, \"q\\\"\\n\"]\nfor i in range(3):\n  x[0] += f(i) // 2\nprint x, coreid() is not none\n";
        let img = compile_source(src).unwrap();
        let text = disassemble(&img).unwrap();
        let back = assemble(&text).unwrap();
        assert_eq!(back.code, img.code);
        assert_eq!(back.global_count, img.global_count);
        assert_eq!(back.entry, img.entry);
    }

    #[test]
    fn jump_comment_names_absolute_target() {
        let img = compile_source("i=0\nwhile i<3:\n  i+=1\n").unwrap();
        let text = disassemble(&img).unwrap();
        let line = text.lines().find(|l| l.contains("JUMP_IF_FALSE")).unwrap();
        assert!(line.contains("; -> "), "{line}");
    }

    #[test]
    fn assembler_rejects_garbage() {
        assert!(assemble("000000  STOP\n").is_err());
        assert!(assemble("; globals 0 entry 0 size 1\n000000  NOPE\n").is_err());
        assert!(assemble("; globals 0 entry 0 size 1\n000000  MOVE l0\n").is_err());
    }
}
