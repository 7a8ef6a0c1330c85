//! Compact bytecode: the instruction set, the compiler that produces it,
//! unused-function elimination and a disassembler.
//!
//! See `docs/bytecode-format.md` in the repository for the full format.

mod compiler;
mod dce;
mod disasm;
mod image;
pub mod isa;

pub use compiler::{compile, CompileError};
pub use dce::eliminate_unused;
pub use disasm::{assemble, disassemble, instructions, AsmError};
pub use image::{decode_all, decode_at, string_bytes, DecodeError, Decoded, ProgramImage, Symbols, IMAGE_MAGIC, IMAGE_VERSION};
