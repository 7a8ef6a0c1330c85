//! The per-core interpreter and its memory model.

mod error;
mod heap;
mod interp;
pub mod memory;
mod ops;
mod program;
mod services;
mod value;

pub use error::VmError;
pub use heap::{list_bytes, str_bytes, Heap, HeapExhausted, HeapObject, ObjectData, ELEMENT_BYTES, OBJECT_HEADER};
pub use interp::{CoreKind, CoreSetup, CoreStats, CoreStatus, Interpreter, RegionUsage, Step};
pub use memory::{frame_bytes, ImageTooLarge, Location, MemoryMap, Placement};
pub use ops::{compare, display, equal, eval_binary, eval_unary, int_arith, truthy};
pub use program::Program;
pub use services::{CoreServices, MonitorCommand, MonitorReply};
pub use value::{Handle, Value};

#[cfg(test)]
mod tests;
