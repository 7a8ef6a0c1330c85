//! Per-core memory map.
//!
//! ```text
//! 0x0000 +------------------------+
//!        | interpreter + runtime  | 24576 (fixed charge)
//! 0x6000 +------------------------+
//!        | globals (4 B per slot) |
//!        | byte code              |
//!        | comms (postbox)        | 256
//!        | stack                  | 1024
//!        | heap                   | remainder
//! 0x8000 +------------------------+
//! ```
//!
//! Code and data can each be placed in shared memory instead, in which
//! case they take no room here and every access to them is slow.

use thiserror::Error;

pub const CORE_MEMORY: usize = 32 * 1024;
pub const INTERPRETER_BYTES: usize = 24 * 1024;
pub const USER_REGION: usize = CORE_MEMORY - INTERPRETER_BYTES;
pub const COMMS_BYTES: usize = 256;
pub const STACK_BYTES: usize = 1024;
/// Fixed part of a frame: return address, local base, slot count, result slot.
pub const FRAME_HEADER: usize = 16;
pub const SLOT_BYTES: usize = 4;
/// Access cost of one shared-memory access in units of a local access.
pub const SHARED_ACCESS_WEIGHT: u64 = 10;

/// Stack budget of a virtual core, which has host memory behind it.
pub const VIRTUAL_STACK_BYTES: usize = 16 * 1024 * 1024;

pub fn frame_bytes(locals: usize) -> usize {
    FRAME_HEADER + SLOT_BYTES * locals
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Location {
    Local,
    Shared,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Placement {
    pub code_shared: bool,
    pub data_shared: bool,
}

impl Placement {
    pub fn code(&self) -> Location {
        if self.code_shared {
            Location::Shared
        } else {
            Location::Local
        }
    }

    pub fn data(&self) -> Location {
        if self.data_shared {
            Location::Shared
        } else {
            Location::Local
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("image does not fit in core memory: needs {required} bytes of the {available}-byte user region ({over} bytes over)")]
pub struct ImageTooLarge {
    pub required: usize,
    pub available: usize,
    pub over: usize,
}

/// Byte budgets of one core's regions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MemoryMap {
    pub interpreter: usize,
    pub globals: usize,
    pub code: usize,
    pub comms: usize,
    pub stack: usize,
    pub heap: usize,
}

impl MemoryMap {
    /// Budgets for a device core holding `code_bytes` of code and
    /// `global_slots` globals under `placement`.
    pub fn device(code_bytes: usize, global_slots: usize, placement: Placement) -> Result<MemoryMap, ImageTooLarge> {
        let code = if placement.code_shared { 0 } else { code_bytes };
        let globals = if placement.data_shared { 0 } else { SLOT_BYTES * global_slots };
        let required = code + globals + COMMS_BYTES + STACK_BYTES;
        if required > USER_REGION {
            return Err(ImageTooLarge { required, available: USER_REGION, over: required - USER_REGION });
        }
        let heap = if placement.data_shared { 0 } else { USER_REGION - required };
        Ok(MemoryMap { interpreter: INTERPRETER_BYTES, globals, code, comms: COMMS_BYTES, stack: STACK_BYTES, heap })
    }

    /// Budgets for a virtual core: no practical limit.
    pub fn virtual_core(code_bytes: usize, global_slots: usize) -> MemoryMap {
        MemoryMap {
            interpreter: 0,
            globals: SLOT_BYTES * global_slots,
            code: code_bytes,
            comms: COMMS_BYTES,
            stack: VIRTUAL_STACK_BYTES,
            heap: usize::MAX / 2,
        }
    }

    /// Sum of every region; 32768 for a device core with local data.
    pub fn total(&self) -> usize {
        self.interpreter + self.globals + self.code + self.comms + self.stack + self.heap
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regions_sum_to_32k() {
        let m = MemoryMap::device(1000, 10, Placement::default()).unwrap();
        assert_eq!(m.total(), CORE_MEMORY);
        assert_eq!(m.heap, 8192 - 1000 - 40 - 256 - 1024);
    }

    #[test]
    fn oversized_code_is_rejected_with_exact_overage() {
        let e = MemoryMap::device(9000, 1, Placement::default()).unwrap_err();
        assert_eq!(e, ImageTooLarge { required: 9000 + 4 + 256 + 1024, available: 8192, over: 2092 });
        // the same image is fine with code in shared memory
        assert!(MemoryMap::device(9000, 1, Placement { code_shared: true, data_shared: false }).is_ok());
    }
}
