//! A Python subset for memory-starved many-core coprocessors, running on a
//! software-simulated device.
//!
//! Source text goes through the host-side pipeline ([`frontend`] then
//! [`bytecode`]) into a compact [`bytecode::ProgramImage`]. The [`device`]
//! module boots one [`vm::Interpreter`] per simulated core under a 32KB
//! per-core memory map, services IO through a host monitor, and wires the
//! cores together through the postbox message passing in [`mesh`].
//!
//! ```
//! use epython::{compile_source, device::{Device, DeviceConfig}};
//!
//! let image = compile_source("from parallel import *\nprint coreid()\n").unwrap();
//! let outcome = Device::boot(image, DeviceConfig::deterministic(4, 0)).unwrap().run();
//! assert!(outcome.success());
//! assert_eq!(outcome.transcript_text(), "[0] 0\n[1] 1\n[2] 2\n[3] 3\n");
//! ```

pub mod bytecode;
pub mod device;
pub mod frontend;
pub mod intrinsic;
pub mod mesh;
pub mod scalar;
pub mod vm;

mod error;

pub use error::Error;

/// Integer payload of a runtime value; matches the 4-byte constant width.
pub type Int = i32;

/// Real payload of a runtime value; single precision, matching the 4-byte constant width.
pub type Real = f32;

/// Identifier of a simulated core as seen by programs (`coreid()`).
pub type CoreId = u16;

/// Runs the whole host-side pipeline: tokenize, parse, resolve imports, drop
/// unused functions and compile.
pub fn compile_source(source: &str) -> Result<bytecode::ProgramImage, Error> {
    let module = frontend::parse_source(source)?;
    let module = frontend::resolve_imports(module)?;
    let module = bytecode::eliminate_unused(module);
    Ok(bytecode::compile(&module)?)
}
