use thiserror::Error;

use crate::bytecode::{CompileError, DecodeError};
use crate::device::BootError;
use crate::frontend::FrontendError;

/// Any failure of the host-side pipeline or of booting the device.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Frontend(#[from] FrontendError),
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error(transparent)]
    Boot(#[from] BootError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
