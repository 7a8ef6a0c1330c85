//! What a core needs from the machine around it.

use crate::mesh::Fabric;
use crate::scalar::MathFn;
use crate::{CoreId, Real};

/// A request to the host monitor.
#[derive(Debug, Clone, PartialEq)]
pub enum MonitorCommand {
    Print(String),
    /// Reads one line; the optional prompt is echoed first.
    Input(Option<String>),
    StrCat(Vec<u8>, Vec<u8>),
    Math(MathFn, Vec<Real>),
    FormatReal(Real),
    Fatal(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum MonitorReply {
    Done,
    Text(Vec<u8>),
    Real(Real),
}

/// Access to shared machine state from inside an interpreter.
pub trait CoreServices {
    /// Runs `f` with exclusive access to the postbox fabric.
    fn fabric<R>(&mut self, f: impl FnOnce(&mut Fabric) -> R) -> R;

    /// Issues a monitor command and waits for its reply.
    fn monitor(&mut self, core: CoreId, cmd: MonitorCommand) -> Result<MonitorReply, String>;
}
