//! Functions implemented inside the interpreter rather than in bytecode.

use crate::scalar::MathFn;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Intrinsic {
    CoreId,
    NumCores,
    IsHost,
    IsDevice,
    Send,
    Recv,
    SendRecv,
    Reduce,
    Bcast,
    Str,
    Len,
    Int,
    Float,
    Input,
    RandInt,
    Math(MathFn),
    /// `list.append(v)`; reachable only through method-call syntax.
    Append,
}

const TABLE: &[(Intrinsic, &str, u8, u8)] = &[
    (Intrinsic::CoreId, "coreid", 0, 0),
    (Intrinsic::NumCores, "numcores", 0, 0),
    (Intrinsic::IsHost, "ishost", 0, 0),
    (Intrinsic::IsDevice, "isdevice", 0, 0),
    (Intrinsic::Send, "send", 2, 3),
    (Intrinsic::Recv, "recv", 1, 2),
    (Intrinsic::SendRecv, "sendrecv", 2, 3),
    (Intrinsic::Reduce, "reduce", 2, 2),
    (Intrinsic::Bcast, "bcast", 2, 2),
    (Intrinsic::Str, "str", 1, 1),
    (Intrinsic::Len, "len", 1, 1),
    (Intrinsic::Int, "int", 1, 1),
    (Intrinsic::Float, "float", 1, 1),
    (Intrinsic::Input, "input", 0, 1),
    (Intrinsic::RandInt, "randint", 2, 2),
    (Intrinsic::Math(MathFn::Sqrt), "sqrt", 1, 1),
    (Intrinsic::Math(MathFn::Pow), "pow", 2, 2),
    (Intrinsic::Math(MathFn::Sin), "sin", 1, 1),
    (Intrinsic::Math(MathFn::Cos), "cos", 1, 1),
    (Intrinsic::Math(MathFn::Tan), "tan", 1, 1),
    (Intrinsic::Math(MathFn::Log), "log", 1, 1),
    (Intrinsic::Math(MathFn::Exp), "exp", 1, 1),
    (Intrinsic::Append, "append", 2, 2),
];

/// Names usable without any import.
pub const BUILTINS: &[Intrinsic] = &[Intrinsic::Str, Intrinsic::Len, Intrinsic::Int, Intrinsic::Float, Intrinsic::Input];

impl Intrinsic {
    fn entry(self) -> &'static (Intrinsic, &'static str, u8, u8) {
        TABLE.iter().find(|e| e.0 == self).expect("every intrinsic has a table entry")
    }

    pub fn name(self) -> &'static str {
        self.entry().1
    }

    /// Inclusive (min, max) argument count.
    pub fn arity(self) -> (usize, usize) {
        let e = self.entry();
        (e.2 as usize, e.3 as usize)
    }

    /// One-byte code used in the `INTRINSIC` instruction.
    pub fn code(self) -> u8 {
        TABLE.iter().position(|e| e.0 == self).unwrap() as u8
    }

    pub fn from_code(code: u8) -> Option<Intrinsic> {
        TABLE.get(code as usize).map(|e| e.0)
    }

    pub fn by_name(name: &str) -> Option<Intrinsic> {
        TABLE.iter().find(|e| e.1 == name).map(|e| e.0)
    }

    pub fn builtin(name: &str) -> Option<Intrinsic> {
        BUILTINS.iter().copied().find(|b| b.name() == name)
    }
}
