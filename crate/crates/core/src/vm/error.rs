use thiserror::Error;

use super::heap::HeapExhausted;
use crate::mesh::MeshError;
use crate::scalar::ArithError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VmError {
    #[error(transparent)]
    Arith(#[from] ArithError),
    #[error("unsupported operand types for {op}: {lhs} and {rhs}")]
    TypeMismatch { op: &'static str, lhs: &'static str, rhs: &'static str },
    #[error("bad operand type for unary {op}: {operand}")]
    UnaryType { op: &'static str, operand: &'static str },
    #[error("{what}: expected {expected}, got {got}")]
    ArgType { what: &'static str, expected: &'static str, got: &'static str },
    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: i64, len: usize },
    #[error("{kind} is not indexable")]
    NotIndexable { kind: &'static str },
    #[error("strings are immutable")]
    StrAssign,
    #[error("stack exhausted: recursion too deep ({needed} bytes needed, {budget}-byte stack)")]
    StackExhausted { needed: usize, budget: usize },
    #[error(transparent)]
    Heap(#[from] HeapExhausted),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("unknown reduction operator '{0}'")]
    UnknownReduceOp(String),
    #[error("invalid literal for int(): '{0}'")]
    BadInt(String),
    #[error("could not convert string to float: '{0}'")]
    BadFloat(String),
    #[error("randint range is empty: {lo} > {hi}")]
    EmptyRange { lo: i32, hi: i32 },
    #[error("negative count {0}")]
    NegativeCount(i64),
    #[error("length {given} exceeds the value's {actual} elements")]
    CountTooLarge { given: usize, actual: usize },
    #[error("{kind} cannot be sent: lists may only hold ints, reals, bools and none")]
    NotSendable { kind: &'static str },
    #[error("input: {0}")]
    Input(String),
    #[error("monitor: {0}")]
    Monitor(String),
    #[error("corrupt program: {0}")]
    Corrupt(String),
}
