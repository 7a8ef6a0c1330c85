use crate::mesh::Scalar;
use crate::{Int, Real};

/// Index of an object in a core's heap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Handle(pub(crate) u32);

impl Handle {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// A runtime datum. Strings and lists live in the heap and are referred to
/// by handle, so a `Value` is always 8 bytes and `Copy`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Value {
    #[default]
    None,
    Int(Int),
    Real(Real),
    Bool(bool),
    Str(Handle),
    List(Handle),
}

impl Value {
    pub fn type_name(self) -> &'static str {
        match self {
            Value::None => "none",
            Value::Int(_) => "int",
            Value::Real(_) => "real",
            Value::Bool(_) => "bool",
            Value::Str(_) => "string",
            Value::List(_) => "list",
        }
    }

    /// The value as a message word, if it fits one.
    pub fn scalar(self) -> Option<Scalar> {
        Some(match self {
            Value::None => Scalar::None,
            Value::Int(i) => Scalar::Int(i),
            Value::Real(r) => Scalar::Real(r),
            Value::Bool(b) => Scalar::Bool(b),
            Value::Str(_) | Value::List(_) => return None,
        })
    }
}

impl From<Scalar> for Value {
    fn from(s: Scalar) -> Value {
        match s {
            Scalar::None => Value::None,
            Scalar::Int(i) => Value::Int(i),
            Scalar::Real(r) => Value::Real(r),
            Scalar::Bool(b) => Value::Bool(b),
        }
    }
}
