//! The instruction set.
//!
//! Every instruction is a 1-byte command followed by operands of five
//! fixed widths:
//!
//! | operand          | width | encoding                          |
//! |------------------|-------|-----------------------------------|
//! | variable id      | 2     | u16 LE; `id < globals` is global, otherwise local `id - globals` |
//! | operator code    | 1     | u8                                |
//! | constant         | 4     | i32 two's complement or f32 bits, LE |
//! | memory address   | 4     | u32 LE byte offset into the code  |
//! | relative jump    | 2     | i16 LE, relative to the next instruction |
//!
//! Some instructions end in a variable-length tail whose length is given
//! by an earlier operand (argument lists, list displays, string words).

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OperandKind {
    Var,
    Op,
    Const,
    Addr,
    Jump,
}

impl OperandKind {
    pub const fn width(self) -> usize {
        match self {
            OperandKind::Var => 2,
            OperandKind::Op => 1,
            OperandKind::Const => 4,
            OperandKind::Addr => 4,
            OperandKind::Jump => 2,
        }
    }
}

/// Trailing operand run: `ceil(operands[count_from] / per_word)` operands of `kind`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tail {
    pub count_from: usize,
    pub kind: OperandKind,
    pub per_word: u32,
}

impl Tail {
    pub fn len(&self, count: u32) -> usize {
        count.div_ceil(self.per_word) as usize
    }
}

macro_rules! opcodes {
    ($( $name:ident = $code:literal, $mnemonic:literal, [$($kind:ident),*] $(, tail($from:literal, $tkind:ident, $per:literal))? ;)*) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
        #[repr(u8)]
        pub enum Opcode {
            $($name = $code,)*
        }

        impl Opcode {
            pub const ALL: &'static [Opcode] = &[$(Opcode::$name,)*];

            pub fn from_u8(b: u8) -> Option<Opcode> {
                match b {
                    $($code => Some(Opcode::$name),)*
                    _ => None,
                }
            }

            pub fn mnemonic(self) -> &'static str {
                match self {
                    $(Opcode::$name => $mnemonic,)*
                }
            }

            pub fn operands(self) -> &'static [OperandKind] {
                match self {
                    $(Opcode::$name => &[$(OperandKind::$kind),*],)*
                }
            }

            pub fn tail(self) -> Option<Tail> {
                match self {
                    $(Opcode::$name => opcodes!(@tail $($from, $tkind, $per)?),)*
                }
            }
        }
    };
    (@tail) => { None };
    (@tail $from:literal, $tkind:ident, $per:literal) => {
        Some(Tail { count_from: $from, kind: OperandKind::$tkind, per_word: $per })
    };
}

opcodes! {
    Stop = 0x00, "STOP", [];
    Move = 0x01, "MOVE", [Var, Var];
    ConstInt = 0x02, "CONST_INT", [Var, Const];
    ConstReal = 0x03, "CONST_REAL", [Var, Const];
    ConstBool = 0x04, "CONST_BOOL", [Var, Op];
    ConstNone = 0x05, "CONST_NONE", [Var];
    ConstStr = 0x06, "CONST_STR", [Var, Addr];
    Binary = 0x07, "BINARY", [Var, Op, Var, Var];
    Unary = 0x08, "UNARY", [Var, Op, Var];
    Jump = 0x09, "JUMP", [Jump];
    JumpIfFalse = 0x0a, "JUMP_IF_FALSE", [Var, Jump];
    JumpIfTrue = 0x0b, "JUMP_IF_TRUE", [Var, Jump];
    Index = 0x0c, "INDEX", [Var, Var, Var];
    StoreIndex = 0x0d, "STORE_INDEX", [Var, Var, Var];
    MakeList = 0x0e, "MAKE_LIST", [Var, Const], tail(1, Var, 1);
    Call = 0x0f, "CALL", [Var, Addr, Op], tail(2, Var, 1);
    Return = 0x10, "RETURN", [Var];
    ReturnNone = 0x11, "RETURN_NONE", [];
    Intrinsic = 0x12, "INTRINSIC", [Var, Op, Op], tail(2, Var, 1);
    Print = 0x13, "PRINT", [Op], tail(0, Var, 1);
    Function = 0x14, "FUNCTION", [Const, Const];
    String = 0x15, "STRING", [Const], tail(0, Const, 4);
}

impl fmt::Display for Opcode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.mnemonic())
    }
}

/// Operator codes carried by `BINARY`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum BinaryOp {
    Add = 0,
    Sub = 1,
    Mul = 2,
    Div = 3,
    FloorDiv = 4,
    Mod = 5,
    Pow = 6,
    Eq = 7,
    Ne = 8,
    Lt = 9,
    Le = 10,
    Gt = 11,
    Ge = 12,
    Is = 13,
    IsNot = 14,
}

impl BinaryOp {
    pub const ALL: [BinaryOp; 15] = [
        BinaryOp::Add,
        BinaryOp::Sub,
        BinaryOp::Mul,
        BinaryOp::Div,
        BinaryOp::FloorDiv,
        BinaryOp::Mod,
        BinaryOp::Pow,
        BinaryOp::Eq,
        BinaryOp::Ne,
        BinaryOp::Lt,
        BinaryOp::Le,
        BinaryOp::Gt,
        BinaryOp::Ge,
        BinaryOp::Is,
        BinaryOp::IsNot,
    ];

    pub fn from_u8(b: u8) -> Option<BinaryOp> {
        Self::ALL.get(b as usize).copied()
    }

    pub fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
            BinaryOp::FloorDiv => "//",
            BinaryOp::Mod => "%",
            BinaryOp::Pow => "**",
            BinaryOp::Eq => "==",
            BinaryOp::Ne => "!=",
            BinaryOp::Lt => "<",
            BinaryOp::Le => "<=",
            BinaryOp::Gt => ">",
            BinaryOp::Ge => ">=",
            BinaryOp::Is => "is",
            BinaryOp::IsNot => "isnot",
        }
    }

    pub fn from_symbol(s: &str) -> Option<BinaryOp> {
        Self::ALL.iter().copied().find(|o| o.symbol() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum UnaryOp {
    Neg = 0,
    Plus = 1,
    Not = 2,
}

impl UnaryOp {
    pub fn from_u8(b: u8) -> Option<UnaryOp> {
        match b {
            0 => Some(UnaryOp::Neg),
            1 => Some(UnaryOp::Plus),
            2 => Some(UnaryOp::Not),
            _ => None,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            UnaryOp::Neg => "-",
            UnaryOp::Plus => "+",
            UnaryOp::Not => "not",
        }
    }

    pub fn from_symbol(s: &str) -> Option<UnaryOp> {
        [UnaryOp::Neg, UnaryOp::Plus, UnaryOp::Not].into_iter().find(|o| o.symbol() == s)
    }
}

/// Serialized size of an instruction given its fixed operands.
pub fn encoded_len(op: Opcode, fixed: &[u32]) -> usize {
    let mut n = 1 + op.operands().iter().map(|k| k.width()).sum::<usize>();
    if let Some(t) = op.tail() {
        n += t.len(fixed[t.count_from]) * t.kind.width();
    }
    n
}

pub(crate) fn write_operand(out: &mut Vec<u8>, kind: OperandKind, value: u32) {
    match kind.width() {
        1 => out.push(value as u8),
        2 => out.extend_from_slice(&(value as u16).to_le_bytes()),
        4 => out.extend_from_slice(&value.to_le_bytes()),
        _ => unreachable!(),
    }
}
