//! Load-time decoding of an image into a form the interpreter can run
//! without reparsing operand bytes on every step.

use std::collections::HashMap;

use super::error::VmError;
use crate::bytecode::isa::{BinaryOp, Opcode, UnaryOp};
use crate::bytecode::{decode_all, string_bytes, DecodeError, ProgramImage};
use crate::intrinsic::Intrinsic;

pub(crate) type Var = u16;

/// A slice of the shared argument pool.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Args {
    pub start: u32,
    pub len: u32,
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum Inst {
    Stop,
    Move { dst: Var, src: Var },
    Const { dst: Var, value: ConstValue },
    ConstStr { dst: Var, lit: u32 },
    Binary { dst: Var, op: BinaryOp, a: Var, b: Var },
    Unary { dst: Var, op: UnaryOp, a: Var },
    Jump { to: u32 },
    JumpIf { cond: Var, when: bool, to: u32 },
    Index { dst: Var, seq: Var, idx: Var },
    StoreIndex { seq: Var, idx: Var, src: Var },
    MakeList { dst: Var, args: Args },
    Call { dst: Var, func: u32, args: Args },
    Return { src: Var },
    ReturnNone,
    Intrinsic { dst: Var, which: Intrinsic, args: Args },
    Print { args: Args },
    /// Function headers and string pool entries; never reached by control flow.
    Data,
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum ConstValue {
    Int(i32),
    Real(f32),
    Bool(bool),
    None,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Function {
    /// Index of the first body instruction.
    pub body: u32,
    pub params: u32,
    pub locals: u32,
}

/// An image decoded once and shared by every core.
#[derive(Debug)]
pub struct Program {
    pub(crate) insts: Vec<Inst>,
    /// Byte offset of each instruction, for diagnostics.
    pub(crate) offsets: Vec<u32>,
    pub(crate) args: Vec<Var>,
    pub(crate) functions: Vec<Function>,
    pub(crate) literals: Vec<Box<[u8]>>,
    pub(crate) entry: u32,
    pub global_count: u16,
    pub code_bytes: usize,
}

impl Program {
    pub fn load(image: &ProgramImage) -> Result<Program, DecodeError> {
        let decoded = decode_all(&image.code)?;
        let index: HashMap<u32, u32> = decoded.iter().enumerate().map(|(i, d)| (d.offset, i as u32)).collect();
        let bad = |offset: u32, what: &str| DecodeError::Header(format!("instruction at offset {offset}: {what}"));
        let at = |offset: i64, from: u32| -> Result<u32, DecodeError> {
            u32::try_from(offset)
                .ok()
                .and_then(|o| index.get(&o).copied())
                .ok_or_else(|| bad(from, "target is not an instruction boundary"))
        };

        let mut literals = Vec::new();
        let mut literal_at = HashMap::new();
        let mut functions = Vec::new();
        let mut function_at = HashMap::new();
        for (i, d) in decoded.iter().enumerate() {
            match d.opcode {
                Opcode::String => {
                    literal_at.insert(d.offset, literals.len() as u32);
                    literals.push(string_bytes(d).into_boxed_slice());
                }
                Opcode::Function => {
                    function_at.insert(d.offset, functions.len() as u32);
                    functions.push(Function { body: i as u32 + 1, params: d.operands[0], locals: d.operands[1] });
                }
                _ => {}
            }
        }

        let mut args = Vec::new();
        let mut pool = |vars: &[u32]| {
            let start = args.len() as u32;
            args.extend(vars.iter().map(|&v| v as Var));
            Args { start, len: vars.len() as u32 }
        };
        let mut insts = Vec::with_capacity(decoded.len());
        for d in &decoded {
            let o = &d.operands;
            let var = |i: usize| o[i] as Var;
            insts.push(match d.opcode {
                Opcode::Stop => Inst::Stop,
                Opcode::Move => Inst::Move { dst: var(0), src: var(1) },
                Opcode::ConstInt => Inst::Const { dst: var(0), value: ConstValue::Int(o[1] as i32) },
                Opcode::ConstReal => Inst::Const { dst: var(0), value: ConstValue::Real(f32::from_bits(o[1])) },
                Opcode::ConstBool => Inst::Const { dst: var(0), value: ConstValue::Bool(o[1] != 0) },
                Opcode::ConstNone => Inst::Const { dst: var(0), value: ConstValue::None },
                Opcode::ConstStr => Inst::ConstStr {
                    dst: var(0),
                    lit: *literal_at.get(&o[1]).ok_or_else(|| bad(d.offset, "string address is not a STRING entry"))?,
                },
                Opcode::Binary => Inst::Binary {
                    dst: var(0),
                    op: BinaryOp::from_u8(o[1] as u8).ok_or_else(|| bad(d.offset, "unknown binary operator"))?,
                    a: var(2),
                    b: var(3),
                },
                Opcode::Unary => Inst::Unary {
                    dst: var(0),
                    op: UnaryOp::from_u8(o[1] as u8).ok_or_else(|| bad(d.offset, "unknown unary operator"))?,
                    a: var(2),
                },
                Opcode::Jump => Inst::Jump { to: at(d.jump_target(o[0]), d.offset)? },
                Opcode::JumpIfFalse | Opcode::JumpIfTrue => Inst::JumpIf {
                    cond: var(0),
                    when: d.opcode == Opcode::JumpIfTrue,
                    to: at(d.jump_target(o[1]), d.offset)?,
                },
                Opcode::Index => Inst::Index { dst: var(0), seq: var(1), idx: var(2) },
                Opcode::StoreIndex => Inst::StoreIndex { seq: var(0), idx: var(1), src: var(2) },
                Opcode::MakeList => Inst::MakeList { dst: var(0), args: pool(&o[2..]) },
                Opcode::Call => Inst::Call {
                    dst: var(0),
                    func: *function_at.get(&o[1]).ok_or_else(|| bad(d.offset, "call target is not a FUNCTION header"))?,
                    args: pool(&o[3..]),
                },
                Opcode::Return => Inst::Return { src: var(0) },
                Opcode::ReturnNone => Inst::ReturnNone,
                Opcode::Intrinsic => Inst::Intrinsic {
                    dst: var(0),
                    which: Intrinsic::from_code(o[1] as u8).ok_or_else(|| bad(d.offset, "unknown intrinsic"))?,
                    args: pool(&o[3..]),
                },
                Opcode::Print => Inst::Print { args: pool(&o[1..]) },
                Opcode::Function | Opcode::String => Inst::Data,
            });
        }
        let entry = if image.code.is_empty() {
            return Err(DecodeError::Header("empty code region".into()));
        } else {
            at(image.entry as i64, image.entry)?
        };
        Ok(Program {
            offsets: decoded.iter().map(|d| d.offset).collect(),
            insts,
            args,
            functions,
            literals,
            entry,
            global_count: image.global_count,
            code_bytes: image.code.len(),
        })
    }

    pub(crate) fn args(&self, a: Args) -> &[Var] {
        &self.args[a.start as usize..(a.start + a.len) as usize]
    }

    pub(crate) fn offset_of(&self, index: usize) -> u32 {
        self.offsets.get(index).copied().unwrap_or(self.code_bytes as u32)
    }

    /// Largest frame any function needs, in slots.
    pub fn max_locals(&self) -> u32 {
        self.functions.iter().map(|f| f.locals).max().unwrap_or(0)
    }

    pub(crate) fn check_function(&self, f: &Function, argc: usize) -> Result<(), VmError> {
        if argc != f.params as usize || f.params > f.locals {
            return Err(VmError::Corrupt(format!("call passes {argc} arguments to a {}-parameter function", f.params)));
        }
        Ok(())
    }
}
