//! Operator semantics.
//!
//! `int / int` is floor division. Mixed int/real arithmetic promotes to
//! real; bools behave as the ints 0 and 1. Integer results that do not fit
//! in 4 bytes are an error rather than wrapping.

use std::cmp::Ordering;

use super::error::VmError;
use super::heap::Heap;
use super::value::Value;
use crate::bytecode::isa::{BinaryOp, UnaryOp};
use crate::scalar::{format_real, power, real_arith, ArithError, ArithOp};
use crate::{Int, Real};

enum Num {
    Int(Int),
    Real(Real),
}

fn num(v: Value) -> Option<Num> {
    match v {
        Value::Int(i) => Some(Num::Int(i)),
        Value::Bool(b) => Some(Num::Int(b as Int)),
        Value::Real(r) => Some(Num::Real(r)),
        _ => None,
    }
}

fn arith_op(op: BinaryOp) -> Option<ArithOp> {
    Some(match op {
        BinaryOp::Add => ArithOp::Add,
        BinaryOp::Sub => ArithOp::Sub,
        BinaryOp::Mul => ArithOp::Mul,
        BinaryOp::Div => ArithOp::Div,
        BinaryOp::FloorDiv => ArithOp::FloorDiv,
        BinaryOp::Mod => ArithOp::Mod,
        BinaryOp::Pow => ArithOp::Pow,
        _ => return None,
    })
}

/// Integer arithmetic with floor division and Python-style modulo.
pub fn int_arith(op: ArithOp, a: Int, b: Int) -> Result<Value, ArithError> {
    let overflow = ArithError::Overflow;
    Ok(Value::Int(match op {
        ArithOp::Add => a.checked_add(b).ok_or(overflow)?,
        ArithOp::Sub => a.checked_sub(b).ok_or(overflow)?,
        ArithOp::Mul => a.checked_mul(b).ok_or(overflow)?,
        ArithOp::Div | ArithOp::FloorDiv => {
            if b == 0 {
                return Err(ArithError::DivisionByZero);
            }
            let q = a.checked_div(b).ok_or(overflow)?;
            if a % b != 0 && ((a < 0) != (b < 0)) {
                q - 1
            } else {
                q
            }
        }
        ArithOp::Mod => {
            if b == 0 {
                return Err(ArithError::DivisionByZero);
            }
            let r = a.wrapping_rem(b);
            if r != 0 && ((r < 0) != (b < 0)) {
                r + b
            } else {
                r
            }
        }
        ArithOp::Pow => {
            if b < 0 {
                return power(a as Real, b as Real).map(Value::Real);
            }
            a.checked_pow(b as u32).ok_or(overflow)?
        }
    }))
}

fn numeric(op: ArithOp, a: Num, b: Num) -> Result<Value, ArithError> {
    match (a, b) {
        (Num::Int(x), Num::Int(y)) => int_arith(op, x, y),
        (Num::Int(x), Num::Real(y)) => real_arith(op, x as Real, y).map(Value::Real),
        (Num::Real(x), Num::Int(y)) => real_arith(op, x, y as Real).map(Value::Real),
        (Num::Real(x), Num::Real(y)) => real_arith(op, x, y).map(Value::Real),
    }
}

fn repeat_count(n: Value) -> Option<usize> {
    match n {
        Value::Int(i) => Some(i.max(0) as usize),
        Value::Bool(b) => Some(b as usize),
        _ => None,
    }
}

/// Applies a binary operator. String concatenation happens here, on the
/// core; callers that offload it to the monitor intercept `str + str` first.
pub fn eval_binary(op: BinaryOp, a: Value, b: Value, heap: &mut Heap) -> Result<Value, VmError> {
    if let Some(aop) = arith_op(op) {
        if let (Some(x), Some(y)) = (num(a), num(b)) {
            return Ok(numeric(aop, x, y)?);
        }
        return sequence_arith(op, a, b, heap);
    }
    Ok(Value::Bool(match op {
        BinaryOp::Eq => equal(a, b, heap),
        BinaryOp::Ne => !equal(a, b, heap),
        BinaryOp::Is => identical(a, b),
        BinaryOp::IsNot => !identical(a, b),
        BinaryOp::Lt | BinaryOp::Le | BinaryOp::Gt | BinaryOp::Ge => {
            let ord = compare(a, b, heap).ok_or_else(|| mismatch(op, a, b))?;
            match op {
                BinaryOp::Lt => ord == Ordering::Less,
                BinaryOp::Le => ord != Ordering::Greater,
                BinaryOp::Gt => ord == Ordering::Greater,
                _ => ord != Ordering::Less,
            }
        }
        _ => unreachable!("arithmetic handled above"),
    }))
}

fn mismatch(op: BinaryOp, a: Value, b: Value) -> VmError {
    VmError::TypeMismatch { op: op.symbol(), lhs: a.type_name(), rhs: b.type_name() }
}

fn sequence_arith(op: BinaryOp, a: Value, b: Value, heap: &mut Heap) -> Result<Value, VmError> {
    match (op, a, b) {
        (BinaryOp::Add, Value::Str(x), Value::Str(y)) => {
            let joined = [heap.str(x), heap.str(y)].concat();
            Ok(Value::Str(heap.alloc_str(joined)?))
        }
        (BinaryOp::Add, Value::List(x), Value::List(y)) => {
            let joined = [heap.list(x), heap.list(y)].concat();
            Ok(Value::List(heap.alloc_list(joined)?))
        }
        (BinaryOp::Mul, Value::Str(s), n) | (BinaryOp::Mul, n, Value::Str(s)) if repeat_count(n).is_some() => {
            let out = heap.str(s).repeat(repeat_count(n).unwrap());
            Ok(Value::Str(heap.alloc_str(out)?))
        }
        (BinaryOp::Mul, Value::List(l), n) | (BinaryOp::Mul, n, Value::List(l)) if repeat_count(n).is_some() => {
            let out = heap.list(l).repeat(repeat_count(n).unwrap());
            Ok(Value::List(heap.alloc_list(out)?))
        }
        _ => Err(mismatch(op, a, b)),
    }
}

fn identical(a: Value, b: Value) -> bool {
    match (a, b) {
        (Value::Real(x), Value::Real(y)) => x.to_bits() == y.to_bits(),
        _ => a == b,
    }
}

/// `==` semantics: numbers compare by value across int/real/bool,
/// sequences compare element-wise, other type pairs are unequal.
pub fn equal(a: Value, b: Value, heap: &Heap) -> bool {
    match (a, b) {
        (Value::None, Value::None) => true,
        (Value::Str(x), Value::Str(y)) => heap.str(x) == heap.str(y),
        (Value::List(x), Value::List(y)) => {
            let (l, r) = (heap.list(x), heap.list(y));
            l.len() == r.len() && l.iter().zip(r).all(|(&p, &q)| equal(p, q, heap))
        }
        _ => matches!(compare(a, b, heap), Some(Ordering::Equal)),
    }
}

fn as_f64(n: Num) -> f64 {
    match n {
        Num::Int(i) => i as f64,
        Num::Real(r) => r as f64,
    }
}

/// Ordering for `<` and friends; `None` when the types are not ordered.
pub fn compare(a: Value, b: Value, heap: &Heap) -> Option<Ordering> {
    if let (Some(x), Some(y)) = (num(a), num(b)) {
        return match (x, y) {
            (Num::Int(p), Num::Int(q)) => Some(p.cmp(&q)),
            (x, y) => as_f64(x).partial_cmp(&as_f64(y)),
        };
    }
    match (a, b) {
        (Value::Str(x), Value::Str(y)) => Some(heap.str(x).cmp(heap.str(y))),
        (Value::List(x), Value::List(y)) => {
            let (l, r) = (heap.list(x), heap.list(y));
            for (&p, &q) in l.iter().zip(r) {
                if !equal(p, q, heap) {
                    return compare(p, q, heap);
                }
            }
            Some(l.len().cmp(&r.len()))
        }
        _ => None,
    }
}

pub fn eval_unary(op: UnaryOp, v: Value, heap: &Heap) -> Result<Value, VmError> {
    let bad = |op| VmError::UnaryType { op, operand: v.type_name() };
    match op {
        UnaryOp::Not => Ok(Value::Bool(!truthy(v, heap))),
        UnaryOp::Neg => match num(v) {
            Some(Num::Int(i)) => Ok(Value::Int(i.checked_neg().ok_or(ArithError::Overflow)?)),
            Some(Num::Real(r)) => Ok(Value::Real(-r)),
            None => Err(bad("-")),
        },
        UnaryOp::Plus => match num(v) {
            Some(Num::Int(i)) => Ok(Value::Int(i)),
            Some(Num::Real(r)) => Ok(Value::Real(r)),
            None => Err(bad("+")),
        },
    }
}

pub fn truthy(v: Value, heap: &Heap) -> bool {
    match v {
        Value::None => false,
        Value::Int(i) => i != 0,
        Value::Real(r) => r != 0.0,
        Value::Bool(b) => b,
        Value::Str(h) => !heap.str(h).is_empty(),
        Value::List(h) => !heap.list(h).is_empty(),
    }
}

/// Text produced by `str(v)` and `print`.
pub fn display(v: Value, heap: &Heap) -> String {
    let mut out = String::new();
    write_value(&mut out, v, heap, false);
    out
}

fn write_value(out: &mut String, v: Value, heap: &Heap, quoted: bool) {
    match v {
        Value::None => out.push_str("None"),
        Value::Int(i) => out.push_str(&i.to_string()),
        Value::Real(r) => out.push_str(&format_real(r)),
        Value::Bool(b) => out.push_str(if b { "True" } else { "False" }),
        Value::Str(h) => {
            let s = String::from_utf8_lossy(heap.str(h));
            if quoted {
                out.push('\'');
                for c in s.chars() {
                    match c {
                        '\'' => out.push_str("\\'"),
                        '\\' => out.push_str("\\\\"),
                        '\n' => out.push_str("\\n"),
                        '\t' => out.push_str("\\t"),
                        c => out.push(c),
                    }
                }
                out.push('\'');
            } else {
                out.push_str(&s);
            }
        }
        Value::List(h) => {
            out.push('[');
            for (i, &item) in heap.list(h).iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_value(out, item, heap, true);
            }
            out.push(']');
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bin(op: BinaryOp, a: Value, b: Value) -> Result<Value, VmError> {
        eval_binary(op, a, b, &mut Heap::unbounded())
    }

    #[test]
    fn int_division_floors() {
        assert_eq!(bin(BinaryOp::Div, Value::Int(1000), Value::Int(16)).unwrap(), Value::Int(62));
        assert_eq!(bin(BinaryOp::Div, Value::Int(-7), Value::Int(2)).unwrap(), Value::Int(-4));
        assert_eq!(bin(BinaryOp::Mod, Value::Int(-7), Value::Int(2)).unwrap(), Value::Int(1));
        assert_eq!(bin(BinaryOp::Div, Value::Int(7), Value::Real(2.0)).unwrap(), Value::Real(3.5));
        assert!(matches!(
            bin(BinaryOp::Div, Value::Int(1), Value::Int(0)),
            Err(VmError::Arith(ArithError::DivisionByZero))
        ));
        assert!(matches!(bin(BinaryOp::Div, Value::Int(i32::MIN), Value::Int(-1)), Err(VmError::Arith(ArithError::Overflow))));
        assert_eq!(bin(BinaryOp::Mod, Value::Int(i32::MIN), Value::Int(-1)).unwrap(), Value::Int(0));
    }

    #[test]
    fn promotion_and_comparison() {
        assert_eq!(bin(BinaryOp::Lt, Value::Int(3), Value::Real(3.5)).unwrap(), Value::Bool(true));
        assert_eq!(bin(BinaryOp::Eq, Value::Int(1), Value::Real(1.0)).unwrap(), Value::Bool(true));
        assert_eq!(bin(BinaryOp::Eq, Value::Int(1), Value::None).unwrap(), Value::Bool(false));
        assert_eq!(bin(BinaryOp::Is, Value::None, Value::None).unwrap(), Value::Bool(true));
        assert!(bin(BinaryOp::Lt, Value::Int(1), Value::None).is_err());
        assert_eq!(bin(BinaryOp::Pow, Value::Int(10), Value::Int(6)).unwrap(), Value::Int(1_000_000));
        assert_eq!(bin(BinaryOp::Pow, Value::Int(2), Value::Int(-1)).unwrap(), Value::Real(0.5));
        assert!(bin(BinaryOp::Pow, Value::Int(10), Value::Int(10)).is_err());
    }

    #[test]
    fn sequences() {
        let mut h = Heap::unbounded();
        let a = Value::Str(h.alloc_str(b"core ".to_vec()).unwrap());
        let b = Value::Str(h.alloc_str(b"7".to_vec()).unwrap());
        let c = eval_binary(BinaryOp::Add, a, b, &mut h).unwrap();
        assert_eq!(display(c, &h), "core 7");
        let l = Value::List(h.alloc_list(vec![Value::Int(0)]).unwrap());
        let big = eval_binary(BinaryOp::Mul, l, Value::Int(3), &mut h).unwrap();
        assert_eq!(display(big, &h), "[0, 0, 0]");
        let mixed = Value::List(h.alloc_list(vec![a, Value::Real(1.0), Value::Bool(true), Value::None]).unwrap());
        assert_eq!(display(mixed, &h), "['core ', 1.0, True, None]");
        assert!(eval_binary(BinaryOp::Add, a, Value::Int(1), &mut h).is_err());
    }

    #[test]
    fn unary() {
        let h = Heap::unbounded();
        assert_eq!(eval_unary(UnaryOp::Neg, Value::Int(5), &h).unwrap(), Value::Int(-5));
        assert_eq!(eval_unary(UnaryOp::Not, Value::Int(0), &h).unwrap(), Value::Bool(true));
        assert!(eval_unary(UnaryOp::Neg, Value::None, &h).is_err());
        assert!(eval_unary(UnaryOp::Neg, Value::Int(i32::MIN), &h).is_err());
    }
}
