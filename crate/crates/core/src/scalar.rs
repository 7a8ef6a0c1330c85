//! Scalar-type-agnostic numeric kernels.
//!
//! The interpreter runs on [`crate::Real`] (single precision), but the
//! arithmetic, reduction and math-service kernels are written once over
//! [`RealScalar`] so reference computations can be checked at other widths.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use thiserror::Error;

/// Floating point scalar usable by the numeric kernels.
pub trait RealScalar:
    Float + FromPrimitive + ToPrimitive + NumAssign + Debug + Display + Send + Sync + 'static
{
}

impl RealScalar for f32 {}
impl RealScalar for f64 {}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ArithError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("integer overflow")]
    Overflow,
    #[error("math domain error: {0}")]
    Domain(&'static str),
}

/// Arithmetic operators shared by the int and real kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    /// `/`: floor division for two ints, true division otherwise.
    Div,
    /// `//`
    FloorDiv,
    Mod,
    Pow,
}

/// Applies `op` to two reals.
pub fn real_arith<R: RealScalar>(op: ArithOp, a: R, b: R) -> Result<R, ArithError> {
    Ok(match op {
        ArithOp::Add => a + b,
        ArithOp::Sub => a - b,
        ArithOp::Mul => a * b,
        ArithOp::Div => {
            if b.is_zero() {
                return Err(ArithError::DivisionByZero);
            }
            a / b
        }
        ArithOp::FloorDiv => {
            if b.is_zero() {
                return Err(ArithError::DivisionByZero);
            }
            floor_div(a, b)
        }
        ArithOp::Mod => {
            if b.is_zero() {
                return Err(ArithError::DivisionByZero);
            }
            // Python semantics: the result takes the sign of the divisor.
            let r = a % b;
            if !r.is_zero() && (r < R::zero()) != (b < R::zero()) {
                r + b
            } else {
                r
            }
        }
        ArithOp::Pow => power(a, b)?,
    })
}

/// Floor of the exact quotient. Flooring a rounded `a / b` can land on the
/// wrong integer, so the quotient is rebuilt from the exact remainder.
fn floor_div<R: RealScalar>(a: R, b: R) -> R {
    let m = a % b;
    let mut div = (a - m) / b;
    if !m.is_zero() && (b < R::zero()) != (m < R::zero()) {
        div -= R::one();
    }
    if div.is_zero() {
        return R::zero().copysign(a / b);
    }
    let mut q = div.floor();
    if div - q > R::from_f32(0.5).unwrap() {
        q += R::one();
    }
    q
}

/// `base ** exp`, evaluated in double precision and rounded once, so
/// `pow(x, 2)` is exactly `x * x` at single precision.
pub fn power<R: RealScalar>(base: R, exp: R) -> Result<R, ArithError> {
    let (b, e) = (base.to_f64().unwrap(), exp.to_f64().unwrap());
    let integral = e.fract() == 0.0;
    if b == 0.0 && e < 0.0 {
        return Err(ArithError::DivisionByZero);
    }
    if b < 0.0 && !integral {
        return Err(ArithError::Domain("negative base with fractional exponent"));
    }
    let r = if integral && e.abs() <= i32::MAX as f64 { b.powi(e as i32) } else { b.powf(e) };
    Ok(R::from_f64(r).unwrap())
}

/// Host-side "complex mathematical functionality".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MathFn {
    Sqrt,
    Pow,
    Sin,
    Cos,
    Tan,
    Log,
    Exp,
}

impl MathFn {
    pub fn arity(self) -> usize {
        match self {
            MathFn::Pow => 2,
            _ => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MathFn::Sqrt => "sqrt",
            MathFn::Pow => "pow",
            MathFn::Sin => "sin",
            MathFn::Cos => "cos",
            MathFn::Tan => "tan",
            MathFn::Log => "log",
            MathFn::Exp => "exp",
        }
    }

    pub fn from_u8(code: u8) -> Option<MathFn> {
        Some(match code {
            0 => MathFn::Sqrt,
            1 => MathFn::Pow,
            2 => MathFn::Sin,
            3 => MathFn::Cos,
            4 => MathFn::Tan,
            5 => MathFn::Log,
            6 => MathFn::Exp,
            _ => return None,
        })
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn apply<R: RealScalar>(self, args: &[R]) -> Result<R, ArithError> {
        let x = args[0];
        Ok(match self {
            MathFn::Sqrt => {
                if x < R::zero() {
                    return Err(ArithError::Domain("sqrt of negative number"));
                }
                x.sqrt()
            }
            MathFn::Pow => power(x, args[1])?,
            MathFn::Sin => x.sin(),
            MathFn::Cos => x.cos(),
            MathFn::Tan => x.tan(),
            MathFn::Log => {
                if x <= R::zero() {
                    return Err(ArithError::Domain("log of non-positive number"));
                }
                x.ln()
            }
            MathFn::Exp => x.exp(),
        })
    }
}

/// Reduction operators accepted by `reduce`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ReduceOp {
    Max,
    Min,
    Sum,
    Prod,
}

impl ReduceOp {
    pub const ALL: [ReduceOp; 4] = [ReduceOp::Max, ReduceOp::Min, ReduceOp::Sum, ReduceOp::Prod];

    pub fn parse(name: &str) -> Option<ReduceOp> {
        Some(match name {
            "max" => ReduceOp::Max,
            "min" => ReduceOp::Min,
            "sum" => ReduceOp::Sum,
            "prod" => ReduceOp::Prod,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            ReduceOp::Max => "max",
            ReduceOp::Min => "min",
            ReduceOp::Sum => "sum",
            ReduceOp::Prod => "prod",
        }
    }

    pub fn from_u8(code: u8) -> Option<ReduceOp> {
        Self::ALL.get(code as usize).copied()
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    /// Combines two reals.
    pub fn combine_real<R: RealScalar>(self, a: R, b: R) -> R {
        match self {
            ReduceOp::Max => {
                if b > a {
                    b
                } else {
                    a
                }
            }
            ReduceOp::Min => {
                if b < a {
                    b
                } else {
                    a
                }
            }
            ReduceOp::Sum => a + b,
            ReduceOp::Prod => a * b,
        }
    }

    /// Combines two 4-byte ints; `None` on overflow.
    pub fn combine_int(self, a: i32, b: i32) -> Option<i32> {
        match self {
            ReduceOp::Max => Some(a.max(b)),
            ReduceOp::Min => Some(a.min(b)),
            ReduceOp::Sum => a.checked_add(b),
            ReduceOp::Prod => a.checked_mul(b),
        }
    }
}

/// Formats a real the way `str()` does: shortest round-trip digits, always
/// with a decimal point for finite values.
pub fn format_real<R: RealScalar>(x: R) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > R::zero() { "inf".into() } else { "-inf".into() };
    }
    let s = format!("{x}");
    if s.contains('.') || s.contains('e') {
        s
    } else {
        s + ".0"
    }
}
