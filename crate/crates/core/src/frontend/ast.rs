//! Parse tree for the Python subset.

use std::fmt::Write as _;

use super::Pos;
use crate::intrinsic::Intrinsic;

#[derive(Debug, Clone, Default)]
pub struct Module {
    pub body: Vec<Stmt>,
}

#[derive(Debug, Clone)]
pub struct Stmt {
    pub kind: StmtKind,
    pub pos: Pos,
}

#[derive(Debug, Clone)]
pub enum ImportNames {
    All,
    Names(Vec<String>),
}

#[derive(Debug, Clone)]
pub enum StmtKind {
    /// `from module import ...`
    Import { module: String, names: ImportNames },
    FunctionDef(FunctionDef),
    /// An `if`/`elif` chain with optional `else`.
    If { branches: Vec<(Expr, Vec<Stmt>)>, orelse: Vec<Stmt> },
    While { cond: Expr, body: Vec<Stmt> },
    For { var: String, iter: Expr, body: Vec<Stmt> },
    Assign { target: Target, value: Expr },
    AugAssign { target: Target, op: BinOp, value: Expr },
    Expr(Expr),
    Return(Option<Expr>),
    Print(Vec<Expr>),
    Global(Vec<String>),
    Pass,
    Break,
    Continue,
}

#[derive(Debug, Clone)]
pub struct FunctionDef {
    pub name: String,
    pub params: Vec<Param>,
    pub body: Vec<Stmt>,
    /// Set for declarations spliced in from a bundled module whose
    /// implementation is built into the interpreter.
    pub intrinsic: Option<Intrinsic>,
}

#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub default: Option<Expr>,
}

#[derive(Debug, Clone)]
pub enum Target {
    Name(String),
    Index { seq: Expr, index: Expr },
}

#[derive(Debug, Clone)]
pub struct Expr {
    pub kind: ExprKind,
    pub pos: Pos,
}

#[derive(Debug, Clone)]
pub enum ExprKind {
    Int(i32),
    Real(f32),
    Str(String),
    Bool(bool),
    None,
    Name(String),
    List(Vec<Expr>),
    Binary { op: BinOp, lhs: Box<Expr>, rhs: Box<Expr> },
    Unary { op: UnOp, operand: Box<Expr> },
    Index { seq: Box<Expr>, index: Box<Expr> },
    Call { func: String, args: Vec<Expr> },
    /// `receiver.method(args)`; only `append` on lists is executable.
    MethodCall { receiver: Box<Expr>, method: String, args: Vec<Expr> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    FloorDiv,
    Mod,
    Pow,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Is,
    IsNot,
    And,
    Or,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::FloorDiv => "//",
            BinOp::Mod => "%",
            BinOp::Pow => "**",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::Is => "is",
            BinOp::IsNot => "is not",
            BinOp::And => "and",
            BinOp::Or => "or",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnOp {
    Neg,
    Plus,
    Not,
}

impl UnOp {
    pub fn symbol(self) -> &'static str {
        match self {
            UnOp::Neg => "-",
            UnOp::Plus => "+",
            UnOp::Not => "not",
        }
    }
}

impl Expr {
    pub fn new(kind: ExprKind, pos: Pos) -> Self {
        Expr { kind, pos }
    }
}

impl Module {
    /// Position-free S-expression rendering, used to compare tree shapes.
    pub fn structure(&self) -> String {
        let mut out = String::from("(module");
        for s in &self.body {
            out.push(' ');
            stmt_sexp(s, &mut out);
        }
        out.push(')');
        out
    }

    pub fn functions(&self) -> impl Iterator<Item = &FunctionDef> {
        self.body.iter().filter_map(|s| match &s.kind {
            StmtKind::FunctionDef(f) => Some(f),
            _ => None,
        })
    }
}

fn block_sexp(body: &[Stmt], out: &mut String) {
    out.push('[');
    for (i, s) in body.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        stmt_sexp(s, out);
    }
    out.push(']');
}

fn target_sexp(t: &Target, out: &mut String) {
    match t {
        Target::Name(n) => out.push_str(n),
        Target::Index { seq, index } => {
            out.push_str("(index ");
            expr_sexp(seq, out);
            out.push(' ');
            expr_sexp(index, out);
            out.push(')');
        }
    }
}

fn stmt_sexp(s: &Stmt, out: &mut String) {
    match &s.kind {
        StmtKind::Import { module, names } => {
            let _ = write!(out, "(import {module} ");
            match names {
                ImportNames::All => out.push('*'),
                ImportNames::Names(n) => out.push_str(&n.join(",")),
            }
            out.push(')');
        }
        StmtKind::FunctionDef(f) => {
            let _ = write!(out, "(def {}", f.name);
            if let Some(i) = f.intrinsic {
                let _ = write!(out, " intrinsic:{}", i.name());
            }
            out.push_str(" (");
            for (i, p) in f.params.iter().enumerate() {
                if i > 0 {
                    out.push(' ');
                }
                out.push_str(&p.name);
                if let Some(d) = &p.default {
                    out.push('=');
                    expr_sexp(d, out);
                }
            }
            out.push_str(") ");
            block_sexp(&f.body, out);
            out.push(')');
        }
        StmtKind::If { branches, orelse } => {
            out.push_str("(if");
            for (c, b) in branches {
                out.push(' ');
                expr_sexp(c, out);
                out.push(' ');
                block_sexp(b, out);
            }
            out.push_str(" else ");
            block_sexp(orelse, out);
            out.push(')');
        }
        StmtKind::While { cond, body } => {
            out.push_str("(while ");
            expr_sexp(cond, out);
            out.push(' ');
            block_sexp(body, out);
            out.push(')');
        }
        StmtKind::For { var, iter, body } => {
            let _ = write!(out, "(for {var} ");
            expr_sexp(iter, out);
            out.push(' ');
            block_sexp(body, out);
            out.push(')');
        }
        StmtKind::Assign { target, value } => {
            out.push_str("(= ");
            target_sexp(target, out);
            out.push(' ');
            expr_sexp(value, out);
            out.push(')');
        }
        StmtKind::AugAssign { target, op, value } => {
            let _ = write!(out, "({}= ", op.symbol());
            target_sexp(target, out);
            out.push(' ');
            expr_sexp(value, out);
            out.push(')');
        }
        StmtKind::Expr(e) => {
            out.push_str("(expr ");
            expr_sexp(e, out);
            out.push(')');
        }
        StmtKind::Return(e) => {
            out.push_str("(return");
            if let Some(e) = e {
                out.push(' ');
                expr_sexp(e, out);
            }
            out.push(')');
        }
        StmtKind::Print(args) => {
            out.push_str("(print");
            for a in args {
                out.push(' ');
                expr_sexp(a, out);
            }
            out.push(')');
        }
        StmtKind::Global(names) => {
            let _ = write!(out, "(global {})", names.join(","));
        }
        StmtKind::Pass => out.push_str("(pass)"),
        StmtKind::Break => out.push_str("(break)"),
        StmtKind::Continue => out.push_str("(continue)"),
    }
}

fn expr_sexp(e: &Expr, out: &mut String) {
    match &e.kind {
        ExprKind::Int(v) => {
            let _ = write!(out, "{v}");
        }
        ExprKind::Real(v) => {
            let _ = write!(out, "{v:?}r");
        }
        ExprKind::Str(s) => {
            let _ = write!(out, "{s:?}");
        }
        ExprKind::Bool(b) => {
            let _ = write!(out, "{b}");
        }
        ExprKind::None => out.push_str("none"),
        ExprKind::Name(n) => out.push_str(n),
        ExprKind::List(items) => {
            out.push_str("(list");
            for i in items {
                out.push(' ');
                expr_sexp(i, out);
            }
            out.push(')');
        }
        ExprKind::Binary { op, lhs, rhs } => {
            let _ = write!(out, "({} ", op.symbol());
            expr_sexp(lhs, out);
            out.push(' ');
            expr_sexp(rhs, out);
            out.push(')');
        }
        ExprKind::Unary { op, operand } => {
            let _ = write!(out, "({} ", op.symbol());
            expr_sexp(operand, out);
            out.push(')');
        }
        ExprKind::Index { seq, index } => {
            out.push_str("(index ");
            expr_sexp(seq, out);
            out.push(' ');
            expr_sexp(index, out);
            out.push(')');
        }
        ExprKind::Call { func, args } => {
            let _ = write!(out, "(call {func}");
            for a in args {
                out.push(' ');
                expr_sexp(a, out);
            }
            out.push(')');
        }
        ExprKind::MethodCall { receiver, method, args } => {
            let _ = write!(out, "(method {method} ");
            expr_sexp(receiver, out);
            for a in args {
                out.push(' ');
                expr_sexp(a, out);
            }
            out.push(')');
        }
    }
}
