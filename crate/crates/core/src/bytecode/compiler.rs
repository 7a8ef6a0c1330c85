//! Lowers a resolved module to bytecode.
//!
//! Code generation happens in two passes. The first produces a list of
//! instructions whose jumps name labels and whose variables are still split
//! into global and local slots. Once every function's slot count and every
//! instruction's size are known, the second pass lays the image out as
//! `[string pool][functions][top level]` and encodes it.

use std::collections::HashMap;

use thiserror::Error;

use super::image::{ProgramImage, Symbols};
use super::isa::{write_operand, BinaryOp, OperandKind, Opcode, UnaryOp};
use crate::frontend::ast::*;
use crate::frontend::Pos;
use crate::intrinsic::Intrinsic;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CompileError {
    #[error("{pos}: too many variables: {count} ids needed, at most 65535 available")]
    TooManyVariables { pos: Pos, count: usize },
    #[error("{pos}: jump displacement {displacement} does not fit in 2 bytes")]
    JumpOutOfRange { pos: Pos, displacement: i64 },
    #[error("{pos}: unsupported: {what}")]
    Unsupported { pos: Pos, what: String },
    #[error("{pos}: undefined name '{name}'")]
    UndefinedName { pos: Pos, name: String },
    #[error("{pos}: undefined function '{name}'")]
    UndefinedFunction { pos: Pos, name: String },
    #[error("{pos}: {name}() takes {expected} arguments ({given} given)")]
    Arity { pos: Pos, name: String, expected: String, given: usize },
    #[error("{pos}: {msg}")]
    Invalid { pos: Pos, msg: String },
}

fn unsupported(pos: Pos, what: impl Into<String>) -> CompileError {
    CompileError::Unsupported { pos, what: what.into() }
}

fn invalid(pos: Pos, msg: impl Into<String>) -> CompileError {
    CompileError::Invalid { pos, msg: msg.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Var {
    Global(u16),
    Local(u32),
}

#[derive(Debug, Clone, Copy)]
enum Operand {
    Var(Var),
    Op(u8),
    Const(u32),
    Func(usize),
    Str(usize),
    Jump(usize),
}

impl Operand {
    fn kind(self) -> OperandKind {
        match self {
            Operand::Var(_) => OperandKind::Var,
            Operand::Op(_) => OperandKind::Op,
            Operand::Const(_) => OperandKind::Const,
            Operand::Func(_) | Operand::Str(_) => OperandKind::Addr,
            Operand::Jump(_) => OperandKind::Jump,
        }
    }
}

#[derive(Debug, Clone)]
enum Item {
    Instr { op: Opcode, operands: Vec<Operand>, pos: Pos },
    Label(usize),
}

impl Item {
    fn size(&self) -> usize {
        match self {
            Item::Instr { operands, .. } => 1 + operands.iter().map(|o| o.kind().width()).sum::<usize>(),
            Item::Label(_) => 0,
        }
    }
}

/// Generated code for one function (or the top level) before layout.
struct Unit {
    name: String,
    params: u32,
    locals: u32,
    items: Vec<Item>,
    pos: Pos,
}

#[derive(Clone)]
enum Callee<'m> {
    User { index: usize, def: &'m FunctionDef },
    Intrinsic(Intrinsic),
}

struct Ctx<'m> {
    functions: HashMap<&'m str, Callee<'m>>,
    globals: Vec<String>,
    global_ids: HashMap<String, u16>,
    strings: Vec<Vec<u8>>,
    string_ids: HashMap<Vec<u8>, usize>,
    labels: usize,
}

/// Per-function code generation state.
struct Gen<'c, 'm> {
    ctx: &'c mut Ctx<'m>,
    in_function: bool,
    locals: HashMap<String, u32>,
    named_locals: u32,
    next_temp: u32,
    max_temp: u32,
    loops: Vec<(usize, usize)>,
    items: Vec<Item>,
}

/// Compiles a module whose imports have been resolved.
pub fn compile(module: &Module) -> Result<ProgramImage, CompileError> {
    let mut ctx = Ctx {
        functions: HashMap::new(),
        globals: Vec::new(),
        global_ids: HashMap::new(),
        strings: Vec::new(),
        string_ids: HashMap::new(),
        labels: 0,
    };

    let mut user_defs: Vec<(&FunctionDef, Pos)> = Vec::new();
    for s in &module.body {
        if let StmtKind::FunctionDef(f) = &s.kind {
            if ctx.functions.contains_key(f.name.as_str()) {
                return Err(invalid(s.pos, format!("duplicate definition of '{}'", f.name)));
            }
            let callee = match f.intrinsic {
                Some(i) => Callee::Intrinsic(i),
                None => {
                    user_defs.push((f, s.pos));
                    Callee::User { index: user_defs.len() - 1, def: f }
                }
            };
            ctx.functions.insert(&f.name, callee);
        }
    }

    // Globals: names bound at the top level, then names declared `global`
    // inside functions, each in order of first appearance.
    let mut bound = Vec::new();
    for s in &module.body {
        if !matches!(s.kind, StmtKind::FunctionDef(_)) {
            bound_names(s, &mut bound);
        }
    }
    for (f, _) in &user_defs {
        for s in &f.body {
            global_decls(s, &mut bound);
        }
    }
    for (name, pos) in bound {
        if ctx.global_ids.contains_key(&name) {
            continue;
        }
        if ctx.functions.contains_key(name.as_str()) {
            return Err(invalid(pos, format!("'{name}' is both a function and a variable")));
        }
        if ctx.globals.len() >= u16::MAX as usize {
            return Err(CompileError::TooManyVariables { pos, count: ctx.globals.len() + 1 });
        }
        ctx.global_ids.insert(name.clone(), ctx.globals.len() as u16);
        ctx.globals.push(name);
    }

    let mut units = Vec::with_capacity(user_defs.len() + 1);
    for (f, pos) in &user_defs {
        units.push(compile_function(&mut ctx, f, *pos)?);
    }
    units.push(compile_main(&mut ctx, &module.body)?);
    layout(&ctx, &units)
}

fn compile_main<'m>(ctx: &mut Ctx<'m>, body: &[Stmt]) -> Result<Unit, CompileError> {
    let mut g = Gen::new(ctx, false);
    for s in body {
        match &s.kind {
            StmtKind::FunctionDef(_) => {}
            _ => g.stmt(s)?,
        }
    }
    g.emit(Opcode::Stop, vec![], Pos::default());
    Ok(Unit { name: String::new(), params: 0, locals: g.max_temp, items: g.items, pos: Pos::new(1, 1) })
}

fn compile_function<'m>(ctx: &mut Ctx<'m>, f: &'m FunctionDef, pos: Pos) -> Result<Unit, CompileError> {
    let mut g = Gen::new(ctx, true);
    let mut declared_global = Vec::new();
    for s in &f.body {
        global_decls(s, &mut declared_global);
    }
    let is_global = |n: &str| declared_global.iter().any(|(g, _)| g == n);
    for p in &f.params {
        if is_global(&p.name) {
            return Err(invalid(pos, format!("'{}' is a parameter and declared global", p.name)));
        }
        g.add_local(&p.name);
    }
    let mut assigned = Vec::new();
    for s in &f.body {
        bound_names(s, &mut assigned);
    }
    for (n, _) in &assigned {
        if !is_global(n) && !g.locals.contains_key(n) {
            g.add_local(n);
        }
    }
    g.named_locals = g.locals.len() as u32;
    g.next_temp = g.named_locals;
    g.max_temp = g.named_locals;
    for s in &f.body {
        if let StmtKind::FunctionDef(_) = s.kind {
            return Err(unsupported(s.pos, "nested function definitions"));
        }
        g.stmt(s)?;
    }
    g.emit(Opcode::ReturnNone, vec![], pos);
    Ok(Unit { name: f.name.clone(), params: f.params.len() as u32, locals: g.max_temp, items: g.items, pos })
}

/// Names bound by assignment or `for` in `s`, not descending into functions.
fn bound_names(s: &Stmt, out: &mut Vec<(String, Pos)>) {
    match &s.kind {
        StmtKind::Assign { target: Target::Name(n), .. } | StmtKind::AugAssign { target: Target::Name(n), .. } => {
            out.push((n.clone(), s.pos))
        }
        StmtKind::For { var, body, .. } => {
            out.push((var.clone(), s.pos));
            body.iter().for_each(|b| bound_names(b, out));
        }
        StmtKind::If { branches, orelse } => {
            branches.iter().flat_map(|(_, b)| b).chain(orelse).for_each(|b| bound_names(b, out));
        }
        StmtKind::While { body, .. } => body.iter().for_each(|b| bound_names(b, out)),
        _ => {}
    }
}

fn global_decls(s: &Stmt, out: &mut Vec<(String, Pos)>) {
    match &s.kind {
        StmtKind::Global(names) => out.extend(names.iter().map(|n| (n.clone(), s.pos))),
        StmtKind::For { body, .. } | StmtKind::While { body, .. } => body.iter().for_each(|b| global_decls(b, out)),
        StmtKind::If { branches, orelse } => {
            branches.iter().flat_map(|(_, b)| b).chain(orelse).for_each(|b| global_decls(b, out));
        }
        _ => {}
    }
}

fn has_call(e: &Expr) -> bool {
    match &e.kind {
        ExprKind::Call { .. } | ExprKind::MethodCall { .. } => true,
        ExprKind::List(items) => items.iter().any(has_call),
        ExprKind::Binary { lhs, rhs, .. } => has_call(lhs) || has_call(rhs),
        ExprKind::Unary { operand, .. } => has_call(operand),
        ExprKind::Index { seq, index } => has_call(seq) || has_call(index),
        _ => false,
    }
}

fn binary_code(op: BinOp) -> BinaryOp {
    match op {
        BinOp::Add => BinaryOp::Add,
        BinOp::Sub => BinaryOp::Sub,
        BinOp::Mul => BinaryOp::Mul,
        BinOp::Div => BinaryOp::Div,
        BinOp::FloorDiv => BinaryOp::FloorDiv,
        BinOp::Mod => BinaryOp::Mod,
        BinOp::Pow => BinaryOp::Pow,
        BinOp::Eq => BinaryOp::Eq,
        BinOp::Ne => BinaryOp::Ne,
        BinOp::Lt => BinaryOp::Lt,
        BinOp::Le => BinaryOp::Le,
        BinOp::Gt => BinaryOp::Gt,
        BinOp::Ge => BinaryOp::Ge,
        BinOp::Is => BinaryOp::Is,
        BinOp::IsNot => BinaryOp::IsNot,
        BinOp::And | BinOp::Or => unreachable!("short-circuit operators lower to jumps"),
    }
}

fn unary_code(op: UnOp) -> UnaryOp {
    match op {
        UnOp::Neg => UnaryOp::Neg,
        UnOp::Plus => UnaryOp::Plus,
        UnOp::Not => UnaryOp::Not,
    }
}

impl<'c, 'm> Gen<'c, 'm> {
    fn new(ctx: &'c mut Ctx<'m>, in_function: bool) -> Self {
        Gen {
            ctx,
            in_function,
            locals: HashMap::new(),
            named_locals: 0,
            next_temp: 0,
            max_temp: 0,
            loops: Vec::new(),
            items: Vec::new(),
        }
    }

    fn add_local(&mut self, name: &str) {
        let id = self.locals.len() as u32;
        self.locals.insert(name.to_string(), id);
    }

    fn emit(&mut self, op: Opcode, operands: Vec<Operand>, pos: Pos) {
        self.items.push(Item::Instr { op, operands, pos });
    }

    fn label(&mut self) -> usize {
        self.ctx.labels += 1;
        self.ctx.labels - 1
    }

    fn place(&mut self, label: usize) {
        self.items.push(Item::Label(label));
    }

    fn temp(&mut self) -> Var {
        let t = self.next_temp;
        self.next_temp += 1;
        self.max_temp = self.max_temp.max(self.next_temp);
        Var::Local(t)
    }

    fn lookup(&self, name: &str, pos: Pos) -> Result<Var, CompileError> {
        if let Some(&l) = self.locals.get(name) {
            return Ok(Var::Local(l));
        }
        if let Some(&g) = self.ctx.global_ids.get(name) {
            return Ok(Var::Global(g));
        }
        if self.ctx.functions.contains_key(name) || Intrinsic::builtin(name).is_some() {
            return Err(unsupported(pos, format!("function '{name}' used as a value")));
        }
        Err(CompileError::UndefinedName { pos, name: name.to_string() })
    }

    fn intern(&mut self, s: &str) -> usize {
        let bytes = s.as_bytes().to_vec();
        if let Some(&i) = self.ctx.string_ids.get(&bytes) {
            return i;
        }
        self.ctx.strings.push(bytes.clone());
        self.ctx.string_ids.insert(bytes, self.ctx.strings.len() - 1);
        self.ctx.strings.len() - 1
    }

    fn block(&mut self, body: &[Stmt]) -> Result<(), CompileError> {
        body.iter().try_for_each(|s| self.stmt(s))
    }

    fn stmt(&mut self, s: &Stmt) -> Result<(), CompileError> {
        let mark = self.next_temp;
        let pos = s.pos;
        match &s.kind {
            StmtKind::Import { .. } | StmtKind::Pass | StmtKind::Global(_) => {}
            StmtKind::FunctionDef(_) => {
                return Err(unsupported(pos, "function definitions outside the module top level"));
            }
            StmtKind::If { branches, orelse } => {
                let end = self.label();
                for (cond, body) in branches {
                    let next = self.label();
                    self.cond_jump(cond, false, next)?;
                    self.block(body)?;
                    self.emit(Opcode::Jump, vec![Operand::Jump(end)], pos);
                    self.place(next);
                }
                self.block(orelse)?;
                self.place(end);
            }
            StmtKind::While { cond, body } => {
                let top = self.label();
                let end = self.label();
                self.place(top);
                self.cond_jump(cond, false, end)?;
                self.loops.push((top, end));
                self.block(body)?;
                self.loops.pop();
                self.emit(Opcode::Jump, vec![Operand::Jump(top)], pos);
                self.place(end);
            }
            StmtKind::For { var, iter, body } => self.for_loop(var, iter, body, pos)?,
            StmtKind::Assign { target, value } => match target {
                Target::Name(n) => {
                    let dst = self.lookup(n, pos)?;
                    self.expr(value, Some(dst))?;
                }
                Target::Index { seq, index } => {
                    let v = self.expr(value, None)?;
                    let v = if has_call(seq) || has_call(index) { self.snapshot(v) } else { v };
                    let (sv, iv) = self.pair(seq, index)?;
                    self.emit(Opcode::StoreIndex, vec![Operand::Var(sv), Operand::Var(iv), Operand::Var(v)], pos);
                }
            },
            StmtKind::AugAssign { target, op, value } => {
                let code = binary_code(*op) as u8;
                match target {
                    Target::Name(n) => {
                        let dst = self.lookup(n, pos)?;
                        let v = self.expr(value, None)?;
                        self.emit(
                            Opcode::Binary,
                            vec![Operand::Var(dst), Operand::Op(code), Operand::Var(dst), Operand::Var(v)],
                            pos,
                        );
                    }
                    Target::Index { seq, index } => {
                        let (sv, iv) = self.pair(seq, index)?;
                        let (sv, iv) = if has_call(value) { (self.snapshot(sv), self.snapshot(iv)) } else { (sv, iv) };
                        let cur = self.temp();
                        self.emit(Opcode::Index, vec![Operand::Var(cur), Operand::Var(sv), Operand::Var(iv)], pos);
                        let v = self.expr(value, None)?;
                        self.emit(
                            Opcode::Binary,
                            vec![Operand::Var(cur), Operand::Op(code), Operand::Var(cur), Operand::Var(v)],
                            pos,
                        );
                        self.emit(Opcode::StoreIndex, vec![Operand::Var(sv), Operand::Var(iv), Operand::Var(cur)], pos);
                    }
                }
            }
            StmtKind::Expr(e) => {
                self.expr(e, None)?;
            }
            StmtKind::Return(e) => {
                if !self.in_function {
                    return Err(invalid(pos, "'return' outside a function"));
                }
                match e {
                    Some(e) => {
                        let v = self.expr(e, None)?;
                        self.emit(Opcode::Return, vec![Operand::Var(v)], pos);
                    }
                    None => self.emit(Opcode::ReturnNone, vec![], pos),
                }
            }
            StmtKind::Print(args) => {
                if args.len() > u8::MAX as usize {
                    return Err(unsupported(pos, "print with more than 255 values"));
                }
                let vars = self.operands(args)?;
                let mut ops = vec![Operand::Op(vars.len() as u8)];
                ops.extend(vars.into_iter().map(Operand::Var));
                self.emit(Opcode::Print, ops, pos);
            }
            StmtKind::Break | StmtKind::Continue => {
                let Some(&(cont, brk)) = self.loops.last() else {
                    return Err(invalid(pos, "'break' or 'continue' outside a loop"));
                };
                let target = if matches!(s.kind, StmtKind::Break) { brk } else { cont };
                self.emit(Opcode::Jump, vec![Operand::Jump(target)], pos);
            }
        }
        self.next_temp = mark;
        Ok(())
    }

    /// `for` over `range(...)` or over a list or string.
    fn for_loop(&mut self, var: &str, iter: &Expr, body: &[Stmt], pos: Pos) -> Result<(), CompileError> {
        let v = self.lookup(var, pos)?;
        let top = self.label();
        let cont = self.label();
        let end = self.label();
        let cond = self.temp();
        let counter = self.temp();
        let one = self.temp();
        let step_var;
        let limit = self.temp();
        let cmp;
        if let ExprKind::Call { func, args } = &iter.kind {
            if func == "range" && !self.ctx.functions.contains_key("range") {
                let (start, stop, step) = match args.as_slice() {
                    [stop] => (None, stop, 1),
                    [start, stop] => (Some(start), stop, 1),
                    [start, stop, step] => (Some(start), stop, literal_int(step).ok_or_else(|| {
                        unsupported(step.pos, "range() with a step that is not an integer literal")
                    })?),
                    _ => {
                        return Err(CompileError::Arity {
                            pos: iter.pos,
                            name: "range".into(),
                            expected: "1 to 3".into(),
                            given: args.len(),
                        })
                    }
                };
                if step == 0 {
                    return Err(invalid(iter.pos, "range() step must not be zero"));
                }
                match start {
                    Some(s) => {
                        self.expr(s, Some(counter))?;
                    }
                    None => self.emit(Opcode::ConstInt, vec![Operand::Var(counter), Operand::Const(0)], pos),
                }
                self.expr(stop, Some(limit))?;
                self.emit(Opcode::ConstInt, vec![Operand::Var(one), Operand::Const(step as u32)], pos);
                step_var = one;
                cmp = if step > 0 { BinaryOp::Lt } else { BinaryOp::Gt };
            } else {
                return self.for_sequence(v, iter, body, pos, (top, cont, end), (cond, counter, one, limit));
            }
        } else {
            return self.for_sequence(v, iter, body, pos, (top, cont, end), (cond, counter, one, limit));
        }
        self.place(top);
        self.emit(
            Opcode::Binary,
            vec![Operand::Var(cond), Operand::Op(cmp as u8), Operand::Var(counter), Operand::Var(limit)],
            pos,
        );
        self.emit(Opcode::JumpIfFalse, vec![Operand::Var(cond), Operand::Jump(end)], pos);
        self.emit(Opcode::Move, vec![Operand::Var(v), Operand::Var(counter)], pos);
        self.loops.push((cont, end));
        self.block(body)?;
        self.loops.pop();
        self.place(cont);
        self.emit(
            Opcode::Binary,
            vec![Operand::Var(counter), Operand::Op(BinaryOp::Add as u8), Operand::Var(counter), Operand::Var(step_var)],
            pos,
        );
        self.emit(Opcode::Jump, vec![Operand::Jump(top)], pos);
        self.place(end);
        Ok(())
    }

    fn for_sequence(
        &mut self,
        v: Var,
        iter: &Expr,
        body: &[Stmt],
        pos: Pos,
        (top, cont, end): (usize, usize, usize),
        (cond, index, one, len): (Var, Var, Var, Var),
    ) -> Result<(), CompileError> {
        let seq = self.temp();
        self.expr(iter, Some(seq))?;
        self.emit(Opcode::ConstInt, vec![Operand::Var(index), Operand::Const(0)], pos);
        self.emit(Opcode::ConstInt, vec![Operand::Var(one), Operand::Const(1)], pos);
        self.place(top);
        self.emit(
            Opcode::Intrinsic,
            vec![Operand::Var(len), Operand::Op(Intrinsic::Len.code()), Operand::Op(1), Operand::Var(seq)],
            pos,
        );
        self.emit(
            Opcode::Binary,
            vec![Operand::Var(cond), Operand::Op(BinaryOp::Lt as u8), Operand::Var(index), Operand::Var(len)],
            pos,
        );
        self.emit(Opcode::JumpIfFalse, vec![Operand::Var(cond), Operand::Jump(end)], pos);
        self.emit(Opcode::Index, vec![Operand::Var(v), Operand::Var(seq), Operand::Var(index)], pos);
        self.loops.push((cont, end));
        self.block(body)?;
        self.loops.pop();
        self.place(cont);
        self.emit(
            Opcode::Binary,
            vec![Operand::Var(index), Operand::Op(BinaryOp::Add as u8), Operand::Var(index), Operand::Var(one)],
            pos,
        );
        self.emit(Opcode::Jump, vec![Operand::Jump(top)], pos);
        self.place(end);
        Ok(())
    }

    /// Copies a named variable into a fresh temporary so a later call
    /// cannot change the value already evaluated.
    fn snapshot(&mut self, v: Var) -> Var {
        if matches!(v, Var::Local(l) if l >= self.named_locals) {
            return v;
        }
        let t = self.temp();
        self.emit(Opcode::Move, vec![Operand::Var(t), Operand::Var(v)], Pos::default());
        t
    }

    fn pair(&mut self, a: &Expr, b: &Expr) -> Result<(Var, Var), CompileError> {
        let v = self.expr(a, None)?;
        let v = if has_call(b) { self.snapshot(v) } else { v };
        Ok((v, self.expr(b, None)?))
    }

    /// Evaluates a left-to-right operand list.
    fn operands(&mut self, exprs: &[Expr]) -> Result<Vec<Var>, CompileError> {
        let mut out = Vec::with_capacity(exprs.len());
        for (i, e) in exprs.iter().enumerate() {
            let v = self.expr(e, None)?;
            let later_call = exprs[i + 1..].iter().any(has_call);
            out.push(if later_call { self.snapshot(v) } else { v });
        }
        Ok(out)
    }

    fn literal_into(&mut self, e: &Expr, dst: Var) -> Result<bool, CompileError> {
        let pos = e.pos;
        let d = Operand::Var(dst);
        match &e.kind {
            ExprKind::Int(v) => self.emit(Opcode::ConstInt, vec![d, Operand::Const(*v as u32)], pos),
            ExprKind::Real(v) => self.emit(Opcode::ConstReal, vec![d, Operand::Const(v.to_bits())], pos),
            ExprKind::Bool(b) => self.emit(Opcode::ConstBool, vec![d, Operand::Op(*b as u8)], pos),
            ExprKind::None => self.emit(Opcode::ConstNone, vec![d], pos),
            ExprKind::Str(s) => {
                let id = self.intern(s);
                self.emit(Opcode::ConstStr, vec![d, Operand::Str(id)], pos)
            }
            _ => return Ok(false),
        }
        Ok(true)
    }

    /// Evaluates `e`. With `want`, the result is written there; otherwise
    /// it lands in a temporary or, for a plain name, is read in place.
    fn expr(&mut self, e: &Expr, want: Option<Var>) -> Result<Var, CompileError> {
        let pos = e.pos;
        if let ExprKind::Name(n) = &e.kind {
            let v = self.lookup(n, pos)?;
            return Ok(match want {
                Some(d) if d != v => {
                    self.emit(Opcode::Move, vec![Operand::Var(d), Operand::Var(v)], pos);
                    d
                }
                _ => v,
            });
        }
        let dst = match want {
            Some(d) => d,
            None => self.temp(),
        };
        if self.literal_into(e, dst)? {
            return Ok(dst);
        }
        match &e.kind {
            ExprKind::List(items) => {
                let vars = self.operands(items)?;
                let mut ops = vec![Operand::Var(dst), Operand::Const(vars.len() as u32)];
                ops.extend(vars.into_iter().map(Operand::Var));
                self.emit(Opcode::MakeList, ops, pos);
            }
            ExprKind::Binary { op: op @ (BinOp::And | BinOp::Or), lhs, rhs } => {
                // computed in a temporary: `dst` may be read by `rhs`
                let t = self.temp();
                let end = self.label();
                self.expr(lhs, Some(t))?;
                let jump = if *op == BinOp::And { Opcode::JumpIfFalse } else { Opcode::JumpIfTrue };
                self.emit(jump, vec![Operand::Var(t), Operand::Jump(end)], pos);
                self.expr(rhs, Some(t))?;
                self.place(end);
                self.emit(Opcode::Move, vec![Operand::Var(dst), Operand::Var(t)], pos);
            }
            ExprKind::Binary { op, lhs, rhs } => {
                let a = self.expr(lhs, None)?;
                let a = if has_call(rhs) { self.snapshot(a) } else { a };
                let b = self.expr(rhs, None)?;
                self.emit(
                    Opcode::Binary,
                    vec![Operand::Var(dst), Operand::Op(binary_code(*op) as u8), Operand::Var(a), Operand::Var(b)],
                    pos,
                );
            }
            ExprKind::Unary { op, operand } => {
                if let (UnOp::Neg, ExprKind::Int(v)) = (op, &operand.kind) {
                    let neg = v.checked_neg().ok_or_else(|| invalid(pos, "integer literal out of range"))?;
                    self.emit(Opcode::ConstInt, vec![Operand::Var(dst), Operand::Const(neg as u32)], pos);
                    return Ok(dst);
                }
                if let (UnOp::Neg, ExprKind::Real(v)) = (op, &operand.kind) {
                    self.emit(Opcode::ConstReal, vec![Operand::Var(dst), Operand::Const((-v).to_bits())], pos);
                    return Ok(dst);
                }
                let a = self.expr(operand, None)?;
                self.emit(
                    Opcode::Unary,
                    vec![Operand::Var(dst), Operand::Op(unary_code(*op) as u8), Operand::Var(a)],
                    pos,
                );
            }
            ExprKind::Index { seq, index } => {
                let s = self.expr(seq, None)?;
                let s = if has_call(index) { self.snapshot(s) } else { s };
                let i = self.expr(index, None)?;
                self.emit(Opcode::Index, vec![Operand::Var(dst), Operand::Var(s), Operand::Var(i)], pos);
            }
            ExprKind::Call { func, args } => self.call(func, args, dst, pos)?,
            ExprKind::MethodCall { receiver, method, args } => {
                if method != "append" {
                    return Err(unsupported(pos, format!("method '.{method}()'; only list append is available")));
                }
                if args.len() != 1 {
                    return Err(CompileError::Arity {
                        pos,
                        name: "append".into(),
                        expected: "1".into(),
                        given: args.len(),
                    });
                }
                let mut all = vec![(**receiver).clone()];
                all.extend(args.iter().cloned());
                let vars = self.operands(&all)?;
                let mut ops = vec![Operand::Var(dst), Operand::Op(Intrinsic::Append.code()), Operand::Op(2)];
                ops.extend(vars.into_iter().map(Operand::Var));
                self.emit(Opcode::Intrinsic, ops, pos);
            }
            ExprKind::Name(_) | ExprKind::Int(_) | ExprKind::Real(_) | ExprKind::Str(_) | ExprKind::Bool(_) | ExprKind::None => {
                unreachable!()
            }
        }
        Ok(dst)
    }

    fn call(&mut self, func: &str, args: &[Expr], dst: Var, pos: Pos) -> Result<(), CompileError> {
        let callee = match self.ctx.functions.get(func) {
            Some(c) => c.clone(),
            None => match Intrinsic::builtin(func) {
                Some(i) => Callee::Intrinsic(i),
                None if func == "range" => return Err(unsupported(pos, "range() outside a for loop header")),
                None => return Err(CompileError::UndefinedFunction { pos, name: func.to_string() }),
            },
        };
        if args.len() > u8::MAX as usize {
            return Err(unsupported(pos, "calls with more than 255 arguments"));
        }
        match callee {
            Callee::Intrinsic(i) => {
                let (min, max) = i.arity();
                if args.len() < min || args.len() > max {
                    let expected = if min == max { min.to_string() } else { format!("{min} to {max}") };
                    return Err(CompileError::Arity { pos, name: func.to_string(), expected, given: args.len() });
                }
                let vars = self.operands(args)?;
                let mut ops = vec![Operand::Var(dst), Operand::Op(i.code()), Operand::Op(vars.len() as u8)];
                ops.extend(vars.into_iter().map(Operand::Var));
                self.emit(Opcode::Intrinsic, ops, pos);
            }
            Callee::User { index, def } => {
                let required = def.params.iter().take_while(|p| p.default.is_none()).count();
                if args.len() < required || args.len() > def.params.len() {
                    let expected = if required == def.params.len() {
                        required.to_string()
                    } else {
                        format!("{required} to {}", def.params.len())
                    };
                    return Err(CompileError::Arity { pos, name: func.to_string(), expected, given: args.len() });
                }
                let mut all: Vec<Expr> = args.to_vec();
                for p in &def.params[args.len()..] {
                    all.push(p.default.clone().expect("checked above"));
                }
                let vars = self.operands(&all)?;
                let mut ops = vec![Operand::Var(dst), Operand::Func(index), Operand::Op(vars.len() as u8)];
                ops.extend(vars.into_iter().map(Operand::Var));
                self.emit(Opcode::Call, ops, pos);
            }
        }
        Ok(())
    }

    /// Jumps to `label` when the truth of `e` equals `when`.
    fn cond_jump(&mut self, e: &Expr, when: bool, label: usize) -> Result<(), CompileError> {
        match &e.kind {
            ExprKind::Binary { op: BinOp::And, lhs, rhs } => {
                if when {
                    let skip = self.label();
                    self.cond_jump(lhs, false, skip)?;
                    self.cond_jump(rhs, true, label)?;
                    self.place(skip);
                } else {
                    self.cond_jump(lhs, false, label)?;
                    self.cond_jump(rhs, false, label)?;
                }
            }
            ExprKind::Binary { op: BinOp::Or, lhs, rhs } => {
                if when {
                    self.cond_jump(lhs, true, label)?;
                    self.cond_jump(rhs, true, label)?;
                } else {
                    let skip = self.label();
                    self.cond_jump(lhs, true, skip)?;
                    self.cond_jump(rhs, false, label)?;
                    self.place(skip);
                }
            }
            ExprKind::Unary { op: UnOp::Not, operand } => self.cond_jump(operand, !when, label)?,
            _ => {
                let mark = self.next_temp;
                let v = self.expr(e, None)?;
                let op = if when { Opcode::JumpIfTrue } else { Opcode::JumpIfFalse };
                self.emit(op, vec![Operand::Var(v), Operand::Jump(label)], e.pos);
                self.next_temp = mark;
            }
        }
        Ok(())
    }
}

fn literal_int(e: &Expr) -> Option<i32> {
    match &e.kind {
        ExprKind::Int(v) => Some(*v),
        ExprKind::Unary { op: UnOp::Neg, operand } => match operand.kind {
            ExprKind::Int(v) => v.checked_neg(),
            _ => None,
        },
        ExprKind::Unary { op: UnOp::Plus, operand } => literal_int(operand),
        _ => None,
    }
}

fn layout(ctx: &Ctx<'_>, units: &[Unit]) -> Result<ProgramImage, CompileError> {
    // The top level has no frame: its temporaries are extra global slots
    // after the named ones.
    let main = units.len() - 1;
    let named = ctx.globals.len();
    let global_count = named + units[main].locals as usize;
    if global_count > u16::MAX as usize {
        return Err(CompileError::TooManyVariables { pos: units[main].pos, count: global_count });
    }
    for u in &units[..main] {
        let count = global_count + u.locals as usize;
        if count > u16::MAX as usize + 1 {
            return Err(CompileError::TooManyVariables { pos: u.pos, count });
        }
    }
    let header = |i: usize| if i == main { 0 } else { 1 + 4 + 4 };

    let mut string_addr = Vec::with_capacity(ctx.strings.len());
    let mut offset = 0usize;
    for s in &ctx.strings {
        string_addr.push(offset as u32);
        offset += 1 + 4 + s.len().div_ceil(4) * 4;
    }
    let mut label_addr: HashMap<usize, usize> = HashMap::new();
    let mut unit_addr = Vec::with_capacity(units.len());
    for (i, u) in units.iter().enumerate() {
        unit_addr.push(offset as u32);
        offset += header(i);
        for item in &u.items {
            if let Item::Label(l) = item {
                label_addr.insert(*l, offset);
            }
            offset += item.size();
        }
    }
    if offset > u32::MAX as usize {
        return Err(invalid(Pos::default(), "code image larger than 4GB"));
    }

    let mut code = Vec::with_capacity(offset);
    for s in &ctx.strings {
        code.push(Opcode::String as u8);
        write_operand(&mut code, OperandKind::Const, s.len() as u32);
        let mut padded = s.clone();
        padded.resize(s.len().div_ceil(4) * 4, 0);
        code.extend_from_slice(&padded);
    }
    for (i, u) in units.iter().enumerate() {
        let local_base = if i == main { named as u32 } else { global_count as u32 };
        if i != main {
            code.push(Opcode::Function as u8);
            write_operand(&mut code, OperandKind::Const, u.params);
            write_operand(&mut code, OperandKind::Const, u.locals);
        }
        for item in &u.items {
            let Item::Instr { op, operands, pos } = item else { continue };
            let next = code.len() + item.size();
            code.push(*op as u8);
            for o in operands {
                let value = match *o {
                    Operand::Var(Var::Global(g)) => g as u32,
                    Operand::Var(Var::Local(l)) => local_base + l,
                    Operand::Op(b) => b as u32,
                    Operand::Const(c) => c,
                    Operand::Func(i) => unit_addr[i],
                    Operand::Str(i) => string_addr[i],
                    Operand::Jump(l) => {
                        let displacement = label_addr[&l] as i64 - next as i64;
                        if displacement < i16::MIN as i64 || displacement > i16::MAX as i64 {
                            return Err(CompileError::JumpOutOfRange { pos: *pos, displacement });
                        }
                        displacement as i16 as u16 as u32
                    }
                };
                write_operand(&mut code, o.kind(), value);
            }
            debug_assert_eq!(code.len(), next);
        }
    }
    debug_assert_eq!(code.len(), offset);

    let symbols = Symbols {
        globals: ctx.globals.clone(),
        functions: units[..main].iter().zip(&unit_addr).map(|(u, a)| (u.name.clone(), *a)).collect(),
    };
    Ok(ProgramImage { global_count: global_count as u16, code, entry: unit_addr[main], symbols: Some(symbols) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bytecode::{decode_all, disassemble};
    use crate::frontend::{parse_source, resolve_imports};

    fn build(src: &str) -> Result<ProgramImage, CompileError> {
        compile(&resolve_imports(parse_source(src).unwrap()).unwrap())
    }

    #[test]
    fn empty_module_is_a_single_stop() {
        let img = build("").unwrap();
        assert_eq!(img.global_count, 0);
        assert_eq!(img.code, vec![Opcode::Stop as u8]);
        assert_eq!(img.entry, 0);
        let text = disassemble(&img).unwrap();
        let lines: Vec<&str> = text.lines().filter(|l| !l.starts_with(';')).collect();
        assert_eq!(lines, vec!["000000  STOP"]);
    }

    #[test]
    fn while_condition_lowers_to_conditional_jump() {
        let img = build("n=1.0\nits=0\nwhile n >= 1e-3 and its < 10:\n  n=n/2\n  its+=1\n").unwrap();
        let code = decode_all(&img.code).unwrap();
        let ge = code.iter().position(|d| d.opcode == Opcode::Binary && d.operands[1] == BinaryOp::Ge as u32).unwrap();
        let j = &code[ge + 1];
        assert_eq!(j.opcode, Opcode::JumpIfFalse);
        assert_eq!(j.operands[0], code[ge].operands[0]);
        assert_eq!(j.len, 1 + 2 + 2);
        assert!(j.jump_target(j.operands[1]) > j.offset as i64);
    }

    #[test]
    fn constants_are_four_byte_values() {
        let img = build("a=-7\nb=1.5\n").unwrap();
        let code = decode_all(&img.code).unwrap();
        assert_eq!(code[0].opcode, Opcode::ConstInt);
        assert_eq!(code[0].operands[1] as i32, -7);
        assert_eq!(code[1].opcode, Opcode::ConstReal);
        assert_eq!(f32::from_bits(code[1].operands[1]), 1.5);
    }

    #[test]
    fn locals_follow_globals() {
        let img = build("g=1\ndef f(a):\n  b=a+g\n  return b\nprint f(2)\n").unwrap();
        let sym = img.symbols.as_ref().unwrap();
        assert_eq!(sym.globals, vec!["g"]);
        let code = decode_all(&img.code).unwrap();
        let add = code.iter().find(|d| d.opcode == Opcode::Binary).unwrap();
        // b (local 1) = a (local 0) + g (global 0)
        let gc = img.global_count as u32;
        assert_eq!(add.operands, vec![gc + 1, BinaryOp::Add as u32, gc, 0]);
    }

    #[test]
    fn jump_out_of_range() {
        let mut src = String::from("i=0\nwhile i < 1:\n");
        for _ in 0..4000 {
            src.push_str("  i=i+1+2+3\n");
        }
        match build(&src) {
            Err(CompileError::JumpOutOfRange { displacement, .. }) => assert!(displacement.abs() > i16::MAX as i64),
            other => panic!("expected a range error, got {other:?}"),
        }
    }

    #[test]
    fn too_many_variables() {
        let src: String = (0..65536).map(|i| format!("v{i}=0\n")).collect();
        assert!(matches!(build(&src), Err(CompileError::TooManyVariables { .. })));
    }

    #[test]
    fn name_and_arity_errors() {
        assert!(matches!(build("print y\n"), Err(CompileError::UndefinedName { .. })));
        assert!(matches!(build("print nope(1)\n"), Err(CompileError::UndefinedFunction { .. })));
        assert!(matches!(build("def f(a):\n  return a\nprint f()\n"), Err(CompileError::Arity { .. })));
        assert!(matches!(build("print len(1, 2)\n"), Err(CompileError::Arity { .. })));
        assert!(matches!(build("return 1\n"), Err(CompileError::Invalid { .. })));
        assert!(matches!(build("break\n"), Err(CompileError::Invalid { .. })));
        assert!(matches!(build("x=range(3)\n"), Err(CompileError::Unsupported { .. })));
        assert!(matches!(build("def f():\n  return 1\nx=f\n"), Err(CompileError::Unsupported { .. })));
    }

    #[test]
    fn defaults_filled_at_call_site() {
        let img = build("def f(a, b=none):\n  return a\nprint f(1)\n").unwrap();
        let call = decode_all(&img.code).unwrap().into_iter().find(|d| d.opcode == Opcode::Call).unwrap();
        assert_eq!(call.operands[2], 2);
    }

    #[test]
    fn string_literals_are_pooled_first() {
        let img = build("print \"hi\"\nprint \"hi\"\nprint \"there\"\n").unwrap();
        let code = decode_all(&img.code).unwrap();
        assert_eq!(code[0].opcode, Opcode::String);
        assert_eq!(code[1].opcode, Opcode::String);
        assert_eq!(code[2].offset, img.entry);
    }
}
