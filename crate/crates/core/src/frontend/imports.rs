//! `from M import ...` resolution against the bundled modules and an
//! optional list of directories holding user modules.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::path::PathBuf;

use super::ast::*;
use super::{parse_source, FrontendError, Pos};
use crate::intrinsic::Intrinsic;
use crate::scalar::MathFn;

const UTIL_SOURCE: &str = "\
def abs(x):
  if x < 0:
    return -x
  return x

def min(a, b):
  if b < a:
    return b
  return a

def max(a, b):
  if b > a:
    return b
  return a
";

/// A module's importable definitions, in definition order.
struct Exports {
    defs: Vec<FunctionDef>,
}

impl Exports {
    fn get(&self, name: &str) -> Option<&FunctionDef> {
        self.defs.iter().find(|d| d.name == name)
    }
}

fn intrinsic_decl(i: Intrinsic) -> FunctionDef {
    FunctionDef { name: i.name().to_string(), params: Vec::new(), body: Vec::new(), intrinsic: Some(i) }
}

fn bundled(name: &str) -> Option<Result<Exports, FrontendError>> {
    let intrinsics: &[Intrinsic] = match name {
        "parallel" => &[
            Intrinsic::CoreId,
            Intrinsic::NumCores,
            Intrinsic::Send,
            Intrinsic::Recv,
            Intrinsic::SendRecv,
            Intrinsic::Reduce,
            Intrinsic::Bcast,
            Intrinsic::IsHost,
            Intrinsic::IsDevice,
        ],
        "math" => &[
            Intrinsic::Math(MathFn::Pow),
            Intrinsic::Math(MathFn::Sqrt),
            Intrinsic::Math(MathFn::Sin),
            Intrinsic::Math(MathFn::Cos),
            Intrinsic::Math(MathFn::Tan),
            Intrinsic::Math(MathFn::Log),
            Intrinsic::Math(MathFn::Exp),
        ],
        "random" => &[Intrinsic::RandInt],
        // the module a full host interpreter imports to talk to the device
        "epython" => &[Intrinsic::Send, Intrinsic::Recv, Intrinsic::Reduce],
        "util" => {
            return Some(source_exports(name, UTIL_SOURCE, &[], &mut Vec::new()));
        }
        _ => return None,
    };
    Some(Ok(Exports { defs: intrinsics.iter().copied().map(intrinsic_decl).collect() }))
}

/// Names of the modules that ship with the interpreter.
pub fn bundled_module_names() -> &'static [&'static str] {
    &["parallel", "math", "random", "util", "epython"]
}

fn source_exports(
    module: &str,
    source: &str,
    search_path: &[PathBuf],
    stack: &mut Vec<String>,
) -> Result<Exports, FrontendError> {
    let wrap = |e: FrontendError| FrontendError::InModule { module: module.to_string(), source: Box::new(e) };
    let parsed = parse_source(source).map_err(wrap)?;
    stack.push(module.to_string());
    let resolved = resolve(parsed, search_path, stack).map_err(wrap);
    stack.pop();
    let resolved = resolved?;
    let mut defs = Vec::new();
    for s in resolved.body {
        match s.kind {
            StmtKind::FunctionDef(f) => defs.push(f),
            _ => {
                return Err(wrap(FrontendError::unsupported(
                    s.pos,
                    "module-level statements other than imports and function definitions in an imported module",
                )))
            }
        }
    }
    Ok(Exports { defs })
}

fn load(
    module: &str,
    pos: Pos,
    search_path: &[PathBuf],
    stack: &mut Vec<String>,
) -> Result<Exports, FrontendError> {
    if let Some(exports) = bundled(module) {
        return exports;
    }
    if stack.iter().any(|m| m == module) {
        return Err(FrontendError::syntax(pos, format!("circular import of module '{module}'")));
    }
    for dir in search_path {
        let path = dir.join(format!("{module}.py"));
        if let Ok(source) = std::fs::read_to_string(&path) {
            return source_exports(module, &source, search_path, stack);
        }
    }
    Err(FrontendError::UnknownModule { pos, module: module.to_string() })
}

/// Splices the definitions requested by every top-level import into the
/// module, using only the bundled modules.
pub fn resolve_imports(module: Module) -> Result<Module, FrontendError> {
    resolve_imports_with(module, &[])
}

/// Like [`resolve_imports`], additionally searching `search_path` for
/// `<name>.py` user modules.
pub fn resolve_imports_with(module: Module, search_path: &[PathBuf]) -> Result<Module, FrontendError> {
    resolve(module, search_path, &mut Vec::new())
}

fn resolve(module: Module, search_path: &[PathBuf], stack: &mut Vec<String>) -> Result<Module, FrontendError> {
    let mut cache: HashMap<String, Exports> = HashMap::new();
    let mut spliced: HashSet<String> = HashSet::new();
    let mut user_defined: HashSet<String> = HashSet::new();
    for s in &module.body {
        if let StmtKind::FunctionDef(f) = &s.kind {
            if !user_defined.insert(f.name.clone()) {
                return Err(FrontendError::Duplicate { pos: s.pos, name: f.name.clone() });
            }
        }
        check_nested_imports(s, true)?;
    }

    let mut body = Vec::with_capacity(module.body.len());
    for s in module.body {
        let StmtKind::Import { module: name, names } = &s.kind else {
            body.push(s);
            continue;
        };
        if !cache.contains_key(name) {
            let exports = load(name, s.pos, search_path, stack)?;
            cache.insert(name.clone(), exports);
        }
        let exports = &cache[name];
        let requested: Vec<&str> = match names {
            ImportNames::All => exports.defs.iter().map(|d| d.name.as_str()).collect(),
            ImportNames::Names(ns) => {
                for n in ns {
                    if exports.get(n).is_none() {
                        return Err(FrontendError::UnknownName { pos: s.pos, module: name.clone(), name: n.clone() });
                    }
                }
                ns.iter().map(String::as_str).collect()
            }
        };
        for def in with_module_dependencies(exports, &requested) {
            if user_defined.contains(&def.name) {
                return Err(FrontendError::Duplicate { pos: s.pos, name: def.name.clone() });
            }
            if spliced.insert(def.name.clone()) {
                body.push(Stmt { kind: StmtKind::FunctionDef(def.clone()), pos: s.pos });
            }
        }
    }
    Ok(Module { body })
}

/// The requested definitions plus any same-module functions they call.
fn with_module_dependencies<'e>(exports: &'e Exports, requested: &[&str]) -> Vec<&'e FunctionDef> {
    let mut wanted: BTreeSet<usize> = BTreeSet::new();
    let mut work: Vec<&str> = requested.to_vec();
    while let Some(name) = work.pop() {
        let Some(idx) = exports.defs.iter().position(|d| d.name == name) else { continue };
        if !wanted.insert(idx) {
            continue;
        }
        let mut refs = Vec::new();
        for s in &exports.defs[idx].body {
            collect_stmt_refs(s, &mut refs);
        }
        work.extend(refs.into_iter().filter_map(|r| exports.get(r).map(|d| d.name.as_str())));
    }
    wanted.into_iter().map(|i| &exports.defs[i]).collect()
}

fn check_nested_imports(s: &Stmt, top: bool) -> Result<(), FrontendError> {
    match &s.kind {
        StmtKind::Import { .. } if !top => {
            Err(FrontendError::unsupported(s.pos, "imports outside the module top level"))
        }
        StmtKind::FunctionDef(f) => f.body.iter().try_for_each(|b| check_nested_imports(b, false)),
        StmtKind::If { branches, orelse } => {
            branches.iter().flat_map(|(_, b)| b).chain(orelse).try_for_each(|b| check_nested_imports(b, false))
        }
        StmtKind::While { body, .. } | StmtKind::For { body, .. } => {
            body.iter().try_for_each(|b| check_nested_imports(b, false))
        }
        _ => Ok(()),
    }
}

/// Every name referenced (called or read) anywhere in `s`.
pub(crate) fn collect_stmt_refs<'a>(s: &'a Stmt, out: &mut Vec<&'a str>) {
    match &s.kind {
        StmtKind::Import { .. } | StmtKind::Global(_) | StmtKind::Pass | StmtKind::Break | StmtKind::Continue => {}
        StmtKind::FunctionDef(f) => {
            for p in &f.params {
                if let Some(d) = &p.default {
                    collect_expr_refs(d, out);
                }
            }
            for b in &f.body {
                collect_stmt_refs(b, out);
            }
        }
        StmtKind::If { branches, orelse } => {
            for (c, b) in branches {
                collect_expr_refs(c, out);
                b.iter().for_each(|s| collect_stmt_refs(s, out));
            }
            orelse.iter().for_each(|s| collect_stmt_refs(s, out));
        }
        StmtKind::While { cond, body } => {
            collect_expr_refs(cond, out);
            body.iter().for_each(|s| collect_stmt_refs(s, out));
        }
        StmtKind::For { iter, body, .. } => {
            collect_expr_refs(iter, out);
            body.iter().for_each(|s| collect_stmt_refs(s, out));
        }
        StmtKind::Assign { target, value } | StmtKind::AugAssign { target, value, .. } => {
            if let Target::Index { seq, index } = target {
                collect_expr_refs(seq, out);
                collect_expr_refs(index, out);
            }
            collect_expr_refs(value, out);
        }
        StmtKind::Expr(e) => collect_expr_refs(e, out),
        StmtKind::Return(e) => {
            if let Some(e) = e {
                collect_expr_refs(e, out);
            }
        }
        StmtKind::Print(args) => args.iter().for_each(|a| collect_expr_refs(a, out)),
    }
}

pub(crate) fn collect_expr_refs<'a>(e: &'a Expr, out: &mut Vec<&'a str>) {
    match &e.kind {
        ExprKind::Int(_) | ExprKind::Real(_) | ExprKind::Str(_) | ExprKind::Bool(_) | ExprKind::None => {}
        ExprKind::Name(n) => out.push(n),
        ExprKind::List(items) => items.iter().for_each(|i| collect_expr_refs(i, out)),
        ExprKind::Binary { lhs, rhs, .. } => {
            collect_expr_refs(lhs, out);
            collect_expr_refs(rhs, out);
        }
        ExprKind::Unary { operand, .. } => collect_expr_refs(operand, out),
        ExprKind::Index { seq, index } => {
            collect_expr_refs(seq, out);
            collect_expr_refs(index, out);
        }
        ExprKind::Call { func, args } => {
            out.push(func);
            args.iter().for_each(|a| collect_expr_refs(a, out));
        }
        ExprKind::MethodCall { receiver, args, .. } => {
            collect_expr_refs(receiver, out);
            args.iter().for_each(|a| collect_expr_refs(a, out));
        }
    }
}
