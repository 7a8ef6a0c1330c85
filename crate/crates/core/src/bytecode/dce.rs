use std::collections::{HashMap, HashSet};

use crate::frontend::ast::{Module, Stmt, StmtKind};
use crate::frontend::imports::{collect_expr_refs, collect_stmt_refs};

/// Drops every top-level function that cannot be reached from the
/// module's top-level statements. A name that is merely read (not called)
/// still counts as a reference.
pub fn eliminate_unused(module: Module) -> Module {
    let defs: HashMap<&str, &Stmt> = module
        .body
        .iter()
        .filter_map(|s| match &s.kind {
            StmtKind::FunctionDef(f) => Some((f.name.as_str(), s)),
            _ => None,
        })
        .collect();

    let mut work: Vec<&str> = Vec::new();
    for s in &module.body {
        if !matches!(s.kind, StmtKind::FunctionDef(_)) {
            collect_stmt_refs(s, &mut work);
        }
    }
    let mut live: HashSet<&str> = HashSet::new();
    while let Some(name) = work.pop() {
        let Some(def) = defs.get(name) else { continue };
        if !live.insert(name) {
            continue;
        }
        let StmtKind::FunctionDef(f) = &def.kind else { unreachable!() };
        for p in &f.params {
            if let Some(d) = &p.default {
                collect_expr_refs(d, &mut work);
            }
        }
        for b in &f.body {
            collect_stmt_refs(b, &mut work);
        }
    }
    let live: HashSet<String> = live.into_iter().map(str::to_string).collect();

    let body = module
        .body
        .into_iter()
        .filter(|s| match &s.kind {
            StmtKind::FunctionDef(f) => live.contains(&f.name),
            _ => true,
        })
        .collect();
    Module { body }
}
