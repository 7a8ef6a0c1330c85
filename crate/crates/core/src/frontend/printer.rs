use std::fmt::Write as _;

use super::ast::*;

/// Renders a module back to source. Every compound sub-expression is
/// parenthesised, so re-parsing yields the same tree shape.
pub fn print_module(module: &Module) -> String {
    let mut out = String::new();
    for s in &module.body {
        stmt(s, 0, &mut out);
    }
    out
}

fn indent(depth: usize, out: &mut String) {
    for _ in 0..depth {
        out.push_str("  ");
    }
}

fn block(body: &[Stmt], depth: usize, out: &mut String) {
    out.push_str(":\n");
    if body.is_empty() {
        indent(depth + 1, out);
        out.push_str("pass\n");
    }
    for s in body {
        stmt(s, depth + 1, out);
    }
}

fn target(t: &Target, out: &mut String) {
    match t {
        Target::Name(n) => out.push_str(n),
        Target::Index { seq, index } => {
            operand(seq, out);
            out.push('[');
            expr(index, out);
            out.push(']');
        }
    }
}

fn stmt(s: &Stmt, depth: usize, out: &mut String) {
    indent(depth, out);
    match &s.kind {
        StmtKind::Import { module, names } => {
            let _ = write!(out, "from {module} import ");
            match names {
                ImportNames::All => out.push('*'),
                ImportNames::Names(n) => out.push_str(&n.join(", ")),
            }
            out.push('\n');
        }
        StmtKind::FunctionDef(f) => {
            let _ = write!(out, "def {}(", f.name);
            for (i, p) in f.params.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                out.push_str(&p.name);
                if let Some(d) = &p.default {
                    out.push('=');
                    expr(d, out);
                }
            }
            out.push(')');
            block(&f.body, depth, out);
        }
        StmtKind::If { branches, orelse } => {
            for (i, (cond, body)) in branches.iter().enumerate() {
                if i > 0 {
                    indent(depth, out);
                    out.push_str("elif ");
                } else {
                    out.push_str("if ");
                }
                expr(cond, out);
                block(body, depth, out);
            }
            if !orelse.is_empty() {
                indent(depth, out);
                out.push_str("else");
                block(orelse, depth, out);
            }
        }
        StmtKind::While { cond, body } => {
            out.push_str("while ");
            expr(cond, out);
            block(body, depth, out);
        }
        StmtKind::For { var, iter, body } => {
            let _ = write!(out, "for {var} in ");
            expr(iter, out);
            block(body, depth, out);
        }
        StmtKind::Assign { target: t, value } => {
            target(t, out);
            out.push_str(" = ");
            expr(value, out);
            out.push('\n');
        }
        StmtKind::AugAssign { target: t, op, value } => {
            target(t, out);
            let _ = write!(out, " {}= ", op.symbol());
            expr(value, out);
            out.push('\n');
        }
        StmtKind::Expr(e) => {
            expr(e, out);
            out.push('\n');
        }
        StmtKind::Return(e) => {
            out.push_str("return");
            if let Some(e) = e {
                out.push(' ');
                expr(e, out);
            }
            out.push('\n');
        }
        StmtKind::Print(args) => {
            out.push_str("print");
            for (i, a) in args.iter().enumerate() {
                out.push_str(if i == 0 { " " } else { ", " });
                expr(a, out);
            }
            out.push('\n');
        }
        StmtKind::Global(names) => {
            let _ = writeln!(out, "global {}", names.join(", "));
        }
        StmtKind::Pass => out.push_str("pass\n"),
        StmtKind::Break => out.push_str("break\n"),
        StmtKind::Continue => out.push_str("continue\n"),
    }
}

fn quote(s: &str, out: &mut String) {
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            '\0' => out.push_str("\\0"),
            c => out.push(c),
        }
    }
    out.push('"');
}

/// Sub-expression in operand position: parenthesised unless atomic.
fn operand(e: &Expr, out: &mut String) {
    match e.kind {
        ExprKind::Binary { .. } | ExprKind::Unary { .. } => {
            out.push('(');
            expr(e, out);
            out.push(')');
        }
        _ => expr(e, out),
    }
}

fn expr(e: &Expr, out: &mut String) {
    match &e.kind {
        ExprKind::Int(v) => {
            let _ = write!(out, "{v}");
        }
        ExprKind::Real(v) => {
            let _ = write!(out, "{v:?}");
        }
        ExprKind::Str(s) => quote(s, out),
        ExprKind::Bool(b) => out.push_str(if *b { "True" } else { "False" }),
        ExprKind::None => out.push_str("none"),
        ExprKind::Name(n) => out.push_str(n),
        ExprKind::List(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                expr(item, out);
            }
            out.push(']');
        }
        ExprKind::Binary { op, lhs, rhs } => {
            operand(lhs, out);
            let _ = write!(out, " {} ", op.symbol());
            operand(rhs, out);
        }
        ExprKind::Unary { op, operand: inner } => {
            out.push_str(op.symbol());
            if *op == UnOp::Not {
                out.push(' ');
            }
            operand(inner, out);
        }
        ExprKind::Index { seq, index } => {
            operand(seq, out);
            out.push('[');
            expr(index, out);
            out.push(']');
        }
        ExprKind::MethodCall { receiver, method, args } => {
            operand(receiver, out);
            let _ = write!(out, ".{method}(");
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                expr(a, out);
            }
            out.push(')');
        }
        ExprKind::Call { func, args } => {
            out.push_str(func);
            out.push('(');
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                expr(a, out);
            }
            out.push(')');
        }
    }
}
