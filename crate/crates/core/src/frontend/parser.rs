//! Recursive descent parser producing a [`Module`].

use super::ast::*;
use super::lexer::{Keyword, Token, TokenKind};
use super::{FrontendError, Pos};

/// Parses a token stream (as produced by [`super::tokenize`]) into a module.
pub fn parse(tokens: &[Token]) -> Result<Module, FrontendError> {
    if !tokens.last().is_some_and(|t| t.kind == TokenKind::Eof) {
        return Err(FrontendError::syntax(
            tokens.last().map(|t| t.pos).unwrap_or_default(),
            "token stream does not end with end of file",
        ));
    }
    let mut p = Parser { toks: tokens, at: 0 };
    let mut body = Vec::new();
    while !p.check_kind(&TokenKind::Eof) {
        if p.check_kind(&TokenKind::Newline) {
            p.at += 1;
            continue;
        }
        if p.check_kind(&TokenKind::Indent) {
            return Err(FrontendError::syntax(p.peek().pos, "unexpected indent"));
        }
        body.push(p.statement()?);
    }
    Ok(Module { body })
}

struct Parser<'t> {
    toks: &'t [Token],
    at: usize,
}

type PResult<T> = Result<T, FrontendError>;

impl<'t> Parser<'t> {
    fn peek(&self) -> &'t Token {
        &self.toks[self.at.min(self.toks.len() - 1)]
    }

    fn next(&mut self) -> &'t Token {
        let t = self.peek();
        if self.at < self.toks.len() - 1 {
            self.at += 1;
        }
        t
    }

    fn check_kind(&self, kind: &TokenKind) -> bool {
        &self.peek().kind == kind
    }

    fn check_op(&self, op: &str) -> bool {
        self.peek().is_op(op)
    }

    fn check_kw(&self, kw: Keyword) -> bool {
        self.peek().is_keyword(kw)
    }

    fn eat_op(&mut self, op: &str) -> bool {
        if self.check_op(op) {
            self.at += 1;
            true
        } else {
            false
        }
    }

    fn eat_kw(&mut self, kw: Keyword) -> bool {
        if self.check_kw(kw) {
            self.at += 1;
            true
        } else {
            false
        }
    }

    fn unexpected<T>(&self, what: &str) -> PResult<T> {
        let t = self.peek();
        Err(FrontendError::syntax(t.pos, format!("expected {what}, found {t}")))
    }

    fn expect_op(&mut self, op: &str) -> PResult<()> {
        if self.eat_op(op) {
            Ok(())
        } else {
            self.unexpected(&format!("'{op}'"))
        }
    }

    fn expect_kw(&mut self, kw: Keyword, text: &str) -> PResult<()> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            self.unexpected(&format!("'{text}'"))
        }
    }

    fn identifier(&mut self) -> PResult<String> {
        if self.check_kind(&TokenKind::Identifier) {
            Ok(self.next().lexeme.clone())
        } else {
            self.unexpected("a name")
        }
    }

    fn end_of_line(&mut self) -> PResult<()> {
        match self.peek().kind {
            TokenKind::Newline => {
                self.at += 1;
                Ok(())
            }
            TokenKind::Eof | TokenKind::Dedent => Ok(()),
            _ => self.unexpected("end of line"),
        }
    }

    fn statement(&mut self) -> PResult<Stmt> {
        let tok = self.peek();
        let pos = tok.pos;
        let kind = match &tok.kind {
            TokenKind::Keyword(Keyword::Def) => self.function_def()?,
            TokenKind::Keyword(Keyword::If) => self.if_stmt()?,
            TokenKind::Keyword(Keyword::While) => {
                self.at += 1;
                let cond = self.expression()?;
                let body = self.suite()?;
                StmtKind::While { cond, body }
            }
            TokenKind::Keyword(Keyword::For) => {
                self.at += 1;
                let var = self.identifier()?;
                self.expect_kw(Keyword::In, "in")?;
                let iter = self.expression()?;
                let body = self.suite()?;
                StmtKind::For { var, iter, body }
            }
            TokenKind::Keyword(Keyword::Class) => return Err(FrontendError::unsupported(pos, "class definitions")),
            TokenKind::Keyword(Keyword::Try | Keyword::Except) => {
                return Err(FrontendError::unsupported(pos, "exception handling"))
            }
            TokenKind::Keyword(Keyword::With) => return Err(FrontendError::unsupported(pos, "with statements")),
            TokenKind::Keyword(Keyword::Yield) => return Err(FrontendError::unsupported(pos, "generators")),
            _ => {
                let kind = self.simple_statement()?;
                self.end_of_line()?;
                kind
            }
        };
        Ok(Stmt { kind, pos })
    }

    fn simple_statement(&mut self) -> PResult<StmtKind> {
        let tok = self.peek();
        let pos = tok.pos;
        Ok(match &tok.kind {
            TokenKind::Keyword(Keyword::From) => {
                self.at += 1;
                let module = self.identifier()?;
                self.expect_kw(Keyword::Import, "import")?;
                let names = if self.eat_op("*") {
                    ImportNames::All
                } else {
                    let mut names = vec![self.identifier()?];
                    while self.eat_op(",") {
                        names.push(self.identifier()?);
                    }
                    ImportNames::Names(names)
                };
                StmtKind::Import { module, names }
            }
            TokenKind::Keyword(Keyword::Import) => {
                return Err(FrontendError::unsupported(pos, "plain 'import' (use 'from module import ...')"))
            }
            TokenKind::Keyword(Keyword::Return) => {
                self.at += 1;
                if matches!(self.peek().kind, TokenKind::Newline | TokenKind::Eof | TokenKind::Dedent) {
                    StmtKind::Return(None)
                } else {
                    StmtKind::Return(Some(self.expression()?))
                }
            }
            TokenKind::Keyword(Keyword::Print) => {
                self.at += 1;
                let mut args = Vec::new();
                if !matches!(self.peek().kind, TokenKind::Newline | TokenKind::Eof | TokenKind::Dedent) {
                    args.push(self.expression()?);
                    while self.eat_op(",") {
                        args.push(self.expression()?);
                    }
                }
                StmtKind::Print(args)
            }
            TokenKind::Keyword(Keyword::Global) => {
                self.at += 1;
                let mut names = vec![self.identifier()?];
                while self.eat_op(",") {
                    names.push(self.identifier()?);
                }
                StmtKind::Global(names)
            }
            TokenKind::Keyword(Keyword::Pass) => {
                self.at += 1;
                StmtKind::Pass
            }
            TokenKind::Keyword(Keyword::Break) => {
                self.at += 1;
                StmtKind::Break
            }
            TokenKind::Keyword(Keyword::Continue) => {
                self.at += 1;
                StmtKind::Continue
            }
            TokenKind::Keyword(Keyword::Lambda) => return Err(FrontendError::unsupported(pos, "lambda expressions")),
            _ => {
                let expr = self.expression()?;
                if self.eat_op("=") {
                    let target = self.target(expr)?;
                    let value = self.expression()?;
                    if self.check_op("=") {
                        return Err(FrontendError::unsupported(self.peek().pos, "chained assignment"));
                    }
                    StmtKind::Assign { target, value }
                } else if let Some(op) = self.aug_op() {
                    let target = self.target(expr)?;
                    let value = self.expression()?;
                    StmtKind::AugAssign { target, op, value }
                } else if self.check_op(",") {
                    return Err(FrontendError::unsupported(self.peek().pos, "tuples"));
                } else {
                    StmtKind::Expr(expr)
                }
            }
        })
    }

    fn aug_op(&mut self) -> Option<BinOp> {
        let op = match self.peek().lexeme.as_str() {
            "+=" => BinOp::Add,
            "-=" => BinOp::Sub,
            "*=" => BinOp::Mul,
            "/=" => BinOp::Div,
            "//=" => BinOp::FloorDiv,
            "%=" => BinOp::Mod,
            "**=" => BinOp::Pow,
            _ => return None,
        };
        if self.peek().kind != TokenKind::Operator {
            return None;
        }
        self.at += 1;
        Some(op)
    }

    fn target(&self, expr: Expr) -> PResult<Target> {
        match expr.kind {
            ExprKind::Name(n) => Ok(Target::Name(n)),
            ExprKind::Index { seq, index } => Ok(Target::Index { seq: *seq, index: *index }),
            _ => Err(FrontendError::syntax(expr.pos, "cannot assign to this expression")),
        }
    }

    fn function_def(&mut self) -> PResult<StmtKind> {
        self.at += 1;
        let name = self.identifier()?;
        self.expect_op("(")?;
        let mut params: Vec<Param> = Vec::new();
        if !self.check_op(")") {
            loop {
                let pos = self.peek().pos;
                let pname = self.identifier()?;
                let default = if self.eat_op("=") { Some(self.expression()?) } else { None };
                if default.is_none() && params.iter().any(|p| p.default.is_some()) {
                    return Err(FrontendError::syntax(pos, "non-default parameter follows default parameter"));
                }
                if params.iter().any(|p| p.name == pname) {
                    return Err(FrontendError::syntax(pos, format!("duplicate parameter '{pname}'")));
                }
                params.push(Param { name: pname, default });
                if !self.eat_op(",") {
                    break;
                }
            }
        }
        self.expect_op(")")?;
        let body = self.suite()?;
        Ok(StmtKind::FunctionDef(FunctionDef { name, params, body, intrinsic: None }))
    }

    fn if_stmt(&mut self) -> PResult<StmtKind> {
        self.at += 1;
        let cond = self.expression()?;
        let body = self.suite()?;
        let mut branches = vec![(cond, body)];
        let mut orelse = Vec::new();
        loop {
            if self.eat_kw(Keyword::Elif) {
                let cond = self.expression()?;
                let body = self.suite()?;
                branches.push((cond, body));
            } else if self.eat_kw(Keyword::Else) {
                orelse = self.suite()?;
                break;
            } else {
                break;
            }
        }
        Ok(StmtKind::If { branches, orelse })
    }

    /// `: simple_stmt NEWLINE` or `: NEWLINE INDENT stmt+ DEDENT`.
    fn suite(&mut self) -> PResult<Vec<Stmt>> {
        self.expect_op(":")?;
        if self.check_kind(&TokenKind::Newline) {
            self.at += 1;
            while self.check_kind(&TokenKind::Newline) {
                self.at += 1;
            }
            if !self.check_kind(&TokenKind::Indent) {
                return self.unexpected("an indented block");
            }
            self.at += 1;
            let mut body = Vec::new();
            while !self.check_kind(&TokenKind::Dedent) && !self.check_kind(&TokenKind::Eof) {
                if self.check_kind(&TokenKind::Newline) {
                    self.at += 1;
                    continue;
                }
                body.push(self.statement()?);
            }
            if self.check_kind(&TokenKind::Dedent) {
                self.at += 1;
            }
            Ok(body)
        } else {
            let pos = self.peek().pos;
            let kind = self.simple_statement()?;
            self.end_of_line()?;
            Ok(vec![Stmt { kind, pos }])
        }
    }

    pub fn expression(&mut self) -> PResult<Expr> {
        self.or_expr()
    }

    fn or_expr(&mut self) -> PResult<Expr> {
        let mut lhs = self.and_expr()?;
        while self.check_kw(Keyword::Or) {
            let pos = self.next().pos;
            let rhs = self.and_expr()?;
            lhs = binary(BinOp::Or, lhs, rhs, pos);
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> PResult<Expr> {
        let mut lhs = self.not_expr()?;
        while self.check_kw(Keyword::And) {
            let pos = self.next().pos;
            let rhs = self.not_expr()?;
            lhs = binary(BinOp::And, lhs, rhs, pos);
        }
        Ok(lhs)
    }

    fn not_expr(&mut self) -> PResult<Expr> {
        if self.check_kw(Keyword::Not) {
            let pos = self.next().pos;
            let operand = self.not_expr()?;
            return Ok(Expr::new(ExprKind::Unary { op: UnOp::Not, operand: Box::new(operand) }, pos));
        }
        self.comparison()
    }

    fn comparison_op(&mut self) -> Option<BinOp> {
        let t = self.peek();
        let op = if t.is_keyword(Keyword::Is) {
            self.at += 1;
            if self.eat_kw(Keyword::Not) {
                return Some(BinOp::IsNot);
            }
            return Some(BinOp::Is);
        } else if t.kind == TokenKind::Operator {
            match t.lexeme.as_str() {
                "==" => BinOp::Eq,
                "!=" => BinOp::Ne,
                "<" => BinOp::Lt,
                "<=" => BinOp::Le,
                ">" => BinOp::Gt,
                ">=" => BinOp::Ge,
                _ => return None,
            }
        } else {
            return None;
        };
        self.at += 1;
        Some(op)
    }

    fn comparison(&mut self) -> PResult<Expr> {
        let lhs = self.additive()?;
        let pos = self.peek().pos;
        if let Some(op) = self.comparison_op() {
            let rhs = self.additive()?;
            let next = self.peek().pos;
            if self.comparison_op().is_some() {
                return Err(FrontendError::unsupported(next, "chained comparisons"));
            }
            return Ok(binary(op, lhs, rhs, pos));
        }
        if self.check_kw(Keyword::In) || (self.check_kw(Keyword::Not) && self.toks[self.at + 1].is_keyword(Keyword::In)) {
            return Err(FrontendError::unsupported(pos, "membership tests ('in')"));
        }
        Ok(lhs)
    }

    fn additive(&mut self) -> PResult<Expr> {
        let mut lhs = self.multiplicative()?;
        loop {
            let op = if self.check_op("+") {
                BinOp::Add
            } else if self.check_op("-") {
                BinOp::Sub
            } else {
                return Ok(lhs);
            };
            let pos = self.next().pos;
            let rhs = self.multiplicative()?;
            lhs = binary(op, lhs, rhs, pos);
        }
    }

    fn multiplicative(&mut self) -> PResult<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                t if t.is_op("*") => BinOp::Mul,
                t if t.is_op("/") => BinOp::Div,
                t if t.is_op("//") => BinOp::FloorDiv,
                t if t.is_op("%") => BinOp::Mod,
                _ => return Ok(lhs),
            };
            let pos = self.next().pos;
            let rhs = self.unary()?;
            lhs = binary(op, lhs, rhs, pos);
        }
    }

    fn unary(&mut self) -> PResult<Expr> {
        let op = if self.check_op("-") {
            UnOp::Neg
        } else if self.check_op("+") {
            UnOp::Plus
        } else {
            return self.power();
        };
        let pos = self.next().pos;
        let operand = self.unary()?;
        Ok(Expr::new(ExprKind::Unary { op, operand: Box::new(operand) }, pos))
    }

    fn power(&mut self) -> PResult<Expr> {
        let base = self.postfix()?;
        if self.check_op("**") {
            let pos = self.next().pos;
            // Right associative; the exponent may carry its own sign.
            let exp = self.unary()?;
            return Ok(binary(BinOp::Pow, base, exp, pos));
        }
        Ok(base)
    }

    fn postfix(&mut self) -> PResult<Expr> {
        let mut expr = self.atom()?;
        loop {
            if self.check_op("[") {
                let pos = self.next().pos;
                let index = self.expression()?;
                if self.check_op(":") {
                    return Err(FrontendError::unsupported(self.peek().pos, "slicing"));
                }
                self.expect_op("]")?;
                expr = Expr::new(ExprKind::Index { seq: Box::new(expr), index: Box::new(index) }, pos);
            } else if self.check_op("(") {
                let pos = self.peek().pos;
                let ExprKind::Name(func) = &expr.kind else {
                    return Err(FrontendError::unsupported(pos, "calling a non-name expression"));
                };
                let func = func.clone();
                let args = self.call_args()?;
                expr = Expr::new(ExprKind::Call { func, args }, expr.pos);
            } else if self.check_op(".") {
                let pos = self.next().pos;
                let method = self.identifier()?;
                if !self.check_op("(") {
                    return Err(FrontendError::unsupported(pos, "attribute access"));
                }
                let args = self.call_args()?;
                expr = Expr::new(ExprKind::MethodCall { receiver: Box::new(expr), method, args }, pos);
            } else {
                return Ok(expr);
            }
        }
    }

    fn call_args(&mut self) -> PResult<Vec<Expr>> {
        self.expect_op("(")?;
        let mut args = Vec::new();
        if !self.check_op(")") {
            loop {
                args.push(self.expression()?);
                if self.check_op("=") {
                    return Err(FrontendError::unsupported(self.peek().pos, "keyword arguments"));
                }
                if !self.eat_op(",") || self.check_op(")") {
                    break;
                }
            }
        }
        self.expect_op(")")?;
        Ok(args)
    }

    fn atom(&mut self) -> PResult<Expr> {
        let t = self.peek();
        let pos = t.pos;
        if !matches!(
            t.kind,
            TokenKind::Int(_)
                | TokenKind::Real(_)
                | TokenKind::Str(_)
                | TokenKind::Identifier
                | TokenKind::Keyword(Keyword::None | Keyword::True | Keyword::False | Keyword::Lambda)
        ) && !(t.kind == TokenKind::Operator && matches!(t.lexeme.as_str(), "(" | "[" | "{"))
        {
            return self.unexpected("an expression");
        }
        self.at += 1;
        let kind = match &t.kind {
            TokenKind::Int(v) => ExprKind::Int(*v),
            TokenKind::Real(v) => ExprKind::Real(*v),
            TokenKind::Str(s) => {
                let mut s = s.clone();
                // Adjacent literals concatenate.
                while let TokenKind::Str(more) = &self.peek().kind {
                    s.push_str(more);
                    self.at += 1;
                }
                ExprKind::Str(s)
            }
            TokenKind::Identifier => ExprKind::Name(t.lexeme.clone()),
            TokenKind::Keyword(Keyword::None) => ExprKind::None,
            TokenKind::Keyword(Keyword::True) => ExprKind::Bool(true),
            TokenKind::Keyword(Keyword::False) => ExprKind::Bool(false),
            TokenKind::Keyword(Keyword::Lambda) => return Err(FrontendError::unsupported(pos, "lambda expressions")),
            TokenKind::Operator if t.lexeme == "(" => {
                let inner = self.expression()?;
                if self.check_op(",") {
                    return Err(FrontendError::unsupported(self.peek().pos, "tuples"));
                }
                self.expect_op(")")?;
                return Ok(inner);
            }
            TokenKind::Operator if t.lexeme == "[" => {
                let mut items = Vec::new();
                if !self.check_op("]") {
                    loop {
                        items.push(self.expression()?);
                        if self.check_kw(Keyword::For) {
                            return Err(FrontendError::unsupported(self.peek().pos, "list comprehensions"));
                        }
                        if !self.eat_op(",") || self.check_op("]") {
                            break;
                        }
                    }
                }
                self.expect_op("]")?;
                ExprKind::List(items)
            }
            TokenKind::Operator if t.lexeme == "{" => return Err(FrontendError::unsupported(pos, "dictionaries and sets")),
            _ => unreachable!("filtered above"),
        };
        Ok(Expr::new(kind, pos))
    }
}

fn binary(op: BinOp, lhs: Expr, rhs: Expr, pos: Pos) -> Expr {
    Expr::new(ExprKind::Binary { op, lhs: Box::new(lhs), rhs: Box::new(rhs) }, pos)
}
