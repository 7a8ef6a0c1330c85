//! Host-side front end: tokenizer, parser, import resolution and a
//! source printer.

pub mod ast;
pub(crate) mod imports;
mod lexer;
mod parser;
mod printer;

use std::fmt;

use thiserror::Error;

pub use ast::Module;
pub use imports::{bundled_module_names, resolve_imports, resolve_imports_with};
pub use lexer::{tokenize, Keyword, Token, TokenKind};
pub use parser::parse;
pub use printer::print_module;

/// 1-based source location.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Pos {
    pub line: u32,
    pub column: u32,
}

impl Pos {
    pub fn new(line: u32, column: u32) -> Self {
        Pos { line, column }
    }
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrontendError {
    #[error("{pos}: lexical error: {msg}")]
    Lex { pos: Pos, msg: String },
    #[error("{pos}: syntax error: {msg}")]
    Syntax { pos: Pos, msg: String },
    #[error("{pos}: unsupported construct: {construct}")]
    Unsupported { pos: Pos, construct: String },
    #[error("{pos}: unknown module '{module}'")]
    UnknownModule { pos: Pos, module: String },
    #[error("{pos}: module '{module}' has no function '{name}'")]
    UnknownName { pos: Pos, module: String, name: String },
    #[error("{pos}: duplicate definition of '{name}'")]
    Duplicate { pos: Pos, name: String },
    #[error("in module '{module}': {source}")]
    InModule {
        module: String,
        #[source]
        source: Box<FrontendError>,
    },
}

impl FrontendError {
    pub(crate) fn lex(pos: Pos, msg: impl Into<String>) -> Self {
        FrontendError::Lex { pos, msg: msg.into() }
    }

    pub(crate) fn syntax(pos: Pos, msg: impl Into<String>) -> Self {
        FrontendError::Syntax { pos, msg: msg.into() }
    }

    pub(crate) fn unsupported(pos: Pos, construct: impl Into<String>) -> Self {
        FrontendError::Unsupported { pos, construct: construct.into() }
    }

    pub fn pos(&self) -> Pos {
        match self {
            FrontendError::Lex { pos, .. }
            | FrontendError::Syntax { pos, .. }
            | FrontendError::Unsupported { pos, .. }
            | FrontendError::UnknownModule { pos, .. }
            | FrontendError::UnknownName { pos, .. }
            | FrontendError::Duplicate { pos, .. } => *pos,
            FrontendError::InModule { source, .. } => source.pos(),
        }
    }
}

/// `tokenize` followed by `parse`.
pub fn parse_source(source: &str) -> Result<Module, FrontendError> {
    parse(&tokenize(source)?)
}
