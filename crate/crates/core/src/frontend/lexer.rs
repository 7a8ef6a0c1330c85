//! Tokenizer with Python-style indentation tracking.

use std::fmt;

use super::{FrontendError, Pos};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Keyword {
    From,
    Import,
    Def,
    If,
    Elif,
    Else,
    While,
    For,
    In,
    Return,
    Print,
    And,
    Or,
    Not,
    Is,
    None,
    True,
    False,
    Pass,
    Break,
    Continue,
    Global,
    // Recognised only to reject them with a useful message.
    Class,
    Lambda,
    Try,
    Except,
    With,
    Yield,
}

impl Keyword {
    fn lookup(word: &str) -> Option<Keyword> {
        use Keyword::*;
        Some(match word {
            "from" => From,
            "import" => Import,
            "def" => Def,
            "if" => If,
            "elif" => Elif,
            "else" => Else,
            "while" => While,
            "for" => For,
            "in" => In,
            "return" => Return,
            "print" => Print,
            "and" => And,
            "or" => Or,
            "not" => Not,
            "is" => Is,
            "none" | "None" => None,
            "True" => True,
            "False" => False,
            "pass" => Pass,
            "break" => Break,
            "continue" => Continue,
            "global" => Global,
            "class" => Class,
            "lambda" => Lambda,
            "try" => Try,
            "except" => Except,
            "with" => With,
            "yield" => Yield,
            _ => return Option::None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TokenKind {
    Keyword(Keyword),
    Identifier,
    Int(i32),
    Real(f32),
    Str(String),
    Operator,
    Newline,
    Indent,
    Dedent,
    Eof,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub kind: TokenKind,
    /// Source text of the token; empty for synthesized layout tokens.
    pub lexeme: String,
    pub pos: Pos,
}

impl Token {
    pub fn is_op(&self, op: &str) -> bool {
        self.kind == TokenKind::Operator && self.lexeme == op
    }

    pub fn is_keyword(&self, kw: Keyword) -> bool {
        self.kind == TokenKind::Keyword(kw)
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            TokenKind::Newline => f.write_str("end of line"),
            TokenKind::Indent => f.write_str("indent"),
            TokenKind::Dedent => f.write_str("dedent"),
            TokenKind::Eof => f.write_str("end of file"),
            _ => write!(f, "'{}'", self.lexeme),
        }
    }
}

// Longest first so maximal munch works with a linear scan.
const OPERATORS: &[&str] = &[
    "**=", "//=", "**", "//", "==", "!=", "<=", ">=", "+=", "-=", "*=", "/=", "%=", "+", "-", "*",
    "/", "%", "<", ">", "=", "(", ")", "[", "]", ",", ":", ".", "{", "}",
];

/// Splits `source` into tokens, synthesizing newline/indent/dedent tokens.
pub fn tokenize(source: &str) -> Result<Vec<Token>, FrontendError> {
    Lexer::new(source).run()
}

struct Lexer {
    chars: Vec<char>,
    idx: usize,
    line: u32,
    col: u32,
    indents: Vec<u32>,
    depth: u32,
    out: Vec<Token>,
}

impl Lexer {
    fn new(src: &str) -> Self {
        Lexer {
            chars: src.chars().collect(),
            idx: 0,
            line: 1,
            col: 1,
            indents: vec![0],
            depth: 0,
            out: Vec::new(),
        }
    }

    fn pos(&self) -> Pos {
        Pos::new(self.line, self.col)
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.idx).copied()
    }

    fn peek_at(&self, n: usize) -> Option<char> {
        self.chars.get(self.idx + n).copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.idx += 1;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn push(&mut self, kind: TokenKind, lexeme: impl Into<String>, pos: Pos) {
        self.out.push(Token { kind, lexeme: lexeme.into(), pos });
    }

    fn run(mut self) -> Result<Vec<Token>, FrontendError> {
        let mut at_line_start = true;
        while self.peek().is_some() {
            if at_line_start && self.depth == 0 {
                if self.layout()? {
                    continue;
                }
                at_line_start = false;
            }
            let c = self.peek().unwrap();
            match c {
                '\n' => {
                    let pos = self.pos();
                    self.bump();
                    if self.depth == 0 {
                        self.push(TokenKind::Newline, "", pos);
                        at_line_start = true;
                    }
                }
                ' ' | '\r' | '\t' => {
                    self.bump();
                }
                '#' => self.skip_comment(),
                '\\' if self.peek_at(1) == Some('\n') => {
                    self.bump();
                    self.bump();
                }
                '"' | '\'' => self.string()?,
                c if c.is_ascii_digit() || (c == '.' && self.peek_at(1).is_some_and(|d| d.is_ascii_digit())) => {
                    self.number()?
                }
                c if c.is_alphabetic() || c == '_' => self.word(),
                _ => self.operator()?,
            }
        }
        let pos = self.pos();
        if self.out.last().is_some_and(|t| !matches!(t.kind, TokenKind::Newline | TokenKind::Dedent)) {
            self.push(TokenKind::Newline, "", pos);
        }
        while self.indents.len() > 1 {
            self.indents.pop();
            self.push(TokenKind::Dedent, "", pos);
        }
        self.push(TokenKind::Eof, "", pos);
        Ok(self.out)
    }

    /// Handles leading whitespace. Returns true when the line was blank or a
    /// comment and has been consumed entirely.
    fn layout(&mut self) -> Result<bool, FrontendError> {
        let start = self.pos();
        let mut width = 0u32;
        while let Some(c) = self.peek() {
            match c {
                ' ' => width += 1,
                '\t' => {
                    return Err(FrontendError::lex(self.pos(), "tab characters are not allowed in indentation"))
                }
                '\r' => {}
                _ => break,
            }
            self.bump();
        }
        match self.peek() {
            None => return Ok(true),
            Some('\n') => {
                self.bump();
                return Ok(true);
            }
            Some('#') => {
                self.skip_comment();
                if self.peek() == Some('\n') {
                    self.bump();
                }
                return Ok(true);
            }
            _ => {}
        }
        let current = *self.indents.last().unwrap();
        if width > current {
            self.indents.push(width);
            self.push(TokenKind::Indent, " ".repeat((width - current) as usize), start);
        } else if width < current {
            while *self.indents.last().unwrap() > width {
                self.indents.pop();
                self.push(TokenKind::Dedent, "", self.pos());
            }
            if *self.indents.last().unwrap() != width {
                return Err(FrontendError::lex(
                    self.pos(),
                    "inconsistent indentation: dedent does not match any outer level",
                ));
            }
        }
        Ok(false)
    }

    fn skip_comment(&mut self) {
        while self.peek().is_some_and(|c| c != '\n') {
            self.bump();
        }
    }

    fn string(&mut self) -> Result<(), FrontendError> {
        let pos = self.pos();
        let quote = self.bump().unwrap();
        let mut lexeme = String::from(quote);
        let mut value = String::new();
        loop {
            match self.bump() {
                None | Some('\n') => return Err(FrontendError::lex(pos, "unterminated string literal")),
                Some(c) if c == quote => {
                    lexeme.push(c);
                    break;
                }
                Some('\\') => {
                    lexeme.push('\\');
                    let esc = self.bump().ok_or_else(|| FrontendError::lex(pos, "unterminated string literal"))?;
                    lexeme.push(esc);
                    let decoded = match esc {
                        'n' => '\n',
                        't' => '\t',
                        'r' => '\r',
                        '0' => '\0',
                        '\\' => '\\',
                        '\'' => '\'',
                        '"' => '"',
                        other => {
                            value.push('\\');
                            other
                        }
                    };
                    value.push(decoded);
                }
                Some(c) => {
                    lexeme.push(c);
                    value.push(c);
                }
            }
        }
        self.push(TokenKind::Str(value), lexeme, pos);
        Ok(())
    }

    fn number(&mut self) -> Result<(), FrontendError> {
        let pos = self.pos();
        let mut text = String::new();
        let mut real = false;
        while let Some(c) = self.peek() {
            if c.is_ascii_digit() {
                text.push(c);
            } else if c == '.' && !real {
                real = true;
                text.push(c);
            } else if (c == 'e' || c == 'E')
                && (self.peek_at(1).is_some_and(|d| d.is_ascii_digit())
                    || (matches!(self.peek_at(1), Some('+' | '-'))
                        && self.peek_at(2).is_some_and(|d| d.is_ascii_digit())))
            {
                real = true;
                text.push(c);
                self.bump();
                text.push(self.bump().unwrap());
                continue;
            } else {
                break;
            }
            self.bump();
        }
        if self.peek().is_some_and(|c| c.is_alphabetic() || c == '_') {
            return Err(FrontendError::lex(self.pos(), format!("invalid character in number literal '{text}'")));
        }
        let kind = if real {
            let v: f32 = text
                .parse()
                .map_err(|_| FrontendError::lex(pos, format!("malformed real literal '{text}'")))?;
            TokenKind::Real(v)
        } else {
            let v: i32 = text
                .parse()
                .map_err(|_| FrontendError::lex(pos, format!("integer literal '{text}' does not fit in 4 bytes")))?;
            TokenKind::Int(v)
        };
        self.push(kind, text, pos);
        Ok(())
    }

    fn word(&mut self) {
        let pos = self.pos();
        let mut text = String::new();
        while let Some(c) = self.peek() {
            if c.is_alphanumeric() || c == '_' {
                text.push(c);
                self.bump();
            } else {
                break;
            }
        }
        let kind = match Keyword::lookup(&text) {
            Some(kw) => TokenKind::Keyword(kw),
            None => TokenKind::Identifier,
        };
        self.push(kind, text, pos);
    }

    fn operator(&mut self) -> Result<(), FrontendError> {
        let pos = self.pos();
        for op in OPERATORS {
            if op.chars().enumerate().all(|(i, c)| self.peek_at(i) == Some(c)) {
                for _ in 0..op.len() {
                    self.bump();
                }
                match *op {
                    "(" | "[" | "{" => self.depth += 1,
                    ")" | "]" | "}" => self.depth = self.depth.saturating_sub(1),
                    _ => {}
                }
                self.push(TokenKind::Operator, *op, pos);
                return Ok(());
            }
        }
        let c = self.peek().unwrap();
        Err(FrontendError::lex(pos, format!("illegal character '{c}'")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(src: &str) -> Vec<TokenKind> {
        tokenize(src).unwrap().into_iter().map(|t| t.kind).collect()
    }

    #[test]
    fn minimal_assignment() {
        let toks = tokenize("a=1").unwrap();
        let summary: Vec<_> = toks.iter().map(|t| (t.kind.clone(), t.lexeme.as_str())).collect();
        assert_eq!(
            summary,
            vec![
                (TokenKind::Identifier, "a"),
                (TokenKind::Operator, "="),
                (TokenKind::Int(1), "1"),
                (TokenKind::Newline, ""),
                (TokenKind::Eof, ""),
            ]
        );
    }

    #[test]
    fn print_statement_tokens() {
        let toks = tokenize("print \"Hello world from core \"+str(coreid())").unwrap();
        assert!(toks[0].is_keyword(Keyword::Print));
        assert_eq!(toks[1].kind, TokenKind::Str("Hello world from core ".into()));
        assert!(toks[2].is_op("+"));
        assert_eq!((toks[3].kind.clone(), toks[3].lexeme.as_str()), (TokenKind::Identifier, "str"));
        assert_eq!((toks[5].kind.clone(), toks[5].lexeme.as_str()), (TokenKind::Identifier, "coreid"));
    }

    #[test]
    fn dedent_to_unopened_column_is_rejected() {
        let err = tokenize("  x=1\n x=2").unwrap_err();
        assert_eq!(err.pos().line, 2);
    }

    #[test]
    fn tabs_in_indentation_are_rejected() {
        let err = tokenize("if a:\n\tb=1\n").unwrap_err();
        assert!(err.to_string().contains("tab"));
    }

    #[test]
    fn unterminated_string() {
        let err = tokenize("x = \"abc\ny=1").unwrap_err();
        assert_eq!((err.pos().line, err.pos().column), (1, 5));
    }

    #[test]
    fn illegal_character() {
        let err = tokenize("x = 1 $ 2").unwrap_err();
        assert_eq!(err.pos().column, 7);
    }

    #[test]
    fn indentation_is_balanced_and_blank_lines_ignored() {
        let k = kinds("if a:\n  b=1\n\n  # note\n  if c:\n    d=2\ne=3\n");
        let indents = k.iter().filter(|k| **k == TokenKind::Indent).count();
        let dedents = k.iter().filter(|k| **k == TokenKind::Dedent).count();
        assert_eq!(indents, 2);
        assert_eq!(indents, dedents);
        assert_eq!(*k.last().unwrap(), TokenKind::Eof);
    }

    #[test]
    fn brackets_join_lines() {
        let k = kinds("x = [1,\n     2]\n");
        assert_eq!(k.iter().filter(|k| **k == TokenKind::Newline).count(), 1);
    }

    #[test]
    fn numbers() {
        assert_eq!(kinds("1e-3")[0], TokenKind::Real(1e-3));
        assert_eq!(kinds("2.5")[0], TokenKind::Real(2.5));
        assert_eq!(kinds("10")[0], TokenKind::Int(10));
        assert!(tokenize("99999999999").is_err());
    }
}
