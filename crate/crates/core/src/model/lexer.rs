use std::fmt;

use serde::{Deserialize, Serialize};

/// Location in the source text. `line` and `column` are 1-based; `offset` is a
/// byte offset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Position {
    pub offset: usize,
    pub line: usize,
    pub column: usize,
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}", self.line, self.column)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Tok {
    /// Bare word: keyword or unquoted identifier.
    Word(String),
    /// `"x"`, `` `x` `` or `[x]`.
    Quoted(String),
    /// `'x'`.
    Str(String),
    Number(String),
    Punct(char),
}

impl Tok {
    pub(crate) fn is_kw(&self, kw: &str) -> bool {
        matches!(self, Tok::Word(w) if w.eq_ignore_ascii_case(kw))
    }

    pub(crate) fn describe(&self) -> String {
        match self {
            Tok::Word(w) => w.clone(),
            Tok::Quoted(q) => format!("\"{q}\""),
            Tok::Str(s) => format!("'{s}'"),
            Tok::Number(n) => n.clone(),
            Tok::Punct(c) => c.to_string(),
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Token {
    pub tok: Tok,
    pub pos: Position,
    /// Byte offset one past the token's last character.
    pub end: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct LexError {
    pub pos: Position,
    pub found: String,
    pub message: &'static str,
}

pub(crate) fn tokenize(src: &str) -> Result<Vec<Token>, LexError> {
    let mut lx = Lexer { src, chars: src.char_indices().peekable(), line: 1, col: 1 };
    let mut out = Vec::new();
    while let Some(t) = lx.next_token()? {
        out.push(t);
    }
    Ok(out)
}

struct Lexer<'a> {
    src: &'a str,
    chars: std::iter::Peekable<std::str::CharIndices<'a>>,
    line: usize,
    col: usize,
}

impl Lexer<'_> {
    fn pos(&mut self) -> Position {
        let offset = self.chars.peek().map_or(self.src.len(), |&(i, _)| i);
        Position { offset, line: self.line, column: self.col }
    }

    fn bump(&mut self) -> Option<char> {
        let (_, c) = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn peek(&mut self) -> Option<char> {
        self.chars.peek().map(|&(_, c)| c)
    }

    fn peek2(&self) -> Option<char> {
        let mut it = self.chars.clone();
        it.next();
        it.next().map(|(_, c)| c)
    }

    fn next_token(&mut self) -> Result<Option<Token>, LexError> {
        loop {
            match self.peek() {
                None => return Ok(None),
                Some(c) if c.is_whitespace() => {
                    self.bump();
                }
                Some('-') if self.peek2() == Some('-') => {
                    while let Some(c) = self.bump() {
                        if c == '\n' {
                            break;
                        }
                    }
                }
                Some('/') if self.peek2() == Some('*') => {
                    let pos = self.pos();
                    self.bump();
                    self.bump();
                    let mut prev = ' ';
                    loop {
                        match self.bump() {
                            None => {
                                return Err(LexError { pos, found: "/*".into(), message: "unterminated comment" })
                            }
                            Some('/') if prev == '*' => break,
                            Some(c) => prev = c,
                        }
                    }
                }
                Some(_) => break,
            }
        }
        let pos = self.pos();
        let c = self.peek().expect("checked above");
        let tok = match c {
            '"' => Tok::Quoted(self.delimited('"', '"', pos)?),
            '`' => Tok::Quoted(self.delimited('`', '`', pos)?),
            '[' => Tok::Quoted(self.delimited('[', ']', pos)?),
            '\'' => Tok::Str(self.delimited('\'', '\'', pos)?),
            c if c.is_ascii_digit() || (c == '.' && self.peek2().is_some_and(|d| d.is_ascii_digit())) => {
                self.number_or_word()
            }
            c if c.is_alphabetic() || c == '_' => Tok::Word(self.word()),
            '(' | ')' | ',' | ';' | '.' | '*' | '=' | '+' | '-' | '<' | '>' | '!' | '/' | '%' | '|' => {
                self.bump();
                Tok::Punct(c)
            }
            other => {
                return Err(LexError { pos, found: other.to_string(), message: "unexpected character" });
            }
        };
        let end = self.pos().offset;
        Ok(Some(Token { tok, pos, end }))
    }

    fn delimited(&mut self, open: char, close: char, pos: Position) -> Result<String, LexError> {
        self.bump();
        let mut s = String::new();
        loop {
            match self.bump() {
                None => {
                    return Err(LexError { pos, found: open.to_string(), message: "unterminated quoted token" });
                }
                Some(c) if c == close => {
                    // A doubled closing quote is an escaped quote, except for brackets.
                    if open != '[' && self.peek() == Some(close) {
                        self.bump();
                        s.push(close);
                    } else {
                        return Ok(s);
                    }
                }
                Some(c) => s.push(c),
            }
        }
    }

    fn word(&mut self) -> String {
        let mut s = String::new();
        while let Some(c) = self.peek() {
            if c.is_alphanumeric() || c == '_' || c == '$' {
                s.push(c);
                self.bump();
            } else {
                break;
            }
        }
        s
    }

    /// Numbers, plus bare identifiers that happen to start with a digit.
    fn number_or_word(&mut self) -> Tok {
        let mut s = String::new();
        let mut seen_dot = false;
        let mut seen_exp = false;
        while let Some(c) = self.peek() {
            if c.is_ascii_digit() {
                s.push(c);
            } else if c == '.' && !seen_dot && !seen_exp {
                seen_dot = true;
                s.push(c);
            } else if (c == 'e' || c == 'E')
                && !seen_exp
                && self.peek2().is_some_and(|d| d.is_ascii_digit() || d == '+' || d == '-')
            {
                seen_exp = true;
                s.push(c);
                self.bump();
                if let Some(sign @ ('+' | '-')) = self.peek() {
                    s.push(sign);
                    self.bump();
                }
                continue;
            } else if (c.is_alphabetic() || c == '_') && !seen_dot && !seen_exp {
                s.push_str(&self.word());
                return Tok::Word(s);
            } else {
                break;
            }
            self.bump();
        }
        Tok::Number(s)
    }
}
