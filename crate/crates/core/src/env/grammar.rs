//! Tokenizer for the shared `op(arg, ...)` action syntax.
//!
//! Every environment writes its actions as a lowercase operator name followed
//! by a parenthesised argument list. An argument is either an atom (a number
//! or identifier) or a bracketed list of atoms. Operator names are matched
//! case-insensitively and whitespace between tokens is ignored; nothing else
//! is tolerated.

use std::fmt;

/// Where and why an action failed to parse.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    /// Byte offset into the input where the problem was detected.
    pub position: usize,
    /// What the parser wanted to see at `position`.
    pub expected: String,
    /// What it found instead.
    pub found: String,
}

impl ParseError {
    pub fn new(position: usize, expected: impl Into<String>, found: impl Into<String>) -> Self {
        Self {
            position,
            expected: expected.into(),
            found: found.into(),
        }
    }
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "parse error at position {}: expected {}, found {}",
            self.position, self.expected, self.found
        )
    }
}

impl std::error::Error for ParseError {}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Atom {
    pub text: String,
    pub pos: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Arg {
    Atom(Atom),
    List { items: Vec<Atom>, pos: usize },
}

impl Arg {
    pub fn pos(&self) -> usize {
        match self {
            Arg::Atom(a) => a.pos,
            Arg::List { pos, .. } => *pos,
        }
    }
}

/// A parsed `op(args)` term. `op` is lowercased.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Term {
    pub op: String,
    pub op_pos: usize,
    pub args: Vec<Arg>,
    /// Position of the closing parenthesis, used for arity errors.
    pub close_pos: usize,
}

impl Term {
    pub fn expect_arity(&self, n: usize) -> Result<(), ParseError> {
        if self.args.len() == n {
            Ok(())
        } else {
            Err(ParseError::new(
                self.close_pos,
                format!("{n} argument{} for {}", if n == 1 { "" } else { "s" }, self.op),
                format!("{} argument{}", self.args.len(), if self.args.len() == 1 { "" } else { "s" }),
            ))
        }
    }

    pub fn atom(&self, i: usize) -> Result<&Atom, ParseError> {
        match &self.args[i] {
            Arg::Atom(a) => Ok(a),
            Arg::List { pos, .. } => Err(ParseError::new(*pos, "an atom", "a list")),
        }
    }

    pub fn list(&self, i: usize) -> Result<&[Atom], ParseError> {
        match &self.args[i] {
            Arg::List { items, .. } => Ok(items),
            Arg::Atom(a) => Err(ParseError::new(a.pos, "a bracketed list", format!("'{}'", a.text))),
        }
    }
}

impl Atom {
    pub fn number<T: std::str::FromStr>(&self, what: &str) -> Result<T, ParseError> {
        self.text
            .parse()
            .map_err(|_| ParseError::new(self.pos, what.to_string(), format!("'{}'", self.text)))
    }
}

struct Cursor<'a> {
    text: &'a str,
    pos: usize,
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '-'
}

impl<'a> Cursor<'a> {
    fn skip_ws(&mut self) {
        while let Some(c) = self.peek() {
            if c.is_whitespace() {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
    }

    fn peek(&self) -> Option<char> {
        self.text[self.pos..].chars().next()
    }

    fn found(&self) -> String {
        match self.peek() {
            Some(c) => format!("'{c}'"),
            None => "end of input".to_string(),
        }
    }

    fn expect(&mut self, want: char) -> Result<(), ParseError> {
        self.skip_ws();
        if self.peek() == Some(want) {
            self.pos += 1;
            Ok(())
        } else {
            Err(ParseError::new(self.pos, format!("'{want}'"), self.found()))
        }
    }

    fn ident(&mut self, what: &str) -> Result<Atom, ParseError> {
        self.skip_ws();
        let start = self.pos;
        while let Some(c) = self.peek() {
            if is_ident_char(c) {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
        if self.pos == start {
            return Err(ParseError::new(start, what.to_string(), self.found()));
        }
        Ok(Atom {
            text: self.text[start..self.pos].to_string(),
            pos: start,
        })
    }

    fn arg(&mut self) -> Result<Arg, ParseError> {
        self.skip_ws();
        if self.peek() == Some('[') {
            let pos = self.pos;
            self.pos += 1;
            let mut items = Vec::new();
            self.skip_ws();
            if self.peek() == Some(']') {
                self.pos += 1;
                return Ok(Arg::List { items, pos });
            }
            loop {
                items.push(self.ident("a list item")?);
                self.skip_ws();
                match self.peek() {
                    Some(',') => self.pos += 1,
                    Some(']') => {
                        self.pos += 1;
                        return Ok(Arg::List { items, pos });
                    }
                    _ => return Err(ParseError::new(self.pos, "',' or ']'", self.found())),
                }
            }
        }
        self.ident("an argument").map(Arg::Atom)
    }
}

/// Parse a single `op(args)` term; the whole input must be consumed.
pub fn parse_term(text: &str) -> Result<Term, ParseError> {
    let mut cur = Cursor { text, pos: 0 };
    let op = cur.ident("an action name")?;
    cur.expect('(')?;
    let mut args = Vec::new();
    cur.skip_ws();
    if cur.peek() != Some(')') {
        loop {
            args.push(cur.arg()?);
            cur.skip_ws();
            match cur.peek() {
                Some(',') => cur.pos += 1,
                Some(')') => break,
                _ => return Err(ParseError::new(cur.pos, "',' or ')'", cur.found())),
            }
        }
    }
    let close_pos = cur.pos;
    cur.expect(')')?;
    cur.skip_ws();
    if cur.pos != text.len() {
        return Err(ParseError::new(cur.pos, "end of action", cur.found()));
    }
    Ok(Term {
        op: op.text.to_ascii_lowercase(),
        op_pos: op.pos,
        args,
        close_pos,
    })
}

/// Split a comma-separated sequence at top level, ignoring commas nested in
/// parentheses or brackets. Returns trimmed, non-empty pieces.
pub fn split_top_level(text: &str) -> Vec<String> {
    let mut parts = Vec::new();
    let mut depth: i32 = 0;
    let mut current = String::new();
    for c in text.chars() {
        match c {
            '(' | '[' => {
                depth += 1;
                current.push(c);
            }
            ')' | ']' => {
                depth -= 1;
                current.push(c);
            }
            ',' if depth == 0 => {
                parts.push(std::mem::take(&mut current));
            }
            _ => current.push(c),
        }
    }
    parts.push(current);
    parts
        .into_iter()
        .map(|p| p.trim().to_string())
        .filter(|p| !p.is_empty())
        .collect()
}
