//! The frozen pattern subset used by `find`, `findall` and `count`.
//!
//! Supported: literal characters, `.`, character classes (`[abc]`, `[a-z]`,
//! `[^...]`), the shorthand classes `\d \w \s \D \W \S`, the escapes `\n`
//! and `\t`, the quantifiers `*`, `+` and `?` (one per atom), alternation
//! `|`, grouping `( )`, and the anchors `^` / `$` (start and end of the
//! whole text). Any other metacharacter (`{`, `}`) or escape (including
//! backreferences) is rejected. A metacharacter is matched literally when
//! preceded by `\`.
//!
//! Patterns are validated against this subset and then lowered to the
//! `regex` crate, which guarantees linear-time matching.

use regex::{Regex, RegexBuilder};
use thiserror::Error;

const COMPILED_SIZE_LIMIT: usize = 1 << 20;
const META: &[char] = &[
    '.', '*', '+', '?', '|', '(', ')', '[', ']', '^', '$', '\\', '{', '}',
];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid pattern at offset {offset}: {message}")]
pub struct PatternError {
    pub offset: usize,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct Pattern {
    regex: Regex,
}

impl Pattern {
    pub fn compile(source: &str) -> Result<Self, PatternError> {
        let chars: Vec<char> = source.chars().collect();
        let mut lowering = Lowering {
            chars: &chars,
            pos: 0,
            out: String::with_capacity(source.len() * 2),
        };
        lowering.alternation(0)?;
        if lowering.pos != chars.len() {
            return Err(lowering.err("unbalanced `)`"));
        }
        let regex = RegexBuilder::new(&lowering.out)
            .size_limit(COMPILED_SIZE_LIMIT)
            .build()
            .map_err(|e| PatternError {
                offset: 0,
                message: format!("pattern too complex: {e}"),
            })?;
        Ok(Self { regex })
    }

    /// Code-point index of the first match, or -1.
    pub fn find(&self, text: &str) -> i64 {
        match self.regex.find(text) {
            Some(m) => text[..m.start()].chars().count() as i64,
            None => -1,
        }
    }

    pub fn find_all(&self, text: &str) -> Vec<String> {
        self.regex
            .find_iter(text)
            .map(|m| m.as_str().to_string())
            .collect()
    }

    /// Number of non-overlapping matches.
    pub fn count(&self, text: &str) -> i64 {
        self.regex.find_iter(text).count() as i64
    }
}

struct Lowering<'a> {
    chars: &'a [char],
    pos: usize,
    out: String,
}

impl Lowering<'_> {
    fn err(&self, message: impl Into<String>) -> PatternError {
        PatternError {
            offset: self.pos,
            message: message.into(),
        }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn alternation(&mut self, depth: usize) -> Result<(), PatternError> {
        self.sequence(depth)?;
        while self.peek() == Some('|') {
            self.pos += 1;
            self.out.push('|');
            self.sequence(depth)?;
        }
        Ok(())
    }

    fn sequence(&mut self, depth: usize) -> Result<(), PatternError> {
        while let Some(c) = self.peek() {
            match c {
                '|' => return Ok(()),
                ')' if depth > 0 => return Ok(()),
                _ => self.repeat(depth)?,
            }
        }
        Ok(())
    }

    fn repeat(&mut self, depth: usize) -> Result<(), PatternError> {
        let quantifiable = self.atom(depth)?;
        if let Some(q @ ('*' | '+' | '?')) = self.peek() {
            if !quantifiable {
                return Err(self.err(format!("`{q}` cannot follow an anchor")));
            }
            self.pos += 1;
            self.out.push(q);
            if matches!(self.peek(), Some('*' | '+' | '?')) {
                return Err(self.err("only one quantifier per atom is supported"));
            }
        }
        Ok(())
    }

    /// Emits one atom; returns whether it may take a quantifier.
    fn atom(&mut self, depth: usize) -> Result<bool, PatternError> {
        let c = self.peek().ok_or_else(|| self.err("unexpected end of pattern"))?;
        self.pos += 1;
        match c {
            '.' => self.out.push('.'),
            '^' | '$' => {
                self.out.push(c);
                return Ok(false);
            }
            '(' => {
                self.out.push_str("(?:");
                self.alternation(depth + 1)?;
                if self.peek() != Some(')') {
                    return Err(self.err("missing `)`"));
                }
                self.pos += 1;
                self.out.push(')');
            }
            '[' => self.class()?,
            '\\' => self.escape(false)?,
            '*' | '+' | '?' => {
                self.pos -= 1;
                return Err(self.err(format!("`{c}` has nothing to repeat")));
            }
            '{' | '}' => {
                self.pos -= 1;
                return Err(self.err("counted repetition `{m,n}` is not supported; escape braces as `\\{`"));
            }
            ')' | ']' => {
                self.pos -= 1;
                return Err(self.err(format!("unbalanced `{c}`")));
            }
            c => self.out.push_str(&regex::escape(&c.to_string())),
        }
        Ok(true)
    }

    fn escape(&mut self, in_class: bool) -> Result<(), PatternError> {
        let c = self.peek().ok_or_else(|| self.err("dangling `\\`"))?;
        self.pos += 1;
        match c {
            'd' | 'w' | 's' | 'D' | 'W' | 'S' => {
                self.out.push('\\');
                self.out.push(c);
            }
            'n' => self.out.push_str("\\n"),
            't' => self.out.push_str("\\t"),
            c if META.contains(&c) || c == '-' || c == '/' || c == '"' => {
                self.out.push_str(&regex::escape(&c.to_string()));
                if in_class && c == '-' {
                    // regex::escape leaves '-' bare; inside a class it must be escaped.
                    self.out.pop();
                    self.out.push_str("\\-");
                }
            }
            other => {
                self.pos -= 1;
                return Err(self.err(format!("unsupported escape `\\{other}`")));
            }
        }
        Ok(())
    }

    fn class(&mut self) -> Result<(), PatternError> {
        self.out.push('[');
        if self.peek() == Some('^') {
            self.pos += 1;
            self.out.push('^');
        }
        let mut items = 0usize;
        loop {
            let c = self.peek().ok_or_else(|| self.err("missing `]`"))?;
            match c {
                ']' => {
                    if items == 0 {
                        return Err(self.err("empty character class"));
                    }
                    self.pos += 1;
                    self.out.push(']');
                    return Ok(());
                }
                '\\' => {
                    self.pos += 1;
                    self.escape(true)?;
                }
                '[' => return Err(self.err("nested `[` in character class; escape it as `\\[`")),
                '-' if items > 0 && self.chars.get(self.pos + 1).is_some_and(|n| *n != ']') => {
                    let lo = self.chars[self.pos - 1];
                    let hi = self.chars[self.pos + 1];
                    if hi == '\\' || lo > hi {
                        return Err(self.err("invalid range in character class"));
                    }
                    self.pos += 1;
                    self.out.push('-');
                    continue;
                }
                c => {
                    self.pos += 1;
                    match c {
                        '-' | '^' | '&' | '~' => {
                            self.out.push('\\');
                            self.out.push(c);
                        }
                        c => self.out.push(c),
                    }
                }
            }
            items += 1;
        }
    }
}
