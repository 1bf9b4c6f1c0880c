use super::parser::ParseError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Tok {
    Ident(String),
    Int(i64),
    Str(String),
    LParen,
    RParen,
    LBracket,
    RBracket,
    Colon,
    Comma,
    Plus,
    Assign,
    /// End of statement: a newline outside brackets, or `;`.
    End,
}

#[derive(Debug, Clone)]
pub(crate) struct Token {
    pub tok: Tok,
    pub line: usize,
}

pub(crate) fn tokenize(source: &str) -> Result<Vec<Token>, ParseError> {
    let mut out = Vec::new();
    let mut chars = source.chars().peekable();
    let mut line = 1usize;
    // Newlines inside () or [] do not end a statement.
    let mut nesting = 0usize;

    while let Some(&c) = chars.peek() {
        match c {
            '\n' => {
                chars.next();
                if nesting == 0 {
                    out.push(Token { tok: Tok::End, line });
                }
                line += 1;
            }
            ';' => {
                chars.next();
                out.push(Token { tok: Tok::End, line });
            }
            c if c.is_whitespace() => {
                chars.next();
            }
            '#' => {
                while let Some(&c) = chars.peek() {
                    if c == '\n' {
                        break;
                    }
                    chars.next();
                }
            }
            '(' | '[' => {
                chars.next();
                nesting += 1;
                let tok = if c == '(' { Tok::LParen } else { Tok::LBracket };
                out.push(Token { tok, line });
            }
            ')' | ']' => {
                chars.next();
                nesting = nesting.saturating_sub(1);
                let tok = if c == ')' { Tok::RParen } else { Tok::RBracket };
                out.push(Token { tok, line });
            }
            ':' => {
                chars.next();
                out.push(Token {
                    tok: Tok::Colon,
                    line,
                });
            }
            ',' => {
                chars.next();
                out.push(Token {
                    tok: Tok::Comma,
                    line,
                });
            }
            '+' => {
                chars.next();
                out.push(Token { tok: Tok::Plus, line });
            }
            '=' => {
                chars.next();
                out.push(Token {
                    tok: Tok::Assign,
                    line,
                });
            }
            '"' => {
                chars.next();
                let mut s = String::new();
                loop {
                    match chars.next() {
                        None | Some('\n') => {
                            return Err(ParseError::new(line, "unterminated string literal"));
                        }
                        Some('"') => break,
                        Some('\\') => match chars.next() {
                            Some('"') => s.push('"'),
                            Some('\\') => s.push('\\'),
                            Some('n') => s.push('\n'),
                            Some('t') => s.push('\t'),
                            // Unknown escapes are kept verbatim so that pattern
                            // escapes such as `\d` survive.
                            Some(other) if other != '\n' => {
                                s.push('\\');
                                s.push(other);
                            }
                            _ => {
                                return Err(ParseError::new(line, "unterminated string literal"));
                            }
                        },
                        Some(other) => s.push(other),
                    }
                }
                out.push(Token {
                    tok: Tok::Str(s),
                    line,
                });
            }
            '\'' => {
                return Err(ParseError::new(line, "strings must use double quotes (\"...\")"));
            }
            '-' | '0'..='9' => {
                let mut digits = String::new();
                if c == '-' {
                    chars.next();
                    digits.push('-');
                    if !chars.peek().is_some_and(char::is_ascii_digit) {
                        return Err(ParseError::new(
                            line,
                            "`-` is only allowed as the sign of an integer literal",
                        ));
                    }
                }
                while let Some(&d) = chars.peek() {
                    if d.is_ascii_digit() {
                        digits.push(d);
                        chars.next();
                    } else {
                        break;
                    }
                }
                if chars
                    .peek()
                    .is_some_and(|c| c.is_ascii_alphabetic() || *c == '_' || *c == '.')
                {
                    return Err(ParseError::new(line, format!("malformed number `{digits}...`")));
                }
                let n = digits
                    .parse::<i64>()
                    .map_err(|_| ParseError::new(line, format!("integer `{digits}` out of range")))?;
                out.push(Token {
                    tok: Tok::Int(n),
                    line,
                });
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut ident = String::new();
                while let Some(&d) = chars.peek() {
                    if d.is_ascii_alphanumeric() || d == '_' {
                        ident.push(d);
                        chars.next();
                    } else {
                        break;
                    }
                }
                out.push(Token {
                    tok: Tok::Ident(ident),
                    line,
                });
            }
            other => {
                return Err(ParseError::new(line, format!("unexpected character `{other}`")));
            }
        }
    }
    out.push(Token { tok: Tok::End, line });
    Ok(out)
}
