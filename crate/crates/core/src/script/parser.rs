use std::fmt;

use thiserror::Error;

use super::lexer::{tokenize, Tok, Token};

/// Builtin function names accepted in call position.
pub const BUILTINS: &[&str] = &[
    "len", "find", "findall", "count", "split", "lines", "join", "get", "chunk", "lower", "strip", "peek",
    "llm",
];

const COMMANDS: &[&str] = &["print", "FINAL", "FINAL_VAR"];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

impl ParseError {
    pub(crate) fn new(line: usize, message: impl Into<String>) -> Self {
        Self {
            line,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expr {
    Str(String),
    Int(i64),
    Var(String),
    /// Half-open, code-point indexed, clamped.
    Slice {
        target: Box<Expr>,
        start: i64,
        end: i64,
    },
    Concat(Box<Expr>, Box<Expr>),
    Call {
        name: String,
        args: Vec<Expr>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Statement {
    Assignment(String, Expr),
    Print(Expr),
    Final(Expr),
    FinalVar(String),
}

/// A parsed script block. Statements are kept in source order along with
/// the line each one started on.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ScriptProgram {
    pub statements: Vec<Statement>,
    pub lines: Vec<usize>,
}

impl ScriptProgram {
    pub fn len(&self) -> usize {
        self.statements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.statements.is_empty()
    }
}

pub fn parse_script(source: &str) -> Result<ScriptProgram, ParseError> {
    let tokens = tokenize(source)?;
    let mut parser = Parser { tokens, pos: 0 };
    let mut program = ScriptProgram::default();
    loop {
        while parser.peek() == &Tok::End && !parser.at_eof() {
            parser.pos += 1;
        }
        if parser.at_eof() {
            break;
        }
        let line = parser.line();
        let stmt = parser.statement()?;
        program.statements.push(stmt);
        program.lines.push(line);
    }
    Ok(program)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].tok
    }

    fn peek_at(&self, offset: usize) -> Option<&Tok> {
        self.tokens.get(self.pos + offset).map(|t| &t.tok)
    }

    fn at_eof(&self) -> bool {
        self.pos + 1 >= self.tokens.len()
    }

    fn line(&self) -> usize {
        self.tokens[self.pos].line
    }

    fn bump(&mut self) -> Tok {
        let tok = self.tokens[self.pos].tok.clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        tok
    }

    fn err(&self, message: impl Into<String>) -> ParseError {
        ParseError::new(self.line(), message)
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<(), ParseError> {
        if *self.peek() == want {
            self.bump();
            Ok(())
        } else {
            Err(self.err(format!("expected {what}, found {}", describe(self.peek()))))
        }
    }

    fn end_of_statement(&mut self) -> Result<(), ParseError> {
        if *self.peek() == Tok::End {
            self.bump();
            Ok(())
        } else {
            Err(self.err(format!(
                "expected end of statement, found {}",
                describe(self.peek())
            )))
        }
    }

    fn statement(&mut self) -> Result<Statement, ParseError> {
        let name = match self.peek() {
            Tok::Ident(name) => name.clone(),
            other => {
                return Err(self.err(format!(
                    "a statement must start with a name, found {}",
                    describe(other)
                )))
            }
        };
        let next = self.peek_at(1).cloned();
        match (name.as_str(), next) {
            ("print" | "FINAL", Some(Tok::LParen)) => {
                self.bump();
                self.bump();
                let expr = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                self.end_of_statement()?;
                Ok(if name == "print" {
                    Statement::Print(expr)
                } else {
                    Statement::Final(expr)
                })
            }
            ("FINAL_VAR", Some(Tok::LParen)) => {
                self.bump();
                self.bump();
                let var = match self.bump() {
                    Tok::Ident(v) => v,
                    other => {
                        return Err(self.err(format!(
                            "FINAL_VAR takes a variable name, found {}",
                            describe(&other)
                        )))
                    }
                };
                self.expect(Tok::RParen, "`)`")?;
                self.end_of_statement()?;
                Ok(Statement::FinalVar(var))
            }
            (_, Some(Tok::Assign)) => {
                if COMMANDS.contains(&name.as_str()) || BUILTINS.contains(&name.as_str()) {
                    return Err(self.err(format!("cannot assign to reserved name `{name}`")));
                }
                self.bump();
                self.bump();
                let expr = self.expr()?;
                self.end_of_statement()?;
                Ok(Statement::Assignment(name, expr))
            }
            (_, Some(Tok::LParen)) => {
                Err(self.err("a bare expression is not a statement; assign it or wrap it in print(...)"))
            }
            (_, other) => Err(self.err(format!(
                "expected `=` after `{name}`, found {}",
                other.as_ref().map_or("end of input", describe)
            ))),
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.postfix()?;
        while *self.peek() == Tok::Plus {
            self.bump();
            let rhs = self.postfix()?;
            lhs = Expr::Concat(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn postfix(&mut self) -> Result<Expr, ParseError> {
        let mut expr = self.primary()?;
        while *self.peek() == Tok::LBracket {
            self.bump();
            let start = self.slice_bound()?;
            self.expect(Tok::Colon, "`:` in slice")?;
            let end = self.slice_bound()?;
            self.expect(Tok::RBracket, "`]`")?;
            expr = Expr::Slice {
                target: Box::new(expr),
                start,
                end,
            };
        }
        Ok(expr)
    }

    fn slice_bound(&mut self) -> Result<i64, ParseError> {
        match self.peek() {
            Tok::Int(n) => {
                let n = *n;
                self.bump();
                Ok(n)
            }
            other => Err(self.err(format!(
                "slice bounds must be integer literals as in x[0:100], found {}",
                describe(other)
            ))),
        }
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        match self.bump() {
            Tok::Str(s) => Ok(Expr::Str(s)),
            Tok::Int(n) => Ok(Expr::Int(n)),
            Tok::Ident(name) => {
                if *self.peek() != Tok::LParen {
                    return Ok(Expr::Var(name));
                }
                if !BUILTINS.contains(&name.as_str()) {
                    return Err(self.err(format!(
                        "unknown function `{name}` (available: {})",
                        BUILTINS.join(", ")
                    )));
                }
                self.bump();
                let mut args = vec![self.expr()?];
                while *self.peek() == Tok::Comma {
                    self.bump();
                    args.push(self.expr()?);
                }
                self.expect(Tok::RParen, "`)` or `,`")?;
                Ok(Expr::Call { name, args })
            }
            other => {
                // Back up so the error reports the offending token's line.
                self.pos = self.pos.saturating_sub(1);
                Err(self.err(format!("expected an expression, found {}", describe(&other))))
            }
        }
    }
}

fn describe(tok: &Tok) -> &'static str {
    match tok {
        Tok::Ident(_) => "a name",
        Tok::Int(_) => "an integer",
        Tok::Str(_) => "a string",
        Tok::LParen => "`(`",
        Tok::RParen => "`)`",
        Tok::LBracket => "`[`",
        Tok::RBracket => "`]`",
        Tok::Colon => "`:`",
        Tok::Comma => "`,`",
        Tok::Plus => "`+`",
        Tok::Assign => "`=`",
        Tok::End => "end of statement",
    }
}

fn write_str_literal(f: &mut fmt::Formatter<'_>, s: &str) -> fmt::Result {
    f.write_str("\"")?;
    for c in s.chars() {
        match c {
            '"' => f.write_str("\\\"")?,
            '\\' => f.write_str("\\\\")?,
            '\n' => f.write_str("\\n")?,
            '\t' => f.write_str("\\t")?,
            c => write!(f, "{c}")?,
        }
    }
    f.write_str("\"")
}

/// Canonical source rendering; re-parsing it yields the same program.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Str(s) => write_str_literal(f, s),
            Expr::Int(n) => write!(f, "{n}"),
            Expr::Var(name) => f.write_str(name),
            Expr::Slice { target, start, end } => write!(f, "{target}[{start}:{end}]"),
            Expr::Concat(a, b) => write!(f, "{a} + {b}"),
            Expr::Call { name, args } => {
                write!(f, "{name}(")?;
                for (i, arg) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{arg}")?;
                }
                f.write_str(")")
            }
        }
    }
}

impl fmt::Display for Statement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Statement::Assignment(name, expr) => write!(f, "{name} = {expr}"),
            Statement::Print(expr) => write!(f, "print({expr})"),
            Statement::Final(expr) => write!(f, "FINAL({expr})"),
            Statement::FinalVar(name) => write!(f, "FINAL_VAR({name})"),
        }
    }
}

impl fmt::Display for ScriptProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for stmt in &self.statements {
            writeln!(f, "{stmt}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn var(name: &str) -> Expr {
        Expr::Var(name.into())
    }

    #[test]
    fn slice_assignment() {
        let p = parse_script("x = prompt[0:100]").unwrap();
        assert_eq!(
            p.statements,
            vec![Statement::Assignment(
                "x".into(),
                Expr::Slice {
                    target: Box::new(var("prompt")),
                    start: 0,
                    end: 100
                }
            )]
        );
    }

    #[test]
    fn final_var() {
        let p = parse_script("FINAL_VAR(answer)").unwrap();
        assert_eq!(p.statements, vec![Statement::FinalVar("answer".into())]);
    }

    #[test]
    fn double_assign_is_an_error_on_line_one() {
        let err = parse_script("x = = 5").unwrap_err();
        assert_eq!(err.line, 1);
    }

    #[test]
    fn error_line_numbers_follow_source() {
        let err = parse_script("a = 1\n\n# c\nb = frobnicate(a)").unwrap_err();
        assert_eq!(err.line, 4);
        assert!(err.message.contains("unknown function"));
    }

    #[test]
    fn concat_is_left_associative_and_slices_bind_tighter() {
        let p = parse_script(r#"y = "a" + x[1:2] + "b""#).unwrap();
        let expected = Expr::Concat(
            Box::new(Expr::Concat(
                Box::new(Expr::Str("a".into())),
                Box::new(Expr::Slice {
                    target: Box::new(var("x")),
                    start: 1,
                    end: 2,
                }),
            )),
            Box::new(Expr::Str("b".into())),
        );
        assert_eq!(p.statements, vec![Statement::Assignment("y".into(), expected)]);
    }

    #[test]
    fn statements_keep_source_order_and_lines() {
        let p = parse_script("a = 1\n\nprint(a); FINAL(a)\n").unwrap();
        assert_eq!(p.len(), 3);
        assert_eq!(p.lines, vec![1, 3, 3]);
        assert!(matches!(p.statements[2], Statement::Final(_)));
    }

    #[test]
    fn rejected_forms() {
        for src in [
            "len(prompt)",
            "x = prompt[a:3]",
            "print x",
            "len = 3",
            "FINAL_VAR(\"x\")",
            "x = (1)",
            "x = 1 2",
            "x = f(",
            "= 3",
        ] {
            assert!(parse_script(src).is_err(), "{src} should not parse");
        }
    }

    #[test]
    fn empty_and_comment_only_programs() {
        assert!(parse_script("").unwrap().is_empty());
        assert!(parse_script("# nothing\n\n").unwrap().is_empty());
    }

    fn arb_ident() -> impl Strategy<Value = String> {
        "[a-z_][a-z0-9_]{0,6}".prop_filter("reserved", |s| {
            !BUILTINS.contains(&s.as_str()) && !COMMANDS.contains(&s.as_str())
        })
    }

    fn arb_expr() -> impl Strategy<Value = Expr> {
        let leaf = prop_oneof![
            any::<String>().prop_map(Expr::Str),
            any::<i64>().prop_map(Expr::Int),
            arb_ident().prop_map(Expr::Var),
        ];
        leaf.prop_recursive(4, 24, 3, |inner| {
            prop_oneof![
                (inner.clone(), any::<i64>(), any::<i64>()).prop_map(|(t, start, end)| {
                    match t {
                        // Only postfix-able targets round-trip without parens.
                        Expr::Concat(..) => t,
                        t => Expr::Slice {
                            target: Box::new(t),
                            start,
                            end,
                        },
                    }
                }),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| match b {
                    Expr::Concat(..) => b,
                    b => Expr::Concat(Box::new(a), Box::new(b)),
                }),
                (prop::sample::select(BUILTINS), prop::collection::vec(inner, 1..3)).prop_map(
                    |(name, args)| Expr::Call {
                        name: name.to_string(),
                        args
                    }
                ),
            ]
        })
    }

    fn arb_statement() -> impl Strategy<Value = Statement> {
        prop_oneof![
            (arb_ident(), arb_expr()).prop_map(|(n, e)| Statement::Assignment(n, e)),
            arb_expr().prop_map(Statement::Print),
            arb_expr().prop_map(Statement::Final),
            arb_ident().prop_map(Statement::FinalVar),
        ]
    }

    proptest! {
        #[test]
        fn canonical_rendering_round_trips(stmts in prop::collection::vec(arb_statement(), 0..8)) {
            let program = ScriptProgram { lines: (1..=stmts.len()).collect(), statements: stmts };
            let rendered = program.to_string();
            let reparsed = parse_script(&rendered).unwrap();
            prop_assert_eq!(reparsed.statements, program.statements);
        }

        #[test]
        fn never_panics_on_arbitrary_input(src in any::<String>()) {
            let _ = parse_script(&src);
        }

        #[test]
        fn never_panics_on_script_like_input(src in r#"[a-z_=()\[\]:,+"0-9 \n#;-]{0,60}"#) {
            let _ = parse_script(&src);
        }
    }
}
