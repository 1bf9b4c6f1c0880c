use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::parser::{Expr, ScriptProgram, Statement};
use super::pattern::Pattern;
use super::value::{EnvError, Environment, Value};
use super::SandboxLimits;

/// Why an `llm(...)` call could not produce text.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SubcallError {
    #[error("subcall cap exceeded ({0})")]
    CapExceeded(u32),
    #[error("{0}")]
    Refused(String),
}

/// Implements `llm(text)`. This is the only way a script can reach outside
/// the sandbox.
pub trait SubcallHook {
    fn call(&mut self, text: &str) -> Result<String, SubcallError>;
}

impl<F> SubcallHook for F
where
    F: FnMut(&str) -> Result<String, SubcallError>,
{
    fn call(&mut self, text: &str) -> Result<String, SubcallError> {
        self(text)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ExecOutcome {
    /// Printed output and `ERROR:` lines, newline separated.
    pub transcript: String,
    /// Set iff a FINAL or FINAL_VAR statement executed.
    pub final_value: Option<String>,
    pub steps_used: u64,
    pub subcalls_made: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetKind {
    Steps,
    ValueSize,
    ListLength,
    EnvironmentSize,
}

impl fmt::Display for BudgetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BudgetKind::Steps => "steps",
            BudgetKind::ValueSize => "value size",
            BudgetKind::ListLength => "list length",
            BudgetKind::EnvironmentSize => "environment size",
        })
    }
}

/// A hard limit stopped the execution. `outcome` holds everything produced
/// up to that point.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("budget exceeded ({kind}): {message}")]
pub struct BudgetExceeded {
    pub kind: BudgetKind,
    pub message: String,
    pub outcome: ExecOutcome,
}

enum Fault {
    Runtime(String),
    Budget(BudgetKind, String),
}

type EvalResult<T> = Result<T, Fault>;

fn runtime<T>(msg: impl Into<String>) -> EvalResult<T> {
    Err(Fault::Runtime(msg.into()))
}

impl From<EnvError> for Fault {
    fn from(e: EnvError) -> Self {
        match e {
            EnvError::ValueTooLarge { .. } => Fault::Budget(BudgetKind::ValueSize, e.to_string()),
            EnvError::EnvironmentFull { .. } => Fault::Budget(BudgetKind::EnvironmentSize, e.to_string()),
        }
    }
}

/// Runs `program` against `env`.
///
/// Runtime errors become `ERROR: ...` transcript lines and execution moves
/// on to the next statement. Only hard limits abort the run.
pub fn execute(
    program: &ScriptProgram,
    env: &mut Environment,
    limits: &SandboxLimits,
    subcall: &mut dyn SubcallHook,
) -> Result<ExecOutcome, BudgetExceeded> {
    let mut machine = Machine {
        env,
        limits,
        hook: subcall,
        steps: 0,
        subcalls: 0,
        transcript: Transcript::new(limits.max_transcript_bytes),
        patterns: HashMap::new(),
    };

    for (idx, stmt) in program.statements.iter().enumerate() {
        let line = program.lines.get(idx).copied().unwrap_or(idx + 1);
        match machine.statement(stmt) {
            Ok(Some(final_value)) => {
                return Ok(machine.finish(Some(final_value)));
            }
            Ok(None) => {}
            Err(Fault::Runtime(msg)) => {
                machine.transcript.push(&format!("ERROR: {msg} (line {line})"));
            }
            Err(Fault::Budget(kind, message)) => {
                machine.transcript.push(&format!(
                    "ERROR: budget exceeded ({kind}): {message} (line {line})"
                ));
                return Err(BudgetExceeded {
                    kind,
                    message,
                    outcome: machine.finish(None),
                });
            }
        }
    }
    Ok(machine.finish(None))
}

struct Transcript {
    lines: Vec<String>,
    bytes: usize,
    cap: usize,
    overflowed: bool,
}

impl Transcript {
    fn new(cap: usize) -> Self {
        Self {
            lines: Vec::new(),
            bytes: 0,
            cap,
            overflowed: false,
        }
    }

    fn push(&mut self, line: &str) {
        if self.overflowed {
            return;
        }
        if self.bytes + line.len() > self.cap {
            self.overflowed = true;
            self.lines
                .push("ERROR: transcript cap reached; further output dropped".to_string());
            return;
        }
        self.bytes += line.len() + 1;
        self.lines.push(line.to_string());
    }
}

struct Machine<'a> {
    env: &'a mut Environment,
    limits: &'a SandboxLimits,
    hook: &'a mut dyn SubcallHook,
    steps: u64,
    subcalls: u32,
    transcript: Transcript,
    patterns: HashMap<String, Pattern>,
}

impl Machine<'_> {
    fn finish(self, final_value: Option<String>) -> ExecOutcome {
        ExecOutcome {
            transcript: self.transcript.lines.join("\n"),
            final_value,
            steps_used: self.steps,
            subcalls_made: self.subcalls,
        }
    }

    fn tick(&mut self) -> EvalResult<()> {
        if self.steps >= self.limits.max_steps {
            return Err(Fault::Budget(
                BudgetKind::Steps,
                format!("step limit of {} reached", self.limits.max_steps),
            ));
        }
        self.steps += 1;
        Ok(())
    }

    fn statement(&mut self, stmt: &Statement) -> EvalResult<Option<String>> {
        self.tick()?;
        match stmt {
            Statement::Assignment(name, expr) => {
                let value = self.eval(expr)?;
                self.env.set(name, value)?;
                Ok(None)
            }
            Statement::Print(expr) => {
                let value = self.eval(expr)?;
                self.transcript.push(&value.to_string());
                Ok(None)
            }
            Statement::Final(expr) => Ok(Some(self.eval(expr)?.to_string())),
            Statement::FinalVar(name) => Ok(Some(match self.env.get(name) {
                Some(value) => value.to_string(),
                None => format!("ERROR: undefined variable {name}"),
            })),
        }
    }

    fn checked(&self, value: Value) -> EvalResult<Value> {
        match &value {
            Value::Text(s) if s.len() > self.limits.max_value_bytes => Err(Fault::Budget(
                BudgetKind::ValueSize,
                format!(
                    "text of {} bytes exceeds the cap of {} bytes",
                    s.len(),
                    self.limits.max_value_bytes
                ),
            )),
            Value::List(items) if items.len() > self.limits.max_list_len => Err(Fault::Budget(
                BudgetKind::ListLength,
                format!(
                    "list of {} elements exceeds the cap of {}",
                    items.len(),
                    self.limits.max_list_len
                ),
            )),
            _ => Ok(value),
        }
    }

    fn eval(&mut self, expr: &Expr) -> EvalResult<Value> {
        self.tick()?;
        match expr {
            Expr::Str(s) => self.checked(Value::text(s.as_str())),
            Expr::Int(n) => Ok(Value::Int(*n)),
            Expr::Var(name) => match self.env.get(name) {
                Some(v) => Ok(v.clone()),
                None => runtime(format!("undefined variable {name}")),
            },
            Expr::Slice { target, start, end } => {
                let target = self.eval(target)?;
                slice(&target, *start, *end)
            }
            Expr::Concat(a, b) => {
                let a = self.eval(a)?;
                let b = self.eval(b)?;
                self.concat(a, b)
            }
            Expr::Call { name, args } => {
                let mut values = Vec::with_capacity(args.len());
                for arg in args {
                    values.push(self.eval(arg)?);
                }
                let result = self.call(name, values)?;
                self.checked(result)
            }
        }
    }

    fn concat(&self, a: Value, b: Value) -> EvalResult<Value> {
        match (a, b) {
            (Value::List(x), Value::List(y)) => {
                if x.len() + y.len() > self.limits.max_list_len {
                    return Err(Fault::Budget(
                        BudgetKind::ListLength,
                        format!(
                            "list of {} elements exceeds the cap of {}",
                            x.len() + y.len(),
                            self.limits.max_list_len
                        ),
                    ));
                }
                let mut items = Vec::with_capacity(x.len() + y.len());
                items.extend(x.iter().cloned());
                items.extend(y.iter().cloned());
                Ok(Value::list(items))
            }
            (Value::Int(_), Value::Int(_)) => {
                runtime("`+` on two integers is not supported (the language has no arithmetic)")
            }
            (a @ Value::List(_), b) | (a, b @ Value::List(_)) => runtime(format!(
                "cannot concatenate {} and {}",
                a.type_name(),
                b.type_name()
            )),
            (a, b) => {
                let (a, b) = (a.to_string(), b.to_string());
                if a.len() + b.len() > self.limits.max_value_bytes {
                    return Err(Fault::Budget(
                        BudgetKind::ValueSize,
                        format!(
                            "concatenation of {} bytes exceeds the cap of {} bytes",
                            a.len() + b.len(),
                            self.limits.max_value_bytes
                        ),
                    ));
                }
                Ok(Value::text(a + &b))
            }
        }
    }

    fn pattern(&mut self, source: &str) -> EvalResult<Pattern> {
        if let Some(p) = self.patterns.get(source) {
            return Ok(p.clone());
        }
        let compiled = Pattern::compile(source).map_err(|e| Fault::Runtime(e.to_string()))?;
        self.patterns.insert(source.to_string(), compiled.clone());
        Ok(compiled)
    }

    fn call(&mut self, name: &str, args: Vec<Value>) -> EvalResult<Value> {
        let signature = || args.iter().map(Value::type_name).collect::<Vec<_>>().join(", ");
        match (name, args.as_slice()) {
            ("len", [Value::Text(s)]) => Ok(Value::Int(s.chars().count() as i64)),
            ("len", [Value::List(items)]) => Ok(Value::Int(items.len() as i64)),
            ("find", [Value::Text(t), Value::Text(p)]) => Ok(Value::Int(self.pattern(p)?.find(t))),
            ("findall", [Value::Text(t), Value::Text(p)]) => {
                let found = self.pattern(p)?.find_all(t);
                self.checked(Value::list(found))
            }
            ("count", [Value::Text(t), Value::Text(p)]) => Ok(Value::Int(self.pattern(p)?.count(t))),
            ("split", [Value::Text(t), Value::Text(sep)]) => {
                if sep.is_empty() {
                    return runtime("split separator must not be empty");
                }
                Ok(Value::list(t.split(sep.as_ref()).map(str::to_string).collect()))
            }
            ("lines", [Value::Text(t)]) => Ok(Value::list(t.split('\n').map(str::to_string).collect())),
            ("join", [Value::List(items), Value::Text(sep)]) => {
                let total: usize = items.iter().map(String::len).sum::<usize>() + sep.len() * items.len();
                if total > self.limits.max_value_bytes {
                    return Err(Fault::Budget(
                        BudgetKind::ValueSize,
                        format!("join result of about {total} bytes exceeds the cap"),
                    ));
                }
                Ok(Value::text(items.join(sep.as_ref())))
            }
            ("get", [Value::List(items), Value::Int(i)]) => {
                match usize::try_from(*i).ok().and_then(|i| items.get(i)) {
                    Some(item) => Ok(Value::text(item.as_str())),
                    None => runtime(format!(
                        "index out of range: get({i}) on a list of {} elements",
                        items.len()
                    )),
                }
            }
            ("chunk", [Value::Text(t), Value::Int(n)]) => {
                if *n < 1 {
                    return runtime("chunk size must be at least 1");
                }
                Ok(Value::list(chunk(t, *n as usize)))
            }
            ("lower", [Value::Text(t)]) => Ok(Value::text(t.to_lowercase())),
            ("strip", [Value::Text(t)]) => Ok(Value::text(t.trim())),
            ("peek", [Value::Text(t), Value::Int(n)]) => slice(&Value::Text(t.clone()), 0, *n),
            ("llm", [arg]) => {
                if self.subcalls >= self.limits.max_subcalls {
                    return runtime(SubcallError::CapExceeded(self.limits.max_subcalls).to_string());
                }
                self.subcalls += 1;
                let text = arg.to_string();
                match self.hook.call(&text) {
                    Ok(reply) => Ok(Value::text(reply)),
                    Err(e) => runtime(e.to_string()),
                }
            }
            _ => runtime(format!("{name} does not accept ({})", signature())),
        }
    }
}

fn clamp(i: i64, len: usize) -> usize {
    if i <= 0 {
        0
    } else {
        (i as u64).min(len as u64) as usize
    }
}

fn slice(target: &Value, start: i64, end: i64) -> EvalResult<Value> {
    match target {
        Value::Text(s) => {
            let len = s.chars().count();
            let (a, b) = (clamp(start, len), clamp(end, len));
            if a >= b {
                return Ok(Value::text(""));
            }
            let mut indices = s.char_indices().map(|(i, _)| i).chain(std::iter::once(s.len()));
            let byte_a = indices.nth(a).unwrap_or(s.len());
            let byte_b = if b == a {
                byte_a
            } else {
                indices.nth(b - a - 1).unwrap_or(s.len())
            };
            Ok(Value::Text(Arc::from(&s[byte_a..byte_b])))
        }
        Value::List(items) => {
            let (a, b) = (clamp(start, items.len()), clamp(end, items.len()));
            if a >= b {
                return Ok(Value::list(Vec::new()));
            }
            Ok(Value::list(items[a..b].to_vec()))
        }
        Value::Int(_) => runtime("cannot slice an int"),
    }
}

fn chunk(text: &str, n: usize) -> Vec<String> {
    let mut out = Vec::new();
    let mut current = String::new();
    let mut count = 0usize;
    for c in text.chars() {
        current.push(c);
        count += 1;
        if count == n {
            out.push(std::mem::take(&mut current));
            count = 0;
        }
    }
    if !current.is_empty() {
        out.push(current);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::script::parse_script;
    use proptest::prelude::*;

    fn no_subcalls(_: &str) -> Result<String, SubcallError> {
        Err(SubcallError::Refused("no subcalls in this test".into()))
    }

    fn run(src: &str, prompt: &str) -> (ExecOutcome, Environment) {
        let limits = SandboxLimits::default();
        let mut env = Environment::new(prompt, limits).unwrap();
        let program = parse_script(src).unwrap();
        let out = execute(&program, &mut env, &limits, &mut no_subcalls).unwrap();
        (out, env)
    }

    /// Independent brute-force count of non-overlapping literal occurrences.
    fn scan_count(haystack: &str, needle: &str) -> usize {
        let (h, n) = (haystack.as_bytes(), needle.as_bytes());
        let (mut i, mut found) = (0, 0);
        while i + n.len() <= h.len() {
            if &h[i..i + n.len()] == n {
                found += 1;
                i += n.len();
            } else {
                i += 1;
            }
        }
        found
    }

    #[test]
    fn count_then_print() {
        let prompt = "A magic number here. Filler. Another magic number there.";
        assert_eq!(scan_count(prompt, "magic number"), 2);
        let (out, _) = run(r#"n = count(prompt, "magic number"); print(n)"#, prompt);
        assert_eq!(out.transcript, "2");
        assert_eq!(out.final_value, None);
    }

    #[test]
    fn final_literal() {
        let (out, _) = run(r#"FINAL("hello")"#, "p");
        assert_eq!(out.final_value.as_deref(), Some("hello"));
        assert_eq!(out.transcript, "");
    }

    #[test]
    fn runtime_error_does_not_stop_execution() {
        let (out, env) = run(
            "x = get(lines(prompt), 999999)\nprint(\"after\")\ny = 1",
            "one\ntwo\nthree",
        );
        assert!(out.transcript.contains("ERROR: index out of range"));
        assert!(out.transcript.ends_with("after"));
        assert!(env.get("x").is_none());
        assert_eq!(env.get("y"), Some(&Value::Int(1)));
    }

    #[test]
    fn final_stops_execution() {
        let (out, env) = run("FINAL(\"a\")\nx = 1", "p");
        assert_eq!(out.final_value.as_deref(), Some("a"));
        assert!(env.get("x").is_none());
    }

    #[test]
    fn final_var_stringifies() {
        let (out, _) = run("n = len(prompt)\nFINAL_VAR(n)", "héllo");
        assert_eq!(out.final_value.as_deref(), Some("5"));
        let (out, _) = run("FINAL_VAR(missing)", "p");
        assert_eq!(
            out.final_value.as_deref(),
            Some("ERROR: undefined variable missing")
        );
    }

    #[test]
    fn builtins() {
        let prompt = "Alpha beta\n  Gamma  \nalpha";
        let src = r#"
print(len(prompt))
print(find(prompt, "beta"))
print(find(prompt, "zeta"))
print(findall(prompt, "[Aa]lpha"))
print(len(split(prompt, " ")))
print(get(lines(prompt), 1))
print(strip(get(lines(prompt), 1)))
print(lower(peek(prompt, 5)))
print(join(chunk("abcdefg", 3), "|"))
print(prompt[6:10] + "!" + 3)
print(len(lines(prompt)[1:99]))
"#;
        let (out, _) = run(src, prompt);
        let lines: Vec<&str> = out.transcript.lines().collect();
        assert_eq!(
            lines,
            vec![
                "26",
                "6",
                "-1",
                r#"["Alpha","alpha"]"#,
                "6",
                "  Gamma  ",
                "Gamma",
                "alpha",
                "abc|def|g",
                "beta!3",
                "2",
            ]
        );
    }

    #[test]
    fn type_and_pattern_errors_are_transcript_lines() {
        let (out, _) = run(
            r#"print(len(3))
print(find(prompt, "a{2}"))
x = 1 + 2
print(chunk(prompt, 0))
print(split(prompt, ""))
print(get(lines(prompt), -1))
print(nope)
print(prompt + lines(prompt))
print(5[0:1])
print("done")"#,
            "abc",
        );
        let errors = out.transcript.lines().filter(|l| l.starts_with("ERROR:")).count();
        assert_eq!(errors, 9, "{}", out.transcript);
        assert!(out.transcript.ends_with("done"));
    }

    #[test]
    fn persistence_across_executions() {
        let limits = SandboxLimits::default();
        let mut env = Environment::new("prompt text", limits).unwrap();
        let first = parse_script("saved = peek(prompt, 6)").unwrap();
        execute(&first, &mut env, &limits, &mut no_subcalls).unwrap();
        let second = parse_script("print(saved)").unwrap();
        let out = execute(&second, &mut env, &limits, &mut no_subcalls).unwrap();
        assert_eq!(out.transcript, "prompt");
    }

    #[test]
    fn step_budget_is_enforced() {
        let limits = SandboxLimits {
            max_steps: 10,
            ..SandboxLimits::default()
        };
        let mut env = Environment::new("p", limits).unwrap();
        let program = parse_script(&"x = 1\n".repeat(20)).unwrap();
        let err = execute(&program, &mut env, &limits, &mut no_subcalls).unwrap_err();
        assert_eq!(err.kind, BudgetKind::Steps);
        assert_eq!(err.outcome.steps_used, 10);
        assert!(err.outcome.transcript.contains("budget exceeded"));
    }

    #[test]
    fn value_cap_is_enforced() {
        let limits = SandboxLimits {
            max_value_bytes: 16,
            ..SandboxLimits::default()
        };
        let mut env = Environment::new("0123456789", limits).unwrap();
        let program = parse_script("x = prompt + prompt").unwrap();
        let err = execute(&program, &mut env, &limits, &mut no_subcalls).unwrap_err();
        assert_eq!(err.kind, BudgetKind::ValueSize);
    }

    #[test]
    fn list_cap_is_enforced() {
        let limits = SandboxLimits {
            max_list_len: 3,
            ..SandboxLimits::default()
        };
        let mut env = Environment::new("abcdefgh", limits).unwrap();
        let program = parse_script("x = chunk(prompt, 1)").unwrap();
        let err = execute(&program, &mut env, &limits, &mut no_subcalls).unwrap_err();
        assert_eq!(err.kind, BudgetKind::ListLength);
    }

    #[test]
    fn subcalls_go_through_the_hook_and_respect_the_cap() {
        let limits = SandboxLimits {
            max_subcalls: 2,
            ..SandboxLimits::default()
        };
        let mut env = Environment::new("p", limits).unwrap();
        let mut seen = Vec::new();
        let mut hook = |text: &str| {
            seen.push(text.to_string());
            Ok(format!("reply to {text}"))
        };
        let program =
            parse_script("a = llm(\"one\")\nb = llm(\"two\")\nc = llm(\"three\")\nprint(a + \";\" + b)")
                .unwrap();
        let out = execute(&program, &mut env, &limits, &mut hook).unwrap();
        assert_eq!(out.subcalls_made, 2);
        assert!(out.transcript.contains("ERROR: subcall cap exceeded (2)"));
        assert!(out.transcript.ends_with("reply to one;reply to two"));
        assert_eq!(seen, vec!["one", "two"]);
    }

    #[test]
    fn transcript_cap_drops_output() {
        let limits = SandboxLimits {
            max_transcript_bytes: 10,
            ..SandboxLimits::default()
        };
        let mut env = Environment::new("abcdef", limits).unwrap();
        let program = parse_script("print(prompt)\nprint(prompt)\nprint(prompt)").unwrap();
        let out = execute(&program, &mut env, &limits, &mut no_subcalls).unwrap();
        assert_eq!(out.transcript.lines().count(), 2);
        assert!(out.transcript.contains("transcript cap"));
    }

    proptest! {
        #[test]
        fn slicing_is_total_and_exact(t in "\\PC{0,40}", a in 0usize..45, b in 0usize..45) {
            let len = t.chars().count();
            let (a, b) = (a.min(b), a.max(b));
            let v = slice(&Value::text(t.as_str()), a as i64, b as i64).ok().unwrap();
            let got = match v { Value::Text(s) => s.chars().count(), _ => unreachable!() };
            if b <= len {
                prop_assert_eq!(got, b - a);
            } else {
                prop_assert_eq!(got, len.saturating_sub(a));
            }
        }

        #[test]
        fn chunk_join_inverse(t in "\\PC{0,60}", n in 1usize..20) {
            let pieces = chunk(&t, n);
            prop_assert!(pieces.iter().all(|p| p.chars().count() <= n));
            prop_assert_eq!(pieces.concat(), t);
        }

        #[test]
        fn execution_is_deterministic(src in r#"(x = (count|find|len)\(prompt(, "[a-c]+")?\)\n|print\(x\)\n|y = chunk\(prompt, 3\)\n|print\(join\(y, "-"\)\)\n){0,6}"#) {
            let a = parse_script(&src);
            if let Ok(program) = a {
                let run_once = || {
                    let limits = SandboxLimits::default();
                    let mut env = Environment::new("abcabcaab", limits).unwrap();
                    execute(&program, &mut env, &limits, &mut no_subcalls).unwrap()
                };
                prop_assert_eq!(run_once(), run_once());
            }
        }
    }
}
