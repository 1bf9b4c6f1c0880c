//! Runs a few scripts against a REPL environment, with a stand-in `llm()`.

use rlm_forge::script::{execute, parse_script, Environment, SandboxLimits, SubcallError};

fn main() {
    let document = "Inventory log\nwidget: 14\ngadget: 3\nsprocket: 27\n";
    let limits = SandboxLimits::default();
    let mut env = Environment::new(document, limits).expect("prompt fits the sandbox");

    // Variables persist between executions, as they do between model turns.
    let turns = [
        "n = len(prompt)\nprint(n)\nrows = lines(prompt)\nprint(len(rows))",
        r#"hits = findall(prompt, "[a-z]+: \d+")
print(join(hits, " | "))
top = get(hits, 2)"#,
        r#"summary = llm("Which item is low on stock? " + prompt)
print(summary)
print(undefined_name)
FINAL_VAR(top)"#,
    ];

    let mut subcall = |text: &str| -> Result<String, SubcallError> {
        Ok(format!("(helper saw {} chars) gadget", text.chars().count()))
    };

    for (i, source) in turns.iter().enumerate() {
        let program = match parse_script(source) {
            Ok(p) => p,
            Err(e) => {
                println!("turn {i}: parse error at {e}");
                continue;
            }
        };
        match execute(&program, &mut env, &limits, &mut subcall) {
            Ok(outcome) => {
                println!(
                    "--- turn {i} ({} steps, {} subcalls)",
                    outcome.steps_used, outcome.subcalls_made
                );
                println!("{}", outcome.transcript);
                if let Some(answer) = outcome.final_value {
                    println!("final answer: {answer}");
                }
            }
            Err(budget) => println!("turn {i}: {budget}"),
        }
    }

    // A parse error is reported with its line number.
    if let Err(e) = parse_script("x = peek(prompt 10)") {
        println!("parse error example: {e}");
    }
}
