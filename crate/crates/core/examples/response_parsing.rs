//! Sanitizes a raw model reply and extracts its script blocks and final marker.

use rlm_forge::response::{find_code_blocks, strip_think_tags, ParsedResponse};

fn main() {
    let raw = r#"<thinking>The answer is probably near the end.</thinking>
Let me search first.
```repl
hits = findall(prompt, "magic number for [a-z]+ is \d+")
print(hits)
```
```python
# not executed: only repl fences run
```
</think>I will finish once I see the output.
FINAL_VAR(hits)"#;

    let parsed = ParsedResponse::parse(raw);
    println!("clean text:\n{}\n", parsed.clean_text);
    println!("{} repl block(s):", parsed.code_blocks.len());
    for block in &parsed.code_blocks {
        println!("  {block:?}");
    }
    println!("final marker: {:?}", parsed.final_marker);

    let nested = "<think>outer <thinking>inner</thinking> still outer</think>visible";
    println!("\nnested: {:?}", strip_think_tags(nested));
    println!(
        "single-line fence: {:?}",
        find_code_blocks("```repl print(len(prompt))```")
    );
}
