//! Sanitizing raw model responses and pulling out script blocks and
//! terminal answers.
//!
//! Reasoning models wrap their deliberation in `<thinking>...</thinking>`
//! (or `<think>...</think>`) and sometimes leave a stray closing tag behind.
//! Those spans are removed before anything else looks at the text.

use std::sync::OnceLock;

use regex::Regex;

/// Tags stripped by [`strip_think_tags`].
pub const DEFAULT_THINK_TAGS: &[&str] = &["thinking", "think"];

/// The fence tag that marks a block for execution: three backticks then `repl`.
pub const REPL_FENCE_TAG: &str = "repl";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FinalMarker {
    /// `FINAL("literal")`, payload unescaped.
    Final(String),
    /// `FINAL_VAR(name)`, payload is the variable name.
    FinalVar(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedResponse {
    pub clean_text: String,
    pub code_blocks: Vec<String>,
    pub final_marker: Option<FinalMarker>,
}

impl ParsedResponse {
    pub fn parse(raw: &str) -> Self {
        let clean_text = strip_think_tags(raw);
        let code_blocks = find_code_blocks(&clean_text);
        let final_marker = find_final_answer(&clean_text);
        Self {
            clean_text,
            code_blocks,
            final_marker,
        }
    }
}

pub fn strip_think_tags(raw: &str) -> String {
    strip_tags(raw, DEFAULT_THINK_TAGS)
}

/// Removes `<tag>...</tag>` spans (innermost first) and then any leftover
/// `</tag>` tokens, repeating until nothing changes. The result contains no
/// closing tag at all, which makes the function idempotent.
pub fn strip_tags(raw: &str, tags: &[&str]) -> String {
    let mut text = raw.to_string();
    loop {
        let before = text.len();
        for tag in tags {
            let open = format!("<{tag}>");
            let close = format!("</{tag}>");
            text = remove_spans(&text, &open, &close);
            if text.contains(&close) {
                text = text.replace(&close, "");
            }
        }
        if text.len() == before {
            return text;
        }
    }
}

/// Pairs each closing tag with the nearest opening tag before it.
fn remove_spans(text: &str, open: &str, close: &str) -> String {
    if !text.contains(close) {
        return text.to_string();
    }
    let mut out = String::with_capacity(text.len());
    // Positions in `out` where still-unmatched opening tags begin.
    let mut pending: Vec<usize> = Vec::new();
    let mut rest = text;
    loop {
        let next_open = rest.find(open);
        let next_close = rest.find(close);
        match (next_open, next_close) {
            (Some(o), Some(c)) if o < c => {
                out.push_str(&rest[..o]);
                pending.push(out.len());
                out.push_str(open);
                rest = &rest[o + open.len()..];
            }
            (_, Some(c)) => match pending.pop() {
                Some(start) => {
                    out.truncate(start);
                    rest = &rest[c + close.len()..];
                }
                None => {
                    // Stray: keep it for the caller's stray-token pass.
                    out.push_str(&rest[..c + close.len()]);
                    rest = &rest[c + close.len()..];
                }
            },
            (_, None) => {
                out.push_str(rest);
                return out;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SegmentKind {
    Plain,
    Fence { repl: bool },
}

/// Splits text into plain and fenced segments. A fence opens at three
/// backticks; its tag is the first word after them. It closes at the next
/// three backticks or at end of text.
fn segments(text: &str) -> Vec<(SegmentKind, &str)> {
    const FENCE: &str = "```";
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(open) = rest.find(FENCE) {
        if open > 0 {
            out.push((SegmentKind::Plain, &rest[..open]));
        }
        let mut after = &rest[open + FENCE.len()..];
        // Longer runs of backticks belong to the same fence marker.
        after = after.trim_start_matches('`');
        let info_end = after.find(|c: char| c.is_whitespace()).unwrap_or(after.len());
        let tag = &after[..info_end];
        let repl = tag.eq_ignore_ascii_case(REPL_FENCE_TAG);
        // Body starts after the info string's line, or right after the tag
        // for single-line fences such as ```repl print(x)```.
        let line_end = after.find('\n');
        let close_rel = after.find(FENCE);
        let body_start = match (line_end, close_rel) {
            (Some(nl), Some(cl)) if cl < nl => info_end.min(cl),
            (Some(nl), _) => nl + 1,
            (None, Some(cl)) => info_end.min(cl),
            (None, None) => after.len(),
        };
        let body_and_rest = &after[body_start..];
        match body_and_rest.find(FENCE) {
            Some(close) => {
                out.push((SegmentKind::Fence { repl }, &body_and_rest[..close]));
                rest = body_and_rest[close + FENCE.len()..].trim_start_matches('`');
            }
            None => {
                out.push((SegmentKind::Fence { repl }, body_and_rest));
                rest = "";
            }
        }
    }
    if !rest.is_empty() {
        out.push((SegmentKind::Plain, rest));
    }
    out
}

/// Contents of every `repl`-tagged fence, in document order.
pub fn find_code_blocks(clean: &str) -> Vec<String> {
    segments(clean)
        .into_iter()
        .filter(|(kind, _)| *kind == SegmentKind::Fence { repl: true })
        .map(|(_, body)| body.trim_matches(|c| c == '\n' || c == '\r').to_string())
        .collect()
}

fn final_var_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"FINAL_VAR\(\s*([A-Za-z_][A-Za-z0-9_]*)\s*\)").unwrap())
}

fn final_literal_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r#"FINAL\(\s*"((?:[^"\\]|\\.)*)"\s*\)"#).unwrap())
}

fn unescape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('n') => out.push('\n'),
            Some('t') => out.push('\t'),
            Some(other @ ('"' | '\\')) => out.push(other),
            Some(other) => {
                out.push('\\');
                out.push(other);
            }
            None => out.push('\\'),
        }
    }
    out
}

/// The last `FINAL_VAR(name)` or `FINAL("...")` outside any code fence.
pub fn find_final_answer(clean: &str) -> Option<FinalMarker> {
    let mut best: Option<(usize, FinalMarker)> = None;
    for (kind, segment) in segments(clean) {
        if kind != SegmentKind::Plain {
            continue;
        }
        // Segments are subslices of `clean`; their absolute start orders
        // markers found in different segments.
        let start = segment.as_ptr() as usize - clean.as_ptr() as usize;
        let vars = final_var_re()
            .captures_iter(segment)
            .map(|c| (c.get(0).unwrap().start(), FinalMarker::FinalVar(c[1].to_string())));
        let lits = final_literal_re()
            .captures_iter(segment)
            .map(|c| (c.get(0).unwrap().start(), FinalMarker::Final(unescape(&c[1]))));
        for (pos, marker) in vars.chain(lits) {
            let pos = start + pos;
            if best.as_ref().is_none_or(|(p, _)| pos >= *p) {
                best = Some((pos, marker));
            }
        }
    }
    best.map(|(_, m)| m)
}
