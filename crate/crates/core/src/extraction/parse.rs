//! Lenient parsing of the near-JSON emitted by extraction prompts.

use serde_json::{Map, Value};

/// Returns the first fenced block's body if the text contains a code fence.
fn strip_fences(raw: &str) -> &str {
    let Some(open) = raw.find("```") else {
        return raw;
    };
    let body = &raw[open + 3..];
    // skip an info string such as `json`
    let body = match body.find('\n') {
        Some(nl) if body[..nl].trim().chars().all(|c| c.is_ascii_alphanumeric()) => &body[nl + 1..],
        _ => body,
    };
    match body.find("```") {
        Some(close) => &body[..close],
        None => body,
    }
}

fn outermost_object(text: &str) -> &str {
    match (text.find('{'), text.rfind('}')) {
        (Some(a), Some(b)) if a < b => &text[a..=b],
        _ => text,
    }
}

fn next_significant(chars: &[char], from: usize) -> Option<char> {
    chars[from..].iter().copied().find(|c| !c.is_whitespace())
}

/// Rewrites single-quoted strings as double-quoted ones and drops trailing
/// commas before `}` or `]`. Double-quoted strings pass through untouched.
fn normalize_quotes_and_commas(text: &str) -> String {
    #[derive(PartialEq)]
    enum State {
        Normal,
        Double,
        Single,
    }
    let chars: Vec<char> = text.chars().collect();
    let mut out = String::with_capacity(text.len());
    let mut state = State::Normal;
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match state {
            State::Normal => match c {
                '"' => {
                    state = State::Double;
                    out.push(c);
                }
                '\'' => {
                    state = State::Single;
                    out.push('"');
                }
                ',' if matches!(next_significant(&chars, i + 1), Some('}') | Some(']')) => {}
                _ => out.push(c),
            },
            State::Double => {
                out.push(c);
                if c == '\\' && i + 1 < chars.len() {
                    out.push(chars[i + 1]);
                    i += 1;
                } else if c == '"' {
                    state = State::Normal;
                }
            }
            State::Single => match c {
                '\\' if i + 1 < chars.len() => {
                    if chars[i + 1] == '\'' {
                        out.push('\'');
                    } else {
                        out.push(c);
                        out.push(chars[i + 1]);
                    }
                    i += 1;
                }
                '"' => out.push_str("\\\""),
                // an apostrophe closes the string only where JSON syntax resumes
                '\'' if matches!(next_significant(&chars, i + 1), None | Some(',' | ':' | '}' | ']')) => {
                    state = State::Normal;
                    out.push('"');
                }
                _ => out.push(c),
            },
        }
        i += 1;
    }
    out
}

/// Repair pass applied when the raw reply is not valid JSON.
pub fn repair_json(raw: &str) -> String {
    normalize_quotes_and_commas(outermost_object(strip_fences(raw)))
}

/// Parses a JSON object, retrying once after [`repair_json`].
pub fn parse_object(raw: &str) -> Result<Map<String, Value>, String> {
    let direct = serde_json::from_str::<Value>(raw.trim());
    let value = match direct {
        Ok(v) => v,
        Err(first) => serde_json::from_str::<Value>(&repair_json(raw))
            .map_err(|e| format!("not valid JSON ({first}); after repair: {e}"))?,
    };
    match value {
        Value::Object(map) => Ok(map),
        other => Err(format!("expected a JSON object, found {}", kind(&other))),
    }
}

fn kind(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "a boolean",
        Value::Number(_) => "a number",
        Value::String(_) => "a string",
        Value::Array(_) => "an array",
        Value::Object(_) => "an object",
    }
}

/// String content of a scalar JSON value, trimmed; numbers are accepted.
pub(crate) fn text_of(v: &Value) -> Option<String> {
    let s = match v {
        Value::String(s) => s.trim().to_string(),
        Value::Number(n) => n.to_string(),
        _ => return None,
    };
    (!s.is_empty()).then_some(s)
}
