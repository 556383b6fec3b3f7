//! Recovering JSON from free-form generations.
//!
//! Order: strip code fences, extract the first balanced JSON value, then
//! normalize object keys to snake_case. Type-name coercion (singular/plural,
//! aliases) happens in the parsers, which know the metamodel.

use serde_json::{Map, Value};

/// Strips fences, extracts the first balanced value and parses it.
pub fn extract_json(raw: &str) -> Result<Value, String> {
    let text = raw.trim();
    if text.is_empty() {
        return Err("generation is empty".into());
    }
    let unfenced = strip_code_fences(text);
    if let Ok(v) = serde_json::from_str::<Value>(unfenced) {
        if v.is_object() || v.is_array() {
            return Ok(v);
        }
    }
    let mut last_error = None;
    for candidate in balanced_spans(unfenced).chain(balanced_spans(text)) {
        match serde_json::from_str(candidate) {
            Ok(v) => return Ok(v),
            Err(e) => last_error = Some(e),
        }
    }
    Err(match last_error {
        Some(e) => format!("invalid JSON: {e}"),
        None => "no JSON object or array found".to_string(),
    })
}

/// Contents of the first fenced block, or the input when there is none.
pub fn strip_code_fences(text: &str) -> &str {
    let Some(open) = text.find("```") else {
        return text;
    };
    let after = &text[open + 3..];
    // Skip the info string ("json", "JSON", ...) on the fence line.
    let body_start = after.find('\n').map_or(after.len(), |i| i + 1);
    let body = &after[body_start..];
    match body.find("```") {
        Some(close) => body[..close].trim(),
        None => body.trim(),
    }
}

/// The first `{...}` or `[...]` span whose brackets balance, ignoring brackets
/// inside JSON strings.
pub fn first_balanced(text: &str) -> Option<&str> {
    balanced_spans(text).next()
}

/// Every balanced span, by start position. Spans may nest.
fn balanced_spans(text: &str) -> impl Iterator<Item = &str> {
    let bytes = text.as_bytes();
    let mut search_from = 0;
    std::iter::from_fn(move || {
        while let Some(offset) = text[search_from..].find(['{', '[']) {
            let start = search_from + offset;
            search_from = start + 1;
            if let Some(end) = balanced_end(bytes, start) {
                return Some(&text[start..=end]);
            }
        }
        None
    })
}

fn balanced_end(bytes: &[u8], start: usize) -> Option<usize> {
    let mut stack = Vec::new();
    let mut in_str = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate().skip(start) {
        if in_str {
            match b {
                _ if escaped => escaped = false,
                b'\\' => escaped = true,
                b'"' => in_str = false,
                _ => {}
            }
            continue;
        }
        match b {
            b'"' => in_str = true,
            b'{' | b'[' => stack.push(b),
            b'}' | b']' => {
                let open = stack.pop()?;
                if (open == b'{') != (b == b'}') {
                    return None;
                }
                if stack.is_empty() {
                    return Some(i);
                }
            }
            _ => {}
        }
    }
    None
}

/// Recursively rewrites object keys with [`snake_key`].
pub fn normalize_keys(value: Value) -> Value {
    match value {
        Value::Object(map) => {
            let mut out = Map::new();
            for (k, v) in map {
                out.entry(snake_key(&k)).or_insert(normalize_keys(v));
            }
            Value::Object(out)
        }
        Value::Array(items) => Value::Array(items.into_iter().map(normalize_keys).collect()),
        other => other,
    }
}

/// `"Use Cases"`, `"useCases"`, `"use-cases"` all become `"use_cases"`.
pub fn snake_key(key: &str) -> String {
    let mut out = String::with_capacity(key.len() + 4);
    let mut prev_lower = false;
    for c in key.trim().chars() {
        if c.is_uppercase() {
            if prev_lower {
                out.push('_');
            }
            out.extend(c.to_lowercase());
            prev_lower = false;
        } else if c.is_alphanumeric() {
            out.push(c);
            prev_lower = c.is_lowercase() || c.is_ascii_digit();
        } else {
            if !out.is_empty() && !out.ends_with('_') {
                out.push('_');
            }
            prev_lower = false;
        }
    }
    out.trim_end_matches('_').to_string()
}

fn singular_word(w: &str) -> String {
    match w {
        "phenomena" => return "phenomenon".into(),
        "criteria" => return "criterion".into(),
        _ => {}
    }
    if w.len() > 4 && w.ends_with("ies") {
        return format!("{}y", &w[..w.len() - 3]);
    }
    if w.ends_with("sses") {
        return w[..w.len() - 2].to_string();
    }
    if w.len() > 3 && w.ends_with('s') && !w.ends_with("ss") && !w.ends_with("us") && !w.ends_with("is") {
        return w[..w.len() - 1].to_string();
    }
    w.to_string()
}

/// Snake-cases `key` and singularizes every word.
pub fn singular_key(key: &str) -> String {
    snake_key(key)
        .split('_')
        .map(singular_word)
        .collect::<Vec<_>>()
        .join("_")
}
