//! Locating JSON inside free-form model output.
//!
//! Strategy, in order: the whole (trimmed) text, the first fenced code block,
//! then the first balanced top-level object. Nothing is repaired at the key
//! level; a misspelled key surfaces later as a schema violation.

use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExtractError {
    #[error("no balanced JSON object found")]
    NoJsonFound,
    #[error("malformed JSON: {0}")]
    Malformed(String),
}

/// How strictly a located candidate is parsed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Syntax {
    /// RFC 8259 JSON only.
    Strict,
    /// JSON, falling back to JSON5 (unquoted keys, single quotes, trailing
    /// commas). Localization answers are often emitted in the template's
    /// unquoted-key style.
    Relaxed,
}

fn parse(text: &str, syntax: Syntax) -> Result<Value, String> {
    match serde_json::from_str::<Value>(text) {
        Ok(v) => Ok(v),
        Err(strict) => match syntax {
            Syntax::Strict => Err(strict.to_string()),
            Syntax::Relaxed => json5::from_str::<Value>(text).map_err(|_| strict.to_string()),
        },
    }
}

/// Returns the body of the first ``` fenced block, skipping the info string.
pub(crate) fn first_fenced_block(raw: &str) -> Option<&str> {
    let open = raw.find("```")?;
    let after = &raw[open + 3..];
    let body_start = after.find('\n').map(|i| i + 1)?;
    let body = &after[body_start..];
    let close = body.find("```")?;
    Some(&body[..close])
}

/// Byte spans of top-level balanced `open`..`close` groups, string-aware.
pub(crate) fn balanced_spans(text: &str, open: u8, close: u8) -> Vec<(usize, usize)> {
    let bytes = text.as_bytes();
    let mut spans = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] != open {
            i += 1;
            continue;
        }
        match match_close(bytes, i, open, close) {
            Some(end) => {
                spans.push((i, end + 1));
                i = end + 1;
            }
            None => break,
        }
    }
    spans
}

fn match_close(bytes: &[u8], start: usize, open: u8, close: u8) -> Option<usize> {
    let mut depth = 0usize;
    let mut in_string: Option<u8> = None;
    let mut escaped = false;
    for (offset, &b) in bytes[start..].iter().enumerate() {
        if let Some(quote) = in_string {
            if escaped {
                escaped = false;
            } else if b == b'\\' {
                escaped = true;
            } else if b == quote {
                in_string = None;
            }
            continue;
        }
        match b {
            b'"' | b'\'' => in_string = Some(b),
            _ if b == open => depth += 1,
            _ if b == close => {
                depth -= 1;
                if depth == 0 {
                    return Some(start + offset);
                }
            }
            _ => {}
        }
    }
    None
}

/// Locates a single JSON value (normally an object) in `raw`.
pub fn locate_json(raw: &str, syntax: Syntax) -> Result<Value, ExtractError> {
    let trimmed = raw.trim();
    if let Ok(v) = parse(trimmed, syntax) {
        return Ok(v);
    }
    if let Some(block) = first_fenced_block(raw) {
        if let Ok(v) = parse(block.trim(), syntax) {
            return Ok(v);
        }
    }
    let spans = balanced_spans(raw, b'{', b'}');
    let (s, e) = *spans.first().ok_or(ExtractError::NoJsonFound)?;
    parse(&raw[s..e], syntax).map_err(ExtractError::Malformed)
}

/// Locates one or more JSON items: a top-level array, a single object, or a
/// run of separate objects (one per line, as some models emit lists).
pub fn locate_json_items(raw: &str, syntax: Syntax) -> Result<Vec<Value>, ExtractError> {
    fn as_items(v: Value) -> Vec<Value> {
        match v {
            Value::Array(items) => items,
            other => vec![other],
        }
    }
    let trimmed = raw.trim();
    if let Ok(v) = parse(trimmed, syntax) {
        return Ok(as_items(v));
    }
    let scope = match first_fenced_block(raw) {
        Some(block) => {
            if let Ok(v) = parse(block.trim(), syntax) {
                return Ok(as_items(v));
            }
            block
        }
        None => raw,
    };
    let objects = balanced_spans(scope, b'{', b'}');
    let arrays = balanced_spans(scope, b'[', b']');
    let first_obj = objects.first().map(|s| s.0);
    // An array that opens before the first object encloses the items.
    if let Some(&(s, e)) = arrays.first() {
        if first_obj.is_none_or(|o| s < o) {
            return parse(&scope[s..e], syntax).map(as_items).map_err(ExtractError::Malformed);
        }
    }
    if objects.is_empty() {
        return Err(ExtractError::NoJsonFound);
    }
    objects.iter().map(|&(s, e)| parse(&scope[s..e], syntax).map_err(ExtractError::Malformed)).collect()
}
