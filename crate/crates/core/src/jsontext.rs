//! Locating JSON inside free-form model output.

use alloc::string::String;

/// First balanced `open ... close` span in `text`, skipping delimiters inside
/// JSON strings.
pub fn first_balanced(text: &str, open: char, close: char) -> Option<&str> {
    let start = text.find(open)?;
    let (mut depth, mut in_str, mut escaped) = (0usize, false, false);
    for (i, c) in text[start..].char_indices() {
        if in_str {
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_str = false,
                _ => {}
            }
            continue;
        }
        if c == '"' {
            in_str = true;
        } else if c == open {
            depth += 1;
        } else if c == close {
            depth -= 1;
            if depth == 0 {
                return Some(&text[start..start + i + c.len_utf8()]);
            }
        }
    }
    None
}

/// Replaces raw line breaks inside JSON strings with spaces; models wrap
/// long values across lines.
pub fn escape_string_newlines(json: &str) -> String {
    let mut out = String::with_capacity(json.len());
    let (mut in_str, mut escaped) = (false, false);
    for c in json.chars() {
        if in_str {
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_str = false,
                '\n' | '\r' | '\t' => {
                    out.push(' ');
                    continue;
                }
                _ => {}
            }
        } else if c == '"' {
            in_str = true;
        }
        out.push(c);
    }
    out
}

/// Parses the first balanced span, retrying with in-string newlines escaped.
pub fn parse_first<T: serde::de::DeserializeOwned>(
    text: &str,
    open: char,
    close: char,
) -> Option<Result<T, serde_json::Error>> {
    let span = first_balanced(text, open, close)?;
    Some(
        serde_json::from_str(span).or_else(|_| serde_json::from_str(&escape_string_newlines(span))),
    )
}
