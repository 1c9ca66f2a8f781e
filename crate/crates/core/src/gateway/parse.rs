//! Lenient JSON extraction from model output.
//!
//! Small models wrap JSON in prose, truncate it, or rename keys. Parsing
//! climbs a repair ladder: parse as-is, then extract the first balanced
//! object, then regex individual keys. Callers fall back to their documented
//! default when every rung fails.

use regex::Regex;
use serde_json::Value;

/// Rungs 1 and 2: strict parse, then first balanced `{...}` block.
pub fn parse_object_lenient(raw: &str) -> Option<Value> {
    if let Ok(value) = serde_json::from_str::<Value>(raw.trim()) {
        if value.is_object() {
            return Some(value);
        }
    }
    let block = extract_balanced_object(raw)?;
    serde_json::from_str::<Value>(block)
        .ok()
        .filter(Value::is_object)
}

/// First balanced top-level `{...}` block, respecting string literals and
/// escapes so braces inside strings do not derail the scan.
pub fn extract_balanced_object(raw: &str) -> Option<&str> {
    let bytes = raw.as_bytes();
    let start = raw.find('{')?;
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (offset, &byte) in bytes[start..].iter().enumerate() {
        if in_string {
            if escaped {
                escaped = false;
            } else if byte == b'\\' {
                escaped = true;
            } else if byte == b'"' {
                in_string = false;
            }
            continue;
        }
        match byte {
            b'"' => in_string = true,
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(&raw[start..=start + offset]);
                }
            }
            _ => {}
        }
    }
    None
}

/// Rung 3 for string-valued keys: `"key"\s*:\s*"..."` anywhere in the text.
pub fn regex_string_value(raw: &str, key: &str) -> Option<String> {
    let pattern = format!(r#""{}"\s*:\s*"((?:[^"\\]|\\.)*)""#, regex::escape(key));
    let re = Regex::new(&pattern).expect("static pattern");
    let captured = re.captures(raw)?.get(1)?.as_str().to_string();
    // Unescape through the JSON parser so \" and \n survive correctly.
    serde_json::from_str::<String>(&format!("\"{captured}\"")).ok()
}

/// Rung 3 for string-array keys: `"key"\s*:\s*[ ... ]`, returning the quoted
/// elements in order.
pub fn regex_string_array(raw: &str, key: &str) -> Option<Vec<String>> {
    let pattern = format!(r#""{}"\s*:\s*\[([^\]]*)\]"#, regex::escape(key));
    let re = Regex::new(&pattern).expect("static pattern");
    let inner = re.captures(raw)?.get(1)?.as_str();
    let element = Regex::new(r#""((?:[^"\\]|\\.)*)""#).expect("static pattern");
    let items = element
        .captures_iter(inner)
        .filter_map(|c| {
            let captured = c.get(1)?.as_str();
            serde_json::from_str::<String>(&format!("\"{captured}\"")).ok()
        })
        .collect();
    Some(items)
}

/// Read a string array field out of an already-parsed object, tolerating
/// scalar strings where an array was expected.
pub fn string_array_field(value: &Value, key: &str) -> Option<Vec<String>> {
    match value.get(key)? {
        Value::Array(items) => Some(
            items
                .iter()
                .filter_map(|item| match item {
                    Value::String(s) => Some(s.clone()),
                    Value::Number(n) => Some(n.to_string()),
                    _ => None,
                })
                .collect(),
        ),
        Value::String(s) => Some(vec![s.clone()]),
        _ => None,
    }
}

/// Accept "cluster_7", "7", or 7 and return the numeric id.
pub fn parse_cluster_ref(text: &str) -> Option<u64> {
    let trimmed = text.trim();
    let stripped = trimmed.strip_prefix("cluster_").unwrap_or(trimmed);
    stripped.parse::<u64>().ok()
}
