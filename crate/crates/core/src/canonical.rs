//! Canonical JSON encoding shared by every on-disk and on-wire artifact.
//!
//! Canonical form is compact UTF-8 JSON with object keys sorted
//! lexicographically, a single trailing LF, and numbers written without
//! trailing zeros: integral floats are emitted as integers (`10`, not
//! `10.0`), everything else uses the shortest round-tripping decimal.

use serde::Serialize;
use serde_json::{Map, Number, Value};

/// Largest integer magnitude that an `f64` represents exactly.
const MAX_EXACT_INT: f64 = 9_007_199_254_740_992.0;

/// Serializes `value` into canonical JSON bytes, terminated by `\n`.
pub fn to_canonical_bytes<T: Serialize + ?Sized>(value: &T) -> Vec<u8> {
    let mut out = to_canonical_line(value).into_bytes();
    out.push(b'\n');
    out
}

/// Serializes `value` into a single canonical JSON line without the trailing LF.
///
/// Used for JSON Lines output where the caller joins records.
pub fn to_canonical_line<T: Serialize + ?Sized>(value: &T) -> String {
    let tree = serde_json::to_value(value).expect("model types always serialize to JSON");
    let normalized = normalize(tree);
    serde_json::to_string(&normalized).expect("normalized value serializes")
}

/// Writes a sequence of records as canonical JSON Lines (one LF after each record).
pub fn to_canonical_jsonl<'a, T, I>(records: I) -> Vec<u8>
where
    T: Serialize + 'a,
    I: IntoIterator<Item = &'a T>,
{
    let mut out = Vec::new();
    for record in records {
        out.extend_from_slice(to_canonical_line(record).as_bytes());
        out.push(b'\n');
    }
    out
}

fn normalize(value: Value) -> Value {
    match value {
        Value::Number(n) => Value::Number(normalize_number(n)),
        Value::Array(items) => Value::Array(items.into_iter().map(normalize).collect()),
        Value::Object(map) => {
            // Sort explicitly: Map is insertion-ordered under `preserve_order`.
            let mut entries: Vec<(String, Value)> = map.into_iter().collect();
            entries.sort_by(|a, b| a.0.cmp(&b.0));
            let sorted: Map<String, Value> =
                entries.into_iter().map(|(k, v)| (k, normalize(v))).collect();
            Value::Object(sorted)
        }
        other => other,
    }
}

fn normalize_number(n: Number) -> Number {
    if n.is_i64() || n.is_u64() {
        return n;
    }
    let Some(f) = n.as_f64() else { return n };
    if f.fract() == 0.0 && f.abs() < MAX_EXACT_INT {
        // Also folds -0.0 into 0.
        return Number::from(f as i64);
    }
    n
}
