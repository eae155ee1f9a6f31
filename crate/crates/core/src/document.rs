//! Structured payload documents and dotted-path access.
//!
//! Payloads, workflow variables, and route predicates all operate on
//! [`serde_json::Value`] trees addressed by dotted paths (`"inputs.weight"`).

use serde_json::{Map, Value};

/// Look up a dotted path inside a document. Returns `None` when any
/// segment is missing or a non-object is traversed.
pub fn get_path<'a>(doc: &'a Value, path: &str) -> Option<&'a Value> {
    let mut cur = doc;
    for seg in path.split('.') {
        match cur {
            Value::Object(map) => cur = map.get(seg)?,
            Value::Array(items) => cur = items.get(seg.parse::<usize>().ok()?)?,
            _ => return None,
        }
    }
    Some(cur)
}

/// Set a dotted path inside a document, creating intermediate objects.
pub fn set_path(doc: &mut Value, path: &str, value: Value) {
    if !doc.is_object() {
        *doc = Value::Object(Map::new());
    }
    let mut cur = doc;
    let segs: Vec<&str> = path.split('.').collect();
    for seg in &segs[..segs.len() - 1] {
        let map = cur.as_object_mut().expect("object ensured above");
        cur = map
            .entry(seg.to_string())
            .or_insert_with(|| Value::Object(Map::new()));
        if !cur.is_object() {
            *cur = Value::Object(Map::new());
        }
    }
    cur.as_object_mut()
        .expect("object ensured above")
        .insert(segs[segs.len() - 1].to_string(), value);
}

/// Merge `src`'s top-level fields into `dst`; `src` wins on conflict.
pub fn merge_fields(dst: &mut Value, src: &Value) {
    if let (Value::Object(d), Value::Object(s)) = (dst, src) {
        for (k, v) in s {
            d.insert(k.clone(), v.clone());
        }
    }
}

/// Numeric view of a document value (integers widen to f64).
pub fn as_number(v: &Value) -> Option<f64> {
    v.as_f64()
}
