//! Line-delimited JSON output with lossless floats.
//!
//! Every float is written in scientific notation with 17 significant digits,
//! which round-trips any `f64` exactly and keeps output byte-stable across
//! platforms.

use std::io;

use serde::Serialize;
use serde_json::ser::Formatter;

#[derive(Debug, Clone, Copy, Default)]
pub struct ExactFloatFormatter;

impl Formatter for ExactFloatFormatter {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{}", format_f64(value))
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }
}

/// `{:.16e}` formatting of a finite float.
pub fn format_f64(value: f64) -> String {
    format!("{value:.16e}")
}

/// One compact JSON document with exact floats, without a trailing newline.
pub fn to_line<T: Serialize + ?Sized>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, ExactFloatFormatter);
    value.serialize(&mut ser).expect("in-memory JSON serialization");
    String::from_utf8(buf).expect("JSON is UTF-8")
}

/// Pretty-printed JSON with exact floats.
pub fn to_pretty<T: Serialize + ?Sized>(value: &T) -> String {
    // exact floats matter more than indentation; serialize compactly, then reindent
    let compact = to_line(value);
    let v: serde_json::Value = serde_json::from_str(&compact).expect("round trip of own output");
    let mut out = String::new();
    pretty(&v, 0, &mut out);
    out
}

fn pretty(v: &serde_json::Value, depth: usize, out: &mut String) {
    use serde_json::Value;
    let pad = |d: usize| "  ".repeat(d);
    match v {
        Value::Array(items) if !items.is_empty() => {
            out.push('[');
            if items.iter().all(|x| !x.is_array() && !x.is_object()) {
                let parts: Vec<String> = items.iter().map(to_line).collect();
                out.push_str(&parts.join(", "));
                out.push(']');
                return;
            }
            for (i, x) in items.iter().enumerate() {
                out.push('\n');
                out.push_str(&pad(depth + 1));
                pretty(x, depth + 1, out);
                if i + 1 < items.len() {
                    out.push(',');
                }
            }
            out.push('\n');
            out.push_str(&pad(depth));
            out.push(']');
        }
        Value::Object(map) if !map.is_empty() => {
            out.push('{');
            for (i, (k, x)) in map.iter().enumerate() {
                out.push('\n');
                out.push_str(&pad(depth + 1));
                out.push_str(&to_line(k));
                out.push_str(": ");
                pretty(x, depth + 1, out);
                if i + 1 < map.len() {
                    out.push(',');
                }
            }
            out.push('\n');
            out.push_str(&pad(depth));
            out.push('}');
        }
        Value::Number(n) => match n.as_f64() {
            Some(f) if !n.is_i64() && !n.is_u64() => out.push_str(&format_f64(f)),
            _ => out.push_str(&n.to_string()),
        },
        other => out.push_str(&to_line(other)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_exactly() {
        for x in [0.1, -1.0 / 3.0, 6378.137, 1e-300, 5e-324, f64::MAX, 0.0, -0.0] {
            let s = to_line(&x);
            let back: f64 = serde_json::from_str(&s).unwrap();
            assert_eq!(back.to_bits(), x.to_bits(), "{s}");
        }
        assert_eq!(to_line(&1.5f64), "1.5000000000000000e0");
    }

    #[test]
    fn pretty_keeps_exact_floats() {
        let v = serde_json::json!({"a": [0.1, 2], "b": {"c": -1.0e-7}});
        let s = to_pretty(&v);
        assert!(s.contains("1.0000000000000001e-1"), "{s}");
        let back: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(back, v);
    }
}
