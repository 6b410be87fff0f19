//! Deterministic serialization helpers.  All reals are written in decimal
//! with 17 significant digits so that repeated runs are byte-identical and
//! values round-trip exactly through f64.

use serde_json::Value;

/// 17 significant digits, exponent form; valid as a JSON number.
pub fn fmt_g17(x: f64) -> String {
    debug_assert!(x.is_finite(), "non-finite real in output: {x}");
    format!("{:.16e}", x)
}

/// Write a serde_json::Value with f64 numbers in g17 form and object keys in
/// the (already sorted) map order.  Integers stay integers.
pub fn write_value(out: &mut String, v: &Value) {
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                out.push_str(&i.to_string());
            } else if let Some(u) = n.as_u64() {
                out.push_str(&u.to_string());
            } else {
                out.push_str(&fmt_g17(n.as_f64().unwrap()));
            }
        }
        Value::String(s) => out.push_str(&serde_json::to_string(s).unwrap()),
        Value::Array(items) => {
            out.push('[');
            for (k, item) in items.iter().enumerate() {
                if k > 0 {
                    out.push(',');
                }
                write_value(out, item);
            }
            out.push(']');
        }
        Value::Object(map) => {
            out.push('{');
            for (k, (key, item)) in map.iter().enumerate() {
                if k > 0 {
                    out.push(',');
                }
                out.push_str(&serde_json::to_string(key).unwrap());
                out.push(':');
                write_value(out, item);
            }
            out.push('}');
        }
    }
}

pub fn value_to_string(v: &Value) -> String {
    let mut s = String::new();
    write_value(&mut s, v);
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g17_round_trips() {
        for &x in &[1.0, -0.012339999, 3.0f64.sqrt(), 1e-300, 6.02e23] {
            let s = fmt_g17(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
        }
    }

    #[test]
    fn integers_stay_integers() {
        let v = serde_json::json!({"dims": [33, 33, 33], "h": [0.03125]});
        let s = value_to_string(&v);
        assert!(s.contains("[33,33,33]"));
        assert!(s.contains("3.1250000000000000e-2"));
    }
}
