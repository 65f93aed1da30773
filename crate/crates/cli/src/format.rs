//! Fixed output formatting, so that bundles are byte-stable.

use serde_json::Value;

/// Six significant digits, `%g` style: fixed notation for exponents in
/// [-4, 6), scientific otherwise, trailing zeros trimmed.
pub fn g6(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}"))
    } else {
        format!("{}e{}{:02}", trim_zeros(mantissa), if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

/// Empty cell for absent values.
pub fn cell(x: Option<f64>) -> String {
    x.map(g6).unwrap_or_default()
}

/// Rounds every float in a JSON tree to six significant digits. Non-finite
/// numbers cannot appear in JSON and are already `null` at this point.
pub fn round_json(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().expect("f64 number");
            let r: f64 = g6(x).parse().expect("g6 output parses");
            serde_json::Number::from_f64(r).map_or(Value::Null, Value::Number)
        }
        Value::Array(a) => Value::Array(a.into_iter().map(round_json).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, round_json(v))).collect()),
        other => other,
    }
}

/// Pretty JSON with rounded floats and a trailing newline.
pub fn json_string<T: serde::Serialize>(value: &T) -> String {
    let v = round_json(serde_json::to_value(value).expect("serializable output"));
    serde_json::to_string_pretty(&v).expect("JSON value serializes") + "\n"
}
