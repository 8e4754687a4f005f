//! Number formatting and the metadata block shared by every subcommand.

use serde_json::{json, Map, Value};

/// Seventeen significant digits, round-trippable.
pub fn full(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// Four significant digits in positional notation where that stays short.
pub fn sig4(x: f64) -> String {
    if !x.is_finite() {
        return full(x);
    }
    if x == 0.0 {
        return "0.000".into();
    }
    let mag = x.abs().log10().floor() as i32;
    // Rounding can bump the magnitude (9.9996 → 10.00).
    let rounded: f64 = format!("{:.3e}", x).parse().unwrap_or(x);
    let mag = if rounded.abs() >= 10f64.powi(mag + 1) { mag + 1 } else { mag };
    let decimals = 3 - mag;
    if (0..=8).contains(&decimals) {
        format!("{:.*}", decimals as usize, rounded)
    } else if decimals < 0 && mag < 9 {
        format!("{rounded:.0}")
    } else {
        format!("{x:.3e}")
    }
}

/// Ordered `(key, value)` metadata for one run.
#[derive(Debug, Clone, Default)]
pub struct Metadata {
    entries: Vec<(String, String)>,
}

impl Metadata {
    pub fn new(command: &str) -> Self {
        let mut m = Metadata::default();
        m.push("tool", format!("treegibbs {}", env!("CARGO_PKG_VERSION")));
        m.push("command", command);
        m
    }

    pub fn push(&mut self, key: &str, value: impl ToString) {
        self.entries.push((key.to_string(), value.to_string()));
    }

    pub fn pairs(&self) -> Vec<(&str, String)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.clone())).collect()
    }

    pub fn csv_header(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("# {k}: {v}\n")).collect()
    }

    pub fn json(&self) -> Value {
        let mut m = Map::new();
        for (k, v) in &self.entries {
            m.insert(k.clone(), Value::String(v.clone()));
        }
        Value::Object(m)
    }
}

/// A finished result in both output formats.
pub struct Emit {
    pub json: Value,
    pub csv: String,
}

impl Emit {
    /// `csv` must already carry the metadata header.
    pub fn new(meta: &Metadata, body: Value, csv: String) -> Self {
        let mut json = json!({ "metadata": meta.json() });
        if let (Value::Object(dst), Value::Object(src)) = (&mut json, body) {
            dst.extend(src);
        }
        Emit { json, csv }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig4_matches_table_precision() {
        assert_eq!(sig4(1.996_59), "1.997");
        assert_eq!(sig4(0.724_02), "0.7240");
        assert_eq!(sig4(0.069_456), "0.06946");
        assert_eq!(sig4(0.009_238_7), "0.009239");
        assert_eq!(sig4(9.999_6), "10.00");
        assert_eq!(sig4(-2.5), "-2.500");
        assert_eq!(sig4(1.5e-12), "1.500e-12");
    }

    #[test]
    fn full_precision_round_trips() {
        let x = 0.1 + 0.2;
        assert_eq!(full(x).parse::<f64>().unwrap(), x);
        assert_eq!(full(f64::INFINITY), "inf");
    }
}
