use std::fmt::Write as _;
use std::path::Path;

use serde_json::Value;

use crate::error::{BenchError, Result};
use crate::run::RunReport;

/// Report format tag written as the first field of `report.json`.
pub const REPORT_FORMAT: &str = "bag-report v1";

/// Header of `summary.csv`.
pub const CSV_HEADER: &str = "variant,seed,source_val_acc,target_pre_acc,target_post_acc";

/// A float with 17 significant digits (exact `f64` round trip).
pub fn f17(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_value(v: &Value, indent: usize, out: &mut String) {
    let pad = |n: usize| "  ".repeat(n);
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => match (n.as_u64(), n.as_i64()) {
            (Some(u), _) if !n.is_f64() => write!(out, "{u}").unwrap(),
            (_, Some(i)) if !n.is_f64() => write!(out, "{i}").unwrap(),
            _ => out.push_str(&f17(n.as_f64().expect("finite number"))),
        },
        Value::String(s) => out.push_str(&serde_json::to_string(s).expect("string serializes")),
        Value::Array(items) if items.is_empty() => out.push_str("[]"),
        Value::Array(items) => {
            // Numeric arrays (loss traces) stay on one line.
            if items.iter().all(Value::is_number) {
                out.push('[');
                for (i, x) in items.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    write_value(x, indent, out);
                }
                out.push(']');
                return;
            }
            out.push_str("[\n");
            for (i, x) in items.iter().enumerate() {
                out.push_str(&pad(indent + 1));
                write_value(x, indent + 1, out);
                out.push_str(if i + 1 < items.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(indent));
            out.push(']');
        }
        Value::Object(map) if map.is_empty() => out.push_str("{}"),
        Value::Object(map) => {
            out.push_str("{\n");
            for (i, (k, x)) in map.iter().enumerate() {
                out.push_str(&pad(indent + 1));
                out.push_str(&serde_json::to_string(k).expect("key serializes"));
                out.push_str(": ");
                write_value(x, indent + 1, out);
                out.push_str(if i + 1 < map.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(indent));
            out.push('}');
        }
    }
}

/// Pretty JSON in which every float carries 17 significant digits.
pub fn to_json_f17(v: &Value) -> String {
    let mut out = String::new();
    write_value(v, 0, &mut out);
    out.push('\n');
    out
}

/// The full report as JSON (`wall_clock_seconds` excluded).
pub fn report_json(report: &RunReport) -> String {
    let mut root = serde_json::Map::new();
    root.insert("format".into(), Value::String(REPORT_FORMAT.into()));
    let body = serde_json::to_value(report).expect("report serializes");
    if let Value::Object(m) = body {
        root.extend(m);
    }
    to_json_f17(&Value::Object(root))
}

/// One CSV row per completed (variant, seed).
pub fn report_csv(report: &RunReport) -> String {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(CSV_HEADER.split(',')).expect("in-memory write");
    for r in &report.runs {
        w.write_record([
            r.variant.tag().to_string(),
            r.seed.to_string(),
            f17(r.source_val_acc),
            f17(r.target_pre_acc),
            f17(r.target_post_acc),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ASCII output")
}

/// Write `report.json` and `summary.csv` into `dir` (created if missing).
pub fn write_reports(report: &RunReport, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| BenchError::io(dir, e))?;
    for (name, body) in [("report.json", report_json(report)), ("summary.csv", report_csv(report))] {
        let path = dir.join(name);
        std::fs::write(&path, body).map_err(|e| BenchError::io(&path, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_through_17_digits() {
        for v in [0.1, 1.0 / 3.0, 0.943_200_000_000_000_1, 1e-300, 123456.789] {
            assert_eq!(f17(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(f17(0.5), "5.0000000000000000e-1");
    }

    #[test]
    fn json_writer_keeps_integers_and_formats_floats() {
        let v = serde_json::json!({"seed": 3, "acc": 0.25, "trace": [1.0, 0.5], "tag": "a\"b", "none": null});
        let s = to_json_f17(&v);
        let back: Value = serde_json::from_str(&s).unwrap();
        assert_eq!(back["seed"], 3);
        assert_eq!(back["acc"].as_f64(), Some(0.25));
        assert_eq!(back["tag"], "a\"b");
        assert!(s.contains("\"acc\": 2.5000000000000000e-1"));
        assert!(s.contains("[1.0000000000000000e0, 5.0000000000000000e-1]"));
    }
}
