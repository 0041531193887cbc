//! Byte-stable serialization of run artifacts.

use std::io::{self, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter, Serializer};
use serde_json::Value;

use crate::error::{Error, Result};

/// Formats a finite float with 17 significant digits.
pub fn format_f64(v: f64) -> String {
    if v == 0.0 {
        return if v.is_sign_negative() { "-0.0000000000000000e0".into() } else { "0.0000000000000000e0".into() };
    }
    format!("{v:.16e}")
}

/// Pretty JSON whose floats carry 17 significant digits. Non-finite floats
/// become `null` (serde_json routes them to `write_null`).
struct Sig17<'a> {
    inner: PrettyFormatter<'a>,
}

impl Formatter for Sig17<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, v: f64) -> io::Result<()> {
        w.write_all(format_f64(v).as_bytes())
    }

    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, v: f32) -> io::Result<()> {
        self.write_f64(w, v as f64)
    }

    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_array(w)
    }

    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_array(w)
    }

    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_array_value(w)
    }

    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_object(w)
    }

    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_object(w)
    }

    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_object_value(w)
    }
}

/// Compact single-line variant for JSON Lines.
struct Sig17Compact;

impl Formatter for Sig17Compact {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, v: f64) -> io::Result<()> {
        w.write_all(format_f64(v).as_bytes())
    }

    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, v: f32) -> io::Result<()> {
        self.write_f64(w, v as f64)
    }
}

fn json_err(e: serde_json::Error) -> Error {
    Error::Io(io::Error::other(e))
}

pub fn to_json_pretty<T: Serialize + ?Sized>(v: &T) -> Result<String> {
    let mut buf = Vec::new();
    let fmt = Sig17 {
        inner: PrettyFormatter::with_indent(b"  "),
    };
    let mut ser = Serializer::with_formatter(&mut buf, fmt);
    v.serialize(&mut ser).map_err(json_err)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

pub fn to_json_line<T: Serialize + ?Sized>(v: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = Serializer::with_formatter(&mut buf, Sig17Compact);
    v.serialize(&mut ser).map_err(json_err)?;
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

/// `x1,…,xn,lambda1,…,lambdan,rank`.
pub fn rankmap_header(n: usize) -> String {
    let xs = (1..=n).map(|i| format!("x{i}"));
    let ls = (1..=n).map(|i| format!("lambda{i}"));
    xs.chain(ls).chain(std::iter::once("rank".to_string())).collect::<Vec<_>>().join(",")
}

pub fn rankmap_row(x: &[f64], eigenvalues: &[f64], rank: usize) -> String {
    let mut cells: Vec<String> = x.iter().chain(eigenvalues).map(|&v| format_f64(v)).collect();
    cells.push(rank.to_string());
    cells.join(",")
}

/// Files produced by one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifacts {
    pub summary: Value,
    pub audit_lines: Vec<String>,
    pub rankmap: Vec<String>,
    pub n: usize,
    pub meta: Value,
}

pub const SUMMARY_FILE: &str = "summary.json";
pub const AUDIT_FILE: &str = "audit.jsonl";
pub const RANKMAP_FILE: &str = "rankmap.csv";
pub const META_FILE: &str = "meta.json";

pub fn emit_report(dir: &Path, a: &Artifacts) -> Result<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Error::Io(io::Error::new(e.kind(), format!("cannot create {}: {e}", dir.display()))))?;
    std::fs::write(dir.join(SUMMARY_FILE), to_json_pretty(&a.summary)?)?;
    let mut audit = a.audit_lines.join("\n");
    if !audit.is_empty() {
        audit.push('\n');
    }
    std::fs::write(dir.join(AUDIT_FILE), audit)?;
    let mut csv = rankmap_header(a.n);
    csv.push('\n');
    for r in &a.rankmap {
        csv.push_str(r);
        csv.push('\n');
    }
    std::fs::write(dir.join(RANKMAP_FILE), csv)?;
    std::fs::write(dir.join(META_FILE), to_json_pretty(&a.meta)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use serde_json::json;

    #[test]
    fn floats_have_seventeen_digits() {
        assert_eq!(format_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(format_f64(1.0), "1.0000000000000000e0");
        assert_eq!(format_f64(-2.5e-300), "-2.5000000000000000e-300");
        let s = to_json_line(&json!({"a": 0.5, "b": [1, f64::NAN], "c": f64::INFINITY})).unwrap();
        assert_eq!(s, r#"{"a":5.0000000000000000e-1,"b":[1,null],"c":null}"#);
    }

    #[test]
    fn header_shape() {
        assert_eq!(rankmap_header(2), "x1,x2,lambda1,lambda2,rank");
        assert_eq!(rankmap_row(&[0.5, 1.0], &[0.0, 2.0], 1).split(',').count(), 5);
    }

    proptest! {
        #[test]
        fn formatted_floats_round_trip(v in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO) {
            let s = format_f64(v);
            prop_assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits());
            let back: f64 = serde_json::from_str(&to_json_line(&v).unwrap()).unwrap();
            prop_assert_eq!(back, v);
        }
    }
}
