//! Plain-text field files.
//!
//! Polynomial file: one line per monomial, `e₁ … eₙ  coefficient`, written in
//! graded-lex order for every monomial up to the polynomial degree. A
//! polynomial expanded around a non-zero origin carries a leading
//! `# origin x₁ … xₙ` line.
//!
//! Grid file: header `n h d₁ … dₙ`, an optional `# origin x₁ … xₙ` line, then
//! the values in row-major order (first axis slowest), one lattice row per
//! line.
//!
//! Numbers are written in shortest round-trip form, so both formats
//! round-trip bit-exactly. Lines starting with `#` other than the origin line
//! are ignored.

use std::fmt::Write as _;
use std::path::Path;

use super::{GridField, Polynomial};
use crate::error::{Error, Result};

fn fmt_f64(v: f64) -> String {
    format!("{v:e}")
}

fn parse_f64(tok: &str, line: usize) -> Result<f64> {
    tok.parse::<f64>()
        .map_err(|_| Error::Parse(format!("line {line}: bad number '{tok}'")))
}

fn origin_line(origin: &[f64]) -> Option<String> {
    if origin.iter().all(|&o| o == 0.0) {
        return None;
    }
    let parts: Vec<String> = origin.iter().map(|&o| fmt_f64(o)).collect();
    Some(format!("# origin {}", parts.join(" ")))
}

fn parse_origin(line: &str, lineno: usize) -> Result<Option<Vec<f64>>> {
    let rest = line.trim_start_matches('#').trim();
    if let Some(vals) = rest.strip_prefix("origin") {
        let o = vals
            .split_whitespace()
            .map(|t| parse_f64(t, lineno))
            .collect::<Result<Vec<_>>>()?;
        return Ok(Some(o));
    }
    Ok(None)
}

pub fn polynomial_to_string(p: &Polynomial) -> String {
    let mut s = String::new();
    if let Some(o) = origin_line(p.origin()) {
        s.push_str(&o);
        s.push('\n');
    }
    for (e, &c) in p.exponents().iter().zip(p.coefficients()) {
        let exps: Vec<String> = e.iter().map(|k| k.to_string()).collect();
        let _ = writeln!(s, "{}  {}", exps.join(" "), fmt_f64(c));
    }
    s
}

pub fn polynomial_from_str(text: &str) -> Result<Polynomial> {
    let mut origin: Option<Vec<f64>> = None;
    let mut terms: Vec<(Vec<u32>, f64)> = Vec::new();
    let mut n: Option<usize> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let lineno = i + 1;
        if line.is_empty() {
            continue;
        }
        if line.starts_with('#') {
            if let Some(o) = parse_origin(line, lineno)? {
                origin = Some(o);
            }
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() < 2 {
            return Err(Error::Parse(format!("line {lineno}: expected exponents and a coefficient")));
        }
        let dim = toks.len() - 1;
        match n {
            None => n = Some(dim),
            Some(m) if m != dim => {
                return Err(Error::Parse(format!("line {lineno}: {dim} exponents, expected {m}")));
            }
            _ => {}
        }
        let exps = toks[..dim]
            .iter()
            .map(|t| t.parse::<u32>().map_err(|_| Error::Parse(format!("line {lineno}: bad exponent '{t}'"))))
            .collect::<Result<Vec<_>>>()?;
        if terms.iter().any(|(e, _)| *e == exps) {
            return Err(Error::Parse(format!("line {lineno}: duplicate monomial {exps:?}")));
        }
        terms.push((exps, parse_f64(toks[dim], lineno)?));
    }
    let n = n.ok_or_else(|| Error::Parse("polynomial file has no terms".into()))?;
    let origin = origin.unwrap_or_else(|| vec![0.0; n]);
    if origin.len() != n {
        return Err(Error::Parse("origin dimension does not match exponents".into()));
    }
    let degree = terms.iter().map(|(e, _)| e.iter().sum::<u32>() as usize).max().unwrap_or(0);
    let mut p = Polynomial::zero(n, degree)?.recentered(&origin);
    for (e, c) in &terms {
        p.set_coefficient(e, *c)?;
    }
    Ok(p)
}

pub fn grid_to_string(g: &GridField) -> String {
    let mut s = String::new();
    let dims: Vec<String> = g.dims.iter().map(|d| d.to_string()).collect();
    let _ = writeln!(s, "{} {} {}", g.n(), fmt_f64(g.h), dims.join(" "));
    if let Some(o) = origin_line(&g.origin) {
        s.push_str(&o);
        s.push('\n');
    }
    let row = *g.dims.last().expect("non-empty dims");
    for chunk in g.values.chunks(row) {
        let vals: Vec<String> = chunk.iter().map(|&v| fmt_f64(v)).collect();
        s.push_str(&vals.join(" "));
        s.push('\n');
    }
    s
}

pub fn grid_from_str(text: &str) -> Result<GridField> {
    let mut header: Option<(usize, f64, Vec<usize>)> = None;
    let mut origin: Option<Vec<f64>> = None;
    let mut values = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let lineno = i + 1;
        if line.is_empty() {
            continue;
        }
        if line.starts_with('#') {
            if let Some(o) = parse_origin(line, lineno)? {
                origin = Some(o);
            }
            continue;
        }
        if header.is_none() {
            let toks: Vec<&str> = line.split_whitespace().collect();
            let n: usize = toks
                .first()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| Error::Parse(format!("line {lineno}: bad grid header")))?;
            if toks.len() != n + 2 {
                return Err(Error::Parse(format!("line {lineno}: header needs n, h and {n} dims")));
            }
            let h = parse_f64(toks[1], lineno)?;
            let dims = toks[2..]
                .iter()
                .map(|t| t.parse::<usize>().map_err(|_| Error::Parse(format!("line {lineno}: bad dim '{t}'"))))
                .collect::<Result<Vec<_>>>()?;
            header = Some((n, h, dims));
            continue;
        }
        for t in line.split_whitespace() {
            values.push(parse_f64(t, lineno)?);
        }
    }
    let (n, h, dims) = header.ok_or_else(|| Error::Parse("grid file has no header".into()))?;
    GridField::new(h, dims, origin.unwrap_or_else(|| vec![0.0; n]), values)
}

pub fn write_polynomial(path: &Path, p: &Polynomial) -> Result<()> {
    Ok(std::fs::write(path, polynomial_to_string(p))?)
}

pub fn read_polynomial(path: &Path) -> Result<Polynomial> {
    polynomial_from_str(&std::fs::read_to_string(path)?)
}

pub fn write_grid(path: &Path, g: &GridField) -> Result<()> {
    Ok(std::fs::write(path, grid_to_string(g))?)
}

pub fn read_grid(path: &Path) -> Result<GridField> {
    grid_from_str(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{builtin_field, BoxDomain};
    use proptest::prelude::*;

    #[test]
    fn documented_line_format() {
        let p = Polynomial::from_terms(3, vec![0.0; 3], &[(vec![2, 0, 0], 0.5)]).unwrap();
        let s = polynomial_to_string(&p);
        assert!(s.lines().any(|l| l == "2 0 0  5e-1"));
        assert!(!s.contains("origin"));
    }

    #[test]
    fn malformed_files_are_rejected() {
        assert!(polynomial_from_str("").is_err());
        assert!(polynomial_from_str("1 0 2.0\n1 2.0\n").is_err());
        assert!(polynomial_from_str("1 0 2.0\n1 0 3.0\n").is_err());
        assert!(grid_from_str("2 0.1 2 2\n1 2 3\n").is_err());
        assert!(grid_from_str("2 0.1 2\n1 2 3 4\n").is_err());
    }

    proptest! {
        #[test]
        fn polynomial_round_trip(coeffs in prop::collection::vec(-1e6f64..1e6, 10), o in -3.0f64..3.0) {
            let p = Polynomial::with_coefficients(2, 3, vec![o, -o / 3.0], coeffs).unwrap();
            let q = polynomial_from_str(&polynomial_to_string(&p)).unwrap();
            prop_assert_eq!(p, q);
        }

        #[test]
        fn grid_round_trip(seed in 0u64..1000, c in -2.0f64..2.0) {
            let f = builtin_field("convex_poly", &[seed as f64, 4.0], 2).unwrap();
            let b = BoxDomain::cube(vec![c, 0.1], 0.3, 5).unwrap();
            let g = GridField::sample(&b, |x| f.value(x)).unwrap();
            let back = grid_from_str(&grid_to_string(&g)).unwrap();
            prop_assert_eq!(g, back);
        }
    }
}
