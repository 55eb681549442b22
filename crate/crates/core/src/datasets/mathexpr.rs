//! Arithmetic expressions over two grid-valued reals.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{stream, weighted_index, Domain};
use crate::table::{ColumnSpec, Schema, Table, Value};

pub const UNARY: [&str; 9] = ["none", "log", "exp", "sqrt", "sin", "cos", "tan", "square", "cube"];
pub const BINARY: [&str; 4] = ["add", "sub", "mul", "div"];

pub const X1_PRIOR: [(&str, f64); 9] = [
    ("none", 0.18),
    ("log", 0.16),
    ("sqrt", 0.13),
    ("square", 0.12),
    ("sin", 0.10),
    ("cos", 0.10),
    ("tan", 0.07),
    ("exp", 0.07),
    ("cube", 0.07),
];
pub const X2_PRIOR: [(&str, f64); 9] = [
    ("none", 0.22),
    ("sin", 0.14),
    ("cos", 0.14),
    ("sqrt", 0.12),
    ("log", 0.10),
    ("square", 0.09),
    ("tan", 0.07),
    ("exp", 0.06),
    ("cube", 0.06),
];
pub const BINARY_PRIOR: [(&str, f64); 4] = [("add", 0.35), ("mul", 0.30), ("sub", 0.20), ("div", 0.15)];

pub const X1_MEAN: f64 = 3.0;
pub const X2_MEAN: f64 = 6.5;
pub const X_STD: f64 = 1.0;

pub const COLUMNS: [&str; 6] = ["x1", "x2", "operation_x1", "operation_x2", "operation_between", "latex_expression"];

#[derive(Debug, Clone, PartialEq)]
pub struct MathExprRecord {
    pub x1: f64,
    pub x2: f64,
    pub o1: String,
    pub o2: String,
    pub o3: String,
    pub latex: String,
}

pub fn schema() -> Schema {
    Schema::new(
        "mathexpr",
        vec![
            ColumnSpec::numerical(COLUMNS[0]),
            ColumnSpec::numerical(COLUMNS[1]),
            ColumnSpec::categorical(COLUMNS[2], &UNARY),
            ColumnSpec::categorical(COLUMNS[3], &UNARY),
            ColumnSpec::categorical(COLUMNS[4], &BINARY),
            ColumnSpec::text(COLUMNS[5]),
        ],
    )
}

/// Points `lo/10, (lo+1)/10, ..., hi/10` with weights proportional to the
/// normal density at each point.
pub fn grid_gaussian(lo: i32, hi: i32, mean: f64, std: f64) -> (Vec<f64>, Vec<f64>) {
    let xs: Vec<f64> = (lo..=hi).map(|k| k as f64 / 10.0).collect();
    let w: Vec<f64> = xs.iter().map(|x| (-0.5 * ((x - mean) / std).powi(2)).exp()).collect();
    let total: f64 = w.iter().sum();
    (xs, w.into_iter().map(|v| v / total).collect())
}

pub fn x1_support() -> (Vec<f64>, Vec<f64>) {
    grid_gaussian(0, 60, X1_MEAN, X_STD)
}

pub fn x2_support() -> (Vec<f64>, Vec<f64>) {
    grid_gaussian(30, 100, X2_MEAN, X_STD)
}

fn draw<'a, R: Rng + ?Sized>(rng: &mut R, prior: &[(&'a str, f64)]) -> &'a str {
    let w: Vec<f64> = prior.iter().map(|p| p.1).collect();
    prior[weighted_index(rng, &w)].0
}

pub fn render_term(x: f64, op: &str) -> Result<String> {
    Ok(match op {
        "none" => format!("{x:.2}"),
        "log" | "exp" | "sin" | "cos" | "tan" => format!("\\{op}({x:.2})"),
        "sqrt" => format!("\\sqrt{{{x:.2}}}"),
        "square" => format!("({x:.2})^2"),
        "cube" => format!("({x:.2})^3"),
        _ => return Err(Error::Precondition(format!("unknown unary operator `{op}`"))),
    })
}

pub fn render_latex(x1: f64, x2: f64, o1: &str, o2: &str, o3: &str) -> Result<String> {
    let a = render_term(x1, o1)?;
    let b = render_term(x2, o2)?;
    Ok(match o3 {
        "add" => format!("{a} + {b}"),
        "sub" => format!("{a} - {b}"),
        "mul" => format!("{a} \\times {b}"),
        "div" => format!("\\frac{{{a}}}{{{b}}}"),
        _ => return Err(Error::Precondition(format!("unknown binary operator `{o3}`"))),
    })
}

/// Operators and literal text recovered from a rendered expression.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedExpr {
    pub o1: &'static str,
    pub o2: &'static str,
    pub o3: &'static str,
    /// Inner text of each term, ideally a decimal literal.
    pub args: [String; 2],
}

fn parse_term(t: &str) -> Option<(&'static str, String)> {
    for op in ["log", "exp", "sin", "cos", "tan"] {
        if let Some(rest) = t.strip_prefix('\\').and_then(|r| r.strip_prefix(op)) {
            let inner = rest.strip_prefix('(')?.strip_suffix(')')?;
            return Some((op, inner.into()));
        }
    }
    if let Some(rest) = t.strip_prefix("\\sqrt{") {
        return Some(("sqrt", rest.strip_suffix('}')?.into()));
    }
    if let Some(rest) = t.strip_prefix('(') {
        if let Some(inner) = rest.strip_suffix(")^2") {
            return Some(("square", inner.into()));
        }
        if let Some(inner) = rest.strip_suffix(")^3") {
            return Some(("cube", inner.into()));
        }
        return None;
    }
    if t.is_empty() || t.contains(['\\', '{', '}', '(', ')', '^']) {
        return None;
    }
    Some(("none", t.into()))
}

/// Split `{A}{B}` at the brace that closes the first group.
fn split_groups(s: &str) -> Option<(&str, &str)> {
    let body = s.strip_prefix('{')?;
    let mut depth = 1usize;
    for (i, c) in body.char_indices() {
        match c {
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    let second = body[i + 1..].strip_prefix('{')?.strip_suffix('}')?;
                    return Some((&body[..i], second));
                }
            }
            _ => {}
        }
    }
    None
}

/// Parse by the generation grammar. Whitespace is insignificant.
pub fn parse_latex(s: &str) -> Option<ParsedExpr> {
    let compact: String = s.chars().filter(|c| !c.is_whitespace()).collect();
    let (o3, a, b) = if let Some(rest) = compact.strip_prefix("\\frac") {
        let (a, b) = split_groups(rest)?;
        ("div", a, b)
    } else {
        let mut found = None;
        for (sep, op) in [("\\times", "mul"), ("+", "add"), ("-", "sub")] {
            let mut parts = compact.splitn(3, sep);
            if let (Some(a), Some(b), None) = (parts.next(), parts.next(), parts.next()) {
                if found.is_some() {
                    return None;
                }
                found = Some((op, a, b));
            }
        }
        found?
    };
    let (o1, x1) = parse_term(a)?;
    let (o2, x2) = parse_term(b)?;
    Some(ParsedExpr { o1, o2, o3, args: [x1, x2] })
}

/// Decimal literals in left-to-right order: digits with at most one point.
pub fn extract_literals(s: &str) -> Vec<f64> {
    let mut out = Vec::new();
    let bytes = s.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i].is_ascii_digit() || (bytes[i] == b'.' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit)) {
            let start = i;
            let mut seen_point = false;
            while i < bytes.len() && (bytes[i].is_ascii_digit() || (bytes[i] == b'.' && !seen_point)) {
                seen_point |= bytes[i] == b'.';
                i += 1;
            }
            // "^2" and "^3" are exponents, not literals
            if start > 0 && bytes[start - 1] == b'^' {
                continue;
            }
            if let Ok(v) = s[start..i].trim_end_matches('.').parse() {
                out.push(v);
            }
        } else {
            i += 1;
        }
    }
    out
}

/// The two numeric literals of an expression: grammar first, then the
/// left-to-right scan when a term's argument is not a plain number.
pub fn literals(s: &str) -> Option<[f64; 2]> {
    if let Some(p) = parse_latex(s) {
        if let (Ok(a), Ok(b)) = (p.args[0].parse::<f64>(), p.args[1].parse::<f64>()) {
            return Some([a, b]);
        }
    }
    match extract_literals(s)[..] {
        [a, b, ..] => Some([a, b]),
        _ => None,
    }
}

pub fn sample_record<R: Rng + ?Sized>(rng: &mut R) -> MathExprRecord {
    let (s1, w1) = x1_support();
    let (s2, w2) = x2_support();
    let x1 = s1[weighted_index(rng, &w1)];
    let x2 = s2[weighted_index(rng, &w2)];
    let o1 = draw(rng, &X1_PRIOR);
    let o2 = draw(rng, &X2_PRIOR);
    let o3 = draw(rng, &BINARY_PRIOR);
    let latex = render_latex(x1, x2, o1, o2, o3).expect("operators come from the priors");
    MathExprRecord { x1, x2, o1: o1.into(), o2: o2.into(), o3: o3.into(), latex }
}

/// `n` records; record `i` uses its own stream so any slice of the index
/// range can be produced independently.
pub fn gen_mathexpr(n: usize, seed: u64) -> Result<Table> {
    crate::error::ensure!(n >= 1, Precondition, "need at least one row");
    let mut table = Table::new(schema());
    for i in 0..n {
        let r = sample_record(&mut stream(seed, Domain::DataGen, i as u64));
        table.push_row(vec![
            Value::Num(r.x1),
            Value::Num(r.x2),
            r.o1.into(),
            r.o2.into(),
            r.o3.into(),
            r.latex.into(),
        ])?;
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rendering_examples() {
        assert_eq!(render_latex(2.75, 6.40, "sin", "log", "mul").unwrap(), r"\sin(2.75) \times \log(6.40)");
        assert_eq!(render_latex(1.0, 3.0, "none", "none", "add").unwrap(), "1.00 + 3.00");
        assert_eq!(render_latex(2.0, 4.0, "square", "sqrt", "div").unwrap(), r"\frac{(2.00)^2}{\sqrt{4.00}}");
        assert_eq!(render_latex(0.1, 9.9, "exp", "cube", "sub").unwrap(), r"\exp(0.10) - (9.90)^3");
        assert!(render_latex(1.0, 1.0, "cosh", "none", "add").is_err());
        assert!(render_latex(1.0, 1.0, "none", "none", "pow").is_err());
    }

    #[test]
    fn parse_inverts_render_for_every_operator() {
        for o1 in UNARY {
            for o2 in UNARY {
                for o3 in BINARY {
                    let s = render_latex(0.3, 7.25, o1, o2, o3).unwrap();
                    let p = parse_latex(&s).unwrap();
                    assert_eq!((p.o1, p.o2, p.o3), (o1, o2, o3), "{s}");
                    assert_eq!(literals(&s), Some([0.3, 7.25]));
                }
            }
        }
    }

    #[test]
    fn parse_rejects_malformed() {
        for s in ["", r"\sin(2.00)", r"\sin(2.00 + 3.00", r"2.00 + 3.00 + 1.00", r"\frac{2.00}", r"\sinh(1.00) + 2.00", "1.00 - 2.00 + 3.00"] {
            assert_eq!(parse_latex(s), None, "{s}");
        }
        let p = parse_latex(r"\sin( 2.00)\times\log(6.40 )").unwrap();
        assert_eq!((p.o1, p.o2, p.o3), ("sin", "log", "mul"));
    }

    #[test]
    fn literal_scan_fallback() {
        assert_eq!(extract_literals(r"(2.50)^2 junk \log{6.4}"), vec![2.5, 6.4]);
        assert_eq!(literals(r"\sin(2.5x) + 7"), Some([2.5, 7.0]));
        assert_eq!(literals(r"\sin(x) + y"), None);
    }

    #[test]
    fn grid_mean_matches_brute_force() {
        let mut num = 0.0;
        let mut den = 0.0;
        for k in 0..=60 {
            let x = k as f64 * 0.1;
            let w = (-(x - 3.0) * (x - 3.0) / 2.0).exp();
            num += w * x;
            den += w;
        }
        let (xs, ws) = x1_support();
        let m: f64 = xs.iter().zip(&ws).map(|(x, w)| x * w).sum();
        assert!((m - num / den).abs() < 1e-12);
        assert_eq!(xs.len(), 61);
        assert_eq!(x2_support().0.len(), 71);
        assert_eq!(*x2_support().0.last().unwrap(), 10.0);
    }

    #[test]
    fn generator_is_deterministic_and_consistent() {
        let a = gen_mathexpr(300, 5).unwrap();
        assert_eq!(a, gen_mathexpr(300, 5).unwrap());
        assert_ne!(a, gen_mathexpr(300, 6).unwrap());
        assert!(gen_mathexpr(0, 5).is_err());
        a.validate().unwrap();
        for i in 0..a.num_rows() {
            let row = a.row(i);
            let (x1, x2) = (row[0].as_num().unwrap(), row[1].as_num().unwrap());
            assert!((0.0..=6.0).contains(&x1) && (3.0..=10.0).contains(&x2));
            assert!(((x1 * 10.0).round() - x1 * 10.0).abs() < 1e-9);
            let l = render_latex(x1, x2, row[2].as_str().unwrap(), row[3].as_str().unwrap(), row[4].as_str().unwrap()).unwrap();
            assert_eq!(row[5].as_str().unwrap(), l);
        }
    }
}
