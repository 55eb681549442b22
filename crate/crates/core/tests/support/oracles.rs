//! Brute-force reference implementations of the fidelity metrics, written
//! without sharing code with the library.

#![allow(dead_code)]

use rand::Rng;
use tabmix_core::table::{ColumnSpec, Schema, Table, Value};

pub fn kst(a: &[f64], b: &[f64]) -> f64 {
    let cdf = |v: &[f64], x: f64| v.iter().filter(|&&y| y <= x).count() as f64 / v.len() as f64;
    a.iter().chain(b).map(|&x| (cdf(a, x) - cdf(b, x)).abs()).fold(0.0, f64::max)
}

pub fn tvd(a: &[String], b: &[String]) -> f64 {
    let mut keys: Vec<&String> = a.iter().chain(b).collect();
    keys.sort();
    keys.dedup();
    let freq = |v: &[String], k: &String| v.iter().filter(|s| *s == k).count() as f64 / v.len() as f64;
    0.5 * keys.iter().map(|k| (freq(a, k) - freq(b, k)).abs()).sum::<f64>()
}

pub fn joint_tvd(a: (&[String], &[String]), b: (&[String], &[String])) -> f64 {
    let mut left: Vec<&String> = a.0.iter().chain(b.0).collect();
    let mut right: Vec<&String> = a.1.iter().chain(b.1).collect();
    left.sort();
    left.dedup();
    right.sort();
    right.dedup();
    let freq = |v: (&[String], &[String]), p: &String, q: &String| {
        (0..v.0.len()).filter(|&i| &v.0[i] == p && &v.1[i] == q).count() as f64 / v.0.len() as f64
    };
    let mut total = 0.0;
    for p in &left {
        for q in &right {
            total += (freq(a, p, q) - freq(b, p, q)).abs();
        }
    }
    0.5 * total
}

/// Correlation from all pairwise differences; `None` for a constant column.
pub fn corr(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len();
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            sxy += (x[i] - x[j]) * (y[i] - y[j]);
            sxx += (x[i] - x[j]) * (x[i] - x[j]);
            syy += (y[i] - y[j]) * (y[i] - y[j]);
        }
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

pub fn quartile_labels(real: &[f64], xs: &[f64]) -> Vec<String> {
    let mut s = real.to_vec();
    s.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let h = (s.len() - 1) as f64 * p;
        let k = h.floor() as usize;
        if k + 1 < s.len() {
            s[k] + (h - k as f64) * (s[k + 1] - s[k])
        } else {
            s[k]
        }
    };
    let (q1, q2, q3) = (q(0.25), q(0.5), q(0.75));
    xs.iter()
        .map(|&x| {
            if x <= q1 {
                "Q1"
            } else if x <= q2 {
                "Q2"
            } else if x <= q3 {
                "Q3"
            } else {
                "Q4"
            }
            .to_string()
        })
        .collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn shape(real: &Table, synth: &Table) -> f64 {
    let s = real.schema();
    let errs: Vec<f64> = (0..s.len())
        .filter_map(|i| match (real.numeric(i), s.columns[i].is_categorical()) {
            (Some(r), _) => Some(kst(r, synth.numeric(i).unwrap())),
            (None, true) => Some(tvd(real.strings(i).unwrap(), synth.strings(i).unwrap())),
            _ => None,
        })
        .collect();
    mean(&errs)
}

pub fn trend(real: &Table, synth: &Table) -> f64 {
    let s = real.schema();
    let cols: Vec<usize> = (0..s.len()).filter(|&i| s.columns[i].is_numerical() || s.columns[i].is_categorical()).collect();
    let as_labels = |t: &Table, i: usize, bins_from: Option<&[f64]>| -> Vec<String> {
        match (t.numeric(i), bins_from) {
            (Some(v), Some(r)) => quartile_labels(r, v),
            _ => t.strings(i).unwrap().to_vec(),
        }
    };
    let mut errs = Vec::new();
    for a in 0..cols.len() {
        for b in a + 1..cols.len() {
            let (i, j) = (cols[a], cols[b]);
            match (real.numeric(i), real.numeric(j)) {
                (Some(ri), Some(rj)) => {
                    if let (Some(p), Some(q)) = (corr(ri, rj), corr(synth.numeric(i).unwrap(), synth.numeric(j).unwrap())) {
                        errs.push(0.5 * (p - q).abs());
                    }
                }
                _ => {
                    let (bi, bj) = (real.numeric(i), real.numeric(j));
                    let r = (as_labels(real, i, bi), as_labels(real, j, bj));
                    let y = (as_labels(synth, i, bi), as_labels(synth, j, bj));
                    errs.push(joint_tvd((&r.0, &r.1), (&y.0, &y.1)));
                }
            }
        }
    }
    mean(&errs)
}

/// A random pair of tables sharing a schema of 2 to 4 structured columns.
pub fn random_tables<R: Rng>(rng: &mut R) -> (Table, Table) {
    let ncols = rng.gen_range(2..=4);
    let mut specs = Vec::new();
    for c in 0..ncols {
        if rng.gen_bool(0.5) {
            specs.push(ColumnSpec::numerical(&format!("n{c}")));
        } else {
            specs.push(ColumnSpec::categorical(&format!("c{c}"), &["a", "b", "c", "d"]));
        }
    }
    let schema = Schema::new("random", specs);
    let make = |rng: &mut R| {
        let rows = rng.gen_range(3..=50);
        let mut t = Table::new(schema.clone());
        let ties = rng.gen_bool(0.5);
        let ncat = rng.gen_range(1..=4);
        for _ in 0..rows {
            let row = schema
                .columns
                .iter()
                .map(|c| {
                    if c.is_numerical() {
                        let x: f64 = rng.gen_range(-10.0..10.0);
                        Value::Num(if ties { x.round() } else { x })
                    } else {
                        Value::Str(["a", "b", "c", "d"][rng.gen_range(0..ncat)].to_string())
                    }
                })
                .collect();
            t.push_row(row).unwrap();
        }
        t
    };
    let real = make(rng);
    let synth = make(rng);
    (real, synth)
}
