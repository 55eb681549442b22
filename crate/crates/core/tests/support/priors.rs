//! Empirical frequency checks for the generator priors.

#![allow(dead_code)]

use tabmix_core::datasets::{mathexpr as m, profilebio as p};
use tabmix_core::table::Table;

pub struct PriorCheck {
    pub label: String,
    pub expected: f64,
    pub observed: f64,
    pub std_errors: f64,
}

/// Compare `P(col = value | cond)` with `expected` for every entry.
fn check_column(
    out: &mut Vec<PriorCheck>,
    label: &str,
    values: &[String],
    cond: &dyn Fn(usize) -> bool,
    prior: &[(&str, f64)],
) {
    let rows: Vec<usize> = (0..values.len()).filter(|&i| cond(i)).collect();
    let n = rows.len() as f64;
    for &(v, expected) in prior {
        let observed = rows.iter().filter(|&&i| values[i] == v).count() as f64 / n;
        let se = (expected * (1.0 - expected) / n).sqrt();
        out.push(PriorCheck { label: format!("{label} = {v}"), expected, observed, std_errors: (observed - expected).abs() / se });
    }
}

pub fn mathexpr_priors(t: &Table) -> Vec<PriorCheck> {
    let mut out = Vec::new();
    let all = |_: usize| true;
    check_column(&mut out, "o1", t.strings(2).unwrap(), &all, &m::X1_PRIOR);
    check_column(&mut out, "o2", t.strings(3).unwrap(), &all, &m::X2_PRIOR);
    check_column(&mut out, "o3", t.strings(4).unwrap(), &all, &m::BINARY_PRIOR);
    out
}

pub fn profilebio_priors(t: &Table) -> Vec<PriorCheck> {
    let mut out = Vec::new();
    let all = |_: usize| true;
    check_column(&mut out, "sex", t.strings(2).unwrap(), &all, &[("male", 0.5), ("female", 0.5)]);
    check_column(&mut out, "birth_state", t.strings(3).unwrap(), &all, &p::BIRTH_STATE_PRIOR);
    check_column(&mut out, "college", t.strings(4).unwrap(), &all, &p::COLLEGE_PRIOR);
    let college = t.strings(4).unwrap();
    let degree = t.strings(5).unwrap();
    for (elite, probs) in [(true, p::ELITE_DEGREE_PRIOR), (false, p::OTHER_DEGREE_PRIOR)] {
        let prior: Vec<(&str, f64)> = p::DEGREES.iter().copied().zip(probs).collect();
        let cond = |i: usize| p::ELITE_COLLEGES.contains(&college[i].as_str()) == elite;
        check_column(&mut out, if elite { "degree | elite" } else { "degree | other" }, degree, &cond, &prior);
    }
    for d in p::DEGREES {
        let w = p::occupation_weights(d);
        let total: f64 = w.iter().sum();
        let prior: Vec<(&str, f64)> = p::OCCUPATIONS.iter().copied().zip(w.iter().map(|x| x / total)).collect();
        let cond = |i: usize| degree[i] == d;
        check_column(&mut out, &format!("occupation | {d}"), t.strings(6).unwrap(), &cond, &prior);
    }
    out
}
