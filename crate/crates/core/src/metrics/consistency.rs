//! Rule-based agreement between generated text and structured columns.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::datasets::mathexpr::{literals, parse_latex, COLUMNS as MATH};
use crate::datasets::profilebio::{parse_biography, pronoun, AGE_BINS, COLUMNS as BIO, SALARY_BINS};
use crate::error::{ensure, Error, Result};
use crate::table::Table;

pub const EXPR_TOLERANCE: f64 = 0.07;
pub const BIO_TOLERANCE: f64 = 0.05;

fn column<'a>(t: &'a Table, name: &str) -> Result<&'a [alloc::string::String]> {
    t.strings_by_name(name).ok_or_else(|| Error::Precondition(alloc::format!("missing text or categorical column `{name}`")))
}

fn numbers<'a>(t: &'a Table, name: &str) -> Result<&'a [f64]> {
    t.numeric_by_name(name).ok_or_else(|| Error::Precondition(alloc::format!("missing numerical column `{name}`")))
}

fn rate(hits: impl Iterator<Item = bool>) -> Result<f64> {
    let (mut n, mut k) = (0usize, 0usize);
    for h in hits {
        n += 1;
        k += usize::from(h);
    }
    ensure!(n > 0, Data, "match rate of an empty table");
    Ok(k as f64 / n as f64)
}

/// Relative tolerance check; a zero target falls back to absolute `delta`.
pub fn within_tolerance(literal: f64, target: f64, delta: f64) -> bool {
    if target == 0.0 {
        literal.abs() <= delta
    } else {
        (literal - target).abs() / target.abs() <= delta
    }
}

/// Per-row Op-MR outcome: the operators parsed from the LaTeX equal the
/// categorical columns.
pub fn op_matches(t: &Table) -> Result<Vec<bool>> {
    let latex = column(t, MATH[5])?;
    let ops = [column(t, MATH[2])?, column(t, MATH[3])?, column(t, MATH[4])?];
    Ok(latex
        .iter()
        .enumerate()
        .map(|(i, s)| parse_latex(s).is_some_and(|p| p.o1 == ops[0][i] && p.o2 == ops[1][i] && p.o3 == ops[2][i]))
        .collect())
}

pub fn op_match_rate(t: &Table) -> Result<f64> {
    rate(op_matches(t)?.into_iter())
}

pub fn expr_match_rate(t: &Table, delta: f64) -> Result<f64> {
    let ops = op_matches(t)?;
    let latex = column(t, MATH[5])?;
    let (x1, x2) = (numbers(t, MATH[0])?, numbers(t, MATH[1])?);
    rate(ops.into_iter().enumerate().map(|(i, ok)| {
        ok && literals(&latex[i])
            .is_some_and(|[a, b]| within_tolerance(a, x1[i], delta) && within_tolerance(b, x2[i], delta))
    }))
}

/// Descriptors accepted for integer value `v`: its own bin plus any bin
/// whose range lies within `max(1, ceil(delta * width))` of `v`. Open-ended
/// bins borrow the width of their finite neighbour.
pub fn relaxed_descriptors(bins: &[(i64, i64, &'static str)], v: i64, delta: f64) -> Vec<&'static str> {
    let width = |k: usize| -> i64 {
        let (lo, hi, _) = bins[k];
        if lo == i64::MIN {
            bins[k + 1].1 - bins[k + 1].0 + 1
        } else if hi == i64::MAX {
            bins[k - 1].1 - bins[k - 1].0 + 1
        } else {
            hi - lo + 1
        }
    };
    (0..bins.len())
        .filter(|&k| {
            let slack = ((delta * width(k) as f64).ceil() as i64).max(1);
            let (lo, hi, _) = bins[k];
            lo.saturating_sub(slack) <= v && v <= hi.saturating_add(slack)
        })
        .map(|k| bins[k].2)
        .collect()
}

/// Per-row Bio-MR outcome. Numerical cells are rounded to the nearest
/// integer before binning.
pub fn bio_matches(t: &Table, delta: f64) -> Result<Vec<bool>> {
    let (age, salary) = (numbers(t, BIO[0])?, numbers(t, BIO[1])?);
    let cats: Vec<&[alloc::string::String]> = BIO[2..7].iter().map(|c| column(t, c)).collect::<Result<_>>()?;
    let bio = column(t, BIO[7])?;
    Ok((0..t.num_rows())
        .map(|i| {
            let Some(s) = parse_biography(&bio[i]) else { return false };
            let Ok(p) = pronoun(&cats[0][i]) else { return false };
            let slots = [&s.sex, &s.birth_state, &s.college, &s.degree, &s.occupation];
            slots.iter().zip(&cats).all(|(slot, col)| **slot == col[i])
                && s.pronouns.iter().all(|q| q == p)
                && age[i].is_finite()
                && salary[i].is_finite()
                && relaxed_descriptors(&AGE_BINS, age[i].round() as i64, delta).contains(&s.age_desc.as_str())
                && relaxed_descriptors(&SALARY_BINS, salary[i].round() as i64, delta).contains(&s.salary_desc.as_str())
        })
        .collect())
}

pub fn bio_match_rate(t: &Table, delta: f64) -> Result<f64> {
    rate(bio_matches(t, delta)?.into_iter())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::profilebio::{fill_template, ProfileBioRecord};
    use crate::datasets::{gen_mathexpr, gen_profilebio, mathexpr, profilebio, render_biography};
    use crate::table::Value;
    use alloc::string::String;
    use alloc::vec;

    fn math_row(x1: f64, x2: f64, ops: [&str; 3], latex: &str) -> Table {
        let mut t = Table::new(mathexpr::schema());
        t.push_row(vec![Value::Num(x1), Value::Num(x2), ops[0].into(), ops[1].into(), ops[2].into(), latex.into()]).unwrap();
        t
    }

    #[test]
    fn tolerance_semantics() {
        let ops = ["none", "none", "add"];
        assert_eq!(expr_match_rate(&math_row(2.75, 6.4, ops, "2.90 + 6.40"), 0.07).unwrap(), 1.0);
        assert_eq!(expr_match_rate(&math_row(2.75, 6.4, ops, "2.95 + 6.40"), 0.07).unwrap(), 0.0);
        assert_eq!(expr_match_rate(&math_row(2.75, 6.4, ops, "2.75 + 6.40"), 0.07).unwrap(), 1.0);
        assert_eq!(expr_match_rate(&math_row(0.0, 6.4, ops, "0.05 + 6.40"), 0.07).unwrap(), 1.0);
        assert_eq!(expr_match_rate(&math_row(0.0, 6.4, ops, "0.10 + 6.40"), 0.07).unwrap(), 0.0);
        // the literal is right but the operator is not
        assert_eq!(expr_match_rate(&math_row(2.75, 6.4, ["none", "none", "mul"], "2.75 + 6.40"), 0.07).unwrap(), 0.0);
    }

    #[test]
    fn op_rate_counts_corruption() {
        let t = gen_mathexpr(100, 3).unwrap();
        assert_eq!(op_match_rate(&t).unwrap(), 1.0);
        assert_eq!(expr_match_rate(&t, EXPR_TOLERANCE).unwrap(), 1.0);
        let mut rows: Vec<Vec<Value>> = (0..100).map(|i| t.row(i)).collect();
        rows[17][4] = "mul".into();
        rows[17][5] = mathexpr::render_latex(1.0, 3.0, "none", "none", "add").unwrap().into();
        let mut c = Table::new(mathexpr::schema());
        for r in rows {
            c.push_row(r).unwrap();
        }
        assert_eq!(op_match_rate(&c).unwrap(), 0.99);
    }

    #[test]
    fn boundary_relaxation() {
        let age = |v| relaxed_descriptors(&AGE_BINS, v, BIO_TOLERANCE);
        assert!(age(25).contains(&AGE_BINS[1].2));
        assert!(!age(24).contains(&AGE_BINS[1].2));
        assert_eq!(age(23), vec![AGE_BINS[0].2]);
        let sal = |v| relaxed_descriptors(&SALARY_BINS, v, BIO_TOLERANCE);
        // the middle bin is 40 wide, so the slack is 2
        assert!(sal(109).contains(&SALARY_BINS[1].2));
        assert!(!sal(108).contains(&SALARY_BINS[1].2));
        assert!(sal(152).contains(&SALARY_BINS[1].2));
        assert_eq!(sal(130), vec![SALARY_BINS[1].2]);
    }

    fn bio_table(r: &ProfileBioRecord) -> Table {
        let mut t = Table::new(profilebio::schema());
        t.push_row(vec![
            Value::Num(r.age as f64),
            Value::Num(r.salary as f64),
            r.sex.as_str().into(),
            r.birth_state.as_str().into(),
            r.college.as_str().into(),
            r.degree.as_str().into(),
            r.occupation.as_str().into(),
            r.biography.as_str().into(),
        ])
        .unwrap();
        t
    }

    #[test]
    fn bio_rules() {
        let mut r = ProfileBioRecord {
            age: 25,
            salary: 140,
            sex: "male".into(),
            birth_state: "Texas".into(),
            college: "Ohio State University".into(),
            degree: "Bachelor".into(),
            occupation: "Software Developer".into(),
            biography: String::new(),
        };
        r.biography = render_biography(&r).unwrap();
        assert_eq!(bio_match_rate(&bio_table(&r), BIO_TOLERANCE).unwrap(), 1.0);
        let neighbour = |age_desc: &str, occ: &str, sex: &str| {
            fill_template(sex, age_desc, "Texas", "Ohio State University", "Bachelor", occ, SALARY_BINS[1].2).unwrap()
        };
        let mut r2 = r.clone();
        r2.biography = neighbour(AGE_BINS[1].2, "Software Developer", "male");
        assert_eq!(bio_match_rate(&bio_table(&r2), BIO_TOLERANCE).unwrap(), 1.0);
        r2.biography = neighbour(AGE_BINS[2].2, "Software Developer", "male");
        assert_eq!(bio_match_rate(&bio_table(&r2), BIO_TOLERANCE).unwrap(), 0.0);
        r2.biography = neighbour(AGE_BINS[0].2, "Education Professional", "male");
        assert_eq!(bio_match_rate(&bio_table(&r2), BIO_TOLERANCE).unwrap(), 0.0);
        r2.biography = neighbour(AGE_BINS[0].2, "Software Developer", "female");
        assert_eq!(bio_match_rate(&bio_table(&r2), BIO_TOLERANCE).unwrap(), 0.0);
        r2.biography = r.biography.replacen("He works", "She works", 1);
        assert_eq!(bio_match_rate(&bio_table(&r2), BIO_TOLERANCE).unwrap(), 0.0);
    }

    #[test]
    fn generated_bios_match() {
        let t = gen_profilebio(500, 4).unwrap();
        assert_eq!(bio_match_rate(&t, BIO_TOLERANCE).unwrap(), 1.0);
    }
}
