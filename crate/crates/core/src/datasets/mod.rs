//! Seeded benchmark generators and train/validation splits.

pub mod mathexpr;
pub mod profilebio;

use alloc::vec::Vec;

use crate::error::{ensure, Result};
use crate::rng::{permutation, stream, Domain};
use crate::table::Table;

pub use mathexpr::{gen_mathexpr, render_latex, MathExprRecord};
pub use profilebio::{gen_profilebio, render_biography, salary_model, ProfileBioRecord};
#[allow(unused_imports)]
use num_traits::Float;

pub const DEFAULT_ROWS: usize = 5000;

/// Generate a named benchmark table.
pub fn generate(name: &str, n: usize, seed: u64) -> Result<Table> {
    match name {
        "mathexpr" => gen_mathexpr(n, seed),
        "profilebio" => gen_profilebio(n, seed),
        _ => Err(crate::Error::Precondition(alloc::format!("unknown dataset `{name}`"))),
    }
}

/// Random disjoint split with `round(fraction * n)` training rows. Both
/// parts keep the original row order.
pub fn split(table: &Table, train_fraction: f64, seed: u64) -> Result<(Table, Table)> {
    let n = table.num_rows();
    ensure!(n > 0, Precondition, "cannot split an empty table");
    ensure!((0.0..=1.0).contains(&train_fraction), Precondition, "train fraction {train_fraction} outside [0, 1]");
    let n_train = (train_fraction * n as f64).round() as usize;
    let perm = permutation(&mut stream(seed, Domain::Split, 0), n);
    let mut train: Vec<usize> = perm[..n_train].to_vec();
    let mut valid: Vec<usize> = perm[n_train..].to_vec();
    train.sort_unstable();
    valid.sort_unstable();
    Ok((table.select(&train), table.select(&valid)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_sizes_and_disjointness() {
        let t = gen_mathexpr(5000, 0).unwrap();
        let (a, b) = split(&t, 0.9, 3).unwrap();
        assert_eq!((a.num_rows(), b.num_rows()), (4500, 500));
        let (a2, b2) = split(&t, 0.9, 3).unwrap();
        assert_eq!((&a, &b), (&a2, &b2));
        let (all, none) = split(&t, 1.0, 3).unwrap();
        assert_eq!(all, t);
        assert_eq!(none.num_rows(), 0);
        assert!(split(&t.select(&[]), 0.5, 0).is_err());
        assert!(generate("amazon", 5, 0).is_err());
    }

    #[test]
    fn split_partitions_rows() {
        let t = gen_profilebio(50, 2).unwrap();
        let (a, b) = split(&t, 0.7, 9).unwrap();
        let bios = t.strings(7).unwrap();
        let mut seen: Vec<&str> = a.strings(7).unwrap().iter().chain(b.strings(7).unwrap()).map(|s| s.as_str()).collect();
        let mut all: Vec<&str> = bios.iter().map(|s| s.as_str()).collect();
        seen.sort();
        all.sort();
        assert_eq!(seen, all);
    }
}
