//! Column-wise (Shape) and pairwise (Trend) distribution errors.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::stats::{pearson, quantile_sorted, sorted};
use crate::table::{ColumnKind, Schema, Table};

/// Two-sample Kolmogorov-Smirnov statistic between empirical CDFs.
pub fn kst(real: &[f64], synth: &[f64]) -> Result<f64> {
    ensure!(!real.is_empty() && !synth.is_empty(), Data, "KST needs two non-empty columns");
    ensure!(real.iter().chain(synth).all(|x| x.is_finite()), NonFinite, "KST input is not finite");
    let a = sorted(real);
    let b = sorted(synth);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = if a[i] <= b[j] { a[i] } else { b[j] };
        while i < a.len() && a[i] == x {
            i += 1;
        }
        while j < b.len() && b[j] == x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

fn frequencies<'a, I: IntoIterator<Item = K>, K: Ord + 'a>(items: I) -> (BTreeMap<K, f64>, f64) {
    let mut m = BTreeMap::new();
    let mut n = 0.0;
    for k in items {
        *m.entry(k).or_insert(0.0) += 1.0;
        n += 1.0;
    }
    (m, n)
}

/// Half the L1 distance between two frequency tables over the union of
/// observed keys.
fn half_l1<K: Ord + Clone>(r: BTreeMap<K, f64>, nr: f64, s: BTreeMap<K, f64>, ns: f64) -> f64 {
    let mut total = 0.0;
    for (k, c) in &r {
        total += (c / nr - s.get(k).copied().unwrap_or(0.0) / ns).abs();
    }
    for (k, c) in &s {
        if !r.contains_key(k) {
            total += c / ns;
        }
    }
    0.5 * total
}

/// Total variation distance between category frequencies.
pub fn tvd(real: &[String], synth: &[String]) -> Result<f64> {
    ensure!(!real.is_empty() && !synth.is_empty(), Data, "TVD needs two non-empty columns");
    let (r, nr) = frequencies(real.iter());
    let (s, ns) = frequencies(synth.iter());
    Ok(half_l1(r, nr, s, ns))
}

/// Total variation distance between joint frequencies of two columns.
pub fn contingency_score<A: Ord + Clone, B: Ord + Clone>(real: (&[A], &[B]), synth: (&[A], &[B])) -> Result<f64> {
    ensure!(real.0.len() == real.1.len() && synth.0.len() == synth.1.len(), Shape, "paired columns differ in length");
    ensure!(!real.0.is_empty() && !synth.0.is_empty(), Data, "contingency needs non-empty columns");
    let (r, nr) = frequencies(real.0.iter().cloned().zip(real.1.iter().cloned()));
    let (s, ns) = frequencies(synth.0.iter().cloned().zip(synth.1.iter().cloned()));
    Ok(half_l1(r, nr, s, ns))
}

/// Half the absolute difference of Pearson correlations, or `None` when a
/// column is constant on either side.
pub fn pearson_pair(real: (&[f64], &[f64]), synth: (&[f64], &[f64])) -> Option<f64> {
    Some(0.5 * (pearson(real.0, real.1)? - pearson(synth.0, synth.1)?).abs())
}

/// Quartile edges of the real column; a value's bin is the number of edges
/// strictly below it.
pub fn quartile_edges(real: &[f64]) -> [f64; 3] {
    let s = sorted(real);
    [quantile_sorted(&s, 0.25), quantile_sorted(&s, 0.5), quantile_sorted(&s, 0.75)]
}

pub fn quartile_bins(xs: &[f64], edges: &[f64; 3]) -> Vec<u8> {
    xs.iter().map(|x| edges.iter().filter(|e| *e < x).count() as u8).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairMetric {
    Pearson,
    Contingency,
    BinnedContingency,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnError {
    pub column: String,
    pub metric: String,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairError {
    pub columns: [String; 2],
    pub metric: PairMetric,
    /// `None` when the pair was skipped (a constant numerical column).
    pub error: Option<f64>,
}

pub(crate) fn check_schemas(real: &Table, synth: &Table) -> Result<()> {
    let (a, b) = (real.schema(), synth.schema());
    let same = a.len() == b.len()
        && a.columns.iter().zip(&b.columns).all(|(x, y)| {
            x.name == y.name && core::mem::discriminant(&x.kind) == core::mem::discriminant(&y.kind)
        });
    ensure!(same, Shape, "real and synthetic schemas differ");
    Ok(())
}

/// Per-column Shape errors over structured columns: KST for numerical,
/// TVD for categorical. Text columns are not included.
pub fn shape_columns(real: &Table, synth: &Table) -> Result<Vec<ColumnError>> {
    check_schemas(real, synth)?;
    let schema: &Schema = real.schema();
    let mut out = Vec::new();
    for i in schema.structured() {
        let spec = &schema.columns[i];
        let (metric, error) = match spec.kind {
            ColumnKind::Numerical => ("kst", kst(real.numeric(i).unwrap(), synth.numeric(i).unwrap())?),
            _ => ("tvd", tvd(real.strings(i).unwrap(), synth.strings(i).unwrap())?),
        };
        out.push(ColumnError { column: spec.name.clone(), metric: metric.into(), error });
    }
    Ok(out)
}

pub fn shape(real: &Table, synth: &Table) -> Result<f64> {
    mean_of(shape_columns(real, synth)?.iter().map(|c| Some(c.error)))
}

pub(crate) fn mean_of(it: impl Iterator<Item = Option<f64>>) -> Result<f64> {
    let vals: Vec<f64> = it.flatten().collect();
    ensure!(!vals.is_empty(), Data, "no applicable columns or pairs");
    Ok(vals.iter().sum::<f64>() / vals.len() as f64)
}

/// Per-pair Trend errors over all unordered pairs of structured columns.
pub fn trend_pairs(real: &Table, synth: &Table) -> Result<Vec<PairError>> {
    check_schemas(real, synth)?;
    let schema = real.schema();
    let cols = schema.structured();
    ensure!(cols.len() >= 2, Precondition, "trend needs at least two structured columns");
    for t in [real, synth] {
        ensure!(t.num_rows() > 0, Data, "trend needs non-empty tables");
    }
    let mut out = Vec::new();
    for (k, &i) in cols.iter().enumerate() {
        for &j in &cols[k + 1..] {
            let (ni, nj) = (schema.columns[i].is_numerical(), schema.columns[j].is_numerical());
            let (metric, error) = match (ni, nj) {
                (true, true) => (
                    PairMetric::Pearson,
                    pearson_pair(
                        (real.numeric(i).unwrap(), real.numeric(j).unwrap()),
                        (synth.numeric(i).unwrap(), synth.numeric(j).unwrap()),
                    ),
                ),
                (false, false) => (
                    PairMetric::Contingency,
                    Some(contingency_score(
                        (real.strings(i).unwrap(), real.strings(j).unwrap()),
                        (synth.strings(i).unwrap(), synth.strings(j).unwrap()),
                    )?),
                ),
                _ => {
                    let (num, cat) = if ni { (i, j) } else { (j, i) };
                    let edges = quartile_edges(real.numeric(num).unwrap());
                    let rb = quartile_bins(real.numeric(num).unwrap(), &edges);
                    let sb = quartile_bins(synth.numeric(num).unwrap(), &edges);
                    (
                        PairMetric::BinnedContingency,
                        Some(contingency_score((&rb, real.strings(cat).unwrap()), (&sb, synth.strings(cat).unwrap()))?),
                    )
                }
            };
            out.push(PairError { columns: [schema.columns[i].name.clone(), schema.columns[j].name.clone()], metric, error });
        }
    }
    Ok(out)
}

pub fn trend(real: &Table, synth: &Table) -> Result<f64> {
    mean_of(trend_pairs(real, synth)?.iter().map(|p| p.error))
}

/// Mean Pearson term over all pairs of the given numerical columns.
#[derive(Debug, Clone, PartialEq)]
pub struct PearsonScore {
    pub score: f64,
    pub skipped: Vec<(usize, usize)>,
}

fn numeric_column(t: &Table, c: usize) -> Result<&[f64]> {
    t.numeric(c).ok_or_else(|| Error::Precondition(alloc::format!("column {c} is not numerical")))
}

pub fn pearson_score(real: &Table, synth: &Table, columns: &[usize]) -> Result<PearsonScore> {
    check_schemas(real, synth)?;
    ensure!(columns.len() >= 2, Precondition, "pearson score needs at least two columns");
    let mut terms = Vec::new();
    let mut skipped = Vec::new();
    for (k, &i) in columns.iter().enumerate() {
        for &j in &columns[k + 1..] {
            match pearson_pair((numeric_column(real, i)?, numeric_column(real, j)?), (numeric_column(synth, i)?, numeric_column(synth, j)?)) {
                Some(v) => terms.push(Some(v)),
                None => skipped.push((i, j)),
            }
        }
    }
    Ok(PearsonScore { score: mean_of(terms.into_iter())?, skipped })
}
