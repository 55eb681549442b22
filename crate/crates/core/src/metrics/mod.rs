//! Fidelity and consistency evaluation of synthetic tables.

pub mod consistency;
pub mod fidelity;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::datasets::{mathexpr, profilebio};
use crate::error::Result;
use crate::table::Table;

pub use consistency::{
    bio_match_rate, expr_match_rate, op_match_rate, relaxed_descriptors, within_tolerance, BIO_TOLERANCE,
    EXPR_TOLERANCE,
};
pub use fidelity::{
    contingency_score, kst, pearson_pair, pearson_score, quartile_bins, quartile_edges, shape, shape_columns, trend,
    trend_pairs, tvd, ColumnError, PairError, PairMetric, PearsonScore,
};

/// Everything `eval` reports. Errors are fractions in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    pub real_rows: usize,
    pub synth_rows: usize,
    pub invalid_records: usize,
    pub shape: f64,
    pub trend: f64,
    pub columns: Vec<ColumnError>,
    pub pairs: Vec<PairError>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub op_mr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub exp_mr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub bio_mr: Option<f64>,
}

fn has_columns(t: &Table, names: &[&str]) -> bool {
    names.iter().all(|n| t.schema().index_of(n).is_some())
}

/// Compare `synth` against `real`. Match rates are computed when the table
/// carries the columns of a known benchmark.
pub fn evaluate(real: &Table, synth: &Table, invalid_records: usize) -> Result<FidelityReport> {
    let columns = shape_columns(real, synth)?;
    let pairs = trend_pairs(real, synth)?;
    let shape = columns.iter().map(|c| c.error).sum::<f64>() / columns.len() as f64;
    let trend = fidelity::mean_of(pairs.iter().map(|p| p.error))?;
    let math = has_columns(synth, &mathexpr::COLUMNS);
    let bio = has_columns(synth, &profilebio::COLUMNS);
    let nonempty = synth.num_rows() > 0;
    Ok(FidelityReport {
        real_rows: real.num_rows(),
        synth_rows: synth.num_rows(),
        invalid_records,
        shape,
        trend,
        columns,
        pairs,
        op_mr: if math && nonempty { Some(op_match_rate(synth)?) } else { None },
        exp_mr: if math && nonempty { Some(expr_match_rate(synth, EXPR_TOLERANCE)?) } else { None },
        bio_mr: if bio && nonempty { Some(bio_match_rate(synth, BIO_TOLERANCE)?) } else { None },
    })
}

fn pct(x: f64) -> String {
    format!("{:.2}%", 100.0 * x)
}

impl FidelityReport {
    /// Human-readable report, percentages to two decimals.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "rows: real {} synthetic {} invalid {}", self.real_rows, self.synth_rows, self.invalid_records);
        let _ = writeln!(s, "shape error: {}", pct(self.shape));
        let _ = writeln!(s, "trend error: {}", pct(self.trend));
        for (name, v) in [("op-mr", self.op_mr), ("exp-mr", self.exp_mr), ("bio-mr", self.bio_mr)] {
            if let Some(v) = v {
                let _ = writeln!(s, "{name}: {}", pct(v));
            }
        }
        let _ = writeln!(s, "\ncolumn errors:");
        for c in &self.columns {
            let _ = writeln!(s, "  {:<24} {:<4} {}", c.column, c.metric, pct(c.error));
        }
        let _ = writeln!(s, "\npair errors:");
        for p in &self.pairs {
            let v = p.error.map_or_else(|| String::from("skipped"), pct);
            let _ = writeln!(s, "  {} x {} ({:?}) {}", p.columns[0], p.columns[1], p.metric, v);
        }
        s
    }
}
