//! Per-annotator judgment statistics: positive-call frequency over series
//! and agreement frequency over suggested targets.

use std::collections::BTreeMap;

use super::Split;
use crate::phantom::{Label, TargetAnnotation};

/// Rate requested over an empty denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UndefinedRate;

impl std::fmt::Display for UndefinedRate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "rate undefined: empty denominator")
    }
}

impl std::error::Error for UndefinedRate {}

/// Percentage of series judged to contain at least one aneurysm.
pub fn compute_f_sub(positive: u64, negative: u64) -> Result<f64, UndefinedRate> {
    if positive + negative == 0 {
        return Err(UndefinedRate);
    }
    Ok(100.0 * positive as f64 / (positive + negative) as f64)
}

/// Percentage of suggested targets the annotator accepted.
pub fn compute_f_cad(tp: u64, fp: u64) -> Result<f64, UndefinedRate> {
    if tp + fp == 0 {
        return Err(UndefinedRate);
    }
    Ok(100.0 * tp as f64 / (tp + fp) as f64)
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct AnnotatorStats {
    pub annotator_id: u32,
    /// Series counts by the annotator's overall judgment.
    pub series_positive: u64,
    pub series_negative: u64,
    /// Target counts by label.
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub f_sub: Option<f64>,
    pub f_cad: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct DatasetStats {
    pub per_annotator: Vec<AnnotatorStats>,
    pub total: AnnotatorStats,
}

impl DatasetStats {
    /// Statistics over the annotations of the given series set. A series is
    /// positive when any of its targets carries a positive label.
    pub fn compute(series: &[(u64, u32, Vec<TargetAnnotation>)]) -> Self {
        #[derive(Default)]
        struct Acc {
            pos: u64,
            neg: u64,
            tp: u64,
            fp: u64,
            fn_: u64,
        }
        let mut accs: BTreeMap<u32, Acc> = BTreeMap::new();
        for (_, annotator_id, anns) in series {
            let acc = accs.entry(*annotator_id).or_default();
            if anns.iter().any(|a| a.label.is_positive()) {
                acc.pos += 1;
            } else {
                acc.neg += 1;
            }
            for a in anns {
                match a.label {
                    Label::TruePositive => acc.tp += 1,
                    Label::FalsePositive => acc.fp += 1,
                    Label::FalseNegative => acc.fn_ += 1,
                }
            }
        }
        let row = |id: u32, a: &Acc| AnnotatorStats {
            annotator_id: id,
            series_positive: a.pos,
            series_negative: a.neg,
            tp: a.tp,
            fp: a.fp,
            fn_: a.fn_,
            f_sub: compute_f_sub(a.pos, a.neg).ok(),
            f_cad: compute_f_cad(a.tp, a.fp).ok(),
        };
        let mut total = Acc::default();
        let mut per_annotator = Vec::new();
        for (id, a) in &accs {
            per_annotator.push(row(*id, a));
            total.pos += a.pos;
            total.neg += a.neg;
            total.tp += a.tp;
            total.fp += a.fp;
            total.fn_ += a.fn_;
        }
        DatasetStats { per_annotator, total: row(0, &total) }
    }

    /// Restricts to one side of a split assignment.
    pub fn compute_for_split(
        series: &[(u64, u32, Vec<TargetAnnotation>)],
        assignment: &std::collections::BTreeMap<u64, Split>,
        split: Split,
    ) -> Self {
        let filtered: Vec<_> = series
            .iter()
            .filter(|(sid, _, _)| assignment.get(sid) == Some(&split))
            .cloned()
            .collect();
        Self::compute(&filtered)
    }
}
