//! Train/test splitting stratified on per-annotator positive frequency,
//! class-balanced augmentation manifests, and the dataset statistics tables.

mod balance;
mod manifest;
mod split;
mod stats;

pub use balance::{balance_and_augment, build_test_records, BalanceConfig, BalanceError};
pub use manifest::{read_manifest_csv, write_manifest_csv, ManifestError, MANIFEST_CSV_HEADER};
pub use split::{assign_folds, stratified_split, FoldError, SeriesInfo, SplitOutcome};
pub use stats::{compute_f_cad, compute_f_sub, AnnotatorStats, DatasetStats, UndefinedRate};

use crate::phantom::TargetAnnotation;
use crate::preprocess::RigidTransform;

pub const N_FOLDS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Train => "train",
            Self::Test => "test",
        }
    }
}

/// One row of the sample manifest: a target observed under one transform.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub record_id: u64,
    pub series_id: u64,
    /// Index of the target within its series' annotation list.
    pub target_idx: u32,
    pub annotator_id: u32,
    /// Aneurysm-positive judgment (TP or FN source label).
    pub main_label: bool,
    /// Auxiliary binaries: positive-with-size, size >= 2 mm, 0 < size <= 2 mm.
    pub aux: [bool; 3],
    pub transform: RigidTransform,
    pub split: Split,
    /// Present for train records only.
    pub fold: Option<u8>,
}

/// Label tuple derived from an annotation.
pub fn labels_of(a: &TargetAnnotation) -> (bool, [bool; 3]) {
    let main = a.label.is_positive();
    let s = a.recorded_size_mm;
    (main, [main && s > 0.0, s >= 2.0, s > 0.0 && s <= 2.0])
}

/// Checks the no-leakage invariants over a whole manifest: every series is
/// confined to one split, folds appear on train rows only, and test rows
/// carry the identity transform.
pub fn validate_manifest(records: &[SampleRecord]) -> Result<(), String> {
    use std::collections::HashMap;
    let mut split_of: HashMap<u64, Split> = HashMap::new();
    let mut fold_of: HashMap<u64, u8> = HashMap::new();
    let mut seen_ids = std::collections::HashSet::new();
    for r in records {
        if !seen_ids.insert(r.record_id) {
            return Err(format!("duplicate record_id {}", r.record_id));
        }
        match split_of.insert(r.series_id, r.split) {
            Some(prev) if prev != r.split => {
                return Err(format!("series {} appears in both splits", r.series_id));
            }
            _ => {}
        }
        match (r.split, r.fold) {
            (Split::Train, Some(f)) => {
                if f as usize >= N_FOLDS {
                    return Err(format!("record {} has fold {f}", r.record_id));
                }
                match fold_of.insert(r.series_id, f) {
                    Some(prev) if prev != f => {
                        return Err(format!("series {} appears in two folds", r.series_id));
                    }
                    _ => {}
                }
            }
            (Split::Test, None) => {
                if !r.transform.is_identity() {
                    return Err(format!("test record {} is augmented", r.record_id));
                }
            }
            _ => return Err(format!("record {} has inconsistent split/fold", r.record_id)),
        }
    }
    Ok(())
}
