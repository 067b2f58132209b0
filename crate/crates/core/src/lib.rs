//! Annotator-conditioned classification of aneurysm candidates on synthetic
//! vascular phantoms.
//!
//! The pipeline generates bright-vessel test volumes with known lesions,
//! simulates a candidate suggester and several annotator labeling policies,
//! projects 48-cube volumes of interest to nine-channel MIP patches, trains a
//! shared-weight residual network (optionally conditioned on the annotator)
//! with a rectified Adam optimizer, and evaluates the two model kinds with
//! ROC/AUC, DeLong and chi-square statistics.

pub mod autodiff;
pub mod dataset;
pub mod eval;
pub mod model;
pub mod phantom;
pub mod pipeline;
pub mod preprocess;
pub mod rng;
pub mod training;
pub mod util;
