//! Synthetic vascular volumes with ground-truth lesions, a simulated
//! candidate suggester, and annotator labeling policies.

mod annotate;
mod cad;
mod gen;
mod io;
mod volume;

pub use annotate::{simulate_annotator, AnnotatorError, AnnotatorProfile};
pub use cad::{simulate_cad, CadConfig};
pub use gen::{generate_phantom, PhantomConfig};
pub use io::{
    read_annotations_csv, read_volume, write_annotations_csv, write_lesions_csv, write_volume,
};
pub use volume::Volume3D;

#[derive(Debug, Clone, PartialEq)]
pub enum PhantomError {
    /// A volume axis is below the 64-voxel minimum.
    InvalidDims([usize; 3]),
    /// Lesion count outside the supported 0..=8 range.
    InvalidLesionCount(usize),
    /// Malformed volume file.
    Format(String),
    Io(String),
}

impl std::fmt::Display for PhantomError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::InvalidDims(d) => write!(f, "volume dims {d:?} below the 64-voxel minimum"),
            Self::InvalidLesionCount(n) => write!(f, "lesion count {n} outside 0..=8"),
            Self::Format(m) => write!(f, "bad volume file: {m}"),
            Self::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl std::error::Error for PhantomError {}

impl From<std::io::Error> for PhantomError {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e.to_string())
    }
}

/// A bright spherical bulge attached to a vessel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrueLesion {
    /// Voxel coordinates, strictly inside the volume.
    pub center: [i32; 3],
    /// Bulge diameter in millimeters, positive.
    pub size_mm: f32,
    /// Brightness added on top of the carrying vessel.
    pub contrast: f32,
}

/// The verdict an annotator records for one target position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    /// Suggested by the CAD and accepted.
    TruePositive,
    /// Suggested by the CAD and rejected.
    FalsePositive,
    /// Missed by the CAD, added by the annotator.
    FalseNegative,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::TruePositive => "TP",
            Self::FalsePositive => "FP",
            Self::FalseNegative => "FN",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "TP" => Some(Self::TruePositive),
            "FP" => Some(Self::FalsePositive),
            "FN" => Some(Self::FalseNegative),
            _ => None,
        }
    }

    /// Aneurysm-positive means the annotator saw a lesion there.
    pub fn is_positive(self) -> bool {
        matches!(self, Self::TruePositive | Self::FalseNegative)
    }
}

/// One labeled target position of one series.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetAnnotation {
    pub series_id: u64,
    pub position: [i32; 3],
    pub label: Label,
    pub cad_suggested: bool,
    /// 0 when no aneurysm was recorded (always 0 for FP).
    pub recorded_size_mm: f32,
    pub annotator_id: u32,
}

impl TargetAnnotation {
    /// Panics when the label/flag/size relations are violated.
    pub fn assert_invariants(&self) {
        match self.label {
            Label::TruePositive | Label::FalsePositive => {
                assert!(self.cad_suggested, "TP/FP must be CAD-suggested");
            }
            Label::FalseNegative => {
                assert!(!self.cad_suggested, "FN cannot be CAD-suggested");
            }
        }
        if self.label.is_positive() {
            assert!(self.recorded_size_mm > 0.0, "positive labels record a size");
        } else {
            assert_eq!(self.recorded_size_mm, 0.0, "FP records no size");
        }
    }
}
