//! Annotator policies: size/contrast decision thresholds with optional
//! label-flip noise, applied to the suggester output.

use rand::Rng;

use super::{Label, TargetAnnotation, TrueLesion};
use crate::rng::substream;

/// Radius within which a suggestion counts as marking a lesion.
pub const MATCH_RADIUS_VOX: f64 = 2.0;

/// One annotator's decision policy.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatorProfile {
    /// 1-based annotator id.
    pub id: u32,
    /// Position of this annotator's 1 in the one-hot input.
    pub one_hot_index: usize,
    /// Minimum lesion diameter the annotator calls positive.
    pub size_threshold_mm: f32,
    /// Minimum lesion contrast the annotator calls positive.
    pub contrast_threshold: f32,
    /// Probability of flipping a threshold decision, in [0, 0.1].
    pub flip_rate: f64,
}

impl AnnotatorProfile {
    fn passes(&self, lesion: &TrueLesion) -> bool {
        lesion.size_mm >= self.size_threshold_mm && lesion.contrast >= self.contrast_threshold
    }
}

/// Four policies whose size thresholds descend, so positive-call frequency
/// rises from annotator 1 (strict) to annotator 4 (lenient).
pub fn default_profiles() -> Vec<AnnotatorProfile> {
    let thresholds = [4.0f32, 2.6, 2.5, 1.3];
    thresholds
        .iter()
        .enumerate()
        .map(|(i, &t)| AnnotatorProfile {
            id: i as u32 + 1,
            one_hot_index: i,
            size_threshold_mm: t,
            contrast_threshold: 0.08,
            flip_rate: 0.02,
        })
        .collect()
}

/// Validates id/one-hot uniqueness and threshold positivity.
pub fn validate_profiles(profiles: &[AnnotatorProfile]) -> Result<(), AnnotatorError> {
    let mut seen_ids = std::collections::HashSet::new();
    let mut seen_hot = std::collections::HashSet::new();
    for p in profiles {
        if !seen_ids.insert(p.id) || !seen_hot.insert(p.one_hot_index) || p.one_hot_index >= profiles.len() {
            return Err(AnnotatorError::BadProfiles);
        }
        if p.size_threshold_mm <= 0.0 || p.contrast_threshold <= 0.0 || !(0.0..=0.1).contains(&p.flip_rate) {
            return Err(AnnotatorError::BadProfiles);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub enum AnnotatorError {
    /// Two suggestions at the same position.
    DuplicateSuggestion([i32; 3]),
    /// Ids or one-hot indices collide, or thresholds are not positive.
    BadProfiles,
}

impl std::fmt::Display for AnnotatorError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::DuplicateSuggestion(p) => write!(f, "duplicate suggestion at {p:?}"),
            Self::BadProfiles => write!(f, "invalid annotator profiles"),
        }
    }
}

impl std::error::Error for AnnotatorError {}

fn nearest_lesion(p: [i32; 3], lesions: &[TrueLesion]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, l) in lesions.iter().enumerate() {
        let d2: f64 = (0..3).map(|a| ((l.center[a] - p[a]) as f64).powi(2)).sum();
        if d2.sqrt() <= MATCH_RADIUS_VOX && best.map_or(true, |(_, bd)| d2 < bd) {
            best = Some((i, d2));
        }
    }
    best.map(|(i, _)| i)
}

/// Labels every suggestion TP or FP by the profile's thresholds (with flip
/// noise on matched suggestions), then adds an FN at the center of every
/// unsuggested lesion that clears the thresholds.
///
/// With `flip_rate` 0 this is a pure function of its arguments.
pub fn simulate_annotator(
    series_id: u64,
    profile: &AnnotatorProfile,
    suggestions: &[[i32; 3]],
    lesions: &[TrueLesion],
    seed: u64,
) -> Result<Vec<TargetAnnotation>, AnnotatorError> {
    for (i, a) in suggestions.iter().enumerate() {
        for b in &suggestions[i + 1..] {
            if a == b {
                return Err(AnnotatorError::DuplicateSuggestion(*a));
            }
        }
    }
    let mut rng = substream(seed, "annotate", &[series_id, profile.id as u64]);
    let mut out = Vec::new();
    let mut matched = vec![false; lesions.len()];

    for &pos in suggestions {
        let (label, size) = match nearest_lesion(pos, lesions) {
            Some(idx) => {
                matched[idx] = true;
                let mut agree = profile.passes(&lesions[idx]);
                if rng.random::<f64>() < profile.flip_rate {
                    agree = !agree;
                }
                if agree {
                    (Label::TruePositive, lesions[idx].size_mm)
                } else {
                    (Label::FalsePositive, 0.0)
                }
            }
            None => (Label::FalsePositive, 0.0),
        };
        out.push(TargetAnnotation {
            series_id,
            position: pos,
            label,
            cad_suggested: true,
            recorded_size_mm: size,
            annotator_id: profile.id,
        });
    }

    for (idx, l) in lesions.iter().enumerate() {
        if !matched[idx] && profile.passes(l) {
            out.push(TargetAnnotation {
                series_id,
                position: l.center,
                label: Label::FalseNegative,
                cad_suggested: false,
                recorded_size_mm: l.size_mm,
                annotator_id: profile.id,
            });
        }
    }

    for a in &out {
        a.assert_invariants();
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lesion(center: [i32; 3], size_mm: f32, contrast: f32) -> TrueLesion {
        TrueLesion { center, size_mm, contrast }
    }

    fn profile(threshold: f32, flip: f64) -> AnnotatorProfile {
        AnnotatorProfile {
            id: 1,
            one_hot_index: 0,
            size_threshold_mm: threshold,
            contrast_threshold: 0.05,
            flip_rate: flip,
        }
    }

    #[test]
    fn empty_inputs_empty_output() {
        let anns = simulate_annotator(0, &profile(2.0, 0.0), &[], &[], 1).unwrap();
        assert!(anns.is_empty());
    }

    #[test]
    fn suggestion_on_large_lesion_becomes_tp_with_its_size() {
        let l = lesion([30, 30, 30], 3.0, 0.3);
        let anns = simulate_annotator(0, &profile(2.0, 0.0), &[[30, 30, 30]], &[l], 1).unwrap();
        assert_eq!(anns.len(), 1);
        assert_eq!(anns[0].label, Label::TruePositive);
        assert_eq!(anns[0].recorded_size_mm, 3.0);
        assert!(anns[0].cad_suggested);
    }

    #[test]
    fn below_threshold_match_is_fp_and_unsuggested_lesion_is_fn() {
        let small = lesion([30, 30, 30], 1.0, 0.3);
        let big = lesion([45, 45, 45], 5.0, 0.3);
        let anns = simulate_annotator(0, &profile(2.0, 0.0), &[[30, 30, 31]], &[small, big], 1).unwrap();
        assert_eq!(anns.len(), 2);
        assert_eq!(anns[0].label, Label::FalsePositive);
        assert_eq!(anns[0].recorded_size_mm, 0.0);
        assert_eq!(anns[1].label, Label::FalseNegative);
        assert_eq!(anns[1].position, [45, 45, 45]);
        assert!(!anns[1].cad_suggested);
        assert_eq!(anns[1].recorded_size_mm, 5.0);
    }

    #[test]
    fn duplicate_suggestions_are_rejected() {
        let err = simulate_annotator(0, &profile(2.0, 0.0), &[[1, 2, 3], [1, 2, 3]], &[], 1);
        assert!(matches!(err, Err(AnnotatorError::DuplicateSuggestion(_))));
    }

    #[test]
    fn zero_flip_rate_is_deterministic_and_pure() {
        let l = vec![lesion([30, 30, 30], 2.5, 0.3), lesion([40, 40, 40], 1.2, 0.2)];
        let s = vec![[30, 30, 30], [40, 41, 40]];
        let p = profile(2.0, 0.0);
        let a = simulate_annotator(7, &p, &s, &l, 1).unwrap();
        let b = simulate_annotator(7, &p, &s, &l, 99).unwrap();
        assert_eq!(a, b); // seed-independent when flips are off
    }

    #[test]
    fn lowering_size_threshold_never_loses_positives() {
        // Monotonicity at flip_rate 0 over a generated corpus.
        use super::super::{generate_phantom, simulate_cad, CadConfig, PhantomConfig};
        let mut count_lo = 0usize;
        let mut count_hi = 0usize;
        for seed in 0..120u64 {
            let cfg = PhantomConfig { lesion_count: (seed % 5) as usize, ..Default::default() };
            let (vol, lesions) = generate_phantom(seed, &cfg).unwrap();
            let sug = simulate_cad(&vol, &lesions, seed, &CadConfig::default());
            for (thr, count) in [(1.0f32, &mut count_lo), (4.0f32, &mut count_hi)] {
                let anns = simulate_annotator(seed, &profile(thr, 0.0), &sug, &lesions, seed).unwrap();
                *count += anns.iter().filter(|a| a.label.is_positive()).count();
            }
        }
        assert!(count_lo >= count_hi);
        assert!(count_lo > 0);
    }
}
