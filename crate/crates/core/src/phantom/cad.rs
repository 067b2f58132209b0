//! Simulated candidate suggester: proposes up to five aneurysm-suspicious
//! positions per series, mixing detected true lesions with vessel-lookalike
//! distractors.

use rand::Rng;

use super::{TrueLesion, Volume3D};
use crate::rng::substream;

pub const MAX_SUGGESTIONS: usize = 5;

#[derive(Debug, Clone)]
pub struct CadConfig {
    /// Probability that a true lesion is suggested.
    pub sensitivity: f64,
    /// Mean number of false-positive distractors (Poisson, capped).
    pub fp_rate: f64,
    /// Voxel intensity above which a position counts as vessel tissue.
    pub vessel_threshold: f32,
}

impl Default for CadConfig {
    fn default() -> Self {
        Self { sensitivity: 0.92, fp_rate: 2.4, vessel_threshold: 0.45 }
    }
}

fn poisson(rng: &mut impl Rng, mean: f64) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    let limit = (-mean).exp();
    let mut k = 0usize;
    let mut p = 1.0;
    loop {
        p *= rng.random::<f64>();
        if p <= limit || k > 32 {
            return k;
        }
        k += 1;
    }
}

/// Suggests 0..=5 positions: each lesion with probability
/// `cfg.sensitivity` (jittered by up to one voxel), then vessel distractors
/// well away from every lesion, up to the cap.
pub fn simulate_cad(vol: &Volume3D, lesions: &[TrueLesion], seed: u64, cfg: &CadConfig) -> Vec<[i32; 3]> {
    let mut rng = substream(seed, "cad", &[]);
    let mut out: Vec<[i32; 3]> = Vec::new();

    for l in lesions {
        let hit = rng.random::<f64>() < cfg.sensitivity;
        let mut p = l.center;
        for c in p.iter_mut() {
            *c += rng.random_range(-1..=1);
        }
        if hit && out.len() < MAX_SUGGESTIONS && vol.contains(p) {
            out.push(p);
        }
    }

    let n_fp = poisson(&mut rng, cfg.fp_rate).min(MAX_SUGGESTIONS - out.len());
    let mut placed = 0;
    let mut tries = 0;
    let dims = vol.dims();
    while placed < n_fp && tries < 2000 {
        tries += 1;
        let p = [
            rng.random_range(24..dims[0] as i32 - 24),
            rng.random_range(24..dims[1] as i32 - 24),
            rng.random_range(24..dims[2] as i32 - 24),
        ];
        if vol.at(p[0] as usize, p[1] as usize, p[2] as usize) < cfg.vessel_threshold {
            continue;
        }
        let clear = lesions
            .iter()
            .map(|l| l.center)
            .chain(out.iter().copied())
            .all(|q| (0..3).map(|a| (q[a] - p[a]).pow(2)).sum::<i32>() >= 36);
        if clear {
            out.push(p);
            placed += 1;
        }
    }
    debug_assert!(out.len() <= MAX_SUGGESTIONS);
    out
}
