//! Phantom generation: bright curved tubes on a dark noisy background, with
//! spherical lesion bulges attached to the tubes.

use rand::Rng;

use super::{PhantomError, TrueLesion, Volume3D};
use crate::rng::substream;

#[derive(Debug, Clone)]
pub struct PhantomConfig {
    pub dims: [usize; 3],
    pub spacing_mm: [f32; 3],
    /// Exact number of lesions to place, 0..=8.
    pub lesion_count: usize,
    pub lesion_size_range_mm: (f32, f32),
    pub lesion_contrast_range: (f32, f32),
    pub vessel_count_range: (usize, usize),
    /// Tube radius range in voxels.
    pub vessel_radius_range: (f32, f32),
    pub vessel_intensity_range: (f32, f32),
    /// Uniform background noise ceiling.
    pub noise_level: f32,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        Self {
            dims: [64, 64, 64],
            spacing_mm: [0.5, 0.5, 0.5],
            lesion_count: 2,
            // Sizes straddle the annotator thresholds so policies disagree
            // on a sizeable fraction of lesions.
            lesion_size_range_mm: (1.0, 6.0),
            lesion_contrast_range: (0.18, 0.35),
            vessel_count_range: (3, 5),
            vessel_radius_range: (1.3, 2.1),
            vessel_intensity_range: (0.5, 0.65),
            noise_level: 0.15,
        }
    }
}

impl PhantomConfig {
    /// Interior band where a 48-cube of interest centered on a target stays
    /// fully inside the volume.
    pub fn usable_range(&self, axis: usize) -> (i32, i32) {
        (24, self.dims[axis] as i32 - 24)
    }
}

struct VesselCurve {
    start: [f32; 3],
    end: [f32; 3],
    amp: [f32; 2],
    freq: [f32; 2],
    phase: [f32; 2],
    perp: [[f32; 3]; 2],
    radius: f32,
    intensity: f32,
}

impl VesselCurve {
    fn point(&self, t: f32) -> [f32; 3] {
        let mut p = [0f32; 3];
        for a in 0..3 {
            p[a] = self.start[a] + t * (self.end[a] - self.start[a]);
        }
        for k in 0..2 {
            let s = self.amp[k] * (std::f32::consts::PI * self.freq[k] * t + self.phase[k]).sin();
            for a in 0..3 {
                p[a] += s * self.perp[k][a];
            }
        }
        p
    }
}

fn unit(v: [f32; 3]) -> [f32; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt().max(1e-6);
    [v[0] / n, v[1] / n, v[2] / n]
}

fn cross(a: [f32; 3], b: [f32; 3]) -> [f32; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

/// Splats a solid bright ball with a soft half-voxel edge.
fn splat_ball(vol: &mut Volume3D, center: [f32; 3], radius: f32, intensity: f32) {
    let [nx, ny, nz] = vol.dims();
    let r_out = radius + 1.0;
    let lo = |c: f32| ((c - r_out).floor().max(0.0)) as usize;
    let hi = |c: f32, n: usize| ((c + r_out).ceil().min((n - 1) as f32)) as usize;
    for z in lo(center[2])..=hi(center[2], nz) {
        for y in lo(center[1])..=hi(center[1], ny) {
            for x in lo(center[0])..=hi(center[0], nx) {
                let dx = x as f32 - center[0];
                let dy = y as f32 - center[1];
                let dz = z as f32 - center[2];
                let d = (dx * dx + dy * dy + dz * dz).sqrt();
                let fall = if d <= radius {
                    1.0
                } else if d < r_out {
                    1.0 - (d - radius)
                } else {
                    continue;
                };
                vol.brighten(x, y, z, intensity * fall);
            }
        }
    }
}

/// Generates one phantom volume and its ground-truth lesions.
///
/// Deterministic for a fixed `(seed, cfg)` pair. Lesions sit on vessel
/// centerlines inside the interior band, spaced at least 8 voxels apart.
pub fn generate_phantom(seed: u64, cfg: &PhantomConfig) -> Result<(Volume3D, Vec<TrueLesion>), PhantomError> {
    if cfg.dims.iter().any(|&d| d < Volume3D::MIN_DIM) {
        return Err(PhantomError::InvalidDims(cfg.dims));
    }
    if cfg.lesion_count > 8 {
        return Err(PhantomError::InvalidLesionCount(cfg.lesion_count));
    }
    let mut rng = substream(seed, "phantom", &[]);
    let mut vol = Volume3D::new(cfg.dims, cfg.spacing_mm)?;

    // Smooth background: white noise on a coarse lattice, upsampled
    // trilinearly. Low-frequency texture reads like tissue background and
    // keeps projection rays cheap to bound.
    let noise = cfg.noise_level;
    let [nx, ny, nz] = cfg.dims;
    let coarse = 8usize;
    let (cx, cy, cz) = (nx / coarse + 2, ny / coarse + 2, nz / coarse + 2);
    let lattice: Vec<f32> = (0..cx * cy * cz).map(|_| rng.random::<f32>() * noise).collect();
    let lat = |x: usize, y: usize, z: usize| lattice[x + cx * (y + cy * z)];
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let (fx, fy, fz) = (
                    x as f32 / coarse as f32,
                    y as f32 / coarse as f32,
                    z as f32 / coarse as f32,
                );
                let (ix, iy, iz) = (fx as usize, fy as usize, fz as usize);
                let (gx, gy, gz) = (fx - ix as f32, fy - iy as f32, fz - iz as f32);
                let c00 = lat(ix, iy, iz) * (1.0 - gx) + lat(ix + 1, iy, iz) * gx;
                let c10 = lat(ix, iy + 1, iz) * (1.0 - gx) + lat(ix + 1, iy + 1, iz) * gx;
                let c01 = lat(ix, iy, iz + 1) * (1.0 - gx) + lat(ix + 1, iy, iz + 1) * gx;
                let c11 = lat(ix, iy + 1, iz + 1) * (1.0 - gx) + lat(ix + 1, iy + 1, iz + 1) * gx;
                let c0 = c00 * (1.0 - gy) + c10 * gy;
                let c1 = c01 * (1.0 - gy) + c11 * gy;
                vol.set(x, y, z, c0 * (1.0 - gz) + c1 * gz);
            }
        }
    }

    // Vessels: smooth perturbed lines crossing the interior band.
    let n_vessels = rng.random_range(cfg.vessel_count_range.0..=cfg.vessel_count_range.1);
    let mut centerline: Vec<[f32; 3]> = Vec::new();
    let dimf = [cfg.dims[0] as f32, cfg.dims[1] as f32, cfg.dims[2] as f32];
    for _ in 0..n_vessels {
        let axis = rng.random_range(0..3usize);
        let mut start = [0f32; 3];
        let mut end = [0f32; 3];
        for a in 0..3 {
            if a == axis {
                start[a] = 6.0;
                end[a] = dimf[a] - 7.0;
            } else {
                // Anchor both ends near the interior band so the tube crosses it.
                start[a] = rng.random_range(dimf[a] * 0.35..dimf[a] * 0.65);
                end[a] = rng.random_range(dimf[a] * 0.35..dimf[a] * 0.65);
            }
        }
        let dir = unit([end[0] - start[0], end[1] - start[1], end[2] - start[2]]);
        let seed_perp = if axis == 0 { [0.0, 1.0, 0.0] } else { [1.0, 0.0, 0.0] };
        let p1 = unit(cross(dir, seed_perp));
        let p2 = unit(cross(dir, p1));
        let curve = VesselCurve {
            start,
            end,
            amp: [rng.random_range(2.0..7.0), rng.random_range(2.0..7.0)],
            freq: [rng.random_range(0.6..1.6), rng.random_range(0.6..1.6)],
            phase: [rng.random_range(0.0..std::f32::consts::TAU), rng.random_range(0.0..std::f32::consts::TAU)],
            perp: [p1, p2],
            radius: rng.random_range(cfg.vessel_radius_range.0..cfg.vessel_radius_range.1),
            intensity: rng.random_range(cfg.vessel_intensity_range.0..cfg.vessel_intensity_range.1),
        };
        let length_est: f32 = (0..3).map(|a| (end[a] - start[a]).abs()).sum();
        let steps = (length_est * 3.0) as usize;
        for s in 0..=steps {
            let t = s as f32 / steps as f32;
            let p = curve.point(t);
            if s % 3 == 0 {
                centerline.push(p);
            }
            splat_ball(&mut vol, p, curve.radius, curve.intensity);
        }
    }

    // Lesion sites: centerline points inside the usable band, mutually
    // spaced so CAD matching stays unambiguous.
    let mut lesions: Vec<TrueLesion> = Vec::new();
    let mut tries = 0;
    while lesions.len() < cfg.lesion_count && tries < 4000 {
        tries += 1;
        let p = centerline[rng.random_range(0..centerline.len())];
        let c = [p[0].round() as i32, p[1].round() as i32, p[2].round() as i32];
        let inside = (0..3).all(|a| {
            let (lo, hi) = cfg.usable_range(a);
            c[a] >= lo && c[a] <= hi
        });
        if !inside {
            continue;
        }
        let far = lesions.iter().all(|l| {
            let d2: i32 = (0..3).map(|a| (l.center[a] - c[a]).pow(2)).sum();
            d2 >= 64
        });
        if !far {
            continue;
        }
        let size_mm = rng.random_range(cfg.lesion_size_range_mm.0..cfg.lesion_size_range_mm.1);
        let contrast = rng.random_range(cfg.lesion_contrast_range.0..cfg.lesion_contrast_range.1);
        lesions.push(TrueLesion { center: c, size_mm, contrast });
    }

    let mean_spacing = (cfg.spacing_mm[0] + cfg.spacing_mm[1] + cfg.spacing_mm[2]) / 3.0;
    for l in &lesions {
        let r_vox = (l.size_mm / 2.0 / mean_spacing).max(1.0);
        let base = vol.at(l.center[0] as usize, l.center[1] as usize, l.center[2] as usize);
        let bright = (base.max(cfg.vessel_intensity_range.0) + l.contrast).min(0.98);
        splat_ball(
            &mut vol,
            [l.center[0] as f32, l.center[1] as f32, l.center[2] as f32],
            r_vox,
            bright,
        );
    }

    vol.clamp_unit();
    Ok((vol, lesions))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_lesions_yields_empty_list() {
        let cfg = PhantomConfig { lesion_count: 0, ..PhantomConfig::default() };
        let (_, lesions) = generate_phantom(1, &cfg).unwrap();
        assert!(lesions.is_empty());
    }

    #[test]
    fn fixed_seed_is_bit_identical() {
        let cfg = PhantomConfig::default();
        let (a, la) = generate_phantom(1, &cfg).unwrap();
        let (b, lb) = generate_phantom(1, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(la, lb);
        let (c, _) = generate_phantom(2, &cfg).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn lesion_centers_read_back_bright() {
        // Direct readback: every lesion center must sit on bright tissue.
        let cfg = PhantomConfig { lesion_count: 3, ..PhantomConfig::default() };
        let (vol, lesions) = generate_phantom(2, &cfg).unwrap();
        assert_eq!(lesions.len(), 3);
        for l in &lesions {
            let v = vol.at(l.center[0] as usize, l.center[1] as usize, l.center[2] as usize);
            assert!(
                v >= cfg.vessel_intensity_range.0,
                "lesion center at {:?} reads {v}, below vessel level",
                l.center
            );
        }
    }

    #[test]
    fn invalid_dims_are_a_configuration_error() {
        let cfg = PhantomConfig { dims: [48, 64, 64], ..PhantomConfig::default() };
        assert!(matches!(generate_phantom(1, &cfg), Err(PhantomError::InvalidDims(_))));
    }

    #[test]
    fn intensities_stay_in_unit_range() {
        let (vol, _) = generate_phantom(7, &PhantomConfig { lesion_count: 8, ..Default::default() }).unwrap();
        assert!(vol.intensities().iter().all(|v| v.is_finite() && (0.0..=1.0).contains(v)));
    }
}
