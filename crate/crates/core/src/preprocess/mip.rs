//! Orthographic maximum intensity projection of a 48-cube along nine view
//! directions.
//!
//! The directions form a 3x3 grid of azimuth x elevation angles in
//! {-45, 0, +45} degrees around the z axis. Each channel is rendered on a
//! 48x48 raster orthogonal to its view vector; every ray takes the maximum
//! of trilinear samples spaced `MIP_STEP_VOXELS` apart, anchored at integer
//! multiples of the step so the sample set is reproducible.

use super::transform::RigidTransform;
use super::voi::{VoiBlock, SIDE};
use super::{NineChannelPatch, N_CHANNELS, PATCH_SIDE};

/// Ray sampling step in voxels.
pub const MIP_STEP_VOXELS: f32 = 0.25;

/// (azimuth, elevation) pairs in degrees, row-major over elevation then
/// azimuth; channel 4 is the straight axial view.
pub const MIP_DIRECTIONS: [(f64, f64); 9] = [
    (-45.0, -45.0),
    (0.0, -45.0),
    (45.0, -45.0),
    (-45.0, 0.0),
    (0.0, 0.0),
    (45.0, 0.0),
    (-45.0, 45.0),
    (0.0, 45.0),
    (45.0, 45.0),
];

/// Orthonormal (u, v, d) camera basis for a view: `d` is the ray direction,
/// `u`/`v` span the raster plane.
pub fn view_basis(azimuth_deg: f64, elevation_deg: f64) -> ([f64; 3], [f64; 3], [f64; 3]) {
    let az = azimuth_deg.to_radians();
    let el = elevation_deg.to_radians();
    let (sa, ca) = (az.sin(), az.cos());
    let (se, ce) = (el.sin(), el.cos());
    let u = [ca, 0.0, -sa];
    let v = [se * sa, ce, se * ca];
    let d = [ce * sa, -se, ce * ca];
    (u, v, d)
}

/// Half-extent of the sampling range; covers the block diagonal with margin.
const S_MAX: f64 = 64.0;
/// Trilinear support of a zero-padded 48-cube, with guard margin.
const BOX_LO: f64 = -1.25;
const BOX_HI: f64 = SIDE as f64 + 0.25;

/// Clips `base + s*d` against the support box, returning the inclusive step
/// index range, or None when the ray misses entirely.
fn clip_steps(base: [f64; 3], d: [f64; 3], step: f64) -> Option<(i64, i64)> {
    let (mut s_lo, mut s_hi) = (-S_MAX, S_MAX);
    for a in 0..3 {
        if d[a].abs() < 1e-12 {
            if base[a] < BOX_LO || base[a] > BOX_HI {
                return None;
            }
        } else {
            let t1 = (BOX_LO - base[a]) / d[a];
            let t2 = (BOX_HI - base[a]) / d[a];
            s_lo = s_lo.max(t1.min(t2));
            s_hi = s_hi.min(t1.max(t2));
        }
    }
    if s_lo > s_hi {
        return None;
    }
    let k_lo = (s_lo / step).ceil() as i64;
    let k_hi = (s_hi / step).floor() as i64;
    (k_lo <= k_hi).then_some((k_lo, k_hi))
}

/// Projects the block along all nine directions with the default step.
pub fn mip_project(block: &VoiBlock) -> NineChannelPatch {
    mip_project_with_step(block, MIP_STEP_VOXELS)
}

/// Upper bound per interpolation cell: the max of its eight corners. Lets
/// rays skip cells that cannot beat their running maximum without changing
/// the result (trilinear values are convex combinations of the corners).
fn cell_maxima(block: &VoiBlock) -> Vec<f32> {
    let n = SIDE - 1;
    let mut cm = vec![0f32; n * n * n];
    for cz in 0..n {
        for cy in 0..n {
            for cx in 0..n {
                let mut m = 0f32;
                for dz in 0..2 {
                    for dy in 0..2 {
                        for dx in 0..2 {
                            m = m.max(block.at(cx + dx, cy + dy, cz + dz));
                        }
                    }
                }
                cm[cx + n * (cy + n * cz)] = m;
            }
        }
    }
    cm
}

pub fn mip_project_with_step(block: &VoiBlock, step: f32) -> NineChannelPatch {
    let step = step as f64;
    let c = (SIDE as f64 - 1.0) / 2.0;
    let cm = cell_maxima(block);
    let n = SIDE - 1;
    let mut data = vec![0f32; N_CHANNELS * PATCH_SIDE * PATCH_SIDE];
    let inv_step = 1.0 / step;
    for (ch, &(az, el)) in MIP_DIRECTIONS.iter().enumerate() {
        let (u, v, d) = view_basis(az, el);
        let inv_d = d.map(|c| if c.abs() > 1e-12 { 1.0 / c } else { f64::INFINITY });
        let plane = &mut data[ch * PATCH_SIDE * PATCH_SIDE..(ch + 1) * PATCH_SIDE * PATCH_SIDE];
        for py in 0..PATCH_SIDE {
            let fv = py as f64 - c;
            for px in 0..PATCH_SIDE {
                let fu = px as f64 - c;
                let base = [
                    c + fu * u[0] + fv * v[0],
                    c + fu * u[1] + fv * v[1],
                    c + fu * u[2] + fv * v[2],
                ];
                let mut best = 0f32;
                if let Some((k_lo, k_hi)) = clip_steps(base, d, step) {
                    let mut k = k_lo;
                    while k <= k_hi {
                        let s = k as f64 * step;
                        let pos = [base[0] + s * d[0], base[1] + s * d[1], base[2] + s * d[2]];
                        let (x, y, z) = (pos[0] as f32, pos[1] as f32, pos[2] as f32);
                        if x >= 0.0 && y >= 0.0 && z >= 0.0 {
                            let (ix, iy, iz) = (x as usize, y as usize, z as usize);
                            if ix < n && iy < n && iz < n && cm[ix + n * (iy + n * iz)] <= best {
                                // Jump past this cell: every skipped sample
                                // stays inside it, so the bound applies.
                                let mut dt = f64::INFINITY;
                                for a in 0..3 {
                                    if inv_d[a].is_finite() {
                                        let boundary = if d[a] > 0.0 { pos[a].floor() + 1.0 } else { pos[a].floor() };
                                        dt = dt.min((boundary - pos[a]) * inv_d[a]);
                                    }
                                }
                                let jump = if dt.is_finite() { (dt * inv_step).floor() as i64 + 1 } else { 1 };
                                k += jump.max(1);
                                continue;
                            }
                        }
                        let val = block.sample(x, y, z);
                        if val > best {
                            best = val;
                        }
                        k += 1;
                    }
                }
                plane[py * PATCH_SIDE + px] = best;
            }
        }
    }
    let patch = NineChannelPatch {
        data,
        series_id: 0,
        target_idx: 0,
        transform: RigidTransform::identity(),
    };
    patch.assert_invariants();
    patch
}
