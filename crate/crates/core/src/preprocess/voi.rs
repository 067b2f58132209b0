//! 48-cube extraction around a target under a rigid transform.

use super::transform::RigidTransform;
use super::PATCH_SIDE;
use crate::phantom::Volume3D;

pub const SIDE: usize = PATCH_SIDE;
/// Lattice offset of block index 0 from the center voxel; block index 24
/// lands exactly on the center.
const OFFSET0: i64 = -24;

/// The untransformed VOI would leave the volume, so no patch can be made for
/// this target and its series is excluded upstream.
#[derive(Debug, Clone, PartialEq)]
pub struct PeripheryError {
    pub center: [i32; 3],
    pub dims: [usize; 3],
}

impl std::fmt::Display for PeripheryError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "target at {:?} is too close to the periphery of a {:?} volume for a {SIDE}-cube",
            self.center, self.dims
        )
    }
}

impl std::error::Error for PeripheryError {}

/// A dense 48-cube of intensities, x-fastest like the source volume.
#[derive(Debug, Clone, PartialEq)]
pub struct VoiBlock {
    data: Vec<f32>,
}

impl VoiBlock {
    pub fn zeros() -> Self {
        Self { data: vec![0.0; SIDE * SIDE * SIDE] }
    }

    pub fn from_vec(data: Vec<f32>) -> Self {
        assert_eq!(data.len(), SIDE * SIDE * SIDE);
        Self { data }
    }

    #[inline]
    pub fn index(i: usize, j: usize, k: usize) -> usize {
        i + SIDE * (j + SIDE * k)
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize, k: usize) -> f32 {
        self.data[Self::index(i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f32) {
        self.data[Self::index(i, j, k)] = v;
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Trilinear sample at a continuous block position, zero outside.
    #[inline]
    pub fn sample(&self, x: f32, y: f32, z: f32) -> f32 {
        // Interior fast path: truncation equals floor for non-negative
        // coordinates and the whole 2x2x2 cell is in bounds.
        if x >= 0.0 && y >= 0.0 && z >= 0.0 {
            let (ix, iy, iz) = (x as usize, y as usize, z as usize);
            if ix < SIDE - 1 && iy < SIDE - 1 && iz < SIDE - 1 {
                let (fx, fy, fz) = (x - ix as f32, y - iy as f32, z - iz as f32);
                let base = ix + SIDE * (iy + SIDE * iz);
                // In bounds: base + SIDE*SIDE + SIDE + 1 <= SIDE^3 - 1.
                let d = &self.data;
                let (v000, v100, v010, v110, v001, v101, v011, v111) = unsafe {
                    (
                        *d.get_unchecked(base),
                        *d.get_unchecked(base + 1),
                        *d.get_unchecked(base + SIDE),
                        *d.get_unchecked(base + SIDE + 1),
                        *d.get_unchecked(base + SIDE * SIDE),
                        *d.get_unchecked(base + SIDE * SIDE + 1),
                        *d.get_unchecked(base + SIDE * SIDE + SIDE),
                        *d.get_unchecked(base + SIDE * SIDE + SIDE + 1),
                    )
                };
                let c00 = v000 * (1.0 - fx) + v100 * fx;
                let c10 = v010 * (1.0 - fx) + v110 * fx;
                let c01 = v001 * (1.0 - fx) + v101 * fx;
                let c11 = v011 * (1.0 - fx) + v111 * fx;
                let c0 = c00 * (1.0 - fy) + c10 * fy;
                let c1 = c01 * (1.0 - fy) + c11 * fy;
                return c0 * (1.0 - fz) + c1 * fz;
            }
        }
        self.sample_boundary(x, y, z)
    }

    #[cold]
    fn sample_boundary(&self, x: f32, y: f32, z: f32) -> f32 {
        let n = SIDE as i64;
        let (x0, y0, z0) = (x.floor(), y.floor(), z.floor());
        let (fx, fy, fz) = (x - x0, y - y0, z - z0);
        let (ix, iy, iz) = (x0 as i64, y0 as i64, z0 as i64);
        let fetch = |dx: i64, dy: i64, dz: i64| -> f32 {
            let (px, py, pz) = (ix + dx, iy + dy, iz + dz);
            if px < 0 || py < 0 || pz < 0 || px >= n || py >= n || pz >= n {
                0.0
            } else {
                self.data[px as usize + SIDE * (py as usize + SIDE * pz as usize)]
            }
        };
        let c00 = fetch(0, 0, 0) * (1.0 - fx) + fetch(1, 0, 0) * fx;
        let c10 = fetch(0, 1, 0) * (1.0 - fx) + fetch(1, 1, 0) * fx;
        let c01 = fetch(0, 0, 1) * (1.0 - fx) + fetch(1, 0, 1) * fx;
        let c11 = fetch(0, 1, 1) * (1.0 - fx) + fetch(1, 1, 1) * fx;
        let c0 = c00 * (1.0 - fy) + c10 * fy;
        let c1 = c01 * (1.0 - fy) + c11 * fy;
        c0 * (1.0 - fz) + c1 * fz
    }
}

/// Samples the transformed VOI lattice around `center` by trilinear
/// interpolation; positions outside the volume read as zero.
///
/// Block voxel `(i, j, k)` samples the volume at
/// `center + R * (i - 24, j - 24, k - 24) + shift`, so the identity
/// transform reproduces the raw sub-array exactly.
///
/// Fails with [`PeripheryError`] when the untransformed lattice
/// `center - 24 ..= center + 23` does not fit inside the volume.
pub fn extract_voi(vol: &Volume3D, center: [i32; 3], t: &RigidTransform) -> Result<VoiBlock, PeripheryError> {
    let dims = vol.dims();
    for a in 0..3 {
        let lo = center[a] as i64 + OFFSET0;
        let hi = center[a] as i64 + OFFSET0 + SIDE as i64 - 1;
        if lo < 0 || hi > dims[a] as i64 - 1 {
            return Err(PeripheryError { center, dims });
        }
    }
    let m = t.rotation_matrix();
    let shift = t.shift_voxels.map(|s| s as f64);
    let cf = center.map(|c| c as f64);
    let mut block = VoiBlock::zeros();
    let mut idx = 0usize;
    for k in 0..SIDE {
        let oz = (k as i64 + OFFSET0) as f64;
        for j in 0..SIDE {
            let oy = (j as i64 + OFFSET0) as f64;
            for i in 0..SIDE {
                let ox = (i as i64 + OFFSET0) as f64;
                let px = cf[0] + m[0][0] * ox + m[0][1] * oy + m[0][2] * oz + shift[0];
                let py = cf[1] + m[1][0] * ox + m[1][1] * oy + m[1][2] * oz + shift[1];
                let pz = cf[2] + m[2][0] * ox + m[2][1] * oy + m[2][2] * oz + shift[2];
                block.data[idx] = vol.sample_trilinear(px as f32, py as f32, pz as f32);
                idx += 1;
            }
        }
    }
    Ok(block)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::Volume3D;

    fn patterned_volume() -> Volume3D {
        let mut vol = Volume3D::new([64, 64, 64], [0.5; 3]).unwrap();
        for z in 0..64 {
            for y in 0..64 {
                for x in 0..64 {
                    // Asymmetric and cheap to recompute in oracles.
                    let v = ((x * 131 + y * 17 + z * 7) % 97) as f32 / 97.0;
                    vol.set(x, y, z, v);
                }
            }
        }
        vol
    }

    #[test]
    fn identity_on_constant_volume_is_constant() {
        let mut vol = Volume3D::new([64, 64, 64], [0.5; 3]).unwrap();
        for v in vol.intensities_mut() {
            *v = 0.37;
        }
        let block = extract_voi(&vol, [30, 30, 30], &RigidTransform::identity()).unwrap();
        assert!(block.data().iter().all(|&v| v == 0.37));
    }

    #[test]
    fn identity_equals_raw_subarray_exactly() {
        let vol = patterned_volume();
        let c = [30, 31, 29];
        let block = extract_voi(&vol, c, &RigidTransform::identity()).unwrap();
        for k in 0..SIDE {
            for j in 0..SIDE {
                for i in 0..SIDE {
                    let expect = vol.at(
                        (c[0] - 24 + i as i32) as usize,
                        (c[1] - 24 + j as i32) as usize,
                        (c[2] - 24 + k as i32) as usize,
                    );
                    assert_eq!(block.at(i, j, k), expect);
                }
            }
        }
    }

    #[test]
    fn quarter_turn_about_z_matches_permutation_oracle() {
        // Rz(90 deg): offset (ox, oy, oz) -> (-oy, ox, oz). All sample
        // positions stay on the integer lattice inside the volume, so the
        // block must equal a direct volume readback at permuted offsets.
        let vol = patterned_volume();
        let c = [32, 32, 32];
        let h = (0.5f64).sqrt();
        let t = RigidTransform { rotation: [h as f32, 0.0, 0.0, h as f32], shift_voxels: [0.0; 3] };
        let block = extract_voi(&vol, c, &t).unwrap();
        for k in 0..SIDE {
            for j in 0..SIDE {
                for i in 0..SIDE {
                    let (ox, oy, oz) = (i as i32 - 24, j as i32 - 24, k as i32 - 24);
                    let expect = vol.at((c[0] - oy) as usize, (c[1] + ox) as usize, (c[2] + oz) as usize);
                    // f32 quaternion components put sample positions a few
                    // 1e-6 voxels off the lattice.
                    assert!(
                        (block.at(i, j, k) - expect).abs() < 1e-5,
                        "mismatch at ({i},{j},{k}): {} vs {expect}",
                        block.at(i, j, k)
                    );
                }
            }
        }
    }

    #[test]
    fn periphery_targets_are_rejected() {
        let vol = patterned_volume();
        assert!(extract_voi(&vol, [23, 32, 32], &RigidTransform::identity()).is_err());
        assert!(extract_voi(&vol, [24, 32, 32], &RigidTransform::identity()).is_ok());
        assert!(extract_voi(&vol, [40, 32, 32], &RigidTransform::identity()).is_ok());
        assert!(extract_voi(&vol, [41, 32, 32], &RigidTransform::identity()).is_err());
    }

    #[test]
    fn out_of_volume_samples_are_zero_after_shift() {
        let mut vol = Volume3D::new([64, 64, 64], [0.5; 3]).unwrap();
        for v in vol.intensities_mut() {
            *v = 1.0;
        }
        // Shift +6 in x pushes the lattice past the volume edge at center 39.
        let t = RigidTransform { rotation: [1.0, 0.0, 0.0, 0.0], shift_voxels: [6.0, 0.0, 0.0] };
        let block = extract_voi(&vol, [39, 32, 32], &t).unwrap();
        assert_eq!(block.at(SIDE - 1, 24, 24), 0.0);
        assert_eq!(block.at(0, 24, 24), 1.0);
    }
}
