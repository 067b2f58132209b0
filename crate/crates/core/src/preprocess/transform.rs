//! Rigid VOI transforms: a unit quaternion plus a voxel shift.

use rand::Rng;

/// Rotation (unit quaternion, w-first) and per-axis shift in voxels.
#[derive(Debug, Clone, PartialEq)]
pub struct RigidTransform {
    pub rotation: [f32; 4],
    pub shift_voxels: [f32; 3],
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self { rotation: [1.0, 0.0, 0.0, 0.0], shift_voxels: [0.0; 3] }
    }

    pub fn is_identity(&self) -> bool {
        self.rotation == [1.0, 0.0, 0.0, 0.0] && self.shift_voxels == [0.0; 3]
    }

    pub fn rotation_norm(&self) -> f64 {
        self.rotation.iter().map(|&c| (c as f64).powi(2)).sum::<f64>().sqrt()
    }

    /// Row-major rotation matrix, computed in f64 to keep axis-aligned
    /// rotations exact to well below voxel scale.
    pub fn rotation_matrix(&self) -> [[f64; 3]; 3] {
        let [w, x, y, z] = self.rotation.map(|c| c as f64);
        [
            [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
            [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
            [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
        ]
    }

    /// Applies rotation then shift to a lattice offset.
    pub fn apply(&self, offset: [f64; 3]) -> [f64; 3] {
        let m = self.rotation_matrix();
        let mut out = [0f64; 3];
        for (a, row) in m.iter().enumerate() {
            out[a] = row[0] * offset[0] + row[1] * offset[1] + row[2] * offset[2]
                + self.shift_voxels[a] as f64;
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct AugmentConfig {
    pub enabled: bool,
    /// Shift bound per axis, in voxels.
    pub max_shift_voxels: f32,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self { enabled: true, max_shift_voxels: 6.0 }
    }
}

/// Uniformly random orientation (Shoemake's subgroup method) and a uniform
/// per-axis shift in `[-s, s]`. Disabled augmentation yields the identity.
pub fn sample_transform<R: Rng>(rng: &mut R, cfg: &AugmentConfig) -> RigidTransform {
    if !cfg.enabled {
        return RigidTransform::identity();
    }
    let u1: f64 = rng.random();
    let u2: f64 = rng.random();
    let u3: f64 = rng.random();
    let tau = std::f64::consts::TAU;
    let (a, b) = ((1.0 - u1).sqrt(), u1.sqrt());
    let rotation = [
        (a * (tau * u2).sin()) as f32,
        (a * (tau * u2).cos()) as f32,
        (b * (tau * u3).sin()) as f32,
        (b * (tau * u3).cos()) as f32,
    ];
    let s = cfg.max_shift_voxels;
    let shift_voxels = [
        rng.random_range(-s..=s),
        rng.random_range(-s..=s),
        rng.random_range(-s..=s),
    ];
    RigidTransform { rotation, shift_voxels }
}
