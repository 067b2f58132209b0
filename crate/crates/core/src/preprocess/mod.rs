//! VOI extraction under rigid transforms and nine-direction maximum
//! intensity projection.

mod cache;
mod mip;
mod transform;
mod voi;

pub use cache::{read_patch_cache, write_patch_cache, PatchCacheError};
pub use mip::{mip_project, mip_project_with_step, view_basis, MIP_DIRECTIONS, MIP_STEP_VOXELS};
pub use transform::{sample_transform, AugmentConfig, RigidTransform};
pub use voi::{extract_voi, PeripheryError, VoiBlock};

/// Patch side length in pixels, equal to the VOI side in voxels.
pub const PATCH_SIDE: usize = 48;
/// Number of projection directions, one image channel each.
pub const N_CHANNELS: usize = 9;

/// The nine-channel MIP image fed to the model.
#[derive(Debug, Clone, PartialEq)]
pub struct NineChannelPatch {
    /// `N_CHANNELS * PATCH_SIDE * PATCH_SIDE` values in [0, 1], channel-major.
    pub data: Vec<f32>,
    pub series_id: u64,
    pub target_idx: u32,
    pub transform: RigidTransform,
}

impl NineChannelPatch {
    #[inline]
    pub fn at(&self, channel: usize, py: usize, px: usize) -> f32 {
        self.data[(channel * PATCH_SIDE + py) * PATCH_SIDE + px]
    }

    pub fn assert_invariants(&self) {
        assert_eq!(self.data.len(), N_CHANNELS * PATCH_SIDE * PATCH_SIDE);
        assert!(self.data.iter().all(|v| v.is_finite() && (0.0..=1.0).contains(v)));
    }
}

/// Renders the patch for one target: extract the transformed VOI, project it.
pub fn render_patch(
    vol: &crate::phantom::Volume3D,
    center: [i32; 3],
    transform: &RigidTransform,
    series_id: u64,
    target_idx: u32,
) -> Result<NineChannelPatch, PeripheryError> {
    let block = extract_voi(vol, center, transform)?;
    let mut patch = mip_project(&block);
    patch.series_id = series_id;
    patch.target_idx = target_idx;
    patch.transform = transform.clone();
    Ok(patch)
}
