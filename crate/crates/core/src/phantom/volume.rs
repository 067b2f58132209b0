//! The scalar intensity field standing in for an angiography series.

use super::PhantomError;

/// A 3D intensity field with values in [0, 1], stored x-fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume3D {
    dims: [usize; 3],
    spacing_mm: [f32; 3],
    intensities: Vec<f32>,
}

impl Volume3D {
    pub const MIN_DIM: usize = 64;

    /// A zero-filled volume. Every axis must be at least [`Self::MIN_DIM`]
    /// so an interior 48-cube of interest always fits.
    pub fn new(dims: [usize; 3], spacing_mm: [f32; 3]) -> Result<Self, PhantomError> {
        if dims.iter().any(|&d| d < Self::MIN_DIM) {
            return Err(PhantomError::InvalidDims(dims));
        }
        Ok(Self { dims, spacing_mm, intensities: vec![0.0; dims[0] * dims[1] * dims[2]] })
    }

    pub(crate) fn from_parts(
        dims: [usize; 3],
        spacing_mm: [f32; 3],
        intensities: Vec<f32>,
    ) -> Result<Self, PhantomError> {
        if dims.iter().any(|&d| d < Self::MIN_DIM) {
            return Err(PhantomError::InvalidDims(dims));
        }
        if intensities.len() != dims[0] * dims[1] * dims[2] {
            return Err(PhantomError::Format(format!(
                "intensity count {} does not match dims {:?}",
                intensities.len(),
                dims
            )));
        }
        Ok(Self { dims, spacing_mm, intensities })
    }

    #[inline]
    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    #[inline]
    pub fn spacing_mm(&self) -> [f32; 3] {
        self.spacing_mm
    }

    #[inline]
    pub fn intensities(&self) -> &[f32] {
        &self.intensities
    }

    #[inline]
    pub fn intensities_mut(&mut self) -> &mut [f32] {
        &mut self.intensities
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize, z: usize) -> f32 {
        self.intensities[self.index(x, y, z)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, z: usize, v: f32) {
        let i = self.index(x, y, z);
        self.intensities[i] = v;
    }

    /// Raises the voxel to `v` if it is currently darker.
    #[inline]
    pub fn brighten(&mut self, x: usize, y: usize, z: usize, v: f32) {
        let i = self.index(x, y, z);
        if self.intensities[i] < v {
            self.intensities[i] = v;
        }
    }

    pub fn contains(&self, p: [i32; 3]) -> bool {
        p.iter().zip(self.dims).all(|(&c, d)| c >= 0 && (c as usize) < d)
    }

    /// Trilinear sample at a continuous voxel position; 0 outside the volume.
    pub fn sample_trilinear(&self, x: f32, y: f32, z: f32) -> f32 {
        let [nx, ny, nz] = self.dims;
        let (x0, y0, z0) = (x.floor(), y.floor(), z.floor());
        let (fx, fy, fz) = (x - x0, y - y0, z - z0);
        let (ix, iy, iz) = (x0 as i64, y0 as i64, z0 as i64);
        let fetch = |dx: i64, dy: i64, dz: i64| -> f32 {
            let (px, py, pz) = (ix + dx, iy + dy, iz + dz);
            if px < 0 || py < 0 || pz < 0 || px >= nx as i64 || py >= ny as i64 || pz >= nz as i64 {
                0.0
            } else {
                self.intensities[px as usize + nx * (py as usize + ny * pz as usize)]
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

    /// Clamps every voxel into [0, 1] and checks finiteness.
    pub fn clamp_unit(&mut self) {
        for v in &mut self.intensities {
            debug_assert!(v.is_finite());
            *v = v.clamp(0.0, 1.0);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_small_dims() {
        assert!(matches!(
            Volume3D::new([63, 64, 64], [0.5; 3]),
            Err(PhantomError::InvalidDims(_))
        ));
    }

    #[test]
    fn trilinear_is_exact_at_lattice_points() {
        let mut v = Volume3D::new([64, 64, 64], [0.5; 3]).unwrap();
        v.set(10, 20, 30, 0.7);
        assert_eq!(v.sample_trilinear(10.0, 20.0, 30.0), 0.7);
        assert_eq!(v.sample_trilinear(9.0, 20.0, 30.0), 0.0);
    }

    #[test]
    fn trilinear_interpolates_midpoints_and_zero_fills_outside() {
        let mut v = Volume3D::new([64, 64, 64], [0.5; 3]).unwrap();
        v.set(0, 0, 0, 1.0);
        assert!((v.sample_trilinear(0.5, 0.0, 0.0) - 0.5).abs() < 1e-6);
        assert_eq!(v.sample_trilinear(-0.5, 0.0, 0.0), 0.5); // half outside
        assert_eq!(v.sample_trilinear(-2.0, 0.0, 0.0), 0.0);
        assert_eq!(v.sample_trilinear(500.0, 0.0, 0.0), 0.0);
    }
}
