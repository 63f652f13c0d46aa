//! Dense 3-D scalar volumes with normalization metadata.

use alloc::vec::Vec;

use crate::{Error, Result};

/// A dense 3-D scalar field in normalized intensity units.
///
/// Voxels are stored with x fastest: `index = x + nx * (y + ny * z)`.
/// `norm_q95` records the 0.95-quantile the volume was divided by
/// (1.0 if never normalized).
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    dims: (usize, usize, usize),
    voxels: Vec<f64>,
    norm_q95: f64,
}

impl Volume {
    /// Builds a volume, checking the payload length and finiteness.
    pub fn new(dims: (usize, usize, usize), voxels: Vec<f64>) -> Result<Self> {
        Self::with_q95(dims, voxels, 1.0)
    }

    pub fn with_q95(dims: (usize, usize, usize), voxels: Vec<f64>, norm_q95: f64) -> Result<Self> {
        let (nx, ny, nz) = dims;
        if nx == 0 || ny == 0 || nz == 0 {
            return Err(Error::DegenerateTiling { dims, n: 0 });
        }
        let expected = nx * ny * nz;
        if voxels.len() != expected {
            return Err(Error::LengthMismatch { left: expected, right: voxels.len() });
        }
        if voxels.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "voxels" });
        }
        if !(norm_q95.is_finite() && norm_q95 > 0.0) {
            return Err(Error::NonFinite { what: "norm_q95" });
        }
        Ok(Self { dims, voxels, norm_q95 })
    }

    /// Constant-valued volume.
    pub fn constant(dims: (usize, usize, usize), value: f64) -> Result<Self> {
        let (nx, ny, nz) = dims;
        Self::new(dims, alloc::vec![value; nx * ny * nz])
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.voxels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voxels.is_empty()
    }

    pub fn voxels(&self) -> &[f64] {
        &self.voxels
    }

    pub fn norm_q95(&self) -> f64 {
        self.norm_q95
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims.0 * (y + self.dims.1 * z)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.voxels[self.index(x, y, z)]
    }

    pub fn same_dims(&self, other: &Volume) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::DimsMismatch { expected: self.dims, got: other.dims });
        }
        Ok(())
    }

    /// Voxelwise map into a new volume; the result keeps `norm_q95`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Volume> {
        Volume::with_q95(self.dims, self.voxels.iter().map(|&v| f(v)).collect(), self.norm_q95)
    }

    /// Voxelwise binary op with another volume of identical dims.
    pub fn zip(&self, other: &Volume, f: impl Fn(f64, f64) -> f64) -> Result<Volume> {
        self.same_dims(other)?;
        let voxels = self
            .voxels
            .iter()
            .zip(other.voxels.iter())
            .map(|(&a, &b)| f(a, b))
            .collect();
        Volume::with_q95(self.dims, voxels, self.norm_q95)
    }

    /// The 0.95-quantile by the nearest-rank rule: the ceil(0.95 N)-th
    /// order statistic (1-indexed).
    pub fn q95(&self) -> f64 {
        quantile_nearest_rank(&self.voxels, 0.95)
    }

    /// Divides all voxels by the volume's 0.95-quantile.
    ///
    /// Errors if the quantile is not strictly positive (all-zero or
    /// negative-only volumes). Idempotent within 1e-6: a normalized
    /// volume has q95 == 1.
    pub fn normalize(&self) -> Result<Volume> {
        let q = self.q95();
        if !(q > 0.0) {
            return Err(Error::DegenerateNormalization { q95: q });
        }
        let voxels = self.voxels.iter().map(|&v| v / q).collect();
        Volume::with_q95(self.dims, voxels, self.norm_q95 * q)
    }
}

/// Nearest-rank quantile: the ceil(q N)-th smallest value (1-indexed).
pub fn quantile_nearest_rank(values: &[f64], q: f64) -> f64 {
    debug_assert!(!values.is_empty());
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite voxels"));
    let n = sorted.len();
    // ceil(q * n) without float round-off surprises at exact multiples
    let rank = (libm::ceil(q * n as f64) as usize).clamp(1, n);
    sorted[rank - 1]
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    #[test]
    fn constant_volume_normalizes_to_one() {
        let v = Volume::constant((3, 3, 3), 2.0).unwrap();
        let n = v.normalize().unwrap();
        assert!(n.voxels().iter().all(|&x| x == 1.0));
        assert_eq!(n.norm_q95(), 2.0);
    }

    #[test]
    fn normalize_is_idempotent() {
        let voxels: Vec<f64> = (0..64).map(|i| i as f64 * 0.1 + 0.3).collect();
        let v = Volume::new((4, 4, 4), voxels).unwrap();
        let n1 = v.normalize().unwrap();
        let n2 = n1.normalize().unwrap();
        for (a, b) in n1.voxels().iter().zip(n2.voxels()) {
            assert!((a - b).abs() < 1e-6);
        }
        assert!((n1.q95() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn q95_matches_sort_based_oracle_on_linspace() {
        // 1000 voxels linearly spaced 0..10
        let voxels: Vec<f64> = (0..1000).map(|i| 10.0 * i as f64 / 999.0).collect();
        let v = Volume::new((10, 10, 10), voxels.clone()).unwrap();
        // independent oracle: full sort, pick ceil(0.95*1000) = 950th (1-indexed)
        let mut s = voxels;
        s.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(v.q95(), s[949]);
    }

    #[test]
    fn degenerate_normalization_errors() {
        let v = Volume::constant((2, 2, 2), 0.0).unwrap();
        assert!(matches!(v.normalize(), Err(Error::DegenerateNormalization { .. })));
        let v = Volume::constant((2, 2, 2), -1.0).unwrap();
        assert!(matches!(v.normalize(), Err(Error::DegenerateNormalization { .. })));
    }

    #[test]
    fn size_mismatch_rejected() {
        let r = Volume::new((2, 2, 2), alloc::vec![0.0; 7]);
        assert!(matches!(r, Err(Error::LengthMismatch { left: 8, right: 7 })));
    }

    #[test]
    fn non_finite_rejected() {
        let r = Volume::new((1, 1, 2), alloc::vec![0.0, f64::NAN]);
        assert!(matches!(r, Err(Error::NonFinite { .. })));
    }
}
