//! Non-overlapping n³ patch tilings with periodic boundary handling.

use alloc::vec::Vec;

use crate::volume::Volume;
use crate::{Error, Result};

/// A tiling of a volume into disjoint n³ patches at a periodic offset.
///
/// Origins run over `{0, n, 2n, ...}³` in lexicographic order; each patch
/// gathers the voxels at `(origin + local + offset) mod dims`. Offsets are
/// restricted to `{0, ..., ceil(n/2)}³`. Because every dimension must be a
/// multiple of `n`, the shifted tiles always partition the volume exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchGrid {
    dims: (usize, usize, usize),
    n: usize,
    offset: (usize, usize, usize),
    origins: Vec<(usize, usize, usize)>,
}

/// Largest admissible offset component for patch size `n`.
pub fn max_offset(n: usize) -> usize {
    n.div_ceil(2)
}

/// Builds the tiling for `dims` with patch edge `n` and periodic offset.
pub fn make_patch_grid(
    dims: (usize, usize, usize),
    n: usize,
    offset: (usize, usize, usize),
) -> Result<PatchGrid> {
    let (nx, ny, nz) = dims;
    if n < 2 {
        return Err(Error::InvalidConfig(alloc::format!("patch size n={n} must be >= 2")));
    }
    if n > nx || n > ny || n > nz || nx % n != 0 || ny % n != 0 || nz % n != 0 {
        return Err(Error::DegenerateTiling { dims, n });
    }
    let mo = max_offset(n);
    if offset.0 > mo || offset.1 > mo || offset.2 > mo {
        return Err(Error::OffsetOutOfRange { offset, max: mo });
    }
    let mut origins = Vec::with_capacity((nx / n) * (ny / n) * (nz / n));
    for px in (0..nx).step_by(n) {
        for py in (0..ny).step_by(n) {
            for pz in (0..nz).step_by(n) {
                origins.push((px, py, pz));
            }
        }
    }
    Ok(PatchGrid { dims, n, offset, origins })
}

impl PatchGrid {
    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn offset(&self) -> (usize, usize, usize) {
        self.offset
    }

    /// Voxels per patch (n³).
    pub fn patch_len(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn num_patches(&self) -> usize {
        self.origins.len()
    }

    /// Patch origins in lexicographic order.
    pub fn origins(&self) -> &[(usize, usize, usize)] {
        &self.origins
    }

    /// Linear voxel indices of patch `i`, local x fastest.
    pub fn patch_indices(&self, i: usize) -> Vec<usize> {
        let (px, py, pz) = self.origins[i];
        let (nx, ny, nz) = self.dims;
        let (ox, oy, oz) = self.offset;
        let mut out = Vec::with_capacity(self.patch_len());
        for lz in 0..self.n {
            let z = (pz + lz + oz) % nz;
            for ly in 0..self.n {
                let y = (py + ly + oy) % ny;
                for lx in 0..self.n {
                    let x = (px + lx + ox) % nx;
                    out.push(x + nx * (y + ny * z));
                }
            }
        }
        out
    }

    /// Values of patch `i` of a volume.
    pub fn gather(&self, v: &Volume, i: usize) -> Result<Vec<f64>> {
        if v.dims() != self.dims {
            return Err(Error::DimsMismatch { expected: self.dims, got: v.dims() });
        }
        let voxels = v.voxels();
        Ok(self.patch_indices(i).into_iter().map(|idx| voxels[idx]).collect())
    }

    /// Adds patch-local `values` into a flat voxel buffer.
    pub fn scatter_add(&self, buf: &mut [f64], i: usize, values: &[f64]) {
        for (idx, &val) in self.patch_indices(i).into_iter().zip(values) {
            buf[idx] += val;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::collections::BTreeSet;

    fn assert_partition(dims: (usize, usize, usize), n: usize, offset: (usize, usize, usize)) {
        let g = make_patch_grid(dims, n, offset).unwrap();
        let mut seen = BTreeSet::new();
        let mut count = 0usize;
        for i in 0..g.num_patches() {
            let idx = g.patch_indices(i);
            assert_eq!(idx.len(), n * n * n);
            count += idx.len();
            seen.extend(idx);
        }
        assert_eq!(count, dims.0 * dims.1 * dims.2);
        assert_eq!(seen.len(), dims.0 * dims.1 * dims.2);
    }

    #[test]
    fn single_patch_covers_4cube() {
        let g = make_patch_grid((4, 4, 4), 4, (0, 0, 0)).unwrap();
        assert_eq!(g.num_patches(), 1);
        assert_eq!(g.patch_indices(0).len(), 64);
        assert_partition((4, 4, 4), 4, (0, 0, 0));
    }

    #[test]
    fn wrapped_offset_still_partitions() {
        assert_partition((4, 4, 4), 4, (2, 2, 2));
    }

    #[test]
    fn two_patches_partition_8x4x4() {
        let g = make_patch_grid((8, 4, 4), 4, (0, 0, 0)).unwrap();
        assert_eq!(g.num_patches(), 2);
        assert_partition((8, 4, 4), 4, (0, 0, 0));
    }

    #[test]
    fn all_offsets_partition() {
        for ox in 0..=2 {
            for oy in 0..=2 {
                for oz in 0..=2 {
                    assert_partition((8, 8, 12), 4, (ox, oy, oz));
                }
            }
        }
    }

    #[test]
    fn degenerate_tilings_rejected() {
        assert!(matches!(
            make_patch_grid((2, 4, 4), 4, (0, 0, 0)),
            Err(Error::DegenerateTiling { .. })
        ));
        assert!(matches!(
            make_patch_grid((6, 4, 4), 4, (0, 0, 0)),
            Err(Error::DegenerateTiling { .. })
        ));
    }

    #[test]
    fn offset_out_of_range_rejected() {
        assert!(matches!(
            make_patch_grid((4, 4, 4), 4, (3, 0, 0)),
            Err(Error::OffsetOutOfRange { max: 2, .. })
        ));
    }
}
