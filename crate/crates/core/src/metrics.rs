//! Contrast-enhancement evaluation: CE mask, MAE over CE voxels, noise-std
//! MAE over non-CE voxels, PSNR and slice-wise SSIM.

use alloc::vec::Vec;

use crate::math;
use crate::volume::Volume;
use crate::{Error, Result};

/// Boolean mask of contrast-enhancing voxels.
///
/// A voxel enhances when the standard-dose minus native difference is at
/// least `threshold` times the native 0.95-quantile (boundary included).
#[derive(Debug, Clone, PartialEq)]
pub struct CeMask {
    dims: (usize, usize, usize),
    mask: Vec<bool>,
    threshold_used: f64,
    q95_used: f64,
}

impl CeMask {
    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn threshold_used(&self) -> f64 {
        self.threshold_used
    }

    pub fn q95_used(&self) -> f64 {
        self.q95_used
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }

    /// Mask as a 0/1 volume, for file output.
    pub fn to_volume(&self) -> Volume {
        let voxels = self.mask.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        Volume::new(self.dims, voxels).expect("mask length matches dims")
    }

    fn check_dims(&self, v: &Volume) -> Result<()> {
        if v.dims() != self.dims {
            return Err(Error::DimsMismatch { expected: self.dims, got: v.dims() });
        }
        Ok(())
    }
}

/// CE mask from a native/standard-dose pair.
pub fn ce_mask(x_na: &Volume, x_sd: &Volume, threshold: f64) -> Result<CeMask> {
    x_na.same_dims(x_sd)?;
    let q95 = x_na.q95();
    if !(q95 > 0.0) {
        return Err(Error::DegenerateNormalization { q95 });
    }
    let cut = threshold * q95;
    let mask = x_sd
        .voxels()
        .iter()
        .zip(x_na.voxels())
        .map(|(&sd, &na)| sd - na >= cut)
        .collect();
    Ok(CeMask { dims: x_na.dims(), mask, threshold_used: threshold, q95_used: q95 })
}

/// Mean absolute error over CE voxels.
pub fn mae_ce(x_hat: &Volume, x_ref: &Volume, mask: &CeMask) -> Result<f64> {
    x_hat.same_dims(x_ref)?;
    mask.check_dims(x_hat)?;
    let mut sum = 0.0;
    let mut count = 0usize;
    for ((&a, &b), &m) in x_hat.voxels().iter().zip(x_ref.voxels()).zip(mask.mask()) {
        if m {
            sum += math::abs(a - b);
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::EmptyMask);
    }
    Ok(sum / count as f64)
}

fn population_std(values: impl Iterator<Item = f64> + Clone, count: usize) -> f64 {
    let mean: f64 = values.clone().sum::<f64>() / count as f64;
    let var: f64 = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / count as f64;
    math::sqrt(var)
}

/// Absolute error between the residual noise stds over non-CE voxels.
///
/// The std is estimated globally (population form) on `x - x_na`
/// restricted to mask-false voxels, for both the estimate and the
/// reference.
pub fn mae_sigma(x_hat: &Volume, x_ref: &Volume, x_na: &Volume, mask: &CeMask) -> Result<f64> {
    x_hat.same_dims(x_ref)?;
    x_hat.same_dims(x_na)?;
    mask.check_dims(x_hat)?;
    let count = x_hat.len() - mask.count();
    if count < 2 {
        return Err(Error::TooFewNonCeVoxels { count });
    }
    let residual = |v: &Volume| -> Vec<f64> {
        v.voxels()
            .iter()
            .zip(x_na.voxels())
            .zip(mask.mask())
            .filter(|(_, &m)| !m)
            .map(|((&x, &na), _)| x - na)
            .collect()
    };
    let rh = residual(x_hat);
    let rr = residual(x_ref);
    let sigma_hat = population_std(rh.iter().copied(), count);
    let sigma_ref = population_std(rr.iter().copied(), count);
    Ok(math::abs(sigma_hat - sigma_ref))
}

/// Peak signal-to-noise ratio in dB; +inf for identical volumes.
pub fn psnr(x_hat: &Volume, x_ref: &Volume, peak: f64) -> Result<f64> {
    x_hat.same_dims(x_ref)?;
    let n = x_hat.len() as f64;
    let mse: f64 = x_hat
        .voxels()
        .iter()
        .zip(x_ref.voxels())
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum::<f64>()
        / n;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * math::log10(peak * peak / mse))
}

pub const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;
const SSIM_L: f64 = 1.0;

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    let mut sum = 0.0;
    for (i, wi) in w.iter_mut().enumerate() {
        let d = i as f64 - c;
        *wi = math::exp(-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA));
        sum += *wi;
    }
    for wi in &mut w {
        *wi /= sum;
    }
    w
}

/// Mean local SSIM, computed in 2-D over axial (fixed-z) slices with an
/// 11-wide separable Gaussian window (sigma 1.5) on fully interior
/// positions, then averaged over positions and slices.
pub fn ssim(x_hat: &Volume, x_ref: &Volume) -> Result<f64> {
    x_hat.same_dims(x_ref)?;
    let (nx, ny, nz) = x_hat.dims();
    if nx < SSIM_WINDOW || ny < SSIM_WINDOW {
        return Err(Error::VolumeTooSmall { dims: x_hat.dims(), window: SSIM_WINDOW });
    }
    let w = gaussian_window();
    let half = SSIM_WINDOW / 2;
    let c1 = (SSIM_K1 * SSIM_L) * (SSIM_K1 * SSIM_L);
    let c2 = (SSIM_K2 * SSIM_L) * (SSIM_K2 * SSIM_L);
    let mut total = 0.0;
    let mut count = 0usize;
    for z in 0..nz {
        for cy in half..ny - half {
            for cx in half..nx - half {
                let mut mu_a = 0.0;
                let mut mu_b = 0.0;
                let mut saa = 0.0;
                let mut sbb = 0.0;
                let mut sab = 0.0;
                for dy in 0..SSIM_WINDOW {
                    let wy = w[dy];
                    let y = cy + dy - half;
                    for dx in 0..SSIM_WINDOW {
                        let weight = wy * w[dx];
                        let x = cx + dx - half;
                        let a = x_hat.get(x, y, z);
                        let b = x_ref.get(x, y, z);
                        mu_a += weight * a;
                        mu_b += weight * b;
                        saa += weight * a * a;
                        sbb += weight * b * b;
                        sab += weight * a * b;
                    }
                }
                let va = saa - mu_a * mu_a;
                let vb = sbb - mu_b * mu_b;
                let cov = sab - mu_a * mu_b;
                let num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2);
                let den = (mu_a * mu_a + mu_b * mu_b + c1) * (va + vb + c2);
                total += num / den;
                count += 1;
            }
        }
    }
    Ok(total / count as f64)
}

/// The metric bundle reported per case.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub psnr_db: f64,
    pub ssim: f64,
    pub mae_ce: f64,
    pub mae_sigma: f64,
    pub ce_voxel_count: usize,
}

/// Evaluates the full bundle for a synthesized volume against a reference,
/// with the CE mask derived from the native/standard-dose pair.
pub fn evaluate(
    x_hat: &Volume,
    x_ref: &Volume,
    x_na: &Volume,
    x_sd: &Volume,
    threshold: f64,
) -> Result<MetricsReport> {
    let mask = ce_mask(x_na, x_sd, threshold)?;
    Ok(MetricsReport {
        psnr_db: psnr(x_hat, x_ref, 1.0)?,
        ssim: ssim(x_hat, x_ref)?,
        mae_ce: mae_ce(x_hat, x_ref, &mask)?,
        mae_sigma: mae_sigma(x_hat, x_ref, x_na, &mask)?,
        ce_voxel_count: mask.count(),
    })
}
