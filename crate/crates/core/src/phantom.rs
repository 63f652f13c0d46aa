//! Synthetic 3-D phantom cases with known ground truth.
//!
//! Each case is a (native, standard-dose, low-dose, residual) tuple built
//! from a smooth anatomy proxy, spherical lesions with dose-scaled
//! enhancement and an additive Gaussian or magnitude-Rician noise model.
//! Everything is bit-reproducible from the seed.

use alloc::string::String;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;

use crate::math;
use crate::rng;
use crate::volume::Volume;
use crate::{Error, Result};

/// Case metadata: contrast dose fraction and scanner field strength.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetaData {
    pub dose: f64,
    pub field_strength: f64,
}

impl MetaData {
    pub fn new(dose: f64, field_strength: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&dose) {
            return Err(Error::InvalidSpec(alloc::format!("dose {dose} outside [0, 1]")));
        }
        if field_strength != 1.5 && field_strength != 3.0 {
            return Err(Error::InvalidSpec(alloc::format!(
                "field strength {field_strength} not in {{1.5, 3.0}}"
            )));
        }
        Ok(MetaData { dose, field_strength })
    }
}

/// Dose interval the training scheme samples from.
pub const DOSE_RANGE: (f64, f64) = (0.05, 0.5);
/// Acquired dose levels.
pub const DOSE_SET: [f64; 3] = [0.1, 0.2, 0.33];

/// Draws a dose uniformly from [0.05, 0.5].
pub fn sample_dose(r: &mut ChaCha8Rng) -> f64 {
    DOSE_RANGE.0 + (DOSE_RANGE.1 - DOSE_RANGE.0) * rng::uniform(r)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseModel {
    Gaussian,
    /// Magnitude of the signal plus a complex Gaussian.
    Rician,
}

/// How enhancement scales with dose; both satisfy r(1) = 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DoseResponse {
    Linear,
    /// r(d) = (1 - exp(-beta d)) / (1 - exp(-beta))
    Saturating { beta: f64 },
}

impl DoseResponse {
    pub fn apply(&self, d: f64) -> f64 {
        match *self {
            DoseResponse::Linear => d,
            DoseResponse::Saturating { beta } => {
                (1.0 - math::exp(-beta * d)) / (1.0 - math::exp(-beta))
            }
        }
    }
}

/// A spherical lesion with peak enhancement at full dose.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lesion {
    pub center: (f64, f64, f64),
    pub radius: f64,
    pub enhancement: f64,
}

/// Default noise std per field strength; plumbing constants, not
/// measured values.
pub fn default_sigma(field_strength: f64) -> f64 {
    if field_strength == 3.0 {
        0.03
    } else {
        0.05
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomSpec {
    pub dims: (usize, usize, usize),
    pub background: f64,
    /// Amplitude of the smooth anatomy proxy added to the background.
    pub anatomy_amplitude: f64,
    pub lesions: Vec<Lesion>,
    pub dose: f64,
    pub field_strength: f64,
    pub noise: NoiseModel,
    /// Noise std; None picks the per-field default.
    pub sigma: Option<f64>,
    pub dose_response: DoseResponse,
    pub seed: u64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        PhantomSpec {
            dims: (32, 32, 32),
            background: 0.8,
            anatomy_amplitude: 0.05,
            lesions: alloc::vec![Lesion {
                center: (16.0, 16.0, 16.0),
                radius: 5.0,
                enhancement: 0.6,
            }],
            dose: 0.33,
            field_strength: 3.0,
            noise: NoiseModel::Gaussian,
            sigma: None,
            dose_response: DoseResponse::Linear,
            seed: 0,
        }
    }
}

impl PhantomSpec {
    pub fn sigma_base(&self) -> f64 {
        self.sigma.unwrap_or_else(|| default_sigma(self.field_strength))
    }

    pub fn validate(&self) -> Result<()> {
        MetaData::new(self.dose, self.field_strength)?;
        let (nx, ny, nz) = self.dims;
        if nx == 0 || ny == 0 || nz == 0 {
            return Err(Error::InvalidSpec(String::from("empty dims")));
        }
        for (i, l) in self.lesions.iter().enumerate() {
            let inside = l.center.0 - l.radius >= 0.0
                && l.center.1 - l.radius >= 0.0
                && l.center.2 - l.radius >= 0.0
                && l.center.0 + l.radius <= (nx - 1) as f64
                && l.center.1 + l.radius <= (ny - 1) as f64
                && l.center.2 + l.radius <= (nz - 1) as f64;
            if !inside {
                return Err(Error::InvalidSpec(alloc::format!("lesion {i} outside the volume")));
            }
            if !(l.radius > 0.0) || !l.enhancement.is_finite() {
                return Err(Error::InvalidSpec(alloc::format!("lesion {i} invalid")));
            }
        }
        if self.sigma_base() < 0.0 {
            return Err(Error::InvalidSpec(String::from("negative sigma")));
        }
        if !(self.background.is_finite() && self.anatomy_amplitude.is_finite()) {
            return Err(Error::InvalidSpec(String::from("non-finite background")));
        }
        Ok(())
    }

    fn anatomy(&self, x: usize, y: usize, z: usize) -> f64 {
        let (nx, ny, nz) = self.dims;
        let tau = 2.0 * core::f64::consts::PI;
        self.anatomy_amplitude
            * math::cos(tau * x as f64 / nx as f64)
            * math::cos(tau * 2.0 * y as f64 / ny as f64)
            * math::cos(tau * z as f64 / nz as f64)
    }

    /// Noise-free enhancement field at dose response value `r`.
    fn enhancement_at(&self, r: f64, x: usize, y: usize, z: usize) -> f64 {
        let mut e = 0.0;
        for l in &self.lesions {
            let dx = x as f64 - l.center.0;
            let dy = y as f64 - l.center.1;
            let dz = z as f64 - l.center.2;
            if dx * dx + dy * dy + dz * dz <= l.radius * l.radius {
                e += r * l.enhancement;
            }
        }
        e
    }

    /// Clean (noise-free) signal volume at a dose-response value.
    pub fn clean_signal(&self, dose: Option<f64>) -> Result<Volume> {
        let (nx, ny, nz) = self.dims;
        let r = dose.map(|d| self.dose_response.apply(d)).unwrap_or(0.0);
        let mut voxels = Vec::with_capacity(nx * ny * nz);
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    let mut v = self.background + self.anatomy(x, y, z);
                    if r != 0.0 {
                        v += self.enhancement_at(r, x, y, z);
                    }
                    voxels.push(v);
                }
            }
        }
        Volume::new(self.dims, voxels)
    }
}

fn add_noise(clean: &Volume, model: NoiseModel, sigma: f64, r: &mut ChaCha8Rng) -> Volume {
    let voxels = clean
        .voxels()
        .iter()
        .map(|&s| match model {
            NoiseModel::Gaussian => s + sigma * rng::normal(r),
            NoiseModel::Rician => {
                let (n1, n2) = rng::normal_pair(r);
                let re = s + sigma * n1;
                let im = sigma * n2;
                math::sqrt(re * re + im * im)
            }
        })
        .collect();
    Volume::new(clean.dims(), voxels).expect("noise keeps values finite")
}

/// A generated phantom case.
#[derive(Debug, Clone, PartialEq)]
pub struct PhantomCase {
    pub x_na: Volume,
    pub x_sd: Volume,
    pub x_ld: Volume,
    /// Residual `x_ld - x_na`, exact by construction.
    pub y_ld: Volume,
    pub meta: MetaData,
    pub sigma: f64,
}

/// Generates one case: native, standard-dose and low-dose volumes with
/// independent noise draws, plus the residual.
pub fn generate(spec: &PhantomSpec) -> Result<PhantomCase> {
    spec.validate()?;
    let sigma = spec.sigma_base();
    let mut r = rng::seeded(spec.seed);
    let base = spec.clean_signal(None)?;
    let sd_clean = spec.clean_signal(Some(1.0))?;
    let ld_clean = spec.clean_signal(Some(spec.dose))?;
    let x_na = add_noise(&base, spec.noise, sigma, &mut r);
    let x_sd = add_noise(&sd_clean, spec.noise, sigma, &mut r);
    let x_ld = add_noise(&ld_clean, spec.noise, sigma, &mut r);
    let y_ld = x_ld.zip(&x_na, |a, b| a - b)?;
    Ok(PhantomCase {
        x_na,
        x_sd,
        x_ld,
        y_ld,
        meta: MetaData::new(spec.dose, spec.field_strength)?,
        sigma,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::ce_mask;

    #[test]
    fn noise_free_zero_lesion_case_is_flat() {
        let spec = PhantomSpec {
            lesions: Vec::new(),
            sigma: Some(0.0),
            ..Default::default()
        };
        let case = generate(&spec).unwrap();
        assert_eq!(case.x_na, case.x_sd);
        assert_eq!(case.x_na, case.x_ld);
        assert!(case.y_ld.voxels().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_dose_scales_lesion_residual() {
        let spec = PhantomSpec { dose: 0.33, sigma: Some(0.0), ..Default::default() };
        let case = generate(&spec).unwrap();
        let center = case.y_ld.get(16, 16, 16);
        assert!((center - 0.33 * 0.6).abs() < 1e-12, "center residual {center}");
    }

    #[test]
    fn residual_identity_is_bit_exact() {
        let spec = PhantomSpec::default();
        let case = generate(&spec).unwrap();
        let diff = case.x_ld.zip(&case.x_na, |a, b| a - b).unwrap();
        assert_eq!(diff, case.y_ld);
    }

    #[test]
    fn residual_noise_std_is_sqrt2_sigma() {
        let spec = PhantomSpec {
            lesions: Vec::new(),
            sigma: Some(0.05),
            seed: 77,
            ..Default::default()
        };
        let case = generate(&spec).unwrap();
        let v = case.y_ld.voxels();
        let mean: f64 = v.iter().sum::<f64>() / v.len() as f64;
        let var: f64 = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / v.len() as f64;
        let std = var.sqrt();
        let expected = 0.05 * core::f64::consts::SQRT_2;
        assert!((std - expected).abs() / expected < 0.05, "std {std} expected {expected}");
    }

    #[test]
    fn dose_monotonicity_of_clean_enhancement() {
        let spec = PhantomSpec { sigma: Some(0.0), ..Default::default() };
        let mut prev = -1.0;
        for i in 0..=10 {
            let d = i as f64 / 10.0;
            let v = spec.clean_signal(Some(d)).unwrap();
            let base = spec.clean_signal(None).unwrap();
            let enh: f64 = v
                .voxels()
                .iter()
                .zip(base.voxels())
                .map(|(a, b)| a - b)
                .sum();
            assert!(enh >= prev, "enhancement not monotone at d={d}");
            prev = enh;
        }
    }

    #[test]
    fn ce_mask_recovers_lesion() {
        let spec = PhantomSpec { sigma: Some(0.02), seed: 5, ..Default::default() };
        let case = generate(&spec).unwrap();
        let mask = ce_mask(&case.x_na, &case.x_sd, 0.1).unwrap();
        let clean_sd = spec.clean_signal(Some(1.0)).unwrap();
        let clean_na = spec.clean_signal(None).unwrap();
        let mut lesion_total = 0usize;
        let mut lesion_hit = 0usize;
        let mut bg_total = 0usize;
        let mut bg_hit = 0usize;
        for i in 0..case.x_na.len() {
            let is_lesion = clean_sd.voxels()[i] - clean_na.voxels()[i] > 0.0;
            if is_lesion {
                lesion_total += 1;
                if mask.mask()[i] {
                    lesion_hit += 1;
                }
            } else {
                bg_total += 1;
                if mask.mask()[i] {
                    bg_hit += 1;
                }
            }
        }
        assert!(lesion_hit as f64 >= 0.99 * lesion_total as f64, "{lesion_hit}/{lesion_total}");
        assert!(bg_hit as f64 <= 0.01 * bg_total as f64, "{bg_hit}/{bg_total}");
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = PhantomSpec { seed: 123, ..Default::default() };
        assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
    }

    #[test]
    fn rician_noise_keeps_magnitudes_nonnegative() {
        let spec = PhantomSpec {
            background: 0.0,
            anatomy_amplitude: 0.0,
            lesions: Vec::new(),
            noise: NoiseModel::Rician,
            sigma: Some(0.1),
            ..Default::default()
        };
        let case = generate(&spec).unwrap();
        assert!(case.x_na.voxels().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn invalid_specs_rejected() {
        let spec = PhantomSpec {
            lesions: alloc::vec![Lesion { center: (31.0, 16.0, 16.0), radius: 5.0, enhancement: 0.5 }],
            ..Default::default()
        };
        assert!(matches!(generate(&spec), Err(Error::InvalidSpec(_))));
        let spec = PhantomSpec { field_strength: 7.0, ..Default::default() };
        assert!(matches!(generate(&spec), Err(Error::InvalidSpec(_))));
        let spec = PhantomSpec { dose: 1.5, ..Default::default() };
        assert!(matches!(generate(&spec), Err(Error::InvalidSpec(_))));
    }
}
