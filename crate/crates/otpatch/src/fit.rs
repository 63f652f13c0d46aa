//! Network-free fitting demo.
//!
//! A free per-voxel residual is fitted by subgradient descent against K
//! noisy realizations of a clean residual. Under a per-voxel absolute
//! error the minimizer is the per-voxel median, which collapses the noise;
//! under the patch-wise transport loss the fitted residual keeps the noise
//! statistics while matching the enhancement signal.

use rayon::prelude::*;
use serde::Serialize;

use otpatch_core::metrics::{self, CeMask};
use otpatch_core::nploss::{NpLossConfig, OffsetMode};
use otpatch_core::ot::SolverConfig;
use otpatch_core::volume::Volume;
use otpatch_core::{rng, Error};

use crate::error::{DataError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// Per-voxel absolute error averaged over realizations.
    L1,
    /// Patch-wise transport loss averaged over realizations.
    Np,
}

impl LossKind {
    pub fn name(&self) -> &'static str {
        match self {
            LossKind::L1 => "l1",
            LossKind::Np => "np",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    Zeros,
    FirstRealization,
}

#[derive(Debug, Clone)]
pub struct FitConfig {
    pub loss: LossKind,
    pub np: NpLossConfig,
    /// Number of noisy realizations K.
    pub realizations: usize,
    pub iterations: usize,
    /// Step at iteration t is `step0 * decay^t`.
    pub step0: f64,
    pub decay: f64,
    pub init: Init,
    pub seed: u64,
}

impl FitConfig {
    /// Defaults for a loss kind. The transport-loss gradient carries a
    /// 1/n³ patch-mass factor, so its step is scaled by n³ to give both
    /// losses the same per-voxel travel speed.
    pub fn for_loss(loss: LossKind) -> Self {
        let np = NpLossConfig { solver: SolverConfig::exact(), ..Default::default() };
        let step0 = match loss {
            LossKind::L1 => 0.05,
            LossKind::Np => 0.05 * (np.n * np.n * np.n) as f64,
        };
        FitConfig {
            loss,
            np,
            realizations: 32,
            iterations: 2000,
            step0,
            decay: 0.99,
            init: Init::Zeros,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.realizations < 2 {
            return Err(DataError::InvalidField {
                field: "realizations".into(),
                reason: format!("{} must be >= 2", self.realizations),
            });
        }
        if self.iterations < 1 {
            return Err(DataError::InvalidField {
                field: "iterations".into(),
                reason: "must be >= 1".into(),
            });
        }
        if !(self.step0 > 0.0 && self.step0.is_finite()) {
            return Err(DataError::InvalidField {
                field: "step0".into(),
                reason: format!("{} must be positive", self.step0),
            });
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(DataError::InvalidField {
                field: "decay".into(),
                reason: format!("{} must be in (0, 1]", self.decay),
            });
        }
        self.np.validate()?;
        Ok(())
    }
}

/// K independent noisy realizations `clean + sigma * noise`, drawn
/// sequentially from one seeded stream.
pub fn realizations(clean: &Volume, sigma: f64, k: usize, seed: u64) -> Vec<Volume> {
    let mut r = rng::seeded(seed);
    (0..k).map(|_| add_noise(clean, sigma, &mut r)).collect()
}

fn add_noise(clean: &Volume, sigma: f64, r: &mut rand_chacha::ChaCha8Rng) -> Volume {
    let voxels = clean.voxels().iter().map(|&v| v + sigma * rng::normal(r)).collect();
    Volume::new(clean.dims(), voxels).expect("finite noise draw")
}

// keeps the held-out draw disjoint from the fitting realizations
const HELD_OUT_SALT: u64 = 0x9E37_79B9_7F4A_7C15;

/// One extra realization from a stream disjoint from `realizations`.
pub fn held_out_realization(clean: &Volume, sigma: f64, seed: u64) -> Volume {
    let mut r = rng::seeded(seed ^ HELD_OUT_SALT);
    add_noise(clean, sigma, &mut r)
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub residual: Volume,
    /// Loss value at the start of each iteration.
    pub trace: Vec<f64>,
}

fn l1_loss_grad(r: &Volume, ys: &[Volume], grad: &mut [f64]) -> f64 {
    let inv_k = 1.0 / ys.len() as f64;
    let mut loss = 0.0;
    for (i, g) in grad.iter_mut().enumerate() {
        let ri = r.voxels()[i];
        let mut s = 0.0;
        let mut l = 0.0;
        for y in ys {
            let d = ri - y.voxels()[i];
            l += d.abs();
            s += if d > 0.0 {
                1.0
            } else if d < 0.0 {
                -1.0
            } else {
                0.0
            };
        }
        *g = s * inv_k;
        loss += l * inv_k;
    }
    loss
}

fn np_loss_grad(
    r: &Volume,
    ys: &[Volume],
    cfg: &NpLossConfig,
    grad: &mut [f64],
) -> std::result::Result<f64, Error> {
    let inv_k = 1.0 / ys.len() as f64;
    // realizations are independent; parallelize across them and reduce in
    // realization order for thread-count-invariant totals
    let parts: Vec<(f64, Volume)> = ys
        .par_iter()
        .map(|y| otpatch_core::nploss::np_loss_grad_with_value(r, y, cfg))
        .collect::<std::result::Result<_, Error>>()?;
    let mut loss = 0.0;
    for g in grad.iter_mut() {
        *g = 0.0;
    }
    for (l, g) in parts {
        loss += l * inv_k;
        for (gi, &v) in grad.iter_mut().zip(g.voxels()) {
            *gi += v * inv_k;
        }
    }
    Ok(loss)
}

/// Fits a free per-voxel residual to K noisy realizations of `clean` by
/// subgradient descent with a geometric step schedule. In single-random
/// offset mode a fresh patch offset is drawn every iteration.
pub fn fit_residual(clean: &Volume, sigma: f64, cfg: &FitConfig) -> Result<FitResult> {
    cfg.validate()?;
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(DataError::InvalidField {
            field: "sigma".into(),
            reason: format!("{sigma} must be >= 0"),
        });
    }
    let ys = realizations(clean, sigma, cfg.realizations, cfg.seed);
    let mut r = match cfg.init {
        Init::Zeros => Volume::constant(clean.dims(), 0.0)?,
        Init::FirstRealization => ys[0].clone(),
    };
    let mut grad = vec![0.0f64; clean.len()];
    let mut trace: Vec<f64> = Vec::with_capacity(cfg.iterations);
    let mut step = cfg.step0;
    for t in 0..cfg.iterations {
        let loss = match cfg.loss {
            LossKind::L1 => l1_loss_grad(&r, &ys, &mut grad),
            LossKind::Np => {
                let iter_cfg = match cfg.np.offset_mode {
                    OffsetMode::SingleRandom => NpLossConfig {
                        seed: cfg.np.seed.wrapping_add(t as u64),
                        ..cfg.np
                    },
                    OffsetMode::FullExpectation => cfg.np,
                };
                np_loss_grad(&r, &ys, &iter_cfg, &mut grad)?
            }
        };
        if !loss.is_finite() || (t > 0 && loss > 10.0 * trace[0].max(f64::MIN_POSITIVE)) {
            return Err(DataError::Core(Error::Divergence {
                initial: if t > 0 { trace[0] } else { 0.0 },
                current: loss,
            }));
        }
        trace.push(loss);
        let voxels: Vec<f64> = r
            .voxels()
            .iter()
            .zip(grad.iter())
            .map(|(&v, &g)| v - step * g)
            .collect();
        r = Volume::new(clean.dims(), voxels)?;
        step *= cfg.decay;
    }
    Ok(FitResult { residual: r, trace })
}

/// Population std of a volume restricted to mask-false voxels.
pub fn background_std(v: &Volume, mask: &CeMask) -> f64 {
    let vals: Vec<f64> = v
        .voxels()
        .iter()
        .zip(mask.mask())
        .filter(|(_, &m)| !m)
        .map(|(&x, _)| x)
        .collect();
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    (vals.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt()
}

/// A CE mask planted from the clean residual itself: mask-true where the
/// clean enhancement exceeds the threshold, against a unit native scan.
pub fn planted_mask(clean: &Volume, threshold: f64) -> Result<CeMask> {
    let na = Volume::constant(clean.dims(), 1.0)?;
    let sd = na.zip(clean, |a, b| a + b)?;
    Ok(metrics::ce_mask(&na, &sd, threshold)?)
}

/// One row of the loss-comparison report.
#[derive(Debug, Clone, Serialize)]
pub struct ComparisonRow {
    pub loss: String,
    pub sigma: f64,
    /// Background std of the fitted residual itself.
    pub fitted_sigma: f64,
    pub mae_sigma: f64,
    pub mae_ce: f64,
    pub psnr_db: f64,
    pub ssim: f64,
    pub iterations: usize,
    pub seed: u64,
}

/// Fits `clean` under each config and evaluates every fit against one
/// held-out realization on a planted CE mask.
pub fn compare_losses(
    clean: &Volume,
    sigma: f64,
    cfgs: &[FitConfig],
    threshold: f64,
) -> Result<Vec<ComparisonRow>> {
    if cfgs.len() < 2 {
        return Err(DataError::InvalidField {
            field: "configs".into(),
            reason: format!("need >= 2 fit configs, got {}", cfgs.len()),
        });
    }
    let mask = planted_mask(clean, threshold)?;
    let zero = Volume::constant(clean.dims(), 0.0)?;
    let mut rows = Vec::with_capacity(cfgs.len());
    for cfg in cfgs {
        let fitted = fit_residual(clean, sigma, cfg)?;
        let held = held_out_realization(clean, sigma, cfg.seed);
        rows.push(ComparisonRow {
            loss: cfg.loss.name().to_string(),
            sigma,
            fitted_sigma: background_std(&fitted.residual, &mask),
            mae_sigma: metrics::mae_sigma(&fitted.residual, &held, &zero, &mask)?,
            mae_ce: metrics::mae_ce(&fitted.residual, &held, &mask)?,
            psnr_db: metrics::psnr(&fitted.residual, &held, 1.0)?,
            ssim: metrics::ssim(&fitted.residual, &held)?,
            iterations: cfg.iterations,
            seed: cfg.seed,
        });
    }
    Ok(rows)
}
