//! The noise-preserving content loss over residual volumes.
//!
//! The loss tiles both volumes into non-overlapping n³ patches at a shared
//! periodic offset and sums the Wasserstein distance between the empirical
//! value distributions of each patch pair. Offsets are either drawn once
//! from a seeded RNG or averaged exactly over the full offset set
//! `{0, ..., ceil(n/2)}³`.

use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;

use crate::ot::{self, SolverConfig};
use crate::patch::{self, make_patch_grid, PatchGrid};
use crate::rng;
use crate::volume::Volume;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OffsetMode {
    /// One offset drawn uniformly from the offset set.
    SingleRandom,
    /// Exact mean over all (ceil(n/2)+1)³ offsets; seed-independent.
    FullExpectation,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NpLossConfig {
    pub n: usize,
    pub solver: SolverConfig,
    pub p: u32,
    pub offset_mode: OffsetMode,
    pub seed: u64,
}

impl Default for NpLossConfig {
    fn default() -> Self {
        NpLossConfig {
            n: 4,
            solver: SolverConfig::default(),
            p: 1,
            offset_mode: OffsetMode::SingleRandom,
            seed: 0,
        }
    }
}

impl NpLossConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidConfig(alloc::format!("n={} must be >= 2", self.n)));
        }
        if self.p != 1 && self.p != 2 {
            return Err(Error::InvalidConfig(alloc::format!("p={} must be 1 or 2", self.p)));
        }
        self.solver.validate()
    }

    /// Draws an offset from the configured seed.
    pub fn draw_offset(&self, rng: &mut ChaCha8Rng) -> (usize, usize, usize) {
        let mo = patch::max_offset(self.n);
        let ox = rng::uniform_usize(rng, mo);
        let oy = rng::uniform_usize(rng, mo);
        let oz = rng::uniform_usize(rng, mo);
        (ox, oy, oz)
    }
}

/// All offsets of the offset set in lexicographic order.
pub fn all_offsets(n: usize) -> Vec<(usize, usize, usize)> {
    let mo = patch::max_offset(n);
    let mut out = Vec::with_capacity((mo + 1).pow(3));
    for ox in 0..=mo {
        for oy in 0..=mo {
            for oz in 0..=mo {
                out.push((ox, oy, oz));
            }
        }
    }
    out
}

/// Wasserstein value of one patch pair.
pub fn patch_loss(
    y_hat: &Volume,
    y: &Volume,
    grid: &PatchGrid,
    i: usize,
    cfg: &NpLossConfig,
) -> Result<f64> {
    let ph = grid.gather(y_hat, i)?;
    let px = grid.gather(y, i)?;
    let (w, _) = ot::solve(&ph, &px, cfg.p, &cfg.solver)?;
    Ok(w)
}

/// Wasserstein value and envelope gradient (w.r.t. the `y_hat` patch) of
/// one patch pair.
pub fn patch_loss_grad(
    y_hat: &Volume,
    y: &Volume,
    grid: &PatchGrid,
    i: usize,
    cfg: &NpLossConfig,
) -> Result<(f64, Vec<f64>)> {
    let ph = grid.gather(y_hat, i)?;
    let px = grid.gather(y, i)?;
    let (w, plan) = ot::solve(&ph, &px, cfg.p, &cfg.solver)?;
    let grad = ot::ot_gradient(&ph, &px, &plan, cfg.p)?;
    Ok((w, grad))
}

fn loss_at_offset(
    y_hat: &Volume,
    y: &Volume,
    cfg: &NpLossConfig,
    offset: (usize, usize, usize),
) -> Result<(f64, Vec<f64>)> {
    let grid = make_patch_grid(y_hat.dims(), cfg.n, offset)?;
    let mut per_patch = Vec::with_capacity(grid.num_patches());
    let mut total = 0.0;
    for i in 0..grid.num_patches() {
        let w = patch_loss(y_hat, y, &grid, i, cfg)?;
        total += w;
        per_patch.push(w);
    }
    Ok((total, per_patch))
}

/// Noise-preserving loss: the sum over patches of the patch-pair
/// Wasserstein distance, at a drawn offset or averaged over all offsets.
///
/// Returns the loss and the per-patch values paired with their origins in
/// lexicographic order (offset-averaged in `FullExpectation` mode).
#[allow(clippy::type_complexity)]
pub fn np_loss(
    y_hat: &Volume,
    y: &Volume,
    cfg: &NpLossConfig,
) -> Result<(f64, Vec<((usize, usize, usize), f64)>)> {
    cfg.validate()?;
    y_hat.same_dims(y)?;
    match cfg.offset_mode {
        OffsetMode::SingleRandom => {
            let mut r = rng::seeded(cfg.seed);
            let offset = cfg.draw_offset(&mut r);
            let grid = make_patch_grid(y_hat.dims(), cfg.n, offset)?;
            let (total, per) = loss_at_offset(y_hat, y, cfg, offset)?;
            Ok((total, grid.origins().iter().copied().zip(per).collect()))
        }
        OffsetMode::FullExpectation => {
            let offsets = all_offsets(cfg.n);
            let grid0 = make_patch_grid(y_hat.dims(), cfg.n, (0, 0, 0))?;
            let mut acc = vec![0.0f64; grid0.num_patches()];
            let mut total = 0.0;
            for &o in &offsets {
                let (t, per) = loss_at_offset(y_hat, y, cfg, o)?;
                total += t;
                for (a, w) in acc.iter_mut().zip(per) {
                    *a += w;
                }
            }
            let k = offsets.len() as f64;
            total /= k;
            let per = grid0
                .origins()
                .iter()
                .copied()
                .zip(acc.into_iter().map(|a| a / k))
                .collect();
            Ok((total, per))
        }
    }
}

fn grad_at_offset(
    y_hat: &Volume,
    y: &Volume,
    cfg: &NpLossConfig,
    offset: (usize, usize, usize),
    buf: &mut [f64],
    scale: f64,
) -> Result<f64> {
    let grid = make_patch_grid(y_hat.dims(), cfg.n, offset)?;
    let mut total = 0.0;
    for i in 0..grid.num_patches() {
        let (w, g) = patch_loss_grad(y_hat, y, &grid, i, cfg)?;
        total += w;
        let indices = grid.patch_indices(i);
        for (idx, gv) in indices.into_iter().zip(g) {
            buf[idx] += scale * gv;
        }
    }
    Ok(total)
}

/// Subgradient of `np_loss` w.r.t. `y_hat`, as a volume.
///
/// Uses the same offset draw as `np_loss` for the same seed, so the pair
/// is consistent for optimization.
pub fn np_loss_grad(y_hat: &Volume, y: &Volume, cfg: &NpLossConfig) -> Result<Volume> {
    Ok(np_loss_grad_with_value(y_hat, y, cfg)?.1)
}

/// Gradient plus the loss value it corresponds to (one solver pass).
pub fn np_loss_grad_with_value(
    y_hat: &Volume,
    y: &Volume,
    cfg: &NpLossConfig,
) -> Result<(f64, Volume)> {
    cfg.validate()?;
    y_hat.same_dims(y)?;
    let mut buf = vec![0.0f64; y_hat.len()];
    let loss = match cfg.offset_mode {
        OffsetMode::SingleRandom => {
            let mut r = rng::seeded(cfg.seed);
            let offset = cfg.draw_offset(&mut r);
            grad_at_offset(y_hat, y, cfg, offset, &mut buf, 1.0)?
        }
        OffsetMode::FullExpectation => {
            let offsets = all_offsets(cfg.n);
            let k = offsets.len() as f64;
            let mut total = 0.0;
            for &o in &offsets {
                total += grad_at_offset(y_hat, y, cfg, o, &mut buf, 1.0 / k)?;
            }
            total / k
        }
    };
    Ok((loss, Volume::new(y_hat.dims(), buf)?))
}

/// Average-pools each dimension by 2 with periodic wrap on odd dims.
pub fn pool2(v: &Volume) -> Result<Volume> {
    let (nx, ny, nz) = v.dims();
    let (mx, my, mz) = (nx.div_ceil(2), ny.div_ceil(2), nz.div_ceil(2));
    let mut out = Vec::with_capacity(mx * my * mz);
    for z in 0..mz {
        for y in 0..my {
            for x in 0..mx {
                let mut s = 0.0;
                for (dz, dy, dx) in [
                    (0, 0, 0),
                    (0, 0, 1),
                    (0, 1, 0),
                    (0, 1, 1),
                    (1, 0, 0),
                    (1, 0, 1),
                    (1, 1, 0),
                    (1, 1, 1),
                ] {
                    s += v.get((2 * x + dx) % nx, (2 * y + dy) % ny, (2 * z + dz) % nz);
                }
                s /= 8.0;
                out.push(s);
            }
        }
    }
    // voxel order is x fastest; the triple loop above emits exactly that
    Volume::new((mx, my, mz), out)
}

/// Sum of `np_loss` over a 2x average-pooling pyramid with `levels` levels.
pub fn multiscale_np_loss(
    y_hat: &Volume,
    y: &Volume,
    levels: usize,
    cfg: &NpLossConfig,
) -> Result<f64> {
    if levels < 1 {
        return Err(Error::InvalidConfig("levels must be >= 1".into()));
    }
    let mut a = y_hat.clone();
    let mut b = y.clone();
    let mut total = 0.0;
    for level in 0..levels {
        // separate offset stream per level
        let level_cfg = NpLossConfig { seed: cfg.seed.wrapping_add(level as u64), ..*cfg };
        let (l, _) = np_loss(&a, &b, &level_cfg)?;
        total += l;
        if level + 1 < levels {
            a = pool2(&a)?;
            b = pool2(&b)?;
        }
    }
    Ok(total)
}
