//! Parallel drivers for the patch-wise loss.
//!
//! Per-patch OT solves are independent; they are mapped over a rayon pool
//! and reduced in fixed lexicographic patch order, so totals are
//! bit-identical to the serial implementation for every thread count.

use rayon::prelude::*;

use otpatch_core::nploss::{self, NpLossConfig, OffsetMode};
use otpatch_core::patch::make_patch_grid;
use otpatch_core::volume::Volume;
use otpatch_core::{rng, Error};

type Result<T> = std::result::Result<T, Error>;

fn loss_at_offset(
    y_hat: &Volume,
    y: &Volume,
    cfg: &NpLossConfig,
    offset: (usize, usize, usize),
) -> Result<(f64, Vec<f64>)> {
    let grid = make_patch_grid(y_hat.dims(), cfg.n, offset)?;
    let per: Vec<f64> = (0..grid.num_patches())
        .into_par_iter()
        .map(|i| nploss::patch_loss(y_hat, y, &grid, i, cfg))
        .collect::<Result<_>>()?;
    // fixed-order reduction
    let total = per.iter().sum();
    Ok((total, per))
}

/// Parallel `np_loss`; identical results to the serial core version.
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
            let offsets = nploss::all_offsets(cfg.n);
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
            let per =
                grid0.origins().iter().copied().zip(acc.into_iter().map(|a| a / k)).collect();
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
    let results: Vec<(f64, Vec<f64>)> = (0..grid.num_patches())
        .into_par_iter()
        .map(|i| nploss::patch_loss_grad(y_hat, y, &grid, i, cfg))
        .collect::<Result<_>>()?;
    let mut total = 0.0;
    for (i, (w, g)) in results.into_iter().enumerate() {
        total += w;
        for (idx, gv) in grid.patch_indices(i).into_iter().zip(g) {
            buf[idx] += scale * gv;
        }
    }
    Ok(total)
}

/// Parallel `np_loss_grad_with_value`; identical results to the serial
/// core version.
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
            let offsets = nploss::all_offsets(cfg.n);
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

/// Builds a rayon pool with the requested thread count (0 = available
/// parallelism) and runs `f` inside it.
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if threads > 0 {
        builder = builder.num_threads(threads);
    }
    let pool = builder.build().expect("thread pool");
    pool.install(f)
}
