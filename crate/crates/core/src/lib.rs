//! Patch-wise optimal-transport machinery for 3-D volumes.
//!
//! The crate provides the building blocks for a noise-preserving content
//! loss between residual volumes: dense small optimal-transport solvers
//! (exact sorted matching, Sinkhorn, inexact proximal point), a periodic
//! patch tiling, the patch-wise loss and its subgradient, contrast
//! enhancement metrics (CE mask, MAE_CE, MAE_sigma, PSNR, SSIM) and a
//! synthetic phantom generator with known ground truth.
//!
//! Everything here is pure and allocation-only (`no_std` + `alloc`); file
//! formats, parallel drivers and the CLI live in the companion `otpatch`
//! crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod error;
pub mod math;
pub mod metrics;
pub mod nploss;
pub mod ot;
pub mod patch;
pub mod phantom;
pub mod rng;
pub mod volume;

pub use error::Error;
pub use metrics::{ce_mask, mae_ce, mae_sigma, psnr, ssim, CeMask, MetricsReport};
pub use nploss::{multiscale_np_loss, np_loss, np_loss_grad, NpLossConfig, OffsetMode};
pub use ot::{
    build_cost, exact_ot_1d, gaussian_w2_closed_form, ipot, ot_gradient, sinkhorn, solve,
    CostMatrix, SolverConfig, SolverKind, TransportPlan,
};
pub use patch::{make_patch_grid, PatchGrid};
pub use phantom::{generate, DoseResponse, Lesion, MetaData, NoiseModel, PhantomCase, PhantomSpec};
pub use volume::Volume;

/// Result alias used throughout the crate.
pub type Result<T> = core::result::Result<T, Error>;
