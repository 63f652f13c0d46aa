//! Command-line surface.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error. Every output embeds
//! a provenance block (tool version, command line, effective config, seed,
//! threads). The global seed falls back to the OTPATCH_SEED environment
//! variable, then 0.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use otpatch_core::nploss::{NpLossConfig, OffsetMode};
use otpatch_core::ot::{self, EpsilonRule, SolverConfig};
use otpatch_core::phantom::PhantomSpec;
use otpatch_core::volume::Volume;
use otpatch_core::{metrics, multiscale_np_loss};

use crate::error::{DataError, Result};
use crate::fit::{self, FitConfig, Init, LossKind};
use crate::parallel;
use crate::report::{self, float_value, Provenance};
use crate::suite;
use crate::volfile;

#[derive(Debug, Parser)]
#[command(name = "otpatch", version, about = "Patch-wise optimal-transport loss toolkit")]
pub struct Cli {
    /// Worker threads; 0 means available parallelism. --threads 1 is
    /// bit-reproducible (results are thread-count invariant regardless).
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    /// Seed for anything random; falls back to $OTPATCH_SEED, then 0.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SolverArg {
    Exact,
    Sinkhorn,
    Ipot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OffsetModeArg {
    SingleRandom,
    FullExpectation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LossArg {
    L1,
    Np,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InitArg {
    Zeros,
    FirstRealization,
}

#[derive(Debug, Clone, Args)]
pub struct SolverFlags {
    #[arg(long, value_enum)]
    pub solver: Option<SolverArg>,
    /// Outer iterations (proximal steps for ipot, sweeps for sinkhorn).
    #[arg(long)]
    pub outer: Option<usize>,
    /// Inner scaling sweeps per ipot step.
    #[arg(long)]
    pub inner: Option<usize>,
    /// Explicit entropic epsilon; default is max(C)/10.
    #[arg(long)]
    pub epsilon: Option<f64>,
}

impl SolverFlags {
    fn build(&self, default: SolverArg) -> SolverConfig {
        let rule = match self.epsilon {
            Some(e) => EpsilonRule::Explicit(e),
            None => EpsilonRule::MaxCostOverTen,
        };
        match self.solver.unwrap_or(default) {
            SolverArg::Exact => SolverConfig::exact(),
            SolverArg::Sinkhorn => SolverConfig {
                epsilon_rule: rule,
                ..SolverConfig::sinkhorn(rule, self.outer.unwrap_or(1000))
            },
            SolverArg::Ipot => SolverConfig {
                epsilon_rule: rule,
                ..SolverConfig::ipot(self.outer.unwrap_or(100), self.inner.unwrap_or(1))
            },
        }
    }

    fn describe(&self, default: SolverArg) -> &'static str {
        match self.solver.unwrap_or(default) {
            SolverArg::Exact => "exact",
            SolverArg::Sinkhorn => "sinkhorn",
            SolverArg::Ipot => "ipot",
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one transport instance between the voxel sets of two volumes.
    Ot {
        a: PathBuf,
        b: PathBuf,
        #[command(flatten)]
        solver: SolverFlags,
        /// Cost exponent (1 or 2).
        #[arg(long, default_value_t = 1)]
        p: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Patch-wise transport loss between two residual volumes.
    Nploss {
        a: PathBuf,
        b: PathBuf,
        /// Patch edge length.
        #[arg(long, default_value_t = 4)]
        n: usize,
        #[command(flatten)]
        solver: SolverFlags,
        #[arg(long, default_value_t = 1)]
        p: u32,
        #[arg(long, value_enum, default_value_t = OffsetModeArg::SingleRandom)]
        offset_mode: OffsetModeArg,
        /// Pooling pyramid levels; 1 means single scale.
        #[arg(long, default_value_t = 1)]
        levels: usize,
        /// Include per-patch values in the output.
        #[arg(long)]
        per_patch: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Contrast-enhancement mask from a native/standard-dose pair.
    Mask {
        na: PathBuf,
        sd: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        threshold: f64,
        /// Output mask volume (1.0 inside the mask).
        #[arg(long)]
        out: PathBuf,
    },
    /// Full metric bundle for a synthesized volume against a reference.
    Metrics {
        xhat: PathBuf,
        xref: PathBuf,
        #[arg(long)]
        na: PathBuf,
        #[arg(long)]
        sd: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        threshold: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a phantom dataset with a JSON manifest.
    Phantom {
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long)]
        out: PathBuf,
        /// Volume edge length (cubic volumes).
        #[arg(long, default_value_t = 32)]
        size: usize,
        /// Scanner field strength in tesla (1.5 or 3.0).
        #[arg(long, default_value_t = 3.0)]
        field: f64,
        /// Noise std; defaults to the per-field value.
        #[arg(long)]
        sigma: Option<f64>,
        /// Use magnitude-Rician instead of additive Gaussian noise.
        #[arg(long)]
        rician: bool,
    },
    /// Fit a free residual to noisy realizations under one loss.
    Fit {
        #[arg(long, value_enum, default_value_t = LossArg::Np)]
        loss: LossArg,
        #[arg(long, default_value_t = 0.05)]
        sigma: f64,
        #[arg(long, default_value_t = 2000)]
        iterations: usize,
        #[arg(long, default_value_t = 32)]
        realizations: usize,
        #[arg(long)]
        step0: Option<f64>,
        #[arg(long, default_value_t = 0.99)]
        decay: f64,
        #[arg(long, value_enum, default_value_t = InitArg::Zeros)]
        init: InitArg,
        /// Dose fraction of the built-in phantom's enhancement field.
        #[arg(long, default_value_t = 0.33)]
        dose: f64,
        #[arg(long, value_enum, default_value_t = OffsetModeArg::SingleRandom)]
        offset_mode: OffsetModeArg,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the fitted residual as a volume.
        #[arg(long)]
        out_volume: Option<PathBuf>,
    },
    /// Fit under both losses and emit a comparison report.
    Compare {
        #[arg(long, default_value_t = 0.05)]
        sigma: f64,
        #[arg(long, default_value_t = 2000)]
        iterations: usize,
        #[arg(long, default_value_t = 32)]
        realizations: usize,
        #[arg(long, default_value_t = 0.1)]
        threshold: f64,
        #[arg(long, default_value_t = 0.33)]
        dose: f64,
        #[arg(long)]
        out_json: Option<PathBuf>,
        #[arg(long)]
        out_csv: Option<PathBuf>,
    },
}

fn resolve_seed(flag: Option<u64>) -> Result<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var("OTPATCH_SEED") {
        Ok(v) => v.parse().map_err(|_| DataError::InvalidField {
            field: "OTPATCH_SEED".into(),
            reason: format!("{v:?} is not a u64"),
        }),
        Err(_) => Ok(0),
    }
}

fn emit(out: Option<&PathBuf>, value: &Value) -> Result<()> {
    match out {
        Some(path) => report::write_json(path, value),
        None => {
            println!("{}", serde_json::to_string_pretty(value).expect("serializable report"));
            Ok(())
        }
    }
}

/// The clean residual the fit demo targets: the built-in phantom's
/// noise-free enhancement field at the given dose.
fn demo_clean_residual(dose: f64) -> Result<Volume> {
    let spec = PhantomSpec { dose, ..Default::default() };
    spec.validate()?;
    let with = spec.clean_signal(Some(dose))?;
    let without = spec.clean_signal(None)?;
    Ok(with.zip(&without, |a, b| a - b)?)
}

fn offset_mode(arg: OffsetModeArg) -> OffsetMode {
    match arg {
        OffsetModeArg::SingleRandom => OffsetMode::SingleRandom,
        OffsetModeArg::FullExpectation => OffsetMode::FullExpectation,
    }
}

fn fit_config(
    loss: LossArg,
    iterations: usize,
    realizations: usize,
    step0: Option<f64>,
    decay: f64,
    init: InitArg,
    mode: OffsetModeArg,
    seed: u64,
) -> FitConfig {
    let kind = match loss {
        LossArg::L1 => LossKind::L1,
        LossArg::Np => LossKind::Np,
    };
    let mut cfg = FitConfig::for_loss(kind);
    cfg.iterations = iterations;
    cfg.realizations = realizations;
    if let Some(s) = step0 {
        cfg.step0 = s;
    }
    cfg.decay = decay;
    cfg.init = match init {
        InitArg::Zeros => Init::Zeros,
        InitArg::FirstRealization => Init::FirstRealization,
    };
    cfg.np.offset_mode = offset_mode(mode);
    cfg.seed = seed;
    cfg.np.seed = seed;
    cfg
}

fn dispatch(cli: &Cli, command_line: &str) -> Result<()> {
    let seed = resolve_seed(cli.seed)?;
    let threads = if cli.threads == 0 {
        std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
    } else {
        cli.threads
    };
    let prov = |config: Value| Provenance::new(command_line.to_string(), seed, threads, config);

    match &cli.command {
        Command::Ot { a, b, solver, p, out } => {
            let va = volfile::load_volume(a)?;
            let vb = volfile::load_volume(b)?;
            let cfg = solver.build(SolverArg::Exact);
            let (w, plan) = ot::solve(va.voxels(), vb.voxels(), *p, &cfg)?;
            let config = json!({
                "solver": solver.describe(SolverArg::Exact),
                "outer": cfg.outer_iters,
                "inner": cfg.inner_iters,
                "p": p,
                "a": a,
                "b": b,
            });
            let value = json!({
                "w": w,
                "m": plan.m(),
                "marginal_error": plan.marginal_error(),
                "total_mass": plan.total_mass(),
                "provenance": prov(config),
            });
            emit(out.as_ref(), &value)
        }
        Command::Nploss { a, b, n, solver, p, offset_mode: om, levels, per_patch, out } => {
            let va = volfile::load_volume(a)?;
            let vb = volfile::load_volume(b)?;
            let cfg = NpLossConfig {
                n: *n,
                solver: solver.build(SolverArg::Ipot),
                p: *p,
                offset_mode: offset_mode(*om),
                seed,
            };
            let config = json!({
                "n": n,
                "p": p,
                "solver": solver.describe(SolverArg::Ipot),
                "offset_mode": match om { OffsetModeArg::SingleRandom => "single-random", OffsetModeArg::FullExpectation => "full-expectation" },
                "levels": levels,
                "a": a,
                "b": b,
            });
            let value = if *levels == 1 {
                let (loss, per) = parallel::np_loss(&va, &vb, &cfg)?;
                let mut v = json!({
                    "loss": loss,
                    "patch_count": per.len(),
                    "provenance": prov(config),
                });
                if *per_patch {
                    v["per_patch"] = Value::Array(
                        per.iter()
                            .map(|((x, y, z), w)| json!({"origin": [x, y, z], "w": w}))
                            .collect(),
                    );
                }
                v
            } else {
                let loss = multiscale_np_loss(&va, &vb, *levels, &cfg)?;
                json!({ "loss": loss, "levels": levels, "provenance": prov(config) })
            };
            emit(out.as_ref(), &value)
        }
        Command::Mask { na, sd, threshold, out } => {
            let vna = volfile::load_volume(na)?;
            let vsd = volfile::load_volume(sd)?;
            let mask = metrics::ce_mask(&vna, &vsd, *threshold)?;
            let config = json!({"na": na, "sd": sd, "threshold": threshold});
            let p = prov(config);
            volfile::save_volume(
                out,
                &mask.to_volume(),
                Some(serde_json::to_value(&p).expect("serializable provenance")),
            )?;
            let value = json!({
                "ce_voxel_count": mask.count(),
                "total_voxels": mask.to_volume().len(),
                "threshold": mask.threshold_used(),
                "q95": mask.q95_used(),
                "out": out,
                "provenance": p,
            });
            println!("{}", serde_json::to_string_pretty(&value).expect("serializable report"));
            Ok(())
        }
        Command::Metrics { xhat, xref, na, sd, threshold, out } => {
            let vh = volfile::load_volume(xhat)?;
            let vr = volfile::load_volume(xref)?;
            let vna = volfile::load_volume(na)?;
            let vsd = volfile::load_volume(sd)?;
            let rep = metrics::evaluate(&vh, &vr, &vna, &vsd, *threshold)?;
            let config =
                json!({"xhat": xhat, "xref": xref, "na": na, "sd": sd, "threshold": threshold});
            let value = json!({
                "psnr_db": float_value(rep.psnr_db),
                "ssim": rep.ssim,
                "mae_ce": rep.mae_ce,
                "mae_sigma": rep.mae_sigma,
                "ce_voxel_count": rep.ce_voxel_count,
                "provenance": prov(config),
            });
            emit(out.as_ref(), &value)
        }
        Command::Phantom { count, out, size, field, sigma, rician } => {
            let c = *size as f64 / 2.0;
            let base = PhantomSpec {
                dims: (*size, *size, *size),
                // one centered lesion scaled with the volume
                lesions: vec![otpatch_core::phantom::Lesion {
                    center: (c, c, c),
                    radius: *size as f64 / 6.4,
                    enhancement: 0.6,
                }],
                field_strength: *field,
                sigma: *sigma,
                noise: if *rician {
                    otpatch_core::phantom::NoiseModel::Rician
                } else {
                    otpatch_core::phantom::NoiseModel::Gaussian
                },
                seed,
                ..Default::default()
            };
            let config = json!({
                "count": count,
                "size": size,
                "field": field,
                "sigma": sigma,
                "rician": rician,
                "out": out,
            });
            let entries = suite::generate_suite(*count, &base, out, &prov(config))?;
            println!("wrote {} cases to {}", entries.len(), out.display());
            Ok(())
        }
        Command::Fit {
            loss,
            sigma,
            iterations,
            realizations,
            step0,
            decay,
            init,
            dose,
            offset_mode: om,
            out,
            out_volume,
        } => {
            let clean = demo_clean_residual(*dose)?;
            let cfg =
                fit_config(*loss, *iterations, *realizations, *step0, *decay, *init, *om, seed);
            let result = fit::fit_residual(&clean, *sigma, &cfg)?;
            let mask = fit::planted_mask(&clean, 0.1)?;
            let config = json!({
                "loss": cfg.loss.name(),
                "sigma": sigma,
                "iterations": iterations,
                "realizations": realizations,
                "step0": cfg.step0,
                "decay": decay,
                "dose": dose,
            });
            let p = prov(config);
            if let Some(path) = out_volume {
                volfile::save_volume(
                    path,
                    &result.residual,
                    Some(serde_json::to_value(&p).expect("serializable provenance")),
                )?;
            }
            let value = json!({
                "loss": cfg.loss.name(),
                "sigma": sigma,
                "initial_loss": result.trace.first(),
                "final_loss": result.trace.last(),
                "fitted_sigma": fit::background_std(&result.residual, &mask),
                "iterations": iterations,
                "out_volume": out_volume,
                "provenance": p,
            });
            emit(out.as_ref(), &value)
        }
        Command::Compare {
            sigma,
            iterations,
            realizations,
            threshold,
            dose,
            out_json,
            out_csv,
        } => {
            let clean = demo_clean_residual(*dose)?;
            let mk = |loss| {
                fit_config(
                    loss,
                    *iterations,
                    *realizations,
                    None,
                    0.99,
                    InitArg::Zeros,
                    OffsetModeArg::SingleRandom,
                    seed,
                )
            };
            let cfgs = [mk(LossArg::L1), mk(LossArg::Np)];
            let rows = fit::compare_losses(&clean, *sigma, &cfgs, *threshold)?;
            let config = json!({
                "sigma": sigma,
                "iterations": iterations,
                "realizations": realizations,
                "threshold": threshold,
                "dose": dose,
            });
            let rows_json: Vec<Value> = rows
                .iter()
                .map(|r| {
                    json!({
                        "loss": r.loss,
                        "sigma": r.sigma,
                        "fitted_sigma": r.fitted_sigma,
                        "mae_sigma": r.mae_sigma,
                        "mae_ce": r.mae_ce,
                        "psnr_db": float_value(r.psnr_db),
                        "ssim": r.ssim,
                        "iterations": r.iterations,
                        "seed": r.seed,
                    })
                })
                .collect();
            let value = json!({ "rows": rows_json, "provenance": prov(config) });
            let csv = report::comparison_csv(&rows);
            if let Some(path) = out_json {
                report::write_json(path, &value)?;
            }
            match out_csv {
                Some(path) => report::write_text(path, &csv)?,
                None => print!("{csv}"),
            }
            Ok(())
        }
    }
}

/// Parses and runs; returns the process exit code.
pub fn run(argv: Vec<String>) -> i32 {
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    let command_line = argv.join(" ");
    let threads = cli.threads;
    match parallel::with_threads(threads, || dispatch(&cli, &command_line)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}
