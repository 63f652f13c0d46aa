//! Report structures and serialization helpers.
//!
//! Every artifact carries a provenance block with the tool version, the
//! exact command line, the effective configuration, the seed and the
//! thread count, so any output can be regenerated from itself.

use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{DataError, Result};
use crate::fit::ComparisonRow;

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub seed: u64,
    pub threads: usize,
    pub config: Value,
}

impl Provenance {
    pub fn new(command: String, seed: u64, threads: usize, config: Value) -> Self {
        Provenance {
            tool: "otpatch",
            version: env!("CARGO_PKG_VERSION"),
            command,
            seed,
            threads,
            config,
        }
    }
}

/// JSON has no +inf; infinite values serialize as the string "inf".
pub fn float_value(v: f64) -> Value {
    if v.is_infinite() {
        json!(if v > 0.0 { "inf" } else { "-inf" })
    } else {
        json!(v)
    }
}

/// Atomically writes pretty-printed JSON (temp file, rename on success).
pub fn write_json(path: &Path, value: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| DataError::header(path, e.to_string()))?;
    text.push('\n');
    write_text(path, &text)
}

/// Atomically writes text (temp file, rename on success).
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let tmp = path.with_extension("out.tmp");
    std::fs::write(&tmp, text).map_err(|e| DataError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| DataError::io(path, e))?;
    Ok(())
}

/// CSV for the loss-comparison rows; one row per fitted loss.
pub fn comparison_csv(rows: &[ComparisonRow]) -> String {
    let mut out =
        String::from("loss,sigma,fitted_sigma,mae_sigma,mae_ce,psnr_db,ssim,iterations,seed\n");
    for r in rows {
        let psnr = if r.psnr_db.is_infinite() { "inf".to_string() } else { r.psnr_db.to_string() };
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.loss,
            r.sigma,
            r.fitted_sigma,
            r.mae_sigma,
            r.mae_ce,
            psnr,
            r.ssim,
            r.iterations,
            r.seed
        ));
    }
    out
}
