//! Dataset generation: many phantom cases plus a JSON manifest.

use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use otpatch_core::phantom::{self, PhantomSpec, DOSE_SET};

use crate::error::{DataError, Result};
use crate::report::{self, Provenance};
use crate::volfile;

#[derive(Debug, Clone, Serialize)]
pub struct CaseEntry {
    pub case_id: String,
    pub dose: f64,
    pub field_strength: f64,
    pub sigma: f64,
    pub seed: u64,
    pub x_na: PathBuf,
    pub x_sd: PathBuf,
    pub x_ld: PathBuf,
    pub y_ld: PathBuf,
}

/// Writes `count` cases into `out_dir` (doses cycling through the acquired
/// dose set, seeds `base.seed + i`) and a manifest.json listing them.
pub fn generate_suite(
    count: usize,
    base: &PhantomSpec,
    out_dir: &Path,
    provenance: &Provenance,
) -> Result<Vec<CaseEntry>> {
    if count == 0 {
        return Err(DataError::InvalidField {
            field: "count".into(),
            reason: "must be >= 1".into(),
        });
    }
    std::fs::create_dir_all(out_dir).map_err(|e| DataError::io(out_dir, e))?;
    let mut entries = Vec::with_capacity(count);
    for i in 0..count {
        let spec = PhantomSpec {
            dose: DOSE_SET[i % DOSE_SET.len()],
            seed: base.seed.wrapping_add(i as u64),
            ..base.clone()
        };
        let case = phantom::generate(&spec)?;
        let case_id = format!("case_{i:03}");
        let path = |part: &str| out_dir.join(format!("{case_id}_{part}.vol"));
        let entry = CaseEntry {
            case_id: case_id.clone(),
            dose: spec.dose,
            field_strength: spec.field_strength,
            sigma: case.sigma,
            seed: spec.seed,
            x_na: path("na"),
            x_sd: path("sd"),
            x_ld: path("ld"),
            y_ld: path("residual"),
        };
        volfile::save_volume(&entry.x_na, &case.x_na, None)?;
        volfile::save_volume(&entry.x_sd, &case.x_sd, None)?;
        volfile::save_volume(&entry.x_ld, &case.x_ld, None)?;
        volfile::save_volume(&entry.y_ld, &case.y_ld, None)?;
        entries.push(entry);
    }
    let manifest = json!({
        "cases": entries,
        "provenance": provenance,
    });
    report::write_json(&out_dir.join("manifest.json"), &manifest)?;
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn provenance() -> Provenance {
        Provenance::new("test".into(), 0, 1, json!({}))
    }

    #[test]
    fn doses_cycle_and_manifest_exists() {
        let dir = tempfile::tempdir().unwrap();
        let base = PhantomSpec { dims: (8, 8, 8), lesions: vec![], ..Default::default() };
        let entries = generate_suite(3, &base, dir.path(), &provenance()).unwrap();
        assert_eq!(
            entries.iter().map(|e| e.dose).collect::<Vec<_>>(),
            vec![0.1, 0.2, 0.33]
        );
        assert!(dir.path().join("manifest.json").exists());
        for e in &entries {
            for p in [&e.x_na, &e.x_sd, &e.x_ld, &e.y_ld] {
                assert!(p.exists(), "{p:?}");
            }
        }
    }

    #[test]
    fn zero_count_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let base = PhantomSpec::default();
        assert!(matches!(
            generate_suite(0, &base, dir.path(), &provenance()),
            Err(DataError::InvalidField { .. })
        ));
    }

    #[test]
    fn regeneration_is_bit_identical() {
        let dir1 = tempfile::tempdir().unwrap();
        let dir2 = tempfile::tempdir().unwrap();
        let base = PhantomSpec { dims: (8, 8, 8), lesions: vec![], seed: 9, ..Default::default() };
        generate_suite(2, &base, dir1.path(), &provenance()).unwrap();
        generate_suite(2, &base, dir2.path(), &provenance()).unwrap();
        for part in ["na", "sd", "ld", "residual"] {
            let a = std::fs::read(dir1.path().join(format!("case_000_{part}.vol"))).unwrap();
            let b = std::fs::read(dir2.path().join(format!("case_000_{part}.vol"))).unwrap();
            assert_eq!(a, b);
        }
    }
}
