//! End-to-end tests of the command-line binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use otpatch::volfile;
use otpatch_core::rng;
use otpatch_core::Volume;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_otpatch")
}

fn run(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .env_remove("OTPATCH_SEED")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "stdout not JSON ({e}): {}\nstderr: {}",
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

fn write_random_volume(path: &Path, dims: (usize, usize, usize), seed: u64) {
    let mut r = rng::seeded(seed);
    let n = dims.0 * dims.1 * dims.2;
    let v = Volume::new(dims, (0..n).map(|_| rng::uniform(&mut r)).collect()).unwrap();
    volfile::save_volume(path, &v, None).unwrap();
}

fn p(path: &Path) -> String {
    path.to_str().unwrap().to_string()
}

#[test]
fn nploss_of_a_volume_with_itself_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.vol");
    write_random_volume(&a, (8, 8, 8), 1);
    let out = run(&["nploss", &p(&a), &p(&a), "--solver", "exact"]);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let v = stdout_json(&out);
    assert_eq!(v["loss"], serde_json::json!(0.0));
    assert_eq!(v["patch_count"], serde_json::json!(8));
    assert!(v["provenance"]["version"].is_string());
}

#[test]
fn metrics_of_identical_volumes_reports_inf_psnr_and_unit_ssim() {
    let dir = tempfile::tempdir().unwrap();
    let x = dir.path().join("x.vol");
    let na = dir.path().join("na.vol");
    let sd = dir.path().join("sd.vol");
    write_random_volume(&x, (16, 16, 4), 2);
    // native scan of ones with an enhanced block in the standard-dose scan
    let vna = Volume::constant((16, 16, 4), 1.0).unwrap();
    let mut sd_vox = vna.voxels().to_vec();
    for v in sd_vox.iter_mut().take(64) {
        *v += 0.5;
    }
    let vsd = Volume::new((16, 16, 4), sd_vox).unwrap();
    volfile::save_volume(&na, &vna, None).unwrap();
    volfile::save_volume(&sd, &vsd, None).unwrap();
    let out = run(&["metrics", &p(&x), &p(&x), "--na", &p(&na), "--sd", &p(&sd)]);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let v = stdout_json(&out);
    assert_eq!(v["psnr_db"], serde_json::json!("inf"));
    assert_eq!(v["ssim"], serde_json::json!(1.0));
    assert_eq!(v["mae_ce"], serde_json::json!(0.0));
    assert_eq!(v["ce_voxel_count"], serde_json::json!(64));
}

#[test]
fn unknown_flag_is_usage_error_and_missing_file_is_data_error() {
    let out = run(&["nploss", "--definitely-not-a-flag"]);
    assert_eq!(code(&out), 1);
    let out = run(&["nploss", "/nonexistent/a.vol", "/nonexistent/b.vol"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/a.vol"));
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(code(&run(&["--help"])), 0);
    assert_eq!(code(&run(&["--version"])), 0);
}

#[test]
fn single_thread_runs_are_bit_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.vol");
    let b = dir.path().join("b.vol");
    write_random_volume(&a, (8, 8, 8), 3);
    write_random_volume(&b, (8, 8, 8), 4);
    // identical invocations (same --out path) must produce identical bytes
    let o = dir.path().join("r.json");
    let (sa, sb, so) = (p(&a), p(&b), p(&o));
    let args = ["nploss", &sa, &sb, "--seed", "11", "--threads", "1", "--out", &so];
    let out = run(&args);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let first = std::fs::read(&o).unwrap();
    std::fs::remove_file(&o).unwrap();
    let out = run(&args);
    assert_eq!(code(&out), 0);
    assert_eq!(first, std::fs::read(&o).unwrap());
}

#[test]
fn nploss_total_is_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.vol");
    let b = dir.path().join("b.vol");
    write_random_volume(&a, (8, 8, 8), 5);
    write_random_volume(&b, (8, 8, 8), 6);
    let mut losses = Vec::new();
    for threads in ["1", "4"] {
        let out = run(&["nploss", &p(&a), &p(&b), "--seed", "9", "--threads", threads]);
        assert_eq!(code(&out), 0);
        losses.push(stdout_json(&out)["loss"].as_f64().unwrap());
    }
    assert_eq!(losses[0].to_bits(), losses[1].to_bits());
}

#[test]
fn seed_env_fallback_matches_explicit_flag() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.vol");
    let b = dir.path().join("b.vol");
    write_random_volume(&a, (8, 8, 8), 7);
    write_random_volume(&b, (8, 8, 8), 8);
    let with_flag = run(&["nploss", &p(&a), &p(&b), "--seed", "21"]);
    let with_env = Command::new(bin())
        .args(["nploss", &p(&a), &p(&b)])
        .env("OTPATCH_SEED", "21")
        .output()
        .unwrap();
    assert_eq!(
        stdout_json(&with_flag)["loss"],
        stdout_json(&with_env)["loss"]
    );
    let bad_env = Command::new(bin())
        .args(["nploss", &p(&a), &p(&b)])
        .env("OTPATCH_SEED", "not-a-number")
        .output()
        .unwrap();
    assert_eq!(bad_env.status.code().unwrap(), 2);
}

#[test]
fn ot_reports_distance_and_feasibility() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.vol");
    let b = dir.path().join("b.vol");
    write_random_volume(&a, (4, 4, 4), 9);
    write_random_volume(&b, (4, 4, 4), 10);
    let out = run(&["ot", &p(&a), &p(&b), "--solver", "ipot", "--outer", "100", "--inner", "5"]);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let v = stdout_json(&out);
    assert!(v["w"].as_f64().unwrap() > 0.0);
    assert!(v["marginal_error"].as_f64().unwrap() <= 1e-5);
    assert!((v["total_mass"].as_f64().unwrap() - 1.0).abs() <= 1e-9);
}

#[test]
fn mask_command_writes_a_mask_volume() {
    let dir = tempfile::tempdir().unwrap();
    let na = dir.path().join("na.vol");
    let sd = dir.path().join("sd.vol");
    let vna = Volume::constant((4, 4, 4), 1.0).unwrap();
    let mut sd_vox = vna.voxels().to_vec();
    sd_vox[0] += 0.5;
    sd_vox[1] += 0.5;
    let vsd = Volume::new((4, 4, 4), sd_vox).unwrap();
    volfile::save_volume(&na, &vna, None).unwrap();
    volfile::save_volume(&sd, &vsd, None).unwrap();
    let mask_path = dir.path().join("mask.vol");
    let out = run(&["mask", &p(&na), &p(&sd), "--out", &p(&mask_path)]);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let v = stdout_json(&out);
    assert_eq!(v["ce_voxel_count"], serde_json::json!(2));
    let mask = volfile::load_volume(&mask_path).unwrap();
    assert_eq!(mask.voxels().iter().filter(|&&x| x == 1.0).count(), 2);
}

#[test]
fn failed_runs_leave_no_partial_output() {
    let dir = tempfile::tempdir().unwrap();
    let na = dir.path().join("na.vol");
    std::fs::write(&na, b"not a volume\n").unwrap();
    let sd = dir.path().join("missing.vol");
    let mask_path = dir.path().join("mask.vol");
    let out = run(&["mask", &p(&na), &p(&sd), "--out", &p(&mask_path)]);
    assert_eq!(code(&out), 2);
    assert!(!mask_path.exists());
    assert!(!mask_path.with_extension("vol.tmp").exists());
}

#[test]
fn phantom_suite_manifest_cycles_doses() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("suite");
    let out = run(&["phantom", "--count", "3", "--size", "8", "--out", &p(&out_dir)]);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("manifest.json")).unwrap())
            .unwrap();
    let doses: Vec<f64> = manifest["cases"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["dose"].as_f64().unwrap())
        .collect();
    assert_eq!(doses, vec![0.1, 0.2, 0.33]);
    let first: PathBuf = manifest["cases"][0]["x_na"].as_str().unwrap().into();
    assert!(first.exists());
}

#[test]
fn compare_emits_csv_with_both_loss_rows() {
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("cmp.csv");
    let json_path = dir.path().join("cmp.json");
    let out = run(&[
        "compare",
        "--sigma",
        "0.05",
        "--iterations",
        "15",
        "--realizations",
        "4",
        "--seed",
        "3",
        "--out-csv",
        &p(&csv_path),
        "--out-json",
        &p(&json_path),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(&csv_path).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("loss,sigma,"));
    assert!(lines[1].starts_with("l1,"));
    assert!(lines[2].starts_with("np,"));
    let rep: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&json_path).unwrap()).unwrap();
    assert_eq!(rep["rows"].as_array().unwrap().len(), 2);
    assert!(rep["provenance"]["command"].as_str().unwrap().contains("compare"));
}

#[test]
fn fit_writes_report_and_volume() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("fit.json");
    let volume = dir.path().join("fit.vol");
    let out = run(&[
        "fit",
        "--loss",
        "l1",
        "--sigma",
        "0.05",
        "--iterations",
        "10",
        "--realizations",
        "4",
        "--out",
        &p(&report),
        "--out-volume",
        &p(&volume),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let rep: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(rep["loss"], serde_json::json!("l1"));
    assert!(rep["final_loss"].as_f64().unwrap() < rep["initial_loss"].as_f64().unwrap());
    let v = volfile::load_volume(&volume).unwrap();
    assert_eq!(v.dims(), (32, 32, 32));
}
