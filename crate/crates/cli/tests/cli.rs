use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn fdl(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fdl"))
        .args(args)
        .current_dir(dir)
        .env_remove("FDL_SEED")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = fdl(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn small_dots(dir: &Path, name: &str, seed: &str) {
    ok(
        dir,
        &[
            "gen-data", "dots", "--n", "100", "--height", "8", "--width", "8", "--min-count", "4", "--max-count", "6",
            "--seed", seed, "--out", name,
        ],
    );
}

#[test]
fn cosine_schedule_has_header_and_t_rows() {
    let tmp = TempDir::new().unwrap();
    ok(tmp.path(), &["schedule", "--kind", "cosine", "--T", "10", "--out", "s.csv"]);
    let text = fs::read_to_string(tmp.path().join("s.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 11);
    assert_eq!(lines[0], "t,alphabar,mean_snr_db");
    // alphabar decreases along the schedule
    let ab: Vec<f64> = lines[1..].iter().map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert!(ab.windows(2).all(|w| w[1] < w[0]), "{ab:?}");
    assert!(tmp.path().join("s.csv.manifest").is_file());
}

#[test]
fn gen_data_is_reproducible() {
    let tmp = TempDir::new().unwrap();
    small_dots(tmp.path(), "a.ften", "7");
    small_dots(tmp.path(), "b.ften", "7");
    small_dots(tmp.path(), "c.ften", "8");
    let read = |n: &str| fs::read(tmp.path().join(n)).unwrap();
    assert_eq!(read("a.ften"), read("b.ften"));
    assert_ne!(read("a.ften"), read("c.ften"));
}

#[test]
fn seed_env_used_when_no_flag() {
    let tmp = TempDir::new().unwrap();
    let run = |seed: &str, out: &str| {
        let s = Command::new(env!("CARGO_BIN_EXE_fdl"))
            .args(["gen-data", "mixture1d", "--n", "20", "--out", out])
            .env("FDL_SEED", seed)
            .current_dir(tmp.path())
            .output()
            .unwrap();
        assert!(s.status.success());
        fs::read(tmp.path().join(out)).unwrap()
    };
    assert_eq!(run("5", "a.ften"), run("5", "b.ften"));
    assert_ne!(run("5", "a.ften"), run("6", "c.ften"));
}

#[test]
fn counterexample_tv_is_large_for_narrow_modes() {
    let tmp = TempDir::new().unwrap();
    ok(tmp.path(), &["diagnose", "counterexample", "--delta", "0.01", "--out", "ce.csv"]);
    let text = fs::read_to_string(tmp.path().join("ce.csv")).unwrap();
    let row = text.lines().nth(1).unwrap();
    let tv: f64 = row.split(',').nth(1).unwrap().parse().unwrap();
    assert!(tv >= 0.2, "tv {tv}");
}

#[test]
fn unknown_subcommand_is_usage_error() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(fdl(tmp.path(), &["frobnicate"]).status.code(), Some(2));
    assert_eq!(fdl(tmp.path(), &["schedule", "--bogus"]).status.code(), Some(2));
}

#[test]
fn unknown_config_key_names_key_and_line() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("run.cfg"), "seed = 1\n# comment\nT = 10\nlearning_rate = 3\n").unwrap();
    let out = fdl(tmp.path(), &["schedule", "--config", "run.cfg"]);
    assert_eq!(out.status.code(), Some(2));
    let msg = stderr(&out);
    assert!(msg.contains("learning_rate") && msg.contains("line 4"), "{msg}");
}

#[test]
fn flags_override_config_file() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("run.cfg"), "T = 10\nschedule = linear\nout = from_file.csv\n").unwrap();
    ok(tmp.path(), &["schedule", "--config", "run.cfg", "--T", "5"]);
    let text = fs::read_to_string(tmp.path().join("from_file.csv")).unwrap();
    assert_eq!(text.lines().count(), 6);
    let manifest = fs::read_to_string(tmp.path().join("from_file.csv.manifest")).unwrap();
    assert!(manifest.contains("T = 5") && manifest.contains("schedule = linear"), "{manifest}");
}

#[test]
fn help_works_everywhere() {
    let tmp = TempDir::new().unwrap();
    let subcommands: &[&[&str]] = &[
        &[],
        &["gen-data"],
        &["estimate-c"],
        &["schedule"],
        &["forward-sim"],
        &["train"],
        &["sample"],
        &["diagnose"],
        &["diagnose", "violation"],
        &["diagnose", "counterexample"],
        &["detect"],
        &["report"],
    ];
    for sub in subcommands {
        let mut args = sub.to_vec();
        args.push("--help");
        let out = fdl(tmp.path(), &args);
        assert_eq!(out.status.code(), Some(0), "{args:?}");
        assert!(!out.stdout.is_empty());
    }
}

#[test]
fn identical_runs_give_identical_manifests() {
    let tmp = TempDir::new().unwrap();
    small_dots(tmp.path(), "d.ften", "2");
    let train = |out: &str| {
        ok(
            tmp.path(),
            &[
                "train", "--data", "d.ften", "--T", "10", "--iterations", "30", "--lr", "1e-5", "--hidden", "4",
                "--seed", "4", "--out", out,
            ],
        );
        fs::read_to_string(tmp.path().join(out).join("manifest")).unwrap()
    };
    let a = train("r1");
    let b = train("r2");
    assert_eq!(a, b);
    assert!(a.contains("artifact model.fdlm sha256:"), "{a}");

    let sample = |model: &str, out: &str| {
        ok(tmp.path(), &["sample", "--model", model, "--count", "3", "--seed", "9", "--out", out]);
        fs::read(tmp.path().join(out).join("samples.ften")).unwrap()
    };
    assert_eq!(sample("r1", "s1"), sample("r2", "s2"));
}

#[test]
fn corrupt_input_is_runtime_error() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("bad.ften"), b"not a tensor").unwrap();
    let out = fdl(tmp.path(), &["estimate-c", "--data", "bad.ften"]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    assert!(stderr(&out).starts_with("error:"));
}

#[test]
fn missing_inputs_are_config_errors() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(fdl(tmp.path(), &["estimate-c"]).status.code(), Some(2));
    assert_eq!(fdl(tmp.path(), &["estimate-c", "--data", "nope.ften"]).status.code(), Some(2));
    assert_eq!(fdl(tmp.path(), &["schedule", "--T", "0"]).status.code(), Some(2));
    // calibration direction must match the process
    small_dots(tmp.path(), "d.ften", "1");
    let out = fdl(tmp.path(), &["schedule", "--data", "d.ften", "--calibrate", "to-ddpm"]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
}

#[test]
fn estimate_c_lists_every_bin_by_rank() {
    let tmp = TempDir::new().unwrap();
    small_dots(tmp.path(), "d.ften", "3");
    ok(tmp.path(), &["estimate-c", "--data", "d.ften"]);
    let text = fs::read_to_string(tmp.path().join("c.csv")).unwrap();
    let rows: Vec<Vec<f64>> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|f| f.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 64);
    assert!(rows.windows(2).all(|w| w[1][2] >= w[0][2]), "distances not sorted");
    assert!(rows.iter().all(|r| r[3] > 0.0));
}

#[test]
fn analytic_pipeline_writes_expected_artifacts() {
    let tmp = TempDir::new().unwrap();
    small_dots(tmp.path(), "d.ften", "5");
    ok(
        tmp.path(),
        &[
            "sample", "--analytic", "--data", "d.ften", "--T", "20", "--count", "4", "--pgm", "2", "--trajectory",
            "--process", "equalsnr",
        ],
    );
    let s = tmp.path().join("samples");
    for f in ["samples.ften", "sample_0000.pgm", "sample_0001.pgm", "trajectory.csv", "manifest"] {
        assert!(s.join(f).is_file(), "{f} missing");
    }
    assert!(!s.join("sample_0002.pgm").exists());

    ok(tmp.path(), &["forward-sim", "--data", "d.ften", "--T", "20", "--every", "7"]);
    let heat = fs::read_to_string(tmp.path().join("snr_heatmap.csv")).unwrap();
    let ts: std::collections::BTreeSet<u32> =
        heat.lines().skip(1).map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(ts.into_iter().collect::<Vec<_>>(), vec![1, 8, 15, 20]);

    ok(tmp.path(), &["report", "--data", "d.ften", "--generated", "samples/samples.ften", "--T", "20"]);
    let r = tmp.path().join("report");
    for f in [
        "spectral_profile.csv",
        "intensity_profile.csv",
        "generated_spectral_profile.csv",
        "generated_intensity_profile.csv",
        "variance_trajectory.csv",
    ] {
        assert!(r.join(f).is_file(), "{f} missing");
    }
}
