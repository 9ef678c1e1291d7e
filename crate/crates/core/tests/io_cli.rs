use std::fs;
use std::path::Path;

use aot_ocean::cli::{run, EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME};
use aot_ocean::experiment::ErrorSeries;
use aot_ocean::grid::GridSpec;
use aot_ocean::io::{
    manifest_config_section, manifest_files, parse_config, read_error_csv, read_snapshot, write_error_csv,
    write_snapshot, SnapshotError, MANIFEST_NAME,
};
use aot_ocean::physics::LayeredState;

const TINY: &str = "\
# tiny basin, short windows
grid.nx = 12
grid.ny = 10
grid.nz = 2
experiment.spinup_duration = 43200
experiment.spinup_ke_window = 10800
experiment.spinup_ke_tolerance = 10
experiment.reference_duration = 21600
experiment.error_output_interval = 3600
ablation.duration = 1800
ablation.error_output_interval = 600
";

fn cli(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut argv = vec!["aot-ocean"];
    argv.extend_from_slice(args);
    let code = run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn write_cfg(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn listing(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
    v.sort();
    v
}

fn without_timestamp(text: &str) -> String {
    text.lines().filter(|l| !l.starts_with("timestamp")).collect::<Vec<_>>().join("\n")
}

#[test]
fn snapshot_files_round_trip_and_detect_damage() {
    let dir = tempfile::tempdir().unwrap();
    let g = GridSpec { nx: 9, ny: 7, nz: 3, ..GridSpec::default() }.build().unwrap();
    let mut s = LayeredState::at_rest(&g, 11.0, 34.9);
    s.u.iter_mut().enumerate().for_each(|(i, u)| *u = (i as f64).sqrt() * 1e-3);
    s.t = 86400.0 * 3.0 + 0.25;
    s.apply_mask(&g);
    let path = dir.path().join("s.nocn");
    write_snapshot(&path, &g, &s).unwrap();
    let back = read_snapshot(&path).unwrap();
    assert_eq!(back.state, s);
    assert_eq!(back.mask, g.mask);

    let bytes = fs::read(&path).unwrap();
    let cut = dir.path().join("cut.nocn");
    fs::write(&cut, &bytes[..bytes.len() / 2]).unwrap();
    assert!(matches!(read_snapshot(&cut), Err(SnapshotError::TruncatedFile { .. })));
    let mut bad = bytes.clone();
    bad[..4].copy_from_slice(b"OCNN");
    let badp = dir.path().join("bad.nocn");
    fs::write(&badp, &bad).unwrap();
    assert!(matches!(read_snapshot(&badp), Err(SnapshotError::BadMagic(_))));
}

#[test]
fn error_csv_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let s = ErrorSeries {
        times: vec![0.0, 600.0],
        rms_ke: vec![0.123456789012345678, 1e-310],
        rms_vel: vec![2.0f64.sqrt(), 0.0],
        rms_theta: vec![f64::EPSILON, 1.0],
        rms_sal: vec![1e300, 7.0],
    };
    let p = dir.path().join("e.csv");
    write_error_csv(&p, &s).unwrap();
    assert_eq!(read_error_csv(&p).unwrap(), s);
    write_error_csv(&p, &ErrorSeries::default()).unwrap();
    assert_eq!(fs::read_to_string(&p).unwrap().lines().count(), 1);
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let (code, _, err) = cli(&["explode"]);
    assert_eq!(code, EXIT_CONFIG);
    assert!(err.contains("Usage"), "{err}");
    let (code, _, _) = cli(&[]);
    assert_eq!(code, EXIT_CONFIG);
    let (code, out, _) = cli(&["--help"]);
    assert_eq!(code, EXIT_OK);
    assert!(out.contains("sweep"));
}

#[test]
fn config_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_cfg(dir.path(), "bad.cfg", "assim.mu = 10\nassim.dt = 100\nassim.dt_obs = 10800\n");
    let out = dir.path().join("o");
    let (code, _, err) = cli(&["assimilate", "--config", &bad, "--out", out.to_str().unwrap()]);
    assert_eq!(code, EXIT_CONFIG);
    assert!(err.contains("mu*dt < 2"), "{err}");
    assert!(!out.exists());

    let typo = write_cfg(dir.path(), "typo.cfg", "grid.nx = 12\ngrid.nxx = 3\n");
    let (code, _, err) = cli(&["spinup", "--config", &typo, "--out", out.to_str().unwrap()]);
    assert_eq!(code, EXIT_CONFIG);
    assert!(err.contains("line 2"), "{err}");

    let (code, _, _) = cli(&["spinup", "--config", "/nonexistent/x.cfg", "--out", out.to_str().unwrap()]);
    assert_eq!(code, EXIT_CONFIG);
}

#[test]
fn override_flag_admits_large_gain() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{TINY}assim.mu = 0.05\n");
    let cfg = write_cfg(dir.path(), "c.cfg", &text);
    let out = dir.path().join("o");
    let args = ["validate", "--config", &cfg];
    assert_eq!(cli(&args).0, EXIT_CONFIG);
    let (code, stdout, _) = cli(&["validate", "--config", &cfg, "--override-stability", "--out", out.to_str().unwrap()]);
    assert_eq!(code, EXIT_OK, "{stdout}");
    let manifest = fs::read_to_string(out.join(MANIFEST_NAME)).unwrap();
    assert!(manifest.contains("assim.override_stability = true"));
}

#[test]
fn validate_prints_pass_lines() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "default.cfg", TINY);
    let (code, out, err) = cli(&["validate", "--config", &cfg]);
    assert_eq!(code, EXIT_OK, "{err}");
    assert!(out.lines().count() >= 5);
    assert!(out.lines().all(|l| l.starts_with("PASS ")), "{out}");
}

#[test]
fn spinup_writes_manifest_and_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "c.cfg", TINY);
    let out = dir.path().join("spin");
    let (code, _, err) = cli(&["spinup", "--config", &cfg, "--out", out.to_str().unwrap(), "--seed", "9"]);
    assert_eq!(code, EXIT_OK, "{err}");
    assert_eq!(listing(&out), vec!["manifest.txt", "spinup.nocn"]);
    let manifest = fs::read_to_string(out.join(MANIFEST_NAME)).unwrap();
    let echoed = parse_config(manifest_config_section(&manifest).unwrap()).unwrap();
    assert_eq!(echoed.seed, 9);
    assert_eq!(echoed.grid.nx, 12);
    assert_eq!(manifest_files(&manifest), vec!["spinup.nocn"]);
    let snap = read_snapshot(&out.join("spinup.nocn")).unwrap();
    assert_eq!((snap.nx, snap.ny, snap.nz), (12, 10, 2));
}

#[test]
fn spin_up_failure_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let text = TINY.replace("experiment.spinup_ke_tolerance = 10", "experiment.spinup_ke_tolerance = 1e-12");
    let cfg = write_cfg(dir.path(), "c.cfg", &text);
    let out = dir.path().join("o");
    let (code, _, err) = cli(&["spinup", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code, EXIT_RUNTIME);
    assert!(err.contains("runtime error"), "{err}");
    assert!(out.join(MANIFEST_NAME).exists());
}

#[test]
fn sweep_output_contract_and_reproducibility() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "c.cfg", TINY);
    let mut outs = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let (code, _, err) =
            cli(&["sweep", "--config", &cfg, "--axis", "delta", "--values", "0,1,2,3", "--out", out.to_str().unwrap()]);
        assert_eq!(code, EXIT_OK, "{err}");
        outs.push(out);
    }
    let files = listing(&outs[0]);
    assert_eq!(
        files,
        vec![
            "manifest.txt",
            "sweep_delta_0.csv",
            "sweep_delta_1.csv",
            "sweep_delta_2.csv",
            "sweep_delta_3.csv",
            "sweep_delta_summary.csv"
        ]
    );
    let manifest = fs::read_to_string(outs[0].join(MANIFEST_NAME)).unwrap();
    let mut listed = manifest_files(&manifest);
    listed.push(MANIFEST_NAME.to_string());
    listed.sort();
    assert_eq!(listed, files);
    for f in &files {
        let a = fs::read_to_string(outs[0].join(f)).unwrap();
        let b = fs::read_to_string(outs[1].join(f)).unwrap();
        if f == MANIFEST_NAME {
            assert_eq!(without_timestamp(&a), without_timestamp(&b));
            assert_eq!(a.lines().filter(|l| l.starts_with("timestamp")).count(), 1);
        } else {
            assert_eq!(a, b, "{f}");
        }
    }
    let summary = fs::read_to_string(outs[0].join("sweep_delta_summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 5);
    let series = read_error_csv(&outs[0].join("sweep_delta_2.csv")).unwrap();
    assert_eq!(series.len(), 7);

    let bad = dir.path().join("bad");
    let (code, _, _) = cli(&["sweep", "--config", &cfg, "--axis", "delta", "--values", "2,4", "--out", bad.to_str().unwrap()]);
    assert_eq!(code, EXIT_CONFIG);
    let (code, _, _) = cli(&["sweep", "--config", &cfg, "--axis", "gamma", "--values", "1", "--out", bad.to_str().unwrap()]);
    assert_eq!(code, EXIT_CONFIG);
}

#[test]
fn reference_assimilate_and_ablate_from_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "c.cfg", TINY);
    let spin = dir.path().join("spin");
    assert_eq!(cli(&["spinup", "--config", &cfg, "--out", spin.to_str().unwrap()]).0, EXIT_OK);
    let init = spin.join("spinup.nocn");
    let init = init.to_str().unwrap();

    let r = dir.path().join("ref");
    assert_eq!(cli(&["reference", "--config", &cfg, "--out", r.to_str().unwrap(), "--init", init]).0, EXIT_OK);
    assert_eq!(listing(&r), vec!["manifest.txt", "reference_end.nocn", "reference_start.nocn"]);
    assert_eq!(read_snapshot(&r.join("reference_end.nocn")).unwrap().state.t, 21600.0);

    let a = dir.path().join("assim");
    let (code, out, err) = cli(&["assimilate", "--config", &cfg, "--out", a.to_str().unwrap(), "--init", init]);
    assert_eq!(code, EXIT_OK, "{err}");
    assert!(out.contains("min rms_ke"));
    let full = read_error_csv(&a.join("errors.csv")).unwrap();
    let snaps = read_error_csv(&a.join("errors_snapshots.csv")).unwrap();
    assert_eq!(full.len(), 7);
    assert_eq!(snaps.times, vec![0.0, 10800.0, 21600.0]);

    let b = dir.path().join("abl");
    let (code, _, err) = cli(&["ablate", "--config", &cfg, "--out", b.to_str().unwrap(), "--init", init]);
    assert_eq!(code, EXIT_OK, "{err}");
    let table = fs::read_to_string(b.join("ablation.csv")).unwrap();
    assert_eq!(table.lines().count(), 11);
    assert!(table.lines().nth(1).unwrap().starts_with("No Dynamics,"));

    let wrong = write_cfg(dir.path(), "w.cfg", &TINY.replace("grid.nx = 12", "grid.nx = 14"));
    let c = dir.path().join("wrong");
    assert_eq!(cli(&["assimilate", "--config", &wrong, "--out", c.to_str().unwrap(), "--init", init]).0, EXIT_RUNTIME);
}
