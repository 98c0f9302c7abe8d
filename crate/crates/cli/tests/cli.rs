use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn slm(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_slm")).args(args).arg("--out-dir").arg(out).output().expect("binary runs")
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn manifest_echoes_config_and_lists_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.conf");
    fs::write(&cfg, "# small sweep\nn = 300\ndelta_max = 0.4\ndelta_step = 0.1\n").unwrap();
    let out = tmp.path().join("sweep");
    let r = slm(&["slm-sweep", "--config", cfg.to_str().unwrap(), "--set", "delta_max=0.2", "--seed", "3"], &out);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));

    let m: serde_json::Value = serde_json::from_str(&read(&out, "manifest.json")).unwrap();
    assert_eq!(m["command"], "slm-sweep");
    assert_eq!(m["config"]["n"], "300");
    assert_eq!(m["config"]["delta_max"], "0.2");
    assert_eq!(m["config"]["seed"], "3");
    assert_eq!(m["artifacts"], serde_json::json!(["slm_sweep.csv"]));
    assert!(m["rng"].as_str().unwrap().contains("ChaCha20"));
    assert!(m["wall_clock_seconds"].as_f64().unwrap() >= 0.0);

    let csv = read(&out, "slm_sweep.csv");
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "M_obs,amp_sq_err,amp_post_var,replica_mmse,amp_status");
    assert_eq!(lines.len(), 4);
    // no observations: the replica column is the prior variance
    assert!(lines[1].starts_with("0,") && lines[1].contains(",200000,prior"), "{}", lines[1]);
    assert!(!out.join("FAILED").exists());
}

#[test]
fn repeated_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    for args in [
        &["scalar-curve", "--set", "n=300", "--set", "s_points=12"][..],
        &["amp-run", "--set", "n=300", "--set", "prior=sparse"],
        &["oracle-compare", "--trials", "4", "--set", "n=8"],
        &["infoseq", "--trials", "200", "--set", "m=6"],
    ] {
        let a = tmp.path().join(format!("{}-a", args[0]));
        let b = tmp.path().join(format!("{}-b", args[0]));
        assert!(slm(args, &a).status.success());
        let mut threaded = args.to_vec();
        threaded.extend(["--threads", "2"]);
        assert!(slm(&threaded, &b).status.success());
        let m: serde_json::Value = serde_json::from_str(&read(&a, "manifest.json")).unwrap();
        for f in m["artifacts"].as_array().unwrap() {
            let f = f.as_str().unwrap();
            assert_eq!(read(&a, f), read(&b, f), "{} {f}", args[0]);
        }
    }
}

#[test]
fn seed_changes_draws_but_not_mmse() {
    let tmp = tempfile::tempdir().unwrap();
    let col = |dir: &Path, i: usize| -> Vec<String> {
        read(dir, "scalar_curve.csv").lines().skip(1).map(|l| l.split(',').nth(i).unwrap().to_string()).collect()
    };
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for (dir, seed) in [(&a, "1"), (&b, "2")] {
        assert!(slm(&["scalar-curve", "--set", "n=200", "--set", "prior=gaussian(0, 2)", "--seed", seed], dir).status.success());
    }
    assert_ne!(col(&a, 1), col(&b, 1));
    assert_eq!(col(&a, 3), col(&b, 3));
    for line in read(&a, "scalar_curve.csv").lines().skip(1) {
        let v: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        assert!((v[3] - 2.0 / (1.0 + 2.0 * v[0])).abs() < 1e-12);
    }
}

#[test]
fn bad_config_is_rejected_before_running() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.conf");
    fs::write(&cfg, "n = 4\nfrobnicate = 1\n").unwrap();
    let out = tmp.path().join("never");
    let r = slm(&["infoseq", "--config", cfg.to_str().unwrap()], &out);
    assert!(!r.status.success());
    let err = String::from_utf8_lossy(&r.stderr);
    assert!(err.contains("bad.conf:2: unknown key `frobnicate`"), "{err}");
    assert!(!out.exists());
}

#[test]
fn failed_run_leaves_marker_and_no_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("fail");
    fs::create_dir_all(&out).unwrap();
    fs::write(out.join("manifest.json"), "{}").unwrap();
    // a point-mass prior has zero variance, which state evolution rejects after AMP has written its files
    let r = slm(&["amp-run", "--set", "n=50", "--set", "prior=atoms(0:1)"], &out);
    assert!(!r.status.success());
    assert!(!out.join("manifest.json").exists());
    let marker = read(&out, "FAILED");
    assert!(marker.contains("partial artifacts: amp_trace.csv"), "{marker}");
}

#[test]
fn phase_reports_transitions_and_fixed_point_curve_is_single_branch_for_gaussian() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("fp");
    assert!(slm(&["fixed-point-curve", "--set", "prior=gaussian", "--set", "m_points=60"], &out).status.success());
    let m: serde_json::Value = serde_json::from_str(&read(&out, "manifest.json")).unwrap();
    assert_eq!(m["summary"]["turning_points"], serde_json::json!([]));
    assert!(read(&out, "fixed_point_curve.csv").starts_with("delta,M,I_prime\n"));

    let out = tmp.path().join("phase");
    assert!(slm(&["phase", "--set", "prior=gaussian"], &out).status.success());
    assert_eq!(read(&out, "phase.csv"), "delta_star,delta_alg,mmse_minus,mmse_plus\nNA,NA,NA,NA\n");
}
