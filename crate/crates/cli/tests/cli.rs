use std::path::Path;
use std::process::{Command, Output};

fn satqkd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_satqkd"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json_line(bytes: &[u8]) -> serde_json::Value {
    let text = String::from_utf8_lossy(bytes);
    serde_json::from_str(text.lines().next().expect("one line")).expect("json")
}

fn data_lines(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(2)
        .map(str::to_owned)
        .collect()
}

#[test]
fn channel_reports_parameters() {
    let out = satqkd(&["channel", "--beta", "1", "--w", "1", "--sigma", "0.7"]);
    assert!(out.status.success());
    let v = json_line(&out.stdout);
    assert!((v["lambda"].as_f64().unwrap() - 2.3129).abs() < 1e-4);
    assert!((v["L"].as_f64().unwrap() - 1.1136).abs() < 1e-4);
    assert!((v["eta0"].as_f64().unwrap() - 0.929_873_5).abs() < 1e-7);
    assert!(v["mean_loss_db"].as_f64().unwrap() > 0.0);
}

#[test]
fn lossless_keyrate_is_log_variance() {
    let out = satqkd(&[
        "keyrate",
        "--scenario",
        "fixed-channel",
        "--protocol",
        "rr-hom",
        "--r",
        "1",
        "--tau",
        "1",
    ]);
    assert!(out.status.success());
    let v = json_line(&out.stdout);
    let expected = 2f64.cosh().log2();
    assert!((v["key"].as_f64().unwrap() - expected).abs() < 1e-9);
    assert_eq!(v["status"], "ok");
}

#[test]
fn post_selected_keyrate_point() {
    let out = satqkd(&[
        "keyrate",
        "--scenario",
        "direct-reflection",
        "--protocol",
        "rr-hom",
        "--r",
        "1.5",
        "--sigma",
        "22",
        "--sigma-sb",
        "2",
        "--chi",
        "0.15",
        "--zeta-th",
        "0.5",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v = json_line(&out.stdout);
    let p = v["p_s"].as_f64().unwrap();
    assert!(p > 0.0 && p < 1e-3);
    assert!(v["key"].as_f64().unwrap() > 0.0);
}

#[test]
fn failures_emit_machine_readable_line() {
    let out = satqkd(&[
        "keyrate",
        "--scenario",
        "direct-reflection",
        "--protocol",
        "rr-hom",
        "--r",
        "1",
        "--sigma",
        "0.7",
        "--zeta-th",
        "0.95",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(json_line(&out.stderr)["error"], "domain");

    let out = satqkd(&[
        "keyrate",
        "--scenario",
        "direct",
        "--protocol",
        "dr-het",
        "--r",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(json_line(&out.stderr)["error"], "usage");

    let out = satqkd(&["sweep", "--config", "/nonexistent.toml", "--out", "x.csv"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(json_line(&out.stderr)["error"], "io");
}

#[test]
fn sweep_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("grid.toml");
    std::fs::write(
        &cfg,
        r#"
        scenario = "direct-reflection"
        protocol = "dr-hom"
        r = [0.5, 1.0]
        sigma = { start = 0.0, stop = 1.0, points = 3 }
        chi = [0.0]
        "#,
    )
    .unwrap();
    let csv = dir.path().join("nested/out.csv");
    let out = satqkd(&[
        "sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(json_line(&out.stdout)["rows"], 6);
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("#schema=satqkd-sweep/1\nscenario,protocol,r,sigma_as,"));
    assert_eq!(data_lines(&csv).len(), 6);

    let out = satqkd(&[
        "postselect",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(json_line(&out.stderr)["error"], "config");
}

#[test]
fn monte_carlo_sweep_depends_only_on_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("mc.toml");
    std::fs::write(
        &cfg,
        r#"
        scenario = "direct-reflection"
        protocol = "rr-hom"
        r = [1.0]
        sigma = [0.7]
        chi = [0.0]
        [post_selection]
        zeta_th = [0.2, 0.5]
        estimator = "monte-carlo"
        mc_samples = 200000
        seed = 1
        "#,
    )
    .unwrap();
    let run = |name: &str, seed: &str| {
        let path = dir.path().join(name);
        let out = satqkd(&[
            "postselect",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            path.to_str().unwrap(),
            "--seed",
            seed,
        ]);
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        std::fs::read(path).unwrap()
    };
    let a = run("a.csv", "7");
    assert_eq!(a, run("b.csv", "7"));
    assert_ne!(a, run("c.csv", "8"));
}

#[test]
fn reproduce_fig4_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for run in ["one", "two"] {
        let out_dir = dir.path().join(run);
        let out = satqkd(&[
            "reproduce",
            "fig4",
            "--out",
            out_dir.to_str().unwrap(),
            "--seed",
            "42",
        ]);
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        files.push(std::fs::read(out_dir.join("fig4.csv")).unwrap());
    }
    assert_eq!(files[0], files[1]);
    let rows = String::from_utf8(files.remove(0)).unwrap().lines().count() - 2;
    assert_eq!(rows, 20);
}

#[test]
fn reproduce_rejects_unknown_figure() {
    let out = satqkd(&["reproduce", "fig7", "--out", "/tmp"]);
    assert_eq!(out.status.code(), Some(2));
}
