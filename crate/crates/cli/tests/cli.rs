use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn rewind(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rewind"))
        .arg("--out-dir")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn estimate_z3() {
    let dir = tempfile::tempdir().unwrap();
    let o = rewind(dir.path(), &["estimate", "--rh", "1", "--rx", "9"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = json(&dir.path().join("estimate.json"));
    assert_eq!(r["timing"]["ii_per_layer"], serde_json::json!([9, 9]));
    assert_eq!(r["timing"]["II_sys"], 72);
    assert_eq!(r["resources"]["dsp_model"], 769);
    assert_eq!(r["profile"]["name"], "zynq7045-100MHz");
    assert_eq!(r["reuse"][0]["rx"], 9);
    let csv = std::fs::read_to_string(dir.path().join("estimate.csv")).unwrap();
    assert!(
        csv.starts_with("layer,lx,lh,timesteps,rx,rh,rt,ii,II_layer,dsp\n0,1,9,8,9,1,1,9,72,364\n"),
        "{csv}"
    );
    // stdout carries the same report
    assert_eq!(serde_json::from_slice::<Value>(&o.stdout).unwrap(), r);
}

#[test]
fn estimate_defaults_rx_with_notice() {
    let dir = tempfile::tempdir().unwrap();
    let o = rewind(dir.path(), &["--format", "csv", "estimate", "--rh", "2"]);
    assert!(o.status.success());
    assert!(stderr(&o).contains("balanced"), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("0,1,9,8,10,2,1,10,80,"));
    assert_eq!(
        json(&dir.path().join("estimate.json"))["config"]["rx_defaulted"],
        true
    );
}

#[test]
fn missing_manifest_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = rewind(
        dir.path(),
        &["--manifest", "does/not/exist.json", "estimate"],
    );
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("does/not/exist.json"));
}

#[test]
fn malformed_manifest_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("m.json");
    std::fs::write(&m, "{\n \"schema\": 1,\n \"timesteps\": 8,\n \"layers\": [{\"units\": -3, \"return_sequences\": true}]\n}\n").unwrap();
    let o = rewind(dir.path(), &["--manifest", m.to_str().unwrap(), "estimate"]);
    assert_eq!(o.status.code(), Some(4));
    let err = stderr(&o);
    assert!(
        err.contains("layers[0].units") && err.contains("line 4"),
        "{err}"
    );
}

#[test]
fn usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(rewind(dir.path(), &["frobnicate"]).status.code(), Some(2));
    let o = rewind(dir.path(), &["simulate", "--rh", "1,1,1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("2 layers"));
    assert_eq!(
        rewind(dir.path(), &["--profile", "nope", "estimate"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        rewind(dir.path(), &["estimate", "--rh", "0"]).status.code(),
        Some(2)
    );
    assert_eq!(rewind(dir.path(), &["infer"]).status.code(), Some(2));
}

#[test]
fn explore_budgets() {
    let dir = tempfile::tempdir().unwrap();
    let o = rewind(
        dir.path(),
        &["explore", "--budget", "900", "--sweep", "1..10"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let r = json(&dir.path().join("explore.json"));
    assert_eq!(r["feasible"], true);
    assert_eq!(r["point"]["rfs"][0]["rh"], 1);
    assert_eq!(r["point"]["rfs"][0]["rx"], 9);
    assert_eq!(r["point"]["timing"]["II_sys"], 72);
    assert!(
        r["fully_unrolled"]["resources"]["dsp_model"]
            .as_u64()
            .unwrap()
            > 900
    );
    let csv = std::fs::read_to_string(dir.path().join("frontier.csv")).unwrap();
    for v in ["naive", "balanced"] {
        let rows = csv.lines().filter(|l| l.starts_with(v)).count();
        assert!((1..=10).contains(&rows), "{v}: {rows}");
    }

    let o = rewind(dir.path(), &["explore", "--budget", "10"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("10 DSPs"));
    assert_eq!(json(&dir.path().join("explore.json"))["feasible"], false);
}

#[test]
fn simulate_reports() {
    let dir = tempfile::tempdir().unwrap();
    let o = rewind(
        dir.path(),
        &["simulate", "--rh", "1", "--rx", "9", "--inferences", "8"],
    );
    assert!(o.status.success());
    let r = json(&dir.path().join("simulate.json"));
    assert_eq!(r["report"]["steady_interval"], 72);
    assert_eq!(r["comparison"]["agrees"], true);
    assert!(std::fs::read_to_string(dir.path().join("trace.csv"))
        .unwrap()
        .starts_with("inference,layer,timestep,issue,finish,unit\n"));
    assert!(std::fs::read_to_string(dir.path().join("gantt.txt"))
        .unwrap()
        .contains("L1 recurrent"));

    let o = rewind(dir.path(), &["simulate", "--inferences", "1"]);
    assert!(o.status.success());
    let r = json(&dir.path().join("simulate.json"));
    assert!(r["report"]["steady_interval"].is_null());
    assert!(r["comparison"]["steady_II_status"]
        .as_str()
        .unwrap()
        .starts_with("unavailable"));
    assert!(r["report"]["latency_first"].as_u64().unwrap() > 0);
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(
        &cfg,
        r#"{"rh": 2, "rx": [10, 10], "manifest": "builtin:small"}"#,
    )
    .unwrap();
    let o = rewind(dir.path(), &["--config", cfg.to_str().unwrap(), "estimate"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        json(&dir.path().join("estimate.json"))["timing"]["II_sys"],
        80
    );
    let o = rewind(
        dir.path(),
        &[
            "--config",
            cfg.to_str().unwrap(),
            "estimate",
            "--rh",
            "1",
            "--rx",
            "9",
        ],
    );
    assert!(o.status.success());
    assert_eq!(
        json(&dir.path().join("estimate.json"))["timing"]["II_sys"],
        72
    );

    std::fs::write(&cfg, r#"{"rhh": 2}"#).unwrap();
    assert_eq!(
        rewind(dir.path(), &["--config", cfg.to_str().unwrap(), "estimate"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn bench_threshold_and_infer_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let o = rewind(
        dir.path(),
        &[
            "bench",
            "--n-train",
            "300",
            "--n-background",
            "1000",
            "--n-signal",
            "200",
            "--epochs",
            "3",
            "--fpr",
            "0.1",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let r = json(&dir.path().join("bench.json"));
    for mode in ["float", "fixed"] {
        assert!(r[mode]["empirical_fpr"].as_f64().unwrap() <= 0.1);
    }
    assert_eq!(r["eval_background"], 1000);
    assert!(std::fs::read_to_string(dir.path().join("roc_float.csv"))
        .unwrap()
        .starts_with("threshold,fpr,tpr\n"));

    // the trained manifest drives inference
    let seq = dir.path().join("seq.csv");
    std::fs::write(&seq, "f0\n0.5\n-0.25\n1\n0\n-1\n0.75\n0.1\n-0.3\n").unwrap();
    let model = dir.path().join("model.json");
    for numerics in ["float", "fixed"] {
        let o = rewind(
            dir.path(),
            &[
                "--manifest",
                model.to_str().unwrap(),
                "infer",
                "--input",
                seq.to_str().unwrap(),
                "--numerics",
                numerics,
            ],
        );
        assert!(o.status.success(), "{}", stderr(&o));
        let r = json(&dir.path().join("infer.json"));
        assert_eq!(r["weights_present"], true);
        assert_eq!(r["output"].as_array().unwrap().len(), 8);
    }

    let short = dir.path().join("short.csv");
    std::fs::write(&short, "f0\n0.5\n").unwrap();
    let o = rewind(
        dir.path(),
        &[
            "--manifest",
            model.to_str().unwrap(),
            "infer",
            "--input",
            short.to_str().unwrap(),
        ],
    );
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn bench_rejects_single_class_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("bg.csv");
    std::fs::write(
        &data,
        "id,label,s0,s1,s2,s3,s4,s5,s6,s7\n0,background,0,1,0,1,0,1,0,1\n",
    )
    .unwrap();
    let o = rewind(
        dir.path(),
        &["bench", "--dataset", data.to_str().unwrap(), "--no-train"],
    );
    assert_eq!(o.status.code(), Some(4));
}
