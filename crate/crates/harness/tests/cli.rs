use std::path::Path;
use std::process::{Command, Output};

use reachlab::bundle::{ResultBundle, Status};
use reachlab::schema::validate_output;
use serde_json::{json, Value};

fn reachlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_reachlab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, v: &Value) -> String {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p.to_string_lossy().into_owned()
}

fn bundle(out: &Path) -> ResultBundle {
    serde_json::from_str(&std::fs::read_to_string(out.join("bundle.json")).unwrap()).unwrap()
}

fn logistic(dim: usize, classes: usize) -> Value {
    json!({ "family": { "family": "logistic" }, "input_dim": dim, "classes": classes, "weight_decay": 0.001 })
}

fn small_configs() -> Vec<(&'static str, Value)> {
    let blobs = json!({ "classes": 2, "n": 30, "dim": 2, "separation": 3.0 });
    let sgd = json!({ "eta": 0.2, "batch": 4, "max_steps": 2000 });
    let label = json!({
        "blobs": blobs, "model": logistic(2, 2), "rho_grid": [0.0, 0.2, 0.4],
        "beta": 0.1, "lambda2": 1.0, "trainer": { "step": 0.5, "max_iters": 2000 },
        "sgd": sgd, "n_runs": 6
    });
    let mut scatter = label.clone();
    scatter["kind"] = json!("complexity-scatter");
    let mut sweep = label;
    sweep["kind"] = json!("label-sweep");
    vec![
        (
            "kramers-sweep",
            json!({ "kind": "kramers-sweep", "w0": [-1.0], "target": [1.0], "radius": 0.1,
                    "D_grid": [0.2, 0.25, 0.33], "dt": 0.005, "max_steps": 200000, "n_runs": 12,
                    "kramers": { "min_loc": -1.0, "saddle_loc": 0.0 } }),
        ),
        ("label-sweep", sweep),
        ("complexity-scatter", scatter),
        (
            "batch-sweep",
            json!({ "kind": "batch-sweep", "blobs": blobs, "model": logistic(2, 2), "batch_grid": [2, 4, 8],
                    "eta": 0.2, "max_steps": 2000, "noise_draws": 500, "n_runs": 6 }),
        ),
        (
            "finetune-matrix",
            json!({ "kind": "finetune-matrix",
                    "blobs": { "classes": 3, "n": 45, "dim": 2, "separation": 3.0 }, "model": logistic(2, 3),
                    "tasks": [{ "id": "a", "classes": [0, 1] }, { "id": "b" }, { "id": "c", "corruption": 0.3 }],
                    "pretrain_iters": 500, "beta": 0.1, "lambda2": 1.0, "trainer": { "step": 0.5, "max_iters": 1000 },
                    "sgd": sgd, "n_runs": 4 }),
        ),
        (
            "structure-curve",
            json!({ "kind": "structure-curve", "blobs": blobs, "model": logistic(2, 2),
                    "beta_grid": [1.0, 0.3, 0.1], "lambda2": 1.0, "trainer": { "step": 0.5, "max_iters": 2000 } }),
        ),
        (
            "action-check",
            json!({ "kind": "action-check", "potential": { "name": "channel-2d", "a": [0.0, 0.0, 0.5], "b": [1.0, 0.0, 0.5] },
                    "D": 0.2,
                    "straight_paths": [{ "from": [-1.0, 0.0], "to": [1.0, 0.5], "horizon": 2.0, "n_knots": 41 }],
                    "critical": { "from": [-1.0, 0.0], "to": [1.0, 0.0], "horizon": 3.0, "n_knots": 40 },
                    "decomposition": { "n_paths": 3, "horizon": 1.0, "dts": [0.01, 0.001] } }),
        ),
    ]
}

fn config(seed: u64, experiment: Value) -> Value {
    json!({ "seed": seed, "experiment": experiment })
}

#[test]
fn every_kind_succeeds_deterministically_across_worker_counts() {
    let tmp = tempfile::tempdir().unwrap();
    for (kind, exp) in small_configs() {
        let cfg = write_config(tmp.path(), &format!("{kind}.json"), &config(11, exp));
        let mut bundles = Vec::new();
        for workers in ["1", "3"] {
            let out = tmp.path().join(format!("{kind}-{workers}"));
            let o = reachlab(&[
                kind,
                "--config",
                &cfg,
                "--out",
                out.to_str().unwrap(),
                "--workers",
                workers,
            ]);
            assert_eq!(
                o.status.code(),
                Some(0),
                "{kind}: {}",
                String::from_utf8_lossy(&o.stderr)
            );
            assert!(validate_output(&out).unwrap() >= 1, "{kind} wrote no csv");
            assert!(out.join("plots/manifest.json").exists());
            let b = bundle(&out);
            assert_eq!(b.status, Status::Complete);
            for f in &b.files {
                assert!(out.join(&f.path).exists(), "{kind}: missing {}", f.path);
            }
            bundles.push((b, out));
        }
        let (a, b) = (&bundles[0], &bundles[1]);
        assert_eq!(a.0.deterministic_json(), b.0.deterministic_json(), "{kind}");
        for f in &a.0.files {
            assert_eq!(
                std::fs::read(a.1.join(&f.path)).unwrap(),
                std::fs::read(b.1.join(&f.path)).unwrap(),
                "{kind}: {}",
                f.path
            );
        }
    }
}

#[test]
fn schema_problems_exit_with_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let out = out.to_str().unwrap();
    let (_, exp) = small_configs().remove(0);

    let mut extra = config(1, exp.clone());
    extra["experiment"]["colour"] = json!("blue");
    let p = write_config(tmp.path(), "extra.json", &extra);
    assert_eq!(
        reachlab(&["kramers-sweep", "--config", &p, "--out", out]).status.code(),
        Some(2)
    );

    let mut bad = config(1, exp.clone());
    bad["experiment"]["radius"] = json!(-1.0);
    let p = write_config(tmp.path(), "bad.json", &bad);
    let o = reachlab(&["kramers-sweep", "--config", &p, "--out", out]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("radius"));

    let p = write_config(tmp.path(), "ok.json", &config(1, exp));
    assert_eq!(
        reachlab(&["label-sweep", "--config", &p, "--out", out]).status.code(),
        Some(2)
    );
    assert_eq!(
        reachlab(&["no-such-kind", "--config", &p, "--out", out]).status.code(),
        Some(2)
    );
    let missing = tmp.path().join("missing.json");
    assert_eq!(
        reachlab(&["kramers-sweep", "--config", missing.to_str().unwrap(), "--out", out])
            .status
            .code(),
        Some(2)
    );
    assert!(!Path::new(out).exists(), "nothing is written for rejected configs");
}

#[test]
fn failed_cells_exit_with_3_and_keep_partial_results() {
    let tmp = tempfile::tempdir().unwrap();
    // at D=0.005 nothing crosses the barrier within the step budget
    let exp = json!({ "kind": "kramers-sweep", "w0": [-1.0], "target": [1.0], "radius": 0.1,
                      "D_grid": [0.005, 0.25, 0.3, 0.35], "dt": 0.005, "max_steps": 100000, "n_runs": 8 });
    let p = write_config(tmp.path(), "c.json", &config(2, exp));
    let out = tmp.path().join("out");
    let o = reachlab(&[
        "kramers-sweep",
        "--config",
        &p,
        "--out",
        out.to_str().unwrap(),
        "--workers",
        "2",
    ]);
    assert_eq!(o.status.code(), Some(3));
    let b = bundle(&out);
    assert_eq!(b.status, Status::Partial);
    assert_eq!(b.flags.len(), 1);
    assert_eq!(b.flags[0].cell, "D=0.005");
    assert_eq!(b.records.as_array().unwrap().len(), 3);
    assert!(b.summary["barrier"].is_number());
    validate_output(&out).unwrap();
}

#[test]
fn reruns_resume_from_checkpoints() {
    let tmp = tempfile::tempdir().unwrap();
    let (_, exp) = small_configs().into_iter().find(|(k, _)| *k == "label-sweep").unwrap();
    let p = write_config(tmp.path(), "l.json", &config(5, exp));
    let out = tmp.path().join("out");
    let args = ["label-sweep", "--config", &p, "--out", out.to_str().unwrap()];
    assert_eq!(reachlab(&args).status.code(), Some(0));
    let first = bundle(&out);
    let ck: Vec<_> = std::fs::read_dir(out.join("checkpoints")).unwrap().collect();
    assert_eq!(ck.len(), 1);
    let cells = ck[0].as_ref().unwrap().path();
    assert_eq!(std::fs::read_dir(&cells).unwrap().count(), 3);

    // drop one cell as if interrupted; the others are reused
    std::fs::remove_file(cells.join("rho_1.json")).unwrap();
    let o = reachlab(&args);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&o.stderr).matches("resumed cell").count(), 2);
    assert_eq!(first.deterministic_json(), bundle(&out).deterministic_json());
}

#[test]
fn seed_flag_overrides_the_config() {
    let tmp = tempfile::tempdir().unwrap();
    let (_, exp) = small_configs().remove(0);
    let p = write_config(tmp.path(), "k.json", &config(1, exp));
    let run = |seed: &str, name: &str| {
        let out = tmp.path().join(name);
        let o = reachlab(&[
            "kramers-sweep",
            "--config",
            &p,
            "--out",
            out.to_str().unwrap(),
            "--seed",
            seed,
        ]);
        assert_eq!(o.status.code(), Some(0));
        bundle(&out)
    };
    let a = run("9", "a");
    let b = run("9", "b");
    let c = run("10", "c");
    assert_eq!(a.config.seed, 9);
    assert_eq!(a.deterministic_json(), b.deterministic_json());
    assert_ne!(a.records, c.records);
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let mut n = 0;
    for e in std::fs::read_dir(dir).unwrap() {
        let path = e.unwrap().path();
        let cfg = reachlab::config::ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        let stem = path.file_stem().unwrap().to_string_lossy().replace('_', "-");
        assert_eq!(cfg.experiment.kind(), stem);
        n += 1;
    }
    assert_eq!(n, reachlab::config::KINDS.len());
}
