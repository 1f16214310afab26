use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use c2ae::data::{load_dataset, save_dataset, synth_correlated};
use c2ae::losses::Whitening;
use c2ae::model::{load_model, save_model, C2AEModel, LossMode, ModelSpec};
use c2ae_cli::evaluate;
use tempfile::TempDir;

fn tiny() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/tiny.txt")
}

fn c2ae(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_c2ae"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write_config(dir: &TempDir, name: &str, body: &str) -> PathBuf {
    let path = dir.path().join(name);
    fs::write(&path, body).unwrap();
    path
}

/// Small network so the training tests stay quick.
const SMALL: &str = "epochs = 4\nhidden_dims = [16]\nbatch_size = 30\n";

fn trained(dir: &TempDir) -> PathBuf {
    let config = write_config(dir, "small.toml", SMALL);
    let model = dir.path().join("model.txt");
    let out = c2ae(&[
        "train",
        "--data",
        s(&tiny()),
        "--config",
        s(&config),
        "--out",
        s(&model),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    model
}

#[test]
fn train_with_defaults_writes_model_and_history() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("m.txt");
    let out = c2ae(&["train", "--data", s(&tiny()), "--out", s(&model)]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let loaded = load_model(&model).unwrap();
    assert_eq!((loaded.n_features(), loaded.n_labels()), (5, 4));
    assert!(loaded.threshold().is_some());

    let history: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("m.txt.history.json")).unwrap())
            .unwrap();
    assert!(!history["epochs"].as_array().unwrap().is_empty());
}

#[test]
fn missing_data_file_exits_one_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("m.txt");
    let out = c2ae(&[
        "train",
        "--data",
        "/no/such/dir/data.txt",
        "--out",
        s(&model),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(
        stderr(&out).contains("/no/such/dir/data.txt"),
        "{}",
        stderr(&out)
    );
    assert!(!model.exists());
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(c2ae(&[]).status.code(), Some(1));
    assert_eq!(c2ae(&["train", "--bogus"]).status.code(), Some(1));
    assert_eq!(c2ae(&["train"]).status.code(), Some(1));
    assert_eq!(c2ae(&["--help"]).status.code(), Some(0));
}

#[test]
fn numeric_failure_exits_two_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        &dir,
        "boom.toml",
        "optimizer = \"sgd\"\nlearning_rate = 1e250\nepochs = 3\nhidden_dims = [8]\n",
    );
    let model = dir.path().join("m.txt");
    let out = c2ae(&[
        "train",
        "--data",
        s(&tiny()),
        "--config",
        s(&config),
        "--out",
        s(&model),
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(!model.exists());
    assert!(!dir.path().join("m.txt.history.json").exists());
}

#[test]
fn unknown_config_key_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(&dir, "bad.toml", "epochs = 2\nlearning_rat = 0.1\n");
    let out = c2ae(&[
        "train",
        "--data",
        s(&tiny()),
        "--config",
        s(&config),
        "--out",
        s(&dir.path().join("m.txt")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("learning_rat"), "{}", stderr(&out));
}

#[test]
fn command_line_seed_overrides_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let file_seed = write_config(&dir, "a.toml", &format!("{SMALL}seed = 5\n"));
    let plain_seed = write_config(&dir, "b.toml", &format!("{SMALL}seed = 7\n"));
    let a = dir.path().join("a.txt");
    let b = dir.path().join("b.txt");
    let c = dir.path().join("c.txt");
    let data = tiny();
    for (config, seed, out) in [
        (&file_seed, Some("7"), &a),
        (&plain_seed, None, &b),
        (&file_seed, None, &c),
    ] {
        let mut args = vec![
            "train",
            "--data",
            s(&data),
            "--config",
            s(config),
            "--out",
            s(out),
        ];
        if let Some(seed) = seed {
            args.extend(["--seed", seed]);
        }
        assert!(c2ae(&args).status.success());
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_ne!(fs::read(&a).unwrap(), fs::read(&c).unwrap());
}

#[test]
fn loss_flag_overrides_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(&dir, "c.toml", &format!("{SMALL}loss_mode = \"bpmll\"\n"));
    let model = dir.path().join("m.txt");
    let out = c2ae(&[
        "train",
        "--data",
        s(&tiny()),
        "--config",
        s(&config),
        "--out",
        s(&model),
        "--loss",
        "bce",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(load_model(&model).unwrap().mode(), LossMode::Bce);
}

#[test]
fn eval_report_matches_the_library() {
    let dir = tempfile::tempdir().unwrap();
    let model = trained(&dir);
    let report = dir.path().join("report.json");
    let out = c2ae(&[
        "eval",
        "--model",
        s(&model),
        "--data",
        s(&tiny()),
        "--report",
        s(&report),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));

    let text = fs::read_to_string(&report).unwrap();
    let expected = evaluate(&load_model(&model).unwrap(), &load_dataset(tiny()).unwrap()).unwrap();
    assert_eq!(
        text.trim_end(),
        serde_json::to_string_pretty(&expected).unwrap()
    );

    let json: serde_json::Value = serde_json::from_str(&text).unwrap();
    for key in ["c_p", "c_r", "c_f1", "o_p", "o_r", "o_f1"] {
        assert!((0.0..=1.0).contains(&json[key].as_f64().unwrap()), "{key}");
    }
    assert_eq!(json["loss_mode"], "c2ae");
    assert_eq!(json["n_instances"], 60);
}

#[test]
fn eval_rejects_mismatched_label_count() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("m8.txt");
    save_dataset(&synth_correlated(30, 5, 8, 2).unwrap(), &data).unwrap();
    let spec = ModelSpec {
        mode: LossMode::C2ae,
        n_features: 5,
        n_labels: 10,
        latent_dim: 4,
        hidden_dims: vec![8],
        slope: 0.01,
        alpha: 1.0,
        lambda: 0.5,
        whitening: Whitening::Sum,
    };
    let model = dir.path().join("m10.txt");
    save_model(&C2AEModel::init(&spec, 1).unwrap(), &model).unwrap();
    let report = dir.path().join("r.json");
    let out = c2ae(&[
        "eval",
        "--model",
        s(&model),
        "--data",
        s(&data),
        "--report",
        s(&report),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(err.contains("m=10") && err.contains("m=8"), "{err}");
    assert!(!report.exists());
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines
        .map(|l| l.split(',').map(String::from).collect())
        .collect();
    (header, rows)
}

#[test]
fn predict_writes_scores_and_calibrated_labels() {
    let dir = tempfile::tempdir().unwrap();
    let model_path = trained(&dir);
    let csv = dir.path().join("p.csv");
    let out = c2ae(&[
        "predict",
        "--model",
        s(&model_path),
        "--data",
        s(&tiny()),
        "--out",
        s(&csv),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));

    let model = load_model(&model_path).unwrap();
    let ds = load_dataset(tiny()).unwrap();
    let scores = model.predict_scores(ds.features()).unwrap();
    let labels = model.predict_labels(ds.features(), None).unwrap();
    let (header, rows) = read_csv(&csv);
    assert_eq!(header.len(), 1 + 2 * 4);
    assert_eq!(header[0], "instance");
    assert_eq!(rows.len(), 60);
    for (i, row) in rows.iter().enumerate() {
        assert_eq!(row[0], i.to_string());
        for j in 0..4 {
            let score: f64 = row[1 + j].parse().unwrap();
            assert_eq!(score, scores.get(j, i), "score {j} of {i}");
            let label: f64 = row[5 + j].parse().unwrap();
            assert_eq!(label, labels.get(j, i));
        }
    }
}

#[test]
fn predict_threshold_override() {
    let dir = tempfile::tempdir().unwrap();
    let model = trained(&dir);
    let csv = dir.path().join("p.csv");
    for (t, want) in [("1e9", "0"), ("-1e9", "1")] {
        let out = c2ae(&[
            "predict",
            "--model",
            s(&model),
            "--data",
            s(&tiny()),
            "--out",
            s(&csv),
            "--threshold",
            t,
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
        let (_, rows) = read_csv(&csv);
        assert!(
            rows.iter().all(|r| r[5..].iter().all(|v| v == want)),
            "threshold {t}"
        );
    }
}

#[test]
fn predict_without_any_threshold_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let spec = ModelSpec {
        mode: LossMode::C2ae,
        n_features: 5,
        n_labels: 4,
        latent_dim: 4,
        hidden_dims: vec![8],
        slope: 0.01,
        alpha: 1.0,
        lambda: 0.5,
        whitening: Whitening::Sum,
    };
    let model = dir.path().join("raw.txt");
    save_model(&C2AEModel::init(&spec, 1).unwrap(), &model).unwrap();
    let csv = dir.path().join("p.csv");
    let out = c2ae(&[
        "predict",
        "--model",
        s(&model),
        "--data",
        s(&tiny()),
        "--out",
        s(&csv),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!csv.exists());
}

#[test]
fn mask_rate_zero_is_a_resave() {
    let dir = tempfile::tempdir().unwrap();
    let resaved = dir.path().join("resaved.txt");
    save_dataset(&load_dataset(tiny()).unwrap(), &resaved).unwrap();
    let masked = dir.path().join("masked.txt");
    let out = c2ae(&[
        "mask",
        "--data",
        s(&tiny()),
        "--rate",
        "0",
        "--seed",
        "3",
        "--out",
        s(&masked),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(fs::read(&masked).unwrap(), fs::read(&resaved).unwrap());
}

#[test]
fn mask_hides_some_labels() {
    let dir = tempfile::tempdir().unwrap();
    let masked = dir.path().join("masked.txt");
    let out = c2ae(&[
        "mask",
        "--data",
        s(&tiny()),
        "--rate",
        "0.5",
        "--seed",
        "3",
        "--out",
        s(&masked),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let ds = load_dataset(&masked).unwrap();
    assert!(ds.has_missing());
}

#[test]
fn synth_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.txt");
    let b = dir.path().join("b.txt");
    for p in [&a, &b] {
        let out = c2ae(&[
            "synth",
            "--n",
            "60",
            "--d",
            "5",
            "--m",
            "4",
            "--seed",
            "1",
            "--out",
            s(p),
        ]);
        assert!(out.status.success());
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(fs::read(&a).unwrap(), fs::read(tiny()).unwrap());
}

#[test]
fn neighbors_lists_k_other_labels() {
    let dir = tempfile::tempdir().unwrap();
    let model = trained(&dir);
    let out = c2ae(&[
        "neighbors",
        "--model",
        s(&model),
        "--label",
        "1",
        "--k",
        "3",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<(usize, f64)> = text
        .lines()
        .map(|l| {
            let mut parts = l.split_whitespace();
            (
                parts.next().unwrap().parse().unwrap(),
                parts.next().unwrap().parse().unwrap(),
            )
        })
        .collect();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|(j, _)| *j != 1));
    assert!(rows.windows(2).all(|w| w[0].1 <= w[1].1));
}

#[test]
fn neighbors_rejects_non_c2ae_models() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(&dir, "bce.toml", &format!("{SMALL}loss_mode = \"bce\"\n"));
    let model = dir.path().join("bce.txt");
    assert!(c2ae(&[
        "train",
        "--data",
        s(&tiny()),
        "--config",
        s(&config),
        "--out",
        s(&model),
    ])
    .status
    .success());
    let out = c2ae(&[
        "neighbors",
        "--model",
        s(&model),
        "--label",
        "0",
        "--k",
        "2",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn gradcheck_passes() {
    let out = c2ae(&["gradcheck", "--seed", "4"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(
        text.lines().last().unwrap().ends_with("checks passed"),
        "{text}"
    );
}
