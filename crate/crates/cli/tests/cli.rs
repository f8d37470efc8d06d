use std::path::Path;
use std::process::{Command, Output};

fn nngpvae(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nngpvae")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, model: &str, h: usize) -> String {
    let path = dir.join(format!("{model}.json"));
    let text = format!(
        r#"{{
            "run_id": "cli-{model}",
            "model": "{model}",
            "H": {h},
            "latent_dim": 2,
            "kernels": [{{"kind": "matern32", "lengthscale": 2.0, "outputscale": 1.0}}],
            "encoder": {{"hidden": [8]}},
            "decoder": {{"hidden": [8]}},
            "likelihood": "gaussian",
            "optimizer": {{"lr": 0.01, "epochs": 3, "batch_size": 16}},
            "data": {{"gp_series": {{"n": 40, "grid": {{"regular": {{"spacing": 1.0}}}}, "kernel": {{"kind": "rbf", "lengthscale": 3.0, "outputscale": 1.0}}, "noise": 0.1}}}},
            "eval": {{"samples": 4}}
        }}"#
    );
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn no_arguments_prints_usage_and_exits_2() {
    let out = nngpvae(&[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    assert_eq!(nngpvae(&["train", "--bogus"]).status.code(), Some(2));
}

#[test]
fn check_grad_passes() {
    let out = nngpvae(&["check-grad", "--seed", "3"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(text.lines().count(), 1 + 48);
    assert!(text.lines().skip(1).all(|l| l.ends_with(",true")));
}

#[test]
fn recover_passes() {
    let out = nngpvae(&["recover"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn missing_config_is_a_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("none.json");
    let out = nngpvae(&["train", "--config", missing.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn train_eval_predict_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.nnts");
    let data = data.to_str().unwrap();
    let mut rows = Vec::new();
    for (model, h) in [("vae", 0), ("gpvae_spa", 4)] {
        let config = write_config(dir.path(), model, h);
        for seed in ["1", "2"] {
            let run = dir.path().join(format!("{model}-{seed}"));
            let run_s = run.to_str().unwrap();
            let out = nngpvae(&["train", "--config", &config, "--seed", seed, "--out", run_s]);
            assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
            for f in ["checkpoint.nnts", "metrics.csv", "loss_trace.csv", "config.json"] {
                assert!(run.join(f).exists(), "{f}");
            }

            let out = nngpvae(&["gen-data", "--config", &config, "--seed", seed, "--out", data]);
            assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
            let ckpt = run.join("checkpoint.nnts");
            let out = nngpvae(&["eval", "--checkpoint", ckpt.to_str().unwrap(), "--data", data, "--out", run_s]);
            assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
            let metrics = std::fs::read_to_string(run.join("metrics.csv")).unwrap();
            let lines: Vec<&str> = metrics.lines().collect();
            assert_eq!(lines.len(), 2);
            assert!(lines[0].starts_with("run_id,model,H,seed"));
            let fields: Vec<&str> = lines[1].split(',').collect();
            assert_eq!(fields[1], model);
            assert_eq!(fields[3], seed);
            assert!(fields[5..10].iter().all(|v| v.parse::<f64>().unwrap().is_finite()));
            rows.push(lines[1].to_owned());
        }
    }
    assert_eq!(rows.len(), 4);

    let query = dir.path().join("query.nnts");
    let q = nngpvae::data::Tensor { shape: vec![3, 1], data: vec![0.5, 10.5, 45.0] };
    nngpvae::data::write_tensors(&query, &[("X".to_owned(), q)]).unwrap();
    let pred = dir.path().join("pred.nnts");
    let ckpt = dir.path().join("gpvae_spa-1").join("checkpoint.nnts");
    let out = nngpvae(&[
        "predict",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--data",
        data,
        "--query",
        query.to_str().unwrap(),
        "--samples",
        "5",
        "--out",
        pred.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let t = nngpvae::data::tensor_map(nngpvae::data::read_tensors(&pred).unwrap());
    assert_eq!(t["latent_mean"].shape, vec![3, 2]);
    assert!(t["latent_variance"].data.iter().all(|&v| v > 0.0));
}

#[test]
fn training_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "gpvae_spa", 3);
    let mut traces = Vec::new();
    for name in ["a", "b"] {
        let run = dir.path().join(name);
        let out = nngpvae(&["train", "--config", &config, "--seed", "9", "--out", run.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0));
        traces.push((std::fs::read(run.join("loss_trace.csv")).unwrap(), std::fs::read(run.join("checkpoint.nnts")).unwrap()));
    }
    assert_eq!(traces[0], traces[1]);
}
