use std::collections::BTreeSet;
use std::path::Path;
use std::process::Command;

use mclab::expcli::{run, sha256_hex, ExperimentConfig, Overrides, RawConfig, RunManifest, RunStatus};

fn config(json: &str, out: &Path) -> ExperimentConfig {
    let raw: RawConfig = serde_json::from_str(json).unwrap();
    ExperimentConfig::resolve(raw, &Overrides { out_dir: Some(out.to_path_buf()), ..Default::default() }).unwrap()
}

fn mclab() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mclab"))
}

#[test]
fn manifest_lists_and_hashes_every_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(r#"{"experiment": "fig4_mask_compare", "seed": 2, "desk": true, "svg": true}"#, dir.path());
    let m = run(&cfg).unwrap();
    assert_eq!(m.status, RunStatus::Ok);
    let on_disk: BTreeSet<String> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|f| f != "manifest.json")
        .collect();
    let listed: BTreeSet<String> = m.outputs.iter().map(|o| o.path.clone()).collect();
    assert_eq!(on_disk, listed);
    for o in &m.outputs {
        let bytes = std::fs::read(dir.path().join(&o.path)).unwrap();
        assert_eq!(sha256_hex(&bytes), o.sha256);
    }
    let echoed: RunManifest = serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(echoed.config, cfg);
}

#[test]
fn gram_eigenvalues_are_descending_and_cross_eps() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(r#"{"experiment": "fig2_gram_eigs", "seed": 3}"#, dir.path());
    assert_eq!(cfg.n_grid, vec![50, 150]);
    run(&cfg).unwrap();
    let csv = std::fs::read_to_string(dir.path().join("fig2_gram_eigs.csv")).unwrap();
    let mut series: std::collections::BTreeMap<(String, usize), Vec<f64>> = Default::default();
    for line in csv.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        series.entry((f[0].to_string(), f[1].parse().unwrap())).or_default().push(f[3].parse().unwrap());
    }
    assert_eq!(series.len(), 10);
    for ((kind, n), ev) in &series {
        assert_eq!(ev.len(), *n);
        assert!(ev.windows(2).all(|w| w[0] >= w[1]), "{kind} N={n} not descending");
        if !matches!(kind.as_str(), "orthogonal_gaussian" | "cyclic") {
            let idx = ev.iter().position(|&e| e < f64::EPSILON);
            assert!(idx.is_some_and(|i| i < *n), "{kind} N={n}: no eps crossing");
        }
    }
}

#[test]
fn run_twice_gives_identical_hashes() {
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let json = r#"{"experiment": "custom", "seed": 9, "desk": true, "methods": ["naive", "osm", "osm_plus", "montecarlo"]}"#;
    let a = run(&config(json, d1.path())).unwrap();
    let b = run(&config(json, d2.path())).unwrap();
    assert_eq!(a.outputs, b.outputs);
}

#[test]
fn thread_count_does_not_change_outputs() {
    let cfg_dir = tempfile::tempdir().unwrap();
    let path = cfg_dir.path().join("c.toml");
    std::fs::write(&path, "experiment = \"fig4_mask_compare\"\nseed = 4\ndesk = true\nmasks = [\"uniform\"]\n").unwrap();
    let mut hashes = Vec::new();
    for threads in ["1", "3"] {
        let out = cfg_dir.path().join(format!("out{threads}"));
        let st = mclab()
            .env("MCLAB_THREADS", threads)
            .args(["run", "--config", path.to_str().unwrap(), "--out", out.to_str().unwrap()])
            .status()
            .unwrap();
        assert!(st.success());
        let m: RunManifest = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
        hashes.push(m.outputs);
    }
    assert_eq!(hashes[0], hashes[1]);
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"experiment": "custom"}"#).unwrap();
    assert_eq!(mclab().args(["run", "--config", bad.to_str().unwrap()]).status().unwrap().code(), Some(2));

    let typo = dir.path().join("typo.json");
    std::fs::write(&typo, r#"{"experiment": "custom", "seed": 1, "Tgrid": [5]}"#).unwrap();
    assert_eq!(mclab().args(["run", "--config", typo.to_str().unwrap()]).status().unwrap().code(), Some(2));

    let out = mclab().args(["compare", "--kind", "delay_shift", "--n", "3", "--methods", "naive,osm"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("tau,naive,osm,oracle\n"));

    let out = mclab().args(["compare", "--kind", "gaussian", "--n", "3", "--rho", "1.2"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    let out = mclab().args(["eigplot", "--kind", "cyclic", "--n", "5", "--rho", "0.9"]).output().unwrap();
    let text = String::from_utf8(out.stdout).unwrap();
    let moduli: Vec<f64> = text
        .lines()
        .skip(1)
        .map(|l| {
            let (re, im) = l.split_once(',').unwrap();
            re.parse::<f64>().unwrap().hypot(im.parse().unwrap())
        })
        .collect();
    assert_eq!(moduli.len(), 5);
    assert!(moduli.iter().all(|m| (m - 0.9).abs() < 1e-12));
}

#[test]
fn seed_override_applies() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.json");
    std::fs::write(&path, r#"{"experiment": "eigplot"}"#).unwrap();
    let out = dir.path().join("o");
    let st = mclab()
        .args(["run", "--config", path.to_str().unwrap(), "--seed", "11", "--desk", "--out", out.to_str().unwrap()])
        .status()
        .unwrap();
    assert!(st.success());
    let m: RunManifest = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m.config.seed, 11);
    assert_eq!(m.config.generator.n, 30);
}
