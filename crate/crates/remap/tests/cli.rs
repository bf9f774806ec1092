mod support;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use clap::Parser;
use remap::cli::{Cli, Command as Sub};
use remap::event::Event;
use remap::export::read_distances;
use remap::journal;
use remap::session::{load, Session, JOURNAL_FILE};
use remap_core::{Metric, TrainingConfig};
use support::{assert_same_content, small_dataset};

fn remap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_remap")).args(args).env_remove("REMAP_SESSION_DIR").output().unwrap()
}

fn run_preprocess(manifest: &Path, session: &Path, count: &str) -> Output {
    remap(&[
        "preprocess",
        "--dataset",
        manifest.to_str().unwrap(),
        "--count",
        count,
        "--epochs",
        "2",
        "--surrogate",
        "--session",
        session.to_str().unwrap(),
    ])
}

#[test]
fn default_flags() {
    let cli = Cli::try_parse_from(["remap", "preprocess", "--dataset", "m.json", "--session", "s"]).unwrap();
    let Sub::Preprocess(args) = cli.command else { panic!() };
    assert_eq!((args.count, args.epochs, args.seed, args.surrogate), (100, 10, 0, false));
    let cli = Cli::try_parse_from(["remap", "serve", "--session", "s"]).unwrap();
    let Sub::Serve(args) = cli.command else { panic!() };
    assert_eq!((args.port, args.workers), (8080, 1));
}

#[test]
fn exit_codes() {
    assert_eq!(remap(&[]).status.code(), Some(1));
    assert_eq!(remap(&["preprocess", "--bogus"]).status.code(), Some(1));
    assert_eq!(remap(&["export", "--session", "x", "--what", "pictures", "--out", "y"]).status.code(), Some(1));
    assert_eq!(remap(&["--help"]).status.code(), Some(0));

    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("missing");
    let out = remap(&["serve", "--session", missing.to_str().unwrap(), "--port", "0"]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("does not exist"), "{stderr}");
    let out = remap(&["export", "--session", missing.to_str().unwrap(), "--what", "models", "--out", "x"]);
    assert_eq!(out.status.code(), Some(2));
    let bad = tmp.path().join("bad.json");
    fs::write(&bad, "{}").unwrap();
    assert_eq!(run_preprocess(&bad, &tmp.path().join("s"), "3").status.code(), Some(2));
}

#[test]
fn session_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = small_dataset(&tmp.path().join("data"));
    let dir = tmp.path().join("s");
    assert!(run_preprocess(&manifest, &dir, "3").status.success());
    let out_path = tmp.path().join("models.json");
    let out = Command::new(env!("CARGO_BIN_EXE_remap"))
        .args(["export", "--what", "models", "--out", out_path.to_str().unwrap()])
        .env("REMAP_SESSION_DIR", &dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let models: serde_json::Value = serde_json::from_str(&fs::read_to_string(out_path).unwrap()).unwrap();
    assert_eq!(models.as_array().unwrap().len(), 3);
}

#[test]
fn surrogate_run_completes_and_resumes_by_hash() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = small_dataset(&tmp.path().join("data"));
    let dir = tmp.path().join("s");
    let out = run_preprocess(&manifest, &dir, "5");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(stdout.lines().filter(|l| l.starts_with('[')).count(), 5);
    let full = load(&dir).unwrap();
    assert_eq!(full.complete_models().count(), 5);
    assert!(full.embeddings.len() == 2);

    // simulate a kill after the third finished record
    let path = dir.join(JOURNAL_FILE);
    let entries = journal::read(&path).unwrap().entries;
    let cut = entries
        .iter()
        .enumerate()
        .filter(|(_, e)| matches!(e.event, Event::RecordFinished { .. }))
        .nth(2)
        .map(|(i, _)| i + 1)
        .unwrap();
    let text = fs::read_to_string(&path).unwrap();
    let kept: String = text.split_inclusive('\n').take(cut).collect();
    fs::write(&path, format!("{kept}{{\"seq\":{},\"ev", cut + 1)).unwrap();

    let out = run_preprocess(&manifest, &dir, "5");
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(stdout.matches("already trained").count(), 3, "{stdout}");
    assert_eq!(stdout.lines().filter(|l| l.starts_with('[') && l.contains("params=")).count(), 2);
    let resumed = load(&dir).unwrap();
    assert_eq!(resumed.models, full.models.iter().map(|m| {
        let mut m = m.clone();
        m.architecture.created_at = resumed.model(&m.id).unwrap().architecture.created_at;
        m.record.as_mut().unwrap().wall_time_ms = resumed.model(&m.id).unwrap().record.as_ref().unwrap().wall_time_ms;
        m
    }).collect::<Vec<_>>());
    let records = journal::read(&path).unwrap().entries.iter().filter(|e| matches!(e.event, Event::RecordFinished { .. })).count();
    assert_eq!(records, 5);

    // a third run trains nothing; mismatched flags are refused
    let out = run_preprocess(&manifest, &dir, "5");
    assert_eq!(String::from_utf8(out.stdout).unwrap().matches("already trained").count(), 5);
    let out = remap(&[
        "preprocess", "--dataset", manifest.to_str().unwrap(), "--count", "5", "--epochs", "3", "--surrogate",
        "--session", dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn export_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = small_dataset(&tmp.path().join("data"));
    let dir = tmp.path().join("s");
    assert!(run_preprocess(&manifest, &dir, "6").status.success());
    let state = load(&dir).unwrap();
    for (metric, name) in [(Metric::Structural, "structural"), (Metric::Prediction, "prediction")] {
        let out = tmp.path().join(format!("{name}.csv"));
        let o = remap(&["export", "--session", dir.to_str().unwrap(), "--what", "distances", "--metric", name, "--out", out.to_str().unwrap()]);
        assert!(o.status.success());
        assert_eq!(&read_distances(&out, metric).unwrap(), state.matrix(metric));
    }
    let emb = tmp.path().join("emb.csv");
    assert!(remap(&["export", "--session", dir.to_str().unwrap(), "--what", "embeddings", "--out", emb.to_str().unwrap()]).status.success());
    let text = fs::read_to_string(&emb).unwrap();
    assert_eq!(text.lines().next(), Some("id,projection,x,y"));
    assert_eq!(text.lines().count(), 1 + 3 * 6);
    let (id, x) = {
        let row: Vec<&str> = text.lines().find(|l| l.contains(",structural,")).unwrap().split(',').collect();
        (row[0].to_string(), row[2].parse::<f64>().unwrap())
    };
    assert_eq!(state.embeddings[&remap_core::Projection::Structural].get(&id).unwrap().0, x);
}

#[test]
fn export_of_an_empty_session_writes_headers() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = small_dataset(&tmp.path().join("data"));
    let parsed = remap::Manifest::read(&manifest).unwrap().resolved(&tmp.path().join("data"));
    let dir = tmp.path().join("s");
    Session::create(&dir, parsed, TrainingConfig::default()).unwrap();
    let d = dir.to_str().unwrap();
    let file = |n: &str| tmp.path().join(n).to_str().unwrap().to_string();
    assert!(remap(&["export", "--session", d, "--what", "distances", "--out", &file("d.csv")]).status.success());
    assert!(remap(&["export", "--session", d, "--what", "embeddings", "--out", &file("e.csv")]).status.success());
    assert!(remap(&["export", "--session", d, "--what", "models", "--out", &file("m.json")]).status.success());
    assert_eq!(fs::read_to_string(file("d.csv")).unwrap(), "id\n");
    assert_eq!(fs::read_to_string(file("e.csv")).unwrap(), "id,projection,x,y\n");
    assert_eq!(fs::read_to_string(file("m.json")).unwrap().trim(), "[]");
    assert!(read_distances(Path::new(&file("d.csv")), Metric::Structural).unwrap().is_empty());
    assert_same_content(&load(&dir).unwrap(), &load(&dir).unwrap());
}
