use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL_CONFIG: &str = r#"{
  "seed": 5,
  "route": {"n_sections": 14, "section_length_m": 800.0},
  "simulator": {"weeks": 3, "trips_per_day": 10, "event_origin_min": 4},
  "train": {"max_epochs": 2},
  "eval": {"i_values": [5, 10]}
}"#;

fn edbat(dir: &Path, args: &[&str]) -> Output {
    let cfg = dir.join("config.json");
    if !cfg.exists() {
        fs::write(&cfg, SMALL_CONFIG).unwrap();
    }
    Command::new(env!("CARGO_BIN_EXE_edbat"))
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(o: &Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn err(o: &Output) -> String {
    assert!(!o.status.success(), "unexpected success: {}", String::from_utf8_lossy(&o.stdout));
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn lines(path: &Path) -> BTreeSet<String> {
    fs::read_to_string(path).unwrap().lines().map(str::to_owned).collect()
}

#[test]
fn simulate_counts_and_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    ok(&edbat(a.path(), &["simulate"]));
    ok(&edbat(b.path(), &["simulate"]));
    let trips = fs::read_to_string(a.path().join("out/trips.csv")).unwrap();
    // 3 weeks x 6 service days x 10 trips x 14 sections, plus the header
    assert_eq!(trips.lines().count(), 3 * 6 * 10 * 14 + 1);
    for f in ["trips.csv", "events.csv", "simulate_manifest.json"] {
        assert_eq!(
            fs::read(a.path().join("out").join(f)).unwrap(),
            fs::read(b.path().join("out").join(f)).unwrap(),
            "{f}"
        );
    }
    let manifest = fs::read_to_string(a.path().join("out/simulate_manifest.json")).unwrap();
    assert!(manifest.contains("\"seed\": 5") && manifest.contains("config_sha256") && manifest.contains("trips.csv"));

    ok(&edbat(b.path(), &["--seed", "6", "simulate"]));
    assert_ne!(
        fs::read(a.path().join("out/trips.csv")).unwrap(),
        fs::read(b.path().join("out/trips.csv")).unwrap()
    );
}

#[test]
fn full_pipeline_with_single_kind() {
    let d = tempfile::tempdir().unwrap();
    let dir = d.path();
    ok(&edbat(dir, &["simulate"]));
    let summary = ok(&edbat(dir, &["prepare"]));
    assert!(summary.contains("03-07") && summary.contains("08-13"), "{summary}");

    ok(&edbat(dir, &["--kind", "edb", "train"]));
    let ckpts: Vec<String> = fs::read_dir(dir.join("out/checkpoints"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    assert_eq!(ckpts.len(), 2, "{ckpts:?}");
    assert!(ckpts.iter().all(|n| n.starts_with("edb")), "{ckpts:?}");
    assert!(fs::read_to_string(dir.join("out/loss_curves.csv"))
        .unwrap()
        .starts_with("kind,bank,epoch,train_loss,val_loss\n"));

    let report = ok(&edbat(dir, &["--kind", "edb", "evaluate"]));
    assert!(report.contains("edb") && report.contains("persistence") && report.contains("hist_mean"));
    assert!(dir.join("out/report.csv").exists() && dir.join("out/report_long.csv").exists() && dir.join("out/queries.csv").exists());

    // a last-week trip, predicted from the final covered position
    let trip_id = fs::read_to_string(dir.join("out/trips.csv"))
        .unwrap()
        .lines()
        .last()
        .unwrap()
        .split(',')
        .next()
        .unwrap()
        .to_owned();
    let pred = ok(&edbat(dir, &["--kind", "edb", "predict", "--trip-id", &trip_id, "--m", "13"]));
    let rows: Vec<&str> = pred.lines().skip(1).collect();
    assert_eq!(rows.len(), 1, "{pred}");
    let cols: Vec<f64> = rows[0].split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(cols[0], 14.0);
    assert!(cols[1] > 0.0 && cols[2] > cols[1]);

    let pred = ok(&edbat(dir, &["--kind", "edb", "predict", "--trip-id", &trip_id, "--m", "4"]));
    assert_eq!(pred.lines().count(), 1 + 14 - 4);

    let e = err(&edbat(dir, &["--kind", "edb", "predict", "--trip-id", &trip_id, "--m", "2"]));
    assert!(e.contains("3-7"), "{e}");
    let e = err(&edbat(dir, &["--kind", "edb", "predict", "--trip-id", "999999", "--m", "5"]));
    assert!(e.contains("unknown trip id"), "{e}");
    let e = err(&edbat(dir, &["--kind", "edu", "evaluate"]));
    assert!(e.contains("edu") && e.contains("03-07"), "{e}");
}

#[test]
fn brute_force_prepare_matches_indexed() {
    let d = tempfile::tempdir().unwrap();
    let dir = d.path();
    ok(&edbat(dir, &["simulate"]));
    ok(&edbat(dir, &["prepare"]));
    let fast = (
        lines(&dir.join("out/examples_train.jsonl")),
        lines(&dir.join("out/examples_test.jsonl")),
        lines(&dir.join("out/skipped.csv")),
    );
    ok(&edbat(dir, &["--brute-force", "prepare"]));
    let slow = (
        lines(&dir.join("out/examples_train.jsonl")),
        lines(&dir.join("out/examples_test.jsonl")),
        lines(&dir.join("out/skipped.csv")),
    );
    assert!(!fast.0.is_empty());
    assert_eq!(fast, slow);
}

#[test]
fn errors_exit_nonzero_with_messages() {
    let d = tempfile::tempdir().unwrap();
    let dir = d.path();
    fs::create_dir_all(dir.join("out")).unwrap();

    fs::write(dir.join("empty.csv"), "trip_id,day,weekday,section,entry_time_s,travel_time_s\n").unwrap();
    let e = err(&edbat(dir, &["prepare", "--trips", dir.join("empty.csv").to_str().unwrap()]));
    assert!(e.contains("no trips"), "{e}");

    fs::write(
        dir.join("bad.csv"),
        "trip_id,day,weekday,section,entry_time_s,travel_time_s\n1,0,0,1,100,abc\n",
    )
    .unwrap();
    let e = err(&edbat(dir, &["prepare", "--trips", dir.join("bad.csv").to_str().unwrap()]));
    assert!(e.contains("row 2"), "{e}");

    let e = err(&edbat(dir, &["train", "--examples", dir.join("missing.jsonl").to_str().unwrap()]));
    assert!(e.contains("missing.jsonl"), "{e}");

    let bad_cfg = dir.join("bad.json");
    fs::write(&bad_cfg, "{\n  \"train\": {\"epochs\": 3}\n}").unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_edbat"))
        .args(["--config", bad_cfg.to_str().unwrap(), "simulate"])
        .output()
        .unwrap();
    let e = err(&o);
    assert!(e.contains("epochs") && e.contains("line 2"), "{e}");

    let e = err(&edbat(dir, &["predict", "--trip-id", "1", "--m", "5"]));
    assert!(e.contains("--kind"), "{e}");
}
