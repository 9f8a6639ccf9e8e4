//! File-level pipeline stages shared by the command-line tool and the tests.
//!
//! Every stage writes its outputs into one directory together with a manifest
//! recording the master seed, the config hash and a SHA-256 digest per file.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::dataprep::io::{read_examples, read_trips_file, write_examples, write_skip_report, write_trips_file};
use crate::dataprep::{build_examples, build_query, fit_normalizer, TrainingExample, TripRecord, TripStore};
use crate::error::{Error, Result};
use crate::evalkit::{
    evaluate_grid, grid_pairs, write_long_csv, write_query_log, write_report_csv, GridReport, HistoricalMean, Persistence, Predictor,
};
use crate::seq2seq::{load_bank, save_bank, train_bank, Bank, BankLayout, BankOutcome, BankSpec, ModelBank, ModelKind, Prediction};
use crate::simulator::{simulate_dataset, write_events_csv};

pub const TRIPS_CSV: &str = "trips.csv";
pub const EVENTS_CSV: &str = "events.csv";
pub const TRAIN_EXAMPLES: &str = "examples_train.jsonl";
pub const TEST_EXAMPLES: &str = "examples_test.jsonl";
pub const SKIPPED_CSV: &str = "skipped.csv";
pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const LOSS_CURVES_CSV: &str = "loss_curves.csv";
pub const REPORT_CSV: &str = "report.csv";
pub const REPORT_LONG_CSV: &str = "report_long.csv";
pub const QUERY_LOG_CSV: &str = "queries.csv";

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

#[derive(Debug, Clone, Serialize)]
struct Manifest<'a, T: Serialize> {
    command: &'a str,
    seed: u64,
    config_sha256: String,
    files: BTreeMap<String, String>,
    summary: &'a T,
}

fn write_manifest<T: Serialize>(cfg: &RunConfig, out: &Path, command: &str, files: &[PathBuf], summary: &T) -> Result<PathBuf> {
    let mut digests = BTreeMap::new();
    for f in files {
        let rel = f.strip_prefix(out).unwrap_or(f).to_string_lossy().replace('\\', "/");
        digests.insert(rel, sha256_file(f)?);
    }
    let m = Manifest {
        command,
        seed: cfg.seed,
        config_sha256: cfg.hash(),
        files: digests,
        summary,
    };
    let path = out.join(format!("{command}_manifest.json"));
    let mut w = BufWriter::new(File::create(&path)?);
    serde_json::to_writer_pretty(&mut w, &m)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(path)
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Usage(format!("cannot create output directory {}: {e}", dir.display())))
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateSummary {
    pub trips: usize,
    pub events: usize,
}

/// Writes the simulated trip and event CSVs.
pub fn simulate(cfg: &RunConfig, out: &Path) -> Result<SimulateSummary> {
    cfg.validate()?;
    ensure_dir(out)?;
    let ds = simulate_dataset(&cfg.sim_config())?;
    let trips_path = out.join(TRIPS_CSV);
    write_trips_file(&trips_path, &ds.trips)?;
    let events_path = out.join(EVENTS_CSV);
    let mut w = BufWriter::new(File::create(&events_path)?);
    write_events_csv(&mut w, &ds.events)?;
    w.flush()?;
    let summary = SimulateSummary {
        trips: ds.trips.len(),
        events: ds.events.len(),
    };
    write_manifest(cfg, out, "simulate", &[trips_path, events_path], &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, Serialize)]
pub struct BankCount {
    pub bank: String,
    pub train: usize,
    pub test: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct PrepareSummary {
    pub train_examples: usize,
    pub test_examples: usize,
    pub skipped: usize,
    /// Calendar week held out for testing.
    pub test_week: u32,
    pub per_bank: Vec<BankCount>,
}

/// Last calendar week present in the data; examples from it form the test set.
fn last_week(trips: &[TripRecord]) -> Result<u32> {
    let first = trips.iter().map(|t| t.week()).min();
    let last = trips.iter().map(|t| t.week()).max();
    match (first, last) {
        (Some(a), Some(b)) if b > a => Ok(b),
        (Some(_), Some(_)) => Err(Error::Data(
            "dataset spans a single week; a held-out test week needs at least two".into(),
        )),
        _ => Err(Error::Data("dataset contains no trips".into())),
    }
}

/// Builds examples for every covered position and splits them by week.
pub fn prepare(cfg: &RunConfig, trips_path: &Path, out: &Path) -> Result<PrepareSummary> {
    cfg.validate()?;
    let trips = read_trips_file(trips_path)?;
    if trips.is_empty() {
        return Err(Error::Data(format!("{} contains no trips", trips_path.display())));
    }
    let route = cfg.route;
    let layout = cfg.layout()?;
    let test_week = last_week(&trips)?;
    let built = build_examples(&trips, &route, layout.first()..=layout.last(), cfg.prepare)?;
    let (test, train): (Vec<TrainingExample>, Vec<TrainingExample>) =
        built.examples.into_iter().partition(|e| e.provenance.day / 7 == test_week);

    ensure_dir(out)?;
    let mut files = Vec::new();
    for (name, set) in [(TRAIN_EXAMPLES, &train), (TEST_EXAMPLES, &test)] {
        let p = out.join(name);
        write_examples(BufWriter::new(File::create(&p)?), set)?;
        files.push(p);
    }
    let p = out.join(SKIPPED_CSV);
    write_skip_report(BufWriter::new(File::create(&p)?), &built.skipped)?;
    files.push(p);

    let per_bank = layout
        .banks
        .iter()
        .map(|b| BankCount {
            bank: b.label(),
            train: train.iter().filter(|e| b.contains(e.inputs.m)).count(),
            test: test.iter().filter(|e| b.contains(e.inputs.m)).count(),
        })
        .collect();
    let summary = PrepareSummary {
        train_examples: train.len(),
        test_examples: test.len(),
        skipped: built.skipped.len(),
        test_week,
        per_bank,
    };
    write_manifest(cfg, out, "prepare", &files, &summary)?;
    Ok(summary)
}

pub fn read_examples_file(path: &Path) -> Result<Vec<TrainingExample>> {
    read_examples(BufReader::new(
        File::open(path).map_err(|e| Error::Usage(format!("cannot open {}: {e}", path.display())))?,
    ))
}

#[derive(Debug, Clone, Serialize)]
pub struct KindOutcome {
    pub kind: ModelKind,
    pub banks: Vec<BankOutcome>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainSummary {
    pub validation_week: Option<u32>,
    pub kinds: Vec<KindOutcome>,
}

/// Trains one model bank per requested kind and writes checkpoints plus loss curves.
///
/// The last week present in the training examples is held out for early
/// stopping when there are at least two weeks.
pub fn train(cfg: &RunConfig, examples_path: &Path, out: &Path, kinds: &[ModelKind]) -> Result<TrainSummary> {
    cfg.validate()?;
    let examples = read_examples_file(examples_path)?;
    if examples.is_empty() {
        return Err(Error::Data(format!("{} contains no examples", examples_path.display())));
    }
    let layout = cfg.layout()?;
    if let Some(e) = examples.iter().find(|e| e.inputs.m + e.targets.len() != cfg.route.n_sections) {
        return Err(Error::Data(format!(
            "example for trip {} does not match a {}-section route",
            e.provenance.trip_id, cfg.route.n_sections
        )));
    }
    if !examples.iter().any(|e| layout.bank_for(e.inputs.m).is_some()) {
        return Err(Error::Data(format!("no example falls in a covered bank ({layout})")));
    }
    let weeks: Vec<u32> = examples.iter().map(|e| e.provenance.day / 7).collect();
    let (lo, hi) = (*weeks.iter().min().unwrap(), *weeks.iter().max().unwrap());
    let validation_week = (hi > lo).then_some(hi);
    let fit_set: Vec<TrainingExample> = examples
        .iter()
        .filter(|e| Some(e.provenance.day / 7) != validation_week)
        .cloned()
        .collect();
    let norm = fit_normalizer(&fit_set)?;

    let ckpt_dir = out.join(CHECKPOINT_DIR);
    ensure_dir(&ckpt_dir)?;
    let mut files = Vec::new();
    let mut loss_rows = Vec::new();
    let mut summary = TrainSummary {
        validation_week,
        kinds: Vec::new(),
    };
    for &kind in kinds {
        let spec = BankSpec {
            kind,
            enc_hidden: cfg.model.enc_hidden,
            dec_hidden: cfg.model.dec_hidden(kind),
            norm,
            seed: cfg.train_seed(),
        };
        log::info!("training {kind} on {} examples", examples.len());
        let (bank, outcomes) = train_bank(&spec, &layout, &examples, &cfg.train, |e| {
            Some(e.provenance.day / 7) == validation_week
        })?;
        if bank.models.is_empty() {
            return Err(Error::Data(format!("no bank of {kind} had training examples")));
        }
        files.extend(save_bank(&bank, &ckpt_dir)?);
        for o in &outcomes {
            if let BankOutcome::Trained { bank, report } = o {
                for h in &report.history {
                    loss_rows.push((kind, *bank, h.epoch, h.train_loss, h.val_loss));
                }
            }
        }
        summary.kinds.push(KindOutcome { kind, banks: outcomes });
    }
    let loss_path = out.join(LOSS_CURVES_CSV);
    let mut wr = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(&loss_path)?;
    wr.write_record(["kind", "bank", "epoch", "train_loss", "val_loss"])?;
    for (kind, bank, epoch, tl, vl) in loss_rows {
        wr.write_record([
            kind.to_string(),
            bank.label(),
            epoch.to_string(),
            tl.to_string(),
            vl.map(|v| v.to_string()).unwrap_or_default(),
        ])?;
    }
    wr.flush()?;
    drop(wr);
    files.push(loss_path);
    write_manifest(cfg, out, "train", &files, &summary)?;
    Ok(summary)
}

pub fn load_models(cfg: &RunConfig, ckpt_dir: &Path, kind: ModelKind) -> Result<ModelBank> {
    load_bank(ckpt_dir, kind, &cfg.layout()?)
}

#[derive(Debug, Clone, Serialize)]
pub struct EvaluateSummary {
    pub pairs: usize,
    pub methods: Vec<String>,
    pub queries: usize,
}

/// Scores the requested model kinds (and baselines) on the test examples over the (i, j) grid.
///
/// `trips_path` supplies the training weeks for the historical-mean baseline.
pub fn evaluate(
    cfg: &RunConfig,
    ckpt_dir: &Path,
    test_path: &Path,
    trips_path: Option<&Path>,
    out: &Path,
    kinds: &[ModelKind],
) -> Result<GridReport> {
    cfg.validate()?;
    let test = read_examples_file(test_path)?;
    if test.is_empty() {
        return Err(Error::Data(format!("{} contains no test examples", test_path.display())));
    }
    let banks: Vec<(ModelKind, ModelBank)> = kinds
        .iter()
        .map(|&k| Ok((k, load_models(cfg, ckpt_dir, k)?)))
        .collect::<Result<_>>()?;
    let hist = match (cfg.eval.baselines, trips_path) {
        (true, Some(p)) => {
            let trips = read_trips_file(p)?;
            let test_week = test.iter().map(|e| e.provenance.day / 7).min().unwrap_or(0);
            let history: Vec<TripRecord> = trips.into_iter().filter(|t| t.week() < test_week).collect();
            Some(HistoricalMean::fit(&history)?)
        }
        _ => None,
    };
    let mut methods: Vec<(&str, &dyn Predictor)> = banks.iter().map(|(k, b)| (k.as_str(), b as &dyn Predictor)).collect();
    if cfg.eval.baselines {
        methods.push(("persistence", &Persistence));
    }
    if let Some(h) = &hist {
        methods.push(("hist_mean", h));
    }
    let pairs = grid_pairs(cfg.route.n_sections, &cfg.eval.i_values, cfg.eval.j_step)?;
    let report = evaluate_grid(&methods, &test, &pairs, cfg.eval.alpha)?;

    ensure_dir(out)?;
    let mut files = Vec::new();
    let p = out.join(REPORT_CSV);
    write_report_csv(BufWriter::new(File::create(&p)?), &report.rows)?;
    files.push(p);
    let p = out.join(REPORT_LONG_CSV);
    write_long_csv(BufWriter::new(File::create(&p)?), &report.rows)?;
    files.push(p);
    let p = out.join(QUERY_LOG_CSV);
    write_query_log(BufWriter::new(File::create(&p)?), &report.log)?;
    files.push(p);
    let summary = EvaluateSummary {
        pairs: pairs.len(),
        methods: methods.iter().map(|(n, _)| n.to_string()).collect(),
        queries: report.log.len(),
    };
    write_manifest(cfg, out, "evaluate", &files, &summary)?;
    Ok(report)
}

/// Predicts the rest of trip `trip_id` from position `m`, querying at its entry into section `m + 1`.
pub fn predict(cfg: &RunConfig, ckpt_dir: &Path, trips_path: &Path, trip_id: u64, m: usize, kind: ModelKind) -> Result<Prediction> {
    cfg.validate()?;
    let layout: BankLayout = cfg.layout()?;
    let bank: Bank = layout.bank_for(m).ok_or_else(|| layout.coverage_error(m))?;
    let trips = read_trips_file(trips_path)?;
    let store = TripStore::new(trips);
    let trip = store
        .find(trip_id)
        .ok_or_else(|| Error::Usage(format!("unknown trip id {trip_id}")))?;
    if trip.n_sections() != cfg.route.n_sections {
        return Err(Error::Data(format!(
            "trip {trip_id} has {} sections, route has {}",
            trip.n_sections(),
            cfg.route.n_sections
        )));
    }
    let (q, _) = build_query(&store, trip, m, cfg.prepare.missing_prev_bus).map_err(|(reason, section)| {
        Error::Data(format!(
            "cannot assemble inputs for trip {trip_id} at m={m}: {reason}{}",
            section.map(|s| format!(" (section {s})")).unwrap_or_default()
        ))
    })?;
    let models = load_models(cfg, ckpt_dir, kind)?;
    debug_assert!(models.model_for(m).map(|md| md.bank == bank).unwrap_or(false));
    models.predict(&q)
}
