use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use edbat::pipeline::{self, CHECKPOINT_DIR, TEST_EXAMPLES, TRAIN_EXAMPLES, TRIPS_CSV};
use edbat::seq2seq::{BankOutcome, ModelKind};
use edbat::RunConfig;

/// Bus travel-time forecasting with GRU encoder-decoder models.
///
/// Configuration precedence: built-in defaults, then `--config`, then flags.
#[derive(Parser, Debug)]
#[command(name = "edbat", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// JSON run configuration; missing fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the config value.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads; defaults to the available cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Model kinds to train, evaluate or use for prediction.
    #[arg(long, global = true, value_enum, default_value_t = KindArg::Both)]
    kind: KindArg,
    /// Use exhaustive scans instead of the search indexes when building examples.
    #[arg(long, global = true)]
    brute_force: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum KindArg {
    Edu,
    Edb,
    Both,
}

impl KindArg {
    fn kinds(self) -> Vec<ModelKind> {
        match self {
            KindArg::Edu => vec![ModelKind::Edu],
            KindArg::Edb => vec![ModelKind::Edb],
            KindArg::Both => vec![ModelKind::Edu, ModelKind::Edb],
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate trips and congestion events.
    Simulate,
    /// Build training and test examples from a trip CSV.
    Prepare {
        /// Trip CSV; defaults to <out>/trips.csv.
        #[arg(long)]
        trips: Option<PathBuf>,
    },
    /// Train one model bank per kind.
    Train {
        /// Training examples; defaults to <out>/examples_train.jsonl.
        #[arg(long)]
        examples: Option<PathBuf>,
    },
    /// Predict the remaining section travel times of one trip.
    Predict {
        /// Checkpoint directory; defaults to <out>/checkpoints.
        #[arg(long)]
        checkpoints: Option<PathBuf>,
        /// Trip CSV; defaults to <out>/trips.csv.
        #[arg(long)]
        trips: Option<PathBuf>,
        #[arg(long)]
        trip_id: u64,
        /// Current position: the bus has completed sections 1..=m.
        #[arg(long)]
        m: usize,
    },
    /// Score models and baselines over the (i, j) grid on the test week.
    Evaluate {
        #[arg(long)]
        checkpoints: Option<PathBuf>,
        /// Test examples; defaults to <out>/examples_test.jsonl.
        #[arg(long)]
        examples: Option<PathBuf>,
        /// Trip CSV for the historical-mean baseline; defaults to <out>/trips.csv when present.
        #[arg(long)]
        trips: Option<PathBuf>,
    },
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if common.brute_force {
        cfg.prepare.brute_force = true;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn or_default(p: &Option<PathBuf>, out: &Path, name: &str) -> PathBuf {
    p.clone().unwrap_or_else(|| out.join(name))
}

fn run(cli: Cli) -> Result<()> {
    let c = &cli.common;
    if let Some(n) = c.threads {
        if n == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let cfg = load_config(c)?;
    let out = &c.out;
    match &cli.command {
        Command::Simulate => {
            let s = pipeline::simulate(&cfg, out)?;
            println!("wrote {} trips and {} events to {}", s.trips, s.events, out.display());
        }
        Command::Prepare { trips } => {
            let s = pipeline::prepare(&cfg, &or_default(trips, out, TRIPS_CSV), out)?;
            println!(
                "train examples: {}  test examples: {}  skipped: {}  test week: {}",
                s.train_examples, s.test_examples, s.skipped, s.test_week
            );
            println!("bank\ttrain\ttest");
            for b in &s.per_bank {
                println!("{}\t{}\t{}", b.bank, b.train, b.test);
            }
        }
        Command::Train { examples } => {
            let s = pipeline::train(&cfg, &or_default(examples, out, TRAIN_EXAMPLES), out, &c.kind.kinds())?;
            for k in &s.kinds {
                for b in &k.banks {
                    match b {
                        BankOutcome::Trained { .. } => println!("{} {b}", k.kind),
                        BankOutcome::Skipped { .. } => eprintln!("warning: {} {b}", k.kind),
                    }
                }
            }
        }
        Command::Predict {
            checkpoints,
            trips,
            trip_id,
            m,
        } => {
            let kind = match c.kind {
                KindArg::Edu => ModelKind::Edu,
                KindArg::Edb => ModelKind::Edb,
                KindArg::Both => bail!("predict needs a single model: pass --kind edu or --kind edb"),
            };
            let ckpt = or_default(checkpoints, out, CHECKPOINT_DIR);
            let p = pipeline::predict(&cfg, &ckpt, &or_default(trips, out, TRIPS_CSV), *trip_id, *m, kind)?;
            let stdout = std::io::stdout();
            let mut w = stdout.lock();
            writeln!(w, "section,travel_time_s,arrival_s")?;
            for ((s, tt), a) in p.sections.iter().zip(&p.travel_times).zip(&p.arrivals) {
                writeln!(w, "{s},{tt:.3},{a:.3}")?;
            }
        }
        Command::Evaluate {
            checkpoints,
            examples,
            trips,
        } => {
            let ckpt = or_default(checkpoints, out, CHECKPOINT_DIR);
            let trips = trips.clone().or_else(|| Some(out.join(TRIPS_CSV)).filter(|p| p.exists()));
            let report = pipeline::evaluate(
                &cfg,
                &ckpt,
                &or_default(examples, out, TEST_EXAMPLES),
                trips.as_deref(),
                out,
                &c.kind.kinds(),
            )?;
            println!("i\tj\tmethod\tn\tmae_s\tmape_pct\tvs_edu\tvs_edb");
            for r in &report.rows {
                let f = |v: Option<f64>| v.map(|x| format!("{x:.2}")).unwrap_or_else(|| "-".into());
                println!(
                    "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                    r.i,
                    r.j,
                    r.method,
                    r.n,
                    f(r.mae_s),
                    f(r.mape_pct),
                    r.sig_vs_edu,
                    r.sig_vs_edb
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
