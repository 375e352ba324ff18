//! Command-line driver for regret, bandit and boosting runs.
//!
//! ```text
//! folklore --mode regression --algo folklore --d 5 --k 3 --b 2 --t 10000 --seeds 3 --out run.csv
//! ```
//!
//! Exit codes: 0 on success, 2 for configuration errors, 3 for numerical failures.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use folklore::harness::{
    export, hessian_dominance_counterexample, run_bandit_episode, run_boosting_episode, run_episode, Algo,
    BoostingSpec, Comparator, EpisodeOptions, Format, StreamMode, StreamRecord, StreamSpec,
};
use folklore::Error;
use serde_json::json;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Regression,
    Bandit,
    Boosting,
    Diagnostics,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AlgoArg {
    Folklore,
    Ogd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ComparatorArg {
    Generator,
    BatchFit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StreamArg {
    RealizableSoft,
    RealizableHard,
    AdversarialRotating,
}

#[derive(Debug, Parser)]
#[command(name = "folklore", version, about = "Online multiclass logistic regression runs")]
struct Args {
    #[arg(long, value_enum, default_value = "regression")]
    mode: Mode,
    #[arg(long, value_enum, default_value = "folklore")]
    algo: AlgoArg,
    /// Feature dimension.
    #[arg(long, default_value_t = 5)]
    d: usize,
    /// Number of classes.
    #[arg(long, default_value_t = 3)]
    k: usize,
    /// Comparator row-norm radius.
    #[arg(long, default_value_t = 1.0)]
    b: f64,
    /// Feature norm radius.
    #[arg(long, default_value_t = 1.0)]
    r: f64,
    /// Number of rounds.
    #[arg(long, default_value_t = 1000)]
    t: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Runs seeds `seed, seed + 1, …` and writes one output per seed.
    #[arg(long, default_value_t = 1)]
    seeds: u64,
    /// Prediction solver accuracy.
    #[arg(long, default_value_t = 1e-12)]
    eps: f64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: FormatArg,
    #[arg(long, value_enum, default_value = "generator")]
    comparator: ComparatorArg,
    #[arg(long, value_enum, default_value = "realizable-soft")]
    stream: StreamArg,
    /// Exploration rate override for bandit mode.
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long, default_value_t = 10)]
    n_learners: usize,
    /// Weak-learner edge in [0, 1].
    #[arg(long, default_value_t = 0.3)]
    edge: f64,
    /// Boosting horizon; defaults to `--t`.
    #[arg(long)]
    horizon: Option<usize>,
}

impl Args {
    fn stream_spec(&self, seed: u64) -> StreamSpec {
        let mode = match self.stream {
            StreamArg::RealizableSoft => StreamMode::RealizableSoft,
            StreamArg::RealizableHard => StreamMode::RealizableHard,
            StreamArg::AdversarialRotating => StreamMode::AdversarialRotating,
        };
        StreamSpec::new(self.d, self.k, self.b, self.r, self.t, seed, mode)
    }

    fn format(&self) -> Format {
        match self.format {
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
        }
    }
}

/// `run.csv` becomes `run-seed7.csv` when several seeds share one path.
fn seeded_path(path: &Path, seed: u64, many: bool) -> PathBuf {
    if !many {
        return path.to_path_buf();
    }
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}-seed{seed}.{}", ext.to_string_lossy()),
        None => format!("{stem}-seed{seed}"),
    };
    path.with_file_name(name)
}

fn emit(args: &Args, seed: u64, records: Vec<StreamRecord>, spec: serde_json::Value, summary: String) -> Result<(), Error> {
    println!("seed {seed}: {summary}");
    if let Some(out) = &args.out {
        let path = seeded_path(out, seed, args.seeds > 1);
        export(records, &path, args.format(), &spec, seed)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn run(args: &Args) -> Result<(), Error> {
    if args.seeds == 0 {
        return Err(Error::Config("--seeds must be at least 1".into()));
    }
    if args.mode == Mode::Diagnostics {
        let h = hessian_dominance_counterexample(args.b, args.r)?;
        let report = json!({
            "b": args.b,
            "r": args.r,
            "lhs": h.lhs,
            "rhs_coeff": h.rhs_coeff,
            "required_c": h.required_c(),
        });
        let text = serde_json::to_string_pretty(&report).expect("report is plain JSON");
        match &args.out {
            Some(path) => std::fs::write(path, text + "\n")
                .map_err(|source| Error::Io { path: path.clone(), source })?,
            None => println!("{text}"),
        }
        return Ok(());
    }

    for seed in args.seed..args.seed + args.seeds {
        match args.mode {
            Mode::Regression => {
                let spec = args.stream_spec(seed);
                let algo = match args.algo {
                    AlgoArg::Folklore => Algo::Folklore,
                    AlgoArg::Ogd => Algo::Ogd,
                };
                let comparator = match args.comparator {
                    ComparatorArg::Generator => Comparator::Generator,
                    ComparatorArg::BatchFit => Comparator::BatchFit,
                };
                let options = EpisodeOptions { eps: args.eps, comparator, ..EpisodeOptions::default() };
                let records = run_episode(algo, &spec, &options)?;
                let regret = records.last().map_or(0.0, |r| r.regret);
                let meta = json!({ "mode": "regression", "algo": algo, "comparator": comparator, "eps": args.eps, "stream": spec });
                emit(args, seed, records, meta, format!("{} rounds, regret {regret:.4}", spec.t))?;
            }
            Mode::Bandit => {
                let spec = args.stream_spec(seed);
                let run = run_bandit_episode(&spec, args.gamma, args.eps)?;
                let meta = json!({ "mode": "bandit", "gamma": run.gamma, "eps": args.eps, "stream": spec });
                let summary = format!(
                    "{} rounds, {} mistakes, gamma {:.4}, comparator log-loss {:.2}",
                    spec.t,
                    run.mistakes,
                    run.gamma,
                    run.comparator_loss()
                );
                emit(args, seed, run.records, meta, summary)?;
            }
            Mode::Boosting => {
                let spec = BoostingSpec {
                    k: args.k,
                    n_learners: args.n_learners,
                    edge: args.edge,
                    horizon: args.horizon.unwrap_or(args.t),
                    seed,
                };
                let run = run_boosting_episode(&spec)?;
                let summary = format!("{} rounds, error rate {:.4}", spec.horizon, run.error_rate());
                let meta = json!({ "mode": "boosting", "boosting": spec });
                emit(args, seed, run.records, meta, summary)?;
            }
            Mode::Diagnostics => unreachable!("handled above"),
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
