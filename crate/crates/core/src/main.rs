use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use perturbench::config::ExperimentConfig;
use perturbench::corpus::{load_manifest, select_frames, validate_corpus};
use perturbench::detector::serve_mock_batch;
use perturbench::operators::parse_pipeline;
use perturbench::report::{build_table, emit_report, Format, Grouping};
use perturbench::runner::{load_scores, run_experiment, write_listings, write_report_artifacts, write_scores, RunError, Session};

/// Label given to the pipeline passed with `--ops`.
const AD_HOC_LABEL: &str = "ops";

#[derive(Parser)]
#[command(name = "bench", version, about = "Robustness benchmark for black-box deepfake detectors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a corpus manifest and its frames.
    Validate(ValidateArgs),
    /// Produce perturbed frames for every operation (cached).
    Perturb(RunArgs),
    /// Perturb, then score every operation with every detector.
    Score(RunArgs),
    /// Compute reports from previously written scores.
    Evaluate(RunArgs),
    /// Perturb, score, evaluate, and write all run artifacts.
    Run(RunArgs),
    /// Built-in mock detector speaking the batch protocol.
    MockDetector {
        #[arg(long)]
        batch: PathBuf,
    },
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long, conflicts_with = "config", requires = "root")]
    manifest: Option<PathBuf>,
    #[arg(long)]
    root: Option<PathBuf>,
    #[arg(long, required_unless_present = "manifest")]
    config: Option<PathBuf>,
    /// Keep only the first N frames of each video before validating.
    #[arg(long)]
    n_per_video: Option<usize>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, env = "BENCH_CACHE_DIR")]
    cache_dir: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replace the configured operations with `raw` plus this pipeline.
    #[arg(long)]
    ops: Option<String>,
}

fn fail(code: u8, message: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {message}");
    ExitCode::from(code)
}

fn run_failed(e: RunError) -> ExitCode {
    fail(e.exit_code() as u8, e)
}

fn load_config(args: &RunArgs) -> Result<ExperimentConfig, RunError> {
    let mut config = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if args.workers.is_some() {
        config.workers = args.workers;
    }
    if let Some(dir) = &args.cache_dir {
        config.cache_dir = Some(dir.clone());
    }
    if let Some(out) = &args.out {
        config.output_dir = out.clone();
    }
    if let Some(ops) = &args.ops {
        let pipeline = parse_pipeline(ops).map_err(|source| perturbench::config::ConfigError::Pipeline {
            label: AD_HOC_LABEL.into(),
            source: Box::new(source),
        })?;
        config = config.with_single_pipeline(AD_HOC_LABEL, pipeline)?;
    }
    config.validate()?;
    let exe = std::env::current_exe().map_err(|source| RunError::Io { context: "locating bench executable".into(), source })?;
    Ok(config.with_bench_executable(&exe))
}

fn validate(args: ValidateArgs) -> ExitCode {
    let (manifest_path, root, n) = match (&args.manifest, &args.config) {
        (Some(m), _) => (m.clone(), args.root.clone().unwrap_or_default(), args.n_per_video),
        (None, Some(c)) => match ExperimentConfig::load(c) {
            Ok(cfg) => (cfg.corpus.manifest, cfg.corpus.root, args.n_per_video.or(cfg.corpus.n_per_video)),
            Err(e) => return fail(1, e),
        },
        (None, None) => return fail(1, "either --manifest/--root or --config is required"),
    };
    let manifest = match load_manifest(&manifest_path) {
        Ok(m) => m,
        Err(e) => return fail(1, e),
    };
    let manifest = match n {
        Some(0) => return fail(1, "--n-per-video must be at least 1"),
        Some(n) => select_frames(&manifest, n),
        None => manifest,
    };
    let report = validate_corpus(&manifest, &root);
    print!("{report}");
    for (family, count) in manifest.family_counts() {
        println!("  {family}: {count}");
    }
    if report.is_valid() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn print_failures(session: &Session) {
    for f in session.failures() {
        eprintln!("operation `{}` failed: {}", f.operation, f.message);
    }
}

fn perturb(args: RunArgs, score: bool) -> ExitCode {
    let result = (|| {
        let mut session = Session::open(load_config(&args)?)?;
        let out = session.config.output_dir.clone();
        let materialized = session.materialize_all();
        write_listings(&out, &materialized)?;
        println!("{} operation(s) materialized under {}", materialized.len(), session.cache_dir.display());
        if score {
            for detector in session.config.detectors.clone() {
                let scores = session.score(&detector, &materialized)?;
                write_scores(&out, &scores)?;
                println!("scored {} operation(s) with `{}`", scores.operations.len(), detector.name);
            }
        }
        session.write_log()?;
        print_failures(&session);
        Ok::<_, RunError>(session.failures().is_empty())
    })();
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => run_failed(e),
    }
}

fn evaluate(args: RunArgs) -> ExitCode {
    let result = (|| {
        let session = Session::open(load_config(&args)?)?;
        let out = session.config.output_dir.clone();
        let labels: Vec<String> = session.config.operations.iter().map(|o| o.label.clone()).collect();
        for detector in &session.config.detectors {
            let scores = load_scores(&out, &detector.name, &labels)?;
            let report = session.evaluate(&scores)?;
            write_report_artifacts(&out, &session.config, &report)?;
            print_table(&report)?;
        }
        Ok::<_, RunError>(())
    })();
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => run_failed(e),
    }
}

fn print_table(report: &perturbench::report::EvalReport) -> Result<(), RunError> {
    let table = build_table(report, Grouping::ByCategory)?;
    let mut stdout = std::io::stdout().lock();
    let _ = writeln!(stdout, "\n## {}\n", report.metadata.detector);
    let _ = stdout.write_all(&emit_report(&table, Format::Markdown));
    Ok(())
}

fn run(args: RunArgs) -> ExitCode {
    let config = match load_config(&args) {
        Ok(c) => c,
        Err(e) => return run_failed(e),
    };
    let out: PathBuf = config.output_dir.clone();
    match run_experiment(config) {
        Ok(outcome) => {
            for report in &outcome.reports {
                if let Err(e) = print_table(report) {
                    return run_failed(e);
                }
            }
            println!("\nartifacts written to {}", out.display());
            for f in &outcome.failures {
                eprintln!("operation `{}` failed: {}", f.operation, f.message);
            }
            if outcome.failures.is_empty() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            }
        }
        Err(e) => run_failed(e),
    }
}

fn mock_detector(batch: &Path) -> ExitCode {
    let stdout = std::io::stdout();
    let mut out = std::io::BufWriter::new(stdout.lock());
    match serve_mock_batch(batch, &mut out).and_then(|n| {
        out.flush().map(|_| n).map_err(|source| perturbench::detector::DetectorError::Io { context: "flushing scores".into(), source })
    }) {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => fail(1, e),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match cli.command {
        Command::Validate(args) => validate(args),
        Command::Perturb(args) => perturb(args, false),
        Command::Score(args) => perturb(args, true),
        Command::Evaluate(args) => evaluate(args),
        Command::Run(args) => run(args),
        Command::MockDetector { batch } => mock_detector(&batch),
    }
}
