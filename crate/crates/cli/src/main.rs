//! `memaudit`: membership-inference privacy audits from the command line.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure
//! (partial results may have been written).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use memaudit::config::{validate_config, ExperimentConfig};
use memaudit::data::{save_dataset, ColumnSchema};
use memaudit::pipeline::{rerun_attacks, run_experiment, RunOutcome};
use memaudit::report::report_render;
use memaudit::synth::{synth_dataset, SynthSpec};
use memaudit::Error;

#[derive(Parser)]
#[command(name = "memaudit", version, about = "Membership-inference privacy audits for binary classifiers")]
struct Cli {
    /// Only log warnings and errors.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic two-cluster dataset as CSV.
    Synth {
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 16)]
        dim: usize,
        #[arg(long, default_value_t = 0.5)]
        positive_fraction: f64,
        #[arg(long, default_value_t = 1.0)]
        separation: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Check a config file and print it with defaults filled in.
    Validate { config: PathBuf },
    /// Run (or resume) an experiment.
    Run {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Recompute attack scores and the report from stored confidences.
    Attack {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Render a report as JSON, CSV tables or an SVG ROC plot.
    Report {
        report: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        /// Directory for the rendered files; defaults to the report's directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(clap::Args)]
struct Overrides {
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    repetitions: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
    Svg,
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) => Failure::Usage(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn load(path: &PathBuf, o: &Overrides) -> Result<ExperimentConfig, Failure> {
    let mut cfg = validate_config(path).map_err(|e| Failure::Usage(e.to_string()))?;
    if let Some(dir) = &o.output {
        cfg.output_dir = dir.clone();
    }
    if let Some(r) = o.repetitions {
        cfg.repetitions = r;
    }
    if let Some(w) = o.workers {
        cfg.workers = w;
    }
    cfg.check().map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(cfg)
}

fn summarize(outcome: &RunOutcome) -> Result<(), Failure> {
    let r = &outcome.report;
    for (name, s) in &r.attacks {
        for (fpr, agg) in &s.tpr {
            println!(
                "{name:<8} TPR@FPR={fpr:<6} median {:.4}  baseline {:.4}  p {:.3e} {}",
                agg.median, agg.baseline, agg.test.p_value, agg.stars
            );
        }
    }
    if let Some(c) = &r.combined {
        if let Some(agg) = c.tpr.values().next() {
            println!("combined TPR@FPR=0     median {:.4}  p {:.3e} {}", agg.median, agg.test.p_value, agg.stars);
        }
    }
    println!("report: {}", outcome.report_path.display());
    if outcome.is_partial() {
        for f in &r.failures {
            eprintln!("repetition {} failed: {}", f.index, f.error);
        }
        return Err(Failure::Runtime(format!("{} of {} repetitions failed", r.failures.len(), r.repetitions_requested)));
    }
    Ok(())
}

fn execute(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Synth {
            n,
            dim,
            positive_fraction,
            separation,
            seed,
            out,
        } => {
            let spec = SynthSpec {
                n,
                dimension: dim,
                positive_fraction,
                separation,
                seed,
            };
            let d = synth_dataset(&spec).map_err(|e| Failure::Usage(e.to_string()))?;
            save_dataset(&d, &out, &ColumnSchema::default()).map_err(|e| Failure::Runtime(e.to_string()))?;
            println!("wrote {} samples to {}", d.len(), out.display());
            Ok(())
        }
        Command::Validate { config } => {
            let cfg = validate_config(&config).map_err(|e| Failure::Usage(e.to_string()))?;
            print!("{}", cfg.to_text());
            Ok(())
        }
        Command::Run { config, overrides } => {
            let cfg = load(&config, &overrides)?;
            summarize(&run_experiment(&cfg)?)
        }
        Command::Attack { config, overrides } => {
            let cfg = load(&config, &overrides)?;
            summarize(&rerun_attacks(&cfg)?)
        }
        Command::Report { report, format, out } => {
            let dir = out.unwrap_or_else(|| report.parent().map(PathBuf::from).unwrap_or_default());
            let name = match format {
                Format::Json => "json",
                Format::Csv => "csv",
                Format::Svg => "svg",
            };
            for p in report_render(&report, name, &dir)? {
                println!("{}", p.display());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = if cli.quiet { log::LevelFilter::Warn } else { log::LevelFilter::Info };
    env_logger::Builder::new().filter_level(level).init();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(m)) => {
            log::error!("{m}");
            ExitCode::from(2)
        }
    }
}
