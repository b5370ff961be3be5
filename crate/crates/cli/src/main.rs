use std::path::PathBuf;
use std::process::ExitCode;

use aga_cli::commands;
use aga_cli::{CliError, ExperimentConfig, KindSelection, Overrides};
use clap::{Args, Parser, Subcommand};

/// Appearance-guided association benchmark: generate synthetic suites, run
/// tracker variants, evaluate them.
#[derive(Parser)]
#[command(name = "aga", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write one scenario file per video plus a manifest.
    Generate(Common),
    /// Run tracker variants over a generated dataset.
    Track {
        #[command(flatten)]
        common: Common,
        /// Dataset directory (default: <out_dir>/dataset).
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Score tracker outputs against the dataset's ground truth.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Tracker output directory (default: <out_dir>/outputs).
        #[arg(long)]
        outputs: Option<PathBuf>,
    },
    /// Window-size sweep of the full model.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Reuse an existing dataset instead of generating one.
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    /// TOML experiment config; built-in defaults when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for this command.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Suite seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated variant names from the config.
    #[arg(long, value_delimiter = ',')]
    variant: Option<Vec<String>>,
    #[arg(long, value_enum)]
    kind: Option<KindSelection>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig, CliError> {
        let base = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        base.apply(&Overrides {
            out_dir: None,
            seed: self.seed,
            variants: self.variant.clone(),
            kind: self.kind,
        })
    }

    fn out_or(&self, cfg: &ExperimentConfig, sub: &str) -> PathBuf {
        self.out.clone().unwrap_or_else(|| cfg.out_dir.join(sub))
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Generate(c) => {
            let cfg = c.load()?;
            let out = c.out_or(&cfg, "dataset");
            let m = commands::generate(&cfg, &out, c.jobs)?;
            println!("generated {} videos in {}", m.videos.len(), out.display());
        }
        Command::Track { common: c, dataset } => {
            let cfg = c.load()?;
            let dataset = dataset.unwrap_or_else(|| cfg.out_dir.join("dataset"));
            let out = c.out_or(&cfg, "outputs");
            let (_, timing) = commands::track(&cfg.variants, &dataset, &out, c.jobs)?;
            for t in timing {
                println!(
                    "{}: {} videos, {:.3} s ({:.3} ms/video)",
                    t.variant, t.videos, t.total_seconds, t.mean_ms_per_video
                );
            }
        }
        Command::Evaluate {
            common: c,
            dataset,
            outputs,
        } => {
            let cfg = c.load()?;
            let dataset = dataset.unwrap_or_else(|| cfg.out_dir.join("dataset"));
            let outputs = outputs.unwrap_or_else(|| cfg.out_dir.join("outputs"));
            let out = c.out_or(&cfg, "report");
            let report = commands::evaluate(&dataset, &outputs, &out, c.jobs)?;
            print_table(&report);
        }
        Command::Sweep { common: c, dataset } => {
            let cfg = c.load()?;
            let out = c.out_or(&cfg, "sweep");
            let report = commands::sweep(&cfg, dataset.as_deref(), &out, c.jobs)?;
            print_table(&report);
        }
    }
    Ok(())
}

fn print_table(report: &aga_core::dataset_io::ReportFile) {
    println!("{:<6} {:<16} {:>8} {:>9} {:>6} {:>6} {:>6}", "kind", "variant", "accuracy", "switches", "AP", "AP50", "AP75");
    let ap = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.1}"));
    for r in &report.reports {
        println!(
            "{:<6} {:<16} {:>8.4} {:>9} {:>6} {:>6} {:>6}",
            r.kind.map_or("all", |k| k.as_str()),
            r.variant,
            r.association_accuracy,
            r.id_switches,
            ap(r.ap),
            ap(r.ap50),
            ap(r.ap75)
        );
    }
    for n in &report.notes {
        println!("note: {n}");
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("AGA_LOG", "warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let message = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {message}", e.class());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
