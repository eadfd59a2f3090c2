use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use hydride_cli::pipeline::{self, load_dataset, prepare_dir};
use hydride_cli::{exit_code, Failure, RunConfig};
use hydride_core::dataset::write_records_jsonl;
use hydride_core::fixture::synthetic_hydrides;
use hydride_core::ScoreVariant;

#[derive(Parser)]
#[command(name = "hydride", version, about = "Metal-hydride screening pipeline")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// `key = value` config file applied before the other flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, env = "HYDRIDE_OUTPUT_ROOT")]
    out: Option<PathBuf>,
    /// Override any config key, e.g. `--set epochs=50`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long, global = true)]
    alpha: Option<f64>,
    #[arg(long, global = true, value_enum)]
    variant: Option<Variant>,
    #[arg(long, global = true)]
    strict_metal_cap: bool,
    #[arg(long, global = true)]
    require_element_count: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Variant {
    Original,
    Modified,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic demo dataset with structures.
    Fixture {
        #[arg(long, default_value_t = 450)]
        n: usize,
    },
    /// Apply the training criteria and split.
    Ingest {
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Add w_h2, E_factor and score columns to a formula/e_form CSV.
    Score {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Causal discovery over the configured features.
    Causal {
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Principal component regression over all feature subsets.
    Pcr {
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Train the generative model.
    Train {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        val: PathBuf,
    },
    /// Sample candidates from a trained checkpoint.
    Generate {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Records used as structure templates and for the energy estimate,
        /// normally the training split.
        #[arg(long)]
        templates: PathBuf,
    },
    /// Filter and rank a candidate CSV.
    Screen {
        #[arg(long)]
        candidates: PathBuf,
    },
    /// Match ranked candidates against a reference database.
    Accuracy {
        #[arg(long)]
        ranked: PathBuf,
        #[arg(long)]
        reference: Option<PathBuf>,
    },
    /// Summarize a run directory into report.md.
    Report {
        #[arg(long)]
        run: PathBuf,
    },
    /// Every stage end to end.
    Run {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        reference: Option<PathBuf>,
    },
    /// Tabulate E_factor for both variants.
    EfactorCurve {
        #[arg(long, default_value_t = -1.5, allow_negative_numbers = true)]
        lo: f64,
        #[arg(long, default_value_t = 0.5, allow_negative_numbers = true)]
        hi: f64,
        #[arg(long, default_value_t = 2001)]
        points: usize,
        #[arg(long)]
        output: PathBuf,
    },
}

fn build_config(c: &Common) -> Result<RunConfig> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    for kv in &c.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Failure::Invalid(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(o) = &c.out {
        cfg.output_dir = o.clone();
    }
    if let Some(a) = c.alpha {
        cfg.alpha = a;
    }
    if let Some(v) = c.variant {
        cfg.score_variant = match v {
            Variant::Original => ScoreVariant::Original,
            Variant::Modified => ScoreVariant::Modified,
        };
    }
    cfg.strict_metal_cap |= c.strict_metal_cap;
    cfg.require_element_count |= c.require_element_count;
    cfg.validate()?;
    Ok(cfg)
}

fn dataset_arg(arg: &Option<PathBuf>, cfg: &RunConfig) -> Result<PathBuf> {
    arg.clone()
        .or_else(|| cfg.dataset.clone())
        .ok_or_else(|| Failure::Invalid("no dataset given (--dataset or `dataset` in the config)".into()).into())
}

fn execute(cli: Cli) -> Result<()> {
    let mut cfg = build_config(&cli.common)?;
    let out = cfg.output_dir.clone();
    match cli.command {
        Command::Fixture { n } => {
            let records = synthetic_hydrides(n, cfg.seed);
            let path = out.join("dataset.jsonl");
            cfg.dataset = Some(path.clone());
            prepare_dir(&out, &cfg)?;
            write_records_jsonl(&records, &path)?;
            println!("wrote {} records to {}", records.len(), path.display());
        }
        Command::Ingest { dataset } => {
            let s = pipeline::ingest(&cfg, &dataset_arg(&dataset, &cfg)?, &out)?;
            println!(
                "kept {} of {}; train {} val {} test {}",
                s.loaded - s.rejected,
                s.loaded,
                s.train,
                s.val,
                s.test
            );
        }
        Command::Score { input, output } => {
            let n = pipeline::score_table(&input, &output, cfg.score_variant)?;
            println!("scored {n} rows into {}", output.display());
        }
        Command::Causal { dataset } => {
            let records = load_dataset(&dataset_arg(&dataset, &cfg)?)?;
            let s = pipeline::causal(&cfg, &records, &out)?;
            println!("{} edges from {} tests", s.edges, s.tests);
            for (name, rel) in s.neighbors {
                println!("  {} {rel} {name}", cfg.causal_target);
            }
        }
        Command::Pcr { dataset } => {
            let records = load_dataset(&dataset_arg(&dataset, &cfg)?)?;
            let n = pipeline::pcr(&cfg, &records, &out)?;
            println!("fitted {n} subsets");
        }
        Command::Train { train, val } => {
            let s = pipeline::train(&cfg, &load_dataset(&train)?, &load_dataset(&val)?, &out)?;
            println!(
                "best epoch {} (val loss {:.6}); checkpoint {}",
                s.best_epoch,
                s.best_val_loss,
                s.checkpoint.display()
            );
        }
        Command::Generate { checkpoint, templates } => {
            let s = pipeline::generate(&cfg, &checkpoint, &load_dataset(&templates)?, &out)?;
            println!("generated {} candidates, discarded {} draws", s.generated, s.discarded);
        }
        Command::Screen { candidates } => {
            let s = pipeline::screen(&cfg, &candidates, &out)?;
            println!("{} of {} candidates kept; top {}", s.kept, s.candidates, s.top);
        }
        Command::Accuracy { ranked, reference } => {
            let reference = reference
                .or_else(|| cfg.reference_db.clone())
                .or_else(|| cfg.dataset.clone())
                .ok_or_else(|| Failure::Invalid("no reference database given".into()))?;
            let curve = pipeline::accuracy(&cfg, &ranked, &reference, &out)?;
            if let Some((n, f, r, e)) = curve.last() {
                println!("n = {n}: same formula {f:.3}, same ratio {r:.3}, same elements {e:.3}");
            }
        }
        Command::Report { run } => {
            print!("{}", pipeline::report(&run)?);
        }
        Command::Run { dataset, reference } => {
            if dataset.is_some() {
                cfg.dataset = dataset;
            }
            if reference.is_some() {
                cfg.reference_db = reference;
            }
            pipeline::run(&cfg)?;
            print!(
                "{}",
                std::fs::read_to_string(out.join("report.md")).context("reading report")?
            );
        }
        Command::EfactorCurve { lo, hi, points, output } => {
            pipeline::efactor_curve_csv(&output, lo, hi, points)?;
            println!("wrote {points} points to {}", output.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
