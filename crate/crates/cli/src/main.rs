use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use cough_screen::config::ExperimentConfig;
use cough_screen::experiment::{self, INGEST_SUMMARY_FILE, SEGMENTS_FILE};
use cough_screen::models::ModelFamily;
use cough_screen::synth::{write_synth_corpus, SynthConfig};
use cough_screen::{Error, FeatureKind};

/// Cough-audio COVID-19 screening experiments.
#[derive(Debug, Parser)]
#[command(name = "coughscreen", version)]
struct Cli {
    /// Experiment config (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the config output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct CacheArg {
    /// Read feature vectors from the output directory's cache instead of re-extracting.
    #[arg(long)]
    use_cache: bool,
}

#[derive(Debug, Args)]
struct CellArgs {
    #[arg(long, default_value = "mfcc")]
    kind: FeatureKind,
    #[arg(long, default_value = "mlp")]
    family: ModelFamily,
    #[command(flatten)]
    cache: CacheArg,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load manifests, segment and normalize; writes the segment table.
    Ingest {
        /// Also write every segment as a WAV file for auditing.
        #[arg(long)]
        wav: bool,
    },
    /// Ingest and write the feature cache.
    Extract,
    /// Train one model on all vectors of a feature kind and save it.
    Train(CellArgs),
    /// Hyper-parameter grid search for one feature kind and model family.
    Grid(CellArgs),
    /// Scenario sweep: every configured scenario x feature kind x model.
    Run(CacheArg),
    /// Write a synthetic two-class corpus (WAV files, manifest, config).
    Synth {
        #[arg(long, default_value_t = 200)]
        per_class: usize,
        #[arg(long, default_value_t = 2)]
        segments_per_recording: usize,
    },
    /// Print the result tables of a finished run.
    Report {
        /// Also export waveforms and feature values as long-format CSV.
        #[arg(long)]
        csv: bool,
    },
}

/// Process exit status: 0 success, 1 failed cell or runtime error, 2 config error.
enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
    Cells(usize),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        let config = e.chain().any(|c| matches!(c.downcast_ref::<Error>(), Some(Error::Config(_))));
        if config {
            Failure::Config(e)
        } else {
            Failure::Runtime(e)
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        anyhow::Error::from(e).into()
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path).map_err(|e| Failure::Config(e.into()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    if let Some(jobs) = cli.jobs {
        cfg.jobs = jobs;
    }
    Ok(cfg)
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> anyhow::Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn execute(cli: &Cli) -> Result<(), Failure> {
    let cfg = load_config(cli)?;
    if let Command::Synth {
        per_class,
        segments_per_recording,
    } = cli.command
    {
        return synth(&cfg, per_class, segments_per_recording);
    }
    if matches!(cli.command, Command::Report { csv: false }) {
        return report(&cfg, false);
    }
    cfg.validate()?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build_global()
        .map_err(|e| Failure::Runtime(e.into()))?;

    match &cli.command {
        Command::Ingest { wav } => {
            let corpus = experiment::ingest(&cfg)?;
            fs::create_dir_all(&cfg.output_dir).with_context(|| format!("creating {}", cfg.output_dir.display()))?;
            experiment::write_segments_csv(&cfg.output_dir.join(SEGMENTS_FILE), &corpus.segments)?;
            write_json(&cfg.output_dir.join(INGEST_SUMMARY_FILE), &corpus.summary)?;
            if *wav {
                experiment::write_segment_wavs(&cfg.output_dir.join("segments"), &corpus.segments)?;
            }
            println!(
                "{} segments from {} of {} manifest rows",
                corpus.segments.len(),
                corpus.summary.kept,
                corpus.summary.total
            );
        }
        Command::Extract => {
            let (features, _) = experiment::prepare_features(&cfg, false)?;
            for (kind, v) in &features {
                println!("{kind}: {} vectors", v.len());
            }
        }
        Command::Train(args) => {
            let cfg = ExperimentConfig {
                feature_kinds: vec![args.kind],
                ..cfg
            };
            let (features, _) = experiment::prepare_features(&cfg, args.cache.use_cache)?;
            let model = experiment::train_full(&cfg, &features, args.kind, args.family)?;
            let path = cfg
                .output_dir
                .join("models")
                .join(format!("model_{}_{}.json", args.kind, args.family.as_str()));
            fs::create_dir_all(path.parent().unwrap()).context("creating model directory")?;
            fs::write(&path, model.to_json().map_err(Error::from)? + "\n")
                .with_context(|| format!("writing {}", path.display()))?;
            println!(
                "trained {} on {} {} vectors: train accuracy {:.2}%, saved {}",
                args.family,
                features[&args.kind].len(),
                args.kind,
                100.0 * model.train_metrics.train_accuracy,
                path.display()
            );
        }
        Command::Grid(args) => {
            let cfg = ExperimentConfig {
                feature_kinds: vec![args.kind],
                ..cfg
            };
            let (features, _) = experiment::prepare_features(&cfg, args.cache.use_cache)?;
            let result = experiment::run_grid(&cfg, &features, args.kind, args.family)?;
            let path = cfg
                .output_dir
                .join("grid")
                .join(format!("grid_{}_{}.json", args.kind, args.family.as_str()));
            write_json(&path, &result)?;
            match result.best_cell() {
                Some(best) => println!(
                    "best of {} cells: #{} accuracy {:.2} F1 {:.4} AUC {:.3}\n{}",
                    result.cells.len(),
                    best.index,
                    best.accuracy,
                    best.f1,
                    best.auc,
                    serde_json::to_string(&best.params).map_err(anyhow::Error::from)?
                ),
                None => {
                    return Err(Failure::Runtime(anyhow::anyhow!(
                        "no grid cell completed; see {}",
                        path.display()
                    )))
                }
            }
        }
        Command::Run(cache) => {
            let outcome = experiment::run_experiment(&cfg, cache.use_cache)?;
            let failed = outcome.cells.iter().filter(|c| c.result.is_err()).count();
            println!(
                "{} segments, {} cells, {failed} failed; summary in {}",
                outcome.n_segments,
                outcome.cells.len(),
                cfg.output_dir.join(experiment::SUMMARY_FILE).display()
            );
            if failed > 0 {
                return Err(Failure::Cells(failed));
            }
        }
        Command::Report { csv } => report(&cfg, *csv)?,
        Command::Synth { .. } => unreachable!("handled above"),
    }
    Ok(())
}

fn synth(cfg: &ExperimentConfig, per_class: usize, segments_per_recording: usize) -> Result<(), Failure> {
    let synth = SynthConfig {
        per_class,
        segments_per_recording,
        sample_rate: cfg.sample_rate,
        ..SynthConfig::default()
    };
    synth.validate().map_err(|e| Failure::from(Error::Config(e)))?;
    let dir = &cfg.output_dir;
    let manifest = write_synth_corpus(dir, &synth, cfg.seed)?;
    // A ready-to-run config over the generated files.
    let run_cfg = ExperimentConfig {
        manifests: vec![PathBuf::from("manifest.csv")],
        output_dir: dir.join("results"),
        seed: cfg.seed,
        scenarios: vec![5],
        ..ExperimentConfig::default()
    };
    let cfg_path = dir.join("experiment.toml");
    fs::write(&cfg_path, run_cfg.to_toml_string()).with_context(|| format!("writing {}", cfg_path.display()))?;
    println!(
        "wrote {} segments per class to {}; run with --config {}",
        per_class,
        manifest.display(),
        cfg_path.display()
    );
    Ok(())
}

fn report(cfg: &ExperimentConfig, csv: bool) -> Result<(), Failure> {
    let reports = experiment::read_reports(&cfg.output_dir)?;
    if reports.is_empty() {
        return Err(Failure::Runtime(anyhow::anyhow!(
            "no reports under {}",
            cfg.output_dir.display()
        )));
    }
    let mut scenarios: Vec<u8> = reports.iter().map(|r| r.scenario_id).collect();
    scenarios.dedup();
    for id in scenarios {
        let block: Vec<_> = reports.iter().filter(|r| r.scenario_id == id).collect();
        println!("## Scenario {id}: {}\n", block[0].scenario);
        println!("{}", cough_screen::eval::metrics::markdown_table(&block));
    }
    if csv {
        let dir = cfg.output_dir.join("export");
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        let features = experiment::read_features(&cfg.output_dir, &cfg.feature_kinds)?;
        experiment::write_feature_long_csv(&dir.join("features_long.csv"), &features)?;
        let corpus = experiment::ingest(cfg)?;
        experiment::write_waveform_csv(&dir.join("waveforms.csv"), &corpus.segments)?;
        println!("exported CSV files to {}", dir.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Cells(n)) => {
            eprintln!("error: {n} cell(s) failed");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Config(e)) => {
            eprintln!("{e:#}");
            ExitCode::from(2)
        }
    }
}
