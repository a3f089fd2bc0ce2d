use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use padnas_core::analysis::write_distribution_matrix;
use padnas_core::pipeline::{random_search_baseline, Pipeline, PipelineConfig, SearchKind, StageReport};
use padnas_core::space::render_scientific;
use padnas_core::{Error, LatencyBand, Oracle, SearchSpace};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Exit codes, one per failure class.
const EXIT_OTHER: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_INFEASIBLE: u8 = 3;
const EXIT_CHECKPOINT: u8 = 4;
const EXIT_ORACLE: u8 = 5;

#[derive(Parser)]
#[command(name = "padnas", version, about = "Progressive search-space design for one-shot NAS")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct ConfigArgs {
    /// Pipeline config JSON; defaults apply to missing fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Latency LUT file, overriding the config.
    #[arg(long)]
    lut: Option<PathBuf>,
    #[arg(long)]
    lat_min: Option<f64>,
    #[arg(long)]
    lat_max: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineMode {
    /// Uniform feasible samples from the unpruned space.
    Random,
    /// Accuracy-truncation EA on the unpruned supernet.
    Spos,
    /// The pipeline with two stages: one search, no pruning.
    ISupernet,
}

#[derive(Subcommand)]
enum Command {
    /// Run the progressive pipeline.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Output directory.
        #[arg(long, default_value = "padnas-out", conflicts_with = "resume")]
        out: PathBuf,
        /// Continue the run persisted in this directory.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Stop after this stage (the run can be resumed later).
        #[arg(long)]
        stop_after: Option<usize>,
    },
    /// Run a comparison baseline.
    Baseline {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_enum)]
        mode: BaselineMode,
        #[arg(long, default_value = "padnas-baseline")]
        out: PathBuf,
        /// Sample count for the random baseline.
        #[arg(long, default_value_t = 5)]
        samples: usize,
    },
    /// Export a built-in space profile as JSON.
    Space {
        /// `basic`, `large` or a profile path.
        #[arg(long, default_value = "basic")]
        profile: String,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export the latency table a config would use.
    Lut {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render the operation-by-layer distribution matrix of a stage report.
    Distributions {
        /// A `stages/stage-<k>.json` file.
        report: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InfeasibleBand { .. } => EXIT_INFEASIBLE,
        Error::Checkpoint(_) => EXIT_CHECKPOINT,
        Error::Evaluator { .. } | Error::Protocol(_) | Error::WrongBackend(_) => EXIT_ORACLE,
        Error::Config(_)
        | Error::UnknownProfile(_)
        | Error::MalformedProfile(_)
        | Error::InvalidBand { .. }
        | Error::InvalidLatencyTable(_)
        | Error::MissingLatency { .. }
        | Error::Json { .. } => EXIT_CONFIG,
        _ => EXIT_OTHER,
    }
}

impl ConfigArgs {
    fn load(&self) -> Result<PipelineConfig, Error> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::load(path)?,
            None => PipelineConfig::default(),
        };
        if let Some(lut) = &self.lut {
            cfg.lut = Some(lut.clone());
        }
        if self.lat_min.is_some() || self.lat_max.is_some() {
            cfg.band = LatencyBand::new(
                self.lat_min.unwrap_or(cfg.band.lat_min),
                self.lat_max.unwrap_or(cfg.band.lat_max),
            )?;
        }
        if let Some(seed) = self.seed {
            cfg = cfg.with_seed(seed);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn dispatch(command: Command) -> Result<(), Error> {
    match command {
        Command::Run {
            cfg,
            out,
            resume,
            stop_after,
        } => {
            let cfg = cfg.load()?;
            let (dir, resuming) = match resume {
                Some(dir) => (dir, true),
                None => (out, false),
            };
            let pipeline = Pipeline::new(cfg)?.with_output(&dir);
            let outcome = if resuming {
                pipeline.resume_until(stop_after)?
            } else {
                pipeline.run_until(stop_after)?
            };
            match outcome {
                Some(o) => {
                    for b in &o.best {
                        println!("{:.4}\t{:.2} ms\t{}", b.accuracy, b.latency_ms, b.architecture);
                    }
                    log::info!("final space {}", render_scientific(&o.final_space.size(), 3));
                }
                None => log::info!("stopped; resume with --resume {}", dir.display()),
            }
            Ok(())
        }
        Command::Baseline {
            cfg,
            mode,
            out,
            samples,
        } => baseline(cfg.load()?, mode, &out, samples),
        Command::Space { profile, out } => {
            let space = SearchSpace::build(&profile)?;
            log::info!(
                "{} layers, {} candidates, size {}",
                space.num_layers(),
                space.total_candidates(),
                render_scientific(&space.size(), 3)
            );
            emit(out.as_deref(), space.to_json_pretty().as_bytes())
        }
        Command::Lut { cfg, out } => {
            let cfg = cfg.load()?;
            let (_, table) = Pipeline::new(cfg)?.setup()?;
            emit(out.as_deref(), table.to_json_pretty().as_bytes())
        }
        Command::Distributions { report, out } => {
            let text = std::fs::read_to_string(&report).map_err(|e| Error::io(&report, e))?;
            let report_data: StageReport =
                serde_json::from_str(&text).map_err(|e| Error::json(&report, e))?;
            let dists = report_data.distributions.ok_or_else(|| {
                Error::Config(format!(
                    "{} is stage {} ({:?}) and carries no distributions",
                    report.display(),
                    report_data.stage,
                    report_data.kind
                ))
            })?;
            let mut buf = Vec::new();
            write_distribution_matrix(&dists, &mut buf).map_err(|e| Error::io(&report, e))?;
            emit(out.as_deref(), &buf)
        }
    }
}

fn baseline(mut cfg: PipelineConfig, mode: BaselineMode, out: &Path, samples: usize) -> Result<(), Error> {
    match mode {
        BaselineMode::ISupernet | BaselineMode::Spos => {
            let training = cfg.finetune_schedule[0];
            cfg = cfg.with_stages(2);
            cfg.finetune_schedule = vec![training];
            if matches!(mode, BaselineMode::Spos) {
                cfg.search = SearchKind::Spos;
            }
            let outcome = Pipeline::new(cfg)?.with_output(out).run()?;
            for b in &outcome.best {
                println!("{:.4}\t{:.2} ms\t{}", b.accuracy, b.latency_ms, b.architecture);
            }
            Ok(())
        }
        BaselineMode::Random => {
            let (space, table) = Pipeline::new(cfg.clone())?.setup()?;
            let mut oracle = Oracle::new(cfg.oracle.clone(), &space)?;
            oracle.train(cfg.finetune_schedule[0].epochs)?;
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let summary = random_search_baseline(&space, &table, &cfg.band, &oracle, samples, &mut rng)?;
            println!(
                "mean accuracy {:.4} (sd {:.4}) over {} samples",
                summary.mean_accuracy,
                summary.std_accuracy,
                summary.samples.len()
            );
            let path = out.join("random.json");
            std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
            let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
            std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
        }
    }
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<(), Error> {
    use std::io::Write;
    match out {
        Some(path) => std::fs::write(path, bytes).map_err(|e| Error::io(path, e)),
        None => std::io::stdout()
            .write_all(bytes)
            .map_err(|e| Error::io("<stdout>", e)),
    }
}
