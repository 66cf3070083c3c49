use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ifedit_core::backends::{AnalyticBackend, AnalyticSpec, MotionProgram};
use ifedit_core::dump::RawTensor;
use ifedit_core::harness::{self, DumpObserver};
use ifedit_core::stub::StubServer;
use ifedit_core::{image_io, BackendConfig, Codec, EditConfig, Editor, Error, PipelineError};
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "ifedit",
    version,
    about = "Edit an image by generating a short video from it"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Edit one image.
    Edit(EditArgs),
    /// Time seeded synthetic edits and write CSV and Markdown reports.
    Bench {
        #[arg(long, default_value_t = 5)]
        trials: usize,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Run the ablation grid on the synthetic suite.
    Ablate {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 4)]
        scenes: usize,
        /// Side length of the synthetic images, in pixels.
        #[arg(long, default_value_t = 32)]
        size: usize,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Run one edit and write the ledger, sharpness report and per-step dumps.
    Inspect {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        instruction: String,
        #[arg(long)]
        out: PathBuf,
        /// Only write the ledger and sharpness report.
        #[arg(long)]
        no_dumps: bool,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Serve the analytic backend over the predict protocol.
    StubServer {
        #[arg(long, default_value = "127.0.0.1:8765")]
        addr: String,
        /// Must match the seed of the client's edit for identical results.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.5)]
        tau: f64,
        /// Still target instead of seeded motion.
        #[arg(long)]
        identity: bool,
    },
}

#[derive(Args)]
struct EditArgs {
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    instruction: String,
    #[arg(long)]
    out: PathBuf,
    /// Directory for per-step latents and frame grids.
    #[arg(long)]
    dump: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct ConfigArgs {
    /// JSON file with editor settings; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    no_tld: bool,
    #[arg(long)]
    no_enhance: bool,
    #[arg(long)]
    no_refine: bool,
    /// Dropout stride.
    #[arg(long)]
    k: Option<usize>,
    /// Dropout threshold timestep.
    #[arg(long)]
    tth: Option<f64>,
    #[arg(long, value_enum)]
    backend: Option<BackendKind>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BackendKind {
    Analytic,
    Coupled,
    Remote,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<EditConfig, Error> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
                    path: path.clone(),
                    source: e,
                })?;
                EditConfig::from_json(&text)?
            }
            None => EditConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(k) = self.k {
            cfg.stride = k;
        }
        if let Some(tth) = self.tth {
            cfg.threshold = tth;
        }
        cfg.tld &= !self.no_tld;
        cfg.enhance &= !self.no_enhance;
        cfg.refine &= !self.no_refine;
        if let Some(kind) = self.backend {
            cfg.backend = switch_backend(cfg.backend, kind);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Keep the configured backend when the kind matches, else use that kind's defaults.
fn switch_backend(current: BackendConfig, kind: BackendKind) -> BackendConfig {
    match (kind, current) {
        (BackendKind::Analytic, c @ BackendConfig::Analytic { .. }) => c,
        (BackendKind::Coupled, c @ BackendConfig::Coupled { .. }) => c,
        (BackendKind::Remote, c @ BackendConfig::Remote { .. }) => c,
        (BackendKind::Analytic, _) => BackendConfig::default(),
        (BackendKind::Coupled, _) => BackendConfig::Coupled {
            lambda: 0.25,
            tau: 0.5,
            motion: MotionProgram::default(),
        },
        (BackendKind::Remote, _) => BackendConfig::Remote {
            url: None,
            timeout_ms: None,
            retry: Default::default(),
        },
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Transport { .. } | Error::Protocol(_) | Error::Contract { .. } => 3,
        Error::Io { .. } | Error::Image { .. } | Error::Format(_) => 4,
        _ => 2,
    }
}

enum Failure {
    Plain(Error),
    Phase(PipelineError),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Plain(e)
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        Failure::Phase(e)
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), Error> {
    std::fs::write(path, contents).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn create_dir(path: &Path) -> Result<(), Error> {
    std::fs::create_dir_all(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn run_edit(args: &EditArgs) -> Result<(), Failure> {
    let cfg = args.config.resolve()?;
    let image = image_io::read_png(&args.image)?;
    let editor = Editor::new(cfg)?;
    let result = match &args.dump {
        Some(dir) => {
            create_dir(dir)?;
            let mut obs = DumpObserver::new(dir, &editor);
            let r = editor.edit_observed(&image, &args.instruction, Some(&mut obs))?;
            RawTensor::from(&r.final_latent).write(&dir.join("final.ifed"))?;
            write_file(&dir.join("ledger.csv"), &r.ledger.to_csv())?;
            r
        }
        None => editor.edit(&image, &args.instruction)?,
    };
    image_io::write_png(&result.output, &args.out)?;
    let summary = json!({
        "output": args.out,
        "hash": result.output_hash(),
        "provenance": result.provenance,
        "token_steps": result.ledger.total(),
        "prompt_source": result.prompt.source,
        "temporal_prompt": result.prompt.temporal_prompt,
        "wall_ms": result.duration.as_secs_f64() * 1e3,
    });
    println!(
        "{}",
        serde_json::to_string_pretty(&summary).expect("summary serializes")
    );
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Edit(args) => run_edit(&args),
        Command::Bench {
            trials,
            out,
            config,
        } => {
            let cfg = config.resolve()?;
            create_dir(&out)?;
            let report = harness::bench(&cfg, trials, &[1, 2, 3, 4])?;
            write_file(&out.join("bench.csv"), &report.to_csv())?;
            write_file(&out.join("bench.md"), &report.to_markdown())?;
            print!("{}", report.to_markdown());
            Ok(())
        }
        Command::Ablate {
            out,
            scenes,
            size,
            config,
        } => {
            let cfg = config.resolve()?;
            create_dir(&out)?;
            let suite = harness::synthetic_suite(scenes, size, cfg.seed);
            let table = harness::ablate(&cfg, &suite)?;
            write_file(&out.join("ablation.csv"), &table.to_csv())?;
            write_file(&out.join("ablation.md"), &table.to_markdown())?;
            print!("{}", table.to_markdown());
            Ok(())
        }
        Command::Inspect {
            image,
            instruction,
            out,
            no_dumps,
            config,
        } => {
            let editor = Editor::new(config.resolve()?)?;
            let frame = image_io::read_png(&image)?;
            let summary = harness::inspect(&editor, &frame, &instruction, &out, !no_dumps)?;
            image_io::write_png(&summary.result.output, &out.join("output.png"))?;
            for f in &summary.files {
                println!("{}", f.display());
            }
            Ok(())
        }
        Command::StubServer {
            addr,
            seed,
            tau,
            identity,
        } => {
            let codec = Arc::new(Codec::new(Default::default())?);
            let motion = if identity {
                MotionProgram::Identity
            } else {
                MotionProgram::default()
            };
            let backend = AnalyticBackend::new(AnalyticSpec { tau, motion, seed }, codec)?;
            let server = StubServer::predict_on(&addr, Arc::new(backend))?;
            eprintln!("serving predict protocol on {}", server.url());
            server.join();
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Plain(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
        Err(Failure::Phase(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e.source))
        }
    }
}
