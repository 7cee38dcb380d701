//! `panelwright`: turn a dialogue script into a storyboard.
//!
//! Exit codes: 0 ok, 2 user or input error, 3 I/O error, 4 backend error,
//! 5 internal invariant breach.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use panelwright_core::backends::BackendsConfig;
use panelwright_core::pipeline::{
    Pipeline, PipelineConfig, PipelineError, SourceSettings, StageOutcome, BACKENDS_FILE,
};
use panelwright_core::quality::{fit_pristine_model, GrayField, DEFAULT_PATCH_SIZE, DEFAULT_SHARPNESS_FRACTION};
use panelwright_core::script_ir::SourceKind;
use panelwright_core::workspace::Stage;

const WORKSPACE_MODEL: &str = "models/niqe_pristine.json";

#[derive(Parser)]
#[command(name = "panelwright", version, about = "Dialogue script to storyboard pipeline")]
struct Cli {
    /// Project workspace directory.
    #[arg(short, long, global = true, default_value = ".")]
    workspace: PathBuf,
    /// Seed threaded into every backend.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Backend configuration (backends.json). Defaults to the one stored in
    /// the workspace.
    #[arg(long, global = true)]
    backends: Option<PathBuf>,
    /// Use the offline mock backends for every role.
    #[arg(long, global = true)]
    mock: bool,
    /// Directory with prompt template overrides (`<ID>.txt`).
    #[arg(long, global = true)]
    prompts: Option<PathBuf>,
    /// Log progress to stderr; repeat for more detail.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Screenplay,
    Prose,
}

#[derive(Args, Clone)]
struct SourceArgs {
    /// How the script is written.
    #[arg(long, value_enum, default_value = "screenplay")]
    kind: Kind,
    /// Start a new page after this many dialogue cues.
    #[arg(long)]
    pages: Option<usize>,
    /// Reject lines that fit no screenplay element.
    #[arg(long)]
    strict: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a script into ir/.
    Parse {
        script: PathBuf,
        #[command(flatten)]
        source: SourceArgs,
    },
    /// Extract and refine characters and locations into db/.
    Direct {
        #[arg(long, default_value_t = panelwright_core::director::DEFAULT_ROUNDS)]
        rounds: u32,
    },
    /// Generate reference images and turnarounds into assets/.
    Shoot,
    /// Plan, lay out and composite the storyboard into board/.
    Board,
    /// Score the storyboard into eval/.
    Eval {
        /// Pristine NIQE model; defaults to models/niqe_pristine.json in the
        /// workspace, then to the bundled model.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Run every stage, skipping those that are up to date.
    Run {
        script: PathBuf,
        #[command(flatten)]
        source: SourceArgs,
        #[arg(long, default_value_t = panelwright_core::director::DEFAULT_ROUNDS)]
        rounds: u32,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Stop after this stage (parse, direct, shoot, board, eval).
        #[arg(long)]
        stop_after: Option<Stage>,
    },
    /// Fit a pristine NIQE model from a directory of PNG photographs.
    FitNiqe {
        corpus: PathBuf,
        /// Output path, relative to the workspace.
        #[arg(long, default_value = WORKSPACE_MODEL)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_PATCH_SIZE)]
        patch_size: usize,
        #[arg(long, default_value_t = DEFAULT_SHARPNESS_FRACTION)]
        sharpness_fraction: f64,
    },
}

/// An error message with the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        Failure { code: e.exit_code() as u8, message: e.to_string() }
    }
}

fn usage(error: anyhow::Error) -> Failure {
    Failure { code: 2, message: format!("{error:#}") }
}

fn io(error: anyhow::Error) -> Failure {
    Failure { code: 3, message: format!("{error:#}") }
}

fn backends_config(cli: &Cli) -> Result<BackendsConfig, Failure> {
    if cli.mock {
        return Ok(BackendsConfig::all_mock(cli.seed));
    }
    let stored = cli.workspace.join(BACKENDS_FILE);
    let path = match &cli.backends {
        Some(p) => p.clone(),
        None if stored.is_file() => stored,
        None => return Err(usage(anyhow!("no backend configuration: pass --backends <file> or --mock"))),
    };
    let cfg = BackendsConfig::load(&path).map_err(|e| usage(anyhow!(e)))?;
    Ok(cfg.with_seed(cli.seed))
}

fn source_settings(args: Option<&SourceArgs>) -> SourceSettings {
    let kind = match args.map(|a| a.kind) {
        Some(Kind::Prose) => SourceKind::Prose,
        _ => SourceKind::Screenplay,
    };
    SourceSettings {
        kind,
        max_segments_per_page: args.and_then(|a| a.pages),
        strict: args.is_some_and(|a| a.strict),
    }
}

fn niqe_model(cli: &Cli, explicit: Option<&PathBuf>) -> Option<PathBuf> {
    explicit.cloned().or_else(|| {
        let p = cli.workspace.join(WORKSPACE_MODEL);
        p.is_file().then_some(p)
    })
}

fn pipeline(cli: &Cli, source: Option<&SourceArgs>, rounds: u32, model: Option<&PathBuf>) -> Result<Pipeline, Failure> {
    let mut cfg = PipelineConfig::mock(cli.seed);
    cfg.backends = backends_config(cli)?;
    cfg.source = source_settings(source);
    cfg.rounds = rounds;
    cfg.prompts_dir = cli.prompts.clone();
    cfg.niqe_model = niqe_model(cli, model);
    Ok(Pipeline::new(&cli.workspace, cfg)?)
}

fn report(stage: Stage, outcome: StageOutcome) {
    let word = match outcome {
        StageOutcome::Ran => "done",
        StageOutcome::Skipped => "skipped (up to date)",
    };
    println!("{stage:<7} {word}");
}

fn load_corpus(dir: &Path) -> anyhow::Result<Vec<GrayField>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
        .collect();
    files.sort();
    files
        .iter()
        .map(|p| {
            let img = image::open(p).with_context(|| format!("decoding {}", p.display()))?;
            Ok(GrayField::from_rgba(&img.to_rgba8()))
        })
        .collect()
}

fn execute(cli: &Cli) -> Result<(), Failure> {
    let default_rounds = panelwright_core::director::DEFAULT_ROUNDS;
    match &cli.command {
        Command::Parse { script, source } => {
            let p = pipeline(cli, Some(source), default_rounds, None)?;
            report(Stage::Parse, p.parse(script)?);
        }
        Command::Direct { rounds } => report(Stage::Direct, pipeline(cli, None, *rounds, None)?.direct()?),
        Command::Shoot => report(Stage::Shoot, pipeline(cli, None, default_rounds, None)?.shoot()?),
        Command::Board => report(Stage::Board, pipeline(cli, None, default_rounds, None)?.board()?),
        Command::Eval { model } => {
            let p = pipeline(cli, None, default_rounds, model.as_ref())?;
            report(Stage::Eval, p.eval()?);
            print_report(&cli.workspace);
        }
        Command::Run { script, source, rounds, model, stop_after } => {
            let p = pipeline(cli, Some(source), *rounds, model.as_ref())?;
            let summary = p.run(script, *stop_after)?;
            for (stage, outcome) in &summary.stages {
                report(*stage, *outcome);
            }
            if summary.stages.iter().any(|(s, _)| *s == Stage::Eval) {
                print_report(&cli.workspace);
            }
        }
        Command::FitNiqe { corpus, out, patch_size, sharpness_fraction } => {
            let images = load_corpus(corpus).map_err(io)?;
            let model = fit_pristine_model(&images, *patch_size, *sharpness_fraction).map_err(|e| usage(anyhow!(e)))?;
            let path = cli.workspace.join(out);
            if let Some(dir) = path.parent() {
                std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display())).map_err(io)?;
            }
            std::fs::write(&path, model.to_json()).with_context(|| format!("writing {}", path.display())).map_err(io)?;
            println!(
                "fitted {} patches from {} images -> {}",
                model.patch_count,
                model.image_count,
                path.display()
            );
        }
    }
    Ok(())
}

fn print_report(workspace: &Path) {
    if let Ok(table) = std::fs::read_to_string(workspace.join("eval/report.txt")) {
        print!("\n{table}");
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
