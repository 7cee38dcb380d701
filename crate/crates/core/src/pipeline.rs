//! Stage sequencing over a [`Workspace`]: parse → direct → shoot → board →
//! eval, each skipped when its recorded inputs are unchanged.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{AssetRole, BackendError, Backends, BackendsConfig, VIEW_COUNT};
use crate::cinematographer::{
    generate_multiview, generate_reference_images, AssetStore, BasePromptConfig, CinemaError, MultiViewSet,
};
use crate::digest::sha256_hex;
use crate::director::{
    all_targets, extract_elements, refine_entities, DirectorError, ElementDatabase, PromptSet, DEFAULT_ROUNDS,
};
use crate::quality::{evaluate_storyboard, PristineModel, QualityError};
use crate::script_ir::{IrError, ParseOptions, RawScript, ScriptIR, SourceKind};
use crate::storyboard::{build_storyboard, BoardOptions, Storyboard, StoryboardError};
use crate::workspace::{Stage, Workspace, WorkspaceError};

pub const IR_FILE: &str = "ir/script.json";
pub const SOURCE_FILE: &str = "ir/source.json";
pub const REFINED_FILE: &str = "db/script.json";
pub const BACKENDS_FILE: &str = "backends.json";

#[derive(Debug, Error)]
pub enum ErrorKind {
    #[error(transparent)]
    Workspace(#[from] WorkspaceError),
    #[error(transparent)]
    Ir(#[from] IrError),
    #[error(transparent)]
    Director(#[from] DirectorError),
    #[error(transparent)]
    Cinema(#[from] CinemaError),
    #[error(transparent)]
    Storyboard(#[from] StoryboardError),
    #[error(transparent)]
    Quality(#[from] QualityError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{path} is corrupt: {message}")]
    Corrupt { path: String, message: String },
}

#[derive(Debug, Error)]
pub struct PipelineError {
    pub stage: Option<Stage>,
    #[source]
    pub kind: ErrorKind,
}

impl fmt::Display for PipelineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.stage {
            Some(s) => write!(f, "{s} stage: {}", self.kind),
            None => write!(f, "{}", self.kind),
        }
    }
}

fn backend_code(e: &BackendError) -> i32 {
    match e {
        BackendError::InvalidConfig(_) => 2,
        _ => 4,
    }
}

fn ir_code(stage: Option<Stage>) -> i32 {
    if stage == Some(Stage::Parse) {
        2
    } else {
        5
    }
}

fn director_code(e: &DirectorError, stage: Option<Stage>) -> i32 {
    match e {
        DirectorError::Backend(b) => backend_code(b),
        DirectorError::SchemaViolation(_) => 4,
        DirectorError::UnattributableDialogue { .. }
        | DirectorError::Template(_)
        | DirectorError::InvalidArgument(_) => 2,
        DirectorError::Ir(_) => ir_code(stage),
        DirectorError::UnknownRecord(_) | DirectorError::UnknownSegment(_) => 5,
    }
}

impl PipelineError {
    /// 0 ok, 2 user or input error, 3 I/O, 4 backend, 5 internal invariant.
    pub fn exit_code(&self) -> i32 {
        match &self.kind {
            ErrorKind::Workspace(WorkspaceError::Io { .. }) | ErrorKind::Io { .. } => 3,
            ErrorKind::Workspace(WorkspaceError::Corrupt { .. }) | ErrorKind::Corrupt { .. } => 3,
            ErrorKind::Workspace(_) => 2,
            ErrorKind::Ir(_) => ir_code(self.stage),
            ErrorKind::Director(e) => director_code(e, self.stage),
            ErrorKind::Cinema(e) => match e {
                CinemaError::Backend { source, .. } => backend_code(source),
                CinemaError::WrongCount { .. } | CinemaError::InvalidViewSet(_) => 4,
                CinemaError::Io(_) => 3,
                CinemaError::UnrefinedRecord(_) | CinemaError::MissingReference(_) => 5,
            },
            ErrorKind::Storyboard(e) => match e {
                StoryboardError::Director(d) => director_code(d, self.stage),
                StoryboardError::Io(_) => 3,
                StoryboardError::MissingViewSet(_) | StoryboardError::AssetMissing(_) => 5,
            },
            ErrorKind::Quality(e) => match e {
                QualityError::Backend(b) => backend_code(b),
                QualityError::InvalidModel(_) | QualityError::CorpusTooSmall(_) => 2,
                _ => 5,
            },
            ErrorKind::Backend(b) => backend_code(b),
        }
    }
}

fn at<E: Into<ErrorKind>>(stage: Stage) -> impl Fn(E) -> PipelineError {
    move |e| PipelineError { stage: Some(stage), kind: e.into() }
}

fn no_stage<E: Into<ErrorKind>>(e: E) -> PipelineError {
    PipelineError { stage: None, kind: e.into() }
}

/// Parse settings persisted next to the IR so later stages reuse them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceSettings {
    pub kind: SourceKind,
    pub max_segments_per_page: Option<usize>,
    pub strict: bool,
}

impl SourceSettings {
    fn options(&self) -> ParseOptions {
        ParseOptions { strict: self.strict, max_segments_per_page: self.max_segments_per_page }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub seed: u64,
    pub backends: BackendsConfig,
    pub source: SourceSettings,
    pub rounds: u32,
    pub prompts_dir: Option<PathBuf>,
    pub niqe_model: Option<PathBuf>,
}

impl PipelineConfig {
    /// Mock backends everywhere, seeded with `seed`.
    pub fn mock(seed: u64) -> Self {
        PipelineConfig {
            seed,
            backends: BackendsConfig::all_mock(seed),
            source: SourceSettings { kind: SourceKind::Screenplay, max_segments_per_page: None, strict: false },
            rounds: DEFAULT_ROUNDS,
            prompts_dir: None,
            niqe_model: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageOutcome {
    Ran,
    Skipped,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunSummary {
    pub stages: Vec<(Stage, StageOutcome)>,
}

pub struct Pipeline {
    ws: Workspace,
    cfg: PipelineConfig,
    backends: Backends,
    prompts: PromptSet,
}

fn read_json<T: serde::de::DeserializeOwned>(ws: &Workspace, rel: &str) -> Result<T, ErrorKind> {
    let text = ws.read_to_string(rel)?;
    serde_json::from_str(&text).map_err(|e| ErrorKind::Corrupt { path: rel.into(), message: e.to_string() })
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("value serializes")
}

/// Digest of a stage's parameters together with its upstream outputs.
fn input_digest(parts: &[&str]) -> String {
    sha256_hex(parts.join("\u{1f}").as_bytes())
}

impl Pipeline {
    pub fn new(root: &Path, cfg: PipelineConfig) -> Result<Self, PipelineError> {
        let backends = Backends::from_config(&cfg.backends).map_err(no_stage)?;
        Self::with_backends(root, cfg, backends)
    }

    /// Uses the given backends instead of connecting from the config. The
    /// config is still what gets recorded.
    pub fn with_backends(root: &Path, cfg: PipelineConfig, backends: Backends) -> Result<Self, PipelineError> {
        let ws = Workspace::open(root).map_err(no_stage)?;
        let prompts = match &cfg.prompts_dir {
            Some(dir) => PromptSet::load(dir).map_err(no_stage)?,
            None => PromptSet::default(),
        };
        Ok(Pipeline { ws, cfg, backends, prompts })
    }

    pub fn workspace(&self) -> &Workspace {
        &self.ws
    }

    fn begin(&self, stage: Stage) -> Result<(), PipelineError> {
        self.ws.check_ready(stage).map_err(at(stage))?;
        if stage != Stage::Shoot {
            // the asset tree doubles as a generation cache and is kept
            self.ws.clear(stage).map_err(at(stage))?;
        }
        Ok(())
    }

    fn finish(&self, stage: Stage, digest: String) -> Result<(), PipelineError> {
        self.ws.record(stage, digest).map_err(at(stage))?;
        let mut m = self.ws.manifest().map_err(at(stage))?;
        m.seed = self.cfg.seed;
        m.backends_digest = self.cfg.backends.digest();
        self.ws.save_manifest(&m).map_err(at(stage))?;
        self.ws.write(BACKENDS_FILE, json(&self.cfg.backends).as_bytes()).map_err(at(stage))
    }

    fn upstream(&self, stage: Stage) -> Result<String, PipelineError> {
        let up = self.ws.upstream(stage).map_err(at(stage))?;
        Ok(up.values().cloned().collect::<Vec<_>>().join(","))
    }

    fn parse_digest(&self, text: &str) -> String {
        input_digest(&[&sha256_hex(text.as_bytes()), &json(&self.cfg.source)])
    }

    fn stage_digest(&self, stage: Stage) -> Result<String, PipelineError> {
        let up = self.upstream(stage)?;
        let seed = self.cfg.seed.to_string();
        let b = &self.cfg.backends;
        Ok(match stage {
            Stage::Parse => unreachable!("parse digests its script"),
            Stage::Direct => input_digest(&[
                &up,
                &seed,
                &b.chat.digest(),
                &self.prompts.fingerprint(),
                &self.cfg.rounds.to_string(),
            ]),
            Stage::Shoot => input_digest(&[
                &up,
                &seed,
                &b.image.digest(),
                &b.multiview.digest(),
                &json(&BasePromptConfig::characters()),
                &json(&BasePromptConfig::spots()),
            ]),
            Stage::Board => input_digest(&[&up, &b.chat.digest(), &self.prompts.fingerprint()]),
            Stage::Eval => input_digest(&[&up, &b.embedding.digest(), &self.model().map_err(at(stage))?.to_json()]),
        })
    }

    fn model(&self) -> Result<PristineModel, QualityError> {
        match &self.cfg.niqe_model {
            Some(p) => PristineModel::load(p),
            None => Ok(PristineModel::shipped()),
        }
    }

    fn read_script(path: &Path) -> Result<String, PipelineError> {
        std::fs::read_to_string(path).map_err(|e| PipelineError {
            stage: Some(Stage::Parse),
            kind: ErrorKind::Io { path: path.display().to_string(), message: e.to_string() },
        })
    }

    /// Parses the script into `ir/`.
    pub fn parse(&self, script: &Path) -> Result<StageOutcome, PipelineError> {
        let _lock = self.ws.lock().map_err(at(Stage::Parse))?;
        let text = Self::read_script(script)?;
        self.do_parse(&text)
    }

    fn do_parse(&self, text: &str) -> Result<StageOutcome, PipelineError> {
        let stage = Stage::Parse;
        self.begin(stage)?;
        let s = &self.cfg.source;
        let ir = match s.kind {
            SourceKind::Screenplay => crate::script_ir::parse_screenplay_with(text, &s.options()).map_err(at(stage))?,
            SourceKind::Prose => {
                if text.trim().is_empty() {
                    return Err(at(stage)(IrError::EmptyScript));
                }
                ScriptIR::empty(RawScript::new(text, SourceKind::Prose))
            }
        };
        self.ws.write(IR_FILE, ir.to_json().as_bytes()).map_err(at(stage))?;
        self.ws.write(SOURCE_FILE, json(s).as_bytes()).map_err(at(stage))?;
        self.finish(stage, self.parse_digest(text))?;
        Ok(StageOutcome::Ran)
    }

    /// Extracts and refines entities into `db/`.
    pub fn direct(&self) -> Result<StageOutcome, PipelineError> {
        let _lock = self.ws.lock().map_err(at(Stage::Direct))?;
        self.do_direct()
    }

    fn do_direct(&self) -> Result<StageOutcome, PipelineError> {
        let stage = Stage::Direct;
        self.begin(stage)?;
        let digest = self.stage_digest(stage)?;
        let parsed: ScriptIR = read_json(&self.ws, IR_FILE).map_err(at(stage))?;
        let source: SourceSettings = read_json(&self.ws, SOURCE_FILE).map_err(at(stage))?;
        let chat = self.backends.chat.as_ref();
        let mut log = Vec::new();
        let extracted = extract_elements(&parsed.raw, &source.options(), &self.prompts, chat, &mut log).map_err(at(stage))?;
        let targets = all_targets(&extracted);
        let (refined, _events) =
            refine_entities(&extracted, &targets, self.cfg.rounds, &self.prompts, chat, &mut log).map_err(at(stage))?;
        let db = ElementDatabase::from_ir(&refined);
        for ev in &db.events {
            log.push(format!("[event] {ev}"));
        }
        refined.validate().map_err(at(stage))?;
        self.ws.write(REFINED_FILE, refined.to_json().as_bytes()).map_err(at(stage))?;
        self.ws.write("db/characters.json", json(&refined.characters).as_bytes()).map_err(at(stage))?;
        self.ws.write("db/spots.json", json(&refined.spots).as_bytes()).map_err(at(stage))?;
        self.ws.write("db/dialogues.json", json(&refined.dialogues).as_bytes()).map_err(at(stage))?;
        self.ws.write("logs/director.log", log_text(&log).as_bytes()).map_err(at(stage))?;
        self.finish(stage, digest)?;
        Ok(StageOutcome::Ran)
    }

    /// Generates reference images and turnarounds into `assets/`.
    pub fn shoot(&self) -> Result<StageOutcome, PipelineError> {
        let _lock = self.ws.lock().map_err(at(Stage::Shoot))?;
        self.do_shoot()
    }

    fn do_shoot(&self) -> Result<StageOutcome, PipelineError> {
        let stage = Stage::Shoot;
        self.begin(stage)?;
        let digest = self.stage_digest(stage)?;
        let ir: ScriptIR = read_json(&self.ws, REFINED_FILE).map_err(at(stage))?;
        let mut store = AssetStore::open(&self.ws.path("assets")).map_err(at(stage))?;
        let refs = generate_reference_images(
            &ir,
            &BasePromptConfig::characters(),
            &BasePromptConfig::spots(),
            self.cfg.seed,
            self.backends.image.as_ref(),
            &mut store,
        )
        .map_err(at(stage))?;
        if let Some((owner, message)) = refs.failed.first() {
            store.save().map_err(at(stage))?;
            return Err(at(stage)(CinemaError::Io(format!("reference image for {owner} failed: {message}"))));
        }
        generate_multiview(&refs.characters, self.backends.multiview.as_ref(), &mut store).map_err(at(stage))?;
        store.save().map_err(at(stage))?;
        self.finish(stage, digest)?;
        Ok(StageOutcome::Ran)
    }

    /// Plans and composites the storyboard into `board/`.
    pub fn board(&self) -> Result<StageOutcome, PipelineError> {
        let _lock = self.ws.lock().map_err(at(Stage::Board))?;
        self.do_board()
    }

    fn do_board(&self) -> Result<StageOutcome, PipelineError> {
        let stage = Stage::Board;
        self.begin(stage)?;
        let digest = self.stage_digest(stage)?;
        let ir: ScriptIR = read_json(&self.ws, REFINED_FILE).map_err(at(stage))?;
        let store = AssetStore::open(&self.ws.path("assets")).map_err(at(stage))?;
        let mut sets = BTreeMap::new();
        for c in &ir.characters {
            let views = (0..VIEW_COUNT as u8)
                .map(|v| store.load(AssetRole::CharacterView, &c.id, Some(v)))
                .collect::<Result<Vec<_>, _>>()
                .map_err(at(stage))?;
            sets.insert(c.id.clone(), MultiViewSet::new(&c.id, views).map_err(at(stage))?);
        }
        let mut backgrounds = BTreeMap::new();
        for s in &ir.spots {
            backgrounds.insert(s.id.clone(), store.load(AssetRole::SpotRef, &s.id, None).map_err(at(stage))?);
        }
        let out = build_storyboard(
            &ir,
            &sets,
            &backgrounds,
            &self.prompts,
            self.backends.chat.as_ref(),
            &BoardOptions::default(),
        )
        .map_err(at(stage))?;
        out.storyboard.save(&self.ws.path("board")).map_err(at(stage))?;
        self.ws.write("logs/board.log", log_text(&out.log).as_bytes()).map_err(at(stage))?;
        self.finish(stage, digest)?;
        Ok(StageOutcome::Ran)
    }

    /// Scores the storyboard into `eval/`.
    pub fn eval(&self) -> Result<StageOutcome, PipelineError> {
        let _lock = self.ws.lock().map_err(at(Stage::Eval))?;
        self.do_eval()
    }

    fn do_eval(&self) -> Result<StageOutcome, PipelineError> {
        let stage = Stage::Eval;
        self.begin(stage)?;
        let digest = self.stage_digest(stage)?;
        let ir: ScriptIR = read_json(&self.ws, REFINED_FILE).map_err(at(stage))?;
        let board = Storyboard::load(&self.ws.path("board")).map_err(at(stage))?;
        let model = self.model().map_err(at(stage))?;
        let report = evaluate_storyboard(&board, &ir, &model, self.backends.embedding.as_ref()).map_err(at(stage))?;
        self.ws.write("eval/report.json", report.to_json().as_bytes()).map_err(at(stage))?;
        self.ws.write("eval/report.txt", report.to_table().as_bytes()).map_err(at(stage))?;
        self.finish(stage, digest)?;
        Ok(StageOutcome::Ran)
    }

    /// Runs every stage in order, skipping those whose inputs and outputs
    /// are unchanged, and stopping after `stop_after` if given.
    pub fn run(&self, script: &Path, stop_after: Option<Stage>) -> Result<RunSummary, PipelineError> {
        let _lock = self.ws.lock().map_err(no_stage)?;
        let text = Self::read_script(script)?;
        let mut summary = RunSummary::default();
        for stage in Stage::ALL {
            let digest = match stage {
                Stage::Parse => self.parse_digest(&text),
                _ => self.stage_digest(stage)?,
            };
            let outcome = if self.ws.is_current(stage, &digest).map_err(at(stage))? {
                StageOutcome::Skipped
            } else {
                match stage {
                    Stage::Parse => self.do_parse(&text)?,
                    Stage::Direct => self.do_direct()?,
                    Stage::Shoot => self.do_shoot()?,
                    Stage::Board => self.do_board()?,
                    Stage::Eval => self.do_eval()?,
                }
            };
            match outcome {
                StageOutcome::Ran => log::info!("{stage}: done"),
                StageOutcome::Skipped => log::info!("{stage}: up to date, skipped"),
            }
            summary.stages.push((stage, outcome));
            if Some(stage) == stop_after {
                break;
            }
        }
        Ok(summary)
    }
}

fn log_text(lines: &[String]) -> String {
    let mut s = lines.join("\n");
    if !s.is_empty() {
        s.push('\n');
    }
    s
}
