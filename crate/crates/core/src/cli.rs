//! The `mare` command line: `run`, `eval`, `replay` and `inspect`.
//!
//! Exit codes: 0 success, 1 operational error (including usage errors),
//! 2 the pipeline ended with an error report, 3 `replay --verify` mismatch.

use std::ffi::OsString;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::actions::{ActionCatalog, ActionKind};
use crate::agents::{Recipient, Role, RoleCatalog};
use crate::backend::{
    Backend, GenerationParams, HttpBackend, HttpConfig, RecordingBackend, ScriptedBackend, Transcript,
};
use crate::evaluation::{aggregate, evaluate_case_with, render_table, Averaging, GoldCase, Matching};
use crate::fsutil::write_atomic;
use crate::metamodels::{MetamodelKind, RequirementsModel};
use crate::orchestrator::{PipelineConfig, PipelineRun, RunOptions, RunOutcome, RunStatus};
use crate::workspace::{ArtifactFilter, Clock, LogicalClock, SystemClock, Workspace, WorkspaceSnapshot};

pub const EXIT_SUCCESS: i32 = 0;
pub const EXIT_OPERATIONAL: i32 = 1;
pub const EXIT_PIPELINE_FAILURE: i32 = 2;
pub const EXIT_VERIFY_MISMATCH: i32 = 3;

/// Files a run directory may contain.
pub const WORKSPACE_FILE: &str = "workspace.json";
pub const SRS_FILE: &str = "srs.md";
pub const ERROR_REPORT_FILE: &str = "error_report.md";
pub const DIAGNOSTIC_FILE: &str = "diagnostic.md";
pub const MODEL_FILE: &str = "model.json";
pub const STEPS_FILE: &str = "steps.jsonl";
pub const MANIFEST_FILE: &str = "run.json";
pub const EVAL_REPORT_FILE: &str = "eval_report.json";

#[derive(Debug, Parser)]
#[command(name = "mare", version, about = "Multi-agent requirements engineering from a rough idea")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the pipeline on a rough idea and write a run directory.
    Run(RunArgs),
    /// Score predicted requirements models against gold cases.
    Eval(EvalArgs),
    /// Re-run a pipeline from a recorded transcript.
    Replay(ReplayArgs),
    /// Print the artifacts of a workspace snapshot.
    Inspect(InspectArgs),
}

/// Where generations come from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendSpec {
    Live,
    Scripted(PathBuf),
    /// Record into this sink; the inner backend is chosen with `--inner`.
    Record(PathBuf),
}

impl FromStr for BackendSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let path = |p: &str| {
            if p.is_empty() {
                Err(format!("`{s}` needs a path"))
            } else {
                Ok(PathBuf::from(p))
            }
        };
        match s.split_once(':') {
            None if s == "live" => Ok(BackendSpec::Live),
            Some(("scripted", p)) => path(p).map(BackendSpec::Scripted),
            Some(("record", p)) => path(p).map(BackendSpec::Record),
            _ => Err(format!("unknown backend `{s}` (expected live, scripted:<path> or record:<path>)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClockKind {
    System,
    Logical,
}

impl ClockKind {
    fn build(self) -> Arc<dyn Clock> {
        match self {
            ClockKind::System => Arc::new(SystemClock),
            ClockKind::Logical => Arc::new(LogicalClock::default()),
        }
    }
}

/// Overrides for the pipeline configuration and generation parameters.
#[derive(Debug, Clone, Default, Args)]
pub struct PipelineArgs {
    #[arg(long)]
    pub metamodel: Option<MetamodelKind>,
    #[arg(long)]
    pub stakeholders: Option<u32>,
    /// User stories per stakeholder.
    #[arg(long)]
    pub user_stories: Option<u32>,
    #[arg(long)]
    pub qa_rounds: Option<u32>,
    #[arg(long)]
    pub max_iterations: Option<u32>,
    /// JSON file with optional `pipeline` and `params` objects.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, env = "MARE_MODEL")]
    pub model: Option<String>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub max_tokens: Option<u32>,
    /// Directory of prompt and template overrides.
    #[arg(long)]
    pub prompts: Option<PathBuf>,
    /// Role catalog JSON replacing the built-in agents.
    #[arg(long)]
    pub roles: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long, conflicts_with = "idea_file", required_unless_present = "idea_file")]
    pub idea: Option<String>,
    #[arg(long)]
    pub idea_file: Option<PathBuf>,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    /// Pause after each failed check and read feedback from the terminal.
    #[arg(long)]
    pub interactive: bool,
    /// live, scripted:<transcript> or record:<sink>.
    #[arg(long, default_value = "live")]
    pub backend: BackendSpec,
    /// Backend wrapped by record:<sink>; live or scripted:<transcript>.
    #[arg(long)]
    pub inner: Option<BackendSpec>,
    #[arg(long, env = "MARE_API_URL")]
    pub api_url: Option<String>,
    /// Defaults to system for live runs and logical otherwise.
    #[arg(long, value_enum)]
    pub clock: Option<ClockKind>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// model.json or a run directory; repeat once per gold case.
    #[arg(long, required = true)]
    pub predicted: Vec<PathBuf>,
    /// Gold case JSON, paired with --predicted in order.
    #[arg(long, required = true)]
    pub gold: Vec<PathBuf>,
    /// Token Jaccard threshold in (0, 1] for fuzzy label matching.
    #[arg(long)]
    pub fuzzy: Option<f64>,
    /// Pool counts across cases instead of averaging per-case scores.
    #[arg(long)]
    pub micro: bool,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ReplayArgs {
    pub transcript: PathBuf,
    /// Run directory whose run.json supplies the idea and configuration.
    #[arg(long)]
    pub run_dir: Option<PathBuf>,
    /// Require a byte-identical workspace and transcript.
    #[arg(long, requires = "run_dir")]
    pub verify: bool,
    #[arg(long, conflicts_with_all = ["idea_file", "run_dir"])]
    pub idea: Option<String>,
    #[arg(long, conflicts_with = "run_dir")]
    pub idea_file: Option<PathBuf>,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct InspectArgs {
    /// workspace.json or a run directory.
    pub path: PathBuf,
    #[arg(long)]
    pub caused_by: Option<ActionKind>,
    #[arg(long)]
    pub role: Option<Role>,
    #[arg(long)]
    pub send_to: Option<Recipient>,
    /// Print matching envelopes as a JSON array.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct ConfigFile {
    pipeline: Option<PipelineConfig>,
    params: Option<GenerationParams>,
}

/// Written to `run.json`; everything needed to replay the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub rough_idea: String,
    pub config: PipelineConfig,
    pub params: GenerationParams,
    pub clock: ClockKind,
    #[serde(default)]
    pub prompts: Option<PathBuf>,
    #[serde(default)]
    pub roles: Option<PathBuf>,
    /// SHA-256 of the transcript the run was recorded into or scripted from.
    #[serde(default)]
    pub transcript_sha256: Option<String>,
    pub status: RunStatus,
    #[serde(default)]
    pub warnings: Vec<String>,
}

#[derive(Debug)]
struct CliError {
    code: i32,
    message: String,
}

impl CliError {
    fn op(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_OPERATIONAL,
            message: message.into(),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

struct Io<'a> {
    stdin: &'a mut dyn BufRead,
    stdout: &'a mut dyn Write,
    stderr: &'a mut dyn Write,
}

/// Parses `args` (program name first) and runs the command. Returns the exit code.
pub fn run_cli<I, T>(args: I, stdin: &mut dyn BufRead, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{}", e.render());
                    EXIT_SUCCESS
                }
                _ => {
                    let _ = write!(stderr, "{}", e.render());
                    EXIT_OPERATIONAL
                }
            };
        }
    };
    let mut io = Io { stdin, stdout, stderr };
    let result = match cli.command {
        Command::Run(a) => cmd_run(&a, &mut io),
        Command::Eval(a) => cmd_eval(&a, &mut io),
        Command::Replay(a) => cmd_replay(&a, &mut io),
        Command::Inspect(a) => cmd_inspect(&a, &mut io),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(io.stderr, "error: {}", e.message);
            e.code
        }
    }
}

fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::op(format!("cannot read {}: {e}", path.display())))
}

fn read_idea(idea: &Option<String>, idea_file: &Option<PathBuf>) -> CliResult<Option<String>> {
    let text = match (idea, idea_file) {
        (Some(s), _) => s.clone(),
        (None, Some(p)) => read_text(p)?,
        (None, None) => return Ok(None),
    };
    if text.trim().is_empty() {
        return Err(CliError::op("usage: the rough idea is empty (pass --idea TEXT or --idea-file PATH)"));
    }
    Ok(Some(text.trim().to_string()))
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Applies the config file, then flags and environment, over `config`/`params`.
fn resolve(args: &PipelineArgs, config: &mut PipelineConfig, params: &mut GenerationParams) -> CliResult<()> {
    if let Some(path) = &args.config {
        let file: ConfigFile = serde_json::from_str(&read_text(path)?)
            .map_err(|e| CliError::op(format!("invalid config file {}: {e}", path.display())))?;
        if let Some(c) = file.pipeline {
            *config = c;
        }
        if let Some(p) = file.params {
            *params = p;
        }
    }
    if let Some(m) = args.metamodel {
        config.metamodel = m;
    }
    if let Some(v) = args.stakeholders {
        config.stakeholder_count = v;
    }
    if let Some(v) = args.user_stories {
        config.num_user_stories = v;
    }
    if let Some(v) = args.qa_rounds {
        config.qa_rounds = v;
    }
    if let Some(v) = args.max_iterations {
        config.max_check_iterations = v;
    }
    if let Some(m) = &args.model {
        params.model_name = m.clone();
    }
    if let Some(t) = args.temperature {
        params.temperature = t;
    }
    if let Some(t) = args.max_tokens {
        params.max_tokens = t;
    }
    config.validate().map_err(|e| CliError::op(e.to_string()))?;
    params.validate().map_err(|e| CliError::op(e.to_string()))?;
    Ok(())
}

fn catalogs(prompts: &Option<PathBuf>, roles: &Option<PathBuf>) -> CliResult<(ActionCatalog, RoleCatalog)> {
    let actions = match prompts {
        Some(dir) => ActionCatalog::builtin()
            .with_overrides(dir)
            .map_err(|e| CliError::op(e.to_string()))?,
        None => ActionCatalog::builtin(),
    };
    let roles = match roles {
        Some(p) => RoleCatalog::from_file(p).map_err(|e| CliError::op(e.to_string()))?,
        None => RoleCatalog::builtin(),
    };
    Ok((actions, roles))
}

fn live_backend(api_url: &Option<String>) -> CliResult<Box<dyn Backend>> {
    let mut config = HttpConfig::from_env();
    if let Some(url) = api_url {
        config.url = url.clone();
    }
    Ok(Box::new(HttpBackend::new(config).map_err(|e| CliError::op(e.to_string()))?))
}

fn load_transcript(path: &Path) -> CliResult<(Transcript, String)> {
    let bytes = std::fs::read(path).map_err(|e| CliError::op(format!("cannot read {}: {e}", path.display())))?;
    let text = String::from_utf8(bytes.clone())
        .map_err(|_| CliError::op(format!("{} is not UTF-8", path.display())))?;
    let t = Transcript::from_jsonl(&text).map_err(|e| CliError::op(format!("{}: {e}", path.display())))?;
    Ok((t, sha256_hex(&bytes)))
}

fn status_code(status: RunStatus) -> i32 {
    match status {
        RunStatus::Success => EXIT_SUCCESS,
        RunStatus::Failure => EXIT_PIPELINE_FAILURE,
        RunStatus::Aborted => EXIT_OPERATIONAL,
    }
}

fn status_name(status: RunStatus) -> &'static str {
    match status {
        RunStatus::Success => "success",
        RunStatus::Failure => "failure",
        RunStatus::Aborted => "aborted",
    }
}

fn write_file(dir: &Path, name: &str, contents: &str) -> CliResult<()> {
    let path = dir.join(name);
    write_atomic(&path, contents.as_bytes()).map_err(|e| CliError::op(format!("cannot write {}: {e}", path.display())))
}

/// Writes every run artifact; stale outputs of an earlier run are removed first.
fn write_run_dir(dir: &Path, manifest: &RunManifest, outcome: &RunOutcome) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::op(format!("cannot create {}: {e}", dir.display())))?;
    for stale in [SRS_FILE, ERROR_REPORT_FILE, DIAGNOSTIC_FILE, MODEL_FILE] {
        match std::fs::remove_file(dir.join(stale)) {
            Err(e) if e.kind() != std::io::ErrorKind::NotFound => {
                return Err(CliError::op(format!("cannot remove stale {stale}: {e}")));
            }
            _ => {}
        }
    }
    write_file(dir, WORKSPACE_FILE, &outcome.workspace.to_json())?;
    let final_name = match outcome.status {
        RunStatus::Success => SRS_FILE,
        RunStatus::Failure => ERROR_REPORT_FILE,
        RunStatus::Aborted => DIAGNOSTIC_FILE,
    };
    write_file(dir, final_name, &outcome.final_artifact)?;
    if let Some(model) = &outcome.model {
        write_file(dir, MODEL_FILE, &(model.canonical_serialize() + "\n"))?;
    }
    let steps: String = outcome
        .step_log
        .iter()
        .map(|s| serde_json::to_string(s).expect("step serializes") + "\n")
        .collect();
    write_file(dir, STEPS_FILE, &steps)?;
    let manifest = serde_json::to_string_pretty(manifest).expect("manifest serializes") + "\n";
    write_file(dir, MANIFEST_FILE, &manifest)
}

fn report_outcome(io: &mut Io<'_>, outcome: &RunOutcome, out: Option<&Path>) {
    for w in &outcome.warnings {
        let _ = writeln!(io.stderr, "warning: {w}");
    }
    if let Some(d) = &outcome.diagnostic {
        let _ = writeln!(io.stderr, "error: {d}");
    }
    let _ = writeln!(io.stdout, "status: {}", status_name(outcome.status));
    let _ = writeln!(io.stdout, "steps: {}", outcome.step_log.len());
    if let Some(dir) = out {
        let _ = writeln!(io.stdout, "output: {}", dir.display());
    }
}

fn cmd_run(args: &RunArgs, io: &mut Io<'_>) -> CliResult<i32> {
    let idea = read_idea(&args.idea, &args.idea_file)?.expect("clap requires an idea source");
    let mut config = PipelineConfig::default();
    let mut params = GenerationParams::default();
    resolve(&args.pipeline, &mut config, &mut params)?;
    if args.interactive {
        config.interactive = true;
    }
    let (actions, roles) = catalogs(&args.pipeline.prompts, &args.pipeline.roles)?;
    let clock = args.clock.unwrap_or(match args.backend {
        BackendSpec::Live => ClockKind::System,
        _ => ClockKind::Logical,
    });
    if args.inner.is_some() && !matches!(args.backend, BackendSpec::Record(_)) {
        return Err(CliError::op("--inner only applies to --backend record:<sink>"));
    }

    let mut scripted_sha = None;
    let backend: Box<dyn Backend> = match &args.backend {
        BackendSpec::Live => live_backend(&args.api_url)?,
        BackendSpec::Scripted(p) => {
            let (t, sha) = load_transcript(p)?;
            scripted_sha = Some(sha);
            Box::new(ScriptedBackend::from_transcript(&t))
        }
        BackendSpec::Record(sink) => {
            let inner: Box<dyn Backend> = match args.inner.clone().unwrap_or(BackendSpec::Live) {
                BackendSpec::Live => live_backend(&args.api_url)?,
                BackendSpec::Scripted(p) => {
                    if p == *sink {
                        return Err(CliError::op("the record sink must differ from the scripted transcript"));
                    }
                    Box::new(ScriptedBackend::from_transcript(&load_transcript(&p)?.0))
                }
                BackendSpec::Record(_) => return Err(CliError::op("--inner cannot itself record")),
            };
            if let Some(parent) = sink.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent)
                    .map_err(|e| CliError::op(format!("cannot create {}: {e}", parent.display())))?;
            }
            Box::new(RecordingBackend::new(inner, sink).map_err(|e| CliError::op(e.to_string()))?)
        }
    };

    let options = RunOptions {
        roles,
        actions,
        params: params.clone(),
        clock: clock.build(),
    };
    let run = PipelineRun::start(&idea, &config, backend.as_ref(), options).map_err(|e| CliError::op(e.to_string()))?;
    let stdin = &mut *io.stdin;
    let stderr = &mut *io.stderr;
    let mut ask = |run: &PipelineRun<'_>| -> Option<String> {
        let _ = writeln!(
            stderr,
            "=== check iteration {} of {} failed; the error report is in the workspace ===",
            run.state().iteration,
            run.config().max_check_iterations
        );
        let _ = write!(stderr, "feedback for the next draft (empty line to skip): ");
        let _ = stderr.flush();
        let mut line = String::new();
        match stdin.read_line(&mut line) {
            Ok(n) if n > 0 && !line.trim().is_empty() => Some(line.trim().to_string()),
            _ => None,
        }
    };
    let outcome = run.run_to_end(&mut ask);
    drop(backend);

    let transcript_sha256 = match &args.backend {
        BackendSpec::Record(sink) => Some(sha256_hex(
            &std::fs::read(sink).map_err(|e| CliError::op(format!("cannot read {}: {e}", sink.display())))?,
        )),
        _ => scripted_sha,
    };
    let manifest = RunManifest {
        rough_idea: idea,
        config,
        params,
        clock,
        prompts: args.pipeline.prompts.clone(),
        roles: args.pipeline.roles.clone(),
        transcript_sha256,
        status: outcome.status,
        warnings: outcome.warnings.clone(),
    };
    write_run_dir(&args.out, &manifest, &outcome)?;
    report_outcome(io, &outcome, Some(&args.out));
    Ok(status_code(outcome.status))
}

fn load_predicted(path: &Path) -> CliResult<RequirementsModel> {
    let file = if path.is_dir() { path.join(MODEL_FILE) } else { path.to_path_buf() };
    RequirementsModel::canonical_parse(&read_text(&file)?)
        .map_err(|e| CliError::op(format!("{}: {e}", file.display())))
}

fn cmd_eval(args: &EvalArgs, io: &mut Io<'_>) -> CliResult<i32> {
    if args.predicted.len() != args.gold.len() {
        return Err(CliError::op(format!(
            "{} --predicted but {} --gold; pass one of each per case",
            args.predicted.len(),
            args.gold.len()
        )));
    }
    let matching = match args.fuzzy {
        Some(t) => Matching::fuzzy(t).map_err(|e| CliError::op(e.to_string()))?,
        None => Matching::Exact,
    };
    let averaging = if args.micro { Averaging::Micro } else { Averaging::Macro };
    let mut cases = Vec::new();
    for (p, g) in args.predicted.iter().zip(&args.gold) {
        let predicted = load_predicted(p)?;
        let gold = GoldCase::from_file(g).map_err(|e| CliError::op(format!("{}: {e}", g.display())))?;
        let m = evaluate_case_with(&predicted, &gold, matching)
            .map_err(|e| CliError::op(format!("{}: {e}", gold.case_id)))?;
        cases.push(m);
    }
    let report = aggregate(&cases, averaging).map_err(|e| CliError::op(e.to_string()))?;
    let _ = write!(io.stdout, "{}", render_table(&report));

    let report_path = match &args.report {
        Some(p) => p.clone(),
        None => {
            let first = &args.predicted[0];
            let dir = if first.is_dir() {
                first.clone()
            } else {
                first.parent().map(Path::to_path_buf).unwrap_or_default()
            };
            dir.join(EVAL_REPORT_FILE)
        }
    };
    let json = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    write_atomic(&report_path, json.as_bytes())
        .map_err(|e| CliError::op(format!("cannot write {}: {e}", report_path.display())))?;
    Ok(EXIT_SUCCESS)
}

fn first_difference(expected: &str, actual: &WorkspaceSnapshot) -> String {
    let Ok(exp) = serde_json::from_str::<WorkspaceSnapshot>(expected) else {
        return "the recorded workspace.json does not parse".into();
    };
    for (i, (e, a)) in exp.envelopes.iter().zip(&actual.envelopes).enumerate() {
        if e != a {
            return format!("envelope {} ({}) differs", i + 1, e.caused_by);
        }
    }
    if exp.envelopes.len() != actual.envelopes.len() {
        return format!(
            "recorded run has {} envelopes, replay has {}",
            exp.envelopes.len(),
            actual.envelopes.len()
        );
    }
    "snapshot bytes differ".into()
}

fn cmd_replay(args: &ReplayArgs, io: &mut Io<'_>) -> CliResult<i32> {
    let manifest = match &args.run_dir {
        Some(dir) => {
            let path = dir.join(MANIFEST_FILE);
            let m: RunManifest = serde_json::from_str(&read_text(&path)?)
                .map_err(|e| CliError::op(format!("invalid {}: {e}", path.display())))?;
            Some(m)
        }
        None => None,
    };
    let mismatch = |message: String| CliError {
        code: EXIT_VERIFY_MISMATCH,
        message: format!("verification failed: {message}"),
    };

    let bytes = std::fs::read(&args.transcript)
        .map_err(|e| CliError::op(format!("cannot read {}: {e}", args.transcript.display())))?;
    let sha = sha256_hex(&bytes);
    if args.verify {
        let recorded = manifest.as_ref().and_then(|m| m.transcript_sha256.as_deref());
        if let Some(recorded) = recorded {
            if recorded != sha {
                let _ = writeln!(io.stderr, "transcript hash {sha} differs from recorded {recorded}");
            }
        }
    }
    let transcript = match load_transcript(&args.transcript) {
        Ok((t, _)) => t,
        Err(e) if args.verify => return Err(mismatch(e.message)),
        Err(e) => return Err(e),
    };

    let (idea, mut config, mut params, prompts, roles, recorded_clock) = match &manifest {
        Some(m) => (
            m.rough_idea.clone(),
            m.config.clone(),
            m.params.clone(),
            m.prompts.clone(),
            m.roles.clone(),
            m.clock,
        ),
        None => {
            let idea = read_idea(&args.idea, &args.idea_file)?
                .ok_or_else(|| CliError::op("replay needs --run-dir or --idea/--idea-file"))?;
            (idea, PipelineConfig::default(), GenerationParams::default(), None, None, ClockKind::Logical)
        }
    };
    resolve(&args.pipeline, &mut config, &mut params)?;
    // Replays never pause for feedback; injected feedback is not in the transcript.
    config.interactive = false;
    let prompts = args.pipeline.prompts.clone().or(prompts);
    let roles = args.pipeline.roles.clone().or(roles);
    let (actions, role_catalog) = catalogs(&prompts, &roles)?;
    if args.verify && recorded_clock == ClockKind::System {
        let _ = writeln!(io.stderr, "warning: the run used the system clock; timestamps cannot match");
    }

    let backend = ScriptedBackend::from_transcript(&transcript);
    let options = RunOptions {
        roles: role_catalog,
        actions,
        params: params.clone(),
        clock: ClockKind::Logical.build(),
    };
    let run = PipelineRun::start(&idea, &config, &backend, options).map_err(|e| CliError::op(e.to_string()))?;
    let outcome = run.run_to_end(&mut |_| None);

    if let Some(out) = &args.out {
        let m = RunManifest {
            rough_idea: idea.clone(),
            config: config.clone(),
            params: params.clone(),
            clock: ClockKind::Logical,
            prompts: prompts.clone(),
            roles: roles.clone(),
            transcript_sha256: Some(sha.clone()),
            status: outcome.status,
            warnings: outcome.warnings.clone(),
        };
        write_run_dir(out, &m, &outcome)?;
    }
    report_outcome(io, &outcome, args.out.as_deref());

    if !args.verify {
        return Ok(status_code(outcome.status));
    }
    let dir = args.run_dir.as_ref().expect("--verify requires --run-dir");
    if outcome.status == RunStatus::Aborted {
        return Err(mismatch("the replay aborted before finishing".into()));
    }
    let expected = read_text(&dir.join(WORKSPACE_FILE))?;
    if expected != outcome.workspace.to_json() {
        return Err(mismatch(first_difference(&expected, &outcome.workspace)));
    }
    let manifest = manifest.expect("run dir manifest");
    match &manifest.transcript_sha256 {
        Some(recorded) if *recorded != sha => {
            return Err(mismatch("the transcript differs from the one the run was recorded with".into()));
        }
        None => {
            let _ = writeln!(io.stderr, "warning: run.json has no transcript hash; compared the workspace only");
        }
        _ => {}
    }
    let _ = writeln!(
        io.stdout,
        "verified: {} envelopes identical",
        outcome.workspace.envelopes.len()
    );
    Ok(EXIT_SUCCESS)
}

fn cmd_inspect(args: &InspectArgs, io: &mut Io<'_>) -> CliResult<i32> {
    let file = if args.path.is_dir() { args.path.join(WORKSPACE_FILE) } else { args.path.clone() };
    let ws = Workspace::restore_json(&read_text(&file)?)
        .map_err(|e| CliError::op(format!("{}: {e}", file.display())))?;
    let mut filter = ArtifactFilter::all();
    if let Some(k) = args.caused_by {
        filter = filter.caused_by(k);
    }
    if let Some(r) = args.role {
        filter = filter.role(r);
    }
    if let Some(t) = args.send_to {
        filter = filter.send_to(t);
    }
    let found = ws.query(&filter);
    if args.json {
        let _ = writeln!(io.stdout, "{}", serde_json::to_string_pretty(&found).expect("envelopes serialize"));
        return Ok(EXIT_SUCCESS);
    }
    for e in &found {
        let _ = writeln!(
            io.stdout,
            "#{} {} [{}] {} -> {} at {}",
            e.seq,
            e.caused_by,
            e.role,
            e.sent_from,
            e.send_to,
            e.created_at.to_rfc3339()
        );
        let _ = writeln!(io.stdout, "{}\n", e.content.trim_end());
    }
    let _ = writeln!(io.stdout, "{} of {} envelopes", found.len(), ws.len());
    Ok(EXIT_SUCCESS)
}
