use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;
use tracing_subscriber::EnvFilter;

use vid2coach::compiler::{RecipeMetadata, Transcript};
use vid2coach::config::Config;
use vid2coach::eval::{self, ClauseJudge, FactJudge, MatchMode, ModelJudge};
use vid2coach::frames::open_video;
use vid2coach::gateway::{BackendKind, Gateway};
use vid2coach::knowledge::{KnowledgeBase, Manifest, UserProfile};
use vid2coach::offline::OfflineResponder;
use vid2coach::pipeline;
use vid2coach::plan::CoachPlan;
use vid2coach::session::replay::{self, Replay};
use vid2coach::session::server::{self, SessionFactory};
use vid2coach::session::{Clock, ExecMode, Session, SimClock};

#[derive(Parser)]
#[command(
    name = "vid2coach",
    version,
    about = "Compile how-to videos into coach plans and run assistance sessions"
)]
struct Cli {
    /// Model backend; defaults to $MODEL_BACKEND, then mock.
    #[arg(long, global = true, value_enum)]
    backend: Option<Backend>,
    /// TOML config with [frames], [session] and [knowledge] tables.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Backend {
    Live,
    Mock,
    Scripted,
}

impl From<Backend> for BackendKind {
    fn from(b: Backend) -> Self {
        match b {
            Backend::Live => BackendKind::Live,
            Backend::Mock => BackendKind::Mock,
            Backend::Scripted => BackendKind::Scripted,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Video + transcript (+ metadata) → coach plan JSON.
    Compile(CompileArgs),
    /// Ingest a source manifest into a JSONL chunk store.
    KbIngest(KbIngestArgs),
    /// Serve live sessions over WebSocket.
    Serve(ServeArgs),
    /// Replay a timestamped fixture against a plan; prints the event log.
    Replay(ReplayArgs),
    /// Score descriptions at the level of atomic facts.
    EvalDesc(EvalDescArgs),
    /// Per-frame monitoring accuracy by action type and field of view.
    EvalMonitor(EvalMonitorArgs),
}

#[derive(Args)]
struct CompileArgs {
    #[arg(long)]
    transcript: PathBuf,
    /// Frame directory (video.json + frames/) or a media file.
    #[arg(long)]
    video: PathBuf,
    #[arg(long)]
    metadata: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Also write the compile report as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct KbIngestArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// JSONL store to append to; defaults to the config's knowledge.store.
    #[arg(long)]
    store: Option<PathBuf>,
}

#[derive(Args)]
struct SessionArgs {
    #[arg(long)]
    plan: PathBuf,
    #[arg(long)]
    profile: Option<PathBuf>,
    /// JSONL chunk store; defaults to the config's knowledge.store.
    #[arg(long)]
    kb: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    #[command(flatten)]
    session: SessionArgs,
    #[arg(long, default_value_t = 8765)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// Exit after this many connections have closed.
    #[arg(long)]
    max_connections: Option<usize>,
}

#[derive(Args)]
struct ReplayArgs {
    #[command(flatten)]
    session: SessionArgs,
    #[arg(long)]
    fixture: PathBuf,
    /// Write the event log here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Judge {
    /// Sentence and clause splitter with text matching.
    Clause,
    /// The configured model backend.
    Model,
}

#[derive(Args)]
struct EvalDescArgs {
    /// JSONL of {id, generated, narration, reference, labels?}.
    #[arg(long)]
    items: PathBuf,
    /// JSON map of item id to per-fact hallucination flags.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Judge::Clause)]
    judge: Judge,
    /// Match facts by identical normalized text only.
    #[arg(long)]
    exact: bool,
    #[command(flatten)]
    out: ReportOut,
}

#[derive(Args)]
struct EvalMonitorArgs {
    /// CSV with frame_id, action_id, action_type, fov, gold_status.
    #[arg(long)]
    labels: PathBuf,
    /// JSON map or list of per-frame predicted statuses.
    #[arg(long)]
    verdicts: PathBuf,
    #[command(flatten)]
    out: ReportOut,
}

#[derive(Args)]
struct ReportOut {
    /// Write the JSON report here.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Write the markdown report here instead of stdout.
    #[arg(long)]
    markdown: Option<PathBuf>,
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Invalid(_) => 2,
            CliError::Failed(_) => 1,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn invalid(e: impl std::fmt::Display) -> CliError {
    CliError::Invalid(e.to_string())
}

fn failed(e: impl std::fmt::Display) -> CliError {
    CliError::Failed(e.to_string())
}

fn require(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::Invalid(format!("missing input file {}", path.display())))
    }
}

fn read(path: &Path) -> Result<String> {
    require(path)?;
    std::fs::read_to_string(path).map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))
}

fn write(path: &Path, body: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| failed(format!("cannot create {}: {e}", dir.display())))?;
    }
    std::fs::write(path, body).map_err(|e| failed(format!("cannot write {}: {e}", path.display())))
}

fn gateway(backend: Option<Backend>) -> Result<Gateway> {
    Gateway::from_env(backend.map(Into::into), Some(Arc::new(OfflineResponder))).map_err(invalid)
}

fn compile(cli: &Cli, config: &Config, args: &CompileArgs) -> Result<()> {
    let transcript = Transcript::from_json(&read(&args.transcript)?).map_err(invalid)?;
    require(&args.video)?;
    let video = open_video(&args.video).map_err(invalid)?;
    let metadata: Option<RecipeMetadata> = match &args.metadata {
        Some(p) => Some(serde_json::from_str(&read(p)?).map_err(|e| invalid(format!("{}: {e}", p.display())))?),
        None => None,
    };
    let gateway = gateway(cli.backend)?;
    let (plan, report) = pipeline::compile(&gateway, &transcript, video.as_ref(), metadata.as_ref(), &config.frames)
        .map_err(|e| match e {
            pipeline::PipelineError::Compile(
                vid2coach::compiler::CompileError::Transcript(_)
                | vid2coach::compiler::CompileError::NoInstructionalContent,
            )
            | pipeline::PipelineError::Plan(_) => invalid(e),
            e => failed(e),
        })?;
    write(&args.out, &(plan.to_json_pretty() + "\n"))?;
    if let Some(p) = &args.report {
        write(p, &(serde_json::to_string_pretty(&report).map_err(failed)? + "\n"))?;
    }
    tracing::info!(steps = plan.steps.len(), actions = plan.action_count(), out = %args.out.display(), "plan written");
    Ok(())
}

fn kb_ingest(cli: &Cli, config: &Config, args: &KbIngestArgs) -> Result<()> {
    require(&args.manifest)?;
    let store = args
        .store
        .clone()
        .or_else(|| config.knowledge.store.clone())
        .ok_or_else(|| invalid("no store given; pass --store or set knowledge.store"))?;
    let (manifest, base) = Manifest::load(&args.manifest).map_err(invalid)?;
    let mut kb = if store.exists() {
        KnowledgeBase::load(&store).map_err(invalid)?
    } else {
        KnowledgeBase::new()
    };
    let gateway = gateway(cli.backend)?;
    let (added, report) = kb.ingest_manifest(&gateway, &manifest, &base).map_err(failed)?;
    KnowledgeBase::append_to(&store, &added).map_err(failed)?;
    for (source, why) in &report.skipped {
        eprintln!("skipped {source}: {why}");
    }
    println!(
        "{} chunks added to {} from corpus {:?}",
        added.len(),
        store.display(),
        manifest.name
    );
    Ok(())
}

struct SessionInputs {
    plan: CoachPlan,
    profile: UserProfile,
    kb: KnowledgeBase,
}

fn session_inputs(config: &Config, args: &SessionArgs) -> Result<SessionInputs> {
    require(&args.plan)?;
    let plan = CoachPlan::load(&args.plan).map_err(invalid)?;
    plan.validate().map_err(invalid)?;
    let profile = match &args.profile {
        Some(p) => serde_json::from_str(&read(p)?).map_err(|e| invalid(format!("{}: {e}", p.display())))?,
        None => UserProfile::default(),
    };
    let kb = match args.kb.clone().or_else(|| config.knowledge.store.clone()) {
        Some(p) => {
            require(&p)?;
            KnowledgeBase::load(&p).map_err(invalid)?
        }
        None => KnowledgeBase::new(),
    };
    Ok(SessionInputs { plan, profile, kb })
}

fn serve(cli: &Cli, config: &Config, args: &ServeArgs) -> Result<()> {
    let inputs = session_inputs(config, &args.session)?;
    let gateway = Arc::new(gateway(cli.backend)?);
    let kb = Arc::new(inputs.kb);
    let session_config = config.session.clone();
    let (plan, profile) = (inputs.plan, inputs.profile);
    let factory: Arc<SessionFactory> = Arc::new(move |clock: Arc<dyn Clock>| {
        Session::start(
            plan.clone(),
            profile.clone(),
            gateway.clone(),
            kb.clone(),
            session_config.clone(),
            clock,
            ExecMode::Deferred,
        )
    });
    let listener = TcpListener::bind((args.host.as_str(), args.port))
        .map_err(|e| failed(format!("cannot bind {}:{}: {e}", args.host, args.port)))?;
    let addr = listener.local_addr().map_err(failed)?;
    println!("listening on ws://{addr}");
    server::serve(listener, factory, args.max_connections);
    Ok(())
}

fn run_replay(cli: &Cli, config: &Config, args: &ReplayArgs) -> Result<()> {
    let inputs = session_inputs(config, &args.session)?;
    require(&args.fixture)?;
    let fixture = Replay::load(&args.fixture).map_err(invalid)?;
    let clock = Arc::new(SimClock::new());
    let mut session_config = config.session.clone();
    session_config.ticks = fixture.ticks;
    let mut session = Session::start(
        inputs.plan,
        inputs.profile,
        Arc::new(gateway(cli.backend)?),
        Arc::new(inputs.kb),
        session_config,
        clock.clone(),
        ExecMode::Inline,
    )
    .map_err(invalid)?;
    let log = replay::to_jsonl(&replay::run(&mut session, &clock, &fixture));
    match &args.out {
        Some(p) => write(p, &log),
        None => {
            print!("{log}");
            Ok(())
        }
    }
}

fn emit_report(out: &ReportOut, markdown: &str, json: String) -> Result<()> {
    if let Some(p) = &out.json {
        write(p, &(json + "\n"))?;
    }
    match &out.markdown {
        Some(p) => write(p, markdown),
        None => {
            print!("{markdown}");
            Ok(())
        }
    }
}

fn eval_error(e: eval::EvalError) -> CliError {
    match e {
        eval::EvalError::Io { .. } | eval::EvalError::Format(_) | eval::EvalError::Argument(_) => invalid(e),
    }
}

fn eval_desc(cli: &Cli, args: &EvalDescArgs) -> Result<()> {
    require(&args.items)?;
    let items = eval::facts::load_items(&args.items).map_err(eval_error)?;
    let labels = match &args.labels {
        Some(p) => {
            require(p)?;
            Some(eval::facts::load_labels(p).map_err(eval_error)?)
        }
        None => None,
    };
    let gw;
    let judge: Box<dyn FactJudge> = match args.judge {
        Judge::Clause => Box::new(ClauseJudge {
            mode: if args.exact {
                MatchMode::Exact
            } else {
                MatchMode::Containment
            },
        }),
        Judge::Model => {
            gw = gateway(cli.backend)?;
            Box::new(ModelJudge { gateway: &gw })
        }
    };
    let report = eval::score_items(judge.as_ref(), &items, labels.as_ref()).map_err(eval_error)?;
    emit_report(
        &args.out,
        &report.to_markdown(),
        serde_json::to_string_pretty(&report).map_err(failed)?,
    )
}

fn eval_monitor(args: &EvalMonitorArgs) -> Result<()> {
    require(&args.labels)?;
    require(&args.verdicts)?;
    let labels = eval::monitoring::load_labels(&args.labels).map_err(eval_error)?;
    let verdicts = eval::monitoring::load_verdicts(&args.verdicts).map_err(eval_error)?;
    let report = eval::score_monitoring(&labels, &verdicts).map_err(eval_error)?;
    emit_report(
        &args.out,
        &report.to_markdown(),
        serde_json::to_string_pretty(&report).map_err(failed)?,
    )
}

fn run(cli: &Cli) -> Result<()> {
    let config = match &cli.config {
        Some(p) => {
            require(p)?;
            Config::load(p).map_err(invalid)?
        }
        None => Config::default(),
    };
    match &cli.command {
        Command::Compile(a) => compile(cli, &config, a),
        Command::KbIngest(a) => kb_ingest(cli, &config, a),
        Command::Serve(a) => serve(cli, &config, a),
        Command::Replay(a) => run_replay(cli, &config, a),
        Command::EvalDesc(a) => eval_desc(cli, a),
        Command::EvalMonitor(a) => eval_monitor(a),
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_env("VID2COACH_LOG").unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
