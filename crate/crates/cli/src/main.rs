use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};
use deepsearch_core::config::EngineConfig;
use deepsearch_core::engine::Engine;
use deepsearch_core::eval::{load_dataset, render_table, run_eval, AgentKind, Scoring};
use deepsearch_core::events::replay_graph;
use deepsearch_core::trace::{read_events, render_event, write_trace};

#[derive(Parser)]
#[command(name = "deepsearch", version, about = "Graph-planned multi-agent web search")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one session and print the final answer with its sources.
    Ask {
        question: String,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Directory to write the session trace into.
        #[arg(long)]
        trace_out: Option<PathBuf>,
        /// Print every event to stderr as it is recorded.
        #[arg(long)]
        events: bool,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides `service.bind`.
        #[arg(long)]
        bind: Option<SocketAddr>,
    },
    /// Score one or more agents on a dataset and print the accuracy table.
    Eval {
        dataset: PathBuf,
        #[arg(long, value_enum, required = true)]
        agent: Vec<AgentArg>,
        /// Grade with the LLM judge instead of exact match.
        #[arg(long)]
        judge: bool,
        /// Write per-item verdicts and aggregates as JSON lines.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Re-render a recorded session from its trace directory or events file.
    Replay { trace: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum AgentArg {
    Nosearch,
    React,
    Mindsearch,
}

impl From<AgentArg> for AgentKind {
    fn from(a: AgentArg) -> Self {
        match a {
            AgentArg::Nosearch => AgentKind::NoSearch,
            AgentArg::React => AgentKind::React,
            AgentArg::Mindsearch => AgentKind::MindSearch,
        }
    }
}

enum Failure {
    Config(anyhow::Error),
    Aborted(String),
    Other(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Other(e)
    }
}

fn load_engine(path: Option<&Path>) -> Result<Engine, Failure> {
    let config = match path {
        Some(p) => EngineConfig::load(p),
        None => EngineConfig::default().validate().map(|_| EngineConfig::default()),
    };
    let config = config.map_err(|e| Failure::Config(e.into()))?;
    Engine::from_config(config).map_err(|e| Failure::Config(e.into()))
}

async fn ask(question: &str, config: Option<&Path>, trace_out: Option<&Path>, show_events: bool) -> Result<(), Failure> {
    let engine = load_engine(config)?;
    let (bus, result) = engine.ask(question).await;
    let events = bus.events();
    if show_events {
        for ev in &events {
            eprintln!("{}", render_event(ev));
        }
    }
    let session = match &result {
        Ok(o) => &o.session,
        Err(a) => &a.session,
    };
    if let Some(dir) = trace_out {
        write_trace(dir, session, &events).with_context(|| format!("writing trace to {}", dir.display()))?;
    }
    let outcome = result.map_err(|a| Failure::Aborted(a.error))?;
    println!("{}", outcome.answer.answer_text);
    if !outcome.answer.citations.is_empty() {
        println!("\nSources:");
        for (i, c) in outcome.answer.citations.iter().enumerate() {
            println!("[{}] {} <{}>", i + 1, c.title, c.url);
        }
    }
    Ok(())
}

async fn serve(config: Option<&Path>, bind: Option<SocketAddr>) -> Result<(), Failure> {
    let engine = load_engine(config)?;
    let addr = match bind {
        Some(a) => a,
        None => engine
            .config()
            .service
            .bind
            .parse()
            .map_err(|e| Failure::Config(anyhow!("service.bind: {e}")))?,
    };
    deepsearch_core::service::serve(engine, addr)
        .await
        .with_context(|| format!("serving on {addr}"))?;
    Ok(())
}

async fn eval(
    dataset: &Path,
    agents: &[AgentArg],
    judge: bool,
    report: Option<&Path>,
    config: Option<&Path>,
) -> Result<(), Failure> {
    let engine = load_engine(config)?;
    let items = load_dataset(dataset).map_err(|e| Failure::Config(anyhow!("{}: {e}", dataset.display())))?;
    let scoring = if judge { Scoring::Judge } else { Scoring::Em };
    let mut reports = Vec::new();
    for agent in agents {
        let r = run_eval(&items, (*agent).into(), scoring, &engine).await;
        for item in &r.items {
            let verdict = if item.verdict { "correct" } else { "wrong" };
            println!("{}\t{}\t{}\t{}", r.agent.as_str(), item.id, verdict, item.prediction.replace('\n', " "));
        }
        reports.push(r);
    }
    println!();
    print!("{}", render_table(&reports));
    if let Some(path) = report {
        let body: String = reports.iter().map(|r| r.to_jsonl()).collect();
        std::fs::write(path, body).with_context(|| format!("writing report to {}", path.display()))?;
    }
    Ok(())
}

fn replay(trace: &Path) -> Result<(), Failure> {
    let events = read_events(trace).with_context(|| format!("reading {}", trace.display()))?;
    for ev in &events {
        println!("{}", render_event(ev));
    }
    let graph = replay_graph(&events).context("rebuilding the graph")?;
    println!();
    print!("{}", graph.snapshot().render());
    Ok(())
}

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Ask {
            question,
            config,
            trace_out,
            events,
        } => ask(question, config.as_deref(), trace_out.as_deref(), *events).await,
        Command::Serve { config, bind } => serve(config.as_deref(), *bind).await,
        Command::Eval {
            dataset,
            agent,
            judge,
            report,
            config,
        } => eval(dataset, agent, *judge, report.as_deref(), config.as_deref()).await,
        Command::Replay { trace } => replay(trace),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Aborted(reason)) => {
            eprintln!("session aborted: {reason}");
            ExitCode::from(1)
        }
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Other(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
