use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use tourflow::data;
use tourflow::dialogue::{check_resources, Engine};
use tourflow::flow::parse_flow_sheet;
use tourflow::llm::ScriptedTransport;
use tourflow::service::{self, ServiceConfig};
use tourflow::sim::{
    coverage_report, junit_xml, longest_path_duration, run_pack, run_persona, NominalSizes, Persona, SimOptions,
    SimReport, STUB_ANSWER,
};

#[derive(Parser)]
#[command(name = "tourflow", version, about = "Sightseeing guide dialogue engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP service.
    Serve {
        /// TOML config; defaults plus TOURFLOW_* environment variables when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Check a flow sheet. Exits 0 only when there are no diagnostics.
    Validate {
        #[arg(long)]
        flow: PathBuf,
        /// Also check that every keyword set, label and intent exists here.
        #[arg(long)]
        resources: Option<PathBuf>,
        /// Skip the "every continuing utterance ends with a question" lint.
        #[arg(long)]
        no_strict_questions: bool,
        /// Print diagnostics as JSON lines.
        #[arg(long)]
        json: bool,
    },
    /// Run one persona against a flow with an offline LLM stub.
    Simulate {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        persona: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        cap: usize,
        /// Write the full JSON report here.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Run every persona in a directory and write a JUnit report.
    SimulatePack {
        #[command(flatten)]
        data: DataArgs,
        /// Persona directory; the built-in pack when omitted.
        #[arg(long)]
        dir: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        cap: usize,
        #[arg(long)]
        junit: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

/// Built-in Kyoto data is used for anything not given.
#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    flow: Option<PathBuf>,
    #[arg(long)]
    resources: Option<PathBuf>,
    #[arg(long)]
    routes: Option<PathBuf>,
}

impl DataArgs {
    fn engine(&self) -> Result<Engine> {
        let config = ServiceConfig {
            flow_path: self.flow.clone(),
            resources_dir: self.resources.clone(),
            routes_path: self.routes.clone(),
            ..ServiceConfig::default()
        };
        match config.build_engine(Arc::new(ScriptedTransport::answering(STUB_ANSWER))) {
            Ok(engine) => Ok(engine),
            Err(e) => {
                for d in e.diagnostics() {
                    eprintln!("{d}");
                }
                Err(e.into())
            }
        }
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Serve { config } => {
            let config = match config {
                Some(path) => ServiceConfig::load(&path)?,
                None => {
                    let mut c = ServiceConfig::default();
                    c.apply_env(|k| std::env::var(k).ok())?;
                    c.validate()?;
                    c
                }
            };
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(service::serve(config))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate {
            flow,
            resources,
            no_strict_questions,
            json,
        } => validate(&flow, resources.as_deref(), !no_strict_questions, json),
        Command::Simulate {
            data,
            persona,
            seed,
            cap,
            report,
        } => {
            let engine = data.engine()?;
            let persona = load_persona(&persona)?;
            let r = run_persona(&engine, &persona, SimOptions { turn_cap: cap, seed, ..SimOptions::default() });
            print_summary(&r);
            if let Some(path) = report {
                write(&path, &serde_json::to_string_pretty(&r)?)?;
            }
            Ok(if persona_ok(&r) { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::SimulatePack {
            data,
            dir,
            seed,
            cap,
            junit,
            report,
        } => {
            let engine = data.engine()?;
            let personas = match dir {
                Some(dir) => load_persona_dir(&dir)?,
                None => data::PERSONAS
                    .iter()
                    .map(|(name, text)| Persona::from_json(text).with_context(|| format!("built-in persona {name}")))
                    .collect::<Result<_>>()?,
            };
            let reports = run_pack(&engine, &personas, SimOptions { turn_cap: cap, seed, ..SimOptions::default() });
            for r in &reports {
                print_summary(r);
            }
            let coverage = coverage_report(&reports, engine.graph());
            println!("state coverage {:.3}", coverage.state_coverage);
            if !coverage.uncovered.is_empty() {
                println!("uncovered: {}", coverage.uncovered.iter().cloned().collect::<Vec<_>>().join(", "));
            }
            let sizes = NominalSizes::for_config(engine.llm().config(), engine.catalog());
            let longest = longest_path_duration(engine.graph(), SimOptions::default().rates, &sizes);
            match &longest {
                Some(p) => println!("longest path {:.1} s over {} states", p.seconds, p.path.len()),
                None => println!("longest path unbounded (flow has a cycle)"),
            }
            if let Some(path) = junit {
                write(&path, &junit_xml(&reports, &coverage))?;
            }
            if let Some(path) = report {
                let body = json!({"reports": reports, "coverage": coverage, "longest_path": longest});
                write(&path, &serde_json::to_string_pretty(&body)?)?;
            }
            let ok = reports.iter().all(persona_ok) && coverage.uncovered.is_empty();
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
    }
}

fn validate(flow: &Path, resources: Option<&Path>, strict: bool, json: bool) -> Result<ExitCode> {
    let text = std::fs::read_to_string(flow).with_context(|| format!("reading {}", flow.display()))?;
    let mut diags = match parse_flow_sheet(&text, strict) {
        Ok(graph) => match resources {
            Some(dir) => {
                let res = tourflow::nlu::NluResources::load_dir(dir, tourflow::nlu::DEFAULT_EXAMPLE_THRESHOLD)?;
                check_resources(&graph, &res)
            }
            None => Vec::new(),
        },
        Err(diags) => diags,
    };
    diags.sort_by_key(|d| d.line);
    for d in &diags {
        if json {
            println!("{}", serde_json::to_string(d)?);
        } else {
            println!("{d}");
        }
    }
    if diags.is_empty() {
        eprintln!("{}: ok", flow.display());
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("{}: {} diagnostic(s)", flow.display(), diags.len());
        Ok(ExitCode::FAILURE)
    }
}

fn load_persona(path: &Path) -> Result<Persona> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Persona::from_json(&text).with_context(|| format!("persona {}", path.display()))
}

fn load_persona_dir(dir: &Path) -> Result<Vec<Persona>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        bail!("no *.json personas in {}", dir.display());
    }
    paths.iter().map(|p| load_persona(p)).collect()
}

fn persona_ok(r: &SimReport) -> bool {
    r.breakdown.is_none() && r.ended_cleanly && !r.turn_cap_exceeded
}

fn print_summary(r: &SimReport) {
    let status = match (&r.breakdown, r.turn_cap_exceeded, r.ended_cleanly) {
        (Some(b), _, _) => format!("breakdown: {b}"),
        (None, true, _) => "turn cap exceeded".into(),
        (None, false, false) => "did not end".into(),
        (None, false, true) => "ok".into(),
    };
    println!(
        "{:<16} turns {:>3}  {:>6.1} s  {}",
        r.persona_id, r.turns, r.estimated_duration_s, status
    );
}

fn write(path: &Path, body: &str) -> Result<()> {
    std::fs::write(path, body).with_context(|| format!("writing {}", path.display()))
}
