// SPDX-License-Identifier: Apache-2.0

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use actipol_bench::{emit_report, parse_continuity, run_bench, BenchSpec, Format, Mode, Target};
use actipol_core::corpus;
use actipol_core::policy::{self, Severity};
use actipol_core::{ActionId, ActivityId, ContinuityConfig, DependencyStore, Engine, EngineConfig, Fixture, RequestContext};
use actipol_oracle::{oracle_decide, OracleWorld};
use actipol_server::{load_policies, ServiceConfig};
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "actipol", version, about = "Activity-dependency access control engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP decision service.
    Serve {
        /// TOML config file; ACTIPOL_* variables override it.
        #[arg(long, env = "ACTIPOL_CONFIG")]
        config: Option<PathBuf>,
        #[arg(long)]
        listen: Option<String>,
    },
    /// Decide one request locally and print the response.
    Decide(DecideArgs),
    /// Check or convert policy documents.
    Policy {
        #[command(subcommand)]
        command: PolicyCommand,
    },
    /// Measure start or full-cycle latency.
    Bench(BenchArgs),
    /// Query the reference oracle.
    Oracle {
        #[command(subcommand)]
        command: OracleCommand,
    },
}

#[derive(Args)]
struct World {
    /// Policy corpus (XML, or canonical JSON by extension). Defaults to the shipped corpus.
    #[arg(long)]
    policy: Option<PathBuf>,
    /// Store fixture. Defaults to the sample farm.
    #[arg(long)]
    fixture: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    depth: usize,
}

#[derive(Args)]
struct DecideArgs {
    #[command(flatten)]
    world: World,
    #[arg(long, default_value = "cli")]
    subject: String,
    #[arg(long)]
    activity: String,
    #[arg(long)]
    action: String,
    /// After a permitted start, run this many continuity iterations (REPSxMILLIS).
    #[arg(long, value_parser = parse_continuity)]
    continuity: Option<ContinuityConfig>,
}

#[derive(Subcommand)]
enum PolicyCommand {
    /// Validate a corpus and report diagnostics.
    Lint { file: PathBuf },
    /// Convert between XML and canonical JSON.
    Convert {
        file: PathBuf,
        #[arg(long, value_enum)]
        to: PolicyFormat,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyFormat {
    Xml,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum BenchMode {
    Start,
    Full,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_enum, default_value = "start")]
    mode: BenchMode,
    #[arg(long, value_delimiter = ',', default_value = "10,20,30,40,50")]
    counts: Vec<usize>,
    #[arg(long, value_delimiter = ',', value_parser = parse_continuity, default_value = "10x5,10x10,20x5,20x10")]
    continuity: Vec<ContinuityConfig>,
    /// Report path; `.json` writes JSON, anything else CSV. Stdout when unset.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Issue requests from N threads. Not comparable with sequential runs.
    #[arg(long, default_value_t = 1)]
    concurrent: usize,
    #[arg(long, default_value_t = 1)]
    warmup: usize,
    /// `local`, `loopback` (HTTP on 127.0.0.1), or the base URL of a running server.
    #[arg(long, default_value = "loopback")]
    target: String,
}

#[derive(Subcommand)]
enum OracleCommand {
    Decide {
        #[arg(long)]
        world: PathBuf,
        #[arg(long)]
        subject: String,
        #[arg(long)]
        phase: actipol_oracle::Phase,
        #[arg(long, default_value_t = 2)]
        depth: usize,
    },
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_env("ACTIPOL_LOG"))
        .with_writer(io::stderr)
        .init();
    match Cli::parse().command {
        Command::Serve { config, listen } => serve(config.as_deref(), listen),
        Command::Decide(args) => decide(args),
        Command::Policy { command } => policy_cmd(command),
        Command::Bench(args) => bench(args),
        Command::Oracle {
            command: OracleCommand::Decide {
                world,
                subject,
                phase,
                depth,
            },
        } => {
            let world = OracleWorld::load(&world).with_context(|| format!("reading {}", world.display()))?;
            let (verdict, after) = oracle_decide(world, &subject, phase, depth)?;
            let states: std::collections::BTreeMap<_, _> =
                after.activities.iter().map(|(id, a)| (id.clone(), a.state.clone())).collect();
            print_json(&serde_json::json!({ "decision": verdict, "states": states }))
        }
    }
}

fn print_json(value: &impl serde::Serialize) -> Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn serve(config: Option<&Path>, listen: Option<String>) -> Result<()> {
    let mut cfg = ServiceConfig::load(config)?;
    if let Some(l) = listen {
        cfg.listen = l;
    }
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(actipol_server::serve(&cfg))?;
    Ok(())
}

fn decide(args: DecideArgs) -> Result<()> {
    let policies = match &args.world.policy {
        Some(p) => load_policies(p).with_context(|| format!("loading {}", p.display()))?,
        None => corpus::default_policy_set(),
    };
    let fixture = match &args.world.fixture {
        Some(p) => Fixture::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => corpus::default_fixture(),
    };
    let store = Arc::new(DependencyStore::from_fixture(&fixture)?);
    let config = EngineConfig {
        chain_depth_limit: args.world.depth,
        auto_continuity: false,
        ..EngineConfig::default()
    };
    let engine = Engine::new(policies, store, config);
    let activity = ActivityId::new(args.activity)?;
    let action: ActionId = args.action.parse()?;
    let resp = engine.handle_request(&RequestContext::new(args.subject, activity.clone(), action))?;
    let report = match args.continuity {
        Some(cfg) if resp.final_activity_state == actipol_core::ActivityState::Running => {
            Some(engine.run_continuity(&activity, cfg))
        }
        _ => None,
    };
    print_json(&serde_json::json!({ "response": resp, "continuity": report }))
}

fn policy_cmd(command: PolicyCommand) -> Result<()> {
    match command {
        PolicyCommand::Lint { file } => {
            let ps = load_policies(&file).with_context(|| format!("loading {}", file.display()))?;
            let diags = policy::validate_corpus(&ps);
            for d in &diags {
                eprintln!("{d}");
            }
            let errors = diags.iter().filter(|d| d.severity == Severity::Error).count();
            println!(
                "{}: {} policies, {} rules, {} diagnostic(s)",
                file.display(),
                ps.policies.len(),
                ps.policies.iter().map(|p| p.rules.len()).sum::<usize>(),
                diags.len()
            );
            if errors > 0 {
                bail!("{errors} error(s)");
            }
            Ok(())
        }
        PolicyCommand::Convert { file, to, out } => {
            let ps = load_policies(&file).with_context(|| format!("loading {}", file.display()))?;
            let text = match to {
                PolicyFormat::Xml => policy::to_xml(&ps),
                PolicyFormat::Json => policy::to_canonical_json(&ps),
            };
            match out {
                Some(p) => std::fs::write(&p, text).with_context(|| format!("writing {}", p.display()))?,
                None => println!("{text}"),
            }
            Ok(())
        }
    }
}

fn bench(args: BenchArgs) -> Result<()> {
    let spec = BenchSpec {
        mode: match args.mode {
            BenchMode::Start => Mode::StartOnly,
            BenchMode::Full => Mode::FullCycle,
        },
        request_counts: args.counts,
        continuity: args.continuity,
        warmup_runs: args.warmup,
        concurrency: args.concurrent,
    };
    spec.validate()?;
    let n = spec.request_counts.iter().copied().max().unwrap_or(0);
    let target = match args.target.as_str() {
        "local" => Target::local(n),
        "loopback" => Target::loopback(n),
        url => Target::Remote {
            base_url: url.to_owned(),
            fixture: actipol_bench::bench_fixture(n),
        },
    };
    if spec.concurrency > 1 {
        eprintln!("note: concurrent runs are not comparable with sequential ones");
    }
    let report = run_bench(&spec, &target)?;
    match &args.out {
        Some(path) => {
            let format = if path.extension().is_some_and(|e| e == "json") {
                Format::Json
            } else {
                Format::Csv
            };
            let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
            emit_report(&report, format, BufWriter::new(file))?;
        }
        None => emit_report(&report, Format::Csv, io::stdout().lock())?,
    }
    for run in &report.runs {
        eprintln!(
            "{} n={} {}x{}ms: total {:.1} ms, mean {:.2} ms, p95 {:.2} ms",
            run.mode.as_str(),
            run.count,
            run.repetitions,
            run.interval_ms,
            run.total_ms,
            run.stats.mean_ms,
            run.stats.p95_ms
        );
    }
    Ok(())
}
