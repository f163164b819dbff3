use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use reqnav_core::bench::{percent, run_batch, BatchReport, BenchConfig, Corpus, ReportConfig};
use reqnav_core::navigator::NavConfig;
use reqnav_core::scorer::{LexicalScorer, RemoteConfig, RemoteScorer, Scorer};
use reqnav_core::trigger::ExecConfig;

#[derive(Parser)]
#[command(name = "reqnav", version, about = "Requirement-driven GUI test generation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a benchmark corpus and write reports.
    Run(RunArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ScorerKind {
    Lexical,
    Remote,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Directory holding manifest.json.
    #[arg(long)]
    corpus: PathBuf,
    /// Run only this case.
    #[arg(long)]
    case: Option<String>,
    #[arg(long, value_enum, default_value = "lexical")]
    scorer: ScorerKind,
    /// Base URL of the remote scorer.
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long, default_value_t = 5)]
    max_steps: usize,
    /// Candidate operations kept per page.
    #[arg(long, default_value_t = 3)]
    candidates: usize,
    /// Sub-oracles per case.
    #[arg(long, default_value_t = 3)]
    eta: usize,
    #[arg(long, default_value_t = 3)]
    max_rounds: usize,
    /// JSON report path; a markdown report is written beside it.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Directory for per-case JSON-lines traces.
    #[arg(long)]
    trace_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 30)]
    timeout_secs: u64,
    #[arg(long, default_value_t = 2)]
    retries: u32,
    /// Seed for remote retry jitter.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 4)]
    max_in_flight: usize,
}

/// Problems with the invocation itself, reported with exit code 2.
#[derive(Debug)]
struct ConfigError(anyhow::Error);

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let Command::Run(args) = cli.command;
    match prepare(&args) {
        Err(ConfigError(e)) => {
            eprintln!("configuration error: {e:#}");
            ExitCode::from(2)
        }
        Ok(job) => match execute(&args, job) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: {e:#}");
                ExitCode::FAILURE
            }
        },
    }
}

struct Job {
    corpus: Corpus,
    scorer: Box<dyn Scorer>,
    config: BenchConfig,
    report: ReportConfig,
}

fn prepare(args: &RunArgs) -> Result<Job, ConfigError> {
    check(args).map_err(ConfigError)?;
    let mut corpus = Corpus::load(&args.corpus)
        .with_context(|| format!("loading corpus {}", args.corpus.display()))
        .map_err(ConfigError)?;
    if let Some(id) = &args.case {
        corpus.cases.retain(|c| &c.case.case_id == id);
        if corpus.cases.is_empty() {
            return Err(ConfigError(anyhow::anyhow!("no case named {id:?}")));
        }
    }
    let (scorer, name): (Box<dyn Scorer>, &str) = match args.scorer {
        ScorerKind::Lexical => (
            Box::new(LexicalScorer::new(corpus.lexicon.clone().unwrap_or_default())),
            "lexical",
        ),
        ScorerKind::Remote => {
            let endpoint = args.endpoint.clone().unwrap_or_default();
            let config = RemoteConfig {
                timeout: Duration::from_secs(args.timeout_secs),
                retries: args.retries,
                seed: args.seed,
                max_in_flight: args.max_in_flight,
                ..RemoteConfig::new(endpoint)
            };
            let remote = RemoteScorer::new(config).map_err(|e| ConfigError(e.into()))?;
            (Box::new(remote), "remote")
        }
    };
    let config = BenchConfig {
        nav: NavConfig {
            max_steps: args.max_steps,
            k: args.candidates,
        },
        exec: ExecConfig {
            max_rounds: args.max_rounds,
            ..ExecConfig::default()
        },
        eta: args.eta,
        trace_dir: args.trace_dir.clone(),
    };
    let report = ReportConfig {
        scorer: name.into(),
        max_steps: args.max_steps,
        candidates: args.candidates,
        eta: args.eta,
        max_rounds: args.max_rounds,
    };
    Ok(Job {
        corpus,
        scorer,
        config,
        report,
    })
}

fn check(args: &RunArgs) -> Result<()> {
    for (name, v) in [
        ("--max-steps", args.max_steps),
        ("--candidates", args.candidates),
        ("--eta", args.eta),
        ("--max-rounds", args.max_rounds),
        ("--max-in-flight", args.max_in_flight),
    ] {
        if v == 0 {
            bail!("{name} must be at least 1");
        }
    }
    if matches!(args.scorer, ScorerKind::Remote) && args.endpoint.is_none() {
        bail!("--scorer remote needs --endpoint");
    }
    Ok(())
}

fn execute(args: &RunArgs, job: Job) -> Result<()> {
    let results = run_batch(&job.corpus.cases, job.scorer.as_ref(), &job.config);
    let report = BatchReport::new(job.report, results);
    for r in &report.cases {
        let verdict = match r.verdict {
            reqnav_core::oracle::Decision::Pass => "pass",
            reqnav_core::oracle::Decision::Fail => "fail",
        };
        println!(
            "{:<28} {:<5} expected {:<5} {}",
            r.case_id,
            verdict,
            if r.correct { "pass" } else { "fail" },
            r.error.as_deref().unwrap_or("")
        );
    }
    let m = &report.summary;
    let c = &m.confusion;
    println!(
        "TP {} FN {} TN {} FP {}  precision {}  recall {}  specificity {}",
        c.tp,
        c.fn_,
        c.tn,
        c.fp,
        percent(m.precision),
        percent(m.recall),
        percent(m.specificity)
    );
    if let Some(path) = &args.report {
        report
            .write(path)
            .with_context(|| format!("writing report {}", path.display()))?;
    }
    Ok(())
}
