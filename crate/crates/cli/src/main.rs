use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use idt::agents::{generate_log, DecisionLog};
use idt::constructions::{by_name, NAMES};
use idt::estimators::{audit_fairness, estimate_known_class, estimate_optimal, estimate_unknown_family};
use idt::harness::{lower_bound_demo, rate_csv, rate_curve, run_trials, Regime};
use idt::schema::{parse_real, AgentRef, ClassDoc, FamilyDoc, Problem, ProblemDoc, RegimeDoc, TrialDoc};
use idt::IdtError;

const THREADS_VAR: &str = "IDT_THREADS";

#[derive(Parser)]
#[command(name = "idt", version, about = "Recover an agent's loss trade-off from its logged decisions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Problem source shared by the subcommands.
#[derive(clap::Args)]
struct ProblemArgs {
    /// Distribution JSON file.
    #[arg(long, conflicts_with = "construction")]
    problem: Option<PathBuf>,
    /// Named construction instead of a distribution file.
    #[arg(long)]
    construction: Option<String>,
    /// Construction parameter, `name=value` (fractions allowed).
    #[arg(long = "param", value_name = "NAME=VALUE")]
    params: Vec<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum RegimeArg {
    Optimal,
    KnownClass,
    UnknownFamily,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a decision log from an agent (JSONL on stdout or --out).
    Simulate {
        #[command(flatten)]
        problem: ProblemArgs,
        /// Agent JSON file.
        #[arg(long, conflicts_with = "bundle_agent")]
        agent: Option<PathBuf>,
        /// Index of a construction's agent.
        #[arg(long)]
        bundle_agent: Option<usize>,
        #[arg(long)]
        m: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate the loss parameter behind a log (JSON on stdout).
    Estimate {
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long)]
        log: PathBuf,
        #[arg(long, value_enum, default_value = "optimal")]
        regime: RegimeArg,
        /// Class JSON file for the known-class regime.
        #[arg(long)]
        class: Option<PathBuf>,
        /// Family JSON file for the unknown-family regime; defaults to the
        /// construction's family.
        #[arg(long)]
        family: Option<PathBuf>,
    },
    /// Run a trial config over sample sizes and print the CSV curve.
    VerifyRate {
        /// Trial config JSON file.
        config: PathBuf,
        /// Comma-separated sample sizes; overrides the config.
        #[arg(long, value_delimiter = ',')]
        m: Vec<usize>,
        /// Also write the full per-size reports as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Exit 4 when some size fails more often than δ plus three standard errors.
        #[arg(long)]
        check: bool,
    },
    /// Run a lower-bound construction's agents through the estimators.
    LowerBound {
        /// One of the construction names.
        name: String,
        #[arg(long = "param", value_name = "NAME=VALUE")]
        params: Vec<String>,
        #[arg(long)]
        m: usize,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 0.05)]
        eps: f64,
        #[arg(long, default_value_t = 0.25)]
        delta: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Exit 4 unless some agent fails more often than δ (binomial test at this level).
        #[arg(long)]
        check_level: Option<f64>,
    },
    /// Test whether per-group decisions share one loss parameter.
    AuditFairness {
        #[command(flatten)]
        problem: ProblemArgs,
        /// Log with group attributes.
        #[arg(long)]
        log: PathBuf,
        /// Smallest witness mass that counts as a violation.
        #[arg(long, default_value_t = 1e-9)]
        eps: f64,
    },
}

enum Failure {
    Validation(String),
    Inconsistent(String),
    Acceptance(String),
}

impl From<IdtError> for Failure {
    fn from(e: IdtError) -> Self {
        match e {
            IdtError::InconsistentLog { .. } | IdtError::NoConsistentClass | IdtError::NonMonotone { .. } => {
                Failure::Inconsistent(e.to_string())
            }
            _ => Failure::Validation(e.to_string()),
        }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))
}

fn parse_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    serde_json::from_str(&read(path)?).map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))
}

fn parse_params(raw: &[String]) -> CliResult<BTreeMap<String, f64>> {
    raw.iter()
        .map(|p| {
            let (k, v) = p.split_once('=').ok_or_else(|| Failure::Validation(format!("expected NAME=VALUE, got {p}")))?;
            Ok((k.trim().to_string(), parse_real(v)?))
        })
        .collect()
}

fn load_problem(args: &ProblemArgs) -> CliResult<Problem> {
    match (&args.problem, &args.construction) {
        (Some(path), None) => Ok(parse_json::<ProblemDoc>(path)?.resolve()?),
        (None, Some(name)) => {
            let bundle = by_name(name, &parse_params(&args.params)?)?;
            Ok(Problem { distribution: bundle.distribution.clone(), bundle: Some(bundle) })
        }
        _ => Err(Failure::Validation(format!(
            "give --problem FILE or --construction NAME (one of {})",
            NAMES.join(", ")
        ))),
    }
}

fn write_out(out: &Option<PathBuf>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| Failure::Validation(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn pretty<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("report serializes") + "\n"
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Simulate { problem, agent, bundle_agent, m, seed, out } => {
            let problem = load_problem(&problem)?;
            let agent_ref = match (agent, bundle_agent) {
                (Some(path), None) => parse_json::<AgentRef>(&path)?,
                (None, Some(i)) => AgentRef::Bundled { bundle_agent: i },
                (None, None) => AgentRef::Bundled { bundle_agent: 0 },
                _ => unreachable!("clap rejects both"),
            };
            let agent = agent_ref.resolve(&problem)?;
            let log = generate_log(&agent, &problem.distribution, m, seed)?;
            write_out(&out, &log.to_jsonl())
        }
        Command::Estimate { problem, log, regime, class, family } => {
            let problem = load_problem(&problem)?;
            let log = DecisionLog::from_jsonl(&read(&log)?)?;
            let doc = match regime {
                RegimeArg::Optimal => RegimeDoc::Optimal,
                RegimeArg::KnownClass => {
                    let class = class.ok_or_else(|| Failure::Validation("known-class needs --class".into()))?;
                    RegimeDoc::KnownClass { class: Some(parse_json::<ClassDoc>(&class)?) }
                }
                RegimeArg::UnknownFamily => RegimeDoc::UnknownFamily {
                    family: family.map(|f| parse_json::<FamilyDoc>(&f)).transpose()?,
                },
            };
            let result = match doc.resolve(&problem, None)? {
                Regime::Optimal => estimate_optimal(&problem.distribution, &log)?,
                Regime::KnownClass(c) => estimate_known_class(&problem.distribution, &c, &log)?,
                Regime::UnknownFamily(f) => estimate_unknown_family(&problem.distribution, &f, &log)?,
            };
            write_out(&None, &pretty(&result))
        }
        Command::VerifyRate { config, m, report, check } => {
            let doc: TrialDoc = parse_json(&config)?;
            let cfg = doc.build()?;
            let sizes = if !m.is_empty() {
                m
            } else if !doc.m_values.is_empty() {
                doc.m_values.clone()
            } else {
                vec![doc.m]
            };
            let rows = rate_curve(&cfg, &sizes)?;
            if let Some(path) = report {
                let reports = sizes
                    .iter()
                    .enumerate()
                    .map(|(i, &m)| {
                        let c = idt::harness::TrialConfig { m, base_seed: cfg.base_seed.wrapping_add((i as u64) << 32), ..cfg.clone() };
                        run_trials(&c)
                    })
                    .collect::<idt::Result<Vec<_>>>()?;
                write_out(&Some(path), &pretty(&reports))?;
            }
            write_out(&None, &rate_csv(&rows))?;
            if check {
                let t = cfg.trials as f64;
                let limit = cfg.delta + 3.0 * (cfg.delta * (1.0 - cfg.delta) / t).sqrt();
                if let Some(r) = rows.iter().find(|r| r.failure_frequency > limit) {
                    return Err(Failure::Acceptance(format!(
                        "m = {}: failure frequency {} exceeds {limit}",
                        r.m, r.failure_frequency
                    )));
                }
            }
            Ok(())
        }
        Command::LowerBound { name, params, m, trials, eps, delta, seed, check_level } => {
            let bundle = by_name(&name, &parse_params(&params)?)?;
            let report = lower_bound_demo(&bundle, m, trials, eps, delta, seed)?;
            write_out(&None, &pretty(&report))?;
            if let Some(level) = check_level {
                if report.min_p_value >= level {
                    return Err(Failure::Acceptance(format!(
                        "no agent fails more often than {delta} (smallest p-value {})",
                        report.min_p_value
                    )));
                }
            }
            Ok(())
        }
        Command::AuditFairness { problem, log, eps } => {
            let problem = load_problem(&problem)?;
            let log = DecisionLog::from_jsonl(&read(&log)?)?;
            let report = audit_fairness(&problem.distribution, &log, eps)?;
            write_out(&None, &pretty(&report))
        }
    }
}

fn configure_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var(THREADS_VAR) else { return Ok(()) };
    let n: usize = raw.trim().parse().map_err(|_| format!("{THREADS_VAR} must be a positive integer, got {raw:?}"))?;
    if n == 0 {
        return Err(format!("{THREADS_VAR} must be positive"));
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    let start = Instant::now();
    let outcome = run(cli);
    eprintln!("elapsed: {:.3}s", start.elapsed().as_secs_f64());
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Inconsistent(m)) => {
            eprintln!("inconsistent: {m}");
            ExitCode::from(3)
        }
        Err(Failure::Acceptance(m)) => {
            eprintln!("check failed: {m}");
            ExitCode::from(4)
        }
    }
}
