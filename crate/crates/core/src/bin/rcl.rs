use std::fs;
use std::io::{self, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use rcl_core::harness::{deviation_gain, expost_exhibit, fairness_test, monte_carlo, ExperimentConfig, HarnessError};
use rcl_core::types::Context;
use rcl_core::{run, DeviationSpec};

/// Simulator and experiment harness for rational crash-tolerant consensus.
#[derive(Parser)]
#[command(name = "rcl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a single run and print every agent's decision.
    Run {
        #[command(flatten)]
        common: Common,
        /// Trial index whose context and streams are used.
        #[arg(long, default_value_t = 0)]
        trial: u64,
        /// Write the JSON-lines trace here.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[command(flatten)]
        deviation: DeviationArg,
    },
    /// Monte-Carlo utilities, decisions and violation counts.
    Mc {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        deviation: DeviationArg,
    },
    /// Exact and sampled fairness of the lottery in one context.
    Fairness {
        #[command(flatten)]
        common: Common,
        /// Context JSON file; defaults to the config's fixed context, else trial 0's.
        #[arg(long)]
        context: Option<PathBuf>,
    },
    /// Paired estimate of a single deviator's gain.
    Deviate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        deviation: DeviationArg,
    },
    /// Exact ex-post counterexample for the config's n and f.
    Exhibit {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Write the JSON report here.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    trials: Option<u64>,
}

#[derive(Args)]
struct DeviationArg {
    /// Deviation spec as inline JSON or a path to a JSON file.
    #[arg(long)]
    deviation: Option<String>,
}

enum Failure {
    Usage(String),
    Violation,
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        Failure::Usage(e.to_string())
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn load(common: &Common, deviation: Option<&DeviationArg>) -> Result<ExperimentConfig, Failure> {
    let mut cfg: ExperimentConfig = serde_json::from_str(&read(&common.config)?).map_err(|e| Failure::Usage(format!("{}: {e}", common.config.display())))?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(trials) = common.trials {
        cfg.trials = trials;
    }
    if let Some(text) = deviation.and_then(|d| d.deviation.as_deref()) {
        let text = if text.trim_start().starts_with('{') {
            text.to_string()
        } else {
            read(Path::new(text))?
        };
        let spec: DeviationSpec = serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("deviation: {e}")))?;
        cfg.deviation = Some(spec);
    }
    cfg.normalize()?;
    Ok(cfg)
}

fn write_report<T: Serialize>(out: Option<&Path>, report: &T) -> Result<(), Failure> {
    let Some(path) = out else { return Ok(()) };
    let mut text = serde_json::to_string_pretty(report).map_err(|e| Failure::Usage(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run { common, trial, trace, deviation } => {
            let cfg = load(&common, Some(&deviation))?;
            let ctx = cfg.trial_context(trial)?;
            let opts = rcl_core::RunOptions {
                trace: trace.is_some(),
                ..cfg.run_options()
            };
            let rec = run(&ctx, &cfg.profile(), cfg.run_seed(trial, 0), &opts).map_err(HarnessError::from)?;
            println!("run  n={} f={} trial={} seed={}", cfg.n, cfg.f, trial, cfg.seed);
            println!("prefs   {:?}", ctx.prefs);
            for fl in &ctx.pattern.failures {
                println!("crash   agent {} in round {} reaching {:?}", fl.agent, fl.round, fl.recipients);
            }
            for (a, d) in rec.decisions.iter().enumerate() {
                let detected = rec.detections[a].map(|(r, rule)| format!("  detected rule {rule} in round {r}")).unwrap_or_default();
                println!("agent {a}  {}{detected}", d.decision);
            }
            println!("outcome {:?}", rec.outcome.classification);
            if let Some(path) = &trace {
                let file = fs::File::create(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
                rec.write_trace(BufWriter::new(file)).map_err(|e| Failure::Usage(e.to_string()))?;
            }
            write_report(common.out.as_deref(), &rec)?;
            if rec.deviators.is_empty() && rec.outcome.violations.any() {
                return Err(Failure::Violation);
            }
        }
        Command::Mc { common, deviation } => {
            let cfg = load(&common, Some(&deviation))?;
            let report = monte_carlo(&cfg)?;
            print!("{}", report.table());
            write_report(common.out.as_deref(), &report)?;
            if report.honest_violation() {
                return Err(Failure::Violation);
            }
        }
        Command::Fairness { common, context } => {
            let cfg = load(&common, None)?;
            let ctx = match context {
                Some(path) => Context::from_json(&read(&path)?).map_err(|e| Failure::Usage(e.to_string()))?,
                None => cfg.trial_context(0)?,
            };
            let report = fairness_test(&cfg, &ctx)?;
            print!("{}", report.table());
            write_report(common.out.as_deref(), &report)?;
            if !report.passes() {
                return Err(Failure::Violation);
            }
        }
        Command::Deviate { common, deviation } => {
            let cfg = load(&common, Some(&deviation))?;
            let report = deviation_gain(&cfg)?;
            print!("{}", report.table());
            write_report(common.out.as_deref(), &report)?;
        }
        Command::Exhibit { common } => {
            let cfg = load(&common, None)?;
            match expost_exhibit(cfg.n, cfg.f, cfg.beta, cfg.seed)? {
                Some(ex) => {
                    print!("{}", ex.table());
                    write_report(common.out.as_deref(), &ex)?;
                }
                None => {
                    println!("no exhibit: a crash needs f >= 1");
                    write_report(common.out.as_deref(), &serde_json::Value::Null)?;
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Violation) => {
            eprintln!("property violation in honest mode");
            let _ = io::Write::flush(&mut io::stdout());
            ExitCode::from(2)
        }
    }
}
