//! `halfstrip`: classify and simulate Markov chains on the half-strip from
//! a TOML config. Subcommands: classify, simulate, excursion-stats,
//! coupling, weak-limit.
//!
//! Exit codes: 0 success, 1 error, 2 when a theorem hypothesis is not met
//! (periodic limit matrix, boundary drift) or the classification is
//! inconclusive.

mod report;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use halfstrip::classify::{classify_model, Verdict};
use halfstrip::config::{build_model, parse_config, FormatKind, RunConfig};
use halfstrip::coupling::CoupledChain;
use halfstrip::model::{DriftMode, Model, State};
use halfstrip::simulate::{
    decompose_excursions, estimate_embedded_moments, estimate_occupation_ratio,
    max_deviation_profile, occupation_measure, renewal_rate, run_path, tau_tail_profile,
};
use halfstrip::weaklimit::{f_quantile, weak_limit_test, WeakLimitError};

use report::{Payload, ReportWriter};

#[derive(Parser)]
#[command(name = "halfstrip", version, about = "Half-strip Markov chain toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML run configuration.
    #[arg(long, visible_alias = "model", value_name = "PATH")]
    config: PathBuf,
    /// Master seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for trial-parallel estimators (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// Report directory; reports go to stdout when absent.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Report format.
    #[arg(long, value_enum)]
    format: Option<CliFormat>,
}

#[derive(clap::ValueEnum, Clone, Copy, PartialEq, Eq)]
enum CliFormat {
    Json,
    Csv,
    Text,
}

impl From<CliFormat> for FormatKind {
    fn from(f: CliFormat) -> Self {
        match f {
            CliFormat::Json => FormatKind::Json,
            CliFormat::Csv => FormatKind::Csv,
            CliFormat::Text => FormatKind::Text,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Recurrence classification from drift constants.
    Classify {
        #[command(flatten)]
        common: Common,
        /// Drift regime (overrides the config).
        #[arg(long, value_enum)]
        mode: Option<CliMode>,
        /// Comma-separated height grid for numeric estimation.
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<u64>>,
    },
    /// Long-run path statistics: renewal rate and occupation frequencies.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Excursion estimators: durations, occupation, embedded moments,
    /// maximum deviations.
    ExcursionStats {
        #[command(flatten)]
        common: Common,
    },
    /// Maximal-coupling survival diagnostics.
    Coupling {
        #[command(flatten)]
        common: Common,
    },
    /// Goodness of fit of the sqrt(n)-scaled height against the limit law.
    WeakLimit {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(clap::ValueEnum, Clone, Copy)]
enum CliMode {
    Constant,
    Lamperti,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::from(1)
        }
    }
}

fn resolve_initial(
    model: &dyn Model,
    initial: &Option<halfstrip::config::InitialConfig>,
    default_x: u64,
) -> State {
    match initial {
        Some(init) => State::new(
            init.x,
            model
                .lines()
                .index_of(&init.line)
                .expect("config validation checked the label"),
        ),
        None => State::new(default_x, model.lines().reference()),
    }
}

fn run(cli: Cli) -> Result<ExitCode, String> {
    let common = match &cli.command {
        Command::Classify { common, .. }
        | Command::Simulate { common }
        | Command::ExcursionStats { common }
        | Command::Coupling { common }
        | Command::WeakLimit { common } => common.clone(),
    };

    let text = std::fs::read_to_string(&common.config)
        .map_err(|e| format!("{}: {e}", common.config.display()))?;
    let mut config: RunConfig = parse_config(&text).map_err(|e| e.to_string())?;
    if let Some(seed) = common.seed {
        config.seed = Some(seed);
    }
    let seed = config.seed();

    if let Some(jobs) = common.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| e.to_string())?;
    }

    let model = build_model(&config.model).map_err(|e| e.to_string())?;
    let format = common
        .format
        .map(FormatKind::from)
        .or_else(|| config.output.as_ref().and_then(|o| o.format))
        .unwrap_or(FormatKind::Json);
    let out_dir = common
        .out
        .clone()
        .or_else(|| config.output.as_ref().and_then(|o| o.dir.clone().map(PathBuf::from)));
    let writer = ReportWriter::new(&text, seed, format, out_dir);

    match cli.command {
        Command::Classify { mode, grid, .. } => {
            let section = config.classify.clone().unwrap_or(halfstrip::config::ClassifyConfig {
                mode: None,
                grid: None,
            });
            let mode: DriftMode = mode
                .map(|m| match m {
                    CliMode::Constant => DriftMode::ConstantDrift,
                    CliMode::Lamperti => DriftMode::Lamperti,
                })
                .or_else(|| section.mode.map(DriftMode::from))
                .unwrap_or(DriftMode::Lamperti);
            let grid = grid
                .or(section.grid)
                .unwrap_or_else(|| vec![1_000, 10_000, 100_000]);
            let classification =
                classify_model(model.as_ref(), mode, &grid).map_err(|e| e.to_string())?;
            let verdict = classification.result.verdict;
            writer.emit("classify", Payload::Classify(classification))?;
            Ok(if verdict == Verdict::Inconclusive {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            })
        }
        Command::Simulate { .. } => {
            let section = config.simulate.clone().unwrap_or(halfstrip::config::SimulateConfig {
                steps: None,
                trials: None,
                initial: None,
                x_set: None,
            });
            let steps = section.steps.unwrap_or(100_000);
            let trials = section.trials.unwrap_or(10);
            let initial = resolve_initial(model.as_ref(), &section.initial, 0);
            let x_set = section.x_set.unwrap_or_else(|| vec![0, 1, 2, 3]);
            let renewal = renewal_rate(model.as_ref(), initial, steps, trials, seed)
                .map_err(|e| e.to_string())?;
            let occupation =
                occupation_measure(model.as_ref(), initial, steps, &x_set, trials, seed)
                    .map_err(|e| e.to_string())?;
            writer.emit(
                "simulate",
                Payload::Simulate {
                    model_id: model.describe(),
                    steps,
                    trials,
                    renewal_rate: renewal,
                    occupation,
                },
            )?;
            Ok(ExitCode::SUCCESS)
        }
        Command::ExcursionStats { .. } => {
            let section = config.excursion_stats.clone().unwrap_or(
                halfstrip::config::ExcursionStatsConfig {
                    x0: None,
                    trials: None,
                    r_max: None,
                    d_grid: None,
                    path_steps: None,
                },
            );
            let x0 = section.x0.unwrap_or(1_000);
            let trials = section.trials.unwrap_or(10_000);
            let r_max = section.r_max.unwrap_or(50);
            let d_grid = section
                .d_grid
                .unwrap_or_else(|| vec![1, 2, 4, 8, 16, 32]);
            let path_steps = section.path_steps.unwrap_or(100_000);

            let lines = model.lines().clone();
            let mut occupation = Vec::new();
            for line in 0..lines.len() {
                occupation.push((
                    lines.label(line).to_string(),
                    estimate_occupation_ratio(model.as_ref(), x0, line, trials, seed)
                        .map_err(|e| e.to_string())?,
                ));
            }
            let moments = estimate_embedded_moments(model.as_ref(), x0, trials, seed)
                .map_err(|e| e.to_string())?;
            let tau = tau_tail_profile(model.as_ref(), x0, trials, r_max, seed)
                .map_err(|e| e.to_string())?;
            let dev = max_deviation_profile(model.as_ref(), x0, trials, &d_grid, seed)
                .map_err(|e| e.to_string())?;
            let path = run_path(
                model.as_ref(),
                State::new(x0, lines.reference()),
                path_steps,
                seed,
            )
            .map_err(|e| e.to_string())?;
            let decomposition =
                decompose_excursions(&path.states, &lines).map_err(|e| e.to_string())?;

            writer.emit(
                "excursion-stats",
                Payload::ExcursionStats {
                    model_id: model.describe(),
                    x0,
                    trials,
                    occupation,
                    moments,
                    tau,
                    dev,
                    excursion_count: decomposition.excursions.len(),
                    trailing_discarded: decomposition.trailing_discarded,
                    lines,
                    decomposition,
                },
            )?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Coupling { .. } => {
            let section = config.coupling.clone().unwrap_or(halfstrip::config::CouplingConfig {
                x0: None,
                horizon: None,
                trials: None,
                log_horizon_a: None,
            });
            let x0 = section.x0.unwrap_or(1_000);
            let trials = section.trials.unwrap_or(2_000);
            let a = section.log_horizon_a.unwrap_or(2.0);
            let horizon = section
                .horizon
                .unwrap_or_else(|| (a * (x0.max(2) as f64).ln()).ceil() as u64);
            let chain = CoupledChain::from_declared(model.as_ref())
                .map_err(|e| e.to_string())?;
            let survival = chain
                .survival(x0, horizon, trials, seed)
                .map_err(|e| e.to_string())?;
            let bound = chain.decoupling_bound(x0 / 2);
            writer.emit(
                "coupling",
                Payload::Coupling {
                    model_id: model.describe(),
                    x0,
                    horizon,
                    trials,
                    per_step_bound_at_half_x0: bound,
                    survival,
                },
            )?;
            Ok(ExitCode::SUCCESS)
        }
        Command::WeakLimit { .. } => {
            let section = config.weak_limit.clone().unwrap_or(halfstrip::config::WeakLimitConfig {
                n: None,
                trials: None,
                initial: None,
            });
            let n = section.n.unwrap_or(10_000);
            let trials = section.trials.unwrap_or(2_000);
            let initial = resolve_initial(model.as_ref(), &section.initial, 0);
            match weak_limit_test(model.as_ref(), n, trials, initial, seed) {
                Ok(report) => {
                    // QQ table (p, empirical quantile, theoretical quantile).
                    let qq: Vec<(f64, f64, f64)> = (1..20)
                        .map(|k| {
                            let p = k as f64 / 20.0;
                            let idx = ((p * report.sorted_scaled.len() as f64).ceil()
                                as usize)
                                .clamp(1, report.sorted_scaled.len())
                                - 1;
                            let emp = report.sorted_scaled[idx];
                            let theo = f_quantile(&report.params, p).unwrap_or(f64::NAN);
                            (p, emp, theo)
                        })
                        .collect();
                    writer.emit(
                        "weak-limit",
                        Payload::WeakLimit {
                            model_id: model.describe(),
                            report,
                            qq,
                        },
                    )?;
                    Ok(ExitCode::SUCCESS)
                }
                Err(
                    e @ (WeakLimitError::HypothesisFailed { .. }
                    | WeakLimitError::PeriodicLimitMatrix),
                ) => {
                    writer.emit(
                        "weak-limit",
                        Payload::HypothesisFailed {
                            model_id: model.describe(),
                            reason: e.to_string(),
                        },
                    )?;
                    Ok(ExitCode::from(2))
                }
                Err(e) => Err(e.to_string()),
            }
        }
    }
}
