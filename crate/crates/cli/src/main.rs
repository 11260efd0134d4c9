use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use consol_lab::checkpoint::{load_amn, load_expert, CheckpointMeta};
use consol_lab::distill::{consolidate, DistillConfig, ScheduleStrategy};
use consol_lab::envs::{task_spec, TaskSpec};
use consol_lab::expert::TrainConfig;
use consol_lab::orchestrator::{
    digest, run_active_phase, run_cycle, run_root, save_passive, save_phase, ExperimentConfig, InitSource, TransferMechanism,
};
use consol_lab::report::{build_figure, Figure};
use consol_lab::surgery::TransferSource;
use consol_lab::verify::{run_suite, Suite};
use consol_lab::LabError;

#[derive(Parser)]
#[command(name = "consol-lab", version, about = "Expert training, consolidation and transfer on miniature games")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one expert from a random initialization.
    TrainExpert {
        #[arg(long)]
        task: String,
        #[arg(long, default_value_t = 150_000)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory; defaults to <run root>/experts/<task>-<seed>.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Distill expert checkpoints into one student network.
    Consolidate {
        #[arg(long, num_args = 1.., required = true)]
        experts: Vec<PathBuf>,
        #[arg(long, default_value = "alt:episode")]
        schedule: ScheduleStrategy,
        #[arg(long, default_value_t = 75_000)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train an expert initialized from a student or expert checkpoint.
    Transfer {
        #[arg(long)]
        mechanism: TransferMechanism,
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        task: String,
        #[arg(long, default_value_t = 150_000)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a full active, passive, active cycle from a TOML config.
    Cycle {
        #[arg(long)]
        config: PathBuf,
    },
    /// Render a figure preset from experiment directories.
    Report {
        #[arg(long, num_args = 1.., required = true)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        figure: Figure,
        #[arg(long, default_value = "figures")]
        out: PathBuf,
    },
    /// Run self-checks that need no long training.
    Verify {
        /// One suite; all suites when omitted.
        #[arg(long)]
        suite: Option<Suite>,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

enum Outcome {
    Done,
    VerificationFailed,
}

fn default_out(out: Option<PathBuf>, parts: &[&str]) -> PathBuf {
    out.unwrap_or_else(|| parts.iter().fold(run_root(Path::new("runs")), |p, s| p.join(s)))
}

/// Accepts a checkpoint directory or any directory above one written by
/// these commands.
fn checkpoint_dir(path: &Path) -> anyhow::Result<PathBuf> {
    for candidate in [path.to_path_buf(), path.join("checkpoint"), path.join("amn").join("checkpoint")] {
        if candidate.join("manifest.json").exists() {
            return Ok(candidate);
        }
    }
    bail!("no checkpoint manifest under {}", path.display())
}

fn task(name: &str) -> anyhow::Result<TaskSpec> {
    Ok(task_spec(name)?)
}

fn report_warnings(warnings: &[String]) {
    for w in warnings {
        eprintln!("warning: {w}");
    }
}

fn run(command: Command) -> anyhow::Result<Outcome> {
    match command {
        Command::TrainExpert { task: name, steps, seed, out } => {
            let spec = task(&name)?;
            let config = TrainConfig {
                total_steps: steps,
                ..TrainConfig::default()
            };
            let out = default_out(out, &["experts", &format!("{}-{seed}", spec.id)]);
            let experts = run_active_phase(std::slice::from_ref(&spec), InitSource::Random, &config, seed)?;
            let meta = CheckpointMeta {
                config_hash: digest(&config),
                seed,
            };
            save_phase(&out, &experts, &meta)?;
            println!("{}: final greedy score {:.3}", spec.id, experts[0].final_score);
            println!("wrote {}", out.join(spec.id.as_str()).display());
        }
        Command::Consolidate {
            experts,
            schedule,
            steps,
            seed,
            out,
        } => {
            let mut loaded = Vec::new();
            for dir in &experts {
                let ck = load_expert(&checkpoint_dir(dir)?, None)
                    .with_context(|| format!("loading expert {}", dir.display()))?;
                report_warnings(&ck.warnings);
                loaded.push(ck.value);
            }
            let tasks: Vec<TaskSpec> = loaded.iter().map(|e| TaskSpec::new(e.task)).collect();
            let config = DistillConfig {
                total_steps: steps,
                ..DistillConfig::default()
            };
            let amn = consolidate(&loaded, &tasks, &config, schedule, seed)?;
            let out = default_out(out, &["consolidated", &format!("{schedule}-{seed}").replace(':', "-")]);
            let meta = CheckpointMeta {
                config_hash: digest(&(&config, schedule.to_string())),
                seed,
            };
            save_passive(&out, &amn, &meta)?;
            for (task, log) in &amn.logs {
                let last = log.records.last();
                let pct = last.and_then(|r| r.percent_of_expert).map_or("n/a".to_string(), |p| format!("{:.1}%", 100.0 * p));
                println!("{task}: {pct} of expert");
            }
            println!("wrote {}", out.display());
        }
        Command::Transfer {
            mechanism,
            source,
            task: name,
            steps,
            seed,
            out,
        } => {
            let spec = task(&name)?;
            let dir = checkpoint_dir(&source)?;
            let config = TrainConfig {
                total_steps: steps,
                ..TrainConfig::default()
            };
            let (amn, expert) = match load_amn(&dir, None) {
                Ok(a) => {
                    report_warnings(&a.warnings);
                    (Some(a.value), None)
                }
                Err(LabError::Manifest(_)) => {
                    let e = load_expert(&dir, None)?;
                    report_warnings(&e.warnings);
                    (None, Some(e.value))
                }
                Err(e) => return Err(e.into()),
            };
            let init = match (mechanism, &amn, &expert) {
                (TransferMechanism::Layers(k), Some(a), _) => InitSource::Layers(TransferSource::Amn(a), k),
                (TransferMechanism::Layers(k), None, Some(e)) => InitSource::Layers(TransferSource::Expert(e), k),
                (TransferMechanism::None, _, _) => InitSource::Random,
                (m, Some(a), _) => InitSource::from_mechanism(m, a),
                (m, None, _) => bail!("{m} transfer needs a consolidated student checkpoint"),
            };
            let experts = run_active_phase(std::slice::from_ref(&spec), init, &config, seed)?;
            let out = default_out(out, &["transfer", &format!("{mechanism}-{}-{seed}", spec.id).replace(':', "-")]);
            let meta = CheckpointMeta {
                config_hash: digest(&(&config, mechanism.to_string())),
                seed,
            };
            save_phase(&out, &experts, &meta)?;
            let log = &experts[0].log;
            println!(
                "{}: initial {:.3}, final greedy score {:.3}",
                spec.id,
                log.records.first().map_or(f64::NAN, |r| r.mean_return),
                experts[0].final_score
            );
            println!("wrote {}", out.join(spec.id.as_str()).display());
        }
        Command::Cycle { config } => {
            let config = ExperimentConfig::load(&config)?;
            let result = run_cycle(&config)?;
            for seed in &result.seeds {
                for e in &seed.phase2 {
                    println!("seed {} {}: final greedy score {:.3}", seed.seed, e.task, e.final_score);
                }
            }
            println!("wrote {}", result.root.join(&result.config_hash).display());
        }
        Command::Report { runs, figure, out } => {
            for path in build_figure(figure, &runs, &out)? {
                println!("wrote {}", path.display());
            }
        }
        Command::Verify { suite, seed } => {
            let suites = suite.map_or(Suite::ALL.to_vec(), |s| vec![s]);
            let mut ok = true;
            for s in suites {
                let report = run_suite(s, seed)?;
                print!("{report}");
                ok &= report.passed();
            }
            if !ok {
                return Ok(Outcome::VerificationFailed);
            }
        }
    }
    Ok(Outcome::Done)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::VerificationFailed) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(3)
        }
    }
}
