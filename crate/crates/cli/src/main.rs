use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use coopalign::harness::{
    emit_alignment_report, emit_sweep_report, generate_scenario, run_alignment_benchmark, run_noise_sweep,
    run_pipeline, run_selftest, scenario_seed, write_atomic, ExperimentConfig, HarnessError, Method, NoiseLevel,
    Scenario,
};
use coopalign::geometry::seeded_rng;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "coopalign", version, about = "GNSS-free pose alignment and cooperative BEV fusion experiments")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// JSON experiment config; unknown fields are rejected.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; every scenario derives its own stream from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (default: the config's out_dir, else `out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Comma-separated methods, e.g. `pgc,graph,icp`.
    #[arg(long, global = true, value_delimiter = ',')]
    methods: Vec<String>,
    /// Worker threads; 0 or 1 runs sequentially.
    #[arg(long, global = true)]
    parallel: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write seeded scenario files.
    Gen {
        /// Number of scenarios (default: the config's scenario count).
        #[arg(long)]
        count: Option<usize>,
    },
    /// Alignment benchmark: success rate, bytes and optional wall time per method.
    Align {
        /// Also record the median wall time of three alignment runs.
        #[arg(long)]
        timing: bool,
    },
    /// Detection AP under GNSS pose noise.
    Sweep,
    /// One end-to-end pipeline run with detailed logging.
    Pipeline {
        /// Scenario index within the seeded set.
        #[arg(long, default_value_t = 0, conflicts_with = "scenario_file")]
        index: usize,
        /// Read a scenario written by `gen` instead of generating one.
        #[arg(long)]
        scenario_file: Option<PathBuf>,
        /// GNSS noise as `sigma_t,sigma_r` (m, deg).
        #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.0])]
        noise: Vec<f64>,
    },
    /// Fast invariant checks.
    Selftest,
}

fn load_config(c: &Common) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(p) = c.parallel {
        cfg.parallel = p;
    }
    if !c.methods.is_empty() {
        cfg.methods = c.methods.iter().map(|m| m.trim().parse()).collect::<Result<_, _>>()?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(c: &Common, cfg: &ExperimentConfig) -> PathBuf {
    c.out
        .clone()
        .or_else(|| cfg.out_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = load_config(&cli.common)?;
    let out = out_dir(&cli.common, &cfg);
    match cli.command {
        Command::Gen { count } => {
            let n = count.unwrap_or(cfg.scenarios);
            for i in 0..n {
                let seed = scenario_seed(cfg.seed, i);
                let s = generate_scenario(&cfg.scenario, seed, &mut seeded_rng(seed))
                    .with_context(|| format!("scenario {i}"))?;
                s.write(&out, &format!("scenario_{i:04}"))?;
            }
            write_json(&out.join("config.json"), &cfg)?;
            println!("wrote {n} scenarios to {}", out.display());
        }
        Command::Align { timing } => {
            cfg.timing |= timing;
            let report = run_alignment_benchmark(&cfg)?;
            emit_alignment_report(&report, &out)?;
            println!("{:<16} {:>10} {:>8} {:>10} {:>8}", "method", "co_visible", "δ_s %", "C (log2)", "time s");
            for s in &report.summaries {
                println!(
                    "{:<16} {:>10} {:>8.2} {:>10.2} {:>8}",
                    s.method.name(),
                    s.co_visible.map(|k| k.to_string()).unwrap_or_else(|| "-".into()),
                    s.success_rate_pct,
                    s.log2_mean_bytes,
                    s.mean_time_s.map(|t| format!("{t:.5}")).unwrap_or_else(|| "-".into()),
                );
            }
        }
        Command::Sweep => {
            let report = run_noise_sweep(&cfg)?;
            emit_sweep_report(&report, &out)?;
            for c in &report.cells {
                println!(
                    "{:<16} {:>9} AP@{:.1} {:.4}",
                    c.method.name(),
                    NoiseLevel(c.sigma_t, c.sigma_r).label(),
                    c.iou_thr,
                    c.mean_ap
                );
            }
        }
        Command::Pipeline { index, scenario_file, noise } => {
            let scenario = match &scenario_file {
                Some(p) => Scenario::read(p)?,
                None => {
                    let seed = scenario_seed(cfg.seed, index);
                    generate_scenario(&cfg.scenario, seed, &mut seeded_rng(seed))?
                }
            };
            let method = cfg.methods.first().copied().unwrap_or(Method::Pgc);
            let [t, r] = noise[..] else {
                return Err(HarnessError::Config("--noise takes sigma_t,sigma_r".into()).into());
            };
            let level = NoiseLevel(t, r);
            let output = run_pipeline(&scenario, method, level, &cfg)?;
            log::info!(
                "{} detections, {} ground-truth boxes, {} bytes sent",
                output.detections.len(),
                output.ground_truth.len(),
                output.ledger.total_bytes()
            );
            write_json(&out.join("pipeline.json"), &output)?;
            println!("{}", out.join("pipeline.json").display());
        }
        Command::Selftest => {
            let report = run_selftest(&cfg)?;
            write_json(&out.join("selftest.json"), &report)?;
            for c in &report.checks {
                println!("{} {:<26} {}", if c.passed { "ok  " } else { "FAIL" }, c.name, c.detail);
            }
            if !report.passed {
                anyhow::bail!("selftest failed");
            }
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    err.chain()
        .find_map(|e| e.downcast_ref::<HarnessError>())
        .map(|e| e.exit_code() as u8)
        .unwrap_or(2)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let default_level = if matches!(cli.command, Command::Pipeline { .. }) { "debug" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("COOPALIGN_LOG", default_level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
