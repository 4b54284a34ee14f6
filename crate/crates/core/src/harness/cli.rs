//! `daahm` command-line front end.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::agents::{DdpgAgent, Strategy, TrainingHistory};
use crate::env::Mode;
use crate::error::{Error, Result};
use crate::harness::checkpoint::{load_checkpoint, save_checkpoint};
use crate::harness::config::{load_config, save_config, ExperimentConfig, Preset, SEED_ENV_VAR};
use crate::harness::experiment::{
    self, compare_with, evaluate_strategy, oracle_records, oracle_rows, summary_records,
    train_agent_with, training_records, Convergence, ORACLE_HEADER, SUMMARY_HEADER,
    TRAINING_HEADER,
};
use crate::harness::gradcheck::{run_gradcheck, worst, EPSILON, TOLERANCE};
use crate::harness::results::{emit_results, format_float, rows_from_evaluation, ResultRow};

pub const TRAINING_CSV: &str = "training.csv";
pub const CHECKPOINT_FILE: &str = "agent.ckpt";
pub const CONFIG_FILE: &str = "config.toml";
pub const SUMMARY_CSV: &str = "compare_summary.csv";
pub const SERIES_CSV: &str = "compare_series.csv";
pub const ORACLE_CSV: &str = "oracle.csv";
pub const GRADCHECK_CSV: &str = "gradcheck.csv";

/// Random networks checked by `gradcheck`.
pub const GRADCHECK_NETWORKS: usize = 100;

#[derive(Debug, Parser)]
#[command(
    name = "daahm",
    version,
    about = "Activity-aware health-metric selection: train, evaluate and compare monitoring policies"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train the agent; writes training.csv and agent.ckpt.
    Train(CommonArgs),
    /// Evaluate one strategy; writes evaluate_<strategy>.csv.
    Evaluate(CommonArgs),
    /// Train, then evaluate every strategy on shared seeds.
    Compare(CommonArgs),
    /// Compare a strategy's per-slot utility with the brute-force optimum.
    Oracle(CommonArgs),
    /// Finite-difference check of the network gradients.
    Gradcheck(CommonArgs),
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// TOML config layered over the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in defaults: desk (6 activities x 6 metrics) or paper (30 x 10).
    #[arg(long, default_value = "paper")]
    preset: Preset,
    /// Master seed; overrides DAAHM_SEED and the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Evaluation scenario.
    #[arg(long)]
    mode: Option<Mode>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Strategy for evaluate/oracle: daahm, classical, random or fixed.
    #[arg(long)]
    strategy: Option<Strategy>,
    /// Training episodes.
    #[arg(long)]
    episodes: Option<usize>,
    /// Agent checkpoint for the daahm strategy [default: <out>/agent.ckpt].
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

/// Parses `argv` (including the program name) and runs the command.
/// Returns the process exit status.
pub fn run_command<I, S>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let status = e.exit_code();
            let text = e.render().to_string();
            let sink: &mut dyn Write = if e.use_stderr() { stderr } else { stdout };
            let _ = write!(sink, "{text}");
            return status;
        }
    };
    let env_seed = std::env::var(SEED_ENV_VAR).ok();
    match dispatch(cli.command, env_seed.as_deref(), stdout, stderr) {
        Ok(status) => status,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            1
        }
    }
}

fn dispatch(
    command: Command,
    env_seed: Option<&str>,
    out: &mut dyn Write,
    log: &mut dyn Write,
) -> Result<i32> {
    match command {
        Command::Train(args) => train(&resolve(&args, env_seed)?, out, log),
        Command::Evaluate(args) => {
            let cfg = resolve(&args, env_seed)?;
            evaluate(
                &cfg,
                args.strategy.unwrap_or(Strategy::Daahm),
                args.checkpoint.as_deref(),
                out,
            )
        }
        Command::Compare(args) => compare(&resolve(&args, env_seed)?, out, log),
        Command::Oracle(args) => {
            let cfg = resolve(&args, env_seed)?;
            oracle(
                &cfg,
                args.strategy.unwrap_or(Strategy::Daahm),
                args.checkpoint.as_deref(),
                out,
            )
        }
        Command::Gradcheck(args) => gradcheck(&resolve(&args, env_seed)?, out),
    }
}

/// Applies the layering: preset, then config file, then `DAAHM_SEED`, then flags.
fn resolve(args: &CommonArgs, env_seed: Option<&str>) -> Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => load_config(path, args.preset)?,
        None => ExperimentConfig::preset(args.preset),
    };
    if let Some(text) = env_seed {
        let seed = text.trim().parse().map_err(|_| {
            Error::config(SEED_ENV_VAR, format!("`{text}` is not an unsigned integer"))
        })?;
        cfg.set_seed(seed);
    }
    if let Some(seed) = args.seed {
        cfg.set_seed(seed);
    }
    if let Some(mode) = args.mode {
        cfg.mode = mode;
    }
    if let Some(out) = &args.out {
        cfg.out_dir = out.clone();
    }
    if let Some(episodes) = args.episodes {
        cfg.episodes = episodes;
    }
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| {
        Error::from(e).context(format!(
            "creating output directory {}",
            cfg.out_dir.display()
        ))
    })?;
    Ok(cfg)
}

fn progress(log: &mut dyn Write, total: usize) -> impl FnMut(usize, &TrainingHistory<f64>) + '_ {
    let every = (total / 10).max(1);
    move |episode, history| {
        if (episode + 1) % every == 0 || episode + 1 == total {
            let recent =
                &history.episode_rewards[history.len().saturating_sub(experiment::CURVE_WINDOW)..];
            let avg = recent.iter().sum::<f64>() / recent.len() as f64;
            let _ = writeln!(
                log,
                "episode {}/{total}: moving average reward {avg:.3}",
                episode + 1
            );
        }
    }
}

fn write_csv<const N: usize>(
    path: &Path,
    header: [&str; N],
    records: &[[String; N]],
) -> Result<()> {
    let inner = || -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(header)?;
        for r in records {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    };
    inner().map_err(|e| e.context(format!("writing {}", path.display())))
}

fn save_training(
    cfg: &ExperimentConfig,
    agent: &DdpgAgent<f64>,
    history: &TrainingHistory<f64>,
) -> Result<()> {
    write_csv(
        &cfg.out_dir.join(TRAINING_CSV),
        TRAINING_HEADER,
        &training_records(history),
    )?;
    save_checkpoint(agent, &cfg.out_dir.join(CHECKPOINT_FILE))?;
    save_config(cfg, &cfg.out_dir.join(CONFIG_FILE))
}

fn train(cfg: &ExperimentConfig, out: &mut dyn Write, log: &mut dyn Write) -> Result<i32> {
    let (agent, history) = train_agent_with(cfg, progress(log, cfg.episodes))?;
    save_training(cfg, &agent, &history)?;
    if let Some(c) = Convergence::of(&history.episode_rewards) {
        writeln!(
            out,
            "trained {} episodes: final moving average {:.4}, first-10% mean {:.4}",
            history.len(),
            c.late_mean,
            c.early_mean
        )?;
    }
    writeln!(out, "wrote {}", cfg.out_dir.join(TRAINING_CSV).display())?;
    writeln!(out, "wrote {}", cfg.out_dir.join(CHECKPOINT_FILE).display())?;
    Ok(0)
}

fn load_agent(cfg: &ExperimentConfig, checkpoint: Option<&Path>) -> Result<DdpgAgent<f64>> {
    let path = checkpoint.map_or_else(|| cfg.out_dir.join(CHECKPOINT_FILE), Path::to_path_buf);
    if !path.exists() {
        return Err(Error::invalid(format!(
            "no checkpoint at {}; run `daahm train` first or pass --checkpoint",
            path.display()
        )));
    }
    load_checkpoint::<f64>(&path)?.into_agent(&cfg.agent)
}

fn agent_for(
    strategy: Strategy,
    cfg: &ExperimentConfig,
    checkpoint: Option<&Path>,
) -> Result<Option<DdpgAgent<f64>>> {
    Ok(match strategy {
        Strategy::Daahm => Some(load_agent(cfg, checkpoint)?),
        _ => None,
    })
}

fn evaluate(
    cfg: &ExperimentConfig,
    strategy: Strategy,
    checkpoint: Option<&Path>,
    out: &mut dyn Write,
) -> Result<i32> {
    let agent = agent_for(strategy, cfg, checkpoint)?;
    let eval = evaluate_strategy(strategy, cfg, agent.as_ref())?;
    let rows = rows_from_evaluation(strategy.name(), &eval);
    check_rows(&rows, cfg.env.lambda)?;
    let path = cfg.out_dir.join(format!("evaluate_{strategy}.csv"));
    emit_results(&rows, &path)?;
    writeln!(
        out,
        "{strategy} ({} mode): total reward {:.4} over {} slots",
        experiment::mode_label(cfg.mode),
        eval.total,
        eval.slots.len()
    )?;
    writeln!(out, "wrote {}", path.display())?;
    Ok(0)
}

fn check_rows(rows: &[ResultRow], lambda: f64) -> Result<()> {
    rows.iter().try_for_each(|r| r.check(lambda))
}

fn compare(cfg: &ExperimentConfig, out: &mut dyn Write, log: &mut dyn Write) -> Result<i32> {
    let comparison = compare_with(cfg, progress(log, cfg.episodes))?;
    save_training(cfg, &comparison.agent, &comparison.history)?;
    let mut series = Vec::new();
    for (strategy, eval) in &comparison.evaluations {
        series.extend(rows_from_evaluation(strategy.name(), eval));
    }
    check_rows(&series, cfg.env.lambda)?;
    emit_results(&series, &cfg.out_dir.join(SERIES_CSV))?;
    write_csv(
        &cfg.out_dir.join(SUMMARY_CSV),
        SUMMARY_HEADER,
        &summary_records(&comparison),
    )?;

    writeln!(
        out,
        "{:<10} {:>16} {:>16}",
        "strategy", "total reward", "per episode"
    )?;
    for (strategy, eval) in &comparison.evaluations {
        writeln!(
            out,
            "{:<10} {:>16.4} {:>16.4}",
            strategy.name(),
            eval.total,
            comparison.mean_episode_reward(*strategy)
        )?;
    }
    writeln!(out, "wrote {}", cfg.out_dir.join(SUMMARY_CSV).display())?;
    writeln!(out, "wrote {}", cfg.out_dir.join(SERIES_CSV).display())?;
    Ok(0)
}

fn oracle(
    cfg: &ExperimentConfig,
    strategy: Strategy,
    checkpoint: Option<&Path>,
    out: &mut dyn Write,
) -> Result<i32> {
    let agent = agent_for(strategy, cfg, checkpoint)?;
    let eval = evaluate_strategy(strategy, cfg, agent.as_ref())?;
    let rows = oracle_rows(&eval, &cfg.env)?;
    write_csv(
        &cfg.out_dir.join(ORACLE_CSV),
        ORACLE_HEADER,
        &oracle_records(strategy, &rows),
    )?;
    let near = rows.iter().filter(|r| r.ratio() >= 0.9).count();
    let policy: f64 = rows.iter().map(|r| r.policy).sum();
    let best: f64 = rows.iter().map(|r| r.oracle).sum();
    writeln!(
        out,
        "{strategy}: total utility {policy:.4} vs optimum {best:.4}; {near}/{} slots within 90% of optimum",
        rows.len()
    )?;
    writeln!(out, "wrote {}", cfg.out_dir.join(ORACLE_CSV).display())?;
    Ok(0)
}

fn gradcheck(cfg: &ExperimentConfig, out: &mut dyn Write) -> Result<i32> {
    let cases = run_gradcheck(GRADCHECK_NETWORKS, cfg.seed)?;
    let records: Vec<[String; 7]> = cases
        .iter()
        .enumerate()
        .map(|(i, c)| {
            [
                i.to_string(),
                c.sizes[0].to_string(),
                c.sizes[1].to_string(),
                c.sizes[2].to_string(),
                activation_name(c.activations[0]).to_owned(),
                activation_name(c.activations[1]).to_owned(),
                format_float(c.max_relative_error),
            ]
        })
        .collect();
    let header = [
        "network",
        "inputs",
        "hidden",
        "outputs",
        "hidden_activation",
        "output_activation",
        "max_relative_error",
    ];
    write_csv(&cfg.out_dir.join(GRADCHECK_CSV), header, &records)?;
    let worst = worst(&cases);
    let pass = worst < TOLERANCE;
    writeln!(
        out,
        "gradcheck: {} networks, eps {EPSILON:e}, max relative error {worst:.3e} ({})",
        cases.len(),
        if pass { "ok" } else { "FAILED" }
    )?;
    writeln!(out, "wrote {}", cfg.out_dir.join(GRADCHECK_CSV).display())?;
    Ok(if pass { 0 } else { 1 })
}

fn activation_name(a: crate::nn::Activation) -> &'static str {
    match a {
        crate::nn::Activation::Relu => "relu",
        crate::nn::Activation::Sigmoid => "sigmoid",
        crate::nn::Activation::Identity => "identity",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(args: &[&str]) -> (i32, String, String) {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let status = run_command(
            std::iter::once("daahm").chain(args.iter().copied()),
            &mut out,
            &mut err,
        );
        (
            status,
            String::from_utf8(out).unwrap(),
            String::from_utf8(err).unwrap(),
        )
    }

    #[test]
    fn unknown_subcommand_prints_usage() {
        let (status, _, err) = run(&["fly"]);
        assert_ne!(status, 0);
        assert!(err.contains("Usage"), "{err}");
        let (status, _, err) = run(&["train", "--bogus"]);
        assert_ne!(status, 0);
        assert!(err.contains("Usage"), "{err}");
    }

    #[test]
    fn flags_override_config_and_env() {
        let args = CommonArgs {
            config: None,
            preset: Preset::Desk,
            seed: Some(5),
            mode: Some(Mode::Dynamic),
            out: Some(tempfile::tempdir().unwrap().path().join("x")),
            strategy: None,
            episodes: Some(7),
            checkpoint: None,
        };
        let cfg = resolve(&args, Some("9")).unwrap();
        assert_eq!(
            (cfg.seed, cfg.env.seed, cfg.episodes, cfg.mode),
            (5, 5, 7, Mode::Dynamic)
        );
        let cfg = resolve(&CommonArgs { seed: None, ..args }, Some("9")).unwrap();
        assert_eq!(cfg.seed, 9);
    }

    #[test]
    fn bad_env_seed_is_rejected() {
        let args = CommonArgs {
            config: None,
            preset: Preset::Desk,
            seed: None,
            mode: None,
            out: Some(tempfile::tempdir().unwrap().path().to_path_buf()),
            strategy: None,
            episodes: None,
            checkpoint: None,
        };
        assert!(resolve(&args, Some("seven"))
            .unwrap_err()
            .to_string()
            .contains(SEED_ENV_VAR));
    }

    #[test]
    fn evaluate_daahm_without_checkpoint_fails() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().to_str().unwrap();
        let (status, _, err) = run(&[
            "evaluate",
            "--preset",
            "desk",
            "--out",
            out,
            "--strategy",
            "daahm",
        ]);
        assert_eq!(status, 1);
        assert!(err.contains("checkpoint"), "{err}");
    }
}
