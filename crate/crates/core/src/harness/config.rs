//! Experiment configuration: TOML files layered over a built-in preset.
//!
//! Any key missing from the file takes the preset's value. Tables merge
//! recursively; arrays and the `env.dynamics` table (when it names its
//! `kind`) replace the preset's value wholesale. `env.importance_file`
//! may point to an importance CSV (relative to the config file) instead of
//! an inline `env.importance` array.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::agents::DdpgConfig;
use crate::domain::DeviceSpec;
use crate::env::{ActivityDynamics, EnvConfig, Mode};
use crate::error::{Error, Result};
use crate::harness::importance::{load_importance, parse_importance};

pub(crate) const DESK_IMPORTANCE: &str = include_str!("../../fixtures/desk_importance.csv");
pub(crate) const PAPER_IMPORTANCE: &str = include_str!("../../fixtures/paper_importance.csv");

/// Environment variable that overrides the configured seed.
pub const SEED_ENV_VAR: &str = "DAAHM_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Preset {
    /// Six activities, six metrics, three devices; finishes in minutes.
    Desk,
    /// Thirty activities and ten metrics.
    #[default]
    Paper,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Preset::Desk),
            "paper" => Ok(Preset::Paper),
            other => Err(Error::invalid(format!(
                "unknown preset `{other}` (desk or paper)"
            ))),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::Desk => "desk",
            Preset::Paper => "paper",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed; also copied into `env.seed`.
    pub seed: u64,
    /// Training episodes.
    pub episodes: usize,
    /// Evaluation episodes per strategy.
    pub eval_episodes: usize,
    pub mode: Mode,
    pub out_dir: PathBuf,
    /// Metric count of the fixed baseline.
    pub fixed_k: usize,
    pub metric_names: Vec<String>,
    pub agent: DdpgConfig,
    pub env: EnvConfig<f64>,
}

impl ExperimentConfig {
    pub fn preset(preset: Preset) -> Self {
        let (table, episodes) = match preset {
            Preset::Desk => (DESK_IMPORTANCE, 3_000),
            Preset::Paper => (PAPER_IMPORTANCE, 3_000),
        };
        let table =
            parse_importance(table.as_bytes()).expect("bundled importance fixture is valid");
        let activities = table.matrix.activities();
        // Cycles per bit and mean datasize per metric; datasizes vary +-25 % per slot.
        let (cycles, mean_bits): (Vec<f64>, Vec<f64>) = match preset {
            Preset::Desk => (
                vec![100.0, 100.0, 200.0, 50.0, 400.0, 50.0],
                vec![2e5, 3e5, 3e5, 2e5, 2e5, 3e5],
            ),
            Preset::Paper => (
                vec![
                    100.0, 100.0, 200.0, 50.0, 400.0, 50.0, 150.0, 500.0, 50.0, 100.0,
                ],
                vec![2e5, 3e5, 3e5, 2e5, 2e5, 3e5, 2e5, 3e5, 2e5, 2e5],
            ),
        };
        let devices = [0.4e9, 1.0e9, 2.0e9]
            .into_iter()
            .map(|f| DeviceSpec {
                f,
                rho: 1e-27,
                zeta: 3.0,
                mu: 0.5,
            })
            .collect();
        let seed = 0;
        Self {
            seed,
            episodes,
            eval_episodes: 12,
            mode: Mode::Static,
            out_dir: PathBuf::from("results"),
            fixed_k: table.matrix.metrics() / 2,
            metric_names: table.metric_names,
            agent: DdpgConfig::default(),
            env: EnvConfig {
                importance: table.matrix,
                devices,
                datasize_ranges: mean_bits.iter().map(|d| [0.75 * d, 1.25 * d]).collect(),
                cycles,
                theta: 0.5,
                lambda: 1.0,
                episode_length: 200,
                dynamics: ActivityDynamics::sticky(activities, 0.9),
                seed,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate().map_err(|e| match e {
            Error::Config { key, msg } => Error::config(format!("env.{key}"), msg),
            other => other,
        })?;
        self.agent.validate()?;
        let metrics = self.env.metrics();
        if metrics > 64 {
            return Err(Error::config(
                "env.importance",
                format!("{metrics} metrics exceed the 64-bit selection mask"),
            ));
        }
        if self.metric_names.len() != metrics {
            return Err(Error::config(
                "metric_names",
                format!(
                    "has {} names for {metrics} metrics",
                    self.metric_names.len()
                ),
            ));
        }
        if self.fixed_k > metrics {
            return Err(Error::config(
                "fixed_k",
                format!("{} exceeds the {metrics} metrics", self.fixed_k),
            ));
        }
        if self.eval_episodes == 0 {
            return Err(Error::config("eval_episodes", "must be at least 1"));
        }
        if self.env.seed != self.seed {
            return Err(Error::config("env.seed", "must equal the top-level seed"));
        }
        Ok(())
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.env.seed = seed;
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::invalid(format!("serialising config: {e}")))
    }
}

/// Reads `path` over `preset`; see the module docs for the layering rules.
pub fn load_config(path: &Path, preset: Preset) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::from(e).context(format!("reading config {}", path.display())))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    parse_config(&text, preset, base).map_err(|e| e.context(format!("config {}", path.display())))
}

pub fn save_config(config: &ExperimentConfig, path: &Path) -> Result<()> {
    std::fs::write(path, config.to_toml()?)?;
    Ok(())
}

/// Parses config text; relative file references resolve against `base_dir`.
pub fn parse_config(text: &str, preset: Preset, base_dir: &Path) -> Result<ExperimentConfig> {
    let mut user: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| Error::config(span_key(&e), e.message().to_owned()))?;

    if let Some(toml::Value::Table(env)) = user.get_mut("env") {
        if let Some(file) = env.remove("importance_file") {
            let file = file
                .as_str()
                .ok_or_else(|| Error::config("env.importance_file", "must be a string path"))?;
            let table = load_importance(&base_dir.join(file))
                .map_err(|e| Error::config("env.importance_file", e.to_string()))?;
            env.insert(
                "importance".into(),
                toml::Value::try_from(table.matrix.to_rows()).expect("plain array"),
            );
            if !user.contains_key("metric_names") {
                user.insert(
                    "metric_names".into(),
                    toml::Value::try_from(table.metric_names).expect("plain array"),
                );
            }
        }
    }

    let defaults = ExperimentConfig::preset(preset);
    let mut merged = match toml::Value::try_from(&defaults) {
        Ok(toml::Value::Table(t)) => t,
        _ => unreachable!("config serialises to a table"),
    };
    // A user-supplied seed wins over the preset's env.seed.
    if let Some(seed) = user.get("seed").cloned() {
        let env = merged
            .get_mut("env")
            .and_then(toml::Value::as_table_mut)
            .expect("env table");
        env.insert("seed".into(), seed);
    }
    merge(&mut merged, user);

    let config: ExperimentConfig = toml::Value::Table(merged)
        .try_into()
        .map_err(|e: toml::de::Error| Error::config(span_key(&e), e.message().to_owned()))?;
    config.validate()?;
    Ok(config)
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (key, value) in over {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) if !o.contains_key("kind") => {
                merge(b, o)
            }
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}

fn span_key(e: &toml::de::Error) -> String {
    // toml reports the failing key inside the message; keep a stable placeholder.
    let msg = e.message();
    msg.split('`')
        .nth(1)
        .map(str::to_owned)
        .unwrap_or_else(|| "<document>".to_owned())
}
