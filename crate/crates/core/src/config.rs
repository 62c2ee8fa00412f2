//! Run configuration: one TOML file with a section per module.
//!
//! ```toml
//! [channel]
//! rho = 0.9
//! frozen = true
//!
//! [train]
//! workers = 2
//!
//! [run]
//! seed = 7
//! ```
//!
//! Missing keys take their defaults and unknown keys are errors. A
//! `run.json` record written by a previous run is accepted wherever a config
//! file is, so that run can be repeated.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channel::ChannelParams;
use crate::error::{Error, Result};
use crate::eval::EvalConfig;
use crate::net::NetShape;
use crate::trainer::{TrainConfig, TrainSetup, FORMAT_VERSION};
use crate::world::WorldParams;

pub const SEED_ENV: &str = "UAVCHASE_SEED";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub channel: ChannelParams,
    pub world: WorldParams,
    pub net: NetShape,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub run: RunSection,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    /// Training episode budget.
    pub train_episodes: Option<usize>,
    /// Episodes per evaluation condition.
    pub eval_episodes: Option<usize>,
    pub sweep_f: Option<Vec<f64>>,
    pub sweep_rho: Option<Vec<f64>>,
    pub greedy: Option<bool>,
}

fn keyed(section: &str, e: Error) -> Error {
    match e {
        Error::Config { .. } => e,
        other => Error::Config {
            key: section.to_string(),
            reason: other.to_string(),
        },
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::ConfigParse(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.channel.validate().map_err(|e| keyed("channel", e))?;
        self.world.validate().map_err(|e| keyed("world", e))?;
        self.net.validate().map_err(|e| keyed("net", e))?;
        self.train.validate()?;
        let check_list = |key: &str, v: &[f64], ok: &dyn Fn(f64) -> bool| {
            if v.iter().all(|x| ok(*x)) {
                Ok(())
            } else {
                Err(Error::Config {
                    key: format!("eval.{key}"),
                    reason: format!("invalid entry in {v:?}"),
                })
            }
        };
        check_list("sweep_f", &self.eval.sweep_f, &|f| f.is_finite() && f > 0.0)?;
        check_list("sweep_rho", &self.eval.sweep_rho, &|r| (0.0..1.0).contains(&r))?;
        check_list("sweep_v", &self.eval.sweep_v, &|v| v.is_finite() && v > 0.0)?;
        Ok(())
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.run.seed = Some(s);
        }
        if let Some(w) = o.workers {
            self.train.workers = w;
        }
        if let Some(e) = o.train_episodes {
            self.train.episodes = e;
        }
        if let Some(e) = o.eval_episodes {
            self.eval.episodes = e;
        }
        if let Some(f) = &o.sweep_f {
            self.eval.sweep_f = f.clone();
        }
        if let Some(r) = &o.sweep_rho {
            self.eval.sweep_rho = r.clone();
        }
        if let Some(g) = o.greedy {
            self.eval.greedy = g;
        }
    }

    /// Seed after precedence: flag or file, then the environment, then 0.
    pub fn seed(&self) -> u64 {
        self.run.seed.unwrap_or(0)
    }

    pub fn train_setup(&self) -> TrainSetup {
        TrainSetup {
            channel: self.channel,
            world: self.world,
            shape: self.net,
            train: self.train,
            seed: self.seed(),
        }
    }
}

/// Loads `path` (TOML, or a `run.json` record), applies `overrides` and
/// fills a missing seed from `env_seed`.
pub fn parse_config(path: Option<&Path>, overrides: &Overrides, env_seed: Option<&str>) -> Result<Config> {
    let mut cfg = match path {
        None => Config::default(),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            if p.extension().is_some_and(|e| e == "json") {
                RunRecord::from_json(&text)?.config
            } else {
                toml::from_str(&text).map_err(|e| Error::ConfigParse(format!("{}: {e}", p.display())))?
            }
        }
    };
    cfg.apply(overrides);
    if cfg.run.seed.is_none() {
        if let Some(s) = env_seed {
            let seed = s.trim().parse::<u64>().map_err(|e| Error::Config {
                key: SEED_ENV.into(),
                reason: format!("not a u64: {e}"),
            })?;
            cfg.run.seed = Some(seed);
        }
    }
    cfg.run.seed = Some(cfg.seed());
    cfg.validate()?;
    Ok(cfg)
}

/// Provenance written next to every run's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunRecord {
    pub command: String,
    pub seed: u64,
    pub package_version: String,
    pub checkpoint_format: u32,
    pub config: Config,
}

impl RunRecord {
    pub fn new(command: &str, config: &Config) -> Self {
        Self {
            command: command.to_string(),
            seed: config.seed(),
            package_version: env!("CARGO_PKG_VERSION").to_string(),
            checkpoint_format: FORMAT_VERSION,
            config: config.clone(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::ConfigParse(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::ConfigParse(format!("run record: {e}")))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = Config::from_toml("").unwrap();
        assert_eq!(c.train.gamma, 0.99);
        assert_eq!(c.train.beta, 0.01);
        assert_eq!(c.train.update_interval, 5);
        assert_eq!(c.train.lr, 1e-5);
        assert_eq!(c.train.workers, 8);
        assert_eq!(c.world.obs_len, 50);
        assert_eq!(c.world.success_radius_m, 2.0);
        assert_eq!(c.world.max_steps, 500);
        assert_eq!(c.channel.k_factor, 3.0);
        assert_eq!(c.channel.path_exp, 2.6);
        assert_eq!(c.net.hidden, 128);
    }

    #[test]
    fn rho_out_of_range_names_the_key() {
        let err = Config::from_toml("[channel]\nrho = 1.5\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("channel") && msg.contains("rho"), "{msg}");
    }

    #[test]
    fn unknown_key_rejected() {
        let err = Config::from_toml("[train]\nworkerz = 2\n").unwrap_err();
        assert!(err.to_string().contains("workerz"), "{err}");
        assert!(Config::from_toml("[bogus]\n").is_err());
    }

    #[test]
    fn type_mismatch_rejected() {
        let err = Config::from_toml("[train]\nworkers = \"two\"\n").unwrap_err();
        assert!(err.to_string().contains("workers"), "{err}");
    }

    #[test]
    fn toml_round_trip() {
        let mut c = Config::default();
        c.channel.frozen = true;
        c.train.value_loss = crate::trainer::ValueLoss::Td0;
        c.run.seed = Some(42);
        let text = c.to_toml().unwrap();
        let back = Config::from_toml(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_toml().unwrap(), text);
    }

    #[test]
    fn flags_override_file_and_env() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, "[train]\nworkers = 8\n[run]\nseed = 5\n").unwrap();
        let o = Overrides {
            workers: Some(2),
            ..Default::default()
        };
        let c = parse_config(Some(&p), &o, Some("9")).unwrap();
        assert_eq!(c.train.workers, 2);
        assert_eq!(c.seed(), 5);
        let c = parse_config(None, &Overrides::default(), Some("9")).unwrap();
        assert_eq!(c.seed(), 9);
        let c = parse_config(None, &Overrides::default(), None).unwrap();
        assert_eq!(c.seed(), 0);
        assert!(parse_config(None, &Overrides::default(), Some("x")).is_err());
    }

    #[test]
    fn run_record_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = Config::default();
        c.run.seed = Some(3);
        c.channel.frozen = true;
        let rec = RunRecord::new("train", &c);
        let p = dir.path().join("run.json");
        rec.write(&p).unwrap();
        let back = parse_config(Some(&p), &Overrides::default(), None).unwrap();
        assert_eq!(back, c);
    }
}
