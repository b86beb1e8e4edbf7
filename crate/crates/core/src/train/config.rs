use crate::search::{BeamConfig, CacheMode};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected key=value")]
    Syntax { line: usize },
    #[error("line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: bad value {value:?} for {key}")]
    BadValue {
        line: usize,
        key: String,
        value: String,
    },
    #[error("unsupported config version {0}")]
    Version(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch: usize,
    pub beam: BeamConfig,
    /// Exponent on model probability in the meritocratic weights.
    pub beta: f64,
    pub epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub workers: usize,
    pub one_example_reward: bool,
    pub no_augmentation: bool,
    pub no_warmstart: bool,
    pub cbow: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.001,
            batch: 8,
            beam: BeamConfig::default(),
            beta: 0.5,
            epochs: 30,
            patience: 5,
            seed: 0,
            workers: 1,
            one_example_reward: false,
            no_augmentation: false,
            no_warmstart: false,
            cbow: true,
        }
    }
}

pub const CONFIG_VERSION: &str = "1";

impl TrainConfig {
    /// Applies a flat `key = value` file on top of `self`. `#` starts a
    /// comment; an optional `version` key must match.
    pub fn apply(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or(ConfigError::Syntax { line: i + 1 })?;
            self.set(k.trim(), v.trim()).map_err(|e| match e {
                ConfigError::UnknownKey { key, .. } => ConfigError::UnknownKey { line: i + 1, key },
                ConfigError::BadValue { key, value, .. } => ConfigError::BadValue {
                    line: i + 1,
                    key,
                    value,
                },
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let bad = || ConfigError::BadValue {
            line: 0,
            key: key.to_string(),
            value: value.to_string(),
        };
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
            value.parse().map_err(|_| ConfigError::BadValue {
                line: 0,
                key: key.to_string(),
                value: value.to_string(),
            })
        }
        match key {
            "version" if value != CONFIG_VERSION => {
                return Err(ConfigError::Version(value.to_string()))
            }
            "version" => {}
            "lr" => self.lr = num(key, value)?,
            "batch" => self.batch = num(key, value)?,
            "beam" => self.beam.beam = num(key, value)?,
            "d" => self.beam.d = num(key, value)?,
            "cache" => {
                self.beam.cache = match value {
                    "off" => CacheMode::Off,
                    "final" => CacheMode::FinalOnly,
                    "every-step" => CacheMode::EveryStep,
                    _ => return Err(bad()),
                }
            }
            "beta" => {
                let b: f64 = num(key, value)?;
                if !(0.0..=1.0).contains(&b) {
                    return Err(bad());
                }
                self.beta = b;
            }
            "epochs" => self.epochs = num(key, value)?,
            "patience" => self.patience = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "workers" => self.workers = num(key, value)?,
            "one_example_reward" => self.one_example_reward = num(key, value)?,
            "no_augmentation" => self.no_augmentation = num(key, value)?,
            "no_warmstart" => self.no_warmstart = num(key, value)?,
            "cbow" => self.cbow = num(key, value)?,
            _ => {
                return Err(ConfigError::UnknownKey {
                    line: 0,
                    key: key.to_string(),
                })
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let cache = match self.beam.cache {
            CacheMode::Off => "off",
            CacheMode::FinalOnly => "final",
            CacheMode::EveryStep => "every-step",
        };
        format!(
            "version = {CONFIG_VERSION}\nlr = {}\nbatch = {}\nbeam = {}\nd = {}\ncache = {cache}\nbeta = {}\nepochs = {}\npatience = {}\nseed = {}\nworkers = {}\none_example_reward = {}\nno_augmentation = {}\nno_warmstart = {}\ncbow = {}\n",
            self.lr,
            self.batch,
            self.beam.beam,
            self.beam.d,
            self.beta,
            self.epochs,
            self.patience,
            self.seed,
            self.workers,
            self.one_example_reward,
            self.no_augmentation,
            self.no_warmstart,
            self.cbow,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_round_trip() {
        let c = TrainConfig::default();
        assert_eq!(
            (c.lr, c.batch, c.beam.beam, c.beam.d, c.beta),
            (0.001, 8, 40, 10, 0.5)
        );
        let mut d = TrainConfig::default();
        d.apply("beam = 5 # small\n\ncache=final\none_example_reward = true\nseed=9")
            .unwrap();
        assert_eq!(d.beam.beam, 5);
        assert_eq!(d.beam.cache, CacheMode::FinalOnly);
        assert!(d.one_example_reward);
        let mut e = TrainConfig::default();
        e.apply(&d.to_text()).unwrap();
        assert_eq!(e, d);
    }

    #[test]
    fn errors() {
        let mut c = TrainConfig::default();
        assert_eq!(c.apply("beam 5"), Err(ConfigError::Syntax { line: 1 }));
        assert!(matches!(
            c.apply("\nfoo = 1"),
            Err(ConfigError::UnknownKey { line: 2, .. })
        ));
        assert!(matches!(
            c.apply("beta = 2"),
            Err(ConfigError::BadValue { line: 1, .. })
        ));
        assert!(matches!(
            c.apply("cache = sometimes"),
            Err(ConfigError::BadValue { .. })
        ));
        assert!(matches!(
            c.apply("version = 7"),
            Err(ConfigError::Version(_))
        ));
    }
}
