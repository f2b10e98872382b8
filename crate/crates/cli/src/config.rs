//! Flat `key = value` training configuration.
//!
//! Keys are the field names of [`TrainConfig`] and [`EventConfig`]; anything
//! else is rejected.

use std::path::Path;

use anyhow::{bail, Context, Result};
use evdeblur_core::events::EventConfig;
use evdeblur_core::trainer::TrainConfig;
use serde::de::DeserializeOwned;
use serde::Serialize;
use toml::Table;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FileConfig {
    pub train: TrainConfig,
    /// `None` when the file sets neither `theta` nor `log_eps`.
    pub events: Option<EventConfig>,
    /// Keys present in the file.
    pub keys: Vec<String>,
}

impl FileConfig {
    pub fn sets(&self, key: &str) -> bool {
        self.keys.iter().any(|k| k == key)
    }

    /// Event configuration with the file's keys laid over `base`.
    pub fn events_over(&self, base: EventConfig) -> EventConfig {
        let mut e = base;
        if let Some(f) = self.events {
            if self.sets("theta") {
                e.theta = f.theta;
            }
            if self.sets("log_eps") {
                e.log_eps = f.log_eps;
            }
        }
        e
    }
}

fn as_table<T: Serialize>(value: &T) -> Table {
    Table::try_from(value).expect("configuration serializes to a TOML table")
}

fn overlay<T: Serialize + DeserializeOwned>(base: &T, values: &Table) -> Result<T> {
    let mut t = as_table(base);
    for (k, v) in values {
        t.insert(k.clone(), v.clone());
    }
    Ok(t.try_into()?)
}

pub fn parse(text: &str) -> Result<FileConfig> {
    let table: Table = text.parse()?;
    let train_keys = as_table(&TrainConfig::default());
    let event_keys = as_table(&EventConfig::default());
    let (mut train, mut events) = (Table::new(), Table::new());
    for (k, v) in &table {
        if train_keys.contains_key(k) {
            train.insert(k.clone(), v.clone());
        } else if event_keys.contains_key(k) {
            events.insert(k.clone(), v.clone());
        } else {
            bail!("unknown configuration key `{k}`");
        }
    }
    Ok(FileConfig {
        train: overlay(&TrainConfig::default(), &train)?,
        events: if events.is_empty() {
            None
        } else {
            Some(overlay(&EventConfig::default(), &events)?)
        },
        keys: table.keys().cloned().collect(),
    })
}

pub fn load(path: &Path) -> Result<FileConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse(&text).with_context(|| format!("in {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = parse("").unwrap();
        assert_eq!(c.train, TrainConfig::default());
        assert!(c.events.is_none());
    }

    #[test]
    fn keys_map_to_fields() {
        let c = parse("iterations = 12\nlr_pose = 0.0\ntheta = 0.3\nlambda_ev = 0.5\n").unwrap();
        assert_eq!(c.train.iterations, 12);
        assert_eq!(c.train.lr_pose, 0.0);
        assert_eq!(c.train.lambda_ev, 0.5);
        assert_eq!(c.train.lr_sh, TrainConfig::default().lr_sh);
        let base = EventConfig {
            theta: 0.2,
            log_eps: 1e-2,
        };
        let e = c.events_over(base);
        assert_eq!(e.theta, 0.3);
        assert_eq!(e.log_eps, 1e-2);
    }

    #[test]
    fn unknown_key_is_an_error() {
        let err = parse("iterations = 3\nlearning_rate = 0.1\n").unwrap_err();
        assert!(err.to_string().contains("learning_rate"), "{err}");
    }

    #[test]
    fn wrong_type_is_an_error() {
        assert!(parse("iterations = \"many\"\n").is_err());
    }
}
