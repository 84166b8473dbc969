//! Tracker config files.
//!
//! TOML with up to three sections. `[tracker]` applies to both levels, then
//! `[l1]` / `[l2]` override it for one level. Every key is optional and falls
//! back to the built-in defaults:
//!
//! ```toml
//! [tracker]
//! max_age = 30
//! min_hits = 3
//!
//! [l1]
//! kind = "ocsort"
//! ocm_weight = 0.2
//!
//! [l2]
//! kind = "bytetrack"
//! high_conf_threshold = 0.5
//!
//! [l2.kalman]
//! measurement_weight = 0.05
//! ```

use serde::Deserialize;
use thiserror::Error;

use crate::trackers::{ConfigError, TrackerConfig, TrackerKind};

#[derive(Debug, Error)]
pub enum ConfigFileError {
    #[error("config file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error(transparent)]
    Invalid(#[from] ConfigError),
    #[error("no tracker kind given for {0}")]
    MissingKind(&'static str),
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KalmanOverrides {
    pub init_position_weight: Option<f64>,
    pub init_velocity_weight: Option<f64>,
    pub process_position_weight: Option<f64>,
    pub process_velocity_weight: Option<f64>,
    pub measurement_weight: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackerOverrides {
    pub kind: Option<TrackerKind>,
    pub iou_gate: Option<f64>,
    pub max_age: Option<u32>,
    pub min_hits: Option<u32>,
    pub high_conf_threshold: Option<f64>,
    pub low_conf_threshold: Option<f64>,
    pub ocm_weight: Option<f64>,
    pub ocm_delta_t: Option<u32>,
    pub oru: Option<bool>,
    pub kalman: Option<KalmanOverrides>,
}

impl TrackerOverrides {
    fn apply(&self, c: &mut TrackerConfig) {
        macro_rules! set {
            ($($field:ident),*) => {
                $(if let Some(v) = self.$field { c.$field = v; })*
            };
        }
        set!(
            kind,
            iou_gate,
            max_age,
            min_hits,
            high_conf_threshold,
            low_conf_threshold,
            ocm_weight,
            ocm_delta_t,
            oru
        );
        if let Some(k) = &self.kalman {
            let kc = &mut c.kalman;
            macro_rules! setk {
                ($($field:ident),*) => {
                    $(if let Some(v) = k.$field { kc.$field = v; })*
                };
            }
            setk!(
                init_position_weight,
                init_velocity_weight,
                process_position_weight,
                process_velocity_weight,
                measurement_weight
            );
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub tracker: TrackerOverrides,
    #[serde(default)]
    pub l1: TrackerOverrides,
    #[serde(default)]
    pub l2: TrackerOverrides,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Level {
    L1,
    L2,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, ConfigFileError> {
        Ok(toml::from_str(text)?)
    }

    /// Resolves one level: defaults, then `[tracker]`, then the level section,
    /// then `kind_flag` if given.
    pub fn resolve(&self, level: Level, kind_flag: Option<TrackerKind>) -> Result<TrackerConfig, ConfigFileError> {
        let section = match level {
            Level::L1 => &self.l1,
            Level::L2 => &self.l2,
        };
        let kind = kind_flag
            .or(section.kind)
            .or(self.tracker.kind)
            .ok_or(ConfigFileError::MissingKind(match level {
                Level::L1 => "L1",
                Level::L2 => "L2",
            }))?;
        let mut config = TrackerConfig::new(kind);
        self.tracker.apply(&mut config);
        section.apply(&mut config);
        config.kind = kind;
        config.validate()?;
        Ok(config)
    }

    pub fn has_l2_kind(&self) -> bool {
        self.l2.kind.is_some()
    }
}
