//! The JSON config file: sections `scene`, `camera`, `noise`, `net`,
//! `train` and `ablate`. Every section is optional; unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bench::AblateConfig;
use crate::error::{Error, Result};
use crate::nn::{LabelFrame, NetworkSpec, TrainConfig};
use crate::scene::{CameraConfig, NoiseConfig, RandomizationConfig, SceneConfig};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arch {
    #[default]
    Desk,
    Vgg16,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetConfig {
    pub arch: Arch,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub scene: SceneConfig,
    pub camera: CameraConfig,
    pub noise: NoiseConfig,
    pub net: NetConfig,
    pub train: TrainConfig,
    pub ablate: AblateConfig,
}

impl Config {
    pub fn from_json(text: &str) -> Result<Config> {
        let cfg: Config = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Config::from_json(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.randomization().validate()?;
        self.train.validate()?;
        self.network_spec().validate()
    }

    pub fn randomization(&self) -> RandomizationConfig {
        RandomizationConfig {
            scene: self.scene.clone(),
            camera: self.camera,
            noise: self.noise,
        }
    }

    pub fn network_spec(&self) -> NetworkSpec {
        let res = self.camera.base.image_h as usize;
        match self.net.arch {
            Arch::Desk => NetworkSpec::desk(res),
            Arch::Vgg16 => NetworkSpec::vgg16(res),
        }
    }

    pub fn label_frame(&self) -> LabelFrame {
        let (c, h) = self.randomization().label_frame();
        LabelFrame::new(c, h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_default() {
        assert_eq!(Config::from_json("{}").unwrap(), Config::default());
    }

    #[test]
    fn partial_sections_keep_defaults() {
        let cfg = Config::from_json(r#"{"scene": {"max_distractors": 3}, "train": {"lr": 0.0002}}"#).unwrap();
        assert_eq!(cfg.scene.max_distractors, 3);
        assert_eq!(cfg.scene.table_height, 0.75);
        assert_eq!(cfg.train.lr, 2e-4);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(Config::from_json(r#"{"scnee": {}}"#).is_err());
        assert!(Config::from_json(r#"{"scene": {"distractor": true}}"#).is_err());
        assert!(Config::from_json(r#"{"train": {"momentum": 0.9}}"#).is_err());
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(Config::from_json(r#"{"noise": {"gaussian_sigma": 0.5}}"#).is_err());
        assert!(Config::from_json(r#"{"train": {"batch": 0}}"#).is_err());
    }

    #[test]
    fn round_trips_through_json() {
        let cfg = Config::default();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(Config::from_json(&text).unwrap(), cfg);
    }
}
