use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::audio_io::ClipWindow;
use crate::augment::{AugmentConfig, NoiseParams, SHIFT_LIMIT};
use crate::features::FeatureConfig;
use crate::nn::Activation;
use crate::pipeline::{ModelOptions, Width};
use crate::training::TrainConfig;

/// The whole pipeline configuration as read from a JSON file. Missing keys
/// take built-in defaults; unknown keys are rejected.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub audio: AudioSection,
    pub augment: AugmentSection,
    pub features: FeatureSection,
    pub model: ModelSection,
    pub train: TrainConfig,
    pub paths: PathsSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AudioSection {
    pub rate: u32,
    pub duration_s: f64,
    pub offset_s: f64,
}

impl Default for AudioSection {
    fn default() -> Self {
        let w = ClipWindow::default();
        Self {
            rate: w.target_rate,
            duration_s: w.duration_s,
            offset_s: w.offset_s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentSection {
    pub seed: u64,
    pub noise_scale: f64,
    pub pitch_range: [f64; 2],
    pub stretch_rates: [f64; 2],
    pub shift_max: usize,
}

impl Default for AugmentSection {
    fn default() -> Self {
        let a = AugmentConfig::default();
        Self {
            seed: 0,
            noise_scale: a.noise.scale,
            pitch_range: [a.pitch_range.0, a.pitch_range.1],
            stretch_rates: [a.stretch_slow, a.stretch_fast],
            shift_max: a.shift_max,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureSection {
    pub frame: usize,
    pub hop: usize,
    pub n_mfcc: usize,
    pub n_mels: usize,
}

impl Default for FeatureSection {
    fn default() -> Self {
        let f = FeatureConfig::default();
        Self {
            frame: f.frame_len,
            hop: f.hop,
            n_mfcc: f.n_mfcc,
            n_mels: f.n_mels,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ConvActivation {
    #[default]
    Relu,
    Elu,
}

impl From<ConvActivation> for Activation {
    fn from(a: ConvActivation) -> Self {
        match a {
            ConvActivation::Relu => Activation::Relu,
            ConvActivation::Elu => Activation::Elu,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub conv_activation: ConvActivation,
    pub dropout: f64,
    pub width: Width,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            conv_activation: ConvActivation::Relu,
            dropout: 0.2,
            width: Width::Full,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    pub manifest: Option<PathBuf>,
    pub cache: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub reports: Option<PathBuf>,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), String> {
        let a = &self.audio;
        if a.rate == 0 || !(a.duration_s > 0.0) || !(a.offset_s >= 0.0) {
            return Err("audio: need rate > 0, duration_s > 0, offset_s >= 0".into());
        }
        self.augment_config().validate().map_err(|e| e.to_string())?;
        if self.augment.shift_max > SHIFT_LIMIT {
            return Err(format!("augment: shift_max above {SHIFT_LIMIT}"));
        }
        self.feature_config().validate().map_err(|e| e.to_string())?;
        if !(0.0..1.0).contains(&self.model.dropout) {
            return Err("model: dropout must lie in [0, 1)".into());
        }
        self.train.validate().map_err(|e| e.to_string())
    }

    pub fn window(&self) -> ClipWindow {
        ClipWindow {
            duration_s: self.audio.duration_s,
            offset_s: self.audio.offset_s,
            target_rate: self.audio.rate,
        }
    }

    pub fn augment_config(&self) -> AugmentConfig {
        let s = &self.augment;
        AugmentConfig {
            noise: NoiseParams { scale: s.noise_scale },
            pitch_range: (s.pitch_range[0], s.pitch_range[1]),
            stretch_slow: s.stretch_rates[0],
            stretch_fast: s.stretch_rates[1],
            shift_max: s.shift_max,
        }
    }

    pub fn feature_config(&self) -> FeatureConfig {
        FeatureConfig {
            frame_len: self.features.frame,
            hop: self.features.hop,
            n_mfcc: self.features.n_mfcc,
            n_mels: self.features.n_mels,
            ..FeatureConfig::default()
        }
    }

    pub fn model_options(&self) -> ModelOptions {
        ModelOptions {
            activation: self.model.conv_activation.into(),
            dropout: self.model.dropout,
            width: self.model.width,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_carry_the_published_constants() {
        let cfg = PipelineConfig::default();
        cfg.validate().unwrap();
        let a = cfg.augment_config();
        assert_eq!(a.noise.scale, 0.035);
        assert_eq!(a.pitch_range, (-1.0, 1.0));
        assert_eq!((a.stretch_slow, a.stretch_fast), (0.9, 1.1));
        assert_eq!(a.shift_max, 5000);
        assert_eq!(cfg.train.lr0, 0.001);
        assert_eq!(cfg.window().len(), 55_125);
    }

    #[test]
    fn partial_documents_and_unknown_keys() {
        let cfg: PipelineConfig =
            serde_json::from_str(r#"{"train": {"max_epochs": 3}, "model": {"conv_activation": "elu"}}"#).unwrap();
        assert_eq!(cfg.train.max_epochs, 3);
        assert_eq!(cfg.train.batch_size, 64);
        assert_eq!(cfg.model_options().activation, Activation::Elu);

        assert!(serde_json::from_str::<PipelineConfig>(r#"{"trian": {}}"#).is_err());
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"train": {"lr": 0.1}}"#).is_err());
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"model": {"width": "tiny"}}"#).is_err());
    }

    #[test]
    fn range_checks() {
        let mut cfg = PipelineConfig::default();
        cfg.augment.shift_max = 6000;
        assert!(cfg.validate().is_err());
        let mut cfg = PipelineConfig::default();
        cfg.model.dropout = 1.0;
        assert!(cfg.validate().is_err());
        let mut cfg = PipelineConfig::default();
        cfg.train.plateau_factor = 2.0;
        assert!(cfg.validate().is_err());
    }
}
