//! End-to-end glue: audio files to cached feature records, records to
//! standardized datasets, datasets to a trained checkpoint.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio_io::{AudioClip, AudioError, ClipWindow, canonicalize, load_wav};
use crate::augment::{AugmentConfig, AugmentError, Augmenter};
use crate::datastore::{CacheRecord, EmotionLabel, ManifestEntry, Split, stratified_split};
use crate::features::{FEATURE_DIM, FeatureConfig, FeatureError, FeatureExtractor, Standardizer};
use crate::nn::{Activation, Architecture, Checkpoint, CheckpointError, ModelSpec, NnError, ParamStore, build_model};
use crate::training::{Dataset, EpochRecord, TrainConfig, TrainError, TrainOutcome, train};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{path}: {source}")]
    Audio {
        path: PathBuf,
        #[source]
        source: AudioError,
    },
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// Loads, canonicalizes, augments and featurizes clips.
#[derive(Debug, Clone)]
pub struct Featurizer {
    window: ClipWindow,
    augmenter: Augmenter,
    extractor: FeatureExtractor,
}

impl Featurizer {
    pub fn new(window: ClipWindow, augment: AugmentConfig, features: FeatureConfig) -> Result<Self, PipelineError> {
        if window.is_empty() || !(window.offset_s >= 0.0) {
            return Err(PipelineError::Config("audio window must be non-empty with offset >= 0".into()));
        }
        let dim = features.dim_for(window.len());
        if dim != FEATURE_DIM {
            return Err(PipelineError::Config(format!(
                "audio window and feature settings give {dim} features per clip, the model needs {FEATURE_DIM}"
            )));
        }
        Ok(Self {
            augmenter: Augmenter::new(augment)?,
            extractor: FeatureExtractor::new(features, window.target_rate)?,
            window,
        })
    }

    pub fn window(&self) -> &ClipWindow {
        &self.window
    }

    pub fn load(&self, path: &Path) -> Result<AudioClip, PipelineError> {
        let clip = load_wav(path).map_err(|source| PipelineError::Audio {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(canonicalize(&clip, &self.window))
    }

    /// All variants of `clip` (or just the clip), in variant order.
    pub fn variants(&self, clip: &AudioClip, augment: bool, seed: u64) -> Vec<AudioClip> {
        if augment {
            self.augmenter.generate_variants(clip, seed)
        } else {
            vec![clip.clone()]
        }
    }

    pub fn features(&self, clip: &AudioClip) -> Result<Vec<f32>, PipelineError> {
        Ok(self.extractor.extract(clip)?.into_values())
    }

    pub fn records(&self, entry: &ManifestEntry, augment: bool, seed: u64) -> Result<Vec<CacheRecord>, PipelineError> {
        let clip = self.load(&entry.path)?;
        self.variants(&clip, augment, clip_seed(seed, &entry.path))
            .iter()
            .enumerate()
            .map(|(variant, v)| {
                Ok(CacheRecord {
                    clip_id: entry.clip_id.clone(),
                    variant: variant as u8,
                    label: entry.label,
                    features: self.features(v)?,
                })
            })
            .collect()
    }

    /// Featurizes every entry, fanning out over the current rayon pool.
    /// Output order follows the manifest whatever the thread count.
    pub fn featurize(
        &self,
        entries: &[ManifestEntry],
        augment: bool,
        seed: u64,
        progress: impl Fn(&ManifestEntry, usize) + Sync,
    ) -> Result<Vec<CacheRecord>, PipelineError> {
        let per_entry: Vec<Vec<CacheRecord>> = entries
            .par_iter()
            .map(|e| {
                let recs = self.records(e, augment, seed)?;
                progress(e, recs.len());
                Ok(recs)
            })
            .collect::<Result<_, PipelineError>>()?;
        Ok(per_entry.into_iter().flatten().collect())
    }
}

/// Per-file augmentation seed: the base seed mixed with an FNV-1a hash of
/// the file name, so a file's variants do not depend on manifest order.
pub fn clip_seed(base: u64, path: &Path) -> u64 {
    let name = path.file_name().map(|n| n.to_string_lossy()).unwrap_or_default();
    let hash = name
        .bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3));
    base ^ hash
}

/// Network width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Width {
    #[default]
    Full,
    Reduced,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelOptions {
    pub activation: Activation,
    pub dropout: f64,
    pub width: Width,
}

impl Default for ModelOptions {
    fn default() -> Self {
        Self {
            activation: Activation::Relu,
            dropout: 0.2,
            width: Width::Full,
        }
    }
}

impl ModelOptions {
    pub fn architecture(&self) -> Architecture {
        let base = match self.width {
            Width::Full => Architecture::emoaugnet(self.activation),
            Width::Reduced => Architecture::reduced(self.activation),
        };
        Architecture {
            dropout: self.dropout,
            ..base
        }
    }
}

/// Standardized train/validation/test sets built from cache records.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub split: Split,
    pub standardizer: Standardizer,
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

/// Splits by clip and fits the standardizer on the training rows. Training
/// and validation keep every variant of their clips; the test set keeps
/// only originals (variant 0).
pub fn prepare(records: &[CacheRecord], ratios: (f64, f64, f64), seed: u64) -> Result<Prepared, PipelineError> {
    if records.is_empty() {
        return Err(PipelineError::Config("no records".into()));
    }
    let split = stratified_split(records.iter().map(|r| (r.clip_id.as_str(), r.label)), ratios, seed);
    let in_part = |ids: &[String], r: &CacheRecord| ids.contains(&r.clip_id);
    let train_rows: Vec<&CacheRecord> = records.iter().filter(|r| in_part(&split.train, r)).collect();
    let standardizer = Standardizer::fit(train_rows.iter().map(|r| r.features.as_slice()), FEATURE_DIM)?;
    let build = |rows: &mut dyn Iterator<Item = &CacheRecord>| {
        let mut ds = Dataset::new(FEATURE_DIM);
        for r in rows {
            ds.push(&standardizer.apply(&r.features), r.label.code() as usize);
        }
        ds
    };
    let train = build(&mut train_rows.iter().copied());
    let val = build(&mut records.iter().filter(|r| in_part(&split.val, r)));
    let test = build(&mut records.iter().filter(|r| r.variant == 0 && in_part(&split.test, r)));
    Ok(Prepared {
        split,
        standardizer,
        train,
        val,
        test,
    })
}

/// Standardized dataset of every record accepted by `keep`.
pub fn dataset_from_records(
    records: &[CacheRecord],
    standardizer: &Standardizer,
    keep: impl Fn(&CacheRecord) -> bool,
) -> Dataset {
    let mut ds = Dataset::new(FEATURE_DIM);
    for r in records.iter().filter(|r| keep(r)) {
        ds.push(&standardizer.apply(&r.features), r.label.code() as usize);
    }
    ds
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub spec: ModelSpec,
    pub outcome: TrainOutcome,
    pub checkpoint: Checkpoint,
}

/// Builds and trains the network on prepared data.
pub fn train_model(
    prepared: &Prepared,
    model: &ModelOptions,
    cfg: &TrainConfig,
    on_epoch: impl FnMut(&EpochRecord, &ParamStore<f32>),
) -> Result<Trained, TrainError> {
    let (spec, params) = build_model::<f32>(&model.architecture(), cfg.seed)?;
    let outcome = train(&spec, params, &prepared.train, &prepared.val, cfg, on_epoch)?;
    let checkpoint = Checkpoint::from_params(
        model.activation,
        prepared.standardizer.mean.clone(),
        prepared.standardizer.std.clone(),
        &outcome.params,
    );
    Ok(Trained {
        spec,
        outcome,
        checkpoint,
    })
}

/// Rebuilds the network stored in `ck`, recognizing either width by its
/// parameter counts.
pub fn restore(ck: &Checkpoint) -> Result<(ModelSpec, ParamStore<f32>, Standardizer), CheckpointError> {
    let counts = ck.layer_counts();
    for width in [Width::Full, Width::Reduced] {
        let opts = ModelOptions {
            activation: ck.activation,
            width,
            ..ModelOptions::default()
        };
        let spec = ModelSpec::from_architecture(&opts.architecture())
            .map_err(|e: NnError| CheckpointError::ShapeMismatch(e.to_string()))?;
        if spec.param_counts().is_ok_and(|c| c == counts) {
            let params = ck.params_for(&spec)?;
            let standardizer = Standardizer {
                mean: ck.mean.clone(),
                std: ck.std.clone(),
            };
            return Ok((spec, params, standardizer));
        }
    }
    Err(CheckpointError::ShapeMismatch(
        "parameter counts match no supported network".into(),
    ))
}

/// Class probabilities for one canonical clip.
pub fn classify(
    featurizer: &Featurizer,
    clip: &AudioClip,
    spec: &ModelSpec,
    params: &ParamStore<f32>,
    standardizer: &Standardizer,
) -> Result<Vec<(EmotionLabel, f32)>, PipelineError> {
    let x = standardizer.apply(&featurizer.features(clip)?);
    let input = crate::nn::Tensor::from_vec(&spec.input.with_batch(1), x)
        .map_err(|e| PipelineError::Config(e.to_string()))?;
    let probs = crate::nn::predict(spec, params, &input).map_err(|e| PipelineError::Config(e.to_string()))?;
    Ok(EmotionLabel::ALL.into_iter().zip(probs.data().iter().copied()).collect())
}
