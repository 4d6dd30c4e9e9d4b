//! Frame-wise zero-crossing rate, RMS energy and MFCCs, stacked into the
//! fixed-length vector the classifier consumes.
//!
//! Layout of a [`FeatureVector`] for the canonical 108-frame clip:
//!
//! ```text
//! [0, 108)      ZCR, frame-major
//! [108, 216)    RMS energy
//! [216, 2376)   MFCC, coefficient-major: coeff 0 frames 0..108, coeff 1, ...
//! ```

use std::f64::consts::PI;

use thiserror::Error;

use crate::audio_io::AudioClip;
use crate::dsp::{self, StftConfig};

pub const FEATURE_DIM: usize = 2376;
pub const CANONICAL_FRAMES: usize = 108;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite feature at index {0}")]
    NonFinite(usize),
    #[error("invalid feature config: {0}")]
    BadConfig(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureConfig {
    pub frame_len: usize,
    pub hop: usize,
    pub n_mfcc: usize,
    pub n_mels: usize,
    pub fmin: f64,
    /// `None` means the Nyquist frequency of the clip.
    pub fmax: Option<f64>,
    pub log_floor: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            frame_len: 2048,
            hop: 512,
            n_mfcc: 20,
            n_mels: 128,
            fmin: 0.0,
            fmax: None,
            log_floor: 1e-10,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<(), FeatureError> {
        let bad = |m: &str| Err(FeatureError::BadConfig(m.to_string()));
        if !self.frame_len.is_power_of_two() {
            return bad("frame_len must be a power of two");
        }
        if self.hop == 0 || self.hop > self.frame_len {
            return bad("hop must be in 1..=frame_len");
        }
        if self.n_mfcc == 0 || self.n_mfcc > self.n_mels {
            return bad("n_mfcc must be in 1..=n_mels");
        }
        if self.log_floor <= 0.0 {
            return bad("log_floor must be positive");
        }
        Ok(())
    }

    pub fn frame_count(&self, len: usize) -> usize {
        1 + len / self.hop
    }

    /// Feature length for a clip of `len` samples.
    pub fn dim_for(&self, len: usize) -> usize {
        (2 + self.n_mfcc) * self.frame_count(len)
    }
}

/// Centered frames over a zero-padded signal; frame `t` spans
/// `[t*hop - frame_len/2, t*hop + frame_len/2)`.
fn frames_zero_padded<'a>(
    samples: &'a [f64],
    cfg: &'a FeatureConfig,
) -> impl Iterator<Item = impl Iterator<Item = f64> + 'a> + 'a {
    let half = (cfg.frame_len / 2) as isize;
    (0..cfg.frame_count(samples.len())).map(move |t| {
        let start = (t * cfg.hop) as isize - half;
        (start..start + cfg.frame_len as isize).map(move |i| {
            if i >= 0 && (i as usize) < samples.len() {
                samples[i as usize]
            } else {
                0.0
            }
        })
    })
}

/// Fraction of adjacent sample pairs per frame whose signs differ (zero
/// counts as non-negative).
pub fn zcr_frames(clip: &AudioClip, cfg: &FeatureConfig) -> Vec<f64> {
    let pairs = (cfg.frame_len - 1) as f64;
    frames_zero_padded(&clip.samples, cfg)
        .map(|frame| {
            let mut prev: Option<bool> = None;
            let mut count = 0usize;
            for v in frame {
                let s = v >= 0.0;
                if prev.is_some_and(|p| p != s) {
                    count += 1;
                }
                prev = Some(s);
            }
            count as f64 / pairs
        })
        .collect()
}

/// Root-mean-square energy per frame.
pub fn rmse_frames(clip: &AudioClip, cfg: &FeatureConfig) -> Vec<f64> {
    let n = cfg.frame_len as f64;
    frames_zero_padded(&clip.samples, cfg)
        .map(|frame| (frame.map(|v| v * v).sum::<f64>() / n).sqrt())
        .collect()
}

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Filter edge frequencies: `n_mels + 2` points equally spaced in mel.
pub fn mel_points(cfg: &FeatureConfig, sample_rate: u32) -> Vec<f64> {
    let fmax = cfg.fmax.unwrap_or(sample_rate as f64 / 2.0);
    let (lo, hi) = (hz_to_mel(cfg.fmin), hz_to_mel(fmax));
    let n = cfg.n_mels + 1;
    (0..=n)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / n as f64))
        .collect()
}

/// Area-normalized triangular mel filters, `n_mels x (frame_len/2 + 1)`.
pub fn mel_filterbank(cfg: &FeatureConfig, sample_rate: u32) -> Vec<Vec<f64>> {
    let edges = mel_points(cfg, sample_rate);
    let n_bins = cfg.frame_len / 2 + 1;
    let bin_hz = sample_rate as f64 / cfg.frame_len as f64;
    (0..cfg.n_mels)
        .map(|m| {
            let (lo, center, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            let norm = 2.0 / (hi - lo);
            (0..n_bins)
                .map(|k| {
                    let f = k as f64 * bin_hz;
                    let rising = (f - lo) / (center - lo);
                    let falling = (hi - f) / (hi - center);
                    rising.min(falling).max(0.0) * norm
                })
                .collect()
        })
        .collect()
}

/// Orthonormal DCT-II basis, `n_out x n_in`.
fn dct_matrix(n_out: usize, n_in: usize) -> Vec<Vec<f64>> {
    let n = n_in as f64;
    (0..n_out)
        .map(|k| {
            let scale = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
            (0..n_in)
                .map(|i| scale * (PI * k as f64 * (2 * i + 1) as f64 / (2.0 * n)).cos())
                .collect()
        })
        .collect()
}

/// Stacked feature representation of one clip.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    values: Vec<f32>,
}

impl FeatureVector {
    pub fn new(values: Vec<f32>) -> Result<Self, FeatureError> {
        if values.len() != FEATURE_DIM {
            return Err(FeatureError::ShapeMismatch(format!(
                "expected {FEATURE_DIM} values, got {}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(FeatureError::NonFinite(i));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }
}

/// Concatenates ZCR, RMSE and coefficient-major MFCC rows.
pub fn assemble(zcr: &[f64], rmse: &[f64], mfcc: &[Vec<f64>]) -> Result<FeatureVector, FeatureError> {
    let frames = zcr.len();
    if rmse.len() != frames {
        return Err(FeatureError::ShapeMismatch(format!(
            "rmse has {} frames, zcr has {frames}",
            rmse.len()
        )));
    }
    if let Some((i, row)) = mfcc.iter().enumerate().find(|(_, r)| r.len() != frames) {
        return Err(FeatureError::ShapeMismatch(format!(
            "mfcc row {i} has {} frames, zcr has {frames}",
            row.len()
        )));
    }
    let values: Vec<f32> = zcr
        .iter()
        .chain(rmse)
        .chain(mfcc.iter().flatten())
        .map(|&v| v as f32)
        .collect();
    FeatureVector::new(values)
}

/// Precomputed filterbank and DCT basis for one sample rate.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    cfg: FeatureConfig,
    sample_rate: u32,
    stft: StftConfig,
    filterbank: Vec<Vec<f64>>,
    dct: Vec<Vec<f64>>,
}

impl FeatureExtractor {
    pub fn new(cfg: FeatureConfig, sample_rate: u32) -> Result<Self, FeatureError> {
        cfg.validate()?;
        if cfg.fmax.is_some_and(|f| f > sample_rate as f64 / 2.0) {
            return Err(FeatureError::BadConfig("fmax above Nyquist".into()));
        }
        let stft = StftConfig::new(cfg.frame_len, cfg.hop)
            .map_err(|e| FeatureError::BadConfig(e.to_string()))?;
        let filterbank = mel_filterbank(&cfg, sample_rate);
        let dct = dct_matrix(cfg.n_mfcc, cfg.n_mels);
        Ok(Self {
            cfg,
            sample_rate,
            stft,
            filterbank,
            dct,
        })
    }

    pub fn config(&self) -> &FeatureConfig {
        &self.cfg
    }

    /// `n_mfcc x n_frames` cepstral coefficients.
    pub fn mfcc(&self, clip: &AudioClip) -> Vec<Vec<f64>> {
        debug_assert_eq!(clip.sample_rate, self.sample_rate);
        let spec = dsp::stft(&clip.samples, &self.stft).expect("non-empty clip");
        let n_frames = spec.n_frames();
        let mut out = vec![vec![0.0; n_frames]; self.cfg.n_mfcc];
        let mut log_mel = vec![0.0; self.cfg.n_mels];
        for (t, frame) in spec.frames.iter().enumerate() {
            let power: Vec<f64> = frame.iter().map(|c| c.norm_sqr()).collect();
            for (slot, filter) in log_mel.iter_mut().zip(&self.filterbank) {
                let e: f64 = filter.iter().zip(&power).map(|(w, p)| w * p).sum();
                *slot = 10.0 * e.max(self.cfg.log_floor).log10();
            }
            for (row, basis) in out.iter_mut().zip(&self.dct) {
                row[t] = basis.iter().zip(&log_mel).map(|(b, v)| b * v).sum();
            }
        }
        out
    }

    pub fn extract(&self, clip: &AudioClip) -> Result<FeatureVector, FeatureError> {
        let zcr = zcr_frames(clip, &self.cfg);
        let rmse = rmse_frames(clip, &self.cfg);
        let mfcc = self.mfcc(clip);
        assemble(&zcr, &rmse, &mfcc)
    }
}

pub fn mfcc(clip: &AudioClip, cfg: &FeatureConfig) -> Result<Vec<Vec<f64>>, FeatureError> {
    Ok(FeatureExtractor::new(cfg.clone(), clip.sample_rate)?.mfcc(clip))
}

pub fn extract(clip: &AudioClip, cfg: &FeatureConfig) -> Result<FeatureVector, FeatureError> {
    FeatureExtractor::new(cfg.clone(), clip.sample_rate)?.extract(clip)
}

/// Per-dimension mean and standard deviation, fitted on training vectors
/// and applied to every split. Dimensions with zero spread get std 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f32>,
    pub std: Vec<f32>,
}

impl Standardizer {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    /// Population statistics over `rows`, accumulated in 64-bit.
    pub fn fit<'a>(rows: impl IntoIterator<Item = &'a [f32]>, dim: usize) -> Result<Self, FeatureError> {
        let mut sum = vec![0.0f64; dim];
        let mut sq = vec![0.0f64; dim];
        let mut n = 0usize;
        for row in rows {
            if row.len() != dim {
                return Err(FeatureError::ShapeMismatch(format!(
                    "row of {} values, expected {dim}",
                    row.len()
                )));
            }
            for ((s, q), &v) in sum.iter_mut().zip(sq.iter_mut()).zip(row) {
                let v = f64::from(v);
                *s += v;
                *q += v * v;
            }
            n += 1;
        }
        if n == 0 {
            return Err(FeatureError::BadConfig("no rows to fit".into()));
        }
        let n = n as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let std = sq
            .iter()
            .zip(&mean)
            .map(|(q, m)| {
                let sd = (q / n - m * m).max(0.0).sqrt();
                if sd < 1e-8 { 1.0 } else { sd as f32 }
            })
            .collect();
        Ok(Self {
            mean: mean.into_iter().map(|m| m as f32).collect(),
            std,
        })
    }

    pub fn apply(&self, row: &[f32]) -> Vec<f32> {
        row.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(&v, (&m, &s))| (v - m) / s)
            .collect()
    }
}
