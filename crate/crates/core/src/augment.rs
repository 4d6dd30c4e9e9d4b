//! Seeded waveform augmentation: additive Gaussian noise, pitch shift,
//! slow/fast time stretch, circular shift, and the fixed ten-variant
//! combination plan applied to every training clip.

use rand::{Rng, RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;
use thiserror::Error;

use crate::audio_io::{AudioClip, fix_length, resample_ratio};
use crate::dsp::{self, StftConfig};

/// Largest accepted circular shift, in samples.
pub const SHIFT_LIMIT: usize = 5000;
pub const VARIANT_COUNT: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AugmentError {
    #[error("shift of {0} samples exceeds the +/-{SHIFT_LIMIT} limit")]
    ShiftOutOfRange(i64),
    #[error("invalid augmentation config: {0}")]
    BadConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseParams {
    pub scale: f64,
}

impl Default for NoiseParams {
    fn default() -> Self {
        Self { scale: 0.035 }
    }
}

/// Draw ranges and fixed rates for the base augmentations.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentConfig {
    pub noise: NoiseParams,
    /// Pitch offsets are drawn uniformly from this range, in semitones.
    pub pitch_range: (f64, f64),
    pub stretch_slow: f64,
    pub stretch_fast: f64,
    pub shift_max: usize,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            noise: NoiseParams::default(),
            pitch_range: (-1.0, 1.0),
            stretch_slow: 0.9,
            stretch_fast: 1.1,
            shift_max: SHIFT_LIMIT,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<(), AugmentError> {
        let bad = |m: &str| Err(AugmentError::BadConfig(m.to_string()));
        if !(self.noise.scale >= 0.0 && self.noise.scale.is_finite()) {
            return bad("noise scale must be finite and non-negative");
        }
        let (lo, hi) = self.pitch_range;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return bad("pitch range must be finite with lo <= hi");
        }
        if !(self.stretch_slow > 0.0 && self.stretch_fast > 0.0) {
            return bad("stretch rates must be positive");
        }
        if self.shift_max > SHIFT_LIMIT {
            return bad("shift_max exceeds 5000 samples");
        }
        Ok(())
    }
}

/// One unresolved step of a variant recipe; random parameters are drawn when
/// the recipe runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AugmentStep {
    Noise,
    PitchShift,
    StretchSlow,
    StretchFast,
    Shift,
}

/// A concrete, fully parameterized augmentation as it was applied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AugmentKind {
    Identity,
    Noise { amplitude: f64 },
    PitchShift { steps: f64 },
    Stretch { rate: f64 },
    Shift { samples: i64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariantPlan {
    /// Steps run left to right; an empty recipe is the identity.
    pub recipes: Vec<Vec<AugmentStep>>,
    pub base_seed: u64,
}

impl VariantPlan {
    /// Original, the four base transforms, then noise layered over each
    /// non-noise base transform.
    pub fn standard(base_seed: u64) -> Self {
        use AugmentStep::*;
        Self {
            recipes: vec![
                vec![],
                vec![Noise],
                vec![PitchShift],
                vec![StretchSlow],
                vec![StretchFast],
                vec![Shift],
                vec![PitchShift, Noise],
                vec![StretchSlow, Noise],
                vec![StretchFast, Noise],
                vec![Shift, Noise],
            ],
            base_seed,
        }
    }
}

/// Seed of the generator driving variant `index`, so any variant can be
/// regenerated without the others.
pub fn variant_seed(base_seed: u64, index: usize) -> u64 {
    SplitMix64::seed_from_u64(base_seed ^ index as u64).next_u64()
}

/// Pair of independent standard normals via Box-Muller.
fn gaussian_pair(rng: &mut SplitMix64) -> (f64, f64) {
    // 1 - U keeps the log argument in (0, 1]
    let u1 = 1.0 - rng.r#gen::<f64>();
    let u2 = rng.r#gen::<f64>();
    let r = (-2.0 * u1.ln()).sqrt();
    let theta = 2.0 * std::f64::consts::PI * u2;
    (r * theta.cos(), r * theta.sin())
}

/// Adds `scale * U(0,1) * peak * N(0,1)` per sample. Returns the clip and the
/// amplitude that was drawn.
pub fn add_noise_with_amplitude(
    clip: &AudioClip,
    params: NoiseParams,
    rng: &mut SplitMix64,
) -> (AudioClip, f64) {
    let amp = params.scale * rng.r#gen::<f64>() * clip.peak();
    let mut out = clip.samples.clone();
    for pair in out.chunks_mut(2) {
        let (g0, g1) = gaussian_pair(rng);
        pair[0] += amp * g0;
        if let Some(v) = pair.get_mut(1) {
            *v += amp * g1;
        }
    }
    (AudioClip::new(out, clip.sample_rate), amp)
}

pub fn add_noise(clip: &AudioClip, params: NoiseParams, rng: &mut SplitMix64) -> AudioClip {
    add_noise_with_amplitude(clip, params, rng).0
}

/// Circular roll: `out[i] = x[(i - k) mod N]`.
pub fn temporal_shift(clip: &AudioClip, k: i64) -> Result<AudioClip, AugmentError> {
    if k.unsigned_abs() as usize > SHIFT_LIMIT {
        return Err(AugmentError::ShiftOutOfRange(k));
    }
    let mut out = clip.samples.clone();
    if !out.is_empty() {
        let r = k.rem_euclid(out.len() as i64) as usize;
        out.rotate_right(r);
    }
    Ok(AudioClip::new(out, clip.sample_rate))
}

/// Phase-vocoder time stretch; `rate > 1` speeds up. Output length is
/// `round(len / rate)`.
pub fn time_stretch_with(clip: &AudioClip, rate: f64, cfg: &StftConfig) -> AudioClip {
    assert!(rate > 0.0 && rate.is_finite(), "stretch rate must be positive");
    let out_len = (clip.len() as f64 / rate).round() as usize;
    if clip.is_empty() {
        return AudioClip::new(vec![0.0; out_len], clip.sample_rate);
    }
    let spec = dsp::stft(&clip.samples, cfg).expect("validated STFT config");
    let stretched = dsp::phase_vocoder(&spec, rate);
    let samples = dsp::istft(&stretched, out_len).expect("validated STFT config");
    AudioClip::new(samples, clip.sample_rate)
}

pub fn time_stretch(clip: &AudioClip, rate: f64) -> AudioClip {
    time_stretch_with(clip, rate, &StftConfig::default())
}

/// Shifts pitch by `steps` semitones while keeping the length: stretch by the
/// frequency ratio, then resample back onto the original sample grid.
pub fn pitch_shift_with(clip: &AudioClip, steps: f64, cfg: &StftConfig) -> AudioClip {
    assert!(steps.is_finite(), "pitch steps must be finite");
    if steps == 0.0 {
        return clip.clone();
    }
    let factor = 2f64.powf(steps / 12.0);
    let stretched = time_stretch_with(clip, 1.0 / factor, cfg);
    let squeezed = resample_ratio(&stretched.samples, 1.0 / factor);
    AudioClip::new(fix_length(squeezed, clip.len()), clip.sample_rate)
}

pub fn pitch_shift(clip: &AudioClip, steps: f64) -> AudioClip {
    pitch_shift_with(clip, steps, &StftConfig::default())
}

/// One generated variant and the concrete operations that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Variant {
    pub index: usize,
    pub applied: Vec<AugmentKind>,
    pub clip: AudioClip,
}

#[derive(Debug, Clone)]
pub struct Augmenter {
    config: AugmentConfig,
    stft: StftConfig,
}

impl Default for Augmenter {
    fn default() -> Self {
        Self::new(AugmentConfig::default()).expect("default config is valid")
    }
}

impl Augmenter {
    pub fn new(config: AugmentConfig) -> Result<Self, AugmentError> {
        config.validate()?;
        Ok(Self {
            config,
            stft: StftConfig::default(),
        })
    }

    pub fn config(&self) -> &AugmentConfig {
        &self.config
    }

    fn run_step(
        &self,
        clip: AudioClip,
        step: AugmentStep,
        rng: &mut SplitMix64,
    ) -> (AudioClip, AugmentKind) {
        let cfg = &self.config;
        match step {
            AugmentStep::Noise => {
                let (out, amplitude) = add_noise_with_amplitude(&clip, cfg.noise, rng);
                (out, AugmentKind::Noise { amplitude })
            }
            AugmentStep::PitchShift => {
                let (lo, hi) = cfg.pitch_range;
                let steps = lo + (hi - lo) * rng.r#gen::<f64>();
                (pitch_shift_with(&clip, steps, &self.stft), AugmentKind::PitchShift { steps })
            }
            AugmentStep::StretchSlow | AugmentStep::StretchFast => {
                let rate = if step == AugmentStep::StretchSlow {
                    cfg.stretch_slow
                } else {
                    cfg.stretch_fast
                };
                (time_stretch_with(&clip, rate, &self.stft), AugmentKind::Stretch { rate })
            }
            AugmentStep::Shift => {
                let max = cfg.shift_max as i64;
                let k = rng.gen_range(-max..=max);
                let out = temporal_shift(&clip, k).expect("shift_max validated");
                (out, AugmentKind::Shift { samples: k })
            }
        }
    }

    /// Runs one recipe; the result is cropped or zero-padded back to the
    /// input length.
    pub fn apply_recipe(&self, clip: &AudioClip, recipe: &[AugmentStep], seed: u64) -> (AudioClip, Vec<AugmentKind>) {
        if recipe.is_empty() {
            return (clip.clone(), vec![AugmentKind::Identity]);
        }
        let mut rng = SplitMix64::seed_from_u64(seed);
        let mut current = clip.clone();
        let mut applied = Vec::with_capacity(recipe.len());
        for &step in recipe {
            let (next, kind) = self.run_step(current, step, &mut rng);
            current = next;
            applied.push(kind);
        }
        let samples = fix_length(current.samples, clip.len());
        (AudioClip::new(samples, clip.sample_rate), applied)
    }

    pub fn variant(&self, clip: &AudioClip, plan: &VariantPlan, index: usize) -> Variant {
        let seed = variant_seed(plan.base_seed, index);
        let (clip, applied) = self.apply_recipe(clip, &plan.recipes[index], seed);
        Variant {
            index,
            applied,
            clip,
        }
    }

    pub fn variants(&self, clip: &AudioClip, plan: &VariantPlan) -> Vec<Variant> {
        (0..plan.recipes.len())
            .map(|i| self.variant(clip, plan, i))
            .collect()
    }

    /// The ten standard variants of a canonical clip, variant 0 being the
    /// clip itself.
    pub fn generate_variants(&self, clip: &AudioClip, base_seed: u64) -> Vec<AudioClip> {
        self.variants(clip, &VariantPlan::standard(base_seed))
            .into_iter()
            .map(|v| v.clip)
            .collect()
    }
}

/// [`Augmenter::generate_variants`] with the default configuration.
pub fn generate_variants(clip: &AudioClip, base_seed: u64) -> Vec<AudioClip> {
    Augmenter::default().generate_variants(clip, base_seed)
}
