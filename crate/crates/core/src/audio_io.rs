//! PCM WAV input/output and the canonical clip format (mono, 22050 Hz,
//! 2.5 s starting 0.6 s into the recording).

use std::f64::consts::PI;
use std::path::Path;
use std::sync::OnceLock;

use thiserror::Error;

pub const CANONICAL_RATE: u32 = 22_050;
pub const CANONICAL_DURATION_S: f64 = 2.5;
pub const CANONICAL_OFFSET_S: f64 = 0.6;
/// `2.5 s * 22050 Hz`.
pub const CANONICAL_LEN: usize = 55_125;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("malformed WAV: {0}")]
    MalformedWav(String),
    #[error("unsupported encoding: {0}")]
    UnsupportedEncoding(String),
    #[error("audio contains no frames")]
    EmptyAudio,
    #[error("non-finite sample at index {0}")]
    NonFinite(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Mono waveform with its sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Self {
        assert!(sample_rate > 0, "sample rate must be positive");
        Self {
            samples,
            sample_rate,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClipWindow {
    pub duration_s: f64,
    pub offset_s: f64,
    pub target_rate: u32,
}

impl ClipWindow {
    pub fn len(&self) -> usize {
        (self.duration_s * self.target_rate as f64).round() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl Default for ClipWindow {
    fn default() -> Self {
        Self {
            duration_s: CANONICAL_DURATION_S,
            offset_s: CANONICAL_OFFSET_S,
            target_rate: CANONICAL_RATE,
        }
    }
}

fn map_hound(err: hound::Error) -> AudioError {
    match err {
        hound::Error::IoError(e) => AudioError::Io(e),
        hound::Error::Unsupported => AudioError::UnsupportedEncoding("unsupported WAV feature".into()),
        hound::Error::FormatError(msg) => AudioError::MalformedWav(msg.to_string()),
        other => AudioError::MalformedWav(other.to_string()),
    }
}

/// Reads a 16-bit PCM or 32-bit float WAV, downmixing stereo by channel mean.
pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioClip, AudioError> {
    let reader = hound::WavReader::open(path).map_err(map_hound)?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if !(1..=2).contains(&channels) {
        return Err(AudioError::UnsupportedEncoding(format!("{channels} channels")));
    }

    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<Result<_, _>>()
            .map_err(map_hound)?,
        (hound::SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<Result<_, _>>()
            .map_err(map_hound)?,
        (fmt, bits) => {
            return Err(AudioError::UnsupportedEncoding(format!("{fmt:?} {bits}-bit")));
        }
    };

    if interleaved.len() < channels {
        return Err(AudioError::EmptyAudio);
    }
    let samples: Vec<f64> = interleaved
        .chunks_exact(channels)
        .map(|frame| frame.iter().sum::<f64>() / channels as f64)
        .collect();
    if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
        return Err(AudioError::NonFinite(i));
    }
    Ok(AudioClip::new(samples, spec.sample_rate))
}

fn quantize(v: f64) -> i16 {
    (v.clamp(-1.0, 1.0) * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

/// Writes 16-bit PCM mono, saturating values outside [-1, 1].
pub fn save_wav(clip: &AudioClip, path: impl AsRef<Path>) -> Result<(), AudioError> {
    if let Some(i) = clip.samples.iter().position(|v| !v.is_finite()) {
        return Err(AudioError::NonFinite(i));
    }
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(map_hound)?;
    for &v in &clip.samples {
        writer.write_sample(quantize(v)).map_err(map_hound)?;
    }
    writer.finalize().map_err(map_hound)
}

const ZERO_CROSSINGS: usize = 32;
const TABLE_DENSITY: usize = 512;
const KAISER_BETA: f64 = 8.6;
const ROLLOFF: f64 = 0.945;

fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let q = x * x / 4.0;
    for k in 1..200 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

/// Kaiser-windowed sinc sampled at `TABLE_DENSITY` points per zero crossing.
fn sinc_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let n = ZERO_CROSSINGS * TABLE_DENSITY + 1;
        let norm = bessel_i0(KAISER_BETA);
        (0..n)
            .map(|i| {
                let u = i as f64 / TABLE_DENSITY as f64;
                let sinc = if i == 0 { 1.0 } else { (PI * u).sin() / (PI * u) };
                let r = u / ZERO_CROSSINGS as f64;
                sinc * bessel_i0(KAISER_BETA * (1.0 - r * r).max(0.0).sqrt()) / norm
            })
            .collect()
    })
}

fn interp_table(table: &[f64], u: f64) -> f64 {
    let pos = u * TABLE_DENSITY as f64;
    let i = pos as usize;
    if i + 1 >= table.len() {
        return 0.0;
    }
    let frac = pos - i as f64;
    table[i] + frac * (table[i + 1] - table[i])
}

/// Band-limited resampling by an arbitrary `ratio` (output rate / input rate).
/// Output length is `round(len * ratio)`.
pub fn resample_ratio(samples: &[f64], ratio: f64) -> Vec<f64> {
    assert!(ratio > 0.0 && ratio.is_finite(), "ratio must be positive");
    let out_len = (samples.len() as f64 * ratio).round() as usize;
    let table = sinc_table();
    let cutoff = ratio.min(1.0) * ROLLOFF;
    let reach = ZERO_CROSSINGS as f64 / cutoff;
    let n_in = samples.len() as isize;

    (0..out_len)
        .map(|m| {
            let t = m as f64 / ratio;
            let lo = ((t - reach).ceil() as isize).max(0);
            let hi = ((t + reach).floor() as isize).min(n_in - 1);
            let mut acc = 0.0;
            for n in lo..=hi {
                let d = (t - n as f64).abs() * cutoff;
                acc += samples[n as usize] * interp_table(table, d);
            }
            acc * cutoff
        })
        .collect()
}

/// Resamples `clip` to `target_rate`; identity when the rates already match.
pub fn resample(clip: &AudioClip, target_rate: u32) -> AudioClip {
    assert!(target_rate > 0, "target rate must be positive");
    if clip.sample_rate == target_rate {
        return clip.clone();
    }
    let ratio = target_rate as f64 / clip.sample_rate as f64;
    AudioClip::new(resample_ratio(&clip.samples, ratio), target_rate)
}

/// Crops or tail-pads `samples` with zeros to exactly `len`.
pub fn fix_length(mut samples: Vec<f64>, len: usize) -> Vec<f64> {
    samples.resize(len, 0.0);
    samples
}

/// Drops the first `offset_s` seconds, then crops or zero-pads to the window
/// duration.
pub fn fix_window(clip: &AudioClip, window: &ClipWindow) -> AudioClip {
    debug_assert_eq!(clip.sample_rate, window.target_rate);
    let skip = (window.offset_s * window.target_rate as f64).round() as usize;
    let body: Vec<f64> = clip.samples.iter().skip(skip).copied().collect();
    AudioClip::new(fix_length(body, window.len()), clip.sample_rate)
}

/// Resample then window: the form every downstream stage expects.
pub fn canonicalize(clip: &AudioClip, window: &ClipWindow) -> AudioClip {
    fix_window(&resample(clip, window.target_rate), window)
}
