//! Spectral primitives shared by augmentation and feature extraction:
//! windows, a radix-2 FFT, centered STFT / overlap-add ISTFT and a phase
//! vocoder.

use std::f64::consts::PI;

use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DspError {
    #[error("FFT length {0} is not a power of two")]
    NonPowerOfTwo(usize),
    #[error("invalid STFT configuration: {0}")]
    BadConfig(&'static str),
}

/// Periodic Hann window, `w[i] = 0.5 - 0.5 cos(2 pi i / n)`.
pub fn hann_window(n: usize) -> Vec<f64> {
    assert!(n >= 1, "window length must be positive");
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// In-place iterative radix-2 FFT. `inverse` uses the conjugate twiddles and
/// applies the 1/N scaling.
pub fn fft_in_place(buf: &mut [Complex64], inverse: bool) -> Result<(), DspError> {
    let n = buf.len();
    if n == 0 || !n.is_power_of_two() {
        return Err(DspError::NonPowerOfTwo(n));
    }
    if n == 1 {
        return Ok(());
    }

    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            buf.swap(i, j);
        }
    }

    let sign = if inverse { 1.0 } else { -1.0 };
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let step = sign * 2.0 * PI / len as f64;
        // Twiddles are evaluated directly rather than by recurrence so the
        // error stays at a few ulps for long transforms.
        let twiddles: Vec<Complex64> = (0..half)
            .map(|k| Complex64::from_polar(1.0, step * k as f64))
            .collect();
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let a = buf[start + k];
                let b = buf[start + k + half] * twiddles[k];
                buf[start + k] = a + b;
                buf[start + k + half] = a - b;
            }
        }
        len <<= 1;
    }

    if inverse {
        let scale = 1.0 / n as f64;
        for v in buf.iter_mut() {
            *v *= scale;
        }
    }
    Ok(())
}

/// Unnormalized forward DFT.
pub fn fft(x: &[Complex64]) -> Result<Vec<Complex64>, DspError> {
    let mut out = x.to_vec();
    fft_in_place(&mut out, false)?;
    Ok(out)
}

/// Inverse DFT with 1/N scaling.
pub fn ifft(x: &[Complex64]) -> Result<Vec<Complex64>, DspError> {
    let mut out = x.to_vec();
    fft_in_place(&mut out, true)?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StftConfig {
    pub n_fft: usize,
    pub hop: usize,
    pub window: Vec<f64>,
    /// Reflect-pad the signal by `n_fft / 2` on both sides.
    pub center: bool,
}

impl StftConfig {
    pub fn new(n_fft: usize, hop: usize) -> Result<Self, DspError> {
        let cfg = Self {
            n_fft,
            hop,
            window: hann_window(n_fft.max(1)),
            center: true,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), DspError> {
        if !self.n_fft.is_power_of_two() {
            return Err(DspError::NonPowerOfTwo(self.n_fft));
        }
        if self.hop == 0 || self.hop > self.n_fft {
            return Err(DspError::BadConfig("hop must be in 1..=n_fft"));
        }
        if self.window.len() != self.n_fft {
            return Err(DspError::BadConfig("window length must equal n_fft"));
        }
        Ok(())
    }

    pub fn n_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    /// Number of frames `stft` produces for a signal of `len` samples.
    pub fn frame_count(&self, len: usize) -> usize {
        if self.center {
            1 + len / self.hop
        } else if len < self.n_fft {
            1
        } else {
            1 + (len - self.n_fft) / self.hop
        }
    }
}

impl Default for StftConfig {
    /// n_fft 2048, hop 512, periodic Hann, centered.
    fn default() -> Self {
        Self::new(2048, 512).expect("default STFT config is valid")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    /// `frames[t][k]`, with `k` in `0..=n_fft/2`.
    pub frames: Vec<Vec<Complex64>>,
    pub config: StftConfig,
}

impl Spectrogram {
    pub fn n_frames(&self) -> usize {
        self.frames.len()
    }

    /// Index of the largest-magnitude bin of frame `t`.
    pub fn peak_bin(&self, t: usize) -> usize {
        argmax_by_norm(&self.frames[t])
    }
}

pub(crate) fn argmax_by_norm(bins: &[Complex64]) -> usize {
    bins.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, c)| {
            let v = c.norm_sqr();
            if v > bv { (i, v) } else { (bi, bv) }
        })
        .0
}

/// Maps an index on a reflect-padded axis back onto `0..len` (mirror without
/// repeating the edge sample), folding as often as needed for short inputs.
pub(crate) fn reflect_index(i: isize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len as isize - 1);
    let mut m = i.rem_euclid(period);
    if m >= len as isize {
        m = period - m;
    }
    m as usize
}

/// Short-time Fourier transform. With `center`, frame `t` is centered on
/// sample `t * hop`.
pub fn stft(signal: &[f64], cfg: &StftConfig) -> Result<Spectrogram, DspError> {
    cfg.validate()?;
    if signal.is_empty() {
        return Err(DspError::BadConfig("signal must be non-empty"));
    }
    let n_fft = cfg.n_fft;
    let n_frames = cfg.frame_count(signal.len());
    let offset = if cfg.center { (n_fft / 2) as isize } else { 0 };

    let mut frames = Vec::with_capacity(n_frames);
    let mut buf = vec![Complex64::new(0.0, 0.0); n_fft];
    for t in 0..n_frames {
        let start = (t * cfg.hop) as isize - offset;
        for (j, slot) in buf.iter_mut().enumerate() {
            let pos = start + j as isize;
            let x = if cfg.center {
                signal[reflect_index(pos, signal.len())]
            } else if (pos as usize) < signal.len() {
                signal[pos as usize]
            } else {
                0.0
            };
            *slot = Complex64::new(x * cfg.window[j], 0.0);
        }
        fft_in_place(&mut buf, false)?;
        frames.push(buf[..cfg.n_bins()].to_vec());
    }
    Ok(Spectrogram {
        frames,
        config: cfg.clone(),
    })
}

/// Weighted overlap-add inverse of [`stft`], normalized by the summed squared
/// window. The result is truncated or zero-padded to `out_len`.
pub fn istft(spec: &Spectrogram, out_len: usize) -> Result<Vec<f64>, DspError> {
    let cfg = &spec.config;
    cfg.validate()?;
    let n_fft = cfg.n_fft;
    let n_frames = spec.n_frames();
    if n_frames == 0 {
        return Ok(vec![0.0; out_len]);
    }
    let total = n_fft + cfg.hop * (n_frames - 1);
    let mut acc = vec![0.0; total];
    let mut norm = vec![0.0; total];

    let mut buf = vec![Complex64::new(0.0, 0.0); n_fft];
    for (t, frame) in spec.frames.iter().enumerate() {
        buf[..frame.len()].copy_from_slice(frame);
        for k in 1..n_fft / 2 {
            buf[n_fft - k] = frame[k].conj();
        }
        fft_in_place(&mut buf, true)?;
        let start = t * cfg.hop;
        for j in 0..n_fft {
            let w = cfg.window[j];
            acc[start + j] += buf[j].re * w;
            norm[start + j] += w * w;
        }
    }

    let tiny = f64::MIN_POSITIVE.sqrt();
    for (a, n) in acc.iter_mut().zip(&norm) {
        if *n > tiny {
            *a /= *n;
        }
    }

    let offset = if cfg.center { n_fft / 2 } else { 0 };
    let mut out: Vec<f64> = acc.into_iter().skip(offset).take(out_len).collect();
    out.resize(out_len, 0.0);
    Ok(out)
}

fn wrap_phase(p: f64) -> f64 {
    p - 2.0 * PI * (p / (2.0 * PI)).round()
}

/// Time-scales a spectrogram by stepping through its frames at `rate`
/// (rate > 1 shortens). Magnitudes are linearly interpolated between
/// neighbouring frames; phases accumulate each bin's instantaneous frequency.
pub fn phase_vocoder(spec: &Spectrogram, rate: f64) -> Spectrogram {
    assert!(rate > 0.0 && rate.is_finite(), "rate must be positive");
    let n_in = spec.n_frames();
    let n_bins = spec.config.n_bins();
    let hop = spec.config.hop as f64;
    let n_fft = spec.config.n_fft as f64;

    let n_out = (n_in as f64 / rate).ceil() as usize;
    let advance: Vec<f64> = (0..n_bins).map(|k| 2.0 * PI * hop * k as f64 / n_fft).collect();
    let zero = vec![Complex64::new(0.0, 0.0); n_bins];
    let frame_at = |i: usize| -> &[Complex64] {
        if i < n_in { &spec.frames[i] } else { &zero }
    };

    let mut phase: Vec<f64> = if n_in > 0 {
        spec.frames[0].iter().map(|c| c.arg()).collect()
    } else {
        vec![0.0; n_bins]
    };

    let mut frames = Vec::with_capacity(n_out);
    for t in 0..n_out {
        let step = t as f64 * rate;
        let base = step.floor() as usize;
        let alpha = step - base as f64;
        let (c0, c1) = (frame_at(base), frame_at(base + 1));

        let mut out = Vec::with_capacity(n_bins);
        for k in 0..n_bins {
            let mag = (1.0 - alpha) * c0[k].norm() + alpha * c1[k].norm();
            out.push(Complex64::from_polar(mag, phase[k]));
            let dphase = wrap_phase(c1[k].arg() - c0[k].arg() - advance[k]);
            phase[k] += advance[k] + dphase;
        }
        frames.push(out);
    }

    Spectrogram {
        frames,
        config: spec.config.clone(),
    }
}
