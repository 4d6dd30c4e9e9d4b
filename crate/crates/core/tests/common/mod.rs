//! Independent oracles shared by the integration tests and the acceptance
//! runner. Nothing here calls into the library's DSP or feature code.
#![allow(dead_code)]

use std::f64::consts::PI;

use emoaugnet::nn::{
    Activation, Architecture, Layer, Mode, ModelSpec, ParamStore, Tensor, backward, build_model, cross_entropy,
    forward,
};
use rand::{Rng, SeedableRng};
use rand_xoshiro::SplitMix64;

pub const N_FFT: usize = 2048;
pub const HOP: usize = 512;
pub const N_MELS: usize = 128;
pub const N_MFCC: usize = 20;
pub const LOG_FLOOR: f64 = 1e-10;

/// MFCCs by definition: reflect-padded centered frames, periodic Hann,
/// an O(N^2) DFT, triangles evaluated bin by bin, and explicit DCT sums.
/// Returns `N_MFCC` rows of one value per frame.
pub fn naive_mfcc(samples: &[f64], sample_rate: u32) -> Vec<Vec<f64>> {
    let n = samples.len() as isize;
    let half = (N_FFT / 2) as isize;
    let frames = 1 + samples.len() / HOP;
    let window: Vec<f64> = (0..N_FFT)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / N_FFT as f64).cos())
        .collect();
    let cos_table: Vec<f64> = (0..N_FFT).map(|j| (2.0 * PI * j as f64 / N_FFT as f64).cos()).collect();
    let sin_table: Vec<f64> = (0..N_FFT).map(|j| (2.0 * PI * j as f64 / N_FFT as f64).sin()).collect();

    let sr = sample_rate as f64;
    let mel = |f: f64| 2595.0 * (1.0 + f / 700.0).log10();
    let hz = |m: f64| 700.0 * (10f64.powf(m / 2595.0) - 1.0);
    let top = mel(sr / 2.0);
    let edges: Vec<f64> = (0..N_MELS + 2).map(|i| hz(top * i as f64 / (N_MELS + 1) as f64)).collect();

    let mut out = vec![vec![0.0; frames]; N_MFCC];
    let mut frame = vec![0.0; N_FFT];
    for t in 0..frames {
        for (i, slot) in frame.iter_mut().enumerate() {
            let mut pos = (t * HOP) as isize + i as isize - half;
            if pos < 0 {
                pos = -pos;
            }
            if pos >= n {
                pos = 2 * (n - 1) - pos;
            }
            *slot = samples[pos as usize] * window[i];
        }
        let power: Vec<f64> = (0..=N_FFT / 2)
            .map(|k| {
                let (mut re, mut im) = (0.0, 0.0);
                for (j, &x) in frame.iter().enumerate() {
                    let idx = (k * j) % N_FFT;
                    re += x * cos_table[idx];
                    im -= x * sin_table[idx];
                }
                re * re + im * im
            })
            .collect();
        let log_mel: Vec<f64> = (0..N_MELS)
            .map(|m| {
                let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
                let mut energy = 0.0;
                for (k, p) in power.iter().enumerate() {
                    let f = k as f64 * sr / N_FFT as f64;
                    let weight = if f > lo && f <= mid {
                        (f - lo) / (mid - lo)
                    } else if f > mid && f < hi {
                        (hi - f) / (hi - mid)
                    } else {
                        0.0
                    };
                    energy += weight * 2.0 / (hi - lo) * p;
                }
                10.0 * energy.max(LOG_FLOOR).log10()
            })
            .collect();
        for (c, row) in out.iter_mut().enumerate() {
            let scale = if c == 0 { (1.0 / N_MELS as f64).sqrt() } else { (2.0 / N_MELS as f64).sqrt() };
            let mut acc = 0.0;
            for (m, v) in log_mel.iter().enumerate() {
                acc += v * (PI * c as f64 * (m as f64 + 0.5) / N_MELS as f64).cos();
            }
            row[t] = scale * acc;
        }
    }
    out
}

/// Largest `|a - b| / max(|b|, 1)` over two equally shaped matrices.
pub fn max_relative_gap(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .flat_map(|(ra, rb)| {
            assert_eq!(ra.len(), rb.len());
            ra.iter().zip(rb).map(|(x, y)| (x - y).abs() / y.abs().max(1.0))
        })
        .fold(0.0, f64::max)
}

/// A random canonical-length clip: a few partials, a noise floor, and a
/// random envelope so frames differ.
pub fn random_clip(seed: u64, len: usize, sample_rate: u32) -> Vec<f64> {
    let mut rng = SplitMix64::seed_from_u64(seed);
    let partials: Vec<(f64, f64, f64)> = (0..rng.gen_range(1..6))
        .map(|_| (rng.gen_range(60.0..8000.0), rng.gen_range(0.05..0.4), rng.gen_range(0.0..2.0 * PI)))
        .collect();
    let noise = rng.gen_range(0.0..0.2);
    let env_rate = rng.gen_range(0.2..4.0);
    (0..len)
        .map(|i| {
            let t = i as f64 / sample_rate as f64;
            let tonal: f64 = partials.iter().map(|(f, a, p)| a * (2.0 * PI * f * t + p).sin()).sum();
            let env = 0.6 + 0.4 * (2.0 * PI * env_rate * t).sin();
            env * tonal + noise * rng.gen_range(-1.0..1.0)
        })
        .collect()
}

pub fn sine(freq: f64, amplitude: f64, len: usize, sample_rate: u32) -> Vec<f64> {
    (0..len)
        .map(|i| amplitude * (2.0 * PI * freq * i as f64 / sample_rate as f64).sin())
        .collect()
}

/// Frequency of the strongest bin of a Hann-windowed direct DFT, scanned
/// at 0.25 Hz over `[lo, hi]` Hz.
pub fn peak_frequency(samples: &[f64], sample_rate: u32, lo: f64, hi: f64) -> f64 {
    let n = samples.len();
    let windowed: Vec<f64> = samples
        .iter()
        .enumerate()
        .map(|(i, x)| x * (0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()))
        .collect();
    let mut best = (lo, -1.0);
    let mut f = lo;
    while f <= hi {
        let w = 2.0 * PI * f / sample_rate as f64;
        let (mut re, mut im) = (0.0, 0.0);
        for (i, x) in windowed.iter().enumerate() {
            re += x * (w * i as f64).cos();
            im += x * (w * i as f64).sin();
        }
        let mag = re * re + im * im;
        if mag > best.1 {
            best = (f, mag);
        }
        f += 0.25;
    }
    best.0
}

/// Miniature network with every layer kind, sized for finite differences.
pub fn mini_architecture(act: Activation) -> Architecture {
    Architecture {
        input_len: 32,
        conv_filters: [4, 6, 4],
        conv_kernels: [5, 3, 3],
        lstm_units: [5, 5],
        dense_units: [6, 5, 4],
        classes: 7,
        dropout: 0.2,
        conv_activation: act,
        dense_activation: Activation::Elu,
    }
}

pub const GRAD_EPS: f64 = 1e-4;
const DROPOUT_SEED: u64 = 77;

#[derive(Debug, Clone)]
pub struct GradientCheck {
    pub checked: usize,
    pub worst: f64,
    pub worst_at: String,
}

fn loss(spec: &ModelSpec, params: &ParamStore<f64>, x: &Tensor<f64>, labels: &[usize]) -> f64 {
    // the same seed reproduces the same dropout masks on every evaluation
    let mut rng = SplitMix64::seed_from_u64(DROPOUT_SEED);
    let (probs, _) = forward(spec, params, x, Mode::Train, &mut rng).unwrap();
    cross_entropy(&probs, labels)
}

/// Compares every analytic parameter gradient with a central difference
/// and reports the largest relative error.
pub fn check_gradients(act: Activation, seed: u64) -> GradientCheck {
    let (spec, mut params) = build_model::<f64>(&mini_architecture(act), seed).unwrap();
    let mut rng = SplitMix64::seed_from_u64(seed ^ 0xabc);
    // move BatchNorm affine terms off their identity initialization so their
    // gradients are exercised at a generic point
    for (layer, tensors) in spec.layers.iter().zip(params.layers.iter_mut()) {
        if matches!(layer, Layer::BatchNorm { .. }) {
            for t in tensors.iter_mut().take(2) {
                t.data_mut().iter_mut().for_each(|v| *v += rng.gen_range(-0.3..0.3));
            }
        }
    }
    let batch = 3;
    let data: Vec<f64> = (0..batch * 32).map(|_| rng.gen_range(-1.5..1.5)).collect();
    let x = Tensor::from_vec(&[batch, 32, 1], data).unwrap();
    let labels = [1usize, 4, 6];

    let mut drng = SplitMix64::seed_from_u64(DROPOUT_SEED);
    let (_, cache) = forward(&spec, &params, &x, Mode::Train, &mut drng).unwrap();
    let grads = backward(&spec, &params, &cache, &labels).unwrap();

    let mut report = GradientCheck {
        checked: 0,
        worst: 0.0,
        worst_at: String::new(),
    };
    for (li, layer) in spec.layers.iter().enumerate() {
        for (ti, &trainable) in layer.trainable_mask().iter().enumerate() {
            if !trainable {
                continue;
            }
            for k in 0..params.layers[li][ti].len() {
                let orig = params.layers[li][ti].data()[k];
                params.layers[li][ti].data_mut()[k] = orig + GRAD_EPS;
                let up = loss(&spec, &params, &x, &labels);
                params.layers[li][ti].data_mut()[k] = orig - GRAD_EPS;
                let down = loss(&spec, &params, &x, &labels);
                params.layers[li][ti].data_mut()[k] = orig;

                let numeric = (up - down) / (2.0 * GRAD_EPS);
                let analytic = grads.layers[li][ti].data()[k];
                let denom = analytic.abs().max(numeric.abs()).max(1e-7);
                let rel = (analytic - numeric).abs() / denom;
                if rel > report.worst {
                    report.worst = rel;
                    report.worst_at = format!(
                        "layer {li} ({}) tensor {ti} index {k}: analytic {analytic:e} numeric {numeric:e}",
                        layer.kind_name()
                    );
                }
                report.checked += 1;
            }
        }
    }
    report
}
