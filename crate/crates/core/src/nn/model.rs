//! Whole-network forward and backward passes.

use rand_xoshiro::SplitMix64;

use super::layers::{self, BatchNormCache, ConvDims, LstmCache, LstmDims};
use super::spec::{Activation, FeatureShape, Layer, ModelSpec};
use super::{Gradients, NnError, ParamStore, Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Dropout active, BatchNorm on batch statistics.
    Train,
    /// Deterministic: no dropout, BatchNorm on moving statistics.
    Infer,
}

#[derive(Debug, Clone)]
enum LayerCache<T> {
    Conv { input: Vec<T>, output: Vec<T> },
    Pool { arg: Vec<u16> },
    BatchNorm(BatchNormCache<T>),
    Dropout { mask: Vec<T> },
    Lstm { input: Vec<T>, state: LstmCache<T> },
    Dense { input: Vec<T>, output: Vec<T> },
    Empty,
}

/// Intermediate values from one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    pub mode: Mode,
    pub batch: usize,
    /// Output shape of every layer, batch axis included.
    pub shapes: Vec<Vec<usize>>,
    layers: Vec<LayerCache<T>>,
}

impl<T: Real> ForwardCache<T> {
    /// `(layer, batch mean, batch variance)` for every BatchNorm layer run in
    /// train mode.
    pub fn batch_statistics(&self) -> impl Iterator<Item = (usize, &[T], &[T])> {
        self.layers.iter().enumerate().filter_map(|(i, c)| match c {
            LayerCache::BatchNorm(bn) => Some((i, bn.mean.as_slice(), bn.var.as_slice())),
            _ => None,
        })
    }
}

fn seq_dims(shape: FeatureShape) -> (usize, usize) {
    match shape {
        FeatureShape::Seq { len, channels } => (len, channels),
        FeatureShape::Flat(n) => (1, n),
    }
}

/// Runs the network on `input` of shape `(batch, len, channels)` (or
/// `(batch, n)` for flat inputs) and returns the softmax probabilities.
pub fn forward<T: Real>(
    spec: &ModelSpec,
    params: &ParamStore<T>,
    input: &Tensor<T>,
    mode: Mode,
    rng: &mut SplitMix64,
) -> Result<(Tensor<T>, ForwardCache<T>), NnError> {
    let batch = input.shape().first().copied().unwrap_or(0);
    let expected = spec.input.with_batch(batch);
    if batch == 0 || input.shape() != expected.as_slice() {
        return Err(NnError::ShapeMismatch(format!(
            "input shape {:?}, expected {expected:?} with batch > 0",
            input.shape()
        )));
    }
    if let Some(pos) = input.data().iter().position(|v| !v.is_finite()) {
        return Err(NnError::NonFiniteInput(pos));
    }
    params.check_against(spec)?;
    let trace = spec.shape_trace()?;
    let train = mode == Mode::Train;

    let mut x = input.data().to_vec();
    let mut caches = Vec::with_capacity(spec.layers.len());
    let mut shapes = Vec::with_capacity(spec.layers.len());
    for (i, layer) in spec.layers.iter().enumerate() {
        let in_shape = trace[i];
        let p = &params.layers[i];
        let (len, cin) = seq_dims(in_shape);
        let (y, cache) = match *layer {
            Layer::Conv1D {
                filters,
                kernel,
                activation,
            } => {
                let d = ConvDims {
                    batch,
                    len,
                    cin,
                    kernel,
                    cout: filters,
                };
                let y = layers::conv_forward(d, &x, p[0].data(), p[1].data(), activation);
                let cache = if train {
                    LayerCache::Conv {
                        input: x,
                        output: y.clone(),
                    }
                } else {
                    LayerCache::Empty
                };
                (y, cache)
            }
            Layer::MaxPool1D { pool } => {
                let (y, arg) = layers::maxpool_forward(&x, batch, len, cin, pool);
                (y, if train { LayerCache::Pool { arg } } else { LayerCache::Empty })
            }
            Layer::BatchNorm { epsilon, .. } => {
                if train {
                    let (y, bn) = layers::batchnorm_forward_train(&x, cin, p[0].data(), p[1].data(), epsilon);
                    (y, LayerCache::BatchNorm(bn))
                } else {
                    let y = layers::batchnorm_forward_infer(
                        &x,
                        cin,
                        p[0].data(),
                        p[1].data(),
                        p[2].data(),
                        p[3].data(),
                        epsilon,
                    );
                    (y, LayerCache::Empty)
                }
            }
            Layer::Dropout { rate } => {
                if train && rate > 0.0 {
                    let (y, mask) = layers::dropout_forward(&x, rate, rng);
                    (y, LayerCache::Dropout { mask })
                } else {
                    (x, LayerCache::Empty)
                }
            }
            Layer::Lstm {
                units,
                return_sequences,
            } => {
                let d = LstmDims {
                    batch,
                    steps: len,
                    cin,
                    units,
                };
                let (y, state) =
                    layers::lstm_forward(d, &x, p[0].data(), p[1].data(), p[2].data(), return_sequences);
                let cache = if train {
                    LayerCache::Lstm { input: x, state }
                } else {
                    LayerCache::Empty
                };
                (y, cache)
            }
            Layer::Dense { activation, .. } => {
                let y = layers::dense_forward(&x, cin, p[0].data(), p[1].data(), activation);
                let cache = if train || activation == Activation::Softmax {
                    LayerCache::Dense {
                        input: if train { x } else { Vec::new() },
                        output: y.clone(),
                    }
                } else {
                    LayerCache::Empty
                };
                (y, cache)
            }
        };
        if y.iter().any(|v| !v.is_finite()) {
            return Err(NnError::NonFiniteActivation {
                layer: i,
                kind: layer.kind_name(),
            });
        }
        shapes.push(trace[i + 1].with_batch(batch));
        caches.push(cache);
        x = y;
    }

    let out_shape = shapes.last().cloned().unwrap_or_default();
    let probs = Tensor::from_vec(&out_shape, x)?;
    Ok((
        probs,
        ForwardCache {
            mode,
            batch,
            shapes,
            layers: caches,
        },
    ))
}

/// Inference-mode probabilities, `(batch, classes)`.
pub fn predict<T: Real>(spec: &ModelSpec, params: &ParamStore<T>, input: &Tensor<T>) -> Result<Tensor<T>, NnError> {
    // no stochastic layer runs in infer mode, the generator is never drawn
    let mut rng = <SplitMix64 as rand::SeedableRng>::seed_from_u64(0);
    forward(spec, params, input, Mode::Infer, &mut rng).map(|(p, _)| p)
}

/// Gradient of the mean cross-entropy of the cached softmax output with
/// respect to every trainable parameter.
pub fn backward<T: Real>(
    spec: &ModelSpec,
    params: &ParamStore<T>,
    cache: &ForwardCache<T>,
    labels: &[usize],
) -> Result<Gradients<T>, NnError> {
    if cache.mode != Mode::Train {
        return Err(NnError::InvalidModel("backward needs a train-mode forward cache".into()));
    }
    let batch = cache.batch;
    if labels.len() != batch {
        return Err(NnError::ShapeMismatch(format!(
            "{} labels for a batch of {batch}",
            labels.len()
        )));
    }
    let classes = spec.output_classes();
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(NnError::ShapeMismatch(format!("label {bad} outside 0..{classes}")));
    }
    let trace = spec.shape_trace()?;
    let mut grads = ParamStore::zeros(spec)?;

    // softmax + mean cross-entropy: d/dlogits = (p - onehot) / batch
    let mut grad = match cache.layers.last() {
        Some(LayerCache::Dense { output, .. }) => {
            let inv_b = T::one() / T::lit(batch as f64);
            let mut g: Vec<T> = output.iter().map(|&p| p * inv_b).collect();
            for (b, &l) in labels.iter().enumerate() {
                g[b * classes + l] -= inv_b;
            }
            g
        }
        _ => return Err(NnError::InvalidModel("last layer must be a cached softmax Dense".into())),
    };

    for (i, layer) in spec.layers.iter().enumerate().rev() {
        let (len, cin) = seq_dims(trace[i]);
        let p = &params.layers[i];
        let g = &mut grads.layers[i];
        grad = match (layer, &cache.layers[i]) {
            (
                &Layer::Conv1D {
                    filters,
                    kernel,
                    activation,
                },
                LayerCache::Conv { input, output },
            ) => {
                let d = ConvDims {
                    batch,
                    len,
                    cin,
                    kernel,
                    cout: filters,
                };
                let (gk, gb) = g.split_at_mut(1);
                layers::conv_backward(
                    d,
                    input,
                    output,
                    grad,
                    p[0].data(),
                    activation,
                    gk[0].data_mut(),
                    gb[0].data_mut(),
                )
            }
            (&Layer::MaxPool1D { pool }, LayerCache::Pool { arg }) => {
                layers::maxpool_backward(&grad, arg, batch, len, cin, pool)
            }
            (Layer::BatchNorm { .. }, LayerCache::BatchNorm(bn)) => {
                let (gg, gb) = g.split_at_mut(1);
                layers::batchnorm_backward(&grad, bn, p[0].data(), gg[0].data_mut(), gb[0].data_mut())
            }
            (Layer::Dropout { .. }, LayerCache::Dropout { mask }) => {
                grad.iter().zip(mask).map(|(&d, &m)| d * m).collect()
            }
            (Layer::Dropout { .. }, LayerCache::Empty) => grad,
            (
                &Layer::Lstm {
                    units,
                    return_sequences,
                },
                LayerCache::Lstm { input, state },
            ) => {
                let d = LstmDims {
                    batch,
                    steps: len,
                    cin,
                    units,
                };
                let mut bufs: Vec<Vec<T>> = g.iter().map(|t| t.data().to_vec()).collect();
                let dx = layers::lstm_backward(
                    d,
                    input,
                    state,
                    &grad,
                    p[0].data(),
                    p[1].data(),
                    return_sequences,
                    &mut bufs,
                );
                for (t, b) in g.iter_mut().zip(bufs) {
                    t.data_mut().copy_from_slice(&b);
                }
                dx
            }
            (&Layer::Dense { activation, .. }, LayerCache::Dense { input, output }) => {
                let (gk, gb) = g.split_at_mut(1);
                layers::dense_backward(
                    input,
                    output,
                    grad,
                    cin,
                    p[0].data(),
                    activation,
                    gk[0].data_mut(),
                    gb[0].data_mut(),
                )
            }
            _ => {
                return Err(NnError::InvalidModel(format!(
                    "forward cache does not match layer {i} ({})",
                    layer.kind_name()
                )));
            }
        };
    }
    Ok(grads)
}

/// Folds the batch statistics of a train-mode pass into the BatchNorm moving
/// averages as update number `update` (counting from 1). The averages are
/// zero-debiased: `moving += w * (batch - moving)` with
/// `w = (1 - momentum) / (1 - momentum^update)`, so the first update adopts
/// the batch statistics and `w` settles to `1 - momentum` within a few
/// hundred updates.
pub fn update_moving_statistics<T: Real>(
    spec: &ModelSpec,
    params: &mut ParamStore<T>,
    cache: &ForwardCache<T>,
    update: u64,
) {
    for (i, mean, var) in cache.batch_statistics() {
        let Layer::BatchNorm { momentum, .. } = spec.layers[i] else {
            continue;
        };
        let decay = momentum.powf(update.max(1) as f64);
        let rest = T::lit((1.0 - momentum) / (1.0 - decay));
        let m = T::one() - rest;
        let p = &mut params.layers[i];
        for (mm, &bm) in p[2].data_mut().iter_mut().zip(mean) {
            *mm = m * *mm + rest * bm;
        }
        for (mv, &bv) in p[3].data_mut().iter_mut().zip(var) {
            *mv = m * *mv + rest * bv;
        }
    }
}

/// Mean negative log-likelihood of the true class, probabilities floored at
/// 1e-12.
pub fn cross_entropy<T: Real>(probs: &Tensor<T>, labels: &[usize]) -> f64 {
    let classes = probs.shape().last().copied().unwrap_or(1);
    let total: f64 = labels
        .iter()
        .enumerate()
        .map(|(b, &l)| -probs.data()[b * classes + l].as_f64().max(1e-12).ln())
        .sum();
    total / labels.len() as f64
}

/// Row-wise argmax of a `(batch, classes)` tensor.
pub fn argmax_rows<T: Real>(probs: &Tensor<T>) -> Vec<usize> {
    let classes = probs.shape().last().copied().unwrap_or(1);
    probs
        .data()
        .chunks_exact(classes)
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, T::neg_infinity()), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
                .0
        })
        .collect()
}
