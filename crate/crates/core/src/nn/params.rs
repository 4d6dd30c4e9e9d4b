use rand::{Rng, SeedableRng};
use rand_xoshiro::SplitMix64;

use super::spec::{Layer, ModelSpec};
use super::{NnError, Real, Tensor};

/// Every layer's parameter tensors, indexed by layer. Storage order per kind:
///
/// - Conv1D: kernel `(k, in, out)`, bias `(out)`
/// - BatchNorm: gamma, beta, moving mean, moving variance, each `(ch)`
/// - LSTM: kernel `(in, 4u)`, recurrent kernel `(u, 4u)`, bias `(4u)`;
///   gates ordered input, forget, cell, output
/// - Dense: kernel `(in, out)`, bias `(out)`
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<T> {
    pub layers: Vec<Vec<Tensor<T>>>,
}

/// Gradients share the parameter layout; non-trainable slots stay zero.
pub type Gradients<T> = ParamStore<T>;

impl<T: Real> ParamStore<T> {
    pub fn zeros(spec: &ModelSpec) -> Result<Self, NnError> {
        let shapes = spec.param_shapes()?;
        Ok(Self {
            layers: shapes
                .iter()
                .map(|layer| layer.iter().map(|s| Tensor::zeros(s)).collect())
                .collect(),
        })
    }

    /// Glorot-uniform kernels, zero biases, LSTM forget-gate bias 1, BatchNorm
    /// gamma 1 / beta 0 / moving mean 0 / moving variance 1.
    pub fn init(spec: &ModelSpec, seed: u64) -> Result<Self, NnError> {
        let mut store = Self::zeros(spec)?;
        let mut rng = SplitMix64::seed_from_u64(seed);
        for (layer, tensors) in spec.layers.iter().zip(store.layers.iter_mut()) {
            match *layer {
                Layer::Conv1D { .. } => {
                    let s = tensors[0].shape().to_vec();
                    let (fan_in, fan_out) = (s[0] * s[1], s[0] * s[2]);
                    glorot(&mut tensors[0], fan_in, fan_out, &mut rng);
                }
                Layer::Dense { .. } => {
                    let s = tensors[0].shape().to_vec();
                    glorot(&mut tensors[0], s[0], s[1], &mut rng);
                }
                Layer::Lstm { units, .. } => {
                    for t in tensors.iter_mut().take(2) {
                        let s = t.shape().to_vec();
                        glorot(t, s[0], s[1], &mut rng);
                    }
                    tensors[2].data_mut()[units..2 * units].fill(T::one());
                }
                Layer::BatchNorm { .. } => {
                    tensors[0].fill(T::one());
                    tensors[3].fill(T::one());
                }
                Layer::MaxPool1D { .. } | Layer::Dropout { .. } => {}
            }
        }
        Ok(store)
    }

    pub fn counts(&self) -> Vec<usize> {
        self.layers
            .iter()
            .map(|l| l.iter().map(Tensor::len).sum())
            .collect()
    }

    pub fn total(&self) -> usize {
        self.counts().iter().sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().flatten().all(Tensor::is_finite)
    }

    /// Checks that tensor shapes match what `spec` expects.
    pub fn check_against(&self, spec: &ModelSpec) -> Result<(), NnError> {
        let expected = spec.param_shapes()?;
        if expected.len() != self.layers.len() {
            return Err(NnError::ShapeMismatch(format!(
                "{} parameter layers, model has {}",
                self.layers.len(),
                expected.len()
            )));
        }
        for (i, (want, have)) in expected.iter().zip(&self.layers).enumerate() {
            let have_shapes: Vec<&[usize]> = have.iter().map(Tensor::shape).collect();
            let want_shapes: Vec<&[usize]> = want.iter().map(Vec::as_slice).collect();
            if have_shapes != want_shapes {
                return Err(NnError::ShapeMismatch(format!(
                    "layer {i}: parameters {have_shapes:?}, model expects {want_shapes:?}"
                )));
            }
        }
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            layers: self
                .layers
                .iter()
                .map(|l| l.iter().map(Tensor::cast).collect())
                .collect(),
        }
    }
}

fn glorot<T: Real>(t: &mut Tensor<T>, fan_in: usize, fan_out: usize, rng: &mut SplitMix64) {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    for v in t.data_mut() {
        *v = T::lit(rng.gen_range(-limit..limit));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::spec::{Activation, Architecture};

    #[test]
    fn init_matches_counts_and_conventions() {
        let spec = ModelSpec::from_architecture(&Architecture::reduced(Activation::Relu)).unwrap();
        let p = ParamStore::<f32>::init(&spec, 3).unwrap();
        assert_eq!(p.counts(), spec.param_counts().unwrap());
        p.check_against(&spec).unwrap();

        // LSTM 11: forget slice of the bias is 1, the rest 0
        let bias = p.layers[11][2].data();
        assert!(bias[..32].iter().all(|&v| v == 0.0));
        assert!(bias[32..64].iter().all(|&v| v == 1.0));
        assert!(bias[64..].iter().all(|&v| v == 0.0));

        // BatchNorm 2: gamma 1, beta 0, moving mean 0, moving var 1
        let bn = &p.layers[2];
        assert!(bn[0].data().iter().all(|&v| v == 1.0));
        assert!(bn[1].data().iter().all(|&v| v == 0.0));
        assert!(bn[3].data().iter().all(|&v| v == 1.0));

        let limit = (6.0f32 / (5.0 + 5.0 * 32.0)).sqrt();
        assert!(p.layers[0][0].data().iter().all(|v| v.abs() <= limit));
        assert_eq!(p, ParamStore::<f32>::init(&spec, 3).unwrap());
        assert_ne!(p, ParamStore::<f32>::init(&spec, 4).unwrap());
    }

    #[test]
    fn shape_check_detects_mismatch() {
        let small = ModelSpec::from_architecture(&Architecture::reduced(Activation::Relu)).unwrap();
        let full = ModelSpec::from_architecture(&Architecture::emoaugnet(Activation::Relu)).unwrap();
        let p = ParamStore::<f32>::zeros(&small).unwrap();
        assert!(matches!(p.check_against(&full), Err(NnError::ShapeMismatch(_))));
    }
}
