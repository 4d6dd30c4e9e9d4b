use super::spec::ModelSpec;
use super::{Gradients, NnError, ParamStore, Real};

/// Adam with standard bias correction. Non-trainable slots (BatchNorm moving
/// statistics) are left untouched.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    m: ParamStore<T>,
    v: ParamStore<T>,
    mask: Vec<&'static [bool]>,
}

impl<T: Real> Adam<T> {
    pub fn new(spec: &ModelSpec, lr: f64) -> Result<Self, NnError> {
        Ok(Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m: ParamStore::zeros(spec)?,
            v: ParamStore::zeros(spec)?,
            mask: spec.layers.iter().map(|l| l.trainable_mask()).collect(),
        })
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut ParamStore<T>, grads: &Gradients<T>) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2) = (T::lit(self.beta1), T::lit(self.beta2));
        let (r1, r2) = (T::one() - b1, T::one() - b2);
        let lr = T::lit(self.lr);
        let (inv_c1, inv_c2, eps) = (T::lit(1.0 / c1), T::lit(1.0 / c2), T::lit(self.epsilon));

        for (i, mask) in self.mask.iter().enumerate() {
            for (j, &trainable) in mask.iter().enumerate() {
                if !trainable {
                    continue;
                }
                let p = params.layers[i][j].data_mut();
                let g = grads.layers[i][j].data();
                let m = self.m.layers[i][j].data_mut();
                let v = self.v.layers[i][j].data_mut();
                for k in 0..p.len() {
                    m[k] = b1 * m[k] + r1 * g[k];
                    v[k] = b2 * v[k] + r2 * g[k] * g[k];
                    let mhat = m[k] * inv_c1;
                    let vhat = v[k] * inv_c2;
                    p[k] -= lr * mhat / (vhat.sqrt() + eps);
                }
            }
        }
    }
}
