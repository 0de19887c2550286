use crate::error::{Error, Result};
use crate::nn::{Bound, ParamStore};
use crate::scalar::Scalar;
use crate::tensor::{Gradients, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// ADAM with bias-corrected moments, one moment pair per parameter tensor.
#[derive(Debug, Clone)]
pub struct Adam<T: Scalar> {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(store: &ParamStore<T>, config: AdamConfig) -> Self {
        let zeros = || store.iter().map(|(_, t)| Tensor::from_parts(t.dims().to_vec(), vec![T::zero(); t.len()])).collect();
        Self {
            config,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &[Tensor<T>] {
        &self.m
    }

    pub fn second_moments(&self) -> &[Tensor<T>] {
        &self.v
    }

    /// Update from graph gradients of the leaves in `bound`.
    pub fn step(&mut self, store: &mut ParamStore<T>, grads: &Gradients<T>, bound: &Bound) -> Result<()> {
        let list = store
            .ids()
            .map(|id| {
                grads
                    .get(bound.var(id))
                    .cloned()
                    .ok_or_else(|| Error::MissingGradient(store.name(id).to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        self.step_with(store, &list)
    }

    /// Update from one gradient tensor per parameter, in store order.
    pub fn step_with(&mut self, store: &mut ParamStore<T>, grads: &[Tensor<T>]) -> Result<()> {
        if grads.len() != store.len() {
            let missing = store.ids().nth(grads.len()).map(|id| store.name(id).to_string()).unwrap_or_default();
            return Err(Error::MissingGradient(missing));
        }
        for (id, grad) in store.ids().zip(grads) {
            if grad.dims() != store.get(id).dims() {
                return Err(Error::ShapeMismatch {
                    op: "adam",
                    lhs: store.get(id).dims().to_vec(),
                    rhs: grad.dims().to_vec(),
                });
            }
        }
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let lit = T::from_f64_lossy;
        let (b1, b2) = (lit(c.beta1), lit(c.beta2));
        let (one_b1, one_b2) = (lit(1.0 - c.beta1), lit(1.0 - c.beta2));
        let corr1 = lit(1.0 - c.beta1.powi(t));
        let corr2 = lit(1.0 - c.beta2.powi(t));
        let (lr, eps) = (lit(c.lr), lit(c.epsilon));
        for (i, id) in store.ids().enumerate().collect::<Vec<_>>() {
            let g = grads[i].data();
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            let theta = store.get_mut(id).data_mut();
            for k in 0..theta.len() {
                m[k] = b1 * m[k] + one_b1 * g[k];
                v[k] = b2 * v[k] + one_b2 * g[k] * g[k];
                let mh = m[k] / corr1;
                let vh = v[k] / corr2;
                theta[k] = theta[k] - lr * mh / (vh.sqrt() + eps);
            }
        }
        Ok(())
    }
}
