//! Batch normalization with current-batch statistics in every phase.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Graph, Tensor, Var};

pub const BN_EPSILON: f64 = 1e-5;

impl<T: Scalar> Graph<T> {
    /// Normalizes `x: [N, C, ...]` per channel over every other axis using
    /// the biased batch variance, then applies `gamma * x_hat + beta`.
    pub fn batchnorm(&self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let xv = self.value(x);
        let dims = xv.dims().to_vec();
        if dims.len() < 2 {
            return Err(Error::invalid("batchnorm", format!("expected [N, C, ...], got {dims:?}")));
        }
        let (n, c) = (dims[0], dims[1]);
        let inner: usize = dims[2..].iter().product();
        let m = n * inner;
        if m < 2 {
            return Err(Error::DegenerateBatchNorm(m));
        }
        for p in [gamma, beta] {
            let d = self.dims(p);
            if d != [c] {
                return Err(Error::ShapeMismatch {
                    op: "batchnorm",
                    lhs: vec![c],
                    rhs: d,
                });
            }
        }
        let (gv, bv) = (self.value(gamma), self.value(beta));
        let data = xv.data();
        let mf = T::from_usize(m).expect("batch size fits the scalar type");
        let epsf = T::from_f64_lossy(eps);

        let mut mean = vec![T::zero(); c];
        let mut inv_std = vec![T::zero(); c];
        for ch in 0..c {
            let chunks = (0..n).map(|b| &data[(b * c + ch) * inner..(b * c + ch + 1) * inner]);
            let mu = chunks.clone().flatten().fold(T::zero(), |a, &v| a + v) / mf;
            let var = chunks.flatten().fold(T::zero(), |a, &v| a + (v - mu) * (v - mu)) / mf;
            mean[ch] = mu;
            inv_std[ch] = T::one() / (var + epsf).sqrt();
        }
        let mut out = vec![T::zero(); data.len()];
        for b in 0..n {
            for ch in 0..c {
                let s = (b * c + ch) * inner;
                let (g, be, mu, is) = (gv.data()[ch], bv.data()[ch], mean[ch], inv_std[ch]);
                for i in s..s + inner {
                    out[i] = g * (data[i] - mu) * is + be;
                }
            }
        }

        Ok(self.record(
            &[x, gamma, beta],
            Tensor::from_parts(dims.clone(), out),
            Box::new(move |g, inputs, _, needs| {
                let (x, gamma) = (inputs[0].data(), inputs[1].data());
                let dy = g.data();
                let mut dgamma = vec![T::zero(); c];
                let mut dbeta = vec![T::zero(); c];
                for b in 0..n {
                    for ch in 0..c {
                        let s = (b * c + ch) * inner;
                        for i in s..s + inner {
                            let xhat = (x[i] - mean[ch]) * inv_std[ch];
                            dbeta[ch] = dbeta[ch] + dy[i];
                            dgamma[ch] = dgamma[ch] + dy[i] * xhat;
                        }
                    }
                }
                let dx = needs[0].then(|| {
                    let mut dx = vec![T::zero(); x.len()];
                    for b in 0..n {
                        for ch in 0..c {
                            let s = (b * c + ch) * inner;
                            let k = gamma[ch] * inv_std[ch];
                            let mean_dy = dbeta[ch] / mf;
                            let mean_dy_xhat = dgamma[ch] / mf;
                            for i in s..s + inner {
                                let xhat = (x[i] - mean[ch]) * inv_std[ch];
                                dx[i] = k * (dy[i] - mean_dy - xhat * mean_dy_xhat);
                            }
                        }
                    }
                    Tensor::from_parts(dims.clone(), dx)
                });
                vec![
                    dx,
                    needs[1].then(|| Tensor::from_parts(vec![c], dgamma)),
                    needs[2].then(|| Tensor::from_parts(vec![c], dbeta)),
                ]
            }),
        ))
    }
}
