//! Parameter-holding layers: dense/dilated convolution, depthwise-separable
//! convolution and batch normalization.

use super::batchnorm::BN_EPSILON;
use super::conv::Conv2dOptions;
use super::params::{Bound, ParamId, ParamStore};
use crate::error::Result;
use crate::scalar::Scalar;
use crate::tensor::{Graph, Var};

/// Weight `[out, in, kh, kw]`, optional bias `[out]`, same padding.
#[derive(Debug, Clone)]
pub struct ConvParams {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: (usize, usize),
    pub stride: usize,
    pub dilation: usize,
}

impl ConvParams {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        in_ch: usize,
        out_ch: usize,
        kernel: (usize, usize),
        stride: usize,
        dilation: usize,
        bias: bool,
    ) -> Result<Self> {
        let fan_in = in_ch * kernel.0 * kernel.1;
        let weight = store.he_uniform(format!("{name}.weight"), &[out_ch, in_ch, kernel.0, kernel.1], fan_in)?;
        let bias = if bias {
            Some(store.filled(format!("{name}.bias"), &[out_ch], 0.0)?)
        } else {
            None
        };
        Ok(Self {
            weight,
            bias,
            in_ch,
            out_ch,
            kernel,
            stride,
            dilation,
        })
    }

    /// Square `k x k`, stride 1, with bias.
    pub fn square<T: Scalar>(store: &mut ParamStore<T>, name: &str, in_ch: usize, out_ch: usize, k: usize) -> Result<Self> {
        Self::new(store, name, in_ch, out_ch, (k, k), 1, 1, true)
    }

    pub fn forward<T: Scalar>(&self, g: &Graph<T>, p: &Bound, x: Var) -> Result<Var> {
        let opts = Conv2dOptions {
            stride: self.stride,
            dilation: self.dilation,
            depthwise: false,
        };
        g.conv2d(x, p.var(self.weight), self.bias.map(|b| p.var(b)), opts)
    }
}

/// Depthwise `[in, 1, k, k]` followed by pointwise `[out, in, 1, 1]` and a
/// bias. Stride is always 1.
#[derive(Debug, Clone)]
pub struct SeparableConvParams {
    pub depthwise: ParamId,
    pub pointwise: ParamId,
    pub bias: ParamId,
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
}

impl SeparableConvParams {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, name: &str, in_ch: usize, out_ch: usize, kernel: usize) -> Result<Self> {
        let depthwise = store.he_uniform(format!("{name}.depthwise"), &[in_ch, 1, kernel, kernel], kernel * kernel)?;
        let pointwise = store.he_uniform(format!("{name}.pointwise"), &[out_ch, in_ch, 1, 1], in_ch)?;
        let bias = store.filled(format!("{name}.bias"), &[out_ch], 0.0)?;
        Ok(Self {
            depthwise,
            pointwise,
            bias,
            in_ch,
            out_ch,
            kernel,
        })
    }

    pub fn forward<T: Scalar>(&self, g: &Graph<T>, p: &Bound, x: Var) -> Result<Var> {
        g.separable_conv2d(x, p.var(self.depthwise), p.var(self.pointwise), Some(p.var(self.bias)))
    }

    pub fn param_count(&self) -> usize {
        self.in_ch * self.kernel * self.kernel + self.in_ch * self.out_ch + self.out_ch
    }
}

#[derive(Debug, Clone)]
pub struct BatchNormParams {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub channels: usize,
    pub epsilon: f64,
}

impl BatchNormParams {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, name: &str, channels: usize) -> Result<Self> {
        Ok(Self {
            gamma: store.filled(format!("{name}.gamma"), &[channels], 1.0)?,
            beta: store.filled(format!("{name}.beta"), &[channels], 0.0)?,
            channels,
            epsilon: BN_EPSILON,
        })
    }

    pub fn forward<T: Scalar>(&self, g: &Graph<T>, p: &Bound, x: Var) -> Result<Var> {
        g.batchnorm(x, p.var(self.gamma), p.var(self.beta), self.epsilon)
    }
}

impl<T: Scalar> Graph<T> {
    /// Depthwise convolution then a 1x1 pointwise convolution with bias.
    pub fn separable_conv2d(&self, x: Var, depthwise: Var, pointwise: Var, bias: Option<Var>) -> Result<Var> {
        let dw = self.conv2d(x, depthwise, None, Conv2dOptions::depthwise())?;
        self.conv2d(dw, pointwise, bias, Conv2dOptions::default())
    }
}
