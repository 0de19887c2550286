use super::expect_channels;
use crate::error::Result;
use crate::nn::{BatchNormParams, Bound, ParamStore, SeparableConvParams};
use crate::scalar::Scalar;
use crate::tensor::{Graph, Var};

/// Separable layer: BN -> ReLU -> 3x3 depthwise-separable conv producing
/// `growth` channels.
#[derive(Debug, Clone)]
pub struct SlUnit {
    pub bn: BatchNormParams,
    pub sep: SeparableConvParams,
}

impl SlUnit {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, name: &str, in_ch: usize, growth: usize) -> Result<Self> {
        Ok(Self {
            bn: BatchNormParams::new(store, &format!("{name}.bn"), in_ch)?,
            sep: SeparableConvParams::new(store, &format!("{name}.sep"), in_ch, growth, 3)?,
        })
    }

    pub fn in_channels(&self) -> usize {
        self.bn.channels
    }

    pub fn growth(&self) -> usize {
        self.sep.out_ch
    }

    pub fn forward<T: Scalar>(&self, g: &Graph<T>, p: &Bound, x: Var) -> Result<Var> {
        expect_channels(g, x, "sl", self.in_channels())?;
        let h = self.bn.forward(g, p, x)?;
        let h = g.relu(h);
        self.sep.forward(g, p, h)
    }
}
