use super::{expect_channels, SlUnit};
use crate::error::{Error, Result};
use crate::nn::{Bound, ParamStore};
use crate::scalar::Scalar;
use crate::tensor::{Graph, Var};

/// Fully dense block.
///
/// Layer `i` sees the channel concatenation of the block input and every
/// earlier layer output. With `concat_input` the block returns
/// `concat(input, outputs...)` (`in + n*g` channels), otherwise only the
/// layer outputs (`n*g`). With `residual` (only meaningful together with
/// `concat_input`) the input is also added onto the leading `in` channels.
#[derive(Debug, Clone)]
pub struct FdbUnit {
    pub layers: Vec<SlUnit>,
    pub in_ch: usize,
    pub growth: usize,
    pub concat_input: bool,
    pub residual: bool,
}

impl FdbUnit {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        in_ch: usize,
        layers: usize,
        growth: usize,
        concat_input: bool,
        residual: bool,
    ) -> Result<Self> {
        if layers == 0 && !concat_input {
            return Err(Error::Config(format!("{name}: a block without input concatenation needs at least one layer")));
        }
        let layers = (0..layers)
            .map(|i| SlUnit::new(store, &format!("{name}.sl{i}"), in_ch + i * growth, growth))
            .collect::<Result<_>>()?;
        Ok(Self {
            layers,
            in_ch,
            growth,
            concat_input,
            residual: residual && concat_input,
        })
    }

    pub fn out_channels(&self) -> usize {
        let new = self.layers.len() * self.growth;
        if self.concat_input {
            self.in_ch + new
        } else {
            new
        }
    }

    pub fn forward<T: Scalar>(&self, g: &Graph<T>, p: &Bound, x: Var) -> Result<Var> {
        expect_channels(g, x, "fdb", self.in_ch)?;
        let mut features = vec![x];
        for layer in &self.layers {
            let input = if features.len() == 1 { x } else { g.concat(&features, 1)? };
            features.push(layer.forward(g, p, input)?);
        }
        if self.concat_input {
            if self.residual {
                features[0] = g.add(x, x)?;
            }
            if features.len() == 1 {
                return Ok(features[0]);
            }
            g.concat(&features, 1)
        } else if features.len() == 2 {
            Ok(features[1])
        } else {
            g.concat(&features[1..], 1)
        }
    }
}
