use super::expect_channels;
use crate::error::{Error, Result};
use crate::nn::{Bound, ConvParams, ParamStore};
use crate::scalar::Scalar;
use crate::tensor::{Graph, Var};

/// Atrous pyramid run twice: once with the rates in order and once with them
/// reversed. All branch outputs are concatenated and fused by a 1x1 conv.
///
/// Under same padding every branch keeps the spatial dims, so a rate larger
/// than the feature map is legal; its off-centre taps only read padding.
#[derive(Debug, Clone)]
pub struct CrasppUnit {
    pub rates: Vec<usize>,
    pub branches: Vec<ConvParams>,
    pub fuse: ConvParams,
    pub in_ch: usize,
    pub width: usize,
    pub out_ch: usize,
}

impl CrasppUnit {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        in_ch: usize,
        width: usize,
        out_ch: usize,
        rates: &[usize],
    ) -> Result<Self> {
        if rates.is_empty() || rates.contains(&0) {
            return Err(Error::Config(format!("{name}: atrous rates must be non-empty and positive, got {rates:?}")));
        }
        let all = Self::branch_rates(rates);
        let branches = all
            .iter()
            .enumerate()
            .map(|(i, &r)| ConvParams::new(store, &format!("{name}.branch{i}"), in_ch, width, (3, 3), 1, r, true))
            .collect::<Result<Vec<_>>>()?;
        let fuse = ConvParams::square(store, &format!("{name}.fuse"), all.len() * width, out_ch, 1)?;
        Ok(Self {
            rates: rates.to_vec(),
            branches,
            fuse,
            in_ch,
            width,
            out_ch,
        })
    }

    /// Rates in branch order: forward list followed by its reverse.
    pub fn branch_rates(rates: &[usize]) -> Vec<usize> {
        rates.iter().chain(rates.iter().rev()).copied().collect()
    }

    pub fn concat_channels(&self) -> usize {
        self.branches.len() * self.width
    }

    /// Concatenated branch outputs before fusion.
    pub fn branch_concat<T: Scalar>(&self, g: &Graph<T>, p: &Bound, x: Var) -> Result<Var> {
        expect_channels(g, x, "craspp", self.in_ch)?;
        let outs = self
            .branches
            .iter()
            .map(|b| b.forward(g, p, x))
            .collect::<Result<Vec<_>>>()?;
        g.concat(&outs, 1)
    }

    pub fn forward<T: Scalar>(&self, g: &Graph<T>, p: &Bound, x: Var) -> Result<Var> {
        let cat = self.branch_concat(g, p, x)?;
        self.fuse.forward(g, p, cat)
    }
}
