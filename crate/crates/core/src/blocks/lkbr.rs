use super::expect_channels;
use crate::error::{Error, Result};
use crate::nn::{Bound, ConvParams, ParamStore};
use crate::scalar::Scalar;
use crate::tensor::{Graph, Var};

/// Internal width of the large-kernel unit.
pub const LKBR_WIDTH: usize = 21;

/// Large-kernel unit with boundary refinement.
///
/// Two factorised `k x k` paths, `(k x 1 -> 1 x k)` and `(1 x k -> k x 1)`,
/// are summed; the sum `s` is refined as `s + conv3(relu(conv3(s)))`.
#[derive(Debug, Clone)]
pub struct LkbrUnit {
    pub col_row: (ConvParams, ConvParams),
    pub row_col: (ConvParams, ConvParams),
    pub refine: (ConvParams, ConvParams),
    pub in_ch: usize,
    pub width: usize,
    pub kernel: usize,
}

impl LkbrUnit {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, name: &str, in_ch: usize, width: usize, kernel: usize) -> Result<Self> {
        if kernel == 0 || width == 0 {
            return Err(Error::Config(format!("{name}: kernel and width must be positive")));
        }
        let conv = |store: &mut ParamStore<T>, part: &str, cin: usize, k: (usize, usize)| {
            ConvParams::new(store, &format!("{name}.{part}"), cin, width, k, 1, 1, true)
        };
        Ok(Self {
            col_row: (conv(store, "a_col", in_ch, (kernel, 1))?, conv(store, "a_row", width, (1, kernel))?),
            row_col: (conv(store, "b_row", in_ch, (1, kernel))?, conv(store, "b_col", width, (kernel, 1))?),
            refine: (conv(store, "br1", width, (3, 3))?, conv(store, "br2", width, (3, 3))?),
            in_ch,
            width,
            kernel,
        })
    }

    /// Sum of the two factorised large-kernel paths.
    pub fn large_kernel_sum<T: Scalar>(&self, g: &Graph<T>, p: &Bound, x: Var) -> Result<Var> {
        expect_channels(g, x, "lkbr", self.in_ch)?;
        let a = self.col_row.1.forward(g, p, self.col_row.0.forward(g, p, x)?)?;
        let b = self.row_col.1.forward(g, p, self.row_col.0.forward(g, p, x)?)?;
        g.add(a, b)
    }

    pub fn forward<T: Scalar>(&self, g: &Graph<T>, p: &Bound, x: Var) -> Result<Var> {
        let s = self.large_kernel_sum(g, p, x)?;
        let r = g.relu(self.refine.0.forward(g, p, s)?);
        let r = self.refine.1.forward(g, p, r)?;
        g.add(s, r)
    }
}
