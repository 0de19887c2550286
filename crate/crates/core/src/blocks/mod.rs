//! Network building blocks: separable layers, fully dense blocks, the
//! full-resolution separable residual unit, concatenated reversed ASPP,
//! large-kernel boundary refinement, and the down/up transitions.

mod craspp;
mod fdb;
mod frsr;
mod lkbr;
mod sl;
mod transition;

pub use craspp::CrasppUnit;
pub use fdb::FdbUnit;
pub use frsr::{FrsrSpec, FrsrUnit};
pub use lkbr::{LkbrUnit, LKBR_WIDTH};
pub use sl::SlUnit;
pub use transition::{DownTransition, UpTransition};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Graph, Var};

pub(crate) fn expect_channels<T: Scalar>(g: &Graph<T>, x: Var, op: &'static str, expected: usize) -> Result<()> {
    let got = g.dims(x).get(1).copied().unwrap_or(0);
    if got != expected {
        return Err(Error::ChannelMismatch { op, expected, got });
    }
    Ok(())
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::ParamStore;
    use crate::tensor::Tensor;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn spatial_dims_contract(c in 1usize..4, hh in 1usize..5, ww in 1usize..5, n in 1usize..3) {
            let (h, w) = (2 * hh, 2 * ww);
            let mut store = ParamStore::<f32>::new(9);
            let sl = SlUnit::new(&mut store, "sl", c, 2).unwrap();
            let fdb = FdbUnit::new(&mut store, "fdb", c, n, 2, true, true).unwrap();
            let frsr = FrsrUnit::new(&mut store, "frsr", FrsrSpec::for_stage(1, c, 2, n)).unwrap();
            let craspp = CrasppUnit::new(&mut store, "craspp", c, 2, c, &[1, 3]).unwrap();
            let lkbr = LkbrUnit::new(&mut store, "lkbr", c, 3, 5).unwrap();
            let dos = DownTransition::new(&mut store, "dos", c, c, 1).unwrap();
            let ups = UpTransition::new(&mut store, "ups", c, c).unwrap();
            let g = Graph::new();
            let p = store.bind(&g);
            let x = g.constant(Tensor::uniform(&[2, c, h, w], -1.0, 1.0, 3).unwrap());
            let spatial = |v: Var| { let d = g.dims(v); (d[2], d[3]) };
            prop_assert_eq!(spatial(sl.forward(&g, &p, x).unwrap()), (h, w));
            prop_assert_eq!(spatial(fdb.forward(&g, &p, x).unwrap()), (h, w));
            prop_assert_eq!(spatial(frsr.forward(&g, &p, x).unwrap()), (h, w));
            prop_assert_eq!(spatial(craspp.forward(&g, &p, x).unwrap()), (h, w));
            prop_assert_eq!(spatial(lkbr.forward(&g, &p, x).unwrap()), (h, w));
            prop_assert_eq!(spatial(dos.forward(&g, &p, x).unwrap()), (hh, ww));
            prop_assert_eq!(spatial(ups.forward(&g, &p, x).unwrap()), (2 * h, 2 * w));
        }
    }
}
