//! 2x2/stride-2 max pooling and nearest-neighbour x2 upsampling.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Graph, Tensor, Var};

fn spatial(op: &'static str, dims: &[usize]) -> Result<(usize, usize, usize, usize)> {
    match *dims {
        [n, c, h, w] => Ok((n, c, h, w)),
        _ => Err(Error::invalid(op, format!("expected [N, C, H, W], got {dims:?}"))),
    }
}

impl<T: Scalar> Graph<T> {
    /// Max over non-overlapping 2x2 windows. Ties go to the first element of
    /// the window in row-major order, and so does the gradient.
    pub fn maxpool2(&self, x: Var) -> Result<Var> {
        let v = self.value(x);
        let (n, c, h, w) = spatial("maxpool2", v.dims())?;
        if h % 2 != 0 || w % 2 != 0 {
            return Err(Error::OddSpatial { op: "maxpool2", h, w });
        }
        let (ho, wo) = (h / 2, w / 2);
        let src = v.data();
        let mut out = Vec::with_capacity(n * c * ho * wo);
        let mut argmax = Vec::with_capacity(n * c * ho * wo);
        for plane in 0..n * c {
            let base = plane * h * w;
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut best = base + 2 * oy * w + 2 * ox;
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let at = base + (2 * oy + dy) * w + 2 * ox + dx;
                        if src[at] > src[best] {
                            best = at;
                        }
                    }
                    out.push(src[best]);
                    argmax.push(best);
                }
            }
        }
        let in_dims = v.dims().to_vec();
        Ok(self.record(
            &[x],
            Tensor::from_parts(vec![n, c, ho, wo], out),
            Box::new(move |g, _, _, _| {
                let mut gx = vec![T::zero(); in_dims.iter().product()];
                for (&at, &d) in argmax.iter().zip(g.data()) {
                    gx[at] = gx[at] + d;
                }
                vec![Some(Tensor::from_parts(in_dims.clone(), gx))]
            }),
        ))
    }

    /// Replicates each pixel into a 2x2 block.
    pub fn upsample_nn2(&self, x: Var) -> Result<Var> {
        let v = self.value(x);
        let (n, c, h, w) = spatial("upsample_nn2", v.dims())?;
        let (ho, wo) = (2 * h, 2 * w);
        let src = v.data();
        let mut out = vec![T::zero(); n * c * ho * wo];
        for plane in 0..n * c {
            for y in 0..ho {
                let row = &src[plane * h * w + (y / 2) * w..plane * h * w + (y / 2 + 1) * w];
                let dst = &mut out[plane * ho * wo + y * wo..plane * ho * wo + (y + 1) * wo];
                for (xo, d) in dst.iter_mut().enumerate() {
                    *d = row[xo / 2];
                }
            }
        }
        let in_dims = v.dims().to_vec();
        Ok(self.record(
            &[x],
            Tensor::from_parts(vec![n, c, ho, wo], out),
            Box::new(move |g, _, _, _| {
                let gd = g.data();
                let mut gx = vec![T::zero(); n * c * h * w];
                for plane in 0..n * c {
                    for y in 0..ho {
                        for xo in 0..wo {
                            let at = plane * h * w + (y / 2) * w + xo / 2;
                            gx[at] = gx[at] + gd[plane * ho * wo + y * wo + xo];
                        }
                    }
                }
                vec![Some(Tensor::from_parts(in_dims.clone(), gx))]
            }),
        ))
    }
}
