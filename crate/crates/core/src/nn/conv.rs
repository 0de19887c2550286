//! Same-padded 2-D convolution: dense (im2col + GEMM) and depthwise.
//!
//! Padding keeps `H' = ceil(H / stride)`; when the total padding along an
//! axis is odd the extra zero goes on the bottom/right.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Graph, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv2dOptions {
    pub stride: usize,
    pub dilation: usize,
    /// `true` for a depthwise convolution (one filter per input channel).
    pub depthwise: bool,
}

impl Default for Conv2dOptions {
    fn default() -> Self {
        Self {
            stride: 1,
            dilation: 1,
            depthwise: false,
        }
    }
}

impl Conv2dOptions {
    pub fn dilated(dilation: usize) -> Self {
        Self {
            dilation,
            ..Self::default()
        }
    }

    pub fn depthwise() -> Self {
        Self {
            depthwise: true,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Geometry {
    n: usize,
    cin: usize,
    h: usize,
    w: usize,
    cout: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    dilation: usize,
    ho: usize,
    wo: usize,
    pad_top: usize,
    pad_left: usize,
}

/// Leading (top/left) zero padding for a same-padded axis.
pub fn same_padding(len: usize, k: usize, stride: usize, dilation: usize) -> (usize, usize) {
    let out = len.div_ceil(stride);
    let extent = (k - 1) * dilation + 1;
    let total = ((out - 1) * stride + extent).saturating_sub(len);
    (total / 2, total - total / 2)
}

impl Geometry {
    fn new(x: &[usize], w: &[usize], opts: Conv2dOptions) -> Result<Self> {
        if x.len() != 4 || w.len() != 4 {
            return Err(Error::invalid(
                "conv2d",
                format!("expected rank-4 input and weight, got {x:?} and {w:?}"),
            ));
        }
        if opts.stride == 0 || opts.dilation == 0 {
            return Err(Error::invalid("conv2d", "stride and dilation must be positive"));
        }
        let (n, cin, h, wd) = (x[0], x[1], x[2], x[3]);
        let (cout, wcin, kh, kw) = (w[0], w[1], w[2], w[3]);
        if h == 0 || wd == 0 || kh == 0 || kw == 0 {
            return Err(Error::invalid("conv2d", "empty spatial or kernel dims"));
        }
        if opts.depthwise {
            if wcin != 1 || cout != cin {
                return Err(Error::ChannelMismatch {
                    op: "depthwise_conv2d",
                    expected: cout,
                    got: cin,
                });
            }
        } else if wcin != cin {
            return Err(Error::ChannelMismatch {
                op: "conv2d",
                expected: wcin,
                got: cin,
            });
        }
        let (pad_top, _) = same_padding(h, kh, opts.stride, opts.dilation);
        let (pad_left, _) = same_padding(wd, kw, opts.stride, opts.dilation);
        Ok(Self {
            n,
            cin,
            h,
            w: wd,
            cout,
            kh,
            kw,
            stride: opts.stride,
            dilation: opts.dilation,
            ho: h.div_ceil(opts.stride),
            wo: wd.div_ceil(opts.stride),
            pad_top,
            pad_left,
        })
    }

    fn plane_in(&self) -> usize {
        self.h * self.w
    }

    fn plane_out(&self) -> usize {
        self.ho * self.wo
    }

    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1
    }

    /// Output indices `o` in `[lo, hi)` for which `o * stride + offset` lands
    /// inside `[0, len)`.
    fn valid(&self, offset: isize, len: usize, out_len: usize) -> (usize, usize) {
        let s = self.stride as isize;
        let lo = if offset >= 0 { 0 } else { ((-offset) + s - 1) / s };
        let hi = if (len as isize) - offset <= 0 {
            0
        } else {
            ((len as isize - 1 - offset) / s + 1).min(out_len as isize)
        };
        (lo.max(0) as usize, hi.max(lo).max(0) as usize)
    }

    fn row_offset(&self, ki: usize) -> isize {
        (ki * self.dilation) as isize - self.pad_top as isize
    }

    fn col_offset(&self, kj: usize) -> isize {
        (kj * self.dilation) as isize - self.pad_left as isize
    }
}

/// Unfolds one image `[cin, h, w]` into `[cin*kh*kw, ho*wo]`.
fn im2col<T: Scalar>(geo: &Geometry, x: &[T], col: &mut [T]) {
    let p = geo.plane_out();
    col.iter_mut().for_each(|v| *v = T::zero());
    for c in 0..geo.cin {
        let plane = &x[c * geo.plane_in()..(c + 1) * geo.plane_in()];
        for ki in 0..geo.kh {
            let roff = geo.row_offset(ki);
            let (ylo, yhi) = geo.valid(roff, geo.h, geo.ho);
            for kj in 0..geo.kw {
                let coff = geo.col_offset(kj);
                let (xlo, xhi) = geo.valid(coff, geo.w, geo.wo);
                let row = ((c * geo.kh + ki) * geo.kw + kj) * p;
                for oy in ylo..yhi {
                    let iy = (oy * geo.stride) as isize + roff;
                    let src = &plane[iy as usize * geo.w..(iy as usize + 1) * geo.w];
                    let dst = &mut col[row + oy * geo.wo..row + (oy + 1) * geo.wo];
                    for ox in xlo..xhi {
                        dst[ox] = src[((ox * geo.stride) as isize + coff) as usize];
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulates `[cin*kh*kw, ho*wo]` into `[cin, h, w]`.
fn col2im<T: Scalar>(geo: &Geometry, col: &[T], dx: &mut [T]) {
    let p = geo.plane_out();
    for c in 0..geo.cin {
        let plane = &mut dx[c * geo.plane_in()..(c + 1) * geo.plane_in()];
        for ki in 0..geo.kh {
            let roff = geo.row_offset(ki);
            let (ylo, yhi) = geo.valid(roff, geo.h, geo.ho);
            for kj in 0..geo.kw {
                let coff = geo.col_offset(kj);
                let (xlo, xhi) = geo.valid(coff, geo.w, geo.wo);
                let row = ((c * geo.kh + ki) * geo.kw + kj) * p;
                for oy in ylo..yhi {
                    let iy = ((oy * geo.stride) as isize + roff) as usize;
                    let src = &col[row + oy * geo.wo..row + (oy + 1) * geo.wo];
                    for ox in xlo..xhi {
                        let ix = ((ox * geo.stride) as isize + coff) as usize;
                        plane[iy * geo.w + ix] = plane[iy * geo.w + ix] + src[ox];
                    }
                }
            }
        }
    }
}

fn dense_forward<T: Scalar>(geo: &Geometry, x: &[T], w: &[T], bias: Option<&[T]>) -> Vec<T> {
    let (p, k) = (geo.plane_out(), geo.cin * geo.kh * geo.kw);
    let mut out = vec![T::zero(); geo.n * geo.cout * p];
    let mut col = if geo.is_pointwise() { Vec::new() } else { vec![T::zero(); k * p] };
    for b in 0..geo.n {
        let xb = &x[b * geo.cin * geo.plane_in()..(b + 1) * geo.cin * geo.plane_in()];
        let cols: &[T] = if geo.is_pointwise() {
            xb
        } else {
            im2col(geo, xb, &mut col);
            &col
        };
        let ob = &mut out[b * geo.cout * p..(b + 1) * geo.cout * p];
        if let Some(bias) = bias {
            for (co, chunk) in ob.chunks_mut(p).enumerate() {
                chunk.iter_mut().for_each(|v| *v = bias[co]);
            }
        }
        T::gemm(
            geo.cout,
            k,
            p,
            T::one(),
            w,
            (k as isize, 1),
            cols,
            (p as isize, 1),
            T::one(),
            ob,
            (p as isize, 1),
        );
    }
    out
}

fn depthwise_forward<T: Scalar>(geo: &Geometry, x: &[T], w: &[T], bias: Option<&[T]>) -> Vec<T> {
    let p = geo.plane_out();
    let mut out = vec![T::zero(); geo.n * geo.cout * p];
    for b in 0..geo.n {
        for c in 0..geo.cin {
            let plane = &x[(b * geo.cin + c) * geo.plane_in()..(b * geo.cin + c + 1) * geo.plane_in()];
            let o = &mut out[(b * geo.cin + c) * p..(b * geo.cin + c + 1) * p];
            if let Some(bias) = bias {
                o.iter_mut().for_each(|v| *v = bias[c]);
            }
            for ki in 0..geo.kh {
                let roff = geo.row_offset(ki);
                let (ylo, yhi) = geo.valid(roff, geo.h, geo.ho);
                for kj in 0..geo.kw {
                    let coff = geo.col_offset(kj);
                    let (xlo, xhi) = geo.valid(coff, geo.w, geo.wo);
                    let wv = w[(c * geo.kh + ki) * geo.kw + kj];
                    for oy in ylo..yhi {
                        let iy = ((oy * geo.stride) as isize + roff) as usize;
                        let src = &plane[iy * geo.w..(iy + 1) * geo.w];
                        let dst = &mut o[oy * geo.wo..(oy + 1) * geo.wo];
                        for ox in xlo..xhi {
                            let ix = ((ox * geo.stride) as isize + coff) as usize;
                            dst[ox] = dst[ox] + wv * src[ix];
                        }
                    }
                }
            }
        }
    }
    out
}

fn bias_grad<T: Scalar>(geo: &Geometry, dy: &[T]) -> Vec<T> {
    let p = geo.plane_out();
    let mut db = vec![T::zero(); geo.cout];
    for b in 0..geo.n {
        for (co, d) in db.iter_mut().enumerate() {
            let start = (b * geo.cout + co) * p;
            *d = dy[start..start + p].iter().fold(*d, |acc, &v| acc + v);
        }
    }
    db
}

fn dense_backward<T: Scalar>(
    geo: &Geometry,
    x: &[T],
    w: &[T],
    dy: &[T],
    need_x: bool,
    need_w: bool,
) -> (Option<Vec<T>>, Option<Vec<T>>) {
    let (p, k) = (geo.plane_out(), geo.cin * geo.kh * geo.kw);
    let mut dx = need_x.then(|| vec![T::zero(); x.len()]);
    let mut dw = need_w.then(|| vec![T::zero(); w.len()]);
    let mut col = if geo.is_pointwise() { Vec::new() } else { vec![T::zero(); k * p] };
    let mut dcol = if geo.is_pointwise() || !need_x { Vec::new() } else { vec![T::zero(); k * p] };
    let in_len = geo.cin * geo.plane_in();
    for b in 0..geo.n {
        let dyb = &dy[b * geo.cout * p..(b + 1) * geo.cout * p];
        if let Some(dw) = dw.as_mut() {
            let xb = &x[b * in_len..(b + 1) * in_len];
            let cols: &[T] = if geo.is_pointwise() {
                xb
            } else {
                im2col(geo, xb, &mut col);
                &col
            };
            // dW[cout, k] += dY[cout, p] * cols^T
            T::gemm(
                geo.cout,
                p,
                k,
                T::one(),
                dyb,
                (p as isize, 1),
                cols,
                (1, p as isize),
                T::one(),
                dw,
                (k as isize, 1),
            );
        }
        if let Some(dx) = dx.as_mut() {
            let dxb = &mut dx[b * in_len..(b + 1) * in_len];
            if geo.is_pointwise() {
                T::gemm(
                    k,
                    geo.cout,
                    p,
                    T::one(),
                    w,
                    (1, k as isize),
                    dyb,
                    (p as isize, 1),
                    T::zero(),
                    dxb,
                    (p as isize, 1),
                );
            } else {
                T::gemm(
                    k,
                    geo.cout,
                    p,
                    T::one(),
                    w,
                    (1, k as isize),
                    dyb,
                    (p as isize, 1),
                    T::zero(),
                    &mut dcol,
                    (p as isize, 1),
                );
                col2im(geo, &dcol, dxb);
            }
        }
    }
    (dx, dw)
}

fn depthwise_backward<T: Scalar>(
    geo: &Geometry,
    x: &[T],
    w: &[T],
    dy: &[T],
    need_x: bool,
    need_w: bool,
) -> (Option<Vec<T>>, Option<Vec<T>>) {
    let p = geo.plane_out();
    let mut dx = vec![T::zero(); if need_x { x.len() } else { 0 }];
    let mut dw = vec![T::zero(); if need_w { w.len() } else { 0 }];
    for b in 0..geo.n {
        for c in 0..geo.cin {
            let base_in = (b * geo.cin + c) * geo.plane_in();
            let d = &dy[(b * geo.cin + c) * p..(b * geo.cin + c + 1) * p];
            for ki in 0..geo.kh {
                let roff = geo.row_offset(ki);
                let (ylo, yhi) = geo.valid(roff, geo.h, geo.ho);
                for kj in 0..geo.kw {
                    let coff = geo.col_offset(kj);
                    let (xlo, xhi) = geo.valid(coff, geo.w, geo.wo);
                    let widx = (c * geo.kh + ki) * geo.kw + kj;
                    let wv = w[widx];
                    let mut acc = T::zero();
                    for oy in ylo..yhi {
                        let iy = ((oy * geo.stride) as isize + roff) as usize;
                        for ox in xlo..xhi {
                            let ix = ((ox * geo.stride) as isize + coff) as usize;
                            let g = d[oy * geo.wo + ox];
                            let at = base_in + iy * geo.w + ix;
                            if need_x {
                                dx[at] = dx[at] + wv * g;
                            }
                            acc = acc + x[at] * g;
                        }
                    }
                    if need_w {
                        dw[widx] = dw[widx] + acc;
                    }
                }
            }
        }
    }
    (need_x.then_some(dx), need_w.then_some(dw))
}

impl<T: Scalar> Graph<T> {
    /// `x: [N, Cin, H, W]`, `weight: [Cout, Cin, kh, kw]` (or `[C, 1, kh, kw]`
    /// when depthwise), optional `bias: [Cout]`.
    pub fn conv2d(&self, x: Var, weight: Var, bias: Option<Var>, opts: Conv2dOptions) -> Result<Var> {
        let (xv, wv) = (self.value(x), self.value(weight));
        let geo = Geometry::new(xv.dims(), wv.dims(), opts)?;
        let bv = bias.map(|b| self.value(b));
        if let Some(b) = &bv {
            if b.dims() != [geo.cout] {
                return Err(Error::ShapeMismatch {
                    op: "conv2d bias",
                    lhs: vec![geo.cout],
                    rhs: b.dims().to_vec(),
                });
            }
        }
        let bias_data = bv.as_ref().map(|b| b.data());
        let out = if opts.depthwise {
            depthwise_forward(&geo, xv.data(), wv.data(), bias_data)
        } else {
            dense_forward(&geo, xv.data(), wv.data(), bias_data)
        };
        let out = Tensor::from_parts(vec![geo.n, geo.cout, geo.ho, geo.wo], out);
        let mut inputs = vec![x, weight];
        inputs.extend(bias);
        Ok(self.record(
            &inputs,
            out,
            Box::new(move |g, inputs, _, needs| {
                let (x, w) = (inputs[0], inputs[1]);
                let (dx, dw) = if opts.depthwise {
                    depthwise_backward(&geo, x.data(), w.data(), g.data(), needs[0], needs[1])
                } else {
                    dense_backward(&geo, x.data(), w.data(), g.data(), needs[0], needs[1])
                };
                let mut grads = vec![
                    dx.map(|d| Tensor::from_parts(x.dims().to_vec(), d)),
                    dw.map(|d| Tensor::from_parts(w.dims().to_vec(), d)),
                ];
                if inputs.len() == 3 {
                    grads.push(needs[2].then(|| Tensor::from_parts(vec![geo.cout], bias_grad(&geo, g.data()))));
                }
                grads
            }),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{gradcheck, project, GradCheckOptions};
    use proptest::prelude::*;

    /// Direct nested-loop convolution with explicit same padding.
    fn conv_oracle(x: &Tensor<f64>, w: &Tensor<f64>, b: Option<&Tensor<f64>>, stride: usize, dil: usize) -> Tensor<f64> {
        let [n, cin, h, wd]: [usize; 4] = x.dims().try_into().unwrap();
        let [cout, _, kh, kw]: [usize; 4] = w.dims().try_into().unwrap();
        let ho = (h + stride - 1) / stride;
        let wo = (wd + stride - 1) / stride;
        let pt = ((ho - 1) * stride + (kh - 1) * dil + 1).saturating_sub(h) / 2;
        let pl = ((wo - 1) * stride + (kw - 1) * dil + 1).saturating_sub(wd) / 2;
        let mut out = vec![0.0; n * cout * ho * wo];
        for bi in 0..n {
            for co in 0..cout {
                for oy in 0..ho {
                    for ox in 0..wo {
                        let mut acc = b.map(|b| b.data()[co]).unwrap_or(0.0);
                        for ci in 0..cin {
                            for ki in 0..kh {
                                for kj in 0..kw {
                                    let iy = (oy * stride + ki * dil) as isize - pt as isize;
                                    let ix = (ox * stride + kj * dil) as isize - pl as isize;
                                    if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < wd {
                                        acc += w.at(&[co, ci, ki, kj]) * x.at(&[bi, ci, iy as usize, ix as usize]);
                                    }
                                }
                            }
                        }
                        out[((bi * cout + co) * ho + oy) * wo + ox] = acc;
                    }
                }
            }
        }
        Tensor::from_vec(&[n, cout, ho, wo], out).unwrap()
    }

    fn run(x: &Tensor<f64>, w: &Tensor<f64>, b: Option<&Tensor<f64>>, opts: Conv2dOptions) -> Tensor<f64> {
        let g = Graph::new();
        let (xv, wv) = (g.constant(x.clone()), g.constant(w.clone()));
        let bv = b.map(|b| g.constant(b.clone()));
        g.value(g.conv2d(xv, wv, bv, opts).unwrap())
    }

    #[test]
    fn ones_kernel_counts_neighbours() {
        let x = Tensor::ones(&[1, 1, 3, 3]).unwrap();
        let w = Tensor::ones(&[1, 1, 3, 3]).unwrap();
        let y = run(&x, &w, None, Conv2dOptions::default());
        assert_eq!(y.at(&[0, 0, 1, 1]), 9.0);
        assert_eq!(y.at(&[0, 0, 0, 0]), 4.0);
        assert_eq!(y, conv_oracle(&x, &w, None, 1, 1));
    }

    #[test]
    fn delta_kernel_is_identity() {
        let x = Tensor::uniform(&[2, 3, 5, 6], -1.0, 1.0, 4).unwrap();
        let mut w = vec![0.0; 3 * 3 * 9];
        for c in 0..3 {
            w[(c * 3 + c) * 9 + 4] = 1.0;
        }
        let w = Tensor::from_vec(&[3, 3, 3, 3], w).unwrap();
        let b = Tensor::zeros(&[3]).unwrap();
        assert_eq!(run(&x, &w, Some(&b), Conv2dOptions::default()), x);
    }

    #[test]
    fn dilated_matches_oracle() {
        let x = Tensor::uniform(&[1, 2, 7, 7], -1.0, 1.0, 5).unwrap();
        let w = Tensor::uniform(&[3, 2, 3, 3], -1.0, 1.0, 6).unwrap();
        let b = Tensor::uniform(&[3], -1.0, 1.0, 7).unwrap();
        let opts = Conv2dOptions::dilated(2);
        let y = run(&x, &w, Some(&b), opts);
        assert!(y.max_abs_diff(&conv_oracle(&x, &w, Some(&b), 1, 2)) < 1e-6);
    }

    #[test]
    fn strided_and_rectangular_kernels_match_oracle() {
        let x = Tensor::uniform(&[2, 3, 9, 8], -1.0, 1.0, 8).unwrap();
        for (kh, kw, s, d) in [(3, 3, 2, 1), (7, 1, 1, 1), (1, 7, 1, 1), (2, 2, 1, 1), (1, 1, 1, 1), (3, 3, 1, 18), (5, 3, 3, 2)] {
            let w = Tensor::uniform(&[4, 3, kh, kw], -1.0, 1.0, 9).unwrap();
            let opts = Conv2dOptions { stride: s, dilation: d, depthwise: false };
            let y = run(&x, &w, None, opts);
            assert!(y.max_abs_diff(&conv_oracle(&x, &w, None, s, d)) < 1e-12, "{kh}x{kw} s{s} d{d}");
        }
    }

    #[test]
    fn depthwise_matches_per_channel_oracle() {
        let x = Tensor::uniform(&[2, 3, 6, 5], -1.0, 1.0, 10).unwrap();
        let w = Tensor::uniform(&[3, 1, 3, 3], -1.0, 1.0, 11).unwrap();
        let y = run(&x, &w, None, Conv2dOptions::depthwise());
        // depthwise == dense conv with a block-diagonal weight
        let mut dense = vec![0.0; 3 * 3 * 9];
        for c in 0..3 {
            for k in 0..9 {
                dense[(c * 3 + c) * 9 + k] = w.data()[c * 9 + k];
            }
        }
        let dense = Tensor::from_vec(&[3, 3, 3, 3], dense).unwrap();
        assert!(y.max_abs_diff(&conv_oracle(&x, &dense, None, 1, 1)) < 1e-12);
    }

    #[test]
    fn channel_mismatch_is_error() {
        let g = Graph::<f64>::new();
        let x = g.constant(Tensor::zeros(&[1, 2, 4, 4]).unwrap());
        let w = g.constant(Tensor::zeros(&[1, 3, 3, 3]).unwrap());
        assert!(matches!(
            g.conv2d(x, w, None, Conv2dOptions::default()),
            Err(Error::ChannelMismatch { .. })
        ));
    }

    #[test]
    fn gradcheck_conv_variants() {
        let opts = GradCheckOptions::default();
        let x = Tensor::uniform(&[2, 3, 5, 6], -1.0, 1.0, 20).unwrap();
        for (kh, kw, s, d) in [(3, 3, 1, 1), (3, 3, 1, 2), (3, 3, 2, 1), (1, 1, 1, 1), (7, 1, 1, 1)] {
            let w = Tensor::uniform(&[2, 3, kh, kw], -1.0, 1.0, 21).unwrap();
            let b = Tensor::uniform(&[2], -1.0, 1.0, 22).unwrap();
            let o = Conv2dOptions { stride: s, dilation: d, depthwise: false };
            let r = gradcheck(|g, v| project(g, g.conv2d(v[0], v[1], Some(v[2]), o)?, 3), &[x.clone(), w, b], &opts).unwrap();
            assert!(r.max_rel_err < 1e-6, "{kh}x{kw} s{s} d{d}: {r:?}");
        }
        let w = Tensor::uniform(&[3, 1, 3, 3], -1.0, 1.0, 23).unwrap();
        let r = gradcheck(|g, v| project(g, g.conv2d(v[0], v[1], None, Conv2dOptions::depthwise())?, 4), &[x, w], &opts).unwrap();
        assert!(r.max_rel_err < 1e-6, "{r:?}");
    }

    proptest! {
        #[test]
        fn stride_one_preserves_spatial_dims(h in 1usize..9, w in 1usize..9, k in 1usize..6, d in 1usize..4) {
            let x = Tensor::<f32>::zeros(&[1, 1, h, w]).unwrap();
            let wt = Tensor::<f32>::zeros(&[1, 1, k, k]).unwrap();
            let g = Graph::new();
            let y = g.conv2d(g.constant(x), g.constant(wt), None, Conv2dOptions::dilated(d)).unwrap();
            prop_assert_eq!(g.dims(y), vec![1, 1, h, w]);
        }
    }
}
