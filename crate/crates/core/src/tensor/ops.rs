//! Element-wise, reduction, shape and softmax operations with their
//! backward rules.
//!
//! Reductions run sequentially in index order, so results do not depend on
//! scheduling.

use super::{numel, strides, Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Reduction kind for [`Graph::reduce`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reduce {
    Sum,
    Mean,
    /// Gradient goes to the lowest-index maximal element.
    Max,
}

/// Element-wise operation kind for [`Graph::elementwise`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Elementwise {
    Add,
    Sub,
    Mul,
    Div,
    Relu,
    Log,
    Exp,
    Negate,
    ScalarMul(f64),
}

fn split_axis(dims: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = dims[..axis].iter().product();
    let inner = dims[axis + 1..].iter().product();
    (outer, dims[axis], inner)
}

fn check_axis(op: &'static str, axis: usize, rank: usize) -> Result<()> {
    if axis >= rank {
        return Err(Error::InvalidAxis { op, axis, rank });
    }
    Ok(())
}

#[derive(Clone, Copy)]
enum Operand {
    Same,
    LhsScalar,
    RhsScalar,
}

fn broadcast_kind(op: &'static str, a: &Tensor<impl Scalar>, b: &Tensor<impl Scalar>) -> Result<Operand> {
    if a.dims() == b.dims() {
        Ok(Operand::Same)
    } else if a.rank() == 0 {
        Ok(Operand::LhsScalar)
    } else if b.rank() == 0 {
        Ok(Operand::RhsScalar)
    } else {
        Err(Error::ShapeMismatch {
            op,
            lhs: a.dims().to_vec(),
            rhs: b.dims().to_vec(),
        })
    }
}

fn zip_with<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, kind: Operand, f: impl Fn(T, T) -> T) -> Tensor<T> {
    match kind {
        Operand::Same => Tensor::from_parts(
            a.dims().to_vec(),
            a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect(),
        ),
        Operand::LhsScalar => {
            let x = a.item();
            Tensor::from_parts(b.dims().to_vec(), b.data().iter().map(|&y| f(x, y)).collect())
        }
        Operand::RhsScalar => {
            let y = b.item();
            Tensor::from_parts(a.dims().to_vec(), a.data().iter().map(|&x| f(x, y)).collect())
        }
    }
}

/// Reduces a full-size gradient onto an operand that may have been broadcast.
fn fold_to<T: Scalar>(g: Tensor<T>, target: &Tensor<T>) -> Tensor<T> {
    if g.dims() == target.dims() {
        g
    } else {
        Tensor::scalar(g.data().iter().copied().sum())
    }
}

impl<T: Scalar> Graph<T> {
    fn binary(
        &self,
        op: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(T, T) -> T,
        // (x, y, upstream) -> (d/dx, d/dy)
        df: impl Fn(T, T, T) -> (T, T) + 'static,
    ) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        let kind = broadcast_kind(op, &va, &vb)?;
        let out = zip_with(&va, &vb, kind, f);
        Ok(self.record(
            &[a, b],
            out,
            Box::new(move |g, inputs, out, needs| {
                let (x, y) = (inputs[0], inputs[1]);
                let n = out.len();
                let (mut gx, mut gy) = (vec![T::zero(); n], vec![T::zero(); n]);
                for i in 0..n {
                    let xi = if x.len() == 1 && n != 1 { x.data()[0] } else { x.data()[i] };
                    let yi = if y.len() == 1 && n != 1 { y.data()[0] } else { y.data()[i] };
                    let (dx, dy) = df(xi, yi, g.data()[i]);
                    gx[i] = dx;
                    gy[i] = dy;
                }
                let dims = out.dims().to_vec();
                vec![
                    needs[0].then(|| fold_to(Tensor::from_parts(dims.clone(), gx), x)),
                    needs[1].then(|| fold_to(Tensor::from_parts(dims, gy), y)),
                ]
            }),
        ))
    }

    fn unary(
        &self,
        a: Var,
        f: impl Fn(T) -> T,
        // (x, y, upstream) -> d/dx
        df: impl Fn(T, T, T) -> T + 'static,
    ) -> Var {
        let out = self.value(a).map(f);
        self.record(
            &[a],
            out,
            Box::new(move |g, inputs, out, _| {
                let data = inputs[0]
                    .data()
                    .iter()
                    .zip(out.data())
                    .zip(g.data())
                    .map(|((&x, &y), &gy)| df(x, y, gy))
                    .collect();
                vec![Some(Tensor::from_parts(out.dims().to_vec(), data))]
            }),
        )
    }

    /// Dispatches on an [`Elementwise`] kind; `b` is required for binary kinds.
    pub fn elementwise(&self, op: Elementwise, a: Var, b: Option<Var>) -> Result<Var> {
        let rhs = || b.ok_or_else(|| Error::invalid("elementwise", "binary op needs two operands"));
        match op {
            Elementwise::Add => self.add(a, rhs()?),
            Elementwise::Sub => self.sub(a, rhs()?),
            Elementwise::Mul => self.mul(a, rhs()?),
            Elementwise::Div => self.div(a, rhs()?),
            Elementwise::Relu => Ok(self.relu(a)),
            Elementwise::Log => self.log(a),
            Elementwise::Exp => Ok(self.exp(a)),
            Elementwise::Negate => Ok(self.neg(a)),
            Elementwise::ScalarMul(k) => Ok(self.scale(a, k)),
        }
    }

    pub fn add(&self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, |_, _, g| (g, g))
    }

    pub fn sub(&self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, |_, _, g| (g, -g))
    }

    pub fn mul(&self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, |x, y, g| (g * y, g * x))
    }

    pub fn div(&self, a: Var, b: Var) -> Result<Var> {
        self.binary("div", a, b, |x, y| x / y, |x, y, g| (g / y, -g * x / (y * y)))
    }

    pub fn relu(&self, a: Var) -> Var {
        self.unary(
            a,
            |x| if x > T::zero() { x } else { T::zero() },
            |x, _, g| if x > T::zero() { g } else { T::zero() },
        )
    }

    /// Natural log; non-positive inputs are an error rather than NaN/-inf.
    pub fn log(&self, a: Var) -> Result<Var> {
        let v = self.value(a);
        if let Some((index, &value)) = v.data().iter().enumerate().find(|(_, &x)| !(x > T::zero())) {
            return Err(Error::NonPositiveLog {
                index,
                value: value.as_f64(),
            });
        }
        Ok(self.unary(a, |x| x.ln(), |x, _, g| g / x))
    }

    pub fn exp(&self, a: Var) -> Var {
        self.unary(a, |x| x.exp(), |_, y, g| g * y)
    }

    pub fn neg(&self, a: Var) -> Var {
        self.unary(a, |x| -x, |_, _, g| -g)
    }

    pub fn scale(&self, a: Var, k: f64) -> Var {
        let k = T::from_f64_lossy(k);
        self.unary(a, move |x| x * k, move |_, _, g| g * k)
    }

    pub fn add_scalar(&self, a: Var, k: f64) -> Var {
        let k = T::from_f64_lossy(k);
        self.unary(a, move |x| x + k, |_, _, g| g)
    }

    pub fn square(&self, a: Var) -> Var {
        self.unary(a, |x| x * x, |x, _, g| g * (x + x))
    }

    /// `max(x, floor)`; gradient passes only where `x > floor`.
    pub fn clamp_min(&self, a: Var, floor: f64) -> Var {
        let f = T::from_f64_lossy(floor);
        self.unary(
            a,
            move |x| if x > f { x } else { f },
            move |x, _, g| if x > f { g } else { T::zero() },
        )
    }

    /// Reduces over `axes` (all axes when `None`); reduced axes are removed.
    pub fn reduce(&self, op: Reduce, a: Var, axes: Option<&[usize]>) -> Result<Var> {
        let v = self.value(a);
        let rank = v.rank();
        let mut reduced = vec![axes.is_none(); rank];
        for &ax in axes.unwrap_or(&[]) {
            check_axis("reduce", ax, rank)?;
            reduced[ax] = true;
        }
        let out_dims: Vec<usize> = (0..rank).filter(|&i| !reduced[i]).map(|i| v.dims()[i]).collect();
        let out_len = numel(&out_dims)?;
        let count = if out_len == 0 { 0 } else { v.len() / out_len };

        // Output offset contributed by each input axis (0 along reduced axes).
        let out_strides = strides(&out_dims);
        let mut contrib = vec![0usize; rank];
        let mut j = 0;
        for i in 0..rank {
            if !reduced[i] {
                contrib[i] = out_strides[j];
                j += 1;
            }
        }
        let target = output_offsets(v.dims(), &contrib);

        let mut out = vec![T::zero(); out_len];
        let mut argmax = Vec::new();
        match op {
            Reduce::Sum | Reduce::Mean => {
                for (x, &t) in v.data().iter().zip(&target) {
                    out[t] = out[t] + *x;
                }
                if op == Reduce::Mean {
                    let c = T::from_usize(count).unwrap_or_else(T::one);
                    out.iter_mut().for_each(|o| *o = *o / c);
                }
            }
            Reduce::Max => {
                argmax = vec![usize::MAX; out_len];
                for (i, (&x, &t)) in v.data().iter().zip(&target).enumerate() {
                    if argmax[t] == usize::MAX || x > out[t] {
                        out[t] = x;
                        argmax[t] = i;
                    }
                }
            }
        }

        let in_dims = v.dims().to_vec();
        Ok(self.record(
            &[a],
            Tensor::from_parts(out_dims, out),
            Box::new(move |g, _, _, _| {
                let mut gx = vec![T::zero(); target.len()];
                match op {
                    Reduce::Sum => gx.iter_mut().zip(&target).for_each(|(d, &t)| *d = g.data()[t]),
                    Reduce::Mean => {
                        let c = T::from_usize(count).unwrap_or_else(T::one);
                        gx.iter_mut().zip(&target).for_each(|(d, &t)| *d = g.data()[t] / c);
                    }
                    Reduce::Max => {
                        for (t, &i) in argmax.iter().enumerate() {
                            gx[i] = g.data()[t];
                        }
                    }
                }
                vec![Some(Tensor::from_parts(in_dims.clone(), gx))]
            }),
        ))
    }

    pub fn sum(&self, a: Var) -> Var {
        self.reduce(Reduce::Sum, a, None).expect("full reduction is always valid")
    }

    pub fn mean(&self, a: Var) -> Var {
        self.reduce(Reduce::Mean, a, None).expect("full reduction is always valid")
    }

    pub fn sum_axes(&self, a: Var, axes: &[usize]) -> Result<Var> {
        self.reduce(Reduce::Sum, a, Some(axes))
    }

    pub fn reshape(&self, a: Var, dims: &[usize]) -> Result<Var> {
        let v = self.value(a);
        let out = v.reshaped(dims)?;
        let in_dims = v.dims().to_vec();
        Ok(self.record(
            &[a],
            out,
            Box::new(move |g, _, _, _| vec![Some(g.reshaped(&in_dims).expect("same element count"))]),
        ))
    }

    /// Concatenates along `axis`; all other dims must agree.
    pub fn concat(&self, parts: &[Var], axis: usize) -> Result<Var> {
        let values: Vec<Tensor<T>> = parts.iter().map(|&p| self.value(p)).collect();
        let first = values
            .first()
            .ok_or_else(|| Error::invalid("concat", "no inputs"))?;
        let rank = first.rank();
        check_axis("concat", axis, rank)?;
        for v in &values[1..] {
            let compatible = v.rank() == rank
                && (0..rank).all(|i| i == axis || v.dims()[i] == first.dims()[i]);
            if !compatible {
                return Err(Error::ShapeMismatch {
                    op: "concat",
                    lhs: first.dims().to_vec(),
                    rhs: v.dims().to_vec(),
                });
            }
        }
        let sizes: Vec<usize> = values.iter().map(|v| v.dims()[axis]).collect();
        let total: usize = sizes.iter().sum();
        let (outer, _, inner) = split_axis(first.dims(), axis);
        let mut dims = first.dims().to_vec();
        dims[axis] = total;
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for (v, &s) in values.iter().zip(&sizes) {
                out.extend_from_slice(&v.data()[o * s * inner..(o + 1) * s * inner]);
            }
        }
        Ok(self.record(
            parts,
            Tensor::from_parts(dims, out),
            Box::new(move |g, inputs, _, needs| {
                let mut offset = 0;
                let mut grads = Vec::with_capacity(inputs.len());
                for (k, x) in inputs.iter().enumerate() {
                    let s = sizes[k];
                    if needs[k] {
                        let mut gx = Vec::with_capacity(x.len());
                        for o in 0..outer {
                            let start = (o * total + offset) * inner;
                            gx.extend_from_slice(&g.data()[start..start + s * inner]);
                        }
                        grads.push(Some(Tensor::from_parts(x.dims().to_vec(), gx)));
                    } else {
                        grads.push(None);
                    }
                    offset += s;
                }
                grads
            }),
        ))
    }

    /// Contiguous range `[start, start + len)` along `axis`.
    pub fn slice(&self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let v = self.value(a);
        check_axis("slice", axis, v.rank())?;
        let (outer, n, inner) = split_axis(v.dims(), axis);
        if start + len > n {
            return Err(Error::invalid(
                "slice",
                format!("range {start}..{} exceeds axis length {n}", start + len),
            ));
        }
        let mut dims = v.dims().to_vec();
        dims[axis] = len;
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * n + start) * inner;
            out.extend_from_slice(&v.data()[base..base + len * inner]);
        }
        let in_dims = v.dims().to_vec();
        Ok(self.record(
            &[a],
            Tensor::from_parts(dims, out),
            Box::new(move |g, _, _, _| {
                let mut gx = vec![T::zero(); outer * n * inner];
                for o in 0..outer {
                    let base = (o * n + start) * inner;
                    gx[base..base + len * inner]
                        .copy_from_slice(&g.data()[o * len * inner..(o + 1) * len * inner]);
                }
                vec![Some(Tensor::from_parts(in_dims.clone(), gx))]
            }),
        ))
    }

    /// Gathers the listed indices along `axis`, in the given order.
    pub fn select(&self, a: Var, axis: usize, indices: &[usize]) -> Result<Var> {
        let v = self.value(a);
        check_axis("select", axis, v.rank())?;
        let (outer, n, inner) = split_axis(v.dims(), axis);
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(Error::invalid("select", format!("index {bad} out of range {n}")));
        }
        let indices = indices.to_vec();
        let k = indices.len();
        let mut dims = v.dims().to_vec();
        dims[axis] = k;
        let mut out = Vec::with_capacity(outer * k * inner);
        for o in 0..outer {
            for &i in &indices {
                let base = (o * n + i) * inner;
                out.extend_from_slice(&v.data()[base..base + inner]);
            }
        }
        let in_dims = v.dims().to_vec();
        Ok(self.record(
            &[a],
            Tensor::from_parts(dims, out),
            Box::new(move |g, _, _, _| {
                let mut gx = vec![T::zero(); outer * n * inner];
                for o in 0..outer {
                    for (j, &i) in indices.iter().enumerate() {
                        let src = (o * k + j) * inner;
                        let dst = (o * n + i) * inner;
                        for t in 0..inner {
                            gx[dst + t] = gx[dst + t] + g.data()[src + t];
                        }
                    }
                }
                vec![Some(Tensor::from_parts(in_dims.clone(), gx))]
            }),
        ))
    }

    /// Zero padding; `pads[i] = (before, after)` for axis `i`.
    pub fn pad_zero(&self, a: Var, pads: &[(usize, usize)]) -> Result<Var> {
        let v = self.value(a);
        if pads.len() != v.rank() {
            return Err(Error::invalid(
                "pad_zero",
                format!("{} pad pairs for rank {}", pads.len(), v.rank()),
            ));
        }
        let out_dims: Vec<usize> = v
            .dims()
            .iter()
            .zip(pads)
            .map(|(&d, &(b, e))| d + b + e)
            .collect();
        let out_strides = strides(&out_dims);
        let base: usize = pads.iter().zip(&out_strides).map(|(&(b, _), s)| b * s).sum();
        let target: Vec<usize> = output_offsets(v.dims(), &out_strides)
            .into_iter()
            .map(|t| t + base)
            .collect();
        let mut out = vec![T::zero(); numel(&out_dims)?];
        for (x, &t) in v.data().iter().zip(&target) {
            out[t] = *x;
        }
        let in_dims = v.dims().to_vec();
        Ok(self.record(
            &[a],
            Tensor::from_parts(out_dims, out),
            Box::new(move |g, _, _, _| {
                let gx = target.iter().map(|&t| g.data()[t]).collect();
                vec![Some(Tensor::from_parts(in_dims.clone(), gx))]
            }),
        ))
    }

    /// Numerically stable softmax along `axis`.
    pub fn softmax(&self, a: Var, axis: usize) -> Result<Var> {
        let v = self.value(a);
        check_axis("softmax", axis, v.rank())?;
        let (outer, n, inner) = split_axis(v.dims(), axis);
        let x = v.data();
        let mut out = vec![T::zero(); x.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |c: usize| (o * n + c) * inner + i;
                let m = (0..n).map(|c| x[at(c)]).fold(T::neg_infinity(), T::max);
                let mut total = T::zero();
                for c in 0..n {
                    let e = (x[at(c)] - m).exp();
                    out[at(c)] = e;
                    total = total + e;
                }
                for c in 0..n {
                    out[at(c)] = out[at(c)] / total;
                }
            }
        }
        let dims = v.dims().to_vec();
        Ok(self.record(
            &[a],
            Tensor::from_parts(dims.clone(), out),
            Box::new(move |g, _, y, _| {
                let (y, g) = (y.data(), g.data());
                let mut gx = vec![T::zero(); y.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let at = |c: usize| (o * n + c) * inner + i;
                        let dot = (0..n).fold(T::zero(), |acc, c| acc + g[at(c)] * y[at(c)]);
                        for c in 0..n {
                            gx[at(c)] = y[at(c)] * (g[at(c)] - dot);
                        }
                    }
                }
                vec![Some(Tensor::from_parts(dims.clone(), gx))]
            }),
        ))
    }
}

/// Flat output offset of every input element when axis `i` contributes
/// `contrib[i]` per step.
fn output_offsets(dims: &[usize], contrib: &[usize]) -> Vec<usize> {
    let n: usize = dims.iter().product();
    let mut out = Vec::with_capacity(n);
    let mut idx = vec![0usize; dims.len()];
    let mut offset = 0usize;
    for _ in 0..n {
        out.push(offset);
        for ax in (0..dims.len()).rev() {
            idx[ax] += 1;
            offset += contrib[ax];
            if idx[ax] < dims[ax] {
                break;
            }
            offset -= contrib[ax] * dims[ax];
            idx[ax] = 0;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{gradcheck, project, GradCheckOptions};
    use proptest::prelude::*;

    fn t(dims: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::from_vec(dims, data.to_vec()).unwrap()
    }

    #[test]
    fn relu_add_log_examples() {
        let g = Graph::new();
        let x = g.constant(t(&[3], &[-1.0, 0.0, 2.0]));
        assert_eq!(g.value(g.relu(x)).data(), &[0.0, 0.0, 2.0]);

        let a = g.constant(t(&[2], &[1.0, 2.0]));
        let b = g.constant(t(&[2], &[3.0, 4.0]));
        assert_eq!(g.value(g.add(a, b).unwrap()).data(), &[4.0, 6.0]);

        let e = std::f64::consts::E;
        let l = g.log(g.constant(t(&[2], &[1.0, e]))).unwrap();
        let expected: Vec<f64> = [1.0f64, e].iter().map(|v| v.ln()).collect();
        assert_eq!(g.value(l).data(), expected.as_slice());
        assert!((g.value(l).data()[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn log_of_non_positive_is_flagged() {
        let g = Graph::<f64>::new();
        let x = g.constant(t(&[3], &[1.0, 0.0, 2.0]));
        match g.log(x) {
            Err(Error::NonPositiveLog { index, .. }) => assert_eq!(index, 1),
            other => panic!("expected NonPositiveLog, got {other:?}"),
        }
    }

    #[test]
    fn shape_mismatch_beyond_scalar() {
        let g = Graph::<f64>::new();
        let a = g.constant(t(&[2], &[1.0, 2.0]));
        let b = g.constant(t(&[3], &[1.0, 2.0, 3.0]));
        assert!(matches!(g.add(a, b), Err(Error::ShapeMismatch { .. })));
        let s = g.constant(Tensor::scalar(10.0));
        assert_eq!(g.value(g.mul(a, s).unwrap()).data(), &[10.0, 20.0]);
        assert_eq!(g.value(g.sub(s, a).unwrap()).data(), &[9.0, 8.0]);
    }

    #[test]
    fn elementwise_dispatch() {
        let g = Graph::<f64>::new();
        let a = g.constant(t(&[2], &[1.0, -2.0]));
        let y = g.elementwise(Elementwise::ScalarMul(3.0), a, None).unwrap();
        assert_eq!(g.value(y).data(), &[3.0, -6.0]);
        let y = g.elementwise(Elementwise::Negate, a, None).unwrap();
        assert_eq!(g.value(y).data(), &[-1.0, 2.0]);
        assert!(g.elementwise(Elementwise::Add, a, None).is_err());
    }

    #[test]
    fn reductions() {
        let g = Graph::new();
        let x = g.constant(t(&[3], &[1.0, 2.0, 3.0]));
        assert_eq!(g.value(g.sum(x)).item(), 6.0);

        let m = g.constant(t(&[2, 2], &[1.0, 3.0, 5.0, 7.0]));
        let r = g.reduce(Reduce::Mean, m, Some(&[1])).unwrap();
        // scalar-loop oracle
        let oracle: Vec<f64> = (0..2).map(|i| (0..2).map(|j| [1.0, 3.0, 5.0, 7.0][i * 2 + j]).sum::<f64>() / 2.0).collect();
        assert_eq!(g.value(r).dims(), &[2]);
        assert_eq!(g.value(r).data(), oracle.as_slice());

        assert!(matches!(
            g.reduce(Reduce::Sum, m, Some(&[2])),
            Err(Error::InvalidAxis { .. })
        ));
    }

    #[test]
    fn max_routes_gradient_to_first_maximum() {
        let g = Graph::new();
        let x = g.param(t(&[3], &[2.0, -1.0, 2.0]));
        let m = g.reduce(Reduce::Max, x, None).unwrap();
        assert_eq!(g.value(m).item(), 2.0);
        let grads = g.backward(m).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn concat_reshape_slice() {
        let g = Graph::new();
        let a = g.constant(Tensor::uniform(&[1, 2, 4, 4], -1.0, 1.0, 1).unwrap());
        let b = g.constant(Tensor::uniform(&[1, 3, 4, 4], -1.0, 1.0, 2).unwrap());
        let c = g.concat(&[a, b], 1).unwrap();
        assert_eq!(g.dims(c), vec![1, 5, 4, 4]);
        let back = g.slice(c, 1, 0, 2).unwrap();
        assert_eq!(g.value(back), g.value(a));

        let v = g.constant(t(&[6], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        let r = g.reshape(v, &[2, 3]).unwrap();
        let rr = g.reshape(r, &[6]).unwrap();
        assert_eq!(g.value(rr), g.value(v));
        assert!(g.reshape(v, &[4]).is_err());

        let bad = g.constant(Tensor::zeros(&[1, 2, 3, 4]).unwrap());
        assert!(g.concat(&[a, bad], 1).is_err());
    }

    #[test]
    fn pad_and_select() {
        let g = Graph::new();
        let x = g.constant(t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]));
        let p = g.pad_zero(x, &[(1, 0), (0, 1)]).unwrap();
        assert_eq!(g.value(p).dims(), &[3, 3]);
        assert_eq!(g.value(p).data(), &[0.0, 0.0, 0.0, 1.0, 2.0, 0.0, 3.0, 4.0, 0.0]);
        let s = g.select(x, 1, &[1, 1, 0]).unwrap();
        assert_eq!(g.value(s).data(), &[2.0, 2.0, 1.0, 4.0, 4.0, 3.0]);
    }

    #[test]
    fn softmax_examples() {
        let g = Graph::new();
        let z = g.constant(t(&[2], &[0.0, 0.0]));
        assert_eq!(g.value(g.softmax(z, 0).unwrap()).data(), &[0.5, 0.5]);

        let l = g.constant(t(&[2], &[1f64.ln(), 3f64.ln()]));
        let s = g.value(g.softmax(l, 0).unwrap());
        // scalar-loop oracle
        let e: Vec<f64> = [1f64.ln(), 3f64.ln()].iter().map(|v| v.exp()).collect();
        let total: f64 = e.iter().sum();
        for (got, want) in s.data().iter().zip(e.iter().map(|v| v / total)) {
            assert!((got - want).abs() < 1e-12);
        }
        assert!((s.data()[0] - 0.25).abs() < 1e-12 && (s.data()[1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn backward_examples() {
        let g = Graph::new();
        let x = g.param(t(&[3], &[1.0, -2.0, 0.5]));
        let sq = g.mul(x, x).unwrap();
        let f = g.sum(sq);
        let grads = g.backward(f).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[2.0, -4.0, 1.0]);

        let g = Graph::new();
        let x = g.param(t(&[2], &[-1.0, 2.0]));
        let f = g.sum(g.relu(x));
        assert_eq!(g.backward(f).unwrap().get(x).unwrap().data(), &[0.0, 1.0]);
    }

    #[test]
    fn backward_requires_scalar_root() {
        let g = Graph::new();
        let x = g.param(t(&[2], &[1.0, 2.0]));
        let y = g.relu(x);
        assert!(matches!(g.backward(y), Err(Error::NonScalarRoot(_))));
    }

    #[test]
    fn unused_input_gets_zero_gradient() {
        let g = Graph::new();
        let x = g.param(t(&[2], &[1.0, 2.0]));
        let y = g.param(t(&[2], &[3.0, 4.0]));
        let f = g.sum(g.square(y));
        let grads = g.backward(f).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[0.0, 0.0]);
    }

    fn check(f: impl Fn(&Graph<f64>, &[Var]) -> Result<Var>, inputs: &[Tensor<f64>]) {
        let report = gradcheck(f, inputs, &GradCheckOptions::default()).unwrap();
        assert!(report.max_rel_err < 1e-6, "{report:?}");
    }

    #[test]
    fn gradcheck_every_op() {
        let a = Tensor::uniform(&[2, 3, 4], -1.0, 1.0, 11).unwrap();
        let b = Tensor::uniform(&[2, 3, 4], -1.0, 1.0, 12).unwrap();
        let pos = Tensor::uniform(&[2, 3, 4], 0.5, 2.0, 13).unwrap();
        let s = Tensor::scalar(0.7);
        let ab = [a.clone(), b.clone()];
        check(|g, v| project(g, g.add(v[0], v[1])?, 1), &ab);
        check(|g, v| project(g, g.sub(v[0], v[1])?, 2), &ab);
        check(|g, v| project(g, g.mul(v[0], v[1])?, 3), &ab);
        check(|g, v| project(g, g.div(v[0], v[1])?, 4), &[a.clone(), pos.clone()]);
        check(|g, v| project(g, g.mul(v[0], v[1])?, 5), &[a.clone(), s.clone()]);
        check(|g, v| project(g, g.relu(v[0]), 6), &[a.clone()]);
        check(|g, v| project(g, g.log(v[0])?, 7), &[pos.clone()]);
        check(|g, v| project(g, g.exp(v[0]), 8), &[a.clone()]);
        check(|g, v| project(g, g.neg(v[0]), 9), &[a.clone()]);
        check(|g, v| project(g, g.scale(v[0], -1.5), 10), &[a.clone()]);
        check(|g, v| project(g, g.square(v[0]), 11), &[a.clone()]);
        check(|g, v| project(g, g.clamp_min(v[0], 0.1), 12), &[a.clone()]);
        for axes in [vec![0], vec![1], vec![0, 2]] {
            check(|g, v| project(g, g.reduce(Reduce::Sum, v[0], Some(&axes))?, 13), &[a.clone()]);
            check(|g, v| project(g, g.reduce(Reduce::Mean, v[0], Some(&axes))?, 14), &[a.clone()]);
            check(|g, v| project(g, g.reduce(Reduce::Max, v[0], Some(&axes))?, 15), &[a.clone()]);
        }
        check(|g, v| project(g, g.reshape(v[0], &[6, 4])?, 16), &[a.clone()]);
        check(|g, v| project(g, g.concat(&[v[0], v[1]], 1)?, 17), &ab);
        check(|g, v| project(g, g.slice(v[0], 2, 1, 2)?, 18), &[a.clone()]);
        check(|g, v| project(g, g.select(v[0], 1, &[2, 0, 2])?, 19), &[a.clone()]);
        check(|g, v| project(g, g.pad_zero(v[0], &[(0, 1), (2, 0), (1, 1)])?, 20), &[a.clone()]);
        for axis in 0..3 {
            check(|g, v| project(g, g.softmax(v[0], axis)?, 21), &[a.clone()]);
        }
    }

    #[test]
    fn random_three_op_chains() {
        // Chains drawn from a fixed menu; each checked against central
        // finite differences.
        let ops: [fn(&Graph<f64>, Var) -> Result<Var>; 6] = [
            |g, x| Ok(g.exp(g.scale(x, 0.5))),
            |g, x| g.softmax(x, 1),
            |g, x| Ok(g.square(x)),
            |g, x| g.mul(x, x),
            |g, x| Ok(g.add_scalar(g.relu(x), 1.0)),
            |g, x| g.log(g.add_scalar(g.square(x), 1.0)),
        ];
        for seed in 0..20u64 {
            let picks = [seed % 6, (seed / 6 + seed) % 6, (seed * 7 + 3) % 6];
            let x = Tensor::uniform(&[3, 4], -1.0, 1.0, 100 + seed).unwrap();
            check(
                |g, v| {
                    let mut h = v[0];
                    for &p in &picks {
                        h = ops[p as usize](g, h)?;
                    }
                    project(g, h, seed)
                },
                &[x],
            );
        }
    }

    proptest! {
        #[test]
        fn concat_then_slices_is_bit_exact(c1 in 1usize..4, c2 in 1usize..4, h in 1usize..5, seed in 0u64..1000) {
            let g = Graph::<f32>::new();
            let a = Tensor::<f32>::uniform(&[2, c1, h, 3], -5.0, 5.0, seed).unwrap();
            let b = Tensor::<f32>::uniform(&[2, c2, h, 3], -5.0, 5.0, seed + 1).unwrap();
            let (va, vb) = (g.constant(a.clone()), g.constant(b.clone()));
            let c = g.concat(&[va, vb], 1).unwrap();
            prop_assert_eq!(g.value(g.slice(c, 1, 0, c1).unwrap()), a);
            prop_assert_eq!(g.value(g.slice(c, 1, c1, c2).unwrap()), b);
        }

        #[test]
        fn softmax_normalized_and_shift_invariant(n in 1usize..8, k in -50.0f64..50.0, seed in 0u64..1000) {
            let g = Graph::<f64>::new();
            let x = Tensor::<f64>::uniform(&[3, n], -10.0, 10.0, seed).unwrap();
            let s = g.value(g.softmax(g.constant(x.clone()), 1).unwrap());
            for r in 0..3 {
                let row: f64 = s.data()[r * n..(r + 1) * n].iter().sum();
                prop_assert!((row - 1.0).abs() < 1e-6);
            }
            prop_assert!(s.data().iter().all(|&v| v > 0.0));
            let shifted = g.value(g.softmax(g.constant(x.map(|v| v + k)), 1).unwrap());
            prop_assert!(s.max_abs_diff(&shifted) < 1e-6);
        }
    }
}
