use super::expect_channels;
use crate::error::Result;
use crate::nn::{BatchNormParams, Bound, ConvParams, ParamStore};
use crate::scalar::Scalar;
use crate::tensor::{Graph, Var};

/// Downsampling transition: BN -> ReLU -> `k x k` conv -> 2x2 max-pool.
#[derive(Debug, Clone)]
pub struct DownTransition {
    pub bn: BatchNormParams,
    pub conv: ConvParams,
}

impl DownTransition {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, name: &str, in_ch: usize, out_ch: usize, kernel: usize) -> Result<Self> {
        Ok(Self {
            bn: BatchNormParams::new(store, &format!("{name}.bn"), in_ch)?,
            conv: ConvParams::square(store, &format!("{name}.conv"), in_ch, out_ch, kernel)?,
        })
    }

    pub fn out_channels(&self) -> usize {
        self.conv.out_ch
    }

    pub fn forward<T: Scalar>(&self, g: &Graph<T>, p: &Bound, x: Var) -> Result<Var> {
        expect_channels(g, x, "dos", self.bn.channels)?;
        let h = g.relu(self.bn.forward(g, p, x)?);
        let h = self.conv.forward(g, p, h)?;
        g.maxpool2(h)
    }
}

/// Upsampling transition: nearest-neighbour x2 -> 3x3 conv.
#[derive(Debug, Clone)]
pub struct UpTransition {
    pub conv: ConvParams,
}

impl UpTransition {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, name: &str, in_ch: usize, out_ch: usize) -> Result<Self> {
        Ok(Self {
            conv: ConvParams::square(store, &format!("{name}.conv"), in_ch, out_ch, 3)?,
        })
    }

    pub fn out_channels(&self) -> usize {
        self.conv.out_ch
    }

    pub fn forward<T: Scalar>(&self, g: &Graph<T>, p: &Bound, x: Var) -> Result<Var> {
        expect_channels(g, x, "ups", self.conv.in_ch)?;
        let h = g.upsample_nn2(x)?;
        self.conv.forward(g, p, h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blocks::test_util::perturbed;
    use crate::error::Error;
    use crate::gradcheck::{gradcheck, project, GradCheckOptions};
    use crate::tensor::Tensor;

    #[test]
    fn down_then_up_shapes() {
        let mut store = ParamStore::<f32>::new(1);
        let dos = DownTransition::new(&mut store, "dos", 112, 112, 1).unwrap();
        let ups = UpTransition::new(&mut store, "ups", 112, 112).unwrap();
        let g = Graph::new();
        let p = store.bind(&g);
        let x = g.constant(Tensor::uniform(&[1, 112, 64, 64], -1.0, 1.0, 2).unwrap());
        let d = dos.forward(&g, &p, x).unwrap();
        assert_eq!(g.dims(d), vec![1, 112, 32, 32]);
        assert_eq!(g.dims(ups.forward(&g, &p, d).unwrap()), vec![1, 112, 64, 64]);
    }

    #[test]
    fn odd_dims_rejected() {
        let mut store = ParamStore::<f32>::new(1);
        let dos = DownTransition::new(&mut store, "dos", 2, 2, 1).unwrap();
        let g = Graph::new();
        let p = store.bind(&g);
        let x = g.constant(Tensor::zeros(&[2, 2, 6, 5]).unwrap());
        assert!(matches!(dos.forward(&g, &p, x), Err(Error::OddSpatial { .. })));
    }

    #[test]
    fn gradcheck_transitions() {
        let mut store = ParamStore::<f64>::new(23);
        let dos = DownTransition::new(&mut store, "dos", 2, 3, 3).unwrap();
        let ups = UpTransition::new(&mut store, "ups", 3, 2).unwrap();
        let mut inputs = vec![Tensor::uniform(&[2, 2, 4, 4], -1.0, 1.0, 24).unwrap()];
        inputs.extend(perturbed(&store, 25));
        let r = gradcheck(
            |g, v| {
                let p = Bound::from_vars(v[1..].to_vec());
                let d = dos.forward(g, &p, v[0])?;
                project(g, ups.forward(g, &p, d)?, 26)
            },
            &inputs,
            &GradCheckOptions::default(),
        )
        .unwrap();
        assert!(r.max_rel_err < 1e-6, "{r:?}");
    }
}
