use super::expect_channels;
use crate::error::{Error, Result};
use crate::nn::{BatchNormParams, Bound, ConvParams, ParamStore, SeparableConvParams};
use crate::scalar::Scalar;
use crate::tensor::{Graph, Var};

/// Channel plan for one full-resolution separable residual unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrsrSpec {
    /// Channels of the main (residual) stream.
    pub channels: usize,
    /// Width of the optional 3x3 convolution applied before pooling.
    pub pre_conv_width: Option<usize>,
    /// Kernel size of the input convolution after pooling.
    pub input_kernel: usize,
    pub input_width: usize,
    pub sep_width: usize,
}

impl FrsrSpec {
    /// Plan for encoder stage `stage` (0-based) paired with a dense block of
    /// `channels` output maps built from `layers` separable layers.
    ///
    /// The first stage pools directly and uses a 3x3 input conv of twice the
    /// block width. Later stages run a 3x3 conv of twice the block width
    /// before pooling and a 1x1 input conv of `growth * layers` maps.
    pub fn for_stage(stage: usize, channels: usize, growth: usize, layers: usize) -> Self {
        if stage == 0 {
            Self {
                channels,
                pre_conv_width: None,
                input_kernel: 3,
                input_width: 2 * channels,
                sep_width: 2 * channels,
            }
        } else {
            Self {
                channels,
                pre_conv_width: Some(2 * channels),
                input_kernel: 1,
                input_width: (growth * layers).max(1),
                sep_width: 2 * channels,
            }
        }
    }
}

/// Residual stream at full resolution plus a pooling stream that is
/// downsampled once, processed, projected back with a 1x1 conv, upsampled
/// and added.
#[derive(Debug, Clone)]
pub struct FrsrUnit {
    pub spec: FrsrSpec,
    pub pre: Option<ConvParams>,
    pub input: ConvParams,
    pub bn_in: BatchNormParams,
    pub sep: SeparableConvParams,
    pub bn_sep: BatchNormParams,
    pub out: ConvParams,
}

impl FrsrUnit {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, name: &str, spec: FrsrSpec) -> Result<Self> {
        let c = spec.channels;
        let pre = spec
            .pre_conv_width
            .map(|w| ConvParams::square(store, &format!("{name}.pre"), c, w, 3))
            .transpose()?;
        let pooled_ch = spec.pre_conv_width.unwrap_or(c);
        let k = spec.input_kernel;
        Ok(Self {
            spec,
            pre,
            input: ConvParams::square(store, &format!("{name}.input"), pooled_ch, spec.input_width, k)?,
            bn_in: BatchNormParams::new(store, &format!("{name}.bn_in"), spec.input_width)?,
            sep: SeparableConvParams::new(store, &format!("{name}.sep"), spec.input_width, spec.sep_width, 3)?,
            bn_sep: BatchNormParams::new(store, &format!("{name}.bn_sep"), spec.sep_width)?,
            out: ConvParams::square(store, &format!("{name}.out"), spec.sep_width, c, 1)?,
        })
    }

    /// Pooling-stream contribution at full resolution.
    pub fn pooling_stream<T: Scalar>(&self, g: &Graph<T>, p: &Bound, x: Var) -> Result<Var> {
        expect_channels(g, x, "frsr", self.spec.channels)?;
        let d = g.dims(x);
        if d.len() != 4 || d[2] % 2 != 0 || d[3] % 2 != 0 {
            return Err(Error::OddSpatial {
                op: "frsr",
                h: d.get(2).copied().unwrap_or(0),
                w: d.get(3).copied().unwrap_or(0),
            });
        }
        let mut s = x;
        if let Some(pre) = &self.pre {
            s = pre.forward(g, p, s)?;
        }
        let s = g.maxpool2(s)?;
        let s = self.input.forward(g, p, s)?;
        let s = g.relu(self.bn_in.forward(g, p, s)?);
        let s = self.sep.forward(g, p, s)?;
        let s = g.relu(self.bn_sep.forward(g, p, s)?);
        let s = self.out.forward(g, p, s)?;
        g.upsample_nn2(s)
    }

    pub fn forward<T: Scalar>(&self, g: &Graph<T>, p: &Bound, x: Var) -> Result<Var> {
        let s = self.pooling_stream(g, p, x)?;
        g.add(x, s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blocks::test_util::{perturbed, zero_params};
    use crate::gradcheck::{gradcheck, project, GradCheckOptions};
    use crate::tensor::Tensor;

    #[test]
    fn stage_plans() {
        let first = FrsrSpec::for_stage(0, 112, 16, 4);
        assert_eq!((first.input_kernel, first.input_width, first.sep_width), (3, 224, 224));
        assert_eq!(first.pre_conv_width, None);
        let later = FrsrSpec::for_stage(1, 192, 16, 5);
        assert_eq!((later.input_kernel, later.input_width, later.sep_width), (1, 80, 384));
        assert_eq!(later.pre_conv_width, Some(384));
    }

    #[test]
    fn shape_preserved() {
        let mut store = ParamStore::<f32>::new(2);
        let unit = FrsrUnit::new(&mut store, "frsr", FrsrSpec::for_stage(1, 64, 16, 2)).unwrap();
        let g = Graph::new();
        let p = store.bind(&g);
        let x = g.constant(Tensor::uniform(&[1, 64, 32, 32], -1.0, 1.0, 3).unwrap());
        let y = unit.forward(&g, &p, x).unwrap();
        assert_eq!(g.dims(y), vec![1, 64, 32, 32]);
    }

    #[test]
    fn zero_output_conv_gives_identity() {
        let mut store = ParamStore::<f64>::new(2);
        let unit = FrsrUnit::new(&mut store, "frsr", FrsrSpec::for_stage(0, 4, 2, 2)).unwrap();
        zero_params(&mut store, "frsr.out");
        let g = Graph::new();
        let p = store.bind(&g);
        let xt = Tensor::uniform(&[1, 4, 8, 8], -1.0, 1.0, 3).unwrap();
        let y = unit.forward(&g, &p, g.constant(xt.clone())).unwrap();
        assert_eq!(g.value(y), xt);
    }

    #[test]
    fn odd_dims_rejected() {
        let mut store = ParamStore::<f32>::new(2);
        let unit = FrsrUnit::new(&mut store, "frsr", FrsrSpec::for_stage(0, 2, 2, 1)).unwrap();
        let g = Graph::new();
        let p = store.bind(&g);
        let x = g.constant(Tensor::zeros(&[1, 2, 5, 4]).unwrap());
        assert!(matches!(unit.forward(&g, &p, x), Err(Error::OddSpatial { .. })));
    }

    #[test]
    fn gradcheck_both_streams() {
        for stage in [0, 1] {
            let mut store = ParamStore::<f64>::new(11);
            let unit = FrsrUnit::new(&mut store, "frsr", FrsrSpec::for_stage(stage, 2, 1, 2)).unwrap();
            let mut inputs = vec![Tensor::uniform(&[2, 2, 4, 4], -1.0, 1.0, 12).unwrap()];
            inputs.extend(perturbed(&store, 13));
            let r = gradcheck(
                |g, v| project(g, unit.forward(g, &Bound::from_vars(v[1..].to_vec()), v[0])?, 14),
                &inputs,
                &GradCheckOptions::default(),
            )
            .unwrap();
            assert!(r.max_rel_err < 1e-6, "stage {stage}: {r:?}");
        }
    }
}
