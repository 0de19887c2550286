use super::config::{BranchKind, NetworkConfig, DEPTH, SPATIAL_DIVISOR};
use crate::blocks::{CrasppUnit, DownTransition, FdbUnit, FrsrSpec, FrsrUnit, LkbrUnit, UpTransition, LKBR_WIDTH};
use crate::error::{Error, Result};
use crate::nn::{Bound, ConvParams, ParamId, ParamStore};
use crate::scalar::Scalar;
use crate::tensor::{Graph, Tensor, Var};

#[derive(Debug, Clone)]
struct EncoderStage {
    fdb: FdbUnit,
    frsr: FrsrUnit,
    dos: DownTransition,
}

#[derive(Debug, Clone)]
struct DecoderStage {
    index: usize,
    ups: Option<UpTransition>,
    fdb: Option<FdbUnit>,
}

impl DecoderStage {
    fn forward<T: Scalar>(&self, g: &Graph<T>, p: &Bound, h: Var, skips: &[Var]) -> Result<Var> {
        let mut h = h;
        if let Some(ups) = &self.ups {
            h = ups.forward(g, p, h)?;
        }
        if let Some(fdb) = &self.fdb {
            let joined = g.concat(&[h, skips[DEPTH - 1 - self.index]], 1)?;
            h = fdb.forward(g, p, joined)?;
        }
        Ok(h)
    }
}

#[derive(Debug, Clone)]
struct Branch {
    kind: BranchKind,
    stages: Vec<DecoderStage>,
    head: ConvParams,
}

/// A built network: its parameters and the wiring that consumes them.
///
/// The trunk (stem, encoder, bottleneck, skip units and the first
/// `split_after` decoder upsamplings) is shared; each branch owns the
/// remaining decoder stages and a 1x1 head followed by a softmax.
#[derive(Debug, Clone)]
pub struct Network<T: Scalar> {
    config: NetworkConfig,
    store: ParamStore<T>,
    stem: ConvParams,
    encoder: Vec<EncoderStage>,
    bottleneck: FdbUnit,
    craspp: CrasppUnit,
    skip_units: Vec<Option<LkbrUnit>>,
    trunk_decoder: Vec<DecoderStage>,
    branches: Vec<Branch>,
}

impl<T: Scalar> Network<T> {
    pub fn build(config: &NetworkConfig) -> Result<Self> {
        config.validate()?;
        let cfg = config;
        let g = cfg.growth_rate;
        let mut store = ParamStore::new(cfg.seed);
        let stem = ConvParams::square(&mut store, "stem", 3, cfg.stem_channels, 3)?;

        let enc_ch = cfg.encoder_channels();
        let mut encoder = Vec::with_capacity(DEPTH);
        let mut c_in = cfg.stem_channels;
        for (i, &c) in enc_ch.iter().enumerate() {
            let n = cfg.sl_counts[i];
            let name = format!("enc{i}");
            encoder.push(EncoderStage {
                fdb: FdbUnit::new(&mut store, &format!("{name}.fdb"), c_in, n, g, true, cfg.fdb_residual)?,
                frsr: FrsrUnit::new(&mut store, &format!("{name}.frsr"), FrsrSpec::for_stage(i, c, g, n))?,
                dos: DownTransition::new(&mut store, &format!("{name}.dos"), c, c, cfg.dos_kernel)?,
            });
            c_in = c;
        }

        let bottleneck = FdbUnit::new(&mut store, "bottleneck.fdb", c_in, cfg.sl_counts[DEPTH], g, true, cfg.fdb_residual)?;
        let craspp = CrasppUnit::new(
            &mut store,
            "bottleneck.craspp",
            bottleneck.out_channels(),
            cfg.craspp_width,
            c_in,
            &cfg.craspp_rates,
        )?;

        let skip_units = enc_ch
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                cfg.lkbr_on_skips
                    .then(|| LkbrUnit::new(&mut store, &format!("skip{i}.lkbr"), c, LKBR_WIDTH, cfg.lkbr_k))
                    .transpose()
            })
            .collect::<Result<Vec<_>>>()?;

        // Decoder stage j upsamples, joins skip DEPTH-1-j and runs a block.
        let ups_in = |j: usize| if j == 0 { c_in } else { cfg.decoder_channels(j - 1) };
        let ups_out = |j: usize| cfg.sl_counts[DEPTH + j] * g;
        let make_stage = |store: &mut ParamStore<T>, prefix: &str, j: usize, ups: bool, fdb: bool| -> Result<DecoderStage> {
            Ok(DecoderStage {
                index: j,
                ups: ups
                    .then(|| UpTransition::new(store, &format!("{prefix}dec{j}.ups"), ups_in(j), ups_out(j)))
                    .transpose()?,
                fdb: fdb
                    .then(|| {
                        FdbUnit::new(
                            store,
                            &format!("{prefix}dec{j}.fdb"),
                            cfg.decoder_input_channels(j),
                            cfg.sl_counts[DEPTH + 1 + j],
                            g,
                            cfg.decoder_concat_input,
                            false,
                        )
                    })
                    .transpose()?,
            })
        };
        let split = cfg.split_after;
        let trunk_decoder = (0..split)
            .map(|j| make_stage(&mut store, "", j, true, j + 1 < split))
            .collect::<Result<Vec<_>>>()?;
        let branches = cfg
            .branches
            .iter()
            .map(|&kind| {
                let prefix = format!("branch.{}.", kind.name());
                let stages = (split - 1..DEPTH)
                    .map(|j| make_stage(&mut store, &prefix, j, j >= split, true))
                    .collect::<Result<Vec<_>>>()?;
                let head = ConvParams::square(
                    &mut store,
                    &format!("{prefix}head"),
                    cfg.decoder_channels(DEPTH - 1),
                    kind.classes(),
                    1,
                )?;
                Ok(Branch { kind, stages, head })
            })
            .collect::<Result<Vec<_>>>()?;

        Ok(Self {
            config: cfg.clone(),
            store,
            stem,
            encoder,
            bottleneck,
            craspp,
            skip_units,
            trunk_decoder,
            branches,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn store(&self) -> &ParamStore<T> {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.store
    }

    pub fn parameter_count(&self) -> usize {
        self.store.numel()
    }

    pub fn branch_kinds(&self) -> Vec<BranchKind> {
        self.branches.iter().map(|b| b.kind).collect()
    }

    /// Branch that owns a parameter, or `None` for trunk parameters.
    pub fn owner(&self, id: ParamId) -> Option<BranchKind> {
        let name = self.store.name(id);
        let rest = name.strip_prefix("branch.")?;
        self.branches.iter().map(|b| b.kind).find(|k| {
            rest.strip_prefix(k.name()).is_some_and(|r| r.starts_with('.'))
        })
    }

    pub fn branch_params(&self, kind: BranchKind) -> Vec<ParamId> {
        self.store.ids().filter(|&id| self.owner(id) == Some(kind)).collect()
    }

    pub fn trunk_params(&self) -> Vec<ParamId> {
        self.store.ids().filter(|&id| self.owner(id).is_none()).collect()
    }

    /// Per-branch probability maps `[N, classes, H, W]`, in branch order.
    pub fn forward(&self, g: &Graph<T>, p: &Bound, x: Var) -> Result<Vec<Var>> {
        let d = g.dims(x);
        if d.len() != 4 || d[1] != 3 {
            return Err(Error::ChannelMismatch {
                op: "network",
                expected: 3,
                got: d.get(1).copied().unwrap_or(0),
            });
        }
        let (h, w) = (d[2], d[3]);
        if h == 0 || w == 0 || h % SPATIAL_DIVISOR != 0 || w % SPATIAL_DIVISOR != 0 {
            return Err(Error::IndivisibleSpatial {
                op: "network",
                h,
                w,
                divisor: SPATIAL_DIVISOR,
            });
        }

        let mut hcur = self.stem.forward(g, p, x)?;
        let mut skips = Vec::with_capacity(DEPTH);
        for stage in &self.encoder {
            hcur = stage.fdb.forward(g, p, hcur)?;
            hcur = stage.frsr.forward(g, p, hcur)?;
            skips.push(hcur);
            hcur = stage.dos.forward(g, p, hcur)?;
        }
        let down = hcur;
        let b = self.bottleneck.forward(g, p, down)?;
        let b = self.craspp.forward(g, p, b)?;
        hcur = g.add(b, down)?;

        let skips = skips
            .into_iter()
            .zip(&self.skip_units)
            .map(|(s, unit)| match unit {
                Some(u) => {
                    let r = u.forward(g, p, s)?;
                    g.concat(&[s, r], 1)
                }
                None => Ok(s),
            })
            .collect::<Result<Vec<_>>>()?;

        for stage in &self.trunk_decoder {
            hcur = stage.forward(g, p, hcur, &skips)?;
        }
        self.branches
            .iter()
            .map(|br| {
                let mut hb = hcur;
                for stage in &br.stages {
                    hb = stage.forward(g, p, hb, &skips)?;
                }
                let logits = br.head.forward(g, p, hb)?;
                g.softmax(logits, 1)
            })
            .collect()
    }

    /// Inference on a batch `[N, 3, H, W]` with frozen parameters.
    pub fn predict(&self, image: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
        let g = Graph::new();
        let p = self.store.bind_frozen(&g);
        let x = g.constant(image.clone());
        Ok(self.forward(&g, &p, x)?.into_iter().map(|v| g.value(v)).collect())
    }
}
