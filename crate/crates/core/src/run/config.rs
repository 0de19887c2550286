//! `key = value` run configuration.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::losses::{DiceDenominator, LossCombo, LossConfig};
use crate::net::{AdamConfig, NetworkConfig, Task, FULL_PROFILE, REDUCED_PROFILE};

/// Environment variable that overrides the configured seed.
pub const SEED_ENV: &str = "SKYSEG_SEED";

/// How cross-entropy class weights of the primary branch are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassWeighting {
    None,
    /// Inverse pixel frequency of the training crops from the first step.
    Static,
    /// Uniform weights ramped linearly to the inverse-frequency weights.
    Scheduled,
}

impl FromStr for ClassWeighting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "static" => Ok(Self::Static),
            "scheduled" => Ok(Self::Scheduled),
            _ => Err(Error::Config(format!("class_weighting `{s}` (expected none, static or scheduled)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub network: NetworkConfig,
    pub loss: LossCombo,
    pub dice_denominator: DiceDenominator,
    pub class_weighting: ClassWeighting,
    pub ramp_epochs: usize,
    /// One multiplier per branch; `None` means all ones.
    pub branch_weights: Option<Vec<f64>>,
    pub adam: AdamConfig,
    pub epochs: usize,
    pub max_steps: Option<usize>,
    pub batch_size: usize,
    pub seed: u64,
    pub flip_augment: bool,
    pub crop_size: usize,
    pub train_overlap: f64,
    pub eval_overlap: f64,
    pub edge_radius: usize,
    pub checkpoint_every: usize,
    pub dataset: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub weights: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::for_network(NetworkConfig::full(Task::Dense20))
    }
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',')
        .map(|s| s.trim().parse().map_err(|_| Error::Config(format!("{key}: cannot parse `{}`", s.trim()))))
        .collect()
}

fn parse_val<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Config(format!("{key}: cannot parse `{v}`")))
}

impl RunConfig {
    pub fn for_network(network: NetworkConfig) -> Self {
        Self {
            network,
            loss: LossCombo::CeSoftIou,
            dice_denominator: DiceDenominator::default(),
            class_weighting: ClassWeighting::Scheduled,
            ramp_epochs: 20,
            branch_weights: None,
            adam: AdamConfig::default(),
            epochs: 60,
            max_steps: None,
            batch_size: 1,
            seed: 0,
            flip_augment: true,
            crop_size: 512,
            train_overlap: 0.5,
            eval_overlap: 0.1,
            edge_radius: crate::data::DEFAULT_EDGE_RADIUS,
            checkpoint_every: 10,
            dataset: None,
            out_dir: None,
            weights: None,
        }
    }

    /// Parses config text. Relative paths are resolved against `base`.
    pub fn parse(text: &str, base: Option<&Path>) -> Result<Self> {
        let mut pairs = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`, got `{line}`", n + 1)))?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        // structural keys first so later keys refine the chosen architecture
        let task = match pairs.iter().find(|(k, _)| k == "task") {
            Some((_, v)) => v.parse::<Task>()?,
            None => Task::Dense20,
        };
        let network = match pairs.iter().find(|(k, _)| k == "profile").map(|(_, v)| v.as_str()) {
            None | Some("full") => NetworkConfig::new(task, &FULL_PROFILE),
            Some("reduced") => NetworkConfig::new(task, &REDUCED_PROFILE),
            Some("micro") => NetworkConfig::micro(task),
            Some(other) => return Err(Error::Config(format!("profile `{other}` (expected full, reduced or micro)"))),
        };
        let mut cfg = Self::for_network(network);
        let path = |v: &str| match base {
            Some(b) if Path::new(v).is_relative() => b.join(v),
            _ => PathBuf::from(v),
        };
        for (k, v) in &pairs {
            let (k, v) = (k.as_str(), v.as_str());
            let net = &mut cfg.network;
            match k {
                "task" | "profile" => {}
                "sl_counts" => net.sl_counts = parse_list(k, v)?,
                "growth_rate" => net.growth_rate = parse_val(k, v)?,
                "stem_channels" => net.stem_channels = parse_val(k, v)?,
                "split_after" => net.split_after = parse_val(k, v)?,
                "craspp_rates" => net.craspp_rates = parse_list(k, v)?,
                "craspp_width" => net.craspp_width = parse_val(k, v)?,
                "lkbr_k" => net.lkbr_k = parse_val(k, v)?,
                "lkbr_on_skips" => net.lkbr_on_skips = parse_val(k, v)?,
                "fdb_residual" => net.fdb_residual = parse_val(k, v)?,
                "decoder_concat_input" => net.decoder_concat_input = parse_val(k, v)?,
                "dos_kernel" => net.dos_kernel = parse_val(k, v)?,
                "loss" => cfg.loss = v.parse()?,
                "dice_denominator" => {
                    cfg.dice_denominator = match v {
                        "sum_of_squares" => DiceDenominator::SumOfSquares,
                        "squared_sums" => DiceDenominator::SquaredSums,
                        _ => return Err(Error::Config(format!("dice_denominator `{v}`"))),
                    }
                }
                "class_weighting" => cfg.class_weighting = v.parse()?,
                "ramp_epochs" => cfg.ramp_epochs = parse_val(k, v)?,
                "branch_weights" => cfg.branch_weights = Some(parse_list(k, v)?),
                "lr" => cfg.adam.lr = parse_val(k, v)?,
                "beta1" => cfg.adam.beta1 = parse_val(k, v)?,
                "beta2" => cfg.adam.beta2 = parse_val(k, v)?,
                "adam_epsilon" => cfg.adam.epsilon = parse_val(k, v)?,
                "epochs" => cfg.epochs = parse_val(k, v)?,
                "max_steps" => cfg.max_steps = Some(parse_val(k, v)?),
                "batch_size" => cfg.batch_size = parse_val(k, v)?,
                "seed" => cfg.seed = parse_val(k, v)?,
                "flip_augment" => cfg.flip_augment = parse_val(k, v)?,
                "crop_size" => cfg.crop_size = parse_val(k, v)?,
                "train_overlap" => cfg.train_overlap = parse_val(k, v)?,
                "eval_overlap" => cfg.eval_overlap = parse_val(k, v)?,
                "edge_radius" => cfg.edge_radius = parse_val(k, v)?,
                "checkpoint_every" => cfg.checkpoint_every = parse_val(k, v)?,
                "dataset" => cfg.dataset = Some(path(v)),
                "out_dir" => cfg.out_dir = Some(path(v)),
                "weights" => cfg.weights = Some(path(v)),
                _ => return Err(Error::Config(format!("unknown key `{k}`"))),
            }
        }
        cfg.network.seed = cfg.seed;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path.parent())
    }

    /// Applies `SKYSEG_SEED` when set.
    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.set_seed(v.trim().parse().map_err(|_| Error::Config(format!("{SEED_ENV}=`{v}` is not an integer")))?);
        }
        Ok(())
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.network.seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        self.network.validate()?;
        let fail = |m: String| Err(Error::Config(m));
        if let Some(w) = &self.branch_weights {
            if w.len() != self.network.branches.len() {
                return fail(format!("branch_weights has {} entries for {} branches", w.len(), self.network.branches.len()));
            }
            if w.iter().any(|&x| !(x >= 0.0 && x.is_finite())) || w.iter().all(|&x| x == 0.0) {
                return fail("branch_weights must be non-negative with at least one positive".into());
            }
        }
        if !(self.adam.lr > 0.0 && self.adam.lr.is_finite()) {
            return fail(format!("lr must be positive, got {}", self.adam.lr));
        }
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1".into());
        }
        if self.crop_size == 0 || self.crop_size % crate::net::SPATIAL_DIVISOR != 0 {
            return fail(format!("crop_size must be a positive multiple of 32, got {}", self.crop_size));
        }
        for (name, o) in [("train_overlap", self.train_overlap), ("eval_overlap", self.eval_overlap)] {
            if !(0.0..1.0).contains(&o) {
                return fail(format!("{name} must be in [0, 1), got {o}"));
            }
        }
        if self.edge_radius == 0 || self.checkpoint_every == 0 {
            return fail("edge_radius and checkpoint_every must be at least 1".into());
        }
        Ok(())
    }

    pub fn loss_config(&self) -> LossConfig {
        let mut l = LossConfig::new(self.loss, self.network.branches.len());
        l.dice_denominator = self.dice_denominator;
        if let Some(w) = &self.branch_weights {
            l.branch_weights = w.clone();
        }
        l
    }

    pub fn require_dataset(&self) -> Result<&Path> {
        self.dataset.as_deref().ok_or_else(|| Error::Config("`dataset` is not set".into()))
    }

    pub fn require_out_dir(&self) -> Result<&Path> {
        self.out_dir.as_deref().ok_or_else(|| Error::Config("`out_dir` is not set".into()))
    }
}
