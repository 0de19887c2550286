use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// SL counts of the full profile: five encoder stages, bottleneck, five
/// decoder stages.
pub const FULL_PROFILE: [usize; 11] = [4, 5, 7, 10, 12, 15, 12, 10, 7, 5, 4];
/// SL counts of the reduced ablation profile.
pub const REDUCED_PROFILE: [usize; 11] = [1, 2, 3, 4, 5, 6, 5, 4, 3, 2, 1];
/// Number of pooling (and unpooling) steps.
pub const DEPTH: usize = 5;
/// Input height and width must be multiples of this.
pub const SPATIAL_DIVISOR: usize = 1 << DEPTH;

/// Segmentation task; selects the set of output branches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Task {
    Dense20,
    Lane13,
    Category11,
    EdgeBinary,
    EdgeMulti,
}

impl Task {
    pub const ALL: [Task; 5] = [Task::Dense20, Task::Lane13, Task::Category11, Task::EdgeBinary, Task::EdgeMulti];

    pub fn branches(self) -> Vec<BranchKind> {
        use BranchKind::*;
        match self {
            Task::Dense20 => vec![Semantic, EdgeMulti, EdgeBinary],
            Task::Lane13 => vec![LaneMulti, LaneBinary],
            Task::Category11 => vec![Category],
            Task::EdgeBinary => vec![EdgeBinary],
            Task::EdgeMulti => vec![EdgeMulti],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Task::Dense20 => "dense20",
            Task::Lane13 => "lane13",
            Task::Category11 => "category11",
            Task::EdgeBinary => "edge-binary",
            Task::EdgeMulti => "edge-multi",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Task::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown task `{s}`")))
    }
}

/// One prediction head and the target it is trained against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BranchKind {
    /// Dense 20-class semantics.
    Semantic,
    /// Boundary pixels labelled with their dense class, background 0.
    EdgeMulti,
    /// Boundary vs non-boundary.
    EdgeBinary,
    /// 13 lane-marking classes.
    LaneMulti,
    /// Lane marking vs background.
    LaneBinary,
    /// 11 merged categories.
    Category,
}

impl BranchKind {
    pub fn name(self) -> &'static str {
        match self {
            BranchKind::Semantic => "semantic",
            BranchKind::EdgeMulti => "edge_multi",
            BranchKind::EdgeBinary => "edge_binary",
            BranchKind::LaneMulti => "lane_multi",
            BranchKind::LaneBinary => "lane_binary",
            BranchKind::Category => "category",
        }
    }

    pub fn classes(self) -> usize {
        match self {
            BranchKind::Semantic | BranchKind::EdgeMulti => 20,
            BranchKind::LaneMulti => 13,
            BranchKind::Category => 11,
            BranchKind::EdgeBinary | BranchKind::LaneBinary => 2,
        }
    }
}

impl fmt::Display for BranchKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Declarative description of a network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    pub task: Task,
    pub sl_counts: Vec<usize>,
    pub growth_rate: usize,
    pub stem_channels: usize,
    pub branches: Vec<BranchKind>,
    /// Branches separate after this many decoder upsamplings.
    pub split_after: usize,
    pub craspp_rates: Vec<usize>,
    pub craspp_width: usize,
    pub lkbr_k: usize,
    /// Run a large-kernel unit on every skip connection.
    pub lkbr_on_skips: bool,
    /// Add the block input onto the leading channels of encoder blocks.
    pub fdb_residual: bool,
    /// Decoder blocks also emit their input (FC-DenseNet down-path style).
    pub decoder_concat_input: bool,
    /// Kernel of the convolution inside each downsampling transition.
    pub dos_kernel: usize,
    pub seed: u64,
}

impl NetworkConfig {
    pub fn new(task: Task, sl_counts: &[usize]) -> Self {
        let growth_rate = 16;
        Self {
            task,
            sl_counts: sl_counts.to_vec(),
            growth_rate,
            stem_channels: 48,
            branches: task.branches(),
            split_after: 2,
            craspp_rates: vec![1, 6, 12, 18],
            craspp_width: 4 * growth_rate,
            lkbr_k: 7,
            lkbr_on_skips: true,
            fdb_residual: true,
            decoder_concat_input: false,
            dos_kernel: 1,
            seed: 0,
        }
    }

    pub fn full(task: Task) -> Self {
        Self::new(task, &FULL_PROFILE)
    }

    pub fn reduced(task: Task) -> Self {
        Self::new(task, &REDUCED_PROFILE)
    }

    /// Smallest useful configuration: one SL per block, growth 2, narrow
    /// stem and pyramid.
    pub fn micro(task: Task) -> Self {
        let mut c = Self::new(task, &[1; 11]);
        c.growth_rate = 2;
        c.stem_channels = 4;
        c.craspp_width = 2;
        c.craspp_rates = vec![1, 2];
        c.lkbr_k = 3;
        c
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.sl_counts.len() != 2 * DEPTH + 1 {
            return fail(format!("sl_counts needs {} entries, got {}", 2 * DEPTH + 1, self.sl_counts.len()));
        }
        if self.sl_counts.contains(&0) {
            return fail("every sl_count must be at least 1".into());
        }
        if self.growth_rate == 0 || self.stem_channels == 0 || self.craspp_width == 0 || self.lkbr_k == 0 {
            return fail("growth_rate, stem_channels, craspp_width and lkbr_k must be positive".into());
        }
        if self.branches.is_empty() {
            return fail("at least one branch is required".into());
        }
        for (i, b) in self.branches.iter().enumerate() {
            if self.branches[..i].contains(b) {
                return fail(format!("duplicate branch `{b}`"));
            }
        }
        if !(1..=DEPTH).contains(&self.split_after) {
            return fail(format!("split_after must be in 1..={DEPTH}, got {}", self.split_after));
        }
        if self.craspp_rates.is_empty() || self.craspp_rates.contains(&0) {
            return fail(format!("craspp_rates must be non-empty and positive, got {:?}", self.craspp_rates));
        }
        if self.dos_kernel != 1 && self.dos_kernel != 3 {
            return fail(format!("dos_kernel must be 1 or 3, got {}", self.dos_kernel));
        }
        Ok(())
    }

    /// Output channels of each encoder block (`in + n*g`, chained).
    pub fn encoder_channels(&self) -> Vec<usize> {
        let mut c = self.stem_channels;
        self.sl_counts[..DEPTH]
            .iter()
            .map(|&n| {
                c += n * self.growth_rate;
                c
            })
            .collect()
    }

    /// Channels entering the bottleneck pyramid.
    pub fn bottleneck_channels(&self) -> usize {
        self.encoder_channels()[DEPTH - 1] + self.sl_counts[DEPTH] * self.growth_rate
    }

    /// Channels entering the decoder stage `j` block after skip concatenation.
    pub fn decoder_input_channels(&self, j: usize) -> usize {
        let up = self.sl_counts[DEPTH + j] * self.growth_rate;
        let skip = self.encoder_channels()[DEPTH - 1 - j];
        up + skip + if self.lkbr_on_skips { crate::blocks::LKBR_WIDTH } else { 0 }
    }

    /// Output channels of decoder stage `j`.
    pub fn decoder_channels(&self, j: usize) -> usize {
        let new = self.sl_counts[DEPTH + 1 + j] * self.growth_rate;
        if self.decoder_concat_input {
            self.decoder_input_channels(j) + new
        } else {
            new
        }
    }
}
