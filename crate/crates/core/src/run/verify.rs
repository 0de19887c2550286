//! Self-checks runnable from the command line: finite-difference gradients,
//! loss and metric oracles, and the tiling round trip.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::blocks::{CrasppUnit, DownTransition, FdbUnit, FrsrSpec, FrsrUnit, LkbrUnit, SlUnit, UpTransition};
use crate::data::TileGrid;
use crate::error::{Error, Result};
use crate::gradcheck::{gradcheck, perturbed_params, project, GradCheckOptions};
use crate::losses::{cross_entropy, soft_dice_loss, soft_iou_loss, total_loss, DiceDenominator, LossCombo, LossConfig, PROB_FLOOR};
use crate::metrics::ConfusionMatrix;
use crate::net::{Network, NetworkConfig, Task};
use crate::nn::{BatchNormParams, Bound, ConvParams, ParamStore, SeparableConvParams};
use crate::tensor::{Graph, Tensor, Var};

/// Layer and block gradients must agree to this relative error.
pub const UNIT_GRAD_TOL: f64 = 1e-6;
/// End-to-end network gradient tolerance.
pub const NET_GRAD_TOL: f64 = 1e-5;
pub const LOSS_TOL: f64 = 1e-6;
pub const PERFECT_TOL: f64 = 1e-9;
pub const STITCH_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Gradcheck,
    LossOracle,
    MetricOracle,
    TileRoundtrip,
}

impl Suite {
    pub const ALL: [Suite; 4] = [Suite::Gradcheck, Suite::LossOracle, Suite::MetricOracle, Suite::TileRoundtrip];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Gradcheck => "gradcheck",
            Suite::LossOracle => "loss-oracle",
            Suite::MetricOracle => "metric-oracle",
            Suite::TileRoundtrip => "tile-roundtrip",
        }
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown suite `{s}`")))
    }
}

/// One property with its worst observed error.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub observed: f64,
    pub threshold: f64,
    /// Strict `<` unless the threshold is an exact-equality check (0).
    pub pass: bool,
}

impl Check {
    fn below(name: impl Into<String>, observed: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            observed,
            threshold,
            pass: observed < threshold,
        }
    }

    fn exact(name: impl Into<String>, observed: f64) -> Self {
        Self {
            name: name.into(),
            observed,
            threshold: 0.0,
            pass: observed == 0.0,
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.pass { "PASS" } else { "FAIL" };
        if self.threshold == 0.0 {
            write!(f, "{verdict} {}: max error {:.3e} (exact)", self.name, self.observed)
        } else {
            write!(f, "{verdict} {}: max error {:.3e} (< {:.0e})", self.name, self.observed, self.threshold)
        }
    }
}

#[derive(Debug, Clone)]
pub struct SuiteReport {
    pub suite: Suite,
    pub checks: Vec<Check>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{c}")?;
        }
        write!(f, "{}: {}", self.suite.name(), if self.passed() { "all passed" } else { "FAILED" })
    }
}

pub fn run_suite(suite: Suite) -> Result<SuiteReport> {
    let checks = match suite {
        Suite::Gradcheck => gradient_checks()?,
        Suite::LossOracle => loss_checks()?,
        Suite::MetricOracle => metric_checks()?,
        Suite::TileRoundtrip => tile_checks()?,
    };
    Ok(SuiteReport { suite, checks })
}

// ---- gradients ----

fn check_unit<F>(name: &str, store: &ParamStore<f64>, x: Tensor<f64>, seed: u64, f: F) -> Result<Check>
where
    F: Fn(&Graph<f64>, &Bound, Var) -> Result<Var>,
{
    let mut inputs = vec![x];
    inputs.extend(perturbed_params(store, seed));
    let opts = GradCheckOptions {
        max_entries: Some(48),
        seed,
        ..GradCheckOptions::default()
    };
    let r = gradcheck(
        |g, v| project(g, f(g, &Bound::from_vars(v[1..].to_vec()), v[0])?, seed + 1),
        &inputs,
        &opts,
    )?;
    Ok(Check::below(name, r.max_rel_err, UNIT_GRAD_TOL))
}

fn input(dims: &[usize], seed: u64) -> Result<Tensor<f64>> {
    Tensor::uniform(dims, -1.0, 1.0, seed)
}

/// Every layer and block, then the micro network end to end.
pub fn gradient_checks() -> Result<Vec<Check>> {
    let mut out = layer_gradient_checks()?;
    out.extend(block_gradient_checks()?);
    out.push(network_gradient_check(Task::Lane13, 2)?);
    Ok(out)
}

pub fn layer_gradient_checks() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    // (name, kernel, stride, dilation, bias, input dims)
    let convs: [(&str, (usize, usize), usize, usize, bool, [usize; 4]); 4] = [
        ("conv 3x3", (3, 3), 1, 1, true, [2, 2, 5, 5]),
        ("conv 3x3 dilation 2", (3, 3), 1, 2, true, [1, 2, 6, 6]),
        ("conv 1x5", (1, 5), 1, 1, false, [1, 2, 4, 6]),
        ("conv 3x3 stride 2", (3, 3), 2, 1, true, [1, 2, 5, 5]),
    ];
    for (i, (name, kernel, stride, dilation, bias, dims)) in convs.into_iter().enumerate() {
        let mut store = ParamStore::<f64>::new(1);
        let conv = ConvParams::new(&mut store, "conv", dims[1], 3, kernel, stride, dilation, bias)?;
        let seed = 10 + 2 * i as u64;
        out.push(check_unit(name, &store, input(&dims, seed)?, seed + 1, |g, p, x| conv.forward(g, p, x))?);
    }
    let mut store = ParamStore::<f64>::new(2);
    let sep = SeparableConvParams::new(&mut store, "sep", 3, 4, 3)?;
    out.push(check_unit("separable conv 3x3", &store, input(&[2, 3, 4, 4], 30)?, 31, |g, p, x| sep.forward(g, p, x))?);
    let mut store = ParamStore::<f64>::new(3);
    let bn = BatchNormParams::new(&mut store, "bn", 3)?;
    out.push(check_unit("batch norm", &store, input(&[2, 3, 3, 3], 32)?, 33, |g, p, x| bn.forward(g, p, x))?);
    let empty = ParamStore::<f64>::new(0);
    out.push(check_unit("max pool 2x2", &empty, input(&[1, 2, 4, 6], 34)?, 35, |g, _, x| g.maxpool2(x))?);
    out.push(check_unit("upsample x2", &empty, input(&[1, 2, 3, 2], 36)?, 37, |g, _, x| g.upsample_nn2(x))?);
    out.push(check_unit("softmax", &empty, input(&[2, 4, 2, 3], 38)?, 39, |g, _, x| g.softmax(x, 1))?);
    out.push(check_unit("relu", &empty, input(&[2, 3, 4], 40)?, 41, |g, _, x| Ok(g.relu(x)))?);
    Ok(out)
}

pub fn block_gradient_checks() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let mut s = ParamStore::<f64>::new(4);
    let sl = SlUnit::new(&mut s, "sl", 3, 2)?;
    out.push(check_unit("SL unit", &s, input(&[2, 3, 4, 4], 50)?, 51, |g, p, x| sl.forward(g, p, x))?);

    let mut s = ParamStore::<f64>::new(5);
    let fdb = FdbUnit::new(&mut s, "fdb", 3, 2, 2, true, true)?;
    out.push(check_unit("FDB", &s, input(&[2, 3, 4, 4], 52)?, 53, |g, p, x| fdb.forward(g, p, x))?);

    for stage in 0..2 {
        let mut s = ParamStore::<f64>::new(6);
        let frsr = FrsrUnit::new(&mut s, "frsr", FrsrSpec::for_stage(stage, 4, 2, 2))?;
        let name = format!("FRSR stage {}", stage + 1);
        out.push(check_unit(&name, &s, input(&[2, 4, 4, 4], 54 + stage as u64)?, 56, |g, p, x| frsr.forward(g, p, x))?);
    }

    let mut s = ParamStore::<f64>::new(7);
    let craspp = CrasppUnit::new(&mut s, "craspp", 3, 2, 3, &[1, 2])?;
    out.push(check_unit("CRASPP", &s, input(&[2, 3, 4, 4], 57)?, 58, |g, p, x| craspp.forward(g, p, x))?);

    let mut s = ParamStore::<f64>::new(8);
    let lkbr = LkbrUnit::new(&mut s, "lkbr", 3, 2, 5)?;
    out.push(check_unit("LKBR", &s, input(&[1, 3, 6, 6], 59)?, 60, |g, p, x| lkbr.forward(g, p, x))?);

    let mut s = ParamStore::<f64>::new(9);
    let down = DownTransition::new(&mut s, "down", 3, 3, 1)?;
    out.push(check_unit("down transition", &s, input(&[2, 3, 4, 4], 61)?, 62, |g, p, x| down.forward(g, p, x))?);

    let mut s = ParamStore::<f64>::new(10);
    let up = UpTransition::new(&mut s, "up", 3, 2)?;
    out.push(check_unit("up transition", &s, input(&[1, 3, 2, 2], 63)?, 64, |g, p, x| up.forward(g, p, x))?);
    Ok(out)
}

/// Micro network (one SL per block, growth 2) on two 32x32 images.
///
/// The scalar is a fixed random projection of every branch output, scaled
/// to order one so round-off stays well under the absolute floor. ReLU and
/// max-pool kinks are dense at this size, so each entry uses the step
/// search of [`GradCheckOptions::step_search`].
pub fn network_gradient_check(task: Task, entries_per_tensor: usize) -> Result<Check> {
    let net = Network::<f64>::build(&NetworkConfig::micro(task).with_seed(11))?;
    let mut inputs = vec![Tensor::uniform(&[2, 3, 32, 32], 0.0, 1.0, 13)?];
    inputs.extend(perturbed_params(net.store(), 14));
    let opts = GradCheckOptions {
        step: 1e-4,
        step_search: true,
        max_entries: Some(entries_per_tensor),
        seed: 15,
        ..GradCheckOptions::default()
    };
    let r = gradcheck(
        |g, v| {
            let outs = net.forward(g, &Bound::from_vars(v[1..].to_vec()), v[0])?;
            let mut total = None;
            for (b, o) in outs.into_iter().enumerate() {
                let n = g.dims(o).iter().product::<usize>() as f64;
                let term = g.scale(project(g, o, 100 + b as u64)?, 1.0 / n.sqrt());
                total = Some(match total {
                    Some(t) => g.add(t, term)?,
                    None => term,
                });
            }
            total.ok_or_else(|| Error::invalid("network gradient check", "network has no branches"))
        },
        &inputs,
        &opts,
    )?;
    let worst = r.worst.map_or(String::new(), |(k, i, a, n)| {
        let tensor = if k == 0 { "input" } else { net.store().iter().nth(k - 1).map_or("?", |(name, _)| name) };
        format!(", worst {tensor}[{i}]: analytic {a:.6e}, numeric {n:.6e}")
    });
    Ok(Check::below(
        format!("micro network ({task}, {} entries{worst})", r.checked),
        r.max_rel_err,
        NET_GRAD_TOL,
    ))
}

// ---- losses ----

/// Scalar-loop reference values: `p[c][n]`, `y[c][n]`.
pub mod oracle {
    use super::PROB_FLOOR;

    pub fn cross_entropy(p: &[Vec<f64>], y: &[Vec<f64>]) -> f64 {
        let c = p.len() as f64;
        let mut acc = 0.0;
        for (pc, yc) in p.iter().zip(y) {
            for (&pv, &yv) in pc.iter().zip(yc) {
                acc += yv * pv.max(PROB_FLOOR).ln();
            }
        }
        -acc / c
    }

    fn region(p: &[Vec<f64>], y: &[Vec<f64>], ratio: impl Fn(f64, f64, f64, f64, f64) -> f64) -> f64 {
        let (mut acc, mut present) = (0.0, 0usize);
        for (pc, yc) in p.iter().zip(y) {
            let (mut inter, mut sy, mut sp, mut sy2, mut sp2) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for (&pv, &yv) in pc.iter().zip(yc) {
                inter += pv * yv;
                sy += yv;
                sp += pv;
                sy2 += yv * yv;
                sp2 += pv * pv;
            }
            if sy > 0.0 {
                present += 1;
                acc += ratio(inter, sy, sp, sy2, sp2);
            }
        }
        if present == 0 {
            0.0
        } else {
            -acc / present as f64
        }
    }

    pub fn soft_iou(p: &[Vec<f64>], y: &[Vec<f64>]) -> f64 {
        region(p, y, |i, sy, sp, _, _| i / (sy + sp - i))
    }

    pub fn soft_dice(p: &[Vec<f64>], y: &[Vec<f64>]) -> f64 {
        region(p, y, |i, _, _, sy2, sp2| 2.0 * i / (sy2 + sp2))
    }
}

fn random_instance(rng: &mut ChaCha8Rng) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let c = rng.gen_range(1..=5);
    let n = rng.gen_range(1..=64);
    let mut p = vec![vec![0.0; n]; c];
    let mut y = vec![vec![0.0; n]; c];
    for i in 0..n {
        let raw: Vec<f64> = (0..c).map(|_| rng.gen_range(0.01..1.0)).collect();
        let s: f64 = raw.iter().sum();
        for k in 0..c {
            p[k][i] = raw[k] / s;
        }
        y[rng.gen_range(0..c)][i] = 1.0;
    }
    (p, y)
}

fn to_tensor(v: &[Vec<f64>]) -> Result<Tensor<f64>> {
    Tensor::from_vec(&[1, v.len(), v[0].len()], v.concat())
}

fn graph_losses(p: &[Vec<f64>], y: &[Vec<f64>]) -> Result<[f64; 3]> {
    let g = Graph::new();
    let pv = g.constant(to_tensor(p)?);
    let yt = to_tensor(y)?;
    Ok([
        g.value(cross_entropy(&g, pv, &yt, None)?).item(),
        g.value(soft_iou_loss(&g, pv, &yt)?).item(),
        g.value(soft_dice_loss(&g, pv, &yt, DiceDenominator::SumOfSquares)?).item(),
    ])
}

pub fn loss_checks() -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let mut worst = [0.0f64; 3];
    let mut additivity = 0.0f64;
    for _ in 0..100 {
        let (p, y) = random_instance(&mut rng);
        let got = graph_losses(&p, &y)?;
        let want = [oracle::cross_entropy(&p, &y), oracle::soft_iou(&p, &y), oracle::soft_dice(&p, &y)];
        for k in 0..3 {
            worst[k] = worst[k].max((got[k] - want[k]).abs());
        }
        let g = Graph::new();
        let pv = g.constant(to_tensor(&p)?);
        let yt = to_tensor(&y)?;
        let combined = g.value(total_loss(&g, &LossConfig::new(LossCombo::CeSoftIou, 1), &[pv], &[yt.clone()], 0)?.total).item();
        let separate = g.value(cross_entropy(&g, pv, &yt, None)?).item() + g.value(soft_iou_loss(&g, pv, &yt)?).item();
        additivity = additivity.max((combined - separate).abs());
    }
    let mut out = vec![
        Check::below("cross-entropy vs scalar loop (100 instances)", worst[0], LOSS_TOL),
        Check::below("soft-IoU vs scalar loop (100 instances)", worst[1], LOSS_TOL),
        Check::below("soft-Dice vs scalar loop (100 instances)", worst[2], LOSS_TOL),
        Check::exact("ce+soft_iou additivity", additivity),
    ];
    let mut perfect = [0.0f64; 3];
    for _ in 0..20 {
        let (_, y) = random_instance(&mut rng);
        let got = graph_losses(&y, &y)?;
        for (k, want) in [0.0, -1.0, -1.0].into_iter().enumerate() {
            perfect[k] = perfect[k].max((got[k] - want).abs());
        }
    }
    out.push(Check::below("perfect prediction cross-entropy = 0", perfect[0], PERFECT_TOL));
    out.push(Check::below("perfect prediction soft-IoU = -1", perfect[1], PERFECT_TOL));
    out.push(Check::below("perfect prediction soft-Dice = -1", perfect[2], PERFECT_TOL));
    Ok(out)
}

// ---- metrics ----

pub fn metric_checks() -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(200);
    let (mut counts_err, mut metric_err) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let c = rng.gen_range(2..=6usize);
        let n = rng.gen_range(1..=200);
        let gt: Vec<u8> = (0..n).map(|_| rng.gen_range(0..c as u8)).collect();
        let pred: Vec<u8> = (0..n).map(|_| rng.gen_range(0..c as u8)).collect();
        let mut cm = ConfusionMatrix::new(c);
        cm.accumulate(&gt, &pred, None)?;
        let mut ious = Vec::new();
        let (mut precs, mut recs) = (Vec::new(), Vec::new());
        let mut fw = 0.0;
        let mut correct = 0usize;
        for k in 0..c as u8 {
            let pairs = gt.iter().zip(&pred);
            let tp = pairs.clone().filter(|&(&a, &b)| a == k && b == k).count();
            let fp = pairs.clone().filter(|&(&a, &b)| a != k && b == k).count();
            let fn_ = pairs.filter(|&(&a, &b)| a == k && b != k).count();
            correct += tp;
            counts_err = counts_err
                .max((cm.tp(k as usize) as f64 - tp as f64).abs())
                .max((cm.fp(k as usize) as f64 - fp as f64).abs())
                .max((cm.fn_(k as usize) as f64 - fn_ as f64).abs());
            if tp + fp + fn_ > 0 {
                let iou = tp as f64 / (tp + fp + fn_) as f64;
                ious.push(iou);
                fw += (tp + fn_) as f64 / n as f64 * iou;
            }
            if tp + fp > 0 {
                precs.push(tp as f64 / (tp + fp) as f64);
            }
            if tp + fn_ > 0 {
                recs.push(tp as f64 / (tp + fn_) as f64);
            }
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        for (got, want) in [
            (cm.mean_iou(), mean(&ious)),
            (cm.fw_iou(), fw),
            (cm.pixel_accuracy(), correct as f64 / n as f64),
            (cm.mean_precision(), mean(&precs)),
            (cm.mean_recall(), mean(&recs)),
        ] {
            metric_err = metric_err.max((got - want).abs());
        }
    }
    // TP=3, FP=1, FN=2 for class 1
    let mut hand = ConfusionMatrix::new(2);
    hand.accumulate(&[1, 1, 1, 0, 1, 1], &[1, 1, 1, 1, 0, 0], None)?;
    let iou = hand.iou_per_class()[1].unwrap_or(f64::NAN);
    Ok(vec![
        Check::exact("confusion counts vs brute force (100 maps)", counts_err),
        Check::below("five metrics vs brute force (100 maps)", metric_err, 1e-12),
        Check::exact("hand case TP=3 FP=1 FN=2 gives IoU 0.5", (iou - 0.5).abs()),
    ])
}

// ---- tiling ----

pub fn tile_checks() -> Result<Vec<Check>> {
    let grid = TileGrid::new(1024, 1024, 512, 0.5)?;
    let map = Tensor::<f64>::uniform(&[2, 1024, 1024], 0.0, 1.0, 300)?;
    let back = grid.stitch(&grid.split(&map)?)?;
    let zero = TileGrid::new(1024, 1024, 512, 0.0)?;
    let exact = zero.stitch(&zero.split(&map)?)?;
    let clamped = TileGrid::new(512, 700, 512, 0.1)?;
    Ok(vec![
        Check::exact("1024x1024, S=512, overlap 0.5 gives 9 tiles", (grid.len() as f64 - 9.0).abs()),
        Check::below("stitch(split(map)) at overlap 0.5", back.max_abs_diff(&map), STITCH_TOL),
        Check::exact("stitch(split(map)) at overlap 0", exact.max_abs_diff(&map)),
        Check::exact("700 px axis at overlap 0.1 has origins 0 and 188", if clamped.xs == [0, 188] { 0.0 } else { 1.0 }),
    ])
}
