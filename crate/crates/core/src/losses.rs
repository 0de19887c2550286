//! Segmentation losses over probability maps `[B, C, ...]` (class axis 1)
//! and one-hot targets of the same shape.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Graph, Tensor, Var};

/// Probabilities are clamped to this before the logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

/// Which loss terms are summed per branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossCombo {
    Ce,
    SoftIou,
    SoftDice,
    CeSoftIou,
    CeSoftDice,
}

impl LossCombo {
    pub const ALL: [LossCombo; 5] = [
        LossCombo::Ce,
        LossCombo::SoftIou,
        LossCombo::SoftDice,
        LossCombo::CeSoftIou,
        LossCombo::CeSoftDice,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossCombo::Ce => "ce",
            LossCombo::SoftIou => "soft_iou",
            LossCombo::SoftDice => "soft_dice",
            LossCombo::CeSoftIou => "ce+soft_iou",
            LossCombo::CeSoftDice => "ce+soft_dice",
        }
    }

    pub fn uses_ce(self) -> bool {
        matches!(self, LossCombo::Ce | LossCombo::CeSoftIou | LossCombo::CeSoftDice)
    }

    pub fn region(self) -> Option<RegionLoss> {
        match self {
            LossCombo::SoftIou | LossCombo::CeSoftIou => Some(RegionLoss::SoftIou),
            LossCombo::SoftDice | LossCombo::CeSoftDice => Some(RegionLoss::SoftDice),
            LossCombo::Ce => None,
        }
    }
}

impl fmt::Display for LossCombo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossCombo {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LossCombo::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown loss combo `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegionLoss {
    SoftIou,
    SoftDice,
}

/// Denominator of the soft Dice term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DiceDenominator {
    /// `sum(y^2) + sum(p^2)`.
    #[default]
    SumOfSquares,
    /// `(sum y)^2 + (sum p)^2`.
    SquaredSums,
}

/// Linear ramp from `start` to `target` class weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSchedule {
    pub start: Vec<f64>,
    pub target: Vec<f64>,
    pub ramp_epochs: usize,
}

impl WeightSchedule {
    /// Uniform start weights ramping to `target`.
    pub fn from_target(target: Vec<f64>, ramp_epochs: usize) -> Self {
        Self {
            start: vec![1.0; target.len()],
            target,
            ramp_epochs,
        }
    }

    pub fn weights(&self, epoch: usize) -> Vec<f64> {
        let t = if self.ramp_epochs == 0 {
            1.0
        } else {
            (epoch as f64 / self.ramp_epochs as f64).min(1.0)
        };
        self.start.iter().zip(&self.target).map(|(s, e)| s + t * (e - s)).collect()
    }
}

/// Inverse pixel frequency per class, scaled so present classes average 1.
/// Classes with no pixels get weight 1.
pub fn inverse_frequency_weights(counts: &[u64]) -> Vec<f64> {
    let total: u64 = counts.iter().sum();
    let inv: Vec<Option<f64>> = counts
        .iter()
        .map(|&c| (c > 0).then(|| total as f64 / c as f64))
        .collect();
    let present: Vec<f64> = inv.iter().flatten().copied().collect();
    if present.is_empty() {
        return vec![1.0; counts.len()];
    }
    let mean = present.iter().sum::<f64>() / present.len() as f64;
    inv.into_iter().map(|w| w.map_or(1.0, |w| w / mean)).collect()
}

/// One-hot encoding of `labels` (`[B, spatial...]`) into `[B, classes, spatial...]`.
pub fn one_hot<T: Scalar>(labels: &[u8], dims: &[usize], classes: usize) -> Result<Tensor<T>> {
    if dims.is_empty() || crate::tensor::numel(dims)? != labels.len() {
        return Err(Error::ElementCount {
            dims: dims.to_vec(),
            len: labels.len(),
        });
    }
    let b = dims[0];
    let spatial = labels.len() / b.max(1);
    let mut out = vec![T::zero(); labels.len() * classes];
    for (i, &l) in labels.iter().enumerate() {
        let l = l as usize;
        if l >= classes {
            return Err(Error::LabelOutOfRange { label: l, classes });
        }
        let (n, s) = (i / spatial, i % spatial);
        out[(n * classes + l) * spatial + s] = T::one();
    }
    let mut odims = vec![b, classes];
    odims.extend_from_slice(&dims[1..]);
    Tensor::from_vec(&odims, out)
}

fn check_pair<T: Scalar>(g: &Graph<T>, probs: Var, target: &Tensor<T>, op: &'static str) -> Result<Vec<usize>> {
    let d = g.dims(probs);
    if d.len() < 2 || d != target.dims() {
        return Err(Error::ShapeMismatch {
            op,
            lhs: d,
            rhs: target.dims().to_vec(),
        });
    }
    Ok(d)
}

fn non_class_axes(rank: usize) -> Vec<usize> {
    (0..rank).filter(|&a| a != 1).collect()
}

/// Per-class sums of the target over all non-class axes.
fn class_totals<T: Scalar>(target: &Tensor<T>) -> Vec<f64> {
    let d = target.dims();
    let c = d[1];
    let inner: usize = d[2..].iter().product();
    let mut tot = vec![0.0; c];
    for (i, v) in target.data().iter().enumerate() {
        tot[(i / inner) % c] += v.as_f64();
    }
    tot
}

/// `-(1/C) * sum_c w_c * sum_n y log p`, with `p` clamped at [`PROB_FLOOR`].
pub fn cross_entropy<T: Scalar>(g: &Graph<T>, probs: Var, target: &Tensor<T>, weights: Option<&[f64]>) -> Result<Var> {
    let d = check_pair(g, probs, target, "cross_entropy")?;
    let c = d[1];
    if let Some(w) = weights {
        if w.len() != c {
            return Err(Error::ShapeMismatch {
                op: "cross_entropy weights",
                lhs: vec![c],
                rhs: vec![w.len()],
            });
        }
    }
    let pv = g.value(probs);
    let clamped = pv
        .data()
        .iter()
        .zip(target.data())
        .filter(|(p, y)| y.as_f64() > 0.0 && p.as_f64() < PROB_FLOOR)
        .count();
    if clamped > 0 {
        log::warn!("cross_entropy: {clamped} true-class probabilities clamped to {PROB_FLOOR}");
    }
    let logp = g.log(g.clamp_min(probs, PROB_FLOOR))?;
    let y = g.constant(target.clone());
    let per_class = g.sum_axes(g.mul(y, logp)?, &non_class_axes(d.len()))?;
    let per_class = match weights {
        Some(w) => {
            let wt = Tensor::from_vec(&[c], w.iter().map(|&v| T::from_f64_lossy(v)).collect())?;
            g.mul(per_class, g.constant(wt))?
        }
        None => per_class,
    };
    Ok(g.scale(g.sum(per_class), -1.0 / c as f64))
}

/// Per-class intersection and the classes with a non-empty target.
fn overlap<T: Scalar>(g: &Graph<T>, probs: Var, target: &Tensor<T>, op: &'static str) -> Result<(Var, Var, Vec<usize>, Vec<usize>)> {
    let d = check_pair(g, probs, target, op)?;
    let axes = non_class_axes(d.len());
    let present: Vec<usize> = class_totals(target)
        .iter()
        .enumerate()
        .filter(|(_, &t)| t > 0.0)
        .map(|(c, _)| c)
        .collect();
    let y = g.constant(target.clone());
    let inter = g.sum_axes(g.mul(y, probs)?, &axes)?;
    Ok((y, inter, axes, present))
}

fn mean_over_present<T: Scalar>(g: &Graph<T>, ratio: Var, present: &[usize]) -> Result<Var> {
    if present.is_empty() {
        return Ok(g.constant(Tensor::scalar(T::zero())));
    }
    let kept = g.select(ratio, 0, present)?;
    Ok(g.scale(g.sum(kept), -1.0 / present.len() as f64))
}

/// `-(1/|P|) * sum_{c in P} I_c / (sum y + sum p - I_c)` where `P` are the
/// classes present in the target.
pub fn soft_iou_loss<T: Scalar>(g: &Graph<T>, probs: Var, target: &Tensor<T>) -> Result<Var> {
    let (y, inter, axes, present) = overlap(g, probs, target, "soft_iou_loss")?;
    let sy = g.sum_axes(y, &axes)?;
    let sp = g.sum_axes(probs, &axes)?;
    let union = g.sub(g.add(sy, sp)?, inter)?;
    mean_over_present(g, g.div(inter, union)?, &present)
}

/// `-(1/|P|) * sum_{c in P} 2 I_c / D_c` with `D_c` per [`DiceDenominator`].
pub fn soft_dice_loss<T: Scalar>(g: &Graph<T>, probs: Var, target: &Tensor<T>, denom: DiceDenominator) -> Result<Var> {
    let (y, inter, axes, present) = overlap(g, probs, target, "soft_dice_loss")?;
    let den = match denom {
        DiceDenominator::SumOfSquares => g.add(g.sum_axes(g.square(y), &axes)?, g.sum_axes(g.square(probs), &axes)?)?,
        DiceDenominator::SquaredSums => g.add(g.square(g.sum_axes(y, &axes)?), g.square(g.sum_axes(probs, &axes)?))?,
    };
    mean_over_present(g, g.div(g.scale(inter, 2.0), den)?, &present)
}

/// Loss selection shared by all branches.
#[derive(Debug, Clone, PartialEq)]
pub struct LossConfig {
    pub combo: LossCombo,
    /// Cross-entropy class weights for the first (primary) branch.
    pub class_weights: Option<Vec<f64>>,
    /// When set, overrides `class_weights` with the epoch's scheduled weights.
    pub schedule: Option<WeightSchedule>,
    /// Multiplier per branch; a zero weight drops the branch from the graph.
    pub branch_weights: Vec<f64>,
    pub dice_denominator: DiceDenominator,
}

impl LossConfig {
    pub fn new(combo: LossCombo, branches: usize) -> Self {
        Self {
            combo,
            class_weights: None,
            schedule: None,
            branch_weights: vec![1.0; branches],
            dice_denominator: DiceDenominator::default(),
        }
    }

    fn primary_weights(&self, epoch: usize) -> Option<Vec<f64>> {
        match &self.schedule {
            Some(s) => Some(s.weights(epoch)),
            None => self.class_weights.clone(),
        }
    }
}

/// Loss terms of one branch, as graph nodes.
#[derive(Debug, Clone, Copy)]
pub struct BranchLoss {
    pub ce: Option<Var>,
    pub region: Option<Var>,
    /// `ce + region`, unweighted.
    pub total: Var,
}

/// Component losses of one branch under `config`.
pub fn branch_loss<T: Scalar>(
    g: &Graph<T>,
    config: &LossConfig,
    probs: Var,
    target: &Tensor<T>,
    class_weights: Option<&[f64]>,
) -> Result<BranchLoss> {
    let ce = config
        .combo
        .uses_ce()
        .then(|| cross_entropy(g, probs, target, class_weights))
        .transpose()?;
    let region = match config.combo.region() {
        Some(RegionLoss::SoftIou) => Some(soft_iou_loss(g, probs, target)?),
        Some(RegionLoss::SoftDice) => Some(soft_dice_loss(g, probs, target, config.dice_denominator)?),
        None => None,
    };
    let total = match (ce, region) {
        (Some(a), Some(b)) => g.add(a, b)?,
        (Some(a), None) | (None, Some(a)) => a,
        (None, None) => unreachable!("every combo has at least one term"),
    };
    Ok(BranchLoss { ce, region, total })
}

/// Total loss plus per-branch components (`None` for dropped branches).
#[derive(Debug, Clone)]
pub struct TotalLoss {
    pub total: Var,
    pub branches: Vec<Option<BranchLoss>>,
}

/// Weighted sum of branch losses. Class weights (or the schedule at
/// `epoch`) enter the cross-entropy of the first branch only.
pub fn total_loss<T: Scalar>(
    g: &Graph<T>,
    config: &LossConfig,
    outputs: &[Var],
    targets: &[Tensor<T>],
    epoch: usize,
) -> Result<TotalLoss> {
    if outputs.len() != targets.len() || outputs.len() != config.branch_weights.len() {
        return Err(Error::invalid(
            "total_loss",
            format!(
                "{} outputs, {} targets and {} branch weights",
                outputs.len(),
                targets.len(),
                config.branch_weights.len()
            ),
        ));
    }
    let primary = config.primary_weights(epoch);
    let mut total: Option<Var> = None;
    let mut branches = Vec::with_capacity(outputs.len());
    for (i, ((&out, target), &bw)) in outputs.iter().zip(targets).zip(&config.branch_weights).enumerate() {
        if bw == 0.0 {
            branches.push(None);
            continue;
        }
        let weights = if i == 0 { primary.as_deref() } else { None };
        let b = branch_loss(g, config, out, target, weights)?;
        let term = if bw == 1.0 { b.total } else { g.scale(b.total, bw) };
        total = Some(match total {
            Some(t) => g.add(t, term)?,
            None => term,
        });
        branches.push(Some(b));
    }
    let total = total.ok_or_else(|| Error::invalid("total_loss", "every branch weight is zero"))?;
    Ok(TotalLoss { total, branches })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{gradcheck, GradCheckOptions};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    // Plain loops over [C][N] nested vectors, independent of the graph.
    fn oracle_ce(p: &[Vec<f64>], y: &[Vec<f64>], w: Option<&[f64]>) -> f64 {
        let c = p.len();
        let mut acc = 0.0;
        for k in 0..c {
            let mut inner = 0.0;
            for n in 0..p[k].len() {
                inner += y[k][n] * p[k][n].max(PROB_FLOOR).ln();
            }
            acc += w.map_or(1.0, |w| w[k]) * inner;
        }
        -acc / c as f64
    }

    fn oracle_region(p: &[Vec<f64>], y: &[Vec<f64>], dice: bool) -> f64 {
        let mut acc = 0.0;
        let mut present = 0;
        for k in 0..p.len() {
            let (mut i, mut sy, mut sp, mut sy2, mut sp2) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for n in 0..p[k].len() {
                i += y[k][n] * p[k][n];
                sy += y[k][n];
                sp += p[k][n];
                sy2 += y[k][n] * y[k][n];
                sp2 += p[k][n] * p[k][n];
            }
            if sy == 0.0 {
                continue;
            }
            present += 1;
            acc += if dice { 2.0 * i / (sy2 + sp2) } else { i / (sy + sp - i) };
        }
        -acc / present as f64
    }

    /// Random softmax probabilities and labels, as tensors and as [C][N] loops.
    fn instance(c: usize, n: usize, seed: u64) -> (Tensor<f64>, Tensor<f64>, Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = vec![vec![0.0; n]; c];
        let mut y = vec![vec![0.0; n]; c];
        for j in 0..n {
            let logits: Vec<f64> = (0..c).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let z: f64 = logits.iter().map(|l| l.exp()).sum();
            for k in 0..c {
                p[k][j] = logits[k].exp() / z;
            }
            y[rng.gen_range(0..c)][j] = 1.0;
        }
        let flat = |m: &Vec<Vec<f64>>| Tensor::from_vec(&[1, c, n], m.concat()).unwrap();
        (flat(&p), flat(&y), p, y)
    }

    fn eval(f: impl Fn(&Graph<f64>, Var) -> Result<Var>, probs: &Tensor<f64>) -> f64 {
        let g = Graph::new();
        let v = f(&g, g.constant(probs.clone())).unwrap();
        g.value(v).item()
    }

    #[test]
    fn ce_examples() {
        let p = Tensor::from_vec(&[1, 2, 1], vec![0.5, 0.5]).unwrap();
        let y = Tensor::from_vec(&[1, 2, 1], vec![1.0, 0.0]).unwrap();
        let v = eval(|g, x| cross_entropy(g, x, &y, None), &p);
        assert!((v - 0.5 * 2f64.ln()).abs() < 1e-12);
        assert!((v - 0.34657).abs() < 1e-5);
        assert_eq!(eval(|g, x| cross_entropy(g, x, &y, None), &y), 0.0);
        // twice the pixels, same distribution: twice the loss
        let p2 = Tensor::from_vec(&[1, 2, 2], vec![0.5, 0.5, 0.5, 0.5]).unwrap();
        let y2 = Tensor::from_vec(&[1, 2, 2], vec![1.0, 1.0, 0.0, 0.0]).unwrap();
        let v2 = eval(|g, x| cross_entropy(g, x, &y2, None), &p2);
        assert!((v2 - 2.0 * v).abs() < 1e-12);
    }

    #[test]
    fn ce_clamps_zero_probability() {
        let p = Tensor::from_vec(&[1, 2, 1], vec![0.0, 1.0]).unwrap();
        let y = Tensor::from_vec(&[1, 2, 1], vec![1.0, 0.0]).unwrap();
        let v = eval(|g, x| cross_entropy(g, x, &y, None), &p);
        assert!((v - (-0.5 * PROB_FLOOR.ln())).abs() < 1e-9);
    }

    #[test]
    fn region_examples() {
        let p = Tensor::from_vec(&[1, 1, 2], vec![0.5, 0.5]).unwrap();
        let y = Tensor::from_vec(&[1, 1, 2], vec![1.0, 0.0]).unwrap();
        assert!((eval(|g, x| soft_iou_loss(g, x, &y), &p) + 1.0 / 3.0).abs() < 1e-12);
        let d = eval(|g, x| soft_dice_loss(g, x, &y, DiceDenominator::SumOfSquares), &p);
        assert!((d + 2.0 / 3.0).abs() < 1e-12);
        let (_, y, _, _) = instance(4, 16, 3);
        assert!((eval(|g, x| soft_iou_loss(g, x, &y), &y) + 1.0).abs() < 1e-9);
        assert!((eval(|g, x| soft_dice_loss(g, x, &y, DiceDenominator::SumOfSquares), &y) + 1.0).abs() < 1e-9);
    }

    #[test]
    fn empty_classes_are_excluded() {
        // class 1 never occurs in the target: perfect prediction still gives -1
        let y = Tensor::from_vec(&[1, 3, 2], vec![1.0, 0.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(eval(|g, x| soft_iou_loss(g, x, &y), &y), -1.0);
    }

    #[test]
    fn squared_sums_denominator() {
        let p = Tensor::from_vec(&[1, 1, 2], vec![0.5, 0.5]).unwrap();
        let y = Tensor::from_vec(&[1, 1, 2], vec![1.0, 0.0]).unwrap();
        // 2 * 0.5 / (1 + 1)
        let d = eval(|g, x| soft_dice_loss(g, x, &y, DiceDenominator::SquaredSums), &p);
        assert!((d + 0.5).abs() < 1e-12);
    }

    #[test]
    fn match_scalar_loop_oracles() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for t in 0..100 {
            let (c, n) = (rng.gen_range(1..=5), rng.gen_range(1..=64));
            let (pt, yt, p, y) = instance(c, n, 1000 + t);
            let w: Vec<f64> = (0..c).map(|_| rng.gen_range(0.5..2.0)).collect();
            let ce = eval(|g, x| cross_entropy(g, x, &yt, None), &pt);
            let cew = eval(|g, x| cross_entropy(g, x, &yt, Some(&w)), &pt);
            let iou = eval(|g, x| soft_iou_loss(g, x, &yt), &pt);
            let dice = eval(|g, x| soft_dice_loss(g, x, &yt, DiceDenominator::SumOfSquares), &pt);
            assert!((ce - oracle_ce(&p, &y, None)).abs() < 1e-6);
            assert!((cew - oracle_ce(&p, &y, Some(&w))).abs() < 1e-6);
            assert!((iou - oracle_region(&p, &y, false)).abs() < 1e-6);
            assert!((dice - oracle_region(&p, &y, true)).abs() < 1e-6);
            assert!((-1.0..=0.0).contains(&iou) && (-1.0..=0.0).contains(&dice));
        }
    }

    #[test]
    fn gradcheck_losses() {
        let (pt, yt, _, _) = instance(3, 10, 7);
        let w = [0.5, 1.0, 2.0];
        let opts = GradCheckOptions::default();
        let fs: Vec<Box<dyn Fn(&Graph<f64>, &[Var]) -> Result<Var>>> = vec![
            Box::new(|g, v| cross_entropy(g, v[0], &yt, Some(&w))),
            Box::new(|g, v| soft_iou_loss(g, v[0], &yt)),
            Box::new(|g, v| soft_dice_loss(g, v[0], &yt, DiceDenominator::SumOfSquares)),
            Box::new(|g, v| soft_dice_loss(g, v[0], &yt, DiceDenominator::SquaredSums)),
        ];
        for f in fs {
            let r = gradcheck(f, &[pt.clone()], &opts).unwrap();
            assert!(r.max_rel_err < 1e-6, "{r:?}");
        }
    }

    #[test]
    fn total_is_sum_of_components() {
        let (pt, yt, _, _) = instance(4, 20, 8);
        let (pb, yb, _, _) = instance(2, 20, 9);
        let g = Graph::new();
        let (a, b) = (g.constant(pt.clone()), g.constant(pb.clone()));
        let cfg = LossConfig::new(LossCombo::CeSoftIou, 2);
        let tot = g.value(total_loss(&g, &cfg, &[a, b], &[yt.clone(), yb.clone()], 0).unwrap().total).item();
        let sep = |p: Var, y: &Tensor<f64>| g.value(cross_entropy(&g, p, y, None).unwrap()).item() + g.value(soft_iou_loss(&g, p, y).unwrap()).item();
        assert_eq!(tot, sep(a, &yt) + sep(b, &yb));

        let ce_only = LossConfig::new(LossCombo::Ce, 1);
        let v = g.value(total_loss(&g, &ce_only, &[a], &[yt.clone()], 0).unwrap().total).item();
        assert_eq!(v, g.value(cross_entropy(&g, a, &yt, None).unwrap()).item());

        // perfect prediction: ce 0 plus iou -1 per branch
        let (y1, y2) = (g.constant(yt.clone()), g.constant(yb.clone()));
        let v = g.value(total_loss(&g, &cfg, &[y1, y2], &[yt, yb], 0).unwrap().total).item();
        assert!((v + 2.0).abs() < 1e-9);
    }

    #[test]
    fn zero_branch_weight_drops_branch() {
        let (pt, yt, _, _) = instance(2, 8, 10);
        let g = Graph::new();
        let a = g.param(pt.clone());
        let b = g.param(pt);
        let mut cfg = LossConfig::new(LossCombo::CeSoftDice, 2);
        cfg.branch_weights = vec![1.0, 0.0];
        let t = total_loss(&g, &cfg, &[a, b], &[yt.clone(), yt], 0).unwrap();
        assert!(t.branches[1].is_none());
        let grads = g.backward(t.total).unwrap();
        assert!(grads.get(b).unwrap().data().iter().all(|&v| v == 0.0));
        assert!(grads.get(a).unwrap().data().iter().any(|&v| v != 0.0));
        cfg.branch_weights = vec![0.0, 0.0];
        assert!(total_loss(&g, &cfg, &[a, b], &[g.value(a), g.value(b)], 0).is_err());
    }

    #[test]
    fn schedule_interpolates() {
        let s = WeightSchedule::from_target(vec![3.0, 0.5], 20);
        assert_eq!(s.weights(0), vec![1.0, 1.0]);
        assert_eq!(s.weights(20), vec![3.0, 0.5]);
        assert_eq!(s.weights(45), vec![3.0, 0.5]);
        assert_eq!(s.weights(10), vec![2.0, 0.75]);
    }

    #[test]
    fn inverse_frequency() {
        let w = inverse_frequency_weights(&[30, 10, 0]);
        // inverse frequencies 4/3 and 4, mean 8/3
        assert!((w[0] - 0.5).abs() < 1e-12 && (w[1] - 1.5).abs() < 1e-12);
        assert_eq!(w[2], 1.0);
    }

    #[test]
    fn one_hot_layout() {
        let t = one_hot::<f64>(&[1, 0, 2, 1], &[2, 2], 3).unwrap();
        assert_eq!(t.dims(), &[2, 3, 2]);
        assert_eq!(t.data(), &[0., 1., 1., 0., 0., 0., 0., 0., 0., 1., 1., 0.]);
        assert!(matches!(one_hot::<f64>(&[3], &[1, 1], 3), Err(Error::LabelOutOfRange { .. })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn pixel_permutation_invariance(c in 1usize..5, n in 2usize..30, seed in 0u64..1000, rot in 1usize..29) {
            let (pt, yt, p, y) = instance(c, n, seed);
            let r = rot % n;
            let perm = |m: &Vec<Vec<f64>>| {
                let rows: Vec<Vec<f64>> = m.iter().map(|row| { let mut v = row.clone(); v.rotate_left(r); v }).collect();
                Tensor::from_vec(&[1, c, n], rows.concat()).unwrap()
            };
            let (pp, yp) = (perm(&p), perm(&y));
            let losses = |pt: &Tensor<f64>, yt: &Tensor<f64>| [
                eval(|g, x| cross_entropy(g, x, yt, None), pt),
                eval(|g, x| soft_iou_loss(g, x, yt), pt),
                eval(|g, x| soft_dice_loss(g, x, yt, DiceDenominator::SumOfSquares), pt),
            ];
            for (a, b) in losses(&pt, &yt).iter().zip(losses(&pp, &yp)) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }
}
