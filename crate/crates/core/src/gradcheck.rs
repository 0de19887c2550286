//! Central finite-difference gradient checking in `f64`.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::tensor::{Graph, Tensor, Var};

const SEARCH_STEPS: usize = 7;

#[derive(Debug, Clone)]
pub struct GradCheckOptions {
    /// Central difference step.
    pub step: f64,
    /// Absolute differences at or below this count as exact matches.
    pub floor: f64,
    /// Check at most this many entries per input (sampled by `seed`).
    pub max_entries: Option<usize>,
    pub seed: u64,
    /// Difference at seven steps from `step` down to `step / 1000` in
    /// half-decades and keep the one whose neighbours agree with it best.
    /// Helps on piecewise-smooth functions whose kinks sit closer than
    /// `step`.
    pub step_search: bool,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-5,
            floor: 1e-9,
            max_entries: None,
            seed: 0,
            step_search: false,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    pub checked: usize,
    /// (input, flat index, analytic, numeric) of the worst entry.
    pub worst: Option<(usize, usize, f64, f64)>,
}

impl GradCheckReport {
    pub fn merge(&mut self, other: &GradCheckReport) {
        if other.max_rel_err > self.max_rel_err {
            self.max_rel_err = other.max_rel_err;
            self.worst = other.worst;
        }
        self.max_abs_err = self.max_abs_err.max(other.max_abs_err);
        self.checked += other.checked;
    }
}

/// `|a - n| / max(|a|, |n|)`, or zero when `|a - n| <= floor`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    let diff = (analytic - numeric).abs();
    if diff <= floor {
        0.0
    } else {
        diff / analytic.abs().max(numeric.abs())
    }
}

fn evaluate<F>(f: &F, inputs: &[Tensor<f64>]) -> Result<f64>
where
    F: Fn(&Graph<f64>, &[Var]) -> Result<Var>,
{
    let g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.constant(t.clone())).collect();
    let root = f(&g, &vars)?;
    Ok(g.value(root).item())
}

/// Compares the backward pass of `f` with central differences of its
/// forward value, for every (or a sampled subset of) input entries.
pub fn gradcheck<F>(f: F, inputs: &[Tensor<f64>], opts: &GradCheckOptions) -> Result<GradCheckReport>
where
    F: Fn(&Graph<f64>, &[Var]) -> Result<Var>,
{
    let g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let root = f(&g, &vars)?;
    let grads = g.backward(root)?;
    let analytic: Vec<Tensor<f64>> = vars
        .iter()
        .map(|&v| grads.get(v).cloned().expect("param leaf has a gradient"))
        .collect();
    drop(grads);
    drop(g);

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut report = GradCheckReport::default();
    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    for (k, input) in inputs.iter().enumerate() {
        let indices: Vec<usize> = match opts.max_entries {
            Some(m) if m < input.len() => {
                let mut v = sample(&mut rng, input.len(), m).into_vec();
                v.sort_unstable();
                v
            }
            _ => (0..input.len()).collect(),
        };
        for i in indices {
            let x0 = input.data()[i];
            // Central difference plus its expected round-off, eps * |f| / h.
            let mut central = |h: f64| -> Result<(f64, f64)> {
                work[k].data_mut()[i] = x0 + h;
                let fp = evaluate(&f, &work)?;
                work[k].data_mut()[i] = x0 - h;
                let fm = evaluate(&f, &work)?;
                let noise = 16.0 * f64::EPSILON * fp.abs().max(fm.abs()) / h;
                Ok(((fp - fm) / (2.0 * h), noise))
            };
            let numeric = if opts.step_search {
                let d: Vec<(f64, f64)> = (0..SEARCH_STEPS)
                    .map(|j| central(opts.step * 10f64.powf(-0.5 * j as f64)))
                    .collect::<Result<_>>()?;
                // Centre of the flattest run of three: past the kinks and
                // curvature of the larger steps, not yet in the round-off of
                // the smaller ones. One agreeing pair alone cannot say which
                // of its two members is right.
                let score = |j: usize| {
                    let spread = (d[j].0 - d[j - 1].0).abs().max((d[j].0 - d[j + 1].0).abs());
                    spread.max(d[j].1)
                };
                let best = (1..SEARCH_STEPS - 1)
                    .min_by(|&a, &b| score(a).total_cmp(&score(b)))
                    .unwrap_or(1);
                d[best].0
            } else {
                central(opts.step)?.0
            };
            work[k].data_mut()[i] = x0;
            let a = analytic[k].data()[i];
            let rel = relative_error(a, numeric, opts.floor);
            report.checked += 1;
            report.max_abs_err = report.max_abs_err.max((a - numeric).abs());
            if rel > report.max_rel_err || report.worst.is_none() {
                report.max_rel_err = report.max_rel_err.max(rel);
                report.worst = Some((k, i, a, numeric));
            }
        }
    }
    Ok(report)
}

/// Random projection `sum(out * r)` used to turn a tensor output into a
/// scalar without structural zero gradients.
pub fn project(g: &Graph<f64>, out: Var, seed: u64) -> Result<Var> {
    let dims = g.dims(out);
    let r = g.constant(Tensor::uniform(&dims, -1.0, 1.0, seed)?);
    let prod = g.mul(out, r)?;
    Ok(g.sum(prod))
}

/// Store tensors with BN gamma/beta and biases moved off their 1/0
/// initial values, so a check does not sit on a symmetric point.
pub fn perturbed_params(store: &crate::nn::ParamStore<f64>, seed: u64) -> Vec<Tensor<f64>> {
    store
        .iter()
        .enumerate()
        .map(|(i, (name, t))| {
            let s = seed.wrapping_add(i as u64);
            if name.ends_with(".gamma") {
                Tensor::uniform(t.dims(), 0.5, 1.5, s).expect("dims came from a tensor")
            } else if name.ends_with(".beta") || name.ends_with(".bias") {
                Tensor::uniform(t.dims(), -0.3, 0.3, s).expect("dims came from a tensor")
            } else {
                t.clone()
            }
        })
        .collect()
}
