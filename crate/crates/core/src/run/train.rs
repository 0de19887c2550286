//! Training loop: crops, flips, Adam, checkpoints and the CSV log.

use std::path::{Path, PathBuf};

use image::imageops;
use image::{GrayImage, RgbImage};
use log::{info, warn};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{ClassWeighting, RunConfig};
use crate::data::{branch_target, images_to_tensor, Dataset, LabeledImage, TileGrid};
use crate::error::{Error, Result};
use crate::losses::{inverse_frequency_weights, one_hot, total_loss, WeightSchedule};
use crate::net::{save_weights, Adam, Network};
use crate::tensor::Graph;

pub const LOG_FILE: &str = "train_log.csv";
pub const WEIGHTS_FILE: &str = "weights.ssnw";

pub fn checkpoint_name(epoch: usize) -> String {
    format!("checkpoint_epoch_{epoch:04}.ssnw")
}

/// Largest tile side usable on an image: the crop size, or the largest
/// multiple of 32 that fits.
pub fn tile_size_for(crop_size: usize, width: u32, height: u32) -> Result<usize> {
    let fit = (width.min(height) as usize / 32) * 32;
    if fit == 0 {
        return Err(Error::Data(format!("image {width}x{height} is smaller than 32 px")));
    }
    Ok(crop_size.min(fit))
}

/// A training crop with one target mask per branch.
#[derive(Debug, Clone, PartialEq)]
pub struct Crop {
    pub rgb: RgbImage,
    pub targets: Vec<GrayImage>,
}

impl Crop {
    fn flipped(&self, horizontal: bool, vertical: bool) -> Crop {
        let mut c = self.clone();
        if horizontal {
            imageops::flip_horizontal_in_place(&mut c.rgb);
            c.targets.iter_mut().for_each(imageops::flip_horizontal_in_place);
        }
        if vertical {
            imageops::flip_vertical_in_place(&mut c.rgb);
            c.targets.iter_mut().for_each(imageops::flip_vertical_in_place);
        }
        c
    }
}

/// Cuts every image into overlapping crops and derives the branch targets.
pub fn prepare_crops(cfg: &RunConfig, images: &[LabeledImage]) -> Result<Vec<Crop>> {
    let mut crops = Vec::new();
    for img in images {
        let targets = cfg
            .network
            .branches
            .iter()
            .map(|&k| branch_target(k, img, cfg.edge_radius))
            .collect::<Result<Vec<_>>>()?;
        let s = tile_size_for(cfg.crop_size, img.width(), img.height())?;
        let grid = TileGrid::new(img.height() as usize, img.width() as usize, s, cfg.train_overlap)?;
        let s = s as u32;
        for (y, x) in grid.origins() {
            let (x, y) = (x as u32, y as u32);
            crops.push(Crop {
                rgb: imageops::crop_imm(&img.rgb, x, y, s, s).to_image(),
                targets: targets.iter().map(|t| imageops::crop_imm(t, x, y, s, s).to_image()).collect(),
            });
        }
    }
    Ok(crops)
}

/// One optimisation step, as logged.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub epoch: usize,
    pub step: usize,
    pub loss: f64,
    /// `(cross-entropy, region)` per branch; `None` when absent or dropped.
    pub components: Vec<(Option<f64>, Option<f64>)>,
    /// Pixel accuracy of the first branch on this batch.
    pub pixel_accuracy: f64,
}

#[derive(Debug, Clone, Default)]
pub struct TrainReport {
    pub steps: Vec<StepRecord>,
    pub epochs_completed: usize,
    /// Per-epoch mean rows, as written to the log.
    pub epoch_rows: Vec<StepRecord>,
}

impl TrainReport {
    pub fn last(&self) -> Option<&StepRecord> {
        self.steps.last()
    }
}

fn mean_record(records: &[StepRecord]) -> StepRecord {
    let n = records.len() as f64;
    let last = records.last().expect("non-empty epoch");
    let avg = |f: &dyn Fn(&StepRecord) -> Option<f64>| -> Option<f64> {
        let v: Option<Vec<f64>> = records.iter().map(f).collect();
        v.map(|v| v.iter().sum::<f64>() / n)
    };
    StepRecord {
        epoch: last.epoch,
        step: last.step,
        loss: records.iter().map(|r| r.loss).sum::<f64>() / n,
        components: (0..last.components.len())
            .map(|b| (avg(&|r| r.components[b].0), avg(&|r| r.components[b].1)))
            .collect(),
        pixel_accuracy: records.iter().map(|r| r.pixel_accuracy).sum::<f64>() / n,
    }
}

/// CSV with one row per epoch (mean over its steps).
pub fn format_log(net: &Network<f32>, rows: &[StepRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["epoch".to_string(), "step".into(), "loss".into()];
    for k in net.branch_kinds() {
        header.push(format!("{}_ce", k.name()));
        header.push(format!("{}_region", k.name()));
    }
    header.push("pixel_accuracy".into());
    let csv_err = |e: csv::Error| Error::Data(format!("log: {e}"));
    w.write_record(&header).map_err(csv_err)?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:.9}"));
    for r in rows {
        let mut rec = vec![r.epoch.to_string(), r.step.to_string(), format!("{:.9}", r.loss)];
        for &(ce, reg) in &r.components {
            rec.push(opt(ce));
            rec.push(opt(reg));
        }
        rec.push(format!("{:.9}", r.pixel_accuracy));
        w.write_record(&rec).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Data(format!("log: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv of ascii fields"))
}

/// Where training writes its artifacts.
#[derive(Debug, Clone)]
pub struct TrainOutputs {
    pub dir: PathBuf,
}

impl TrainOutputs {
    pub fn weights(&self) -> PathBuf {
        self.dir.join(WEIGHTS_FILE)
    }

    pub fn log(&self) -> PathBuf {
        self.dir.join(LOG_FILE)
    }
}

/// Trains `net` in place on `images`. Checkpoints, final weights and the
/// log go to `outputs` when given.
pub fn train_network(
    net: &mut Network<f32>,
    cfg: &RunConfig,
    images: &[LabeledImage],
    outputs: Option<&TrainOutputs>,
) -> Result<TrainReport> {
    cfg.validate()?;
    let crops = prepare_crops(cfg, images)?;
    if crops.is_empty() {
        return Err(Error::Data("no training crops".into()));
    }
    let kinds = net.branch_kinds();
    let mut loss_cfg = cfg.loss_config();
    if cfg.class_weighting != ClassWeighting::None {
        let classes = kinds[0].classes();
        let mut counts = vec![0u64; classes];
        crops.iter().for_each(|c| c.targets[0].iter().for_each(|&p| counts[p as usize] += 1));
        let w = inverse_frequency_weights(&counts);
        match cfg.class_weighting {
            ClassWeighting::Static => loss_cfg.class_weights = Some(w),
            _ => loss_cfg.schedule = Some(WeightSchedule::from_target(w, cfg.ramp_epochs)),
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7261_696e);
    let mut adam = Adam::new(net.store(), cfg.adam);
    let mut report = TrainReport::default();
    let mut step = 0usize;
    let max_steps = cfg.max_steps.unwrap_or(usize::MAX);
    let mut order: Vec<usize> = (0..crops.len()).collect();

    'epochs: for epoch in 0..cfg.epochs {
        if step >= max_steps {
            break;
        }
        order.shuffle(&mut rng);
        let mut records = Vec::new();
        for batch in order.chunks(cfg.batch_size) {
            if step >= max_steps {
                if !records.is_empty() {
                    report.epoch_rows.push(mean_record(&records));
                    report.steps.extend(records);
                }
                break 'epochs;
            }
            let batch: Vec<Crop> = batch
                .iter()
                .map(|&i| {
                    let (h, v) = if cfg.flip_augment { (rng.gen_bool(0.5), rng.gen_bool(0.5)) } else { (false, false) };
                    crops[i].flipped(h, v)
                })
                .collect();
            let rec = train_step(net, &mut adam, &loss_cfg, &batch, epoch, step)?;
            step += 1;
            records.push(rec);
        }
        let row = mean_record(&records);
        info!("epoch {epoch}: loss {:.5}, pixel accuracy {:.4}", row.loss, row.pixel_accuracy);
        report.epoch_rows.push(row);
        report.steps.extend(records);
        report.epochs_completed = epoch + 1;
        if let Some(out) = outputs {
            if (epoch + 1) % cfg.checkpoint_every == 0 {
                save_weights(net, &out.dir.join(checkpoint_name(epoch + 1)))?;
            }
        }
    }
    if let Some(out) = outputs {
        save_weights(net, &out.weights())?;
        crate::io::write_atomic(&out.log(), format_log(net, &report.epoch_rows)?.as_bytes())?;
    }
    Ok(report)
}

fn train_step(
    net: &mut Network<f32>,
    adam: &mut Adam<f32>,
    loss_cfg: &crate::losses::LossConfig,
    batch: &[Crop],
    epoch: usize,
    step: usize,
) -> Result<StepRecord> {
    let kinds = net.branch_kinds();
    let s = batch[0].rgb.height() as usize;
    let rgbs: Vec<&RgbImage> = batch.iter().map(|c| &c.rgb).collect();
    let x = images_to_tensor::<f32>(&rgbs)?;
    let labels: Vec<Vec<u8>> = (0..kinds.len())
        .map(|b| batch.iter().flat_map(|c| c.targets[b].iter().copied()).collect())
        .collect();
    let targets = kinds
        .iter()
        .zip(&labels)
        .map(|(k, l)| one_hot::<f32>(l, &[batch.len(), s, s], k.classes()))
        .collect::<Result<Vec<_>>>()?;

    let g = Graph::new();
    let bound = net.store().bind(&g);
    let xv = g.constant(x);
    let outputs = net.forward(&g, &bound, xv)?;
    let loss = total_loss(&g, loss_cfg, &outputs, &targets, epoch)?;
    let value = g.value(loss.total).item() as f64;
    if !value.is_finite() {
        warn!("non-finite loss at step {step}");
        return Err(Error::Divergence { step });
    }
    let components = loss
        .branches
        .iter()
        .map(|b| match b {
            Some(b) => (
                b.ce.map(|v| g.value(v).item() as f64),
                b.region.map(|v| g.value(v).item() as f64),
            ),
            None => (None, None),
        })
        .collect();
    let probs = g.value(outputs[0]);
    let pred = per_pixel_argmax(probs.data(), batch.len(), kinds[0].classes(), s * s);
    let correct = pred.iter().zip(&labels[0]).filter(|(a, b)| a == b).count();
    let grads = g.backward(loss.total)?;
    adam.step(net.store_mut(), &grads, &bound)?;
    Ok(StepRecord {
        epoch,
        step,
        loss: value,
        components,
        pixel_accuracy: correct as f64 / labels[0].len() as f64,
    })
}

/// Argmax over classes of a `[N, C, P]` buffer, returned as `[N, P]`.
pub(crate) fn per_pixel_argmax(data: &[f32], n: usize, c: usize, p: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(n * p);
    for b in 0..n {
        let base = b * c * p;
        for i in 0..p {
            let mut best = 0;
            for k in 1..c {
                if data[base + k * p + i] > data[base + best * p + i] {
                    best = k;
                }
            }
            out.push(best as u8);
        }
    }
    out
}

/// `train` command: reads the dataset named in `cfg`, writes weights,
/// checkpoints and the log to `out_dir`.
pub fn run_train(cfg: &RunConfig) -> Result<(TrainReport, TrainOutputs)> {
    let ds = Dataset::open(cfg.require_dataset()?)?;
    let images = ds.load_all()?;
    let dir = cfg.require_out_dir()?.to_path_buf();
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut net = Network::<f32>::build(&cfg.network)?;
    let outputs = TrainOutputs { dir };
    let report = train_network(&mut net, cfg, &images, Some(&outputs))?;
    Ok((report, outputs))
}

pub fn weights_path(cfg: &RunConfig, explicit: Option<&Path>) -> Result<PathBuf> {
    explicit
        .map(Path::to_path_buf)
        .or_else(|| cfg.weights.clone())
        .or_else(|| cfg.out_dir.as_ref().map(|d| d.join(WEIGHTS_FILE)))
        .ok_or_else(|| Error::Config("no weights path given".into()))
}
