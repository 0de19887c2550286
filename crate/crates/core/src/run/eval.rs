//! Tiled inference, evaluation and the `infer` command.

use std::path::{Path, PathBuf};

use image::{GrayImage, RgbImage};

use super::config::RunConfig;
use super::train::{tile_size_for, weights_path};
use crate::data::{
    argmax_classes, branch_target, images_to_tensor, pnm, rescale_gsd, task_class_set, Dataset, LabeledImage,
    TileGrid, CATEGORY11, DENSE20, EDGE_BINARY, LANE13,
};
use crate::error::{Error, Result};
use crate::metrics::ConfusionMatrix;
use crate::net::{load_weights, BranchKind, Network};
use crate::tensor::Tensor;

pub fn class_names(kind: BranchKind) -> &'static [&'static str] {
    const LANE_BINARY: [&str; 2] = ["non-lane-marking", "lane-marking"];
    match kind {
        BranchKind::Semantic | BranchKind::EdgeMulti => &DENSE20,
        BranchKind::EdgeBinary => &EDGE_BINARY,
        BranchKind::LaneMulti => &LANE13,
        BranchKind::LaneBinary => &LANE_BINARY,
        BranchKind::Category => &CATEGORY11,
    }
}

pub fn metrics_file_name(kind: BranchKind) -> String {
    format!("metrics_{}.csv", kind.name())
}

/// Per-branch `[C, H, W]` probability maps for a whole image, fused from
/// overlapping tiles.
pub fn predict_image(net: &Network<f32>, rgb: &RgbImage, tile: usize, overlap: f64) -> Result<Vec<Tensor<f32>>> {
    let (h, w) = (rgb.height() as usize, rgb.width() as usize);
    let grid = TileGrid::new(h, w, tile, overlap)?;
    let mut per_branch: Vec<Vec<Tensor<f32>>> = vec![Vec::with_capacity(grid.len()); net.branch_kinds().len()];
    for (y, x) in grid.origins() {
        let crop = image::imageops::crop_imm(rgb, x as u32, y as u32, tile as u32, tile as u32).to_image();
        let input = images_to_tensor::<f32>(&[&crop])?;
        for (b, out) in net.predict(&input)?.into_iter().enumerate() {
            let d = out.dims().to_vec();
            per_branch[b].push(out.reshaped(&d[1..])?);
        }
    }
    per_branch.iter().map(|tiles| grid.stitch(tiles)).collect()
}

fn label_image(w: u32, h: u32, labels: Vec<u8>) -> GrayImage {
    GrayImage::from_raw(w, h, labels).expect("one label per pixel")
}

/// Confusion matrices per branch over `images`. In oracle mode the
/// ground truth is scored against itself and `net` is not consulted.
pub fn evaluate(
    net: Option<&Network<f32>>,
    cfg: &RunConfig,
    images: &[LabeledImage],
) -> Result<Vec<(BranchKind, ConfusionMatrix)>> {
    let kinds = cfg.network.branches.clone();
    let mut out: Vec<_> = kinds.iter().map(|&k| (k, ConfusionMatrix::new(k.classes()))).collect();
    for img in images {
        let targets = kinds
            .iter()
            .map(|&k| branch_target(k, img, cfg.edge_radius))
            .collect::<Result<Vec<_>>>()?;
        let preds: Vec<Vec<u8>> = match net {
            Some(net) => {
                let tile = tile_size_for(cfg.crop_size, img.width(), img.height())?;
                predict_image(net, &img.rgb, tile, cfg.eval_overlap)?
                    .iter()
                    .map(argmax_classes)
                    .collect()
            }
            None => targets.iter().map(|t| t.as_raw().clone()).collect(),
        };
        for ((_, cm), (t, p)) in out.iter_mut().zip(targets.iter().zip(&preds)) {
            cm.accumulate(t.as_raw(), p, None)?;
        }
    }
    Ok(out)
}

/// `eval` command: writes `metrics_<branch>.csv` into `out_dir` and
/// returns the written paths.
pub fn run_eval(cfg: &RunConfig, weights: Option<&Path>, dataset: Option<&Path>, oracle: bool) -> Result<Vec<PathBuf>> {
    let ds = Dataset::open(dataset.map_or_else(|| cfg.require_dataset(), Ok)?)?;
    let expected = task_class_set(cfg.network.task);
    let found = ds.class_set()?;
    if found != expected && !(expected == crate::data::ClassSet::Category11 && found == crate::data::ClassSet::Dense20) {
        return Err(Error::Data(format!(
            "task {} needs {expected} labels ({} classes), dataset has {found} ({} classes)",
            cfg.network.task,
            expected.classes(),
            found.classes()
        )));
    }
    let images = ds.load_all()?;
    let net = if oracle {
        None
    } else {
        Some(load_weights::<f32>(&cfg.network, &weights_path(cfg, weights)?)?)
    };
    let results = evaluate(net.as_ref(), cfg, &images)?;
    let dir = cfg.require_out_dir()?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    for (kind, cm) in &results {
        let path = dir.join(metrics_file_name(*kind));
        crate::io::write_atomic(&path, cm.report(class_names(*kind))?.as_bytes())?;
        written.push(path);
    }
    Ok(written)
}

/// Options of the `infer` command.
#[derive(Debug, Clone)]
pub struct InferRequest {
    pub image: PathBuf,
    pub out: PathBuf,
    pub edges: Option<PathBuf>,
    /// `(source, target)` ground sampling distances in cm/px.
    pub gsd: Option<(f64, f64)>,
}

/// `infer` command: primary-branch mask, plus an edge mask when asked.
pub fn run_infer(cfg: &RunConfig, weights: Option<&Path>, req: &InferRequest) -> Result<(u32, u32)> {
    let net = load_weights::<f32>(&cfg.network, &weights_path(cfg, weights)?)?;
    let mut rgb = pnm::read_ppm(&req.image)?;
    if let Some((src, dst)) = req.gsd {
        rgb = rescale_gsd(&rgb, None, src, dst)?.0;
    }
    let edge_branch = match &req.edges {
        Some(_) => Some(
            net.branch_kinds()
                .iter()
                .position(|k| matches!(k, BranchKind::EdgeBinary | BranchKind::EdgeMulti | BranchKind::LaneBinary))
                .ok_or_else(|| Error::Config(format!("task {} has no edge branch", cfg.network.task)))?,
        ),
        None => None,
    };
    let (w, h) = rgb.dimensions();
    let tile = tile_size_for(cfg.crop_size, w, h)?;
    let probs = predict_image(&net, &rgb, tile, cfg.eval_overlap)?;
    pnm::write_pgm(&req.out, &label_image(w, h, argmax_classes(&probs[0])))?;
    if let (Some(path), Some(b)) = (&req.edges, edge_branch) {
        pnm::write_pgm(path, &label_image(w, h, argmax_classes(&probs[b])))?;
    }
    Ok((w, h))
}
