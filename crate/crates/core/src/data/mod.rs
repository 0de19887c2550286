//! Images, masks, tiling, augmentation, label derivation and the scene generator.

mod augment;
mod classes;
mod dataset;
mod edges;
mod gsd;
pub mod pnm;
mod synth;
mod targets;
mod tiling;

pub use augment::{flip, Flip};
pub use classes::{dense, ClassMap, ClassSet, CATEGORY11, DENSE20, EDGE_BINARY, LANE13, POTSDAM6};
pub use dataset::{parse_manifest, write_dataset, Dataset, ManifestEntry, MANIFEST};
pub use edges::{derive_edges, EDGE_BACKGROUND};
pub use gsd::{rescale_gsd, rescaled_len};
pub use synth::{base_colour, generate_scene, Densities, Palette, Scene, SceneSpec};
pub use targets::{branch_target, task_class_set, DEFAULT_EDGE_RADIUS};
pub use tiling::{argmax_classes, TileGrid};

use image::{GrayImage, RgbImage};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// An RGB image with a per-pixel class mask.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImage {
    pub rgb: RgbImage,
    pub mask: GrayImage,
    pub class_set: ClassSet,
}

impl LabeledImage {
    pub fn new(rgb: RgbImage, mask: GrayImage, class_set: ClassSet) -> Result<Self> {
        if rgb.dimensions() != mask.dimensions() {
            return Err(Error::Data(format!(
                "image is {:?} but mask is {:?}",
                rgb.dimensions(),
                mask.dimensions()
            )));
        }
        check_labels(&mask, class_set.classes())?;
        Ok(Self { rgb, mask, class_set })
    }

    pub fn width(&self) -> u32 {
        self.rgb.width()
    }

    pub fn height(&self) -> u32 {
        self.rgb.height()
    }
}

pub(crate) fn check_labels(mask: &GrayImage, classes: usize) -> Result<()> {
    match mask.iter().find(|&&p| p as usize >= classes) {
        Some(&label) => Err(Error::LabelOutOfRange {
            label: label as usize,
            classes,
        }),
        None => Ok(()),
    }
}

/// Stacks equally sized images into a `[B, 3, H, W]` tensor scaled to `[0, 1]`.
pub fn images_to_tensor<T: Scalar>(images: &[&RgbImage]) -> Result<Tensor<T>> {
    let (w, h) = images
        .first()
        .map(|i| i.dimensions())
        .ok_or_else(|| Error::Data("empty image batch".into()))?;
    let (w, h) = (w as usize, h as usize);
    let mut out = Vec::with_capacity(images.len() * 3 * w * h);
    for img in images {
        if img.dimensions() != (w as u32, h as u32) {
            return Err(Error::Data("images in a batch must share dims".into()));
        }
        let raw = img.as_raw();
        for ch in 0..3 {
            out.extend(raw[ch..].iter().step_by(3).map(|&v| T::from_f64_lossy(v as f64 / 255.0)));
        }
    }
    Tensor::from_vec(&[images.len(), 3, h, w], out)
}
