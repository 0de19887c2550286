use image::imageops::{self, FilterType};
use image::{GrayImage, RgbImage};

use crate::error::{Error, Result};

/// Output side length after changing the ground sampling distance.
pub fn rescaled_len(len: u32, source_gsd: f64, target_gsd: f64) -> u32 {
    ((len as f64 * source_gsd / target_gsd).round() as u32).max(1)
}

/// Resamples an image (bilinear) and optional mask (nearest) from
/// `source_gsd` to `target_gsd` (both in cm per pixel).
pub fn rescale_gsd(
    rgb: &RgbImage,
    mask: Option<&GrayImage>,
    source_gsd: f64,
    target_gsd: f64,
) -> Result<(RgbImage, Option<GrayImage>)> {
    if !(source_gsd > 0.0 && target_gsd > 0.0 && source_gsd.is_finite() && target_gsd.is_finite()) {
        return Err(Error::invalid("rescale_gsd", format!("GSDs must be positive, got {source_gsd} and {target_gsd}")));
    }
    if let Some(m) = mask {
        if m.dimensions() != rgb.dimensions() {
            return Err(Error::Data("image and mask dims differ".into()));
        }
    }
    let (w, h) = rgb.dimensions();
    let (nw, nh) = (rescaled_len(w, source_gsd, target_gsd), rescaled_len(h, source_gsd, target_gsd));
    if (nw, nh) == (w, h) {
        return Ok((rgb.clone(), mask.cloned()));
    }
    let img = imageops::resize(rgb, nw, nh, FilterType::Triangle);
    let mask = mask.map(|m| imageops::resize(m, nw, nh, FilterType::Nearest));
    Ok((img, mask))
}
