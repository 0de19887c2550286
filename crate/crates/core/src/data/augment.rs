use image::imageops;

use super::LabeledImage;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flip {
    /// Mirror columns: `(r, c) -> (r, W-1-c)`.
    Horizontal,
    /// Mirror rows: `(r, c) -> (H-1-r, c)`.
    Vertical,
}

/// Flips image and mask identically.
pub fn flip(img: &LabeledImage, mode: Flip) -> LabeledImage {
    let (rgb, mask) = match mode {
        Flip::Horizontal => (imageops::flip_horizontal(&img.rgb), imageops::flip_horizontal(&img.mask)),
        Flip::Vertical => (imageops::flip_vertical(&img.rgb), imageops::flip_vertical(&img.mask)),
    };
    LabeledImage {
        rgb,
        mask,
        class_set: img.class_set,
    }
}
