use image::GrayImage;

use crate::error::{Error, Result};

/// Background label of the multi-class edge map.
pub const EDGE_BACKGROUND: u8 = 0;

/// Boundary maps from a label mask.
///
/// A pixel is a boundary pixel when one of its 4-neighbours carries a
/// different label; that set is then dilated by a Chebyshev radius of
/// `radius - 1`. Returns the binary map (0/1) and a multi-class map where
/// boundary pixels keep their own label and the rest are
/// [`EDGE_BACKGROUND`].
pub fn derive_edges(mask: &GrayImage, radius: usize) -> Result<(GrayImage, GrayImage)> {
    if radius == 0 {
        return Err(Error::invalid("derive_edges", "radius must be at least 1"));
    }
    let (w, h) = (mask.width() as usize, mask.height() as usize);
    let m = mask.as_raw();
    let mut base = vec![0u8; w * h];
    for y in 0..h {
        for x in 0..w {
            let v = m[y * w + x];
            let differs = (x > 0 && m[y * w + x - 1] != v)
                || (x + 1 < w && m[y * w + x + 1] != v)
                || (y > 0 && m[(y - 1) * w + x] != v)
                || (y + 1 < h && m[(y + 1) * w + x] != v);
            base[y * w + x] = differs as u8;
        }
    }
    let r = radius - 1;
    // separable max filter: rows, then columns
    let mut rows = vec![0u8; w * h];
    for y in 0..h {
        for x in 0..w {
            let (lo, hi) = (x.saturating_sub(r), (x + r).min(w - 1));
            rows[y * w + x] = base[y * w + lo..=y * w + hi].iter().copied().max().unwrap_or(0);
        }
    }
    let mut binary = vec![0u8; w * h];
    for y in 0..h {
        let (lo, hi) = (y.saturating_sub(r), (y + r).min(h - 1));
        for x in 0..w {
            binary[y * w + x] = (lo..=hi).map(|yy| rows[yy * w + x]).max().unwrap_or(0);
        }
    }
    let multi = binary
        .iter()
        .zip(m)
        .map(|(&e, &l)| if e == 1 { l } else { EDGE_BACKGROUND })
        .collect();
    let wrap = |v| GrayImage::from_raw(w as u32, h as u32, v).expect("w*h bytes");
    Ok((wrap(binary), wrap(multi)))
}
