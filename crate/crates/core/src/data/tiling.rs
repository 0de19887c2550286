//! Overlapping fixed-size tiles and their stitching.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Tile origins over an image; each tile is `size x size`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TileGrid {
    pub height: usize,
    pub width: usize,
    pub size: usize,
    pub stride: usize,
    pub ys: Vec<usize>,
    pub xs: Vec<usize>,
}

fn axis_origins(dim: usize, size: usize, stride: usize) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::new();
    let mut o = 0;
    loop {
        let clamped = o.min(dim - size);
        if out.last() != Some(&clamped) {
            out.push(clamped);
        }
        if o + size >= dim {
            return out;
        }
        o += stride;
    }
}

impl TileGrid {
    /// Stride is `round(size * (1 - overlap))`; the last tile on each axis is
    /// clamped so it ends at the border.
    pub fn new(height: usize, width: usize, size: usize, overlap: f64) -> Result<Self> {
        if size == 0 || size > height || size > width {
            return Err(Error::invalid(
                "tile",
                format!("tile size {size} does not fit a {height}x{width} image"),
            ));
        }
        if !(0.0..1.0).contains(&overlap) {
            return Err(Error::invalid("tile", format!("overlap {overlap} outside [0, 1)")));
        }
        let stride = ((size as f64 * (1.0 - overlap)).round() as usize).max(1);
        Ok(Self {
            height,
            width,
            size,
            stride,
            ys: axis_origins(height, size, stride),
            xs: axis_origins(width, size, stride),
        })
    }

    pub fn len(&self) -> usize {
        self.ys.len() * self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Tile origins `(y, x)` in row-major order.
    pub fn origins(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.ys.iter().flat_map(move |&y| self.xs.iter().map(move |&x| (y, x)))
    }

    /// Cuts a `[C, H, W]` map into `[C, S, S]` tiles.
    pub fn split<T: Scalar>(&self, map: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
        let d = map.dims();
        if d.len() != 3 || d[1] != self.height || d[2] != self.width {
            return Err(Error::ShapeMismatch {
                op: "split",
                lhs: d.to_vec(),
                rhs: vec![0, self.height, self.width],
            });
        }
        let (c, s, w) = (d[0], self.size, self.width);
        Ok(self
            .origins()
            .map(|(y0, x0)| {
                let mut out = Vec::with_capacity(c * s * s);
                for ch in 0..c {
                    for y in y0..y0 + s {
                        let row = (ch * self.height + y) * w + x0;
                        out.extend_from_slice(&map.data()[row..row + s]);
                    }
                }
                Tensor::from_parts(vec![c, s, s], out)
            })
            .collect())
    }

    /// Places tiles back, averaging overlapping pixels uniformly.
    pub fn stitch<T: Scalar>(&self, tiles: &[Tensor<T>]) -> Result<Tensor<T>> {
        if tiles.len() != self.len() {
            return Err(Error::Data(format!("stitch: expected {} tiles, got {}", self.len(), tiles.len())));
        }
        let s = self.size;
        let c = tiles.first().map_or(0, |t| t.dims()[0]);
        let (h, w) = (self.height, self.width);
        let mut acc = vec![T::zero(); c * h * w];
        let mut hits = vec![0u32; h * w];
        for ((y0, x0), t) in self.origins().zip(tiles) {
            if t.dims() != [c, s, s] {
                return Err(Error::ShapeMismatch {
                    op: "stitch",
                    lhs: t.dims().to_vec(),
                    rhs: vec![c, s, s],
                });
            }
            for y in 0..s {
                for x in 0..s {
                    hits[(y0 + y) * w + x0 + x] += 1;
                }
            }
            for ch in 0..c {
                for y in 0..s {
                    let dst = (ch * h + y0 + y) * w + x0;
                    let src = (ch * s + y) * s;
                    for x in 0..s {
                        acc[dst + x] = acc[dst + x] + t.data()[src + x];
                    }
                }
            }
        }
        for ch in 0..c {
            for (i, &n) in hits.iter().enumerate() {
                if n > 1 {
                    let k = &mut acc[ch * h * w + i];
                    *k = *k / T::from_f64_lossy(n as f64);
                }
            }
        }
        Tensor::from_vec(&[c, h, w], acc)
    }
}

/// Per-pixel argmax over the class axis of a `[C, H, W]` map (first maximum wins).
pub fn argmax_classes<T: Scalar>(map: &Tensor<T>) -> Vec<u8> {
    let d = map.dims();
    let (c, hw) = (d[0], d[1] * d[2]);
    (0..hw)
        .map(|i| {
            let mut best = 0;
            for k in 1..c {
                if map.data()[k * hw + i] > map.data()[best * hw + i] {
                    best = k;
                }
            }
            best as u8
        })
        .collect()
}
