//! Procedural aerial-like scenes with pixel-exact labels.
//!
//! Painting follows a fixed vertical order: ground cover, then buildings,
//! then roads and sidewalks, then lane markings, then vehicles. Each tier
//! overwrites whatever lies below it, so every pixel ends with exactly one
//! class. Colours are per-class base values plus small seeded noise, with
//! markings much brighter than the asphalt they sit on.

use image::{GrayImage, Luma, Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::classes::dense::*;
use super::{ClassMap, ClassSet, LabeledImage};

/// Lane-marking classes painted by the generator.
mod lane {
    pub const NONE: u8 = 0;
    pub const DASH: u8 = 1;
    pub const LONG: u8 = 2;
    pub const SMALL_DASH: u8 = 3;
    pub const CROSSWALK: u8 = 7;
    pub const STOP_LINE: u8 = 8;
}

/// Which dense classes the generator may paint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Palette {
    /// Low vegetation, road, building, lane marking, car, sidewalk.
    Reduced,
    /// Every dense class.
    Extended,
}

/// Expected primitive counts. Road and vehicle counts are per 64 px of
/// extent; buildings and ground patches are per 64x64 px of area.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Densities {
    pub roads: f64,
    pub buildings: f64,
    /// Vehicles per 64 px of road length.
    pub vehicles: f64,
    /// Probability that a road carries a centre marking.
    pub markings: f64,
    /// Ground-cover patches (extended palette only).
    pub patches: f64,
}

impl Default for Densities {
    fn default() -> Self {
        Self {
            roads: 1.2,
            buildings: 1.5,
            vehicles: 1.0,
            markings: 0.9,
            patches: 1.0,
        }
    }
}

impl Densities {
    pub fn zero() -> Self {
        Self {
            roads: 0.0,
            buildings: 0.0,
            vehicles: 0.0,
            markings: 0.0,
            patches: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub seed: u64,
    pub width: u32,
    pub height: u32,
    pub palette: Palette,
    pub densities: Densities,
}

impl SceneSpec {
    pub fn new(seed: u64, width: u32, height: u32) -> Self {
        Self {
            seed,
            width,
            height,
            palette: Palette::Reduced,
            densities: Densities::default(),
        }
    }

    pub fn with_palette(mut self, palette: Palette) -> Self {
        self.palette = palette;
        self
    }

    pub fn with_densities(mut self, densities: Densities) -> Self {
        self.densities = densities;
        self
    }
}

/// A rendered scene with both label alphabets it can be viewed in.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub rgb: RgbImage,
    pub dense: GrayImage,
    pub lane: GrayImage,
}

impl Scene {
    pub fn labeled(&self, class_set: ClassSet) -> LabeledImage {
        let mask = match class_set {
            ClassSet::Dense20 => self.dense.clone(),
            ClassSet::Lane13 => self.lane.clone(),
            ClassSet::Category11 => ClassMap::dense_to_category()
                .apply(&self.dense)
                .expect("generator labels are dense classes"),
        };
        LabeledImage {
            rgb: self.rgb.clone(),
            mask,
            class_set,
        }
    }
}

pub fn base_colour(class: u8) -> [u8; 3] {
    const COLOURS: [[u8; 3]; 20] = [
        [90, 140, 60],   // low vegetation
        [70, 70, 75],    // paved road
        [140, 120, 90],  // non-paved road
        [100, 100, 115], // paved parking
        [165, 145, 105], // non-paved parking
        [175, 80, 80],   // bikeway
        [175, 175, 165], // sidewalk
        [120, 105, 140], // entrance/exit
        [205, 185, 60],  // danger area
        [245, 245, 245], // lane marking
        [150, 60, 50],   // building
        [30, 60, 200],   // car
        [120, 40, 140],  // trailer
        [60, 180, 190],  // van
        [200, 120, 30],  // truck
        [185, 30, 95],   // long truck
        [20, 120, 120],  // bus
        [105, 80, 60],   // clutter
        [135, 135, 125], // impervious surface
        [30, 90, 30],    // tree
    ];
    COLOURS[class as usize]
}

struct Canvas {
    w: i64,
    h: i64,
    dense: Vec<u8>,
    lane: Vec<u8>,
}

impl Canvas {
    fn rect(&mut self, x0: i64, y0: i64, rw: i64, rh: i64, class: u8, lane: u8) {
        for y in y0.max(0)..(y0 + rh).min(self.h) {
            for x in x0.max(0)..(x0 + rw).min(self.w) {
                let i = (y * self.w + x) as usize;
                self.dense[i] = class;
                self.lane[i] = lane;
            }
        }
    }

    /// Rectangle in road-aligned coordinates: `along` runs with the road,
    /// `across` perpendicular to it.
    #[allow(clippy::too_many_arguments)]
    fn road_rect(&mut self, vertical: bool, along: i64, across: i64, len: i64, thick: i64, class: u8, lane: u8) {
        if vertical {
            self.rect(across, along, thick, len, class, lane);
        } else {
            self.rect(along, across, len, thick, class, lane);
        }
    }

    fn disc(&mut self, cx: i64, cy: i64, r: i64, class: u8) {
        for y in (cy - r).max(0)..(cy + r + 1).min(self.h) {
            for x in (cx - r).max(0)..(cx + r + 1).min(self.w) {
                if (x - cx).pow(2) + (y - cy).pow(2) <= r * r {
                    let i = (y * self.w + x) as usize;
                    self.dense[i] = class;
                    self.lane[i] = lane::NONE;
                }
            }
        }
    }
}

/// Integer count with the given expectation: floor plus a Bernoulli remainder.
fn draw_count(rng: &mut ChaCha8Rng, expected: f64) -> usize {
    if expected <= 0.0 {
        return 0;
    }
    let base = expected.floor();
    base as usize + usize::from(rng.gen::<f64>() < expected - base)
}

struct Road {
    vertical: bool,
    /// First pixel across the road.
    start: i64,
    width: i64,
}

/// Renders the scene described by `spec`; identical specs give identical bytes.
pub fn generate_scene(spec: &SceneSpec) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (w, h) = (spec.width as i64, spec.height as i64);
    let d = spec.densities;
    let extended = spec.palette == Palette::Extended;
    let area_units = (w * h) as f64 / 4096.0;
    let mut c = Canvas {
        w,
        h,
        dense: vec![LOW_VEGETATION; (w * h) as usize],
        lane: vec![lane::NONE; (w * h) as usize],
    };

    if extended {
        for _ in 0..draw_count(&mut rng, d.patches * area_units) {
            let class = [PAVED_PARKING, NON_PAVED_PARKING, DANGER_AREA, CLUTTER, IMPERVIOUS, TREE][rng.gen_range(0..6)];
            let (x, y) = (rng.gen_range(0..w), rng.gen_range(0..h));
            if class == TREE {
                c.disc(x, y, rng.gen_range(3..8), TREE);
            } else {
                c.rect(x, y, rng.gen_range(6..17), rng.gen_range(6..17), class, lane::NONE);
            }
        }
    }

    for _ in 0..draw_count(&mut rng, d.buildings * area_units) {
        let (bw, bh) = (rng.gen_range(10..25), rng.gen_range(10..25));
        let (x, y) = (rng.gen_range(-bw / 2..w), rng.gen_range(-bh / 2..h));
        c.rect(x, y, bw, bh, BUILDING, lane::NONE);
    }

    let mut roads = Vec::new();
    for _ in 0..draw_count(&mut rng, d.roads * w.max(h) as f64 / 64.0) {
        let vertical = rng.gen_bool(0.5);
        let (extent, span) = if vertical { (w, h) } else { (h, w) };
        let surface = if extended {
            [PAVED_ROAD, PAVED_ROAD, NON_PAVED_ROAD, BIKEWAY][rng.gen_range(0..4)]
        } else {
            PAVED_ROAD
        };
        let width = if surface == BIKEWAY { rng.gen_range(4..7) } else { rng.gen_range(8..14) };
        let start = rng.gen_range(-width / 2..extent - width / 2);
        let walk = rng.gen_range(2..4);
        c.road_rect(vertical, 0, start - walk, span, width + 2 * walk, SIDEWALK, lane::NONE);
        c.road_rect(vertical, 0, start, span, width, surface, lane::NONE);
        if extended && rng.gen_bool(0.3) {
            let along = rng.gen_range(0..span);
            c.road_rect(vertical, along, start - walk, 5, walk, ENTRANCE_EXIT, lane::NONE);
        }
        if surface != BIKEWAY {
            roads.push(Road { vertical, start, width });
        }
    }

    for road in &roads {
        let span = if road.vertical { h } else { w };
        if rng.gen::<f64>() >= d.markings {
            continue;
        }
        let kinds: &[u8] = if extended {
            &[lane::DASH, lane::LONG, lane::SMALL_DASH]
        } else {
            &[lane::DASH, lane::LONG]
        };
        let kind = kinds[rng.gen_range(0..kinds.len())];
        let thick = rng.gen_range(1..3);
        let centre = road.start + road.width / 2 - thick / 2;
        let (on, off) = match kind {
            lane::LONG => (span, 0),
            lane::DASH => (6, 5),
            _ => (2, 2),
        };
        let phase = rng.gen_range(0..on + off);
        let mut along = -phase;
        while along < span {
            c.road_rect(road.vertical, along, centre, on, thick, LANE_MARKING, kind);
            along += on + off;
        }
        if extended && rng.gen_bool(0.3) {
            let at = rng.gen_range(0..span);
            let special = if rng.gen_bool(0.5) { lane::CROSSWALK } else { lane::STOP_LINE };
            if special == lane::CROSSWALK {
                // stripes running with the road, stacked across it
                let mut across = road.start;
                while across < road.start + road.width {
                    c.road_rect(road.vertical, at, across, 6, 2, LANE_MARKING, special);
                    across += 4;
                }
            } else {
                c.road_rect(road.vertical, at, road.start, 2, road.width / 2, LANE_MARKING, special);
            }
        }
    }

    for road in &roads {
        let span = if road.vertical { h } else { w };
        for _ in 0..draw_count(&mut rng, d.vehicles * span as f64 / 64.0) {
            let class = if extended {
                [CAR, CAR, CAR, TRAILER, VAN, TRUCK, LONG_TRUCK, BUS][rng.gen_range(0..8)]
            } else {
                CAR
            };
            let (len, thick) = match class {
                CAR => (rng.gen_range(6..9), rng.gen_range(3..5)),
                TRAILER => (rng.gen_range(6..9), 4),
                VAN => (rng.gen_range(8..10), 4),
                TRUCK => (rng.gen_range(10..13), rng.gen_range(4..6)),
                LONG_TRUCK => (rng.gen_range(14..19), 5),
                _ => (rng.gen_range(12..16), 5),
            };
            let thick = thick.min(road.width);
            let across = road.start + rng.gen_range(0..=road.width - thick);
            let along = rng.gen_range(-len / 2..span);
            c.road_rect(road.vertical, along, across, len, thick, class, lane::NONE);
        }
    }

    let mut rgb = RgbImage::new(spec.width, spec.height);
    for (p, &class) in rgb.pixels_mut().zip(&c.dense) {
        let base = base_colour(class);
        let mut px = [0u8; 3];
        for (o, b) in px.iter_mut().zip(base) {
            *o = (b as i32 + rng.gen_range(-12..=12)).clamp(0, 255) as u8;
        }
        *p = Rgb(px);
    }
    let to_img = |v: Vec<u8>| {
        let mut img = GrayImage::new(spec.width, spec.height);
        for (p, l) in img.pixels_mut().zip(v) {
            *p = Luma([l]);
        }
        img
    };
    Scene {
        rgb,
        dense: to_img(c.dense),
        lane: to_img(c.lane),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn histogram(m: &GrayImage) -> [usize; 256] {
        let mut h = [0usize; 256];
        m.iter().for_each(|&p| h[p as usize] += 1);
        h
    }

    #[test]
    fn deterministic_per_seed() {
        for palette in [Palette::Reduced, Palette::Extended] {
            let spec = SceneSpec::new(42, 96, 80).with_palette(palette);
            assert_eq!(generate_scene(&spec), generate_scene(&spec));
        }
        assert_ne!(generate_scene(&SceneSpec::new(1, 64, 64)).rgb, generate_scene(&SceneSpec::new(2, 64, 64)).rgb);
    }

    #[test]
    fn zero_density_is_background() {
        let spec = SceneSpec::new(5, 40, 30).with_densities(Densities::zero());
        let s = generate_scene(&spec);
        assert!(s.dense.iter().all(|&p| p == LOW_VEGETATION));
        assert!(s.lane.iter().all(|&p| p == lane::NONE));
    }

    #[test]
    fn reduced_palette_and_consistency() {
        let allowed = [LOW_VEGETATION, PAVED_ROAD, BUILDING, LANE_MARKING, CAR, SIDEWALK];
        for seed in 0..6 {
            let s = generate_scene(&SceneSpec::new(seed, 128, 128));
            assert!(s.dense.iter().all(|p| allowed.contains(p)));
            for ((&d, &l), px) in s.dense.iter().zip(s.lane.iter()).zip(s.rgb.pixels()) {
                assert_eq!(d == LANE_MARKING, l != lane::NONE);
                let base = base_colour(d);
                for k in 0..3 {
                    assert!((px.0[k] as i32 - base[k] as i32).abs() <= 12);
                }
            }
        }
    }

    #[test]
    fn markings_brighter_than_roads() {
        let m = base_colour(LANE_MARKING).iter().map(|&v| v as i32 - 12).min().unwrap();
        let r = base_colour(PAVED_ROAD).iter().map(|&v| v as i32 + 12).max().unwrap();
        assert!(m > r);
    }

    #[test]
    fn lane_marking_fraction_is_small() {
        for seed in 0..3 {
            let s = generate_scene(&SceneSpec::new(seed, 512, 512));
            let h = histogram(&s.dense);
            let frac = h[LANE_MARKING as usize] as f64 / (512.0 * 512.0);
            assert!(frac > 0.0 && frac < 0.05, "seed {seed}: {frac}");
        }
    }

    #[test]
    fn extended_palette_reaches_every_class() {
        let mut seen = [false; 20];
        for seed in 0..4 {
            let s = generate_scene(&SceneSpec::new(seed, 256, 256).with_palette(Palette::Extended));
            s.dense.iter().for_each(|&p| seen[p as usize] = true);
        }
        assert!(seen.iter().all(|&b| b), "{seen:?}");
    }
}
