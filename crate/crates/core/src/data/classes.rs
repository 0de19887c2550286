use std::fmt;
use std::str::FromStr;

use image::GrayImage;

use crate::error::{Error, Result};

pub const DENSE20: [&str; 20] = [
    "low-vegetation",
    "paved-road",
    "non-paved-road",
    "paved-parking-place",
    "non-paved-parking-place",
    "bikeway",
    "sidewalk",
    "entrance-exit",
    "danger-area",
    "lane-marking",
    "building",
    "car",
    "trailer",
    "van",
    "truck",
    "long-truck",
    "bus",
    "clutter",
    "impervious-surface",
    "tree",
];

pub const LANE13: [&str; 13] = [
    "non-lane-marking",
    "dash-line",
    "long-line",
    "small-dash-line",
    "turn-sign",
    "plus-sign",
    "other-signs",
    "crosswalk",
    "stop-line",
    "zebra-zone",
    "no-parking-zone",
    "parking-zone",
    "other-lane-markings",
];

pub const CATEGORY11: [&str; 11] = [
    "nature",
    "driving-area",
    "parking-area",
    "human-area",
    "shared-human-vehicle-area",
    "road-feature",
    "residential-area",
    "dynamic-vehicle",
    "static-vehicle",
    "man-made-surface",
    "others",
];

pub const POTSDAM6: [&str; 6] = ["impervious-surface", "building", "low-vegetation", "tree", "vehicle", "clutter"];

pub const EDGE_BINARY: [&str; 2] = ["non-edge", "edge"];

/// Dense class indices by name, for readability elsewhere.
pub mod dense {
    pub const LOW_VEGETATION: u8 = 0;
    pub const PAVED_ROAD: u8 = 1;
    pub const NON_PAVED_ROAD: u8 = 2;
    pub const PAVED_PARKING: u8 = 3;
    pub const NON_PAVED_PARKING: u8 = 4;
    pub const BIKEWAY: u8 = 5;
    pub const SIDEWALK: u8 = 6;
    pub const ENTRANCE_EXIT: u8 = 7;
    pub const DANGER_AREA: u8 = 8;
    pub const LANE_MARKING: u8 = 9;
    pub const BUILDING: u8 = 10;
    pub const CAR: u8 = 11;
    pub const TRAILER: u8 = 12;
    pub const VAN: u8 = 13;
    pub const TRUCK: u8 = 14;
    pub const LONG_TRUCK: u8 = 15;
    pub const BUS: u8 = 16;
    pub const CLUTTER: u8 = 17;
    pub const IMPERVIOUS: u8 = 18;
    pub const TREE: u8 = 19;
}

/// Label alphabet stored in a dataset mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ClassSet {
    Dense20,
    Lane13,
    Category11,
}

impl ClassSet {
    pub fn names(self) -> &'static [&'static str] {
        match self {
            ClassSet::Dense20 => &DENSE20,
            ClassSet::Lane13 => &LANE13,
            ClassSet::Category11 => &CATEGORY11,
        }
    }

    pub fn classes(self) -> usize {
        self.names().len()
    }

    pub fn name(self) -> &'static str {
        match self {
            ClassSet::Dense20 => "dense20",
            ClassSet::Lane13 => "lane13",
            ClassSet::Category11 => "category11",
        }
    }
}

impl fmt::Display for ClassSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ClassSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [ClassSet::Dense20, ClassSet::Lane13, ClassSet::Category11]
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Data(format!("unknown class set `{s}`")))
    }
}

/// Total relabelling from one alphabet to another.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassMap {
    pub source: &'static [&'static str],
    pub target: &'static [&'static str],
    table: Vec<u8>,
}

impl ClassMap {
    /// Builds a map from `(source, target)` name pairs; every source class
    /// must appear exactly once.
    pub fn from_pairs(source: &'static [&'static str], target: &'static [&'static str], pairs: &[(&str, &str)]) -> Result<Self> {
        let index = |list: &[&str], n: &str| {
            list.iter()
                .position(|&x| x == n)
                .ok_or_else(|| Error::Data(format!("unknown class `{n}`")))
        };
        let mut table = vec![None; source.len()];
        for &(s, t) in pairs {
            let (si, ti) = (index(source, s)?, index(target, t)?);
            if table[si].replace(ti as u8).is_some() {
                return Err(Error::Data(format!("class `{s}` mapped twice")));
            }
        }
        let table = table
            .into_iter()
            .enumerate()
            .map(|(i, t)| t.ok_or_else(|| Error::Data(format!("class `{}` is unmapped", source[i]))))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { source, target, table })
    }

    /// Dense classes onto the six Potsdam classes.
    pub fn dense_to_potsdam() -> Self {
        let imp = "impervious-surface";
        let pairs = [
            ("low-vegetation", "low-vegetation"),
            ("paved-road", imp),
            ("non-paved-road", imp),
            ("paved-parking-place", imp),
            ("non-paved-parking-place", imp),
            ("bikeway", imp),
            ("sidewalk", imp),
            ("entrance-exit", imp),
            ("danger-area", imp),
            ("lane-marking", imp),
            ("building", "building"),
            ("car", "vehicle"),
            ("trailer", "clutter"),
            ("van", "vehicle"),
            ("truck", "vehicle"),
            ("long-truck", "vehicle"),
            ("bus", "vehicle"),
            ("clutter", "clutter"),
            ("impervious-surface", imp),
            ("tree", "tree"),
        ];
        Self::from_pairs(&DENSE20, &POTSDAM6, &pairs).expect("built-in map is total")
    }

    /// Dense classes onto the eleven merged categories.
    pub fn dense_to_category() -> Self {
        let pairs = [
            ("low-vegetation", "nature"),
            ("tree", "nature"),
            ("paved-road", "driving-area"),
            ("non-paved-road", "driving-area"),
            ("paved-parking-place", "parking-area"),
            ("non-paved-parking-place", "parking-area"),
            ("bikeway", "human-area"),
            ("sidewalk", "human-area"),
            ("danger-area", "human-area"),
            ("entrance-exit", "shared-human-vehicle-area"),
            ("lane-marking", "road-feature"),
            ("building", "residential-area"),
            ("car", "dynamic-vehicle"),
            ("van", "dynamic-vehicle"),
            ("truck", "dynamic-vehicle"),
            ("long-truck", "dynamic-vehicle"),
            ("bus", "dynamic-vehicle"),
            ("trailer", "static-vehicle"),
            ("impervious-surface", "man-made-surface"),
            ("clutter", "others"),
        ];
        Self::from_pairs(&DENSE20, &CATEGORY11, &pairs).expect("built-in map is total")
    }

    pub fn map_label(&self, label: u8) -> Result<u8> {
        self.table.get(label as usize).copied().ok_or(Error::LabelOutOfRange {
            label: label as usize,
            classes: self.source.len(),
        })
    }

    pub fn map_name(&self, name: &str) -> Option<&'static str> {
        let i = self.source.iter().position(|&s| s == name)?;
        Some(self.target[self.table[i] as usize])
    }

    pub fn apply(&self, mask: &GrayImage) -> Result<GrayImage> {
        let mut out = mask.clone();
        for p in out.iter_mut() {
            *p = self.map_label(*p)?;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alphabets() {
        assert_eq!(ClassSet::Dense20.classes(), 20);
        assert_eq!(ClassSet::Lane13.classes(), 13);
        assert_eq!(ClassSet::Category11.classes(), 11);
        assert_eq!(DENSE20[dense::LANE_MARKING as usize], "lane-marking");
        assert_eq!(DENSE20[dense::TREE as usize], "tree");
        for c in [ClassSet::Dense20, ClassSet::Lane13, ClassSet::Category11] {
            assert_eq!(c.name().parse::<ClassSet>().unwrap(), c);
        }
    }

    #[test]
    fn merge_examples() {
        let p = ClassMap::dense_to_potsdam();
        assert_eq!(p.map_name("paved-road"), Some("impervious-surface"));
        assert_eq!(p.map_name("trailer"), Some("clutter"));
        let c = ClassMap::dense_to_category();
        assert_eq!(c.map_name("low-vegetation"), Some("nature"));
        assert_eq!(c.map_name("tree"), Some("nature"));
        assert!(c.map_label(20).is_err());
    }

    #[test]
    fn totality_enforced() {
        assert!(ClassMap::from_pairs(&POTSDAM6, &POTSDAM6, &[("tree", "tree")]).is_err());
        let dup = [("tree", "tree"), ("tree", "clutter")];
        assert!(ClassMap::from_pairs(&POTSDAM6, &POTSDAM6, &dup).is_err());
    }

    #[test]
    fn pixel_counts_conserved() {
        let mask = GrayImage::from_fn(20, 7, |x, y| image::Luma([((x * 7 + y * 3) % 20) as u8]));
        let map = ClassMap::dense_to_category();
        let out = map.apply(&mask).unwrap();
        let mut src = vec![0usize; 20];
        let mut dst = vec![0usize; 11];
        mask.iter().for_each(|&p| src[p as usize] += 1);
        out.iter().for_each(|&p| dst[p as usize] += 1);
        for t in 0..11 {
            let expect: usize = (0..20u8).filter(|&s| map.map_label(s).unwrap() == t as u8).map(|s| src[s as usize]).sum();
            assert_eq!(dst[t], expect);
        }
    }
}
