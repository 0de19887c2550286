//! On-disk dataset: `images/NNNN.ppm`, `masks/NNNN.pgm` and `manifest.txt`.

use std::path::{Path, PathBuf};

use super::{pnm, ClassSet, LabeledImage};
use crate::error::{Error, Result};

pub const MANIFEST: &str = "manifest.txt";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub id: String,
    pub width: u32,
    pub height: u32,
    pub class_set: ClassSet,
}

/// Parses `id,width,height,class_set` lines; blank lines are skipped.
pub fn parse_manifest(text: &str) -> Result<Vec<ManifestEntry>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, line)| {
            let bad = |what: &str| Error::Data(format!("manifest line {}: {what}: `{line}`", n + 1));
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 4 {
                return Err(bad("expected 4 fields"));
            }
            if f[0].is_empty() || f[0].contains(['/', '\\']) {
                return Err(bad("bad id"));
            }
            Ok(ManifestEntry {
                id: f[0].to_string(),
                width: f[1].parse().map_err(|_| bad("bad width"))?,
                height: f[2].parse().map_err(|_| bad("bad height"))?,
                class_set: f[3].parse().map_err(|_| bad("bad class set"))?,
            })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct Dataset {
    root: PathBuf,
    entries: Vec<ManifestEntry>,
}

impl Dataset {
    pub fn open(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        let path = root.join(MANIFEST);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let entries = parse_manifest(&text)?;
        if entries.is_empty() {
            return Err(Error::Data(format!("{} lists no samples", path.display())));
        }
        Ok(Self { root, entries })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Common class set of all samples.
    pub fn class_set(&self) -> Result<ClassSet> {
        let first = self.entries[0].class_set;
        match self.entries.iter().find(|e| e.class_set != first) {
            Some(e) => Err(Error::Data(format!("sample {} is {}, expected {first}", e.id, e.class_set))),
            None => Ok(first),
        }
    }

    pub fn load(&self, index: usize) -> Result<LabeledImage> {
        let e = self
            .entries
            .get(index)
            .ok_or_else(|| Error::Data(format!("sample index {index} out of range")))?;
        let rgb = pnm::read_ppm(&self.root.join("images").join(format!("{}.ppm", e.id)))?;
        let mask = pnm::read_pgm(&self.root.join("masks").join(format!("{}.pgm", e.id)))?;
        if rgb.dimensions() != (e.width, e.height) {
            return Err(Error::Data(format!(
                "sample {}: manifest says {}x{}, image is {:?}",
                e.id,
                e.width,
                e.height,
                rgb.dimensions()
            )));
        }
        LabeledImage::new(rgb, mask, e.class_set)
    }

    pub fn load_all(&self) -> Result<Vec<LabeledImage>> {
        (0..self.len()).map(|i| self.load(i)).collect()
    }
}

/// Writes samples as `0000`, `0001`, ... and the manifest last.
pub fn write_dataset(root: impl AsRef<Path>, samples: &[LabeledImage]) -> Result<Dataset> {
    let root = root.as_ref();
    for sub in ["images", "masks"] {
        let dir = root.join(sub);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    let mut manifest = String::new();
    let mut entries = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        let id = format!("{i:04}");
        pnm::write_ppm(&root.join("images").join(format!("{id}.ppm")), &s.rgb)?;
        pnm::write_pgm(&root.join("masks").join(format!("{id}.pgm")), &s.mask)?;
        manifest.push_str(&format!("{id},{},{},{}\n", s.width(), s.height(), s.class_set));
        entries.push(ManifestEntry {
            id,
            width: s.width(),
            height: s.height(),
            class_set: s.class_set,
        });
    }
    crate::io::write_atomic(&root.join(MANIFEST), manifest.as_bytes())?;
    Ok(Dataset {
        root: root.to_path_buf(),
        entries,
    })
}
