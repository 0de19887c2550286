use image::{GrayImage, Luma};

use super::{derive_edges, ClassMap, ClassSet, LabeledImage};
use crate::error::{Error, Result};
use crate::net::{BranchKind, Task};

/// Boundary band half-width used for edge targets unless configured.
pub const DEFAULT_EDGE_RADIUS: usize = 2;

/// Mask alphabet a dataset must carry to train `task`.
pub fn task_class_set(task: Task) -> ClassSet {
    match task {
        Task::Lane13 => ClassSet::Lane13,
        Task::Category11 => ClassSet::Category11,
        Task::Dense20 | Task::EdgeBinary | Task::EdgeMulti => ClassSet::Dense20,
    }
}

fn need(kind: BranchKind, img: &LabeledImage, want: ClassSet) -> Result<()> {
    if img.class_set == want {
        Ok(())
    } else {
        Err(Error::Data(format!(
            "branch `{}` needs {want} masks, dataset has {}",
            kind.name(),
            img.class_set
        )))
    }
}

/// Label map a branch is trained and scored against.
pub fn branch_target(kind: BranchKind, img: &LabeledImage, edge_radius: usize) -> Result<GrayImage> {
    match kind {
        BranchKind::Semantic => {
            need(kind, img, ClassSet::Dense20)?;
            Ok(img.mask.clone())
        }
        BranchKind::EdgeMulti => {
            need(kind, img, ClassSet::Dense20)?;
            Ok(derive_edges(&img.mask, edge_radius)?.1)
        }
        BranchKind::EdgeBinary => Ok(derive_edges(&img.mask, edge_radius)?.0),
        BranchKind::LaneMulti => {
            need(kind, img, ClassSet::Lane13)?;
            Ok(img.mask.clone())
        }
        BranchKind::LaneBinary => {
            need(kind, img, ClassSet::Lane13)?;
            let mut out = img.mask.clone();
            out.pixels_mut().for_each(|p| *p = Luma([u8::from(p.0[0] != 0)]));
            Ok(out)
        }
        BranchKind::Category => match img.class_set {
            ClassSet::Category11 => Ok(img.mask.clone()),
            ClassSet::Dense20 => ClassMap::dense_to_category().apply(&img.mask),
            ClassSet::Lane13 => need(kind, img, ClassSet::Category11).map(|_| unreachable!()),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_scene, SceneSpec};

    #[test]
    fn targets_stay_in_range() {
        let scene = generate_scene(&SceneSpec::new(9, 64, 64));
        for task in Task::ALL {
            let img = scene.labeled(task_class_set(task));
            for kind in task.branches() {
                let t = branch_target(kind, &img, DEFAULT_EDGE_RADIUS).unwrap();
                assert!(t.iter().all(|&p| (p as usize) < kind.classes()), "{kind:?}");
            }
        }
    }

    #[test]
    fn mismatched_alphabet_is_rejected() {
        let img = generate_scene(&SceneSpec::new(1, 32, 32)).labeled(ClassSet::Lane13);
        assert!(branch_target(BranchKind::Semantic, &img, 2).is_err());
        assert!(branch_target(BranchKind::Category, &img, 2).is_err());
        let dense = generate_scene(&SceneSpec::new(1, 32, 32)).labeled(ClassSet::Dense20);
        assert!(branch_target(BranchKind::LaneBinary, &dense, 2).is_err());
    }
}
