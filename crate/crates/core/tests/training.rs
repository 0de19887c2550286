use image::{GrayImage, RgbImage};
use skyseg::data::{generate_scene, ClassSet, LabeledImage, SceneSpec};
use skyseg::net::{write_weights, BranchKind, Network, NetworkConfig, Task};
use skyseg::run::{evaluate, train_network, ClassWeighting, RunConfig, TrainOutputs};

fn scenes(n: u64, size: u32) -> Vec<LabeledImage> {
    (0..n)
        .map(|s| generate_scene(&SceneSpec::new(100 + s, size, size)).labeled(ClassSet::Dense20))
        .collect()
}

fn micro(task: Task) -> RunConfig {
    let mut cfg = RunConfig::for_network(NetworkConfig::micro(task));
    cfg.crop_size = 64;
    cfg
}

#[test]
fn zero_epochs_saves_the_initialization() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = micro(Task::Dense20);
    cfg.epochs = 0;
    let mut net = Network::<f32>::build(&cfg.network).unwrap();
    let out = TrainOutputs { dir: dir.path().to_path_buf() };
    let report = train_network(&mut net, &cfg, &scenes(1, 64), Some(&out)).unwrap();
    assert!(report.steps.is_empty());
    let mut init = Vec::new();
    write_weights(Network::<f32>::build(&cfg.network).unwrap().store(), &mut init).unwrap();
    assert_eq!(std::fs::read(out.weights()).unwrap(), init);
}

#[test]
fn ten_steps_are_reproducible() {
    let run = || {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = micro(Task::Lane13);
        cfg.set_seed(3);
        cfg.epochs = 100;
        cfg.max_steps = Some(10);
        let mut net = Network::<f32>::build(&cfg.network).unwrap();
        let out = TrainOutputs { dir: dir.path().to_path_buf() };
        let images: Vec<_> = (0..3)
            .map(|s| generate_scene(&SceneSpec::new(s, 64, 64)).labeled(ClassSet::Lane13))
            .collect();
        let report = train_network(&mut net, &cfg, &images, Some(&out)).unwrap();
        assert_eq!(report.steps.len(), 10);
        (std::fs::read(out.weights()).unwrap(), std::fs::read(out.log()).unwrap())
    };
    assert_eq!(run(), run());
}

#[test]
fn first_step_cross_entropy_is_near_uniform_baseline() {
    let mut cfg = micro(Task::Dense20);
    cfg.class_weighting = ClassWeighting::None;
    cfg.max_steps = Some(1);
    let mut net = Network::<f32>::build(&cfg.network).unwrap();
    let report = train_network(&mut net, &cfg, &scenes(1, 64), None).unwrap();
    let first = &report.steps[0];
    for (b, kind) in net.branch_kinds().iter().enumerate() {
        let c = kind.classes() as f64;
        // uniform probabilities give (N_pix / C) ln C
        let baseline = 64.0 * 64.0 / c * c.ln();
        let ce = first.components[b].0.unwrap();
        assert!(ce > 0.7 * baseline && ce < 1.6 * baseline, "{kind}: ce {ce}, baseline {baseline}");
    }
}

/// Vertical stripes 8 px wide. With edge radius 2 each internal boundary
/// marks 4 columns, so 7 boundaries across 64 px give a near-balanced task.
fn striped(size: u32) -> LabeledImage {
    let mask = GrayImage::from_fn(size, size, |x, _| image::Luma([((x / 8) % 2) as u8]));
    let rgb = RgbImage::from_fn(size, size, |x, y| image::Rgb([(x * 3) as u8, (y * 5) as u8, 90]));
    LabeledImage::new(rgb, mask, ClassSet::Dense20).unwrap()
}

#[test]
fn untrained_network_is_at_chance_on_balanced_binary_task() {
    let mut cfg = micro(Task::EdgeBinary);
    cfg.edge_radius = 2;
    let images = vec![striped(64), striped(64)];
    let oracle = evaluate(None, &cfg, &images).unwrap();
    let edge_share = oracle[0].1.row_sum(1) as f64 / oracle[0].1.total() as f64;
    assert_eq!(edge_share, 28.0 / 64.0, "edge share {edge_share}");

    let net = Network::<f32>::build(&cfg.network).unwrap();
    let scored = evaluate(Some(&net), &cfg, &images).unwrap();
    assert_eq!(scored[0].0, BranchKind::EdgeBinary);
    let pa = scored[0].1.pixel_accuracy();
    assert!((pa - 0.5).abs() < 0.15, "pixel accuracy {pa}");
}

#[test]
fn oracle_evaluation_is_perfect() {
    let cfg = micro(Task::Dense20);
    for (kind, cm) in evaluate(None, &cfg, &scenes(2, 64)).unwrap() {
        assert_eq!(cm.mean_iou(), 1.0, "{kind}");
        assert_eq!(cm.pixel_accuracy(), 1.0, "{kind}");
    }
}

#[test]
fn divergence_is_reported() {
    let mut cfg = micro(Task::EdgeBinary);
    cfg.adam.lr = 1e30;
    cfg.max_steps = Some(20);
    cfg.epochs = 100;
    let mut net = Network::<f32>::build(&cfg.network).unwrap();
    match train_network(&mut net, &cfg, &scenes(1, 64), None) {
        Err(skyseg::Error::Divergence { step }) => assert!(step > 0),
        other => panic!("expected divergence, got {:?}", other.map(|r| r.steps.len())),
    }
}
