use std::collections::BTreeSet;
use std::path::Path;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mvdi_core::depthio::{synth_dataset, SplitSpec, SynthConfig};
use mvdi_core::minicnn::{gradient_check, init_model, Arch, MultiStreamModel, TrainConfig};
use mvdi_core::pipeline::{run_with, Classifier, PipelineConfig, Representation, RunOptions};
use mvdi_core::rankpool::PoolVariant;

fn tiny_arch(filters: usize, kernel: usize, pool: bool, units: usize) -> Arch {
    let pad = kernel / 2;
    let pool = if pool { "/pool" } else { "" };
    format!("input=6;conv={filters}x{kernel}x{kernel}/s1/p{pad}{pool};dense={units}").parse().unwrap()
}

fn images(seed: u64, n: usize, len: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| (0..len).map(|_| rng.random::<f64>()).collect()).collect()
}

// Zero biases on dead rectifiers put pre-activations exactly on the kink,
// where a central difference is not a derivative.
fn jitter(model: &mut MultiStreamModel, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    for b in model.all_blocks_mut() {
        b.iter_mut().for_each(|v| *v += 0.05 * (rng.random::<f64>() - 0.5));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn gradients_agree_with_finite_differences(
        filters in 1usize..4, kernel in prop::sample::select(vec![1usize, 3]), pool: bool,
        units in 2usize..6, seed in 0u64..1000,
    ) {
        let mut model = init_model(&tiny_arch(filters, kernel, pool, units), 2, 3, seed).unwrap();
        jitter(&mut model, seed);
        let x = images(seed ^ 0x55, 3, 36);
        let refs: Vec<&[f64]> = x.iter().map(Vec::as_slice).collect();
        for g in 0..2 {
            let r = gradient_check(&model, g, &refs, &[0, 1, 2], 1e-3, 1e-4).unwrap();
            prop_assert!(r.max_rel_error < 1e-4, "group {} error {}", g, r.max_rel_error);
        }
    }

    #[test]
    fn batch_order_does_not_matter(seed in 0u64..1000, rot in 1usize..4) {
        let model = init_model(&tiny_arch(2, 3, true, 4), 1, 2, seed).unwrap();
        let x = images(seed, 4, 36);
        let labels = [0, 1, 1, 0];
        let cfg = TrainConfig { dropout: 0.0, ..TrainConfig::default() };
        let a: Vec<&[f64]> = x.iter().map(Vec::as_slice).collect();
        let mut b = a.clone();
        b.rotate_left(rot);
        let mut lb = labels.to_vec();
        lb.rotate_left(rot);
        let (la, ga) = model.loss_and_grads(0, &a, &labels, &cfg, 1).unwrap();
        let (lb_, gb) = model.loss_and_grads(0, &b, &lb, &cfg, 1).unwrap();
        prop_assert!((la - lb_).abs() <= 1e-12 * la.abs().max(1.0));
        for (p, q) in ga.blocks().flatten().zip(gb.blocks().flatten()) {
            prop_assert!((p - q).abs() <= 1e-12 * p.abs().max(1e-3));
        }
    }

    #[test]
    fn inference_ignores_dropout(seed in 0u64..1000) {
        let arch: Arch = "input=6;conv=2x3x3/s1/p1;dense=5/drop;dense=4/drop".parse().unwrap();
        let model = init_model(&arch, 2, 3, seed).unwrap();
        let x = images(seed, 1, 36).remove(0);
        let a = model.forward(1, &x).unwrap();
        let b = model.forward(1, &x).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(model.extract_feature(1, &x).unwrap(), a.1);
    }

    #[test]
    fn config_text_round_trips(
        seed in any::<u64>(), lambda in 0.01f64..10.0, iters in 1usize..500,
        variant in prop::sample::select(vec![PoolVariant::ExactRankSvm, PoolVariant::ApproxPrefix, PoolVariant::ApproxFrames]),
        count in 1usize..6, overlap in 0.0f64..0.9, dmm: bool, softmax: bool,
        lr in 1e-5f64..0.5, dropout in 0.0f64..0.9, pca in prop::option::of(1usize..50),
        grid in prop::collection::vec(1e-3f64..1e3, 1..6), folds in 2usize..8,
        active in prop::sample::subsequence(vec![1usize, 2, 3, 4, 5], 1..=5),
    ) {
        let split = SplitSpec::CrossView { train_views: BTreeSet::from([0, 2]), test_views: Some(BTreeSet::from([1])) };
        let mut c = PipelineConfig::new("/data/m.csv", split);
        c.seed = seed;
        c.pool.lambda = lambda;
        c.pool.max_iters = iters;
        c.pool.variant = variant;
        c.segments.num_segments = count;
        c.segments.overlap_ratio = overlap;
        if dmm { c.representation = Representation::Dmm; }
        if softmax { c.classifier = Classifier::SoftmaxSum; }
        c.train.learning_rate = lr;
        c.train.dropout = dropout;
        c.pca_dim = pca;
        c.c_grid = grid;
        c.cv_folds = folds;
        c.active_groups = active;
        prop_assert_eq!(PipelineConfig::parse(&c.to_text(), None).unwrap(), c);
    }
}

fn tiny_run_config(dir: &Path) -> PipelineConfig {
    let synth = SynthConfig { num_classes: 2, samples_per_class: 4, width: 16, height: 16, frames: 6, num_subjects: 2, ..SynthConfig::default() };
    synth_dataset(&synth, 5, dir).unwrap();
    let split = SplitSpec::CrossSubject { train_subjects: BTreeSet::from([1]), test_subjects: None };
    let mut cfg = PipelineConfig::new(dir.join("manifest.csv"), split);
    cfg.arch = "input=8;conv=2x3x3/s1/p1/pool;dense=6".parse().unwrap();
    cfg.train.iters = 3;
    cfg.train.batch_size = 2;
    cfg.pool.variant = PoolVariant::ApproxPrefix;
    cfg.segments.num_segments = 2;
    cfg.cv_folds = 2;
    cfg
}

#[test]
fn feature_dim_grows_linearly_with_groups() {
    let dir = tempfile::tempdir().unwrap();
    let base = tiny_run_config(dir.path());
    let opts = RunOptions::with_threads(1);
    for k in 1..=5 {
        let cfg = PipelineConfig { active_groups: (1..=k).collect(), ..base.clone() };
        assert_eq!(run_with(&cfg, &opts).unwrap().feature_dim, 6 * k);
    }
}

#[test]
fn report_reproduces_its_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_run_config(dir.path());
    let opts = RunOptions::with_threads(2);
    let first = run_with(&cfg, &opts).unwrap();
    let again = run_with(&PipelineConfig::from_report(&first.to_text()).unwrap(), &opts).unwrap();
    assert_eq!(again.confusion, first.confusion);
    assert_eq!(again.to_text(), first.to_text());
}
