//! Tests against the real MNIST files. They are skipped with a note when the
//! files are absent; set `GRADLAB_MNIST_DIR` to point elsewhere.

use std::path::PathBuf;

use gradlab_core::attribution::{compose, integrated_gradients, vanilla_saliency, Baseline, IgConfig, SmootherConfig};
use gradlab_core::model::{load_idx, train_mlp, Dataset, Mlp, Model, TrainConfig};

fn mnist_dir() -> Option<PathBuf> {
    let dir = std::env::var_os("GRADLAB_MNIST_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"));
    dir.join("t10k-images-idx3-ubyte").exists().then_some(dir)
}

fn test_split() -> Option<Dataset> {
    let Some(dir) = mnist_dir() else {
        eprintln!("MNIST files not found; skipping");
        return None;
    };
    Some(load_idx(dir.join("t10k-images-idx3-ubyte"), dir.join("t10k-labels-idx1-ubyte")).unwrap())
}

#[test]
fn test_split_loads_in_range() {
    let Some(ds) = test_split() else { return };
    assert_eq!(ds.len(), 10_000);
    assert_eq!(ds.dim(), 784);
    assert_eq!(ds.image_shape(), &[28, 28]);
    let r = ds.range();
    assert_eq!((r.x_min, r.x_max), (0.0, 1.0));
    for i in (0..ds.len()).step_by(97) {
        assert!(ds.image(i).iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(ds.label(i) < 10);
    }
}

#[test]
fn ig_completeness_converges_with_steps() {
    let Some(ds) = test_split() else { return };
    let cfg = TrainConfig { epochs: 2, ..Default::default() };
    let model = train_mlp(&ds.take(2000), &cfg).unwrap().model;
    for i in 2000..2005 {
        let x = ds.image(i);
        let class = ds.label(i);
        for (baseline, b) in [(Baseline::Black, 0.0), (Baseline::White, 1.0)] {
            let delta = model.score(&x, class).unwrap() - model.score(&vec![b; 784], class).unwrap();
            let error = |steps| {
                let cfg = IgConfig { steps, baseline: baseline.clone() };
                let ig = integrated_gradients(&model, &x, class, &cfg, &SmootherConfig::none(), ds.range()).unwrap();
                (ig.as_slice().iter().sum::<f64>() - delta).abs() / delta.abs()
            };
            let (coarse, fine) = (error(64), error(8192));
            assert!(fine <= 1e-3, "image {i}: {fine}");
            assert!(fine <= coarse, "image {i}: {fine} > {coarse}");
        }
    }
}

#[test]
fn explanations_are_finite() {
    let Some(ds) = test_split() else { return };
    let model = Model::Mlp(Mlp::random(&[784, 200, 10], 3).unwrap());
    let x = ds.image(0);
    let g = vanilla_saliency(&model, &x, 7).unwrap();
    assert_eq!(g.len(), 784);
    for (s, m) in [("none", "GI"), ("SG", "Grad"), ("AG", "Grad"), ("AG", "IG(W)"), ("SG", "NG")] {
        let mut e = compose(s, m).unwrap().with_seed(1);
        e.smoother.n_samples = 8;
        e.ig.steps = 8;
        e.noisegrad.n_models = 3;
        let map = e.explain(&model, &x, 7, ds.range()).unwrap();
        assert!(map.as_slice().iter().all(|v| v.is_finite()), "{}", map.method_chain);
    }
}
