mod common;

use common::gaussian;
use ndarray::{Array2, Axis};
use proptest::prelude::*;
use simembed::datasets::Registry;
use simembed::init::pca_2d;
use simembed::metrics::{nearest_centroid_precision, silhouette_scaled};
use simembed::optimizer::{fit, ModelFamily, OptimizerConfig};
use simembed::preprocess::fit_pca;
use simembed::scenarios::*;
use simembed::{Layout2D64, ManipulationSet64};

fn reduced(name: &str) -> (Array2<f64>, Option<Vec<i64>>) {
    let ds = Registry::bundled().unwrap().load_dataset(name).unwrap();
    let x = fit_pca(ds.features.view(), 0.9).unwrap().transform(ds.features.view()).unwrap();
    (x, ds.labels)
}

#[test]
fn empty_manipulation_keeps_precision_of_first_model() {
    let (x, labels) = reduced("wine");
    let labels = labels.unwrap();
    let mut diffs = 0.0;
    for seed in 0..10 {
        let control = select_control_points(x.nrows(), Some(14), seed).unwrap();
        let init = pca_2d(x.view()).unwrap().select(&control.indices);
        let config = ScenarioConfig::for_family(ModelFamily::Kernel).with_seed(seed);
        let out = run_interpolation(x.view(), &control, &init, &mut ManipulationSet64::default(), ModelFamily::Kernel, &config).unwrap();
        let before = out.initial_model.project(x.view()).unwrap();
        let a = nearest_centroid_precision(before.view(), &labels).unwrap();
        let b = nearest_centroid_precision(out.layout.coords.view(), &labels).unwrap();
        diffs += (a - b).abs();
        assert_eq!(out.layout.len(), x.nrows());
        assert_eq!(out.clone_trace.len(), config.clone.iterations);
        assert_eq!(out.refit_trace.len(), config.refit.iterations);
    }
    assert!(diffs / 10.0 <= 5.0, "mean precision change {}", diffs / 10.0);
}

#[test]
fn manipulation_must_target_control_points() {
    let x = gaussian(30, 4, 1);
    let control = ControlPointSet::new(vec![0, 5, 9, 12, 20], 30).unwrap();
    let init = pca_2d(x.view()).unwrap().select(&control.indices);
    let mut bad = ManipulationSet64::new(vec![simembed::Move64 { index: 3, position: [0.0, 0.0] }]);
    let config = ScenarioConfig::for_family(ModelFamily::Linear).with_iterations(5);
    let r = run_interpolation(x.view(), &control, &init, &mut bad, ModelFamily::Linear, &config);
    assert!(matches!(r, Err(simembed::Error::NotControlPoint(3))));
}

#[test]
fn zero_displacement_without_neighbours_reproduces_clone() {
    let x = gaussian(60, 5, 2);
    let init = pca_2d(x.view()).unwrap();
    let spec = NeighborSpec {
        k_original: 0,
        k_visual: 0,
        mask_base: 1.0,
        ..NeighborSpec::default()
    };
    for family in [ModelFamily::Linear, ModelFamily::Kernel] {
        let config = ScenarioConfig::for_family(family).with_seed(4).with_iterations(100);
        let mut stay = |l: &Layout2D64, _: &[usize]| {
            Ok(ManipulationSet64::new(vec![simembed::Move64 {
                index: 7,
                position: [l.coords[[7, 0]], l.coords[[7, 1]]],
            }]))
        };
        let out = run_neighbor_learning(x.view(), &init, &mut stay, &spec, family, &config).unwrap();
        let scale = out.initial_layout.rms_radius();
        let diff = common::max_abs_diff(&out.layout.coords, &out.initial_layout.coords);
        assert!(diff <= 1e-3 * scale, "{family:?}: {diff}");
    }
}

#[test]
fn neighbour_learning_rejects_empty_manipulation() {
    let x = gaussian(20, 3, 3);
    let init = pca_2d(x.view()).unwrap();
    let spec = NeighborSpec { k_original: 3, k_visual: 2, ..Default::default() };
    let config = ScenarioConfig::for_family(ModelFamily::Linear).with_iterations(3);
    let r = run_neighbor_learning(x.view(), &init, &mut ManipulationSet64::default(), &spec, ModelFamily::Linear, &config);
    assert!(matches!(r, Err(simembed::Error::EmptyManipulation)));
}

#[test]
fn neighbour_learning_runs_without_labels() {
    let ds = Registry::bundled().unwrap().load_dataset("wine").unwrap().unlabeled();
    let x = fit_pca(ds.features.view(), 0.9).unwrap().transform(ds.features.view()).unwrap();
    let init = pca_2d(x.view()).unwrap();
    let spec = NeighborSpec::default();
    let config = ScenarioConfig::for_family(ModelFamily::Kernel).with_iterations(50);
    let mut drag = |l: &Layout2D64, _: &[usize]| {
        Ok(ManipulationSet64::new(
            (0..10).map(|i| simembed::Move64 { index: i, position: [l.coords[[i, 0]] + 2.0, l.coords[[i, 1]]] }).collect(),
        ))
    };
    let out = run_neighbor_learning(x.view(), &init, &mut drag, &spec, ModelFamily::Kernel, &config).unwrap();
    let report = simembed::metrics::evaluate(out.layout.coords.view(), ds.labels.as_deref(), x.view(), 10).unwrap();
    assert!(report.nearest_centroid_precision.is_none());
    assert!(report.silhouette_scaled.is_none());
}

#[test]
fn drag_selects_exactly_one_class_of_mnist() {
    let ds = Registry::bundled().unwrap().load_dataset("mnist").unwrap();
    let labels = ds.labels.clone().unwrap();
    assert!(labels.iter().all(|l| [2, 4, 7, 9].contains(l)));
    let layout = Layout2D64::new(gaussian(labels.len(), 2, 5), simembed::LayoutSource::Learned);
    let moves = drag_class(&layout, &labels, 4, [10.0, 10.0]).unwrap();
    let expect: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 4).collect();
    assert_eq!(moves.indices(), expect);
    for m in &moves.moves {
        assert_eq!(m.position[0], layout.coords[[m.index, 0]] + 10.0);
    }
}

#[test]
fn permuting_rows_permutes_neighbour_learning_output() {
    let x = gaussian(40, 4, 6);
    let perm: Vec<usize> = (0..40).map(|i| (i * 17) % 40).collect();
    let xp = x.select(Axis(0), &perm);
    let spec = NeighborSpec { k_original: 5, k_visual: 3, ..Default::default() };
    let config = ScenarioConfig::for_family(ModelFamily::Linear).with_seed(2).with_iterations(60);
    let moved = [3usize, 11];
    let run = |x: &Array2<f64>, rows: Vec<usize>| {
        let init = pca_2d(x.view()).unwrap();
        let mut m = |l: &Layout2D64, _: &[usize]| {
            Ok(ManipulationSet64::new(
                rows.iter().map(|&i| simembed::Move64 { index: i, position: [l.coords[[i, 0]] + 1.0, l.coords[[i, 1]] - 0.5] }).collect(),
            ))
        };
        run_neighbor_learning(x.view(), &init, &mut m, &spec, ModelFamily::Linear, &config).unwrap()
    };
    let a = run(&x, moved.to_vec());
    let inverse: Vec<usize> = moved.iter().map(|&i| perm.iter().position(|&p| p == i).unwrap()).collect();
    let b = run(&xp, inverse);
    let a_perm = a.layout.coords.select(Axis(0), &perm);
    assert!(common::max_abs_diff(&a_perm, &b.layout.coords) < 1e-8);
}

#[test]
fn supervised_target_over_trains_into_class_clusters() {
    let (x, labels) = reduced("mnist");
    let labels = labels.unwrap();
    let rows: Vec<usize> = (0..300).collect();
    let x = x.select(Axis(0), &rows);
    let labels: Vec<i64> = labels[..300].to_vec();
    let (t, m) = supervised_target(&labels, 0.8).unwrap();
    let config = OptimizerConfig {
        iterations: 2500,
        learning_rate: 0.05,
        ..OptimizerConfig::for_family(ModelFamily::Kernel)
    };
    let out = fit(x.view(), ModelFamily::Kernel, &t, &m, &config, None, None).unwrap();
    let y = out.model.project(x.view()).unwrap();
    let s = silhouette_scaled(y.view(), &labels).unwrap();
    assert!(s >= 80.0, "silhouette {s}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn neighbour_target_is_symmetric_and_bounded(seed in 0u64..10_000, k1 in 0usize..8, k2 in 0usize..8) {
        let x = gaussian(25, 5, seed);
        let layout = Layout2D64::new(gaussian(25, 2, seed + 1), simembed::LayoutSource::Learned);
        let spec = NeighborSpec { k_original: k1, k_visual: k2, ..Default::default() };
        let (t, m) = neighbor_target(x.view(), &layout, &[1, 8, 20], &spec, 1.0).unwrap();
        prop_assert_eq!(&t.values, &t.values.t().to_owned());
        prop_assert_eq!(&m.values, &m.values.t().to_owned());
        prop_assert!(t.values.iter().all(|&v| (0.0..=1.0).contains(&v)));
        prop_assert!(m.values.iter().all(|&v| (0.0..=1.0).contains(&v)));
        prop_assert!(t.values.diag().iter().all(|&v| v == 1.0));
        for j in simembed::knn::neighbors_of(x.view(), 8, k1) {
            prop_assert_eq!(t.values[[8, j]], 1.0);
            prop_assert_eq!(m.values[[8, j]], 1.0);
        }
        // a pair away from every moved point keeps the base weight
        prop_assert!(m.values[[2, 3]] == 0.1 || k1 > 0 || k2 > 0);
    }
}
