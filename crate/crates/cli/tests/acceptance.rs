//! Acceptance suite. Runs every headline criterion at its stated tolerance
//! and prints one PASS/FAIL line each; exits non-zero if any fails.
//!
//! `cargo test -p simembed-cli --test acceptance`

use std::time::{Duration, Instant};

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use simembed::datasets::Registry;
use simembed::init::pca_2d;
use simembed::metrics::{evaluate, nearest_centroid_precision, neighbor_error, silhouette_scaled};
use simembed::optimizer::{
    fit, kernel_gradient, linear_gradient, objective, KernelModel, LinearModel, ModelFamily, OptimizerConfig,
};
use simembed::preprocess::fit_pca;
use simembed::scenarios::{run_neighbor_learning, NeighborSpec, ScenarioConfig};
use simembed::similarity::{clone_target, projected_similarity, rbf_kernel, uniform_mask, MaskMatrix, Scale, SimilarityMatrix};
use simembed::{Layout2D64, ManipulationSet64, Move64};
use simembed_cli::experiment::{summarize, write_results_csv, write_summary_csv, ExperimentResult};
use simembed_cli::{run_experiment, ExperimentPlan, Scenario};

type Outcome = Result<String, String>;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn gaussian(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut r = rng(seed);
    Array2::from_shape_fn((rows, cols), |_| StandardNormal.sample(&mut r))
}

fn symmetric_uniform(n: usize, lo: f64, hi: f64, seed: u64) -> Array2<f64> {
    let mut r = rng(seed);
    let mut m = Array2::<f64>::eye(n);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = r.random_range(lo..=hi);
            m[[i, j]] = v;
            m[[j, i]] = v;
        }
    }
    m
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn cell_mean(result: &ExperimentResult, family: &str, metric: &str) -> f64 {
    summarize(result)
        .into_iter()
        .find(|s| s.cell.family == family && s.metric == metric)
        .unwrap_or_else(|| panic!("no {family} {metric} in summary"))
        .mean
}

fn plan(dataset: &str, families: &[ModelFamily], scenario: Scenario, runs: usize) -> ExperimentPlan {
    ExperimentPlan {
        datasets: vec![dataset.into()],
        families: families.to_vec(),
        scenario,
        runs,
        ..Default::default()
    }
}

fn experiment(p: &ExperimentPlan) -> Result<ExperimentResult, String> {
    let reg = Registry::bundled().map_err(|e| e.to_string())?;
    let r = run_experiment(p, &reg).map_err(|e| e.to_string())?;
    if let Some(f) = r.failures.first() {
        return Err(format!("run failed: [{}] {}", f.code, f.message));
    }
    Ok(r)
}

// gradients

const H: f64 = 1e-5;

fn loss_for(y: &Array2<f64>, t: &SimilarityMatrix<f64>, m: &MaskMatrix<f64>) -> f64 {
    objective(&projected_similarity(y.view(), 1.0).unwrap(), t, m).unwrap()
}

fn finite_difference(design: &Array2<f64>, params: &Array2<f64>, t: &SimilarityMatrix<f64>, m: &MaskMatrix<f64>) -> Array2<f64> {
    let mut g = Array2::zeros(params.dim());
    for idx in ndarray::indices(params.dim()) {
        let mut plus = params.clone();
        plus[idx] += H;
        let mut minus = params.clone();
        minus[idx] -= H;
        g[idx] = (loss_for(&design.dot(&plus), t, m) - loss_for(&design.dot(&minus), t, m)) / (2.0 * H);
    }
    g
}

fn relative_error(analytic: &Array2<f64>, numeric: &Array2<f64>) -> f64 {
    let scale = numeric.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let diff = analytic.iter().zip(numeric).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    diff / scale.max(1e-12)
}

fn random_problem(n: usize, seed: u64) -> (SimilarityMatrix<f64>, MaskMatrix<f64>) {
    let t = SimilarityMatrix {
        values: symmetric_uniform(n, 0.0, 1.0, seed),
        sigma: 1.0,
    };
    let m = MaskMatrix::from_values(symmetric_uniform(n, 0.05, 1.0, seed + 1000)).unwrap();
    (t, m)
}

fn gradient_correctness() -> Outcome {
    let mut linear = 0.0f64;
    let mut kernel = 0.0f64;
    for seed in 0..20 {
        let x = gaussian(20, 5, seed);
        let w = gaussian(5, 2, seed + 50) * 0.4;
        let (t, m) = random_problem(20, seed + 100);
        let g = linear_gradient(&LinearModel { weights: w.clone() }, x.view(), &t, &m, 1.0).unwrap();
        linear = linear.max(relative_error(&g, &finite_difference(&x, &w, &t, &m)));

        let x = gaussian(15, 4, seed + 200);
        let k = rbf_kernel(x.view(), None, Scale::Auto).unwrap();
        let a = gaussian(15, 2, seed + 300) * 0.5;
        let (t, m) = random_problem(15, seed + 400);
        let model = KernelModel {
            coefficients: a.clone(),
            training_data: x.clone(),
            gamma: k.gamma,
        };
        let g = kernel_gradient(&model, &k, &t, &m, 1.0).unwrap();
        kernel = kernel.max(relative_error(&g, &finite_difference(&k.values, &a, &t, &m)));
    }
    check(
        linear <= 1e-4 && kernel <= 1e-4,
        format!("max relative error linear {linear:.2e}, kernel {kernel:.2e}"),
    )
}

fn clone_fidelity() -> Outcome {
    // raw features: the 90% reduction of Wine is one-dimensional and any
    // linear map clones it exactly from the first iterate
    let x = Registry::bundled().unwrap().load_dataset("wine").unwrap().features;
    let init = pca_2d(x.view()).unwrap();
    let t = clone_target(init.coords.view(), Scale::Auto).unwrap();
    let m = uniform_mask(x.nrows(), 1.0).unwrap();
    let config = OptimizerConfig::for_family(ModelFamily::Linear);
    if (config.learning_rate, config.iterations) != (1e-3, 500) {
        return Err("default linear settings changed".into());
    }
    let out = fit(x.view(), ModelFamily::Linear, &t, &m, &config, None, None).map_err(|e| e.to_string())?;
    let ratio = out.final_loss() / out.initial_loss();
    let monotone = out.best_so_far().windows(2).all(|w| w[1] <= w[0]);
    check(
        ratio <= 0.1 && monotone,
        format!("final/initial loss {ratio:.4}, best-so-far monotone {monotone}"),
    )
}

fn wine_interpolation(result: &ExperimentResult) -> Outcome {
    let kernel = cell_mean(result, "kernel", "precision");
    let linear = cell_mean(result, "linear", "precision");
    check(
        kernel >= 65.0 && linear >= 70.0,
        format!("mean precision kernel {kernel:.2} (>= 65), linear {linear:.2} (>= 70)"),
    )
}

fn wine_neighbor_error(result: &ExperimentResult) -> Outcome {
    let e = cell_mean(result, "kernel", "neighbor_error_x100");
    check(e <= 20.0, format!("kernel mean neighbour error x100 {e:.2} (<= 20)"))
}

fn cancer_interpolation() -> Outcome {
    let mut p = plan("cancer", &[ModelFamily::Kernel], Scenario::Interpolation, 10);
    p.control_points = Some(24);
    let r = experiment(&p)?;
    let precision = cell_mean(&r, "kernel", "precision");
    let silhouette = cell_mean(&r, "kernel", "silhouette");
    check(
        precision >= 85.0 && silhouette >= 45.0,
        format!("kernel mean precision {precision:.2} (>= 85), silhouette {silhouette:.2} (>= 45)"),
    )
}

fn mnist_neighbors() -> Outcome {
    let mut p = plan(
        "mnist",
        &[ModelFamily::Linear, ModelFamily::Kernel],
        Scenario::Neighbors,
        1,
    );
    p.k_original = Some(70);
    p.k_visual = Some(5);
    p.drag_class = Some(4);
    p.drag_delta = [10.0, 10.0];
    p.iterations = Some(500);
    let r = experiment(&p)?;
    let mut ok = true;
    let mut parts = Vec::new();
    for family in ["kernel", "linear"] {
        let gain = cell_mean(&r, family, "precision_gain");
        let sil = cell_mean(&r, family, "silhouette_gain");
        ok &= gain >= 15.0 && sil > 0.0;
        parts.push(format!("{family} precision gain {gain:+.2}, silhouette gain {sil:+.2}"));
    }
    check(ok, parts.join("; "))
}

// metric oracles

fn euclid(y: ArrayView2<f64>, i: usize, j: usize) -> f64 {
    y.row(i).iter().zip(y.row(j).iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

fn oracle_precision(y: &Array2<f64>, labels: &[i64]) -> f64 {
    let mut classes = labels.to_vec();
    classes.sort();
    classes.dedup();
    let cents: Vec<Vec<f64>> = classes
        .iter()
        .map(|&c| {
            let idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
            (0..y.ncols())
                .map(|k| idx.iter().map(|&i| y[[i, k]]).sum::<f64>() / idx.len() as f64)
                .collect()
        })
        .collect();
    let pred: Vec<i64> = (0..labels.len())
        .map(|i| {
            let d: Vec<f64> = cents
                .iter()
                .map(|c| c.iter().enumerate().map(|(k, v)| (y[[i, k]] - v).powi(2)).sum())
                .collect();
            let best = (1..d.len()).fold(0, |b, c| if d[c] < d[b] { c } else { b });
            classes[best]
        })
        .collect();
    let total: f64 = classes
        .iter()
        .map(|&c| {
            let tp = (0..labels.len()).filter(|&i| pred[i] == c && labels[i] == c).count() as f64;
            let pp = pred.iter().filter(|&&p| p == c).count() as f64;
            let support = labels.iter().filter(|&&l| l == c).count() as f64;
            support * if pp > 0.0 { tp / pp } else { 0.0 }
        })
        .sum();
    100.0 * total / labels.len() as f64
}

fn oracle_silhouette(y: &Array2<f64>, labels: &[i64]) -> f64 {
    let n = labels.len();
    let mut s = 0.0;
    for i in 0..n {
        let same: Vec<usize> = (0..n).filter(|&j| j != i && labels[j] == labels[i]).collect();
        if same.is_empty() {
            continue;
        }
        let a = same.iter().map(|&j| euclid(y.view(), i, j)).sum::<f64>() / same.len() as f64;
        let mut others: Vec<i64> = labels.iter().copied().filter(|&l| l != labels[i]).collect();
        others.sort();
        others.dedup();
        let b = others
            .iter()
            .map(|&c| {
                let m: Vec<usize> = (0..n).filter(|&j| labels[j] == c).collect();
                m.iter().map(|&j| euclid(y.view(), i, j)).sum::<f64>() / m.len() as f64
            })
            .fold(f64::INFINITY, f64::min);
        if a.max(b) > 0.0 {
            s += (b - a) / a.max(b);
        }
    }
    100.0 * s / n as f64
}

fn oracle_neighbor_error(y: &Array2<f64>, x: &Array2<f64>, k: usize) -> Vec<f64> {
    let n = y.nrows();
    let raw: Vec<f64> = (0..n)
        .map(|i| {
            let mut order: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            order.sort_by(|&a, &b| {
                euclid(y.view(), i, a)
                    .partial_cmp(&euclid(y.view(), i, b))
                    .unwrap()
                    .then(a.cmp(&b))
            });
            order[..k].iter().map(|&j| euclid(x.view(), i, j)).sum()
        })
        .collect();
    let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    raw.iter().map(|r| if hi > lo { (r - lo) / (hi - lo) } else { 0.0 }).collect()
}

fn metric_oracles() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..25u64 {
        let n = 20 + (seed as usize % 31);
        let y = gaussian(n, 2, seed);
        let x = gaussian(n, 6, seed + 500);
        let mut r = rng(seed + 900);
        let classes = 2 + (seed as i64 % 3);
        let mut labels: Vec<i64> = (0..n).map(|_| r.random_range(0..classes)).collect();
        labels[0] = 0;
        labels[1] = 1;
        let p = nearest_centroid_precision(y.view(), &labels).unwrap();
        worst = worst.max((p - oracle_precision(&y, &labels)).abs());
        let s = silhouette_scaled(y.view(), &labels).unwrap();
        worst = worst.max((s - oracle_silhouette(&y, &labels)).abs());
        let (pp, _) = neighbor_error(y.view(), x.view(), 10).unwrap();
        for (a, b) in pp.iter().zip(oracle_neighbor_error(&y, &x, 10)) {
            worst = worst.max((a - b).abs());
        }
    }
    check(worst <= 1e-10, format!("max deviation from brute force {worst:.1e} over 25 instances"))
}

fn csv_bytes(r: &ExperimentResult) -> Vec<u8> {
    let mut out = Vec::new();
    write_results_csv(r, &mut out).unwrap();
    write_summary_csv(&summarize(r), &mut out).unwrap();
    out
}

fn determinism() -> Outcome {
    let both = [ModelFamily::Linear, ModelFamily::Kernel];
    let mut interp = plan("wine", &both, Scenario::Interpolation, 3);
    interp.seed = 11;
    let mut neigh = plan("wine", &both, Scenario::Neighbors, 1);
    neigh.seed = 11;
    neigh.iterations = Some(100);
    for p in [interp, neigh] {
        let a = csv_bytes(&experiment(&p)?);
        let b = csv_bytes(&experiment(&p)?);
        let serial = csv_bytes(&experiment(&ExperimentPlan {
            parallel: false,
            ..p.clone()
        })?);
        if a != b || a != serial {
            return Err(format!("{} results differ between reruns", p.scenario));
        }
    }
    Ok("results.csv and summary.csv byte-identical across reruns and schedules".into())
}

fn label_free() -> Outcome {
    let ds = Registry::bundled().unwrap().load_dataset("wine").unwrap().unlabeled();
    if ds.labels.is_some() {
        return Err("labels not removed".into());
    }
    let x = fit_pca(ds.features.view(), 0.9)
        .and_then(|p| p.transform(ds.features.view()))
        .map_err(|e| e.to_string())?;
    let init = pca_2d(x.view()).map_err(|e| e.to_string())?;
    let mut drag = |l: &Layout2D64, _: &[usize]| -> simembed::Result<ManipulationSet64> {
        Ok(ManipulationSet64::new(
            (0..10)
                .map(|i| Move64 {
                    index: i,
                    position: [l.coords[[i, 0]] + 1.0, l.coords[[i, 1]] + 1.0],
                })
                .collect(),
        ))
    };
    let config = ScenarioConfig::for_family(ModelFamily::Kernel).with_seed(3);
    let out = run_neighbor_learning(x.view(), &init, &mut drag, &NeighborSpec::default(), ModelFamily::Kernel, &config)
        .map_err(|e| e.to_string())?;
    let report = evaluate(out.layout.coords.view(), None, x.view(), 10).map_err(|e| e.to_string())?;
    check(
        report.nearest_centroid_precision.is_none() && report.silhouette_scaled.is_none() && out.layout.len() == ds.len(),
        format!(
            "unlabeled Wine neighbour learning ran, neighbour error {:.3}, label metrics omitted",
            report.neighbor_error_mean
        ),
    )
}

struct Criterion {
    name: &'static str,
    limit: Option<Duration>,
}

fn report(c: &Criterion, outcome: Outcome, elapsed: Duration) -> bool {
    let slow = c.limit.is_some_and(|l| elapsed > l);
    let (ok, detail) = match outcome {
        Ok(d) if slow => (false, format!("{d}; over time limit {:?}", c.limit.unwrap())),
        Ok(d) => (true, d),
        Err(d) => (false, d),
    };
    println!(
        "{} {:<28} {:>8.2}s  {}",
        if ok { "PASS" } else { "FAIL" },
        c.name,
        elapsed.as_secs_f64(),
        detail
    );
    ok
}

fn timed<F: FnOnce() -> Outcome>(c: Criterion, f: F) -> bool {
    let start = Instant::now();
    let outcome = f();
    report(&c, outcome, start.elapsed())
}

fn main() {
    let mins = |m: u64| Some(Duration::from_secs(60 * m));
    let mut all = Vec::new();

    all.push(timed(
        Criterion {
            name: "gradient correctness",
            limit: Some(Duration::from_secs(10)),
        },
        gradient_correctness,
    ));
    all.push(timed(
        Criterion {
            name: "clone fidelity",
            limit: Some(Duration::from_secs(5)),
        },
        clone_fidelity,
    ));

    let start = Instant::now();
    let mut wine = plan("wine", &[ModelFamily::Linear, ModelFamily::Kernel], Scenario::Interpolation, 10);
    wine.control_points = Some(14);
    let wine = experiment(&wine);
    let elapsed = start.elapsed();
    let c = Criterion {
        name: "wine interpolation",
        limit: mins(2),
    };
    all.push(report(&c, wine.as_ref().map_err(Clone::clone).and_then(wine_interpolation), elapsed));
    let c = Criterion {
        name: "wine neighbour error",
        limit: None,
    };
    all.push(report(&c, wine.as_ref().map_err(Clone::clone).and_then(wine_neighbor_error), elapsed));

    all.push(timed(
        Criterion {
            name: "cancer interpolation",
            limit: mins(5),
        },
        cancer_interpolation,
    ));
    all.push(timed(
        Criterion {
            name: "mnist neighbour learning",
            limit: mins(5),
        },
        mnist_neighbors,
    ));
    all.push(timed(
        Criterion {
            name: "metric oracles",
            limit: None,
        },
        metric_oracles,
    ));
    all.push(timed(
        Criterion {
            name: "determinism",
            limit: None,
        },
        determinism,
    ));
    all.push(timed(
        Criterion {
            name: "label-free scenarios",
            limit: None,
        },
        label_free,
    ));

    let passed = all.iter().filter(|&&ok| ok).count();
    println!("{passed}/{} acceptance criteria passed", all.len());
    if passed != all.len() {
        std::process::exit(1);
    }
}
