//! Acceptance suite: one test per shipping criterion, each printing a
//! single pass line (visible with `--nocapture`) and enforcing its stated
//! tolerance and time budget.

use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sdkn::constructions::{
    build_addition_module, build_product_module, build_univariate_monomial, compile_polynomial,
    decompose_symmetric, CenterTriple, PolynomialSpec, CENTER_MARGIN,
};
use sdkn::kernels::{
    flat_limit_interpolant, single_dim_gram, taylor_admissibility, Kernel1D, KernelFamily,
};
use sdkn::network::{
    realize_linear_from_centers, weights_from_center_coefficients, ActivationLayer, Layer,
    LinearLayer, SdknModel, REALIZATION_TOLERANCE,
};
use sdkn::training::{
    mse_loss, select_centers, train, CenterRule, Dataset, EpochRecord, Optimizer, TrainConfig,
};
use sdkn::Error;

fn gaussian(eps: f64) -> Kernel1D {
    Kernel1D::new(KernelFamily::Gaussian, eps).unwrap()
}

/// Smallest relative separation between propagated center coordinates at any
/// activation input of the model.
fn min_center_margin(model: &SdknModel) -> f64 {
    let (_, trace) = model.forward(model.centers()).unwrap();
    let mut min_margin = f64::INFINITY;
    for (l, layer) in model.layers().iter().enumerate() {
        if !matches!(layer, Layer::Activation(_)) {
            continue;
        }
        let stage = trace.batch_at(l);
        for j in 0..stage.ncols() {
            for a in 0..stage.nrows() {
                for b in (a + 1)..stage.nrows() {
                    let (x, y) = (stage[(a, j)], stage[(b, j)]);
                    let margin = (x - y).abs() / 1.0_f64.max(x.abs()).max(y.abs());
                    min_margin = min_margin.min(margin);
                }
            }
        }
    }
    min_margin
}

/// Largest deviation of `model` (single output) from `reference` over an
/// `n`-per-axis grid on the unit box.
fn sup_error_on_grid(
    model: &SdknModel,
    reference: impl Fn(&[f64]) -> f64,
    n: usize,
) -> f64 {
    let d = model.input_dim();
    let total = n.pow(d as u32);
    let mut batch = DMatrix::zeros(total, d);
    for i in 0..total {
        let mut idx = i;
        for j in 0..d {
            batch[(i, j)] = (idx % n) as f64 / (n - 1) as f64;
            idx /= n;
        }
    }
    let (out, _) = model.forward(&batch).unwrap();
    (0..total)
        .map(|i| {
            let x: Vec<f64> = (0..d).map(|j| batch[(i, j)]).collect();
            (out[(i, 0)] - reference(&x)).abs()
        })
        .fold(0.0, f64::max)
}

#[test]
fn criterion_1_coordinate_blocked_gram_eigenvalues() {
    let started = Instant::now();

    let points = DMatrix::from_row_slice(2, 2, &[1.0, -0.2, 1.0, -0.9]);
    let kernels = vec![Kernel1D::new(KernelFamily::Wendland0, 1.0).unwrap(); 2];
    let gram = single_dim_gram(&kernels, &points, &points).unwrap();

    let expected = DMatrix::from_row_slice(
        4,
        4,
        &[
            1.0, 1.0, 0.0, 0.0, //
            1.0, 1.0, 0.0, 0.0, //
            0.0, 0.0, 1.0, 0.3, //
            0.0, 0.0, 0.3, 1.0,
        ],
    );
    assert_eq!(gram.shape(), (4, 4));
    for i in 0..4 {
        for j in 0..4 {
            assert!(
                (gram[(i, j)] - expected[(i, j)]).abs() < 1e-15,
                "entry ({i},{j}) = {}",
                gram[(i, j)]
            );
        }
    }

    let mut eigenvalues: Vec<f64> = gram.symmetric_eigen().eigenvalues.iter().cloned().collect();
    eigenvalues.sort_by(f64::total_cmp);
    let expected_eigenvalues = [0.0, 0.7, 1.3, 2.0];
    for (have, want) in eigenvalues.iter().zip(&expected_eigenvalues) {
        assert!(
            (have - want).abs() < 1e-12,
            "eigenvalues {eigenvalues:?} vs {expected_eigenvalues:?}"
        );
    }

    assert!(started.elapsed() < Duration::from_secs(1));
    println!("criterion 1: PASS - blocked Gram eigenvalues {{0, 0.7, 1.3, 2}} within 1e-12");
}

#[test]
fn criterion_2_small_shape_interpolant_converges() {
    let started = Instant::now();

    let nodes = [0.0, 0.5, 1.0];
    let values: Vec<f64> = nodes.iter().map(|x| x * x).collect();
    let mut sups = Vec::new();
    for eps in [1.0, 1e-1, 1e-2, 1e-3] {
        let interp = flat_limit_interpolant(gaussian(1.0), &nodes, &values, eps).unwrap();
        let sup = (0..1000)
            .map(|i| {
                let x = i as f64 / 999.0;
                (interp.eval(x) - x * x).abs()
            })
            .fold(0.0, f64::max);
        sups.push(sup);
    }
    assert!(sups[3] < 1e-3, "sup at the smallest shape: {:e}", sups[3]);
    for pair in sups.windows(2) {
        assert!(pair[1] < pair[0], "sups not strictly decreasing: {sups:?}");
    }

    assert!(started.elapsed() < Duration::from_secs(1));
    println!(
        "criterion 2: PASS - interpolant error {:.2e} at shape 1e-3, strictly decreasing",
        sups[3]
    );
}

#[test]
fn criterion_3_admissibility_flags() {
    let t = taylor_admissibility(gaussian(1.0)).unwrap();
    assert!(t.admissible_n2 && t.admissible_n3);
    let disc = 6.0 * t.a0 * t.a2 - t.a1 * t.a1;
    assert!((disc - 2.0).abs() < 1e-12, "discriminant {disc}");

    for family in [KernelFamily::Matern0, KernelFamily::Wendland0] {
        let t = taylor_admissibility(Kernel1D::new(family, 1.0).unwrap()).unwrap();
        assert!(
            !t.admissible_n2 && !t.admissible_n3,
            "{family:?} should be inadmissible"
        );
    }
    println!("criterion 3: PASS - admissibility flags match the expansion facts");
}

#[test]
fn criterion_4_gradients_match_finite_differences() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);

    for trial in 0..20 {
        let depth = rng.gen_range(1..=3);
        let hidden: Vec<usize> = (0..depth).map(|_| rng.gen_range(1..=5)).collect();
        let input_dim = rng.gen_range(1..=3);
        let output_dim = rng.gen_range(1..=3);
        let m = rng.gen_range(1..=4);
        let eps = rng.gen_range(0.5..2.0);

        let centers = DMatrix::from_fn(m, input_dim, |_, _| rng.gen_range(-1.0..1.0));
        let model = SdknModel::random(
            input_dim,
            &hidden,
            output_dim,
            centers,
            gaussian(eps),
            1000 + trial,
        )
        .unwrap();
        let batch = DMatrix::from_fn(3, input_dim, |_, _| rng.gen_range(-1.0..1.0));

        let (out, trace) = model.forward(&batch).unwrap();
        let grads = model.backward(&trace, &out).unwrap();

        let objective = |m: &SdknModel| {
            let (o, _) = m.forward(&batch).unwrap();
            0.5 * o.norm_squared()
        };
        let h = 1e-5;
        for l in 0..model.layers().len() {
            let (rows, cols) = grads.layers[l].shape();
            for r in 0..rows {
                for c in 0..cols {
                    let nudge = |delta: f64| {
                        let mut layers: Vec<Layer> = model.layers().to_vec();
                        layers[l] = match &layers[l] {
                            Layer::Linear(lin) => {
                                let mut w = lin.weights.clone();
                                w[(r, c)] += delta;
                                Layer::Linear(LinearLayer::new(w).unwrap())
                            }
                            Layer::Activation(act) => {
                                let mut coeff = act.coefficients.clone();
                                coeff[(r, c)] += delta;
                                Layer::Activation(
                                    ActivationLayer::new(coeff, act.kernels.clone()).unwrap(),
                                )
                            }
                        };
                        SdknModel::new(layers, model.centers().clone()).unwrap()
                    };
                    let fd = (objective(&nudge(h)) - objective(&nudge(-h))) / (2.0 * h);
                    let an = grads.layers[l][(r, c)];
                    assert!(
                        (fd - an).abs() <= 1e-5 * an.abs() + 1e-7,
                        "trial {trial} layer {l} ({r},{c}): fd {fd:.10} vs {an:.10}"
                    );
                }
            }
        }
    }

    assert!(started.elapsed() < Duration::from_secs(30));
    println!("criterion 4: PASS - 20 random networks, all gradients within 1e-5 rel / 1e-7 abs");
}

#[test]
fn criterion_5_and_6_constructed_modules_meet_error_and_margin_bounds() {
    let started = Instant::now();
    let sigma = 1e-3;
    let mut margins: Vec<(String, f64)> = Vec::new();

    // Product of two inputs on the unit square.
    let centers2 = CenterTriple::default_for_dim(2).unwrap();
    let product = build_product_module(&centers2, sigma, None).unwrap();
    assert!(!product.collinear_fallback);
    let product_error = sup_error_on_grid(&product.model, |x| x[0] * x[1], 50);
    assert!(product_error < 1e-4, "product error {product_error:e}");
    margins.push(("product".into(), min_center_margin(&product.model)));

    // Eleventh power of one input.
    let centers1 = CenterTriple::default_for_dim(1).unwrap();
    let power11 = build_univariate_monomial(11, &centers1, sigma).unwrap();
    assert_eq!(power11.depth(), 4, "x^11 should cost four levels");
    let power_error = sup_error_on_grid(&power11, |x| x[0].powi(11), 100);
    assert!(power_error < 1e-4, "x^11 error {power_error:e}");
    margins.push(("x^11".into(), min_center_margin(&power11)));

    // Addition modules stay within the level schedule over random
    // multi-indices.
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    for trial in 0..12 {
        let d = rng.gen_range(1..=3);
        let mut exponents: Vec<u32> = (0..d).map(|_| rng.gen_range(0..=8)).collect();
        if exponents.iter().all(|&n| n == 0) {
            exponents[rng.gen_range(0..d)] = rng.gen_range(1..=8);
        }
        let centers = CenterTriple::default_for_dim(d).unwrap();
        let module = build_addition_module(&exponents, 1.0, &centers, sigma, None).unwrap();
        let max_exponent = *exponents.iter().max().unwrap();
        let budget = d * ((max_exponent + 1) as f64).log2().ceil() as usize;
        assert!(
            module.model.depth() <= budget,
            "trial {trial} {exponents:?}: depth {} over budget {budget}",
            module.model.depth()
        );
        margins.push((format!("addition {exponents:?}"), min_center_margin(&module.model)));
    }

    // Polynomial compilation: x^2 and x*y + x^2, with error shrinking as the
    // scale halves.
    let square = PolynomialSpec::parse("1 2\n").unwrap();
    let mixed = PolynomialSpec::parse("1 1 1\n1 2 0\n").unwrap();
    let mut last: Option<f64> = None;
    for s in [sigma, sigma / 2.0, sigma / 4.0] {
        let compiled = compile_polynomial(&square, &centers1, s).unwrap();
        let err = sup_error_on_grid(&compiled.model, |x| x[0] * x[0], 100);
        assert!(err < 1e-3, "x^2 error {err:e} at scale {s:e}");
        if let Some(prev) = last {
            assert!(err < prev, "x^2 error did not shrink: {err:e} vs {prev:e}");
        }
        last = Some(err);
        margins.push((format!("compile x^2 scale {s:e}"), min_center_margin(&compiled.model)));
    }
    let mut last: Option<f64> = None;
    for s in [sigma, sigma / 2.0, sigma / 4.0] {
        let compiled = compile_polynomial(&mixed, &centers2, s).unwrap();
        let err = sup_error_on_grid(&compiled.model, |x| x[0] * x[1] + x[0] * x[0], 50);
        assert!(err < 1e-2, "x*y + x^2 error {err:e} at scale {s:e}");
        if let Some(prev) = last {
            assert!(err < prev, "mixed error did not shrink: {err:e} vs {prev:e}");
        }
        last = Some(err);
        margins.push((format!("compile mixed scale {s:e}"), min_center_margin(&compiled.model)));
    }

    assert!(started.elapsed() < Duration::from_secs(60));
    println!(
        "criterion 5: PASS - product {product_error:.2e}, x^11 depth 4 at {power_error:.2e}, \
         addition within schedule, compiled errors under bounds and shrinking"
    );

    // Criterion 6: every module above preserved pairwise-distinct propagated
    // centers with the guaranteed relative margin.
    for (name, margin) in &margins {
        assert!(
            *margin >= CENTER_MARGIN,
            "{name}: margin {margin:e} below {CENTER_MARGIN:e}"
        );
    }
    println!(
        "criterion 6: PASS - all {} modules keep center margins >= 1e-8 (min {:.2e})",
        margins.len(),
        margins.iter().map(|(_, m)| *m).fold(f64::INFINITY, f64::min)
    );
}

#[test]
fn criterion_7_symmetric_decomposition_identities() {
    let started = Instant::now();

    let h = |x: f64| (3.0 * x).sin();
    let xs: Vec<f64> = (0..1000).map(|i| i as f64 * 1e-3).collect();
    let (h1, h2) = decompose_symmetric(h, 0.3, 0.5, &xs).unwrap();

    for (i, &x) in xs.iter().enumerate() {
        assert!(
            (h1[i] + h2[i] - h(x)).abs() < 1e-12,
            "sum identity fails at x = {x}"
        );
    }
    // h1 is symmetric about 0.3 (pairs x and 0.6 - x), h2 about 0.5
    // (pairs x and 1.0 - x), at every reflected pair inside the grid.
    for i in 0..=600 {
        assert!(
            (h1[i] - h1[600 - i]).abs() < 1e-12,
            "h1 symmetry fails at index {i}"
        );
    }
    for i in 1..1000 {
        assert!(
            (h2[i] - h2[1000 - i]).abs() < 1e-12,
            "h2 symmetry fails at index {i}"
        );
    }

    assert!(started.elapsed() < Duration::from_secs(1));
    println!("criterion 7: PASS - decomposition sums and both symmetries within 1e-12");
}

#[test]
fn criterion_8_training_sanity() {
    let started = Instant::now();

    // A single linear layer recovers an exact linear map in 500 full-batch
    // steps of plain gradient descent.
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let w_true = DMatrix::from_fn(2, 3, |_, _| rng.gen_range(-1.0..1.0));
    let inputs = DMatrix::from_fn(40, 3, |_, _| rng.gen_range(-1.0..1.0));
    let targets = &inputs * w_true.transpose();
    let data = Dataset::new(inputs, targets).unwrap();
    let model = SdknModel::new(
        vec![Layer::Linear(
            LinearLayer::new(DMatrix::zeros(2, 3)).unwrap(),
        )],
        data.inputs.rows(0, 3).into_owned(),
    )
    .unwrap();
    let config = TrainConfig {
        optimizer: Optimizer::Sgd,
        learning_rate: 0.25,
        batch_size: usize::MAX,
        epochs: 500,
        num_centers: 3,
        ..TrainConfig::default()
    };
    let (_, records) = train(model, &data, &config).unwrap();
    let linear_mse = records.last().unwrap().loss;
    assert!(linear_mse < 1e-8, "linear recovery stalled at {linear_mse:e}");

    // A depth-2 network (width 8, 16 centers, Gaussian) fits one period of a
    // sine on 256 points.
    let n = 256;
    let inputs = DMatrix::from_fn(n, 1, |i, _| i as f64 / (n - 1) as f64);
    let targets = inputs.map(|x| (2.0 * std::f64::consts::PI * x).sin());
    let data = Dataset::new(inputs, targets).unwrap();
    let config = TrainConfig {
        optimizer: Optimizer::Adam,
        learning_rate: 2e-3,
        batch_size: n,
        epochs: 2000,
        num_centers: 16,
        center_rule: CenterRule::RandomSeeded,
        seed: 1,
        ..TrainConfig::default()
    };
    let centers = select_centers(&data, &config).unwrap();
    let model = SdknModel::random(1, &[8, 8], 1, centers, gaussian(1.0), 1).unwrap();
    let (trained, records) = train(model, &data, &config).unwrap();
    let sine_mse = records.last().unwrap().loss;
    assert!(sine_mse < 1e-3, "sine fit stalled at {sine_mse:e}");
    let (predictions, _) = trained.forward(&data.inputs).unwrap();
    assert!(mse_loss(&predictions, &data.targets).unwrap() < 1e-3);

    // Identical seeds reproduce the metric history byte for byte.
    let rerun = |seed: u64| {
        let mut cfg = config.clone();
        cfg.seed = seed;
        cfg.epochs = 40;
        let centers = select_centers(&data, &cfg).unwrap();
        let model = SdknModel::random(1, &[8, 8], 1, centers, gaussian(1.0), seed).unwrap();
        let (_, records) = train(model, &data, &cfg).unwrap();
        records
            .iter()
            .map(EpochRecord::canonical_line)
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_eq!(rerun(5), rerun(5), "seeded training must be reproducible");

    assert!(started.elapsed() < Duration::from_secs(60));
    println!(
        "criterion 8: PASS - linear MSE {linear_mse:.2e}, sine MSE {sine_mse:.2e}, \
         histories byte-identical"
    );
}

#[test]
fn criterion_9_linear_realization() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let z = DMatrix::from_fn(4, 3, |_, _| rng.gen_range(-1.0..1.0));
    let c0 = DMatrix::from_fn(2, 4, |_, _| rng.gen_range(-1.0..1.0));
    let a = &c0 * &z;

    let c = realize_linear_from_centers(&a, &z).unwrap();
    let back = weights_from_center_coefficients(&c, &z).unwrap();
    let drift = (&back - &a).norm() / a.norm();
    assert!(drift < 1e-10, "round-trip drift {drift:e}");

    let z_line = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
    let a_orth = DMatrix::from_row_slice(1, 2, &[0.0, 1.0]);
    match realize_linear_from_centers(&a_orth, &z_line) {
        Err(Error::NotRealizable { residual, tolerance }) => {
            assert!((residual - 1.0).abs() < 1e-12, "residual {residual}");
            assert_eq!(tolerance, REALIZATION_TOLERANCE);
        }
        other => panic!("expected an out-of-span rejection, got {other:?}"),
    }
    println!("criterion 9: PASS - realization round-trips to 1e-10 and rejects out-of-span rows");
}
