//! Fragment assembly: algebraic fidelity, depth and width budgets, center
//! preservation, and the decomposition / profile-fitting utilities.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sdkn::constructions::{
    adjust_depth, build_addition_module, build_bivariate_monomial, build_identity_or_squaring,
    build_product_module, build_univariate_monomial, compile_polynomial, decompose_symmetric,
    fit_even_profile, CenterTriple, ModuleBlueprint, ModuleKind, PolynomialSpec, UnitKind,
    CENTER_MARGIN,
};
use sdkn::kernels::KernelFamily;
use sdkn::network::{Layer, SdknModel};
use sdkn::Error;

const SIGMA: f64 = 1e-3;

fn eval_at(model: &SdknModel, x: &[f64]) -> Vec<f64> {
    let batch = DMatrix::from_row_slice(1, x.len(), x);
    let (out, _) = model.forward(&batch).unwrap();
    out.row(0).iter().copied().collect()
}

fn sup_error_1d<F: Fn(f64) -> f64>(model: &SdknModel, reference: F, samples: usize) -> f64 {
    let xs: Vec<f64> = (0..samples)
        .map(|i| i as f64 / (samples - 1) as f64)
        .collect();
    let batch = DMatrix::from_fn(samples, 1, |i, _| xs[i]);
    let (out, _) = model.forward(&batch).unwrap();
    xs.iter()
        .enumerate()
        .map(|(i, &x)| (out[(i, 0)] - reference(x)).abs())
        .fold(0.0, f64::max)
}

/// Sup error of output column `col` against `reference` on an `n x n` grid
/// over the unit square.
fn sup_error_2d<F: Fn(f64, f64) -> f64>(
    model: &SdknModel,
    reference: F,
    n: usize,
    col: usize,
) -> f64 {
    let mut batch = DMatrix::zeros(n * n, 2);
    for i in 0..n {
        for j in 0..n {
            batch[(i * n + j, 0)] = i as f64 / (n - 1) as f64;
            batch[(i * n + j, 1)] = j as f64 / (n - 1) as f64;
        }
    }
    let (out, _) = model.forward(&batch).unwrap();
    (0..n * n)
        .map(|r| (out[(r, col)] - reference(batch[(r, 0)], batch[(r, 1)])).abs())
        .fold(0.0, f64::max)
}

/// Smallest relative separation of propagated center values entering any
/// activation layer of the model.
fn min_activation_margin(model: &SdknModel) -> f64 {
    let (_, trace) = model.forward(model.centers()).unwrap();
    let mut best = f64::INFINITY;
    for (l, layer) in model.layers().iter().enumerate() {
        if matches!(layer, Layer::Activation(_)) {
            let z = trace.centers_at(l);
            for j in 0..z.ncols() {
                for a in 0..z.nrows() {
                    for b in (a + 1)..z.nrows() {
                        let (va, vb) = (z[(a, j)], z[(b, j)]);
                        let rel = (va - vb).abs() / va.abs().max(vb.abs()).max(1.0);
                        best = best.min(rel);
                    }
                }
            }
        }
    }
    best
}

#[test]
fn squaring_error_is_small_and_shrinks_with_sigma() {
    let centers = CenterTriple::default_for_dim(1).unwrap();
    let mut previous = f64::INFINITY;
    for sigma in [1e-3, 5e-4, 2.5e-4] {
        let model = build_identity_or_squaring(UnitKind::Squaring, &centers, sigma).unwrap();
        let sup = sup_error_1d(&model, |x| x * x, 200);
        assert!(
            sup < previous,
            "sup error must shrink with sigma: {sup} !< {previous}"
        );
        previous = sup;
    }
    let model = build_identity_or_squaring(UnitKind::Squaring, &centers, SIGMA).unwrap();
    let sup = sup_error_1d(&model, |x| x * x, 200);
    assert!(sup < 5e-7, "squaring sup error {sup} out of budget");
}

#[test]
fn product_fragment_multiplies_on_the_unit_square() {
    let centers = CenterTriple::default_for_dim(2).unwrap();
    let product = build_product_module(&centers, SIGMA, None).unwrap();
    assert!(!product.collinear_fallback);
    assert_eq!(product.beta, 1.0, "the first polarization candidate works");
    assert_eq!(product.model.depth(), 1);
    let sup = sup_error_2d(&product.model, |x, y| x * y, 30, 0);
    assert!(sup < 5e-6, "product sup error {sup} out of budget");
    assert!(min_activation_margin(&product.model) >= CENTER_MARGIN);
}

#[test]
fn proportional_centers_fall_back_to_scaled_squaring() {
    let centers = CenterTriple::from_rows(&[0.1, 0.2], &[0.25, 0.5], &[0.4, 0.8]).unwrap();
    let product = build_product_module(&centers, SIGMA, None).unwrap();
    assert!(product.collinear_fallback);
    assert_eq!(product.beta, 0.0);
    // On the line y = 2x the fallback c * x^2 equals the true product.
    for t in [0.05, 0.3, 0.45] {
        let got = eval_at(&product.model, &[t, 2.0 * t])[0];
        assert!(
            (got - 2.0 * t * t).abs() < 1e-6,
            "fallback at ({t}, {}): got {got}",
            2.0 * t
        );
    }
}

#[test]
fn univariate_monomials_meet_the_depth_schedule() {
    let centers = CenterTriple::default_for_dim(1).unwrap();
    for (exponent, depth) in [(1u32, 1), (2, 1), (3, 2), (6, 3), (8, 3), (11, 4), (16, 4)] {
        let model = build_univariate_monomial(exponent, &centers, SIGMA).unwrap();
        assert_eq!(
            model.depth(),
            depth,
            "x^{exponent} must take {depth} levels"
        );
    }
    let model = build_univariate_monomial(11, &centers, SIGMA).unwrap();
    let sup = sup_error_1d(&model, |x| x.powi(11), 100);
    assert!(sup < 1e-4, "x^11 sup error {sup} out of budget");
    assert!(min_activation_margin(&model) >= CENTER_MARGIN);
}

#[test]
fn bivariate_monomials_pair_two_pipelines_and_one_multiply() {
    let centers = CenterTriple::default_for_dim(2).unwrap();
    let model = build_bivariate_monomial((3, 2), &centers, SIGMA, None).unwrap();
    assert_eq!(model.depth(), 3, "max(ceil(log2 3), ceil(log2 2)) + 1");
    let sup = sup_error_2d(&model, |x, y| x.powi(3) * y * y, 20, 0);
    assert!(sup < 1e-4, "x^3 y^2 sup error {sup} out of budget");

    let direct = build_bivariate_monomial((1, 1), &centers, SIGMA, None).unwrap();
    assert_eq!(direct.depth(), 1, "x * y needs only the polarization level");
}

#[test]
fn addition_module_accumulates_one_scaled_term() {
    let centers = CenterTriple::default_for_dim(2).unwrap();
    let module = build_addition_module(&[2, 1], 1.5, &centers, SIGMA, None).unwrap();
    assert!(!module.degenerate_constant);
    assert_eq!(module.model.input_dim(), 2);
    assert_eq!(module.model.output_dim(), 3);
    assert_eq!(module.model.depth(), 3, "ceil(log2 3) + ceil(log2 2)");
    assert!(module.model.width() <= 2 + 8, "width budget exceeded");
    let beta = module.beta;
    // Pass-through wires stay the coordinates; the new wire carries the term
    // plus its coordinate carry.
    let sup_x = sup_error_2d(&module.model, |x, _| x, 15, 0);
    let sup_y = sup_error_2d(&module.model, |_, y| y, 15, 1);
    let sup_term = sup_error_2d(&module.model, |x, y| 1.5 * x * x * y + beta * y, 15, 2);
    assert!(sup_x < 1e-5 && sup_y < 1e-5, "pass-through drifted: {sup_x}, {sup_y}");
    assert!(sup_term < 1e-4, "term wire sup error {sup_term} out of budget");
    assert!(min_activation_margin(&module.model) >= CENTER_MARGIN);
}

#[test]
fn all_zero_multi_index_becomes_a_flagged_constant() {
    let centers = CenterTriple::default_for_dim(2).unwrap();
    let module = build_addition_module(&[0, 0], 0.7, &centers, SIGMA, None).unwrap();
    assert!(module.degenerate_constant);
    assert_eq!(module.model.depth(), 1);
    // Exact at the three centers: the pinned unit reproduces the constant.
    for r in 0..3 {
        let x = [centers.points()[(r, 0)], centers.points()[(r, 1)]];
        let out = eval_at(&module.model, &x);
        let want = 0.7 + module.beta * x[1];
        assert!(
            (out[2] - want).abs() < 1e-8,
            "constant wire at center {r}: got {}, want {want}",
            out[2]
        );
    }
}

#[test]
fn random_multi_indices_respect_the_depth_and_width_budgets() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for trial in 0..20 {
        let d = rng.gen_range(1..=3usize);
        let mut exponents = vec![0u32; d];
        loop {
            for e in exponents.iter_mut() {
                *e = rng.gen_range(0..=8);
            }
            if exponents.iter().any(|&e| e > 0) {
                break;
            }
        }
        let centers = CenterTriple::default_for_dim(d).unwrap();
        let module = build_addition_module(&exponents, 1.0, &centers, SIGMA, None).unwrap();
        let max_exp = *exponents.iter().max().unwrap();
        let bound = d * ((max_exp + 1) as f64).log2().ceil() as usize;
        assert!(
            module.model.depth() <= bound,
            "trial {trial}: {exponents:?} took depth {} > {bound}",
            module.model.depth()
        );
        assert!(
            module.model.width() <= d + 8,
            "trial {trial}: {exponents:?} used width {} > {}",
            module.model.width(),
            d + 8
        );
    }
}

#[test]
fn compiled_polynomials_track_their_reference() {
    let square = PolynomialSpec::new(1, vec![(vec![2], 1.0)]).unwrap();
    let centers1 = CenterTriple::default_for_dim(1).unwrap();
    let mut previous = f64::INFINITY;
    for sigma in [1e-3, 5e-4, 2.5e-4] {
        let compiled = compile_polynomial(&square, &centers1, sigma).unwrap();
        let sup = sup_error_1d(&compiled.model, |x| x * x, 200);
        assert!(sup < previous, "x^2 error must shrink: {sup} !< {previous}");
        previous = sup;
    }
    assert!(previous < 1e-3);

    let mixed = PolynomialSpec::new(2, vec![(vec![1, 1], 1.0), (vec![2, 0], 1.0)]).unwrap();
    let centers2 = CenterTriple::default_for_dim(2).unwrap();
    let mut previous = f64::INFINITY;
    for sigma in [1e-3, 5e-4, 2.5e-4] {
        let compiled = compile_polynomial(&mixed, &centers2, sigma).unwrap();
        assert_eq!(compiled.term_betas.len(), 2);
        assert_eq!(compiled.degenerate_terms, 0);
        let sup = sup_error_2d(&compiled.model, |x, y| x * y + x * x, 20, 0);
        assert!(sup < previous, "x y + x^2 error must shrink: {sup} !< {previous}");
        previous = sup;
        assert!(min_activation_margin(&compiled.model) >= CENTER_MARGIN);
    }
    assert!(previous < 1e-2);
}

#[test]
fn empty_spec_compiles_to_the_zero_map() {
    let spec = PolynomialSpec::new(2, Vec::new()).unwrap();
    let centers = CenterTriple::default_for_dim(2).unwrap();
    let compiled = compile_polynomial(&spec, &centers, SIGMA).unwrap();
    assert!(compiled.term_betas.is_empty());
    assert_eq!(eval_at(&compiled.model, &[0.3, 0.8])[0], 0.0);
}

#[test]
fn depth_padding_preserves_values_and_rejects_shrinking() {
    let centers = CenterTriple::default_for_dim(1).unwrap();
    let squaring = build_identity_or_squaring(UnitKind::Squaring, &centers, SIGMA).unwrap();
    let padded = adjust_depth(&squaring, 4, SIGMA).unwrap();
    assert_eq!(padded.depth(), 4);
    let sup = sup_error_1d(&padded, |x| x * x, 200);
    assert!(sup < 1e-3, "padded squaring sup error {sup}");
    assert!(matches!(
        adjust_depth(&padded, 2, SIGMA),
        Err(Error::DepthTooSmall {
            current: 4,
            target: 2
        })
    ));
}

#[test]
fn blueprints_dispatch_to_every_species() {
    let one = CenterTriple::default_for_dim(1).unwrap();
    let two = CenterTriple::default_for_dim(2).unwrap();
    let cases: Vec<(ModuleKind, &CenterTriple)> = vec![
        (ModuleKind::Identity, &one),
        (ModuleKind::Squaring, &one),
        (ModuleKind::Product { beta: None }, &two),
        (ModuleKind::UnivariateMonomial { exponent: 5 }, &one),
        (
            ModuleKind::BivariateMonomial {
                exponents: (2, 2),
                beta: None,
            },
            &two,
        ),
        (
            ModuleKind::Addition {
                exponents: vec![1, 2],
                scale: -0.5,
                beta: None,
            },
            &two,
        ),
    ];
    for (kind, centers) in cases {
        let blueprint = ModuleBlueprint::new(kind.clone(), 1e-2);
        let built = blueprint.build(centers).unwrap();
        assert!(!built.collinear_fallback);
        assert!(!built.degenerate_constant);
        match kind {
            ModuleKind::Product { .. } | ModuleKind::Addition { .. } => {
                assert!(built.beta.is_some(), "{kind:?} must report its coefficient")
            }
            _ => assert!(built.beta.is_none()),
        }
    }
}

#[test]
fn symmetric_decomposition_is_exact_and_symmetric() {
    let h = |x: f64| (3.0 * x).sin();
    let xs: Vec<f64> = (0..=1000).map(|i| i as f64 * 1e-3).collect();
    let (h1, h2) = decompose_symmetric(h, 0.3, 0.5, &xs).unwrap();
    let mut worst_sum = 0.0f64;
    for (i, &x) in xs.iter().enumerate() {
        worst_sum = worst_sum.max((h1[i] + h2[i] - h(x)).abs());
    }
    assert!(worst_sum < 1e-12, "h1 + h2 deviates from h by {worst_sum}");

    // h1 is even about 0.3 (indices i and 600 - i), h2 about 0.5 (i and
    // 1000 - i), wherever both reflections land in the sample range.
    let mut worst_h1 = 0.0f64;
    let mut worst_h2 = 0.0f64;
    for i in 0..=1000usize {
        if i <= 600 {
            worst_h1 = worst_h1.max((h1[i] - h1[600 - i]).abs());
        }
        worst_h2 = worst_h2.max((h2[i] - h2[1000 - i]).abs());
    }
    assert!(worst_h1 < 1e-12, "h1 asymmetric about 0.3 by {worst_h1}");
    assert!(worst_h2 < 1e-12, "h2 asymmetric about 0.5 by {worst_h2}");

    // Inside [z1, z2] the split is (h, 0).
    assert_eq!(h2[400], 0.0);
    assert_eq!(h1[400], h(0.4));
}

#[test]
fn nested_profile_dictionaries_fit_monotonically() {
    let target = |x: f64| 1.0 / (1.0 + x * x);
    let mut previous = f64::INFINITY;
    for n in [4usize, 8, 16] {
        let widths: Vec<f64> = (1..=n).map(|k| k as f64 * 4.0 / n as f64).collect();
        let fit = fit_even_profile(target, 4.0, &widths, KernelFamily::Gaussian).unwrap();
        assert_eq!(fit.coefficients.len(), n);
        assert!(
            fit.sup_error <= previous + 1e-12,
            "dictionary of {n} fits worse: {} > {previous}",
            fit.sup_error
        );
        previous = fit.sup_error;
    }
    assert!(previous < 1e-2, "largest dictionary should fit well");

    let duplicated = fit_even_profile(target, 4.0, &[1.0, 1.0], KernelFamily::Gaussian);
    assert!(matches!(duplicated, Err(Error::InvalidParameter(_))));
    let linear = fit_even_profile(target, 4.0, &[1.0, 2.0], KernelFamily::Linear);
    assert!(matches!(linear, Err(Error::NonRadialKernel(_))));
}
