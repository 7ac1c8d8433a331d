//! The five subcommands: each resolves its configuration (flags over file
//! over defaults), writes the resolved-config echo, runs the requested
//! computation, and leaves its artifacts in the output directory.

use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sdkn::constructions::{compile_polynomial, CenterTriple, PolynomialSpec};
use sdkn::kernels::{conditioning_diagnostic, flat_limit_interpolant, Kernel1D, KernelFamily};
use sdkn::network::SdknModel;
use sdkn::training::{
    load_dataset, mse_loss, select_centers, train, CenterRule, Loss, Optimizer, TrainConfig,
};

use crate::config::{CliError, Resolver};
use crate::{
    CompilePolyArgs, DiagnoseConditioningArgs, EvalArgs, FlatLimitStudyArgs, TrainArgs,
};

fn parse_family(name: &str) -> Result<KernelFamily, String> {
    KernelFamily::from_name(name.trim()).ok_or_else(|| {
        format!("unknown kernel family {name:?} (gaussian, matern0, matern-quadratic, wendland0, linear)")
    })
}

fn parse_optimizer(name: &str) -> Result<Optimizer, String> {
    match name.trim() {
        "sgd" => Ok(Optimizer::Sgd),
        "adam" => Ok(Optimizer::Adam),
        other => Err(format!("unknown optimizer {other:?} (sgd, adam)")),
    }
}

fn parse_center_rule(name: &str) -> Result<CenterRule, String> {
    match name.trim() {
        "first" => Ok(CenterRule::FirstM),
        "random" => Ok(CenterRule::RandomSeeded),
        other => Err(format!("unknown center rule {other:?} (first, random)")),
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn run_train(args: TrainArgs) -> Result<(), CliError> {
    let mut r = Resolver::new("train", args.config.as_deref())?;
    let data_path = r.required_path("data", args.data)?;
    let out_dir = r.path_or("out-dir", args.out_dir, ".")?;
    let input_dim: usize = r.required("input-dim", args.input_dim)?;
    let output_dim: usize = r.required("output-dim", args.output_dim)?;
    let widths: Vec<usize> = r.list("widths", args.widths, &[8])?;
    let family = r.keyword("family", args.family, "gaussian", parse_family)?;
    let epsilon: f64 = r.value("epsilon", args.epsilon, 1.0)?;
    let optimizer = r.keyword("optimizer", args.optimizer, "adam", parse_optimizer)?;
    let learning_rate: f64 = r.value("learning-rate", args.learning_rate, 1e-3)?;
    let beta1: f64 = r.value("beta1", args.beta1, 0.9)?;
    let beta2: f64 = r.value("beta2", args.beta2, 0.999)?;
    let adam_epsilon: f64 = r.value("adam-epsilon", args.adam_epsilon, 1e-8)?;
    let batch_size: usize = r.value("batch-size", args.batch_size, 32)?;
    let epochs: usize = r.value("epochs", args.epochs, 100)?;
    let num_centers: usize = r.value("num-centers", args.num_centers, 10)?;
    let center_rule = r.keyword("center-rule", args.center_rule, "first", parse_center_rule)?;
    let seed: u64 = r.value("seed", args.seed, 0)?;
    let reg_weights: Vec<f64> = r.list("reg-weights", args.reg_weights, &[])?;
    let echo = r.finish()?;
    echo.write(&out_dir)?;

    let config = TrainConfig {
        loss: Loss::Mse,
        reg_weights,
        optimizer,
        learning_rate,
        beta1,
        beta2,
        adam_epsilon,
        batch_size,
        epochs,
        num_centers,
        center_rule,
        seed,
    };

    let data = load_dataset(&data_path, input_dim, output_dim)?;
    let centers = select_centers(&data, &config)?;
    let kernel = Kernel1D::new(family, epsilon)?;
    let model = SdknModel::random(input_dim, &widths, output_dim, centers, kernel, seed)?;
    let (trained, records) = train(model, &data, &config)?;

    let model_path = out_dir.join("model.txt");
    trained.save(&model_path).map_err(CliError::from)?;

    // The metrics artifact holds only the deterministic fields so identical
    // seeded runs are byte-identical; wall-clock timings go to stdout.
    let mut metrics = String::new();
    for record in &records {
        metrics.push_str(&record.canonical_line());
        metrics.push('\n');
    }
    write_text(&out_dir.join("metrics.jsonl"), &metrics)?;

    if let Some(last) = records.last() {
        let total_seconds: f64 = records.iter().map(|rec| rec.seconds).sum();
        println!(
            "trained {} epochs in {:.3}s: loss {:.6e}, objective {:.6e}",
            records.len(),
            total_seconds,
            last.loss,
            last.objective
        );
    }
    println!("wrote {}", model_path.display());
    Ok(())
}

pub fn run_eval(args: EvalArgs) -> Result<(), CliError> {
    let mut r = Resolver::new("eval", args.config.as_deref())?;
    let model_path = r.required_path("model", args.model)?;
    let data_path = r.required_path("data", args.data)?;
    let out_dir = r.path_or("out-dir", args.out_dir, ".")?;
    let echo = r.finish()?;
    echo.write(&out_dir)?;

    let model = SdknModel::load(&model_path)?;
    let data = load_dataset(&data_path, model.input_dim(), model.output_dim())?;
    let (predictions, _) = model.forward(&data.inputs)?;
    let mse = mse_loss(&predictions, &data.targets)?;
    println!("mse {:.16e}", mse);
    Ok(())
}

pub fn run_compile_poly(args: CompilePolyArgs) -> Result<(), CliError> {
    let mut r = Resolver::new("compile-poly", args.config.as_deref())?;
    let spec_path = r.required_path("spec", args.spec)?;
    let out_dir = r.path_or("out-dir", args.out_dir, ".")?;
    let sigma: f64 = r.value("sigma", args.sigma, 1e-3)?;
    let grid: usize = r.value("grid", args.grid, 200)?;
    let seed: u64 = r.value("seed", args.seed, 0)?;
    let domain: Vec<f64> = r.list("domain", args.domain, &[0.0, 1.0])?;
    let echo = r.finish()?;
    echo.write(&out_dir)?;

    if domain.len() != 2 {
        return Err(CliError::Usage(format!(
            "key 'domain': expected lo,hi, got {} values",
            domain.len()
        )));
    }
    if grid == 0 {
        return Err(CliError::Usage("key 'grid': must be positive".into()));
    }

    let text = std::fs::read_to_string(&spec_path)
        .map_err(|e| CliError::Data(format!("spec file {}: {e}", spec_path.display())))?;
    let spec = PolynomialSpec::parse(&text)?;
    let d = spec.dimension();
    let spec = spec.with_domain(vec![(domain[0], domain[1]); d])?;

    let centers = CenterTriple::default_for_dim(d)?;
    let compiled = compile_polynomial(&spec, &centers, sigma)?;

    // Error report over seeded uniform sample points in the domain box.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = DMatrix::from_fn(grid, d, |_, j| {
        let (lo, hi) = spec.domain()[j];
        rng.gen_range(lo..hi)
    });
    let (outputs, _) = compiled.model.forward(&points)?;
    let mut max_error = 0.0_f64;
    let mut sum_error = 0.0_f64;
    for i in 0..grid {
        let x: Vec<f64> = (0..d).map(|j| points[(i, j)]).collect();
        let err = (outputs[(i, 0)] - spec.eval(&x)?).abs();
        max_error = max_error.max(err);
        sum_error += err;
    }

    let model_path = out_dir.join("compiled-model.txt");
    compiled.model.save(&model_path).map_err(CliError::from)?;

    let betas = compiled
        .term_betas
        .iter()
        .map(|b| format!("{b}"))
        .collect::<Vec<_>>()
        .join(",");
    let report = format!(
        "terms={}\ndimension={}\nsigma={}\ndepth={}\nwidth={}\ngrid-points={}\nmax-error={:.16e}\nmean-error={:.16e}\nterm-betas={}\ndegenerate-terms={}\n",
        spec.terms().len(),
        d,
        sigma,
        compiled.model.depth(),
        compiled.model.width(),
        grid,
        max_error,
        sum_error / grid as f64,
        betas,
        compiled.degenerate_terms,
    );
    write_text(&out_dir.join("report.txt"), &report)?;

    println!(
        "compiled {} terms to depth {}, width {}: max error {:.6e} on {} points",
        spec.terms().len(),
        compiled.model.depth(),
        compiled.model.width(),
        max_error,
        grid
    );
    println!("wrote {}", model_path.display());
    Ok(())
}

/// The unique polynomial through the study's nodes, by Lagrange basis.
fn lagrange_eval(nodes: &[f64], values: &[f64], x: f64) -> f64 {
    let mut total = 0.0;
    for (i, (zi, vi)) in nodes.iter().zip(values).enumerate() {
        let mut basis = 1.0;
        for (j, zj) in nodes.iter().enumerate() {
            if i != j {
                basis *= (x - zj) / (zi - zj);
            }
        }
        total += vi * basis;
    }
    total
}

pub fn run_flat_limit_study(args: FlatLimitStudyArgs) -> Result<(), CliError> {
    let mut r = Resolver::new("flat-limit-study", args.config.as_deref())?;
    let nodes: Vec<f64> = r.required_list("nodes", args.nodes)?;
    let values: Vec<f64> = r.required_list("values", args.values)?;
    let family = r.keyword("family", args.family, "gaussian", parse_family)?;
    let eps_list: Vec<f64> = r.list("eps-list", args.eps_list, &[1.0, 1e-1, 1e-2, 1e-3])?;
    let grid: usize = r.value("grid", args.grid, 1000)?;
    let out_dir = r.path_or("out-dir", args.out_dir, ".")?;
    let echo = r.finish()?;
    echo.write(&out_dir)?;

    if grid < 2 {
        return Err(CliError::Usage("key 'grid': need at least 2 points".into()));
    }
    if eps_list.is_empty() {
        return Err(CliError::Usage("key 'eps-list': must not be empty".into()));
    }
    let kernel = Kernel1D::new(family, 1.0)?;
    let lo = nodes.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = nodes.iter().cloned().fold(f64::NEG_INFINITY, f64::max);

    let mut study = String::new();
    for &eps in &eps_list {
        let interp = flat_limit_interpolant(kernel, &nodes, &values, eps)?;
        let mut sup = 0.0_f64;
        for i in 0..grid {
            let x = lo + (hi - lo) * i as f64 / (grid - 1) as f64;
            sup = sup.max((interp.eval(x) - lagrange_eval(&nodes, &values, x)).abs());
        }
        let line = format!("{:.16e} {:.16e}", eps, sup);
        println!("{line}");
        study.push_str(&line);
        study.push('\n');
    }
    write_text(&out_dir.join("study.txt"), &study)?;
    Ok(())
}

/// Reads one node per line, ignoring blanks and `#` comments.
fn load_nodes(path: &Path) -> Result<Vec<f64>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("nodes file {}: {e}", path.display())))?;
    let mut nodes = Vec::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line = match raw_line.find('#') {
            Some(pos) => &raw_line[..pos],
            None => raw_line,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let value: f64 = line.parse().map_err(|_| {
            CliError::Data(format!(
                "nodes file {} line {}: cannot parse {line:?}",
                path.display(),
                idx + 1
            ))
        })?;
        if !value.is_finite() {
            return Err(CliError::Data(format!(
                "nodes file {} line {}: non-finite value",
                path.display(),
                idx + 1
            )));
        }
        nodes.push(value);
    }
    if nodes.is_empty() {
        return Err(CliError::Data(format!(
            "nodes file {}: no nodes",
            path.display()
        )));
    }
    Ok(nodes)
}

pub fn run_diagnose_conditioning(args: DiagnoseConditioningArgs) -> Result<(), CliError> {
    let mut r = Resolver::new("diagnose-conditioning", args.config.as_deref())?;
    let nodes_path = r.required_path("nodes-file", args.nodes_file)?;
    let family = r.keyword("family", args.family, "gaussian", parse_family)?;
    let eps_list: Vec<f64> = r.list("eps-list", args.eps_list, &[1.0])?;
    let out_dir = r.path_or("out-dir", args.out_dir, ".")?;
    let echo = r.finish()?;
    echo.write(&out_dir)?;

    if eps_list.is_empty() {
        return Err(CliError::Usage("key 'eps-list': must not be empty".into()));
    }
    let nodes = load_nodes(&nodes_path)?;
    for &eps in &eps_list {
        let kernel = Kernel1D::new(family, eps)?;
        let kappa = conditioning_diagnostic(kernel, &nodes)?;
        println!("eps={eps} kappa={kappa:e}");
    }
    Ok(())
}
