//! Layers, models, forward/backward passes, and model serialization.
//!
//! A model is an odd-length alternating stack: linear, activation, linear,
//! ..., linear. Linear layers map row-vector batches by `x * W^T`. An
//! activation layer on `d` wires applies, per wire `j`, the one-dimensional
//! kernel expansion `sum_i A[i][j] * k_j(x_j, c_ij)` where the second
//! arguments `c_ij` are the model's center points propagated through all
//! preceding layers. The forward pass therefore advances two streams in
//! lockstep — the data batch and the center batch — and records both in a
//! [`ForwardTrace`] for the backward pass, which differentiates through the
//! center stream as well (centers feed every activation layer downstream of
//! their propagation path).
//!
//! # Evaluation form
//!
//! Activation layers always evaluate in the centered form
//! `phi_j(0) * S_j + sum_i A[i][j] * (k_j(x, c_ij) - phi_j(0))` with
//! `S_j = sum_i A[i][j]`. For trained models (coefficients `O(1)`) this is
//! identical to the naive sum. For models produced by the construction
//! toolkit the coefficients grow like `sigma^-4` while their column sums stay
//! `O(sigma^-2)`; those sums cannot be recovered from the stored coefficients
//! in `f64`, so such layers carry the exact totals from the interpolation
//! solve in [`ActivationLayer::coefficient_totals`] and the centered form
//! preserves them. Training invalidates stored totals whenever it updates
//! coefficients.
//!
//! # Text format
//!
//! [`SdknModel::to_text`] and [`SdknModel::from_text`] use a line-oriented
//! format with all numbers printed as 17-significant-digit scientific
//! notation (lossless for `f64`):
//!
//! ```text
//! sdkn model 1
//! centers <M> <d>
//! <M rows of d numbers>
//! layers <K>
//! linear <out> <in>
//! <out rows of in numbers>
//! activation <M> <d>
//! kernels <family> <epsilon> ... (d pairs)
//! <M rows of d numbers>
//! totals <d numbers>          (optional, only when stored)
//! end
//! ```

use crate::kernels::{Kernel1D, KernelFamily};
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use std::fmt::Write as _;
use std::path::Path;

/// A dense linear layer mapping row vectors by `x * weights^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearLayer {
    /// Weight matrix, `out_dim x in_dim`.
    pub weights: DMatrix<f64>,
}

impl LinearLayer {
    /// Creates a linear layer from its weight matrix (`out_dim x in_dim`).
    ///
    /// # Errors
    ///
    /// Returns [`Error::EmptyInput`] for a degenerate shape and
    /// [`Error::NonFinite`] for NaN or infinite weights.
    pub fn new(weights: DMatrix<f64>) -> Result<Self> {
        if weights.nrows() == 0 || weights.ncols() == 0 {
            return Err(Error::EmptyInput);
        }
        if !weights.iter().all(|w| w.is_finite()) {
            return Err(Error::NonFinite("linear layer weights"));
        }
        Ok(LinearLayer { weights })
    }

    /// Input dimension.
    pub fn in_dim(&self) -> usize {
        self.weights.ncols()
    }

    /// Output dimension.
    pub fn out_dim(&self) -> usize {
        self.weights.nrows()
    }
}

/// A kernel activation layer on `d` wires with `M` centers per wire.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationLayer {
    /// Expansion coefficients, `M x d`; column `j` belongs to wire `j`.
    pub coefficients: DMatrix<f64>,
    /// One kernel per wire (`d` entries).
    pub kernels: Vec<Kernel1D>,
    /// Exact column sums of `coefficients`, stored when the coefficients come
    /// from a near-flat-limit interpolation solve. Those coefficients are
    /// `O(sigma^-4)` with `O(sigma^-2)` sums; re-summing the stored values in
    /// `f64` would destroy the totals, so the solver's exact sums ride along.
    /// `None` means the totals are recomputed by plain summation, which is
    /// accurate for ordinary (e.g. trained) coefficient magnitudes.
    pub coefficient_totals: Option<DVector<f64>>,
}

impl ActivationLayer {
    /// Creates an activation layer without stored totals.
    ///
    /// # Errors
    ///
    /// Returns [`Error::EmptyInput`] for degenerate shapes,
    /// [`Error::DimensionMismatch`] if the kernel count differs from the
    /// coefficient columns, and [`Error::NonFinite`] for bad coefficients.
    pub fn new(coefficients: DMatrix<f64>, kernels: Vec<Kernel1D>) -> Result<Self> {
        if coefficients.nrows() == 0 || coefficients.ncols() == 0 {
            return Err(Error::EmptyInput);
        }
        if kernels.len() != coefficients.ncols() {
            return Err(Error::DimensionMismatch {
                expected: coefficients.ncols(),
                found: kernels.len(),
            });
        }
        if !coefficients.iter().all(|c| c.is_finite()) {
            return Err(Error::NonFinite("activation layer coefficients"));
        }
        Ok(ActivationLayer {
            coefficients,
            kernels,
            coefficient_totals: None,
        })
    }

    /// Creates an activation layer carrying exact coefficient column sums.
    ///
    /// # Errors
    ///
    /// As [`ActivationLayer::new`], plus [`Error::DimensionMismatch`] if the
    /// totals length differs from the wire count.
    pub fn with_totals(
        coefficients: DMatrix<f64>,
        kernels: Vec<Kernel1D>,
        totals: DVector<f64>,
    ) -> Result<Self> {
        if totals.len() != coefficients.ncols() {
            return Err(Error::DimensionMismatch {
                expected: coefficients.ncols(),
                found: totals.len(),
            });
        }
        if !totals.iter().all(|t| t.is_finite()) {
            return Err(Error::NonFinite("activation layer totals"));
        }
        let mut layer = ActivationLayer::new(coefficients, kernels)?;
        layer.coefficient_totals = Some(totals);
        Ok(layer)
    }

    /// Number of wires (input dimension = output dimension).
    pub fn dim(&self) -> usize {
        self.coefficients.ncols()
    }

    /// Number of centers per wire.
    pub fn num_centers(&self) -> usize {
        self.coefficients.nrows()
    }

    /// Column sum of wire `j`: the stored exact total when present, plain
    /// summation otherwise.
    fn column_total(&self, j: usize) -> f64 {
        match &self.coefficient_totals {
            Some(t) => t[j],
            None => self.coefficients.column(j).sum(),
        }
    }

    /// Core evaluation, shapes already validated: `input` is `n x d`,
    /// `centers` is `M x d` (the centers propagated to this layer's input).
    fn apply_core(&self, input: &DMatrix<f64>, centers: &DMatrix<f64>) -> DMatrix<f64> {
        let n = input.nrows();
        let d = self.dim();
        let m = self.num_centers();
        let mut out = DMatrix::zeros(n, d);
        for j in 0..d {
            let kernel = self.kernels[j];
            let base = kernel.phi_zero() * self.column_total(j);
            for r in 0..n {
                let x = input[(r, j)];
                let mut acc = base;
                for i in 0..m {
                    acc += self.coefficients[(i, j)] * kernel.eval_shifted(x, centers[(i, j)]);
                }
                out[(r, j)] = acc;
            }
        }
        out
    }
}

/// Applies an activation layer to a batch given the centers propagated to the
/// layer's input.
///
/// Row `r`, wire `j` of the output is
/// `sum_i coefficients[i][j] * k_j(input[r][j], centers[i][j])`, evaluated in
/// the centered form described in the module docs.
///
/// # Errors
///
/// Returns [`Error::DimensionMismatch`] if the batch or center width differs
/// from the layer's wire count or the center count differs from the layer's.
pub fn activation_forward(
    layer: &ActivationLayer,
    input: &DMatrix<f64>,
    centers: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    if input.ncols() != layer.dim() {
        return Err(Error::DimensionMismatch {
            expected: layer.dim(),
            found: input.ncols(),
        });
    }
    if centers.ncols() != layer.dim() {
        return Err(Error::DimensionMismatch {
            expected: layer.dim(),
            found: centers.ncols(),
        });
    }
    if centers.nrows() != layer.num_centers() {
        return Err(Error::DimensionMismatch {
            expected: layer.num_centers(),
            found: centers.nrows(),
        });
    }
    Ok(layer.apply_core(input, centers))
}

/// One layer of a model.
#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    /// Dense linear map.
    Linear(LinearLayer),
    /// Per-wire kernel expansion.
    Activation(ActivationLayer),
}

impl Layer {
    /// Input dimension.
    pub fn in_dim(&self) -> usize {
        match self {
            Layer::Linear(l) => l.in_dim(),
            Layer::Activation(a) => a.dim(),
        }
    }

    /// Output dimension.
    pub fn out_dim(&self) -> usize {
        match self {
            Layer::Linear(l) => l.out_dim(),
            Layer::Activation(a) => a.dim(),
        }
    }

    /// Applies the layer to a batch; `centers` are the center points
    /// propagated to this layer's input (ignored by linear layers).
    pub(crate) fn apply(&self, input: &DMatrix<f64>, centers: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Layer::Linear(l) => input * l.weights.transpose(),
            Layer::Activation(a) => a.apply_core(input, centers),
        }
    }
}

/// Inputs of every layer for both streams, recorded by the forward pass.
///
/// Index `l` holds the batch and center values entering layer `l`; index
/// `len - 1` (one past the last layer) holds the outputs.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    batch: Vec<DMatrix<f64>>,
    centers: Vec<DMatrix<f64>>,
}

impl ForwardTrace {
    /// Batch values entering layer `l`; `l = num_layers` is the model output.
    pub fn batch_at(&self, l: usize) -> &DMatrix<f64> {
        &self.batch[l]
    }

    /// Center values entering layer `l`; `l = num_layers` is the final
    /// propagated centers.
    pub fn centers_at(&self, l: usize) -> &DMatrix<f64> {
        &self.centers[l]
    }

    /// Model output for the traced batch.
    pub fn output(&self) -> &DMatrix<f64> {
        self.batch.last().expect("trace is never empty")
    }

    /// Number of recorded stages (`num_layers + 1`).
    pub fn len(&self) -> usize {
        self.batch.len()
    }

    /// Whether the trace is empty (never true for a valid trace).
    pub fn is_empty(&self) -> bool {
        self.batch.is_empty()
    }
}

/// Per-layer parameter gradients, parallel to the model's layer list.
///
/// Entry `l` has the shape of layer `l`'s parameter matrix: the weight matrix
/// for linear layers, the coefficient matrix for activation layers.
#[derive(Debug, Clone)]
pub struct Gradients {
    /// One gradient matrix per layer.
    pub layers: Vec<DMatrix<f64>>,
}

/// An alternating linear/activation stack with shared propagated centers.
#[derive(Debug, Clone, PartialEq)]
pub struct SdknModel {
    layers: Vec<Layer>,
    /// Center points in input space, `M x input_dim` (rows are points).
    centers: DMatrix<f64>,
}

impl SdknModel {
    /// Builds a model from layers and centers, validating the structure:
    /// odd layer count alternating linear/activation (linear first and last),
    /// consistent chained dimensions, the first layer matching the center
    /// width, and every activation layer holding one coefficient row per
    /// center.
    ///
    /// # Errors
    ///
    /// [`Error::InvalidParameter`] for structural violations,
    /// [`Error::DimensionMismatch`] for inconsistent dimensions,
    /// [`Error::EmptyInput`] / [`Error::NonFinite`] for degenerate centers.
    pub fn new(layers: Vec<Layer>, centers: DMatrix<f64>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::EmptyInput);
        }
        if layers.len().is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!(
                "layer count must be odd (alternating linear/activation), got {}",
                layers.len()
            )));
        }
        for (l, layer) in layers.iter().enumerate() {
            let want_linear = l % 2 == 0;
            let is_linear = matches!(layer, Layer::Linear(_));
            if want_linear != is_linear {
                return Err(Error::InvalidParameter(format!(
                    "layer {l} must be {}",
                    if want_linear { "linear" } else { "activation" }
                )));
            }
        }
        if centers.nrows() == 0 || centers.ncols() == 0 {
            return Err(Error::EmptyInput);
        }
        if !centers.iter().all(|c| c.is_finite()) {
            return Err(Error::NonFinite("model centers"));
        }
        if layers[0].in_dim() != centers.ncols() {
            return Err(Error::DimensionMismatch {
                expected: layers[0].in_dim(),
                found: centers.ncols(),
            });
        }
        for l in 1..layers.len() {
            if layers[l].in_dim() != layers[l - 1].out_dim() {
                return Err(Error::DimensionMismatch {
                    expected: layers[l - 1].out_dim(),
                    found: layers[l].in_dim(),
                });
            }
        }
        for layer in &layers {
            if let Layer::Activation(a) = layer {
                if a.num_centers() != centers.nrows() {
                    return Err(Error::DimensionMismatch {
                        expected: centers.nrows(),
                        found: a.num_centers(),
                    });
                }
            }
        }
        Ok(SdknModel { layers, centers })
    }

    /// Builds a randomly initialized model: linear weights uniform on
    /// `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, activation coefficients normal
    /// with standard deviation `1/sqrt(M)`, every activation wire using
    /// `kernel`. `hidden` lists the widths of the activation levels; empty
    /// `hidden` yields a single linear layer. Sampling is fully determined by
    /// `seed`.
    ///
    /// # Errors
    ///
    /// Propagates structural validation from [`SdknModel::new`].
    pub fn random(
        input_dim: usize,
        hidden: &[usize],
        output_dim: usize,
        centers: DMatrix<f64>,
        kernel: Kernel1D,
        seed: u64,
    ) -> Result<Self> {
        if input_dim == 0 || output_dim == 0 || hidden.contains(&0) {
            return Err(Error::InvalidParameter(
                "layer widths must be positive".into(),
            ));
        }
        let m = centers.nrows();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut dims = Vec::with_capacity(hidden.len() + 2);
        dims.push(input_dim);
        dims.extend_from_slice(hidden);
        dims.push(output_dim);

        let mut layers = Vec::with_capacity(2 * hidden.len() + 1);
        for w in 0..dims.len() - 1 {
            let (fan_in, fan_out) = (dims[w], dims[w + 1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let uniform = Uniform::new_inclusive(-bound, bound);
            let mut weights = DMatrix::zeros(fan_out, fan_in);
            for r in 0..fan_out {
                for c in 0..fan_in {
                    weights[(r, c)] = uniform.sample(&mut rng);
                }
            }
            layers.push(Layer::Linear(LinearLayer::new(weights)?));
            if w + 1 < dims.len() - 1 {
                let d = dims[w + 1];
                let normal = Normal::new(0.0, 1.0 / (m as f64).sqrt()).map_err(|_| {
                    Error::InvalidParameter("center count must be positive".into())
                })?;
                let mut coefficients = DMatrix::zeros(m, d);
                for r in 0..m {
                    for c in 0..d {
                        coefficients[(r, c)] = normal.sample(&mut rng);
                    }
                }
                layers.push(Layer::Activation(ActivationLayer::new(
                    coefficients,
                    vec![kernel; d],
                )?));
            }
        }
        SdknModel::new(layers, centers)
    }

    /// The layer stack.
    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Mutable access for optimizers; structural invariants must be upheld
    /// (shapes may not change).
    pub(crate) fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    /// Center points in input space, one row per center.
    pub fn centers(&self) -> &DMatrix<f64> {
        &self.centers
    }

    /// Input dimension.
    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    /// Output dimension.
    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("layers nonempty").out_dim()
    }

    /// Number of centers.
    pub fn num_centers(&self) -> usize {
        self.centers.nrows()
    }

    /// Number of activation levels.
    pub fn depth(&self) -> usize {
        self.layers.len() / 2
    }

    /// Maximum activation width (0 for a purely linear model).
    pub fn width(&self) -> usize {
        self.layers
            .iter()
            .filter_map(|l| match l {
                Layer::Activation(a) => Some(a.dim()),
                Layer::Linear(_) => None,
            })
            .max()
            .unwrap_or(0)
    }

    /// Dimension chain: input dimension followed by each layer's output
    /// dimension.
    pub fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.input_dim()];
        dims.extend(self.layers.iter().map(Layer::out_dim));
        dims
    }

    /// Runs the batch (rows are samples) through the model, propagating the
    /// center stream alongside, and records every stage.
    ///
    /// # Errors
    ///
    /// Returns [`Error::DimensionMismatch`] if the batch width differs from
    /// the input dimension and [`Error::EmptyInput`] for an empty batch.
    pub fn forward(&self, batch: &DMatrix<f64>) -> Result<(DMatrix<f64>, ForwardTrace)> {
        if batch.nrows() == 0 {
            return Err(Error::EmptyInput);
        }
        if batch.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                found: batch.ncols(),
            });
        }
        let mut trace = ForwardTrace {
            batch: Vec::with_capacity(self.layers.len() + 1),
            centers: Vec::with_capacity(self.layers.len() + 1),
        };
        let mut b = batch.clone();
        let mut c = self.centers.clone();
        for layer in &self.layers {
            trace.batch.push(b.clone());
            trace.centers.push(c.clone());
            let b_next = layer.apply(&b, &c);
            let c_next = layer.apply(&c, &c);
            b = b_next;
            c = c_next;
        }
        trace.batch.push(b.clone());
        trace.centers.push(c);
        Ok((b, trace))
    }

    /// Propagates only the center stream through a prefix of the layer
    /// stack; used by the construction assembler to pin interpolation nodes
    /// to the exact values the finished model will see.
    pub(crate) fn propagate_centers(layers: &[Layer], centers: &DMatrix<f64>) -> DMatrix<f64> {
        let mut c = centers.clone();
        for layer in layers {
            c = layer.apply(&c, &c);
        }
        c
    }

    /// Reverse-mode differentiation of the traced forward pass.
    ///
    /// Given the cotangent of the output (same shape as the output batch),
    /// returns the gradient of `<cotangent, output>` with respect to every
    /// layer parameter. Both streams are differentiated: center values enter
    /// activation layers downstream of their propagation path, so cotangents
    /// flow backward through the center stream too (they influence parameter
    /// gradients of earlier layers even though the input centers themselves
    /// are fixed).
    ///
    /// The derivative with respect to an activation coefficient is the plain
    /// kernel value `k_j(x, c)` — stored totals affect evaluation accuracy,
    /// not the mathematical function being differentiated.
    ///
    /// # Errors
    ///
    /// Returns [`Error::DimensionMismatch`] if the cotangent shape differs
    /// from the traced output or the trace length differs from the model.
    pub fn backward(&self, trace: &ForwardTrace, cotangent: &DMatrix<f64>) -> Result<Gradients> {
        let no_injections = vec![None; self.layers.len()];
        self.backward_with_center_injections(trace, cotangent, &no_injections)
    }

    /// [`SdknModel::backward`] with extra cotangents added to the center
    /// stream at chosen layers: `injections[l]`, when present, is a cotangent
    /// with respect to the center values *entering* layer `l` and flows back
    /// through layers `0..l`. Regularization terms that depend on propagated
    /// centers (the activation penalties) differentiate through this hook.
    pub(crate) fn backward_with_center_injections(
        &self,
        trace: &ForwardTrace,
        cotangent: &DMatrix<f64>,
        injections: &[Option<DMatrix<f64>>],
    ) -> Result<Gradients> {
        if injections.len() != self.layers.len() {
            return Err(Error::DimensionMismatch {
                expected: self.layers.len(),
                found: injections.len(),
            });
        }
        if trace.len() != self.layers.len() + 1 {
            return Err(Error::DimensionMismatch {
                expected: self.layers.len() + 1,
                found: trace.len(),
            });
        }
        if cotangent.shape() != trace.output().shape() {
            return Err(Error::DimensionMismatch {
                expected: trace.output().ncols(),
                found: cotangent.ncols(),
            });
        }
        let mut gb = cotangent.clone();
        let mut gc = DMatrix::zeros(self.num_centers(), self.output_dim());
        let mut grads = vec![DMatrix::zeros(0, 0); self.layers.len()];
        for l in (0..self.layers.len()).rev() {
            let b_in = trace.batch_at(l);
            let c_in = trace.centers_at(l);
            match &self.layers[l] {
                Layer::Linear(lin) => {
                    grads[l] = gb.transpose() * b_in + gc.transpose() * c_in;
                    gb = &gb * &lin.weights;
                    gc = &gc * &lin.weights;
                }
                Layer::Activation(act) => {
                    let d = act.dim();
                    let m = act.num_centers();
                    let n = b_in.nrows();
                    let a = &act.coefficients;
                    let mut ga = DMatrix::zeros(m, d);
                    let mut gb_in = DMatrix::zeros(n, d);
                    let mut gc_in = DMatrix::zeros(m, d);
                    for j in 0..d {
                        let kernel = act.kernels[j];
                        // Batch-stream contributions.
                        for r in 0..n {
                            let x = b_in[(r, j)];
                            let g = gb[(r, j)];
                            let mut slope = 0.0;
                            for i in 0..m {
                                let c = c_in[(i, j)];
                                ga[(i, j)] += g * kernel.eval(x, c);
                                slope += a[(i, j)] * kernel.deriv1(x, c);
                                gc_in[(i, j)] += g * a[(i, j)] * kernel.deriv2(x, c);
                            }
                            gb_in[(r, j)] = g * slope;
                        }
                        // Center-stream contributions: the propagated centers
                        // are both the evaluated batch and the expansion
                        // nodes of this layer.
                        for mm in 0..m {
                            let x = c_in[(mm, j)];
                            let g = gc[(mm, j)];
                            let mut slope = 0.0;
                            for i in 0..m {
                                let c = c_in[(i, j)];
                                ga[(i, j)] += g * kernel.eval(x, c);
                                slope += a[(i, j)] * kernel.deriv1(x, c);
                                gc_in[(i, j)] += g * a[(i, j)] * kernel.deriv2(x, c);
                            }
                            gc_in[(mm, j)] += g * slope;
                        }
                    }
                    grads[l] = ga;
                    gb = gb_in;
                    gc = gc_in;
                }
            }
            // gc is now the cotangent of the centers entering layer l; apply
            // any direct dependency on those values.
            if let Some(inj) = injections[l].as_ref() {
                gc += inj;
            }
        }
        Ok(Gradients { layers: grads })
    }

    /// Serializes the model to the text format described in the module docs.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("sdkn model 1\n");
        let _ = writeln!(
            out,
            "centers {} {}",
            self.centers.nrows(),
            self.centers.ncols()
        );
        push_matrix(&mut out, &self.centers);
        let _ = writeln!(out, "layers {}", self.layers.len());
        for layer in &self.layers {
            match layer {
                Layer::Linear(lin) => {
                    let _ = writeln!(out, "linear {} {}", lin.out_dim(), lin.in_dim());
                    push_matrix(&mut out, &lin.weights);
                }
                Layer::Activation(act) => {
                    let _ = writeln!(out, "activation {} {}", act.num_centers(), act.dim());
                    out.push_str("kernels");
                    for k in &act.kernels {
                        let _ = write!(out, " {} {:.16e}", k.family, k.epsilon);
                    }
                    out.push('\n');
                    push_matrix(&mut out, &act.coefficients);
                    if let Some(totals) = &act.coefficient_totals {
                        out.push_str("totals");
                        for t in totals.iter() {
                            let _ = write!(out, " {t:.16e}");
                        }
                        out.push('\n');
                    }
                }
            }
        }
        out.push_str("end\n");
        out
    }

    /// Parses a model from the text format; exact inverse of
    /// [`SdknModel::to_text`].
    ///
    /// # Errors
    ///
    /// Returns [`Error::ModelFormat`] describing the first malformed line,
    /// or the structural errors of [`SdknModel::new`].
    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().peekable();
        let header = next_line(&mut lines, "header")?;
        if header != "sdkn model 1" {
            return Err(Error::ModelFormat(format!("bad header {header:?}")));
        }
        let (m, d_in) = parse_shape_line(next_line(&mut lines, "centers")?, "centers")?;
        let centers = parse_matrix(&mut lines, m, d_in, "centers")?;
        let count_line = next_line(&mut lines, "layers")?;
        let count_tokens: Vec<&str> = count_line.split_whitespace().collect();
        let layer_count: usize = match count_tokens.as_slice() {
            ["layers", n] => n
                .parse()
                .map_err(|_| Error::ModelFormat(format!("bad layer count {n:?}")))?,
            _ => return Err(Error::ModelFormat(format!("bad layers line {count_line:?}"))),
        };
        let mut layers = Vec::with_capacity(layer_count);
        for _ in 0..layer_count {
            let head = next_line(&mut lines, "layer header")?;
            let tokens: Vec<&str> = head.split_whitespace().collect();
            match tokens.as_slice() {
                ["linear", out, inn] => {
                    let (out, inn) = (
                        parse_count(out, "linear rows")?,
                        parse_count(inn, "linear cols")?,
                    );
                    let weights = parse_matrix(&mut lines, out, inn, "linear weights")?;
                    layers.push(Layer::Linear(LinearLayer::new(weights)?));
                }
                ["activation", rows, cols] => {
                    let (rows, cols) = (
                        parse_count(rows, "activation rows")?,
                        parse_count(cols, "activation cols")?,
                    );
                    let kline = next_line(&mut lines, "kernels")?;
                    let ktokens: Vec<&str> = kline.split_whitespace().collect();
                    if ktokens.first() != Some(&"kernels") || ktokens.len() != 1 + 2 * cols {
                        return Err(Error::ModelFormat(format!("bad kernels line {kline:?}")));
                    }
                    let mut kernels = Vec::with_capacity(cols);
                    for pair in ktokens[1..].chunks(2) {
                        let family = KernelFamily::from_name(pair[0]).ok_or_else(|| {
                            Error::ModelFormat(format!("unknown kernel family {:?}", pair[0]))
                        })?;
                        let epsilon = parse_number(pair[1], "kernel shape parameter")?;
                        kernels.push(Kernel1D::new(family, epsilon)?);
                    }
                    let coefficients = parse_matrix(&mut lines, rows, cols, "coefficients")?;
                    let totals = if lines
                        .peek()
                        .is_some_and(|l| l.trim_start().starts_with("totals"))
                    {
                        let tline = next_line(&mut lines, "totals")?;
                        let ttokens: Vec<&str> = tline.split_whitespace().collect();
                        if ttokens.len() != 1 + cols {
                            return Err(Error::ModelFormat(format!("bad totals line {tline:?}")));
                        }
                        let mut t = DVector::zeros(cols);
                        for (j, tok) in ttokens[1..].iter().enumerate() {
                            t[j] = parse_number(tok, "total")?;
                        }
                        Some(t)
                    } else {
                        None
                    };
                    let layer = match totals {
                        Some(t) => ActivationLayer::with_totals(coefficients, kernels, t)?,
                        None => ActivationLayer::new(coefficients, kernels)?,
                    };
                    layers.push(Layer::Activation(layer));
                }
                _ => return Err(Error::ModelFormat(format!("bad layer header {head:?}"))),
            }
        }
        let tail = next_line(&mut lines, "end")?;
        if tail != "end" {
            return Err(Error::ModelFormat(format!("bad trailer {tail:?}")));
        }
        SdknModel::new(layers, centers)
    }

    /// Writes the model to a file in the text format.
    ///
    /// # Errors
    ///
    /// Propagates I/O failures.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    /// Reads a model from a file in the text format.
    ///
    /// # Errors
    ///
    /// Propagates I/O failures and format errors.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        SdknModel::from_text(&text)
    }
}

/// Line iterator used by the model text parser.
type Lines<'a> = std::iter::Peekable<std::str::Lines<'a>>;

fn next_line<'a>(lines: &mut Lines<'a>, label: &str) -> Result<&'a str> {
    lines
        .next()
        .map(str::trim)
        .ok_or_else(|| Error::ModelFormat(format!("unexpected end of input, wanted {label}")))
}

fn push_matrix(out: &mut String, m: &DMatrix<f64>) {
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            if c > 0 {
                out.push(' ');
            }
            let _ = write!(out, "{:.16e}", m[(r, c)]);
        }
        out.push('\n');
    }
}

fn parse_count(token: &str, label: &str) -> Result<usize> {
    token
        .parse()
        .map_err(|_| Error::ModelFormat(format!("bad {label} {token:?}")))
}

fn parse_number(token: &str, label: &str) -> Result<f64> {
    token
        .parse()
        .map_err(|_| Error::ModelFormat(format!("bad {label} {token:?}")))
}

fn parse_shape_line(line: &str, label: &str) -> Result<(usize, usize)> {
    let tokens: Vec<&str> = line.split_whitespace().collect();
    if tokens.len() != 3 || tokens[0] != label {
        return Err(Error::ModelFormat(format!("bad {label} line {line:?}")));
    }
    Ok((
        parse_count(tokens[1], label)?,
        parse_count(tokens[2], label)?,
    ))
}

fn parse_matrix(lines: &mut Lines<'_>, rows: usize, cols: usize, label: &str) -> Result<DMatrix<f64>> {
    let mut m = DMatrix::zeros(rows, cols);
    for r in 0..rows {
        let line = lines
            .next()
            .ok_or_else(|| Error::ModelFormat(format!("unexpected end of {label}")))?;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != cols {
            return Err(Error::ModelFormat(format!(
                "{label} row {r} has {} entries, wanted {cols}",
                tokens.len()
            )));
        }
        for (c, tok) in tokens.iter().enumerate() {
            m[(r, c)] = parse_number(tok, label)?;
        }
    }
    Ok(m)
}

/// Evaluates the deep kernel induced by the model's feature map at a pair of
/// input points: the outer radial kernel applied to the Euclidean distance of
/// the two points after passing through every layer except the final linear
/// one.
///
/// # Errors
///
/// Returns [`Error::NonRadialKernel`] for a non-radial outer kernel and
/// [`Error::DimensionMismatch`] for points of the wrong dimension.
pub fn deep_kernel_eval(
    model: &SdknModel,
    outer: Kernel1D,
    x: &[f64],
    y: &[f64],
) -> Result<f64> {
    if !outer.is_radial() {
        return Err(Error::NonRadialKernel(outer.family.name()));
    }
    let d = model.input_dim();
    if x.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: x.len(),
        });
    }
    if y.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: y.len(),
        });
    }
    let feature_layers = &model.layers()[..model.layers().len() - 1];
    let mut b = DMatrix::from_fn(2, d, |i, j| if i == 0 { x[j] } else { y[j] });
    let mut c = model.centers().clone();
    for layer in feature_layers {
        let b_next = layer.apply(&b, &c);
        let c_next = layer.apply(&c, &c);
        b = b_next;
        c = c_next;
    }
    let diff = b.row(0) - b.row(1);
    Ok(outer.eval(diff.norm(), 0.0))
}

/// Tolerance on the relative residual above which a weight matrix does not
/// count as realizable from the given centers.
pub const REALIZATION_TOLERANCE: f64 = 1e-8;

/// Expresses a weight matrix `a` (`b x d`) as row combinations of center
/// points `z` (`M x d`): returns the minimum-norm `c` (`b x M`) with
/// `c * z = a`.
///
/// # Errors
///
/// Returns [`Error::NotRealizable`] (carrying the relative Frobenius
/// residual) when `a`'s rows do not lie in the span of the center rows, and
/// shape errors for mismatched dimensions.
pub fn realize_linear_from_centers(a: &DMatrix<f64>, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if a.nrows() == 0 || z.nrows() == 0 {
        return Err(Error::EmptyInput);
    }
    if a.ncols() != z.ncols() {
        return Err(Error::DimensionMismatch {
            expected: z.ncols(),
            found: a.ncols(),
        });
    }
    let svd = z.clone().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0_f64, f64::max);
    let cutoff = smax * (z.nrows().max(z.ncols()) as f64) * f64::EPSILON;
    let pinv = svd
        .pseudo_inverse(cutoff)
        .map_err(|msg| Error::SingularSystem(msg.to_string()))?;
    let c = a * pinv;
    let a_norm = a.norm();
    let residual = if a_norm == 0.0 {
        0.0
    } else {
        (&c * z - a).norm() / a_norm
    };
    if residual > REALIZATION_TOLERANCE {
        return Err(Error::NotRealizable {
            residual,
            tolerance: REALIZATION_TOLERANCE,
        });
    }
    Ok(c)
}

/// Inverse of [`realize_linear_from_centers`]: turns center-combination
/// coefficients `c` (`b x M`) back into the weight matrix `c * z` (`b x d`).
///
/// # Errors
///
/// Returns shape errors for mismatched dimensions.
pub fn weights_from_center_coefficients(
    c: &DMatrix<f64>,
    z: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    if c.nrows() == 0 || z.nrows() == 0 {
        return Err(Error::EmptyInput);
    }
    if c.ncols() != z.nrows() {
        return Err(Error::DimensionMismatch {
            expected: z.nrows(),
            found: c.ncols(),
        });
    }
    Ok(c * z)
}
