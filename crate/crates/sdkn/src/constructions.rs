//! Assembly of network fragments with prescribed algebraic behaviour.
//!
//! Everything here builds [`SdknModel`] values out of three-center
//! interpolation units: each activation wire carries a Gaussian kernel
//! expansion on three nodes, solved in flat-limit-stable form at a small
//! shape parameter `sigma`, so the wire reproduces its three target values
//! exactly and approximates the quadratic interpolant of those targets
//! elsewhere. Stacking such units yields fragments that realize identity
//! maps, squaring, products (by polarization), monomials (by binary
//! exponentiation) and full polynomials, with approximation error that
//! vanishes as `sigma -> 0`.
//!
//! Two invariants hold throughout:
//!
//! - units are always solved at the *propagated* center values, obtained by
//!   running the center triple through the already-built layers with the same
//!   arithmetic the finished model uses at evaluation time, so the fragment
//!   is exact at its centers by construction rather than by analysis;
//! - before any unit is solved, its three node values are checked to be
//!   pairwise separated by the relative margin [`CENTER_MARGIN`]. Mixing
//!   coefficients (the polarization weight `beta`) are retried from a fixed
//!   candidate sequence until every unit of the fragment clears the margin.
//!
//! The module also hosts two free-standing numerical utilities used around
//! such fragments: [`decompose_symmetric`] splits a function into two parts
//! with prescribed reflection symmetries, and [`fit_even_profile`] fits an
//! even profile by a least-squares combination of radial kernel bumps.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::kernels::{flat_limit_interpolant, Kernel1D, KernelFamily};
use crate::network::{ActivationLayer, Layer, LinearLayer, SdknModel};
use crate::{Error, Result};

/// Smallest relative separation two node values of an interpolation unit may
/// have, and the margin [`CenterTriple`] enforces per coordinate.
///
/// The separation between `a` and `b` is measured relative to
/// `max(1, |a|, |b|)`.
pub const CENTER_MARGIN: f64 = 1e-8;

/// Number of mixing coefficients tried (`1, 1/2, ..., 1/64`) before a
/// collision is reported to the caller.
const MAX_BETA_TRIALS: usize = 64;

/// Whether `a` and `b` are separated by the relative margin.
fn margin_ok(a: f64, b: f64) -> bool {
    (a - b).abs() >= CENTER_MARGIN * a.abs().max(b.abs()).max(1.0)
}

/// The mixing coefficients a builder tries in order: the explicit value when
/// one was requested, the fixed sequence `1, 1/2, 1/3, ...` otherwise.
fn beta_trials(explicit: Option<f64>) -> Vec<f64> {
    match explicit {
        Some(b) => vec![b],
        None => (1..=MAX_BETA_TRIALS).map(|k| 1.0 / k as f64).collect(),
    }
}

/// Validates an explicitly requested mixing coefficient.
fn check_beta(beta: Option<f64>) -> Result<()> {
    if let Some(b) = beta {
        if !b.is_finite() || b <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "mixing coefficient must be finite and positive, got {b}"
            )));
        }
    }
    Ok(())
}

/// Validates a unit shape parameter.
fn check_sigma(sigma: f64) -> Result<()> {
    if !sigma.is_finite() || sigma <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "unit shape parameter must be finite and positive, got {sigma}"
        )));
    }
    Ok(())
}

/// Three construction centers in the nonnegative orthant with every
/// coordinate pairwise separated by [`CENTER_MARGIN`].
///
/// Every fragment builder interpolates on three nodes per wire, so it needs
/// exactly three centers whose values stay distinct when propagated; the
/// per-coordinate margin makes the input wires themselves safe.
#[derive(Debug, Clone, PartialEq)]
pub struct CenterTriple {
    points: DMatrix<f64>,
}

impl CenterTriple {
    /// Creates a center triple from a `3 x d` matrix (one center per row).
    ///
    /// # Errors
    ///
    /// [`Error::DimensionMismatch`] unless there are exactly three rows,
    /// [`Error::EmptyInput`] for zero columns, [`Error::NonFinite`] or
    /// [`Error::InvalidParameter`] for non-finite or negative entries, and
    /// [`Error::CenterCollision`] if any coordinate has two values closer
    /// than the relative margin.
    pub fn new(points: DMatrix<f64>) -> Result<Self> {
        if points.nrows() != 3 {
            return Err(Error::DimensionMismatch {
                expected: 3,
                found: points.nrows(),
            });
        }
        if points.ncols() == 0 {
            return Err(Error::EmptyInput);
        }
        if !points.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("center coordinates"));
        }
        if points.iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidParameter(
                "center coordinates must be nonnegative".into(),
            ));
        }
        for j in 0..points.ncols() {
            for a in 0..3 {
                for b in (a + 1)..3 {
                    if !margin_ok(points[(a, j)], points[(b, j)]) {
                        return Err(Error::CenterCollision(format!(
                            "coordinate {j}: centers {a} and {b} have values \
                             {:.6e} and {:.6e} within the relative margin {CENTER_MARGIN:.0e}",
                            points[(a, j)],
                            points[(b, j)]
                        )));
                    }
                }
            }
        }
        Ok(CenterTriple { points })
    }

    /// Creates a triple from three center slices of equal length.
    ///
    /// # Errors
    ///
    /// As [`CenterTriple::new`], plus [`Error::DimensionMismatch`] for
    /// unequal slice lengths.
    pub fn from_rows(a: &[f64], b: &[f64], c: &[f64]) -> Result<Self> {
        if a.len() != b.len() || a.len() != c.len() {
            return Err(Error::DimensionMismatch {
                expected: a.len(),
                found: a.len().max(b.len()).max(c.len()),
            });
        }
        let d = a.len();
        let points = DMatrix::from_fn(3, d, |r, j| match r {
            0 => a[j],
            1 => b[j],
            _ => c[j],
        });
        CenterTriple::new(points)
    }

    /// A generic default triple for dimension `d`: coordinate `j` takes the
    /// values `{0.1, 0.5, 0.9}` cyclically shifted by `j`, which keeps every
    /// coordinate well separated and avoids placing the three points on a
    /// line through the origin for `d = 2`.
    ///
    /// # Errors
    ///
    /// [`Error::EmptyInput`] for `d = 0`.
    pub fn default_for_dim(d: usize) -> Result<Self> {
        const BASE: [f64; 3] = [0.1, 0.5, 0.9];
        if d == 0 {
            return Err(Error::EmptyInput);
        }
        let points = DMatrix::from_fn(3, d, |r, j| BASE[(r + j) % 3]);
        CenterTriple::new(points)
    }

    /// The centers as a `3 x d` matrix, one center per row.
    pub fn points(&self) -> &DMatrix<f64> {
        &self.points
    }

    /// Coordinate dimension.
    pub fn dim(&self) -> usize {
        self.points.ncols()
    }
}

/// What a single interpolation unit should realize on its wire.
#[derive(Debug, Clone, Copy, PartialEq)]
enum UnitSpec {
    /// Reproduce the node values themselves.
    Identity,
    /// Reproduce the squares of the node values.
    Squaring,
    /// Reproduce three explicitly given values.
    Values([f64; 3]),
}

/// A pointwise map an activation unit can realize exactly on its nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnitKind {
    /// The identity `t -> t`.
    Identity,
    /// The square `t -> t^2`.
    Squaring,
}

/// An affine combination of the wires at the current assembly cut.
///
/// The linear part becomes a row of the next preparation layer; the constant
/// cannot travel on a wire (layers have no bias), so it rides along
/// symbolically and is folded into the *target values* of the first unit
/// that consumes the expression. Finished fragments never keep a constant.
#[derive(Debug, Clone, PartialEq)]
struct Expr {
    weights: Vec<f64>,
    constant: f64,
}

impl Expr {
    fn wire(index: usize, width: usize) -> Self {
        let mut weights = vec![0.0; width];
        weights[index] = 1.0;
        Expr {
            weights,
            constant: 0.0,
        }
    }

    fn zero(width: usize) -> Self {
        Expr {
            weights: vec![0.0; width],
            constant: 0.0,
        }
    }

    fn width(&self) -> usize {
        self.weights.len()
    }

    fn scaled(&self, s: f64) -> Self {
        Expr {
            weights: self.weights.iter().map(|w| w * s).collect(),
            constant: self.constant * s,
        }
    }

    fn plus(&self, other: &Expr) -> Self {
        debug_assert_eq!(self.width(), other.width());
        Expr {
            weights: self
                .weights
                .iter()
                .zip(&other.weights)
                .map(|(a, b)| a + b)
                .collect(),
            constant: self.constant + other.constant,
        }
    }

    fn minus(&self, other: &Expr) -> Self {
        self.plus(&other.scaled(-1.0))
    }

    fn with_constant(mut self, c: f64) -> Self {
        self.constant += c;
        self
    }
}

/// Solves one activation layer worth of units at the given `3 x k` node
/// matrix. `specs[i]` carries the constant offset of unit `i`'s expression
/// and what the unit should realize; offsets shift the conceptual node
/// values that the targets are computed from, while the interpolation runs
/// on the raw (wire-level) nodes the unit will actually see.
fn solve_unit_layer(
    nodes: &DMatrix<f64>,
    specs: &[(f64, UnitSpec)],
    sigma: f64,
) -> Result<ActivationLayer> {
    debug_assert_eq!(nodes.nrows(), 3);
    debug_assert_eq!(nodes.ncols(), specs.len());
    let k = specs.len();
    let probe = Kernel1D::new(KernelFamily::Gaussian, 1.0)?;
    let mut coefficients = DMatrix::zeros(3, k);
    let mut totals = DVector::zeros(k);
    for (i, (offset, spec)) in specs.iter().enumerate() {
        let raw = [nodes[(0, i)], nodes[(1, i)], nodes[(2, i)]];
        for a in 0..3 {
            for b in (a + 1)..3 {
                if !margin_ok(raw[a], raw[b]) {
                    return Err(Error::CenterCollision(format!(
                        "unit {i}: propagated node values {:.6e} and {:.6e} \
                         are within the relative margin {CENTER_MARGIN:.0e}",
                        raw[a], raw[b]
                    )));
                }
            }
        }
        let shifted = [raw[0] + offset, raw[1] + offset, raw[2] + offset];
        let values = match spec {
            UnitSpec::Identity => shifted,
            UnitSpec::Squaring => [
                shifted[0] * shifted[0],
                shifted[1] * shifted[1],
                shifted[2] * shifted[2],
            ],
            UnitSpec::Values(v) => *v,
        };
        let interpolant = flat_limit_interpolant(probe, &raw, &values, sigma)?;
        for r in 0..3 {
            coefficients[(r, i)] = interpolant.coefficients()[r];
        }
        totals[i] = interpolant.total();
    }
    ActivationLayer::with_totals(
        coefficients,
        vec![Kernel1D::new(KernelFamily::Gaussian, sigma)?; k],
        totals,
    )
}

/// Incremental fragment builder.
///
/// Grows a layer stack one *level* (preparation linear + activation) at a
/// time while tracking the center values propagated through everything built
/// so far, using the exact layer arithmetic of the finished model. Cloning
/// an assembler checkpoints it, which is how builders retry a level with a
/// different mixing coefficient after a collision.
#[derive(Debug, Clone)]
struct Assembler {
    layers: Vec<Layer>,
    input_centers: DMatrix<f64>,
    /// Center values after the last pushed layer, `3 x width`.
    z: DMatrix<f64>,
    sigma: f64,
}

impl Assembler {
    fn new(centers: &DMatrix<f64>, sigma: f64) -> Self {
        Assembler {
            layers: Vec::new(),
            input_centers: centers.clone(),
            z: centers.clone(),
            sigma,
        }
    }

    fn width(&self) -> usize {
        self.z.ncols()
    }

    /// Conceptual node values of an expression (constant included).
    fn expr_nodes(&self, expr: &Expr) -> [f64; 3] {
        debug_assert_eq!(expr.width(), self.width());
        let mut out = [expr.constant; 3];
        for (r, slot) in out.iter_mut().enumerate() {
            for (j, w) in expr.weights.iter().enumerate() {
                *slot += w * self.z[(r, j)];
            }
        }
        out
    }

    /// Appends one level: a preparation linear layer whose rows are the unit
    /// input expressions, followed by an activation layer solved at the
    /// propagated node values. Mutates the assembler only on success.
    fn level(&mut self, units: &[(Expr, UnitSpec)]) -> Result<()> {
        debug_assert!(!units.is_empty());
        let w = self.width();
        let prep = DMatrix::from_fn(units.len(), w, |i, j| {
            debug_assert_eq!(units[i].0.width(), w);
            units[i].0.weights[j]
        });
        let linear = Layer::Linear(LinearLayer::new(prep)?);
        let nodes = linear.apply(&self.z, &self.z);
        let specs: Vec<(f64, UnitSpec)> = units.iter().map(|(e, s)| (e.constant, *s)).collect();
        let activation = Layer::Activation(solve_unit_layer(&nodes, &specs, self.sigma)?);
        let z_post = activation.apply(&nodes, &nodes);
        self.layers.push(linear);
        self.layers.push(activation);
        self.z = z_post;
        Ok(())
    }

    /// Closes the fragment with a final linear layer computing `outputs`.
    fn finish(mut self, outputs: &[Expr]) -> Result<SdknModel> {
        if outputs.is_empty() {
            return Err(Error::EmptyInput);
        }
        let w = self.width();
        for expr in outputs {
            debug_assert_eq!(expr.width(), w);
            if expr.constant != 0.0 {
                return Err(Error::InvalidParameter(
                    "internal: fragment output expression carries a constant term".into(),
                ));
            }
        }
        let rows = DMatrix::from_fn(outputs.len(), w, |i, j| outputs[i].weights[j]);
        self.layers.push(Layer::Linear(LinearLayer::new(rows)?));
        SdknModel::new(self.layers, self.input_centers)
    }
}

/// Pushes a unit onto a level under construction, returning its wire index.
fn push_unit(level: &mut Vec<(Expr, UnitSpec)>, expr: Expr, spec: UnitSpec) -> usize {
    level.push((expr, spec));
    level.len() - 1
}

/// Indices a [`PowerPlan`] needs to rebuild its expressions after a level.
#[derive(Debug, Clone, Copy, Default)]
struct PlanPending {
    reg: Option<usize>,
    /// `(u, acc2, p2, beta_hat)` of a polarization multiply.
    mult: Option<(usize, usize, usize, f64)>,
    carry: Option<usize>,
}

/// Scheduler for one binary-exponentiation pipeline `base^n` (optionally
/// seeded with a running factor), advanced one level at a time.
///
/// A power register is squared once per level (`p_j = base^(2^j)`) and the
/// accumulator multiplies in `p_j` for each set bit `j` of the exponent via
/// the polarization identity
/// `a * p = ((a + beta_hat * p)^2 - a^2 - beta_hat^2 * p^2) / (2 beta_hat)`,
/// scheduled at level `j + 1` so the register arrives just in time. Seeded
/// plans multiply at every set bit and take `floor(log2 n) + 1` levels;
/// unseeded (alias) plans start the accumulator as the register at the
/// lowest set bit for free and take `ceil(log2 n)` levels.
#[derive(Debug, Clone)]
struct PowerPlan {
    mult_bits: Vec<u32>,
    birth_level: Option<u32>,
    max_reg: u32,
    levels_total: u32,
    level: u32,
    base: Expr,
    reg: Option<Expr>,
    acc: Option<Expr>,
}

impl PowerPlan {
    /// Plan for `base^n` with no seed; `n >= 1`.
    fn alias(n: u32, base: Expr) -> Self {
        debug_assert!(n >= 1);
        let j0 = n.trailing_zeros();
        let top = 31 - n.leading_zeros();
        PowerPlan {
            mult_bits: (0..32).filter(|j| n & (1 << j) != 0 && *j > j0).collect(),
            birth_level: (j0 > 0).then_some(j0),
            max_reg: top,
            levels_total: n.next_power_of_two().trailing_zeros(),
            level: 0,
            acc: (j0 == 0).then(|| base.clone()),
            base,
            reg: None,
        }
    }

    /// Plan for `seed * base^n`; `n >= 1`.
    fn seeded(n: u32, seed: Expr, base: Expr) -> Self {
        debug_assert!(n >= 1);
        let top = 31 - n.leading_zeros();
        PowerPlan {
            mult_bits: (0..32).filter(|j| n & (1 << j) != 0).collect(),
            birth_level: None,
            max_reg: top,
            levels_total: top + 1,
            level: 0,
            acc: Some(seed),
            base,
            reg: None,
        }
    }

    fn done(&self) -> bool {
        self.level >= self.levels_total
    }

    fn multiplies_next(&self) -> bool {
        !self.done() && self.mult_bits.contains(&self.level)
    }

    fn result(&self) -> &Expr {
        self.acc.as_ref().expect("power plan has an accumulator")
    }

    /// Schedules this plan's units for the next level without mutating the
    /// plan, so a failed level can be retried with a different `beta_hat`.
    fn schedule(&self, level: &mut Vec<(Expr, UnitSpec)>, beta_hat: f64) -> PlanPending {
        debug_assert!(!self.done());
        let next = self.level + 1;
        let reg_in = if next == 1 {
            &self.base
        } else {
            self.reg.as_ref().expect("register is alive")
        };
        let mut pending = PlanPending::default();
        if next <= self.max_reg {
            pending.reg = Some(push_unit(level, reg_in.clone(), UnitSpec::Squaring));
        }
        if self.mult_bits.contains(&self.level) {
            let p2 = pending
                .reg
                .unwrap_or_else(|| push_unit(level, reg_in.clone(), UnitSpec::Squaring));
            let acc = self.acc.as_ref().expect("accumulator is alive");
            let u = push_unit(
                level,
                acc.plus(&reg_in.scaled(beta_hat)),
                UnitSpec::Squaring,
            );
            let acc2 = push_unit(level, acc.clone(), UnitSpec::Squaring);
            pending.mult = Some((u, acc2, p2, beta_hat));
        } else if let Some(acc) = &self.acc {
            pending.carry = Some(push_unit(level, acc.clone(), UnitSpec::Identity));
        }
        pending
    }

    /// Commits a successfully built level, remapping the plan's expressions
    /// onto the new wires.
    fn resolve(&mut self, pending: PlanPending, width: usize) {
        self.level += 1;
        self.reg = pending.reg.map(|i| Expr::wire(i, width));
        if let Some((u, acc2, p2, bh)) = pending.mult {
            let product = Expr::wire(u, width)
                .minus(&Expr::wire(acc2, width))
                .minus(&Expr::wire(p2, width).scaled(bh * bh))
                .scaled(1.0 / (2.0 * bh));
            self.acc = Some(product);
        } else if let Some(c) = pending.carry {
            self.acc = Some(Expr::wire(c, width));
        }
        if self.birth_level == Some(self.level) {
            self.acc = Some(self.reg.clone().expect("register born this level"));
        }
    }
}

/// Advances every active plan by one level while carrying the `carried`
/// expressions through identity units. When some plan multiplies this level,
/// the polarization coefficient is retried over [`beta_trials`] until every
/// unit clears the node margin.
fn advance_level(
    asm: &mut Assembler,
    plans: &mut [&mut PowerPlan],
    carried: &mut [&mut Expr],
    beta_hat: Option<f64>,
) -> Result<()> {
    let any_mult = plans.iter().any(|p| p.multiplies_next());
    let trials = if any_mult {
        beta_trials(beta_hat)
    } else {
        vec![1.0]
    };
    let mut last_collision = None;
    for bh in trials {
        let mut level: Vec<(Expr, UnitSpec)> = Vec::new();
        let pendings: Vec<PlanPending> = plans.iter().map(|p| p.schedule(&mut level, bh)).collect();
        let carry_idx: Vec<usize> = carried
            .iter()
            .map(|e| push_unit(&mut level, (**e).clone(), UnitSpec::Identity))
            .collect();
        match asm.level(&level) {
            Ok(()) => {
                let w = asm.width();
                for (plan, pending) in plans.iter_mut().zip(pendings) {
                    plan.resolve(pending, w);
                }
                for (slot, idx) in carried.iter_mut().zip(carry_idx) {
                    **slot = Expr::wire(idx, w);
                }
                return Ok(());
            }
            Err(Error::CenterCollision(msg)) => last_collision = Some(msg),
            Err(e) => return Err(e),
        }
    }
    Err(Error::CenterCollision(
        last_collision.expect("at least one trial ran"),
    ))
}

/// Verifies that an expression's propagated values are pairwise separated.
fn check_expr_margins(asm: &Assembler, expr: &Expr, what: &str) -> Result<()> {
    let v = asm.expr_nodes(expr);
    for a in 0..3 {
        for b in (a + 1)..3 {
            if !margin_ok(v[a], v[b]) {
                return Err(Error::CenterCollision(format!(
                    "{what}: propagated values {:.6e} and {:.6e} are within \
                     the relative margin {CENTER_MARGIN:.0e}",
                    v[a], v[b]
                )));
            }
        }
    }
    Ok(())
}

/// Builds a one-wire fragment realizing the identity or the square on a
/// single input, exact at the three centers.
///
/// The result has one activation level; its off-center error is `O(sigma^2)`
/// for the square and for the identity.
///
/// # Errors
///
/// [`Error::DimensionMismatch`] unless the centers are one-dimensional,
/// [`Error::InvalidParameter`] for a bad `sigma`, and solver errors from the
/// unit solve.
pub fn build_identity_or_squaring(
    kind: UnitKind,
    centers: &CenterTriple,
    sigma: f64,
) -> Result<SdknModel> {
    check_sigma(sigma)?;
    if centers.dim() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            found: centers.dim(),
        });
    }
    let spec = match kind {
        UnitKind::Identity => UnitSpec::Identity,
        UnitKind::Squaring => UnitSpec::Squaring,
    };
    let mut asm = Assembler::new(centers.points(), sigma);
    asm.level(&[(Expr::wire(0, 1), spec)])?;
    asm.finish(&[Expr::wire(0, 1)])
}

/// A product fragment together with how it was assembled.
#[derive(Debug, Clone)]
pub struct ProductModule {
    /// Two inputs, one output approximating `x * y`.
    pub model: SdknModel,
    /// Polarization coefficient used; `0` in the collinear fallback, which
    /// needs none.
    pub beta: f64,
    /// Whether the centers were proportional (`y = c x`) so the product was
    /// built as `c * x^2` on a single squaring wire.
    pub collinear_fallback: bool,
}

/// Builds a two-input fragment approximating the product `x * y` in one
/// activation level via the polarization identity
/// `x y = ((x + beta y)^2 - x^2 - beta^2 y^2) / (2 beta)`.
///
/// When `beta` is `None`, the coefficient is chosen automatically: the fixed
/// sequence `1, 1/2, 1/3, ...` is tried until the mixed wire's node values
/// clear the margin (each collision excludes at most three candidates, so
/// the search always terminates well inside the sequence). If the three
/// centers are proportional as plane points (`y = c x`), no polarization can
/// help or is needed; the fragment falls back to `c * x^2`, which agrees
/// with the product everywhere on that line.
///
/// # Errors
///
/// [`Error::DimensionMismatch`] unless the centers are two-dimensional,
/// [`Error::InvalidParameter`] for bad `sigma` or `beta`, and
/// [`Error::CenterCollision`] if an explicitly requested `beta` collides.
pub fn build_product_module(
    centers: &CenterTriple,
    sigma: f64,
    beta: Option<f64>,
) -> Result<ProductModule> {
    check_sigma(sigma)?;
    check_beta(beta)?;
    if centers.dim() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            found: centers.dim(),
        });
    }
    let pts = centers.points();
    let singular = pts.clone().svd(false, false).singular_values;
    if singular[1] <= 1e-10 * singular[0] {
        // The y column is c times the x column; on that line x*y = c*x^2.
        let sum_xx: f64 = pts.column(0).iter().map(|v| v * v).sum();
        let sum_xy: f64 = pts
            .column(0)
            .iter()
            .zip(pts.column(1).iter())
            .map(|(x, y)| x * y)
            .sum();
        let c = sum_xy / sum_xx;
        let mut asm = Assembler::new(pts, sigma);
        asm.level(&[(Expr::wire(0, 2), UnitSpec::Squaring)])?;
        let model = asm.finish(&[Expr::wire(0, 1).scaled(c)])?;
        return Ok(ProductModule {
            model,
            beta: 0.0,
            collinear_fallback: true,
        });
    }
    let mut last_collision = None;
    for b in beta_trials(beta) {
        let mut asm = Assembler::new(pts, sigma);
        let x = Expr::wire(0, 2);
        let y = Expr::wire(1, 2);
        let units = [
            (x.clone(), UnitSpec::Squaring),
            (y.scaled(1.0), UnitSpec::Squaring),
            (x.plus(&y.scaled(b)), UnitSpec::Squaring),
        ];
        match asm.level(&units) {
            Ok(()) => {
                let out = Expr::wire(2, 3)
                    .minus(&Expr::wire(0, 3))
                    .minus(&Expr::wire(1, 3).scaled(b * b))
                    .scaled(1.0 / (2.0 * b));
                let model = asm.finish(&[out])?;
                return Ok(ProductModule {
                    model,
                    beta: b,
                    collinear_fallback: false,
                });
            }
            Err(Error::CenterCollision(msg)) => last_collision = Some(msg),
            Err(e) => return Err(e),
        }
    }
    Err(Error::CenterCollision(
        last_collision.expect("at least one trial ran"),
    ))
}

/// Builds a one-input fragment approximating `x^exponent` by binary
/// exponentiation in `max(ceil(log2 exponent), 1)` activation levels.
///
/// # Errors
///
/// [`Error::InvalidParameter`] for `exponent = 0` or bad `sigma`, and
/// [`Error::DimensionMismatch`] unless the centers are one-dimensional.
pub fn build_univariate_monomial(
    exponent: u32,
    centers: &CenterTriple,
    sigma: f64,
) -> Result<SdknModel> {
    check_sigma(sigma)?;
    if centers.dim() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            found: centers.dim(),
        });
    }
    if exponent == 0 {
        return Err(Error::InvalidParameter(
            "monomial exponent must be at least 1".into(),
        ));
    }
    let mut asm = Assembler::new(centers.points(), sigma);
    if exponent == 1 {
        asm.level(&[(Expr::wire(0, 1), UnitSpec::Identity)])?;
        return asm.finish(&[Expr::wire(0, 1)]);
    }
    let mut plan = PowerPlan::alias(exponent, Expr::wire(0, 1));
    while !plan.done() {
        advance_level(&mut asm, &mut [&mut plan], &mut [], None)?;
    }
    let out = plan.result().clone();
    asm.finish(&[out])
}

/// Builds a two-input fragment approximating `x^a * y^b` (`a, b >= 1`) in
/// `ceil(log2 max(a, b)) + 1` activation levels: two binary-exponentiation
/// pipelines run in shared levels (the earlier finisher is carried through
/// identity units) and one final polarization level multiplies the results.
///
/// `beta` is the polarization coefficient of that final multiply; `None`
/// selects it automatically as in [`build_product_module`].
///
/// # Errors
///
/// [`Error::DimensionMismatch`] unless the centers are two-dimensional, and
/// [`Error::InvalidParameter`] for zero exponents or bad `sigma` / `beta`.
pub fn build_bivariate_monomial(
    exponents: (u32, u32),
    centers: &CenterTriple,
    sigma: f64,
    beta: Option<f64>,
) -> Result<SdknModel> {
    check_sigma(sigma)?;
    check_beta(beta)?;
    if centers.dim() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            found: centers.dim(),
        });
    }
    let (a, b) = exponents;
    if a == 0 || b == 0 {
        return Err(Error::InvalidParameter(
            "bivariate monomial exponents must both be at least 1".into(),
        ));
    }
    let mut asm = Assembler::new(centers.points(), sigma);
    let mut plan_a = PowerPlan::alias(a, Expr::wire(0, 2));
    let mut plan_b = PowerPlan::alias(b, Expr::wire(1, 2));
    let mut done_a: Option<Expr> = None;
    let mut done_b: Option<Expr> = None;
    loop {
        if plan_a.done() && done_a.is_none() {
            done_a = Some(plan_a.result().clone());
        }
        if plan_b.done() && done_b.is_none() {
            done_b = Some(plan_b.result().clone());
        }
        if plan_a.done() && plan_b.done() {
            break;
        }
        let mut plans: Vec<&mut PowerPlan> = Vec::new();
        let mut carried: Vec<&mut Expr> = Vec::new();
        if plan_a.done() {
            carried.push(done_a.as_mut().expect("finished pipeline recorded"));
        } else {
            plans.push(&mut plan_a);
        }
        if plan_b.done() {
            carried.push(done_b.as_mut().expect("finished pipeline recorded"));
        } else {
            plans.push(&mut plan_b);
        }
        advance_level(&mut asm, &mut plans, &mut carried, None)?;
    }
    let ea = done_a.expect("first pipeline finished");
    let eb = done_b.expect("second pipeline finished");
    let mut last_collision = None;
    for bh in beta_trials(beta) {
        let mut level = Vec::new();
        let u = push_unit(&mut level, ea.plus(&eb.scaled(bh)), UnitSpec::Squaring);
        let a2 = push_unit(&mut level, ea.clone(), UnitSpec::Squaring);
        let b2 = push_unit(&mut level, eb.clone(), UnitSpec::Squaring);
        match asm.level(&level) {
            Ok(()) => {
                let w = asm.width();
                let out = Expr::wire(u, w)
                    .minus(&Expr::wire(a2, w))
                    .minus(&Expr::wire(b2, w).scaled(bh * bh))
                    .scaled(1.0 / (2.0 * bh));
                return asm.finish(&[out]);
            }
            Err(Error::CenterCollision(msg)) => last_collision = Some(msg),
            Err(e) => return Err(e),
        }
    }
    Err(Error::CenterCollision(
        last_collision.expect("at least one trial ran"),
    ))
}

/// An accumulation fragment together with how it was assembled.
#[derive(Debug, Clone)]
pub struct AdditionModule {
    /// `d` inputs, `d + 1` outputs: the inputs passed through, then
    /// `scale * prod_j x_j^(n_j) + beta * x_d`.
    pub model: SdknModel,
    /// Carry coefficient `beta` riding on the last coordinate.
    pub beta: f64,
    /// Whether the multi-index was all zero, so the term is the constant
    /// `scale`, realized by a single value-pinned unit (exact at the centers
    /// only).
    pub degenerate_constant: bool,
}

/// Appends one scaled monomial term to a running sum inside `asm`.
///
/// On entry `xs` holds the coordinate expressions and `sum` the running-sum
/// expression (or `None` before the first term). The term is accumulated
/// stage by stage over the coordinates with positive exponent: entering
/// stage `k` the running factor is
/// `rho_k = scale * prod_(j<k) x_j^(n_j) + beta * x_k`, and the stage
/// multiplies it by `x_k^(n_k)` (seeded pipeline) while a parallel unseeded
/// pipeline forms `x_k^(n_k + 1)` on the same levels so the spurious carry
/// term can be subtracted exactly between stages:
/// `rho_(k+1) = main - beta * cancel + beta * x_(k+1)`. The final stage
/// carries `beta * x_d` on the *last* coordinate into the updated sum, so a
/// chain of such terms accumulates `sum(beta_t) * x_d`, removable by the
/// very last linear layer. The constant `scale` enters through the stage-1
/// seed's constant part and is consumed by the first unit that touches it.
///
/// Returns whether the term was the degenerate constant (all exponents
/// zero), realized instead by a single value-pinned unit.
fn assemble_term(
    asm: &mut Assembler,
    xs: &mut [Expr],
    sum: &mut Option<Expr>,
    exponents: &[u32],
    scale: f64,
    beta: f64,
) -> Result<bool> {
    let d = exponents.len();
    debug_assert_eq!(xs.len(), d);
    let last = d - 1;
    let stages: Vec<(usize, u32)> = exponents
        .iter()
        .copied()
        .enumerate()
        .filter(|&(_, n)| n > 0)
        .collect();
    if stages.is_empty() {
        let mut level = Vec::new();
        let constant = push_unit(&mut level, xs[last].clone(), UnitSpec::Values([scale; 3]));
        let xs_idx: Vec<usize> = xs
            .iter()
            .map(|e| push_unit(&mut level, e.clone(), UnitSpec::Identity))
            .collect();
        let sum_idx = sum
            .as_ref()
            .map(|e| push_unit(&mut level, e.clone(), UnitSpec::Identity));
        asm.level(&level)?;
        let w = asm.width();
        for (slot, idx) in xs.iter_mut().zip(xs_idx) {
            *slot = Expr::wire(idx, w);
        }
        let mut updated = Expr::wire(constant, w).plus(&xs[last].scaled(beta));
        if let Some(idx) = sum_idx {
            updated = updated.plus(&Expr::wire(idx, w));
        }
        check_expr_margins(asm, &updated, "accumulated sum")?;
        *sum = Some(updated);
        return Ok(true);
    }

    let mut main_result: Option<Expr> = None;
    let mut cancel_result: Option<Expr> = None;
    for (coord, n) in stages {
        let rho = match (main_result.take(), cancel_result.take()) {
            (None, None) => xs[coord].scaled(beta).with_constant(scale),
            (Some(m), Some(c)) => m.minus(&c.scaled(beta)).plus(&xs[coord].scaled(beta)),
            _ => unreachable!("main and cancel pipelines finish together"),
        };
        let mut main = PowerPlan::seeded(n, rho, xs[coord].clone());
        let mut cancel = PowerPlan::alias(n + 1, xs[coord].clone());
        debug_assert_eq!(main.levels_total, cancel.levels_total);
        while !main.done() {
            let mut plans = [&mut main, &mut cancel];
            let mut carried: Vec<&mut Expr> = xs.iter_mut().collect();
            if let Some(s) = sum.as_mut() {
                carried.push(s);
            }
            advance_level(asm, &mut plans, &mut carried, None)?;
        }
        main_result = Some(main.result().clone());
        cancel_result = Some(cancel.result().clone());
    }
    let main = main_result.expect("at least one stage ran");
    let cancel = cancel_result.expect("at least one stage ran");
    let mut updated = main
        .minus(&cancel.scaled(beta))
        .plus(&xs[last].scaled(beta));
    if let Some(s) = sum.as_ref() {
        updated = updated.plus(s);
    }
    debug_assert_eq!(updated.constant, 0.0);
    check_expr_margins(asm, &updated, "accumulated sum")?;
    *sum = Some(updated);
    Ok(false)
}

/// Builds a fragment mapping `(x_1, ..., x_d)` to
/// `(x_1, ..., x_d, scale * prod_j x_j^(n_j) + beta * x_d)`.
///
/// Coordinates with zero exponent are skipped; each remaining coordinate
/// contributes `ceil(log2(n_j + 1))` activation levels, so the fragment
/// depth is at most `d * ceil(log2(max_j n_j + 1))`. The activation width
/// never exceeds `d + 8`. An all-zero multi-index yields the constant
/// `scale` from a single value-pinned unit in one level and is flagged
/// degenerate. When `beta` is `None` the carry coefficient is retried over
/// the fixed sequence until every unit and the output wire clear the node
/// margin.
///
/// # Errors
///
/// [`Error::DimensionMismatch`] if the centers don't match the multi-index
/// length, [`Error::InvalidParameter`] / [`Error::NonFinite`] for bad
/// parameters, and [`Error::CenterCollision`] if an explicitly requested
/// `beta` collides.
pub fn build_addition_module(
    exponents: &[u32],
    scale: f64,
    centers: &CenterTriple,
    sigma: f64,
    beta: Option<f64>,
) -> Result<AdditionModule> {
    check_sigma(sigma)?;
    check_beta(beta)?;
    if exponents.is_empty() {
        return Err(Error::EmptyInput);
    }
    if centers.dim() != exponents.len() {
        return Err(Error::DimensionMismatch {
            expected: exponents.len(),
            found: centers.dim(),
        });
    }
    if !scale.is_finite() {
        return Err(Error::NonFinite("term coefficient"));
    }
    let d = exponents.len();
    let mut last_collision = None;
    for b in beta_trials(beta) {
        let mut asm = Assembler::new(centers.points(), sigma);
        let mut xs: Vec<Expr> = (0..d).map(|i| Expr::wire(i, d)).collect();
        let mut sum = None;
        match assemble_term(&mut asm, &mut xs, &mut sum, exponents, scale, b) {
            Ok(degenerate) => {
                let mut outputs = xs;
                outputs.push(sum.expect("term assembly set the sum"));
                let model = asm.finish(&outputs)?;
                return Ok(AdditionModule {
                    model,
                    beta: b,
                    degenerate_constant: degenerate,
                });
            }
            Err(Error::CenterCollision(msg)) => last_collision = Some(msg),
            Err(e) => return Err(e),
        }
    }
    Err(Error::CenterCollision(
        last_collision.expect("at least one trial ran"),
    ))
}

/// A multivariate polynomial with nonnegative-integer exponents and an
/// evaluation box, the input language of [`compile_polynomial`].
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialSpec {
    dimension: usize,
    terms: BTreeMap<Vec<u32>, f64>,
    domain: Vec<(f64, f64)>,
}

impl PolynomialSpec {
    /// Creates a spec over `dimension` variables from `(multi-index,
    /// coefficient)` pairs; zero coefficients are dropped. The evaluation
    /// domain defaults to the unit box.
    ///
    /// # Errors
    ///
    /// [`Error::EmptyInput`] for dimension zero, [`Error::DimensionMismatch`]
    /// for a multi-index of the wrong length, [`Error::NonFinite`] for a bad
    /// coefficient, and [`Error::InvalidParameter`] for duplicate indices.
    pub fn new(
        dimension: usize,
        terms: impl IntoIterator<Item = (Vec<u32>, f64)>,
    ) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::EmptyInput);
        }
        let mut map = BTreeMap::new();
        for (exponents, coefficient) in terms {
            if exponents.len() != dimension {
                return Err(Error::DimensionMismatch {
                    expected: dimension,
                    found: exponents.len(),
                });
            }
            if !coefficient.is_finite() {
                return Err(Error::NonFinite("polynomial coefficient"));
            }
            if coefficient == 0.0 {
                continue;
            }
            if map.insert(exponents.clone(), coefficient).is_some() {
                return Err(Error::InvalidParameter(format!(
                    "duplicate multi-index {exponents:?}"
                )));
            }
        }
        Ok(PolynomialSpec {
            dimension,
            terms: map,
            domain: vec![(0.0, 1.0); dimension],
        })
    }

    /// Replaces the evaluation box; each coordinate interval must satisfy
    /// `0 <= lo < hi`.
    ///
    /// # Errors
    ///
    /// [`Error::DimensionMismatch`] or [`Error::InvalidParameter`] for a bad
    /// box.
    pub fn with_domain(mut self, domain: Vec<(f64, f64)>) -> Result<Self> {
        if domain.len() != self.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.dimension,
                found: domain.len(),
            });
        }
        for &(lo, hi) in &domain {
            if !lo.is_finite() || !hi.is_finite() || lo < 0.0 || lo >= hi {
                return Err(Error::InvalidParameter(format!(
                    "domain interval [{lo}, {hi}] must satisfy 0 <= lo < hi"
                )));
            }
        }
        self.domain = domain;
        Ok(self)
    }

    /// Parses the plain-text term format: one term per line as a coefficient
    /// followed by one exponent per variable, whitespace separated, with `#`
    /// starting a comment. For example `2.5 1 1` is `2.5 * x1 * x2`. The
    /// variable count is taken from the first term.
    ///
    /// # Errors
    ///
    /// [`Error::DataFormat`] with a 1-based line number for malformed lines,
    /// [`Error::EmptyInput`] if no terms are present, plus the
    /// [`PolynomialSpec::new`] validations.
    pub fn parse(text: &str) -> Result<Self> {
        let mut terms = Vec::new();
        let mut dimension = None;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let mut tokens = content.split_whitespace();
            let coefficient: f64 = tokens
                .next()
                .expect("non-empty line has a first token")
                .parse()
                .map_err(|_| Error::DataFormat {
                    line,
                    message: "expected a numeric coefficient".into(),
                })?;
            let exponents = tokens
                .map(|t| {
                    t.parse::<u32>().map_err(|_| Error::DataFormat {
                        line,
                        message: format!("expected a nonnegative integer exponent, got {t:?}"),
                    })
                })
                .collect::<Result<Vec<u32>>>()?;
            if exponents.is_empty() {
                return Err(Error::DataFormat {
                    line,
                    message: "a term needs at least one exponent".into(),
                });
            }
            match dimension {
                None => dimension = Some(exponents.len()),
                Some(d) if d != exponents.len() => {
                    return Err(Error::DataFormat {
                        line,
                        message: format!("expected {d} exponents, found {}", exponents.len()),
                    });
                }
                Some(_) => {}
            }
            terms.push((exponents, coefficient));
        }
        let dimension = dimension.ok_or(Error::EmptyInput)?;
        PolynomialSpec::new(dimension, terms)
    }

    /// Number of variables.
    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// Terms in lexicographic multi-index order.
    pub fn terms(&self) -> &BTreeMap<Vec<u32>, f64> {
        &self.terms
    }

    /// Evaluation box, one `(lo, hi)` interval per coordinate.
    pub fn domain(&self) -> &[(f64, f64)] {
        &self.domain
    }

    /// Evaluates the polynomial directly (the reference the compiled
    /// fragment is compared against).
    ///
    /// # Errors
    ///
    /// [`Error::DimensionMismatch`] for a point of the wrong length.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.dimension,
                found: x.len(),
            });
        }
        Ok(self
            .terms
            .iter()
            .map(|(exponents, coefficient)| {
                coefficient
                    * exponents
                        .iter()
                        .zip(x)
                        .map(|(&e, &v)| v.powi(e as i32))
                        .product::<f64>()
            })
            .sum())
    }
}

/// A compiled polynomial fragment.
#[derive(Debug, Clone)]
pub struct CompiledPolynomial {
    /// `d` inputs, one output approximating the polynomial.
    pub model: SdknModel,
    /// Carry coefficient chosen for each term, in term order.
    pub term_betas: Vec<f64>,
    /// How many terms were degenerate constants.
    pub degenerate_terms: usize,
}

/// Compiles a polynomial into a single fragment by chaining one accumulation
/// stage per term (lexicographic term order) and removing the accumulated
/// carry `sum(beta_t) * x_d` in the final linear layer.
///
/// Each term's carry coefficient is retried independently over the fixed
/// sequence until all of its units and the updated sum wire clear the node
/// margin, so distinct terms may use distinct coefficients. An empty term
/// list compiles to the zero linear map.
///
/// # Errors
///
/// [`Error::DimensionMismatch`] if the centers don't match the
/// polynomial's variable count,
/// [`Error::InvalidParameter`] for a bad `sigma`, and
/// [`Error::CenterCollision`] if some term collides for every candidate
/// coefficient.
pub fn compile_polynomial(
    spec: &PolynomialSpec,
    centers: &CenterTriple,
    sigma: f64,
) -> Result<CompiledPolynomial> {
    check_sigma(sigma)?;
    if centers.dim() != spec.dimension() {
        return Err(Error::DimensionMismatch {
            expected: spec.dimension(),
            found: centers.dim(),
        });
    }
    let d = spec.dimension();
    let mut asm = Assembler::new(centers.points(), sigma);
    let mut xs: Vec<Expr> = (0..d).map(|i| Expr::wire(i, d)).collect();
    let mut sum: Option<Expr> = None;
    let mut term_betas = Vec::with_capacity(spec.terms().len());
    let mut degenerate_terms = 0;
    for (exponents, &coefficient) in spec.terms() {
        let mut committed = false;
        let mut last_collision = None;
        for b in beta_trials(None) {
            let mut asm_trial = asm.clone();
            let mut xs_trial = xs.clone();
            let mut sum_trial = sum.clone();
            match assemble_term(
                &mut asm_trial,
                &mut xs_trial,
                &mut sum_trial,
                exponents,
                coefficient,
                b,
            ) {
                Ok(degenerate) => {
                    asm = asm_trial;
                    xs = xs_trial;
                    sum = sum_trial;
                    term_betas.push(b);
                    degenerate_terms += usize::from(degenerate);
                    committed = true;
                    break;
                }
                Err(Error::CenterCollision(msg)) => last_collision = Some(msg),
                Err(e) => return Err(e),
            }
        }
        if !committed {
            return Err(Error::CenterCollision(
                last_collision.expect("at least one trial ran"),
            ));
        }
    }
    let output = match &sum {
        Some(s) => s.minus(&xs[d - 1].scaled(term_betas.iter().sum::<f64>())),
        None => Expr::zero(d),
    };
    let model = asm.finish(&[output])?;
    Ok(CompiledPolynomial {
        model,
        term_betas,
        degenerate_terms,
    })
}

/// Pads a fragment to a larger activation depth by appending identity
/// levels on its output wires, preserving its values up to the usual
/// `O(sigma^2)` unit error per added level.
///
/// The fragment must carry exactly three centers (as all fragments built by
/// this module do) and its propagated output values must be pairwise
/// separated on every wire.
///
/// # Errors
///
/// [`Error::DepthTooSmall`] if `target_depth` is below the current depth,
/// [`Error::InvalidParameter`] for a bad `sigma` or a center count other
/// than three, and [`Error::CenterCollision`] for colliding output values.
pub fn adjust_depth(model: &SdknModel, target_depth: usize, sigma: f64) -> Result<SdknModel> {
    check_sigma(sigma)?;
    let current = model.depth();
    if target_depth < current {
        return Err(Error::DepthTooSmall {
            current,
            target: target_depth,
        });
    }
    if target_depth == current {
        return Ok(model.clone());
    }
    if model.num_centers() != 3 {
        return Err(Error::InvalidParameter(format!(
            "depth adjustment interpolates on three centers, the model has {}",
            model.num_centers()
        )));
    }
    let mut layers = model.layers().to_vec();
    let mut z = SdknModel::propagate_centers(&layers, model.centers());
    for _ in current..target_depth {
        let k = z.ncols();
        let specs = vec![(0.0, UnitSpec::Identity); k];
        let activation = Layer::Activation(solve_unit_layer(&z, &specs, sigma)?);
        let z_post = activation.apply(&z, &z);
        layers.push(activation);
        layers.push(Layer::Linear(LinearLayer::new(DMatrix::identity(k, k))?));
        z = z_post;
    }
    SdknModel::new(layers, model.centers().clone())
}

/// The fragment species [`ModuleBlueprint`] can build.
#[derive(Debug, Clone, PartialEq)]
pub enum ModuleKind {
    /// One-wire identity.
    Identity,
    /// One-wire square.
    Squaring,
    /// Two-wire product by polarization.
    Product {
        /// Polarization coefficient; `None` selects automatically.
        beta: Option<f64>,
    },
    /// `x^exponent` on one wire.
    UnivariateMonomial {
        /// Exponent, at least 1.
        exponent: u32,
    },
    /// `x^a * y^b` on two wires.
    BivariateMonomial {
        /// `(a, b)`, both at least 1.
        exponents: (u32, u32),
        /// Final-multiply polarization coefficient.
        beta: Option<f64>,
    },
    /// Accumulation of one scaled monomial term with carry.
    Addition {
        /// Multi-index of the term.
        exponents: Vec<u32>,
        /// Term coefficient.
        scale: f64,
        /// Carry coefficient.
        beta: Option<f64>,
    },
}

/// A buildable description of one fragment: what to realize and at which
/// unit shape parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct ModuleBlueprint {
    /// Fragment species and its parameters.
    pub kind: ModuleKind,
    /// Shape parameter of every interpolation unit in the fragment.
    pub sigma: f64,
}

/// A built fragment plus the assembly facts callers may care about.
#[derive(Debug, Clone)]
pub struct BuiltModule {
    /// The fragment.
    pub model: SdknModel,
    /// Mixing/carry coefficient actually used, when the species has one.
    pub beta: Option<f64>,
    /// Whether a product fell back to the proportional-centers path.
    pub collinear_fallback: bool,
    /// Whether an addition term was an all-zero multi-index.
    pub degenerate_constant: bool,
}

impl ModuleBlueprint {
    /// Pairs a fragment species with a unit shape parameter.
    pub fn new(kind: ModuleKind, sigma: f64) -> Self {
        ModuleBlueprint { kind, sigma }
    }

    /// Builds the fragment on the given centers.
    ///
    /// # Errors
    ///
    /// Whatever the species' builder reports.
    pub fn build(&self, centers: &CenterTriple) -> Result<BuiltModule> {
        let plain = |model: SdknModel| BuiltModule {
            model,
            beta: None,
            collinear_fallback: false,
            degenerate_constant: false,
        };
        match &self.kind {
            ModuleKind::Identity => Ok(plain(build_identity_or_squaring(
                UnitKind::Identity,
                centers,
                self.sigma,
            )?)),
            ModuleKind::Squaring => Ok(plain(build_identity_or_squaring(
                UnitKind::Squaring,
                centers,
                self.sigma,
            )?)),
            ModuleKind::Product { beta } => {
                let built = build_product_module(centers, self.sigma, *beta)?;
                Ok(BuiltModule {
                    model: built.model,
                    beta: Some(built.beta),
                    collinear_fallback: built.collinear_fallback,
                    degenerate_constant: false,
                })
            }
            ModuleKind::UnivariateMonomial { exponent } => Ok(plain(build_univariate_monomial(
                *exponent,
                centers,
                self.sigma,
            )?)),
            ModuleKind::BivariateMonomial { exponents, beta } => Ok(plain(
                build_bivariate_monomial(*exponents, centers, self.sigma, *beta)?,
            )),
            ModuleKind::Addition {
                exponents,
                scale,
                beta,
            } => {
                let built =
                    build_addition_module(exponents, *scale, centers, self.sigma, *beta)?;
                Ok(BuiltModule {
                    model: built.model,
                    beta: Some(built.beta),
                    collinear_fallback: false,
                    degenerate_constant: built.degenerate_constant,
                })
            }
        }
    }
}

/// Splits `h` into `h1 + h2` where `h1` is even about `z1` and `h2` is even
/// about `z2`, evaluated pointwise at `xs`.
///
/// On `[z1, z2]` the split is `(h, 0)`; outside, the defining reflection
/// identities `h1(2 z1 - x) = h1(x)` and `h2(2 z2 - x) = h2(x)` fold each
/// query back toward `[z1, z2]`, with the complementary part taken as the
/// remainder `h - h1` (or `h - h2`) so the sum is exact by construction.
/// Each reflection pair moves the query `2 (z2 - z1)` closer, so the
/// recursion depth for `x` is about `|x - z1| / (z2 - z1)`.
///
/// # Errors
///
/// [`Error::InvalidParameter`] unless `z1 < z2` (finite), and
/// [`Error::NonFinite`] for non-finite sample points.
pub fn decompose_symmetric<F: Fn(f64) -> f64>(
    h: F,
    z1: f64,
    z2: f64,
    xs: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    if !z1.is_finite() || !z2.is_finite() || z1 >= z2 {
        return Err(Error::InvalidParameter(format!(
            "reflection anchors must satisfy z1 < z2, got {z1} and {z2}"
        )));
    }
    if !xs.iter().all(|x| x.is_finite()) {
        return Err(Error::NonFinite("decomposition sample points"));
    }
    let mut h1 = Vec::with_capacity(xs.len());
    let mut h2 = Vec::with_capacity(xs.len());
    for &x in xs {
        let fuel = (((x - z1).abs() + (x - z2).abs()) / (z2 - z1)) as usize + 16;
        let (a, b) = reflect_split(&h, z1, z2, x, fuel)?;
        h1.push(a);
        h2.push(b);
    }
    Ok((h1, h2))
}

fn reflect_split<F: Fn(f64) -> f64>(
    h: &F,
    z1: f64,
    z2: f64,
    x: f64,
    fuel: usize,
) -> Result<(f64, f64)> {
    if fuel == 0 {
        return Err(Error::InvalidParameter(
            "reflection recursion exceeded its bound".into(),
        ));
    }
    if x >= z1 && x <= z2 {
        Ok((h(x), 0.0))
    } else if x < z1 {
        let (h1, _) = reflect_split(h, z1, z2, 2.0 * z1 - x, fuel - 1)?;
        Ok((h1, h(x) - h1))
    } else {
        let (_, h2) = reflect_split(h, z1, z2, 2.0 * z2 - x, fuel - 1)?;
        Ok((h(x) - h2, h2))
    }
}

/// A least-squares fit of an even profile by radial kernel bumps.
#[derive(Debug, Clone)]
pub struct EvenProfileFit {
    /// One coefficient per dictionary width, in input order.
    pub coefficients: Vec<f64>,
    /// Maximum absolute fit error over the sample grid.
    pub sup_error: f64,
}

/// Fits `target` on `[0, half_width]` (and by evenness on the mirrored
/// interval) by the dictionary `x -> phi(width_j * |x|)` of the given radial
/// family, using the minimum-norm least-squares solution on a dense uniform
/// grid of 1001 points.
///
/// Because the solution is least-squares optimal over the span, enlarging a
/// dictionary (superset of widths) can only decrease `sup_error`'s
/// underlying residual; nested dictionaries give monotone fits.
///
/// # Errors
///
/// [`Error::EmptyInput`] for an empty dictionary,
/// [`Error::InvalidParameter`] for bad widths (non-finite, nonpositive, or
/// duplicated) or `half_width`, [`Error::NonRadialKernel`] for a
/// non-radial family, and [`Error::NonFinite`] if the target produces
/// non-finite values.
pub fn fit_even_profile<F: Fn(f64) -> f64>(
    target: F,
    half_width: f64,
    widths: &[f64],
    family: KernelFamily,
) -> Result<EvenProfileFit> {
    const GRID: usize = 1001;
    if widths.is_empty() {
        return Err(Error::EmptyInput);
    }
    if !half_width.is_finite() || half_width <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "profile half-width must be finite and positive, got {half_width}"
        )));
    }
    if !family.is_radial() {
        return Err(Error::NonRadialKernel(family.name()));
    }
    for (i, &w) in widths.iter().enumerate() {
        if !w.is_finite() || w <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "dictionary width {i} must be finite and positive, got {w}"
            )));
        }
        if widths[..i].contains(&w) {
            return Err(Error::InvalidParameter(format!(
                "duplicate dictionary width {w}"
            )));
        }
    }
    let kernels = widths
        .iter()
        .map(|&w| Kernel1D::new(family, w))
        .collect::<Result<Vec<_>>>()?;
    let xs: Vec<f64> = (0..GRID)
        .map(|i| half_width * i as f64 / (GRID - 1) as f64)
        .collect();
    let design = DMatrix::from_fn(GRID, kernels.len(), |i, j| kernels[j].eval(xs[i], 0.0));
    let rhs = DVector::from_iterator(GRID, xs.iter().map(|&x| target(x)));
    if !rhs.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("profile target values"));
    }
    let svd = design.clone().svd(true, true);
    let cutoff = f64::EPSILON * svd.singular_values[0] * GRID as f64;
    let coefficients = svd
        .solve(&rhs, cutoff)
        .map_err(|msg| Error::SingularSystem(msg.to_string()))?;
    let residual = &design * &coefficients - &rhs;
    let sup_error = residual.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(EvenProfileFit {
        coefficients: coefficients.iter().copied().collect(),
        sup_error,
    })
}
