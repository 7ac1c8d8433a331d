//! One-dimensional kernel families and their numerical toolkit.
//!
//! Everything in this crate is built from kernels of a single real variable:
//! radial families `k(x, y) = phi(eps * |x - y|)` plus the linear kernel
//! `k(x, y) = x * y`. This module provides their evaluation and first
//! derivatives, Gram matrices, the coordinate-blocked Gram used by activation
//! layers, a Taylor expansion diagnostic that decides which families admit
//! well-posed interpolation near the flat limit `eps -> 0`, the flat-limit
//! interpolation solver itself, and a Gram conditioning diagnostic.
//!
//! Near the flat limit the naive Gram matrix is numerically rank one and
//! direct solves lose every digit that matters. The solver here splits off the
//! rank-one part analytically: with `a0 = phi(0)` the Gram matrix is
//! `a0 * e * e^T + E`, where `E[i][j] = phi(eps * |n_i - n_j|) - phi(0)` is
//! computed by dedicated shifted-profile routines at full relative precision
//! (via `expm1` and friends), and the rank-one border is eliminated with the
//! Sherman-Morrison identity. The solve also yields the exact coefficient sum
//! `t`, which [`FlatLimitInterpolant::eval`] uses to evaluate in the centered
//! form `a0 * t + sum_i alpha_i * (k(x, n_i) - a0)` — immune to the
//! catastrophic cancellation that makes the naive sum useless for small `eps`.

use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// The supported one-dimensional kernel families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelFamily {
    /// `phi(r) = exp(-r^2)`.
    Gaussian,
    /// `phi(r) = exp(-r)`; the basic Matern family.
    Matern0,
    /// `phi(r) = (3 + 3r + r^2) * exp(-r)`; a twice-differentiable Matern
    /// family with a quadratic polynomial factor.
    MaternQuadratic,
    /// `phi(r) = max(1 - r, 0)`; compactly supported Wendland family.
    Wendland0,
    /// `k(x, y) = x * y`; not radial, ignores the shape parameter.
    Linear,
}

impl KernelFamily {
    /// Whether the family is radial, i.e. `k(x, y)` depends only on `|x - y|`.
    pub fn is_radial(self) -> bool {
        !matches!(self, KernelFamily::Linear)
    }

    /// Stable lowercase name used in serialized models and config files.
    pub fn name(self) -> &'static str {
        match self {
            KernelFamily::Gaussian => "gaussian",
            KernelFamily::Matern0 => "matern0",
            KernelFamily::MaternQuadratic => "matern-quadratic",
            KernelFamily::Wendland0 => "wendland0",
            KernelFamily::Linear => "linear",
        }
    }

    /// Inverse of [`KernelFamily::name`].
    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "gaussian" => Some(KernelFamily::Gaussian),
            "matern0" => Some(KernelFamily::Matern0),
            "matern-quadratic" => Some(KernelFamily::MaternQuadratic),
            "wendland0" => Some(KernelFamily::Wendland0),
            "linear" => Some(KernelFamily::Linear),
            _ => None,
        }
    }
}

impl std::fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A one-dimensional kernel: a family together with a shape parameter.
///
/// Radial families evaluate as `phi(epsilon * |x - y|)`; the linear family
/// ignores `epsilon`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kernel1D {
    /// The kernel family.
    pub family: KernelFamily,
    /// Shape parameter; must be finite and positive for radial families.
    pub epsilon: f64,
}

impl Kernel1D {
    /// Creates a kernel, validating the shape parameter.
    ///
    /// # Errors
    ///
    /// Returns [`Error::InvalidParameter`] if `epsilon` is not finite and
    /// strictly positive.
    pub fn new(family: KernelFamily, epsilon: f64) -> Result<Self> {
        if !epsilon.is_finite() || epsilon <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "kernel shape parameter must be finite and positive, got {epsilon}"
            )));
        }
        Ok(Kernel1D { family, epsilon })
    }

    /// Whether the kernel is radial.
    pub fn is_radial(self) -> bool {
        self.family.is_radial()
    }

    /// `k(x, x)` for any `x` on the diagonal axis of a radial family
    /// (`phi(0)`), and `0` for the linear family so that
    /// `eval(x, y) = phi_zero() + eval_shifted(x, y)` holds for every family.
    pub fn phi_zero(self) -> f64 {
        match self.family {
            KernelFamily::Gaussian => 1.0,
            KernelFamily::Matern0 => 1.0,
            KernelFamily::MaternQuadratic => 3.0,
            KernelFamily::Wendland0 => 1.0,
            KernelFamily::Linear => 0.0,
        }
    }

    /// Evaluates `k(x, y)`.
    pub fn eval(self, x: f64, y: f64) -> f64 {
        match self.family {
            KernelFamily::Linear => x * y,
            _ => self.phi(self.epsilon * (x - y).abs()),
        }
    }

    /// Evaluates `k(x, y) - phi_zero()` at full relative precision.
    ///
    /// For radial families and small `epsilon * |x - y|` the shifted value is
    /// tiny while `k` itself is `O(1)`; computing the difference directly
    /// (e.g. with `expm1`) preserves all significant digits where the naive
    /// subtraction would cancel. The flat-limit machinery relies on this.
    pub fn eval_shifted(self, x: f64, y: f64) -> f64 {
        match self.family {
            KernelFamily::Linear => x * y,
            _ => self.phi_shift(self.epsilon * (x - y).abs()),
        }
    }

    /// Partial derivative of `k(x, y)` with respect to the first argument.
    ///
    /// At kink points of the non-smooth families (`x = y` for Matern0 and
    /// Wendland0, and the support boundary of Wendland0) the derivative is
    /// taken as the symmetric choice `0` respectively the interior value.
    pub fn deriv1(self, x: f64, y: f64) -> f64 {
        let e = self.epsilon;
        let u = x - y;
        match self.family {
            KernelFamily::Linear => y,
            KernelFamily::Gaussian => {
                let r = e * u.abs();
                -2.0 * e * e * u * (-r * r).exp()
            }
            KernelFamily::Matern0 => {
                let r = e * u.abs();
                -e * sign(u) * (-r).exp()
            }
            KernelFamily::MaternQuadratic => {
                let r = e * u.abs();
                -e * e * u * (1.0 + r) * (-r).exp()
            }
            KernelFamily::Wendland0 => {
                let r = e * u.abs();
                if r < 1.0 {
                    -e * sign(u)
                } else {
                    0.0
                }
            }
        }
    }

    /// Partial derivative of `k(x, y)` with respect to the second argument.
    ///
    /// Radial kernels depend on `x - y`, so this is `-deriv1(x, y)`; the
    /// linear kernel gives `x`.
    pub fn deriv2(self, x: f64, y: f64) -> f64 {
        match self.family {
            KernelFamily::Linear => x,
            _ => -self.deriv1(x, y),
        }
    }

    /// Radial profile `phi(r)`, `r >= 0`. Radial families only.
    fn phi(self, r: f64) -> f64 {
        match self.family {
            KernelFamily::Gaussian => (-r * r).exp(),
            KernelFamily::Matern0 => (-r).exp(),
            KernelFamily::MaternQuadratic => (3.0 + 3.0 * r + r * r) * (-r).exp(),
            KernelFamily::Wendland0 => (1.0 - r).max(0.0),
            KernelFamily::Linear => unreachable!("linear kernel has no radial profile"),
        }
    }

    /// Shifted radial profile `phi(r) - phi(0)` at full relative precision.
    fn phi_shift(self, r: f64) -> f64 {
        match self.family {
            KernelFamily::Gaussian => (-r * r).exp_m1(),
            KernelFamily::Matern0 => (-r).exp_m1(),
            // (3 + 3r + r^2) e^-r - 3 = 3 (e^-r - 1) + r (3 + r) e^-r; the two
            // halves carry +-3r leading terms whose cancellation is benign at
            // the radii the flat-limit machinery uses (relative error
            // ~ 8e-16 / r).
            KernelFamily::MaternQuadratic => {
                3.0 * (-r).exp_m1() + r * (3.0 + r) * (-r).exp()
            }
            KernelFamily::Wendland0 => -r.min(1.0),
            KernelFamily::Linear => unreachable!("linear kernel has no radial profile"),
        }
    }
}

/// `u.signum()` with `sign(0) = 0`, the symmetric subgradient choice at kinks.
fn sign(u: f64) -> f64 {
    if u > 0.0 {
        1.0
    } else if u < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Gram matrix `K[i][j] = k(xs[i], zs[j])`.
///
/// # Errors
///
/// Returns [`Error::EmptyInput`] if either node list is empty and
/// [`Error::NonFinite`] if any node is NaN or infinite.
pub fn gram_matrix(kernel: Kernel1D, xs: &[f64], zs: &[f64]) -> Result<DMatrix<f64>> {
    if xs.is_empty() || zs.is_empty() {
        return Err(Error::EmptyInput);
    }
    if !xs.iter().chain(zs).all(|v| v.is_finite()) {
        return Err(Error::NonFinite("gram matrix nodes"));
    }
    Ok(DMatrix::from_fn(xs.len(), zs.len(), |i, j| {
        kernel.eval(xs[i], zs[j])
    }))
}

/// Coordinate-blocked Gram matrix of per-coordinate one-dimensional kernels.
///
/// For points `x` (`n x d` rows) and `z` (`m x d` rows) with one kernel per
/// coordinate, returns the `(n*d) x (m*d)` block-diagonal matrix whose `l`-th
/// diagonal block is the Gram matrix of coordinate `l`:
/// `K[l*n + i][l*m + j] = k_l(x[i][l], z[j][l])`, all other entries zero.
/// Distinct coordinates never interact, which is exactly the structure of an
/// activation layer's parameter-to-function map.
///
/// # Errors
///
/// Returns [`Error::EmptyInput`] for empty point sets and
/// [`Error::DimensionMismatch`] if the kernel count disagrees with the
/// coordinate count of either point set.
pub fn single_dim_gram(
    kernels: &[Kernel1D],
    x: &DMatrix<f64>,
    z: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let d = kernels.len();
    if d == 0 || x.nrows() == 0 || z.nrows() == 0 {
        return Err(Error::EmptyInput);
    }
    if x.ncols() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: x.ncols(),
        });
    }
    if z.ncols() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: z.ncols(),
        });
    }
    let (n, m) = (x.nrows(), z.nrows());
    let mut out = DMatrix::zeros(n * d, m * d);
    for (l, kernel) in kernels.iter().enumerate() {
        for i in 0..n {
            for j in 0..m {
                out[(l * n + i, l * m + j)] = kernel.eval(x[(i, l)], z[(j, l)]);
            }
        }
    }
    Ok(out)
}

/// Leading even Taylor coefficients of a radial profile and the admissibility
/// flags for flat-limit interpolation.
///
/// For profiles with an expansion `phi(r) = a0 + a1 r^2 + a2 r^4 + ...`
/// (possibly plus higher-order odd terms), two-node interpolation stays
/// well-posed in the limit `eps -> 0` iff `a0 != 0` and `a1 != 0`, and
/// three-node interpolation additionally needs `6 a0 a2 - a1^2 != 0`.
/// Profiles with a linear term `r^1` (basic Matern, Wendland) have no such
/// expansion; their interpolants degenerate in the limit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaylorAdmissibility {
    /// Constant term `phi(0)`.
    pub a0: f64,
    /// Coefficient of `r^2`; `0` when the expansion does not exist.
    pub a1: f64,
    /// Coefficient of `r^4`; `0` when the expansion does not exist.
    pub a2: f64,
    /// Whether two-node flat-limit interpolation is well-posed.
    pub admissible_n2: bool,
    /// Whether three-node flat-limit interpolation is well-posed.
    pub admissible_n3: bool,
}

/// Tolerance below which an estimated expansion coefficient counts as zero.
const ADMISSIBILITY_TOL: f64 = 1e-6;

/// Estimates the even Taylor expansion of a radial kernel profile at the
/// origin and reports flat-limit admissibility.
///
/// The Gaussian coefficients are exact (`1, -1, 1/2`). Other radial families
/// are probed numerically: `a1` is the limit of `(phi(r) - phi(0)) / r^2` on
/// halving radii — if those quotients diverge (a hallmark of an `r^1` term,
/// their successive differences keep doubling) the family is flagged
/// inadmissible with sentinel coefficients `a1 = a2 = 0`. When the quotients
/// converge, `a2` is recovered by a least-squares fit of
/// `(phi(r) - phi(0) - a1 r^2) / r^4` against `{1, r, r^2}` on moderate radii,
/// which absorbs any odd `r^5` contribution.
///
/// # Errors
///
/// Returns [`Error::NonRadialKernel`] for the linear kernel.
pub fn taylor_admissibility(kernel: Kernel1D) -> Result<TaylorAdmissibility> {
    if !kernel.is_radial() {
        return Err(Error::NonRadialKernel(kernel.family.name()));
    }
    // The probe must see the profile itself, not a rescaled copy.
    let unit = Kernel1D {
        family: kernel.family,
        epsilon: 1.0,
    };
    let a0 = unit.phi_zero();
    if kernel.family == KernelFamily::Gaussian {
        return Ok(TaylorAdmissibility {
            a0: 1.0,
            a1: -1.0,
            a2: 0.5,
            admissible_n2: true,
            admissible_n3: true,
        });
    }

    // Quotients q1(r) = (phi(r) - phi(0)) / r^2 on halving radii. With an r^1
    // term the successive differences double each step; with a genuine r^2
    // leading term they shrink to rounding noise.
    let q1: Vec<f64> = (0..=16)
        .map(|k| {
            let r = 0.25 / f64::powi(2.0, k);
            unit.phi_shift(r) / (r * r)
        })
        .collect();
    let d_mid = q1[8] - q1[7];
    let d_last = q1[16] - q1[15];
    let diverges = d_last.abs() > 4.0 * d_mid.abs() && d_last.abs() > 1e-3;
    if diverges {
        return Ok(TaylorAdmissibility {
            a0,
            a1: 0.0,
            a2: 0.0,
            admissible_n2: false,
            admissible_n3: false,
        });
    }
    let a1 = q1[16];

    // Least-squares fit of q2(r) = (phi(r) - phi(0) - a1 r^2) / r^4 against
    // {1, r, r^2} on moderate radii. The radii stay >= ~1.5e-3 because the
    // shifted profile only carries ~8e-16 / r relative accuracy for families
    // with cancelling linear terms in their stable form.
    let radii: Vec<f64> = (0..8).map(|k| 0.2 / f64::powi(2.0, k)).collect();
    let design = DMatrix::from_fn(radii.len(), 3, |i, j| radii[i].powi(j as i32));
    let rhs = DVector::from_iterator(
        radii.len(),
        radii.iter().map(|&r| {
            let r2 = r * r;
            (unit.phi_shift(r) - a1 * r2) / (r2 * r2)
        }),
    );
    let coef = design
        .svd(true, true)
        .solve(&rhs, f64::EPSILON * 8.0)
        .map_err(|msg| Error::SingularSystem(msg.to_string()))?;
    let a2 = coef[0];

    let discriminant = 6.0 * a0 * a2 - a1 * a1;
    Ok(TaylorAdmissibility {
        a0,
        a1,
        a2,
        admissible_n2: a0.abs() > ADMISSIBILITY_TOL && a1.abs() > ADMISSIBILITY_TOL,
        admissible_n3: a1.abs() > ADMISSIBILITY_TOL && discriminant.abs() > ADMISSIBILITY_TOL,
    })
}

/// A kernel interpolant on two or three nodes, solved and evaluated in a form
/// that stays accurate arbitrarily close to the flat limit `eps -> 0`.
#[derive(Debug, Clone)]
pub struct FlatLimitInterpolant {
    kernel: Kernel1D,
    nodes: Vec<f64>,
    coefficients: DVector<f64>,
    /// Exact value of `sum(coefficients)`, carried separately because the
    /// coefficients grow like `eps^-4` while their sum is `O(eps^-2)`:
    /// re-summing the stored values in `f64` would lose the total entirely.
    total: f64,
}

impl FlatLimitInterpolant {
    /// The kernel the interpolant expands in.
    pub fn kernel(&self) -> Kernel1D {
        self.kernel
    }

    /// Interpolation nodes.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Expansion coefficients, one per node.
    pub fn coefficients(&self) -> &DVector<f64> {
        &self.coefficients
    }

    /// Exact coefficient sum from the solve.
    pub fn total(&self) -> f64 {
        self.total
    }

    /// Evaluates the interpolant at `x` in the centered form
    /// `phi(0) * total + sum_i alpha_i * (k(x, n_i) - phi(0))`.
    ///
    /// Algebraically equal to `sum_i alpha_i * k(x, n_i)` but numerically
    /// stable: each shifted kernel value is computed at full relative
    /// precision and the huge near-cancelling contribution of `phi(0)` is
    /// replaced by the exact total.
    pub fn eval(&self, x: f64) -> f64 {
        let mut acc = self.kernel.phi_zero() * self.total;
        for (alpha, node) in self.coefficients.iter().zip(&self.nodes) {
            acc += alpha * self.kernel.eval_shifted(x, *node);
        }
        acc
    }
}

/// Solves the kernel interpolation problem on two or three distinct nodes in
/// flat-limit-stable form.
///
/// The Gram matrix is split as `a0 e e^T + E` with `E` the shifted kernel
/// matrix (zero diagonal, entries at full relative precision). `E` is solved
/// by full-pivot LU and the rank-one part is eliminated with the
/// Sherman-Morrison identity, which also produces the coefficient sum exactly.
/// The kernel's own shape parameter is ignored; `eps` is the shape parameter
/// of the interpolant (this is the knob a flat-limit study sweeps).
///
/// # Errors
///
/// - [`Error::InadmissibleKernel`] if the family's Taylor diagnostic rules
///   out this node count ([`taylor_admissibility`]);
/// - [`Error::InvalidParameter`] for a bad `eps` or node count outside 2..=3;
/// - [`Error::CenterCollision`] for coincident nodes;
/// - [`Error::SingularSystem`] if the shifted system cannot be solved.
pub fn flat_limit_interpolant(
    kernel: Kernel1D,
    nodes: &[f64],
    values: &[f64],
    eps: f64,
) -> Result<FlatLimitInterpolant> {
    let n = nodes.len();
    if !(2..=3).contains(&n) {
        return Err(Error::InvalidParameter(format!(
            "flat-limit interpolation takes 2 or 3 nodes, got {n}"
        )));
    }
    if values.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: values.len(),
        });
    }
    if !nodes.iter().chain(values).all(|v| v.is_finite()) {
        return Err(Error::NonFinite("interpolation nodes or values"));
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if nodes[i] == nodes[j] {
                return Err(Error::CenterCollision(format!(
                    "interpolation nodes {i} and {j} coincide at {}",
                    nodes[i]
                )));
            }
        }
    }
    let admissibility = taylor_admissibility(kernel)?;
    let admissible = match n {
        2 => admissibility.admissible_n2,
        _ => admissibility.admissible_n3,
    };
    if !admissible {
        return Err(Error::InadmissibleKernel {
            family: kernel.family.name(),
            nodes: n,
        });
    }
    let scaled = Kernel1D::new(kernel.family, eps)?;
    let a0 = scaled.phi_zero();

    let e_mat = DMatrix::from_fn(n, n, |i, j| scaled.eval_shifted(nodes[i], nodes[j]));
    let lu = e_mat.full_piv_lu();
    let f = DVector::from_column_slice(values);
    let ones = DVector::from_element(n, 1.0);
    let u = lu
        .solve(&f)
        .ok_or_else(|| Error::SingularSystem("shifted kernel matrix".into()))?;
    let v = lu
        .solve(&ones)
        .ok_or_else(|| Error::SingularSystem("shifted kernel matrix".into()))?;
    let denom = 1.0 + a0 * v.sum();
    if !denom.is_finite() || denom.abs() < 1e-12 * (1.0 + (a0 * v.sum()).abs()) {
        return Err(Error::SingularSystem(
            "flat-limit border denominator vanished".into(),
        ));
    }
    let total = u.sum() / denom;
    let coefficients = &u - v * (a0 * total);
    Ok(FlatLimitInterpolant {
        kernel: scaled,
        nodes: nodes.to_vec(),
        coefficients,
        total,
    })
}

/// Two-norm condition number of the kernel Gram matrix on the given nodes.
///
/// Computed from the singular values. When the smallest singular value falls
/// below `sigma_max * n * machine_epsilon` the matrix is singular at working
/// precision — the true ratio is not recoverable in `f64` — and the
/// diagnostic reports `f64::INFINITY`. Coincident nodes always land there.
///
/// # Errors
///
/// Returns [`Error::EmptyInput`] for an empty node list and
/// [`Error::NonFinite`] for non-finite nodes.
pub fn conditioning_diagnostic(kernel: Kernel1D, nodes: &[f64]) -> Result<f64> {
    let gram = gram_matrix(kernel, nodes, nodes)?;
    let n = nodes.len() as f64;
    let singular = gram.singular_values();
    let smax = singular.iter().cloned().fold(0.0_f64, f64::max);
    let smin = singular.iter().cloned().fold(f64::INFINITY, f64::min);
    if smax == 0.0 {
        return Ok(f64::INFINITY);
    }
    if smin <= smax * n * f64::EPSILON {
        return Ok(f64::INFINITY);
    }
    Ok(smax / smin)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shifted_profile_matches_naive_subtraction_at_moderate_radii() {
        for family in [
            KernelFamily::Gaussian,
            KernelFamily::Matern0,
            KernelFamily::MaternQuadratic,
            KernelFamily::Wendland0,
        ] {
            let k = Kernel1D::new(family, 1.0).unwrap();
            for r in [0.1, 0.5, 0.9, 1.5, 3.0] {
                let naive = k.phi(r) - k.phi_zero();
                let stable = k.phi_shift(r);
                assert!(
                    (naive - stable).abs() <= 1e-14 * (1.0 + naive.abs()),
                    "{family} at r={r}: naive {naive} vs stable {stable}"
                );
            }
        }
    }

    #[test]
    fn shifted_profile_keeps_relative_precision_at_tiny_radii() {
        // Leading terms: Gaussian -r^2, MaternQuadratic -r^2/2 (a1 = -1/2
        // scaled by a0 = 3 gives -3/2... the raw profile has a1 = -1/2),
        // Matern0 and Wendland0 -r.
        let r = 1e-8;
        let gaussian = Kernel1D::new(KernelFamily::Gaussian, 1.0).unwrap();
        assert!((gaussian.phi_shift(r) / (-r * r) - 1.0).abs() < 1e-10);
        let mq = Kernel1D::new(KernelFamily::MaternQuadratic, 1.0).unwrap();
        // Cancellation of the +-3r halves costs ~8e-16/r relative error here.
        assert!((mq.phi_shift(r) / (-0.5 * r * r) - 1.0).abs() < 1e-4);
        let m0 = Kernel1D::new(KernelFamily::Matern0, 1.0).unwrap();
        assert!((m0.phi_shift(r) / (-r) - 1.0).abs() < 1e-7);
        let w0 = Kernel1D::new(KernelFamily::Wendland0, 1.0).unwrap();
        assert_eq!(w0.phi_shift(r), -r);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let h = 1e-6;
        for family in [
            KernelFamily::Gaussian,
            KernelFamily::Matern0,
            KernelFamily::MaternQuadratic,
            KernelFamily::Wendland0,
            KernelFamily::Linear,
        ] {
            let k = Kernel1D::new(family, 1.3).unwrap();
            // Stay away from the kinks of the non-smooth families.
            for (x, y) in [(0.3, -0.2), (-0.7, 0.1), (0.05, 0.4)] {
                let fd1 = (k.eval(x + h, y) - k.eval(x - h, y)) / (2.0 * h);
                let fd2 = (k.eval(x, y + h) - k.eval(x, y - h)) / (2.0 * h);
                assert!(
                    (k.deriv1(x, y) - fd1).abs() < 1e-7,
                    "{family} d1 at ({x}, {y}): {} vs {fd1}",
                    k.deriv1(x, y)
                );
                assert!(
                    (k.deriv2(x, y) - fd2).abs() < 1e-7,
                    "{family} d2 at ({x}, {y}): {} vs {fd2}",
                    k.deriv2(x, y)
                );
            }
        }
    }

    #[test]
    fn kink_derivatives_use_symmetric_choice() {
        let m0 = Kernel1D::new(KernelFamily::Matern0, 2.0).unwrap();
        assert_eq!(m0.deriv1(0.5, 0.5), 0.0);
        let w0 = Kernel1D::new(KernelFamily::Wendland0, 1.0).unwrap();
        assert_eq!(w0.deriv1(0.2, 0.2), 0.0);
        // Outside the support the kernel is constant zero.
        assert_eq!(w0.deriv1(3.0, 0.0), 0.0);
    }

    #[test]
    fn rescaling_epsilon_equals_rescaling_inputs() {
        for family in [
            KernelFamily::Gaussian,
            KernelFamily::Matern0,
            KernelFamily::MaternQuadratic,
            KernelFamily::Wendland0,
        ] {
            let sigma = 0.37;
            let base = Kernel1D::new(family, 1.0).unwrap();
            let scaled = Kernel1D::new(family, sigma).unwrap();
            for (x, y) in [(0.1, 0.9), (-1.0, 2.5), (0.0, 0.3)] {
                let lhs = scaled.eval(x, y);
                let rhs = base.eval(sigma * x, sigma * y);
                assert!((lhs - rhs).abs() <= 1e-15 * (1.0 + lhs.abs()));
            }
        }
    }
}
