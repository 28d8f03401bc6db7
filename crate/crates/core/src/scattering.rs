//! Scattering maps `σ: V⁻ → V⁺`, the canonical linear map `σ*`, and checks
//! for conservation, admissibility and the Jacobian PDE
//! `det Dσ(V) = ±H(V)/H(σ(V))`.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use num_rational::Ratio;

use crate::error::{invalid, Error, Result};
use crate::geometry::{cone_gap, cone_membership, conserved_quantities, Side, MAX_BODIES, MIN_BODIES};
use crate::linalg::{central_jacobian, gram_schmidt, Matrix};
use crate::math;
use crate::rng;

/// A user-supplied scattering map.
///
/// Only `eval` is required. Without `inverse`, flows backwards in time use
/// `σ⁻¹(W) = −σ(−W)`; without `jacobian`, finite differences are used.
pub trait CustomMap: Send + Sync {
    fn name(&self) -> &str;
    fn eval(&self, v: &[f64]) -> Vec<f64>;
    fn inverse(&self, _w: &[f64]) -> Option<Vec<f64>> {
        None
    }
    /// Whether `inverse` returns a value.
    fn has_inverse(&self) -> bool {
        false
    }
    fn jacobian(&self, _v: &[f64]) -> Option<Matrix> {
        None
    }
    /// Region where `eval` is smooth. Defaults to the open pre-collisional
    /// cone.
    fn differentiable_at(&self, v: &[f64]) -> bool {
        cone_gap(v, Side::Pre) > 0.0
    }
}

/// An invertible `N × N` matrix acting on velocities.
#[derive(Clone, PartialEq)]
pub struct LinearMap {
    name: String,
    matrix: Matrix,
    inverse: Matrix,
}

impl LinearMap {
    pub fn new(name: &str, matrix: Matrix) -> Result<Self> {
        if !matrix.is_square() {
            return Err(invalid("scattering matrix must be square"));
        }
        if !(MIN_BODIES..=MAX_BODIES).contains(&matrix.rows()) {
            return Err(invalid("scattering matrix size must be between 3 and 64"));
        }
        if !matrix.to_rows().iter().flatten().all(|a| a.is_finite()) {
            return Err(invalid("non-finite matrix entry"));
        }
        let inverse = matrix.inverse()?;
        Ok(Self { name: String::from(name), matrix, inverse })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n(&self) -> usize {
        self.matrix.rows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn inverse_matrix(&self) -> &Matrix {
        &self.inverse
    }
}

impl fmt::Debug for LinearMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LinearMap").field("name", &self.name).field("matrix", &self.matrix).finish()
    }
}

#[derive(Clone)]
pub enum ScatteringMap {
    /// `σ*(V) = (2/N) 1 1ᵀ V − V`.
    SigmaStar,
    /// `(v_1, …, v_N) ↦ (v_N, …, v_1)`.
    Reversal,
    /// `V ↦ −V`.
    Negation,
    Linear(LinearMap),
    Custom(Arc<dyn CustomMap>),
}

impl fmt::Debug for ScatteringMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Linear(m) => m.fmt(f),
            other => f.write_str(other.name()),
        }
    }
}

impl ScatteringMap {
    pub fn name(&self) -> &str {
        match self {
            Self::SigmaStar => "sigma-star",
            Self::Reversal => "reversal",
            Self::Negation => "negation",
            Self::Linear(m) => m.name(),
            Self::Custom(c) => c.name(),
        }
    }

    /// Fixed dimension, if the map has one.
    pub fn dimension(&self) -> Option<usize> {
        match self {
            Self::Linear(m) => Some(m.n()),
            _ => None,
        }
    }

    fn check_dim(&self, n: usize) -> Result<()> {
        if !(MIN_BODIES..=MAX_BODIES).contains(&n) {
            return Err(invalid("number of bodies must be between 3 and 64"));
        }
        match self.dimension() {
            Some(d) if d != n => Err(invalid("velocity length does not match the scattering matrix")),
            _ => Ok(()),
        }
    }

    /// `σ(v)` without the domain check. Panics on a dimension mismatch for
    /// linear maps; use [`ScatteringMap::apply`] for checked evaluation.
    pub fn eval(&self, v: &[f64]) -> Vec<f64> {
        match self {
            Self::SigmaStar => {
                let n = v.len() as f64;
                let s: f64 = v.iter().sum();
                v.iter().map(|vi| 2.0 * s / n - vi).collect()
            }
            Self::Reversal => v.iter().rev().copied().collect(),
            Self::Negation => v.iter().map(|a| -a).collect(),
            Self::Linear(m) => m.matrix.mul_vec(v),
            Self::Custom(c) => c.eval(v),
        }
    }

    /// `σ⁻¹(w)` without the domain check. Falls back to `−σ(−w)` for
    /// custom maps without a registered inverse.
    pub fn eval_inverse(&self, w: &[f64]) -> Vec<f64> {
        match self {
            Self::SigmaStar | Self::Reversal | Self::Negation => self.eval(w),
            Self::Linear(m) => m.inverse.mul_vec(w),
            Self::Custom(c) => c.inverse(w).unwrap_or_else(|| {
                let neg: Vec<f64> = w.iter().map(|a| -a).collect();
                c.eval(&neg).into_iter().map(|a| -a).collect()
            }),
        }
    }

    /// `σ(v)` written into `out`; allocation-free for the built-in and
    /// linear maps.
    pub fn eval_into(&self, v: &[f64], out: &mut [f64]) {
        match self {
            Self::SigmaStar => {
                let n = v.len() as f64;
                let s: f64 = v.iter().sum();
                for (o, vi) in out.iter_mut().zip(v) {
                    *o = 2.0 * s / n - vi;
                }
            }
            Self::Reversal => {
                for (o, vi) in out.iter_mut().zip(v.iter().rev()) {
                    *o = *vi;
                }
            }
            Self::Negation => {
                for (o, vi) in out.iter_mut().zip(v) {
                    *o = -vi;
                }
            }
            Self::Linear(m) => mul_into(&m.matrix, v, out),
            Self::Custom(c) => out.copy_from_slice(&c.eval(v)),
        }
    }

    /// `σ⁻¹(w)` written into `out`.
    pub fn eval_inverse_into(&self, w: &[f64], out: &mut [f64]) {
        match self {
            Self::SigmaStar | Self::Reversal | Self::Negation => self.eval_into(w, out),
            Self::Linear(m) => mul_into(&m.inverse, w, out),
            Self::Custom(_) => out.copy_from_slice(&self.eval_inverse(w)),
        }
    }

    /// True when the inverse is known in closed form rather than derived
    /// from admissibility.
    pub fn has_inverse(&self) -> bool {
        match self {
            Self::Custom(c) => c.has_inverse(),
            _ => true,
        }
    }

    /// Checked `σ(v)` for `v ∈ V⁻`.
    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(v.len())?;
        if !cone_membership(v, Side::Pre)? {
            return Err(Error::DomainViolation);
        }
        if let Self::Custom(c) = self {
            if !c.differentiable_at(v) {
                return Err(Error::DomainViolation);
            }
        }
        Ok(self.eval(v))
    }

    /// Checked `σ⁻¹(w)` for `w ∈ V⁺`.
    pub fn apply_inverse(&self, w: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(w.len())?;
        if !cone_membership(w, Side::Post)? {
            return Err(Error::DomainViolation);
        }
        Ok(self.eval_inverse(w))
    }

    /// The matrix of a linear map in dimension `n`.
    pub fn matrix(&self, n: usize) -> Result<Option<Matrix>> {
        self.check_dim(n)?;
        Ok(match self {
            Self::SigmaStar => Some(sigma_star_matrix(n)?),
            Self::Reversal => Some(Matrix::from_fn(n, n, |i, j| if i + j == n - 1 { 1.0 } else { 0.0 })),
            Self::Negation => Some(Matrix::identity(n).scale(-1.0)),
            Self::Linear(m) => Some(m.matrix.clone()),
            Self::Custom(_) => None,
        })
    }

    /// Analytic Jacobian `Dσ(v)`, if available.
    pub fn jacobian(&self, v: &[f64]) -> Result<Option<Matrix>> {
        match self {
            Self::Custom(c) => {
                self.check_dim(v.len())?;
                Ok(c.jacobian(v))
            }
            _ => self.matrix(v.len()),
        }
    }
}

fn mul_into(a: &Matrix, v: &[f64], out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate() {
        *o = a.row(i).iter().zip(v).map(|(x, y)| x * y).sum();
    }
}

/// Fixture: `σ*` with its first row scaled by `1.1`. Neither branch of the
/// Jacobian PDE holds for it.
pub fn scaled_row_fixture(n: usize) -> Result<LinearMap> {
    let mut a = sigma_star_matrix(n)?;
    for j in 0..n {
        a[(0, j)] *= 1.1;
    }
    LinearMap::new("scaled-row", a)
}

/// `σ*` as exact rationals: `2/n − 1` on the diagonal, `2/n` elsewhere.
pub fn sigma_star_exact(n: usize) -> Result<Vec<Vec<Ratio<i64>>>> {
    if !(MIN_BODIES..=MAX_BODIES).contains(&n) {
        return Err(invalid("sigma-star needs 3 <= n <= 64"));
    }
    let off = Ratio::new(2, n as i64);
    let diag = off - Ratio::from_integer(1);
    Ok((0..n).map(|i| (0..n).map(|j| if i == j { diag } else { off }).collect()).collect())
}

pub fn sigma_star_matrix(n: usize) -> Result<Matrix> {
    let exact = sigma_star_exact(n)?;
    Ok(Matrix::from_fn(n, n, |i, j| {
        let r = exact[i][j];
        *r.numer() as f64 / *r.denom() as f64
    }))
}

/// Rebuilds `σ*` from its spectral data: eigenvalue `+1` on `1` and `−1` on
/// the differences `E_i = e_i − e_{i+1}`. The basis `{1, E_1, …, E_{N−1}}`
/// is orthonormalised and `A = 1̂1̂ᵀ − Σ ê_k ê_kᵀ`.
pub fn sigma_star_via_spectral(n: usize) -> Result<Matrix> {
    if !(MIN_BODIES..=MAX_BODIES).contains(&n) {
        return Err(invalid("sigma-star needs 3 <= n <= 64"));
    }
    let mut basis = Vec::with_capacity(n);
    basis.push(alloc::vec![1.0; n]);
    for i in 0..n - 1 {
        let mut e = alloc::vec![0.0; n];
        e[i] = 1.0;
        e[i + 1] = -1.0;
        basis.push(e);
    }
    let q = gram_schmidt(&basis)?;
    let mut a = Matrix::outer(&q[0], &q[0]);
    for ek in &q[1..] {
        a = a.sub(&Matrix::outer(ek, ek));
    }
    Ok(a)
}

/// `H(W) = (Σ_{i<j} (w_i − w_j)²)^{1/2} / (Π_{i<j} (w_i − w_j)²)^{(N−2)/(N(N−1))}`.
///
/// The product is accumulated in log space.
pub fn h_weight(w: &[f64]) -> Result<f64> {
    let n = w.len();
    if n < 2 || !w.iter().all(|a| a.is_finite()) {
        return Err(invalid("weight needs at least two finite components"));
    }
    let mut sum_sq = 0.0;
    let mut log_prod = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let d = w[i] - w[j];
            if d == 0.0 {
                return Err(Error::SingularWeight);
            }
            sum_sq += d * d;
            log_prod += math::ln(d * d);
        }
    }
    let nf = n as f64;
    let expo = (nf - 2.0) / (nf * (nf - 1.0));
    Ok(math::sqrt(sum_sq) * math::exp(-expo * log_prod))
}

/// Central-difference Jacobian of `σ` at an interior `v ∈ V⁻`.
pub fn finite_diff_jacobian(map: &ScatteringMap, v: &[f64], h: f64) -> Result<Matrix> {
    map.check_dim(v.len())?;
    if !(h.is_finite() && h > 0.0) {
        return Err(invalid("finite-difference step must be positive"));
    }
    // Distance from v to the nearest facet v_i = v_{i+1}.
    let distance = cone_gap(v, Side::Pre) / core::f64::consts::SQRT_2;
    if distance <= h {
        return Err(Error::StepTooLarge { step: h, distance });
    }
    Ok(central_jacobian(|p| map.eval(p), v, h))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum JacobianMethod {
    /// Use the analytic Jacobian, falling back to finite differences with
    /// step `1e-6` when the map has none.
    Analytic,
    FiniteDiff(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdeOptions {
    pub method: JacobianMethod,
    /// A branch is chosen only if its max residual is below this.
    pub threshold: f64,
}

impl Default for PdeOptions {
    fn default() -> Self {
        Self { method: JacobianMethod::Analytic, threshold: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PdeResidualReport {
    pub max_abs_residual_plus: f64,
    pub max_abs_residual_minus: f64,
    /// `+1`, `−1`, or `None` if neither branch is below the threshold.
    pub chosen_sign: Option<i8>,
    pub samples: usize,
    /// Samples dropped because a weight was singular.
    pub skipped: usize,
}

/// Residuals `|det Dσ(V) ∓ H(V)/H(σ(V))|`, normalised by `H(V)/H(σ(V))`.
pub fn pde_residual(map: &ScatteringMap, samples: &[Vec<f64>], opts: &PdeOptions) -> Result<PdeResidualReport> {
    let mut plus: f64 = 0.0;
    let mut minus: f64 = 0.0;
    let mut used = 0;
    let mut skipped = 0;
    for v in samples {
        let w = map.apply(v)?;
        let ratio = match (h_weight(v), h_weight(&w)) {
            (Ok(a), Ok(b)) => a / b,
            (Err(Error::SingularWeight), _) | (_, Err(Error::SingularWeight)) => {
                skipped += 1;
                continue;
            }
            (Err(e), _) | (_, Err(e)) => return Err(e),
        };
        let jac = match opts.method {
            JacobianMethod::Analytic => match map.jacobian(v)? {
                Some(j) => j,
                None => finite_diff_jacobian(map, v, 1e-6)?,
            },
            JacobianMethod::FiniteDiff(h) => finite_diff_jacobian(map, v, h)?,
        };
        let det = jac.det();
        plus = plus.max((det - ratio).abs() / ratio);
        minus = minus.max((det + ratio).abs() / ratio);
        used += 1;
    }
    if used == 0 {
        return Err(invalid("no usable samples for the PDE residual"));
    }
    let best = if plus <= minus { (plus, 1) } else { (minus, -1) };
    let chosen_sign = (best.0 <= opts.threshold).then_some(best.1);
    Ok(PdeResidualReport {
        max_abs_residual_plus: plus,
        max_abs_residual_minus: minus,
        chosen_sign,
        samples: used,
        skipped,
    })
}

/// `count` interior points of the pre-collisional cone with adjacent gaps at
/// least `min_gap`, drawn deterministically from `seed`.
pub fn sample_cone(n: usize, side: Side, count: usize, seed: u64, min_gap: f64) -> Vec<Vec<f64>> {
    let mut r = rng::block_rng(rng::mix(seed, rng::tag("cone-samples")), n as u64);
    (0..count).map(|_| rng::sample_cone_interior(&mut r, n, side, min_gap)).collect()
}

/// Default adjacent-gap margin for cone sampling.
pub const DEFAULT_MIN_GAP: f64 = 1e-3;

/// Exact facet verdicts for a linear map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LinearFacets {
    /// `Aᵀ1 = 1`: momentum is conserved for every `V`.
    pub momentum: bool,
    /// `AᵀA = I`: energy is conserved for every `V`.
    pub energy: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConservationReport {
    pub n: usize,
    pub samples: usize,
    /// `max |P(σV) − P(V)| / Σ|v_i|`.
    pub max_momentum_dev: f64,
    /// `max |E(σV) − E(V)| / E(V)`.
    pub max_energy_dev: f64,
    pub facets: Option<LinearFacets>,
}

impl ConservationReport {
    pub fn conserves(&self, tol: f64) -> (bool, bool) {
        let by_samples = (self.max_momentum_dev <= tol, self.max_energy_dev <= tol);
        match self.facets {
            Some(f) => (by_samples.0 && f.momentum, by_samples.1 && f.energy),
            None => by_samples,
        }
    }
}

/// Tolerance for the floating-point facet checks on matrix entries.
const FACET_TOL: f64 = 1e-12;

pub fn conservation_check(map: &ScatteringMap, n: usize, n_samples: usize, seed: u64) -> Result<ConservationReport> {
    map.check_dim(n)?;
    let mut dp: f64 = 0.0;
    let mut de: f64 = 0.0;
    let samples = sample_cone(n, Side::Pre, n_samples, seed, DEFAULT_MIN_GAP);
    for v in &samples {
        let w = map.apply(v)?;
        let (p0, e0) = conserved_quantities(v);
        let (p1, e1) = conserved_quantities(&w);
        let l1: f64 = v.iter().map(|a| a.abs()).sum();
        dp = dp.max((p1 - p0).abs() / l1.max(f64::MIN_POSITIVE));
        de = de.max((e1 - e0).abs() / e0.max(f64::MIN_POSITIVE));
    }
    let facets = map.matrix(n)?.map(|a| {
        let scale = a.max_abs().max(1.0);
        let col_sums_one = (0..n).all(|j| {
            let s: f64 = (0..n).map(|i| a[(i, j)]).sum();
            (s - 1.0).abs() <= FACET_TOL * scale * n as f64
        });
        let ata = a.transpose().mul(&a);
        LinearFacets {
            momentum: col_sums_one,
            energy: ata.max_abs_diff(&Matrix::identity(n)) <= FACET_TOL * scale * scale * n as f64,
        }
    });
    Ok(ConservationReport { n, samples: samples.len(), max_momentum_dev: dp, max_energy_dev: de, facets })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdmissibilityReport {
    pub n: usize,
    pub samples: usize,
    /// `max_W |σ⁻¹(W) + σ(−W)|_∞ / |W|_∞` over sampled `W ∈ V⁺`.
    pub max_deviation: f64,
    /// For linear maps: whether `A` maps `V⁻` onto `V⁺`, decided on the
    /// generators of both cones.
    pub cone_onto: Option<bool>,
}

fn in_post(w: &[f64], tol: f64) -> bool {
    w.windows(2).all(|p| p[1] - p[0] >= -tol)
}

fn in_pre(w: &[f64], tol: f64) -> bool {
    w.windows(2).all(|p| p[0] - p[1] >= -tol)
}

fn is_multiple_of_ones(w: &[f64], tol: f64) -> bool {
    w.iter().all(|a| (a - w[0]).abs() <= tol)
}

/// Checks that a linear map sends `V⁻` onto `V⁺` using the cone generators:
/// `V⁻` is spanned by `±1` and the rays `r_k = e_1 + … + e_k`, `V⁺` by `±1`
/// and `s_k = e_{k+1} + … + e_N`.
pub fn linear_cone_onto(a: &Matrix, a_inv: &Matrix) -> bool {
    let n = a.rows();
    let tol = FACET_TOL * a.max_abs().max(a_inv.max_abs()).max(1.0) * n as f64;
    let ones = alloc::vec![1.0; n];
    if !is_multiple_of_ones(&a.mul_vec(&ones), tol) || !is_multiple_of_ones(&a_inv.mul_vec(&ones), tol) {
        return false;
    }
    (1..n).all(|k| {
        let r: Vec<f64> = (0..n).map(|i| if i < k { 1.0 } else { 0.0 }).collect();
        let s: Vec<f64> = (0..n).map(|i| if i >= k { 1.0 } else { 0.0 }).collect();
        in_post(&a.mul_vec(&r), tol) && in_pre(&a_inv.mul_vec(&s), tol)
    })
}

/// Measures the admissibility defect `σ⁻¹(W) + σ(−W)` on samples of `V⁺`.
/// Requires a map with a known inverse.
pub fn admissibility_check(map: &ScatteringMap, n: usize, n_samples: usize, seed: u64) -> Result<AdmissibilityReport> {
    map.check_dim(n)?;
    if !map.has_inverse() {
        return Err(invalid("admissibility check needs an inverse evaluation"));
    }
    let samples = sample_cone(n, Side::Post, n_samples, seed, DEFAULT_MIN_GAP);
    let mut dev: f64 = 0.0;
    for w in &samples {
        let inv = map.eval_inverse(w);
        let neg: Vec<f64> = w.iter().map(|a| -a).collect();
        let img = map.eval(&neg);
        let scale = w.iter().fold(0.0f64, |m, a| m.max(a.abs())).max(f64::MIN_POSITIVE);
        let d = inv.iter().zip(&img).fold(0.0f64, |m, (a, b)| m.max((a + b).abs()));
        dev = dev.max(d / scale);
    }
    let cone_onto = match map.matrix(n)? {
        Some(a) => Some(linear_cone_onto(&a, &a.inverse()?)),
        None => None,
    };
    Ok(AdmissibilityReport { n, samples: samples.len(), max_deviation: dev, cone_onto })
}
