//! Closed-form identities of the chart, reduced flows and surface density,
//! each checked against a finite-difference or direct numeric evaluation.

use alloc::vec::Vec;

use num_rational::Ratio;
use rand::Rng;

use crate::error::{invalid, Result};
use crate::flow::{
    classify_chart, coords_jacobian, reduced_flow_coords, reduced_flow_sigma_coords, scattering_flow_jacobian_closed_form,
    shear_jacobian_closed_form, Region,
};
use crate::geometry::{velocity_map, ChartPoint, Side};
use crate::math::{self, rel_err};
use crate::measure::{gram_density_oracle, sample_chart, surface_density_coords};
use crate::rng;
use crate::scattering::{pde_residual, sample_cone, sigma_star_exact, sigma_star_matrix, sigma_star_via_spectral, PdeOptions, ScatteringMap, DEFAULT_MIN_GAP};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Identity {
    /// Closed-form `ω` against `√det(DΨᵀDΨ)`.
    GramDensity,
    /// Shear Jacobian against the finite-difference determinant.
    ShearJacobian,
    /// Scattered reduced-flow Jacobian against the finite-difference
    /// determinant.
    SigmaFlowJacobian,
    /// `ω ∘ T̃^{−t}` in terms of `ω`.
    ShearDensity,
    /// The pairwise shear ratio is the same for every pair.
    PairRatios,
    /// `ω` in terms of `ω ∘ T̃^t_σ`.
    SigmaFlowDensity,
    /// `(x_i − x_j)/(x_1 − x_2) = (ψ_i − ψ_j)/(u_1 − u_2)`.
    VelocityRatio,
    /// `ψ̄ ∘ T̃^{−t} = ψ̄`.
    ReducedVelocity,
}

pub const ALL_IDENTITIES: [Identity; 8] = [
    Identity::GramDensity,
    Identity::ShearJacobian,
    Identity::SigmaFlowJacobian,
    Identity::ShearDensity,
    Identity::PairRatios,
    Identity::SigmaFlowDensity,
    Identity::VelocityRatio,
    Identity::ReducedVelocity,
];

impl Identity {
    pub fn name(self) -> &'static str {
        match self {
            Self::GramDensity => "surface_density_gram",
            Self::ShearJacobian => "shear_jacobian",
            Self::SigmaFlowJacobian => "sigma_flow_jacobian",
            Self::ShearDensity => "shear_density_comparison",
            Self::PairRatios => "pair_ratio_invariance",
            Self::SigmaFlowDensity => "sigma_flow_density_comparison",
            Self::VelocityRatio => "velocity_ratio",
            Self::ReducedVelocity => "reduced_velocity_invariance",
        }
    }

    pub fn tolerance(self) -> f64 {
        match self {
            Self::GramDensity => 1e-6,
            Self::ShearJacobian => 1e-5,
            Self::SigmaFlowJacobian => 1e-4,
            Self::ShearDensity => 1e-8,
            Self::PairRatios => 1e-10,
            Self::SigmaFlowDensity => 1e-6,
            Self::VelocityRatio => 1e-10,
            Self::ReducedVelocity => 1e-10,
        }
    }

    /// Whether the identity holds at `(ζ, t)`'s region, with `margin`
    /// keeping the sample away from the singular strata it involves.
    fn admits(self, zeta: &ChartPoint, t: f64, margin: f64) -> bool {
        let (x, u) = (&zeta.x, zeta.u);
        let dx = x[0] - x[1];
        let fwd = x[0] + t * u[0] - x[1] - t * u[1];
        let back = x[0] - t * u[0] - x[1] + t * u[1];
        match self {
            Self::GramDensity | Self::VelocityRatio => true,
            Self::ShearJacobian | Self::PairRatios => {
                classify_chart(zeta, t) == Region::Minus && (fwd / dx).abs() >= margin
            }
            Self::ShearDensity | Self::ReducedVelocity => {
                classify_chart(zeta, -t) == Region::Minus && (back / dx).abs() >= margin
            }
            Self::SigmaFlowJacobian | Self::SigmaFlowDensity => {
                let tau = (x[1] - x[0]) / (u[0] - u[1]);
                let forward_only = self == Self::SigmaFlowDensity;
                (t > 0.0 || !forward_only)
                    && classify_chart(zeta, t) == Region::Plus
                    && tau.abs() >= margin
                    && (t - tau).abs() >= margin
            }
        }
    }
}

/// Relative error of one identity at `(ζ, t)`. `map` is used by the
/// scattered-flow rows.
pub fn identity_error(id: Identity, zeta: &ChartPoint, t: f64, map: &ScatteringMap, h: f64) -> Result<f64> {
    let n = zeta.n();
    let (x, u) = (&zeta.x, zeta.u);
    let psi = velocity_map(x, u);
    let du = u[0] - u[1];
    let dx = x[0] - x[1];
    let half = (n as f64 - 2.0) / 2.0;
    Ok(match id {
        Identity::GramDensity => {
            let a = surface_density_coords(x, u);
            rel_err(a, gram_density_oracle(zeta, h)?, 0.0)
        }
        Identity::ShearJacobian => {
            let fd = coords_jacobian(|z| reduced_flow_coords(z, t), &zeta.to_vec(), h).det();
            rel_err(shear_jacobian_closed_form(zeta, t), fd, 0.0)
        }
        Identity::SigmaFlowJacobian => {
            let fd = coords_jacobian(|z| reduced_flow_sigma_coords(map, z, t), &zeta.to_vec(), h).det();
            rel_err(scattering_flow_jacobian_closed_form(map, zeta, t)?, fd, 0.0)
        }
        Identity::ShearDensity => {
            let back = reduced_flow_coords(&zeta.to_vec(), -t);
            let lhs = surface_density_coords(&back[..n], u);
            let d = x[0] - t * u[0] - x[1] + t * u[1];
            let rhs = math::powi((dx / d).abs(), n as i32 - 2)
                * math::powf((du * du + d * d) / (du * du + dx * dx), half)
                * surface_density_coords(x, u);
            rel_err(lhs, rhs, 0.0)
        }
        Identity::PairRatios => {
            let d = x[0] - t * u[0] - x[1] + t * u[1];
            let base = (du * du + d * d) / (du * du + dx * dx);
            let mut worst: f64 = 0.0;
            for i in 0..n {
                for j in i + 1..n {
                    let (dp, dxx) = (psi[i] - psi[j], x[i] - x[j]);
                    let e = dxx - t * dp;
                    let r = (dp * dp + e * e) / (dp * dp + dxx * dxx);
                    worst = worst.max(rel_err(base, r, 0.0));
                }
            }
            worst
        }
        Identity::SigmaFlowDensity => {
            let out = reduced_flow_sigma_coords(map, &zeta.to_vec(), t);
            let s = map.eval(&psi);
            let d = x[0] + t * u[0] - x[1] - t * u[1];
            let pair_sum = |w: &[f64]| {
                let mut acc = 0.0;
                for i in 0..w.len() {
                    for j in 0..i {
                        let q = w[i] - w[j];
                        acc += q * q;
                    }
                }
                acc
            };
            let rhs = math::powf((du * du + dx * dx) / (du * du + d * d), half)
                * math::powi((d / dx).abs(), n as i32 - 2)
                * ((s[0] - s[1]) / dx).abs()
                * math::sqrt(pair_sum(x) / pair_sum(&s))
                * surface_density_coords(&out[..n], [out[n], out[n + 1]]);
            rel_err(surface_density_coords(x, u), rhs, 0.0)
        }
        Identity::VelocityRatio => {
            let mut worst: f64 = 0.0;
            for i in 0..n {
                for j in i + 1..n {
                    let a = (x[i] - x[j]) / dx;
                    let b = (psi[i] - psi[j]) / du;
                    worst = worst.max(rel_err(a, b, f64::MIN_POSITIVE));
                }
            }
            worst
        }
        Identity::ReducedVelocity => {
            let back = reduced_flow_coords(&zeta.to_vec(), -t);
            let psi_back = velocity_map(&back[..n], u);
            (2..n).fold(0.0, |m: f64, i| m.max(rel_err(psi_back[i], psi[i], 1.0)))
        }
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentityRow {
    pub name: &'static str,
    pub n_samples: usize,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentityScorecard {
    pub seed: u64,
    pub dims: Vec<usize>,
    pub n_per_identity: usize,
    pub rows: Vec<IdentityRow>,
    /// The same identities on samples within `margin / 10` of a singular
    /// stratum, at 100× the tolerance.
    pub near_singular: Vec<IdentityRow>,
    pub pass: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuiteOptions {
    /// Distance kept from singular strata (position gaps, `u_1 = u_2`,
    /// the collision time).
    pub margin: f64,
    /// Finite-difference step.
    pub h: f64,
    pub near_singular: bool,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self { margin: 0.05, h: 1e-6, near_singular: true }
    }
}

/// Moves one randomly chosen gap (an adjacent position gap or `u_1 − u_2`)
/// to within `[s, 2s)` of zero.
fn squeeze<R: Rng + ?Sized>(r: &mut R, zeta: &mut ChartPoint, s: f64) {
    let n = zeta.n();
    let k = r.random_range(0..n);
    let g = s * (1.0 + r.random::<f64>());
    if k == n - 1 {
        let sign = if zeta.u[0] >= zeta.u[1] { 1.0 } else { -1.0 };
        zeta.u[1] = zeta.u[0] - sign * g;
    } else {
        let shift = zeta.x[k] + g - zeta.x[k + 1];
        for xi in &mut zeta.x[k + 1..] {
            *xi += shift;
        }
    }
}

fn run_row(id: Identity, n_per: usize, dims: &[usize], seed: u64, opts: &SuiteOptions, stress: bool) -> Result<IdentityRow> {
    let map = ScatteringMap::SigmaStar;
    let (margin, tol) = if stress { (opts.margin / 10.0, id.tolerance() * 100.0) } else { (opts.margin, id.tolerance()) };
    let label = if stress { "near-singular" } else { "interior" };
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for &n in dims {
        let stream = rng::mix(rng::mix(seed, rng::tag(id.name())), rng::tag(label));
        let mut r = rng::block_rng(stream, n as u64);
        let mut done = 0;
        let mut tries = 0usize;
        while done < n_per {
            tries += 1;
            if tries > 1000 * n_per.max(1) {
                return Err(invalid("identity sampler could not find admissible points"));
            }
            let mut zeta = sample_chart(&mut r, n, opts.margin);
            if stress {
                squeeze(&mut r, &mut zeta, margin);
            }
            let t = r.random_range(-3.0..3.0);
            if !id.admits(&zeta, t, margin) {
                continue;
            }
            let e = identity_error(id, &zeta, t, &map, opts.h)?;
            worst = if e.is_nan() { f64::INFINITY } else { worst.max(e) };
            done += 1;
        }
        count += done;
    }
    Ok(IdentityRow { name: id.name(), n_samples: count, max_rel_error: worst, tolerance: tol, pass: worst <= tol })
}

/// Runs all eight identities on `n_per_identity` samples for each `N` in
/// `dims`. Deterministic in `(seed, dims, n_per_identity, opts)`.
pub fn run_suite(n_per_identity: usize, dims: &[usize], seed: u64, opts: &SuiteOptions) -> Result<IdentityScorecard> {
    if dims.is_empty() || dims.iter().any(|n| !(3..=8).contains(n)) {
        return Err(invalid("identity suite dimensions must lie in 3..=8"));
    }
    let rows = ALL_IDENTITIES
        .iter()
        .map(|&id| run_row(id, n_per_identity, dims, seed, opts, false))
        .collect::<Result<Vec<_>>>()?;
    let near_singular = if opts.near_singular {
        ALL_IDENTITIES
            .iter()
            .map(|&id| run_row(id, n_per_identity, dims, seed, opts, true))
            .collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };
    let pass = rows.len() == ALL_IDENTITIES.len() && rows.iter().chain(&near_singular).all(|r| r.pass);
    Ok(IdentityScorecard { seed, dims: dims.to_vec(), n_per_identity, rows, near_singular, pass })
}

type Q = Ratio<i128>;

fn exact_matrix(n: usize) -> Result<Vec<Vec<Q>>> {
    Ok(sigma_star_exact(n)?
        .into_iter()
        .map(|row| row.into_iter().map(|r| Q::new(*r.numer() as i128, *r.denom() as i128)).collect())
        .collect())
}

fn exact_mul(a: &[Vec<Q>], b: &[Vec<Q>]) -> Vec<Vec<Q>> {
    let n = a.len();
    (0..n)
        .map(|i| (0..n).map(|j| (0..n).fold(Q::from_integer(0), |s, k| s + a[i][k] * b[k][j])).collect())
        .collect()
}

fn is_identity(a: &[Vec<Q>]) -> bool {
    a.iter().enumerate().all(|(i, row)| {
        row.iter().enumerate().all(|(j, v)| *v == if i == j { Q::from_integer(1) } else { Q::from_integer(0) })
    })
}

/// Determinant by rational Gaussian elimination.
fn exact_det(mut a: Vec<Vec<Q>>) -> Q {
    let n = a.len();
    let zero = Q::from_integer(0);
    let mut det = Q::from_integer(1);
    for k in 0..n {
        let Some(p) = (k..n).find(|&i| a[i][k] != zero) else {
            return zero;
        };
        if p != k {
            a.swap(p, k);
            det = -det;
        }
        det *= a[k][k];
        let (top, rest) = a.split_at_mut(k + 1);
        let pivot = &top[k];
        for row in rest.iter_mut() {
            let f = row[k] / pivot[k];
            for (x, &p) in row[k..n].iter_mut().zip(&pivot[k..n]) {
                *x -= f * p;
            }
        }
    }
    det
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertificateEntry {
    pub n: usize,
    /// `max |spectral − explicit|`.
    pub spectral_max_diff: f64,
    /// `A*1 = 1` and `A*E_i = −E_i`, exactly.
    pub eigen_action: bool,
    /// Exact determinant as `(numerator, denominator)`.
    pub det: (i128, i128),
    pub det_ok: bool,
    /// Max PDE residual on the `(−1)^{N−1}` branch, analytic Jacobian.
    pub pde_residual: f64,
    /// `A*ᵀ1 = 1`, exactly.
    pub momentum: bool,
    /// `A*ᵀA* = I`, exactly.
    pub energy: bool,
    /// `A*² = I`, exactly: `σ⁻¹(W) = −σ(−W)`.
    pub involution: bool,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub entries: Vec<CertificateEntry>,
    pub pass: bool,
}

/// Exact and numeric facts about `σ*` for each `N` in `dims`.
pub fn sigma_star_certificate(dims: &[usize], pde_samples: usize, seed: u64) -> Result<Certificate> {
    if dims.is_empty() || dims.iter().any(|n| !(3..=10).contains(n)) {
        return Err(invalid("certificate dimensions must lie in 3..=10"));
    }
    let mut entries = Vec::new();
    for &n in dims {
        let a = exact_matrix(n)?;
        let one = Q::from_integer(1);
        let zero = Q::from_integer(0);
        let fixes_ones = a.iter().all(|row| row.iter().fold(zero, |s, v| s + v) == one);
        let negates_differences = (0..n - 1).all(|k| {
            // A (e_k − e_{k+1}) is column k minus column k+1.
            (0..n).all(|i| {
                let want = if i == k { -one } else if i == k + 1 { one } else { zero };
                a[i][k] - a[i][k + 1] == want
            })
        });
        let det = exact_det(a.clone());
        let expected = if n % 2 == 1 { one } else { -one };
        let at: Vec<Vec<Q>> = (0..n).map(|i| (0..n).map(|j| a[j][i]).collect()).collect();
        let momentum = at.iter().all(|row| row.iter().fold(zero, |s, v| s + v) == one);
        let energy = is_identity(&exact_mul(&at, &a));
        let involution = is_identity(&exact_mul(&a, &a));
        let spectral_max_diff = sigma_star_via_spectral(n)?.max_abs_diff(&sigma_star_matrix(n)?);
        let samples = sample_cone(n, Side::Pre, pde_samples, seed, DEFAULT_MIN_GAP);
        let rep = pde_residual(&ScatteringMap::SigmaStar, &samples, &PdeOptions::default())?;
        let pde = if n % 2 == 1 { rep.max_abs_residual_plus } else { rep.max_abs_residual_minus };
        let det_ok = det == expected;
        let pass = spectral_max_diff <= 1e-12
            && fixes_ones
            && negates_differences
            && det_ok
            && pde <= 1e-10
            && momentum
            && energy
            && involution;
        entries.push(CertificateEntry {
            n,
            spectral_max_diff,
            eigen_action: fixes_ones && negates_differences,
            det: (*det.numer(), *det.denom()),
            det_ok,
            pde_residual: pde,
            momentum,
            energy,
            involution,
            pass,
        });
    }
    let pass = entries.iter().all(|e| e.pass);
    Ok(Certificate { entries, pass })
}

/// One interior chart point of each dimension in `dims`.
pub fn example_points(dims: &[usize], seed: u64) -> Vec<ChartPoint> {
    let mut r = rng::block_rng(seed, 0);
    dims.iter().map(|&n| sample_chart(&mut r, n, 0.05)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_suite_passes() {
        let card = run_suite(200, &[3, 4, 5], 42, &SuiteOptions::default()).unwrap();
        for row in card.rows.iter().chain(&card.near_singular) {
            assert!(row.pass, "{row:?}");
        }
        assert_eq!(card.rows.len(), 8);
        assert!(card.pass);
    }

    #[test]
    fn suite_is_deterministic() {
        let a = run_suite(50, &[3, 4], 7, &SuiteOptions::default()).unwrap();
        let b = run_suite(50, &[3, 4], 7, &SuiteOptions::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn algebraic_rows_vanish_at_zero_time() {
        let map = ScatteringMap::SigmaStar;
        for zeta in example_points(&[3, 4, 5], 1) {
            for id in [Identity::ShearDensity, Identity::PairRatios, Identity::ReducedVelocity] {
                assert_eq!(identity_error(id, &zeta, 0.0, &map, 1e-6).unwrap(), 0.0, "{id:?}");
            }
            assert!(identity_error(Identity::ShearJacobian, &zeta, 0.0, &map, 1e-6).unwrap() <= 1e-9);
        }
    }

    #[test]
    fn certificate_passes() {
        let c = sigma_star_certificate(&[3, 4, 5, 6, 7, 8, 9, 10], 200, 1).unwrap();
        assert!(c.pass, "{c:?}");
        assert_eq!(c.entries[1].det, (-1, 1));
    }

    #[test]
    fn dims_are_validated() {
        assert!(run_suite(10, &[2], 1, &SuiteOptions::default()).is_err());
        assert!(sigma_star_certificate(&[11], 10, 1).is_err());
    }
}
