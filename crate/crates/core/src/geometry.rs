//! The ordered table, velocity cones, the invariant manifold and its chart.
//!
//! A phase point `(X, V)` is on the manifold when the planar points
//! `(x_i, v_i)` are collinear, so that free flight `X + tV` reaches a total
//! collision `c1` (or `V = c1` in the degenerate horizontal case). The chart
//! keeps the positions and the first two velocities and rebuilds the rest
//! from collinearity.

use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};

/// Smallest supported number of rods.
pub const MIN_BODIES: usize = 3;
/// Largest supported number of rods.
pub const MAX_BODIES: usize = 64;

/// Which velocity cone: pre-collisional (non-increasing) or post-collisional
/// (non-decreasing).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Pre,
    Post,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToleranceConfig {
    /// Relative tolerance of the collinearity test.
    pub tol_membership: f64,
    /// Tolerance for closed-form versus oracle comparisons.
    pub tol_identity: f64,
    /// Central finite-difference step.
    pub fd_step: f64,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        Self { tol_membership: 1e-10, tol_identity: 1e-8, fd_step: 1e-6 }
    }
}

impl ToleranceConfig {
    pub fn new(tol_membership: f64, tol_identity: f64, fd_step: f64) -> Result<Self> {
        let all_positive = [tol_membership, tol_identity, fd_step].iter().all(|t| t.is_finite() && *t > 0.0);
        if !all_positive {
            return Err(invalid("tolerances must be finite and strictly positive"));
        }
        if tol_membership < 10.0 * f64::EPSILON {
            return Err(invalid("tol_membership must be at least 10 machine epsilons"));
        }
        Ok(Self { tol_membership, tol_identity, fd_step })
    }
}

fn check_len(n: usize) -> Result<()> {
    if !(MIN_BODIES..=MAX_BODIES).contains(&n) {
        return Err(invalid("number of bodies must be between 3 and 64"));
    }
    Ok(())
}

fn check_finite(v: &[f64]) -> Result<()> {
    if v.iter().all(|a| a.is_finite()) {
        Ok(())
    } else {
        Err(invalid("non-finite entry"))
    }
}

/// A configuration–velocity pair `Z = (X, V)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePoint {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
}

impl PhasePoint {
    pub fn new(x: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if x.len() != v.len() {
            return Err(invalid("positions and velocities differ in length"));
        }
        check_len(x.len())?;
        check_finite(&x)?;
        check_finite(&v)?;
        Ok(Self { x, v })
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    /// `(x_1..x_N, v_1..v_N)` as one vector of length `2N`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut z = self.x.clone();
        z.extend_from_slice(&self.v);
        z
    }
}

/// Chart coordinates `ζ = (X, u1, u2)` with `X` strictly increasing and
/// `u1 ≠ u2`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartPoint {
    pub x: Vec<f64>,
    pub u: [f64; 2],
}

impl ChartPoint {
    pub fn new(x: Vec<f64>, u: [f64; 2]) -> Result<Self> {
        check_len(x.len())?;
        check_finite(&x)?;
        check_finite(&u)?;
        if !x.windows(2).all(|w| w[0] < w[1]) {
            return Err(invalid("chart positions must be strictly increasing"));
        }
        if u[0] == u[1] {
            return Err(invalid("chart velocities must differ (u1 ≠ u2)"));
        }
        Ok(Self { x, u })
    }

    /// Builds a chart point from a flat `(x_1..x_N, u_1, u_2)` slice.
    pub fn from_slice(z: &[f64]) -> Result<Self> {
        if z.len() < MIN_BODIES + 2 {
            return Err(invalid("chart vector too short"));
        }
        let n = z.len() - 2;
        Self::new(z[..n].to_vec(), [z[n], z[n + 1]])
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut z = self.x.clone();
        z.extend_from_slice(&self.u);
        z
    }
}

/// Closed membership in the table `x_1 ≤ x_2 ≤ … ≤ x_N`.
pub fn in_table(x: &[f64]) -> Result<bool> {
    check_len(x.len())?;
    check_finite(x)?;
    Ok(x.windows(2).all(|w| w[0] <= w[1]))
}

/// Strict membership: every adjacent gap exceeds `margin`.
pub fn in_table_interior(x: &[f64], margin: f64) -> Result<bool> {
    check_len(x.len())?;
    check_finite(x)?;
    Ok(x.windows(2).all(|w| w[1] - w[0] > margin))
}

/// Closed membership in the pre- (`v_i ≥ v_{i+1}`) or post-collisional
/// (`v_i ≤ v_{i+1}`) cone.
pub fn cone_membership(v: &[f64], side: Side) -> Result<bool> {
    check_finite(v)?;
    Ok(match side {
        Side::Pre => v.windows(2).all(|w| w[0] >= w[1]),
        Side::Post => v.windows(2).all(|w| w[0] <= w[1]),
    })
}

/// Strict cone membership with every adjacent gap exceeding `margin`.
pub fn cone_interior(v: &[f64], side: Side, margin: f64) -> Result<bool> {
    check_finite(v)?;
    Ok(match side {
        Side::Pre => v.windows(2).all(|w| w[0] - w[1] > margin),
        Side::Post => v.windows(2).all(|w| w[1] - w[0] > margin),
    })
}

/// Smallest adjacent gap of `v` measured in the direction of `side`.
pub fn cone_gap(v: &[f64], side: Side) -> f64 {
    v.windows(2)
        .map(|w| match side {
            Side::Pre => w[0] - w[1],
            Side::Post => w[1] - w[0],
        })
        .fold(f64::INFINITY, f64::min)
}

/// Collinearity test for the planar points `(x_i, v_i)`.
///
/// Every points is compared with the line through the most distant pair
/// `(a, b)`: `|(p_b − p_a) × (p_k − p_a)| ≤ tol · d_max²`. This bounds all
/// pairwise cross-differences `(v_i−v_j)(x_k−x_l) − (v_k−v_l)(x_i−x_j)` by a
/// constant multiple of the same tolerance.
pub fn on_manifold(z: &PhasePoint, tol: &ToleranceConfig) -> bool {
    collinear(&z.x, &z.v, tol.tol_membership)
}

pub(crate) fn collinear(x: &[f64], v: &[f64], tol: f64) -> bool {
    let n = x.len();
    let (mut a, mut b, mut d2max) = (0, 0, 0.0);
    for i in 0..n {
        for j in i + 1..n {
            let d2 = { let (a, b) = (x[i] - x[j], v[i] - v[j]); a * a + b * b };
            if d2 > d2max {
                (a, b, d2max) = (i, j, d2);
            }
        }
    }
    if d2max == 0.0 {
        return true;
    }
    let (dx, dv) = (x[b] - x[a], v[b] - v[a]);
    (0..n).all(|k| {
        let cross = dx * (v[k] - v[a]) - dv * (x[k] - x[a]);
        cross.abs() <= tol * d2max
    })
}

/// Velocity map `ψ`: `ψ_1 = u_1`, `ψ_2 = u_2` and
/// `ψ_i = ((x_i − x_2)u_1 − (x_i − x_1)u_2)/(x_1 − x_2)` for `i ≥ 3`.
///
/// Takes raw slices so that it can be evaluated (and differentiated) off the
/// open chart domain.
pub fn velocity_map(x: &[f64], u: [f64; 2]) -> Vec<f64> {
    let d = x[0] - x[1];
    let mut v = Vec::with_capacity(x.len());
    v.push(u[0]);
    v.push(u[1]);
    for &xi in &x[2..] {
        v.push(((xi - x[1]) * u[0] - (xi - x[0]) * u[1]) / d);
    }
    v
}

/// The chart `Ψ(ζ) = (X, ψ(ζ))`.
pub fn chart_forward(zeta: &ChartPoint) -> Result<PhasePoint> {
    if zeta.x[0] == zeta.x[1] {
        return Err(Error::SingularChart);
    }
    Ok(PhasePoint { x: zeta.x.clone(), v: velocity_map(&zeta.x, zeta.u) })
}

/// Inverse chart `(X, V) ↦ (X, (v_1, v_2))` on the interior of the manifold.
pub fn chart_inverse(z: &PhasePoint, tol: &ToleranceConfig) -> Result<ChartPoint> {
    interior_check(z, tol)?;
    Ok(ChartPoint { x: z.x.clone(), u: [z.v[0], z.v[1]] })
}

/// Errors unless `z` is an interior point of the manifold.
pub fn interior_check(z: &PhasePoint, tol: &ToleranceConfig) -> Result<()> {
    if !on_manifold(z, tol) || !z.x.windows(2).all(|w| w[0] <= w[1]) {
        return Err(Error::NotOnManifold);
    }
    if z.x.windows(2).any(|w| w[0] == w[1]) || z.v[0] == z.v[1] {
        return Err(Error::BoundaryPoint);
    }
    Ok(())
}

/// Collision time `τ = −(x_2 − x_1)/(v_2 − v_1)`; negative when the
/// collision lies in the past.
pub fn collision_time(z: &PhasePoint) -> Result<f64> {
    pair_collision_time(z, 0, 1)
}

/// Collision time read off the pair `(i, j)`.
pub fn pair_collision_time(z: &PhasePoint, i: usize, j: usize) -> Result<f64> {
    let dv = z.v[j] - z.v[i];
    if dv == 0.0 {
        return Err(Error::NoCollision);
    }
    Ok(-(z.x[j] - z.x[i]) / dv)
}

/// Linear momentum `Σ v_i` and energy `|V|²`.
pub fn conserved_quantities(v: &[f64]) -> (f64, f64) {
    (v.iter().sum(), v.iter().map(|a| a * a).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn pp(x: &[f64], v: &[f64]) -> PhasePoint {
        PhasePoint::new(x.to_vec(), v.to_vec()).unwrap()
    }

    #[test]
    fn table_membership() {
        assert!(in_table(&[0.0, 1.0, 2.0]).unwrap());
        assert!(!in_table(&[0.0, 2.0, 1.0]).unwrap());
        assert!(in_table(&[0.0, 0.0, 1.0]).unwrap());
        assert!(!in_table_interior(&[0.0, 0.0, 1.0], 0.0).unwrap());
        assert!(matches!(in_table(&[0.0, f64::NAN, 1.0]), Err(Error::InvalidInput(_))));
        assert!(in_table(&[0.0, 1.0]).is_err());
    }

    #[test]
    fn cones() {
        assert!(cone_membership(&[3.0, 2.0, 1.0], Side::Pre).unwrap());
        assert!(!cone_membership(&[1.0, 2.0, 3.0], Side::Pre).unwrap());
        assert!(cone_membership(&[1.0, 2.0, 3.0], Side::Post).unwrap());
        assert!(cone_membership(&[1.0, 1.0, 1.0], Side::Pre).unwrap());
        assert!(cone_membership(&[1.0, 1.0, 1.0], Side::Post).unwrap());
        assert!(!cone_interior(&[1.0, 1.0, 1.0], Side::Pre, 0.0).unwrap());
        assert!(cone_membership(&[f64::INFINITY, 1.0, 0.0], Side::Pre).is_err());
    }

    #[test]
    fn manifold_membership() {
        let tol = ToleranceConfig::default();
        assert!(on_manifold(&pp(&[0.0, 1.0, 2.0], &[3.0, 2.0, 1.0]), &tol));
        assert!(!on_manifold(&pp(&[0.0, 1.0, 2.0], &[3.0, 2.0, 0.0]), &tol));
        assert!(on_manifold(&pp(&[0.0, 1.0, 2.0], &[5.0, 5.0, 5.0]), &tol));
        assert!(on_manifold(&pp(&[1.0, 1.0, 1.0], &[5.0, 5.0, 5.0]), &tol));
    }

    #[test]
    fn chart_examples() {
        let zeta = ChartPoint::new(vec![0.0, 1.0, 2.0], [3.0, 2.0]).unwrap();
        let z = chart_forward(&zeta).unwrap();
        assert_eq!(z.v, vec![3.0, 2.0, 1.0]);
        assert!(ChartPoint::new(vec![0.0, 1.0, 2.0], [0.0, 0.0]).is_err());
        let tol = ToleranceConfig::default();
        assert_eq!(chart_inverse(&z, &tol).unwrap(), zeta);
        let boundary = pp(&[0.0, 1.0, 2.0], &[1.0, 1.0, 1.0]);
        assert_eq!(chart_inverse(&boundary, &tol), Err(Error::BoundaryPoint));
        let off = pp(&[0.0, 1.0, 2.0], &[3.0, 2.0, 0.0]);
        assert_eq!(chart_inverse(&off, &tol), Err(Error::NotOnManifold));
    }

    #[test]
    fn collision_time_examples() {
        assert_eq!(collision_time(&pp(&[0.0, 1.0, 2.0], &[3.0, 2.0, 1.0])).unwrap(), 1.0);
        assert_eq!(collision_time(&pp(&[0.0, 1.0, 2.0], &[1.0, 2.0, 3.0])).unwrap(), -1.0);
        assert_eq!(collision_time(&pp(&[0.0, 1.0, 2.0], &[2.0, 2.0, 2.0])), Err(Error::NoCollision));
    }

    #[test]
    fn conserved_quantities_examples() {
        assert_eq!(conserved_quantities(&[3.0, 2.0, 1.0]), (6.0, 14.0));
        assert_eq!(conserved_quantities(&[0.0, 0.0, 0.0]), (0.0, 0.0));
    }

    #[test]
    fn tolerance_validation() {
        assert!(ToleranceConfig::new(1e-10, 1e-8, 1e-6).is_ok());
        assert!(ToleranceConfig::new(1e-17, 1e-8, 1e-6).is_err());
        assert!(ToleranceConfig::new(1e-10, 0.0, 1e-6).is_err());
    }

    fn chart_strategy() -> impl Strategy<Value = ChartPoint> {
        (3usize..=6)
            .prop_flat_map(|n| {
                (
                    -5.0f64..5.0,
                    proptest::collection::vec(0.01f64..3.0, n - 1),
                    -5.0f64..5.0,
                    prop_oneof![-5.0f64..-0.01, 0.01f64..5.0],
                )
            })
            .prop_map(|(x0, gaps, u1, du)| {
                let mut x = vec![x0];
                for g in gaps {
                    let last = *x.last().unwrap();
                    x.push(last + g);
                }
                ChartPoint::new(x, [u1, u1 + du]).unwrap()
            })
    }

    proptest! {
        #[test]
        fn chart_round_trip(zeta in chart_strategy()) {
            let tol = ToleranceConfig::default();
            let z = chart_forward(&zeta).unwrap();
            prop_assert!(on_manifold(&z, &tol));
            let back = chart_inverse(&z, &tol).unwrap();
            prop_assert_eq!(&back.x, &zeta.x);
            prop_assert!((back.u[0] - zeta.u[0]).abs() <= 1e-12);
            prop_assert!((back.u[1] - zeta.u[1]).abs() <= 1e-12);
        }

        #[test]
        fn collision_time_is_pair_independent(zeta in chart_strategy()) {
            let z = chart_forward(&zeta).unwrap();
            let tau = collision_time(&z).unwrap();
            for i in 0..z.n() {
                for j in i + 1..z.n() {
                    if let Ok(tij) = pair_collision_time(&z, i, j) {
                        prop_assert!((tij - tau).abs() <= 1e-10 * (1.0 + tau.abs()));
                    }
                }
            }
        }

        #[test]
        fn cone_duality(v in proptest::collection::vec(-3.0f64..3.0, 3..8)) {
            let neg: Vec<f64> = v.iter().map(|a| -a).collect();
            prop_assert_eq!(cone_membership(&v, Side::Pre).unwrap(), cone_membership(&neg, Side::Post).unwrap());
        }
    }
}
