//! Billiard flow on the invariant manifold and its reduced chart form.
//!
//! On the interior of the manifold each trajectory has exactly one total
//! collision, at time `τ`. Flowing for time `t` either stays in free flight
//! or crosses `τ` and continues with the scattered velocity:
//!
//! ```text
//! free:      (X + tV, V)
//! scattered: (X + τV + (t − τ)σ(V), σ(V))        t > 0, τ ∈ (0, t]
//!            (X + τV + (t − τ)σ⁻¹(V), σ⁻¹(V))    t < 0, τ ∈ [t, 0)
//! ```

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::geometry::{interior_check, velocity_map, ChartPoint, PhasePoint, ToleranceConfig};
use crate::linalg::Matrix;
use crate::math;
use crate::scattering::{finite_diff_jacobian, ScatteringMap};

/// Whether the collision is crossed within the time window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    /// Not crossed: free flight.
    Minus,
    /// Crossed: the scattering map acts.
    Plus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Free,
    Scattered,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowResult {
    pub z: PhasePoint,
    pub branch: Branch,
    /// Collision time of the initial point.
    pub tau: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySample {
    pub times: Vec<f64>,
    pub states: Vec<PhasePoint>,
    pub tau: f64,
    /// `|X(τ⁻) − X(τ⁺)|_∞` when `τ` lies within the sampled window, else 0.
    pub continuity_defect: f64,
}

/// Collision time from chart coordinates.
#[inline]
fn chart_tau(x: &[f64], u: [f64; 2]) -> f64 {
    (x[1] - x[0]) / (u[0] - u[1])
}

fn region_of(x: &[f64], u: [f64; 2], t: f64) -> Region {
    let incoming = u[0] > u[1];
    let crossed = if t > 0.0 {
        incoming && chart_tau(x, u) <= t
    } else if t < 0.0 {
        !incoming && chart_tau(x, u) >= t
    } else {
        incoming
    };
    if crossed {
        Region::Plus
    } else {
        Region::Minus
    }
}

/// Region of the chart point `ζ` for a flow of duration `t`.
///
/// For `t > 0` the collision is crossed when `τ ∈ (0, t]`, for `t < 0` when
/// `τ ∈ [t, 0)`. At `t = 0` points heading into the collision (`u_1 > u_2`)
/// count as `Plus`.
pub fn classify_chart(zeta: &ChartPoint, t: f64) -> Region {
    region_of(&zeta.x, zeta.u, t)
}

pub fn classify_region(z: &PhasePoint, t: f64, tol: &ToleranceConfig) -> Result<Region> {
    interior_check(z, tol)?;
    Ok(region_of(&z.x, [z.v[0], z.v[1]], t))
}

fn shifted(x: &[f64], v: &[f64], t: f64) -> Vec<f64> {
    x.iter().zip(v).map(|(xi, vi)| xi + t * vi).collect()
}

fn scattered(x: &[f64], v: &[f64], w: &[f64], tau: f64, t: f64) -> Vec<f64> {
    (0..x.len()).map(|i| x[i] + tau * v[i] + (t - tau) * w[i]).collect()
}

/// The flow `T^t_σ(z)` from an interior point of the manifold.
pub fn flow_map(map: &ScatteringMap, z: &PhasePoint, t: f64, tol: &ToleranceConfig) -> Result<FlowResult> {
    if !t.is_finite() {
        return Err(crate::error::invalid("flow time must be finite"));
    }
    interior_check(z, tol).map_err(|e| match e {
        Error::BoundaryPoint => Error::BoundaryUnsupported,
        other => other,
    })?;
    let u = [z.v[0], z.v[1]];
    let tau = chart_tau(&z.x, u);
    match region_of(&z.x, u, t) {
        _ if t == 0.0 => Ok(FlowResult { z: z.clone(), branch: Branch::Free, tau: Some(tau) }),
        Region::Minus => Ok(FlowResult {
            z: PhasePoint { x: shifted(&z.x, &z.v, t), v: z.v.clone() },
            branch: Branch::Free,
            tau: Some(tau),
        }),
        Region::Plus => {
            let w = if t > 0.0 { map.apply(&z.v)? } else { map.apply_inverse(&z.v)? };
            Ok(FlowResult {
                z: PhasePoint { x: scattered(&z.x, &z.v, &w, tau, t), v: w },
                branch: Branch::Scattered,
                tau: Some(tau),
            })
        }
    }
}

/// Unchecked flow of `(x, v)` assumed to be an interior manifold point,
/// written into `out_x`, `out_v`. Returns the branch taken.
pub fn flow_into(map: &ScatteringMap, x: &[f64], v: &[f64], t: f64, out_x: &mut [f64], out_v: &mut [f64]) -> Branch {
    let u = [v[0], v[1]];
    if t == 0.0 || region_of(x, u, t) == Region::Minus {
        for i in 0..x.len() {
            out_x[i] = x[i] + t * v[i];
            out_v[i] = v[i];
        }
        return Branch::Free;
    }
    let tau = chart_tau(x, u);
    if t > 0.0 {
        map.eval_into(v, out_v);
    } else {
        map.eval_inverse_into(v, out_v);
    }
    for i in 0..x.len() {
        out_x[i] = x[i] + tau * v[i] + (t - tau) * out_v[i];
    }
    Branch::Scattered
}

/// Flow evaluated at each of the sorted `times`.
pub fn trajectory(map: &ScatteringMap, z: &PhasePoint, times: &[f64], tol: &ToleranceConfig) -> Result<TrajectorySample> {
    if !times.windows(2).all(|w| w[0] <= w[1]) {
        return Err(crate::error::invalid("times must be sorted"));
    }
    let states = times
        .iter()
        .map(|&t| flow_map(map, z, t, tol).map(|r| r.z))
        .collect::<Result<Vec<_>>>()?;
    let tau = chart_tau(&z.x, [z.v[0], z.v[1]]);
    let mut continuity_defect: f64 = 0.0;
    let spans_tau = times.first().is_some_and(|&a| a <= tau) && times.last().is_some_and(|&b| b >= tau);
    if spans_tau && tau != 0.0 {
        let before = shifted(&z.x, &z.v, tau);
        let after = flow_map(map, z, tau, tol)?.z.x;
        continuity_defect = before.iter().zip(&after).fold(0.0, |m, (a, b)| m.max((a - b).abs()));
    }
    Ok(TrajectorySample { times: times.to_vec(), states, tau, continuity_defect })
}

/// Reduced free flow `T̃^t(ζ) = (X + tψ(ζ), U)` on the minus region.
pub fn reduced_flow(zeta: &ChartPoint, t: f64) -> Result<ChartPoint> {
    if classify_chart(zeta, t) != Region::Minus && t != 0.0 {
        return Err(Error::WrongBranch);
    }
    let out = reduced_flow_coords(&zeta.to_vec(), t);
    Ok(split_chart(&out))
}

/// Reduced scattered flow on the plus region: positions
/// `x_i + τψ_i + (t − τ)σ_i(ψ)` and chart velocities `(σ_1, σ_2)`.
pub fn reduced_flow_sigma(map: &ScatteringMap, zeta: &ChartPoint, t: f64) -> Result<ChartPoint> {
    if classify_chart(zeta, t) != Region::Plus || t == 0.0 {
        return Err(Error::WrongBranch);
    }
    let psi = velocity_map(&zeta.x, zeta.u);
    if t > 0.0 {
        map.apply(&psi)?;
    } else {
        map.apply_inverse(&psi)?;
    }
    let out = reduced_flow_sigma_coords(map, &zeta.to_vec(), t);
    Ok(split_chart(&out))
}

/// Residual flow map: the velocity components `σ_3 … σ_N` that the chart
/// drops after scattering.
pub fn residual_flow(map: &ScatteringMap, zeta: &ChartPoint, t: f64) -> Result<Vec<f64>> {
    if classify_chart(zeta, t) != Region::Plus || t == 0.0 {
        return Err(Error::WrongBranch);
    }
    let psi = velocity_map(&zeta.x, zeta.u);
    let s = if t > 0.0 { map.apply(&psi)? } else { map.apply_inverse(&psi)? };
    Ok(s[2..].to_vec())
}

fn split_chart(z: &[f64]) -> ChartPoint {
    let n = z.len() - 2;
    ChartPoint { x: z[..n].to_vec(), u: [z[n], z[n + 1]] }
}

/// Unchecked free reduced flow on a flat `(x, u1, u2)` vector.
pub fn reduced_flow_coords(z: &[f64], t: f64) -> Vec<f64> {
    let n = z.len() - 2;
    let u = [z[n], z[n + 1]];
    let psi = velocity_map(&z[..n], u);
    let mut out = shifted(&z[..n], &psi, t);
    out.extend_from_slice(&u);
    out
}

/// Unchecked scattered reduced flow on a flat `(x, u1, u2)` vector. Uses `σ`
/// for `t > 0` and `σ⁻¹` for `t < 0`, whatever the region.
pub fn reduced_flow_sigma_coords(map: &ScatteringMap, z: &[f64], t: f64) -> Vec<f64> {
    let n = z.len() - 2;
    let x = &z[..n];
    let u = [z[n], z[n + 1]];
    let psi = velocity_map(x, u);
    let tau = chart_tau(x, u);
    let s = if t >= 0.0 { map.eval(&psi) } else { map.eval_inverse(&psi) };
    let mut out = scattered(x, &psi, &s, tau, t);
    out.push(s[0]);
    out.push(s[1]);
    out
}

/// `det DT̃^t(ζ) = ((x_1 + tu_1 − x_2 − tu_2)/(x_1 − x_2))^{N−2}`.
pub fn shear_jacobian_closed_form(zeta: &ChartPoint, t: f64) -> f64 {
    let (x, u) = (&zeta.x, zeta.u);
    let ratio = (x[0] + t * u[0] - x[1] - t * u[1]) / (x[0] - x[1]);
    math::powi(ratio, zeta.n() as i32 - 2)
}

fn det_jacobian(map: &ScatteringMap, v: &[f64]) -> Result<f64> {
    Ok(match map.jacobian(v)? {
        Some(j) => j.det(),
        None => finite_diff_jacobian(map, v, 1e-6)?.det(),
    })
}

/// `det DT̃^t_σ(ζ) = ((σ_1 − σ_2)/(u_1 − u_2)) · ((x_1 + tu_1 − x_2 − tu_2)/(x_1 − x_2))^{N−2} · det Dσ(ψ(ζ))`,
/// with `σ⁻¹` in place of `σ` when `t < 0`.
pub fn scattering_flow_jacobian_closed_form(map: &ScatteringMap, zeta: &ChartPoint, t: f64) -> Result<f64> {
    if zeta.x[0] == zeta.x[1] || zeta.u[0] == zeta.u[1] {
        return Err(Error::Singular("x1 = x2 or u1 = u2"));
    }
    let psi = velocity_map(&zeta.x, zeta.u);
    let (s, det) = if t >= 0.0 {
        (map.apply(&psi)?, det_jacobian(map, &psi)?)
    } else {
        let pre = map.apply_inverse(&psi)?;
        let det = match map.matrix(psi.len())? {
            Some(a) => a.inverse()?.det(),
            None => 1.0 / det_jacobian(map, &pre)?,
        };
        (pre, det)
    };
    Ok((s[0] - s[1]) / (zeta.u[0] - zeta.u[1]) * shear_jacobian_closed_form(zeta, t) * det)
}

/// Central-difference Jacobian of a coordinate map, for oracle checks.
pub fn coords_jacobian(f: impl Fn(&[f64]) -> Vec<f64>, z: &[f64], h: f64) -> Matrix {
    crate::linalg::central_jacobian(f, z, h)
}
