//! Deterministic midpoint-grid quadrature of `⟨μ, Φ⟩` and `⟨T^t # μ, Φ⟩`.
//!
//! Both integrals are taken over the exact chart box of `supp Φ`. The second
//! one is moved to the image side by the change of variables `ζ = T̃^{−t}(η)`:
//!
//! ```text
//! ⟨T^t # μ, Φ⟩ = ∫ Φ(Ψ(η)) ρω(T̃^{−t}(η)) |det D T̃^{−t}(η)| dη
//! ```
//!
//! with the branch of `T̃^{−t}` pinned at each node so the finite-difference
//! Jacobian never differences across the collision surface. Axis offsets are
//! irrational so that no node lands on that surface.

use hardline_core::flow::flow_into;
use hardline_core::geometry::velocity_map;
use hardline_core::linalg::central_jacobian;
use hardline_core::measure::surface_density_coords;
use hardline_core::{Branch, MeasureSpec, ScatteringMap, TestFunction};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub i0: f64,
    pub it: f64,
    /// Fraction of the `Φ`-weighted image nodes whose preimage is scattered.
    pub scattered_fraction: f64,
}

impl Quadrature {
    pub fn defect(&self) -> f64 {
        self.it - self.i0
    }
}

const PRIMES: [f64; 10] = [2.0, 3.0, 5.0, 7.0, 11.0, 13.0, 17.0, 19.0, 23.0, 29.0];

/// Preimage under `T̃^{−t}` on a fixed branch, in chart coordinates.
fn pull(map: &ScatteringMap, z: &[f64], t: f64, branch: Branch) -> Vec<f64> {
    let n = z.len() - 2;
    let x = &z[..n];
    let u = [z[n], z[n + 1]];
    let v = velocity_map(x, u);
    let (x0, v0): (Vec<f64>, Vec<f64>) = match branch {
        Branch::Free => (x.iter().zip(&v).map(|(a, b)| a - t * b).collect(), v),
        Branch::Scattered => {
            let tau = (x[1] - x[0]) / (u[0] - u[1]);
            let w = map.eval_inverse(&v);
            ((0..n).map(|i| x[i] + tau * v[i] + (-t - tau) * w[i]).collect(), w)
        }
    };
    let mut out = x0;
    out.extend([v0[0], v0[1]]);
    out
}

pub fn quadrature(measure: &MeasureSpec, phi: &TestFunction, map: &ScatteringMap, t: f64, m: usize) -> Quadrature {
    let n = phi.n();
    let d = n + 2;
    let r = phi.radius;
    let mut lo: Vec<f64> = phi.center.x.iter().map(|c| c - r).collect();
    lo.extend([phi.center.v[0] - r, phi.center.v[1] - r]);
    let h = 2.0 * r / m as f64;
    let offs: Vec<f64> = PRIMES[..d].iter().map(|p| (0.5 + p.sqrt()).fract()).collect();
    let (mut i0, mut it, mut scattered, mut weight) = (0.0, 0.0, 0.0, 0.0);
    let mut idx = vec![0usize; d];
    let mut z = vec![0.0; d];
    let (mut xb, mut vb) = (vec![0.0; n], vec![0.0; n]);
    'grid: loop {
        for k in 0..d {
            z[k] = lo[k] + h * (idx[k] as f64 + offs[k]);
        }
        let x = &z[..n];
        let u = [z[n], z[n + 1]];
        if x.windows(2).all(|w| w[0] < w[1]) {
            let v = velocity_map(x, u);
            let f = phi.eval(x, &v);
            if f > 0.0 {
                i0 += f * measure.density(x, &v) * surface_density_coords(x, u);
                let branch = flow_into(map, x, &v, -t, &mut xb, &mut vb);
                let jac = central_jacobian(|p| pull(map, p, t, branch), &z, 1e-6);
                let z0 = pull(map, &z, t, branch);
                let v0 = velocity_map(&z0[..n], [z0[n], z0[n + 1]]);
                let w0 = measure.density(&z0[..n], &v0) * surface_density_coords(&z0[..n], [z0[n], z0[n + 1]]);
                it += f * w0 * jac.det().abs();
                weight += f;
                if branch == Branch::Scattered {
                    scattered += f;
                }
            }
        }
        for k in (0..d).rev() {
            idx[k] += 1;
            if idx[k] < m {
                continue 'grid;
            }
            idx[k] = 0;
        }
        break;
    }
    let cell = h.powi(d as i32);
    Quadrature { i0: i0 * cell, it: it * cell, scattered_fraction: if weight > 0.0 { scattered / weight } else { 0.0 } }
}
