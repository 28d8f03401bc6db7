//! Densities on the invariant manifold and Monte Carlo integration in chart
//! coordinates.
//!
//! Integrals over the manifold are pulled back through the chart:
//! `∫ Φ dμ = ∫_Ω Φ(Ψζ) ρ(Ψζ) ω(ζ) dζ`, where `ω` is the surface density and
//! `ρ` the density of `μ` relative to the Hausdorff measure. The pushforward
//! by a flow replaces `Φ` with `Φ ∘ T^t`.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::flow::flow_into;
use crate::geometry::{
    collinear, conserved_quantities, on_manifold, velocity_map, ChartPoint, PhasePoint, Side, ToleranceConfig,
};
use crate::linalg::{central_jacobian, gram_volume};
use crate::math;
use crate::rng;
use crate::scattering::{sample_cone, ScatteringMap, DEFAULT_MIN_GAP};

/// Samples per Monte Carlo block. Blocks are the unit of parallel work and
/// of random-stream assignment, so this is part of the reproducibility
/// contract.
pub const BLOCK_SIZE: u64 = 4096;

/// `ω(ζ)` from raw chart coordinates.
pub fn surface_density_coords(x: &[f64], u: [f64; 2]) -> f64 {
    let n = x.len() as i32;
    let dx = x[0] - x[1];
    let du = u[0] - u[1];
    let mut s = 0.0;
    for i in 0..x.len() {
        for j in 0..i {
            let d = x[i] - x[j];
            s += d * d;
        }
    }
    let head = math::powf(du * du + dx * dx, (n - 2) as f64 / 2.0);
    (head / math::powi(dx.abs(), n - 1)) * math::sqrt(s)
}

/// Surface density `ω = |((u_1−u_2)² + (x_1−x_2)²)^{(N−2)/2} / (x_1−x_2)^{N−1}| · (Σ_{i>j} (x_i−x_j)²)^{1/2}`.
pub fn surface_density(zeta: &ChartPoint) -> Result<f64> {
    if zeta.x[0] == zeta.x[1] {
        return Err(Error::Singular("x1 = x2"));
    }
    Ok(surface_density_coords(&zeta.x, zeta.u))
}

fn chart_coords(z: &[f64]) -> Vec<f64> {
    let n = z.len() - 2;
    let mut out = z[..n].to_vec();
    out.extend(velocity_map(&z[..n], [z[n], z[n + 1]]));
    out
}

/// `√det(DΨᵀ DΨ)` with a central-difference `DΨ`.
pub fn gram_density_oracle(zeta: &ChartPoint, h: f64) -> Result<f64> {
    let gap = zeta.x.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    let margin = gap.min((zeta.u[0] - zeta.u[1]).abs());
    if margin <= h {
        return Err(Error::StepTooLarge { step: h, distance: margin });
    }
    let j = central_jacobian(chart_coords, &zeta.to_vec(), h);
    let (vol, cond) = gram_volume(&j);
    // also rejects NaN
    if cond.partial_cmp(&1e-12) != Some(core::cmp::Ordering::Greater) {
        return Err(Error::ConditionWarning(cond));
    }
    Ok(vol)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Density {
    Finite(f64),
    /// On the boundary, where some pair has `x_i = x_j` and `v_i = v_j`.
    Infinite,
}

impl Density {
    pub fn value(self) -> f64 {
        match self {
            Self::Finite(v) => v,
            Self::Infinite => f64::INFINITY,
        }
    }
}

/// `L(Z)` without the manifold check; `+∞` on the boundary.
pub fn liouville_coords(x: &[f64], v: &[f64]) -> f64 {
    let n = x.len() as f64;
    let expo = (n - 2.0) / (n * (n - 1.0));
    let mut log_sum = 0.0;
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            let (a, b) = (v[i] - v[j], x[i] - x[j]);
            let d = a * a + b * b;
            if d == 0.0 {
                return f64::INFINITY;
            }
            log_sum += math::ln(d);
        }
    }
    math::exp(-expo * log_sum)
}

/// Liouville density `L(Z) = Π_{i<j} ((v_i−v_j)² + (x_i−x_j)²)^{−(N−2)/(N(N−1))}`.
pub fn liouville_density(z: &PhasePoint, tol: &ToleranceConfig) -> Result<Density> {
    if !on_manifold(z, tol) {
        return Err(Error::NotOnManifold);
    }
    let l = liouville_coords(&z.x, &z.v);
    Ok(if l.is_finite() { Density::Finite(l) } else { Density::Infinite })
}

/// The collision invariant `X · (E(V) 1 − P(V) V)`.
pub fn collision_invariant(x: &[f64], v: &[f64]) -> f64 {
    let (p, e) = conserved_quantities(v);
    x.iter().zip(v).map(|(xi, vi)| xi * (e - p * vi)).sum()
}

/// A density `m` relative to the Liouville density: `dμ = m · L d𝓗`.
pub trait RelativeDensity: Send + Sync {
    fn name(&self) -> &str;
    fn m(&self, x: &[f64], v: &[f64]) -> f64;
}

type Profile = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
type OrbitFactor = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// `m(X, V) = f(X · (E(V) 1 − P(V) V)) · g(V)`.
#[derive(Clone)]
pub struct FactoryDensity {
    name: String,
    f: Profile,
    g: OrbitFactor,
}

impl RelativeDensity for FactoryDensity {
    fn name(&self) -> &str {
        &self.name
    }

    fn m(&self, x: &[f64], v: &[f64]) -> f64 {
        (self.f)(collision_invariant(x, v)) * (self.g)(v)
    }
}

#[derive(Clone)]
pub enum MeasureSpec {
    Hausdorff,
    Liouville,
    Custom(Arc<dyn RelativeDensity>),
}

impl fmt::Debug for MeasureSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl MeasureSpec {
    pub fn name(&self) -> &str {
        match self {
            Self::Hausdorff => "hausdorff",
            Self::Liouville => "liouville",
            Self::Custom(c) => c.name(),
        }
    }

    /// Density relative to the Hausdorff measure, at an interior point.
    pub fn density(&self, x: &[f64], v: &[f64]) -> f64 {
        match self {
            Self::Hausdorff => 1.0,
            Self::Liouville => liouville_coords(x, v),
            Self::Custom(c) => c.m(x, v) * liouville_coords(x, v),
        }
    }

    /// Density relative to the Liouville measure, where defined.
    pub fn relative(&self, x: &[f64], v: &[f64]) -> Option<f64> {
        match self {
            Self::Hausdorff => None,
            Self::Liouville => Some(1.0),
            Self::Custom(c) => Some(c.m(x, v)),
        }
    }
}

/// Builds the custom measure `f(X · (E 1 − P V)) · g(V) · L`, rejecting `g`
/// unless `g(σ(V)) = g(V)` (relative `1e-10`) on `n_samples` points of the
/// pre-collisional cone.
pub fn density_factory(
    name: &str,
    f: impl Fn(f64) -> f64 + Send + Sync + 'static,
    g: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    map: &ScatteringMap,
    n: usize,
    n_samples: usize,
    seed: u64,
) -> Result<MeasureSpec> {
    for v in sample_cone(n, Side::Pre, n_samples, seed, DEFAULT_MIN_GAP) {
        let w = map.apply(&v)?;
        let (a, b) = (g(&v), g(&w));
        if !(a.is_finite() && b.is_finite()) || (a - b).abs() > 1e-10 * a.abs().max(b.abs()).max(1.0) {
            return Err(Error::InvalidDensity(alloc::format!(
                "g is not constant on scattering orbits: g(V) = {a}, g(σ(V)) = {b}"
            )));
        }
        if a < 0.0 {
            return Err(Error::InvalidDensity(String::from("g must be nonnegative")));
        }
    }
    Ok(MeasureSpec::Custom(Arc::new(FactoryDensity { name: String::from(name), f: Arc::new(f), g: Arc::new(g) })))
}

/// Random interior chart point with adjacent gaps and `|u_1 − u_2|` at
/// least `min_gap`.
pub fn sample_chart<R: Rng + ?Sized>(r: &mut R, n: usize, min_gap: f64) -> ChartPoint {
    let x = rng::sample_ordered_positions(r, n, 2.0, min_gap);
    loop {
        let u = [2.0 * rng::normal(r), 2.0 * rng::normal(r)];
        if (u[0] - u[1]).abs() >= min_gap {
            return ChartPoint { x, u };
        }
    }
}

/// `max |m(X − tV, V) − m(X, V)|` over random interior points and `times`,
/// where `m` is the density relative to Liouville.
pub fn functional_equation_check(spec: &MeasureSpec, n: usize, n_samples: usize, times: &[f64], seed: u64) -> Result<f64> {
    if matches!(spec, MeasureSpec::Hausdorff) {
        return Err(invalid("the Hausdorff measure has no density relative to Liouville"));
    }
    let mut r = rng::block_rng(rng::mix(seed, rng::tag("functional-equation")), n as u64);
    let mut dev: f64 = 0.0;
    for _ in 0..n_samples {
        let zeta = sample_chart(&mut r, n, DEFAULT_MIN_GAP);
        let v = velocity_map(&zeta.x, zeta.u);
        let m0 = spec.relative(&zeta.x, &v).unwrap_or(1.0);
        for &t in times {
            let xs: Vec<f64> = zeta.x.iter().zip(&v).map(|(a, b)| a - t * b).collect();
            let mt = spec.relative(&xs, &v).unwrap_or(1.0);
            dev = dev.max((mt - m0).abs());
        }
    }
    Ok(dev)
}

/// Bump `Φ(Z) = a · exp(1 − 1/(1 − r²))` with `r = |Z − c| / radius`,
/// supported in the open ball of `radius` about `c` in `R^{2N}`.
#[derive(Debug, Clone, PartialEq)]
pub struct TestFunction {
    pub center: PhasePoint,
    pub radius: f64,
    pub amplitude: f64,
}

impl TestFunction {
    pub fn new(center: PhasePoint, radius: f64, amplitude: f64) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0 && amplitude.is_finite() && amplitude > 0.0) {
            return Err(invalid("bump radius and amplitude must be positive"));
        }
        if !collinear(&center.x, &center.v, 1e-10) {
            return Err(Error::NotOnManifold);
        }
        Ok(Self { center, radius, amplitude })
    }

    /// Bump centred on the free-flight state that reaches the collision
    /// point `c 1` at time `tc` with velocity `vc`: `X = c 1 − tc vc`.
    pub fn around_collision(tc: f64, c: f64, vc: &[f64], radius: f64, amplitude: f64) -> Result<Self> {
        let x = vc.iter().map(|v| c - tc * v).collect();
        Self::new(PhasePoint::new(x, vc.to_vec())?, radius, amplitude)
    }

    pub fn n(&self) -> usize {
        self.center.n()
    }

    pub fn eval(&self, x: &[f64], v: &[f64]) -> f64 {
        let mut d2 = 0.0;
        for i in 0..x.len() {
            let (a, b) = (x[i] - self.center.x[i], v[i] - self.center.v[i]);
            d2 += a * a + b * b;
        }
        let r2 = d2 / (self.radius * self.radius);
        if r2 >= 1.0 {
            return 0.0;
        }
        self.amplitude * math::exp(1.0 - 1.0 / (1.0 - r2))
    }
}

/// Axis-aligned box in chart coordinates `(x_1..x_N, u_1, u_2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl ChartBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.len() < 5 {
            return Err(invalid("chart box needs N + 2 >= 5 matching bounds"));
        }
        if !lo.iter().zip(&hi).all(|(a, b)| a.is_finite() && b.is_finite() && a < b) {
            return Err(invalid("chart box bounds must be finite with lo < hi"));
        }
        Ok(Self { lo, hi })
    }

    pub fn n(&self) -> usize {
        self.lo.len() - 2
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| b - a).product()
    }

    pub fn contains(&self, z: &[f64]) -> bool {
        z.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (a, b))| *a <= *v && *v <= *b)
    }

    /// Box grown by `frac` of its width on every side.
    pub fn padded(&self, frac: f64) -> Self {
        let (lo, hi) = self
            .lo
            .iter()
            .zip(&self.hi)
            .map(|(a, b)| {
                let w = (b - a) * frac;
                (a - w, b + w)
            })
            .unzip();
        Self { lo, hi }
    }

    /// Smallest box containing `points`, padded by `frac` of its width.
    pub fn bounding(points: &[Vec<f64>], frac: f64) -> Result<Self> {
        let first = points.first().ok_or_else(|| invalid("no points to bound"))?;
        let mut lo = first.clone();
        let mut hi = first.clone();
        for p in points {
            for k in 0..p.len() {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        for k in 0..lo.len() {
            if hi[k] - lo[k] < 1e-9 {
                lo[k] -= 1e-9;
                hi[k] += 1e-9;
            }
        }
        Ok(Self { lo, hi }.padded(frac))
    }

    fn sample_into<R: Rng + ?Sized>(&self, r: &mut R, out: &mut [f64]) {
        for ((o, lo), hi) in out.iter_mut().zip(&self.lo).zip(&self.hi) {
            *o = lo + (hi - lo) * r.random::<f64>();
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MCConfig {
    pub n_samples: u64,
    pub seed: u64,
    /// Worker count hint for the executor; never affects results.
    pub workers: usize,
    /// Explicit region; derived from the test function when `None`.
    pub region: Option<ChartBox>,
    /// Minimum adjacent position gap.
    pub delta_x: f64,
    /// Minimum `|u_1 − u_2|`.
    pub delta_u: f64,
}

impl Default for MCConfig {
    fn default() -> Self {
        Self { n_samples: 1_000_000, seed: 0, workers: 1, region: None, delta_x: 0.05, delta_u: 0.05 }
    }
}

impl MCConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples < 1000 {
            return Err(invalid("n_samples must be at least 1000"));
        }
        if self.workers == 0 {
            return Err(invalid("workers must be at least 1"));
        }
        if !(self.delta_x >= 0.0 && self.delta_u >= 0.0 && self.delta_x.is_finite() && self.delta_u.is_finite()) {
            return Err(invalid("exclusion margins must be finite and nonnegative"));
        }
        Ok(())
    }
}

/// Running moments of one block, merged with Chan's formula.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BlockStats {
    pub n: u64,
    pub mean: f64,
    pub m2: f64,
    /// Integrand mass dropped by the exclusion margins.
    pub excluded: f64,
    /// Samples with a negative density.
    pub negative: u64,
}

impl BlockStats {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(a: &Self, b: &Self) -> Self {
        if a.n == 0 {
            return *b;
        }
        if b.n == 0 {
            return *a;
        }
        let n = a.n + b.n;
        let d = b.mean - a.mean;
        let (na, nb, nf) = (a.n as f64, b.n as f64, n as f64);
        Self {
            n,
            mean: a.mean + d * nb / nf,
            m2: a.m2 + b.m2 + d * d * na * nb / nf,
            excluded: a.excluded + b.excluded,
            negative: a.negative + b.negative,
        }
    }

    /// Pairwise reduction in a fixed tree, independent of scheduling.
    pub fn reduce(blocks: &[Self]) -> Self {
        match blocks.len() {
            0 => Self::default(),
            1 => blocks[0],
            len => {
                let mid = len / 2;
                Self::merge(&Self::reduce(&blocks[..mid]), &Self::reduce(&blocks[mid..]))
            }
        }
    }
}

/// Runs `n_blocks` independent jobs and returns their results in index
/// order.
pub trait BlockExecutor: Sync {
    fn run(&self, n_blocks: usize, job: &(dyn Fn(usize) -> BlockStats + Sync)) -> Vec<BlockStats>;
}

/// Runs blocks one after another on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl BlockExecutor for Sequential {
    fn run(&self, n_blocks: usize, job: &(dyn Fn(usize) -> BlockStats + Sync)) -> Vec<BlockStats> {
        (0..n_blocks).map(job).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
    pub n: u64,
    pub region: ChartBox,
}

/// Integrand evaluation with reusable buffers.
struct Integrand<'a> {
    measure: &'a MeasureSpec,
    phi: &'a TestFunction,
    transform: Option<(&'a ScatteringMap, f64)>,
    delta_x: f64,
    delta_u: f64,
}

enum Sample {
    Value(f64),
    Excluded(f64),
    Negative,
}

impl Integrand<'_> {
    /// `Φ(T Ψζ) ρ(Ψζ) ω(ζ)` at the flat chart vector in `zeta`; `v`, `xt`,
    /// `vt` are scratch. Zero off the chart domain.
    fn eval(&self, zeta: &[f64], v: &mut [f64], xt: &mut [f64], vt: &mut [f64]) -> Sample {
        let n = zeta.len() - 2;
        let x = &zeta[..n];
        let u = [zeta[n], zeta[n + 1]];
        if !x.windows(2).all(|w| w[0] < w[1]) || u[0] == u[1] {
            return Sample::Value(0.0);
        }
        let d = x[0] - x[1];
        v[0] = u[0];
        v[1] = u[1];
        for i in 2..n {
            v[i] = ((x[i] - x[1]) * u[0] - (x[i] - x[0]) * u[1]) / d;
        }
        let phi = match self.transform {
            None => self.phi.eval(x, v),
            Some((map, t)) => {
                flow_into(map, x, v, t, xt, vt);
                self.phi.eval(xt, vt)
            }
        };
        if phi == 0.0 {
            return Sample::Value(0.0);
        }
        let rho = self.measure.density(x, v);
        if rho < 0.0 {
            return Sample::Negative;
        }
        let f = phi * rho * surface_density_coords(x, u);
        let min_gap = x.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
        if min_gap < self.delta_x || (u[0] - u[1]).abs() < self.delta_u {
            return Sample::Excluded(f);
        }
        Sample::Value(f)
    }
}

fn check_dims(phi: &TestFunction, region: &ChartBox) -> Result<()> {
    if region.n() != phi.n() {
        return Err(invalid("region dimension does not match the test function"));
    }
    Ok(())
}

/// Exact chart box of `supp Φ`: the support ball projects onto
/// `[c_x ± r] × [c_{v1} ± r] × [c_{v2} ± r]`.
fn support_box(phi: &TestFunction) -> Result<ChartBox> {
    let r = phi.radius;
    let mut lo: Vec<f64> = phi.center.x.iter().map(|c| c - r).collect();
    let mut hi: Vec<f64> = phi.center.x.iter().map(|c| c + r).collect();
    lo.extend([phi.center.v[0] - r, phi.center.v[1] - r]);
    hi.extend([phi.center.v[0] + r, phi.center.v[1] + r]);
    ChartBox::new(lo, hi)
}

/// Up to 20000 chart points of `supp Φ`, pulled back by `T^{−t}` when a
/// transform is given.
fn support_points(phi: &TestFunction, transform: Option<(&ScatteringMap, f64)>, seed: u64) -> Result<Vec<Vec<f64>>> {
    let n = phi.n();
    let exact = support_box(phi)?;
    let mut gen = rng::block_rng(rng::mix(seed, rng::tag("support")), 0);
    let mut zeta = vec![0.0; n + 2];
    let (mut xb, mut vb) = (vec![0.0; n], vec![0.0; n]);
    let mut points = Vec::new();
    let mut tries = 0u64;
    while points.len() < 20_000 && tries < 4_000_000 {
        tries += 1;
        exact.sample_into(&mut gen, &mut zeta);
        let x = &zeta[..n];
        let u = [zeta[n], zeta[n + 1]];
        if !x.windows(2).all(|w| w[0] < w[1]) || u[0] == u[1] {
            continue;
        }
        let v = velocity_map(x, u);
        if phi.eval(x, &v) == 0.0 {
            continue;
        }
        let mut p = match transform {
            Some((map, t)) if t != 0.0 => {
                flow_into(map, x, &v, -t, &mut xb, &mut vb);
                xb.clone()
            }
            _ => x.to_vec(),
        };
        p.extend(match transform {
            Some((_, t)) if t != 0.0 => [vb[0], vb[1]],
            _ => u,
        });
        points.push(p);
    }
    if points.len() < 100 {
        return Err(invalid("test function support barely meets the chart domain"));
    }
    Ok(points)
}

/// Chart box covering the support of `Φ ∘ T^t`.
///
/// Without a transform (or with `t = 0`) this is the exact box of the
/// support ball. With a transform, support samples are pulled back by
/// `T^{−t}` and bounded with 10% padding; [`integrate`] then verifies
/// coverage with guard samples.
pub fn auto_region(phi: &TestFunction, transform: Option<(&ScatteringMap, f64)>, seed: u64) -> Result<ChartBox> {
    match transform {
        Some((_, t)) if t != 0.0 => ChartBox::bounding(&support_points(phi, transform, seed)?, 0.1),
        _ => support_box(phi),
    }
}

/// Monte Carlo estimate of `∫ Φ ∘ T dμ` in chart coordinates, `T = T^t_σ`
/// when `transform = Some((σ, t))`.
///
/// An explicit region must contain sampled points of the (pulled back)
/// support. Any region is then checked with guard samples drawn from a box
/// 50% wider on each side; guard samples outside the region with nonzero
/// integrand abort with [`Error::RegionTooSmall`]. Integrand mass removed
/// by the exclusion margins must stay below `1e-3` of the estimate.
pub fn integrate(
    measure: &MeasureSpec,
    phi: &TestFunction,
    cfg: &MCConfig,
    transform: Option<(&ScatteringMap, f64)>,
    exec: &dyn BlockExecutor,
) -> Result<Estimate> {
    cfg.validate()?;
    let region = match &cfg.region {
        Some(b) => {
            check_dims(phi, b)?;
            let missed = support_points(phi, transform, cfg.seed)?.iter().filter(|p| !b.contains(p)).count();
            if missed > 0 {
                return Err(Error::RegionTooSmall(missed as u64));
            }
            b.clone()
        }
        None => auto_region(phi, transform, cfg.seed)?,
    };
    check_dims(phi, &region)?;
    let n = phi.n();
    let integrand = Integrand { measure, phi, transform, delta_x: cfg.delta_x, delta_u: cfg.delta_u };

    let guard_box = region.padded(0.5);
    let n_guard = (cfg.n_samples / 16).max(BLOCK_SIZE);
    let guard_blocks = n_guard.div_ceil(BLOCK_SIZE) as usize;
    let guard_seed = rng::mix(cfg.seed, rng::tag("guard"));
    let guard_job = |k: usize| {
        let mut gen = rng::block_rng(guard_seed, k as u64);
        let count = BLOCK_SIZE.min(n_guard - k as u64 * BLOCK_SIZE);
        let mut zeta = vec![0.0; n + 2];
        let (mut v, mut xt, mut vt) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        let mut st = BlockStats::default();
        for _ in 0..count {
            guard_box.sample_into(&mut gen, &mut zeta);
            if region.contains(&zeta) {
                continue;
            }
            let hit = match integrand.eval(&zeta, &mut v, &mut xt, &mut vt) {
                Sample::Value(f) | Sample::Excluded(f) => f != 0.0,
                Sample::Negative => true,
            };
            if hit {
                st.n += 1;
            }
        }
        st
    };
    let outside: u64 = exec.run(guard_blocks, &guard_job).iter().map(|s| s.n).sum();
    if outside > 0 {
        return Err(Error::RegionTooSmall(outside));
    }

    let blocks = cfg.n_samples.div_ceil(BLOCK_SIZE) as usize;
    let main_seed = rng::mix(cfg.seed, rng::tag("integrand"));
    let job = |k: usize| {
        let mut gen = rng::block_rng(main_seed, k as u64);
        let count = BLOCK_SIZE.min(cfg.n_samples - k as u64 * BLOCK_SIZE);
        let mut zeta = vec![0.0; n + 2];
        let (mut v, mut xt, mut vt) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        let mut st = BlockStats::default();
        for _ in 0..count {
            region.sample_into(&mut gen, &mut zeta);
            match integrand.eval(&zeta, &mut v, &mut xt, &mut vt) {
                Sample::Value(f) => st.push(f),
                Sample::Excluded(f) => {
                    st.excluded += f;
                    st.push(0.0);
                }
                Sample::Negative => {
                    st.negative += 1;
                    st.push(0.0);
                }
            }
        }
        st
    };
    let total = BlockStats::reduce(&exec.run(blocks, &job));
    if total.negative > 0 {
        return Err(Error::InvalidDensity(alloc::format!("{} samples with negative density", total.negative)));
    }
    let kept = total.mean * total.n as f64;
    if total.excluded > 1e-3 * kept.abs() {
        let rel = if kept == 0.0 { f64::INFINITY } else { total.excluded / kept.abs() };
        return Err(Error::MarginsExcludeSupport(rel));
    }
    let vol = region.volume();
    let nf = total.n as f64;
    let var = if total.n > 1 { total.m2 / (nf - 1.0) } else { 0.0 };
    Ok(Estimate { value: vol * total.mean, stderr: vol * math::sqrt(var / nf), n: total.n, region })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Invariant,
    Violated,
    Inconclusive,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Invariant => "invariant",
            Self::Violated => "violated",
            Self::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    /// `z ≤ invariant` gives [`Verdict::Invariant`].
    pub invariant: f64,
    /// `z ≥ violated` gives [`Verdict::Violated`].
    pub violated: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self { invariant: 4.0, violated: 10.0 }
    }
}

impl Thresholds {
    pub fn verdict(&self, z: f64) -> Verdict {
        if z <= self.invariant {
            Verdict::Invariant
        } else if z >= self.violated {
            Verdict::Violated
        } else {
            Verdict::Inconclusive
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvarianceReport {
    pub center: PhasePoint,
    pub radius: f64,
    /// `⟨μ, Φ⟩`.
    pub i0: f64,
    /// `⟨T^t_σ # μ, Φ⟩`.
    pub it: f64,
    pub se0: f64,
    pub set: f64,
    pub z_score: f64,
    pub verdict: Verdict,
}

/// Compares `⟨μ, Φ⟩` with `⟨T^t_σ # μ, Φ⟩ = ⟨μ, Φ ∘ T^t_σ⟩` for each test
/// function. The two integrals use independent random streams.
pub fn invariance_report(
    measure: &MeasureSpec,
    map: &ScatteringMap,
    t: f64,
    phis: &[TestFunction],
    cfg: &MCConfig,
    thresholds: &Thresholds,
    exec: &dyn BlockExecutor,
) -> Result<Vec<InvarianceReport>> {
    phis.iter()
        .enumerate()
        .map(|(k, phi)| {
            let base = rng::mix(cfg.seed, k as u64);
            let c0 = MCConfig { seed: rng::mix(base, rng::tag("i0")), ..cfg.clone() };
            let ct = MCConfig { seed: rng::mix(base, rng::tag("it")), ..cfg.clone() };
            let e0 = integrate(measure, phi, &c0, None, exec)?;
            let et = integrate(measure, phi, &ct, Some((map, t)), exec)?;
            let se = math::sqrt(e0.stderr * e0.stderr + et.stderr * et.stderr);
            let z_score = if se > 0.0 {
                (et.value - e0.value).abs() / se
            } else if et.value == e0.value {
                0.0
            } else {
                f64::INFINITY
            };
            Ok(InvarianceReport {
                center: phi.center.clone(),
                radius: phi.radius,
                i0: e0.value,
                it: et.value,
                se0: e0.stderr,
                set: et.stderr,
                z_score,
                verdict: thresholds.verdict(z_score),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zeta0() -> ChartPoint {
        ChartPoint::new(vec![0.0, 1.0, 2.0], [3.0, 2.0]).unwrap()
    }

    #[test]
    fn surface_density_example() {
        let w = surface_density(&zeta0()).unwrap();
        assert!((w - 2.0 * math::sqrt(3.0)).abs() < 1e-14);
        let shifted = ChartPoint::new(vec![0.0, 1.0, 2.0], [13.0, 12.0]).unwrap();
        assert_eq!(surface_density(&shifted).unwrap(), w);
    }

    #[test]
    fn gram_oracle_matches_closed_form() {
        let mut r = rng::block_rng(9, 0);
        for n in 3..=6 {
            for _ in 0..50 {
                let z = sample_chart(&mut r, n, 0.05);
                let a = surface_density(&z).unwrap();
                let b = gram_density_oracle(&z, 1e-6).unwrap();
                assert!(math::rel_err(a, b, 0.0) < 1e-6, "n={n} {a} {b}");
            }
        }
    }

    #[test]
    fn liouville_example() {
        let tol = ToleranceConfig::default();
        let z = PhasePoint::new(vec![0.0, 1.0, 2.0], vec![3.0, 2.0, 1.0]).unwrap();
        let l = liouville_density(&z, &tol).unwrap().value();
        assert!((l - math::powf(32.0, -1.0 / 6.0)).abs() < 1e-14);
        assert!((l - 0.56123).abs() < 1e-5);
        let b = PhasePoint::new(vec![0.0, 0.0, 1.0], vec![1.0, 1.0, 1.0]).unwrap();
        assert_eq!(liouville_density(&b, &tol).unwrap(), Density::Infinite);
        let off = PhasePoint::new(vec![0.0, 1.0, 2.0], vec![3.0, 2.0, 0.0]).unwrap();
        assert_eq!(liouville_density(&off, &tol), Err(Error::NotOnManifold));
    }

    #[test]
    fn factory_checks_symmetry() {
        let s = ScatteringMap::SigmaStar;
        assert!(density_factory("energy", |_| 1.0, |v| conserved_quantities(v).1, &s, 4, 200, 1).is_ok());
        assert!(matches!(
            density_factory("v1", |_| 1.0, |v| v[0], &s, 4, 200, 1),
            Err(Error::InvalidDensity(_))
        ));
    }

    struct FirstPosition;
    impl RelativeDensity for FirstPosition {
        fn name(&self) -> &str {
            "x1"
        }
        fn m(&self, x: &[f64], _v: &[f64]) -> f64 {
            x[0]
        }
    }

    #[test]
    fn functional_equation() {
        let s = ScatteringMap::SigmaStar;
        let spec = density_factory("f", |y| 1.0 / (1.0 + y * y), |v| conserved_quantities(v).1, &s, 4, 100, 2).unwrap();
        assert!(functional_equation_check(&spec, 4, 500, &[-2.0, 0.7], 3).unwrap() <= 1e-10);
        assert_eq!(functional_equation_check(&spec, 4, 100, &[0.0], 3).unwrap(), 0.0);
        let broken = MeasureSpec::Custom(Arc::new(FirstPosition));
        assert!(functional_equation_check(&broken, 4, 100, &[0.7], 3).unwrap() > 1e-3);
    }

    #[test]
    fn chan_merge_matches_direct() {
        let data: Vec<f64> = (0..1000).map(|i| math::powf(i as f64, 0.7)).collect();
        let blocks: Vec<BlockStats> = data
            .chunks(97)
            .map(|c| {
                let mut s = BlockStats::default();
                c.iter().for_each(|x| s.push(*x));
                s
            })
            .collect();
        let mut direct = BlockStats::default();
        data.iter().for_each(|x| direct.push(*x));
        let merged = BlockStats::reduce(&blocks);
        assert_eq!(merged.n, 1000);
        assert!(math::rel_err(merged.mean, direct.mean, 0.0) < 1e-14);
        assert!(math::rel_err(merged.m2, direct.m2, 0.0) < 1e-12);
    }

    #[test]
    fn transform_at_zero_time_is_identity() {
        let phi = TestFunction::around_collision(1.0, 0.0, &[1.0, 0.0, -1.0], 0.5, 1.0).unwrap();
        let cfg = MCConfig { n_samples: 20_000, seed: 5, ..MCConfig::default() };
        let a = integrate(&MeasureSpec::Liouville, &phi, &cfg, None, &Sequential).unwrap();
        let b = integrate(&MeasureSpec::Liouville, &phi, &cfg, Some((&ScatteringMap::SigmaStar, 0.0)), &Sequential)
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn small_region_is_rejected() {
        let phi = TestFunction::around_collision(1.0, 0.0, &[1.0, 0.0, -1.0], 0.5, 1.0).unwrap();
        let exact = auto_region(&phi, None, 0).unwrap();
        let shrunk = ChartBox::new(
            exact.lo.iter().map(|a| a + 0.2).collect(),
            exact.hi.iter().map(|b| b - 0.2).collect(),
        )
        .unwrap();
        let cfg = MCConfig { n_samples: 20_000, region: Some(shrunk), ..MCConfig::default() };
        assert!(matches!(
            integrate(&MeasureSpec::Liouville, &phi, &cfg, None, &Sequential),
            Err(Error::RegionTooSmall(_))
        ));
    }

    #[test]
    fn thresholds() {
        let t = Thresholds::default();
        assert_eq!(t.verdict(1.0), Verdict::Invariant);
        assert_eq!(t.verdict(4.0), Verdict::Invariant);
        assert_eq!(t.verdict(7.0), Verdict::Inconclusive);
        assert_eq!(t.verdict(12.0), Verdict::Violated);
    }

    #[test]
    fn wide_region_clipping_one_face_is_rejected() {
        let phi = TestFunction::around_collision(1.0, 0.0, &[1.0, 0.0, -1.0], 0.5, 1.0).unwrap();
        let clipped = ChartBox::new(vec![-1.2, -2.0, -2.0, 0.6, -0.5], vec![-0.8, 2.0, 2.0, 1.5, 0.5]).unwrap();
        let cfg = MCConfig { n_samples: 20_000, region: Some(clipped), ..MCConfig::default() };
        assert!(matches!(
            integrate(&MeasureSpec::Liouville, &phi, &cfg, None, &Sequential),
            Err(Error::RegionTooSmall(_))
        ));
    }

    #[test]
    fn covering_region_is_accepted() {
        let phi = TestFunction::around_collision(-0.65, 0.0, &[-1.0, 0.0, 1.0], 0.8, 1.0).unwrap();
        let map = ScatteringMap::SigmaStar;
        let pulled = auto_region(&phi, Some((&map, 0.5)), 1).unwrap();
        let exact = auto_region(&phi, None, 1).unwrap();
        let corners = [pulled.lo, pulled.hi, exact.lo, exact.hi];
        let wide = ChartBox::bounding(&corners, 0.05).unwrap();
        let cfg = MCConfig { n_samples: 20_000, region: Some(wide), delta_x: 1e-9, delta_u: 1e-9, ..MCConfig::default() };
        assert!(integrate(&MeasureSpec::Liouville, &phi, &cfg, None, &Sequential).is_ok());
        assert!(integrate(&MeasureSpec::Liouville, &phi, &cfg, Some((&map, 0.5)), &Sequential).is_ok());
    }
}
