//! Dynamics and invariant measures of `N` hard rods on a line that all meet
//! in one simultaneous collision.
//!
//! Phase points live on the invariant manifold `M = {(X, V) : X + tV = c1}`
//! of configurations whose free flight ends in a total collision. The crate
//! provides:
//!
//! * [`geometry`]: the ordered table, velocity cones, membership tests and
//!   the chart `(X, u1, u2) -> (X, V)` of the interior of `M`.
//! * [`scattering`]: scattering maps (the canonical linear map `σ*`,
//!   fixtures, user maps) and the checks that go with them.
//! * [`flow`]: billiard flow maps on `M`, their reduced chart forms and
//!   closed-form Jacobians.
//! * [`measure`]: surface and Liouville densities, Monte Carlo integration in
//!   chart coordinates and the pushforward-invariance harness.
//! * [`identity_suite`]: a batch of closed-form identities checked against
//!   finite-difference or brute-force oracles.
//!
//! The crate is `no_std` and needs only `alloc`. Parallel execution of Monte
//! Carlo blocks is pluggable through [`measure::BlockExecutor`].

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod error;
pub mod flow;
pub mod geometry;
pub mod identity_suite;
pub mod linalg;
pub mod measure;
pub mod rng;
pub mod scattering;

mod math;

pub use error::{Error, Result};
pub use flow::{Branch, FlowResult, Region, TrajectorySample};
pub use geometry::{ChartPoint, PhasePoint, Side, ToleranceConfig};
pub use linalg::Matrix;
pub use measure::{InvarianceReport, MCConfig, MeasureSpec, TestFunction, Verdict};
pub use scattering::{LinearMap, ScatteringMap};
