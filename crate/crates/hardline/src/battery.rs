//! The default battery of test functions for the invariance check.
//!
//! Every bump is centred on a free-flight state `(c1 − tc·V, V)` that reaches
//! the total collision `c1` at time `tc`, so `tc` places the bump relative
//! to the collision: `tc > 0` before it, `tc < 0` after it. A bump straddles
//! the collision surface of `T^{−t}` when its support contains states with
//! collision times on both sides of `−t`.

use hardline_core::{Result, TestFunction};
use serde::{Deserialize, Serialize};

/// Seed the battery was designed and frozen against.
pub const BATTERY_SEED: u64 = 2024;
pub const BATTERY_TIMES: [f64; 2] = [0.5, 1.5];
pub const BATTERY_SAMPLES: u64 = 1_000_000;
/// Exclusion margins for battery runs. The default margins of `MCConfig`
/// cut off the part of a straddling bump whose preimage passes near the
/// collision.
pub const BATTERY_MARGIN: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BumpSpec {
    /// Time to the collision from the bump centre.
    pub tc: f64,
    /// Collision point.
    #[serde(default)]
    pub c: f64,
    pub v: Vec<f64>,
    pub radius: f64,
    #[serde(default = "one")]
    pub amplitude: f64,
}

fn one() -> f64 {
    1.0
}

impl BumpSpec {
    pub fn test_function(&self) -> Result<TestFunction> {
        TestFunction::around_collision(self.tc, self.c, &self.v, self.radius, self.amplitude)
    }
}

const DEFAULT: [(f64, [f64; 3], f64); 8] = [
    (1.0, [1.0, 0.0, -1.0], 0.5),
    (3.0, [1.5, 0.5, -1.0], 0.6),
    (-0.5, [-1.0, 0.2, 1.0], 0.5),
    (-0.65, [-1.0, 0.0, 1.0], 0.8),
    (-1.9, [-1.0, 0.2, 1.0], 0.8),
    (-1.9, [-1.0, 0.0, 1.0], 0.8),
    (-3.0, [-1.0, 0.0, 1.0], 0.6),
    (-1.95, [-2.0, 0.3, 1.8], 0.5),
];

/// Eight bumps for `N = 3`: two before the collision, four straddling it for
/// `t = 0.5` or `t = 1.5`, two well after it.
pub fn default_battery() -> Vec<BumpSpec> {
    DEFAULT
        .iter()
        .map(|&(tc, v, radius)| BumpSpec { tc, c: 0.0, v: v.to_vec(), radius, amplitude: 1.0 })
        .collect()
}

pub fn test_functions(battery: &[BumpSpec]) -> Result<Vec<TestFunction>> {
    battery.iter().map(BumpSpec::test_function).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn battery_builds() {
        let phis = test_functions(&default_battery()).unwrap();
        assert_eq!(phis.len(), 8);
        assert!(phis.iter().all(|p| p.n() == 3));
    }
}
