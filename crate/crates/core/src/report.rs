//! Verification records shared by the appendix and operator-norm sweeps.

use serde::Serialize;

/// Outcome of checking one inequality family at one parameter point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub family: String,
    pub gamma: f64,
    pub c: f64,
    /// Smallest value of `rhs - lhs` over the grid; negative means violated.
    pub worst_margin: f64,
    pub argmin_x: f64,
    pub grid_points: usize,
    pub slack: f64,
    pub passed: bool,
    /// Set when the parameter point lies outside the family's hypotheses.
    pub skipped: Option<String>,
    /// Optional measured/bound ratio for norm checks.
    pub ratio: Option<f64>,
}

impl VerificationReport {
    pub fn skipped(family: &str, gamma: f64, c: f64, reason: String) -> Self {
        Self {
            family: family.to_string(),
            gamma,
            c,
            worst_margin: f64::NAN,
            argmin_x: f64::NAN,
            grid_points: 0,
            slack: 0.0,
            passed: true,
            skipped: Some(reason),
            ratio: None,
        }
    }

    pub fn from_margins<I: IntoIterator<Item = (f64, f64)>>(
        family: &str,
        gamma: f64,
        c: f64,
        slack: f64,
        margins: I,
    ) -> Self {
        let mut worst = f64::INFINITY;
        let mut arg = f64::NAN;
        let mut n = 0;
        let mut saw_nan = false;
        for (x, m) in margins {
            n += 1;
            if m.is_nan() {
                saw_nan = true;
                worst = f64::NAN;
                arg = x;
                continue;
            }
            if !saw_nan && m < worst {
                worst = m;
                arg = x;
            }
        }
        Self {
            family: family.to_string(),
            gamma,
            c,
            worst_margin: worst,
            argmin_x: arg,
            grid_points: n,
            slack,
            passed: !saw_nan && worst >= -slack,
            skipped: None,
            ratio: None,
        }
    }

    pub fn is_skipped(&self) -> bool {
        self.skipped.is_some()
    }
}
