//! Closed-form step-size and truncation-bound families.

use serde::{Deserialize, Serialize};

fn one() -> f64 {
    1.0
}

/// `k ↦ a / (k + c)^p`.
///
/// With the default shift `c = 1` the index starts at one internally, so the
/// usual `γ_k = a/k` is written `{ a, c = 1, p = 1 }` and `γ_0 = a`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerSchedule {
    pub a: f64,
    #[serde(default = "one")]
    pub c: f64,
    #[serde(default = "one")]
    pub p: f64,
}

impl PowerSchedule {
    pub const fn new(a: f64, c: f64, p: f64) -> Self {
        Self { a, c, p }
    }

    /// `a / (k + 1)`.
    pub const fn harmonic(a: f64) -> Self {
        Self::new(a, 1.0, 1.0)
    }

    pub const fn constant(a: f64) -> Self {
        Self::new(a, 1.0, 0.0)
    }

    #[inline]
    pub fn at(&self, k: u64) -> f64 {
        let base = k as f64 + self.c;
        if self.p == 1.0 {
            self.a / base
        } else {
            self.a / base.powf(self.p)
        }
    }

    /// Problems with the descriptor, empty when every `γ_k` is positive and finite.
    pub fn problems(&self, label: &str) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.a.is_finite() && self.a > 0.0) {
            out.push(format!("{label}: a must be positive and finite (got {})", self.a));
        }
        if !(self.c.is_finite() && self.c > 0.0) {
            out.push(format!("{label}: c must be positive so that the k=0 term is defined (got {})", self.c));
        }
        if !(self.p.is_finite() && self.p >= 0.0) {
            out.push(format!("{label}: p must be non-negative (got {})", self.p));
        }
        out
    }
}

/// Truncation bounds `m ↦ M_m`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BoundSchedule {
    /// `M_m = m0 · ratio^m`, saturating at `+∞`.
    Geometric { m0: f64, ratio: f64 },
    /// `M_m = m0 + m · step`.
    Linear { m0: f64, step: f64 },
    /// `M_m = +∞`: truncation never fires. Makes the truncated update coincide
    /// with the plain consensus + innovation recursion.
    Unbounded,
}

impl BoundSchedule {
    pub const fn powers_of_two() -> Self {
        BoundSchedule::Geometric { m0: 1.0, ratio: 2.0 }
    }

    #[inline]
    pub fn at(&self, m: u64) -> f64 {
        match *self {
            BoundSchedule::Geometric { m0, ratio } => {
                if m > i32::MAX as u64 {
                    f64::INFINITY
                } else {
                    m0 * ratio.powi(m as i32)
                }
            }
            BoundSchedule::Linear { m0, step } => m0 + m as f64 * step,
            BoundSchedule::Unbounded => f64::INFINITY,
        }
    }

    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        match *self {
            BoundSchedule::Geometric { m0, ratio } => {
                if !(m0.is_finite() && m0 > 0.0) {
                    out.push(format!("bounds: m0 must be positive (got {m0})"));
                }
                if !(ratio.is_finite() && ratio > 1.0) {
                    out.push(format!("bounds: ratio must exceed 1 so that M_m is strictly increasing (got {ratio})"));
                }
            }
            BoundSchedule::Linear { m0, step } => {
                if !(m0.is_finite() && m0 > 0.0) {
                    out.push(format!("bounds: m0 must be positive (got {m0})"));
                }
                if !(step.is_finite() && step > 0.0) {
                    out.push(format!("bounds: step must be positive so that M_m is strictly increasing (got {step})"));
                }
            }
            BoundSchedule::Unbounded => {}
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_is_shifted() {
        let g = PowerSchedule::harmonic(1.0);
        assert_eq!(g.at(0), 1.0);
        assert_eq!(g.at(1), 0.5);
        assert_eq!(g.at(9), 0.1);
    }

    #[test]
    fn fractional_power() {
        let a = PowerSchedule::new(1.0, 1.0, 0.2);
        assert!((a.at(31) - 32f64.powf(-0.2)).abs() < 1e-15);
        assert_eq!(a.at(0), 1.0);
    }

    #[test]
    fn geometric_bounds_saturate() {
        let m = BoundSchedule::powers_of_two();
        assert_eq!(m.at(0), 1.0);
        assert_eq!(m.at(10), 1024.0);
        assert_eq!(m.at(5000), f64::INFINITY);
        assert_eq!(m.at(u64::MAX), f64::INFINITY);
    }

    #[test]
    fn invalid_descriptors_are_reported() {
        assert_eq!(PowerSchedule::new(0.0, 0.0, 1.0).problems("gamma").len(), 2);
        assert!(!BoundSchedule::Geometric { m0: 1.0, ratio: 1.0 }.problems().is_empty());
        assert!(!BoundSchedule::Linear { m0: 1.0, step: 0.0 }.problems().is_empty());
        assert!(BoundSchedule::Unbounded.problems().is_empty());
    }
}
