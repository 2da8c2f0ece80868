//! Uniform result record for every inequality check.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Both sides of one inequality `lhs <= C rhs`, with `C` the bound.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EstimateReport {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    /// `lhs / rhs`; zero when both sides vanish.
    pub ratio: f64,
    /// Largest accepted ratio.
    pub tolerance: f64,
    pub pass: bool,
    /// Both sides vanish (or the check does not apply); such reports pass.
    pub vacuous: bool,
    /// Estimated quadrature error on the left-hand side, reported separately.
    pub quadrature_defect: f64,
    pub meta: BTreeMap<String, serde_json::Value>,
}

impl EstimateReport {
    pub fn new(name: &str, lhs: f64, rhs: f64, tolerance: f64) -> Self {
        let scale = lhs.abs().max(rhs.abs());
        let vacuous = scale == 0.0 || (lhs.abs() <= 1e-300 && rhs.abs() <= 1e-300);
        let ratio = if vacuous {
            0.0
        } else if rhs == 0.0 {
            f64::INFINITY
        } else {
            lhs / rhs
        };
        EstimateReport {
            name: name.to_string(),
            lhs,
            rhs,
            ratio,
            tolerance,
            pass: vacuous || ratio <= tolerance,
            vacuous,
            quadrature_defect: 0.0,
            meta: BTreeMap::new(),
        }
    }

    pub fn with_defect(mut self, defect: f64) -> Self {
        self.quadrature_defect = defect;
        self
    }

    pub fn with_meta(mut self, key: &str, value: impl Serialize) -> Self {
        self.meta.insert(
            key.to_string(),
            serde_json::to_value(value).unwrap_or(serde_json::Value::Null),
        );
        self
    }

    /// Mark the report vacuous, for instance when a precondition does not apply.
    pub fn flag_vacuous(mut self, reason: &str) -> Self {
        self.vacuous = true;
        self.pass = true;
        self.with_meta("vacuous_reason", reason)
    }

    /// Re-evaluate `pass` against a different bound.
    pub fn against(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self.pass = self.vacuous || self.ratio <= tolerance;
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }
}

/// Running mean over lattice points, also tracking the mean over the even
/// sub-lattice so a quadrature defect can be estimated.
#[derive(Clone, Debug, Default)]
pub struct MeanAcc {
    sum: f64,
    count: usize,
    sum_even: f64,
    count_even: usize,
}

impl MeanAcc {
    pub fn push(&mut self, value: f64, even: bool) {
        self.sum += value;
        self.count += 1;
        if even {
            self.sum_even += value;
            self.count_even += 1;
        }
    }

    pub fn mean(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.sum / self.count as f64
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn sum(&self) -> f64 {
        self.sum
    }

    /// `|mean - mean over even points|`, zero when the sub-lattice is empty.
    pub fn defect(&self) -> f64 {
        if self.count_even == 0 {
            0.0
        } else {
            (self.mean() - self.sum_even / self.count_even as f64).abs()
        }
    }
}
