//! Importance weights for the merged (fresh + remembered) constraint set.
//!
//! `w = em / max(em)`, attenuated by `lambda_low` when `em` is below the
//! absolute floor `min_impact`, then scaled by the memory weight `mu`.
//! Constraints with `w < drop_weight` are discarded.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Constraint;

pub const DEFAULT_MIN_IMPACT: f64 = 100.0;
pub const DEFAULT_LAMBDA_LOW: f64 = 0.75;
pub const DEFAULT_DROP_WEIGHT: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankerConfig {
    /// gCO2eq per interval below which a constraint counts as low impact.
    pub min_impact: f64,
    pub lambda_low: f64,
    pub drop_weight: f64,
}

impl Default for RankerConfig {
    fn default() -> Self {
        Self { min_impact: DEFAULT_MIN_IMPACT, lambda_low: DEFAULT_LAMBDA_LOW, drop_weight: DEFAULT_DROP_WEIGHT }
    }
}

impl RankerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_impact.is_nan() || self.min_impact < 0.0 {
            return Err(Error::Config(format!("min_impact_f must be >= 0, got {}", self.min_impact)));
        }
        if !(self.lambda_low > 0.0 && self.lambda_low <= 1.0) {
            return Err(Error::Config(format!("lambda_low must lie in (0, 1], got {}", self.lambda_low)));
        }
        if !(self.drop_weight >= 0.0 && self.drop_weight < 1.0) {
            return Err(Error::Config(format!("drop_weight must lie in [0, 1), got {}", self.drop_weight)));
        }
        Ok(())
    }
}

pub fn max_em(constraints: &[Constraint]) -> Result<f64> {
    constraints
        .iter()
        .map(|c| c.em)
        .max_by(f64::total_cmp)
        .ok_or_else(|| Error::NoCandidates("no constraints to normalise against".into()))
}

/// Weighs, filters and orders `constraints` (descending weight, then by
/// identity). Zero weights are dropped along with those under `drop_weight`.
pub fn rank(constraints: Vec<Constraint>, config: &RankerConfig) -> Vec<Constraint> {
    let Ok(max) = max_em(&constraints) else { return Vec::new() };
    let mut out: Vec<Constraint> = constraints
        .into_iter()
        .filter_map(|mut c| {
            let mut w = if max > 0.0 { c.em / max } else { 0.0 };
            if c.em < config.min_impact {
                w *= config.lambda_low;
            }
            w *= c.mu;
            if w <= 0.0 || w < config.drop_weight {
                return None;
            }
            c.weight = Some(w);
            Some(c)
        })
        .collect();
    out.sort_by(|a, b| match b.weight.partial_cmp(&a.weight) {
        Some(Ordering::Equal) | None => a.id.cmp(&b.id),
        Some(o) => o,
    });
    out
}
