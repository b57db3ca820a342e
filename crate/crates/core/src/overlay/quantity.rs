// SPDX-License-Identifier: Apache-2.0

use std::fmt;

use serde::{Deserialize, Serialize};

use super::OverlayError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SemanticKind {
    Probability,
    Attribution,
    Density,
    Score,
}

impl SemanticKind {
    pub const ALL: [SemanticKind; 4] =
        [SemanticKind::Probability, SemanticKind::Attribution, SemanticKind::Density, SemanticKind::Score];

    pub fn as_str(self) -> &'static str {
        match self {
            SemanticKind::Probability => "probability",
            SemanticKind::Attribution => "attribution",
            SemanticKind::Density => "density",
            SemanticKind::Score => "score",
        }
    }
}

impl fmt::Display for SemanticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// What an overlay's floats mean: name, physical unit, closed value range
/// and the semantic kind used to pick a colormap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantityDescriptor {
    pub name: String,
    pub unit: String,
    pub range: [f64; 2],
    pub semantic_kind: SemanticKind,
}

impl QuantityDescriptor {
    pub fn new(name: &str, unit: &str, min: f64, max: f64, kind: SemanticKind) -> Self {
        QuantityDescriptor { name: name.into(), unit: unit.into(), range: [min, max], semantic_kind: kind }
    }

    pub fn min(&self) -> f64 {
        self.range[0]
    }

    pub fn max(&self) -> f64 {
        self.range[1]
    }

    pub fn validate(&self) -> Result<(), OverlayError> {
        let [min, max] = self.range;
        let bad = |m: &str| Err(OverlayError::InvalidQuantity(m.into()));
        if self.name.trim().is_empty() {
            return bad("name is empty");
        }
        if self.unit.trim().is_empty() {
            return bad("unit is empty (use \"dimensionless\")");
        }
        if !min.is_finite() || !max.is_finite() || min >= max {
            return bad("range must be finite with min < max");
        }
        match self.semantic_kind {
            SemanticKind::Probability if min < 0.0 || max > 1.0 => bad("probability range must lie within [0, 1]"),
            SemanticKind::Attribution if min != -max => bad("attribution range must be symmetric [-a, a]"),
            _ => Ok(()),
        }
    }

    /// True for finite values in the closed range; NaN (nodata) is handled
    /// by callers.
    pub fn contains(&self, v: f32) -> bool {
        v.is_finite() && f64::from(v) >= self.min() && f64::from(v) <= self.max()
    }
}
