//! Equal-width binning of numeric attributes.

use super::{AttributeKind, AttributeValue, EventLog};
use crate::error::{Error, Result};

/// Frozen binning rule for one numeric attribute, reusable across logs.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DiscretizationSpec {
    pub attribute: String,
    pub lo: f64,
    pub hi: f64,
    pub bin_count: usize,
}

impl DiscretizationSpec {
    /// Bin index for a value. Bins are equal-width over `[lo, hi]`; values
    /// outside the range clamp to the edge bins, and a degenerate range
    /// (`lo == hi`) maps everything to bin 0.
    pub fn bin_of(&self, value: f64) -> usize {
        if self.hi <= self.lo {
            return 0;
        }
        let scaled = self.bin_count as f64 * (value - self.lo) / (self.hi - self.lo);
        let idx = scaled.floor();
        if idx < 0.0 {
            0
        } else if idx as usize >= self.bin_count {
            self.bin_count - 1
        } else {
            idx as usize
        }
    }

    pub fn label_of(&self, bin: usize) -> String {
        format!("bin_{bin}")
    }
}

/// Fit an equal-width binning over the observed range of `attribute` and
/// return the mapped log together with the spec. The attribute becomes
/// categorical afterwards.
pub fn discretize_attribute(
    log: &EventLog,
    attribute: &str,
    bin_count: usize,
) -> Result<(EventLog, DiscretizationSpec)> {
    if bin_count == 0 {
        return Err(Error::Config("bin count must be at least 1".into()));
    }
    match log.attribute_kind(attribute) {
        Some(AttributeKind::Numeric) => {}
        Some(AttributeKind::Categorical) => {
            return Err(Error::Config(format!(
                "attribute '{attribute}' is categorical, not numeric"
            )));
        }
        None => {
            return Err(Error::Config(format!(
                "attribute '{attribute}' is not in the schema"
            )));
        }
    }

    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut seen = false;
    for trace in &log.traces {
        for event in &trace.events {
            if let Some(AttributeValue::Number(v)) = event.attribute(attribute) {
                lo = lo.min(*v);
                hi = hi.max(*v);
                seen = true;
            }
        }
    }
    if !seen {
        return Err(Error::Config(format!(
            "attribute '{attribute}' has no values to discretize"
        )));
    }

    let spec = DiscretizationSpec {
        attribute: attribute.to_string(),
        lo,
        hi,
        bin_count,
    };
    let mapped = apply_discretization(log, &spec)?;
    Ok((mapped, spec))
}

/// Apply a previously fitted binning to a log. Out-of-range values clamp to
/// the edge bins; absent values stay absent.
pub fn apply_discretization(log: &EventLog, spec: &DiscretizationSpec) -> Result<EventLog> {
    match log.attribute_kind(&spec.attribute) {
        Some(AttributeKind::Numeric) => {}
        Some(AttributeKind::Categorical) => {
            return Err(Error::Config(format!(
                "attribute '{}' is categorical, not numeric",
                spec.attribute
            )));
        }
        None => {
            return Err(Error::Config(format!(
                "attribute '{}' is not in the schema",
                spec.attribute
            )));
        }
    }

    let mut out = log.clone();
    for trace in &mut out.traces {
        for event in &mut trace.events {
            if let Some(value) = event.attributes.get_mut(&spec.attribute) {
                match value {
                    AttributeValue::Number(v) => {
                        *value = AttributeValue::Text(spec.label_of(spec.bin_of(*v)));
                    }
                    AttributeValue::Text(_) => {
                        return Err(Error::Schema(format!(
                            "attribute '{}' declared numeric but holds text",
                            spec.attribute
                        )));
                    }
                }
            }
        }
    }
    out.schema
        .insert(spec.attribute.clone(), AttributeKind::Categorical);
    Ok(out)
}
