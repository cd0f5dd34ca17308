use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::schema::{AttributeKind, AttributeSchema};
use super::{ChoiceInstance, DatasetError, Value};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValueRange {
    pub min: f64,
    pub max: f64,
}

impl ValueRange {
    pub fn is_degenerate(&self) -> bool {
        self.min == self.max
    }

    /// Min-max scaling clamped to `[0, 1]`; a constant attribute maps to 0.
    pub fn scale(&self, value: f64) -> f64 {
        if self.is_degenerate() {
            return 0.0;
        }
        ((value - self.min) / (self.max - self.min)).clamp(0.0, 1.0)
    }
}

/// Per-attribute ranges fitted on the training pool.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NumericNormalizer {
    ranges: BTreeMap<String, ValueRange>,
}

impl NumericNormalizer {
    pub fn range(&self, attribute: &str) -> Option<ValueRange> {
        self.ranges.get(attribute).copied()
    }

    pub fn scale(&self, attribute: &str, value: f64) -> Option<f64> {
        self.ranges.get(attribute).map(|r| r.scale(value))
    }

    pub fn degenerate_attributes(&self) -> impl Iterator<Item = &str> {
        self.ranges
            .iter()
            .filter(|(_, r)| r.is_degenerate())
            .map(|(k, _)| k.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, ValueRange)> {
        self.ranges.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

pub fn fit_normalizer(
    train: &[ChoiceInstance],
    schema: &AttributeSchema,
) -> Result<NumericNormalizer, DatasetError> {
    let mut ranges = BTreeMap::new();
    for attr in schema
        .attributes
        .iter()
        .filter(|a| a.kind == AttributeKind::Continuous)
    {
        let mut range: Option<ValueRange> = None;
        for inst in train {
            if let Value::Number(v) = inst.value(&attr.name) {
                range = Some(match range {
                    None => ValueRange { min: v, max: v },
                    Some(r) => ValueRange {
                        min: r.min.min(v),
                        max: r.max.max(v),
                    },
                });
            }
        }
        let range = range.ok_or_else(|| DatasetError::EmptyAttribute {
            attribute: attr.name.clone(),
        })?;
        if range.is_degenerate() {
            log::warn!("attribute `{}` is constant in the training pool", attr.name);
        }
        ranges.insert(attr.name.clone(), range);
    }
    Ok(NumericNormalizer { ranges })
}
