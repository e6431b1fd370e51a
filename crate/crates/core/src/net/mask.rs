use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A prunable unit: output unit `unit` of dense layer `layer`, or output
/// channel `unit` of conv layer `layer`.
///
/// Ordering is ascending `(layer, unit)`, which is also the pruning tie-break.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "[usize; 2]", from = "[usize; 2]")]
pub struct UnitId {
    pub layer: usize,
    pub unit: usize,
}

impl UnitId {
    pub const fn new(layer: usize, unit: usize) -> Self {
        Self { layer, unit }
    }
}

impl From<UnitId> for [usize; 2] {
    fn from(u: UnitId) -> Self {
        [u.layer, u.unit]
    }
}

impl From<[usize; 2]> for UnitId {
    fn from([layer, unit]: [usize; 2]) -> Self {
        Self { layer, unit }
    }
}

/// Set of units whose output is forced to zero.
///
/// Serialized as `{"origin": {...}, "units": [[layer, unit], ...]}` with units
/// in ascending `(layer, unit)` order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PruningMask {
    #[serde(default)]
    pub origin: BTreeMap<String, String>,
    units: BTreeSet<UnitId>,
}

impl PruningMask {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn from_units(units: impl IntoIterator<Item = UnitId>) -> Self {
        Self {
            origin: BTreeMap::new(),
            units: units.into_iter().collect(),
        }
    }

    pub fn with_origin(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.origin.insert(key.into(), value.into());
        self
    }

    pub fn contains(&self, unit: UnitId) -> bool {
        self.units.contains(&unit)
    }

    pub fn units(&self) -> impl Iterator<Item = UnitId> + '_ {
        self.units.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn is_subset(&self, other: &PruningMask) -> bool {
        self.units.is_subset(&other.units)
    }

    /// Masked unit indices of one layer.
    pub fn units_in_layer(&self, layer: usize) -> impl Iterator<Item = usize> + '_ {
        self.units
            .range(UnitId::new(layer, 0)..=UnitId::new(layer, usize::MAX))
            .map(|u| u.unit)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("mask serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::format("mask", e.to_string()))
    }
}
