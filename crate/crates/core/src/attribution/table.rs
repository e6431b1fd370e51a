use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::Aggregation;
use crate::error::{Error, Result};
use crate::net::{Network, UnitId};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnitScore {
    pub layer: usize,
    pub unit: usize,
    pub score: f64,
}

impl UnitScore {
    pub fn id(&self) -> UnitId {
        UnitId::new(self.layer, self.unit)
    }
}

/// Where a score table came from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Provenance {
    pub method: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sampling: Option<String>,
    pub sample_ids: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub aggregation: Option<Aggregation>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, String>,
}

/// One aggregated score per prunable unit, sorted by `(layer, unit)`.
///
/// Serialized as `{"scores": [{"layer", "unit", "score"}, ...], "provenance": {...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NeuronScoreTable {
    pub scores: Vec<UnitScore>,
    pub provenance: Provenance,
}

impl NeuronScoreTable {
    pub fn from_scores(scores: impl IntoIterator<Item = (UnitId, f64)>, provenance: Provenance) -> Self {
        let mut scores: Vec<UnitScore> = scores
            .into_iter()
            .map(|(id, score)| UnitScore {
                layer: id.layer,
                unit: id.unit,
                score,
            })
            .collect();
        scores.sort_by_key(|s| s.id());
        Self { scores, provenance }
    }

    pub fn get(&self, unit: UnitId) -> Option<f64> {
        self.scores
            .binary_search_by_key(&unit, |s| s.id())
            .ok()
            .map(|i| self.scores[i].score)
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Every score multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.scores.iter_mut().for_each(|s| s.score *= factor);
        out
    }

    /// Checks that the table holds exactly the network's prunable units,
    /// each once, with finite scores.
    pub fn check_covers(&self, network: &Network) -> Result<()> {
        let expected = network.prunable_units();
        let have: Vec<UnitId> = self.scores.iter().map(|s| s.id()).collect();
        let missing: Vec<UnitId> = expected.iter().copied().filter(|u| self.get(*u).is_none()).collect();
        if !missing.is_empty() {
            return Err(Error::MissingUnits(missing));
        }
        if have != expected {
            let extra: Vec<UnitId> = have.into_iter().filter(|u| !network.is_unit(*u)).collect();
            return Err(Error::UnknownUnits(extra));
        }
        if let Some(s) = self.scores.iter().find(|s| !s.score.is_finite()) {
            return Err(Error::InvalidConfig(format!("non-finite score for unit {:?}", s.id())));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("table serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::format("score table", e.to_string()))
    }
}
