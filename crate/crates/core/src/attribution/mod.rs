//! Per-unit importance from three attribution methods, and aggregation of
//! per-sample maps into one score per prunable unit.
//!
//! - [`lrp`]: layer-wise relevance propagation (epsilon or z-plus rule).
//! - [`integrated_gradients`]: path-integrated gradients, with hidden units
//!   attributed along the same input-space path.
//! - [`dl_backtrace`]: a deterministic, baseline-free proportional
//!   redistribution. This is this crate's own variant; see its docs.
//!
//! Every method attributes one pre-softmax logit. [`score_samples`] picks
//! that logit per sample by [`TargetPolicy`] (default: predicted class).

mod dlb;
mod ig;
mod lrp;
mod table;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use dlb::dl_backtrace;
pub use ig::{integrated_gradients, Baseline, IgConfig};
pub use lrp::{lrp, LrpConfig, LrpRule};
pub use table::{NeuronScoreTable, Provenance, UnitScore};

use crate::error::{Error, Result};
use crate::harness::Dataset;
use crate::net::{Network, UnitId};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Lrp,
    Ig,
    Dlb,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Lrp => "lrp",
            Method::Ig => "ig",
            Method::Dlb => "dlb",
        }
    }
}

/// Attribution of one prunable layer's output. Conv layers keep their
/// `(channels, h, w)` grid; dense layers are a vector of units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerAttribution {
    pub layer: usize,
    pub shape: Vec<usize>,
    pub scores: Vec<f64>,
}

impl LayerAttribution {
    /// One score per unit: conv channel grids are summed.
    pub fn unit_scores(&self) -> Vec<f64> {
        let plane: usize = self.shape[1..].iter().product();
        self.scores.chunks(plane).map(|c| c.iter().sum()).collect()
    }

    pub fn total(&self) -> f64 {
        self.scores.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionMap {
    pub method: Method,
    pub target_class: usize,
    /// The attributed logit, `F_target(x)`.
    pub output_score: f64,
    /// One entry per prunable layer, ascending by layer index.
    pub layers: Vec<LayerAttribution>,
    /// Attribution of the network input.
    #[serde(default)]
    pub input: Vec<f64>,
    /// Relevance methods: total relevance entering each layer from above,
    /// i.e. `relevance_sums[i]` is the sum at layer `i`'s input, and the last
    /// entry is the relevance injected at the output.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub relevance_sums: Vec<f64>,
    /// Integrated gradients: `F_target(baseline)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline_score: Option<f64>,
}

impl AttributionMap {
    pub fn layer(&self, layer: usize) -> Option<&LayerAttribution> {
        self.layers.iter().find(|l| l.layer == layer)
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().flat_map(|l| &l.scores).chain(&self.input).all(|v| v.is_finite())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("map serializes")
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregation {
    #[default]
    SignedMean,
    AbsMean,
}

/// Which logit to attribute for each sample.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetPolicy {
    /// Argmax of the unpruned model.
    #[default]
    Predicted,
    /// The sample's true label.
    Label,
}

/// Method plus per-method settings.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttributionConfig {
    pub lrp: LrpConfig,
    pub ig: IgConfig,
    pub aggregation: Aggregation,
    pub target: TargetPolicy,
}

/// Runs one attribution method on one input.
pub fn attribute(
    network: &Network,
    input: &Tensor,
    target: usize,
    method: Method,
    config: &AttributionConfig,
) -> Result<AttributionMap> {
    match method {
        Method::Ig => integrated_gradients(network, input, target, &config.ig),
        Method::Lrp => {
            let trace = network.forward(input, true)?;
            lrp(network, &trace, target, &config.lrp)
        }
        Method::Dlb => {
            let trace = network.forward(input, true)?;
            dl_backtrace(network, &trace, target)
        }
    }
}

/// Sums conv channel grids per sample, then combines samples in the given
/// order by signed or absolute mean. Covers every layer present in the maps.
pub fn aggregate_unit_scores(maps: &[AttributionMap], mode: Aggregation) -> Result<NeuronScoreTable> {
    let first = maps.first().ok_or(Error::EmptyMaps)?;
    for m in maps {
        if m.method != first.method {
            return Err(Error::MixedMethods(first.method.name().into(), m.method.name().into()));
        }
        let same_layout = m.layers.len() == first.layers.len()
            && m.layers.iter().zip(&first.layers).all(|(a, b)| a.layer == b.layer && a.shape == b.shape);
        if !same_layout {
            return Err(Error::InvalidConfig("attribution maps come from different networks".into()));
        }
    }
    let n = maps.len() as f64;
    let mut scores = Vec::new();
    for (k, layer) in first.layers.iter().enumerate() {
        let units = layer.shape[0];
        let mut acc = vec![0.0; units];
        for m in maps {
            for (a, s) in acc.iter_mut().zip(m.layers[k].unit_scores()) {
                *a += match mode {
                    Aggregation::SignedMean => s,
                    Aggregation::AbsMean => s.abs(),
                };
            }
        }
        scores.extend(acc.into_iter().enumerate().map(|(u, s)| (UnitId::new(layer.layer, u), s / n)));
    }
    let provenance = Provenance {
        method: first.method.name().to_owned(),
        aggregation: Some(mode),
        ..Provenance::default()
    };
    Ok(NeuronScoreTable::from_scores(scores, provenance))
}

/// Attributes each listed sample (in parallel) and aggregates in list
/// order, so the result does not depend on scheduling.
pub fn score_samples(
    network: &Network,
    dataset: &Dataset,
    sample_ids: &[usize],
    method: Method,
    config: &AttributionConfig,
) -> Result<NeuronScoreTable> {
    let maps = sample_ids
        .par_iter()
        .map(|&id| {
            let x = dataset.sample(id);
            let target = match config.target {
                TargetPolicy::Predicted => network.forward(x, false)?.predicted_class(),
                TargetPolicy::Label => dataset.label(id),
            };
            attribute(network, x, target, method, config)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut table = aggregate_unit_scores(&maps, config.aggregation)?;
    table.provenance.sample_ids = sample_ids.to_vec();
    table.provenance.target = Some(
        match config.target {
            TargetPolicy::Predicted => "predicted",
            TargetPolicy::Label => "label",
        }
        .to_owned(),
    );
    Ok(table)
}

pub(crate) fn check_trace(network: &Network, trace: &crate::net::ForwardTrace, target: usize) -> Result<()> {
    if !trace.is_recorded() || trace.outputs.len() != network.layers().len() {
        return Err(Error::MissingTrace);
    }
    if target >= network.class_count() {
        return Err(Error::LabelOutOfRange {
            label: target,
            class_count: network.class_count(),
        });
    }
    Ok(())
}
