//! Per-class selection of the training samples that attributions are
//! computed on: highest confidence, seeded random, or k-means
//! representatives of penultimate-layer activations.

pub mod kmeans;

use std::collections::BTreeMap;

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::{Dataset, Split};
use crate::net::Network;
use crate::rng::{self, tag};

pub const DEFAULT_SAMPLES_PER_CLASS: usize = 10;
pub const KMEANS_MAX_ITER: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Confidence,
    Random,
    Clustering,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Confidence => "confidence",
            Strategy::Random => "random",
            Strategy::Clustering => "clustering",
        }
    }
}

/// Selected training-sample ids per class.
///
/// Serialized as `{"strategy", "samples_per_class", "seed", "selected": {"<class>": [ids]}}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplePlan {
    pub strategy: Strategy,
    pub samples_per_class: usize,
    pub seed: u64,
    pub selected: BTreeMap<usize, Vec<usize>>,
}

impl SamplePlan {
    /// All ids, class by class.
    pub fn ids(&self) -> Vec<usize> {
        self.selected.values().flatten().copied().collect()
    }

    /// Classes that had fewer training samples than requested.
    pub fn short_classes(&self) -> Vec<usize> {
        self.selected
            .iter()
            .filter(|(_, ids)| ids.len() < self.samples_per_class)
            .map(|(&c, _)| c)
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }
}

fn check_n(n: usize) -> Result<()> {
    if n == 0 {
        Err(Error::InvalidConfig("samples_per_class must be positive".into()))
    } else {
        Ok(())
    }
}

/// For each class `c`, the `n` training samples of class `c` with the
/// highest softmax probability for `c`, ties broken by ascending id.
/// Correctness of the prediction is not required.
pub fn sample_confidence(network: &Network, dataset: &Dataset, n: usize) -> Result<SamplePlan> {
    check_n(n)?;
    let mut selected = BTreeMap::new();
    for class in 0..dataset.class_count() {
        let ids = dataset.class_indices(Split::Train, class);
        let probs = ids
            .par_iter()
            .map(|&id| Ok(network.forward(dataset.sample(id), false)?.probs.data()[class]))
            .collect::<Result<Vec<f64>>>()?;
        let mut ranked: Vec<(f64, usize)> = probs.into_iter().zip(ids).collect();
        ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let mut pick: Vec<usize> = ranked.into_iter().take(n).map(|(_, id)| id).collect();
        pick.sort_unstable();
        selected.insert(class, pick);
    }
    Ok(SamplePlan {
        strategy: Strategy::Confidence,
        samples_per_class: n,
        seed: 0,
        selected,
    })
}

/// Seeded uniform selection without replacement within each class.
pub fn sample_random(dataset: &Dataset, n: usize, seed: u64) -> Result<SamplePlan> {
    check_n(n)?;
    let mut selected = BTreeMap::new();
    for class in 0..dataset.class_count() {
        let ids = dataset.class_indices(Split::Train, class);
        let mut pick: Vec<usize> = if n >= ids.len() {
            ids
        } else {
            let mut r = rng::stream(seed, &[tag::SAMPLE_RANDOM, class as u64]);
            index::sample(&mut r, ids.len(), n).into_iter().map(|i| ids[i]).collect()
        };
        pick.sort_unstable();
        selected.insert(class, pick);
    }
    Ok(SamplePlan {
        strategy: Strategy::Random,
        samples_per_class: n,
        seed,
        selected,
    })
}

/// Per class, k-means with `k = min(n, n_c)` over penultimate activations
/// (the input of the classifier layer), keeping the member nearest each
/// centroid.
pub fn sample_clustering(network: &Network, dataset: &Dataset, n: usize, seed: u64) -> Result<SamplePlan> {
    check_n(n)?;
    let classifier = network.classifier_layer();
    let mut selected = BTreeMap::new();
    for class in 0..dataset.class_count() {
        let ids = dataset.class_indices(Split::Train, class);
        if ids.is_empty() {
            return Err(Error::EmptyClass(class));
        }
        let mut pick = if n >= ids.len() {
            ids
        } else {
            let embeddings = ids
                .par_iter()
                .map(|&id| Ok(network.forward(dataset.sample(id), true)?.inputs[classifier].data().to_vec()))
                .collect::<Result<Vec<_>>>()?;
            let result = kmeans::kmeans(&embeddings, n, seed ^ class as u64, KMEANS_MAX_ITER);
            kmeans::representatives(&embeddings, &result).into_iter().map(|i| ids[i]).collect()
        };
        pick.sort_unstable();
        selected.insert(class, pick);
    }
    Ok(SamplePlan {
        strategy: Strategy::Clustering,
        samples_per_class: n,
        seed,
        selected,
    })
}

pub fn select(strategy: Strategy, network: &Network, dataset: &Dataset, n: usize, seed: u64) -> Result<SamplePlan> {
    match strategy {
        Strategy::Confidence => sample_confidence(network, dataset, n),
        Strategy::Random => sample_random(dataset, n, seed),
        Strategy::Clustering => sample_clustering(network, dataset, n, seed),
    }
}
