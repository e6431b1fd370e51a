//! Ranking units by score, building masks at a pruning rate, baseline
//! scorers, and exporting pruned checkpoints.

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::attribution::{NeuronScoreTable, Provenance};
use crate::error::{Error, Result};
use crate::net::{Checkpoint, Network, PruningMask, UnitId};
use crate::rng::{self, tag};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scope {
    /// Bottom fraction of every unprotected layer.
    #[default]
    PerLayer,
    /// Bottom fraction of all unprotected units pooled together.
    Global,
}

impl Scope {
    pub fn name(self) -> &'static str {
        match self {
            Scope::PerLayer => "per-layer",
            Scope::Global => "global",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrunePlan {
    pub rate: f64,
    #[serde(default)]
    pub scope: Scope,
    /// Layers never pruned. The classifier layer (the highest layer in the
    /// score table) is always protected in addition to these.
    #[serde(default)]
    pub protected_layers: BTreeSet<usize>,
}

impl PrunePlan {
    pub fn new(rate: f64, scope: Scope) -> Self {
        Self {
            rate,
            scope,
            protected_layers: BTreeSet::new(),
        }
    }
}

/// `floor(rate · n)`, with a tolerance so that products which are integers
/// in exact arithmetic (0.29 · 100) are not rounded down by one.
pub fn prune_count(rate: f64, n: usize) -> usize {
    ((rate * n as f64 + 1e-9).floor() as usize).min(n)
}

/// Lowest-scoring units at `plan.rate`, ties broken by ascending
/// `(layer, unit)`.
pub fn rank_and_mask(scores: &NeuronScoreTable, plan: &PrunePlan) -> Result<PruningMask> {
    if !(0.0..=1.0).contains(&plan.rate) {
        return Err(Error::InvalidRate(plan.rate));
    }
    check_contiguous(scores)?;
    let mut protected = plan.protected_layers.clone();
    if let Some(last) = scores.scores.iter().map(|s| s.layer).max() {
        protected.insert(last);
    }
    let mut candidates: Vec<(f64, UnitId)> = scores
        .scores
        .iter()
        .filter(|s| !protected.contains(&s.layer))
        .map(|s| (s.score, s.id()))
        .collect();
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let chosen: Vec<UnitId> = match plan.scope {
        Scope::Global => {
            let k = prune_count(plan.rate, candidates.len());
            candidates.into_iter().take(k).map(|(_, u)| u).collect()
        }
        Scope::PerLayer => {
            let layers: BTreeSet<usize> = candidates.iter().map(|(_, u)| u.layer).collect();
            layers
                .into_iter()
                .flat_map(|layer| {
                    let in_layer: Vec<UnitId> =
                        candidates.iter().filter(|(_, u)| u.layer == layer).map(|&(_, u)| u).collect();
                    let k = prune_count(plan.rate, in_layer.len());
                    in_layer.into_iter().take(k)
                })
                .collect()
        }
    };
    let method = if scores.provenance.method.is_empty() {
        "unknown"
    } else {
        scores.provenance.method.as_str()
    };
    Ok(PruningMask::from_units(chosen)
        .with_origin("method", method)
        .with_origin("rate", plan.rate.to_string())
        .with_origin("scope", plan.scope.name()))
}

/// Units of every layer must be numbered `0..n` with no gaps or repeats.
fn check_contiguous(scores: &NeuronScoreTable) -> Result<()> {
    let mut missing = Vec::new();
    let mut expected = UnitId::new(usize::MAX, 0);
    for s in &scores.scores {
        let id = s.id();
        if id.layer != expected.layer {
            expected = UnitId::new(id.layer, 0);
        }
        if id.unit < expected.unit {
            return Err(Error::InvalidConfig(format!("duplicate unit {id:?} in score table")));
        }
        missing.extend((expected.unit..id.unit).map(|u| UnitId::new(id.layer, u)));
        expected = UnitId::new(id.layer, id.unit + 1);
    }
    if missing.is_empty() {
        Ok(())
    } else {
        Err(Error::MissingUnits(missing))
    }
}

/// L1 norm of each unit's incoming weights plus `|bias|`.
pub fn magnitude_scores(network: &Network) -> NeuronScoreTable {
    let mut scores = Vec::new();
    for layer in network.prunable_layers() {
        let p = network.params(layer).expect("prunable layers have params");
        let units = p.bias.len();
        let fan_in = p.weight.len() / units;
        for u in 0..units {
            let l1: f64 = p.weight.data()[u * fan_in..(u + 1) * fan_in].iter().map(|w| w.abs()).sum();
            scores.push((UnitId::new(layer, u), l1 + p.bias.data()[u].abs()));
        }
    }
    NeuronScoreTable::from_scores(
        scores,
        Provenance {
            method: "magnitude".into(),
            ..Provenance::default()
        },
    )
}

/// Seeded uniform scores in `[0, 1)`, drawn in `(layer, unit)` order.
pub fn random_scores(network: &Network, seed: u64) -> NeuronScoreTable {
    let mut r = rng::stream(seed, &[tag::RANDOM_SCORES]);
    let scores: Vec<(UnitId, f64)> = network
        .prunable_units()
        .into_iter()
        .map(|u| (u, r.random::<f64>()))
        .collect();
    NeuronScoreTable::from_scores(
        scores,
        Provenance {
            method: "random".into(),
            seed: Some(seed),
            ..Provenance::default()
        },
    )
}

/// Copy of `network` with each masked unit's incoming weights and bias set
/// to zero, carrying the mask in the checkpoint manifest.
pub fn export_pruned(network: &Network, mask: &PruningMask) -> Result<Checkpoint> {
    network.check_mask(mask)?;
    let mut pruned = network.clone();
    for unit in mask.units() {
        let p = pruned.params_mut(unit.layer).expect("mask checked against network");
        let fan_in = p.weight.len() / p.bias.len();
        p.weight.data_mut()[unit.unit * fan_in..(unit.unit + 1) * fan_in].fill(0.0);
        p.bias.data_mut()[unit.unit] = 0.0;
    }
    Ok(Checkpoint {
        network: pruned,
        mask: (!mask.is_empty()).then(|| mask.clone()),
    })
}

/// Masked share of the network's prunable units and of its dense/conv
/// multiply-accumulates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Efficiency {
    pub masked_units: usize,
    pub masked_unit_fraction: f64,
    pub skipped_macs: usize,
    pub skipped_mac_fraction: f64,
}

pub fn efficiency(network: &Network, mask: &PruningMask) -> Efficiency {
    let total_units = network.prunable_units().len();
    let skipped: usize = mask.units().map(|u| network.macs_per_unit(u.layer)).sum();
    let total_macs = network.total_macs();
    Efficiency {
        masked_units: mask.len(),
        masked_unit_fraction: mask.len() as f64 / total_units as f64,
        skipped_macs: skipped,
        skipped_mac_fraction: if total_macs == 0 {
            0.0
        } else {
            skipped as f64 / total_macs as f64
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn table(scores: &[(usize, usize, f64)]) -> NeuronScoreTable {
        NeuronScoreTable::from_scores(
            scores.iter().map(|&(l, u, s)| (UnitId::new(l, u), s)),
            Provenance::default(),
        )
    }

    #[test]
    fn two_lowest_of_four() {
        let t = table(&[(0, 0, 0.5), (0, 1, -0.2), (0, 2, 0.1), (0, 3, 0.9), (2, 0, 0.0)]);
        let mask = rank_and_mask(&t, &PrunePlan::new(0.5, Scope::PerLayer)).unwrap();
        assert_eq!(mask.units().collect::<Vec<_>>(), vec![UnitId::new(0, 1), UnitId::new(0, 2)]);
        assert!(rank_and_mask(&t, &PrunePlan::new(0.0, Scope::PerLayer)).unwrap().is_empty());
    }

    #[test]
    fn rate_bounds_and_gaps() {
        let t = table(&[(0, 0, 0.5), (1, 0, 0.1)]);
        assert!(matches!(rank_and_mask(&t, &PrunePlan::new(1.5, Scope::Global)), Err(Error::InvalidRate(_))));
        assert!(matches!(rank_and_mask(&t, &PrunePlan::new(-0.1, Scope::Global)), Err(Error::InvalidRate(_))));
        let gap = table(&[(0, 0, 0.5), (0, 2, 0.1), (1, 0, 0.0)]);
        assert!(matches!(
            rank_and_mask(&gap, &PrunePlan::new(0.5, Scope::Global)),
            Err(Error::MissingUnits(m)) if m == vec![UnitId::new(0, 1)]
        ));
    }

    #[test]
    fn floor_rule_on_tiny_layers() {
        assert_eq!(prune_count(0.15, 6), 0);
        assert_eq!(prune_count(0.29, 100), 29);
        assert_eq!(prune_count(0.7, 10), 7);
        assert_eq!(prune_count(1.0, 3), 3);
    }

    #[test]
    fn magnitude_by_hand_and_ties() {
        let mut net = Network::mlp(2, &[2], 1).unwrap();
        net.set_params(0, vec![1.0, -2.0, 0.0, 0.0], vec![0.5, 0.0]).unwrap();
        let m = magnitude_scores(&net);
        assert_eq!(m.get(UnitId::new(0, 0)), Some(3.5));
        assert_eq!(m.get(UnitId::new(0, 1)), Some(0.0));

        let mut net = Network::new(
            vec![3],
            vec![crate::net::LayerSpec::Dense { in_units: 3, out_units: 2 }],
            2,
        )
        .unwrap();
        net.set_params(0, vec![3.0, 0.0, 0.0, 1.0, 1.0, 1.0], vec![0.0, 0.0]).unwrap();
        let m = magnitude_scores(&net);
        assert_eq!(m.get(UnitId::new(0, 0)), m.get(UnitId::new(0, 1)));
        let plan = PrunePlan {
            rate: 0.5,
            scope: Scope::Global,
            protected_layers: BTreeSet::new(),
        };
        // the only layer is the classifier, so nothing can be pruned
        assert!(rank_and_mask(&m, &plan).unwrap().is_empty());
        let mut relabeled = m.clone();
        relabeled.scores.push(crate::attribution::UnitScore {
            layer: 5,
            unit: 0,
            score: 0.0,
        });
        let mask = rank_and_mask(&relabeled, &plan).unwrap();
        assert_eq!(mask.units().collect::<Vec<_>>(), vec![UnitId::new(0, 0)]);
    }

    #[test]
    fn random_scores_are_seeded() {
        let net = Network::mlp(4, &[8, 6], 3).unwrap();
        let a = random_scores(&net, 3);
        assert_eq!(a, random_scores(&net, 3));
        assert_ne!(a, random_scores(&net, 4));
        assert!(a.scores.iter().all(|s| (0.0..1.0).contains(&s.score)));
        let mask = rank_and_mask(&a, &PrunePlan::new(0.5, Scope::PerLayer)).unwrap();
        assert_eq!(mask.units_in_layer(0).count(), 4);
        assert_eq!(mask.units_in_layer(2).count(), 3);
        assert_eq!(mask.units_in_layer(4).count(), 0);
    }

    fn all_ones() -> Network {
        let mut net = Network::mlp(2, &[2], 1).unwrap();
        net.set_params(0, vec![1.0; 4], vec![0.0; 2]).unwrap();
        net.set_params(2, vec![1.0; 2], vec![0.0]).unwrap();
        net
    }

    #[test]
    fn exported_checkpoint_reloads_to_hand_value() {
        let net = all_ones();
        let mask = PruningMask::from_units([UnitId::new(0, 0)]);
        let ck = export_pruned(&net, &mask).unwrap();
        let loaded = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
        let t = loaded.network.forward(&Tensor::vector(vec![1.0, 1.0]), false).unwrap();
        assert_eq!(t.logits.data(), &[2.0]);
        assert_eq!(loaded.mask, Some(mask));
    }

    #[test]
    fn empty_mask_export_matches_plain_export() {
        let mut net = Network::mlp(3, &[4], 2).unwrap();
        net.init_kaiming(8);
        let plain = Checkpoint::new(net.clone()).to_bytes();
        let pruned = export_pruned(&net, &PruningMask::empty()).unwrap().to_bytes();
        assert_eq!(plain, pruned);
    }

    #[test]
    fn efficiency_counts() {
        let net = all_ones();
        let e = efficiency(&net, &PruningMask::from_units([UnitId::new(0, 1)]));
        assert_eq!(e.masked_units, 1);
        assert!((e.masked_unit_fraction - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(e.skipped_macs, 2);
        assert!((e.skipped_mac_fraction - 2.0 / 6.0).abs() < 1e-15);
    }
}
