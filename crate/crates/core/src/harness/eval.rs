use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Dataset, Split};
use crate::error::{Error, Result};
use crate::net::{Network, PruningMask};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub accuracy: f64,
    /// `None` for classes absent from the split.
    pub per_class: Vec<Option<f64>>,
    pub correct: usize,
    pub total: usize,
}

/// Argmax accuracy on one split, optionally under a mask. An empty mask
/// takes the unmasked path, so results match plain evaluation exactly.
pub fn evaluate(network: &Network, dataset: &Dataset, split: Split, mask: Option<&PruningMask>) -> Result<EvalResult> {
    let ids = dataset.indices(split);
    if ids.is_empty() {
        return Err(Error::EmptySplit(split.name().into()));
    }
    if let Some(m) = mask {
        network.check_mask(m)?;
    }
    let mask = mask.filter(|m| !m.is_empty());
    let predictions = ids
        .par_iter()
        .map(|&id| {
            let x = dataset.sample(id);
            let trace = match mask {
                Some(m) => network.masked_forward(x, m)?,
                None => network.forward(x, false)?,
            };
            Ok(trace.predicted_class())
        })
        .collect::<Result<Vec<usize>>>()?;

    let classes = dataset.class_count();
    let mut hits = vec![0usize; classes];
    let mut counts = vec![0usize; classes];
    for (&id, &pred) in ids.iter().zip(&predictions) {
        let label = dataset.label(id);
        counts[label] += 1;
        if pred == label {
            hits[label] += 1;
        }
    }
    let correct: usize = hits.iter().sum();
    Ok(EvalResult {
        accuracy: correct as f64 / ids.len() as f64,
        per_class: hits
            .iter()
            .zip(&counts)
            .map(|(&h, &n)| (n > 0).then(|| h as f64 / n as f64))
            .collect(),
        correct,
        total: ids.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{LayerSpec, UnitId};
    use crate::tensor::Tensor;

    fn two_class(features: &[f64], labels: &[usize]) -> Dataset {
        Dataset::new(
            vec![1],
            features.iter().map(|&f| Tensor::vector(vec![f])).collect(),
            labels.to_vec(),
            vec![Split::Test; labels.len()],
            vec!["a".into(), "b".into()],
        )
        .unwrap()
    }

    fn identity_pair() -> Network {
        // logits (−x, x): class 1 iff x > 0
        let mut net = Network::new(vec![1], vec![LayerSpec::Dense { in_units: 1, out_units: 2 }], 2).unwrap();
        net.set_params(0, vec![-1.0, 1.0], vec![0.0, 0.0]).unwrap();
        net
    }

    #[test]
    fn all_correct() {
        let ds = two_class(&[-1.0, -2.0, 1.0, 3.0], &[0, 0, 1, 1]);
        let r = evaluate(&identity_pair(), &ds, Split::Test, None).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.per_class, vec![Some(1.0), Some(1.0)]);
    }

    #[test]
    fn constant_prediction_on_balanced_split() {
        let ds = two_class(&[1.0, 2.0, 1.0, 3.0], &[0, 0, 1, 1]);
        let r = evaluate(&identity_pair(), &ds, Split::Test, None).unwrap();
        assert_eq!(r.accuracy, 0.5);
        assert_eq!(r.per_class, vec![Some(0.0), Some(1.0)]);
    }

    #[test]
    fn empty_split_and_empty_mask() {
        let ds = two_class(&[-1.0, 1.0], &[0, 1]);
        let net = identity_pair();
        assert!(matches!(evaluate(&net, &ds, Split::Val, None), Err(Error::EmptySplit(_))));
        let plain = evaluate(&net, &ds, Split::Test, None).unwrap();
        assert_eq!(evaluate(&net, &ds, Split::Test, Some(&PruningMask::empty())).unwrap(), plain);
        let bad = PruningMask::from_units([UnitId::new(3, 0)]);
        assert!(evaluate(&net, &ds, Split::Test, Some(&bad)).is_err());
    }
}
