//! Deterministic backtrace redistribution.
//!
//! This is a baseline-free proportional variant written for this crate; it
//! is not a port of any published backtrace implementation. Starting from
//! `R = |logit_target|` at the output, each dense or conv output `j` splits
//! its relevance between a positive flow over the excitatory contributions
//! `c_ij = a_i·w_ij > 0` and a negative flow over the inhibitory ones, in
//! proportion `P_j : N_j` where `P_j = Σ max(c_ij, 0)` and
//! `N_j = Σ max(−c_ij, 0)`. Within each flow an input receives its share of
//! the flow's sum, so the recombined relevance of input `i` from `j` is
//! `R_j·|c_ij| / (P_j + N_j)`. Biases take no share. When every
//! contribution to `j` is zero its relevance is spread uniformly over its
//! in-bounds inputs.
//!
//! Relevance stays non-negative, so per-layer signed totals and magnitudes
//! coincide and are conserved up to rounding, with or without biases.
//! Nothing here depends on thread count or a reference input.

use super::lrp::propagate;
use super::{check_trace, AttributionMap, Method};
use crate::error::{Error, Result};
use crate::net::{ForwardTrace, Network};

pub fn dl_backtrace(network: &Network, trace: &ForwardTrace, target: usize) -> Result<AttributionMap> {
    check_trace(network, trace, target)?;
    if trace.mask.is_some() {
        return Err(Error::UnsupportedLayer {
            method: "dlb",
            kind: "masked trace".into(),
        });
    }
    let start = trace.logits.data()[target].abs();
    propagate(network, trace, Method::Dlb, target, start, |_, taps, params, a, z, r| {
        let w = params.weight.data();
        let mut total = vec![0.0; z.len()];
        let mut fan = vec![0usize; z.len()];
        taps.for_each(|j, i, k| {
            total[j] += (a[i] * w[k]).abs();
            fan[j] += 1;
        });
        let mut r_in = vec![0.0; a.len()];
        taps.for_each(|j, i, k| {
            if r[j] == 0.0 {
                return;
            }
            r_in[i] += if total[j] > 0.0 {
                r[j] * (a[i] * w[k]).abs() / total[j]
            } else {
                r[j] / fan[j] as f64
            };
        });
        r_in
    })
}
