//! Method × sampling × rate × seed grid over one frozen network.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{evaluate, Dataset, Split};
use crate::attribution::{score_samples, AttributionConfig, Method, NeuronScoreTable};
use crate::error::{Error, Result};
use crate::net::Network;
use crate::pruning::{efficiency, magnitude_scores, random_scores, rank_and_mask, PrunePlan, Scope};
use crate::sampling::{self, Strategy, DEFAULT_SAMPLES_PER_CLASS};

pub const SWEEP_VERSION: u64 = 1;

/// Rates of the four-column preset.
pub const TABLE1_RATES: [f64; 4] = [0.15, 0.30, 0.50, 0.70];

/// 0, 0.05, ..., 0.9.
pub fn rate_grid_fine() -> Vec<f64> {
    (0..=18).map(|i| i as f64 / 20.0).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreMethod {
    Lrp,
    Ig,
    Dlb,
    Magnitude,
    Random,
}

impl ScoreMethod {
    pub const ALL: [ScoreMethod; 5] = [
        ScoreMethod::Lrp,
        ScoreMethod::Ig,
        ScoreMethod::Dlb,
        ScoreMethod::Magnitude,
        ScoreMethod::Random,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScoreMethod::Lrp => "lrp",
            ScoreMethod::Ig => "ig",
            ScoreMethod::Dlb => "dlb",
            ScoreMethod::Magnitude => "magnitude",
            ScoreMethod::Random => "random",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == name)
    }

    /// The attribution method, or `None` for the weight-only baselines.
    pub fn attribution(self) -> Option<Method> {
        match self {
            ScoreMethod::Lrp => Some(Method::Lrp),
            ScoreMethod::Ig => Some(Method::Ig),
            ScoreMethod::Dlb => Some(Method::Dlb),
            ScoreMethod::Magnitude | ScoreMethod::Random => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SamplingLabel {
    #[serde(rename = "confidence")]
    Confidence,
    #[serde(rename = "random")]
    Random,
    #[serde(rename = "clustering")]
    Clustering,
    /// Baselines, which use no samples.
    #[serde(rename = "n/a")]
    NotApplicable,
}

impl SamplingLabel {
    pub fn name(self) -> &'static str {
        match self {
            SamplingLabel::Confidence => "confidence",
            SamplingLabel::Random => "random",
            SamplingLabel::Clustering => "clustering",
            SamplingLabel::NotApplicable => "n/a",
        }
    }
}

impl From<Strategy> for SamplingLabel {
    fn from(s: Strategy) -> Self {
        match s {
            Strategy::Confidence => SamplingLabel::Confidence,
            Strategy::Random => SamplingLabel::Random,
            Strategy::Clustering => SamplingLabel::Clustering,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub methods: Vec<ScoreMethod>,
    pub samplings: Vec<Strategy>,
    pub rates: Vec<f64>,
    pub seeds: Vec<u64>,
    pub samples_per_class: usize,
    pub scope: Scope,
    pub protected_layers: BTreeSet<usize>,
    pub attribution: AttributionConfig,
    pub split: Split,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            methods: ScoreMethod::ALL.to_vec(),
            samplings: vec![Strategy::Confidence, Strategy::Random, Strategy::Clustering],
            rates: TABLE1_RATES.to_vec(),
            seeds: (0..5).collect(),
            samples_per_class: DEFAULT_SAMPLES_PER_CLASS,
            scope: Scope::PerLayer,
            protected_layers: BTreeSet::new(),
            attribution: AttributionConfig::default(),
            split: Split::Test,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(&r) = self.rates.iter().find(|r| !(0.0..=1.0).contains(*r)) {
            return Err(Error::InvalidRate(r));
        }
        let empty = [
            ("methods", self.methods.is_empty()),
            ("rates", self.rates.is_empty()),
            ("seeds", self.seeds.is_empty()),
        ];
        if let Some((key, _)) = empty.iter().find(|(_, e)| *e) {
            return Err(Error::InvalidConfig(format!("sweep.{key} is empty")));
        }
        let needs_sampling = self.methods.iter().any(|m| m.attribution().is_some());
        if needs_sampling && self.samplings.is_empty() {
            return Err(Error::InvalidConfig("sweep.samplings is empty".into()));
        }
        if self.samples_per_class == 0 {
            return Err(Error::InvalidConfig("sweep.samples_per_class must be positive".into()));
        }
        Ok(())
    }

    /// `(method, sampling)` pairs in canonical order, baselines paired with n/a.
    pub fn cells(&self) -> Vec<(ScoreMethod, SamplingLabel, Option<Strategy>)> {
        let methods: BTreeSet<ScoreMethod> = self.methods.iter().copied().collect();
        let samplings: BTreeSet<Strategy> = self.samplings.iter().copied().collect();
        let mut out = Vec::new();
        for m in methods {
            if m.attribution().is_some() {
                out.extend(samplings.iter().map(|&s| (m, s.into(), Some(s))));
            } else {
                out.push((m, SamplingLabel::NotApplicable, None));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepRecord {
    pub method: ScoreMethod,
    pub sampling: SamplingLabel,
    pub rate: f64,
    pub seed: u64,
    /// `None` when the cell failed; see `error`.
    pub accuracy: Option<f64>,
    pub acc_drop: Option<f64>,
    pub masked_units: usize,
    pub masked_fraction: f64,
    pub skipped_macs: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl SweepRecord {
    fn key(&self) -> (ScoreMethod, SamplingLabel, u64, u64) {
        (self.method, self.sampling, ordered_bits(self.rate), self.seed)
    }
}

/// Monotone map from non-negative floats to integers for sorting.
fn ordered_bits(x: f64) -> u64 {
    x.to_bits()
}

/// Mean and sample standard deviation across seeds of one
/// `(method, sampling, rate)` cell. Failed records are counted but excluded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SummaryRow {
    pub method: ScoreMethod,
    pub sampling: SamplingLabel,
    pub rate: f64,
    pub runs: usize,
    pub failed: usize,
    pub mean_accuracy: Option<f64>,
    pub mean_drop: Option<f64>,
    /// `None` with fewer than two completed runs.
    pub std_drop: Option<f64>,
    pub mean_masked_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepProvenance {
    pub config: SweepConfig,
    pub checkpoint_digest: Option<String>,
    pub total_units: usize,
    pub total_macs: usize,
    #[serde(default)]
    pub extra: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepReport {
    pub format_version: u64,
    pub baseline_accuracy: f64,
    pub records: Vec<SweepRecord>,
    pub summary: Vec<SummaryRow>,
    pub provenance: SweepProvenance,
}

impl SweepReport {
    /// Sorts records canonically and rebuilds the summary from them.
    pub fn new(baseline_accuracy: f64, mut records: Vec<SweepRecord>, provenance: SweepProvenance) -> Self {
        records.sort_by_key(SweepRecord::key);
        let summary = summarize(&records);
        Self {
            format_version: SWEEP_VERSION,
            baseline_accuracy,
            records,
            summary,
            provenance,
        }
    }

    pub fn failed(&self) -> impl Iterator<Item = &SweepRecord> {
        self.records.iter().filter(|r| r.error.is_some())
    }

    pub fn row(&self, method: ScoreMethod, sampling: SamplingLabel, rate: f64) -> Option<&SummaryRow> {
        self.summary
            .iter()
            .find(|r| r.method == method && r.sampling == sampling && r.rate == rate)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::format("sweep report", e.to_string()))?;
        let found = value.get("format_version").and_then(|v| v.as_u64());
        match found {
            Some(SWEEP_VERSION) => {}
            Some(v) => {
                return Err(Error::UnsupportedVersion {
                    found: v,
                    expected: SWEEP_VERSION,
                })
            }
            None => return Err(Error::format("sweep report", "missing format_version")),
        }
        serde_json::from_value(value).map_err(|e| Error::format("sweep report", e.to_string()))
    }
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

fn sample_std(xs: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let m = mean(xs)?;
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    Some((ss / (xs.len() - 1) as f64).sqrt())
}

/// Groups canonically ordered records by `(method, sampling, rate)`.
pub fn summarize(records: &[SweepRecord]) -> Vec<SummaryRow> {
    records
        .chunk_by(|a, b| a.method == b.method && a.sampling == b.sampling && a.rate == b.rate)
        .map(|group| {
            let done: Vec<&SweepRecord> = group.iter().filter(|r| r.accuracy.is_some()).collect();
            let acc: Vec<f64> = done.iter().filter_map(|r| r.accuracy).collect();
            let drops: Vec<f64> = done.iter().filter_map(|r| r.acc_drop).collect();
            let fractions: Vec<f64> = group.iter().map(|r| r.masked_fraction).collect();
            SummaryRow {
                method: group[0].method,
                sampling: group[0].sampling,
                rate: group[0].rate,
                runs: group.len(),
                failed: group.len() - done.len(),
                mean_accuracy: mean(&acc),
                mean_drop: mean(&drops),
                std_drop: sample_std(&drops),
                mean_masked_fraction: mean(&fractions).unwrap_or(0.0),
            }
        })
        .collect()
}

fn cell_scores(
    network: &Network,
    dataset: &Dataset,
    config: &SweepConfig,
    method: ScoreMethod,
    strategy: Option<Strategy>,
    seed: u64,
) -> Result<NeuronScoreTable> {
    match (method.attribution(), strategy) {
        (Some(m), Some(s)) => {
            let plan = sampling::select(s, network, dataset, config.samples_per_class, seed)?;
            let mut table = score_samples(network, dataset, &plan.ids(), m, &config.attribution)?;
            table.provenance.sampling = Some(s.name().into());
            table.provenance.seed = Some(seed);
            Ok(table)
        }
        (None, _) if method == ScoreMethod::Magnitude => Ok(magnitude_scores(network)),
        (None, _) => Ok(random_scores(network, seed)),
        (Some(_), None) => unreachable!("attribution cells always carry a strategy"),
    }
}

/// Runs every cell of the grid against the frozen `network`. A cell that
/// fails is kept as records with an `error` and no accuracy; only errors
/// in the shared baseline evaluation abort the sweep.
pub fn run_sweep(
    network: &Network,
    dataset: &Dataset,
    config: &SweepConfig,
    checkpoint_digest: Option<String>,
) -> Result<SweepReport> {
    config.validate()?;
    let baseline = evaluate(network, dataset, config.split, None)?.accuracy;
    let total_units = network.prunable_units().len();

    let jobs: Vec<_> = config
        .cells()
        .into_iter()
        .flat_map(|(m, label, s)| config.seeds.iter().map(move |&seed| (m, label, s, seed)))
        .collect();
    let records: Vec<SweepRecord> = jobs
        .par_iter()
        .flat_map_iter(|&(method, sampling, strategy, seed)| {
            let scores = cell_scores(network, dataset, config, method, strategy, seed);
            config.rates.iter().map(move |&rate| {
                let blank = SweepRecord {
                    method,
                    sampling,
                    rate,
                    seed,
                    accuracy: None,
                    acc_drop: None,
                    masked_units: 0,
                    masked_fraction: 0.0,
                    skipped_macs: 0,
                    error: None,
                };
                let outcome = scores.as_ref().map_err(|e| e.to_string()).and_then(|table| {
                    let plan = PrunePlan {
                        rate,
                        scope: config.scope,
                        protected_layers: config.protected_layers.clone(),
                    };
                    let mask = rank_and_mask(table, &plan).map_err(|e| e.to_string())?;
                    let acc = evaluate(network, dataset, config.split, Some(&mask))
                        .map_err(|e| e.to_string())?
                        .accuracy;
                    Ok((mask, acc))
                });
                match outcome {
                    Ok((mask, acc)) => {
                        let eff = efficiency(network, &mask);
                        SweepRecord {
                            accuracy: Some(acc),
                            acc_drop: Some(baseline - acc),
                            masked_units: eff.masked_units,
                            masked_fraction: eff.masked_unit_fraction,
                            skipped_macs: eff.skipped_macs,
                            ..blank
                        }
                    }
                    Err(e) => {
                        log::warn!("sweep cell {}/{} rate {rate} seed {seed} failed: {e}", method.name(), sampling.name());
                        SweepRecord {
                            error: Some(e),
                            ..blank
                        }
                    }
                }
            })
        })
        .collect();

    let mut extra = BTreeMap::new();
    extra.insert("evaluated_split".into(), config.split.name().into());
    Ok(SweepReport::new(
        baseline,
        records,
        SweepProvenance {
            config: config.clone(),
            checkpoint_digest,
            total_units,
            total_macs: network.total_macs(),
            extra,
        },
    ))
}
