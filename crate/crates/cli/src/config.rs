//! The JSON run configuration. Unknown keys are rejected everywhere.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use prunekit_core::attribution::{Aggregation, AttributionConfig, IgConfig, LrpConfig, TargetPolicy};
use prunekit_core::harness::{rate_grid_fine, ScoreMethod, SweepConfig, SyntheticConfig, TABLE1_RATES};
use prunekit_core::net::{LayerSpec, Network};
use prunekit_core::sampling::{Strategy, DEFAULT_SAMPLES_PER_CLASS};
use prunekit_core::{PrunePlan, Scope, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::fail::{CliError, Code};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetSection,
    #[serde(default)]
    pub model: Option<ModelSection>,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub attribution: AttributionSection,
    #[serde(default)]
    pub sampling: SamplingSection,
    #[serde(default)]
    pub prune: PruneSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub output: OutputSection,
}

/// Either a file (`.nds`) / directory of CSVs, or a synthetic spec.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub path: Option<PathBuf>,
    pub synthetic: Option<SyntheticConfig>,
    /// Seed for the 80/10/10 split of a single `data.csv`.
    #[serde(default)]
    pub split_seed: u64,
    /// Standardize with train-split statistics after loading.
    #[serde(default = "yes")]
    pub normalize: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelSection {
    SmallCnn {
        #[serde(default = "default_channels")]
        channels: [usize; 2],
        #[serde(default = "default_hidden")]
        hidden: usize,
    },
    Mlp {
        #[serde(default = "default_mlp_hidden")]
        hidden: Vec<usize>,
    },
    Layers {
        layers: Vec<LayerSpec>,
    },
}

fn default_channels() -> [usize; 2] {
    [16, 16]
}

fn default_hidden() -> usize {
    64
}

fn default_mlp_hidden() -> Vec<usize> {
    vec![64]
}

impl ModelSection {
    /// The architecture for samples of `shape`: a small CNN for images and
    /// an MLP for flat vectors unless the config says otherwise.
    pub fn build(section: Option<&ModelSection>, shape: &[usize], classes: usize) -> Result<Network, CliError> {
        let auto;
        let section = match section {
            Some(s) => s,
            None => {
                auto = if shape.len() == 3 {
                    ModelSection::SmallCnn {
                        channels: default_channels(),
                        hidden: default_hidden(),
                    }
                } else {
                    ModelSection::Mlp {
                        hidden: default_mlp_hidden(),
                    }
                };
                &auto
            }
        };
        let net = match (section, shape) {
            (ModelSection::SmallCnn { channels, hidden }, &[c, h, w]) => {
                Network::small_cnn([c, h, w], *channels, *hidden, classes)
            }
            (ModelSection::SmallCnn { .. }, _) => {
                return Err(CliError::new(Code::Config, "model.kind small-cnn needs image samples"))
            }
            (ModelSection::Mlp { hidden }, _) => {
                let mut net = Network::mlp(shape.iter().product(), hidden, classes);
                if shape.len() != 1 {
                    // flatten images in front of the dense stack
                    net = net.and_then(|n| {
                        let mut specs = vec![LayerSpec::Flatten];
                        specs.extend(n.specs());
                        Network::new(shape.to_vec(), specs, classes)
                    });
                }
                net
            }
            (ModelSection::Layers { layers }, _) => Network::new(shape.to_vec(), layers.clone(), classes),
        };
        net.map_err(|e| CliError::new(Code::Config, format!("model: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttributionSection {
    pub method: ScoreMethod,
    pub lrp: LrpConfig,
    pub ig: IgConfig,
    pub aggregation: Aggregation,
    pub target: TargetPolicy,
}

impl Default for AttributionSection {
    fn default() -> Self {
        let base = AttributionConfig::default();
        Self {
            method: ScoreMethod::Lrp,
            lrp: base.lrp,
            ig: base.ig,
            aggregation: base.aggregation,
            target: base.target,
        }
    }
}

impl AttributionSection {
    pub fn config(&self) -> AttributionConfig {
        AttributionConfig {
            lrp: self.lrp.clone(),
            ig: self.ig.clone(),
            aggregation: self.aggregation,
            target: self.target,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplingSection {
    pub strategy: Strategy,
    pub samples_per_class: usize,
    pub seed: u64,
}

impl Default for SamplingSection {
    fn default() -> Self {
        Self {
            strategy: Strategy::Confidence,
            samples_per_class: DEFAULT_SAMPLES_PER_CLASS,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PruneSection {
    pub rate: f64,
    pub scope: Scope,
    pub protected_layers: BTreeSet<usize>,
}

impl Default for PruneSection {
    fn default() -> Self {
        Self {
            rate: 0.3,
            scope: Scope::PerLayer,
            protected_layers: BTreeSet::new(),
        }
    }
}

impl PruneSection {
    pub fn plan(&self) -> PrunePlan {
        PrunePlan {
            rate: self.rate,
            scope: self.scope,
            protected_layers: self.protected_layers.clone(),
        }
    }
}

/// Named rate grids, or an explicit list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RateGrid {
    Preset(Preset),
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// 0.15, 0.30, 0.50, 0.70.
    Table1,
    /// 0 to 0.9 in steps of 0.05.
    Fine,
}

impl RateGrid {
    pub fn rates(&self) -> Vec<f64> {
        match self {
            RateGrid::Preset(Preset::Table1) => TABLE1_RATES.to_vec(),
            RateGrid::Preset(Preset::Fine) => rate_grid_fine(),
            RateGrid::Explicit(r) => r.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub methods: Vec<ScoreMethod>,
    pub samplings: Vec<Strategy>,
    pub rates: RateGrid,
    pub seeds: Vec<u64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        let base = SweepConfig::default();
        Self {
            methods: base.methods,
            samplings: base.samplings,
            rates: RateGrid::Preset(Preset::Table1),
            seeds: base.seeds,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: "out".into() }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::new(Code::Config, format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| CliError::new(Code::Config, format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::new(Code::Config, m));
        match (&self.dataset.path, &self.dataset.synthetic) {
            (Some(_), Some(_)) => return bad("dataset: give either path or synthetic, not both".into()),
            (None, None) => return bad("dataset: one of path or synthetic is required".into()),
            _ => {}
        }
        self.train.validate().or_else(|e| bad(format!("train: {e}")))?;
        if self.sampling.samples_per_class == 0 {
            return bad("sampling.samples_per_class must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.prune.rate) {
            return bad(format!("prune.rate {} is outside [0, 1]", self.prune.rate));
        }
        self.sweep_config().validate().or_else(|e| bad(format!("sweep: {e}")))
    }

    pub fn sweep_config(&self) -> SweepConfig {
        SweepConfig {
            methods: self.sweep.methods.clone(),
            samplings: self.sweep.samplings.clone(),
            rates: self.sweep.rates.rates(),
            seeds: self.sweep.seeds.clone(),
            samples_per_class: self.sampling.samples_per_class,
            scope: self.prune.scope,
            protected_layers: self.prune.protected_layers.clone(),
            attribution: self.attribution.config(),
            ..SweepConfig::default()
        }
    }
}
