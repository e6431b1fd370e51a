//! Attribution-guided neuron pruning on a small from-scratch network engine.
//!
//! Train a network ([`trainer::train`]), pick per-class samples
//! ([`sampling::select`]), score every prunable unit with LRP, integrated
//! gradients or a deterministic backtrace ([`attribution::score_samples`]),
//! mask the lowest-scoring units ([`pruning::rank_and_mask`]) and measure the
//! accuracy drop ([`harness::run_sweep`]).

pub mod attribution;
pub mod error;
pub mod harness;
pub mod net;
pub mod pruning;
pub(crate) mod rng;
pub mod sampling;
pub mod tensor;
pub mod trainer;

pub use attribution::{AttributionConfig, AttributionMap, Method, NeuronScoreTable};
pub use error::{Error, Result};
pub use harness::{Dataset, Split, SweepConfig, SweepReport};
pub use net::{Checkpoint, LayerSpec, Network, PruningMask, UnitId};
pub use pruning::{PrunePlan, Scope};
pub use sampling::{SamplePlan, Strategy};
pub use tensor::Tensor;
pub use trainer::TrainConfig;
