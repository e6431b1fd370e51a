//! Dense-tensor layer engine: forward, backward and masked forward passes,
//! plus the `.nnck` checkpoint format.

mod checkpoint;
mod layer;
mod mask;
mod network;
pub(crate) mod ops;

pub use checkpoint::{digest, Checkpoint, CHECKPOINT_VERSION};
pub use layer::{Layer, LayerSpec, Params};
pub use mask::{PruningMask, UnitId};
pub use network::{ForwardTrace, Gradients, Network};
