//! Basis-form MLP classifiers: reparameterization, forward/backward passes,
//! SGD, pruning, and synthetic datasets.

mod data;
mod layer;
mod mlp;
mod train;

pub use data::{make_dataset, Batch, DatasetKind, DatasetSpec, Targets};
pub use layer::{BasisLinear, AUX_INIT_SCALE};
pub use mlp::{
    log_softmax, softmax, softmax_cross_entropy, Activation, Forward, ForwardCache, GradBundle,
    MlpModel,
};
pub use train::{train_step, Sgd, SgdState};
