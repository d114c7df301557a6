//! A small fully connected network with hand-written backpropagation,
//! synthetic datasets with natural or randomized labels, and a trainer that
//! drives the network to (near-)zero training loss.

pub mod data;
pub mod mlp;
pub mod train;

pub use data::{make_blobs, randomize_labels, LabelMode, LabeledDataset};
pub use mlp::{parse_checkpoint, Activation, LossKind, MlpParams, MlpSpec};
pub use train::{train_to_interpolation, TrainConfig, TrainOutcome, TrainRecord};
