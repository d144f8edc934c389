//! Synthetic band-classification task: config files, data, training,
//! evaluation and checkpoints.

pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod model;
pub mod optim;
pub mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, FORMAT_VERSION, MAGIC};
pub use config::{DatasetConfig, OptimizerKind, TrainConfig};
pub use dataset::{band_frequencies, cosine_image, gen_band_dataset, BandDataset, Sample};
pub use model::{ConvLayer, ModelKind, NetGraph, ToyNet};
pub use optim::Optimizer;
pub use train::{evaluate, evaluate_net, train, train_with, EpochMetrics, Evaluation, Trainer};
