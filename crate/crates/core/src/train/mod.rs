//! Desk-scale training with BDWP and the comparison schemes.

mod data;
mod flops;
mod layers;
mod method;
mod network;
mod optimizer;
mod run;

pub use data::{gaussian_clusters, BatchSampler, Dataset, ToyDataConfig};
pub use flops::{count_flops, layer_flops, stage_density, FlopsTable, LayerFlops, StageCount};
pub use layers::{
    backward_data, backward_data_lowered, backward_weight, backward_weight_lowered, bias_grad,
    forward, forward_lowered, lower_input, lower_output_grad, raise_output, WeightOperand,
};
pub use method::{MethodKind, StageSparsity, TrainingMethod};
pub use network::{
    forward_backward, forward_network, softmax_cross_entropy, Gradients, PassOperands, Precision,
    Trainer,
};
pub use optimizer::{sgd_momentum_step, OptimizerState, SgdConfig};
pub use run::{
    build_dataset, run_training, LrSchedule, PrecisionMode, StepRecord, TrainConfig, TrainOutcome,
};
