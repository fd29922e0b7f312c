//! Point-cloud segmentation networks with hand-written gradients.

mod adam;
mod edgeconv;
mod model;
mod ops;
mod tensor;
mod train;

pub use adam::{adam_step, AdamState, DEFAULT_LR};
pub use edgeconv::{edgeconv, edgeconv_backward, EdgeConvCache, EdgeConvGrads};
pub use model::{
    argmax_rows, InputMode, ModelConfig, ModelInput, ParamSet, SegModel, Tape, DEFAULT_K,
    INPUT_DIM, N_CLASSES,
};
pub use ops::{
    global_maxpool, global_maxpool_backward, leaky_relu, leaky_relu_backward, linear,
    linear_backward, softmax_cross_entropy, LinearGrads, DEFAULT_SLOPE,
};
pub use tensor::{broadcast_rows, concat_cols, matmul, matmul_nt, matmul_tn, split_cols, sum_rows, Tensor};
pub use train::{loss_log_header, render_loss_log, train, TrainConfig, TrainOutcome, TrainSample};
