//! Policy-value networks, PPO and generalized advantage estimation.

mod buffer;
mod checkpoint;
mod net;
mod policy;
mod ppo;
mod scalar;
mod train;

pub use buffer::{compute_gae, RolloutBuffer};
pub use checkpoint::{Checkpoint, CheckpointHeader};
pub use net::{conv_shapes, InputShape, NetworkSpec, ParamInfo, PolicyValueNet, Tape, Variant};
pub use policy::{argmax, entropy, log_softmax, sample_action, softmax};
pub use ppo::{clip_grad_norm, normalize, ppo_loss, ppo_update, Adam, LossStats, Minibatch, PpoConfig};
pub use scalar::Scalar;
pub use train::{
    curve_from_csv, curve_to_csv, derive_seed, evaluate, CurveRow, EvalPolicy, EvalReport, RngState, Stage, Trainer,
    CURVE_HEADER, CURVE_WINDOW,
};
