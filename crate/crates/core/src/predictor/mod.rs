//! Frame-level boundary predictor: a windowed MLP standing in for a
//! fine-tuned speech model, plus its loss, optimizer and training loop.

pub mod adam;
mod linalg;
pub mod loss;
pub mod mlp;
pub mod schedule;
pub mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use loss::{bce_topk_loss, logit_grads, TopKLoss};
pub use mlp::{init_model, Dense, Gradients, LayerGrad, Mlp, ModelSpec, Mode, TrainNoise};
pub use schedule::LrSchedule;
pub use train::{
    dev_loss, loss_and_grads, train, AudioSource, AugmentContext, CurvePoint, TrainConfig, TrainItem, TrainOutcome,
};
