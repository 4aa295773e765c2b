//! WGAN training: RMSProp, gradient penalty, reparameterized generators and
//! the alternating critic/generator loop with checkpoint hooks.

mod generator;
mod optim;
mod penalty;
mod trace;
mod wgan;

pub use generator::{Generator, MlpGenerator};
pub use optim::{rmsprop_step, RmsProp, RmsPropConfig};
pub use penalty::{gradient_penalty, gradient_penalty_on_tape};
pub use trace::{TrainRow, TrainTrace, TRACE_HEADER};
pub use wgan::{
    cold_start_ipm, kl_to_target, wgan_train, Metrics, TrainConfig, TrainFailure, Trained,
    DEFAULT_GP_COEFFICIENT,
};
