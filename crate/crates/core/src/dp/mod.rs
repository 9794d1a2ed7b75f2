//! DP-SGD / DP-Adam training: per-example clipping, Gaussian noise,
//! adaptive-moment updates and a Rényi-DP accountant.

mod accountant;
mod adam;
mod mechanism;
mod train;

pub use accountant::{
    calibrate_sigma, default_orders, epsilon_for, rdp_subsampled_gaussian, AccountantState, SIGMA_RANGE,
    SIGMA_TOLERANCE,
};
pub use adam::OptimizerState;
pub use mechanism::{clip, clip_in_place, noisy_aggregate, Aggregator, Mechanism};
pub use train::{
    steps_per_epoch, train, DPConfig, EpochRecord, NoObserver, PrivacyTarget, TrainData, TrainObserver,
    TrainOutcome, TrainingLog,
};
