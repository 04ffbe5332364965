//! The training objectives (MLM, L_rec, L_bt, L_D, L_adv, L_syn, L_m) and
//! the alternating one-minibatch-per-objective scheduler.

mod noise;
mod schedule;
mod trainer;

pub use noise::{apply_mlm_mask, noise_c, MlmMasked, MlmSpec, NoiseSpec};
pub use schedule::{run_schedule, DataSources, Objective, ScheduleSpec, StepRecord};
pub use trainer::{
    reconstruction_accuracy, shift_targets, StyleTrainer, TrainCounters, TrainError,
    MERGE_SOURCE_LIMIT,
};
