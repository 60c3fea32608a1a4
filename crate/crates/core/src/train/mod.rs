//! Optimizer, learning-rate schedule, NER fine-tuning and prediction.

mod finetune;
mod model;
mod optim;
mod schedule;

pub use finetune::{finetune, FinetuneConfig, FinetuneEpoch, FinetuneOutcome, ScheduleKind};
pub use model::{gold_spans, predict, NerModel};
pub use optim::{adamw_step, AdamWConfig, OptimizerState};
pub use schedule::{linear_schedule, LinearSchedule};
