//! Local-update training algorithms on a simulated cluster.
//!
//! Every variant runs through the same [`Trainer`] loop:
//!
//! | variant         | local step                | sync                       |
//! |-----------------|---------------------------|----------------------------|
//! | `ddp`           | gradient all-reduce       | every step                 |
//! | `local_sgd`     | inner SGD-family step     | average every `H` steps    |
//! | `diloco`        | inner AdamW               | outer Nesterov every `H`   |
//! | `palsgd`        | gradient or pseudo-sync   | outer optimizer every `H`  |
//! | `palsgd_theory` | SGD or pseudo-sync        | average every `H`          |

mod schedule;
mod trainer;
mod worker;

pub use schedule::{theory_schedule, LrSchedule, Schedule, TheorySchedule};
pub use trainer::{
    run_training, Diagnostics, DivergenceReport, StepRecord, StepReport, TrainOutcome, Trainer,
    TrainerConfig, Variant, WeightedAverage,
};
pub use worker::{
    consensus_probe, ddp_step, local_sgd_step, palsgd_local_step, sync_round, Consensus, StepKind,
    Worker,
};
