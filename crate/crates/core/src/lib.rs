//! Joint learning of binary latent health states and individualized
//! treatment rules from mixed-type multi-domain measurements.
//!
//! A shared measurement decoder links K binary latent domains to discrete
//! and continuous item responses in both treatment phases, a two-headed
//! network models per-arm transitions of those domains, and training
//! alternates Adam epochs with exact per-subject search over hard baseline
//! states. On top of the fitted model sit new-subject inference and
//! treatment recommendation, inverse-probability-weighted policy
//! evaluation with a linear Q-learning comparator, and a seeded
//! randomized-trial simulator with known ground truth.
//!
//! Module map:
//!
//! - [`schema`]: dataset model and the delimited file format.
//! - [`measurement`]: latent states, the item decoder, losses, and domain
//!   trend scores.
//! - [`transition`]: the shared-trunk, two-headed network.
//! - [`model`]: parameter bundle, gradient tape, composite subject loss.
//! - [`trainer`]: alternating fit with anchor-based identifiability.
//! - [`inference`]: baseline-state estimation and arm recommendation.
//! - [`evaluation`]: IPW value, accuracy, linear-Q baseline, crossval.
//! - [`simulator`]: reference generating process with ground truth.
//! - [`seeds`]: named deterministic randomness streams.

pub mod evaluation;
pub mod inference;
pub mod measurement;
pub mod model;
pub mod schema;
pub mod seeds;
pub mod simulator;
pub mod trainer;
pub mod transition;

pub use evaluation::{
    crossval, empirical_value, fit_linear_q, optimal_accuracy, AggregateSource, CrossvalOptions,
    CrossvalReport, Direction, EvalError, LinearQBaseline, Outcome, PolicyEvaluation,
};
pub use inference::{
    estimate_baseline_state, recommend, recommend_batch, recommend_with,
    score_aggregate_from_model, AggregateSpec, Recommendation,
};
pub use measurement::{
    ItemParams, ItemPrediction, LatentState, MeasurementError, MeasurementParams, StateMode,
};
pub use model::{subject_loss, GradientTape, ModelParams};
pub use schema::{
    load_baseline, load_dataset, save_dataset, Arm, BaselineRow, DataError, Dataset, ItemKind,
    ItemSchema, ItemSpec, SchemaFile, SubjectRecord,
};
pub use simulator::{oracle_value, simulate, GroundTruth, SimConfig, SimError, SubjectTruth};
pub use trainer::{
    exact_latent_search, fit, total_objective, AnchorSpec, FittedModel, TrainError,
    TrainingConfig, TrendDirection,
};
pub use transition::{AffineLayer, TransitionParams};
