//! Alternating trainer: Adam epochs over the inverse-probability-weighted
//! objective, then one exact-search sweep over every subject's hard
//! baseline state, repeated for a fixed iteration budget.
//!
//! Identifiability of the latent domains is controlled through anchors:
//! each domain is tied to one discrete item whose loading vector starts as
//! a monotone ramp and is projected back to the nearest monotone vector
//! (pool adjacent violators) after every parameter update, preventing sign
//! drift during long runs.

use crate::inference::AggregateSpec;
use crate::measurement::{LatentState, MeasurementError, MeasurementParams};
use crate::model::{
    accumulate_subject_gradient, argmin_hard_state, subject_loss_values, GradientTape, ModelParams,
};
use crate::schema::{DataError, Dataset, ItemSchema};
use crate::seeds;
use crate::transition::{TransitionError, TransitionParams};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

/// Exact search enumerates 2^K states; beyond this the trainer refuses.
pub const MAX_LATENT_DIM: usize = 20;

/// Ramp step for anchor loading initialization.
const ANCHOR_RAMP_STEP: f64 = 1.0;
/// Scale of the seeded noise on non-anchor loadings at initialization.
const LOADING_NOISE_SCALE: f64 = 0.01;
/// Accumulated-arithmetic tolerance for the search non-increase check.
const SWEEP_TOLERANCE: f64 = 1e-9;
/// Subjects per parallel work unit; fixed so floating-point reduction
/// order does not depend on the thread count.
const PAR_CHUNK: usize = 64;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("latent dimension {k} exceeds the exact-search limit {max}")]
    LatentDimTooLarge { k: usize, max: usize },
    #[error("training needs at least one record in each treatment arm")]
    MissingArm,
    #[error("anchor error: {0}")]
    InvalidAnchor(String),
    #[error("non-finite gradient in parameter block `{block}`")]
    NonFiniteGradient { block: String },
    #[error("objective became non-finite after {phase}")]
    NonFiniteObjective { phase: String },
    #[error("invalid model file: {0}")]
    InvalidModel(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed model JSON: {source}")]
    ModelJson {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Measurement(#[from] MeasurementError),
    #[error(transparent)]
    Transition(#[from] TransitionError),
}

/// Direction of an anchor item's loading trend across categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrendDirection {
    Increasing,
    Decreasing,
}

impl TrendDirection {
    pub fn sign(self) -> f64 {
        match self {
            TrendDirection::Increasing => 1.0,
            TrendDirection::Decreasing => -1.0,
        }
    }
}

/// Anchor item for one latent domain, by item name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnchorSpec {
    pub domain: usize,
    pub item: String,
    pub direction: TrendDirection,
}

/// Anchor resolved to an item index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ResolvedAnchor {
    pub domain: usize,
    pub item: usize,
    pub direction: TrendDirection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    /// Number of latent domains.
    pub k: usize,
    /// Adam epochs per outer iteration (M).
    pub epochs_per_iteration: usize,
    pub outer_iterations: usize,
    pub learning_rate: f64,
    /// None picks the sample-size default, see [`default_batch_size`].
    pub batch_size: Option<usize>,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub seed: u64,
    /// One anchor per domain; empty picks the first K discrete items with
    /// increasing direction.
    pub anchors: Vec<AnchorSpec>,
    pub hidden_widths: Vec<usize>,
    pub standardize_continuous: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            k: 3,
            epochs_per_iteration: 6,
            outer_iterations: 6,
            learning_rate: 0.1,
            batch_size: None,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            seed: 0,
            anchors: Vec::new(),
            hidden_widths: vec![20, 10],
            standardize_continuous: false,
        }
    }
}

/// Default batch size: n/4 rounded to the nearest multiple of 50 and capped
/// at 500; datasets too small to round fall back to one full batch.
pub fn default_batch_size(n: usize) -> usize {
    let rounded = (n / 4 + 25) / 50 * 50;
    if rounded == 0 {
        n.clamp(1, 50)
    } else {
        rounded.min(500).min(n)
    }
}

impl TrainingConfig {
    pub fn effective_batch_size(&self, n: usize) -> usize {
        self.batch_size.unwrap_or_else(|| default_batch_size(n))
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if self.k < 1 {
            return Err(TrainError::InvalidConfig("k must be at least 1".into()));
        }
        if self.k > MAX_LATENT_DIM {
            return Err(TrainError::LatentDimTooLarge {
                k: self.k,
                max: MAX_LATENT_DIM,
            });
        }
        if self.epochs_per_iteration < 1 {
            return Err(TrainError::InvalidConfig(
                "epochs_per_iteration must be at least 1".into(),
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(TrainError::InvalidConfig(
                "learning_rate must be positive and finite".into(),
            ));
        }
        if self.batch_size == Some(0) {
            return Err(TrainError::InvalidConfig(
                "batch_size must be at least 1".into(),
            ));
        }
        for (name, beta) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&beta) {
                return Err(TrainError::InvalidConfig(format!(
                    "{name} must lie in [0, 1)"
                )));
            }
        }
        if !(self.adam_epsilon > 0.0) {
            return Err(TrainError::InvalidConfig(
                "adam_epsilon must be positive".into(),
            ));
        }
        if self.hidden_widths.iter().any(|&w| w == 0) {
            return Err(TrainError::InvalidConfig(
                "hidden widths must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Which phase of the alternation a logged objective value follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitPhase {
    /// After initialization and the first exact-search sweep.
    Init,
    /// After the M Adam epochs of an outer iteration.
    Adam,
    /// After the exact-search sweep of an outer iteration.
    Search,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectivePoint {
    pub iteration: usize,
    pub phase: FitPhase,
    pub objective: f64,
}

/// Per-item standardization recorded in the model file when continuous
/// items are standardized before fitting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ItemScaling {
    pub mean: f64,
    pub sd: f64,
}

/// Per-subject hard baseline states, aligned with the dataset rows.
pub type LatentAssignment = Vec<LatentState>;

/// Everything needed to score and recommend for new subjects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub version: String,
    pub schema: ItemSchema,
    pub covariates: Vec<String>,
    pub k: usize,
    pub anchors: Vec<AnchorSpec>,
    pub config: TrainingConfig,
    /// One entry per item; None for discrete items or when standardization
    /// is off.
    pub scaling: Vec<Option<ItemScaling>>,
    #[serde(flatten)]
    pub params: ModelParams,
    pub aggregate: AggregateSpec,
    pub objective_log: Vec<ObjectivePoint>,
}

impl FittedModel {
    pub fn save(&self, path: &Path) -> Result<(), TrainError> {
        let text = serde_json::to_string_pretty(self).expect("model serializes");
        std::fs::write(path, text + "\n").map_err(|e| TrainError::Io {
            path: path.to_path_buf(),
            source: e,
        })
    }

    pub fn load(path: &Path) -> Result<FittedModel, TrainError> {
        let text = std::fs::read_to_string(path).map_err(|e| TrainError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let model: FittedModel = serde_json::from_str(&text).map_err(|e| TrainError::ModelJson {
            path: path.to_path_buf(),
            source: e,
        })?;
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        self.schema.validate()?;
        if self.k < 1 || self.k > MAX_LATENT_DIM {
            return Err(TrainError::InvalidModel(format!(
                "latent dimension {} out of range",
                self.k
            )));
        }
        if self.params.measurement.k != self.k {
            return Err(TrainError::InvalidModel(
                "measurement parameters disagree with k".into(),
            ));
        }
        self.params.measurement.validate_against(&self.schema)?;
        self.params
            .transition
            .validate(self.covariates.len(), self.k)?;
        if self.aggregate.weights.len() != self.k {
            return Err(TrainError::InvalidModel(format!(
                "{} aggregate weights for k={}",
                self.aggregate.weights.len(),
                self.k
            )));
        }
        if self.scaling.len() != self.schema.len() {
            return Err(TrainError::InvalidModel(
                "scaling entries disagree with the schema".into(),
            ));
        }
        resolve_anchors(&self.anchors, &self.schema, self.k)?;
        Ok(())
    }

    /// Apply the recorded standardization to a y0 vector.
    pub fn scaled_y0(&self, y0: &[f64]) -> Vec<f64> {
        let mut out = y0.to_vec();
        scale_values(&mut out, &self.scaling);
        out
    }
}

pub(crate) fn scale_values(values: &mut [f64], scaling: &[Option<ItemScaling>]) {
    for (v, s) in values.iter_mut().zip(scaling) {
        if let Some(s) = s {
            *v = (*v - s.mean) / s.sd;
        }
    }
}

/// L2 projection onto nondecreasing vectors (pool adjacent violators,
/// equal weights).
pub fn isotonic_projection(v: &[f64]) -> Vec<f64> {
    let mut pools: Vec<(f64, usize)> = Vec::with_capacity(v.len());
    for &x in v {
        pools.push((x, 1));
        while pools.len() >= 2 {
            let (m2, c2) = pools[pools.len() - 1];
            let (m1, c1) = pools[pools.len() - 2];
            if m1 > m2 {
                pools.truncate(pools.len() - 2);
                let c = c1 + c2;
                pools.push(((m1 * c1 as f64 + m2 * c2 as f64) / c as f64, c));
            } else {
                break;
            }
        }
    }
    let mut out = Vec::with_capacity(v.len());
    for (mean, count) in pools {
        out.extend(std::iter::repeat(mean).take(count));
    }
    out
}

/// Resolve anchor specs against a schema. An empty spec list defaults to
/// discrete items spread evenly across the instrument (domain `d` anchored
/// at the `ceil(d * D / k)`-th of `D` discrete items), increasing.
pub fn resolve_anchors(
    specs: &[AnchorSpec],
    schema: &ItemSchema,
    k: usize,
) -> Result<Vec<ResolvedAnchor>, TrainError> {
    if specs.is_empty() {
        let discrete = schema.discrete_indices();
        if discrete.len() < k {
            return Err(TrainError::InvalidAnchor(format!(
                "default anchors need {k} discrete items, schema has {}",
                discrete.len()
            )));
        }
        return Ok((0..k)
            .map(|domain| ResolvedAnchor {
                domain,
                item: discrete[(domain * discrete.len() + k - 1) / k],
                direction: TrendDirection::Increasing,
            })
            .collect());
    }
    if specs.len() != k {
        return Err(TrainError::InvalidAnchor(format!(
            "{} anchors for {k} domains; each domain needs exactly one",
            specs.len()
        )));
    }
    let mut resolved = Vec::with_capacity(k);
    let mut domains_seen = vec![false; k];
    let mut items_seen = std::collections::HashSet::new();
    for spec in specs {
        if spec.domain >= k {
            return Err(TrainError::InvalidAnchor(format!(
                "anchor domain {} out of range for k={k}",
                spec.domain
            )));
        }
        if domains_seen[spec.domain] {
            return Err(TrainError::InvalidAnchor(format!(
                "domain {} has more than one anchor",
                spec.domain
            )));
        }
        domains_seen[spec.domain] = true;
        let item = schema.index_of(&spec.item).ok_or_else(|| {
            TrainError::InvalidAnchor(format!("anchor item `{}` not in the schema", spec.item))
        })?;
        if !schema.items[item].is_discrete() {
            return Err(TrainError::InvalidAnchor(format!(
                "anchor item `{}` must be discrete",
                spec.item
            )));
        }
        if !items_seen.insert(item) {
            return Err(TrainError::InvalidAnchor(format!(
                "anchor item `{}` used for more than one domain",
                spec.item
            )));
        }
        resolved.push(ResolvedAnchor {
            domain: spec.domain,
            item,
            direction: spec.direction,
        });
    }
    Ok(resolved)
}

fn anchor_specs(resolved: &[ResolvedAnchor], schema: &ItemSchema) -> Vec<AnchorSpec> {
    resolved
        .iter()
        .map(|a| AnchorSpec {
            domain: a.domain,
            item: schema.items[a.item].name.clone(),
            direction: a.direction,
        })
        .collect()
}

/// Project every anchor item's loading vector onto the configured monotone
/// cone.
fn apply_anchor_projection(measurement: &mut MeasurementParams, anchors: &[ResolvedAnchor]) {
    use crate::measurement::ItemParams;
    for anchor in anchors {
        let ItemParams::Discrete { beta, .. } = &mut measurement.items[anchor.item] else {
            unreachable!("anchors are discrete by construction");
        };
        let row = &mut beta[anchor.domain];
        match anchor.direction {
            TrendDirection::Increasing => {
                let projected = isotonic_projection(row);
                row.copy_from_slice(&projected);
            }
            TrendDirection::Decreasing => {
                let negated: Vec<f64> = row.iter().map(|v| -v).collect();
                let projected = isotonic_projection(&negated);
                for (r, p) in row.iter_mut().zip(projected) {
                    *r = -p;
                }
            }
        }
    }
}

/// Seeded initialization: zero intercepts, noise-scale loadings, anchor
/// ramps imposed, Glorot transition weights.
pub(crate) fn init_params(
    schema: &ItemSchema,
    p: usize,
    config: &TrainingConfig,
    anchors: &[ResolvedAnchor],
) -> ModelParams {
    use crate::measurement::ItemParams;
    let mut rng = seeds::stream_rng(config.seed, "init");
    let mut measurement = MeasurementParams::zeros(schema, config.k);
    for item in &mut measurement.items {
        match item {
            ItemParams::Discrete { beta, .. } => {
                for row in beta {
                    for b in row {
                        *b = LOADING_NOISE_SCALE * seeds::normal(&mut rng);
                    }
                }
            }
            ItemParams::Continuous { beta, .. } => {
                for b in beta {
                    *b = LOADING_NOISE_SCALE * seeds::normal(&mut rng);
                }
            }
        }
    }
    for anchor in anchors {
        let ItemParams::Discrete { beta, .. } = &mut measurement.items[anchor.item] else {
            unreachable!("anchors are discrete by construction");
        };
        let sign = anchor.direction.sign();
        for (m, b) in beta[anchor.domain].iter_mut().enumerate() {
            *b = sign * ANCHOR_RAMP_STEP * m as f64;
        }
    }
    let transition = TransitionParams::glorot(p, config.k, &config.hidden_widths, &mut rng);
    ModelParams {
        measurement,
        transition,
    }
}

/// The training objective: mean over subjects of the inverse-probability
/// weight times the bracketed pre- plus post-treatment measurement loss.
pub fn total_objective(params: &ModelParams, latents: &[LatentState], ds: &Dataset) -> f64 {
    assert_eq!(latents.len(), ds.n(), "latents must align with records");
    if ds.records.is_empty() {
        return 0.0;
    }
    let partials: Vec<f64> = ds
        .records
        .par_chunks(PAR_CHUNK)
        .zip(latents.par_chunks(PAR_CHUNK))
        .map(|(records, states)| {
            records
                .iter()
                .zip(states)
                .map(|(r, z)| {
                    subject_loss_values(params, &r.x, z.values(), r.arm, &r.y0, &r.y1)
                        / r.propensity
                })
                .sum::<f64>()
        })
        .collect();
    partials.iter().sum::<f64>() / ds.n() as f64
}

/// The hard state minimizing subject `index`'s bracketed loss. The
/// inverse-probability weight is constant within a subject, so it drops
/// out of the argmin. Ties break toward the lexicographically smallest
/// state.
pub fn exact_latent_search(
    params: &ModelParams,
    ds: &Dataset,
    index: usize,
) -> Result<LatentState, TrainError> {
    let k = params.measurement.k;
    if k > MAX_LATENT_DIM {
        return Err(TrainError::LatentDimTooLarge {
            k,
            max: MAX_LATENT_DIM,
        });
    }
    let r = &ds.records[index];
    Ok(argmin_hard_state(k, |z| subject_loss_values(params, &r.x, z, r.arm, &r.y0, &r.y1)).0)
}

/// One exact-search sweep over all subjects, in parallel.
pub fn search_all_latents(params: &ModelParams, ds: &Dataset) -> LatentAssignment {
    let k = params.measurement.k;
    ds.records
        .par_iter()
        .map(|r| argmin_hard_state(k, |z| subject_loss_values(params, &r.x, z, r.arm, &r.y0, &r.y1)).0)
        .collect()
}

/// Adam moment estimates; one slot per parameter in canonical order.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    pub fn new(param_count: usize) -> Self {
        AdamState {
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut ModelParams, tape: &GradientTape, config: &TrainingConfig) {
        self.t += 1;
        let mut grads = Vec::with_capacity(self.m.len());
        tape.for_each_param(&mut |g| grads.push(g));
        debug_assert_eq!(grads.len(), self.m.len());
        let (b1, b2) = (config.adam_beta1, config.adam_beta2);
        let bias1 = 1.0 - b1.powi(self.t as i32);
        let bias2 = 1.0 - b2.powi(self.t as i32);
        let lr = config.learning_rate;
        let eps = config.adam_epsilon;
        let (m, v) = (&mut self.m, &mut self.v);
        let mut i = 0;
        params.for_each_param_mut(&mut |p| {
            let g = grads[i];
            m[i] = b1 * m[i] + (1.0 - b1) * g;
            v[i] = b2 * v[i] + (1.0 - b2) * g * g;
            let mhat = m[i] / bias1;
            let vhat = v[i] / bias2;
            *p -= lr * mhat / (vhat.sqrt() + eps);
            i += 1;
        });
    }
}

/// Weighted gradient of the batch objective, reduced in a fixed chunk
/// order so results are identical for any thread count.
fn batch_gradient(
    params: &ModelParams,
    latents: &[LatentState],
    ds: &Dataset,
    batch: &[usize],
) -> GradientTape {
    let partials: Vec<GradientTape> = batch
        .par_chunks(PAR_CHUNK)
        .map(|chunk| {
            let mut tape = GradientTape::zeros(params);
            for &i in chunk {
                let r = &ds.records[i];
                accumulate_subject_gradient(
                    params,
                    &r.x,
                    latents[i].values(),
                    r.arm,
                    &r.y0,
                    &r.y1,
                    1.0 / r.propensity,
                    &mut tape,
                );
            }
            tape
        })
        .collect();
    let mut total = GradientTape::zeros(params);
    for partial in &partials {
        total.add(partial);
    }
    total
}

/// One pass over seeded shuffled batches, applying Adam and re-imposing
/// the anchor constraints after every update.
pub fn adam_epoch(
    params: &mut ModelParams,
    adam: &mut AdamState,
    latents: &[LatentState],
    ds: &Dataset,
    config: &TrainingConfig,
    anchors: &[ResolvedAnchor],
    epoch: usize,
) -> Result<(), TrainError> {
    let n = ds.n();
    let batch_size = config.effective_batch_size(n);
    if batch_size > n {
        return Err(TrainError::InvalidConfig(format!(
            "batch size {batch_size} exceeds {n} records"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = seeds::indexed_stream_rng(config.seed, "shuffle", epoch as u64);
    seeds::shuffle(&mut rng, &mut order);
    for batch in order.chunks(batch_size) {
        let mut tape = batch_gradient(params, latents, ds, batch);
        if let Some(block) = tape.nonfinite_block() {
            return Err(TrainError::NonFiniteGradient { block });
        }
        tape.scale(1.0 / batch.len() as f64);
        adam.step(params, &tape, config);
        apply_anchor_projection(&mut params.measurement, anchors);
    }
    Ok(())
}

fn compute_scaling(ds: &Dataset) -> Vec<Option<ItemScaling>> {
    ds.schema
        .items
        .iter()
        .enumerate()
        .map(|(j, item)| {
            if item.is_discrete() {
                return None;
            }
            let values: Vec<f64> = ds
                .records
                .iter()
                .flat_map(|r| [r.y0[j], r.y1[j]])
                .collect();
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let sd = var.sqrt();
            Some(ItemScaling {
                mean,
                sd: if sd > 0.0 { sd } else { 1.0 },
            })
        })
        .collect()
}

fn apply_scaling(ds: &mut Dataset, scaling: &[Option<ItemScaling>]) {
    for r in &mut ds.records {
        scale_values(&mut r.y0, scaling);
        scale_values(&mut r.y1, scaling);
    }
}

/// Fit all parameters and per-subject baseline states.
///
/// Initializes seeded parameters with anchor directions imposed, assigns
/// initial latents by exact search, then alternates M Adam epochs with one
/// search sweep for the configured number of outer iterations. The
/// objective is logged after every phase, and a search sweep can never
/// increase it at fixed parameters.
pub fn fit(ds: &Dataset, config: &TrainingConfig) -> Result<FittedModel, TrainError> {
    config.validate()?;
    ds.validate()?;
    if !ds.has_both_arms() {
        return Err(TrainError::MissingArm);
    }
    let anchors = resolve_anchors(&config.anchors, &ds.schema, config.k)?;

    let scaling = if config.standardize_continuous {
        compute_scaling(ds)
    } else {
        vec![None; ds.schema.len()]
    };
    let mut work = ds.clone();
    if config.standardize_continuous {
        apply_scaling(&mut work, &scaling);
    }

    let mut params = init_params(&work.schema, work.covariate_names.len(), config, &anchors);
    let mut latents = search_all_latents(&params, &work);
    let mut log = Vec::with_capacity(1 + 2 * config.outer_iterations);
    let initial = total_objective(&params, &latents, &work);
    if !initial.is_finite() {
        return Err(TrainError::NonFiniteObjective {
            phase: "initialization".into(),
        });
    }
    log.push(ObjectivePoint {
        iteration: 0,
        phase: FitPhase::Init,
        objective: initial,
    });

    let mut adam = AdamState::new(params.param_count());
    let mut epoch = 0usize;
    for iteration in 1..=config.outer_iterations {
        for _ in 0..config.epochs_per_iteration {
            adam_epoch(&mut params, &mut adam, &latents, &work, config, &anchors, epoch)?;
            epoch += 1;
        }
        let after_adam = total_objective(&params, &latents, &work);
        if !after_adam.is_finite() {
            return Err(TrainError::NonFiniteObjective {
                phase: format!("adam epochs of iteration {iteration}"),
            });
        }
        log.push(ObjectivePoint {
            iteration,
            phase: FitPhase::Adam,
            objective: after_adam,
        });

        latents = search_all_latents(&params, &work);
        let after_search = total_objective(&params, &latents, &work);
        assert!(
            after_search <= after_adam + SWEEP_TOLERANCE,
            "exact search increased the objective: {after_adam} -> {after_search}"
        );
        log.push(ObjectivePoint {
            iteration,
            phase: FitPhase::Search,
            objective: after_search,
        });
    }

    Ok(FittedModel {
        version: env!("CARGO_PKG_VERSION").to_string(),
        schema: ds.schema.clone(),
        covariates: ds.covariate_names.clone(),
        k: config.k,
        anchors: anchor_specs(&anchors, &ds.schema),
        config: config.clone(),
        scaling,
        params,
        aggregate: AggregateSpec::sum(config.k),
        objective_log: log,
    })
}
