//! Policy evaluation: inverse-probability-weighted empirical value,
//! optimal-treatment accuracy against ground truth, a linear Q-learning
//! comparator, and a seeded cross-validation harness.

use crate::inference::{recommend_with, score_aggregate_from_model, AggregateSpec};
use crate::measurement::MeasurementError;
use crate::schema::{Arm, DataError, Dataset, SubjectRecord};
use crate::seeds;
use crate::trainer::{fit, TrainError, TrainingConfig};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("misaligned inputs: {0}")]
    Misaligned(String),
    #[error("invalid cross-validation setup: {0}")]
    InvalidFolds(String),
    #[error("treatment arm {arm} has only {count} records; need at least 2")]
    ArmTooSmall { arm: Arm, count: usize },
    #[error("outcome `{outcome}` cannot be computed from observed data")]
    NotObservable { outcome: String },
    #[error("outcome `{outcome}` names unknown item `{item}`")]
    UnknownItem { outcome: String, item: String },
    #[error("invalid aggregate weights: {0}")]
    InvalidAggregate(String),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Measurement(#[from] MeasurementError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Whether smaller or larger outcome values are better.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Minimize,
    Maximize,
}

/// Per-subject outcome definition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Outcome {
    /// Sum of every post-treatment item.
    SumY1,
    /// Sum of a named subset of post-treatment items.
    ItemSubset { name: String, items: Vec<String> },
    /// Sum of post-treatment latent states; oracle evaluation only.
    LatentSum,
}

impl Outcome {
    pub fn name(&self) -> &str {
        match self {
            Outcome::SumY1 => "y1_sum",
            Outcome::ItemSubset { name, .. } => name,
            Outcome::LatentSum => "latent_sum",
        }
    }

    /// Per-subject observed outcome values, where observable.
    pub fn observed_values(&self, ds: &Dataset) -> Result<Vec<f64>, EvalError> {
        match self {
            Outcome::SumY1 => Ok(ds.records.iter().map(|r| r.y1.iter().sum()).collect()),
            Outcome::ItemSubset { name, items } => {
                let mut indices = Vec::with_capacity(items.len());
                for item in items {
                    indices.push(ds.schema.index_of(item).ok_or_else(|| EvalError::UnknownItem {
                        outcome: name.clone(),
                        item: item.clone(),
                    })?);
                }
                Ok(ds
                    .records
                    .iter()
                    .map(|r| indices.iter().map(|&j| r.y1[j]).sum())
                    .collect())
            }
            Outcome::LatentSum => Err(EvalError::NotObservable {
                outcome: self.name().to_string(),
            }),
        }
    }
}

/// IPW estimate of a policy's value on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyEvaluation {
    pub empirical_value: f64,
    /// Subjects whose assigned arm agrees with the policy.
    pub n_matched: usize,
    pub outcome_name: String,
}

/// Per-subject IPW contributions `R_i I(A_i = d_i) / propensity_i`; the
/// empirical value is their mean.
pub fn ipw_contributions(policy: &[Arm], ds: &Dataset, outcome_values: &[f64]) -> Vec<f64> {
    assert_eq!(policy.len(), ds.n(), "policy must align with records");
    assert_eq!(outcome_values.len(), ds.n(), "outcomes must align with records");
    ds.records
        .iter()
        .zip(policy)
        .zip(outcome_values)
        .map(|((r, &d), &out)| if r.arm == d { out / r.propensity } else { 0.0 })
        .collect()
}

/// Mean over all subjects of `R_i I(A_i = d_i) / propensity_i`.
pub fn empirical_value(
    policy: &[Arm],
    ds: &Dataset,
    outcome_values: &[f64],
    outcome_name: &str,
) -> PolicyEvaluation {
    let contributions = ipw_contributions(policy, ds, outcome_values);
    let n = ds.n();
    let n_matched = ds
        .records
        .iter()
        .zip(policy)
        .filter(|(r, &d)| r.arm == d)
        .count();
    PolicyEvaluation {
        empirical_value: if n == 0 {
            0.0
        } else {
            contributions.iter().sum::<f64>() / n as f64
        },
        n_matched,
        outcome_name: outcome_name.to_string(),
    }
}

/// Fraction of subjects where the policy picks the true optimal arm.
pub fn optimal_accuracy(policy: &[Arm], truth: &[Arm]) -> f64 {
    assert_eq!(policy.len(), truth.len(), "policy must align with truth");
    if policy.is_empty() {
        return 0.0;
    }
    let agree = policy.iter().zip(truth).filter(|(a, b)| a == b).count();
    agree as f64 / policy.len() as f64
}

const RIDGE: f64 = 1e-6;

/// Ridge-stabilized least squares of the outcome on
/// `(1, features, A, A * features)` with `features = (y0 as numeric, x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearQBaseline {
    /// Layout: intercept, main effects, treatment, interactions.
    pub coefficients: Vec<f64>,
    pub n_features: usize,
}

/// Feature vector entering the baseline: item responses cast to reals
/// concatenated with covariates.
pub fn baseline_features(record: &SubjectRecord) -> Vec<f64> {
    let mut f = Vec::with_capacity(record.y0.len() + record.x.len());
    f.extend_from_slice(&record.y0);
    f.extend_from_slice(&record.x);
    f
}

fn design_row(features: &[f64], arm: Arm) -> Vec<f64> {
    let a = arm.sign();
    let mut row = Vec::with_capacity(2 * (features.len() + 1));
    row.push(1.0);
    row.extend_from_slice(features);
    row.push(a);
    row.extend(features.iter().map(|&f| a * f));
    row
}

/// Cholesky solve of the SPD system `a x = b`, consuming both.
fn solve_spd(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i][j];
            for k in 0..j {
                sum -= a[i][k] * a[j][k];
            }
            if i == j {
                a[i][j] = sum.max(f64::MIN_POSITIVE).sqrt();
            } else {
                a[i][j] = sum / a[j][j];
            }
        }
    }
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum -= a[i][k] * b[k];
        }
        b[i] = sum / a[i][i];
    }
    for i in (0..n).rev() {
        let mut sum = b[i];
        for k in i + 1..n {
            sum -= a[k][i] * b[k];
        }
        b[i] = sum / a[i][i];
    }
    b
}

/// Fit the linear Q-learning comparator.
pub fn fit_linear_q(ds: &Dataset, outcome_values: &[f64]) -> LinearQBaseline {
    assert_eq!(outcome_values.len(), ds.n(), "outcomes must align with records");
    let n_features = ds
        .records
        .first()
        .map_or(0, |r| r.y0.len() + r.x.len());
    let dim = 2 * (n_features + 1);
    let mut xtx = vec![vec![0.0; dim]; dim];
    let mut xty = vec![0.0; dim];
    for (record, &y) in ds.records.iter().zip(outcome_values) {
        let row = design_row(&baseline_features(record), record.arm);
        for (i, &ri) in row.iter().enumerate() {
            xty[i] += ri * y;
            for (j, &rj) in row.iter().enumerate().skip(i) {
                xtx[i][j] += ri * rj;
            }
        }
    }
    for i in 0..dim {
        for j in 0..i {
            xtx[i][j] = xtx[j][i];
        }
        xtx[i][i] += RIDGE;
    }
    LinearQBaseline {
        coefficients: solve_spd(xtx, xty),
        n_features,
    }
}

impl LinearQBaseline {
    pub fn predict(&self, features: &[f64], arm: Arm) -> f64 {
        crate::measurement::dot(&self.coefficients, &design_row(features, arm))
    }

    /// Predicted outcome contrast `R(+1) - R(-1)`.
    pub fn contrast(&self, features: &[f64]) -> f64 {
        let p = self.n_features + 1;
        let mut c = self.coefficients[p];
        for (i, &f) in features.iter().enumerate() {
            c += self.coefficients[p + 1 + i] * f;
        }
        2.0 * c
    }

    /// Arm with the better predicted outcome; exact ties resolve to +1.
    pub fn recommend(&self, features: &[f64], direction: Direction) -> Arm {
        let contrast = self.contrast(features);
        let prefer_pos = match direction {
            Direction::Maximize => contrast >= 0.0,
            Direction::Minimize => contrast <= 0.0,
        };
        if prefer_pos {
            Arm::Pos
        } else {
            Arm::Neg
        }
    }
}

/// Where the proposed method's aggregate weights come from during
/// cross-validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum AggregateSource {
    /// Plain sum of post-treatment latent states.
    Sum,
    /// Trend scores read off each fold's fitted loadings.
    ModelScores,
    /// Fixed user-supplied weights.
    Fixed { weights: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossvalOptions {
    pub folds: usize,
    pub repeats: usize,
    pub seed: u64,
    pub aggregate: AggregateSource,
    pub direction: Direction,
    pub outcomes: Vec<Outcome>,
    /// Also fit and score the linear-Q comparator.
    pub baseline: bool,
}

impl Default for CrossvalOptions {
    fn default() -> Self {
        CrossvalOptions {
            folds: 4,
            repeats: 1,
            seed: 0,
            aggregate: AggregateSource::ModelScores,
            direction: Direction::Minimize,
            outcomes: vec![Outcome::SumY1],
            baseline: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodOutcomeStats {
    pub mean: f64,
    /// Sample standard deviation across repeats; absent for one repeat.
    pub sd: Option<f64>,
    pub per_repeat: Vec<f64>,
    /// Raw per-fold values, one row per repeat. Empty folds are skipped.
    pub per_fold: Vec<Vec<f64>>,
}

fn summarize(per_repeat: Vec<f64>, per_fold: Vec<Vec<f64>>) -> MethodOutcomeStats {
    let n = per_repeat.len();
    let mean = per_repeat.iter().sum::<f64>() / n.max(1) as f64;
    let sd = if n >= 2 {
        let var = per_repeat.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
        Some(var.sqrt())
    } else {
        None
    };
    MethodOutcomeStats {
        mean,
        sd,
        per_repeat,
        per_fold,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedT {
    pub t: f64,
    pub df: f64,
    pub p_value: f64,
    pub mean_difference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeComparison {
    pub outcome: String,
    pub proposed: MethodOutcomeStats,
    pub baseline: Option<MethodOutcomeStats>,
    /// Paired t over repeats, proposed minus baseline.
    pub paired_t: Option<PairedT>,
    /// Whether the proposed mean beats the baseline mean in the configured
    /// direction.
    pub proposed_better: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossvalReport {
    pub version: String,
    pub folds: usize,
    pub repeats: usize,
    pub seed: u64,
    pub direction: Direction,
    pub aggregate: AggregateSource,
    pub training_config: TrainingConfig,
    pub notes: Vec<String>,
    pub outcomes: Vec<OutcomeComparison>,
}

impl CrossvalReport {
    pub fn save(&self, path: &Path) -> Result<(), EvalError> {
        let text = serde_json::to_string_pretty(self).expect("report serializes");
        std::fs::write(path, text + "\n").map_err(|e| EvalError::Io {
            path: path.to_path_buf(),
            source: e,
        })
    }

    /// Compact delimited summary: one row per outcome and method.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from("outcome,method,mean,sd\n");
        for comparison in &self.outcomes {
            let sd = comparison.proposed.sd.map_or(String::new(), |s| format!("{s}"));
            out.push_str(&format!(
                "{},proposed,{},{}\n",
                comparison.outcome, comparison.proposed.mean, sd
            ));
            if let Some(baseline) = &comparison.baseline {
                let sd = baseline.sd.map_or(String::new(), |s| format!("{s}"));
                out.push_str(&format!(
                    "{},linear_q,{},{}\n",
                    comparison.outcome, baseline.mean, sd
                ));
            }
        }
        out
    }
}

/// Fold label per record, stratified by arm so every training complement
/// keeps both arms.
fn stratified_folds(ds: &Dataset, folds: usize, rng: &mut seeds::StreamRng) -> Vec<usize> {
    let mut fold_of = vec![0usize; ds.n()];
    let mut slot = 0usize;
    for arm in Arm::BOTH {
        let mut indices: Vec<usize> = ds
            .records
            .iter()
            .enumerate()
            .filter(|(_, r)| r.arm == arm)
            .map(|(i, _)| i)
            .collect();
        seeds::shuffle(rng, &mut indices);
        for i in indices {
            fold_of[i] = slot % folds;
            slot += 1;
        }
    }
    fold_of
}

fn resolve_aggregate(
    source: &AggregateSource,
    model: &crate::trainer::FittedModel,
) -> Result<AggregateSpec, EvalError> {
    match source {
        AggregateSource::Sum => Ok(AggregateSpec::sum(model.k)),
        AggregateSource::ModelScores => Ok(score_aggregate_from_model(model)?),
        AggregateSource::Fixed { weights } => {
            if weights.len() != model.k {
                return Err(EvalError::InvalidAggregate(format!(
                    "{} weights for k={}",
                    weights.len(),
                    model.k
                )));
            }
            Ok(AggregateSpec::new(weights.clone()))
        }
    }
}

/// Repeated stratified cross-validation: fit on each fold's complement,
/// recommend on the fold, and score out-of-fold policies by IPW value for
/// every configured outcome, for the proposed method and optionally the
/// linear-Q comparator.
pub fn crossval(
    ds: &Dataset,
    config: &TrainingConfig,
    opts: &CrossvalOptions,
) -> Result<CrossvalReport, EvalError> {
    let n = ds.n();
    if opts.folds < 2 {
        return Err(EvalError::InvalidFolds(format!(
            "{} folds; need at least 2",
            opts.folds
        )));
    }
    if opts.folds > n {
        return Err(EvalError::InvalidFolds(format!(
            "{} folds for {n} records",
            opts.folds
        )));
    }
    if opts.repeats < 1 {
        return Err(EvalError::InvalidFolds("need at least one repeat".into()));
    }
    if opts.outcomes.is_empty() {
        return Err(EvalError::InvalidFolds("need at least one outcome".into()));
    }
    for arm in Arm::BOTH {
        let count = ds.records.iter().filter(|r| r.arm == arm).count();
        if count < 2 {
            return Err(EvalError::ArmTooSmall { arm, count });
        }
    }
    // Observed values over the full dataset, validated up front.
    let full_values: Vec<Vec<f64>> = opts
        .outcomes
        .iter()
        .map(|o| o.observed_values(ds))
        .collect::<Result<_, _>>()?;

    let n_outcomes = opts.outcomes.len();
    let mut proposed_per_repeat: Vec<Vec<f64>> = vec![Vec::new(); n_outcomes];
    let mut proposed_per_fold: Vec<Vec<Vec<f64>>> = vec![Vec::new(); n_outcomes];
    let mut baseline_per_repeat: Vec<Vec<f64>> = vec![Vec::new(); n_outcomes];
    let mut baseline_per_fold: Vec<Vec<Vec<f64>>> = vec![Vec::new(); n_outcomes];

    for repeat in 0..opts.repeats {
        let mut fold_rng = seeds::indexed_stream_rng(opts.seed, "cv-folds", repeat as u64);
        let fold_of = stratified_folds(ds, opts.folds, &mut fold_rng);

        let mut proposed_policy = vec![Arm::Pos; n];
        let mut baseline_policy = vec![vec![Arm::Pos; n]; n_outcomes];
        let mut fold_members: Vec<Vec<usize>> = vec![Vec::new(); opts.folds];
        for (i, &f) in fold_of.iter().enumerate() {
            fold_members[f].push(i);
        }

        for (fold, members) in fold_members.iter().enumerate() {
            if members.is_empty() {
                continue;
            }
            let train_indices: Vec<usize> = (0..n).filter(|i| fold_of[*i] != fold).collect();
            let train = ds.subset(&train_indices);

            let mut fold_config = config.clone();
            fold_config.seed = seeds::indexed_stream_seed(
                opts.seed,
                "cv-fit",
                (repeat * opts.folds + fold) as u64,
            );
            let model = fit(&train, &fold_config)?;
            let aggregate = resolve_aggregate(&opts.aggregate, &model)?;
            for &i in members {
                let r = &ds.records[i];
                proposed_policy[i] = recommend_with(&model, &aggregate, &r.y0, &r.x).chosen_arm;
            }

            if opts.baseline {
                for (o, outcome) in opts.outcomes.iter().enumerate() {
                    let train_values = outcome.observed_values(&train)?;
                    let q = fit_linear_q(&train, &train_values);
                    for &i in members {
                        let features = baseline_features(&ds.records[i]);
                        baseline_policy[o][i] = q.recommend(&features, opts.direction);
                    }
                }
            }
        }

        for (o, outcome) in opts.outcomes.iter().enumerate() {
            let values = &full_values[o];
            proposed_per_repeat[o]
                .push(empirical_value(&proposed_policy, ds, values, outcome.name()).empirical_value);
            let mut fold_values = Vec::with_capacity(opts.folds);
            for members in &fold_members {
                if members.is_empty() {
                    continue;
                }
                let sub = ds.subset(members);
                let sub_policy: Vec<Arm> = members.iter().map(|&i| proposed_policy[i]).collect();
                let sub_values: Vec<f64> = members.iter().map(|&i| values[i]).collect();
                fold_values
                    .push(empirical_value(&sub_policy, &sub, &sub_values, outcome.name()).empirical_value);
            }
            proposed_per_fold[o].push(fold_values);

            if opts.baseline {
                baseline_per_repeat[o].push(
                    empirical_value(&baseline_policy[o], ds, values, outcome.name()).empirical_value,
                );
                let mut fold_values = Vec::with_capacity(opts.folds);
                for members in &fold_members {
                    if members.is_empty() {
                        continue;
                    }
                    let sub = ds.subset(members);
                    let sub_policy: Vec<Arm> =
                        members.iter().map(|&i| baseline_policy[o][i]).collect();
                    let sub_values: Vec<f64> = members.iter().map(|&i| values[i]).collect();
                    fold_values.push(
                        empirical_value(&sub_policy, &sub, &sub_values, outcome.name())
                            .empirical_value,
                    );
                }
                baseline_per_fold[o].push(fold_values);
            }
        }
    }

    let mut comparisons = Vec::with_capacity(n_outcomes);
    for (o, outcome) in opts.outcomes.iter().enumerate() {
        let proposed = summarize(
            std::mem::take(&mut proposed_per_repeat[o]),
            std::mem::take(&mut proposed_per_fold[o]),
        );
        let baseline = if opts.baseline {
            Some(summarize(
                std::mem::take(&mut baseline_per_repeat[o]),
                std::mem::take(&mut baseline_per_fold[o]),
            ))
        } else {
            None
        };
        let paired_t = baseline.as_ref().and_then(|b| {
            paired_t_test(&proposed.per_repeat, &b.per_repeat)
        });
        let proposed_better = baseline.as_ref().map(|b| match opts.direction {
            Direction::Minimize => proposed.mean < b.mean,
            Direction::Maximize => proposed.mean > b.mean,
        });
        comparisons.push(OutcomeComparison {
            outcome: outcome.name().to_string(),
            proposed,
            baseline,
            paired_t,
            proposed_better,
        });
    }

    Ok(CrossvalReport {
        version: env!("CARGO_PKG_VERSION").to_string(),
        folds: opts.folds,
        repeats: opts.repeats,
        seed: opts.seed,
        direction: opts.direction,
        aggregate: opts.aggregate.clone(),
        training_config: config.clone(),
        notes: vec![
            "Repeat-level values reuse the same records across repeats; the paired t-test treats repeats as independent, so read its p-value with that caveat.".to_string(),
        ],
        outcomes: comparisons,
    })
}

/// Paired t over repeats; None when fewer than 2 repeats or a degenerate
/// (zero-variance) difference.
fn paired_t_test(a: &[f64], b: &[f64]) -> Option<PairedT> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let n = a.len() as f64;
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1.0);
    let se = (var / n).sqrt();
    if se == 0.0 {
        return None;
    }
    let t = mean / se;
    let df = n - 1.0;
    let dist = StudentsT::new(0.0, 1.0, df).ok()?;
    let p_value = 2.0 * (1.0 - dist.cdf(t.abs()));
    Some(PairedT {
        t,
        df,
        p_value,
        mean_difference: mean,
    })
}
