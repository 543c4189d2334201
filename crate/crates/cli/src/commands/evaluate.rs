use crate::commands::write_json;
use crate::config::FileConfig;
use crate::error::CliError;
use crate::spec::{parse_direction, parse_outcome, PolicySpec, WeightsSpec};
use clap::Args;
use litr_core::inference::{load_policy, recommend_batch};
use litr_core::{
    empirical_value, load_dataset, optimal_accuracy, oracle_value, Arm, Direction, FittedModel,
    GroundTruth, Outcome,
};
use serde::Serialize;
use std::path::PathBuf;

/// Score a policy on a dataset: inverse-probability-weighted empirical
/// values, and oracle values plus optimal-arm accuracy when ground truth
/// is available.
#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub schema: PathBuf,
    /// Derive the policy from a fitted model.
    #[arg(long, conflicts_with = "policy")]
    pub model: Option<PathBuf>,
    /// Aggregate weights when using --model: model, sum, neg-sum,
    /// model-scores, fixed:..., or file:PATH.
    #[arg(long, default_value = "model")]
    pub weights: String,
    /// Fixed policy: const:+1, const:-1, or file:PATH with a
    /// `chosen_arm` column.
    #[arg(long)]
    pub policy: Option<String>,
    /// Ground-truth sidecar enabling oracle values and accuracy.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Outcome definition, repeatable: sum, latent-sum (needs --truth),
    /// or subset:NAME=item1+item2.
    #[arg(long = "outcome")]
    pub outcomes: Vec<String>,
    /// Whether lower or higher outcome values are better: min or max.
    #[arg(long, default_value = "min")]
    pub direction: String,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Serialize)]
struct OutcomeReport {
    outcome: String,
    empirical_value: Option<f64>,
    n_matched: Option<usize>,
    oracle_value: Option<f64>,
}

#[derive(Serialize)]
struct EvaluateReport {
    version: &'static str,
    data: String,
    schema: String,
    policy_source: String,
    direction: Direction,
    n: usize,
    optimal_accuracy: Option<f64>,
    outcomes: Vec<OutcomeReport>,
}

pub fn run(args: &EvaluateArgs, _config: &FileConfig) -> Result<(), CliError> {
    let dataset = load_dataset(&args.data, &args.schema)?;
    let direction = parse_direction(&args.direction)?;
    let outcome_specs = if args.outcomes.is_empty() {
        vec!["sum".to_string()]
    } else {
        args.outcomes.clone()
    };
    let outcomes: Vec<Outcome> = outcome_specs
        .iter()
        .map(|o| parse_outcome(o))
        .collect::<Result<_, _>>()?;

    let truth = match &args.truth {
        Some(path) => {
            let truth = GroundTruth::load(path)?;
            if truth.subjects.len() != dataset.n() {
                return Err(CliError::validation(format!(
                    "ground truth has {} subjects for {} records",
                    truth.subjects.len(),
                    dataset.n()
                )));
            }
            Some(truth)
        }
        None => None,
    };
    if truth.is_none() && outcomes.iter().any(|o| matches!(o, Outcome::LatentSum)) {
        return Err(CliError::validation(
            "outcome latent-sum needs --truth; it is unobservable from data alone",
        ));
    }

    let (policy, policy_source): (Vec<Arm>, String) = match (&args.model, &args.policy) {
        (Some(model_path), None) => {
            let model = FittedModel::load(model_path)?;
            let weights = WeightsSpec::parse(&args.weights)?.resolve(&model)?;
            let recs = recommend_batch(&model, &weights, &dataset.baseline_rows());
            (
                recs.iter().map(|r| r.chosen_arm).collect(),
                format!("model:{} weights:{}", model_path.display(), args.weights),
            )
        }
        (None, Some(policy_text)) => match PolicySpec::parse(policy_text)? {
            PolicySpec::Constant(arm) => (vec![arm; dataset.n()], policy_text.clone()),
            PolicySpec::File(path) => {
                let policy = load_policy(&path)?;
                if policy.len() != dataset.n() {
                    return Err(CliError::validation(format!(
                        "policy file has {} rows for {} records",
                        policy.len(),
                        dataset.n()
                    )));
                }
                (policy, policy_text.clone())
            }
        },
        _ => {
            return Err(CliError::validation(
                "evaluate needs exactly one of --model or --policy",
            ));
        }
    };

    let mut reports = Vec::with_capacity(outcomes.len());
    for outcome in &outcomes {
        let (empirical, n_matched) = match outcome.observed_values(&dataset) {
            Ok(values) => {
                let evaluation = empirical_value(&policy, &dataset, &values, outcome.name());
                (Some(evaluation.empirical_value), Some(evaluation.n_matched))
            }
            Err(litr_core::EvalError::NotObservable { .. }) => (None, None),
            Err(e) => return Err(e.into()),
        };
        let oracle = match &truth {
            Some(truth) => Some(oracle_value(&policy, truth, outcome)?),
            None => None,
        };
        reports.push(OutcomeReport {
            outcome: outcome.name().to_string(),
            empirical_value: empirical,
            n_matched,
            oracle_value: oracle,
        });
    }
    let accuracy = truth
        .as_ref()
        .map(|t| optimal_accuracy(&policy, &t.optimal_arms()));

    let report = EvaluateReport {
        version: env!("CARGO_PKG_VERSION"),
        data: args.data.display().to_string(),
        schema: args.schema.display().to_string(),
        policy_source,
        direction,
        n: dataset.n(),
        optimal_accuracy: accuracy,
        outcomes: reports,
    };
    write_json(&args.out, &report)?;
    println!(
        "evaluated {} outcome(s) over {} subjects -> {}",
        outcomes.len(),
        dataset.n(),
        args.out.display()
    );
    Ok(())
}
