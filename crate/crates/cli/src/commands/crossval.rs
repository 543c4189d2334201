use crate::config::{CrossvalSection, FileConfig};
use crate::error::{io_error, CliError};
use crate::spec::{parse_anchor, parse_direction, parse_hidden, parse_outcome, WeightsSpec};
use clap::Args;
use litr_core::{crossval, load_dataset, CrossvalOptions, Outcome};
use std::path::PathBuf;

/// Repeated stratified cross-validation of the proposed rule against the
/// linear-Q comparator, reporting per-outcome means and spreads.
#[derive(Debug, Args)]
pub struct CrossvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub schema: PathBuf,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub repeats: Option<usize>,
    /// min or max.
    #[arg(long)]
    pub direction: Option<String>,
    /// Aggregate for the proposed rule: sum, neg-sum, model-scores,
    /// fixed:w1,w2,..., or file:PATH.
    #[arg(long)]
    pub aggregate: Option<String>,
    /// Outcome definition, repeatable (observable outcomes only).
    #[arg(long = "outcome")]
    pub outcomes: Vec<String>,
    /// Skip the linear-Q comparator.
    #[arg(long)]
    pub no_baseline: bool,
    /// Training flags, as in `train`.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub outer_iterations: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub hidden: Option<String>,
    #[arg(long = "anchor")]
    pub anchors: Vec<String>,
    #[arg(long)]
    pub standardize_continuous: bool,
    #[arg(long, short)]
    pub out: PathBuf,
    /// Optional delimited summary table.
    #[arg(long)]
    pub summary_csv: Option<PathBuf>,
}

pub fn run(args: &CrossvalArgs, config: &FileConfig, seed: Option<u64>) -> Result<(), CliError> {
    let mut training = config.train.clone().unwrap_or_default();
    let section: CrossvalSection = config.crossval.clone().unwrap_or_default();
    let cv_seed = seed.or(config.seed).unwrap_or(training.seed);
    training.seed = cv_seed;
    if let Some(k) = args.k {
        training.k = k;
    }
    if let Some(epochs) = args.epochs {
        training.epochs_per_iteration = epochs;
    }
    if let Some(outer) = args.outer_iterations {
        training.outer_iterations = outer;
    }
    if let Some(lr) = args.learning_rate {
        training.learning_rate = lr;
    }
    if let Some(batch) = args.batch_size {
        training.batch_size = Some(batch);
    }
    if let Some(hidden) = &args.hidden {
        training.hidden_widths = parse_hidden(hidden)?;
    }
    if args.standardize_continuous {
        training.standardize_continuous = true;
    }
    if !args.anchors.is_empty() {
        training.anchors = args
            .anchors
            .iter()
            .map(|a| parse_anchor(a))
            .collect::<Result<_, _>>()?;
    }

    let outcome_specs: Vec<String> = if !args.outcomes.is_empty() {
        args.outcomes.clone()
    } else if !section.outcomes.is_empty() {
        section.outcomes.clone()
    } else {
        vec!["sum".to_string()]
    };
    let outcomes: Vec<Outcome> = outcome_specs
        .iter()
        .map(|o| parse_outcome(o))
        .collect::<Result<_, _>>()?;

    let direction_text = args
        .direction
        .clone()
        .or(section.direction)
        .unwrap_or_else(|| "min".to_string());
    let aggregate_text = args
        .aggregate
        .clone()
        .or(section.aggregate)
        .unwrap_or_else(|| "model-scores".to_string());
    let aggregate = WeightsSpec::parse(&aggregate_text)?.to_source(training.k)?;

    let options = CrossvalOptions {
        folds: args.folds.unwrap_or(section.folds),
        repeats: args.repeats.unwrap_or(section.repeats),
        seed: cv_seed,
        aggregate,
        direction: parse_direction(&direction_text)?,
        outcomes,
        baseline: !args.no_baseline && section.baseline,
    };

    let dataset = load_dataset(&args.data, &args.schema)?;
    let report = crossval(&dataset, &training, &options)?;
    report.save(&args.out)?;
    if let Some(summary) = &args.summary_csv {
        std::fs::write(summary, report.summary_csv()).map_err(|e| io_error(summary, e))?;
    }
    for comparison in &report.outcomes {
        let sd = comparison
            .proposed
            .sd
            .map_or(String::from("-"), |s| format!("{s:.4}"));
        match &comparison.baseline {
            Some(baseline) => {
                let bsd = baseline.sd.map_or(String::from("-"), |s| format!("{s:.4}"));
                println!(
                    "{}: proposed {:.4} ({sd}) vs linear-Q {:.4} ({bsd})",
                    comparison.outcome, comparison.proposed.mean, baseline.mean
                );
            }
            None => println!(
                "{}: proposed {:.4} ({sd})",
                comparison.outcome, comparison.proposed.mean
            ),
        }
    }
    println!("report -> {}", args.out.display());
    Ok(())
}
