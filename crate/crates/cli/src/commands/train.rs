use crate::config::FileConfig;
use crate::error::CliError;
use crate::spec::{parse_anchor, parse_hidden, WeightsSpec};
use clap::Args;
use litr_core::{fit, load_dataset};
use std::path::PathBuf;

/// Fit the model and write it as JSON.
#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training data (delimited, see the data format in the README).
    #[arg(long)]
    pub data: PathBuf,
    /// Schema JSON for the data file.
    #[arg(long)]
    pub schema: PathBuf,
    /// Latent domains.
    #[arg(long)]
    pub k: Option<usize>,
    /// Adam epochs per outer iteration.
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub outer_iterations: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Shared hidden widths, comma separated (e.g. `20,10`).
    #[arg(long)]
    pub hidden: Option<String>,
    /// Anchor assignment `DOMAIN=ITEM:+` or `DOMAIN=ITEM:-`; repeat once
    /// per domain. Defaults to discrete items spread across the schema.
    #[arg(long = "anchor")]
    pub anchors: Vec<String>,
    /// Standardize continuous items before fitting (recorded in the
    /// model file).
    #[arg(long)]
    pub standardize_continuous: bool,
    /// Aggregate stored in the model: sum, neg-sum, model-scores,
    /// fixed:w1,w2,..., or file:PATH.
    #[arg(long, default_value = "sum")]
    pub aggregate: String,
    /// Output model file.
    #[arg(long, short)]
    pub out: PathBuf,
}

pub fn run(args: &TrainArgs, config: &FileConfig, seed: Option<u64>) -> Result<(), CliError> {
    let mut training = config.train.clone().unwrap_or_default();
    if let Some(seed) = seed.or(config.seed) {
        training.seed = seed;
    }
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
    let weights = WeightsSpec::parse(&args.aggregate)?;
    if weights == WeightsSpec::Model {
        return Err(CliError::validation(
            "`--aggregate model` is only meaningful with an existing model; \
             pick sum, neg-sum, model-scores, fixed:..., or file:PATH",
        ));
    }

    let dataset = load_dataset(&args.data, &args.schema)?;
    let mut model = fit(&dataset, &training)?;
    model.aggregate = weights.resolve(&model)?;
    model.save(&args.out)?;
    let log = &model.objective_log;
    println!(
        "fitted k={} on {} subjects; objective {:.4} -> {:.4}; model -> {}",
        model.k,
        dataset.n(),
        log.first().map_or(f64::NAN, |p| p.objective),
        log.last().map_or(f64::NAN, |p| p.objective),
        args.out.display()
    );
    Ok(())
}
