use crate::commands::{meta_path, write_json};
use crate::config::FileConfig;
use crate::error::CliError;
use crate::spec::WeightsSpec;
use clap::Args;
use litr_core::inference::{recommend_batch, write_recommendations, write_recommendations_header};
use litr_core::schema::SchemaFile;
use litr_core::{load_baseline, FittedModel};
use serde::Serialize;
use std::path::PathBuf;

/// Score subjects with a fitted model and write per-row recommendations.
/// The input needs `y0_*` item columns and the covariates; full dataset
/// files are accepted (post-treatment columns are ignored).
#[derive(Debug, Args)]
pub struct RecommendArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Aggregate weights: model (stored), sum, neg-sum, model-scores,
    /// fixed:w1,w2,..., or file:PATH.
    #[arg(long, default_value = "model")]
    pub weights: String,
    /// Output recommendations file (delimited); a `.meta.json` sidecar
    /// records the effective configuration.
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Serialize)]
struct RecommendMeta<'a> {
    version: &'a str,
    model: String,
    data: String,
    weights_source: &'a str,
    aggregate_weights: &'a [f64],
    rows: usize,
}

pub fn run(args: &RecommendArgs, _config: &FileConfig) -> Result<(), CliError> {
    let model = FittedModel::load(&args.model)?;
    let schema_file = SchemaFile::new(&model.schema, &model.covariates);
    let rows = load_baseline(&args.data, &schema_file)?;
    let weights = WeightsSpec::parse(&args.weights)?;
    let aggregate = weights.resolve(&model)?;

    if rows.is_empty() {
        write_recommendations_header(&args.out, model.k)?;
    } else {
        let recs = recommend_batch(&model, &aggregate, &rows);
        write_recommendations(&args.out, &recs)?;
    }
    write_json(
        &meta_path(&args.out),
        &RecommendMeta {
            version: env!("CARGO_PKG_VERSION"),
            model: args.model.display().to_string(),
            data: args.data.display().to_string(),
            weights_source: &args.weights,
            aggregate_weights: &aggregate.weights,
            rows: rows.len(),
        },
    )?;
    println!(
        "recommended for {} subjects -> {}",
        rows.len(),
        args.out.display()
    );
    Ok(())
}
