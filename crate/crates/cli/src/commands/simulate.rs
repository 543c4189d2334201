use crate::config::FileConfig;
use crate::error::CliError;
use clap::Args;
use litr_core::schema::SchemaFile;
use litr_core::{save_dataset, simulate};
use std::path::PathBuf;

/// Generate a randomized trial with known ground truth. Writes
/// `<out>.csv`, `<out>.schema.json`, and `<out>.truth.json`.
#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Number of subjects.
    #[arg(long)]
    pub n: Option<usize>,
    /// Latent domains.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub discrete_items: Option<usize>,
    /// Categories per discrete item.
    #[arg(long)]
    pub categories: Option<usize>,
    #[arg(long)]
    pub continuous_items: Option<usize>,
    #[arg(long)]
    pub covariates: Option<usize>,
    /// Constant P(A = +1).
    #[arg(long)]
    pub propensity: Option<f64>,
    #[arg(long)]
    pub loading_strength: Option<f64>,
    #[arg(long)]
    pub noise_scale: Option<f64>,
    /// Zero removes treatment effects entirely.
    #[arg(long)]
    pub treatment_effect_scale: Option<f64>,
    /// Output prefix.
    #[arg(long, short)]
    pub out: PathBuf,
}

pub fn run(args: &SimulateArgs, config: &FileConfig, seed: Option<u64>) -> Result<(), CliError> {
    let mut sim = config.simulate.clone().unwrap_or_default();
    if let Some(seed) = seed.or(config.seed) {
        sim.seed = seed;
    }
    macro_rules! take {
        ($field:ident) => {
            if let Some(v) = args.$field {
                sim.$field = v;
            }
        };
    }
    take!(n);
    take!(k);
    take!(discrete_items);
    take!(categories);
    take!(continuous_items);
    take!(covariates);
    take!(propensity);
    take!(loading_strength);
    take!(noise_scale);
    take!(treatment_effect_scale);

    let (dataset, truth) = simulate(&sim)?;
    let data_path = args.out.with_extension("csv");
    let schema_path = args.out.with_extension("schema.json");
    let truth_path = args.out.with_extension("truth.json");
    save_dataset(&dataset, &data_path)?;
    SchemaFile::new(&dataset.schema, &dataset.covariate_names).save(&schema_path)?;
    truth.save(&truth_path)?;
    println!(
        "simulated {} subjects ({} items, {} covariates) -> {}, {}, {}",
        dataset.n(),
        dataset.schema.len(),
        dataset.covariate_names.len(),
        data_path.display(),
        schema_path.display(),
        truth_path.display()
    );
    Ok(())
}
