//! Parsers for the small flag-value languages: aggregate sources, outcome
//! definitions, policy sources, and anchor assignments.

use crate::error::CliError;
use litr_core::trainer::{AnchorSpec, TrendDirection};
use litr_core::{AggregateSource, AggregateSpec, Arm, FittedModel, Outcome};
use std::path::{Path, PathBuf};

/// `sum | neg-sum | model | model-scores | file:PATH | fixed:w1,w2,...`
#[derive(Debug, Clone, PartialEq)]
pub enum WeightsSpec {
    Sum,
    NegSum,
    /// The aggregate stored in the model file.
    Model,
    ModelScores,
    Fixed(Vec<f64>),
    File(PathBuf),
}

impl WeightsSpec {
    pub fn parse(text: &str) -> Result<WeightsSpec, CliError> {
        match text {
            "sum" => Ok(WeightsSpec::Sum),
            "neg-sum" => Ok(WeightsSpec::NegSum),
            "model" => Ok(WeightsSpec::Model),
            "model-scores" => Ok(WeightsSpec::ModelScores),
            other => {
                if let Some(path) = other.strip_prefix("file:") {
                    Ok(WeightsSpec::File(PathBuf::from(path)))
                } else if let Some(list) = other.strip_prefix("fixed:") {
                    Ok(WeightsSpec::Fixed(parse_weight_list(list)?))
                } else {
                    Err(CliError::validation(format!(
                        "unknown weights `{other}`; expected sum, neg-sum, model, model-scores, fixed:..., or file:PATH"
                    )))
                }
            }
        }
    }

    /// Resolve against a fitted model.
    pub fn resolve(&self, model: &FittedModel) -> Result<AggregateSpec, CliError> {
        let weights = match self {
            WeightsSpec::Sum => return Ok(AggregateSpec::sum(model.k)),
            WeightsSpec::NegSum => vec![-1.0; model.k],
            WeightsSpec::Model => return Ok(model.aggregate.clone()),
            WeightsSpec::ModelScores => {
                return Ok(litr_core::score_aggregate_from_model(model)?);
            }
            WeightsSpec::Fixed(w) => w.clone(),
            WeightsSpec::File(path) => load_weights_file(path)?,
        };
        if weights.len() != model.k {
            return Err(CliError::validation(format!(
                "{} aggregate weights for k={}",
                weights.len(),
                model.k
            )));
        }
        Ok(AggregateSpec::new(weights))
    }

    /// Resolve to a crossval aggregate source (no model available yet).
    pub fn to_source(&self, k: usize) -> Result<AggregateSource, CliError> {
        match self {
            WeightsSpec::Sum => Ok(AggregateSource::Sum),
            WeightsSpec::NegSum => Ok(AggregateSource::Fixed {
                weights: vec![-1.0; k],
            }),
            WeightsSpec::ModelScores | WeightsSpec::Model => Ok(AggregateSource::ModelScores),
            WeightsSpec::Fixed(w) => Ok(AggregateSource::Fixed { weights: w.clone() }),
            WeightsSpec::File(path) => Ok(AggregateSource::Fixed {
                weights: load_weights_file(path)?,
            }),
        }
    }
}

fn parse_weight_list(list: &str) -> Result<Vec<f64>, CliError> {
    list.split(',')
        .map(|w| {
            w.trim()
                .parse::<f64>()
                .map_err(|_| CliError::validation(format!("bad weight `{w}`")))
        })
        .collect()
}

fn load_weights_file(path: &Path) -> Result<Vec<f64>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
    serde_json::from_str::<Vec<f64>>(&text).map_err(|e| {
        CliError::validation(format!(
            "{}: expected a JSON array of weights: {e}",
            path.display()
        ))
    })
}

/// `sum | latent-sum | subset:NAME=item1+item2+...`
pub fn parse_outcome(text: &str) -> Result<Outcome, CliError> {
    match text {
        "sum" => Ok(Outcome::SumY1),
        "latent-sum" => Ok(Outcome::LatentSum),
        other => {
            let Some(rest) = other.strip_prefix("subset:") else {
                return Err(CliError::validation(format!(
                    "unknown outcome `{other}`; expected sum, latent-sum, or subset:NAME=a+b"
                )));
            };
            let Some((name, items)) = rest.split_once('=') else {
                return Err(CliError::validation(
                    "subset outcome needs NAME=item1+item2".to_string(),
                ));
            };
            let items: Vec<String> = items
                .split('+')
                .map(|i| i.trim().to_string())
                .filter(|i| !i.is_empty())
                .collect();
            if name.is_empty() || items.is_empty() {
                return Err(CliError::validation(
                    "subset outcome needs a name and at least one item".to_string(),
                ));
            }
            Ok(Outcome::ItemSubset {
                name: name.to_string(),
                items,
            })
        }
    }
}

/// `const:+1 | const:-1 | file:PATH` (the file needs a `chosen_arm`
/// column, as written by `recommend`).
#[derive(Debug, Clone, PartialEq)]
pub enum PolicySpec {
    Constant(Arm),
    File(PathBuf),
}

impl PolicySpec {
    pub fn parse(text: &str) -> Result<PolicySpec, CliError> {
        match text {
            "const:+1" | "const:1" => Ok(PolicySpec::Constant(Arm::Pos)),
            "const:-1" => Ok(PolicySpec::Constant(Arm::Neg)),
            other => {
                if let Some(path) = other.strip_prefix("file:") {
                    Ok(PolicySpec::File(PathBuf::from(path)))
                } else {
                    Err(CliError::validation(format!(
                        "unknown policy `{other}`; expected const:+1, const:-1, or file:PATH"
                    )))
                }
            }
        }
    }
}

/// `DOMAIN=ITEM:+` or `DOMAIN=ITEM:-`
pub fn parse_anchor(text: &str) -> Result<AnchorSpec, CliError> {
    let err = || {
        CliError::validation(format!(
            "bad anchor `{text}`; expected DOMAIN=ITEM:+ or DOMAIN=ITEM:-"
        ))
    };
    let (domain, rest) = text.split_once('=').ok_or_else(err)?;
    let domain: usize = domain.trim().parse().map_err(|_| err())?;
    let (item, direction) = rest.rsplit_once(':').ok_or_else(err)?;
    let direction = match direction.trim() {
        "+" => TrendDirection::Increasing,
        "-" => TrendDirection::Decreasing,
        _ => return Err(err()),
    };
    if item.is_empty() {
        return Err(err());
    }
    Ok(AnchorSpec {
        domain,
        item: item.trim().to_string(),
        direction,
    })
}

/// `min | max` (also accepts the long spellings).
pub fn parse_direction(text: &str) -> Result<litr_core::Direction, CliError> {
    match text {
        "min" | "minimize" => Ok(litr_core::Direction::Minimize),
        "max" | "maximize" => Ok(litr_core::Direction::Maximize),
        other => Err(CliError::validation(format!(
            "unknown direction `{other}`; expected min or max"
        ))),
    }
}

/// Comma-separated hidden widths, e.g. `20,10`.
pub fn parse_hidden(text: &str) -> Result<Vec<usize>, CliError> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    text.split(',')
        .map(|w| {
            w.trim()
                .parse::<usize>()
                .map_err(|_| CliError::validation(format!("bad hidden width `{w}`")))
        })
        .collect()
}
