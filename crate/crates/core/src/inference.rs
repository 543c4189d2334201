//! New-subject inference: estimate the baseline state from pre-treatment
//! items alone, predict per-arm soft post-treatment states, and recommend
//! the arm maximizing the aggregate.

use crate::measurement::{LatentState, MeasurementError};
use crate::model::argmin_hard_state;
use crate::schema::{Arm, BaselineRow, DataError};
use crate::trainer::FittedModel;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Weights of the aggregate over post-treatment latent domains. The
/// default all-ones vector is the plain sum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateSpec {
    pub weights: Vec<f64>,
}

impl AggregateSpec {
    pub fn sum(k: usize) -> Self {
        AggregateSpec {
            weights: vec![1.0; k],
        }
    }

    pub fn new(weights: Vec<f64>) -> Self {
        AggregateSpec { weights }
    }

    pub fn apply(&self, z: &LatentState) -> f64 {
        assert_eq!(z.len(), self.weights.len(), "aggregate length mismatch");
        self.weights
            .iter()
            .zip(z.values())
            .map(|(&w, &v)| w * v)
            .sum()
    }
}

/// Result of scoring one subject.
#[derive(Debug, Clone, PartialEq)]
pub struct Recommendation {
    pub z0_hat: LatentState,
    pub z1_pos: LatentState,
    pub z1_neg: LatentState,
    pub g_pos: f64,
    pub g_neg: f64,
    pub chosen_arm: Arm,
}

/// The hard state minimizing the pre-treatment measurement loss only; y1
/// is unavailable for a new subject. `x` is accepted for interface
/// symmetry with `recommend` but the criterion uses only `y0`. Ties break
/// toward the lexicographically smallest state.
pub fn estimate_baseline_state(model: &FittedModel, y0: &[f64], x: &[f64]) -> LatentState {
    let _ = x;
    let scaled = model.scaled_y0(y0);
    argmin_hard_state(model.k, |z| {
        model.params.measurement.subject_loss_values(z, &scaled)
    })
    .0
}

/// Recommend using the model's stored aggregate weights.
pub fn recommend(model: &FittedModel, y0: &[f64], x: &[f64]) -> Recommendation {
    recommend_with(model, &model.aggregate, y0, x)
}

/// Recommend with explicit aggregate weights: estimate the baseline state,
/// push it through both heads, and pick the arm with the larger aggregate.
/// Exact ties resolve to +1.
pub fn recommend_with(
    model: &FittedModel,
    aggregate: &AggregateSpec,
    y0: &[f64],
    x: &[f64],
) -> Recommendation {
    let z0_hat = estimate_baseline_state(model, y0, x);
    let z1_pos = model.params.transition.forward(x, &z0_hat, Arm::Pos);
    let z1_neg = model.params.transition.forward(x, &z0_hat, Arm::Neg);
    let g_pos = aggregate.apply(&z1_pos);
    let g_neg = aggregate.apply(&z1_neg);
    let chosen_arm = if g_pos >= g_neg { Arm::Pos } else { Arm::Neg };
    Recommendation {
        z0_hat,
        z1_pos,
        z1_neg,
        g_pos,
        g_neg,
        chosen_arm,
    }
}

/// Score a batch of baseline rows in parallel, preserving row order.
pub fn recommend_batch(
    model: &FittedModel,
    aggregate: &AggregateSpec,
    rows: &[BaselineRow],
) -> Vec<Recommendation> {
    rows.par_iter()
        .map(|row| recommend_with(model, aggregate, &row.y0, &row.x))
        .collect()
}

/// Aggregate weights read off the fitted loadings: one trend score per
/// domain, so domains whose high categories indicate poor health enter the
/// aggregate negatively.
pub fn score_aggregate_from_model(model: &FittedModel) -> Result<AggregateSpec, MeasurementError> {
    Ok(AggregateSpec {
        weights: model.params.measurement.domain_scores()?,
    })
}

/// Write recommendations as delimited text: the estimated baseline bits,
/// both aggregate values, and the chosen arm.
pub fn write_recommendations(path: &Path, recs: &[Recommendation]) -> Result<(), DataError> {
    let k = recs.first().map_or(0, |r| r.z0_hat.len());
    let csv_err = |e: csv::Error| DataError::Csv {
        path: path.to_path_buf(),
        source: e,
    };
    let mut writer = csv::WriterBuilder::new().from_path(path).map_err(csv_err)?;
    let mut header: Vec<String> = (1..=k).map(|i| format!("z0_hat_{i}")).collect();
    header.extend(["g_pos".to_string(), "g_neg".to_string(), "chosen_arm".to_string()]);
    writer.write_record(&header).map_err(csv_err)?;
    for rec in recs {
        let mut row: Vec<String> = rec.z0_hat.bits().iter().map(|b| b.to_string()).collect();
        row.push(format!("{}", rec.g_pos));
        row.push(format!("{}", rec.g_neg));
        row.push(rec.chosen_arm.to_string());
        writer.write_record(&row).map_err(csv_err)?;
    }
    writer.flush().map_err(|e| DataError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Write a recommendations header with no rows (empty input file case).
pub fn write_recommendations_header(path: &Path, k: usize) -> Result<(), DataError> {
    let csv_err = |e: csv::Error| DataError::Csv {
        path: path.to_path_buf(),
        source: e,
    };
    let mut writer = csv::WriterBuilder::new().from_path(path).map_err(csv_err)?;
    let mut header: Vec<String> = (1..=k).map(|i| format!("z0_hat_{i}")).collect();
    header.extend(["g_pos".to_string(), "g_neg".to_string(), "chosen_arm".to_string()]);
    writer.write_record(&header).map_err(csv_err)?;
    writer.flush().map_err(|e| DataError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Read the `chosen_arm` column of a recommendations (or any policy) file.
pub fn load_policy(path: &Path) -> Result<Vec<Arm>, DataError> {
    let csv_err = |e: csv::Error| DataError::Csv {
        path: path.to_path_buf(),
        source: e,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(csv_err)?;
    let headers = reader.headers().map_err(csv_err)?.clone();
    let col = headers
        .iter()
        .position(|h| h == "chosen_arm")
        .ok_or_else(|| DataError::MissingColumn {
            column: "chosen_arm".into(),
        })?;
    let mut arms = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        let field = record.get(col).unwrap_or("");
        let arm: Arm = field.parse().map_err(|_| DataError::InvalidTreatment {
            row: i + 1,
            value: field.to_string(),
        })?;
        arms.push(arm);
    }
    Ok(arms)
}
