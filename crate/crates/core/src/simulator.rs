//! Randomized-trial simulator with known latent ground truth, known
//! potential outcomes under both arms, and known optimal treatments.
//!
//! The reference generating process, fully seeded and recorded in the
//! [`GroundTruth`] sidecar:
//!
//! - `z0 ~ Bernoulli(0.5)` per domain, covariates standard normal.
//! - Per arm `a` and domain `k`,
//!   `z1 ~ Bernoulli(sigmoid(c0 + c.x + d.z0 + a (e.x + f.z0)))` with
//!   seeded coefficient draws; the optimal arm minimizes the exact
//!   expected sum of `z1` over domains (ties to +1).
//! - Discrete items split into contiguous blocks, one block per domain.
//!   Each item loads on its own domain with the increasing ramp
//!   `(0, s, 2s, ...)`, `s = loading_strength`, intercepts `-s*m/2` so the
//!   two conditional category distributions mirror each other; all cross
//!   loadings are zero. Continuous items load weakly on every domain
//!   (normal, scale `noise_scale`) and carry additive Gaussian noise of
//!   the same scale.
//! - Potential items are materialized for both arms; the realized `y1` is
//!   the assigned arm's copy, so realized and potential outcomes agree.
//!
//! Higher latent values read as higher severity here: the generating
//! ramps are increasing, so trend scoring assigns these domains negative
//! weights and policies that maximize the aggregate minimize severity.

use crate::evaluation::Outcome;
use crate::measurement::{ItemParams, ItemPrediction, LatentState, MeasurementParams};
use crate::schema::{Arm, Dataset, DataError, ItemSchema, ItemSpec, SubjectRecord};
use crate::seeds::{self, StreamRng};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulator config: {0}")]
    InvalidConfig(String),
    #[error("unknown outcome item `{name}`")]
    UnknownItem { name: String },
    #[error("outcome `{name}` is not available from ground truth")]
    UnsupportedOutcome { name: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed ground-truth JSON: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub n: usize,
    pub seed: u64,
    /// Latent domains.
    pub k: usize,
    pub discrete_items: usize,
    /// Categories per discrete item.
    pub categories: usize,
    pub continuous_items: usize,
    pub covariates: usize,
    /// Constant P(A = +1).
    pub propensity: f64,
    /// Ramp step of each discrete item's own-domain loading.
    pub loading_strength: f64,
    /// Scale of continuous loadings and of the additive continuous noise.
    pub noise_scale: f64,
    /// Multiplier on the treatment-interaction coefficients; zero removes
    /// the treatment effect entirely.
    pub treatment_effect_scale: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n: 500,
            seed: 0,
            k: 3,
            discrete_items: 9,
            categories: 3,
            continuous_items: 5,
            covariates: 3,
            propensity: 0.5,
            loading_strength: 2.0,
            noise_scale: 0.5,
            treatment_effect_scale: 1.0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.n < 1 {
            return Err(SimError::InvalidConfig("n must be at least 1".into()));
        }
        if self.k < 1 {
            return Err(SimError::InvalidConfig("k must be at least 1".into()));
        }
        if self.discrete_items < self.k {
            return Err(SimError::InvalidConfig(format!(
                "need at least one discrete item per domain ({} < {})",
                self.discrete_items, self.k
            )));
        }
        if self.categories < 2 {
            return Err(SimError::InvalidConfig(
                "discrete items need at least 2 categories".into(),
            ));
        }
        if !(self.propensity > 0.0 && self.propensity < 1.0) {
            return Err(SimError::InvalidConfig(format!(
                "propensity {} outside the open interval (0, 1)",
                self.propensity
            )));
        }
        for (name, v) in [
            ("loading_strength", self.loading_strength),
            ("noise_scale", self.noise_scale),
            ("treatment_effect_scale", self.treatment_effect_scale),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(SimError::InvalidConfig(format!(
                    "{name} must be finite and nonnegative, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Item schema and covariate names implied by the config.
    pub fn schema(&self) -> (ItemSchema, Vec<String>) {
        let mut items = Vec::with_capacity(self.discrete_items + self.continuous_items);
        for j in 0..self.discrete_items {
            items.push(ItemSpec::discrete(format!("sym{}", j + 1), self.categories));
        }
        for j in 0..self.continuous_items {
            items.push(ItemSpec::continuous(format!("bio{}", j + 1)));
        }
        let covariates = (0..self.covariates).map(|i| format!("x{}", i + 1)).collect();
        (ItemSchema::new(items), covariates)
    }

    /// Domain owning discrete item `j` (contiguous blocks).
    pub fn domain_of_discrete(&self, j: usize) -> usize {
        j * self.k / self.discrete_items
    }

    /// Every third discrete item is reverse-keyed (loadings decrease in
    /// the owning latent state). Block starts are never reverse-keyed, so
    /// default anchors stay increasing.
    pub fn item_is_reverse_keyed(&self, j: usize) -> bool {
        j % 3 == 2
    }
}

/// True transition coefficients for one latent domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainTransition {
    pub intercept: f64,
    pub x_main: Vec<f64>,
    pub z0_main: Vec<f64>,
    pub x_interaction: Vec<f64>,
    pub z0_interaction: Vec<f64>,
}

impl DomainTransition {
    /// P(z1 = 1 | x, z0, a).
    pub fn probability(&self, x: &[f64], z0: &[u8], arm: Arm) -> f64 {
        let z0f: Vec<f64> = z0.iter().map(|&b| f64::from(b)).collect();
        let main = self.intercept
            + crate::measurement::dot(&self.x_main, x)
            + crate::measurement::dot(&self.z0_main, &z0f);
        let interaction = crate::measurement::dot(&self.x_interaction, x)
            + crate::measurement::dot(&self.z0_interaction, &z0f);
        let u = main + arm.sign() * interaction;
        if u >= 0.0 {
            1.0 / (1.0 + (-u).exp())
        } else {
            u.exp() / (1.0 + u.exp())
        }
    }
}

/// Everything unobservable about one simulated subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectTruth {
    pub z0: Vec<u8>,
    pub z1_pos: Vec<u8>,
    pub z1_neg: Vec<u8>,
    /// Expected z1 per domain under each arm.
    pub p_z1_pos: Vec<f64>,
    pub p_z1_neg: Vec<f64>,
    /// Arm minimizing the expected sum of z1; ties resolve to +1.
    pub optimal_arm: Arm,
    /// Potential item responses under each arm.
    pub y1_pos: Vec<f64>,
    pub y1_neg: Vec<f64>,
}

/// Sidecar written next to every simulated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub version: String,
    pub config: SimConfig,
    pub schema: ItemSchema,
    pub covariate_names: Vec<String>,
    pub measurement: MeasurementParams,
    pub transitions: Vec<DomainTransition>,
    /// First anchor item of each domain plus the two strongest continuous
    /// items: the indicative subset analogue.
    pub indicative_items: Vec<String>,
    pub continuous_noise_sd: f64,
    pub subjects: Vec<SubjectTruth>,
}

impl GroundTruth {
    pub fn save(&self, path: &Path) -> Result<(), SimError> {
        let text = serde_json::to_string(self).expect("ground truth serializes");
        std::fs::write(path, text).map_err(|e| SimError::Io {
            path: path.to_path_buf(),
            source: e,
        })
    }

    pub fn load(path: &Path) -> Result<GroundTruth, SimError> {
        let text = std::fs::read_to_string(path).map_err(|e| SimError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        serde_json::from_str(&text).map_err(|e| SimError::Json {
            path: path.to_path_buf(),
            source: e,
        })
    }

    pub fn optimal_arms(&self) -> Vec<Arm> {
        self.subjects.iter().map(|s| s.optimal_arm).collect()
    }

    /// Truth for records `range`, matching [`Dataset::slice`].
    pub fn slice(&self, range: std::ops::Range<usize>) -> GroundTruth {
        GroundTruth {
            subjects: self.subjects[range].to_vec(),
            ..self.clone()
        }
    }
}

fn true_measurement(config: &SimConfig, rng: &mut StreamRng) -> MeasurementParams {
    let mut items = Vec::with_capacity(config.discrete_items + config.continuous_items);
    let s = config.loading_strength;
    for j in 0..config.discrete_items {
        let own = config.domain_of_discrete(j);
        // Every third item is reverse-keyed: its categories decrease as
        // the owning latent state rises, the way instruments mix
        // positively and negatively worded questions. Summing raw item
        // scores therefore dilutes the severity signal, while the decoder
        // learns each item's direction.
        let sign = if config.item_is_reverse_keyed(j) { -s } else { s };
        let alpha: Vec<f64> = (0..config.categories)
            .map(|m| -sign * m as f64 / 2.0)
            .collect();
        let beta: Vec<Vec<f64>> = (0..config.k)
            .map(|k| {
                (0..config.categories)
                    .map(|m| if k == own { sign * m as f64 } else { 0.0 })
                    .collect()
            })
            .collect();
        items.push(ItemParams::Discrete { alpha, beta });
    }
    for _ in 0..config.continuous_items {
        let beta: Vec<f64> = (0..config.k)
            .map(|_| config.noise_scale * seeds::normal(rng))
            .collect();
        items.push(ItemParams::Continuous { alpha: 0.0, beta });
    }
    MeasurementParams {
        k: config.k,
        items,
    }
}

// Coefficient scales of the reference process. Treatment heterogeneity
// loads mostly on the latent state, with moderate covariate interactions.
const INTERCEPT_SCALE: f64 = 0.5;
const X_MAIN_SCALE: f64 = 0.5;
const Z0_MAIN_SCALE: f64 = 1.0;
const X_INTERACTION_SCALE: f64 = 0.4;
const Z0_INTERACTION_SCALE: f64 = 1.25;

fn true_transitions(config: &SimConfig, rng: &mut StreamRng) -> Vec<DomainTransition> {
    let tes = config.treatment_effect_scale;
    (0..config.k)
        .map(|_| DomainTransition {
            intercept: INTERCEPT_SCALE * seeds::normal(rng),
            x_main: (0..config.covariates)
                .map(|_| X_MAIN_SCALE * seeds::normal(rng))
                .collect(),
            z0_main: (0..config.k)
                .map(|_| Z0_MAIN_SCALE * seeds::normal(rng))
                .collect(),
            x_interaction: (0..config.covariates)
                .map(|_| tes * X_INTERACTION_SCALE * seeds::normal(rng))
                .collect(),
            z0_interaction: (0..config.k)
                .map(|_| tes * Z0_INTERACTION_SCALE * seeds::normal(rng))
                .collect(),
        })
        .collect()
}

fn indicative_items(config: &SimConfig, measurement: &MeasurementParams, schema: &ItemSchema) -> Vec<String> {
    let mut names = Vec::new();
    let mut seen_domains = std::collections::HashSet::new();
    for j in 0..config.discrete_items {
        if seen_domains.insert(config.domain_of_discrete(j)) {
            names.push(schema.items[j].name.clone());
        }
    }
    let mut strength: Vec<(usize, f64)> = (0..config.continuous_items)
        .map(|c| {
            let j = config.discrete_items + c;
            let ItemParams::Continuous { beta, .. } = &measurement.items[j] else {
                unreachable!()
            };
            (j, beta.iter().map(|b| b * b).sum::<f64>())
        })
        .collect();
    strength.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    for &(j, _) in strength.iter().take(2) {
        names.push(schema.items[j].name.clone());
    }
    names
}

/// Sample one item response vector at a hard latent state.
fn sample_items(
    measurement: &MeasurementParams,
    z: &[u8],
    noise_sd: f64,
    rng: &mut StreamRng,
) -> Vec<f64> {
    let state = LatentState::hard(z);
    (0..measurement.items.len())
        .map(|j| match measurement.decode_item(&state, j) {
            ItemPrediction::Categorical(probs) => {
                let u = seeds::uniform(rng);
                let mut cumulative = 0.0;
                let mut chosen = probs.len() - 1;
                for (m, &p) in probs.iter().enumerate() {
                    cumulative += p;
                    if u < cumulative {
                        chosen = m;
                        break;
                    }
                }
                chosen as f64
            }
            ItemPrediction::Point(mean) => mean + noise_sd * seeds::normal(rng),
        })
        .collect()
}

/// Generate a randomized trial and its ground truth. Deterministic given
/// the config; the first `m` subjects of a larger run are identical to a
/// smaller run with the same seed, so one call can be sliced into train
/// and test sets that share the generating process.
pub fn simulate(config: &SimConfig) -> Result<(Dataset, GroundTruth), SimError> {
    config.validate()?;
    let (schema, covariate_names) = config.schema();

    let mut param_rng = seeds::stream_rng(config.seed, "sim-params");
    let measurement = true_measurement(config, &mut param_rng);
    let transitions = true_transitions(config, &mut param_rng);
    let indicative = indicative_items(config, &measurement, &schema);

    let mut records = Vec::with_capacity(config.n);
    let mut subjects = Vec::with_capacity(config.n);
    for i in 0..config.n {
        let mut rng = seeds::indexed_stream_rng(config.seed, "sim-subject", i as u64);

        let z0: Vec<u8> = (0..config.k)
            .map(|_| u8::from(seeds::bernoulli(&mut rng, 0.5)))
            .collect();
        let x: Vec<f64> = (0..config.covariates).map(|_| seeds::normal(&mut rng)).collect();

        let p_z1_pos: Vec<f64> = transitions
            .iter()
            .map(|t| t.probability(&x, &z0, Arm::Pos))
            .collect();
        let p_z1_neg: Vec<f64> = transitions
            .iter()
            .map(|t| t.probability(&x, &z0, Arm::Neg))
            .collect();
        let z1_pos: Vec<u8> = p_z1_pos
            .iter()
            .map(|&p| u8::from(seeds::bernoulli(&mut rng, p)))
            .collect();
        let z1_neg: Vec<u8> = p_z1_neg
            .iter()
            .map(|&p| u8::from(seeds::bernoulli(&mut rng, p)))
            .collect();
        let optimal_arm = if p_z1_pos.iter().sum::<f64>() <= p_z1_neg.iter().sum::<f64>() {
            Arm::Pos
        } else {
            Arm::Neg
        };

        let arm = if seeds::bernoulli(&mut rng, config.propensity) {
            Arm::Pos
        } else {
            Arm::Neg
        };
        let propensity = match arm {
            Arm::Pos => config.propensity,
            Arm::Neg => 1.0 - config.propensity,
        };

        let y0 = sample_items(&measurement, &z0, config.noise_scale, &mut rng);
        let y1_pos = sample_items(&measurement, &z1_pos, config.noise_scale, &mut rng);
        let y1_neg = sample_items(&measurement, &z1_neg, config.noise_scale, &mut rng);
        let y1 = match arm {
            Arm::Pos => y1_pos.clone(),
            Arm::Neg => y1_neg.clone(),
        };

        records.push(SubjectRecord {
            y0,
            x,
            arm,
            propensity,
            y1,
        });
        subjects.push(SubjectTruth {
            z0,
            z1_pos,
            z1_neg,
            p_z1_pos,
            p_z1_neg,
            optimal_arm,
            y1_pos,
            y1_neg,
        });
    }

    let dataset = Dataset::new(schema.clone(), covariate_names.clone(), records)?;
    let truth = GroundTruth {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.clone(),
        schema,
        covariate_names,
        measurement,
        transitions,
        indicative_items: indicative,
        continuous_noise_sd: config.noise_scale,
        subjects,
    };
    Ok((dataset, truth))
}

/// Mean outcome under the arm each subject's policy selects, read directly
/// from stored potential outcomes. No inverse-probability weighting is
/// involved.
pub fn oracle_value(policy: &[Arm], truth: &GroundTruth, outcome: &Outcome) -> Result<f64, SimError> {
    assert_eq!(
        policy.len(),
        truth.subjects.len(),
        "policy must align with ground truth"
    );
    let item_indices: Option<Vec<usize>> = match outcome {
        Outcome::LatentSum => None,
        Outcome::SumY1 => Some((0..truth.schema.len()).collect()),
        Outcome::ItemSubset { items, .. } => {
            let mut indices = Vec::with_capacity(items.len());
            for name in items {
                indices.push(truth.schema.index_of(name).ok_or_else(|| SimError::UnknownItem {
                    name: name.clone(),
                })?);
            }
            Some(indices)
        }
    };
    let total: f64 = policy
        .iter()
        .zip(&truth.subjects)
        .map(|(&arm, subject)| {
            match &item_indices {
                None => {
                    let z1 = match arm {
                        Arm::Pos => &subject.z1_pos,
                        Arm::Neg => &subject.z1_neg,
                    };
                    z1.iter().map(|&b| f64::from(b)).sum::<f64>()
                }
                Some(indices) => {
                    let y1 = match arm {
                        Arm::Pos => &subject.y1_pos,
                        Arm::Neg => &subject.y1_neg,
                    };
                    indices.iter().map(|&j| y1[j]).sum::<f64>()
                }
            }
        })
        .sum();
    Ok(total / policy.len().max(1) as f64)
}
