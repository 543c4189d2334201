//! Measurement decoder: maps a latent state to distributions over observed
//! items, shared between the pre- and post-treatment phases.
//!
//! Discrete items get multinomial-logit category probabilities
//! `softmax(alpha_m + sum_k beta[k][m] * z_k)`; continuous items get the
//! point prediction `alpha + sum_k beta[k] * z_k`. Losses are cross entropy
//! and squared error respectively. Loading trends across adjacent
//! categories carry the sign of the item-domain association, which
//! [`MeasurementParams::domain_scores`] condenses into one score per latent
//! domain in [-1, 1].

use crate::schema::{ItemKind, ItemSchema};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Floor applied to predicted probabilities inside cross entropy so extreme
/// parameters never produce non-finite losses or gradients.
pub const PROB_CLAMP: f64 = 1e-12;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MeasurementError {
    #[error("domain scores need at least one discrete item")]
    NoDiscreteItems,
    #[error("invalid measurement parameters: {0}")]
    InvalidParams(String),
}

/// Whether a latent state is a binary assignment or a relaxed point in the
/// unit cube.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StateMode {
    Hard,
    Soft,
}

/// Latent state of dimension K. Hard entries are exactly 0 or 1; soft
/// entries lie in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentState {
    values: Vec<f64>,
    mode: StateMode,
}

impl LatentState {
    pub fn hard(bits: &[u8]) -> Self {
        assert!(
            bits.iter().all(|&b| b <= 1),
            "hard state entries must be 0 or 1"
        );
        LatentState {
            values: bits.iter().map(|&b| f64::from(b)).collect(),
            mode: StateMode::Hard,
        }
    }

    /// Hard state from the low `k` bits of `mask`, most significant bit
    /// first, so ascending masks enumerate states in lexicographic order.
    pub fn hard_from_mask(mask: u32, k: usize) -> Self {
        let mut values = vec![0.0; k];
        write_mask_values(mask, &mut values);
        LatentState {
            values,
            mode: StateMode::Hard,
        }
    }

    pub fn soft(values: Vec<f64>) -> Self {
        assert!(
            values.iter().all(|&v| (0.0..=1.0).contains(&v)),
            "soft state entries must lie in [0, 1]"
        );
        LatentState {
            values,
            mode: StateMode::Soft,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mode(&self) -> StateMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Bits of a hard state, for reporting.
    pub fn bits(&self) -> Vec<u8> {
        assert_eq!(self.mode, StateMode::Hard, "bits() needs a hard state");
        self.values.iter().map(|&v| v as u8).collect()
    }

    /// Threshold a soft state at 0.5. Reporting-only; arm choices always
    /// use soft values.
    pub fn thresholded(&self) -> LatentState {
        LatentState {
            values: self
                .values
                .iter()
                .map(|&v| if v >= 0.5 { 1.0 } else { 0.0 })
                .collect(),
            mode: StateMode::Hard,
        }
    }
}

/// Fill `values` from the low bits of `mask`, most significant bit first.
pub(crate) fn write_mask_values(mask: u32, values: &mut [f64]) {
    let k = values.len();
    for (i, v) in values.iter_mut().enumerate() {
        *v = f64::from((mask >> (k - 1 - i)) & 1);
    }
}

/// Parameters for one item's decoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ItemParams {
    /// `alpha[m]` and `beta[k][m]`: per-category intercepts and one loading
    /// vector over categories per latent domain.
    Discrete { alpha: Vec<f64>, beta: Vec<Vec<f64>> },
    /// Scalar intercept and one loading per latent domain.
    Continuous { alpha: f64, beta: Vec<f64> },
}

/// Decoder parameters for all items, shared by y0 and y1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementParams {
    pub k: usize,
    pub items: Vec<ItemParams>,
}

/// Decoded distribution or point prediction for one item.
#[derive(Debug, Clone, PartialEq)]
pub enum ItemPrediction {
    /// Probability over categories; sums to 1.
    Categorical(Vec<f64>),
    Point(f64),
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for p in &mut out {
        *p /= sum;
    }
    out
}

impl MeasurementParams {
    /// All-zero parameters matching `schema` with `k` latent domains.
    pub fn zeros(schema: &ItemSchema, k: usize) -> Self {
        let items = schema
            .items
            .iter()
            .map(|item| match item.kind {
                ItemKind::Discrete { num_categories } => ItemParams::Discrete {
                    alpha: vec![0.0; num_categories],
                    beta: vec![vec![0.0; num_categories]; k],
                },
                ItemKind::Continuous => ItemParams::Continuous {
                    alpha: 0.0,
                    beta: vec![0.0; k],
                },
            })
            .collect();
        MeasurementParams { k, items }
    }

    /// Same shape as `self`, all entries zero. Gradient accumulators start
    /// from this.
    pub fn zeros_like(&self) -> Self {
        let mut out = self.clone();
        out.for_each_param_mut(&mut |v| *v = 0.0);
        out
    }

    pub fn num_items(&self) -> usize {
        self.items.len()
    }

    pub fn validate_against(&self, schema: &ItemSchema) -> Result<(), MeasurementError> {
        if self.items.len() != schema.items.len() {
            return Err(MeasurementError::InvalidParams(format!(
                "{} item parameter blocks for {} schema items",
                self.items.len(),
                schema.items.len()
            )));
        }
        for (j, (params, spec)) in self.items.iter().zip(&schema.items).enumerate() {
            match (params, spec.kind) {
                (ItemParams::Discrete { alpha, beta }, ItemKind::Discrete { num_categories }) => {
                    if alpha.len() != num_categories
                        || beta.len() != self.k
                        || beta.iter().any(|row| row.len() != num_categories)
                    {
                        return Err(MeasurementError::InvalidParams(format!(
                            "item {j} has mismatched discrete dimensions"
                        )));
                    }
                }
                (ItemParams::Continuous { beta, .. }, ItemKind::Continuous) => {
                    if beta.len() != self.k {
                        return Err(MeasurementError::InvalidParams(format!(
                            "item {j} has {} loadings for k={}",
                            beta.len(),
                            self.k
                        )));
                    }
                }
                _ => {
                    return Err(MeasurementError::InvalidParams(format!(
                        "item {j} kind does not match the schema"
                    )));
                }
            }
        }
        let mut finite = true;
        self.for_each_param(&mut |v| finite &= v.is_finite());
        if !finite {
            return Err(MeasurementError::InvalidParams(
                "non-finite parameter entry".into(),
            ));
        }
        Ok(())
    }

    /// Distribution (discrete) or point prediction (continuous) for item
    /// `j` at state `z`. Soft values substitute directly into the linear
    /// predictor.
    pub fn decode_item(&self, z: &LatentState, j: usize) -> ItemPrediction {
        self.decode_item_values(z.values(), j)
    }

    pub(crate) fn decode_item_values(&self, z: &[f64], j: usize) -> ItemPrediction {
        debug_assert_eq!(z.len(), self.k);
        match &self.items[j] {
            ItemParams::Discrete { alpha, beta } => {
                ItemPrediction::Categorical(softmax(&self.discrete_logits(alpha, beta, z)))
            }
            ItemParams::Continuous { alpha, beta } => {
                ItemPrediction::Point(alpha + dot(beta, z))
            }
        }
    }

    fn discrete_logits(&self, alpha: &[f64], beta: &[Vec<f64>], z: &[f64]) -> Vec<f64> {
        let mut logits = alpha.to_vec();
        for (row, &zk) in beta.iter().zip(z) {
            if zk != 0.0 {
                for (l, &b) in logits.iter_mut().zip(row) {
                    *l += b * zk;
                }
            }
        }
        logits
    }

    /// Cross entropy (discrete) or squared error (continuous) of observing
    /// `y` for item `j` at state `z`.
    pub fn item_loss(&self, z: &LatentState, j: usize, y: f64) -> f64 {
        self.item_loss_values(z.values(), j, y)
    }

    pub(crate) fn item_loss_values(&self, z: &[f64], j: usize, y: f64) -> f64 {
        match self.decode_item_values(z, j) {
            ItemPrediction::Categorical(probs) => {
                let c = y as usize;
                debug_assert!(c < probs.len(), "category {y} out of range for item {j}");
                -(probs[c].max(PROB_CLAMP)).ln()
            }
            ItemPrediction::Point(pred) => {
                let r = y - pred;
                r * r
            }
        }
    }

    /// Sum of item losses over all items; the per-phase term of the
    /// training objective.
    pub fn subject_loss(&self, z: &LatentState, y: &[f64]) -> f64 {
        self.subject_loss_values(z.values(), y)
    }

    pub(crate) fn subject_loss_values(&self, z: &[f64], y: &[f64]) -> f64 {
        debug_assert_eq!(y.len(), self.items.len());
        y.iter()
            .enumerate()
            .map(|(j, &yj)| self.item_loss_values(z, j, yj))
            .sum()
    }

    /// Per-domain trend score in [-1, 1]: over all adjacent loading pairs
    /// of all discrete items, the proportion of strictly decreasing pairs
    /// minus the proportion of strictly increasing pairs. Ties count toward
    /// neither.
    pub fn domain_scores(&self) -> Result<Vec<f64>, MeasurementError> {
        let mut scores = vec![0.0; self.k];
        let mut total_pairs = 0usize;
        let mut counts: Vec<(i64, i64)> = vec![(0, 0); self.k];
        for item in &self.items {
            if let ItemParams::Discrete { beta, .. } = item {
                for (k, row) in beta.iter().enumerate() {
                    for pair in row.windows(2) {
                        if pair[0] > pair[1] {
                            counts[k].0 += 1;
                        } else if pair[0] < pair[1] {
                            counts[k].1 += 1;
                        }
                    }
                }
                total_pairs += beta.first().map_or(0, |row| row.len() - 1);
            }
        }
        if total_pairs == 0 {
            return Err(MeasurementError::NoDiscreteItems);
        }
        for (k, &(dec, inc)) in counts.iter().enumerate() {
            scores[k] = (dec - inc) as f64 / total_pairs as f64;
        }
        Ok(scores)
    }

    pub fn param_count(&self) -> usize {
        let mut n = 0;
        self.for_each_param(&mut |_| n += 1);
        n
    }

    /// Visit every parameter in canonical order (items in order; per
    /// discrete item the intercepts then the loading rows by domain).
    pub fn for_each_param(&self, f: &mut impl FnMut(f64)) {
        for item in &self.items {
            match item {
                ItemParams::Discrete { alpha, beta } => {
                    alpha.iter().for_each(|&v| f(v));
                    beta.iter().flatten().for_each(|&v| f(v));
                }
                ItemParams::Continuous { alpha, beta } => {
                    f(*alpha);
                    beta.iter().for_each(|&v| f(v));
                }
            }
        }
    }

    pub fn for_each_param_mut(&mut self, f: &mut impl FnMut(&mut f64)) {
        for item in &mut self.items {
            match item {
                ItemParams::Discrete { alpha, beta } => {
                    alpha.iter_mut().for_each(|v| f(v));
                    beta.iter_mut().flatten().for_each(|v| f(v));
                }
                ItemParams::Continuous { alpha, beta } => {
                    f(alpha);
                    beta.iter_mut().for_each(|v| f(v));
                }
            }
        }
    }

    /// Element-wise combine with another instance of the same shape.
    pub fn zip_apply(&mut self, other: &Self, f: &mut impl FnMut(&mut f64, f64)) {
        let mut flat = Vec::with_capacity(other.param_count());
        other.for_each_param(&mut |v| flat.push(v));
        let mut i = 0;
        self.for_each_param_mut(&mut |v| {
            f(v, flat[i]);
            i += 1;
        });
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::ItemSpec;
    use proptest::prelude::*;

    const LN3: f64 = 1.0986122886681098;

    fn one_discrete(alpha: Vec<f64>, beta: Vec<Vec<f64>>) -> MeasurementParams {
        MeasurementParams {
            k: beta.len(),
            items: vec![ItemParams::Discrete { alpha, beta }],
        }
    }

    #[test]
    fn zero_parameters_decode_uniform() {
        let schema = ItemSchema::new(vec![ItemSpec::discrete("a", 3)]);
        let params = MeasurementParams::zeros(&schema, 2);
        let z = LatentState::hard(&[1, 0]);
        match params.decode_item(&z, 0) {
            ItemPrediction::Categorical(p) => {
                for &pi in &p {
                    assert!((pi - 1.0 / 3.0).abs() < 1e-15);
                }
            }
            _ => panic!("expected categorical"),
        }
    }

    #[test]
    fn softmax_matches_direct_evaluation() {
        // One domain, two categories, beta for category 1 equal to ln 3.
        let params = one_discrete(vec![0.0, 0.0], vec![vec![0.0, LN3]]);
        let on = LatentState::hard(&[1]);
        let off = LatentState::hard(&[0]);
        match params.decode_item(&on, 0) {
            ItemPrediction::Categorical(p) => {
                assert!((p[0] - 0.25).abs() < 1e-12);
                assert!((p[1] - 0.75).abs() < 1e-12);
            }
            _ => unreachable!(),
        }
        match params.decode_item(&off, 0) {
            ItemPrediction::Categorical(p) => {
                assert!((p[0] - 0.5).abs() < 1e-12);
                assert!((p[1] - 0.5).abs() < 1e-12);
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn continuous_loss_is_squared_error() {
        let params = MeasurementParams {
            k: 1,
            items: vec![ItemParams::Continuous {
                alpha: 1.0,
                beta: vec![2.0],
            }],
        };
        let z = LatentState::hard(&[1]);
        assert_eq!(params.item_loss(&z, 0, 3.0), 0.0);
        assert_eq!(params.item_loss(&z, 0, 5.0), 4.0);
    }

    #[test]
    fn discrete_uniform_loss_is_ln3() {
        let params = one_discrete(vec![0.0; 3], vec![vec![0.0; 3]]);
        let z = LatentState::hard(&[0]);
        for y in 0..3 {
            assert!((params.item_loss(&z, 0, y as f64) - LN3).abs() < 1e-12);
        }
    }

    #[test]
    fn subject_loss_adds_items_and_handles_empty_schema() {
        let params = MeasurementParams {
            k: 1,
            items: vec![
                ItemParams::Continuous {
                    alpha: 1.0,
                    beta: vec![2.0],
                },
                ItemParams::Discrete {
                    alpha: vec![0.0; 3],
                    beta: vec![vec![0.0; 3]],
                },
            ],
        };
        let z = LatentState::hard(&[1]);
        let total = params.subject_loss(&z, &[5.0, 1.0]);
        assert!((total - (4.0 + LN3)).abs() < 1e-12);

        let empty = MeasurementParams { k: 1, items: vec![] };
        assert_eq!(empty.subject_loss(&z, &[]), 0.0);
    }

    #[test]
    fn clamp_keeps_cross_entropy_finite() {
        let params = one_discrete(vec![0.0, -2000.0], vec![vec![0.0, 0.0]]);
        let z = LatentState::hard(&[0]);
        let loss = params.item_loss(&z, 0, 1.0);
        assert!(loss.is_finite());
        assert!((loss - (-PROB_CLAMP.ln())).abs() < 1e-6);
    }

    #[test]
    fn domain_scores_hit_the_endpoints() {
        // All loading vectors strictly increasing: every pair is a positive
        // trend, score -1.
        let increasing = MeasurementParams {
            k: 2,
            items: vec![
                ItemParams::Discrete {
                    alpha: vec![0.0; 3],
                    beta: vec![vec![0.0, 1.0, 2.0], vec![0.5, 1.5, 2.5]],
                },
                ItemParams::Discrete {
                    alpha: vec![0.0; 4],
                    beta: vec![vec![0.0, 0.1, 0.2, 0.3], vec![1.0, 2.0, 3.0, 4.0]],
                },
            ],
        };
        assert_eq!(increasing.domain_scores().unwrap(), vec![-1.0, -1.0]);

        let mut decreasing = increasing.clone();
        decreasing.for_each_param_mut(&mut |v| *v = -*v);
        assert_eq!(decreasing.domain_scores().unwrap(), vec![1.0, 1.0]);

        // One increasing and one decreasing pair per domain, score 0.
        let balanced = one_discrete(vec![0.0; 3], vec![vec![0.0, 1.0, 0.0], vec![2.0, 1.0, 2.0]]);
        assert_eq!(balanced.domain_scores().unwrap(), vec![0.0, 0.0]);

        let continuous_only = MeasurementParams {
            k: 1,
            items: vec![ItemParams::Continuous {
                alpha: 0.0,
                beta: vec![1.0],
            }],
        };
        assert_eq!(
            continuous_only.domain_scores().unwrap_err(),
            MeasurementError::NoDiscreteItems
        );
    }

    #[test]
    fn mask_enumeration_is_lexicographic() {
        assert_eq!(LatentState::hard_from_mask(0, 3).values(), &[0.0, 0.0, 0.0]);
        assert_eq!(LatentState::hard_from_mask(1, 3).values(), &[0.0, 0.0, 1.0]);
        assert_eq!(LatentState::hard_from_mask(4, 3).values(), &[1.0, 0.0, 0.0]);
        assert_eq!(LatentState::hard_from_mask(7, 3).values(), &[1.0, 1.0, 1.0]);
    }

    proptest! {
        #[test]
        fn probabilities_sum_to_one_and_stay_interior(
            alpha in proptest::collection::vec(-10.0f64..10.0, 4),
            beta in proptest::collection::vec(proptest::collection::vec(-10.0f64..10.0, 4), 2),
            z in proptest::collection::vec(0.0f64..=1.0, 2),
        ) {
            let params = one_discrete(alpha, beta);
            match params.decode_item(&LatentState::soft(z), 0) {
                ItemPrediction::Categorical(p) => {
                    prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                    prop_assert!(p.iter().all(|&pi| pi > 0.0 && pi < 1.0));
                }
                _ => unreachable!(),
            }
        }

        #[test]
        fn softmax_is_shift_invariant(
            alpha in proptest::collection::vec(-5.0f64..5.0, 3),
            beta_row in proptest::collection::vec(-5.0f64..5.0, 3),
            shift in -10.0f64..10.0,
            z in 0.0f64..=1.0,
        ) {
            let base = one_discrete(alpha.clone(), vec![beta_row.clone()]);
            // Add the same constant to every intercept and every loading for
            // a fixed category index shift pattern: here both vectors shift
            // uniformly across categories, which leaves softmax unchanged.
            let shifted = one_discrete(
                alpha.iter().map(|a| a + shift).collect(),
                vec![beta_row.clone()],
            );
            let zs = LatentState::soft(vec![z]);
            let (ItemPrediction::Categorical(p0), ItemPrediction::Categorical(p1)) =
                (base.decode_item(&zs, 0), shifted.decode_item(&zs, 0))
            else {
                unreachable!()
            };
            for (a, b) in p0.iter().zip(&p1) {
                prop_assert!((a - b).abs() < 1e-12);
            }

            let beta_shifted = one_discrete(
                alpha.clone(),
                vec![beta_row.iter().map(|b| b + shift).collect()],
            );
            let ItemPrediction::Categorical(p2) = beta_shifted.decode_item(&zs, 0) else {
                unreachable!()
            };
            for (a, b) in p0.iter().zip(&p2) {
                prop_assert!((a - b).abs() < 1e-11);
            }
        }

        #[test]
        fn domain_scores_survive_monotone_rescaling(
            rows in proptest::collection::vec(proptest::collection::vec(-3.0f64..3.0, 4), 2),
            scale in 0.1f64..5.0,
            offset in -2.0f64..2.0,
        ) {
            let base = one_discrete(vec![0.0; 4], rows.clone());
            let rescaled = one_discrete(
                vec![0.0; 4],
                rows.iter()
                    .map(|row| row.iter().map(|b| scale * b + offset).collect())
                    .collect(),
            );
            prop_assert_eq!(
                base.domain_scores().unwrap(),
                rescaled.domain_scores().unwrap()
            );
        }
    }
}
