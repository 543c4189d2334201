//! Bundled model parameters and the composite per-subject loss.
//!
//! A subject's loss is the measurement loss of `y0` at the hard baseline
//! state plus the measurement loss of `y1` at the soft state produced by
//! the transition network for the subject's arm. The reverse pass here
//! chains through decoder, sigmoid head, and shared layers in one sweep;
//! decoder parameters collect contributions from both phases, while the
//! hard baseline state receives no gradient (it is updated by exact
//! search).

use crate::measurement::{write_mask_values, ItemParams, ItemPrediction, LatentState, MeasurementParams, PROB_CLAMP};
use crate::schema::Arm;
use crate::transition::TransitionParams;
use serde::{Deserialize, Serialize};

/// All trainable parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub measurement: MeasurementParams,
    pub transition: TransitionParams,
}

impl ModelParams {
    pub fn param_count(&self) -> usize {
        self.measurement.param_count() + self.transition.param_count()
    }

    /// Canonical order: measurement first, then transition.
    pub fn for_each_param(&self, f: &mut impl FnMut(f64)) {
        self.measurement.for_each_param(f);
        self.transition.for_each_param(f);
    }

    pub fn for_each_param_mut(&mut self, f: &mut impl FnMut(&mut f64)) {
        self.measurement.for_each_param_mut(f);
        self.transition.for_each_param_mut(f);
    }
}

/// Accumulated partial derivatives, same shape as the parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientTape {
    pub measurement: MeasurementParams,
    pub transition: TransitionParams,
}

impl GradientTape {
    pub fn zeros(params: &ModelParams) -> Self {
        GradientTape {
            measurement: params.measurement.zeros_like(),
            transition: params.transition.zeros_like(),
        }
    }

    pub fn reset(&mut self) {
        self.measurement.for_each_param_mut(&mut |v| *v = 0.0);
        self.transition.for_each_param_mut(&mut |v| *v = 0.0);
    }

    pub fn add(&mut self, other: &GradientTape) {
        self.measurement
            .zip_apply(&other.measurement, &mut |a, b| *a += b);
        self.transition
            .zip_apply(&other.transition, &mut |a, b| *a += b);
    }

    pub fn scale(&mut self, s: f64) {
        self.measurement.for_each_param_mut(&mut |v| *v *= s);
        self.transition.for_each_param_mut(&mut |v| *v *= s);
    }

    pub fn for_each_param(&self, f: &mut impl FnMut(f64)) {
        self.measurement.for_each_param(f);
        self.transition.for_each_param(f);
    }

    /// Name of the first parameter block holding a non-finite entry, for
    /// abort diagnostics.
    pub fn nonfinite_block(&self) -> Option<String> {
        for (j, item) in self.measurement.items.iter().enumerate() {
            let (alpha_bad, beta_bad) = match item {
                ItemParams::Discrete { alpha, beta } => (
                    alpha.iter().any(|v| !v.is_finite()),
                    beta.iter().flatten().any(|v| !v.is_finite()),
                ),
                ItemParams::Continuous { alpha, beta } => (
                    !alpha.is_finite(),
                    beta.iter().any(|v| !v.is_finite()),
                ),
            };
            if alpha_bad {
                return Some(format!("measurement item {j} intercepts"));
            }
            if beta_bad {
                return Some(format!("measurement item {j} loadings"));
            }
        }
        for (i, layer) in self.transition.shared.iter().enumerate() {
            if layer.weight.iter().flatten().any(|v| !v.is_finite()) {
                return Some(format!("shared layer {i} weights"));
            }
            if layer.bias.iter().any(|v| !v.is_finite()) {
                return Some(format!("shared layer {i} biases"));
            }
        }
        for (name, head) in [("+1", &self.transition.head_pos), ("-1", &self.transition.head_neg)] {
            if head.weight.iter().flatten().any(|v| !v.is_finite())
                || head.bias.iter().any(|v| !v.is_finite())
            {
                return Some(format!("head {name}"));
            }
        }
        None
    }
}

/// Pre-treatment plus post-treatment loss for one subject at a candidate
/// baseline state.
pub fn subject_loss(
    params: &ModelParams,
    x: &[f64],
    z0: &LatentState,
    arm: Arm,
    y0: &[f64],
    y1: &[f64],
) -> f64 {
    subject_loss_values(params, x, z0.values(), arm, y0, y1)
}

pub(crate) fn subject_loss_values(
    params: &ModelParams,
    x: &[f64],
    z0: &[f64],
    arm: Arm,
    y0: &[f64],
    y1: &[f64],
) -> f64 {
    let pre = params.measurement.subject_loss_values(z0, y0);
    let cache = params.transition.forward_cached(x, z0, arm);
    let post = params.measurement.subject_loss_values(&cache.z1, y1);
    pre + post
}

/// Accumulate `weight * d(subject_loss)/d(theta)` into `tape`.
pub fn accumulate_subject_gradient(
    params: &ModelParams,
    x: &[f64],
    z0: &[f64],
    arm: Arm,
    y0: &[f64],
    y1: &[f64],
    weight: f64,
    tape: &mut GradientTape,
) {
    // Pre-treatment phase: decoder gradients at the hard baseline state.
    decoder_gradients(&params.measurement, z0, y0, weight, &mut tape.measurement, None);

    // Post-treatment phase: decoder gradients at the soft state, plus the
    // chain back through the network.
    let cache = params.transition.forward_cached(x, z0, arm);
    let mut dz1 = vec![0.0; cache.z1.len()];
    decoder_gradients(
        &params.measurement,
        &cache.z1,
        y1,
        weight,
        &mut tape.measurement,
        Some(&mut dz1),
    );
    params.transition.backward(&cache, &dz1, &mut tape.transition);
}

/// Decoder-parameter gradients of the measurement loss at state `z`,
/// optionally accumulating the gradient with respect to `z` itself.
fn decoder_gradients(
    m: &MeasurementParams,
    z: &[f64],
    y: &[f64],
    weight: f64,
    grad: &mut MeasurementParams,
    mut dz: Option<&mut [f64]>,
) {
    for (j, &yj) in y.iter().enumerate() {
        match (&m.items[j], &mut grad.items[j]) {
            (
                ItemParams::Discrete { alpha, beta },
                ItemParams::Discrete {
                    alpha: galpha,
                    beta: gbeta,
                },
            ) => {
                let ItemPrediction::Categorical(probs) = m.decode_item_values(z, j) else {
                    unreachable!("discrete item decodes categorically");
                };
                let observed = yj as usize;
                // The clamped loss -ln(max(p, eps)) is constant below the
                // clamp, so its exact gradient there is zero.
                if probs[observed] <= PROB_CLAMP {
                    continue;
                }
                let _ = alpha;
                for (mcat, &p) in probs.iter().enumerate() {
                    let g = weight * (p - f64::from(u8::from(mcat == observed)));
                    galpha[mcat] += g;
                    for (krow, &zk) in gbeta.iter_mut().zip(z) {
                        krow[mcat] += g * zk;
                    }
                }
                if let Some(dz) = dz.as_deref_mut() {
                    for (k, dzk) in dz.iter_mut().enumerate() {
                        let mut acc = 0.0;
                        for (mcat, &p) in probs.iter().enumerate() {
                            let g = p - f64::from(u8::from(mcat == observed));
                            acc += g * beta[k][mcat];
                        }
                        *dzk += weight * acc;
                    }
                }
            }
            (
                ItemParams::Continuous { alpha, beta },
                ItemParams::Continuous {
                    alpha: galpha,
                    beta: gbeta,
                },
            ) => {
                let pred = *alpha + crate::measurement::dot(beta, z);
                let r = weight * 2.0 * (pred - yj);
                *galpha += r;
                for (gb, &zk) in gbeta.iter_mut().zip(z) {
                    *gb += r * zk;
                }
                if let Some(dz) = dz.as_deref_mut() {
                    for (dzk, &bk) in dz.iter_mut().zip(beta) {
                        *dzk += r * bk;
                    }
                }
            }
            _ => unreachable!("gradient tape shape matches parameters"),
        }
    }
}

/// Enumerate all 2^k hard states and return the lexicographically smallest
/// minimizer of `loss` together with its value. Strict improvement keeps
/// the earliest minimum, which is exactly the lexicographic tie-break.
pub fn argmin_hard_state(k: usize, mut loss: impl FnMut(&[f64]) -> f64) -> (LatentState, f64) {
    assert!(k >= 1 && k <= 31, "latent dimension out of range");
    let mut scratch = vec![0.0; k];
    let mut best_mask = 0u32;
    let mut best = f64::INFINITY;
    for mask in 0..(1u32 << k) {
        write_mask_values(mask, &mut scratch);
        let value = loss(&scratch);
        if value < best {
            best = value;
            best_mask = mask;
        }
    }
    (LatentState::hard_from_mask(best_mask, k), best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{ItemSchema, ItemSpec};
    use crate::seeds;
    use crate::transition::AffineLayer;

    fn random_params(seed: u64, p: usize, k: usize, hidden: &[usize]) -> (ModelParams, ItemSchema) {
        let schema = ItemSchema::new(vec![
            ItemSpec::discrete("a", 3),
            ItemSpec::continuous("b"),
            ItemSpec::discrete("c", 2),
        ]);
        let mut rng = seeds::stream_rng(seed, "test-params");
        let mut measurement = MeasurementParams::zeros(&schema, k);
        measurement.for_each_param_mut(&mut |v| *v = seeds::normal(&mut rng) * 0.8);
        let transition = TransitionParams::glorot(p, k, hidden, &mut rng);
        (ModelParams { measurement, transition }, schema)
    }

    fn random_subject(seed: u64, p: usize, k: usize) -> (Vec<f64>, Vec<f64>, Arm, Vec<f64>, Vec<f64>) {
        let mut rng = seeds::stream_rng(seed, "test-subject");
        let x: Vec<f64> = (0..p).map(|_| seeds::normal(&mut rng)).collect();
        let z0: Vec<f64> = (0..k)
            .map(|_| f64::from(u8::from(seeds::bernoulli(&mut rng, 0.5))))
            .collect();
        let arm = if seeds::bernoulli(&mut rng, 0.5) { Arm::Pos } else { Arm::Neg };
        let y0 = vec![
            seeds::uniform_below(&mut rng, 3) as f64,
            seeds::normal(&mut rng),
            seeds::uniform_below(&mut rng, 2) as f64,
        ];
        let y1 = vec![
            seeds::uniform_below(&mut rng, 3) as f64,
            seeds::normal(&mut rng),
            seeds::uniform_below(&mut rng, 2) as f64,
        ];
        (x, z0, arm, y0, y1)
    }

    fn numeric_gradient(
        params: &ModelParams,
        x: &[f64],
        z0: &[f64],
        arm: Arm,
        y0: &[f64],
        y1: &[f64],
    ) -> Vec<f64> {
        let count = params.param_count();
        let mut grads = Vec::with_capacity(count);
        let step = 1e-5;
        for idx in 0..count {
            let bump = |delta: f64| {
                let mut perturbed = params.clone();
                let mut i = 0;
                perturbed.for_each_param_mut(&mut |v| {
                    if i == idx {
                        *v += delta;
                    }
                    i += 1;
                });
                subject_loss_values(&perturbed, x, z0, arm, y0, y1)
            };
            grads.push((bump(step) - bump(-step)) / (2.0 * step));
        }
        grads
    }

    /// Shared-layer pre-activations comfortably away from the rectifier
    /// kink, so central differences are trustworthy.
    fn kink_margin_ok(params: &ModelParams, x: &[f64], z0: &[f64]) -> bool {
        for arm in Arm::BOTH {
            let cache = params.transition.forward_cached(x, z0, arm);
            for layer in &cache.pre {
                if layer.iter().any(|&u| u.abs() < 1e-3) {
                    return false;
                }
            }
        }
        true
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let mut checked = 0;
        let mut seed = 0u64;
        while checked < 10 {
            seed += 1;
            let (params, _) = random_params(seed, 2, 2, &[4, 3]);
            let (x, z0, arm, y0, y1) = random_subject(seed, 2, 2);
            if !kink_margin_ok(&params, &x, &z0) {
                continue;
            }
            let mut tape = GradientTape::zeros(&params);
            accumulate_subject_gradient(&params, &x, &z0, arm, &y0, &y1, 1.0, &mut tape);
            let mut analytic = Vec::new();
            tape.for_each_param(&mut |v| analytic.push(v));
            let numeric = numeric_gradient(&params, &x, &z0, arm, &y0, &y1);
            for (i, (&a, &n)) in analytic.iter().zip(&numeric).enumerate() {
                let denom = a.abs().max(n.abs()).max(1e-8);
                assert!(
                    ((a - n) / denom).abs() < 1e-4,
                    "seed {seed} param {i}: analytic {a} vs numeric {n}"
                );
            }
            checked += 1;
        }
    }

    #[test]
    fn shared_gradients_decompose_per_arm() {
        let (params, _) = random_params(33, 2, 2, &[4]);
        let (x, z0, _, y0, y1) = random_subject(33, 2, 2);

        let mut combined = GradientTape::zeros(&params);
        accumulate_subject_gradient(&params, &x, &z0, Arm::Pos, &y0, &y1, 1.0, &mut combined);
        accumulate_subject_gradient(&params, &x, &z0, Arm::Neg, &y0, &y1, 1.0, &mut combined);

        let mut pos_only = GradientTape::zeros(&params);
        accumulate_subject_gradient(&params, &x, &z0, Arm::Pos, &y0, &y1, 1.0, &mut pos_only);
        let mut neg_only = GradientTape::zeros(&params);
        accumulate_subject_gradient(&params, &x, &z0, Arm::Neg, &y0, &y1, 1.0, &mut neg_only);

        let mut summed = pos_only;
        summed.add(&neg_only);

        let mut a = Vec::new();
        combined.for_each_param(&mut |v| a.push(v));
        let mut b = Vec::new();
        summed.for_each_param(&mut |v| b.push(v));
        for (x1, x2) in a.iter().zip(&b) {
            assert!((x1 - x2).abs() < 1e-12);
        }
    }

    #[test]
    fn head_swap_keeps_symmetric_batch_shared_gradients() {
        let (params, _) = random_params(7, 2, 2, &[4]);
        let (x, z0, _, y0, y1) = random_subject(7, 2, 2);

        // One subject per arm with identical data: swapping the heads must
        // leave shared-layer gradients unchanged and swap the head blocks.
        let tape_for = |p: &ModelParams| {
            let mut tape = GradientTape::zeros(p);
            accumulate_subject_gradient(p, &x, &z0, Arm::Pos, &y0, &y1, 1.0, &mut tape);
            accumulate_subject_gradient(p, &x, &z0, Arm::Neg, &y0, &y1, 1.0, &mut tape);
            tape
        };
        let base = tape_for(&params);
        let mut swapped_params = params.clone();
        std::mem::swap(&mut swapped_params.transition.head_pos, &mut swapped_params.transition.head_neg);
        let swapped = tape_for(&swapped_params);

        for (l1, l2) in base.transition.shared.iter().zip(&swapped.transition.shared) {
            for (r1, r2) in l1.weight.iter().zip(&l2.weight) {
                for (w1, w2) in r1.iter().zip(r2) {
                    assert!((w1 - w2).abs() < 1e-12);
                }
            }
        }
        let flat = |l: &AffineLayer| -> Vec<f64> {
            l.weight.iter().flatten().cloned().chain(l.bias.iter().cloned()).collect()
        };
        assert_eq!(flat(&base.transition.head_pos), flat(&swapped.transition.head_neg));
        assert_eq!(flat(&base.transition.head_neg), flat(&swapped.transition.head_pos));
    }

    #[test]
    fn argmin_prefers_lexicographically_smallest_tie() {
        let (state, value) = argmin_hard_state(3, |_| 1.0);
        assert_eq!(state.values(), &[0.0, 0.0, 0.0]);
        assert_eq!(value, 1.0);
    }

    #[test]
    fn argmin_finds_the_unique_minimum() {
        let (state, _) = argmin_hard_state(3, |z| {
            let target = [1.0, 0.0, 1.0];
            z.iter()
                .zip(&target)
                .map(|(a, b)| (a - b) * (a - b))
                .sum()
        });
        assert_eq!(state.values(), &[1.0, 0.0, 1.0]);
    }
}
