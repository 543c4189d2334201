//! Transition network: shared hidden layers plus one output head per
//! treatment arm, mapping `(x, z0)` to a soft post-treatment latent state.
//!
//! The architecture is fixed (affine -> rectifier per shared layer, then
//! the requested arm's affine head followed by a component-wise sigmoid),
//! so the reverse pass is a hand-derived chain rule over exactly that
//! shape rather than a general autodiff engine.

use crate::measurement::LatentState;
use crate::schema::Arm;
use crate::seeds::{self, StreamRng};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TransitionError {
    #[error("invalid transition parameters: {0}")]
    InvalidParams(String),
}

/// Dense layer: `weight[out][in]` and `bias[out]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineLayer {
    pub weight: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

impl AffineLayer {
    pub fn zeros(out_dim: usize, in_dim: usize) -> Self {
        AffineLayer {
            weight: vec![vec![0.0; in_dim]; out_dim],
            bias: vec![0.0; out_dim],
        }
    }

    /// Glorot-uniform weights in [-r, r] with r = sqrt(6/(fan_in+fan_out));
    /// zero biases.
    pub fn glorot(out_dim: usize, in_dim: usize, rng: &mut StreamRng) -> Self {
        let r = (6.0 / (in_dim + out_dim) as f64).sqrt();
        AffineLayer {
            weight: (0..out_dim)
                .map(|_| (0..in_dim).map(|_| seeds::uniform_in(rng, -r, r)).collect())
                .collect(),
            bias: vec![0.0; out_dim],
        }
    }

    pub fn out_dim(&self) -> usize {
        self.bias.len()
    }

    pub fn in_dim(&self) -> usize {
        self.weight.first().map_or(0, |row| row.len())
    }

    pub fn apply(&self, input: &[f64]) -> Vec<f64> {
        debug_assert_eq!(input.len(), self.in_dim());
        self.weight
            .iter()
            .zip(&self.bias)
            .map(|(row, &b)| b + crate::measurement::dot(row, input))
            .collect()
    }
}

fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// Network parameters: shared trunk plus one head per arm, sigmoid output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionParams {
    pub shared: Vec<AffineLayer>,
    pub head_pos: AffineLayer,
    pub head_neg: AffineLayer,
}

/// Intermediate activations recorded by a forward pass, consumed by the
/// reverse pass for the same inputs.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub input: Vec<f64>,
    /// Pre-activation per shared layer.
    pub pre: Vec<Vec<f64>>,
    /// Rectified output per shared layer.
    pub post: Vec<Vec<f64>>,
    pub head_pre: Vec<f64>,
    /// Sigmoid outputs, the soft post-treatment state.
    pub z1: Vec<f64>,
    pub arm: Arm,
}

impl TransitionParams {
    /// Seeded network for `p` covariates, `k` latent domains, and the given
    /// shared hidden widths.
    pub fn glorot(p: usize, k: usize, hidden: &[usize], rng: &mut StreamRng) -> Self {
        let mut shared = Vec::with_capacity(hidden.len());
        let mut in_dim = p + k;
        for &width in hidden {
            shared.push(AffineLayer::glorot(width, in_dim, rng));
            in_dim = width;
        }
        let head_pos = AffineLayer::glorot(k, in_dim, rng);
        let head_neg = AffineLayer::glorot(k, in_dim, rng);
        TransitionParams {
            shared,
            head_pos,
            head_neg,
        }
    }

    pub fn zeros(p: usize, k: usize, hidden: &[usize]) -> Self {
        let mut rng = seeds::stream_rng(0, "unused");
        let mut out = Self::glorot(p, k, hidden, &mut rng);
        out.for_each_param_mut(&mut |v| *v = 0.0);
        out
    }

    pub fn zeros_like(&self) -> Self {
        let mut out = self.clone();
        out.for_each_param_mut(&mut |v| *v = 0.0);
        out
    }

    pub fn head(&self, arm: Arm) -> &AffineLayer {
        match arm {
            Arm::Pos => &self.head_pos,
            Arm::Neg => &self.head_neg,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.shared
            .first()
            .map_or(self.head_pos.in_dim(), |l| l.in_dim())
    }

    pub fn latent_dim(&self) -> usize {
        self.head_pos.out_dim()
    }

    pub fn validate(&self, p: usize, k: usize) -> Result<(), TransitionError> {
        let mut in_dim = p + k;
        for (i, layer) in self.shared.iter().enumerate() {
            if layer.in_dim() != in_dim || layer.weight.len() != layer.bias.len() {
                return Err(TransitionError::InvalidParams(format!(
                    "shared layer {i} expects input {in_dim}, found {}",
                    layer.in_dim()
                )));
            }
            if layer.weight.iter().any(|row| row.len() != in_dim) {
                return Err(TransitionError::InvalidParams(format!(
                    "shared layer {i} has ragged weight rows"
                )));
            }
            in_dim = layer.out_dim();
        }
        for (name, head) in [("+1", &self.head_pos), ("-1", &self.head_neg)] {
            if head.in_dim() != in_dim || head.out_dim() != k {
                return Err(TransitionError::InvalidParams(format!(
                    "head {name} must map {in_dim} -> {k}"
                )));
            }
        }
        let mut finite = true;
        self.for_each_param(&mut |v| finite &= v.is_finite());
        if !finite {
            return Err(TransitionError::InvalidParams(
                "non-finite parameter entry".into(),
            ));
        }
        Ok(())
    }

    /// Soft post-treatment state for the requested arm.
    pub fn forward(&self, x: &[f64], z0: &LatentState, arm: Arm) -> LatentState {
        let cache = self.forward_cached(x, z0.values(), arm);
        LatentState::soft(cache.z1)
    }

    /// Forward pass that records every intermediate activation for the
    /// reverse pass (and for inspecting rectifier margins in tests).
    pub fn forward_cached(&self, x: &[f64], z0: &[f64], arm: Arm) -> ForwardCache {
        let mut input = Vec::with_capacity(x.len() + z0.len());
        input.extend_from_slice(x);
        input.extend_from_slice(z0);
        debug_assert_eq!(input.len(), self.input_dim());

        let mut pre = Vec::with_capacity(self.shared.len());
        let mut post = Vec::with_capacity(self.shared.len());
        let mut current = input.clone();
        for layer in &self.shared {
            let u = layer.apply(&current);
            let rectified: Vec<f64> = u.iter().map(|&v| v.max(0.0)).collect();
            pre.push(u);
            current = rectified.clone();
            post.push(rectified);
        }
        let head_pre = self.head(arm).apply(&current);
        let z1 = head_pre.iter().map(|&u| sigmoid(u)).collect();
        ForwardCache {
            input,
            pre,
            post,
            head_pre,
            z1,
            arm,
        }
    }

    /// Chain `d(loss)/d(z1)` back through sigmoid, head, and shared layers,
    /// accumulating parameter gradients into `grad`. The gradient with
    /// respect to `(x, z0)` is discarded: hard baseline states are updated
    /// by exact search, not gradient descent.
    pub fn backward(&self, cache: &ForwardCache, dz1: &[f64], grad: &mut TransitionParams) {
        debug_assert_eq!(dz1.len(), cache.z1.len());
        // Sigmoid: dz1/du = z1 (1 - z1).
        let mut delta: Vec<f64> = dz1
            .iter()
            .zip(&cache.z1)
            .map(|(&g, &z)| g * z * (1.0 - z))
            .collect();

        let head = self.head(cache.arm);
        let head_grad = match cache.arm {
            Arm::Pos => &mut grad.head_pos,
            Arm::Neg => &mut grad.head_neg,
        };
        let head_input = cache.post.last().unwrap_or(&cache.input);
        let mut upstream = accumulate_affine(head, head_grad, head_input, &delta);

        for (idx, layer) in self.shared.iter().enumerate().rev() {
            // Rectifier subgradient with derivative(0) = 0.
            delta = upstream
                .iter()
                .zip(&cache.pre[idx])
                .map(|(&g, &u)| if u > 0.0 { g } else { 0.0 })
                .collect();
            let layer_input = if idx == 0 {
                &cache.input
            } else {
                &cache.post[idx - 1]
            };
            upstream = accumulate_affine(layer, &mut grad.shared[idx], layer_input, &delta);
        }
    }

    pub fn param_count(&self) -> usize {
        let mut n = 0;
        self.for_each_param(&mut |_| n += 1);
        n
    }

    /// Canonical order: shared layers (weights row-major, then bias), head
    /// +1, head -1.
    pub fn for_each_param(&self, f: &mut impl FnMut(f64)) {
        for layer in self.shared.iter().chain([&self.head_pos, &self.head_neg]) {
            layer.weight.iter().flatten().for_each(|&v| f(v));
            layer.bias.iter().for_each(|&v| f(v));
        }
    }

    pub fn for_each_param_mut(&mut self, f: &mut impl FnMut(&mut f64)) {
        for layer in self
            .shared
            .iter_mut()
            .chain([&mut self.head_pos, &mut self.head_neg])
        {
            layer.weight.iter_mut().flatten().for_each(|v| f(v));
            layer.bias.iter_mut().for_each(|v| f(v));
        }
    }

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

/// Add the affine layer's parameter gradients for `delta` at `input` into
/// `grad`, returning the gradient with respect to the layer input.
fn accumulate_affine(
    layer: &AffineLayer,
    grad: &mut AffineLayer,
    input: &[f64],
    delta: &[f64],
) -> Vec<f64> {
    for ((grow, &d), gb) in grad.weight.iter_mut().zip(delta).zip(&mut grad.bias) {
        for (g, &inp) in grow.iter_mut().zip(input) {
            *g += d * inp;
        }
        *gb += d;
    }
    let mut upstream = vec![0.0; input.len()];
    for (row, &d) in layer.weight.iter().zip(delta) {
        for (u, &w) in upstream.iter_mut().zip(row) {
            *u += d * w;
        }
    }
    upstream
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeds;

    #[test]
    fn zero_network_outputs_one_half() {
        let params = TransitionParams::zeros(2, 3, &[4]);
        let z0 = LatentState::hard(&[1, 0, 1]);
        let out = params.forward(&[0.3, -0.7], &z0, Arm::Pos);
        assert_eq!(out.values(), &[0.5, 0.5, 0.5]);
    }

    #[test]
    fn identical_heads_make_arms_agree() {
        let mut rng = seeds::stream_rng(42, "init");
        let mut params = TransitionParams::glorot(2, 2, &[5, 3], &mut rng);
        params.head_neg = params.head_pos.clone();
        let z0 = LatentState::hard(&[0, 1]);
        let x = [0.4, 1.2];
        assert_eq!(
            params.forward(&x, &z0, Arm::Pos),
            params.forward(&x, &z0, Arm::Neg)
        );
    }

    #[test]
    fn hand_evaluated_1_1_1_network_matches() {
        // One covariate, one latent domain, one hidden unit.
        let params = TransitionParams {
            shared: vec![AffineLayer {
                weight: vec![vec![0.5, -0.2]],
                bias: vec![0.1],
            }],
            head_pos: AffineLayer {
                weight: vec![vec![2.0]],
                bias: vec![-0.02],
            },
            head_neg: AffineLayer {
                weight: vec![vec![-1.0]],
                bias: vec![0.3],
            },
        };
        let x = [0.3];
        let z0 = LatentState::hard(&[1]);

        let hidden = (0.5f64 * 0.3 + (-0.2) * 1.0 + 0.1).max(0.0);
        let u_pos = 2.0f64 * hidden - 0.02;
        let expected_pos = 1.0 / (1.0 + (-u_pos).exp());
        let got = params.forward(&x, &z0, Arm::Pos);
        assert!((got.values()[0] - expected_pos).abs() < 1e-12);

        let u_neg = -1.0f64 * hidden + 0.3;
        let expected_neg = 1.0 / (1.0 + (-u_neg).exp());
        let got = params.forward(&x, &z0, Arm::Neg);
        assert!((got.values()[0] - expected_neg).abs() < 1e-12);
    }

    #[test]
    fn outputs_stay_strictly_interior() {
        let mut rng = seeds::stream_rng(9, "init");
        for trial in 0..50 {
            let params = TransitionParams::glorot(3, 2, &[6, 4], &mut rng);
            let x: Vec<f64> = (0..3).map(|_| seeds::normal(&mut rng) * 3.0).collect();
            let z0 = LatentState::hard(&[(trial % 2) as u8, 1]);
            let out = params.forward(&x, &z0, Arm::Pos);
            assert!(out.values().iter().all(|&v| v > 0.0 && v < 1.0));
        }
    }

    #[test]
    fn zero_upstream_gradient_leaves_tape_zero() {
        let mut rng = seeds::stream_rng(4, "init");
        let params = TransitionParams::glorot(2, 2, &[3], &mut rng);
        let cache = params.forward_cached(&[0.1, -0.4], &[1.0, 0.0], Arm::Neg);
        let mut grad = params.zeros_like();
        params.backward(&cache, &[0.0, 0.0], &mut grad);
        let mut all_zero = true;
        grad.for_each_param(&mut |v| all_zero &= v == 0.0);
        assert!(all_zero);
    }

    #[test]
    fn swapping_heads_swaps_arm_outputs() {
        let mut rng = seeds::stream_rng(11, "init");
        let params = TransitionParams::glorot(2, 2, &[4], &mut rng);
        let mut swapped = params.clone();
        std::mem::swap(&mut swapped.head_pos, &mut swapped.head_neg);
        let x = [0.2, -1.1];
        let z0 = LatentState::hard(&[1, 1]);
        assert_eq!(
            params.forward(&x, &z0, Arm::Pos),
            swapped.forward(&x, &z0, Arm::Neg)
        );
        assert_eq!(
            params.forward(&x, &z0, Arm::Neg),
            swapped.forward(&x, &z0, Arm::Pos)
        );
    }
}
