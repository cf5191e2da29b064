//! The three self-supervision losses and their gradients with respect to the
//! network outputs.
//!
//! * binary cross-entropy: normals → class 0, augmentations → class 1;
//! * contrastive: normal/normal and augmented/augmented pairs are positives,
//!   every cross pair is a negative;
//! * inverse focal: cross-entropy reweighted by `exp(γ s)`.
//!
//! Expectations are batch means. All arithmetic is f64.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floor applied to probabilities inside logarithms.
pub const PROB_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub bc: f64,
    pub cl: f64,
    #[serde(rename = "if")]
    pub inv_focal: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { bc: 1.0, cl: 1.0, inv_focal: 1.5 }
    }
}

impl LossWeights {
    pub fn new(bc: f64, cl: f64, inv_focal: f64) -> Self {
        Self { bc, cl, inv_focal }
    }

    pub fn total(&self) -> f64 {
        self.bc + self.cl + self.inv_focal
    }

    pub fn validate(&self) -> Result<()> {
        let w = [self.bc, self.cl, self.inv_focal];
        if w.iter().any(|v| !v.is_finite() || *v < 0.0) || self.total() <= 0.0 {
            return Err(Error::Config(format!("loss weights {w:?} must be non-negative with a positive sum")));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    pub tau: f64,
    pub gamma: f64,
    pub weights: LossWeights,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { tau: 0.5, gamma: 1.0, weights: LossWeights::default() }
    }
}

/// Network outputs for a minibatch of `N` normal/augmented pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchFeatures {
    pub z_normal: Vec<Vec<f64>>,
    pub z_aug: Vec<Vec<f64>>,
    pub s_normal: Vec<[f64; 2]>,
    pub s_aug: Vec<[f64; 2]>,
    pub config: LossConfig,
}

/// How to treat an all-zero contrastive feature row.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ZeroRows {
    /// Fail with a normalization error.
    Reject,
    /// Treat the row as orthogonal to everything; its gradient is zero.
    /// A rectified feature that is entirely zero has no gradient path anyway.
    Ignore,
}

impl BatchFeatures {
    pub fn len(&self) -> usize {
        self.z_normal.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z_normal.is_empty()
    }

    fn check_shapes(&self) -> Result<()> {
        let n = self.z_normal.len();
        if n == 0 {
            return Err(Error::Data("empty batch".into()));
        }
        if self.z_aug.len() != n || self.s_normal.len() != n || self.s_aug.len() != n {
            return Err(Error::Data("normal and augmented halves differ in size".into()));
        }
        let d = self.z_normal[0].len();
        if self.z_normal.iter().chain(&self.z_aug).any(|r| r.len() != d) {
            return Err(Error::Data("ragged contrastive features".into()));
        }
        if !(self.config.tau > 0.0) {
            return Err(Error::Config(format!("temperature {} must be positive", self.config.tau)));
        }
        let finite = self.z_normal.iter().chain(&self.z_aug).flatten().all(|v| v.is_finite())
            && self.s_normal.iter().chain(&self.s_aug).flatten().all(|v| v.is_finite());
        if !finite {
            return Err(Error::Data("non-finite network output".into()));
        }
        Ok(())
    }

    /// Full invariant check: softmax rows sum to one with entries in [0, 1],
    /// contrastive features are non-negative.
    pub fn validate(&self) -> Result<()> {
        self.check_shapes()?;
        for s in self.s_normal.iter().chain(&self.s_aug) {
            if s.iter().any(|v| !(0.0..=1.0).contains(v)) || (s[0] + s[1] - 1.0).abs() > 1e-6 {
                return Err(Error::Data(format!("score row {s:?} is not a probability vector")));
            }
        }
        if self.z_normal.iter().chain(&self.z_aug).flatten().any(|v| *v < 0.0) {
            return Err(Error::Data("contrastive features must be non-negative".into()));
        }
        self.config.weights.validate()
    }
}

/// A loss value with gradients with respect to the softmax outputs.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreLoss {
    pub value: f64,
    pub grad_s_normal: Vec<[f64; 2]>,
    pub grad_s_aug: Vec<[f64; 2]>,
    /// Some probability hit the floor.
    pub clamped: bool,
}

/// A loss value with gradients with respect to the contrastive features.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureLoss {
    pub value: f64,
    pub grad_z_normal: Vec<Vec<f64>>,
    pub grad_z_aug: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossReport {
    pub l_bc: f64,
    pub l_cl: f64,
    pub l_if: f64,
    pub l_total: f64,
    pub grad_z_normal: Vec<Vec<f64>>,
    pub grad_z_aug: Vec<Vec<f64>>,
    pub grad_s_normal: Vec<[f64; 2]>,
    pub grad_s_aug: Vec<[f64; 2]>,
    pub clamped: bool,
}

/// `-w(s) ln s` and its derivative, where `w(s) = exp(γ s)` (γ = 0 gives
/// plain cross-entropy).
fn weighted_nll(s: f64, gamma: f64) -> (f64, f64, bool) {
    let clamped = s < PROB_EPS;
    let p = s.max(PROB_EPS);
    let w = (gamma * p).exp();
    let value = -w * p.ln();
    let grad = if clamped { 0.0 } else { -(gamma * w * p.ln() + w / p) };
    (value, grad, clamped)
}

fn score_loss(batch: &BatchFeatures, gamma: f64) -> Result<ScoreLoss> {
    batch.check_shapes()?;
    let n = batch.len() as f64;
    let mut value = 0.0;
    let mut clamped = false;
    let mut grad_s_normal = vec![[0.0; 2]; batch.len()];
    let mut grad_s_aug = vec![[0.0; 2]; batch.len()];
    for (i, s) in batch.s_normal.iter().enumerate() {
        let (v, g, c) = weighted_nll(s[0], gamma);
        value += v / n;
        grad_s_normal[i][0] = g / n;
        clamped |= c;
    }
    for (i, s) in batch.s_aug.iter().enumerate() {
        let (v, g, c) = weighted_nll(s[1], gamma);
        value += v / n;
        grad_s_aug[i][1] = g / n;
        clamped |= c;
    }
    Ok(ScoreLoss { value, grad_s_normal, grad_s_aug, clamped })
}

/// Binary cross-entropy: `-mean ln s_n⁰ - mean ln s_a¹`.
pub fn loss_bc(batch: &BatchFeatures) -> Result<ScoreLoss> {
    score_loss(batch, 0.0)
}

/// Inverse focal: `-mean[e^{γ s_n⁰} ln s_n⁰] - mean[e^{γ s_a¹} ln s_a¹]`.
pub fn loss_if(batch: &BatchFeatures) -> Result<ScoreLoss> {
    score_loss(batch, batch.config.gamma)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn unit_rows(rows: &[Vec<f64>], policy: ZeroRows) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let mut units = Vec::with_capacity(rows.len());
    let mut norms = Vec::with_capacity(rows.len());
    for r in rows {
        let norm = dot(r, r).sqrt();
        if norm == 0.0 {
            if policy == ZeroRows::Reject {
                return Err(Error::Normalization("contrastive feature row has zero norm".into()));
            }
            units.push(vec![0.0; r.len()]);
        } else {
            units.push(r.iter().map(|v| v / norm).collect());
        }
        norms.push(norm);
    }
    Ok((units, norms))
}

/// Log-sum-exp of `first` together with a row whose own max and
/// max-shifted exp-sum are precomputed.
fn lse_with(first: f64, row_max: f64, row_shifted_sum: f64) -> f64 {
    let m = first.max(row_max);
    ((first - m).exp() + row_shifted_sum * (row_max - m).exp()).ln() + m
}

/// Contrastive loss over both halves.
///
/// With `⟨u,v⟩_τ = uᵀv / (τ‖u‖‖v‖)`:
/// `ℓ_ij = -ln[e^{⟨zᵢ,zⱼ⟩} / (e^{⟨zᵢ,zⱼ⟩} + Σ_k e^{⟨zᵢ,z̃ₖ⟩})]`, `ℓ̃_ij` likewise with
/// the halves swapped, and `L = (1/N) Σ_i (1/2N) Σ_{j≠i} (ℓ_ij + ℓ̃_ij)`.
pub fn loss_cl(batch: &BatchFeatures) -> Result<FeatureLoss> {
    loss_cl_with(batch, ZeroRows::Reject)
}

pub fn loss_cl_with(batch: &BatchFeatures, policy: ZeroRows) -> Result<FeatureLoss> {
    batch.check_shapes()?;
    let n = batch.len();
    let d = batch.z_normal[0].len();
    let tau = batch.config.tau;
    let (un, norm_n) = unit_rows(&batch.z_normal, policy)?;
    let (ua, norm_a) = unit_rows(&batch.z_aug, policy)?;
    let mut grad_z_normal = vec![vec![0.0; d]; n];
    let mut grad_z_aug = vec![vec![0.0; d]; n];
    if n == 1 {
        return Ok(FeatureLoss { value: 0.0, grad_z_normal, grad_z_aug });
    }

    let sim = |a: &[Vec<f64>], b: &[Vec<f64>]| -> Vec<Vec<f64>> {
        a.iter().map(|x| b.iter().map(|y| dot(x, y) / tau).collect()).collect()
    };
    let nn = sim(&un, &un);
    let na = sim(&un, &ua); // na[i][k] = <z_i, z̃_k>
    let aa = sim(&ua, &ua);
    let an: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|k| na[k][i]).collect()).collect();

    let c = 1.0 / (2.0 * (n * n) as f64);
    let mut value = 0.0;
    let mut d_nn = vec![vec![0.0; n]; n];
    let mut d_aa = vec![vec![0.0; n]; n];
    let mut d_na = vec![vec![0.0; n]; n];

    // One anchor half at a time: positives from `pos`, negatives from `neg`.
    let mut half = |pos: &[Vec<f64>], neg: &[Vec<f64>], d_pos: &mut [Vec<f64>], neg_is_na: bool, value: &mut f64| {
        for i in 0..n {
            let row_max = neg[i].iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let shifted: f64 = neg[i].iter().map(|v| (v - row_max).exp()).sum();
            let mut neg_weight = 0.0; // Σ_j exp(row_max - lse_ij)
            for j in 0..n {
                if j == i {
                    continue;
                }
                let lse = lse_with(pos[i][j], row_max, shifted);
                *value += c * (lse - pos[i][j]);
                d_pos[i][j] += c * ((pos[i][j] - lse).exp() - 1.0);
                neg_weight += (row_max - lse).exp();
            }
            for k in 0..n {
                let g = c * (neg[i][k] - row_max).exp() * neg_weight;
                if neg_is_na {
                    d_na[i][k] += g;
                } else {
                    d_na[k][i] += g;
                }
            }
        }
    };
    half(&nn, &na, &mut d_nn, true, &mut value);
    half(&aa, &an, &mut d_aa, false, &mut value);

    let mut du_n = vec![vec![0.0; d]; n];
    let mut du_a = vec![vec![0.0; d]; n];
    for i in 0..n {
        for j in 0..n {
            let g_nn = (d_nn[i][j] + d_nn[j][i]) / tau;
            let g_aa = (d_aa[i][j] + d_aa[j][i]) / tau;
            let g_na = d_na[i][j] / tau;
            for t in 0..d {
                du_n[i][t] += g_nn * un[j][t] + g_na * ua[j][t];
                du_a[i][t] += g_aa * ua[j][t];
                du_a[j][t] += g_na * un[i][t];
            }
        }
    }
    let project = |u: &[f64], du: &[f64], norm: f64, out: &mut Vec<f64>| {
        if norm == 0.0 {
            return;
        }
        let along = dot(u, du);
        for t in 0..u.len() {
            out[t] = (du[t] - u[t] * along) / norm;
        }
    };
    for i in 0..n {
        project(&un[i], &du_n[i], norm_n[i], &mut grad_z_normal[i]);
        project(&ua[i], &du_a[i], norm_a[i], &mut grad_z_aug[i]);
    }
    Ok(FeatureLoss { value, grad_z_normal, grad_z_aug })
}

/// Weighted mean of the three components and of their gradients.
pub fn loss_total(batch: &BatchFeatures) -> Result<LossReport> {
    batch.validate()?;
    loss_total_with(batch, ZeroRows::Reject)
}

/// [`loss_total`] without the probability-vector and sign checks, for use
/// inside training where outputs come straight from softmax / ReLU layers.
pub fn loss_total_with(batch: &BatchFeatures, zero_rows: ZeroRows) -> Result<LossReport> {
    let w = batch.config.weights;
    w.validate()?;
    let norm = w.total();
    let n = batch.len();
    let d = batch.z_normal.first().map_or(0, Vec::len);
    let bc = loss_bc(batch)?;
    let inv = loss_if(batch)?;
    let cl = if w.cl > 0.0 {
        loss_cl_with(batch, zero_rows)?
    } else {
        FeatureLoss { value: 0.0, grad_z_normal: vec![vec![0.0; d]; n], grad_z_aug: vec![vec![0.0; d]; n] }
    };
    let mix_s = |a: &[[f64; 2]], b: &[[f64; 2]]| -> Vec<[f64; 2]> {
        a.iter()
            .zip(b)
            .map(|(x, y)| [(w.bc * x[0] + w.inv_focal * y[0]) / norm, (w.bc * x[1] + w.inv_focal * y[1]) / norm])
            .collect()
    };
    let scale_z = |g: Vec<Vec<f64>>| -> Vec<Vec<f64>> {
        g.into_iter().map(|r| r.into_iter().map(|v| w.cl * v / norm).collect()).collect()
    };
    let l_total = (w.bc * bc.value + w.cl * cl.value + w.inv_focal * inv.value) / norm;
    if !l_total.is_finite() {
        return Err(Error::TrainingAborted(format!(
            "non-finite loss (bc={}, cl={}, if={})",
            bc.value, cl.value, inv.value
        )));
    }
    Ok(LossReport {
        l_bc: bc.value,
        l_cl: cl.value,
        l_if: inv.value,
        l_total,
        grad_s_normal: mix_s(&bc.grad_s_normal, &inv.grad_s_normal),
        grad_s_aug: mix_s(&bc.grad_s_aug, &inv.grad_s_aug),
        grad_z_normal: scale_z(cl.grad_z_normal),
        grad_z_aug: scale_z(cl.grad_z_aug),
        clamped: bc.clamped || inv.clamped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn batch(z_normal: Vec<Vec<f64>>, z_aug: Vec<Vec<f64>>, s0: &[f64], s1: &[f64]) -> BatchFeatures {
        BatchFeatures {
            z_normal,
            z_aug,
            s_normal: s0.iter().map(|&p| [p, 1.0 - p]).collect(),
            s_aug: s1.iter().map(|&p| [1.0 - p, p]).collect(),
            config: LossConfig::default(),
        }
    }

    fn ones(n: usize) -> Vec<Vec<f64>> {
        vec![vec![1.0, 0.0]; n]
    }

    #[test]
    fn bc_examples() {
        let b = batch(ones(2), ones(2), &[1.0, 1.0], &[1.0, 1.0]);
        assert_eq!(loss_bc(&b).unwrap().value, 0.0);
        let b = batch(ones(1), ones(1), &[0.5], &[0.5]);
        assert!((loss_bc(&b).unwrap().value - 2.0 * 2f64.ln()).abs() < 1e-15);
        let b = batch(ones(2), ones(2), &[0.9, 0.8], &[0.7, 0.6]);
        let expected = -(0.9f64.ln() + 0.8f64.ln()) / 2.0 - (0.7f64.ln() + 0.6f64.ln()) / 2.0;
        assert!((expected - 0.598_002).abs() < 1e-6);
        assert!((loss_bc(&b).unwrap().value - expected).abs() < 1e-15);
    }

    #[test]
    fn bc_clamps_zero_probability() {
        let b = batch(ones(1), ones(1), &[0.0], &[0.5]);
        let r = loss_bc(&b).unwrap();
        assert!(r.clamped);
        assert!(r.value.is_finite());
    }

    #[test]
    fn if_examples() {
        let b = batch(ones(1), ones(1), &[1.0], &[1.0]);
        assert_eq!(loss_if(&b).unwrap().value, 0.0);
        let b = batch(ones(1), ones(1), &[0.5], &[0.5]);
        let expected = 2.0 * 0.5f64.exp() * 2f64.ln();
        assert!((expected - 2.285_613).abs() < 1e-6);
        assert!((loss_if(&b).unwrap().value - expected).abs() < 1e-14);
    }

    #[test]
    fn cl_examples() {
        let b = batch(ones(1), vec![vec![0.0, 1.0]], &[0.5], &[0.5]);
        assert_eq!(loss_cl(&b).unwrap().value, 0.0);

        // identical normals, identical augmentations orthogonal to them, τ = 0.5
        let b = batch(ones(2), vec![vec![0.0, 1.0]; 2], &[0.5; 2], &[0.5; 2]);
        let ell = -((2.0f64).exp() / ((2.0f64).exp() + 2.0)).ln();
        // (1/N) Σ_i (1/2N) Σ_{j≠i} (ℓ + ℓ̃) with N = 2 and ℓ̃ = ℓ gives ℓ / 2
        let expected = 0.5 * 0.25 * (2.0 * (ell + ell));
        assert!((ell - 0.239_5).abs() < 1e-4);
        assert!((loss_cl(&b).unwrap().value - expected).abs() < 1e-14);
    }

    #[test]
    fn cl_rejects_zero_rows_unless_ignored() {
        let b = batch(vec![vec![0.0, 0.0], vec![1.0, 0.0]], ones(2), &[0.5; 2], &[0.5; 2]);
        assert!(matches!(loss_cl(&b), Err(Error::Normalization(_))));
        let r = loss_cl_with(&b, ZeroRows::Ignore).unwrap();
        assert!(r.value.is_finite());
        assert_eq!(r.grad_z_normal[0], vec![0.0, 0.0]);
    }

    #[test]
    fn total_examples() {
        let mut b = batch(vec![vec![1.0, 0.2], vec![0.3, 1.0]], vec![vec![0.5, 0.5], vec![0.1, 0.9]], &[0.9, 0.6], &[0.7, 0.2]);
        let bc = loss_bc(&b).unwrap().value;
        let cl = loss_cl(&b).unwrap().value;
        let inv = loss_if(&b).unwrap().value;
        let r = loss_total(&b).unwrap();
        assert!((r.l_total - (bc + cl + 1.5 * inv) / 3.5).abs() < 1e-12);

        b.config.weights = LossWeights::new(1.0, 0.0, 0.0);
        assert!((loss_total(&b).unwrap().l_total - bc).abs() < 1e-15);

        b.config.weights = LossWeights::new(0.0, 0.0, 0.0);
        assert!(matches!(loss_total(&b), Err(Error::Config(_))));
    }

    #[test]
    fn total_rejects_invalid_rows() {
        let mut b = batch(ones(2), ones(2), &[0.5; 2], &[0.5; 2]);
        b.s_normal[0] = [0.7, 0.7];
        assert!(matches!(loss_total(&b), Err(Error::Data(_))));
        let mut b = batch(ones(2), ones(2), &[0.5; 2], &[0.5; 2]);
        b.z_aug[1][0] = -0.1;
        assert!(matches!(loss_total(&b), Err(Error::Data(_))));
    }

    fn random_batch(seed: u64, n: usize, d: usize) -> BatchFeatures {
        let mut rng = crate::rng::rng_from(seed);
        let mut z = |_| (0..d).map(|_| rng.gen_range(0.05..1.0)).collect::<Vec<f64>>();
        let zn: Vec<Vec<f64>> = (0..n).map(&mut z).collect();
        let za: Vec<Vec<f64>> = (0..n).map(&mut z).collect();
        let mut rng = crate::rng::rng_from(seed ^ 1);
        let s0: Vec<f64> = (0..n).map(|_| rng.gen_range(0.02..0.98)).collect();
        let s1: Vec<f64> = (0..n).map(|_| rng.gen_range(0.02..0.98)).collect();
        batch(zn, za, &s0, &s1)
    }

    proptest! {
        #[test]
        fn cl_is_scale_and_permutation_invariant(seed in 0u64..10_000, n in 2usize..7, d in 1usize..9, k in 0.1..10.0f64) {
            let b = random_batch(seed, n, d);
            let base = loss_cl(&b).unwrap().value;
            let mut scaled = b.clone();
            for (i, row) in scaled.z_normal.iter_mut().chain(scaled.z_aug.iter_mut()).enumerate() {
                let f = if i % 2 == 0 { k } else { 3.0 };
                row.iter_mut().for_each(|v| *v *= f);
            }
            prop_assert!((loss_cl(&scaled).unwrap().value - base).abs() < 1e-9);
            let mut perm = b.clone();
            perm.z_normal.rotate_left(1);
            perm.z_aug.rotate_left(1);
            prop_assert!((loss_cl(&perm).unwrap().value - base).abs() < 1e-9);
        }

        #[test]
        fn losses_are_ordered_and_non_negative(seed in 0u64..10_000, n in 1usize..9, gamma in 0.01..3.0f64) {
            let mut b = random_batch(seed, n, 4);
            b.config.gamma = gamma;
            let bc = loss_bc(&b).unwrap().value;
            let inv = loss_if(&b).unwrap().value;
            let cl = loss_cl(&b).unwrap().value;
            prop_assert!(bc >= 0.0 && inv >= 0.0 && cl >= 0.0);
            prop_assert!(inv >= bc);
            b.config.gamma = 0.0;
            prop_assert_eq!(loss_if(&b).unwrap().value, loss_bc(&b).unwrap().value);
        }

        #[test]
        fn equal_components_give_that_value(v in 0.0..5.0f64, a in 0.01..5.0f64, b in 0.01..5.0f64, c in 0.01..5.0f64) {
            let w = LossWeights::new(a, b, c);
            let total = (w.bc * v + w.cl * v + w.inv_focal * v) / w.total();
            prop_assert!((total - v).abs() < 1e-12);
        }
    }
}
