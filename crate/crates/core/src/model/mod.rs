//! Desk-scale network: a plain conv backbone `f`, a projection head `g`
//! producing non-negative contrastive features, and a score head `k`
//! producing a two-way softmax.
//!
//! Everything is generic over the scalar type so gradients can be checked in
//! f64 while training runs in f32.

mod checkpoint;
mod optim;
pub mod tensor;
mod train;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objective::{loss_total_with, BatchFeatures, LossConfig, LossReport, ZeroRows};
use crate::raster::FusedTile;
use crate::rng::{fnv1a, rng_from};
pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_VERSION};
pub use optim::{AdamW, Schedule};
use tensor::{col2im, conv_out, im2col, Scalar};
pub use train::{train, train_step, ModelState, PairSource, StepRecord, TrainConfig, TrainSummary};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvStage {
    pub filters: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl ConvStage {
    pub const fn new(filters: usize, kernel: usize, stride: usize) -> Self {
        Self { filters, kernel, stride }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub input_channels: usize,
    pub conv_stages: Vec<ConvStage>,
    pub h_dim: usize,
    pub z_dim: usize,
    pub g_hidden: [usize; 2],
    pub k_hidden: [usize; 2],
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            input_channels: 7,
            conv_stages: vec![
                ConvStage::new(16, 3, 2),
                ConvStage::new(32, 3, 2),
                ConvStage::new(64, 3, 2),
                ConvStage::new(128, 3, 2),
            ],
            h_dim: 128,
            z_dim: 32,
            g_hidden: [128, 64],
            k_hidden: [32, 16],
            seed: 0,
        }
    }
}

/// Number of fully connected layers after global pooling: one in `f`,
/// three in `g`, three in `k`.
const FC_LAYERS: usize = 7;
const H_LAYER: usize = 0;
const Z_LAYER: usize = 3;

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1..=7).contains(&self.input_channels) {
            return Err(Error::Config(format!("input_channels {} outside 1..=7", self.input_channels)));
        }
        if self.conv_stages.is_empty() {
            return Err(Error::Config("at least one conv stage is required".into()));
        }
        for s in &self.conv_stages {
            if s.filters == 0 || s.kernel == 0 || s.kernel % 2 == 0 || s.stride == 0 {
                return Err(Error::Config(format!("invalid conv stage {s:?}: need filters>0, odd kernel, stride>0")));
            }
        }
        let dims = [self.h_dim, self.z_dim, self.g_hidden[0], self.g_hidden[1], self.k_hidden[0], self.k_hidden[1]];
        if dims.contains(&0) {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        Ok(())
    }

    /// Hash of the canonical JSON form; checkpoints carry it.
    pub fn hash(&self) -> u64 {
        fnv1a(&serde_json::to_vec(self).expect("config serializes"))
    }

    fn fc_dims(&self) -> [(usize, usize); FC_LAYERS] {
        let last = self.conv_stages.last().map_or(0, |s| s.filters);
        [
            (last, self.h_dim),
            (self.h_dim, self.g_hidden[0]),
            (self.g_hidden[0], self.g_hidden[1]),
            (self.g_hidden[1], self.z_dim),
            (self.z_dim, self.k_hidden[0]),
            (self.k_hidden[0], self.k_hidden[1]),
            (self.k_hidden[1], 2),
        ]
    }

    /// Parameter tensor lengths in storage order: for each conv stage then
    /// each dense layer, the weight followed by the bias.
    pub fn param_shapes(&self) -> Vec<usize> {
        let mut shapes = Vec::new();
        let mut c = self.input_channels;
        for s in &self.conv_stages {
            shapes.push(s.filters * c * s.kernel * s.kernel);
            shapes.push(s.filters);
            c = s.filters;
        }
        for (i, o) in self.fc_dims() {
            shapes.push(o * i);
            shapes.push(o);
        }
        shapes
    }

    fn fan_ins(&self) -> Vec<usize> {
        let mut fans = Vec::new();
        let mut c = self.input_channels;
        for s in &self.conv_stages {
            fans.push(c * s.kernel * s.kernel);
            c = s.filters;
        }
        fans.extend(self.fc_dims().iter().map(|d| d.0));
        fans
    }
}

/// A `[channels, height, width]` input tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Image<T> {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> Image<T> {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::Data(format!(
                "image data has {} values, expected {channels}×{height}×{width}",
                data.len()
            )));
        }
        Ok(Self { channels, height, width, data })
    }

    pub fn from_tile(tile: &FusedTile) -> Self {
        let data = tile.to_chw().into_iter().map(|v| T::of(f64::from(v))).collect();
        Self { channels: tile.channels.len(), height: tile.size, width: tile.size, data }
    }

    pub fn cast<U: Scalar>(&self) -> Image<U> {
        Image {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|v| U::of(v.f64())).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Output<T> {
    pub h: Vec<T>,
    pub z: Vec<T>,
    pub s: [T; 2],
}

/// Activations retained for the backward pass of one example.
#[derive(Clone, Debug)]
pub struct Cache<T> {
    /// Input dims of each conv stage, then the output dims of the last one.
    conv_in: Vec<(usize, usize, usize)>,
    conv_cols: Vec<Vec<T>>,
    conv_act: Vec<Vec<T>>,
    fc_in: Vec<Vec<T>>,
    fc_out: Vec<Vec<T>>,
    s: [T; 2],
}

impl<T: Scalar> Cache<T> {
    pub fn output(&self) -> Output<T> {
        Output { h: self.fc_out[H_LAYER].clone(), z: self.fc_out[Z_LAYER].clone(), s: self.s }
    }

    /// Post-rectifier activations of the last conv stage, `[filters, h, w]`.
    pub fn last_conv(&self) -> (&[T], usize, usize) {
        let n = self.conv_act.len();
        let (_, h, w) = self.conv_in[n];
        (&self.conv_act[n - 1], h, w)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network<T> {
    pub config: ModelConfig,
    pub params: Vec<Vec<T>>,
}

fn relu<T: Scalar>(v: &mut [T]) {
    for x in v {
        if *x < T::zero() {
            *x = T::zero();
        }
    }
}

fn softmax2<T: Scalar>(l: &[T]) -> [T; 2] {
    let m = l[0].max(l[1]);
    let a = (l[0] - m).exp();
    let b = (l[1] - m).exp();
    [a / (a + b), b / (a + b)]
}

impl<T: Scalar> Network<T> {
    /// He-uniform weights (variance 2/fan_in), zero biases, seeded.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = rng_from(config.seed);
        let shapes = config.param_shapes();
        let fans = config.fan_ins();
        let params = shapes
            .iter()
            .enumerate()
            .map(|(i, &len)| {
                if i % 2 == 1 {
                    return vec![T::zero(); len];
                }
                let bound = (6.0 / fans[i / 2] as f64).sqrt();
                (0..len).map(|_| T::of(rng.gen_range(-bound..bound))).collect()
            })
            .collect();
        Ok(Self { config, params })
    }

    pub fn from_params(config: ModelConfig, params: Vec<Vec<T>>) -> Result<Self> {
        config.validate()?;
        let shapes = config.param_shapes();
        if params.len() != shapes.len() || params.iter().zip(&shapes).any(|(p, &n)| p.len() != n) {
            return Err(Error::Config("parameter shapes do not match the model config".into()));
        }
        Ok(Self { config, params })
    }

    pub fn cast<U: Scalar>(&self) -> Network<U> {
        Network {
            config: self.config.clone(),
            params: self.params.iter().map(|p| p.iter().map(|v| U::of(v.f64())).collect()).collect(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Vec::len).sum()
    }

    pub fn zero_grads(&self) -> Vec<Vec<T>> {
        self.params.iter().map(|p| vec![T::zero(); p.len()]).collect()
    }

    fn fc_index(&self, layer: usize) -> usize {
        2 * self.config.conv_stages.len() + 2 * layer
    }

    pub fn forward_cached(&self, x: &Image<T>) -> Result<Cache<T>> {
        if x.channels != self.config.input_channels {
            return Err(Error::Config(format!(
                "model expects {} channels, input has {}",
                self.config.input_channels, x.channels
            )));
        }
        let mut act = x.data.clone();
        let (mut c, mut h, mut w) = (x.channels, x.height, x.width);
        let stages = self.config.conv_stages.len();
        let mut conv_in = Vec::with_capacity(stages);
        let mut conv_cols = Vec::with_capacity(stages);
        let mut conv_act = Vec::with_capacity(stages);
        for (i, s) in self.config.conv_stages.iter().enumerate() {
            let cols = im2col(&act, c, h, w, s.kernel, s.stride);
            let (ho, wo) = (conv_out(h, s.kernel, s.stride), conv_out(w, s.kernel, s.stride));
            let p = ho * wo;
            let q = c * s.kernel * s.kernel;
            let weight = &self.params[2 * i];
            let bias = &self.params[2 * i + 1];
            let mut y = vec![T::zero(); s.filters * p];
            for (o, row) in y.chunks_mut(p).enumerate() {
                row.fill(bias[o]);
            }
            T::gemm(s.filters, q, p, T::one(), weight, q as isize, 1, &cols, p as isize, 1, T::one(), &mut y, p as isize, 1);
            relu(&mut y);
            conv_in.push((c, h, w));
            conv_cols.push(cols);
            conv_act.push(y.clone());
            act = y;
            c = s.filters;
            h = ho;
            w = wo;
        }
        let p = (h * w) as f64;
        let gap: Vec<T> = act.chunks(h * w).map(|ch| T::of(ch.iter().map(|v| v.f64()).sum::<f64>() / p)).collect();

        let mut fc_in = Vec::with_capacity(FC_LAYERS);
        let mut fc_out = Vec::with_capacity(FC_LAYERS);
        let mut v = gap;
        for (l, (ni, no)) in self.config.fc_dims().into_iter().enumerate() {
            let k = self.fc_index(l);
            let weight = &self.params[k];
            let bias = &self.params[k + 1];
            let mut out: Vec<T> = (0..no)
                .map(|o| bias[o] + weight[o * ni..(o + 1) * ni].iter().zip(&v).map(|(a, b)| *a * *b).sum::<T>())
                .collect();
            if l + 1 < FC_LAYERS {
                relu(&mut out);
            }
            fc_in.push(v);
            fc_out.push(out.clone());
            v = out;
        }
        let s = softmax2(&v);
        conv_in.push((c, h, w));
        Ok(Cache { conv_in, conv_cols, conv_act, fc_in, fc_out, s })
    }

    pub fn forward(&self, x: &Image<T>) -> Result<Output<T>> {
        Ok(self.forward_cached(x)?.output())
    }

    pub fn forward_batch(&self, xs: &[Image<T>]) -> Result<Vec<Output<T>>> {
        xs.par_iter().map(|x| self.forward(x)).collect()
    }

    /// Backpropagates `ds` (gradient w.r.t. the softmax output) and `dz`
    /// (extra gradient w.r.t. the contrastive features) through the dense
    /// layers. Accumulates into `grads` when given. Returns the gradient
    /// w.r.t. the pooled backbone features.
    fn backward_dense(&self, cache: &Cache<T>, ds: [T; 2], dz: Option<&[T]>, mut grads: Option<&mut [Vec<T>]>) -> Vec<T> {
        let s = cache.s;
        let dot = s[0] * ds[0] + s[1] * ds[1];
        let mut g = vec![s[0] * (ds[0] - dot), s[1] * (ds[1] - dot)];
        for (l, (ni, no)) in self.config.fc_dims().into_iter().enumerate().rev() {
            if l + 1 < FC_LAYERS {
                for (gi, out) in g.iter_mut().zip(&cache.fc_out[l]) {
                    if *out <= T::zero() {
                        *gi = T::zero();
                    }
                }
            }
            let k = self.fc_index(l);
            let input = &cache.fc_in[l];
            if let Some(grads) = grads.as_deref_mut() {
                let (gw, gb) = grads[k..k + 2].split_at_mut(1);
                for o in 0..no {
                    if g[o] == T::zero() {
                        continue;
                    }
                    for (w, x) in gw[0][o * ni..(o + 1) * ni].iter_mut().zip(input) {
                        *w += g[o] * *x;
                    }
                    gb[0][o] += g[o];
                }
            }
            let weight = &self.params[k];
            let mut gin = vec![T::zero(); ni];
            for o in 0..no {
                if g[o] == T::zero() {
                    continue;
                }
                for (gi, w) in gin.iter_mut().zip(&weight[o * ni..(o + 1) * ni]) {
                    *gi += g[o] * *w;
                }
            }
            if l == Z_LAYER + 1 {
                if let Some(dz) = dz {
                    for (gi, d) in gin.iter_mut().zip(dz) {
                        *gi += *d;
                    }
                }
            }
            g = gin;
        }
        g
    }

    /// Full backward pass for one example, accumulating into `grads`.
    pub fn backward(&self, cache: &Cache<T>, ds: [T; 2], dz: Option<&[T]>, grads: &mut [Vec<T>]) {
        let dgap = self.backward_dense(cache, ds, dz, Some(grads));
        let stages = self.config.conv_stages.len();
        let (filters, ho, wo) = cache.conv_in[stages];
        let p = ho * wo;
        let inv = T::of(1.0 / p as f64);
        let mut dact: Vec<T> = (0..filters * p).map(|i| dgap[i / p] * inv).collect();
        for (i, s) in self.config.conv_stages.iter().enumerate().rev() {
            let (c, h, w) = cache.conv_in[i];
            let (oh, ow) = (conv_out(h, s.kernel, s.stride), conv_out(w, s.kernel, s.stride));
            let p = oh * ow;
            let q = c * s.kernel * s.kernel;
            for (d, a) in dact.iter_mut().zip(&cache.conv_act[i]) {
                if *a <= T::zero() {
                    *d = T::zero();
                }
            }
            let cols = &cache.conv_cols[i];
            {
                let (gw, gb) = grads[2 * i..2 * i + 2].split_at_mut(1);
                T::gemm(s.filters, p, q, T::one(), &dact, p as isize, 1, cols, 1, p as isize, T::one(), &mut gw[0], q as isize, 1);
                for (o, row) in dact.chunks(p).enumerate() {
                    gb[0][o] += row.iter().copied().sum::<T>();
                }
            }
            if i > 0 {
                let mut dcols = vec![T::zero(); q * p];
                let weight = &self.params[2 * i];
                T::gemm(q, s.filters, p, T::one(), weight, 1, q as isize, &dact, p as isize, 1, T::zero(), &mut dcols, p as isize, 1);
                dact = col2im(&dcols, c, h, w, s.kernel, s.stride);
            }
        }
    }

    /// GradCAM channel weights: gradient of `s¹` w.r.t. the last conv
    /// stage's activations, averaged over space.
    pub fn gradcam_weights(&self, cache: &Cache<T>) -> Vec<T> {
        let dgap = self.backward_dense(cache, [T::zero(), T::one()], None, None);
        let stages = self.config.conv_stages.len();
        let (_, ho, wo) = cache.conv_in[stages];
        let inv = T::of(1.0 / (ho * wo) as f64);
        dgap.into_iter().map(|g| g * inv).collect()
    }

    /// Total loss over `N` normal/augmented pairs and its gradient w.r.t.
    /// every parameter. Per-example work runs in parallel; the gradient sum
    /// is reduced in example order so results do not depend on threading.
    pub fn loss_and_grad(
        &self,
        normals: &[Image<T>],
        augmented: &[Image<T>],
        loss: &LossConfig,
        zero_rows: ZeroRows,
    ) -> Result<(LossReport, Vec<Vec<T>>)> {
        if normals.len() != augmented.len() || normals.is_empty() {
            return Err(Error::Data(format!(
                "need matching non-empty halves, got {} normal and {} augmented",
                normals.len(),
                augmented.len()
            )));
        }
        let n = normals.len();
        let caches: Vec<Cache<T>> =
            normals.par_iter().chain(augmented.par_iter()).map(|x| self.forward_cached(x)).collect::<Result<_>>()?;
        let to64 = |v: &[T]| v.iter().map(|x| x.f64()).collect::<Vec<f64>>();
        let batch = BatchFeatures {
            z_normal: caches[..n].iter().map(|c| to64(&c.fc_out[Z_LAYER])).collect(),
            z_aug: caches[n..].iter().map(|c| to64(&c.fc_out[Z_LAYER])).collect(),
            s_normal: caches[..n].iter().map(|c| [c.s[0].f64(), c.s[1].f64()]).collect(),
            s_aug: caches[n..].iter().map(|c| [c.s[0].f64(), c.s[1].f64()]).collect(),
            config: *loss,
        };
        let report = loss_total_with(&batch, zero_rows)?;
        let per_example: Vec<Vec<Vec<T>>> = caches
            .par_iter()
            .enumerate()
            .map(|(i, cache)| {
                let (ds, dz) = if i < n {
                    (report.grad_s_normal[i], &report.grad_z_normal[i])
                } else {
                    (report.grad_s_aug[i - n], &report.grad_z_aug[i - n])
                };
                let dz: Vec<T> = dz.iter().map(|v| T::of(*v)).collect();
                let mut grads = self.zero_grads();
                self.backward(cache, [T::of(ds[0]), T::of(ds[1])], Some(&dz), &mut grads);
                grads
            })
            .collect();
        let mut total = self.zero_grads();
        for g in per_example {
            for (t, p) in total.iter_mut().zip(g) {
                for (a, b) in t.iter_mut().zip(p) {
                    *a += b;
                }
            }
        }
        Ok((report, total))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn micro_config() -> ModelConfig {
        ModelConfig {
            input_channels: 2,
            conv_stages: vec![ConvStage::new(3, 3, 2), ConvStage::new(4, 3, 1)],
            h_dim: 6,
            z_dim: 5,
            g_hidden: [6, 5],
            k_hidden: [4, 3],
            seed: 7,
        }
    }

    fn random_image(seed: u64, c: usize, size: usize) -> Image<f64> {
        let mut rng = rng_from(seed);
        Image::new(c, size, size, (0..c * size * size).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn zero_final_layer_gives_even_split() {
        let mut net = Network::<f64>::new(micro_config()).unwrap();
        let last = net.params.len() - 2;
        net.params[last].fill(0.0);
        net.params[last + 1].fill(0.0);
        for seed in 0..5 {
            let out = net.forward(&random_image(seed, 2, 8)).unwrap();
            assert_eq!(out.s, [0.5, 0.5]);
        }
    }

    #[test]
    fn outputs_are_deterministic_and_well_formed() {
        let net = Network::<f32>::new(ModelConfig { input_channels: 2, ..micro_config() }).unwrap();
        for seed in 0..200 {
            let x = random_image(seed, 2, 12).cast::<f32>();
            let a = net.forward(&x).unwrap();
            assert_eq!(a, net.forward(&x).unwrap());
            assert!(a.z.iter().all(|v| *v >= 0.0));
            assert!((a.s[0] + a.s[1] - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn channel_mismatch_is_config_error() {
        let net = Network::<f64>::new(micro_config()).unwrap();
        assert!(matches!(net.forward(&random_image(0, 3, 8)), Err(Error::Config(_))));
    }

    #[test]
    fn invalid_configs() {
        let mut c = micro_config();
        c.input_channels = 8;
        assert!(c.validate().is_err());
        let mut c = micro_config();
        c.conv_stages[0].kernel = 2;
        assert!(c.validate().is_err());
        let mut c = micro_config();
        c.conv_stages.clear();
        assert!(c.validate().is_err());
    }

    #[test]
    fn hash_tracks_config() {
        let a = micro_config();
        let mut b = micro_config();
        assert_eq!(a.hash(), b.hash());
        b.z_dim += 1;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn batch_and_single_forward_agree() {
        let net = Network::<f64>::new(micro_config()).unwrap();
        let xs: Vec<_> = (0..4).map(|s| random_image(s, 2, 8)).collect();
        let batch = net.forward_batch(&xs).unwrap();
        for (x, b) in xs.iter().zip(&batch) {
            assert_eq!(&net.forward(x).unwrap(), b);
        }
    }
}
