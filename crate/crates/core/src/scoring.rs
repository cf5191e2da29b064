//! Anomaly scores, AUC, GradCAM localization and score histograms.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::tensor::Scalar;
use crate::model::{Image, Network};
use crate::raster::FusedTile;
use crate::tilemath::TileKey;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreMethod {
    #[serde(rename = "clf")]
    Classifier,
    Cosine,
    Euclid,
    #[serde(rename = "maha")]
    Mahalanobis,
    Gauss,
}

impl ScoreMethod {
    pub const ALL: [ScoreMethod; 5] =
        [Self::Classifier, Self::Cosine, Self::Euclid, Self::Mahalanobis, Self::Gauss];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Classifier => "clf",
            Self::Cosine => "cosine",
            Self::Euclid => "euclid",
            Self::Mahalanobis => "maha",
            Self::Gauss => "gauss",
        }
    }
}

impl fmt::Display for ScoreMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScoreMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "clf" | "classifier" => Ok(Self::Classifier),
            "cosine" => Ok(Self::Cosine),
            "euclid" | "euclidean" => Ok(Self::Euclid),
            "maha" | "mahalanobis" => Ok(Self::Mahalanobis),
            "gauss" | "gauss_density" => Ok(Self::Gauss),
            other => Err(Error::Config(format!("unknown score method {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Truth {
    Normal,
    Anomalous,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredTile {
    pub tile: TileKey,
    pub score: f64,
    pub method: ScoreMethod,
    pub truth: Option<Truth>,
}

/// `s¹` from the score head.
pub fn classifier_score(net: &Network<f32>, tile: &FusedTile) -> Result<f64> {
    let out = net.forward(&Image::from_tile(tile))?;
    Ok(f64::from(out.s[1]))
}

/// Contrastive features `z` for each tile, computed in parallel.
pub fn features(net: &Network<f32>, tiles: &[FusedTile]) -> Result<Vec<Vec<f64>>> {
    tiles
        .par_iter()
        .map(|t| Ok(net.forward(&Image::from_tile(t))?.z.iter().map(|v| f64::from(*v)).collect()))
        .collect()
}

/// Centroid and regularized covariance of normal-tile features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prototype {
    pub mean: Vec<f64>,
    /// Row-major `d × d`, regularization included.
    pub covariance: Vec<f64>,
    pub epsilon: f64,
    pub count: usize,
}

/// Fits a prototype; the covariance is the unbiased sample covariance plus
/// `εI` with `ε = 1e-6 · trace / d` (or `1e-6` for a zero trace).
pub fn fit_prototype(rows: &[Vec<f64>]) -> Result<Prototype> {
    if rows.len() < 2 {
        return Err(Error::InsufficientData(format!("{} feature rows; need at least 2", rows.len())));
    }
    let d = rows[0].len();
    if d == 0 || rows.iter().any(|r| r.len() != d) {
        return Err(Error::Data("feature rows are empty or ragged".into()));
    }
    let n = rows.len() as f64;
    let mut mean = vec![0.0; d];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v / n;
        }
    }
    let mut cov = vec![0.0; d * d];
    for r in rows {
        for i in 0..d {
            let di = r[i] - mean[i];
            for j in i..d {
                cov[i * d + j] += di * (r[j] - mean[j]);
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            let v = cov[i * d + j] / (n - 1.0);
            cov[i * d + j] = v;
            cov[j * d + i] = v;
        }
    }
    let trace: f64 = (0..d).map(|i| cov[i * d + i]).sum();
    let epsilon = if trace > 0.0 { 1e-6 * trace / d as f64 } else { 1e-6 };
    for i in 0..d {
        cov[i * d + i] += epsilon;
    }
    Ok(Prototype { mean, covariance: cov, epsilon, count: rows.len() })
}

impl Prototype {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    fn cholesky(&self) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
        let d = self.dim();
        DMatrix::from_row_slice(d, d, &self.covariance)
            .cholesky()
            .ok_or_else(|| Error::Data("prototype covariance is not positive definite".into()))
    }
}

/// Precomputed factorization for scoring many rows against one prototype.
pub struct PrototypeScorer<'a> {
    proto: &'a Prototype,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    log_det: f64,
}

impl<'a> PrototypeScorer<'a> {
    pub fn new(proto: &'a Prototype) -> Result<Self> {
        let chol = proto.cholesky()?;
        let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        Ok(Self { proto, chol, log_det })
    }

    pub fn score(&self, z: &[f64], method: ScoreMethod) -> Result<f64> {
        let proto = self.proto;
        if z.len() != proto.dim() {
            return Err(Error::Data(format!("feature of length {}, prototype has {}", z.len(), proto.dim())));
        }
        let diff: Vec<f64> = z.iter().zip(&proto.mean).map(|(a, b)| a - b).collect();
        match method {
            ScoreMethod::Cosine => {
                let nz = z.iter().map(|v| v * v).sum::<f64>().sqrt();
                let nm = proto.mean.iter().map(|v| v * v).sum::<f64>().sqrt();
                if nz == 0.0 || nm == 0.0 {
                    return Err(Error::Normalization("cosine score of a zero vector".into()));
                }
                let cos = z.iter().zip(&proto.mean).map(|(a, b)| a * b).sum::<f64>() / (nz * nm);
                Ok((1.0 - cos.clamp(-1.0, 1.0)) / 2.0)
            }
            ScoreMethod::Euclid => Ok(diff.iter().map(|v| v * v).sum::<f64>().sqrt()),
            ScoreMethod::Mahalanobis => Ok(self.maha_sq(&diff).sqrt()),
            ScoreMethod::Gauss => {
                let d = proto.dim() as f64;
                Ok(0.5 * (d * (2.0 * std::f64::consts::PI).ln() + self.log_det + self.maha_sq(&diff)))
            }
            ScoreMethod::Classifier => {
                Err(Error::Config("the classifier score comes from the score head, not a prototype".into()))
            }
        }
    }

    fn maha_sq(&self, diff: &[f64]) -> f64 {
        let x = self.chol.solve(&DVector::from_column_slice(diff));
        diff.iter().zip(x.iter()).map(|(a, b)| a * b).sum()
    }
}

/// Out-of-distribution score of `z` against a prototype; larger means more
/// anomalous. Cosine is `(1 − cos)/2`, which lies in `[0, 0.5]` for
/// non-negative features.
pub fn ood_score(z: &[f64], proto: &Prototype, method: ScoreMethod) -> Result<f64> {
    PrototypeScorer::new(proto)?.score(z, method)
}

/// Probability that a random anomalous score exceeds a random normal one,
/// ties counted half. Exact: pair counts are integers until the final
/// division.
pub fn auc(normal: &[f64], anomalous: &[f64]) -> Result<f64> {
    if normal.is_empty() || anomalous.is_empty() {
        return Err(Error::Evaluation(format!(
            "AUC needs both classes ({} normal, {} anomalous)",
            normal.len(),
            anomalous.len()
        )));
    }
    if normal.iter().chain(anomalous).any(|v| v.is_nan()) {
        return Err(Error::Evaluation("NaN score".into()));
    }
    let mut sorted = normal.to_vec();
    sorted.sort_by(f64::total_cmp);
    // twice the Mann-Whitney U: 2 per win, 1 per tie
    let mut u2: u128 = 0;
    for &a in anomalous {
        let below = sorted.partition_point(|v| *v < a);
        let not_above = sorted.partition_point(|v| *v <= a);
        u2 += 2 * below as u128 + (not_above - below) as u128;
    }
    Ok(u2 as f64 / (2 * normal.len() as u128 * anomalous.len() as u128) as f64)
}

/// [`auc`] over labeled tiles.
pub fn auc_scored(tiles: &[ScoredTile]) -> Result<f64> {
    let mut normal = Vec::new();
    let mut anomalous = Vec::new();
    for t in tiles {
        match t.truth {
            Some(Truth::Normal) => normal.push(t.score),
            Some(Truth::Anomalous) => anomalous.push(t.score),
            None => return Err(Error::Evaluation(format!("tile {} has no truth label", t.tile))),
        }
    }
    auc(&normal, &anomalous)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Saliency {
    pub size: usize,
    /// Row-major, values in `[0, 1]`.
    pub map: Vec<f32>,
    /// Every GradCAM value was rectified away; the map is all zero.
    pub empty: bool,
}

impl Saliency {
    /// Saliency-weighted mean position as `(row, col)` pixel coordinates
    /// of pixel centers.
    pub fn mass_centroid(&self) -> Option<(f64, f64)> {
        let mut total = 0.0;
        let (mut r, mut c) = (0.0, 0.0);
        for (i, v) in self.map.iter().enumerate() {
            let v = f64::from(*v);
            total += v;
            r += v * ((i / self.size) as f64 + 0.5);
            c += v * ((i % self.size) as f64 + 0.5);
        }
        (total > 0.0).then(|| (r / total, c / total))
    }
}

/// GradCAM for the anomalous class: channel weights are the spatial mean of
/// `∂s¹/∂A` over the last conv stage `A`; the rectified weighted sum is
/// bilinearly upsampled to the tile size and max-normalized.
pub fn localize<T: Scalar>(net: &Network<T>, image: &Image<T>) -> Result<Saliency> {
    let cache = net.forward_cached(image)?;
    let weights = net.gradcam_weights(&cache);
    let (act, h, w) = cache.last_conv();
    let p = h * w;
    let cam: Vec<f64> = (0..p)
        .map(|i| weights.iter().enumerate().map(|(f, wf)| wf.f64() * act[f * p + i].f64()).sum::<f64>().max(0.0))
        .collect();
    let size = image.height;
    let mut map = vec![0.0f64; size * image.width];
    for r in 0..size {
        let sy = ((r as f64 + 0.5) * h as f64 / size as f64 - 0.5).clamp(0.0, (h - 1) as f64);
        let (y0, fy) = (sy.floor() as usize, sy - sy.floor());
        let y1 = (y0 + 1).min(h - 1);
        for c in 0..image.width {
            let sx = ((c as f64 + 0.5) * w as f64 / image.width as f64 - 0.5).clamp(0.0, (w - 1) as f64);
            let (x0, fx) = (sx.floor() as usize, sx - sx.floor());
            let x1 = (x0 + 1).min(w - 1);
            let top = cam[y0 * w + x0] * (1.0 - fx) + cam[y0 * w + x1] * fx;
            let bottom = cam[y1 * w + x0] * (1.0 - fx) + cam[y1 * w + x1] * fx;
            map[r * image.width + c] = top * (1.0 - fy) + bottom * fy;
        }
    }
    let max = map.iter().copied().fold(0.0f64, f64::max);
    let empty = max <= 0.0;
    let map = map.into_iter().map(|v| if empty { 0.0 } else { (v / max) as f32 }).collect();
    Ok(Saliency { size, map, empty })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bins: Vec<HistogramBin>,
    pub total: usize,
    pub threshold: f64,
    /// Fraction of scores strictly below `threshold`.
    pub below_threshold: f64,
}

/// Fixed-width bins over `[0, 1]`; scores outside are clamped into the end
/// bins, and 1.0 falls in the last bin.
pub fn health_histogram(scores: &[f64], bins: usize, threshold: f64) -> Result<Histogram> {
    if bins < 1 {
        return Err(Error::Config("histogram needs at least one bin".into()));
    }
    if scores.is_empty() {
        return Err(Error::InsufficientData("no scores".into()));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Data("non-finite score".into()));
    }
    let mut counts = vec![0usize; bins];
    for &s in scores {
        let b = ((s * bins as f64).floor().max(0.0) as usize).min(bins - 1);
        counts[b] += 1;
    }
    let n = scores.len();
    let bins = counts
        .into_iter()
        .enumerate()
        .map(|(i, count)| HistogramBin {
            lo: i as f64 / bins as f64,
            hi: (i + 1) as f64 / bins as f64,
            count,
            fraction: count as f64 / n as f64,
        })
        .collect();
    let below = scores.iter().filter(|s| **s < threshold).count();
    Ok(Histogram { bins, total: n, threshold, below_threshold: below as f64 / n as f64 })
}
