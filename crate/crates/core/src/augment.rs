//! Anomaly synthesis on the casement-polygon channel.
//!
//! [`rand_poly_augment`] perturbs a random subset of a tile's polygons with a
//! random, shuffled sequence of rotate / translate / scale / delete actions.
//! [`augment_with_posedness`] wraps it in acceptance-rejection so only
//! augmentations that change enough of the raster are kept. The raster
//! baselines (quarter-turn rotation, CutOut, RandomErase, CutPaste) share the
//! same posedness wrapper.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{apply_affine, clip_to_tile, AffineAction, Polygon};
use crate::raster::{rasterize_polygons, Channel, ChannelName};
use crate::rng::{derive_seed, rng_from, symmetric_band, union_of_intervals};
use crate::tilemath::{PixelGrid, TileKey};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    Rotate,
    Translate,
    Scale,
    Delete,
}

impl ActionKind {
    pub const ALL: [ActionKind; 4] = [ActionKind::Rotate, ActionKind::Translate, ActionKind::Scale, ActionKind::Delete];

    pub fn as_str(self) -> &'static str {
        match self {
            ActionKind::Rotate => "rotate",
            ActionKind::Translate => "translate",
            ActionKind::Scale => "scale",
            ActionKind::Delete => "delete",
        }
    }
}

impl FromStr for ActionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rotate" => Ok(ActionKind::Rotate),
            "translate" => Ok(ActionKind::Translate),
            "scale" => Ok(ActionKind::Scale),
            "delete" => Ok(ActionKind::Delete),
            other => Err(Error::Config(format!("unknown action {other:?}"))),
        }
    }
}

/// Sampling parameters of the polygon augmenter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentParams {
    pub theta0: f64,
    pub theta1: f64,
    /// Translation band, decimal degrees.
    pub delta0: f64,
    pub delta1: f64,
    pub beta_min: f64,
    pub beta0_minus: f64,
    pub beta0_plus: f64,
    pub beta_max: f64,
    pub p_select: f64,
    pub rho: f64,
    pub max_attempts: usize,
    /// Allowed action set.
    pub actions: Vec<ActionKind>,
}

impl Default for AugmentParams {
    fn default() -> Self {
        Self {
            theta0: PI / 6.0,
            theta1: PI / 2.0,
            delta0: 0.000_06,
            delta1: 0.000_12,
            beta_min: 0.2,
            beta0_minus: 0.7,
            beta0_plus: 1.4,
            beta_max: 3.0,
            p_select: 0.5,
            rho: 0.10,
            max_attempts: 1000,
            actions: ActionKind::ALL.to_vec(),
        }
    }
}

impl AugmentParams {
    pub fn validate(&self) -> Result<()> {
        let ok = 0.0 < self.theta0
            && self.theta0 < self.theta1
            && 0.0 < self.delta0
            && self.delta0 < self.delta1
            && 0.0 < self.beta_min
            && self.beta_min < self.beta0_minus
            && self.beta0_minus < 1.0
            && 1.0 < self.beta0_plus
            && self.beta0_plus < self.beta_max
            && 0.0 < self.p_select
            && self.p_select < 1.0
            && self.rho >= 0.0
            && self.max_attempts >= 1
            && !self.actions.is_empty();
        if !ok {
            return Err(Error::Config(format!("invalid augmentation parameters {self:?}")));
        }
        let mut a = self.actions.clone();
        a.sort();
        a.dedup();
        if a.len() != self.actions.len() {
            return Err(Error::Config("duplicate action in action set".into()));
        }
        Ok(())
    }
}

/// One action as applied, with its sampled parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum AppliedAction {
    Rotate { theta: f64 },
    Translate { dx: f64, dy: f64 },
    Scale { bx: f64, by: f64 },
    Delete,
}

impl AppliedAction {
    pub fn kind(&self) -> ActionKind {
        match self {
            AppliedAction::Rotate { .. } => ActionKind::Rotate,
            AppliedAction::Translate { .. } => ActionKind::Translate,
            AppliedAction::Scale { .. } => ActionKind::Scale,
            AppliedAction::Delete => ActionKind::Delete,
        }
    }
}

/// Actions applied to one selected polygon, in order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolygonActions {
    pub index: usize,
    pub id: String,
    pub actions: Vec<AppliedAction>,
}

pub type ActionLog = Vec<PolygonActions>;

/// Which polygons get augmented: each independently with probability
/// `p_select`, falling back to one uniform pick when none is chosen.
fn select_polygons<R: Rng>(rng: &mut R, n: usize, p_select: f64) -> Vec<usize> {
    let mut chosen: Vec<usize> = (0..n).filter(|_| rng.gen_bool(p_select)).collect();
    if chosen.is_empty() {
        chosen.push(rng.gen_range(0..n));
    }
    chosen
}

fn sample_actions<R: Rng>(rng: &mut R, params: &AugmentParams) -> Vec<AppliedAction> {
    let mut kinds: Vec<ActionKind> = params.actions.iter().copied().filter(|_| rng.gen_bool(0.5)).collect();
    if kinds.is_empty() {
        kinds.push(params.actions[rng.gen_range(0..params.actions.len())]);
    }
    kinds.shuffle(rng);
    let mut out = Vec::with_capacity(kinds.len());
    for kind in kinds {
        let action = match kind {
            ActionKind::Rotate => AppliedAction::Rotate { theta: symmetric_band(rng, params.theta0, params.theta1) },
            ActionKind::Translate => AppliedAction::Translate {
                dx: symmetric_band(rng, params.delta0, params.delta1),
                dy: symmetric_band(rng, params.delta0, params.delta1),
            },
            ActionKind::Scale => {
                let low = (params.beta_min, params.beta0_minus);
                let high = (params.beta0_plus, params.beta_max);
                AppliedAction::Scale { bx: union_of_intervals(rng, low, high), by: union_of_intervals(rng, low, high) }
            }
            ActionKind::Delete => AppliedAction::Delete,
        };
        out.push(action);
        if kind == ActionKind::Delete {
            break;
        }
    }
    out
}

/// Samples an action log for the tile's polygons. Pure in `seed`.
pub fn sample_action_log(polys: &[Polygon], params: &AugmentParams, seed: u64) -> Result<ActionLog> {
    if polys.is_empty() {
        return Err(Error::EmptyTile);
    }
    params.validate()?;
    let mut rng = rng_from(seed);
    let selected = select_polygons(&mut rng, polys.len(), params.p_select);
    Ok(selected
        .into_iter()
        .map(|index| PolygonActions { index, id: polys[index].id.clone(), actions: sample_actions(&mut rng, params) })
        .collect())
}

/// Applies a logged augmentation. Selected polygons are transformed, then
/// clipped to the tile; unselected polygons pass through unchanged.
pub fn replay(polys: &[Polygon], tile: TileKey, log: &ActionLog) -> Result<Vec<Polygon>> {
    let mut out = Vec::with_capacity(polys.len());
    for (i, p) in polys.iter().enumerate() {
        let Some(entry) = log.iter().find(|e| e.index == i) else {
            out.push(p.clone());
            continue;
        };
        let mut cur = p.clone();
        let mut deleted = false;
        for action in &entry.actions {
            let affine = match *action {
                AppliedAction::Rotate { theta } => AffineAction::Rotate { theta },
                AppliedAction::Translate { dx, dy } => AffineAction::Translate { dx, dy },
                AppliedAction::Scale { bx, by } => AffineAction::Scale { bx, by },
                AppliedAction::Delete => {
                    deleted = true;
                    break;
                }
            };
            cur = apply_affine(&cur, affine)?;
        }
        if !deleted {
            out.extend(clip_to_tile(&cur, tile));
        }
    }
    Ok(out)
}

/// One draw of the polygon augmenter: the augmented polygon set and the log
/// that produced it.
pub fn rand_poly_augment(
    polys: &[Polygon],
    tile: TileKey,
    params: &AugmentParams,
    seed: u64,
) -> Result<(Vec<Polygon>, ActionLog)> {
    let log = sample_action_log(polys, params, seed)?;
    let out = replay(polys, tile, &log)?;
    Ok((out, log))
}

/// `‖augmented − normal‖_F / ‖normal‖_F`.
pub fn posedness(normal: &Channel, augmented: &Channel) -> Result<f64> {
    if normal.grid != augmented.grid {
        return Err(Error::Alignment("posedness of channels on different grids".into()));
    }
    let mut diff = 0.0;
    let mut base = 0.0;
    for (&a, &b) in normal.data.iter().zip(&augmented.data) {
        let (a, b) = (f64::from(a), f64::from(b));
        diff += (b - a) * (b - a);
        base += a * a;
    }
    if base == 0.0 {
        return Err(Error::UndefinedPosedness);
    }
    Ok((diff / base).sqrt())
}

/// Anomaly synthesis strategies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Polygon-level augmentation.
    Rpa,
    Rotation90,
    Cutout,
    RandomErase,
    Cutpaste,
}

impl Strategy {
    pub const ALL: [Strategy; 5] =
        [Strategy::Rpa, Strategy::Rotation90, Strategy::Cutout, Strategy::RandomErase, Strategy::Cutpaste];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Rpa => "rpa",
            Strategy::Rotation90 => "rotation90",
            Strategy::Cutout => "cutout",
            Strategy::RandomErase => "random_erase",
            Strategy::Cutpaste => "cutpaste",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        Strategy::ALL
            .into_iter()
            .find(|k| k.as_str() == key || (key == "randpolyaugment" && *k == Strategy::Rpa))
            .ok_or_else(|| Error::Config(format!("unknown strategy {s:?}")))
    }
}

/// Axis-aligned pixel rectangle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelRect {
    pub row: usize,
    pub col: usize,
    pub height: usize,
    pub width: usize,
}

/// What a raster baseline did.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case")]
pub enum BaselineLog {
    Rotation90 { quarter_turns: u8 },
    Cutout { rect: PixelRect },
    RandomErase { rect: PixelRect, fill_seed: u64 },
    Cutpaste { from: PixelRect, to: PixelRect },
}

fn random_rect<R: Rng>(rng: &mut R, size: usize) -> PixelRect {
    let lo = (size / 16).max(1);
    let hi = (size / 4).max(lo);
    let height = rng.gen_range(lo..=hi);
    let width = rng.gen_range(lo..=hi);
    PixelRect { row: rng.gen_range(0..=size - height), col: rng.gen_range(0..=size - width), height, width }
}

fn rotate_quarter(ch: &Channel, turns: u8) -> Channel {
    let n = ch.size();
    let mut out = ch.clone();
    for r in 0..n {
        for c in 0..n {
            // counter-clockwise quarter turns of the image
            let (sr, sc) = match turns % 4 {
                0 => (r, c),
                1 => (c, n - 1 - r),
                2 => (n - 1 - r, n - 1 - c),
                _ => (n - 1 - c, r),
            };
            out.data[r * n + c] = ch.data[sr * n + sc];
        }
    }
    out
}

/// Applies a logged baseline augmentation.
pub fn replay_baseline(ch: &Channel, log: &BaselineLog) -> Channel {
    let n = ch.size();
    match *log {
        BaselineLog::Rotation90 { quarter_turns } => rotate_quarter(ch, quarter_turns),
        BaselineLog::Cutout { rect } => {
            let mut out = ch.clone();
            for r in rect.row..rect.row + rect.height {
                out.data[r * n + rect.col..r * n + rect.col + rect.width].fill(0.0);
            }
            out
        }
        BaselineLog::RandomErase { rect, fill_seed } => {
            let mut out = ch.clone();
            let mut rng = rng_from(fill_seed);
            for r in rect.row..rect.row + rect.height {
                for c in rect.col..rect.col + rect.width {
                    out.data[r * n + c] = rng.gen_range(0.0f32..=1.0);
                }
            }
            out
        }
        BaselineLog::Cutpaste { from, to } => {
            let mut out = ch.clone();
            for dr in 0..from.height {
                let src = (from.row + dr) * n + from.col;
                let dst = (to.row + dr) * n + to.col;
                out.data[dst..dst + from.width].copy_from_slice(&ch.data[src..src + from.width]);
            }
            out
        }
    }
}

pub fn sample_baseline(strategy: Strategy, size: usize, seed: u64) -> Result<BaselineLog> {
    let mut rng = rng_from(seed);
    Ok(match strategy {
        Strategy::Rotation90 => BaselineLog::Rotation90 { quarter_turns: rng.gen_range(0..4) },
        Strategy::Cutout => BaselineLog::Cutout { rect: random_rect(&mut rng, size) },
        Strategy::RandomErase => BaselineLog::RandomErase { rect: random_rect(&mut rng, size), fill_seed: rng.gen() },
        Strategy::Cutpaste => {
            let from = random_rect(&mut rng, size);
            let to = PixelRect {
                row: rng.gen_range(0..=size - from.height),
                col: rng.gen_range(0..=size - from.width),
                ..from
            };
            BaselineLog::Cutpaste { from, to }
        }
        Strategy::Rpa => return Err(Error::Config("rpa is not a raster baseline".into())),
    })
}

/// One draw of a raster baseline on an RCPP channel.
pub fn baseline_augment(ch: &Channel, strategy: Strategy, seed: u64) -> Result<(Channel, BaselineLog)> {
    let log = sample_baseline(strategy, ch.size(), seed)?;
    Ok((replay_baseline(ch, &log), log))
}

/// How an augmented raster was produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AugmentLog {
    Polygons { actions: ActionLog },
    Baseline(BaselineLog),
}

/// An accepted normal/augmented RCPP pair.
#[derive(Clone, Debug, PartialEq)]
pub struct AugmentationRecord {
    pub tile: TileKey,
    pub strategy: Strategy,
    pub normal_rcpp: Channel,
    pub augmented_rcpp: Channel,
    pub posedness: f64,
    pub log: AugmentLog,
    /// Seed of the accepted attempt; the record seed is `seed`.
    pub attempt_seed: u64,
    pub seed: u64,
    pub attempts: usize,
}

/// JSON sidecar describing one accepted augmentation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentSidecar {
    pub tile: TileKey,
    pub strategy: Strategy,
    pub seed: u64,
    pub attempt_seed: u64,
    pub attempts: usize,
    pub posedness: f64,
    pub log: AugmentLog,
}

impl AugmentationRecord {
    pub fn sidecar(&self) -> AugmentSidecar {
        AugmentSidecar {
            tile: self.tile,
            strategy: self.strategy,
            seed: self.seed,
            attempt_seed: self.attempt_seed,
            attempts: self.attempts,
            posedness: self.posedness,
            log: self.log.clone(),
        }
    }
}

fn attempt_seed(seed: u64, attempt: usize) -> u64 {
    derive_seed(seed, &[attempt as u64])
}

/// Draws polygon augmentations until posedness strictly exceeds `params.rho`.
pub fn augment_with_posedness(
    polys: &[Polygon],
    grid: PixelGrid,
    params: &AugmentParams,
    seed: u64,
) -> Result<AugmentationRecord> {
    if polys.is_empty() {
        return Err(Error::EmptyTile);
    }
    params.validate()?;
    let normal = rasterize_polygons(polys, grid);
    if normal.count_nonzero() == 0 {
        return Err(Error::UndefinedPosedness);
    }
    let mut best = 0.0f64;
    for attempt in 0..params.max_attempts {
        let sub = attempt_seed(seed, attempt);
        let (aug_polys, actions) = rand_poly_augment(polys, grid.tile, params, sub)?;
        let augmented = rasterize_polygons(&aug_polys, grid);
        let rho = posedness(&normal, &augmented)?;
        if rho > params.rho {
            return Ok(AugmentationRecord {
                tile: grid.tile,
                strategy: Strategy::Rpa,
                normal_rcpp: normal,
                augmented_rcpp: augmented,
                posedness: rho,
                log: AugmentLog::Polygons { actions },
                attempt_seed: sub,
                seed,
                attempts: attempt + 1,
            });
        }
        best = best.max(rho);
    }
    Err(Error::RejectionExhausted { attempts: params.max_attempts, best, rho: params.rho })
}

/// Posedness-thresholded raster baseline.
pub fn baseline_with_posedness(
    normal: &Channel,
    strategy: Strategy,
    rho: f64,
    max_attempts: usize,
    seed: u64,
) -> Result<AugmentationRecord> {
    if normal.name != ChannelName::Rcpp {
        return Err(Error::Config(format!("baselines operate on RCPP, got {}", normal.name)));
    }
    if normal.count_nonzero() == 0 {
        return Err(Error::UndefinedPosedness);
    }
    let mut best = 0.0f64;
    for attempt in 0..max_attempts.max(1) {
        let sub = attempt_seed(seed, attempt);
        let (augmented, log) = baseline_augment(normal, strategy, sub)?;
        let p = posedness(normal, &augmented)?;
        if p > rho {
            return Ok(AugmentationRecord {
                tile: normal.grid.tile,
                strategy,
                normal_rcpp: normal.clone(),
                augmented_rcpp: augmented,
                posedness: p,
                log: AugmentLog::Baseline(log),
                attempt_seed: sub,
                seed,
                attempts: attempt + 1,
            });
        }
        best = best.max(p);
    }
    Err(Error::RejectionExhausted { attempts: max_attempts, best, rho })
}

/// Dispatches to the polygon augmenter or a raster baseline.
pub fn augment_tile(
    polys: &[Polygon],
    grid: PixelGrid,
    strategy: Strategy,
    params: &AugmentParams,
    seed: u64,
) -> Result<AugmentationRecord> {
    match strategy {
        Strategy::Rpa => augment_with_posedness(polys, grid, params, seed),
        other => {
            let normal = rasterize_polygons(polys, grid);
            baseline_with_posedness(&normal, other, params.rho, params.max_attempts, seed)
        }
    }
}

/// Re-derives the augmented raster from the vector polygons and a sidecar.
pub fn replay_record(polys: &[Polygon], grid: PixelGrid, log: &AugmentLog) -> Result<Channel> {
    match log {
        AugmentLog::Polygons { actions } => Ok(rasterize_polygons(&replay(polys, grid.tile, actions)?, grid)),
        AugmentLog::Baseline(b) => Ok(replay_baseline(&rasterize_polygons(polys, grid), b)),
    }
}

/// Seed for augmenting `tile` in `epoch` under a run seed.
pub fn tile_epoch_seed(run_seed: u64, tile: TileKey, epoch: u64) -> u64 {
    derive_seed(run_seed, &[u64::from(tile.zoom), u64::from(tile.x), u64::from(tile.y), epoch])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::ChannelName;

    fn tile() -> TileKey {
        TileKey::new(18, 77_000, 99_000).unwrap()
    }

    fn grid() -> PixelGrid {
        PixelGrid::new(tile(), 64).unwrap()
    }

    /// `n` non-overlapping rectangles spread over the tile.
    fn rects(n: usize) -> Vec<Polygon> {
        let b = tile().bounds();
        (0..n)
            .map(|k| {
                let fx = 0.1 + 0.8 * (k % 4) as f64 / 4.0;
                let fy = 0.1 + 0.8 * (k / 4) as f64 / 4.0;
                let lo = [b.lon_min + fx * b.width(), b.lat_min + fy * b.height()];
                let hi = [lo[0] + 0.15 * b.width(), lo[1] + 0.12 * b.height()];
                Polygon::rect(format!("p{k}"), lo, hi).unwrap()
            })
            .collect()
    }

    #[test]
    fn paper_defaults_validate() {
        let p = AugmentParams::default();
        p.validate().unwrap();
        assert_eq!(p.delta0, 6e-5);
        assert_eq!(p.beta_max, 3.0);
        let bad = AugmentParams { beta0_plus: 0.9, ..AugmentParams::default() };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn forced_delete_removes_polygon() {
        let polys = rects(1);
        let params = AugmentParams { actions: vec![ActionKind::Delete], ..Default::default() };
        let (out, log) = rand_poly_augment(&polys, tile(), &params, 11).unwrap();
        assert!(out.is_empty());
        assert_eq!(log.len(), 1);
        assert_eq!(log[0].actions, vec![AppliedAction::Delete]);
    }

    #[test]
    fn near_certain_selection_takes_every_polygon() {
        let polys = rects(3);
        let params = AugmentParams { p_select: 1.0 - 1e-12, ..Default::default() };
        let (_, log) = rand_poly_augment(&polys, tile(), &params, 5).unwrap();
        let idx: Vec<usize> = log.iter().map(|e| e.index).collect();
        assert_eq!(idx, vec![0, 1, 2]);
    }

    #[test]
    fn empty_tile_is_an_error() {
        assert!(matches!(rand_poly_augment(&[], tile(), &AugmentParams::default(), 1), Err(Error::EmptyTile)));
    }

    #[test]
    fn fixed_seed_is_deterministic() {
        let polys = rects(6);
        let p = AugmentParams::default();
        let a = augment_with_posedness(&polys, grid(), &p, 99).unwrap();
        let b = augment_with_posedness(&polys, grid(), &p, 99).unwrap();
        assert_eq!(a.augmented_rcpp.data, b.augmented_rcpp.data);
        assert_eq!(a.log, b.log);
    }

    #[test]
    fn posedness_examples() {
        let g = grid();
        let mut normal = Channel::zeros(ChannelName::Rcpp, g);
        for k in 0..400 {
            normal.data[k] = 1.0;
        }
        assert_eq!(posedness(&normal, &normal).unwrap(), 0.0);
        let empty = Channel::zeros(ChannelName::Rcpp, g);
        assert_eq!(posedness(&normal, &empty).unwrap(), 1.0);
        let mut flipped = normal.clone();
        for k in 0..4 {
            flipped.data[k * 7] = 0.0;
        }
        // sqrt(4 / 400)
        assert!((posedness(&normal, &flipped).unwrap() - 0.1).abs() < 1e-15);
        assert!(matches!(posedness(&empty, &normal), Err(Error::UndefinedPosedness)));
    }

    #[test]
    fn zero_threshold_accepts_first_change() {
        let polys = rects(4);
        let p = AugmentParams { rho: 0.0, ..Default::default() };
        let rec = augment_with_posedness(&polys, grid(), &p, 3).unwrap();
        assert!(rec.posedness > 0.0);
        let first = rand_poly_augment(&polys, tile(), &p, attempt_seed(3, 0)).unwrap();
        if posedness(&rec.normal_rcpp, &rasterize_polygons(&first.0, grid())).unwrap() > 0.0 {
            assert_eq!(rec.attempts, 1);
        }
    }

    #[test]
    fn unattainable_threshold_exhausts() {
        let g = grid();
        let b = tile().bounds();
        let px = b.width() / 64.0;
        let polys: Vec<Polygon> = (0..3)
            .map(|k| {
                let lo = [b.lon_min + (10.0 + 15.0 * k as f64) * px + 0.1 * px, b.center().1];
                Polygon::rect(format!("dot{k}"), lo, [lo[0] + 0.8 * px, lo[1] + 0.6 * px]).unwrap()
            })
            .collect();
        let p = AugmentParams { rho: 10.0, max_attempts: 50, ..Default::default() };
        assert!(matches!(augment_with_posedness(&polys, g, &p, 1), Err(Error::RejectionExhausted { attempts: 50, .. })));
    }

    #[test]
    fn accepted_posedness_exceeds_threshold_and_replays() {
        let polys = rects(8);
        let p = AugmentParams::default();
        for seed in 0..40 {
            let rec = augment_with_posedness(&polys, grid(), &p, seed).unwrap();
            assert!(rec.posedness > 0.10);
            let again = replay_record(&polys, grid(), &rec.log).unwrap();
            assert_eq!(again.data, rec.augmented_rcpp.data);
        }
    }

    #[test]
    fn baselines() {
        let g = grid();
        let mut ch = Channel::zeros(ChannelName::Rcpp, g);
        for r in 10..30 {
            for c in 5..50 {
                ch.set(r, c, 1.0);
            }
        }
        assert_eq!(replay_baseline(&ch, &BaselineLog::Rotation90 { quarter_turns: 0 }), ch);
        let four = (0..4).fold(ch.clone(), |acc, _| replay_baseline(&acc, &BaselineLog::Rotation90 { quarter_turns: 1 }));
        assert_eq!(four, ch);

        let empty_rect = PixelRect { row: 40, col: 40, height: 8, width: 8 };
        let cut = replay_baseline(&ch, &BaselineLog::Cutout { rect: empty_rect });
        assert_eq!(posedness(&ch, &cut).unwrap(), 0.0);

        let src = PixelRect { row: 12, col: 10, height: 4, width: 6 };
        let dst = PixelRect { row: 20, col: 30, ..src };
        assert_eq!(replay_baseline(&ch, &BaselineLog::Cutpaste { from: src, to: dst }), ch);

        for s in [Strategy::Rotation90, Strategy::Cutout, Strategy::RandomErase, Strategy::Cutpaste] {
            for seed in 0..50 {
                let (out, log) = baseline_augment(&ch, s, seed).unwrap();
                assert_eq!(replay_baseline(&ch, &log), out);
                if let BaselineLog::Cutout { rect } | BaselineLog::RandomErase { rect, .. } = log {
                    assert!((4..=16).contains(&rect.height) && (4..=16).contains(&rect.width));
                }
            }
        }
        let rec = baseline_with_posedness(&ch, Strategy::Cutpaste, 0.1, 1000, 4).unwrap();
        assert!(rec.posedness > 0.1);
    }

    #[test]
    fn strategy_names() {
        assert_eq!("cutpaste".parse::<Strategy>().unwrap(), Strategy::Cutpaste);
        assert_eq!("RandPolyAugment".parse::<Strategy>().unwrap(), Strategy::Rpa);
        assert!("mixup".parse::<Strategy>().is_err());
    }
}
