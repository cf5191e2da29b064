//! Procedural synthetic world: roads, casement polygons, walk/drive GPS
//! traces and stylized imagery for each tile, all derived from one layout so
//! the modalities agree by construction.
//!
//! Each tile is generated from its own seed, independently of its
//! neighbours. Layout happens in a local metric frame anchored at the tile's
//! south-west corner.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::{augment_tile, AugmentParams, AugmentationRecord, Strategy};
use crate::error::{Error, Result};
use crate::geometry::{clip_to_bounds, LonLat, Mode, Polygon, GpsRecord, RoadGraph, TileGeometry, Trajectory};
use crate::raster::{rasterize_polygons, Channel, ChannelName};
use crate::rng::{child_rng, derive_seed, SeededRng};
use crate::tilemath::{PixelGrid, TileBounds, TileKey};

const M_PER_DEG_LAT: f64 = 110_540.0;
const M_PER_DEG_LON_EQ: f64 = 111_320.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImageryStyle {
    pub background: [f32; 3],
    pub road: [f32; 3],
    pub building: [f32; 3],
    pub canopy: [f32; 3],
    pub noise: f32,
    pub buildings: [usize; 2],
    pub canopy_blobs: [usize; 2],
    pub canopy_radius_m: [f64; 2],
}

impl Default for ImageryStyle {
    fn default() -> Self {
        Self {
            background: [0.36, 0.46, 0.30],
            road: [0.24, 0.24, 0.27],
            building: [0.62, 0.56, 0.50],
            canopy: [0.14, 0.34, 0.14],
            noise: 0.04,
            buildings: [1, 4],
            canopy_blobs: [0, 2],
            canopy_radius_m: [5.0, 11.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorldConfig {
    pub seed: u64,
    pub zoom: u8,
    /// Tile `(x, y)` of the region's north-west corner.
    pub origin: [u32; 2],
    pub cols: u32,
    pub rows: u32,
    /// Explicit tiles; overrides the region when non-empty.
    pub tiles: Vec<TileKey>,
    pub grid_size: usize,
    pub road_spacing_m: [f64; 2],
    pub diagonal_prob: f64,
    pub road_width_m: [f64; 2],
    /// Probability that a road piece is missing from the road network while
    /// still present in every other modality.
    pub unmapped_fraction: f64,
    pub drive_per_road: [usize; 2],
    pub walk_per_side: [usize; 2],
    pub crossings_per_intersection: [usize; 2],
    pub gps_sigma_m: f64,
    pub sample_spacing_m: f64,
    pub sidewalk_offset_m: f64,
    pub imagery: ImageryStyle,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            zoom: 18,
            origin: [41_900, 101_300],
            cols: 16,
            rows: 16,
            tiles: Vec::new(),
            grid_size: crate::tilemath::DEFAULT_GRID_SIZE,
            road_spacing_m: [45.0, 75.0],
            diagonal_prob: 0.5,
            road_width_m: [6.0, 12.0],
            unmapped_fraction: 0.25,
            drive_per_road: [4, 12],
            walk_per_side: [1, 4],
            crossings_per_intersection: [0, 3],
            gps_sigma_m: 1.5,
            sample_spacing_m: 4.0,
            sidewalk_offset_m: 2.0,
            imagery: ImageryStyle::default(),
        }
    }
}

fn check_range(name: &str, r: [f64; 2], positive: bool) -> Result<()> {
    let ok = r[0].is_finite() && r[1].is_finite() && r[0] <= r[1] && if positive { r[0] > 0.0 } else { r[0] >= 0.0 };
    if ok {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} range {r:?} is invalid")))
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tiles.is_empty() && (self.cols == 0 || self.rows == 0) {
            return Err(Error::Config("world region has zero area".into()));
        }
        check_range("road_spacing_m", self.road_spacing_m, true)?;
        check_range("road_width_m", self.road_width_m, true)?;
        check_range("canopy_radius_m", self.imagery.canopy_radius_m, true)?;
        for (name, r) in [
            ("drive_per_road", self.drive_per_road),
            ("walk_per_side", self.walk_per_side),
            ("crossings_per_intersection", self.crossings_per_intersection),
            ("buildings", self.imagery.buildings),
            ("canopy_blobs", self.imagery.canopy_blobs),
        ] {
            if r[0] > r[1] {
                return Err(Error::Config(format!("{name} range {r:?} is invalid")));
            }
        }
        if !(self.gps_sigma_m >= 0.0) || !(self.sidewalk_offset_m >= 0.0) || !(self.sample_spacing_m > 0.0) {
            return Err(Error::Config("GPS noise and sidewalk offset must be non-negative, spacing positive".into()));
        }
        if !(0.0..=1.0).contains(&self.diagonal_prob) || !(0.0..1.0).contains(&self.unmapped_fraction) {
            return Err(Error::Config("diagonal_prob must lie in [0,1], unmapped_fraction in [0,1)".into()));
        }
        PixelGrid::new(TileKey::new(self.zoom, 0, 0)?, self.grid_size)?;
        Ok(())
    }

    pub fn tile_keys(&self) -> Result<Vec<TileKey>> {
        if !self.tiles.is_empty() {
            return Ok(self.tiles.clone());
        }
        let mut keys = Vec::with_capacity((self.cols * self.rows) as usize);
        for r in 0..self.rows {
            for c in 0..self.cols {
                keys.push(TileKey::new(self.zoom, self.origin[0] + c, self.origin[1] + r)?);
            }
        }
        Ok(keys)
    }

    pub fn grid(&self, tile: TileKey) -> Result<PixelGrid> {
        PixelGrid::new(tile, self.grid_size)
    }
}

/// A straight road piece between two cut points, in local metres.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoadPiece {
    pub a: [f64; 2],
    pub b: [f64; 2],
    pub half_width_m: f64,
    pub mapped: bool,
    pub road: usize,
}

/// Metric frame anchored at a tile's south-west corner.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalFrame {
    pub bounds: TileBounds,
    pub m_lon: f64,
    pub m_lat: f64,
}

impl LocalFrame {
    pub fn new(tile: TileKey) -> Self {
        let bounds = tile.bounds();
        let lat_c = 0.5 * (bounds.lat_min + bounds.lat_max);
        Self { bounds, m_lon: M_PER_DEG_LON_EQ * lat_c.to_radians().cos(), m_lat: M_PER_DEG_LAT }
    }

    pub fn width_m(&self) -> f64 {
        self.bounds.width() * self.m_lon
    }

    pub fn height_m(&self) -> f64 {
        self.bounds.height() * self.m_lat
    }

    pub fn to_lonlat(&self, p: [f64; 2]) -> LonLat {
        [self.bounds.lon_min + p[0] / self.m_lon, self.bounds.lat_min + p[1] / self.m_lat]
    }

    pub fn to_local(&self, q: LonLat) -> [f64; 2] {
        [(q[0] - self.bounds.lon_min) * self.m_lon, (q[1] - self.bounds.lat_min) * self.m_lat]
    }
}

/// Everything generated for one tile.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthTile {
    pub tile: TileKey,
    pub geometry: TileGeometry,
    pub pieces: Vec<RoadPiece>,
    /// Stylized imagery as SAT_R, SAT_G, SAT_B.
    pub rgb: [Channel; 3],
}

fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

fn cross(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

fn lerp(a: [f64; 2], b: [f64; 2], t: f64) -> [f64; 2] {
    [a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t]
}

fn gauss(rng: &mut SeededRng, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    let u: f64 = rng.gen_range(f64::EPSILON..1.0);
    let v: f64 = rng.gen_range(0.0..1.0);
    sigma * (-2.0 * u.ln()).sqrt() * (std::f64::consts::TAU * v).cos()
}

fn pick(rng: &mut SeededRng, r: [usize; 2]) -> usize {
    rng.gen_range(r[0]..=r[1])
}

struct Road {
    a: [f64; 2],
    b: [f64; 2],
    half_width: f64,
}

/// Jittered grid of full-length roads plus optional diagonals.
fn layout_roads(cfg: &WorldConfig, frame: &LocalFrame, rng: &mut SeededRng) -> Vec<Road> {
    let (w, h) = (frame.width_m(), frame.height_m());
    let margin = 0.2 * w.max(h);
    let mut roads = Vec::new();
    let width = |rng: &mut SeededRng| 0.5 * rng.gen_range(cfg.road_width_m[0]..=cfg.road_width_m[1]);
    for vertical in [true, false] {
        let extent = if vertical { w } else { h };
        let mut pos = rng.gen_range(0.1..0.9) * cfg.road_spacing_m[0];
        while pos < extent {
            let jitter = rng.gen_range(-0.08..0.08) * extent;
            let hw = width(rng);
            let (a, b) = if vertical {
                ([pos - jitter, -margin], [pos + jitter, h + margin])
            } else {
                ([-margin, pos - jitter], [w + margin, pos + jitter])
            };
            roads.push(Road { a, b, half_width: hw });
            pos += rng.gen_range(cfg.road_spacing_m[0]..=cfg.road_spacing_m[1]);
        }
    }
    if roads.is_empty() || rng.gen_bool(cfg.diagonal_prob) {
        let y0 = rng.gen_range(0.0..h);
        let y1 = rng.gen_range(0.0..h);
        roads.push(Road { a: [-margin, y0], b: [w + margin, y1], half_width: width(rng) });
    }
    roads
}

/// Splits every road at its crossings with the others.
fn cut_roads(roads: &[Road], unmapped: f64, rng: &mut SeededRng) -> (Vec<RoadPiece>, Vec<[f64; 2]>) {
    let mut pieces = Vec::new();
    let mut crossings = Vec::new();
    for (i, r) in roads.iter().enumerate() {
        let d = sub(r.b, r.a);
        let mut cuts = vec![0.0, 1.0];
        for (j, o) in roads.iter().enumerate() {
            if i == j {
                continue;
            }
            let e = sub(o.b, o.a);
            let den = cross(d, e);
            if den.abs() < 1e-12 {
                continue;
            }
            let t = cross(sub(o.a, r.a), e) / den;
            let u = cross(sub(o.a, r.a), d) / den;
            if (0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&u) {
                cuts.push(t);
                if i < j {
                    crossings.push(lerp(r.a, r.b, t));
                }
            }
        }
        cuts.sort_by(f64::total_cmp);
        let len = d[0].hypot(d[1]);
        for w in cuts.windows(2) {
            if (w[1] - w[0]) * len < 2.0 {
                continue;
            }
            pieces.push(RoadPiece {
                a: lerp(r.a, r.b, w[0]),
                b: lerp(r.a, r.b, w[1]),
                half_width_m: r.half_width,
                mapped: !rng.gen_bool(unmapped),
                road: i,
            });
        }
    }
    (pieces, crossings)
}

/// Rectangle around a piece, extended by the half width past each end so
/// neighbouring pieces overlap at junctions.
fn casement_ring(p: &RoadPiece, frame: &LocalFrame) -> Vec<LonLat> {
    let d = sub(p.b, p.a);
    let len = d[0].hypot(d[1]);
    let u = [d[0] / len, d[1] / len];
    let n = [-u[1], u[0]];
    let hw = p.half_width_m;
    let a = [p.a[0] - u[0] * hw, p.a[1] - u[1] * hw];
    let b = [p.b[0] + u[0] * hw, p.b[1] + u[1] * hw];
    let corners = [
        [a[0] - n[0] * hw, a[1] - n[1] * hw],
        [b[0] - n[0] * hw, b[1] - n[1] * hw],
        [b[0] + n[0] * hw, b[1] + n[1] * hw],
        [a[0] + n[0] * hw, a[1] + n[1] * hw],
    ];
    corners.iter().map(|c| frame.to_lonlat(*c)).collect()
}

struct TraceBuilder<'a> {
    frame: &'a LocalFrame,
    sigma: f64,
    spacing: f64,
    out: Vec<Trajectory>,
}

impl TraceBuilder<'_> {
    /// Noisy samples along `a → b`, keeping those inside the tile.
    fn trace(&mut self, rng: &mut SeededRng, a: [f64; 2], b: [f64; 2], mode: Mode) -> Result<()> {
        let d = sub(b, a);
        let len = d[0].hypot(d[1]);
        let steps = (len / self.spacing).ceil().max(1.0) as usize;
        let start = rng.gen_range(0.0..1.0);
        let mut records = Vec::with_capacity(steps);
        let mut t = rng.gen_range(0.0..1000.0);
        for k in 0..steps {
            let f = ((k as f64 + start) / steps as f64).min(1.0);
            let p = lerp(a, b, f);
            let q = self.frame.to_lonlat([p[0] + gauss(rng, self.sigma), p[1] + gauss(rng, self.sigma)]);
            t += 1.0;
            if self.frame.bounds.contains(q[0], q[1]) {
                records.push(GpsRecord { lon: q[0], lat: q[1], t, mode });
            }
        }
        if !records.is_empty() {
            let id = format!("{}{}", if mode == Mode::Drive { "d" } else { "w" }, self.out.len());
            self.out.push(Trajectory::new(id, records)?);
        }
        Ok(())
    }
}

fn offset_line(r: &Road, off: f64) -> ([f64; 2], [f64; 2]) {
    let d = sub(r.b, r.a);
    let len = d[0].hypot(d[1]);
    let n = [-d[1] / len, d[0] / len];
    ([r.a[0] + n[0] * off, r.a[1] + n[1] * off], [r.b[0] + n[0] * off, r.b[1] + n[1] * off])
}

fn render_imagery(
    cfg: &WorldConfig,
    grid: PixelGrid,
    frame: &LocalFrame,
    polygons: &[Polygon],
    rng: &mut SeededRng,
) -> Result<[Channel; 3]> {
    let style = &cfg.imagery;
    let n = grid.size;
    let px_m = frame.width_m() / n as f64;
    // low-frequency background variation on a 5×5 lattice
    let lattice: Vec<f32> = (0..25).map(|_| rng.gen_range(-0.06..0.06)).collect();
    let mut img = vec![[0f32; 3]; n * n];
    for r in 0..n {
        for c in 0..n {
            let (fy, fx) = (r as f64 / n as f64 * 4.0, c as f64 / n as f64 * 4.0);
            let (y0, x0) = (fy.floor() as usize, fx.floor() as usize);
            let (ty, tx) = ((fy - y0 as f64) as f32, (fx - x0 as f64) as f32);
            let at = |y: usize, x: usize| lattice[y.min(4) * 5 + x.min(4)];
            let v = (at(y0, x0) * (1.0 - tx) + at(y0, x0 + 1) * tx) * (1.0 - ty)
                + (at(y0 + 1, x0) * (1.0 - tx) + at(y0 + 1, x0 + 1) * tx) * ty;
            img[r * n + c] = style.background.map(|b| b + v);
        }
    }
    let fill_rect = |img: &mut Vec<[f32; 3]>, r0: usize, c0: usize, h: usize, w: usize, color: [f32; 3]| {
        for r in r0..(r0 + h).min(n) {
            for c in c0..(c0 + w).min(n) {
                img[r * n + c] = color;
            }
        }
    };
    for _ in 0..pick(rng, style.buildings) {
        let h = ((rng.gen_range(8.0..20.0) / px_m) as usize).max(1);
        let w = ((rng.gen_range(8.0..20.0) / px_m) as usize).max(1);
        let r0 = rng.gen_range(0..n);
        let c0 = rng.gen_range(0..n);
        fill_rect(&mut img, r0, c0, h, w, style.building);
    }
    let roads = rasterize_polygons(polygons, grid);
    for (i, v) in roads.data.iter().enumerate() {
        if *v > 0.0 {
            img[i] = style.road;
        }
    }
    for _ in 0..pick(rng, style.canopy_blobs) {
        let radius = rng.gen_range(style.canopy_radius_m[0]..=style.canopy_radius_m[1]) / px_m;
        let (cy, cx) = (rng.gen_range(0.0..n as f64), rng.gen_range(0.0..n as f64));
        for r in 0..n {
            for c in 0..n {
                let (dy, dx) = (r as f64 + 0.5 - cy, c as f64 + 0.5 - cx);
                if dy * dy + dx * dx <= radius * radius {
                    img[r * n + c] = style.canopy;
                }
            }
        }
    }
    let mut chans = [ChannelName::SatR, ChannelName::SatG, ChannelName::SatB].map(|name| Channel::zeros(name, grid));
    for (i, px) in img.iter().enumerate() {
        for (k, ch) in chans.iter_mut().enumerate() {
            let noise = gauss(rng, f64::from(style.noise)) as f32;
            ch.data[i] = (px[k] + noise).clamp(0.0, 1.0);
        }
    }
    Ok(chans)
}

/// Generates one tile from `derive_seed(cfg.seed, [zoom, x, y])`.
pub fn generate_tile(cfg: &WorldConfig, tile: TileKey) -> Result<SynthTile> {
    let mut rng = child_rng(cfg.seed, &[u64::from(tile.zoom), u64::from(tile.x), u64::from(tile.y)]);
    let frame = LocalFrame::new(tile);
    let grid = cfg.grid(tile)?;
    let roads = layout_roads(cfg, &frame, &mut rng);
    let (pieces, crossings) = cut_roads(&roads, cfg.unmapped_fraction, &mut rng);

    let mut polygons = Vec::new();
    for (i, p) in pieces.iter().enumerate() {
        let poly = Polygon::new(format!("c{}_{i}", p.road), casement_ring(p, &frame))?;
        polygons.extend(clip_to_bounds(&poly, &frame.bounds));
    }
    let mapped: Vec<(LonLat, LonLat)> =
        pieces.iter().filter(|p| p.mapped).map(|p| (frame.to_lonlat(p.a), frame.to_lonlat(p.b))).collect();
    let road_graph = RoadGraph::from_segments(&mapped)?;

    let mut traces = TraceBuilder { frame: &frame, sigma: cfg.gps_sigma_m, spacing: cfg.sample_spacing_m, out: Vec::new() };
    for r in &roads {
        for _ in 0..pick(&mut rng, cfg.drive_per_road) {
            let lane = rng.gen_range(-0.5..=0.5) * r.half_width;
            let (a, b) = offset_line(r, lane);
            let (a, b) = if rng.gen_bool(0.5) { (a, b) } else { (b, a) };
            traces.trace(&mut rng, a, b, Mode::Drive)?;
        }
        for side in [-1.0, 1.0] {
            for _ in 0..pick(&mut rng, cfg.walk_per_side) {
                let off = side * (r.half_width + cfg.sidewalk_offset_m + rng.gen_range(0.0..1.0));
                let (a, b) = offset_line(r, off);
                traces.trace(&mut rng, a, b, Mode::Walk)?;
            }
        }
    }
    for x in &crossings {
        for _ in 0..pick(&mut rng, cfg.crossings_per_intersection) {
            // a short crossing through the junction along a random road direction
            let angle = rng.gen_range(0.0..std::f64::consts::PI);
            let reach = cfg.road_width_m[1] + cfg.sidewalk_offset_m;
            let (dx, dy) = (angle.cos() * reach, angle.sin() * reach);
            traces.trace(&mut rng, [x[0] - dx, x[1] - dy], [x[0] + dx, x[1] + dy], Mode::Walk)?;
        }
    }
    let trajectories = traces.out;
    let rgb = render_imagery(cfg, grid, &frame, &polygons, &mut rng)?;
    Ok(SynthTile { tile, geometry: TileGeometry { polygons, roads: road_graph, trajectories }, pieces, rgb })
}

/// Generates every configured tile (in parallel; output order follows the
/// tile list).
pub fn generate_world(cfg: &WorldConfig) -> Result<Vec<SynthTile>> {
    cfg.validate()?;
    let keys = cfg.tile_keys()?;
    keys.par_iter().map(|&t| generate_tile(cfg, t)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Eval,
}

/// Held-out anomalous counterpart of an eval tile.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalAnomaly {
    /// Index into [`EvalSplit::eval`].
    pub eval_index: usize,
    pub record: AugmentationRecord,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalSplit {
    /// Indices into the world's tile list.
    pub train: Vec<usize>,
    pub eval: Vec<usize>,
    /// Anomalies per strategy, in the order the strategies were given.
    pub anomalies: Vec<(Strategy, Vec<EvalAnomaly>)>,
}

/// Partitions the world into training and held-out tiles and produces one
/// anomalous counterpart per held-out tile and strategy.
pub fn make_eval_split(
    world: &[SynthTile],
    grid_size: usize,
    eval_count: usize,
    params: &AugmentParams,
    strategies: &[Strategy],
    seed: u64,
) -> Result<EvalSplit> {
    if eval_count == 0 || eval_count >= world.len() {
        return Err(Error::Config(format!(
            "cannot hold out {eval_count} of {} tiles and keep some for training",
            world.len()
        )));
    }
    let mut order: Vec<usize> = (0..world.len()).collect();
    rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut child_rng(seed, &[0x5e1]));
    let eval: Vec<usize> = {
        let mut e = order[..eval_count].to_vec();
        e.sort_unstable();
        e
    };
    let mut train = order[eval_count..].to_vec();
    train.sort_unstable();
    let mut anomalies = Vec::with_capacity(strategies.len());
    for (si, &strategy) in strategies.iter().enumerate() {
        let recs = eval
            .par_iter()
            .enumerate()
            .map(|(k, &i)| {
                let t = &world[i];
                let grid = PixelGrid::new(t.tile, grid_size)?;
                let s = derive_seed(seed, &[si as u64, u64::from(t.tile.x), u64::from(t.tile.y)]);
                let record = augment_tile(&t.geometry.polygons, grid, strategy, params, s)?;
                Ok(EvalAnomaly { eval_index: k, record })
            })
            .collect::<Result<Vec<_>>>()?;
        anomalies.push((strategy, recs));
    }
    Ok(EvalSplit { train, eval, anomalies })
}

/// A tile with exactly one translated casement polygon, for localization.
#[derive(Clone, Debug, PartialEq)]
pub struct SingleDefect {
    pub normal: Channel,
    pub augmented: Channel,
    /// Centroid `(row, col)` of pixels that differ between the two.
    pub changed_centroid: (f64, f64),
    pub changed_pixels: usize,
}

/// Shifts one randomly chosen polygon by a translation drawn from the same
/// magnitude band the augmenter uses, retrying until some pixel changes.
pub fn single_defect(polys: &[Polygon], grid: PixelGrid, params: &AugmentParams, seed: u64) -> Result<SingleDefect> {
    if polys.is_empty() {
        return Err(Error::EmptyTile);
    }
    let normal = rasterize_polygons(polys, grid);
    let mut rng = child_rng(seed, &[]);
    for _ in 0..params.max_attempts {
        let k = rng.gen_range(0..polys.len());
        let dx = crate::rng::symmetric_band(&mut rng, params.delta0, params.delta1);
        let dy = crate::rng::symmetric_band(&mut rng, params.delta0, params.delta1);
        let moved = crate::geometry::apply_affine(&polys[k], crate::geometry::AffineAction::Translate { dx, dy })?;
        let mut next: Vec<Polygon> = polys.iter().enumerate().filter(|(i, _)| *i != k).map(|(_, p)| p.clone()).collect();
        next.extend(clip_to_bounds(&moved, &grid.tile.bounds()));
        let augmented = rasterize_polygons(&next, grid);
        let (mut n, mut r, mut c) = (0usize, 0.0, 0.0);
        for (i, (a, b)) in normal.data.iter().zip(&augmented.data).enumerate() {
            if a != b {
                n += 1;
                r += (i / grid.size) as f64 + 0.5;
                c += (i % grid.size) as f64 + 0.5;
            }
        }
        if n > 0 {
            return Ok(SingleDefect { normal, augmented, changed_centroid: (r / n as f64, c / n as f64), changed_pixels: n });
        }
    }
    Err(Error::RejectionExhausted { attempts: params.max_attempts, best: 0.0, rho: 0.0 })
}
