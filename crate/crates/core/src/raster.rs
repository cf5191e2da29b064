//! Per-modality rasterization onto a tile's pixel grid, normalization, and
//! early fusion into one multichannel tensor.

use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{LonLat, Mode, Polygon, Trajectory};
use crate::tilemath::{lonlat_to_pixel, PixelGrid, TileKey};

/// Subsamples per pixel edge used for polygon coverage.
pub const COVERAGE_SUBSAMPLES: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ChannelName {
    SatR,
    SatG,
    SatB,
    Wcrm,
    Dcrm,
    Rnp,
    Rcpp,
}

impl ChannelName {
    /// Canonical fusion order.
    pub const ALL: [ChannelName; 7] = [
        ChannelName::SatR,
        ChannelName::SatG,
        ChannelName::SatB,
        ChannelName::Wcrm,
        ChannelName::Dcrm,
        ChannelName::Rnp,
        ChannelName::Rcpp,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ChannelName::SatR => "SAT_R",
            ChannelName::SatG => "SAT_G",
            ChannelName::SatB => "SAT_B",
            ChannelName::Wcrm => "WCRM",
            ChannelName::Dcrm => "DCRM",
            ChannelName::Rnp => "RNP",
            ChannelName::Rcpp => "RCPP",
        }
    }

    pub fn order(self) -> usize {
        self as usize
    }

    pub fn is_count(self) -> bool {
        matches!(self, ChannelName::Wcrm | ChannelName::Dcrm)
    }
}

impl fmt::Display for ChannelName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ChannelName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ChannelName::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Format(format!("unknown channel {s:?}")))
    }
}

/// A single raster plane on a tile's grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Channel {
    pub name: ChannelName,
    pub grid: PixelGrid,
    pub data: Vec<f32>,
}

impl Channel {
    pub fn zeros(name: ChannelName, grid: PixelGrid) -> Self {
        Self { name, grid, data: vec![0.0; grid.size * grid.size] }
    }

    pub fn from_data(name: ChannelName, grid: PixelGrid, data: Vec<f32>) -> Result<Self> {
        if data.len() != grid.size * grid.size {
            return Err(Error::Data(format!(
                "channel {name} has {} values for a {}x{} grid",
                data.len(),
                grid.size,
                grid.size
            )));
        }
        Ok(Self { name, grid, data })
    }

    pub fn size(&self) -> usize {
        self.grid.size
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.data[row * self.grid.size + col]
    }

    pub fn set(&mut self, row: usize, col: usize, v: f32) {
        self.data[row * self.grid.size + col] = v;
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().map(|&v| f64::from(v)).sum()
    }

    pub fn count_nonzero(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0.0).count()
    }

    pub fn max(&self) -> f32 {
        self.data.iter().copied().fold(0.0, f32::max)
    }
}

/// Count of GPS records of one mode per pixel, summed over all trajectories.
pub fn rasterize_crm(trajs: &[Trajectory], mode: Mode, grid: PixelGrid) -> Channel {
    let name = match mode {
        Mode::Walk => ChannelName::Wcrm,
        Mode::Drive => ChannelName::Dcrm,
    };
    let mut ch = Channel::zeros(name, grid);
    for r in trajs.iter().flat_map(|t| &t.records).filter(|r| r.mode == mode) {
        if let Some((row, col)) = lonlat_to_pixel(&grid, r.lon, r.lat) {
            ch.data[row * grid.size + col] += 1.0;
        }
    }
    ch
}

/// Geometry accepted by [`rasterize_presence`].
#[derive(Clone, Copy, Debug)]
pub enum PresenceSource<'a> {
    Segments(&'a [(LonLat, LonLat)]),
    Polygons(&'a [Polygon]),
}

/// Binary presence raster: RNP for road segments, RCPP for polygons.
pub fn rasterize_presence(source: PresenceSource<'_>, grid: PixelGrid) -> Channel {
    match source {
        PresenceSource::Segments(segs) => {
            let mut ch = Channel::zeros(ChannelName::Rnp, grid);
            for &(a, b) in segs {
                burn_segment(&mut ch, a, b);
            }
            ch
        }
        PresenceSource::Polygons(polys) => rasterize_polygons(polys, grid),
    }
}

pub fn rasterize_polygons(polys: &[Polygon], grid: PixelGrid) -> Channel {
    let mut ch = Channel::zeros(ChannelName::Rcpp, grid);
    for p in polys {
        burn_polygon(&mut ch, p);
    }
    ch
}

fn pixel_range(lo: f64, hi: f64, size: usize) -> Option<(usize, usize)> {
    if hi < 0.0 || lo >= size as f64 {
        return None;
    }
    let a = lo.floor().max(0.0) as usize;
    let b = (hi.floor().max(0.0) as usize).min(size - 1);
    Some((a, b))
}

fn burn_polygon(ch: &mut Channel, p: &Polygon) {
    let grid = ch.grid;
    let size = grid.size;
    let px: Vec<LonLat> = p
        .vertices()
        .iter()
        .map(|v| {
            let (c, r) = grid.to_pixel_coords(v[0], v[1]);
            [c, r]
        })
        .collect();
    let (min, max) = crate::geometry::bbox(&px);
    let (Some((c0, c1)), Some((r0, r1))) = (pixel_range(min[0], max[0], size), pixel_range(min[1], max[1], size))
    else {
        return;
    };
    let k = COVERAGE_SUBSAMPLES;
    for row in r0..=r1 {
        for col in c0..=c1 {
            let idx = row * size + col;
            if ch.data[idx] != 0.0 {
                continue;
            }
            'sub: for sy in 0..k {
                let y = row as f64 + (sy as f64 + 0.5) / k as f64;
                for sx in 0..k {
                    let x = col as f64 + (sx as f64 + 0.5) / k as f64;
                    if crate::geometry::point_in_ring(&px, [x, y]) {
                        ch.data[idx] = 1.0;
                        break 'sub;
                    }
                }
            }
        }
    }
}

/// Does segment `a→b` meet the half-open box `[c, c+1) x [r, r+1)`?
pub(crate) fn segment_hits_pixel(a: LonLat, b: LonLat, col: f64, row: f64) -> bool {
    let (x0, y0) = (a[0], a[1]);
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let mut t0: f64 = 0.0;
    let mut t1: f64 = 1.0;
    // Liang-Barsky against the closed box
    for (p, q) in [(-dx, x0 - col), (dx, col + 1.0 - x0), (-dy, y0 - row), (dy, row + 1.0 - y0)] {
        if p == 0.0 {
            if q < 0.0 {
                return false;
            }
        } else {
            let t = q / p;
            if p < 0.0 {
                t0 = t0.max(t);
            } else {
                t1 = t1.min(t);
            }
        }
    }
    if t0 > t1 {
        return false;
    }
    // On the closed sub-segment the open max faces can only be touched at an
    // endpoint or along the whole piece, so three probes settle it.
    let inside = |t: f64| {
        let x = x0 + t * dx;
        let y = y0 + t * dy;
        x < col + 1.0 && y < row + 1.0
    };
    inside(t0) || inside(t1) || inside(0.5 * (t0 + t1))
}

fn burn_segment(ch: &mut Channel, a: LonLat, b: LonLat) {
    let grid = ch.grid;
    let size = grid.size;
    let (ac, ar) = grid.to_pixel_coords(a[0], a[1]);
    let (bc, br) = grid.to_pixel_coords(b[0], b[1]);
    let (pa, pb) = ([ac, ar], [bc, br]);
    let (Some((c0, c1)), Some((r0, r1))) = (pixel_range(ac.min(bc), ac.max(bc), size), pixel_range(ar.min(br), ar.max(br), size))
    else {
        return;
    };
    for row in r0..=r1 {
        for col in c0..=c1 {
            if segment_hits_pixel(pa, pb, col as f64, row as f64) {
                ch.data[row * size + col] = 1.0;
            }
        }
    }
}

/// Scales a raw channel into [0, 1].
///
/// Count channels are log-compressed with `ln(1 + v)` first. The divisor is
/// the per-tile channel max (at least 1 for non-count channels).
pub fn normalize(ch: &Channel) -> Result<Channel> {
    if let Some(v) = ch.data.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::Data(format!("channel {} has invalid value {v}", ch.name)));
    }
    let data: Vec<f32> = if ch.name.is_count() {
        let logged: Vec<f64> = ch.data.iter().map(|&v| f64::from(v).ln_1p()).collect();
        let max = logged.iter().copied().fold(0.0, f64::max);
        if max == 0.0 {
            vec![0.0; ch.data.len()]
        } else {
            logged.iter().map(|&v| (v / max) as f32).collect()
        }
    } else {
        let max = f64::from(ch.max()).max(1.0);
        ch.data.iter().map(|&v| (f64::from(v) / max) as f32).collect()
    };
    Ok(Channel { name: ch.name, grid: ch.grid, data })
}

/// Pixel-aligned channels of one tile in canonical order.
#[derive(Clone, Debug, PartialEq)]
pub struct FusedTile {
    pub tile: TileKey,
    pub size: usize,
    pub channels: Vec<Channel>,
}

/// Concatenates normalized channels along the channel axis.
pub fn fuse(mut channels: Vec<Channel>) -> Result<FusedTile> {
    let first = channels.first().ok_or_else(|| Error::Alignment("no channels to fuse".into()))?;
    let grid = first.grid;
    for c in &channels {
        if c.grid != grid {
            return Err(Error::Alignment(format!(
                "channel {} on {}@{} does not match {}@{}",
                c.name, c.grid.tile, c.grid.size, grid.tile, grid.size
            )));
        }
        if c.data.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Data(format!("channel {} is not normalized to [0, 1]", c.name)));
        }
    }
    channels.sort_by_key(|c| c.name.order());
    if channels.windows(2).any(|w| w[0].name == w[1].name) {
        return Err(Error::Alignment("duplicate channel".into()));
    }
    Ok(FusedTile { tile: grid.tile, size: grid.size, channels })
}

impl FusedTile {
    pub fn names(&self) -> Vec<ChannelName> {
        self.channels.iter().map(|c| c.name).collect()
    }

    pub fn channel(&self, name: ChannelName) -> Option<&Channel> {
        self.channels.iter().find(|c| c.name == name)
    }

    pub fn grid(&self) -> PixelGrid {
        self.channels[0].grid
    }

    /// Copy with one channel swapped out.
    pub fn with_channel(&self, replacement: Channel) -> Result<FusedTile> {
        if replacement.grid != self.grid() {
            return Err(Error::Alignment("replacement channel on a different grid".into()));
        }
        let mut out = self.clone();
        let slot = out
            .channels
            .iter_mut()
            .find(|c| c.name == replacement.name)
            .ok_or_else(|| Error::Alignment(format!("tile has no {} channel", replacement.name)))?;
        *slot = replacement;
        Ok(out)
    }

    /// Restricts to a subset of channels, keeping canonical order.
    pub fn select(&self, names: &[ChannelName]) -> Result<FusedTile> {
        let mut channels = Vec::with_capacity(names.len());
        for &n in names {
            channels.push(
                self.channel(n).cloned().ok_or_else(|| Error::Alignment(format!("tile {} lacks channel {n}", self.tile)))?,
            );
        }
        fuse(channels)
    }

    /// Channel-major (CHW) copy of the pixel data.
    pub fn to_chw(&self) -> Vec<f32> {
        let mut out = Vec::with_capacity(self.channels.len() * self.size * self.size);
        for c in &self.channels {
            out.extend_from_slice(&c.data);
        }
        out
    }

    pub fn to_container(&self) -> SmndImage {
        SmndImage {
            height: self.size,
            width: self.size,
            names: self.channels.iter().map(|c| c.name.as_str().to_string()).collect(),
            data: self.to_chw(),
        }
    }

    pub fn from_container(tile: TileKey, img: &SmndImage) -> Result<FusedTile> {
        if img.height != img.width {
            return Err(Error::Format(format!("tile raster must be square, got {}x{}", img.height, img.width)));
        }
        let grid = PixelGrid::new(tile, img.width)?;
        let plane = img.height * img.width;
        let mut channels = Vec::with_capacity(img.names.len());
        for (k, name) in img.names.iter().enumerate() {
            let data = img.data[k * plane..(k + 1) * plane].to_vec();
            channels.push(Channel::from_data(name.parse()?, grid, data)?);
        }
        let fused = fuse(channels)?;
        if fused.names().iter().map(|n| n.as_str()).ne(img.names.iter().map(String::as_str)) {
            return Err(Error::Format("container channels are not in canonical order".into()));
        }
        Ok(fused)
    }
}

pub const SMND_MAGIC: &[u8; 4] = b"SMND";
pub const SMND_VERSION: u16 = 1;

/// Raw contents of an SMND container.
#[derive(Clone, Debug, PartialEq)]
pub struct SmndImage {
    pub height: usize,
    pub width: usize,
    pub names: Vec<String>,
    /// Channel-major, row-major within each channel.
    pub data: Vec<f32>,
}

impl SmndImage {
    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        let dim = |v: usize, what: &str| {
            u16::try_from(v).map_err(|_| Error::Format(format!("{what} {v} does not fit in u16")))
        };
        if self.data.len() != self.names.len() * self.height * self.width {
            return Err(Error::Format("container data length does not match header".into()));
        }
        w.write_all(SMND_MAGIC)?;
        w.write_all(&SMND_VERSION.to_le_bytes())?;
        w.write_all(&dim(self.height, "height")?.to_le_bytes())?;
        w.write_all(&dim(self.width, "width")?.to_le_bytes())?;
        w.write_all(&dim(self.names.len(), "channel count")?.to_le_bytes())?;
        for n in &self.names {
            if !n.is_ascii() || n.contains('\0') {
                return Err(Error::Format(format!("channel name {n:?} is not plain ASCII")));
            }
            w.write_all(n.as_bytes())?;
            w.write_all(&[0])?;
        }
        for v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(|_| Error::Format("truncated SMND header".into()))?;
        if &magic != SMND_MAGIC {
            return Err(Error::Format("bad SMND magic".into()));
        }
        let mut u16_at = || -> Result<u16> {
            let mut b = [0u8; 2];
            r.read_exact(&mut b).map_err(|_| Error::Format("truncated SMND header".into()))?;
            Ok(u16::from_le_bytes(b))
        };
        let version = u16_at()?;
        if version != SMND_VERSION {
            return Err(Error::Format(format!("unsupported SMND version {version}")));
        }
        let height = usize::from(u16_at()?);
        let width = usize::from(u16_at()?);
        let count = usize::from(u16_at()?);
        let mut names = Vec::with_capacity(count);
        for _ in 0..count {
            let mut name = Vec::new();
            loop {
                let mut b = [0u8; 1];
                r.read_exact(&mut b).map_err(|_| Error::Format("truncated SMND channel names".into()))?;
                if b[0] == 0 {
                    break;
                }
                name.push(b[0]);
            }
            names.push(String::from_utf8(name).map_err(|_| Error::Format("non-ASCII channel name".into()))?);
        }
        let n = count * height * width;
        let mut bytes = vec![0u8; n * 4];
        r.read_exact(&mut bytes).map_err(|_| Error::Format("truncated SMND payload".into()))?;
        let data = bytes.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect();
        Ok(Self { height, width, names, data })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read(BufReader::new(File::open(path)?))
    }
}

/// Loads an externally supplied RGB raster (3-channel SMND, values 0-255 or
/// 0-1) as raw SAT_R/SAT_G/SAT_B channels for `grid`.
pub fn load_rgb(path: &Path, grid: PixelGrid) -> Result<[Channel; 3]> {
    let img = SmndImage::load(path)?;
    rgb_from_container(&img, grid)
}

pub fn rgb_from_container(img: &SmndImage, grid: PixelGrid) -> Result<[Channel; 3]> {
    if img.names.len() != 3 || img.height != grid.size || img.width != grid.size {
        return Err(Error::Format(format!(
            "expected a 3-channel {}x{} raster, got {} channels {}x{}",
            grid.size,
            grid.size,
            img.names.len(),
            img.height,
            img.width
        )));
    }
    let plane = grid.size * grid.size;
    let names = [ChannelName::SatR, ChannelName::SatG, ChannelName::SatB];
    let mk = |k: usize| Channel::from_data(names[k], grid, img.data[k * plane..(k + 1) * plane].to_vec());
    Ok([mk(0)?, mk(1)?, mk(2)?])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::GpsRecord;

    fn grid(size: usize) -> PixelGrid {
        PixelGrid::new(TileKey::new(18, 77_000, 99_000).unwrap(), size).unwrap()
    }

    fn traj_in_pixel(g: &PixelGrid, row: usize, col: usize, n: usize, mode: Mode) -> Trajectory {
        let records = (0..n)
            .map(|k| {
                let (lon, lat) = g.from_pixel_coords(col as f64 + 0.2 + 0.1 * k as f64, row as f64 + 0.5);
                GpsRecord { lon, lat, t: k as f64, mode }
            })
            .collect();
        Trajectory::new("t", records).unwrap()
    }

    #[test]
    fn crm_counts() {
        let g = grid(256);
        assert_eq!(rasterize_crm(&[], Mode::Drive, g).sum(), 0.0);
        let one = traj_in_pixel(&g, 10, 20, 1, Mode::Drive);
        let ch = rasterize_crm(std::slice::from_ref(&one), Mode::Drive, g);
        assert_eq!(ch.count_nonzero(), 1);
        assert_eq!(ch.get(10, 20), 1.0);
        assert_eq!(rasterize_crm(&[one], Mode::Walk, g).sum(), 0.0);
        let a = traj_in_pixel(&g, 5, 5, 3, Mode::Walk);
        let ch = rasterize_crm(&[a.clone(), a], Mode::Walk, g);
        assert_eq!(ch.get(5, 5), 6.0);
    }

    #[test]
    fn polygon_presence_full_and_empty() {
        let g = grid(64);
        assert_eq!(rasterize_polygons(&[], g).sum(), 0.0);
        let b = g.tile.bounds();
        let big = Polygon::rect("all", [b.lon_min - 1e-3, b.lat_min - 1e-3], [b.lon_max + 1e-3, b.lat_max + 1e-3]).unwrap();
        let ch = rasterize_polygons(&[big], g);
        assert_eq!(ch.count_nonzero(), 64 * 64);
    }

    /// Brute force: densely sample the segment and mark every pixel any
    /// sample lands in under the half-open convention.
    fn brute_force_line(a: LonLat, b: LonLat, size: usize) -> Vec<f32> {
        let mut out = vec![0.0; size * size];
        let steps = 100_000;
        for k in 0..=steps {
            let t = k as f64 / steps as f64;
            let x = a[0] + t * (b[0] - a[0]);
            let y = a[1] + t * (b[1] - a[1]);
            let (c, r) = (x.floor(), y.floor());
            if c >= 0.0 && r >= 0.0 && (c as usize) < size && (r as usize) < size {
                out[r as usize * size + c as usize] = 1.0;
            }
        }
        out
    }

    #[test]
    fn horizontal_road_marks_one_row() {
        let g = grid(32);
        for row_coord in [7.5, 7.0, 12.25] {
            let (lon0, lat) = g.from_pixel_coords(-3.0, row_coord);
            let (lon1, _) = g.from_pixel_coords(35.0, row_coord);
            // keep the row coordinate exact in pixel space
            let seg = [([lon0, lat], [lon1, lat])];
            let ch = rasterize_presence(PresenceSource::Segments(&seg), g);
            let (_, r) = g.to_pixel_coords(lon0, lat);
            let oracle = brute_force_line([-3.0, r], [35.0, r], 32);
            assert_eq!(ch.data, oracle, "row {row_coord}");
            assert_eq!(ch.count_nonzero(), 32);
            let expected_row = r.floor() as usize;
            assert!((0..32).all(|c| ch.get(expected_row, c) == 1.0));
        }
    }

    #[test]
    fn segment_pixel_half_open() {
        assert!(segment_hits_pixel([0.0, 1.0], [4.0, 1.0], 2.0, 1.0));
        assert!(!segment_hits_pixel([0.0, 1.0], [4.0, 1.0], 2.0, 0.0));
        // touches only the max corner
        assert!(!segment_hits_pixel([0.0, 2.0], [2.0, 0.0], 0.0, 0.0));
        assert!(segment_hits_pixel([0.5, 0.5], [0.6, 0.6], 0.0, 0.0));
        assert!(!segment_hits_pixel([1.0, 0.0], [1.0, 3.0], 0.0, 0.0));
        assert!(segment_hits_pixel([1.0, 0.0], [1.0, 3.0], 1.0, 2.0));
    }

    #[test]
    fn normalize_rules() {
        let g = grid(2);
        let e = std::f32::consts::E;
        let crm = Channel::from_data(ChannelName::Dcrm, g, vec![0.0, e - 1.0, e * e - 1.0, 0.0]).unwrap();
        let n = normalize(&crm).unwrap();
        let expected = [0.0, 0.5, 1.0, 0.0];
        for (a, b) in n.data.iter().zip(expected) {
            assert!((a - b).abs() < 1e-6);
        }
        let zero = Channel::zeros(ChannelName::Wcrm, g);
        assert_eq!(normalize(&zero).unwrap().data, vec![0.0; 4]);
        let rnp = Channel::from_data(ChannelName::Rnp, g, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        assert_eq!(normalize(&rnp).unwrap(), rnp);
        let sat = Channel::from_data(ChannelName::SatR, g, vec![0.0, 0.5, 0.25, 0.0]).unwrap();
        assert_eq!(normalize(&sat).unwrap(), sat);
        let bad = Channel::from_data(ChannelName::Rnp, g, vec![0.0, -1.0, 0.0, 0.0]).unwrap();
        assert!(matches!(normalize(&bad), Err(Error::Data(_))));
        let nan = Channel::from_data(ChannelName::Dcrm, g, vec![0.0, f32::NAN, 0.0, 0.0]).unwrap();
        assert!(matches!(normalize(&nan), Err(Error::Data(_))));
    }

    #[test]
    fn fuse_orders_and_checks_grids() {
        let g = grid(4);
        let chans: Vec<Channel> = ChannelName::ALL.iter().rev().map(|&n| Channel::zeros(n, g)).collect();
        let fused = fuse(chans).unwrap();
        assert_eq!(fused.names(), ChannelName::ALL.to_vec());
        let one = fuse(vec![Channel::zeros(ChannelName::Rnp, g)]).unwrap();
        assert_eq!(one.channels.len(), 1);
        let other = PixelGrid::new(TileKey::new(18, 1, 1).unwrap(), 4).unwrap();
        let mixed = fuse(vec![Channel::zeros(ChannelName::Rnp, g), Channel::zeros(ChannelName::Rcpp, other)]);
        assert!(matches!(mixed, Err(Error::Alignment(_))));
    }

    #[test]
    fn container_round_trip_and_truncation() {
        let g = grid(8);
        let mut rcpp = Channel::zeros(ChannelName::Rcpp, g);
        rcpp.set(3, 4, 1.0);
        let fused = fuse(vec![Channel::zeros(ChannelName::Rnp, g), rcpp]).unwrap();
        let mut buf = Vec::new();
        fused.to_container().write(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"SMND");
        assert_eq!(u16::from_le_bytes([buf[4], buf[5]]), 1);
        assert_eq!(&buf[12..17], b"RNP\0R");
        let img = SmndImage::read(&buf[..]).unwrap();
        assert_eq!(FusedTile::from_container(g.tile, &img).unwrap(), fused);
        assert!(matches!(SmndImage::read(&buf[..buf.len() - 3]), Err(Error::Format(_))));
    }
}
