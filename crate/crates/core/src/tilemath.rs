//! Spherical-Mercator tile arithmetic.
//!
//! Tiles use the XYZ "slippy map" convention: origin at the top-left of the
//! projected world, `x` grows eastward and `y` grows southward. A point lying
//! exactly on a shared tile edge belongs to the tile with the larger index,
//! except on the global east and south boundaries where indices clamp inward.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Latitude where the square Mercator world ends.
pub const MAX_LATITUDE: f64 = 85.051_128_78;

/// Zoom of the tiles the pipeline works on.
pub const DEFAULT_ZOOM: u8 = 18;

/// Pixels per tile edge for full-resolution rasters.
pub const DEFAULT_GRID_SIZE: usize = 256;

/// Highest supported zoom. `2^zoom * grid size` must stay exactly
/// representable in an f64 mantissa.
pub const MAX_ZOOM: u8 = 30;

/// Address of a zoom-q tile.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct TileKey {
    pub zoom: u8,
    pub x: u32,
    pub y: u32,
}

impl TileKey {
    pub fn new(zoom: u8, x: u32, y: u32) -> Result<Self> {
        if zoom > MAX_ZOOM {
            return Err(Error::Domain(format!("zoom {zoom} exceeds {MAX_ZOOM}")));
        }
        let n = 1u64 << zoom;
        if u64::from(x) >= n || u64::from(y) >= n {
            return Err(Error::Domain(format!("tile {zoom}/{x}/{y} outside 2^{zoom} grid")));
        }
        Ok(Self { zoom, x, y })
    }

    /// Number of tiles per edge at this zoom.
    pub fn tiles_per_edge(&self) -> u64 {
        1u64 << self.zoom
    }

    /// File-name friendly form, `z_x_y`.
    pub fn file_stem(&self) -> String {
        format!("{}_{}_{}", self.zoom, self.x, self.y)
    }

    pub fn bounds(&self) -> TileBounds {
        tile_bounds(*self)
    }
}

impl fmt::Display for TileKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.zoom, self.x, self.y)
    }
}

impl FromStr for TileKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(['/', '_']).collect();
        if parts.len() != 3 {
            return Err(Error::Format(format!("tile key {s:?} is not z/x/y")));
        }
        let bad = |_| Error::Format(format!("tile key {s:?} is not z/x/y"));
        let zoom = parts[0].parse::<u8>().map_err(bad)?;
        let x = parts[1].parse::<u32>().map_err(bad)?;
        let y = parts[2].parse::<u32>().map_err(bad)?;
        TileKey::new(zoom, x, y)
    }
}

impl TryFrom<String> for TileKey {
    type Error = Error;

    fn try_from(value: String) -> Result<Self> {
        value.parse()
    }
}

impl From<TileKey> for String {
    fn from(value: TileKey) -> Self {
        value.to_string()
    }
}

/// Geographic extent of a tile in degrees.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TileBounds {
    pub lon_min: f64,
    pub lat_min: f64,
    pub lon_max: f64,
    pub lat_max: f64,
}

impl TileBounds {
    pub fn contains(&self, lon: f64, lat: f64) -> bool {
        lon >= self.lon_min && lon <= self.lon_max && lat >= self.lat_min && lat <= self.lat_max
    }

    pub fn width(&self) -> f64 {
        self.lon_max - self.lon_min
    }

    pub fn height(&self) -> f64 {
        self.lat_max - self.lat_min
    }

    pub fn center(&self) -> (f64, f64) {
        (0.5 * (self.lon_min + self.lon_max), 0.5 * (self.lat_min + self.lat_max))
    }
}

fn check_lonlat(lon: f64, lat: f64) -> Result<()> {
    if !lon.is_finite() || !(-180.0..=180.0).contains(&lon) {
        return Err(Error::Domain(format!("longitude {lon} outside [-180, 180]")));
    }
    if !lat.is_finite() || lat.abs() > MAX_LATITUDE {
        return Err(Error::Domain(format!("latitude {lat} outside Mercator limit")));
    }
    Ok(())
}

/// Position in the unit Mercator square, `u` east and `v` south, both in [0, 1].
pub fn mercator_unit(lon: f64, lat: f64) -> Result<(f64, f64)> {
    check_lonlat(lon, lat)?;
    Ok(mercator_unit_unchecked(lon, lat))
}

pub(crate) fn mercator_unit_unchecked(lon: f64, lat: f64) -> (f64, f64) {
    let lat = lat.clamp(-MAX_LATITUDE, MAX_LATITUDE).to_radians();
    let u = (lon + 180.0) / 360.0;
    let v = (1.0 - lat.tan().asinh() / PI) / 2.0;
    (u, v)
}

fn unit_to_lon(u: f64) -> f64 {
    u * 360.0 - 180.0
}

fn unit_to_lat(v: f64) -> f64 {
    (PI * (1.0 - 2.0 * v)).sinh().atan().to_degrees()
}

fn cell_index(unit: f64, n: u64) -> u64 {
    let idx = (unit * n as f64).floor();
    if idx < 0.0 {
        0
    } else {
        (idx as u64).min(n - 1)
    }
}

/// Tile of the given zoom containing `(lon, lat)`.
pub fn lonlat_to_tile(lon: f64, lat: f64, zoom: u8) -> Result<TileKey> {
    if zoom > MAX_ZOOM {
        return Err(Error::Domain(format!("zoom {zoom} exceeds {MAX_ZOOM}")));
    }
    let (u, v) = mercator_unit(lon, lat)?;
    let n = 1u64 << zoom;
    Ok(TileKey { zoom, x: cell_index(u, n) as u32, y: cell_index(v, n) as u32 })
}

/// Geographic bounds of a tile.
pub fn tile_bounds(t: TileKey) -> TileBounds {
    let n = t.tiles_per_edge() as f64;
    let lon_min = unit_to_lon(f64::from(t.x) / n);
    let lon_max = unit_to_lon(f64::from(t.x + 1) / n);
    let lat_max = unit_to_lat(f64::from(t.y) / n);
    let lat_min = unit_to_lat(f64::from(t.y + 1) / n);
    TileBounds { lon_min, lat_min, lon_max, lat_max }
}

/// The raster lattice covering one tile.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PixelGrid {
    pub tile: TileKey,
    pub size: usize,
}

impl PixelGrid {
    pub fn new(tile: TileKey, size: usize) -> Result<Self> {
        if size == 0 {
            return Err(Error::Domain("grid size must be positive".into()));
        }
        Ok(Self { tile, size })
    }

    pub fn with_default_size(tile: TileKey) -> Self {
        Self { tile, size: DEFAULT_GRID_SIZE }
    }

    fn scale(&self) -> f64 {
        self.tile.tiles_per_edge() as f64 * self.size as f64
    }

    /// Continuous pixel coordinates `(col, row)` of a point, relative to the
    /// grid's top-left corner. Values in `[0, size)` lie inside the tile.
    pub fn to_pixel_coords(&self, lon: f64, lat: f64) -> (f64, f64) {
        let (u, v) = mercator_unit_unchecked(lon, lat);
        let s = self.scale();
        let ox = f64::from(self.tile.x) * self.size as f64;
        let oy = f64::from(self.tile.y) * self.size as f64;
        (u * s - ox, v * s - oy)
    }

    /// Inverse of [`PixelGrid::to_pixel_coords`].
    pub fn from_pixel_coords(&self, col: f64, row: f64) -> (f64, f64) {
        let s = self.scale();
        let u = (col + f64::from(self.tile.x) * self.size as f64) / s;
        let v = (row + f64::from(self.tile.y) * self.size as f64) / s;
        (unit_to_lon(u), unit_to_lat(v))
    }

    /// Geographic position of a pixel center.
    pub fn pixel_center(&self, row: usize, col: usize) -> (f64, f64) {
        self.from_pixel_coords(col as f64 + 0.5, row as f64 + 0.5)
    }

    /// Geographic width of one pixel in degrees of longitude.
    pub fn pixel_width_deg(&self) -> f64 {
        360.0 / self.scale()
    }
}

/// Pixel `(row, col)` of a point, or `None` when it falls outside the grid tile.
pub fn lonlat_to_pixel(grid: &PixelGrid, lon: f64, lat: f64) -> Option<(usize, usize)> {
    check_lonlat(lon, lat).ok()?;
    let (u, v) = mercator_unit_unchecked(lon, lat);
    let s = grid.scale();
    let total = grid.tile.tiles_per_edge() * grid.size as u64;
    let gc = cell_index(u, total);
    let gr = cell_index(v, total);
    let size = grid.size as u64;
    let ox = u64::from(grid.tile.x) * size;
    let oy = u64::from(grid.tile.y) * size;
    debug_assert!(s > 0.0);
    if gc < ox || gc >= ox + size || gr < oy || gr >= oy + size {
        return None;
    }
    Some(((gr - oy) as usize, (gc - ox) as usize))
}
