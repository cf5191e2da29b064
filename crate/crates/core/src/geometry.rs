//! Vector-domain primitives: casement polygons, road graphs, GPS trajectories.
//!
//! Transforms work in a local planar frame where one degree of longitude and
//! one degree of latitude are treated as equal units.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tilemath::{tile_bounds, TileBounds, TileKey};

/// `[lon, lat]` in decimal degrees.
pub type LonLat = [f64; 2];

const AREA_EPS: f64 = 1e-24;

/// A simple closed ring. The first point is repeated at the end.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    pub id: String,
    pub ring: Vec<LonLat>,
}

impl Polygon {
    /// Builds a validated polygon. The ring is closed if it is not already.
    pub fn new(id: impl Into<String>, mut ring: Vec<LonLat>) -> Result<Self> {
        if ring.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
            return Err(Error::DegenerateGeometry("non-finite coordinate".into()));
        }
        if ring.first() != ring.last() {
            if let Some(&first) = ring.first() {
                ring.push(first);
            }
        }
        if ring.len() < 4 {
            return Err(Error::DegenerateGeometry(format!(
                "ring needs at least 4 points, got {}",
                ring.len()
            )));
        }
        let poly = Self { id: id.into(), ring };
        if poly.signed_area().abs() <= AREA_EPS {
            return Err(Error::DegenerateGeometry(format!("polygon {} has zero area", poly.id)));
        }
        if poly.self_intersects() {
            return Err(Error::DegenerateGeometry(format!("polygon {} self-intersects", poly.id)));
        }
        Ok(poly)
    }

    /// Axis-aligned rectangle, counter-clockwise.
    pub fn rect(id: impl Into<String>, min: LonLat, max: LonLat) -> Result<Self> {
        Self::new(
            id,
            vec![[min[0], min[1]], [max[0], min[1]], [max[0], max[1]], [min[0], max[1]]],
        )
    }

    pub(crate) fn from_ring_unchecked(id: impl Into<String>, ring: Vec<LonLat>) -> Self {
        Self { id: id.into(), ring }
    }

    /// Distinct vertices (ring without the closing duplicate).
    pub fn vertices(&self) -> &[LonLat] {
        &self.ring[..self.ring.len().saturating_sub(1)]
    }

    /// Shoelace area, positive for counter-clockwise rings.
    pub fn signed_area(&self) -> f64 {
        signed_area(self.vertices())
    }

    pub fn area(&self) -> f64 {
        self.signed_area().abs()
    }

    pub fn bbox(&self) -> (LonLat, LonLat) {
        bbox(self.vertices())
    }

    fn self_intersects(&self) -> bool {
        let v = self.vertices();
        let n = v.len();
        for i in 0..n {
            let (a, b) = (v[i], v[(i + 1) % n]);
            for j in (i + 1)..n {
                // adjacent edges share an endpoint
                if j == i + 1 || (i == 0 && j == n - 1) {
                    continue;
                }
                let (c, d) = (v[j], v[(j + 1) % n]);
                if segments_cross(a, b, c, d) {
                    return true;
                }
            }
        }
        false
    }

    /// Even-odd point-in-polygon test.
    pub fn contains(&self, p: LonLat) -> bool {
        point_in_ring(self.vertices(), p)
    }
}

pub(crate) fn signed_area(v: &[LonLat]) -> f64 {
    if v.len() < 3 {
        return 0.0;
    }
    let o = v[0];
    let mut acc = 0.0;
    for i in 1..v.len() - 1 {
        let a = [v[i][0] - o[0], v[i][1] - o[1]];
        let b = [v[i + 1][0] - o[0], v[i + 1][1] - o[1]];
        acc += a[0] * b[1] - a[1] * b[0];
    }
    0.5 * acc
}

pub(crate) fn bbox(v: &[LonLat]) -> (LonLat, LonLat) {
    let mut min = [f64::INFINITY; 2];
    let mut max = [f64::NEG_INFINITY; 2];
    for p in v {
        min[0] = min[0].min(p[0]);
        min[1] = min[1].min(p[1]);
        max[0] = max[0].max(p[0]);
        max[1] = max[1].max(p[1]);
    }
    (min, max)
}

pub(crate) fn point_in_ring(v: &[LonLat], p: LonLat) -> bool {
    let mut inside = false;
    let n = v.len();
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (v[i], v[j]);
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
            if p[0] < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

fn orient(a: LonLat, b: LonLat, c: LonLat) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

/// Proper or touching intersection between two closed segments.
fn segments_cross(a: LonLat, b: LonLat, c: LonLat, d: LonLat) -> bool {
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    let on = |p: LonLat, q: LonLat, r: LonLat| {
        r[0] >= p[0].min(q[0]) && r[0] <= p[0].max(q[0]) && r[1] >= p[1].min(q[1]) && r[1] <= p[1].max(q[1])
    };
    (d1 == 0.0 && on(c, d, a))
        || (d2 == 0.0 && on(c, d, b))
        || (d3 == 0.0 && on(a, b, c))
        || (d4 == 0.0 && on(a, b, d))
}

/// Area-weighted centroid of the ring.
pub fn centroid(p: &Polygon) -> Result<LonLat> {
    let v = p.vertices();
    let o = v[0];
    let mut a2 = 0.0;
    let mut cx = 0.0;
    let mut cy = 0.0;
    for i in 0..v.len() {
        let (x0, y0) = (v[i][0] - o[0], v[i][1] - o[1]);
        let j = (i + 1) % v.len();
        let (x1, y1) = (v[j][0] - o[0], v[j][1] - o[1]);
        let cross = x0 * y1 - x1 * y0;
        a2 += cross;
        cx += (x0 + x1) * cross;
        cy += (y0 + y1) * cross;
    }
    if a2.abs() <= 2.0 * AREA_EPS {
        return Err(Error::DegenerateGeometry(format!("polygon {} has zero area", p.id)));
    }
    Ok([o[0] + cx / (3.0 * a2), o[1] + cy / (3.0 * a2)])
}

/// One affine transform applied about the polygon centroid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum AffineAction {
    Rotate { theta: f64 },
    Translate { dx: f64, dy: f64 },
    Scale { bx: f64, by: f64 },
}

pub fn apply_affine(p: &Polygon, action: AffineAction) -> Result<Polygon> {
    let ring: Vec<LonLat> = match action {
        AffineAction::Translate { dx, dy } => {
            if !dx.is_finite() || !dy.is_finite() {
                return Err(Error::DegenerateGeometry("non-finite translation".into()));
            }
            p.ring.iter().map(|v| [v[0] + dx, v[1] + dy]).collect()
        }
        AffineAction::Rotate { theta } => {
            if !theta.is_finite() {
                return Err(Error::DegenerateGeometry("non-finite rotation".into()));
            }
            let c = centroid(p)?;
            let (s, co) = theta.sin_cos();
            p.ring
                .iter()
                .map(|v| {
                    let (x, y) = (v[0] - c[0], v[1] - c[1]);
                    [c[0] + co * x - s * y, c[1] + s * x + co * y]
                })
                .collect()
        }
        AffineAction::Scale { bx, by } => {
            if !bx.is_finite() || !by.is_finite() || bx == 0.0 || by == 0.0 {
                return Err(Error::DegenerateGeometry(format!("invalid scale ({bx}, {by})")));
            }
            let c = centroid(p)?;
            p.ring.iter().map(|v| [c[0] + bx * (v[0] - c[0]), c[1] + by * (v[1] - c[1])]).collect()
        }
    };
    Ok(Polygon::from_ring_unchecked(p.id.clone(), ring))
}

#[derive(Clone, Copy)]
enum Side {
    West(f64),
    East(f64),
    South(f64),
    North(f64),
}

impl Side {
    fn inside(self, p: LonLat) -> bool {
        match self {
            Side::West(x) => p[0] >= x,
            Side::East(x) => p[0] <= x,
            Side::South(y) => p[1] >= y,
            Side::North(y) => p[1] <= y,
        }
    }

    fn intersect(self, a: LonLat, b: LonLat) -> LonLat {
        match self {
            Side::West(x) | Side::East(x) => {
                let t = (x - a[0]) / (b[0] - a[0]);
                [x, a[1] + t * (b[1] - a[1])]
            }
            Side::South(y) | Side::North(y) => {
                let t = (y - a[1]) / (b[1] - a[1]);
                [a[0] + t * (b[0] - a[0]), y]
            }
        }
    }
}

fn sutherland_hodgman(v: &[LonLat], b: &TileBounds) -> Vec<LonLat> {
    let sides = [Side::West(b.lon_min), Side::East(b.lon_max), Side::South(b.lat_min), Side::North(b.lat_max)];
    let mut out = v.to_vec();
    for side in sides {
        if out.is_empty() {
            break;
        }
        let input = std::mem::take(&mut out);
        let mut prev = *input.last().unwrap();
        for &cur in &input {
            match (side.inside(prev), side.inside(cur)) {
                (true, true) => out.push(cur),
                (true, false) => out.push(side.intersect(prev, cur)),
                (false, true) => {
                    out.push(side.intersect(prev, cur));
                    out.push(cur);
                }
                (false, false) => {}
            }
            prev = cur;
        }
    }
    out.dedup();
    while out.len() > 1 && out.first() == out.last() {
        out.pop();
    }
    out
}

/// Which box side line a point lies on, if any.
fn on_side(p: LonLat, b: &TileBounds) -> [bool; 4] {
    [p[0] == b.lon_min, p[0] == b.lon_max, p[1] == b.lat_min, p[1] == b.lat_max]
}

/// Splits the zero-width bridges Sutherland-Hodgman leaves along the clip
/// box when a concave polygon leaves and re-enters it. Boundary edges are
/// subdivided at every boundary vertex, opposite coincident edges cancel, and
/// the remaining directed edges are traced back into rings.
fn split_bridges(v: Vec<LonLat>, b: &TileBounds) -> Vec<Vec<LonLat>> {
    let n = v.len();
    if n < 3 {
        return Vec::new();
    }
    let boundary_pts: Vec<LonLat> = v.iter().copied().filter(|p| on_side(*p, b).iter().any(|&s| s)).collect();
    let mut edges: Vec<(LonLat, LonLat)> = Vec::with_capacity(n);
    for i in 0..n {
        let (a, c) = (v[i], v[(i + 1) % n]);
        let sa = on_side(a, b);
        let sc = on_side(c, b);
        let shared = (0..4).find(|&k| sa[k] && sc[k]);
        match shared {
            Some(k) => {
                let axis = if k < 2 { 1 } else { 0 };
                let (lo, hi) = (a[axis].min(c[axis]), a[axis].max(c[axis]));
                let mut cuts: Vec<LonLat> = boundary_pts
                    .iter()
                    .copied()
                    .filter(|p| on_side(*p, b)[k] && p[axis] > lo && p[axis] < hi)
                    .collect();
                let asc = c[axis] > a[axis];
                cuts.sort_by(|p, q| {
                    let o = p[axis].total_cmp(&q[axis]);
                    if asc {
                        o
                    } else {
                        o.reverse()
                    }
                });
                cuts.dedup();
                let mut prev = a;
                for p in cuts {
                    edges.push((prev, p));
                    prev = p;
                }
                edges.push((prev, c));
            }
            None => edges.push((a, c)),
        }
    }
    let mut alive = vec![true; edges.len()];
    for i in 0..edges.len() {
        if !alive[i] {
            continue;
        }
        if let Some(j) = (0..edges.len()).find(|&j| j != i && alive[j] && edges[j].0 == edges[i].1 && edges[j].1 == edges[i].0)
        {
            alive[i] = false;
            alive[j] = false;
        }
    }
    let key = |p: LonLat| (p[0].to_bits(), p[1].to_bits());
    let mut outgoing: HashMap<(u64, u64), Vec<usize>> = HashMap::new();
    for (i, e) in edges.iter().enumerate() {
        if alive[i] {
            outgoing.entry(key(e.0)).or_default().push(i);
        }
    }
    let mut rings = Vec::new();
    for start in 0..edges.len() {
        if !alive[start] {
            continue;
        }
        let mut ring = Vec::new();
        let mut cur = start;
        loop {
            alive[cur] = false;
            ring.push(edges[cur].0);
            let next_pt = edges[cur].1;
            if next_pt == edges[start].0 {
                break;
            }
            match outgoing.get(&key(next_pt)).and_then(|c| c.iter().copied().find(|&i| alive[i])) {
                Some(i) => cur = i,
                None => break,
            }
        }
        if ring.len() >= 3 && signed_area(&ring).abs() > AREA_EPS {
            rings.push(ring);
        }
    }
    rings
}

/// Intersection of a polygon with the tile's extent.
pub fn clip_to_tile(p: &Polygon, t: TileKey) -> Vec<Polygon> {
    clip_to_bounds(p, &tile_bounds(t))
}

pub fn clip_to_bounds(p: &Polygon, b: &TileBounds) -> Vec<Polygon> {
    let (min, max) = p.bbox();
    if max[0] < b.lon_min || min[0] > b.lon_max || max[1] < b.lat_min || min[1] > b.lat_max {
        return Vec::new();
    }
    if min[0] >= b.lon_min && max[0] <= b.lon_max && min[1] >= b.lat_min && max[1] <= b.lat_max {
        return vec![p.clone()];
    }
    let clipped = sutherland_hodgman(p.vertices(), b);
    let rings = split_bridges(clipped, b);
    let many = rings.len() > 1;
    rings
        .into_iter()
        .enumerate()
        .map(|(k, mut ring)| {
            ring.push(ring[0]);
            let id = if many { format!("{}#{k}", p.id) } else { p.id.clone() };
            Polygon::from_ring_unchecked(id, ring)
        })
        .collect()
}

/// Navigable road network for a region.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RoadGraph {
    pub vertices: Vec<LonLat>,
    pub edges: Vec<RoadEdge>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoadEdge {
    pub from: usize,
    pub to: usize,
    pub navigable: bool,
}

impl RoadGraph {
    pub fn new(vertices: Vec<LonLat>, edges: Vec<RoadEdge>) -> Result<Self> {
        for e in &edges {
            if e.from >= vertices.len() || e.to >= vertices.len() {
                return Err(Error::Data(format!("edge ({}, {}) references missing vertex", e.from, e.to)));
            }
            if vertices[e.from] == vertices[e.to] {
                return Err(Error::DegenerateGeometry(format!("zero-length edge ({}, {})", e.from, e.to)));
            }
        }
        Ok(Self { vertices, edges })
    }

    /// Builds a graph from segments, merging bitwise-identical endpoints.
    pub fn from_segments(segments: &[(LonLat, LonLat)]) -> Result<Self> {
        let mut index: HashMap<(u64, u64), usize> = HashMap::new();
        let mut vertices = Vec::new();
        let mut id_of = |p: LonLat, vertices: &mut Vec<LonLat>| {
            *index.entry((p[0].to_bits(), p[1].to_bits())).or_insert_with(|| {
                vertices.push(p);
                vertices.len() - 1
            })
        };
        let mut edges = Vec::with_capacity(segments.len());
        for &(a, b) in segments {
            let from = id_of(a, &mut vertices);
            let to = id_of(b, &mut vertices);
            edges.push(RoadEdge { from, to, navigable: true });
        }
        Self::new(vertices, edges)
    }

    /// Endpoints of every navigable edge.
    pub fn navigable_segments(&self) -> impl Iterator<Item = (LonLat, LonLat)> + '_ {
        self.edges.iter().filter(|e| e.navigable).map(|e| (self.vertices[e.from], self.vertices[e.to]))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Walk,
    Drive,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpsRecord {
    pub lon: f64,
    pub lat: f64,
    pub t: f64,
    pub mode: Mode,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub id: String,
    pub records: Vec<GpsRecord>,
}

impl Trajectory {
    pub fn new(id: impl Into<String>, records: Vec<GpsRecord>) -> Result<Self> {
        let id = id.into();
        if records.windows(2).any(|w| w[1].t <= w[0].t) {
            return Err(Error::Data(format!("trajectory {id} timestamps not strictly increasing")));
        }
        Ok(Self { id, records })
    }
}

/// Geometry of one tile as read from or written to a geometry file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TileGeometry {
    pub polygons: Vec<Polygon>,
    pub roads: RoadGraph,
    pub trajectories: Vec<Trajectory>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeometryKind {
    Rcp,
    RoadEdge,
    Trajectory,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModeField {
    One(Mode),
    PerRecord(Vec<Mode>),
}

/// One line of a geometry JSON Lines file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryRecord {
    pub id: String,
    pub kind: GeometryKind,
    pub coords: Vec<LonLat>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub times: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<ModeField>,
}

impl TileGeometry {
    pub fn to_records(&self) -> Vec<GeometryRecord> {
        let mut out = Vec::new();
        for p in &self.polygons {
            out.push(GeometryRecord {
                id: p.id.clone(),
                kind: GeometryKind::Rcp,
                coords: p.ring.clone(),
                times: None,
                mode: None,
            });
        }
        for (k, (a, b)) in self.roads.navigable_segments().enumerate() {
            out.push(GeometryRecord {
                id: format!("edge{k}"),
                kind: GeometryKind::RoadEdge,
                coords: vec![a, b],
                times: None,
                mode: None,
            });
        }
        for t in &self.trajectories {
            let modes: Vec<Mode> = t.records.iter().map(|r| r.mode).collect();
            let mode = match modes.first() {
                Some(&m) if modes.iter().all(|&x| x == m) => ModeField::One(m),
                _ => ModeField::PerRecord(modes),
            };
            out.push(GeometryRecord {
                id: t.id.clone(),
                kind: GeometryKind::Trajectory,
                coords: t.records.iter().map(|r| [r.lon, r.lat]).collect(),
                times: Some(t.records.iter().map(|r| r.t).collect()),
                mode: Some(mode),
            });
        }
        out
    }

    pub fn from_records(records: Vec<GeometryRecord>) -> Result<Self> {
        let mut geom = TileGeometry::default();
        let mut segments = Vec::new();
        for r in records {
            match r.kind {
                GeometryKind::Rcp => geom.polygons.push(Polygon::new(r.id, r.coords)?),
                GeometryKind::RoadEdge => {
                    if r.coords.len() < 2 {
                        return Err(Error::Data(format!("road edge {} needs two points", r.id)));
                    }
                    segments.extend(r.coords.windows(2).map(|w| (w[0], w[1])));
                }
                GeometryKind::Trajectory => {
                    let times = r
                        .times
                        .ok_or_else(|| Error::Data(format!("trajectory {} lacks times", r.id)))?;
                    if times.len() != r.coords.len() {
                        return Err(Error::Data(format!("trajectory {} times/coords length mismatch", r.id)));
                    }
                    let modes = match r.mode {
                        Some(ModeField::One(m)) => vec![m; r.coords.len()],
                        Some(ModeField::PerRecord(ms)) if ms.len() == r.coords.len() => ms,
                        _ => return Err(Error::Data(format!("trajectory {} has missing or bad mode", r.id))),
                    };
                    let records = r
                        .coords
                        .iter()
                        .zip(times)
                        .zip(modes)
                        .map(|((c, t), mode)| GpsRecord { lon: c[0], lat: c[1], t, mode })
                        .collect();
                    geom.trajectories.push(Trajectory::new(r.id, records)?);
                }
            }
        }
        geom.roads = RoadGraph::from_segments(&segments)?;
        Ok(geom)
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for r in self.to_records() {
            serde_json::to_writer(&mut w, &r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self> {
        let mut records = Vec::new();
        for line in r.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            records.push(serde_json::from_str(&line)?);
        }
        Self::from_records(records)
    }
}
