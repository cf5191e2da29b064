//! JSON Lines manifests and CSV score tables.
//!
//! Paths inside a manifest are stored relative to the manifest's directory
//! when possible, so a run directory can be moved as a whole.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::TileGeometry;
use crate::raster::{FusedTile, SmndImage};
use crate::scoring::{ScoreMethod, Truth};
use crate::tilemath::TileKey;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Normal,
    Augmented,
}

impl Label {
    pub fn truth(self) -> Truth {
        match self {
            Label::Normal => Truth::Normal,
            Label::Augmented => Truth::Anomalous,
        }
    }
}

/// One manifest line. `geometry`, `imagery`, and `sidecar` are optional
/// pointers used by later pipeline stages.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRow {
    pub tile: TileKey,
    pub path: PathBuf,
    pub label: Label,
    pub posedness: Option<f64>,
    pub channels: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geometry: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub imagery: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sidecar: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategy: Option<String>,
}

impl ManifestRow {
    pub fn load_tile(&self) -> Result<FusedTile> {
        FusedTile::from_container(self.tile, &SmndImage::load(&self.path)?)
    }

    pub fn load_geometry(&self) -> Result<TileGeometry> {
        let path = self
            .geometry
            .as_ref()
            .ok_or_else(|| Error::Data(format!("manifest row for {} has no geometry file", self.tile)))?;
        TileGeometry::read_jsonl(BufReader::new(open(path)?))
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

fn base_dir(manifest: &Path) -> PathBuf {
    manifest.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

fn relativize(base: &Path, p: &mut PathBuf) {
    if let Ok(rel) = p.strip_prefix(base) {
        *p = rel.to_path_buf();
    } else if p.is_relative() {
        if let Ok(abs) = std::path::absolute(&*p) {
            *p = abs;
        }
    }
}

/// Reads a manifest, resolving relative paths against its directory.
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRow>> {
    let base = base_dir(path);
    let mut rows = Vec::new();
    for (n, line) in BufReader::new(open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut row: ManifestRow = serde_json::from_str(&line)
            .map_err(|e| Error::Data(format!("{}:{}: {e}", path.display(), n + 1)))?;
        resolve(&base, &mut row.path);
        for p in [&mut row.geometry, &mut row.imagery, &mut row.sidecar].into_iter().flatten() {
            resolve(&base, p);
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn write_manifest(path: &Path, rows: &[ManifestRow]) -> Result<()> {
    let base = base_dir(path);
    let base = std::path::absolute(&base).unwrap_or(base);
    let mut w = BufWriter::new(File::create(path)?);
    for row in rows {
        let mut row = row.clone();
        for p in std::iter::once(&mut row.path)
            .chain([&mut row.geometry, &mut row.imagery, &mut row.sidecar].into_iter().flatten())
        {
            if let Ok(abs) = std::path::absolute(&*p) {
                *p = abs;
            }
            relativize(&base, p);
        }
        serde_json::to_writer(&mut w, &row)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// One line of a scores CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub tile: TileKey,
    /// `normal`, `augmented`, or empty when unknown.
    #[serde(default, deserialize_with = "label_or_empty")]
    pub label: Option<Label>,
    pub method: ScoreMethod,
    pub score: f64,
}

fn label_or_empty<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Option<Label>, D::Error> {
    let s = String::deserialize(d)?;
    match s.trim().to_ascii_lowercase().as_str() {
        "" => Ok(None),
        "normal" => Ok(Some(Label::Normal)),
        "augmented" | "anomalous" | "anomaly" => Ok(Some(Label::Augmented)),
        other => Err(serde::de::Error::custom(format!("unknown label {other:?}"))),
    }
}

pub fn write_scores(path: &Path, rows: &[ScoreRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_scores(path: &Path) -> Result<Vec<ScoreRow>> {
    let mut r = csv::Reader::from_reader(open(path)?);
    r.deserialize().map(|row| row.map_err(|e| Error::Data(format!("{}: {e}", path.display())))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_paths_are_relative_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let row = ManifestRow {
            tile: "18/1/2".parse().unwrap(),
            path: dir.path().join("tiles/18_1_2.smnd"),
            label: Label::Normal,
            posedness: None,
            channels: vec!["RCPP".into()],
            geometry: Some(dir.path().join("geometry/18_1_2.jsonl")),
            imagery: None,
            sidecar: None,
            strategy: None,
        };
        let m = dir.path().join("manifest.jsonl");
        write_manifest(&m, std::slice::from_ref(&row)).unwrap();
        let text = std::fs::read_to_string(&m).unwrap();
        assert!(text.contains("\"path\":\"tiles/18_1_2.smnd\""), "{text}");
        assert!(text.contains("\"posedness\":null"));
        let back = read_manifest(&m).unwrap();
        assert_eq!(back[0].path, row.path);
        assert_eq!(back[0].geometry, row.geometry);
    }

    #[test]
    fn scores_round_trip_and_labels() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        std::fs::write(&p, "tile,label,method,score\n18/1/2,normal,clf,0.1\n18/1/3,anomalous,clf,0.9\n18/1/4,,cosine,0.3\n")
            .unwrap();
        let rows = read_scores(&p).unwrap();
        assert_eq!(rows[1].label, Some(Label::Augmented));
        assert_eq!(rows[2].label, None);
        assert_eq!(rows[2].method, ScoreMethod::Cosine);
        std::fs::write(&p, "tile,label,method,score\n18/1/2,weird,clf,0.1\n").unwrap();
        assert!(read_scores(&p).is_err());
    }
}
