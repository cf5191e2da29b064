//! Model inputs assembled from tile geometry: reference channels, modality
//! subsets, and per-epoch augmented training pairs.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::augment::{augment_tile, tile_epoch_seed, AugmentParams, Strategy};
use crate::error::{Error, Result};
use crate::geometry::{Mode, Polygon, TileGeometry};
use crate::model::{Image, PairSource};
use crate::raster::{
    fuse, normalize, rasterize_crm, rasterize_polygons, rasterize_presence, Channel, ChannelName, FusedTile,
    PresenceSource,
};
use crate::synthgen::SynthTile;
use crate::tilemath::{PixelGrid, TileKey};

/// A reference modality group. RCPP, the augmented channel, is always
/// present.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Modality {
    #[serde(rename = "RNP")]
    Rnp,
    /// Walking and driving count maps.
    #[serde(rename = "M")]
    Mobility,
    /// RGB imagery.
    #[serde(rename = "SI")]
    Imagery,
}

impl Modality {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Rnp => "RNP",
            Self::Mobility => "M",
            Self::Imagery => "SI",
        }
    }

    pub fn channels(self) -> &'static [ChannelName] {
        match self {
            Self::Rnp => &[ChannelName::Rnp],
            Self::Mobility => &[ChannelName::Wcrm, ChannelName::Dcrm],
            Self::Imagery => &[ChannelName::SatR, ChannelName::SatG, ChannelName::SatB],
        }
    }
}

impl FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "RNP" => Ok(Self::Rnp),
            "M" | "MOBILITY" => Ok(Self::Mobility),
            "SI" | "IMAGERY" => Ok(Self::Imagery),
            other => Err(Error::Config(format!("unknown modality {other:?} (expected RNP, M, SI)"))),
        }
    }
}

/// Sorted, de-duplicated set of reference modalities.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ModalitySet(Vec<Modality>);

impl ModalitySet {
    pub fn new(mut m: Vec<Modality>) -> Self {
        m.sort();
        m.dedup();
        Self(m)
    }

    pub fn all() -> Self {
        Self(vec![Modality::Rnp, Modality::Mobility, Modality::Imagery])
    }

    pub fn modalities(&self) -> &[Modality] {
        &self.0
    }

    /// Input channels in canonical order, RCPP included.
    pub fn channel_names(&self) -> Vec<ChannelName> {
        let mut names: Vec<ChannelName> = self.0.iter().flat_map(|m| m.channels().iter().copied()).collect();
        names.push(ChannelName::Rcpp);
        names.sort_by_key(|n| n.order());
        names
    }
}

impl fmt::Display for ModalitySet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<&str> = self.0.iter().map(|m| m.as_str()).collect();
        if parts.is_empty() {
            f.write_str("RCPP")
        } else {
            f.write_str(&parts.join(","))
        }
    }
}

impl FromStr for ModalitySet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() || s.eq_ignore_ascii_case("RCPP") {
            return Ok(Self(Vec::new()));
        }
        Ok(Self::new(s.split(',').map(str::parse).collect::<Result<_>>()?))
    }
}

impl TryFrom<String> for ModalitySet {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ModalitySet> for String {
    fn from(m: ModalitySet) -> String {
        m.to_string()
    }
}

/// Normalized reference channels and casement polygons of one tile.
#[derive(Clone, Debug, PartialEq)]
pub struct TileInputs {
    pub grid: PixelGrid,
    pub polygons: Vec<Polygon>,
    /// SAT_R, SAT_G, SAT_B, WCRM, DCRM, RNP, normalized.
    pub reference: Vec<Channel>,
    /// Normal RCPP raster.
    pub rcpp: Channel,
}

impl TileInputs {
    /// Rasterizes and normalizes every reference channel; imagery is
    /// optional since it comes from a separate source.
    pub fn new(geometry: &TileGeometry, rgb: Option<&[Channel; 3]>, grid: PixelGrid) -> Result<Self> {
        let mut reference = Vec::with_capacity(6);
        for ch in rgb.into_iter().flatten() {
            if ch.grid != grid {
                return Err(Error::Alignment(format!("imagery for {} is on a different grid", grid.tile)));
            }
            reference.push(normalize(ch)?);
        }
        reference.push(normalize(&rasterize_crm(&geometry.trajectories, Mode::Walk, grid))?);
        reference.push(normalize(&rasterize_crm(&geometry.trajectories, Mode::Drive, grid))?);
        let segs: Vec<_> = geometry.roads.navigable_segments().collect();
        reference.push(normalize(&rasterize_presence(PresenceSource::Segments(&segs), grid))?);
        let rcpp = rasterize_polygons(&geometry.polygons, grid);
        Ok(Self { grid, polygons: geometry.polygons.clone(), reference, rcpp })
    }

    /// Uses the grid the imagery was rendered on.
    pub fn from_synth(t: &SynthTile) -> Result<Self> {
        Self::new(&t.geometry, Some(&t.rgb), t.rgb[0].grid)
    }

    /// Builds inputs from a stored fused tile; RCPP is re-rasterized from
    /// the polygons so it matches what augmentation produces.
    pub fn from_fused(fused: &FusedTile, polygons: Vec<Polygon>) -> Result<Self> {
        let grid = fused.grid();
        let reference: Vec<Channel> = fused.channels.iter().filter(|c| c.name != ChannelName::Rcpp).cloned().collect();
        let rcpp = rasterize_polygons(&polygons, grid);
        Ok(Self { grid, polygons, reference, rcpp })
    }

    pub fn tile(&self) -> TileKey {
        self.grid.tile
    }

    /// Fuses the selected reference channels with the given RCPP raster.
    pub fn fused(&self, rcpp: &Channel, modalities: &ModalitySet) -> Result<FusedTile> {
        if rcpp.name != ChannelName::Rcpp || rcpp.grid != self.grid {
            return Err(Error::Alignment(format!("RCPP raster does not belong to {}", self.grid.tile)));
        }
        let mut chans = Vec::new();
        for name in modalities.channel_names() {
            if name == ChannelName::Rcpp {
                chans.push(rcpp.clone());
                continue;
            }
            let ch = self.reference.iter().find(|c| c.name == name);
            chans.push(ch.cloned().ok_or_else(|| Error::Alignment(format!("tile {} lacks channel {name}", self.grid.tile)))?);
        }
        fuse(chans)
    }

    pub fn image(&self, rcpp: &Channel, modalities: &ModalitySet) -> Result<Image<f32>> {
        Ok(Image::from_tile(&self.fused(rcpp, modalities)?))
    }
}

/// Normal tiles paired with a fresh augmentation each epoch.
pub struct AugmentedPairs<'a> {
    pub tiles: &'a [TileInputs],
    pub modalities: ModalitySet,
    pub strategy: Strategy,
    pub params: AugmentParams,
    pub seed: u64,
}

impl PairSource for AugmentedPairs<'_> {
    fn len(&self) -> usize {
        self.tiles.len()
    }

    fn pair(&self, index: usize, epoch: usize) -> Result<(Image<f32>, Image<f32>)> {
        let t = &self.tiles[index];
        let seed = tile_epoch_seed(self.seed, t.tile(), epoch as u64);
        let rec = augment_tile(&t.polygons, t.grid, self.strategy, &self.params, seed)?;
        Ok((t.image(&t.rcpp, &self.modalities)?, t.image(&rec.augmented_rcpp, &self.modalities)?))
    }
}
