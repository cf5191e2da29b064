//! C ABI over the semand core.
//!
//! Every function returns a [`SemandStatus`]. On failure the message is
//! available from [`semand_last_error`] on the same thread. Objects are
//! opaque handles released with their `_free` function; freeing NULL is a
//! no-op. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use semand::model::{load_checkpoint, Image, Network};
use semand::raster::{Channel, ChannelName, FusedTile, SmndImage};
use semand::tilemath::{lonlat_to_tile, PixelGrid, TileKey};
use semand::Error;

/// Result codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SemandStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Domain = 3,
    Data = 4,
    Format = 5,
    Alignment = 6,
    Checkpoint = 7,
    Evaluation = 8,
    Io = 9,
    Panic = 10,
    Other = 11,
}

/// A trained model loaded from a checkpoint.
pub struct SemandModel {
    net: Network<f32>,
}

/// A fused, normalized tile.
pub struct SemandTile {
    tile: FusedTile,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> SemandStatus {
    match e {
        Error::Domain(_) => SemandStatus::Domain,
        Error::Data(_) | Error::Normalization(_) | Error::Json(_) | Error::Csv(_) => SemandStatus::Data,
        Error::Format(_) => SemandStatus::Format,
        Error::Alignment(_) => SemandStatus::Alignment,
        Error::Checkpoint(_) => SemandStatus::Checkpoint,
        Error::Evaluation(_) | Error::UndefinedPosedness => SemandStatus::Evaluation,
        Error::Io(_) => SemandStatus::Io,
        Error::Config(_) => SemandStatus::InvalidArgument,
        _ => SemandStatus::Other,
    }
}

enum Fail {
    Null(&'static str),
    Arg(String),
    Core(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Core(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> SemandStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            SemandStatus::Ok
        }
        Ok(Err(Fail::Null(what))) => {
            set_error(&format!("null pointer: {what}"));
            SemandStatus::NullPointer
        }
        Ok(Err(Fail::Arg(msg))) => {
            set_error(&msg);
            SemandStatus::InvalidArgument
        }
        Ok(Err(Fail::Core(e))) => {
            set_error(&e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic");
            SemandStatus::Panic
        }
    }
}

unsafe fn non_null<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

unsafe fn out_ref<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or(Fail::Null(what))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &'static str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn path<'a>(p: *const c_char) -> Result<&'a Path, Fail> {
    let s = CStr::from_ptr(non_null(p, "path")?).to_str().map_err(|_| Fail::Arg("path is not UTF-8".into()))?;
    Ok(Path::new(s))
}

fn tile_key(z: u8, x: u32, y: u32) -> Result<TileKey, Fail> {
    Ok(TileKey::new(z, x, y)?)
}

/// Message of the last failed call on this thread, or an empty string.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn semand_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Tile containing `(lon, lat)` at `zoom`.
///
/// # Safety
/// `x` and `y` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn semand_lonlat_to_tile(lon: f64, lat: f64, zoom: u8, x: *mut u32, y: *mut u32) -> SemandStatus {
    guard(|| {
        let (x, y) = (out_ref(x, "x")?, out_ref(y, "y")?);
        let t = lonlat_to_tile(lon, lat, zoom)?;
        *x = t.x;
        *y = t.y;
        Ok(())
    })
}

/// Loads a fused tile from an SMND file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn semand_tile_load(
    path_: *const c_char,
    zoom: u8,
    x: u32,
    y: u32,
    out: *mut *mut SemandTile,
) -> SemandStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let key = tile_key(zoom, x, y)?;
        let tile = FusedTile::from_container(key, &SmndImage::load(path(path_)?)?)?;
        *out = Box::into_raw(Box::new(SemandTile { tile }));
        Ok(())
    })
}

/// Builds a tile from channel-major float data. `names` holds
/// `channel_count` channel names (e.g. "RNP", "RCPP") in canonical order.
///
/// # Safety
/// `names` must point to `channel_count` NUL-terminated strings, `data` to
/// `channel_count * size * size` floats, and `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn semand_tile_from_data(
    zoom: u8,
    x: u32,
    y: u32,
    size: usize,
    names: *const *const c_char,
    channel_count: usize,
    data: *const f32,
    out: *mut *mut SemandTile,
) -> SemandStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let grid = PixelGrid::new(tile_key(zoom, x, y)?, size)?;
        let names = slice(names, channel_count, "names")?;
        let plane = size * size;
        let data = slice(data, channel_count * plane, "data")?;
        let mut img = SmndImage { height: size, width: size, names: Vec::new(), data: data.to_vec() };
        for &n in names {
            let s = CStr::from_ptr(non_null(n, "channel name")?).to_str().map_err(|_| Fail::Arg("bad name".into()))?;
            img.names.push(s.to_string());
        }
        let tile = FusedTile::from_container(grid.tile, &img)?;
        *out = Box::into_raw(Box::new(SemandTile { tile }));
        Ok(())
    })
}

/// Channel count of a tile, or 0 for NULL.
///
/// # Safety
/// `tile` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn semand_tile_channel_count(tile: *const SemandTile) -> usize {
    tile.as_ref().map_or(0, |t| t.tile.channels.len())
}

/// Edge length in pixels, or 0 for NULL.
///
/// # Safety
/// `tile` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn semand_tile_size(tile: *const SemandTile) -> usize {
    tile.as_ref().map_or(0, |t| t.tile.size)
}

/// # Safety
/// `tile` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn semand_tile_free(tile: *mut SemandTile) {
    if !tile.is_null() {
        drop(Box::from_raw(tile));
    }
}

/// Loads a model checkpoint.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn semand_model_load(path_: *const c_char, out: *mut *mut SemandModel) -> SemandStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let state = load_checkpoint(path(path_)?, None)?;
        *out = Box::into_raw(Box::new(SemandModel { net: state.net }));
        Ok(())
    })
}

/// Number of input channels the model expects, or 0 for NULL.
///
/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn semand_model_input_channels(model: *const SemandModel) -> usize {
    model.as_ref().map_or(0, |m| m.net.config.input_channels)
}

/// Classifier anomaly score `s¹` in `[0, 1]`. The tile must carry exactly
/// the channels the model was trained on.
///
/// # Safety
/// `model` and `tile` must be live handles; `score` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn semand_model_score(
    model: *const SemandModel,
    tile: *const SemandTile,
    score: *mut f64,
) -> SemandStatus {
    guard(|| {
        let (m, t, score) = (non_null(model, "model")?, non_null(tile, "tile")?, out_ref(score, "score")?);
        let out = m.net.forward(&Image::from_tile(&t.tile))?;
        *score = f64::from(out.s[1]);
        Ok(())
    })
}

/// GradCAM saliency, row-major `size × size` floats in `[0, 1]`, written
/// to `map` (`map_len` must equal `size * size`). `empty` is set to 1 when
/// nothing survived rectification and the map is all zero.
///
/// # Safety
/// `model` and `tile` must be live handles; `map` valid for `map_len`
/// writes; `empty` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn semand_model_localize(
    model: *const SemandModel,
    tile: *const SemandTile,
    map: *mut f32,
    map_len: usize,
    empty: *mut i32,
) -> SemandStatus {
    guard(|| {
        let (m, t) = (non_null(model, "model")?, non_null(tile, "tile")?);
        let empty = out_ref(empty, "empty")?;
        if map.is_null() {
            return Err(Fail::Null("map"));
        }
        if map_len != t.tile.size * t.tile.size {
            return Err(Fail::Arg(format!("map_len {map_len} != {}²", t.tile.size)));
        }
        let sal = semand::scoring::localize(&m.net, &Image::from_tile(&t.tile))?;
        std::slice::from_raw_parts_mut(map, map_len).copy_from_slice(&sal.map);
        *empty = i32::from(sal.empty);
        Ok(())
    })
}

/// # Safety
/// `model` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn semand_model_free(model: *mut SemandModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Posedness `‖augmented − normal‖_F / ‖normal‖_F` of two square rasters
/// of `len` pixels.
///
/// # Safety
/// `normal` and `augmented` must hold `len` floats; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn semand_posedness(
    normal: *const f32,
    augmented: *const f32,
    len: usize,
    out: *mut f64,
) -> SemandStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let size = (len as f64).sqrt().round() as usize;
        if size == 0 || size * size != len {
            return Err(Fail::Arg(format!("len {len} is not a positive square")));
        }
        let grid = PixelGrid::new(TileKey::new(0, 0, 0)?, size)?;
        let a = Channel::from_data(ChannelName::Rcpp, grid, slice(normal, len, "normal")?.to_vec())?;
        let b = Channel::from_data(ChannelName::Rcpp, grid, slice(augmented, len, "augmented")?.to_vec())?;
        *out = semand::augment::posedness(&a, &b)?;
        Ok(())
    })
}

/// Exact AUC: probability an anomalous score exceeds a normal one, ties
/// counted half.
///
/// # Safety
/// `normal` must hold `n_normal` doubles, `anomalous` `n_anomalous`; `out`
/// valid for writes.
#[no_mangle]
pub unsafe extern "C" fn semand_auc(
    normal: *const f64,
    n_normal: usize,
    anomalous: *const f64,
    n_anomalous: usize,
    out: *mut f64,
) -> SemandStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = semand::scoring::auc(slice(normal, n_normal, "normal")?, slice(anomalous, n_anomalous, "anomalous")?)?;
        Ok(())
    })
}
