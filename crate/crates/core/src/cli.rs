//! Command-line surface. Every subcommand that writes files also writes a
//! resolved-config snapshot next to them.

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use serde_json::json;

use semand::augment::{augment_tile, tile_epoch_seed, ActionKind, AugmentParams, Strategy};
use semand::dataset::{AugmentedPairs, ModalitySet, TileInputs};
use semand::experiment::{run_matrix, MatrixSpec};
use semand::geometry::TileGeometry;
use semand::manifest::{read_manifest, read_scores, write_manifest, write_scores, Label, ManifestRow, ScoreRow};
use semand::model::{load_checkpoint, save_checkpoint, train, Image, ModelConfig, ModelState, Network, TrainConfig};
use semand::raster::{load_rgb, ChannelName, SmndImage};
use semand::scoring::{auc, fit_prototype, health_histogram, localize, Prototype, PrototypeScorer, ScoreMethod};
use semand::synthgen::{generate_world, WorldConfig};
use semand::tilemath::{PixelGrid, TileKey, DEFAULT_GRID_SIZE};
use semand::{Error, Result};

pub const SNAPSHOT: &str = "resolved_config.json";
pub const CHECKPOINT: &str = "checkpoint.smck";
pub const PROTOTYPE: &str = "prototype.json";

#[derive(Parser, Debug)]
#[command(name = "semand", version, about = "Self-supervised anomaly detection for map tiles")]
pub struct Cli {
    /// Run seed; overrides seeds in config files.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory or file, depending on the subcommand.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic world: geometry, imagery, fused tiles, manifest.
    Gen(GenArgs),
    /// Rasterize geometry (and optional imagery) into fused tiles.
    Rasterize(RasterizeArgs),
    /// Write augmented counterparts of every normal tile.
    Augment(AugmentArgs),
    /// Train a model on the normal tiles of a manifest.
    Train(TrainArgs),
    /// Score the tiles of a manifest.
    Score(ScoreArgs),
    /// AUC of a labeled score table.
    Eval(EvalArgs),
    /// GradCAM saliency for one tile.
    Localize(LocalizeArgs),
    /// Score histogram for data-health monitoring.
    HealthHist(HealthArgs),
    /// Run an ablation matrix.
    Matrix(MatrixArgs),
}

#[derive(Args, Debug)]
pub struct GenArgs {
    /// World config JSON; defaults apply to missing keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub grid: Option<usize>,
}

#[derive(Args, Debug)]
pub struct RasterizeArgs {
    /// Manifest whose rows name geometry (and imagery) files.
    #[arg(long, conflicts_with_all = ["geometry", "tile"])]
    pub manifest: Option<PathBuf>,
    /// A single geometry JSONL file; needs --tile.
    #[arg(long, requires = "tile")]
    pub geometry: Option<PathBuf>,
    #[arg(long, requires = "geometry")]
    pub tile: Option<TileKey>,
    /// 3-channel SMND RGB raster for --geometry.
    #[arg(long, requires = "geometry")]
    pub imagery: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_GRID_SIZE)]
    pub grid: usize,
    /// Channels to write, comma separated (default: all available).
    #[arg(long, value_delimiter = ',')]
    pub channels: Vec<ChannelName>,
}

#[derive(Args, Debug)]
pub struct AugmentArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value_t = 0.10)]
    pub rho: f64,
    #[arg(long, default_value = "rpa")]
    pub strategy: Strategy,
    /// Allowed polygon actions, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub actions: Vec<ActionKind>,
    #[arg(long)]
    pub max_attempts: Option<usize>,
}

/// File form of the training configuration.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainRunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub augment: AugmentParams,
    pub modalities: ModalitySetField,
    pub strategy: StrategyField,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ModalitySetField(pub ModalitySet);

impl Default for ModalitySetField {
    fn default() -> Self {
        Self(ModalitySet::all())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StrategyField(pub Strategy);

impl Default for StrategyField {
    fn default() -> Self {
        Self(Strategy::Rpa)
    }
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Reference modalities, e.g. RNP or RNP,M,SI. RCPP is always used.
    #[arg(long)]
    pub modalities: Option<ModalitySet>,
    #[arg(long)]
    pub strategy: Option<Strategy>,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub actions: Vec<ActionKind>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Loss weights as bc,cl,if.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    pub weights: Vec<f64>,
}

#[derive(Args, Debug)]
pub struct ScoreArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    /// One or more of clf, cosine, euclid, maha, gauss.
    #[arg(long, value_delimiter = ',', default_value = "clf")]
    pub method: Vec<ScoreMethod>,
    /// Prototype JSON (default: next to the checkpoint).
    #[arg(long)]
    pub prototype: Option<PathBuf>,
    /// Modalities the model was trained on (default: from the run's
    /// resolved config).
    #[arg(long)]
    pub modalities: Option<ModalitySet>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long)]
    pub method: Option<ScoreMethod>,
}

#[derive(Args, Debug)]
pub struct LocalizeArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub tile: TileKey,
    /// Manifest to find the tile in.
    #[arg(long, required_unless_present = "input")]
    pub manifest: Option<PathBuf>,
    /// Fused tile SMND file, instead of a manifest lookup.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Which manifest row to use when a tile has several.
    #[arg(long, default_value = "augmented")]
    pub label: LabelArg,
    #[arg(long)]
    pub modalities: Option<ModalitySet>,
}

#[derive(Clone, Copy, Debug, clap::ValueEnum)]
pub enum LabelArg {
    Normal,
    Augmented,
}

#[derive(Args, Debug)]
pub struct HealthArgs {
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub bins: usize,
    #[arg(long, default_value_t = 0.6)]
    pub threshold: f64,
    #[arg(long)]
    pub method: Option<ScoreMethod>,
}

#[derive(Args, Debug)]
pub struct MatrixArgs {
    #[arg(long)]
    pub spec: PathBuf,
}

fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn out_dir(cli: &Cli) -> Result<PathBuf> {
    let dir = cli.out.clone().ok_or_else(|| Error::Config("--out is required for this subcommand".into()))?;
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn out_file(cli: &Cli) -> Result<PathBuf> {
    let file = cli.out.clone().ok_or_else(|| Error::Config("--out is required for this subcommand".into()))?;
    if let Some(parent) = file.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    Ok(file)
}

/// Snapshot path for a file output: `scores.csv` → `scores.config.json`.
fn snapshot_for(file: &Path) -> PathBuf {
    file.with_extension("config.json")
}

fn snapshot(cli: &Cli, path: &Path, command: &str, config: serde_json::Value) -> Result<()> {
    write_json(
        path,
        &json!({
            "command": command,
            "version": env!("CARGO_PKG_VERSION"),
            "seed": cli.seed,
            "config": config,
        }),
    )
}

pub fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be positive".into()));
        }
        // a second call fails when a pool already exists; the first wins
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match &cli.command {
        Command::Gen(a) => gen(&cli, a),
        Command::Rasterize(a) => rasterize(&cli, a),
        Command::Augment(a) => augment(&cli, a),
        Command::Train(a) => train_cmd(&cli, a),
        Command::Score(a) => score(&cli, a),
        Command::Eval(a) => eval(&cli, a),
        Command::Localize(a) => localize_cmd(&cli, a),
        Command::HealthHist(a) => health(&cli, a),
        Command::Matrix(a) => matrix(&cli, a),
    }
}

fn gen(cli: &Cli, a: &GenArgs) -> Result<()> {
    let mut cfg: WorldConfig = match &a.config {
        Some(p) => load_json(p)?,
        None => WorldConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(g) = a.grid {
        cfg.grid_size = g;
    }
    cfg.validate()?;
    let dir = out_dir(cli)?;
    for sub in ["geometry", "imagery", "tiles"] {
        fs::create_dir_all(dir.join(sub))?;
    }
    let world = generate_world(&cfg)?;
    let rows: Vec<ManifestRow> = world
        .par_iter()
        .map(|t| {
            let stem = t.tile.file_stem();
            let geometry = dir.join("geometry").join(format!("{stem}.jsonl"));
            t.geometry.write_jsonl(std::io::BufWriter::new(fs::File::create(&geometry)?))?;
            let imagery = dir.join("imagery").join(format!("{stem}.smnd"));
            SmndImage {
                height: cfg.grid_size,
                width: cfg.grid_size,
                names: t.rgb.iter().map(|c| c.name.as_str().to_string()).collect(),
                data: t.rgb.iter().flat_map(|c| c.data.iter().copied()).collect(),
            }
            .save(&imagery)?;
            let inputs = TileInputs::from_synth(t)?;
            let fused = inputs.fused(&inputs.rcpp, &ModalitySet::all())?;
            let path = dir.join("tiles").join(format!("{stem}.smnd"));
            fused.to_container().save(&path)?;
            Ok(ManifestRow {
                tile: t.tile,
                path,
                label: Label::Normal,
                posedness: None,
                channels: fused.names().iter().map(|n| n.as_str().to_string()).collect(),
                geometry: Some(geometry),
                imagery: Some(imagery),
                sidecar: None,
                strategy: None,
            })
        })
        .collect::<Result<_>>()?;
    write_manifest(&dir.join("manifest.jsonl"), &rows)?;
    snapshot(cli, &dir.join(SNAPSHOT), "gen", serde_json::to_value(&cfg)?)?;
    println!("tiles={}", rows.len());
    Ok(())
}

fn read_geometry(path: &Path) -> Result<TileGeometry> {
    let f = fs::File::open(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    TileGeometry::read_jsonl(BufReader::new(f))
}

fn rasterize(cli: &Cli, a: &RasterizeArgs) -> Result<()> {
    let jobs: Vec<(TileKey, PathBuf, Option<PathBuf>)> = match (&a.manifest, &a.geometry, a.tile) {
        (Some(m), _, _) => read_manifest(m)?
            .into_iter()
            .filter(|r| r.label == Label::Normal)
            .map(|r| {
                let g = r.geometry.clone().ok_or_else(|| Error::Data(format!("row {} has no geometry", r.tile)))?;
                Ok((r.tile, g, r.imagery.clone()))
            })
            .collect::<Result<_>>()?,
        (None, Some(g), Some(t)) => vec![(t, g.clone(), a.imagery.clone())],
        _ => return Err(Error::Config("rasterize needs --manifest or --geometry with --tile".into())),
    };
    let dir = out_dir(cli)?;
    fs::create_dir_all(dir.join("tiles"))?;
    let rows: Vec<ManifestRow> = jobs
        .par_iter()
        .map(|(tile, geom_path, img_path)| {
            let grid = PixelGrid::new(*tile, a.grid)?;
            let geometry = read_geometry(geom_path)?;
            let rgb = img_path.as_deref().map(|p| load_rgb(p, grid)).transpose()?;
            let inputs = TileInputs::new(&geometry, rgb.as_ref(), grid)?;
            let mut channels = inputs.reference.clone();
            channels.push(inputs.rcpp.clone());
            let fused = semand::raster::fuse(channels)?;
            let fused = if a.channels.is_empty() { fused } else { fused.select(&a.channels)? };
            let path = dir.join("tiles").join(format!("{}.smnd", tile.file_stem()));
            fused.to_container().save(&path)?;
            Ok(ManifestRow {
                tile: *tile,
                path,
                label: Label::Normal,
                posedness: None,
                channels: fused.names().iter().map(|n| n.as_str().to_string()).collect(),
                geometry: Some(geom_path.clone()),
                imagery: img_path.clone(),
                sidecar: None,
                strategy: None,
            })
        })
        .collect::<Result<_>>()?;
    write_manifest(&dir.join("manifest.jsonl"), &rows)?;
    snapshot(
        cli,
        &dir.join(SNAPSHOT),
        "rasterize",
        json!({ "grid": a.grid, "channels": a.channels.iter().map(|c| c.as_str()).collect::<Vec<_>>(), "tiles": rows.len() }),
    )?;
    println!("tiles={}", rows.len());
    Ok(())
}

fn augment(cli: &Cli, a: &AugmentArgs) -> Result<()> {
    let mut params = AugmentParams { rho: a.rho, ..AugmentParams::default() };
    if !a.actions.is_empty() {
        params.actions = a.actions.clone();
    }
    if let Some(n) = a.max_attempts {
        params.max_attempts = n;
    }
    params.validate()?;
    let seed = cli.seed.unwrap_or(0);
    let rows = read_manifest(&a.manifest)?;
    let dir = out_dir(cli)?;
    fs::create_dir_all(dir.join("tiles"))?;
    fs::create_dir_all(dir.join("sidecars"))?;
    let normals: Vec<&ManifestRow> = rows.iter().filter(|r| r.label == Label::Normal).collect();
    let results: Vec<Result<ManifestRow>> = normals
        .par_iter()
        .map(|row| {
            let fused = row.load_tile()?;
            let polys = row.load_geometry()?.polygons;
            let rec = augment_tile(&polys, fused.grid(), a.strategy, &params, tile_epoch_seed(seed, row.tile, 0))?;
            let stem = row.tile.file_stem();
            let path = dir.join("tiles").join(format!("{stem}.smnd"));
            fused.with_channel(rec.augmented_rcpp.clone())?.to_container().save(&path)?;
            let sidecar = dir.join("sidecars").join(format!("{stem}.json"));
            write_json(&sidecar, &rec.sidecar())?;
            Ok(ManifestRow {
                path,
                label: Label::Augmented,
                posedness: Some(rec.posedness),
                sidecar: Some(sidecar),
                strategy: Some(a.strategy.to_string()),
                ..(*row).clone()
            })
        })
        .collect();
    let mut out: Vec<ManifestRow> = normals.iter().map(|r| (*r).clone()).collect();
    let mut skipped = 0usize;
    for (row, res) in normals.iter().zip(results) {
        match res {
            Ok(r) => out.push(r),
            Err(e @ (Error::EmptyTile | Error::UndefinedPosedness | Error::RejectionExhausted { .. })) => {
                log::warn!("skipping {}: {e}", row.tile);
                skipped += 1;
            }
            Err(e) => return Err(e),
        }
    }
    let augmented = out.len() - normals.len();
    if augmented == 0 && !normals.is_empty() {
        return Err(Error::Data("no tile could be augmented".into()));
    }
    write_manifest(&dir.join("manifest.jsonl"), &out)?;
    snapshot(
        cli,
        &dir.join(SNAPSHOT),
        "augment",
        json!({ "strategy": a.strategy, "params": params, "seed": seed, "augmented": augmented, "skipped": skipped }),
    )?;
    println!("augmented={augmented} skipped={skipped}");
    Ok(())
}

fn train_cmd(cli: &Cli, a: &TrainArgs) -> Result<()> {
    let mut cfg: TrainRunConfig = match &a.config {
        Some(p) => load_json(p)?,
        None => TrainRunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.train.seed = s;
        cfg.model.seed = s;
    }
    if let Some(m) = &a.modalities {
        cfg.modalities = ModalitySetField(m.clone());
    }
    if let Some(s) = a.strategy {
        cfg.strategy = StrategyField(s);
    }
    if let Some(r) = a.rho {
        cfg.train.rho = r;
    }
    cfg.augment.rho = cfg.train.rho;
    if !a.actions.is_empty() {
        cfg.augment.actions = a.actions.clone();
    }
    if let Some(e) = a.epochs {
        cfg.train.epochs = e;
    }
    if let Some(b) = a.batch {
        cfg.train.batch_pairs = b;
    }
    if let Some(lr) = a.lr {
        cfg.train.peak_lr = lr;
    }
    if !a.weights.is_empty() {
        cfg.train.loss.weights = semand::objective::LossWeights::new(a.weights[0], a.weights[1], a.weights[2]);
    }
    cfg.model.input_channels = cfg.modalities.0.channel_names().len();
    cfg.model.validate()?;
    cfg.train.validate()?;
    cfg.augment.validate()?;

    let rows = read_manifest(&a.manifest)?;
    let tiles: Vec<TileInputs> = rows
        .par_iter()
        .filter(|r| r.label == Label::Normal)
        .map(|r| TileInputs::from_fused(&r.load_tile()?, r.load_geometry()?.polygons))
        .collect::<Result<_>>()?;
    let tiles: Vec<TileInputs> = tiles.into_iter().filter(|t| !t.polygons.is_empty()).collect();
    let dir = out_dir(cli)?;
    snapshot(cli, &dir.join(SNAPSHOT), "train", serde_json::to_value(&cfg)?)?;

    let source = AugmentedPairs {
        tiles: &tiles,
        modalities: cfg.modalities.0.clone(),
        strategy: cfg.strategy.0,
        params: cfg.augment.clone(),
        seed: cfg.train.seed,
    };
    let mut state = ModelState::new(cfg.model.clone())?;
    let mut log = csv::Writer::from_path(dir.join("train_log.csv"))?;
    let summary = train(&mut state, &source, &cfg.train, |rec| Ok(log.serialize(rec)?))?;
    log.flush()?;
    save_checkpoint(&state, &dir.join(CHECKPOINT))?;

    let imgs: Vec<Image<f32>> =
        tiles.par_iter().map(|t| t.image(&t.rcpp, &cfg.modalities.0)).collect::<Result<_>>()?;
    let z: Vec<Vec<f64>> =
        state.net.forward_batch(&imgs)?.iter().map(|o| o.z.iter().map(|v| f64::from(*v)).collect()).collect();
    write_json(&dir.join(PROTOTYPE), &fit_prototype(&z)?)?;
    println!("steps={} final_loss={:.6}", summary.steps, summary.epoch_loss.last().copied().unwrap_or(f64::NAN));
    Ok(())
}

#[derive(Deserialize)]
struct SnapshotModalities {
    config: SnapshotConfig,
}

#[derive(Deserialize)]
struct SnapshotConfig {
    modalities: ModalitySet,
}

/// Modalities of a trained run: the flag, else the run's snapshot, else all.
fn run_modalities(flag: &Option<ModalitySet>, checkpoint: &Path) -> ModalitySet {
    if let Some(m) = flag {
        return m.clone();
    }
    let snap = checkpoint.parent().map(|d| d.join(SNAPSHOT));
    snap.and_then(|p| fs::read_to_string(p).ok())
        .and_then(|t| serde_json::from_str::<SnapshotModalities>(&t).ok())
        .map(|s| s.config.modalities)
        .unwrap_or_else(ModalitySet::all)
}

fn model_input(net: &Network<f32>, fused: &semand::raster::FusedTile, modalities: &ModalitySet) -> Result<Image<f32>> {
    let names = modalities.channel_names();
    if names.len() != net.config.input_channels {
        return Err(Error::Alignment(format!(
            "checkpoint expects {} channels but modalities {modalities} give {}",
            net.config.input_channels,
            names.len()
        )));
    }
    Ok(Image::from_tile(&fused.select(&names)?))
}

fn score(cli: &Cli, a: &ScoreArgs) -> Result<()> {
    let state = load_checkpoint(&a.checkpoint, None)?;
    let modalities = run_modalities(&a.modalities, &a.checkpoint);
    let needs_proto = a.method.iter().any(|m| *m != ScoreMethod::Classifier);
    let proto: Option<Prototype> = if needs_proto {
        let p = a.prototype.clone().unwrap_or_else(|| a.checkpoint.with_file_name(PROTOTYPE));
        Some(load_json(&p).map_err(|e| Error::Data(format!("prototype: {e}")))?)
    } else {
        None
    };
    let scorer = proto.as_ref().map(PrototypeScorer::new).transpose()?;
    let rows = read_manifest(&a.manifest)?;
    let net = &state.net;
    let scored: Vec<Vec<ScoreRow>> = rows
        .par_iter()
        .map(|r| {
            let out = net.forward(&model_input(net, &r.load_tile()?, &modalities)?)?;
            let z: Vec<f64> = out.z.iter().map(|v| f64::from(*v)).collect();
            a.method
                .iter()
                .map(|&m| {
                    let score = match m {
                        ScoreMethod::Classifier => f64::from(out.s[1]),
                        _ => scorer.as_ref().expect("prototype loaded").score(&z, m)?,
                    };
                    Ok(ScoreRow { tile: r.tile, label: Some(r.label), method: m, score })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let scored: Vec<ScoreRow> = scored.into_iter().flatten().collect();
    let file = out_file(cli)?;
    write_scores(&file, &scored)?;
    snapshot(
        cli,
        &snapshot_for(&file),
        "score",
        json!({ "checkpoint": a.checkpoint, "manifest": a.manifest, "methods": a.method, "modalities": modalities }),
    )?;
    println!("scored={}", scored.len());
    Ok(())
}

fn select_scores(rows: Vec<ScoreRow>, method: Option<ScoreMethod>) -> Result<Vec<(ScoreMethod, Vec<ScoreRow>)>> {
    let mut methods: Vec<ScoreMethod> = Vec::new();
    for r in &rows {
        if !methods.contains(&r.method) && method.is_none_or(|m| m == r.method) {
            methods.push(r.method);
        }
    }
    if methods.is_empty() {
        return Err(Error::Evaluation("no scores for the requested method".into()));
    }
    Ok(methods
        .into_iter()
        .map(|m| (m, rows.iter().filter(|r| r.method == m).cloned().collect()))
        .collect())
}

fn eval(cli: &Cli, a: &EvalArgs) -> Result<()> {
    let groups = select_scores(read_scores(&a.scores)?, a.method)?;
    let single = groups.len() == 1;
    let mut report = Vec::new();
    for (m, rows) in groups {
        let pick = |l: Label| -> Vec<f64> { rows.iter().filter(|r| r.label == Some(l)).map(|r| r.score).collect() };
        let value = auc(&pick(Label::Normal), &pick(Label::Augmented))?;
        if single {
            println!("auc={value:.4}");
        } else {
            println!("method={} auc={value:.4}", m.as_str());
        }
        report.push(json!({ "method": m, "auc": value }));
    }
    if let Some(file) = &cli.out {
        let file = out_file(cli).map(|_| file.clone())?;
        write_json(&file, &report)?;
        snapshot(cli, &snapshot_for(&file), "eval", json!({ "scores": a.scores, "method": a.method }))?;
    }
    Ok(())
}

fn localize_cmd(cli: &Cli, a: &LocalizeArgs) -> Result<()> {
    let state = load_checkpoint(&a.checkpoint, None)?;
    let modalities = run_modalities(&a.modalities, &a.checkpoint);
    let fused = match (&a.input, &a.manifest) {
        (Some(p), _) => semand::raster::FusedTile::from_container(a.tile, &SmndImage::load(p)?)?,
        (None, Some(m)) => {
            let rows = read_manifest(m)?;
            let want = match a.label {
                LabelArg::Normal => Label::Normal,
                LabelArg::Augmented => Label::Augmented,
            };
            let row = rows
                .iter()
                .find(|r| r.tile == a.tile && r.label == want)
                .or_else(|| rows.iter().find(|r| r.tile == a.tile))
                .ok_or_else(|| Error::Data(format!("tile {} is not in the manifest", a.tile)))?;
            row.load_tile()?
        }
        (None, None) => return Err(Error::Config("localize needs --manifest or --input".into())),
    };
    let sal = localize(&state.net, &model_input(&state.net, &fused, &modalities)?)?;
    if sal.empty {
        log::warn!("saliency for {} is empty: no activation survived rectification", a.tile);
    }
    let file = out_file(cli)?;
    SmndImage { height: sal.size, width: sal.size, names: vec!["SALIENCY".into()], data: sal.map.clone() }.save(&file)?;
    snapshot(
        cli,
        &snapshot_for(&file),
        "localize",
        json!({ "checkpoint": a.checkpoint, "tile": a.tile, "modalities": modalities, "empty": sal.empty }),
    )?;
    match sal.mass_centroid() {
        Some((r, c)) => println!("centroid_row={r:.2} centroid_col={c:.2} empty={}", sal.empty),
        None => println!("empty=true"),
    }
    Ok(())
}

fn health(cli: &Cli, a: &HealthArgs) -> Result<()> {
    let groups = select_scores(read_scores(&a.scores)?, a.method)?;
    if groups.len() > 1 {
        return Err(Error::Config("score table has several methods; pick one with --method".into()));
    }
    let scores: Vec<f64> = groups[0].1.iter().map(|r| r.score).collect();
    let hist = health_histogram(&scores, a.bins, a.threshold)?;
    if let Some(file) = &cli.out {
        let file = out_file(cli).map(|_| file.clone())?;
        let mut w = csv::Writer::from_path(&file)?;
        for b in &hist.bins {
            w.serialize(b)?;
        }
        w.flush()?;
        snapshot(cli, &snapshot_for(&file), "health-hist", json!({ "scores": a.scores, "bins": a.bins, "threshold": a.threshold }))?;
    }
    for b in &hist.bins {
        println!("[{:.3},{:.3}) {} {:.4}", b.lo, b.hi, b.count, b.fraction);
    }
    println!("total={} below_threshold={:.4}", hist.total, hist.below_threshold);
    Ok(())
}

fn matrix(cli: &Cli, a: &MatrixArgs) -> Result<()> {
    let mut spec: MatrixSpec = load_json(&a.spec)?;
    if let Some(s) = cli.seed {
        spec.experiment.seed = s;
        spec.experiment.world.seed = s;
        spec.experiment.train.seed = s;
        spec.experiment.model.seed = s;
    }
    let rows = run_matrix(&spec)?;
    let file = out_file(cli)?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(&file)?;
    w.write_record(["axis", "value", "eval_set", "method", "auc", "error"])?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    snapshot(cli, &snapshot_for(&file), "matrix", serde_json::to_value(&spec)?)?;
    println!("cells={}", rows.len());
    Ok(())
}
