//! Desk-scale experiments: a synthetic world split into training and
//! held-out tiles, cells that vary one training knob, and AUC reports.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::{augment_tile, ActionKind, AugmentParams, Strategy};
use crate::dataset::{AugmentedPairs, ModalitySet, TileInputs};
use crate::error::{Error, Result};
use crate::model::{train, ConvStage, Image, ModelConfig, ModelState, Network, TrainConfig};
use crate::objective::LossWeights;
use crate::raster::Channel;
use crate::rng::derive_seed;
use crate::scoring::{auc, fit_prototype, localize, PrototypeScorer, ScoreMethod};
use crate::synthgen::{generate_world, make_eval_split, single_defect, SingleDefect, WorldConfig};

/// Everything shared by the cells of one experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub world: WorldConfig,
    pub eval_tiles: usize,
    /// Held-out anomaly sets; each pairs every held-out tile with one
    /// anomalous counterpart.
    pub eval_sets: Vec<EvalSet>,
    /// Held-out tiles that also get a single shifted polygon, for
    /// localization and the `single_defect` AUC row (0 disables).
    pub defect_tiles: usize,
    /// Parameters for the held-out anomalies (cells override `rho` and
    /// `actions` only for training).
    pub augment: AugmentParams,
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Training tiles used to fit the feature prototype.
    pub prototype_tiles: usize,
    pub methods: Vec<ScoreMethod>,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            world: WorldConfig { cols: 48, rows: 46, grid_size: 64, ..WorldConfig::default() },
            eval_tiles: 200,
            eval_sets: vec![EvalSet::new(Strategy::Rpa), EvalSet::new(Strategy::Cutpaste)],
            defect_tiles: 100,
            augment: AugmentParams::default(),
            model: desk_model(),
            // 1e-2 destabilizes these short desk runs; CutPaste training stalls
            train: TrainConfig { epochs: 6, peak_lr: 1e-3, ..TrainConfig::default() },
            prototype_tiles: 500,
            methods: vec![ScoreMethod::Classifier, ScoreMethod::Cosine],
            seed: 0,
        }
    }
}

/// The default encoder with its last two stages at stride 1. At 64 px
/// this keeps a 16×16 final conv map, the same map-cell-to-tile ratio the
/// stride-2 stack has on 256 px tiles, so saliency stays as fine relative
/// to the tile. Widths are halved to pay for the larger maps.
pub fn desk_model() -> ModelConfig {
    ModelConfig {
        conv_stages: vec![ConvStage::new(16, 3, 2), ConvStage::new(32, 3, 2), ConvStage::new(32, 3, 1), ConvStage::new(64, 3, 1)],
        ..ModelConfig::default()
    }
}

/// A held-out anomaly set. With `rho_max`, anomalies are redrawn until
/// their posedness also lies at or below it, which keeps only the subtle
/// end of the admissible range.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSet {
    pub strategy: Strategy,
    #[serde(default)]
    pub rho_max: Option<f64>,
}

impl EvalSet {
    pub fn new(strategy: Strategy) -> Self {
        Self { strategy, rho_max: None }
    }

    pub fn banded(strategy: Strategy, rho_max: f64) -> Self {
        Self { strategy, rho_max: Some(rho_max) }
    }

    /// `rpa`, `cutpaste`, `rpa@0.2`, ...
    pub fn label(&self) -> String {
        match self.rho_max {
            None => self.strategy.to_string(),
            Some(r) => format!("{}@{r}", self.strategy),
        }
    }
}

/// Label of the single-defect AUC row.
pub const SINGLE_DEFECT: &str = "single_defect";

/// Redraws allowed per tile when bounding posedness from above.
const BAND_DRAWS: u64 = 500;

/// One training recipe.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Cell {
    pub modalities: ModalitySet,
    pub strategy: Strategy,
    pub weights: LossWeights,
    pub actions: Vec<ActionKind>,
    pub rho: f64,
}

impl Default for Cell {
    fn default() -> Self {
        Self {
            modalities: ModalitySet::all(),
            strategy: Strategy::Rpa,
            weights: LossWeights::default(),
            actions: ActionKind::ALL.to_vec(),
            rho: 0.10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AucRow {
    pub eval_set: String,
    pub method: ScoreMethod,
    pub auc: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellResult {
    pub cell: Cell,
    pub state: ModelState,
    pub epoch_loss: Vec<f64>,
    pub train_seconds: f64,
    pub aucs: Vec<AucRow>,
}

impl CellResult {
    pub fn auc(&self, eval_set: &str, method: ScoreMethod) -> Option<f64> {
        self.aucs.iter().find(|r| r.eval_set == eval_set && r.method == method).map(|r| r.auc)
    }
}

/// Generated world, split, and held-out anomalies.
pub struct Prepared {
    pub config: ExperimentConfig,
    pub train: Vec<TileInputs>,
    pub eval: Vec<TileInputs>,
    /// Anomalous RCPP per held-out tile, per eval set label.
    pub anomalies: Vec<(String, Vec<Channel>)>,
    /// Single-defect counterparts of the first held-out tiles.
    pub defects: Vec<SingleDefect>,
}

/// Localization hits within a pixel radius.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalizationReport {
    pub hits: usize,
    pub total: usize,
    /// Distance from the saliency centroid to the changed-pixel centroid;
    /// infinite for an empty map.
    pub distances: Vec<f64>,
}

impl LocalizationReport {
    pub fn rate(&self) -> f64 {
        self.hits as f64 / self.total.max(1) as f64
    }
}

impl Prepared {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.train.validate()?;
        config.augment.validate()?;
        let world = generate_world(&config.world)?;
        let plain: Vec<Strategy> = config.eval_sets.iter().filter(|e| e.rho_max.is_none()).map(|e| e.strategy).collect();
        let split = make_eval_split(&world, config.world.grid_size, config.eval_tiles, &config.augment, &plain, config.seed)?;
        let inputs = |idx: &[usize]| -> Result<Vec<TileInputs>> {
            idx.par_iter().map(|&i| TileInputs::from_synth(&world[i])).collect()
        };
        let train = inputs(&split.train)?;
        let eval = inputs(&split.eval)?;
        drop(world);
        let mut plain_sets = split.anomalies.into_iter();
        let mut anomalies = Vec::with_capacity(config.eval_sets.len());
        for (k, set) in config.eval_sets.iter().enumerate() {
            let chans = match set.rho_max {
                None => {
                    let (_, recs) = plain_sets.next().expect("one split entry per plain set");
                    let mut chans: Vec<Option<Channel>> = vec![None; eval.len()];
                    for a in recs {
                        chans[a.eval_index] = Some(a.record.augmented_rcpp);
                    }
                    chans.into_iter().map(|c| c.expect("one anomaly per held-out tile")).collect()
                }
                Some(hi) => eval
                    .par_iter()
                    .map(|t| banded_anomaly(t, set.strategy, &config.augment, hi, derive_seed(config.seed, &[0xba, k as u64])))
                    .collect::<Result<Vec<_>>>()?,
            };
            anomalies.push((set.label(), chans));
        }
        let defects = eval[..config.defect_tiles.min(eval.len())]
            .par_iter()
            .map(|t| {
                let s = derive_seed(config.seed, &[0xdef, u64::from(t.tile().x), u64::from(t.tile().y)]);
                single_defect(&t.polygons, t.grid, &config.augment, s)
            })
            .collect::<Result<Vec<_>>>()?;
        log::info!("prepared {} training and {} held-out tiles", train.len(), eval.len());
        Ok(Self { config, train, eval, anomalies, defects })
    }

    pub fn train_config(&self, cell: &Cell) -> TrainConfig {
        let mut t = self.config.train.clone();
        t.loss.weights = cell.weights;
        t.rho = cell.rho;
        t
    }

    pub fn model_config(&self, cell: &Cell) -> ModelConfig {
        ModelConfig { input_channels: cell.modalities.channel_names().len(), ..self.config.model.clone() }
    }

    pub fn train_cell(&self, cell: &Cell) -> Result<(ModelState, Vec<f64>)> {
        check_cell(cell)?;
        let tc = self.train_config(cell);
        let params = AugmentParams { rho: cell.rho, actions: cell.actions.clone(), ..self.config.augment.clone() };
        params.validate()?;
        let source = AugmentedPairs {
            tiles: &self.train,
            modalities: cell.modalities.clone(),
            strategy: cell.strategy,
            params,
            seed: tc.seed,
        };
        let mut state = ModelState::new(self.model_config(cell))?;
        let summary = train(&mut state, &source, &tc, |_| Ok(()))?;
        Ok((state, summary.epoch_loss))
    }

    /// AUC per held-out strategy and score method.
    pub fn evaluate(&self, net: &Network<f32>, modalities: &ModalitySet) -> Result<Vec<AucRow>> {
        let normal_imgs: Vec<Image<f32>> =
            self.eval.par_iter().map(|t| t.image(&t.rcpp, modalities)).collect::<Result<_>>()?;
        let normal_out = net.forward_batch(&normal_imgs)?;
        drop(normal_imgs);
        let needs_proto = self.config.methods.iter().any(|m| *m != ScoreMethod::Classifier);
        let proto = if needs_proto {
            let k = self.config.prototype_tiles.min(self.train.len());
            let imgs: Vec<Image<f32>> =
                self.train[..k].par_iter().map(|t| t.image(&t.rcpp, modalities)).collect::<Result<_>>()?;
            let rows: Vec<Vec<f64>> =
                net.forward_batch(&imgs)?.iter().map(|o| o.z.iter().map(|v| f64::from(*v)).collect()).collect();
            Some(fit_prototype(&rows)?)
        } else {
            None
        };
        let scorer = proto.as_ref().map(PrototypeScorer::new).transpose()?;
        let score = |o: &crate::model::Output<f32>, m: ScoreMethod| -> Result<f64> {
            match m {
                ScoreMethod::Classifier => Ok(f64::from(o.s[1])),
                _ => {
                    let z: Vec<f64> = o.z.iter().map(|v| f64::from(*v)).collect();
                    scorer.as_ref().expect("prototype fitted").score(&z, m)
                }
            }
        };
        let defects: Vec<&Channel> = self.defects.iter().map(|d| &d.augmented).collect();
        let sets = self
            .anomalies
            .iter()
            .map(|(label, chans)| (label.as_str(), chans.iter().collect::<Vec<_>>()))
            .chain((!defects.is_empty()).then_some((SINGLE_DEFECT, defects)));
        let mut rows = Vec::new();
        for (label, chans) in sets {
            let imgs: Vec<Image<f32>> = self
                .eval
                .par_iter()
                .zip(chans)
                .map(|(t, c)| t.image(c, modalities))
                .collect::<Result<_>>()?;
            let out = net.forward_batch(&imgs)?;
            for &m in &self.config.methods {
                let n: Vec<f64> = normal_out.iter().map(|o| score(o, m)).collect::<Result<_>>()?;
                let a: Vec<f64> = out.iter().map(|o| score(o, m)).collect::<Result<_>>()?;
                rows.push(AucRow { eval_set: label.to_string(), method: m, auc: auc(&n, &a)? });
            }
        }
        Ok(rows)
    }

    /// GradCAM on every single-defect tile; a hit is a saliency centroid
    /// within `radius` pixels of the changed-pixel centroid.
    pub fn localization(&self, net: &Network<f32>, modalities: &ModalitySet, radius: f64) -> Result<LocalizationReport> {
        let distances: Vec<f64> = self
            .defects
            .par_iter()
            .zip(&self.eval)
            .map(|(d, t)| {
                let sal = localize(net, &t.image(&d.augmented, modalities)?)?;
                Ok(match sal.mass_centroid() {
                    Some((r, c)) => (r - d.changed_centroid.0).hypot(c - d.changed_centroid.1),
                    None => f64::INFINITY,
                })
            })
            .collect::<Result<_>>()?;
        let hits = distances.iter().filter(|&&d| d <= radius).count();
        Ok(LocalizationReport { hits, total: distances.len(), distances })
    }

    pub fn run_cell(&self, cell: &Cell) -> Result<CellResult> {
        let start = Instant::now();
        let (state, epoch_loss) = self.train_cell(cell)?;
        let train_seconds = start.elapsed().as_secs_f64();
        let aucs = self.evaluate(&state.net, &cell.modalities)?;
        for r in &aucs {
            log::info!("cell {}/{}: {} {} auc={:.4}", cell.modalities, cell.strategy, r.eval_set, r.method.as_str(), r.auc);
        }
        Ok(CellResult { cell: cell.clone(), state, epoch_loss, train_seconds, aucs })
    }
}

/// Axes of an ablation matrix. Each axis value yields one cell that differs
/// from `base` in that axis only.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MatrixSpec {
    pub experiment: ExperimentConfig,
    pub base: Cell,
    /// `[bc, cl, if]` triples.
    pub loss_weights: Vec<[f64; 3]>,
    pub modalities: Vec<ModalitySet>,
    pub actions: Vec<Vec<ActionKind>>,
    pub rho: Vec<f64>,
    pub strategies: Vec<Strategy>,
}

impl MatrixSpec {
    /// `(axis, value label, cell)` in axis order.
    pub fn cells(&self) -> Result<Vec<(&'static str, String, Cell)>> {
        let mut out = Vec::new();
        for w in &self.loss_weights {
            let weights = LossWeights::new(w[0], w[1], w[2]);
            weights.validate()?;
            out.push(("loss_weights", format!("{}/{}/{}", w[0], w[1], w[2]), Cell { weights, ..self.base.clone() }));
        }
        for m in &self.modalities {
            out.push(("modalities", m.to_string(), Cell { modalities: m.clone(), ..self.base.clone() }));
        }
        for a in &self.actions {
            let label = a.iter().map(|k| k.as_str()).collect::<Vec<_>>().join("+");
            out.push(("actions", label, Cell { actions: a.clone(), ..self.base.clone() }));
        }
        for r in &self.rho {
            out.push(("rho", r.to_string(), Cell { rho: *r, ..self.base.clone() }));
        }
        for s in &self.strategies {
            out.push(("strategy", s.to_string(), Cell { strategy: *s, ..self.base.clone() }));
        }
        Ok(out)
    }
}

/// One line of a matrix report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixRow {
    pub axis: String,
    pub value: String,
    pub eval_set: String,
    pub method: String,
    pub auc: Option<f64>,
    pub error: Option<String>,
}

/// Runs every cell; a failed cell is reported and the matrix continues.
pub fn run_matrix(spec: &MatrixSpec) -> Result<Vec<MatrixRow>> {
    let cells = spec.cells()?;
    if cells.is_empty() {
        return Ok(Vec::new());
    }
    let prepared = Prepared::new(spec.experiment.clone())?;
    let mut rows = Vec::new();
    for (axis, value, cell) in cells {
        match prepared.run_cell(&cell) {
            Ok(res) => rows.extend(res.aucs.into_iter().map(|r| MatrixRow {
                axis: axis.into(),
                value: value.clone(),
                eval_set: r.eval_set,
                method: r.method.as_str().into(),
                auc: Some(r.auc),
                error: None,
            })),
            Err(e) => {
                log::warn!("cell {axis}={value} failed: {e}");
                rows.push(MatrixRow {
                    axis: axis.into(),
                    value,
                    eval_set: String::new(),
                    method: String::new(),
                    auc: None,
                    error: Some(format!("{}: {e}", e.kind())),
                });
            }
        }
    }
    Ok(rows)
}

/// Redraws an augmentation until `rho < posedness <= rho_max`.
fn banded_anomaly(t: &TileInputs, strategy: Strategy, params: &AugmentParams, rho_max: f64, seed: u64) -> Result<Channel> {
    let mut best = f64::INFINITY;
    for draw in 0..BAND_DRAWS {
        let s = derive_seed(seed, &[u64::from(t.tile().x), u64::from(t.tile().y), draw]);
        let rec = augment_tile(&t.polygons, t.grid, strategy, params, s)?;
        if rec.posedness <= rho_max {
            return Ok(rec.augmented_rcpp);
        }
        best = best.min(rec.posedness);
    }
    Err(Error::RejectionExhausted { attempts: BAND_DRAWS as usize, best, rho: rho_max })
}

/// Checks that a cell's configuration is usable before spending time on it.
pub fn check_cell(cell: &Cell) -> Result<()> {
    cell.weights.validate()?;
    if !(cell.rho >= 0.0 && cell.rho.is_finite()) {
        return Err(Error::Config(format!("rho {} must be finite and non-negative", cell.rho)));
    }
    Ok(())
}
