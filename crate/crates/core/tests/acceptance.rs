//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::Deserialize;

use semand::augment::{
    augment_with_posedness, replay_record, ActionLog, AppliedAction, AugmentLog, AugmentParams, AugmentSidecar,
};
use semand::dataset::{ModalitySet, TileInputs};
use semand::geometry::{Mode, Polygon};
use semand::objective::{loss_bc, loss_cl, loss_if, loss_total, BatchFeatures, LossConfig, LossWeights};
use semand::raster::{rasterize_crm, rasterize_polygons, rasterize_presence, Channel, ChannelName, PresenceSource};
use semand::rng::{derive_seed, rng_from, SeededRng};
use semand::scoring::auc;
use semand::synthgen::{generate_tile, SynthTile, WorldConfig};
use semand::tilemath::{PixelGrid, TileKey};

#[path = "acceptance/desk.rs"]
mod desk;

pub struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, detail: detail.into() }
    }

    /// Collects failures; passes when there are none.
    fn from_failures(failures: &[String], summary: String) -> Self {
        match failures.first() {
            None => Self::new(true, summary),
            Some(f) => Self::new(false, format!("{summary}; {} failures, first: {f}", failures.len())),
        }
    }
}

// ---------------------------------------------------------------- losses

#[derive(Deserialize)]
struct Fixture {
    tau: f64,
    gamma: f64,
    weights: [f64; 3],
    cases: Vec<Case>,
}

#[derive(Deserialize)]
struct Case {
    z_normal: Vec<Vec<f64>>,
    z_aug: Vec<Vec<f64>>,
    s_normal0: Vec<f64>,
    s_aug1: Vec<f64>,
    l_bc: f64,
    l_cl: f64,
    l_if: f64,
    l_total: f64,
}

fn batch(z_normal: Vec<Vec<f64>>, z_aug: Vec<Vec<f64>>, s0: &[f64], s1: &[f64], config: LossConfig) -> BatchFeatures {
    BatchFeatures {
        z_normal,
        z_aug,
        s_normal: s0.iter().map(|&p| [p, 1.0 - p]).collect(),
        s_aug: s1.iter().map(|&p| [1.0 - p, p]).collect(),
        config,
    }
}

fn random_batch(seed: u64) -> BatchFeatures {
    let mut rng = rng_from(seed);
    let n = rng.gen_range(2..=8);
    let d = rng.gen_range(2..=16);
    let mut rows = || -> Vec<Vec<f64>> { (0..n).map(|_| (0..d).map(|_| rng.gen_range(0.05..1.5)).collect()).collect() };
    let (zn, za) = (rows(), rows());
    let s0: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..0.95)).collect();
    let s1: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..0.95)).collect();
    let config = LossConfig { tau: rng.gen_range(0.2..1.0), gamma: rng.gen_range(0.0..2.0), weights: LossWeights::default() };
    batch(zn, za, &s0, &s1, config)
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

fn criterion_losses() -> Outcome {
    let raw = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/loss_oracle.json"))
        .expect("oracle fixture");
    let fx: Fixture = serde_json::from_str(&raw).expect("oracle fixture parses");
    let config = LossConfig { tau: fx.tau, gamma: fx.gamma, weights: LossWeights::new(fx.weights[0], fx.weights[1], fx.weights[2]) };
    let mut failures = Vec::new();
    let mut worst_value = 0.0f64;
    let cases = fx.cases.len();
    for (k, c) in fx.cases.into_iter().enumerate() {
        let r = loss_total(&batch(c.z_normal, c.z_aug, &c.s_normal0, &c.s_aug1, config)).unwrap();
        for (name, got, want) in [("bc", r.l_bc, c.l_bc), ("cl", r.l_cl, c.l_cl), ("if", r.l_if, c.l_if), ("total", r.l_total, c.l_total)] {
            worst_value = worst_value.max((got - want).abs());
            if (got - want).abs() >= 1e-9 {
                failures.push(format!("case {k} {name}: {got} vs {want}"));
            }
        }
    }
    if cases != 50 {
        failures.push(format!("oracle has {cases} cases, expected 50"));
    }

    const H: f64 = 1e-5;
    let mut worst_grad = 0.0f64;
    let mut probes = 0usize;
    for seed in 0..50u64 {
        let b = random_batch(seed);
        let eval_total = |b: &BatchFeatures| loss_total(b).unwrap().l_total;
        let r = loss_total(&b).unwrap();
        let mut check = |what: String, an: f64, fd: f64| {
            let e = rel_err(an, fd);
            worst_grad = worst_grad.max(e);
            probes += 1;
            if e >= 1e-4 {
                failures.push(format!("batch {seed} {what}: analytic {an} vs numeric {fd}"));
            }
        };
        for half in 0..2 {
            for i in 0..b.len() {
                for t in 0..b.z_normal[0].len() {
                    let eval = |delta: f64, f: &dyn Fn(&BatchFeatures) -> f64| {
                        let mut p = b.clone();
                        let rows = if half == 0 { &mut p.z_normal } else { &mut p.z_aug };
                        rows[i][t] += delta;
                        f(&p)
                    };
                    let cl = |p: &BatchFeatures| loss_cl(p).unwrap().value;
                    let g = loss_cl(&b).unwrap();
                    let an = if half == 0 { g.grad_z_normal[i][t] } else { g.grad_z_aug[i][t] };
                    check(format!("cl z{half}[{i}][{t}]"), an, (eval(H, &cl) - eval(-H, &cl)) / (2.0 * H));
                    let an = if half == 0 { r.grad_z_normal[i][t] } else { r.grad_z_aug[i][t] };
                    check(format!("total z{half}[{i}][{t}]"), an, (eval(H, &eval_total) - eval(-H, &eval_total)) / (2.0 * H));
                }
                for c in 0..2 {
                    let eval = |delta: f64, f: &dyn Fn(&BatchFeatures) -> f64| {
                        let mut p = b.clone();
                        let rows = if half == 0 { &mut p.s_normal } else { &mut p.s_aug };
                        rows[i][c] += delta;
                        f(&p)
                    };
                    for (name, f) in [("bc", loss_bc as fn(&BatchFeatures) -> _), ("if", loss_if)] {
                        let g = f(&b).unwrap();
                        let an = if half == 0 { g.grad_s_normal[i][c] } else { g.grad_s_aug[i][c] };
                        let v = |p: &BatchFeatures| f(p).unwrap().value;
                        check(format!("{name} s{half}[{i}][{c}]"), an, (eval(H, &v) - eval(-H, &v)) / (2.0 * H));
                    }
                }
            }
        }
    }
    Outcome::from_failures(
        &failures,
        format!("{cases} oracle batches, max abs error {worst_value:.1e}; {probes} gradient probes, max rel error {worst_grad:.1e}"),
    )
}

// ---------------------------------------------------------------- augmenter

fn random_tiles(count: usize, grid_size: usize, seed: u64) -> Vec<SynthTile> {
    (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_from(derive_seed(seed, &[i as u64]));
            let cfg = WorldConfig {
                seed: rng.gen(),
                grid_size,
                unmapped_fraction: rng.gen_range(0.0..0.5),
                diagonal_prob: rng.gen_range(0.0..1.0),
                ..WorldConfig::default()
            };
            let tile = TileKey::new(18, rng.gen_range(30_000..200_000), rng.gen_range(60_000..170_000)).unwrap();
            generate_tile(&cfg, tile).unwrap()
        })
        .collect()
}

fn in_band(v: f64, lo: f64, hi: f64) -> bool {
    (lo..=hi).contains(&v.abs())
}

fn in_union(v: f64, p: &AugmentParams) -> bool {
    (p.beta_min..=p.beta0_minus).contains(&v) || (p.beta0_plus..=p.beta_max).contains(&v)
}

/// Checks one action log against the sampling contract.
fn check_log(log: &ActionLog, polys: &[Polygon], p: &AugmentParams) -> Result<(), String> {
    if log.is_empty() {
        return Err("empty action log".into());
    }
    for e in log {
        if e.index >= polys.len() || polys[e.index].id != e.id {
            return Err(format!("log names polygon {} ({}) that is not in the tile", e.index, e.id));
        }
        if e.actions.is_empty() {
            return Err(format!("polygon {} selected without actions", e.index));
        }
        for (k, a) in e.actions.iter().enumerate() {
            let ok = match *a {
                AppliedAction::Rotate { theta } => in_band(theta, p.theta0, p.theta1),
                AppliedAction::Translate { dx, dy } => in_band(dx, p.delta0, p.delta1) && in_band(dy, p.delta0, p.delta1),
                AppliedAction::Scale { bx, by } => in_union(bx, p) && in_union(by, p),
                AppliedAction::Delete => k + 1 == e.actions.len(),
            };
            if !ok {
                return Err(format!("polygon {} action {k} out of contract: {a:?}", e.index));
            }
        }
        let mut kinds: Vec<_> = e.actions.iter().map(AppliedAction::kind).collect();
        kinds.sort();
        kinds.dedup();
        if kinds.len() != e.actions.len() {
            return Err(format!("polygon {} repeats an action", e.index));
        }
    }
    Ok(())
}

/// `‖a − n‖_F / ‖n‖_F` computed directly.
fn frobenius_ratio(n: &Channel, a: &Channel) -> f64 {
    let num: f64 = n.data.iter().zip(&a.data).map(|(x, y)| (f64::from(*y) - f64::from(*x)).powi(2)).sum();
    let den: f64 = n.data.iter().map(|x| f64::from(*x).powi(2)).sum();
    (num / den).sqrt()
}

fn criterion_augmenter() -> Outcome {
    let params = AugmentParams::default();
    assert!(params.theta0 == PI / 6.0 && params.theta1 == PI / 2.0);
    let tiles = random_tiles(100, 64, 0xa119);
    let draws = 100usize;
    let results: Vec<Result<(usize, usize), String>> = tiles
        .par_iter()
        .enumerate()
        .map(|(t, tile)| {
            let polys = &tile.geometry.polygons;
            let grid = tile.rgb[0].grid;
            let mut actions = 0;
            for d in 0..draws {
                let seed = derive_seed(0x5eed, &[t as u64, d as u64]);
                let rec = augment_with_posedness(polys, grid, &params, seed).map_err(|e| format!("tile {t} draw {d}: {e}"))?;
                let AugmentLog::Polygons { actions: log } = &rec.log else {
                    return Err(format!("tile {t} draw {d}: not a polygon log"));
                };
                check_log(log, polys, &params).map_err(|e| format!("tile {t} draw {d}: {e}"))?;
                actions += log.iter().map(|e| e.actions.len()).sum::<usize>();
                let rho = frobenius_ratio(&rasterize_polygons(polys, grid), &rec.augmented_rcpp);
                if !(rho > params.rho) || rho != rec.posedness {
                    return Err(format!("tile {t} draw {d}: posedness {rho} (reported {})", rec.posedness));
                }
                // replay through the serialized sidecar
                let json = serde_json::to_string(&rec.sidecar()).unwrap();
                let sidecar: AugmentSidecar = serde_json::from_str(&json).unwrap();
                let replayed = replay_record(polys, grid, &sidecar.log).map_err(|e| e.to_string())?;
                if replayed != rec.augmented_rcpp {
                    return Err(format!("tile {t} draw {d}: replay differs"));
                }
            }
            Ok((draws, actions))
        })
        .collect();
    let mut failures = Vec::new();
    let (mut n, mut actions) = (0, 0);
    for r in results {
        match r {
            Ok((d, a)) => {
                n += d;
                actions += a;
            }
            Err(e) => failures.push(e),
        }
    }
    if n + failures.len() * draws < 10_000 {
        failures.push(format!("only {n} augmentations"));
    }
    Outcome::from_failures(&failures, format!("{n} accepted augmentations, {actions} sampled actions checked"))
}

// ---------------------------------------------------------------- rasterization

/// Spherical Mercator pixel coordinates, written out independently of the
/// crate's tile math.
fn pixel_xy(grid: &PixelGrid, lon: f64, lat: f64) -> (f64, f64) {
    let n = (1u64 << grid.tile.zoom) as f64 * grid.size as f64;
    let phi = lat.to_radians();
    let x = (lon + 180.0) / 360.0 * n;
    let y = (1.0 - (PI / 4.0 + phi / 2.0).tan().ln() / PI) / 2.0 * n;
    (x - f64::from(grid.tile.x) * grid.size as f64, y - f64::from(grid.tile.y) * grid.size as f64)
}

/// Segment vs closed box by the separating axis test.
fn segment_meets_box(a: (f64, f64), b: (f64, f64), x0: f64, y0: f64) -> bool {
    let (x1, y1) = (x0 + 1.0, y0 + 1.0);
    if a.0.max(b.0) < x0 || a.0.min(b.0) > x1 || a.1.max(b.1) < y0 || a.1.min(b.1) > y1 {
        return false;
    }
    let side = |px: f64, py: f64| (b.0 - a.0) * (py - a.1) - (b.1 - a.1) * (px - a.0);
    let s = [side(x0, y0), side(x1, y0), side(x0, y1), side(x1, y1)];
    !(s.iter().all(|v| *v > 0.0) || s.iter().all(|v| *v < 0.0))
}

fn inside(ring: &[(f64, f64)], x: f64, y: f64) -> bool {
    let mut c = false;
    let mut j = ring.len() - 1;
    for i in 0..ring.len() {
        let (xi, yi) = ring[i];
        let (xj, yj) = ring[j];
        if (yi > y) != (yj > y) && x < xi + (y - yi) * (xj - xi) / (yj - yi) {
            c = !c;
        }
        j = i;
    }
    c
}

fn check_tile(t: &SynthTile) -> Result<(usize, usize), String> {
    let g = &t.geometry;
    let grid = t.rgb[0].grid;
    let size = grid.size;
    let mut records = 0;
    for mode in [Mode::Walk, Mode::Drive] {
        let ch = rasterize_crm(&g.trajectories, mode, grid);
        let mut expect = vec![0.0f32; size * size];
        let mut in_tile = 0usize;
        for r in g.trajectories.iter().flat_map(|tr| &tr.records).filter(|r| r.mode == mode) {
            let (x, y) = pixel_xy(&grid, r.lon, r.lat);
            if (0.0..size as f64).contains(&x) && (0.0..size as f64).contains(&y) {
                expect[y.floor() as usize * size + x.floor() as usize] += 1.0;
                in_tile += 1;
            }
        }
        records += in_tile;
        if ch.sum() != in_tile as f64 {
            return Err(format!("{mode:?} mass {} vs {in_tile} in-tile records", ch.sum()));
        }
        if ch.data != expect {
            return Err(format!("{mode:?} counts land in different pixels"));
        }
        if ch.data.iter().any(|v| *v < 0.0 || v.fract() != 0.0) {
            return Err(format!("{mode:?} has a non-count value"));
        }
    }

    let segs: Vec<_> = g.roads.navigable_segments().collect();
    let rnp = rasterize_presence(PresenceSource::Segments(&segs), grid);
    let px_segs: Vec<_> = segs.iter().map(|(a, b)| (pixel_xy(&grid, a[0], a[1]), pixel_xy(&grid, b[0], b[1]))).collect();
    for row in 0..size {
        for col in 0..size {
            let want = px_segs.iter().any(|&(a, b)| segment_meets_box(a, b, col as f64, row as f64));
            if (rnp.get(row, col) == 1.0) != want {
                return Err(format!("RNP pixel ({row}, {col}) is {} but segment test says {want}", rnp.get(row, col)));
            }
        }
    }

    let rcpp = rasterize_polygons(&g.polygons, grid);
    let rings: Vec<Vec<(f64, f64)>> =
        g.polygons.iter().map(|p| p.ring.iter().map(|v| pixel_xy(&grid, v[0], v[1])).collect()).collect();
    for row in 0..size {
        for col in 0..size {
            let want = (0..16).any(|k| {
                let x = col as f64 + ((k % 4) as f64 + 0.5) / 4.0;
                let y = row as f64 + ((k / 4) as f64 + 0.5) / 4.0;
                rings.iter().any(|r| inside(r, x, y))
            });
            if (rcpp.get(row, col) == 1.0) != want {
                return Err(format!("RCPP pixel ({row}, {col}) is {} but coverage test says {want}", rcpp.get(row, col)));
            }
        }
    }
    for ch in [&rnp, &rcpp] {
        if ch.data.iter().any(|v| *v != 0.0 && *v != 1.0) {
            return Err(format!("{} is not binary", ch.name));
        }
    }

    // every fused channel sits on the tile's grid in canonical order
    let inputs = TileInputs::from_synth(t).map_err(|e| e.to_string())?;
    let fused = inputs.fused(&inputs.rcpp, &ModalitySet::all()).map_err(|e| e.to_string())?;
    let names = fused.names();
    let canonical = [
        ChannelName::SatR,
        ChannelName::SatG,
        ChannelName::SatB,
        ChannelName::Wcrm,
        ChannelName::Dcrm,
        ChannelName::Rnp,
        ChannelName::Rcpp,
    ];
    if names != canonical || fused.channels.iter().any(|c| c.grid != grid) {
        return Err(format!("fused channels {names:?} not aligned on {grid:?}"));
    }
    if fused.channel(ChannelName::Rnp).unwrap().data != rnp.data || fused.channel(ChannelName::Rcpp).unwrap().data != rcpp.data {
        return Err("fused presence channels differ from direct rasterization".into());
    }
    for (name, raw) in [(ChannelName::Wcrm, Mode::Walk), (ChannelName::Dcrm, Mode::Drive)] {
        let raw = rasterize_crm(&g.trajectories, raw, grid);
        let got = fused.channel(name).unwrap();
        if raw.data.iter().zip(&got.data).any(|(r, n)| (*r > 0.0) != (*n > 0.0)) {
            return Err(format!("normalized {name} support differs from raw counts"));
        }
    }
    Ok((records, segs.len()))
}

fn criterion_rasterization() -> Outcome {
    let tiles = random_tiles(1000, 64, 0x7a57);
    let results: Vec<_> = tiles.par_iter().enumerate().map(|(i, t)| check_tile(t).map_err(|e| format!("tile {i}: {e}"))).collect();
    let mut failures = Vec::new();
    let (mut records, mut segs) = (0, 0);
    for r in results {
        match r {
            Ok((a, b)) => {
                records += a;
                segs += b;
            }
            Err(e) => failures.push(e),
        }
    }
    Outcome::from_failures(&failures, format!("{} tiles, {records} in-tile GPS records, {segs} road segments", tiles.len()))
}

// ---------------------------------------------------------------- AUC

fn brute_auc(normal: &[f64], anomalous: &[f64]) -> f64 {
    let mut twice = 0u64;
    for a in anomalous {
        for n in normal {
            twice += if a > n { 2 } else if a == n { 1 } else { 0 };
        }
    }
    twice as f64 / (2 * normal.len() * anomalous.len()) as f64
}

fn criterion_auc() -> Outcome {
    let mut rng: SeededRng = rng_from(0xa0c);
    let mut failures = Vec::new();
    let mut ties = 0;
    for k in 0..1000 {
        let n = rng.gen_range(1..200);
        let m = rng.gen_range(1..200);
        // coarse levels force ties; fine levels mostly avoid them
        let levels = if k % 2 == 0 { rng.gen_range(1..20) } else { 1_000_000 };
        let mut draw = |c: usize| -> Vec<f64> { (0..c).map(|_| f64::from(rng.gen_range(0..levels)) / 7.0).collect() };
        let (normal, anomalous) = (draw(n), draw(m));
        if anomalous.iter().any(|a| normal.contains(a)) {
            ties += 1;
        }
        let got = auc(&normal, &anomalous).unwrap();
        let want = brute_auc(&normal, &anomalous);
        if got != want {
            failures.push(format!("set {k}: {got} vs {want}"));
        }
    }
    Outcome::from_failures(&failures, format!("1000 score sets ({ties} with cross-class ties) match the all-pairs count exactly"))
}

// ---------------------------------------------------------------- driver

fn report(id: u32, name: &str, seconds: f64, o: &Outcome) {
    let verdict = if o.pass { "PASS" } else { "FAIL" };
    println!("{verdict} criterion {id} {name}: {} [{seconds:.1}s]", o.detail);
}

fn main() -> ExitCode {
    let mut all = true;
    type Check = (u32, &'static str, fn() -> Outcome);
    let quick: [Check; 4] = [
        (1, "loss correctness", criterion_losses),
        (2, "polygon augmenter fidelity", criterion_augmenter),
        (3, "rasterization invariants", criterion_rasterization),
        (9, "AUC evaluator equivalence", criterion_auc),
    ];
    for (id, name, f) in quick {
        let t = Instant::now();
        let o = f();
        report(id, name, t.elapsed().as_secs_f64(), &o);
        all &= o.pass;
    }
    for (id, name, seconds, o) in desk::run() {
        report(id, name, seconds, &o);
        all &= o.pass;
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
