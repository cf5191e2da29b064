//! The desk experiment behind the direction checks: one synthetic world,
//! six training cells, shared held-out sets.

use std::time::Instant;

use semand::augment::Strategy;
use semand::experiment::{Cell, CellResult, ExperimentConfig, Prepared, SINGLE_DEFECT};
use semand::objective::LossWeights;
use semand::scoring::ScoreMethod;

use super::Outcome;

/// 16 px on a 256 px tile, scaled to the 64 px desk grid.
const LOCALIZATION_RADIUS: f64 = 16.0 * 64.0 / 256.0;

struct Timed {
    result: CellResult,
    seconds: f64,
}

fn cell(name: &str) -> Cell {
    let mut c = Cell::default();
    match name {
        "main" => {}
        "cutpaste" => c.strategy = Strategy::Cutpaste,
        "rnp" => c.modalities = "RNP".parse().unwrap(),
        "bc" => c.weights = LossWeights::new(1.0, 0.0, 0.0),
        "cl" => c.weights = LossWeights::new(0.0, 1.0, 0.0),
        "if" => c.weights = LossWeights::new(0.0, 0.0, 1.0),
        other => unreachable!("{other}"),
    }
    c
}

fn auc(r: &Timed, set: &str, m: ScoreMethod) -> f64 {
    r.result.auc(set, m).unwrap_or(f64::NAN)
}

pub fn run() -> Vec<(u32, &'static str, f64, Outcome)> {
    let t0 = Instant::now();
    let prep = Prepared::new(ExperimentConfig::default()).expect("desk experiment setup");
    let prep_seconds = t0.elapsed().as_secs_f64();
    let pairs = prep.train.len();
    let mut cells = std::collections::BTreeMap::new();
    for name in ["main", "cutpaste", "rnp", "bc", "cl", "if"] {
        let t = Instant::now();
        let result = prep.run_cell(&cell(name)).expect("cell trains");
        let seconds = t.elapsed().as_secs_f64();
        eprintln!("cell {name}: {seconds:.0}s, final loss {:.3}", result.epoch_loss.last().copied().unwrap_or(f64::NAN));
        cells.insert(name, Timed { result, seconds });
    }
    let c = |n: &str| &cells[n];
    let clf = ScoreMethod::Classifier;
    let cos = ScoreMethod::Cosine;
    let mut out = Vec::new();

    // held-out RPA anomalies, classifier score
    let main = c("main");
    let a = auc(main, "rpa", clf);
    out.push((
        4,
        "end-to-end desk experiment",
        prep_seconds + main.seconds,
        Outcome::new(
            a >= 0.90 && pairs >= 2000 && main.result.train_seconds <= 1800.0,
            format!("RPA AUC {a:.4} (need >= 0.90) after {pairs} training pairs, {:.0}s training", main.result.train_seconds),
        ),
    ));

    // each model against its own strategy and the other one
    let cp = c("cutpaste");
    let (rr, rc) = (auc(main, "rpa", clf), auc(main, "cutpaste", clf));
    let (cc, cr) = (auc(cp, "cutpaste", clf), auc(cp, "rpa", clf));
    out.push((
        5,
        "cross-strategy direction",
        cp.seconds,
        Outcome::new(
            rr > rc && cc > cr,
            format!(
                "RPA-trained: RPA {rr:.4} vs CutPaste {rc:.4}; CutPaste-trained: CutPaste {cc:.4} vs RPA {cr:.4}"
            ),
        ),
    ));

    let rnp = c("rnp");
    let (full, only) = (auc(main, SINGLE_DEFECT, clf), auc(rnp, SINGLE_DEFECT, clf));
    out.push((
        6,
        "modality ablation direction",
        rnp.seconds,
        Outcome::new(
            full - only >= 0.03,
            format!(
                "single-defect AUC RNP+M+SI {full:.4} vs RNP {only:.4}, margin {:.4} (need >= 0.03); RPA split {:.4} vs {:.4}",
                full - only,
                auc(main, "rpa", clf),
                auc(rnp, "rpa", clf)
            ),
        ),
    ));

    let combined = auc(main, SINGLE_DEFECT, cos);
    let singles: Vec<(&str, f64)> = ["bc", "cl", "if"].iter().map(|n| (*n, auc(c(n), SINGLE_DEFECT, cos))).collect();
    let seconds: f64 = ["bc", "cl", "if"].iter().map(|n| c(n).seconds).sum();
    let pass = singles.iter().all(|(_, v)| combined >= v - 0.01);
    let listed: Vec<String> = singles.iter().map(|(n, v)| format!("{n} {v:.4}")).collect();
    out.push((
        7,
        "loss ablation direction",
        seconds,
        Outcome::new(
            pass,
            format!(
                "single-defect cosine AUC combined {combined:.4} vs {} (allowance 0.01); RPA split combined {:.4} vs {}",
                listed.join(", "),
                auc(main, "rpa", cos),
                ["bc", "cl", "if"].map(|n| format!("{n} {:.4}", auc(c(n), "rpa", cos))).join(", ")
            ),
        ),
    ));

    let t = Instant::now();
    let loc = prep.localization(&main.result.state.net, &main.result.cell.modalities, LOCALIZATION_RADIUS).expect("localization");
    let rate = loc.rate();
    out.push((
        8,
        "localization",
        t.elapsed().as_secs_f64(),
        Outcome::new(
            rate >= 0.70,
            format!("{}/{} saliency centroids within {LOCALIZATION_RADIUS} px of the change (rate {rate:.2}, need >= 0.70)", loc.hits, loc.total),
        ),
    ));
    out
}
