//! Reconstruction of missing panel cells: forward linear interpolation, a
//! k-nearest-neighbour imputer over an economy-similarity feature space,
//! and a temporal random-forest imputer, plus the masked-replica MAE
//! benchmark harness that compares them.
//!
//! No imputer ever overwrites a present cell: raw observations (including
//! recorded zeros) are taken as correct.

mod forest;

use std::collections::BTreeSet;
use std::io::Write;

use ndarray::Array2;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::panel::ExportPanel;
use crate::seed;
use crate::stats;
use crate::taxonomy::{rollup, TaxonomyTree};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImputeMethod {
    /// Forward linear interpolation of each (country, activity) series.
    Interpolate,
    /// Inverse-distance weighted mean over the k most similar donor rows.
    Knn,
    /// Per-target regression-forest prediction over all other codes.
    Forest,
}

impl ImputeMethod {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "interpolate" => Some(ImputeMethod::Interpolate),
            "knn" => Some(ImputeMethod::Knn),
            "forest" => Some(ImputeMethod::Forest),
            _ => None,
        }
    }
}

/// Imputer parameters; construct with one of the method constructors and
/// adjust fields as needed.
#[derive(Debug, Clone)]
pub struct ImputerConfig {
    pub method: ImputeMethod,
    /// Neighbour count for kNN.
    pub k: usize,
    /// Ensemble size for the forest.
    pub trees: usize,
    /// Minimum rows per leaf for the forest.
    pub min_leaf: usize,
    /// Upper-layer codes forming the kNN feature space; empty means "all
    /// layer-1 codes of the taxonomy".
    pub feature_codes: Vec<String>,
    /// log1p-transform features before measuring distances (tames the
    /// dollar-scale dynamic range).
    pub log_features: bool,
    /// Uniform weights over the k donors instead of inverse distance.
    pub uniform_weights: bool,
    pub seed: u64,
}

impl ImputerConfig {
    pub fn interpolate() -> Self {
        ImputerConfig {
            method: ImputeMethod::Interpolate,
            k: 5,
            trees: 100,
            min_leaf: 5,
            feature_codes: Vec::new(),
            log_features: true,
            uniform_weights: false,
            seed: 0,
        }
    }

    pub fn knn(k: usize, seed: u64) -> Self {
        ImputerConfig {
            method: ImputeMethod::Knn,
            k,
            seed,
            ..Self::interpolate()
        }
    }

    pub fn forest(trees: usize, min_leaf: usize, seed: u64) -> Self {
        ImputerConfig {
            method: ImputeMethod::Forest,
            trees,
            min_leaf,
            seed,
            ..Self::interpolate()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if self.trees == 0 {
            return Err(Error::Config("trees must be at least 1".into()));
        }
        if self.min_leaf == 0 {
            return Err(Error::Config("min_leaf must be at least 1".into()));
        }
        Ok(())
    }

    /// Stable label used in benchmark reports.
    pub fn label(&self) -> String {
        match self.method {
            ImputeMethod::Interpolate => "interpolate".into(),
            ImputeMethod::Knn => format!("knn_k{}", self.k),
            ImputeMethod::Forest => format!("forest_t{}_l{}", self.trees, self.min_leaf),
        }
    }
}

/// A cell the imputer could not reconstruct.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualCell {
    pub country: String,
    pub activity: String,
    pub year: i32,
    pub reason: String,
}

/// Bookkeeping for one imputation run.
#[derive(Debug, Clone, Default)]
pub struct ImputationReport {
    pub filled: usize,
    pub residuals: Vec<ResidualCell>,
    /// Forest targets with too few training rows, reconstructed by
    /// interpolation instead.
    pub fallback_activities: Vec<String>,
    /// Negative predictions clipped to zero.
    pub clipped_negative: usize,
}

impl ImputationReport {
    /// Writes `country,activity,year,reason` rows.
    pub fn write_residuals_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        let io_err = |e| Error::io("<writer>", e);
        write!(w, "country,activity,year,reason\n").map_err(io_err)?;
        for r in &self.residuals {
            write!(w, "{},{},{},{}\n", r.country, r.activity, r.year, r.reason).map_err(io_err)?;
        }
        Ok(())
    }
}

/// Dispatches on the configured method.
pub fn impute(
    panel: &ExportPanel,
    tree: &TaxonomyTree,
    cfg: &ImputerConfig,
) -> Result<(ExportPanel, ImputationReport)> {
    cfg.validate()?;
    match cfg.method {
        ImputeMethod::Interpolate => {
            let out = interpolate_forward(panel);
            let mut report = ImputationReport::default();
            report.filled = out.present_count() - panel.present_count();
            report.residuals = remaining_missing(&out, "no prior observation in series");
            Ok((out, report))
        }
        ImputeMethod::Knn => knn_impute(panel, tree, cfg),
        ImputeMethod::Forest => forest_impute(panel, cfg),
    }
}

fn remaining_missing(panel: &ExportPanel, reason: &str) -> Vec<ResidualCell> {
    let (nc, na, ny) = panel.shape();
    let mut out = Vec::new();
    for ci in 0..nc {
        for ai in 0..na {
            for yi in 0..ny {
                if panel.is_missing(ci, ai, yi) {
                    out.push(ResidualCell {
                        country: panel.countries()[ci].clone(),
                        activity: panel.activities()[ai].clone(),
                        year: panel.years()[yi],
                        reason: reason.to_owned(),
                    });
                }
            }
        }
    }
    out
}

/// Forward linear interpolation: interior gaps are linear between the
/// bracketing present values, trailing gaps carry the last value flat, and
/// leading gaps stay missing (only cells with some previous information are
/// generated).
pub fn interpolate_forward(panel: &ExportPanel) -> ExportPanel {
    let (nc, na, ny) = panel.shape();
    let mut out = panel.clone();
    for ci in 0..nc {
        for ai in 0..na {
            let mut last: Option<(usize, f64)> = None;
            for yi in 0..ny {
                if let Some(v) = panel.value(ci, ai, yi) {
                    if let Some((pi, pv)) = last {
                        let gap = yi - pi;
                        for t in pi + 1..yi {
                            let frac = (t - pi) as f64 / gap as f64;
                            out.set(ci, ai, t, pv + (v - pv) * frac);
                        }
                    }
                    last = Some((yi, v));
                }
            }
            if let Some((pi, pv)) = last {
                for t in pi + 1..ny {
                    out.set(ci, ai, t, pv);
                }
            }
        }
    }
    out
}

/// Missing-aware squared Euclidean distance over co-observed coordinates,
/// scaled by total/observed counts so sparsely co-observed rows are not
/// artificially near. Returns `None` when nothing is co-observed.
fn feature_distance(a: &[f64], b: &[f64]) -> Option<f64> {
    let mut sum = 0.0;
    let mut obs = 0usize;
    for (&x, &y) in a.iter().zip(b.iter()) {
        if !x.is_nan() && !y.is_nan() {
            sum += (x - y) * (x - y);
            obs += 1;
        }
    }
    if obs == 0 {
        None
    } else {
        Some((sum * a.len() as f64 / obs as f64).sqrt())
    }
}

/// kNN imputation. Rows are (country, year) pairs pooled across all years;
/// similarity is measured over the configured upper-layer feature codes
/// taken from the rolled-up panel. Each missing cell receives the
/// inverse-distance weighted mean of the k nearest donor rows observed at
/// that activity; donors at distance zero share uniform weights. Ties are
/// broken by (country, year) order, so the result is deterministic.
pub fn knn_impute(
    panel: &ExportPanel,
    tree: &TaxonomyTree,
    cfg: &ImputerConfig,
) -> Result<(ExportPanel, ImputationReport)> {
    cfg.validate()?;
    if cfg.method != ImputeMethod::Knn {
        return Err(Error::Config("knn_impute requires method = knn".into()));
    }
    let feature_codes: Vec<String> = if cfg.feature_codes.is_empty() {
        tree.codes_at_layer(1).iter().map(|s| (*s).to_owned()).collect()
    } else {
        cfg.feature_codes.clone()
    };
    if feature_codes.is_empty() {
        return Err(Error::Config(
            "kNN needs a non-empty feature-code list (taxonomy has no layer-1 codes)".into(),
        ));
    }

    let rolled = rollup(tree, panel)?;
    let feat_pos: Vec<usize> = feature_codes
        .iter()
        .map(|c| {
            rolled.activity_position(c).ok_or_else(|| {
                Error::Config(format!(
                    "feature code {c:?} is absent from the rolled-up panel"
                ))
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let (nc, na, ny) = panel.shape();
    let n_rows = nc * ny;
    let nfeat = feat_pos.len();
    // Row-major feature table with NaN for missing.
    let mut features = vec![f64::NAN; n_rows * nfeat];
    for ci in 0..nc {
        for yi in 0..ny {
            let row = ci * ny + yi;
            for (fi, &ai) in feat_pos.iter().enumerate() {
                if let Some(v) = rolled.value(ci, ai, yi) {
                    features[row * nfeat + fi] = if cfg.log_features { v.ln_1p() } else { v };
                }
            }
        }
    }
    let feat_row = |r: usize| &features[r * nfeat..(r + 1) * nfeat];

    let mut out = panel.clone();
    let mut report = ImputationReport::default();
    let mut dist = vec![None::<f64>; n_rows];
    for ci in 0..nc {
        for yi in 0..ny {
            let missing_here: Vec<usize> =
                (0..na).filter(|&ai| panel.is_missing(ci, ai, yi)).collect();
            if missing_here.is_empty() {
                continue;
            }
            let row = ci * ny + yi;
            for j in 0..n_rows {
                dist[j] = if j == row {
                    None
                } else {
                    feature_distance(feat_row(row), feat_row(j))
                };
            }
            for ai in missing_here {
                // candidate donors: rows observed at this activity
                let mut candidates: Vec<(f64, usize)> = Vec::new();
                for cj in 0..nc {
                    for yj in 0..ny {
                        let j = cj * ny + yj;
                        let Some(d) = dist[j] else { continue };
                        if !panel.is_missing(cj, ai, yj) {
                            candidates.push((d, j));
                        }
                    }
                }
                if candidates.is_empty() {
                    report.residuals.push(ResidualCell {
                        country: panel.countries()[ci].clone(),
                        activity: panel.activities()[ai].clone(),
                        year: panel.years()[yi],
                        reason: "no comparable donor row observed at this activity".into(),
                    });
                    continue;
                }
                let k = cfg.k.min(candidates.len());
                candidates
                    .sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
                candidates.truncate(k);

                let value_of = |j: usize| {
                    let (cj, yj) = (j / ny, j % ny);
                    panel.value(cj, ai, yj).expect("donor is observed")
                };
                let exact: Vec<usize> = candidates
                    .iter()
                    .filter(|(d, _)| *d == 0.0)
                    .map(|&(_, j)| j)
                    .collect();
                let mut value = if !exact.is_empty() {
                    exact.iter().map(|&j| value_of(j)).sum::<f64>() / exact.len() as f64
                } else if cfg.uniform_weights {
                    candidates.iter().map(|&(_, j)| value_of(j)).sum::<f64>() / k as f64
                } else {
                    let mut num = 0.0;
                    let mut den = 0.0;
                    for &(d, j) in &candidates {
                        let w = 1.0 / d;
                        num += w * value_of(j);
                        den += w;
                    }
                    num / den
                };
                if value < 0.0 {
                    value = 0.0;
                    report.clipped_negative += 1;
                }
                out.set(ci, ai, yi, value);
                report.filled += 1;
            }
        }
    }
    Ok((out, report))
}

/// Temporal random-forest imputation: rows are (country, year) vectors over
/// every activity in the panel; for each target activity an ensemble of
/// regression trees is trained on the rows where the target is observed
/// (missing feature values are filled with the training-column mean) and
/// predicts the missing targets as the ensemble mean. Targets with fewer
/// than `2 * min_leaf` training rows fall back to forward interpolation and
/// are flagged.
pub fn forest_impute(
    panel: &ExportPanel,
    cfg: &ImputerConfig,
) -> Result<(ExportPanel, ImputationReport)> {
    cfg.validate()?;
    if cfg.method != ImputeMethod::Forest {
        return Err(Error::Config("forest_impute requires method = forest".into()));
    }
    let (nc, na, ny) = panel.shape();
    let n_rows = nc * ny;
    let mut table = Array2::from_elem((n_rows, na), f64::NAN);
    for ci in 0..nc {
        for yi in 0..ny {
            for ai in 0..na {
                if let Some(v) = panel.value(ci, ai, yi) {
                    table[[ci * ny + yi, ai]] = v;
                }
            }
        }
    }

    // Per-target predictions, parallel over targets; per-tree seeds are
    // derived from (seed, target, tree) so scheduling cannot change results.
    let targets: Vec<usize> = (0..na).collect();
    let results: Vec<(usize, Option<Vec<(usize, f64)>>)> = targets
        .par_iter()
        .map(|&target| {
            let train: Vec<usize> = (0..n_rows)
                .filter(|&r| !table[[r, target]].is_nan())
                .collect();
            let predict_rows: Vec<usize> = (0..n_rows)
                .filter(|&r| table[[r, target]].is_nan())
                .collect();
            if predict_rows.is_empty() {
                return (target, Some(Vec::new()));
            }
            if train.len() < 2 * cfg.min_leaf {
                return (target, None); // fallback
            }
            let feat_cols: Vec<usize> = (0..na).filter(|&a| a != target).collect();
            // training-column means for missing-feature fill
            let mut means = vec![0.0; feat_cols.len()];
            for (fi, &a) in feat_cols.iter().enumerate() {
                let mut s = 0.0;
                let mut n = 0usize;
                for &r in &train {
                    let v = table[[r, a]];
                    if !v.is_nan() {
                        s += v;
                        n += 1;
                    }
                }
                means[fi] = if n > 0 { s / n as f64 } else { 0.0 };
            }
            let fill = |r: usize, fi: usize, a: usize| {
                let v = table[[r, a]];
                if v.is_nan() {
                    means[fi]
                } else {
                    v
                }
            };
            let x_train = Array2::from_shape_fn((train.len(), feat_cols.len()), |(i, fi)| {
                fill(train[i], fi, feat_cols[fi])
            });
            let y_train: Vec<f64> = train.iter().map(|&r| table[[r, target]]).collect();
            let seeds =
                (0..cfg.trees as u64).map(|t| seed::derive(cfg.seed, &[target as u64, t]));
            let model =
                forest::Forest::fit(&x_train, &y_train, cfg.trees, cfg.min_leaf, seeds);
            let preds = predict_rows
                .iter()
                .map(|&r| {
                    let row = ndarray::Array1::from_shape_fn(feat_cols.len(), |fi| {
                        fill(r, fi, feat_cols[fi])
                    });
                    (r, model.predict(row.view()))
                })
                .collect();
            (target, Some(preds))
        })
        .collect();

    let mut out = panel.clone();
    let mut report = ImputationReport::default();
    let mut fallback_targets = Vec::new();
    for (target, preds) in results {
        match preds {
            Some(preds) => {
                for (r, mut v) in preds {
                    if v < 0.0 {
                        v = 0.0;
                        report.clipped_negative += 1;
                    }
                    let (ci, yi) = (r / ny, r % ny);
                    debug_assert!(panel.is_missing(ci, target, yi));
                    out.set(ci, target, yi, v);
                    report.filled += 1;
                }
            }
            None => fallback_targets.push(target),
        }
    }
    if !fallback_targets.is_empty() {
        let interp = interpolate_forward(panel);
        for &target in &fallback_targets {
            report
                .fallback_activities
                .push(panel.activities()[target].clone());
            for ci in 0..nc {
                for yi in 0..ny {
                    if !panel.is_missing(ci, target, yi) {
                        continue;
                    }
                    match interp.value(ci, target, yi) {
                        Some(v) => {
                            out.set(ci, target, yi, v);
                            report.filled += 1;
                        }
                        None => report.residuals.push(ResidualCell {
                            country: panel.countries()[ci].clone(),
                            activity: panel.activities()[target].clone(),
                            year: panel.years()[yi],
                            reason: "fallback interpolation has no prior observation".into(),
                        }),
                    }
                }
            }
        }
    }
    Ok((out, report))
}

/// One benchmark measurement: mean absolute error over the reconstructed
/// masked cells of one taxonomy layer in one replica.
#[derive(Debug, Clone, PartialEq)]
pub struct MaeRow {
    pub method: String,
    pub replica: usize,
    pub layer: u32,
    pub mae: f64,
    /// Masked cells of this layer that the method reconstructed.
    pub cells: usize,
    /// Masked cells of this layer left missing by the method.
    pub unfilled: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaeAggregate {
    pub method: String,
    pub layer: u32,
    pub mean_mae: f64,
    pub q25: f64,
    pub q75: f64,
}

/// Masked-replica benchmark results.
#[derive(Debug, Clone)]
pub struct MaeReport {
    pub rows: Vec<MaeRow>,
    pub aggregates: Vec<MaeAggregate>,
    pub replicas: usize,
    pub fraction: f64,
}

impl MaeReport {
    /// Cell-weighted mean absolute error of one method across all layers
    /// and replicas.
    pub fn overall_mae(&self, method: &str) -> Option<f64> {
        let mut err = 0.0;
        let mut n = 0usize;
        for r in self.rows.iter().filter(|r| r.method == method) {
            err += r.mae * r.cells as f64;
            n += r.cells;
        }
        if n == 0 {
            None
        } else {
            Some(err / n as f64)
        }
    }

    /// Writes `method,replica,layer,mae` rows.
    pub fn write_rows_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        let io_err = |e| Error::io("<writer>", e);
        write!(w, "method,replica,layer,mae\n").map_err(io_err)?;
        for r in &self.rows {
            write!(w, "{},{},{},{}\n", r.method, r.replica, r.layer, r.mae).map_err(io_err)?;
        }
        Ok(())
    }

    /// Writes `method,layer,mean_mae,q25,q75` rows.
    pub fn write_aggregates_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        let io_err = |e| Error::io("<writer>", e);
        write!(w, "method,layer,mean_mae,q25,q75\n").map_err(io_err)?;
        for a in &self.aggregates {
            write!(
                w,
                "{},{},{},{},{}\n",
                a.method, a.layer, a.mean_mae, a.q25, a.q75
            )
            .map_err(io_err)?;
        }
        Ok(())
    }
}

/// Runs the masked-replica benchmark for the configured imputers.
pub fn evaluate_mae(
    panel: &ExportPanel,
    tree: &TaxonomyTree,
    methods: &[ImputerConfig],
    replicas: usize,
    fraction: f64,
    master_seed: u64,
) -> Result<MaeReport> {
    let imputers: Vec<(String, Box<dyn Fn(&ExportPanel, u64) -> Result<ExportPanel> + Sync>)> =
        methods
            .iter()
            .map(|cfg| {
                let cfg = cfg.clone();
                let label = cfg.label();
                let tree = tree.clone();
                let f: Box<dyn Fn(&ExportPanel, u64) -> Result<ExportPanel> + Sync> =
                    Box::new(move |p: &ExportPanel, s: u64| {
                        let mut c = cfg.clone();
                        c.seed = s;
                        impute(p, &tree, &c).map(|(out, _)| out)
                    });
                (label, f)
            })
            .collect();
    evaluate_mae_with(panel, tree, &imputers, replicas, fraction, master_seed)
}

/// Benchmark core over arbitrary imputer closures; each closure receives
/// the masked panel and a seed derived from (master, replica, method).
/// The test set is restricted to fully observed (country, complete-set
/// code) series; masking, reconstruction and scoring all happen inside
/// those series. Replicas run independently (and in parallel) with derived
/// seeds, so reports are deterministic for a given master seed.
pub fn evaluate_mae_with<F>(
    panel: &ExportPanel,
    tree: &TaxonomyTree,
    methods: &[(String, F)],
    replicas: usize,
    fraction: f64,
    master_seed: u64,
) -> Result<MaeReport>
where
    F: Fn(&ExportPanel, u64) -> Result<ExportPanel> + Sync,
{
    if replicas == 0 {
        return Err(Error::Config("replicas must be at least 1".into()));
    }
    if methods.is_empty() {
        return Err(Error::Config("no imputation methods supplied".into()));
    }
    let ny = panel.years().len();
    let complete: BTreeSet<&str> = tree.complete_set().into_iter().collect();
    let mut eligible: Vec<(usize, usize, usize)> = Vec::new();
    let mut layer_of_activity: Vec<Option<u32>> = vec![None; panel.activities().len()];
    for (ai, code) in panel.activities().iter().enumerate() {
        if !complete.contains(code.as_str()) {
            continue;
        }
        layer_of_activity[ai] = tree.layer_of(code);
        for ci in 0..panel.countries().len() {
            let fully = (0..ny).all(|yi| !panel.is_missing(ci, ai, yi));
            if fully {
                for yi in 0..ny {
                    eligible.push((ci, ai, yi));
                }
            }
        }
    }
    if eligible.is_empty() {
        return Err(Error::EvaluationSet(
            "no fully observed (country, complete-set code) series to mask".into(),
        ));
    }

    let replica_ids: Vec<usize> = (0..replicas).collect();
    let rows: Vec<Vec<MaeRow>> = replica_ids
        .par_iter()
        .map(|&rep| -> Result<Vec<MaeRow>> {
            let mask_seed = seed::derive(master_seed, &[rep as u64]);
            let (masked, mask) = panel.mask_eligible(&eligible, fraction, mask_seed)?;
            let hidden = mask.marked();
            let mut out = Vec::new();
            for (mi, (label, imputer)) in methods.iter().enumerate() {
                let method_seed = seed::derive(master_seed, &[rep as u64, mi as u64]);
                let reconstructed = imputer(&masked, method_seed)?;
                // per-layer error accumulation
                let mut acc: Vec<(u32, f64, usize, usize)> = Vec::new();
                for &(ci, ai, yi) in &hidden {
                    let layer = layer_of_activity[ai].expect("eligible cells are in the tree");
                    let truth = panel.value(ci, ai, yi).expect("masked cells were present");
                    let slot = match acc.iter_mut().find(|(l, _, _, _)| *l == layer) {
                        Some(s) => s,
                        None => {
                            acc.push((layer, 0.0, 0, 0));
                            acc.last_mut().unwrap()
                        }
                    };
                    match reconstructed.value(ci, ai, yi) {
                        Some(v) => {
                            slot.1 += (v - truth).abs();
                            slot.2 += 1;
                        }
                        None => slot.3 += 1,
                    }
                }
                acc.sort_by_key(|&(l, _, _, _)| l);
                for (layer, err, cells, unfilled) in acc {
                    out.push(MaeRow {
                        method: label.clone(),
                        replica: rep,
                        layer,
                        mae: if cells > 0 { err / cells as f64 } else { 0.0 },
                        cells,
                        unfilled,
                    });
                }
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<MaeRow> = rows.into_iter().flatten().collect();

    // aggregates per (method, layer)
    let mut keys: Vec<(String, u32)> = rows.iter().map(|r| (r.method.clone(), r.layer)).collect();
    keys.sort();
    keys.dedup();
    let mut aggregates = Vec::new();
    for (method, layer) in keys {
        let mut values: Vec<f64> = rows
            .iter()
            .filter(|r| r.method == method && r.layer == layer)
            .map(|r| r.mae)
            .collect();
        values.sort_by(f64::total_cmp);
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        aggregates.push(MaeAggregate {
            method,
            layer,
            mean_mae: mean,
            q25: stats::quantile(&values, 0.25),
            q75: stats::quantile(&values, 0.75),
        });
    }
    Ok(MaeReport {
        rows,
        aggregates,
        replicas,
        fraction,
    })
}
