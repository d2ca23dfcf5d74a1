//! The time-lagged Assist Matrix, its statistical validation against the
//! BiCM null ensemble, and the aggregated directed progression network.
//!
//! For base year t and lag delta the Assist Matrix weighs how often
//! competitiveness in activity a at t co-occurs with competitiveness in a'
//! at t+delta, normalized by the ubiquity of a at t and the diversification
//! of each country at t+delta:
//!
//! ```text
//! B_aa' = sum_c [ M_ca(t) / d_a(t) ] * [ M_ca'(t+delta) / u_c(t+delta) ]
//! ```
//!
//! A link is validated at a given (t, delta) when its empirical weight
//! strictly exceeds the per-link percentile of its null distribution; the
//! strict inequality refuses links whose empirical value merely ties a
//! discrete null atom. A link survives a delta when it is validated at
//! every available year pair, and the progression network weighs each edge
//! by the number of delta values at which it survived.

use std::collections::HashMap;
use std::io::Write;

use ndarray::{Array2, Axis};
use rayon::prelude::*;

use crate::bicm;
use crate::complexity::{CompetitivenessMatrix, MatrixKind};
use crate::error::{Error, Result};
use crate::seed;
use crate::taxonomy::TaxonomyTree;

/// Activity x activity lagged co-occurrence weights for one (t, delta).
/// Rows of activities with zero ubiquity at t are all-zero and flagged.
#[derive(Debug, Clone)]
pub struct AssistMatrix {
    activities: Vec<String>,
    pub t: i32,
    pub delta: u32,
    cells: Array2<f64>,
    zero_degree_rows: Vec<usize>,
}

impl AssistMatrix {
    pub fn activities(&self) -> &[String] {
        &self.activities
    }

    pub fn cells(&self) -> &Array2<f64> {
        &self.cells
    }

    pub fn value(&self, source: usize, target: usize) -> f64 {
        self.cells[[source, target]]
    }

    /// Rows whose activity had zero ubiquity at t.
    pub fn zero_degree_rows(&self) -> &[usize] {
        &self.zero_degree_rows
    }
}

/// Computes the Assist Matrix between two binary matrices at t and t+delta
/// over identical axes.
pub fn assist_matrix(
    m_t: &CompetitivenessMatrix,
    m_t_delta: &CompetitivenessMatrix,
) -> Result<AssistMatrix> {
    if m_t.kind() != MatrixKind::Binary || m_t_delta.kind() != MatrixKind::Binary {
        return Err(Error::Kind("assist matrix expects binary matrices".into()));
    }
    if m_t.countries() != m_t_delta.countries() || m_t.activities() != m_t_delta.activities() {
        return Err(Error::Alignment(
            "assist matrix inputs must share both axes".into(),
        ));
    }
    if m_t_delta.year() < m_t.year() {
        return Err(Error::Range(format!(
            "lagged matrix year {} precedes base year {}",
            m_t_delta.year(),
            m_t.year()
        )));
    }
    let cells = assist_cells(m_t.cells(), m_t_delta.cells());
    let zero_degree_rows = m_t
        .cells()
        .sum_axis(Axis(0))
        .iter()
        .enumerate()
        .filter(|(_, &d)| d == 0.0)
        .map(|(i, _)| i)
        .collect();
    Ok(AssistMatrix {
        activities: m_t.activities().to_vec(),
        t: m_t.year(),
        delta: (m_t_delta.year() - m_t.year()) as u32,
        cells,
        zero_degree_rows,
    })
}

/// Raw Assist Matrix kernel; degrees are recomputed from the given
/// matrices, so it serves both the empirical and the null computation.
fn assist_cells(m_t: &Array2<f64>, m_td: &Array2<f64>) -> Array2<f64> {
    let d = m_t.sum_axis(Axis(0)); // ubiquity at t
    let u = m_td.sum_axis(Axis(1)); // diversification at t+delta
    let mut left = m_t.clone();
    for (mut col, &da) in left.columns_mut().into_iter().zip(d.iter()) {
        if da > 0.0 {
            col.mapv_inplace(|v| v / da);
        }
    }
    let mut right = m_td.clone();
    for (mut row, &uc) in right.rows_mut().into_iter().zip(u.iter()) {
        if uc > 0.0 {
            row.mapv_inplace(|v| v / uc);
        } else {
            row.fill(0.0);
        }
    }
    left.t().dot(&right)
}

/// Options for the statistical link validation.
#[derive(Debug, Clone)]
pub struct ValidationOptions {
    /// Null matrices drawn per (t, delta); at least 20.
    pub ensemble: usize,
    /// Per-link percentile threshold in [0, 100).
    pub percentile: f64,
    /// BiCM degree-matching tolerance.
    pub fit_tol: f64,
    /// BiCM iteration cap.
    pub fit_max_iter: usize,
    /// Master seed; per-task seeds are derived from it.
    pub seed: u64,
    /// Compare each link against the pooled null distribution of all links
    /// instead of its own (off by default).
    pub global_threshold: bool,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        ValidationOptions {
            ensemble: 1000,
            percentile: 95.0,
            fit_tol: 1e-6,
            fit_max_iter: 5000,
            seed: 0,
            global_threshold: false,
        }
    }
}

/// Adjacency of validated links at one delta.
#[derive(Debug, Clone)]
pub struct ValidatedAdjacency {
    pub activities: Vec<String>,
    pub delta: u32,
    pub validated: Array2<bool>,
    /// Number of (t, t+delta) year pairs that entered the intersection.
    pub year_pairs: usize,
}

fn check_year_series(mats: &[CompetitivenessMatrix]) -> Result<()> {
    if mats.is_empty() {
        return Err(Error::Range("no yearly matrices supplied".into()));
    }
    let first = &mats[0];
    for (i, m) in mats.iter().enumerate() {
        if m.kind() != MatrixKind::Binary {
            return Err(Error::Kind(format!(
                "year {} matrix is {}, expected binary",
                m.year(),
                m.kind().as_str()
            )));
        }
        if m.countries() != first.countries() || m.activities() != first.activities() {
            return Err(Error::Alignment(format!(
                "matrix {i} has different axes from the first"
            )));
        }
        if i > 0 && m.year() != mats[i - 1].year() + 1 {
            return Err(Error::Alignment(format!(
                "matrix years must be consecutive, got {} after {}",
                m.year(),
                mats[i - 1].year()
            )));
        }
    }
    Ok(())
}

/// Validates every link at a fixed delta: a link survives iff its empirical
/// assist weight strictly exceeds the null percentile at every available
/// (t, t+delta) pair. Year pairs are processed independently (and in
/// parallel); seeds are derived per (delta, pair, draw, side), so the result
/// does not depend on the worker count.
pub fn validate_delta(
    mats: &[CompetitivenessMatrix],
    delta: u32,
    opts: &ValidationOptions,
) -> Result<ValidatedAdjacency> {
    check_year_series(mats)?;
    if opts.ensemble < 20 {
        return Err(Error::Config(format!(
            "ensemble must be at least 20 for a meaningful percentile, got {}",
            opts.ensemble
        )));
    }
    if !(0.0..100.0).contains(&opts.percentile) {
        return Err(Error::Config(format!(
            "percentile must lie in [0, 100), got {}",
            opts.percentile
        )));
    }
    let n_years = mats.len();
    if (delta as usize) >= n_years {
        return Err(Error::Range(format!(
            "delta {} leaves no (t, t+delta) pair among {} years",
            delta, n_years
        )));
    }
    let pairs: Vec<usize> = (0..n_years - delta as usize).collect();

    let per_pair: Vec<Array2<bool>> = pairs
        .par_iter()
        .map(|&ti| validate_pair(mats, ti, delta, opts))
        .collect::<Result<Vec<_>>>()?;

    let na = mats[0].activities().len();
    let mut validated = Array2::from_elem((na, na), true);
    for adj in &per_pair {
        ndarray::Zip::from(&mut validated)
            .and(adj)
            .for_each(|v, &a| *v = *v && a);
    }
    Ok(ValidatedAdjacency {
        activities: mats[0].activities().to_vec(),
        delta,
        validated,
        year_pairs: pairs.len(),
    })
}

fn validate_pair(
    mats: &[CompetitivenessMatrix],
    ti: usize,
    delta: u32,
    opts: &ValidationOptions,
) -> Result<Array2<bool>> {
    let m_t = &mats[ti];
    let m_td = &mats[ti + delta as usize];
    let empirical = assist_cells(m_t.cells(), m_td.cells());

    let (p_t, _, _) = bicm::fit_probabilities(m_t.cells(), opts.fit_tol, opts.fit_max_iter)?;
    let (p_td, _, _) = bicm::fit_probabilities(m_td.cells(), opts.fit_tol, opts.fit_max_iter)?;

    let model_t = raw_model(p_t);
    let model_td = raw_model(p_td);

    let na = m_t.activities().len();
    let dim = m_t.cells().raw_dim();

    if opts.global_threshold {
        // Pooled null distribution across every link of the pair.
        let mut pool: Vec<f64> = Vec::with_capacity(opts.ensemble * na * na);
        let mut s1 = Array2::zeros(dim);
        let mut s2 = Array2::zeros(dim);
        for draw in 0..opts.ensemble {
            sample_pair(&model_t, &model_td, opts.seed, delta, ti, draw, &mut s1, &mut s2);
            let null = assist_cells(&s1, &s2);
            pool.extend(null.iter().copied());
        }
        let threshold = percentile_of(&mut pool, opts.percentile);
        return Ok(empirical.mapv(|e| e > threshold));
    }

    // Per-link: count null draws strictly below the empirical weight.
    // empirical > percentile_value(r) is equivalent to at least r of the
    // ensemble values lying strictly below the empirical weight, which
    // avoids storing the whole null ensemble.
    let mut below = Array2::<u32>::zeros((na, na));
    let mut s1 = Array2::zeros(dim);
    let mut s2 = Array2::zeros(dim);
    for draw in 0..opts.ensemble {
        sample_pair(&model_t, &model_td, opts.seed, delta, ti, draw, &mut s1, &mut s2);
        let null = assist_cells(&s1, &s2);
        ndarray::Zip::from(&mut below)
            .and(&null)
            .and(&empirical)
            .for_each(|b, &n, &e| {
                if n < e {
                    *b += 1;
                }
            });
    }
    if opts.percentile == 0.0 {
        // boundary: the 0th percentile threshold is 0, so every link with
        // positive empirical weight survives
        return Ok(empirical.mapv(|e| e > 0.0));
    }
    let rank = ((opts.percentile / 100.0) * opts.ensemble as f64).ceil() as u32;
    let rank = rank.max(1);
    Ok(ndarray::Zip::from(&below).map_collect(|&b| b >= rank))
}

/// Minimal stand-in for a fitted model in the hot path (probabilities only).
struct RawModel {
    p: Array2<f64>,
}

fn raw_model(p: Array2<f64>) -> RawModel {
    RawModel { p }
}

impl RawModel {
    fn sample_into(&self, seed_value: u64, out: &mut Array2<f64>) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed_value);
        for (o, &p) in out.iter_mut().zip(self.p.iter()) {
            *o = if rng.random::<f64>() < p { 1.0 } else { 0.0 };
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn sample_pair(
    model_t: &RawModel,
    model_td: &RawModel,
    master: u64,
    delta: u32,
    ti: usize,
    draw: usize,
    s1: &mut Array2<f64>,
    s2: &mut Array2<f64>,
) {
    // Independent draws at t and t+delta (sides 0 and 1); at delta = 0 the
    // two sides still use independent seeds, so a deterministic empirical
    // structure is not echoed by the null.
    let s_t = seed::derive(master, &[delta as u64, ti as u64, draw as u64, 0]);
    let s_td = seed::derive(master, &[delta as u64, ti as u64, draw as u64, 1]);
    model_t.sample_into(s_t, s1);
    model_td.sample_into(s_td, s2);
}

/// Nearest-rank percentile (values are consumed); percentile 0 maps to 0,
/// the infimum of assist weights.
fn percentile_of(values: &mut [f64], percentile: f64) -> f64 {
    if percentile == 0.0 {
        return 0.0;
    }
    let rank = ((percentile / 100.0) * values.len() as f64).ceil() as usize;
    let idx = rank.clamp(1, values.len()) - 1;
    let (_, v, _) = values.select_nth_unstable_by(idx, f64::total_cmp);
    *v
}

/// A directed validated edge; weight counts the deltas at which the link
/// survived.
#[derive(Debug, Clone, PartialEq)]
pub struct ProgressionEdge {
    pub source: String,
    pub target: String,
    pub weight: u32,
    pub first_delta: u32,
    pub last_delta: u32,
}

/// The delta-aggregated progression network.
#[derive(Debug, Clone)]
pub struct ProgressionNetwork {
    pub activities: Vec<String>,
    pub edges: Vec<ProgressionEdge>,
    pub delta_max: u32,
    pub ensemble: usize,
    pub percentile: f64,
    pub years: (i32, i32),
}

impl ProgressionNetwork {
    pub fn edge(&self, source: &str, target: &str) -> Option<&ProgressionEdge> {
        self.edges
            .iter()
            .find(|e| e.source == source && e.target == target)
    }

    /// Writes `source,target,weight,first_delta,last_delta` rows.
    pub fn write_edges_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        let io_err = |e| Error::io("<writer>", e);
        write!(w, "source,target,weight,first_delta,last_delta\n").map_err(io_err)?;
        for e in &self.edges {
            write!(
                w,
                "{},{},{},{},{}\n",
                e.source, e.target, e.weight, e.first_delta, e.last_delta
            )
            .map_err(io_err)?;
        }
        Ok(())
    }

    /// Writes `activity,kind,layer` rows; activities found in the taxonomy
    /// are services with their layer, everything else is a good.
    pub fn write_nodes_csv<W: Write>(&self, tree: Option<&TaxonomyTree>, w: &mut W) -> Result<()> {
        let io_err = |e| Error::io("<writer>", e);
        write!(w, "activity,kind,layer\n").map_err(io_err)?;
        for a in &self.activities {
            match tree.and_then(|t| t.layer_of(a)) {
                Some(layer) => write!(w, "{a},service,{layer}\n").map_err(io_err)?,
                None => write!(w, "{a},good,\n").map_err(io_err)?,
            }
        }
        Ok(())
    }
}

/// Runs [`validate_delta`] for every delta in `[0, delta_max]` and collapses
/// the results into a weighted directed network. Edges that never validate
/// are omitted; isolated activities are permitted.
pub fn progression_network(
    mats: &[CompetitivenessMatrix],
    delta_max: u32,
    opts: &ValidationOptions,
) -> Result<ProgressionNetwork> {
    check_year_series(mats)?;
    let per_delta: Vec<ValidatedAdjacency> = (0..=delta_max)
        .map(|delta| validate_delta(mats, delta, opts))
        .collect::<Result<Vec<_>>>()?;

    let activities = mats[0].activities().to_vec();
    let na = activities.len();
    let mut edges = Vec::new();
    for s in 0..na {
        for t in 0..na {
            let mut weight = 0;
            let mut first = None;
            let mut last = 0;
            for adj in &per_delta {
                if adj.validated[[s, t]] {
                    weight += 1;
                    first.get_or_insert(adj.delta);
                    last = adj.delta;
                }
            }
            if weight > 0 {
                edges.push(ProgressionEdge {
                    source: activities[s].clone(),
                    target: activities[t].clone(),
                    weight,
                    first_delta: first.unwrap(),
                    last_delta: last,
                });
            }
        }
    }
    Ok(ProgressionNetwork {
        activities,
        edges,
        delta_max,
        ensemble: opts.ensemble,
        percentile: opts.percentile,
        years: (mats[0].year(), mats[mats.len() - 1].year()),
    })
}

/// Node attribute helper used by reporting: services carry their taxonomy
/// layer, goods do not.
pub fn node_kinds<'a>(
    activities: &'a [String],
    tree: &TaxonomyTree,
) -> HashMap<&'a str, Option<u32>> {
    activities
        .iter()
        .map(|a| (a.as_str(), tree.layer_of(a)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn binary(year: i32, cells: Array2<f64>) -> CompetitivenessMatrix {
        let (nr, nc) = cells.dim();
        CompetitivenessMatrix::binary(
            (0..nr).map(|i| format!("C{i:03}")).collect(),
            (0..nc).map(|i| format!("A{i:03}")).collect(),
            year,
            cells,
        )
        .unwrap()
    }

    #[test]
    fn assist_identity_hand_case() {
        // oracle: M_t = M_td = I, all degrees 1, so B = I
        let m = binary(2000, array![[1.0, 0.0], [0.0, 1.0]]);
        let md = binary(2001, array![[1.0, 0.0], [0.0, 1.0]]);
        let b = assist_matrix(&m, &md).unwrap();
        assert_eq!(b.value(0, 0), 1.0);
        assert_eq!(b.value(0, 1), 0.0);
        assert_eq!(b.value(1, 0), 0.0);
        assert_eq!(b.value(1, 1), 1.0);
        assert_eq!(b.delta, 1);
    }

    #[test]
    fn assist_all_ones_hand_case() {
        // oracle: two countries, each term (1/2)*(1/2), summed over c: 0.5
        let m = binary(2000, array![[1.0, 1.0], [1.0, 1.0]]);
        let b = assist_matrix(&m, &m).unwrap();
        for &v in b.cells().iter() {
            assert!((v - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn assist_rows_sum_to_one_with_positive_degrees() {
        let m = binary(
            2000,
            array![[1.0, 1.0, 0.0], [0.0, 1.0, 1.0], [1.0, 0.0, 1.0]],
        );
        let md = binary(
            2001,
            array![[1.0, 0.0, 1.0], [1.0, 1.0, 0.0], [0.0, 1.0, 1.0]],
        );
        let b = assist_matrix(&m, &md).unwrap();
        for row in b.cells().rows() {
            assert!((row.sum() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn assist_zero_degree_activity_gives_flagged_zero_row() {
        let m = binary(2000, array![[1.0, 0.0], [1.0, 0.0]]);
        let md = binary(2001, array![[1.0, 1.0], [1.0, 1.0]]);
        let b = assist_matrix(&m, &md).unwrap();
        assert_eq!(b.zero_degree_rows(), &[1]);
        assert_eq!(b.value(1, 0), 0.0);
        assert_eq!(b.value(1, 1), 0.0);
    }

    #[test]
    fn assist_rejects_mismatched_axes() {
        let m = binary(2000, array![[1.0, 0.0], [0.0, 1.0]]);
        let other = CompetitivenessMatrix::binary(
            vec!["X".into(), "Y".into()],
            vec!["A000".into(), "A001".into()],
            2001,
            array![[1.0, 0.0], [0.0, 1.0]],
        )
        .unwrap();
        assert!(matches!(
            assist_matrix(&m, &other),
            Err(Error::Alignment(_))
        ));
    }

    fn year_series(seed: u64, years: usize, nc: usize, na: usize) -> Vec<CompetitivenessMatrix> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..years)
            .map(|t| {
                let mut cells = Array2::zeros((nc, na));
                for v in cells.iter_mut() {
                    *v = if rng.random::<f64>() < 0.4 { 1.0 } else { 0.0 };
                }
                // keep degrees positive
                for r in 0..nc {
                    if cells.row(r).sum() == 0.0 {
                        let j = rng.random_range(0..na);
                        cells[[r, j]] = 1.0;
                    }
                }
                for c in 0..na {
                    if cells.column(c).sum() == 0.0 {
                        let i = rng.random_range(0..nc);
                        cells[[i, c]] = 1.0;
                    }
                }
                binary(2000 + t as i32, cells)
            })
            .collect()
    }

    #[test]
    fn percentile_zero_validates_every_positive_link() {
        let mats = year_series(5, 3, 8, 5);
        let opts = ValidationOptions {
            ensemble: 50,
            percentile: 0.0,
            seed: 1,
            ..Default::default()
        };
        let adj = validate_delta(&mats, 1, &opts).unwrap();
        for t in 0..2usize {
            let emp = assist_cells(mats[t].cells(), mats[t + 1].cells());
            for ((i, j), &v) in adj.validated.indexed_iter() {
                if v {
                    assert!(emp[[i, j]] > 0.0);
                }
            }
        }
        // and every link positive in all pairs is validated
        let emp0 = assist_cells(mats[0].cells(), mats[1].cells());
        let emp1 = assist_cells(mats[1].cells(), mats[2].cells());
        for ((i, j), &v) in adj.validated.indexed_iter() {
            assert_eq!(v, emp0[[i, j]] > 0.0 && emp1[[i, j]] > 0.0);
        }
    }

    #[test]
    fn validation_rejects_small_ensembles_and_bad_ranges() {
        let mats = year_series(5, 3, 6, 4);
        let mut opts = ValidationOptions::default();
        opts.ensemble = 5;
        assert!(matches!(
            validate_delta(&mats, 1, &opts),
            Err(Error::Config(_))
        ));
        opts.ensemble = 50;
        assert!(matches!(
            validate_delta(&mats, 3, &opts),
            Err(Error::Range(_))
        ));
    }

    #[test]
    fn identity_diagonal_validated_at_delta_zero() {
        // deterministic diagonal mass is rarely reproduced by two
        // independent null draws
        let n = 10;
        let mut cells = Array2::zeros((n, n));
        for i in 0..n {
            cells[[i, i]] = 1.0;
        }
        let mats = vec![binary(2000, cells)];
        let opts = ValidationOptions {
            ensemble: 1000,
            percentile: 95.0,
            seed: 11,
            ..Default::default()
        };
        let adj = validate_delta(&mats, 0, &opts).unwrap();
        for i in 0..n {
            assert!(adj.validated[[i, i]], "diagonal {i} not validated");
        }
    }

    #[test]
    fn progression_weights_at_delta_zero_are_at_most_one() {
        let mats = year_series(7, 4, 10, 6);
        let opts = ValidationOptions {
            ensemble: 60,
            percentile: 80.0,
            seed: 3,
            ..Default::default()
        };
        let net = progression_network(&mats, 0, &opts).unwrap();
        assert!(net.edges.iter().all(|e| e.weight == 1));
        assert!(net
            .edges
            .iter()
            .all(|e| e.first_delta == 0 && e.last_delta == 0));
    }

    #[test]
    fn edge_csv_is_stable() {
        let mats = year_series(9, 3, 8, 5);
        let opts = ValidationOptions {
            ensemble: 40,
            percentile: 50.0,
            seed: 2,
            ..Default::default()
        };
        let net = progression_network(&mats, 1, &opts).unwrap();
        let mut a = Vec::new();
        net.write_edges_csv(&mut a).unwrap();
        let net2 = progression_network(&mats, 1, &opts).unwrap();
        let mut b = Vec::new();
        net2.write_edges_csv(&mut b).unwrap();
        assert_eq!(a, b);
    }
}
