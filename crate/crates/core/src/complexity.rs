//! Competitiveness matrices (RCA, Market Share, binary M) and the
//! fitness-complexity fixed point in its intensive (binary) and extensive
//! (market-share) variants, plus rank tables over time.

use std::collections::BTreeSet;
use std::io::Write;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::panel::{ExportPanel, SmoothingConfig};

/// Numerical floor applied to fitness/complexity entries: values may
/// legitimately decay towards zero, the floor only prevents division
/// blowups while preserving the ordering.
const VALUE_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixKind {
    /// Revealed comparative advantage.
    Rca,
    /// Column-normalized market shares.
    MarketShare,
    /// Binary competitiveness (RCA thresholded).
    Binary,
}

impl MatrixKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            MatrixKind::Rca => "rca",
            MatrixKind::MarketShare => "ms",
            MatrixKind::Binary => "binary",
        }
    }
}

/// A per-year country x activity matrix. Missing export cells are mapped to
/// zero at construction and flagged in `missing_cells`; rows and columns
/// with zero totals are flagged rather than silently kept.
#[derive(Debug, Clone)]
pub struct CompetitivenessMatrix {
    countries: Vec<String>,
    activities: Vec<String>,
    year: i32,
    kind: MatrixKind,
    cells: Array2<f64>,
    missing_cells: Vec<(usize, usize)>,
    zero_rows: Vec<usize>,
    zero_cols: Vec<usize>,
}

impl CompetitivenessMatrix {
    /// Builds a binary matrix from raw 0/1 cells.
    pub fn binary(
        countries: Vec<String>,
        activities: Vec<String>,
        year: i32,
        cells: Array2<f64>,
    ) -> Result<Self> {
        if cells.shape() != [countries.len(), activities.len()] {
            return Err(Error::Alignment(format!(
                "cell shape {:?} does not match axes ({}, {})",
                cells.shape(),
                countries.len(),
                activities.len()
            )));
        }
        if cells.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::Kind("binary cells must be 0 or 1".into()));
        }
        let zero_rows = zero_rows_of(&cells);
        let zero_cols = zero_cols_of(&cells);
        Ok(CompetitivenessMatrix {
            countries,
            activities,
            year,
            kind: MatrixKind::Binary,
            cells,
            missing_cells: Vec::new(),
            zero_rows,
            zero_cols,
        })
    }

    pub fn countries(&self) -> &[String] {
        &self.countries
    }

    pub fn activities(&self) -> &[String] {
        &self.activities
    }

    pub fn year(&self) -> i32 {
        self.year
    }

    pub fn kind(&self) -> MatrixKind {
        self.kind
    }

    pub fn cells(&self) -> &Array2<f64> {
        &self.cells
    }

    pub fn value(&self, country: usize, activity: usize) -> f64 {
        self.cells[[country, activity]]
    }

    /// Cells that were missing in the source panel (mapped to zero here).
    pub fn missing_cells(&self) -> &[(usize, usize)] {
        &self.missing_cells
    }

    pub fn zero_rows(&self) -> &[usize] {
        &self.zero_rows
    }

    pub fn zero_cols(&self) -> &[usize] {
        &self.zero_cols
    }

    /// Row sums: number of competitively exported activities when binary.
    pub fn diversification(&self) -> Array1<f64> {
        self.cells.sum_axis(ndarray::Axis(1))
    }

    /// Column sums: number of competitive exporters when binary.
    pub fn ubiquity(&self) -> Array1<f64> {
        self.cells.sum_axis(ndarray::Axis(0))
    }
}

fn zero_rows_of(cells: &Array2<f64>) -> Vec<usize> {
    cells
        .rows()
        .into_iter()
        .enumerate()
        .filter(|(_, r)| r.iter().all(|&v| v == 0.0))
        .map(|(i, _)| i)
        .collect()
}

fn zero_cols_of(cells: &Array2<f64>) -> Vec<usize> {
    cells
        .columns()
        .into_iter()
        .enumerate()
        .filter(|(_, c)| c.iter().all(|&v| v == 0.0))
        .map(|(i, _)| i)
        .collect()
}

/// Extracts one year slice of the panel with missing mapped to zero.
/// Returns (cells, missing flags).
fn year_slice(panel: &ExportPanel, year: i32) -> Result<(Array2<f64>, Vec<(usize, usize)>)> {
    let yi = panel
        .year_position(year)
        .ok_or_else(|| Error::Range(format!("year {year} is outside the panel")))?;
    let (nc, na, _) = panel.shape();
    let mut cells = Array2::zeros((nc, na));
    let mut missing = Vec::new();
    for ci in 0..nc {
        for ai in 0..na {
            match panel.value(ci, ai, yi) {
                Some(v) => cells[[ci, ai]] = v,
                None => missing.push((ci, ai)),
            }
        }
    }
    if cells.iter().all(|&v| v == 0.0) {
        return Err(Error::DegenerateSlice(format!(
            "year {year}: all cells are zero or missing"
        )));
    }
    Ok((cells, missing))
}

/// Revealed comparative advantage for one year:
/// `RCA = (E_ca / sum_a E_ca) / (sum_c E_ca / sum_ca E_ca)`.
/// Countries with zero totals yield all-zero rows and activities with zero
/// totals all-zero columns, both flagged.
pub fn rca(panel: &ExportPanel, year: i32) -> Result<CompetitivenessMatrix> {
    let (cells, missing_cells) = year_slice(panel, year)?;
    let row_tot = cells.sum_axis(ndarray::Axis(1));
    let col_tot = cells.sum_axis(ndarray::Axis(0));
    let total: f64 = row_tot.sum();
    let mut out = Array2::zeros(cells.raw_dim());
    for ((ci, ai), &v) in cells.indexed_iter() {
        if row_tot[ci] > 0.0 && col_tot[ai] > 0.0 {
            out[[ci, ai]] = (v / row_tot[ci]) / (col_tot[ai] / total);
        }
    }
    let zero_rows = zero_rows_of(&out);
    let zero_cols = zero_cols_of(&out);
    Ok(CompetitivenessMatrix {
        countries: panel.countries().to_vec(),
        activities: panel.activities().to_vec(),
        year,
        kind: MatrixKind::Rca,
        cells: out,
        missing_cells,
        zero_rows,
        zero_cols,
    })
}

/// Market share for one year: `MS = E_ca / sum_c E_ca`. Columns with data
/// sum to one.
pub fn market_share(panel: &ExportPanel, year: i32) -> Result<CompetitivenessMatrix> {
    let (cells, missing_cells) = year_slice(panel, year)?;
    let col_tot = cells.sum_axis(ndarray::Axis(0));
    let mut out = Array2::zeros(cells.raw_dim());
    for ((ci, ai), &v) in cells.indexed_iter() {
        if col_tot[ai] > 0.0 {
            out[[ci, ai]] = v / col_tot[ai];
        }
    }
    let zero_rows = zero_rows_of(&out);
    let zero_cols = zero_cols_of(&out);
    Ok(CompetitivenessMatrix {
        countries: panel.countries().to_vec(),
        activities: panel.activities().to_vec(),
        year,
        kind: MatrixKind::MarketShare,
        cells: out,
        missing_cells,
        zero_rows,
        zero_cols,
    })
}

/// Thresholds an RCA matrix into the binary M matrix; a cell is 1 iff
/// `RCA >= threshold` (inclusive, the natural threshold being 1).
pub fn binarize(m: &CompetitivenessMatrix, threshold: f64) -> Result<CompetitivenessMatrix> {
    if m.kind != MatrixKind::Rca {
        return Err(Error::Kind(format!(
            "binarize expects an rca matrix, got {}",
            m.kind.as_str()
        )));
    }
    let cells = m.cells.mapv(|v| if v >= threshold { 1.0 } else { 0.0 });
    let zero_rows = zero_rows_of(&cells);
    let zero_cols = zero_cols_of(&cells);
    Ok(CompetitivenessMatrix {
        countries: m.countries.clone(),
        activities: m.activities.clone(),
        year: m.year,
        kind: MatrixKind::Binary,
        cells,
        missing_cells: m.missing_cells.clone(),
        zero_rows,
        zero_cols,
    })
}

/// Smooths a year-ordered series of matrices cell by cell (used on RCA and
/// market-share series before binarization or the fixed point).
pub fn smooth_matrix_series(
    mats: &[CompetitivenessMatrix],
    cfg: &SmoothingConfig,
) -> Result<Vec<CompetitivenessMatrix>> {
    if mats.is_empty() {
        return Ok(Vec::new());
    }
    let first = &mats[0];
    for (i, m) in mats.iter().enumerate() {
        if m.countries != first.countries || m.activities != first.activities {
            return Err(Error::Alignment(format!(
                "matrix {i} has different axes from the first"
            )));
        }
        if m.kind != first.kind {
            return Err(Error::Kind("mixed matrix kinds in series".into()));
        }
        if i > 0 && m.year != mats[i - 1].year + 1 {
            return Err(Error::Alignment(format!(
                "years must be consecutive, got {} after {}",
                m.year,
                mats[i - 1].year
            )));
        }
    }
    let alpha = cfg.alpha();
    let mut out: Vec<CompetitivenessMatrix> = mats.to_vec();
    for t in 1..out.len() {
        let (head, tail) = out.split_at_mut(t);
        let prev = &head[t - 1].cells;
        let cur = &mut tail[0].cells;
        ndarray::Zip::from(cur).and(prev).for_each(|c, &p| {
            *c = alpha * *c + (1.0 - alpha) * p;
        });
    }
    for m in &mut out {
        m.zero_rows = zero_rows_of(&m.cells);
        m.zero_cols = zero_cols_of(&m.cells);
    }
    Ok(out)
}

/// Removes flagged all-zero rows and columns, returning the reduced matrix
/// together with the dropped labels.
pub fn drop_zero_rows_cols(
    m: &CompetitivenessMatrix,
) -> (CompetitivenessMatrix, Vec<String>, Vec<String>) {
    let dropped_rows: Vec<String> = m.zero_rows.iter().map(|&i| m.countries[i].clone()).collect();
    let dropped_cols: Vec<String> = m.zero_cols.iter().map(|&i| m.activities[i].clone()).collect();
    if dropped_rows.is_empty() && dropped_cols.is_empty() {
        return (m.clone(), dropped_rows, dropped_cols);
    }
    let zr: BTreeSet<usize> = m.zero_rows.iter().copied().collect();
    let zc: BTreeSet<usize> = m.zero_cols.iter().copied().collect();
    let keep_rows: Vec<usize> = (0..m.countries.len()).filter(|i| !zr.contains(i)).collect();
    let keep_cols: Vec<usize> = (0..m.activities.len()).filter(|i| !zc.contains(i)).collect();
    let mut cells = Array2::zeros((keep_rows.len(), keep_cols.len()));
    for (ni, &ci) in keep_rows.iter().enumerate() {
        for (nj, &aj) in keep_cols.iter().enumerate() {
            cells[[ni, nj]] = m.cells[[ci, aj]];
        }
    }
    let missing_cells = m
        .missing_cells
        .iter()
        .filter_map(|&(ci, ai)| {
            let ni = keep_rows.binary_search(&ci).ok()?;
            let nj = keep_cols.binary_search(&ai).ok()?;
            Some((ni, nj))
        })
        .collect();
    let reduced = CompetitivenessMatrix {
        countries: keep_rows.iter().map(|&i| m.countries[i].clone()).collect(),
        activities: keep_cols.iter().map(|&i| m.activities[i].clone()).collect(),
        year: m.year,
        kind: m.kind,
        cells,
        missing_cells,
        zero_rows: Vec::new(),
        zero_cols: Vec::new(),
    };
    (reduced, dropped_rows, dropped_cols)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Fixed point of the binary M matrix.
    Intensive,
    /// Fixed point of the market-share matrix; correlates with country size.
    Extensive,
}

impl Variant {
    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::Intensive => "intensive",
            Variant::Extensive => "extensive",
        }
    }
}

/// Converged fitness/complexity vectors with iteration diagnostics. Both
/// vectors are mean-normalized to 1 after every iteration.
#[derive(Debug, Clone)]
pub struct FitnessResult {
    pub countries: Vec<String>,
    pub activities: Vec<String>,
    pub year: i32,
    pub fitness: Vec<f64>,
    pub complexity: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub residual: f64,
    pub variant: Variant,
}

/// Runs the coupled fitness-complexity iteration from the all-ones initial
/// complexity vector:
///
/// ```text
/// F~_c = sum_a m_ca * Q_a        (then F normalized by its mean)
/// Q~_a = 1 / sum_c m_ca / F_c    (then Q normalized by its mean)
/// ```
///
/// Stops when the max relative change of both vectors drops below `tol` or
/// after `max_iter` iterations. The fixed point does not depend on the
/// initial condition, which re-running from random starts can verify.
pub fn fitness_complexity(
    m: &CompetitivenessMatrix,
    tol: f64,
    max_iter: usize,
) -> Result<FitnessResult> {
    let q0 = vec![1.0; m.activities.len()];
    fitness_complexity_from(m, &q0, tol, max_iter)
}

/// Same iteration from an explicit initial complexity vector.
pub fn fitness_complexity_from(
    m: &CompetitivenessMatrix,
    initial_q: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<FitnessResult> {
    let variant = match m.kind {
        MatrixKind::Binary => Variant::Intensive,
        MatrixKind::MarketShare => Variant::Extensive,
        MatrixKind::Rca => {
            return Err(Error::Kind(
                "fitness expects a binary or market-share matrix, got rca".into(),
            ))
        }
    };
    if !(tol > 0.0) {
        return Err(Error::Config(format!("tol must be positive, got {tol}")));
    }
    if max_iter == 0 {
        return Err(Error::Config("max_iter must be at least 1".into()));
    }
    if !m.zero_rows.is_empty() || !m.zero_cols.is_empty() {
        return Err(Error::ZeroAxis(format!(
            "matrix has {} all-zero rows and {} all-zero columns; drop them first \
             (drop_zero_rows_cols)",
            m.zero_rows.len(),
            m.zero_cols.len()
        )));
    }
    if initial_q.len() != m.activities.len() {
        return Err(Error::Alignment(format!(
            "initial complexity has {} entries for {} activities",
            initial_q.len(),
            m.activities.len()
        )));
    }
    if initial_q.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(Error::Domain(
            "initial complexity entries must be positive and finite".into(),
        ));
    }

    let cells = &m.cells;
    let nc = m.countries.len();
    let na = m.activities.len();
    let mut q = Array1::from_iter(initial_q.iter().copied());
    normalize_mean(&mut q);
    let mut f = Array1::from_elem(nc, 1.0);
    let mut iterations = 0;
    let mut residual = f64::INFINITY;
    let mut converged = false;

    let mut inv_f = Array1::zeros(nc);
    for n in 1..=max_iter {
        iterations = n;
        let mut f_new = cells.dot(&q);
        normalize_mean(&mut f_new);
        f_new.mapv_inplace(|v| v.max(VALUE_FLOOR));

        for i in 0..nc {
            inv_f[i] = 1.0 / f_new[i];
        }
        let denom = cells.t().dot(&inv_f);
        let mut q_new = Array1::from_elem(na, 0.0);
        for a in 0..na {
            q_new[a] = 1.0 / denom[a];
        }
        normalize_mean(&mut q_new);
        q_new.mapv_inplace(|v| v.max(VALUE_FLOOR));

        residual = max_rel_change(&f, &f_new).max(max_rel_change(&q, &q_new));
        f = f_new;
        q = q_new;
        if residual < tol {
            converged = true;
            break;
        }
    }

    Ok(FitnessResult {
        countries: m.countries.clone(),
        activities: m.activities.clone(),
        year: m.year,
        fitness: f.to_vec(),
        complexity: q.to_vec(),
        iterations,
        converged,
        residual,
        variant,
    })
}

fn normalize_mean(v: &mut Array1<f64>) {
    let mean = v.sum() / v.len() as f64;
    v.mapv_inplace(|x| x / mean);
}

fn max_rel_change(old: &Array1<f64>, new: &Array1<f64>) -> f64 {
    old.iter()
        .zip(new.iter())
        .map(|(&o, &n)| (n - o).abs() / o.max(VALUE_FLOOR))
        .fold(0.0, f64::max)
}

/// One ranked entry; `tied` marks values shared with another label (ranks
/// are then assigned consecutively in lexicographic label order).
#[derive(Debug, Clone, PartialEq)]
pub struct RankedEntry {
    pub label: String,
    pub value: f64,
    pub rank: usize,
    pub tied: bool,
}

/// Ranks values descending (rank 1 = largest); ties broken by label order
/// and flagged. Entries are returned in rank order.
pub fn rank_desc(labels: &[String], values: &[f64]) -> Vec<RankedEntry> {
    assert_eq!(labels.len(), values.len());
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.sort_by(|&i, &j| {
        values[j]
            .total_cmp(&values[i])
            .then_with(|| labels[i].cmp(&labels[j]))
    });
    let mut out: Vec<RankedEntry> = order
        .iter()
        .enumerate()
        .map(|(pos, &i)| RankedEntry {
            label: labels[i].clone(),
            value: values[i],
            rank: pos + 1,
            tied: false,
        })
        .collect();
    for i in 0..out.len() {
        let tie_prev = i > 0 && out[i - 1].value == out[i].value;
        let tie_next = i + 1 < out.len() && out[i + 1].value == out[i].value;
        out[i].tied = tie_prev || tie_next;
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankRow {
    pub year: i32,
    pub activity: String,
    pub value: f64,
    pub rank: usize,
    pub tied: bool,
}

/// Per-year complexity rankings across a series of results sharing one
/// activity axis.
pub fn rank_series(results: &[FitnessResult]) -> Result<Vec<RankRow>> {
    let Some(first) = results.first() else {
        return Ok(Vec::new());
    };
    for r in results {
        if r.activities != first.activities {
            return Err(Error::Alignment(
                "fitness results have different activity axes".into(),
            ));
        }
    }
    let mut rows = Vec::new();
    for r in results {
        for e in rank_desc(&r.activities, &r.complexity) {
            rows.push(RankRow {
                year: r.year,
                activity: e.label,
                value: e.value,
                rank: e.rank,
                tied: e.tied,
            });
        }
    }
    Ok(rows)
}

/// Writes `year,label,value,rank,variant,converged` rows for the fitness
/// side of each yearly result.
pub fn write_fitness_csv<W: Write>(results: &[FitnessResult], w: &mut W) -> Result<()> {
    write_result_csv(results, w, |r| (&r.countries, &r.fitness))
}

/// Writes `year,label,value,rank,variant,converged` rows for the complexity
/// side of each yearly result.
pub fn write_complexity_csv<W: Write>(results: &[FitnessResult], w: &mut W) -> Result<()> {
    write_result_csv(results, w, |r| (&r.activities, &r.complexity))
}

fn write_result_csv<W: Write>(
    results: &[FitnessResult],
    w: &mut W,
    side: impl Fn(&FitnessResult) -> (&Vec<String>, &Vec<f64>),
) -> Result<()> {
    let io_err = |e| Error::io("<writer>", e);
    write!(w, "year,label,value,rank,variant,converged\n").map_err(io_err)?;
    for r in results {
        let (labels, values) = side(r);
        for e in rank_desc(labels, values) {
            write!(
                w,
                "{},{},{},{},{},{}\n",
                r.year,
                e.label,
                e.value,
                e.rank,
                r.variant.as_str(),
                r.converged
            )
            .map_err(io_err)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn panel_2x2(values: [[f64; 2]; 2]) -> ExportPanel {
        let mut cells = Vec::new();
        for (ci, c) in ["AAA", "BBB"].iter().enumerate() {
            for (ai, a) in ["01", "02"].iter().enumerate() {
                cells.push(((*c).to_owned(), (*a).to_owned(), 2000, values[ci][ai]));
            }
        }
        ExportPanel::from_cells(cells).unwrap()
    }

    #[test]
    fn rca_uniform_exports_is_one_everywhere() {
        let m = rca(&panel_2x2([[10.0, 10.0], [10.0, 10.0]]), 2000).unwrap();
        for &v in m.cells().iter() {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rca_diagonal_hand_case() {
        // oracle: E = [[4,0],[0,4]] gives RCA = [[2,0],[0,2]]
        let m = rca(&panel_2x2([[4.0, 0.0], [0.0, 4.0]]), 2000).unwrap();
        assert!((m.value(0, 0) - 2.0).abs() < 1e-12);
        assert_eq!(m.value(0, 1), 0.0);
        assert!((m.value(1, 1) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rca_single_country_is_one_at_nonzero_cells() {
        let p = ExportPanel::from_cells(vec![
            ("AAA", "01", 2000, 3.0),
            ("AAA", "02", 2000, 9.0),
        ])
        .unwrap();
        let m = rca(&p, 2000).unwrap();
        assert!((m.value(0, 0) - 1.0).abs() < 1e-12);
        assert!((m.value(0, 1) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rca_weighted_average_reproduces_global_shares() {
        // algebraic identity: sum_c (E_c./E_..) * RCA_ca == 1
        let p = panel_2x2([[4.0, 1.0], [2.0, 5.0]]);
        let m = rca(&p, 2000).unwrap();
        let totals = [5.0, 7.0];
        let world = 12.0;
        for ai in 0..2 {
            let s: f64 = (0..2).map(|ci| totals[ci] / world * m.value(ci, ai)).sum();
            assert!((s - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn market_share_sole_and_split_exporters() {
        let m = market_share(&panel_2x2([[4.0, 0.0], [0.0, 4.0]]), 2000).unwrap();
        assert_eq!(m.value(0, 0), 1.0);
        assert_eq!(m.value(1, 0), 0.0);
        let m = market_share(&panel_2x2([[4.0, 4.0], [4.0, 4.0]]), 2000).unwrap();
        assert_eq!(m.value(0, 0), 0.5);
        // columns sum to one
        for col in m.cells().columns() {
            assert!((col.sum() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn degenerate_slice_rejected() {
        let p = ExportPanel::from_cells(vec![("AAA", "01", 2000, 0.0)]).unwrap();
        assert!(matches!(rca(&p, 2000), Err(Error::DegenerateSlice(_))));
        assert!(matches!(rca(&p, 1999), Err(Error::Range(_))));
    }

    #[test]
    fn binarize_threshold_inclusive() {
        let p = panel_2x2([[4.0, 1.0], [2.0, 5.0]]);
        let r = rca(&p, 2000).unwrap();
        let b = binarize(&r, 1.0).unwrap();
        for ((ci, ai), &v) in r.cells().indexed_iter() {
            let expect = if v >= 1.0 { 1.0 } else { 0.0 };
            assert_eq!(b.value(ci, ai), expect);
        }
        // exact threshold hit: uniform panel has RCA exactly 1 -> all ones
        let u = binarize(&rca(&panel_2x2([[1.0, 1.0], [1.0, 1.0]]), 2000).unwrap(), 1.0).unwrap();
        assert!(u.cells().iter().all(|&v| v == 1.0));
        // below threshold
        assert_eq!(
            binarize(&r, 1.0).unwrap().value(0, 1),
            if r.value(0, 1) >= 1.0 { 1.0 } else { 0.0 }
        );
    }

    #[test]
    fn binarize_rejects_non_rca() {
        let p = panel_2x2([[4.0, 1.0], [2.0, 5.0]]);
        let ms = market_share(&p, 2000).unwrap();
        assert!(matches!(binarize(&ms, 1.0), Err(Error::Kind(_))));
    }

    fn ones_binary(nc: usize, na: usize) -> CompetitivenessMatrix {
        CompetitivenessMatrix::binary(
            (0..nc).map(|i| format!("C{i:03}")).collect(),
            (0..na).map(|i| format!("A{i:03}")).collect(),
            2000,
            Array2::from_elem((nc, na), 1.0),
        )
        .unwrap()
    }

    #[test]
    fn fitness_all_ones_is_unity_after_one_iteration() {
        let m = ones_binary(3, 4);
        let r = fitness_complexity(&m, 1e-10, 1000).unwrap();
        assert!(r.converged);
        for &v in &r.fitness {
            assert!((v - 1.0).abs() < 1e-12);
        }
        for &v in &r.complexity {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn fitness_mean_normalization_holds() {
        let cells = ndarray::array![[1.0, 1.0, 0.0], [1.0, 0.0, 0.0], [1.0, 1.0, 1.0]];
        let m = CompetitivenessMatrix::binary(
            vec!["A".into(), "B".into(), "C".into()],
            vec!["x".into(), "y".into(), "z".into()],
            2000,
            cells,
        )
        .unwrap();
        let r = fitness_complexity(&m, 1e-10, 1000).unwrap();
        let fm: f64 = r.fitness.iter().sum::<f64>() / r.fitness.len() as f64;
        let qm: f64 = r.complexity.iter().sum::<f64>() / r.complexity.len() as f64;
        assert!((fm - 1.0).abs() < 1e-12);
        assert!((qm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fitness_permutation_equivariance() {
        let cells = ndarray::array![[1.0, 1.0, 0.0], [1.0, 0.0, 1.0], [0.0, 1.0, 1.0]];
        let m = CompetitivenessMatrix::binary(
            vec!["A".into(), "B".into(), "C".into()],
            vec!["x".into(), "y".into(), "z".into()],
            2000,
            cells.clone(),
        )
        .unwrap();
        // permute rows (A,B,C) -> (C,A,B) and columns (x,y,z) -> (z,x,y)
        let mut permuted = Array2::zeros((3, 3));
        let rp = [2usize, 0, 1];
        let cp = [2usize, 0, 1];
        for i in 0..3 {
            for j in 0..3 {
                permuted[[i, j]] = cells[[rp[i], cp[j]]];
            }
        }
        let m2 = CompetitivenessMatrix::binary(
            vec!["C".into(), "A".into(), "B".into()],
            vec!["z".into(), "x".into(), "y".into()],
            2000,
            permuted,
        )
        .unwrap();
        let r1 = fitness_complexity(&m, 1e-12, 2000).unwrap();
        let r2 = fitness_complexity(&m2, 1e-12, 2000).unwrap();
        for (i, &pi) in rp.iter().enumerate() {
            assert!((r2.fitness[i] - r1.fitness[pi]).abs() < 1e-9);
        }
        for (j, &pj) in cp.iter().enumerate() {
            assert!((r2.complexity[j] - r1.complexity[pj]).abs() < 1e-9);
        }
    }

    #[test]
    fn fitness_nested_matrix_ranking_matches_diversification() {
        // perfectly nested 4x4 triangle: row i exports activities 0..=i
        let mut cells = Array2::zeros((4, 4));
        for i in 0..4 {
            for j in 0..=i {
                cells[[i, j]] = 1.0;
            }
        }
        let m = CompetitivenessMatrix::binary(
            (0..4).map(|i| format!("C{i}")).collect(),
            (0..4).map(|i| format!("A{i}")).collect(),
            2000,
            cells,
        )
        .unwrap();
        let r = fitness_complexity(&m, 1e-10, 1000).unwrap();
        // fitness order equals diversification order: C3 > C2 > C1 > C0
        for i in 0..3 {
            assert!(r.fitness[i] < r.fitness[i + 1]);
        }
        // complexity order is the reverse of ubiquity: A3 most complex
        for j in 0..3 {
            assert!(r.complexity[j] < r.complexity[j + 1]);
        }
    }

    #[test]
    fn fitness_rejects_zero_axes_and_bad_config() {
        let mut cells = Array2::from_elem((2, 2), 1.0);
        cells[[0, 0]] = 0.0;
        cells[[0, 1]] = 0.0;
        let m = CompetitivenessMatrix::binary(
            vec!["A".into(), "B".into()],
            vec!["x".into(), "y".into()],
            2000,
            cells,
        )
        .unwrap();
        assert!(matches!(
            fitness_complexity(&m, 1e-10, 100),
            Err(Error::ZeroAxis(_))
        ));
        let ok = ones_binary(2, 2);
        assert!(matches!(
            fitness_complexity(&ok, 0.0, 100),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn rank_desc_orders_and_flags_ties() {
        let labels: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let ranked = rank_desc(&labels, &[0.2, 3.0, 1.0]);
        let ranks: Vec<(String, usize)> =
            ranked.iter().map(|e| (e.label.clone(), e.rank)).collect();
        assert_eq!(
            ranks,
            vec![
                ("b".to_owned(), 1),
                ("c".to_owned(), 2),
                ("a".to_owned(), 3)
            ]
        );
        assert!(ranked.iter().all(|e| !e.tied));

        let ranked = rank_desc(&labels, &[1.0, 2.0, 2.0]);
        assert_eq!(ranked[0].label, "b");
        assert_eq!(ranked[0].rank, 1);
        assert!(ranked[0].tied);
        assert_eq!(ranked[1].label, "c");
        assert!(ranked[1].tied);
        assert!(!ranked[2].tied);
    }

    #[test]
    fn rank_series_all_ones_everything_tied() {
        let m = ones_binary(3, 3);
        let r = fitness_complexity(&m, 1e-10, 100).unwrap();
        let rows = rank_series(std::slice::from_ref(&r)).unwrap();
        assert!(rows.iter().all(|row| row.tied));
    }

    #[test]
    fn smoothing_preserves_ms_column_sums() {
        let p1 = panel_2x2([[4.0, 1.0], [2.0, 5.0]]);
        let mut cells = Vec::new();
        for (ci, c) in ["AAA", "BBB"].iter().enumerate() {
            for (ai, a) in ["01", "02"].iter().enumerate() {
                cells.push(((*c).to_owned(), (*a).to_owned(), 2000, [[4.0, 1.0], [2.0, 5.0]][ci][ai]));
                cells.push(((*c).to_owned(), (*a).to_owned(), 2001, [[1.0, 2.0], [3.0, 4.0]][ci][ai]));
            }
        }
        let p = ExportPanel::from_cells(cells).unwrap();
        let ms: Vec<_> = p
            .years()
            .iter()
            .map(|&y| market_share(&p, y).unwrap())
            .collect();
        let _ = p1;
        let smoothed = smooth_matrix_series(&ms, &SmoothingConfig::new(3.0).unwrap()).unwrap();
        for m in &smoothed {
            for col in m.cells().columns() {
                assert!((col.sum() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn drop_zero_rows_cols_reports_labels() {
        let mut cells = Array2::from_elem((3, 3), 1.0);
        for j in 0..3 {
            cells[[1, j]] = 0.0;
        }
        for i in 0..3 {
            cells[[i, 2]] = 0.0;
        }
        let m = CompetitivenessMatrix::binary(
            vec!["A".into(), "B".into(), "C".into()],
            vec!["x".into(), "y".into(), "z".into()],
            2000,
            cells,
        )
        .unwrap();
        let (reduced, rows, cols) = drop_zero_rows_cols(&m);
        assert_eq!(rows, vec!["B".to_owned()]);
        assert_eq!(cols, vec!["z".to_owned()]);
        assert_eq!(reduced.countries().len(), 2);
        assert_eq!(reduced.activities().len(), 2);
        assert!(reduced.zero_rows().is_empty());
    }
}
