//! Bipartite Configuration Model: the maximum-entropy ensemble of random
//! binary bipartite matrices that preserves every row and column degree on
//! average. Cell probabilities take the form `p_ca = x_c y_a / (1 + x_c y_a)`
//! with one parameter per node.
//!
//! Full and empty rows/columns are peeled off first and assigned exact 0/1
//! probabilities (the likelihood would push their parameters to infinity),
//! and rows/columns with equal degrees share a single parameter, which
//! shrinks the fixed-point system to the number of distinct degrees.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::complexity::{CompetitivenessMatrix, MatrixKind};
use crate::error::{Error, Result};

/// Damping factor for the alternating parameter updates.
const DAMPING: f64 = 0.7;

/// A fitted null model over the same axes as the source matrix.
#[derive(Debug, Clone)]
pub struct BicmModel {
    countries: Vec<String>,
    activities: Vec<String>,
    year: i32,
    p: Array2<f64>,
    pub residual: f64,
    pub iterations: usize,
}

impl BicmModel {
    pub fn countries(&self) -> &[String] {
        &self.countries
    }

    pub fn activities(&self) -> &[String] {
        &self.activities
    }

    pub fn year(&self) -> i32 {
        self.year
    }

    /// Cell probabilities `p_ca`.
    pub fn probabilities(&self) -> &Array2<f64> {
        &self.p
    }

    pub fn expected_row_degrees(&self) -> Vec<f64> {
        self.p
            .rows()
            .into_iter()
            .map(|r| r.sum())
            .collect()
    }

    pub fn expected_col_degrees(&self) -> Vec<f64> {
        self.p
            .columns()
            .into_iter()
            .map(|c| c.sum())
            .collect()
    }

    /// Draws one matrix of independent Bernoulli cells into `out`;
    /// deterministic for a given seed. Cells with p = 1 are always 1 and
    /// cells with p = 0 always 0.
    pub fn sample_into(&self, seed: u64, out: &mut Array2<f64>) {
        assert_eq!(out.raw_dim(), self.p.raw_dim());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (o, &p) in out.iter_mut().zip(self.p.iter()) {
            *o = if rng.random::<f64>() < p { 1.0 } else { 0.0 };
        }
    }

    /// Draws one matrix as a labelled binary [`CompetitivenessMatrix`].
    pub fn sample(&self, seed: u64) -> CompetitivenessMatrix {
        let mut cells = Array2::zeros(self.p.raw_dim());
        self.sample_into(seed, &mut cells);
        CompetitivenessMatrix::binary(
            self.countries.clone(),
            self.activities.clone(),
            self.year,
            cells,
        )
        .expect("sampled cells are binary")
    }
}

/// Fits the BiCM to a binary matrix: expected degrees match the observed
/// ones within `fit_tol` (L-infinity) or the fit errors out after
/// `max_iter` damped fixed-point iterations.
pub fn bicm_fit(
    m: &CompetitivenessMatrix,
    fit_tol: f64,
    max_iter: usize,
) -> Result<BicmModel> {
    if m.kind() != MatrixKind::Binary {
        return Err(Error::Kind(format!(
            "bicm_fit expects a binary matrix, got {}",
            m.kind().as_str()
        )));
    }
    if !(fit_tol > 0.0) {
        return Err(Error::Config(format!(
            "fit_tol must be positive, got {fit_tol}"
        )));
    }
    let (p, residual, iterations) = fit_probabilities(m.cells(), fit_tol, max_iter)?;
    Ok(BicmModel {
        countries: m.countries().to_vec(),
        activities: m.activities().to_vec(),
        year: m.year(),
        p,
        residual,
        iterations,
    })
}

/// Core fit on raw cells (also used by the validation hot path).
pub(crate) fn fit_probabilities(
    cells: &Array2<f64>,
    fit_tol: f64,
    max_iter: usize,
) -> Result<(Array2<f64>, f64, usize)> {
    let (nr, nc) = cells.dim();
    let mut p = Array2::from_elem((nr, nc), f64::NAN);
    let mut active_rows: Vec<usize> = (0..nr).collect();
    let mut active_cols: Vec<usize> = (0..nc).collect();

    // Peel empty/full rows and columns until none remain. Removing a full
    // row changes which columns count as full, hence the loop.
    loop {
        let mut changed = false;
        let col_set = active_cols.clone();
        active_rows.retain(|&r| {
            let deg: f64 = col_set.iter().map(|&c| cells[[r, c]]).sum();
            if deg == 0.0 {
                for &c in &col_set {
                    p[[r, c]] = 0.0;
                }
                changed = true;
                false
            } else if deg == col_set.len() as f64 {
                for &c in &col_set {
                    p[[r, c]] = 1.0;
                }
                changed = true;
                false
            } else {
                true
            }
        });
        let row_set = active_rows.clone();
        active_cols.retain(|&c| {
            let deg: f64 = row_set.iter().map(|&r| cells[[r, c]]).sum();
            if row_set.is_empty() {
                // no rows left: nothing constrains this column
                for &r in &row_set {
                    p[[r, c]] = 0.0;
                }
                return true;
            }
            if deg == 0.0 {
                for &r in &row_set {
                    p[[r, c]] = 0.0;
                }
                changed = true;
                false
            } else if deg == row_set.len() as f64 {
                for &r in &row_set {
                    p[[r, c]] = 1.0;
                }
                changed = true;
                false
            } else {
                true
            }
        });
        if !changed {
            break;
        }
    }

    let mut iterations = 0;
    let mut residual = 0.0;
    if !active_rows.is_empty() && !active_cols.is_empty() {
        // Adjusted degrees over the active block.
        let row_deg: Vec<f64> = active_rows
            .iter()
            .map(|&r| active_cols.iter().map(|&c| cells[[r, c]]).sum())
            .collect();
        let col_deg: Vec<f64> = active_cols
            .iter()
            .map(|&c| active_rows.iter().map(|&r| cells[[r, c]]).sum())
            .collect();

        // Degree classes: one parameter per distinct degree.
        let (row_classes, row_mult, row_of) = degree_classes(&row_deg);
        let (col_classes, col_mult, col_of) = degree_classes(&col_deg);
        let total: f64 = row_deg.iter().sum();
        let scale = total.sqrt();
        let mut x: Vec<f64> = row_classes.iter().map(|&k| k / scale).collect();
        let mut y: Vec<f64> = col_classes.iter().map(|&d| d / scale).collect();

        let expected_residual = |x: &[f64], y: &[f64]| -> f64 {
            let mut worst = 0.0f64;
            for (i, &k) in row_classes.iter().enumerate() {
                let e: f64 = y
                    .iter()
                    .zip(col_mult.iter())
                    .map(|(&yj, &m)| m * x[i] * yj / (1.0 + x[i] * yj))
                    .sum();
                worst = worst.max((e - k).abs());
            }
            for (j, &d) in col_classes.iter().enumerate() {
                let e: f64 = x
                    .iter()
                    .zip(row_mult.iter())
                    .map(|(&xi, &m)| m * xi * y[j] / (1.0 + xi * y[j]))
                    .sum();
                worst = worst.max((e - d).abs());
            }
            worst
        };

        let mut converged = false;
        for n in 1..=max_iter {
            iterations = n;
            for (i, &k) in row_classes.iter().enumerate() {
                let denom: f64 = y
                    .iter()
                    .zip(col_mult.iter())
                    .map(|(&yj, &m)| m * yj / (1.0 + x[i] * yj))
                    .sum();
                let cand = k / denom;
                x[i] = (1.0 - DAMPING) * x[i] + DAMPING * cand;
            }
            for (j, &d) in col_classes.iter().enumerate() {
                let denom: f64 = x
                    .iter()
                    .zip(row_mult.iter())
                    .map(|(&xi, &m)| m * xi / (1.0 + xi * y[j]))
                    .sum();
                let cand = d / denom;
                y[j] = (1.0 - DAMPING) * y[j] + DAMPING * cand;
            }
            residual = expected_residual(&x, &y);
            if residual <= fit_tol {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::FitNotConverged {
                residual,
                iterations,
            });
        }

        for (ri, &r) in active_rows.iter().enumerate() {
            let xi = x[row_of[ri]];
            for (cj, &c) in active_cols.iter().enumerate() {
                let yj = y[col_of[cj]];
                p[[r, c]] = xi * yj / (1.0 + xi * yj);
            }
        }
    }

    debug_assert!(p.iter().all(|v| !v.is_nan()));
    Ok((p, residual, iterations))
}

/// Returns (distinct degrees, multiplicities, class index per input).
fn degree_classes(degrees: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<usize>) {
    let mut distinct: Vec<f64> = degrees.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let mut mult = vec![0.0; distinct.len()];
    let mut of = Vec::with_capacity(degrees.len());
    for &d in degrees {
        let i = distinct.partition_point(|&x| x < d);
        mult[i] += 1.0;
        of.push(i);
    }
    (distinct, mult, of)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn binary(cells: Array2<f64>) -> CompetitivenessMatrix {
        let (nr, nc) = cells.dim();
        CompetitivenessMatrix::binary(
            (0..nr).map(|i| format!("C{i:03}")).collect(),
            (0..nc).map(|i| format!("A{i:03}")).collect(),
            2000,
            cells,
        )
        .unwrap()
    }

    #[test]
    fn symmetric_2x2_gives_half_everywhere() {
        // oracle: all degrees 1 force x*y = 1, hence p = 1/2 exactly
        let m = binary(array![[1.0, 0.0], [0.0, 1.0]]);
        let model = bicm_fit(&m, 1e-10, 10_000).unwrap();
        for &p in model.probabilities().iter() {
            assert!((p - 0.5).abs() < 1e-8);
        }
    }

    #[test]
    fn full_row_is_forced_to_one() {
        let m = binary(array![[1.0, 1.0, 1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]);
        let model = bicm_fit(&m, 1e-8, 10_000).unwrap();
        for a in 0..3 {
            assert_eq!(model.probabilities()[[0, a]], 1.0);
        }
    }

    #[test]
    fn empty_row_is_forced_to_zero() {
        let m = binary(array![[0.0, 0.0], [1.0, 0.0]]);
        let model = bicm_fit(&m, 1e-8, 10_000).unwrap();
        assert_eq!(model.probabilities()[[0, 0]], 0.0);
        assert_eq!(model.probabilities()[[0, 1]], 0.0);
    }

    #[test]
    fn expected_degrees_match_observed() {
        let cells = array![
            [1.0, 1.0, 0.0, 1.0, 0.0],
            [1.0, 0.0, 0.0, 0.0, 0.0],
            [1.0, 1.0, 1.0, 0.0, 1.0],
            [0.0, 1.0, 0.0, 1.0, 0.0]
        ];
        let m = binary(cells.clone());
        let model = bicm_fit(&m, 1e-9, 20_000).unwrap();
        for (r, exp) in model.expected_row_degrees().iter().enumerate() {
            let obs: f64 = cells.row(r).sum();
            assert!((exp - obs).abs() <= 1e-9, "row {r}: {exp} vs {obs}");
        }
        for (c, exp) in model.expected_col_degrees().iter().enumerate() {
            let obs: f64 = cells.column(c).sum();
            assert!((exp - obs).abs() <= 1e-9, "col {c}: {exp} vs {obs}");
        }
    }

    #[test]
    fn sampling_respects_forced_cells_and_frequencies() {
        let m = binary(array![[1.0, 0.0], [0.0, 1.0]]);
        let model = bicm_fit(&m, 1e-10, 10_000).unwrap();
        // p = 0.5 everywhere: over 10_000 draws each cell frequency within
        // 3 sigma of one half
        let mut counts = Array2::<f64>::zeros((2, 2));
        let mut buf = Array2::zeros((2, 2));
        for s in 0..10_000u64 {
            model.sample_into(s, &mut buf);
            counts += &buf;
        }
        for &c in counts.iter() {
            let freq = c / 10_000.0;
            assert!((freq - 0.5).abs() < 0.02, "freq {freq}");
        }

        let forced = binary(array![[1.0, 1.0], [1.0, 0.0]]);
        let model = bicm_fit(&forced, 1e-10, 10_000).unwrap();
        for s in 0..50u64 {
            let draw = model.sample(s);
            assert_eq!(draw.value(0, 0), 1.0);
            assert_eq!(draw.value(0, 1), 1.0);
        }
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let m = binary(array![[1.0, 0.0, 1.0], [0.0, 1.0, 0.0], [1.0, 1.0, 0.0]]);
        let model = bicm_fit(&m, 1e-8, 10_000).unwrap();
        assert_eq!(model.sample(9).cells(), model.sample(9).cells());
        assert_ne!(model.sample(9).cells(), model.sample(10).cells());
    }
}
