//! Time-lagged Pearson correlation between indicator series (fitness vs
//! GDP) with bootstrap quantile bands over countries.

use std::collections::BTreeMap;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::seed;
use crate::stats;

/// Per-country year -> value series for one indicator. Countries and years
/// iterate in sorted order.
#[derive(Debug, Clone, Default)]
pub struct IndicatorSeries {
    data: BTreeMap<String, BTreeMap<i32, f64>>,
}

impl IndicatorSeries {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, country: impl Into<String>, year: i32, value: f64) -> Result<()> {
        if !value.is_finite() {
            return Err(Error::Domain(format!(
                "non-finite indicator value {value} for year {year}"
            )));
        }
        self.data.entry(country.into()).or_default().insert(year, value);
        Ok(())
    }

    pub fn from_pairs<I, C>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (C, i32, f64)>,
        C: Into<String>,
    {
        let mut s = Self::new();
        for (c, y, v) in pairs {
            s.insert(c, y, v)?;
        }
        Ok(s)
    }

    /// Reads a long CSV (`country,activity,year,value`) holding exactly one
    /// activity, e.g. a GDP extract.
    pub fn from_long_reader<R: std::io::Read>(reader: R, origin: &str) -> Result<Self> {
        let panel = crate::panel::ExportPanel::from_long_reader(reader, origin)?;
        if panel.activities().len() != 1 {
            return Err(Error::Domain(format!(
                "{origin}: indicator file must hold exactly one activity, found {:?}",
                panel.activities()
            )));
        }
        let mut s = Self::new();
        for (ci, c) in panel.countries().iter().enumerate() {
            for (yi, &y) in panel.years().iter().enumerate() {
                if let Some(v) = panel.value(ci, 0, yi) {
                    s.insert(c.clone(), y, v)?;
                }
            }
        }
        Ok(s)
    }

    pub fn countries(&self) -> Vec<&str> {
        self.data.keys().map(String::as_str).collect()
    }

    pub fn get(&self, country: &str, year: i32) -> Option<f64> {
        self.data.get(country)?.get(&year).copied()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Pooling strategy for the per-lag coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorrelationMode {
    /// Standardize each country's overlapping segment, pool all pairs, one
    /// Pearson coefficient (big economies cannot dominate).
    Pooled,
    /// Pearson per country, averaged.
    PerCountry,
}

impl CorrelationMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            CorrelationMode::Pooled => "pooled",
            CorrelationMode::PerCountry => "per-country",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "pooled" => Some(CorrelationMode::Pooled),
            "per-country" => Some(CorrelationMode::PerCountry),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LagCorrelation {
    pub lag: i32,
    /// `None` when fewer than 3 pairs were available (lag skipped).
    pub correlation: Option<f64>,
    pub pairs: usize,
    /// Countries excluded for zero variance or too-short overlap.
    pub excluded: Vec<String>,
}

/// Correlates `x_c(t)` with `y_c(t + lag)` for every requested lag.
pub fn lagged_correlation(
    x: &IndicatorSeries,
    y: &IndicatorSeries,
    lags: &[i32],
    mode: CorrelationMode,
) -> Vec<LagCorrelation> {
    let countries: Vec<&str> = x
        .countries()
        .into_iter()
        .filter(|c| y.data.contains_key(**&c))
        .collect();
    lags.iter()
        .map(|&lag| correlation_at_lag(x, y, lag, &countries, mode))
        .collect()
}

fn correlation_at_lag(
    x: &IndicatorSeries,
    y: &IndicatorSeries,
    lag: i32,
    countries: &[&str],
    mode: CorrelationMode,
) -> LagCorrelation {
    let mut pooled_x = Vec::new();
    let mut pooled_y = Vec::new();
    let mut per_country = Vec::new();
    let mut pairs = 0usize;
    let mut excluded = Vec::new();

    for &c in countries {
        let xs_map = &x.data[c];
        let mut seg_x = Vec::new();
        let mut seg_y = Vec::new();
        for (&t, &xv) in xs_map {
            if let Some(yv) = y.get(c, t + lag) {
                seg_x.push(xv);
                seg_y.push(yv);
            }
        }
        if seg_x.len() < 2 {
            if !seg_x.is_empty() {
                excluded.push(c.to_owned());
            }
            continue;
        }
        match mode {
            CorrelationMode::Pooled => {
                let (Some(zx), Some(zy)) = (standardize(&seg_x), standardize(&seg_y)) else {
                    excluded.push(c.to_owned());
                    continue;
                };
                pairs += zx.len();
                pooled_x.extend(zx);
                pooled_y.extend(zy);
            }
            CorrelationMode::PerCountry => {
                if seg_x.len() < 3 {
                    excluded.push(c.to_owned());
                    continue;
                }
                match stats::pearson(&seg_x, &seg_y) {
                    Some(r) => {
                        pairs += seg_x.len();
                        per_country.push(r);
                    }
                    None => excluded.push(c.to_owned()),
                }
            }
        }
    }

    let correlation = match mode {
        CorrelationMode::Pooled => {
            if pairs < 3 {
                None
            } else {
                stats::pearson(&pooled_x, &pooled_y)
            }
        }
        CorrelationMode::PerCountry => {
            if per_country.is_empty() || pairs < 3 {
                None
            } else {
                Some(per_country.iter().sum::<f64>() / per_country.len() as f64)
            }
        }
    };
    LagCorrelation {
        lag,
        correlation,
        pairs,
        excluded,
    }
}

/// Subtract the mean and divide by the sample standard deviation; `None`
/// for zero variance.
fn standardize(v: &[f64]) -> Option<Vec<f64>> {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    if var <= 0.0 {
        return None;
    }
    let sd = var.sqrt();
    Some(v.iter().map(|&x| (x - mean) / sd).collect())
}

#[derive(Debug, Clone)]
pub struct LagBand {
    pub lag: i32,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    /// Bootstrap replicas that yielded a coefficient at this lag.
    pub replicas_used: usize,
}

/// Bootstrap quantile bands: countries are resampled with replacement
/// `replicas` times and the per-lag correlation recomputed on each
/// resample; deterministic for a given seed.
pub fn bootstrap_band(
    x: &IndicatorSeries,
    y: &IndicatorSeries,
    lags: &[i32],
    replicas: usize,
    quantiles: (f64, f64),
    master_seed: u64,
    mode: CorrelationMode,
) -> Result<Vec<LagBand>> {
    if replicas < 50 {
        return Err(Error::Config(format!(
            "bootstrap needs at least 50 replicas, got {replicas}"
        )));
    }
    let (ql, qu) = quantiles;
    if !(0.0..=1.0).contains(&ql) || !(0.0..=1.0).contains(&qu) || ql > qu {
        return Err(Error::Config(format!(
            "invalid quantile pair ({ql}, {qu})"
        )));
    }
    let countries: Vec<&str> = x
        .countries()
        .into_iter()
        .filter(|c| y.data.contains_key(**&c))
        .collect();
    if countries.len() < 5 {
        return Err(Error::Domain(format!(
            "bootstrap needs at least 5 common countries, found {}",
            countries.len()
        )));
    }

    let mut per_lag: Vec<Vec<f64>> = vec![Vec::with_capacity(replicas); lags.len()];
    for rep in 0..replicas {
        let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(master_seed, &[rep as u64]));
        let resample: Vec<&str> = (0..countries.len())
            .map(|_| countries[rng.random_range(0..countries.len())])
            .collect();
        for (li, &lag) in lags.iter().enumerate() {
            let r = correlation_at_lag(x, y, lag, &resample, mode);
            if let Some(c) = r.correlation {
                per_lag[li].push(c);
            }
        }
    }

    Ok(lags
        .iter()
        .zip(per_lag.into_iter())
        .map(|(&lag, mut values)| {
            values.sort_by(f64::total_cmp);
            if values.is_empty() {
                LagBand {
                    lag,
                    lower: None,
                    upper: None,
                    replicas_used: 0,
                }
            } else {
                LagBand {
                    lag,
                    lower: Some(stats::quantile(&values, ql)),
                    upper: Some(stats::quantile(&values, qu)),
                    replicas_used: values.len(),
                }
            }
        })
        .collect())
}

/// Writes `lag,correlation,pairs,q25,q75,mode` rows; band columns stay
/// empty without a bootstrap.
pub fn write_correlation_csv<W: Write>(
    correlations: &[LagCorrelation],
    bands: Option<&[LagBand]>,
    mode: CorrelationMode,
    w: &mut W,
) -> Result<()> {
    let io_err = |e| Error::io("<writer>", e);
    write!(w, "lag,correlation,pairs,q25,q75,mode\n").map_err(io_err)?;
    for (i, c) in correlations.iter().enumerate() {
        let corr = c.correlation.map(|v| v.to_string()).unwrap_or_default();
        let (lo, hi) = match bands.and_then(|b| b.get(i)) {
            Some(b) => (
                b.lower.map(|v| v.to_string()).unwrap_or_default(),
                b.upper.map(|v| v.to_string()).unwrap_or_default(),
            ),
            None => (String::new(), String::new()),
        };
        write!(
            w,
            "{},{},{},{},{},{}\n",
            c.lag,
            corr,
            c.pairs,
            lo,
            hi,
            mode.as_str()
        )
        .map_err(io_err)?;
    }
    Ok(())
}
