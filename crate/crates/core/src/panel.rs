//! The export panel data model: a dense country x activity x year table of
//! non-negative export values with explicit missing cells, plus CSV
//! ingestion, panel merging, exponential smoothing and random masking.
//!
//! Missing is a first-class cell state distinct from 0.0: recorded zeros are
//! trusted data, absent observations are not. Internally cells are stored as
//! `f64` with NaN as the missing sentinel; the public accessors expose
//! `Option<f64>` so the sentinel never leaks.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Input file layout for [`ExportPanel::load`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PanelFormat {
    /// `country,activity,year,value` rows; absent triples are missing.
    Long,
    /// Single-activity matrix: top-left cell holds the activity code, the
    /// first row the years, the first column the country codes; empty cells
    /// are missing.
    Matrix,
}

/// Exponential smoothing parameters expressed as a half-life in years.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothingConfig {
    half_life: f64,
}

impl SmoothingConfig {
    pub fn new(half_life: f64) -> Result<Self> {
        if !(half_life > 0.0) || !half_life.is_finite() {
            return Err(Error::Config(format!(
                "half_life must be a positive finite number of years, got {half_life}"
            )));
        }
        Ok(SmoothingConfig { half_life })
    }

    pub fn half_life(&self) -> f64 {
        self.half_life
    }

    /// Smoothing factor `alpha = 1 - 2^(-1/half_life)`.
    pub fn alpha(&self) -> f64 {
        1.0 - (-1.0 / self.half_life).exp2()
    }
}

/// Boolean companion of a panel marking artificially hidden cells. Only
/// cells that were present in the source panel are ever marked; the type is
/// constructed exclusively by the masking operations.
#[derive(Debug, Clone)]
pub struct PanelMask {
    countries: Vec<String>,
    activities: Vec<String>,
    years: Vec<i32>,
    cells: Array3<bool>,
}

impl PanelMask {
    pub fn countries(&self) -> &[String] {
        &self.countries
    }

    pub fn activities(&self) -> &[String] {
        &self.activities
    }

    pub fn years(&self) -> &[i32] {
        &self.years
    }

    pub fn is_marked(&self, country: usize, activity: usize, year: usize) -> bool {
        self.cells[[country, activity, year]]
    }

    pub fn marked_count(&self) -> usize {
        self.cells.iter().filter(|&&m| m).count()
    }

    /// Marked cell indices in (country, activity, year) lexicographic order.
    pub fn marked(&self) -> Vec<(usize, usize, usize)> {
        let mut out = Vec::new();
        for ((c, a, y), &m) in self.cells.indexed_iter() {
            if m {
                out.push((c, a, y));
            }
        }
        out
    }
}

impl PartialEq for PanelMask {
    fn eq(&self, other: &Self) -> bool {
        self.countries == other.countries
            && self.activities == other.activities
            && self.years == other.years
            && self.cells == other.cells
    }
}

/// One raw input cell used by the builders; `line` is kept for diagnostics.
struct CellRow {
    country: String,
    activity: String,
    year: i32,
    value: Option<f64>,
    line: u64,
}

/// Dense three-axis export panel. Axes are deduplicated and sorted, the year
/// axis is a contiguous ascending range (gaps are filled with missing
/// columns so lag arithmetic is plain index arithmetic), and every present
/// value is finite and non-negative.
///
/// Panels are immutable after construction; all operations are pure
/// functions returning new panels, so a panel can be shared read-only across
/// workers.
#[derive(Debug, Clone)]
pub struct ExportPanel {
    countries: Vec<String>,
    activities: Vec<String>,
    years: Vec<i32>,
    values: Array3<f64>,
    country_index: HashMap<String, usize>,
    activity_index: HashMap<String, usize>,
}

impl PartialEq for ExportPanel {
    fn eq(&self, other: &Self) -> bool {
        self.countries == other.countries
            && self.activities == other.activities
            && self.years == other.years
            && self
                .values
                .iter()
                .zip(other.values.iter())
                .all(|(a, b)| (a.is_nan() && b.is_nan()) || a.to_bits() == b.to_bits())
    }
}

impl ExportPanel {
    fn build(rows: Vec<CellRow>, origin: &str) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Domain(format!("{origin}: no data rows")));
        }
        let mut countries: BTreeSet<&str> = BTreeSet::new();
        let mut activities: BTreeSet<&str> = BTreeSet::new();
        let mut y_min = i32::MAX;
        let mut y_max = i32::MIN;
        for r in &rows {
            countries.insert(&r.country);
            activities.insert(&r.activity);
            y_min = y_min.min(r.year);
            y_max = y_max.max(r.year);
        }
        let countries: Vec<String> = countries.into_iter().map(str::to_owned).collect();
        let activities: Vec<String> = activities.into_iter().map(str::to_owned).collect();
        let years: Vec<i32> = (y_min..=y_max).collect();
        let country_index: HashMap<String, usize> = countries
            .iter()
            .enumerate()
            .map(|(i, c)| (c.clone(), i))
            .collect();
        let activity_index: HashMap<String, usize> = activities
            .iter()
            .enumerate()
            .map(|(i, a)| (a.clone(), i))
            .collect();

        let mut values =
            Array3::from_elem((countries.len(), activities.len(), years.len()), f64::NAN);
        for r in rows {
            let Some(v) = r.value else { continue };
            let ci = country_index[&r.country];
            let ai = activity_index[&r.activity];
            let yi = (r.year - y_min) as usize;
            let cell = &mut values[[ci, ai, yi]];
            if !cell.is_nan() && *cell != v {
                return Err(Error::Conflict {
                    origin: origin.to_owned(),
                    line: r.line,
                    message: format!(
                        "({},{},{}) already has value {} but row provides {}",
                        r.country, r.activity, r.year, *cell, v
                    ),
                });
            }
            *cell = v;
        }

        Ok(ExportPanel {
            countries,
            activities,
            years,
            values,
            country_index,
            activity_index,
        })
    }

    /// Builds a panel from present cells; absent triples become missing.
    pub fn from_cells<I, C, A>(cells: I) -> Result<Self>
    where
        I: IntoIterator<Item = (C, A, i32, f64)>,
        C: Into<String>,
        A: Into<String>,
    {
        let rows: Vec<CellRow> = cells
            .into_iter()
            .map(|(c, a, y, v)| CellRow {
                country: c.into(),
                activity: a.into(),
                year: y,
                value: Some(v),
                line: 0,
            })
            .collect();
        for r in &rows {
            if let Some(v) = r.value {
                check_value(v, "<cells>", r.line)?;
            }
        }
        Self::build(rows, "<cells>")
    }

    /// Builds an all-missing panel over the given axes.
    pub fn new_missing(
        countries: Vec<String>,
        activities: Vec<String>,
        years: Vec<i32>,
    ) -> Result<Self> {
        check_unique(&countries, "country")?;
        check_unique(&activities, "activity")?;
        if years.is_empty() {
            return Err(Error::Domain("year axis is empty".into()));
        }
        for w in years.windows(2) {
            if w[1] != w[0] + 1 {
                return Err(Error::Domain(format!(
                    "years must be contiguous ascending, got {} then {}",
                    w[0], w[1]
                )));
            }
        }
        let country_index = countries
            .iter()
            .enumerate()
            .map(|(i, c)| (c.clone(), i))
            .collect();
        let activity_index = activities
            .iter()
            .enumerate()
            .map(|(i, a)| (a.clone(), i))
            .collect();
        let values =
            Array3::from_elem((countries.len(), activities.len(), years.len()), f64::NAN);
        Ok(ExportPanel {
            countries,
            activities,
            years,
            values,
            country_index,
            activity_index,
        })
    }

    pub fn countries(&self) -> &[String] {
        &self.countries
    }

    pub fn activities(&self) -> &[String] {
        &self.activities
    }

    pub fn years(&self) -> &[i32] {
        &self.years
    }

    /// (countries, activities, years) axis lengths.
    pub fn shape(&self) -> (usize, usize, usize) {
        let s = self.values.shape();
        (s[0], s[1], s[2])
    }

    pub fn country_position(&self, code: &str) -> Option<usize> {
        self.country_index.get(code).copied()
    }

    pub fn activity_position(&self, code: &str) -> Option<usize> {
        self.activity_index.get(code).copied()
    }

    pub fn year_position(&self, year: i32) -> Option<usize> {
        if self.years.is_empty() || year < self.years[0] || year > *self.years.last().unwrap() {
            None
        } else {
            Some((year - self.years[0]) as usize)
        }
    }

    /// Cell by axis indices; `None` when missing.
    pub fn value(&self, country: usize, activity: usize, year: usize) -> Option<f64> {
        let v = self.values[[country, activity, year]];
        if v.is_nan() {
            None
        } else {
            Some(v)
        }
    }

    /// Cell by labels; `None` when the labels are unknown or the cell is
    /// missing.
    pub fn value_by_label(&self, country: &str, activity: &str, year: i32) -> Option<f64> {
        let ci = self.country_position(country)?;
        let ai = self.activity_position(activity)?;
        let yi = self.year_position(year)?;
        self.value(ci, ai, yi)
    }

    pub fn is_missing(&self, country: usize, activity: usize, year: usize) -> bool {
        self.values[[country, activity, year]].is_nan()
    }

    pub fn present_count(&self) -> usize {
        self.values.iter().filter(|v| !v.is_nan()).count()
    }

    pub fn missing_count(&self) -> usize {
        self.values.len() - self.present_count()
    }

    pub(crate) fn set(&mut self, country: usize, activity: usize, year: usize, value: f64) {
        self.values[[country, activity, year]] = value;
    }

    pub(crate) fn set_missing(&mut self, country: usize, activity: usize, year: usize) {
        self.values[[country, activity, year]] = f64::NAN;
    }

    /// Present cell indices in (country, activity, year) order.
    pub fn present_cells(&self) -> Vec<(usize, usize, usize)> {
        let mut out = Vec::with_capacity(self.present_count());
        for ((c, a, y), v) in self.values.indexed_iter() {
            if !v.is_nan() {
                out.push((c, a, y));
            }
        }
        out
    }

    // ------------------------------------------------------------------
    // Loading and writing
    // ------------------------------------------------------------------

    pub fn load(path: impl AsRef<Path>, format: PanelFormat) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let origin = path.display().to_string();
        match format {
            PanelFormat::Long => Self::from_long_reader(BufReader::new(file), &origin),
            PanelFormat::Matrix => Self::from_matrix_reader(BufReader::new(file), &origin),
        }
    }

    /// Parses the long format: header `country,activity,year,value`. An
    /// empty value field is an explicit missing observation.
    pub fn from_long_reader<R: Read>(reader: R, origin: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .from_reader(reader);
        {
            let headers = rdr
                .headers()
                .map_err(|e| parse_err(origin, 1, &e.to_string()))?;
            let expect = ["country", "activity", "year", "value"];
            let got: Vec<&str> = headers.iter().map(str::trim).collect();
            if got != expect {
                return Err(parse_err(
                    origin,
                    1,
                    &format!("expected header country,activity,year,value, got {got:?}"),
                ));
            }
        }
        let mut rows = Vec::new();
        for record in rdr.records() {
            let record = record.map_err(|e| parse_err(origin, 0, &e.to_string()))?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            if record.len() != 4 {
                return Err(parse_err(
                    origin,
                    line,
                    &format!("expected 4 fields, got {}", record.len()),
                ));
            }
            let year: i32 = record[2]
                .trim()
                .parse()
                .map_err(|_| parse_err(origin, line, &format!("bad year {:?}", &record[2])))?;
            let raw = record[3].trim();
            let value = if raw.is_empty() {
                None
            } else {
                let v: f64 = raw
                    .parse()
                    .map_err(|_| parse_err(origin, line, &format!("bad value {raw:?}")))?;
                check_value(v, origin, line)?;
                Some(v)
            };
            rows.push(CellRow {
                country: record[0].trim().to_owned(),
                activity: record[1].trim().to_owned(),
                year,
                value,
                line,
            });
        }
        Self::build(rows, origin)
    }

    /// Parses the matrix format: top-left cell = activity code, first row =
    /// years, first column = countries, empty cell = missing.
    pub fn from_matrix_reader<R: Read>(reader: R, origin: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(reader);
        let mut records = rdr.records();
        let header = match records.next() {
            Some(r) => r.map_err(|e| parse_err(origin, 1, &e.to_string()))?,
            None => return Err(parse_err(origin, 1, "empty file")),
        };
        let activity = header
            .get(0)
            .map(str::trim)
            .unwrap_or("")
            .to_owned();
        if activity.is_empty() {
            return Err(parse_err(
                origin,
                1,
                "top-left cell must hold the activity code",
            ));
        }
        let mut years = Vec::new();
        for f in header.iter().skip(1) {
            let y: i32 = f
                .trim()
                .parse()
                .map_err(|_| parse_err(origin, 1, &format!("bad year column {f:?}")))?;
            years.push(y);
        }
        if years.is_empty() {
            return Err(parse_err(origin, 1, "no year columns"));
        }
        let mut rows = Vec::new();
        for record in records {
            let record = record.map_err(|e| parse_err(origin, 0, &e.to_string()))?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            if record.len() != years.len() + 1 {
                return Err(parse_err(
                    origin,
                    line,
                    &format!("expected {} fields, got {}", years.len() + 1, record.len()),
                ));
            }
            let country = record[0].trim().to_owned();
            for (k, &year) in years.iter().enumerate() {
                let raw = record[k + 1].trim();
                let value = if raw.is_empty() {
                    None
                } else {
                    let v: f64 = raw
                        .parse()
                        .map_err(|_| parse_err(origin, line, &format!("bad value {raw:?}")))?;
                    check_value(v, origin, line)?;
                    Some(v)
                };
                rows.push(CellRow {
                    country: country.clone(),
                    activity: activity.clone(),
                    year,
                    value,
                    line,
                });
            }
        }
        Self::build(rows, origin)
    }

    pub fn write_long(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_long_to(&mut w)?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Writes the long format with LF line endings and a trailing newline.
    /// Missing cells are omitted, so load(write(p)) == p.
    pub fn write_long_to<W: Write>(&self, w: &mut W) -> Result<()> {
        let io_err = |e| Error::io("<writer>", e);
        write!(w, "country,activity,year,value\n").map_err(io_err)?;
        for (ci, c) in self.countries.iter().enumerate() {
            for (ai, a) in self.activities.iter().enumerate() {
                for (yi, y) in self.years.iter().enumerate() {
                    if let Some(v) = self.value(ci, ai, yi) {
                        write!(w, "{c},{a},{y},{v}\n").map_err(io_err)?;
                    }
                }
            }
        }
        Ok(())
    }

    pub fn write_matrix(&self, activity: &str, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_matrix_to(activity, &mut w)?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Writes one activity as a country x year matrix, empty cells for
    /// missing.
    pub fn write_matrix_to<W: Write>(&self, activity: &str, w: &mut W) -> Result<()> {
        let ai = self
            .activity_position(activity)
            .ok_or_else(|| Error::Domain(format!("unknown activity {activity:?}")))?;
        let io_err = |e| Error::io("<writer>", e);
        write!(w, "{activity}").map_err(io_err)?;
        for y in &self.years {
            write!(w, ",{y}").map_err(io_err)?;
        }
        write!(w, "\n").map_err(io_err)?;
        for (ci, c) in self.countries.iter().enumerate() {
            write!(w, "{c}").map_err(io_err)?;
            for yi in 0..self.years.len() {
                match self.value(ci, ai, yi) {
                    Some(v) => write!(w, ",{v}").map_err(io_err)?,
                    None => write!(w, ",").map_err(io_err)?,
                }
            }
            write!(w, "\n").map_err(io_err)?;
        }
        Ok(())
    }

    // ------------------------------------------------------------------
    // Panel algebra
    // ------------------------------------------------------------------

    /// Merges a goods panel and a services panel into a universal panel:
    /// activity axis is the concatenation (goods then services), country and
    /// year axes are the intersections, values are copied unchanged.
    pub fn merge_universal(goods: &ExportPanel, services: &ExportPanel) -> Result<ExportPanel> {
        let shared: Vec<&String> = goods
            .activities
            .iter()
            .filter(|a| services.activity_index.contains_key(*a))
            .collect();
        if !shared.is_empty() {
            return Err(Error::AxisCollision(format!(
                "panels share {} activity code(s), e.g. {:?}",
                shared.len(),
                shared[0]
            )));
        }
        let countries: Vec<String> = goods
            .countries
            .iter()
            .filter(|c| services.country_index.contains_key(*c))
            .cloned()
            .collect();
        if countries.is_empty() {
            return Err(Error::EmptyIntersection("no common countries".into()));
        }
        let y0 = goods.years[0].max(services.years[0]);
        let y1 = (*goods.years.last().unwrap()).min(*services.years.last().unwrap());
        if y0 > y1 {
            return Err(Error::EmptyIntersection("no common years".into()));
        }
        let years: Vec<i32> = (y0..=y1).collect();
        let mut activities = goods.activities.clone();
        activities.extend(services.activities.iter().cloned());

        let mut out = ExportPanel::new_missing(countries, activities, years)?;
        let n_goods = goods.activities.len();
        for ci in 0..out.countries.len() {
            let gc = goods.country_index[&out.countries[ci]];
            let sc = services.country_index[&out.countries[ci]];
            for yi in 0..out.years.len() {
                let year = out.years[yi];
                let gy = goods.year_position(year).unwrap();
                let sy = services.year_position(year).unwrap();
                for ai in 0..n_goods {
                    if let Some(v) = goods.value(gc, ai, gy) {
                        out.set(ci, ai, yi, v);
                    }
                }
                for ai in 0..services.activities.len() {
                    if let Some(v) = services.value(sc, ai, sy) {
                        out.set(ci, n_goods + ai, yi, v);
                    }
                }
            }
        }
        Ok(out)
    }

    /// Keeps only the listed activities (panel axis order preserved).
    pub fn restrict_activities(&self, keep: &[String]) -> Result<ExportPanel> {
        let keep_set: BTreeSet<&str> = keep.iter().map(String::as_str).collect();
        let kept: Vec<usize> = (0..self.activities.len())
            .filter(|&ai| keep_set.contains(self.activities[ai].as_str()))
            .collect();
        if kept.is_empty() {
            return Err(Error::Domain(
                "no requested activity is present in the panel".into(),
            ));
        }
        let activities: Vec<String> = kept.iter().map(|&ai| self.activities[ai].clone()).collect();
        let mut out =
            ExportPanel::new_missing(self.countries.clone(), activities, self.years.clone())?;
        for ci in 0..self.countries.len() {
            for (new_ai, &ai) in kept.iter().enumerate() {
                for yi in 0..self.years.len() {
                    if let Some(v) = self.value(ci, ai, yi) {
                        out.set(ci, new_ai, yi, v);
                    }
                }
            }
        }
        Ok(out)
    }

    /// Exponential smoothing of every (country, activity) series:
    /// `s_0 = x_0` at the first present value, then
    /// `s_t = alpha * x_t + (1 - alpha) * s_{t-1}`. Missing cells stay
    /// missing and do not advance the recursion state, so series continuity
    /// is preserved across gaps.
    pub fn smoothed(&self, cfg: &SmoothingConfig) -> ExportPanel {
        let alpha = cfg.alpha();
        let mut out = self.clone();
        for ci in 0..self.countries.len() {
            for ai in 0..self.activities.len() {
                let mut state: Option<f64> = None;
                for yi in 0..self.years.len() {
                    if let Some(x) = self.value(ci, ai, yi) {
                        let s = match state {
                            None => x,
                            Some(prev) => alpha * x + (1.0 - alpha) * prev,
                        };
                        out.set(ci, ai, yi, s);
                        state = Some(s);
                    }
                }
            }
        }
        out
    }

    /// Hides `round(fraction * present)` cells chosen uniformly without
    /// replacement; deterministic for a given seed.
    pub fn mask_random(&self, fraction: f64, seed: u64) -> Result<(ExportPanel, PanelMask)> {
        let eligible = self.present_cells();
        if eligible.is_empty() {
            return Err(Error::Domain(
                "panel has no present values to mask".into(),
            ));
        }
        self.mask_eligible(&eligible, fraction, seed)
    }

    /// Masking core shared with the benchmark harness: hides
    /// `round(fraction * eligible.len())` of the given cells.
    pub(crate) fn mask_eligible(
        &self,
        eligible: &[(usize, usize, usize)],
        fraction: f64,
        seed: u64,
    ) -> Result<(ExportPanel, PanelMask)> {
        if !(fraction > 0.0 && fraction < 1.0) {
            return Err(Error::Config(format!(
                "mask fraction must lie in (0,1), got {fraction}"
            )));
        }
        let n_mask = (fraction * eligible.len() as f64).round() as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut chosen: Vec<usize> =
            rand::seq::index::sample(&mut rng, eligible.len(), n_mask).into_vec();
        chosen.sort_unstable();

        let mut masked = self.clone();
        let mut cells = Array3::from_elem(self.values.raw_dim(), false);
        for &i in &chosen {
            let (c, a, y) = eligible[i];
            debug_assert!(!self.is_missing(c, a, y));
            masked.set_missing(c, a, y);
            cells[[c, a, y]] = true;
        }
        let mask = PanelMask {
            countries: self.countries.clone(),
            activities: self.activities.clone(),
            years: self.years.clone(),
            cells,
        };
        Ok((masked, mask))
    }
}

fn check_unique(labels: &[String], axis: &str) -> Result<()> {
    let set: BTreeSet<&String> = labels.iter().collect();
    if set.len() != labels.len() {
        return Err(Error::Domain(format!("duplicate {axis} labels")));
    }
    Ok(())
}

fn check_value(v: f64, origin: &str, line: u64) -> Result<()> {
    if v < 0.0 {
        return Err(Error::Domain(format!(
            "negative export value {v} at {origin}:{line}"
        )));
    }
    if !v.is_finite() {
        return Err(Error::Domain(format!(
            "non-finite export value {v} at {origin}:{line}"
        )));
    }
    Ok(())
}

fn parse_err(origin: &str, line: u64, message: &str) -> Error {
    Error::Parse {
        origin: origin.to_owned(),
        line,
        message: message.to_owned(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn long(body: &str) -> Result<ExportPanel> {
        let text = format!("country,activity,year,value\n{body}");
        ExportPanel::from_long_reader(text.as_bytes(), "test.csv")
    }

    #[test]
    fn long_csv_full_coverage() {
        let p = long("ITA,01,2000,10\nITA,01,2001,11\nFRA,01,2000,20\nFRA,01,2001,21\n").unwrap();
        assert_eq!(p.shape(), (2, 1, 2));
        assert_eq!(p.missing_count(), 0);
        assert_eq!(p.value_by_label("ITA", "01", 2001), Some(11.0));
    }

    #[test]
    fn absent_triple_becomes_missing() {
        let p = long("ITA,01,2000,10\nITA,01,2001,11\nFRA,01,2000,20\n").unwrap();
        assert_eq!(p.shape(), (2, 1, 2));
        assert_eq!(p.missing_count(), 1);
        assert_eq!(p.value_by_label("FRA", "01", 2001), None);
    }

    #[test]
    fn negative_value_is_domain_error_with_line() {
        let err = long("ITA,01,2000,10\nFRA,01,2000,-3.0\n").unwrap_err();
        match err {
            Error::Domain(msg) => assert!(msg.contains(":3"), "missing line in {msg}"),
            other => panic!("expected domain error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_year_is_parse_error_with_line() {
        let err = long("ITA,01,veryold,10\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn conflicting_duplicate_rejected_equal_duplicate_tolerated() {
        assert!(long("ITA,01,2000,10\nITA,01,2000,10\n").is_ok());
        let err = long("ITA,01,2000,10\nITA,01,2000,11\n").unwrap_err();
        assert!(matches!(err, Error::Conflict { .. }));
    }

    #[test]
    fn year_gaps_are_filled_with_missing_columns() {
        let p = long("ITA,01,2000,1\nITA,01,2002,3\n").unwrap();
        assert_eq!(p.years(), &[2000, 2001, 2002]);
        assert_eq!(p.value_by_label("ITA", "01", 2001), None);
    }

    #[test]
    fn merge_universal_concatenates_and_intersects() {
        let goods = ExportPanel::from_cells(vec![
            ("ITA", "01", 2000, 1.0),
            ("FRA", "01", 2000, 2.0),
            ("DEU", "01", 2000, 3.0),
            ("ITA", "02", 2000, 4.0),
            ("FRA", "02", 2000, 5.0),
            ("DEU", "02", 2000, 6.0),
        ])
        .unwrap();
        let services = ExportPanel::from_cells(vec![
            ("ITA", "BXSTRA", 2000, 7.0),
            ("FRA", "BXSTRA", 2000, 8.0),
            ("ITA", "BXSTVB", 2000, 9.0),
            ("FRA", "BXSTVB", 2000, 10.0),
        ])
        .unwrap();
        let merged = ExportPanel::merge_universal(&goods, &services).unwrap();
        assert_eq!(merged.countries(), &["FRA".to_owned(), "ITA".to_owned()]);
        assert_eq!(merged.activities().len(), 4);
        assert_eq!(merged.activities()[0], "01");
        assert_eq!(merged.activities()[3], "BXSTVB");
        assert_eq!(merged.value_by_label("ITA", "BXSTRA", 2000), Some(7.0));
    }

    #[test]
    fn merge_universal_truncates_years_to_intersection() {
        let goods = ExportPanel::from_cells(
            (1996..=2018).map(|y| ("ITA".to_owned(), "01".to_owned(), y, 1.0)),
        )
        .unwrap();
        let services = ExportPanel::from_cells(
            (1990..=2018).map(|y| ("ITA".to_owned(), "BXSR".to_owned(), y, 2.0)),
        )
        .unwrap();
        let merged = ExportPanel::merge_universal(&goods, &services).unwrap();
        assert_eq!(merged.years()[0], 1996);
        assert_eq!(*merged.years().last().unwrap(), 2018);
    }

    #[test]
    fn merge_universal_rejects_shared_codes() {
        let a = ExportPanel::from_cells(vec![("ITA", "77", 2000, 1.0)]).unwrap();
        let b = ExportPanel::from_cells(vec![("ITA", "77", 2000, 2.0)]).unwrap();
        assert!(matches!(
            ExportPanel::merge_universal(&a, &b),
            Err(Error::AxisCollision(_))
        ));
    }

    #[test]
    fn smoothing_constant_series_is_fixed_point() {
        let p = ExportPanel::from_cells(
            (2000..2004).map(|y| ("ITA".to_owned(), "01".to_owned(), y, 5.0)),
        )
        .unwrap();
        let s = p.smoothed(&SmoothingConfig::new(3.0).unwrap());
        for y in 2000..2004 {
            assert_eq!(s.value_by_label("ITA", "01", y), Some(5.0));
        }
    }

    #[test]
    fn smoothing_impulse_matches_closed_form() {
        // oracle: after three zero observations the impulse is scaled by
        // (1 - alpha)^3 = 2^(-1); in f64 the product lands one ulp above 0.5
        let cfg = SmoothingConfig::new(3.0).unwrap();
        let beta = 1.0 - cfg.alpha();
        let oracle = beta * beta * beta;
        assert!((oracle - 0.5).abs() <= f64::EPSILON);

        let p = ExportPanel::from_cells(vec![
            ("ITA", "01", 2000, 1.0),
            ("ITA", "01", 2001, 0.0),
            ("ITA", "01", 2002, 0.0),
            ("ITA", "01", 2003, 0.0),
        ])
        .unwrap();
        let s = p.smoothed(&cfg);
        assert_eq!(s.value_by_label("ITA", "01", 2003), Some(oracle));
    }

    #[test]
    fn half_life_three_alpha_to_six_decimals() {
        // oracle: 1 - 2^(-1/3) = 0.206299...
        let cfg = SmoothingConfig::new(3.0).unwrap();
        assert!((cfg.alpha() - 0.206299).abs() < 5e-7);
    }

    #[test]
    fn smoothing_skips_missing_without_resetting_state() {
        let p = ExportPanel::from_cells(vec![
            ("ITA", "01", 2000, 5.0),
            ("ITA", "01", 2002, 10.0),
        ])
        .unwrap();
        let cfg = SmoothingConfig::new(3.0).unwrap();
        let a = cfg.alpha();
        let s = p.smoothed(&cfg);
        assert_eq!(s.value_by_label("ITA", "01", 2001), None);
        assert_eq!(
            s.value_by_label("ITA", "01", 2002),
            Some(a * 10.0 + (1.0 - a) * 5.0)
        );
    }

    #[test]
    fn invalid_half_life_rejected() {
        assert!(SmoothingConfig::new(0.0).is_err());
        assert!(SmoothingConfig::new(-1.0).is_err());
    }

    #[test]
    fn mask_random_counts_and_determinism() {
        let p = ExportPanel::from_cells(
            (0..10).map(|i| (format!("C{i:02}"), "01".to_owned(), 2000, i as f64)),
        )
        .unwrap();
        let (masked, mask) = p.mask_random(0.5, 7).unwrap();
        assert_eq!(mask.marked_count(), 5);
        assert_eq!(masked.present_count(), 5);
        let (_, mask2) = p.mask_random(0.5, 7).unwrap();
        assert_eq!(mask, mask2);
    }

    #[test]
    fn mask_random_distinct_seeds_differ() {
        let p = ExportPanel::from_cells(
            (0..1000).map(|i| (format!("C{i:04}"), "01".to_owned(), 2000, i as f64)),
        )
        .unwrap();
        let (_, m1) = p.mask_random(0.1, 1).unwrap();
        let (_, m2) = p.mask_random(0.1, 2).unwrap();
        assert_ne!(m1, m2);
    }

    #[test]
    fn mask_random_rejects_bad_fraction() {
        let p = ExportPanel::from_cells(vec![("ITA", "01", 2000, 1.0)]).unwrap();
        assert!(matches!(p.mask_random(0.0, 1), Err(Error::Config(_))));
        assert!(matches!(p.mask_random(1.0, 1), Err(Error::Config(_))));
    }

    #[test]
    fn matrix_round_trip() {
        let p = ExportPanel::from_cells(vec![
            ("ITA", "BXSR", 2000, 1.5),
            ("ITA", "BXSR", 2001, 2.5),
            ("FRA", "BXSR", 2001, 0.0),
        ])
        .unwrap();
        let mut buf = Vec::new();
        p.write_matrix_to("BXSR", &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.ends_with('\n'));
        assert!(!text.contains('\r'));
        let q = ExportPanel::from_matrix_reader(&buf[..], "buf").unwrap();
        assert_eq!(p, q);
    }
}
