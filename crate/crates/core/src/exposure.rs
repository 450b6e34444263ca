//! Temperature-exposure histograms.
//!
//! Daily minimum/maximum temperatures are turned into hours spent in 1 °C
//! bins with a double-sine diurnal curve sampled every 15 minutes, summed
//! over days, aggregated across grid cells with spatial weights, and finally
//! top/bottom coded so that the extreme bins are not empty.

use std::collections::BTreeMap;

use chrono::{Datelike, NaiveDate};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{calendar_hours, AnnualSeries};

/// Lower edge of the raw temperature support, °C.
pub const RAW_LO_C: i32 = -30;
/// Upper edge of the raw temperature support, °C.
pub const RAW_HI_C: i32 = 50;
/// Number of 1 °C bins in the raw support.
pub const RAW_BINS: usize = (RAW_HI_C - RAW_LO_C) as usize;
/// Samples per day of the diurnal curve.
pub const STEPS_PER_DAY: usize = 96;
const HOURS_PER_STEP: f64 = 24.0 / STEPS_PER_DAY as f64;

/// Default tail share for top/bottom coding.
pub const DEFAULT_TAIL_SHARE: f64 = 0.001;

/// Relative tolerance of the per-year conservation check.
pub const CONSERVATION_RTOL: f64 = 1e-6;

/// Raw integer bin edges `-30, -29, ..., 50`.
pub fn raw_edges() -> Vec<i32> {
    (RAW_LO_C..=RAW_HI_C).collect()
}

/// Hours per temperature bin for each year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExposureHistogramSeries {
    edges: Vec<i32>,
    start_year: i32,
    hours: Vec<Vec<f64>>,
}

impl ExposureHistogramSeries {
    pub fn new(edges: Vec<i32>, start_year: i32, hours: Vec<Vec<f64>>) -> Result<Self> {
        if edges.len() < 2 {
            return Err(Error::Validation("exposure needs at least one bin".into()));
        }
        if edges.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Validation("exposure bin edges must be strictly increasing".into()));
        }
        if hours.is_empty() {
            return Err(Error::Validation("exposure series has no years".into()));
        }
        let k = edges.len() - 1;
        for (i, row) in hours.iter().enumerate() {
            let year = start_year + i as i32;
            if row.len() != k {
                return Err(Error::Validation(format!(
                    "exposure {year}: {} bins, expected {k}",
                    row.len()
                )));
            }
            if let Some(h) = row.iter().find(|h| !h.is_finite() || **h < 0.0) {
                return Err(Error::Validation(format!("exposure {year}: invalid hours {h}")));
            }
        }
        Ok(Self { edges, start_year, hours })
    }

    pub fn edges(&self) -> &[i32] {
        &self.edges
    }

    pub fn bins(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn start_year(&self) -> i32 {
        self.start_year
    }

    pub fn end_year(&self) -> i32 {
        self.start_year + self.hours.len() as i32 - 1
    }

    pub fn len(&self) -> usize {
        self.hours.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hours.is_empty()
    }

    pub fn years(&self) -> impl Iterator<Item = i32> + '_ {
        (0..self.hours.len()).map(move |i| self.start_year + i as i32)
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.hours
    }

    pub fn year(&self, year: i32) -> Option<&[f64]> {
        if year < self.start_year || year > self.end_year() {
            return None;
        }
        Some(&self.hours[(year - self.start_year) as usize])
    }

    pub fn window(&self, from: i32, to: i32) -> Result<Self> {
        if from > to || from < self.start_year || to > self.end_year() {
            return Err(Error::Alignment(format!(
                "window {from}..={to} outside exposure ({}..={})",
                self.start_year,
                self.end_year()
            )));
        }
        let a = (from - self.start_year) as usize;
        let b = (to - self.start_year) as usize;
        Ok(Self {
            edges: self.edges.clone(),
            start_year: from,
            hours: self.hours[a..=b].to_vec(),
        })
    }

    /// Total hours in each year.
    pub fn totals(&self) -> Vec<f64> {
        self.hours.iter().map(|r| r.iter().sum()).collect()
    }

    /// Sum over all years, per bin.
    pub fn pooled(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.bins()];
        for row in &self.hours {
            for (o, h) in out.iter_mut().zip(row) {
                *o += h;
            }
        }
        out
    }

    /// Representative temperature of each bin.
    ///
    /// Unit bins use their midpoint. A merged bottom bin is represented by
    /// its warmest degree and a merged top bin by its coldest degree, which
    /// is where coding clamps the tails.
    pub fn bin_centers(&self) -> Vec<f64> {
        bin_centers(&self.edges)
    }

    /// Checks that each year holds the calendar's hours (8760 or 8784).
    pub fn check_conservation(&self) -> Result<()> {
        for (year, total) in self.years().zip(self.totals()) {
            let expected = calendar_hours(year);
            if ((total - expected) / expected).abs() > CONSERVATION_RTOL {
                return Err(Error::Validation(format!(
                    "exposure {year} sums to {total} h, calendar has {expected} h"
                )));
            }
        }
        Ok(())
    }

    /// Elementwise mean histogram over `[from, to]`.
    pub fn mean_over(&self, from: i32, to: i32) -> Result<Vec<f64>> {
        let w = self.window(from, to)?;
        Ok((0..w.bins()).map(|b| crate::stats::mean(&w.rows().iter().map(|r| r[b]).collect::<Vec<_>>())).collect())
    }
}

pub fn bin_centers(edges: &[i32]) -> Vec<f64> {
    let k = edges.len() - 1;
    (0..k)
        .map(|i| {
            let (lo, hi) = (edges[i] as f64, edges[i + 1] as f64);
            if hi - lo <= 1.0 || k == 1 {
                0.5 * (lo + hi)
            } else if i == 0 {
                hi - 0.5
            } else if i == k - 1 {
                lo + 0.5
            } else {
                0.5 * (lo + hi)
            }
        })
        .collect()
}

/// Monthly-resolution exposure and precipitation, used by the season search.
#[derive(Debug, Clone, PartialEq)]
pub struct MonthlyExposure {
    edges: Vec<i32>,
    start_year: i32,
    /// `[year][month][bin]`
    hours: Vec<[Vec<f64>; 12]>,
    /// `[year][month]`, mm
    precip: Vec<[f64; 12]>,
}

impl MonthlyExposure {
    pub fn new(
        edges: Vec<i32>,
        start_year: i32,
        hours: Vec<[Vec<f64>; 12]>,
        precip: Vec<[f64; 12]>,
    ) -> Result<Self> {
        if hours.len() != precip.len() || hours.is_empty() {
            return Err(Error::Validation("monthly exposure and precipitation years differ".into()));
        }
        let k = edges.len().saturating_sub(1);
        if k == 0 || edges.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Validation("monthly exposure edges invalid".into()));
        }
        for (i, months) in hours.iter().enumerate() {
            for (m, row) in months.iter().enumerate() {
                if row.len() != k || row.iter().any(|h| !h.is_finite() || *h < 0.0) {
                    return Err(Error::Validation(format!(
                        "monthly exposure {}-{:02} invalid",
                        start_year + i as i32,
                        m + 1
                    )));
                }
            }
        }
        if precip.iter().flatten().any(|p| !p.is_finite()) {
            return Err(Error::Validation("monthly precipitation not finite".into()));
        }
        Ok(Self { edges, start_year, hours, precip })
    }

    pub fn edges(&self) -> &[i32] {
        &self.edges
    }

    pub fn start_year(&self) -> i32 {
        self.start_year
    }

    pub fn end_year(&self) -> i32 {
        self.start_year + self.hours.len() as i32 - 1
    }

    pub fn hours(&self) -> &[[Vec<f64>; 12]] {
        &self.hours
    }

    pub fn precip(&self) -> &[[f64; 12]] {
        &self.precip
    }

    /// Aggregates months `start_month..start_month+len` (1-based, wrapping
    /// past December). A season is attributed to the year in which it ends,
    /// so wrapping seasons lose the first year of the record.
    pub fn season(&self, start_month: u32, len: u32) -> Result<(ExposureHistogramSeries, AnnualSeries)> {
        if !(1..=12).contains(&start_month) || !(1..=12).contains(&len) {
            return Err(Error::InvalidArgument(format!(
                "season start {start_month}, length {len} outside 1..=12"
            )));
        }
        let wraps = start_month - 1 + len > 12;
        let first = if wraps { 1 } else { 0 };
        if first >= self.hours.len() {
            return Err(Error::InsufficientHistory("record too short for a wrapping season".into()));
        }
        let k = self.edges.len() - 1;
        let mut ex = Vec::new();
        let mut pr = Vec::new();
        for yi in first..self.hours.len() {
            let mut row = vec![0.0; k];
            let mut p = 0.0;
            for step in 0..len {
                let m0 = (start_month - 1 + step) as usize;
                // months past December belong to the ending year, earlier ones to the year before
                let (y, m) = if wraps {
                    if m0 >= 12 {
                        (yi, m0 - 12)
                    } else {
                        (yi - 1, m0)
                    }
                } else {
                    (yi, m0)
                };
                for (r, h) in row.iter_mut().zip(&self.hours[y][m]) {
                    *r += h;
                }
                p += self.precip[y][m];
            }
            ex.push(row);
            pr.push(p);
        }
        let start = self.start_year + first as i32;
        Ok((
            ExposureHistogramSeries::new(self.edges.clone(), start, ex)?,
            AnnualSeries::new("precip", start, pr)?,
        ))
    }

    /// Calendar-year totals.
    pub fn annual(&self) -> Result<(ExposureHistogramSeries, AnnualSeries)> {
        self.season(1, 12)
    }
}

/// Times of the daily minimum and maximum, hours after local midnight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiurnalAnchors {
    pub min_hour: f64,
    pub max_hour: f64,
}

impl Default for DiurnalAnchors {
    fn default() -> Self {
        Self { min_hour: 6.0, max_hour: 16.0 }
    }
}

impl DiurnalAnchors {
    fn validate(&self) -> Result<()> {
        let rise = self.max_hour - self.min_hour;
        if !(self.min_hour.is_finite() && self.max_hour.is_finite()) || rise <= 0.0 || rise >= 24.0 {
            return Err(Error::InvalidArgument(format!(
                "diurnal anchors min {} h / max {} h",
                self.min_hour, self.max_hour
            )));
        }
        Ok(())
    }
}

/// Temperature of the double-sine curve `tau` hours after the morning minimum.
///
/// The rising limb goes from `tmin` to `tmax` over `rise` hours, the falling
/// limb from `tmax` to the next morning's minimum over the remaining hours.
#[inline]
pub fn diurnal_temperature(tmin: f64, tmax: f64, tmin_next: f64, rise: f64, tau: f64) -> f64 {
    use std::f64::consts::PI;
    if tau < rise {
        tmin + (tmax - tmin) * 0.5 * (1.0 - (PI * tau / rise).cos())
    } else {
        let fall = 24.0 - rise;
        tmin_next + (tmax - tmin_next) * 0.5 * (1.0 + (PI * (tau - rise) / fall).cos())
    }
}

#[inline]
fn raw_bin(t: f64) -> (usize, bool) {
    let b = t.floor() - RAW_LO_C as f64;
    if b < 0.0 {
        (0, true)
    } else if b >= RAW_BINS as f64 {
        (RAW_BINS - 1, true)
    } else {
        (b as usize, false)
    }
}

/// Adds `scale` times one cell-day of exposure into `bins` (raw 80-bin
/// layout). Returns the (unscaled) hours that fell outside the raw support
/// and were clamped into a terminal bin.
#[inline]
fn accumulate_day(tmin: f64, tmax: f64, tmin_next: f64, rise: f64, scale: f64, bins: &mut [f64]) -> f64 {
    let mut clamped = 0.0;
    let step = HOURS_PER_STEP * scale;
    for i in 0..STEPS_PER_DAY {
        let tau = (i as f64 + 0.5) * HOURS_PER_STEP;
        let (b, c) = raw_bin(diurnal_temperature(tmin, tmax, tmin_next, rise, tau));
        bins[b] += step;
        if c {
            clamped += HOURS_PER_STEP;
        }
    }
    clamped
}

/// Exposure of one cell-day over the raw bins.
#[derive(Debug, Clone, PartialEq)]
pub struct DayExposure {
    /// Hours per raw 1 °C bin; sums to 24.
    pub hours: Vec<f64>,
    /// Hours whose temperature lay outside −30..50 °C.
    pub clamped_hours: f64,
}

/// Hours in each raw 1 °C bin for a day running from this morning's minimum
/// to the next morning's minimum, sampled at 96 equal steps.
pub fn diurnal_exposure(
    tmin: f64,
    tmax: f64,
    tmin_next: f64,
    anchors: &DiurnalAnchors,
) -> Result<DayExposure> {
    anchors.validate()?;
    if !(tmin.is_finite() && tmax.is_finite() && tmin_next.is_finite()) {
        return Err(Error::InvalidArgument("non-finite daily temperature".into()));
    }
    if tmin > tmax {
        return Err(Error::InvalidArgument(format!("tmin {tmin} exceeds tmax {tmax}")));
    }
    let mut hours = vec![0.0; RAW_BINS];
    let clamped_hours = accumulate_day(tmin, tmax, tmin_next, anchors.max_hour - anchors.min_hour, 1.0, &mut hours);
    Ok(DayExposure { hours, clamped_hours })
}

/// One cell-day of weather.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DayObs {
    pub tmin: f64,
    pub tmax: f64,
    pub prcp: f64,
}

/// Gridded daily weather: every cell covers the same contiguous run of days.
#[derive(Debug, Clone, PartialEq)]
pub struct DailyGrid {
    cells: Vec<String>,
    first_day: NaiveDate,
    /// `[cell][day]`
    obs: Vec<Vec<DayObs>>,
}

impl DailyGrid {
    pub fn new(cells: Vec<String>, first_day: NaiveDate, obs: Vec<Vec<DayObs>>) -> Result<Self> {
        if cells.is_empty() || cells.len() != obs.len() {
            return Err(Error::Validation("grid cells and observations differ".into()));
        }
        let ndays = obs[0].len();
        if ndays == 0 {
            return Err(Error::Validation("grid has no days".into()));
        }
        for (cell, days) in cells.iter().zip(&obs) {
            if days.len() != ndays {
                return Err(Error::Validation(format!("cell {cell} covers {} days, expected {ndays}", days.len())));
            }
            for (i, d) in days.iter().enumerate() {
                let date = first_day + chrono::Days::new(i as u64);
                if !(d.tmin.is_finite() && d.tmax.is_finite() && d.prcp.is_finite()) {
                    return Err(Error::Validation(format!("cell {cell} {date}: non-finite value")));
                }
                if d.tmin > d.tmax {
                    return Err(Error::Validation(format!(
                        "cell {cell} {date}: tmin {} > tmax {}",
                        d.tmin, d.tmax
                    )));
                }
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        for c in &cells {
            if !seen.insert(c) {
                return Err(Error::Validation(format!("duplicate cell {c}")));
            }
        }
        Ok(Self { cells, first_day, obs })
    }

    pub fn cells(&self) -> &[String] {
        &self.cells
    }

    pub fn first_day(&self) -> NaiveDate {
        self.first_day
    }

    pub fn days(&self) -> usize {
        self.obs[0].len()
    }

    pub fn cell_obs(&self, i: usize) -> &[DayObs] {
        &self.obs[i]
    }

    pub fn date(&self, day: usize) -> NaiveDate {
        self.first_day + chrono::Days::new(day as u64)
    }
}

/// Nonnegative per-cell weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialWeights {
    weights: BTreeMap<String, f64>,
}

impl SpatialWeights {
    pub fn new(weights: BTreeMap<String, f64>) -> Result<Self> {
        if let Some((c, w)) = weights.iter().find(|(_, w)| !w.is_finite() || **w < 0.0) {
            return Err(Error::Validation(format!("weight for cell {c} is {w}")));
        }
        let total: f64 = weights.values().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Validation(format!("weights sum to {total}, expected 1")));
        }
        Ok(Self { weights })
    }

    pub fn get(&self, cell: &str) -> f64 {
        self.weights.get(cell).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.weights.iter().map(|(c, w)| (c.as_str(), *w))
    }

    /// Convex combination `alpha * self + (1 - alpha) * other`.
    pub fn blend(&self, other: &Self, alpha: f64) -> Result<Self> {
        let mut out = BTreeMap::new();
        for (c, _) in self.iter().chain(other.iter()) {
            out.insert(c.to_string(), alpha * self.get(c) + (1.0 - alpha) * other.get(c));
        }
        Self::new(out)
    }
}

/// National weather derived from a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct NationalWeather {
    pub exposure: ExposureHistogramSeries,
    pub precip: AnnualSeries,
    pub monthly: MonthlyExposure,
    /// Weighted hours per year that fell outside the raw support.
    pub clamped_hours: Vec<f64>,
}

/// Cells per reduction chunk; fixed so the summation order never depends on
/// the number of worker threads.
const CELL_CHUNK: usize = 32;

struct Accum {
    hours: Vec<[Vec<f64>; 12]>,
    precip: Vec<[f64; 12]>,
    clamped: Vec<f64>,
}

impl Accum {
    fn zeros(years: usize) -> Self {
        Self {
            hours: (0..years).map(|_| std::array::from_fn(|_| vec![0.0; RAW_BINS])).collect(),
            precip: vec![[0.0; 12]; years],
            clamped: vec![0.0; years],
        }
    }

    fn add(&mut self, other: &Accum) {
        for (a, b) in self.hours.iter_mut().zip(&other.hours) {
            for (am, bm) in a.iter_mut().zip(b) {
                for (x, y) in am.iter_mut().zip(bm) {
                    *x += y;
                }
            }
        }
        for (a, b) in self.precip.iter_mut().zip(&other.precip) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        for (a, b) in self.clamped.iter_mut().zip(&other.clamped) {
            *a += b;
        }
    }

    fn scaled_add(&mut self, other: &Accum, w: f64) {
        for (a, b) in self.hours.iter_mut().zip(&other.hours) {
            for (am, bm) in a.iter_mut().zip(b) {
                for (x, y) in am.iter_mut().zip(bm) {
                    *x += w * y;
                }
            }
        }
        for (a, b) in self.precip.iter_mut().zip(&other.precip) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += w * y;
            }
        }
        for (a, b) in self.clamped.iter_mut().zip(&other.clamped) {
            *a += w * b;
        }
    }
}

/// Weighted national exposure and precipitation by calendar year.
///
/// Cell contributions are computed in parallel and reduced in fixed cell
/// order, so the result is bit-identical for any worker count.
pub fn aggregate_national(
    grid: &DailyGrid,
    weights: &SpatialWeights,
    anchors: &DiurnalAnchors,
) -> Result<NationalWeather> {
    anchors.validate()?;
    for (cell, _) in weights.iter() {
        if !grid.cells.iter().any(|c| c == cell) {
            return Err(Error::Validation(format!("weight references missing cell {cell}")));
        }
    }
    let first = grid.first_day;
    let last = grid.date(grid.days() - 1);
    if first.month() != 1 || first.day() != 1 || last.month() != 12 || last.day() != 31 {
        return Err(Error::Validation(format!(
            "grid covers {first}..{last}; only whole calendar years are accepted"
        )));
    }
    let start_year = first.year();
    let years = (last.year() - start_year + 1) as usize;
    // (year index, month index) per day
    let calendar: Vec<(usize, usize)> = (0..grid.days())
        .map(|d| {
            let date = grid.date(d);
            ((date.year() - start_year) as usize, date.month0() as usize)
        })
        .collect();
    let rise = anchors.max_hour - anchors.min_hour;

    let cell_ids: Vec<usize> = (0..grid.cells.len()).filter(|&i| weights.get(&grid.cells[i]) > 0.0).collect();
    let partials: Vec<Accum> = cell_ids
        .par_chunks(CELL_CHUNK)
        .map(|chunk| {
            let mut acc = Accum::zeros(years);
            for &ci in chunk {
                let w = weights.get(&grid.cells[ci]);
                let mut cell = Accum::zeros(years);
                let obs = &grid.obs[ci];
                for (d, o) in obs.iter().enumerate() {
                    let next = obs.get(d + 1).map_or(o.tmin, |n| n.tmin);
                    let (y, m) = calendar[d];
                    cell.clamped[y] += accumulate_day(o.tmin, o.tmax, next, rise, 1.0, &mut cell.hours[y][m]);
                    cell.precip[y][m] += o.prcp;
                }
                acc.scaled_add(&cell, w);
            }
            acc
        })
        .collect();
    let mut total = Accum::zeros(years);
    for p in &partials {
        total.add(p);
    }

    let clamped: f64 = total.clamped.iter().sum();
    if clamped > 0.0 {
        log::info!("{clamped:.3} weighted hours clamped into terminal raw bins");
    }
    let monthly = MonthlyExposure::new(raw_edges(), start_year, total.hours, total.precip)?;
    let (exposure, precip) = monthly.annual()?;
    Ok(NationalWeather { exposure, precip, monthly, clamped_hours: total.clamped })
}

/// Merging of extreme bins, applied identically to every series that shares
/// the same raw edges.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinCoding {
    pub raw_edges: Vec<i32>,
    /// Raw bins `0..=bottom` form the first coded bin.
    pub bottom: usize,
    /// Raw bins `top..` form the last coded bin.
    pub top: usize,
}

impl BinCoding {
    /// The no-op coding.
    pub fn identity(raw_edges: Vec<i32>) -> Self {
        let top = raw_edges.len() - 2;
        Self { raw_edges, bottom: 0, top }
    }

    pub fn is_degenerate(&self) -> bool {
        self.bottom >= self.top
    }

    /// Number of coded bins.
    pub fn k(&self) -> usize {
        if self.is_degenerate() {
            1
        } else {
            self.top - self.bottom + 1
        }
    }

    pub fn coded_edges(&self) -> Vec<i32> {
        let n = self.raw_edges.len();
        if self.is_degenerate() {
            return vec![self.raw_edges[0], self.raw_edges[n - 1]];
        }
        let mut e = vec![self.raw_edges[0]];
        e.extend_from_slice(&self.raw_edges[self.bottom + 1..=self.top]);
        e.push(self.raw_edges[n - 1]);
        e
    }

    pub fn code_row(&self, row: &[f64]) -> Vec<f64> {
        if self.is_degenerate() {
            return vec![row.iter().sum()];
        }
        let mut out = Vec::with_capacity(self.k());
        out.push(row[..=self.bottom].iter().sum());
        out.extend_from_slice(&row[self.bottom + 1..self.top]);
        out.push(row[self.top..].iter().sum());
        out
    }

    /// Codes a series whose edges must equal `raw_edges`.
    pub fn apply(&self, series: &ExposureHistogramSeries) -> Result<ExposureHistogramSeries> {
        if series.edges() != self.raw_edges.as_slice() {
            return Err(Error::BinCodingMismatch(format!(
                "series has edges {}..{} ({} bins), coding expects {}..{} ({} bins)",
                series.edges()[0],
                series.edges()[series.bins()],
                series.bins(),
                self.raw_edges[0],
                self.raw_edges[self.raw_edges.len() - 1],
                self.raw_edges.len() - 1
            )));
        }
        let rows = series.rows().iter().map(|r| self.code_row(r)).collect();
        ExposureHistogramSeries::new(self.coded_edges(), series.start_year(), rows)
    }
}

/// Result of top/bottom coding.
#[derive(Debug, Clone, PartialEq)]
pub struct CodedExposure {
    pub series: ExposureHistogramSeries,
    pub coding: BinCoding,
    pub k: usize,
    /// Set when the tails overlap and everything collapses into one bin.
    pub degenerate: bool,
}

/// Merges extreme bins until each terminal bin holds at least `tail_share`
/// of the pooled (all-years) exposure, then applies the merge to every year.
pub fn top_bottom_code(series: &ExposureHistogramSeries, tail_share: f64) -> Result<CodedExposure> {
    if !(0.0..1.0).contains(&tail_share) {
        return Err(Error::InvalidArgument(format!("tail share {tail_share} outside [0, 1)")));
    }
    let pooled = series.pooled();
    let total: f64 = pooled.iter().sum();
    let n = pooled.len();
    let need = tail_share * total;

    let mut bottom = n - 1;
    let mut acc = 0.0;
    for (i, p) in pooled.iter().enumerate() {
        acc += p;
        if acc >= need && acc > 0.0 {
            bottom = i;
            break;
        }
    }
    let mut top = 0;
    let mut acc = 0.0;
    for i in (0..n).rev() {
        acc += pooled[i];
        if acc >= need && acc > 0.0 {
            top = i;
            break;
        }
    }
    let coding = BinCoding { raw_edges: series.edges().to_vec(), bottom, top };
    let degenerate = coding.is_degenerate();
    if degenerate {
        log::warn!("top/bottom coding collapsed the histogram into a single bin");
    }
    let coded = coding.apply(series)?;
    Ok(CodedExposure { k: coding.k(), series: coded, coding, degenerate })
}

/// Largest supported uniform temperature shift, °C.
pub const MAX_SHIFT_C: i32 = 10;

/// Translates every year's histogram by `delta` bins; mass pushed past
/// either end stays in the terminal bin.
pub fn shift_histogram(series: &ExposureHistogramSeries, delta: i32) -> Result<ExposureHistogramSeries> {
    if delta.abs() > MAX_SHIFT_C {
        return Err(Error::InvalidArgument(format!("shift {delta} °C exceeds ±{MAX_SHIFT_C}")));
    }
    let rows = series.rows().iter().map(|r| shift_row(r, delta)).collect();
    ExposureHistogramSeries::new(series.edges().to_vec(), series.start_year(), rows)
}

pub fn shift_row(row: &[f64], delta: i32) -> Vec<f64> {
    let k = row.len() as i64;
    let mut out = vec![0.0; row.len()];
    for (i, h) in row.iter().enumerate() {
        let j = (i as i64 + delta as i64).clamp(0, k - 1) as usize;
        out[j] += h;
    }
    out
}

/// Scales precipitation by `1 + pct / 100`.
pub fn scale_precip(p: &AnnualSeries, pct: f64) -> Result<AnnualSeries> {
    if !pct.is_finite() || pct < -100.0 {
        return Err(Error::InvalidArgument(format!("precipitation change {pct}% below -100%")));
    }
    let f = 1.0 + pct / 100.0;
    p.map(|v| v * f)
}
