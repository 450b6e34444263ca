//! Year-indexed real-valued series.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A contiguous, year-indexed series of finite values.
///
/// Years are implied by `start_year` and the length of `values`, so the
/// "strictly increasing with step 1" invariant holds by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnualSeries {
    pub label: String,
    start_year: i32,
    values: Vec<f64>,
}

impl AnnualSeries {
    /// Builds a series starting at `start_year`; every value must be finite.
    pub fn new(label: impl Into<String>, start_year: i32, values: Vec<f64>) -> Result<Self> {
        let label = label.into();
        if values.is_empty() {
            return Err(Error::Validation(format!("series `{label}` is empty")));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "series `{label}` has a non-finite value in {}",
                start_year + i as i32
            )));
        }
        Ok(Self { label, start_year, values })
    }

    /// Builds a series from explicit `(year, value)` pairs, which must be
    /// contiguous and free of duplicates (any order is accepted).
    pub fn from_pairs(label: impl Into<String>, mut pairs: Vec<(i32, f64)>) -> Result<Self> {
        let label = label.into();
        pairs.sort_by_key(|p| p.0);
        for w in pairs.windows(2) {
            if w[1].0 == w[0].0 {
                return Err(Error::Validation(format!(
                    "series `{label}` has duplicate year {}",
                    w[0].0
                )));
            }
            if w[1].0 != w[0].0 + 1 {
                return Err(Error::Validation(format!(
                    "series `{label}` has a gap between {} and {}",
                    w[0].0, w[1].0
                )));
            }
        }
        let start = pairs
            .first()
            .map(|p| p.0)
            .ok_or_else(|| Error::Validation(format!("series `{label}` is empty")))?;
        Self::new(label, start, pairs.into_iter().map(|p| p.1).collect())
    }

    pub fn start_year(&self) -> i32 {
        self.start_year
    }

    /// Last year, inclusive.
    pub fn end_year(&self) -> i32 {
        self.start_year + self.values.len() as i32 - 1
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn years(&self) -> impl Iterator<Item = i32> + '_ {
        (0..self.values.len()).map(move |i| self.start_year + i as i32)
    }

    pub fn iter(&self) -> impl Iterator<Item = (i32, f64)> + '_ {
        self.values.iter().enumerate().map(move |(i, v)| (self.start_year + i as i32, *v))
    }

    pub fn contains(&self, year: i32) -> bool {
        year >= self.start_year && year <= self.end_year()
    }

    pub fn get(&self, year: i32) -> Option<f64> {
        if self.contains(year) {
            Some(self.values[(year - self.start_year) as usize])
        } else {
            None
        }
    }

    /// Restricts to `[from, to]`; the window must lie inside the series.
    pub fn window(&self, from: i32, to: i32) -> Result<Self> {
        if from > to || !self.contains(from) || !self.contains(to) {
            return Err(Error::Alignment(format!(
                "window {from}..={to} outside `{}` ({}..={})",
                self.label,
                self.start_year,
                self.end_year()
            )));
        }
        let a = (from - self.start_year) as usize;
        let b = (to - self.start_year) as usize;
        Ok(Self {
            label: self.label.clone(),
            start_year: from,
            values: self.values[a..=b].to_vec(),
        })
    }

    /// Applies `f` elementwise, keeping the label and years.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.label.clone(), self.start_year, self.values.iter().map(|v| f(*v)).collect())
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// Checks that every value is strictly positive (TFP, R&D spend).
    pub fn require_positive(&self) -> Result<()> {
        match self.iter().find(|(_, v)| *v <= 0.0) {
            Some((y, v)) => Err(Error::Validation(format!(
                "series `{}` must be strictly positive; {y} has {v}",
                self.label
            ))),
            None => Ok(()),
        }
    }
}

/// Inclusive year range shared by every input.
pub fn common_window<'a>(series: impl IntoIterator<Item = &'a AnnualSeries>) -> Result<(i32, i32)> {
    let mut lo = i32::MIN;
    let mut hi = i32::MAX;
    let mut any = false;
    for s in series {
        any = true;
        lo = lo.max(s.start_year());
        hi = hi.min(s.end_year());
    }
    if !any {
        return Err(Error::Alignment("no series given".into()));
    }
    if lo > hi {
        return Err(Error::Alignment("series year ranges do not intersect".into()));
    }
    Ok((lo, hi))
}

/// Restricts every series to the intersection of their year ranges.
pub fn align(series: &[&AnnualSeries]) -> Result<Vec<AnnualSeries>> {
    let (lo, hi) = common_window(series.iter().copied())?;
    series.iter().map(|s| s.window(lo, hi)).collect()
}

/// Hours in a calendar year.
pub fn calendar_hours(year: i32) -> f64 {
    if is_leap(year) {
        8784.0
    } else {
        8760.0
    }
}

pub fn is_leap(year: i32) -> bool {
    (year % 4 == 0 && year % 100 != 0) || year % 400 == 0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(start: i32, end: i32) -> AnnualSeries {
        AnnualSeries::new("x", start, (start..=end).map(f64::from).collect()).unwrap()
    }

    #[test]
    fn align_intersects_ranges() {
        let out = align(&[&s(1950, 2000), &s(1960, 2010)]).unwrap();
        for o in &out {
            assert_eq!((o.start_year(), o.end_year()), (1960, 2000));
        }
        assert_eq!(out[0].get(1960), Some(1960.0));
    }

    #[test]
    fn align_identical_is_identity() {
        let a = s(1950, 2000);
        let out = align(&[&a, &a.clone()]).unwrap();
        assert_eq!(out[0], a);
    }

    #[test]
    fn align_disjoint_fails() {
        assert!(matches!(align(&[&s(1950, 1960), &s(1970, 1980)]), Err(Error::Alignment(_))));
    }

    #[test]
    fn duplicate_year_is_named() {
        let err = AnnualSeries::from_pairs("rd", vec![(1990, 1.0), (1991, 2.0), (1991, 3.0)]).unwrap_err();
        assert!(err.to_string().contains("1991"), "{err}");
    }

    #[test]
    fn gap_rejected() {
        assert!(AnnualSeries::from_pairs("rd", vec![(1990, 1.0), (1992, 2.0)]).is_err());
    }

    #[test]
    fn nonpositive_rejected() {
        let a = AnnualSeries::new("tfp", 2000, vec![1.0, 0.0]).unwrap();
        assert!(a.require_positive().is_err());
        assert!(AnnualSeries::new("tfp", 2000, vec![1.0, f64::NAN]).is_err());
    }

    #[test]
    fn leap_hours() {
        assert_eq!(calendar_hours(2000), 8784.0);
        assert_eq!(calendar_hours(1900), 8760.0);
        assert_eq!(calendar_hours(2024), 8784.0);
        assert_eq!(calendar_hours(2023), 8760.0);
    }
}
