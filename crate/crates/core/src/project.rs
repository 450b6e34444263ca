//! Climate impacts on log TFP relative to a reference climatology, per
//! scenario member and pooled across members and bootstrap draws.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exposure::{BinCoding, ExposureHistogramSeries};
use crate::series::AnnualSeries;
use crate::spline::{self, SplineBasis};
use crate::stats::Summary;
use crate::weather::WeatherCoefs;

pub const DEFAULT_REF_WINDOW: (i32, i32) = (1950, 1960);
pub const DEFAULT_HORIZON: i32 = 2100;
pub const DEFAULT_PAIRINGS: usize = 2000;
pub const TARGET_YEARS: [i32; 4] = [2025, 2050, 2075, 2100];

/// Shared socioeconomic pathway.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Ssp {
    Ssp126,
    Ssp245,
    Ssp370,
    Ssp585,
}

impl Ssp {
    pub const ALL: [Ssp; 4] = [Ssp::Ssp126, Ssp::Ssp245, Ssp::Ssp370, Ssp::Ssp585];

    /// File-name token, e.g. `ssp245`.
    pub fn token(&self) -> &'static str {
        match self {
            Ssp::Ssp126 => "ssp126",
            Ssp::Ssp245 => "ssp245",
            Ssp::Ssp370 => "ssp370",
            Ssp::Ssp585 => "ssp585",
        }
    }
}

impl fmt::Display for Ssp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Ssp::Ssp126 => "SSP1-2.6",
            Ssp::Ssp245 => "SSP2-4.5",
            Ssp::Ssp370 => "SSP3-7.0",
            Ssp::Ssp585 => "SSP5-8.5",
        })
    }
}

impl FromStr for Ssp {
    type Err = Error;

    /// Accepts `SSP2-4.5`, `ssp245`, `ssp2-45` and similar spellings.
    fn from_str(s: &str) -> Result<Self> {
        let digits: String = s.chars().filter(|c| c.is_ascii_digit()).collect();
        let ok_prefix = s.to_ascii_lowercase().starts_with("ssp");
        match (ok_prefix, digits.as_str()) {
            (true, "126") => Ok(Ssp::Ssp126),
            (true, "245") => Ok(Ssp::Ssp245),
            (true, "370") => Ok(Ssp::Ssp370),
            (true, "585") => Ok(Ssp::Ssp585),
            _ => Err(Error::InvalidArgument(format!("unknown scenario `{s}`"))),
        }
    }
}

/// Weather of one climate model under one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioMember {
    pub gcm: String,
    pub exposure: ExposureHistogramSeries,
    pub precip: AnnualSeries,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSet {
    pub ssp: Ssp,
    pub members: Vec<ScenarioMember>,
}

impl ScenarioSet {
    /// Checks unique GCM ids and coverage of `ref_window` through `horizon`.
    pub fn new(ssp: Ssp, members: Vec<ScenarioMember>, ref_window: (i32, i32), horizon: i32) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::EmptyScenario);
        }
        let mut ids = std::collections::BTreeSet::new();
        for m in &members {
            if !ids.insert(m.gcm.as_str()) {
                return Err(Error::Validation(format!("{ssp}: duplicate GCM {}", m.gcm)));
            }
            for s in [(m.exposure.start_year(), m.exposure.end_year()), (m.precip.start_year(), m.precip.end_year())] {
                if s.0 > ref_window.0 || s.1 < horizon {
                    return Err(Error::Validation(format!(
                        "{ssp}/{}: covers {}..={}, needs {}..={horizon}",
                        m.gcm, s.0, s.1, ref_window.0
                    )));
                }
            }
            m.exposure.check_conservation().map_err(|e| Error::Validation(format!("{ssp}/{}: {e}", m.gcm)))?;
        }
        Ok(Self { ssp, members })
    }
}

/// Mean raw histogram and precipitation over the reference window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceClimatology {
    pub window: (i32, i32),
    pub hist: Vec<f64>,
    pub precip: f64,
}

pub fn reference_climatology(
    exposure: &ExposureHistogramSeries,
    precip: &AnnualSeries,
    window: (i32, i32),
) -> Result<ReferenceClimatology> {
    let (a, b) = window;
    let c = crate::weather::Climatology::over(exposure, precip, a, b)?;
    Ok(ReferenceClimatology { window, hist: c.hist, precip: c.precip })
}

/// Bin coding and spline basis of the fitted weather model.
#[derive(Debug, Clone, Copy)]
pub struct ImpactModel<'a> {
    pub coding: &'a BinCoding,
    pub basis: &'a SplineBasis,
}

/// Weather of a member transformed into the model's regressors.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformedWeather {
    pub start_year: i32,
    pub e: Vec<Vec<f64>>,
    pub p: Vec<f64>,
    pub e_ref: Vec<f64>,
    pub p_ref: f64,
}

impl TransformedWeather {
    pub fn new(
        model: ImpactModel<'_>,
        exposure: &ExposureHistogramSeries,
        precip: &AnnualSeries,
        reference: &ReferenceClimatology,
        years: (i32, i32),
    ) -> Result<Self> {
        let (from, to) = years;
        let coded = model.coding.apply(&exposure.window(from, to)?)?;
        if reference.hist.len() + 1 != model.coding.raw_edges.len() {
            return Err(Error::BinCodingMismatch("reference climatology has a different bin count".into()));
        }
        let e = coded.rows().iter().map(|r| model.basis.project(r)).collect();
        let e_ref = model.basis.project(&model.coding.code_row(&reference.hist));
        Ok(Self {
            start_year: from,
            e,
            p: precip.window(from, to)?.values().to_vec(),
            e_ref,
            p_ref: reference.precip,
        })
    }

    /// `D_t` for every year under one coefficient draw.
    pub fn impacts(&self, coefs: &WeatherCoefs) -> Vec<f64> {
        self.e.iter().zip(&self.p).map(|(e, p)| coefs.contribution(e, &self.e_ref, *p, self.p_ref)).collect()
    }
}

/// `D_t` per draw for one member, over `years`.
pub fn impact_series(
    coefs: &[WeatherCoefs],
    member: &ScenarioMember,
    reference: &ReferenceClimatology,
    model: ImpactModel<'_>,
    years: (i32, i32),
) -> Result<Vec<AnnualSeries>> {
    let tw = TransformedWeather::new(model, &member.exposure, &member.precip, reference, years)?;
    coefs.iter().map(|c| AnnualSeries::new("impact", years.0, tw.impacts(c))).collect()
}

/// How impacts are reported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportScale {
    /// `100 (exp(D) - 1)`
    #[default]
    Percent,
    /// `100 D`
    LogPoints,
}

impl ReportScale {
    pub fn apply(&self, d: f64) -> f64 {
        match self {
            ReportScale::Percent => 100.0 * d.exp_m1(),
            ReportScale::LogPoints => 100.0 * d,
        }
    }
}

impl FromStr for ReportScale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "percent" => Ok(Self::Percent),
            "log_points" | "log-points" => Ok(Self::LogPoints),
            _ => Err(Error::InvalidArgument(format!("report scale `{s}` (percent|log_points)"))),
        }
    }
}

/// Pooled impact draws for one scenario (or the observed record).
#[derive(Debug, Clone, PartialEq)]
pub struct ImpactDistribution {
    pub label: String,
    pub ssp: Option<Ssp>,
    pub start_year: i32,
    /// `(bootstrap draw index, member index)` of every pairing.
    pub pairings: Vec<(usize, usize)>,
    /// `[pairing][year]`, log points.
    pub d: Vec<Vec<f64>>,
    pub gcms: Vec<String>,
    /// `[member][draw][year]`, log points.
    pub by_member: Vec<Vec<Vec<f64>>>,
}

impl ImpactDistribution {
    pub fn years(&self) -> impl Iterator<Item = i32> + '_ {
        let n = self.d.first().map_or(0, Vec::len);
        (0..n).map(move |i| self.start_year + i as i32)
    }

    pub fn end_year(&self) -> i32 {
        self.start_year + self.d.first().map_or(0, Vec::len) as i32 - 1
    }

    fn column(rows: &[Vec<f64>], i: usize) -> Vec<f64> {
        rows.iter().map(|r| r[i]).collect()
    }

    /// Mean and 95% interval per year across pairings.
    pub fn summary(&self, scale: ReportScale) -> Vec<(i32, Summary)> {
        summarise(&self.d, self.start_year, scale)
    }

    /// Per-GCM summaries, all draws against that member.
    pub fn summary_by_gcm(&self, scale: ReportScale) -> Vec<(String, Vec<(i32, Summary)>)> {
        self.gcms
            .iter()
            .zip(&self.by_member)
            .map(|(g, rows)| (g.clone(), summarise(rows, self.start_year, scale)))
            .collect()
    }

    /// Summaries at the requested target years (single-year values).
    pub fn at_years(&self, years: &[i32], scale: ReportScale) -> Vec<(i32, Summary)> {
        self.summary(scale).into_iter().filter(|(y, _)| years.contains(y)).collect()
    }

    /// Each pairing smoothed by a natural spline with `df` degrees of freedom.
    pub fn smoothed(&self, df: usize) -> Result<Vec<Vec<f64>>> {
        let x: Vec<f64> = self.years().map(f64::from).collect();
        let basis = spline::smoother_basis(&x, df)?;
        self.d.par_iter().map(|row| spline::smooth_with(&basis, row)).collect()
    }

    pub fn values_at(&self, year: i32) -> Option<Vec<f64>> {
        if year < self.start_year || year > self.end_year() {
            return None;
        }
        Some(Self::column(&self.d, (year - self.start_year) as usize))
    }
}

pub fn summarise(rows: &[Vec<f64>], start_year: i32, scale: ReportScale) -> Vec<(i32, Summary)> {
    let n = rows.first().map_or(0, Vec::len);
    (0..n)
        .map(|i| {
            let v: Vec<f64> = rows.iter().map(|r| scale.apply(r[i])).collect();
            (start_year + i as i32, Summary::of(&v))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnsembleOptions {
    pub pairings: usize,
    pub seed: u64,
    pub ref_window: (i32, i32),
    /// First and last projected year.
    pub years: (i32, i32),
}

impl Default for EnsembleOptions {
    fn default() -> Self {
        Self { pairings: DEFAULT_PAIRINGS, seed: 0, ref_window: DEFAULT_REF_WINDOW, years: (DEFAULT_REF_WINDOW.0, DEFAULT_HORIZON) }
    }
}

/// Draws `M` uniform (coefficient draw, member) pairings with replacement and
/// pools their impact paths.
pub fn ensemble_impacts(
    coefs: &[WeatherCoefs],
    set: &ScenarioSet,
    model: ImpactModel<'_>,
    opts: &EnsembleOptions,
) -> Result<ImpactDistribution> {
    if set.members.is_empty() {
        return Err(Error::EmptyScenario);
    }
    if coefs.is_empty() || opts.pairings == 0 {
        return Err(Error::InvalidArgument("need at least one draw and one pairing".into()));
    }
    let by_member: Vec<Vec<Vec<f64>>> = set
        .members
        .par_iter()
        .map(|m| {
            let reference = reference_climatology(&m.exposure, &m.precip, opts.ref_window)?;
            let tw = TransformedWeather::new(model, &m.exposure, &m.precip, &reference, opts.years)?;
            Ok(coefs.iter().map(|c| tw.impacts(c)).collect())
        })
        .collect::<Result<_>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    rng.set_stream(set.ssp as u64);
    let pairings: Vec<(usize, usize)> = (0..opts.pairings)
        .map(|_| (rng.random_range(0..coefs.len()), rng.random_range(0..set.members.len())))
        .collect();
    let d = pairings.iter().map(|&(k, m)| by_member[m][k].clone()).collect();
    Ok(ImpactDistribution {
        label: set.ssp.to_string(),
        ssp: Some(set.ssp),
        start_year: opts.years.0,
        pairings,
        d,
        gcms: set.members.iter().map(|m| m.gcm.clone()).collect(),
        by_member,
    })
}

/// Impacts of observed weather relative to its own reference climatology,
/// one path per coefficient draw.
pub fn historical_trend_impact(
    coefs: &[WeatherCoefs],
    exposure: &ExposureHistogramSeries,
    precip: &AnnualSeries,
    model: ImpactModel<'_>,
    ref_window: (i32, i32),
) -> Result<ImpactDistribution> {
    if coefs.is_empty() {
        return Err(Error::InvalidArgument("need at least one draw".into()));
    }
    let reference = reference_climatology(exposure, precip, ref_window)?;
    let years = (
        ref_window.0.max(exposure.start_year()).max(precip.start_year()),
        exposure.end_year().min(precip.end_year()),
    );
    let tw = TransformedWeather::new(model, exposure, precip, &reference, years)?;
    let rows: Vec<Vec<f64>> = coefs.iter().map(|c| tw.impacts(c)).collect();
    Ok(ImpactDistribution {
        label: "observed".into(),
        ssp: None,
        start_year: years.0,
        pairings: (0..coefs.len()).map(|k| (k, 0)).collect(),
        d: rows.clone(),
        gcms: vec!["observed".into()],
        by_member: vec![rows],
    })
}
