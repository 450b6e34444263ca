//! Weather-response regression: log TFP on spline-transformed temperature
//! exposure and a quadratic in precipitation, plus a trend control.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::design::{DesignBuilder, Trend};
use crate::error::{Error, Result};
use crate::exposure::{self, BinCoding, ExposureHistogramSeries};
use crate::ols::{self, Design, OlsFit, RankPolicy};
use crate::series::AnnualSeries;
use crate::spline::{self, SplineBasis};

/// Default spline degrees of freedom.
pub const DEFAULT_SPLINE_DF: usize = 5;

/// Contiguous run of months; `start_month` is 1-based and the run may wrap
/// past December.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Season {
    pub start_month: u32,
    pub months: u32,
}

impl Season {
    pub const CALENDAR_YEAR: Season = Season { start_month: 1, months: 12 };

    pub fn new(start_month: u32, months: u32) -> Result<Self> {
        if !(1..=12).contains(&start_month) || !(1..=12).contains(&months) {
            return Err(Error::InvalidArgument(format!("season {start_month}:{months}")));
        }
        Ok(Self { start_month, months })
    }

    pub fn is_calendar_year(&self) -> bool {
        *self == Self::CALENDAR_YEAR
    }

    /// 1-based months covered, in order.
    pub fn month_list(&self) -> Vec<u32> {
        (0..self.months).map(|i| (self.start_month - 1 + i) % 12 + 1).collect()
    }
}

impl Default for Season {
    fn default() -> Self {
        Self::CALENDAR_YEAR
    }
}

impl fmt::Display for Season {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.start_month, self.months)
    }
}

impl FromStr for Season {
    type Err = Error;

    /// `start:length`, e.g. `1:12` or `6:3`.
    fn from_str(s: &str) -> Result<Self> {
        let (a, b) = s
            .split_once(':')
            .ok_or_else(|| Error::InvalidArgument(format!("season `{s}` is not start:length")))?;
        let parse = |v: &str| {
            v.trim().parse::<u32>().map_err(|_| Error::InvalidArgument(format!("season `{s}`")))
        };
        Self::new(parse(a)?, parse(b)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeatherOptions {
    pub df: usize,
    pub tail_share: f64,
    pub season: Season,
}

impl Default for WeatherOptions {
    fn default() -> Self {
        Self { df: DEFAULT_SPLINE_DF, tail_share: exposure::DEFAULT_TAIL_SHARE, season: Season::CALENDAR_YEAR }
    }
}

/// Transformed weather regressors `E_t^1..E_t^J, P_t, P_t²` by year, together
/// with the bin coding and basis that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct WeatherDesign {
    pub season: Season,
    pub coding: BinCoding,
    pub basis: SplineBasis,
    raw: ExposureHistogramSeries,
    precip: AnnualSeries,
    transformed: Vec<Vec<f64>>,
}

impl WeatherDesign {
    /// Codes the (seasonal) exposure over the dataset's usable window and
    /// places spline knots at quantiles of the pooled coded exposure.
    pub fn build(ds: &Dataset, opts: &WeatherOptions) -> Result<Self> {
        let (raw, precip) = seasonal_weather(ds, opts.season)?;
        let (lo, hi) = ds.window();
        let lo = lo.max(raw.start_year());
        let hi = hi.min(raw.end_year());
        let sample = raw.window(lo, hi)?;
        let coded = exposure::top_bottom_code(&sample, opts.tail_share)?;
        let mass = coded.series.pooled();
        let basis = spline::spline_basis(&coded.series.bin_centers(), opts.df, Some(&mass))?;
        Self::from_parts(opts.season, coded.coding, basis, raw, precip)
    }

    /// Rebuilds a design from a stored coding and basis on new raw weather.
    pub fn from_parts(
        season: Season,
        coding: BinCoding,
        basis: SplineBasis,
        raw: ExposureHistogramSeries,
        precip: AnnualSeries,
    ) -> Result<Self> {
        if basis.centers().len() != coding.k() {
            return Err(Error::BinCodingMismatch(format!(
                "basis has {} rows, coding has {} bins",
                basis.centers().len(),
                coding.k()
            )));
        }
        let coded = coding.apply(&raw)?;
        let transformed = coded.rows().iter().map(|r| basis.project(r)).collect();
        Ok(Self { season, coding, basis, raw, precip, transformed })
    }

    pub fn df(&self) -> usize {
        self.basis.df()
    }

    pub fn raw(&self) -> &ExposureHistogramSeries {
        &self.raw
    }

    pub fn precip(&self) -> &AnnualSeries {
        &self.precip
    }

    /// `E_t^j` for one year.
    pub fn transformed(&self, year: i32) -> Option<&[f64]> {
        if year < self.raw.start_year() || year > self.raw.end_year() {
            return None;
        }
        Some(&self.transformed[(year - self.raw.start_year()) as usize])
    }

    pub fn column_names(&self) -> Vec<String> {
        let mut v: Vec<String> = (1..=self.df()).map(|j| format!("E{j}")).collect();
        v.push("P".into());
        v.push("P2".into());
        v
    }

    /// Appends `E1..EJ, P, P2` to a design.
    pub fn add_columns(&self, b: &mut DesignBuilder<'_>) -> Result<()> {
        for j in 0..self.df() {
            b.push(format!("E{}", j + 1), |t| {
                self.transformed(t)
                    .map(|e| e[j])
                    .ok_or_else(|| Error::InsufficientHistory(format!("exposure missing year {t}")))
            })?;
        }
        let p = |t: i32| {
            self.precip.get(t).ok_or_else(|| Error::InsufficientHistory(format!("precipitation missing year {t}")))
        };
        b.push("P", p)?;
        b.push("P2", |t| p(t).map(|v| v * v))?;
        Ok(())
    }
}

/// Raw exposure and precipitation aggregated over `season`.
pub fn seasonal_weather(ds: &Dataset, season: Season) -> Result<(ExposureHistogramSeries, AnnualSeries)> {
    if season.is_calendar_year() {
        return Ok((ds.exposure().clone(), ds.precip().clone()));
    }
    let m = ds
        .monthly()
        .ok_or_else(|| Error::InvalidArgument(format!("season {season} needs monthly exposure input")))?;
    m.season(season.start_month, season.months)
}

/// Spline and precipitation coefficients: all that impact projection needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeatherCoefs {
    pub gamma: Vec<f64>,
    pub theta1: f64,
    pub theta2: f64,
}

impl WeatherCoefs {
    /// Picks `E1..EJ, P, P2` out of named coefficients.
    pub fn from_named(names: &[String], values: &[f64], df: usize) -> Result<Self> {
        let get = |n: &str| {
            names
                .iter()
                .position(|x| x == n)
                .map(|i| values[i])
                .ok_or_else(|| Error::MissingCovariate(n.to_string()))
        };
        let gamma = (1..=df).map(|j| get(&format!("E{j}"))).collect::<Result<Vec<_>>>()?;
        Ok(Self { gamma, theta1: get("P")?, theta2: get("P2")? })
    }

    /// Weather contribution relative to a reference: `Σ γ_j ΔE_j + θ₁ΔP + θ₂Δ(P²)`.
    pub fn contribution(&self, e: &[f64], e_ref: &[f64], p: f64, p_ref: f64) -> f64 {
        let mut d = 0.0;
        for ((g, a), b) in self.gamma.iter().zip(e).zip(e_ref) {
            d += g * (a - b);
        }
        d + self.theta1 * (p - p_ref) + self.theta2 * (p * p - p_ref * p_ref)
    }
}

/// Fitted weather model.
#[derive(Debug, Clone, PartialEq)]
pub struct WeatherFit {
    pub trend: Trend,
    pub season: Season,
    pub names: Vec<String>,
    pub coef: Vec<f64>,
    pub coefs: WeatherCoefs,
    pub residuals: AnnualSeries,
    pub dof: usize,
    pub window: (i32, i32),
    pub coding: BinCoding,
    pub basis: SplineBasis,
    /// Marginal effect on log TFP of one more hour in each coded bin.
    pub response_curve: Vec<f64>,
}

impl WeatherFit {
    pub fn beta0(&self) -> f64 {
        self.coef[0]
    }

    pub fn bin_centers(&self) -> &[f64] {
        self.basis.centers()
    }

    pub fn from_ols(design: &Design, fit: &OlsFit, wd: &WeatherDesign, trend: Trend) -> Result<Self> {
        let coefs = WeatherCoefs::from_named(&design.names, &fit.coef, wd.df())?;
        let response_curve = wd.basis.curve(&coefs.gamma);
        Ok(Self {
            trend,
            season: wd.season,
            names: design.names.clone(),
            coef: fit.coef.clone(),
            coefs,
            residuals: AnnualSeries::new("residual", design.years[0], fit.residuals.clone())?,
            dof: design.nrows() - design.ncols(),
            window: (design.years[0], *design.years.last().unwrap()),
            coding: wd.coding.clone(),
            basis: wd.basis.clone(),
            response_curve,
        })
    }
}

/// Design of the weather regression: `[1, trend, E1..EJ, P, P²]`.
pub fn weather_regression_design(ds: &Dataset, wd: &WeatherDesign, trend: Trend) -> Result<Design> {
    let mut b = DesignBuilder::new(ds, trend)?;
    wd.add_columns(&mut b)?;
    b.build()
}

/// Observations needed beyond the parameter count.
pub const MIN_EXTRA_OBS: usize = 5;

pub(crate) fn check_sample(design: &Design) -> Result<()> {
    let (n, p) = (design.nrows(), design.ncols());
    if n < p + MIN_EXTRA_OBS {
        return Err(Error::InsufficientSample { n, p, needed: p + MIN_EXTRA_OBS });
    }
    Ok(())
}

pub fn fit_weather_model(ds: &Dataset, wd: &WeatherDesign, trend: Trend) -> Result<WeatherFit> {
    fit_weather_model_with(ds, wd, trend, RankPolicy::Error)
}

pub fn fit_weather_model_with(ds: &Dataset, wd: &WeatherDesign, trend: Trend, policy: RankPolicy) -> Result<WeatherFit> {
    let design = weather_regression_design(ds, wd, trend)?;
    check_sample(&design)?;
    let fit = ols::fit(&design, policy)?;
    WeatherFit::from_ols(&design, &fit, wd, trend)
}

/// Mean raw histogram and mean precipitation over a window; the reference
/// state for uniform sensitivities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Climatology {
    pub hist: Vec<f64>,
    pub precip: f64,
}

impl Climatology {
    pub fn over(raw: &ExposureHistogramSeries, precip: &AnnualSeries, from: i32, to: i32) -> Result<Self> {
        let hist = raw.mean_over(from, to)?;
        let p = precip.window(from, to)?;
        Ok(Self { hist, precip: crate::stats::mean(p.values()) })
    }
}

/// Uniform change applied to the baseline climatology.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UniformChange {
    /// Whole-degree temperature shift, °C.
    Temperature(i32),
    /// Precipitation change, percent.
    Precip(f64),
}

/// Effect of a uniform change in log points and as a percent change,
/// `100 (exp(D) - 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sensitivity {
    pub log_points: f64,
    pub percent: f64,
}

impl Sensitivity {
    pub fn from_log_points(d: f64) -> Self {
        Self { log_points: d, percent: 100.0 * d.exp_m1() }
    }
}

pub fn uniform_sensitivity(
    coefs: &WeatherCoefs,
    coding: &BinCoding,
    basis: &SplineBasis,
    baseline: &Climatology,
    change: UniformChange,
) -> Result<Sensitivity> {
    let e0 = basis.project(&coding.code_row(&baseline.hist));
    let (hist, p) = match change {
        UniformChange::Temperature(dt) => {
            if dt.abs() > exposure::MAX_SHIFT_C {
                return Err(Error::InvalidArgument(format!("shift {dt} °C exceeds ±{}", exposure::MAX_SHIFT_C)));
            }
            (exposure::shift_row(&baseline.hist, dt), baseline.precip)
        }
        UniformChange::Precip(pct) => {
            if !pct.is_finite() || pct < -100.0 {
                return Err(Error::InvalidArgument(format!("precipitation change {pct}%")));
            }
            (baseline.hist.clone(), baseline.precip * (1.0 + pct / 100.0))
        }
    };
    if coding.raw_edges.len() != hist.len() + 1 {
        return Err(Error::BinCodingMismatch("baseline histogram does not match the coding".into()));
    }
    let e1 = basis.project(&coding.code_row(&hist));
    Ok(Sensitivity::from_log_points(coefs.contribution(&e1, &e0, p, baseline.precip)))
}

/// Which weather regressors enter a season-search model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariableSet {
    TempAndPrecip,
    TempOnly,
    PrecipOnly,
}

impl VariableSet {
    pub const ALL: [VariableSet; 3] = [VariableSet::TempAndPrecip, VariableSet::TempOnly, VariableSet::PrecipOnly];

    fn keeps(&self, col: &str) -> bool {
        let is_temp = col.starts_with('E');
        let is_precip = col == "P" || col == "P2";
        match self {
            VariableSet::TempAndPrecip => true,
            VariableSet::TempOnly => !is_precip,
            VariableSet::PrecipOnly => !is_temp,
        }
    }
}

impl fmt::Display for VariableSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VariableSet::TempAndPrecip => "temp_precip",
            VariableSet::TempOnly => "temp",
            VariableSet::PrecipOnly => "precip",
        })
    }
}

impl FromStr for VariableSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "temp_precip" => Ok(Self::TempAndPrecip),
            "temp" => Ok(Self::TempOnly),
            "precip" => Ok(Self::PrecipOnly),
            _ => Err(Error::InvalidArgument(format!("variable set `{s}` (temp_precip|temp|precip)"))),
        }
    }
}

/// One season-search cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeasonCell {
    pub season: Season,
    pub set: VariableSet,
    /// Percent reduction of leave-one-year-out MSE relative to the model
    /// without weather, or the reason the cell could not be fitted.
    pub mse_reduction: std::result::Result<f64, String>,
    pub best: bool,
}

/// Leave-one-year-out comparison of every (start month, length) season
/// against the trend-only model, for each variable set.
///
/// Seasons are attributed to the year in which they end; all cells are
/// evaluated on the years available to wrapping seasons, so every cell uses
/// the same rows.
pub fn season_search(
    ds: &Dataset,
    sets: &[VariableSet],
    trend: Trend,
    opts: &WeatherOptions,
) -> Result<Vec<SeasonCell>> {
    let m = ds.monthly().ok_or_else(|| Error::InvalidArgument("season search needs monthly exposure".into()))?;
    let first = m.start_year() + 1;
    let last = m.end_year();
    let seasons: Vec<Season> =
        (1..=12).flat_map(|s| (1..=12).map(move |l| Season { start_month: s, months: l })).collect();

    // baseline on the same rows: the calendar-year dataset restricted to the common years
    let (cal_ex, cal_p) = m.season(1, 12)?;
    let base_ds = ds.with_weather(cal_ex.window(first, last)?, cal_p.window(first, last)?)?;
    let base = DesignBuilder::new(&base_ds, trend)?.build()?;
    let base_mse = ols::loo_mse(&base)?;

    let per_season: Vec<Vec<SeasonCell>> = seasons
        .par_iter()
        .map(|season| {
            let built = (|| -> Result<Design> {
                let (ex, p) = m.season(season.start_month, season.months)?;
                let sds = ds.with_weather(ex.window(first, last)?, p.window(first, last)?)?;
                let wd = WeatherDesign::build(&sds, &WeatherOptions { season: Season::CALENDAR_YEAR, ..*opts })?;
                weather_regression_design(&sds, &wd, trend)
            })();
            sets.iter()
                .map(|set| {
                    let r = built.as_ref().map_err(|e| e.to_string()).and_then(|d| {
                        let d = d.retain_columns(|c| set.keeps(c));
                        check_sample(&d).map_err(|e| e.to_string())?;
                        ols::loo_mse(&d).map(|mse| 100.0 * (1.0 - mse / base_mse)).map_err(|e| e.to_string())
                    });
                    SeasonCell { season: *season, set: *set, mse_reduction: r, best: false }
                })
                .collect()
        })
        .collect();
    let mut cells: Vec<SeasonCell> = per_season.into_iter().flatten().collect();
    for set in sets {
        let best = cells
            .iter()
            .enumerate()
            .filter(|(_, c)| c.set == *set)
            .filter_map(|(i, c)| c.mse_reduction.as_ref().ok().map(|r| (i, *r)))
            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)));
        if let Some((i, _)) = best {
            cells[i].best = true;
        }
    }
    Ok(cells)
}
