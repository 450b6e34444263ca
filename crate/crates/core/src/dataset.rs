//! The estimation dataset: TFP, R&D, weather and optional extra covariates,
//! aligned on the years usable for regression.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exposure::{ExposureHistogramSeries, MonthlyExposure};
use crate::io;
use crate::series::AnnualSeries;

/// Default research lag length in years.
pub const DEFAULT_LAGS: usize = 50;

/// Input file locations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetPaths {
    pub tfp: PathBuf,
    pub rd: PathBuf,
    pub exposure: PathBuf,
    pub precip: PathBuf,
    #[serde(default)]
    pub extras: Vec<(String, PathBuf)>,
    /// Monthly exposure and precipitation, needed only by the season search.
    #[serde(default)]
    pub monthly: Option<(PathBuf, PathBuf)>,
}

impl DatasetPaths {
    /// Conventional layout: `tfp.csv`, `rd.csv`, `exposure.csv`, `precip.csv`,
    /// any `extra_<name>.csv`, and optionally `exposure_monthly.csv` with
    /// `precip_monthly.csv`.
    pub fn from_dir(dir: &Path) -> Result<Self> {
        let mut extras = Vec::new();
        let entries = std::fs::read_dir(dir).map_err(|e| Error::io(format!("listing {}", dir.display()), e))?;
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(format!("listing {}", dir.display()), e))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if let Some(x) = name.strip_prefix("extra_").and_then(|s| s.strip_suffix(".csv")) {
                extras.push((x.to_string(), entry.path()));
            }
        }
        extras.sort();
        let me = dir.join("exposure_monthly.csv");
        let mp = dir.join("precip_monthly.csv");
        Ok(Self {
            tfp: dir.join("tfp.csv"),
            rd: dir.join("rd.csv"),
            exposure: dir.join("exposure.csv"),
            precip: dir.join("precip.csv"),
            extras,
            monthly: (me.exists() && mp.exists()).then_some((me, mp)),
        })
    }
}

/// Validated, year-aligned inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    tfp: AnnualSeries,
    rd: AnnualSeries,
    exposure: ExposureHistogramSeries,
    precip: AnnualSeries,
    extras: BTreeMap<String, AnnualSeries>,
    monthly: Option<MonthlyExposure>,
    lags: usize,
    window: (i32, i32),
    dropped_for_rd: Vec<i32>,
    dropped_for_weather: Vec<i32>,
    /// Weather covers a sub-annual season, so totals are not calendar hours.
    seasonal: bool,
}

impl Dataset {
    /// Aligns the inputs and validates every invariant.
    ///
    /// The usable window is the set of TFP years that have `lags` years of
    /// R&D history (`t - lags + 1 ..= t`) and weather coverage.
    pub fn new(
        tfp: AnnualSeries,
        rd: AnnualSeries,
        exposure: ExposureHistogramSeries,
        precip: AnnualSeries,
        extras: BTreeMap<String, AnnualSeries>,
        monthly: Option<MonthlyExposure>,
        lags: usize,
    ) -> Result<Self> {
        let ds = Self::new_unchecked(tfp, rd, exposure, precip, extras, monthly, lags)?;
        ds.validate()?;
        Ok(ds)
    }

    fn new_unchecked(
        tfp: AnnualSeries,
        rd: AnnualSeries,
        exposure: ExposureHistogramSeries,
        precip: AnnualSeries,
        extras: BTreeMap<String, AnnualSeries>,
        monthly: Option<MonthlyExposure>,
        lags: usize,
    ) -> Result<Self> {
        if lags == 0 {
            return Err(Error::InvalidArgument("lag length must be at least 1".into()));
        }
        let rd_lo = rd.start_year() + lags as i32 - 1;
        let rd_hi = rd.end_year();
        let w_lo = exposure.start_year().max(precip.start_year());
        let w_hi = exposure.end_year().min(precip.end_year());
        let lo = tfp.start_year().max(rd_lo).max(w_lo);
        let hi = tfp.end_year().min(rd_hi).min(w_hi);
        if lo > hi {
            return Err(Error::Alignment(format!(
                "no TFP year has {lags} years of R&D history and weather coverage \
                 (TFP {}..={}, R&D {}..={}, weather {w_lo}..={w_hi})",
                tfp.start_year(),
                tfp.end_year(),
                rd.start_year(),
                rd.end_year()
            )));
        }
        let dropped_for_rd = tfp.years().filter(|&t| t < rd_lo || t > rd_hi).collect();
        let dropped_for_weather =
            tfp.years().filter(|&t| t >= rd_lo && t <= rd_hi && (t < w_lo || t > w_hi)).collect();
        Ok(Self {
            tfp,
            rd,
            exposure,
            precip,
            extras,
            monthly,
            lags,
            window: (lo, hi),
            dropped_for_rd,
            dropped_for_weather,
            seasonal: false,
        })
    }

    pub fn load(paths: &DatasetPaths, lags: usize) -> Result<Self> {
        let tfp = io::read_annual(&paths.tfp, "tfp_index", "tfp")?;
        let rd = io::read_annual(&paths.rd, "spend_b2020usd", "rd")?;
        let exposure = io::read_exposure(&paths.exposure)?;
        let precip = io::read_annual(&paths.precip, "precip_mm", "precip")?;
        let mut extras = BTreeMap::new();
        for (name, p) in &paths.extras {
            extras.insert(name.clone(), io::read_annual(p, "value", name)?);
        }
        let monthly = match &paths.monthly {
            Some((e, p)) => Some(io::read_monthly(e, p)?),
            None => None,
        };
        Self::new(tfp, rd, exposure, precip, extras, monthly, lags)
    }

    /// Re-checks every type invariant.
    pub fn validate(&self) -> Result<()> {
        self.tfp.require_positive()?;
        self.rd.require_positive()?;
        if !self.seasonal {
            self.exposure.check_conservation()?;
        }
        if let Some(m) = &self.monthly {
            let (annual, _) = m.annual()?;
            if annual.edges() != self.exposure.edges() {
                return Err(Error::Validation("monthly and annual exposure use different bins".into()));
            }
        }
        let (lo, hi) = self.window;
        if lo > hi {
            return Err(Error::Alignment("empty usable window".into()));
        }
        for t in [lo, hi] {
            if !self.rd.contains(t - self.lags as i32 + 1) || !self.rd.contains(t) {
                return Err(Error::Alignment(format!("year {t} lacks R&D lag history")));
            }
        }
        Ok(())
    }

    pub fn tfp(&self) -> &AnnualSeries {
        &self.tfp
    }

    pub fn rd(&self) -> &AnnualSeries {
        &self.rd
    }

    pub fn exposure(&self) -> &ExposureHistogramSeries {
        &self.exposure
    }

    pub fn precip(&self) -> &AnnualSeries {
        &self.precip
    }

    pub fn monthly(&self) -> Option<&MonthlyExposure> {
        self.monthly.as_ref()
    }

    pub fn extras(&self) -> &BTreeMap<String, AnnualSeries> {
        &self.extras
    }

    /// Extra covariate by name, failing fast when it was not supplied.
    pub fn extra(&self, name: &str) -> Result<&AnnualSeries> {
        self.extras.get(name).ok_or_else(|| Error::MissingCovariate(name.to_string()))
    }

    pub fn lags(&self) -> usize {
        self.lags
    }

    /// Usable regression years, inclusive.
    pub fn window(&self) -> (i32, i32) {
        self.window
    }

    pub fn years(&self) -> impl Iterator<Item = i32> {
        self.window.0..=self.window.1
    }

    /// TFP years dropped for lack of R&D lag history.
    pub fn dropped_for_rd(&self) -> &[i32] {
        &self.dropped_for_rd
    }

    /// TFP years with R&D history but no weather coverage.
    pub fn dropped_for_weather(&self) -> &[i32] {
        &self.dropped_for_weather
    }

    /// Same data with a different lag length, re-deriving the window.
    pub fn with_lags(&self, lags: usize) -> Result<Self> {
        Self::new(
            self.tfp.clone(),
            self.rd.clone(),
            self.exposure.clone(),
            self.precip.clone(),
            self.extras.clone(),
            self.monthly.clone(),
            lags,
        )
    }

    /// Same data with the weather inputs replaced by seasonal aggregates.
    pub fn with_weather(&self, exposure: ExposureHistogramSeries, precip: AnnualSeries) -> Result<Self> {
        let mut ds = Self::new_unchecked(
            self.tfp.clone(),
            self.rd.clone(),
            exposure,
            precip,
            self.extras.clone(),
            None,
            self.lags,
        )?;
        ds.seasonal = true;
        ds.validate()?;
        Ok(ds)
    }
}
