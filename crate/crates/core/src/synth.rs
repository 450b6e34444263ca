//! Synthetic inputs with a known data-generating process, for tests,
//! benchmarks and the bundled fixture.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::exposure::{self, DailyGrid, DayObs, DiurnalAnchors, NationalWeather, SpatialWeights};
use crate::io;
use crate::project::{ScenarioMember, Ssp};
use crate::series::AnnualSeries;
use crate::stock::{self, GammaLagSpec};

/// Marginal log-TFP effect of one hour at temperature `c`:
/// `−harm · max(c − knee, 0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HingeResponse {
    pub knee_c: f64,
    pub harm: f64,
}

impl HingeResponse {
    pub fn at(&self, c: f64) -> f64 {
        -self.harm * (c - self.knee_c).max(0.0)
    }

    /// Effect of a raw histogram, evaluated at bin centers.
    pub fn effect(&self, edges: &[i32], hours: &[f64]) -> f64 {
        exposure::bin_centers(edges).iter().zip(hours).map(|(c, h)| self.at(*c) * h).sum()
    }
}

/// Daily weather generator for a handful of grid cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeatherGen {
    pub cells: usize,
    pub base_c: f64,
    pub cell_step_c: f64,
    pub seasonal_amp_c: f64,
    pub daily_sd_c: f64,
    pub annual_sd_c: f64,
    pub range_c: f64,
    pub wet_prob: f64,
    pub wet_mean_mm: f64,
    pub annual_precip_sd: f64,
}

impl Default for WeatherGen {
    fn default() -> Self {
        Self {
            cells: 3,
            base_c: 11.0,
            cell_step_c: 3.0,
            seasonal_amp_c: 11.0,
            daily_sd_c: 2.5,
            annual_sd_c: 0.8,
            range_c: 11.0,
            wet_prob: 0.3,
            wet_mean_mm: 8.0,
            annual_precip_sd: 0.18,
        }
    }
}

impl WeatherGen {
    pub fn cell_ids(&self) -> Vec<String> {
        (0..self.cells).map(|i| format!("c{i:02}")).collect()
    }

    /// Equal spatial weights over all cells.
    pub fn weights(&self) -> Result<SpatialWeights> {
        let ids = self.cell_ids();
        let n = ids.len() as f64;
        let mut w: BTreeMap<String, f64> = ids.into_iter().map(|c| (c, 1.0 / n)).collect();
        // force an exact unit sum
        let total: f64 = w.values().sum();
        if let Some(v) = w.values_mut().next() {
            *v += 1.0 - total;
        }
        SpatialWeights::new(w)
    }

    /// Daily grid over whole calendar years; `warming(year)` is added to
    /// every temperature of that year.
    pub fn grid(&self, years: (i32, i32), warming: impl Fn(i32) -> f64, seed: u64) -> Result<DailyGrid> {
        let (from, to) = years;
        if from > to || self.cells == 0 {
            return Err(Error::InvalidArgument(format!("weather years {from}..={to}, {} cells", self.cells)));
        }
        let first = NaiveDate::from_ymd_opt(from, 1, 1).ok_or_else(|| Error::InvalidArgument(format!("year {from}")))?;
        let last = NaiveDate::from_ymd_opt(to, 12, 31).ok_or_else(|| Error::InvalidArgument(format!("year {to}")))?;
        let ndays = (last - first).num_days() as usize + 1;
        let daily = Normal::new(0.0, self.daily_sd_c).map_err(bad)?;
        let annual = Normal::new(0.0, self.annual_sd_c).map_err(bad)?;
        let wet_amount = Exp::new(1.0 / self.wet_mean_mm).map_err(bad)?;
        let wet_scale = Normal::new(0.0, self.annual_precip_sd).map_err(bad)?;
        let range_noise = Normal::new(0.0, 1.5).map_err(bad)?;

        // year-level anomalies shared by all cells
        let mut yr = ChaCha8Rng::seed_from_u64(seed);
        yr.set_stream(u64::MAX);
        let anomalies: Vec<(f64, f64)> = (from..=to)
            .map(|y| (warming(y) + annual.sample(&mut yr), wet_scale.sample(&mut yr).exp()))
            .collect();

        let mut obs = Vec::with_capacity(self.cells);
        for cell in 0..self.cells {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(cell as u64);
            let base = self.base_c + self.cell_step_c * cell as f64;
            let mut days = Vec::with_capacity(ndays);
            for i in 0..ndays {
                let date = first + chrono::Days::new(i as u64);
                let (dt, wet) = anomalies[(date.year() - from) as usize];
                let doy = date.ordinal0() as f64;
                let seasonal = self.seasonal_amp_c * (2.0 * std::f64::consts::PI * (doy - 105.0) / 365.25).sin();
                let mean = base + seasonal + dt + daily.sample(&mut rng);
                let range = (self.range_c + range_noise.sample(&mut rng)).max(0.5);
                let prcp = if rng.random::<f64>() < self.wet_prob { wet * wet_amount.sample(&mut rng) } else { 0.0 };
                days.push(DayObs { tmin: mean - 0.5 * range, tmax: mean + 0.5 * range, prcp });
            }
            obs.push(days);
        }
        DailyGrid::new(self.cell_ids(), first, obs)
    }

    /// National weather aggregated from a freshly generated grid.
    pub fn national(&self, years: (i32, i32), warming: impl Fn(i32) -> f64, seed: u64) -> Result<NationalWeather> {
        let grid = self.grid(years, warming, seed)?;
        exposure::aggregate_national(&grid, &self.weights()?, &DiurnalAnchors::default())
    }
}

fn bad(e: impl std::fmt::Display) -> Error {
    Error::InvalidArgument(e.to_string())
}

/// Parameters of the synthetic productivity process
/// `log A_t = β₀ + β₁ log S_t + W_t + ε_t`, where `W_t` combines a hinge
/// temperature response with a quadratic in precipitation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub first_year: i32,
    pub years: usize,
    pub spec: GammaLagSpec,
    pub beta0: f64,
    pub beta1: f64,
    pub response: HingeResponse,
    pub theta1: f64,
    pub theta2: f64,
    pub sigma: f64,
    /// Mean annual R&D growth and the persistence and spread of its shocks.
    pub rd_growth: f64,
    pub rd_persistence: f64,
    pub rd_shock_sd: f64,
    pub warming_per_year: f64,
    pub weather: WeatherGen,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            first_year: 1950,
            years: 70,
            spec: GammaLagSpec { lambda: 0.75, delta: 0.90, lags: 50 },
            beta0: 0.0,
            beta1: 0.5,
            response: HingeResponse { knee_c: 29.0, harm: 2e-4 },
            theta1: 2e-4,
            theta2: -1e-7,
            sigma: 0.01,
            rd_growth: 0.03,
            rd_persistence: 0.6,
            rd_shock_sd: 0.06,
            warming_per_year: 0.02,
            weather: WeatherGen::default(),
            seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn last_year(&self) -> i32 {
        self.first_year + self.years as i32 - 1
    }
}

/// Generated series together with the truth behind them.
#[derive(Debug, Clone)]
pub struct Synthetic {
    pub config: SynthConfig,
    pub tfp: AnnualSeries,
    pub rd: AnnualSeries,
    pub co2: AnnualSeries,
    pub grid: DailyGrid,
    pub weights: SpatialWeights,
    pub weather: NationalWeather,
    /// `W_t` of the generating process.
    pub weather_effect: AnnualSeries,
    pub stock: AnnualSeries,
}

/// R&D path: log spending follows an AR(1) growth process, so the lag
/// structure is identifiable from TFP.
pub fn rd_path(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Result<AnnualSeries> {
    let n = cfg.years + cfg.spec.lags - 1;
    let shock = Normal::new(0.0, cfg.rd_shock_sd).map_err(bad)?;
    let mut g = cfg.rd_growth;
    let mut log_rd = 0.0f64;
    let mut v = Vec::with_capacity(n);
    for _ in 0..n {
        v.push(log_rd.exp());
        g = cfg.rd_growth + cfg.rd_persistence * (g - cfg.rd_growth) + shock.sample(rng);
        log_rd += g;
    }
    AnnualSeries::new("rd", cfg.first_year - cfg.spec.lags as i32 + 1, v)
}

pub fn generate(cfg: &SynthConfig) -> Result<Synthetic> {
    let warming = |y: i32| cfg.warming_per_year * (y - cfg.first_year) as f64;
    let grid = cfg.weather.grid((cfg.first_year, cfg.last_year()), warming, cfg.seed)?;
    let weather = exposure::aggregate_national(&grid, &cfg.weather.weights()?, &DiurnalAnchors::default())?;
    generate_with_weather(cfg, grid, weather)
}

/// Same process on already generated weather; only R&D and noise are drawn.
pub fn generate_with_weather(cfg: &SynthConfig, grid: DailyGrid, weather: NationalWeather) -> Result<Synthetic> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1 << 40);
    let rd = rd_path(cfg, &mut rng)?;
    let stock = stock::build_stock(&rd, &cfg.spec)?.series;
    let noise = Normal::new(0.0, cfg.sigma).map_err(bad)?;
    let edges = weather.exposure.edges().to_vec();
    let mut w = Vec::with_capacity(cfg.years);
    let mut a = Vec::with_capacity(cfg.years);
    for t in cfg.first_year..=cfg.last_year() {
        let hours = weather.exposure.year(t).ok_or_else(|| Error::InsufficientHistory(format!("weather {t}")))?;
        let p = weather.precip.get(t).ok_or_else(|| Error::InsufficientHistory(format!("precip {t}")))?;
        let wt = cfg.response.effect(&edges, hours) + cfg.theta1 * p + cfg.theta2 * p * p;
        let s = stock.get(t).ok_or_else(|| Error::InsufficientHistory(format!("stock {t}")))?;
        w.push(wt);
        a.push((cfg.beta0 + cfg.beta1 * s.ln() + wt + noise.sample(&mut rng)).exp());
    }
    let co2 = AnnualSeries::new(
        "co2",
        cfg.first_year,
        (0..cfg.years).map(|i| 310.0 + 0.8 * i as f64 + 0.012 * (i * i) as f64).collect(),
    )?;
    Ok(Synthetic {
        config: *cfg,
        tfp: AnnualSeries::new("tfp", cfg.first_year, a)?,
        rd,
        co2,
        weights: cfg.weather.weights()?,
        grid,
        weather,
        weather_effect: AnnualSeries::new("weather_effect", cfg.first_year, w)?,
        stock,
    })
}

impl Synthetic {
    pub fn dataset(&self) -> Result<Dataset> {
        let mut extras = BTreeMap::new();
        extras.insert("co2".to_string(), self.co2.clone());
        Dataset::new(
            self.tfp.clone(),
            self.rd.clone(),
            self.weather.exposure.clone(),
            self.weather.precip.clone(),
            extras,
            Some(self.weather.monthly.clone()),
            self.config.spec.lags,
        )
    }

    /// Writes the conventional input layout into `dir`, plus the daily grid
    /// and weights the national series were aggregated from.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
        io::write_annual(&dir.join("tfp.csv"), "tfp_index", &self.tfp)?;
        io::write_annual(&dir.join("rd.csv"), "spend_b2020usd", &self.rd)?;
        io::write_annual(&dir.join("extra_co2.csv"), "value", &self.co2)?;
        io::write_exposure(&dir.join("exposure.csv"), &self.weather.exposure)?;
        io::write_annual(&dir.join("precip.csv"), "precip_mm", &self.weather.precip)?;
        io::write_monthly(&dir.join("exposure_monthly.csv"), &dir.join("precip_monthly.csv"), &self.weather.monthly)?;
        io::write_grid_daily(&dir.join("grid_daily.csv"), &self.grid)?;
        io::write_weights(&dir.join("weights.csv"), &self.weights)
    }
}

/// Warming rate after 2015, °C per year.
pub fn scenario_warming(ssp: Ssp) -> f64 {
    match ssp {
        Ssp::Ssp126 => 0.008,
        Ssp::Ssp245 => 0.02,
        Ssp::Ssp370 => 0.035,
        Ssp::Ssp585 => 0.045,
    }
}

/// Climate-model members for one scenario over `years`; members differ in
/// internal variability and in climate sensitivity.
pub fn scenario_members(gen: &WeatherGen, ssp: Ssp, gcms: usize, years: (i32, i32), seed: u64) -> Result<Vec<ScenarioMember>> {
    (0..gcms)
        .map(|g| {
            let sens = 0.8 + 0.4 * g as f64 / (gcms.max(2) - 1) as f64;
            let rate = scenario_warming(ssp) * sens;
            let hist = 0.01;
            let warming = |y: i32| hist * (y.min(2015) - years.0) as f64 + rate * (y - 2015).max(0) as f64;
            let member_seed = seed.wrapping_mul(1_000_003).wrapping_add(((ssp as u64) << 16) | g as u64);
            let nw = gen.national(years, warming, member_seed)?;
            Ok(ScenarioMember { gcm: format!("gcm{g:02}"), exposure: nw.exposure, precip: nw.precip })
        })
        .collect()
}

/// Writes `scenario_<ssp>_<gcm>_exposure.csv` / `_precip.csv` pairs.
pub fn write_scenarios(dir: &Path, ssp: Ssp, members: &[ScenarioMember]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    for m in members {
        let stem = format!("scenario_{}_{}", ssp.token(), m.gcm);
        io::write_exposure(&dir.join(format!("{stem}_exposure.csv")), &m.exposure)?;
        io::write_annual(&dir.join(format!("{stem}_precip.csv")), "precip_mm", &m.precip)?;
    }
    Ok(())
}
