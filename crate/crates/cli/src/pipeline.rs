//! Stage orchestration. Each stage runs at most once per pipeline, pulls in
//! the stages it depends on and writes its artifacts as soon as it finishes,
//! so a later failure leaves everything upstream on disk.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::time::Instant;

use agrotrend_core::exposure::{aggregate_national, DiurnalAnchors};
use agrotrend_core::io;
use agrotrend_core::offset::{self, GrowthProblem, OffsetSeries, TfpSimulation, GROWTH_BRACKET};
use agrotrend_core::project::{
    self, EnsembleOptions, ImpactDistribution, ImpactModel, ReportScale, ScenarioMember, ScenarioSet, Ssp,
};
use agrotrend_core::resample::{bootstrap_paired, BootstrapOptions, Model};
use agrotrend_core::stats::{self, Summary};
use agrotrend_core::stock::{self, GammaLagSpec, GridSearch, KnowledgeStock, StockFit, StockModelSpec};
use agrotrend_core::weather::{self, Climatology, UniformChange, VariableSet, WeatherDesign, WeatherFit, WeatherOptions};
use agrotrend_core::{AnnualSeries, Dataset, DatasetPaths, Error};
use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::json;

use crate::config::RunConfig;
use crate::draws::DrawSet;
use crate::manifest::{self, Manifest, StageTiming, MANIFEST, TIMINGS};
use crate::NumericalFailure;

/// Offset of the ensemble-pairing seed from the run seed, so pairings and
/// bootstrap blocks never share a random stream.
const ENSEMBLE_SEED_OFFSET: u64 = 0x9E37_79B9_7F4A_7C15;

/// Growth rates (percent) tabulated for the target-year mapping curves.
const MAPPING_GROWTH: (f64, f64, f64) = (0.0, 20.0, 0.5);

/// Number of best grid cells whose lag shapes are exported.
const TOP_CELLS: usize = 5;

pub struct StockStage {
    pub grid: GridSearch,
    pub model: StockModelSpec,
    pub stock: KnowledgeStock,
    pub fit: StockFit,
}

pub struct OffsetStage {
    pub ssp: Option<Ssp>,
    pub offset: OffsetSeries,
    pub counterfactual: AnnualSeries,
}

/// Figure data that can be requested on its own.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Figure {
    /// Lag shapes of the best grid cells.
    LagShapes,
    /// Response curve of every bootstrap draw.
    ResponseDraws,
    /// Season search surface.
    Seasons,
    /// Impact of observed weather trends.
    Observed,
    /// Growth rate to stock gain, per target year.
    Mapping,
}

impl std::str::FromStr for Figure {
    type Err = Error;

    fn from_str(s: &str) -> agrotrend_core::Result<Self> {
        match s {
            "fig1e" => Ok(Figure::LagShapes),
            "fig2a" => Ok(Figure::ResponseDraws),
            "figs8" => Ok(Figure::Seasons),
            "figs16" => Ok(Figure::Observed),
            "figs18" => Ok(Figure::Mapping),
            _ => Err(Error::InvalidArgument(format!("unknown figure `{s}` (fig1e|fig2a|figs8|figs16|figs18)"))),
        }
    }
}

impl Figure {
    pub const ALL: [Figure; 5] =
        [Figure::LagShapes, Figure::ResponseDraws, Figure::Seasons, Figure::Observed, Figure::Mapping];
}

fn num(x: f64) -> String {
    if x.is_finite() {
        x.to_string()
    } else {
        "NA".into()
    }
}

fn summary_cells(s: &Summary) -> [String; 3] {
    [num(s.mu), num(s.p2_5), num(s.p97_5)]
}

fn file_tag(d: &ImpactDistribution) -> String {
    d.ssp.map_or_else(|| d.label.clone(), |s| s.token().to_string())
}

pub struct Pipeline {
    cfg: RunConfig,
    out: PathBuf,
    inputs: BTreeMap<String, String>,
    outputs: BTreeSet<String>,
    stages: Vec<String>,
    timings: Vec<StageTiming>,
    failed: Option<String>,
    dataset: Option<Dataset>,
    design: Option<WeatherDesign>,
    stock: Option<StockStage>,
    weather: Option<WeatherFit>,
    draws: Option<DrawSet>,
    impacts: Option<Vec<ImpactDistribution>>,
    offsets: Option<Vec<OffsetStage>>,
    offset_rd: Option<(AnnualSeries, i32)>,
    done: BTreeSet<&'static str>,
}

impl Pipeline {
    pub fn new(cfg: RunConfig) -> Result<Self> {
        cfg.validate()?;
        let out = cfg.out_dir.clone();
        std::fs::create_dir_all(&out)
            .map_err(|e| Error::Io { context: format!("creating {}", out.display()), source: e })?;
        Ok(Self {
            cfg,
            out,
            inputs: BTreeMap::new(),
            outputs: BTreeSet::new(),
            stages: Vec::new(),
            timings: Vec::new(),
            failed: None,
            dataset: None,
            design: None,
            stock: None,
            weather: None,
            draws: None,
            impacts: None,
            offsets: None,
            offset_rd: None,
            done: BTreeSet::new(),
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn out_dir(&self) -> &Path {
        &self.out
    }

    pub fn failed_stage(&self) -> Option<&str> {
        self.failed.as_deref()
    }

    fn stage<T>(&mut self, name: &'static str, f: impl FnOnce(&mut Self) -> Result<T>) -> Result<T> {
        log::info!("stage {name}");
        let t0 = Instant::now();
        let r = f(self);
        self.timings.push(StageTiming { stage: name.to_string(), seconds: t0.elapsed().as_secs_f64() });
        match r {
            Ok(v) => {
                self.stages.push(name.to_string());
                Ok(v)
            }
            // the innermost failing stage names the error
            Err(e) if self.failed.is_some() => Err(e),
            Err(e) => {
                self.failed = Some(name.to_string());
                Err(e.context(format!("stage `{name}` failed")))
            }
        }
    }

    fn record_input(&mut self, path: &Path) -> Result<()> {
        let digest = manifest::sha256_file(path)?;
        self.inputs.insert(path.display().to_string(), digest);
        Ok(())
    }

    fn output(&mut self, name: &str) -> PathBuf {
        self.outputs.insert(name.to_string());
        self.out.join(name)
    }

    fn table(&mut self, name: &str, header: &[&str], rows: Vec<Vec<String>>) -> Result<()> {
        let path = self.output(name);
        io::write_table(&path, header, rows)?;
        Ok(())
    }

    fn write_json(&mut self, name: &str, value: &impl Serialize) -> Result<()> {
        let path = self.output(name);
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| Error::Io { context: format!("writing {}", path.display()), source: e })?;
        Ok(())
    }

    fn ds(&self) -> &Dataset {
        self.dataset.as_ref().expect("dataset loaded")
    }

    fn wd(&self) -> &WeatherDesign {
        self.design.as_ref().expect("weather design built")
    }

    fn weather_options(&self) -> Result<WeatherOptions> {
        Ok(WeatherOptions { df: self.cfg.spline_df, tail_share: self.cfg.tail_share, season: self.cfg.season()? })
    }

    fn grid_inputs(&self) -> (PathBuf, PathBuf) {
        let d = &self.cfg.data_dir;
        (
            self.cfg.grid_daily.clone().unwrap_or_else(|| d.join("grid_daily.csv")),
            self.cfg.weights.clone().unwrap_or_else(|| d.join("weights.csv")),
        )
    }

    fn aggregating(&self) -> bool {
        let (g, w) = self.grid_inputs();
        self.cfg.aggregate_weather.unwrap_or_else(|| g.exists() && w.exists())
    }

    // ---------------------------------------------------------------- inputs

    pub fn ensure_dataset(&mut self) -> Result<()> {
        if self.dataset.is_some() {
            return Ok(());
        }
        let weather = if self.aggregating() { Some(self.aggregate_weather()?) } else { None };
        let ds = self.stage("load", |p| p.load_dataset(weather))?;
        self.dataset = Some(ds);
        Ok(())
    }

    /// Daily grid to national exposure; writes the annual and monthly series.
    pub fn aggregate_weather(&mut self) -> Result<agrotrend_core::exposure::NationalWeather> {
        self.stage("aggregate-weather", |p| {
            let (gpath, wpath) = p.grid_inputs();
            p.record_input(&gpath)?;
            p.record_input(&wpath)?;
            let grid = io::read_grid_daily(&gpath)?;
            let weights = io::read_weights(&wpath)?;
            let nw = aggregate_national(&grid, &weights, &DiurnalAnchors::default())?;
            let ex = p.output("exposure.csv");
            io::write_exposure(&ex, &nw.exposure)?;
            let pr = p.output("precip.csv");
            io::write_annual(&pr, "precip_mm", &nw.precip)?;
            let (me, mp) = (p.output("exposure_monthly.csv"), p.output("precip_monthly.csv"));
            io::write_monthly(&me, &mp, &nw.monthly)?;
            let clamped: f64 = nw.clamped_hours.iter().sum();
            let rows = nw.exposure.years().zip(&nw.clamped_hours).map(|(y, c)| vec![y.to_string(), num(*c)]).collect();
            p.table("clamped_hours.csv", &["year", "hours"], rows)?;
            if clamped > 0.0 {
                log::warn!("{clamped:.2} weighted hours fell outside the raw bin range and were clamped");
            }
            Ok(nw)
        })
    }

    fn load_dataset(&mut self, weather: Option<agrotrend_core::exposure::NationalWeather>) -> Result<Dataset> {
        let paths = DatasetPaths::from_dir(&self.cfg.data_dir)?;
        self.record_input(&paths.tfp)?;
        self.record_input(&paths.rd)?;
        let tfp = io::read_annual(&paths.tfp, "tfp_index", "tfp")?;
        let rd = io::read_annual(&paths.rd, "spend_b2020usd", "rd")?;
        let mut extras = BTreeMap::new();
        for name in self.cfg.extras.clone() {
            let (_, path) = paths
                .extras
                .iter()
                .find(|(n, _)| *n == name)
                .ok_or_else(|| Error::MissingCovariate(format!("{name} (no extra_{name}.csv)")))?;
            let path = path.clone();
            self.record_input(&path)?;
            extras.insert(name.clone(), io::read_annual(&path, "value", &name)?);
        }
        let (exposure, precip, monthly) = match weather {
            Some(nw) => (nw.exposure, nw.precip, Some(nw.monthly)),
            None => {
                self.record_input(&paths.exposure)?;
                self.record_input(&paths.precip)?;
                let monthly = match &paths.monthly {
                    Some((me, mp)) => {
                        self.record_input(me)?;
                        self.record_input(mp)?;
                        Some(io::read_monthly(me, mp)?)
                    }
                    None => None,
                };
                (io::read_exposure(&paths.exposure)?, io::read_annual(&paths.precip, "precip_mm", "precip")?, monthly)
            }
        };
        let ds = Dataset::new(tfp, rd, exposure, precip, extras, monthly, self.cfg.lags)?;
        let (a, b) = ds.window();
        log::info!("estimation window {a}-{b}");
        Ok(ds)
    }

    pub fn ensure_design(&mut self) -> Result<()> {
        if self.design.is_some() {
            return Ok(());
        }
        self.ensure_dataset()?;
        let wd = self.stage("weather-design", |p| Ok(WeatherDesign::build(p.ds(), &p.weather_options()?)?))?;
        self.design = Some(wd);
        Ok(())
    }

    // ---------------------------------------------------------------- stock

    pub fn ensure_stock(&mut self) -> Result<()> {
        if self.stock.is_some() {
            return Ok(());
        }
        self.ensure_dataset()?;
        if self.cfg.stock_weather {
            self.ensure_design()?;
        }
        let st = self.stage("fit-stock", |p| p.fit_stock())?;
        self.stock = Some(st);
        Ok(())
    }

    fn fit_stock(&mut self) -> Result<StockStage> {
        let grid = self.cfg.lambda_grid()?;
        let model = StockModelSpec { trend: self.cfg.stock_trend()?, extras: self.cfg.extras.clone(), without_stock: false };
        let ds = self.ds();
        let wd = if self.cfg.stock_weather { self.design.as_ref() } else { None };
        let gs = stock::grid_search(ds, &grid, &grid, &model, wd)?;
        for f in &gs.failures {
            log::warn!("grid cell λ={} δ={} not fitted: {}", f.lambda, f.delta, f.error);
        }
        let best = gs
            .best()
            .ok_or_else(|| NumericalFailure(format!("none of the {} grid cells could be fitted", gs.failures.len())))?;
        let spec = GammaLagSpec::new(best.lambda, best.delta, self.cfg.lags)?;
        let ks = stock::build_stock(ds.rd(), &spec)?;
        let fit = stock::fit_stock_model(ds, &ks, &model, wd)?;
        log::info!("best cell λ={} δ={}: β₁ = {:.4}", spec.lambda, spec.delta, fit.beta1);

        let rows = gs
            .ranked
            .iter()
            .map(|c| vec![num(c.lambda), num(c.delta), num(c.mse_reduction), num(c.beta1)])
            .collect();
        self.table("stock_grid.csv", &["lambda", "delta", "mse_reduction", "beta1"], rows)?;
        let doc = json!({
            "lambda": spec.lambda,
            "delta": spec.delta,
            "lags": spec.lags,
            "trend": model.trend.to_string(),
            "extras": model.extras,
            "with_weather": self.cfg.stock_weather,
            "mse_reduction": best.mse_reduction,
            "coefficients": fit.names.iter().zip(&fit.coef).map(|(n, v)| json!({"name": n, "value": v})).collect::<Vec<_>>(),
            "beta0": fit.beta0,
            "beta1": fit.beta1,
            "dof": fit.dof,
            "window": [fit.window.0, fit.window.1],
            "grid_failures": gs.failures,
        });
        self.write_json("stock_fit.json", &doc)?;
        self.write_lag_shapes(&gs)?;
        Ok(StockStage { grid: gs, model, stock: ks, fit })
    }

    fn write_lag_shapes(&mut self, gs: &GridSearch) -> Result<()> {
        let mut rows = Vec::new();
        for (rank, c) in gs.top(TOP_CELLS).iter().enumerate() {
            let w = stock::gamma_lag_weights(&GammaLagSpec::new(c.lambda, c.delta, self.cfg.lags)?);
            rows.extend(w.iter().enumerate().map(|(l, v)| vec![l.to_string(), num(*v), (rank + 1).to_string()]));
        }
        self.table("fig1e.csv", &["lag", "weight", "rank"], rows)
    }

    // -------------------------------------------------------------- weather

    pub fn ensure_weather(&mut self) -> Result<()> {
        if self.weather.is_some() {
            return Ok(());
        }
        self.ensure_design()?;
        let fit = self.stage("fit-weather", |p| p.fit_weather())?;
        self.weather = Some(fit);
        Ok(())
    }

    fn fit_weather(&mut self) -> Result<WeatherFit> {
        let trend = self.cfg.weather_trend()?;
        let fit = weather::fit_weather_model(self.ds(), self.wd(), trend)?;
        let doc = json!({
            "trend": trend.to_string(),
            "season": fit.season.to_string(),
            "coefficients": fit.names.iter().zip(&fit.coef).map(|(n, v)| json!({"name": n, "value": v})).collect::<Vec<_>>(),
            "gamma": fit.coefs.gamma,
            "theta1": fit.coefs.theta1,
            "theta2": fit.coefs.theta2,
            "dof": fit.dof,
            "window": [fit.window.0, fit.window.1],
            "coded_edges": fit.coding.coded_edges(),
            "knots": fit.basis.knots(),
            "bin_c": fit.bin_centers(),
            "response_curve": fit.response_curve,
        });
        self.write_json("weather_fit.json", &doc)?;
        let rows = fit
            .bin_centers()
            .iter()
            .zip(&fit.response_curve)
            .map(|(c, e)| vec![num(*c), num(*e)])
            .collect();
        self.table("response_curve.csv", &["bin_c", "effect_per_hour"], rows)?;
        Ok(fit)
    }

    pub fn ensure_season_search(&mut self) -> Result<()> {
        if self.done.contains("season-search") {
            return Ok(());
        }
        self.ensure_dataset()?;
        self.stage("season-search", |p| {
            let trend = p.cfg.weather_trend()?;
            let cells = weather::season_search(p.ds(), &VariableSet::ALL, trend, &p.weather_options()?)?;
            let rows = cells
                .iter()
                .map(|c| {
                    let m = match &c.mse_reduction {
                        Ok(v) => num(*v),
                        Err(e) => {
                            log::warn!("season {} ({}) not fitted: {e}", c.season, c.set);
                            "NA".into()
                        }
                    };
                    vec![c.season.start_month.to_string(), c.season.months.to_string(), c.set.to_string(), m, c.best.to_string()]
                })
                .collect();
            p.table("season_search.csv", &["start_month", "months", "variables", "mse_reduction", "best"], rows)
        })?;
        self.done.insert("season-search");
        Ok(())
    }

    // ------------------------------------------------------------ bootstrap

    pub fn ensure_draws(&mut self) -> Result<()> {
        if self.draws.is_some() {
            return Ok(());
        }
        let draws = match self.cfg.draws_file.clone() {
            Some(path) => {
                self.ensure_design()?;
                self.stage("bootstrap", |p| {
                    p.record_input(&path)?;
                    let d = DrawSet::read(&path)?;
                    d.beta1()?;
                    d.weather_coefs(p.wd().df())?;
                    log::info!("{} draws read from {}", d.len(), path.display());
                    p.write_response_draws(&d)?;
                    Ok(d)
                })?
            }
            None => {
                self.ensure_stock()?;
                self.ensure_weather()?;
                self.stage("bootstrap", |p| p.bootstrap())?
            }
        };
        self.draws = Some(draws);
        Ok(())
    }

    fn bootstrap(&mut self) -> Result<DrawSet> {
        let st = self.stock.as_ref().expect("stock fitted");
        let wd = self.wd();
        let ds = self.ds();
        let sd = stock::stock_regression_design(ds, &st.stock, &st.model, self.cfg.stock_weather.then_some(wd))?;
        let wdes = weather::weather_regression_design(ds, wd, self.cfg.weather_trend()?)?;
        let opts =
            BootstrapOptions { block: self.cfg.block, draws: self.cfg.draws, seed: self.cfg.seed, circular: self.cfg.circular };
        let paired = bootstrap_paired(&sd, &wdes, &opts)?;
        let redraws = paired.total_redraws();
        if redraws > 0 {
            log::warn!("{redraws} singular resamples were redrawn");
        }
        let d = DrawSet::from_paired(&paired);
        let path = self.output("draws.csv");
        d.write(&path)?;

        let st = self.stock.as_ref().expect("stock fitted");
        let wf = self.weather.as_ref().expect("weather fitted");
        let mut rows = Vec::new();
        for (model, names, point) in
            [(Model::Stock, &d.stock_names, &st.fit.coef), (Model::Weather, &d.weather_names, &wf.coef)]
        {
            for (n, est) in names.iter().zip(point.iter()) {
                let v = d.column(model, n)?;
                let s = Summary::of(&v);
                let [mu, lo, hi] = summary_cells(&s);
                rows.push(vec![model.to_string(), n.clone(), num(*est), num(stats::std_dev(&v)), mu, lo, hi]);
            }
        }
        self.table("bootstrap_summary.csv", &["model", "coef_name", "estimate", "se", "mu", "p2_5", "p97_5"], rows)?;
        self.write_response_draws(&d)?;
        Ok(d)
    }

    fn write_response_draws(&mut self, d: &DrawSet) -> Result<()> {
        let wd = self.wd();
        let coefs = d.weather_coefs(wd.df())?;
        let centers = wd.basis.centers().to_vec();
        let mut rows = Vec::new();
        for (id, c) in d.draw_ids.iter().zip(&coefs) {
            let curve = wd.basis.curve(&c.gamma);
            rows.extend(centers.iter().zip(curve).map(|(x, y)| vec![id.to_string(), num(*x), num(y)]));
        }
        self.table("fig2a.csv", &["draw_id", "bin_c", "effect_per_hour"], rows)
    }

    // ---------------------------------------------------------- sensitivity

    pub fn ensure_sensitivity(&mut self) -> Result<()> {
        if self.done.contains("sensitivity") {
            return Ok(());
        }
        self.ensure_weather()?;
        self.ensure_draws()?;
        self.stage("sensitivity", |p| {
            let scale = p.cfg.report_scale()?;
            // the other convention rides along in extra columns
            let (alt, alt_name) = match scale {
                ReportScale::Percent => (ReportScale::LogPoints, "log_points"),
                ReportScale::LogPoints => (ReportScale::Percent, "percent"),
            };
            let header: Vec<String> = ["delta", "mu", "p2_5", "p97_5"]
                .into_iter()
                .map(String::from)
                .chain(["mu", "p2_5", "p97_5"].map(|c| format!("{alt_name}_{c}")))
                .collect();
            let header: Vec<&str> = header.iter().map(String::as_str).collect();
            let wd = p.wd();
            let fit = p.weather.as_ref().expect("weather fitted");
            let clim = Climatology::over(wd.raw(), wd.precip(), fit.window.0, fit.window.1)?;
            let coefs = p.draws.as_ref().expect("draws").weather_coefs(wd.df())?;
            let table = |changes: Vec<(String, UniformChange)>| -> Result<Vec<Vec<String>>> {
                changes
                    .into_iter()
                    .map(|(label, ch)| {
                        let d = coefs
                            .iter()
                            .map(|c| Ok(weather::uniform_sensitivity(c, &wd.coding, &wd.basis, &clim, ch)?.log_points))
                            .collect::<Result<Vec<f64>>>()?;
                        let mut row = vec![label];
                        for s in [scale, alt] {
                            let v: Vec<f64> = d.iter().map(|x| s.apply(*x)).collect();
                            row.extend(summary_cells(&Summary::of(&v)));
                        }
                        Ok(row)
                    })
                    .collect()
            };
            let t = table(p.cfg.temperature_shifts()?.into_iter().map(|d| (d.to_string(), UniformChange::Temperature(d))).collect())?;
            let pr = table(p.cfg.precip_changes()?.into_iter().map(|d| (num(d), UniformChange::Precip(d))).collect())?;
            p.table("sensitivity_T.csv", &header, t)?;
            p.table("sensitivity_P.csv", &header, pr)
        })?;
        self.done.insert("sensitivity");
        Ok(())
    }

    // ----------------------------------------------------------- projection

    pub fn ensure_impacts(&mut self) -> Result<()> {
        if self.impacts.is_some() {
            return Ok(());
        }
        self.ensure_draws()?;
        let dists = self.stage("project", |p| p.project())?;
        self.impacts = Some(dists);
        self.ensure_observed()
    }

    fn project(&mut self) -> Result<Vec<ImpactDistribution>> {
        let dir = self.cfg.scenarios_dir.clone().unwrap_or_else(|| self.cfg.data_dir.clone());
        let files = io::scan_scenarios(&dir)?;
        let wanted: Vec<Ssp> = match self.cfg.ssps()? {
            Some(v) => v,
            None => {
                let mut v: Vec<Ssp> = files.iter().map(|f| f.ssp).collect();
                v.dedup();
                v
            }
        };
        if wanted.is_empty() {
            return Err(Error::EmptyScenario).with_context(|| format!("no scenario files in {}", dir.display()));
        }
        let ref_window = self.cfg.ref_window()?;
        let scale = self.cfg.report_scale()?;
        let opts = EnsembleOptions {
            pairings: self.cfg.pairings,
            seed: self.cfg.seed.wrapping_add(ENSEMBLE_SEED_OFFSET),
            ref_window,
            years: (ref_window.0, self.cfg.horizon),
        };
        let mut dists = Vec::new();
        for ssp in wanted {
            let mut members = Vec::new();
            for f in files.iter().filter(|f| f.ssp == ssp) {
                self.record_input(&f.exposure)?;
                self.record_input(&f.precip)?;
                members.push(ScenarioMember {
                    gcm: f.gcm.clone(),
                    exposure: io::read_exposure(&f.exposure)?,
                    precip: io::read_annual(&f.precip, "precip_mm", "precip")?,
                });
            }
            let set = ScenarioSet::new(ssp, members, ref_window, self.cfg.horizon)
                .with_context(|| format!("scenario {ssp}"))?;
            let wd = self.wd();
            let coefs = self.draws.as_ref().expect("draws").weather_coefs(wd.df())?;
            let model = ImpactModel { coding: &wd.coding, basis: &wd.basis };
            let dist = project::ensemble_impacts(&coefs, &set, model, &opts)?;
            self.write_impacts(&dist, scale)?;
            dists.push(dist);
        }
        Ok(dists)
    }

    fn write_impacts(&mut self, dist: &ImpactDistribution, scale: ReportScale) -> Result<()> {
        let tag = file_tag(dist);
        let header = ["year", "mu", "p2_5", "p97_5"];
        let rows = |s: Vec<(i32, Summary)>| -> Vec<Vec<String>> {
            s.iter()
                .map(|(y, s)| {
                    let mut r = vec![y.to_string()];
                    r.extend(summary_cells(s));
                    r
                })
                .collect()
        };
        self.table(&format!("impacts_{tag}.csv"), &header, rows(dist.summary(scale)))?;
        let smooth = dist.smoothed(self.cfg.smooth_df)?;
        self.table(&format!("impacts_smoothed_{tag}.csv"), &header, rows(project::summarise(&smooth, dist.start_year, scale)))?;
        let mut by = Vec::new();
        for (gcm, s) in dist.summary_by_gcm(scale) {
            for r in rows(s) {
                let mut row = vec![gcm.clone()];
                row.extend(r);
                by.push(row);
            }
        }
        self.table(&format!("impacts_by_gcm_{tag}.csv"), &["gcm", "year", "mu", "p2_5", "p97_5"], by)
    }

    /// Impact of the observed weather record relative to its own reference
    /// window.
    pub fn ensure_observed(&mut self) -> Result<()> {
        if self.done.contains("observed") {
            return Ok(());
        }
        self.ensure_draws()?;
        self.stage("observed-impacts", |p| {
            let scale = p.cfg.report_scale()?;
            let wd = p.wd();
            let coefs = p.draws.as_ref().expect("draws").weather_coefs(wd.df())?;
            let model = ImpactModel { coding: &wd.coding, basis: &wd.basis };
            let dist = match project::historical_trend_impact(&coefs, wd.raw(), wd.precip(), model, p.cfg.ref_window()?) {
                Ok(d) => d,
                Err(e @ (Error::InsufficientHistory(_) | Error::InvalidArgument(_) | Error::Alignment(_))) => {
                    log::warn!("observed-weather impacts skipped: {e}");
                    return Ok(());
                }
                Err(e) => return Err(e.into()),
            };
            let raw = dist.summary(scale);
            let smooth = project::summarise(&dist.smoothed(p.cfg.smooth_df)?, dist.start_year, scale);
            let rows = raw
                .iter()
                .zip(&smooth)
                .map(|((y, a), (_, b))| {
                    let mut r = vec![y.to_string()];
                    r.extend(summary_cells(a));
                    r.extend(summary_cells(b));
                    r
                })
                .collect();
            p.table("figs16.csv", &["year", "mu", "p2_5", "p97_5", "smooth_mu", "smooth_p2_5", "smooth_p97_5"], rows)
        })?;
        self.done.insert("observed");
        Ok(())
    }

    // -------------------------------------------------------------- offsets

    fn ensure_offset_rd(&mut self) -> Result<()> {
        if self.offset_rd.is_some() {
            return Ok(());
        }
        self.ensure_dataset()?;
        let (file, year) = self.cfg.base()?;
        let rd = match file {
            Some(f) => {
                let path = if f.is_relative() { self.cfg.data_dir.join(f) } else { f };
                self.record_input(&path)?;
                io::read_annual(&path, "spend_b2020usd", "rd")?
            }
            None => self.ds().rd().clone(),
        };
        self.offset_rd = Some((rd, year));
        Ok(())
    }

    pub fn ensure_offsets(&mut self) -> Result<()> {
        if self.offsets.is_some() {
            return Ok(());
        }
        self.ensure_impacts()?;
        self.ensure_stock()?;
        self.ensure_offset_rd()?;
        let stages = self.stage("solve-offset", |p| p.solve_offsets())?;
        self.offsets = Some(stages);
        self.ensure_mapping()
    }

    fn solve_offsets(&mut self) -> Result<Vec<OffsetStage>> {
        let beta1 = self.draws.as_ref().expect("draws").beta1()?;
        let spec = self.stock.as_ref().expect("stock fitted").stock.spec;
        let (rd, base_year) = self.offset_rd.clone().expect("offset R&D loaded");
        let gp = GrowthProblem::new(&rd, &spec, base_year)?;
        let scf = offset::counterfactual_stock(&rd, &spec, base_year, self.cfg.horizon)?;
        let dists = self.impacts.take().expect("impacts projected");
        let mut out = Vec::new();
        let result = (|| -> Result<()> {
            for dist in &dists {
                let off = offset::offset_stock(dist, &beta1, Some(self.cfg.smooth_df))?;
                self.write_offsets(dist, &off, &scf, &gp, base_year)?;
                out.push(OffsetStage { ssp: dist.ssp, offset: off, counterfactual: scf.clone() });
            }
            Ok(())
        })();
        self.impacts = Some(dists);
        result.map(|_| out)
    }

    fn write_offsets(
        &mut self,
        dist: &ImpactDistribution,
        off: &OffsetSeries,
        scf: &AnnualSeries,
        gp: &GrowthProblem,
        base_year: i32,
    ) -> Result<()> {
        let tag = file_tag(dist);
        if off.excluded > 0 {
            log::warn!("{tag}: {} of {} pairings excluded for β₁ ≤ 0", off.excluded, dist.pairings.len());
        }
        let rel = off.relative_summary();
        let mut rows = Vec::new();
        for (y, s) in &rel {
            let mut r = vec![y.to_string()];
            r.extend(summary_cells(s));
            match scf.get(*y) {
                Some(_) => r.extend(summary_cells(&offset::monetized_at(off, scf, *y)?)),
                None => r.extend(["NA".to_string(), "NA".into(), "NA".into()]),
            }
            rows.push(r);
        }
        self.table(
            &format!("offset_stock_{tag}.csv"),
            &["year", "rel_mu", "rel_p2_5", "rel_p97_5", "usd_bn_mu", "usd_bn_p2_5", "usd_bn_p97_5"],
            rows,
        )?;

        let mut growth = Vec::new();
        let mut cumulative = Vec::new();
        for &t in &self.cfg.targets {
            let gap = offset::monetized_at(off, scf, t)?;
            let mut g_row = vec![t.to_string()];
            let mut c_row = vec![t.to_string()];
            let mut flags = Vec::new();
            for (label, target) in [("mu", gap.mu), ("p2_5", gap.p2_5), ("p97_5", gap.p97_5)] {
                match gp.solve(target, t, GROWTH_BRACKET) {
                    Ok(sol) => {
                        if sol.floored {
                            flags.push(format!("{label}:floored"));
                        }
                        g_row.push(num(sol.growth));
                        c_row.push(num(offset::cumulative_spending_since(base_year, sol.growth, t, gp.base_spend())));
                    }
                    Err(e @ Error::Unreachable { .. }) => {
                        log::warn!("{tag} {t} {label}: {e}");
                        flags.push(format!("{label}:unreachable"));
                        g_row.push("NA".into());
                        c_row.push("NA".into());
                    }
                    Err(e) => return Err(e.into()),
                }
            }
            g_row.push(flags.join(";"));
            growth.push(g_row);
            cumulative.push(c_row);
        }
        self.table(&format!("growth_{tag}.csv"), &["target_year", "mu", "p2_5", "p97_5", "flags"], growth)?;
        self.table(&format!("cumulative_{tag}.csv"), &["target_year", "mu", "p2_5", "p97_5"], cumulative)
    }

    /// Stock gain against growth rate for every target year.
    pub fn ensure_mapping(&mut self) -> Result<()> {
        if self.done.contains("mapping") {
            return Ok(());
        }
        self.ensure_stock()?;
        self.ensure_offset_rd()?;
        self.stage("offset-mapping", |p| {
            let spec = p.stock.as_ref().expect("stock fitted").stock.spec;
            let (rd, base_year) = p.offset_rd.as_ref().expect("offset R&D loaded");
            let gp = GrowthProblem::new(rd, &spec, *base_year)?;
            let (g0, g1, step) = MAPPING_GROWTH;
            let n = ((g1 - g0) / step).round() as usize;
            let mut rows = Vec::new();
            for &t in &p.cfg.targets {
                for i in 0..=n {
                    let g = g0 + i as f64 * step;
                    rows.push(vec![t.to_string(), num(g), num(gp.gain(g, t))]);
                }
            }
            p.table("figs18.csv", &["target_year", "growth_pct", "stock_gain"], rows)
        })?;
        self.done.insert("mapping");
        Ok(())
    }

    // ----------------------------------------------------------- simulation

    pub fn ensure_simulation(&mut self) -> Result<()> {
        if self.done.contains("simulate-tfp") {
            return Ok(());
        }
        self.ensure_impacts()?;
        self.ensure_stock()?;
        self.ensure_offset_rd()?;
        self.stage("simulate-tfp", |p| p.simulate())?;
        self.done.insert("simulate-tfp");
        Ok(())
    }

    fn simulate(&mut self) -> Result<()> {
        let st = self.stock.as_ref().expect("stock fitted");
        let (spec, beta0, beta1) = (st.stock.spec, st.fit.beta0, st.fit.beta1);
        if !(beta1 > 0.0) {
            return Err(Error::Validation(format!("stock elasticity {beta1} is not positive")).into());
        }
        let (rd, base_year) = self.offset_rd.clone().expect("offset R&D loaded");
        let tfp = self.ds().tfp();
        let anchor = (tfp.end_year(), *tfp.values().last().expect("non-empty TFP"));
        let years = (anchor.0, self.cfg.horizon);
        let dists = self.impacts.take().expect("impacts projected");
        let result = (|| -> Result<()> {
            for dist in &dists {
                let n = dist.d.len() as f64;
                let mean: Vec<f64> = (0..dist.d[0].len()).map(|i| dist.d.iter().map(|r| r[i]).sum::<f64>() / n).collect();
                let d = AnnualSeries::new("impact", dist.start_year, mean)?;
                let shift = d.map(|x| -x / beta1)?;
                for &g in &self.cfg.growth.clone() {
                    let path = offset::growth_path(&rd, base_year, g, self.cfg.horizon)?;
                    let sim = |impacts: Option<&AnnualSeries>, stock_shift: Option<&AnnualSeries>| {
                        offset::simulate_tfp(&TfpSimulation {
                            rd: &path,
                            spec: &spec,
                            beta0,
                            beta1,
                            impacts,
                            stock_shift,
                            anchor: Some(anchor),
                            years,
                        })
                    };
                    let hit = sim(Some(&d), None)?;
                    let clean = sim(None, None)?;
                    let offset = sim(Some(&d), Some(&shift))?;
                    let rows = hit
                        .iter()
                        .zip(clean.values())
                        .zip(offset.values())
                        .map(|(((y, a), b), c)| vec![y.to_string(), num(a), num(*b), num(*c)])
                        .collect();
                    let name = format!("tfp_sim_{}_{}.csv", file_tag(dist), g);
                    self.table(&name, &["year", "tfp", "tfp_no_climate", "tfp_offset"], rows)?;
                }
            }
            Ok(())
        })();
        self.impacts = Some(dists);
        result
    }

    // ------------------------------------------------------------- whole run

    /// Every enabled stage in order.
    pub fn run(&mut self) -> Result<()> {
        self.ensure_dataset()?;
        self.ensure_stock()?;
        self.ensure_weather()?;
        if self.cfg.season_search {
            if self.ds().monthly().is_some() {
                self.ensure_season_search()?;
            } else {
                log::warn!("season search skipped: no monthly exposure");
            }
        }
        self.ensure_draws()?;
        if self.cfg.sensitivity {
            self.ensure_sensitivity()?;
        }
        if self.cfg.project {
            self.ensure_impacts()?;
            if self.cfg.solve_offset {
                self.ensure_offsets()?;
            }
            if self.cfg.simulate {
                self.ensure_simulation()?;
            }
        }
        Ok(())
    }

    pub fn figure(&mut self, fig: Figure) -> Result<()> {
        match fig {
            Figure::LagShapes => self.ensure_stock(),
            Figure::ResponseDraws => self.ensure_draws(),
            Figure::Seasons => self.ensure_season_search(),
            Figure::Observed => self.ensure_observed(),
            Figure::Mapping => self.ensure_mapping(),
        }
    }

    pub fn stock_stage(&self) -> Option<&StockStage> {
        self.stock.as_ref()
    }

    pub fn weather_fit(&self) -> Option<&WeatherFit> {
        self.weather.as_ref()
    }

    pub fn draw_set(&self) -> Option<&DrawSet> {
        self.draws.as_ref()
    }

    pub fn impact_distributions(&self) -> Option<&[ImpactDistribution]> {
        self.impacts.as_deref()
    }

    pub fn offset_stages(&self) -> Option<&[OffsetStage]> {
        self.offsets.as_deref()
    }

    /// Writes the manifest and the timings file. Called after success and
    /// after failure alike.
    pub fn finish(&mut self) -> Result<Manifest> {
        let mut outputs = BTreeMap::new();
        for name in &self.outputs {
            outputs.insert(name.clone(), manifest::sha256_file(&self.out.join(name))?);
        }
        let mut hashed = self.cfg.clone();
        hashed.out_dir = PathBuf::new();
        hashed.workers = 0;
        let m = Manifest {
            tool: "agrotrend".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config_hash: self.cfg.hash(),
            config: hashed,
            stages: self.stages.clone(),
            failed_stage: self.failed.clone(),
            inputs: self.inputs.clone(),
            outputs,
            timings_file: TIMINGS.into(),
        };
        let mut text = serde_json::to_string_pretty(&m)?;
        text.push('\n');
        let path = self.out.join(MANIFEST);
        std::fs::write(&path, text).map_err(|e| Error::Io { context: format!("writing {}", path.display()), source: e })?;
        let mut t = serde_json::to_string_pretty(&self.timings)?;
        t.push('\n');
        let path = self.out.join(TIMINGS);
        std::fs::write(&path, t).map_err(|e| Error::Io { context: format!("writing {}", path.display()), source: e })?;
        Ok(m)
    }
}

/// Runs every stage and always writes the manifest.
pub fn run_pipeline(cfg: RunConfig) -> Result<Manifest> {
    let mut p = Pipeline::new(cfg)?;
    let r = p.run();
    let m = p.finish();
    r?;
    m
}
