//! Knowledge stock from gamma-shaped research lags, and the regression of
//! log TFP on the log stock.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
pub use crate::design::Trend;
use crate::design::DesignBuilder;
use crate::error::{Error, Result};
use crate::ols::{self, Design, OlsFit, RankPolicy};
use crate::series::AnnualSeries;
use crate::weather::{check_sample, WeatherDesign};

/// Gamma lag kernel parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaLagSpec {
    pub lambda: f64,
    pub delta: f64,
    /// Lag length `L` in years.
    pub lags: usize,
}

impl GammaLagSpec {
    pub fn new(lambda: f64, delta: f64, lags: usize) -> Result<Self> {
        let open = |v: f64| v > 0.0 && v < 1.0;
        if !open(lambda) || !open(delta) {
            return Err(Error::InvalidArgument(format!(
                "lambda {lambda} and delta {delta} must lie in (0, 1)"
            )));
        }
        if lags == 0 {
            return Err(Error::InvalidArgument("lag length must be at least 1".into()));
        }
        Ok(Self { lambda, delta, lags })
    }
}

/// Research-lag weights `γ_l ∝ (l+1)^(δ/(1-δ)) λ^l`, `l = 0..L-1`, summing to one.
pub fn gamma_lag_weights(spec: &GammaLagSpec) -> Vec<f64> {
    let shape = spec.delta / (1.0 - spec.delta);
    let ln_lambda = spec.lambda.ln();
    let logs: Vec<f64> = (0..spec.lags).map(|l| shape * ((l + 1) as f64).ln() + l as f64 * ln_lambda).collect();
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let raw: Vec<f64> = logs.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeStock {
    pub spec: GammaLagSpec,
    pub weights: Vec<f64>,
    pub series: AnnualSeries,
}

/// `S_t = Σ_l γ_l RD_{t-l}` for every year with a full lag history.
pub fn build_stock(rd: &AnnualSeries, spec: &GammaLagSpec) -> Result<KnowledgeStock> {
    let weights = gamma_lag_weights(spec);
    let series = convolve(rd, &weights)?;
    Ok(KnowledgeStock { spec: *spec, weights, series })
}

/// Weighted lag sum with arbitrary weights; the output starts `len - 1`
/// years after the input.
pub fn convolve(rd: &AnnualSeries, weights: &[f64]) -> Result<AnnualSeries> {
    let l = weights.len();
    if rd.len() < l {
        return Err(Error::InsufficientHistory(format!(
            "{} years of R&D, {l} needed for one stock value",
            rd.len()
        )));
    }
    let v = rd.values();
    let out: Vec<f64> = (l - 1..v.len())
        .map(|i| weights.iter().enumerate().map(|(lag, w)| w * v[i - lag]).sum())
        .collect();
    AnnualSeries::new("stock", rd.start_year() + l as i32 - 1, out)
}

/// Which regressors enter the stock model.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StockModelSpec {
    pub trend: Trend,
    pub extras: Vec<String>,
    /// Include the stock term; `false` gives the comparison model of the
    /// grid search.
    pub without_stock: bool,
}

/// Design of the stock regression: `[1, log S, trend, extras, weather]`.
pub fn stock_regression_design(
    ds: &Dataset,
    stock: &KnowledgeStock,
    spec: &StockModelSpec,
    weather: Option<&WeatherDesign>,
) -> Result<Design> {
    let mut b = DesignBuilder::new(ds, spec.trend)?;
    if !spec.without_stock {
        let s = &stock.series;
        b.push("log_S", |t| {
            s.get(t)
                .map(f64::ln)
                .ok_or_else(|| Error::InsufficientHistory(format!("knowledge stock missing year {t}")))
        })?;
    }
    for name in &spec.extras {
        b.extra(name)?;
    }
    if let Some(w) = weather {
        w.add_columns(&mut b)?;
    }
    b.build()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StockFit {
    pub spec: GammaLagSpec,
    pub trend: Trend,
    pub names: Vec<String>,
    pub coef: Vec<f64>,
    pub beta0: f64,
    pub beta1: f64,
    pub extra_coefs: BTreeMap<String, f64>,
    pub residuals: AnnualSeries,
    pub dof: usize,
    pub window: (i32, i32),
}

impl StockFit {
    pub fn from_ols(design: &Design, fit: &OlsFit, spec: &GammaLagSpec, model: &StockModelSpec) -> Result<Self> {
        let beta1 = design.column("log_S").map(|j| fit.coef[j]).unwrap_or(0.0);
        let extra_coefs = model
            .extras
            .iter()
            .filter_map(|n| design.column(n).map(|j| (n.clone(), fit.coef[j])))
            .collect();
        Ok(Self {
            spec: *spec,
            trend: model.trend,
            names: design.names.clone(),
            coef: fit.coef.clone(),
            beta0: fit.coef[0],
            beta1,
            extra_coefs,
            residuals: AnnualSeries::new("residual", design.years[0], fit.residuals.clone())?,
            dof: design.nrows() - design.ncols(),
            window: (design.years[0], *design.years.last().unwrap()),
        })
    }
}

pub fn fit_stock_model(
    ds: &Dataset,
    stock: &KnowledgeStock,
    model: &StockModelSpec,
    weather: Option<&WeatherDesign>,
) -> Result<StockFit> {
    let design = stock_regression_design(ds, stock, model, weather)?;
    check_sample(&design)?;
    let fit = ols::fit(&design, RankPolicy::Error)?;
    StockFit::from_ols(&design, &fit, &stock.spec, model)
}

/// Parameter values `start, start+step, ..., ≤ end`, rounded to 1e-10.
pub fn parameter_grid(start: f64, end: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || start > end {
        return Err(Error::InvalidArgument(format!("grid {start}:{end}:{step}")));
    }
    let n = ((end - start) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| ((start + i as f64 * step) * 1e10).round() / 1e10).collect())
}

/// One grid-search cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridCell {
    pub lambda: f64,
    pub delta: f64,
    /// Percent reduction of leave-one-year-out MSE against the same model
    /// without the stock term.
    pub mse_reduction: f64,
    pub beta1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridFailure {
    pub lambda: f64,
    pub delta: f64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridSearch {
    /// Ranked by MSE reduction (descending), then λ, then δ.
    pub ranked: Vec<GridCell>,
    pub failures: Vec<GridFailure>,
}

impl GridSearch {
    pub fn best(&self) -> Option<&GridCell> {
        self.ranked.first()
    }

    pub fn top(&self, n: usize) -> &[GridCell] {
        &self.ranked[..n.min(self.ranked.len())]
    }
}

/// Evaluates every (λ, δ) pair by leave-one-year-out cross-validation.
///
/// Each cell builds its stock, then compares the out-of-sample MSE of the
/// model with `log S` against the same model without it. Cells that cannot
/// be fitted are recorded, not fatal.
pub fn grid_search(
    ds: &Dataset,
    lambdas: &[f64],
    deltas: &[f64],
    model: &StockModelSpec,
    weather: Option<&WeatherDesign>,
) -> Result<GridSearch> {
    if lambdas.is_empty() || deltas.is_empty() {
        return Err(Error::InvalidArgument("empty lag-parameter grid".into()));
    }
    let any = GammaLagSpec::new(lambdas[0], deltas[0], ds.lags())?;
    let base_model = StockModelSpec { without_stock: true, ..model.clone() };
    let base_stock = build_stock(ds.rd(), &any)?;
    let base = stock_regression_design(ds, &base_stock, &base_model, weather)?;
    let base_mse = ols::loo_mse(&base)?;

    let pairs: Vec<(f64, f64)> = lambdas.iter().flat_map(|&l| deltas.iter().map(move |&d| (l, d))).collect();
    let results: Vec<std::result::Result<GridCell, GridFailure>> = pairs
        .par_iter()
        .map(|&(lambda, delta)| {
            let cell = (|| -> Result<GridCell> {
                let spec = GammaLagSpec::new(lambda, delta, ds.lags())?;
                let stock = build_stock(ds.rd(), &spec)?;
                let design = stock_regression_design(ds, &stock, model, weather)?;
                check_sample(&design)?;
                let fit = ols::fit(&design, RankPolicy::Error)?;
                let mse = ols::loo_mse(&design)?;
                let beta1 = design.column("log_S").map(|j| fit.coef[j]).unwrap_or(f64::NAN);
                Ok(GridCell { lambda, delta, mse_reduction: 100.0 * (1.0 - mse / base_mse), beta1 })
            })();
            cell.map_err(|e| GridFailure { lambda, delta, error: e.to_string() })
        })
        .collect();
    let mut ranked = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(c) => ranked.push(c),
            Err(f) => failures.push(f),
        }
    }
    ranked.sort_by(|a, b| {
        b.mse_reduction
            .total_cmp(&a.mse_reduction)
            .then(a.lambda.total_cmp(&b.lambda))
            .then(a.delta.total_cmp(&b.delta))
    });
    Ok(GridSearch { ranked, failures })
}
