//! Knowledge-stock changes that offset climate impacts, their dollar value,
//! fixed-growth spending paths that deliver them, and TFP simulation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::project::ImpactDistribution;
use crate::series::AnnualSeries;
use crate::spline;
use crate::stats::Summary;
use crate::stock::{self, GammaLagSpec};

/// Last year of observed spending; growth paths start the year after.
pub const BASE_YEAR: i32 = 2020;
pub const SMOOTH_DF: usize = 3;
pub const GROWTH_BRACKET: (f64, f64) = (0.0, 50.0);
const SOLVE_RTOL: f64 = 1e-9;

/// Per-draw `Δlog S*_t = −D_t / β₁`, raw and smoothed.
#[derive(Debug, Clone, PartialEq)]
pub struct OffsetSeries {
    pub label: String,
    pub start_year: i32,
    /// Bootstrap draw behind each retained pairing.
    pub draw_ids: Vec<usize>,
    pub raw: Vec<Vec<f64>>,
    pub smoothed: Vec<Vec<f64>>,
    /// Pairings dropped because their `β₁ ≤ 0`.
    pub excluded: usize,
}

impl OffsetSeries {
    pub fn years(&self) -> impl Iterator<Item = i32> + '_ {
        let n = self.raw.first().map_or(0, Vec::len);
        (0..n).map(move |i| self.start_year + i as i32)
    }

    fn index(&self, year: i32) -> Result<usize> {
        let n = self.raw.first().map_or(0, Vec::len) as i32;
        if year < self.start_year || year >= self.start_year + n {
            return Err(Error::InvalidArgument(format!("year {year} outside offset series")));
        }
        Ok((year - self.start_year) as usize)
    }

    /// Smoothed `Δlog S*` of every draw at `year`.
    pub fn at(&self, year: i32) -> Result<Vec<f64>> {
        let i = self.index(year)?;
        Ok(self.smoothed.iter().map(|r| r[i]).collect())
    }

    /// Relative stock change `100 (exp(Δ) − 1)` per year.
    pub fn relative_summary(&self) -> Vec<(i32, Summary)> {
        crate::project::summarise(&self.smoothed, self.start_year, crate::project::ReportScale::Percent)
    }
}

/// Inverts each pairing's impact path with the `β₁` of its own draw.
/// `smooth_df = None` leaves the paths unsmoothed.
pub fn offset_stock(impacts: &ImpactDistribution, beta1: &[f64], smooth_df: Option<usize>) -> Result<OffsetSeries> {
    let mut draw_ids = Vec::new();
    let mut raw = Vec::new();
    let mut excluded = 0;
    for (&(k, _), d) in impacts.pairings.iter().zip(&impacts.d) {
        let b = *beta1
            .get(k)
            .ok_or_else(|| Error::InvalidArgument(format!("no β₁ for draw {k}")))?;
        if !(b > 0.0) {
            excluded += 1;
            continue;
        }
        draw_ids.push(k);
        raw.push(d.iter().map(|x| -x / b).collect::<Vec<f64>>());
    }
    if raw.is_empty() {
        return Err(Error::Validation(format!("all {excluded} pairings have β₁ ≤ 0")));
    }
    if excluded > 0 {
        log::warn!("{}: excluded {excluded} pairings with β₁ ≤ 0", impacts.label);
    }
    let smoothed = match smooth_df {
        Some(df) => {
            let x: Vec<f64> = impacts.years().map(f64::from).collect();
            let basis = spline::smoother_basis(&x, df)?;
            raw.par_iter().map(|r| spline::smooth_with(&basis, r)).collect::<Result<_>>()?
        }
        None => raw.clone(),
    };
    Ok(OffsetSeries { label: impacts.label.clone(), start_year: impacts.start_year, draw_ids, raw, smoothed, excluded })
}

/// Spending held at its `base_year` level afterwards, through `horizon`.
pub fn constant_path(rd: &AnnualSeries, base_year: i32, horizon: i32) -> Result<AnnualSeries> {
    growth_path(rd, base_year, 0.0, horizon)
}

/// History through `base_year`, then `RD_t = RD_base (1 + g/100)^(t − base_year)`.
pub fn growth_path(rd: &AnnualSeries, base_year: i32, g: f64, horizon: i32) -> Result<AnnualSeries> {
    let base = rd
        .get(base_year)
        .ok_or_else(|| Error::InsufficientHistory(format!("R&D has no {base_year} value")))?;
    if !(g > -100.0) || !g.is_finite() {
        return Err(Error::InvalidArgument(format!("growth {g}%")));
    }
    let mut v = rd.window(rd.start_year(), base_year)?.values().to_vec();
    let r = 1.0 + g / 100.0;
    v.extend((base_year + 1..=horizon).map(|t| base * r.powi(t - base_year)));
    AnnualSeries::new(rd.label.clone(), rd.start_year(), v)
}

/// `S^cf`: the stock under constant post-`base_year` spending.
pub fn counterfactual_stock(rd: &AnnualSeries, spec: &GammaLagSpec, base_year: i32, horizon: i32) -> Result<AnnualSeries> {
    Ok(stock::build_stock(&constant_path(rd, base_year, horizon)?, spec)?.series)
}

/// `S^cf (exp(Δ) − 1)`.
pub fn monetize_value(scf: f64, dlog: f64) -> f64 {
    scf * dlog.exp_m1()
}

/// Dollar value of every smoothed draw, `[draw][year]`.
pub fn monetize(offset: &OffsetSeries, scf: &AnnualSeries) -> Result<Vec<Vec<f64>>> {
    let s: Vec<f64> = offset
        .years()
        .map(|t| scf.get(t).ok_or_else(|| Error::Alignment(format!("counterfactual stock missing {t}"))))
        .collect::<Result<_>>()?;
    Ok(offset
        .smoothed
        .iter()
        .map(|r| r.iter().zip(&s).map(|(d, c)| monetize_value(*c, *d)).collect())
        .collect())
}

/// Summary of the dollar stock gap at one year.
pub fn monetized_at(offset: &OffsetSeries, scf: &AnnualSeries, year: i32) -> Result<Summary> {
    let c = scf
        .get(year)
        .ok_or_else(|| Error::Alignment(format!("counterfactual stock missing {year}")))?;
    let v: Vec<f64> = offset.at(year)?.into_iter().map(|d| monetize_value(c, d)).collect();
    Ok(Summary::of(&v))
}

/// `Σ_{t=2021}^{T} base_spend ((1 + g/100)^(t − 2020) − 1)`.
pub fn cumulative_spending(g: f64, target_year: i32, base_spend: f64) -> f64 {
    cumulative_spending_since(BASE_YEAR, g, target_year, base_spend)
}

/// Extra spending above the constant path, summed over `base_year+1 ..= T`.
pub fn cumulative_spending_since(base_year: i32, g: f64, target_year: i32, base_spend: f64) -> f64 {
    let r = 1.0 + g / 100.0;
    (base_year + 1..=target_year).map(|t| base_spend * (r.powi(t - base_year) - 1.0)).sum()
}

/// Stock reached at a target year when spending grows at a fixed rate.
#[derive(Debug, Clone, PartialEq)]
pub struct GrowthProblem {
    weights: Vec<f64>,
    history: AnnualSeries,
    base_year: i32,
    base_spend: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthSolution {
    pub growth: f64,
    pub achieved: f64,
    /// The target was negative and growth was set to the bracket floor.
    pub floored: bool,
}

impl GrowthProblem {
    pub fn new(rd: &AnnualSeries, spec: &GammaLagSpec, base_year: i32) -> Result<Self> {
        let base_spend = rd
            .get(base_year)
            .ok_or_else(|| Error::InsufficientHistory(format!("R&D has no {base_year} value")))?;
        let history = rd.window(rd.start_year(), base_year)?;
        if history.len() < spec.lags {
            return Err(Error::InsufficientHistory(format!(
                "{} R&D years before {base_year}, need {}",
                history.len(),
                spec.lags
            )));
        }
        Ok(Self { weights: stock::gamma_lag_weights(spec), history, base_year, base_spend })
    }

    pub fn base_spend(&self) -> f64 {
        self.base_spend
    }

    pub fn base_year(&self) -> i32 {
        self.base_year
    }

    /// `S_T(g)`.
    pub fn stock_at(&self, g: f64, target_year: i32) -> f64 {
        let r = 1.0 + g / 100.0;
        self.weights
            .iter()
            .enumerate()
            .map(|(l, w)| {
                let t = target_year - l as i32;
                let rd = if t > self.base_year {
                    self.base_spend * r.powi(t - self.base_year)
                } else {
                    self.history.get(t).expect("history length checked")
                };
                w * rd
            })
            .sum()
    }

    /// `S_T(g) − S^cf_T`.
    pub fn gain(&self, g: f64, target_year: i32) -> f64 {
        self.stock_at(g, target_year) - self.stock_at(0.0, target_year)
    }

    /// Bisection for the fixed growth rate whose stock gain at `target_year`
    /// equals `target`.
    pub fn solve(&self, target: f64, target_year: i32, bracket: (f64, f64)) -> Result<GrowthSolution> {
        if target_year <= self.base_year + 1 {
            return Err(Error::InvalidArgument(format!("target year {target_year} must follow {}", self.base_year + 1)));
        }
        let (mut lo, mut hi) = bracket;
        if !(lo < hi) || lo <= -100.0 || !target.is_finite() {
            return Err(Error::InvalidArgument(format!("bracket {bracket:?}, target {target}")));
        }
        let f = |g: f64| self.gain(g, target_year) - target;
        if target == 0.0 && lo <= 0.0 && hi >= 0.0 {
            return Ok(GrowthSolution { growth: 0.0, achieved: 0.0, floored: false });
        }
        if f(lo) >= 0.0 {
            return Ok(GrowthSolution { growth: lo, achieved: self.gain(lo, target_year), floored: target < 0.0 || f(lo) > 0.0 });
        }
        let top = self.gain(hi, target_year);
        if top < target {
            return Err(Error::Unreachable { target, achieved_max: top });
        }
        let tol = SOLVE_RTOL * target.abs().max(f64::MIN_POSITIVE);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let v = f(mid);
            if v.abs() <= tol || hi - lo < 1e-13 {
                lo = mid;
                hi = mid;
                break;
            }
            if v < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let g = 0.5 * (lo + hi);
        Ok(GrowthSolution { growth: g, achieved: self.gain(g, target_year), floored: false })
    }
}

/// Inputs to a TFP trajectory. Trend and extra-covariate terms of the stock
/// model are not extrapolated.
#[derive(Debug, Clone, Copy)]
pub struct TfpSimulation<'a> {
    /// Spending through the horizon.
    pub rd: &'a AnnualSeries,
    pub spec: &'a GammaLagSpec,
    pub beta0: f64,
    pub beta1: f64,
    /// Climate term `D_t`, log points.
    pub impacts: Option<&'a AnnualSeries>,
    /// `Δlog S*_t`; the stock is multiplied by `exp` of it.
    pub stock_shift: Option<&'a AnnualSeries>,
    /// `(year, TFP)`: the intercept is chosen so the path passes through it.
    pub anchor: Option<(i32, f64)>,
    pub years: (i32, i32),
}

/// `log A_t = c + β₁ (log S_t + Δ_t) + D_t`.
pub fn simulate_tfp(sim: &TfpSimulation<'_>) -> Result<AnnualSeries> {
    let (from, to) = sim.years;
    if from > to {
        return Err(Error::InvalidArgument(format!("years {from}..={to}")));
    }
    let s = stock::build_stock(sim.rd, sim.spec)?.series;
    let at = |series: Option<&AnnualSeries>, t: i32, what: &str| -> Result<f64> {
        match series {
            None => Ok(0.0),
            Some(x) => x.get(t).ok_or_else(|| Error::InsufficientHistory(format!("{what} does not cover {t}"))),
        }
    };
    let core = |t: i32| -> Result<f64> {
        let st = s.get(t).ok_or_else(|| Error::InsufficientHistory(format!("stock does not cover {t}")))?;
        Ok(sim.beta1 * (st.ln() + at(sim.stock_shift, t, "stock shift")?) + at(sim.impacts, t, "scenario")?)
    };
    let c = match sim.anchor {
        Some((y, a)) => {
            if !(a > 0.0) {
                return Err(Error::InvalidArgument(format!("anchor TFP {a}")));
            }
            a.ln() - core(y)?
        }
        None => sim.beta0,
    };
    let v = (from..=to).map(|t| Ok((c + core(t)?).exp())).collect::<Result<Vec<_>>>()?;
    AnnualSeries::new("tfp", from, v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn history(n: usize, v: f64) -> AnnualSeries {
        AnnualSeries::new("rd", BASE_YEAR - n as i32 + 1, vec![v; n]).unwrap()
    }

    #[test]
    fn cumulative_zero_growth() {
        assert_eq!(cumulative_spending(0.0, 2050, 5.0), 0.0);
    }

    #[test]
    fn growth_path_splices() {
        let p = growth_path(&history(3, 2.0), BASE_YEAR, 10.0, 2022).unwrap();
        assert_eq!(p.values(), &[2.0, 2.0, 2.0, 2.0 * 1.1, 2.0 * 1.1f64.powi(2)]);
    }

    #[test]
    fn zero_target_zero_growth() {
        let spec = GammaLagSpec::new(0.75, 0.9, 50).unwrap();
        let gp = GrowthProblem::new(&history(60, 4.0), &spec, BASE_YEAR).unwrap();
        assert_eq!(gp.solve(0.0, 2050, GROWTH_BRACKET).unwrap().growth, 0.0);
    }

    #[test]
    fn negative_target_floors() {
        let spec = GammaLagSpec::new(0.75, 0.9, 50).unwrap();
        let gp = GrowthProblem::new(&history(60, 4.0), &spec, BASE_YEAR).unwrap();
        let s = gp.solve(-0.3, 2050, GROWTH_BRACKET).unwrap();
        assert_eq!(s.growth, 0.0);
        assert!(s.floored);
    }

    #[test]
    fn unreachable_reports_max() {
        let spec = GammaLagSpec::new(0.75, 0.9, 50).unwrap();
        let gp = GrowthProblem::new(&history(60, 4.0), &spec, BASE_YEAR).unwrap();
        match gp.solve(1e12, 2030, GROWTH_BRACKET) {
            Err(Error::Unreachable { achieved_max, .. }) => {
                assert!((achieved_max - gp.gain(50.0, 2030)).abs() < 1e-9)
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn short_history_rejected() {
        let spec = GammaLagSpec::new(0.75, 0.9, 50).unwrap();
        assert!(matches!(
            GrowthProblem::new(&history(10, 4.0), &spec, BASE_YEAR),
            Err(Error::InsufficientHistory(_))
        ));
    }

    #[test]
    fn monetize_zero() {
        assert_eq!(monetize_value(5.0, 0.0), 0.0);
    }
}
