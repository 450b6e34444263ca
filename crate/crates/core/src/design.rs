//! Regression designs over the usable years of a [`Dataset`].

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::ols::Design;

/// Trend control added to a regression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Trend {
    #[default]
    None,
    Linear,
    Quadratic,
    /// Four lags of log TFP starting `lookahead` years back.
    Hamilton { lookahead: usize },
}

/// Number of lagged log-TFP regressors in the Hamilton control.
pub const HAMILTON_LAGS: usize = 4;

impl Trend {
    pub const HAMILTON: Trend = Trend::Hamilton { lookahead: 1 };

    /// Leading sample years consumed by lagged regressors.
    pub fn leading_rows(&self) -> usize {
        match self {
            Trend::Hamilton { lookahead } => lookahead + HAMILTON_LAGS - 1,
            _ => 0,
        }
    }
}

impl fmt::Display for Trend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Trend::None => f.write_str("none"),
            Trend::Linear => f.write_str("linear"),
            Trend::Quadratic => f.write_str("quadratic"),
            Trend::Hamilton { lookahead: 1 } => f.write_str("hamilton"),
            Trend::Hamilton { lookahead } => write!(f, "hamilton{lookahead}"),
        }
    }
}

impl FromStr for Trend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" => Ok(Trend::None),
            "linear" => Ok(Trend::Linear),
            "quadratic" => Ok(Trend::Quadratic),
            "hamilton" | "hamilton1" => Ok(Trend::HAMILTON),
            "hamilton2" => Ok(Trend::Hamilton { lookahead: 2 }),
            other => Err(Error::InvalidArgument(format!(
                "unknown trend `{other}` (none|linear|quadratic|hamilton|hamilton2)"
            ))),
        }
    }
}

/// Column-by-column design assembly on a fixed set of rows.
pub struct DesignBuilder<'a> {
    ds: &'a Dataset,
    years: Vec<i32>,
    names: Vec<String>,
    cols: Vec<Vec<f64>>,
}

impl<'a> DesignBuilder<'a> {
    /// Rows are the dataset's usable years, minus those consumed by `trend`.
    pub fn new(ds: &'a Dataset, trend: Trend) -> Result<Self> {
        let (lo, hi) = ds.window();
        let first = lo + trend.leading_rows() as i32;
        if first > hi {
            return Err(Error::InsufficientSample { n: 0, p: 1, needed: 1 });
        }
        let mut b = Self { ds, years: (first..=hi).collect(), names: Vec::new(), cols: Vec::new() };
        b.push("const", |_| Ok(1.0))?;
        b.trend(trend)?;
        Ok(b)
    }

    pub fn years(&self) -> &[i32] {
        &self.years
    }

    pub fn push(&mut self, name: impl Into<String>, f: impl Fn(i32) -> Result<f64>) -> Result<&mut Self> {
        let col = self.years.iter().map(|&t| f(t)).collect::<Result<Vec<_>>>()?;
        self.names.push(name.into());
        self.cols.push(col);
        Ok(self)
    }

    fn trend(&mut self, trend: Trend) -> Result<()> {
        let t0 = self.ds.window().0;
        match trend {
            Trend::None => {}
            Trend::Linear => {
                self.push("trend", |t| Ok((t - t0) as f64))?;
            }
            Trend::Quadratic => {
                self.push("trend", |t| Ok((t - t0) as f64))?;
                self.push("trend2", |t| Ok(((t - t0) as f64).powi(2)))?;
            }
            Trend::Hamilton { lookahead } => {
                let tfp = self.ds.tfp();
                for lag in lookahead..lookahead + HAMILTON_LAGS {
                    self.push(format!("log_tfp_l{lag}"), |t| {
                        tfp.get(t - lag as i32)
                            .map(f64::ln)
                            .ok_or_else(|| Error::InsufficientHistory(format!("TFP lag {lag} of {t}")))
                    })?;
                }
            }
        }
        Ok(())
    }

    /// Adds an extra covariate by name.
    pub fn extra(&mut self, name: &str) -> Result<&mut Self> {
        let s = self.ds.extra(name)?;
        self.push(name, |t| {
            s.get(t).ok_or_else(|| Error::InsufficientHistory(format!("covariate `{name}` missing year {t}")))
        })
    }

    /// Response `log A_t`.
    pub fn build(self) -> Result<Design> {
        let tfp = self.ds.tfp();
        let y: Vec<f64> = self
            .years
            .iter()
            .map(|&t| tfp.get(t).map(f64::ln).ok_or_else(|| Error::Alignment(format!("TFP missing {t}"))))
            .collect::<Result<_>>()?;
        let n = self.years.len();
        let p = self.cols.len();
        let x = DMatrix::from_fn(n, p, |i, j| self.cols[j][i]);
        Ok(Design { names: self.names, years: self.years, x, y: DVector::from_vec(y) })
    }
}
