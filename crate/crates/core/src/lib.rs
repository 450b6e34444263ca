//! Productivity response to a lagged R&D knowledge stock and to nonlinear
//! weather exposure, climate-scenario impact projection, and the inverse
//! problem of finding R&D spending paths that offset those impacts.
//!
//! The crate is organised bottom-up:
//!
//! - [`series`], [`dataset`], [`io`]: year-indexed carriers, ingestion and alignment.
//! - [`exposure`]: diurnal temperature reconstruction, spatial aggregation and
//!   histogram transforms.
//! - [`stock`]: gamma lag kernel, knowledge stock, stock-elasticity regressions
//!   and the lag-parameter grid search.
//! - [`spline`], [`weather`]: natural cubic spline bases and the weather-response
//!   regression, sensitivities and season search.
//! - [`resample`]: overlapping block bootstrap shared across both regressions.
//! - [`project`]: climate impacts per scenario member and ensemble summaries.
//! - [`offset`]: offsetting stock changes, monetisation, growth solver and
//!   TFP simulation.

pub mod dataset;
pub mod design;
pub mod error;
pub mod exposure;
pub mod io;
pub mod ols;
pub mod offset;
pub mod project;
pub mod resample;
pub mod series;
pub mod spline;
pub mod stats;
pub mod stock;
pub mod synth;
pub mod weather;

pub use dataset::{Dataset, DatasetPaths};
pub use error::{Error, ErrorKind, Result};
pub use exposure::{BinCoding, ExposureHistogramSeries, MonthlyExposure};
pub use project::{ImpactDistribution, ReferenceClimatology, ScenarioMember, ScenarioSet, Ssp};
pub use resample::{BlockPlan, PairedDraws};
pub use series::AnnualSeries;
pub use stats::Summary;
pub use stock::{GammaLagSpec, KnowledgeStock, StockFit, Trend};
pub use weather::{WeatherDesign, WeatherFit};

// foreign types that appear in this crate's signatures
pub use chrono::{Datelike, NaiveDate};
pub use nalgebra::{DMatrix, DVector};
