//! Overlapping block bootstrap shared by the stock and weather regressions.
//!
//! Each draw samples year-rows in blocks and refits both models on the same
//! rows, so the joint distribution of their coefficients is preserved. Draw
//! `i` uses its own ChaCha stream keyed by `(seed, i)`; results therefore do
//! not depend on evaluation order or on the number of worker threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ols::{self, Design, RankPolicy};
use crate::stats::{self, Summary};
use crate::weather::WeatherCoefs;

pub const DEFAULT_BLOCK: usize = 5;
pub const DEFAULT_DRAWS: usize = 500;
/// Redraw attempts for a draw whose resampled design is rank deficient.
const MAX_ATTEMPTS: u64 = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockPlan {
    pub n: usize,
    pub block: usize,
    pub draws: usize,
    pub seed: u64,
    /// Let blocks wrap around the end of the sample.
    #[serde(default)]
    pub circular: bool,
}

impl BlockPlan {
    pub fn new(n: usize, block: usize, draws: usize, seed: u64) -> Result<Self> {
        let p = Self { n, block, draws, seed, circular: false };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.block == 0 || self.block > self.n || self.draws == 0 {
            return Err(Error::InvalidArgument(format!(
                "block plan n={} block={} draws={}",
                self.n, self.block, self.draws
            )));
        }
        Ok(())
    }
}

/// Row indices of draw `draw_id`: `ceil(n / block)` block starts drawn
/// uniformly, each expanded to `block` consecutive rows, truncated to `n`.
pub fn block_indices(plan: &BlockPlan, draw_id: u64) -> Vec<usize> {
    block_indices_attempt(plan, draw_id, 0)
}

fn block_indices_attempt(plan: &BlockPlan, draw_id: u64, attempt: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    rng.set_stream((attempt << 32) ^ draw_id);
    let nblocks = plan.n.div_ceil(plan.block);
    let starts = if plan.circular { plan.n } else { plan.n - plan.block + 1 };
    let mut idx = Vec::with_capacity(nblocks * plan.block);
    for _ in 0..nblocks {
        let s = rng.random_range(0..starts);
        idx.extend((0..plan.block).map(|k| (s + k) % plan.n));
    }
    idx.truncate(plan.n);
    idx
}

/// Coefficients of one model in one draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefRecord {
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawRecord {
    pub draw_id: u64,
    /// Redraws needed before both designs were full rank.
    pub redraws: u64,
    /// Sampled positions within the common window (shared by both models).
    pub indices: Vec<usize>,
    pub stock: CoefRecord,
    pub weather: CoefRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedDraws {
    pub plan: BlockPlan,
    pub common_years: Vec<i32>,
    pub stock_names: Vec<String>,
    pub weather_names: Vec<String>,
    pub draws: Vec<DrawRecord>,
}

/// Which of the paired models a coefficient belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Stock,
    Weather,
}

impl std::fmt::Display for Model {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Model::Stock => "stock",
            Model::Weather => "weather",
        })
    }
}

impl std::str::FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stock" => Ok(Model::Stock),
            "weather" => Ok(Model::Weather),
            _ => Err(Error::InvalidArgument(format!("model `{s}`"))),
        }
    }
}

impl PairedDraws {
    pub fn total_redraws(&self) -> u64 {
        self.draws.iter().map(|d| d.redraws).sum()
    }

    fn names(&self, model: Model) -> &[String] {
        match model {
            Model::Stock => &self.stock_names,
            Model::Weather => &self.weather_names,
        }
    }

    /// Every draw's value of a named coefficient.
    pub fn coef(&self, model: Model, name: &str) -> Result<Vec<f64>> {
        let j = self
            .names(model)
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::MissingCovariate(format!("{model}:{name}")))?;
        Ok(self
            .draws
            .iter()
            .map(|d| match model {
                Model::Stock => d.stock.values[j],
                Model::Weather => d.weather.values[j],
            })
            .collect())
    }

    /// Bootstrap standard error: standard deviation across draws.
    pub fn std_error(&self, model: Model, name: &str) -> Result<f64> {
        Ok(stats::std_dev(&self.coef(model, name)?))
    }

    /// Mean and 95% percentile interval across draws.
    pub fn summary(&self, model: Model, name: &str) -> Result<Summary> {
        Ok(Summary::of(&self.coef(model, name)?))
    }

    /// Stock elasticity per draw.
    pub fn beta1(&self) -> Result<Vec<f64>> {
        self.coef(Model::Stock, "log_S")
    }

    /// Weather-model spline and precipitation coefficients per draw.
    pub fn weather_coefs(&self, df: usize) -> Result<Vec<WeatherCoefs>> {
        self.draws
            .iter()
            .map(|d| WeatherCoefs::from_named(&self.weather_names, &d.weather.values, df))
            .collect()
    }
}

/// Row map of one model onto the common window.
struct RowMap {
    fixed: Vec<usize>,
    common: Vec<usize>,
}

fn row_map(design: &Design, common: &[i32]) -> RowMap {
    let fixed = (0..design.nrows()).filter(|&i| !common.contains(&design.years[i])).collect();
    let common = common
        .iter()
        .map(|y| design.years.iter().position(|t| t == y).expect("common year present"))
        .collect();
    RowMap { fixed, common }
}

impl RowMap {
    fn rows(&self, idx: &[usize]) -> Vec<usize> {
        let mut r = self.fixed.clone();
        r.extend(idx.iter().map(|&i| self.common[i]));
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BootstrapOptions {
    pub block: usize,
    pub draws: usize,
    pub seed: u64,
    pub circular: bool,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        Self { block: DEFAULT_BLOCK, draws: DEFAULT_DRAWS, seed: 0, circular: false }
    }
}

/// Paired block bootstrap of two regressions.
///
/// Blocks are drawn over the years both designs share; rows that only one
/// design has (e.g. years consumed by lagged regressors in the other) enter
/// that model's every draw exactly once.
pub fn bootstrap_paired(stock: &Design, weather: &Design, opts: &BootstrapOptions) -> Result<PairedDraws> {
    let common: Vec<i32> = stock.years.iter().copied().filter(|y| weather.years.contains(y)).collect();
    if common.is_empty() {
        return Err(Error::Alignment("stock and weather samples share no years".into()));
    }
    let plan = BlockPlan { n: common.len(), block: opts.block, draws: opts.draws, seed: opts.seed, circular: opts.circular };
    plan.validate()?;
    // both models must be fittable on the full sample
    ols::fit(stock, RankPolicy::Error)?;
    ols::fit(weather, RankPolicy::Error)?;
    let smap = row_map(stock, &common);
    let wmap = row_map(weather, &common);

    let draws = (0..plan.draws as u64)
        .into_par_iter()
        .map(|draw_id| {
            for attempt in 0..MAX_ATTEMPTS {
                let idx = block_indices_attempt(&plan, draw_id, attempt);
                let s = ols::fit(&stock.select_rows(&smap.rows(&idx)), RankPolicy::Error);
                let w = ols::fit(&weather.select_rows(&wmap.rows(&idx)), RankPolicy::Error);
                match (s, w) {
                    (Ok(s), Ok(w)) => {
                        return Ok(DrawRecord {
                            draw_id,
                            redraws: attempt,
                            indices: idx,
                            stock: CoefRecord { values: s.coef },
                            weather: CoefRecord { values: w.coef },
                        })
                    }
                    (Err(e @ Error::RankDeficient { .. }), _) | (_, Err(e @ Error::RankDeficient { .. })) => {
                        log::debug!("draw {draw_id} attempt {attempt}: {e}; redrawing");
                    }
                    (Err(e), _) | (_, Err(e)) => return Err(e),
                }
            }
            Err(Error::RankDeficient { columns: vec![format!("bootstrap draw {draw_id}")] })
        })
        .collect::<Result<Vec<_>>>()?;
    let redraws: u64 = draws.iter().map(|d| d.redraws).sum();
    if redraws > 0 {
        log::info!("{redraws} bootstrap draws were redrawn after rank-deficient samples");
    }
    Ok(PairedDraws {
        plan,
        common_years: common,
        stock_names: stock.names.clone(),
        weather_names: weather.names.clone(),
        draws,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_blocks_of_five() {
        let plan = BlockPlan::new(10, 5, 1, 42).unwrap();
        for d in 0..50 {
            let idx = block_indices(&plan, d);
            assert_eq!(idx.len(), 10);
            for half in idx.chunks(5) {
                for w in half.windows(2) {
                    assert_eq!(w[1], w[0] + 1);
                }
                assert!(half[4] < 10);
            }
        }
    }

    #[test]
    fn deterministic_per_draw() {
        let plan = BlockPlan::new(37, 5, 1, 9).unwrap();
        assert_eq!(block_indices(&plan, 3), block_indices(&plan, 3));
        assert_ne!(block_indices(&plan, 3), block_indices(&plan, 4));
        let other = BlockPlan { seed: 10, ..plan };
        assert_ne!(block_indices(&plan, 3), block_indices(&other, 3));
    }

    #[test]
    fn truncates_partial_block() {
        let plan = BlockPlan::new(12, 5, 1, 1).unwrap();
        let idx = block_indices(&plan, 0);
        assert_eq!(idx.len(), 12);
    }

    #[test]
    fn circular_blocks_wrap() {
        let plan = BlockPlan { circular: true, ..BlockPlan::new(7, 5, 1, 3).unwrap() };
        let wrapped = (0..200).any(|d| block_indices(&plan, d).windows(2).any(|w| w[1] == 0 && w[0] == 6));
        assert!(wrapped);
    }

    #[test]
    fn marginals_near_uniform() {
        // each position's value should be uniform over rows that can occupy it
        let plan = BlockPlan::new(20, 5, 1, 2024).unwrap();
        let draws = 10_000;
        let mut counts = vec![[0usize; 20]; 20];
        for d in 0..draws {
            for (pos, v) in block_indices(&plan, d).into_iter().enumerate() {
                counts[pos][v] += 1;
            }
        }
        // position p (offset k = p % 5 in its block) takes values k..k+15, 16 equally likely
        for (pos, row) in counts.iter().enumerate() {
            let k = pos % 5;
            let expected = draws as f64 / 16.0;
            let chi2: f64 = (k..k + 16).map(|v| (row[v] as f64 - expected).powi(2) / expected).sum();
            // 15 dof, p = 0.001 critical value 37.7
            assert!(chi2 < 37.7, "position {pos}: chi2 {chi2}");
            assert_eq!((0..k).chain(k + 16..20).map(|v| row[v]).sum::<usize>(), 0);
        }
    }

    #[test]
    fn plan_validation() {
        assert!(BlockPlan::new(4, 5, 1, 0).is_err());
        assert!(BlockPlan::new(4, 0, 1, 0).is_err());
        assert!(BlockPlan::new(4, 2, 0, 0).is_err());
    }
}
