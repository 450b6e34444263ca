//! Run configuration: a flat TOML file of key = value pairs. Every key is
//! optional and falls back to the published defaults.

use std::path::{Path, PathBuf};

use agrotrend_core::design::Trend;
use agrotrend_core::project::{ReportScale, Ssp};
use agrotrend_core::weather::Season;
use agrotrend_core::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Directory with `tfp.csv`, `rd.csv` and the weather inputs.
    pub data_dir: PathBuf,
    /// Scenario files; defaults to `data_dir`.
    pub scenarios_dir: Option<PathBuf>,
    pub grid_daily: Option<PathBuf>,
    pub weights: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub seed: u64,
    /// Worker threads, 0 for one per core. Never changes the results.
    pub workers: usize,

    /// Aggregate the daily grid instead of reading `exposure.csv`;
    /// unset means "when the grid and weights are present".
    pub aggregate_weather: Option<bool>,
    pub season_search: bool,
    pub sensitivity: bool,
    pub project: bool,
    pub solve_offset: bool,
    pub simulate: bool,

    pub lags: usize,
    /// `start:end:step`, used for both λ and δ.
    pub grid: String,
    pub stock_trend: String,
    pub extras: Vec<String>,
    /// Include the weather terms in the stock regression.
    pub stock_weather: bool,

    pub spline_df: usize,
    pub tail_share: f64,
    pub weather_trend: String,
    pub season: String,
    pub dt: String,
    pub dp: String,

    pub block: usize,
    pub draws: usize,
    pub circular: bool,
    /// Read coefficient draws from this file instead of bootstrapping.
    pub draws_file: Option<PathBuf>,

    /// `all` or a comma list such as `ssp245,ssp585`.
    pub ssp: String,
    pub pairings: usize,
    #[serde(rename = "ref")]
    pub reference: String,
    pub horizon: i32,
    pub scale: String,
    pub smooth_df: usize,

    pub targets: Vec<i32>,
    /// `from <file>@<year>`: R&D history and the year growth starts from.
    pub base_spend: String,
    pub growth: Vec<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data_dir: PathBuf::from("."),
            scenarios_dir: None,
            grid_daily: None,
            weights: None,
            out_dir: PathBuf::from("out"),
            seed: 0,
            workers: 0,
            aggregate_weather: None,
            season_search: true,
            sensitivity: true,
            project: true,
            solve_offset: true,
            simulate: true,
            lags: 50,
            grid: "0.05:0.95:0.05".into(),
            stock_trend: "none".into(),
            extras: Vec::new(),
            stock_weather: true,
            spline_df: 5,
            tail_share: 0.001,
            weather_trend: "hamilton".into(),
            season: "1:12".into(),
            dt: "-3:8".into(),
            dp: "-20:20:5".into(),
            block: 5,
            draws: 500,
            circular: false,
            draws_file: None,
            ssp: "all".into(),
            pairings: 2000,
            reference: "1950:1960".into(),
            horizon: 2100,
            scale: "percent".into(),
            smooth_df: 3,
            targets: (2050..=2100).step_by(10).collect(),
            base_spend: "from rd.csv@2020".into(),
            growth: vec![0.0, 2.0, 5.0],
        }
    }
}

fn invalid(msg: String) -> Error {
    Error::InvalidArgument(msg)
}

/// `a:b` or `a:b:step`, both ends inclusive.
pub fn parse_span(s: &str, default_step: f64) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').map(str::trim).collect();
    let num = |v: &str| v.parse::<f64>().map_err(|_| invalid(format!("range `{s}`")));
    let (a, b, step) = match parts.as_slice() {
        [a, b] => (num(a)?, num(b)?, default_step),
        [a, b, c] => (num(a)?, num(b)?, num(c)?),
        _ => return Err(invalid(format!("range `{s}` is not start:end[:step]"))),
    };
    if !(step > 0.0) || a > b || !a.is_finite() || !b.is_finite() {
        return Err(invalid(format!("range `{s}`")));
    }
    let n = ((b - a) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| ((a + i as f64 * step) * 1e10).round() / 1e10).collect())
}

fn parse_window(s: &str) -> Result<(i32, i32)> {
    let (a, b) = s.split_once(':').ok_or_else(|| invalid(format!("window `{s}` is not from:to")))?;
    let y = |v: &str| v.trim().parse::<i32>().map_err(|_| invalid(format!("window `{s}`")));
    let (a, b) = (y(a)?, y(b)?);
    if a > b {
        return Err(invalid(format!("window `{s}` runs backwards")));
    }
    Ok((a, b))
}

/// `from <file>@<year>`, or just `<year>` for the dataset's own R&D file.
pub fn parse_base_spend(s: &str) -> Result<(Option<PathBuf>, i32)> {
    let s = s.trim();
    let body = s.strip_prefix("from").map(str::trim).unwrap_or(s);
    let (file, year) = match body.rsplit_once('@') {
        Some((f, y)) => (Some(PathBuf::from(f.trim())), y),
        None => (None, body),
    };
    let year = year.trim().parse::<i32>().map_err(|_| invalid(format!("base spend `{s}`, expected from <file>@<year>")))?;
    Ok((file.filter(|f| !f.as_os_str().is_empty()), year))
}

/// Year list: `2050,2060,2070`, `2050,2060,...,2100` or `2050:2100:10`.
pub fn parse_years(s: &str) -> Result<Vec<i32>> {
    let bad = || invalid(format!("year list `{s}`"));
    if s.contains(':') {
        let v = parse_span(s, 1.0)?;
        if v.iter().any(|x| x.fract() != 0.0) {
            return Err(bad());
        }
        return Ok(v.into_iter().map(|x| x as i32).collect());
    }
    let parts: Vec<&str> = s.split(',').map(str::trim).filter(|p| !p.is_empty()).collect();
    let mut out: Vec<i32> = Vec::new();
    let mut i = 0;
    while i < parts.len() {
        if parts[i] == "..." {
            let (n, last) = (out.len(), parts.get(i + 1).ok_or_else(bad)?.parse::<i32>().map_err(|_| bad())?);
            if n < 2 {
                return Err(bad());
            }
            let step = out[n - 1] - out[n - 2];
            if step <= 0 || (last - out[n - 1]) % step != 0 {
                return Err(bad());
            }
            let mut y = out[n - 1] + step;
            while y <= last {
                out.push(y);
                y += step;
            }
            i += 2;
        } else {
            out.push(parts[i].parse().map_err(|_| bad())?);
            i += 1;
        }
    }
    if out.is_empty() {
        return Err(bad());
    }
    Ok(out)
}

impl RunConfig {
    /// Reads a config file; relative paths in it are taken from the file's
    /// directory.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io { context: format!("reading {}", path.display()), source: e })?;
        let mut cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| Error::Validation(format!("{}: {}", path.display(), e.message())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut cfg.data_dir);
        fix(&mut cfg.out_dir);
        for p in [&mut cfg.scenarios_dir, &mut cfg.grid_daily, &mut cfg.weights, &mut cfg.draws_file].into_iter().flatten() {
            fix(p);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// Hex SHA-256 of the settings that can change results: everything but
    /// the output directory and the worker count.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = PathBuf::new();
        c.workers = 0;
        let json = serde_json::to_vec(&c).expect("config serialises");
        hex::encode(Sha256::digest(&json))
    }

    pub fn lambda_grid(&self) -> Result<Vec<f64>> {
        let g = parse_span(&self.grid, 0.05)?;
        if g.iter().any(|v| !(*v > 0.0 && *v < 1.0)) {
            return Err(invalid(format!("grid `{}` must lie inside (0, 1)", self.grid)));
        }
        Ok(g)
    }

    pub fn stock_trend(&self) -> Result<Trend> {
        self.stock_trend.parse()
    }

    pub fn weather_trend(&self) -> Result<Trend> {
        self.weather_trend.parse()
    }

    pub fn season(&self) -> Result<Season> {
        self.season.parse()
    }

    pub fn temperature_shifts(&self) -> Result<Vec<i32>> {
        let v = parse_span(&self.dt, 1.0)?;
        if v.iter().any(|x| x.fract() != 0.0 || x.abs() > 10.0) {
            return Err(invalid(format!("dt `{}`: whole degrees within ±10", self.dt)));
        }
        Ok(v.into_iter().map(|x| x as i32).collect())
    }

    pub fn precip_changes(&self) -> Result<Vec<f64>> {
        let v = parse_span(&self.dp, 5.0)?;
        if v.iter().any(|x| *x < -100.0) {
            return Err(invalid(format!("dp `{}` below -100%", self.dp)));
        }
        Ok(v)
    }

    pub fn ref_window(&self) -> Result<(i32, i32)> {
        parse_window(&self.reference)
    }

    pub fn report_scale(&self) -> Result<ReportScale> {
        self.scale.parse()
    }

    /// `None` means every scenario found on disk.
    pub fn ssps(&self) -> Result<Option<Vec<Ssp>>> {
        if self.ssp.trim().eq_ignore_ascii_case("all") {
            return Ok(None);
        }
        let mut v = self.ssp.split(',').map(|s| s.trim().parse()).collect::<Result<Vec<Ssp>>>()?;
        v.sort();
        v.dedup();
        Ok(Some(v))
    }

    pub fn base(&self) -> Result<(Option<PathBuf>, i32)> {
        parse_base_spend(&self.base_spend)
    }

    /// Checks every setting up front so bad configs fail before any stage.
    pub fn validate(&self) -> Result<()> {
        self.lambda_grid()?;
        self.stock_trend()?;
        self.weather_trend()?;
        self.season()?;
        self.temperature_shifts()?;
        self.precip_changes()?;
        self.report_scale()?;
        self.ssps()?;
        let (r0, _) = self.ref_window()?;
        let (_, base_year) = self.base()?;
        let positive = [
            ("lags", self.lags),
            ("spline_df", self.spline_df),
            ("block", self.block),
            ("draws", self.draws),
            ("pairings", self.pairings),
            ("smooth_df", self.smooth_df),
        ];
        for (k, v) in positive {
            if v == 0 {
                return Err(invalid(format!("`{k}` must be positive")));
            }
        }
        if self.spline_df < 2 {
            return Err(invalid("`spline_df` must be at least 2".into()));
        }
        if !(0.0..0.5).contains(&self.tail_share) {
            return Err(invalid(format!("`tail_share` {} outside [0, 0.5)", self.tail_share)));
        }
        if self.horizon <= base_year || self.horizon < r0 {
            return Err(invalid(format!("horizon {} must follow the base year {base_year}", self.horizon)));
        }
        if let Some(t) = self.targets.iter().find(|t| **t <= base_year + 1 || **t > self.horizon) {
            return Err(invalid(format!("target year {t} must lie in {}..={}", base_year + 2, self.horizon)));
        }
        if let Some(g) = self.growth.iter().find(|g| !(**g > -100.0) || !g.is_finite()) {
            return Err(invalid(format!("growth rate {g}%")));
        }
        Ok(())
    }
}
