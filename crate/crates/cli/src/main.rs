use std::path::PathBuf;
use std::process::ExitCode;

use agrotrend_cli::config::{parse_years, RunConfig};
use agrotrend_cli::fixture::{write_fixture, FixtureOptions};
use agrotrend_cli::{exit_code, manifest, Figure, Pipeline};
use agrotrend_core::Error;
use anyhow::Result;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "agrotrend", version, about = "Productivity, weather and R&D offset pipeline")]
struct Cli {
    /// Run configuration (flat TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Input directory.
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Default)]
struct DrawsArg {
    /// Coefficient draws to use instead of bootstrapping.
    #[arg(long)]
    draws_file: Option<PathBuf>,
}

#[derive(Args, Default)]
struct SspArg {
    /// `all` or a comma list, e.g. `ssp245,ssp585`.
    #[arg(long)]
    ssp: Option<String>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Daily grid and weights to national exposure histograms.
    AggregateWeather {
        #[arg(long)]
        grid_daily: Option<PathBuf>,
        #[arg(long)]
        weights: Option<PathBuf>,
    },
    /// Lag-parameter grid search and the stock regression.
    FitStock {
        #[arg(long)]
        lags: Option<usize>,
        #[arg(long)]
        grid: Option<String>,
        #[arg(long)]
        trend: Option<String>,
        /// Comma list of extra covariates.
        #[arg(long)]
        extras: Option<String>,
        /// Leave the weather terms out of the stock regression.
        #[arg(long)]
        no_weather: bool,
    },
    /// Spline-on-bins weather regression.
    FitWeather {
        #[arg(long)]
        spline_df: Option<usize>,
        #[arg(long)]
        trend: Option<String>,
        #[arg(long)]
        season: Option<String>,
    },
    /// Effects of uniform temperature and precipitation changes.
    Sensitivity {
        #[arg(long, allow_hyphen_values = true)]
        dt: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        dp: Option<String>,
        #[command(flatten)]
        draws: DrawsArg,
    },
    /// Cross-validated comparison of every growing season.
    SeasonSearch {
        #[arg(long)]
        trend: Option<String>,
    },
    /// Paired block bootstrap of both regressions.
    Bootstrap {
        #[arg(long)]
        block: Option<usize>,
        #[arg(long)]
        draws: Option<usize>,
        #[arg(long)]
        circular: bool,
    },
    /// Climate impacts per scenario.
    Project {
        #[command(flatten)]
        ssp: SspArg,
        #[command(flatten)]
        draws: DrawsArg,
        #[arg(long)]
        pairings: Option<usize>,
        /// Reference window, `from:to`.
        #[arg(long = "ref")]
        reference: Option<String>,
        /// `percent` or `log_points`.
        #[arg(long)]
        scale: Option<String>,
    },
    /// Offsetting stock changes and the spending growth that reaches them.
    SolveOffset {
        #[command(flatten)]
        ssp: SspArg,
        #[command(flatten)]
        draws: DrawsArg,
        /// e.g. `2050,2060,...,2100`.
        #[arg(long)]
        targets: Option<String>,
        /// `from <file>@<year>`.
        #[arg(long)]
        base_spend: Option<String>,
    },
    /// TFP paths under fixed spending growth.
    SimulateTfp {
        #[command(flatten)]
        ssp: SspArg,
        #[command(flatten)]
        draws: DrawsArg,
        /// Comma list of growth rates in percent.
        #[arg(long, allow_hyphen_values = true)]
        growth: Option<String>,
    },
    /// Every enabled stage.
    Run,
    /// Plot data for one figure, or `all`.
    Figure { id: String },
    /// Re-check the digests recorded in the manifest.
    Verify,
    /// Write the effective configuration.
    PrintConfig,
    /// Write a small synthetic input set and its run.toml.
    MakeFixture {
        dir: PathBuf,
        #[arg(long, default_value_t = 2)]
        gcms: usize,
        #[arg(long, default_value_t = 3)]
        cells: usize,
    },
}

fn floats(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| Error::InvalidArgument(format!("number list `{s}`")).into()))
        .collect()
}

fn apply_overrides(cfg: &mut RunConfig, cmd: &Cmd) -> Result<()> {
    let set_draws = |cfg: &mut RunConfig, d: &DrawsArg| {
        if let Some(p) = &d.draws_file {
            cfg.draws_file = Some(p.clone());
        }
    };
    let set_ssp = |cfg: &mut RunConfig, s: &SspArg| {
        if let Some(v) = &s.ssp {
            cfg.ssp = v.clone();
        }
    };
    match cmd {
        Cmd::AggregateWeather { grid_daily, weights } => {
            cfg.aggregate_weather = Some(true);
            cfg.grid_daily = grid_daily.clone().or(cfg.grid_daily.take());
            cfg.weights = weights.clone().or(cfg.weights.take());
        }
        Cmd::FitStock { lags, grid, trend, extras, no_weather } => {
            cfg.lags = lags.unwrap_or(cfg.lags);
            if let Some(g) = grid {
                cfg.grid = g.clone();
            }
            if let Some(t) = trend {
                cfg.stock_trend = t.clone();
            }
            if let Some(x) = extras {
                cfg.extras = x.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
            }
            if *no_weather {
                cfg.stock_weather = false;
            }
        }
        Cmd::FitWeather { spline_df, trend, season } => {
            cfg.spline_df = spline_df.unwrap_or(cfg.spline_df);
            if let Some(t) = trend {
                cfg.weather_trend = t.clone();
            }
            if let Some(s) = season {
                cfg.season = s.clone();
            }
        }
        Cmd::Sensitivity { dt, dp, draws } => {
            if let Some(v) = dt {
                cfg.dt = v.clone();
            }
            if let Some(v) = dp {
                cfg.dp = v.clone();
            }
            set_draws(cfg, draws);
        }
        Cmd::SeasonSearch { trend } => {
            if let Some(t) = trend {
                cfg.weather_trend = t.clone();
            }
        }
        Cmd::Bootstrap { block, draws, circular } => {
            cfg.block = block.unwrap_or(cfg.block);
            cfg.draws = draws.unwrap_or(cfg.draws);
            cfg.circular |= *circular;
        }
        Cmd::Project { ssp, draws, pairings, reference, scale } => {
            set_ssp(cfg, ssp);
            set_draws(cfg, draws);
            cfg.pairings = pairings.unwrap_or(cfg.pairings);
            if let Some(r) = reference {
                cfg.reference = r.clone();
            }
            if let Some(s) = scale {
                cfg.scale = s.clone();
            }
        }
        Cmd::SolveOffset { ssp, draws, targets, base_spend } => {
            set_ssp(cfg, ssp);
            set_draws(cfg, draws);
            if let Some(t) = targets {
                cfg.targets = parse_years(t)?;
            }
            if let Some(b) = base_spend {
                cfg.base_spend = b.clone();
            }
        }
        Cmd::SimulateTfp { ssp, draws, growth } => {
            set_ssp(cfg, ssp);
            set_draws(cfg, draws);
            if let Some(g) = growth {
                cfg.growth = floats(g)?;
            }
        }
        Cmd::Run | Cmd::Figure { .. } | Cmd::Verify | Cmd::PrintConfig | Cmd::MakeFixture { .. } => {}
    }
    Ok(())
}

fn dispatch(p: &mut Pipeline, cmd: &Cmd) -> Result<()> {
    match cmd {
        Cmd::AggregateWeather { .. } => p.aggregate_weather().map(|_| ()),
        Cmd::FitStock { .. } => p.ensure_stock(),
        Cmd::FitWeather { .. } => p.ensure_weather(),
        Cmd::Sensitivity { .. } => p.ensure_sensitivity(),
        Cmd::SeasonSearch { .. } => p.ensure_season_search(),
        Cmd::Bootstrap { .. } => p.ensure_draws(),
        Cmd::Project { .. } => p.ensure_impacts(),
        Cmd::SolveOffset { .. } => p.ensure_offsets(),
        Cmd::SimulateTfp { .. } => p.ensure_simulation(),
        Cmd::Run => p.run(),
        Cmd::Figure { id } if id == "all" => Figure::ALL.iter().try_for_each(|f| p.figure(*f)),
        Cmd::Figure { id } => p.figure(id.parse()?),
        Cmd::Verify | Cmd::PrintConfig | Cmd::MakeFixture { .. } => unreachable!("handled before the pipeline"),
    }
}

fn real_main(cli: Cli) -> Result<()> {
    if let Cmd::MakeFixture { dir, gcms, cells } = &cli.cmd {
        let opts = FixtureOptions { seed: cli.seed.unwrap_or(7), gcms: *gcms, cells: *cells, ..Default::default() };
        write_fixture(dir, &opts)?;
        println!("{}", dir.join("run.toml").display());
        return Ok(());
    }
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out_dir = o.clone();
    }
    if let Some(d) = &cli.data {
        cfg.data_dir = d.clone();
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    apply_overrides(&mut cfg, &cli.cmd)?;

    match &cli.cmd {
        Cmd::Verify => {
            let bad = manifest::verify(&cfg.out_dir)?;
            for (name, why) in &bad {
                eprintln!("{name}: {why}");
            }
            if !bad.is_empty() {
                return Err(Error::Validation(format!("{} files do not match the manifest", bad.len())).into());
            }
            println!("all digests match");
            return Ok(());
        }
        Cmd::PrintConfig => {
            cfg.validate()?;
            print!("{}", cfg.to_toml());
            return Ok(());
        }
        _ => {}
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    pool.install(|| {
        let mut p = Pipeline::new(cfg)?;
        let r = dispatch(&mut p, &cli.cmd);
        let m = p.finish();
        r?;
        let m = m?;
        log::info!("{} files written to {}", m.outputs.len(), p.out_dir().display());
        Ok(())
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match real_main(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
