//! Small synthetic input set: national series with a known lag structure,
//! the daily grid they were aggregated from, and two climate-model members
//! per scenario.

use std::path::Path;

use agrotrend_core::project::Ssp;
use agrotrend_core::synth::{self, SynthConfig, WeatherGen};
use agrotrend_core::Result;

use crate::config::RunConfig;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixtureOptions {
    pub seed: u64,
    pub gcms: usize,
    pub cells: usize,
    /// Last projected year of the scenario files.
    pub horizon: i32,
}

impl Default for FixtureOptions {
    fn default() -> Self {
        Self { seed: 7, gcms: 2, cells: 3, horizon: 2100 }
    }
}

/// Writes `data/`, `data/scenarios/` and a `run.toml` pointing at them into
/// `dir`, and returns that config.
pub fn write_fixture(dir: &Path, opts: &FixtureOptions) -> anyhow::Result<RunConfig> {
    let data = dir.join("data");
    let weather = WeatherGen { cells: opts.cells, ..Default::default() };
    // 1950..=2020, so R&D and TFP reach the 2020 base year
    let cfg = SynthConfig { years: 71, seed: opts.seed, weather, ..Default::default() };
    let s = synth::generate(&cfg)?;
    s.write_dir(&data)?;
    let scen = data.join("scenarios");
    for ssp in Ssp::ALL {
        let members = synth::scenario_members(&weather, ssp, opts.gcms, (cfg.first_year, opts.horizon), opts.seed)?;
        synth::write_scenarios(&scen, ssp, &members)?;
    }
    let run = RunConfig {
        data_dir: "data".into(),
        scenarios_dir: Some("data/scenarios".into()),
        out_dir: "out".into(),
        seed: opts.seed,
        horizon: opts.horizon,
        ..Default::default()
    };
    let path = dir.join("run.toml");
    std::fs::write(&path, run.to_toml())
        .map_err(|e| agrotrend_core::Error::Io { context: format!("writing {}", path.display()), source: e })?;
    RunConfig::load(&path)
}

/// Only the national inputs, without scenarios.
pub fn write_inputs(dir: &Path, cfg: &SynthConfig) -> Result<()> {
    synth::generate(cfg)?.write_dir(dir)
}
