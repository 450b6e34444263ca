use std::collections::BTreeMap;

use agrotrend_core::ols::{self, RankPolicy};
use agrotrend_core::resample::{bootstrap_paired, BootstrapOptions, Model};
use agrotrend_core::series::AnnualSeries;
use agrotrend_core::stock::*;
use agrotrend_core::synth::{self, SynthConfig};
use agrotrend_core::weather::{weather_regression_design, WeatherDesign, WeatherOptions};
use agrotrend_core::Dataset;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn designs(ds: &Dataset, spec: &GammaLagSpec) -> (ols::Design, ols::Design) {
    let wd = WeatherDesign::build(ds, &WeatherOptions::default()).unwrap();
    let stock = build_stock(ds.rd(), spec).unwrap();
    let sd = stock_regression_design(ds, &stock, &StockModelSpec::default(), Some(&wd)).unwrap();
    let wdes = weather_regression_design(ds, &wd, Trend::HAMILTON).unwrap();
    (sd, wdes)
}

#[test]
fn grid_search_recovers_true_cell() {
    let cfg = SynthConfig::default();
    let ds = synth::generate(&cfg).unwrap().dataset().unwrap();
    let wd = WeatherDesign::build(&ds, &WeatherOptions::default()).unwrap();
    let grid = parameter_grid(0.05, 0.95, 0.05).unwrap();
    let gs = grid_search(&ds, &grid, &grid, &StockModelSpec::default(), Some(&wd)).unwrap();
    assert!(gs.failures.is_empty());
    assert_eq!(gs.ranked.len(), 19 * 19);
    let hit = gs.top(5).iter().any(|c| (c.lambda - 0.75).abs() < 1e-9 && (c.delta - 0.90).abs() < 1e-9);
    assert!(hit, "{:?}", gs.top(5));
    let fit = fit_stock_model(&ds, &build_stock(ds.rd(), &cfg.spec).unwrap(), &StockModelSpec::default(), Some(&wd))
        .unwrap();
    assert!((0.45..=0.55).contains(&fit.beta1), "{}", fit.beta1);
}

#[test]
fn pure_noise_gives_no_cv_gain() {
    let cfg = SynthConfig::default();
    let s = synth::generate(&cfg).unwrap();
    let normal = Normal::new(0.0, 0.05).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let tfp = AnnualSeries::new(
        "tfp",
        s.tfp.start_year(),
        (0..s.tfp.len()).map(|_| f64::exp(normal.sample(&mut rng))).collect(),
    )
    .unwrap();
    let ds = Dataset::new(tfp, s.rd.clone(), s.weather.exposure.clone(), s.weather.precip.clone(), BTreeMap::new(), None, 50)
        .unwrap();
    let grid = [0.25, 0.5, 0.75];
    let gs = grid_search(&ds, &grid, &grid, &StockModelSpec::default(), None).unwrap();
    let best = gs.best().unwrap().mse_reduction;
    assert!(best < 5.0, "{best}");
}

#[test]
fn draws_are_paired_and_reproducible() {
    let cfg = SynthConfig::default();
    let ds = synth::generate(&cfg).unwrap().dataset().unwrap();
    let (sd, wdes) = designs(&ds, &cfg.spec);
    let opts = BootstrapOptions { draws: 20, seed: 4, ..Default::default() };
    let a = bootstrap_paired(&sd, &wdes, &opts).unwrap();
    let b = bootstrap_paired(&sd, &wdes, &opts).unwrap();
    assert_eq!(a, b);
    // refit both models on the recorded shared indices
    let common = &a.common_years;
    for d in &a.draws {
        for (design, values) in [(&sd, &d.stock.values), (&wdes, &d.weather.values)] {
            let mut rows: Vec<usize> = (0..design.nrows()).filter(|&i| !common.contains(&design.years[i])).collect();
            rows.extend(d.indices.iter().map(|&k| design.years.iter().position(|y| *y == common[k]).unwrap()));
            let refit = ols::fit(&design.select_rows(&rows), RankPolicy::Error).unwrap();
            for (x, y) in refit.coef.iter().zip(values.iter()) {
                assert!((x - y).abs() <= 1e-9 * (1.0 + x.abs()));
            }
        }
    }
}

#[test]
fn noiseless_stock_model_has_near_zero_spread() {
    let cfg = SynthConfig::default();
    let s = synth::generate(&cfg).unwrap();
    let tfp = s.stock.window(s.tfp.start_year(), s.tfp.end_year()).unwrap().map(|v| v.powf(0.5)).unwrap();
    let ds = Dataset::new(tfp, s.rd.clone(), s.weather.exposure.clone(), s.weather.precip.clone(), BTreeMap::new(), None, 50)
        .unwrap();
    let (sd, wdes) = designs(&ds, &cfg.spec);
    let draws = bootstrap_paired(&sd, &wdes, &BootstrapOptions { draws: 50, ..Default::default() }).unwrap();
    assert!(draws.std_error(Model::Stock, "log_S").unwrap() < 1e-8);
    let b = draws.beta1().unwrap();
    assert!(b.iter().all(|v| (v - 0.5).abs() < 1e-8));
}

#[test]
fn single_draw_gives_degenerate_interval() {
    let cfg = SynthConfig::default();
    let ds = synth::generate(&cfg).unwrap().dataset().unwrap();
    let (sd, wdes) = designs(&ds, &cfg.spec);
    let draws = bootstrap_paired(&sd, &wdes, &BootstrapOptions { draws: 1, ..Default::default() }).unwrap();
    let s = draws.summary(Model::Stock, "log_S").unwrap();
    assert_eq!(s.mu, s.p2_5);
    assert_eq!(s.mu, s.p97_5);
}

#[test]
fn interval_covers_truth_in_most_repetitions() {
    let base = SynthConfig::default();
    let reps = 40;
    let mut cover = 0;
    for rep in 0..reps {
        let cfg = SynthConfig { seed: 500 + rep, ..base };
        let ds = synth::generate(&cfg).unwrap().dataset().unwrap();
        let (sd, wdes) = designs(&ds, &cfg.spec);
        let draws = bootstrap_paired(&sd, &wdes, &BootstrapOptions { draws: 300, seed: rep, ..Default::default() })
            .unwrap();
        let s = draws.summary(Model::Stock, "log_S").unwrap();
        if s.p2_5 <= 0.5 && 0.5 <= s.p97_5 {
            cover += 1;
        }
    }
    assert!(cover >= 32, "{cover}/{reps}");
}
