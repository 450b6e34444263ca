use std::collections::BTreeMap;

use agrotrend_core::ols::RankPolicy;
use agrotrend_core::series::AnnualSeries;
use agrotrend_core::stock::Trend;
use agrotrend_core::synth::{self, SynthConfig};
use agrotrend_core::weather::*;
use agrotrend_core::Dataset;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Dataset whose log TFP is an exact spline-on-bins weather response plus a
/// linear trend and small noise. Returns it with the design and true γ.
fn spline_truth(noise: f64) -> (Dataset, WeatherDesign, Vec<f64>, f64, f64) {
    let cfg = SynthConfig::default();
    let s = synth::generate(&cfg).unwrap();
    let ds0 = s.dataset().unwrap();
    let wd = WeatherDesign::build(&ds0, &WeatherOptions::default()).unwrap();
    let gamma: Vec<f64> = vec![0.004, 0.007, 0.009, 0.002, -0.02]
        .into_iter()
        .map(|g: f64| g / 365.0)
        .collect();
    let (t1, t2) = (2e-4, -1e-7);
    let dist = Normal::new(0.0, noise.max(1e-300)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (lo, hi) = ds0.window();
    let vals: Vec<f64> = (lo..=hi)
        .map(|t| {
            let e = wd.transformed(t).unwrap();
            let p = wd.precip().get(t).unwrap();
            let w: f64 = gamma.iter().zip(e).map(|(g, x)| g * x).sum::<f64>() + t1 * p + t2 * p * p;
            let eps = if noise > 0.0 { dist.sample(&mut rng) } else { 0.0 };
            (0.2 + 0.01 * (t - lo) as f64 + w + eps).exp()
        })
        .collect();
    let tfp = AnnualSeries::new("tfp", lo, vals).unwrap();
    let ds = Dataset::new(
        tfp,
        ds0.rd().clone(),
        ds0.exposure().clone(),
        ds0.precip().clone(),
        BTreeMap::new(),
        ds0.monthly().cloned(),
        ds0.lags(),
    )
    .unwrap();
    let wd = WeatherDesign::build(&ds, &WeatherOptions::default()).unwrap();
    (ds, wd, gamma, t1, t2)
}

#[test]
fn recovers_spline_response_without_noise() {
    let (ds, wd, gamma, t1, t2) = spline_truth(0.0);
    let fit = fit_weather_model(&ds, &wd, Trend::Linear).unwrap();
    for (a, b) in fit.coefs.gamma.iter().zip(&gamma) {
        assert!((a - b).abs() < 1e-8 * gamma.iter().map(|g| g.abs()).fold(0.0, f64::max) + 1e-12, "{a} vs {b}");
    }
    assert!((fit.coefs.theta1 - t1).abs() < 1e-8);
    assert!((fit.coefs.theta2 - t2).abs() < 1e-11);
}

#[test]
fn recovers_weather_contribution_with_noise() {
    let noise = 0.005;
    let (ds, wd, gamma, t1, t2) = spline_truth(noise);
    let fit = fit_weather_model(&ds, &wd, Trend::Linear).unwrap();
    let (lo, hi) = ds.window();
    let contrib = |g: &[f64], a: f64, b: f64, t: i32| {
        let e = wd.transformed(t).unwrap();
        let p = wd.precip().get(t).unwrap();
        g.iter().zip(e).map(|(x, y)| x * y).sum::<f64>() + a * p + b * p * p
    };
    let diff: Vec<f64> = (lo..=hi)
        .map(|t| contrib(&fit.coefs.gamma, fit.coefs.theta1, fit.coefs.theta2, t) - contrib(&gamma, t1, t2, t))
        .collect();
    let m = diff.iter().sum::<f64>() / diff.len() as f64;
    let rms = (diff.iter().map(|d| (d - m).powi(2)).sum::<f64>() / diff.len() as f64).sqrt();
    assert!(rms < noise, "{rms}");
}

#[test]
fn constant_shift_only_moves_intercept() {
    let (ds, wd, _, _, _) = spline_truth(0.01);
    let shifted = Dataset::new(
        ds.tfp().map(|a| a * 1.5f64).unwrap(),
        ds.rd().clone(),
        ds.exposure().clone(),
        ds.precip().clone(),
        BTreeMap::new(),
        None,
        ds.lags(),
    )
    .unwrap();
    let a = fit_weather_model(&ds, &wd, Trend::Linear).unwrap();
    let b = fit_weather_model(&shifted, &wd, Trend::Linear).unwrap();
    assert!((b.beta0() - a.beta0() - 1.5f64.ln()).abs() < 1e-9);
    for (x, y) in a.coef.iter().zip(&b.coef).skip(1) {
        assert!((x - y).abs() < 1e-9 * (1.0 + x.abs()));
    }
}

#[test]
fn hamilton_fits_linear_log_tfp_exactly() {
    let (ds, wd, _, _, _) = spline_truth(0.0);
    let (lo, hi) = ds.window();
    let lin = AnnualSeries::new("tfp", lo, (lo..=hi).map(|t| (0.5 + 0.02 * (t - lo) as f64).exp()).collect()).unwrap();
    let ds = Dataset::new(lin, ds.rd().clone(), ds.exposure().clone(), ds.precip().clone(), BTreeMap::new(), None, ds.lags())
        .unwrap();
    let fit = fit_weather_model_with(&ds, &wd, Trend::HAMILTON, RankPolicy::MinNorm).unwrap();
    let rmax = fit.residuals.values().iter().fold(0.0f64, |m, r| m.max(r.abs()));
    assert!(rmax < 1e-8, "{rmax}");
    assert_eq!(fit.window.0, lo + 4);
}

#[test]
fn response_curve_is_marginal_effect_of_one_hour() {
    let (ds, wd, _, _, _) = spline_truth(0.01);
    let fit = fit_weather_model(&ds, &wd, Trend::Linear).unwrap();
    let base = wd.coding.code_row(ds.exposure().year(ds.window().0).unwrap());
    let e0 = wd.basis.project(&base);
    for k in 0..base.len() {
        let mut bumped = base.clone();
        bumped[k] += 1.0;
        let e1 = wd.basis.project(&bumped);
        let d = fit.coefs.contribution(&e1, &e0, 700.0, 700.0);
        assert!((d - fit.response_curve[k]).abs() < 1e-12);
    }
}

#[test]
fn zero_change_has_zero_sensitivity() {
    let (ds, wd, _, _, _) = spline_truth(0.01);
    let fit = fit_weather_model(&ds, &wd, Trend::Linear).unwrap();
    let (lo, hi) = ds.window();
    let clim = Climatology::over(ds.exposure(), ds.precip(), lo, hi).unwrap();
    for change in [UniformChange::Temperature(0), UniformChange::Precip(0.0)] {
        let s = uniform_sensitivity(&fit.coefs, &fit.coding, &fit.basis, &clim, change).unwrap();
        assert_eq!(s.log_points, 0.0);
        assert_eq!(s.percent, 0.0);
    }
}

#[test]
fn heat_harm_gives_negative_warming_sensitivity() {
    let cfg = SynthConfig { sigma: 0.002, ..Default::default() };
    let s = synth::generate(&cfg).unwrap();
    let ds = s.dataset().unwrap();
    let wd = WeatherDesign::build(&ds, &WeatherOptions::default()).unwrap();
    let fit = fit_weather_model(&ds, &wd, Trend::Linear).unwrap();
    let (lo, hi) = ds.window();
    let clim = Climatology::over(ds.exposure(), ds.precip(), lo, hi).unwrap();
    let up = uniform_sensitivity(&fit.coefs, &fit.coding, &fit.basis, &clim, UniformChange::Temperature(3)).unwrap();
    assert!(up.log_points < 0.0, "{up:?}");
    assert!(uniform_sensitivity(&fit.coefs, &fit.coding, &fit.basis, &clim, UniformChange::Temperature(11)).is_err());
}

#[test]
fn season_search_covers_every_cell() {
    let s = synth::generate(&SynthConfig::default()).unwrap();
    let ds = s.dataset().unwrap();
    let cells = season_search(&ds, &VariableSet::ALL, Trend::HAMILTON, &WeatherOptions::default()).unwrap();
    assert_eq!(cells.len(), 144 * 3);
    for set in VariableSet::ALL {
        assert_eq!(cells.iter().filter(|c| c.set == set && c.best).count(), 1);
    }
    // calendar-year temperature+precip carries the generating process
    let full = cells
        .iter()
        .find(|c| c.season.is_calendar_year() && c.set == VariableSet::TempAndPrecip)
        .unwrap();
    assert!(*full.mse_reduction.as_ref().unwrap() > 0.0);
}
