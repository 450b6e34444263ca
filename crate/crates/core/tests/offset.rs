use agrotrend_core::offset::*;
use agrotrend_core::project::{ImpactDistribution, ReportScale};
use agrotrend_core::series::AnnualSeries;
use agrotrend_core::stock::{build_stock, convolve, gamma_lag_weights, GammaLagSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn spec() -> GammaLagSpec {
    GammaLagSpec::new(0.75, 0.90, 50).unwrap()
}

/// R&D rising 2% a year through 2020, from 1900.
fn rd_history() -> AnnualSeries {
    AnnualSeries::new("rd", 1900, (0..121).map(|i| 0.5 * 1.02f64.powi(i)).collect()).unwrap()
}

fn dist(d: Vec<Vec<f64>>, start_year: i32) -> ImpactDistribution {
    let n = d.len();
    ImpactDistribution {
        label: "test".into(),
        ssp: None,
        start_year,
        pairings: (0..n).map(|k| (k, 0)).collect(),
        d: d.clone(),
        gcms: vec!["g".into()],
        by_member: vec![d],
    }
}

#[test]
fn worked_offset_example() {
    // log(0.913) rounded to four places
    let d = -0.0910;
    let o = offset_stock(&dist(vec![vec![d; 3]], 2049), &[0.503], None).unwrap();
    let v = o.raw[0][1];
    assert!((v - 0.1809).abs() < 5e-5, "{v}");
    let pct = 100.0 * v.exp_m1();
    assert!((pct - 19.8).abs() < 0.05, "{pct}");
    assert!((monetize_value(5.0, v) - 0.992).abs() < 5e-4);
}

#[test]
fn zero_impacts_zero_offset() {
    let o = offset_stock(&dist(vec![vec![0.0; 151]; 4], 1950), &[0.5; 4], Some(3)).unwrap();
    assert!(o.smoothed.iter().flatten().all(|v| v.abs() < 1e-15));
    assert!(o.relative_summary().iter().all(|(_, s)| s.mu.abs() < 1e-12));
}

#[test]
fn nonpositive_beta_draws_are_excluded() {
    let o = offset_stock(&dist(vec![vec![-0.1; 10]; 3], 2000), &[0.5, -0.2, 0.0], None).unwrap();
    assert_eq!(o.excluded, 2);
    assert_eq!(o.draw_ids, vec![0]);
    assert!(offset_stock(&dist(vec![vec![-0.1; 10]], 2000), &[-1.0], None).is_err());
}

#[test]
fn monetization_sign_follows_offset() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let d: Vec<Vec<f64>> = (0..20).map(|_| (0..10).map(|_| rng.random_range(-0.2..0.2)).collect()).collect();
    let o = offset_stock(&dist(d, 2000), &[0.4; 20], None).unwrap();
    let scf = AnnualSeries::new("s", 2000, vec![3.0; 10]).unwrap();
    let m = monetize(&o, &scf).unwrap();
    for (r, mr) in o.smoothed.iter().zip(&m) {
        for (a, b) in r.iter().zip(mr) {
            assert_eq!(*a > 0.0, *b > 0.0);
        }
    }
}

#[test]
fn cumulative_spending_closed_form() {
    let v = cumulative_spending(10.0, 2023, 5.0);
    assert!((v - 3.205).abs() < 1e-12, "{v}");
}

#[test]
fn counterfactual_converges_to_base_level() {
    let rd = rd_history();
    let scf = counterfactual_stock(&rd, &spec(), BASE_YEAR, 2100).unwrap();
    let base = rd.get(2020).unwrap();
    assert!((scf.get(2100).unwrap() - base).abs() < 1e-12 * base);
    assert!((scf.get(2069).unwrap() - base).abs() < 1e-12 * base);
    // history below the base level: monotone rise toward it
    let tail = scf.window(2020, 2070).unwrap();
    assert!(tail.values().windows(2).all(|w| w[1] >= w[0] - 1e-15));
}

#[test]
fn counterfactual_impulse_matches_convolution() {
    let mut v = vec![0.0; 121];
    v[100] = 1.0;
    let rd = AnnualSeries::new("rd", 1900, v).unwrap();
    let s = counterfactual_stock(&rd, &spec(), BASE_YEAR, 2100).unwrap();
    let w = gamma_lag_weights(&spec());
    for t in 2000..=2049 {
        // the 2020 level is zero, so the spliced path adds nothing
        let want = w[(t - 2000) as usize];
        assert!((s.get(t).unwrap() - want).abs() < 1e-12);
    }
    let direct = convolve(&rd, &w).unwrap();
    for t in direct.years() {
        assert!((direct.get(t).unwrap() - s.get(t).unwrap()).abs() < 1e-12);
    }
}

#[test]
fn growth_round_trip() {
    let gp = GrowthProblem::new(&rd_history(), &spec(), BASE_YEAR).unwrap();
    for t in [2030, 2050, 2100] {
        let target = gp.gain(3.0, t);
        let g = gp.solve(target, t, GROWTH_BRACKET).unwrap().growth;
        assert!((g - 3.0).abs() < 1e-5, "{t}: {g}");
    }
}

#[test]
fn stock_gain_matches_full_convolution() {
    let rd = rd_history();
    let gp = GrowthProblem::new(&rd, &spec(), BASE_YEAR).unwrap();
    let path = growth_path(&rd, BASE_YEAR, 4.0, 2080).unwrap();
    let s = build_stock(&path, &spec()).unwrap().series;
    assert!((gp.stock_at(4.0, 2080) - s.get(2080).unwrap()).abs() < 1e-12 * s.get(2080).unwrap());
}

#[test]
fn stock_monotone_in_growth() {
    let gp = GrowthProblem::new(&rd_history(), &spec(), BASE_YEAR).unwrap();
    for t in [2030, 2050, 2100] {
        let s: Vec<f64> = (0..=200).map(|i| gp.stock_at(i as f64 * 0.1, t)).collect();
        assert!(s.windows(2).all(|w| w[1] > w[0]), "{t}");
    }
}

#[test]
fn nearer_targets_need_faster_growth() {
    let gp = GrowthProblem::new(&rd_history(), &spec(), BASE_YEAR).unwrap();
    for target in [0.1, 1.0, 5.0, 20.0] {
        let g50 = gp.solve(target, 2050, GROWTH_BRACKET).unwrap().growth;
        let g100 = gp.solve(target, 2100, GROWTH_BRACKET).unwrap().growth;
        assert!(g50 > g100, "{target}: {g50} vs {g100}");
    }
}

#[test]
fn offset_stock_cancels_climate_in_simulation() {
    let rd = growth_path(&rd_history(), BASE_YEAR, 2.0, 2100).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let d: Vec<f64> = (0..151).map(|i| -0.001 * i as f64 + rng.random_range(-0.02..0.02)).collect();
    let impacts = AnnualSeries::new("d", 1950, d.clone()).unwrap();
    let beta1 = 0.503;
    let o = offset_stock(&dist(vec![d], 1950), &[beta1], None).unwrap();
    let shift = AnnualSeries::new("shift", 1950, o.raw[0].clone()).unwrap();
    let sim = |imp: Option<&AnnualSeries>, sh: Option<&AnnualSeries>| {
        simulate_tfp(&TfpSimulation {
            rd: &rd,
            spec: &spec(),
            beta0: 0.1,
            beta1,
            impacts: imp,
            stock_shift: sh,
            anchor: Some((2020, 1.7)),
            years: (2020, 2100),
        })
        .unwrap()
    };
    let clean = sim(None, None);
    let offset = sim(Some(&impacts), Some(&shift));
    for (a, b) in clean.values().iter().zip(offset.values()) {
        assert!((a.ln() - b.ln()).abs() < 1e-10);
    }
    let hurt = sim(Some(&impacts), None);
    let t = 2100 - 2020;
    assert!(hurt.values()[t] < clean.values()[t]);
}

fn no_climate(rd: &AnnualSeries) -> AnnualSeries {
    simulate_tfp(&TfpSimulation {
        rd,
        spec: &spec(),
        beta0: 0.0,
        beta1: 0.5,
        impacts: None,
        stock_shift: None,
        anchor: Some((2020, 1.0)),
        years: (2020, 2100),
    })
    .unwrap()
}

#[test]
fn constant_spending_flattens_tfp() {
    let flat = no_climate(&constant_path(&rd_history(), BASE_YEAR, 2100).unwrap());
    let v = flat.values();
    assert!((v[v.len() - 1] - v[v.len() - 20]).abs() < 1e-12);
    let grow = no_climate(&growth_path(&rd_history(), BASE_YEAR, 3.0, 2100).unwrap());
    assert!(grow.values().windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn horizon_beyond_scenario_is_an_error() {
    let rd = constant_path(&rd_history(), BASE_YEAR, 2100).unwrap();
    let short = AnnualSeries::new("d", 2000, vec![0.0; 10]).unwrap();
    let r = simulate_tfp(&TfpSimulation {
        rd: &rd,
        spec: &spec(),
        beta0: 0.0,
        beta1: 0.5,
        impacts: Some(&short),
        stock_shift: None,
        anchor: None,
        years: (2000, 2050),
    });
    assert!(r.is_err());
}

#[test]
fn percent_scale_convention() {
    assert!((ReportScale::Percent.apply(0.913f64.ln()) + 8.7).abs() < 1e-9);
    assert!((ReportScale::LogPoints.apply(-0.05) + 5.0).abs() < 1e-12);
}
