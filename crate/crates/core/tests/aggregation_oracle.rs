use std::collections::BTreeMap;

use agrotrend_core::exposure::{
    aggregate_national, shift_histogram, top_bottom_code, DailyGrid, DayObs, DiurnalAnchors, SpatialWeights,
    CONSERVATION_RTOL,
};
use agrotrend_core::series::calendar_hours;
use chrono::{Datelike, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_grid(cells: usize, first_year: i32, years: i32, seed: u64) -> (DailyGrid, SpatialWeights) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let first = NaiveDate::from_ymd_opt(first_year, 1, 1).unwrap();
    let last = NaiveDate::from_ymd_opt(first_year + years - 1, 12, 31).unwrap();
    let n = (last - first).num_days() as usize + 1;
    let ids: Vec<String> = (0..cells).map(|i| format!("cell{i}")).collect();
    let obs = (0..cells)
        .map(|_| {
            (0..n)
                .map(|_| {
                    let tmin = rng.random_range(-35.0..35.0);
                    let tmax = tmin + rng.random_range(0.0..20.0);
                    DayObs { tmin, tmax, prcp: rng.random_range(0.0..30.0) }
                })
                .collect()
        })
        .collect();
    let raw: Vec<f64> = (0..cells).map(|_| rng.random_range(0.1..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let mut w: BTreeMap<String, f64> = ids.iter().cloned().zip(raw.iter().map(|r| r / total)).collect();
    let s: f64 = w.values().sum();
    *w.values_mut().next().unwrap() += 1.0 - s;
    (DailyGrid::new(ids, first, obs).unwrap(), SpatialWeights::new(w).unwrap())
}

fn oracle_temp(tmin: f64, tmax: f64, tnext: f64, tau: f64) -> f64 {
    use std::f64::consts::PI;
    if tau < 10.0 {
        tmin + (tmax - tmin) * (1.0 - (PI * tau / 10.0).cos()) / 2.0
    } else {
        tnext + (tmax - tnext) * (1.0 + (PI * (tau - 10.0) / 14.0).cos()) / 2.0
    }
}

#[test]
fn five_cells_two_years_match_double_loop() {
    let (grid, weights) = random_grid(5, 2003, 2, 11);
    let nat = aggregate_national(&grid, &weights, &DiurnalAnchors::default()).unwrap();

    let mut hours = vec![vec![0.0; 80]; 2];
    let mut precip = [0.0; 2];
    for (c, cell) in grid.cells().iter().enumerate() {
        let w = weights.get(cell);
        let obs = grid.cell_obs(c);
        for (d, o) in obs.iter().enumerate() {
            let y = (grid.date(d).year() - 2003) as usize;
            let tnext = obs.get(d + 1).map_or(o.tmin, |n| n.tmin);
            for step in 0..96 {
                let t = oracle_temp(o.tmin, o.tmax, tnext, (step as f64 + 0.5) * 0.25);
                let b = ((t.floor() + 30.0).max(0.0) as usize).min(79);
                hours[y][b] += 0.25 * w;
            }
            precip[y] += w * o.prcp;
        }
    }
    for y in 0..2 {
        for b in 0..80 {
            let got = nat.exposure.rows()[y][b];
            assert!((got - hours[y][b]).abs() <= 1e-9 * hours[y][b].max(1.0), "year {y} bin {b}");
        }
        assert!((nat.precip.values()[y] - precip[y]).abs() <= 1e-9 * precip[y]);
    }
}

#[test]
fn conservation_survives_shift_and_coding() {
    let (grid, weights) = random_grid(5, 2003, 2, 12);
    let nat = aggregate_national(&grid, &weights, &DiurnalAnchors::default()).unwrap();
    let check = |rows: &[Vec<f64>]| {
        for (i, r) in rows.iter().enumerate() {
            let want = calendar_hours(2003 + i as i32);
            let got: f64 = r.iter().sum();
            assert!((got - want).abs() <= CONSERVATION_RTOL * want, "{got} vs {want}");
        }
    };
    check(nat.exposure.rows());
    for delta in [-3, -1, 1, 4] {
        check(shift_histogram(&nat.exposure, delta).unwrap().rows());
    }
    let coded = top_bottom_code(&nat.exposure, 0.001).unwrap();
    check(coded.series.rows());
    check(coded.coding.apply(&shift_histogram(&nat.exposure, 2).unwrap()).unwrap().rows());
}

#[test]
fn aggregation_is_linear_in_weights() {
    let (grid, w1) = random_grid(4, 2001, 1, 13);
    let (_, w2) = random_grid(4, 2001, 1, 14);
    let a = 0.3;
    let mix = w1.blend(&w2, a).unwrap();
    let anchors = DiurnalAnchors::default();
    let n1 = aggregate_national(&grid, &w1, &anchors).unwrap();
    let n2 = aggregate_national(&grid, &w2, &anchors).unwrap();
    let nm = aggregate_national(&grid, &mix, &anchors).unwrap();
    for b in 0..80 {
        let want = a * n1.exposure.rows()[0][b] + (1.0 - a) * n2.exposure.rows()[0][b];
        assert!((nm.exposure.rows()[0][b] - want).abs() < 1e-9);
    }
}

#[test]
fn result_independent_of_thread_count() {
    let (grid, w) = random_grid(40, 2001, 1, 15);
    let anchors = DiurnalAnchors::default();
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let a = one.install(|| aggregate_national(&grid, &w, &anchors).unwrap());
    let b = four.install(|| aggregate_national(&grid, &w, &anchors).unwrap());
    assert_eq!(a.exposure, b.exposure);
    assert_eq!(a.precip, b.precip);
}

#[test]
fn partial_year_rejected() {
    let first = NaiveDate::from_ymd_opt(2001, 1, 1).unwrap();
    let obs = vec![vec![DayObs { tmin: 1.0, tmax: 2.0, prcp: 0.0 }; 100]];
    let grid = DailyGrid::new(vec!["a".into()], first, obs).unwrap();
    let w = SpatialWeights::new([("a".to_string(), 1.0)].into_iter().collect()).unwrap();
    assert!(aggregate_national(&grid, &w, &DiurnalAnchors::default()).is_err());
}
