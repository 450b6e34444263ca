use agrotrend_core::spline::{spline_basis, SplineBasis};
use proptest::prelude::*;

/// Natural cubic interpolant through `(x_i, y_i)`: second derivatives from the
/// tridiagonal system with zero end conditions, solved by the Thomas algorithm.
fn natural_interpolant(x: &[f64], y: &[f64]) -> impl Fn(f64) -> f64 {
    let n = x.len();
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let mut m = vec![0.0; n];
    if n > 2 {
        let k = n - 2;
        let mut sub = vec![0.0; k];
        let mut diag = vec![0.0; k];
        let mut sup = vec![0.0; k];
        let mut rhs = vec![0.0; k];
        for i in 0..k {
            sub[i] = h[i];
            diag[i] = 2.0 * (h[i] + h[i + 1]);
            sup[i] = h[i + 1];
            rhs[i] = 6.0 * ((y[i + 2] - y[i + 1]) / h[i + 1] - (y[i + 1] - y[i]) / h[i]);
        }
        for i in 1..k {
            let w = sub[i] / diag[i - 1];
            diag[i] -= w * sup[i - 1];
            rhs[i] -= w * rhs[i - 1];
        }
        let mut sol = vec![0.0; k];
        sol[k - 1] = rhs[k - 1] / diag[k - 1];
        for i in (0..k - 1).rev() {
            sol[i] = (rhs[i] - sup[i] * sol[i + 1]) / diag[i];
        }
        m[1..n - 1].copy_from_slice(&sol);
    }
    let (x, y) = (x.to_vec(), y.to_vec());
    move |t: f64| {
        let n = x.len();
        if t <= x[0] {
            let s = (y[1] - y[0]) / h[0] - h[0] * (2.0 * m[0] + m[1]) / 6.0;
            return y[0] + s * (t - x[0]);
        }
        if t >= x[n - 1] {
            let i = n - 2;
            let s = (y[i + 1] - y[i]) / h[i] + h[i] * (m[i] + 2.0 * m[i + 1]) / 6.0;
            return y[n - 1] + s * (t - x[n - 1]);
        }
        let i = (0..n - 1).find(|&i| t <= x[i + 1]).unwrap();
        let (a, b) = (x[i + 1] - t, t - x[i]);
        m[i] * a.powi(3) / (6.0 * h[i])
            + m[i + 1] * b.powi(3) / (6.0 * h[i])
            + (y[i] / h[i] - m[i] * h[i] / 6.0) * a
            + (y[i + 1] / h[i] - m[i + 1] * h[i] / 6.0) * b
    }
}

fn combo(b: &SplineBasis, coef: &[f64], x: f64) -> f64 {
    b.eval(x).iter().zip(coef).map(|(v, c)| v * c).sum()
}

#[test]
fn matches_tridiagonal_interpolant() {
    let knots = vec![-5.0, 3.0, 11.0, 18.5, 26.0, 39.0];
    let b = SplineBasis::with_knots(knots.clone(), vec![]).unwrap();
    let coef = [0.7, -1.3, 0.2, 2.5, -0.4];
    let mut y = vec![0.0];
    y.extend_from_slice(&coef);
    let oracle = natural_interpolant(&knots, &y);
    for i in 0..=500 {
        let x = -12.0 + 60.0 * i as f64 / 500.0;
        let got = combo(&b, &coef, x);
        assert!((got - oracle(x)).abs() < 1e-9, "x={x}: {got} vs {}", oracle(x));
    }
}

#[test]
fn each_column_is_a_cardinal_natural_spline() {
    let knots = vec![0.0, 1.0, 2.5, 6.0];
    let b = SplineBasis::with_knots(knots.clone(), vec![]).unwrap();
    for j in 0..3 {
        let mut y = vec![0.0; 4];
        y[j + 1] = 1.0;
        let oracle = natural_interpolant(&knots, &y);
        for i in 0..=80 {
            let x = -2.0 + 10.0 * i as f64 / 80.0;
            assert!((b.eval(x)[j] - oracle(x)).abs() < 1e-9);
        }
    }
}

#[test]
fn linear_beyond_boundary_knots() {
    let centers: Vec<f64> = (-12..=40).map(|c| c as f64 + 0.5).collect();
    let mass: Vec<f64> = centers.iter().map(|c| (-(c - 15.0f64).powi(2) / 80.0).exp()).collect();
    let b = spline_basis(&centers, 5, Some(&mass)).unwrap();
    let (lo, hi) = (b.knots()[0], *b.knots().last().unwrap());
    for j in 0..5 {
        for side in [(lo - 30.0, 1.0), (hi, 1.0)] {
            for i in 0..30 {
                let x = side.0 + i as f64;
                let f = |t: f64| b.eval(t)[j];
                let d2 = f(x) - 2.0 * f(x + 0.5) + f(x + 1.0);
                assert!(d2.abs() < 1e-9, "column {j} at {x}: {d2}");
            }
        }
    }
}

proptest! {
    #[test]
    fn random_knots_interpolate(
        gaps in proptest::collection::vec(0.5f64..10.0, 3..8),
        start in -30.0f64..10.0,
        seed_vals in proptest::collection::vec(-3.0f64..3.0, 8),
    ) {
        let mut knots = vec![start];
        for g in &gaps {
            knots.push(knots.last().unwrap() + g);
        }
        let b = SplineBasis::with_knots(knots.clone(), vec![]).unwrap();
        let coef: Vec<f64> = seed_vals[..b.df()].to_vec();
        let mut y = vec![0.0];
        y.extend_from_slice(&coef);
        let oracle = natural_interpolant(&knots, &y);
        let span = knots.last().unwrap() - knots[0];
        let scale = 1.0 + coef.iter().map(|c| c.abs()).sum::<f64>();
        for i in 0..=60 {
            let x = knots[0] - 0.2 * span + 1.4 * span * i as f64 / 60.0;
            prop_assert!((combo(&b, &coef, x) - oracle(x)).abs() < 1e-9 * scale);
        }
    }
}
