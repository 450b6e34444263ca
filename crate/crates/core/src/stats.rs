//! Small descriptive statistics used for bootstrap and ensemble summaries.

use serde::{Deserialize, Serialize};

/// Mean taken about the first value, so identical inputs come back unchanged.
pub fn mean(xs: &[f64]) -> f64 {
    let Some(&x0) = xs.first() else { return f64::NAN };
    x0 + xs.iter().map(|x| x - x0).sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n − 1 denominator); zero for a single value.
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Linear-interpolation quantile of already sorted data (R type 7).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn quantile(xs: &[f64], q: f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, q)
}

/// Mean with a central 95% percentile interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mu: f64,
    pub p2_5: f64,
    pub p97_5: f64,
}

impl Summary {
    pub fn of(xs: &[f64]) -> Self {
        let mut v = xs.to_vec();
        v.sort_by(f64::total_cmp);
        let mu = mean(&v);
        let lo = quantile_sorted(&v, 0.025);
        let hi = quantile_sorted(&v, 0.975);
        // keep the ordering invariant when all draws coincide up to rounding
        Self { mu: mu.clamp(lo, hi), p2_5: lo, p97_5: hi }
    }

    pub fn map(self, f: impl Fn(f64) -> f64) -> Self {
        Self { mu: f(self.mu), p2_5: f(self.p2_5), p97_5: f(self.p97_5) }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles_interpolate() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile(&v, 0.5), 3.0);
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 1.0), 5.0);
        assert!((quantile(&v, 0.1) - 1.4).abs() < 1e-12);
    }

    #[test]
    fn point_mass_summary() {
        let s = Summary::of(&[0.3; 7]);
        assert_eq!((s.mu, s.p2_5, s.p97_5), (0.3, 0.3, 0.3));
        assert_eq!(std_dev(&[0.3; 7]), 0.0);
    }
}
