//! Natural cubic spline bases.
//!
//! A basis with `df` columns uses `df + 1` knots. It is spanned by the
//! truncated-power construction
//!
//! ```text
//! N1 = 1, N2 = u, N(k+2) = d_k(u) - d_(m-1)(u),
//! d_k(u) = ((u - ξk)₊³ - (u - ξm)₊³) / (ξm - ξk)
//! ```
//!
//! (on knots rescaled to [0, 1]) and then rotated into the cardinal basis:
//! column `j` is the natural spline equal to one at knot `j + 1` and zero at
//! every other knot. The cardinal function of the first knot is dropped, so
//! every column vanishes at the lower boundary and the basis never contains
//! the constant function; that keeps it identifiable next to an intercept.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineBasis {
    knots: Vec<f64>,
    /// Evaluation points, one row of `matrix` each.
    centers: Vec<f64>,
    /// `centers.len() × df`
    #[serde(skip)]
    matrix: DMatrix<f64>,
    #[serde(skip)]
    cardinal: DMatrix<f64>,
}

impl SplineBasis {
    /// Basis on explicit knots (strictly increasing, at least three),
    /// evaluated at `centers`.
    pub fn with_knots(knots: Vec<f64>, centers: Vec<f64>) -> Result<Self> {
        if knots.len() < 3 {
            return Err(Error::InvalidArgument("a natural spline basis needs at least 3 knots".into()));
        }
        if knots.iter().any(|k| !k.is_finite()) || knots.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument(format!("knots must be strictly increasing: {knots:?}")));
        }
        let m = knots.len();
        let mut at_knots = DMatrix::zeros(m, m);
        for (r, k) in knots.iter().enumerate() {
            at_knots.set_row(r, &power_row(&knots, *k).transpose());
        }
        let cardinal = at_knots
            .try_inverse()
            .ok_or_else(|| Error::InvalidArgument("singular knot system".into()))?;
        let mut basis = Self { knots, centers: Vec::new(), matrix: DMatrix::zeros(0, m - 1), cardinal };
        basis.set_centers(centers);
        Ok(basis)
    }

    fn set_centers(&mut self, centers: Vec<f64>) {
        let df = self.df();
        let mut matrix = DMatrix::zeros(centers.len(), df);
        for (i, x) in centers.iter().enumerate() {
            let row = self.eval(*x);
            for j in 0..df {
                matrix[(i, j)] = row[j];
            }
        }
        self.centers = centers;
        self.matrix = matrix;
    }

    /// Rebuilds the cached matrices after deserialisation.
    pub fn rebuild(self) -> Result<Self> {
        Self::with_knots(self.knots, self.centers)
    }

    pub fn df(&self) -> usize {
        self.knots.len() - 1
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    /// `K × df` basis values at the evaluation points.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Basis values at an arbitrary point (linear beyond the boundary knots).
    pub fn eval(&self, x: f64) -> Vec<f64> {
        let n = power_row(&self.knots, x);
        let all = n.transpose() * &self.cardinal;
        all.iter().skip(1).copied().collect()
    }

    /// `Σ_k B[k, j] h[k]` for each column `j`.
    pub fn project(&self, hist: &[f64]) -> Vec<f64> {
        let df = self.df();
        let mut out = vec![0.0; df];
        for (k, h) in hist.iter().enumerate() {
            for (j, o) in out.iter_mut().enumerate() {
                *o += self.matrix[(k, j)] * h;
            }
        }
        out
    }

    /// `Σ_j coef[j] B[k, j]` for each evaluation point `k`.
    pub fn curve(&self, coef: &[f64]) -> Vec<f64> {
        (0..self.matrix.nrows())
            .map(|k| (0..self.df()).map(|j| self.matrix[(k, j)] * coef[j]).sum())
            .collect()
    }
}

/// Truncated-power natural spline functions at `x`, knots rescaled to [0, 1].
fn power_row(knots: &[f64], x: f64) -> DVector<f64> {
    let m = knots.len();
    let lo = knots[0];
    let span = knots[m - 1] - lo;
    let u = (x - lo) / span;
    let xi: Vec<f64> = knots.iter().map(|k| (k - lo) / span).collect();
    let cube = |v: f64| if v > 0.0 { v * v * v } else { 0.0 };
    let d = |k: usize| (cube(u - xi[k]) - cube(u - xi[m - 1])) / (xi[m - 1] - xi[k]);
    let mut row = DVector::zeros(m);
    row[0] = 1.0;
    row[1] = u;
    let last = d(m - 2);
    for k in 0..m - 2 {
        row[k + 2] = d(k) - last;
    }
    row
}

/// Knots at the first and last center plus `df - 1` interior knots at equally
/// spaced quantiles of the distribution that puts `mass[k]` uniformly on
/// `[center_k - 0.5, center_k + 0.5]`.
pub fn quantile_knots(centers: &[f64], mass: &[f64], df: usize) -> Result<Vec<f64>> {
    if df < 2 {
        return Err(Error::InvalidArgument(format!("spline df {df} < 2")));
    }
    let distinct = {
        let mut c = centers.to_vec();
        c.sort_by(f64::total_cmp);
        c.dedup();
        c.len()
    };
    if distinct < df + 2 {
        return Err(Error::InvalidArgument(format!(
            "{distinct} distinct bin centers, need at least {} for {df} degrees of freedom",
            df + 2
        )));
    }
    let lo = centers[0];
    let hi = centers[centers.len() - 1];
    let total: f64 = mass.iter().sum();
    let mut knots = vec![lo];
    if total > 0.0 {
        for j in 1..df {
            let target = total * j as f64 / df as f64;
            let mut cum = 0.0;
            let mut q = hi;
            for (c, m) in centers.iter().zip(mass) {
                if cum + m >= target && *m > 0.0 {
                    q = c - 0.5 + (target - cum) / m;
                    break;
                }
                cum += m;
            }
            knots.push(q);
        }
    }
    knots.push(hi);
    let ok = knots.len() == df + 1 && knots.windows(2).all(|w| w[1] > w[0]);
    if !ok {
        log::warn!("exposure quantile knots collapse; using evenly spaced interior knots");
        knots = (0..=df).map(|j| lo + (hi - lo) * j as f64 / df as f64).collect();
    }
    Ok(knots)
}

/// Natural cubic spline basis with `df` columns at `centers`, knots placed by
/// [`quantile_knots`] (uniform mass when `mass` is `None`).
pub fn spline_basis(centers: &[f64], df: usize, mass: Option<&[f64]>) -> Result<SplineBasis> {
    let uniform;
    let mass = match mass {
        Some(m) => m,
        None => {
            uniform = vec![1.0; centers.len()];
            &uniform
        }
    };
    let knots = quantile_knots(centers, mass, df)?;
    SplineBasis::with_knots(knots, centers.to_vec())
}

/// Least-squares natural-spline smoother with an intercept and `df` basis
/// columns, knots at quantiles of `x`. Returns fitted values at `x`.
pub fn smooth(x: &[f64], y: &[f64], df: usize) -> Result<Vec<f64>> {
    let basis = smoother_basis(x, df)?;
    smooth_with(&basis, y)
}

/// The basis used by [`smooth`], reusable across many series on the same `x`.
pub fn smoother_basis(x: &[f64], df: usize) -> Result<SmootherBasis> {
    let n = x.len();
    if n < df + 2 {
        return Err(Error::InsufficientSample { n, p: df + 1, needed: df + 2 });
    }
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q = |p: f64| crate::stats::quantile_sorted(&sorted, p);
    let knots: Vec<f64> = (0..=df).map(|j| q(j as f64 / df as f64)).collect();
    let b = SplineBasis::with_knots(knots, x.to_vec())?;
    let mut design = DMatrix::zeros(n, df + 1);
    for i in 0..n {
        design[(i, 0)] = 1.0;
        for j in 0..df {
            design[(i, j + 1)] = b.matrix()[(i, j)];
        }
    }
    // hat matrix H = X (XᵀX)⁻¹ Xᵀ, so each smooth is one mat-vec product
    let xtx = design.transpose() * &design;
    let inv = xtx
        .try_inverse()
        .ok_or_else(|| Error::RankDeficient { columns: vec!["smoother basis".into()] })?;
    let hat = &design * inv * design.transpose();
    Ok(SmootherBasis { hat })
}

pub struct SmootherBasis {
    hat: DMatrix<f64>,
}

pub fn smooth_with(b: &SmootherBasis, y: &[f64]) -> Result<Vec<f64>> {
    if y.len() != b.hat.ncols() {
        return Err(Error::InvalidArgument("smoother length mismatch".into()));
    }
    let v = &b.hat * DVector::from_column_slice(y);
    Ok(v.iter().copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn columns_vanish_at_lower_boundary_and_are_cardinal() {
        let knots = vec![-10.0, 0.0, 8.0, 15.0, 22.0, 35.0];
        let b = SplineBasis::with_knots(knots.clone(), knots.clone()).unwrap();
        for (r, _) in knots.iter().enumerate() {
            for j in 0..5 {
                let want = if r == j + 1 { 1.0 } else { 0.0 };
                assert!((b.matrix()[(r, j)] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dimensions_and_rank_for_80_bins() {
        let centers: Vec<f64> = (0..80).map(|k| -29.5 + k as f64).collect();
        let b = spline_basis(&centers, 5, None).unwrap();
        assert_eq!(b.matrix().shape(), (80, 5));
        assert_eq!(b.matrix().clone().svd(false, false).rank(1e-10), 5);
    }

    #[test]
    fn too_few_centers() {
        let c: Vec<f64> = (0..6).map(f64::from).collect();
        assert!(spline_basis(&c, 5, None).is_err());
        assert!(spline_basis(&[0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0], 5, None).is_ok());
    }

    #[test]
    fn quantile_knots_follow_mass() {
        let centers: Vec<f64> = (0..20).map(|k| k as f64 + 0.5).collect();
        let mut mass = vec![0.0; 20];
        for m in &mut mass[10..20] {
            *m = 1.0;
        }
        mass[0] = 0.01;
        let k = quantile_knots(&centers, &mass, 2).unwrap();
        assert_eq!(k.len(), 3);
        assert!((k[1] - 15.0).abs() < 0.01, "{k:?}");
    }

    #[test]
    fn smoother_reproduces_linear_data() {
        let x: Vec<f64> = (1950..=2100).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| 0.3 - 0.002 * (v - 1950.0)).collect();
        let s = smooth(&x, &y, 3).unwrap();
        for (a, b) in s.iter().zip(&y) {
            assert!((a - b).abs() < 1e-10);
        }
    }
}
