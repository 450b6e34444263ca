//! Least squares on small dense designs.
//!
//! Columns are scaled to unit norm before a thin SVD; a design is rank
//! deficient when its smallest scaled singular value falls below
//! [`RANK_RTOL`] times the largest.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative singular-value threshold for rank deficiency.
pub const RANK_RTOL: f64 = 1e-10;

/// Named regression design with a response and the calendar year of each row.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub names: Vec<String>,
    pub years: Vec<i32>,
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
}

impl Design {
    pub fn nrows(&self) -> usize {
        self.x.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.x.ncols()
    }

    /// Rows `idx` in the given order (repeats allowed).
    pub fn select_rows(&self, idx: &[usize]) -> Design {
        Design {
            names: self.names.clone(),
            years: idx.iter().map(|&i| self.years[i]).collect(),
            x: self.x.select_rows(idx),
            y: self.y.select_rows(idx),
        }
    }

    /// Keeps the columns for which `keep` returns true.
    pub fn retain_columns(&self, keep: impl Fn(&str) -> bool) -> Design {
        let cols: Vec<usize> = (0..self.ncols()).filter(|&j| keep(&self.names[j])).collect();
        Design {
            names: cols.iter().map(|&j| self.names[j].clone()).collect(),
            years: self.years.clone(),
            x: self.x.select_columns(&cols),
            y: self.y.clone(),
        }
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

/// What to do when the design is rank deficient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RankPolicy {
    /// Fail with the offending columns.
    #[default]
    Error,
    /// Return the minimum-norm solution.
    MinNorm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    pub coef: Vec<f64>,
    pub residuals: Vec<f64>,
    pub rank: usize,
    /// Diagonal of the hat matrix.
    pub leverage: Vec<f64>,
}

impl OlsFit {
    pub fn rss(&self) -> f64 {
        self.residuals.iter().map(|r| r * r).sum()
    }
}

pub fn fit(design: &Design, policy: RankPolicy) -> Result<OlsFit> {
    fit_matrix(&design.x, &design.y, &design.names, policy)
}

pub fn fit_matrix(x: &DMatrix<f64>, y: &DVector<f64>, names: &[String], policy: RankPolicy) -> Result<OlsFit> {
    let (n, p) = x.shape();
    if y.len() != n || names.len() != p {
        return Err(Error::InvalidArgument(format!(
            "design {n}x{p} with {} responses and {} names",
            y.len(),
            names.len()
        )));
    }
    if n < p || p == 0 {
        return Err(Error::InsufficientSample { n, p, needed: p.max(1) });
    }
    let scales: Vec<f64> = (0..p).map(|j| x.column(j).norm()).collect();
    let zero_cols: Vec<String> = (0..p).filter(|&j| scales[j] == 0.0).map(|j| names[j].clone()).collect();
    if !zero_cols.is_empty() && policy == RankPolicy::Error {
        return Err(Error::RankDeficient { columns: zero_cols });
    }
    let mut xs = x.clone();
    for (j, s) in scales.iter().enumerate() {
        if *s > 0.0 {
            xs.column_mut(j).scale_mut(1.0 / s);
        }
    }
    let svd = xs.svd(true, true);
    let u = svd.u.as_ref().expect("u requested");
    let vt = svd.v_t.as_ref().expect("v_t requested");
    let sv = &svd.singular_values;
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let keep: Vec<bool> = sv.iter().map(|s| *s > RANK_RTOL * smax && smax > 0.0).collect();
    let rank = keep.iter().filter(|k| **k).count();
    if rank < p && policy == RankPolicy::Error {
        let mut offending = Vec::new();
        for (k, kept) in keep.iter().enumerate() {
            if *kept {
                continue;
            }
            for j in 0..p {
                if vt[(k, j)].abs() > 1e-3 && !offending.contains(&j) {
                    offending.push(j);
                }
            }
        }
        offending.sort_unstable();
        return Err(Error::RankDeficient { columns: offending.into_iter().map(|j| names[j].clone()).collect() });
    }
    let uty = u.transpose() * y;
    let mut z = DVector::<f64>::zeros(p);
    for k in 0..sv.len() {
        if keep[k] {
            let c = uty[k] / sv[k];
            for j in 0..p {
                z[j] += vt[(k, j)] * c;
            }
        }
    }
    let coef: Vec<f64> = (0..p).map(|j| if scales[j] > 0.0 { z[j] / scales[j] } else { 0.0 }).collect();
    let fitted = x * DVector::from_column_slice(&coef);
    let residuals: Vec<f64> = (0..n).map(|i| y[i] - fitted[i]).collect();
    let leverage = (0..n)
        .map(|i| (0..sv.len()).filter(|&k| keep[k]).map(|k| u[(i, k)] * u[(i, k)]).sum())
        .collect();
    Ok(OlsFit { coef, residuals, rank, leverage })
}

/// Leave-one-row-out mean squared prediction error, via the exact
/// deleted-residual identity `e_i / (1 - h_ii)`.
pub fn loo_mse(design: &Design) -> Result<f64> {
    let f = fit(design, RankPolicy::Error)?;
    let mut sum = 0.0;
    for (e, h) in f.residuals.iter().zip(&f.leverage) {
        let d = 1.0 - h;
        if d < 1e-10 {
            return Err(Error::RankDeficient { columns: vec!["<leave-one-out fold>".into()] });
        }
        sum += (e / d).powi(2);
    }
    Ok(sum / design.nrows() as f64)
}
