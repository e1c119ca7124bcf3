//! Small numerical helpers: compensated sums, least squares and
//! Richardson-type extrapolation in 1/n.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Neumaier-compensated sum.
pub fn neumaier_sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// log(Σ exp(x_i)), ignoring −∞ entries.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + neumaier_sum(xs.iter().map(|&x| (x - m).exp())).ln()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LsqFit {
    pub coef: Vec<f64>,
    /// Standard errors of the coefficients; NaN without spare degrees of freedom.
    pub coef_se: Vec<f64>,
    pub residual_se: f64,
}

/// Ordinary least squares for y ≈ X c, X given by rows.
pub fn least_squares(rows: &[Vec<f64>], y: &[f64]) -> Result<LsqFit> {
    let n = rows.len();
    let p = rows.first().map_or(0, |r| r.len());
    if n < p || p == 0 || y.len() != n {
        return Err(Error::InsufficientData(format!("{n} points for {p} parameters")));
    }
    let x = DMatrix::from_fn(n, p, |i, j| rows[i][j]);
    let yv = DVector::from_column_slice(y);
    let svd = x.clone().svd(true, true);
    let coef = svd
        .solve(&yv, 1e-14)
        .map_err(|e| Error::Domain(format!("least squares failed: {e}")))?;
    let resid = &yv - &x * &coef;
    let dof = n - p;
    let (residual_se, coef_se) = if dof > 0 {
        let s2 = resid.dot(&resid) / dof as f64;
        let xtx = x.transpose() * &x;
        match xtx.try_inverse() {
            Some(inv) => (s2.sqrt(), (0..p).map(|i| (s2 * inv[(i, i)]).max(0.0).sqrt()).collect()),
            None => (s2.sqrt(), vec![f64::NAN; p]),
        }
    } else {
        (0.0, vec![f64::NAN; p])
    };
    Ok(LsqFit { coef: coef.iter().copied().collect(), coef_se, residual_se })
}

/// Fits y(n) ≈ a + b/n + c/n² + … (`order` inverse powers) and returns the
/// limit a with its regression standard error.
pub fn richardson_inverse(ns: &[f64], ys: &[f64], order: usize) -> Result<(f64, f64)> {
    let rows: Vec<Vec<f64>> = ns.iter().map(|&n| (0..=order).map(|j| n.powi(-(j as i32))).collect()).collect();
    let fit = least_squares(&rows, ys)?;
    Ok((fit.coef[0], fit.coef_se[0]))
}

/// Richardson limit with the order chosen from the data: the highest order
/// the points support (at most `max_order`), and an uncertainty combining
/// the regression error with the change from the next lower order.
pub fn extrapolate(ns: &[f64], ys: &[f64], max_order: usize) -> Result<Extrapolation> {
    if ns.is_empty() {
        return Err(Error::InsufficientData("no points to extrapolate".into()));
    }
    let order = max_order.min(ns.len().saturating_sub(1));
    let (value, reg) = richardson_inverse(ns, ys, order)?;
    let lower = if order > 0 { richardson_inverse(ns, ys, order - 1)?.0 } else { value };
    let reg = if reg.is_nan() { 0.0 } else { reg };
    let spread = ((value - lower).powi(2) + reg.powi(2)).sqrt();
    Ok(Extrapolation { value, spread, order, lower_order_value: lower })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extrapolation {
    pub value: f64,
    pub spread: f64,
    pub order: usize,
    pub lower_order_value: f64,
}
