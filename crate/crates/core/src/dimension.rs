//! The exponent δ solving ρ(φ^δ) = 1 for the extension, the ν-dimension
//! value and the pressure-gap (amenability) flag.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::extension::ExtensionSpec;
use crate::harmonic::{decay_summary, sample_paths, DecaySummary};
use crate::oracles::oracle_for;
use crate::transfer::{spectral_radius, zcount_with_space, SpectralEstimate, StateSpace};

/// Spectral radius of the extension for the potential φ^h.
pub struct PressureEvaluator<'a> {
    ext: &'a ExtensionSpec,
    xi: Vec<usize>,
    n_max: usize,
    space: Option<Arc<StateSpace>>,
    pub evaluations: usize,
}

impl<'a> PressureEvaluator<'a> {
    pub fn new(ext: &'a ExtensionSpec, n_max: usize) -> Self {
        PressureEvaluator { ext, xi: ext.default_xi(), n_max, space: None, evaluations: 0 }
    }

    pub fn eval(&mut self, h: f64) -> Result<SpectralEstimate> {
        let powered = self.ext.with_potential(self.ext.potential.powered(h));
        let (table, space) = zcount_with_space(&powered, &self.xi, self.n_max, self.space.take())?;
        self.space = Some(space);
        self.evaluations += 1;
        let base = powered.potential.base_pressure(&powered.shift)?.rho_base;
        spectral_radius(&table, Some(base))
    }
}

/// ρ̂ of the extension with potential φ^h at truncation N.
pub fn extended_pressure(ext: &ExtensionSpec, h: f64, n_max: usize) -> Result<SpectralEstimate> {
    PressureEvaluator::new(ext, n_max).eval(h)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DimensionReport {
    pub delta: f64,
    /// δ ± (bisection tolerance + propagated pressure error).
    pub delta_interval: (f64, f64),
    /// Pressures at δ − tol and δ + tol; they straddle 1.
    pub certificate: (f64, f64),
    pub pressure_at_delta: f64,
    pub pressure_stderr: f64,
    /// exp of the base pressure of φ^δ.
    pub rho_delta: f64,
    /// ∫ log φ dμ_δ for the equilibrium state μ_δ of φ^δ.
    pub lyapunov: f64,
    /// δ − log(ρ_δ)/lyapunov.
    pub dim_raw: f64,
    /// Reported value: δ when the gap is consistent with zero, else dim_raw.
    pub dim_value: f64,
    pub dim_stderr: f64,
    /// log ρ_δ − log ρ̂_ext(δ).
    pub amenability_gap: f64,
    pub gap_stderr: f64,
    /// None when the extension is not symmetric (no Kesten-type criterion).
    pub amenable_consistent: Option<bool>,
    /// dim_raw − δ exceeds three propagated errors.
    pub dim_exceeds_delta: bool,
    pub bracket: (f64, f64),
    pub tol: f64,
    pub n_max: usize,
    pub evaluations: usize,
}

/// Bisection for ρ̂_ext(φ^δ) = 1 inside `bracket`, expanding the upper end
/// by doubling when needed.
pub fn find_delta(ext: &ExtensionSpec, bracket: (f64, f64), tol: f64, n_max: usize) -> Result<DimensionReport> {
    if !(tol > 0.0) || !(bracket.0 < bracket.1) {
        return Err(Error::Input("need tol > 0 and h_lo < h_hi".into()));
    }
    let (min, max) = ext.potential.value_range();
    if min <= 0.0 || max >= 1.0 {
        return Err(Error::Domain("φ must take values in (0, 1) for the pressure to decrease in h".into()));
    }
    let mut ev = PressureEvaluator::new(ext, n_max);
    let (mut lo, mut hi) = bracket;
    let p_lo = ev.eval(lo)?.rho_hat;
    let mut p_hi = ev.eval(hi)?.rho_hat;
    let mut expansions = 0;
    while p_hi >= 1.0 && expansions < 6 {
        hi *= 2.0;
        p_hi = ev.eval(hi)?.rho_hat;
        expansions += 1;
    }
    if !(p_lo > 1.0 && p_hi < 1.0) {
        return Err(Error::Domain(format!(
            "pressure does not cross 1 on [{lo}, {hi}]: ρ̂({lo}) = {p_lo}, ρ̂({hi}) = {p_hi}"
        )));
    }
    let used_bracket = (lo, hi);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if ev.eval(mid)?.rho_hat > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let delta = 0.5 * (lo + hi);
    let at = ev.eval(delta)?;
    let below = ev.eval(delta - tol)?.rho_hat;
    let above = ev.eval(delta + tol)?.rho_hat;
    let slope = ((above - below) / (2.0 * tol)).abs().max(f64::MIN_POSITIVE);
    let delta_err = tol + at.stderr / slope;

    let powered = ext.potential.powered(delta);
    let gibbs = powered.base_pressure(&ext.shift)?;
    let rho_delta = gibbs.rho_base;
    let m = ext.potential.depth();
    let lyapunov: f64 = ext.shift.words_of_length(m).map(|w| gibbs.gibbs_mass(&ext.shift, &w) * ext.potential.phi(&w).ln()).sum();
    let dim_raw = delta - rho_delta.ln() / lyapunov;
    let gap = rho_delta.ln() - at.rho_hat.ln();
    let gap_stderr = at.stderr / at.rho_hat + (at.rho_hat - 1.0).abs() + slope * tol;
    // d(dim_raw)/dδ ≈ 1 − (d log ρ_δ/dδ)/λ = 1 − λ_δ/λ ≈ 0 for constant φ; use the gap error as the dominant term
    let dim_stderr = (delta_err.powi(2) + (gap_stderr / lyapunov).powi(2)).sqrt();
    let symmetric = ext.check_symmetric().map(|r| r.is_symmetric_extension).unwrap_or(false);
    let amenable_consistent = symmetric.then_some(gap < 3.0 * gap_stderr);
    let dim_value = if amenable_consistent == Some(true) { delta } else { dim_raw };
    Ok(DimensionReport {
        delta,
        delta_interval: (delta - delta_err, delta + delta_err),
        certificate: (below, above),
        pressure_at_delta: at.rho_hat,
        pressure_stderr: at.stderr,
        rho_delta,
        lyapunov,
        dim_raw,
        dim_value,
        dim_stderr,
        amenability_gap: gap,
        gap_stderr,
        amenable_consistent,
        dim_exceeds_delta: dim_raw - delta > 3.0 * dim_stderr,
        bracket: used_bracket,
        tol,
        n_max,
        evaluations: ev.evaluations,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum DecayCheck {
    NotApplicable(String),
    Checked { summary: DecaySummary, passes: bool },
}

/// Along μ_δ-paths, log(ρ_δ^n ν_δ(X_{ψ_n(x)})) should fall by a factor ≥ 10
/// between n = 4 and n = len on at least 95% of paths. Needs closed-form ν_δ.
pub fn decay_check(ext: &ExtensionSpec, report: &DimensionReport, len: usize, count: usize, seed: u64) -> Result<DecayCheck> {
    if report.amenable_consistent == Some(true) {
        return Ok(DecayCheck::NotApplicable("pressure gap consistent with zero".into()));
    }
    if (report.rho_delta - 1.0).abs() < 1e-12 {
        return Ok(DecayCheck::NotApplicable("ρ_δ = 1".into()));
    }
    if len <= 4 {
        return Err(Error::Input("paths must be longer than 4".into()));
    }
    let at_delta = ext.with_potential(ext.potential.powered(report.delta));
    let Some(oracle) = oracle_for(&at_delta) else {
        return Ok(DecayCheck::NotApplicable("no closed-form measure for this extension".into()));
    };
    let gibbs = at_delta.potential.base_pressure(&at_delta.shift)?;
    let log_rho_delta = report.rho_delta.ln();
    let obs = |n: usize, g: &crate::group::GroupElement| {
        oracle.nu_group(g).ok().filter(|v| *v > 0.0).map(|v| v.ln() + n as f64 * log_rho_delta)
    };
    let paths = sample_paths(&at_delta, &gibbs, len, count, seed, &obs);
    let summary = decay_summary(&paths, 4, len, 10.0);
    let passes = summary.fraction() >= 0.95;
    Ok(DecayCheck::Checked { summary, passes })
}
