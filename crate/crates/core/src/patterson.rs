//! Patterson weights b_n, the normalized series measures m_s, the limiting
//! conformal measure ν̂ with error bars, conformality checks and the
//! conservative/dissipative classifier.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::extension::{ExtensionSpec, XCylinder};
use crate::fit::{extrapolate, least_squares, log_sum_exp, neumaier_sum};
use crate::group::GroupElement;
use crate::oracles::Oracle;
use crate::shift::Word;
use crate::transfer::{reach_of, spectral_radius, zcount, Engine, PartitionTable, SpectralEstimate};

/// λ(k) for k = 1..N (index k − 1) and b_n = Π_{k≤n} λ(k) (index n, b_0 = 1).
#[derive(Debug, Clone, PartialEq)]
pub struct PattersonWeights {
    pub lambdas: Vec<f64>,
    pub b: Vec<f64>,
    /// Σ_{j≤n} b_j Z^j ρ̂^{−j}, index n.
    pub partial_sums: Vec<f64>,
    pub rho_hat: f64,
}

impl PattersonWeights {
    pub fn n_max(&self) -> usize {
        self.lambdas.len()
    }

    /// Divergence target D(N) − 1 = log(1 + N) − 1 reached at the horizon.
    pub fn diverges(&self) -> bool {
        let n = self.n_max();
        self.partial_sums[n] >= (1.0 + n as f64).ln() - 1.0
    }

    /// |b_N / b_{N+1} − 1| bounded through λ(N+1) ≤ λ(N).
    pub fn slowly_varying(&self) -> bool {
        let n = self.n_max();
        (1.0 - 1.0 / self.lambdas[n - 1]).abs() < 5.0 / n as f64
    }
}

/// Greedy construction: λ(k) is the boost bringing the partial sum up to
/// D(k) = log(1 + k), clamped to [1, 1 + 1/k] and to λ(k − 1). At levels where
/// Z^k = 0 no boost can help, so λ(k) keeps the largest admissible value.
pub fn build_bn(table: &PartitionTable, rho_hat: f64, n_max: usize) -> Result<PattersonWeights> {
    if n_max == 0 || n_max > table.n_max {
        return Err(Error::Input(format!("N must lie in 1..={}", table.n_max)));
    }
    if !(rho_hat > 0.0) {
        return Err(Error::Domain(format!("ρ̂ = {rho_hat} must be positive")));
    }
    if table.nonzero_count() == 0 {
        return Err(Error::Input("all Z^n vanish".into()));
    }
    let mut lambdas = Vec::with_capacity(n_max);
    let mut b = vec![1.0; n_max + 1];
    let mut partial_sums = vec![0.0; n_max + 1];
    let mut prev = f64::INFINITY;
    for k in 1..=n_max {
        let term = (table.log_z[k] - k as f64 * rho_hat.ln()).exp();
        let cap = (1.0 + 1.0 / k as f64).min(prev);
        let lambda = if term > 0.0 {
            let needed = ((1.0 + k as f64).ln() - partial_sums[k - 1]) / (b[k - 1] * term);
            needed.clamp(1.0, 1.0 + 1.0 / k as f64).min(prev)
        } else {
            cap
        };
        b[k] = b[k - 1] * lambda;
        partial_sums[k] = partial_sums[k - 1] + b[k] * term;
        lambdas.push(lambda);
        prev = lambda;
    }
    Ok(PattersonWeights { lambdas, b, partial_sums, rho_hat })
}

/// All cylinders [w, g] with admissible |w| ≤ depth (the empty word gives
/// sheets) and |g| ≤ radius.
pub fn mesh_cylinders(ext: &ExtensionSpec, depth: usize, radius: usize) -> Result<Vec<XCylinder>> {
    let ball = ext.group.ball(radius)?;
    let mut out = Vec::new();
    for g in &ball {
        out.push(XCylinder::sheet(g.clone()));
    }
    for n in 1..=depth {
        for w in ext.shift.words_of_length(n) {
            for g in &ball {
                out.push(XCylinder::new(w.clone(), g.clone()));
            }
        }
    }
    Ok(out)
}

/// Raw return masses R_n(A) from one start point (x, g0), n = 0..=N.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnSeries {
    pub start: Word,
    pub g0: GroupElement,
    pub cylinders: Vec<XCylinder>,
    pub log_mass: Vec<Vec<f64>>,
    pub n_max: usize,
}

/// Runs the DP from (start, g0) using ν_{(x,g0)}([w, g]) = ν_{(x,id)}([w, g0^{-1} g]).
pub fn return_series(
    ext: &ExtensionSpec,
    start: &[usize],
    g0: &GroupElement,
    cylinders: &[XCylinder],
    n_max: usize,
) -> Result<ReturnSeries> {
    let g0_inv = ext.group.inverse(g0);
    let shifted: Vec<XCylinder> = cylinders
        .iter()
        .map(|c| Ok(XCylinder::new(c.word.clone(), ext.group.multiply(&g0_inv, &c.g)?)))
        .collect::<Result<_>>()?;
    let engine = Engine::new(ext, n_max, reach_of(ext, &shifted))?;
    let run = engine.run(start, &shifted)?;
    Ok(ReturnSeries { start: start.to_vec(), g0: g0.clone(), cylinders: cylinders.to_vec(), log_mass: run.log_mass, n_max })
}

/// Finite approximation of a measure on cylinders of X.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasureApprox {
    /// The series parameter; None for the extrapolated limit.
    pub s: Option<f64>,
    pub rho_hat: f64,
    pub masses: BTreeMap<XCylinder, f64>,
    /// Uncertainty per cylinder (zero for s-tagged measures).
    pub spread: BTreeMap<XCylinder, f64>,
    pub n_max: usize,
    pub depth: usize,
    pub ball_radius: usize,
    /// For s-tagged measures: b_N s^{−N} Z^N / (1 − ρ̂/s) / 𝒫_N(s).
    pub tail_bound: f64,
    pub diagnostics: Option<ConformalDiagnostics>,
}

impl MeasureApprox {
    pub fn mass(&self, c: &XCylinder) -> Option<f64> {
        self.masses.get(c).copied()
    }

    fn from_masses(rho_hat: f64, masses: BTreeMap<XCylinder, f64>, n_max: usize) -> Self {
        let depth = masses.keys().map(|c| c.word.len()).max().unwrap_or(0);
        let spread = masses.keys().map(|c| (c.clone(), 0.0)).collect();
        MeasureApprox { s: None, rho_hat, masses, spread, n_max, depth, ball_radius: 0, tail_bound: 0.0, diagnostics: None }
    }

    /// Closed-form measure of the given cylinders.
    pub fn from_oracle(ext: &ExtensionSpec, oracle: &Oracle, cylinders: &[XCylinder]) -> Result<Self> {
        let masses = cylinders
            .iter()
            .map(|c| Ok((c.clone(), oracle.nu_cylinder(ext, &c.word, &c.g)?)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        let mut m = MeasureApprox::from_masses(oracle.rho(), masses, 0);
        m.ball_radius = cylinders.iter().map(|c| ext.group.word_length(&c.g)).max().unwrap_or(0);
        Ok(m)
    }
}

fn series_value(log_terms: impl Iterator<Item = f64>) -> f64 {
    log_sum_exp(&log_terms.collect::<Vec<_>>()).exp()
}

/// log of Σ_{n≤N} b_n s^{−n} Z^n.
fn log_series(log_z: &[f64], weights: &PattersonWeights, s: f64) -> f64 {
    let terms: Vec<f64> = (1..log_z.len()).map(|n| weights.b[n].ln() - n as f64 * s.ln() + log_z[n]).collect();
    log_sum_exp(&terms)
}

/// m_s([w, g]) = 𝒫_N(s)^{-1} Σ_{n≤N} b_n s^{−n} R_n([w, g]) for the mesh of
/// the given depth and radius.
#[allow(clippy::too_many_arguments)]
pub fn m_s_measure(
    ext: &ExtensionSpec,
    table: &PartitionTable,
    weights: &PattersonWeights,
    s: f64,
    depth: usize,
    ball_radius: usize,
    n_max: usize,
) -> Result<MeasureApprox> {
    if depth == 0 {
        return Err(Error::Input("depth must be at least 1".into()));
    }
    let cyls = mesh_cylinders(ext, depth, ball_radius)?;
    let series = return_series(ext, &table.xi, &ext.group.identity(), &cyls, n_max)?;
    let mut m = m_s_from_series(&series, table, weights, s)?;
    m.ball_radius = ball_radius;
    Ok(m)
}

/// m_s from precomputed return masses.
pub fn m_s_from_series(series: &ReturnSeries, table: &PartitionTable, weights: &PattersonWeights, s: f64) -> Result<MeasureApprox> {
    if !(s > weights.rho_hat) {
        return Err(Error::Domain(format!("s = {s} must exceed ρ̂ = {}", weights.rho_hat)));
    }
    let n_max = series.n_max.min(weights.n_max()).min(table.n_max);
    let log_p = log_series(&table.log_z[..=n_max], weights, s);
    let masses: BTreeMap<XCylinder, f64> = series
        .cylinders
        .iter()
        .zip(&series.log_mass)
        .map(|(c, lm)| {
            let v = series_value((1..=n_max).map(|n| weights.b[n].ln() - n as f64 * s.ln() + lm[n] - log_p));
            (c.clone(), if v.is_finite() { v } else { 0.0 })
        })
        .collect();
    let last = weights.b[n_max].ln() - n_max as f64 * s.ln() + table.log_z[n_max] - log_p;
    let tail_bound = last.exp() / (1.0 - weights.rho_hat / s);
    let mut m = MeasureApprox::from_masses(weights.rho_hat, masses, n_max);
    m.s = Some(s);
    m.tail_bound = tail_bound;
    Ok(m)
}

/// Default schedule s_k = ρ̂(1 + 2^{−k}), k = 1..8.
pub fn default_schedule(rho_hat: f64) -> Vec<f64> {
    (1..=8).map(|k| rho_hat * (1.0 + 0.5f64.powi(k))).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConformalDiagnostics {
    pub schedule: Vec<f64>,
    /// Per cylinder, the m_s masses along the schedule extrapolated to s = ρ̂.
    pub schedule_limit: BTreeMap<XCylinder, f64>,
    /// Per cylinder, the last ratio of successive differences along the schedule.
    pub difference_ratio: BTreeMap<XCylinder, f64>,
    pub non_monotone: usize,
    pub unconverged: bool,
    /// Per cylinder, the order of the 1/n extrapolation actually used.
    pub order: BTreeMap<XCylinder, usize>,
}

/// Limit of q_n = R_n(A)/Ẑ_n with Ẑ_n = Z^{n−r} ρ̂^r, r = n mod p, fitted as
/// a + b/n + c/n² on the last half of the nonzero terms.
fn abel_limit(log_mass: &[f64], log_z: &[f64], period: usize, rho: f64) -> Result<Option<(f64, f64, usize)>> {
    let mut ns = Vec::new();
    let mut ys = Vec::new();
    for n in 1..log_mass.len().min(log_z.len()) {
        let r = n % period;
        if log_mass[n] == f64::NEG_INFINITY || log_z[n - r] == f64::NEG_INFINITY {
            continue;
        }
        ns.push(n as f64);
        ys.push((log_mass[n] - log_z[n - r] - r as f64 * rho.ln()).exp());
    }
    if ns.is_empty() {
        return Ok(None);
    }
    if ns.len() == 1 {
        return Ok(Some((ys[0], ys[0], 0)));
    }
    let keep = (ns.len() / 2).max(4).min(ns.len());
    let start = ns.len() - keep;
    let e = extrapolate(&ns[start..], &ys[start..], 2)?;
    Ok(Some((e.value, e.spread, e.order)))
}

/// ν̂ on the given cylinders from one return series, normalized by the base
/// table so that ν̂(X_id) = 1 for the base point. The spread adds the effect
/// of moving ρ̂ by its standard error.
fn limit_masses(
    series: &ReturnSeries,
    base: &PartitionTable,
    est: &SpectralEstimate,
) -> Result<(BTreeMap<XCylinder, f64>, BTreeMap<XCylinder, f64>, BTreeMap<XCylinder, usize>)> {
    let mut masses = BTreeMap::new();
    let mut spread = BTreeMap::new();
    let mut order = BTreeMap::new();
    let p = base.period.max(1);
    for (c, lm) in series.cylinders.iter().zip(&series.log_mass) {
        let Some((v, sp, ord)) = abel_limit(lm, &base.log_z, p, est.rho_hat)? else {
            masses.insert(c.clone(), 0.0);
            spread.insert(c.clone(), 0.0);
            order.insert(c.clone(), 0);
            continue;
        };
        let mut shift = 0.0f64;
        for rho in [est.rho_hat - est.stderr, est.rho_hat + est.stderr] {
            if rho > 0.0 && est.stderr > 0.0 {
                if let Some((alt, _, _)) = abel_limit(lm, &base.log_z, p, rho)? {
                    shift = shift.max((alt - v).abs());
                }
            }
        }
        masses.insert(c.clone(), v);
        spread.insert(c.clone(), (sp * sp + shift * shift).sqrt());
        order.insert(c.clone(), ord);
    }
    Ok((masses, spread, order))
}

fn schedule_diagnostics(
    series: &ReturnSeries,
    table: &PartitionTable,
    weights: &PattersonWeights,
    schedule: &[f64],
) -> Result<(BTreeMap<XCylinder, f64>, BTreeMap<XCylinder, f64>, usize)> {
    let per_s: Vec<MeasureApprox> = schedule.iter().map(|&s| m_s_from_series(series, table, weights, s)).collect::<Result<_>>()?;
    let mut limit = BTreeMap::new();
    let mut ratio = BTreeMap::new();
    let mut non_monotone = 0;
    for c in &series.cylinders {
        let vals: Vec<f64> = per_s.iter().map(|m| m.masses[c]).collect();
        let xs: Vec<f64> = schedule.iter().map(|s| s - weights.rho_hat).collect();
        let rows: Vec<Vec<f64>> = xs.iter().map(|&x| vec![1.0, x, x * x]).collect();
        let fit = least_squares(&rows, &vals)?;
        limit.insert(c.clone(), fit.coef[0]);
        let diffs: Vec<f64> = vals.windows(2).map(|w| w[1] - w[0]).collect();
        let scale = vals.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);
        let significant: Vec<f64> = diffs.iter().copied().filter(|d| d.abs() > 1e-12 * scale).collect();
        if significant.windows(2).any(|w| w[0].signum() != w[1].signum()) {
            non_monotone += 1;
        }
        let r = match diffs.as_slice() {
            [.., a, b] if a.abs() > 0.0 => b / a,
            _ => 0.0,
        };
        ratio.insert(c.clone(), r);
    }
    Ok((limit, ratio, non_monotone))
}

/// ν̂ on the given cylinders from the base point. Masses are the 1/n-limits
/// of R_n(A)/Ẑ_n; the m_s schedule is evaluated alongside as a diagnostic.
pub fn conformal_limit(
    ext: &ExtensionSpec,
    table: &PartitionTable,
    est: &SpectralEstimate,
    weights: &PattersonWeights,
    cylinders: &[XCylinder],
    schedule: &[f64],
) -> Result<MeasureApprox> {
    if schedule.windows(2).any(|w| w[1] >= w[0]) || schedule.iter().any(|&s| s <= est.rho_hat) {
        return Err(Error::Domain("schedule must decrease strictly and stay above ρ̂".into()));
    }
    let series = return_series(ext, &table.xi, &ext.group.identity(), cylinders, table.n_max)?;
    let (masses, spread, order) = limit_masses(&series, table, est)?;
    let (schedule_limit, difference_ratio, non_monotone) = if schedule.is_empty() {
        (BTreeMap::new(), BTreeMap::new(), 0)
    } else {
        schedule_diagnostics(&series, table, weights, schedule)?
    };
    let unconverged = non_monotone * 10 > cylinders.len();
    let depth = cylinders.iter().map(|c| c.word.len()).max().unwrap_or(0);
    let ball_radius = cylinders.iter().map(|c| ext.group.word_length(&c.g)).max().unwrap_or(0);
    Ok(MeasureApprox {
        s: None,
        rho_hat: est.rho_hat,
        masses,
        spread,
        n_max: table.n_max,
        depth,
        ball_radius,
        tail_bound: 0.0,
        diagnostics: Some(ConformalDiagnostics {
            schedule: schedule.to_vec(),
            schedule_limit,
            difference_ratio,
            non_monotone,
            unconverged,
            order,
        }),
    })
}

/// ν̂_{(x, g0)} on the given cylinders, normalized by the base table.
pub fn conformal_limit_from(
    ext: &ExtensionSpec,
    table: &PartitionTable,
    est: &SpectralEstimate,
    start: (&[usize], &GroupElement),
    cylinders: &[XCylinder],
) -> Result<MeasureApprox> {
    let series = return_series(ext, start.0, start.1, cylinders, table.n_max)?;
    let (masses, spread, _) = limit_masses(&series, table, est)?;
    let mut m = MeasureApprox::from_masses(est.rho_hat, masses, table.n_max);
    m.spread = spread;
    Ok(m)
}

/// A base table with its spectral estimate: everything needed to evaluate
/// ν̂ from arbitrary start points.
#[derive(Debug, Clone)]
pub struct Calibration<'a> {
    pub ext: &'a ExtensionSpec,
    pub table: PartitionTable,
    pub est: SpectralEstimate,
}

impl<'a> Calibration<'a> {
    /// Z^n(ξ) up to N and the fitted ρ̂, capped at the base Perron root.
    pub fn new(ext: &'a ExtensionSpec, xi: &[usize], n_max: usize) -> Result<Self> {
        let table = zcount(ext, xi, n_max, false)?;
        let base = ext.potential.base_pressure(&ext.shift)?.rho_base;
        let est = spectral_radius(&table, Some(base))?;
        Ok(Calibration { ext, table, est })
    }

    pub fn rho_hat(&self) -> f64 {
        self.est.rho_hat
    }

    /// ν̂_{(x, g0)} on the cylinders.
    pub fn nu(&self, start: &[usize], g0: &GroupElement, cylinders: &[XCylinder]) -> Result<MeasureApprox> {
        conformal_limit_from(self.ext, &self.table, &self.est, (start, g0), cylinders)
    }

    /// ν̂ from the base point (ξ, id).
    pub fn nu_base(&self, cylinders: &[XCylinder]) -> Result<MeasureApprox> {
        self.nu(&self.table.xi, &self.ext.group.identity(), cylinders)
    }
}

/// The image T^k[w, g] as a union of cylinders.
pub fn image_cylinders(ext: &ExtensionSpec, cyl: &XCylinder, k: usize) -> Result<Vec<XCylinder>> {
    let w = &cyl.word;
    if w.len() < k {
        return Err(Error::Input(format!("word of length {} has no {k}-step image cylinder", w.len())));
    }
    let h = ext.group.multiply(&cyl.g, &ext.psi_n(&w[..k]))?;
    if w.len() > k || ext.shift.is_full() {
        return Ok(vec![XCylinder::new(w[k..].to_vec(), h)]);
    }
    let last = w[k - 1];
    Ok((0..ext.shift.len()).filter(|&b| ext.shift.allowed(last, b)).map(|b| XCylinder::new(vec![b], h.clone())).collect())
}

/// Cylinders plus every image needed by `conformality_residual` with step k.
pub fn with_images(ext: &ExtensionSpec, cylinders: &[XCylinder], k: usize) -> Result<Vec<XCylinder>> {
    let mut all: Vec<XCylinder> = cylinders.to_vec();
    for c in cylinders {
        if c.word.len() >= k + ext.potential.depth() - 1 && c.word.len() >= k.max(1) {
            all.extend(image_cylinders(ext, c, k)?);
        }
    }
    all.sort();
    all.dedup();
    Ok(all)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residual {
    pub value: f64,
    /// Set when the image has zero mass and the residual is undefined.
    pub undefined: bool,
}

/// |ν(T^k[w,g]) − ρ̂^k Φ_k(w)^{-1} ν([w,g])| / ν(T^k[w,g]).
pub fn conformality_residual(ext: &ExtensionSpec, nu: &MeasureApprox, cyl: &XCylinder, k: usize) -> Result<Residual> {
    let m = ext.potential.depth();
    if k == 0 || cyl.word.len() < k + m - 1 {
        return Err(Error::Input(format!("need k ≥ 1 and |w| ≥ k + {} so that Φ_k is constant on [w]", m - 1)));
    }
    let lookup = |c: &XCylinder| nu.mass(c).ok_or_else(|| Error::Input(format!("cylinder {c:?} is not in the measure")));
    let image: f64 = neumaier_sum(image_cylinders(ext, cyl, k)?.iter().map(lookup).collect::<Result<Vec<_>>>()?);
    let own = lookup(cyl)?;
    let phi = ext.potential.phi_n(&ext.shift, &cyl.word, k)?;
    if image == 0.0 {
        return Ok(Residual { value: f64::NAN, undefined: true });
    }
    let predicted = nu.rho_hat.powi(k as i32) / phi * own;
    Ok(Residual { value: (image - predicted).abs() / image, undefined: false })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasureProperties {
    /// min and max of ρ̂^n ν([w,g]) / (Φ_n(w) ν(X_{g ψ_n(w)})) over nonempty words.
    pub conformal_ratio: (f64, f64),
    /// min and max of ν(X_g)/ν(X_{g^{-1}}); None when the extension is not symmetric.
    pub symmetric_ratio: Option<(f64, f64)>,
    pub cylinders_used: usize,
}

pub fn measure_properties(nu: &MeasureApprox, ext: &ExtensionSpec) -> Result<MeasureProperties> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut used = 0;
    for (c, &v) in &nu.masses {
        if c.word.is_empty() || v == 0.0 {
            continue;
        }
        let target = XCylinder::sheet(ext.group.multiply(&c.g, &ext.psi_n(&c.word))?);
        let Some(sheet) = nu.mass(&target).filter(|&s| s > 0.0) else { continue };
        let n = c.word.len();
        let phi = ext.potential.phi_n(&ext.shift, &c.word, n)?;
        let r = nu.rho_hat.powi(n as i32) * v / (phi * sheet);
        lo = lo.min(r);
        hi = hi.max(r);
        used += 1;
    }
    let symmetric = ext.check_symmetric().map(|r| r.is_symmetric_extension).unwrap_or(false);
    let symmetric_ratio = if symmetric {
        let mut slo = f64::INFINITY;
        let mut shi = f64::NEG_INFINITY;
        for (c, &v) in nu.masses.iter().filter(|(c, _)| c.word.is_empty()) {
            if let Some(inv) = nu.mass(&XCylinder::sheet(ext.group.inverse(&c.g))).filter(|&x| x > 0.0) {
                slo = slo.min(v / inv);
                shi = shi.max(v / inv);
            }
        }
        (slo <= shi).then_some((slo, shi))
    } else {
        None
    };
    Ok(MeasureProperties { conformal_ratio: (lo, hi), symmetric_ratio, cylinders_used: used })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    ConservativeErgodic,
    Dissipative,
    Inconclusive,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::ConservativeErgodic => "conservative_ergodic",
            Verdict::Dissipative => "dissipative",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErgodicityVerdict {
    pub verdict: Verdict,
    pub beta: f64,
    pub beta_stderr: f64,
    /// Σ_{n≤N} ρ̂^{−n} Z^n, index n.
    pub partial_sums: Vec<f64>,
    pub note: Option<String>,
}

/// Reads divergence of Σ ρ^{−n} Z^n off the fitted exponent β (terms ≈ n^{−β}).
pub fn classify_ergodicity(table: &PartitionTable, est: &SpectralEstimate) -> ErgodicityVerdict {
    let (beta, sigma) = (est.beta, est.beta_stderr);
    let mut partial_sums = vec![0.0; table.n_max + 1];
    for n in 1..=table.n_max {
        partial_sums[n] = partial_sums[n - 1] + (table.log_z[n] - n as f64 * est.rho_hat.ln()).exp();
    }
    let (verdict, note) = if beta < 1.0 - 2.0 * sigma {
        (Verdict::ConservativeErgodic, None)
    } else if beta <= 1.0 + sigma {
        (
            Verdict::ConservativeErgodic,
            Some(format!("boundary: β = {beta:.4} ± {sigma:.1e} is consistent with 1, where Σ n^-1 still diverges")),
        )
    } else if beta <= 1.0 + 2.0 * sigma {
        (Verdict::Inconclusive, Some(format!("β = {beta:.4} ± {sigma:.1e} is within 2σ of 1")))
    } else {
        (Verdict::Dissipative, None)
    };
    ErgodicityVerdict { verdict, beta, beta_stderr: sigma, partial_sums, note }
}
