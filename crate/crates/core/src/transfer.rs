//! Dynamic programming for the extended transfer operator: return partition
//! functions Z^n(ξ), raw cylinder masses, spectral radius estimates and the
//! Doeblin–Fortet check.
//!
//! Strings x = u ⧺ ζ are built by prepending symbols to a start word ζ. A
//! state is the first L symbols of the string built so far together with the
//! group element h = ψ_t(u). Prepending a maps h to ψ(a)·h and multiplies the
//! weight by φ(a ⧺ ζ'), which depends on the context only.

use std::collections::BTreeMap;
use std::sync::Arc;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::extension::{ExtensionSpec, XCylinder};
use crate::fit::{least_squares, neumaier_sum};
use crate::group::{GroupElement, GroupIndex, OUTSIDE};
use crate::potential::word_code;
use crate::shift::{common_prefix, Word};

/// Default cap on contexts × group elements held per DP level.
pub const STATE_CAP: usize = 40_000_000;

/// Largest N accepted in exact rational mode.
pub const EXACT_MAX_N: usize = 64;

/// Group elements of the DP window with left-multiplication tables.
#[derive(Debug)]
pub struct StateSpace {
    radius: usize,
    index: GroupIndex,
    /// pre[a][j] = index of ψ(a)^{-1}·h_j, or OUTSIDE.
    pre: Vec<Vec<u32>>,
}

impl StateSpace {
    pub fn new(ext: &ExtensionSpec, radius: usize) -> Result<Self> {
        let index = GroupIndex::new(&ext.group, radius)?;
        let pre = ext
            .psi_values()
            .iter()
            .map(|g| index.left_table(&ext.group, &ext.group.inverse(g)))
            .collect::<Result<Vec<_>>>()?;
        Ok(StateSpace { radius, index, pre })
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn index(&self) -> &GroupIndex {
        &self.index
    }
}

/// Radius of the group window needed for horizon N when masses of cylinders
/// reaching `reach` from the identity are requested.
pub fn required_radius(n_max: usize, max_step: usize, reach: usize) -> usize {
    (0..=n_max).map(|t| (t * max_step).min((n_max - t) * max_step + reach)).max().unwrap_or(0)
}

#[derive(Debug, Clone)]
struct Contexts {
    len: usize,
    words: Vec<Word>,
    codes: Vec<usize>,
    /// incoming[c'] = (c, a, weight) with (a ⧺ c)[..L] = c'.
    incoming: Vec<Vec<(usize, usize, f64)>>,
    incoming_exact: Option<Vec<Vec<BigRational>>>,
}

impl Contexts {
    fn new(ext: &ExtensionSpec) -> Self {
        let shift = &ext.shift;
        let m = ext.potential.depth();
        let len = (m - 1).max(if shift.is_full() { 0 } else { 1 });
        let words: Vec<Word> = if len == 0 { vec![Vec::new()] } else { shift.words_of_length(len).collect() };
        let k = shift.len();
        let mut codes = vec![usize::MAX; k.pow(len as u32)];
        for (i, w) in words.iter().enumerate() {
            codes[word_code(w, k)] = i;
        }
        let mut incoming = vec![Vec::new(); words.len()];
        let mut incoming_exact = ext.potential.is_exact().then(|| vec![Vec::new(); words.len()]);
        for (c, w) in words.iter().enumerate() {
            for a in 0..k {
                if len > 0 && !shift.allowed(a, w[0]) {
                    continue;
                }
                let aw: Word = std::iter::once(a).chain(w.iter().copied()).collect();
                let target = codes[word_code(&aw[..len], k)];
                incoming[target].push((c, a, ext.potential.phi(&aw)));
                if let Some(ex) = incoming_exact.as_mut() {
                    ex[target].push(ext.potential.phi_exact(&aw).unwrap().clone());
                }
            }
        }
        Contexts { len, words, codes, incoming, incoming_exact }
    }

    fn of(&self, w: &[usize], k: usize) -> usize {
        self.codes[word_code(&w[..self.len], k)]
    }
}

/// Raw output of one DP sweep from a start word.
#[derive(Debug, Clone, PartialEq)]
pub struct DpResult {
    pub n_max: usize,
    /// log Z^n for n = 0..=N (−∞ when zero).
    pub log_z: Vec<f64>,
    /// log R_n(cyl) for each requested cylinder, n = 0..=N.
    pub log_mass: Vec<Vec<f64>>,
    /// Nonzero states per level.
    pub states: Vec<usize>,
}

struct Target {
    len: usize,
    /// Index of the state group element feeding this cylinder.
    state: Option<u32>,
    /// Per-context factor Φ_{|w|}(w ⧺ c), zero when inadmissible.
    factor: Vec<f64>,
}

/// Level-synchronous DP over (context, group element) states.
pub struct Engine<'a> {
    ext: &'a ExtensionSpec,
    ctx: Contexts,
    space: Arc<StateSpace>,
    n_max: usize,
    reach: usize,
}

impl<'a> Engine<'a> {
    /// Engine for horizon N; masses are available for cylinders [w, g] with
    /// |g| + |w|·max_step ≤ reach.
    pub fn new(ext: &'a ExtensionSpec, n_max: usize, reach: usize) -> Result<Self> {
        let ctx = Contexts::new(ext);
        let radius = required_radius(n_max, ext.max_step(), reach);
        let size = ext.group.ball_size(radius).saturating_mul(ctx.words.len() as u128);
        if size > STATE_CAP as u128 {
            let mut smaller = n_max;
            while smaller > 1
                && ext.group.ball_size(required_radius(smaller, ext.max_step(), reach)).saturating_mul(ctx.words.len() as u128)
                    > STATE_CAP as u128
            {
                smaller -= 1;
            }
            return Err(Error::Resource(format!(
                "N={n_max} needs about {size} DP states (cap {STATE_CAP}); try N={smaller}"
            )));
        }
        let space = Arc::new(StateSpace::new(ext, radius)?);
        Ok(Engine { ext, ctx, space, n_max, reach })
    }

    /// Engine reusing a state space built for the same group and ψ.
    pub fn with_space(ext: &'a ExtensionSpec, n_max: usize, reach: usize, space: Arc<StateSpace>) -> Result<Self> {
        if space.radius < required_radius(n_max, ext.max_step(), reach) {
            return Engine::new(ext, n_max, reach);
        }
        Ok(Engine { ext, ctx: Contexts::new(ext), space, n_max, reach })
    }

    pub fn space(&self) -> Arc<StateSpace> {
        self.space.clone()
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    fn limit(&self, t: usize) -> u32 {
        ((self.n_max - t) * self.ext.max_step() + self.reach) as u32
    }

    fn start_state(&self, start: &[usize]) -> Result<(Word, usize)> {
        let shift = &self.ext.shift;
        if start.is_empty() || !shift.is_admissible(start)? {
            return Err(Error::Input(format!("start word `{}` is not admissible", shift.format_word(start))));
        }
        let ext_len = start.len().max(self.ctx.len).max(self.ext.potential.depth());
        let word = shift.least_extension(start, ext_len);
        let c0 = self.ctx.of(&word, shift.len());
        Ok((word, c0))
    }

    fn prepare_target(&self, cyl: &XCylinder) -> Result<Target> {
        let ext = self.ext;
        let group = &ext.group;
        group.validate(&cyl.g)?;
        let w = &cyl.word;
        // ψ_t(u) = h* where ψ(w)·h* = g^{-1}
        let h = group.inverse(&group.multiply(&cyl.g, &ext.psi_n(w))?);
        let state = self.space.index.index_of(&h);
        let factor = if w.is_empty() {
            vec![1.0; self.ctx.words.len()]
        } else if !ext.shift.is_admissible(w)? {
            vec![0.0; self.ctx.words.len()]
        } else {
            let m = ext.potential.depth();
            self.ctx
                .words
                .iter()
                .map(|c| {
                    if self.ctx.len > 0 && !ext.shift.allowed(w[w.len() - 1], c[0]) {
                        return 0.0;
                    }
                    let x: Word = w.iter().chain(c).copied().collect();
                    (0..w.len()).map(|i| ext.potential.phi(&x[i..i + m]).ln()).sum::<f64>().exp()
                })
                .collect()
        };
        Ok(Target { len: w.len(), state, factor })
    }

    /// Terms with n < |w|: the start word itself continues w.
    fn short_terms(&self, start: &[usize], cyl: &XCylinder, out: &mut [f64]) -> Result<()> {
        let ext = self.ext;
        let w = &cyl.word;
        if w.is_empty() || !ext.shift.is_admissible(w)? {
            return Ok(());
        }
        let xi = ext.shift.least_extension(start, start.len().max(w.len() + ext.potential.depth()));
        let g_inv = ext.group.inverse(&cyl.g);
        for n in 1..w.len().min(self.n_max + 1) {
            if !xi.starts_with(&w[n..]) || ext.psi_n(&w[..n]) != g_inv {
                continue;
            }
            let x: Word = w[..n].iter().chain(&xi).copied().collect();
            out[n] = ext.potential.log_phi_n(&ext.shift, &x, n)?;
        }
        Ok(())
    }

    /// Float sweep from the start word (at the identity) recording Z^n and
    /// the raw masses R_n([w, g]) = Σ Φ_n(x) over x ∈ [w] with θ^n x = ζ
    /// and ψ_n(x) = g^{-1}.
    pub fn run(&self, start: &[usize], targets: &[XCylinder]) -> Result<DpResult> {
        let (_, c0) = self.start_state(start)?;
        let n_max = self.n_max;
        let b = self.space.index.len();
        let nc = self.ctx.words.len();
        let id = self.space.index.identity() as usize;
        let prepared: Vec<Target> = targets.iter().map(|c| self.prepare_target(c)).collect::<Result<_>>()?;
        let mut log_mass = vec![vec![f64::NEG_INFINITY; n_max + 1]; targets.len()];
        for (cyl, out) in targets.iter().zip(log_mass.iter_mut()) {
            self.short_terms(start, cyl, out)?;
        }
        let mut log_z = vec![f64::NEG_INFINITY; n_max + 1];
        log_z[0] = 0.0;
        let mut states = vec![1usize; n_max + 1];
        let mut cur = vec![0.0f64; nc * b];
        cur[c0 * b + id] = 1.0;
        let mut scale = 0.0f64;
        for t in 0..=n_max {
            if t > 0 {
                let z = neumaier_sum((0..nc).map(|c| cur[c * b + id]));
                log_z[t] = if z > 0.0 { z.ln() + scale } else { f64::NEG_INFINITY };
            }
            for (tg, out) in prepared.iter().zip(log_mass.iter_mut()) {
                let n = t + tg.len;
                if n == 0 || n > n_max {
                    continue;
                }
                let Some(s) = tg.state else { continue };
                let v = neumaier_sum((0..nc).map(|c| cur[c * b + s as usize] * tg.factor[c]));
                if v > 0.0 {
                    out[n] = v.ln() + scale;
                }
            }
            if t == n_max {
                break;
            }
            let limit = self.limit(t + 1);
            let lengths = &self.space.index;
            let mut next = vec![0.0f64; nc * b];
            for (cp, slice) in next.chunks_mut(b).enumerate() {
                let inc = &self.ctx.incoming[cp];
                slice.par_chunks_mut(4096).enumerate().for_each(|(chunk, vals)| {
                    let base = chunk * 4096;
                    for (off, v) in vals.iter_mut().enumerate() {
                        let j = base + off;
                        if lengths.length(j as u32) > limit {
                            continue;
                        }
                        let mut acc = 0.0;
                        for &(c, a, w) in inc {
                            let src = self.space.pre[a][j];
                            if src != OUTSIDE {
                                acc += w * cur[c * b + src as usize];
                            }
                        }
                        *v = acc;
                    }
                });
            }
            let max = next.par_iter().cloned().reduce(|| 0.0, f64::max);
            if max > 0.0 {
                next.par_iter_mut().for_each(|v| *v /= max);
                scale += max.ln();
            }
            states[t + 1] = next.par_iter().filter(|&&v| v > 0.0).count();
            cur = next;
        }
        Ok(DpResult { n_max, log_z, log_mass, states })
    }

    /// Exact rational Z^n(ζ), n = 0..=N; requires exact potential values.
    pub fn run_exact(&self, start: &[usize]) -> Result<Vec<BigRational>> {
        let ex = self.ctx.incoming_exact.as_ref().ok_or_else(|| Error::Unsupported("potential has no exact values".into()))?;
        if self.n_max > EXACT_MAX_N {
            return Err(Error::Resource(format!("exact mode is limited to N ≤ {EXACT_MAX_N}; try N={EXACT_MAX_N}")));
        }
        let (_, c0) = self.start_state(start)?;
        let b = self.space.index.len();
        let nc = self.ctx.words.len();
        let id = self.space.index.identity() as usize;
        let zero = BigRational::zero();
        let mut cur = vec![zero.clone(); nc * b];
        cur[c0 * b + id] = BigRational::from_integer(BigInt::from(1));
        let mut out = vec![BigRational::from_integer(BigInt::from(1))];
        for t in 0..self.n_max {
            let limit = self.limit(t + 1);
            let mut next = vec![zero.clone(); nc * b];
            for (cp, inc) in self.ctx.incoming.iter().enumerate() {
                for j in 0..b {
                    if self.space.index.length(j as u32) > limit {
                        continue;
                    }
                    let mut acc = BigRational::zero();
                    for (&(c, a, _), w) in inc.iter().zip(&ex[cp]) {
                        let src = self.space.pre[a][j];
                        if src != OUTSIDE {
                            let v = &cur[c * b + src as usize];
                            if !v.is_zero() {
                                acc += w * v;
                            }
                        }
                    }
                    next[cp * b + j] = acc;
                }
            }
            cur = next;
            out.push((0..nc).fold(BigRational::zero(), |acc, c| acc + &cur[c * b + id]));
        }
        Ok(out)
    }
}

/// Reach needed for a list of cylinders: max |g| + |w|·max_step.
pub fn reach_of(ext: &ExtensionSpec, cyls: &[XCylinder]) -> usize {
    cyls.iter().map(|c| ext.group.word_length(&c.g) + c.word.len() * ext.max_step()).max().unwrap_or(0)
}

/// Z^1..Z^N for a base point ξ, with period and optional exact values.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionTable {
    pub xi: Word,
    pub n_max: usize,
    /// log Z^n, index n = 0..=N.
    pub log_z: Vec<f64>,
    pub exact: Option<Vec<BigRational>>,
    pub period: usize,
    pub states_visited: Vec<usize>,
}

impl PartitionTable {
    pub fn from_logs(xi: Word, log_z: Vec<f64>, exact: Option<Vec<BigRational>>, states: Vec<usize>) -> Self {
        let n_max = log_z.len() - 1;
        let period = (1..=n_max).filter(|&n| log_z[n] > f64::NEG_INFINITY).fold(0, |g, n| g.gcd(&n));
        PartitionTable { xi, n_max, log_z, exact, period, states_visited: states }
    }

    pub fn z(&self, n: usize) -> f64 {
        self.log_z[n].exp()
    }

    pub fn nonzero_count(&self) -> usize {
        (1..=self.n_max).filter(|&n| self.log_z[n] > f64::NEG_INFINITY).count()
    }

    /// Largest relative disagreement between float and exact values.
    pub fn exact_float_gap(&self) -> Option<f64> {
        let ex = self.exact.as_ref()?;
        Some(
            (1..=self.n_max)
                .map(|n| {
                    let e = ex[n].to_f64().unwrap_or(0.0);
                    let f = self.z(n);
                    if e == 0.0 {
                        f.abs()
                    } else {
                        ((f - e) / e).abs()
                    }
                })
                .fold(0.0, f64::max),
        )
    }
}

/// Z^n(ξ) for n ≤ N.
pub fn zcount(ext: &ExtensionSpec, xi: &[usize], n_max: usize, exact: bool) -> Result<PartitionTable> {
    if n_max == 0 {
        return Err(Error::Input("N must be positive".into()));
    }
    if xi.len() < ext.potential.depth() {
        return Err(Error::Input(format!("ξ must have length ≥ potential depth {}", ext.potential.depth())));
    }
    let engine = Engine::new(ext, n_max, 0)?;
    let run = engine.run(xi, &[])?;
    let exact_values = if exact { Some(engine.run_exact(xi)?) } else { None };
    Ok(PartitionTable::from_logs(xi.to_vec(), run.log_z, exact_values, run.states))
}

/// Float Z^n(ξ) reusing a state space built for the same group and ψ (the
/// potential may differ); returns the space for the next call.
pub fn zcount_with_space(
    ext: &ExtensionSpec,
    xi: &[usize],
    n_max: usize,
    space: Option<Arc<StateSpace>>,
) -> Result<(PartitionTable, Arc<StateSpace>)> {
    if n_max == 0 {
        return Err(Error::Input("N must be positive".into()));
    }
    let engine = match space {
        Some(s) => Engine::with_space(ext, n_max, 0, s)?,
        None => Engine::new(ext, n_max, 0)?,
    };
    let run = engine.run(xi, &[])?;
    Ok((PartitionTable::from_logs(xi.to_vec(), run.log_z, None, run.states), engine.space()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralEstimate {
    pub rho_hat: f64,
    pub method: &'static str,
    /// β in Z^{pk} ≈ C ρ^{pk} k^{-β}.
    pub beta: f64,
    pub stderr: f64,
    pub beta_stderr: f64,
    /// (Z^n)^{1/n} at the largest nonzero n.
    pub hadamard: f64,
    pub period: usize,
    pub fit_degree: usize,
    pub window: (usize, usize),
    /// True when the fitted value exceeded the base Perron root and was capped.
    pub clamped: bool,
}

struct RatioFit {
    rho: f64,
    beta: f64,
    rho_se: f64,
    beta_se: f64,
}

fn ratio_fit(ks: &[f64], ys: &[f64], p: usize, degree: usize) -> Result<RatioFit> {
    let rows: Vec<Vec<f64>> = ks
        .iter()
        .map(|&k| {
            let mut row = vec![1.0, -(1.0 + 1.0 / k).ln()];
            row.extend((1..degree).map(|j| k.powi(-(j as i32)) - (k + 1.0).powi(-(j as i32))));
            row
        })
        .collect();
    let fit = least_squares(&rows, ys)?;
    let rho = (fit.coef[0] / p as f64).exp();
    let nz = |x: f64| if x.is_nan() { 0.0 } else { x };
    Ok(RatioFit { rho, beta: fit.coef[1], rho_se: rho * nz(fit.coef_se[0]) / p as f64, beta_se: nz(fit.coef_se[1]) })
}

/// Estimates ρ and β from the period class of the table by fitting
/// log(Z^{p(k+1)}/Z^{pk}) = p log ρ − β log(1 + 1/k) + Σ_j c_j (k^{-j} − (k+1)^{-j})
/// over the last half of the ratios. The reported error combines the
/// regression error, the drift when the window shrinks by one point and the
/// change from the next lower correction order.
pub fn spectral_radius(table: &PartitionTable, rho_base: Option<f64>) -> Result<SpectralEstimate> {
    if table.nonzero_count() < 8 {
        return Err(Error::InsufficientData(format!("{} nonzero entries, need at least 8", table.nonzero_count())));
    }
    let p = table.period;
    let big_k = table.n_max / p;
    let mut ks = Vec::new();
    let mut ys = Vec::new();
    for k in 1..big_k {
        let (a, b) = (table.log_z[p * k], table.log_z[p * (k + 1)]);
        if a > f64::NEG_INFINITY && b > f64::NEG_INFINITY {
            ks.push(k as f64);
            ys.push(b - a);
        }
    }
    let window = ks.len().div_ceil(2);
    let degree = match window {
        w if w >= 5 => 3,
        4 => 2,
        3 => 1,
        _ => return Err(Error::InsufficientData("too few consecutive ratios in the period class".into())),
    };
    let window = window.max(degree + 2);
    let start = ks.len() - window;
    let (wk, wy) = (&ks[start..], &ys[start..]);
    let main = ratio_fit(wk, wy, p, degree)?;
    let (drift_rho, drift_beta) = if window > degree + 2 {
        let d = ratio_fit(&wk[1..], &wy[1..], p, degree)?;
        ((d.rho - main.rho).abs(), (d.beta - main.beta).abs())
    } else {
        (0.0, 0.0)
    };
    let (order_rho, order_beta) = if degree > 1 {
        let lower = ratio_fit(wk, wy, p, degree - 1)?;
        ((lower.rho - main.rho).abs(), (lower.beta - main.beta).abs())
    } else {
        (0.0, 0.0)
    };
    let stderr = (main.rho_se.powi(2) + drift_rho.powi(2) + order_rho.powi(2)).sqrt();
    let beta_stderr = (main.beta_se.powi(2) + drift_beta.powi(2) + order_beta.powi(2)).sqrt();
    let last = (1..=table.n_max).rev().find(|&n| table.log_z[n] > f64::NEG_INFINITY).unwrap();
    let hadamard = (table.log_z[last] / last as f64).exp();
    let mut rho_hat = main.rho;
    let mut clamped = false;
    if let Some(base) = rho_base {
        if rho_hat > base {
            rho_hat = base;
            clamped = true;
        }
    }
    Ok(SpectralEstimate {
        rho_hat,
        method: "ratio_extrapolated",
        beta: main.beta,
        stderr,
        beta_stderr,
        hadamard,
        period: p,
        fit_degree: degree,
        window: (p * wk[0] as usize, p * (wk[wk.len() - 1] as usize + 1)),
        clamped,
    })
}

/// A finite linear combination of X-cylinder indicators.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CylinderFunction {
    pub terms: Vec<(XCylinder, f64)>,
}

impl CylinderFunction {
    pub fn indicator(cyl: XCylinder) -> Self {
        CylinderFunction { terms: vec![(cyl, 1.0)] }
    }

    /// f(x, g) for a representative word x (least-extended when short).
    pub fn eval(&self, ext: &ExtensionSpec, x: &[usize], g: &GroupElement) -> f64 {
        let depth = self.depth();
        let x = ext.shift.least_extension(x, x.len().max(depth));
        self.terms.iter().filter(|(c, _)| c.g == *g && x.starts_with(&c.word)).map(|(_, v)| v).sum()
    }

    pub fn depth(&self) -> usize {
        self.terms.iter().map(|(c, _)| c.word.len()).max().unwrap_or(0)
    }

    pub fn support_groups(&self) -> Vec<GroupElement> {
        let mut gs: Vec<GroupElement> = self.terms.iter().map(|(c, _)| c.g.clone()).collect();
        gs.sort();
        gs.dedup();
        gs
    }
}

/// (ℒ^n f)(ζ, g0) = Σ_j c_j R^ζ_n([w_j, g0^{-1} g_j]).
pub fn extension_apply(ext: &ExtensionSpec, f: &CylinderFunction, n: usize, at: (&[usize], &GroupElement)) -> Result<f64> {
    if n == 0 {
        return Err(Error::Input("n must be positive".into()));
    }
    let g0_inv = ext.group.inverse(at.1);
    let cyls: Vec<XCylinder> = f
        .terms
        .iter()
        .map(|(c, _)| Ok(XCylinder::new(c.word.clone(), ext.group.multiply(&g0_inv, &c.g)?)))
        .collect::<Result<_>>()?;
    let engine = Engine::new(ext, n, reach_of(ext, &cyls))?;
    let run = engine.run(at.0, &cyls)?;
    Ok(neumaier_sum(f.terms.iter().zip(&run.log_mass).map(|((_, c), lm)| c * lm[n].exp())))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DoeblinFortetReport {
    /// max over ordered pairs of lhs − rhs; nonpositive means pass.
    pub max_excess: f64,
    /// Same for the log-Hölder variant; None when LD(f) is infinite.
    pub max_excess_log: Option<f64>,
    /// Constant used on the right-hand side: 1 + C_φ.
    pub constant: f64,
    pub pairs_checked: usize,
}

impl DoeblinFortetReport {
    pub fn passes(&self) -> bool {
        self.max_excess <= 1e-12 && self.max_excess_log.is_none_or(|e| e <= 1e-12)
    }
}

/// Cells (u, g) on which f is constant, with f, D(f) and LD(f) on each.
struct Refinement {
    cells: Vec<XCylinder>,
    f: Vec<f64>,
    d: Vec<f64>,
    ld: Option<Vec<f64>>,
}

fn refine(ext: &ExtensionSpec, f: &CylinderFunction) -> Refinement {
    let depth = f.depth().max(1);
    let r = ext.potential.metric().r();
    let words: Vec<Word> = ext.shift.words_of_length(depth).collect();
    let mut cells = Vec::new();
    let mut fv = Vec::new();
    let mut dv = Vec::new();
    let mut ldv = Some(Vec::new());
    for g in f.support_groups() {
        let vals: Vec<f64> = words.iter().map(|u| f.eval(ext, u, &g)).collect();
        let mut d_by_a = BTreeMap::new();
        let mut ld_by_a = BTreeMap::new();
        for (i, u) in words.iter().enumerate() {
            let (mut d, mut ld) = (0.0f64, 0.0f64);
            let mut mixed = false;
            for (j, v) in words.iter().enumerate() {
                if u[0] != v[0] || i == j {
                    continue;
                }
                let dist = r.powi(common_prefix(u, v) as i32);
                d = d.max((vals[i] - vals[j]).abs() / dist);
                if (vals[i] == 0.0) != (vals[j] == 0.0) {
                    mixed = true;
                } else if vals[j] != 0.0 {
                    ld = ld.max((vals[i] / vals[j] - 1.0).abs() / dist);
                }
            }
            let e = d_by_a.entry(u[0]).or_insert(0.0f64);
            *e = e.max(d);
            let e = ld_by_a.entry(u[0]).or_insert(Some(0.0f64));
            *e = match (*e, mixed) {
                (Some(x), false) => Some(x.max(ld)),
                _ => None,
            };
        }
        for (i, u) in words.iter().enumerate() {
            cells.push(XCylinder::new(u.clone(), g.clone()));
            fv.push(vals[i]);
            dv.push(d_by_a[&u[0]]);
            match (ldv.as_mut(), ld_by_a[&u[0]]) {
                (Some(v), Some(x)) => v.push(x),
                _ => ldv = None,
            }
        }
    }
    Refinement { cells, f: fv, d: dv, ld: ldv }
}

/// Checks |ℒ^n f(x) − ℒ^n f(y)| ≤ (1 + C_φ) d_r(x,y) ℒ^n(|f| + r^n D(f))(x) and
/// the log-Hölder variant with |f|(1 + r^n LD(f)) on every ordered pair. All
/// points lie on the sheet of `g`.
pub fn doeblin_fortet_check(
    ext: &ExtensionSpec,
    f: &CylinderFunction,
    n: usize,
    pairs: &[(Word, Word)],
    g: &GroupElement,
) -> Result<DoeblinFortetReport> {
    let r = ext.potential.metric().r();
    let c = 1.0 + ext.potential.distortion_constant(&ext.shift);
    let refinement = refine(ext, f);
    let g_inv = ext.group.inverse(g);
    let cells: Vec<XCylinder> = refinement
        .cells
        .iter()
        .map(|cell| Ok(XCylinder::new(cell.word.clone(), ext.group.multiply(&g_inv, &cell.g)?)))
        .collect::<Result<_>>()?;
    let engine = Engine::new(ext, n, reach_of(ext, &cells))?;
    let rn = r.powi(n as i32);
    let mut cache: BTreeMap<Word, (f64, f64, f64, Option<f64>)> = BTreeMap::new();
    let mut eval = |x: &Word| -> Result<(f64, f64, f64, Option<f64>)> {
        if let Some(v) = cache.get(x) {
            return Ok(*v);
        }
        let run = engine.run(x, &cells)?;
        let masses: Vec<f64> = run.log_mass.iter().map(|lm| lm[n].exp()).collect();
        let lf = neumaier_sum(masses.iter().zip(&refinement.f).map(|(m, v)| m * v));
        let rhs = neumaier_sum(masses.iter().enumerate().map(|(i, m)| m * (refinement.f[i].abs() + rn * refinement.d[i])));
        let rhs_log = refinement
            .ld
            .as_ref()
            .map(|ld| neumaier_sum(masses.iter().enumerate().map(|(i, m)| m * refinement.f[i].abs() * (1.0 + rn * ld[i]))));
        let v = (lf, rhs, 0.0, rhs_log);
        cache.insert(x.clone(), v);
        Ok(v)
    };
    let mut max_excess = f64::NEG_INFINITY;
    let mut max_excess_log: Option<f64> = refinement.ld.as_ref().map(|_| f64::NEG_INFINITY);
    let mut checked = 0;
    for (x, y) in pairs {
        if x.is_empty() || y.is_empty() || x[0] != y[0] {
            return Err(Error::Input("Doeblin–Fortet pairs must share their first symbol".into()));
        }
        if x == y {
            continue;
        }
        let d = r.powi(common_prefix(x, y) as i32);
        let ex = eval(x)?;
        let ey = eval(y)?;
        for (a, b) in [(ex, ey), (ey, ex)] {
            let lhs = (a.0 - b.0).abs();
            max_excess = max_excess.max(lhs - c * d * a.1);
            if let (Some(m), Some(rl)) = (max_excess_log.as_mut(), a.3) {
                *m = m.max(lhs - c * d * rl);
            }
            checked += 1;
        }
    }
    Ok(DoeblinFortetReport { max_excess, max_excess_log, constant: c, pairs_checked: checked })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::GroupSpec;
    use crate::potential::PotentialSpec;
    use crate::shift::{MetricParam, ShiftSpec};
    use num_bigint::BigInt;

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    fn q(a: i64, b: i64) -> BigRational {
        BigRational::new(a.into(), b.into())
    }

    fn z_walk(p: (i64, i64)) -> ExtensionSpec {
        let shift = ShiftSpec::full(names(&["+1", "-1"]), Some(vec![1, 0])).unwrap();
        let pot = PotentialSpec::new_exact(&shift, 1, vec![(vec![0], q(p.0, p.1)), (vec![1], q(p.1 - p.0, p.1))], MetricParam::default())
            .unwrap();
        let psi = vec![GroupElement::Lattice(vec![1]), GroupElement::Lattice(vec![-1])];
        ExtensionSpec::new(shift, pot, GroupSpec::lattice(1).unwrap(), psi).unwrap()
    }

    fn f2_walk() -> ExtensionSpec {
        let shift = ShiftSpec::full(names(&["a", "b", "A", "B"]), Some(vec![2, 3, 0, 1])).unwrap();
        let pot = PotentialSpec::new_exact(&shift, 1, (0..4).map(|a| (vec![a], q(1, 4))).collect(), MetricParam::default()).unwrap();
        let psi = [1, 2, -1, -2].iter().map(|&i| GroupElement::Free(vec![i])).collect();
        ExtensionSpec::new(shift, pot, GroupSpec::free(2).unwrap(), psi).unwrap()
    }

    fn binom(n: u64, k: u64) -> BigInt {
        (0..k).fold(BigInt::from(1), |acc, i| acc * BigInt::from(n - i) / BigInt::from(i + 1))
    }

    #[test]
    fn z_walk_exact_matches_binomial() {
        let e = z_walk((4, 5));
        let t = zcount(&e, &[0], 20, true).unwrap();
        let ex = t.exact.as_ref().unwrap();
        for n in 1..=10u64 {
            let want = BigRational::from_integer(binom(2 * n, n)) * num_traits::pow(q(4, 25), n as usize);
            assert_eq!(ex[2 * n as usize], want);
            assert!(ex[2 * n as usize - 1].is_zero());
        }
        assert_eq!(t.period, 2);
        assert!(t.exact_float_gap().unwrap() < 1e-10);
        assert!((t.z(2) - 0.32).abs() < 1e-15);
    }

    #[test]
    fn f2_second_return() {
        let e = f2_walk();
        let t = zcount(&e, &[0], 6, true).unwrap();
        assert_eq!(t.exact.as_ref().unwrap()[2], q(1, 4));
        // Z^4: 4·4 back-and-forth pairs minus double counting: 28 paths of weight 4^{-4}
        assert_eq!(t.exact.as_ref().unwrap()[4], q(28, 256));
    }

    #[test]
    fn pruning_is_sound() {
        let e = f2_walk();
        let engine = Engine::new(&e, 8, 0).unwrap();
        let wide = Engine::new(&e, 8, 12).unwrap();
        let a = engine.run_exact(&[0]).unwrap();
        let b = wide.run_exact(&[0]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn far_sheets_survive_pruning() {
        // R_n(X_g) = C(n, (n−g)/2) p^{(n−g)/2} (1−p)^{(n+g)/2}
        let e = z_walk((4, 5));
        let n_max = 20;
        let cyls: Vec<XCylinder> = [-3i64, -2, 2, 3].iter().map(|&g| XCylinder::sheet(GroupElement::Lattice(vec![g]))).collect();
        let engine = Engine::new(&e, n_max, reach_of(&e, &cyls)).unwrap();
        let run = engine.run(&[0], &cyls).unwrap();
        for (c, lm) in cyls.iter().zip(&run.log_mass) {
            let GroupElement::Lattice(v) = &c.g else { unreachable!() };
            let g = v[0];
            for n in (n_max - 3)..=n_max {
                if (n as i64 + g) % 2 != 0 {
                    continue;
                }
                let plus = ((n as i64 - g) / 2) as u64;
                let binom: f64 = (0..plus).map(|i| (n as u64 - i) as f64 / (i + 1) as f64).product();
                let want = binom * 0.8f64.powi(plus as i32) * 0.2f64.powi(n as i32 - plus as i32);
                assert!((lm[n].exp() / want - 1.0).abs() < 1e-12, "g={g} n={n}");
            }
        }
    }

    #[test]
    fn spectral_radius_z_walk() {
        let e = z_walk((4, 5));
        let t = zcount(&e, &[0], 40, false).unwrap();
        let s = spectral_radius(&t, Some(1.0)).unwrap();
        assert!((s.rho_hat - 0.8).abs() < 0.002, "{s:?}");
        assert!((s.beta - 0.5).abs() < 0.2);
        let short = zcount(&e, &[0], 10, false).unwrap();
        assert!(matches!(spectral_radius(&short, None), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn spectral_radius_scales_with_potential() {
        let e = z_walk((4, 5));
        let e2 = e.with_potential(e.potential.scaled(2.0));
        let s1 = spectral_radius(&zcount(&e, &[0], 40, false).unwrap(), None).unwrap();
        let s2 = spectral_radius(&zcount(&e2, &[0], 40, false).unwrap(), None).unwrap();
        assert!((s2.rho_hat / s1.rho_hat - 2.0).abs() < 1e-6 * 2.0);
    }

    #[test]
    fn apply_identities() {
        let e = z_walk((4, 5));
        let id = GroupElement::Lattice(vec![0]);
        let f = CylinderFunction::indicator(XCylinder::sheet(id.clone()));
        let t = zcount(&e, &[0], 4, false).unwrap();
        for n in 1..=4 {
            let v = extension_apply(&e, &f, n, (&[0], &id)).unwrap();
            assert!((v - t.z(n)).abs() < 1e-14);
        }
        let zero = CylinderFunction::default();
        assert_eq!(extension_apply(&e, &zero, 3, (&[0], &id)).unwrap(), 0.0);
        // φ is normalized: ℒ^3 1 = 1 on the reachable window
        let ones = CylinderFunction {
            terms: (-3..=3).map(|k| (XCylinder::sheet(GroupElement::Lattice(vec![k])), 1.0)).collect(),
        };
        let v = extension_apply(&e, &ones, 3, (&[1], &id)).unwrap();
        assert!((v - 1.0).abs() < 1e-14);
    }

    #[test]
    fn masses_match_bruteforce() {
        let e = z_walk((4, 5));
        let g = GroupElement::Lattice(vec![1]);
        let cyls = vec![XCylinder::new(vec![0, 1], g.clone()), XCylinder::new(vec![1], GroupElement::Lattice(vec![0]))];
        let engine = Engine::new(&e, 6, reach_of(&e, &cyls)).unwrap();
        let run = engine.run(&[0], &cyls).unwrap();
        for (ci, cyl) in cyls.iter().enumerate() {
            for n in 1..=6 {
                let mut want = 0.0;
                for v in e.shift.words_of_length(n) {
                    let x: Word = v.iter().copied().chain([0, 0, 0]).collect();
                    if x.starts_with(&cyl.word) && e.psi_n(&v) == e.group.inverse(&cyl.g) {
                        want += e.potential.phi_n(&e.shift, &x, n).unwrap();
                    }
                }
                let got = run.log_mass[ci][n].exp();
                assert!((got - want).abs() < 1e-14, "{cyl:?} n={n} {got} {want}");
            }
        }
    }

    #[test]
    fn doeblin_fortet_on_indicator() {
        let e = z_walk((4, 5));
        let id = GroupElement::Lattice(vec![0]);
        let f = CylinderFunction::indicator(XCylinder::new(vec![0, 1], id.clone()));
        let words: Vec<Word> = (1..=3).flat_map(|n| e.shift.words_of_length(n)).collect();
        let pairs: Vec<(Word, Word)> =
            words.iter().flat_map(|x| words.iter().filter(|y| y[0] == x[0]).map(move |y| (x.clone(), y.clone()))).collect();
        let rep = doeblin_fortet_check(&e, &f, 4, &pairs, &id).unwrap();
        assert!(rep.passes(), "{rep:?}");
        assert!(rep.max_excess_log.is_none());
        assert!(doeblin_fortet_check(&e, &f, 4, &[(vec![0], vec![1])], &id).is_err());
    }
}
