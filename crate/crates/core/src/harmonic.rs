//! The kernel 𝕂, the map Θ into ρ-harmonic functions, harmonicity and
//! regularity checks, and path experiments on the natural extension.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::extension::{ExtensionSpec, XCylinder};
use crate::fit::{extrapolate, neumaier_sum};
use crate::group::GroupElement;
use crate::oracles::Oracle;
use crate::patterson::Calibration;
use crate::potential::GibbsData;
use crate::shift::{common_prefix, Word};
use crate::transfer::CylinderFunction;

/// A point (x, g) of X given by a finite representative word.
pub type Point = (Word, GroupElement);

#[derive(Debug, Clone, PartialEq)]
pub struct KernelEstimate {
    pub source: Point,
    pub targets: Vec<XCylinder>,
    /// ν̂_ζ(cyl)/ν̂_ξ(cyl) per target.
    pub values: Vec<f64>,
    pub spreads: Vec<f64>,
    /// Extrapolation over the target depth.
    pub limit: f64,
    pub spread: f64,
    /// Last two depths agree within 2%.
    pub stabilized: bool,
    /// Some target has zero mass under ν̂_ξ or ν̂_ζ.
    pub zero_mass: bool,
}

fn ratio_spread(a: f64, sa: f64, b: f64, sb: f64) -> f64 {
    (a / b) * ((sa / a).powi(2) + (sb / b).powi(2)).sqrt()
}

/// 𝕂(δ_ζ, z) along nested cylinders shrinking to z.
pub fn kernel_estimate(cal: &Calibration, zeta: &Point, targets: &[XCylinder]) -> Result<KernelEstimate> {
    if targets.is_empty() {
        return Err(Error::Input("no target cylinders".into()));
    }
    if targets.windows(2).any(|p| p[1].word.len() <= p[0].word.len() || !p[1].word.starts_with(&p[0].word) || p[1].g != p[0].g) {
        return Err(Error::Input("target cylinders must be nested with increasing depth".into()));
    }
    let base = cal.nu_base(targets)?;
    let from = cal.nu(&zeta.0, &zeta.1, targets)?;
    let mut values = Vec::with_capacity(targets.len());
    let mut spreads = Vec::with_capacity(targets.len());
    let mut zero_mass = false;
    for c in targets {
        let (a, b) = (from.masses[c], base.masses[c]);
        if a <= 0.0 || b <= 0.0 {
            zero_mass = true;
            values.push(0.0);
            spreads.push(0.0);
        } else {
            values.push(a / b);
            spreads.push(ratio_spread(a, from.spread[c], b, base.spread[c]));
        }
    }
    let k = values.len();
    let constant = values.iter().all(|&v| v == values[0]);
    let (limit, spread) = if k >= 3 && !zero_mass && !constant {
        let js: Vec<f64> = targets.iter().map(|c| c.word.len().max(1) as f64).collect();
        let e = extrapolate(&js, &values, 2.min(k - 2))?;
        (e.value, (e.spread.powi(2) + spreads[k - 1].powi(2)).sqrt())
    } else {
        (values[k - 1], spreads[k - 1])
    };
    let stabilized = k >= 2 && values[k - 2] > 0.0 && (values[k - 1] / values[k - 2] - 1.0).abs() < 0.02;
    Ok(KernelEstimate { source: zeta.clone(), targets: targets.to_vec(), values, spreads, limit, spread, stabilized, zero_mass })
}

/// Nested targets [z_1..z_j, g] for j = 1..=depth.
pub fn nested_targets(z: &[usize], g: &GroupElement, depth: usize) -> Vec<XCylinder> {
    (1..=depth.min(z.len())).map(|j| XCylinder::new(z[..j].to_vec(), g.clone())).collect()
}

/// Preimages τ_v(x, g) = (v x, g ψ(v)^{-1}) with their weights φ(v x).
pub fn preimages(ext: &ExtensionSpec, z: &Point) -> Result<Vec<(f64, Point)>> {
    let (x, g) = z;
    let m = ext.potential.depth();
    let x = ext.shift.least_extension(x, x.len().max(m.saturating_sub(1)).max(1));
    let mut out = Vec::new();
    for v in 0..ext.shift.len() {
        if !ext.shift.allowed(v, x[0]) {
            continue;
        }
        let vx: Word = std::iter::once(v).chain(x.iter().copied()).collect();
        let phi = ext.potential.phi(&vx[..m]);
        let h = ext.group.multiply(g, &ext.group.inverse(ext.psi(v)))?;
        out.push((phi, (vx, h)));
    }
    Ok(out)
}

/// |Σ_v φ(τ_v ζ) ν̂_{τ_v ζ}(A) − ρ̂ ν̂_ζ(A)| / (ρ̂ ν̂_ζ(A)) on each cylinder A;
/// dividing by ν̂_ξ(A) turns this into the kernel eigen-relation.
pub fn kernel_eigen_residuals(cal: &Calibration, zeta: &Point, cylinders: &[XCylinder]) -> Result<Vec<f64>> {
    let own = cal.nu(&zeta.0, &zeta.1, cylinders)?;
    let mut acc = vec![0.0; cylinders.len()];
    for (phi, p) in preimages(cal.ext, zeta)? {
        let nu = cal.nu(&p.0, &p.1, cylinders)?;
        for (a, c) in acc.iter_mut().zip(cylinders) {
            *a += phi * nu.masses[c];
        }
    }
    Ok(cylinders
        .iter()
        .zip(&acc)
        .map(|(c, &a)| {
            let rhs = cal.rho_hat() * own.masses[c];
            if rhs > 0.0 {
                (a - rhs).abs() / rhs
            } else if a == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThetaValue {
    pub value: f64,
    pub spread: f64,
    /// Fraction of |coefficients| whose cylinders lie inside the window.
    pub covered: f64,
}

/// Θ(f)(z) = ν̂_z(f) for a finite cylinder combination, skipping terms whose
/// group coordinate relative to z lies outside the ball of `window` radius.
pub fn theta_eval(cal: &Calibration, f: &CylinderFunction, z: &Point, window: usize) -> Result<ThetaValue> {
    let ext = cal.ext;
    let g_inv = ext.group.inverse(&z.1);
    let mut inside = Vec::new();
    let mut total = 0.0;
    let mut kept = 0.0;
    for (c, v) in &f.terms {
        total += v.abs();
        let rel = ext.group.multiply(&g_inv, &c.g)?;
        if ext.group.word_length(&rel) <= window {
            kept += v.abs();
            inside.push((c.clone(), *v));
        }
    }
    let cyls: Vec<XCylinder> = inside.iter().map(|(c, _)| c.clone()).collect();
    let nu = cal.nu(&z.0, &z.1, &cyls)?;
    let value = neumaier_sum(inside.iter().map(|(c, v)| v * nu.masses[c]));
    let spread = inside.iter().map(|(c, v)| (v * nu.spread[c]).powi(2)).sum::<f64>().sqrt();
    Ok(ThetaValue { value, spread, covered: if total > 0.0 { kept / total } else { 1.0 } })
}

#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicityReport {
    pub max_residual: f64,
    pub points: usize,
    /// h vanished at a mesh point with nonzero preimage values.
    pub degenerate: bool,
}

/// max over the mesh of |ℒh(z) − ρ̂ h(z)| / (ρ̂ h(z)), ℒh(z) = Σ_v φ(τ_v z) h(τ_v z).
pub fn harmonicity_residual(
    ext: &ExtensionSpec,
    h: &dyn Fn(&Point) -> Result<f64>,
    rho_hat: f64,
    mesh: &[Point],
) -> Result<HarmonicityReport> {
    let mut max_residual: f64 = 0.0;
    let mut degenerate = false;
    for z in mesh {
        let lh = neumaier_sum(preimages(ext, z)?.iter().map(|(phi, p)| h(p).map(|v| phi * v)).collect::<Result<Vec<_>>>()?);
        let hz = h(z)?;
        if hz == 0.0 {
            degenerate |= lh != 0.0;
            continue;
        }
        max_residual = max_residual.max((lh - rho_hat * hz).abs() / (rho_hat * hz.abs()));
    }
    Ok(HarmonicityReport { max_residual, points: mesh.len(), degenerate })
}

/// Mesh points: admissible words of length `depth` crossed with the ball.
pub fn point_mesh(ext: &ExtensionSpec, depth: usize, radius: usize) -> Result<Vec<Point>> {
    let ball = ext.group.ball(radius)?;
    let words: Vec<Word> = ext.shift.words_of_length(depth.max(1)).collect();
    Ok(words.iter().flat_map(|w| ball.iter().map(move |g| (w.clone(), g.clone()))).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LipschitzReport {
    /// D̂ per mesh depth: max |log 𝕂(ζ1, A) − log 𝕂(ζ2, A)| / d(ζ1, ζ2).
    pub d_hat: Vec<f64>,
    pub depths: Vec<usize>,
    pub pairs: usize,
    pub finite: bool,
    /// The last two depths agree within 10% (or both vanish to 1e−6).
    pub stable: bool,
}

/// Lipschitz bound of ζ ↦ log 𝕂(δ_ζ, ·) on Dirac pairs sharing the first
/// symbol and sheet g, with targets the cylinders [u, h] of each depth.
pub fn lipschitz_kernel_check(
    cal: &Calibration,
    pairs: &[(Word, Word)],
    g: &GroupElement,
    depths: &[usize],
    radius: usize,
) -> Result<LipschitzReport> {
    let ext = cal.ext;
    let r = ext.potential.metric().r();
    let ball = ext.group.ball(radius)?;
    let mut d_hat = Vec::new();
    for &depth in depths {
        let cyls: Vec<XCylinder> = ext
            .shift
            .words_of_length(depth)
            .flat_map(|u| ball.iter().map(move |h| XCylinder::new(u.clone(), h.clone())))
            .collect();
        let mut best: f64 = 0.0;
        for (x1, x2) in pairs {
            if x1.is_empty() || x2.is_empty() || x1[0] != x2[0] {
                return Err(Error::Input("pairs must share their first symbol".into()));
            }
            if x1 == x2 {
                continue;
            }
            let d = r.powi(common_prefix(x1, x2) as i32);
            let a = cal.nu(x1, g, &cyls)?;
            let b = cal.nu(x2, g, &cyls)?;
            for c in &cyls {
                let (va, vb) = (a.masses[c], b.masses[c]);
                if va > 0.0 && vb > 0.0 {
                    best = best.max((va.ln() - vb.ln()).abs() / d);
                } else if (va > 0.0) != (vb > 0.0) {
                    best = f64::INFINITY;
                }
            }
        }
        d_hat.push(best);
    }
    let finite = d_hat.iter().all(|v| v.is_finite());
    let stable = match d_hat.as_slice() {
        [.., a, b] => (a.abs() < 1e-6 && b.abs() < 1e-6) || (b / a - 1.0).abs() < 0.1,
        _ => finite,
    };
    Ok(LipschitzReport { d_hat, depths: depths.to_vec(), pairs: pairs.len(), finite, stable })
}

/// A stationary path extended to the left: `word` = w_{−L} ⋯ w_{−1} B with
/// B the initial block, `group_traj[n−1]` = ψ(w_{−n}) ⋯ ψ(w_{−1}).
#[derive(Debug, Clone, PartialEq)]
pub struct PathSample {
    pub id: usize,
    pub word: Word,
    pub block_len: usize,
    pub group_traj: Vec<GroupElement>,
    /// log of the observable at n = 1..=L; None where it is unavailable.
    pub log_observables: Vec<Option<f64>>,
}

impl PathSample {
    pub fn len(&self) -> usize {
        self.group_traj.len()
    }

    pub fn is_empty(&self) -> bool {
        self.group_traj.is_empty()
    }

    /// The word w_{−n} ⋯ w_{−1} B.
    pub fn word_at(&self, n: usize) -> &[usize] {
        &self.word[self.len() - n..]
    }

    /// π S^{−n} y = (w_{−n} ⋯ w_{−1} B, (ψ(w_{−n}) ⋯ ψ(w_{−1}))^{-1}).
    pub fn point_at(&self, ext: &ExtensionSpec, n: usize) -> Point {
        let g = if n == 0 { ext.group.identity() } else { ext.group.inverse(&self.group_traj[n - 1]) };
        (self.word_at(n).to_vec(), g)
    }
}

fn sample_one(ext: &ExtensionSpec, gibbs: &GibbsData, len: usize, seed: u64) -> (Word, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = gibbs.state_len;
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut block = gibbs.states.last().cloned().unwrap_or_default();
    for (s, &p) in gibbs.states.iter().zip(&gibbs.stationary) {
        acc += p;
        if u < acc {
            block = s.clone();
            break;
        }
    }
    let mut rev: Word = block.iter().rev().copied().collect();
    for _ in 0..len {
        let head: Vec<usize> = rev.iter().rev().take(q).copied().collect();
        let weights: Vec<f64> = (0..ext.shift.len())
            .map(|a| if ext.shift.allowed(a, head[0]) { gibbs.normalized_weight(&[&[a][..], &head[..]].concat()) } else { 0.0 })
            .collect();
        let total: f64 = weights.iter().sum();
        let mut u = rng.gen::<f64>() * total;
        let mut pick = weights.iter().rposition(|&w| w > 0.0).unwrap_or(0);
        for (a, &w) in weights.iter().enumerate() {
            if u < w {
                pick = a;
                break;
            }
            u -= w;
        }
        rev.push(pick);
    }
    (rev.into_iter().rev().collect(), q)
}

/// `count` stationary paths of length L, path i seeded with seed + i. The
/// observable gets (n, ψ(w_{−n}) ⋯ ψ(w_{−1})) and returns a log value.
pub fn sample_paths(
    ext: &ExtensionSpec,
    gibbs: &GibbsData,
    len: usize,
    count: usize,
    seed: u64,
    log_observable: &(dyn Fn(usize, &GroupElement) -> Option<f64> + Sync),
) -> Vec<PathSample> {
    (0..count)
        .into_par_iter()
        .map(|i| {
            let (word, block_len) = sample_one(ext, gibbs, len, seed.wrapping_add(i as u64));
            let mut group_traj = Vec::with_capacity(len);
            let mut g = ext.group.identity();
            for n in 1..=len {
                let a = word[len - n];
                g = ext.group.multiply(ext.psi(a), &g).expect("validated");
                group_traj.push(g.clone());
            }
            let log_observables = group_traj.iter().enumerate().map(|(i, g)| log_observable(i + 1, g)).collect();
            PathSample { id: i, word, block_len, group_traj, log_observables }
        })
        .collect()
}

/// log(ν(X_g)/ρ^n) from a closed-form measure.
pub fn oracle_decay_observable<'a>(oracle: &'a Oracle) -> impl Fn(usize, &GroupElement) -> Option<f64> + Sync + 'a {
    let log_rho = oracle.rho().ln();
    move |n, g| oracle.nu_group(g).ok().filter(|v| *v > 0.0).map(|v| v.ln() - n as f64 * log_rho)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecaySummary {
    pub from: usize,
    pub to: usize,
    /// Paths whose observable dropped by at least the factor.
    pub passing: usize,
    pub total: usize,
    /// Median of (log obs(to) − log obs(from))/(to − from).
    pub median_slope: f64,
    /// Paths lacking the observable at either end.
    pub truncated: usize,
}

impl DecaySummary {
    pub fn fraction(&self) -> f64 {
        self.passing as f64 / self.total.max(1) as f64
    }
}

pub fn decay_summary(paths: &[PathSample], from: usize, to: usize, factor: f64) -> DecaySummary {
    let mut slopes = Vec::new();
    let mut passing = 0;
    let mut truncated = 0;
    for p in paths {
        match (p.log_observables.get(from - 1).copied().flatten(), p.log_observables.get(to - 1).copied().flatten()) {
            (Some(a), Some(b)) => {
                if a - b >= factor.ln() {
                    passing += 1;
                }
                slopes.push((b - a) / (to - from) as f64);
            }
            _ => truncated += 1,
        }
    }
    slopes.sort_by(f64::total_cmp);
    let median_slope = if slopes.is_empty() { f64::NAN } else { slopes[slopes.len() / 2] };
    DecaySummary { from, to, passing, total: paths.len(), median_slope, truncated }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bucket {
    pub n: usize,
    pub key: (Word, GroupElement),
    pub count: usize,
    pub mean_w: f64,
    pub mean_next: f64,
    pub stderr: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MartingaleReport {
    pub buckets: Vec<Bucket>,
    pub max_abs_z: f64,
    pub threshold: f64,
}

impl MartingaleReport {
    pub fn passes(&self) -> bool {
        !self.buckets.is_empty() && self.max_abs_z <= self.threshold
    }
}

/// Bucketed test of E[W_{n+1} | state at n] = W_n for W_n = ρ^{−n} h(π S^{−n} y),
/// h harmonic for the normalized potential. Buckets are keyed by the first
/// `key_len` symbols and the group coordinate, restricted to |g| ≤ max_len
/// and at least `min_count` paths.
#[allow(clippy::too_many_arguments)]
pub fn martingale_bucket_test(
    ext: &ExtensionSpec,
    paths: &[PathSample],
    h: &dyn Fn(&Point) -> f64,
    rho: f64,
    checkpoints: &[usize],
    key_len: usize,
    min_count: usize,
    max_len: usize,
) -> MartingaleReport {
    let mut buckets = Vec::new();
    for &n in checkpoints {
        let mut groups: BTreeMap<(Word, GroupElement), Vec<(f64, f64)>> = BTreeMap::new();
        for p in paths.iter().filter(|p| p.len() > n) {
            let z = p.point_at(ext, n);
            if ext.group.word_length(&z.1) > max_len {
                continue;
            }
            let next = p.point_at(ext, n + 1);
            let w = h(&z) / rho.powi(n as i32);
            let w_next = h(&next) / rho.powi(n as i32 + 1);
            let key = (z.0[..key_len.min(z.0.len())].to_vec(), z.1);
            groups.entry(key).or_default().push((w, w_next));
        }
        for (key, vals) in groups {
            if vals.len() < min_count {
                continue;
            }
            let k = vals.len() as f64;
            let mean_w = vals.iter().map(|v| v.0).sum::<f64>() / k;
            let mean_next = vals.iter().map(|v| v.1).sum::<f64>() / k;
            let diffs: Vec<f64> = vals.iter().map(|v| v.1 - v.0).collect();
            let md = diffs.iter().sum::<f64>() / k;
            let var = diffs.iter().map(|d| (d - md).powi(2)).sum::<f64>() / (k - 1.0);
            let stderr = (var / k).sqrt();
            let z = if stderr > 0.0 { md / stderr } else if md.abs() < 1e-12 * mean_w.abs().max(1.0) { 0.0 } else { f64::INFINITY };
            buckets.push(Bucket { n, key, count: vals.len(), mean_w, mean_next, stderr, z });
        }
    }
    let max_abs_z = buckets.iter().map(|b| b.z.abs()).fold(0.0, f64::max);
    MartingaleReport { buckets, max_abs_z, threshold: 3.0 }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatioReport {
    /// Mean over paths of |r_{n+1} − r_n|, n = 0..L−1.
    pub mean_increment: Vec<f64>,
    pub terminal: Vec<f64>,
    /// max − min of the last quarter of each trajectory, averaged over paths.
    pub terminal_spread: f64,
    /// h vanished somewhere along a path.
    pub degenerate: bool,
}

/// Trajectories of f/h along the backward extensions of each path.
pub fn ratio_martingale(
    ext: &ExtensionSpec,
    f: &dyn Fn(&Point) -> Result<f64>,
    h: &dyn Fn(&Point) -> Result<f64>,
    paths: &[PathSample],
) -> Result<RatioReport> {
    let len = paths.iter().map(|p| p.len()).min().unwrap_or(0);
    let mut increments = vec![0.0; len];
    let mut terminal = Vec::new();
    let mut spread_sum = 0.0;
    let mut degenerate = false;
    for p in paths {
        let mut traj = Vec::with_capacity(len + 1);
        for n in 0..=len {
            let z = p.point_at(ext, n);
            let hv = h(&z)?;
            if hv == 0.0 {
                degenerate = true;
                traj.push(f64::NAN);
            } else {
                traj.push(f(&z)? / hv);
            }
        }
        for n in 0..len {
            increments[n] += (traj[n + 1] - traj[n]).abs() / paths.len() as f64;
        }
        let tail = &traj[len - len / 4..];
        let (lo, hi) = tail.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        spread_sum += hi - lo;
        terminal.push(traj[len]);
    }
    Ok(RatioReport {
        mean_increment: increments,
        terminal,
        terminal_spread: spread_sum / paths.len().max(1) as f64,
        degenerate,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegularityCoefficients {
    /// C_n(f) = sup |f(z1) − f(z2)| / |f(z1)| over mesh pairs in a common
    /// n-cylinder of one sheet, n = 1..=depth.
    pub c_n: Vec<f64>,
    /// D_x(f) per mesh point: sup over its 1-cylinder of |f(z1) − f(z2)| / d(z1, z2).
    pub d_x: BTreeMap<Point, f64>,
    /// LD(f) = sup |f(z1)/f(z2) − 1| / d(z1, z2) over pairs in a common 1-cylinder.
    pub ld: f64,
}

/// Coefficients of f on all admissible words of length `depth` over the
/// listed sheets.
pub fn regularity_coefficients(
    ext: &ExtensionSpec,
    f: &dyn Fn(&Point) -> Result<f64>,
    depth: usize,
    sheets: &[GroupElement],
) -> Result<RegularityCoefficients> {
    let r = ext.potential.metric().r();
    let words: Vec<Word> = ext.shift.words_of_length(depth).collect();
    let mut c_n = vec![0.0f64; depth];
    let mut d_x = BTreeMap::new();
    let mut ld: f64 = 0.0;
    for g in sheets {
        let vals: Vec<f64> = words.iter().map(|w| f(&(w.clone(), g.clone()))).collect::<Result<_>>()?;
        for (i, u) in words.iter().enumerate() {
            let mut dx: f64 = 0.0;
            for (j, v) in words.iter().enumerate() {
                let k = common_prefix(u, v);
                if i == j || k == 0 {
                    continue;
                }
                let diff = (vals[i] - vals[j]).abs();
                let d = r.powi(k as i32);
                dx = dx.max(diff / d);
                if vals[i] != 0.0 {
                    for c in c_n.iter_mut().take(k) {
                        *c = c.max(diff / vals[i].abs());
                    }
                } else if diff > 0.0 {
                    for c in c_n.iter_mut().take(k) {
                        *c = f64::INFINITY;
                    }
                }
                if vals[j] != 0.0 {
                    ld = ld.max((vals[i] / vals[j] - 1.0).abs() / d);
                } else if vals[i] != 0.0 {
                    ld = f64::INFINITY;
                }
            }
            d_x.insert((u.clone(), g.clone()), dx);
        }
    }
    Ok(RegularityCoefficients { c_n, d_x, ld })
}
