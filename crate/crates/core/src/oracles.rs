//! Closed-form ground truth for two families: Polya walks on ℤ^d and
//! nearest-neighbour walks on F_d with constant q = √(p_i p_{-i}). For other
//! ℤ^d extensions, `tilted_pressure` gives the growth rate of Z^n.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::extension::ExtensionSpec;
use crate::group::{GroupElement, GroupSpec};
use crate::potential::PotentialSpec;

/// Exact square root of a nonnegative rational when both parts are squares.
pub fn rational_sqrt(q: &BigRational) -> Option<BigRational> {
    if q.is_negative() {
        return None;
    }
    let (n, d) = (q.numer(), q.denom());
    let (sn, sd) = (n.sqrt(), d.sqrt());
    (&sn * &sn == *n && &sd * &sd == *d).then(|| BigRational::new(sn, sd))
}

fn to_f64(q: &BigRational) -> f64 {
    q.to_f64().unwrap_or(f64::NAN)
}

/// Polya walk on ℤ^d: step ±e_i with probability p_{±i}.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyaSpec {
    pub plus: Vec<f64>,
    pub minus: Vec<f64>,
    exact: Option<(Vec<BigRational>, Vec<BigRational>)>,
}

impl PolyaSpec {
    pub fn new(plus: Vec<f64>, minus: Vec<f64>) -> Result<Self> {
        if plus.is_empty() || plus.len() != minus.len() {
            return Err(Error::Input("need p_i and p_{-i} for each coordinate".into()));
        }
        if plus.iter().chain(&minus).any(|&p| !(p > 0.0 && p < 1.0)) {
            return Err(Error::Input("probabilities must lie in (0,1)".into()));
        }
        let total: f64 = plus.iter().chain(&minus).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Input(format!("probabilities sum to {total}, not 1")));
        }
        Ok(PolyaSpec { plus, minus, exact: None })
    }

    pub fn new_exact(plus: Vec<BigRational>, minus: Vec<BigRational>) -> Result<Self> {
        let total = plus.iter().chain(&minus).fold(BigRational::zero(), |a, b| a + b);
        if !total.is_one() {
            return Err(Error::Input(format!("probabilities sum to {total}, not 1")));
        }
        let mut s = Self::new(plus.iter().map(to_f64).collect(), minus.iter().map(to_f64).collect())?;
        s.exact = Some((plus, minus));
        Ok(s)
    }

    pub fn d(&self) -> usize {
        self.plus.len()
    }

    /// ρ = 2 Σ √(p_i p_{-i}).
    pub fn rho(&self) -> f64 {
        2.0 * self.plus.iter().zip(&self.minus).map(|(a, b)| (a * b).sqrt()).sum::<f64>()
    }

    pub fn rho_exact(&self) -> Option<BigRational> {
        let (p, m) = self.exact.as_ref()?;
        let mut s = BigRational::zero();
        for (a, b) in p.iter().zip(m) {
            s += rational_sqrt(&(a * b))?;
        }
        Some(s * BigRational::from_integer(BigInt::from(2)))
    }

    /// λ_i = √(p_i / p_{-i}).
    pub fn lambda(&self) -> Vec<f64> {
        self.plus.iter().zip(&self.minus).map(|(a, b)| (a / b).sqrt()).collect()
    }

    /// ν(X_k) = Π λ_i^{-k_i}.
    pub fn nu_group(&self, k: &[i64]) -> f64 {
        self.lambda().iter().zip(k).map(|(l, &ki)| l.powi(-(ki as i32))).product()
    }

    pub fn nu_group_exact(&self, k: &[i64]) -> Option<BigRational> {
        let (p, m) = self.exact.as_ref()?;
        let mut out = BigRational::one();
        for ((a, b), &ki) in p.iter().zip(m).zip(k) {
            let l = rational_sqrt(&(a / b))?;
            out *= num_traits::pow::pow(if ki >= 0 { l.recip() } else { l }, ki.unsigned_abs() as usize);
        }
        Some(out)
    }

    /// ν([w, z]) = 2^{-n} ν(X_z) Π_k √(p_{i_k} p_{-i_k}) / Σ_i √(p_i p_{-i}),
    /// w given as signed coordinates ±i (1-based).
    pub fn cylinder(&self, w: &[i32], z: &[i64]) -> Result<f64> {
        let d = self.d() as i32;
        if w.iter().any(|&i| i == 0 || i.abs() > d) {
            return Err(Error::Input(format!("letters must be ±1..±{d}")));
        }
        let q: Vec<f64> = self.plus.iter().zip(&self.minus).map(|(a, b)| (a * b).sqrt()).collect();
        let total: f64 = q.iter().sum();
        let prod: f64 = w.iter().map(|&i| q[i.unsigned_abs() as usize - 1] / total).product();
        Ok(0.5f64.powi(w.len() as i32) * self.nu_group(z) * prod)
    }
}

/// Walk on F_d with p over the letters ±1..±d and constant q = √(p_i p_{-i}).
#[derive(Debug, Clone, PartialEq)]
pub struct FreeWalkSpec {
    pub plus: Vec<f64>,
    pub minus: Vec<f64>,
    pub q: f64,
}

impl FreeWalkSpec {
    pub fn new(plus: Vec<f64>, minus: Vec<f64>) -> Result<Self> {
        if plus.is_empty() || plus.len() != minus.len() || plus.iter().chain(&minus).any(|&p| p <= 0.0) {
            return Err(Error::Input("need positive p_i and p_{-i} for each generator".into()));
        }
        let total: f64 = plus.iter().chain(&minus).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Input(format!("probabilities sum to {total}, not 1")));
        }
        let qs: Vec<f64> = plus.iter().zip(&minus).map(|(a, b)| (a * b).sqrt()).collect();
        if qs.iter().any(|x| (x - qs[0]).abs() > 1e-12) {
            return Err(Error::Unsupported("√(p_i p_{-i}) must not depend on i".into()));
        }
        Ok(FreeWalkSpec { q: qs[0], plus, minus })
    }

    pub fn d(&self) -> usize {
        self.plus.len()
    }

    fn p(&self, letter: i32) -> f64 {
        let i = letter.unsigned_abs() as usize - 1;
        if letter > 0 {
            self.plus[i]
        } else {
            self.minus[i]
        }
    }

    /// ρ = 2q√(2d − 1).
    pub fn rho(&self) -> f64 {
        2.0 * self.q * ((2 * self.d() - 1) as f64).sqrt()
    }

    /// C_k = 1 + k(d − 1)/d.
    pub fn c_k(&self, k: usize) -> f64 {
        let d = self.d() as f64;
        1.0 + k as f64 * (d - 1.0) / d
    }

    fn check_reduced(&self, g: &[i32]) -> Result<()> {
        let d = self.d() as i32;
        if g.iter().any(|&i| i == 0 || i.abs() > d) || g.windows(2).any(|p| p[0] == -p[1]) {
            return Err(Error::Input(format!("{g:?} is not a reduced word over ±1..±{d}")));
        }
        Ok(())
    }

    /// ν(X_g) = C_k (2/ρ)^k Π_j p_{-i_j} for reduced g = g_{i_1}···g_{i_k}.
    pub fn nu_group(&self, g: &[i32]) -> Result<f64> {
        self.check_reduced(g)?;
        let k = g.len();
        Ok(self.c_k(k) * (2.0 / self.rho()).powi(k as i32) * g.iter().map(|&i| self.p(-i)).product::<f64>())
    }

    /// ν([w, g]) = ρ^{-n} μ([w]) C_k (2/ρ)^k μ([κ(𝔯(v_g w))]), k = |𝔯(v_g w)|.
    pub fn cylinder(&self, w: &[i32], g: &[i32]) -> Result<f64> {
        self.check_reduced(g)?;
        let n = w.len();
        let mu_w: f64 = w.iter().map(|&i| self.p(i)).product();
        let vw: Vec<i32> = g.iter().chain(w).copied().collect();
        let active: Vec<i32> = active_part(&vw).iter().map(|&i| vw[i]).collect();
        let mu_k: f64 = inverse_word(&active).iter().map(|&i| self.p(i)).product();
        let k = active.len();
        Ok(self.rho().powi(-(n as i32)) * mu_w * self.c_k(k) * (2.0 / self.rho()).powi(k as i32) * mu_k)
    }

    /// 𝕂(g1, (x, g2)) = (2d−1)^{-k/2} √(μ[v_{g1}]/μ[κ v_{g1}]) with
    /// k = |g1^{-1} g2 ψ_n(x)| − |g2 ψ_n(x)| read once it is constant over
    /// the last 10 prefixes of x. Also returns the fluctuation bound
    /// (2d−1)^{|g1|} √(μ[v_{g1}]/μ[κ v_{g1}]).
    pub fn kernel(&self, g1: &[i32], g2: &[i32], x: &[i32]) -> Result<(f64, f64)> {
        self.check_reduced(g1)?;
        self.check_reduced(g2)?;
        let k = stable_k(g1, g2, x)?;
        let mu_v: f64 = g1.iter().map(|&i| self.p(i)).product();
        let mu_kv: f64 = inverse_word(g1).iter().map(|&i| self.p(i)).product();
        let base = (2 * self.d() - 1) as f64;
        let root = (mu_v / mu_kv).sqrt();
        Ok((base.powf(-(k as f64) / 2.0) * root, base.powi(g1.len() as i32) * root))
    }

    /// lim_n P(X_n = g)/P(X_n = id) = C_k (2d−1)^{-k/2} Π_j √(p_{i_j}/p_{-i_j})
    /// for n and k = |g| even.
    pub fn llt_ratio(&self, g: &[i32], n: usize) -> Result<f64> {
        self.check_reduced(g)?;
        let k = g.len();
        if n % 2 != 0 || k % 2 != 0 {
            return Err(Error::Input("n and |g| must both be even".into()));
        }
        let lam: f64 = g.iter().map(|&i| (self.p(i) / self.p(-i)).sqrt()).product();
        Ok(self.c_k(k) * ((2 * self.d() - 1) as f64).powf(-(k as f64) / 2.0) * lam)
    }
}

fn reduce(w: &[i32]) -> Vec<i32> {
    let mut out: Vec<i32> = Vec::new();
    for &l in w {
        if out.last() == Some(&-l) {
            out.pop();
        } else {
            out.push(l);
        }
    }
    out
}

fn stable_k(g1: &[i32], g2: &[i32], x: &[i32]) -> Result<i64> {
    const WINDOW: usize = 10;
    if x.len() < WINDOW {
        return Err(Error::InsufficientData(format!("path of length {} is too short; need at least {WINDOW}", x.len())));
    }
    let inv_g1: Vec<i32> = inverse_word(g1);
    let mut ks = Vec::with_capacity(x.len());
    for n in 1..=x.len() {
        let h: Vec<i32> = g2.iter().chain(&x[..n]).copied().collect();
        let a = reduce(&inv_g1.iter().chain(&h).copied().collect::<Vec<_>>()).len() as i64;
        let b = reduce(&h).len() as i64;
        ks.push(a - b);
    }
    let tail = &ks[ks.len() - WINDOW..];
    if tail.iter().any(|&k| k != tail[0]) {
        return Err(Error::InsufficientData("k has not stabilized along the path; extend it".into()));
    }
    Ok(tail[0])
}

/// Indices of w whose letters survive free reduction of w.
pub fn active_part(w: &[i32]) -> Vec<usize> {
    let mut stack: Vec<usize> = Vec::new();
    for (i, &l) in w.iter().enumerate() {
        if stack.last().is_some_and(|&j| w[j] == -l) {
            stack.pop();
        } else {
            stack.push(i);
        }
    }
    stack
}

/// Indices of w deleted by free reduction.
pub fn inactive_part(w: &[i32]) -> Vec<usize> {
    let active = active_part(w);
    (0..w.len()).filter(|i| !active.contains(i)).collect()
}

/// κ(v) = (−v_n, …, −v_1).
pub fn inverse_word(v: &[i32]) -> Vec<i32> {
    v.iter().rev().map(|&i| -i).collect()
}

/// Closed-form data attached to an extension recognized as one of the two
/// families. Potentials that are a constant multiple c of a probability
/// vector are accepted: ν is unchanged and ρ scales by c.
#[derive(Debug, Clone, PartialEq)]
pub enum Oracle {
    Polya { spec: PolyaSpec, scale: f64, letters: Vec<(usize, i32)> },
    Free { spec: FreeWalkSpec, scale: f64, letters: Vec<i32> },
}

pub fn oracle_for(ext: &ExtensionSpec) -> Option<Oracle> {
    if !ext.shift.is_full() || ext.potential.depth() != 1 {
        return None;
    }
    let k = ext.shift.len();
    let phi: Vec<f64> = (0..k).map(|a| ext.potential.phi(&[a])).collect();
    let scale: f64 = phi.iter().sum();
    match &ext.group {
        GroupSpec::Lattice { d } => {
            if k != 2 * d {
                return None;
            }
            let mut plus = vec![0.0; *d];
            let mut minus = vec![0.0; *d];
            let mut letters = Vec::with_capacity(k);
            for a in 0..k {
                let GroupElement::Lattice(v) = ext.psi(a) else { return None };
                let nz: Vec<usize> = (0..*d).filter(|&i| v[i] != 0).collect();
                if nz.len() != 1 || v[nz[0]].abs() != 1 {
                    return None;
                }
                let i = nz[0];
                let slot = if v[i] > 0 { &mut plus[i] } else { &mut minus[i] };
                if *slot != 0.0 {
                    return None;
                }
                *slot = phi[a] / scale;
                letters.push((i, v[i] as i32));
            }
            let spec = PolyaSpec::new(plus, minus).ok()?;
            Some(Oracle::Polya { spec, scale, letters })
        }
        GroupSpec::Free { d, .. } => {
            if k != 2 * d {
                return None;
            }
            let mut plus = vec![0.0; *d];
            let mut minus = vec![0.0; *d];
            let mut letters = Vec::with_capacity(k);
            for a in 0..k {
                let GroupElement::Free(w) = ext.psi(a) else { return None };
                if w.len() != 1 {
                    return None;
                }
                let l = w[0];
                let slot = if l > 0 { &mut plus[l as usize - 1] } else { &mut minus[(-l) as usize - 1] };
                if *slot != 0.0 {
                    return None;
                }
                *slot = phi[a] / scale;
                letters.push(l);
            }
            let spec = FreeWalkSpec::new(plus, minus).ok()?;
            Some(Oracle::Free { spec, scale, letters })
        }
        GroupSpec::Table(_) => None,
    }
}

impl Oracle {
    pub fn name(&self) -> &'static str {
        match self {
            Oracle::Polya { .. } => "polya",
            Oracle::Free { .. } => "free",
        }
    }

    /// Spectral radius of the extension (including the potential's scale).
    pub fn rho(&self) -> f64 {
        match self {
            Oracle::Polya { spec, scale, .. } => scale * spec.rho(),
            Oracle::Free { spec, scale, .. } => scale * spec.rho(),
        }
    }

    /// Expected correction exponent β: d/2 on ℤ^d, 3/2 on free groups.
    pub fn beta(&self) -> f64 {
        match self {
            Oracle::Polya { spec, .. } => spec.d() as f64 / 2.0,
            Oracle::Free { .. } => 1.5,
        }
    }

    /// Whether Σ ρ^{-n} Z^n diverges.
    pub fn conservative(&self) -> bool {
        match self {
            Oracle::Polya { spec, .. } => spec.d() <= 2,
            Oracle::Free { .. } => false,
        }
    }

    /// ν(X_g), normalized by ν(X_id) = 1.
    pub fn nu_group(&self, g: &GroupElement) -> Result<f64> {
        match (self, g) {
            (Oracle::Polya { spec, .. }, GroupElement::Lattice(k)) => Ok(spec.nu_group(k)),
            (Oracle::Free { spec, .. }, GroupElement::Free(w)) => spec.nu_group(w),
            _ => Err(Error::Input(format!("element {g} does not match the oracle"))),
        }
    }

    /// ν([w, g]) = ρ^{-n} Φ_n(w) ν(X_{g ψ_n(w)}) for a symbol word w.
    pub fn nu_cylinder(&self, ext: &ExtensionSpec, w: &[usize], g: &GroupElement) -> Result<f64> {
        if w.is_empty() {
            return self.nu_group(g);
        }
        let h = ext.group.multiply(g, &ext.psi_n(w))?;
        let phi = ext.potential.phi_n(&ext.shift, w, w.len())?;
        Ok(self.rho().powi(-(w.len() as i32)) * phi * self.nu_group(&h)?)
    }

    /// The ρ-harmonic function (x, g) ↦ ν(X_{g^{-1}}) (for Polya walks λ^g).
    pub fn harmonic(&self, ext: &ExtensionSpec, g: &GroupElement) -> Result<f64> {
        self.nu_group(&ext.group.inverse(g))
    }

    /// Signed letter of a symbol for the Polya family (coordinate is 1-based).
    pub fn polya_letter(&self, a: usize) -> Option<i32> {
        match self {
            Oracle::Polya { letters, .. } => letters.get(a).map(|&(i, s)| s * (i as i32 + 1)),
            _ => None,
        }
    }

    pub fn free_letter(&self, a: usize) -> Option<i32> {
        match self {
            Oracle::Free { letters, .. } => letters.get(a).copied(),
            _ => None,
        }
    }
}

/// Base Perron root of φ·e^{⟨t, ψ⟩} for a ℤ^d extension.
pub fn tilted_root(ext: &ExtensionSpec, t: &[f64]) -> Result<f64> {
    let m = ext.potential.depth();
    let entries = ext
        .shift
        .words_of_length(m)
        .map(|w| {
            let GroupElement::Lattice(v) = ext.psi(w[0]) else { unreachable!("lattice extension") };
            let tilt: f64 = v.iter().zip(t).map(|(&k, &ti)| k as f64 * ti).sum();
            let value = ext.potential.phi(&w) * tilt.exp();
            (w, value)
        })
        .collect();
    let tilted = PotentialSpec::new(&ext.shift, m, entries, ext.potential.metric())?;
    Ok(tilted.base_pressure(&ext.shift)?.rho_base)
}

/// inf over t ∈ ℝ^d of `tilted_root`, with the minimizer. For a ℤ^d
/// extension whose drift set contains 0 in its interior this is the
/// exponential growth rate of Z^n. None for other groups, or when the
/// infimum is approached at the edge of the search box (0 not interior).
pub fn tilted_pressure(ext: &ExtensionSpec) -> Result<Option<(f64, Vec<f64>)>> {
    let GroupSpec::Lattice { d } = ext.group else { return Ok(None) };
    const EDGE: f64 = 8.0;
    let mut t = vec![0.0; d];
    let mut best = tilted_root(ext, &t)?;
    for _ in 0..100 {
        let before = best;
        for i in 0..d {
            let mut at = |x: f64| {
                let mut s = t.clone();
                s[i] = x;
                tilted_root(ext, &s)
            };
            let (x, v) = golden_min(&mut at, -EDGE, EDGE)?;
            t[i] = x;
            best = v;
        }
        if before - best <= 1e-15 * before {
            break;
        }
    }
    if t.iter().any(|x| x.abs() > EDGE - 1e-3) {
        return Ok(None);
    }
    Ok(Some((best, t)))
}

fn golden_min(f: &mut impl FnMut(f64) -> Result<f64>, mut a: f64, mut b: f64) -> Result<(f64, f64)> {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    while b - a > 1e-10 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d)?;
        }
    }
    let x = 0.5 * (a + b);
    Ok((x, f(x)?))
}
