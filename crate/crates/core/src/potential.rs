//! Locally constant potentials, Birkhoff products, distortion constants and
//! Perron–Frobenius data of the base chain.

use num_rational::BigRational;
use num_traits::One;

use crate::error::{Error, Result};
use crate::shift::{common_prefix, MetricParam, ShiftSpec, Word};

/// Dense code of a word in base k.
pub fn word_code(w: &[usize], k: usize) -> usize {
    w.iter().fold(0, |acc, &a| acc * k + a)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PotentialSpec {
    depth: usize,
    alphabet: usize,
    values: Vec<f64>,
    exact: Option<Vec<BigRational>>,
    metric: MetricParam,
}

impl PotentialSpec {
    /// φ(x) = values[x_1..x_m]. Every admissible word of length m must carry
    /// a strictly positive value.
    pub fn new(shift: &ShiftSpec, depth: usize, entries: Vec<(Word, f64)>, metric: MetricParam) -> Result<Self> {
        if depth == 0 {
            return Err(Error::Input("potential depth must be positive".into()));
        }
        let k = shift.len();
        let size = k.checked_pow(depth as u32).filter(|&s| s <= 1 << 24).ok_or_else(|| {
            Error::Resource(format!("potential table of depth {depth} over {k} symbols is too large"))
        })?;
        let mut values = vec![0.0; size];
        for (w, v) in entries {
            if w.len() != depth {
                return Err(Error::Input(format!("potential key of length {} (depth is {depth})", w.len())));
            }
            if !shift.is_admissible(&w)? {
                return Err(Error::Input(format!("potential key `{}` is not admissible", shift.format_word(&w))));
            }
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Input(format!("potential value {v} at `{}` must be positive", shift.format_word(&w))));
            }
            values[word_code(&w, k)] = v;
        }
        for w in shift.words_of_length(depth) {
            if values[word_code(&w, k)] == 0.0 {
                return Err(Error::Input(format!("potential has no value for `{}`", shift.format_word(&w))));
            }
        }
        Ok(PotentialSpec { depth, alphabet: k, values, exact: None, metric })
    }

    /// Same as [`PotentialSpec::new`] but keeps exact rational values.
    pub fn new_exact(shift: &ShiftSpec, depth: usize, entries: Vec<(Word, BigRational)>, metric: MetricParam) -> Result<Self> {
        let floats = entries.iter().map(|(w, q)| (w.clone(), rational_to_f64(q))).collect();
        let mut p = Self::new(shift, depth, floats, metric)?;
        let k = shift.len();
        let mut exact = vec![BigRational::from_integer(0.into()); p.values.len()];
        for (w, q) in entries {
            exact[word_code(&w, k)] = q;
        }
        p.exact = Some(exact);
        Ok(p)
    }

    /// Constant potential φ ≡ c of depth 1.
    pub fn constant(shift: &ShiftSpec, c: f64) -> Result<Self> {
        let entries = (0..shift.len()).map(|a| (vec![a], c)).collect();
        Self::new(shift, 1, entries, MetricParam::default())
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn metric(&self) -> MetricParam {
        self.metric
    }

    pub fn is_exact(&self) -> bool {
        self.exact.is_some()
    }

    /// Drops the exact values, keeping the floating point ones.
    pub fn without_exact(mut self) -> Self {
        self.exact = None;
        self
    }

    /// φ on a point whose first m symbols are w[..m].
    pub fn phi(&self, w: &[usize]) -> f64 {
        self.values[word_code(&w[..self.depth], self.alphabet)]
    }

    pub fn phi_exact(&self, w: &[usize]) -> Option<&BigRational> {
        self.exact.as_ref().map(|e| &e[word_code(&w[..self.depth], self.alphabet)])
    }

    /// Φ_n on the cylinder of w; w is extended by its least admissible
    /// continuation when shorter than n + m − 1.
    pub fn phi_n(&self, shift: &ShiftSpec, w: &[usize], n: usize) -> Result<f64> {
        Ok(self.log_phi_n(shift, w, n)?.exp())
    }

    pub fn log_phi_n(&self, shift: &ShiftSpec, w: &[usize], n: usize) -> Result<f64> {
        let x = self.orbit_word(shift, w, n)?;
        Ok((0..n).map(|i| self.phi(&x[i..]).ln()).sum())
    }

    pub fn phi_n_exact(&self, shift: &ShiftSpec, w: &[usize], n: usize) -> Result<BigRational> {
        if self.exact.is_none() {
            return Err(Error::Unsupported("potential has no exact values".into()));
        }
        let x = self.orbit_word(shift, w, n)?;
        Ok((0..n).fold(BigRational::one(), |acc, i| acc * self.phi_exact(&x[i..]).unwrap()))
    }

    fn orbit_word(&self, shift: &ShiftSpec, w: &[usize], n: usize) -> Result<Word> {
        if n == 0 {
            return Ok(w.to_vec());
        }
        if w.is_empty() || !shift.is_admissible(w)? {
            return Err(Error::Input(format!("word `{}` is not admissible", shift.format_word(w))));
        }
        Ok(shift.least_extension(w, n + self.depth - 1))
    }

    /// Entry-wise power φ^h.
    pub fn powered(&self, h: f64) -> PotentialSpec {
        PotentialSpec {
            values: self.values.iter().map(|&v| if v > 0.0 { v.powf(h) } else { 0.0 }).collect(),
            exact: None,
            ..self.clone()
        }
    }

    /// c·φ.
    pub fn scaled(&self, c: f64) -> PotentialSpec {
        PotentialSpec { values: self.values.iter().map(|&v| v * c).collect(), exact: None, ..self.clone() }
    }

    /// Largest and smallest value over admissible words.
    pub fn value_range(&self) -> (f64, f64) {
        let pos = self.values.iter().copied().filter(|&v| v > 0.0);
        let lo = pos.clone().fold(f64::INFINITY, f64::min);
        let hi = pos.fold(0.0, f64::max);
        (lo, hi)
    }

    /// A valid distortion constant C_φ for |Φ_n(vx)/Φ_n(vy) − 1| ≤ C_φ d_r(x,y)
    /// with x, y in a common 1-cylinder. Returns the larger of the geometric
    /// series bound built from depth-m value ratios and the exact supremum
    /// over all inverse branches (attained at length ≤ m − 1).
    pub fn distortion_constant(&self, shift: &ShiftSpec) -> f64 {
        let m = self.depth;
        if m == 1 {
            return 0.0;
        }
        let r = self.metric.r();
        let words: Vec<Word> = shift.words_of_length(m).collect();
        let mut series: f64 = 0.0;
        for x in &words {
            for y in &words {
                let l = common_prefix(x, y);
                if (1..m).contains(&l) {
                    let ratio = (self.phi(x) / self.phi(y) - 1.0).abs();
                    series = series.max(ratio / r.powi(l as i32));
                }
            }
        }
        series /= 1.0 - r;
        let tails: Vec<Word> = shift.words_of_length(m - 1).collect();
        let mut exact: f64 = 0.0;
        for n in 1..m {
            for v in shift.words_of_length(n) {
                let last = *v.last().unwrap();
                for x in tails.iter().filter(|x| shift.allowed(last, x[0])) {
                    for y in tails.iter().filter(|y| y[0] == x[0] && **y != *x) {
                        let l = common_prefix(x, y);
                        let vx: Word = v.iter().chain(x).copied().collect();
                        let vy: Word = v.iter().chain(y).copied().collect();
                        if !shift.admissible_unchecked(&vy) {
                            continue;
                        }
                        let lx: f64 = (0..n).map(|i| self.phi(&vx[i..]).ln()).sum();
                        let ly: f64 = (0..n).map(|i| self.phi(&vy[i..]).ln()).sum();
                        exact = exact.max(((lx - ly).exp() - 1.0).abs() / r.powi(l as i32));
                    }
                }
            }
        }
        series.max(exact)
    }

    /// Perron–Frobenius data of the weighted transition matrix on states of
    /// length q = max(m − 1, 1).
    pub fn base_pressure(&self, shift: &ShiftSpec) -> Result<GibbsData> {
        let q = (self.depth - 1).max(1);
        let states: Vec<Word> = shift.words_of_length(q).collect();
        let n = states.len();
        if !shift.is_mixing((n - 1) * (n - 1) + 1 + q) {
            return Err(Error::Structural("base shift is not mixing".into()));
        }
        let k = shift.len();
        let mut code_to_state = vec![usize::MAX; k.pow(q as u32)];
        for (i, s) in states.iter().enumerate() {
            code_to_state[word_code(s, k)] = i;
        }
        // M[s][s'] = φ(a s) where s' = (a s)[..q]
        let mut entries: Vec<(usize, usize, f64)> = Vec::new();
        for (i, s) in states.iter().enumerate() {
            for a in 0..k {
                if !shift.allowed(a, s[0]) {
                    continue;
                }
                let as_: Word = std::iter::once(a).chain(s.iter().copied()).collect();
                let ext = shift.least_extension(&as_, self.depth.max(q + 1));
                let j = code_to_state[word_code(&as_[..q], k)];
                entries.push((i, j, self.phi(&ext)));
            }
        }
        let apply = |v: &[f64], transpose: bool| {
            let mut out = vec![0.0; n];
            for &(i, j, w) in &entries {
                if transpose {
                    out[j] += v[i] * w;
                } else {
                    out[i] += w * v[j];
                }
            }
            out
        };
        let (rho, right) = power_iteration(n, |v| apply(v, false))?;
        let (rho_left, left) = power_iteration(n, |v| apply(v, true))?;
        if ((rho - rho_left) / rho).abs() > 1e-9 {
            return Err(Error::Structural("left and right Perron roots disagree".into()));
        }
        let mut stationary: Vec<f64> = left.iter().zip(&right).map(|(l, r)| l * r).collect();
        let total: f64 = stationary.iter().sum();
        stationary.iter_mut().for_each(|x| *x /= total);
        let mut transition = vec![0.0; k.pow(q as u32 + 1)];
        for &(i, j, w) in &entries {
            let a = states[j][0];
            let code = a * k.pow(q as u32) + word_code(&states[i], k);
            transition[code] = w * right[j] / (rho * right[i]);
        }
        Ok(GibbsData { rho_base: rho, left_eigen: left, right_eigen: right, stationary, states, state_len: q, alphabet: k, transition })
    }

    /// φ' = φ h/(ρ h∘θ), of depth max(m, 2), with L_{φ'} 1 = 1.
    pub fn normalize(&self, shift: &ShiftSpec) -> Result<PotentialSpec> {
        let g = self.base_pressure(shift)?;
        g.normalized_potential(shift, self.metric)
    }
}

fn rational_to_f64(q: &BigRational) -> f64 {
    use num_traits::ToPrimitive;
    q.to_f64().unwrap_or(f64::NAN)
}

/// Power iteration from the all-ones vector, relative tolerance 1e−13.
/// Iterates M + ρ̂I (ρ̂ the running estimate), which has the same Perron
/// vector and damps eigenvalues near −ρ. Returns the Perron root and the
/// eigenvector normalized to sum 1.
pub fn power_iteration(n: usize, apply: impl Fn(&[f64]) -> Vec<f64>) -> Result<(f64, Vec<f64>)> {
    let mut v = vec![1.0 / n as f64; n];
    let mut rho = 0.0;
    for _ in 0..2_000_000 {
        let w = apply(&v);
        let s: f64 = w.iter().sum();
        if s <= 0.0 {
            return Err(Error::Structural("transition matrix annihilates the positive cone".into()));
        }
        let next: Vec<f64> = w.iter().zip(&v).map(|(x, y)| (x + s * y) / (2.0 * s)).collect();
        let diff = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let scale = next.iter().copied().fold(0.0, f64::max);
        let converged = (s - rho).abs() <= 1e-13 * s && diff <= 1e-13 * scale;
        rho = s;
        v = next;
        if converged {
            return Ok((rho, v));
        }
    }
    Err(Error::Structural("power iteration did not converge".into()))
}

/// Perron–Frobenius data of the base potential.
#[derive(Debug, Clone, PartialEq)]
pub struct GibbsData {
    pub rho_base: f64,
    pub left_eigen: Vec<f64>,
    pub right_eigen: Vec<f64>,
    pub stationary: Vec<f64>,
    /// States are the admissible words of length `state_len`.
    pub states: Vec<Word>,
    pub state_len: usize,
    alphabet: usize,
    /// φ'(a s) indexed by the code of the word a s (length state_len + 1).
    transition: Vec<f64>,
}

impl GibbsData {
    /// Normalized weight φ'(a s) for a word of length state_len + 1.
    pub fn normalized_weight(&self, w: &[usize]) -> f64 {
        self.transition[word_code(&w[..self.state_len + 1], self.alphabet)]
    }

    pub fn normalized_potential(&self, shift: &ShiftSpec, metric: MetricParam) -> Result<PotentialSpec> {
        let depth = self.state_len + 1;
        let entries = shift.words_of_length(depth).map(|w| {
            let v = self.normalized_weight(&w);
            (w, v)
        });
        PotentialSpec::new(shift, depth, entries.collect(), metric)
    }

    fn stationary_of(&self, s: &[usize]) -> f64 {
        self.states.iter().position(|t| t == s).map_or(0.0, |i| self.stationary[i])
    }

    /// μ([w]) for the stationary Gibbs (Markov) measure.
    pub fn gibbs_mass(&self, shift: &ShiftSpec, w: &[usize]) -> f64 {
        if w.is_empty() {
            return 1.0;
        }
        if w.iter().any(|&a| a >= shift.len()) || !shift.admissible_unchecked(w) {
            return 0.0;
        }
        let q = self.state_len;
        if w.len() < q {
            return self.states.iter().filter(|s| s.starts_with(w)).map(|s| self.stationary_of(s)).sum();
        }
        let tail = &w[w.len() - q..];
        let mut mass = self.stationary_of(tail);
        for i in 0..w.len() - q {
            mass *= self.normalized_weight(&w[i..]);
        }
        mass
    }

    /// Two-sided constant C with μ([w]) / (ρ^{-n} Φ_n(w)) ∈ [1/C, C] for
    /// every admissible w, read off the eigenvectors.
    pub fn gibbs_constant(&self, shift: &ShiftSpec, potential: &PotentialSpec) -> f64 {
        let q = self.state_len;
        let norm: f64 = self.left_eigen.iter().zip(&self.right_eigen).map(|(l, r)| l * r).sum();
        let (hmin, hmax) = min_max(&self.right_eigen);
        let (lmin, lmax) = min_max(&self.left_eigen);
        let tails: Vec<f64> =
            self.states.iter().map(|s| potential.phi_n(shift, s, q).unwrap_or(f64::NAN)).collect();
        let (pmin, pmax) = min_max(&tails);
        let rq = self.rho_base.powi(q as i32);
        let hi = rq * hmax * lmax / (norm * pmin);
        let lo = rq * hmin * lmin / (norm * pmax);
        hi.max(1.0 / lo)
    }
}

fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &x| (a.min(x), b.max(x)))
}
