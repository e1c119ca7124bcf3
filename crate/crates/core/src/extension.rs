//! The skew product T(x, g) = (θx, g·ψ(x_1)) on X = Σ × G.

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::group::{GroupElement, GroupSpec};
use crate::potential::PotentialSpec;
use crate::shift::{ShiftSpec, Word};

/// A cylinder [w, g] of X: points (x, g) with x ∈ [w]. The empty word
/// stands for the whole sheet X_g.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct XCylinder {
    pub word: Word,
    pub g: GroupElement,
}

impl XCylinder {
    pub fn new(word: Word, g: GroupElement) -> Self {
        XCylinder { word, g }
    }

    pub fn sheet(g: GroupElement) -> Self {
        XCylinder { word: Vec::new(), g }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtensionSpec {
    pub shift: ShiftSpec,
    pub potential: PotentialSpec,
    pub group: GroupSpec,
    psi: Vec<GroupElement>,
    generates: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SymmetryReport {
    pub is_symmetric_triple: bool,
    pub is_symmetric_extension: bool,
    /// sup over n and w ∈ 𝒲^n of Φ_n(x)/Φ_n(y), x ∈ [w], y ∈ [w†]; infinite
    /// when the ratio grows with n.
    pub distortion_bound: f64,
    /// Per-symbol growth of log of that ratio; 0 when bounded.
    pub ratio_growth: f64,
}

impl ExtensionSpec {
    pub fn new(shift: ShiftSpec, potential: PotentialSpec, group: GroupSpec, psi: Vec<GroupElement>) -> Result<Self> {
        if psi.len() != shift.len() {
            return Err(Error::Input(format!("psi has {} entries for {} symbols", psi.len(), shift.len())));
        }
        for g in &psi {
            group.validate(g)?;
        }
        let generates = semigroup_reaches_generators(&group, &psi, 6);
        Ok(ExtensionSpec { shift, potential, group, psi, generates })
    }

    pub fn psi(&self, a: usize) -> &GroupElement {
        &self.psi[a]
    }

    pub fn psi_values(&self) -> &[GroupElement] {
        &self.psi
    }

    /// Whether products of ψ-values of length ≤ 6 reach every element of
    /// word length 1 (the semigroup-generation prerequisite of transitivity).
    pub fn generates_semigroup(&self) -> bool {
        self.generates
    }

    /// Largest word length of a single step ψ(a).
    pub fn max_step(&self) -> usize {
        self.psi.iter().map(|g| self.group.word_length(g)).max().unwrap_or(0)
    }

    /// ψ_n(w) = ψ(w_1)···ψ(w_n); the identity for the empty word.
    pub fn psi_n(&self, w: &[usize]) -> GroupElement {
        w.iter().fold(self.group.identity(), |acc, &a| self.group.multiply(&acc, &self.psi[a]).expect("validated"))
    }

    /// (x, g) ↦ (θx, g·ψ(x_1)).
    pub fn step(&self, x: &[usize], g: &GroupElement) -> Result<(Word, GroupElement)> {
        if x.len() < 2 {
            return Err(Error::Input("cannot shift a representative of length < 2".into()));
        }
        Ok((x[1..].to_vec(), self.group.multiply(g, &self.psi[x[0]])?))
    }

    /// Default base point ξ: the least admissible word of the potential's
    /// depth starting with the first symbol.
    pub fn default_xi(&self) -> Word {
        self.shift.least_extension(&[0], self.potential.depth().max(1))
    }

    /// Same extension with a different potential.
    pub fn with_potential(&self, potential: PotentialSpec) -> ExtensionSpec {
        ExtensionSpec { potential, ..self.clone() }
    }

    pub fn check_symmetric(&self) -> Result<SymmetryReport> {
        let dagger = self.shift.dagger().ok_or_else(|| Error::Unsupported("no dagger map configured".into()))?.to_vec();
        let triple = self.shift.check_dagger()?
            && (0..self.shift.len()).all(|a| self.psi[dagger[a]] == self.group.inverse(&self.psi[a]));
        if !triple {
            return Ok(SymmetryReport {
                is_symmetric_triple: false,
                is_symmetric_extension: false,
                distortion_bound: f64::INFINITY,
                ratio_growth: f64::NAN,
            });
        }
        let m = self.potential.depth();
        let horizon = 2 * m + 2;
        let mut sup_log = Vec::with_capacity(horizon);
        for n in 1..=horizon {
            let mut best: f64 = 0.0;
            for w in self.shift.words_of_length(n) {
                let wd = self.shift.dagger_word(&w)?;
                let (lo_w, hi_w) = self.log_phi_range(&w)?;
                let (lo_d, hi_d) = self.log_phi_range(&wd)?;
                best = best.max(hi_w - lo_d).max(hi_d - lo_w);
            }
            sup_log.push(best);
        }
        let growth = (sup_log[horizon - 1] - sup_log[horizon - 2]).max(0.0);
        let bounded = growth <= 1e-12 * (1.0 + sup_log[horizon - 1].abs());
        let sup = sup_log.iter().copied().fold(0.0, f64::max);
        Ok(SymmetryReport {
            is_symmetric_triple: true,
            is_symmetric_extension: bounded,
            distortion_bound: if bounded { sup.exp() } else { f64::INFINITY },
            ratio_growth: if bounded { 0.0 } else { growth },
        })
    }

    /// Range of log Φ_n over points of [w], n = |w|.
    fn log_phi_range(&self, w: &[usize]) -> Result<(f64, f64)> {
        let n = w.len();
        let m = self.potential.depth();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        if m == 1 {
            let v = self.potential.log_phi_n(&self.shift, w, n)?;
            return Ok((v, v));
        }
        for z in self.shift.words_of_length(m - 1) {
            if !self.shift.allowed(w[n - 1], z[0]) {
                continue;
            }
            let x: Word = w.iter().chain(&z).copied().collect();
            let v = self.potential.log_phi_n(&self.shift, &x, n)?;
            lo = lo.min(v);
            hi = hi.max(v);
        }
        Ok((lo, hi))
    }
}

fn semigroup_reaches_generators(group: &GroupSpec, psi: &[GroupElement], max_len: usize) -> bool {
    let Ok(targets) = group.ball(1) else { return false };
    let mut seen: HashSet<GroupElement> = HashSet::new();
    let mut frontier: Vec<GroupElement> = vec![group.identity()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for g in &frontier {
            for s in psi {
                let h = group.multiply(g, s).expect("validated");
                if group.word_length(&h) <= max_len && seen.insert(h.clone()) {
                    next.push(h);
                }
            }
        }
        frontier = next;
    }
    targets.iter().filter(|g| group.word_length(g) == 1).all(|g| seen.contains(g))
}
