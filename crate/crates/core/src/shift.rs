//! Finite-alphabet topological Markov chains: words, cylinders, the metric
//! d_r, mixing and the symbol involution †.

use crate::error::{Error, Result};

/// A word is a sequence of symbol indices into [`ShiftSpec::symbols`].
pub type Word = Vec<usize>;

#[derive(Debug, Clone, PartialEq)]
pub struct ShiftSpec {
    symbols: Vec<String>,
    adjacency: Vec<Vec<bool>>,
    dagger: Option<Vec<usize>>,
}

/// Parameter r of the metric d_r(x, y) = r^(length of common prefix).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricParam {
    r: f64,
}

impl MetricParam {
    pub fn new(r: f64) -> Result<Self> {
        if !(r > 0.0 && r < 1.0) {
            return Err(Error::Input(format!("metric parameter r={r} must lie in (0,1)")));
        }
        Ok(MetricParam { r })
    }

    pub fn r(&self) -> f64 {
        self.r
    }
}

impl Default for MetricParam {
    fn default() -> Self {
        MetricParam { r: 0.5 }
    }
}

impl ShiftSpec {
    pub fn new(symbols: Vec<String>, adjacency: Vec<Vec<u8>>, dagger: Option<Vec<usize>>) -> Result<Self> {
        let k = symbols.len();
        if k == 0 {
            return Err(Error::Input("alphabet is empty".into()));
        }
        for (i, s) in symbols.iter().enumerate() {
            if symbols[..i].contains(s) {
                return Err(Error::Input(format!("duplicate symbol `{s}`")));
            }
        }
        if adjacency.len() != k || adjacency.iter().any(|row| row.len() != k) {
            return Err(Error::Input(format!("adjacency must be {k}x{k}")));
        }
        if adjacency.iter().flatten().any(|&a| a > 1) {
            return Err(Error::Input("adjacency entries must be 0 or 1".into()));
        }
        let adj: Vec<Vec<bool>> = adjacency.iter().map(|row| row.iter().map(|&a| a == 1).collect()).collect();
        for i in 0..k {
            if !adj[i].iter().any(|&a| a) {
                return Err(Error::Structural(format!("row of symbol `{}` is all zero", symbols[i])));
            }
            if !(0..k).any(|j| adj[j][i]) {
                return Err(Error::Structural(format!("column of symbol `{}` is all zero", symbols[i])));
            }
        }
        if let Some(d) = &dagger {
            if d.len() != k || d.iter().any(|&j| j >= k) {
                return Err(Error::Input("dagger must map every symbol to a symbol".into()));
            }
        }
        Ok(ShiftSpec { symbols, adjacency: adj, dagger })
    }

    /// Full shift on the given symbols.
    pub fn full(symbols: Vec<String>, dagger: Option<Vec<usize>>) -> Result<Self> {
        let k = symbols.len();
        Self::new(symbols, vec![vec![1; k]; k], dagger)
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn symbol_name(&self, a: usize) -> &str {
        &self.symbols[a]
    }

    pub fn symbol_index(&self, name: &str) -> Result<usize> {
        self.symbols
            .iter()
            .position(|s| s == name)
            .ok_or_else(|| Error::Input(format!("unknown symbol `{name}`")))
    }

    pub fn dagger(&self) -> Option<&[usize]> {
        self.dagger.as_deref()
    }

    pub fn allowed(&self, a: usize, b: usize) -> bool {
        self.adjacency[a][b]
    }

    pub fn is_full(&self) -> bool {
        self.adjacency.iter().flatten().all(|&a| a)
    }

    pub fn adjacency_matrix(&self) -> Vec<Vec<u8>> {
        self.adjacency.iter().map(|r| r.iter().map(|&a| a as u8).collect()).collect()
    }

    pub fn is_admissible(&self, w: &[usize]) -> Result<bool> {
        if w.is_empty() {
            return Err(Error::Input("empty word".into()));
        }
        if let Some(&bad) = w.iter().find(|&&a| a >= self.len()) {
            return Err(Error::Input(format!("unknown symbol id {bad}")));
        }
        Ok(w.windows(2).all(|p| self.adjacency[p[0]][p[1]]))
    }

    pub(crate) fn admissible_unchecked(&self, w: &[usize]) -> bool {
        w.windows(2).all(|p| self.adjacency[p[0]][p[1]])
    }

    /// Parse a word written as symbol names separated by spaces or commas,
    /// or as concatenated single-character names.
    pub fn parse_word(&self, s: &str) -> Result<Word> {
        let s = s.trim();
        if s.is_empty() {
            return Ok(Vec::new());
        }
        if s.contains([' ', ',']) {
            return s
                .split([' ', ','])
                .filter(|t| !t.is_empty())
                .map(|t| self.symbol_index(t))
                .collect();
        }
        if let Ok(a) = self.symbol_index(s) {
            return Ok(vec![a]);
        }
        if self.symbols.iter().all(|n| n.chars().count() == 1) {
            return s.chars().map(|c| self.symbol_index(&c.to_string())).collect();
        }
        Err(Error::Input(format!("cannot parse word `{s}`")))
    }

    pub fn format_word(&self, w: &[usize]) -> String {
        let names: Vec<&str> = w.iter().map(|&a| self.symbols[a].as_str()).collect();
        if self.symbols.iter().all(|n| n.chars().count() == 1) {
            names.concat()
        } else {
            names.join(" ")
        }
    }

    /// Admissible words of length n in lexicographic order of symbol index.
    pub fn words_of_length(&self, n: usize) -> Words<'_> {
        Words { spec: self, n, stack: Vec::new(), started: false }
    }

    /// Number of admissible words of length n, computed from powers of the
    /// adjacency matrix.
    pub fn count_words(&self, n: usize) -> u128 {
        if n == 0 {
            return 1;
        }
        let k = self.len();
        let mut v = vec![1u128; k];
        for _ in 1..n {
            let mut next = vec![0u128; k];
            for a in 0..k {
                for b in 0..k {
                    if self.adjacency[a][b] {
                        next[a] += v[b];
                    }
                }
            }
            v = next;
        }
        v.iter().sum()
    }

    /// True iff some power A^N with N <= horizon is strictly positive.
    pub fn is_mixing(&self, horizon: usize) -> bool {
        let k = self.len();
        let a = &self.adjacency;
        let mut p = a.clone();
        for _ in 0..horizon {
            if p.iter().flatten().all(|&x| x) {
                return true;
            }
            let mut next = vec![vec![false; k]; k];
            for i in 0..k {
                for j in 0..k {
                    next[i][j] = (0..k).any(|l| p[i][l] && a[l][j]);
                }
            }
            p = next;
        }
        false
    }

    /// Checks that † is an involution and that (a,b) is admissible iff
    /// (†b, †a) is.
    pub fn check_dagger(&self) -> Result<bool> {
        let d = self.dagger.as_ref().ok_or_else(|| Error::Unsupported("no dagger map configured".into()))?;
        let k = self.len();
        if (0..k).any(|a| d[d[a]] != a) {
            return Ok(false);
        }
        for a in 0..k {
            for b in 0..k {
                if self.adjacency[a][b] != self.adjacency[d[b]][d[a]] {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }

    /// w† = (†w_n, ..., †w_1).
    pub fn dagger_word(&self, w: &[usize]) -> Result<Word> {
        let d = self.dagger.as_ref().ok_or_else(|| Error::Unsupported("no dagger map configured".into()))?;
        Ok(w.iter().rev().map(|&a| d[a]).collect())
    }

    /// Extend w to length `len` by the lexicographically least admissible
    /// continuation. This is the representative point of the cylinder [w].
    pub fn least_extension(&self, w: &[usize], len: usize) -> Word {
        let mut out = w.to_vec();
        while out.len() < len {
            let next = match out.last() {
                None => 0,
                Some(&a) => (0..self.len()).find(|&b| self.adjacency[a][b]).expect("no zero rows"),
            };
            out.push(next);
        }
        out
    }

    /// d_r between cylinder representatives: r^(common prefix length).
    pub fn metric(&self, x: &[usize], y: &[usize], m: MetricParam) -> Result<f64> {
        if x.is_empty() || y.is_empty() {
            return Err(Error::Input("metric of empty word".into()));
        }
        Ok(m.r.powi(common_prefix(x, y) as i32))
    }
}

pub fn common_prefix(x: &[usize], y: &[usize]) -> usize {
    x.iter().zip(y).take_while(|(a, b)| a == b).count()
}

/// Lexicographic enumeration of admissible words of a fixed length.
pub struct Words<'a> {
    spec: &'a ShiftSpec,
    n: usize,
    stack: Vec<usize>,
    started: bool,
}

impl Words<'_> {
    fn fill_from(&mut self, start_len: usize) -> bool {
        // extend stack to length n with least admissible choices
        let _ = start_len;
        while self.stack.len() < self.n {
            let next = match self.stack.last() {
                None => 0,
                Some(&a) => match (0..self.spec.len()).find(|&b| self.spec.allowed(a, b)) {
                    Some(b) => b,
                    None => return false,
                },
            };
            self.stack.push(next);
        }
        true
    }

    fn advance(&mut self) -> bool {
        while let Some(last) = self.stack.pop() {
            let prev = self.stack.last().copied();
            let next = ((last + 1)..self.spec.len()).find(|&b| prev.is_none_or(|a| self.spec.allowed(a, b)));
            if let Some(b) = next {
                self.stack.push(b);
                let l = self.stack.len();
                if self.fill_from(l) {
                    return true;
                }
            }
        }
        false
    }
}

impl Iterator for Words<'_> {
    type Item = Word;

    fn next(&mut self) -> Option<Word> {
        if self.n == 0 {
            return None;
        }
        if !self.started {
            self.started = true;
            if !self.fill_from(0) {
                return None;
            }
            return Some(self.stack.clone());
        }
        if self.advance() {
            Some(self.stack.clone())
        } else {
            None
        }
    }
}

/// All admissible words of length 1..=max_len, shortest first.
pub fn words_up_to(spec: &ShiftSpec, max_len: usize) -> Vec<Word> {
    (1..=max_len).flat_map(|n| spec.words_of_length(n)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    fn golden() -> ShiftSpec {
        ShiftSpec::new(names(&["1", "2"]), vec![vec![1, 1], vec![1, 0]], None).unwrap()
    }

    #[test]
    fn admissibility() {
        let full = ShiftSpec::full(names(&["1", "2"]), None).unwrap();
        assert!(full.is_admissible(&[0, 1, 0]).unwrap());
        let s = ShiftSpec::new(names(&["1", "2"]), vec![vec![1, 0], vec![1, 1]], None).unwrap();
        assert!(!s.is_admissible(&[0, 1]).unwrap());
        assert!(!golden().is_admissible(&[1, 1]).unwrap());
        assert!(golden().is_admissible(&[5]).is_err());
        assert!(golden().is_admissible(&[]).is_err());
    }

    #[test]
    fn zero_rows_rejected() {
        let r = ShiftSpec::new(names(&["a", "b"]), vec![vec![1, 1], vec![0, 0]], None);
        assert!(matches!(r, Err(Error::Structural(_))));
    }

    #[test]
    fn enumeration() {
        let full = ShiftSpec::full(names(&["1", "2"]), None).unwrap();
        assert_eq!(full.words_of_length(2).count(), 4);
        let g: Vec<Word> = golden().words_of_length(3).collect();
        // 111 112 121 211 212
        assert_eq!(g, vec![vec![0, 0, 0], vec![0, 0, 1], vec![0, 1, 0], vec![1, 0, 0], vec![1, 0, 1]]);
        assert_eq!(golden().words_of_length(1).collect::<Vec<_>>(), vec![vec![0], vec![1]]);
        assert_eq!(golden().count_words(3), 5);
    }

    #[test]
    fn metric_examples() {
        let full = ShiftSpec::full(names(&["1", "2"]), None).unwrap();
        let m = MetricParam::default();
        assert!(full.metric(&[0, 1, 0], &[0, 1, 0], m).unwrap() <= 0.125);
        assert_eq!(full.metric(&[0, 1], &[1, 0], m).unwrap(), 1.0);
        assert_eq!(full.metric(&[0, 0, 1], &[0, 0, 0], m).unwrap(), 0.25);
        assert!(full.metric(&[], &[0], m).is_err());
        assert!(MetricParam::new(1.0).is_err());
    }

    #[test]
    fn mixing() {
        let full = ShiftSpec::full(names(&["1", "2"]), None).unwrap();
        assert!(full.is_mixing(1));
        let perm = ShiftSpec::new(names(&["1", "2"]), vec![vec![0, 1], vec![1, 0]], None).unwrap();
        assert!(!perm.is_mixing(50));
        assert!(!golden().is_mixing(1));
        assert!(golden().is_mixing(2));
    }

    #[test]
    fn dagger() {
        let z = ShiftSpec::full(names(&["+1", "-1"]), Some(vec![1, 0])).unwrap();
        assert!(z.check_dagger().unwrap());
        let g = ShiftSpec::new(names(&["1", "2"]), vec![vec![1, 1], vec![1, 0]], Some(vec![0, 1])).unwrap();
        assert!(g.check_dagger().unwrap());
        let bad = ShiftSpec::full(names(&["a", "b", "c"]), Some(vec![1, 2, 0])).unwrap();
        assert!(!bad.check_dagger().unwrap());
        assert!(golden().check_dagger().is_err());
    }

    #[test]
    fn least_extension_is_admissible() {
        let g = golden();
        let x = g.least_extension(&[1], 5);
        assert_eq!(x, vec![1, 0, 0, 0, 0]);
        assert!(g.is_admissible(&x).unwrap());
    }

    #[test]
    fn parse_and_format() {
        let z = ShiftSpec::full(names(&["+1", "-1"]), None).unwrap();
        assert_eq!(z.parse_word("+1 -1").unwrap(), vec![0, 1]);
        assert_eq!(z.format_word(&[0, 1]), "+1 -1");
        let g = golden();
        assert_eq!(g.parse_word("121").unwrap(), vec![0, 1, 0]);
    }
}
