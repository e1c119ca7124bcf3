//! Deck groups: ℤ^d, free groups F_d and finite groups given by a table.

use std::collections::{HashMap, VecDeque};
use std::fmt;

use crate::error::{Error, Result};
use rayon::prelude::*;

/// Default radius cap for ball enumeration in free groups.
pub const FREE_BALL_CAP: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GroupElement {
    /// Integer vector of length d.
    Lattice(Vec<i64>),
    /// Reduced word in the generators: entry `i` is g_i, `-i` is g_i^{-1}.
    Free(Vec<i32>),
    /// Index into the multiplication table.
    Table(usize),
}

impl fmt::Display for GroupElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupElement::Lattice(v) => write!(f, "{v:?}"),
            GroupElement::Free(v) => write!(f, "{v:?}"),
            GroupElement::Table(i) => write!(f, "{i}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GroupSpec {
    Lattice { d: usize },
    Free { d: usize, ball_cap: usize },
    Table(TableGroup),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableGroup {
    mul: Vec<Vec<usize>>,
    inv: Vec<usize>,
    identity: usize,
    /// Cayley-graph distance from the identity w.r.t. the declared generators.
    dist: Vec<usize>,
}

impl TableGroup {
    /// Builds a finite group from its multiplication table; the group axioms
    /// are verified exhaustively. `generators` defaults to all elements.
    pub fn new(mul: Vec<Vec<usize>>, generators: Option<Vec<usize>>) -> Result<Self> {
        let n = mul.len();
        if n == 0 || mul.iter().any(|r| r.len() != n || r.iter().any(|&x| x >= n)) {
            return Err(Error::Input("multiplication table must be square with entries < order".into()));
        }
        let identity = (0..n)
            .find(|&e| (0..n).all(|a| mul[e][a] == a && mul[a][e] == a))
            .ok_or_else(|| Error::Structural("table has no identity".into()))?;
        let mut inv = vec![0; n];
        for a in 0..n {
            inv[a] = (0..n)
                .find(|&b| mul[a][b] == identity && mul[b][a] == identity)
                .ok_or_else(|| Error::Structural(format!("element {a} has no inverse")))?;
        }
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    if mul[mul[a][b]][c] != mul[a][mul[b][c]] {
                        return Err(Error::Structural(format!("associativity fails at ({a},{b},{c})")));
                    }
                }
            }
        }
        let gens = generators.unwrap_or_else(|| (0..n).collect());
        if gens.iter().any(|&g| g >= n) {
            return Err(Error::Input("generator index out of range".into()));
        }
        let mut dist = vec![usize::MAX; n];
        dist[identity] = 0;
        let mut queue = VecDeque::from([identity]);
        while let Some(a) = queue.pop_front() {
            for &g in &gens {
                for b in [mul[a][g], mul[a][inv[g]]] {
                    if dist[b] == usize::MAX {
                        dist[b] = dist[a] + 1;
                        queue.push_back(b);
                    }
                }
            }
        }
        if dist.contains(&usize::MAX) {
            return Err(Error::Structural("declared generators do not generate the group".into()));
        }
        Ok(TableGroup { mul, inv, identity, dist })
    }

    pub fn order(&self) -> usize {
        self.mul.len()
    }

    pub fn identity_index(&self) -> usize {
        self.identity
    }

    pub fn table(&self) -> &[Vec<usize>] {
        &self.mul
    }
}

impl GroupSpec {
    pub fn lattice(d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::Input("lattice dimension must be positive".into()));
        }
        Ok(GroupSpec::Lattice { d })
    }

    pub fn free(d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::Input("free group rank must be positive".into()));
        }
        Ok(GroupSpec::Free { d, ball_cap: FREE_BALL_CAP })
    }

    pub fn with_ball_cap(self, cap: usize) -> Self {
        match self {
            GroupSpec::Free { d, .. } => GroupSpec::Free { d, ball_cap: cap },
            other => other,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            GroupSpec::Lattice { .. } => "lattice",
            GroupSpec::Free { .. } => "free",
            GroupSpec::Table(_) => "table",
        }
    }

    pub fn identity(&self) -> GroupElement {
        match self {
            GroupSpec::Lattice { d } => GroupElement::Lattice(vec![0; *d]),
            GroupSpec::Free { .. } => GroupElement::Free(Vec::new()),
            GroupSpec::Table(t) => GroupElement::Table(t.identity),
        }
    }

    /// Checks that an element belongs to this group and is in canonical form.
    pub fn validate(&self, g: &GroupElement) -> Result<()> {
        match (self, g) {
            (GroupSpec::Lattice { d }, GroupElement::Lattice(v)) if v.len() == *d => Ok(()),
            (GroupSpec::Free { d, .. }, GroupElement::Free(w)) => {
                if w.iter().any(|&i| i == 0 || i.unsigned_abs() as usize > *d) {
                    return Err(Error::Input(format!("free-group letter out of range in {w:?}")));
                }
                if w.windows(2).any(|p| p[0] == -p[1]) {
                    return Err(Error::Input(format!("free-group word {w:?} is not reduced")));
                }
                Ok(())
            }
            (GroupSpec::Table(t), GroupElement::Table(i)) if *i < t.order() => Ok(()),
            _ => Err(Error::Input(format!("element {g} does not belong to the {} group", self.kind()))),
        }
    }

    pub fn multiply(&self, a: &GroupElement, b: &GroupElement) -> Result<GroupElement> {
        match (self, a, b) {
            (GroupSpec::Lattice { d }, GroupElement::Lattice(x), GroupElement::Lattice(y))
                if x.len() == *d && y.len() == *d =>
            {
                Ok(GroupElement::Lattice(x.iter().zip(y).map(|(p, q)| p + q).collect()))
            }
            (GroupSpec::Free { .. }, GroupElement::Free(x), GroupElement::Free(y)) => {
                let mut out = x.clone();
                for &l in y {
                    if out.last() == Some(&-l) {
                        out.pop();
                    } else {
                        out.push(l);
                    }
                }
                Ok(GroupElement::Free(out))
            }
            (GroupSpec::Table(t), GroupElement::Table(i), GroupElement::Table(j))
                if *i < t.order() && *j < t.order() =>
            {
                Ok(GroupElement::Table(t.mul[*i][*j]))
            }
            _ => Err(Error::Input(format!("cannot multiply {a} and {b} in the {} group", self.kind()))),
        }
    }

    pub fn inverse(&self, g: &GroupElement) -> GroupElement {
        match (self, g) {
            (_, GroupElement::Lattice(v)) => GroupElement::Lattice(v.iter().map(|x| -x).collect()),
            (_, GroupElement::Free(w)) => GroupElement::Free(w.iter().rev().map(|x| -x).collect()),
            (GroupSpec::Table(t), GroupElement::Table(i)) => GroupElement::Table(t.inv[*i]),
            (_, GroupElement::Table(i)) => GroupElement::Table(*i),
        }
    }

    /// Word length with respect to ±e_i (lattice), the free generators, or
    /// the declared generators of a table group.
    pub fn word_length(&self, g: &GroupElement) -> usize {
        match (self, g) {
            (_, GroupElement::Lattice(v)) => v.iter().map(|x| x.unsigned_abs() as usize).sum(),
            (_, GroupElement::Free(w)) => w.len(),
            (GroupSpec::Table(t), GroupElement::Table(i)) => t.dist[*i],
            _ => 0,
        }
    }

    /// Number of elements of word length ≤ radius (saturating).
    pub fn ball_size(&self, radius: usize) -> u128 {
        match self {
            GroupSpec::Lattice { d } => {
                // points of ℓ1 norm ≤ r in ℤ^d: Σ_k 2^k C(d,k) C(r,k)
                let mut total = 0u128;
                for k in 0..=(*d).min(radius) {
                    total = total.saturating_add((1u128 << k) * binom(*d as u128, k as u128) * binom(radius as u128, k as u128));
                }
                total
            }
            GroupSpec::Free { d, .. } => {
                let (a, b) = (2 * *d as u128, 2 * *d as u128 - 1);
                let mut total = 1u128;
                let mut sphere = a;
                for _ in 1..=radius {
                    total = total.saturating_add(sphere);
                    sphere = sphere.saturating_mul(b);
                }
                total
            }
            GroupSpec::Table(t) => t.dist.iter().filter(|&&x| x <= radius).count() as u128,
        }
    }

    /// All elements of word length ≤ radius, sorted by (length, canonical order).
    pub fn ball(&self, radius: usize) -> Result<Vec<GroupElement>> {
        let mut out = match self {
            GroupSpec::Lattice { d } => {
                let mut out = Vec::new();
                let mut cur = vec![0i64; *d];
                lattice_fill(&mut cur, 0, radius as i64, &mut out);
                out
            }
            GroupSpec::Free { d, ball_cap } => {
                if radius > *ball_cap {
                    return Err(Error::Resource(format!(
                        "free-group ball of radius {radius} exceeds cap {ball_cap} (about {} elements)",
                        self.ball_size(radius)
                    )));
                }
                let d = *d as i32;
                let letters: Vec<i32> = (1..=d).chain((1..=d).map(|i| -i)).collect();
                let mut out = vec![GroupElement::Free(Vec::new())];
                let mut frontier: Vec<Vec<i32>> = vec![Vec::new()];
                for _ in 0..radius {
                    let mut next = Vec::with_capacity(frontier.len() * letters.len());
                    for w in &frontier {
                        for &l in &letters {
                            if w.last() != Some(&-l) {
                                let mut v = w.clone();
                                v.push(l);
                                next.push(v);
                            }
                        }
                    }
                    out.extend(next.iter().cloned().map(GroupElement::Free));
                    frontier = next;
                }
                out
            }
            GroupSpec::Table(t) => (0..t.order()).filter(|&i| t.dist[i] <= radius).map(GroupElement::Table).collect(),
        };
        out.sort_by(|a, b| self.word_length(a).cmp(&self.word_length(b)).then_with(|| a.cmp(b)));
        Ok(out)
    }

    /// Number of elements of the group, if finite.
    pub fn order(&self) -> Option<usize> {
        match self {
            GroupSpec::Table(t) => Some(t.order()),
            _ => None,
        }
    }

    /// Largest word length attained, if the group is finite.
    pub fn diameter(&self) -> Option<usize> {
        match self {
            GroupSpec::Table(t) => t.dist.iter().copied().max(),
            _ => None,
        }
    }
}

fn lattice_fill(cur: &mut Vec<i64>, i: usize, budget: i64, out: &mut Vec<GroupElement>) {
    if i == cur.len() {
        out.push(GroupElement::Lattice(cur.clone()));
        return;
    }
    for x in -budget..=budget {
        cur[i] = x;
        lattice_fill(cur, i + 1, budget - x.abs(), out);
    }
    cur[i] = 0;
}

fn binom(n: u128, k: u128) -> u128 {
    if k > n {
        return 0;
    }
    let mut r = 1u128;
    for i in 0..k {
        r = r * (n - i) / (i + 1);
    }
    r
}

/// A ball of group elements indexed densely, with precomputed left
/// multiplication by a fixed list of elements. Used as DP state space.
/// Indices follow the order of [`GroupSpec::ball`].
#[derive(Debug, Clone)]
pub struct GroupIndex {
    storage: Storage,
    lengths: Vec<u32>,
    identity: u32,
}

#[derive(Debug, Clone)]
enum Storage {
    Listed { elements: Vec<GroupElement>, lookup: HashMap<GroupElement, u32> },
    /// Reduced words ranked in mixed radix: no per-element allocation.
    Free { d: i32, radius: usize, offsets: Vec<u64> },
}

pub const OUTSIDE: u32 = u32::MAX;

/// Position of a letter in the sorted alphabet −d, …, −1, 1, …, d.
fn letter_pos(l: i32, d: i32) -> u64 {
    (if l < 0 { l + d } else { d + l - 1 }) as u64
}

fn letter_at(pos: u64, d: i32) -> i32 {
    let p = pos as i32;
    if p < d {
        p - d
    } else {
        p - d + 1
    }
}

impl GroupIndex {
    pub fn new(spec: &GroupSpec, radius: usize) -> Result<Self> {
        if let GroupSpec::Free { d, ball_cap } = spec {
            if radius > *ball_cap {
                return Err(Error::Resource(format!(
                    "free-group ball of radius {radius} exceeds cap {ball_cap} (about {} elements)",
                    spec.ball_size(radius)
                )));
            }
            let offsets: Vec<u64> = (0..=radius + 1).map(|l| if l == 0 { 0 } else { spec.ball_size(l - 1) as u64 }).collect();
            let total = offsets[radius + 1];
            if total >= OUTSIDE as u64 {
                return Err(Error::Resource(format!("free-group ball of radius {radius} has {total} elements")));
            }
            let mut lengths = Vec::with_capacity(total as usize);
            for l in 0..=radius {
                lengths.extend(std::iter::repeat(l as u32).take((offsets[l + 1] - offsets[l]) as usize));
            }
            return Ok(GroupIndex { storage: Storage::Free { d: *d as i32, radius, offsets }, lengths, identity: 0 });
        }
        let elements = spec.ball(radius)?;
        let lengths = elements.iter().map(|g| spec.word_length(g) as u32).collect();
        let lookup: HashMap<GroupElement, u32> = elements.iter().cloned().enumerate().map(|(i, g)| (g, i as u32)).collect();
        let identity = lookup[&spec.identity()];
        Ok(GroupIndex { storage: Storage::Listed { elements, lookup }, lengths, identity })
    }

    pub fn len(&self) -> usize {
        self.lengths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lengths.is_empty()
    }

    pub fn identity(&self) -> u32 {
        self.identity
    }

    pub fn element(&self, i: u32) -> GroupElement {
        match &self.storage {
            Storage::Listed { elements, .. } => elements[i as usize].clone(),
            Storage::Free { d, offsets, .. } => {
                let len = self.lengths[i as usize] as usize;
                let mut r = i as u64 - offsets[len];
                let base = 2 * *d as u64 - 1;
                let mut word: Vec<i32> = Vec::with_capacity(len);
                for k in 0..len {
                    let place = base.pow((len - 1 - k) as u32);
                    let digit = r / place;
                    r %= place;
                    let pos = match word.last() {
                        None => digit,
                        Some(&prev) => {
                            let skip = letter_pos(-prev, *d);
                            if digit >= skip {
                                digit + 1
                            } else {
                                digit
                            }
                        }
                    };
                    word.push(letter_at(pos, *d));
                }
                GroupElement::Free(word)
            }
        }
    }

    pub fn length(&self, i: u32) -> u32 {
        self.lengths[i as usize]
    }

    pub fn index_of(&self, g: &GroupElement) -> Option<u32> {
        match (&self.storage, g) {
            (Storage::Listed { lookup, .. }, _) => lookup.get(g).copied(),
            (Storage::Free { d, radius, offsets }, GroupElement::Free(w)) => {
                if w.len() > *radius {
                    return None;
                }
                let base = 2 * *d as u64 - 1;
                let mut r = 0u64;
                for (k, &l) in w.iter().enumerate() {
                    let pos = letter_pos(l, *d);
                    let digit = if k == 0 {
                        pos
                    } else {
                        let skip = letter_pos(-w[k - 1], *d);
                        if pos > skip {
                            pos - 1
                        } else {
                            pos
                        }
                    };
                    r = r * base + digit;
                }
                Some((offsets[w.len()] + r) as u32)
            }
            _ => None,
        }
    }

    /// Table t[i] = index of a·h_i, or [`OUTSIDE`].
    pub fn left_table(&self, spec: &GroupSpec, a: &GroupElement) -> Result<Vec<u32>> {
        (0..self.len() as u32)
            .into_par_iter()
            .map(|i| Ok(self.index_of(&spec.multiply(a, &self.element(i))?).unwrap_or(OUTSIDE)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn z(v: &[i64]) -> GroupElement {
        GroupElement::Lattice(v.to_vec())
    }

    fn f(v: &[i32]) -> GroupElement {
        GroupElement::Free(v.to_vec())
    }

    fn klein() -> GroupSpec {
        let mul = vec![vec![0, 1, 2, 3], vec![1, 0, 3, 2], vec![2, 3, 0, 1], vec![3, 2, 1, 0]];
        GroupSpec::Table(TableGroup::new(mul, Some(vec![1, 2])).unwrap())
    }

    #[test]
    fn multiply_examples() {
        let z2 = GroupSpec::lattice(2).unwrap();
        assert_eq!(z2.multiply(&z(&[1, 0]), &z(&[0, -1])).unwrap(), z(&[1, -1]));
        let f2 = GroupSpec::free(2).unwrap();
        assert_eq!(f2.multiply(&f(&[1]), &f(&[-1])).unwrap(), f2.identity());
        assert_eq!(f2.multiply(&f(&[1, 2]), &f(&[-2, -1])).unwrap(), f2.identity());
        assert!(f2.multiply(&f(&[1]), &z(&[1, 0])).is_err());
    }

    #[test]
    fn word_lengths() {
        let z1 = GroupSpec::lattice(1).unwrap();
        assert_eq!(z1.word_length(&z(&[3])), 3);
        let f2 = GroupSpec::free(2).unwrap();
        assert_eq!(f2.word_length(&f(&[1, 2, -1])), 3);
        assert_eq!(f2.word_length(&f2.identity()), 0);
        assert_eq!(klein().word_length(&GroupElement::Table(3)), 2);
    }

    #[test]
    fn balls() {
        let z1 = GroupSpec::lattice(1).unwrap();
        let b = z1.ball(2).unwrap();
        assert_eq!(b.len(), 5);
        assert_eq!(b[0], z(&[0]));
        let f2 = GroupSpec::free(2).unwrap();
        assert_eq!(f2.ball(2).unwrap().len(), 17);
        assert_eq!(f2.ball(0).unwrap(), vec![f2.identity()]);
        assert!(matches!(f2.ball(17), Err(Error::Resource(_))));
        let z3 = GroupSpec::lattice(3).unwrap();
        for r in 0..6 {
            assert_eq!(z3.ball(r).unwrap().len() as u128, z3.ball_size(r));
        }
    }

    #[test]
    fn free_sphere_sizes() {
        let f2 = GroupSpec::free(2).unwrap();
        let ball = f2.ball(8).unwrap();
        for k in 1..=8usize {
            let count = ball.iter().filter(|g| f2.word_length(g) == k).count();
            assert_eq!(count, 4 * 3usize.pow(k as u32 - 1));
        }
        assert_eq!(f2.ball_size(8), ball.len() as u128);
    }

    #[test]
    fn axioms_on_balls() {
        for spec in [GroupSpec::lattice(2).unwrap(), GroupSpec::free(2).unwrap(), klein()] {
            let ball = spec.ball(2).unwrap();
            let id = spec.identity();
            for a in &ball {
                assert_eq!(spec.multiply(a, &id).unwrap(), *a);
                assert_eq!(spec.multiply(&spec.inverse(a), a).unwrap(), id);
                for b in &ball {
                    let ab = spec.multiply(a, b).unwrap();
                    for c in ball.iter().take(9) {
                        assert_eq!(spec.multiply(&ab, c).unwrap(), spec.multiply(a, &spec.multiply(b, c).unwrap()).unwrap());
                    }
                }
            }
        }
    }

    #[test]
    fn table_rejects_non_group() {
        let bad = vec![vec![0, 1], vec![1, 1]];
        assert!(TableGroup::new(bad, None).is_err());
    }

    #[test]
    fn index_left_tables() {
        let f2 = GroupSpec::free(2).unwrap();
        let idx = GroupIndex::new(&f2, 3).unwrap();
        let t = idx.left_table(&f2, &f(&[1])).unwrap();
        let i = idx.index_of(&f(&[-1, 2])).unwrap();
        assert_eq!(idx.element(t[i as usize]), f(&[2]));
        let far = idx.index_of(&f(&[2, 2, 2])).unwrap();
        assert_eq!(t[far as usize], OUTSIDE);
    }

    #[test]
    fn free_rank_matches_ball_order() {
        for d in 1..=3 {
            let spec = GroupSpec::free(d).unwrap();
            let idx = GroupIndex::new(&spec, 4).unwrap();
            let ball = spec.ball(4).unwrap();
            assert_eq!(idx.len(), ball.len());
            for (i, g) in ball.iter().enumerate() {
                assert_eq!(idx.index_of(g), Some(i as u32));
                assert_eq!(&idx.element(i as u32), g);
                assert_eq!(idx.length(i as u32) as usize, spec.word_length(g));
            }
            assert_eq!(idx.index_of(&GroupElement::Free(vec![1; 5])), None);
            assert_eq!(idx.identity(), 0);
        }
    }

    fn free_word() -> impl Strategy<Value = Vec<i32>> {
        prop::collection::vec(prop::sample::select(vec![1, -1, 2, -2]), 0..8)
    }

    proptest! {
        #[test]
        fn free_products_are_reduced_and_associative(a in free_word(), b in free_word(), c in free_word()) {
            let f2 = GroupSpec::free(2).unwrap();
            let id = f2.identity();
            let ga = f2.multiply(&id, &f(&a)).unwrap();
            let gb = f2.multiply(&id, &f(&b)).unwrap();
            let gc = f2.multiply(&id, &f(&c)).unwrap();
            let ab = f2.multiply(&ga, &gb).unwrap();
            prop_assert!(f2.validate(&ab).is_ok());
            prop_assert_eq!(
                f2.multiply(&ab, &gc).unwrap(),
                f2.multiply(&ga, &f2.multiply(&gb, &gc).unwrap()).unwrap()
            );
            let la = f2.word_length(&ga) as i64;
            let lb = f2.word_length(&gb) as i64;
            prop_assert!((f2.word_length(&ab) as i64 - la).abs() <= lb);
        }

        #[test]
        fn lattice_triangle(a in prop::collection::vec(-5i64..5, 2), b in prop::collection::vec(-5i64..5, 2)) {
            let z2 = GroupSpec::lattice(2).unwrap();
            let ab = z2.multiply(&z(&a), &z(&b)).unwrap();
            let la = z2.word_length(&z(&a)) as i64;
            prop_assert!((z2.word_length(&ab) as i64 - la).abs() <= z2.word_length(&z(&b)) as i64);
        }
    }
}
