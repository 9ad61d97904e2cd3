//! Automorphisms of the 3-ary rooted tree truncated at a finite level.
//!
//! Automorphisms act on the right of words and `compose(a, b)` means "apply `a`, then `b`".
//! An element is stored as its portrait: one permutation of {0,1,2} per internal vertex,
//! in breadth-first order. The vertex `u` of length `k` sits at index `(3^k - 1)/2 + int(u)`
//! where `int(u)` reads `u` as a base-3 number, first letter most significant.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Levels above this are rejected outright; 3^20 leaves is far past anything we can store.
pub const MAX_LEVEL: usize = 20;

pub fn pow3(k: usize) -> usize {
    3usize.pow(k as u32)
}

/// Breadth-first index of the first vertex at depth `k`.
pub fn level_offset(k: usize) -> usize {
    (pow3(k) - 1) / 2
}

/// A finite word over {0,1,2}.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Word(Vec<u8>);

impl Word {
    pub fn new(letters: Vec<u8>) -> Result<Self> {
        if let Some(&bad) = letters.iter().find(|&&c| c > 2) {
            return invalid(format!("letter {bad} is not in {{0,1,2}}"));
        }
        Ok(Word(letters))
    }

    pub fn empty() -> Self {
        Word(Vec::new())
    }

    pub fn letters(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Base-3 value, first letter most significant.
    pub fn index(&self) -> usize {
        self.0.iter().fold(0, |acc, &c| acc * 3 + c as usize)
    }

    pub fn from_index(mut index: usize, len: usize) -> Result<Self> {
        if len > MAX_LEVEL || index >= pow3(len) {
            return invalid(format!("index {index} does not fit in a word of length {len}"));
        }
        let mut letters = vec![0u8; len];
        for slot in letters.iter_mut().rev() {
            *slot = (index % 3) as u8;
            index /= 3;
        }
        Ok(Word(letters))
    }

    pub fn concat(&self, other: &Word) -> Word {
        let mut v = self.0.clone();
        v.extend_from_slice(&other.0);
        Word(v)
    }

    pub fn prefix(&self, k: usize) -> Word {
        Word(self.0[..k.min(self.0.len())].to_vec())
    }

    pub fn suffix_from(&self, k: usize) -> Word {
        Word(self.0[k.min(self.0.len())..].to_vec())
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.0 {
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

impl FromStr for Word {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let letters = s
            .chars()
            .map(|ch| match ch {
                '0' => Ok(0),
                '1' => Ok(1),
                '2' => Ok(2),
                other => invalid(format!("bad letter {other:?} in word {s:?}")),
            })
            .collect::<Result<Vec<u8>>>()?;
        Ok(Word(letters))
    }
}

/// A permutation of {0,1,2}, stored as the images of 0, 1 and 2.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Perm3([u8; 3]);

impl Perm3 {
    pub const IDENTITY: Perm3 = Perm3([0, 1, 2]);
    /// The 3-cycle (0,1,2).
    pub const CYCLE: Perm3 = Perm3([1, 2, 0]);
    /// The 3-cycle (0,2,1).
    pub const CYCLE_INV: Perm3 = Perm3([2, 0, 1]);
    /// The transposition (0,1).
    pub const SWAP: Perm3 = Perm3([1, 0, 2]);

    pub fn new(images: [u8; 3]) -> Result<Self> {
        let mut seen = [false; 3];
        for &i in &images {
            if i > 2 || seen[i as usize] {
                return invalid(format!("{images:?} is not a permutation of {{0,1,2}}"));
            }
            seen[i as usize] = true;
        }
        Ok(Perm3(images))
    }

    pub fn all() -> [Perm3; 6] {
        [
            Perm3([0, 1, 2]),
            Perm3([0, 2, 1]),
            Perm3([1, 0, 2]),
            Perm3([1, 2, 0]),
            Perm3([2, 0, 1]),
            Perm3([2, 1, 0]),
        ]
    }

    pub fn images(&self) -> [u8; 3] {
        self.0
    }

    #[inline]
    pub fn apply(&self, c: u8) -> u8 {
        self.0[c as usize]
    }

    /// `self` followed by `other`.
    #[inline]
    pub fn then(&self, other: &Perm3) -> Perm3 {
        Perm3([other.0[self.0[0] as usize], other.0[self.0[1] as usize], other.0[self.0[2] as usize]])
    }

    pub fn inverse(&self) -> Perm3 {
        let mut out = [0u8; 3];
        for (i, &j) in self.0.iter().enumerate() {
            out[j as usize] = i as u8;
        }
        Perm3(out)
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::IDENTITY
    }

    /// +1 for even permutations, -1 for odd ones.
    pub fn sign(&self) -> i8 {
        let fixed = (0..3).filter(|&i| self.0[i] == i as u8).count();
        if fixed == 1 {
            -1
        } else {
            1
        }
    }
}

impl Default for Perm3 {
    fn default() -> Self {
        Perm3::IDENTITY
    }
}

impl fmt::Display for Perm3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}{}", self.0[0], self.0[1], self.0[2])
    }
}

impl FromStr for Perm3 {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let b = s.as_bytes();
        if b.len() != 3 || b.iter().any(|c| !(b'0'..=b'2').contains(c)) {
            return invalid(format!("bad permutation string {s:?}"));
        }
        Perm3::new([b[0] - b'0', b[1] - b'0', b[2] - b'0'])
    }
}

/// Multiset of cycle lengths, kept sorted in decreasing order.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CycleStructure(Vec<u64>);

impl CycleStructure {
    pub fn new(mut lengths: Vec<u64>) -> Result<Self> {
        if lengths.contains(&0) {
            return invalid("cycle lengths must be positive");
        }
        lengths.sort_unstable_by(|a, b| b.cmp(a));
        Ok(CycleStructure(lengths))
    }

    pub fn lengths(&self) -> &[u64] {
        &self.0
    }

    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }

    pub fn num_cycles(&self) -> usize {
        self.0.len()
    }
}

impl fmt::Display for CycleStructure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, l) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{l}")?;
        }
        write!(f, "}}")
    }
}

impl FromStr for CycleStructure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let inner = s.trim().trim_start_matches(['{', '[']).trim_end_matches(['}', ']']);
        let lengths = inner
            .split(',')
            .filter(|t| !t.trim().is_empty())
            .map(|t| {
                t.trim()
                    .parse::<u64>()
                    .map_err(|e| Error::InvalidArgument(format!("bad cycle length {t:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        CycleStructure::new(lengths)
    }
}

/// Cycle structure of an arbitrary permutation of `0..perm.len()`.
pub fn cycle_structure_of(perm: &[u32]) -> CycleStructure {
    let mut seen = vec![false; perm.len()];
    let mut lengths = Vec::new();
    for start in 0..perm.len() {
        if seen[start] {
            continue;
        }
        let mut len = 0u64;
        let mut i = start;
        while !seen[i] {
            seen[i] = true;
            i = perm[i] as usize;
            len += 1;
        }
        lengths.push(len);
    }
    lengths.sort_unstable_by(|a, b| b.cmp(a));
    CycleStructure(lengths)
}

/// A level-n automorphism of the 3-ary tree, stored as a breadth-first portrait.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TreeAut {
    level: usize,
    portrait: Vec<Perm3>,
}

impl TreeAut {
    pub fn identity(level: usize) -> Self {
        assert!(level <= MAX_LEVEL, "level {level} exceeds {MAX_LEVEL}");
        TreeAut { level, portrait: vec![Perm3::IDENTITY; level_offset(level)] }
    }

    pub fn from_portrait(level: usize, portrait: Vec<Perm3>) -> Result<Self> {
        if level > MAX_LEVEL {
            return invalid(format!("level {level} exceeds {MAX_LEVEL}"));
        }
        if portrait.len() != level_offset(level) {
            return invalid(format!(
                "a level-{level} portrait needs {} entries, got {}",
                level_offset(level),
                portrait.len()
            ));
        }
        Ok(TreeAut { level, portrait })
    }

    /// Level-1 element acting on the root by `p`.
    pub fn root(p: Perm3) -> Self {
        TreeAut { level: 1, portrait: vec![p] }
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn portrait(&self) -> &[Perm3] {
        &self.portrait
    }

    pub fn root_perm(&self) -> Perm3 {
        self.portrait.first().copied().unwrap_or(Perm3::IDENTITY)
    }

    pub fn is_identity(&self) -> bool {
        self.portrait.iter().all(Perm3::is_identity)
    }

    /// Permutation at internal vertex `u`.
    pub fn perm_at(&self, u: &Word) -> Result<Perm3> {
        if u.len() >= self.level {
            return invalid(format!("vertex {u} is not internal at level {}", self.level));
        }
        Ok(self.portrait[level_offset(u.len()) + u.index()])
    }

    #[inline]
    fn perm_at_index(&self, depth: usize, idx: usize) -> Perm3 {
        self.portrait[level_offset(depth) + idx]
    }

    pub fn apply(&self, w: &Word) -> Result<Word> {
        if w.len() > self.level {
            return invalid(format!("word {w} is longer than level {}", self.level));
        }
        let mut prefix = 0usize;
        let mut out = Vec::with_capacity(w.len());
        for (k, &c) in w.letters().iter().enumerate() {
            out.push(self.perm_at_index(k, prefix).apply(c));
            prefix = prefix * 3 + c as usize;
        }
        Ok(Word(out))
    }

    /// Image of every vertex at each depth 0..=level, as base-3 indices.
    fn vertex_images(&self) -> Vec<Vec<u32>> {
        let mut images = Vec::with_capacity(self.level + 1);
        images.push(vec![0u32]);
        for k in 0..self.level {
            let prev = &images[k];
            let mut next = vec![0u32; prev.len() * 3];
            for (u, &img) in prev.iter().enumerate() {
                let p = self.perm_at_index(k, u);
                for c in 0..3u8 {
                    next[u * 3 + c as usize] = img * 3 + p.apply(c) as u32;
                }
            }
            images.push(next);
        }
        images
    }

    /// The permutation of the 3^n leaves, indexed in base-3 order.
    pub fn leaf_permutation(&self) -> Vec<u32> {
        let mut cur = vec![0u32];
        for k in 0..self.level {
            let mut next = vec![0u32; cur.len() * 3];
            for (u, &img) in cur.iter().enumerate() {
                let p = self.perm_at_index(k, u);
                next[u * 3] = img * 3 + p.0[0] as u32;
                next[u * 3 + 1] = img * 3 + p.0[1] as u32;
                next[u * 3 + 2] = img * 3 + p.0[2] as u32;
            }
            cur = next;
        }
        cur
    }

    /// Rebuilds the portrait from a leaf permutation. Fails unless the permutation
    /// preserves the tree structure.
    pub fn from_leaf_permutation(level: usize, perm: &[u32]) -> Result<Self> {
        if level > MAX_LEVEL || perm.len() != pow3(level) {
            return invalid(format!("expected {} leaf images for level {level}", pow3(level.min(MAX_LEVEL))));
        }
        let mut portrait = Vec::with_capacity(level_offset(level));
        for k in 0..level {
            let below = pow3(level - k - 1);
            for u in 0..pow3(k) {
                let mut images = [0u8; 3];
                for (c, slot) in images.iter_mut().enumerate() {
                    let leaf = (u * 3 + c) * below;
                    let img = *perm.get(leaf).ok_or_else(|| Error::InvalidArgument("short permutation".into()))?;
                    *slot = ((img as usize / below) % 3) as u8;
                }
                portrait.push(Perm3::new(images)?);
            }
        }
        let a = TreeAut { level, portrait };
        if a.leaf_permutation() != perm {
            return invalid("leaf permutation does not preserve the tree");
        }
        Ok(a)
    }

    fn check_same_level(&self, other: &TreeAut) -> Result<()> {
        if self.level != other.level {
            return invalid(format!("level mismatch: {} vs {}", self.level, other.level));
        }
        Ok(())
    }

    /// `self` then `other`.
    pub fn compose(&self, other: &TreeAut) -> Result<TreeAut> {
        self.check_same_level(other)?;
        let images = self.vertex_images();
        let mut portrait = Vec::with_capacity(self.portrait.len());
        for (k, level_images) in images.iter().enumerate().take(self.level) {
            for (u, &img) in level_images.iter().enumerate() {
                portrait.push(self.perm_at_index(k, u).then(&other.perm_at_index(k, img as usize)));
            }
        }
        Ok(TreeAut { level: self.level, portrait })
    }

    pub fn inverse(&self) -> TreeAut {
        let images = self.vertex_images();
        let mut portrait = vec![Perm3::IDENTITY; self.portrait.len()];
        for (k, level_images) in images.iter().enumerate().take(self.level) {
            let off = level_offset(k);
            for (u, &img) in level_images.iter().enumerate() {
                portrait[off + img as usize] = self.perm_at_index(k, u).inverse();
            }
        }
        TreeAut { level: self.level, portrait }
    }

    pub fn pow(&self, e: u32) -> TreeAut {
        let mut acc = TreeAut::identity(self.level);
        for _ in 0..e {
            acc = acc.compose(self).expect("same level");
        }
        acc
    }

    /// `g^-1 * self * g`, i.e. apply g^-1, then self, then g.
    pub fn conjugate_by(&self, g: &TreeAut) -> Result<TreeAut> {
        g.inverse().compose(self)?.compose(g)
    }

    /// The section at vertex `u`: the automorphism of the subtree below `u`.
    /// Sections at leaves are the level-0 identity.
    pub fn section(&self, u: &Word) -> Result<TreeAut> {
        if u.len() > self.level {
            return invalid(format!("vertex {u} is too deep for level {}", self.level));
        }
        let d = u.len();
        let new_level = self.level - d;
        let base = u.index();
        let mut portrait = Vec::with_capacity(level_offset(new_level));
        for j in 0..new_level {
            let start = base * pow3(j);
            portrait.extend_from_slice(
                &self.portrait[level_offset(d + j) + start..level_offset(d + j) + start + pow3(j)],
            );
        }
        Ok(TreeAut { level: new_level, portrait })
    }

    /// Splits `a` as `(a0, a1, a2)π` with sections indexed by the source child.
    pub fn wreath_decompose(&self) -> Result<([TreeAut; 3], Perm3)> {
        if self.level == 0 {
            return invalid("cannot decompose a level-0 automorphism");
        }
        let s = |c: u8| self.section(&Word(vec![c]));
        Ok(([s(0)?, s(1)?, s(2)?], self.root_perm()))
    }

    /// Builds `(a0, a1, a2)π`, sending `j*c` to `(j)π * (c)a_j`.
    pub fn wreath_compose(sections: [&TreeAut; 3], pi: Perm3) -> Result<TreeAut> {
        let lvl = sections[0].level;
        if sections.iter().any(|s| s.level != lvl) {
            return invalid("sections must share a level");
        }
        if lvl + 1 > MAX_LEVEL {
            return invalid(format!("level {} exceeds {MAX_LEVEL}", lvl + 1));
        }
        let mut portrait = Vec::with_capacity(level_offset(lvl + 1));
        portrait.push(pi);
        for j in 0..lvl {
            for s in &sections {
                let off = level_offset(j);
                portrait.extend_from_slice(&s.portrait[off..off + pow3(j)]);
            }
        }
        Ok(TreeAut { level: lvl + 1, portrait })
    }

    /// Iterated first-coordinate embedding into level `n`: acts as `self` below the vertex `0^(n-level)`.
    pub fn embed(&self, n: usize) -> Result<TreeAut> {
        if n < self.level {
            return invalid(format!("cannot embed level {} into level {n}", self.level));
        }
        let mut a = self.clone();
        while a.level < n {
            let idl = TreeAut::identity(a.level);
            a = TreeAut::wreath_compose([&a, &idl, &idl], Perm3::IDENTITY)?;
        }
        Ok(a)
    }

    pub fn restrict(&self, k: usize) -> Result<TreeAut> {
        if k > self.level {
            return invalid(format!("cannot restrict level {} to level {k}", self.level));
        }
        Ok(TreeAut { level: k, portrait: self.portrait[..level_offset(k)].to_vec() })
    }

    /// Disjoint leaf cycles: each starts at its minimal leaf, cycles sorted by minimal leaf.
    pub fn cycle_decomposition(&self) -> Vec<Vec<u32>> {
        cycles_of(&self.leaf_permutation())
    }

    pub fn cycle_structure(&self) -> CycleStructure {
        cycle_structure_of(&self.leaf_permutation())
    }

    /// Extends by one level: leaf `v*c` goes to `(v)self * (c)s_v`. Unassigned vertices get the identity.
    pub fn i_map<'a, I>(&self, assignments: I) -> Result<TreeAut>
    where
        I: IntoIterator<Item = (&'a Word, Perm3)>,
    {
        let n = self.level;
        if n + 1 > MAX_LEVEL {
            return invalid(format!("level {} exceeds {MAX_LEVEL}", n + 1));
        }
        let mut last = vec![Perm3::IDENTITY; pow3(n)];
        for (w, p) in assignments {
            if w.len() != n {
                return invalid(format!("vertex {w} is not at level {n}"));
            }
            last[w.index()] = p;
        }
        Ok(self.extend_with(last))
    }

    fn extend_with(&self, last: Vec<Perm3>) -> TreeAut {
        let mut portrait = self.portrait.clone();
        portrait.extend(last);
        TreeAut { level: self.level + 1, portrait }
    }

    /// Places `p` at the last element of every cycle (the preimage of its minimal leaf).
    fn extend_at_cycle_ends(&self, p: Perm3) -> TreeAut {
        let mut last = vec![Perm3::IDENTITY; pow3(self.level)];
        for cyc in self.cycle_decomposition() {
            last[*cyc.last().expect("cycles are non-empty") as usize] = p;
        }
        self.extend_with(last)
    }

    pub fn splitting(&self) -> TreeAut {
        self.extend_with(vec![Perm3::IDENTITY; pow3(self.level)])
    }

    pub fn doubling(&self) -> TreeAut {
        self.extend_at_cycle_ends(Perm3::SWAP)
    }

    pub fn tripling(&self) -> TreeAut {
        self.extend_at_cycle_ends(Perm3::CYCLE)
    }

    /// Canonical text form: the level followed by the portrait in breadth-first order.
    pub fn to_text(&self) -> String {
        let mut s = self.level.to_string();
        for p in &self.portrait {
            s.push(' ');
            s.push_str(&p.to_string());
        }
        s
    }

    pub fn from_text(s: &str) -> Result<TreeAut> {
        let mut it = s.split_whitespace();
        let level: usize = it
            .next()
            .ok_or_else(|| Error::InvalidArgument("empty automorphism text".into()))?
            .parse()
            .map_err(|e| Error::InvalidArgument(format!("bad level: {e}")))?;
        let portrait = it.map(Perm3::from_str).collect::<Result<Vec<_>>>()?;
        TreeAut::from_portrait(level, portrait)
    }
}

impl fmt::Display for TreeAut {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

impl FromStr for TreeAut {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TreeAut::from_text(s)
    }
}

/// Canonical cycles of a permutation of `0..perm.len()`.
pub fn cycles_of(perm: &[u32]) -> Vec<Vec<u32>> {
    let mut seen = vec![false; perm.len()];
    let mut out = Vec::new();
    for start in 0..perm.len() {
        if seen[start] {
            continue;
        }
        let mut cyc = Vec::new();
        let mut i = start;
        while !seen[i] {
            seen[i] = true;
            cyc.push(i as u32);
            i = perm[i] as usize;
        }
        out.push(cyc);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn w(s: &str) -> Word {
        s.parse().unwrap()
    }

    fn x(n: usize) -> TreeAut {
        if n == 0 {
            return TreeAut::identity(0);
        }
        let id = TreeAut::identity(n - 1);
        TreeAut::wreath_compose([&id, &id, &x(n - 1)], Perm3::CYCLE).unwrap()
    }

    fn y(n: usize) -> TreeAut {
        if n == 0 {
            return TreeAut::identity(0);
        }
        let id = TreeAut::identity(n - 1);
        TreeAut::wreath_compose([&id, &y(n - 1), &x(n - 1)], Perm3::SWAP).unwrap()
    }

    fn z2() -> TreeAut {
        TreeAut::wreath_compose([&y(1), &y(1), &x(1)], Perm3::IDENTITY).unwrap()
    }

    fn cs(v: &[u64]) -> CycleStructure {
        CycleStructure::new(v.to_vec()).unwrap()
    }

    #[test]
    fn apply_examples() {
        assert_eq!(TreeAut::root(Perm3::CYCLE).apply(&w("0")).unwrap(), w("1"));
        assert_eq!(x(2).apply(&w("20")).unwrap(), w("01"));
        let id = TreeAut::identity(3);
        for i in 0..27 {
            let word = Word::from_index(i, 3).unwrap();
            assert_eq!(id.apply(&word).unwrap(), word);
        }
        assert!(matches!(x(1).apply(&w("00")), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn compose_and_inverse_examples() {
        let s = TreeAut::root(Perm3::SWAP);
        assert!(s.compose(&s).unwrap().is_identity());
        assert_eq!(x(1).compose(&x(1)).unwrap(), TreeAut::root(Perm3::CYCLE_INV));
        assert!(TreeAut::identity(2).inverse().is_identity());
        assert_eq!(TreeAut::root(Perm3::CYCLE).inverse(), TreeAut::root(Perm3::CYCLE_INV));
        let x2 = x(2);
        let p = x2.inverse().compose(&x2).unwrap().leaf_permutation();
        assert_eq!(p, (0..9).collect::<Vec<u32>>());
        assert!(x(1).compose(&x(2)).is_err());
    }

    #[test]
    fn section_and_wreath_examples() {
        assert_eq!(x(2).section(&w("2")).unwrap(), x(1));
        assert!(x(2).section(&w("0")).unwrap().is_identity());
        assert!(TreeAut::identity(3).section(&w("12")).unwrap().is_identity());
        assert!(x(2).section(&w("00")).unwrap().is_identity());
        assert!(x(2).section(&w("000")).is_err());

        let (secs, pi) = x(2).wreath_decompose().unwrap();
        assert!(secs[0].is_identity() && secs[1].is_identity());
        assert_eq!(secs[2], x(1));
        assert_eq!(pi, Perm3::CYCLE);

        let (secs, pi) = z2().wreath_decompose().unwrap();
        assert_eq!([&secs[0], &secs[1], &secs[2]], [&y(1), &y(1), &x(1)]);
        assert!(pi.is_identity());

        let id = TreeAut::identity(2);
        assert!(TreeAut::wreath_compose([&id, &id, &id], Perm3::IDENTITY).unwrap().is_identity());
        assert!(TreeAut::identity(0).wreath_decompose().is_err());
    }

    #[test]
    fn embed_examples() {
        let e = x(1).embed(2).unwrap();
        for c in 0..3u8 {
            assert_eq!(e.apply(&Word(vec![0, c])).unwrap(), Word(vec![0, (c + 1) % 3]));
        }
        for i in 3..9 {
            let word = Word::from_index(i, 2).unwrap();
            assert_eq!(e.apply(&word).unwrap(), word);
        }
        assert_eq!(e.cycle_structure(), cs(&[3, 1, 1, 1, 1, 1, 1]));
        assert!(TreeAut::identity(1).embed(4).unwrap().is_identity());
        assert!(x(3).embed(2).is_err());
    }

    #[test]
    fn restrict_examples() {
        assert_eq!(x(3).restrict(1).unwrap(), TreeAut::root(Perm3::CYCLE));
        assert_eq!(z2().restrict(2).unwrap(), z2());
        assert_eq!(y(2).restrict(1).unwrap(), TreeAut::root(Perm3::SWAP));
        assert!(x(2).restrict(3).is_err());
    }

    #[test]
    fn cycle_examples() {
        assert_eq!(x(2).cycle_structure(), cs(&[9]));
        assert_eq!(z2().cycle_structure(), cs(&[3, 2, 2, 1, 1]));
        assert_eq!(TreeAut::identity(2).cycle_structure(), cs(&[1; 9]));
        // canonical form: cycles start at their minimum and are sorted by it
        let cycles = z2().cycle_decomposition();
        for pair in cycles.windows(2) {
            assert!(pair[0][0] < pair[1][0]);
        }
        for c in &cycles {
            assert_eq!(c[0], *c.iter().min().unwrap());
        }
    }

    #[test]
    fn i_map_examples() {
        let a = TreeAut::root(Perm3::SWAP);
        let none: Vec<(&Word, Perm3)> = Vec::new();
        assert_eq!(a.i_map(none).unwrap(), a.splitting());

        let v2 = w("2");
        let t = TreeAut::root(Perm3::CYCLE).i_map([(&v2, Perm3::CYCLE)]).unwrap();
        assert_eq!(t, x(2));
        assert_eq!(t.cycle_structure(), cs(&[9]));

        let d = TreeAut::root(Perm3::CYCLE).i_map([(&v2, Perm3::SWAP)]).unwrap();
        assert_eq!(d.cycle_structure(), cs(&[6, 3]));

        let bad = w("");
        assert!(TreeAut::root(Perm3::CYCLE).i_map([(&bad, Perm3::SWAP)]).is_err());
    }

    #[test]
    fn splitting_doubling_tripling_examples() {
        let t = TreeAut::identity(1).tripling();
        let c = TreeAut::root(Perm3::CYCLE);
        assert_eq!(t, TreeAut::wreath_compose([&c, &c, &c], Perm3::IDENTITY).unwrap());
        assert_eq!(TreeAut::root(Perm3::CYCLE).doubling().cycle_structure(), cs(&[6, 3]));
        assert_eq!(TreeAut::root(Perm3::SWAP).splitting().cycle_structure(), cs(&[2, 2, 2, 1, 1, 1]));
    }

    #[test]
    fn text_round_trip() {
        let a = z2();
        assert_eq!(a.to_text(), "2 012 102 102 120");
        assert_eq!(TreeAut::from_text(&a.to_text()).unwrap(), a);
        assert_eq!(TreeAut::from_text("0").unwrap(), TreeAut::identity(0));
        assert!(TreeAut::from_text("1 112").is_err());
        assert!(TreeAut::from_text("2 012").is_err());
    }

    #[test]
    fn signs() {
        assert_eq!(Perm3::IDENTITY.sign(), 1);
        assert_eq!(Perm3::CYCLE.sign(), 1);
        assert_eq!(Perm3::SWAP.sign(), -1);
        assert_eq!(Perm3([2, 1, 0]).sign(), -1);
    }

    pub(crate) fn arb_aut(max_level: usize) -> impl Strategy<Value = TreeAut> {
        (0..=max_level).prop_flat_map(|lvl| {
            proptest::collection::vec(0usize..6, level_offset(lvl)).prop_map(move |idx| {
                let all = Perm3::all();
                TreeAut::from_portrait(lvl, idx.into_iter().map(|i| all[i]).collect()).unwrap()
            })
        })
    }

    fn arb_pair(max_level: usize) -> impl Strategy<Value = (TreeAut, TreeAut)> {
        (1..=max_level).prop_flat_map(|lvl| {
            let v = proptest::collection::vec(0usize..6, level_offset(lvl));
            (v.clone(), v).prop_map(move |(a, b)| {
                let all = Perm3::all();
                let mk = |ix: Vec<usize>| TreeAut::from_portrait(lvl, ix.into_iter().map(|i| all[i]).collect()).unwrap();
                (mk(a), mk(b))
            })
        })
    }

    fn expected_lengths(a: &TreeAut, f: impl Fn(u64) -> Vec<u64>) -> CycleStructure {
        CycleStructure::new(a.cycle_structure().lengths().iter().flat_map(|&k| f(k)).collect()).unwrap()
    }

    proptest! {
        #[test]
        fn wreath_round_trip(a in arb_aut(6).prop_filter("level >= 1", |a| a.level() >= 1)) {
            let (s, pi) = a.wreath_decompose().unwrap();
            prop_assert_eq!(TreeAut::wreath_compose([&s[0], &s[1], &s[2]], pi).unwrap(), a);
        }

        #[test]
        fn compose_is_action((a, b) in arb_pair(6), seed in any::<u64>()) {
            let n = a.level();
            let word = Word::from_index(seed as usize % pow3(n), n).unwrap();
            let ab = a.compose(&b).unwrap();
            prop_assert_eq!(ab.apply(&word).unwrap(), b.apply(&a.apply(&word).unwrap()).unwrap());
            prop_assert!(a.compose(&a.inverse()).unwrap().is_identity());
            // restriction commutes with composition
            let k = seed as usize % (n + 1);
            prop_assert_eq!(ab.restrict(k).unwrap(), a.restrict(k).unwrap().compose(&b.restrict(k).unwrap()).unwrap());
        }

        #[test]
        fn section_formula(a in arb_aut(6).prop_filter("level >= 1", |a| a.level() >= 1), seed in any::<u64>()) {
            let n = a.level();
            let leaf = Word::from_index(seed as usize % pow3(n), n).unwrap();
            let k = (seed as usize / 7) % n;
            let u = leaf.prefix(k);
            let rest = leaf.suffix_from(k);
            let lhs = a.apply(&leaf).unwrap();
            let rhs = a.apply(&u).unwrap().concat(&a.section(&u).unwrap().apply(&rest).unwrap());
            prop_assert_eq!(lhs, rhs);
        }

        #[test]
        fn extension_cycle_arithmetic(a in arb_aut(5)) {
            prop_assert_eq!(a.splitting().cycle_structure(), expected_lengths(&a, |k| vec![k, k, k]));
            prop_assert_eq!(a.doubling().cycle_structure(), expected_lengths(&a, |k| vec![2 * k, k]));
            prop_assert_eq!(a.tripling().cycle_structure(), expected_lengths(&a, |k| vec![3 * k]));
            let n = a.level();
            prop_assert_eq!(&a.splitting().restrict(n).unwrap(), &a);
            prop_assert_eq!(&a.doubling().restrict(n).unwrap(), &a);
            prop_assert_eq!(&a.tripling().restrict(n).unwrap(), &a);
        }

        #[test]
        fn leaf_permutation_is_faithful(a in arb_aut(6)) {
            let perm = a.leaf_permutation();
            prop_assert_eq!(TreeAut::from_leaf_permutation(a.level(), &perm).unwrap(), a.clone());
            prop_assert_eq!(TreeAut::from_text(&a.to_text()).unwrap(), a);
        }
    }
}
