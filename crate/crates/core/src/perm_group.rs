//! Permutation groups with a base and strong generating set.
//!
//! Permutations act on the right: `a.then(b)` applies `a` first. The stabilizer chain
//! stores, for every base point, the orbit under the level's strong generators and the
//! inverse of a transversal element for each orbit point.

use std::collections::{HashSet, VecDeque};
use std::fmt;

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::One;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::tree::{cycle_structure_of, CycleStructure};

const NOT_IN_ORBIT: u32 = u32::MAX;
const CONSTRUCTION_SEED: u64 = 0x5c4e_1e55;
/// Consecutive sifts that must succeed before the random phase stops.
const RANDOM_PHASE_SUCCESSES: usize = 30;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Perm(Vec<u32>);

impl Perm {
    pub fn identity(degree: usize) -> Perm {
        Perm((0..degree as u32).collect())
    }

    pub fn from_images(images: Vec<u32>) -> Result<Perm> {
        let mut seen = vec![false; images.len()];
        for &i in &images {
            match seen.get_mut(i as usize) {
                Some(s) if !*s => *s = true,
                _ => return invalid("images do not form a permutation"),
            }
        }
        Ok(Perm(images))
    }

    pub fn degree(&self) -> usize {
        self.0.len()
    }

    pub fn images(&self) -> &[u32] {
        &self.0
    }

    #[inline]
    pub fn apply(&self, i: u32) -> u32 {
        self.0[i as usize]
    }

    /// `self` followed by `other`.
    pub fn then(&self, other: &Perm) -> Perm {
        Perm(self.0.iter().map(|&i| other.0[i as usize]).collect())
    }

    pub fn inverse(&self) -> Perm {
        let mut out = vec![0u32; self.0.len()];
        for (i, &j) in self.0.iter().enumerate() {
            out[j as usize] = i as u32;
        }
        Perm(out)
    }

    /// `g^-1 self g`.
    pub fn conjugate_by(&self, g: &Perm) -> Perm {
        g.inverse().then(self).then(g)
    }

    pub fn pow(&self, e: u32) -> Perm {
        (0..e).fold(Perm::identity(self.degree()), |acc, _| acc.then(self))
    }

    pub fn is_identity(&self) -> bool {
        self.0.iter().enumerate().all(|(i, &j)| i as u32 == j)
    }

    pub fn first_moved(&self) -> Option<u32> {
        self.0.iter().enumerate().find(|(i, &j)| *i as u32 != j).map(|(i, _)| i as u32)
    }

    pub fn cycle_structure(&self) -> CycleStructure {
        cycle_structure_of(&self.0)
    }

    /// Order of the element: lcm of its cycle lengths.
    pub fn order(&self) -> u64 {
        self.cycle_structure().lengths().iter().fold(1u64, |acc, &l| acc.lcm(&l))
    }
}

impl fmt::Display for Perm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, x) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, " ")?;
            }
            write!(f, "{x}")?;
        }
        write!(f, "]")
    }
}

#[derive(Clone, Debug)]
struct ChainLevel {
    base: u32,
    gens: Vec<Perm>,
    gens_inv: Vec<Perm>,
    orbit: Vec<u32>,
    /// Index into `orbit`, or NOT_IN_ORBIT.
    pos: Vec<u32>,
    /// For orbit point b, a permutation sending b to the base point.
    inv_reps: Vec<Perm>,
    /// Number of strong generators already checked against each orbit point.
    done: Vec<usize>,
}

impl ChainLevel {
    fn new(base: u32, degree: usize) -> Self {
        let mut pos = vec![NOT_IN_ORBIT; degree];
        pos[base as usize] = 0;
        ChainLevel {
            base,
            gens: Vec::new(),
            gens_inv: Vec::new(),
            orbit: vec![base],
            pos,
            inv_reps: vec![Perm::identity(degree)],
            done: vec![0],
        }
    }

    fn push_point(&mut self, point: u32, inv_rep: Perm) {
        self.pos[point as usize] = self.orbit.len() as u32;
        self.orbit.push(point);
        self.inv_reps.push(inv_rep);
        self.done.push(0);
    }

    /// Adds a strong generator and extends the orbit. Existing transversal elements are kept.
    fn add_gen(&mut self, g: Perm) {
        let g_inv = g.inverse();
        self.gens.push(g);
        self.gens_inv.push(g_inv);
        let mut frontier = 0;
        // The new generator may reach new points from any old point; after that, plain BFS.
        let old_len = self.orbit.len();
        let gi = self.gens.len() - 1;
        for idx in 0..old_len {
            self.try_extend(idx, gi);
        }
        frontier = frontier.max(old_len);
        while frontier < self.orbit.len() {
            for s in 0..self.gens.len() {
                self.try_extend(frontier, s);
            }
            frontier += 1;
        }
    }

    fn try_extend(&mut self, idx: usize, s: usize) {
        let b = self.orbit[idx];
        let c = self.gens[s].apply(b);
        if self.pos[c as usize] == NOT_IN_ORBIT {
            let inv = self.gens_inv[s].then(&self.inv_reps[idx]);
            self.push_point(c, inv);
        }
    }

    fn inv_rep_of(&self, point: u32) -> Option<&Perm> {
        match self.pos[point as usize] {
            NOT_IN_ORBIT => None,
            i => Some(&self.inv_reps[i as usize]),
        }
    }
}

/// A permutation group on `0..degree` with a complete stabilizer chain.
#[derive(Clone, Debug)]
pub struct PermGroup {
    degree: usize,
    generators: Vec<Perm>,
    levels: Vec<ChainLevel>,
}

impl PermGroup {
    pub fn new(degree: usize, generators: Vec<Perm>) -> Result<PermGroup> {
        if let Some(g) = generators.iter().find(|g| g.degree() != degree) {
            return invalid(format!("generator of degree {} in a group of degree {degree}", g.degree()));
        }
        let mut group = PermGroup { degree, generators: Vec::new(), levels: Vec::new() };
        for g in generators {
            group.add_generator(g);
        }
        Ok(group)
    }

    pub fn trivial(degree: usize) -> PermGroup {
        PermGroup { degree, generators: Vec::new(), levels: Vec::new() }
    }

    /// Adds a generator and restores a complete stabilizer chain.
    pub fn add_generator(&mut self, g: Perm) {
        assert_eq!(g.degree(), self.degree, "generator degree mismatch");
        if g.is_identity() {
            return;
        }
        self.generators.push(g.clone());
        if self.contains(&g) {
            return;
        }
        let (h, j) = self.sift(g, 0);
        self.insert_residue(h, 0, j);
        self.random_phase();
        self.complete();
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn generators(&self) -> &[Perm] {
        &self.generators
    }

    pub fn base(&self) -> Vec<u32> {
        self.levels.iter().map(|l| l.base).collect()
    }

    pub fn strong_generator_count(&self) -> usize {
        self.levels.first().map_or(0, |l| l.gens.len())
    }

    pub fn orbit_sizes(&self) -> Vec<usize> {
        self.levels.iter().map(|l| l.orbit.len()).collect()
    }

    pub fn order(&self) -> BigUint {
        self.levels.iter().fold(BigUint::one(), |acc, l| acc * BigUint::from(l.orbit.len()))
    }

    /// Strips `h` through levels `start..`; returns the residue and the level where it dropped out.
    fn sift(&self, mut h: Perm, start: usize) -> (Perm, usize) {
        for (l, level) in self.levels.iter().enumerate().skip(start) {
            match level.inv_rep_of(h.apply(level.base)) {
                Some(inv) => h = h.then(inv),
                None => return (h, l),
            }
        }
        (h, self.levels.len())
    }

    pub fn contains(&self, g: &Perm) -> bool {
        if g.degree() != self.degree {
            return false;
        }
        let (h, j) = self.sift(g.clone(), 0);
        j == self.levels.len() && h.is_identity()
    }

    /// Adds the residue `h` (nontrivial or not sifted through) to levels `from..=drop`.
    fn insert_residue(&mut self, h: Perm, from: usize, drop: usize) {
        if drop == self.levels.len() {
            let b = h.first_moved().expect("a residue that sifts through is nontrivial");
            self.levels.push(ChainLevel::new(b, self.degree));
        }
        for l in from..=drop {
            self.levels[l].add_gen(h.clone());
        }
    }

    fn random_phase(&mut self) {
        if self.generators.is_empty() {
            return;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(CONSTRUCTION_SEED);
        let mut pool: Vec<Perm> = self.generators.clone();
        while pool.len() < 10 {
            pool.push(self.generators[pool.len() % self.generators.len()].clone());
        }
        let mut acc = Perm::identity(self.degree);
        let mut successes = 0;
        let mut rounds = 0;
        while successes < RANDOM_PHASE_SUCCESSES && rounds < 10_000 {
            rounds += 1;
            let i = rng.random_range(0..pool.len());
            let mut j = rng.random_range(0..pool.len() - 1);
            if j >= i {
                j += 1;
            }
            pool[i] = if rng.random::<bool>() { pool[i].then(&pool[j]) } else { pool[i].then(&pool[j].inverse()) };
            acc = acc.then(&pool[i]);
            let (h, drop) = self.sift(acc.clone(), 0);
            if drop == self.levels.len() && h.is_identity() {
                successes += 1;
            } else {
                successes = 0;
                self.insert_residue(h, 0, drop);
            }
        }
    }

    /// Deterministic completion: every Schreier generator of every level must sift below it.
    fn complete(&mut self) {
        let mut i = self.levels.len();
        while i > 0 {
            let level = i - 1;
            match self.check_level(level) {
                Some(drop) => i = drop + 1,
                None => i -= 1,
            }
        }
    }

    fn check_level(&mut self, i: usize) -> Option<usize> {
        let mut idx = 0;
        while idx < self.levels[i].orbit.len() {
            let ngens = self.levels[i].gens.len();
            let start = self.levels[i].done[idx];
            if start < ngens {
                let u = self.levels[i].inv_reps[idx].inverse();
                for s in start..ngens {
                    let lvl = &self.levels[i];
                    let with_s = u.then(&lvl.gens[s]);
                    let target = with_s.apply(lvl.base);
                    let inv = lvl.inv_rep_of(target).expect("orbits are closed");
                    let h = with_s.then(inv);
                    self.levels[i].done[idx] = s + 1;
                    if h.is_identity() {
                        continue;
                    }
                    let (r, drop) = self.sift(h, i + 1);
                    if drop < self.levels.len() || !r.is_identity() {
                        self.insert_residue(r, i + 1, drop);
                        return Some(drop.min(self.levels.len() - 1));
                    }
                }
            }
            idx += 1;
        }
        None
    }

    pub fn is_subgroup_of(&self, other: &PermGroup) -> bool {
        self.degree == other.degree && self.generators.iter().all(|g| other.contains(g))
    }

    /// `[self : sub]`.
    pub fn index_of(&self, sub: &PermGroup) -> Result<BigUint> {
        if !sub.is_subgroup_of(self) {
            return invalid("not a subgroup");
        }
        Ok(self.order() / sub.order())
    }

    /// True when `self` is normalized by every generator of `g`.
    pub fn is_normal_in(&self, g: &PermGroup) -> bool {
        self.is_subgroup_of(g)
            && g.generators.iter().all(|x| self.generators.iter().all(|n| self.contains(&n.conjugate_by(x))))
    }

    /// Smallest normal subgroup of `self` containing `gens`.
    pub fn normal_closure(&self, gens: &[Perm]) -> Result<PermGroup> {
        if let Some(bad) = gens.iter().find(|s| !self.contains(s)) {
            return invalid(format!("{bad} is not in the ambient group"));
        }
        let mut n = PermGroup::new(self.degree, gens.to_vec())?;
        let mut i = 0;
        while i < n.generators.len() {
            let a = n.generators[i].clone();
            for x in &self.generators {
                let c = a.conjugate_by(x);
                if !n.contains(&c) {
                    n.add_generator(c);
                }
            }
            i += 1;
        }
        Ok(n)
    }

    /// Uniform random element: one uniform transversal choice per level.
    pub fn random_element<R: Rng>(&self, rng: &mut R) -> Perm {
        let mut g = Perm::identity(self.degree);
        for level in &self.levels {
            let k = rng.random_range(0..level.inv_reps.len());
            g = g.then(&level.inv_reps[k]);
        }
        g
    }

    /// Calls `f` on every element exactly once. Refuses groups above `cap` elements.
    pub fn for_each_element<F: FnMut(&Perm)>(&self, cap: u64, mut f: F) -> Result<()> {
        if self.order() > BigUint::from(cap) {
            return Err(Error::ResourceLimit(format!("group of order {} exceeds the enumeration cap {cap}", self.order())));
        }
        let mut stack = vec![Perm::identity(self.degree)];
        self.walk(0, &mut stack, &mut f);
        Ok(())
    }

    fn walk<F: FnMut(&Perm)>(&self, depth: usize, stack: &mut Vec<Perm>, f: &mut F) {
        if depth == self.levels.len() {
            f(stack.last().expect("nonempty"));
            return;
        }
        for inv in &self.levels[depth].inv_reps {
            let next = stack.last().expect("nonempty").then(inv);
            stack.push(next);
            self.walk(depth + 1, stack, f);
            stack.pop();
        }
    }

    pub fn elements(&self, cap: u64) -> Result<Vec<Perm>> {
        let mut out = Vec::new();
        self.for_each_element(cap, |g| out.push(g.clone()))?;
        Ok(out)
    }

    /// Order by breadth-first closure under the generators; `None` once `cap` is exceeded.
    pub fn closure_order(&self, cap: usize) -> Option<usize> {
        let id = Perm::identity(self.degree);
        let mut seen: HashSet<Perm> = HashSet::from([id.clone()]);
        let mut queue = VecDeque::from([id]);
        while let Some(g) = queue.pop_front() {
            for s in &self.generators {
                let h = g.then(s);
                if seen.insert(h.clone()) {
                    if seen.len() > cap {
                        return None;
                    }
                    queue.push_back(h);
                }
            }
        }
        Some(seen.len())
    }
}
