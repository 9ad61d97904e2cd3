//! Markov groups as leaf-permutation groups.
//!
//! Generators come from explicit wreath recursions; typed iteration of labelled base
//! generators must reproduce them. Groups live in `Aut(T_n)` acting on `3^n` leaves.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::markov::{restricted_step, CycleDataDist, Label, TypedPartition};
use crate::perm_group::{Perm, PermGroup};
use crate::tree::{cycle_structure_of, CycleStructure, Perm3, TreeAut, Word};

/// Highest level at which recursive generators are built.
pub const MAX_GENERATOR_LEVEL: usize = 12;
/// Hard ceiling for permutation groups: 3^9 points.
pub const MAX_GROUP_LEVEL: usize = 9;
/// Default ceiling used by `build_group`.
pub const DEFAULT_MAX_GROUP_LEVEL: usize = 6;
/// Default cap on `|S1|` for exhaustive cycle data.
pub const DEFAULT_ENUMERATION_CAP: u64 = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GenName {
    X,
    Y,
    Z,
    K,
    L,
}

impl GenName {
    pub fn all() -> [GenName; 5] {
        [GenName::X, GenName::Y, GenName::Z, GenName::K, GenName::L]
    }

    fn check_orbit(self, m: u8) -> Result<()> {
        match (m, self) {
            (1, GenName::K | GenName::L) => invalid(format!("generator {self} exists only for orbit length 2")),
            (1 | 2, _) => Ok(()),
            _ => invalid(format!("orbit length must be 1 or 2, got {m}")),
        }
    }
}

impl fmt::Display for GenName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            GenName::X => "x",
            GenName::Y => "y",
            GenName::Z => "z",
            GenName::K => "k",
            GenName::L => "l",
        };
        f.write_str(s)
    }
}

impl FromStr for GenName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "x" => Ok(GenName::X),
            "y" => Ok(GenName::Y),
            "z" => Ok(GenName::Z),
            "k" => Ok(GenName::K),
            "l" => Ok(GenName::L),
            _ => invalid(format!("unknown generator {s:?}")),
        }
    }
}

/// The recursive generators x, y, z, k, l at one level.
#[derive(Clone, Debug)]
struct GenSet {
    x: TreeAut,
    y: TreeAut,
    z: TreeAut,
    k: TreeAut,
    l: TreeAut,
}

impl GenSet {
    fn base() -> Self {
        let id = TreeAut::identity(1);
        GenSet {
            x: TreeAut::root(Perm3::CYCLE),
            y: TreeAut::root(Perm3::SWAP),
            z: id.clone(),
            k: id,
            l: TreeAut::root(Perm3::SWAP),
        }
    }

    fn next(&self) -> Result<Self> {
        let id = TreeAut::identity(self.x.level());
        let w = TreeAut::wreath_compose;
        Ok(GenSet {
            x: w([&id, &id, &self.x], Perm3::CYCLE)?,
            y: w([&id, &self.y, &self.x], Perm3::SWAP)?,
            z: w([&self.y, &self.y, &self.x], Perm3::IDENTITY)?,
            k: w([&self.l, &self.l, &self.x], Perm3::IDENTITY)?,
            l: w([&id, &self.l, &self.y], Perm3::SWAP)?,
        })
    }

    fn get(&self, name: GenName) -> &TreeAut {
        match name {
            GenName::X => &self.x,
            GenName::Y => &self.y,
            GenName::Z => &self.z,
            GenName::K => &self.k,
            GenName::L => &self.l,
        }
    }

    fn at_level(n: usize) -> Result<Self> {
        if n == 0 || n > MAX_GENERATOR_LEVEL {
            return invalid(format!("generator level must be in 1..={MAX_GENERATOR_LEVEL}, got {n}"));
        }
        let mut g = GenSet::base();
        for _ in 1..n {
            g = g.next()?;
        }
        Ok(g)
    }
}

/// The generator `name` at level `n`, built from its wreath recursion alone.
pub fn recursive_generator(name: GenName, n: usize, m: u8) -> Result<TreeAut> {
    name.check_orbit(m)?;
    Ok(GenSet::at_level(n)?.get(name).clone())
}

/// A tree automorphism with a label on each disjoint leaf cycle, keyed by the cycle's minimal leaf.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TypedAut {
    aut: TreeAut,
    labels: BTreeMap<u32, Label>,
}

impl TypedAut {
    pub fn new(aut: TreeAut, labels: BTreeMap<u32, Label>) -> Result<Self> {
        let cycles = aut.cycle_decomposition();
        if cycles.len() != labels.len() || cycles.iter().any(|c| !labels.contains_key(&c[0])) {
            return invalid("labels must be keyed by the minimal leaf of every cycle");
        }
        let t = TypedAut { aut, labels };
        t.typed_partition()?;
        Ok(t)
    }

    pub fn aut(&self) -> &TreeAut {
        &self.aut
    }

    pub fn labels(&self) -> &BTreeMap<u32, Label> {
        &self.labels
    }

    pub fn label_of_cycle(&self, min_leaf: u32) -> Option<Label> {
        self.labels.get(&min_leaf).copied()
    }

    pub fn typed_partition(&self) -> Result<TypedPartition> {
        let parts = self
            .aut
            .cycle_decomposition()
            .iter()
            .map(|c| (self.labels[&c[0]], c.len() as u64))
            .collect();
        TypedPartition::new(parts)
    }

    /// One level of typed iteration: s-labelled cycles get (0,1,2) at their last element,
    /// n-labelled ones get (0,1); children are relabelled by the restricted dynamics.
    pub fn iterate(&self) -> Result<TypedAut> {
        let level = self.aut.level();
        let cycles = self.aut.cycle_decomposition();
        let mut assignments = Vec::with_capacity(cycles.len());
        let mut owner = vec![0usize; self.aut.leaf_permutation().len()];
        for (ci, cyc) in cycles.iter().enumerate() {
            for &leaf in cyc {
                owner[leaf as usize] = ci;
            }
            let p = if self.labels[&cyc[0]].first_is_s() { Perm3::CYCLE } else { Perm3::SWAP };
            let last = *cyc.last().expect("cycles are non-empty");
            assignments.push((Word::from_index(last as usize, level)?, p));
        }
        let aut = self.aut.i_map(assignments.iter().map(|(w, p)| (w, *p)))?;
        let mut labels = BTreeMap::new();
        for cyc in aut.cycle_decomposition() {
            let parent = &cycles[owner[(cyc[0] / 3) as usize]];
            let parent_label = self.labels[&parent[0]];
            let parts = restricted_step(&parent_label, parent.len() as u64)?;
            let label = parts
                .iter()
                .find(|(_, len)| *len == cyc.len() as u64)
                .map(|(l, _)| *l)
                .ok_or_else(|| Error::Internal(format!("no child of [{parent_label},{}] has length {}", parent.len(), cyc.len())))?;
            labels.insert(cyc[0], label);
        }
        TypedAut::new(aut, labels)
    }
}

pub fn typed_iterate(t: &TypedAut) -> Result<TypedAut> {
    t.iterate()
}

/// Labelled level-1 generator.
pub fn typed_base(name: GenName, m: u8) -> Result<TypedAut> {
    name.check_orbit(m)?;
    let lab = |s: &str| s.parse::<Label>().expect("valid literal");
    let labels: &[(u32, &str)] = match (m, name) {
        (1, GenName::X) => &[(0, "s")],
        (1, GenName::Y) => &[(0, "n"), (2, "s")],
        (1, GenName::Z) => &[(0, "n"), (1, "n"), (2, "s")],
        (_, GenName::X) => &[(0, "ss")],
        (_, GenName::Y) => &[(0, "nn"), (2, "ss")],
        (_, GenName::Z) => &[(0, "nn"), (1, "nn"), (2, "ss")],
        (_, GenName::K) => &[(0, "ns"), (1, "ns"), (2, "ss")],
        (_, GenName::L) => &[(0, "ns"), (2, "nn")],
    };
    let aut = GenSet::base().get(name).clone();
    TypedAut::new(aut, labels.iter().map(|&(k, s)| (k, lab(s))).collect())
}

/// Generator with labels. The automorphism is checked against the recursion.
pub fn generator(name: GenName, n: usize, m: u8) -> Result<TypedAut> {
    let rec = recursive_generator(name, n, m)?;
    let mut t = typed_base(name, m)?;
    for _ in 1..n {
        t = t.iterate()?;
    }
    if t.aut != rec {
        return Err(Error::Internal(format!("typed iteration of {name} disagrees with its recursion at level {n}")));
    }
    Ok(t)
}

pub fn to_perm(a: &TreeAut) -> Perm {
    Perm::from_images(a.leaf_permutation()).expect("automorphisms permute leaves")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GroupKind {
    M,
    L,
    H,
    K,
    /// `<K_n, y_n>`, orbit length 1.
    KY,
    /// `<L_n, y_n l_n>`, orbit length 2.
    LYL,
    /// `<L_n, l_n>`, orbit length 2.
    LL,
    /// The full automorphism group of the level-n tree.
    Aut,
}

impl fmt::Display for GroupKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for GroupKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_uppercase().as_str() {
            "M" => GroupKind::M,
            "L" => GroupKind::L,
            "H" => GroupKind::H,
            "K" => GroupKind::K,
            "KY" => GroupKind::KY,
            "LYL" => GroupKind::LYL,
            "LL" => GroupKind::LL,
            "AUT" => GroupKind::Aut,
            _ => return invalid(format!("unknown group kind {s:?}")),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GroupFamily {
    pub orbit_length: u8,
    pub kind: GroupKind,
    pub level: usize,
}

impl GroupFamily {
    pub fn new(orbit_length: u8, kind: GroupKind, level: usize) -> Result<Self> {
        let ok = match (orbit_length, kind) {
            (1, GroupKind::LYL | GroupKind::LL) | (2, GroupKind::KY) => false,
            (1 | 2, _) => true,
            _ => return invalid(format!("orbit length must be 1 or 2, got {orbit_length}")),
        };
        if !ok {
            return invalid(format!("group kind {kind} is not defined for orbit length {orbit_length}"));
        }
        if level == 0 {
            return invalid("group level must be at least 1");
        }
        Ok(GroupFamily { orbit_length, kind, level })
    }

    /// The group whose cycle data a model describes.
    pub fn for_model(orbit_length: u8, model: u8, level: usize) -> Result<Self> {
        let kind = match (orbit_length, model) {
            (1, 1) | (2, 1) => GroupKind::K,
            (1, 2) | (2, 2) => GroupKind::L,
            (1, 3) => GroupKind::KY,
            (1, 4) | (2, 5) => GroupKind::M,
            (2, 3) => GroupKind::LYL,
            (2, 4) => GroupKind::LL,
            _ => return invalid(format!("no model {model} for orbit length {orbit_length}")),
        };
        GroupFamily::new(orbit_length, kind, level)
    }
}

impl fmt::Display for GroupFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}_{} (m={})", self.kind, self.level, self.orbit_length)
    }
}

fn non_identity(gens: Vec<TreeAut>) -> Vec<TreeAut> {
    gens.into_iter().filter(|g| !g.is_identity()).collect()
}

/// Generators of `L_n` as automorphisms of the level-n tree.
pub fn l_generators(m: u8, n: usize) -> Result<Vec<TreeAut>> {
    GenName::X.check_orbit(m)?;
    let mut gens: Vec<TreeAut> = Vec::new();
    for level in 1..=n {
        let g = GenSet::at_level(level)?;
        let mut next = vec![g.x.clone(), g.z.clone()];
        if m == 2 {
            next.push(g.k.clone());
        }
        for old in &gens {
            next.push(old.embed(level)?);
        }
        gens = non_identity(next);
    }
    Ok(gens)
}

/// Generators of `H_n`: embedded `L_{n-1}` generators and their `x_n`, `x_n^2` conjugates.
pub fn h_generators(m: u8, n: usize) -> Result<Vec<TreeAut>> {
    if n < 2 {
        return Ok(Vec::new());
    }
    let x = GenSet::at_level(n)?.x;
    let x2 = x.compose(&x)?;
    let mut out = Vec::new();
    for g in l_generators(m, n - 1)? {
        let e = g.embed(n)?;
        out.push(e.conjugate_by(&x)?);
        out.push(e.conjugate_by(&x2)?);
        out.push(e);
    }
    Ok(out)
}

/// Canonical generators of `Aut(T_n)`: (0,1,2) and (0,1) at each vertex `0^k`, `k < n`.
pub fn aut_generators(n: usize) -> Result<Vec<TreeAut>> {
    let mut out = Vec::new();
    for k in 0..n {
        for p in [Perm3::CYCLE, Perm3::SWAP] {
            let mut a = TreeAut::root(p).embed(k + 1)?;
            while a.level() < n {
                a = a.splitting();
            }
            out.push(a);
        }
    }
    Ok(out)
}

fn perms(gens: &[TreeAut]) -> Vec<Perm> {
    gens.iter().map(to_perm).collect()
}

pub fn build_group(f: &GroupFamily) -> Result<PermGroup> {
    build_group_with(f, DEFAULT_MAX_GROUP_LEVEL)
}

/// Builds the group with an explicit level ceiling (never above `MAX_GROUP_LEVEL`).
pub fn build_group_with(f: &GroupFamily, max_level: usize) -> Result<PermGroup> {
    let f = GroupFamily::new(f.orbit_length, f.kind, f.level)?;
    let cap = max_level.min(MAX_GROUP_LEVEL);
    if f.level > cap {
        return Err(Error::ResourceLimit(format!("group level {} exceeds the ceiling {cap} (3^{cap} points)", f.level)));
    }
    let (m, n) = (f.orbit_length, f.level);
    let degree = 3usize.pow(n as u32);
    let g = GenSet::at_level(n)?;
    let l_gens = || l_generators(m, n);
    let group = match f.kind {
        GroupKind::L => PermGroup::new(degree, perms(&l_gens()?))?,
        GroupKind::M => {
            let mut gens = l_gens()?;
            gens.push(g.y.clone());
            if m == 2 {
                gens.push(g.l.clone());
            }
            PermGroup::new(degree, perms(&gens))?
        }
        GroupKind::H => PermGroup::new(degree, perms(&h_generators(m, n)?))?,
        GroupKind::K | GroupKind::KY => {
            let l = PermGroup::new(degree, perms(&l_gens()?))?;
            let mut seeds = h_generators(m, n)?;
            seeds.push(g.z.clone());
            if m == 2 {
                seeds.push(g.k.clone());
            }
            let mut k = l.normal_closure(&perms(&non_identity(seeds)))?;
            if f.kind == GroupKind::KY {
                k.add_generator(to_perm(&g.y));
            }
            k
        }
        GroupKind::LYL => {
            let mut gens = l_gens()?;
            gens.push(g.y.compose(&g.l)?);
            PermGroup::new(degree, perms(&gens))?
        }
        GroupKind::LL => {
            let mut gens = l_gens()?;
            gens.push(g.l.clone());
            PermGroup::new(degree, perms(&gens))?
        }
        GroupKind::Aut => PermGroup::new(degree, perms(&aut_generators(n)?))?,
    };
    Ok(group)
}

/// How cycle data is evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CdMode {
    Exhaustive { cap: u64 },
    Sampled { samples: u64, seed: u64 },
}

/// A disjoint union of right cosets `N r` of a subgroup `N`.
#[derive(Clone, Debug)]
pub struct CosetUnion {
    pub subgroup: PermGroup,
    pub reps: Vec<Perm>,
}

impl CosetUnion {
    pub fn new(subgroup: PermGroup, reps: Vec<Perm>) -> Result<Self> {
        if reps.is_empty() {
            return invalid("a coset union needs at least one representative");
        }
        for (i, a) in reps.iter().enumerate() {
            if a.degree() != subgroup.degree() {
                return invalid("representative degree differs from the subgroup degree");
            }
            for b in &reps[..i] {
                if subgroup.contains(&a.then(&b.inverse())) {
                    return invalid(format!("representatives {b} and {a} give the same coset"));
                }
            }
        }
        Ok(CosetUnion { subgroup, reps })
    }

    pub fn group(subgroup: PermGroup) -> Self {
        let id = Perm::identity(subgroup.degree());
        CosetUnion { subgroup, reps: vec![id] }
    }

    pub fn size(&self) -> BigUint {
        self.subgroup.order() * BigUint::from(self.reps.len())
    }

    pub fn is_subset_of(&self, g: &PermGroup) -> bool {
        self.subgroup.is_subgroup_of(g) && self.reps.iter().all(|r| g.contains(r))
    }
}

fn big_ratio(num: BigUint, den: &BigUint) -> BigRational {
    BigRational::new(num.into(), den.clone().into())
}

/// `CD(S1, S2)`: cycle-type frequencies in `S1`, scaled by `|S1| / |S2|`.
pub fn cycle_data(s1: &CosetUnion, s2: &PermGroup, mode: CdMode) -> Result<CycleDataDist> {
    if !s1.is_subset_of(s2) {
        return invalid("the coset union is not contained in the ambient group");
    }
    let s2_order = s2.order();
    match mode {
        CdMode::Exhaustive { cap } => {
            if s1.size() > BigUint::from(cap) {
                return Err(Error::ResourceLimit(format!("|S1| = {} exceeds the enumeration cap {cap}", s1.size())));
            }
            let mut counts: FxHashMap<CycleStructure, u64> = FxHashMap::default();
            let mut buf = vec![0u32; s1.subgroup.degree()];
            s1.subgroup.for_each_element(cap, |n| {
                for r in &s1.reps {
                    for (i, &j) in n.images().iter().enumerate() {
                        buf[i] = r.apply(j);
                    }
                    *counts.entry(cycle_structure_of(&buf)).or_default() += 1;
                }
            })?;
            CycleDataDist::new(counts.into_iter().map(|(c, k)| (c, big_ratio(BigUint::from(k), &s2_order))))
        }
        CdMode::Sampled { samples, seed } => {
            if samples == 0 {
                return invalid("sampled cycle data needs at least one sample");
            }
            let counts = sample_cycle_types(s1, samples, seed);
            let scale = big_ratio(s1.size(), &s2_order);
            let n = BigUint::from(samples);
            CycleDataDist::new(counts.into_iter().map(|(c, k)| (c, big_ratio(BigUint::from(k), &n) * &scale)))
        }
    }
}

const SAMPLE_CHUNK: u64 = 1 << 14;

/// Cycle-type counts of `samples` uniform draws from the union. Deterministic per seed.
pub fn sample_cycle_types(s1: &CosetUnion, samples: u64, seed: u64) -> BTreeMap<CycleStructure, u64> {
    use rand::Rng;
    let chunks = samples.div_ceil(SAMPLE_CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(chunk);
            let todo = SAMPLE_CHUNK.min(samples - chunk * SAMPLE_CHUNK);
            let mut local: HashMap<CycleStructure, u64> = HashMap::new();
            for _ in 0..todo {
                let n = s1.subgroup.random_element(&mut rng);
                let r = &s1.reps[rng.random_range(0..s1.reps.len())];
                *local.entry(n.then(r).cycle_structure()).or_default() += 1;
            }
            local
        })
        .reduce(HashMap::new, |mut a, b| {
            for (k, v) in b {
                *a.entry(k).or_default() += v;
            }
            a
        })
        .into_iter()
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum QuotientName {
    Trivial,
    C2,
    C3,
    V4,
    C4,
    S3,
    C6,
    A4,
    D6,
    C12,
    Other,
}

impl fmt::Display for QuotientName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Right coset representatives of `n` in `g`, found by closing under the generators of `g`.
pub fn coset_representatives(g: &PermGroup, n: &PermGroup, max: usize) -> Result<Vec<Perm>> {
    if !n.is_subgroup_of(g) {
        return invalid("not a subgroup");
    }
    let mut reps = vec![Perm::identity(g.degree())];
    let mut i = 0;
    while i < reps.len() {
        for s in g.generators() {
            let c = reps[i].then(s);
            if !reps.iter().any(|r| n.contains(&c.then(&r.inverse()))) {
                if reps.len() == max {
                    return Err(Error::ResourceLimit(format!("more than {max} cosets")));
                }
                reps.push(c);
            }
        }
        i += 1;
    }
    Ok(reps)
}

/// Names `G/N` from its order and element-order census (complete for orders up to 12 here).
pub fn identify_small_quotient(g: &PermGroup, n: &PermGroup) -> Result<QuotientName> {
    if !n.is_normal_in(g) {
        return invalid("the subgroup is not normal");
    }
    let reps = coset_representatives(g, n, 12).map_err(|e| match e {
        Error::ResourceLimit(_) => Error::InvalidArgument("index exceeds 12".into()),
        other => other,
    })?;
    let coset_of = |p: &Perm| -> u32 {
        reps.iter().position(|r| n.contains(&p.then(&r.inverse()))).expect("cosets are closed") as u32
    };
    let action: Vec<Perm> = g
        .generators()
        .iter()
        .map(|s| Perm::from_images(reps.iter().map(|r| coset_of(&r.then(s))).collect()))
        .collect::<Result<_>>()?;
    let q = PermGroup::new(reps.len(), action)?;
    let mut census: BTreeMap<u64, usize> = BTreeMap::new();
    q.for_each_element(12, |e| *census.entry(e.order()).or_default() += 1)?;
    let count = |o: u64| census.get(&o).copied().unwrap_or(0);
    Ok(match reps.len() {
        1 => QuotientName::Trivial,
        2 => QuotientName::C2,
        3 => QuotientName::C3,
        4 if count(4) == 0 => QuotientName::V4,
        4 => QuotientName::C4,
        6 if count(6) == 0 => QuotientName::S3,
        6 => QuotientName::C6,
        12 if count(2) == 3 && count(3) == 8 => QuotientName::A4,
        12 if count(2) == 7 && count(3) == 2 && count(6) == 2 => QuotientName::D6,
        12 if count(12) > 0 => QuotientName::C12,
        _ => QuotientName::Other,
    })
}

/// Product of the signs of the root permutation and of the three level-1 vertex permutations.
pub fn sgn(a: &TreeAut) -> Result<i8> {
    if a.level() < 2 {
        return invalid(format!("sgn needs level at least 2, got {}", a.level()));
    }
    let mut s = a.root_perm().sign();
    for j in 0..3u8 {
        s *= a.perm_at(&Word::new(vec![j])?)?.sign();
    }
    Ok(s)
}

/// `CD` weights as floating point, summing to 1.
pub fn normalized_f64(d: &CycleDataDist) -> BTreeMap<CycleStructure, f64> {
    let total = d.total();
    if total.is_zero() {
        return BTreeMap::new();
    }
    d.entries().iter().map(|(c, w)| (c.clone(), (w / &total).to_f64().unwrap_or(f64::NAN))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markov::ratio;
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn fam(m: u8, kind: GroupKind, n: usize) -> PermGroup {
        build_group(&GroupFamily::new(m, kind, n).unwrap()).unwrap()
    }

    fn cs(s: &str) -> CycleStructure {
        s.parse().unwrap()
    }

    #[test]
    fn generator_examples() {
        let x2 = generator(GenName::X, 2, 1).unwrap();
        assert_eq!(x2.aut().cycle_structure(), cs("{9}"));
        let y1 = recursive_generator(GenName::Y, 1, 1).unwrap();
        let x1 = recursive_generator(GenName::X, 1, 1).unwrap();
        let z2 = recursive_generator(GenName::Z, 2, 1).unwrap();
        assert_eq!(z2, TreeAut::wreath_compose([&y1, &y1, &x1], Perm3::IDENTITY).unwrap());
        let k2 = recursive_generator(GenName::K, 2, 2).unwrap();
        let swap = TreeAut::root(Perm3::SWAP);
        assert_eq!(k2, TreeAut::wreath_compose([&swap, &swap, &x1], Perm3::IDENTITY).unwrap());
        assert!(recursive_generator(GenName::K, 2, 1).is_err());
        assert!(recursive_generator(GenName::X, 0, 1).is_err());
    }

    #[test]
    fn typed_iteration_matches_recursion_up_to_six() {
        for m in [1u8, 2] {
            for name in GenName::all() {
                if name.check_orbit(m).is_err() {
                    continue;
                }
                for n in 1..=6 {
                    let t = generator(name, n, m).unwrap();
                    assert_eq!(t.typed_partition().unwrap().total(), 3u64.pow(n as u32));
                }
            }
        }
    }

    #[test]
    fn typed_labels_at_level_two() {
        let y2 = generator(GenName::Y, 2, 1).unwrap();
        assert_eq!(y2.typed_partition().unwrap(), "[n,4][s,3][s,2]".parse().unwrap());
        let z2 = generator(GenName::Z, 2, 1).unwrap();
        assert_eq!(z2.typed_partition().unwrap(), "[n,2]^2[s,1]^2[s,3]".parse().unwrap());
    }

    #[test]
    fn y_squared_differs_from_z_by_an_h_element() {
        for n in 2..=6 {
            let y = recursive_generator(GenName::Y, n, 1).unwrap();
            let z = recursive_generator(GenName::Z, n, 1).unwrap();
            let x = recursive_generator(GenName::X, n - 1, 1).unwrap();
            let id = TreeAut::identity(n - 1);
            let tail = TreeAut::wreath_compose([&id, &id, &x], Perm3::IDENTITY).unwrap();
            let y2 = y.compose(&y).unwrap();
            assert_ne!(y2, z, "level {n}");
            assert_eq!(y2, z.compose(&tail).unwrap(), "level {n}");
        }
        let y1 = recursive_generator(GenName::Y, 1, 1).unwrap();
        assert!(y1.compose(&y1).unwrap().is_identity());
    }

    #[test]
    fn leaf_permutations_respect_composition() {
        let x = recursive_generator(GenName::X, 3, 2).unwrap();
        let l = recursive_generator(GenName::L, 3, 2).unwrap();
        assert_eq!(to_perm(&x.compose(&l).unwrap()), to_perm(&x).then(&to_perm(&l)));
        assert_eq!(to_perm(&l.conjugate_by(&x).unwrap()), to_perm(&l).conjugate_by(&to_perm(&x)));
    }

    #[test]
    fn small_group_orders() {
        let m1 = fam(1, GroupKind::M, 1);
        assert_eq!(m1.order(), BigUint::from(6u32));
        assert_eq!(fam(1, GroupKind::M, 2).order(), BigUint::from(648u32));
        assert_eq!(fam(1, GroupKind::Aut, 2).order(), BigUint::from(1296u32));
        let m2 = fam(1, GroupKind::M, 2);
        let l2 = fam(1, GroupKind::L, 2);
        assert_eq!(m2.index_of(&l2).unwrap(), BigUint::from(2u32));
        assert!(!l2.contains(&to_perm(&recursive_generator(GenName::Y, 2, 1).unwrap())));
        assert_eq!(m2.closure_order(10_000), Some(648));
        let m3 = fam(1, GroupKind::M, 3);
        assert_eq!(m3.order(), BigUint::from(3u64.pow(13) * 2u64.pow(9)));
    }

    #[test]
    fn brute_force_orders_agree() {
        for m in [1u8, 2] {
            for kind in [GroupKind::M, GroupKind::L, GroupKind::H, GroupKind::K, GroupKind::Aut] {
                let g = fam(m, kind, 2);
                assert_eq!(BigUint::from(g.closure_order(100_000).unwrap()), g.order(), "{kind} m={m}");
            }
        }
    }

    #[test]
    fn level_ceiling() {
        let f = GroupFamily::new(1, GroupKind::M, 10).unwrap();
        assert!(matches!(build_group(&f), Err(Error::ResourceLimit(_))));
        assert!(matches!(build_group_with(&f, 20), Err(Error::ResourceLimit(_))));
        assert!(GroupFamily::new(1, GroupKind::LL, 2).is_err());
        assert!(GroupFamily::new(2, GroupKind::KY, 2).is_err());
    }

    #[test]
    fn quotients_at_level_two() {
        let l = fam(1, GroupKind::L, 2);
        let h = fam(1, GroupKind::H, 2);
        let k = fam(1, GroupKind::K, 2);
        assert_eq!(identify_small_quotient(&l, &h).unwrap(), QuotientName::A4);
        assert_eq!(identify_small_quotient(&k, &h).unwrap(), QuotientName::V4);
        let m = fam(1, GroupKind::M, 2);
        assert_eq!(identify_small_quotient(&m, &l).unwrap(), QuotientName::C2);
        let aut = fam(1, GroupKind::Aut, 2);
        assert!(identify_small_quotient(&aut, &h).is_err());
    }

    #[test]
    fn quotient_census_names() {
        let p = |v: &[u32]| Perm::from_images(v.to_vec()).unwrap();
        let triv = PermGroup::trivial(6);
        let d6 = PermGroup::new(6, vec![p(&[1, 2, 3, 4, 5, 0]), p(&[0, 5, 4, 3, 2, 1])]).unwrap();
        assert_eq!(identify_small_quotient(&d6, &triv).unwrap(), QuotientName::D6);
        let c6 = PermGroup::new(6, vec![p(&[1, 2, 3, 4, 5, 0])]).unwrap();
        assert_eq!(identify_small_quotient(&c6, &triv).unwrap(), QuotientName::C6);
        let s3 = PermGroup::new(6, vec![p(&[1, 2, 0, 4, 5, 3]), p(&[3, 5, 4, 0, 2, 1])]).unwrap();
        assert_eq!(identify_small_quotient(&s3, &triv).unwrap(), QuotientName::S3);
    }

    #[test]
    fn cycle_data_of_m1() {
        let g = fam(1, GroupKind::M, 1);
        let cd = cycle_data(&CosetUnion::group(g.clone()), &g, CdMode::Exhaustive { cap: 100 }).unwrap();
        let expected = CycleDataDist::new([(cs("{3}"), ratio(1, 3)), (cs("{1,1,1}"), ratio(1, 6)), (cs("{2,1}"), ratio(1, 2))]).unwrap();
        assert_eq!(cd, expected);
    }

    #[test]
    fn coset_additivity() {
        let l = fam(1, GroupKind::L, 2);
        let h = fam(1, GroupKind::H, 2);
        let reps = coset_representatives(&l, &h, 12).unwrap();
        assert_eq!(reps.len(), 12);
        let whole = cycle_data(&CosetUnion::new(h.clone(), reps.clone()).unwrap(), &l, CdMode::Exhaustive { cap: 10_000 }).unwrap();
        let mut sum = CycleDataDist::new(Vec::<(CycleStructure, BigRational)>::new()).unwrap();
        for r in reps {
            let part = cycle_data(&CosetUnion::new(h.clone(), vec![r]).unwrap(), &l, CdMode::Exhaustive { cap: 10_000 }).unwrap();
            sum = sum.add(&part);
        }
        assert_eq!(whole, sum);
        assert_eq!(whole, cycle_data(&CosetUnion::group(l.clone()), &l, CdMode::Exhaustive { cap: 10_000 }).unwrap());
    }

    #[test]
    fn duplicate_cosets_are_rejected() {
        let l = fam(1, GroupKind::L, 2);
        let h = fam(1, GroupKind::H, 2);
        let r = h.generators()[0].clone();
        assert!(CosetUnion::new(h, vec![Perm::identity(9), r]).is_err());
        let _ = l;
    }

    #[test]
    fn uniform_sampling_on_m2() {
        let g = fam(1, GroupKind::M, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 1_000_000u64;
        let mut counts: HashMap<Perm, u64> = HashMap::new();
        for _ in 0..n {
            *counts.entry(g.random_element(&mut rng)).or_default() += 1;
        }
        assert_eq!(counts.len(), 648);
        let p = 1.0 / 648.0;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        for &c in counts.values() {
            assert!((c as f64 - n as f64 * p).abs() <= 5.0 * sigma, "count {c}");
        }
    }

    #[test]
    fn sgn_examples() {
        assert_eq!(sgn(&TreeAut::identity(2)).unwrap(), 1);
        assert_eq!(sgn(&recursive_generator(GenName::X, 2, 1).unwrap()).unwrap(), 1);
        assert_eq!(sgn(&recursive_generator(GenName::Y, 2, 1).unwrap()).unwrap(), 1);
        assert!(sgn(&TreeAut::identity(1)).is_err());
    }

    #[test]
    fn sgn_kernel_contains_m2() {
        let g = fam(1, GroupKind::M, 2);
        let mut seen = HashSet::new();
        g.for_each_element(1000, |p| {
            let a = TreeAut::from_leaf_permutation(2, p.images()).unwrap();
            assert_eq!(sgn(&a).unwrap(), 1);
            seen.insert(p.clone());
        })
        .unwrap();
        assert_eq!(seen.len(), 648);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn sgn_is_multiplicative(seed in any::<u64>()) {
            let aut = fam(1, GroupKind::Aut, 3);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = TreeAut::from_leaf_permutation(3, aut.random_element(&mut rng).images()).unwrap();
            let b = TreeAut::from_leaf_permutation(3, aut.random_element(&mut rng).images()).unwrap();
            prop_assert_eq!(sgn(&a.compose(&b).unwrap()).unwrap(), sgn(&a).unwrap() * sgn(&b).unwrap());
        }
    }

    #[test]
    fn normality_up_to_level_three() {
        for m in [1u8, 2] {
            for n in 2..=3 {
                let mg = fam(m, GroupKind::M, n);
                let l = fam(m, GroupKind::L, n);
                let h = fam(m, GroupKind::H, n);
                assert!(h.is_normal_in(&l), "H normal in L, m={m} n={n}");
                assert!(l.is_normal_in(&mg), "L normal in M, m={m} n={n}");
            }
        }
    }

    #[test]
    fn model_groups() {
        assert_eq!(GroupFamily::for_model(1, 4, 2).unwrap().kind, GroupKind::M);
        assert_eq!(GroupFamily::for_model(2, 1, 3).unwrap().kind, GroupKind::K);
        assert_eq!(GroupFamily::for_model(2, 3, 3).unwrap().kind, GroupKind::LYL);
        assert!(GroupFamily::for_model(1, 5, 2).is_err());
    }
}
