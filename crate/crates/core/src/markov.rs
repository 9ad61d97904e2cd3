//! Factorization labels and the typed Markov chain on partitions of 3^n.
//!
//! A label is a word over {n, s}, one letter per step of the combined critical orbit.
//! Letters multiply like signs (s = +1, n = -1). A typed partition is a multiset of
//! (label, cycle length) parts; a [`Data`] attaches exact probabilities to typed partitions.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{invalid, Error, Result};
use crate::tree::CycleStructure;

pub const DEFAULT_MAX_SUPPORT: usize = 1_000_000;
pub const MAX_ORBIT_LENGTH: u8 = 4;

pub fn ratio(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

pub fn format_rational(q: &BigRational) -> String {
    if q.denom().is_one() {
        q.numer().to_string()
    } else {
        format!("{}/{}", q.numer(), q.denom())
    }
}

pub fn parse_rational(s: &str) -> Result<BigRational> {
    let s = s.trim();
    let bad = |e: String| Error::InvalidArgument(format!("bad rational {s:?}: {e}"));
    match s.split_once('/') {
        Some((a, b)) => {
            let num: BigInt = a.trim().parse().map_err(|e: num_bigint::ParseBigIntError| bad(e.to_string()))?;
            let den: BigInt = b.trim().parse().map_err(|e: num_bigint::ParseBigIntError| bad(e.to_string()))?;
            if den.is_zero() {
                return Err(bad("zero denominator".into()));
            }
            Ok(BigRational::new(num, den))
        }
        None => {
            let num: BigInt = s.parse().map_err(|e: num_bigint::ParseBigIntError| bad(e.to_string()))?;
            Ok(BigRational::from_integer(num))
        }
    }
}

/// A word over {n, s}. Bit `i` of `s_bits` is set when letter `i` (0-based) is `s`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Label {
    len: u8,
    s_bits: u8,
}

impl Label {
    pub fn all_s(len: u8) -> Label {
        Label { len, s_bits: mask(len) }
    }

    pub fn from_letters(letters: &[bool]) -> Result<Label> {
        if letters.is_empty() || letters.len() > MAX_ORBIT_LENGTH as usize {
            return invalid(format!("label length {} is out of range", letters.len()));
        }
        let mut s_bits = 0u8;
        for (i, &is_s) in letters.iter().enumerate() {
            if is_s {
                s_bits |= 1 << i;
            }
        }
        Ok(Label { len: letters.len() as u8, s_bits })
    }

    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// True when letter `i` (0-based) is `s`.
    pub fn is_s(&self, i: usize) -> bool {
        self.s_bits & (1 << i) != 0
    }

    pub fn first_is_s(&self) -> bool {
        self.is_s(0)
    }

    /// Componentwise product with s = +1, n = -1.
    pub fn mul(&self, other: &Label) -> Label {
        debug_assert_eq!(self.len, other.len);
        Label { len: self.len, s_bits: !(self.s_bits ^ other.s_bits) & mask(self.len) }
    }

    /// Every label of length `len`, in lexicographic order (n before s).
    pub fn all(len: u8) -> Vec<Label> {
        let mut v: Vec<Label> = (0..1u8 << len).map(|s_bits| Label { len, s_bits }).collect();
        v.sort();
        v
    }

    fn lex_key(&self) -> u8 {
        (0..self.len).fold(0u8, |acc, i| (acc << 1) | u8::from(self.is_s(i as usize)))
    }
}

fn mask(len: u8) -> u8 {
    ((1u16 << len) - 1) as u8
}

impl PartialOrd for Label {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Label {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.len, self.lex_key()).cmp(&(other.len, other.lex_key()))
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.len as usize {
            f.write_str(if self.is_s(i) { "s" } else { "n" })?;
        }
        Ok(())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Label> {
        let letters = s
            .chars()
            .map(|c| match c {
                's' => Ok(true),
                'n' => Ok(false),
                other => invalid(format!("bad label letter {other:?} in {s:?}")),
            })
            .collect::<Result<Vec<_>>>()?;
        Label::from_letters(&letters)
    }
}

impl Serialize for Label {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Orbit length `m` and the 1-based step `j` that step `m + 1` of the combined critical orbit repeats.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OrbitSpec {
    pub orbit_length: u8,
    pub reentry: u8,
}

impl OrbitSpec {
    pub fn new(orbit_length: u8, reentry: u8) -> Result<Self> {
        if orbit_length == 0 || orbit_length > MAX_ORBIT_LENGTH {
            return invalid(format!("orbit length {orbit_length} is out of range"));
        }
        if reentry == 0 || reentry > orbit_length {
            return invalid(format!("reentry index {reentry} must lie in 1..={orbit_length}"));
        }
        Ok(OrbitSpec { orbit_length, reentry })
    }

    /// The orbit data of the catalog families: m = 1 is a fixed point, m = 2 re-enters at step 1.
    pub fn standard(orbit_length: u8) -> Result<Self> {
        match orbit_length {
            1 | 2 => OrbitSpec::new(orbit_length, 1),
            _ => invalid(format!("no standard orbit data for orbit length {orbit_length}")),
        }
    }
}

/// `c1..cm` becomes `c2..cm c_j`.
pub fn shift_label(l: &Label, o: &OrbitSpec) -> Result<Label> {
    if l.len != o.orbit_length {
        return invalid(format!("label {l} has length {}, expected {}", l.len, o.orbit_length));
    }
    let m = o.orbit_length as usize;
    let mut letters: Vec<bool> = (1..m).map(|i| l.is_s(i)).collect();
    letters.push(l.is_s(o.reentry as usize - 1));
    Label::from_letters(&letters)
}

/// A multiset of (label, length) parts in canonical order: length descending, then label.
pub type Parts = Vec<(Label, u64)>;

fn canonicalize(parts: &mut Parts) {
    parts.sort_unstable_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
}

/// Parts longer than this cannot be encoded; 3^12 fits.
pub const MAX_PART_LENGTH: u64 = (1 << 20) - 1;

/// Packs a part so that ascending codes follow the canonical order.
fn encode_part(l: Label, k: u64) -> u32 {
    debug_assert!(k <= MAX_PART_LENGTH);
    (((MAX_PART_LENGTH - k) as u32) << 8) | ((l.len as u32) << 4) | l.lex_key() as u32
}

fn decode_part(code: u32) -> (Label, u64) {
    let k = MAX_PART_LENGTH - (code >> 8) as u64;
    let len = ((code >> 4) & 0xF) as u8;
    let lex = (code & 0xF) as u8;
    let mut s_bits = 0u8;
    for i in 0..len {
        if lex & (1 << (len - 1 - i)) != 0 {
            s_bits |= 1 << i;
        }
    }
    (Label { len, s_bits }, k)
}

fn scale_code(code: u32, factor: u64) -> u32 {
    let (l, k) = decode_part(code);
    encode_part(l, k * factor)
}

/// Run-length form: (part code, multiplicity), ascending by code.
type Runs = Vec<(u32, u32)>;

fn runs_from_parts(parts: &[(Label, u64)]) -> Runs {
    let mut codes: Vec<u32> = parts.iter().map(|&(l, k)| encode_part(l, k)).collect();
    codes.sort_unstable();
    let mut runs = Runs::new();
    for c in codes {
        match runs.last_mut() {
            Some(last) if last.0 == c => last.1 += 1,
            _ => runs.push((c, 1)),
        }
    }
    runs
}

fn merge_runs(a: &[(u32, u32)], b: &[(u32, u32)]) -> Runs {
    let mut out = Runs::with_capacity(a.len() + b.len());
    merge_runs_into(a, b, &mut out);
    out
}

fn merge_runs_into(a: &[(u32, u32)], b: &[(u32, u32)], out: &mut Runs) {
    out.clear();
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => {
                out.push(a[i]);
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                out.push(b[j]);
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                out.push((a[i].0, a[i].1 + b[j].1));
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
}

fn is_smooth_23(mut k: u64) -> bool {
    if k == 0 {
        return false;
    }
    while k.is_multiple_of(2) {
        k /= 2;
    }
    while k.is_multiple_of(3) {
        k /= 3;
    }
    k == 1
}

fn log3_exact(total: u64) -> Option<usize> {
    let mut t = 1u64;
    let mut n = 0;
    while t < total {
        t *= 3;
        n += 1;
    }
    (t == total).then_some(n)
}

/// A partition of 3^level into labelled parts of length 2^a 3^b.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TypedPartition {
    runs: Runs,
}

impl TypedPartition {
    pub fn new(parts: Parts) -> Result<Self> {
        if parts.is_empty() {
            return invalid("a typed partition needs at least one part");
        }
        let len = parts[0].0.len;
        if parts.iter().any(|(l, _)| l.len != len) {
            return invalid("all labels in a partition must have the same length");
        }
        if let Some((_, k)) = parts.iter().find(|(_, k)| !is_smooth_23(*k) || *k > MAX_PART_LENGTH) {
            return invalid(format!("part length {k} is not of the form 2^a 3^b or is too large"));
        }
        let total: u64 = parts.iter().map(|p| p.1).sum();
        if log3_exact(total).is_none() {
            return invalid(format!("parts sum to {total}, not a power of 3"));
        }
        Ok(TypedPartition { runs: runs_from_parts(&parts) })
    }

    pub fn single(label: Label, length: u64) -> Result<Self> {
        TypedPartition::new(vec![(label, length)])
    }

    /// Distinct parts with their multiplicities, in canonical order.
    pub fn runs(&self) -> impl Iterator<Item = (Label, u64, u32)> + '_ {
        self.runs.iter().map(|&(c, r)| {
            let (l, k) = decode_part(c);
            (l, k, r)
        })
    }

    /// All parts, expanded, in canonical order.
    pub fn parts(&self) -> Parts {
        self.runs().flat_map(|(l, k, r)| std::iter::repeat_n((l, k), r as usize)).collect()
    }

    pub fn num_parts(&self) -> u32 {
        self.runs.iter().map(|r| r.1).sum()
    }

    pub fn total(&self) -> u64 {
        self.runs().map(|(_, k, r)| k * r as u64).sum()
    }

    pub fn level(&self) -> usize {
        log3_exact(self.total()).expect("validated on construction")
    }

    pub fn label_length(&self) -> u8 {
        decode_part(self.runs[0].0).0.len
    }

    pub fn cycle_structure(&self) -> CycleStructure {
        CycleStructure::new(self.parts().iter().map(|p| p.1).collect()).expect("parts are positive")
    }
}

impl fmt::Display for TypedPartition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (l, k, r) in self.runs() {
            write!(f, "[{l},{k}]")?;
            if r > 1 {
                write!(f, "^{r}")?;
            }
        }
        Ok(())
    }
}

/// Parses the compact form `[s,1]^3[n,2]` into parts, without checking the total.
pub fn parse_parts(s: &str) -> Result<Parts> {
    let mut parts = Vec::new();
    let mut rest = s.trim();
    let err = |what: &str| Error::InvalidArgument(format!("{what} in {s:?}"));
    while !rest.is_empty() {
        let body = rest.strip_prefix('[').ok_or_else(|| err("expected '['"))?;
        let close = body.find(']').ok_or_else(|| err("unclosed part"))?;
        let (label, len) = body[..close].split_once(',').ok_or_else(|| err("expected label,length"))?;
        let label: Label = label.trim().parse()?;
        let len: u64 = len.trim().parse().map_err(|_| err("bad length"))?;
        rest = &body[close + 1..];
        let mut mult = 1usize;
        if let Some(r) = rest.strip_prefix('^') {
            let digits: String = r.chars().take_while(|c| c.is_ascii_digit()).collect();
            mult = digits.parse().map_err(|_| err("bad exponent"))?;
            rest = &r[digits.len()..];
        }
        parts.extend(std::iter::repeat_n((label, len), mult));
        rest = rest.trim_start();
    }
    canonicalize(&mut parts);
    Ok(parts)
}

impl FromStr for TypedPartition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TypedPartition::new(parse_parts(s)?)
    }
}

impl Serialize for TypedPartition {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.parts().serialize(s)
    }
}

impl<'de> Deserialize<'de> for TypedPartition {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let parts = Parts::deserialize(d)?;
        TypedPartition::new(parts).map_err(serde::de::Error::custom)
    }
}

/// Exact probability distribution over typed partitions of one level.
///
/// Probabilities are stored as integer numerators over one common denominator,
/// which keeps level-4 supports (millions of partitions) in memory.
#[derive(Clone, Debug)]
pub struct Data {
    denom: BigUint,
    entries: FxHashMap<TypedPartition, BigUint>,
}

impl Data {
    pub fn new<I>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (TypedPartition, BigRational)>,
    {
        let mut map: BTreeMap<TypedPartition, BigRational> = BTreeMap::new();
        for (tp, p) in entries {
            if !p.is_positive() {
                return invalid(format!("probability of {tp} must be positive"));
            }
            *map.entry(tp).or_insert_with(BigRational::zero) += p;
        }
        let Some(first) = map.keys().next() else {
            return invalid("data must have at least one entry");
        };
        let (level, len) = (first.level(), first.label_length());
        if map.keys().any(|tp| tp.level() != level || tp.label_length() != len) {
            return invalid("all partitions must share a level and a label length");
        }
        let total: BigRational = map.values().sum();
        if !total.is_one() {
            return invalid(format!("probabilities sum to {}, not 1", format_rational(&total)));
        }
        let denom = map.values().fold(BigInt::one(), |acc, p| acc.lcm(p.denom()));
        let entries = map
            .into_iter()
            .map(|(tp, p)| {
                let n = p.numer() * (&denom / p.denom());
                (tp, n.to_biguint().expect("positive"))
            })
            .collect();
        Ok(Data { denom: denom.to_biguint().expect("positive"), entries })
    }

    pub fn point(tp: TypedPartition) -> Self {
        let mut entries = FxHashMap::default();
        entries.insert(tp, BigUint::one());
        Data { denom: BigUint::one(), entries }
    }

    fn from_numerators(denom: BigUint, map: FxHashMap<Runs, BigUint>) -> Self {
        // Denominators here are products of 2s and 3s; dropping common factors of 2 is cheap
        // and keeps numerators from growing without a full gcd pass.
        let twos = map.values().chain(std::iter::once(&denom)).filter_map(|n| n.trailing_zeros()).min().unwrap_or(0);
        let entries = map.into_iter().map(|(runs, n)| (TypedPartition { runs }, n >> twos)).collect();
        Data { denom: denom >> twos, entries }
    }

    /// Entries in canonical partition order.
    pub fn iter(&self) -> impl Iterator<Item = (&TypedPartition, BigRational)> + '_ {
        let mut refs: Vec<(&TypedPartition, &BigUint)> = self.entries.iter().collect();
        refs.sort_unstable_by(|a, b| a.0.cmp(b.0));
        refs.into_iter().map(|(tp, n)| (tp, self.rational(n)))
    }

    /// Partitions in unspecified order.
    pub fn partitions(&self) -> impl Iterator<Item = &TypedPartition> + '_ {
        self.entries.keys()
    }

    fn rational(&self, n: &BigUint) -> BigRational {
        BigRational::new(BigInt::from(n.clone()), BigInt::from(self.denom.clone()))
    }

    pub fn get(&self, tp: &TypedPartition) -> Option<BigRational> {
        self.entries.get(tp).map(|n| self.rational(n))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn level(&self) -> usize {
        self.entries.keys().next().map_or(0, |tp| tp.level())
    }

    pub fn label_length(&self) -> u8 {
        self.entries.keys().next().map_or(1, |tp| tp.label_length())
    }

    /// Exact total mass.
    pub fn total(&self) -> BigRational {
        let sum: BigUint = self.entries.values().sum();
        BigRational::new(sum.into(), self.denom.clone().into())
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::Value::Array(
            self.iter()
                .map(|(tp, p)| serde_json::json!({ "partition": tp, "p": format_rational(&p) }))
                .collect(),
        )
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        #[derive(Deserialize)]
        struct Entry {
            partition: TypedPartition,
            p: String,
        }
        let entries: Vec<Entry> =
            serde_json::from_value(v.clone()).map_err(|e| Error::InvalidArgument(format!("bad data JSON: {e}")))?;
        Data::new(entries.into_iter().map(|e| Ok((e.partition, parse_rational(&e.p)?))).collect::<Result<Vec<_>>>()?)
    }
}

/// Equal as probability distributions, whatever the stored denominators.
impl PartialEq for Data {
    fn eq(&self, other: &Data) -> bool {
        self.entries.len() == other.entries.len()
            && self.entries.iter().all(|(tp, n)| {
                other.entries.get(tp).is_some_and(|m| n * &other.denom == m * &self.denom)
            })
    }
}

impl Eq for Data {}

impl fmt::Display for Data {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (tp, p) in self.iter() {
            writeln!(f, "{tp}\t{}", format_rational(&p))?;
        }
        Ok(())
    }
}

/// Exact weights on cycle structures. The total is at most 1.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct CycleDataDist {
    entries: BTreeMap<CycleStructure, BigRational>,
}

impl CycleDataDist {
    pub fn new<I>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (CycleStructure, BigRational)>,
    {
        let mut map: BTreeMap<CycleStructure, BigRational> = BTreeMap::new();
        for (c, w) in entries {
            if w.is_negative() {
                return invalid(format!("weight of {c} is negative"));
            }
            if !w.is_zero() {
                *map.entry(c).or_insert_with(BigRational::zero) += w;
            }
        }
        let d = CycleDataDist { entries: map };
        if d.total() > BigRational::one() {
            return invalid("cycle data weights exceed 1");
        }
        Ok(d)
    }

    pub fn entries(&self) -> &BTreeMap<CycleStructure, BigRational> {
        &self.entries
    }

    pub fn get(&self, c: &CycleStructure) -> BigRational {
        self.entries.get(c).cloned().unwrap_or_else(BigRational::zero)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total(&self) -> BigRational {
        self.entries.values().sum()
    }

    pub fn scale(&self, w: &BigRational) -> CycleDataDist {
        CycleDataDist { entries: self.entries.iter().map(|(c, p)| (c.clone(), p * w)).filter(|(_, p)| !p.is_zero()).collect() }
    }

    /// Sum of weights, as for a disjoint union of the underlying sets.
    pub fn add(&self, other: &CycleDataDist) -> CycleDataDist {
        let mut entries = self.entries.clone();
        for (c, p) in &other.entries {
            *entries.entry(c.clone()).or_insert_with(BigRational::zero) += p;
        }
        CycleDataDist { entries }
    }

    /// Divides by the total mass.
    pub fn normalized(&self) -> CycleDataDist {
        let t = self.total();
        if t.is_zero() {
            return self.clone();
        }
        self.scale(&t.recip())
    }

    fn map_lengths(&self, f: impl Fn(u64) -> Vec<u64>) -> CycleDataDist {
        let mut entries: BTreeMap<CycleStructure, BigRational> = BTreeMap::new();
        for (c, p) in &self.entries {
            let lengths = c.lengths().iter().flat_map(|&k| f(k)).collect();
            *entries.entry(CycleStructure::new(lengths).expect("positive")).or_insert_with(BigRational::zero) += p;
        }
        CycleDataDist { entries }
    }

    /// Each k becomes {2k, k}.
    pub fn d_a(&self) -> CycleDataDist {
        self.map_lengths(|k| vec![2 * k, k])
    }

    /// Each k becomes {3k}.
    pub fn t_a(&self) -> CycleDataDist {
        self.map_lengths(|k| vec![3 * k])
    }

    /// Independent product: weights multiply and partitions concatenate.
    pub fn product(&self, other: &CycleDataDist) -> CycleDataDist {
        let mut entries: BTreeMap<CycleStructure, BigRational> = BTreeMap::new();
        for (a, p) in &self.entries {
            for (b, q) in &other.entries {
                let mut lengths = a.lengths().to_vec();
                lengths.extend_from_slice(b.lengths());
                *entries.entry(CycleStructure::new(lengths).expect("positive")).or_insert_with(BigRational::zero) += p * q;
            }
        }
        CycleDataDist { entries }
    }

    /// Half the L1 distance, exactly.
    pub fn tv_distance(&self, other: &CycleDataDist) -> BigRational {
        let mut acc = BigRational::zero();
        for (c, p) in &self.entries {
            acc += (p - other.get(c)).abs();
        }
        for (c, q) in &other.entries {
            if !self.entries.contains_key(c) {
                acc += q.clone();
            }
        }
        acc / BigRational::from_integer(2.into())
    }

    pub fn to_f64_map(&self) -> BTreeMap<CycleStructure, f64> {
        self.entries.iter().map(|(c, p)| (c.clone(), p.to_f64().unwrap_or(f64::NAN))).collect()
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::Value::Array(
            self.entries
                .iter()
                .map(|(c, p)| serde_json::json!({ "cycles": c, "p": format_rational(p) }))
                .collect(),
        )
    }
}

impl fmt::Display for CycleDataDist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (c, p) in &self.entries {
            writeln!(f, "{c}\t{}", format_rational(p))?;
        }
        Ok(())
    }
}

/// Half the L1 distance between two floating-point distributions.
pub fn tv_distance_f64(a: &BTreeMap<CycleStructure, f64>, b: &BTreeMap<CycleStructure, f64>) -> f64 {
    let mut acc = 0.0;
    for (c, p) in a {
        acc += (p - b.get(c).copied().unwrap_or(0.0)).abs();
    }
    for (c, q) in b {
        if !a.contains_key(c) {
            acc += q.abs();
        }
    }
    acc / 2.0
}

/// One Markov step of a single part `(l, k)`, as a list of outcomes with probabilities.
pub fn step_type(l: &Label, k: u64, o: &OrbitSpec) -> Result<Vec<(Parts, BigRational)>> {
    let target = shift_label(l, o)?;
    let labels = Label::all(o.orbit_length);
    let mut acc: BTreeMap<Parts, BigRational> = BTreeMap::new();
    if l.first_is_s() {
        acc.insert(vec![(target, 3 * k)], ratio(2, 3));
        let triples: Vec<(Label, Label, Label)> = labels
            .iter()
            .flat_map(|&a| labels.iter().map(move |&b| (a, b, a.mul(&b).mul(&target))))
            .collect();
        let each = ratio(1, 3) / BigRational::from_integer(triples.len().into());
        for (a, b, c) in triples {
            let mut parts = vec![(a, k), (b, k), (c, k)];
            canonicalize(&mut parts);
            *acc.entry(parts).or_insert_with(BigRational::zero) += &each;
        }
    } else {
        let each = ratio(1, labels.len() as i64);
        for &a in &labels {
            let b = a.mul(&target);
            let mut parts = vec![(a, 2 * k), (b, k)];
            canonicalize(&mut parts);
            *acc.entry(parts).or_insert_with(BigRational::zero) += &each;
        }
    }
    Ok(acc.into_iter().collect())
}

/// Deterministic branch of the chain used to build group generators.
pub fn restricted_step(l: &Label, k: u64) -> Result<Parts> {
    let parts = match l.to_string().as_str() {
        "s" => vec![("s", 3 * k)],
        "n" => vec![("n", 2 * k), ("s", k)],
        "ss" => vec![("ss", 3 * k)],
        "nn" => vec![("nn", 2 * k), ("ss", k)],
        "sn" => vec![("ns", 3 * k)],
        "ns" => vec![("ns", 2 * k), ("nn", k)],
        other => return invalid(format!("no restricted dynamics for label {other}")),
    };
    parts.into_iter().map(|(s, k)| Ok((s.parse()?, k))).collect()
}

/// Outcomes of a unit part, as integer numerators over a shared denominator.
type IntDist = Vec<(Runs, BigUint)>;

struct StepTables {
    unit_denom: BigUint,
    unit: HashMap<Label, IntDist>,
    powers: HashMap<(Label, u32, u64), IntDist>,
}

impl StepTables {
    fn new(orbit: OrbitSpec) -> Result<Self> {
        let mut raw = HashMap::new();
        let mut denom = BigInt::one();
        for l in Label::all(orbit.orbit_length) {
            let dist = step_type(&l, 1, &orbit)?;
            for (_, w) in &dist {
                denom = denom.lcm(w.denom());
            }
            raw.insert(l, dist);
        }
        let unit = raw
            .into_iter()
            .map(|(l, dist)| {
                let int = dist
                    .into_iter()
                    .map(|(parts, w)| {
                        let n = w.numer() * (&denom / w.denom());
                        (runs_from_parts(&parts), n.to_biguint().expect("positive"))
                    })
                    .collect();
                (l, int)
            })
            .collect();
        Ok(StepTables { unit_denom: denom.to_biguint().expect("positive"), unit, powers: HashMap::new() })
    }

    /// Distribution of `r` independent copies of the part `(l, k)`, over `unit_denom^r`.
    fn power(&mut self, l: Label, r: u32, k: u64) -> &IntDist {
        if !self.powers.contains_key(&(l, r, k)) {
            let base: IntDist = self.unit[&l]
                .iter()
                .map(|(runs, w)| (runs.iter().map(|&(c, m)| (scale_code(c, k), m)).collect(), w.clone()))
                .collect();
            let mut acc: IntDist = vec![(Runs::new(), BigUint::one())];
            for _ in 0..r {
                acc = convolve(&acc, &base);
            }
            self.powers.insert((l, r, k), acc);
        }
        &self.powers[&(l, r, k)]
    }
}

fn convolve(a: &IntDist, b: &IntDist) -> IntDist {
    let mut acc: FxHashMap<Runs, BigUint> = FxHashMap::default();
    for (ra, wa) in a {
        for (rb, wb) in b {
            *acc.entry(merge_runs(ra, rb)).or_default() += wa * wb;
        }
    }
    acc.into_iter().collect()
}

/// One step applied to every part independently.
pub fn step_partition(tp: &TypedPartition, o: &OrbitSpec) -> Result<Data> {
    propagate_with(&Data::point(tp.clone()), 1, o, DEFAULT_MAX_SUPPORT)
}

/// Applies the chain `steps` times with the default support cap.
pub fn propagate(d: &Data, steps: usize, o: &OrbitSpec) -> Result<Data> {
    propagate_with(d, steps, o, DEFAULT_MAX_SUPPORT)
}

pub fn propagate_with(d: &Data, steps: usize, o: &OrbitSpec, max_support: usize) -> Result<Data> {
    if d.label_length() != o.orbit_length {
        return invalid(format!("data labels have length {}, orbit length is {}", d.label_length(), o.orbit_length));
    }
    let mut tables = StepTables::new(*o)?;
    let mut cur = d.clone();
    for _ in 0..steps {
        cur = one_step(&cur, &mut tables, max_support)?;
    }
    Ok(cur)
}

/// Path weights in the outcome expansion: `u128` when the denominators allow, `BigUint` otherwise.
trait PathWeight: Clone + std::ops::Mul<Output = Self> {
    fn unit() -> Self;
    fn from_big(b: &BigUint) -> Self;
    fn times(&self, big: &BigUint) -> BigUint;
}

impl PathWeight for u128 {
    fn unit() -> Self {
        1
    }

    fn from_big(b: &BigUint) -> Self {
        b.to_u128().expect("checked against the denominator bound")
    }

    fn times(&self, big: &BigUint) -> BigUint {
        big * *self
    }
}

impl PathWeight for BigUint {
    fn unit() -> Self {
        <BigUint as One>::one()
    }

    fn from_big(b: &BigUint) -> Self {
        b.clone()
    }

    fn times(&self, big: &BigUint) -> BigUint {
        big * self
    }
}

fn one_step(d: &Data, tables: &mut StepTables, max_support: usize) -> Result<Data> {
    let next_level = d.level() + 1;
    if 3u64.pow(next_level as u32) > MAX_PART_LENGTH {
        return Err(Error::ResourceLimit(format!("level {next_level} exceeds the encodable part length")));
    }
    let max_parts = d.entries.keys().map(TypedPartition::num_parts).max().unwrap_or(0);
    if tables.unit_denom.pow(max_parts).bits() < 127 {
        expand_step::<u128>(d, tables, max_support, max_parts, next_level)
    } else {
        expand_step::<BigUint>(d, tables, max_support, max_parts, next_level)
    }
}

/// Every partition's outcomes are brought to the common denominator `unit_denom^max_parts`
/// and added into one map. Outcomes are enumerated depth-first over the distinct parts.
fn expand_step<W: PathWeight>(
    d: &Data,
    tables: &mut StepTables,
    max_support: usize,
    max_parts: u32,
    next_level: usize,
) -> Result<Data> {
    let mut keys: Vec<(Label, u32, u64)> = d
        .entries
        .keys()
        .flat_map(|tp| tp.runs.iter().map(|&(c, r)| {
            let (l, k) = decode_part(c);
            (l, r, k)
        }))
        .collect();
    keys.sort_unstable();
    keys.dedup();
    let mut table: HashMap<(Label, u32, u64), Vec<(Runs, W)>> = HashMap::with_capacity(keys.len());
    for key in keys {
        let dist = tables.power(key.0, key.1, key.2);
        table.insert(key, dist.iter().map(|(r, w)| (r.clone(), W::from_big(w))).collect());
    }
    let unit_pows: Vec<BigUint> = (0..=max_parts).map(|e| tables.unit_denom.pow(e)).collect();

    let groups_of = |tp: &TypedPartition| -> Vec<&[(Runs, W)]> {
        tp.runs
            .iter()
            .map(|&(c, r)| {
                let (l, k) = decode_part(c);
                table[&(l, r, k)].as_slice()
            })
            .collect()
    };
    let estimate: usize = d
        .entries
        .keys()
        .map(|tp| groups_of(tp).iter().map(|g| g.len()).product::<usize>())
        .sum();
    let mut out: FxHashMap<Runs, BigUint> = FxHashMap::default();
    out.reserve(estimate.min(max_support.saturating_add(1)) * 2 / 3);

    let mut bufs: Vec<Runs> = Vec::new();
    for (tp, numer) in &d.entries {
        let groups = groups_of(tp);
        bufs.resize(groups.len() + 1, Runs::new());
        bufs[0].clear();
        let factor = numer * &unit_pows[(max_parts - tp.num_parts()) as usize];
        expand(&groups, 0, &mut bufs, W::unit(), &factor, &mut out);
        if out.len() > max_support {
            return Err(Error::ResourceLimit(format!(
                "support exceeds {max_support} partitions at level {next_level}"
            )));
        }
    }
    let denom = &d.denom * &unit_pows[max_parts as usize];
    Ok(Data::from_numerators(denom, out))
}

fn expand<W: PathWeight>(
    groups: &[&[(Runs, W)]],
    depth: usize,
    bufs: &mut [Runs],
    w: W,
    factor: &BigUint,
    out: &mut FxHashMap<Runs, BigUint>,
) {
    if depth == groups.len() {
        let add = w.times(factor);
        let key = &bufs[depth];
        match out.get_mut(key.as_slice()) {
            Some(v) => *v += add,
            None => {
                out.insert(key.clone(), add);
            }
        }
        return;
    }
    for (runs, gw) in groups[depth] {
        let (lo, hi) = bufs.split_at_mut(depth + 1);
        merge_runs_into(&lo[depth], runs, &mut hi[0]);
        expand(groups, depth + 1, bufs, w.clone() * gw.clone(), factor, out);
    }
}

/// Forgets labels.
pub fn cycle_marginal(d: &Data) -> CycleDataDist {
    let mut sums: BTreeMap<CycleStructure, BigUint> = BTreeMap::new();
    for (tp, n) in &d.entries {
        *sums.entry(tp.cycle_structure()).or_default() += n;
    }
    let denom = BigInt::from(d.denom.clone());
    CycleDataDist {
        entries: sums.into_iter().map(|(c, n)| (c, BigRational::new(n.into(), denom.clone()))).collect(),
    }
}

struct Sampler {
    cumulative: Vec<f64>,
}

impl Sampler {
    fn new(weights: impl Iterator<Item = f64>) -> Self {
        let mut acc = 0.0;
        let cumulative = weights
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        Sampler { cumulative }
    }

    fn draw(&self, rng: &mut impl Rng) -> usize {
        let total = self.cumulative.last().copied().unwrap_or(0.0);
        let u = rng.random::<f64>() * total;
        self.cumulative.partition_point(|&c| c <= u).min(self.cumulative.len() - 1)
    }
}

const SIM_CHUNK: usize = 1 << 15;

/// Monte Carlo run of the chain. Deterministic for a given seed and thread count independent.
pub fn simulate_chain(
    d: &Data,
    steps: usize,
    samples: usize,
    seed: u64,
    o: &OrbitSpec,
) -> Result<BTreeMap<CycleStructure, f64>> {
    if samples == 0 {
        return invalid("samples must be at least 1");
    }
    if d.label_length() != o.orbit_length {
        return invalid("data label length does not match the orbit length");
    }
    let (starts, weights): (Vec<Parts>, Vec<f64>) =
        d.iter().map(|(tp, p)| (tp.parts(), p.to_f64().unwrap_or(0.0))).unzip();
    let start_sampler = Sampler::new(weights.into_iter());
    let mut unit: HashMap<Label, (Vec<(Parts, BigRational)>, Sampler)> = HashMap::new();
    for l in Label::all(o.orbit_length) {
        let dist = step_type(&l, 1, o)?;
        let sampler = Sampler::new(dist.iter().map(|(_, w)| w.to_f64().unwrap_or(0.0)));
        unit.insert(l, (dist, sampler));
    }
    let chunks = samples.div_ceil(SIM_CHUNK);
    let counts = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let n = SIM_CHUNK.min(samples - c * SIM_CHUNK);
            let mut local: HashMap<CycleStructure, u64> = HashMap::new();
            for _ in 0..n {
                let mut parts: Vec<(Label, u64)> = starts[start_sampler.draw(&mut rng)].clone();
                for _ in 0..steps {
                    let mut next = Vec::with_capacity(parts.len() * 2);
                    for (l, k) in &parts {
                        let (dist, sampler) = &unit[l];
                        let (outcome, _) = &dist[sampler.draw(&mut rng)];
                        next.extend(outcome.iter().map(|&(l2, k2)| (l2, k2 * k)));
                    }
                    parts = next;
                }
                let cs = CycleStructure::new(parts.iter().map(|p| p.1).collect()).expect("positive");
                *local.entry(cs).or_insert(0) += 1;
            }
            local
        })
        .reduce(HashMap::new, |mut a, b| {
            for (k, v) in b {
                *a.entry(k).or_insert(0) += v;
            }
            a
        });
    Ok(counts.into_iter().map(|(k, v)| (k, v as f64 / samples as f64)).collect())
}

/// A model number together with the orbit length it belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ModelId {
    pub orbit_length: u8,
    pub number: u8,
}

impl ModelId {
    pub fn new(orbit_length: u8, number: u8) -> Result<Self> {
        let count = match orbit_length {
            1 => 4,
            2 => 5,
            _ => return invalid(format!("no models for orbit length {orbit_length}")),
        };
        if number == 0 || number > count {
            return invalid(format!("orbit length {orbit_length} has models 1..={count}, got {number}"));
        }
        Ok(ModelId { orbit_length, number })
    }

    pub fn all(orbit_length: u8) -> Vec<ModelId> {
        let count = if orbit_length == 1 { 4 } else { 5 };
        (1..=count).map(|number| ModelId { orbit_length, number }).collect()
    }

    /// Root labels the model mixes uniformly, and whether s-rooted branches must split completely.
    pub fn root_labels(&self) -> (Vec<Label>, bool) {
        let l = |s: &str| s.parse::<Label>().expect("valid literal");
        match (self.orbit_length, self.number) {
            (1, 1) => (vec![l("s")], true),
            (1, 2) => (vec![l("s")], false),
            (1, 3) => (vec![l("s"), l("n")], true),
            (1, 4) => (vec![l("s"), l("n")], false),
            (2, 1) => (vec![l("ss")], true),
            (2, 2) => (vec![l("ss")], false),
            (2, 3) => (vec![l("ss"), l("sn")], false),
            (2, 4) => (vec![l("ss"), l("ns")], false),
            _ => (vec![l("ss"), l("nn"), l("sn"), l("ns")], false),
        }
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "m{}-model{}", self.orbit_length, self.number)
    }
}

/// Level-1 data of a model: a uniform mixture of one step from each allowed root label.
/// In the reducible models an s-rooted step is conditioned on splitting into three fixed points.
pub fn initial_data(model: &ModelId) -> Result<Data> {
    let model = ModelId::new(model.orbit_length, model.number)?;
    let orbit = OrbitSpec::standard(model.orbit_length)?;
    let (roots, split) = model.root_labels();
    let weight = ratio(1, roots.len() as i64);
    let mut entries = Vec::new();
    for root in roots {
        let mut outcomes = step_type(&root, 1, &orbit)?;
        if split && root.first_is_s() {
            outcomes.retain(|(parts, _)| parts.iter().all(|p| p.1 == 1));
            let mass: BigRational = outcomes.iter().map(|(_, w)| w).sum();
            for o in outcomes.iter_mut() {
                o.1 = &o.1 / &mass;
            }
        }
        for (parts, w) in outcomes {
            entries.push((TypedPartition::new(parts)?, w * &weight));
        }
    }
    Data::new(entries)
}
