//! Prime-field side: reduce catalog cubics mod p, factor iterates, label the factors.

use std::fmt;
use std::sync::OnceLock;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use thiserror::Error;

use crate::error::{invalid, Error, Result};
use crate::markov::{format_rational, parse_rational, shift_label, Label, OrbitSpec, TypedPartition, MAX_ORBIT_LENGTH};
use crate::tree::CycleStructure;

/// Degree multiset of a factorization, sorted decreasingly.
pub type FactorShape = CycleStructure;

/// Default ceiling on the iteration level (degree 3^6 = 729).
pub const MAX_FACTOR_LEVEL: usize = 6;

/// Steps followed when searching for the critical orbit before giving up.
const ORBIT_SEARCH_STEPS: usize = 16;

/// Orbit points with larger numerators or denominators (in bits) are treated as escaping.
const ORBIT_HEIGHT_BITS: u64 = 4096;

/// Why a prime was left out of a sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Error)]
pub enum Skip {
    #[error("p is 2, 3 or not prime")]
    SmallPrime,
    #[error("p divides a denominator or the leading coefficient")]
    BadReduction,
    #[error("an orbit value needed by a label vanishes mod p")]
    DegenerateOrbit,
    #[error("the iterate is not squarefree mod p")]
    NotSquarefree,
}

impl Skip {
    pub fn name(&self) -> &'static str {
        match self {
            Skip::SmallPrime => "small_prime",
            Skip::BadReduction => "bad_reduction",
            Skip::DegenerateOrbit => "degenerate_orbit",
            Skip::NotSquarefree => "not_squarefree",
        }
    }
}

// ---------------------------------------------------------------------------
// F_p arithmetic

#[inline]
fn mulm(a: u64, b: u64, p: u64) -> u64 {
    ((a as u128 * b as u128) % p as u128) as u64
}

#[inline]
fn addm(a: u64, b: u64, p: u64) -> u64 {
    let s = a as u128 + b as u128;
    (s % p as u128) as u64
}

#[inline]
fn subm(a: u64, b: u64, p: u64) -> u64 {
    if a >= b {
        a - b
    } else {
        p - (b - a)
    }
}

fn powm(mut a: u64, mut e: u64, p: u64) -> u64 {
    let mut r = 1 % p;
    a %= p;
    while e > 0 {
        if e & 1 == 1 {
            r = mulm(r, a, p);
        }
        a = mulm(a, a, p);
        e >>= 1;
    }
    r
}

fn invm(a: u64, p: u64) -> u64 {
    debug_assert!(!a.is_multiple_of(p));
    powm(a, p - 2, p)
}

fn bigint_mod(x: &BigInt, p: u64) -> u64 {
    let r = x.mod_floor(&BigInt::from(p));
    r.to_u64().expect("residue fits in u64")
}

/// Reduces a rational mod p; `None` when p divides the denominator.
pub fn rational_mod_p(q: &BigRational, p: u64) -> Option<u64> {
    let den = bigint_mod(q.denom(), p);
    if den == 0 {
        return None;
    }
    Some(mulm(bigint_mod(q.numer(), p), invm(den, p), p))
}

/// Euler's criterion. Zero is rejected: callers filter degenerate values first.
pub fn is_square(x: u64, p: u64) -> Result<bool> {
    if p < 3 || p.is_multiple_of(2) {
        return invalid(format!("{p} is not an odd prime"));
    }
    let x = x % p;
    if x == 0 {
        return invalid("zero has no quadratic character");
    }
    Ok(powm(x, (p - 1) / 2, p) == 1)
}

// ---------------------------------------------------------------------------
// Polynomials over F_p

/// A polynomial over F_p, coefficients stored from the constant term upwards. The zero
/// polynomial has no coefficients.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct FpPoly {
    p: u64,
    coeffs: Vec<u64>,
}

impl FpPoly {
    pub fn new(p: u64, coeffs: Vec<u64>) -> FpPoly {
        let mut f = FpPoly { p, coeffs: coeffs.into_iter().map(|c| c % p).collect() };
        f.trim();
        f
    }

    /// Coefficients given from the highest degree down, as signed integers.
    pub fn from_signed_desc(p: u64, coeffs: &[i64]) -> FpPoly {
        let c = coeffs.iter().rev().map(|&c| c.rem_euclid(p as i64) as u64).collect();
        FpPoly::new(p, c)
    }

    pub fn zero(p: u64) -> FpPoly {
        FpPoly { p, coeffs: Vec::new() }
    }

    pub fn constant(p: u64, c: u64) -> FpPoly {
        FpPoly::new(p, vec![c])
    }

    pub fn x(p: u64) -> FpPoly {
        FpPoly::new(p, vec![0, 1])
    }

    fn trim(&mut self) {
        while self.coeffs.last() == Some(&0) {
            self.coeffs.pop();
        }
    }

    pub fn prime(&self) -> u64 {
        self.p
    }

    /// Low-to-high coefficients.
    pub fn coeffs(&self) -> &[u64] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    fn deg(&self) -> usize {
        self.degree().unwrap_or(0)
    }

    pub fn leading(&self) -> u64 {
        self.coeffs.last().copied().unwrap_or(0)
    }

    pub fn monic(&self) -> FpPoly {
        if self.is_zero() {
            return self.clone();
        }
        self.scale(invm(self.leading(), self.p))
    }

    pub fn scale(&self, c: u64) -> FpPoly {
        FpPoly::new(self.p, self.coeffs.iter().map(|&a| mulm(a, c, self.p)).collect())
    }

    pub fn add(&self, o: &FpPoly) -> FpPoly {
        let n = self.coeffs.len().max(o.coeffs.len());
        let c = (0..n)
            .map(|i| addm(*self.coeffs.get(i).unwrap_or(&0), *o.coeffs.get(i).unwrap_or(&0), self.p))
            .collect();
        FpPoly::new(self.p, c)
    }

    pub fn sub(&self, o: &FpPoly) -> FpPoly {
        let n = self.coeffs.len().max(o.coeffs.len());
        let c = (0..n)
            .map(|i| subm(*self.coeffs.get(i).unwrap_or(&0), *o.coeffs.get(i).unwrap_or(&0), self.p))
            .collect();
        FpPoly::new(self.p, c)
    }

    pub fn mul(&self, o: &FpPoly) -> FpPoly {
        if self.is_zero() || o.is_zero() {
            return FpPoly::zero(self.p);
        }
        let p = self.p as u128;
        let mut acc = vec![0u128; self.coeffs.len() + o.coeffs.len() - 1];
        for (i, &a) in self.coeffs.iter().enumerate() {
            if a == 0 {
                continue;
            }
            for (j, &b) in o.coeffs.iter().enumerate() {
                acc[i + j] = (acc[i + j] + a as u128 * b as u128) % p;
            }
        }
        FpPoly::new(self.p, acc.into_iter().map(|c| c as u64).collect())
    }

    /// Quotient and remainder. Panics on division by zero.
    pub fn div_rem(&self, d: &FpPoly) -> (FpPoly, FpPoly) {
        assert!(!d.is_zero(), "polynomial division by zero");
        let p = self.p;
        if self.coeffs.len() < d.coeffs.len() {
            return (FpPoly::zero(p), self.clone());
        }
        let inv = invm(d.leading(), p);
        let dn = d.coeffs.len();
        let mut r = self.coeffs.clone();
        let mut q = vec![0u64; r.len() - dn + 1];
        for i in (0..q.len()).rev() {
            let c = mulm(r[i + dn - 1], inv, p);
            q[i] = c;
            if c == 0 {
                continue;
            }
            for (j, &dj) in d.coeffs.iter().enumerate() {
                r[i + j] = subm(r[i + j], mulm(c, dj, p), p);
            }
        }
        r.truncate(dn - 1);
        (FpPoly::new(p, q), FpPoly::new(p, r))
    }

    pub fn rem(&self, d: &FpPoly) -> FpPoly {
        self.div_rem(d).1
    }

    /// Monic gcd (zero if both inputs are zero).
    pub fn gcd(&self, o: &FpPoly) -> FpPoly {
        let (mut a, mut b) = (self.clone(), o.clone());
        while !b.is_zero() {
            let r = a.rem(&b);
            a = b;
            b = r;
        }
        a.monic()
    }

    pub fn derivative(&self) -> FpPoly {
        let c = self.coeffs.iter().enumerate().skip(1).map(|(i, &a)| mulm(a, i as u64 % self.p, self.p)).collect();
        FpPoly::new(self.p, c)
    }

    pub fn eval(&self, x: u64) -> u64 {
        self.coeffs.iter().rev().fold(0, |acc, &c| addm(mulm(acc, x, self.p), c, self.p))
    }

    /// `self(g)`, by Horner's rule.
    pub fn compose(&self, g: &FpPoly) -> FpPoly {
        let mut r = FpPoly::zero(self.p);
        for &c in self.coeffs.iter().rev() {
            r = r.mul(g).add(&FpPoly::constant(self.p, c));
        }
        r
    }

    fn mul_mod(&self, o: &FpPoly, m: &FpPoly) -> FpPoly {
        self.mul(o).rem(m)
    }

    /// `self^e mod m`.
    pub fn pow_mod(&self, mut e: u64, m: &FpPoly) -> FpPoly {
        let mut r = FpPoly::constant(self.p, 1).rem(m);
        let mut b = self.rem(m);
        while e > 0 {
            if e & 1 == 1 {
                r = r.mul_mod(&b, m);
            }
            b = b.mul_mod(&b, m);
            e >>= 1;
        }
        r
    }

    pub fn is_squarefree(&self) -> bool {
        !self.is_zero() && self.gcd(&self.derivative()).deg() == 0
    }

    /// Distinct-degree factorization of a monic squarefree polynomial: pairs (d, product of all
    /// irreducible factors of degree d).
    pub fn distinct_degree(&self) -> Vec<(usize, FpPoly)> {
        let p = self.p;
        let x = FpPoly::x(p);
        let mut out = Vec::new();
        let mut rest = self.monic();
        let mut h = x.rem(&rest);
        let mut d = 0;
        while rest.deg() >= 2 * (d + 1) {
            d += 1;
            h = h.pow_mod(p, &rest);
            let g = rest.gcd(&h.sub(&x));
            if g.deg() > 0 {
                rest = rest.div_rem(&g).0;
                h = h.rem(&rest);
                out.push((d, g));
            }
        }
        if rest.deg() > 0 {
            out.push((rest.deg(), rest));
        }
        out
    }

    /// Degree shape from distinct-degree factorization only.
    pub fn factor_shape(&self) -> std::result::Result<FactorShape, Skip> {
        if !self.is_squarefree() {
            return Err(Skip::NotSquarefree);
        }
        let mut degs = Vec::new();
        for (d, g) in self.distinct_degree() {
            degs.extend(std::iter::repeat_n(d as u64, g.deg() / d));
        }
        Ok(CycleStructure::new(degs).expect("positive degrees"))
    }

    /// Monic irreducible factors of a squarefree polynomial, sorted by degree then coefficients.
    pub fn factor(&self) -> std::result::Result<Vec<FpPoly>, Skip> {
        if !self.is_squarefree() {
            return Err(Skip::NotSquarefree);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.p ^ 0x9e37_79b9_7f4a_7c15);
        let mut out = Vec::new();
        for (d, g) in self.distinct_degree() {
            equal_degree(&g, d, &mut rng, &mut out);
        }
        out.sort_by(|a, b| (a.deg(), &a.coeffs).cmp(&(b.deg(), &b.coeffs)));
        Ok(out)
    }
}

/// Cantor-Zassenhaus splitting of a monic product of degree-d irreducibles (p odd).
fn equal_degree(g: &FpPoly, d: usize, rng: &mut ChaCha8Rng, out: &mut Vec<FpPoly>) {
    let n = g.deg();
    if n == d {
        out.push(g.clone());
        return;
    }
    let p = g.p;
    loop {
        let a = FpPoly::new(p, (0..n).map(|_| rng.random_range(0..p)).collect());
        if a.deg() == 0 {
            continue;
        }
        // a^((p^d - 1)/2) = (a^(1 + p + ... + p^(d-1)))^((p-1)/2)
        let mut cur = a.rem(g);
        let mut acc = cur.clone();
        for _ in 1..d {
            cur = cur.pow_mod(p, g);
            acc = acc.mul_mod(&cur, g);
        }
        let b = acc.pow_mod((p - 1) / 2, g);
        let u = g.gcd(&b.sub(&FpPoly::constant(p, 1)));
        if u.deg() > 0 && u.deg() < n {
            let v = g.div_rem(&u).0.monic();
            equal_degree(&u, d, rng, out);
            equal_degree(&v, d, rng, out);
            return;
        }
    }
}

impl fmt::Display for FpPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let mut first = true;
        for (i, &c) in self.coeffs.iter().enumerate().rev() {
            if c == 0 {
                continue;
            }
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            match (i, c) {
                (0, _) => write!(f, "{c}")?,
                (1, 1) => write!(f, "x")?,
                (1, _) => write!(f, "{c}x")?,
                (_, 1) => write!(f, "x^{i}")?,
                _ => write!(f, "{c}x^{i}")?,
            }
        }
        write!(f, " (mod {})", self.p)
    }
}

// ---------------------------------------------------------------------------
// Exact critical data

/// `x + y·√D` with `D` the discriminant of f'.
#[derive(Clone, Debug, PartialEq, Eq)]
struct Quad {
    x: BigRational,
    y: BigRational,
}

impl Quad {
    fn mul(&self, o: &Quad, d: &BigRational) -> Quad {
        Quad { x: &self.x * &o.x + &self.y * &o.y * d, y: &self.x * &o.y + &self.y * &o.x }
    }

    fn add_rational(&self, r: &BigRational) -> Quad {
        Quad { x: &self.x + r, y: self.y.clone() }
    }
}

/// An unordered pair {α, β} of conjugate (or rational) orbit points, kept as α + β and αβ.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OrbitPair {
    pub sum: BigRational,
    pub product: BigRational,
}

impl OrbitPair {
    /// `(α - t)(β - t)`.
    pub fn shifted_product(&self, t: &BigRational) -> BigRational {
        t * t - &self.sum * t + &self.product
    }

    /// α and β when they are rational, smaller first.
    pub fn rational_points(&self) -> Option<(BigRational, BigRational)> {
        let disc = &self.sum * &self.sum - BigRational::from_integer(4.into()) * &self.product;
        let r = rational_sqrt(&disc)?;
        let two = BigRational::from_integer(2.into());
        Some(((&self.sum - &r) / &two, (&self.sum + &r) / &two))
    }
}

fn rational_sqrt(q: &BigRational) -> Option<BigRational> {
    if q.is_negative() {
        return None;
    }
    let (n, d) = (q.numer(), q.denom());
    let (sn, sd) = (n.sqrt(), d.sqrt());
    (&sn * &sn == *n && &sd * &sd == *d).then(|| BigRational::new(sn, sd))
}

fn is_rational_square(q: &BigRational) -> bool {
    rational_sqrt(q).is_some()
}

/// True when the rational `r` is a square in Q(√−3), i.e. r = s² or r = −3s².
pub fn is_square_in_eisenstein_field(r: &BigRational) -> Result<bool> {
    if r.is_zero() {
        return invalid("zero has no quadratic character");
    }
    let minus_third = BigRational::new((-1).into(), 3.into());
    Ok(is_rational_square(r) || is_rational_square(&(r * minus_third)))
}

/// A post-critically finite cubic with its combined critical orbit.
#[derive(Clone, Debug)]
pub struct PcfCubic {
    id: String,
    formula: String,
    /// a, b, c, d of a·z³ + b·z² + c·z + d.
    coeffs: [BigRational; 4],
    shift: BigRational,
    critical: OrbitPair,
    orbit: Vec<OrbitPair>,
    spec: OrbitSpec,
}

impl PcfCubic {
    /// Checks post-critical finiteness and non-collision; `coeffs` run from z³ down.
    pub fn new(id: &str, formula: &str, coeffs: [BigRational; 4]) -> Result<PcfCubic> {
        if coeffs[0].is_zero() {
            return invalid("leading coefficient must be nonzero");
        }
        let [a, b, c, _] = &coeffs;
        let r = |n: i64| BigRational::from_integer(n.into());
        let disc = r(4) * b * b - r(12) * a * c;
        if disc.is_zero() {
            return invalid("the critical points coincide");
        }
        // γ = (−2b ± √disc) / 6a
        let inv6a = (r(6) * a).recip();
        let gamma = Quad { x: -(r(2) * b) * &inv6a, y: inv6a.clone() };
        let pair_of = |q: &Quad| OrbitPair { sum: r(2) * &q.x, product: &q.x * &q.x - &q.y * &q.y * &disc };
        let collides = |pr: &OrbitPair| (&pr.sum * &pr.sum - r(4) * &pr.product).is_zero();
        let critical = pair_of(&gamma);

        let eval = |q: &Quad| -> Quad {
            let mut acc = Quad { x: coeffs[0].clone(), y: BigRational::zero() };
            for co in &coeffs[1..] {
                acc = acc.mul(q, &disc).add_rational(co);
            }
            acc
        };
        let mut pairs: Vec<OrbitPair> = Vec::new();
        let mut cur = gamma;
        for _ in 0..ORBIT_SEARCH_STEPS {
            cur = eval(&cur);
            let pair = pair_of(&cur);
            let height = [&pair.sum, &pair.product].iter().map(|q| q.numer().bits().max(q.denom().bits())).max();
            if height.unwrap_or(0) > ORBIT_HEIGHT_BITS {
                return invalid(format!("{formula}: the critical orbit escapes"));
            }
            if collides(&pair) {
                return invalid(format!("{formula}: the critical orbits collide"));
            }
            if let Some(j) = pairs.iter().position(|q| *q == pair) {
                let m = pairs.len();
                if m > MAX_ORBIT_LENGTH as usize {
                    return invalid(format!("{formula}: combined critical orbit of length {m} is too long"));
                }
                let spec = OrbitSpec::new(m as u8, (j + 1) as u8)?;
                return Ok(PcfCubic {
                    id: id.to_string(),
                    formula: formula.to_string(),
                    coeffs,
                    shift: BigRational::zero(),
                    critical,
                    orbit: pairs,
                    spec,
                });
            }
            pairs.push(pair);
        }
        invalid(format!("{formula}: the critical orbit is not finite within {ORBIT_SEARCH_STEPS} steps"))
    }

    /// The conjugate `f_a(z) = f(z + a) − a`.
    pub fn with_parameter(&self, a: &BigRational) -> Result<PcfCubic> {
        let [ca, cb, cc, cd] = &self.coeffs;
        let r = |n: i64| BigRational::from_integer(n.into());
        let new = [
            ca.clone(),
            r(3) * a * ca + cb,
            r(3) * a * a * ca + r(2) * a * cb + cc,
            ca * a * a * a + cb * a * a + cc * a + cd - a,
        ];
        let mut f = PcfCubic::new(&self.id, &self.formula, new)?;
        f.shift = &self.shift + a;
        Ok(f)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    /// The formula of the a = 0 member.
    pub fn formula(&self) -> &str {
        &self.formula
    }

    pub fn parameter(&self) -> &BigRational {
        &self.shift
    }

    pub fn coefficients(&self) -> &[BigRational; 4] {
        &self.coeffs
    }

    pub fn orbit_length(&self) -> u8 {
        self.spec.orbit_length
    }

    pub fn orbit_spec(&self) -> OrbitSpec {
        self.spec
    }

    /// The pair {γ1, γ2} of critical points.
    pub fn critical_pair(&self) -> &OrbitPair {
        &self.critical
    }

    /// Critical points when rational, smaller first.
    pub fn critical_points(&self) -> Option<(BigRational, BigRational)> {
        self.critical.rational_points()
    }

    /// Pairs {f^k(γ1), f^k(γ2)} for k = 1..m.
    pub fn combined_orbit(&self) -> &[OrbitPair] {
        &self.orbit
    }

    pub fn eval(&self, z: &BigRational) -> BigRational {
        self.coeffs.iter().skip(1).fold(self.coeffs[0].clone(), |acc, c| acc * z + c)
    }

    pub fn derivative_at(&self, z: &BigRational) -> BigRational {
        let r = |n: i64| BigRational::from_integer(n.into());
        r(3) * &self.coeffs[0] * z * z + r(2) * &self.coeffs[1] * z + &self.coeffs[2]
    }

    /// True when f − t has a rational root (equivalently, is reducible over Q(√−3)).
    pub fn has_rational_root(&self, t: &BigRational) -> bool {
        let mut c = self.coeffs.clone();
        c[3] -= t;
        cubic_has_rational_root(&c)
    }

    pub fn to_json(&self) -> serde_json::Value {
        let pair = |p: &OrbitPair| {
            let mut v = serde_json::json!({"sum": format_rational(&p.sum), "product": format_rational(&p.product)});
            if let Some((a, b)) = p.rational_points() {
                v["points"] = serde_json::json!([format_rational(&a), format_rational(&b)]);
            }
            v
        };
        serde_json::json!({
            "id": self.id,
            "formula": self.formula,
            "a": format_rational(&self.shift),
            "coefficients": self.coeffs.iter().map(format_rational).collect::<Vec<_>>(),
            "critical": pair(&self.critical),
            "orbit": self.orbit.iter().map(pair).collect::<Vec<_>>(),
            "orbit_length": self.spec.orbit_length,
            "reentry": self.spec.reentry,
        })
    }
}

/// Exact rational-root test for a·z³ + b·z² + c·z + d (coefficients from z³ down).
pub fn cubic_has_rational_root(c: &[BigRational; 4]) -> bool {
    // Clear denominators, then substitute y = A z to get a monic integer cubic.
    let lcm = c.iter().fold(BigInt::one(), |l, q| l.lcm(q.denom()));
    let ints: Vec<BigInt> = c.iter().map(|q| (q * BigRational::from_integer(lcm.clone())).to_integer()).collect();
    let (a, b, cc, d) = (&ints[0], &ints[1], &ints[2], &ints[3]);
    if d.is_zero() {
        return true;
    }
    let b1 = b.clone();
    let c1 = a * cc;
    let d1 = a * a * d;
    let g = |y: &BigInt| ((y + &b1) * y + &c1) * y + &d1;

    let bound = BigInt::one() + b1.abs().max(c1.abs()).max(d1.abs());
    let mut cuts = vec![-bound.clone()];
    let disc = &b1 * &b1 - BigInt::from(3) * &c1;
    if !disc.is_negative() {
        let s = disc.sqrt();
        let three = BigInt::from(3);
        let (lo, hi): (BigInt, BigInt) = if &s * &s == disc {
            ((-&b1 - &s).div_floor(&three), (-&b1 + &s).div_floor(&three))
        } else {
            ((-&b1 - &s - BigInt::one()).div_floor(&three), (-&b1 + &s).div_floor(&three))
        };
        for v in [lo, hi] {
            if v > cuts[cuts.len() - 1] && v < bound {
                cuts.push(v);
            }
        }
    }
    // Monotone integer segments [cuts[i] (+1), cuts[i+1]].
    let mut segs = Vec::new();
    for i in 0..cuts.len() {
        let start = if i == 0 { cuts[0].clone() } else { &cuts[i] + 1 };
        let end = cuts.get(i + 1).cloned().unwrap_or_else(|| bound.clone());
        if start <= end {
            segs.push((start, end));
        }
    }
    segs.into_iter().any(|(lo, hi)| monotone_zero(&g, lo, hi))
}

fn monotone_zero(g: &impl Fn(&BigInt) -> BigInt, mut lo: BigInt, mut hi: BigInt) -> bool {
    let (glo, ghi) = (g(&lo), g(&hi));
    if glo.is_zero() || ghi.is_zero() {
        return true;
    }
    if glo.signum() == ghi.signum() {
        return false;
    }
    let increasing = glo.is_negative();
    while &hi - &lo > BigInt::one() {
        let mid: BigInt = (&lo + &hi).div_floor(&BigInt::from(2));
        let v = g(&mid);
        if v.is_zero() {
            return true;
        }
        if v.is_negative() == increasing {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    false
}

// ---------------------------------------------------------------------------
// Catalog

#[derive(Deserialize)]
struct CatalogFile {
    entries: Vec<CatalogRow>,
    rejected: Vec<CatalogRow>,
}

#[derive(Deserialize)]
struct CatalogRow {
    #[serde(default)]
    id: String,
    formula: String,
    coefficients: [String; 4],
}

const CATALOG_JSON: &str = include_str!("../data/catalog.json");

fn parse_row(row: &CatalogRow) -> Result<[BigRational; 4]> {
    let mut out: [BigRational; 4] = Default::default();
    for (o, s) in out.iter_mut().zip(&row.coefficients) {
        *o = parse_rational(s)?;
    }
    Ok(out)
}

fn catalog_file() -> &'static CatalogFile {
    static FILE: OnceLock<CatalogFile> = OnceLock::new();
    FILE.get_or_init(|| serde_json::from_str(CATALOG_JSON).expect("bundled catalog is valid JSON"))
}

/// Every catalog entry at parameter a = 0.
pub fn catalog() -> Vec<PcfCubic> {
    static CATALOG: OnceLock<Vec<PcfCubic>> = OnceLock::new();
    CATALOG
        .get_or_init(|| {
            catalog_file()
                .entries
                .iter()
                .map(|row| {
                    let c = parse_row(row).expect("bundled catalog coefficients parse");
                    PcfCubic::new(&row.id, &row.formula, c).expect("bundled catalog entries are PCF")
                })
                .collect()
        })
        .clone()
}

/// Catalog entry by id, conjugated to parameter `a`.
pub fn catalog_entry(id: &str, a: &BigRational) -> Result<PcfCubic> {
    let base = catalog()
        .into_iter()
        .find(|f| f.id == id)
        .ok_or_else(|| Error::InvalidArgument(format!("unknown catalog entry {id:?}")))?;
    if a.is_zero() {
        Ok(base)
    } else {
        base.with_parameter(a)
    }
}

/// Listed candidates that fail the post-critically finite check, with the failure.
pub fn rejected_candidates() -> Vec<(String, Error)> {
    catalog_file()
        .rejected
        .iter()
        .map(|row| {
            let err = parse_row(row)
                .and_then(|c| PcfCubic::new("", &row.formula, c))
                .err()
                .unwrap_or_else(|| Error::Internal("rejected candidate passed the check".into()));
            (row.formula.clone(), err)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Reduction and labelled factorization

/// A catalog cubic reduced mod p together with its orbit data and the target t.
#[derive(Clone, Debug)]
pub struct ReducedCubic {
    p: u64,
    f: FpPoly,
    t: u64,
    /// (sum, product) of each orbit pair mod p.
    orbit: Vec<(u64, u64)>,
    spec: OrbitSpec,
    points: Option<Vec<(u64, u64)>>,
    critical: Option<(u64, u64)>,
    degenerate: bool,
}

/// Reduces `f − t` mod p with its orbit data. Degeneracy is flagged, not an error.
pub fn reduce_mod_p(f: &PcfCubic, t: &BigRational, p: u64) -> std::result::Result<ReducedCubic, Skip> {
    if p <= 3 || !primal::is_prime(p) {
        return Err(Skip::SmallPrime);
    }
    let red = |q: &BigRational| rational_mod_p(q, p).ok_or(Skip::BadReduction);
    let mut desc = Vec::with_capacity(4);
    for c in &f.coeffs {
        desc.push(red(c)?);
    }
    if desc[0] == 0 {
        return Err(Skip::BadReduction);
    }
    let tp = red(t)?;
    let mut orbit = Vec::with_capacity(f.orbit.len());
    for pair in &f.orbit {
        orbit.push((red(&pair.sum)?, red(&pair.product)?));
    }
    red(&f.critical.sum)?;
    red(&f.critical.product)?;
    let mut points = None;
    let mut critical = None;
    if let Some((g1, g2)) = f.critical_points() {
        let mut v = Vec::new();
        for pair in &f.orbit {
            let (a, b) = pair.rational_points().expect("rational critical points have rational orbits");
            v.push((red(&a)?, red(&b)?));
        }
        points = Some(v);
        critical = Some((red(&g1)?, red(&g2)?));
    }
    let degenerate = orbit.iter().any(|&(s, pr)| q_eval(s, pr, tp, p) == 0);
    desc.reverse();
    Ok(ReducedCubic { p, f: FpPoly::new(p, desc), t: tp, orbit, spec: f.spec, points, critical, degenerate })
}

/// `x² − s·x + pr` at `x`.
fn q_eval(s: u64, pr: u64, x: u64, p: u64) -> u64 {
    addm(subm(mulm(x, x, p), mulm(s, x, p), p), pr, p)
}

/// Irreducible factors of fⁿ − t with their labels.
#[derive(Clone, Debug)]
pub struct LabelledFactorization {
    pub factors: Vec<(FpPoly, Label)>,
}

impl LabelledFactorization {
    pub fn shape(&self) -> FactorShape {
        CycleStructure::new(self.factors.iter().map(|(g, _)| g.deg() as u64).collect()).expect("positive degrees")
    }

    pub fn typed_partition(&self) -> Result<TypedPartition> {
        TypedPartition::new(self.factors.iter().map(|(g, l)| (*l, g.deg() as u64)).collect())
    }
}

/// What the square test predicts for `g∘f`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Branch {
    /// One factor of degree 3d or three of degree d.
    IrreducibleOrSplit,
    /// Factors of degree 2d and d.
    TwoPlusOne,
}

impl Branch {
    pub fn admits(&self, shape: &FactorShape, d: u64) -> bool {
        match self {
            Branch::IrreducibleOrSplit => shape.lengths() == [3 * d] || shape.lengths() == [d, d, d],
            Branch::TwoPlusOne => shape.lengths() == [2 * d, d],
        }
    }
}

impl ReducedCubic {
    pub fn prime(&self) -> u64 {
        self.p
    }

    /// f mod p (without the t shift).
    pub fn poly(&self) -> &FpPoly {
        &self.f
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn orbit_spec(&self) -> OrbitSpec {
        self.spec
    }

    /// (sum, product) of each orbit pair mod p.
    pub fn orbit_pairs(&self) -> &[(u64, u64)] {
        &self.orbit
    }

    /// The orbit points mod p, when the critical points are rational.
    pub fn orbit_points(&self) -> Option<&[(u64, u64)]> {
        self.points.as_deref()
    }

    pub fn critical_points(&self) -> Option<(u64, u64)> {
        self.critical
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    /// fⁿ − t mod p.
    pub fn iterate(&self, n: usize) -> Result<FpPoly> {
        if n > MAX_FACTOR_LEVEL {
            return Err(Error::ResourceLimit(format!("level {n} exceeds {MAX_FACTOR_LEVEL}")));
        }
        let mut g = FpPoly::x(self.p);
        for _ in 0..n {
            g = self.f.compose(&g);
        }
        Ok(g.sub(&FpPoly::constant(self.p, self.t)))
    }

    /// g(α_k)·g(β_k) for orbit pair k (1-based).
    pub fn norm_at(&self, g: &FpPoly, k: usize) -> u64 {
        let p = self.p;
        let (s, pr) = self.orbit[k - 1];
        // reduce g mod x² − s x + pr, then take the norm of c1 x + c0
        let q = FpPoly::new(p, vec![pr, subm(0, s, p), 1]);
        let r = g.rem(&q);
        let c0 = r.coeffs.first().copied().unwrap_or(0);
        let c1 = r.coeffs.get(1).copied().unwrap_or(0);
        addm(addm(mulm(c0, c0, p), mulm(mulm(c0, c1, p), s, p), p), mulm(mulm(c1, c1, p), pr, p), p)
    }

    /// Letter k is s iff g(f^k γ1)·g(f^k γ2) is a nonzero square.
    pub fn label_of(&self, g: &FpPoly) -> std::result::Result<Label, Skip> {
        let mut letters = Vec::with_capacity(self.orbit.len());
        for k in 1..=self.orbit.len() {
            let v = self.norm_at(g, k);
            if v == 0 {
                return Err(Skip::DegenerateOrbit);
            }
            letters.push(is_square(v, self.p).expect("nonzero value, odd prime"));
        }
        Ok(Label::from_letters(&letters).expect("orbit length within range"))
    }

    /// Sign of (−3)^deg g · g(f γ1)·g(f γ2), which decides how g∘f factors.
    pub fn square_branch_test(&self, g: &FpPoly) -> std::result::Result<Branch, Skip> {
        let p = self.p;
        let v = self.norm_at(g, 1);
        if v == 0 {
            return Err(Skip::DegenerateOrbit);
        }
        let twist = powm(p - 3, g.deg() as u64, p);
        let sq = is_square(mulm(twist, v, p), p).expect("nonzero value, odd prime");
        Ok(if sq { Branch::IrreducibleOrSplit } else { Branch::TwoPlusOne })
    }

    /// Degree shape of fⁿ − t, no labels.
    pub fn factor_shape(&self, n: usize) -> std::result::Result<FactorShape, Skip> {
        self.iterate(n).map_err(|_| Skip::BadReduction)?.factor_shape()
    }

    /// Full factorization of fⁿ − t with labels.
    pub fn iterate_and_factor(&self, n: usize) -> std::result::Result<LabelledFactorization, Skip> {
        if self.degenerate {
            return Err(Skip::DegenerateOrbit);
        }
        let factors = self.iterate(n).map_err(|_| Skip::BadReduction)?.factor()?;
        let mut out = Vec::with_capacity(factors.len());
        for g in factors {
            let l = self.label_of(&g)?;
            out.push((g, l));
        }
        Ok(LabelledFactorization { factors: out })
    }

    /// For every irreducible factor G of f^(n−1) − t, factors G∘f and checks the degree law,
    /// the branch prediction and the label relation.
    pub fn lifting_check(&self, n: usize) -> std::result::Result<LiftingStats, Skip> {
        let mut st = LiftingStats::default();
        if n == 0 {
            return Ok(st);
        }
        let prev = self.iterate_and_factor(n - 1)?;
        for (g, lg) in &prev.factors {
            let d = g.deg() as u64;
            let parts = g.compose(&self.f).factor()?;
            let shape = CycleStructure::new(parts.iter().map(|h| h.deg() as u64).collect()).expect("positive");
            let branch = self.square_branch_test(g)?;
            let mut prod: Option<Label> = None;
            for h in &parts {
                let lh = self.label_of(h)?;
                prod = Some(prod.map_or(lh, |acc| acc.mul(&lh)));
            }
            st.factors += 1;
            let quotients_ok = parts.iter().all(|h| {
                let k = h.deg() as u64;
                k.is_multiple_of(d) && (1..=3).contains(&(k / d))
            });
            if !quotients_ok || shape.total() != 3 * d {
                st.degree_violations.push(format!("{g}: shape {shape}"));
            }
            if !branch.admits(&shape, d) {
                st.branch_violations.push(format!("{g}: predicted {branch:?}, shape {shape}"));
            }
            let expected = shift_label(lg, &self.spec).expect("label length matches the orbit");
            if prod != Some(expected) {
                st.label_violations.push(format!("{g}: product {prod:?}, shifted {expected:?}"));
            }
        }
        Ok(st)
    }
}

/// Outcome of `ReducedCubic::lifting_check`.
#[derive(Clone, Debug, Default)]
pub struct LiftingStats {
    pub factors: usize,
    pub degree_violations: Vec<String>,
    pub branch_violations: Vec<String>,
    pub label_violations: Vec<String>,
}

impl LiftingStats {
    pub fn is_clean(&self) -> bool {
        self.degree_violations.is_empty() && self.branch_violations.is_empty() && self.label_violations.is_empty()
    }

    /// First violation, if any.
    pub fn first_violation(&self) -> Option<&String> {
        self.degree_violations.iter().chain(&self.branch_violations).chain(&self.label_violations).next()
    }
}

/// Reduces a plain rational cubic (coefficients from z³ down) mod p.
pub fn reduce_plain(coeffs: &[BigRational], p: u64) -> std::result::Result<FpPoly, Skip> {
    if p <= 3 || !primal::is_prime(p) {
        return Err(Skip::SmallPrime);
    }
    let mut c = Vec::with_capacity(coeffs.len());
    for q in coeffs.iter().rev() {
        c.push(rational_mod_p(q, p).ok_or(Skip::BadReduction)?);
    }
    let f = FpPoly::new(p, c);
    if f.degree() != Some(coeffs.len().saturating_sub(1)) {
        return Err(Skip::BadReduction);
    }
    Ok(f)
}

// ---------------------------------------------------------------------------
// Model selection

/// Picks the Markov model for `f − t` from irreducibility over Q(√−3) and the squareness of
/// the shifted orbit products.
pub fn select_model(f: &PcfCubic, t: &BigRational) -> Result<u8> {
    let products: Vec<BigRational> = f.orbit.iter().map(|pr| pr.shifted_product(t)).collect();
    if products.iter().any(|q| q.is_zero()) {
        return invalid(format!("t = {} lies on the critical orbit", format_rational(t)));
    }
    let reducible = f.has_rational_root(t);
    let sq = |q: &BigRational| is_square_in_eisenstein_field(q).expect("nonzero");
    match f.orbit_length() {
        1 => Ok(match (reducible, sq(&products[0])) {
            (true, true) => 1,
            (false, true) => 2,
            (true, false) => 3,
            (false, false) => 4,
        }),
        2 => {
            let (s1, s2) = (sq(&products[0]), sq(&products[1]));
            let s12 = sq(&(&products[0] * &products[1]));
            match (s1, s2, s12) {
                (true, true, _) => Ok(if reducible { 1 } else { 2 }),
                (true, false, _) => Ok(3),
                (false, true, _) => Ok(4),
                (false, false, false) => Ok(5),
                (false, false, true) => invalid(
                    "both orbit products are nonsquare but their product is a square; no model covers this case",
                ),
            }
        }
        m => invalid(format!("no model table for orbit length {m}")),
    }
}
