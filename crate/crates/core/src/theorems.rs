//! Closed-form orders, reference cycle data and the structured theorem report.

use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::ToPrimitive;
use serde::Serialize;
use serde_json::json;

use crate::error::{invalid, Result};
use crate::groups::{
    build_group, cycle_data, identify_small_quotient, normalized_f64, recursive_generator, to_perm, CdMode, CosetUnion,
    GenName, GroupFamily, GroupKind, QuotientName, DEFAULT_ENUMERATION_CAP,
};
use crate::markov::{
    cycle_marginal, format_rational, propagate_with, ratio, tv_distance_f64, CycleDataDist, Data, OrbitSpec,
    TypedPartition,
};
use crate::perm_group::{Perm, PermGroup};

/// Support cap used when propagating reference data.
pub const REFERENCE_MAX_SUPPORT: usize = 20_000_000;

/// Seed partition and weight of `A_i` (1-based) for orbit length `m`.
pub fn reference_seed(m: u8, i: usize) -> Result<(TypedPartition, BigRational)> {
    let (s, w): (&str, BigRational) = match (m, i) {
        (1, 1) => ("[s,1]^3", ratio(1, 12)),
        (1, 2) => ("[s,3]", ratio(2, 3)),
        (1, 3) => ("[n,1]^2[s,1]", ratio(1, 4)),
        (1, 4) => ("[n,1]", ratio(1, 2)),
        (1, 5) => ("[n,2][s,1]", ratio(1, 2)),
        (1, 6) => ("[n,1][s,2]", ratio(1, 2)),
        (1, 7) => ("[s,1]", ratio(1, 1)),
        (2, 1) => ("[ss,1]^3", ratio(1, 48)),
        (2, 2) => ("[ss,3]", ratio(2, 3)),
        (2, 3) => ("[nn,1]^2[ss,1]", ratio(1, 16)),
        (2, 4) => ("[ns,1]^2[ss,1]", ratio(1, 16)),
        (2, 5) => ("[sn,1]^2[ss,1]", ratio(1, 16)),
        (2, 6) => ("[ns,1][sn,1][nn,1]", ratio(1, 8)),
        (2, 7) => ("[nn,1]", ratio(1, 4)),
        (2, 8) => ("[ss,1]", ratio(1, 4)),
        (2, 9) => ("[sn,1]", ratio(1, 4)),
        // stated as 1; a single coset of L in M carries total weight 1/4
        (2, 10) => ("[ns,1]", ratio(1, 4)),
        _ => return invalid(format!("no reference data A_{i} for orbit length {m}")),
    };
    Ok((s.parse()?, w))
}

/// `A_i^{(n)}`: the seed propagated `n − 1` steps, cycle marginal scaled by the weight.
pub fn reference_data(m: u8, i: usize, n: usize) -> Result<CycleDataDist> {
    if n == 0 {
        return invalid("reference data starts at n = 1");
    }
    let (seed, w) = reference_seed(m, i)?;
    let orbit = OrbitSpec::standard(m)?;
    let d = propagate_with(&Data::point(seed), n - 1, &orbit, REFERENCE_MAX_SUPPORT)?;
    Ok(cycle_marginal(&d).scale(&w))
}

/// `(3ⁿ − 1)/2`.
fn half_exponent(n: usize) -> u64 {
    (3u64.pow(n as u32) - 1) / 2
}

/// Exponents (of 3, of 2) in the closed-form order of `M_n`. For m = 2 only n ≥ 3 is covered.
pub fn markov_order_exponents(m: u8, n: usize) -> Result<(u64, u64)> {
    if n == 0 || n > 30 {
        return invalid(format!("level {n} out of range"));
    }
    match m {
        1 => Ok((half_exponent(n), 3u64.pow(n as u32 - 1))),
        2 if n >= 3 => Ok((half_exponent(n), 3u64.pow(n as u32 - 1) + 3u64.pow(n as u32 - 3))),
        2 => invalid("the orbit-length-2 order formula starts at n = 3"),
        _ => invalid(format!("no order formula for orbit length {m}")),
    }
}

pub fn markov_order_formula(m: u8, n: usize) -> Result<BigUint> {
    let (a, b) = markov_order_exponents(m, n)?;
    Ok(BigUint::from(3u8).pow(a as u32) * BigUint::from(2u8).pow(b as u32))
}

/// `|Aut(T_n)| = 6^((3ⁿ−1)/2)`.
pub fn aut_order_formula(n: usize) -> BigUint {
    BigUint::from(6u8).pow(half_exponent(n) as u32)
}

/// `log|M_n| / log|Aut(T_n)|` from the closed-form exponents.
pub fn hausdorff_ratio(m: u8, n: usize) -> Result<f64> {
    let (a, b) = markov_order_exponents(m, n)?;
    let c = half_exponent(n) as f64;
    Ok((a as f64 * 3f64.ln() + b as f64 * 2f64.ln()) / (c * 6f64.ln()))
}

/// Limit of the ratio as n → ∞: `1 − 1/(3 log₂ 6)` for m = 1, `1 − 7/(27 log₂ 6)` for m = 2.
pub fn hausdorff_limit(m: u8) -> Result<f64> {
    let l = 6f64.log2();
    match m {
        1 => Ok(1.0 - 1.0 / (3.0 * l)),
        2 => Ok(1.0 - 7.0 / (27.0 * l)),
        _ => invalid(format!("no limit for orbit length {m}")),
    }
}

/// Two other candidate values of the m = 2 limit, printed alongside the computed one.
pub fn hausdorff_annotations_m2() -> [(&'static str, f64); 2] {
    let l = 6f64.log2();
    [("alternative constant 1-1/(3 log2 6)", 1.0 - 1.0 / (3.0 * l)), ("alternative constant 1-8/(27 log2 6)", 1.0 - 8.0 / (27.0 * l))]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Method {
    Exact,
    Sampled { n: u64, seed: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    /// Reported only: outside the stated range, or an annotation.
    Info,
}

#[derive(Clone, Debug, Serialize)]
pub struct ReportItem {
    pub claim: String,
    pub location: String,
    pub computed: serde_json::Value,
    pub method: Method,
    pub verdict: Verdict,
}

#[derive(Clone, Copy, Debug)]
pub struct ReportConfig {
    pub samples: u64,
    pub seed: u64,
    pub enumeration_cap: u64,
    /// Largest acceptable total variation for sampled cycle data (normalized).
    pub tv_tolerance: f64,
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig { samples: 100_000, seed: 1, enumeration_cap: DEFAULT_ENUMERATION_CAP, tv_tolerance: 0.02 }
    }
}

/// One coset-union identity `A_i^{(level)} = CD(union, ambient)`.
pub struct CdIdentity {
    pub name: String,
    pub union: CosetUnion,
    pub ambient: PermGroup,
    pub reference: CycleDataDist,
}

/// Outcome of comparing a coset union against its reference data.
#[derive(Clone, Debug)]
pub struct CdCheck {
    pub computed: CycleDataDist,
    pub method: Method,
    /// Exact equality in exhaustive mode; normalized TV within tolerance plus equal weight when sampled.
    pub holds: bool,
    pub tv: f64,
    pub weight_matches: bool,
}

/// Compares one identity, exhaustively if the union is small enough.
pub fn check_identity(id: &CdIdentity, cfg: &ReportConfig) -> Result<CdCheck> {
    let weight = BigRational::new(id.union.size().into(), id.ambient.order().into());
    let weight_matches = weight == id.reference.total();
    if id.union.size() <= BigUint::from(cfg.enumeration_cap) {
        let computed = cycle_data(&id.union, &id.ambient, CdMode::Exhaustive { cap: cfg.enumeration_cap })?;
        let tv = tv_distance_f64(&normalized_f64(&computed), &normalized_f64(&id.reference));
        let holds = computed == id.reference;
        return Ok(CdCheck { computed, method: Method::Exact, holds, tv, weight_matches });
    }
    let computed = cycle_data(&id.union, &id.ambient, CdMode::Sampled { samples: cfg.samples, seed: cfg.seed })?;
    let tv = tv_distance_f64(&normalized_f64(&computed), &normalized_f64(&id.reference));
    let holds = weight_matches && tv <= cfg.tv_tolerance;
    Ok(CdCheck { computed, method: Method::Sampled { n: cfg.samples, seed: cfg.seed }, holds, tv, weight_matches })
}

fn gen(name: GenName, n: usize, m: u8) -> Result<Perm> {
    Ok(to_perm(&recursive_generator(name, n, m)?))
}

fn group(m: u8, kind: GroupKind, n: usize) -> Result<PermGroup> {
    build_group(&GroupFamily::new(m, kind, n)?)
}

/// The coset-union identities for orbit length `m` at level `n` (n ≥ 2).
pub fn cd_identities(m: u8, n: usize) -> Result<Vec<CdIdentity>> {
    identities_lenient(m, n)?.into_iter().map(|(_, r)| r).collect()
}

/// Like `cd_identities`, but a union that cannot be formed (for example because two
/// representatives share a coset below the stated range) is returned as an error entry.
fn identities_lenient(m: u8, n: usize) -> Result<Vec<(String, Result<CdIdentity>)>> {
    if n < 2 {
        return invalid("coset identities need n >= 2");
    }
    let (l, h, k, mm) = (group(m, GroupKind::L, n)?, group(m, GroupKind::H, n)?, group(m, GroupKind::K, n)?, group(m, GroupKind::M, n)?);
    let x = gen(GenName::X, n, m)?;
    let x2 = x.then(&x);
    let y = gen(GenName::Y, n, m)?;
    let z = gen(GenName::Z, n, m)?;
    let conj = |a: &Perm| [a.clone(), a.conjugate_by(&x), a.conjugate_by(&x2)];
    let mut out = Vec::new();
    let mut push = |name: &str, sub: &PermGroup, reps: Vec<Perm>, amb: &PermGroup, i: usize, lvl: usize| -> Result<()> {
        let built = CosetUnion::new(sub.clone(), reps).map(|union| CdIdentity {
            name: name.to_string(),
            union,
            ambient: amb.clone(),
            reference: CycleDataDist::default(),
        });
        let built = match built {
            Ok(mut id) => {
                id.reference = reference_data(m, i, lvl)?;
                Ok(id)
            }
            Err(e) => Err(e),
        };
        out.push((name.to_string(), built));
        Ok(())
    };
    push("A1 = CD(H, L)", &h, vec![Perm::identity(h.degree())], &l, 1, n)?;
    push("A2 = CD(Kx u Kx^2, L)", &k, vec![x.clone(), x2.clone()], &l, 2, n)?;
    push("A3 = CD(zH u z^x H u z^(x^2) H, L)", &h, conj(&z).to_vec(), &l, 3, n)?;
    if m == 1 {
        push("A4^(n+1) = CD(Ly, M)", &l, vec![y], &mm, 4, n + 1)?;
    } else {
        let kk = gen(GenName::K, n, m)?;
        let ll = gen(GenName::L, n, m)?;
        let kz = kk.then(&z);
        let [z0, z1, z2] = conj(&z);
        let [k0, k1, k2] = conj(&kk);
        push("A4 = CD(kH u k^x H u k^(x^2) H, L)", &h, conj(&kk).to_vec(), &l, 4, n)?;
        push("A5 = CD(kzH u (kz)^x H u (kz)^(x^2) H, L)", &h, conj(&kz).to_vec(), &l, 5, n)?;
        let six = vec![z0.then(&k1), z0.then(&k2), z1.then(&k0), z2.then(&k0), z1.then(&k2), z2.then(&k1)];
        push("A6 = CD(mixed z,k cosets of H, L)", &h, six, &l, 6, n)?;
        push("A7^(n+1) = CD(Ly, M)", &l, vec![y.clone()], &mm, 7, n + 1)?;
        push("A9^(n+1) = CD(Lyl, M)", &l, vec![y.then(&ll)], &mm, 9, n + 1)?;
        push("A10^(n+1) = CD(Ll, M)", &l, vec![ll], &mm, 10, n + 1)?;
    }
    Ok(out)
}

fn item(claim: impl Into<String>, loc: &str, computed: serde_json::Value, method: Method, verdict: Verdict) -> ReportItem {
    ReportItem { claim: claim.into(), location: loc.to_string(), computed, method, verdict }
}

fn pass_if(ok: bool) -> Verdict {
    if ok {
        Verdict::Pass
    } else {
        Verdict::Fail
    }
}

/// Checks the structural statements, order formulas and coset identities at one level.
pub fn theorem_report(level: usize, m: u8, cfg: &ReportConfig) -> Result<Vec<ReportItem>> {
    if !(1..=2).contains(&m) {
        return invalid(format!("orbit length {m} is not supported"));
    }
    let n = level;
    let mut items = Vec::new();
    let mm = group(m, GroupKind::M, n)?;
    let aut = group(m, GroupKind::Aut, n)?;

    // Orders.
    let aut_formula = aut_order_formula(n);
    items.push(item(
        format!("|Aut(T_{n})| = 6^((3^n-1)/2)"),
        "size of Aut(T_n)",
        json!({"computed": aut.order().to_string(), "formula": aut_formula.to_string()}),
        Method::Exact,
        pass_if(aut.order() == aut_formula),
    ));
    match markov_order_formula(m, n) {
        Ok(f) => items.push(item(
            format!("|M_{n}| matches the closed form (m={m})"),
            if m == 1 { "size of M_n, orbit length 1" } else { "size of M_n, orbit length 2" },
            json!({"computed": mm.order().to_string(), "formula": f.to_string()}),
            Method::Exact,
            pass_if(mm.order() == f),
        )),
        Err(_) => items.push(item(
            format!("|M_{n}| (m={m}); closed form stated for n >= 3 only"),
            "size of M_n, orbit length 2",
            json!({"computed": mm.order().to_string()}),
            Method::Exact,
            Verdict::Info,
        )),
    }
    if n == 1 {
        return Ok(items);
    }

    // Structure.
    let l = group(m, GroupKind::L, n)?;
    let h = group(m, GroupKind::H, n)?;
    let k = group(m, GroupKind::K, n)?;
    let in_range = m == 1 || n >= 3;
    let ranged = |ok: bool| if in_range { pass_if(ok) } else { Verdict::Info };
    let ml = mm.index_of(&l)?;
    let expected_ml = if m == 1 { 2u32 } else { 4 };
    items.push(item(
        format!("[M_{n}:L_{n}] = {expected_ml}"),
        if m == 1 { "inclusion L_n < M_n, orbit length 1" } else { "quotient M_n/L_n, orbit length 2" },
        json!(ml.to_string()),
        Method::Exact,
        ranged(ml == BigUint::from(expected_ml) && l.is_normal_in(&mm)),
    ));
    let h_normal = h.is_normal_in(&l);
    let lh = l.index_of(&h)?;
    if m == 1 {
        items.push(item(
            format!("H_{n} is normal in L_{n} with index 12"),
            "quotient L_n/H_n, orbit length 1",
            json!({"index": lh.to_string(), "normal": h_normal}),
            Method::Exact,
            pass_if(h_normal && lh == BigUint::from(12u8)),
        ));
        let q = identify_small_quotient(&l, &h)?;
        items.push(item(
            format!("L_{n}/H_{n} = A4"),
            "quotient L_n/H_n, orbit length 1",
            json!(q.to_string()),
            Method::Exact,
            pass_if(q == QuotientName::A4),
        ));
        let q = identify_small_quotient(&k, &h)?;
        items.push(item(
            format!("K_{n}/H_{n} = V4"),
            "quotient K_n/H_n, orbit length 1",
            json!(q.to_string()),
            Method::Exact,
            pass_if(q == QuotientName::V4),
        ));
    } else {
        let q = identify_small_quotient(&mm, &l)?;
        items.push(item(
            format!("M_{n}/L_{n} = V4"),
            "quotient M_n/L_n, orbit length 2",
            json!(q.to_string()),
            Method::Exact,
            ranged(q == QuotientName::V4),
        ));
        // Internal consistency is the assertion; the two stated constants are annotations.
        let kh = k.index_of(&h)?;
        let lk = l.index_of(&k)?;
        let consistent = h_normal && &kh * &lk == lh && l.order() == h.order() * &lh;
        items.push(item(
            format!("[L_{n}:H_{n}] computed (stated values: 48 and 1728)"),
            "index [L_n:H_n], orbit length 2",
            json!({
                "index": lh.to_string(),
                "K/H": kh.to_string(),
                "L/K": lk.to_string(),
                "normal": h_normal,
                "equals_48": lh == BigUint::from(48u8),
                "equals_1728": lh == BigUint::from(1728u16),
            }),
            Method::Exact,
            pass_if(consistent),
        ));
    }

    // Coset identities.
    let loc = if m == 1 { "cycle data of L_n and M_n cosets, orbit length 1" } else { "cycle data of L_n and M_n cosets, orbit length 2" };
    for (name, id) in identities_lenient(m, n)? {
        let id = match id {
            Ok(id) => id,
            Err(e) if !in_range => {
                items.push(item(name, loc, json!({"error": e.to_string()}), Method::Exact, Verdict::Info));
                continue;
            }
            Err(e) => return Err(e),
        };
        let c = check_identity(&id, cfg)?;
        items.push(item(
            id.name.clone(),
            loc,
            json!({
                "weight": format_rational(&c.computed.total()),
                "reference_weight": format_rational(&id.reference.total()),
                "weight_matches": c.weight_matches,
                "tv_normalized": c.tv,
                "cycle_data": c.computed.to_json(),
            }),
            c.method,
            ranged(c.holds),
        ));
    }

    // Dimension ratio.
    if let Ok(r) = hausdorff_ratio(m, n) {
        items.push(item(
            format!("log|M_{n}|/log|Aut(T_{n})| from the closed forms"),
            "Hausdorff dimension definition",
            json!({"ratio": r, "limit": hausdorff_limit(m)?}),
            Method::Exact,
            Verdict::Info,
        ));
    }
    Ok(items)
}

/// True when every item with a verdict passed.
pub fn report_passes(items: &[ReportItem]) -> bool {
    items.iter().all(|i| i.verdict != Verdict::Fail)
}

/// `|S1| / |S2|` for a coset union.
pub fn union_weight(u: &CosetUnion, ambient: &PermGroup) -> BigRational {
    BigRational::new(u.size().into(), ambient.order().into())
}

/// Exact log base 6 of an order, as a float.
pub fn log6(x: &BigUint) -> f64 {
    let bits = x.bits();
    if bits < 1000 {
        return x.to_f64().unwrap_or(f64::INFINITY).ln() / 6f64.ln();
    }
    let shift = bits - 900;
    let top = (x >> shift).to_f64().unwrap_or(f64::INFINITY);
    (top.ln() + shift as f64 * 2f64.ln()) / 6f64.ln()
}
