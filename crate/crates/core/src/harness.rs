//! Orchestration: model propagation, prime sweeps and three-way comparisons.

use std::collections::BTreeMap;

use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::Zero;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::error::{invalid, Error, Result};
use crate::fpfactor::{catalog_entry, reduce_mod_p, reduce_plain, select_model, FactorShape, FpPoly, PcfCubic, Skip};
use crate::groups::{build_group, cycle_data, normalized_f64, CdMode, CosetUnion, GroupFamily, DEFAULT_ENUMERATION_CAP};
use crate::markov::{
    cycle_marginal, format_rational, initial_data, parse_rational, propagate_with, simulate_chain, tv_distance_f64,
    CycleDataDist, Data, ModelId, OrbitSpec, DEFAULT_MAX_SUPPORT,
};
use crate::theorems::{hausdorff_annotations_m2, hausdorff_limit, hausdorff_ratio};
use crate::tree::CycleStructure;

/// Frequencies over cycle structures.
pub type Distribution = BTreeMap<CycleStructure, f64>;

/// Parses `m1-model4`, `1:4`, or a bare model number when the orbit length is known.
pub fn parse_model(s: &str, orbit_length: Option<u8>) -> Result<ModelId> {
    let s = s.trim();
    let bad = || Error::InvalidArgument(format!("bad model id {s:?}"));
    if let Some(rest) = s.strip_prefix('m') {
        let (m, k) = rest.split_once("-model").ok_or_else(bad)?;
        return ModelId::new(m.parse().map_err(|_| bad())?, k.parse().map_err(|_| bad())?);
    }
    if let Some((m, k)) = s.split_once(':') {
        return ModelId::new(m.parse().map_err(|_| bad())?, k.parse().map_err(|_| bad())?);
    }
    let k: u8 = s.parse().map_err(|_| bad())?;
    match orbit_length {
        Some(m) => ModelId::new(m, k),
        None => invalid(format!("model {k} needs an orbit length")),
    }
}

/// What a prime sweep factors.
#[derive(Clone, Debug)]
// Built once per run, so the size gap between variants does not matter.
#[allow(clippy::large_enum_variant)]
pub enum Target {
    /// A catalog cubic f and a target t; factors fⁿ − t with labels.
    Catalog { cubic: PcfCubic, t: BigRational },
    /// A plain rational polynomial (coefficients from the top degree down) iterated the same way.
    Plain { coeffs: Vec<BigRational>, t: BigRational },
}

impl Target {
    /// `poly` is a catalog id, or comma-separated coefficients from the top degree down.
    pub fn parse(poly: &str, a: &BigRational, t: &BigRational) -> Result<Target> {
        if poly.contains(',') {
            let coeffs = poly.split(',').map(parse_rational).collect::<Result<Vec<_>>>()?;
            if coeffs.len() < 2 || coeffs[0].is_zero() {
                return invalid("a plain polynomial needs a nonzero leading coefficient and degree >= 1");
            }
            return Ok(Target::Plain { coeffs, t: t.clone() });
        }
        Ok(Target::Catalog { cubic: catalog_entry(poly, a)?, t: t.clone() })
    }

    pub fn describe(&self) -> serde_json::Value {
        match self {
            Target::Catalog { cubic, t } => json!({"catalog": cubic.to_json(), "t": format_rational(t)}),
            Target::Plain { coeffs, t } => {
                json!({"coefficients": coeffs.iter().map(format_rational).collect::<Vec<_>>(), "t": format_rational(t)})
            }
        }
    }
}

/// Which primes a sweep visits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PrimeFilter {
    /// p ≡ 1 (mod 3), so that −3 is a square mod p.
    OneModThree,
    All,
}

/// One prime's outcome, streamed as a JSON line.
#[derive(Clone, Debug, Serialize)]
pub struct PrimeRecord {
    pub p: u64,
    pub n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shape: Option<FactorShape>,
    /// (degree, label) per irreducible factor.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<(u64, String)>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub skipped: Option<&'static str>,
    /// Failure of the degree law, branch law or label relation, if any.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub violation: Option<String>,
}

fn iterate_plain(f: &FpPoly, n: usize, t: u64) -> FpPoly {
    let p = f.prime();
    let mut g = FpPoly::x(p);
    for _ in 0..n {
        g = f.compose(&g);
    }
    g.sub(&FpPoly::constant(p, t))
}

fn run_prime(target: &Target, n: usize, p: u64) -> PrimeRecord {
    let skip = |s: Skip| PrimeRecord { p, n, shape: None, labels: None, skipped: Some(s.name()), violation: None };
    match target {
        Target::Plain { coeffs, t } => {
            let f = match reduce_plain(coeffs, p) {
                Ok(f) => f,
                Err(s) => return skip(s),
            };
            let Some(tp) = crate::fpfactor::rational_mod_p(t, p) else { return skip(Skip::BadReduction) };
            match iterate_plain(&f, n, tp).factor_shape() {
                Ok(shape) => PrimeRecord { p, n, shape: Some(shape), labels: None, skipped: None, violation: None },
                Err(s) => skip(s),
            }
        }
        Target::Catalog { cubic, t } => {
            let r = match reduce_mod_p(cubic, t, p) {
                Ok(r) if r.is_degenerate() => return skip(Skip::DegenerateOrbit),
                Ok(r) => r,
                Err(s) => return skip(s),
            };
            let fac = match r.iterate_and_factor(n) {
                Ok(f) => f,
                Err(s) => return skip(s),
            };
            let violation = r.lifting_check(n).ok().and_then(|st| st.first_violation().cloned());
            let labels = fac.factors.iter().map(|(g, l)| (g.degree().unwrap_or(0) as u64, l.to_string())).collect();
            PrimeRecord { p, n, shape: Some(fac.shape()), labels: Some(labels), skipped: None, violation }
        }
    }
}

/// Per-prime records of a sweep, in increasing prime order.
#[derive(Clone, Debug, Serialize)]
pub struct Sweep {
    pub level: usize,
    pub prime_bound: u64,
    pub filter: PrimeFilter,
    pub records: Vec<PrimeRecord>,
}

impl Sweep {
    pub fn shape_counts(&self) -> BTreeMap<CycleStructure, u64> {
        let mut m = BTreeMap::new();
        for s in self.records.iter().filter_map(|r| r.shape.as_ref()) {
            *m.entry(s.clone()).or_insert(0) += 1;
        }
        m
    }

    pub fn primes_used(&self) -> u64 {
        self.records.iter().filter(|r| r.shape.is_some()).count() as u64
    }

    pub fn skipped(&self) -> BTreeMap<&'static str, u64> {
        let mut m = BTreeMap::new();
        for s in self.records.iter().filter_map(|r| r.skipped) {
            *m.entry(s).or_insert(0) += 1;
        }
        m
    }

    pub fn violations(&self) -> Vec<(u64, String)> {
        self.records.iter().filter_map(|r| r.violation.clone().map(|v| (r.p, v))).collect()
    }

    pub fn frequencies(&self) -> Distribution {
        let total = self.primes_used() as f64;
        self.shape_counts().into_iter().map(|(c, k)| (c, k as f64 / total)).collect()
    }

    pub fn summary(&self) -> serde_json::Value {
        json!({
            "level": self.level,
            "prime_bound": self.prime_bound,
            "filter": self.filter,
            "primes_used": self.primes_used(),
            "skipped": self.skipped(),
            "violations": self.violations(),
            "frequencies": dist_json(&self.frequencies()),
        })
    }

    /// One JSON object per prime.
    pub fn json_lines(&self) -> String {
        let mut s = String::new();
        for r in &self.records {
            s.push_str(&serde_json::to_string(r).expect("records serialize"));
            s.push('\n');
        }
        s
    }
}

/// Factors fⁿ − t for every prime in `[5, bound]` passing the filter. Work is spread over
/// threads; records come back in prime order.
pub fn sweep(target: &Target, level: usize, bound: u64, filter: PrimeFilter) -> Result<Sweep> {
    if level > crate::fpfactor::MAX_FACTOR_LEVEL {
        return Err(Error::ResourceLimit(format!("level {level} exceeds {}", crate::fpfactor::MAX_FACTOR_LEVEL)));
    }
    if bound < 5 {
        return invalid("the prime bound must be at least 5");
    }
    let bound_usize = usize::try_from(bound).map_err(|_| Error::ResourceLimit("prime bound too large".into()))?;
    let primes: Vec<u64> = primal::Primes::all()
        .take_while(|&p| p <= bound_usize)
        .map(|p| p as u64)
        .filter(|&p| p >= 5 && (filter == PrimeFilter::All || p % 3 == 1))
        .collect();
    let records = primes.par_iter().map(|&p| run_prime(target, level, p)).collect();
    Ok(Sweep { level, prime_bound: bound, filter, records })
}

pub fn dist_json(d: &Distribution) -> serde_json::Value {
    serde_json::Value::Array(d.iter().map(|(c, f)| json!({"shape": c, "frequency": f})).collect())
}

/// Data of a model at level `n` (n ≥ 1): the initial data propagated `n − 1` steps.
pub fn model_data(model: &ModelId, level: usize, max_support: usize) -> Result<Data> {
    if level == 0 {
        return invalid("model data starts at level 1");
    }
    let orbit = OrbitSpec::standard(model.orbit_length)?;
    propagate_with(&initial_data(model)?, level - 1, &orbit, max_support)
}

/// Model output: exact data when the support fits, otherwise a simulated marginal.
#[derive(Clone, Debug)]
pub enum ModelOutput {
    Exact { data: Data, marginal: CycleDataDist },
    Simulated { marginal: Distribution, samples: usize, seed: u64 },
}

impl ModelOutput {
    pub fn distribution(&self) -> Distribution {
        match self {
            ModelOutput::Exact { marginal, .. } => marginal.to_f64_map(),
            ModelOutput::Simulated { marginal, .. } => marginal.clone(),
        }
    }

    pub fn to_json(&self, model: &ModelId, level: usize) -> serde_json::Value {
        match self {
            ModelOutput::Exact { data, marginal } => json!({
                "model": model.to_string(),
                "level": level,
                "mode": "exact",
                "data": data.to_json(),
                "cycle_marginal": marginal.to_json(),
            }),
            ModelOutput::Simulated { marginal, samples, seed } => json!({
                "model": model.to_string(),
                "level": level,
                "mode": {"simulated": {"samples": samples, "seed": seed}},
                "cycle_marginal": dist_json(marginal),
            }),
        }
    }
}

/// Exact propagation; with `simulate` set, Monte Carlo instead. Exceeding the support cap
/// without `simulate` is an error that says how to rerun.
pub fn run_model(model: &ModelId, level: usize, max_support: usize, simulate: Option<(usize, u64)>) -> Result<ModelOutput> {
    if level == 0 {
        return invalid("model data starts at level 1");
    }
    if let Some((samples, seed)) = simulate {
        let orbit = OrbitSpec::standard(model.orbit_length)?;
        let marginal = simulate_chain(&initial_data(model)?, level - 1, samples, seed, &orbit)?;
        return Ok(ModelOutput::Simulated { marginal, samples, seed });
    }
    match model_data(model, level, max_support) {
        Ok(data) => {
            let marginal = cycle_marginal(&data);
            Ok(ModelOutput::Exact { data, marginal })
        }
        Err(Error::ResourceLimit(msg)) => Err(Error::ResourceLimit(format!(
            "{msg}; rerun with a larger --max-support or with --simulate (Monte Carlo)"
        ))),
        Err(e) => Err(e),
    }
}

/// Cycle data of a group: exhaustive below the cap, sampled above it.
#[derive(Clone, Debug, Serialize)]
pub struct GroupDistribution {
    pub group: String,
    pub order: String,
    pub exact: Option<BTreeMap<String, String>>,
    pub frequencies: Vec<(CycleStructure, f64)>,
    pub samples: Option<u64>,
}

fn group_distribution(f: &GroupFamily, samples: u64, seed: u64) -> Result<(GroupDistribution, Option<CycleDataDist>)> {
    let g = build_group(f)?;
    let order = g.order();
    let u = CosetUnion::group(g.clone());
    if order <= BigUint::from(DEFAULT_ENUMERATION_CAP) {
        let cd = cycle_data(&u, &g, CdMode::Exhaustive { cap: DEFAULT_ENUMERATION_CAP })?;
        let exact = cd.entries().iter().map(|(c, q)| (c.to_string(), format_rational(q))).collect();
        let gd = GroupDistribution {
            group: f.to_string(),
            order: order.to_string(),
            exact: Some(exact),
            frequencies: normalized_f64(&cd).into_iter().collect(),
            samples: None,
        };
        return Ok((gd, Some(cd)));
    }
    let cd = cycle_data(&u, &g, CdMode::Sampled { samples, seed })?;
    let gd = GroupDistribution {
        group: f.to_string(),
        order: order.to_string(),
        exact: None,
        frequencies: normalized_f64(&cd).into_iter().collect(),
        samples: Some(samples),
    };
    Ok((gd, None))
}

#[derive(Clone, Debug)]
pub struct CompareConfig {
    pub target: Target,
    pub level: usize,
    pub prime_bound: u64,
    pub model: Option<ModelId>,
    pub samples: u64,
    pub seed: u64,
    pub max_support: usize,
    pub filter: PrimeFilter,
}

impl CompareConfig {
    pub fn new(target: Target, level: usize, prime_bound: u64) -> Self {
        CompareConfig {
            target,
            level,
            prime_bound,
            model: None,
            samples: 100_000,
            seed: 1,
            max_support: DEFAULT_MAX_SUPPORT,
            filter: PrimeFilter::OneModThree,
        }
    }
}

/// Model, group and empirical distributions at one level, with their distances.
#[derive(Clone, Debug, Serialize)]
pub struct ComparisonReport {
    pub target: serde_json::Value,
    pub model: String,
    pub level: usize,
    pub model_distribution: Vec<(CycleStructure, f64)>,
    pub group: GroupDistribution,
    pub empirical: serde_json::Value,
    pub tv_model_group: f64,
    /// Exact equality of model and group data, when both are exact.
    pub model_group_exact_equal: Option<bool>,
    pub tv_model_empirical: f64,
    pub tv_group_empirical: f64,
    pub containment_pass: bool,
    pub outside_model_support: Vec<CycleStructure>,
    pub law_violations: usize,
}

impl ComparisonReport {
    /// Hard assertions: containment, the factorization laws, exact model/group agreement.
    pub fn hard_failures(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !self.containment_pass {
            v.push(format!("observed shapes outside the model support: {:?}", self.outside_model_support));
        }
        if self.law_violations > 0 {
            v.push(format!("{} primes violate the factorization laws", self.law_violations));
        }
        if self.model_group_exact_equal == Some(false) {
            v.push("model and group cycle data differ".to_string());
        }
        v
    }
}

pub fn compare(cfg: &CompareConfig) -> Result<ComparisonReport> {
    let model = match (&cfg.model, &cfg.target) {
        (Some(m), _) => *m,
        (None, Target::Catalog { cubic, t }) => ModelId::new(cubic.orbit_length(), select_model(cubic, t)?)?,
        (None, Target::Plain { .. }) => return invalid("a plain polynomial needs an explicit --model"),
    };
    if let Target::Catalog { cubic, .. } = &cfg.target {
        if cubic.orbit_length() != model.orbit_length {
            return invalid("model orbit length differs from the polynomial's");
        }
    }
    let data = model_data(&model, cfg.level, cfg.max_support)?;
    let marginal = cycle_marginal(&data);
    let model_dist = marginal.to_f64_map();

    let family = GroupFamily::for_model(model.orbit_length, model.number, cfg.level)?;
    let (group, group_exact) = group_distribution(&family, cfg.samples, cfg.seed)?;
    let group_dist: Distribution = group.frequencies.iter().cloned().collect();

    let sw = sweep(&cfg.target, cfg.level, cfg.prime_bound, cfg.filter)?;
    let emp = sw.frequencies();
    let outside: Vec<CycleStructure> = emp.keys().filter(|c| !model_dist.contains_key(*c)).cloned().collect();

    Ok(ComparisonReport {
        target: cfg.target.describe(),
        model: model.to_string(),
        level: cfg.level,
        model_distribution: model_dist.iter().map(|(c, f)| (c.clone(), *f)).collect(),
        tv_model_group: tv_distance_f64(&model_dist, &group_dist),
        model_group_exact_equal: group_exact.map(|g| g == marginal),
        tv_model_empirical: if emp.is_empty() { f64::NAN } else { tv_distance_f64(&model_dist, &emp) },
        tv_group_empirical: if emp.is_empty() { f64::NAN } else { tv_distance_f64(&group_dist, &emp) },
        containment_pass: outside.is_empty(),
        outside_model_support: outside,
        law_violations: sw.violations().len(),
        group,
        empirical: sw.summary(),
    })
}

/// One row of the dimension table.
#[derive(Clone, Debug, Serialize)]
pub struct HausdorffRow {
    pub level: usize,
    pub m1: f64,
    /// The orbit-length-2 order formula is stated from n = 3 on.
    pub m2: Option<f64>,
}

pub fn hausdorff_table(max_level: usize) -> Result<(Vec<HausdorffRow>, serde_json::Value)> {
    if max_level == 0 || max_level > 30 {
        return invalid("max level must lie in 1..=30");
    }
    let rows = (1..=max_level)
        .map(|n| Ok(HausdorffRow { level: n, m1: hausdorff_ratio(1, n)?, m2: hausdorff_ratio(2, n).ok() }))
        .collect::<Result<Vec<_>>>()?;
    let ann: BTreeMap<&str, f64> = hausdorff_annotations_m2().into_iter().collect();
    let limits = json!({
        "m1": hausdorff_limit(1)?,
        "m2_from_order_formula": hausdorff_limit(2)?,
        "m2_stated_constants": ann,
    });
    Ok((rows, limits))
}

/// CSV with a `shape,frequency` row per entry; shapes are space-separated lengths.
pub fn dist_csv(source: &str, d: &Distribution) -> String {
    let mut s = String::new();
    for (c, f) in d {
        let lens: Vec<String> = c.lengths().iter().map(|l| l.to_string()).collect();
        s.push_str(&format!("{source},{},{f}\n", lens.join(" ")));
    }
    s
}
