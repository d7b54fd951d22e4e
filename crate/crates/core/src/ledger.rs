//! Critical type numbers and the counting built on them: χ̂, the mean index
//! identity Σ χ̂/î = 1/2, equivariant Morse counts against the Betti numbers
//! of CP^∞, and replays of the case arguments that end in a contradiction.
//!
//! k_l(y^m) for degenerate iterates is user input; only its constraints are
//! checked here.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use num_integer::Integer;
use num_traits::Signed;
use num_rational::Rational64;
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::iteration::{iterate, mean_index, minimal_period_k, MonodromyProfile, Turn};

fn ratio_string(r: &Rational64) -> String {
    if *r.denom() == 1 {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

fn ser_ratio<S: Serializer>(r: &Rational64, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&ratio_string(r))
}

fn ser_opt_ratio<S: Serializer>(r: &Option<Rational64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match r {
        Some(r) => s.serialize_some(&ratio_string(r)),
        None => s.serialize_none(),
    }
}

fn to_f64(r: &Rational64) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// i(y^m) (Ekeland) and ν(y^m).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub m: u64,
    pub i: i64,
    pub nu: u32,
}

pub fn index_sequence(p: &MonodromyProfile, m_max: u64) -> Result<Vec<IndexEntry>> {
    (1..=m_max)
        .map(|m| {
            let r = iterate(p, m)?;
            Ok(IndexEntry { m, i: r.i_ekeland, nu: r.nu })
        })
        .collect()
}

/// k_l(y^m) for l = 0, 1, …; missing entries are zero.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IterateTypes {
    pub m: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<u32>,
    pub k: Vec<u32>,
}

impl IterateTypes {
    pub fn new(m: u64, k: &[u32]) -> Self {
        IterateTypes { m, nu: None, k: k.to_vec() }
    }

    pub fn get(&self, l: usize) -> u32 {
        self.k.get(l).copied().unwrap_or(0)
    }
}

/// Critical type numbers over one period m = 1..K.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CriticalTypeVector {
    pub entries: Vec<IterateTypes>,
}

impl CriticalTypeVector {
    /// Types dictated for non-degenerate iterates: k_l = δ_{l0} when
    /// i(y^m) − i(y) is even, nothing otherwise. Degenerate iterates are
    /// taken from `given` and must be present.
    pub fn complete(seq: &[IndexEntry], given: &[IterateTypes], orbit: usize) -> Result<Self> {
        let base = seq.first().ok_or_else(|| Error::InvalidTypes("empty index sequence".into()))?.i;
        let mut entries = Vec::with_capacity(seq.len());
        for e in seq {
            match given.iter().find(|g| g.m == e.m) {
                Some(g) => entries.push(g.clone()),
                None if e.nu == 1 => {
                    entries.push(IterateTypes::new(e.m, &[u32::from((e.i - base).is_even())]));
                }
                None => return Err(Error::MissingTypes { orbit, m: e.m }),
            }
        }
        Ok(CriticalTypeVector { entries })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    /// k_l = 0 outside [0, ν−1].
    Support,
    /// k_0, k_{ν−1} ∈ {0, 1}.
    Boundary,
    I,
    Ii,
    Iii,
    Iv,
    V,
    /// ν = 1 forces k_0 = 1 exactly when i(y^m) − i(y) is even.
    NonDegenerate,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Rule::Support => "support",
            Rule::Boundary => "boundary",
            Rule::I => "(i)",
            Rule::Ii => "(ii)",
            Rule::Iii => "(iii)",
            Rule::Iv => "(iv)",
            Rule::V => "(v)",
            Rule::NonDegenerate => "non-degenerate",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub m: u64,
    pub rule: Rule,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn rules(&self) -> Vec<Rule> {
        let mut r: Vec<Rule> = self.violations.iter().map(|v| v.rule).collect();
        r.sort();
        r.dedup();
        r
    }
}

fn check_iterate(t: &IterateTypes, e: &IndexEntry, base: i64, out: &mut Vec<Violation>) {
    let nu = e.nu as usize;
    let mut bad = |rule: Rule, detail: String| out.push(Violation { m: e.m, rule, detail });
    let k = |l: usize| t.get(l);
    for (l, &v) in t.k.iter().enumerate() {
        if l >= nu && v != 0 {
            bad(Rule::Support, format!("k_{l} = {v} but ν = {nu}"));
        }
    }
    if nu == 0 {
        return;
    }
    for l in [0, nu - 1] {
        if k(l) > 1 {
            bad(Rule::Boundary, format!("k_{l} = {} must be 0 or 1", k(l)));
        }
    }
    if k(0) == 1 && (1..nu).any(|l| k(l) != 0) {
        bad(Rule::I, "k_0 = 1 but a higher k_l is non-zero".into());
    }
    if k(nu - 1) == 1 && (0..nu - 1).any(|l| k(l) != 0) {
        bad(Rule::Ii, format!("k_{} = 1 but a lower k_l is non-zero", nu - 1));
    }
    if nu >= 3 && (1..nu - 1).any(|l| k(l) >= 1) && (k(0) != 0 || k(nu - 1) != 0) {
        bad(Rule::Iii, "an interior k_l is non-zero together with an end value".into());
    }
    if nu <= 3 && (0..nu).filter(|&l| k(l) != 0).count() > 1 {
        bad(Rule::Iv, format!("ν = {nu} ≤ 3 allows at most one non-zero k_l"));
    }
    let odd = (e.i - base).is_odd();
    if odd && k(0) != 0 {
        bad(Rule::V, format!("i(y^{}) − i(y) = {} is odd but k_0 = {}", e.m, e.i - base, k(0)));
    }
    if nu == 1 && k(0) != u32::from(!odd) {
        bad(Rule::NonDegenerate, format!("non-degenerate iterate needs k_0 = {}", u32::from(!odd)));
    }
}

/// Check support, boundary values, rules (i)–(v), and the non-degenerate
/// rule. A mismatch in length, iterate numbering or ν is a structural error.
pub fn validate_ktypes(ct: &CriticalTypeVector, seq: &[IndexEntry]) -> Result<ValidationReport> {
    if ct.entries.len() != seq.len() {
        return Err(Error::InvalidTypes(format!(
            "{} type entries for {} iterates",
            ct.entries.len(),
            seq.len()
        )));
    }
    let base = seq.first().map(|e| e.i).unwrap_or(0);
    let mut violations = Vec::new();
    for (t, e) in ct.entries.iter().zip(seq) {
        if t.m != e.m {
            return Err(Error::InvalidTypes(format!("type entry for m={} where m={} was expected", t.m, e.m)));
        }
        if let Some(nu) = t.nu {
            if nu != e.nu {
                return Err(Error::InvalidTypes(format!("m={}: declared ν = {nu}, index data has ν = {}", e.m, e.nu)));
            }
        }
        check_iterate(t, e, base, &mut violations);
    }
    Ok(ValidationReport { violations })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChiHatResult {
    #[serde(serialize_with = "ser_ratio")]
    pub value: Rational64,
    #[serde(rename = "K")]
    pub k_period: u64,
}

impl ChiHatResult {
    pub fn as_f64(&self) -> f64 {
        to_f64(&self.value)
    }
}

/// χ̂(y) = (1/K) Σ_{m ≤ K, l} (−1)^{i(y^m)+l} k_l(y^m); `ct` and `seq` cover
/// exactly one period.
pub fn chi_hat(ct: &CriticalTypeVector, seq: &[IndexEntry]) -> Result<ChiHatResult> {
    let report = validate_ktypes(ct, seq)?;
    if let Some(v) = report.violations.first() {
        return Err(Error::InvalidTypes(format!("m={}: rule {} — {}", v.m, v.rule, v.detail)));
    }
    let k_period = seq.len() as u64;
    if k_period == 0 {
        return Err(Error::InvalidTypes("empty period".into()));
    }
    let mut sum: i64 = 0;
    for (t, e) in ct.entries.iter().zip(seq) {
        for (l, &v) in t.k.iter().enumerate() {
            let sign = if (e.i + l as i64).is_even() { 1 } else { -1 };
            sum += sign * i64::from(v);
        }
    }
    Ok(ChiHatResult { value: Rational64::new(sum, k_period as i64), k_period })
}

/// χ̂ of a profile, with K from the iteration engine and non-degenerate
/// iterates filled in.
pub fn chi_hat_profile(p: &MonodromyProfile, given: &[IterateTypes], orbit: usize) -> Result<ChiHatResult> {
    let k = minimal_period_k(p)?;
    let seq = index_sequence(p, k)?;
    let ct = CriticalTypeVector::complete(&seq, given, orbit)?;
    chi_hat(&ct, &seq)
}

/// Every admissible assignment of k-values (each ≤ `bound`) to the
/// degenerate iterates of one period whose χ̂ equals `target`.
pub fn forced_types(p: &MonodromyProfile, target: Rational64, bound: u32) -> Result<Vec<Vec<IterateTypes>>> {
    let k = minimal_period_k(p)?;
    let seq = index_sequence(p, k)?;
    let degenerate: Vec<IndexEntry> = seq.iter().copied().filter(|e| e.nu > 1).collect();
    let slots: Vec<usize> = degenerate.iter().map(|e| e.nu as usize).collect();
    let total: usize = slots.iter().sum();
    if total > 12 {
        return Err(Error::Input(format!("{total} free type numbers are too many to enumerate")));
    }
    let mut found = Vec::new();
    let mut values = vec![0u32; total];
    loop {
        let mut given = Vec::new();
        let mut off = 0;
        for (e, &w) in degenerate.iter().zip(&slots) {
            given.push(IterateTypes::new(e.m, &values[off..off + w]));
            off += w;
        }
        let ct = CriticalTypeVector::complete(&seq, &given, 0)?;
        if validate_ktypes(&ct, &seq)?.is_valid() && chi_hat(&ct, &seq)?.value == target {
            found.push(given);
        }
        // Odometer over values ∈ [0, bound]^total.
        let mut i = 0;
        loop {
            if i == total {
                return Ok(found);
            }
            if values[i] < bound {
                values[i] += 1;
                break;
            }
            values[i] = 0;
            i += 1;
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MeanValue {
    Exact {
        #[serde(serialize_with = "ser_ratio", deserialize_with = "de_ratio")]
        value: Rational64,
    },
    Float {
        value: f64,
    },
}

fn de_ratio<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Rational64, D::Error> {
    let s = String::deserialize(d)?;
    parse_ratio(&s).map_err(serde::de::Error::custom)
}

pub fn parse_ratio(s: &str) -> Result<Rational64> {
    let bad = || Error::Input(format!("`{s}` is not a rational p/q"));
    match s.split_once('/') {
        Some((p, q)) => {
            let p: i64 = p.trim().parse().map_err(|_| bad())?;
            let q: i64 = q.trim().parse().map_err(|_| bad())?;
            if q == 0 {
                return Err(bad());
            }
            Ok(Rational64::new(p, q))
        }
        None => Ok(Rational64::from_integer(s.trim().parse().map_err(|_| bad())?)),
    }
}

impl MeanValue {
    pub fn as_f64(&self) -> f64 {
        match self {
            MeanValue::Exact { value } => to_f64(value),
            MeanValue::Float { value } => *value,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct IdentityRow {
    #[serde(serialize_with = "ser_ratio")]
    pub chi_hat: Rational64,
    pub mean_index: MeanValue,
    pub ratio: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct IdentityReport {
    pub rows: Vec<IdentityRow>,
    pub total: f64,
    /// Present only when every mean index is exact.
    #[serde(serialize_with = "ser_opt_ratio")]
    pub total_exact: Option<Rational64>,
    pub residual: f64,
    pub exact: bool,
}

impl IdentityReport {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{:>6} {:>14} {:>24} {:>24}", "orbit", "chi_hat", "mean_index", "ratio")?;
        for (j, r) in self.rows.iter().enumerate() {
            writeln!(
                w,
                "{:>6} {:>14} {:>24.17e} {:>24.17e}",
                j + 1,
                ratio_string(&r.chi_hat),
                r.mean_index.as_f64(),
                r.ratio
            )?;
        }
        writeln!(w, "{:>6} {:>14} {:>24} {:>24.17e}", "total", "", "", self.total)?;
        writeln!(w, "{:>6} {:>14} {:>24} {:>24.17e}", "resid", "", "", self.residual)?;
        Ok(())
    }
}

/// Σ χ̂/î against 1/2; exact when every î is exact.
pub fn identity_check(orbits: &[(Rational64, MeanValue)]) -> Result<IdentityReport> {
    let mut rows = Vec::with_capacity(orbits.len());
    let mut exact_total = Some(Rational64::from_integer(0));
    let mut total = 0.0;
    for (j, (chi, mean)) in orbits.iter().enumerate() {
        let m = mean.as_f64();
        if !(m > 0.0) {
            return Err(Error::Input(format!("orbit {}: mean index {m} is not positive", j + 1)));
        }
        exact_total = match (exact_total, mean) {
            (Some(t), MeanValue::Exact { value }) => Some(t + chi / value),
            _ => None,
        };
        let ratio = to_f64(chi) / m;
        total += ratio;
        rows.push(IdentityRow { chi_hat: *chi, mean_index: mean.clone(), ratio });
    }
    let half = Rational64::new(1, 2);
    let (residual, total) = match exact_total {
        Some(t) => (to_f64(&(t - half).abs()), to_f64(&t)),
        None => ((total - 0.5).abs(), total),
    };
    Ok(IdentityReport { rows, total, total_exact: exact_total, residual, exact: exact_total.is_some() })
}

pub fn betti(q: i64) -> u64 {
    u64::from(q >= 0 && q % 2 == 0)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MorseTable {
    pub q_max: i64,
    /// M_q for q = 0..=q_max.
    #[serde(rename = "M")]
    pub m: Vec<u64>,
    pub b: Vec<u64>,
    /// Iterates used per orbit (those with i(y^m) ≤ q_max + 2n).
    pub iterates: Vec<u64>,
    pub truncation: String,
}

impl MorseTable {
    pub fn from_columns(m: Vec<u64>) -> Self {
        let q_max = m.len() as i64 - 1;
        MorseTable {
            q_max,
            b: (0..=q_max).map(betti).collect(),
            m,
            iterates: vec![],
            truncation: "given".into(),
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{:>4} {:>6} {:>4}", "q", "M_q", "b_q")?;
        for q in 0..self.m.len() {
            writeln!(w, "{:>4} {:>6} {:>4}", q, self.m[q], self.b[q])?;
        }
        Ok(())
    }
}

/// Orbit data for Morse counting: a profile plus k-data for its degenerate
/// iterates over one period (repeated with period K).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LedgerOrbit {
    pub profile: MonodromyProfile,
    #[serde(default)]
    pub types: Vec<IterateTypes>,
}

const MAX_ITERATES: u64 = 1_000_000;

/// M_q = Σ_{orbits, iterates} dim C_q: non-degenerate iterates add 1 at
/// q = i(y^m) when i(y^m) − i(y) is even, degenerate ones add k_{q−i(y^m)}.
pub fn morse_counts(orbits: &[LedgerOrbit], q_max: i64) -> Result<MorseTable> {
    let cols = (q_max.max(-1) + 1) as usize;
    let mut m_q = vec![0u64; cols];
    let mut used = Vec::with_capacity(orbits.len());
    for (j, o) in orbits.iter().enumerate() {
        let p = &o.profile;
        let limit = q_max + 2 * p.n as i64;
        let k_period = minimal_period_k(p)?;
        let mi = mean_index(p)?;
        if !(mi.value > 0.0) {
            return Err(Error::Input(format!("orbit {}: mean index {} gives no finite truncation", j + 1, mi.value)));
        }
        let base = iterate(p, 1)?.i_ekeland;
        let mut m = 1;
        loop {
            let r = iterate(p, m)?;
            if r.i_ekeland > limit {
                break;
            }
            if r.nu == 1 {
                if (r.i_ekeland - base).is_even() && (0..cols as i64).contains(&r.i_ekeland) {
                    m_q[r.i_ekeland as usize] += 1;
                }
            } else {
                let rep = (m - 1) % k_period + 1;
                let t = o.types.iter().find(|t| t.m == rep).ok_or(Error::MissingTypes { orbit: j + 1, m })?;
                for (l, &v) in t.k.iter().enumerate() {
                    let q = r.i_ekeland + l as i64;
                    if (0..cols as i64).contains(&q) {
                        m_q[q as usize] += u64::from(v);
                    }
                }
            }
            m += 1;
            if m > MAX_ITERATES {
                return Err(Error::Input(format!("orbit {}: indices stay below {limit} for {MAX_ITERATES} iterates", j + 1)));
            }
        }
        used.push(m - 1);
    }
    Ok(MorseTable {
        q_max,
        b: (0..=q_max).map(betti).collect(),
        m: m_q,
        iterates: used,
        truncation: "iterates with i(y^m) ≤ q_max + 2n; stands in for the level threshold below which the \
                     equivariant homology of the sublevel set agrees with CP^∞"
            .into(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MorseReport {
    /// q with M_q < b_q.
    pub strong_violations: Vec<i64>,
    /// q where Σ_{i≤q} (−1)^{q−i} M_i < Σ_{i≤q} (−1)^{q−i} b_i.
    pub alternating_violations: Vec<i64>,
    pub odd_vanishing: bool,
    /// With vanishing odd columns the inequalities force M_q = b_q for
    /// q ≤ q_max − 1: `Some(true)` when that holds, `Some(false)` when it
    /// fails (the table is inconsistent), `None` when not applicable.
    pub derived_equality: Option<bool>,
    /// Columns q ≤ q_max − 1 with M_q ≠ b_q under odd vanishing.
    pub equality_failures: Vec<i64>,
    pub passed: bool,
}

pub fn morse_inequalities(t: &MorseTable) -> MorseReport {
    let q_max = t.m.len() as i64 - 1;
    let mut strong = Vec::new();
    let mut alternating = Vec::new();
    let (mut am, mut ab): (i64, i64) = (0, 0);
    for q in 0..=q_max {
        let (m, b) = (t.m[q as usize] as i64, t.b[q as usize] as i64);
        if m < b {
            strong.push(q);
        }
        // S_q = M_q − S_{q−1}.
        am = m - am;
        ab = b - ab;
        if am < ab {
            alternating.push(q);
        }
    }
    let odd_vanishing = (0..=q_max).filter(|q| q % 2 == 1).all(|q| t.m[q as usize] == 0);
    let equality_failures: Vec<i64> = if odd_vanishing {
        (0..q_max).filter(|&q| t.m[q as usize] != t.b[q as usize]).collect()
    } else {
        vec![]
    };
    let derived_equality = odd_vanishing.then_some(equality_failures.is_empty());
    MorseReport {
        passed: strong.is_empty() && alternating.is_empty() && derived_equality != Some(false),
        strong_violations: strong,
        alternating_violations: alternating,
        odd_vanishing,
        derived_equality,
        equality_failures,
    }
}

// ---------------------------------------------------------------------------
// Scenario replays.

pub const SCENARIOS: [&str; 4] = ["thm1.2-case1", "thm1.2-case2", "thm1.2-forcing", "thm1.1-case4"];

#[derive(Clone, Debug, Serialize)]
pub struct ScenarioStep {
    pub claim: String,
    pub holds: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct ScenarioReport {
    pub label: String,
    pub verdict: String,
    pub feasible: bool,
    /// Analytic supremum of the identity sum over the admissible set.
    #[serde(serialize_with = "ser_opt_ratio")]
    pub supremum: Option<Rational64>,
    pub supremum_value: Option<f64>,
    /// Largest identity sum met on the θ-grid.
    pub grid_max: Option<f64>,
    pub grid_step: f64,
    pub steps: Vec<ScenarioStep>,
}

/// Index of the hyperbolic-times-rotation orbits of the last case: i(y,1) =
/// i(y) + 3 with one rotation R(θ) and a hyperbolic block.
fn rotation_orbit(i_ekeland: i64, theta_over_pi: f64) -> Result<MonodromyProfile> {
    MonodromyProfile::r_family(i_ekeland + 3, &[Turn::float(theta_over_pi / 2.0)], &[2.0])
}

/// An irrational θ/π used when only parity data matter.
const GENERIC_THETA_OVER_PI: f64 = std::f64::consts::SQRT_2 - 1.0;

/// θ/π grid on (0, 2) with spacing step·/π.
fn theta_grid(step: f64) -> Vec<f64> {
    let n = (2.0 * std::f64::consts::PI / step).floor() as usize;
    (1..=n).map(|k| k as f64 * step / std::f64::consts::PI).filter(|t| *t < 2.0).collect()
}

/// Degrees q ≤ q_top and the M_q they receive from the first orbit with
/// k-data `k1`, and two rotation orbits with Ekeland indices (a, b).
fn low_columns(k1: &[u32], a: i64, b: i64, t2: f64, t3: f64, q_top: i64) -> Result<Vec<u64>> {
    let orbits = vec![
        LedgerOrbit {
            profile: MonodromyProfile::double_n1_minus(3)?,
            types: vec![IterateTypes::new(1, k1)],
        },
        LedgerOrbit { profile: rotation_orbit(a, t2)?, types: vec![] },
        LedgerOrbit { profile: rotation_orbit(b, t3)?, types: vec![] },
    ];
    Ok(morse_counts(&orbits, q_top)?.m)
}

/// Pairs (i(y₂), i(y₃)), i(y₂) ≤ i(y₃) even, for which M_q = b_q holds in all
/// columns up to i(y₃) for some θ on a coarse grid.
fn morse_forcing(k1: &[u32], max_index: i64) -> Result<Vec<(i64, i64)>> {
    let thetas: Vec<f64> = (1..40).map(|k| k as f64 / 20.0 + 1e-3 * GENERIC_THETA_OVER_PI).collect();
    let mut pairs = Vec::new();
    for a in (0..=max_index).step_by(2) {
        for b in (a..=max_index).step_by(2) {
            let mut ok = false;
            'grid: for &t2 in &thetas {
                for &t3 in &thetas {
                    let m = low_columns(k1, a, b, t2, t3, b)?;
                    if (0..=b).all(|q| m[q as usize] == betti(q)) {
                        ok = true;
                        break 'grid;
                    }
                }
            }
            if ok {
                pairs.push((a, b));
            }
        }
    }
    Ok(pairs)
}

fn final_case(label: &str, k1: [u32; 3], step: f64) -> Result<ScenarioReport> {
    let mut steps = Vec::new();
    let y1 = MonodromyProfile::double_n1_minus(3)?;
    let chi1 = chi_hat_profile(&y1, &[IterateTypes::new(1, &k1)], 1)?;
    let mean1 = mean_index(&y1)?.exact.expect("integral mean index");
    steps.push(ScenarioStep {
        claim: "χ̂(y₁) = 1 and î(y₁) = 4".into(),
        holds: chi1.value == Rational64::from_integer(1) && mean1 == Rational64::from_integer(4),
        detail: format!("k(y₁) = {k1:?}, K = {}, χ̂ = {}, î = {}", chi1.k_period, ratio_string(&chi1.value), ratio_string(&mean1)),
    });

    let seq1 = index_sequence(&y1, 6)?;
    let pattern: Vec<i64> = seq1.iter().map(|e| e.i + if k1[0] == 1 { 0 } else { 2 }).collect();
    steps.push(ScenarioStep {
        claim: format!("y₁^m contributes exactly at degree 4m − {}", if k1[0] == 1 { 4 } else { 2 }),
        holds: pattern.iter().zip(1..).all(|(q, m)| *q == 4 * m - if k1[0] == 1 { 4 } else { 2 }),
        detail: format!("degrees for m = 1..6: {pattern:?}"),
    });

    let pairs = morse_forcing(&k1, 16)?;
    let holds = pairs.len() == 1;
    steps.push(ScenarioStep {
        claim: "M_q = b_q in the low columns forces (i(y₂), i(y₃))".into(),
        holds,
        detail: format!("admissible pairs with indices ≤ 16: {pairs:?}"),
    });
    let &(a, b) = pairs.first().ok_or_else(|| Error::Input("no admissible index pair".into()))?;

    // χ̂ of the rotation orbits does not depend on θ.
    let chi2 = chi_hat_profile(&rotation_orbit(a, GENERIC_THETA_OVER_PI)?, &[], 2)?.value;
    let chi3 = chi_hat_profile(&rotation_orbit(b, GENERIC_THETA_OVER_PI)?, &[], 3)?.value;
    steps.push(ScenarioStep {
        claim: "χ̂(y₂) = χ̂(y₃) = 1/2".into(),
        holds: chi2 == Rational64::new(1, 2) && chi3 == Rational64::new(1, 2),
        detail: format!("χ̂(y₂) = {}, χ̂(y₃) = {}", ratio_string(&chi2), ratio_string(&chi3)),
    });

    // î(y_j) = i(y_j) + 3 + θ_j/π decreases the sum in θ; the supremum is the
    // θ → 0⁺ limit.
    let sup = chi1.value / mean1 + chi2 / Rational64::from_integer(a + 3) + chi3 / Rational64::from_integer(b + 3);
    let grid = theta_grid(step);
    let best = |i: i64, chi: Rational64| -> Result<f64> {
        let mut best = f64::NEG_INFINITY;
        for &t in &grid {
            let mi = mean_index(&rotation_orbit(i, t)?)?.value;
            best = best.max(to_f64(&chi) / mi);
        }
        Ok(best)
    };
    // The sum is separable in (θ₂, θ₃), so its grid maximum is the sum of
    // the one-dimensional maxima.
    let grid_max = to_f64(&(chi1.value / mean1)) + best(a, chi2)? + best(b, chi3)?;
    let half = Rational64::new(1, 2);
    let feasible = sup >= half;
    steps.push(ScenarioStep {
        claim: "Σ χ̂/î < 1/2 on the whole admissible set".into(),
        holds: !feasible && grid_max < 0.5,
        detail: format!(
            "supremum {} ≈ {:.6} (θ → 0⁺), grid maximum {:.6} at spacing {step}",
            ratio_string(&sup),
            to_f64(&sup),
            grid_max
        ),
    });
    Ok(ScenarioReport {
        label: label.into(),
        verdict: if feasible { "feasible" } else { "infeasible" }.into(),
        feasible,
        supremum: Some(sup),
        supremum_value: Some(to_f64(&sup)),
        grid_max: Some(grid_max),
        grid_step: step,
        steps,
    })
}

/// χ̂(y₁) must be 1 and both rotation orbits must have even index.
fn forcing_case() -> Result<ScenarioReport> {
    let mut steps = Vec::new();
    let y1 = MonodromyProfile::double_n1_minus(3)?;
    let mut chis: Vec<Rational64> = Vec::new();
    for k in forced_types_any(&y1, 4)? {
        let c = chi_hat_profile(&y1, &k, 1)?.value;
        if !chis.contains(&c) {
            chis.push(c);
        }
    }
    chis.sort();
    steps.push(ScenarioStep {
        claim: "admissible χ̂(y₁) are integers ≤ 1".into(),
        holds: chis.iter().all(|c| c.is_integer() && *c <= Rational64::from_integer(1)),
        detail: format!("χ̂(y₁) over k-values ≤ 4: {:?}", chis.iter().map(ratio_string).collect::<Vec<_>>()),
    });

    let one_sixth = Rational64::new(1, 6);
    let mut rot_sup = Vec::new();
    for i in 0..4 {
        let chi = chi_hat_profile(&rotation_orbit(i, GENERIC_THETA_OVER_PI)?, &[], 2)?.value;
        rot_sup.push((i % 2, chi, chi / Rational64::from_integer(i + 3)));
    }
    steps.push(ScenarioStep {
        claim: "χ̂(y_j)/î(y_j) < 1/6 for each rotation orbit".into(),
        holds: rot_sup.iter().all(|(_, _, s)| *s <= one_sixth),
        detail: format!(
            "(parity, χ̂, sup χ̂/î) for i(y_j) = 0..3: {:?}; the bound 1/6 is approached only as i → 0, θ → 0⁺",
            rot_sup.iter().map(|(p, c, s)| (p, ratio_string(c), ratio_string(s))).collect::<Vec<_>>()
        ),
    });

    // Best achievable χ̂/î per parity of a rotation orbit.
    let best_even = Rational64::new(1, 6);
    let best_odd = Rational64::new(-1, 4);
    let half = Rational64::new(1, 2);
    let mut feasible = Vec::new();
    for chi in &chis {
        for (pa, sa) in [(0, best_even), (1, best_odd)] {
            for (pb, sb) in [(0, best_even), (1, best_odd)] {
                if pa <= pb && chi / Rational64::from_integer(4) + sa + sb >= half {
                    feasible.push((ratio_string(chi), pa, pb));
                }
            }
        }
    }
    let forced = feasible == vec![("1".to_string(), 0, 0)];
    steps.push(ScenarioStep {
        claim: "only χ̂(y₁) = 1 with i(y₂), i(y₃) even can reach 1/2".into(),
        holds: forced,
        detail: format!("surviving (χ̂(y₁), parity i(y₂), parity i(y₃)): {feasible:?}"),
    });
    Ok(ScenarioReport {
        label: "thm1.2-forcing".into(),
        verdict: if forced { "forced" } else { "not forced" }.into(),
        feasible: !feasible.is_empty(),
        supremum: Some(Rational64::new(1, 4) + best_even + best_even),
        supremum_value: Some(7.0 / 12.0),
        grid_max: None,
        grid_step: 0.0,
        steps,
    })
}

/// All valid k-assignments of one period, with values ≤ bound.
fn forced_types_any(p: &MonodromyProfile, bound: u32) -> Result<Vec<Vec<IterateTypes>>> {
    let k = minimal_period_k(p)?;
    let seq = index_sequence(p, k)?;
    let mut all = Vec::new();
    let lo = -(bound as i64) * seq.iter().map(|e| e.nu as i64).sum::<i64>();
    let hi = -lo;
    for num in lo..=hi {
        all.extend(forced_types(p, Rational64::new(num, k as i64), bound)?);
    }
    Ok(all)
}

/// χ̂ = 0 with θ₂/2π = L/N forces k₁(y^N) = N − 1.
fn case4(step: f64) -> Result<ScenarioReport> {
    let mut steps = Vec::new();
    let mut all = true;
    for n in 2..=9i64 {
        for l in (1..n).filter(|l| l.gcd(&n) == 1) {
            let p = MonodromyProfile::r_family(3, &[Turn::float(GENERIC_THETA_OVER_PI / 2.0), Turn::rational(l, n)], &[])?;
            let k = minimal_period_k(&p)?;
            let sols = forced_types(&p, Rational64::from_integer(0), n as u32 + 1)?;
            let want = vec![vec![IterateTypes::new(n as u64, &[0, (n - 1) as u32, 0])]];
            let ok = k == n as u64 && sols == want;
            all &= ok;
            steps.push(ScenarioStep {
                claim: format!("θ₂/2π = {l}/{n}: K = N and χ̂ = 0 forces k₁(y^N) = N − 1"),
                holds: ok,
                detail: format!(
                    "K = {k}; solutions {:?}",
                    sols.iter().map(|s| s.iter().map(|t| (t.m, t.k.clone())).collect::<Vec<_>>()).collect::<Vec<_>>()
                ),
            });
        }
    }
    Ok(ScenarioReport {
        label: "thm1.1-case4".into(),
        verdict: if all { "forced" } else { "not forced" }.into(),
        feasible: true,
        supremum: None,
        supremum_value: None,
        grid_max: None,
        grid_step: step,
        steps,
    })
}

/// Replay one labelled case on a θ-grid of the given spacing.
pub fn scenario_check(label: &str, grid_step: f64) -> Result<ScenarioReport> {
    if !(grid_step > 0.0 && grid_step < 1.0) {
        return Err(Error::Input(format!("grid step {grid_step} must lie in (0, 1)")));
    }
    match label {
        "thm1.2-case1" => final_case(label, [1, 0, 0], grid_step),
        "thm1.2-case2" => final_case(label, [0, 0, 1], grid_step),
        "thm1.2-forcing" => forcing_case(),
        "thm1.1-case4" => case4(grid_step),
        other => Err(Error::UnknownScenario(other.into())),
    }
}

/// Columns of a MorseTable keyed by q, for reports.
pub fn column_map(t: &MorseTable) -> BTreeMap<i64, (u64, u64)> {
    (0..t.m.len()).map(|q| (q as i64, (t.m[q], t.b[q]))).collect()
}
