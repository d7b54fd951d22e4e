//! Maslov-type index iteration for the monodromy shapes N1(1,1) ⋄ M.
//!
//! Indices here are the Maslov-type i(y,m); the Ekeland index is
//! i(y^m) = i(y,m) − n.

use std::fmt;

use nalgebra::DMatrix;
use num_integer::Integer;
use num_rational::Rational64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::symplectic::{assemble, BlockDecomposition, BlockLabel, SymplecticMatrix};

/// Distance to an integer below which a floating product m·θ/2π is
/// "near-integral" and gets a warning.
pub const NEAR_INTEGER: f64 = 1e-9;
/// Defaults for deciding whether a floating angle is secretly rational.
pub const RATIONAL_QMAX: i64 = 10_000;
pub const RATIONAL_TOL: f64 = 1e-10;

pub fn floor_int(a: f64) -> i64 {
    a.floor() as i64
}

pub fn ceil_int(a: f64) -> i64 {
    a.ceil() as i64
}

/// φ(a) = E(a) − [a]: 0 on integers, 1 elsewhere.
pub fn phi(a: f64) -> i64 {
    ceil_int(a) - floor_int(a)
}

pub fn ceil_exact(a: Rational64) -> i64 {
    a.ceil().to_integer()
}

pub fn phi_exact(a: Rational64) -> i64 {
    i64::from(!a.is_integer())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    #[serde(rename = "R_FAMILY")]
    RFamily,
    #[serde(rename = "CASE3")]
    Case3,
    #[serde(rename = "CASE2")]
    Case2,
    #[serde(rename = "DOUBLE_N1MINUS")]
    DoubleN1Minus,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::RFamily => "R_FAMILY",
            Family::Case3 => "CASE3",
            Family::Case2 => "CASE2",
            Family::DoubleN1Minus => "DOUBLE_N1MINUS",
        })
    }
}

/// θ/2π, optionally as an exact reduced fraction L/N.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Turn {
    pub value: f64,
    pub exact: Option<Rational64>,
}

impl Turn {
    pub fn float(value: f64) -> Self {
        Turn { value, exact: None }
    }

    pub fn rational(l: i64, n: i64) -> Self {
        let r = Rational64::new(l, n);
        Turn { value: l as f64 / n as f64, exact: Some(r) }
    }

    pub fn theta(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.value
    }

    /// θ/π.
    pub fn over_pi(&self) -> f64 {
        2.0 * self.value
    }

    /// (E(m·t), φ(m·t)), with a warning when a floating product sits within
    /// [`NEAR_INTEGER`] of an integer.
    fn ceil_phi(&self, m: u64, warnings: &mut Vec<String>) -> (i64, i64) {
        match self.exact {
            Some(r) => {
                let x = r * Rational64::from_integer(m as i64);
                (ceil_exact(x), phi_exact(x))
            }
            None => {
                let x = self.value * m as f64;
                if (x - x.round()).abs() < NEAR_INTEGER {
                    warnings.push(format!(
                        "m={m}: m·θ/2π = {x:.12} is within {NEAR_INTEGER:.0e} of an integer but θ was not declared rational; treated as non-integral"
                    ));
                    // Non-integral by decree: E is the next integer above the
                    // nearest one when the float sits just below it.
                    let k = x.round() as i64;
                    return (if x <= k as f64 { k } else { k + 1 }, 1);
                }
                (ceil_int(x), phi(x))
            }
        }
    }
}

/// Profile block as written in TOML.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum ProfileBlock {
    R {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        theta_over_2pi: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rational: Option<[i64; 2]>,
    },
    N1 { eig: i8, b: i8 },
    #[serde(rename = "hyp")]
    Hyp { lambda: f64 },
}

impl ProfileBlock {
    pub fn rotation(t: Turn) -> Self {
        match t.exact {
            Some(r) => ProfileBlock::R {
                theta_over_2pi: Some(t.value),
                rational: Some([*r.numer(), *r.denom()]),
            },
            None => ProfileBlock::R { theta_over_2pi: Some(t.value), rational: None },
        }
    }

    pub fn turn(&self) -> Result<Option<Turn>> {
        let ProfileBlock::R { theta_over_2pi, rational } = self else {
            return Ok(None);
        };
        let t = match (theta_over_2pi, rational) {
            (_, Some([l, n])) => {
                if *n <= 1 || *l <= 0 || l >= n || l.gcd(n) != 1 {
                    return Err(Error::Structure(format!(
                        "rational angle [{l}, {n}] must be L/N in (0,1) with N > 1 and gcd(L,N) = 1"
                    )));
                }
                let t = Turn::rational(*l, *n);
                if let Some(v) = theta_over_2pi {
                    if (v - t.value).abs() > NEAR_INTEGER {
                        return Err(Error::Structure(format!(
                            "theta_over_2pi = {v} disagrees with declared rational {l}/{n}"
                        )));
                    }
                }
                t
            }
            (Some(v), None) => {
                if !(*v > 0.0 && *v < 1.0) || (*v - 0.5).abs() < NEAR_INTEGER {
                    return Err(Error::Structure(format!(
                        "theta_over_2pi = {v} must lie in (0,1) and differ from 1/2 unless declared rational"
                    )));
                }
                Turn::float(*v)
            }
            (None, None) => {
                return Err(Error::Structure("rotation block needs theta_over_2pi or rational".into()))
            }
        };
        Ok(Some(t))
    }

    pub fn dim(&self) -> usize {
        2
    }

    fn label(&self) -> Result<BlockLabel> {
        Ok(match self {
            ProfileBlock::R { .. } => BlockLabel::R { theta: self.turn()?.unwrap().theta() },
            ProfileBlock::N1 { eig, b } => BlockLabel::N1 { eig: *eig, b: *b },
            ProfileBlock::Hyp { lambda } => BlockLabel::Hyperbolic { lambda: *lambda },
        })
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProfileFile {
    i1: i64,
    #[serde(default)]
    n: Option<usize>,
    family: Family,
    blocks: Vec<ProfileBlock>,
}

/// i(y,1) plus the normal form N1(1,1) ⋄ M of the monodromy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ProfileFile")]
pub struct MonodromyProfile {
    pub i1: i64,
    pub n: usize,
    pub family: Family,
    pub blocks: Vec<ProfileBlock>,
}

impl TryFrom<ProfileFile> for MonodromyProfile {
    type Error = Error;
    fn try_from(f: ProfileFile) -> Result<Self> {
        let n = f.n.unwrap_or(f.blocks.len());
        MonodromyProfile::new(f.i1, n, f.family, f.blocks)
    }
}

/// What the formulas need from the trailing blocks.
#[derive(Clone, Debug, Default)]
struct Shape {
    rotations: Vec<Turn>,
    /// N1(−1,0) / N1(−1,−1) blocks, iterated as R(π).
    minus_zero: usize,
    minus_neg: usize,
    hyperbolic: usize,
    /// CASE2 trailing N1(1,b).
    plus_b: Option<i8>,
}

impl MonodromyProfile {
    pub fn new(i1: i64, n: usize, family: Family, blocks: Vec<ProfileBlock>) -> Result<Self> {
        let p = MonodromyProfile { i1, n, family, blocks };
        p.shape()?;
        Ok(p)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// R_FAMILY profile N1(1,1) ⋄ R(θ_1) ⋄ … ⋄ D(λ)…
    pub fn r_family(i1: i64, turns: &[Turn], hyperbolic: &[f64]) -> Result<Self> {
        let mut blocks = vec![ProfileBlock::N1 { eig: 1, b: 1 }];
        blocks.extend(turns.iter().map(|t| ProfileBlock::rotation(*t)));
        blocks.extend(hyperbolic.iter().map(|&lambda| ProfileBlock::Hyp { lambda }));
        Self::new(i1, blocks.len(), Family::RFamily, blocks)
    }

    /// N1(1,1) ⋄ R(θ_1) ⋄ N1(−1,1).
    pub fn case3(i1: i64, t1: Turn) -> Result<Self> {
        let blocks = vec![
            ProfileBlock::N1 { eig: 1, b: 1 },
            ProfileBlock::rotation(t1),
            ProfileBlock::N1 { eig: -1, b: 1 },
        ];
        Self::new(i1, 3, Family::Case3, blocks)
    }

    /// N1(1,1) ⋄ N1(1,−1)^{⋄2}.
    pub fn double_n1_minus(i1: i64) -> Result<Self> {
        let blocks = vec![
            ProfileBlock::N1 { eig: 1, b: 1 },
            ProfileBlock::N1 { eig: 1, b: -1 },
            ProfileBlock::N1 { eig: 1, b: -1 },
        ];
        Self::new(i1, 3, Family::DoubleN1Minus, blocks)
    }

    /// Profile of a classified monodromy. The orbit-plane block at 1
    /// (N1(1,b) or the identity) becomes the leading N1(1,1); the family is
    /// read off the remaining blocks.
    pub fn from_decomposition(i1: i64, dec: &BlockDecomposition) -> Result<Self> {
        if !dec.is_complete() {
            return Err(Error::Structure(format!("incomplete decomposition: {}", dec.residual_report)));
        }
        let plus: Vec<i8> = dec
            .blocks
            .iter()
            .filter_map(|b| match b {
                BlockLabel::N1 { eig: 1, b } => Some(*b),
                _ => None,
            })
            .collect();
        let mut rest: Vec<ProfileBlock> = Vec::new();
        for b in &dec.blocks {
            match *b {
                BlockLabel::N1 { eig: 1, .. } => {}
                BlockLabel::N1 { eig, b } => rest.push(ProfileBlock::N1 { eig, b }),
                BlockLabel::R { theta } => {
                    rest.push(ProfileBlock::rotation(Turn::float(theta / (2.0 * std::f64::consts::PI))))
                }
                BlockLabel::Hyperbolic { lambda } => rest.push(ProfileBlock::Hyp { lambda }),
                BlockLabel::Quadruple { .. } => {
                    return Err(Error::Structure(
                        "complex quadruples have no iteration formula in these families".into(),
                    ))
                }
            }
        }
        let n = dec.blocks.len();
        let lead = ProfileBlock::N1 { eig: 1, b: 1 };
        let family = match plus.len() {
            0 => return Err(Error::Structure("monodromy has no eigenvalue 1".into())),
            1 if rest.iter().any(|b| matches!(b, ProfileBlock::N1 { eig: -1, b: 1 })) => Family::Case3,
            1 => Family::RFamily,
            2 => {
                // The non-leading plus block is the CASE2 N1(1,b).
                let b = if plus[0] == 1 { plus[1] } else { plus[0] };
                rest.push(ProfileBlock::N1 { eig: 1, b });
                Family::Case2
            }
            3 if plus.iter().filter(|&&b| b == -1).count() >= 2 => {
                rest.push(ProfileBlock::N1 { eig: 1, b: -1 });
                rest.push(ProfileBlock::N1 { eig: 1, b: -1 });
                Family::DoubleN1Minus
            }
            _ => return Err(Error::Structure(format!("unsupported eigenvalue-1 structure {plus:?}"))),
        };
        let mut blocks = vec![lead];
        blocks.extend(rest);
        Self::new(i1, n, family, blocks)
    }

    fn shape(&self) -> Result<Shape> {
        let dim: usize = self.blocks.iter().map(ProfileBlock::dim).sum();
        if dim != 2 * self.n {
            return Err(Error::Structure(format!("blocks span {dim} dimensions, expected 2n = {}", 2 * self.n)));
        }
        if self.blocks.first() != Some(&ProfileBlock::N1 { eig: 1, b: 1 }) {
            return Err(Error::Structure("profile must lead with N1(1,1)".into()));
        }
        let mut s = Shape::default();
        let mut case3_minus = 0;
        for b in &self.blocks[1..] {
            match b {
                ProfileBlock::R { .. } => s.rotations.push(b.turn()?.unwrap()),
                ProfileBlock::Hyp { lambda } => {
                    if !(lambda.abs() > 1.0) {
                        return Err(Error::Structure(format!("hyperbolic multiplier {lambda} must satisfy |λ| > 1")));
                    }
                    s.hyperbolic += 1
                }
                ProfileBlock::N1 { eig: -1, b: 0 } => s.minus_zero += 1,
                ProfileBlock::N1 { eig: -1, b: -1 } => s.minus_neg += 1,
                ProfileBlock::N1 { eig: -1, b: 1 } => case3_minus += 1,
                ProfileBlock::N1 { eig: 1, b } if (-1..=1).contains(b) => {
                    if s.plus_b.replace(*b).is_some() && self.family != Family::DoubleN1Minus {
                        return Err(Error::Structure("more than one trailing N1(1,b) block".into()));
                    }
                }
                other => return Err(Error::Structure(format!("invalid block {other:?}"))),
            }
        }
        let bad = |why: &str| Err(Error::Structure(format!("{} profile: {why}", self.family)));
        match self.family {
            Family::RFamily => {
                if case3_minus > 0 || s.plus_b.is_some() {
                    return bad("only R(θ), hyperbolic, N1(−1,0) and N1(−1,−1) may follow N1(1,1)");
                }
            }
            Family::Case3 => {
                if !(case3_minus == 1 && s.rotations.len() == 1 && self.blocks.len() == 3) {
                    return bad("shape must be N1(1,1) ⋄ R(θ1) ⋄ N1(−1,1)");
                }
            }
            Family::Case2 => {
                let middle = s.rotations.len() + s.hyperbolic;
                if !(s.plus_b.is_some() && middle == 1 && self.blocks.len() == 3) {
                    return bad("shape must be N1(1,1) ⋄ (R or hyperbolic) ⋄ N1(1,b)");
                }
            }
            Family::DoubleN1Minus => {
                let minus = self.blocks[1..]
                    .iter()
                    .filter(|b| **b == ProfileBlock::N1 { eig: 1, b: -1 })
                    .count();
                if !(minus == 2 && self.blocks.len() == 3) {
                    return bad("shape must be N1(1,1) ⋄ N1(1,−1) ⋄ N1(1,−1)");
                }
            }
        }
        Ok(s)
    }

    /// e(γ) read off the blocks.
    pub fn elliptic_height(&self) -> usize {
        self.blocks.iter().filter(|b| !matches!(b, ProfileBlock::Hyp { .. })).count() * 2
    }

    /// Convex hypersurfaces always have i(y,1) ≥ 3.
    pub fn convex_provenance(&self) -> bool {
        self.i1 >= 3
    }

    /// The ⋄-product matrix realising the profile.
    pub fn matrix(&self) -> Result<SymplecticMatrix> {
        let labels = self.blocks.iter().map(ProfileBlock::label).collect::<Result<Vec<_>>>()?;
        SymplecticMatrix::new(assemble(&labels))
    }

    /// Rotation angles, with N1(−1,0), N1(−1,−1) counted as R(π).
    pub fn turns(&self) -> Result<Vec<Turn>> {
        let s = self.shape()?;
        let mut t = s.rotations;
        t.extend(std::iter::repeat_n(Turn::rational(1, 2), s.minus_zero + s.minus_neg));
        Ok(t)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IterationResult {
    pub m: u64,
    pub i_maslov: i64,
    pub nu: u32,
    pub i_ekeland: i64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// ν(y,m) for every family; CASE2 goes through the kernel oracle.
pub fn nullity(p: &MonodromyProfile, m: u64) -> Result<(u32, Vec<String>)> {
    if m == 0 {
        return Err(Error::Input("iterate count m must be positive".into()));
    }
    let s = p.shape()?;
    let mut warnings = Vec::new();
    let even = u32::from(m.is_multiple_of(2));
    let rot = |warnings: &mut Vec<String>, turns: &[Turn], only_exact: bool| -> u32 {
        turns
            .iter()
            .filter(|t| !only_exact || t.exact.is_some())
            .map(|t| 2 * (1 - t.ceil_phi(m, warnings).1) as u32)
            .sum()
    };
    let nu = match p.family {
        Family::RFamily => {
            1 + rot(&mut warnings, &s.rotations, false) + 2 * even * s.minus_zero as u32 + even * s.minus_neg as u32
        }
        // An irrational θ1 never returns to 1; a declared rational one does.
        Family::Case3 => 1 + even + rot(&mut warnings, &s.rotations, true),
        Family::DoubleN1Minus => 3,
        Family::Case2 => {
            let mat = p.matrix()?;
            let r = nu_from_matrix(&mat, m, NU_TOL)?;
            warnings.extend(r.warnings);
            r.nu
        }
    };
    Ok((nu, warnings))
}

pub fn iterate(p: &MonodromyProfile, m: u64) -> Result<IterationResult> {
    if m == 0 {
        return Err(Error::Input("iterate count m must be positive".into()));
    }
    let s = p.shape()?;
    let mut warnings = Vec::new();
    let maslov = |m: u64, warnings: &mut Vec<String>| -> Result<i64> {
        let mi = m as i64;
        Ok(match p.family {
            Family::RFamily => {
                let turns = p.turns()?;
                let r = turns.len() as i64;
                let ceil: i64 = turns.iter().map(|t| 2 * t.ceil_phi(m, warnings).0).sum();
                mi * (p.i1 - r + 1) + ceil - (r + 1)
            }
            Family::Case3 => mi * p.i1 + 2 * s.rotations[0].ceil_phi(m, warnings).0 - 2,
            Family::DoubleN1Minus => mi * (p.i1 + 1) - 1,
            Family::Case2 => return Err(Error::UnsupportedFamily(p.family.to_string())),
        })
    };
    let i1 = maslov(1, &mut Vec::new())?;
    if i1 != p.i1 {
        return Err(Error::FormulaDispatch(format!(
            "{} formula gives i(y,1) = {i1}, profile declares {}",
            p.family, p.i1
        )));
    }
    let i_maslov = maslov(m, &mut warnings)?;
    let (nu, w) = nullity(p, m)?;
    warnings.extend(w);
    warnings.dedup();
    Ok(IterationResult { m, i_maslov, nu, i_ekeland: i_maslov - p.n as i64, warnings })
}

pub const NU_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NullityReport {
    pub nu: u32,
    pub singular_values: Vec<f64>,
    pub warnings: Vec<String>,
}

/// dim ker(M^m − I) from singular values below `tol`.
pub fn nu_from_matrix(mat: &SymplecticMatrix, m: u64, tol: f64) -> Result<NullityReport> {
    let m32 = u32::try_from(m).map_err(|_| Error::Input(format!("iterate {m} too large")))?;
    let d = mat.entries().nrows();
    let a = mat.pow(m32) - DMatrix::<f64>::identity(d, d);
    let mut sv: Vec<f64> = a.singular_values().iter().copied().collect();
    sv.sort_by(f64::total_cmp);
    let nu = sv.iter().filter(|&&s| s < tol).count() as u32;
    let warnings = sv
        .iter()
        .filter(|&&s| s >= tol / 10.0 && s <= tol * 10.0)
        .map(|s| format!("singular value {s:.3e} of M^{m} − I is within a decade of tol {tol:.0e}"))
        .collect();
    Ok(NullityReport { nu, singular_values: sv, warnings })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum RationalVerdict {
    Rational { p: i64, q: i64 },
    NoRationalBelow { q_max: i64 },
}

/// Scan the continued-fraction convergents p/q of x (q ≤ q_max) for the
/// first with |x − p/q| < tol/q². A negative verdict only says nothing with
/// a small denominator fits.
pub fn rationality_test(x: f64, q_max: i64, tol: f64) -> RationalVerdict {
    let (mut h_prev, mut h) = (1i64, x.floor() as i64);
    let (mut k_prev, mut k) = (0i64, 1i64);
    let mut rem = x - x.floor();
    loop {
        if (x - h as f64 / k as f64).abs() < tol / (k as f64 * k as f64) {
            return RationalVerdict::Rational { p: h, q: k };
        }
        if rem < 1e-300 {
            break;
        }
        let inv = 1.0 / rem;
        let a = inv.floor();
        rem = inv - a;
        if a > q_max as f64 {
            break;
        }
        let a = a as i64;
        let (hn, kn) = match (a.checked_mul(h).and_then(|v| v.checked_add(h_prev)), a.checked_mul(k).and_then(|v| v.checked_add(k_prev))) {
            (Some(hn), Some(kn)) => (hn, kn),
            _ => break,
        };
        if kn > q_max {
            break;
        }
        (h_prev, h, k_prev, k) = (h, hn, k, kn);
    }
    RationalVerdict::NoRationalBelow { q_max }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MeanIndex {
    pub value: f64,
    /// Exact value when every θ/π is rational (declared or detected).
    pub exact: Option<Rational64>,
    pub rational: bool,
    /// Verdict of [`rationality_test`] on each θ/π.
    pub angle_verdicts: Vec<RationalVerdict>,
}

pub fn mean_index(p: &MonodromyProfile) -> Result<MeanIndex> {
    let turns = match p.family {
        Family::RFamily | Family::Case3 => p.turns()?,
        Family::DoubleN1Minus => vec![],
        Family::Case2 => return Err(Error::UnsupportedFamily(p.family.to_string())),
    };
    let base = match p.family {
        Family::RFamily => p.i1 - turns.len() as i64 + 1,
        Family::Case3 => p.i1,
        _ => p.i1 + 1,
    };
    let mut value = base as f64;
    let mut exact = Some(Rational64::from_integer(base));
    let mut verdicts = Vec::new();
    for t in &turns {
        value += t.over_pi();
        let verdict = match t.exact {
            Some(r) => {
                let r2 = r * 2;
                RationalVerdict::Rational { p: *r2.numer(), q: *r2.denom() }
            }
            None => rationality_test(t.over_pi(), RATIONAL_QMAX, RATIONAL_TOL),
        };
        exact = match (&verdict, exact) {
            (RationalVerdict::Rational { p, q }, Some(e)) => Some(e + Rational64::new(*p, *q)),
            _ => None,
        };
        verdicts.push(verdict);
    }
    Ok(MeanIndex { value, rational: exact.is_some(), exact, angle_verdicts: verdicts })
}

/// Smallest K with ν(y^{p+K}) = ν(y^p) and i(y^{p+K}) − i(y^p) even for all p,
/// found by scanning two full ν-periods.
pub fn minimal_period_k(p: &MonodromyProfile) -> Result<u64> {
    if p.family == Family::Case2 {
        return Err(Error::UnsupportedFamily(p.family.to_string()));
    }
    let mut period: i64 = 1;
    for t in p.turns()? {
        match t.exact {
            Some(r) => period = period.lcm(r.denom()),
            None => {
                if let RationalVerdict::Rational { p: a, q } = rationality_test(t.value, RATIONAL_QMAX, RATIONAL_TOL) {
                    return Err(Error::NeedsExactAngle(format!(
                        "θ/2π = {} looks like {a}/{q}; declare it with rational = [{a}, {q}]",
                        t.value
                    )));
                }
            }
        }
    }
    if p.family == Family::Case3 {
        period = period.lcm(&2);
    }
    let horizon = 2 * period as u64;
    let rows: Vec<IterationResult> = (1..=2 * horizon).map(|m| iterate(p, m)).collect::<Result<_>>()?;
    for k in 1..=horizon {
        let ok = (0..horizon as usize).all(|i| {
            let a = &rows[i];
            let b = &rows[i + k as usize];
            a.nu == b.nu && (b.i_maslov - a.i_maslov).is_even()
        });
        if ok {
            return Ok(k);
        }
    }
    Err(Error::FormulaDispatch("no period found within two ν-periods".into()))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MonotonicityReport {
    pub m_max: u64,
    pub holds: bool,
    pub first_violation: Option<String>,
}

/// i(y,m) < i(y,m+1) and i(y,m) + ν(y,m) ≤ i(y,m+1) − 1 for m ≤ m_max.
pub fn index_monotonicity_check(p: &MonodromyProfile, m_max: u64) -> Result<MonotonicityReport> {
    let mut prev = iterate(p, 1)?;
    for m in 1..=m_max {
        let next = iterate(p, m + 1)?;
        let violation = if prev.i_maslov >= next.i_maslov {
            Some(format!("m={m}: i(y,m) = {} ≥ i(y,m+1) = {}", prev.i_maslov, next.i_maslov))
        } else if prev.i_maslov + i64::from(prev.nu) > next.i_maslov - 1 {
            Some(format!(
                "m={m}: i(y,m) + ν(y,m) = {} > i(y,m+1) − 1 = {}",
                prev.i_maslov + i64::from(prev.nu),
                next.i_maslov - 1
            ))
        } else {
            None
        };
        if violation.is_some() {
            return Ok(MonotonicityReport { m_max, holds: false, first_violation: violation });
        }
        prev = next;
    }
    Ok(MonotonicityReport { m_max, holds: true, first_violation: None })
}

/// Per-profile outcome of the four jump inequalities
/// i(2m) ≥ 2T−3, i(2m)+ν(2m)−1 ≤ 2T+1, i(2m+k) ≥ 2T+3, i(2m−k)+ν(2m−k)−1 ≤ 2T−3.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct JumpChecks {
    pub lower_at_2m: bool,
    pub upper_at_2m: bool,
    pub above: bool,
    pub below: bool,
}

impl JumpChecks {
    pub fn all(&self) -> bool {
        self.lower_at_2m && self.upper_at_2m && self.above && self.below
    }

    fn failures(&self) -> usize {
        [self.lower_at_2m, self.upper_at_2m, self.above, self.below].iter().filter(|b| !**b).count()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct JumpCertificate {
    #[serde(rename = "T")]
    pub t: u64,
    pub m_list: Vec<u64>,
    pub checks: Vec<JumpChecks>,
    /// How far past 2m the "above" inequality was evaluated.
    pub above_window: Vec<u64>,
}

/// Evaluate the four inequalities by direct iterate calls. The "above"
/// family is infinite; it is evaluated for k = 1..=window, and index
/// monotonicity carries it beyond.
pub fn jump_checks(p: &MonodromyProfile, t: u64, m: u64, window: u64) -> Result<JumpChecks> {
    let two_t = 2 * t as i64;
    let at = iterate(p, 2 * m)?;
    let lower_at_2m = at.i_maslov >= two_t - 3;
    let upper_at_2m = at.i_maslov + i64::from(at.nu) - 1 <= two_t + 1;
    let mut above = true;
    for k in 1..=window {
        if iterate(p, 2 * m + k)?.i_maslov < two_t + 3 {
            above = false;
            break;
        }
    }
    let mut below = true;
    for k in 1..2 * m {
        let r = iterate(p, 2 * m - k)?;
        if r.i_maslov + i64::from(r.nu) - 1 > two_t - 3 {
            below = false;
            break;
        }
    }
    Ok(JumpChecks { lower_at_2m, upper_at_2m, above, below })
}

/// Cheap screen: the inequalities at k = 1 only.
fn quick_checks(p: &MonodromyProfile, t: u64, m: u64) -> Result<JumpChecks> {
    let two_t = 2 * t as i64;
    let at = iterate(p, 2 * m)?;
    let up = iterate(p, 2 * m + 1)?;
    let down = iterate(p, 2 * m - 1)?;
    Ok(JumpChecks {
        lower_at_2m: at.i_maslov >= two_t - 3,
        upper_at_2m: at.i_maslov + i64::from(at.nu) - 1 <= two_t + 1,
        above: up.i_maslov >= two_t + 3,
        below: down.i_maslov + i64::from(down.nu) - 1 <= two_t - 3,
    })
}

/// Scan T = 1..=t_max for iterates (m_j) satisfying the jump inequalities
/// for every profile, seeding m_j at round(T/î_j) ± 1. The smallest T wins.
pub fn common_jump_search(profiles: &[MonodromyProfile], t_max: u64) -> Result<JumpCertificate> {
    if profiles.is_empty() {
        return Err(Error::Input("common jump search needs at least one profile".into()));
    }
    let means: Vec<f64> = profiles.iter().map(|p| mean_index(p).map(|m| m.value)).collect::<Result<_>>()?;
    let mut near_miss: Option<(usize, u64, Vec<u64>)> = None;
    for t in 1..=t_max {
        let mut m_list = Vec::with_capacity(profiles.len());
        let mut failures = 0;
        let mut best_ms = Vec::new();
        for (p, &mean) in profiles.iter().zip(&means) {
            let seed = (t as f64 / mean).round() as i64;
            let mut best: Option<(usize, u64)> = None;
            for m in [seed, seed - 1, seed + 1] {
                if m < 1 {
                    continue;
                }
                let f = quick_checks(p, t, m as u64)?.failures();
                if best.is_none_or(|(bf, _)| f < bf) {
                    best = Some((f, m as u64));
                }
                if f == 0 {
                    break;
                }
            }
            let (f, m) = best.unwrap_or((4, 1));
            failures += f;
            best_ms.push(m);
            if f == 0 {
                m_list.push(m);
            }
        }
        if m_list.len() == profiles.len() {
            // Full verification; a screened candidate that fails here is
            // simply not a certificate.
            let windows: Vec<u64> = m_list.iter().map(|m| 2 * m + 2).collect();
            let checks: Vec<JumpChecks> = profiles
                .iter()
                .zip(&m_list)
                .zip(&windows)
                .map(|((p, &m), &w)| jump_checks(p, t, m, w))
                .collect::<Result<_>>()?;
            if checks.iter().all(JumpChecks::all) {
                return Ok(JumpCertificate { t, m_list, checks, above_window: windows });
            }
        }
        if near_miss.as_ref().is_none_or(|(f, _, _)| failures < *f) {
            near_miss = Some((failures, t, best_ms));
        }
    }
    let near = near_miss
        .map(|(f, t, ms)| format!("T={t}, m={ms:?} with {f} failed inequalities"))
        .unwrap_or_default();
    Err(Error::JumpExhausted { t_max, near_miss: near })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sqrt2m1() -> Turn {
        Turn::float(2f64.sqrt() - 1.0)
    }

    #[test]
    fn floor_ceil_phi() {
        assert_eq!((floor_int(1.2), ceil_int(1.2), phi(1.2)), (1, 2, 1));
        assert_eq!((floor_int(2.0), ceil_int(2.0), phi(2.0)), (2, 2, 0));
        assert_eq!((floor_int(-0.5), ceil_int(-0.5), phi(-0.5)), (-1, 0, 1));
        assert_eq!(phi_exact(Rational64::new(6, 3)), 0);
        assert_eq!(ceil_exact(Rational64::new(7, 3)), 3);
    }

    #[test]
    fn double_minus_iteration() {
        let p = MonodromyProfile::double_n1_minus(3).unwrap();
        let r = iterate(&p, 2).unwrap();
        assert_eq!((r.i_maslov, r.i_ekeland, r.nu), (7, 4, 3));
        for m in 1..50 {
            assert_eq!(iterate(&p, m).unwrap().i_ekeland, 4 * m as i64 - 4);
        }
    }

    #[test]
    fn r_family_rotation_plus_hyperbolic() {
        let p = MonodromyProfile::r_family(3, &[sqrt2m1()], &[2.0]).unwrap();
        assert_eq!(iterate(&p, 1).unwrap().i_maslov, 3);
        let r2 = iterate(&p, 2).unwrap();
        assert_eq!(r2.i_maslov, 6);
        assert_eq!(r2.i_ekeland, 3);
        assert_eq!(r2.nu, 1);
    }

    #[test]
    fn case3_nullity() {
        let p = MonodromyProfile::case3(3, sqrt2m1()).unwrap();
        assert_eq!(iterate(&p, 2).unwrap().nu, 2);
        assert_eq!(iterate(&p, 3).unwrap().nu, 1);
    }

    #[test]
    fn case2_refused_but_nullity_available() {
        let blocks = vec![
            ProfileBlock::N1 { eig: 1, b: 1 },
            ProfileBlock::Hyp { lambda: 2.0 },
            ProfileBlock::N1 { eig: 1, b: 0 },
        ];
        let p = MonodromyProfile::new(3, 3, Family::Case2, blocks).unwrap();
        assert!(matches!(iterate(&p, 1), Err(Error::UnsupportedFamily(_))));
        assert_eq!(nullity(&p, 4).unwrap().0, 3);
        assert!(mean_index(&p).is_err());
        assert!(minimal_period_k(&p).is_err());
    }

    #[test]
    fn structure_errors() {
        let blocks = vec![ProfileBlock::N1 { eig: 1, b: 1 }, ProfileBlock::N1 { eig: -1, b: 1 }];
        assert!(matches!(
            MonodromyProfile::new(3, 2, Family::RFamily, blocks),
            Err(Error::Structure(_))
        ));
        let blocks = vec![ProfileBlock::Hyp { lambda: 2.0 }, ProfileBlock::N1 { eig: 1, b: 1 }];
        assert!(MonodromyProfile::new(3, 2, Family::RFamily, blocks).is_err());
        let blocks = vec![ProfileBlock::N1 { eig: 1, b: 1 }];
        assert!(MonodromyProfile::new(3, 3, Family::RFamily, blocks).is_err());
    }

    #[test]
    fn nu_oracle_examples() {
        let n1 = SymplecticMatrix::new(assemble(&[BlockLabel::N1 { eig: 1, b: 1 }])).unwrap();
        assert_eq!(nu_from_matrix(&n1, 5, NU_TOL).unwrap().nu, 1);
        let r = SymplecticMatrix::new(assemble(&[BlockLabel::R { theta: 2.0 * std::f64::consts::PI * 3.0 / 7.0 }])).unwrap();
        assert_eq!(nu_from_matrix(&r, 7, NU_TOL).unwrap().nu, 2);
        let m1 = SymplecticMatrix::new(assemble(&[BlockLabel::N1 { eig: -1, b: 1 }])).unwrap();
        assert_eq!(nu_from_matrix(&m1, 2, NU_TOL).unwrap().nu, 1);
    }

    #[test]
    fn rationality_examples() {
        assert_eq!(rationality_test(0.75, 100, RATIONAL_TOL), RationalVerdict::Rational { p: 3, q: 4 });
        assert_eq!(
            rationality_test(2f64.sqrt() - 1.0, 10_000, 1e-10),
            RationalVerdict::NoRationalBelow { q_max: 10_000 }
        );
        assert_eq!(rationality_test(2.0 / 7.0 + 1e-13, 100, 1e-10), RationalVerdict::Rational { p: 2, q: 7 });
        assert_eq!(rationality_test(3.0, 10, 1e-10), RationalVerdict::Rational { p: 3, q: 1 });
    }

    #[test]
    fn mean_index_closed_forms() {
        let d = mean_index(&MonodromyProfile::double_n1_minus(3).unwrap()).unwrap();
        assert_eq!(d.exact, Some(Rational64::from_integer(4)));
        let t = sqrt2m1();
        let p = MonodromyProfile::r_family(3, &[t], &[2.0]).unwrap();
        let mi = mean_index(&p).unwrap();
        assert!((mi.value - (3.0 + t.over_pi())).abs() < 1e-15);
        assert!(!mi.rational);
    }

    #[test]
    fn k_values() {
        let case4 = MonodromyProfile::r_family(3, &[sqrt2m1(), Turn::rational(3, 7)], &[]).unwrap();
        assert_eq!(minimal_period_k(&case4).unwrap(), 7);
        let case3 = MonodromyProfile::case3(3, sqrt2m1()).unwrap();
        assert_eq!(minimal_period_k(&case3).unwrap(), 2);
        assert_eq!(minimal_period_k(&MonodromyProfile::double_n1_minus(3).unwrap()).unwrap(), 1);
        let sneaky = MonodromyProfile::r_family(3, &[Turn::float(3.0 / 7.0)], &[2.0]).unwrap();
        assert!(matches!(minimal_period_k(&sneaky), Err(Error::NeedsExactAngle(_))));
    }

    #[test]
    fn monotonicity() {
        assert!(index_monotonicity_check(&MonodromyProfile::double_n1_minus(3).unwrap(), 50).unwrap().holds);
        let p = MonodromyProfile::r_family(3, &[sqrt2m1()], &[2.0]).unwrap();
        assert!(index_monotonicity_check(&p, 100).unwrap().holds);
        let bad = MonodromyProfile::r_family(1, &[Turn::float(0.1)], &[2.0]).unwrap();
        let r = index_monotonicity_check(&bad, 20).unwrap();
        assert!(!r.holds && r.first_violation.unwrap().starts_with("m=1"));
    }

    #[test]
    fn jump_search_double() {
        let c = common_jump_search(&[MonodromyProfile::double_n1_minus(3).unwrap()], 100).unwrap();
        assert_eq!((c.t, c.m_list.clone()), (4, vec![1]));
        assert!(common_jump_search(&[], 10).is_err());
    }

    #[test]
    fn toml_profile() {
        let text = r#"
            i1 = 3
            family = "R_FAMILY"
            blocks = [
              { kind = "N1", eig = 1, b = 1 },
              { kind = "R", theta_over_2pi = 0.4142135623730951 },
              { kind = "R", rational = [3, 7] },
            ]
        "#;
        let p = MonodromyProfile::from_toml(text).unwrap();
        assert_eq!(p.n, 3);
        assert_eq!(minimal_period_k(&p).unwrap(), 7);
        let bad = text.replace("i1 = 3", "i1 = 3\nbogus = 1");
        let err = MonodromyProfile::from_toml(&bad).unwrap_err().to_string();
        assert!(err.contains("bogus"), "{err}");
        let bad = text.replace("[3, 7]", "[6, 14]");
        assert!(MonodromyProfile::from_toml(&bad).is_err());
    }
}
