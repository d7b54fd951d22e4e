//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Tolerances and budgets are pinned below.

use std::f64::consts::PI;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use num_rational::Rational64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use symplectic_index::iteration::*;
use symplectic_index::ledger::*;
use symplectic_index::orbit::*;
use symplectic_index::symplectic::*;

const IDENTITY_TOL: f64 = 1e-6;
const FLOQUET_TOL: f64 = 1e-8;
const CONVERGENCE_RATIO: (f64, f64) = (12.0, 20.0);
const ORBIT_STEPS: usize = 10_000;
const IDENTITY_BUDGET: Duration = Duration::from_secs(10);
const JUMP_BUDGET: Duration = Duration::from_secs(30);
const TOTAL_BUDGET: Duration = Duration::from_secs(120);
const JUMP_T_MAX: u64 = 100_000;

type Outcome = Result<String, String>;
// (iterate index, mutated k, rule expected to fire)
type Mutation = (usize, Vec<u32>, Rule);

fn radii() -> [f64; 3] {
    [1.0, 2f64.powf(0.25), 3f64.powf(0.25)]
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn r(p: i64, q: i64) -> Rational64 {
    Rational64::new(p, q)
}

fn c1_identity() -> Outcome {
    let start = Instant::now();
    let mut rows = Vec::new();
    for (j, orbit) in ellipsoid_orbits(&radii()).map_err(err)?.into_iter().enumerate() {
        let a = analyze_orbit(orbit, ORBIT_STEPS, 10_000).map_err(err)?;
        let profile = a.classification.profile.as_ref().ok_or("orbit without a monodromy profile")?;
        let chi = chi_hat_profile(profile, &[], j + 1).map_err(err)?;
        let mean = a.mean_index().ok_or("no mean index")?;
        rows.push((chi.value, MeanValue::Float { value: mean }));
    }
    let rep = identity_check(&rows).map_err(err)?;
    let elapsed = start.elapsed();
    ensure(rep.residual < IDENTITY_TOL, || format!("residual {:.3e}", rep.residual))?;
    ensure(elapsed < IDENTITY_BUDGET, || format!("took {elapsed:?}"))?;
    Ok(format!("Σ χ̂/î = {:.12}, residual {:.2e}, {elapsed:.2?}", rep.total, rep.residual))
}

fn c2_floquet() -> Outcome {
    let radii = radii();
    let mut worst: f64 = 0.0;
    let mut ratios = Vec::new();
    for (k, orbit) in ellipsoid_orbits(&radii).map_err(err)?.iter().enumerate() {
        let exact = ellipsoid_multipliers(&radii, k);
        let mono = monodromy(orbit, ORBIT_STEPS).map_err(err)?;
        worst = worst.max(multiset_distance(&mono.multipliers, &exact));
        let e = |steps| -> Result<f64, String> {
            Ok(multiset_distance(&eigenvalues(&monodromy_matrix(orbit, steps)).map_err(err)?, &exact))
        };
        ratios.push(e(500)? / e(1000)?);
    }
    ensure(worst < FLOQUET_TOL, || format!("multiplier error {worst:.3e}"))?;
    let (lo, hi) = CONVERGENCE_RATIO;
    ensure(ratios.iter().all(|x| (lo..=hi).contains(x)), || format!("halving ratios {ratios:?}"))?;
    Ok(format!("max error {worst:.2e}, halving ratios {:?}", ratios.iter().map(|x| format!("{x:.2}")).collect::<Vec<_>>()))
}

// Integer-exact E and φ for the instance formulas.
fn e_rat(m: i64, l: i64, n: i64) -> i64 {
    (m * l).div_euclid(n) + i64::from((m * l).rem_euclid(n) != 0)
}

fn e_irr(m: i64, t: f64) -> i64 {
    (m as f64 * t).ceil() as i64
}

fn c3_iteration() -> Outcome {
    let t1 = (2f64.sqrt() - 1.0) / 2.0;
    let t2 = (3f64.sqrt() - 1.0) / 2.0;
    let mut checked = 0;
    let mut compare = |label: &str, p: &MonodromyProfile, f: &dyn Fn(i64) -> (i64, i64)| -> Result<(), String> {
        for m in 1..=100i64 {
            let r = iterate(p, m as u64).map_err(err)?;
            let (i, nu) = f(m);
            ensure((r.i_maslov, i64::from(r.nu)) == (i, nu), || {
                format!("{label} m={m}: got ({}, {}), want ({i}, {nu})", r.i_maslov, r.nu)
            })?;
            checked += 1;
        }
        Ok(())
    };
    for i1 in [1i64, 3, 5] {
        let p = MonodromyProfile::r_family(i1, &[Turn::float(t1), Turn::rational(3, 7)], &[]).map_err(err)?;
        compare("two rotations", &p, &|m| {
            let phi = i64::from((3 * m) % 7 != 0);
            (m * (i1 - 1) + 2 * e_irr(m, t1) + 2 * e_rat(m, 3, 7) - 3, 3 - 2 * phi)
        })?;
        let p = MonodromyProfile::r_family(i1, &[Turn::float(t2)], &[2.0]).map_err(err)?;
        // Ekeland m(i(y) + 3) + 2E − 5, shifted by n = 3.
        compare("rotation + hyperbolic", &p, &|m| (m * i1 + 2 * e_irr(m, t2) - 5 + 3, 1))?;
        let p = MonodromyProfile::case3(i1, Turn::float(t1)).map_err(err)?;
        compare("N1(-1,1) case", &p, &|m| (m * i1 + 2 * e_irr(m, t1) - 2, 1 + (1 + (-1i64).pow(m as u32)) / 2))?;
    }
    let p = MonodromyProfile::double_n1_minus(3).map_err(err)?;
    compare("N1(1,-1)^⋄2", &p, &|m| (4 * m - 4 + 3, 3))?;
    Ok(format!("{checked} iterates equal"))
}

fn c4_k_values() -> Outcome {
    let t = Turn::float((2f64.sqrt() - 1.0) / 2.0);
    let got = [
        minimal_period_k(&MonodromyProfile::r_family(3, &[t, Turn::rational(3, 7)], &[]).map_err(err)?).map_err(err)?,
        minimal_period_k(&MonodromyProfile::case3(3, t).map_err(err)?).map_err(err)?,
        minimal_period_k(&MonodromyProfile::double_n1_minus(3).map_err(err)?).map_err(err)?,
    ];
    ensure(got == [7, 2, 1], || format!("K = {got:?}"))?;
    Ok(format!("K = {got:?}"))
}

fn c5_chi_hat() -> Outcome {
    // Non-degenerate branches: sign (−1)^{i(y)}, halved when i(y²) − i(y) is odd.
    for i1 in 2..=9i64 {
        let p = MonodromyProfile::r_family(i1, &[Turn::float(0.207_106_781_186_547_5)], &[2.0]).map_err(err)?;
        let seq = index_sequence(&p, 2).map_err(err)?;
        let sign = if seq[0].i % 2 == 0 { 1 } else { -1 };
        let want = if (seq[1].i - seq[0].i) % 2 == 0 { r(sign, 1) } else { r(sign, 2) };
        let got = chi_hat_profile(&p, &[], 1).map_err(err)?.value;
        ensure(got == want, || format!("non-degenerate i1={i1}: {got} ≠ {want}"))?;
    }
    // (N − 1 + k0 − k1 + k2)/N.
    for (l, n) in [(1i64, 2i64), (1, 3), (3, 7), (5, 8)] {
        let p = MonodromyProfile::r_family(3, &[Turn::float(0.118_033_988_749_894_9), Turn::rational(l, n)], &[]).map_err(err)?;
        for k in [[1u32, 0, 0], [0, 0, 1], [0, 0, 0], [0, 1, 0], [0, 5, 0]] {
            let got = chi_hat_profile(&p, &[IterateTypes::new(n as u64, &k)], 1).map_err(err)?.value;
            let want = r(n - 1 + i64::from(k[0]) - i64::from(k[1]) + i64::from(k[2]), n);
            ensure(got == want, || format!("two rotations {l}/{n} k={k:?}: {got} ≠ {want}"))?;
        }
        let forced = forced_types(&p, r(0, 1), 4 * n as u32).map_err(err)?;
        let want = vec![vec![IterateTypes::new(n as u64, &[0, n as u32 - 1, 0])]];
        ensure(forced == want, || format!("χ̂ = 0 at N = {n} allows {forced:?}"))?;
    }
    // (1 + k1(y²))/2.
    let p = MonodromyProfile::case3(3, Turn::float(0.366_025_403_784_438_6)).map_err(err)?;
    for k1 in 0..2u32 {
        let got = chi_hat_profile(&p, &[IterateTypes::new(2, &[0, k1])], 1).map_err(err)?.value;
        ensure(got == r(1 + i64::from(k1), 2), || format!("N1(-1,1) case k1={k1}: {got}"))?;
    }
    Ok("non-degenerate branches, two-rotation and N1(-1,1) forms, k₁(y^N) = N − 1 forced".into())
}

fn verify_jump(p: &MonodromyProfile, t: u64, m: u64) -> Result<(), String> {
    let two_t = 2 * t as i64;
    let at = |k: u64| iterate(p, k).map_err(err);
    let c = at(2 * m)?;
    ensure(c.i_maslov >= two_t - 3, || format!("i(2m) = {} < 2T − 3", c.i_maslov))?;
    ensure(c.i_maslov + i64::from(c.nu) - 1 <= two_t + 1, || "i + ν − 1 > 2T + 1 at 2m".into())?;
    for k in 1..=200 {
        ensure(at(2 * m + k)?.i_maslov >= two_t + 3, || format!("i(2m + {k}) < 2T + 3"))?;
    }
    for k in 1..2 * m {
        let r = at(2 * m - k)?;
        ensure(r.i_maslov + i64::from(r.nu) - 1 <= two_t - 3, || format!("i + ν − 1 > 2T − 3 at 2m − {k}"))?;
    }
    Ok(())
}

fn c6_jump() -> Outcome {
    let start = Instant::now();
    let sets = [
        vec![MonodromyProfile::double_n1_minus(3).map_err(err)?],
        vec![
            MonodromyProfile::r_family(3, &[Turn::float((2f64.sqrt() - 1.0) / 2.0)], &[2.0]).map_err(err)?,
            MonodromyProfile::r_family(3, &[Turn::float((3f64.sqrt() - 1.0) / 2.0)], &[2.0]).map_err(err)?,
        ],
    ];
    let mut found = Vec::new();
    for profiles in &sets {
        let cert = common_jump_search(profiles, JUMP_T_MAX).map_err(err)?;
        for (p, &m) in profiles.iter().zip(&cert.m_list) {
            verify_jump(p, cert.t, m)?;
        }
        found.push(format!("T={} m={:?}", cert.t, cert.m_list));
    }
    let elapsed = start.elapsed();
    ensure(elapsed < JUMP_BUDGET, || format!("took {elapsed:?}"))?;
    Ok(format!("{}, {elapsed:.2?}", found.join("; ")))
}

fn c7_morse() -> Outcome {
    let good = MorseTable::from_columns((0..=40).map(betti).collect());
    let rep = morse_inequalities(&good);
    ensure(rep.odd_vanishing && rep.derived_equality == Some(true), || format!("{rep:?}"))?;
    // An extra even column is caught by the same derivation.
    let mut cols: Vec<u64> = (0..=40).map(betti).collect();
    cols[12] = 2;
    let rep = morse_inequalities(&MorseTable::from_columns(cols));
    ensure(rep.derived_equality == Some(false), || "excess column not detected".into())?;

    let o = LedgerOrbit {
        profile: MonodromyProfile::double_n1_minus(3).map_err(err)?,
        types: vec![IterateTypes::new(1, &[1, 0, 0])],
    };
    let t = morse_counts(&[o], 40).map_err(err)?;
    for q in 0..=40usize {
        ensure(t.m[q] == u64::from(q % 4 == 0), || format!("M_{q} = {}", t.m[q]))?;
    }
    Ok("M_q = b_q derived for q ≤ 40; δ_{4m−4} column pattern reproduced".into())
}

fn c8_scenarios() -> Outcome {
    let half = r(1, 2);
    let want = [("thm1.2-case1", r(1, 4) + r(1, 10) + r(1, 18)), ("thm1.2-case2", r(1, 4) + r(1, 6) + r(1, 14))];
    let mut sups = Vec::new();
    for (label, sup) in want {
        let rep = scenario_check(label, 1e-3).map_err(err)?;
        ensure(rep.supremum == Some(sup), || format!("{label}: supremum {:?}, want {sup}", rep.supremum))?;
        ensure(sup < half && !rep.feasible, || format!("{label} reported feasible"))?;
        let code = Command::new(env!("CARGO_BIN_EXE_sympidx"))
            .args(["scenario-check", "--case", label])
            .output()
            .map_err(err)?
            .status
            .code();
        ensure(code == Some(2), || format!("{label}: exit code {code:?}"))?;
        sups.push(format!("{label}: {sup}"));
    }
    Ok(format!("{} (both < 1/2, exit 2)", sups.join(", ")))
}

fn c9_provenance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut orbits = 0;
    for _ in 0..20 {
        let r1: f64 = rng.random_range(0.5..2.0);
        let a: f64 = rng.random_range(1.1..3.0 / 1.1);
        let r2 = r1 * a;
        let r3 = r2 * rng.random_range(1.1..3.0 / a);
        for orbit in ellipsoid_orbits(&[r1, r2, r3]).map_err(err)? {
            let an = analyze_orbit(orbit, 6000, 10_000).map_err(err)?;
            let (i, mean, e) = (an.index.i_maslov, an.mean_index().unwrap_or(f64::NAN), an.classification.elliptic_height);
            ensure(i >= 3 && mean > 2.0 && e <= 6, || format!("radii ({r1}, {r2}, {r3}): i={i} î={mean} e={e}"))?;
            orbits += 1;
        }
    }
    Ok(format!("{orbits} orbits over 20 radius triples"))
}

fn random_block(rng: &mut ChaCha8Rng) -> BlockLabel {
    match rng.random_range(0..4) {
        0 => BlockLabel::N1 { eig: if rng.random() { 1 } else { -1 }, b: rng.random_range(-1..=1) },
        1 => BlockLabel::R { theta: 2.0 * PI * f64::from(rng.random_range(1u32..60)) / 61.0 },
        2 => {
            let l = 1.25 + 0.25 * f64::from(rng.random_range(0u32..12));
            BlockLabel::Hyperbolic { lambda: if rng.random() { -l } else { l } }
        }
        _ => {
            let z = nalgebra::Complex::from_polar(
                1.3 + 0.3 * f64::from(rng.random_range(0u32..6)),
                PI * f64::from(rng.random_range(1u32..10)) / 10.5,
            );
            BlockLabel::Quadruple { re: z.re, im: z.im }
        }
    }
}

fn same_blocks(a: &[BlockLabel], b: &[BlockLabel]) -> bool {
    let matches = |x: &BlockLabel, y: &BlockLabel| match (*x, *y) {
        (BlockLabel::N1 { eig: e1, b: b1 }, BlockLabel::N1 { eig: e2, b: b2 }) => e1 == e2 && b1 == b2,
        (BlockLabel::R { theta: t1 }, BlockLabel::R { theta: t2 }) => (t1 - t2).abs() < 1e-7,
        (BlockLabel::Hyperbolic { lambda: l1 }, BlockLabel::Hyperbolic { lambda: l2 }) => (l1 - l2).abs() < 1e-7,
        (BlockLabel::Quadruple { re: r1, im: i1 }, BlockLabel::Quadruple { re: r2, im: i2 }) => {
            (r1 - r2).abs() < 1e-7 && (i1 - i2).abs() < 1e-7
        }
        _ => false,
    };
    let mut used = vec![false; b.len()];
    a.len() == b.len()
        && a.iter().all(|x| {
            let hit = b.iter().enumerate().position(|(j, y)| !used[j] && matches(x, y));
            hit.map(|j| used[j] = true).is_some()
        })
}

fn c10_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut draws = 0;
    while draws < 1000 {
        let count = rng.random_range(1..4);
        let bs: Vec<BlockLabel> = (0..count).map(|_| random_block(&mut rng)).collect();
        let n: usize = bs.iter().map(|b| b.dim() / 2).sum();
        if n > 3 {
            continue;
        }
        draws += 1;
        let p = random_symplectic(n, &mut rng, 0.4);
        let m = SymplecticMatrix::new(assemble(&bs)).and_then(|m| m.conjugate_by(&p)).map_err(err)?;
        let eig = floquet_multipliers(&m).map_err(err)?;
        ensure(spectral_asymmetry(&eig) < 1e-6, || format!("{bs:?}: spectrum not symmetric"))?;
        let e = elliptic_height(&m, 1e-8).map_err(err)?.value;
        ensure(e.is_multiple_of(2) && e <= 2 * n, || format!("{bs:?}: e = {e}"))?;
        let dec = classify_blocks(&m, &Tolerances::default()).map_err(err)?;
        ensure(dec.is_complete() && same_blocks(&bs, &dec.blocks), || format!("{bs:?} recovered as {:?}", dec.blocks))?;
    }

    // Each rule fires on a minimal mutation of a legal ledger.
    let seq = [IndexEntry { m: 1, i: 0, nu: 1 }, IndexEntry { m: 2, i: 4, nu: 4 }, IndexEntry { m: 3, i: 9, nu: 3 }];
    let legal = [vec![1], vec![0, 3, 0, 0], vec![0, 0, 1]];
    let mutations: [Mutation; 8] = [
        (1, vec![0, 3, 0, 0, 1], Rule::Support),
        (1, vec![0, 0, 0, 2], Rule::Boundary),
        (1, vec![1, 1, 0, 0], Rule::I),
        (1, vec![0, 0, 1, 1], Rule::Ii),
        (1, vec![0, 2, 0, 1], Rule::Iii),
        (2, vec![0, 1, 1], Rule::Iv),
        (2, vec![1, 0, 0], Rule::V),
        (0, vec![0], Rule::NonDegenerate),
    ];
    let ledger = |k: &[Vec<u32>]| CriticalTypeVector {
        entries: k.iter().enumerate().map(|(j, k)| IterateTypes::new(j as u64 + 1, k)).collect(),
    };
    ensure(validate_ktypes(&ledger(&legal), &seq).map_err(err)?.is_valid(), || "legal ledger rejected".into())?;
    for (at, k, rule) in &mutations {
        let mut types = legal.clone();
        types[*at] = k.clone();
        let rules = validate_ktypes(&ledger(&types), &seq).map_err(err)?.rules();
        ensure(rules.contains(rule), || format!("mutation {k:?} at m={} gave {rules:?}, want {rule}", at + 1))?;
    }

    // Byte-identical CLI reports.
    let dir = tempfile::tempdir().map_err(err)?;
    let cfg = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/ellipsoid.toml");
    let mut reports = Vec::new();
    for run in 0..2 {
        let out = dir.path().join(format!("run{run}.json"));
        let status = Command::new(env!("CARGO_BIN_EXE_sympidx"))
            .arg("orbit-find")
            .arg("-i")
            .arg(&cfg)
            .arg("-o")
            .arg(&out)
            .status()
            .map_err(err)?;
        ensure(status.success(), || format!("orbit-find exited with {status}"))?;
        reports.push((std::fs::read(&out).map_err(err)?, std::fs::read(out.with_extension("csv")).map_err(err)?));
    }
    ensure(reports[0] == reports[1], || "orbit-find reports differ between runs".into())?;
    Ok(format!("{draws} conjugated assemblies, {} rule mutations, deterministic CLI", mutations.len()))
}

fn main() {
    let start = Instant::now();
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("mean index identity", c1_identity),
        ("Floquet oracle", c2_floquet),
        ("iteration formulas", c3_iteration),
        ("K values", c4_k_values),
        ("χ̂ conformance", c5_chi_hat),
        ("common index jump", c6_jump),
        ("Morse bookkeeping", c7_morse),
        ("scenario contradictions", c8_scenarios),
        ("convexity invariants", c9_provenance),
        ("property suites", c10_properties),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", k + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why}", k + 1);
            }
        }
    }
    let elapsed = start.elapsed();
    let within = elapsed < TOTAL_BUDGET;
    println!("{} total runtime {elapsed:.2?} (budget {TOTAL_BUDGET:?})", if within { "PASS" } else { "FAIL" });
    if failed > 0 || !within {
        std::process::exit(1);
    }
}
