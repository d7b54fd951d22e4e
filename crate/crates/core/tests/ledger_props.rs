use num_rational::Rational64;
use proptest::prelude::*;
use symplectic_index::iteration::{MonodromyProfile, Turn};
use symplectic_index::ledger::*;

fn r(p: i64, q: i64) -> Rational64 {
    Rational64::new(p, q)
}

/// A single-iterate ledger: i(y) = 0 at m = 1, then the mutated iterate at
/// m = 2 with the requested nullity and index parity.
fn one(nu: u32, odd: bool, k: Vec<u32>) -> ValidationReport {
    let seq = [IndexEntry { m: 1, i: 0, nu: 1 }, IndexEntry { m: 2, i: if odd { 3 } else { 4 }, nu }];
    let ct = CriticalTypeVector { entries: vec![IterateTypes::new(1, &[1]), IterateTypes { m: 2, nu: None, k }] };
    validate_ktypes(&ct, &seq).unwrap()
}

fn zeros(nu: u32) -> Vec<u32> {
    vec![0; nu as usize]
}

proptest! {
    #[test]
    fn legal_single_entries_pass(nu in 2u32..7, l in 0u32..7, v in 1u32..5) {
        prop_assume!(l < nu);
        let mut k = zeros(nu);
        // End values are capped at 1; interior values are free.
        k[l as usize] = if l == 0 || l == nu - 1 { 1 } else { v };
        prop_assert!(one(nu, false, k).is_valid());
    }

    #[test]
    fn support_mutation(nu in 1u32..6, extra in 0u32..4, v in 1u32..4) {
        let mut k = zeros(nu + extra + 1);
        k[(nu + extra) as usize] = v;
        prop_assert!(one(nu, true, k).rules().contains(&Rule::Support));
    }

    #[test]
    fn boundary_mutation(nu in 2u32..7, v in 2u32..6, top in any::<bool>()) {
        let mut k = zeros(nu);
        k[if top { nu as usize - 1 } else { 0 }] = v;
        prop_assert!(one(nu, false, k).rules().contains(&Rule::Boundary));
    }

    #[test]
    fn rule_i_mutation(nu in 2u32..7, l in 1u32..6, v in 1u32..3) {
        prop_assume!(l < nu);
        let mut k = zeros(nu);
        k[0] = 1;
        k[l as usize] = v;
        prop_assert!(one(nu, false, k).rules().contains(&Rule::I));
    }

    #[test]
    fn rule_ii_mutation(nu in 2u32..7, l in 0u32..5, v in 1u32..3) {
        prop_assume!(l < nu - 1);
        let mut k = zeros(nu);
        k[nu as usize - 1] = 1;
        k[l as usize] = v;
        prop_assert!(one(nu, false, k).rules().contains(&Rule::Ii));
    }

    #[test]
    fn rule_iii_mutation(nu in 3u32..8, l in 1u32..6, v in 1u32..4, top in any::<bool>()) {
        prop_assume!(l < nu - 1);
        let mut k = zeros(nu);
        k[l as usize] = v;
        k[if top { nu as usize - 1 } else { 0 }] = 1;
        prop_assert!(one(nu, false, k).rules().contains(&Rule::Iii));
    }

    #[test]
    fn rule_iv_mutation(nu in 2u32..4, a in 0u32..3, b in 0u32..3) {
        prop_assume!(a < b && b < nu);
        let mut k = zeros(nu);
        k[a as usize] = 1;
        k[b as usize] = 1;
        prop_assert!(one(nu, false, k).rules().contains(&Rule::Iv));
    }

    #[test]
    fn rule_v_mutation(nu in 2u32..7) {
        let mut k = zeros(nu);
        k[0] = 1;
        let rep = one(nu, true, k);
        prop_assert_eq!(rep.rules(), vec![Rule::V]);
    }

    #[test]
    fn non_degenerate_mutation(odd in any::<bool>()) {
        // The wrong k_0 for the parity of i(y^2) − i(y).
        let rep = one(1, odd, vec![u32::from(odd)]);
        prop_assert!(rep.rules().contains(&Rule::NonDegenerate));
    }
}

#[test]
fn chi_hat_non_degenerate_branches() {
    // r_family with one irrational rotation: every iterate is non-degenerate
    // and i(y²) − i(y) has the parity of i1.
    for i1 in 2..=9i64 {
        let p = MonodromyProfile::r_family(i1, &[Turn::float(0.207_106_781_186_547_5)], &[2.0]).unwrap();
        let seq = index_sequence(&p, 2).unwrap();
        let sign = if seq[0].i % 2 == 0 { 1 } else { -1 };
        let want = if (seq[1].i - seq[0].i) % 2 == 0 { r(sign, 1) } else { r(sign, 2) };
        assert_eq!(chi_hat_profile(&p, &[], 1).unwrap().value, want, "i1 = {i1}");
    }
}

#[test]
fn chi_hat_two_rotation_form() {
    // (N − 1 + k0 − k1 + k2)/N for every admissible type vector at m = N.
    for (l, n) in [(1i64, 2i64), (1, 3), (3, 7), (2, 5), (5, 8)] {
        let p = MonodromyProfile::r_family(3, &[Turn::float(0.118_033_988_749_894_9), Turn::rational(l, n)], &[]).unwrap();
        let seq = index_sequence(&p, n as u64).unwrap();
        for k in [[1u32, 0, 0], [0, 0, 1], [0, 0, 0], [0, 1, 0], [0, 4, 0], [0, 9, 0]] {
            let given = [IterateTypes::new(n as u64, &k)];
            let ct = CriticalTypeVector::complete(&seq, &given, 1).unwrap();
            assert!(validate_ktypes(&ct, &seq).unwrap().is_valid(), "{k:?}");
            let want = r(n - 1 + i64::from(k[0]) - i64::from(k[1]) + i64::from(k[2]), n);
            let got = chi_hat_profile(&p, &given, 1).unwrap();
            assert_eq!((got.value, got.k_period), (want, n as u64));
        }
        // χ̂ = 0 leaves only k₁(y^N) = N − 1.
        let forced = forced_types(&p, r(0, 1), 20).unwrap();
        assert_eq!(forced, vec![vec![IterateTypes::new(n as u64, &[0, n as u32 - 1, 0])]]);
    }
}

#[test]
fn chi_hat_case3_form() {
    let p = MonodromyProfile::case3(3, Turn::float(0.366_025_403_784_438_6)).unwrap();
    // ν(y²) = 2, so k₁(y²) is a boundary value.
    for k1 in 0..2u32 {
        let c = chi_hat_profile(&p, &[IterateTypes::new(2, &[0, k1])], 1).unwrap();
        assert_eq!(c.value, r(1 + i64::from(k1), 2));
    }
    assert!(chi_hat_profile(&p, &[IterateTypes::new(2, &[0, 2])], 1).is_err());
    // i(y²) − i(y) is odd, so k₀(y²) must vanish.
    assert!(chi_hat_profile(&p, &[IterateTypes::new(2, &[1, 0])], 1).is_err());
}

fn even_profile() -> impl Strategy<Value = LedgerOrbit> {
    prop_oneof![
        (1i64..5, 0.01f64..0.49).prop_map(|(h, t)| LedgerOrbit {
            // Odd i1 makes i(y) even; non-degenerate iterates then only
            // contribute in even degrees.
            profile: MonodromyProfile::r_family(2 * h + 1, &[Turn::float(t + 1e-7 * std::f64::consts::PI)], &[2.0]).unwrap(),
            types: vec![],
        }),
        any::<bool>().prop_map(|top| LedgerOrbit {
            profile: MonodromyProfile::double_n1_minus(3).unwrap(),
            types: vec![IterateTypes::new(1, if top { &[0, 0, 1] } else { &[1, 0, 0] })],
        }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn even_index_orbits_leave_odd_columns_empty(orbits in prop::collection::vec(even_profile(), 1..4)) {
        let t = morse_counts(&orbits, 40).unwrap();
        for q in (1..=40).step_by(2) {
            prop_assert_eq!(t.m[q], 0, "q = {}", q);
        }
        prop_assert!(morse_inequalities(&t).odd_vanishing);
    }
}

#[test]
fn odd_vanishing_with_inequalities_forces_equality() {
    let t = MorseTable::from_columns((0..=40).map(betti).collect());
    let rep = morse_inequalities(&t);
    assert!(rep.odd_vanishing && rep.passed);
    assert_eq!(rep.derived_equality, Some(true));
    let cols = column_map(&t);
    assert!((0..=40).all(|q| cols[&q].0 == cols[&q].1));
}
