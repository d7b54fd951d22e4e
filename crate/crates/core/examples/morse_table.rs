//! Equivariant Morse counts of three model orbits against b_q of CP^∞, and
//! the equality forced by vanishing odd columns.

use symplectic_index::iteration::{MonodromyProfile, Turn};
use symplectic_index::ledger::{morse_counts, morse_inequalities, IterateTypes, LedgerOrbit};

fn main() -> symplectic_index::Result<()> {
    let t = |x: f64| Turn::float(x / 2.0);
    let orbits = vec![
        LedgerOrbit {
            profile: MonodromyProfile::double_n1_minus(3)?,
            types: vec![IterateTypes::new(1, &[1, 0, 0])],
        },
        LedgerOrbit { profile: MonodromyProfile::r_family(5, &[t(2f64.sqrt() - 1.0)], &[2.0])?, types: vec![] },
        LedgerOrbit { profile: MonodromyProfile::r_family(9, &[t(3f64.sqrt() - 1.0)], &[2.0])?, types: vec![] },
    ];
    let table = morse_counts(&orbits, 16)?;
    println!(" q  M_q  b_q");
    for q in 0..table.m.len() {
        println!("{q:>2}  {:>3}  {:>3}", table.m[q], table.b[q]);
    }
    let rep = morse_inequalities(&table);
    println!("M_q ≥ b_q fails at {:?}", rep.strong_violations);
    println!("alternating sums fail at {:?}", rep.alternating_violations);
    println!("odd columns vanish: {}; forced equality holds: {:?}", rep.odd_vanishing, rep.derived_equality);
    Ok(())
}
