//! Common index jump certificates: one T and iterates m_j placing every
//! orbit's index around 2T.

use std::time::Instant;

use symplectic_index::iteration::{common_jump_search, iterate, MonodromyProfile, Turn};

fn main() -> symplectic_index::Result<()> {
    let sets = [
        ("N1(1,-1)^⋄2", vec![MonodromyProfile::double_n1_minus(3)?]),
        (
            "two irrational rotations",
            vec![
                MonodromyProfile::r_family(3, &[Turn::float((2f64.sqrt() - 1.0) / 2.0)], &[2.0])?,
                MonodromyProfile::r_family(3, &[Turn::float((3f64.sqrt() - 1.0) / 2.0)], &[2.0])?,
            ],
        ),
    ];
    for (name, profiles) in &sets {
        let start = Instant::now();
        let cert = common_jump_search(profiles, 100_000)?;
        println!("{name}: T = {}, m = {:?} ({:?})", cert.t, cert.m_list, start.elapsed());
        for (p, &m) in profiles.iter().zip(&cert.m_list) {
            let at = |k: u64| iterate(p, k).map(|r| (r.i_maslov, r.nu));
            println!("  i,ν at 2m-1, 2m, 2m+1: {:?} {:?} {:?}", at(2 * m - 1)?, at(2 * m)?, at(2 * m + 1)?);
        }
    }
    Ok(())
}
