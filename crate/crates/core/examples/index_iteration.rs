//! Index and nullity of iterates for each monodromy family, with the period
//! K of the critical modules.

use symplectic_index::iteration::{iterate, minimal_period_k, MonodromyProfile, Turn};

fn show(name: &str, p: &MonodromyProfile) -> symplectic_index::Result<()> {
    let rows: Vec<String> = (1..=8)
        .map(|m| iterate(p, m).map(|r| format!("{}/{}", r.i_maslov, r.nu)))
        .collect::<symplectic_index::Result<_>>()?;
    let k = minimal_period_k(p).map(|k| k.to_string()).unwrap_or_else(|e| e.to_string());
    println!("{name:<28} K = {k:<3} i/ν for m = 1..8: {}", rows.join(" "));
    Ok(())
}

fn main() -> symplectic_index::Result<()> {
    let t1 = Turn::float((2f64.sqrt() - 1.0) / 2.0);
    show("R(θ₁) ⋄ R(2π·3/7)", &MonodromyProfile::r_family(3, &[t1, Turn::rational(3, 7)], &[])?)?;
    show("R(θ) ⋄ D(2)", &MonodromyProfile::r_family(5, &[t1], &[2.0])?)?;
    show("R(θ₁) ⋄ N1(-1,1)", &MonodromyProfile::case3(3, t1)?)?;
    show("N1(1,-1)^⋄2", &MonodromyProfile::double_n1_minus(3)?)?;
    Ok(())
}
