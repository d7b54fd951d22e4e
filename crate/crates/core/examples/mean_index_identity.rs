//! Σ χ̂/î = 1/2 on an ellipsoid, with everything computed from integrated
//! monodromies, then the same sum for scaled radii.

use symplectic_index::ledger::{chi_hat_profile, identity_check, MeanValue};
use symplectic_index::orbit::{analyze_orbit, ellipsoid_orbits};

fn identity(radii: &[f64]) -> symplectic_index::Result<f64> {
    let mut rows = Vec::new();
    for (j, orbit) in ellipsoid_orbits(radii)?.into_iter().enumerate() {
        let a = analyze_orbit(orbit, 10_000, 10_000)?;
        let profile = a.classification.profile.as_ref().expect("ellipsoid orbits have a profile");
        let chi = chi_hat_profile(profile, &[], j + 1)?;
        let mean = a.mean_index().expect("mean index");
        println!("  orbit {}: i(y,1) = {}  χ̂ = {}  î = {mean:.9}", j + 1, a.index.i_maslov, chi.value);
        rows.push((chi.value, MeanValue::Float { value: mean }));
    }
    let rep = identity_check(&rows)?;
    println!("  Σ χ̂/î = {:.15}  residual {:.2e}", rep.total, rep.residual);
    Ok(rep.residual)
}

fn main() -> symplectic_index::Result<()> {
    let radii = [1.0, 2f64.powf(0.25), 3f64.powf(0.25)];
    for c in [1.0, 0.5, 2.0] {
        println!("radii scaled by {c}:");
        let scaled: Vec<f64> = radii.iter().map(|r| r * c).collect();
        identity(&scaled)?;
    }
    Ok(())
}
