//! Newton shooting on a quartic perturbation of an ellipsoid, starting from
//! the unperturbed circles.

use symplectic_index::orbit::{analyze_orbit, ellipsoid_orbits, refine_orbit, ConvexSurface, NewtonSettings};

fn main() -> symplectic_index::Result<()> {
    let radii = [1.0, 2f64.powf(0.25), 3f64.powf(0.25)];
    let surface = ConvexSurface::perturbed(&radii, 0.02, &[1.0, 0.5, 0.3, 0.7, 0.2, 0.9])?;
    let probe = surface.convexity_probe(1000, 3)?;
    println!("{}: convex = {} (min H″ eigenvalue {:.3})", surface.description(), probe.convex, probe.min_hessian_eigenvalue);

    let settings = NewtonSettings { steps: 4000, ..Default::default() };
    for guess in ellipsoid_orbits(&radii)? {
        let orbit = refine_orbit(&surface, &guess.x0, guess.period, &settings)?;
        let history: Vec<String> = orbit.newton_history.iter().map(|r| format!("{r:.1e}")).collect();
        println!("τ {:.6} → {:.6}   residuals {}", guess.period, orbit.period, history.join(" → "));
        let a = analyze_orbit(orbit, 4000, 10_000)?;
        println!(
            "  i(y,1) = {}  î = {:.6}  elliptic = {}  irrational î = {}",
            a.index.i_maslov,
            a.mean_index().unwrap_or(f64::NAN),
            a.classification.elliptic,
            a.classification.irrational_mean_index
        );
    }
    Ok(())
}
