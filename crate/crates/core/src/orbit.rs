//! Closed characteristics on convex energy surfaces, their monodromy, and the
//! Maslov-type index of the linearised flow.
//!
//! Surfaces are level sets {q₂ + q₄ = 1} of an ellipsoid quadratic form q₂,
//! optionally bumped by q₄ = ε·Σ c_i x_i⁴. The Hamiltonian is H = g^{α/2}
//! with g the 2-homogeneous gauge of the surface, so H is α-homogeneous and
//! the index of the linearised flow is that of the characteristic itself.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::iteration::{mean_index, rationality_test, MeanIndex, MonodromyProfile, RationalVerdict};
use crate::symplectic::{
    classify_blocks, eigenvalues, floquet_multipliers, rotation, rotation_function, sort_spectrum, standard_form,
    symplectic_residual, BlockDecomposition, BlockLabel, SymplecticMatrix, Tolerances, C64,
};

/// Closure and energy limits for an accepted orbit.
pub const CLOSURE_TOL: f64 = 1e-8;
pub const ENERGY_TOL: f64 = 1e-7;
pub const FLOW_RESIDUAL_TOL: f64 = 1e-6;
/// Energy drift beyond which an integration is refused.
pub const DRIFT_LIMIT: f64 = 1e-5;
/// Symplecticity limit for integrated monodromy checkpoints.
pub const MONODROMY_SYMPLECTIC_TOL: f64 = 1e-7;
pub const MIN_STEPS: usize = 100;

#[derive(Clone, Debug, PartialEq)]
pub enum SurfaceKind {
    Ellipsoid {
        radii: Vec<f64>,
    },
    PerturbedEllipsoid {
        radii: Vec<f64>,
        epsilon: f64,
        /// One coefficient per coordinate x_1..x_{2n}.
        coeffs: Vec<f64>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SurfaceFile", into = "SurfaceFile")]
pub struct ConvexSurface {
    pub kind: SurfaceKind,
    pub alpha: f64,
}

/// Flat on-disk form: `kind`, `radii`, optional `epsilon`/`coeffs`, `alpha`.
#[derive(Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SurfaceFile {
    kind: String,
    radii: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    coeffs: Option<Vec<f64>>,
    #[serde(default = "default_alpha")]
    alpha: f64,
}

fn default_alpha() -> f64 {
    2.0
}

impl From<ConvexSurface> for SurfaceFile {
    fn from(s: ConvexSurface) -> Self {
        match s.kind {
            SurfaceKind::Ellipsoid { radii } => {
                SurfaceFile { kind: "ellipsoid".into(), radii, epsilon: None, coeffs: None, alpha: s.alpha }
            }
            SurfaceKind::PerturbedEllipsoid { radii, epsilon, coeffs } => SurfaceFile {
                kind: "perturbed_ellipsoid".into(),
                radii,
                epsilon: Some(epsilon),
                coeffs: Some(coeffs),
                alpha: s.alpha,
            },
        }
    }
}

impl TryFrom<SurfaceFile> for ConvexSurface {
    type Error = Error;

    fn try_from(f: SurfaceFile) -> Result<Self> {
        let kind = match (f.kind.as_str(), f.epsilon, f.coeffs) {
            ("ellipsoid", None, None) => SurfaceKind::Ellipsoid { radii: f.radii },
            ("ellipsoid", _, _) => return Err(Error::Config("an ellipsoid takes no epsilon or coeffs".into())),
            ("perturbed_ellipsoid", Some(epsilon), Some(coeffs)) => {
                SurfaceKind::PerturbedEllipsoid { radii: f.radii, epsilon, coeffs }
            }
            ("perturbed_ellipsoid", _, _) => {
                return Err(Error::Config("perturbed_ellipsoid needs epsilon and coeffs".into()))
            }
            (other, _, _) => return Err(Error::Config(format!("unknown surface kind `{other}`"))),
        };
        let s = ConvexSurface { kind, alpha: f.alpha };
        s.validate()?;
        Ok(s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvexityReport {
    pub samples: usize,
    pub min_value: f64,
    /// Smallest eigenvalue of H″ over the sampled shell.
    pub min_hessian_eigenvalue: f64,
    pub convex: bool,
}

impl ConvexSurface {
    pub fn ellipsoid(radii: &[f64]) -> Result<Self> {
        let s = ConvexSurface { kind: SurfaceKind::Ellipsoid { radii: radii.to_vec() }, alpha: 2.0 };
        s.validate()?;
        Ok(s)
    }

    pub fn perturbed(radii: &[f64], epsilon: f64, coeffs: &[f64]) -> Result<Self> {
        let s = ConvexSurface {
            kind: SurfaceKind::PerturbedEllipsoid { radii: radii.to_vec(), epsilon, coeffs: coeffs.to_vec() },
            alpha: 2.0,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn with_alpha(mut self, alpha: f64) -> Result<Self> {
        self.alpha = alpha;
        self.validate()?;
        Ok(self)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    fn validate(&self) -> Result<()> {
        let radii = self.radii();
        if radii.is_empty() || radii.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return Err(Error::Input(format!("radii must be positive, got {radii:?}")));
        }
        if !(self.alpha > 1.0 && self.alpha <= 2.0) {
            return Err(Error::Input(format!("alpha = {} must lie in (1, 2]", self.alpha)));
        }
        if let SurfaceKind::PerturbedEllipsoid { coeffs, epsilon, .. } = &self.kind {
            if coeffs.len() != 2 * radii.len() {
                return Err(Error::Input(format!(
                    "perturbation needs {} coefficients (one per coordinate), got {}",
                    2 * radii.len(),
                    coeffs.len()
                )));
            }
            if !epsilon.is_finite() {
                return Err(Error::Input("epsilon must be finite".into()));
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.radii().len()
    }

    pub fn radii(&self) -> &[f64] {
        match &self.kind {
            SurfaceKind::Ellipsoid { radii } | SurfaceKind::PerturbedEllipsoid { radii, .. } => radii,
        }
    }

    pub fn description(&self) -> String {
        match &self.kind {
            SurfaceKind::Ellipsoid { radii } => format!("ellipsoid radii {radii:?}, alpha {}", self.alpha),
            SurfaceKind::PerturbedEllipsoid { radii, epsilon, coeffs } => {
                format!("ellipsoid radii {radii:?} + {epsilon}·Σ c_i x_i⁴ with c = {coeffs:?}, alpha {}", self.alpha)
            }
        }
    }

    fn quartic(&self) -> Option<(f64, &[f64])> {
        match &self.kind {
            SurfaceKind::PerturbedEllipsoid { epsilon, coeffs, .. } if *epsilon != 0.0 => Some((*epsilon, coeffs)),
            _ => None,
        }
    }

    /// The 2-homogeneous gauge g with Σ = {g = 1}, its gradient and Hessian.
    /// With q₂ the quadratic part and q₄ the quartic bump,
    /// g = (q₂ + √(q₂² + 4q₄))/2, which reduces to q₂ for ellipsoids.
    fn gauge(&self, x: &[f64]) -> (f64, DVector<f64>, DMatrix<f64>) {
        let radii = self.radii();
        let n = radii.len();
        let dim = 2 * n;
        let mut q2 = 0.0;
        let mut g2 = DVector::zeros(dim);
        let mut h2 = DVector::zeros(dim);
        for i in 0..dim {
            let w = 1.0 / (radii[i % n] * radii[i % n]);
            q2 += w * x[i] * x[i];
            g2[i] = 2.0 * w * x[i];
            h2[i] = 2.0 * w;
        }
        let Some((eps, c)) = self.quartic() else {
            return (q2, g2, DMatrix::from_diagonal(&h2));
        };
        let mut q4 = 0.0;
        let mut g4 = DVector::zeros(dim);
        let mut h4 = DVector::zeros(dim);
        for i in 0..dim {
            q4 += eps * c[i] * x[i].powi(4);
            g4[i] = 4.0 * eps * c[i] * x[i].powi(3);
            h4[i] = 12.0 * eps * c[i] * x[i] * x[i];
        }
        let r = (q2 * q2 + 4.0 * q4).sqrt();
        let u = &g2 * q2 + &g4 * 2.0;
        let g = 0.5 * (q2 + r);
        let grad = (&g2 + &u / r) * 0.5;
        let hu = &g2 * g2.transpose() + DMatrix::from_diagonal(&(&h2 * q2 + &h4 * 2.0));
        let hess = (DMatrix::from_diagonal(&h2) + hu / r - &u * u.transpose() / (r * r * r)) * 0.5;
        (g, grad, hess)
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.gauge(x).0.powf(self.alpha / 2.0)
    }

    pub fn gradient(&self, x: &[f64]) -> DVector<f64> {
        let (q, g, _) = self.gauge(x);
        let a = self.alpha / 2.0;
        g * (a * q.powf(a - 1.0))
    }

    pub fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        let (q, g, h) = self.gauge(x);
        let a = self.alpha / 2.0;
        let mut hess = h * (a * q.powf(a - 1.0));
        if a != 1.0 {
            hess += &g * g.transpose() * (a * (a - 1.0) * q.powf(a - 2.0));
        }
        hess
    }

    /// J·H′(x).
    pub fn vector_field(&self, x: &[f64]) -> DVector<f64> {
        apply_j(&self.gradient(x))
    }

    /// Scale x along its ray onto H = 1.
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        let g = self.gauge(x).0;
        if !(g > 0.0 && g.is_finite()) {
            return Err(Error::Input("point cannot be projected onto the energy surface".into()));
        }
        let l = 1.0 / g.sqrt();
        Ok(x.iter().map(|v| v * l).collect())
    }

    /// Positivity of H and of H″ on a shell 0.95..1.05 around H⁻¹(1).
    pub fn convexity_probe(&self, samples: usize, seed: u64) -> Result<ConvexityReport> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dim = 2 * self.n();
        let mut min_value = f64::INFINITY;
        let mut min_eig = f64::INFINITY;
        for _ in 0..samples {
            let u: Vec<f64> = loop {
                let u: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
                if u.iter().map(|v| v * v).sum::<f64>() > 1e-6 {
                    break u;
                }
            };
            let on = self.project(&u)?;
            let shell: f64 = rng.random_range(0.95..1.05);
            let x: Vec<f64> = on.iter().map(|v| v * shell).collect();
            min_value = min_value.min(self.value(&x));
            let eig = SymmetricEigen::new(self.hessian(&x)).eigenvalues;
            min_eig = min_eig.min(eig.min());
        }
        Ok(ConvexityReport {
            samples,
            min_value,
            min_hessian_eigenvalue: min_eig,
            convex: min_value > 0.0 && min_eig > 0.0,
        })
    }
}

fn apply_j(v: &DVector<f64>) -> DVector<f64> {
    let n = v.len() / 2;
    DVector::from_fn(2 * n, |i, _| if i < n { -v[i + n] } else { v[i - n] })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    pub energy_drift: f64,
}

fn rk4_step(s: &ConvexSurface, x: &DVector<f64>, h: f64) -> DVector<f64> {
    let f = |y: &DVector<f64>| s.vector_field(y.as_slice());
    let k1 = f(x);
    let k2 = f(&(x + &k1 * (h / 2.0)));
    let k3 = f(&(x + &k2 * (h / 2.0)));
    let k4 = f(&(x + &k3 * h));
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

fn integrate_raw(s: &ConvexSurface, x0: &[f64], t_end: f64, steps: usize) -> Trajectory {
    let mut x = DVector::from_column_slice(x0);
    let h0 = s.value(x0);
    let mut times = vec![0.0];
    let mut points = vec![x0.to_vec()];
    let mut drift: f64 = 0.0;
    if t_end != 0.0 {
        let h = t_end / steps as f64;
        for k in 1..=steps {
            x = rk4_step(s, &x, h);
            drift = drift.max((s.value(x.as_slice()) - h0).abs());
            times.push(h * k as f64);
            points.push(x.as_slice().to_vec());
        }
    }
    Trajectory { times, points, energy_drift: drift }
}

/// Classical fixed-step RK4 for ẋ = J H′(x).
pub fn flow_integrate(s: &ConvexSurface, x0: &[f64], t_end: f64, steps: usize) -> Result<Trajectory> {
    if x0.len() != 2 * s.n() {
        return Err(Error::Input(format!("x0 has {} coordinates, expected {}", x0.len(), 2 * s.n())));
    }
    let e = s.value(x0);
    if !((e - 1.0).abs() <= 1e-9) {
        return Err(Error::Input(format!("H(x0) = {e:.12} is not on the energy level 1")));
    }
    if steps < MIN_STEPS {
        return Err(Error::Input(format!("steps = {steps} is below the minimum {MIN_STEPS}")));
    }
    let traj = integrate_raw(s, x0, t_end, steps);
    if traj.energy_drift > DRIFT_LIMIT {
        return Err(Error::Accuracy(format!(
            "energy drift {:.3e} exceeds {DRIFT_LIMIT:.0e}; increase the number of steps",
            traj.energy_drift
        )));
    }
    Ok(traj)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClosedOrbit {
    pub surface: ConvexSurface,
    pub period: f64,
    pub x0: Vec<f64>,
    #[serde(skip)]
    pub samples: Trajectory,
    pub closure_residual: f64,
    pub energy_drift: f64,
    /// max ‖ẏ − J H′(y)‖ with ẏ from a periodic 4th-order difference.
    pub flow_residual: f64,
    pub steps: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub newton_history: Vec<f64>,
}

impl Default for Trajectory {
    fn default() -> Self {
        Trajectory { times: vec![], points: vec![], energy_drift: 0.0 }
    }
}

impl ClosedOrbit {
    pub fn check_accepted(&self) -> Result<()> {
        if !(self.closure_residual <= CLOSURE_TOL) {
            return Err(Error::Accuracy(format!("closure residual {:.3e} exceeds {CLOSURE_TOL:.0e}", self.closure_residual)));
        }
        if !(self.energy_drift <= ENERGY_TOL) {
            return Err(Error::Accuracy(format!("energy drift {:.3e} exceeds {ENERGY_TOL:.0e}", self.energy_drift)));
        }
        if !(self.flow_residual <= FLOW_RESIDUAL_TOL) {
            return Err(Error::Accuracy(format!("flow residual {:.3e} exceeds {FLOW_RESIDUAL_TOL:.0e}", self.flow_residual)));
        }
        Ok(())
    }

    fn from_trajectory(s: &ConvexSurface, x0: Vec<f64>, period: f64, traj: Trajectory, history: Vec<f64>) -> Self {
        let last = traj.points.last().unwrap();
        let closure = x0.iter().zip(last).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let flow_residual = flow_residual(s, &traj, period);
        ClosedOrbit {
            surface: s.clone(),
            period,
            x0,
            steps: traj.points.len() - 1,
            energy_drift: traj.energy_drift,
            samples: traj,
            closure_residual: closure,
            flow_residual,
            newton_history: history,
        }
    }

    /// CSV rows t, x1..x_{2n}.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut w = w;
        let dim = self.x0.len();
        let header: Vec<String> = std::iter::once("t".to_string()).chain((1..=dim).map(|i| format!("x{i}"))).collect();
        writeln!(w, "{}", header.join(","))?;
        for (t, p) in self.samples.times.iter().zip(&self.samples.points) {
            let row: Vec<String> = std::iter::once(format!("{t:.17e}")).chain(p.iter().map(|v| format!("{v:.17e}"))).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

fn flow_residual(s: &ConvexSurface, traj: &Trajectory, period: f64) -> f64 {
    let n = traj.points.len().saturating_sub(1);
    if n < 5 || period == 0.0 {
        return 0.0;
    }
    let h = period / n as f64;
    // Periodic index: point n coincides with point 0.
    let at = |i: isize| -> &Vec<f64> { &traj.points[i.rem_euclid(n as isize) as usize] };
    let mut worst: f64 = 0.0;
    for i in 0..n as isize {
        let f = s.vector_field(at(i));
        let mut r2 = 0.0;
        for k in 0..f.len() {
            let d = (-at(i + 2)[k] + 8.0 * at(i + 1)[k] - 8.0 * at(i - 1)[k] + at(i - 2)[k]) / (12.0 * h);
            r2 += (d - f[k]).powi(2);
        }
        worst = worst.max(r2.sqrt());
    }
    worst
}

/// The n planar circles of an ellipsoid: orbit k lies in the (x_k, y_k)
/// plane with radius r_k and period 2π r_k²/α.
pub fn analytic_orbits(s: &ConvexSurface, samples: usize) -> Result<Vec<ClosedOrbit>> {
    let SurfaceKind::Ellipsoid { radii } = &s.kind else {
        return Err(Error::Input("closed-form orbits exist only for ellipsoids".into()));
    };
    for (i, a) in radii.iter().enumerate() {
        for b in &radii[i + 1..] {
            if ((a * a) / (b * b) - 1.0).abs() < 1e-12 {
                return Err(Error::Input(format!(
                    "coincident radii {a} and {b}: closed characteristics are not isolated"
                )));
            }
        }
    }
    let n = radii.len();
    let samples = samples.max(5);
    Ok(radii
        .iter()
        .enumerate()
        .map(|(k, &r)| {
            let period = 2.0 * PI * r * r / s.alpha;
            let omega = 2.0 * PI / period;
            let mut times = Vec::with_capacity(samples + 1);
            let mut points = Vec::with_capacity(samples + 1);
            for i in 0..=samples {
                let t = period * i as f64 / samples as f64;
                let mut p = vec![0.0; 2 * n];
                p[k] = r * (omega * t).cos();
                p[k + n] = r * (omega * t).sin();
                times.push(t);
                points.push(p);
            }
            let drift = points.iter().map(|p| (s.value(p) - 1.0).abs()).fold(0.0, f64::max);
            let mut x0 = vec![0.0; 2 * n];
            x0[k] = r;
            ClosedOrbit::from_trajectory(s, x0, period, Trajectory { times, points, energy_drift: drift }, vec![])
        })
        .collect())
}

pub fn ellipsoid_orbits(radii: &[f64]) -> Result<Vec<ClosedOrbit>> {
    analytic_orbits(&ConvexSurface::ellipsoid(radii)?, 1000)
}

/// Joint RK4 for (x, W) with ẋ = J H′(x), Ẇ = J H″(x) W; returns the end
/// state, and W at every step.
fn variational(s: &ConvexSurface, x0: &[f64], t_end: f64, steps: usize) -> (DVector<f64>, Vec<DMatrix<f64>>, f64) {
    let dim = x0.len();
    let j = standard_form(dim / 2);
    let field = |x: &DVector<f64>, w: &DMatrix<f64>| -> (DVector<f64>, DMatrix<f64>) {
        (s.vector_field(x.as_slice()), &j * s.hessian(x.as_slice()) * w)
    };
    let h = t_end / steps as f64;
    let mut x = DVector::from_column_slice(x0);
    let mut w = DMatrix::<f64>::identity(dim, dim);
    let e0 = s.value(x0);
    let mut drift: f64 = 0.0;
    let mut path = Vec::with_capacity(steps + 1);
    path.push(w.clone());
    for _ in 0..steps {
        let (k1x, k1w) = field(&x, &w);
        let (k2x, k2w) = field(&(&x + &k1x * (h / 2.0)), &(&w + &k1w * (h / 2.0)));
        let (k3x, k3w) = field(&(&x + &k2x * (h / 2.0)), &(&w + &k2w * (h / 2.0)));
        let (k4x, k4w) = field(&(&x + &k3x * h), &(&w + &k3w * h));
        x += (k1x + k2x * 2.0 + k3x * 2.0 + k4x) * (h / 6.0);
        w += (k1w + k2w * 2.0 + k3w * 2.0 + k4w) * (h / 6.0);
        drift = drift.max((s.value(x.as_slice()) - e0).abs());
        path.push(w.clone());
    }
    (x, path, drift)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NewtonSettings {
    pub tol: f64,
    pub max_iter: usize,
    pub steps: usize,
}

impl Default for NewtonSettings {
    fn default() -> Self {
        NewtonSettings { tol: 1e-10, max_iter: 30, steps: 2000 }
    }
}

/// Gauss–Newton shooting on (x0, τ): φ_τ(x0) = x0, H(x0) = 1, and the
/// phase condition ⟨x0 − x_ref, ẋ_ref⟩ = 0.
pub fn refine_orbit(s: &ConvexSurface, x_guess: &[f64], period_guess: f64, settings: &NewtonSettings) -> Result<ClosedOrbit> {
    let dim = 2 * s.n();
    if x_guess.len() != dim {
        return Err(Error::Input(format!("guess has {} coordinates, expected {dim}", x_guess.len())));
    }
    if !(period_guess > 0.0) {
        return Err(Error::Input("period guess must be positive".into()));
    }
    let steps = settings.steps.max(MIN_STEPS);
    let diameter = 2.0 * s.radii().iter().cloned().fold(0.0, f64::max);
    let x_ref = s.project(x_guess)?;
    let f_ref = s.vector_field(&x_ref);

    let mut x = DVector::from_vec(x_ref.clone());
    let mut tau = period_guess;
    let residual = |x: &DVector<f64>, tau: f64| -> (DVector<f64>, DVector<f64>, Vec<DMatrix<f64>>) {
        let (end, path, _) = variational(s, x.as_slice(), tau, steps);
        let mut r = DVector::zeros(dim + 2);
        for i in 0..dim {
            r[i] = end[i] - x[i];
        }
        r[dim] = s.value(x.as_slice()) - 1.0;
        r[dim + 1] = (x - DVector::from_column_slice(&x_ref)).dot(&f_ref);
        (r, end, path)
    };

    let (mut r, mut end, mut path) = residual(&x, tau);
    let closure0 = r.rows(0, dim).norm();
    let mut history = vec![closure0];
    if !(closure0 < 0.1 * diameter) {
        return Err(Error::NonConvergence { iterations: 0, history });
    }
    for it in 0..=settings.max_iter {
        let closure = r.rows(0, dim).norm();
        if closure <= settings.tol && r[dim].abs() <= settings.tol {
            let traj = integrate_raw(s, x.as_slice(), tau, steps);
            return Ok(ClosedOrbit::from_trajectory(s, x.as_slice().to_vec(), tau, traj, history));
        }
        if it == settings.max_iter {
            break;
        }
        let phi = path.last().unwrap();
        let mut jac = DMatrix::zeros(dim + 2, dim + 1);
        jac.view_mut((0, 0), (dim, dim)).copy_from(&(phi - DMatrix::<f64>::identity(dim, dim)));
        jac.view_mut((0, dim), (dim, 1)).copy_from(&s.vector_field(end.as_slice()));
        jac.view_mut((dim, 0), (1, dim)).copy_from(&s.gradient(x.as_slice()).transpose());
        jac.view_mut((dim + 1, 0), (1, dim)).copy_from(&f_ref.transpose());
        let svd = jac.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        if smin <= 1e-12 * smax.max(1.0) {
            return Err(Error::Degenerate { sigma: smin });
        }
        let step = svd.solve(&(-&r), 0.0).map_err(|e| Error::Input(e.to_string()))?;
        // Backtrack when a full step makes things worse.
        let mut lambda = 1.0;
        let norm0 = r.norm();
        loop {
            let xn = &x + step.rows(0, dim) * lambda;
            let tn = tau + step[dim] * lambda;
            if tn > 0.0 {
                let (rn, en, pn) = residual(&xn, tn);
                if rn.norm() < norm0 || lambda < 1e-3 {
                    x = xn;
                    tau = tn;
                    r = rn;
                    end = en;
                    path = pn;
                    break;
                }
            }
            lambda /= 2.0;
            if lambda < 1e-3 {
                return Err(Error::NonConvergence { iterations: it + 1, history });
            }
        }
        history.push(r.rows(0, dim).norm());
        if !history.last().unwrap().is_finite() {
            return Err(Error::NonConvergence { iterations: it + 1, history });
        }
    }
    Err(Error::NonConvergence { iterations: settings.max_iter, history })
}

#[derive(Clone, Debug, Serialize)]
pub struct MonodromyResult {
    pub gamma_tau: SymplecticMatrix,
    pub multipliers: Vec<C64>,
    pub integration_steps: usize,
    pub sympl_residual: f64,
    /// Largest symplecticity residual over all stored checkpoints.
    pub checkpoint_residual: f64,
    /// γ(t) at every step; the path used for the index.
    #[serde(skip)]
    pub path: Vec<DMatrix<f64>>,
}

impl MonodromyResult {
    /// Wrap a given monodromy matrix (no path).
    pub fn from_matrix(m: SymplecticMatrix) -> Result<Self> {
        let multipliers = floquet_multipliers(&m)?;
        Ok(MonodromyResult {
            sympl_residual: m.sympl_residual(),
            checkpoint_residual: m.sympl_residual(),
            gamma_tau: m,
            multipliers,
            integration_steps: 0,
            path: vec![],
        })
    }
}

/// Raw γ(τ) without acceptance checks, for convergence studies.
pub fn monodromy_matrix(orbit: &ClosedOrbit, steps: usize) -> DMatrix<f64> {
    variational(&orbit.surface, &orbit.x0, orbit.period, steps).1.pop().unwrap()
}

pub fn monodromy(orbit: &ClosedOrbit, steps: usize) -> Result<MonodromyResult> {
    orbit.check_accepted()?;
    if steps < MIN_STEPS {
        return Err(Error::Input(format!("steps = {steps} is below the minimum {MIN_STEPS}")));
    }
    let (_, path, _) = variational(&orbit.surface, &orbit.x0, orbit.period, steps);
    // Checkpoints: every 1% of the path plus the endpoint.
    let stride = (steps / 100).max(1);
    let mut worst: f64 = 0.0;
    for (i, w) in path.iter().enumerate() {
        if i % stride == 0 || i == steps {
            let r = symplectic_residual(w);
            worst = worst.max(r);
            if r > MONODROMY_SYMPLECTIC_TOL {
                return Err(Error::Accuracy(format!(
                    "linearised flow loses symplecticity ({r:.3e}) at step {i}; increase the number of steps"
                )));
            }
        }
    }
    let gamma = SymplecticMatrix::with_tolerance(path.last().unwrap().clone(), MONODROMY_SYMPLECTIC_TOL)?;
    let multipliers = floquet_multipliers(&gamma)?;
    Ok(MonodromyResult {
        sympl_residual: gamma.sympl_residual(),
        gamma_tau: gamma,
        multipliers,
        integration_steps: steps,
        checkpoint_residual: worst,
        path,
    })
}

/// Closed-form multipliers of ellipsoid orbit k: {1, 1} ∪ {e^{±2πi r_k²/r_j²}}.
pub fn ellipsoid_multipliers(radii: &[f64], k: usize) -> Vec<C64> {
    let mut out = vec![C64::new(1.0, 0.0); 2];
    for (j, r) in radii.iter().enumerate() {
        if j != k {
            let a = 2.0 * PI * radii[k] * radii[k] / (r * r);
            out.push(C64::from_polar(1.0, a));
            out.push(C64::from_polar(1.0, -a));
        }
    }
    sort_spectrum(&mut out);
    out
}

/// Largest distance in a greedy nearest matching between two multisets.
pub fn multiset_distance(a: &[C64], b: &[C64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    let mut used = vec![false; b.len()];
    let mut worst: f64 = 0.0;
    for z in a {
        let (i, d) = b
            .iter()
            .enumerate()
            .filter(|(i, _)| !used[*i])
            .map(|(i, w)| (i, (w - z).norm()))
            .min_by(|x, y| x.1.total_cmp(&y.1))
            .unwrap();
        used[i] = true;
        worst = worst.max(d);
    }
    worst
}

// ---------------------------------------------------------------------------
// Maslov-type index by the rotation function.

#[derive(Clone, Debug, Serialize)]
pub struct CZIndexResult {
    pub i_maslov: i64,
    pub i_ekeland: i64,
    /// dim ker(γ(τ) − I).
    pub nu: u32,
    /// Algebraic multiplicity of 1 exceeds 2.
    pub degenerate: bool,
    /// [i, i + ν − 1] when degenerate.
    pub interval: Option<(i64, i64)>,
    /// Total winding of arg ρ in units of π before rounding.
    pub winding: f64,
    /// Continuous arg ρ along the sampled path (decimated).
    pub winding_trace: Vec<f64>,
    /// Size of the e^{−εJ} push off the degenerate endpoint.
    pub epsilon: f64,
}

const MAX_JUMP: f64 = PI / 2.0;
const REFINE_JUMP: f64 = PI / 4.0;

fn wrap(a: f64) -> f64 {
    let mut d = a % (2.0 * PI);
    if d > PI {
        d -= 2.0 * PI;
    } else if d <= -PI {
        d += 2.0 * PI;
    }
    d
}

/// Winding of arg ρ along s ↦ f(s), s ∈ [0,1], bisecting until successive
/// samples differ by less than π/4.
fn track<F: Fn(f64) -> DMatrix<f64>>(f: &F, trace: &mut Vec<f64>) -> Result<f64> {
    fn rec<F: Fn(f64) -> DMatrix<f64>>(f: &F, a: f64, b: f64, za: C64, zb: C64, depth: u32, out: &mut Vec<f64>) -> Result<f64> {
        let d = wrap(zb.arg() - za.arg());
        if d.abs() <= REFINE_JUMP || (za.norm() > 0.0 && zb.norm() > 0.0 && depth >= 40) {
            if d.abs() > MAX_JUMP {
                return Err(Error::Resolution { index: out.len(), jump: d.abs() });
            }
            out.push(d);
            return Ok(d);
        }
        let m = 0.5 * (a + b);
        let zm = rotation_function(&f(m));
        Ok(rec(f, a, m, za, zm, depth + 1, out)? + rec(f, m, b, zm, zb, depth + 1, out)?)
    }
    let k = 16;
    let mut total = 0.0;
    let mut prev = rotation_function(&f(0.0));
    for i in 1..=k {
        let s = i as f64 / k as f64;
        let z = rotation_function(&f(s));
        total += rec(f, (i - 1) as f64 / k as f64, s, prev, z, 0, trace)?;
        prev = z;
    }
    Ok(total)
}

/// Winding along stored samples; no refinement is possible.
fn track_samples(path: &[DMatrix<f64>], trace: &mut Vec<f64>) -> Result<f64> {
    let mut total = 0.0;
    let mut prev = rotation_function(&path[0]);
    for (i, m) in path.iter().enumerate().skip(1) {
        let z = rotation_function(m);
        let d = wrap(z.arg() - prev.arg());
        if d.abs() > MAX_JUMP {
            return Err(Error::Resolution { index: i, jump: d.abs() });
        }
        total += d;
        trace.push(d);
        prev = z;
    }
    Ok(total)
}

/// Eigen-decomposition U = V diag(e^{iα}) Vᴴ of a unitary matrix through a
/// Hermitian combination of its real and imaginary parts.
fn unitary_angles(u: &DMatrix<C64>) -> Result<(DMatrix<C64>, Vec<f64>)> {
    let uh = u.adjoint();
    let herm_re = (u + &uh) * C64::new(0.5, 0.0);
    let herm_im = (u - &uh) * C64::new(0.0, -0.5);
    for c in [std::f64::consts::SQRT_2, 0.327_429_1, 2.645_751_3, -1.732_050_807] {
        let k = &herm_re + &herm_im * C64::new(c, 0.0);
        let k = (&k + k.adjoint()) * C64::new(0.5, 0.0);
        let eig = SymmetricEigen::new(k);
        let v = eig.eigenvectors;
        let d = v.adjoint() * u * &v;
        let off = (0..d.nrows())
            .flat_map(|i| (0..d.ncols()).map(move |j| (i, j)))
            .filter(|(i, j)| i != j)
            .map(|(i, j)| d[(i, j)].norm())
            .fold(0.0, f64::max);
        if off < 1e-8 {
            let angles = (0..d.nrows()).map(|i| d[(i, i)].arg()).collect();
            return Ok((v, angles));
        }
    }
    Err(Error::Resolution { index: 0, jump: PI })
}

/// Real symplectic embedding [[A, −B], [B, A]] of A + iB.
fn realify(u: &DMatrix<C64>) -> DMatrix<f64> {
    let n = u.nrows();
    DMatrix::from_fn(2 * n, 2 * n, |i, j| {
        let z = u[(i % n, j % n)];
        match (i < n, j < n) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    })
}

fn place(out: &mut DMatrix<f64>, part: &DMatrix<f64>, idx: &[usize]) {
    let n = out.nrows() / 2;
    let k = idx.len();
    let map = |i: usize| if i < k { idx[i] } else { n + idx[i - k] };
    for i in 0..2 * k {
        for j in 0..2 * k {
            out[(map(i), map(j))] = part[(i, j)];
        }
    }
}

fn hyp(l: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[l, 0.0, 0.0, 1.0 / l])
}

fn quad(modulus: f64, psi: f64) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(4, 4);
    m.view_mut((0, 0), (2, 2)).copy_from(&(rotation(psi) * modulus));
    m.view_mut((2, 2), (2, 2)).copy_from(&(rotation(psi) / modulus));
    m
}

#[derive(Clone)]
struct NormalPiece {
    label: BlockLabel,
    idx: Vec<usize>,
}

/// Homotopy of a non-degenerate normal form to W₊ = −I or W₋ = D(2) ⋄ −I
/// inside Sp*(2n), as a list of stages s ∈ [0,1] ↦ matrix.
fn normal_form_stages(pieces: &[NormalPiece], n: usize) -> Result<Vec<Box<dyn Fn(f64) -> DMatrix<f64>>>> {
    for p in pieces {
        if let BlockLabel::N1 { eig: 1, .. } = p.label {
            return Err(Error::Structure("endpoint still has eigenvalue 1".into()));
        }
    }
    let positive: Vec<usize> = pieces
        .iter()
        .filter(|p| matches!(p.label, BlockLabel::Hyperbolic { lambda } if lambda > 0.0))
        .map(|p| p.idx[0])
        .collect();
    let pairs: Vec<(usize, usize)> = positive.chunks(2).filter(|c| c.len() == 2).map(|c| (c[0], c[1])).collect();
    let lone = if positive.len() % 2 == 1 { positive.last().copied() } else { None };

    let pieces1 = pieces.to_vec();
    // Stage 1: angles to π, N1(−1,b) shear to 0, hyperbolic moduli to 1 or 2.
    let stage1 = move |s: f64| {
        let mut out = DMatrix::zeros(2 * n, 2 * n);
        for p in &pieces1 {
            let part = match p.label {
                BlockLabel::R { theta } => rotation(theta + s * (PI - theta)),
                BlockLabel::N1 { eig, b } => {
                    DMatrix::from_row_slice(2, 2, &[f64::from(eig), (1.0 - s) * f64::from(b), 0.0, f64::from(eig)])
                }
                BlockLabel::Hyperbolic { lambda } if lambda < 0.0 => hyp(lambda + s * (-1.0 - lambda)),
                BlockLabel::Hyperbolic { lambda } => hyp(lambda + s * (2.0 - lambda)),
                BlockLabel::Quadruple { re, im } => {
                    let z = Complex::new(re, im);
                    quad(z.norm(), z.arg() + s * (PI - z.arg()))
                }
            };
            place(&mut out, &part, &p.idx);
        }
        out
    };
    let pieces2 = pieces.to_vec();
    // Stage 2: quadruples (now −ρ·I on their planes) contract to −I.
    let stage2 = move |s: f64| {
        let mut out = DMatrix::zeros(2 * n, 2 * n);
        for p in &pieces2 {
            let part = match p.label {
                BlockLabel::Quadruple { re, im } => {
                    let r = Complex::new(re, im).norm();
                    quad(r + s * (1.0 - r), PI)
                }
                BlockLabel::Hyperbolic { lambda } if lambda > 0.0 => hyp(2.0),
                _ => -DMatrix::<f64>::identity(2, 2),
            };
            place(&mut out, &part, &p.idx);
        }
        out
    };
    let base = {
        let mut out = -DMatrix::<f64>::identity(2 * n, 2 * n);
        for &k in &positive {
            place(&mut out, &hyp(2.0), &[k]);
        }
        out
    };
    let pairs3 = pairs.clone();
    let base3 = base.clone();
    // Stage 3: each D(2) ⋄ D(2) pair rotates into D(−2) ⋄ D(−2).
    let stage3 = move |s: f64| {
        let mut out = base3.clone();
        for &(a, b) in &pairs3 {
            place(&mut out, &quad(2.0, PI * s), &[a, b]);
        }
        out
    };
    let pairs4 = pairs;
    let base4 = base;
    // Stage 4: D(−2) → −I.
    let stage4 = move |s: f64| {
        let mut out = base4.clone();
        for &(a, b) in &pairs4 {
            place(&mut out, &hyp(-2.0 + s), &[a]);
            place(&mut out, &hyp(-2.0 + s), &[b]);
        }
        let _ = lone;
        out
    };
    Ok(vec![Box::new(stage1), Box::new(stage2), Box::new(stage3), Box::new(stage4)])
}

/// Winding (in radians) of the extension from a non-degenerate endpoint M to
/// W₊ or W₋: conjugate M to its normal form, then deform the blocks.
fn extension_winding(m: &DMatrix<f64>, trace: &mut Vec<f64>) -> Result<f64> {
    let dim = m.nrows();
    let n = dim / 2;
    let sm = SymplecticMatrix::with_tolerance(m.clone(), MONODROMY_SYMPLECTIC_TOL)?;
    let dec: BlockDecomposition = classify_blocks(&sm, &Tolerances::default())?;
    let q = match (&dec.basis, dec.reconstruction_error) {
        (Some(q), Some(err)) if dec.is_complete() && err < 1e-6 => q.clone(),
        _ => {
            return Err(Error::Structure(format!(
                "endpoint normal form not found: {}",
                if dec.residual_report.is_empty() { "inaccurate basis".to_string() } else { dec.residual_report.clone() }
            )))
        }
    };
    let d = crate::symplectic::assemble(&dec.blocks);
    let j = standard_form(n);

    // Q = O·P with O orthogonal-symplectic (unitary) and P = exp(X).
    let svd = q.clone().svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let o = &u * &v_t;
    let v = v_t.transpose();
    let log_sigma: Vec<f64> = svd.singular_values.iter().map(|s| s.ln()).collect();
    let oc = DMatrix::from_fn(n, n, |i, k| C64::new(o[(i, k)], o[(i + n, k)]));
    let (w, angles) = unitary_angles(&oc)?;
    let q_path = move |s: f64| -> DMatrix<f64> {
        let diag = DMatrix::from_diagonal(&DVector::from_iterator(
            angles.len(),
            angles.iter().map(|a| C64::from_polar(1.0, (1.0 - s) * a)),
        ));
        let os = realify(&(&w * diag * w.adjoint()));
        let ps = &v * DMatrix::from_diagonal(&DVector::from_iterator(dim, log_sigma.iter().map(|l| ((1.0 - s) * l).exp()))) * v.transpose();
        os * ps
    };
    let conj = |s: f64| -> DMatrix<f64> {
        let qs = q_path(s);
        let qs_inv = -(&j * qs.transpose() * &j);
        &qs * &d * qs_inv
    };
    let mut total = track(&conj, trace)?;

    let mut off = 0;
    let pieces: Vec<NormalPiece> = dec
        .blocks
        .iter()
        .map(|b| {
            let k = b.dim() / 2;
            let p = NormalPiece { label: *b, idx: (off..off + k).collect() };
            off += k;
            p
        })
        .collect();
    for stage in normal_form_stages(&pieces, n)? {
        total += track(&stage, trace)?;
    }
    Ok(total)
}

/// Push a degenerate endpoint off eigenvalue 1 along t ↦ M e^{−tJ}; ε stays
/// below every other eigen-angle so only the eigenvalue-1 part moves.
fn push_epsilon(m: &DMatrix<f64>) -> Result<f64> {
    let radius = Tolerances::default().unit_radius();
    let eig = eigenvalues(m)?;
    let min_angle = eig
        .iter()
        .filter(|z| (*z - 1.0).norm() >= radius)
        .map(|z| z.arg().abs())
        .filter(|a| *a > 0.0)
        .fold(PI, f64::min);
    Ok((0.25 * min_angle).min(1e-3))
}

/// Maslov-type index of a sampled symplectic path starting at I.
pub fn cz_index_path(path: &[DMatrix<f64>]) -> Result<CZIndexResult> {
    if path.len() < 2 {
        return Err(Error::Input("path needs at least two samples".into()));
    }
    let end = path.last().unwrap().clone();
    let n = end.nrows() / 2;
    let mut trace = Vec::new();
    let mut total = track_samples(path, &mut trace)?;

    let radius = Tolerances::default().unit_radius();
    let eig = eigenvalues(&end)?;
    let mult_one = eig.iter().filter(|z| (*z - 1.0).norm() < radius).count();
    let nu = {
        let d = end.nrows();
        let sv = (&end - DMatrix::<f64>::identity(d, d)).singular_values();
        sv.iter().filter(|&&s| s < radius).count() as u32
    };
    let mut epsilon = 0.0;
    let mut endpoint = end.clone();
    if mult_one > 0 {
        epsilon = push_epsilon(&end)?;
        let j = standard_form(n);
        let push = |s: f64| &end * (&j * (-epsilon * s)).exp();
        total += track(&push, &mut trace)?;
        endpoint = push(1.0);
    }
    total += extension_winding(&endpoint, &mut trace)?;

    let w = total / PI;
    if (w - w.round()).abs() > 0.05 {
        return Err(Error::Resolution { index: trace.len(), jump: (w - w.round()).abs() * PI });
    }
    let i = w.round() as i64;
    let degenerate = mult_one > 2;
    // Continuous arg ρ, decimated to at most 512 entries.
    let mut acc = rotation_function(&path[0]).arg();
    let mut cont = vec![acc];
    for d in &trace {
        acc += d;
        cont.push(acc);
    }
    let stride = cont.len().div_ceil(512).max(1);
    let winding_trace = cont.iter().step_by(stride).copied().collect();
    Ok(CZIndexResult {
        i_maslov: i,
        i_ekeland: i - n as i64,
        nu,
        degenerate,
        interval: degenerate.then(|| (i, i + i64::from(nu) - 1)),
        winding: w,
        winding_trace,
        epsilon,
    })
}

pub fn cz_index(mono: &MonodromyResult) -> Result<CZIndexResult> {
    if mono.path.is_empty() {
        return Err(Error::Input("monodromy result carries no path".into()));
    }
    cz_index_path(&mono.path)
}

/// Sample an analytic path t ↦ γ(t), t ∈ [0, t_end], finely enough for
/// [`cz_index_path`].
pub fn sample_path<F: Fn(f64) -> DMatrix<f64>>(f: F, t_end: f64, samples: usize) -> Vec<DMatrix<f64>> {
    (0..=samples).map(|i| f(t_end * i as f64 / samples as f64)).collect()
}

/// Index of ⋄_j R(ω_j t) on [0, T]: Σ_j (2⌊ω_j T/2π⌋ + 1).
pub fn rotation_path_index(omegas: &[f64], t_end: f64) -> i64 {
    omegas.iter().map(|w| 2 * (w * t_end / (2.0 * PI)).floor() as i64 + 1).sum()
}

#[derive(Clone, Debug, Serialize)]
pub struct OrbitClassification {
    pub elliptic_height: usize,
    pub elliptic: bool,
    pub hyperbolic: bool,
    pub non_degenerate: bool,
    pub irrational_mean_index: bool,
    pub mean_index_verdict: RationalVerdict,
    pub q_max: i64,
    pub mean_index: Option<MeanIndex>,
    pub blocks: Vec<BlockLabel>,
    pub profile: Option<MonodromyProfile>,
    pub notes: Vec<String>,
}

/// Elliptic / hyperbolic / non-degenerate flags and the mean index of the
/// profile read off the monodromy.
pub fn classify_orbit(mono: &MonodromyResult, cz: &CZIndexResult, q_max: i64) -> Result<OrbitClassification> {
    let m = &mono.gamma_tau;
    let n = m.n();
    let radius = Tolerances::default().unit_radius();
    let e = crate::symplectic::elliptic_height(m, Tolerances::default().circle)?;
    let mult_one = mono.multipliers.iter().filter(|z| (*z - 1.0).norm() < radius).count();
    let non_degenerate = mult_one == 2;
    let dec = classify_blocks(m, &Tolerances::default())?;
    let mut notes = e.warnings.clone();
    let (profile, mi) = match MonodromyProfile::from_decomposition(cz.i_maslov, &dec) {
        Ok(p) => match mean_index(&p) {
            Ok(mi) => (Some(p), Some(mi)),
            Err(err) => {
                notes.push(format!("mean index unavailable: {err}"));
                (Some(p), None)
            }
        },
        Err(err) => {
            notes.push(format!("no iteration profile: {err}"));
            (None, None)
        }
    };
    let verdict = match &mi {
        Some(mi) => rationality_test(mi.value, q_max, crate::iteration::RATIONAL_TOL),
        None => RationalVerdict::NoRationalBelow { q_max: 0 },
    };
    let irrational = mi.is_some() && matches!(verdict, RationalVerdict::NoRationalBelow { .. });
    Ok(OrbitClassification {
        elliptic_height: e.value,
        elliptic: e.value == 2 * n,
        hyperbolic: non_degenerate && e.value == 2,
        non_degenerate,
        irrational_mean_index: irrational,
        mean_index_verdict: verdict,
        q_max,
        mean_index: mi,
        blocks: dec.blocks,
        profile,
        notes,
    })
}

/// Everything computed for one closed orbit.
#[derive(Clone, Debug, Serialize)]
pub struct OrbitAnalysis {
    pub orbit: ClosedOrbit,
    pub monodromy: MonodromyResult,
    pub index: CZIndexResult,
    pub classification: OrbitClassification,
}

impl OrbitAnalysis {
    pub fn mean_index(&self) -> Option<f64> {
        self.classification.mean_index.as_ref().map(|m| m.value)
    }
}

pub fn analyze_orbit(orbit: ClosedOrbit, steps: usize, q_max: i64) -> Result<OrbitAnalysis> {
    let monodromy = monodromy(&orbit, steps)?;
    let index = cz_index(&monodromy)?;
    let classification = classify_orbit(&monodromy, &index, q_max)?;
    Ok(OrbitAnalysis { orbit, monodromy, index, classification })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symplectic::assemble;

    fn radii() -> Vec<f64> {
        vec![1.0, 2f64.powf(0.25), 3f64.powf(0.25)]
    }

    #[test]
    fn ellipsoid_periods() {
        let orbits = ellipsoid_orbits(&radii()).unwrap();
        let want = [PI, PI * 2f64.sqrt(), PI * 3f64.sqrt()];
        for (o, w) in orbits.iter().zip(want) {
            assert!((o.period - w).abs() < 1e-12);
            assert!(o.closure_residual < 1e-12);
            o.check_accepted().unwrap();
        }
        assert!(ellipsoid_orbits(&[1.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn flow_returns_to_start() {
        let orbits = ellipsoid_orbits(&radii()).unwrap();
        let o = &orbits[1];
        let traj = flow_integrate(&o.surface, &o.x0, o.period, 10_000).unwrap();
        let end = traj.points.last().unwrap();
        let err: f64 = end.iter().zip(&o.x0).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!(err < 1e-9 * o.period, "{err}");
        let zero = flow_integrate(&o.surface, &o.x0, 0.0, 100).unwrap();
        assert_eq!(zero.points, vec![o.x0.clone()]);
        assert!(flow_integrate(&o.surface, &[2.0, 0.0, 0.0, 0.0, 0.0, 0.0], 1.0, 100).is_err());
    }

    #[test]
    fn monodromy_matches_closed_form() {
        let r = radii();
        let orbits = ellipsoid_orbits(&r).unwrap();
        for (k, o) in orbits.iter().enumerate() {
            let mono = monodromy(o, 10_000).unwrap();
            let d = multiset_distance(&mono.multipliers, &ellipsoid_multipliers(&r, k));
            assert!(d < 1e-8, "orbit {k}: {d}");
        }
    }

    #[test]
    fn cz_of_ellipsoid_orbits() {
        let r = radii();
        let orbits = ellipsoid_orbits(&r).unwrap();
        let want = [3, 5, 7];
        for (k, o) in orbits.iter().enumerate() {
            let mono = monodromy(o, 2000).unwrap();
            let cz = cz_index(&mono).unwrap();
            assert_eq!(cz.i_maslov, want[k], "orbit {k}, winding {}", cz.winding);
            assert_eq!(cz.i_ekeland, want[k] - 3);
            assert!(!cz.degenerate);
        }
    }

    #[test]
    fn rotation_paths() {
        let omegas = [1.3, 4.1, 7.7];
        let t_end = 2.0;
        let f = |t: f64| assemble(&omegas.map(|w| BlockLabel::R { theta: w * t }));
        let path = sample_path(f, t_end, 400);
        let cz = cz_index_path(&path).unwrap();
        assert_eq!(cz.i_maslov, rotation_path_index(&omegas, t_end));
    }

    #[test]
    fn hyperbolic_path_has_index_zero() {
        let f = |t: f64| assemble(&[BlockLabel::Hyperbolic { lambda: (t * 2f64.ln()).exp() }]);
        let path = sample_path(f, 1.0, 50);
        assert_eq!(cz_index_path(&path).unwrap().i_maslov, 0);
    }

    #[test]
    fn classification_flags() {
        let hyp = SymplecticMatrix::new(assemble(&[
            BlockLabel::N1 { eig: 1, b: 1 },
            BlockLabel::Hyperbolic { lambda: 2.0 },
            BlockLabel::Hyperbolic { lambda: -2.0 },
        ]))
        .unwrap();
        let mono = MonodromyResult::from_matrix(hyp).unwrap();
        let cz = CZIndexResult {
            i_maslov: 3,
            i_ekeland: 0,
            nu: 1,
            degenerate: false,
            interval: None,
            winding: 3.0,
            winding_trace: vec![],
            epsilon: 0.0,
        };
        let c = classify_orbit(&mono, &cz, 10_000).unwrap();
        assert!(c.hyperbolic && c.non_degenerate && !c.elliptic);

        let mixed = SymplecticMatrix::new(assemble(&[
            BlockLabel::N1 { eig: 1, b: 1 },
            BlockLabel::R { theta: 1.0 },
            BlockLabel::Hyperbolic { lambda: 2.0 },
        ]))
        .unwrap();
        let c = classify_orbit(&MonodromyResult::from_matrix(mixed).unwrap(), &cz, 10_000).unwrap();
        assert!(c.non_degenerate && !c.hyperbolic && !c.elliptic);
        assert_eq!(c.elliptic_height, 4);
    }

    #[test]
    fn convexity_probe_ellipsoid() {
        let s = ConvexSurface::ellipsoid(&radii()).unwrap().with_alpha(1.5).unwrap();
        let rep = s.convexity_probe(1000, 1).unwrap();
        assert!(rep.convex);
    }

    #[test]
    fn gauge_derivatives_match_differences() {
        let s = ConvexSurface::perturbed(&[1.0, 1.3], 0.05, &[1.0, 0.5, 0.3, 0.7]).unwrap().with_alpha(1.7).unwrap();
        let x = [0.3, -0.4, 0.5, 0.2];
        let h = 1e-5;
        let g = s.gradient(&x);
        let hess = s.hessian(&x);
        for i in 0..4 {
            let mut xp = x;
            let mut xm = x;
            xp[i] += h;
            xm[i] -= h;
            assert!(((s.value(&xp) - s.value(&xm)) / (2.0 * h) - g[i]).abs() < 1e-8);
            let dg = (s.gradient(&xp) - s.gradient(&xm)) / (2.0 * h);
            for j in 0..4 {
                assert!((dg[j] - hess[(j, i)]).abs() < 1e-7);
            }
        }
        // Homogeneity of degree α.
        let y: Vec<f64> = x.iter().map(|v| v * 1.7).collect();
        assert!((s.value(&y) - 1.7f64.powf(1.7) * s.value(&x)).abs() < 1e-12);
    }

    #[test]
    fn surface_toml() {
        let s = ConvexSurface::from_toml("kind = \"perturbed_ellipsoid\"\nradii = [1.0, 1.2]\nepsilon = 0.001\ncoeffs = [1.0, 0.0, 0.5, 0.0]\n").unwrap();
        assert_eq!(s.n(), 2);
        let back = ConvexSurface::from_toml(&toml::to_string(&s).unwrap()).unwrap();
        assert_eq!(back, s);
        assert!(ConvexSurface::from_toml("kind = \"ellipsoid\"\nradii = [1.0]\nfoo = 1\n").is_err());
    }
}
