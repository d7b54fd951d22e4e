//! Symplectic linear algebra on R^{2n} with coordinates (x_1..x_n, y_1..y_n).
//!
//! The ⋄-product places a 2-block on coordinates (k, k+n) and a 4-block on
//! (k, k+1, k+n, k+1+n). Bases produced by [`classify_blocks`] satisfy
//! `e_kᵀ J f_k = -1`, i.e. they are columns of a symplectic matrix.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;

const TAU: f64 = 2.0 * PI;
/// Beyond this condition number the eigenvalues of M are not trusted.
const MAX_CONDITION: f64 = 1e12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub symplectic: f64,
    pub cluster: f64,
    pub circle: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { symplectic: 1e-9, cluster: 1e-7, circle: 1e-8 }
    }
}

impl Tolerances {
    /// Radius of the ±1 clusters. A Jordan block perturbed by δ splits its
    /// eigenvalue by √δ, so the cluster radius is the square root of the
    /// clustering tolerance.
    pub fn unit_radius(&self) -> f64 {
        self.cluster.sqrt()
    }
}

/// J = [[0, -I], [I, 0]].
pub fn standard_form(n: usize) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(2 * n, 2 * n);
    for k in 0..n {
        j[(k, k + n)] = -1.0;
        j[(k + n, k)] = 1.0;
    }
    j
}

/// ω(x, y) = xᵀ J y without forming J.
pub fn omega(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() / 2;
    (0..n).map(|k| x[k + n] * y[k] - x[k] * y[k + n]).sum()
}

/// ‖MᵀJM − J‖ in the max norm.
pub fn symplectic_residual(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows() / 2;
    let j = standard_form(n);
    (m.transpose() * &j * m - j).amax()
}

pub fn check_shape(m: &DMatrix<f64>) -> Result<usize> {
    if m.nrows() != m.ncols() || m.nrows() == 0 || !m.nrows().is_multiple_of(2) {
        return Err(Error::BadShape { rows: m.nrows(), cols: m.ncols() });
    }
    Ok(m.nrows() / 2)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct SymplecticMatrix {
    n: usize,
    entries: DMatrix<f64>,
    sympl_residual: f64,
}

impl SymplecticMatrix {
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        Self::with_tolerance(entries, Tolerances::default().symplectic)
    }

    pub fn with_tolerance(entries: DMatrix<f64>, tol: f64) -> Result<Self> {
        let n = check_shape(&entries)?;
        let residual = symplectic_residual(&entries);
        if !(residual <= tol) {
            return Err(Error::NotSymplectic { residual, tol });
        }
        let det = entries.determinant();
        if !((det - 1.0).abs() <= 1e-7 * det.abs().max(1.0)) {
            return Err(Error::Determinant { det });
        }
        Ok(SymplecticMatrix { n, entries, sympl_residual: residual })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(matrix_from_rows(rows)?)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn sympl_residual(&self) -> f64 {
        self.sympl_residual
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        matrix_to_rows(&self.entries)
    }

    /// P⁻¹ M P for symplectic P (so P⁻¹ = -J Pᵀ J).
    pub fn conjugate_by(&self, p: &DMatrix<f64>) -> Result<Self> {
        let j = standard_form(self.n);
        let p_inv = -(&j * p.transpose() * &j);
        let tol = Tolerances::default().symplectic.max(1e3 * f64::EPSILON * p.amax().powi(4));
        Self::with_tolerance(p_inv * &self.entries * p, tol)
    }

    pub fn pow(&self, m: u32) -> DMatrix<f64> {
        let mut acc = DMatrix::identity(2 * self.n, 2 * self.n);
        let mut base = self.entries.clone();
        let mut e = m;
        while e > 0 {
            if e & 1 == 1 {
                acc = &acc * &base;
            }
            base = &base * &base;
            e >>= 1;
        }
        acc
    }
}

impl TryFrom<Vec<Vec<f64>>> for SymplecticMatrix {
    type Error = Error;
    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::from_rows(&rows)
    }
}

impl From<SymplecticMatrix> for Vec<Vec<f64>> {
    fn from(m: SymplecticMatrix) -> Self {
        m.to_rows()
    }
}

pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != c) {
        return Err(Error::Input("ragged matrix rows".into()));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

pub fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub fn read_matrix_json(text: &str) -> Result<DMatrix<f64>> {
    let rows: Vec<Vec<f64>> = serde_json::from_str(text)?;
    matrix_from_rows(&rows)
}

pub fn write_matrix_json(m: &DMatrix<f64>) -> String {
    serde_json::to_string_pretty(&matrix_to_rows(m)).expect("finite matrix serializes")
}

fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.singular_values();
    let max = sv.max();
    let min = sv.min();
    if min == 0.0 { f64::INFINITY } else { max / min }
}

/// Eigenvalues sorted by (arg, modulus); the spectrum of a symplectic matrix
/// is closed under λ ↦ 1/λ and λ ↦ λ̄.
pub fn floquet_multipliers(m: &SymplecticMatrix) -> Result<Vec<C64>> {
    let condition = condition_number(&m.entries);
    if !(condition < MAX_CONDITION) {
        return Err(Error::IllConditioned { condition });
    }
    let mut eig = eigenvalues(&m.entries)?;
    sort_spectrum(&mut eig);
    Ok(eig)
}

/// General real eigenvalues. nalgebra's real Schur path mishandles 2×2
/// blocks with real eigenvalues (NaNs) and iterates without bound, so the
/// dense eigensolver comes from faer.
pub fn eigenvalues(m: &DMatrix<f64>) -> Result<Vec<C64>> {
    let fm = faer::Mat::<f64>::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)]);
    let eig = fm
        .eigenvalues()
        .map_err(|e| Error::Input(format!("eigenvalue iteration failed: {e:?}")))?;
    let out: Vec<C64> = eig.iter().map(|z| C64::new(z.re, z.im)).collect();
    if out.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::IllConditioned { condition: f64::INFINITY });
    }
    Ok(out)
}

pub fn sort_spectrum(eig: &mut [C64]) {
    eig.sort_by(|a, b| {
        let ka = (round_key(a.arg()), round_key(a.norm()));
        let kb = (round_key(b.arg()), round_key(b.norm()));
        ka.partial_cmp(&kb).unwrap()
    });
}

// Tiny asymmetries (±1e-17 imaginary parts) must not flip the ordering.
fn round_key(x: f64) -> f64 {
    (x * 1e9).round() / 1e9
}

/// Largest distance between the spectrum and its image under λ ↦ 1/λ̄ and
/// λ ↦ λ̄ (greedy matching).
pub fn spectral_asymmetry(eig: &[C64]) -> f64 {
    let mut worst: f64 = 0.0;
    for map in [|z: C64| C64::new(1.0, 0.0) / z, |z: C64| z.conj()] {
        let mut used = vec![false; eig.len()];
        for &z in eig {
            let target = map(z);
            let (idx, d) = eig
                .iter()
                .enumerate()
                .filter(|(i, _)| !used[*i])
                .map(|(i, w)| (i, (w - target).norm()))
                .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
                .unwrap();
            used[idx] = true;
            worst = worst.max(d);
        }
    }
    worst
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EllipticHeight {
    pub value: usize,
    pub warnings: Vec<String>,
}

pub fn elliptic_height(m: &SymplecticMatrix, circle_tol: f64) -> Result<EllipticHeight> {
    let eig = floquet_multipliers(m)?;
    let radius = Tolerances::default().unit_radius();
    let mut value = 0;
    let mut warnings = Vec::new();
    for z in &eig {
        let off = (z.norm() - 1.0).abs();
        // Jordan blocks at ±1 split off the circle by √δ.
        let near_unit = (z - 1.0).norm() < radius || (z + 1.0).norm() < radius;
        if off <= circle_tol || near_unit {
            value += 1;
        } else if off <= 10.0 * circle_tol {
            warnings.push(format!(
                "multiplier {:.12}{:+.12}i is {:.2e} off the unit circle (ambiguous at tol {:.1e})",
                z.re, z.im, off, circle_tol
            ));
        }
    }
    if value % 2 == 1 {
        warnings.push(format!("odd unit-circle count {value}; spectrum is numerically asymmetric"));
    }
    Ok(EllipticHeight { value, warnings })
}

/// Basic normal-form block. Angles are in radians.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum BlockLabel {
    N1 { eig: i8, b: i8 },
    R { theta: f64 },
    #[serde(rename = "hyp")]
    Hyperbolic { lambda: f64 },
    #[serde(rename = "quad")]
    Quadruple { re: f64, im: f64 },
}

impl fmt::Display for BlockLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            BlockLabel::N1 { eig, b } => write!(f, "N1({eig},{b})"),
            BlockLabel::R { theta } => write!(f, "R({theta})"),
            BlockLabel::Hyperbolic { lambda } => write!(f, "D({lambda})"),
            BlockLabel::Quadruple { re, im } => write!(f, "Q({re}{im:+}i)"),
        }
    }
}

impl BlockLabel {
    pub fn dim(&self) -> usize {
        match self {
            BlockLabel::Quadruple { .. } => 4,
            _ => 2,
        }
    }

    pub fn elliptic_contribution(&self) -> usize {
        match self {
            BlockLabel::N1 { .. } | BlockLabel::R { .. } => 2,
            _ => 0,
        }
    }

    /// The block in its own standard coordinates.
    pub fn matrix(&self) -> DMatrix<f64> {
        match *self {
            BlockLabel::N1 { eig, b } => {
                let e = f64::from(eig);
                DMatrix::from_row_slice(2, 2, &[e, f64::from(b), 0.0, e])
            }
            BlockLabel::R { theta } => rotation(theta),
            BlockLabel::Hyperbolic { lambda } => {
                DMatrix::from_row_slice(2, 2, &[lambda, 0.0, 0.0, 1.0 / lambda])
            }
            BlockLabel::Quadruple { re, im } => {
                let z = C64::new(re, im);
                let a = rotation(z.arg()) * z.norm();
                let mut m = DMatrix::zeros(4, 4);
                m.view_mut((0, 0), (2, 2)).copy_from(&a);
                m.view_mut((2, 2), (2, 2)).copy_from(&(rotation(z.arg()) / z.norm()));
                m
            }
        }
    }

    fn sort_key(&self) -> (u8, f64) {
        match *self {
            BlockLabel::N1 { eig: 1, b } => (0, -f64::from(b)),
            BlockLabel::R { theta } => (1, theta),
            BlockLabel::N1 { b, .. } => (2, -f64::from(b)),
            BlockLabel::Hyperbolic { lambda } => (3, lambda),
            BlockLabel::Quadruple { re, im } => (4, C64::new(re, im).arg()),
        }
    }
}

pub fn rotation(theta: f64) -> DMatrix<f64> {
    let (s, c) = theta.sin_cos();
    DMatrix::from_row_slice(2, 2, &[c, -s, s, c])
}

/// ⋄-product of symplectic matrices given in their own standard coordinates.
pub fn diamond(parts: &[DMatrix<f64>]) -> DMatrix<f64> {
    let n: usize = parts.iter().map(|p| p.nrows() / 2).sum();
    let mut out = DMatrix::zeros(2 * n, 2 * n);
    let mut off = 0;
    for p in parts {
        let k = p.nrows() / 2;
        let place = |i: usize| if i < k { off + i } else { n + off + i - k };
        for i in 0..2 * k {
            for j in 0..2 * k {
                out[(place(i), place(j))] = p[(i, j)];
            }
        }
        off += k;
    }
    out
}

pub fn assemble(blocks: &[BlockLabel]) -> DMatrix<f64> {
    let parts: Vec<_> = blocks.iter().map(BlockLabel::matrix).collect();
    diamond(&parts)
}

/// Random symplectic matrix: a product of shears and a linear symplectic
/// scaling, entries of each factor drawn from [-scale, scale].
pub fn random_symplectic<R: rand::Rng + ?Sized>(n: usize, rng: &mut R, scale: f64) -> DMatrix<f64> {
    let sym = |rng: &mut R| {
        let mut s = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = rng.random_range(-scale..=scale);
                s[(i, j)] = v;
                s[(j, i)] = v;
            }
        }
        s
    };
    let id = DMatrix::<f64>::identity(n, n);
    let mut upper = DMatrix::identity(2 * n, 2 * n);
    upper.view_mut((0, n), (n, n)).copy_from(&sym(rng));
    let mut lower = DMatrix::identity(2 * n, 2 * n);
    lower.view_mut((n, 0), (n, n)).copy_from(&sym(rng));
    let a = &id + DMatrix::from_fn(n, n, |_, _| rng.random_range(-scale..=scale));
    let (a, a_inv_t) = match a.clone().try_inverse() {
        Some(inv) => (a, inv.transpose()),
        None => (id.clone(), id),
    };
    let mut scale_m = DMatrix::zeros(2 * n, 2 * n);
    scale_m.view_mut((0, 0), (n, n)).copy_from(&a);
    scale_m.view_mut((n, n), (n, n)).copy_from(&a_inv_t);
    upper * lower * scale_m
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BlockDecomposition {
    pub blocks: Vec<BlockLabel>,
    pub accounted_dim: usize,
    pub residual_report: String,
    /// ‖Q⁻¹MQ − ⋄blocks‖ when a full basis was found.
    pub reconstruction_error: Option<f64>,
    /// Symplectic basis Q with Q⁻¹ M Q = ⋄blocks (columns e_k, f_k at k, k+n).
    #[serde(skip)]
    pub basis: Option<DMatrix<f64>>,
}

impl BlockDecomposition {
    pub fn is_complete(&self) -> bool {
        self.residual_report.is_empty()
    }

    pub fn elliptic_height(&self) -> usize {
        self.blocks.iter().map(BlockLabel::elliptic_contribution).sum()
    }
}

/// A block together with its symplectic basis vectors (e's then f's).
struct Piece {
    label: BlockLabel,
    e: Vec<DVector<f64>>,
    f: Vec<DVector<f64>>,
}

struct Cluster {
    center: C64,
    members: Vec<C64>,
}

fn cluster_points(points: &[C64], tol: f64) -> Vec<Cluster> {
    let mut out: Vec<Cluster> = Vec::new();
    for &z in points {
        match out.iter_mut().find(|c| (c.center - z).norm() < tol) {
            Some(c) => {
                c.members.push(z);
                c.center = c.members.iter().sum::<C64>() / c.members.len() as f64;
            }
            None => out.push(Cluster { center: z, members: vec![z] }),
        }
    }
    out
}

/// Right singular vectors of `a` for the `k` smallest singular values, and
/// all singular values in ascending order.
fn smallest_right_vectors_c(a: &DMatrix<C64>, k: usize) -> (DMatrix<C64>, Vec<f64>) {
    let svd = a.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested v_t");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[i].partial_cmp(&svd.singular_values[j]).unwrap());
    let sv = order.iter().map(|&i| svd.singular_values[i]).collect();
    let cols: Vec<DVector<C64>> =
        order.iter().take(k).map(|&i| v_t.row(i).adjoint().into_owned()).collect();
    let basis = if cols.is_empty() {
        DMatrix::zeros(a.ncols(), 0)
    } else {
        DMatrix::from_columns(&cols)
    };
    (basis, sv)
}

fn smallest_right_vectors(a: &DMatrix<f64>, k: usize) -> (DMatrix<f64>, Vec<f64>) {
    let svd = a.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested v_t");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[i].partial_cmp(&svd.singular_values[j]).unwrap());
    let sv = order.iter().map(|&i| svd.singular_values[i]).collect();
    let cols: Vec<DVector<f64>> =
        order.iter().take(k).map(|&i| v_t.row(i).transpose().into_owned()).collect();
    let basis = if cols.is_empty() {
        DMatrix::zeros(a.ncols(), 0)
    } else {
        DMatrix::from_columns(&cols)
    };
    (basis, sv)
}

/// Column space of `x` restricted to singular values above `thr`.
fn range_basis(x: &DMatrix<f64>, thr: f64) -> DMatrix<f64> {
    if x.ncols() == 0 {
        return x.clone();
    }
    // x·v/σ rather than the u factor: nalgebra's u loses accuracy on
    // rank-deficient inputs.
    let svd = x.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested v_t");
    let cols: Vec<DVector<f64>> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > thr)
        .map(|i| x * v_t.row(i).transpose() / svd.singular_values[i])
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(x.nrows(), 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

fn complexify(m: &DMatrix<f64>) -> DMatrix<C64> {
    m.map(|x| C64::new(x, 0.0))
}

fn j_times_c(z: &DMatrix<C64>) -> DMatrix<C64> {
    let n = z.nrows() / 2;
    let mut out = DMatrix::zeros(z.nrows(), z.ncols());
    for c in 0..z.ncols() {
        for k in 0..n {
            out[(k, c)] = -z[(k + n, c)];
            out[(k + n, c)] = z[(k, c)];
        }
    }
    out
}

/// Project the columns of `x` onto the ω-complement of span(W).
fn symplectic_complement(w: &DMatrix<f64>, x: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    if w.ncols() == 0 {
        return Some(x.clone());
    }
    let j = standard_form(w.nrows() / 2);
    let s = w.transpose() * &j * w;
    let s_inv = s.try_inverse()?;
    Some(x - w * (s_inv * (w.transpose() * &j * x)))
}

/// Symplectic Gram–Schmidt on a symplectic subspace spanned by `z`.
fn symplectic_gram_schmidt(z: &DMatrix<f64>, thr: f64) -> std::result::Result<Vec<(DVector<f64>, DVector<f64>)>, String> {
    let mut rest: Vec<DVector<f64>> = z.column_iter().map(|c| c.into_owned()).collect();
    let mut pairs = Vec::new();
    while !rest.is_empty() {
        let e = rest.remove(0);
        let (idx, w) = rest
            .iter()
            .enumerate()
            .map(|(i, v)| (i, omega(e.as_slice(), v.as_slice())))
            .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
            .ok_or("odd-dimensional remainder in the fixed subspace")?;
        if w.abs() < thr {
            return Err("fixed subspace is not symplectic".into());
        }
        let f = rest.remove(idx) / (-w);
        let pair = DMatrix::from_columns(&[e.clone(), f.clone()]);
        if !rest.is_empty() {
            let x = DMatrix::from_columns(&rest);
            let x = symplectic_complement(&pair, &x).ok_or("degenerate pair")?;
            rest = x.column_iter().map(|c| c.into_owned()).collect();
        }
        pairs.push((e, f));
    }
    Ok(pairs)
}

/// Blocks for the generalised eigenspace of `sign` (= ±1) of algebraic
/// multiplicity `a`.
fn unit_blocks(m: &DMatrix<f64>, sign: i8, a: usize, scale: f64, tol: &Tolerances) -> std::result::Result<Vec<Piece>, String> {
    let dim = m.nrows();
    let s = f64::from(sign);
    let nmat = m - DMatrix::identity(dim, dim) * s;
    let thr = tol.unit_radius() * scale;
    let (g_basis, sv2) = smallest_right_vectors(&(&nmat * &nmat), a);
    if sv2[a - 1] > thr * scale {
        return Err(format!(
            "eigenvalue {sign}: generalised eigenspace of multiplicity {a} needs longer Jordan chains (σ={:.2e})",
            sv2[a - 1]
        ));
    }
    let sv1 = nmat.singular_values();
    let g = sv1.iter().filter(|&&x| x < thr).count();
    if g > a || 2 * g < a {
        return Err(format!(
            "eigenvalue {sign}: kernel dimension {g} inconsistent with multiplicity {a}"
        ));
    }
    let chains = a - g;

    // B(x, y) = xᵀ J N y is symmetric on ker N²; its non-degenerate part
    // carries the Jordan chains and the sign of b.
    let j = standard_form(dim / 2);
    let b_form = g_basis.transpose() * &j * &nmat * &g_basis;
    let b_form = (&b_form + b_form.transpose()) * 0.5;
    let eig = SymmetricEigen::new(b_form);
    let mut order: Vec<usize> = (0..a).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[y].abs().partial_cmp(&eig.eigenvalues[x].abs()).unwrap());
    let mut w: Vec<DVector<f64>> = Vec::new();
    let mut bs: Vec<i8> = Vec::new();
    for &i in order.iter().take(chains) {
        let mu = eig.eigenvalues[i];
        if mu.abs() < thr {
            return Err(format!("eigenvalue {sign}: Jordan chain with vanishing pairing"));
        }
        w.push(&g_basis * eig.eigenvectors.column(i) / mu.abs().sqrt());
        bs.push(if mu > 0.0 { 1 } else { -1 });
    }
    let v: Vec<DVector<f64>> = w.iter().map(|x| &nmat * x).collect();
    // Make the generalised vectors mutually ω-orthogonal.
    let corr: Vec<Vec<f64>> = (0..chains)
        .map(|i| {
            (0..chains)
                .map(|k| omega(w[i].as_slice(), w[k].as_slice()) * f64::from(bs[k]) / 2.0)
                .collect()
        })
        .collect();
    let w: Vec<DVector<f64>> = (0..chains)
        .map(|i| {
            let mut x = w[i].clone();
            for k in 0..chains {
                x += &v[k] * corr[i][k];
            }
            x
        })
        .collect();

    let mut pieces = Vec::new();
    let mut chain_cols = Vec::new();
    for i in 0..chains {
        let e = if bs[i] > 0 { v[i].clone() } else { -v[i].clone() };
        chain_cols.push(v[i].clone());
        chain_cols.push(w[i].clone());
        pieces.push(Piece { label: BlockLabel::N1 { eig: sign, b: bs[i] }, e: vec![e], f: vec![w[i].clone()] });
    }

    let fixed_dim = a - 2 * chains;
    if fixed_dim > 0 {
        let rest = if chain_cols.is_empty() {
            g_basis.clone()
        } else {
            let wm = DMatrix::from_columns(&chain_cols);
            symplectic_complement(&wm, &g_basis).ok_or("degenerate Jordan chains")?
        };
        let rest = range_basis(&rest, thr);
        if rest.ncols() != fixed_dim {
            return Err(format!(
                "eigenvalue {sign}: fixed subspace has dimension {} instead of {fixed_dim}",
                rest.ncols()
            ));
        }
        for (e, f) in symplectic_gram_schmidt(&rest, thr)? {
            pieces.push(Piece { label: BlockLabel::N1 { eig: sign, b: 0 }, e: vec![e], f: vec![f] });
        }
    }
    Ok(pieces)
}

fn elliptic_blocks(m: &DMatrix<f64>, cl: &Cluster, scale: f64, tol: &Tolerances) -> std::result::Result<Vec<Piece>, String> {
    let k = cl.members.len();
    let phi = cl.center.arg();
    let lam = C64::from_polar(1.0, phi);
    let dim = m.nrows();
    let a = complexify(m) - DMatrix::<C64>::identity(dim, dim) * lam;
    let (z, sv) = smallest_right_vectors_c(&a, k);
    let thr = tol.unit_radius() * scale;
    if sv[k - 1] > thr {
        return Err(format!("multiplier e^{{{phi:.6}i}} is not semisimple (multiplicity {k})"));
    }
    // h(z, w) = (i/2) zᴴ J w; for z = a − i·b one has h(z, z) = aᵀ J b.
    let h = (z.adjoint() * j_times_c(&z)) * C64::new(0.0, 0.5);
    let h = (&h + h.adjoint()) * C64::new(0.5, 0.0);
    let eig = SymmetricEigen::new(h);
    let mut pieces = Vec::new();
    for i in 0..k {
        let mu = eig.eigenvalues[i];
        if mu.abs() < thr {
            return Err(format!("multiplier e^{{{phi:.6}i}} has a null Krein direction"));
        }
        let zi = &z * eig.eigenvectors.column(i) / C64::new(mu.abs().sqrt(), 0.0);
        let re = zi.map(|c| c.re);
        let neg_im = zi.map(|c| -c.im);
        let (theta, f) = if mu < 0.0 { (phi, neg_im) } else { (TAU - phi, -neg_im) };
        pieces.push(Piece { label: BlockLabel::R { theta }, e: vec![re], f: vec![f] });
    }
    Ok(pieces)
}

fn hyperbolic_blocks(m: &DMatrix<f64>, cl: &Cluster, partner: &Cluster, scale: f64, tol: &Tolerances) -> std::result::Result<Vec<Piece>, String> {
    let k = cl.members.len();
    let lam = cl.center.re;
    let dim = m.nrows();
    let id = DMatrix::<f64>::identity(dim, dim);
    let thr = tol.unit_radius() * scale;
    let (x, sx) = smallest_right_vectors(&(m - &id * lam), k);
    let (y, sy) = smallest_right_vectors(&(m - &id * partner.center.re), k);
    if sx[k - 1] > thr * lam.abs().max(1.0) || sy[k - 1] > thr * lam.abs().max(1.0) {
        return Err(format!("hyperbolic multiplier {lam:.6} is not semisimple"));
    }
    let j = standard_form(dim / 2);
    let g = x.transpose() * &j * &y;
    let g_inv = g.try_inverse().ok_or_else(|| format!("multiplier pair {lam:.6} is not paired by ω"))?;
    let y = -(&y * g_inv);
    Ok((0..k)
        .map(|i| Piece {
            label: BlockLabel::Hyperbolic { lambda: lam },
            e: vec![x.column(i).into_owned()],
            f: vec![y.column(i).into_owned()],
        })
        .collect())
}

fn quadruple_blocks(m: &DMatrix<f64>, cl: &Cluster, scale: f64, tol: &Tolerances) -> std::result::Result<Vec<Piece>, String> {
    let k = cl.members.len();
    let lam = cl.center;
    let inv = C64::new(1.0, 0.0) / lam;
    let dim = m.nrows();
    let mc = complexify(m);
    let id = DMatrix::<C64>::identity(dim, dim);
    let thr = tol.unit_radius() * scale * lam.norm();
    let (z, sz) = smallest_right_vectors_c(&(&mc - &id * lam), k);
    let (u, su) = smallest_right_vectors_c(&(&mc - &id * inv), k);
    if sz[k - 1] > thr || su[k - 1] > thr {
        return Err(format!("quadruple multiplier {lam:.6} is not semisimple"));
    }
    // Bilinear (not Hermitian) pairing; scale so that zᵀ J w̄ = −2.
    let c = z.transpose() * j_times_c(&u);
    let c_inv = c.try_inverse().ok_or_else(|| format!("quadruple {lam:.6} is not paired by ω"))?;
    let u = &u * c_inv * C64::new(-2.0, 0.0);
    Ok((0..k)
        .map(|i| {
            let zi = z.column(i);
            let ui = u.column(i);
            let p = zi.map(|c| c.re);
            let q = zi.map(|c| -c.im);
            let r = ui.map(|c| c.re);
            let s = ui.map(|c| c.im);
            Piece {
                label: BlockLabel::Quadruple { re: lam.re, im: lam.im },
                e: vec![p, q],
                f: vec![r, s],
            }
        })
        .collect())
}

/// Normal-form blocks of M from its eigenstructure, with a symplectic basis
/// realising the decomposition when every cluster was classified.
pub fn classify_blocks(m: &SymplecticMatrix, tol: &Tolerances) -> Result<BlockDecomposition> {
    let eig = floquet_multipliers(m)?;
    let mat = m.entries();
    let dim = mat.nrows();
    let scale = mat.amax().max(1.0);
    let radius = tol.unit_radius();

    let plus = eig.iter().filter(|z| (*z - 1.0).norm() < radius).count();
    let minus = eig.iter().filter(|z| (*z + 1.0).norm() < radius).count();
    let rest: Vec<C64> = eig
        .iter()
        .copied()
        .filter(|z| (z - 1.0).norm() >= radius && (z + 1.0).norm() >= radius)
        .collect();

    let mut pieces: Vec<Piece> = Vec::new();
    let mut report: Vec<String> = Vec::new();
    fn take(r: std::result::Result<Vec<Piece>, String>, pieces: &mut Vec<Piece>, report: &mut Vec<String>) {
        match r {
            Ok(p) => pieces.extend(p),
            Err(e) => report.push(e),
        }
    }

    if plus % 2 == 1 || minus % 2 == 1 {
        return Ok(BlockDecomposition {
            blocks: vec![],
            accounted_dim: 0,
            residual_report: format!("odd multiplicity at ±1 (+1: {plus}, −1: {minus})"),
            reconstruction_error: None,
            basis: None,
        });
    }
    if plus > 0 {
        take(unit_blocks(mat, 1, plus, scale, tol), &mut pieces, &mut report);
    }
    if minus > 0 {
        take(unit_blocks(mat, -1, minus, scale, tol), &mut pieces, &mut report);
    }

    let clusters = cluster_points(&rest, tol.cluster.max(1e-12) * scale);
    let imag_tol = tol.cluster * scale;
    for cl in &clusters {
        let z = cl.center;
        let on_circle = (z.norm() - 1.0).abs() <= tol.circle.max(tol.cluster) * scale;
        if on_circle {
            if z.im > 0.0 {
                take(elliptic_blocks(mat, cl, scale, tol), &mut pieces, &mut report);
            }
            continue;
        }
        if z.norm() < 1.0 {
            continue;
        }
        if z.im.abs() <= imag_tol {
            let target = C64::new(1.0 / z.re, 0.0);
            let partner = clusters
                .iter()
                .min_by(|a, b| (a.center - target).norm().partial_cmp(&(b.center - target).norm()).unwrap());
            match partner {
                Some(p) if p.members.len() == cl.members.len() => {
                    take(hyperbolic_blocks(mat, cl, p, scale, tol), &mut pieces, &mut report)
                }
                _ => report.push(format!("multiplier {:.6} has no matching 1/λ partner", z.re)),
            }
        } else if z.im > 0.0 {
            take(quadruple_blocks(mat, cl, scale, tol), &mut pieces, &mut report);
        }
    }

    pieces.sort_by(|a, b| a.label.sort_key().partial_cmp(&b.label.sort_key()).unwrap());
    let blocks: Vec<BlockLabel> = pieces.iter().map(|p| p.label).collect();
    let accounted_dim: usize = blocks.iter().map(BlockLabel::dim).sum();
    if report.is_empty() && accounted_dim != dim {
        report.push(format!("classified {accounted_dim} of {dim} dimensions"));
    }

    let mut basis = None;
    let mut reconstruction_error = None;
    if report.is_empty() {
        let n = dim / 2;
        let mut q = DMatrix::zeros(dim, dim);
        let mut off = 0;
        for p in &pieces {
            for (i, (e, f)) in p.e.iter().zip(&p.f).enumerate() {
                q.set_column(off + i, e);
                q.set_column(n + off + i, f);
            }
            off += p.e.len();
        }
        let j = standard_form(n);
        let q_inv = -(&j * q.transpose() * &j);
        let err = (&q_inv * mat * &q - assemble(&blocks)).amax();
        reconstruction_error = Some(err);
        basis = Some(q);
    }

    Ok(BlockDecomposition {
        blocks,
        accounted_dim,
        residual_report: report.join("; "),
        reconstruction_error,
        basis,
    })
}

/// Splitting numbers at 1 for the two tabulated blocks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct SplittingEntry {
    pub block: (i8, i8),
    pub s_plus: u32,
    pub nu_one: u32,
}

impl SplittingEntry {
    /// 2·S⁺(1) − ν₁.
    pub fn jump(&self) -> i64 {
        2 * i64::from(self.s_plus) - i64::from(self.nu_one)
    }
}

pub fn splitting_data(block: &BlockLabel) -> Result<SplittingEntry> {
    match *block {
        BlockLabel::N1 { eig: 1, b: 1 } => Ok(SplittingEntry { block: (1, 1), s_plus: 1, nu_one: 1 }),
        BlockLabel::N1 { eig: 1, b: -1 } => Ok(SplittingEntry { block: (1, -1), s_plus: 0, nu_one: 1 }),
        other => Err(Error::UnsupportedBlock(other.to_string())),
    }
}

/// Aggregate 2S⁺ − ν₁ of a ⋄-product; splitting numbers are additive.
pub fn splitting_jump(blocks: &[BlockLabel]) -> Result<i64> {
    blocks.iter().map(|b| splitting_data(b).map(|s| s.jump())).sum()
}

/// Unitary factor U of the polar decomposition M = U·P (U is symplectic
/// and orthogonal, so U = [[A, −B], [B, A]]).
pub fn unitary_part(m: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = m.clone().svd(true, true);
    svd.u.unwrap() * svd.v_t.unwrap()
}

/// det_C(A + iB) of the unitary part — the rotation function.
pub fn rotation_function(m: &DMatrix<f64>) -> C64 {
    let u = unitary_part(m);
    let n = u.nrows() / 2;
    let c = DMatrix::from_fn(n, n, |i, j| C64::new(u[(i, j)], u[(i + n, j)]));
    c.determinant()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sm(blocks: &[BlockLabel]) -> SymplecticMatrix {
        SymplecticMatrix::new(assemble(blocks)).unwrap()
    }

    #[test]
    fn j_squares_to_minus_identity() {
        let j = standard_form(1);
        assert_eq!(j, DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]));
        assert_eq!(&j * &j, -DMatrix::<f64>::identity(2, 2));
        let j3 = standard_form(3);
        assert_eq!(j3.transpose() * &j3, DMatrix::<f64>::identity(6, 6));
    }

    #[test]
    fn rejects_non_symplectic() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 2.0]);
        assert!(matches!(SymplecticMatrix::new(m), Err(Error::NotSymplectic { .. })));
        let odd = DMatrix::<f64>::identity(3, 3);
        assert!(matches!(SymplecticMatrix::new(odd), Err(Error::BadShape { .. })));
    }

    #[test]
    fn multipliers_of_basic_blocks() {
        let id = SymplecticMatrix::new(DMatrix::identity(6, 6)).unwrap();
        let eig = floquet_multipliers(&id).unwrap();
        assert!(eig.iter().all(|z| (z - 1.0).norm() < 1e-12));

        let d2 = sm(&[BlockLabel::Hyperbolic { lambda: 2.0 }]);
        let mut re: Vec<f64> = floquet_multipliers(&d2).unwrap().iter().map(|z| z.re).collect();
        re.sort_by(f64::total_cmp);
        assert!((re[0] - 0.5).abs() < 1e-12 && (re[1] - 2.0).abs() < 1e-12);

        let r = sm(&[BlockLabel::R { theta: PI / 3.0 }]);
        let eig = floquet_multipliers(&r).unwrap();
        assert!(eig.iter().any(|z| (z - C64::from_polar(1.0, PI / 3.0)).norm() < 1e-12));
        assert!(eig.iter().any(|z| (z - C64::from_polar(1.0, -PI / 3.0)).norm() < 1e-12));
    }

    #[test]
    fn elliptic_height_counts_circle() {
        let id = SymplecticMatrix::new(DMatrix::identity(6, 6)).unwrap();
        assert_eq!(elliptic_height(&id, 1e-8).unwrap().value, 6);
        let m = sm(&[
            BlockLabel::N1 { eig: 1, b: 1 },
            BlockLabel::R { theta: 1.0 },
            BlockLabel::Hyperbolic { lambda: 2.0 },
        ]);
        assert_eq!(elliptic_height(&m, 1e-8).unwrap().value, 4);
    }

    #[test]
    fn classifies_conjugated_product() {
        let blocks = [
            BlockLabel::N1 { eig: 1, b: 1 },
            BlockLabel::R { theta: 2.0 },
            BlockLabel::Hyperbolic { lambda: 2.0 },
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p = random_symplectic(3, &mut rng, 0.5);
        let m = sm(&blocks).conjugate_by(&p).unwrap();
        let dec = classify_blocks(&m, &Tolerances::default()).unwrap();
        assert!(dec.is_complete(), "{}", dec.residual_report);
        assert_eq!(dec.blocks.len(), 3);
        assert_eq!(dec.blocks[0], BlockLabel::N1 { eig: 1, b: 1 });
        match dec.blocks[1] {
            BlockLabel::R { theta } => assert!((theta - 2.0).abs() < 1e-7),
            ref b => panic!("{b}"),
        }
        match dec.blocks[2] {
            BlockLabel::Hyperbolic { lambda } => assert!((lambda - 2.0).abs() < 1e-7),
            ref b => panic!("{b}"),
        }
        assert!(dec.reconstruction_error.unwrap() < 1e-6);
    }

    #[test]
    fn classifies_double_minus_jordan() {
        let blocks = [BlockLabel::N1 { eig: 1, b: -1 }, BlockLabel::N1 { eig: 1, b: -1 }];
        let dec = classify_blocks(&sm(&blocks), &Tolerances::default()).unwrap();
        assert_eq!(dec.blocks, blocks.to_vec());
        assert!(dec.reconstruction_error.unwrap() < 1e-9);
    }

    #[test]
    fn theta_orientation_above_pi() {
        let dec = classify_blocks(&sm(&[BlockLabel::R { theta: 4.5 }]), &Tolerances::default()).unwrap();
        match dec.blocks[0] {
            BlockLabel::R { theta } => assert!((theta - 4.5).abs() < 1e-9),
            ref b => panic!("{b}"),
        }
    }

    #[test]
    fn mixed_unit_blocks() {
        let blocks = [
            BlockLabel::N1 { eig: 1, b: 1 },
            BlockLabel::N1 { eig: 1, b: 0 },
            BlockLabel::N1 { eig: -1, b: -1 },
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = random_symplectic(3, &mut rng, 0.3);
        let m = sm(&blocks).conjugate_by(&p).unwrap();
        let dec = classify_blocks(&m, &Tolerances::default()).unwrap();
        assert_eq!(dec.blocks, blocks.to_vec(), "{}", dec.residual_report);
        assert!(dec.reconstruction_error.unwrap() < 1e-6);
    }

    #[test]
    fn quadruple_round_trip() {
        let blocks = [
            BlockLabel::N1 { eig: 1, b: 1 },
            BlockLabel::Quadruple { re: 1.2, im: 0.7 },
        ];
        let dec = classify_blocks(&sm(&blocks), &Tolerances::default()).unwrap();
        assert!(dec.is_complete(), "{}", dec.residual_report);
        match dec.blocks[1] {
            BlockLabel::Quadruple { re, im } => assert!((re - 1.2).abs() < 1e-9 && (im - 0.7).abs() < 1e-9),
            ref b => panic!("{b}"),
        }
        assert!(dec.reconstruction_error.unwrap() < 1e-9);
    }

    #[test]
    fn deep_jordan_goes_to_report() {
        // exp(JS) with JS nilpotent of order 4: a single length-4 chain at 1.
        let mut s = DMatrix::<f64>::zeros(4, 4);
        s[(1, 2)] = 1.0;
        s[(2, 1)] = 1.0;
        s[(3, 3)] = 1.0;
        let a = standard_form(2) * s;
        assert!((&a * &a * &a * &a).amax() < 1e-12 && (&a * &a * &a).amax() > 0.5);
        let m = a.exp();
        let sm = SymplecticMatrix::new(m).unwrap();
        let dec = classify_blocks(&sm, &Tolerances::default()).unwrap();
        assert!(!dec.is_complete());
    }

    #[test]
    fn splitting_table() {
        let a = splitting_data(&BlockLabel::N1 { eig: 1, b: 1 }).unwrap();
        assert_eq!((a.s_plus, a.nu_one, a.jump()), (1, 1, 1));
        let b = splitting_data(&BlockLabel::N1 { eig: 1, b: -1 }).unwrap();
        assert_eq!((b.s_plus, b.nu_one, b.jump()), (0, 1, -1));
        let double = [BlockLabel::N1 { eig: 1, b: -1 }; 2];
        assert_eq!(splitting_jump(&double).unwrap(), -2);
        assert!(splitting_data(&BlockLabel::N1 { eig: 1, b: 0 }).is_err());
        assert!(splitting_data(&BlockLabel::R { theta: 1.0 }).is_err());
    }

    #[test]
    fn matrix_json_round_trip() {
        let m = sm(&[BlockLabel::R { theta: 0.3 }]);
        let text = serde_json::to_string(&m).unwrap();
        let back: SymplecticMatrix = serde_json::from_str(&text).unwrap();
        assert_eq!(back.entries(), m.entries());
        assert!(serde_json::from_str::<SymplecticMatrix>("[[2,0],[0,2]]").is_err());
    }

    #[test]
    fn block_json_tags() {
        let s = serde_json::to_string(&BlockLabel::N1 { eig: -1, b: 0 }).unwrap();
        assert_eq!(s, r#"{"kind":"N1","eig":-1,"b":0}"#);
        let s = serde_json::to_string(&BlockLabel::Hyperbolic { lambda: 2.0 }).unwrap();
        assert_eq!(s, r#"{"kind":"hyp","lambda":2.0}"#);
    }
}
