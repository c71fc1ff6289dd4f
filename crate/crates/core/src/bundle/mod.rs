//! Endomorphism fields of the trivialized bundle `E = X × Cʳ`.
//!
//! The reference metric `h₀` is the standard one in the chosen frame and its
//! Chern connection is `d + A`, `A = A¹⁰ dz + A⁰¹ dz̄`, `A¹⁰ = −(A⁰¹)†`.
//! Unknown metrics are written `g = exp H` with `H` traceless Hermitian.
//!
//! Covariant operators on `End E`:
//!
//! ```text
//! ∂₀ T       = ∂T + [A¹⁰, T]                         (dz coefficient)
//! ∂̄_End(S dz) = (∂̄S + [A⁰¹, S]) dz̄ ∧ dz
//! D(g)       = Λ√-1 ∂̄_End(g⁻¹ ∂₀ g) = −2 (∂̄S + [A⁰¹, S]),  S = g⁻¹∂₀g
//! ```

pub mod linalg;

use std::ops::Deref;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::torus::{DerivativeMode, Grid, ScalarField};
use linalg::{c, commutator, from_eig, herm_eig, log_derivative, to_frame, CMat};

/// Tolerance used by the Hermitian/traceless field invariants.
pub const FIELD_TOL: f64 = 1e-12;

/// An `r × r` complex matrix at every grid point, stored point-major with
/// row-major blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixField {
    n: usize,
    r: usize,
    data: Vec<Complex64>,
}

impl MatrixField {
    pub fn zeros(n: usize, r: usize) -> Self {
        Self {
            n,
            r,
            data: vec![Complex64::new(0.0, 0.0); n * n * r * r],
        }
    }

    pub fn constant(n: usize, m: &CMat) -> Self {
        let r = m.nrows();
        let mut out = Self::zeros(n, r);
        for p in 0..n * n {
            out.set(p, m);
        }
        out
    }

    pub fn identity(n: usize, r: usize) -> Self {
        Self::constant(n, &CMat::identity(r, r))
    }

    /// Builds a field point by point (in parallel; the result is deterministic).
    pub fn from_fn(n: usize, r: usize, f: impl Fn(usize) -> CMat + Sync) -> Self {
        let blocks: Vec<CMat> = (0..n * n).into_par_iter().map(&f).collect();
        let mut data = Vec::with_capacity(n * n * r * r);
        for m in &blocks {
            debug_assert_eq!(m.nrows(), r);
            for i in 0..r {
                for j in 0..r {
                    data.push(m[(i, j)]);
                }
            }
        }
        Self { n, r, data }
    }

    /// Diagonal field `diag(u₁, …, u_r)`.
    pub fn diagonal(entries: &[ScalarField]) -> Self {
        let r = entries.len();
        let n = entries[0].n();
        Self::from_fn(n, r, |p| {
            let mut m = CMat::zeros(r, r);
            for (i, u) in entries.iter().enumerate() {
                m[(i, i)] = c(u.at(p));
            }
            m
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn points(&self) -> usize {
        self.n * self.n
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn at(&self, p: usize) -> CMat {
        let rr = self.r * self.r;
        CMat::from_row_slice(self.r, self.r, &self.data[p * rr..(p + 1) * rr])
    }

    pub fn entry(&self, p: usize, i: usize, j: usize) -> Complex64 {
        self.data[p * self.r * self.r + i * self.r + j]
    }

    pub fn set(&mut self, p: usize, m: &CMat) {
        let r = self.r;
        let base = p * r * r;
        for i in 0..r {
            for j in 0..r {
                self.data[base + i * r + j] = m[(i, j)];
            }
        }
    }

    pub fn component(&self, i: usize, j: usize) -> Vec<Complex64> {
        let rr = self.r * self.r;
        (0..self.points())
            .map(|p| self.data[p * rr + i * self.r + j])
            .collect()
    }

    pub fn set_component(&mut self, i: usize, j: usize, values: &[Complex64]) {
        let (rr, r) = (self.r * self.r, self.r);
        for (p, v) in values.iter().enumerate() {
            self.data[p * rr + i * r + j] = *v;
        }
    }

    /// Real part of the `(i, i)` entry as a scalar field.
    pub fn diagonal_entry(&self, i: usize) -> ScalarField {
        let values = (0..self.points()).map(|p| self.entry(p, i, i).re).collect();
        ScalarField::new(self.n, values).expect("finite diagonal entry")
    }

    pub fn map(&self, f: impl Fn(usize, &CMat) -> CMat + Sync) -> MatrixField {
        Self::from_fn(self.n, self.r, |p| f(p, &self.at(p)))
    }

    pub fn zip_map(&self, other: &MatrixField, f: impl Fn(&CMat, &CMat) -> CMat + Sync) -> MatrixField {
        assert_eq!((self.n, self.r), (other.n, other.r), "zip_map: shape mismatch");
        Self::from_fn(self.n, self.r, |p| f(&self.at(p), &other.at(p)))
    }

    pub fn scale(&self, s: f64) -> MatrixField {
        MatrixField {
            n: self.n,
            r: self.r,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    /// `a·self + b·other`.
    pub fn axpby(&self, a: f64, other: &MatrixField, b: f64) -> MatrixField {
        assert_eq!((self.n, self.r), (other.n, other.r), "axpby: shape mismatch");
        MatrixField {
            n: self.n,
            r: self.r,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(x, y)| x * a + y * b)
                .collect(),
        }
    }

    pub fn adjoint(&self) -> MatrixField {
        self.map(|_, m| m.adjoint())
    }

    /// `U M U†` at every point for a constant unitary `U`.
    pub fn conjugate_by(&self, u: &CMat) -> MatrixField {
        self.map(|_, m| u * m * u.adjoint())
    }

    /// Largest Frobenius norm over the grid.
    pub fn max_norm(&self) -> f64 {
        (0..self.points())
            .map(|p| linalg::frob_norm(&self.at(p)))
            .fold(0.0, f64::max)
    }

    /// Root mean square of the pointwise Frobenius norm.
    pub fn rms(&self) -> f64 {
        (self.data.iter().map(|v| v.norm_sqr()).sum::<f64>() / self.points() as f64).sqrt()
    }

    pub fn trace_field(&self) -> Vec<Complex64> {
        (0..self.points()).map(|p| linalg::trace(&self.at(p))).collect()
    }

    /// `max_p ‖M − M†‖ / (1 + ‖M‖)`.
    pub fn hermiticity_defect(&self) -> f64 {
        (0..self.points())
            .map(|p| {
                let m = self.at(p);
                linalg::frob_norm(&(&m - m.adjoint())) / (1.0 + linalg::frob_norm(&m))
            })
            .fold(0.0, f64::max)
    }

    /// `max_p |tr M| / (1 + ‖M‖)`.
    pub fn trace_defect(&self) -> f64 {
        (0..self.points())
            .map(|p| {
                let m = self.at(p);
                linalg::trace(&m).norm() / (1.0 + linalg::frob_norm(&m))
            })
            .fold(0.0, f64::max)
    }

    /// Entrywise spectral `∂` or `∂̄`.
    pub fn derivative(&self, grid: &Grid, mode: DerivativeMode) -> MatrixField {
        let mut out = MatrixField::zeros(self.n, self.r);
        for i in 0..self.r {
            for j in 0..self.r {
                let d = grid.derivative_raw(&self.component(i, j), mode);
                out.set_component(i, j, &d);
            }
        }
        out
    }

    pub fn resample(&self, grid: &Grid, target: &Grid) -> MatrixField {
        let mut out = MatrixField::zeros(target.n(), self.r);
        for i in 0..self.r {
            for j in 0..self.r {
                out.set_component(i, j, &grid.resample_raw(&self.component(i, j), target));
            }
        }
        out
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }
}

/// Hermitian matrix field, optionally traceless.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianField {
    field: MatrixField,
    traceless: bool,
}

impl Deref for HermitianField {
    type Target = MatrixField;
    fn deref(&self) -> &MatrixField {
        &self.field
    }
}

impl HermitianField {
    /// Validates the Hermitian (and, if requested, traceless) invariants.
    pub fn new(field: MatrixField, traceless: bool) -> Result<Self> {
        if !field.all_finite() {
            return Err(Error::NonFinite { what: "Hermitian field" });
        }
        let defect = field.hermiticity_defect();
        if defect > FIELD_TOL {
            return Err(Error::Shape(format!("field is not Hermitian (defect {defect:e})")));
        }
        if traceless {
            let tr = field.trace_defect();
            if tr > FIELD_TOL {
                return Err(Error::Shape(format!("field is not traceless (defect {tr:e})")));
            }
        }
        Ok(Self { field, traceless })
    }

    /// Projects onto Hermitian (and optionally trace-free) matrices pointwise.
    pub fn project(field: &MatrixField, traceless: bool) -> Self {
        let field = field.map(|_, m| {
            let h = linalg::hermitize(m);
            if traceless {
                linalg::trace_free(&h)
            } else {
                h
            }
        });
        Self { field, traceless }
    }

    pub fn zeros(n: usize, r: usize) -> Self {
        Self {
            field: MatrixField::zeros(n, r),
            traceless: true,
        }
    }

    pub fn diagonal(entries: &[ScalarField]) -> Self {
        let field = MatrixField::diagonal(entries);
        let traceless = field.trace_defect() <= FIELD_TOL;
        Self { field, traceless }
    }

    pub fn constant(n: usize, m: &CMat) -> Result<Self> {
        let field = MatrixField::constant(n, m);
        let traceless = field.trace_defect() <= FIELD_TOL;
        Self::new(field, traceless)
    }

    pub fn is_traceless(&self) -> bool {
        self.traceless
    }

    pub fn as_field(&self) -> &MatrixField {
        &self.field
    }

    pub fn into_field(self) -> MatrixField {
        self.field
    }

    pub fn scale(&self, s: f64) -> HermitianField {
        Self {
            field: self.field.scale(s),
            traceless: self.traceless,
        }
    }

    pub fn conjugate_by(&self, u: &CMat) -> HermitianField {
        Self {
            field: self.field.conjugate_by(u),
            traceless: self.traceless,
        }
    }
}

/// Frame connection `A⁰¹` of the reference metric (a `dz̄` coefficient field).
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectionData {
    a01: MatrixField,
}

impl ConnectionData {
    pub fn new(a01: MatrixField) -> Result<Self> {
        if !a01.all_finite() {
            return Err(Error::NonFinite { what: "connection" });
        }
        Ok(Self { a01 })
    }

    pub fn zero(n: usize, r: usize) -> Self {
        Self {
            a01: MatrixField::zeros(n, r),
        }
    }

    pub fn a01(&self) -> &MatrixField {
        &self.a01
    }

    /// `A¹⁰ = −(A⁰¹)†`.
    pub fn a10(&self) -> MatrixField {
        self.a01.map(|_, m| -m.adjoint())
    }

    pub fn is_zero(&self) -> bool {
        self.a01.data().iter().all(|v| *v == Complex64::new(0.0, 0.0))
    }

    pub fn conjugate_by(&self, u: &CMat) -> ConnectionData {
        Self {
            a01: self.a01.conjugate_by(u),
        }
    }

    pub fn resample(&self, grid: &Grid, target: &Grid) -> ConnectionData {
        Self {
            a01: self.a01.resample(grid, target),
        }
    }

    /// Mean curvature `Λ√-1 F_A = 2 (∂A⁰¹ − ∂̄A¹⁰ + [A¹⁰, A⁰¹])` of the connection.
    pub fn curvature(&self, grid: &Grid) -> HermitianField {
        let a10 = self.a10();
        let d_a01 = self.a01.derivative(grid, DerivativeMode::Holo);
        let db_a10 = a10.derivative(grid, DerivativeMode::Antiholo);
        let f = MatrixField::from_fn(self.a01.n, self.a01.r, |p| {
            let (x, y) = (a10.at(p), self.a01.at(p));
            (d_a01.at(p) - db_a10.at(p) + commutator(&x, &y)) * c(2.0)
        });
        HermitianField::project(&f, false)
    }
}

/// Sorted pointwise eigendecomposition of a Hermitian field.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenField {
    n: usize,
    r: usize,
    values: Vec<f64>,
    vectors: Vec<CMat>,
}

impl EigenField {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn r(&self) -> usize {
        self.r
    }

    /// Eigenvalues at point `p`, descending.
    pub fn eigenvalues(&self, p: usize) -> &[f64] {
        &self.values[p * self.r..(p + 1) * self.r]
    }

    /// Unitary matrix whose columns are the eigenvectors at `p`.
    pub fn vectors(&self, p: usize) -> &CMat {
        &self.vectors[p]
    }

    /// `λ_i` as a scalar field.
    pub fn eigenvalue_field(&self, i: usize) -> ScalarField {
        let values = (0..self.n * self.n).map(|p| self.values[p * self.r + i]).collect();
        ScalarField::new(self.n, values).expect("finite eigenvalues")
    }

    /// `min_i (λ_i − λ_{i+1})` at `p`; infinite for rank one.
    pub fn gap(&self, p: usize) -> f64 {
        self.eigenvalues(p)
            .windows(2)
            .map(|w| w[0] - w[1])
            .fold(f64::INFINITY, f64::min)
    }

    /// Gap below the top eigenvalue at `p`.
    pub fn top_gap(&self, p: usize) -> f64 {
        let l = self.eigenvalues(p);
        if l.len() < 2 {
            f64::INFINITY
        } else {
            l[0] - l[1]
        }
    }

    /// `U diag(f(λ)) U†`.
    pub fn apply(&self, f: impl Fn(f64) -> f64 + Sync) -> MatrixField {
        MatrixField::from_fn(self.n, self.r, |p| {
            let d: Vec<f64> = self.eigenvalues(p).iter().map(|&x| f(x)).collect();
            from_eig(&self.vectors[p], &d)
        })
    }
}

/// Pointwise descending eigendecomposition with phase-fixed eigenvectors.
pub fn eig_sorted(h: &MatrixField) -> EigenField {
    let (n, r) = (h.n(), h.r());
    let pairs: Vec<(Vec<f64>, CMat)> = (0..h.points()).into_par_iter().map(|p| herm_eig(&h.at(p))).collect();
    let mut values = Vec::with_capacity(h.points() * r);
    let mut vectors = Vec::with_capacity(h.points());
    for (l, u) in pairs {
        values.extend(l);
        vectors.push(u);
    }
    EigenField { n, r, values, vectors }
}

/// Pointwise top eigenvalue `λ_max = λ₁`.
pub fn lambda_max_field(h: &MatrixField) -> ScalarField {
    eig_sorted(h).eigenvalue_field(0)
}

/// `exp H` through the eigendecomposition.
pub fn exp_herm(h: &HermitianField) -> HermitianField {
    let g = eig_sorted(h).apply(f64::exp);
    HermitianField::project(&g, false)
}

/// Inverse of [`exp_herm`] on positive definite fields.
pub fn log_spd(g: &HermitianField) -> Result<HermitianField> {
    let eig = eig_sorted(g);
    for p in 0..g.points() {
        let lo = *eig.eigenvalues(p).last().unwrap();
        if lo <= 0.0 || !lo.is_finite() {
            return Err(Error::NotPositiveDefinite {
                point: p,
                min_eigenvalue: lo,
            });
        }
    }
    let h = eig.apply(f64::ln);
    let traceless = h.trace_defect() <= 1e-10;
    Ok(HermitianField::project(&h, traceless))
}

/// `∂₀T = ∂T + [A¹⁰, T]` (a `dz` coefficient).
pub fn covariant_d0(grid: &Grid, t: &MatrixField, a: &ConnectionData) -> MatrixField {
    let dt = t.derivative(grid, DerivativeMode::Holo);
    if a.is_zero() {
        return dt;
    }
    let a10 = a.a10();
    MatrixField::from_fn(t.n(), t.r(), |p| dt.at(p) + commutator(&a10.at(p), &t.at(p)))
}

/// `∇''T = ∂̄T + [A⁰¹, T]` (a `dz̄` coefficient).
pub fn covariant_dbar(grid: &Grid, t: &MatrixField, a: &ConnectionData) -> MatrixField {
    let dt = t.derivative(grid, DerivativeMode::Antiholo);
    if a.is_zero() {
        return dt;
    }
    MatrixField::from_fn(t.n(), t.r(), |p| dt.at(p) + commutator(&a.a01.at(p), &t.at(p)))
}

/// `∂̄_End` of an End-valued `(1,0)`-form `S dz`, returned as the coefficient of
/// `dz ∧ dz̄`, i.e. `−(∂̄S + A⁰¹S − SA⁰¹)` (since `dz̄ ∧ dz = −dz ∧ dz̄`).
/// Multiply by 2 for the `Λ√-1` contraction.
pub fn dbar_end(grid: &Grid, s: &MatrixField, a: &ConnectionData) -> MatrixField {
    covariant_dbar(grid, s, a).scale(-1.0)
}

/// `Λ√-1` of a `dz ∧ dz̄` coefficient.
pub fn lambda_contract(density: &MatrixField) -> MatrixField {
    density.scale(2.0)
}

/// `g⁻¹∂₀g` for `g = exp H`, evaluated from `∂₀H` with the Daleckii–Krein kernel.
pub fn frame_log_derivative(grid: &Grid, eig: &EigenField, h: &MatrixField, a: &ConnectionData) -> MatrixField {
    let d0h = covariant_d0(grid, h, a);
    MatrixField::from_fn(h.n(), h.r(), |p| log_derivative(eig.eigenvalues(p), eig.vectors(p), &d0h.at(p)))
}

/// `D(g) = Λ√-1 ∂̄_End(g⁻¹∂₀g)` for `g = exp H`.
pub fn demailly_d(grid: &Grid, h: &HermitianField, a: &ConnectionData) -> Result<MatrixField> {
    let eig = eig_sorted(h);
    demailly_d_with(grid, &eig, h, a)
}

pub(crate) fn demailly_d_with(grid: &Grid, eig: &EigenField, h: &MatrixField, a: &ConnectionData) -> Result<MatrixField> {
    for p in 0..h.points() {
        if eig.eigenvalues(p)[0] > 700.0 {
            return Err(Error::NotPositiveDefinite {
                point: p,
                min_eigenvalue: (-eig.eigenvalues(p)[0]).exp(),
            });
        }
    }
    let s = frame_log_derivative(grid, eig, h, a);
    let d = lambda_contract(&dbar_end(grid, &s, a));
    if !d.all_finite() {
        return Err(Error::NonFinite { what: "D(g)" });
    }
    Ok(d)
}

/// Connection coefficients of the eigenframe of `H`.
#[derive(Debug, Clone)]
pub struct EigenframeConnection {
    pub eig: EigenField,
    /// `C_{i,j}` at each point, row-major `r × r`.
    pub c: Vec<f64>,
    /// Points where the spectral gap is at least the floor.
    pub mask: Vec<bool>,
}

impl EigenframeConnection {
    pub fn c_at(&self, p: usize, i: usize, j: usize) -> f64 {
        let r = self.eig.r;
        self.c[p * r * r + i * r + j]
    }
}

/// Eigenframe connection coefficients `C_{i,j} = −Λ√-1 ((Ã¹⁰)ʲᵢ ∧ (Ã⁰¹)ⁱⱼ) = 2 |(Ã⁰¹)ⁱⱼ|²`.
///
/// `Ã⁰¹ = U†(∂̄U + A⁰¹U)` is not formed from derivatives of the (non-smooth,
/// phase-dependent) eigenvectors; instead its off-diagonal entries are read off
/// `U†(∇''H)U = ∂̄Λ + [Ã⁰¹, Λ]`, i.e. `(Ã⁰¹)ᵢⱼ = (U†∇''H U)ᵢⱼ / (λⱼ − λᵢ)`.
pub fn eigenframe_connection(grid: &Grid, h: &MatrixField, a: &ConnectionData, gap_floor: f64) -> EigenframeConnection {
    let eig = eig_sorted(h);
    let dbar_h = covariant_dbar(grid, h, a);
    let r = h.r();
    let per_point: Vec<(Vec<f64>, bool)> = (0..h.points())
        .into_par_iter()
        .map(|p| {
            let lam = eig.eigenvalues(p);
            let b = to_frame(eig.vectors(p), &dbar_h.at(p));
            let mut cp = vec![0.0; r * r];
            for i in 0..r {
                for j in 0..r {
                    let d = lam[j] - lam[i];
                    if i != j && d.abs() > 1e-300 {
                        cp[i * r + j] = 2.0 * (b[(i, j)] / d).norm_sqr();
                    }
                }
            }
            (cp, eig.gap(p) >= gap_floor)
        })
        .collect();
    let mut c_all = Vec::with_capacity(h.points() * r * r);
    let mut mask = Vec::with_capacity(h.points());
    for (cp, m) in per_point {
        c_all.extend(cp);
        mask.push(m);
    }
    EigenframeConnection { eig, c: c_all, mask }
}

/// Seeded smooth traceless Hermitian field: each coordinate in the orthonormal
/// basis is a zero-mean band-limited field with `max |·| = amp`.
pub fn random_traceless(grid: &Grid, r: usize, seed: u64, kmax: i64, amp: f64) -> HermitianField {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let basis = linalg::traceless_hermitian_basis(r);
    let coeffs: Vec<ScalarField> = basis
        .iter()
        .map(|_| crate::torus::random_band_limited(grid, &mut rng, kmax, amp))
        .collect();
    let f = MatrixField::from_fn(grid.n(), r, |p| {
        let mut m = CMat::zeros(r, r);
        for (b, u) in basis.iter().zip(&coeffs) {
            m += b * c(u.at(p));
        }
        m
    });
    HermitianField::project(&f, true)
}
