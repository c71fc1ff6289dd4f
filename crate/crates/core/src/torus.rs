//! Discrete complex calculus on the unit flat torus `C / (Z + iZ)`.
//!
//! Points are `z = x + iy` with `x_j = j/n`, `y_k = k/n`; a field value for
//! `(j, k)` lives at index `j * n + k`. The Kähler form is `dx ∧ dy`, so the
//! total volume is one and the normalized mean coincides with the integral.
//!
//! Conventions used throughout the crate:
//!
//! ```text
//! ∂  = (∂x − i ∂y) / 2          ∂̄ = (∂x + i ∂y) / 2
//! Δ  = (∂x² + ∂y²) / 2 = 2 ∂∂̄    Λ√-1 (dz ∧ dz̄) = 2
//! ```
//!
//! With this scaling `Λ√-1 ∂̄∂u = −Δu`.
//!
//! All derivatives are Fourier-spectral. First derivatives drop the Nyquist
//! mode; the Laplacian keeps it.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Direction of a first-order complex derivative.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DerivativeMode {
    /// `∂ = (∂x − i∂y)/2`, produces a `dz` coefficient.
    Holo,
    /// `∂̄ = (∂x + i∂y)/2`, produces a `dz̄` coefficient.
    Antiholo,
}

/// How to read the values of a [`ComplexField`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoefficientKind {
    Function,
    Dz,
    Dzbar,
    /// Coefficient of `dz ∧ dz̄`.
    DzDzbar,
}

struct Plans {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

/// Periodic `n × n` grid together with its cached FFT plans.
#[derive(Clone)]
pub struct Grid {
    n: usize,
    plans: Arc<Plans>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid").field("n", &self.n).finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n
    }
}

/// Real function sampled on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    n: usize,
    values: Vec<f64>,
}

/// Complex coefficient sampled on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    n: usize,
    values: Vec<Complex64>,
    kind: CoefficientKind,
}

impl Grid {
    pub fn new(n: usize) -> Result<Self> {
        if n < 8 || n % 2 != 0 {
            return Err(Error::InvalidParameter {
                name: "n",
                constraint: format!("must be even and >= 8, got {n}"),
            });
        }
        let mut planner = FftPlanner::new();
        let plans = Plans {
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        };
        Ok(Self {
            n,
            plans: Arc::new(plans),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of grid points, `n²`.
    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// Coordinates `(x_j, y_k)` of flat index `p`.
    pub fn coords(&self, p: usize) -> (f64, f64) {
        let (j, k) = (p / self.n, p % self.n);
        (j as f64 / self.n as f64, k as f64 / self.n as f64)
    }

    /// Signed integer wavenumber of FFT index `i`; the Nyquist index maps to `-n/2`.
    pub fn wavenumber(&self, i: usize) -> i64 {
        if i < self.n / 2 {
            i as i64
        } else {
            i as i64 - self.n as i64
        }
    }

    fn first_derivative_wavenumber(&self, i: usize) -> f64 {
        if i == self.n / 2 {
            0.0
        } else {
            self.wavenumber(i) as f64
        }
    }

    pub fn scalar(&self, values: Vec<f64>) -> Result<ScalarField> {
        ScalarField::new(self.n, values)
    }

    pub fn constant(&self, c: f64) -> ScalarField {
        ScalarField {
            n: self.n,
            values: vec![c; self.len()],
        }
    }

    pub fn zeros(&self) -> ScalarField {
        self.constant(0.0)
    }

    /// Samples `f(x, y)` at every grid point.
    pub fn sample(&self, f: impl Fn(f64, f64) -> f64) -> ScalarField {
        let values = (0..self.len())
            .map(|p| {
                let (x, y) = self.coords(p);
                f(x, y)
            })
            .collect();
        ScalarField { n: self.n, values }
    }

    /// In-place 2D FFT. The inverse transform is normalized by `1/n²`.
    pub fn fft2(&self, data: &mut [Complex64], inverse: bool) {
        let n = self.n;
        assert_eq!(data.len(), n * n, "fft2: buffer has wrong length");
        let plan = if inverse {
            &self.plans.inverse
        } else {
            &self.plans.forward
        };
        // y direction: contiguous rows
        plan.process(data);
        // x direction: strided columns
        let mut column = vec![Complex64::new(0.0, 0.0); n];
        for k in 0..n {
            for j in 0..n {
                column[j] = data[j * n + k];
            }
            plan.process(&mut column);
            for j in 0..n {
                data[j * n + k] = column[j];
            }
        }
        if inverse {
            let scale = 1.0 / (n * n) as f64;
            data.iter_mut().for_each(|v| *v *= scale);
        }
    }

    /// Multiplies the spectrum of `data` by `symbol(i, j)` (FFT indices).
    fn apply_symbol(&self, data: &mut [Complex64], symbol: impl Fn(usize, usize) -> Complex64) {
        let n = self.n;
        self.fft2(data, false);
        for i in 0..n {
            for j in 0..n {
                data[i * n + j] *= symbol(i, j);
            }
        }
        self.fft2(data, true);
    }

    fn derivative_symbol(&self, mode: DerivativeMode) -> impl Fn(usize, usize) -> Complex64 + '_ {
        move |i, j| {
            let kx = self.first_derivative_wavenumber(i);
            let ky = self.first_derivative_wavenumber(j);
            // ∂x -> 2πi kx, ∂y -> 2πi ky
            match mode {
                DerivativeMode::Holo => Complex64::new(PI * ky, PI * kx),
                DerivativeMode::Antiholo => Complex64::new(-PI * ky, PI * kx),
            }
        }
    }

    fn laplacian_symbol(&self, i: usize, j: usize) -> f64 {
        let kx = self.wavenumber(i) as f64;
        let ky = self.wavenumber(j) as f64;
        -2.0 * PI * PI * (kx * kx + ky * ky)
    }

    /// Spectral `∂` or `∂̄` of raw complex samples.
    pub fn derivative_raw(&self, u: &[Complex64], mode: DerivativeMode) -> Vec<Complex64> {
        let mut data = u.to_vec();
        self.apply_symbol(&mut data, self.derivative_symbol(mode));
        data
    }

    /// Spectral `∂` or `∂̄` of a real function.
    pub fn derivative(&self, u: &ScalarField, mode: DerivativeMode) -> ComplexField {
        let data: Vec<Complex64> = u.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        ComplexField {
            n: self.n,
            values: self.derivative_raw(&data, mode),
            kind: match mode {
                DerivativeMode::Holo => CoefficientKind::Dz,
                DerivativeMode::Antiholo => CoefficientKind::Dzbar,
            },
        }
    }

    /// Spectral `∂` or `∂̄` of a complex coefficient. Applying `∂̄` to a `dz`
    /// coefficient yields a `dz ∧ dz̄` density (up to the wedge sign the caller tracks).
    pub fn derivative_complex(&self, u: &ComplexField, mode: DerivativeMode) -> ComplexField {
        let kind = match (u.kind, mode) {
            (CoefficientKind::Function, DerivativeMode::Holo) => CoefficientKind::Dz,
            (CoefficientKind::Function, DerivativeMode::Antiholo) => CoefficientKind::Dzbar,
            _ => CoefficientKind::DzDzbar,
        };
        ComplexField {
            n: self.n,
            values: self.derivative_raw(&u.values, mode),
            kind,
        }
    }

    pub fn laplacian_raw(&self, u: &[Complex64]) -> Vec<Complex64> {
        let mut data = u.to_vec();
        self.apply_symbol(&mut data, |i, j| Complex64::new(self.laplacian_symbol(i, j), 0.0));
        data
    }

    /// `Δu = (u_xx + u_yy)/2`.
    pub fn laplacian(&self, u: &ScalarField) -> ScalarField {
        self.real_filter(u, |i, j| self.laplacian_symbol(i, j))
    }

    /// Solves `Δu = ρ − mean(ρ)` with `mean(u) = 0`.
    pub fn poisson_solve(&self, rho: &ScalarField) -> ScalarField {
        self.real_filter(rho, |i, j| {
            if i == 0 && j == 0 {
                0.0
            } else {
                1.0 / self.laplacian_symbol(i, j)
            }
        })
    }

    /// Solves `(c − Δ) u = ρ` for `c > 0`.
    pub fn helmholtz_solve(&self, c: f64, rho: &ScalarField) -> ScalarField {
        self.real_filter(rho, |i, j| 1.0 / (c - self.laplacian_symbol(i, j)))
    }

    /// Applies a real, even Fourier multiplier to a real field.
    pub fn real_filter(&self, u: &ScalarField, symbol: impl Fn(usize, usize) -> f64) -> ScalarField {
        let mut data: Vec<Complex64> = u.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.apply_symbol(&mut data, |i, j| Complex64::new(symbol(i, j), 0.0));
        ScalarField {
            n: self.n,
            values: data.into_iter().map(|c| c.re).collect(),
        }
    }

    /// In-place real multiplier on a raw real slice (used by preconditioners).
    pub fn real_filter_slice(&self, u: &mut [f64], symbol: impl Fn(usize, usize) -> f64) {
        let mut data: Vec<Complex64> = u.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.apply_symbol(&mut data, |i, j| Complex64::new(symbol(i, j), 0.0));
        for (dst, src) in u.iter_mut().zip(data) {
            *dst = src.re;
        }
    }

    /// Symbol of `Δ` at FFT indices `(i, j)`; exposed for preconditioners.
    pub fn laplacian_eigenvalue(&self, i: usize, j: usize) -> f64 {
        self.laplacian_symbol(i, j)
    }

    /// Symbol of `2∂∂̄` built from the first-derivative symbols; differs from
    /// [`Grid::laplacian_eigenvalue`] only on Nyquist modes.
    pub fn composed_laplacian_eigenvalue(&self, i: usize, j: usize) -> f64 {
        let kx = self.first_derivative_wavenumber(i);
        let ky = self.first_derivative_wavenumber(j);
        -2.0 * PI * PI * (kx * kx + ky * ky)
    }

    /// Trigonometric interpolation of complex samples onto an `m × m` grid.
    /// Exact for fields without energy above the coarser Nyquist frequency.
    pub fn resample_raw(&self, u: &[Complex64], target: &Grid) -> Vec<Complex64> {
        let (n, m) = (self.n, target.n);
        let mut spec = u.to_vec();
        self.fft2(&mut spec, false);
        let mut out = vec![Complex64::new(0.0, 0.0); m * m];
        let scale = (m * m) as f64 / (n * n) as f64;
        let lim = n.min(m) / 2;
        let map = |k: i64, size: usize| -> usize { k.rem_euclid(size as i64) as usize };
        for i in 0..n {
            let kx = self.wavenumber(i);
            if kx.unsigned_abs() as usize >= lim {
                continue;
            }
            for j in 0..n {
                let ky = self.wavenumber(j);
                if ky.unsigned_abs() as usize >= lim {
                    continue;
                }
                out[map(kx, m) * m + map(ky, m)] = spec[i * n + j] * scale;
            }
        }
        target.fft2(&mut out, true);
        out
    }

    pub fn resample(&self, u: &ScalarField, target: &Grid) -> ScalarField {
        let data: Vec<Complex64> = u.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        ScalarField {
            n: target.n,
            values: self
                .resample_raw(&data, target)
                .into_iter()
                .map(|c| c.re)
                .collect(),
        }
    }
}

impl ScalarField {
    pub fn new(n: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n * n {
            return Err(Error::Shape(format!(
                "scalar field needs {} values, got {}",
                n * n,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "scalar field" });
        }
        Ok(Self { n, values })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn at(&self, p: usize) -> f64 {
        self.values[p]
    }

    /// Arithmetic average in index order (fixed reduction order).
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `max(u) − min(u)`.
    pub fn oscillation(&self) -> f64 {
        self.max() - self.min()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField {
            n: self.n,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> ScalarField {
        assert_eq!(self.n, other.n, "zip_map: grid mismatch");
        ScalarField {
            n: self.n,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// `a·self + b·other`.
    pub fn axpby(&self, a: f64, other: &ScalarField, b: f64) -> ScalarField {
        self.zip_map(other, |u, v| a * u + b * v)
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

impl ComplexField {
    pub fn new(n: usize, values: Vec<Complex64>, kind: CoefficientKind) -> Result<Self> {
        if values.len() != n * n {
            return Err(Error::Shape(format!(
                "complex field needs {} values, got {}",
                n * n,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::NonFinite { what: "complex field" });
        }
        Ok(Self { n, values, kind })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> CoefficientKind {
        self.kind
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.norm()))
    }
}

/// One term `re·cos(2π(kx x + ky y)) + im·sin(2π(kx x + ky y))` of a real trigonometric polynomial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FourierMode {
    pub kx: i64,
    pub ky: i64,
    pub re: f64,
    pub im: f64,
}

impl FourierMode {
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let phase = 2.0 * PI * (self.kx as f64 * x + self.ky as f64 * y);
        self.re * phase.cos() + self.im * phase.sin()
    }
}

/// Samples a real trigonometric polynomial.
pub fn trig_polynomial(grid: &Grid, modes: &[FourierMode]) -> ScalarField {
    grid.sample(|x, y| modes.iter().map(|m| m.eval(x, y)).sum())
}

/// Random nonconstant modes with `1 ≤ max(|kx|, |ky|) ≤ kmax`, coefficients uniform in `[-1, 1]`.
pub fn random_modes<R: Rng>(rng: &mut R, kmax: i64) -> Vec<FourierMode> {
    let mut modes = Vec::new();
    for kx in 0..=kmax {
        for ky in -kmax..=kmax {
            // one representative per ±k pair
            if kx == 0 && ky <= 0 {
                continue;
            }
            modes.push(FourierMode {
                kx,
                ky,
                re: rng.gen_range(-1.0..1.0),
                im: rng.gen_range(-1.0..1.0),
            });
        }
    }
    modes
}

/// Zero-mean band-limited random field rescaled so that `max |u| = amplitude`.
pub fn random_band_limited<R: Rng>(grid: &Grid, rng: &mut R, kmax: i64, amplitude: f64) -> ScalarField {
    let modes = random_modes(rng, kmax);
    let u = trig_polynomial(grid, &modes);
    let scale = amplitude / u.max_abs().max(f64::MIN_POSITIVE);
    u.map(|v| v * scale)
}
