//! The coupled system for `h = e^{−f} exp(H) h₀` along the continuity path
//!
//! ```text
//! det(β/r + Δf − e^f H + (1−t)α) = e^{λf} a₀
//! c° + D°(exp H) + e^f H = 0
//! ```
//!
//! together with its t = 0 setup, a Newton–Krylov solver and the decoupled
//! direct-sum variant used as an oracle.

mod direct_sum;
mod krylov;
mod newton;
mod residual;
mod setup;

pub use direct_sum::{solve_direct_sum, DirectSumData};
pub use krylov::{gmres, GmresReport};
pub use newton::{newton, newton_solve, NewtonFailure, NewtonReport, NonlinearSystem};
pub use residual::{apply_linearization, assemble_m, cushioned_residual, min_eig_m, residual, Linearization};
pub use setup::{setup_t0, solve_cushioned, solve_cushioned_from};

use crate::bundle::linalg::{self, c, CMat};
use crate::bundle::{ConnectionData, HermitianField, MatrixField};
use crate::error::{Error, Result};
use crate::torus::{Grid, ScalarField};

/// Background data of the system; independent of `t`.
#[derive(Debug, Clone)]
pub struct SystemParams {
    grid: Grid,
    pub r: usize,
    /// `Λ tr √-1F₀`.
    pub beta: ScalarField,
    /// Trace-free part of `Λ√-1F₀`.
    pub c0: HermitianField,
    pub a: ConnectionData,
    pub alpha: f64,
    pub lambda_exp: f64,
    pub a0: ScalarField,
}

impl SystemParams {
    pub fn new(
        grid: &Grid,
        beta: ScalarField,
        c0: HermitianField,
        a: ConnectionData,
        alpha: f64,
        lambda_exp: f64,
        a0: ScalarField,
    ) -> Result<Self> {
        let n = grid.n();
        let r = c0.r();
        if beta.n() != n || c0.n() != n || a.a01().n() != n || a.a01().r() != r || a0.n() != n {
            return Err(Error::Shape("system parameters live on different grids".into()));
        }
        if !c0.is_traceless() {
            return Err(Error::InvalidParameter {
                name: "c0",
                constraint: "must be traceless".into(),
            });
        }
        if !(alpha > 0.0) {
            return Err(Error::InvalidParameter {
                name: "alpha",
                constraint: format!("must be positive, got {alpha}"),
            });
        }
        if !(lambda_exp > 0.0) {
            return Err(Error::InvalidParameter {
                name: "lambda_exp",
                constraint: format!("must be positive, got {lambda_exp}"),
            });
        }
        if !(a0.min() > 0.0) {
            return Err(Error::InvalidParameter {
                name: "a0",
                constraint: format!("must be positive, got minimum {}", a0.min()),
            });
        }
        Ok(Self {
            grid: grid.clone(),
            r,
            beta,
            c0,
            a,
            alpha,
            lambda_exp,
            a0,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn n(&self) -> usize {
        self.grid.n()
    }

    /// `deg E = ∫ β`.
    pub fn degree(&self) -> f64 {
        self.beta.mean()
    }

    /// Conjugates every matrix-valued datum by a constant unitary.
    pub fn conjugate_by(&self, u: &CMat) -> SystemParams {
        let mut out = self.clone();
        out.c0 = self.c0.conjugate_by(u);
        out.a = self.a.conjugate_by(u);
        out
    }
}

/// Unknowns `(f, H)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricState {
    pub f: ScalarField,
    pub h: HermitianField,
}

impl MetricState {
    pub fn new(f: ScalarField, h: HermitianField) -> Result<Self> {
        if f.n() != h.n() {
            return Err(Error::Shape("f and H live on different grids".into()));
        }
        if !h.is_traceless() {
            return Err(Error::InvalidParameter {
                name: "H",
                constraint: "must be traceless".into(),
            });
        }
        Ok(Self { f, h })
    }

    pub fn zero(n: usize, r: usize) -> Self {
        Self {
            f: ScalarField::new(n, vec![0.0; n * n]).expect("zero field"),
            h: HermitianField::zeros(n, r),
        }
    }

    pub fn n(&self) -> usize {
        self.f.n()
    }

    pub fn r(&self) -> usize {
        self.h.r()
    }

    /// Packed real vector `[f, coefficients of H in the traceless basis]`.
    pub fn pack(&self) -> Vec<f64> {
        let mut x = self.f.values().to_vec();
        x.extend(pack_traceless(&self.h));
        x
    }

    pub fn unpack(n: usize, r: usize, x: &[f64]) -> MetricState {
        let m = n * n;
        MetricState {
            f: ScalarField::new(n, x[..m].to_vec()).expect("packed f"),
            h: unpack_traceless(n, r, &x[m..]),
        }
    }

    pub fn conjugate_by(&self, u: &CMat) -> MetricState {
        MetricState {
            f: self.f.clone(),
            h: self.h.conjugate_by(u),
        }
    }
}

/// Residual blocks of the system.
#[derive(Debug, Clone, PartialEq)]
pub struct Residual {
    pub r1: ScalarField,
    pub r2: HermitianField,
    pub norm: f64,
}

impl Residual {
    pub fn pack(&self) -> Vec<f64> {
        let mut x = self.r1.values().to_vec();
        x.extend(pack_traceless(&self.r2));
        x
    }

    pub fn from_packed(n: usize, r: usize, x: &[f64]) -> Residual {
        let m = n * n;
        Residual {
            r1: ScalarField::new(n, x[..m].to_vec()).expect("packed residual"),
            r2: unpack_traceless(n, r, &x[m..]),
            norm: rms(x),
        }
    }
}

/// Root mean square of a packed vector; for full-system vectors this is the
/// mean of squares over the `n² r²` real unknowns.
pub fn rms(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

/// Coefficients of a traceless Hermitian field in the orthonormal basis,
/// basis-major (`a * n² + p`).
pub fn pack_traceless(h: &MatrixField) -> Vec<f64> {
    let r = h.r();
    let basis = linalg::traceless_hermitian_basis(r);
    let m = h.points();
    let mut out = vec![0.0; m * basis.len()];
    for p in 0..m {
        let y = h.at(p);
        for (a, b) in basis.iter().enumerate() {
            out[a * m + p] = linalg::trace(&(b * &y)).re;
        }
    }
    out
}

pub fn unpack_traceless(n: usize, r: usize, coeffs: &[f64]) -> HermitianField {
    let basis = linalg::traceless_hermitian_basis(r);
    let m = n * n;
    let field = MatrixField::from_fn(n, r, |p| {
        let mut y = CMat::zeros(r, r);
        for (a, b) in basis.iter().enumerate() {
            y += b * c(coeffs[a * m + p]);
        }
        y
    });
    HermitianField::project(&field, true)
}
