use rayon::prelude::*;

use super::{pack_traceless, rms, unpack_traceless, MetricState, Residual, SystemParams};
use crate::bundle::linalg::{self, c, dexp, from_eig, log_derivative, log_derivative_dh, trace_free, CMat};
use crate::bundle::{covariant_d0, dbar_end, eig_sorted, lambda_contract, ConnectionData, EigenField, HermitianField, MatrixField};
use crate::error::{Error, Result};
use crate::torus::{Grid, ScalarField};

/// Scalar part `β/r + Δf + (1−t)α` of `M`.
fn scalar_part(state: &MetricState, params: &SystemParams, t: f64) -> Vec<f64> {
    let lap = params.grid().laplacian(&state.f);
    let r = params.r as f64;
    let shift = (1.0 - t) * params.alpha;
    params
        .beta
        .values()
        .iter()
        .zip(lap.values())
        .map(|(b, l)| b / r + l + shift)
        .collect()
}

/// `M = (β/r + Δf + (1−t)α) Id − e^f H`.
pub fn assemble_m(state: &MetricState, params: &SystemParams, t: f64) -> HermitianField {
    let s = scalar_part(state, params, t);
    let r = params.r;
    let m = MatrixField::from_fn(params.n(), r, |p| {
        CMat::identity(r, r) * c(s[p]) - state.h.at(p) * c(state.f.at(p).exp())
    });
    HermitianField::project(&m, false)
}

/// Smallest eigenvalue of `M` over the grid and where it is attained.
pub fn min_eig_m(state: &MetricState, params: &SystemParams, t: f64) -> (f64, usize) {
    let eig = eig_sorted(&state.h);
    let s = scalar_part(state, params, t);
    min_eig_from(&eig, &s, state.f.values())
}

fn min_eig_from(eig: &EigenField, s: &[f64], f: &[f64]) -> (f64, usize) {
    let mut best = (f64::INFINITY, 0);
    for p in 0..s.len() {
        let mu = s[p] - f[p].exp() * eig.eigenvalues(p)[0];
        // NaN counts as inadmissible
        if !(mu >= best.0) {
            best = (mu, p);
        }
    }
    best
}

/// Quantities of the second equation at one state.
struct SecondBlock {
    d0h: MatrixField,
    x: MatrixField,
    e_plus: Vec<CMat>,
    e_minus: Vec<CMat>,
    y: Vec<CMat>,
}

/// `X = c° + D° + e^f H` and its symmetrized form `Y = (e^{H/2} X e^{−H/2})°_herm`.
///
/// `c° + D°` is self-adjoint for `g = exp H` rather than for `h₀`; the
/// conjugation by `e^{H/2}` turns it into a Hermitian matrix while leaving
/// `e^f H` unchanged, so `Y` vanishes exactly when `X` does.
fn second_block(
    grid: &Grid,
    c0: &MatrixField,
    a: &ConnectionData,
    h: &MatrixField,
    eig: &EigenField,
    ef: &[f64],
) -> Result<SecondBlock> {
    let r = h.r();
    for p in 0..h.points() {
        if eig.eigenvalues(p)[0] > 700.0 {
            return Err(Error::NonFinite { what: "exp H" });
        }
    }
    let d0h = covariant_d0(grid, h, a);
    let s = MatrixField::from_fn(h.n(), r, |p| log_derivative(eig.eigenvalues(p), eig.vectors(p), &d0h.at(p)));
    let d = lambda_contract(&dbar_end(grid, &s, a));
    let x = MatrixField::from_fn(h.n(), r, |p| c0.at(p) + trace_free(&d.at(p)) + h.at(p) * c(ef[p]));
    let frames: Vec<(CMat, CMat, CMat)> = (0..h.points())
        .into_par_iter()
        .map(|p| {
            let lam = eig.eigenvalues(p);
            let u = eig.vectors(p);
            let ep = from_eig(u, &lam.iter().map(|l| (0.5 * l).exp()).collect::<Vec<_>>());
            let em = from_eig(u, &lam.iter().map(|l| (-0.5 * l).exp()).collect::<Vec<_>>());
            let y = trace_free(&linalg::hermitize(&(&ep * x.at(p) * &em)));
            (ep, em, y)
        })
        .collect();
    if !x.all_finite() {
        return Err(Error::NonFinite { what: "second residual block" });
    }
    let mut e_plus = Vec::with_capacity(frames.len());
    let mut e_minus = Vec::with_capacity(frames.len());
    let mut y = Vec::with_capacity(frames.len());
    for (ep, em, yp) in frames {
        e_plus.push(ep);
        e_minus.push(em);
        y.push(yp);
    }
    Ok(SecondBlock {
        d0h,
        x,
        e_plus,
        e_minus,
        y,
    })
}

fn field_from_blocks(n: usize, r: usize, blocks: &[CMat]) -> HermitianField {
    HermitianField::project(&MatrixField::from_fn(n, r, |p| blocks[p].clone()), true)
}

/// Residual of the system at `t`:
/// `R1 = log det M − λf − log a₀`, `R2 = (e^{H/2}(c° + D° + e^f H)e^{−H/2})°`.
pub fn residual(state: &MetricState, params: &SystemParams, t: f64) -> Result<Residual> {
    let n = params.n();
    let eig = eig_sorted(&state.h);
    let s = scalar_part(state, params, t);
    let (mu_min, point) = min_eig_from(&eig, &s, state.f.values());
    if !(mu_min > 0.0) {
        return Err(Error::NonPositiveM {
            point,
            min_eigenvalue: mu_min,
        });
    }
    let r1: Vec<f64> = (0..n * n)
        .map(|p| {
            let ef = state.f.at(p).exp();
            let logdet: f64 = eig.eigenvalues(p).iter().map(|l| (s[p] - ef * l).ln()).sum();
            logdet - params.lambda_exp * state.f.at(p) - params.a0.at(p).ln()
        })
        .collect();
    let ef: Vec<f64> = state.f.values().iter().map(|v| v.exp()).collect();
    let sb = second_block(params.grid(), &params.c0, &params.a, &state.h, &eig, &ef)?;
    let r1 = ScalarField::new(n, r1).map_err(|_| Error::NonFinite { what: "first residual block" })?;
    let r2 = field_from_blocks(n, params.r, &sb.y);
    let mut res = Residual { r1, r2, norm: 0.0 };
    res.norm = rms(&res.pack());
    Ok(res)
}

/// Residual of the cushioned equation `c° + D°(exp H) + H = 0`, symmetrized as in [`residual`].
pub fn cushioned_residual(grid: &Grid, c0: &MatrixField, a: &ConnectionData, h: &MatrixField) -> Result<HermitianField> {
    let eig = eig_sorted(h);
    let ones = vec![1.0; h.points()];
    let sb = second_block(grid, c0, a, h, &eig, &ones)?;
    Ok(field_from_blocks(h.n(), h.r(), &sb.y))
}

struct FirstBlockLin {
    lambda_exp: f64,
    minv: Vec<CMat>,
    tr_minv: Vec<f64>,
    tr_minv_h: Vec<f64>,
    /// Preconditioner symbol of the f-block: `τ̄ Δ − σ̄`.
    tau: f64,
    sigma: f64,
}

/// Jacobian of the residual at a fixed state, applied matrix-free.
pub struct Linearization {
    grid: Grid,
    a: ConnectionData,
    n: usize,
    r: usize,
    eig: EigenField,
    h: MatrixField,
    ef: Vec<f64>,
    sb: SecondBlock,
    first: Option<FirstBlockLin>,
    mean_ef: f64,
}

impl Linearization {
    /// Linearization of the full system. Requires `M ≻ 0`.
    pub fn new(state: &MetricState, params: &SystemParams, t: f64) -> Result<Self> {
        let (n, r) = (params.n(), params.r);
        let eig = eig_sorted(&state.h);
        let s = scalar_part(state, params, t);
        let (mu_min, point) = min_eig_from(&eig, &s, state.f.values());
        if !(mu_min > 0.0) {
            return Err(Error::NonPositiveM {
                point,
                min_eigenvalue: mu_min,
            });
        }
        let ef: Vec<f64> = state.f.values().iter().map(|v| v.exp()).collect();
        let sb = second_block(params.grid(), &params.c0, &params.a, &state.h, &eig, &ef)?;
        let mut minv = Vec::with_capacity(n * n);
        let mut tr_minv = Vec::with_capacity(n * n);
        let mut tr_minv_h = Vec::with_capacity(n * n);
        for p in 0..n * n {
            let lam = eig.eigenvalues(p);
            let inv: Vec<f64> = lam.iter().map(|l| 1.0 / (s[p] - ef[p] * l)).collect();
            minv.push(from_eig(eig.vectors(p), &inv));
            tr_minv.push(inv.iter().sum());
            tr_minv_h.push(inv.iter().zip(lam).map(|(i, l)| i * l).sum());
        }
        let m = (n * n) as f64;
        let tau = tr_minv.iter().sum::<f64>() / m;
        let sigma_raw = params.lambda_exp + (0..n * n).map(|p| ef[p] * tr_minv_h[p]).sum::<f64>() / m;
        let sigma = if sigma_raw > 0.1 * params.lambda_exp {
            sigma_raw
        } else {
            params.lambda_exp
        };
        let mean_ef = ef.iter().sum::<f64>() / m;
        Ok(Self {
            grid: params.grid().clone(),
            a: params.a.clone(),
            n,
            r,
            eig,
            h: state.h.as_field().clone(),
            ef,
            sb,
            first: Some(FirstBlockLin {
                lambda_exp: params.lambda_exp,
                minv,
                tr_minv,
                tr_minv_h,
                tau,
                sigma,
            }),
            mean_ef,
        })
    }

    /// Linearization of the cushioned equation in `H` alone.
    pub(crate) fn cushioned(grid: &Grid, c0: &MatrixField, a: &ConnectionData, h: &MatrixField) -> Result<Self> {
        let eig = eig_sorted(h);
        let ef = vec![1.0; h.points()];
        let sb = second_block(grid, c0, a, h, &eig, &ef)?;
        Ok(Self {
            grid: grid.clone(),
            a: a.clone(),
            n: h.n(),
            r: h.r(),
            eig,
            h: h.clone(),
            ef,
            sb,
            first: None,
            mean_ef: 1.0,
        })
    }

    /// Linearized second block `δY` for `(δf, δH)`.
    fn apply_second(&self, df: &[f64], dh: &MatrixField) -> Vec<CMat> {
        let (n, r) = (self.n, self.r);
        let d0dh = covariant_d0(&self.grid, dh, &self.a);
        let ds = MatrixField::from_fn(n, r, |p| {
            let lam = self.eig.eigenvalues(p);
            let u = self.eig.vectors(p);
            log_derivative(lam, u, &d0dh.at(p)) + log_derivative_dh(lam, u, &self.sb.d0h.at(p), &dh.at(p))
        });
        let dd = lambda_contract(&dbar_end(&self.grid, &ds, &self.a));
        (0..n * n)
            .into_par_iter()
            .map(|p| {
                let lam = self.eig.eigenvalues(p);
                let u = self.eig.vectors(p);
                let dhp = dh.at(p);
                let dx = trace_free(&dd.at(p)) + self.h.at(p) * c(self.ef[p] * df[p]) + &dhp * c(self.ef[p]);
                let dep = dexp(lam, u, 0.5, &dhp);
                let dem = dexp(lam, u, -0.5, &dhp);
                let x = self.sb.x.at(p);
                let (ep, em) = (&self.sb.e_plus[p], &self.sb.e_minus[p]);
                let dy = &dep * &x * em + ep * dx * em + ep * &x * &dem;
                trace_free(&linalg::hermitize(&dy))
            })
            .collect()
    }

    /// Applies the Jacobian to a packed direction (full or cushioned layout).
    pub fn apply_packed(&self, v: &[f64]) -> Vec<f64> {
        let (n, r) = (self.n, self.r);
        let m = n * n;
        let mut out = Vec::with_capacity(v.len());
        let (df, dh) = match &self.first {
            Some(fb) => {
                let df = &v[..m];
                let dh = unpack_traceless(n, r, &v[m..]);
                let lap = self.grid.laplacian(&ScalarField::new(n, df.to_vec()).expect("finite direction"));
                for p in 0..m {
                    let tr_minv_dh = linalg::trace(&(&fb.minv[p] * dh.at(p))).re;
                    out.push(
                        lap.at(p) * fb.tr_minv[p]
                            - self.ef[p] * df[p] * fb.tr_minv_h[p]
                            - self.ef[p] * tr_minv_dh
                            - fb.lambda_exp * df[p],
                    );
                }
                (df.to_vec(), dh)
            }
            None => (vec![0.0; m], unpack_traceless(n, r, v)),
        };
        let dy = self.apply_second(&df, &dh);
        out.extend(pack_traceless(&MatrixField::from_fn(n, r, |p| dy[p].clone())));
        out
    }

    /// Approximate inverse built from Fourier multipliers with frozen mean coefficients.
    pub fn precondition_packed(&self, v: &[f64]) -> Vec<f64> {
        let m = self.n * self.n;
        let mut out = v.to_vec();
        let mut offset = 0;
        if let Some(fb) = &self.first {
            self.grid.real_filter_slice(&mut out[..m], |i, j| {
                1.0 / (fb.tau * self.grid.laplacian_eigenvalue(i, j) - fb.sigma)
            });
            offset = m;
        }
        let e = self.mean_ef;
        for chunk in out[offset..].chunks_mut(m) {
            self.grid
                .real_filter_slice(chunk, |i, j| 1.0 / (e - self.grid.composed_laplacian_eigenvalue(i, j)));
        }
        out
    }

    pub fn eigen(&self) -> &EigenField {
        &self.eig
    }
}

/// Directional derivative of [`residual`] at `state` along `delta`.
pub fn apply_linearization(state: &MetricState, params: &SystemParams, t: f64, delta: &MetricState) -> Result<Residual> {
    let lin = Linearization::new(state, params, t)?;
    let out = lin.apply_packed(&delta.pack());
    Ok(Residual::from_packed(params.n(), params.r, &out))
}
