use log::{debug, warn};

use super::newton::{newton, NonlinearSystem};
use super::residual::{cushioned_residual, Linearization};
use super::{pack_traceless, rms, unpack_traceless, MetricState, SystemParams};
use crate::bundle::{eig_sorted, ConnectionData, HermitianField, MatrixField};
use crate::error::{Error, Result};
use crate::torus::{Grid, ScalarField};

const CUSHION_MAX_NEWTON: usize = 40;
const PSEUDO_TIME_STEP: f64 = 0.5;
const PSEUDO_TIME_BUDGET: usize = 400;

/// `c° + D°(exp H, A) + H = 0` in `H` alone.
struct CushionedSystem<'a> {
    grid: &'a Grid,
    c0: &'a MatrixField,
    a: &'a ConnectionData,
}

impl CushionedSystem<'_> {
    fn unpack(&self, x: &[f64]) -> HermitianField {
        unpack_traceless(self.grid.n(), self.c0.r(), x)
    }
}

impl NonlinearSystem for CushionedSystem<'_> {
    type Lin = Linearization;

    fn residual(&self, x: &[f64]) -> Result<Vec<f64>> {
        let y = cushioned_residual(self.grid, self.c0, self.a, &self.unpack(x))?;
        Ok(pack_traceless(&y))
    }

    fn linearize(&self, x: &[f64]) -> Result<Linearization> {
        Linearization::cushioned(self.grid, self.c0, self.a, &self.unpack(x))
    }

    fn apply(&self, lin: &Linearization, v: &[f64]) -> Vec<f64> {
        lin.apply_packed(v)
    }

    fn precondition(&self, lin: &Linearization, v: &[f64]) -> Vec<f64> {
        lin.precondition_packed(v)
    }
}

/// Solves the cushioned Hermitian–Einstein equation starting from `H = 0`.
pub fn solve_cushioned(grid: &Grid, c0: &HermitianField, a: &ConnectionData, tol: f64) -> Result<HermitianField> {
    solve_cushioned_from(grid, c0, a, &HermitianField::zeros(grid.n(), c0.r()), tol)
}

/// Solves the cushioned equation from a given traceless initial guess.
///
/// Newton first; if it fails, preconditioned pseudo-time stepping brings the
/// iterate closer and Newton is retried once.
pub fn solve_cushioned_from(
    grid: &Grid,
    c0: &HermitianField,
    a: &ConnectionData,
    init: &HermitianField,
    tol: f64,
) -> Result<HermitianField> {
    if !c0.is_traceless() || !init.is_traceless() {
        return Err(Error::InvalidParameter {
            name: "c0",
            constraint: "cushioned solve needs traceless data".into(),
        });
    }
    let sys = CushionedSystem { grid, c0, a };
    let x0 = pack_traceless(init);
    let best = match newton(&sys, x0, tol, CUSHION_MAX_NEWTON) {
        Ok((x, rep)) => {
            debug!("cushioned solve: {} Newton steps, |R| {:.3e}", rep.iterations, rep.residual_norm);
            return Ok(sys.unpack(&x));
        }
        Err(fail) => {
            warn!("cushioned Newton failed ({}); falling back to pseudo-time stepping", fail.error);
            fail.best
        }
    };
    let mut x = best;
    let mut norm = f64::INFINITY;
    for _ in 0..PSEUDO_TIME_BUDGET {
        let res = sys.residual(&x)?;
        norm = rms(&res);
        if !norm.is_finite() {
            return Err(Error::NoConvergence { residual_norm: norm });
        }
        if norm <= tol.max(1e-3) {
            break;
        }
        let lin = sys.linearize(&x)?;
        let dx = sys.precondition(&lin, &res);
        x.iter_mut().zip(&dx).for_each(|(xi, d)| *xi -= PSEUDO_TIME_STEP * d);
    }
    match newton(&sys, x, tol, CUSHION_MAX_NEWTON) {
        Ok((x, _)) => Ok(sys.unpack(&x)),
        Err(fail) => Err(Error::NoConvergence {
            residual_norm: match fail.error {
                Error::MaxIterExceeded { residual_norm, .. } | Error::LineSearchStall { residual_norm } => residual_norm,
                _ => norm,
            },
        }),
    }
}

/// Tolerance of the cushioned solve performed by [`setup_t0`].
pub const SETUP_TOL: f64 = 1e-12;

/// Builds `α`, `a₀` and the `t = 0` solution `(f = 0, H₀)`.
pub fn setup_t0(
    grid: &Grid,
    beta: &ScalarField,
    c0: &HermitianField,
    a: &ConnectionData,
    margin: f64,
    lambda_exp: f64,
) -> Result<(SystemParams, MetricState)> {
    if !(margin > 0.0) {
        return Err(Error::InvalidParameter {
            name: "margin",
            constraint: format!("must be positive, got {margin}"),
        });
    }
    let r = c0.r();
    let h0 = solve_cushioned(grid, c0, a, SETUP_TOL)?;
    let eig = eig_sorted(&h0);
    let rf = r as f64;
    let worst = (0..grid.len())
        .map(|p| beta.at(p) / rf - eig.eigenvalues(p)[0])
        .fold(f64::INFINITY, f64::min);
    let alpha = (-worst).max(0.0) + margin;
    let a0: Vec<f64> = (0..grid.len())
        .map(|p| {
            eig.eigenvalues(p)
                .iter()
                .map(|l| beta.at(p) / rf + alpha - l)
                .product()
        })
        .collect();
    let a0 = ScalarField::new(grid.n(), a0)?;
    let params = SystemParams::new(grid, beta.clone(), c0.clone(), a.clone(), alpha, lambda_exp, a0)?;
    let state = MetricState::new(grid.zeros(), h0)?;
    Ok((params, state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundle::linalg::{c, traceless_hermitian_basis, CMat};
    use crate::system::residual::residual;
    use crate::torus::random_band_limited;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn diag2(a: f64) -> CMat {
        CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![c(a), c(-a)]))
    }

    fn random_field(grid: &Grid, r: usize, seed: u64, amp: f64) -> HermitianField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let basis = traceless_hermitian_basis(r);
        let coeffs: Vec<ScalarField> = basis.iter().map(|_| random_band_limited(grid, &mut rng, 2, amp)).collect();
        let f = MatrixField::from_fn(grid.n(), r, |p| {
            let mut m = CMat::zeros(r, r);
            for (b, u) in basis.iter().zip(&coeffs) {
                m += b * c(u.at(p));
            }
            m
        });
        HermitianField::new(f, true).unwrap()
    }

    #[test]
    fn cushioned_trivial_cases() {
        let g = Grid::new(16).unwrap();
        let h = solve_cushioned(&g, &HermitianField::zeros(16, 3), &ConnectionData::zero(16, 3), 1e-12).unwrap();
        assert_eq!(h.max_norm(), 0.0);
        let c0 = HermitianField::constant(16, &diag2(0.8)).unwrap();
        let h = solve_cushioned(&g, &c0, &ConnectionData::zero(16, 2), 1e-12).unwrap();
        assert!(h.axpby(1.0, &c0, 1.0).max_norm() < 1e-12);
    }

    #[test]
    fn cushioned_solution_is_unique_from_two_starts() {
        let g = Grid::new(16).unwrap();
        let c0 = random_field(&g, 3, 1, 1.0);
        let a = ConnectionData::zero(16, 3);
        let h1 = solve_cushioned(&g, &c0, &a, 1e-12).unwrap();
        let h2 = solve_cushioned_from(&g, &c0, &a, &random_field(&g, 3, 2, 0.3), 1e-12).unwrap();
        assert!(h1.axpby(1.0, &h2, -1.0).max_norm() < 1e-6);
        assert!(cushioned_residual(&g, &c0, &a, &h1).unwrap().rms() < 1e-12);
    }

    #[test]
    fn setup_rank_one() {
        let g = Grid::new(16).unwrap();
        let (params, st) = setup_t0(&g, &g.constant(3.0), &HermitianField::zeros(16, 1), &ConnectionData::zero(16, 1), 1.5, 2.0).unwrap();
        assert_eq!(params.alpha, 1.5);
        assert!(params.a0.values().iter().all(|&v| (v - 4.5).abs() < 1e-15));
        assert_eq!(st, MetricState::zero(16, 1));
    }

    #[test]
    fn setup_rank_two_constant() {
        let g = Grid::new(16).unwrap();
        let c0 = HermitianField::constant(16, &diag2(1.0)).unwrap();
        let (params, st) = setup_t0(&g, &g.constant(4.0), &c0, &ConnectionData::zero(16, 2), 1.0, 4.0).unwrap();
        assert_eq!(params.alpha, 1.0);
        assert!(params.a0.values().iter().all(|&v| (v - 8.0).abs() < 1e-13));
        assert!(residual(&st, &params, 0.0).unwrap().norm < 1e-10);
        // β/r − H₀ indefinite: α grows beyond the margin
        let c0 = HermitianField::constant(16, &diag2(3.0)).unwrap();
        let (params, _) = setup_t0(&g, &g.constant(2.0), &c0, &ConnectionData::zero(16, 2), 1.0, 4.0).unwrap();
        assert!((params.alpha - 3.0).abs() < 1e-12);
    }

    #[test]
    fn setup_random_data_has_small_residual() {
        let g = Grid::new(16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let beta = random_band_limited(&g, &mut rng, 2, 1.0).map(|v| v + 2.0);
        let c0 = random_field(&g, 2, 6, 1.5);
        let (params, st) = setup_t0(&g, &beta, &c0, &ConnectionData::zero(16, 2), 1.0, 4.0).unwrap();
        assert!(params.a0.min() > 0.0);
        assert!(residual(&st, &params, 0.0).unwrap().norm < 1e-10);
    }

    #[test]
    fn setup_rejects_bad_margin() {
        let g = Grid::new(8).unwrap();
        let err = setup_t0(&g, &g.constant(1.0), &HermitianField::zeros(8, 1), &ConnectionData::zero(8, 1), 0.0, 2.0);
        assert!(matches!(err, Err(Error::InvalidParameter { name: "margin", .. })));
    }
}
