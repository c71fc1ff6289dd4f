use log::debug;

use super::krylov::gmres;
use super::residual::{residual, Linearization};
use super::{rms, MetricState, SystemParams};
use crate::error::Error;

/// Relative tolerance of the inner linear solves.
pub const LINEAR_TOL: f64 = 1e-8;
const GMRES_RESTART: usize = 60;
const GMRES_MAX_ITER: usize = 600;
/// Smallest line-search step before giving up.
pub const MIN_STEP: f64 = 1.0 / (1u64 << 20) as f64;

/// A square nonlinear system on packed real vectors.
pub trait NonlinearSystem {
    type Lin;

    /// Packed residual; `Err` marks an inadmissible point.
    fn residual(&self, x: &[f64]) -> crate::Result<Vec<f64>>;
    fn linearize(&self, x: &[f64]) -> crate::Result<Self::Lin>;
    fn apply(&self, lin: &Self::Lin, v: &[f64]) -> Vec<f64>;
    fn precondition(&self, lin: &Self::Lin, v: &[f64]) -> Vec<f64>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonReport {
    pub iterations: usize,
    pub residual_norm: f64,
    pub linear_iterations: usize,
}

/// Failed solve together with the best iterate seen.
#[derive(Debug, Clone)]
pub struct NewtonFailure<X> {
    pub error: Error,
    pub best: X,
}

impl<X> From<NewtonFailure<X>> for Error {
    fn from(f: NewtonFailure<X>) -> Error {
        f.error
    }
}

/// Damped Newton–Krylov iteration.
///
/// A step is accepted when the trial point is admissible and the residual
/// decreases (Armijo with constant 1e-4); otherwise the step is halved down to
/// [`MIN_STEP`].
pub fn newton<S: NonlinearSystem>(
    sys: &S,
    x0: Vec<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, NewtonReport), NewtonFailure<Vec<f64>>> {
    let mut x = x0;
    let mut res = match sys.residual(&x) {
        Ok(r) => r,
        Err(error) => return Err(NewtonFailure { error, best: x }),
    };
    let mut norm = rms(&res);
    let mut linear_iterations = 0;
    for iter in 0..=max_iter {
        if norm <= tol {
            return Ok((
                x,
                NewtonReport {
                    iterations: iter,
                    residual_norm: norm,
                    linear_iterations,
                },
            ));
        }
        if iter == max_iter {
            break;
        }
        let lin = match sys.linearize(&x) {
            Ok(l) => l,
            Err(error) => return Err(NewtonFailure { error, best: x }),
        };
        let rhs: Vec<f64> = res.iter().map(|v| -v).collect();
        let (dx, rep) = gmres(
            |v| sys.apply(&lin, v),
            |v| sys.precondition(&lin, v),
            &rhs,
            LINEAR_TOL,
            GMRES_RESTART,
            GMRES_MAX_ITER,
        );
        linear_iterations += rep.iterations;
        let mut step = 1.0;
        loop {
            let trial: Vec<f64> = x.iter().zip(&dx).map(|(a, d)| a + step * d).collect();
            if let Ok(r) = sys.residual(&trial) {
                let n = rms(&r);
                if n <= (1.0 - 1e-4 * step) * norm {
                    debug!("newton {iter}: |R| {norm:.3e} -> {n:.3e} (step {step}, {} gmres)", rep.iterations);
                    x = trial;
                    res = r;
                    norm = n;
                    break;
                }
            }
            step *= 0.5;
            if step < MIN_STEP {
                return Err(NewtonFailure {
                    error: Error::LineSearchStall { residual_norm: norm },
                    best: x,
                });
            }
        }
    }
    Err(NewtonFailure {
        error: Error::MaxIterExceeded {
            iterations: max_iter,
            residual_norm: norm,
        },
        best: x,
    })
}

/// The full system at a fixed `t`.
pub(crate) struct FullSystem<'a> {
    pub params: &'a SystemParams,
    pub t: f64,
}

impl NonlinearSystem for FullSystem<'_> {
    type Lin = Linearization;

    fn residual(&self, x: &[f64]) -> crate::Result<Vec<f64>> {
        let st = MetricState::unpack(self.params.n(), self.params.r, x);
        Ok(residual(&st, self.params, self.t)?.pack())
    }

    fn linearize(&self, x: &[f64]) -> crate::Result<Linearization> {
        let st = MetricState::unpack(self.params.n(), self.params.r, x);
        Linearization::new(&st, self.params, self.t)
    }

    fn apply(&self, lin: &Linearization, v: &[f64]) -> Vec<f64> {
        lin.apply_packed(v)
    }

    fn precondition(&self, lin: &Linearization, v: &[f64]) -> Vec<f64> {
        lin.precondition_packed(v)
    }
}

/// Solves the system at `t` starting from `state0`.
pub fn newton_solve(
    state0: &MetricState,
    params: &SystemParams,
    t: f64,
    tol: f64,
    max_iter: usize,
) -> Result<(MetricState, NewtonReport), NewtonFailure<MetricState>> {
    let (n, r) = (params.n(), params.r);
    let sys = FullSystem { params, t };
    newton(&sys, state0.pack(), tol, max_iter)
        .map(|(x, rep)| (MetricState::unpack(n, r, &x), rep))
        .map_err(|f| NewtonFailure {
            error: f.error,
            best: MetricState::unpack(n, r, &f.best),
        })
}
