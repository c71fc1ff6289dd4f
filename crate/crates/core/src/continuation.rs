//! Adaptive continuation in `t` from the cushioned setup at `t = 0` to `t = 1`.

use log::{debug, info};

use crate::diagnostics::{detect_destabilization, record, DestabilizationReport, DetectorConfig, DiagnosticsRecord, SolverStats};
use crate::error::{Error, Result};
use crate::system::{newton_solve, residual, MetricState, NewtonReport, SystemParams};

/// Targets within this distance of 1 are snapped to 1.
const T_SNAP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathConfig {
    pub dt_init: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub newton_tol: f64,
    pub max_newton: usize,
    /// Trip when `inf f` drops below this.
    pub destab_f_floor: f64,
    /// Trip when `sup λ_max` exceeds `ln` of this.
    pub destab_lambda_ceiling: f64,
    /// Accepted steps between snapshots.
    pub record_every: usize,
}

impl Default for PathConfig {
    fn default() -> Self {
        Self {
            dt_init: 0.05,
            dt_min: 1e-6,
            dt_max: 0.2,
            newton_tol: 1e-10,
            max_newton: 30,
            destab_f_floor: -8.0,
            destab_lambda_ceiling: 8f64.exp(),
            record_every: 1,
        }
    }
}

impl PathConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |name, constraint: &str| {
            Err(Error::InvalidParameter {
                name,
                constraint: constraint.into(),
            })
        };
        if !(0.0 < self.dt_min && self.dt_min <= self.dt_init && self.dt_init <= self.dt_max && self.dt_max <= 1.0) {
            return bad("dt", "need 0 < dt_min <= dt_init <= dt_max <= 1");
        }
        if !(self.newton_tol > 0.0) {
            return bad("newton_tol", "> 0");
        }
        if self.max_newton == 0 {
            return bad("max_newton", ">= 1");
        }
        if !self.destab_f_floor.is_finite() {
            return bad("destab_f_floor", "finite");
        }
        if !(self.destab_lambda_ceiling > 1.0) {
            return bad("destab_lambda_ceiling", "> 1");
        }
        if self.record_every == 0 {
            return bad("record_every", ">= 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PathOutcome {
    Success(MetricState),
    Destabilized(DestabilizationReport),
    Stalled { t_reached: f64, best_norm: f64 },
}

impl PathOutcome {
    pub fn name(&self) -> &'static str {
        match self {
            PathOutcome::Success(_) => "Success",
            PathOutcome::Destabilized(_) => "Destabilized",
            PathOutcome::Stalled { .. } => "Stalled",
        }
    }
}

/// A rejected step; the driver state is untouched.
#[derive(Debug, Clone)]
pub struct StepFailure {
    pub t_target: f64,
    pub error: Error,
    /// Residual norm of the best corrector iterate, if the corrector ran.
    pub best_norm: f64,
}

/// Everything needed to resume a path bit-for-bit.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub t: f64,
    pub state: MetricState,
    /// Previous accepted point, used by the secant predictor.
    pub prev: Option<(f64, MetricState)>,
    pub dt: f64,
    pub accepted: usize,
}

impl Checkpoint {
    pub fn initial(state0: MetricState, config: &PathConfig) -> Self {
        Self {
            t: 0.0,
            state: state0,
            prev: None,
            dt: config.dt_init,
            accepted: 0,
        }
    }
}

fn clamp_target(t: f64, dt: f64, t_stop: f64) -> f64 {
    let target = (t + dt).min(t_stop);
    if target >= 1.0 - T_SNAP {
        1.0
    } else {
        target
    }
}

/// Secant prediction through the two most recent accepted states.
fn predict(state: &MetricState, t: f64, prev: Option<(f64, &MetricState)>, target: f64) -> MetricState {
    match prev {
        Some((tp, sp)) if t > tp => {
            let w = (target - t) / (t - tp);
            let x: Vec<f64> = state.pack().iter().zip(sp.pack()).map(|(a, b)| a + w * (a - b)).collect();
            MetricState::unpack(state.n(), state.r(), &x)
        }
        _ => state.clone(),
    }
}

/// One predictor-corrector step from an accepted state at `t` towards `t + dt` (clamped to 1).
pub fn advance_step(
    state: &MetricState,
    prev: Option<(f64, &MetricState)>,
    params: &SystemParams,
    t: f64,
    dt: f64,
    config: &PathConfig,
) -> std::result::Result<(f64, MetricState, NewtonReport), StepFailure> {
    advance_step_until(state, prev, params, t, dt, config, 1.0)
}

fn advance_step_until(
    state: &MetricState,
    prev: Option<(f64, &MetricState)>,
    params: &SystemParams,
    t: f64,
    dt: f64,
    config: &PathConfig,
    t_stop: f64,
) -> std::result::Result<(f64, MetricState, NewtonReport), StepFailure> {
    let target = clamp_target(t, dt, t_stop);
    let guess = predict(state, t, prev, target);
    if let Err(error) = residual(&guess, params, target) {
        return Err(StepFailure {
            t_target: target,
            error,
            best_norm: f64::INFINITY,
        });
    }
    match newton_solve(&guess, params, target, config.newton_tol, config.max_newton) {
        Ok((next, rep)) => Ok((target, next, rep)),
        Err(fail) => {
            let best_norm = residual(&fail.best, params, target).map(|r| r.norm).unwrap_or(f64::INFINITY);
            Err(StepFailure {
                t_target: target,
                error: fail.error,
                best_norm,
            })
        }
    }
}

fn tripped(state: &MetricState, config: &PathConfig) -> bool {
    let lmax = crate::bundle::lambda_max_field(&state.h).max();
    state.f.min() < config.destab_f_floor || lmax > config.destab_lambda_ceiling.ln()
}

/// Result of driving a path up to some target.
#[derive(Debug, Clone)]
pub enum Progress {
    /// The intermediate target was reached; the path can be resumed.
    Paused(Checkpoint),
    Finished(PathOutcome),
}

/// Drives the path from `cp` until `t_stop` (or until the path ends).
///
/// `on_accept` sees every accepted checkpoint together with its record.
pub fn run_path_from(
    params: &SystemParams,
    cp: Checkpoint,
    config: &PathConfig,
    t_stop: f64,
    mut on_accept: impl FnMut(&Checkpoint, &DiagnosticsRecord),
) -> Progress {
    let mut cp = cp;
    let mut last_failure = f64::INFINITY;
    let detector = DetectorConfig::default();
    let classify = |cp: &Checkpoint, best_norm: f64| match detect_destabilization(&cp.state, params, cp.t, &detector) {
        Some(rep) => PathOutcome::Destabilized(rep),
        None => PathOutcome::Stalled {
            t_reached: cp.t,
            best_norm,
        },
    };
    loop {
        if cp.t >= 1.0 {
            return Progress::Finished(PathOutcome::Success(cp.state));
        }
        if cp.t >= t_stop {
            return Progress::Paused(cp);
        }
        if cp.dt < config.dt_min {
            info!("step size underflow at t = {}", cp.t);
            return Progress::Finished(classify(&cp, last_failure));
        }
        let prev = cp.prev.as_ref().map(|(t, s)| (*t, s));
        match advance_step_until(&cp.state, prev, params, cp.t, cp.dt, config, t_stop) {
            Ok((t_new, next, rep)) => {
                debug!("accepted t = {t_new} (dt {}, {} newton)", cp.dt, rep.iterations);
                let old = std::mem::replace(&mut cp.state, next);
                cp.prev = Some((cp.t, old));
                cp.t = t_new;
                cp.dt = (1.5 * cp.dt).min(config.dt_max);
                cp.accepted += 1;
                last_failure = f64::INFINITY;
                let rec = record(
                    &cp.state,
                    params,
                    cp.t,
                    SolverStats {
                        newton_iters: rep.iterations,
                        residual_norm: rep.residual_norm,
                    },
                );
                on_accept(&cp, &rec);
                if tripped(&cp.state, config) {
                    info!("destabilization thresholds tripped at t = {}", cp.t);
                    return Progress::Finished(classify(&cp, rep.residual_norm));
                }
            }
            Err(fail) => {
                debug!("rejected t = {} ({}); halving dt", fail.t_target, fail.error);
                last_failure = fail.best_norm;
                cp.dt *= 0.5;
            }
        }
    }
}

/// Runs the whole path from a state solving the system at `t = 0`.
///
/// The first record describes the initial state.
pub fn run_path(params: &SystemParams, state0: &MetricState, config: &PathConfig) -> (PathOutcome, Vec<DiagnosticsRecord>) {
    let stats = SolverStats {
        newton_iters: 0,
        residual_norm: residual(state0, params, 0.0).map(|r| r.norm).unwrap_or(f64::NAN),
    };
    let mut records = vec![record(state0, params, 0.0, stats)];
    let cp = Checkpoint::initial(state0.clone(), config);
    match run_path_from(params, cp, config, 1.0, |_, r| records.push(r.clone())) {
        Progress::Finished(out) => (out, records),
        Progress::Paused(_) => unreachable!("paused only before t_stop = 1"),
    }
}
