//! Computable versions of the uniform constants along the path.
//!
//! Every "there is a constant C" statement is turned into an explicit number
//! assembled from the data (Green kernel of the torus, sup/inf of β, a₀, the
//! reference curvature) and compared with the measured path quantities.

use super::{curvature_bound, DiagnosticsRecord, MEAN_SLACK, POINTWISE_SLACK};
use crate::bundle::linalg::herm_eig;
use crate::system::SystemParams;
use crate::torus::ScalarField;

/// Safety factor applied to the assembled constants.
pub const SAFETY_FACTOR: f64 = 2.0;

#[derive(Debug, Clone, PartialEq)]
pub struct BoundConstants {
    /// `max K` for the mean-zero Green kernel `ΔK = δ − 1`.
    pub green_max: f64,
    /// `∫ |K|`.
    pub green_l1: f64,
    /// `sup β/r + α`.
    pub l_delta: f64,
    /// `mean β/r + α`, the bound on `∫ e^f λ_max`.
    pub b_l1: f64,
    /// `sup ‖β/r + c°‖_op`.
    pub k_lambda: f64,
    /// Upper bound of `f` from the maximum principle.
    pub f_up: f64,
    pub c_star_raw: f64,
    /// Bound on `sup e^f λ_max`.
    pub keyest_bound: f64,
    /// Bound on `sup |Δf|`.
    pub laplacian_f_bound: f64,
    /// `inf min-eig(β/r + c°)`; positive for a Griffiths positive reference.
    pub griffiths_min: f64,
    /// Reference constant for `f ≥ −osc λ_max − C`.
    pub gposi_constant: f64,
    /// Bound on `osc λ_max` for decoupled data, if the data is diagonal.
    pub osc_bound: Option<f64>,
}

impl BoundConstants {
    pub fn from_params(params: &SystemParams) -> Self {
        let grid = params.grid();
        let n = grid.n();
        let r = params.r as f64;
        let mut delta = vec![-1.0; n * n];
        delta[0] += (n * n) as f64;
        let kernel = grid.poisson_solve(&ScalarField::new(n, delta).expect("finite delta"));
        let green_max = kernel.max();
        let green_l1 = kernel.values().iter().map(|v| v.abs()).sum::<f64>() / (n * n) as f64;

        let beta_r = params.beta.map(|b| b / r);
        let l_delta = beta_r.max() + params.alpha;
        let b_l1 = beta_r.mean() + params.alpha;
        let k_lambda = curvature_bound(params);
        let (a_min, a_max) = (params.a0.min(), params.a0.max());
        let f_up = (l_delta.powf(r) / a_min).ln() / params.lambda_exp;
        let c_star_raw = (green_max * l_delta).exp() * (b_l1 + f_up.exp() * green_max * k_lambda);
        let keyest_bound = SAFETY_FACTOR * c_star_raw;
        let laplacian_f_bound = SAFETY_FACTOR
            * l_delta.max(c_star_raw + l_delta * (a_max / a_min).powf(1.0 / r) + (-beta_r.min()).max(0.0));

        let griffiths_min = (0..params.c0.points())
            .map(|p| {
                let (mu, _) = herm_eig(&params.c0.at(p));
                beta_r.at(p) + mu.last().copied().unwrap_or(0.0)
            })
            .fold(f64::INFINITY, f64::min);
        let gposi_constant = if griffiths_min > 0.0 {
            (-(griffiths_min.powf(r) / a_max).ln() / params.lambda_exp).max(0.0)
        } else {
            f64::INFINITY
        };

        let diagonal = params.a.is_zero()
            && (0..params.c0.points()).all(|p| {
                let m = params.c0.at(p);
                (0..params.r).all(|i| (0..params.r).all(|j| i == j || m[(i, j)].norm() <= 1e-12))
            });
        let osc_bound = diagonal.then(|| {
            let c_max = (0..params.r)
                .map(|i| params.c0.diagonal_entry(i).max_abs())
                .fold(0.0, f64::max);
            SAFETY_FACTOR * 2.0 * green_l1 * (c_max + (r - 1.0) * c_star_raw)
        });

        Self {
            green_max,
            green_l1,
            l_delta,
            b_l1,
            k_lambda,
            f_up,
            c_star_raw,
            keyest_bound,
            laplacian_f_bound,
            griffiths_min,
            gposi_constant,
            osc_bound,
        }
    }
}

/// One estimate checked over a record history.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub applicable: bool,
    pub passed: bool,
    /// Worst measured value (a slack for lower-bound checks).
    pub measured: f64,
    pub bound: f64,
    /// Values of `t` at which the check failed.
    pub offending_t: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub constants: BoundConstants,
    pub checks: Vec<CheckResult>,
}

impl CheckReport {
    /// True when every applicable check passed.
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| !c.applicable || c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Upper-bound check `value(rec) ≤ bound`.
fn upper(name: &'static str, history: &[DiagnosticsRecord], bound: f64, value: impl Fn(&DiagnosticsRecord) -> f64) -> CheckResult {
    let measured = history.iter().map(&value).fold(f64::NEG_INFINITY, f64::max);
    let offending_t: Vec<f64> = history.iter().filter(|r| !(value(r) <= bound)).map(|r| r.t).collect();
    CheckResult {
        name,
        applicable: true,
        passed: offending_t.is_empty(),
        measured,
        bound,
        offending_t,
    }
}

/// Runs the estimate checks over an accepted-step history.
///
/// * `l1_mean`: `∫ e^f λ_max < ∫ β/r + (1−t)α`
/// * `keyest_ef_lambda_max`, `keyest_laplacian_f`: uniform bounds on `e^f λ_max` and `|Δf|`
/// * `subharmonic_lambda_max`: `Δλ_max ≥ −sup‖β/r + c°‖` where the top eigenvalue is simple
/// * `deltanorm`: `−Δ√(|H|²+1) ≤ −e^f √(|H|²+1) + C`
/// * `gposi_floor`: `f ≥ −osc λ_max − C` for Griffiths positive data
/// * `osc_direct_sum`: uniform bound on `osc λ_max` for diagonal data
pub fn verify_apriori_bounds(history: &[DiagnosticsRecord], params: &SystemParams) -> CheckReport {
    let k = BoundConstants::from_params(params);
    let mut checks = Vec::new();

    let l1_min = history.iter().map(|r| r.l1_slack).fold(f64::INFINITY, f64::min);
    let l1_bad: Vec<f64> = history.iter().filter(|r| !(r.l1_slack > -MEAN_SLACK)).map(|r| r.t).collect();
    checks.push(CheckResult {
        name: "l1_mean",
        applicable: true,
        passed: l1_bad.is_empty(),
        measured: l1_min,
        bound: -MEAN_SLACK,
        offending_t: l1_bad,
    });

    checks.push(upper("keyest_ef_lambda_max", history, k.keyest_bound, |r| r.sup_ef_lambda_max));
    checks.push(upper("keyest_laplacian_f", history, k.laplacian_f_bound, |r| r.sup_abs_laplacian_f));

    let sub_min = history.iter().map(|r| r.subharmonic_slack).fold(f64::INFINITY, f64::min);
    let sub_bad: Vec<f64> = history
        .iter()
        .filter(|r| !(r.subharmonic_slack >= -POINTWISE_SLACK))
        .map(|r| r.t)
        .collect();
    checks.push(CheckResult {
        name: "subharmonic_lambda_max",
        applicable: true,
        passed: sub_bad.is_empty(),
        measured: sub_min,
        bound: -POINTWISE_SLACK,
        offending_t: sub_bad,
    });

    checks.push(upper("deltanorm", history, POINTWISE_SLACK, |r| r.deltanorm_violation));

    // smallest C with f ≥ −osc λ_max − C along the path
    let mut gposi = upper("gposi_floor", history, k.gposi_constant + MEAN_SLACK, |r| (-r.osc_lambda_max - r.inf_f).max(0.0));
    gposi.applicable = k.griffiths_min > 0.0;
    checks.push(gposi);

    let mut osc = upper("osc_direct_sum", history, k.osc_bound.unwrap_or(f64::INFINITY), |r| r.osc_lambda_max);
    osc.applicable = k.osc_bound.is_some();
    checks.push(osc);

    CheckReport { constants: k, checks }
}
