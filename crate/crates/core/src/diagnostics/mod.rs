//! Observers evaluated along the continuity path: per-step records, the
//! a priori estimate checks, the eigenvalue Laplace identity and the
//! destabilization detector.

mod bounds;
mod destab;

pub use bounds::{verify_apriori_bounds, BoundConstants, CheckReport, CheckResult};
pub use destab::{detect_destabilization, estimate_quotient_degree, DestabilizationReport, DetectorConfig, Histogram};

use crate::bundle::linalg::{c, hermitize, herm_eig, to_frame, CMat};
use crate::bundle::{demailly_d, eig_sorted, eigenframe_connection, ConnectionData, HermitianField, MatrixField};
use crate::error::Result;
use crate::system::{min_eig_m, MetricState, SystemParams};
use crate::torus::{Grid, ScalarField};

/// Points whose top eigenvalue is closer than this to the next one are
/// excluded from the subharmonicity check.
pub const DEFAULT_GAP_FLOOR: f64 = 1e-3;
/// Discretization slack of the pointwise inequality checks.
pub const POINTWISE_SLACK: f64 = 1e-6;
/// Quadrature slack of the mean inequality.
pub const MEAN_SLACK: f64 = 1e-8;

/// Solver statistics attached to an accepted step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SolverStats {
    pub newton_iters: usize,
    pub residual_norm: f64,
}

/// Observed quantities at one accepted `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub newton_iters: usize,
    pub residual_norm: f64,
    pub sup_f: f64,
    pub inf_f: f64,
    pub osc_f: f64,
    pub sup_lambda_max: f64,
    pub osc_lambda_max: f64,
    pub sup_ef_lambda_max: f64,
    pub mean_ef_lambda_max: f64,
    pub sup_abs_laplacian_f: f64,
    pub min_eig_m: f64,
    pub deg_e: f64,
    /// `mean β/r + (1−t)α − mean e^f λ_max`.
    pub l1_slack: f64,
    pub l1_pass: bool,
    /// `min (Δλ_max + K)` over points with a simple top eigenvalue.
    pub subharmonic_slack: f64,
    pub subharmonic_pass: bool,
    pub deltanorm_violation: f64,
    pub deltanorm_pass: bool,
}

impl DiagnosticsRecord {
    pub const COLUMNS: [&'static str; 19] = [
        "t",
        "newton_iters",
        "residual_norm",
        "sup_f",
        "inf_f",
        "osc_f",
        "sup_lambda_max",
        "osc_lambda_max",
        "sup_ef_lambda_max",
        "mean_ef_lambda_max",
        "sup_abs_laplacian_f",
        "min_eig_M",
        "deg_E",
        "l1_slack",
        "l1_pass",
        "subharmonic_slack",
        "subharmonic_pass",
        "deltanorm_violation",
        "deltanorm_pass",
    ];

    pub fn checks_pass(&self) -> bool {
        self.l1_pass && self.subharmonic_pass && self.deltanorm_pass
    }
}

/// `sup_p ‖β/r Id + c°‖_op`, the size of the mean curvature of the reference metric.
pub fn curvature_bound(params: &SystemParams) -> f64 {
    let r = params.r as f64;
    (0..params.c0.points())
        .map(|p| {
            let (mu, _) = herm_eig(&params.c0.at(p));
            let b = params.beta.at(p) / r;
            mu.iter().map(|m| (b + m).abs()).fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

/// Collects the record of an accepted state.
pub fn record(state: &MetricState, params: &SystemParams, t: f64, stats: SolverStats) -> DiagnosticsRecord {
    let grid = params.grid();
    let r = params.r as f64;
    let eig = eig_sorted(&state.h);
    let lmax = eig.eigenvalue_field(0);
    let ef_lmax = state.f.zip_map(&lmax, |f, l| f.exp() * l);
    let lap_f = grid.laplacian(&state.f);
    let (min_m, _) = min_eig_m(state, params, t);
    let l1_bound = params.beta.mean() / r + (1.0 - t) * params.alpha;
    let l1_slack = l1_bound - ef_lmax.mean();

    let k = curvature_bound(params);
    let lap_lmax = grid.laplacian(&lmax);
    let subharmonic_slack = (0..grid.len())
        .filter(|&p| eig.top_gap(p) >= DEFAULT_GAP_FLOOR)
        .map(|p| lap_lmax.at(p) + k)
        .fold(f64::INFINITY, f64::min);
    let deltanorm = verify_deltanorm(state, params);

    DiagnosticsRecord {
        t,
        newton_iters: stats.newton_iters,
        residual_norm: stats.residual_norm,
        sup_f: state.f.max(),
        inf_f: state.f.min(),
        osc_f: state.f.oscillation(),
        sup_lambda_max: lmax.max(),
        osc_lambda_max: lmax.oscillation(),
        sup_ef_lambda_max: ef_lmax.max(),
        mean_ef_lambda_max: ef_lmax.mean(),
        sup_abs_laplacian_f: lap_f.max_abs(),
        min_eig_m: min_m,
        deg_e: params.degree(),
        l1_slack,
        l1_pass: l1_slack > -MEAN_SLACK,
        subharmonic_slack,
        subharmonic_pass: subharmonic_slack >= -POINTWISE_SLACK,
        deltanorm_violation: deltanorm.max_violation,
        deltanorm_pass: deltanorm.passed,
    }
}

/// Outcome of the pointwise inequality `−ΔN + e^f N ≤ C`, `N = √(|H|² + 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltanormCheck {
    /// `−ΔN + e^f N − C` per point.
    pub violation: ScalarField,
    pub max_violation: f64,
    pub constant: f64,
    pub passed: bool,
}

/// Checks `−Δ√(|H|²+1) ≤ −e^f √(|H|²+1) + C` with
/// `C = max(r·sup‖β/r + c°‖, sup|c°| + sup e^f)`.
///
/// The second entry covers the `H = 0` end of the path, where the inequality
/// degenerates to `e^f ≤ C`.
pub fn verify_deltanorm(state: &MetricState, params: &SystemParams) -> DeltanormCheck {
    let grid = params.grid();
    let norm_c0 = (0..params.c0.points())
        .map(|p| crate::bundle::linalg::frob_norm(&params.c0.at(p)))
        .fold(0.0, f64::max);
    let constant = (params.r as f64 * curvature_bound(params)).max(norm_c0 + state.f.max().exp());
    let nfield = ScalarField::new(
        grid.n(),
        (0..grid.len())
            .map(|p| (crate::bundle::linalg::frob_norm(&state.h.at(p)).powi(2) + 1.0).sqrt())
            .collect(),
    )
    .expect("finite norm field");
    let lap = grid.laplacian(&nfield);
    let violation = ScalarField::new(
        grid.n(),
        (0..grid.len())
            .map(|p| -lap.at(p) + state.f.at(p).exp() * nfield.at(p) - constant)
            .collect(),
    )
    .expect("finite violation");
    let max_violation = violation.max();
    DeltanormCheck {
        passed: max_violation <= POINTWISE_SLACK,
        violation,
        max_violation,
        constant,
    }
}

/// Masked residual of the eigenvalue Laplace identity
///
/// ```text
/// Δλᵢ = −(U†DU)ᵢᵢ + Σⱼ (e^{λᵢ−λⱼ} − 1) Cᵢⱼ − Σⱼ (e^{λⱼ−λᵢ} − 1) Cⱼᵢ
/// ```
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaplaceIdentityCheck {
    pub n: usize,
    pub max_residual: f64,
    pub masked_points: usize,
    pub total_points: usize,
}

pub fn verify_laplace_identity(grid: &Grid, h: &HermitianField, a: &ConnectionData, gap_floor: f64) -> Result<LaplaceIdentityCheck> {
    let r = h.r();
    let ec = eigenframe_connection(grid, h, a, gap_floor);
    let d = demailly_d(grid, h, a)?;
    let laps: Vec<ScalarField> = (0..r).map(|i| grid.laplacian(&ec.eig.eigenvalue_field(i))).collect();
    let mut max_residual: f64 = 0.0;
    let mut masked_points = 0;
    for p in 0..grid.len() {
        if !ec.mask[p] {
            continue;
        }
        masked_points += 1;
        let lam = ec.eig.eigenvalues(p);
        let dframe = to_frame(ec.eig.vectors(p), &d.at(p));
        for i in 0..r {
            let mut rhs = -dframe[(i, i)].re;
            for j in 0..r {
                rhs += (lam[i] - lam[j]).exp_m1() * ec.c_at(p, i, j);
                rhs -= (lam[j] - lam[i]).exp_m1() * ec.c_at(p, j, i);
            }
            max_residual = max_residual.max((laps[i].at(p) - rhs).abs());
        }
    }
    Ok(LaplaceIdentityCheck {
        n: grid.n(),
        max_residual,
        masked_points,
        total_points: grid.len(),
    })
}

/// Evaluates the identity on Fourier resamplings of `(H, A)` to each grid size.
pub fn laplace_identity_convergence(
    grid: &Grid,
    h: &HermitianField,
    a: &ConnectionData,
    gap_floor: f64,
    sizes: &[usize],
) -> Result<Vec<LaplaceIdentityCheck>> {
    sizes
        .iter()
        .map(|&n| {
            let target = Grid::new(n)?;
            let hn = HermitianField::project(&h.resample(grid, &target), h.is_traceless());
            let an = a.resample(grid, &target);
            verify_laplace_identity(&target, &hn, &an, gap_floor)
        })
        .collect()
}

/// Smallest eigenvalue over the grid of `Λ√-1F_h = (β/r + Δf) Id + c° + D(exp H)`
/// for `h = e^{−f} exp(H) h₀`, read in the `h₀`-unitary frame `e^{H/2}`.
pub fn min_curvature_eigenvalue(state: &MetricState, params: &SystemParams) -> Result<f64> {
    let grid = params.grid();
    let r = params.r;
    let d = demailly_d(grid, &state.h, &params.a)?;
    let lap_f = grid.laplacian(&state.f);
    let eig = eig_sorted(&state.h);
    let half = eig.apply(|l| (0.5 * l).exp());
    let half_inv = eig.apply(|l| (-0.5 * l).exp());
    let sym = MatrixField::from_fn(grid.n(), r, |p| {
        let s = c(params.beta.at(p) / r as f64 + lap_f.at(p));
        let x = CMat::identity(r, r) * s + params.c0.at(p) + d.at(p);
        hermitize(&(half.at(p) * x * half_inv.at(p)))
    });
    Ok((0..sym.points())
        .map(|p| herm_eig(&sym.at(p)).0.last().copied().unwrap_or(f64::INFINITY))
        .fold(f64::INFINITY, f64::min))
}

/// Projects a matrix field onto `π^⊥ = Id − π` blocks; shared with the detector.
pub(crate) fn complement(pi: &MatrixField) -> MatrixField {
    let r = pi.r();
    pi.map(|_, m| crate::bundle::linalg::CMat::identity(r, r) - m)
}
