//! Spectral-cutoff proxy for the destabilizing subsheaf.
//!
//! With `m = sup λ_max` and `g̃ = e^{−m} g`, directions where `g̃` collapses
//! relative to the top eigenvalue span the projector `π`; the quotient
//! `Q = Im π^⊥` then carries the degree estimate
//! `∫ tr((β/r + c°) π^⊥) + |π^⊥ ∂₀π|²`.

use super::complement;
use crate::bundle::linalg::{from_eig, frob_norm, trace, CMat};
use crate::bundle::{covariant_d0, eig_sorted, HermitianField, MatrixField};
use crate::error::{Error, Result};
use crate::system::{MetricState, SystemParams};

/// Tolerance on `‖π² − π‖` accepted by [`estimate_quotient_degree`].
pub const PROJECTOR_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorConfig {
    /// Cutoff used when the log-spectrum has no clear gap.
    pub fallback_eps_cut: f64,
    /// A log-spectrum gap narrower than this counts as no gap.
    pub min_gap_width: f64,
    /// A point is resolved when every `ln g̃` eigenvalue is at least this far from the cutoff.
    pub resolve_margin: f64,
    /// Fraction of resolved points needed for a report.
    pub resolved_fraction: f64,
    pub sigma_levels: usize,
    pub histogram_bins: usize,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            fallback_eps_cut: 0.5,
            min_gap_width: 1.0,
            resolve_margin: 0.1,
            resolved_fraction: 0.99,
            sigma_levels: 8,
            histogram_bins: 16,
        }
    }
}

/// Histogram of `ln` of the eigenvalues of `g̃` over all points.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<usize>,
}

impl Histogram {
    fn build(values: &[f64], bins: usize) -> Self {
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut counts = vec![0; bins];
        let width = (hi - lo) / bins as f64;
        for &v in values {
            let k = if width > 0.0 { ((v - lo) / width) as usize } else { 0 };
            counts[k.min(bins - 1)] += 1;
        }
        Self { lo, hi, counts }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DestabilizationReport {
    pub t: f64,
    /// `sup λ_max`.
    pub m_t: f64,
    pub histogram: Histogram,
    /// Smallest and largest eigenvalue of `g̃` over the grid.
    pub g_tilde_range: (f64, f64),
    pub sigma_schedule: Vec<f64>,
    /// Mean Frobenius distance between consecutive powers `g̃^σ`.
    pub sigma_deltas: Vec<f64>,
    pub eps_cut: f64,
    pub resolved_fraction: f64,
    /// Projector onto the collapsing eigendirections of `g̃`.
    pub pi: HermitianField,
    pub rank_pi: usize,
    pub degq_estimate: f64,
    /// `(∫ |π^⊥ ∂₀π|²)^{1/2}`.
    pub second_fundamental_norm: f64,
}

/// Builds a report when the log-spectrum of `g̃` splits cleanly; `None` means inconclusive.
pub fn detect_destabilization(
    state: &MetricState,
    params: &SystemParams,
    t: f64,
    cfg: &DetectorConfig,
) -> Option<DestabilizationReport> {
    let r = params.r;
    let npts = state.h.points();
    let eig = eig_sorted(&state.h);
    let m = (0..npts).map(|p| eig.eigenvalues(p)[0]).fold(f64::NEG_INFINITY, f64::max);
    let logs: Vec<f64> = (0..npts)
        .flat_map(|p| eig.eigenvalues(p).iter().map(move |l| l - m).collect::<Vec<_>>())
        .collect();

    let mut sorted = logs.clone();
    sorted.sort_by(f64::total_cmp);
    let (gap_lo, gap_width) = sorted
        .windows(2)
        .map(|w| (w[0], w[1] - w[0]))
        .fold((0.0, 0.0), |best, cur| if cur.1 > best.1 { cur } else { best });
    let ln_cut = if gap_width < cfg.min_gap_width {
        cfg.fallback_eps_cut.ln()
    } else {
        gap_lo + 0.5 * gap_width
    };

    let mut rank_counts = vec![0usize; r + 1];
    let mut ranks = Vec::with_capacity(npts);
    for p in 0..npts {
        let l = &logs[p * r..(p + 1) * r];
        let resolved = l.iter().all(|v| (v - ln_cut).abs() >= cfg.resolve_margin);
        let k = l.iter().filter(|&&v| v < ln_cut).count();
        if resolved {
            rank_counts[k] += 1;
        }
        ranks.push(k);
    }
    let (rank_pi, &hits) = rank_counts
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
        .expect("nonempty rank table");
    let resolved_fraction = hits as f64 / npts as f64;
    if resolved_fraction < cfg.resolved_fraction || rank_pi == 0 || rank_pi == r {
        return None;
    }

    let pi = MatrixField::from_fn(state.n(), r, |p| {
        let ind: Vec<f64> = logs[p * r..(p + 1) * r]
            .iter()
            .map(|&v| if v < ln_cut { 1.0 } else { 0.0 })
            .collect();
        from_eig(eig.vectors(p), &ind)
    });
    let pi = HermitianField::project(&pi, false);
    let (degq_estimate, sff) = quotient_degree_parts(&pi, params).ok()?;

    let sigma_schedule: Vec<f64> = (0..cfg.sigma_levels).map(|k| 0.5f64.powi(k as i32)).collect();
    let powers: Vec<MatrixField> = sigma_schedule
        .iter()
        .map(|&s| {
            MatrixField::from_fn(state.n(), r, |p| {
                let d: Vec<f64> = logs[p * r..(p + 1) * r].iter().map(|v| (s * v).exp()).collect();
                from_eig(eig.vectors(p), &d)
            })
        })
        .collect();
    let sigma_deltas = powers
        .windows(2)
        .map(|w| (0..npts).map(|p| frob_norm(&(w[0].at(p) - w[1].at(p)))).sum::<f64>() / npts as f64)
        .collect();
    let lo = logs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    Some(DestabilizationReport {
        t,
        m_t: m,
        histogram: Histogram::build(&logs, cfg.histogram_bins),
        g_tilde_range: (lo.exp(), hi.exp()),
        sigma_schedule,
        sigma_deltas,
        eps_cut: ln_cut.exp(),
        resolved_fraction,
        pi,
        rank_pi,
        degq_estimate,
        second_fundamental_norm: sff.sqrt(),
    })
}

/// Returns the degree estimate and `∫ |π^⊥ ∂₀π|²`.
fn quotient_degree_parts(pi: &HermitianField, params: &SystemParams) -> Result<(f64, f64)> {
    let defect = (0..pi.points())
        .map(|p| {
            let m = pi.at(p);
            frob_norm(&(&m * &m - &m))
        })
        .fold(0.0, f64::max);
    if !(defect <= PROJECTOR_TOL) {
        return Err(Error::NotAProjector { defect });
    }
    let r = params.r;
    let perp = complement(pi);
    let d0pi = covariant_d0(params.grid(), pi, &params.a);
    let npts = pi.points() as f64;
    let mut curv = 0.0;
    let mut sff = 0.0;
    for p in 0..pi.points() {
        let f0 = CMat::identity(r, r) * crate::bundle::linalg::c(params.beta.at(p) / r as f64) + params.c0.at(p);
        curv += trace(&(f0 * perp.at(p))).re;
        // |dz|² = 2 for the flat unit-volume metric
        sff += 2.0 * frob_norm(&(perp.at(p) * d0pi.at(p))).powi(2);
    }
    Ok(((curv + sff) / npts, sff / npts))
}

/// `deg Q̂ = ∫ [tr((β/r + c°) π^⊥) + |π^⊥ ∂₀π|²]`.
pub fn estimate_quotient_degree(pi: &HermitianField, params: &SystemParams) -> Result<f64> {
    quotient_degree_parts(pi, params).map(|(d, _)| d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundle::linalg::c;
    use crate::bundle::ConnectionData;
    use crate::torus::Grid;
    use num_complex::Complex64;

    fn diag(v: &[f64]) -> CMat {
        CMat::from_diagonal(&nalgebra::DVector::from_vec(v.iter().map(|&x| c(x)).collect()))
    }

    fn params_with(beta: f64, c: f64, a: ConnectionData) -> SystemParams {
        let g = Grid::new(16).unwrap();
        let c0 = HermitianField::constant(16, &diag(&[c, -c])).unwrap();
        SystemParams::new(&g, g.constant(beta), c0, a, 1.0, 4.0, g.constant(1.0)).unwrap()
    }

    #[test]
    fn degree_of_diagonal_quotient() {
        let params = params_with(1.0, 1.5, ConnectionData::zero(16, 2));
        let pi = HermitianField::constant(16, &diag(&[1.0, 0.0])).unwrap();
        assert!((estimate_quotient_degree(&pi, &params).unwrap() + 1.0).abs() < 1e-12);
        let zero = HermitianField::project(&MatrixField::zeros(16, 2), false);
        assert!((estimate_quotient_degree(&zero, &params).unwrap() - params.degree()).abs() < 1e-12);
    }

    #[test]
    fn degree_of_extension_quotient() {
        let eps = 0.5;
        let mut a01 = CMat::zeros(2, 2);
        a01[(0, 1)] = c(eps);
        let a = ConnectionData::new(MatrixField::constant(16, &a01)).unwrap();
        let params = params_with(2.0, 2.0 * eps * eps, a);
        let pi = HermitianField::constant(16, &diag(&[1.0, 0.0])).unwrap();
        // curvature part β/2 − 2ε² plus second fundamental form 2ε²
        assert!((estimate_quotient_degree(&pi, &params).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degree_is_gauge_invariant() {
        let mut a01 = CMat::zeros(2, 2);
        a01[(0, 1)] = c(0.3);
        a01[(1, 1)] = Complex64::new(0.0, 0.2);
        let a = ConnectionData::new(MatrixField::constant(16, &a01)).unwrap();
        let params = params_with(2.0, 0.4, a);
        let th: f64 = 0.9;
        let u = CMat::from_row_slice(2, 2, &[c(th.cos()), Complex64::new(0.0, th.sin()), Complex64::new(0.0, th.sin()), c(th.cos())]);
        let pi = HermitianField::constant(16, &diag(&[1.0, 0.0])).unwrap();
        let d0 = estimate_quotient_degree(&pi, &params).unwrap();
        let d1 = estimate_quotient_degree(&pi.conjugate_by(&u), &params.conjugate_by(&u)).unwrap();
        assert!((d0 - d1).abs() < 1e-9);
    }

    #[test]
    fn rejects_non_projector() {
        let params = params_with(1.0, 0.5, ConnectionData::zero(16, 2));
        let half = HermitianField::constant(16, &diag(&[0.5, 0.0])).unwrap();
        assert!(matches!(estimate_quotient_degree(&half, &params), Err(Error::NotAProjector { .. })));
    }

    #[test]
    fn detector_cases() {
        let params = params_with(1.0, 1.5, ConnectionData::zero(16, 2));
        let cfg = DetectorConfig::default();
        let flat = MetricState::zero(16, 2);
        assert!(detect_destabilization(&flat, &params, 0.4, &cfg).is_none());
        let split = MetricState::new(params.grid().constant(-2.0), HermitianField::constant(16, &diag(&[-9.0, 9.0])).unwrap()).unwrap();
        let rep = detect_destabilization(&split, &params, 0.49, &cfg).unwrap();
        assert_eq!(rep.rank_pi, 1);
        assert!((rep.degq_estimate + 1.0).abs() < 1e-12);
        assert!((rep.pi.at(0) - diag(&[1.0, 0.0])).iter().all(|v| v.norm() < 1e-14));
        assert!(rep.g_tilde_range.1 <= 1.0 && rep.g_tilde_range.0 > 0.0);
        assert_eq!(rep.sigma_deltas.len(), 7);
        assert_eq!(rep.histogram.counts.iter().sum::<usize>(), 512);
        assert_eq!(rep.m_t, 9.0);
        // reproducible
        assert_eq!(detect_destabilization(&split, &params, 0.49, &cfg).unwrap(), rep);
    }
}
