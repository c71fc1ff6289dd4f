//! Named scenarios and the assembly of their fields.
//!
//! A "line bundle of degree d" is encoded by the curvature datum `β ≡ d`;
//! direct sums put the individual degrees on the diagonal of the trace-free
//! part. A nonzero frame connection contributes its own curvature, which is
//! folded into `(β, c°)` so the data stays consistent.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{A01Spec, ScenarioConfig};
use super::ScenarioError;
use crate::bundle::linalg::{c, CMat};
use crate::bundle::{ConnectionData, HermitianField, MatrixField};
use crate::system::{setup_t0, MetricState, SystemParams};
use crate::torus::{random_band_limited, trig_polynomial, Grid, ScalarField};

pub const PRESETS: [&str; 4] = ["ample_sum", "nonample_sum", "constant_model", "extension"];

/// Base data of a preset before overrides.
#[derive(Debug, Clone, PartialEq)]
pub struct PresetData {
    pub rank: usize,
    pub beta: f64,
    pub c0: Vec<f64>,
    pub a01: A01Spec,
}

/// Degrees `(d₁, d₂)` of a rank-2 direct sum as `(β, c°)`.
fn split(d1: f64, d2: f64) -> (f64, Vec<f64>) {
    (d1 + d2, vec![(d1 - d2) / 2.0, (d2 - d1) / 2.0])
}

pub fn build_preset(name: &str, cfg: &ScenarioConfig) -> Result<PresetData, ScenarioError> {
    let (rank, beta, c0, a01) = match name {
        "ample_sum" => {
            let (b, c0) = split(2.0, 1.0);
            (2, b, c0, A01Spec::Zero)
        }
        "nonample_sum" => {
            let (b, c0) = split(2.0, -1.0);
            (2, b, c0, A01Spec::Zero)
        }
        "constant_model" => match cfg.rank.unwrap_or(1) {
            1 => (1, 3.0, vec![0.0], A01Spec::Zero),
            2 => (2, 4.0, vec![1.0, -1.0], A01Spec::Zero),
            r => {
                return Err(ScenarioError::Validation {
                    key: "rank".into(),
                    constraint: format!("constant_model has rank 1 or 2, got {r}"),
                })
            }
        },
        "extension" => {
            let (b, c0) = split(1.0, 1.0);
            (2, b, c0, A01Spec::Nilpotent)
        }
        other => return Err(ScenarioError::UnknownPreset(other.to_string())),
    };
    Ok(PresetData { rank, beta, c0, a01 })
}

/// Fully assembled scenario fields.
#[derive(Debug, Clone)]
pub struct ScenarioData {
    pub grid: Grid,
    pub beta: ScalarField,
    pub c0: HermitianField,
    pub a: ConnectionData,
    pub margin: f64,
    pub lambda_exp: f64,
}

impl ScenarioData {
    pub fn from_config(cfg: &ScenarioConfig) -> Result<Self, ScenarioError> {
        let base = match &cfg.preset {
            Some(name) => Some(build_preset(name, cfg)?),
            None => None,
        };
        let missing = |key: &str| ScenarioError::Validation {
            key: key.into(),
            constraint: "required without a preset".into(),
        };
        let rank = cfg.rank.or(base.as_ref().map(|b| b.rank)).ok_or_else(|| missing("rank"))?;
        let beta0 = cfg.beta.or(base.as_ref().map(|b| b.beta)).ok_or_else(|| missing("beta"))?;
        let c0 = match (&cfg.c0, &base) {
            (Some(c), _) => c.clone(),
            (None, Some(b)) => b.c0.clone(),
            (None, None) if rank == 1 => vec![0.0],
            (None, None) => return Err(missing("c0")),
        };
        if c0.len() != rank {
            return Err(ScenarioError::Validation {
                key: "c0".into(),
                constraint: format!("needs {rank} entries"),
            });
        }
        let a01 = cfg.a01.clone().or(base.map(|b| b.a01)).unwrap_or(A01Spec::Zero);

        let grid = Grid::new(cfg.n)?;
        let mut beta = grid.constant(beta0);
        if !cfg.beta_modes.is_empty() {
            beta = beta.axpby(1.0, &trig_polynomial(&grid, &cfg.beta_modes), 1.0);
        }
        if cfg.beta_perturbation > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            beta = beta.axpby(1.0, &random_band_limited(&grid, &mut rng, 2, cfg.beta_perturbation), 1.0);
        }
        let a = connection(&grid, rank, &a01, cfg.epsilon, cfg.seed)?;

        let mut c0_field = MatrixField::diagonal(&c0.iter().map(|&v| grid.constant(v)).collect::<Vec<_>>());
        if !a.is_zero() {
            let k = a.curvature(&grid);
            let tr: Vec<f64> = k.trace_field().iter().map(|z| z.re).collect();
            beta = beta.axpby(1.0, &grid.scalar(tr.clone())?, 1.0);
            let r = rank as f64;
            let k0 = k.map(|p, m| m - CMat::identity(rank, rank) * c(tr[p] / r));
            c0_field = c0_field.axpby(1.0, &k0, 1.0);
        }
        let c0 = HermitianField::new(c0_field, true)?;
        Ok(Self {
            grid,
            beta,
            c0,
            a,
            margin: cfg.alpha_margin,
            lambda_exp: cfg.lambda_exp.unwrap_or(2.0 * rank as f64),
        })
    }

    pub fn rank(&self) -> usize {
        self.c0.r()
    }

    /// `α`, `a₀` and the `t = 0` state.
    pub fn setup(&self) -> crate::Result<(SystemParams, MetricState)> {
        setup_t0(&self.grid, &self.beta, &self.c0, &self.a, self.margin, self.lambda_exp)
    }
}

fn connection(grid: &Grid, r: usize, spec: &A01Spec, epsilon: f64, seed: u64) -> Result<ConnectionData, ScenarioError> {
    let n = grid.n();
    let field = match spec {
        A01Spec::Zero => return Ok(ConnectionData::zero(n, r)),
        A01Spec::Nilpotent => {
            if r < 2 {
                return Err(ScenarioError::Validation {
                    key: "a01".into(),
                    constraint: "nilpotent connection needs rank >= 2".into(),
                });
            }
            let mut m = CMat::zeros(r, r);
            m[(0, 1)] = c(epsilon);
            MatrixField::constant(n, &m)
        }
        A01Spec::Entries(entries) => {
            let mut m = CMat::zeros(r, r);
            for &(i, j, re, im) in entries {
                if i >= r || j >= r {
                    return Err(ScenarioError::Validation {
                        key: "a01".into(),
                        constraint: format!("entry ({i}, {j}) outside rank {r}"),
                    });
                }
                m[(i, j)] = num_complex::Complex64::new(re, im);
            }
            MatrixField::constant(n, &m)
        }
        A01Spec::Random { amplitude, kmax } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(1);
            let mut out = MatrixField::zeros(n, r);
            for i in 0..r {
                for j in 0..r {
                    let re = random_band_limited(grid, &mut rng, *kmax, *amplitude);
                    let im = random_band_limited(grid, &mut rng, *kmax, *amplitude);
                    let vals: Vec<_> = (0..grid.len())
                        .map(|p| num_complex::Complex64::new(re.at(p), im.at(p)))
                        .collect();
                    out.set_component(i, j, &vals);
                }
            }
            out
        }
    };
    Ok(ConnectionData::new(field)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundle::linalg::herm_eig;

    fn data(text: &str) -> ScenarioData {
        ScenarioData::from_config(&ScenarioConfig::parse(text).unwrap()).unwrap()
    }

    fn min_griffiths(d: &ScenarioData) -> f64 {
        let r = d.rank() as f64;
        (0..d.grid.len())
            .map(|p| d.beta.at(p) / r + *herm_eig(&d.c0.at(p)).0.last().unwrap())
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn ample_sum_is_griffiths_positive() {
        let d = data("preset = ample_sum\nn = 8");
        assert_eq!(d.beta.mean(), 3.0);
        assert!((min_griffiths(&d) - 1.0).abs() < 1e-14);
        assert_eq!(d.lambda_exp, 4.0);
    }

    #[test]
    fn nonample_sum_has_negative_factor() {
        let d = data("preset = nonample_sum\nn = 8");
        // β/2 + c°₂₂ is the curvature of the second factor
        assert!((d.beta.at(0) / 2.0 + d.c0.entry(0, 1, 1).re + 1.0).abs() < 1e-14);
        assert!((d.beta.at(0) / 2.0 + d.c0.entry(0, 0, 0).re - 2.0).abs() < 1e-14);
    }

    #[test]
    fn constant_models() {
        let d = data("preset = constant_model\nn = 8");
        assert_eq!(d.rank(), 1);
        assert_eq!(d.beta.at(3), 3.0);
        let (params, _) = d.setup().unwrap();
        assert_eq!(params.alpha, 1.0);
        assert_eq!(params.lambda_exp, 2.0);
        let d2 = data("preset = constant_model\nrank = 2\nlambda_exp = 2\nn = 8");
        assert_eq!(d2.c0.entry(5, 0, 0).re, 1.0);
        assert!(matches!(
            ScenarioData::from_config(&ScenarioConfig::parse("preset = constant_model\nrank = 3").unwrap()),
            Err(ScenarioError::Validation { .. })
        ));
    }

    #[test]
    fn extension_folds_connection_curvature() {
        let d = data("preset = extension\nn = 8");
        // 2ε² diag(1, −1) with ε = 1/2, trace part unchanged
        assert!((d.c0.entry(0, 0, 0).re - 0.5).abs() < 1e-14);
        assert!((d.c0.entry(0, 1, 1).re + 0.5).abs() < 1e-14);
        assert!((d.beta.mean() - 2.0).abs() < 1e-14);
        assert!(!d.a.is_zero());
    }

    #[test]
    fn unknown_preset() {
        let cfg = ScenarioConfig::parse("preset = tangent_bundle").unwrap();
        assert!(matches!(ScenarioData::from_config(&cfg), Err(ScenarioError::UnknownPreset(_))));
    }

    #[test]
    fn perturbation_is_seeded() {
        let a = data("preset = ample_sum\nn = 8\nbeta_perturbation = 0.2\nseed = 4");
        let b = data("preset = ample_sum\nn = 8\nbeta_perturbation = 0.2\nseed = 4");
        let c = data("preset = ample_sum\nn = 8\nbeta_perturbation = 0.2\nseed = 5");
        assert_eq!(a.beta, b.beta);
        assert_ne!(a.beta, c.beta);
        assert!((a.beta.mean() - 3.0).abs() < 1e-12);
        assert!(((a.beta.max_abs() - 3.0).abs() - 0.2).abs() < 0.2 + 1e-12);
    }

    #[test]
    fn random_connection_is_traceless_consistent() {
        let d = data("rank = 2\nbeta = 3\nc0 = 0,0\na01 = random:0.1:1\nseed = 2\nn = 8");
        assert!(d.c0.is_traceless());
        assert!(!d.a.is_zero());
    }
}
