use log::debug;

use super::newton::{newton, NewtonFailure, NonlinearSystem};
use super::SystemParams;
use crate::error::{Error, Result};
use crate::torus::{Grid, ScalarField};

/// Data of the decoupled system for `ln g = diag(u₁, …, u_r)`:
///
/// ```text
/// ∏ᵢ (β/r + Δf − e^f uᵢ + (1−t)α) = e^{λf} a₀
/// cᵢ − Δuᵢ + e^f uᵢ = 0,   Σ uᵢ = 0
/// ```
#[derive(Debug, Clone)]
pub struct DirectSumData {
    pub grid: Grid,
    pub beta: ScalarField,
    /// Diagonal entries `cᵢ` of `c°`; they sum to zero.
    pub c_diag: Vec<ScalarField>,
    pub alpha: f64,
    pub lambda_exp: f64,
    pub a0: ScalarField,
}

impl DirectSumData {
    /// Extracts the diagonal data of a system with `A = 0` and diagonal `c°`.
    pub fn from_params(params: &SystemParams) -> Result<Self> {
        if !params.a.is_zero() {
            return Err(Error::InvalidParameter {
                name: "A",
                constraint: "direct sum needs a vanishing frame connection".into(),
            });
        }
        let r = params.r;
        for p in 0..params.c0.points() {
            for i in 0..r {
                for j in 0..r {
                    if i != j && params.c0.entry(p, i, j).norm() > 1e-12 {
                        return Err(Error::InvalidParameter {
                            name: "c0",
                            constraint: "direct sum needs diagonal data".into(),
                        });
                    }
                }
            }
        }
        Ok(Self {
            grid: params.grid().clone(),
            beta: params.beta.clone(),
            c_diag: (0..r).map(|i| params.c0.diagonal_entry(i)).collect(),
            alpha: params.alpha,
            lambda_exp: params.lambda_exp,
            a0: params.a0.clone(),
        })
    }

    pub fn r(&self) -> usize {
        self.c_diag.len()
    }

    /// `t = 0` solution: `f = 0`, `uᵢ = −(1 − Δ)⁻¹ cᵢ`.
    pub fn initial(&self) -> (ScalarField, Vec<ScalarField>) {
        let u = self
            .c_diag
            .iter()
            .map(|ci| self.grid.helmholtz_solve(1.0, ci).map(|v| -v))
            .collect();
        (self.grid.zeros(), u)
    }

    fn pack(&self, f: &ScalarField, u: &[ScalarField]) -> Vec<f64> {
        let mut x = f.values().to_vec();
        for ui in &u[..self.r() - 1] {
            x.extend_from_slice(ui.values());
        }
        x
    }

    fn unpack(&self, x: &[f64]) -> (ScalarField, Vec<ScalarField>) {
        let n = self.grid.n();
        let m = n * n;
        let r = self.r();
        let f = ScalarField::new(n, x[..m].to_vec()).expect("packed f");
        let mut u: Vec<ScalarField> = (0..r - 1)
            .map(|i| ScalarField::new(n, x[(i + 1) * m..(i + 2) * m].to_vec()).expect("packed u"))
            .collect();
        let last: Vec<f64> = (0..m).map(|p| -u.iter().map(|ui| ui.at(p)).sum::<f64>()).collect();
        u.push(ScalarField::new(n, last).expect("packed u"));
        (f, u)
    }
}

struct DirectSumSystem<'a> {
    data: &'a DirectSumData,
    t: f64,
}

struct DirectSumLin {
    ef: Vec<f64>,
    u: Vec<ScalarField>,
    /// `1/mᵢ` per component, point-major within each component.
    inv_m: Vec<Vec<f64>>,
    tau: f64,
    sigma: f64,
    mean_ef: f64,
}

impl DirectSumSystem<'_> {
    /// `mᵢ = β/r + Δf − e^f uᵢ + (1−t)α`.
    fn factors(&self, f: &ScalarField, u: &[ScalarField]) -> Result<Vec<Vec<f64>>> {
        let d = self.data;
        let lap = d.grid.laplacian(f);
        let r = d.r() as f64;
        let shift = (1.0 - self.t) * d.alpha;
        let mut out = Vec::with_capacity(u.len());
        for ui in u {
            let mi: Vec<f64> = (0..d.grid.len())
                .map(|p| d.beta.at(p) / r + lap.at(p) - f.at(p).exp() * ui.at(p) + shift)
                .collect();
            if let Some((p, &v)) = mi.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
                return Err(Error::NonPositiveM {
                    point: p,
                    min_eigenvalue: v,
                });
            }
            out.push(mi);
        }
        Ok(out)
    }
}

impl NonlinearSystem for DirectSumSystem<'_> {
    type Lin = DirectSumLin;

    fn residual(&self, x: &[f64]) -> Result<Vec<f64>> {
        let d = self.data;
        let (f, u) = d.unpack(x);
        let m = self.factors(&f, &u)?;
        let mut out: Vec<f64> = (0..d.grid.len())
            .map(|p| m.iter().map(|mi| mi[p].ln()).sum::<f64>() - d.lambda_exp * f.at(p) - d.a0.at(p).ln())
            .collect();
        for (ui, ci) in u.iter().zip(&d.c_diag).take(d.r() - 1) {
            let lap = d.grid.laplacian(ui);
            out.extend((0..d.grid.len()).map(|p| ci.at(p) - lap.at(p) + f.at(p).exp() * ui.at(p)));
        }
        Ok(out)
    }

    fn linearize(&self, x: &[f64]) -> Result<DirectSumLin> {
        let d = self.data;
        let (f, u) = d.unpack(x);
        let m = self.factors(&f, &u)?;
        let count = d.grid.len() as f64;
        let ef: Vec<f64> = f.values().iter().map(|v| v.exp()).collect();
        let inv_m: Vec<Vec<f64>> = m.iter().map(|mi| mi.iter().map(|v| 1.0 / v).collect()).collect();
        let tau = (0..d.grid.len()).map(|p| inv_m.iter().map(|w| w[p]).sum::<f64>()).sum::<f64>() / count;
        let sigma_raw = d.lambda_exp
            + (0..d.grid.len())
                .map(|p| ef[p] * inv_m.iter().zip(&u).map(|(w, ui)| w[p] * ui.at(p)).sum::<f64>())
                .sum::<f64>()
                / count;
        let sigma = if sigma_raw > 0.1 * d.lambda_exp { sigma_raw } else { d.lambda_exp };
        let mean_ef = ef.iter().sum::<f64>() / count;
        Ok(DirectSumLin {
            ef,
            u,
            inv_m,
            tau,
            sigma,
            mean_ef,
        })
    }

    fn apply(&self, lin: &DirectSumLin, v: &[f64]) -> Vec<f64> {
        let d = self.data;
        let (df, du) = d.unpack(v);
        let lap_df = d.grid.laplacian(&df);
        let mut out: Vec<f64> = (0..d.grid.len())
            .map(|p| {
                let mut acc = -d.lambda_exp * df.at(p);
                for i in 0..d.r() {
                    let dm = lap_df.at(p) - lin.ef[p] * (df.at(p) * lin.u[i].at(p) + du[i].at(p));
                    acc += dm * lin.inv_m[i][p];
                }
                acc
            })
            .collect();
        for i in 0..d.r() - 1 {
            let lap = d.grid.laplacian(&du[i]);
            out.extend(
                (0..d.grid.len()).map(|p| -lap.at(p) + lin.ef[p] * (df.at(p) * lin.u[i].at(p) + du[i].at(p))),
            );
        }
        out
    }

    fn precondition(&self, lin: &DirectSumLin, v: &[f64]) -> Vec<f64> {
        let g = &self.data.grid;
        let m = g.len();
        let mut out = v.to_vec();
        g.real_filter_slice(&mut out[..m], |i, j| 1.0 / (lin.tau * g.laplacian_eigenvalue(i, j) - lin.sigma));
        for chunk in out[m..].chunks_mut(m) {
            g.real_filter_slice(chunk, |i, j| 1.0 / (lin.mean_ef - g.laplacian_eigenvalue(i, j)));
        }
        out
    }
}

const DIRECT_SUM_MAX_NEWTON: usize = 40;

/// Solves the decoupled system at `t` by natural continuation from `t = 0`.
pub fn solve_direct_sum(data: &DirectSumData, t: f64, tol: f64) -> Result<(ScalarField, Vec<ScalarField>)> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidParameter {
            name: "t",
            constraint: format!("must lie in [0, 1], got {t}"),
        });
    }
    let (f0, u0) = data.initial();
    let mut x = data.pack(&f0, &u0);
    let mut t_cur = 0.0;
    let mut dt = 0.1f64;
    let mut last_err = None;
    loop {
        let t_next = if t - t_cur <= dt { t } else { t_cur + dt };
        let sys = DirectSumSystem { data, t: t_next };
        match newton(&sys, x.clone(), tol, DIRECT_SUM_MAX_NEWTON) {
            Ok((xn, rep)) => {
                debug!("direct sum: t = {t_next}, {} Newton steps", rep.iterations);
                x = xn;
                t_cur = t_next;
                if t_cur == t {
                    return Ok(data.unpack(&x));
                }
                dt = (1.5 * dt).min(0.2);
            }
            Err(NewtonFailure { error, .. }) => {
                dt *= 0.5;
                if dt < 1e-6 {
                    return Err(last_err.unwrap_or(error));
                }
                last_err = Some(error);
            }
        }
    }
}
