//! Pointwise dense kernels on small complex matrices (rank ≤ 8).

use nalgebra::DMatrix;
use num_complex::Complex64;

pub type CMat = DMatrix<Complex64>;

pub(crate) const ZERO: Complex64 = Complex64::new(0.0, 0.0);

pub fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Hermitian eigendecomposition with descending eigenvalues.
///
/// Each eigenvector is normalized so that its largest-modulus component
/// (first one on ties) is real and positive.
pub fn herm_eig(m: &CMat) -> (Vec<f64>, CMat) {
    let r = m.nrows();
    if r == 1 {
        return (vec![m[(0, 0)].re], CMat::from_element(1, 1, c(1.0)));
    }
    let eig = hermitize(m).symmetric_eigen();
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut u = CMat::zeros(r, r);
    for (dst, &src) in order.iter().enumerate() {
        let col = eig.eigenvectors.column(src);
        let mut lead = 0;
        let mut best = -1.0;
        for i in 0..r {
            let a = col[i].norm();
            if a > best * (1.0 + 1e-12) {
                best = a;
                lead = i;
            }
        }
        let phase = if best > 0.0 {
            col[lead].conj() / best
        } else {
            c(1.0)
        };
        for i in 0..r {
            u[(i, dst)] = col[i] * phase;
        }
    }
    (values, u)
}

pub fn hermitize(m: &CMat) -> CMat {
    (m + m.adjoint()) * c(0.5)
}

/// `U diag(d) U†`.
pub fn from_eig(u: &CMat, d: &[f64]) -> CMat {
    let r = u.nrows();
    let mut scaled = u.clone();
    for j in 0..r {
        for i in 0..r {
            scaled[(i, j)] *= d[j];
        }
    }
    &scaled * u.adjoint()
}

/// `U† X U`.
pub fn to_frame(u: &CMat, x: &CMat) -> CMat {
    u.adjoint() * x * u
}

/// `U X U†`.
pub fn from_frame(u: &CMat, x: &CMat) -> CMat {
    u * x * u.adjoint()
}

pub fn commutator(a: &CMat, b: &CMat) -> CMat {
    a * b - b * a
}

pub fn trace(m: &CMat) -> Complex64 {
    (0..m.nrows()).map(|i| m[(i, i)]).sum()
}

/// Trace-free part `m − (tr m / r) Id`.
pub fn trace_free(m: &CMat) -> CMat {
    let r = m.nrows();
    let shift = trace(m) / r as f64;
    let mut out = m.clone();
    for i in 0..r {
        out[(i, i)] -= shift;
    }
    out
}

pub fn frob_norm(m: &CMat) -> f64 {
    m.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

/// `(eˣ − 1)/x`, the kernel of `g⁻¹ δg` in the eigenframe.
pub fn phi(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 + 0.5 * x
    } else {
        x.exp_m1() / x
    }
}

/// Derivative of [`phi`].
pub fn dphi(x: f64) -> f64 {
    if x.abs() < 1e-2 {
        0.5 + x / 3.0 + x * x / 8.0 + x * x * x / 30.0 + x * x * x * x / 144.0
    } else {
        (x * x.exp() - x.exp_m1()) / (x * x)
    }
}

/// First divided difference `(φ(a) − φ(b))/(a − b)`, with the derivative on the diagonal.
pub fn phi_divided(a: f64, b: f64) -> f64 {
    let d = a - b;
    if d.abs() <= 1e-5 * (1.0 + a.abs().max(b.abs())) {
        dphi(0.5 * (a + b))
    } else {
        (phi(a) - phi(b)) / d
    }
}

/// Divided difference of `λ ↦ e^{sλ}` at `(a, b)`.
pub fn exp_divided(s: f64, a: f64, b: f64) -> f64 {
    s * (s * b).exp() * phi(s * (a - b))
}

/// Fréchet derivative of `H ↦ exp(sH)` in direction `E`, given `H = U diag(λ) U†`.
pub fn dexp(lambda: &[f64], u: &CMat, s: f64, e: &CMat) -> CMat {
    let r = lambda.len();
    let mut et = to_frame(u, e);
    for i in 0..r {
        for j in 0..r {
            et[(i, j)] *= exp_divided(s, lambda[i], lambda[j]);
        }
    }
    from_frame(u, &et)
}

/// `g⁻¹ Dg` for a derivation `D` with `DH = P`: `U (Φ ∘ U†PU) U†`, `Φ_ij = φ(λ_j − λ_i)`.
pub fn log_derivative(lambda: &[f64], u: &CMat, p: &CMat) -> CMat {
    let r = lambda.len();
    let mut pt = to_frame(u, p);
    for i in 0..r {
        for j in 0..r {
            pt[(i, j)] *= phi(lambda[j] - lambda[i]);
        }
    }
    from_frame(u, &pt)
}

/// Derivative of [`log_derivative`] with respect to `H` in direction `E`, `P` held fixed.
pub fn log_derivative_dh(lambda: &[f64], u: &CMat, p: &CMat, e: &CMat) -> CMat {
    let r = lambda.len();
    let pt = to_frame(u, p);
    let et = to_frame(u, e);
    let mut out = CMat::zeros(r, r);
    for i in 0..r {
        for j in 0..r {
            let mut acc = ZERO;
            for k in 0..r {
                let d1 = -phi_divided(lambda[j] - lambda[i], lambda[j] - lambda[k]);
                let d2 = phi_divided(lambda[k] - lambda[i], lambda[j] - lambda[i]);
                acc += et[(i, k)] * pt[(k, j)] * d1 + pt[(i, k)] * et[(k, j)] * d2;
            }
            out[(i, j)] = acc;
        }
    }
    from_frame(u, &out)
}

/// Orthonormal basis (Frobenius inner product) of traceless Hermitian `r × r` matrices:
/// symmetric and antisymmetric off-diagonal generators followed by generalized
/// Gell-Mann diagonal generators.
pub fn traceless_hermitian_basis(r: usize) -> Vec<CMat> {
    let mut basis = Vec::with_capacity(r * r - 1);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    for j in 0..r {
        for k in (j + 1)..r {
            let mut sym = CMat::zeros(r, r);
            sym[(j, k)] = c(s);
            sym[(k, j)] = c(s);
            basis.push(sym);
            let mut anti = CMat::zeros(r, r);
            anti[(j, k)] = Complex64::new(0.0, s);
            anti[(k, j)] = Complex64::new(0.0, -s);
            basis.push(anti);
        }
    }
    for l in 1..r {
        let norm = ((l * (l + 1)) as f64).sqrt();
        let mut d = CMat::zeros(r, r);
        for m in 0..l {
            d[(m, m)] = c(1.0 / norm);
        }
        d[(l, l)] = c(-(l as f64) / norm);
        basis.push(d);
    }
    basis
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_herm(r: usize, seed: u64) -> CMat {
        let mut state = seed;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        let mut m = CMat::zeros(r, r);
        for i in 0..r {
            for j in 0..r {
                m[(i, j)] = Complex64::new(next(), next());
            }
        }
        hermitize(&m)
    }

    #[test]
    fn eig_reconstructs_and_sorts() {
        for r in 1..=4 {
            let m = sample_herm(r, r as u64);
            let (lam, u) = herm_eig(&m);
            assert!(lam.windows(2).all(|w| w[0] >= w[1]));
            assert!(frob_norm(&(from_eig(&u, &lam) - &m)) < 1e-12);
            let id = CMat::identity(r, r);
            assert!(frob_norm(&(u.adjoint() * &u - id)) < 1e-12);
        }
    }

    #[test]
    fn basis_is_orthonormal() {
        for r in 1..=4 {
            let b = traceless_hermitian_basis(r);
            assert_eq!(b.len(), r * r - 1);
            for (i, x) in b.iter().enumerate() {
                assert!(trace(x).norm() < 1e-15);
                assert!(frob_norm(&(x - x.adjoint())) < 1e-15);
                for (j, y) in b.iter().enumerate() {
                    let ip = trace(&(x * y)).re;
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((ip - want).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn phi_and_its_derivative_are_continuous() {
        for &x in &[-3.0, -1e-2, -1e-3, 0.0, 1e-9, 1e-3, 1e-2 + 1e-12, 2.0] {
            let h = 1e-6;
            let fd = (phi(x + h) - phi(x - h)) / (2.0 * h);
            assert!((fd - dphi(x)).abs() < 1e-8, "x = {x}");
        }
    }

    #[test]
    fn dexp_matches_central_differences() {
        let h = sample_herm(3, 11);
        let e = sample_herm(3, 12);
        let (lam, u) = herm_eig(&h);
        let exact = dexp(&lam, &u, 0.5, &e);
        let eps = 1e-5;
        let expm = |m: &CMat| {
            let (l, v) = herm_eig(m);
            from_eig(&v, &l.iter().map(|x| (0.5 * x).exp()).collect::<Vec<_>>())
        };
        let fd = (expm(&(&h + &e * c(eps))) - expm(&(&h - &e * c(eps)))) * c(0.5 / eps);
        assert!(frob_norm(&(exact - fd)) < 1e-8);
    }

    #[test]
    fn log_derivative_dh_matches_central_differences() {
        let h = sample_herm(3, 21) * c(2.0);
        let p = sample_herm(3, 22) + sample_herm(3, 23) * Complex64::new(0.0, 1.0);
        let e = sample_herm(3, 24);
        let (lam, u) = herm_eig(&h);
        let exact = log_derivative_dh(&lam, &u, &p, &e);
        let eps = 1e-5;
        let eval = |m: &CMat| {
            let (l, v) = herm_eig(m);
            log_derivative(&l, &v, &p)
        };
        let fd = (eval(&(&h + &e * c(eps))) - eval(&(&h - &e * c(eps)))) * c(0.5 / eps);
        assert!(frob_norm(&(exact - fd)) < 1e-7);
    }

    #[test]
    fn log_derivative_is_dk_formula() {
        // g⁻¹ (d/ds) e^{H + sP} at s = 0
        let h = sample_herm(2, 31);
        let p = sample_herm(2, 32);
        let (lam, u) = herm_eig(&h);
        let g_inv = from_eig(&u, &lam.iter().map(|x| (-x).exp()).collect::<Vec<_>>());
        let want = &g_inv * dexp(&lam, &u, 1.0, &p);
        assert!(frob_norm(&(log_derivative(&lam, &u, &p) - want)) < 1e-12);
    }
}
