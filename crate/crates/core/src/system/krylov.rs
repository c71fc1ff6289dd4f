/// Outcome of a [`gmres`] solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmresReport {
    pub iterations: usize,
    /// `‖b − Ax‖ / ‖b‖` of the returned iterate.
    pub relative_residual: f64,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Restarted GMRES with right preconditioning for `A x = b`, starting at `x = 0`.
///
/// `apply` evaluates `A v`, `precond` an approximate inverse. Returns the best
/// iterate found even when the tolerance is not reached.
pub fn gmres(
    apply: impl Fn(&[f64]) -> Vec<f64>,
    precond: impl Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    rel_tol: f64,
    restart: usize,
    max_iter: usize,
) -> (Vec<f64>, GmresReport) {
    let dim = b.len();
    let mut x = vec![0.0; dim];
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return (
            x,
            GmresReport {
                iterations: 0,
                relative_residual: 0.0,
                converged: true,
            },
        );
    }
    let mut r = b.to_vec();
    let mut total = 0;
    loop {
        let beta = norm(&r);
        if beta / bnorm <= rel_tol || total >= max_iter {
            return (
                x,
                GmresReport {
                    iterations: total,
                    relative_residual: beta / bnorm,
                    converged: beta / bnorm <= rel_tol,
                },
            );
        }
        let mut basis: Vec<Vec<f64>> = vec![r.iter().map(|v| v / beta).collect()];
        let mut hess: Vec<Vec<f64>> = Vec::new();
        let mut cs: Vec<f64> = Vec::new();
        let mut sn: Vec<f64> = Vec::new();
        let mut g = vec![beta];
        let mut k = 0;
        while k < restart && total < max_iter {
            let mut w = apply(&precond(&basis[k]));
            let mut col = vec![0.0; k + 2];
            // modified Gram–Schmidt, two passes
            for _ in 0..2 {
                for (i, v) in basis.iter().enumerate() {
                    let hij = dot(&w, v);
                    col[i] += hij;
                    w.iter_mut().zip(v).for_each(|(wi, vi)| *wi -= hij * vi);
                }
            }
            let wn = norm(&w);
            col[k + 1] = wn;
            for i in 0..k {
                let tmp = cs[i] * col[i] + sn[i] * col[i + 1];
                col[i + 1] = -sn[i] * col[i] + cs[i] * col[i + 1];
                col[i] = tmp;
            }
            let rho = col[k].hypot(col[k + 1]);
            let (ck, sk) = if rho == 0.0 { (1.0, 0.0) } else { (col[k] / rho, col[k + 1] / rho) };
            cs.push(ck);
            sn.push(sk);
            col[k] = rho;
            col[k + 1] = 0.0;
            g.push(-sk * g[k]);
            g[k] *= ck;
            hess.push(col);
            total += 1;
            k += 1;
            if g[k].abs() / bnorm <= rel_tol || wn == 0.0 {
                break;
            }
            basis.push(w.iter().map(|v| v / wn).collect());
        }
        // back substitution for the k×k triangular system
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let mut s = g[i];
            for j in (i + 1)..k {
                s -= hess[j][i] * y[j];
            }
            y[i] = if hess[i][i] != 0.0 { s / hess[i][i] } else { 0.0 };
        }
        let mut z = vec![0.0; dim];
        for (yi, v) in y.iter().zip(&basis) {
            z.iter_mut().zip(v).for_each(|(zi, vi)| *zi += yi * vi);
        }
        let dx = precond(&z);
        x.iter_mut().zip(&dx).for_each(|(xi, d)| *xi += d);
        let ax = apply(&x);
        r = b.iter().zip(&ax).map(|(bi, a)| bi - a).collect();
    }
}
