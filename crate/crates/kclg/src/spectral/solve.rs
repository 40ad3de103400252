//! Smallest nonzero eigenvalue of a symmetric positive semidefinite
//! matrix given in sparse row form. Small matrices go through a dense
//! eigensolver; larger ones through Lanczos with full reorthogonalization
//! and deflation of the known kernel vector, with a dense fallback when
//! iteration fails to converge on a mid-sized problem.

use rand::Rng as _;

use crate::error::{Error, Result};

const DENSE_CUTOFF: usize = 256;
const DENSE_FALLBACK: usize = 4096;
const MAX_ITER: usize = 1000;
const CHECK_EVERY: usize = 10;

/// Result of a gap computation.
#[derive(Debug, Clone, Copy)]
pub struct GapEstimate {
    /// The smallest nonzero eigenvalue.
    pub value: f64,
    /// True when a dense eigensolver produced it.
    pub dense: bool,
    /// Lanczos steps taken (zero on the dense path).
    pub iterations: usize,
    /// Verified two-norm residual of the returned eigenpair.
    pub residual: f64,
}

/// Smallest nonzero eigenvalue of the symmetric matrix with diagonal
/// `diag` and off-diagonal rows `rows`. `kernel` is the exactly known
/// zero mode (unnormalized); the sparse path deflates it and refuses to
/// run when it is not actually in the kernel.
pub fn smallest_nonzero_eigenvalue(
    rows: &[Vec<(u32, f64)>],
    diag: &[f64],
    kernel: &[f64],
) -> Result<GapEstimate> {
    let n = diag.len();
    if n == 0 {
        return Err(Error::Argument("empty matrix".into()));
    }
    if n == 1 {
        // A single state has nothing to relax: infinitely fast.
        return Ok(GapEstimate {
            value: f64::INFINITY,
            dense: true,
            iterations: 0,
            residual: 0.0,
        });
    }
    if n <= DENSE_CUTOFF {
        return dense_gap(rows, diag);
    }
    match lanczos_gap(rows, diag, kernel) {
        Ok(est) => Ok(est),
        Err(_) if n <= DENSE_FALLBACK => dense_gap(rows, diag),
        Err(e) => Err(e),
    }
}

fn matvec(rows: &[Vec<(u32, f64)>], diag: &[f64], x: &[f64], y: &mut [f64]) {
    for i in 0..diag.len() {
        let mut acc = diag[i] * x[i];
        for &(j, s) in &rows[i] {
            acc += s * x[j as usize];
        }
        y[i] = acc;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(c: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += c * xi;
    }
}

fn norm(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

fn dense_gap(rows: &[Vec<(u32, f64)>], diag: &[f64]) -> Result<GapEstimate> {
    let n = diag.len();
    let mut m = nalgebra::DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = diag[i];
        for &(j, s) in &rows[i] {
            m[(i, j as usize)] += s;
        }
    }
    // Off-diagonal pairs agree up to roundoff; average them away.
    let m = (&m + m.transpose()) * 0.5;
    let eig = m.symmetric_eigen();
    let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    vals.sort_by(|a, b| a.partial_cmp(b).expect("eigenvalues are finite"));
    let scale = vals.iter().fold(1.0f64, |a, &v| a.max(v.abs()));
    let tol = scale * 1e-10;
    if vals[0] < -100.0 * tol {
        return Err(Error::Numerical(format!(
            "matrix is not positive semidefinite: eigenvalue {}",
            vals[0]
        )));
    }
    match vals.iter().copied().find(|&v| v > tol) {
        Some(gap) => Ok(GapEstimate {
            value: gap,
            dense: true,
            iterations: 0,
            residual: 0.0,
        }),
        None => Err(Error::Numerical("no nonzero eigenvalue found".into())),
    }
}

fn lanczos_gap(rows: &[Vec<(u32, f64)>], diag: &[f64], kernel: &[f64]) -> Result<GapEstimate> {
    let n = diag.len();
    let scale = diag.iter().fold(1.0f64, |a, &d| a.max(d.abs()));

    let mut phi = kernel.to_vec();
    let pn = norm(&phi);
    if pn == 0.0 {
        return Err(Error::Argument("kernel vector is zero".into()));
    }
    for p in &mut phi {
        *p /= pn;
    }
    let mut sphi = vec![0.0; n];
    matvec(rows, diag, &phi, &mut sphi);
    let kres = sphi.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    if kres > 1e-8 * scale {
        return Err(Error::Numerical(format!(
            "supplied kernel vector has residual {kres:.3e}, not a zero mode"
        )));
    }

    let max_iter = MAX_ITER.min(n - 1);
    let breakdown = scale * 1e-13;
    let mut rng = crate::rng::single(0x517ec7);
    let mut v0: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let c = dot(&phi, &v0);
    axpy(-c, &phi, &mut v0);
    let nv = norm(&v0);
    if nv < 1e-300 {
        return Err(Error::Numerical("degenerate start vector".into()));
    }
    for x in &mut v0 {
        *x /= nv;
    }

    let mut basis: Vec<Vec<f64>> = vec![v0];
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut w = vec![0.0; n];
    loop {
        let m_idx = basis.len() - 1;
        matvec(rows, diag, &basis[m_idx], &mut w);
        let alpha = dot(&basis[m_idx], &w);
        alphas.push(alpha);
        for i in 0..n {
            w[i] -= alpha * basis[m_idx][i];
        }
        if m_idx > 0 {
            let b = betas[m_idx - 1];
            for i in 0..n {
                w[i] -= b * basis[m_idx - 1][i];
            }
        }
        // Full reorthogonalization, kernel included; two passes keep the
        // basis orthogonal to machine precision.
        for _ in 0..2 {
            let c = dot(&phi, &w);
            axpy(-c, &phi, &mut w);
            for u in basis.iter() {
                let c = dot(u, &w);
                axpy(-c, u, &mut w);
            }
        }
        let beta = norm(&w);
        let exhausted = beta <= breakdown;
        let steps = alphas.len();
        if exhausted || steps % CHECK_EVERY == 0 || steps == max_iter {
            let (theta, svec) = tridiag_smallest(&alphas, &betas);
            let est = if exhausted {
                0.0
            } else {
                (beta * svec[svec.len() - 1]).abs()
            };
            if est <= (theta.abs() * 1e-8).max(1e-11) {
                let mut y = vec![0.0; n];
                for (si, u) in svec.iter().zip(basis.iter()) {
                    axpy(*si, u, &mut y);
                }
                let yn = norm(&y);
                for x in &mut y {
                    *x /= yn;
                }
                let mut sy = vec![0.0; n];
                matvec(rows, diag, &y, &mut sy);
                let rho = dot(&y, &sy);
                let mut r2 = 0.0;
                for i in 0..n {
                    let d = sy[i] - rho * y[i];
                    r2 += d * d;
                }
                let resid = r2.sqrt();
                if resid <= (rho.abs() * 1e-6).max(1e-9) && rho > scale * 1e-10 {
                    return Ok(GapEstimate {
                        value: rho,
                        dense: false,
                        iterations: steps,
                        residual: resid,
                    });
                }
                if exhausted {
                    return Err(Error::Numerical(format!(
                        "krylov space closed on an unusable mode (value {rho:.6e}, residual {resid:.3e})"
                    )));
                }
            } else if exhausted {
                return Err(Error::Numerical(
                    "krylov space closed before convergence".into(),
                ));
            }
        }
        if steps == max_iter {
            return Err(Error::Numerical(format!(
                "no convergence in {max_iter} steps"
            )));
        }
        betas.push(beta);
        let vnext: Vec<f64> = w.iter().map(|x| x / beta).collect();
        basis.push(vnext);
    }
}

/// Smallest eigenvalue and eigenvector of the symmetric tridiagonal with
/// diagonal `alphas` and off-diagonal `betas`, via Sturm bisection and
/// inverse iteration.
fn tridiag_smallest(alphas: &[f64], betas: &[f64]) -> (f64, Vec<f64>) {
    let m = alphas.len();
    if m == 1 {
        return (alphas[0], vec![1.0]);
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..m {
        let r = if i > 0 { betas[i - 1].abs() } else { 0.0 }
            + if i < m - 1 { betas[i].abs() } else { 0.0 };
        lo = lo.min(alphas[i] - r);
        hi = hi.max(alphas[i] + r);
    }
    for _ in 0..90 {
        let mid = 0.5 * (lo + hi);
        if sturm_count(alphas, betas, mid) >= 1 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let theta = 0.5 * (lo + hi);

    let mut v = vec![1.0 / (m as f64).sqrt(); m];
    for _ in 0..4 {
        let mut next = solve_shifted(alphas, betas, theta, &v);
        let nn = norm(&next);
        if nn < 1e-300 {
            break;
        }
        for x in &mut next {
            *x /= nn;
        }
        v = next;
    }
    (theta, v)
}

/// Number of eigenvalues of the tridiagonal strictly below `x`, by the
/// standard LDLt sign count.
fn sturm_count(alphas: &[f64], betas: &[f64], x: f64) -> usize {
    // Pivots this small are clamped (negative, so an exact hit counts as
    // crossed); the floor keeps b2 / d finite on the next step.
    let bmax2 = betas.iter().fold(1.0f64, |a, &b| a.max(b * b));
    let pivmin = 1e-292 * bmax2;
    let mut count = 0;
    let mut d = 1.0f64;
    for i in 0..alphas.len() {
        let b2 = if i > 0 { betas[i - 1] * betas[i - 1] } else { 0.0 };
        d = (alphas[i] - x) - b2 / d;
        if d.abs() < pivmin {
            d = -pivmin;
        }
        if d < 0.0 {
            count += 1;
        }
    }
    count
}

/// Solves (T - sigma I) x = rhs for a symmetric tridiagonal T, with partial
/// pivoting (the shifted matrix is near singular by design; tiny pivots are
/// clamped, which inverse iteration tolerates).
fn solve_shifted(alphas: &[f64], betas: &[f64], sigma: f64, rhs: &[f64]) -> Vec<f64> {
    let m = alphas.len();
    let mut sub: Vec<f64> = (0..m)
        .map(|i| if i > 0 { betas[i - 1] } else { 0.0 })
        .collect();
    let mut d: Vec<f64> = alphas.iter().map(|&a| a - sigma).collect();
    let mut up: Vec<f64> = (0..m)
        .map(|i| if i + 1 < m { betas[i] } else { 0.0 })
        .collect();
    let mut up2 = vec![0.0f64; m];
    let mut x: Vec<f64> = rhs.to_vec();
    for i in 0..m - 1 {
        if sub[i + 1].abs() > d[i].abs() {
            // Swap rows i and i+1 column by column across both bandwidths.
            std::mem::swap(&mut d[i], &mut sub[i + 1]);
            std::mem::swap(&mut up[i], &mut d[i + 1]);
            std::mem::swap(&mut up2[i], &mut up[i + 1]);
            x.swap(i, i + 1);
        }
        let mut piv = d[i];
        if piv.abs() < 1e-300 {
            piv = 1e-300;
            d[i] = piv;
        }
        let f = sub[i + 1] / piv;
        d[i + 1] -= f * up[i];
        up[i + 1] -= f * up2[i];
        x[i + 1] -= f * x[i];
        sub[i + 1] = 0.0;
    }
    let mut out = vec![0.0f64; m];
    for i in (0..m).rev() {
        let mut s = x[i];
        if i + 1 < m {
            s -= up[i] * out[i + 1];
        }
        if i + 2 < m {
            s -= up2[i] * out[i + 2];
        }
        let mut piv = d[i];
        if piv.abs() < 1e-300 {
            piv = 1e-300;
        }
        out[i] = s / piv;
    }
    out
}
