//! Small numerical solvers used by the estimators.

use crate::error::{Error, Result};
use crate::Real;

const GRID: usize = 400;

/// Result of a bounded one-dimensional least-squares fit.
#[derive(Debug, Clone, Copy)]
pub struct ScalarFit<T> {
    pub x: T,
    /// Sum of squared residuals at `x`.
    pub cost: T,
    pub iterations: usize,
}

fn cost<T: Real>(r: &[T]) -> T {
    r.iter().map(|v| *v * *v).sum()
}

/// Minimizes `sum(residuals(x)^2)` over `[lo, hi]`.
///
/// A uniform grid brackets the global minimum (ties go to the smaller
/// `x`), golden-section search narrows the bracket, and Gauss-Newton steps
/// with differenced residual derivatives polish the result.
pub fn least_squares_1d<T: Real>(residuals: impl Fn(T) -> Vec<T>, lo: T, hi: T, tol: T) -> ScalarFit<T> {
    let f = |x: T| cost(&residuals(x));
    let step = (hi - lo) / T::from_usize_lossy(GRID);
    let at = |i: usize| if i == GRID { hi } else { lo + step * T::from_usize_lossy(i) };
    let mut best = (0, f(lo));
    for i in 1..=GRID {
        let v = f(at(i));
        if v < best.1 {
            best = (i, v);
        }
    }
    let (mut a, mut b) = (at(best.0.saturating_sub(1)), at((best.0 + 1).min(GRID)));
    let mut iterations = GRID + 1;

    let inv_phi = (T::lit(5.0).sqrt() - T::one()) / T::lit(2.0);
    let mut c = b - (b - a) * inv_phi;
    let mut d = a + (b - a) * inv_phi;
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol && iterations < 10_000 {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - (b - a) * inv_phi;
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + (b - a) * inv_phi;
            fd = f(d);
        }
        iterations += 1;
    }
    let (mut x, mut fx) = if fc <= fd { (c, fc) } else { (d, fd) };
    for (edge, fe) in [(lo, f(lo)), (hi, f(hi))] {
        if fe < fx {
            x = edge;
            fx = fe;
        }
    }

    let h = T::lit(1e-6).max(T::epsilon().sqrt()) * (hi - lo);
    for _ in 0..20 {
        let r = residuals(x);
        let (rp, rm) = (residuals(x + h), residuals(x - h));
        let (mut num, mut den) = (T::zero(), T::zero());
        for i in 0..r.len() {
            let d = (rp[i] - rm[i]) / (h + h);
            num = num + r[i] * d;
            den = den + d * d;
        }
        iterations += 1;
        if den <= T::zero() {
            break;
        }
        let next = (x - num / den).max(lo).min(hi);
        let fnext = f(next);
        if fnext > fx || next == x {
            break;
        }
        let moved = (next - x).abs();
        x = next;
        fx = fnext;
        if moved <= tol * T::lit(1e-3) {
            break;
        }
    }
    ScalarFit {
        x,
        cost: fx,
        iterations,
    }
}

/// Outcome of [`newton_2d`].
#[derive(Debug, Clone, Copy)]
pub struct RootSolution<T> {
    pub x: [T; 2],
    /// Infinity norm of the residual at `x`.
    pub residual: T,
    pub iterations: usize,
}

fn inf_norm<T: Real>(v: [T; 2]) -> T {
    v[0].abs().max(v[1].abs())
}

/// Damped Newton iteration for `f(x) = 0` in two unknowns with a
/// central-difference Jacobian.
pub fn newton_2d<T: Real>(f: impl Fn([T; 2]) -> [T; 2], x0: [T; 2], tol: T, max_iter: usize) -> Result<RootSolution<T>> {
    let h = T::lit(1e-7).max(T::epsilon().cbrt());
    let mut x = x0;
    let mut r = f(x);
    let mut norm = inf_norm(r);
    let mut iterations = 0;
    while norm > tol {
        if iterations == max_iter {
            return Err(Error::NoConvergence {
                residual: norm.as_f64(),
                iterations,
            });
        }
        iterations += 1;
        let mut jac = [[T::zero(); 2]; 2];
        for j in 0..2 {
            let (mut xp, mut xm) = (x, x);
            xp[j] = xp[j] + h;
            xm[j] = xm[j] - h;
            let (fp, fm) = (f(xp), f(xm));
            for i in 0..2 {
                jac[i][j] = (fp[i] - fm[i]) / (h + h);
            }
        }
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        if det.abs() <= T::min_positive_value() {
            return Err(Error::NoConvergence {
                residual: norm.as_f64(),
                iterations,
            });
        }
        let dx = [
            (jac[1][1] * r[0] - jac[0][1] * r[1]) / det,
            (jac[0][0] * r[1] - jac[1][0] * r[0]) / det,
        ];
        let mut lambda = T::one();
        loop {
            let trial = [x[0] - lambda * dx[0], x[1] - lambda * dx[1]];
            let rt = f(trial);
            let nt = inf_norm(rt);
            if nt < norm || lambda < T::lit(1e-8) {
                x = trial;
                r = rt;
                norm = nt;
                break;
            }
            lambda = lambda / T::lit(2.0);
        }
    }
    Ok(RootSolution {
        x,
        residual: norm,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fits_a_bounded_quadratic() {
        let fit = least_squares_1d(|x: f64| vec![x - 0.3141, 2.0 * (x - 0.3141)], 0.0, 1.0, 1e-12);
        assert!((fit.x - 0.3141).abs() < 1e-10);
        let edge = least_squares_1d(|x: f64| vec![x + 0.2], 0.0, 1.0, 1e-12);
        assert_eq!(edge.x, 0.0);
    }

    #[test]
    fn newton_solves_a_circle_line_system() {
        let s = newton_2d(|[x, y]: [f64; 2]| [x * x + y * y - 1.0, x - y], [1.0, 0.0], 1e-12, 50).unwrap();
        assert!((s.x[0] - 0.5f64.sqrt()).abs() < 1e-10);
        assert!((s.x[1] - 0.5f64.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn newton_reports_no_convergence() {
        let r = newton_2d(|[x, y]: [f64; 2]| [x * x + 1.0, y], [1.0, 0.0], 1e-12, 30);
        assert!(matches!(r, Err(Error::NoConvergence { .. })));
    }
}
