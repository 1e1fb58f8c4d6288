//! Small numerical kernels shared by the other modules: trapezoid sums,
//! adaptive Simpson quadrature, bisection and symmetric eigenvalues.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Trapezoid rule on a uniform grid with spacing `h`.
pub fn trapezoid<T: Real>(values: &[T], h: T) -> T {
    match values.len() {
        0 | 1 => T::zero(),
        n => {
            let inner: T = values[1..n - 1].iter().copied().sum();
            h * (inner + T::half() * (values[0] + values[n - 1]))
        }
    }
}

/// Adaptive Simpson quadrature of `f` over `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson<T, F>(f: &F, a: T, b: T, tol: T, max_depth: u32) -> Result<T>
where
    T: Real,
    F: Fn(T) -> T + ?Sized,
{
    if a == b {
        return Ok(T::zero());
    }
    let fa = f(a);
    let fb = f(b);
    let m = T::half() * (a + b);
    let fm = f(m);
    let whole = simpson(a, b, fa, fm, fb);
    let mut ok = true;
    let v = simpson_rec(f, a, b, fa, fm, fb, whole, tol, max_depth, &mut ok);
    if !v.is_finite() {
        return Err(Error::NonFinite("quadrature integrand".into()));
    }
    if ok {
        Ok(v)
    } else {
        Err(Error::QuadratureNonConvergence { tol: tol.to_f64_lossy() })
    }
}

fn simpson<T: Real>(a: T, b: T, fa: T, fm: T, fb: T) -> T {
    (b - a) / T::of(6.0) * (fa + T::of(4.0) * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<T, F>(
    f: &F,
    a: T,
    b: T,
    fa: T,
    fm: T,
    fb: T,
    whole: T,
    tol: T,
    depth: u32,
    ok: &mut bool,
) -> T
where
    T: Real,
    F: Fn(T) -> T + ?Sized,
{
    let m = T::half() * (a + b);
    let lm = T::half() * (a + m);
    let rm = T::half() * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if delta.abs() <= T::of(15.0) * tol {
        return left + right + delta / T::of(15.0);
    }
    if depth == 0 {
        *ok = false;
        return left + right + delta / T::of(15.0);
    }
    simpson_rec(f, a, m, fa, flm, fm, left, T::half() * tol, depth - 1, ok)
        + simpson_rec(f, m, b, fm, frm, fb, right, T::half() * tol, depth - 1, ok)
}

/// Bisection for a root of `f` in `[lo, hi]`; the endpoints must bracket a sign change.
pub fn bisect<T, F>(f: F, mut lo: T, mut hi: T, xtol: T, max_iter: usize) -> Result<T>
where
    T: Real,
    F: Fn(T) -> T,
{
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == T::zero() {
        return Ok(lo);
    }
    if fhi == T::zero() {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() {
        return Err(Error::BracketFailure { upper: hi.to_f64_lossy() });
    }
    for _ in 0..max_iter {
        let mid = T::half() * (lo + hi);
        if (hi - lo).abs() <= xtol || mid == lo || mid == hi {
            return Ok(mid);
        }
        let fmid = f(mid);
        if fmid == T::zero() {
            return Ok(mid);
        }
        if fmid.signum() == flo.signum() {
            lo = mid;
            flo = fmid;
        } else {
            hi = mid;
        }
    }
    Err(Error::NoConvergence {
        iters: max_iter,
        residual: (hi - lo).to_f64_lossy(),
    })
}

/// Eigenvalues of a symmetric matrix (cyclic Jacobi), ascending.
pub fn symmetric_eigenvalues<T: Real>(matrix: &[Vec<T>]) -> Vec<T> {
    let n = matrix.len();
    let mut a: Vec<Vec<T>> = matrix.to_vec();
    for _sweep in 0..100 {
        let mut off = T::zero();
        for (i, row) in a.iter().enumerate() {
            for &v in &row[i + 1..] {
                off += v * v;
            }
        }
        if off <= T::epsilon() * T::epsilon() {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q] == T::zero() {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (T::two() * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut eig: Vec<T> = (0..n).map(|i| a[i][i]).collect();
    eig.sort_by(|x, y| x.partial_cmp(y).expect("finite eigenvalues"));
    eig
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn trapezoid_is_exact_for_linear() {
        let xs: Vec<f64> = (0..=10).map(|i| i as f64 * 0.1).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x + 1.0).collect();
        assert_relative_eq!(trapezoid(&ys, 0.1), 2.5, epsilon = 1e-14);
    }

    #[test]
    fn simpson_matches_closed_forms() {
        let v = adaptive_simpson(&|x: f64| x.exp(), 0.0, 1.0, 1e-12, 40).unwrap();
        assert_relative_eq!(v, std::f64::consts::E - 1.0, epsilon = 1e-11);
        let v = adaptive_simpson(&|x: f64| x.sqrt(), 0.0, 1.0, 1e-10, 50).unwrap();
        assert_relative_eq!(v, 2.0 / 3.0, epsilon = 1e-9);
    }

    #[test]
    fn simpson_reports_non_convergence() {
        let r = adaptive_simpson(&|x: f64| (1.0 / x).sin(), 1e-9, 1.0, 1e-14, 3);
        assert!(matches!(r, Err(Error::QuadratureNonConvergence { .. })));
    }

    #[test]
    fn bisection_finds_cube_root() {
        let r = bisect(|a: f64| a * a * a - 4.0, 0.0, 4.0, 1e-14, 200).unwrap();
        assert_relative_eq!(r, 4f64.powf(1.0 / 3.0), epsilon = 1e-12);
        assert!(bisect(|a: f64| a * a + 1.0, -1.0, 1.0, 1e-9, 10).is_err());
    }

    #[test]
    fn jacobi_eigenvalues() {
        let m = vec![
            vec![2.0, 1.0, 0.0],
            vec![1.0, 2.0, 0.0],
            vec![0.0, 0.0, 5.0],
        ];
        let e = symmetric_eigenvalues(&m);
        assert_relative_eq!(e[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(e[1], 3.0, epsilon = 1e-12);
        assert_relative_eq!(e[2], 5.0, epsilon = 1e-12);
    }
}
