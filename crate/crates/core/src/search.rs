//! Golden-section search for one-dimensional concave maximization.

use crate::error::{Error, Result};

/// Default tolerance on the argument.
pub const ARG_TOL: f64 = 1e-10;
/// Default iteration cap.
pub const MAX_ITERS: usize = 200;

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Maximizes a unimodal `f` on `[lo, hi]`. Returns `(argmax, max)`.
///
/// The endpoints are evaluated too, so a maximum sitting on the boundary of
/// the bracket is returned exactly.
pub fn golden_max<F>(f: F, lo: f64, hi: f64, tol: f64, max_iters: usize) -> Result<(f64, f64)>
where
    F: Fn(f64) -> f64,
{
    if !(lo.is_finite() && hi.is_finite()) || hi < lo {
        return Err(Error::SearchFailed {
            lo,
            hi,
            residual: f64::NAN,
        });
    }
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    let mut iters = 0;
    while b - a > tol {
        if iters == max_iters {
            return Err(Error::SearchFailed {
                lo: a,
                hi: b,
                residual: b - a,
            });
        }
        iters += 1;
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    let mid = 0.5 * (a + b);
    let mut best = (mid, f(mid));
    for x in [lo, hi, c, d] {
        let fx = f(x);
        if fx > best.1 {
            best = (x, fx);
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_interior_maximum_of_parabola() {
        let (x, fx) = golden_max(|x| -(x - 0.3).powi(2) + 2.0, -5.0, 5.0, ARG_TOL, MAX_ITERS).unwrap();
        assert!((x - 0.3).abs() < 1e-7);
        assert!((fx - 2.0).abs() < 1e-15);
    }

    #[test]
    fn returns_boundary_maximum() {
        let (x, fx) = golden_max(|x| x, 0.0, 1.0, ARG_TOL, MAX_ITERS).unwrap();
        assert_eq!((x, fx), (1.0, 1.0));
        let (x, _) = golden_max(|x| -x, 0.0, 1.0, ARG_TOL, MAX_ITERS).unwrap();
        assert_eq!(x, 0.0);
    }

    #[test]
    fn kinked_concave_function() {
        let (x, fx) = golden_max(|x| (0.3 * x).min(1.0 - 0.2 * x), 0.0, 10.0, ARG_TOL, MAX_ITERS).unwrap();
        assert!((x - 2.0).abs() < 1e-8);
        assert!((fx - 0.6).abs() < 1e-9);
    }

    #[test]
    fn reports_iteration_cap() {
        let err = golden_max(|x| -x * x, -1e6, 1e6, 1e-10, 5).unwrap_err();
        assert!(matches!(err, Error::SearchFailed { .. }));
    }

    #[test]
    fn degenerate_bracket() {
        assert_eq!(golden_max(|x| x * 2.0, 1.5, 1.5, ARG_TOL, MAX_ITERS).unwrap(), (1.5, 3.0));
    }
}
