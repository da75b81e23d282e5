//! Bracketing root finders.

/// Bisection on `[a, b]` where `f(a)` and `f(b)` have opposite signs (or one
/// of them vanishes). Stops when the bracket is narrower than `tol` or when
/// the midpoint is no longer representable between the endpoints.
///
/// Returns `None` if the endpoints do not bracket a sign change.
pub fn bisect(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Option<f64> {
    let (mut lo, mut hi) = if a <= b { (a, b) } else { (b, a) };
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Some(lo);
    }
    if fhi == 0.0 {
        return Some(hi);
    }
    if !(flo.is_finite() || fhi.is_finite()) || flo.signum() == fhi.signum() {
        return None;
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || hi - lo <= tol {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Some(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Solves `g(x) = target` for nondecreasing `g` on `[lo, hi]`, assuming the
/// target is bracketed. Returns the bracket endpoint when it is not.
pub fn invert_increasing(g: impl Fn(f64) -> f64, target: f64, lo: f64, hi: f64, tol: f64) -> f64 {
    if g(lo) >= target {
        return lo;
    }
    if g(hi) <= target {
        return hi;
    }
    bisect(|x| g(x) - target, lo, hi, tol).unwrap_or(hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bisect_sqrt2() {
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0, 0.0).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 4.0 * f64::EPSILON);
    }

    #[test]
    fn bisect_rejects_same_sign() {
        assert!(bisect(|x| x * x + 1.0, -1.0, 1.0, 1e-12).is_none());
    }

    #[test]
    fn bisect_accepts_reversed_bracket() {
        let r = bisect(|x| x - 0.25, 1.0, 0.0, 1e-14).unwrap();
        assert!((r - 0.25).abs() < 1e-14);
    }

    #[test]
    fn invert_clamps_outside_range() {
        assert_eq!(invert_increasing(|x| x, 5.0, 0.0, 1.0, 1e-12), 1.0);
        assert_eq!(invert_increasing(|x| x, -5.0, 0.0, 1.0, 1e-12), 0.0);
        let x = invert_increasing(|x| x * x * x, 0.125, 0.0, 1.0, 1e-14);
        assert!((x - 0.5).abs() < 1e-13);
    }
}
