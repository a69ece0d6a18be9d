//! Small deterministic numeric helpers shared across modules.

use std::sync::OnceLock;

const LN_FACTORIAL_LEN: usize = 1025;

/// ln(k!) from a cached cumulative table (exact to round-off for the k we use).
pub fn ln_factorial(k: u32) -> f64 {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    let table = TABLE.get_or_init(|| {
        let mut t = Vec::with_capacity(LN_FACTORIAL_LEN);
        t.push(0.0);
        let mut acc = 0.0;
        for j in 1..LN_FACTORIAL_LEN {
            acc += (j as f64).ln();
            t.push(acc);
        }
        t
    });
    let k = k as usize;
    assert!(k < table.len(), "ln_factorial table exhausted at {k}");
    table[k]
}

/// Best sample of `f` over `points`, left-to-right. Returns (index, x, f(x)).
/// Non-finite samples are skipped; returns None when every sample is skipped.
pub fn scan_max(f: impl Fn(f64) -> f64, points: &[f64]) -> Option<(usize, f64, f64)> {
    let mut best: Option<(usize, f64, f64)> = None;
    for (i, &x) in points.iter().enumerate() {
        let v = f(x);
        if !v.is_finite() {
            continue;
        }
        match best {
            Some((_, _, bv)) if bv >= v => {}
            _ => best = Some((i, x, v)),
        }
    }
    best
}

/// Golden-section refinement of a maximum inside `[lo, hi]`.
///
/// Keeps the best sample ever seen, so the result is never worse than the
/// bracket endpoints even if `f` is not unimodal on the bracket.
pub fn refine_max(f: impl Fn(f64) -> f64, lo: f64, hi: f64, iters: usize) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut a = lo;
    let mut b = hi;
    let mut best_x = lo;
    let mut best_v = f64::NEG_INFINITY;
    let mut consider = |x: f64, v: f64, best_x: &mut f64, best_v: &mut f64| {
        if v.is_finite() && v > *best_v {
            *best_v = v;
            *best_x = x;
        }
    };
    consider(a, f(a), &mut best_x, &mut best_v);
    consider(b, f(b), &mut best_x, &mut best_v);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    consider(c, fc, &mut best_x, &mut best_v);
    consider(d, fd, &mut best_x, &mut best_v);
    for _ in 0..iters {
        if b - a <= f64::EPSILON * (1.0 + a.abs() + b.abs()) {
            break;
        }
        if fc >= fd || !fd.is_finite() {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
            consider(c, fc, &mut best_x, &mut best_v);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
            consider(d, fd, &mut best_x, &mut best_v);
        }
    }
    (best_x, best_v)
}

/// Largest `x` in `(0, hi]` with `pred(x)` true, assuming `pred` flips from
/// true to false once. Doubling bracket then bisection; deterministic.
pub fn bisect_boundary(pred: impl Fn(f64) -> bool, hi: f64) -> f64 {
    if pred(hi) {
        return hi;
    }
    let mut lo = 1e-6_f64.min(hi / 2.0);
    if !pred(lo) {
        return lo;
    }
    let mut up = hi;
    for _ in 0..200 {
        let mid = 0.5 * (lo + up);
        if pred(mid) {
            lo = mid;
        } else {
            up = mid;
        }
    }
    lo
}

/// Relative agreement helper: |a - b| <= tol * (1 + |a| + |b|).
pub fn close_rel(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs() + b.abs())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ln_factorial_matches_direct_product() {
        let direct: f64 = (1..=20).map(|j| (j as f64).ln()).sum();
        assert!((ln_factorial(20) - direct).abs() < 1e-12);
        assert_eq!(ln_factorial(0), 0.0);
        assert_eq!(ln_factorial(1), 0.0);
    }

    #[test]
    fn refine_max_finds_parabola_peak() {
        let (x, v) = refine_max(|x| -(x - 1.3).powi(2), 0.0, 2.0, 200);
        assert!((x - 1.3).abs() < 1e-9);
        assert!(v.abs() < 1e-15);
    }

    #[test]
    fn scan_max_skips_non_finite() {
        let pts = [0.0, 1.0, 2.0];
        let got = scan_max(|x| if x == 1.0 { f64::NAN } else { x }, &pts).unwrap();
        assert_eq!(got.0, 2);
    }
}
