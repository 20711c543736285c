//! Small numerical helpers shared by the solvers.

use argmin::core::{CostFunction, Executor};
use argmin::solver::goldensectionsearch::GoldenSectionSearch;
use argmin::solver::neldermead::NelderMead;

/// Zero set of a nonincreasing scalar map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Root {
    pub value: f64,
    /// True when the map vanishes on a nondegenerate interval; `value` is
    /// then its midpoint.
    pub plateau: bool,
}

/// Bisects a monotone predicate until the bracket cannot shrink further.
/// `pred(lo)` must hold and `pred(hi)` must fail.
fn bisect(mut lo: f64, mut hi: f64, pred: impl Fn(f64) -> bool) -> (f64, f64) {
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return (lo, hi);
        }
        if pred(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
}

/// Root of a nonincreasing map by bracketing and bisection to float
/// resolution. Returns `None` when no sign change exists within `±limit`.
pub(crate) fn decreasing_root(f: impl Fn(f64) -> f64, limit: f64) -> Option<Root> {
    let mut hi = 1.0;
    while f(hi) >= 0.0 && hi < limit {
        hi *= 2.0;
    }
    let mut lo = -1.0;
    while f(lo) <= 0.0 && lo > -limit {
        lo *= 2.0;
    }
    if f(hi) > 0.0 || f(lo) < 0.0 {
        return None;
    }
    // sup{f > 0} and sup{f >= 0} bound the zero set
    let (_, lower) = bisect(lo, hi, |x| f(x) > 0.0);
    let (upper, _) = bisect(lo, hi, |x| f(x) >= 0.0);
    if upper - lower > 1e-9 * (1.0 + lower.abs()) {
        return Some(Root { value: 0.5 * (lower + upper), plateau: true });
    }
    let value = if f(lower).abs() <= f(upper).abs() { lower } else { upper };
    Some(Root { value, plateau: false })
}

struct Scalar<F>(F);

impl<F: Fn(f64) -> f64> CostFunction for Scalar<F> {
    type Param = f64;
    type Output = f64;

    fn cost(&self, x: &f64) -> Result<f64, argmin::core::Error> {
        Ok((self.0)(*x))
    }
}

/// Golden-section minimization of `f` on `[lo, hi]`.
pub(crate) fn golden_min(f: impl Fn(f64) -> f64, lo: f64, hi: f64, tol: f64) -> (f64, f64) {
    let start = 0.5 * (lo + hi);
    let solver = GoldenSectionSearch::new(lo, hi).expect("valid bracket").with_tolerance(tol).expect("valid tolerance");
    let result = Executor::new(Scalar(&f), solver)
        .configure(|s| s.param(start).max_iters(200))
        .run()
        .expect("golden section search runs");
    let x = *result.state.best_param.as_ref().unwrap_or(&start);
    (x, f(x))
}

struct Vector<F>(F);

impl<F: Fn(&[f64]) -> f64> CostFunction for Vector<F> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, x: &Vec<f64>) -> Result<f64, argmin::core::Error> {
        Ok((self.0)(x))
    }
}

/// Nelder-Mead minimization from `x0` with an axis-aligned initial simplex.
pub(crate) fn nelder_mead_min(f: impl Fn(&[f64]) -> f64, x0: &[f64], step: f64, iters: u64) -> (Vec<f64>, f64) {
    let mut simplex = vec![x0.to_vec()];
    for i in 0..x0.len() {
        let mut v = x0.to_vec();
        v[i] += step;
        simplex.push(v);
    }
    let solver = NelderMead::new(simplex).with_sd_tolerance(1e-12).expect("valid tolerance");
    let result = Executor::new(Vector(&f), solver)
        .configure(|s| s.max_iters(iters))
        .run()
        .expect("Nelder-Mead runs");
    let x = result.state.best_param.clone().unwrap_or_else(|| x0.to_vec());
    let fx = f(&x);
    (x, fx)
}
