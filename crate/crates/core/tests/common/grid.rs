//! Dense grid search for small OSLC instances.

use freqctl::controllers::CostFunction;
use freqctl::oslc::OslcProblem;

use super::{kinked, kinked_value};

pub const H: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct Spec {
    pub alpha: f64,
    /// `(kink, jump)` for kinked costs.
    pub kink: Option<(f64, f64)>,
    pub lower: f64,
    pub upper: f64,
}

impl Spec {
    pub fn cost(&self) -> CostFunction {
        match self.kink {
            None => CostFunction::quadratic(self.alpha).unwrap().with_bounds(self.lower, self.upper).unwrap(),
            Some((k, j)) => kinked(self.alpha, k, j, self.lower, self.upper),
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        match self.kink {
            None => 0.5 * self.alpha * x * x,
            Some((k, j)) => kinked_value(self.alpha, k, j, x),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Instance {
    pub generators: Vec<Spec>,
    pub demands: Vec<Spec>,
    pub damping: f64,
    /// Total load step in grid units.
    pub load: i64,
}

impl Instance {
    pub fn problem(&self) -> OslcProblem {
        OslcProblem {
            generators: self.generators.iter().map(Spec::cost).collect(),
            demands: self.demands.iter().map(Spec::cost).collect(),
            dampings: vec![self.damping],
            load_steps: vec![self.load as f64 * H],
        }
    }
}

fn grid_units(x: f64) -> i64 {
    (x / H).round() as i64
}

/// Minimizes the objective over the grid by a min-plus convolution over net
/// supply, then picks the uncontrollable demand that closes the balance.
pub fn grid_oracle(inst: &Instance) -> (Vec<f64>, Vec<f64>, f64) {
    // (spec, sign of its contribution to net supply)
    let vars: Vec<(&Spec, i64)> =
        inst.generators.iter().map(|s| (s, 1)).chain(inst.demands.iter().map(|s| (s, -1))).collect();
    // net supply range is indexed from `offset`
    let mut offset = 0i64;
    let mut best = vec![0.0f64];
    let mut choices: Vec<(i64, Vec<i64>)> = Vec::new();
    for &(spec, sign) in &vars {
        let (lo, hi) = (grid_units(spec.lower), grid_units(spec.upper));
        let values: Vec<f64> = (lo..=hi).map(|i| spec.value(i as f64 * H)).collect();
        let (c_lo, c_hi) = if sign > 0 { (lo, hi) } else { (-hi, -lo) };
        let new_offset = offset + c_lo;
        let len = best.len() as i64 + (c_hi - c_lo);
        let mut next = vec![f64::INFINITY; len as usize];
        let mut arg = vec![0i64; len as usize];
        for (a, &b) in best.iter().enumerate() {
            for (k, &v) in values.iter().enumerate() {
                let x = lo + k as i64;
                let s = offset + a as i64 + sign * x;
                let idx = (s - new_offset) as usize;
                let total = b + v;
                if total < next[idx] {
                    next[idx] = total;
                    arg[idx] = x;
                }
            }
        }
        choices.push((new_offset, arg));
        best = next;
        offset = new_offset;
    }
    let mut best_total = f64::INFINITY;
    let mut best_s = 0;
    for (a, &b) in best.iter().enumerate() {
        let s = offset + a as i64;
        let du = (s - inst.load) as f64 * H;
        let total = b + du * du / (2.0 * inst.damping);
        if total < best_total {
            best_total = total;
            best_s = s;
        }
    }
    let d_u = (best_s - inst.load) as f64 * H;
    let mut xs = vec![0i64; vars.len()];
    let mut s = best_s;
    for k in (0..vars.len()).rev() {
        let (off, arg) = &choices[k];
        let x = arg[(s - off) as usize];
        xs[k] = x;
        s -= vars[k].1 * x;
    }
    let n_g = inst.generators.len();
    let to_f = |v: &[i64]| v.iter().map(|&i| i as f64 * H).collect::<Vec<_>>();
    (to_f(&xs[..n_g]), to_f(&xs[n_g..]), d_u)
}

