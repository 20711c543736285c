#![allow(dead_code)]

pub mod grid;

use std::path::PathBuf;

use freqctl::controllers::{AffinePiece, CostFunction};
use freqctl::scenario::Scenario;

pub const SCENARIOS: [&str; 5] = ["ref3bus", "mesh9", "tg_droop", "delay", "deadband"];

pub fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(format!("{name}.toml"))
}

pub fn scenario(name: &str) -> Scenario {
    Scenario::from_path(&scenario_path(name)).unwrap()
}

/// Quadratic cost with a derivative jump of `jump` at `kink`.
pub fn kinked(alpha: f64, kink: f64, jump: f64, lower: f64, upper: f64) -> CostFunction {
    let left = AffinePiece { intercept: 0.0, curvature: alpha };
    let right = AffinePiece { intercept: jump, curvature: alpha };
    CostFunction::piecewise(vec![kink], vec![left, right]).unwrap().with_bounds(lower, upper).unwrap()
}

/// Integral from 0 of the kinked derivative, written out by hand.
pub fn kinked_value(alpha: f64, kink: f64, jump: f64, x: f64) -> f64 {
    0.5 * alpha * x * x + jump * (x.max(kink) - kink.max(0.0))
}

/// `Re 1/((1 + j w tg)(1 + j w tb))` by real arithmetic.
pub fn tg_real(tg: f64, tb: f64, w: f64) -> f64 {
    let re = 1.0 - w * w * tg * tb;
    let im = w * (tg + tb);
    re / (re * re + im * im)
}

/// Brute-force minimum: dense log grid, then ternary search in the best cell.
pub fn tg_brute_min(tg: f64, tb: f64) -> f64 {
    let n = 4000;
    let ws: Vec<f64> = (0..n).map(|k| 10f64.powf(-4.0 + 8.0 * k as f64 / (n - 1) as f64)).collect();
    let k = (0..n).min_by(|&a, &b| tg_real(tg, tb, ws[a]).total_cmp(&tg_real(tg, tb, ws[b]))).unwrap();
    let (mut lo, mut hi) = (ws[k.saturating_sub(1)], ws[(k + 1).min(n - 1)]);
    for _ in 0..200 {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if tg_real(tg, tb, m1) < tg_real(tg, tb, m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    tg_real(tg, tb, 0.5 * (lo + hi))
}
