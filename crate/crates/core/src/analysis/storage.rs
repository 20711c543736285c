//! Quadratic storage functions for a turbine-governor sharing its bus
//! damping, certified by an exact dissipation check.

use nalgebra::{Matrix2, Matrix3};

use crate::numeric::nelder_mead_min;
use crate::passivity::remark_storage_coefficients;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StorageSource {
    /// Diagonal coefficients from the closed-form small-gain choice.
    ClosedForm,
    /// Found by numerical search over positive definite matrices.
    Search,
}

/// `W = 1/2 z^T P z` with `z = (alpha - alpha*, p^M - p^M*)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TgStorage {
    pub p: Matrix2<f64>,
    pub source: StorageSource,
    /// Smallest eigenvalue of the negated dissipation form over the sector vertices.
    pub margin: f64,
}

/// Smallest eigenvalue of `-Q` where `Q` is the quadratic form of
/// `dW/dt - u y` in `(z, u)` for output `y = p^M + D u` and droop slope `kappa`.
/// Positive means strict dissipation.
pub fn dissipation_margin(p: &Matrix2<f64>, tau_g: f64, tau_b: f64, kappa: f64, damping: f64) -> f64 {
    let a = Matrix2::new(-1.0 / tau_g, 0.0, 1.0 / tau_b, -1.0 / tau_b);
    let pa = p * a;
    let sym = 0.5 * (pa + pa.transpose());
    let pb = p.column(0) * (kappa / tau_g);
    let cross = [0.5 * pb[0], 0.5 * (pb[1] - 1.0)];
    let q = Matrix3::new(
        sym[(0, 0)],
        sym[(0, 1)],
        cross[0],
        sym[(1, 0)],
        sym[(1, 1)],
        cross[1],
        cross[0],
        cross[1],
        -damping,
    );
    (-q).symmetric_eigenvalues().min()
}

fn worst_margin(p: &Matrix2<f64>, tau_g: f64, tau_b: f64, kappas: &[f64], damping: f64) -> f64 {
    kappas
        .iter()
        .map(|&k| dissipation_margin(p, tau_g, tau_b, k, damping))
        .fold(f64::INFINITY, f64::min)
}

fn from_cholesky(v: &[f64]) -> Matrix2<f64> {
    let l = Matrix2::new(v[0].exp(), 0.0, v[1], v[2].exp());
    l * l.transpose()
}

/// Storage certified for every droop slope in `kappas` (the sector vertices,
/// or the single slope of a linear droop). Tries the closed-form
/// coefficients first, then searches.
pub fn certify_tg_storage(tau_g: f64, tau_b: f64, kappas: &[f64], damping: f64) -> Option<TgStorage> {
    if !(damping > 0.0) {
        return None;
    }
    let k_max = kappas.iter().cloned().fold(0.0, f64::max);
    if let Some((beta, gamma)) = remark_storage_coefficients(k_max, damping, tau_g, tau_b) {
        let p = Matrix2::new(gamma, 0.0, 0.0, beta);
        let margin = worst_margin(&p, tau_g, tau_b, kappas, damping);
        if margin > 0.0 {
            return Some(TgStorage { p, source: StorageSource::ClosedForm, margin });
        }
    }
    let objective = |v: &[f64]| -worst_margin(&from_cholesky(v), tau_g, tau_b, kappas, damping);
    let starts = [
        [0.5 * tau_g.ln(), 0.0, 0.5 * tau_b.ln()],
        [0.0, 0.0, 0.0],
        [0.5 * (0.1 * tau_g).ln(), 0.0, 0.5 * (0.1 * tau_b).ln()],
    ];
    let mut best: Option<(Vec<f64>, f64)> = None;
    for s in &starts {
        let (v, f) = nelder_mead_min(objective, s, 0.5, 2000);
        if best.as_ref().map_or(true, |(_, bf)| f < *bf) {
            best = Some((v, f));
        }
    }
    let (v, f) = best?;
    (f < 0.0).then(|| TgStorage { p: from_cholesky(&v), source: StorageSource::Search, margin: -f })
}
