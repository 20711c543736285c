//! Strictly convex cost functions, their (generalized) derivative inverses
//! and the deadband characteristic.

use super::ControllerError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffinePiece {
    pub intercept: f64,
    /// Slope of the derivative on this piece (second derivative of the cost).
    pub curvature: f64,
}

impl AffinePiece {
    fn eval(&self, x: f64) -> f64 {
        self.intercept + self.curvature * x
    }

    fn invert(&self, y: f64) -> f64 {
        (y - self.intercept) / self.curvature
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CostShape {
    /// `C(x) = alpha x^2 / 2`.
    Quadratic { alpha: f64 },
    /// Derivative affine on each piece; `pieces[k]` is active on
    /// `(breakpoints[k-1], breakpoints[k])`. The derivative may jump upward at
    /// a breakpoint, which is a kink of the cost. `C(0) = 0`.
    Piecewise { breakpoints: Vec<f64>, pieces: Vec<AffinePiece> },
}

/// A strictly convex, continuous cost with a box on its argument.
#[derive(Debug, Clone, PartialEq)]
pub struct CostFunction {
    shape: CostShape,
    lower: f64,
    upper: f64,
}

impl CostFunction {
    pub fn quadratic(alpha: f64) -> Result<Self, ControllerError> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(ControllerError::InvalidCost(format!("quadratic coefficient {alpha} must be positive")));
        }
        Ok(Self { shape: CostShape::Quadratic { alpha }, lower: f64::NEG_INFINITY, upper: f64::INFINITY })
    }

    pub fn piecewise(breakpoints: Vec<f64>, pieces: Vec<AffinePiece>) -> Result<Self, ControllerError> {
        if pieces.len() != breakpoints.len() + 1 {
            return Err(ControllerError::InvalidCost(format!(
                "{} breakpoints need {} pieces, got {}",
                breakpoints.len(),
                breakpoints.len() + 1,
                pieces.len()
            )));
        }
        if breakpoints.iter().any(|b| !b.is_finite()) || breakpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ControllerError::InvalidCost("breakpoints must be finite and strictly increasing".into()));
        }
        for p in &pieces {
            if !(p.curvature > 0.0 && p.curvature.is_finite() && p.intercept.is_finite()) {
                return Err(ControllerError::InvalidCost(format!(
                    "piece {p:?} must have positive finite curvature"
                )));
            }
        }
        for (k, &b) in breakpoints.iter().enumerate() {
            let left = pieces[k].eval(b);
            let right = pieces[k + 1].eval(b);
            if right < left {
                return Err(ControllerError::InvalidCost(format!(
                    "derivative decreases across breakpoint {b} ({left} -> {right})"
                )));
            }
        }
        Ok(Self { shape: CostShape::Piecewise { breakpoints, pieces }, lower: f64::NEG_INFINITY, upper: f64::INFINITY })
    }

    /// Cost whose clipped derivative inverse is the deadband characteristic:
    /// kink at 0 with derivative jump `[-omega0, omega0]`, slope `1/slope`,
    /// bounds at the saturation level.
    pub fn deadband(db: &Deadband) -> Self {
        let curvature = 1.0 / db.slope;
        let sat = db.saturation();
        Self {
            shape: CostShape::Piecewise {
                breakpoints: vec![0.0],
                pieces: vec![
                    AffinePiece { intercept: -db.omega0, curvature },
                    AffinePiece { intercept: db.omega0, curvature },
                ],
            },
            lower: -sat,
            upper: sat,
        }
    }

    pub fn with_bounds(mut self, lower: f64, upper: f64) -> Result<Self, ControllerError> {
        if lower.is_nan() || upper.is_nan() || lower > upper {
            return Err(ControllerError::InvalidCost(format!("bounds [{lower}, {upper}] are empty")));
        }
        self.lower = lower;
        self.upper = upper;
        Ok(self)
    }

    pub fn shape(&self) -> &CostShape {
        &self.shape
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn has_finite_bounds(&self) -> bool {
        self.lower.is_finite() && self.upper.is_finite()
    }

    /// True when the derivative has no jumps.
    pub fn is_smooth(&self) -> bool {
        match &self.shape {
            CostShape::Quadratic { .. } => true,
            CostShape::Piecewise { breakpoints, pieces } => breakpoints
                .iter()
                .enumerate()
                .all(|(k, &b)| pieces[k + 1].eval(b) == pieces[k].eval(b)),
        }
    }

    fn piece_index(breakpoints: &[f64], x: f64) -> usize {
        breakpoints.partition_point(|&b| b < x)
    }

    pub fn value(&self, x: f64) -> f64 {
        match &self.shape {
            CostShape::Quadratic { alpha } => 0.5 * alpha * x * x,
            CostShape::Piecewise { breakpoints, pieces } => {
                // integral of the derivative from 0 to x, piece by piece
                let (a, b, sign) = if x >= 0.0 { (0.0, x, 1.0) } else { (x, 0.0, -1.0) };
                let mut total = 0.0;
                let mut lo = a;
                let mut k = Self::piece_index(breakpoints, a);
                if k < breakpoints.len() && breakpoints[k] == a {
                    k += 1;
                }
                while lo < b {
                    let hi = if k < breakpoints.len() { breakpoints[k].min(b) } else { b };
                    let p = pieces[k];
                    total += p.intercept * (hi - lo) + 0.5 * p.curvature * (hi * hi - lo * lo);
                    lo = hi;
                    k += 1;
                }
                sign * total
            }
        }
    }

    /// Left derivative `C'(x-)`.
    pub fn derivative_left(&self, x: f64) -> f64 {
        match &self.shape {
            CostShape::Quadratic { alpha } => alpha * x,
            CostShape::Piecewise { breakpoints, pieces } => {
                pieces[Self::piece_index(breakpoints, x)].eval(x)
            }
        }
    }

    /// Right derivative `C'(x+)`.
    pub fn derivative_right(&self, x: f64) -> f64 {
        match &self.shape {
            CostShape::Quadratic { alpha } => alpha * x,
            CostShape::Piecewise { breakpoints, pieces } => {
                pieces[breakpoints.partition_point(|&b| b <= x)].eval(x)
            }
        }
    }

    /// Subdifferential `[C'(x-), C'(x+)]`.
    pub fn subdifferential(&self, x: f64) -> (f64, f64) {
        (self.derivative_left(x), self.derivative_right(x))
    }

    /// Second derivative, or `None` at a breakpoint.
    pub fn curvature(&self, x: f64) -> Option<f64> {
        match &self.shape {
            CostShape::Quadratic { alpha } => Some(*alpha),
            CostShape::Piecewise { breakpoints, pieces } => {
                if breakpoints.contains(&x) {
                    None
                } else {
                    Some(pieces[Self::piece_index(breakpoints, x)].curvature)
                }
            }
        }
    }

    pub fn min_curvature(&self) -> f64 {
        match &self.shape {
            CostShape::Quadratic { alpha } => *alpha,
            CostShape::Piecewise { pieces, .. } => pieces.iter().map(|p| p.curvature).fold(f64::INFINITY, f64::min),
        }
    }

    /// Generalized inverse of the derivative: the true inverse where the
    /// derivative is continuous, the kink abscissa on a jump interval.
    pub fn inverse_derivative(&self, y: f64) -> f64 {
        match &self.shape {
            CostShape::Quadratic { alpha } => y / alpha,
            CostShape::Piecewise { breakpoints, pieces } => {
                for (k, &b) in breakpoints.iter().enumerate() {
                    if y <= pieces[k].eval(b) {
                        return pieces[k].invert(y);
                    }
                    if y <= pieces[k + 1].eval(b) {
                        return b;
                    }
                }
                pieces[breakpoints.len()].invert(y)
            }
        }
    }

    /// `[D(y)]` clipped to the bounds.
    pub fn response(&self, y: f64) -> f64 {
        self.inverse_derivative(y).clamp(self.lower, self.upper)
    }

    /// One-sided slopes `(left, right)` of [`Self::response`] at `y`.
    pub fn response_slopes(&self, y: f64) -> (f64, f64) {
        let d = self.inverse_derivative(y);
        let inner = |side_right: bool| -> f64 {
            match &self.shape {
                CostShape::Quadratic { alpha } => 1.0 / alpha,
                CostShape::Piecewise { breakpoints, pieces } => {
                    if let Some(k) = breakpoints.iter().position(|&b| b == d) {
                        let (lo, hi) = (pieces[k].eval(d), pieces[k + 1].eval(d));
                        let on_left_edge = y == lo;
                        let on_right_edge = y == hi;
                        if lo == hi {
                            // continuous derivative, slope changes
                            if side_right { 1.0 / pieces[k + 1].curvature } else { 1.0 / pieces[k].curvature }
                        } else if side_right {
                            if on_right_edge { 1.0 / pieces[k + 1].curvature } else { 0.0 }
                        } else if on_left_edge {
                            1.0 / pieces[k].curvature
                        } else {
                            0.0
                        }
                    } else {
                        1.0 / pieces[Self::piece_index(breakpoints, d)].curvature
                    }
                }
            }
        };
        let clip = |s: f64, right: bool| -> f64 {
            if d > self.upper || d < self.lower {
                0.0
            } else if d == self.upper {
                if right { 0.0 } else { s }
            } else if d == self.lower {
                if right { s } else { 0.0 }
            } else {
                s
            }
        };
        (clip(inner(false), false), clip(inner(true), true))
    }

    /// Largest slope of the response, i.e. its sector bound.
    pub fn max_response_slope(&self) -> f64 {
        1.0 / self.min_curvature()
    }
}

/// Odd deadband-with-saturation characteristic.
///
/// Zero on `|w| <= omega0`, affine with `slope` on `omega0 < |w| < omega1`,
/// saturated at `slope * (omega1 - omega0)` beyond.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Deadband {
    pub omega0: f64,
    pub omega1: f64,
    pub slope: f64,
}

impl Deadband {
    pub fn new(omega0: f64, omega1: f64, slope: f64) -> Result<Self, ControllerError> {
        if !(omega0 > 0.0 && omega1 > omega0 && omega1.is_finite() && slope > 0.0 && slope.is_finite()) {
            return Err(ControllerError::InvalidDeadband { omega0, omega1, slope });
        }
        Ok(Self { omega0, omega1, slope })
    }

    pub fn saturation(&self) -> f64 {
        self.slope * (self.omega1 - self.omega0)
    }

    pub fn eval(&self, w: f64) -> f64 {
        let a = w.abs();
        let mag = if a <= self.omega0 {
            0.0
        } else if a <= self.omega1 {
            self.slope * (a - self.omega0)
        } else {
            self.saturation()
        };
        mag.copysign(w)
    }

    /// One-sided slopes `(left, right)` at `w`.
    pub fn slopes(&self, w: f64) -> (f64, f64) {
        let inside = |a: f64| a > self.omega0 && a < self.omega1;
        let a = w.abs();
        if inside(a) {
            return (self.slope, self.slope);
        }
        if a < self.omega0 || a > self.omega1 {
            return (0.0, 0.0);
        }
        // corner: one side flat, the other sloped
        let outward_sloped = a == self.omega0;
        let right_is_outward = w > 0.0;
        let (outward, inward) = if outward_sloped { (self.slope, 0.0) } else { (0.0, self.slope) };
        if right_is_outward { (inward, outward) } else { (outward, inward) }
    }
}
