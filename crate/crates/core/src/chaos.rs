//! Tent chaotic map, the perturbed variant that escapes its short periodic
//! and fixed points, and the affine carrier mapping between a search box and
//! the unit hypercube.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ChaosError {
    #[error("chaotic variable {0} outside [0,1]")]
    OutOfRange(f64),
    #[error("search box is degenerate in dimension {0} (lower >= upper)")]
    DegenerateBox(usize),
    #[error("point lies outside the search box in dimension {0}")]
    OutsideBox(usize),
    #[error("box dimension mismatch: point has {point}, box has {expected}")]
    DimensionMismatch { point: usize, expected: usize },
}

/// Values the Tent iteration can lock onto: the short periodic points
/// (0.2, 0.4, 0.6, 0.8) and the fixed/absorbing points (0, 0.25, 0.5, 0.75).
pub const TRAP_POINTS: [f64; 8] = [0.0, 0.2, 0.25, 0.4, 0.5, 0.6, 0.75, 0.8];

/// Tolerance for trap detection: float iterates land near, not on, most of
/// the listed rationals (the dyadic ones are hit exactly).
pub const TRAP_TOL: f64 = 1e-12;

fn near_trap(x: f64) -> bool {
    TRAP_POINTS.iter().any(|&t| (x - t).abs() <= TRAP_TOL)
}

/// One step of the Tent map: 2x for x <= 1/2, else 2(1-x).
pub fn tent_step(x: f64) -> Result<f64, ChaosError> {
    if !(0.0..=1.0).contains(&x) {
        return Err(ChaosError::OutOfRange(x));
    }
    Ok(if x <= 0.5 { 2.0 * x } else { 2.0 * (1.0 - x) })
}

/// Tent step with trap-point rescue: when the new value lands on a trap
/// point it is replaced by (x + u)/2 with u uniform in (0,1), redrawn in the
/// vanishingly rare case the perturbed value is itself trapped.
pub fn improved_tent_step<R: Rng + ?Sized>(x: f64, rng: &mut R) -> Result<f64, ChaosError> {
    let y = tent_step(x)?;
    if !near_trap(y) {
        return Ok(y);
    }
    loop {
        let u: f64 = rng.gen_range(0.0..1.0);
        if u == 0.0 {
            continue;
        }
        let perturbed = (y + u) / 2.0;
        if !near_trap(perturbed) {
            return Ok(perturbed);
        }
    }
}

/// Iterate the chosen map componentwise for `n` steps; the returned sequence
/// holds the iterates (x0 itself is not included), so `orbit(x0, 1, ..)` is a
/// single step.
pub fn orbit<R: Rng + ?Sized>(
    x0: &[f64],
    n: usize,
    improved: bool,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>, ChaosError> {
    assert!(n >= 1, "orbit needs at least one step");
    let mut current = x0.to_vec();
    for &c in &current {
        if !(0.0..=1.0).contains(&c) {
            return Err(ChaosError::OutOfRange(c));
        }
    }
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        for c in current.iter_mut() {
            *c = if improved { improved_tent_step(*c, rng)? } else { tent_step(*c)? };
        }
        out.push(current.clone());
    }
    Ok(out)
}

/// Point in the unit hypercube.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitPoint(pub Vec<f64>);

/// Axis-aligned search region with lower[d] < upper[d].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl SearchBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, ChaosError> {
        assert_eq!(lower.len(), upper.len(), "bound vectors must have equal length");
        for (d, (&lo, &hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(ChaosError::DegenerateBox(d));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    /// Diagonal length: the maximum distance between two points in the box.
    pub fn diagonal(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| (hi - lo) * (hi - lo))
            .sum::<f64>()
            .sqrt()
    }

    pub fn clamp(&self, p: &mut [f64]) {
        for (d, v) in p.iter_mut().enumerate() {
            *v = v.clamp(self.lower[d], self.upper[d]);
        }
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.dim()
            && p.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(&v, (&lo, &hi))| v >= lo && v <= hi)
    }
}

/// Affine carrier map from the box into the unit hypercube.
pub fn encode(p: &[f64], bounds: &SearchBox) -> Result<UnitPoint, ChaosError> {
    if p.len() != bounds.dim() {
        return Err(ChaosError::DimensionMismatch { point: p.len(), expected: bounds.dim() });
    }
    let mut coords = Vec::with_capacity(p.len());
    for (d, &v) in p.iter().enumerate() {
        let (lo, hi) = (bounds.lower[d], bounds.upper[d]);
        if v < lo || v > hi {
            return Err(ChaosError::OutsideBox(d));
        }
        coords.push((v - lo) / (hi - lo));
    }
    Ok(UnitPoint(coords))
}

/// Inverse carrier map from the unit hypercube back into the box.
pub fn decode(u: &UnitPoint, bounds: &SearchBox) -> Result<Vec<f64>, ChaosError> {
    if u.0.len() != bounds.dim() {
        return Err(ChaosError::DimensionMismatch { point: u.0.len(), expected: bounds.dim() });
    }
    let mut out = Vec::with_capacity(u.0.len());
    for (d, &c) in u.0.iter().enumerate() {
        if !(0.0..=1.0).contains(&c) {
            return Err(ChaosError::OutOfRange(c));
        }
        out.push(bounds.lower[d] + c * (bounds.upper[d] - bounds.lower[d]));
    }
    Ok(out)
}
