//! Uniform tensor grids on a Dirichlet box `[-L1, L1] x [-L2, L2]`.

use crate::error::{Result, SpectraError};
use magtunnel::field_model::FieldSpec;
use serde::{Deserialize, Serialize};

/// Interior nodes `q_k = -L + (k + 1) d`, `d = 2L / (N + 1)`, on each axis.
///
/// Nodes are stored with the `q2` index fastest: `idx = i N2 + j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub half_widths: [f64; 2],
    pub points: [usize; 2],
}

/// Largest spacing allowed for `h`.
pub fn spacing_limit(h: f64) -> f64 {
    0.15 * h.sqrt()
}

impl GridSpec {
    pub fn new(half_widths: [f64; 2], points: [usize; 2]) -> Result<Self> {
        let g = Self { half_widths, points };
        g.validate_shape()?;
        Ok(g)
    }

    /// Box and resolution for the two-well problem at `h`.
    ///
    /// `L2 = 2 (c_u + 3 sqrt(h / b0))`, `L1 = L2 / 2 + 1/2`, spacing at most
    /// `min(spacing_limit(h), L1 / 50) / refine`.
    pub fn for_field(f: &FieldSpec, h: f64, refine: usize) -> Result<Self> {
        if !(h > 0.0) || refine == 0 {
            return Err(SpectraError::Grid(format!("need h > 0 and refine >= 1, got h = {h}, refine = {refine}")));
        }
        let l2 = 2.0 * (f.c_u.abs() + 3.0 * (h / f.b0).sqrt());
        let l1 = 0.5 * l2 + 0.5;
        Self::with_spacing([l1, l2], spacing_limit(h).min(l1.min(l2) / 50.0) / refine as f64)
    }

    /// Smallest node counts whose spacing does not exceed `d`.
    pub fn with_spacing(half_widths: [f64; 2], d: f64) -> Result<Self> {
        if !(d > 0.0) {
            return Err(SpectraError::Grid(format!("spacing must be positive, got {d}")));
        }
        let n = |l: f64| ((2.0 * l / d).ceil() as usize).saturating_sub(1).max(1);
        Self::new(half_widths, [n(half_widths[0]), n(half_widths[1])])
    }

    /// The same box with each spacing halved.
    pub fn refined(&self) -> Self {
        Self {
            half_widths: self.half_widths,
            points: [2 * self.points[0] + 1, 2 * self.points[1] + 1],
        }
    }

    pub fn len(&self) -> usize {
        self.points[0] * self.points[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self) -> [f64; 2] {
        [
            2.0 * self.half_widths[0] / (self.points[0] + 1) as f64,
            2.0 * self.half_widths[1] / (self.points[1] + 1) as f64,
        ]
    }

    /// Coordinate of interior node `k` on `axis`.
    #[inline]
    pub fn coord(&self, axis: usize, k: usize) -> f64 {
        let d = self.spacing()[axis];
        -self.half_widths[axis] + (k + 1) as f64 * d
    }

    pub fn nodes(&self, axis: usize) -> Vec<f64> {
        (0..self.points[axis]).map(|k| self.coord(axis, k)).collect()
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.points[1] + j
    }

    /// Index of the node at `-q`.
    #[inline]
    pub fn mirror(&self, idx: usize) -> usize {
        self.len() - 1 - idx
    }

    fn validate_shape(&self) -> Result<()> {
        let [l1, l2] = self.half_widths;
        if !(l1 > 0.0 && l2 > 0.0 && l1.is_finite() && l2.is_finite()) {
            return Err(SpectraError::Grid(format!("half-widths must be positive, got {:?}", self.half_widths)));
        }
        if self.points[0] < 3 || self.points[1] < 3 {
            return Err(SpectraError::Grid(format!("need at least 3 points per axis, got {:?}", self.points)));
        }
        Ok(())
    }

    /// Checks the resolution rules for `h`.
    pub fn validate(&self, h: f64) -> Result<()> {
        self.validate_shape()?;
        if !(h > 0.0 && h.is_finite()) {
            return Err(SpectraError::Grid(format!("h must be positive, got {h}")));
        }
        let d = self.spacing()[0].max(self.spacing()[1]);
        let limit = spacing_limit(h).min(self.half_widths[0].min(self.half_widths[1]) / 50.0);
        // Node counts from `with_spacing` sit exactly on the limit up to rounding.
        if d > limit * (1.0 + 1e-12) {
            return Err(SpectraError::GridTooCoarse { h, spacing: d, limit });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use magtunnel::field_model::{make_example_field, ExampleFieldParams};

    #[test]
    fn nodes_are_symmetric_and_mirror_is_an_involution() {
        let g = GridSpec::new([1.3, 2.1], [11, 14]).unwrap();
        for axis in 0..2 {
            let x = g.nodes(axis);
            for (a, b) in x.iter().zip(x.iter().rev()) {
                assert!((a + b).abs() < 1e-14);
            }
        }
        for i in 0..11 {
            for j in 0..14 {
                let m = g.mirror(g.index(i, j));
                assert_eq!(m, g.index(10 - i, 13 - j));
                assert_eq!(g.mirror(m), g.index(i, j));
            }
        }
    }

    #[test]
    fn refinement_halves_spacing_on_the_same_box() {
        let g = GridSpec::new([1.0, 2.0], [9, 19]).unwrap();
        let r = g.refined();
        for a in 0..2 {
            assert!((r.spacing()[a] - 0.5 * g.spacing()[a]).abs() < 1e-15);
        }
        // Old nodes are every other new node.
        assert!((r.coord(0, 1) - g.coord(0, 0)).abs() < 1e-15);
    }

    #[test]
    fn spacing_rule_is_enforced() {
        let p = ExampleFieldParams { b0: 1.0, eps1: 0.1, eps2: 0.0755, c_u: 0.8, beta: 1.0, strip_r: 0.75, eps: None };
        let f = make_example_field(p).unwrap();
        let g = GridSpec::for_field(&f, 0.1, 1).unwrap();
        g.validate(0.1).unwrap();
        assert!(g.spacing()[0] <= spacing_limit(0.1));
        match g.validate(0.05) {
            Err(SpectraError::GridTooCoarse { .. }) => {}
            other => panic!("{other:?}"),
        }
        assert!(GridSpec::new([1.0, 1.0], [2, 5]).is_err());
    }
}
