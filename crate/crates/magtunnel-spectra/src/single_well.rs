//! Two-term expansion `lambda(h) = c_lin h + c_quad h^2` of the lowest level.
//!
//! The double-well operator is used as is; the mean of the tunneling pair
//! stands in for the one-well level, since the splitting is exponentially
//! small.

use crate::error::{Result, SpectraError};
use crate::gauge::GaugeChoice;
use crate::grid::GridSpec;
use crate::spectrum::{solve_extrapolated, SolverOptions};
use magtunnel::field_model::{well_coefficients, FieldSpec};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Largest `|lambda - fit| / h` accepted from the two-term fit.
pub const FIT_RESIDUAL_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelPoint {
    pub h: f64,
    /// Extrapolated mean of the two lowest eigenvalues.
    pub mean: f64,
}

/// Least-squares fit of `y = c_lin h + c_quad h^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoTermFit {
    pub c_lin: f64,
    pub c_quad: f64,
    /// Covariance of `(c_lin, c_quad)` from the residual variance.
    pub covariance: [[f64; 2]; 2],
    /// `max |y - fit| / h`.
    pub max_rel_residual: f64,
}

/// Fits `y_i / h_i = c_lin + c_quad h_i`, which weights each level by `1 / h_i`.
pub fn fit_two_term(points: &[LevelPoint]) -> Result<TwoTermFit> {
    let n = points.len();
    if n < 3 {
        return Err(SpectraError::Fit(format!("need at least 3 levels, got {n}")));
    }
    let (mut s0, mut s1, mut s2, mut t0, mut t1) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for p in points {
        let y = p.mean / p.h;
        s0 += 1.0;
        s1 += p.h;
        s2 += p.h * p.h;
        t0 += y;
        t1 += y * p.h;
    }
    let det = s0 * s2 - s1 * s1;
    if det.abs() <= 1e-14 * s2 * s0 {
        return Err(SpectraError::Fit("h values do not span an interval".into()));
    }
    let c_lin = (s2 * t0 - s1 * t1) / det;
    let c_quad = (s0 * t1 - s1 * t0) / det;
    let mut ss = 0.0;
    let mut max_rel = 0.0f64;
    for p in points {
        let r = p.mean / p.h - c_lin - c_quad * p.h;
        ss += r * r;
        max_rel = max_rel.max(r.abs());
    }
    let var = ss / (n as f64 - 2.0).max(1.0);
    let covariance = [[var * s2 / det, -var * s1 / det], [-var * s1 / det, var * s0 / det]];
    Ok(TwoTermFit { c_lin, c_quad, covariance, max_rel_residual: max_rel })
}

/// `c_quad` from a polynomial fit of `(lambda - b0 h) / h^2` in `h`, read off at `h = 0`.
///
/// Uses the leading term `b0 h` as known; `degree` sets the number of
/// correction terms absorbed.
pub fn extrapolated_quadratic(points: &[LevelPoint], b0: f64, degree: usize) -> Result<f64> {
    let n = points.len();
    let m = degree + 1;
    if n < m + 1 {
        return Err(SpectraError::Fit(format!("need more than {m} levels for degree {degree}, got {n}")));
    }
    let a = faer::Mat::<f64>::from_fn(n, m, |i, j| points[i].h.powi(j as i32));
    let y = faer::Mat::<f64>::from_fn(n, 1, |i, _| (points[i].mean - b0 * points[i].h) / (points[i].h * points[i].h));
    let qr = a.qr();
    let x = faer::linalg::solvers::SolveLstsq::solve_lstsq(&qr, &y);
    Ok(x[(0, 0)])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub name: String,
    pub value: f64,
    /// `|c_quad - value| / |value|` for the two-term fit.
    pub rel_err_fit: f64,
    /// The same against the extrapolated coefficient.
    pub rel_err_extrapolated: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingleWellCheck {
    pub b0: f64,
    pub d0: f64,
    pub d1: f64,
    pub points: Vec<LevelPoint>,
    pub fit: TwoTermFit,
    /// `|c_lin - b0| / b0`.
    pub c_lin_rel_err: f64,
    /// See [`extrapolated_quadratic`] (degree 2).
    pub c_quad_extrapolated: f64,
    pub candidates: Vec<Candidate>,
    /// Candidate closest to the two-term `c_quad`.
    pub closest_fit: String,
    /// Candidate closest to the extrapolated coefficient.
    pub closest_extrapolated: String,
}

/// Candidate values of the `h^2` coefficient of the lowest level: the
/// two-term formula `2 n d0 + d1` at `n = 1`, the closed-form transport value
/// `d0 + d1`, and `d1` alone.
pub fn candidates(d0: f64, d1: f64) -> Vec<(String, f64)> {
    vec![("2d0+d1".into(), 2.0 * d0 + d1), ("d0+d1".into(), d0 + d1), ("d1".into(), d1)]
}

pub fn single_well_expansion_check(f: &FieldSpec, hs: &[f64], gauge: GaugeChoice, opts: &SolverOptions) -> Result<SingleWellCheck> {
    let wc = well_coefficients(f)?;
    let mut points: Vec<LevelPoint> = hs
        .par_iter()
        .map(|&h| {
            let grid = GridSpec::for_field(f, h, 1)?;
            let e = solve_extrapolated(f, gauge, &grid, h, opts)?;
            Ok(LevelPoint { h, mean: 0.5 * (e.eigenvalues[0] + e.eigenvalues[1]) })
        })
        .collect::<Result<_>>()?;
    points.sort_by(|a, b| b.h.total_cmp(&a.h));
    check_from_points(f.b0, wc.d0, wc.d1, points)
}

/// The check on precomputed levels.
pub fn check_from_points(b0: f64, d0: f64, d1: f64, points: Vec<LevelPoint>) -> Result<SingleWellCheck> {
    let fit = fit_two_term(&points)?;
    if fit.max_rel_residual > FIT_RESIDUAL_TOL {
        return Err(SpectraError::Fit(format!(
            "two-term residual {:.3e} of the leading term exceeds {FIT_RESIDUAL_TOL:e}; the grid is under-resolved",
            fit.max_rel_residual
        )));
    }
    let ext = extrapolated_quadratic(&points, b0, 2)?;
    let cands: Vec<Candidate> = candidates(d0, d1)
        .into_iter()
        .map(|(name, value)| Candidate {
            rel_err_fit: (fit.c_quad - value).abs() / value.abs(),
            rel_err_extrapolated: (ext - value).abs() / value.abs(),
            name,
            value,
        })
        .collect();
    let closest = |key: fn(&Candidate) -> f64| {
        cands
            .iter()
            .min_by(|a, b| key(a).total_cmp(&key(b)))
            .map(|c| c.name.clone())
            .unwrap_or_default()
    };
    Ok(SingleWellCheck {
        b0,
        d0,
        d1,
        c_lin_rel_err: (fit.c_lin - b0).abs() / b0,
        c_quad_extrapolated: ext,
        closest_fit: closest(|c| c.rel_err_fit),
        closest_extrapolated: closest(|c| c.rel_err_extrapolated),
        candidates: cands,
        points,
        fit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn synth(c_lin: f64, c_quad: f64, c3: f64, hs: &[f64]) -> Vec<LevelPoint> {
        hs.iter().map(|&h| LevelPoint { h, mean: c_lin * h + c_quad * h * h + c3 * h * h * h }).collect()
    }

    #[test]
    fn exact_two_term_data_is_recovered() {
        let p = synth(1.3, 0.27, 0.0, &[0.2, 0.15, 0.1, 0.07, 0.05]);
        let f = fit_two_term(&p).unwrap();
        assert!((f.c_lin - 1.3).abs() < 1e-13);
        assert!((f.c_quad - 0.27).abs() < 1e-12);
        assert!(f.max_rel_residual < 1e-13);
        assert!(f.covariance[0][0].abs() < 1e-25);
    }

    #[test]
    fn linear_levels_give_zero_quadratic_coefficient() {
        let p = synth(1.0, 0.0, 0.0, &[0.2, 0.15, 0.1]);
        let f = fit_two_term(&p).unwrap();
        assert!(f.c_quad.abs() < 1e-13);
    }

    #[test]
    fn extrapolation_removes_higher_orders() {
        let hs = [0.2, 0.15, 0.12, 0.1, 0.08, 0.06, 0.05];
        let p: Vec<LevelPoint> = hs.iter().map(|&h| LevelPoint { h, mean: h + 0.2 * h * h - 0.6 * h.powi(3) + 0.9 * h.powi(4) }).collect();
        assert!((extrapolated_quadratic(&p, 1.0, 2).unwrap() - 0.2).abs() < 1e-12);
        let c = check_from_points(1.0, 0.1, 0.2, p).unwrap();
        assert_eq!(c.closest_extrapolated, "d1");
    }

    #[test]
    fn poor_fits_are_rejected() {
        let p = synth(1.0, 0.2, 40.0, &[0.2, 0.15, 0.1, 0.05]);
        assert!(matches!(check_from_points(1.0, 0.1, 0.2, p), Err(SpectraError::Fit(_))));
        assert!(fit_two_term(&synth(1.0, 0.0, 0.0, &[0.1, 0.2])).is_err());
    }

    proptest! {
        #[test]
        fn fit_is_linear_in_the_data(a in 0.5f64..2.0, b in -1.0f64..1.0, c in -1.0f64..1.0) {
            let hs = [0.2, 0.16, 0.13, 0.1, 0.07];
            let f1 = fit_two_term(&synth(a, b, 0.0, &hs)).unwrap();
            let f2 = fit_two_term(&synth(0.0, 0.0, c, &hs)).unwrap();
            let f12 = fit_two_term(&synth(a, b, c, &hs)).unwrap();
            prop_assert!((f12.c_lin - f1.c_lin - f2.c_lin).abs() < 1e-12);
            prop_assert!((f12.c_quad - f1.c_quad - f2.c_quad).abs() < 1e-11);
        }
    }
}
