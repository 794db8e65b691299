//! Exponential-asymptotics fit of the tunneling gap.
//!
//! Model: `ln gap = ln c0 + (3/2) ln h - S / h`, fitted by weighted least
//! squares on `{1, 1/h}` after moving `(3/2) ln h` to the left. A second fit
//! frees the power of `h` as a diagnostic of how asymptotic the data are.

use crate::config::FitConfig;
use crate::error::{CliError, Result};
use faer::linalg::solvers::SolveLstsq;
use faer::Mat;
use serde::{Deserialize, Serialize};

/// Largest accepted condition number of the column-equilibrated weighted design.
pub const COND_LIMIT: f64 = 1e3;

/// Measured gap at one `h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapPoint {
    pub h: f64,
    pub gap: f64,
    /// Absolute eigensolver noise scale of the gap.
    pub noise_floor: f64,
    /// Relative discretization uncertainty of the gap.
    pub rel_uncertainty: f64,
}

impl GapPoint {
    /// Standard deviation assigned to `ln gap`: the measured relative
    /// uncertainty combined with `h`, the size of the first neglected
    /// correction in the asymptotic law.
    pub fn sigma(&self) -> f64 {
        let noise = self.noise_floor / self.gap;
        (self.h * self.h + noise * noise + self.rel_uncertainty * self.rel_uncertainty).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitPoint {
    pub h: f64,
    pub gap: f64,
    pub noise_floor: f64,
    pub sigma: f64,
    pub used: bool,
    /// `ln gap - model` for used points.
    pub residual: Option<f64>,
}

/// Weighted linear least squares `y ~ X c` with `1 / sigma^2` weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub coefficients: Vec<f64>,
    /// From the scaled covariance `s^2 (X^T W X)^{-1}`, `s^2` the reduced chi-square.
    pub std_errors: Vec<f64>,
    pub condition_number: f64,
    pub residuals: Vec<f64>,
    pub reduced_chi2: f64,
}

pub fn weighted_lstsq(rows: &[Vec<f64>], y: &[f64], sigma: &[f64]) -> Result<LinearFit> {
    let n = rows.len();
    let p = rows.first().map_or(0, Vec::len);
    if n <= p || p == 0 {
        return Err(CliError::Numerical(format!("{n} points cannot determine {p} coefficients")));
    }
    let a = Mat::<f64>::from_fn(n, p, |i, j| rows[i][j] / sigma[i]);
    let scale: Vec<f64> = (0..p).map(|j| (0..n).map(|i| a[(i, j)] * a[(i, j)]).sum::<f64>().sqrt()).collect();
    if scale.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
        return Err(CliError::Numerical("design matrix has an empty or non-finite column".into()));
    }
    let ae = Mat::<f64>::from_fn(n, p, |i, j| a[(i, j)] / scale[j]);
    let normal = ae.transpose() * &ae;
    let eig = normal
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|e| CliError::Numerical(format!("eigen decomposition of the normal matrix: {e:?}")))?;
    let s = eig.S();
    let (lo, hi) = (0..p).map(|k| s[k]).fold((f64::INFINITY, 0.0f64), |(l, h), v| (l.min(v), h.max(v)));
    let condition_number = if lo > 0.0 { (hi / lo).sqrt() } else { f64::INFINITY };

    let b = Mat::<f64>::from_fn(n, 1, |i, _| y[i] / sigma[i]);
    let x = ae.qr().solve_lstsq(&b);
    let coefficients: Vec<f64> = (0..p).map(|j| x[(j, 0)] / scale[j]).collect();
    let residuals: Vec<f64> = (0..n)
        .map(|i| y[i] - rows[i].iter().zip(&coefficients).map(|(r, c)| r * c).sum::<f64>())
        .collect();
    let chi2: f64 = residuals.iter().zip(sigma).map(|(r, s)| (r / s) * (r / s)).sum();
    let reduced_chi2 = chi2 / (n - p) as f64;
    let u = eig.U();
    let std_errors = (0..p)
        .map(|j| {
            let inv_jj: f64 = (0..p).map(|k| u[(j, k)] * u[(j, k)] / s[k]).sum();
            (reduced_chi2 * inv_jj).sqrt() / scale[j]
        })
        .collect();
    Ok(LinearFit { coefficients, std_errors, condition_number, residuals, reduced_chi2 })
}

/// Fit with the power of `h` left free: `ln gap = ln c + p ln h - S / h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreeExponentFit {
    pub p: f64,
    pub p_std: f64,
    pub s: f64,
    pub s_std: f64,
    pub c0: f64,
    pub condition_number: f64,
    pub max_abs_residual: f64,
}

/// `e^{S_pred / h} h^{-3/2} gap` at one used point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompensatedPoint {
    pub h: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapFit {
    pub model: String,
    pub window_rule: String,
    pub noise_factor: f64,
    pub points: Vec<FitPoint>,
    pub n_used: usize,
    pub s_fit: f64,
    pub s_fit_std: f64,
    pub c0_fit: f64,
    pub c0_fit_std: f64,
    pub s_pred: f64,
    pub c0_pred: f64,
    /// `(S_fit - S_pred) / S_pred`.
    pub s_rel_err: f64,
    /// `c0_fit / c0_pred`.
    pub c0_ratio: f64,
    pub c0_within_factor_2: bool,
    pub condition_number: f64,
    pub reduced_chi2: f64,
    pub max_abs_residual: f64,
    pub rms_residual: f64,
    pub free_exponent: FreeExponentFit,
    /// Used points in order of decreasing `h`.
    pub compensated: Vec<CompensatedPoint>,
    /// Whether the last three compensated values (smallest `h`) are monotone.
    pub compensated_monotone_last3: bool,
}

pub fn fit_gap(points: &[GapPoint], s_pred: f64, c0_pred: f64, cfg: &FitConfig) -> Result<GapFit> {
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| b.h.total_cmp(&a.h));
    let usable = |p: &GapPoint| p.gap.is_finite() && p.gap > 0.0 && p.gap > cfg.noise_factor * p.noise_floor;
    let used: Vec<GapPoint> = sorted.iter().copied().filter(usable).collect();
    let min_points = cfg.min_points.max(4);
    if used.len() < min_points {
        return Err(CliError::Numerical(format!(
            "{} of {} points have gap above {} x noise floor; at least {min_points} are needed",
            used.len(),
            sorted.len(),
            cfg.noise_factor
        )));
    }
    let sigma: Vec<f64> = used.iter().map(GapPoint::sigma).collect();
    let rows: Vec<Vec<f64>> = used.iter().map(|p| vec![1.0, -1.0 / p.h]).collect();
    let y: Vec<f64> = used.iter().map(|p| p.gap.ln() - 1.5 * p.h.ln()).collect();
    let main = weighted_lstsq(&rows, &y, &sigma)?;
    if main.condition_number > COND_LIMIT {
        return Err(CliError::Numerical(format!(
            "ill-conditioned fit: condition number {:.3e} exceeds {COND_LIMIT:e}; widen the h range",
            main.condition_number
        )));
    }
    let (ln_c0, s_fit) = (main.coefficients[0], main.coefficients[1]);
    let c0_fit = ln_c0.exp();

    let rows3: Vec<Vec<f64>> = used.iter().map(|p| vec![1.0, p.h.ln(), -1.0 / p.h]).collect();
    let y3: Vec<f64> = used.iter().map(|p| p.gap.ln()).collect();
    let free = weighted_lstsq(&rows3, &y3, &sigma)?;
    let free_exponent = FreeExponentFit {
        p: free.coefficients[1],
        p_std: free.std_errors[1],
        s: free.coefficients[2],
        s_std: free.std_errors[2],
        c0: free.coefficients[0].exp(),
        condition_number: free.condition_number,
        max_abs_residual: free.residuals.iter().fold(0.0f64, |m, r| m.max(r.abs())),
    };

    let mut k = 0;
    let fit_points = sorted
        .iter()
        .map(|p| {
            let is_used = usable(p);
            let residual = is_used.then(|| {
                k += 1;
                main.residuals[k - 1]
            });
            FitPoint { h: p.h, gap: p.gap, noise_floor: p.noise_floor, sigma: p.sigma(), used: is_used, residual }
        })
        .collect();
    let compensated: Vec<CompensatedPoint> = used
        .iter()
        .map(|p| CompensatedPoint { h: p.h, value: (s_pred / p.h).exp() * p.h.powf(-1.5) * p.gap })
        .collect();
    let last: Vec<f64> = compensated.iter().rev().take(3).map(|c| c.value).collect();
    let compensated_monotone_last3 =
        last.len() == 3 && ((last[0] >= last[1] && last[1] >= last[2]) || (last[0] <= last[1] && last[1] <= last[2]));
    let c0_ratio = c0_fit / c0_pred;
    let n = main.residuals.len() as f64;
    Ok(GapFit {
        model: "ln(gap) = ln(c0) + 1.5 ln(h) - S/h".into(),
        window_rule: format!("use points with gap > {} x noise floor", cfg.noise_factor),
        noise_factor: cfg.noise_factor,
        points: fit_points,
        n_used: used.len(),
        s_fit,
        s_fit_std: main.std_errors[1],
        c0_fit,
        c0_fit_std: c0_fit * main.std_errors[0],
        s_pred,
        c0_pred,
        s_rel_err: (s_fit - s_pred) / s_pred,
        c0_ratio,
        c0_within_factor_2: (0.5..=2.0).contains(&c0_ratio),
        condition_number: main.condition_number,
        reduced_chi2: main.reduced_chi2,
        max_abs_residual: main.residuals.iter().fold(0.0f64, |m, r| m.max(r.abs())),
        rms_residual: (main.residuals.iter().map(|r| r * r).sum::<f64>() / n).sqrt(),
        free_exponent,
        compensated,
        compensated_monotone_last3,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const HS: [f64; 8] = [0.15, 0.12, 0.1, 0.08, 0.065, 0.05, 0.04, 0.03];

    fn synthetic(c0: f64, s: f64, noise: impl Fn(usize) -> f64) -> Vec<GapPoint> {
        HS.iter()
            .enumerate()
            .map(|(i, &h)| GapPoint {
                h,
                gap: c0 * h.powf(1.5) * (-s / h).exp() * (1.0 + noise(i)),
                noise_floor: 1e-30,
                rel_uncertainty: 0.0,
            })
            .collect()
    }

    #[test]
    fn exact_model_data_is_recovered() {
        let f = fit_gap(&synthetic(0.7, 0.4, |_| 0.0), 0.4, 0.7, &FitConfig::default()).unwrap();
        assert!((f.s_fit - 0.4).abs() < 1e-10, "{}", f.s_fit);
        assert!((f.c0_fit - 0.7).abs() < 1e-10, "{}", f.c0_fit);
        assert!((f.free_exponent.p - 1.5).abs() < 1e-8);
        assert!(f.max_abs_residual < 1e-12);
        assert!(f.c0_within_factor_2);
        assert_eq!(f.n_used, HS.len());
        assert!(f.compensated.iter().all(|c| (c.value - 0.7).abs() < 1e-12));
        assert!(f.compensated_monotone_last3);
    }

    #[test]
    fn one_percent_noise_keeps_s_within_two_percent() {
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let eps: Vec<f64> = (0..HS.len()).map(|_| rng.gen_range(-0.01..0.01)).collect();
            let f = fit_gap(&synthetic(0.7, 0.4, |i| eps[i]), 0.4, 0.7, &FitConfig::default()).unwrap();
            assert!((f.s_fit - 0.4).abs() < 0.02 * 0.4, "seed {seed}: {}", f.s_fit);
        }
    }

    #[test]
    fn noise_floor_window_discards_points() {
        let mut p = synthetic(0.7, 0.4, |_| 0.0);
        let last = p.len() - 1;
        p[last].noise_floor = p[last].gap / 50.0;
        let f = fit_gap(&p, 0.4, 0.7, &FitConfig::default()).unwrap();
        assert_eq!(f.n_used, HS.len() - 1);
        assert!(!f.points[last].used && f.points[last].residual.is_none());
        for q in p.iter_mut().skip(3) {
            q.noise_floor = q.gap;
        }
        assert!(matches!(fit_gap(&p, 0.4, 0.7, &FitConfig::default()), Err(CliError::Numerical(_))));
    }

    #[test]
    fn narrow_h_range_is_ill_conditioned() {
        let p: Vec<GapPoint> = [0.1, 0.10003, 0.10006, 0.1001]
            .iter()
            .map(|&h| GapPoint { h, gap: 0.7 * h.powf(1.5) * (-0.4 / h).exp(), noise_floor: 0.0, rel_uncertainty: 0.0 })
            .collect();
        let e = fit_gap(&p, 0.4, 0.7, &FitConfig::default()).unwrap_err();
        assert!(e.to_string().contains("ill-conditioned"), "{e}");
    }

    #[test]
    fn prefactor_outside_factor_two_is_reported() {
        let f = fit_gap(&synthetic(0.7, 0.4, |_| 0.0), 0.4, 3.0, &FitConfig::default()).unwrap();
        assert!(!f.c0_within_factor_2);
        assert!((f.c0_ratio - 0.7 / 3.0).abs() < 1e-10);
    }

    #[test]
    fn residuals_are_always_populated() {
        let f = fit_gap(&synthetic(0.7, 0.4, |i| 0.003 * (i as f64 - 3.0)), 0.4, 0.7, &FitConfig::default()).unwrap();
        assert!(f.points.iter().all(|p| p.residual.is_some()));
        assert!(f.rms_residual > 0.0 && f.s_fit_std > 0.0 && f.c0_fit_std > 0.0);
    }

    proptest! {
        #[test]
        fn recovery_across_parameters(c0 in 0.01f64..100.0, s in 0.05f64..1.0) {
            let f = fit_gap(&synthetic(c0, s, |_| 0.0), s, c0, &FitConfig::default()).unwrap();
            prop_assert!((f.s_fit - s).abs() < 1e-10 * s.max(1.0));
            prop_assert!((f.c0_fit / c0 - 1.0).abs() < 1e-9);
        }

        #[test]
        fn order_of_points_does_not_matter(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let eps: Vec<f64> = (0..HS.len()).map(|_| rng.gen_range(-0.01..0.01)).collect();
            let p = synthetic(0.7, 0.4, |i| eps[i]);
            let mut q = p.clone();
            q.reverse();
            let a = fit_gap(&p, 0.4, 0.7, &FitConfig::default()).unwrap();
            let b = fit_gap(&q, 0.4, 0.7, &FitConfig::default()).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
