//! Lowest eigenpairs by shift-invert, parity labels and grid extrapolation.

use crate::assemble::{assemble, MagneticOperator};
use crate::error::{Result, SpectraError};
use crate::gauge::GaugeChoice;
use crate::grid::GridSpec;
use crate::lanczos::{dot, krylov_schur, KrylovOptions};
use faer::linalg::solvers::SolveCore;
use faer::{Conj, MatMut, Side};
use magtunnel::field_model::FieldSpec;
use magtunnel::C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Number of eigenpairs.
    pub nev: usize,
    /// Krylov basis size per restart cycle.
    pub ncv: usize,
    /// Bound on `||H v - lambda v|| / ||H||`.
    pub tol: f64,
    pub max_restarts: usize,
    /// Shift `sigma = sigma_factor * b0 * h`.
    pub sigma_factor: f64,
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            nev: 3,
            ncv: 24,
            tol: 1e-11,
            max_restarts: 300,
            sigma_factor: 0.9,
            seed: 20240607,
        }
    }
}

/// Lowest eigenvalues on one grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumResult {
    pub h: f64,
    pub gauge: GaugeChoice,
    pub grid: GridSpec,
    pub sigma: f64,
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// `||H v - lambda v|| / ||H||` with the Gershgorin bound for `||H||`.
    pub residual_norms: Vec<f64>,
    /// Sign of `<U v, v>`, or 0 when the operator is not parity symmetric.
    pub parities: Vec<i8>,
    /// `Re <U v, v>` for unit `v`.
    pub parity_overlaps: Vec<f64>,
    pub gap: f64,
    pub norm_bound: f64,
    pub restarts: usize,
    pub solves: usize,
}

impl SpectrumResult {
    /// Absolute noise scale of the gap: the larger residual of the two lowest
    /// pairs times `||H||`.
    pub fn noise_floor(&self) -> f64 {
        self.residual_norms.iter().take(2).fold(0.0f64, |m, r| m.max(*r)) * self.norm_bound
    }
}

#[derive(Debug, Clone)]
pub struct Eigenpairs {
    pub result: SpectrumResult,
    pub vectors: Vec<Vec<C64>>,
}

/// `Re <U v, v>` for `U f(q) = f(-q)`.
pub fn parity_overlap(grid: &GridSpec, v: &[C64]) -> f64 {
    let n = v.len();
    let mut s = C64::new(0.0, 0.0);
    for k in 0..n {
        s += v[grid.mirror(k)] * v[k].conj();
    }
    s.re / dot(v, v).re
}

/// Shift-invert Krylov-Schur for the `nev` eigenvalues of `op` just above `sigma`.
pub fn lowest_eigenpairs(op: &MagneticOperator, sigma: f64, opts: &SolverOptions) -> Result<Eigenpairs> {
    let n = op.dim();
    let a = op.shifted_lower(sigma)?;
    let llt = a.sp_cholesky(Side::Lower).map_err(|e| match e {
        faer::sparse::linalg::LltError::Numeric(_) => SpectraError::ShiftNotBelowSpectrum { sigma },
        other => SpectraError::Factorization(format!("{other:?}")),
    })?;
    let solve = |x: &[C64], y: &mut [C64]| {
        y.copy_from_slice(x);
        let m = MatMut::from_column_major_slice_mut(y, n, 1);
        llt.solve_in_place_with_conj(Conj::No, m);
    };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut random = move || -> Vec<C64> { (0..n).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect() };
    let start = random();
    let hn = op.norm_bound();
    let mut hx = vec![C64::new(0.0, 0.0); n];
    let accept = |_theta: f64, x: &[C64]| -> (f64, f64) {
        op.apply(x, &mut hx);
        let lam = dot(x, &hx).re;
        let r: f64 = hx.iter().zip(x).map(|(a, b)| (a - b * lam).norm_sqr()).sum::<f64>().sqrt();
        (lam, r / hn)
    };
    let kr = krylov_schur(
        n,
        solve,
        start,
        KrylovOptions { nev: opts.nev, ncv: opts.ncv, max_restarts: opts.max_restarts },
        opts.tol,
        accept,
        random,
    )?;
    let mut pairs: Vec<(f64, f64, Vec<C64>)> = kr.accepted.iter().zip(kr.vectors).map(|(&(l, r), v)| (l, r, v)).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let overlaps: Vec<f64> = pairs.iter().map(|p| parity_overlap(&op.grid, &p.2)).collect();
    let parities = overlaps
        .iter()
        .map(|&o| if !op.parity_symmetric { 0 } else if o >= 0.0 { 1 } else { -1 })
        .collect();
    let eigenvalues: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let gap = if eigenvalues.len() >= 2 { eigenvalues[1] - eigenvalues[0] } else { f64::NAN };
    let result = SpectrumResult {
        h: op.h,
        gauge: op.gauge,
        grid: op.grid,
        sigma,
        residual_norms: pairs.iter().map(|p| p.1).collect(),
        eigenvalues,
        parities,
        parity_overlaps: overlaps,
        gap,
        norm_bound: hn,
        restarts: kr.restarts,
        solves: kr.applications,
    };
    Ok(Eigenpairs { result, vectors: pairs.into_iter().map(|p| p.2).collect() })
}

/// Assembles on `grid` and solves with `sigma = sigma_factor * b0 * h`.
pub fn solve_on_grid(f: &FieldSpec, gauge: GaugeChoice, grid: &GridSpec, h: f64, opts: &SolverOptions) -> Result<SpectrumResult> {
    let op = assemble(f, gauge, grid, h)?;
    Ok(lowest_eigenpairs(&op, opts.sigma_factor * f.b0 * h, opts)?.result)
}

/// Eigenvalues on a grid and its refinement, combined as `(4 l(d/2) - l(d)) / 3`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtrapolatedSpectrum {
    pub h: f64,
    pub coarse: SpectrumResult,
    pub fine: SpectrumResult,
    pub eigenvalues: Vec<f64>,
    pub gap: f64,
    /// Parities of the fine-grid vectors.
    pub parities: Vec<i8>,
    /// `max_k |l_k(d/2) - l_k(d)|` over the two lowest levels, divided by the extrapolated gap.
    pub refinement_shift_over_gap: f64,
    /// `|gap(d/2) - gap(d)| / gap`.
    pub gap_refinement_shift: f64,
    /// Largest noise floor of the two solves.
    pub noise_floor: f64,
}

pub fn richardson(fine: f64, coarse: f64) -> f64 {
    (4.0 * fine - coarse) / 3.0
}

pub fn extrapolate(coarse: SpectrumResult, fine: SpectrumResult) -> ExtrapolatedSpectrum {
    let eigenvalues: Vec<f64> = fine.eigenvalues.iter().zip(&coarse.eigenvalues).map(|(&a, &b)| richardson(a, b)).collect();
    let gap = if eigenvalues.len() >= 2 { eigenvalues[1] - eigenvalues[0] } else { f64::NAN };
    let shift = (0..eigenvalues.len().min(2)).map(|k| (fine.eigenvalues[k] - coarse.eigenvalues[k]).abs()).fold(0.0f64, f64::max);
    ExtrapolatedSpectrum {
        h: fine.h,
        parities: fine.parities.clone(),
        refinement_shift_over_gap: shift / gap.abs(),
        gap_refinement_shift: (fine.gap - coarse.gap).abs() / gap.abs(),
        noise_floor: coarse.noise_floor().max(fine.noise_floor()),
        eigenvalues,
        gap,
        coarse,
        fine,
    }
}

/// Solves on the grid chosen for `h` and on its refinement.
pub fn solve_extrapolated(f: &FieldSpec, gauge: GaugeChoice, grid: &GridSpec, h: f64, opts: &SolverOptions) -> Result<ExtrapolatedSpectrum> {
    let coarse = solve_on_grid(f, gauge, grid, h, opts)?;
    let fine = solve_on_grid(f, gauge, &grid.refined(), h, opts)?;
    Ok(extrapolate(coarse, fine))
}

/// Grid-refinement check: extrapolated values from `(d, d/2)` against `(d/2, d/4)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementCheck {
    pub h: f64,
    pub first: Vec<f64>,
    pub second: Vec<f64>,
    pub gap: f64,
    /// `max_{k < 2} |second_k - first_k| / gap`.
    pub shift_over_gap: f64,
}

pub fn refinement_check(f: &FieldSpec, gauge: GaugeChoice, grid: &GridSpec, h: f64, opts: &SolverOptions) -> Result<RefinementCheck> {
    let a = solve_on_grid(f, gauge, grid, h, opts)?;
    let b = solve_on_grid(f, gauge, &grid.refined(), h, opts)?;
    let c = solve_on_grid(f, gauge, &grid.refined().refined(), h, opts)?;
    let first = extrapolate(a, b.clone());
    let second = extrapolate(b, c);
    let shift = (0..2).map(|k| (second.eigenvalues[k] - first.eigenvalues[k]).abs()).fold(0.0f64, f64::max);
    Ok(RefinementCheck {
        h,
        shift_over_gap: shift / second.gap,
        gap: second.gap,
        first: first.eigenvalues,
        second: second.eigenvalues,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use magtunnel::field_model::{constant_field, make_example_field, ExampleFieldParams};

    fn preset() -> FieldSpec {
        make_example_field(ExampleFieldParams { b0: 1.0, eps1: 0.1, eps2: 0.0755, c_u: 0.8, beta: 1.0, strip_r: 0.75, eps: None }).unwrap()
    }

    #[test]
    fn double_well_pair_has_opposite_parities_in_every_gauge() {
        let f = preset();
        let h = 0.2;
        let grid = GridSpec::for_field(&f, h, 1).unwrap();
        let opts = SolverOptions::default();
        let mut first: Option<Vec<f64>> = None;
        for gauge in GaugeChoice::ALL {
            let r = solve_on_grid(&f, gauge, &grid, h, &opts).unwrap();
            assert!(r.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
            assert!(r.gap > 0.0);
            assert!(r.residual_norms.iter().all(|&x| x <= opts.tol));
            assert_eq!(r.parities[0] * r.parities[1], -1, "{gauge:?}: {:?}", r.parity_overlaps);
            match &first {
                None => first = Some(r.eigenvalues.clone()),
                Some(e) => {
                    for (a, b) in e.iter().zip(&r.eigenvalues) {
                        assert!((a - b).abs() <= 1e-8 * a.abs(), "{gauge:?}: {a} vs {b}");
                    }
                }
            }
        }
    }

    #[test]
    fn constant_field_ground_level_is_b0_h() {
        let b0 = 1.3;
        let f = constant_field(b0, 0.2, 0.8);
        let h = 0.2;
        // The ground state decays like exp(-b0 r^2 / (4h)); b0 L^2 / (4h) = 14.6 here.
        let grid = GridSpec::with_spacing([3.0, 3.0], 0.04).unwrap();
        let opts = SolverOptions { nev: 1, tol: 1e-12, ..SolverOptions::default() };
        let e = solve_extrapolated(&f, GaugeChoice::Symmetric, &grid, h, &opts).unwrap();
        let rel = (e.eigenvalues[0] - b0 * h).abs() / (b0 * h);
        assert!(rel < 1e-6, "{rel}");
        // The raw grids carry the O(d^2) bias that the extrapolation removes.
        assert!((e.fine.eigenvalues[0] - b0 * h).abs() / (b0 * h) > 10.0 * rel);
    }

    #[test]
    fn large_h_approaches_the_dirichlet_box() {
        let f = preset();
        let h = 40.0;
        let l = 1.0;
        let grid = GridSpec::with_spacing([l, l], 0.02).unwrap();
        let opts = SolverOptions { nev: 2, ..SolverOptions::default() };
        let r = solve_on_grid(&f, GaugeChoice::LandauX, &grid, h, &opts).unwrap();
        let kinetic = h * h * 2.0 * (std::f64::consts::PI / (2.0 * l)).powi(2);
        let ratio = r.eigenvalues[0] / kinetic;
        assert!((ratio - 1.0).abs() < 2e-3, "{ratio}");
    }

    #[test]
    fn shift_above_the_ground_level_is_reported() {
        let f = preset();
        let h = 0.2;
        let grid = GridSpec::for_field(&f, h, 1).unwrap();
        let op = assemble(&f, GaugeChoice::LandauX, &grid, h).unwrap();
        let e = lowest_eigenpairs(&op, 1.1 * h, &SolverOptions::default()).unwrap_err();
        assert!(matches!(e, SpectraError::ShiftNotBelowSpectrum { .. }), "{e}");
    }

    #[test]
    fn iteration_cap_reports_ritz_diagnostics() {
        let f = preset();
        let h = 0.2;
        let grid = GridSpec::for_field(&f, h, 1).unwrap();
        let op = assemble(&f, GaugeChoice::LandauX, &grid, h).unwrap();
        let opts = SolverOptions { ncv: 5, max_restarts: 0, tol: 1e-15, ..SolverOptions::default() };
        match lowest_eigenpairs(&op, 0.9 * h, &opts) {
            Err(SpectraError::NoConvergence { ritz, residuals, .. }) => {
                assert_eq!(ritz.len(), 3);
                assert_eq!(residuals.len(), 3);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn parity_overlap_of_even_and_odd_vectors() {
        let g = GridSpec::new([1.0, 1.0], [5, 7]).unwrap();
        let n = g.len();
        let base: Vec<C64> = (0..n).map(|k| C64::new((k as f64).sin(), (k as f64 * 0.3).cos())).collect();
        let even: Vec<C64> = (0..n).map(|k| base[k] + base[g.mirror(k)]).collect();
        let odd: Vec<C64> = (0..n).map(|k| base[k] - base[g.mirror(k)]).collect();
        assert!((parity_overlap(&g, &even) - 1.0).abs() < 1e-14);
        assert!((parity_overlap(&g, &odd) + 1.0).abs() < 1e-14);
    }

    #[test]
    fn richardson_is_exact_for_quadratic_bias() {
        let exact = 0.3;
        let c = 2.0;
        assert!((richardson(exact + c * 0.25, exact + c) - exact).abs() < 1e-15);
    }
}
