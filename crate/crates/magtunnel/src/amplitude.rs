//! Prefactor pipeline: oscillator data along the Agmon weight, the
//! second-order parametrix coefficient `Q2`, the transport equation for the
//! leading WKB amplitude `a0`, the overlap `J` and the constant `c0`.

use crate::darboux::eval_darboux;
use crate::eikonal::{fmt, EikonalProfile};
use crate::error::{Error, Result};
use crate::field_model::FieldSpec;
use crate::oscillator::{
    gaussian_pair, inner, ladder_basis, pair_derivative, pair_derivative_checked, Direction, GaussianPair,
    OscillatorData,
};
use crate::quad::{integrate, QuadOptions};
use crate::spline::ComplexSpline;
use crate::{C64, I};
use rayon::prelude::*;
use std::path::Path;

pub use crate::oscillator::{apply_m, r0_apply, GaussianState};

/// Choice of the subprincipal scalar `T` added to `m2`.
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subprincipal {
    /// `T = 0`.
    #[default]
    Zero,
    /// `T = ((d1 B)^2 + (d1 alpha)^2) / 4`: the exact second-order Moyal
    /// remainder of `Op(p1)^2 + Op(p2)^2` after the half-density conjugation
    /// `B^{-1/2} L B^{1/2}` in Darboux coordinates (`p1 = B eta1`,
    /// `p2 = eta2 - y1 + alpha eta1`; both are linear in momenta, so the
    /// expansion stops there).
    HalfDensity,
    /// A fixed value.
    Constant(f64),
}

impl Subprincipal {
    pub fn value(&self, d1_cal_b: C64, d1_alpha: C64) -> C64 {
        match self {
            Subprincipal::Zero => C64::new(0.0, 0.0),
            Subprincipal::HalfDensity => (d1_cal_b * d1_cal_b + d1_alpha * d1_alpha) / 4.0,
            Subprincipal::Constant(t) => C64::new(*t, 0.0),
        }
    }
}

/// Oscillator data at `(i phi'(x2), x2)` together with its derivatives along
/// `xi2` and `x2`, and the transport coefficient `k = i d1B`.
#[derive(Debug, Clone)]
pub struct OscillatorPoint {
    pub od: OscillatorData,
    pub d_xi2: Direction,
    pub d_x2: Direction,
    /// `i d1B(i phi', x2)`, real on the weight.
    pub k: f64,
    /// `d/dx2 [i d1B(i phi'(x2), x2)]`.
    pub dk: f64,
}

/// Tolerance on `B(i phi', x2) + Sigma(x2) = b0` along the weight.
pub const ENERGY_TOL: f64 = 1e-10;

pub fn oscillator_point(f: &FieldSpec, prof: &EikonalProfile, x2: f64, t: Subprincipal) -> Result<OscillatorPoint> {
    let dphi = prof.dphi_at(f, x2)?;
    let ddphi = prof.ddphi_at(f, x2)?;
    let (sigma, dsigma) = prof.sigma(x2);
    let ev = eval_darboux(f, I * dphi, x2)?;
    let e = ev.cal_b + sigma;
    if (e - f.b0).norm() > ENERGY_TOL * f.b0 {
        return Err(Error::Precondition(format!("B + Sigma = {e} differs from b0 at x2 = {x2}")));
    }
    let od = OscillatorData {
        x2,
        cal_b: ev.cal_b,
        alpha: ev.alpha,
        grad_cal_b: ev.grad_cal_b(),
        grad_alpha: ev.grad_alpha(),
        hess_cal_b: ev.hess_cal_b(),
        hess_alpha: ev.hess_alpha(),
        sigma,
        dphi,
        ddphi,
        t_value: t.value(ev.d1_cal_b, ev.d1_alpha),
    };
    let d_xi2 = Direction { d_cal_b: ev.d1_cal_b, d_alpha: ev.d1_alpha, d_sigma: C64::new(0.0, 0.0) };
    let d_x2 = Direction {
        d_cal_b: I * ddphi * ev.d1_cal_b + ev.d2_cal_b,
        d_alpha: I * ddphi * ev.d1_alpha + ev.d2_alpha,
        d_sigma: C64::new(dsigma, 0.0),
    };
    let k = I * ev.d1_cal_b;
    let dk = I * (I * ddphi * ev.d11_cal_b + ev.d12_cal_b);
    let scale = ev.d11_cal_b.norm().max(1e-300) * (1.0 + dphi.abs());
    if k.im.abs() > 1e-10 * scale || dk.im.abs() > 1e-9 * scale * (1.0 + ddphi.abs()) {
        return Err(Error::Precondition(format!("i d1B not real on the weight at x2 = {x2}: {k}, {dk}")));
    }
    Ok(OscillatorPoint { od, d_xi2, d_x2, k: k.re, dk: dk.re })
}

/// The five contributions to `Q2` and the value from the unsimplified
/// general-`z` expression used as a cross-check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Q2Terms {
    /// `-<M2 F, G>`.
    pub m2: C64,
    /// `<M1 R0 M1 F, G>`.
    pub m1r0m1: C64,
    /// The two `(M0 - E)` brackets.
    pub brackets: C64,
    /// `-(1/i) d1B <d_x2 F, G>`.
    pub drift: C64,
    pub value: C64,
    pub general_form: C64,
}

/// Derivative-consistency tolerance for the Gaussian pair.
pub const PAIR_DERIVATIVE_TOL: f64 = 1e-7;

/// `Q2(x2, 0)` with the reduced resolvent taken at `z`.
pub fn q2pm_at(od: &OscillatorData, d_xi2: &Direction, d_x2: &Direction, z: C64) -> Result<Q2Terms> {
    let basis = ladder_basis(od, 6)?;
    let (f, g) = (&basis.psi[0], &basis.dual[0]);
    let GaussianPair { f: fxi, g: gxi } = pair_derivative_checked(od, d_xi2, PAIR_DERIVATIVE_TOL)?;
    let GaussianPair { f: fx, g: gx } = pair_derivative_checked(od, d_x2, PAIR_DERIVATIVE_TOL)?;
    let e = od.energy();
    let m0 = od.symbol(0);
    let shifted = |s: &GaussianState| m0.apply(s).sub(&s.scale(e));
    let half_i = (2.0 * I).inv();

    let m2 = -inner(&apply_m(2, od, f), g)?;
    let m1f = apply_m(1, od, f);
    let m1r0m1 = inner(&apply_m(1, od, &basis.reduced_resolvent(z, &m1f)?), g)?;
    let brackets = -half_i * inner(&shifted(&fxi), &gx)? + half_i * inner(&shifted(&fx), &gxi)?;
    let d1b = d_xi2.d_cal_b;
    let fx_g = inner(&fx, g)?;
    let drift = -d1b / I * fx_g;
    let value = m2 + m1r0m1 + brackets + drift;

    let dm_xi = od.symbol_derivative(d_xi2);
    let dm_x = od.symbol_derivative(d_x2);
    let de_xi = d_xi2.d_cal_b + d_xi2.d_sigma;
    let de_x = d_x2.d_cal_b + d_x2.d_sigma;
    let general_form = m2 + m1r0m1
        - half_i * (inner(&dm_xi.apply(&fx), g)? - de_x * inner(&fxi, g)? + (z - e) * inner(&fx, &gxi)?)
        + half_i * (inner(&dm_x.apply(&fxi), g)? - de_xi * fx_g + (z - e) * inner(&fxi, &gx)?);
    Ok(Q2Terms { m2, m1r0m1, brackets, drift, value, general_form })
}

/// `sqrt(B11 B22)/(2 b0) + (sqrt(B11) + sqrt(B22))^2/(4 b0)` at the upper well.
pub fn z2_closed_form(f: &FieldSpec) -> Result<f64> {
    let q1 = C64::new(0.0, 0.0);
    let b11 = f.d11b(q1, f.c_u).re;
    let b22 = f.d22b(q1, f.c_u).re;
    if !(b11 > 0.0 && b22 > 0.0) {
        return Err(Error::Degenerate(format!("well curvatures {b11}, {b22} must be positive")));
    }
    Ok((b11 * b22).sqrt() / (2.0 * f.b0) + (b11.sqrt() + b22.sqrt()).powi(2) / (4.0 * f.b0))
}

/// `(phi''(c_u)/2) d11B(0, c_u) - Q2(c_u, 0)`, the value making `D(c_u) = 0`.
pub fn z2_transport(f: &FieldSpec, prof: &EikonalProfile, t: Subprincipal) -> Result<C64> {
    let p = oscillator_point(f, prof, f.c_u, t)?;
    let q2 = q2pm_at(&p.od, &p.d_xi2, &p.d_x2, C64::new(f.b0, 0.0))?.value;
    Ok(prof.ddphi_cu / 2.0 * p.od.hess_cal_b[0][0] - q2)
}

/// `<F_(-x2), F_(x2)>` and its `x2` derivative.
pub fn overlap(f: &FieldSpec, prof: &EikonalProfile, x2: f64, t: Subprincipal) -> Result<(C64, C64)> {
    let p = oscillator_point(f, prof, x2, t)?;
    let m = oscillator_point(f, prof, -x2, t)?;
    let fp = gaussian_pair(&p.od)?.f;
    let fm = gaussian_pair(&m.od)?.f;
    let dfp = pair_derivative(&p.od, &p.d_x2)?.f;
    let dfm = pair_derivative(&m.od, &m.d_x2)?.f;
    let lam = inner(&fm, &fp)?;
    let dlam = -inner(&dfm, &fp)? + inner(&fm, &dfp)?;
    Ok((lam, dlam))
}

/// Both sides of `Q2(x2) - conj Q2(-x2) = i d1B(x2) d/dx2 ln <F_(-x2), F_(x2)>`.
pub fn q2_symmetry(f: &FieldSpec, prof: &EikonalProfile, x2: f64, t: Subprincipal) -> Result<(C64, C64)> {
    let z = C64::new(f.b0, 0.0);
    let p = oscillator_point(f, prof, x2, t)?;
    let m = oscillator_point(f, prof, -x2, t)?;
    let qp = q2pm_at(&p.od, &p.d_xi2, &p.d_x2, z)?.value;
    let qm = q2pm_at(&m.od, &m.d_xi2, &m.d_x2, z)?.value;
    let (lam, dlam) = overlap(f, prof, x2, t)?;
    Ok((qp - qm.conj(), p.k * dlam / lam))
}

/// `J(x2)` by the overlap formula and by the defining matrix element
/// `(1/i) <d_xi2 M0 F_(x2), F_(-x2)>`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jcal {
    pub overlap_route: C64,
    pub matrix_element_route: C64,
}

impl Jcal {
    pub fn rel_gap(&self) -> f64 {
        (self.overlap_route - self.matrix_element_route).norm() / self.overlap_route.norm()
    }
}

pub fn jcal_at(f: &FieldSpec, prof: &EikonalProfile, x2: f64, t: Subprincipal) -> Result<Jcal> {
    let seal = &prof.seal;
    if !(x2.abs() < f.c_u) || seal.contains(x2) || seal.contains(-x2) {
        return Err(Error::Precondition(format!("J needs x2 and -x2 in (c_d, c_u) outside the seal, got {x2}")));
    }
    let p = oscillator_point(f, prof, x2, t)?;
    let m = oscillator_point(f, prof, -x2, t)?;
    let fp = gaussian_pair(&p.od)?.f;
    let fm = gaussian_pair(&m.od)?.f;
    let d1b = p.d_xi2.d_cal_b;
    let overlap_route = inner(&fm, &fp)? * d1b / I;
    let dm = p.od.symbol_derivative(&p.d_xi2);
    let matrix_element_route = inner(&dm.apply(&fp), &fm)? / I;
    Ok(Jcal { overlap_route, matrix_element_route })
}

/// Cumulative `int_{c_u}^{x} D/k` at `nodes` (which must contain `c_u`).
///
/// `dk(s)` returns `(D(s), k(s))`. Both vanish linearly at `c_u`; within
/// `2 delta` of it the ratio is replaced by the cubic through its values at
/// `c_u +- delta`, `c_u +- 2 delta`.
pub fn transport_integral<G>(dk: G, c_u: f64, nodes: &[f64], delta: f64, rel_tol: f64) -> Result<Vec<C64>>
where
    G: Fn(f64) -> Result<(C64, f64)> + Sync,
{
    let ratio = local_ratio(&dk, c_u, delta)?;
    let iu = nodes
        .iter()
        .position(|&x| x == c_u)
        .ok_or_else(|| Error::Precondition("transport grid must contain c_u".into()))?;
    let pieces: Vec<Result<C64>> = (0..nodes.len() - 1)
        .into_par_iter()
        .map(|j| {
            let opts = QuadOptions { rel_tol, abs_tol: 1e-15, max_intervals: 400 };
            let mut err = None;
            let v = integrate(
                |s: f64| match ratio(s) {
                    Ok(v) => v,
                    Err(e) => {
                        err.get_or_insert(e);
                        C64::new(0.0, 0.0)
                    }
                },
                nodes[j],
                nodes[j + 1],
                opts,
            )?
            .value;
            match err {
                Some(e) => Err(e),
                None => Ok(v),
            }
        })
        .collect();
    let pieces: Vec<C64> = pieces.into_iter().collect::<Result<_>>()?;
    let mut out = vec![C64::new(0.0, 0.0); nodes.len()];
    for j in iu + 1..nodes.len() {
        out[j] = out[j - 1] + pieces[j - 1];
    }
    for j in (0..iu).rev() {
        out[j] = out[j + 1] - pieces[j];
    }
    Ok(out)
}

/// `D/k` with the removable singularity at `c_u` bridged by a cubic.
fn local_ratio<'a, G>(dk: &'a G, c_u: f64, delta: f64) -> Result<impl Fn(f64) -> Result<C64> + Sync + 'a>
where
    G: Fn(f64) -> Result<(C64, f64)> + Sync,
{
    let xs = [c_u - 2.0 * delta, c_u - delta, c_u + delta, c_u + 2.0 * delta];
    let mut ys = [C64::new(0.0, 0.0); 4];
    for (y, &x) in ys.iter_mut().zip(&xs) {
        let (d, k) = dk(x)?;
        *y = d / k;
    }
    Ok(move |s: f64| -> Result<C64> {
        if (s - c_u).abs() < 2.0 * delta {
            // Lagrange cubic through the four bracketing samples.
            let mut acc = C64::new(0.0, 0.0);
            for i in 0..4 {
                let mut w = 1.0;
                for j in 0..4 {
                    if i != j {
                        w *= (s - xs[j]) / (xs[i] - xs[j]);
                    }
                }
                acc += ys[i] * w;
            }
            Ok(acc)
        } else {
            let (d, k) = dk(s)?;
            Ok(d / k)
        }
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmplitudeOptions {
    /// Number of intervals of width `dx` covering `[-c_u, c_u]`; must be even.
    pub intervals: usize,
    /// Distance kept between the grid and the seal support.
    pub seal_margin: f64,
    /// `z2` used in `D`; defaults to the transport value.
    pub z2: Option<f64>,
    /// Subprincipal scalar added to `m2`.
    pub t: Subprincipal,
    /// Half-spacing of the interpolation stencil at `c_u`, relative to `c_u`.
    pub delta_rel: f64,
    pub quad_rel: f64,
}

impl Default for AmplitudeOptions {
    fn default() -> Self {
        Self {
            intervals: 320,
            seal_margin: 0.02,
            z2: None,
            t: Subprincipal::Zero,
            delta_rel: 1e-3,
            quad_rel: 1e-11,
        }
    }
}

/// Sampled prefactor data on `x2 = c_u - j dx`, `dx = 2 c_u / intervals`,
/// down to the seal margin.
#[derive(Debug, Clone)]
pub struct AmplitudeProfile {
    pub grid: Vec<f64>,
    pub q2pm: Vec<C64>,
    pub d: Vec<C64>,
    pub k: Vec<f64>,
    pub a0: Vec<C64>,
    /// `J(x2)` where `-x2` is also on the grid.
    pub jcal: Vec<Option<C64>>,
    /// `a0(x2) conj(a0(-x2)) J(x2)` where defined.
    pub const_check: Vec<Option<C64>>,
    pub z2: f64,
    pub z2_closed: f64,
    pub z2_transport: C64,
    pub c0: f64,
    pub c0_secondary: f64,
    pub const_check_spread: f64,
    /// Largest `|J_overlap - J_matrix| / |J|` over the grid.
    pub jcal_route_gap: f64,
    /// Largest `|k a0' + D a0| / |a0|` at interior nodes, with the derivative
    /// taken from a clamped spline of `ln a0`.
    pub transport_residual: f64,
    pub phi_dd_cu: f64,
}

/// Relative agreement required between the two `c0` evaluations.
pub const C0_ROUTE_TOL: f64 = 1e-5;

/// `D(c_u)` tolerance when `z2` is supplied externally.
pub const D_AT_WELL_TOL: f64 = 1e-8;

pub fn amplitude_profile(f: &FieldSpec, prof: &EikonalProfile, opts: &AmplitudeOptions) -> Result<AmplitudeProfile> {
    if opts.intervals < 8 || opts.intervals % 2 == 1 {
        return Err(Error::InvalidParams("amplitude grid needs an even number (>= 8) of intervals".into()));
    }
    let c_u = f.c_u;
    let z = C64::new(f.b0, 0.0);
    let t = opts.t;
    let z2_closed = z2_closed_form(f)?;
    let z2_tr = z2_transport(f, prof, t)?;
    let z2 = opts.z2.unwrap_or(z2_tr.re);

    let eval_dk = |x: f64| -> Result<(C64, f64, C64)> {
        let p = oscillator_point(f, prof, x, t)?;
        let q2 = q2pm_at(&p.od, &p.d_xi2, &p.d_x2, z)?.value;
        Ok((0.5 * p.dk + q2 + z2, p.k, q2))
    };
    let d_cu = eval_dk(c_u)?.0;
    if d_cu.norm() > D_AT_WELL_TOL * (1.0 + z2.abs()) {
        return Err(Error::Precondition(format!("D(c_u) = {d_cu} does not vanish; z2 = {z2} is inconsistent")));
    }

    let dx = 2.0 * c_u / opts.intervals as f64;
    let lo = prof.seal.center + prof.seal.radius + opts.seal_margin * c_u;
    let n = ((c_u - lo) / dx).floor() as usize;
    let grid: Vec<f64> = (0..=n).rev().map(|j| c_u - j as f64 * dx).collect();
    let iu = grid.len() - 1;
    // Exact c_u at the last node.
    let mut grid = grid;
    grid[iu] = c_u;

    let samples: Vec<Result<(C64, f64, C64)>> = grid.par_iter().map(|&x| eval_dk(x)).collect();
    let samples: Vec<(C64, f64, C64)> = samples.into_iter().collect::<Result<_>>()?;
    let d: Vec<C64> = samples.iter().map(|s| s.0).collect();
    let k: Vec<f64> = samples.iter().map(|s| s.1).collect();
    let q2pm: Vec<C64> = samples.iter().map(|s| s.2).collect();

    let delta = opts.delta_rel * c_u;
    let dk_only = |x: f64| -> Result<(C64, f64)> {
        let (d, k, _) = eval_dk(x)?;
        Ok((d, k))
    };
    let integral = transport_integral(dk_only, c_u, &grid, delta, opts.quad_rel)?;
    let a0: Vec<C64> = integral.iter().map(|v| (-v).exp()).collect();

    // Mirror node of grid[j] = c_u - (iu - j) dx is c_u - (intervals - (iu - j)) dx.
    let mirror = |j: usize| -> Option<usize> {
        let m = opts.intervals.checked_sub(iu - j)?;
        iu.checked_sub(m)
    };
    let jc: Vec<Option<Result<Jcal>>> = (0..grid.len())
        .into_par_iter()
        .map(|j| {
            let x = grid[j];
            mirror(j).filter(|_| x.abs() < c_u).map(|_| jcal_at(f, prof, x, t))
        })
        .collect();
    let mut jcal = vec![None; grid.len()];
    let mut const_check = vec![None; grid.len()];
    let mut jcal_route_gap = 0.0f64;
    for j in 0..grid.len() {
        if let Some(r) = &jc[j] {
            let v = r.clone()?;
            jcal_route_gap = jcal_route_gap.max(v.rel_gap());
            jcal[j] = Some(v.overlap_route);
            let m = mirror(j).expect("mirror exists where J is defined");
            const_check[j] = Some(a0[j] * a0[m].conj() * v.overlap_route);
        }
    }
    let defined: Vec<C64> = const_check.iter().flatten().copied().collect();
    let mean = defined.iter().sum::<C64>() / defined.len() as f64;
    let const_check_spread = defined.iter().map(|v| (v - mean).norm()).fold(0.0, f64::max) / mean.norm();

    let phi_dd_cu = prof.ddphi_cu;
    let i0 = iu - opts.intervals / 2;
    debug_assert!(grid[i0].abs() < 1e-12);
    let j0 = jcal_at(f, prof, 0.0, t)?.overlap_route;
    let c0 = 2.0 * phi_dd_cu.sqrt() * a0[i0].norm_sqr() * j0.norm();

    let c0_secondary = prefactor_secondary(f, prof, &dk_only, delta, opts.quad_rel, t)?;
    let rel = (c0 - c0_secondary).abs() / c0;
    if rel > C0_ROUTE_TOL {
        return Err(Error::CrossCheck { name: "c0_routes", lhs: c0, rhs: c0_secondary, rel, tol: C0_ROUTE_TOL });
    }

    // a0 varies exponentially; differentiate ln a0 = -integral instead,
    // clamping the end slopes to -D/k.
    let log_a0: Vec<C64> = integral.iter().map(|v| -v).collect();
    let slope = |j: usize| -> Result<C64> {
        let (dd, kk) = if j == iu { local_ratio(&dk_only, c_u, delta)?(c_u).map(|r| (r, 1.0))? } else { (d[j], k[j]) };
        Ok(-dd / kk)
    };
    let spline = ComplexSpline::clamped(grid.clone(), &log_a0, slope(0)?, slope(iu)?);
    let transport_residual = (1..grid.len() - 1)
        .map(|j| (k[j] * spline.derivative(grid[j]) + d[j]).norm())
        .fold(0.0, f64::max);

    Ok(AmplitudeProfile {
        grid,
        q2pm,
        d,
        k,
        a0,
        jcal,
        const_check,
        z2,
        z2_closed,
        z2_transport: z2_tr,
        c0,
        c0_secondary,
        const_check_spread,
        jcal_route_gap,
        transport_residual,
        phi_dd_cu,
    })
}

/// `c0` from direct quadrature of the constant's exponent, split at
/// `x_s = c_d / 2` so that neither piece meets a pole:
/// `ln K = int_{c_d}^{x_s} conj D(-s)/k(-s) ds + int_{x_s}^{c_u} D/k ds + ln J(x_s)`.
fn prefactor_secondary<G>(
    f: &FieldSpec,
    prof: &EikonalProfile,
    dk: &G,
    delta: f64,
    rel_tol: f64,
    t: Subprincipal,
) -> Result<f64>
where
    G: Fn(f64) -> Result<(C64, f64)> + Sync,
{
    let c_u = f.c_u;
    let c_d = f.c_d();
    let x_s = c_d / 2.0;
    let ratio = local_ratio(dk, c_u, delta)?;
    let opts = QuadOptions { rel_tol, abs_tol: 1e-15, max_intervals: 4000 };
    let mut err = None;
    let mut guarded = |s: f64, mirror: bool| -> C64 {
        let r = if mirror { ratio(-s).map(|v| v.conj()) } else { ratio(s) };
        r.unwrap_or_else(|e| {
            err.get_or_insert(e);
            C64::new(0.0, 0.0)
        })
    };
    let left = integrate(|s: f64| guarded(s, true), c_d, x_s, opts)?.value;
    let right = integrate(|s: f64| guarded(s, false), x_s, c_u, opts)?.value;
    if let Some(e) = err {
        return Err(e);
    }
    let j = jcal_at(f, prof, x_s, t)?.overlap_route;
    Ok(2.0 * prof.ddphi_cu.sqrt() * ((left + right).exp() * j).norm())
}

impl AmplitudeProfile {
    /// Writes `x2` and real/imaginary parts of `Q2pm, D, a0, Jcal, const_check`;
    /// undefined entries are left empty.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "x2", "Q2pm_re", "Q2pm_im", "D_re", "D_im", "a0_re", "a0_im", "Jcal_re", "Jcal_im", "const_check_re",
            "const_check_im",
        ])?;
        let opt = |v: Option<C64>| match v {
            Some(z) => [fmt(z.re), fmt(z.im)],
            None => [String::new(), String::new()],
        };
        for j in 0..self.grid.len() {
            let [jr, ji] = opt(self.jcal[j]);
            let [cr, ci] = opt(self.const_check[j]);
            w.write_record(&[
                fmt(self.grid[j]),
                fmt(self.q2pm[j].re),
                fmt(self.q2pm[j].im),
                fmt(self.d[j].re),
                fmt(self.d[j].im),
                fmt(self.a0[j].re),
                fmt(self.a0[j].im),
                jr,
                ji,
                cr,
                ci,
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eikonal::{solve_phi, EikonalGrid, SealSpec};
    use crate::field_model::{constant_field, make_example_field, ExampleFieldParams};
    use std::sync::OnceLock;

    fn preset() -> ExampleFieldParams {
        ExampleFieldParams { b0: 1.0, eps1: 0.1, eps2: 0.0755, c_u: 0.8, beta: 1.0, strip_r: 0.75, eps: None }
    }

    fn setup() -> &'static (FieldSpec, EikonalProfile) {
        static CELL: OnceLock<(FieldSpec, EikonalProfile)> = OnceLock::new();
        CELL.get_or_init(|| {
            let f = make_example_field(preset()).unwrap();
            let seal = SealSpec::at_lower_well(&f, 0.15, 0.01);
            let prof = solve_phi(&f, &seal, &EikonalGrid::default()).unwrap();
            (f, prof)
        })
    }

    fn profile() -> &'static AmplitudeProfile {
        static CELL: OnceLock<AmplitudeProfile> = OnceLock::new();
        CELL.get_or_init(|| {
            let (f, prof) = setup();
            amplitude_profile(f, prof, &AmplitudeOptions::default()).unwrap()
        })
    }

    fn zero() -> Subprincipal {
        Subprincipal::Zero
    }

    fn c0() -> C64 {
        C64::new(0.0, 0.0)
    }

    #[test]
    fn constant_field_reduces_q2_to_minus_t() {
        let f = constant_field(1.3, 0.3, 0.5);
        let ev = eval_darboux(&f, c0(), 0.2).unwrap();
        let mut od = OscillatorData::flat(ev.cal_b, ev.alpha, 0.0);
        od.grad_cal_b = ev.grad_cal_b();
        od.grad_alpha = ev.grad_alpha();
        od.t_value = C64::new(0.37, -0.1);
        let dir = Direction { d_cal_b: c0(), d_alpha: c0(), d_sigma: c0() };
        let q = q2pm_at(&od, &dir, &dir, C64::new(1.3, 0.0)).unwrap();
        assert!((q.value + od.t_value).norm() < 1e-14, "{}", q.value);
    }

    #[test]
    fn isotropic_closed_form_z2() {
        let f = crate::field_model::isotropic_well_field(1.0, 0.7);
        let z2 = z2_closed_form(&f).unwrap();
        let b11 = f.d11b(c0(), 0.7).re;
        let b22 = f.d22b(c0(), 0.7).re;
        assert!((b11 - b22).abs() < 1e-14);
        // Equal curvatures k give 3k/(2 b0).
        assert!((z2 - 3.0 * b11 / 2.0).abs() < 1e-14);
    }

    #[test]
    fn weight_point_data_is_consistent() {
        let (f, prof) = setup();
        for &x in &[-0.5, -0.1, 0.0, 0.3, 0.79, 0.8] {
            let p = oscillator_point(f, prof, x, zero()).unwrap();
            assert!((p.od.energy() - f.b0).norm() < 1e-10);
            // calB real and alpha imaginary on the imaginary axis.
            assert!(p.od.cal_b.im.abs() < 1e-12 && p.od.alpha.re.abs() < 1e-12);
            // d/dx2 (calB + Sigma) vanishes along the weight.
            assert!((p.d_x2.d_cal_b + p.d_x2.d_sigma).norm() < 1e-8);
        }
        let p = oscillator_point(f, prof, f.c_u, zero()).unwrap();
        assert!(p.k.abs() < 1e-14);
    }

    #[test]
    fn directional_derivatives_match_x2_differences() {
        let (f, prof) = setup();
        for &x in &[-0.4, 0.1, 0.6] {
            let p = oscillator_point(f, prof, x, zero()).unwrap();
            let h = 1e-4;
            let fd = |g: &dyn Fn(&OscillatorPoint) -> C64| {
                let v = |s: f64| g(&oscillator_point(f, prof, x + s, zero()).unwrap());
                let c1 = (v(h) - v(-h)) / (2.0 * h);
                let c2 = (v(h / 2.0) - v(-h / 2.0)) / h;
                (4.0 * c2 - c1) / 3.0
            };
            assert!((fd(&|q| q.od.cal_b) - p.d_x2.d_cal_b).norm() < 1e-8);
            assert!((fd(&|q| q.od.alpha) - p.d_x2.d_alpha).norm() < 1e-8);
            assert!((fd(&|q| C64::new(q.k, 0.0)) - p.dk).norm() < 1e-8);
            // Gaussian pair along x2 (full chain, not only parameter space).
            let d = pair_derivative(&p.od, &p.d_x2).unwrap();
            for &x1 in &[-1.0, 0.3, 1.4] {
                let num = fd(&|q| gaussian_pair(&q.od).unwrap().f.eval(x1));
                assert!((num - d.f.eval(x1)).norm() < 1e-7);
                let num = fd(&|q| gaussian_pair(&q.od).unwrap().g.eval(x1));
                assert!((num - d.g.eval(x1)).norm() < 1e-7);
            }
        }
    }

    #[test]
    fn q2_simplified_and_general_forms_agree() {
        let (f, prof) = setup();
        for &x in &[-0.6, -0.2, 0.0, 0.25, 0.7, 0.8] {
            let p = oscillator_point(f, prof, x, zero()).unwrap();
            let q = q2pm_at(&p.od, &p.d_xi2, &p.d_x2, C64::new(f.b0, 0.0)).unwrap();
            assert!((q.value - q.general_form).norm() < 1e-9 * (1.0 + q.value.norm()), "{x}: {q:?}");
        }
    }

    #[test]
    fn q2_symmetry_relation() {
        let (f, prof) = setup();
        let xmax = f.c_u - prof.seal.radius - 0.02;
        for j in 0..20 {
            let x = -xmax + 2.0 * xmax * (j as f64 + 0.5) / 20.0;
            let (lhs, rhs) = q2_symmetry(f, prof, x, zero()).unwrap();
            assert!((lhs - rhs).norm() <= 1e-7 * (1.0 + rhs.norm()), "{x}: {lhs} {rhs}");
        }
    }

    #[test]
    fn jcal_routes_and_symmetric_point() {
        let (f, prof) = setup();
        let j0 = jcal_at(f, prof, 0.0, zero()).unwrap();
        let p = oscillator_point(f, prof, 0.0, zero()).unwrap();
        assert!((j0.overlap_route - p.d_xi2.d_cal_b / I).norm() < 1e-14);
        let xmax = f.c_u - prof.seal.radius - 0.02;
        for j in 0..20 {
            let x = -xmax + 2.0 * xmax * (j as f64 + 0.5) / 20.0;
            let v = jcal_at(f, prof, x, zero()).unwrap();
            assert!(v.rel_gap() <= 1e-8, "{x}: {v:?}");
        }
        assert!(jcal_at(f, prof, f.c_d() + 0.01, zero()).is_err());
    }

    #[test]
    fn toy_transport_has_exponential_solution() {
        let (c_u, d, k) = (0.7, C64::new(0.3, -0.2), -1.5);
        let nodes: Vec<f64> = (0..=40).map(|j| -0.5 + 1.2 * j as f64 / 40.0).collect();
        let iu = nodes.iter().position(|&x| (x - c_u).abs() < 1e-12).unwrap();
        let mut nodes = nodes;
        nodes[iu] = c_u;
        let integral =
            transport_integral(|s| Ok((d * (s - c_u), k * (s - c_u))), c_u, &nodes, 1e-3, 1e-12).unwrap();
        for (x, v) in nodes.iter().zip(&integral) {
            let a0 = (-v).exp();
            let exact = (-(d / k) * (x - c_u)).exp();
            assert!((a0 - exact).norm() < 1e-12);
        }
    }

    #[test]
    fn profile_invariants() {
        let (f, _) = setup();
        let a = profile();
        let iu = a.grid.len() - 1;
        assert_eq!(a.grid[iu], f.c_u);
        assert!((a.a0[iu] - 1.0).norm() < 1e-15);
        assert!(a.d[iu].norm() < 1e-10);
        assert!(a.transport_residual <= 1e-7, "{}", a.transport_residual);
        assert!(a.const_check_spread <= 1e-6, "{}", a.const_check_spread);
        assert!(a.jcal_route_gap <= 1e-8);
        assert!(a.c0 > 0.0);
        assert!((a.c0 - a.c0_secondary).abs() <= 1e-5 * a.c0);
        assert!(a.const_check.iter().flatten().count() > 100);
        assert!(a.k.iter().zip(&a.grid).all(|(k, x)| *x == f.c_u || k.abs() > 0.0));
    }

    #[test]
    fn external_z2_must_cancel_d_at_the_well() {
        let (f, prof) = setup();
        let opts = AmplitudeOptions { z2: Some(profile().z2 + 0.1), intervals: 16, ..Default::default() };
        assert!(matches!(amplitude_profile(f, prof, &opts), Err(Error::Precondition(_))));
    }

    #[test]
    fn csv_has_header_and_rows() {
        let a = profile();
        let dir = std::env::temp_dir().join(format!("magtunnel-amp-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("amp.csv");
        a.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("x2,Q2pm_re"));
        assert_eq!(text.lines().count(), a.grid.len() + 1);
        std::fs::remove_dir_all(dir).ok();
    }

    #[test]
    fn half_density_t_vanishes_at_well_and_keeps_routes_consistent() {
        let (f, prof) = setup();
        let p = oscillator_point(f, prof, f.c_u, Subprincipal::HalfDensity).unwrap();
        assert!(p.od.t_value.norm() < 1e-12);
        let opts = AmplitudeOptions { t: Subprincipal::HalfDensity, ..Default::default() };
        let a = amplitude_profile(f, prof, &opts).unwrap();
        let base = profile();
        assert!((a.z2 - base.z2).abs() < 1e-12);
        assert!((a.c0 - a.c0_secondary).abs() < 1e-5 * a.c0);
        // Off the well the correction is a real, non-positive number.
        let q = oscillator_point(f, prof, 0.3, Subprincipal::HalfDensity).unwrap();
        assert!(q.od.t_value.im.abs() < 1e-12 && q.od.t_value.re <= 0.0);
    }
}
