//! Complex level curve `gamma`, its flux `Gamma`, the action `S` and the
//! sealed Agmon weight `phi_u` solving `calB(i phi', x2) + Sigma(x2) = b0`.

use crate::darboux::eval_darboux;
use crate::error::{Error, Result};
use crate::field_model::FieldSpec;
use crate::quad::{integrate, QuadOptions};
use crate::spline::CubicSpline;
use crate::C64;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Smooth compactly supported bump closing the lower well.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SealSpec {
    pub center: f64,
    pub radius: f64,
    pub amplitude: f64,
}

impl SealSpec {
    /// Seal centred on the lower well.
    pub fn at_lower_well(f: &FieldSpec, radius: f64, amplitude: f64) -> Self {
        Self {
            center: f.c_d(),
            radius,
            amplitude,
        }
    }

    pub fn validate(&self, f: &FieldSpec) -> Result<()> {
        let lim = (1.0 - 3.0 * f.eps) * f.b0;
        if !(self.amplitude > 0.0 && self.amplitude < lim) {
            return Err(Error::InvalidParams(format!(
                "seal amplitude {} must lie in (0, (1 - 3 eps) b0 = {lim})",
                self.amplitude
            )));
        }
        if !(self.radius > 0.0 && self.radius < f.c_u / 4.0) {
            return Err(Error::InvalidParams(format!(
                "seal radius {} must lie in (0, |c_d|/4 = {})",
                self.radius,
                f.c_u / 4.0
            )));
        }
        if (self.center - f.c_d()).abs() > 1e-14 * f.c_u {
            return Err(Error::InvalidParams(format!(
                "seal centre {} must be the lower well {}",
                self.center,
                f.c_d()
            )));
        }
        Ok(())
    }

    pub fn contains(&self, x: f64) -> bool {
        (x - self.center).abs() < self.radius
    }

    /// `(Sigma, Sigma')` with `Sigma = s0 exp(1 - 1/(1 - z^2))`, `z = (x - c)/rho`.
    pub fn eval(&self, x: f64) -> (f64, f64) {
        let z = (x - self.center) / self.radius;
        if z.abs() >= 1.0 {
            return (0.0, 0.0);
        }
        let d = 1.0 - z * z;
        let s = self.amplitude * (1.0 - 1.0 / d).exp();
        (s, -s * 2.0 * z / (d * d) / self.radius)
    }
}

/// `B(i t, q2) - b0` and its `t` derivative.
fn level(f: &FieldSpec, t: f64, q2: f64) -> (f64, f64) {
    let q = C64::new(0.0, t);
    (f.excess(q, q2).re, -f.d1b(q, q2).im)
}

/// Positive root of `t -> B(i t, q2) - target`, by bracketing and safeguarded Newton.
fn imaginary_root(f: &FieldSpec, q2: f64, target: f64) -> Result<f64> {
    let g = |t: f64| {
        let (v, d) = level(f, t, q2);
        (v - (target - f.b0), d)
    };
    let (g0, _) = g(0.0);
    if g0.abs() <= 1e-15 * f.b0 {
        return Ok(0.0);
    }
    if g0 < 0.0 {
        return Err(Error::NoLevelCurve { q2 });
    }
    let n = 400;
    let dt = f.strip_r / n as f64;
    let (mut lo, mut hi) = (0.0, f64::NAN);
    for k in 1..n {
        let t = dt * k as f64;
        if g(t).0 <= 0.0 {
            hi = t;
            break;
        }
        lo = t;
    }
    if hi.is_nan() {
        return Err(Error::NoLevelCurve { q2 });
    }
    let mut t = 0.5 * (lo + hi);
    for _ in 0..100 {
        let (v, d) = g(t);
        if v == 0.0 {
            return Ok(t);
        }
        if v > 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        let mut next = t - v / d;
        if !(next > lo && next < hi) || d == 0.0 {
            next = 0.5 * (lo + hi);
        }
        if (next - t).abs() <= 1e-16 * t.abs().max(1e-300) || hi - lo <= 4.0 * f64::EPSILON * hi {
            return Ok(next);
        }
        t = next;
    }
    let (v, _) = g(t);
    if v.abs() <= 1e-12 * f.b0 {
        Ok(t)
    } else {
        Err(Error::Newton {
            at: format!("q2 = {q2}"),
            reason: format!("level-curve residual {v:e}"),
        })
    }
}

/// `gamma(q2)`: `B(i gamma, q2) = b0`, positive between the wells and negative outside.
pub fn gamma_at(f: &FieldSpec, q2: f64) -> Result<f64> {
    let t = imaginary_root(f, q2, f.b0)?;
    Ok(if q2.abs() < f.c_u { t } else { -t })
}

/// `Gamma(x2) = gamma int_0^1 B(i t gamma, x2) dt`.
pub fn big_gamma_at(f: &FieldSpec, x2: f64) -> Result<f64> {
    let g = gamma_at(f, x2)?;
    big_gamma_from(f, g, x2)
}

fn big_gamma_from(f: &FieldSpec, g: f64, x2: f64) -> Result<f64> {
    if g == 0.0 {
        return Ok(0.0);
    }
    let r = integrate(|t: f64| f.on_imag_axis(t * g, x2), 0.0, 1.0, QuadOptions::rel(1e-13))?;
    Ok(g * r.value)
}

/// The action computed twice: as the double integral of `B(i t, q2)` over the
/// region under `gamma`, and as the integral of `Gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub nested: f64,
    pub via_gamma: f64,
}

impl Action {
    pub fn value(&self) -> f64 {
        self.via_gamma
    }

    pub fn rel_gap(&self) -> f64 {
        (self.nested - self.via_gamma).abs() / self.via_gamma.abs()
    }
}

pub fn action_s(f: &FieldSpec) -> Result<Action> {
    let (cd, cu) = (f.c_d(), f.c_u);
    let mut err = None;
    let nested = integrate(
        |q2: f64| {
            let inner = gamma_at(f, q2).and_then(|g| {
                if g == 0.0 {
                    return Ok(0.0);
                }
                Ok(integrate(|t: f64| f.on_imag_axis(t, q2), 0.0, g, QuadOptions::rel(1e-12))?.value)
            });
            inner.unwrap_or_else(|e| {
                err.get_or_insert(e);
                0.0
            })
        },
        cd,
        cu,
        QuadOptions::rel(1e-11),
    )?
    .value;
    if let Some(e) = err {
        return Err(e);
    }
    let mut err = None;
    let via_gamma = integrate(
        |s: f64| {
            big_gamma_at(f, s).unwrap_or_else(|e| {
                err.get_or_insert(e);
                0.0
            })
        },
        cd,
        cu,
        QuadOptions::rel(1e-11),
    )?
    .value;
    if let Some(e) = err {
        return Err(e);
    }
    let a = Action { nested, via_gamma };
    if a.rel_gap() > 1e-9 {
        return Err(Error::CrossCheck {
            name: "action forms",
            lhs: nested,
            rhs: via_gamma,
            rel: a.rel_gap(),
            tol: 1e-9,
        });
    }
    Ok(a)
}

/// Uniform grid on `[-X, X]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EikonalGrid {
    /// Defaults to `2 c_u + 1`.
    pub half_width: Option<f64>,
    pub intervals: usize,
}

impl Default for EikonalGrid {
    fn default() -> Self {
        Self {
            half_width: None,
            intervals: 1000,
        }
    }
}

impl EikonalGrid {
    pub fn nodes(&self, f: &FieldSpec) -> Vec<f64> {
        let x = self.half_width.unwrap_or(2.0 * f.c_u + 1.0);
        let n = self.intervals;
        (0..=n).map(|k| -x + 2.0 * x * k as f64 / n as f64).collect()
    }
}

/// Sampled weight and the scalars derived from it.
#[derive(Debug, Clone)]
pub struct EikonalProfile {
    pub grid: Vec<f64>,
    pub gamma: Vec<f64>,
    pub big_gamma: Vec<f64>,
    pub phi: Vec<f64>,
    pub dphi: Vec<f64>,
    pub s: f64,
    pub action: Action,
    /// `-b0 gamma'(c_u)`.
    pub ddphi_cu: f64,
    /// `phi''(c_u)` from differencing `phi'` directly.
    pub ddphi_cu_direct: f64,
    /// Largest `|calB(i phi', x2) + Sigma - b0| / b0` over the grid.
    pub max_residual: f64,
    pub seal: SealSpec,
    pub b0: f64,
    pub c_u: f64,
    dphi_spline: CubicSpline<f64>,
    phi_spline: CubicSpline<f64>,
}

/// Eikonal residual `calB(i y, x2) + Sigma(x2) - b0` and its `y` derivative `i d1 calB`.
fn eikonal_residual(f: &FieldSpec, seal: &SealSpec, y: f64, x2: f64) -> Result<(f64, f64)> {
    let e = eval_darboux(f, C64::new(0.0, y), x2)?;
    let (s, _) = seal.eval(x2);
    Ok((e.cal_b.re + s - f.b0, (crate::I * e.d1_cal_b).re))
}

/// Newton projection of `y` onto the eikonal at `x2`.
fn project(f: &FieldSpec, seal: &SealSpec, mut y: f64, x2: f64) -> Result<f64> {
    for _ in 0..50 {
        let (r, d) = eikonal_residual(f, seal, y, x2)?;
        if r.abs() <= 1e-14 * f.b0 {
            return Ok(y);
        }
        let step = r / d;
        y -= step;
        if step.abs() <= 1e-15 * y.abs().max(1e-10) {
            break;
        }
    }
    let (r, _) = eikonal_residual(f, seal, y, x2)?;
    if r.abs() <= 1e-10 * f.b0 {
        Ok(y)
    } else {
        Err(Error::Newton {
            at: format!("x2 = {x2}"),
            reason: format!("eikonal residual {r:e} after projection"),
        })
    }
}

/// Right-hand side of the differentiated eikonal, `phi'' = -(d2 calB + Sigma')/(i d1 calB)`.
fn phi_second(f: &FieldSpec, seal: &SealSpec, y: f64, x2: f64) -> Result<f64> {
    let e = eval_darboux(f, C64::new(0.0, y), x2)?;
    let (_, ds) = seal.eval(x2);
    Ok(-(e.d2_cal_b.re + ds) / (crate::I * e.d1_cal_b).re)
}

/// Adaptive RK4 (step doubling) for `y' = phi_second(y, x)` from `x0` to `x1`.
fn integrate_branch(f: &FieldSpec, seal: &SealSpec, y0: f64, x0: f64, x1: f64) -> Result<f64> {
    let rk4 = |y: f64, x: f64, h: f64| -> Result<f64> {
        let k1 = phi_second(f, seal, y, x)?;
        let k2 = phi_second(f, seal, y + 0.5 * h * k1, x + 0.5 * h)?;
        let k3 = phi_second(f, seal, y + 0.5 * h * k2, x + 0.5 * h)?;
        let k4 = phi_second(f, seal, y + h * k3, x + h)?;
        Ok(y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
    };
    let min_step = 1e-9 * (x1 - x0).abs().max(1e-3);
    let (mut x, mut y) = (x0, y0);
    let mut h = x1 - x0;
    while (x1 - x).abs() > 0.0 {
        if (x + h - x1) * h.signum() > 0.0 {
            h = x1 - x;
        }
        let full = rk4(y, x, h)?;
        let half = rk4(rk4(y, x, 0.5 * h)?, x + 0.5 * h, 0.5 * h)?;
        let err = (full - half).abs();
        if err <= 1e-12 * f.b0 {
            x += h;
            y = half + (half - full) / 15.0;
            h *= 2.0;
        } else {
            h *= 0.5;
            if h.abs() < min_step {
                return Err(Error::StepUnderflow { x2: x });
            }
        }
    }
    Ok(y)
}

/// Builds the sealed weight on the grid.
///
/// Outside the seal `phi' = sign(x2 - c_u) |Gamma(x2)|`. Through the seal the
/// branch is continued by the differentiated eikonal and projected back onto
/// the eikonal at each node.
pub fn solve_phi(f: &FieldSpec, seal: &SealSpec, grid: &EikonalGrid) -> Result<EikonalProfile> {
    seal.validate(f)?;
    let xs = grid.nodes(f);
    let n = xs.len();
    let mut gamma = vec![0.0; n];
    let mut big_gamma = vec![0.0; n];
    let mut dphi = vec![0.0; n];
    for (k, &x) in xs.iter().enumerate() {
        gamma[k] = gamma_at(f, x)?;
        big_gamma[k] = big_gamma_from(f, gamma[k], x)?;
        if !seal.contains(x) {
            dphi[k] = (x - f.c_u).signum() * big_gamma[k].abs();
        }
    }
    // March through the seal from its left edge.
    let inside: Vec<usize> = (0..n).filter(|&k| seal.contains(xs[k])).collect();
    if let (Some(&first), Some(&last)) = (inside.first(), inside.last()) {
        let entry = first.checked_sub(1).ok_or_else(|| {
            Error::Precondition("seal support reaches the end of the grid".to_string())
        })?;
        let (mut x, mut y) = (xs[entry], dphi[entry]);
        for k in first..=last {
            let pred = integrate_branch(f, seal, y, x, xs[k])?;
            y = project(f, seal, pred, xs[k])?;
            x = xs[k];
            dphi[k] = y;
        }
        if last + 1 < n {
            let pred = integrate_branch(f, seal, y, x, xs[last + 1])?;
            let outer = dphi[last + 1];
            if (pred - outer).abs() > 1e-6 * f.b0 {
                return Err(Error::CrossCheck {
                    name: "sealed branch rejoins outer branch",
                    lhs: pred,
                    rhs: outer,
                    rel: (pred - outer).abs() / outer.abs().max(1e-300),
                    tol: 1e-6,
                });
            }
        }
    }

    let dphi_spline = CubicSpline::new(xs.clone(), dphi.clone());
    let exact = |x: f64| -> Result<f64> { dphi_exact_with(f, seal, &dphi_spline, x) };

    // phi(x) = int_{c_u}^x phi', accumulated interval by interval outward from c_u.
    let mut phi = vec![0.0; n];
    let j = xs.iter().rposition(|&x| x <= f.c_u).unwrap_or(0).min(n - 2);
    let piece = |a: f64, b: f64| -> Result<f64> {
        let mut err = None;
        let v = integrate(
            |s: f64| {
                exact(s).unwrap_or_else(|e| {
                    err.get_or_insert(e);
                    0.0
                })
            },
            a,
            b,
            QuadOptions {
                abs_tol: 1e-15 * f.b0,
                ..QuadOptions::rel(1e-13)
            },
        )?
        .value;
        match err {
            Some(e) => Err(e),
            None => Ok(v),
        }
    };
    phi[j] = piece(f.c_u, xs[j])?;
    phi[j + 1] = piece(f.c_u, xs[j + 1])?;
    for k in (0..j).rev() {
        phi[k] = phi[k + 1] + piece(xs[k + 1], xs[k])?;
    }
    for k in j + 2..n {
        phi[k] = phi[k - 1] + piece(xs[k - 1], xs[k])?;
    }
    let phi_spline = CubicSpline::new(xs.clone(), phi.clone());

    let mut max_residual: f64 = 0.0;
    for (k, &x) in xs.iter().enumerate() {
        let (r, _) = eikonal_residual(f, seal, dphi[k], x)?;
        max_residual = max_residual.max(r.abs() / f.b0);
    }

    let action = action_s(f)?;
    let gp = gamma_slope_at_well(f)?;
    let ddphi_cu = -f.b0 * gp;
    let ddphi_cu_direct = richardson_central(|x| exact(x), f.c_u, 1e-3)?;

    Ok(EikonalProfile {
        grid: xs,
        gamma,
        big_gamma,
        phi,
        dphi,
        s: action.value(),
        action,
        ddphi_cu,
        ddphi_cu_direct,
        max_residual,
        seal: *seal,
        b0: f.b0,
        c_u: f.c_u,
        dphi_spline,
        phi_spline,
    })
}

/// `gamma'(c_u)` from one-sided second-order differences on the outer side,
/// Richardson-extrapolated over two step sizes.
pub fn gamma_slope_at_well(f: &FieldSpec) -> Result<f64> {
    let c = f.c_u;
    let one_sided = |h: f64| -> Result<f64> {
        let g0 = gamma_at(f, c)?;
        let g1 = gamma_at(f, c + h)?;
        let g2 = gamma_at(f, c + 2.0 * h)?;
        Ok((-3.0 * g0 + 4.0 * g1 - g2) / (2.0 * h))
    };
    let h = 1e-3;
    let (a, b, d) = (one_sided(h)?, one_sided(h / 2.0)?, one_sided(h / 4.0)?);
    let r1 = (4.0 * b - a) / 3.0;
    let r2 = (4.0 * d - b) / 3.0;
    Ok((8.0 * r2 - r1) / 7.0)
}

/// Two-level Richardson extrapolation of central differences.
pub fn richardson_central<F: Fn(f64) -> Result<f64>>(g: F, x: f64, h: f64) -> Result<f64> {
    let c = |s: f64| -> Result<f64> { Ok((g(x + s)? - g(x - s)?) / (2.0 * s)) };
    let (a, b, d) = (c(h)?, c(h / 2.0)?, c(h / 4.0)?);
    let r1 = (4.0 * b - a) / 3.0;
    let r2 = (4.0 * d - b) / 3.0;
    Ok((16.0 * r2 - r1) / 15.0)
}

fn dphi_exact_with(f: &FieldSpec, seal: &SealSpec, spline: &CubicSpline<f64>, x: f64) -> Result<f64> {
    if seal.contains(x) {
        project(f, seal, spline.eval(x), x)
    } else {
        Ok((x - f.c_u).signum() * big_gamma_at(f, x)?.abs())
    }
}

impl EikonalProfile {
    /// `phi'(x2)` on the exact eikonal (not the interpolant).
    pub fn dphi_at(&self, f: &FieldSpec, x: f64) -> Result<f64> {
        dphi_exact_with(f, &self.seal, &self.dphi_spline, x)
    }

    /// `phi(x2)` from the spline through the accumulated samples.
    pub fn phi_at(&self, x: f64) -> f64 {
        self.phi_spline.eval(x)
    }

    pub fn dphi_interp(&self, x: f64) -> f64 {
        self.dphi_spline.eval(x)
    }

    /// `phi''(x2)` from the differentiated eikonal; at and near `c_u`,
    /// where numerator and denominator vanish, from differences of `phi'`.
    pub fn ddphi_at(&self, f: &FieldSpec, x: f64) -> Result<f64> {
        if (x - self.c_u).abs() < 2e-2 * self.c_u {
            if x == self.c_u {
                return Ok(self.ddphi_cu);
            }
            return richardson_central(|s| self.dphi_at(f, s), x, 2e-3);
        }
        let y = self.dphi_at(f, x)?;
        phi_second(f, &self.seal, y, x)
    }

    pub fn sigma(&self, x: f64) -> (f64, f64) {
        self.seal.eval(x)
    }

    /// Writes `x2, gamma, Gamma, phi, dphi`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["x2", "gamma", "Gamma", "phi", "dphi"])?;
        for k in 0..self.grid.len() {
            w.write_record(&[
                fmt(self.grid[k]),
                fmt(self.gamma[k]),
                fmt(self.big_gamma[k]),
                fmt(self.phi[k]),
                fmt(self.dphi[k]),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn fmt(v: f64) -> String {
    format!("{v:.15e}")
}
