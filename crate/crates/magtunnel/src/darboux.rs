//! Gauge potential `A2`, the Darboux map `iota(q) = (A2(q), q2)` and the
//! transported field data `calB = B o iota^{-1}`, `alpha = d2 A2 o iota^{-1}`.

use crate::error::{Error, Result};
use crate::field_model::FieldSpec;
use crate::quad::{integrate, QuadOptions};
use crate::C64;

const ZERO: C64 = C64::new(0.0, 0.0);

/// `A2` and the integrals of the `q2` derivatives of `B` along `[0, q1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct A2Jet {
    pub a2: C64,
    /// `d2 A2`
    pub a2_2: C64,
    /// `d2^2 A2`
    pub a2_22: C64,
    /// `d2^3 A2`
    pub a2_222: C64,
}

fn check_strip(f: &FieldSpec, q1: C64) -> Result<()> {
    if q1.im.abs() >= f.strip_r {
        return Err(Error::Precondition(format!(
            "|Im q1| = {} outside the strip of half-width {}",
            q1.im.abs(),
            f.strip_r
        )));
    }
    Ok(())
}

/// Quadrature of `(B, d2B, d2^2B, d2^3B)` along the straight segment `[0, q1]`.
pub fn a2_jet(f: &FieldSpec, q1: C64, q2: f64) -> Result<A2Jet> {
    check_strip(f, q1)?;
    if q1 == ZERO {
        return Ok(A2Jet {
            a2: ZERO,
            a2_2: ZERO,
            a2_22: ZERO,
            a2_222: ZERO,
        });
    }
    let r = integrate(
        |t: f64| {
            let j = f.jet(q1 * t, q2);
            [j.b, j.b2, j.b22, j.b222]
        },
        0.0,
        1.0,
        QuadOptions::rel(1e-13),
    )?;
    let [a, b, c, d] = r.value;
    Ok(A2Jet {
        a2: a * q1,
        a2_2: b * q1,
        a2_22: c * q1,
        a2_222: d * q1,
    })
}

/// `(A2, d2 A2)` at `(q1, q2)`.
pub fn a2(f: &FieldSpec, q1: C64, q2: f64) -> Result<(C64, C64)> {
    let j = a2_jet(f, q1, q2)?;
    Ok((j.a2, j.a2_2))
}

fn a2_value(f: &FieldSpec, q1: C64, q2: f64) -> Result<C64> {
    if q1 == ZERO {
        return Ok(ZERO);
    }
    let r = integrate(|t: f64| f.eval(q1 * t, q2), 0.0, 1.0, QuadOptions::rel(1e-14))?;
    Ok(r.value * q1)
}

/// Solves `A2(q1, x2) = x1` for `q1` by Newton's method with `d_{q1} A2 = B`.
pub fn iota_inv(f: &FieldSpec, x1: C64, x2: f64) -> Result<C64> {
    let rt = f.strip_tilde();
    if x1.im.abs() >= rt {
        return Err(Error::Precondition(format!(
            "|Im x1| = {} outside the safe strip of half-width {rt}",
            x1.im.abs()
        )));
    }
    if x1 == ZERO {
        return Ok(ZERO);
    }
    let tol = 1e-12 * x1.norm().max(1.0);
    let mut q = x1 / f.b0;
    for _ in 0..60 {
        if q.im.abs() >= f.strip_r {
            return Err(Error::Newton {
                at: format!("x1 = {x1}, x2 = {x2}"),
                reason: format!("iterate {q} left the strip"),
            });
        }
        let res = a2_value(f, q, x2)? - x1;
        if res.norm() <= 0.05 * tol {
            return Ok(q);
        }
        let step = res / f.eval(q, x2);
        q -= step;
        if step.norm() <= 1e-16 * q.norm().max(1.0) {
            let res = a2_value(f, q, x2)? - x1;
            if res.norm() <= tol {
                return Ok(q);
            }
        }
    }
    let res = a2_value(f, q, x2)? - x1;
    if res.norm() <= tol {
        return Ok(q);
    }
    Err(Error::Newton {
        at: format!("x1 = {x1}, x2 = {x2}"),
        reason: format!("residual {:e} after 60 iterations", res.norm()),
    })
}

/// Field data in Darboux coordinates, with first and second derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DarbouxEval {
    pub x1: C64,
    pub x2: f64,
    pub q1: C64,
    pub cal_b: C64,
    pub alpha: C64,
    pub d1_cal_b: C64,
    pub d2_cal_b: C64,
    pub d11_cal_b: C64,
    pub d22_cal_b: C64,
    pub d12_cal_b: C64,
    pub d1_alpha: C64,
    pub d2_alpha: C64,
    pub d11_alpha: C64,
    pub d22_alpha: C64,
    pub d12_alpha: C64,
}

impl DarbouxEval {
    pub fn grad_cal_b(&self) -> [C64; 2] {
        [self.d1_cal_b, self.d2_cal_b]
    }

    pub fn grad_alpha(&self) -> [C64; 2] {
        [self.d1_alpha, self.d2_alpha]
    }

    pub fn hess_cal_b(&self) -> [[C64; 2]; 2] {
        [[self.d11_cal_b, self.d12_cal_b], [self.d12_cal_b, self.d22_cal_b]]
    }

    pub fn hess_alpha(&self) -> [[C64; 2]; 2] {
        [[self.d11_alpha, self.d12_alpha], [self.d12_alpha, self.d22_alpha]]
    }
}

/// Evaluates `calB`, `alpha` and their derivatives at `(x1, x2)`.
///
/// With `v = iota^{-1}` one has `d1 v = 1/B` and `d2 v = -alpha/B`; the
/// derivatives below are the chain rule applied to `B(v, x2)` and
/// `d2 A2(v, x2)`.
pub fn eval_darboux(f: &FieldSpec, x1: C64, x2: f64) -> Result<DarbouxEval> {
    let q1 = iota_inv(f, x1, x2)?;
    let j = f.jet(q1, x2);
    let a = a2_jet(f, q1, x2)?;
    let b = j.b;
    let alpha = a.a2_2;
    let v1 = b.inv();
    let v2 = -alpha / b;

    let d1_cal_b = j.b1 / b;
    let d2_cal_b = j.b2 + j.b1 * v2;
    let d1_alpha = j.b2 / b;
    let d2_alpha = j.b2 * v2 + a.a2_22;

    // d2 of (v, x2) -> B_k(v, x2) at fixed x1.
    let d2_b1 = j.b11 * v2 + j.b12;
    let d2_b2 = j.b12 * v2 + j.b22;

    let d11_cal_b = (j.b11 * b - j.b1 * j.b1) / b * v1 * v1;
    let d12_cal_b = (d2_b1 * b - j.b1 * d2_cal_b) / (b * b);
    let d22_cal_b = d2_b2 - d2_alpha * j.b1 / b - alpha * d12_cal_b;

    let d11_alpha = (j.b12 * b - j.b2 * j.b1) / b * v1 * v1;
    let d12_alpha = (d2_b2 * b - j.b2 * d2_cal_b) / (b * b);
    let d22_alpha = -d2_alpha * j.b2 / b - alpha * d12_alpha + j.b22 * v2 + a.a2_222;

    Ok(DarbouxEval {
        x1,
        x2,
        q1,
        cal_b: b,
        alpha,
        d1_cal_b,
        d2_cal_b,
        d11_cal_b,
        d22_cal_b,
        d12_cal_b,
        d1_alpha,
        d2_alpha,
        d11_alpha,
        d22_alpha,
        d12_alpha,
    })
}
