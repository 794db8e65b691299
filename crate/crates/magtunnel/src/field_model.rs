//! Magnetic field models with a complex-continuable first argument.

use crate::error::{Error, Result};
use crate::C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt::Debug;
use std::sync::Arc;

/// Value and partial derivatives of `B` at one point.
///
/// `b222` is the third `q2` derivative; the Darboux layer needs it for the
/// second `x2` derivative of `alpha`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldJet {
    pub b: C64,
    pub b1: C64,
    pub b2: C64,
    pub b11: C64,
    pub b12: C64,
    pub b22: C64,
    pub b222: C64,
}

/// Closed-form field together with its derivatives.
pub trait FieldModel: Send + Sync + Debug {
    fn jet(&self, q1: C64, q2: f64) -> FieldJet;

    /// `B - b0`, overridden where a cancellation-free form exists.
    fn excess(&self, q1: C64, q2: f64, b0: f64) -> C64 {
        self.jet(q1, q2).b - b0
    }
}

/// A field plus the scalars that describe its wells and admissible strip.
#[derive(Debug, Clone)]
pub struct FieldSpec {
    pub b0: f64,
    pub eps: f64,
    pub strip_r: f64,
    pub c_u: f64,
    pub model: Arc<dyn FieldModel>,
}

impl FieldSpec {
    pub fn new(b0: f64, eps: f64, strip_r: f64, c_u: f64, model: Arc<dyn FieldModel>) -> Self {
        Self {
            b0,
            eps,
            strip_r,
            c_u,
            model,
        }
    }

    pub fn c_d(&self) -> f64 {
        -self.c_u
    }

    /// Half-width of the strip on which the inverse Darboux map is safe.
    pub fn strip_tilde(&self) -> f64 {
        (1.0 - self.eps) * self.b0 * self.strip_r
    }

    #[inline]
    pub fn jet(&self, q1: C64, q2: f64) -> FieldJet {
        self.model.jet(q1, q2)
    }

    #[inline]
    pub fn eval(&self, q1: C64, q2: f64) -> C64 {
        self.model.jet(q1, q2).b
    }

    pub fn d1b(&self, q1: C64, q2: f64) -> C64 {
        self.jet(q1, q2).b1
    }

    pub fn d2b(&self, q1: C64, q2: f64) -> C64 {
        self.jet(q1, q2).b2
    }

    pub fn d11b(&self, q1: C64, q2: f64) -> C64 {
        self.jet(q1, q2).b11
    }

    pub fn d22b(&self, q1: C64, q2: f64) -> C64 {
        self.jet(q1, q2).b22
    }

    pub fn d12b(&self, q1: C64, q2: f64) -> C64 {
        self.jet(q1, q2).b12
    }

    /// `B(q1, q2) - b0` without cancellation near the wells.
    pub fn excess(&self, q1: C64, q2: f64) -> C64 {
        self.model.excess(q1, q2, self.b0)
    }

    /// `B(i t, q2)`, real for admissible fields.
    pub fn on_imag_axis(&self, t: f64, q2: f64) -> f64 {
        self.eval(C64::new(0.0, t), q2).re
    }

    /// The same field with a different declared upper-well ordinate.
    pub fn with_declared_well(mut self, c_u: f64) -> Self {
        self.c_u = c_u;
        self
    }
}

/// Parameters of the two-well example family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExampleFieldParams {
    pub b0: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub c_u: f64,
    pub beta: f64,
    /// Half-width of the analyticity strip used by the checks.
    pub strip_r: f64,
    /// Variation bound; defaults to the supremum of `|B - b0| / b0` over the strip.
    #[serde(default)]
    pub eps: Option<f64>,
}

impl ExampleFieldParams {
    pub fn eps3(&self) -> f64 {
        self.eps2 / self.eps1
    }

    pub fn variation_bound(&self) -> f64 {
        self.eps.unwrap_or_else(|| self.strip_variation_sup() * (1.0 + 1e-6))
    }

    /// `sup |B - b0| / b0` over `|Im q1| <= r`.
    ///
    /// `B - b0 = b0 (eps1 - lam u)` with `lam = eps1 - eps2 W` in
    /// `[eps1 - eps2/2, eps1]`; the modulus is convex in `lam` and, for fixed
    /// `lam`, subharmonic in `q1`, so the supremum sits on the strip edge at
    /// an endpoint value of `lam`. The edge is scanned with `x = tan(theta)`.
    pub fn strip_variation_sup(&self) -> f64 {
        let n = 20_000;
        let mut sup = self.eps1;
        for lam in [self.eps1 - 0.5 * self.eps2, self.eps1] {
            for k in 0..n {
                let theta = 0.5 * std::f64::consts::PI * k as f64 / n as f64;
                let q = C64::new(theta.tan(), self.strip_r);
                let u = (C64::new(1.0, 0.0) + q * q).inv();
                sup = sup.max((self.eps1 - lam * u).norm());
            }
        }
        sup
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParams(m.to_string()));
        if !(self.b0 > 0.0 && self.b0.is_finite()) {
            return bad("b0 must be positive");
        }
        if !(self.eps1 > 0.0 && self.eps1 <= 1.0) || !(self.eps2 > 0.0 && self.eps2 <= 1.0) {
            return bad("eps1 and eps2 must lie in (0, 1]");
        }
        if self.eps2 > self.eps1 {
            return Err(Error::InvalidParams(format!(
                "eps2 = {} exceeds eps1 = {}; the monotonicity condition needs eps2 <= eps1",
                self.eps2, self.eps1
            )));
        }
        if !(self.c_u > 0.0) || !(self.beta > 0.0) {
            return bad("c_u and beta must be positive");
        }
        if !(self.strip_r > 0.0 && self.strip_r < 1.0) {
            return bad("strip_r must lie in (0, 1)");
        }
        let e = self.variation_bound();
        if !(e > 0.0 && e < 1.0) {
            return Err(Error::InvalidParams(format!("variation bound eps = {e} must lie in (0, 1)")));
        }
        Ok(())
    }
}

/// `W(q2) = (1 - exp(-beta (q2^2 - c^2)^2)) / 2` and its first three derivatives.
pub fn well_profile(beta: f64, c: f64, q: f64) -> [f64; 4] {
    let p = (q - c) * (q + c);
    let e = (-beta * p * p).exp();
    let w = -0.5 * (-beta * p * p).exp_m1();
    let w1 = 2.0 * beta * p * q * e;
    let k = 2.0 * q * q + p - 4.0 * beta * p * p * q * q;
    let w2 = 2.0 * beta * e * k;
    let dk = 6.0 * q - 4.0 * beta * (4.0 * p * q * q * q + 2.0 * p * p * q);
    let w3 = 2.0 * beta * e * (-4.0 * beta * p * q * k + dk);
    [w, w1, w2, w3]
}

/// `B = b0 (1 + eps1 (1 - u) + eps2 u W(q2))` with `u = 1 / (1 + q1^2)`.
#[derive(Debug, Clone, Copy)]
pub struct ExampleField {
    pub p: ExampleFieldParams,
}

impl FieldModel for ExampleField {
    fn jet(&self, q1: C64, q2: f64) -> FieldJet {
        let ExampleFieldParams {
            b0, eps1, eps2, c_u, beta, ..
        } = self.p;
        let [w, w1, w2, w3] = well_profile(beta, c_u, q2);
        let u = (C64::new(1.0, 0.0) + q1 * q1).inv();
        let u1 = -2.0 * q1 * u * u;
        let u11 = (6.0 * q1 * q1 - 2.0) * u * u * u;
        let lam = eps1 - eps2 * w;
        let s = b0 * eps2;
        FieldJet {
            b: b0 * (1.0 + eps1 - lam * u),
            b1: -b0 * lam * u1,
            b2: s * w1 * u,
            b11: -b0 * lam * u11,
            b12: s * w1 * u1,
            b22: s * w2 * u,
            b222: s * w3 * u,
        }
    }

    fn excess(&self, q1: C64, q2: f64, b0: f64) -> C64 {
        // 1 - u = q1^2 u keeps B - b0 accurate where both terms are small.
        let p = &self.p;
        let w = well_profile(p.beta, p.c_u, q2)[0];
        let u = (C64::new(1.0, 0.0) + q1 * q1).inv();
        p.b0 * (p.eps1 * q1 * q1 * u + p.eps2 * w * u) + (p.b0 - b0)
    }
}

pub fn make_example_field(p: ExampleFieldParams) -> Result<FieldSpec> {
    p.validate()?;
    Ok(FieldSpec::new(
        p.b0,
        p.variation_bound(),
        p.strip_r,
        p.c_u,
        Arc::new(ExampleField { p }),
    ))
}

/// Uniform field `B = b0`.
#[derive(Debug, Clone, Copy)]
pub struct ConstantField {
    pub b0: f64,
}

impl FieldModel for ConstantField {
    fn jet(&self, _q1: C64, _q2: f64) -> FieldJet {
        let z = C64::new(0.0, 0.0);
        FieldJet {
            b: C64::new(self.b0, 0.0),
            b1: z,
            b2: z,
            b11: z,
            b12: z,
            b22: z,
            b222: z,
        }
    }
}

pub fn constant_field(b0: f64, strip_r: f64, c_u: f64) -> FieldSpec {
    FieldSpec::new(b0, 0.5, strip_r, c_u, Arc::new(ConstantField { b0 }))
}

/// `B = b0 (1 + q1^2 + (q2^2 - c^2)^2 / (4 c^2))`: both curvatures equal `2 b0` at the wells.
#[derive(Debug, Clone, Copy)]
pub struct IsotropicWellField {
    pub b0: f64,
    pub c_u: f64,
}

impl FieldModel for IsotropicWellField {
    fn jet(&self, q1: C64, q2: f64) -> FieldJet {
        let (b0, c) = (self.b0, self.c_u);
        let p = q2 * q2 - c * c;
        let k = 1.0 / (4.0 * c * c);
        let z = C64::new(0.0, 0.0);
        FieldJet {
            b: b0 * (1.0 + q1 * q1 + k * p * p),
            b1: 2.0 * b0 * q1,
            b2: C64::new(b0 * k * 4.0 * p * q2, 0.0),
            b11: C64::new(2.0 * b0, 0.0),
            b12: z,
            b22: C64::new(b0 * k * (8.0 * q2 * q2 + 4.0 * p), 0.0),
            b222: C64::new(b0 * k * 24.0 * q2, 0.0),
        }
    }
}

pub fn isotropic_well_field(b0: f64, c_u: f64) -> FieldSpec {
    FieldSpec::new(b0, 0.5, 0.2, c_u, Arc::new(IsotropicWellField { b0, c_u }))
}

/// Well data at `C_u`: `H = Hess B / 2` (diagonal) and the two
/// coefficients of the single-well expansion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WellCoefficients {
    pub h11: f64,
    pub h22: f64,
    pub d0: f64,
    pub d1: f64,
}

pub fn well_coefficients(f: &FieldSpec) -> Result<WellCoefficients> {
    let j = f.jet(C64::new(0.0, 0.0), f.c_u);
    let (k1, k2) = (j.b11.re, j.b22.re);
    if !(k1 > 0.0 && k2 > 0.0) {
        return Err(Error::Degenerate(format!(
            "curvatures at C_u are d11B = {k1:e}, d22B = {k2:e}"
        )));
    }
    let (h11, h22) = (0.5 * k1, 0.5 * k2);
    let d0 = (h11 * h22).sqrt() / f.b0;
    let t = h11.sqrt() + h22.sqrt();
    let d1 = t * t / (2.0 * f.b0);
    Ok(WellCoefficients { h11, h22, d0, d1 })
}

/// Where and how a sampled field was probed.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AssumptionSampling {
    /// Real sampling range `[-q_max, q_max]` in both coordinates.
    pub q_max: f64,
    pub n_real: usize,
    pub n_imag: usize,
    /// Samples stay within `|Im q1| <= r (1 - strip_margin)`.
    pub strip_margin: f64,
    pub n_random: usize,
    pub seed: u64,
}

impl AssumptionSampling {
    pub fn for_field(f: &FieldSpec) -> Self {
        Self {
            q_max: 2.0 * f.c_u + 1.0,
            n_real: 41,
            n_imag: 7,
            strip_margin: 0.02,
            n_random: 400,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionCheck {
    pub name: String,
    pub passed: bool,
    /// Signed slack of the worst sample, normalized by `b0`; negative when violated.
    pub margin: f64,
    pub worst_q1_re: f64,
    pub worst_q1_im: f64,
    pub worst_q2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub checks: Vec<AssumptionCheck>,
    pub all_passed: bool,
}

impl AssumptionReport {
    pub fn get(&self, name: &str) -> Option<&AssumptionCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

struct Tracker {
    name: &'static str,
    margin: f64,
    at: (C64, f64),
}

impl Tracker {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            margin: f64::INFINITY,
            at: (C64::new(0.0, 0.0), 0.0),
        }
    }

    fn see(&mut self, slack: f64, q1: C64, q2: f64) {
        let s = if slack.is_nan() { f64::NEG_INFINITY } else { slack };
        if s < self.margin {
            self.margin = s;
            self.at = (q1, q2);
        }
    }

    fn finish(self) -> AssumptionCheck {
        let margin = if self.margin.is_finite() { self.margin } else { -1.0 };
        AssumptionCheck {
            name: self.name.to_string(),
            passed: margin >= 0.0,
            margin,
            worst_q1_re: self.at.0.re,
            worst_q1_im: self.at.0.im,
            worst_q2: self.at.1,
        }
    }
}

/// Evenly spaced samples; the midpoint of a symmetric range with odd `n` is exactly 0.
fn linspace(a: f64, b: f64, n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |k| if n > 1 { a + (b - a) * (k as f64 / (n - 1) as f64) } else { 0.5 * (a + b) })
}

const SYM_TOL: f64 = 1e-12;
const WELL_TOL: f64 = 1e-10;

/// Sampling-based verification of the symmetry, mild-variation,
/// monotonicity, positivity and well conditions.
pub fn check_assumptions(f: &FieldSpec, s: &AssumptionSampling) -> AssumptionReport {
    let b0 = f.b0;
    let r = f.strip_r;
    let y_max = r * (1.0 - s.strip_margin);
    let d2_bound = (1.0 - f.eps) * b0 / (2.0 * r);

    let mut sym1 = Tracker::new("symmetry_q1");
    let mut sym2 = Tracker::new("symmetry_q2");
    let mut var = Tracker::new("variation_bound");
    let mut grad = Tracker::new("d2_bound");
    let mut mono = Tracker::new("monotonicity");
    let mut pos = Tracker::new("positivity");
    let mut imag = Tracker::new("imaginary_axis_real");
    let mut minimum = Tracker::new("well_position");
    let mut nondeg = Tracker::new("well_nondegenerate");

    let mut strip_points = Vec::new();
    for x in linspace(-s.q_max, s.q_max, s.n_real) {
        for y in linspace(-y_max, y_max, s.n_imag) {
            for q2 in linspace(-s.q_max, s.q_max, s.n_real) {
                strip_points.push((C64::new(x, y), q2));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    for _ in 0..s.n_random {
        let x = rng.gen_range(-s.q_max..=s.q_max);
        let y = rng.gen_range(-y_max..=y_max);
        let q2 = rng.gen_range(-s.q_max..=s.q_max);
        strip_points.push((C64::new(x, y), q2));
    }

    for &(q1, q2) in &strip_points {
        let j = f.jet(q1, q2);
        var.see(f.eps - (j.b - b0).norm() / b0, q1, q2);
        grad.see((d2_bound - j.b2.norm()) / b0, q1, q2);
        pos.see((j.b.re - (1.0 - f.eps) * b0) / b0, q1, q2);
        if q1.re >= 0.0 {
            mono.see((j.b1 / j.b).re + SYM_TOL, q1, q2);
        }
        if q1.im == 0.0 {
            let bm = f.eval(-q1, q2);
            let bq = f.eval(q1, -q2);
            sym1.see(SYM_TOL - (bm - j.b).norm() / b0, q1, q2);
            sym2.see(SYM_TOL - (bq - j.b).norm() / b0, q1, q2);
            minimum.see((j.b.re - b0) / b0 + WELL_TOL, q1, q2);
        }
        let ti = C64::new(0.0, q1.im);
        imag.see(SYM_TOL - f.eval(ti, q2).im.abs() / b0, ti, q2);
    }

    let cu = C64::new(0.0, 0.0);
    let j = f.jet(cu, f.c_u);
    let at_well = WELL_TOL - ((j.b - b0).norm() + j.b1.norm() + j.b2.norm()) / b0;
    minimum.see(at_well, cu, f.c_u);
    let k1 = j.b11.re / b0;
    let k2 = j.b22.re / b0;
    nondeg.see(k1.min(k2) - 1e-8, cu, f.c_u);
    nondeg.see(WELL_TOL - j.b12.norm() / b0, cu, f.c_u);

    let checks: Vec<AssumptionCheck> = [sym1, sym2, var, grad, mono, pos, imag, minimum, nondeg]
        .into_iter()
        .map(Tracker::finish)
        .collect();
    let all_passed = checks.iter().all(|c| c.passed);
    AssumptionReport { checks, all_passed }
}
