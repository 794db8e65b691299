//! Exact algebra for the complex harmonic oscillator
//! `M0 = B^2 D^2 + (x + alpha D)^2 + Sigma` acting on polynomial-times-Gaussian
//! functions of one variable, with `D = -i d/dx`.
//!
//! Every operator used downstream (the Weyl quantizations of the normal-form
//! symbols `m0`, `m1`, `m2`, multiplication by `x`, differentiation) maps the
//! class `P(x) exp(-a x^2 / 2)` to itself, so all work is done on polynomial
//! coefficients and inner products are closed-form Gaussian moments.

use crate::{Error, Result, C64, I};
use std::f64::consts::PI;

/// `P(x) exp(-a x^2 / 2)`; `coeffs[k]` multiplies `x^k`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianState {
    pub a: C64,
    pub coeffs: Vec<C64>,
}

impl GaussianState {
    pub fn new(a: C64, coeffs: Vec<C64>) -> Self {
        Self { a, coeffs }
    }

    pub fn zero(a: C64) -> Self {
        Self { a, coeffs: vec![C64::new(0.0, 0.0)] }
    }

    pub fn gaussian(a: C64, c: C64) -> Self {
        Self { a, coeffs: vec![c] }
    }

    pub fn degree(&self) -> usize {
        self.coeffs.iter().rposition(|c| *c != C64::new(0.0, 0.0)).unwrap_or(0)
    }

    /// Euclidean norm of the coefficient vector.
    pub fn coeff_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn eval(&self, x: f64) -> C64 {
        let p = self.coeffs.iter().rev().fold(C64::new(0.0, 0.0), |acc, c| acc * x + c);
        p * (-self.a * x * x / 2.0).exp()
    }

    pub fn scale(&self, s: C64) -> Self {
        Self { a: self.a, coeffs: self.coeffs.iter().map(|c| c * s).collect() }
    }

    fn check_same(&self, other: &Self) {
        debug_assert!(
            (self.a - other.a).norm() <= 1e-14 * self.a.norm().max(1.0),
            "states with different exponents cannot be added"
        );
    }

    pub fn add(&self, other: &Self) -> Self {
        self.check_same(other);
        let n = self.coeffs.len().max(other.coeffs.len());
        let z = C64::new(0.0, 0.0);
        let coeffs = (0..n)
            .map(|k| self.coeffs.get(k).copied().unwrap_or(z) + other.coeffs.get(k).copied().unwrap_or(z))
            .collect();
        Self { a: self.a, coeffs }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(C64::new(-1.0, 0.0)))
    }

    pub fn mul_x(&self) -> Self {
        let mut coeffs = Vec::with_capacity(self.coeffs.len() + 1);
        coeffs.push(C64::new(0.0, 0.0));
        coeffs.extend_from_slice(&self.coeffs);
        Self { a: self.a, coeffs }
    }

    /// `d/dx`: `(P' - a x P) exp(-a x^2/2)`.
    pub fn d_dx(&self) -> Self {
        let n = self.coeffs.len();
        let mut coeffs = vec![C64::new(0.0, 0.0); n + 1];
        for k in 1..n {
            coeffs[k - 1] += self.coeffs[k] * k as f64;
        }
        for k in 0..n {
            coeffs[k + 1] -= self.a * self.coeffs[k];
        }
        Self { a: self.a, coeffs }
    }

    /// `D = -i d/dx`.
    pub fn op_d(&self) -> Self {
        self.d_dx().scale(-I)
    }
}

/// `int_R x^n exp(-s x^2 / 2) dx` for `Re s > 0`.
fn gaussian_moment(n: usize, s: C64) -> C64 {
    if n % 2 == 1 {
        return C64::new(0.0, 0.0);
    }
    let mut m = (2.0 * PI / s).sqrt();
    for j in (1..n).step_by(2) {
        m = m * j as f64 / s;
    }
    m
}

/// `<u, v> = int u conj(v) dx`, evaluated from closed-form moments.
pub fn inner(u: &GaussianState, v: &GaussianState) -> Result<C64> {
    let s = u.a + v.a.conj();
    if s.re <= 0.0 {
        return Err(Error::Precondition(format!("non-integrable product exponent {s}")));
    }
    let deg = u.coeffs.len() + v.coeffs.len();
    let moments: Vec<C64> = (0..deg).map(|n| gaussian_moment(n, s)).collect();
    let mut acc = C64::new(0.0, 0.0);
    for (j, uj) in u.coeffs.iter().enumerate() {
        for (k, vk) in v.coeffs.iter().enumerate() {
            if (j + k) % 2 == 0 {
                acc += uj * vk.conj() * moments[j + k];
            }
        }
    }
    Ok(acc)
}

/// Polynomial symbol in `(x, xi)`; `c[i][j]` multiplies `x^i xi^j`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeylSymbol {
    c: Vec<Vec<C64>>,
}

impl WeylSymbol {
    const N: usize = 5;

    pub fn zero() -> Self {
        Self { c: vec![vec![C64::new(0.0, 0.0); Self::N]; Self::N] }
    }

    pub fn monomial(i: usize, j: usize, coef: C64) -> Self {
        let mut s = Self::zero();
        s.c[i][j] = coef;
        s
    }

    pub fn constant(v: C64) -> Self {
        Self::monomial(0, 0, v)
    }

    /// `g0 x + g1 xi`.
    pub fn linear(g: [C64; 2]) -> Self {
        Self::monomial(1, 0, g[0]).add(&Self::monomial(0, 1, g[1]))
    }

    /// `h00 x^2 + 2 h01 x xi + h11 xi^2`.
    pub fn quadratic(h: [[C64; 2]; 2]) -> Self {
        Self::monomial(2, 0, h[0][0])
            .add(&Self::monomial(1, 1, h[0][1] + h[1][0]))
            .add(&Self::monomial(0, 2, h[1][1]))
    }

    pub fn coeff(&self, i: usize, j: usize) -> C64 {
        self.c[i][j]
    }

    pub fn add(&self, o: &Self) -> Self {
        let mut s = self.clone();
        for i in 0..Self::N {
            for j in 0..Self::N {
                s.c[i][j] += o.c[i][j];
            }
        }
        s
    }

    pub fn scale(&self, k: C64) -> Self {
        let mut s = self.clone();
        s.c.iter_mut().flatten().for_each(|v| *v *= k);
        s
    }

    /// Pointwise product; panics if the total degree exceeds four.
    pub fn mul(&self, o: &Self) -> Self {
        let mut s = Self::zero();
        for (i1, row) in self.c.iter().enumerate() {
            for (j1, &v1) in row.iter().enumerate() {
                if v1 == C64::new(0.0, 0.0) {
                    continue;
                }
                for (i2, row2) in o.c.iter().enumerate() {
                    for (j2, &v2) in row2.iter().enumerate() {
                        if v2 == C64::new(0.0, 0.0) {
                            continue;
                        }
                        assert!(i1 + i2 < Self::N && j1 + j2 < Self::N, "symbol degree too high");
                        s.c[i1 + i2][j1 + j2] += v1 * v2;
                    }
                }
            }
        }
        s
    }

    /// Weyl quantization with unit Planck constant:
    /// `Op(x^a xi^b) = 2^-a sum_k C(a,k) x^k D^b x^(a-k)`.
    pub fn apply(&self, s: &GaussianState) -> GaussianState {
        let mut out = GaussianState::zero(s.a);
        for (a, row) in self.c.iter().enumerate() {
            for (b, &coef) in row.iter().enumerate() {
                if coef == C64::new(0.0, 0.0) {
                    continue;
                }
                let mut term = GaussianState::zero(s.a);
                for k in 0..=a {
                    let mut t = s.clone();
                    for _ in 0..a - k {
                        t = t.mul_x();
                    }
                    for _ in 0..b {
                        t = t.op_d();
                    }
                    for _ in 0..k {
                        t = t.mul_x();
                    }
                    term = term.add(&t.scale(C64::new(binomial(a, k), 0.0)));
                }
                out = out.add(&term.scale(coef / 2f64.powi(a as i32)));
            }
        }
        out
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}

/// Coefficients of the oscillator symbols at one point `(xi2 + i phi'(x2), x2)`.
/// Gradients and Hessians are with respect to the two Darboux variables.
#[derive(Debug, Clone, PartialEq)]
pub struct OscillatorData {
    pub x2: f64,
    pub cal_b: C64,
    pub alpha: C64,
    pub grad_cal_b: [C64; 2],
    pub grad_alpha: [C64; 2],
    pub hess_cal_b: [[C64; 2]; 2],
    pub hess_alpha: [[C64; 2]; 2],
    pub sigma: f64,
    pub dphi: f64,
    pub ddphi: f64,
    /// Additive subprincipal term of `m2`; zero unless supplied.
    pub t_value: C64,
}

impl OscillatorData {
    /// Data with only `M0` populated (vanishing gradients and Hessians).
    pub fn flat(cal_b: C64, alpha: C64, sigma: f64) -> Self {
        let z = C64::new(0.0, 0.0);
        Self {
            x2: 0.0,
            cal_b,
            alpha,
            grad_cal_b: [z; 2],
            grad_alpha: [z; 2],
            hess_cal_b: [[z; 2]; 2],
            hess_alpha: [[z; 2]; 2],
            sigma,
            dphi: 0.0,
            ddphi: 0.0,
            t_value: z,
        }
    }

    /// Ground eigenvalue `B + Sigma`.
    pub fn energy(&self) -> C64 {
        self.cal_b + self.sigma
    }

    /// Eigenvalue `(2n - 1) B + Sigma`, `n >= 1`.
    pub fn eigenvalue(&self, n: usize) -> C64 {
        self.cal_b * (2 * n - 1) as f64 + self.sigma
    }

    /// Same data with all coefficients conjugated (symbol of the adjoint).
    pub fn adjoint(&self) -> Self {
        let c = |v: [C64; 2]| [v[0].conj(), v[1].conj()];
        Self {
            cal_b: self.cal_b.conj(),
            alpha: self.alpha.conj(),
            grad_cal_b: c(self.grad_cal_b),
            grad_alpha: c(self.grad_alpha),
            hess_cal_b: [c(self.hess_cal_b[0]), c(self.hess_cal_b[1])],
            hess_alpha: [c(self.hess_alpha[0]), c(self.hess_alpha[1])],
            t_value: self.t_value.conj(),
            ..self.clone()
        }
    }

    fn x_plus_alpha_xi(&self) -> WeylSymbol {
        WeylSymbol::linear([C64::new(1.0, 0.0), self.alpha])
    }

    /// Symbol of `M_j` for `j` in `{0, 1, 2}`.
    pub fn symbol(&self, j: usize) -> WeylSymbol {
        let xi = WeylSymbol::monomial(0, 1, C64::new(1.0, 0.0));
        let xi2 = xi.mul(&xi);
        let xa = self.x_plus_alpha_xi();
        match j {
            0 => xi2
                .scale(self.cal_b * self.cal_b)
                .add(&xa.mul(&xa))
                .add(&WeylSymbol::constant(C64::new(self.sigma, 0.0))),
            1 => {
                let lb = WeylSymbol::linear(self.grad_cal_b);
                let la = WeylSymbol::linear(self.grad_alpha);
                xi2.mul(&lb)
                    .scale(2.0 * self.cal_b)
                    .add(&xi.mul(&xa).mul(&la).scale(C64::new(2.0, 0.0)))
            }
            2 => {
                let lb = WeylSymbol::linear(self.grad_cal_b);
                let la = WeylSymbol::linear(self.grad_alpha);
                let qb = WeylSymbol::quadratic(self.hess_cal_b);
                let qa = WeylSymbol::quadratic(self.hess_alpha);
                xi2.mul(&lb.mul(&lb))
                    .add(&xi2.mul(&qb).scale(self.cal_b))
                    .add(&xi2.mul(&la.mul(&la)))
                    .add(&xi.mul(&xa).mul(&qa))
                    .add(&WeylSymbol::constant(self.t_value))
            }
            _ => panic!("only M0, M1, M2 are defined"),
        }
    }

    /// Symbol of the derivative of `M0` along a parameter direction.
    pub fn symbol_derivative(&self, dir: &Direction) -> WeylSymbol {
        let xi = WeylSymbol::monomial(0, 1, C64::new(1.0, 0.0));
        xi.mul(&xi)
            .scale(2.0 * self.cal_b * dir.d_cal_b)
            .add(&xi.mul(&self.x_plus_alpha_xi()).scale(2.0 * dir.d_alpha))
            .add(&WeylSymbol::constant(dir.d_sigma))
    }
}

/// Derivative of `(B, alpha, Sigma)` along one real parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Direction {
    pub d_cal_b: C64,
    pub d_alpha: C64,
    pub d_sigma: C64,
}

/// Applies `M_j` (Weyl quantization of `m_j`) to a state.
pub fn apply_m(j: usize, od: &OscillatorData, s: &GaussianState) -> GaussianState {
    od.symbol(j).apply(s)
}

/// Ground state `F` of `M0` and ground state `G` of its adjoint,
/// with `||F|| = 1` and `<F, G> = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPair {
    pub f: GaussianState,
    pub g: GaussianState,
}

fn exponents(od: &OscillatorData) -> Result<(C64, C64)> {
    let a = (od.cal_b - I * od.alpha).inv();
    let b = (od.cal_b.conj() - I * od.alpha.conj()).inv();
    if !(a.re > 0.0 && (a + b.conj()).re > 0.0) || !a.is_finite() {
        return Err(Error::Precondition(format!(
            "non-integrable oscillator exponent for B = {}, alpha = {}",
            od.cal_b, od.alpha
        )));
    }
    Ok((a, b))
}

pub fn gaussian_pair(od: &OscillatorData) -> Result<GaussianPair> {
    let (a, b) = exponents(od)?;
    let big_c = (a.re / PI).powf(0.25);
    let conj_c = ((a + b.conj()) / (2.0 * PI)).sqrt() / big_c;
    Ok(GaussianPair {
        f: GaussianState::gaussian(a, C64::new(big_c, 0.0)),
        g: GaussianState::gaussian(b, conj_c.conj()),
    })
}

/// Derivatives of `F` and `G` along `dir`, by the chain rule through the
/// exponents and the two normalization constants.
pub fn pair_derivative(od: &OscillatorData, dir: &Direction) -> Result<GaussianPair> {
    let (a, b) = exponents(od)?;
    let pair = gaussian_pair(od)?;
    let big_c = pair.f.coeffs[0];
    let c = pair.g.coeffs[0];
    let da = -a * a * (dir.d_cal_b - I * dir.d_alpha);
    let d_conj_b = -b.conj() * b.conj() * (dir.d_cal_b + I * dir.d_alpha);
    let db = d_conj_b.conj();
    let dlog_big_c = 0.25 * da.re / a.re;
    let dlog_conj_c = 0.5 * (da + d_conj_b) / (a + b.conj()) - dlog_big_c;
    let dc = c * dlog_conj_c.conj();
    let z = C64::new(0.0, 0.0);
    Ok(GaussianPair {
        f: GaussianState::new(a, vec![big_c * dlog_big_c, z, -big_c * da / 2.0]),
        g: GaussianState::new(b, vec![dc, z, -c * db / 2.0]),
    })
}

/// [`pair_derivative`] cross-checked against a Richardson-extrapolated
/// central difference of the pair in parameter space (step `1e-5`).
pub fn pair_derivative_checked(od: &OscillatorData, dir: &Direction, tol: f64) -> Result<GaussianPair> {
    let d = pair_derivative(od, dir)?;
    let shifted = |t: f64| -> Result<GaussianPair> {
        let mut o = od.clone();
        o.cal_b += dir.d_cal_b * t;
        o.alpha += dir.d_alpha * t;
        gaussian_pair(&o)
    };
    let h = 1e-5;
    let (p1, m1, p2, m2) = (shifted(h)?, shifted(-h)?, shifted(h / 2.0)?, shifted(-h / 2.0)?);
    let scale = od.cal_b.norm().max(od.alpha.norm()).sqrt().max(1e-3);
    let mut worst = 0.0f64;
    let mut size = 0.0f64;
    for k in -4..=4 {
        let x = 0.45 * k as f64 * scale;
        for (which, exact) in [(0, d.f.eval(x)), (1, d.g.eval(x))] {
            let pick = |p: &GaussianPair| if which == 0 { p.f.eval(x) } else { p.g.eval(x) };
            let fd1 = (pick(&p1) - pick(&m1)) / (2.0 * h);
            let fd2 = (pick(&p2) - pick(&m2)) / h;
            let fd = (4.0 * fd2 - fd1) / 3.0;
            worst = worst.max((fd - exact).norm());
            size = size.max(exact.norm()).max(pick(&p2).norm());
        }
    }
    let rel = worst / size.max(f64::MIN_POSITIVE);
    if rel > tol {
        return Err(Error::CrossCheck { name: "gaussian_pair_derivative", lhs: worst, rhs: size, rel, tol });
    }
    Ok(d)
}

/// Eigenfunctions `psi_n` of `M0` (eigenvalue `(2n-1)B + Sigma`) and the
/// biorthogonal family `dual_n` of eigenfunctions of the adjoint.
#[derive(Debug, Clone)]
pub struct LadderBasis {
    pub psi: Vec<GaussianState>,
    pub dual: Vec<GaussianState>,
    pub eigenvalues: Vec<C64>,
    /// Largest relative eigen-residual over both families.
    pub max_residual: f64,
}

/// Raising operator of `M0 - Sigma = kappa P^2 + nu x^2`, `P = D + mu x`,
/// normalised to `sqrt(2B)` so that `M0 - Sigma = 2B A+ A- + B`.
fn raise(cal_b: C64, alpha: C64, s: &GaussianState) -> GaussianState {
    let kappa = cal_b * cal_b + alpha * alpha;
    let mu = alpha / kappa;
    let sk = kappa.sqrt();
    // sk * sn = B exactly, so the commutator term carries the right sign.
    let sn = cal_b / sk;
    let p = s.op_d().add(&s.mul_x().scale(mu));
    s.mul_x().scale(sn).sub(&p.scale(I * sk)).scale((2.0 * cal_b).sqrt().inv())
}

pub const BASIS_TOL: f64 = 1e-10;

pub fn ladder_basis(od: &OscillatorData, n_max: usize) -> Result<LadderBasis> {
    if n_max < 1 {
        return Err(Error::InvalidParams("ladder basis needs n_max >= 1".into()));
    }
    let pair = gaussian_pair(od)?;
    let adj = od.adjoint();
    let m0 = od.symbol(0);
    let m0_adj = adj.symbol(0);
    let mut psi = vec![pair.f.clone()];
    let mut dual = vec![pair.g.clone()];
    for n in 1..n_max {
        let norm = (n as f64).sqrt();
        psi.push(raise(od.cal_b, od.alpha, &psi[n - 1]).scale(C64::new(1.0 / norm, 0.0)));
        dual.push(raise(adj.cal_b, adj.alpha, &dual[n - 1]).scale(C64::new(1.0 / norm, 0.0)));
    }
    let mut max_residual = 0.0f64;
    let eigenvalues: Vec<C64> = (1..=n_max).map(|n| od.eigenvalue(n)).collect();
    for n in 0..n_max {
        let lam = eigenvalues[n];
        for (state, op, l) in [(&psi[n], &m0, lam), (&dual[n], &m0_adj, lam.conj())] {
            let r = op.apply(state).sub(&state.scale(l)).coeff_norm() / state.coeff_norm();
            max_residual = max_residual.max(r);
            if !(r <= BASIS_TOL) {
                return Err(Error::Basis { n: n + 1, residual: r });
            }
        }
        let g = inner(&psi[n], &dual[n])?;
        dual[n] = dual[n].scale(g.inv().conj());
    }
    Ok(LadderBasis { psi, dual, eigenvalues, max_residual })
}

impl LadderBasis {
    pub fn len(&self) -> usize {
        self.psi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.psi.is_empty()
    }

    /// Expansion coefficients `<s, dual_n>`.
    pub fn coefficients(&self, s: &GaussianState) -> Result<Vec<C64>> {
        let a = self.psi[0].a;
        if (s.a - a).norm() > 1e-12 * a.norm() {
            return Err(Error::Precondition(format!("state exponent {} differs from basis exponent {a}", s.a)));
        }
        let degree = s.degree();
        if degree + 1 > self.len() {
            return Err(Error::DegreeTooHigh { degree, n_max: self.len() });
        }
        self.dual.iter().map(|d| inner(s, d)).collect()
    }

    /// `Pi s = <s, G> F`.
    pub fn project(&self, s: &GaussianState) -> Result<GaussianState> {
        Ok(self.psi[0].scale(inner(s, &self.dual[0])?))
    }

    /// Reduced resolvent `(M0 - z)^-1 (Id - Pi)` applied to `s`.
    pub fn reduced_resolvent(&self, z: C64, s: &GaussianState) -> Result<GaussianState> {
        let c = self.coefficients(s)?;
        let mut out = GaussianState::zero(s.a);
        for n in 1..self.len() {
            out = out.add(&self.psi[n].scale(c[n] / (self.eigenvalues[n] - z)));
        }
        Ok(out)
    }
}

/// `R0(z) s` with a basis sized to the degree of `s`.
pub fn r0_apply(od: &OscillatorData, z: C64, s: &GaussianState) -> Result<GaussianState> {
    let basis = ladder_basis(od, (s.degree() + 1).max(4))?;
    basis.reduced_resolvent(z, s)
}
