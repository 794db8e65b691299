//! Not-a-knot cubic splines on sorted abscissae.

use crate::scalar::Real;
use num_complex::Complex;

#[derive(Debug, Clone)]
pub struct CubicSpline<T> {
    x: Vec<T>,
    y: Vec<T>,
    // Second derivatives at the knots.
    m: Vec<T>,
}

impl<T: Real> CubicSpline<T> {
    /// Builds the interpolant. Requires at least four strictly increasing knots.
    pub fn new(x: Vec<T>, y: Vec<T>) -> Self {
        let n = x.len();
        assert!(n >= 4 && y.len() == n, "spline needs >= 4 matching samples");
        assert!(x.windows(2).all(|w| w[1] > w[0]), "knots must increase");
        let m = not_a_knot_moments(&x, &y);
        Self { x, y, m }
    }

    /// Interpolant with prescribed end slopes `d0 = s'(x_0)`, `dn = s'(x_n)`.
    pub fn clamped(x: Vec<T>, y: Vec<T>, d0: T, dn: T) -> Self {
        let n = x.len();
        assert!(n >= 2 && y.len() == n, "spline needs >= 2 matching samples");
        assert!(x.windows(2).all(|w| w[1] > w[0]), "knots must increase");
        let m = clamped_moments(&x, &y, d0, dn);
        Self { x, y, m }
    }

    pub fn knots(&self) -> &[T] {
        &self.x
    }

    fn interval(&self, t: T) -> usize {
        let n = self.x.len();
        match self.x.binary_search_by(|v| v.partial_cmp(&t).unwrap_or(std::cmp::Ordering::Less)) {
            Ok(i) => i.min(n - 2),
            Err(i) => i.saturating_sub(1).min(n - 2),
        }
    }

    pub fn eval(&self, t: T) -> T {
        self.eval_with_derivative(t).0
    }

    pub fn derivative(&self, t: T) -> T {
        self.eval_with_derivative(t).1
    }

    /// Value and first derivative; extrapolates with the end cubics.
    pub fn eval_with_derivative(&self, t: T) -> (T, T) {
        let i = self.interval(t);
        let h = self.x[i + 1] - self.x[i];
        let a = (self.x[i + 1] - t) / h;
        let b = (t - self.x[i]) / h;
        let six = T::lit(6.0);
        let (mi, mj) = (self.m[i], self.m[i + 1]);
        let v = a * self.y[i]
            + b * self.y[i + 1]
            + ((a * a * a - a) * mi + (b * b * b - b) * mj) * h * h / six;
        let three = T::lit(3.0);
        let d = (self.y[i + 1] - self.y[i]) / h
            - (three * a * a - T::one()) * h * mi / six
            + (three * b * b - T::one()) * h * mj / six;
        (v, d)
    }
}

fn not_a_knot_moments<T: Real>(x: &[T], y: &[T]) -> Vec<T> {
    let n = x.len();
    let h: Vec<T> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let two = T::lit(2.0);
    let six = T::lit(6.0);
    // Dense tridiagonal-plus-corner system solved as a banded system after
    // eliminating the not-a-knot rows into their neighbours.
    let mut sub = vec![T::zero(); n];
    let mut diag = vec![T::zero(); n];
    let mut sup = vec![T::zero(); n];
    let mut rhs = vec![T::zero(); n];
    for i in 1..n - 1 {
        sub[i] = h[i - 1];
        diag[i] = two * (h[i - 1] + h[i]);
        sup[i] = h[i];
        rhs[i] = six * ((y[i + 1] - y[i]) / h[i] - (y[i] - y[i - 1]) / h[i - 1]);
    }
    // m0 = m1 + (h0/h1)(m1 - m2): continuity of the third derivative at x1.
    let r0 = h[0] / h[1];
    diag[1] = diag[1] + sub[1] * (T::one() + r0);
    sup[1] = sup[1] - sub[1] * r0;
    let rn = h[n - 2] / h[n - 3];
    diag[n - 2] = diag[n - 2] + sup[n - 2] * (T::one() + rn);
    sub[n - 2] = sub[n - 2] - sup[n - 2] * rn;

    // Thomas algorithm on rows 1..n-2.
    let mut c = vec![T::zero(); n];
    let mut d = vec![T::zero(); n];
    c[1] = sup[1] / diag[1];
    d[1] = rhs[1] / diag[1];
    for i in 2..n - 1 {
        let den = diag[i] - sub[i] * c[i - 1];
        c[i] = sup[i] / den;
        d[i] = (rhs[i] - sub[i] * d[i - 1]) / den;
    }
    let mut m = vec![T::zero(); n];
    m[n - 2] = d[n - 2];
    for i in (1..n - 2).rev() {
        m[i] = d[i] - c[i] * m[i + 1];
    }
    m[0] = m[1] + r0 * (m[1] - m[2]);
    m[n - 1] = m[n - 2] + rn * (m[n - 2] - m[n - 3]);
    m
}

fn clamped_moments<T: Real>(x: &[T], y: &[T], d0: T, dn: T) -> Vec<T> {
    let n = x.len();
    let h: Vec<T> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let (two, six) = (T::lit(2.0), T::lit(6.0));
    let mut sub = vec![T::zero(); n];
    let mut diag = vec![T::zero(); n];
    let mut sup = vec![T::zero(); n];
    let mut rhs = vec![T::zero(); n];
    diag[0] = two * h[0];
    sup[0] = h[0];
    rhs[0] = six * ((y[1] - y[0]) / h[0] - d0);
    for i in 1..n - 1 {
        sub[i] = h[i - 1];
        diag[i] = two * (h[i - 1] + h[i]);
        sup[i] = h[i];
        rhs[i] = six * ((y[i + 1] - y[i]) / h[i] - (y[i] - y[i - 1]) / h[i - 1]);
    }
    sub[n - 1] = h[n - 2];
    diag[n - 1] = two * h[n - 2];
    rhs[n - 1] = six * (dn - (y[n - 1] - y[n - 2]) / h[n - 2]);
    for i in 1..n {
        let w = sub[i] / diag[i - 1];
        diag[i] = diag[i] - w * sup[i - 1];
        rhs[i] = rhs[i] - w * rhs[i - 1];
    }
    let mut m = vec![T::zero(); n];
    m[n - 1] = rhs[n - 1] / diag[n - 1];
    for i in (0..n - 1).rev() {
        m[i] = (rhs[i] - sup[i] * m[i + 1]) / diag[i];
    }
    m
}

/// Componentwise spline of a complex-valued sample set.
#[derive(Debug, Clone)]
pub struct ComplexSpline<T> {
    re: CubicSpline<T>,
    im: CubicSpline<T>,
}

impl<T: Real> ComplexSpline<T> {
    pub fn new(x: Vec<T>, y: &[Complex<T>]) -> Self {
        let re = CubicSpline::new(x.clone(), y.iter().map(|z| z.re).collect());
        let im = CubicSpline::new(x, y.iter().map(|z| z.im).collect());
        Self { re, im }
    }

    pub fn clamped(x: Vec<T>, y: &[Complex<T>], d0: Complex<T>, dn: Complex<T>) -> Self {
        let re = CubicSpline::clamped(x.clone(), y.iter().map(|z| z.re).collect(), d0.re, dn.re);
        let im = CubicSpline::clamped(x, y.iter().map(|z| z.im).collect(), d0.im, dn.im);
        Self { re, im }
    }

    pub fn eval(&self, t: T) -> Complex<T> {
        Complex::new(self.re.eval(t), self.im.eval(t))
    }

    pub fn derivative(&self, t: T) -> Complex<T> {
        Complex::new(self.re.derivative(t), self.im.derivative(t))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reproduces_cubics_exactly() {
        let x: Vec<f64> = (0..9).map(|k| (k as f64).powf(1.3) * 0.4 - 1.0).collect();
        let p = |t: f64| 0.3 - 1.2 * t + 0.5 * t * t - 0.7 * t * t * t;
        let dp = |t: f64| -1.2 + t - 2.1 * t * t;
        let s = CubicSpline::new(x.clone(), x.iter().map(|&t| p(t)).collect());
        for k in 0..50 {
            let t = -1.0 + 0.1 * k as f64;
            assert!((s.eval(t) - p(t)).abs() < 1e-11, "{t}");
            assert!((s.derivative(t) - dp(t)).abs() < 1e-10, "{t}");
        }
    }

    #[test]
    fn clamped_reproduces_cubics_with_exact_slopes() {
        let x: Vec<f64> = (0..7).map(|k| (k as f64).powf(1.2) * 0.3).collect();
        let p = |t: f64| 1.0 + 0.4 * t - 0.9 * t * t + 0.25 * t * t * t;
        let dp = |t: f64| 0.4 - 1.8 * t + 0.75 * t * t;
        let (a, b) = (x[0], x[6]);
        let s = CubicSpline::clamped(x.clone(), x.iter().map(|&t| p(t)).collect(), dp(a), dp(b));
        for k in 0..30 {
            let t = a + (b - a) * k as f64 / 29.0;
            assert!((s.eval(t) - p(t)).abs() < 1e-12);
            assert!((s.derivative(t) - dp(t)).abs() < 1e-11);
        }
    }

    #[test]
    fn works_in_single_precision() {
        let x: Vec<f32> = (0..20).map(|k| k as f32 * 0.1).collect();
        let s = CubicSpline::new(x.clone(), x.iter().map(|t| t.sin()).collect());
        assert!((s.eval(0.55f32) - 0.55f32.sin()).abs() < 1e-4);
    }

    proptest! {
        #[test]
        fn smooth_function_error_is_fourth_order(phase in 0.0f64..3.0) {
            let f = |t: f64| (2.0 * t + phase).sin();
            let err = |n: usize| {
                let x: Vec<f64> = (0..=n).map(|k| k as f64 / n as f64).collect();
                let s = CubicSpline::new(x.clone(), x.iter().map(|&t| f(t)).collect());
                (0..200).map(|k| { let t = (k as f64 + 0.5) / 200.0; (s.eval(t) - f(t)).abs() }).fold(0.0, f64::max)
            };
            let ratio = err(20) / err(40);
            prop_assert!(ratio > 10.0, "ratio {}", ratio);
        }
    }
}
