//! Adaptive Gauss-Kronrod quadrature for real, complex and small vector integrands.

use crate::scalar::Real;
use num_complex::Complex;
use std::cmp::Ordering;
use std::collections::BinaryHeap;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadError {
    #[error("quadrature did not converge after {intervals} subintervals (estimated error {achieved:e}, requested {requested:e})")]
    NoConvergence {
        intervals: usize,
        achieved: f64,
        requested: f64,
    },
    #[error("integrand returned a non-finite value at t = {at}")]
    NonFinite { at: f64 },
}

/// Values that can be accumulated by the quadrature rules.
pub trait QuadValue<T: Real>: Copy {
    fn zero() -> Self;
    fn add(self, other: Self) -> Self;
    fn scale(self, s: T) -> Self;
    fn norm(self) -> T;

    fn sub(self, other: Self) -> Self {
        self.add(other.scale(-T::one()))
    }
}

impl<T: Real> QuadValue<T> for T {
    fn zero() -> Self {
        T::zero()
    }
    fn add(self, other: Self) -> Self {
        self + other
    }
    fn scale(self, s: T) -> Self {
        self * s
    }
    fn norm(self) -> T {
        self.abs()
    }
}

impl<T: Real> QuadValue<T> for Complex<T> {
    fn zero() -> Self {
        Complex::new(T::zero(), T::zero())
    }
    fn add(self, other: Self) -> Self {
        self + other
    }
    fn scale(self, s: T) -> Self {
        self * s
    }
    fn norm(self) -> T {
        self.norm()
    }
}

impl<T: Real, const N: usize> QuadValue<T> for [Complex<T>; N] {
    fn zero() -> Self {
        [Complex::new(T::zero(), T::zero()); N]
    }
    fn add(mut self, other: Self) -> Self {
        for (a, b) in self.iter_mut().zip(other.iter()) {
            *a = *a + *b;
        }
        self
    }
    fn scale(mut self, s: T) -> Self {
        for a in self.iter_mut() {
            *a = *a * s;
        }
        self
    }
    fn norm(self) -> T {
        self.iter().fold(T::zero(), |m, z| m.max(z.norm()))
    }
}

// 15-point Kronrod extension of the 7-point Gauss rule.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.000_000_000_000_000_000_000_000_000_000_000,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// Single 7/15 Gauss-Kronrod panel on `[a, b]`: returns
/// (kronrod, |kronrod - gauss|, kronrod estimate of the integral of |f|).
pub fn gk15<T: Real, V: QuadValue<T>, F: FnMut(T) -> V>(f: &mut F, a: T, b: T) -> (V, T, T) {
    let half = T::lit(0.5);
    let c = (a + b) * half;
    let hl = (b - a) * half;
    let fc = f(c);
    let mut kron = fc.scale(T::lit(WGK[7]));
    let mut gauss = fc.scale(T::lit(WG[3]));
    let mut resabs = fc.norm() * T::lit(WGK[7]);
    for j in 0..7 {
        let dx = hl * T::lit(XGK[j]);
        let f1 = f(c - dx);
        let f2 = f(c + dx);
        let s = f1.add(f2);
        kron = kron.add(s.scale(T::lit(WGK[j])));
        resabs = resabs + (f1.norm() + f2.norm()) * T::lit(WGK[j]);
        if j % 2 == 1 {
            gauss = gauss.add(s.scale(T::lit(WG[j / 2])));
        }
    }
    let k = kron.scale(hl);
    let g = gauss.scale(hl);
    (k, k.sub(g).norm(), resabs * hl.abs())
}

#[derive(Debug, Clone, Copy)]
pub struct QuadOptions<T> {
    pub rel_tol: T,
    pub abs_tol: T,
    pub max_intervals: usize,
}

impl<T: Real> Default for QuadOptions<T> {
    fn default() -> Self {
        Self {
            rel_tol: T::lit(1e-12),
            abs_tol: T::lit(1e-300).max(T::min_positive_value()),
            max_intervals: 2000,
        }
    }
}

impl<T: Real> QuadOptions<T> {
    pub fn rel(rel_tol: T) -> Self {
        Self {
            rel_tol,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QuadResult<T, V> {
    pub value: V,
    pub error: T,
    pub intervals: usize,
}

struct Panel<T, V> {
    a: T,
    b: T,
    value: V,
    err: T,
    abs: T,
}

impl<T: Real, V> PartialEq for Panel<T, V> {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl<T: Real, V> Eq for Panel<T, V> {}
impl<T: Real, V> PartialOrd for Panel<T, V> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<T: Real, V> Ord for Panel<T, V> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err.partial_cmp(&other.err).unwrap_or(Ordering::Equal)
    }
}

/// Globally adaptive Gauss-Kronrod integration of `f` over `[a, b]`.
///
/// The panel with the largest error estimate is bisected until the summed
/// estimate drops below `max(abs_tol, rel_tol * |I|)`. Requests below the
/// roundoff floor `50 eps * int |f|` are clamped to that floor.
pub fn integrate<T, V, F>(mut f: F, a: T, b: T, opts: QuadOptions<T>) -> Result<QuadResult<T, V>, QuadError>
where
    T: Real,
    V: QuadValue<T>,
    F: FnMut(T) -> V,
{
    if a == b {
        return Ok(QuadResult {
            value: V::zero(),
            error: T::zero(),
            intervals: 0,
        });
    }
    let (v0, e0, abs0) = gk15(&mut f, a, b);
    if !v0.norm().is_finite() {
        return Err(QuadError::NonFinite { at: a.to_f64_lossy() });
    }
    let mut heap = BinaryHeap::new();
    heap.push(Panel { a, b, value: v0, err: e0, abs: abs0 });
    let mut total = v0;
    let mut total_err = e0;
    let mut total_abs = abs0;
    let roundoff = T::epsilon() * T::lit(50.0);
    let min_width = (b - a).abs() * T::epsilon() * T::lit(64.0);
    loop {
        let target = opts
            .abs_tol
            .max(opts.rel_tol * total.norm())
            .max(roundoff * total_abs);
        if total_err <= target {
            break;
        }
        if heap.len() >= opts.max_intervals {
            return Err(QuadError::NoConvergence {
                intervals: heap.len(),
                achieved: total_err.to_f64_lossy(),
                requested: target.to_f64_lossy(),
            });
        }
        let worst = heap.pop().expect("non-empty heap");
        if (worst.b - worst.a).abs() <= min_width {
            return Err(QuadError::NoConvergence {
                intervals: heap.len() + 1,
                achieved: total_err.to_f64_lossy(),
                requested: target.to_f64_lossy(),
            });
        }
        let mid = (worst.a + worst.b) * T::lit(0.5);
        let (vl, el, al) = gk15(&mut f, worst.a, mid);
        let (vr, er, ar) = gk15(&mut f, mid, worst.b);
        if !(vl.norm().is_finite() && vr.norm().is_finite()) {
            return Err(QuadError::NonFinite { at: mid.to_f64_lossy() });
        }
        total = total.sub(worst.value).add(vl).add(vr);
        total_err = total_err - worst.err + el + er;
        total_abs = total_abs - worst.abs + al + ar;
        heap.push(Panel { a: worst.a, b: mid, value: vl, err: el, abs: al });
        heap.push(Panel { a: mid, b: worst.b, value: vr, err: er, abs: ar });
    }
    // Re-sum from the panels to shed accumulated cancellation in `total`.
    let mut value = V::zero();
    let mut err = T::zero();
    let n = heap.len();
    for p in heap.into_vec() {
        value = value.add(p.value);
        err = err + p.err;
    }
    Ok(QuadResult {
        value,
        error: err,
        intervals: n,
    })
}

/// Integral of a holomorphic `f` along the straight segment from `z0` to `z1`.
pub fn integrate_segment<T, V, F>(
    mut f: F,
    z0: Complex<T>,
    z1: Complex<T>,
    opts: QuadOptions<T>,
) -> Result<QuadResult<T, V>, QuadError>
where
    T: Real,
    V: QuadValue<T> + std::ops::Mul<Complex<T>, Output = V>,
    F: FnMut(Complex<T>) -> V,
{
    let dz = z1 - z0;
    let r = integrate(|t: T| f(z0 + dz * t), T::zero(), T::one(), opts)?;
    Ok(QuadResult {
        value: r.value * dz,
        error: r.error * dz.norm(),
        intervals: r.intervals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_and_transcendental_integrals() {
        let r = integrate(|t: f64| t.powi(7) - 3.0 * t, -1.0, 2.0, QuadOptions::default()).unwrap();
        let exact = (2f64.powi(8) - 1.0) / 8.0 - 1.5 * (4.0 - 1.0);
        assert!((r.value - exact).abs() < 1e-13);
        let r = integrate(|t: f64| 1.0 / (1.0 + 25.0 * t * t), -1.0, 1.0, QuadOptions::default()).unwrap();
        assert!((r.value - 0.4 * 5f64.atan()).abs() < 1e-13);
    }

    #[test]
    fn complex_segment_matches_antiderivative() {
        let z0 = Complex::new(0.0, 0.0);
        let z1 = Complex::new(0.3, 0.2);
        let r = integrate_segment(|z: Complex<f64>| z.exp(), z0, z1, QuadOptions::default()).unwrap();
        assert!((r.value - (z1.exp() - 1.0)).norm() < 1e-14);
    }

    #[test]
    fn vector_integrand() {
        let r = integrate(
            |t: f64| [Complex::new(t, 0.0), Complex::new(0.0, t * t)],
            0.0,
            1.0,
            QuadOptions::default(),
        )
        .unwrap();
        assert!((r.value[0].re - 0.5).abs() < 1e-15 && (r.value[1].im - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn reports_non_convergence() {
        let opts = QuadOptions { max_intervals: 4, ..QuadOptions::default() };
        let e = integrate(|t: f64| (1.0 / t).sin(), 1e-6, 1.0, opts).unwrap_err();
        assert!(matches!(e, QuadError::NoConvergence { .. }));
    }

    #[test]
    fn single_precision() {
        let r = integrate(|t: f32| t.cos(), 0.0f32, 1.0f32, QuadOptions::rel(1e-6)).unwrap();
        assert!((r.value - 1f32.sin()).abs() < 1e-6);
    }
}
