//! Upper bounds on the log-Sobolev constant.
//!
//! `bakry_emery`, `holley_stroock` and `outside_ball` are closed forms;
//! `nonuniform_bound` integrates a radial curvature profile; and
//! `lyapunov_poincare` is the fallback for dissipative potentials without
//! curvature information. The last one bounds the Poincaré constant only.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::numerics::adaptive_simpson;
use crate::potentials::PotentialSpec;
use crate::rng::Stream;
use crate::scalar::{norm, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LsiMethod {
    BakryEmery,
    HolleyStroock,
    OutsideBall,
    Nonuniform,
    Lyapunov,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct LsiBound<T: Real> {
    pub lambda: T,
    pub method: LsiMethod,
    pub inputs: BTreeMap<String, f64>,
}

impl<T: Real> LsiBound<T> {
    fn new(lambda: T, method: LsiMethod, inputs: &[(&str, T)]) -> Result<Self> {
        if !(lambda.is_finite() && lambda > T::zero()) {
            return Err(Error::NonFinite(format!("{method:?} bound evaluated to {lambda}")));
        }
        Ok(Self {
            lambda,
            method,
            inputs: inputs.iter().map(|(k, v)| (k.to_string(), v.to_f64_lossy())).collect(),
        })
    }
}

/// Radial lower curvature bound `r -> m0(r)`.
#[derive(Clone)]
pub struct CurvatureProfile<T> {
    label: String,
    m0: Arc<dyn Fn(T) -> T + Send + Sync>,
}

impl<T> fmt::Debug for CurvatureProfile<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CurvatureProfile({})", self.label)
    }
}

impl<T: Real> CurvatureProfile<T> {
    pub fn new(label: impl Into<String>, m0: impl Fn(T) -> T + Send + Sync + 'static) -> Self {
        Self {
            label: label.into(),
            m0: Arc::new(m0),
        }
    }

    pub fn constant(m: T) -> Self {
        Self::new("constant", move |_| m)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    #[inline]
    pub fn eval(&self, r: T) -> T {
        (self.m0)(r)
    }
}

fn require_positive<T: Real>(name: &str, v: T) -> Result<()> {
    if v > T::zero() && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")))
    }
}

fn require_nonnegative<T: Real>(name: &str, v: T) -> Result<()> {
    if v >= T::zero() && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be non-negative, got {v}")))
    }
}

/// `1/m` for an m-strongly convex potential.
pub fn bakry_emery<T: Real>(m: T) -> Result<LsiBound<T>> {
    require_positive("m", m)?;
    LsiBound::new(m.recip(), LsiMethod::BakryEmery, &[("m", m)])
}

/// `e^{2B}/m0` for an m0-strongly convex potential plus a perturbation bounded by `B`.
pub fn holley_stroock<T: Real>(m0: T, bound: T) -> Result<LsiBound<T>> {
    require_positive("m0", m0)?;
    require_nonnegative("B", bound)?;
    LsiBound::new((T::two() * bound).exp() / m0, LsiMethod::HolleyStroock, &[("m0", m0), ("B", bound)])
}

/// `m0^{-1} exp((k + m0) r^2)` for curvature `>= m0` outside radius `r` and `>= -k` inside.
pub fn outside_ball<T: Real>(m0: T, k: T, r: T) -> Result<LsiBound<T>> {
    require_positive("m0", m0)?;
    require_nonnegative("k", k)?;
    require_nonnegative("r", r)?;
    LsiBound::new(
        ((k + m0) * r * r).exp() / m0,
        LsiMethod::OutsideBall,
        &[("m0", m0), ("k", k), ("r", r)],
    )
}

/// Bound from a radial curvature profile: find `a0` with `int_0^a0 m0 = 2/a0`,
/// then return `(a0^2/2) exp(int_0^a0 r m0(r) dr - 1)`.
pub fn nonuniform_bound<T: Real>(profile: &CurvatureProfile<T>, quad_tol: T) -> Result<LsiBound<T>> {
    require_positive("quad_tol", quad_tol)?;
    let inner_tol = quad_tol * T::of(0.01);
    let integral = |a: T| adaptive_simpson(&|r: T| profile.eval(r), T::zero(), a, inner_tol, 50);
    let excess = |a: T| integral(a).map(|v| v - T::two() / a);

    let lo = T::of(1e-6);
    let cap = T::of(2f64.powi(40));
    let mut hi = T::one();
    while excess(hi)? <= T::zero() {
        hi = hi * T::two();
        if hi > cap {
            return Err(Error::BracketFailure { upper: cap.to_f64_lossy() });
        }
    }

    // The root is unique when the excess is increasing across the bracket.
    let mut prev = excess(lo)?;
    let steps = 64;
    let ratio = (hi / lo).ln() / T::of_usize(steps);
    for i in 1..=steps {
        let a = lo * (ratio * T::of_usize(i)).exp();
        let cur = excess(a)?;
        if cur <= prev {
            return Err(Error::InvalidParameter(format!(
                "int_0^a m0 - 2/a is not increasing near a = {a}; root may not be unique"
            )));
        }
        prev = cur;
    }

    let (mut left, mut right) = (lo, hi);
    let mut a0 = T::half() * (left + right);
    for _ in 0..500 {
        a0 = T::half() * (left + right);
        let v = excess(a0)?;
        if v.abs() <= quad_tol || a0 == left || a0 == right {
            break;
        }
        if v < T::zero() {
            left = a0;
        } else {
            right = a0;
        }
    }
    let resid = excess(a0)?;
    if resid.abs() > quad_tol {
        return Err(Error::NoConvergence {
            iters: 500,
            residual: resid.to_f64_lossy(),
        });
    }
    let first = adaptive_simpson(&|r: T| r * profile.eval(r), T::zero(), a0, inner_tol, 50)?;
    LsiBound::new(
        T::half() * a0 * a0 * (first - T::one()).exp(),
        LsiMethod::Nonuniform,
        &[("a0", a0), ("moment_integral", first)],
    )
}

/// Oscillation `max f - min f` over the ball of radius `radius` around `center`.
///
/// For `d <= 2` a dense grid with `samples` points (plus the center); above
/// that, uniform samples in the ball followed by projected gradient ascent and
/// descent from the extreme samples.
pub fn oscillation<T: Real>(p: &PotentialSpec<T>, center: &[T], radius: T, samples: usize, seed: u64) -> Result<T> {
    let d = p.dim();
    if center.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: center.len() });
    }
    let mut lo = p.value_at(center);
    let mut hi = lo;
    let mut visit = |x: &[T]| -> Result<T> {
        let v = p.value_at(x);
        if !v.is_finite() {
            return Err(Error::NonFinite("potential inside oscillation ball".into()));
        }
        lo = lo.min(v);
        hi = hi.max(v);
        Ok(v)
    };
    match d {
        1 => {
            let n = samples.max(3);
            for i in 0..n {
                let t = T::of(-1.0 + 2.0 * i as f64 / (n - 1) as f64);
                visit(&[center[0] + radius * t])?;
            }
        }
        2 => {
            let side = ((samples as f64).sqrt().ceil() as usize).max(3);
            for i in 0..side {
                for j in 0..side {
                    let u = T::of(-1.0 + 2.0 * i as f64 / (side - 1) as f64);
                    let v = T::of(-1.0 + 2.0 * j as f64 / (side - 1) as f64);
                    if u * u + v * v <= T::one() {
                        visit(&[center[0] + radius * u, center[1] + radius * v])?;
                    }
                }
            }
            // The boundary circle, where radial extremes usually sit.
            for i in 0..side * 4 {
                let th = T::of(std::f64::consts::TAU * i as f64 / (side * 4) as f64);
                visit(&[center[0] + radius * th.cos(), center[1] + radius * th.sin()])?;
            }
        }
        _ => {
            let stream = Stream::new(seed, 0x05c);
            let mut scored: Vec<(T, Vec<T>)> = Vec::with_capacity(samples);
            for i in 0..samples as u64 {
                let dir: Vec<T> = (0..d).map(|j| T::of(stream.normal(i, j as u64))).collect();
                let n = norm(&dir).max(T::min_positive_value());
                let rad = radius * T::of(stream.uniform(i, 10_000_000)).powf(T::of_usize(d).recip());
                let x: Vec<T> = center.iter().zip(&dir).map(|(&c, &u)| c + rad * u / n).collect();
                let v = visit(&x)?;
                scored.push((v, x));
            }
            scored.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite values"));
            let step = p.known().lipschitz.map_or(T::of(0.1), |l| l.recip()) * T::half();
            let starts: Vec<(T, Vec<T>)> = scored
                .iter()
                .take(5)
                .map(|s| (-T::one(), s.1.clone()))
                .chain(scored.iter().rev().take(5).map(|s| (T::one(), s.1.clone())))
                .collect();
            for (sign, mut x) in starts {
                for _ in 0..200 {
                    let g = p.gradient_at(&x);
                    for (xi, gi) in x.iter_mut().zip(&g) {
                        *xi += sign * step * *gi;
                    }
                    let off: Vec<T> = x.iter().zip(center).map(|(&a, &c)| a - c).collect();
                    let r = norm(&off);
                    if r > radius {
                        for (xi, (o, &c)) in x.iter_mut().zip(off.iter().zip(center)) {
                            *xi = c + *o * radius / r;
                        }
                    }
                    visit(&x)?;
                }
            }
        }
    }
    Ok(hi - lo)
}

/// `(2/m)(1 + c (m/2)(d + b) e^{Osc_R})` with `R^2 = (2/m)(d + b + 1)`:
/// a Poincaré-constant bound for a dissipative potential.
pub fn lyapunov_poincare<T: Real>(
    p: &PotentialSpec<T>,
    m: T,
    b: T,
    center: &[T],
    c: T,
    osc_samples: usize,
    seed: u64,
) -> Result<LsiBound<T>> {
    require_positive("m", m)?;
    require_nonnegative("b", b)?;
    require_nonnegative("c", c)?;
    let d = T::of_usize(p.dim());
    let radius = (T::two() / m * (d + b + T::one())).sqrt();
    let osc = oscillation(p, center, radius, osc_samples.max(1), seed)?;
    let lambda = T::two() / m * (T::one() + c * T::half() * m * (d + b) * osc.exp());
    LsiBound::new(
        lambda,
        LsiMethod::Lyapunov,
        &[("m", m), ("b", b), ("c", c), ("radius", radius), ("oscillation", osc)],
    )
}
