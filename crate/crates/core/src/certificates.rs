//! Sampled checks of smoothness and strong dissipativity, minimizer search,
//! and the [`Certificate`] record handed to the planner.

use rayon::prelude::*;
use serde::ser::{Serialize, SerializeStruct, Serializer};

use crate::error::{Error, Result};
use crate::lsi::{self, CurvatureProfile};
use crate::potentials::{CurvatureInfo, PotentialSpec};
use crate::rng::Stream;
use crate::scalar::{dot, norm, norm2, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Analytic,
    NumericEstimate,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct Certified<V> {
    pub value: V,
    pub provenance: Provenance,
}

impl<V> Certified<V> {
    pub fn analytic(value: V) -> Self {
        Self {
            value,
            provenance: Provenance::Analytic,
        }
    }

    pub fn estimate(value: V) -> Self {
        Self {
            value,
            provenance: Provenance::NumericEstimate,
        }
    }
}

/// Smoothness, dissipativity and LSI constants for one potential.
#[derive(Debug, Clone)]
pub struct Certificate<T: Real> {
    pub lipschitz: Certified<T>,
    pub m: Certified<T>,
    pub b: Certified<T>,
    pub lambda: Certified<T>,
    pub minimizer: Option<Certified<Vec<T>>>,
}

impl<T: Real> Certificate<T> {
    /// Condition number `L / m`.
    pub fn kappa(&self) -> T {
        self.lipschitz.value / self.m.value
    }

    pub fn minimizer(&self) -> Result<&[T]> {
        self.minimizer
            .as_ref()
            .map(|c| c.value.as_slice())
            .ok_or(Error::MissingConstant("minimizer"))
    }
}

impl<T: Real> Serialize for Certificate<T> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("Certificate", 6)?;
        st.serialize_field("L", &self.lipschitz)?;
        st.serialize_field("m", &self.m)?;
        st.serialize_field("b", &self.b)?;
        st.serialize_field("kappa", &self.kappa())?;
        st.serialize_field("lambda", &self.lambda)?;
        st.serialize_field("minimizer", &self.minimizer)?;
        st.end()
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct CheckReport {
    pub samples: usize,
    pub violations: usize,
    pub worst_margin: f64,
    pub passed: bool,
}

impl CheckReport {
    fn new(samples: usize, violations: usize, worst_margin: f64) -> Self {
        Self {
            samples,
            violations,
            worst_margin,
            passed: violations == 0,
        }
    }
}

/// Where probe points are drawn: a box `[-radius, radius]^d` (and a Gaussian
/// of scale `radius / 3` around the origin), with draws keyed by `seed`.
#[derive(Debug, Clone, Copy)]
pub struct Probe<T> {
    pub radius: T,
    pub seed: u64,
}

impl<T: Real> Default for Probe<T> {
    fn default() -> Self {
        Self {
            radius: T::of(10.0),
            seed: 0,
        }
    }
}

impl<T: Real> Probe<T> {
    fn point(&self, stream: &Stream, i: u64, slot: u64, d: usize, gaussian: bool) -> Vec<T> {
        let base = slot * d as u64;
        (0..d)
            .map(|j| {
                let lane = base + j as u64;
                let v = if gaussian {
                    self.radius.to_f64_lossy() / 3.0 * stream.normal(i, lane)
                } else {
                    self.radius.to_f64_lossy() * (2.0 * stream.uniform(i, 2 * lane + 1_000_000) - 1.0)
                };
                T::of(v)
            })
            .collect()
    }

    /// The `i`-th probe pair; `i % 3` cycles through uniform, Gaussian and
    /// near-coincident (distance 1e-4) pairs.
    fn pair(&self, stream: &Stream, i: u64, d: usize) -> (Vec<T>, Vec<T>) {
        match i % 3 {
            0 => (self.point(stream, i, 0, d, false), self.point(stream, i, 1, d, false)),
            1 => (self.point(stream, i, 0, d, true), self.point(stream, i, 1, d, true)),
            _ => {
                let x = self.point(stream, i, 0, d, i % 2 == 0);
                let dir: Vec<T> = self.point(stream, i, 1, d, true);
                let n = norm(&dir).max(T::min_positive_value());
                let y = x
                    .iter()
                    .zip(&dir)
                    .map(|(&xi, &u)| xi + T::of(1e-4) * u / n)
                    .collect();
                (x, y)
            }
        }
    }
}

fn finite_all<T: Real>(v: &[T], what: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

/// Compares the analytic gradient against central differences with step
/// `1e-5 (1 + |x|)`. The margin is the largest relative error
/// `|fd - grad| / (1 + |grad|)`.
pub fn check_gradient_fd<T: Real>(
    p: &PotentialSpec<T>,
    n_samples: usize,
    tol: T,
    probe: &Probe<T>,
) -> Result<CheckReport> {
    if n_samples == 0 || !(tol > T::zero()) {
        return Err(Error::InvalidParameter("need n_samples >= 1 and tol > 0".into()));
    }
    let d = p.dim();
    let stream = Stream::new(probe.seed, 0xfd);
    let errs = (0..n_samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut x = probe.point(&stream, i, 0, d, i % 2 == 1);
            let g = p.gradient_at(&x);
            finite_all(&g, "gradient")?;
            let h = T::of(1e-5) * (T::one() + norm(&x));
            let mut diff = T::zero();
            for j in 0..d {
                let xj = x[j];
                x[j] = xj + h;
                let fp = p.value_at(&x);
                x[j] = xj - h;
                let fm = p.value_at(&x);
                x[j] = xj;
                if !(fp.is_finite() && fm.is_finite()) {
                    return Err(Error::NonFinite("potential value".into()));
                }
                let fd = (fp - fm) / (T::two() * h);
                diff += (fd - g[j]) * (fd - g[j]);
            }
            Ok(diff.sqrt() / (T::one() + norm(&g)))
        })
        .collect::<Result<Vec<T>>>()?;
    let worst = errs.iter().copied().fold(T::zero(), T::max);
    let violations = errs.iter().filter(|&&e| !(e < tol)).count();
    Ok(CheckReport::new(n_samples, violations, worst.to_f64_lossy()))
}

/// Tests `<x - y, grad f(x) - grad f(y)> >= m |x - y|^2 - b` on sampled pairs.
/// The margin is the smallest slack observed.
pub fn check_dissipativity<T: Real>(
    p: &PotentialSpec<T>,
    m: T,
    b: T,
    n_pairs: usize,
    probe: &Probe<T>,
) -> Result<CheckReport> {
    if !(m > T::zero()) || !(b >= T::zero()) || n_pairs == 0 {
        return Err(Error::InvalidParameter("need m > 0, b >= 0, n_pairs >= 1".into()));
    }
    let d = p.dim();
    let stream = Stream::new(probe.seed, 0xd155);
    let slacks = (0..n_pairs as u64)
        .into_par_iter()
        .map(|i| {
            let (x, y) = probe.pair(&stream, i, d);
            let gx = p.gradient_at(&x);
            let gy = p.gradient_at(&y);
            finite_all(&gx, "gradient")?;
            finite_all(&gy, "gradient")?;
            let dx: Vec<T> = x.iter().zip(&y).map(|(&a, &c)| a - c).collect();
            let dg: Vec<T> = gx.iter().zip(&gy).map(|(&a, &c)| a - c).collect();
            Ok(dot(&dx, &dg) - m * norm2(&dx) + b)
        })
        .collect::<Result<Vec<T>>>()?;
    let worst = slacks.iter().copied().fold(T::infinity(), T::min);
    let violations = slacks.iter().filter(|&&s| s < T::of(-1e-12)).count();
    Ok(CheckReport::new(n_pairs, violations, worst.to_f64_lossy()))
}

fn lipschitz_ratios<T: Real>(p: &PotentialSpec<T>, n_pairs: usize, probe: &Probe<T>) -> Vec<T> {
    let d = p.dim();
    let stream = Stream::new(probe.seed, 0x11b);
    (0..n_pairs as u64)
        .into_par_iter()
        .map(|i| {
            let (x, y) = probe.pair(&stream, i, d);
            let gx = p.gradient_at(&x);
            let gy = p.gradient_at(&y);
            let dx: T = x.iter().zip(&y).map(|(&a, &c)| (a - c) * (a - c)).sum::<T>().sqrt();
            let dg: T = gx.iter().zip(&gy).map(|(&a, &c)| (a - c) * (a - c)).sum::<T>().sqrt();
            if dx > T::zero() {
                dg / dx
            } else {
                T::zero()
            }
        })
        .collect()
}

/// Sampled supremum of `|grad f(x) - grad f(y)| / |x - y|`; a lower estimate of `L`.
pub fn estimate_lipschitz<T: Real>(p: &PotentialSpec<T>, n_pairs: usize, probe: &Probe<T>) -> T {
    lipschitz_ratios(p, n_pairs.max(1), probe)
        .into_iter()
        .filter(|r| r.is_finite())
        .fold(T::zero(), T::max)
}

/// Pairs whose gradient ratio exceeds the claimed `lipschitz` (relative slack 1e-6).
pub fn check_lipschitz<T: Real>(
    p: &PotentialSpec<T>,
    lipschitz: T,
    n_pairs: usize,
    probe: &Probe<T>,
) -> CheckReport {
    let ratios = lipschitz_ratios(p, n_pairs.max(1), probe);
    let limit = lipschitz * (T::one() + T::of(1e-6));
    let violations = ratios.iter().filter(|&&r| !(r <= limit)).count();
    let worst = ratios.iter().copied().fold(T::infinity(), |acc, r| acc.min(lipschitz - r));
    CheckReport::new(ratios.len(), violations, worst.to_f64_lossy())
}

/// Gradient descent with Armijo backtracking (c = 1e-4, step halving) from `x0`.
pub fn find_minimizer<T: Real>(p: &PotentialSpec<T>, x0: &[T], tol: T, max_iters: usize) -> Result<Vec<T>> {
    if !(tol > T::zero()) {
        return Err(Error::InvalidParameter("tol must be positive".into()));
    }
    let (mut fx, mut g) = p.eval(x0)?;
    let mut x = x0.to_vec();
    let initial = p.known().lipschitz.map_or(T::one(), |l| l.recip());
    let c = T::of(1e-4);
    let mut trial = vec![T::zero(); x.len()];
    for _ in 0..max_iters {
        let gn2 = norm2(&g);
        if gn2.sqrt() <= tol {
            return Ok(x);
        }
        let mut t = initial;
        loop {
            for ((y, &xi), &gi) in trial.iter_mut().zip(&x).zip(&g) {
                *y = xi - t * gi;
            }
            let ft = p.value_at(&trial);
            if ft <= fx - c * t * gn2 {
                fx = ft;
                break;
            }
            t = t * T::half();
            if t < T::of(1e-30) {
                // Line search stalled: no descent available at this precision.
                let residual = gn2.sqrt().to_f64_lossy();
                return Err(Error::NoConvergence { iters: max_iters, residual });
            }
        }
        std::mem::swap(&mut x, &mut trial);
        p.gradient_into(&x, &mut g);
        finite_all(&g, "gradient")?;
    }
    let residual = norm(&g);
    if residual <= tol {
        Ok(x)
    } else {
        Err(Error::NoConvergence {
            iters: max_iters,
            residual: residual.to_f64_lossy(),
        })
    }
}

/// Multi-start minimizer: the origin plus `starts` random points in the probe
/// box; returns the converged point with the lowest potential.
pub fn find_global_minimizer<T: Real>(
    p: &PotentialSpec<T>,
    starts: usize,
    tol: T,
    probe: &Probe<T>,
) -> Result<Vec<T>> {
    let d = p.dim();
    let stream = Stream::new(probe.seed, 0x0b7);
    let small = Probe {
        radius: probe.radius.min(T::of(5.0)),
        seed: probe.seed,
    };
    let mut best: Option<(T, Vec<T>)> = None;
    let mut last_err = None;
    for s in 0..=starts as u64 {
        let x0 = if s == 0 {
            vec![T::zero(); d]
        } else {
            small.point(&stream, s, 0, d, false)
        };
        match find_minimizer(p, &x0, tol, 200_000) {
            Ok(x) => {
                let fx = p.value_at(&x);
                if best.as_ref().map_or(true, |(bf, _)| fx < *bf) {
                    best = Some((fx, x));
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    match (best, last_err) {
        (Some((_, x)), _) => Ok(x),
        (None, Some(e)) => Err(e),
        (None, None) => unreachable!("at least one start"),
    }
}

/// Which constants may come from closed forms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstantSource {
    /// Closed forms where the potential provides them, estimates otherwise.
    Analytic,
    /// Ignore closed-form `L`, `lambda` and minimizer; estimate them.
    Numeric,
}

#[derive(Debug, Clone)]
pub struct CertifyOptions<T> {
    pub source: ConstantSource,
    pub probe: Probe<T>,
    pub samples: usize,
    /// Constant in the Lyapunov fallback for `lambda`.
    pub lyapunov_c: T,
    pub osc_samples: usize,
}

impl<T: Real> Default for CertifyOptions<T> {
    fn default() -> Self {
        Self {
            source: ConstantSource::Analytic,
            probe: Probe::default(),
            samples: 10_000,
            lyapunov_c: T::one(),
            osc_samples: 10_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CertifyOutcome<T: Real> {
    pub certificate: Certificate<T>,
    pub checks: Vec<(String, CheckReport)>,
}

/// `lambda` from the potential's curvature description, if it has one.
pub fn lambda_from_curvature<T: Real>(info: &CurvatureInfo<T>) -> Result<lsi::LsiBound<T>> {
    match info {
        CurvatureInfo::StronglyConvex { m } => lsi::bakry_emery(*m),
        CurvatureInfo::BoundedPerturbation { m0, bound } => lsi::holley_stroock(*m0, *bound),
        CurvatureInfo::ConvexOutsideBall { m0, k, r } => lsi::outside_ball(*m0, *k, *r),
        CurvatureInfo::Profile(profile) => lsi::nonuniform_bound(profile as &CurvatureProfile<T>, T::of(1e-10)),
    }
}

/// Assembles a certificate, preferring closed-form constants, and runs the
/// sampled consistency checks against it.
pub fn certify<T: Real>(p: &PotentialSpec<T>, opts: &CertifyOptions<T>) -> Result<CertifyOutcome<T>> {
    let known = p.known();
    let analytic = opts.source == ConstantSource::Analytic;
    let m = known.m.ok_or(Error::MissingConstant("m"))?;
    let b = known.b.ok_or(Error::MissingConstant("b"))?;

    let lipschitz = match known.lipschitz.filter(|_| analytic) {
        Some(l) => Certified::analytic(l),
        None => Certified::estimate(estimate_lipschitz(p, opts.samples, &opts.probe)),
    };

    let tol = T::of(1e-9).max(T::epsilon() * T::of(1e4));
    let minimizer = match known.minimizer.clone().filter(|_| analytic) {
        Some(x) => Certified::analytic(x),
        None => Certified::estimate(find_global_minimizer(p, 8, tol, &opts.probe)?),
    };

    let lambda = match (known.lambda, known.curvature.as_ref()) {
        (Some(l), _) if analytic => Certified::analytic(l),
        (_, Some(info)) if analytic => Certified::analytic(lambda_from_curvature(info)?.lambda),
        _ => {
            let bound = lsi::lyapunov_poincare(p, m, b, &minimizer.value, opts.lyapunov_c, opts.osc_samples, opts.probe.seed)?;
            Certified::estimate(bound.lambda)
        }
    };

    let certificate = Certificate {
        lipschitz,
        m: Certified::analytic(m),
        b: Certified::analytic(b),
        lambda,
        minimizer: Some(minimizer),
    };

    let checks = vec![
        (
            "gradient_fd".to_string(),
            check_gradient_fd(p, opts.samples.min(2_000), T::of(1e-5), &opts.probe)?,
        ),
        (
            "dissipativity".to_string(),
            check_dissipativity(p, m, b, opts.samples, &opts.probe)?,
        ),
        (
            "lipschitz".to_string(),
            check_lipschitz(p, certificate.lipschitz.value, opts.samples, &opts.probe),
        ),
    ];
    Ok(CertifyOutcome { certificate, checks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::{build_library_potential, KnownConstants, LibraryPotential, Potential};
    use approx::assert_relative_eq;

    fn lib(kind: LibraryPotential<f64>) -> PotentialSpec<f64> {
        build_library_potential(kind).unwrap()
    }

    struct WrongGradient;

    impl Potential<f64> for WrongGradient {
        fn dim(&self) -> usize {
            2
        }
        fn value(&self, x: &[f64]) -> f64 {
            0.5 * norm2(x)
        }
        fn gradient(&self, x: &[f64], out: &mut [f64]) {
            out[0] = 1.1 * x[0];
            out[1] = x[1];
        }
    }

    #[test]
    fn gradient_check_on_quadratic_and_negative_control() {
        let probe = Probe::default();
        let r = check_gradient_fd(&lib(LibraryPotential::Gaussian { dim: 3 }), 100, 1e-5, &probe).unwrap();
        assert!(r.passed);
        assert!(r.worst_margin < 1e-7, "{}", r.worst_margin);
        let r = check_gradient_fd(&lib(LibraryPotential::CosineCanonical { dim: 2 }), 1000, 1e-5, &probe).unwrap();
        assert!(r.passed, "{r:?}");
        let bad = PotentialSpec::new("wrong", WrongGradient, KnownConstants::default());
        assert!(!check_gradient_fd(&bad, 50, 1e-5, &probe).unwrap().passed);
    }

    #[test]
    fn dissipativity_examples() {
        let probe = Probe::default();
        let g = check_dissipativity(&lib(LibraryPotential::Gaussian { dim: 2 }), 1.0, 0.0, 3000, &probe).unwrap();
        assert!(g.passed);
        assert!(g.worst_margin.abs() < 1e-9);
        let cos = lib(LibraryPotential::CosineCanonical { dim: 2 });
        assert!(check_dissipativity(&cos, 0.5, 25.0 / 8.0, 5000, &probe).unwrap().passed);
        assert!(!check_dissipativity(&cos, 1.0, 0.0, 5000, &probe).unwrap().passed);
    }

    #[test]
    fn lipschitz_estimates() {
        let probe = Probe::default();
        let g = estimate_lipschitz(&lib(LibraryPotential::Gaussian { dim: 2 }), 3000, &probe);
        assert_relative_eq!(g, 1.0, epsilon = 1e-6);
        let c = estimate_lipschitz(&lib(LibraryPotential::CosineCanonical { dim: 1 }), 20_000, &probe);
        assert!(c <= 2.25 + 1e-6 && c > 2.2, "{c}");
        let s = estimate_lipschitz(&lib(LibraryPotential::StudentTRidge { dim: 2, alpha: 0.1 }), 5000, &probe);
        assert!(s <= 1.1 + 1e-6, "{s}");
    }

    #[test]
    fn minimizers() {
        let g = lib(LibraryPotential::Gaussian { dim: 3 });
        let x = find_minimizer(&g, &[5.0; 3], 1e-10, 1000).unwrap();
        assert!(norm(&x) < 1e-8);
        let c = lib(LibraryPotential::CosineCanonical { dim: 1 });
        let x = find_minimizer(&c, &[2.0], 1e-10, 10_000).unwrap();
        assert_relative_eq!(x[0].abs(), 1.131_102_6, epsilon = 1e-6);
        let x = find_minimizer(&c, &[-3.0], 1e-10, 10_000).unwrap();
        assert_relative_eq!(x[0].abs(), 1.131_102_6, epsilon = 1e-6);
        let s = lib(LibraryPotential::StudentTRidge { dim: 2, alpha: 0.1 });
        let x = find_minimizer(&s, &[3.0, -4.0], 1e-10, 10_000).unwrap();
        assert!(norm(&x) < 1e-8);
    }

    #[test]
    fn report_json_shape() {
        let r = CheckReport::new(10, 0, 0.5);
        let v = serde_json::to_value(&r).unwrap();
        let keys: Vec<&String> = v.as_object().unwrap().keys().collect();
        assert_eq!(keys.len(), 4);
        for k in ["samples", "violations", "worst_margin", "passed"] {
            assert!(v.get(k).is_some());
        }
    }

    #[test]
    fn certify_cosine_prefers_analytic() {
        let cos = lib(LibraryPotential::CosineCanonical { dim: 2 });
        let out = certify(&cos, &CertifyOptions { samples: 2000, ..Default::default() }).unwrap();
        let c = &out.certificate;
        assert_eq!(c.lipschitz.provenance, Provenance::Analytic);
        assert_eq!(c.lipschitz.value, 2.25);
        assert_eq!(c.kappa(), 4.5);
        assert_eq!(c.minimizer.as_ref().unwrap().provenance, Provenance::NumericEstimate);
        let x = c.minimizer().unwrap();
        assert!(norm(&cos.gradient_at(x)) <= 1e-8);
        assert!(out.checks.iter().all(|(_, r)| r.passed), "{:?}", out.checks);
        let json = serde_json::to_value(c).unwrap();
        assert_eq!(json["kappa"], 4.5);
        assert_eq!(json["L"]["provenance"], "analytic");
    }
}
