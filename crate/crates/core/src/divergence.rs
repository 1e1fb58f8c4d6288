//! Divergences between densities tabulated on uniform 1-d or 2-d grids,
//! histogram estimates from samples, and the TV/KL/chi^2/W2 inequality chain.
//!
//! Integrals use the trapezoid rule; each report carries a Richardson error
//! estimate `|I_h - I_{2h}| / 3` from the same integrand at half resolution.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::Stream;
use crate::scalar::Real;

/// Uniformly spaced nodes `lo, lo + h, ..., hi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis<T> {
    pub lo: T,
    pub hi: T,
    pub n: usize,
}

impl<T: Real> Axis<T> {
    pub fn new(lo: T, hi: T, n: usize) -> Result<Self> {
        if n < 2 || !(hi > lo) {
            return Err(Error::InvalidParameter(format!("axis needs n >= 2 and hi > lo (got n={n}, [{lo}, {hi}])")));
        }
        Ok(Self { lo, hi, n })
    }

    pub fn step(&self) -> T {
        (self.hi - self.lo) / T::of_usize(self.n - 1)
    }

    pub fn node(&self, i: usize) -> T {
        self.lo + self.step() * T::of_usize(i)
    }
}

/// Non-negative values on a tensor grid of one or two axes (row-major, first axis outer).
#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid<T> {
    pub axes: Vec<Axis<T>>,
    pub values: Vec<T>,
    pub normalized: bool,
}

impl<T: Real> DensityGrid<T> {
    pub fn new(axes: Vec<Axis<T>>, values: Vec<T>) -> Result<Self> {
        if axes.is_empty() || axes.len() > 2 {
            return Err(Error::InvalidParameter("grids are 1- or 2-dimensional".into()));
        }
        let len: usize = axes.iter().map(|a| a.n).product();
        if values.len() != len {
            return Err(Error::DimensionMismatch {
                expected: len,
                got: values.len(),
            });
        }
        if let Some(bad) = values.iter().position(|v| !(v.is_finite() && *v >= T::zero())) {
            return Err(Error::NonFinite(format!("grid value at index {bad} is {}", values[bad])));
        }
        Ok(Self {
            axes,
            values,
            normalized: false,
        })
    }

    pub fn from_fn_1d(lo: T, hi: T, n: usize, f: impl Fn(T) -> T) -> Result<Self> {
        let axis = Axis::new(lo, hi, n)?;
        let values = (0..n).map(|i| f(axis.node(i))).collect();
        Self::new(vec![axis], values)
    }

    pub fn from_fn_2d(x: Axis<T>, y: Axis<T>, f: impl Fn(T, T) -> T) -> Result<Self> {
        let mut values = Vec::with_capacity(x.n * y.n);
        for i in 0..x.n {
            for j in 0..y.n {
                values.push(f(x.node(i), y.node(j)));
            }
        }
        Self::new(vec![x, y], values)
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn mass(&self) -> T {
        integrate(&self.axes, &self.values, 1)
    }

    fn same_grid(&self, other: &Self) -> Result<()> {
        if self.axes != other.axes {
            return Err(Error::InvalidParameter("densities live on different grids".into()));
        }
        Ok(())
    }
}

/// Trapezoid weights along one axis using every `stride`-th node. When the
/// last node is not reached by the stride, the final partial interval is
/// closed with a single trapezoid so both resolutions span the same range.
fn axis_weights<T: Real>(axis: &Axis<T>, stride: usize) -> Vec<(usize, T)> {
    let h = axis.step();
    let mut idx: Vec<usize> = (0..axis.n).step_by(stride).collect();
    if *idx.last().expect("non-empty") != axis.n - 1 {
        idx.push(axis.n - 1);
    }
    let mut w = vec![T::zero(); idx.len()];
    for k in 0..idx.len() - 1 {
        let width = h * T::of_usize(idx[k + 1] - idx[k]);
        w[k] += T::half() * width;
        w[k + 1] += T::half() * width;
    }
    idx.into_iter().zip(w).collect()
}

fn integrate<T: Real>(axes: &[Axis<T>], values: &[T], stride: usize) -> T {
    match axes {
        [a] => axis_weights(a, stride).into_iter().map(|(i, w)| w * values[i]).sum(),
        [a, b] => {
            let wb = axis_weights(b, stride);
            axis_weights(a, stride)
                .into_iter()
                .map(|(i, wi)| wi * wb.iter().map(|&(j, wj)| wj * values[i * b.n + j]).sum::<T>())
                .sum()
        }
        _ => unreachable!("grids are 1- or 2-dimensional"),
    }
}

/// Full-resolution integral and its Richardson error estimate.
fn integrate_with_error<T: Real>(axes: &[Axis<T>], values: &[T]) -> (T, T) {
    let full = integrate(axes, values, 1);
    let half = integrate(axes, values, 2);
    (full, (full - half).abs() / T::of(3.0))
}

/// Rescales to unit trapezoid mass.
pub fn normalize<T: Real>(grid: &DensityGrid<T>) -> Result<DensityGrid<T>> {
    let mass = grid.mass();
    if !(mass > T::zero() && mass.is_finite()) {
        return Err(Error::NonFinite(format!("density mass is {mass}")));
    }
    Ok(DensityGrid {
        axes: grid.axes.clone(),
        values: grid.values.iter().map(|&v| v / mass).collect(),
        normalized: true,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Chi2,
    Kl,
    Renyi,
    Tv,
    W2,
}

impl Metric {
    pub fn as_str(&self) -> &'static str {
        match self {
            Metric::Chi2 => "chi2",
            Metric::Kl => "kl",
            Metric::Renyi => "renyi",
            Metric::Tv => "tv",
            Metric::W2 => "w2",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ClosedForm,
    Quadrature,
    Empirical,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::ClosedForm => "closed_form",
            Method::Quadrature => "quadrature",
            Method::Empirical => "empirical",
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct DivergenceReport<T> {
    pub metric: Metric,
    pub alpha: Option<T>,
    pub value: T,
    pub method: Method,
    pub error_estimate: T,
}

impl<T: Real> DivergenceReport<T> {
    pub fn new(metric: Metric, alpha: Option<T>, value: T, method: Method, error_estimate: T) -> Self {
        // Tiny negative values are quadrature noise around zero.
        let value = if value < T::zero() && value > T::of(-1e-12) {
            T::zero()
        } else {
            value
        };
        Self {
            metric,
            alpha,
            value,
            method,
            error_estimate,
        }
    }
}

fn check_support<T: Real>(rho: &DensityGrid<T>, nu: &DensityGrid<T>) -> Result<()> {
    let floor = T::of(1e-300);
    match rho
        .values
        .iter()
        .zip(&nu.values)
        .position(|(&r, &n)| r > T::zero() && n < floor)
    {
        Some(index) => Err(Error::SupportViolation { index }),
        None => Ok(()),
    }
}

fn pointwise<T: Real>(rho: &DensityGrid<T>, nu: &DensityGrid<T>, f: impl Fn(T, T) -> T) -> Vec<T> {
    rho.values.iter().zip(&nu.values).map(|(&r, &n)| f(r, n)).collect()
}

/// `int rho^alpha nu^{1 - alpha}`, with its error estimate.
fn f_alpha_with_error<T: Real>(rho: &DensityGrid<T>, nu: &DensityGrid<T>, alpha: T) -> Result<(T, T)> {
    rho.same_grid(nu)?;
    if !(alpha >= T::one()) {
        return Err(Error::InvalidParameter(format!("moment order must be >= 1, got {alpha}")));
    }
    check_support(rho, nu)?;
    let vals = pointwise(rho, nu, |r, n| {
        if r == T::zero() {
            T::zero()
        } else {
            r * (r / n).powf(alpha - T::one())
        }
    });
    Ok(integrate_with_error(&rho.axes, &vals))
}

/// `F_alpha = E_nu[(rho/nu)^alpha]`.
pub fn f_alpha_moment<T: Real>(rho: &DensityGrid<T>, nu: &DensityGrid<T>, alpha: T) -> Result<T> {
    f_alpha_with_error(rho, nu, alpha).map(|(v, _)| v)
}

/// Trapezoid evaluation of one metric's defining integral.
pub fn quadrature_divergence<T: Real>(
    rho: &DensityGrid<T>,
    nu: &DensityGrid<T>,
    metric: Metric,
    alpha: Option<T>,
) -> Result<DivergenceReport<T>> {
    rho.same_grid(nu)?;
    let report = |value, err| DivergenceReport::new(metric, alpha, value, Method::Quadrature, err);
    match metric {
        Metric::Chi2 => {
            let (f2, err) = f_alpha_with_error(rho, nu, T::two())?;
            Ok(report(f2 - T::one(), err))
        }
        Metric::Renyi => {
            let a = alpha.ok_or_else(|| Error::InvalidParameter("Renyi divergence needs alpha".into()))?;
            if !(a > T::one()) {
                return Err(Error::InvalidParameter(format!("Renyi order must exceed 1, got {a}")));
            }
            let (fa, err) = f_alpha_with_error(rho, nu, a)?;
            Ok(report(fa.ln() / (a - T::one()), err / (fa * (a - T::one()))))
        }
        Metric::Kl => {
            check_support(rho, nu)?;
            let vals = pointwise(rho, nu, |r, n| if r == T::zero() { T::zero() } else { r * (r / n).ln() });
            let (v, err) = integrate_with_error(&rho.axes, &vals);
            Ok(report(v, err))
        }
        Metric::Tv => {
            let vals = pointwise(rho, nu, |r, n| (r - n).abs());
            let (v, err) = integrate_with_error(&rho.axes, &vals);
            Ok(report(T::half() * v, T::half() * err))
        }
        Metric::W2 => w2_1d(rho, nu, 4096),
    }
}

/// Node CDF by cumulative trapezoid, scaled to end at 1.
fn cdf_nodes<T: Real>(grid: &DensityGrid<T>) -> Vec<T> {
    let h = grid.axes[0].step();
    let mut cdf = Vec::with_capacity(grid.values.len());
    let mut acc = T::zero();
    cdf.push(acc);
    for w in grid.values.windows(2) {
        acc += T::half() * h * (w[0] + w[1]);
        cdf.push(acc);
    }
    let total = acc;
    cdf.iter().map(|&c| c / total).collect()
}

fn quantile<T: Real>(axis: &Axis<T>, cdf: &[T], u: T) -> T {
    let k = cdf.partition_point(|&c| c < u);
    if k == 0 {
        return axis.lo;
    }
    if k >= cdf.len() {
        return axis.hi;
    }
    let (c0, c1) = (cdf[k - 1], cdf[k]);
    let frac = if c1 > c0 { (u - c0) / (c1 - c0) } else { T::zero() };
    axis.node(k - 1) + frac * axis.step()
}

fn w2_squared_by_quantiles<T: Real>(rho: &DensityGrid<T>, nu: &DensityGrid<T>, points: usize) -> T {
    let (cr, cn) = (cdf_nodes(rho), cdf_nodes(nu));
    let axis = &rho.axes[0];
    let q = T::of_usize(points);
    (0..points)
        .map(|i| {
            let u = (T::of_usize(i) + T::half()) / q;
            let gap = quantile(axis, &cr, u) - quantile(axis, &cn, u);
            gap * gap
        })
        .sum::<T>()
        / q
}

/// `W_2` via `int_0^1 (F_rho^{-1}(u) - F_nu^{-1}(u))^2 du` with midpoint quantile points.
pub fn w2_1d<T: Real>(rho: &DensityGrid<T>, nu: &DensityGrid<T>, quantile_points: usize) -> Result<DivergenceReport<T>> {
    rho.same_grid(nu)?;
    if rho.dim() != 1 {
        return Err(Error::InvalidParameter("W2 by quantiles needs 1-d grids".into()));
    }
    if rho.mass() <= T::zero() || nu.mass() <= T::zero() {
        return Err(Error::NonFinite("density with zero mass".into()));
    }
    let points = quantile_points.max(2);
    let full = w2_squared_by_quantiles(rho, nu, points).sqrt();
    let half = w2_squared_by_quantiles(rho, nu, points / 2).sqrt();
    Ok(DivergenceReport::new(
        Metric::W2,
        None,
        full,
        Method::Quadrature,
        (full - half).abs() / T::of(3.0),
    ))
}

/// Outcome of the TV/KL/chi^2/W2 chain with each side evaluated.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct MetricChain<T> {
    pub tv: T,
    pub kl: T,
    pub chi2: T,
    pub w2: T,
    pub lambda: T,
    /// `TV <= sqrt(KL / 2)`.
    pub tv_le_kl: bool,
    /// `sqrt(KL / 2) <= sqrt(chi^2 / 2)`.
    pub kl_le_chi2: bool,
    /// `W2^2 / (2 lambda) <= chi^2`.
    pub w2_le_chi2: bool,
}

impl<T: Real> MetricChain<T> {
    /// Checks the chain on already-computed values with slack `1e-9`.
    pub fn from_values(tv: T, kl: T, chi2: T, w2: T, lambda: T) -> Self {
        let slack = T::of(1e-9);
        let half_kl = (T::half() * kl.max(T::zero())).sqrt();
        let half_chi = (T::half() * chi2.max(T::zero())).sqrt();
        Self {
            tv,
            kl,
            chi2,
            w2,
            lambda,
            tv_le_kl: tv <= half_kl + slack,
            kl_le_chi2: half_kl <= half_chi + slack,
            w2_le_chi2: w2 * w2 / (T::two() * lambda) <= chi2 + slack,
        }
    }

    pub fn all_hold(&self) -> bool {
        self.tv_le_kl && self.kl_le_chi2 && self.w2_le_chi2
    }
}

pub fn check_metric_chain<T: Real>(rho: &DensityGrid<T>, nu: &DensityGrid<T>, lambda: T) -> Result<MetricChain<T>> {
    if !(lambda > T::zero()) {
        return Err(Error::InvalidParameter("lambda must be positive".into()));
    }
    let tv = quadrature_divergence(rho, nu, Metric::Tv, None)?.value;
    let kl = quadrature_divergence(rho, nu, Metric::Kl, None)?.value;
    let chi2 = quadrature_divergence(rho, nu, Metric::Chi2, None)?.value;
    let w2 = w2_1d(rho, nu, 4096)?.value;
    Ok(MetricChain::from_values(tv, kl, chi2, w2, lambda))
}

/// Histogram with bin-center registration.
#[derive(Debug, Clone)]
pub struct Histogram<T> {
    /// Normalized density at the bin centers.
    pub density: DensityGrid<T>,
    pub counts: Vec<u64>,
    /// Samples that fell inside the range box.
    pub inside: u64,
    /// Fraction of samples clipped by the range box.
    pub clipped_fraction: f64,
    /// Bin widths per axis.
    pub widths: Vec<T>,
}

/// Bins samples (dimension 1 or 2) into `resolution` bins per axis over `ranges`.
pub fn histogram_density<T: Real>(samples: &[Vec<T>], ranges: &[(T, T)], resolution: usize) -> Result<Histogram<T>> {
    let d = ranges.len();
    if d == 0 || d > 2 {
        return Err(Error::InvalidParameter("histograms are 1- or 2-dimensional".into()));
    }
    if resolution < 16 {
        return Err(Error::InvalidParameter("need at least 16 bins per axis".into()));
    }
    if samples.is_empty() {
        return Err(Error::EmptyData);
    }
    let widths: Vec<T> = ranges
        .iter()
        .map(|&(lo, hi)| (hi - lo) / T::of_usize(resolution))
        .collect();
    let mut counts = vec![0u64; resolution.pow(d as u32)];
    let mut inside = 0u64;
    for s in samples {
        if s.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: s.len() });
        }
        let mut flat = 0usize;
        let mut ok = true;
        for ((&v, &(lo, hi)), &w) in s.iter().zip(ranges).zip(&widths) {
            if !(v >= lo && v <= hi) {
                ok = false;
                break;
            }
            let b = ((v - lo) / w).floor().to_usize().unwrap_or(0).min(resolution - 1);
            flat = flat * resolution + b;
        }
        if ok {
            counts[flat] += 1;
            inside += 1;
        }
    }
    if inside == 0 {
        return Err(Error::InvalidParameter("all samples fall outside the histogram range".into()));
    }
    let axes = ranges
        .iter()
        .zip(&widths)
        .map(|(&(lo, hi), &w)| Axis::new(lo + T::half() * w, hi - T::half() * w, resolution))
        .collect::<Result<Vec<_>>>()?;
    let cell: T = widths.iter().copied().fold(T::one(), |a, w| a * w);
    let n = T::of(inside as f64);
    let values = counts.iter().map(|&c| T::of(c as f64) / (n * cell)).collect();
    let raw = DensityGrid::new(axes, values)?;
    Ok(Histogram {
        density: normalize(&raw)?,
        counts,
        inside,
        clipped_fraction: 1.0 - inside as f64 / samples.len() as f64,
        widths,
    })
}

/// `nu` evaluated at the histogram's bin centers, normalized on the same grid.
pub fn reference_on_histogram<T: Real>(hist: &Histogram<T>, nu: impl Fn(&[T]) -> T) -> Result<DensityGrid<T>> {
    let axes = hist.density.axes.clone();
    let values = match axes.as_slice() {
        [a] => (0..a.n).map(|i| nu(&[a.node(i)])).collect(),
        [a, b] => {
            let mut v = Vec::with_capacity(a.n * b.n);
            for i in 0..a.n {
                for j in 0..b.n {
                    v.push(nu(&[a.node(i), b.node(j)]));
                }
            }
            v
        }
        _ => unreachable!("histograms are 1- or 2-dimensional"),
    };
    normalize(&DensityGrid::new(axes, values)?)
}

/// Bin-level chi^2 estimate `sum c_i (c_i - 1) / (n (n - 1) q_i) - 1`, where
/// `q_i` are reference bin probabilities. Unlike the plug-in `sum p_i^2 / q_i - 1`
/// it has no `(bins - 1)/n` upward bias.
pub fn chi2_from_counts(counts: &[u64], q: &[f64]) -> Result<f64> {
    if counts.len() != q.len() {
        return Err(Error::DimensionMismatch {
            expected: q.len(),
            got: counts.len(),
        });
    }
    let n: u64 = counts.iter().sum();
    if n < 2 {
        return Err(Error::EmptyData);
    }
    let nf = n as f64;
    let mut acc = 0.0;
    for (index, (&c, &qi)) in counts.iter().zip(q).enumerate() {
        if c == 0 {
            continue;
        }
        if qi < 1e-300 {
            return Err(Error::SupportViolation { index });
        }
        let cf = c as f64;
        acc += cf * (cf - 1.0) / qi;
    }
    Ok(acc / (nf * (nf - 1.0)) - 1.0)
}

/// Empirical chi^2 of 1-d samples against a reference density, with a bootstrap standard error.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct EmpiricalChi2 {
    pub value: f64,
    /// `sum p_i^2 / q_i - 1` on the same bins, for reference.
    pub plug_in: f64,
    pub bootstrap_se: f64,
    pub resamples: usize,
}

pub fn empirical_chi2_1d(
    samples: &[f64],
    range: (f64, f64),
    bins: usize,
    reference: impl Fn(f64) -> f64,
    resamples: usize,
    seed: u64,
) -> Result<EmpiricalChi2> {
    let rows: Vec<Vec<f64>> = samples.iter().map(|&x| vec![x]).collect();
    let hist = histogram_density(&rows, &[range], bins)?;
    empirical_chi2(&hist, |x| reference(x[0]), resamples, seed)
}

/// Bias-corrected chi^2 of a histogram against `reference` (any normalization),
/// whose bin probabilities are taken at bin centers.
pub fn empirical_chi2(
    hist: &Histogram<f64>,
    reference: impl Fn(&[f64]) -> f64,
    resamples: usize,
    seed: u64,
) -> Result<EmpiricalChi2> {
    let q = reference_on_histogram(hist, reference)?.values;
    let total: f64 = q.iter().sum();
    let q: Vec<f64> = q.iter().map(|v| v / total).collect();
    let bins = q.len();
    let value = chi2_from_counts(&hist.counts, &q)?;
    let n = hist.inside as f64;
    let plug_in = hist
        .counts
        .iter()
        .zip(&q)
        .map(|(&c, &qi)| if c == 0 { 0.0 } else { (c as f64 / n).powi(2) / qi })
        .sum::<f64>()
        - 1.0;

    // Bootstrap by resampling the binned data.
    let bin_of: Vec<usize> = hist
        .counts
        .iter()
        .enumerate()
        .flat_map(|(b, &c)| std::iter::repeat(b).take(c as usize))
        .collect();
    let stream = Stream::new(seed, 0xb007);
    let reps: Vec<f64> = (0..resamples as u64)
        .into_par_iter()
        .map(|r| {
            let mut counts = vec![0u64; bins];
            for i in 0..bin_of.len() as u64 {
                counts[bin_of[stream.below(r, i, bin_of.len() as u64) as usize]] += 1;
            }
            chi2_from_counts(&counts, &q)
        })
        .collect::<Result<Vec<f64>>>()?;
    let bootstrap_se = if reps.len() > 1 {
        let mean = reps.iter().sum::<f64>() / reps.len() as f64;
        (reps.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (reps.len() - 1) as f64).sqrt()
    } else {
        f64::NAN
    };
    Ok(EmpiricalChi2 {
        value,
        plug_in,
        bootstrap_se,
        resamples,
    })
}
