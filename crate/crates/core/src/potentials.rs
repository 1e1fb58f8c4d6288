//! Potentials `f` with hand-coded gradients, and the library of target families.
//!
//! Potentials are stored up to an additive constant. The Gaussian and
//! Gaussian-mixture families include their normalizing constant so that
//! `exp(-f)` is a probability density; the others do not.

use std::fmt;
use std::io::Read;
use std::path::Path;
use std::sync::Arc;

use crate::certificates::{Certificate, Certified};
use crate::error::{Error, Result};
use crate::lsi::CurvatureProfile;
use crate::numerics::symmetric_eigenvalues;
use crate::rng::Stream;
use crate::scalar::{dot, norm, norm2, Real};

/// LSI constant quoted for the canonical cosine example.
pub const COSINE_STATED_LSI: f64 = 148.413_159_102_576_6; // e^5

/// A differentiable potential on `R^d`.
pub trait Potential<T: Real>: Send + Sync {
    fn dim(&self) -> usize;

    fn value(&self, x: &[T]) -> T;

    /// Writes `grad f(x)` into `out` (length `dim`).
    fn gradient(&self, x: &[T], out: &mut [T]);
}

/// Curvature information a recipe in [`crate::lsi`] can turn into an LSI bound.
#[derive(Clone, Debug)]
pub enum CurvatureInfo<T: Real> {
    /// `Hess f >= m I` everywhere.
    StronglyConvex { m: T },
    /// `f = f_sc + f_p` with `f_sc` m0-strongly convex and `f_p` bounded by `bound`.
    BoundedPerturbation { m0: T, bound: T },
    /// `Hess f >= m0 I` outside the ball of radius `r`, `>= -k I` inside.
    ConvexOutsideBall { m0: T, k: T, r: T },
    /// `inf_{|x| >= r} Hess f >= m0(r) I`.
    Profile(CurvatureProfile<T>),
}

/// Constants known in closed form for a potential. Every field is optional.
#[derive(Clone, Debug)]
pub struct KnownConstants<T: Real> {
    pub lipschitz: Option<T>,
    pub m: Option<T>,
    pub b: Option<T>,
    pub lambda: Option<T>,
    pub minimizer: Option<Vec<T>>,
    pub curvature: Option<CurvatureInfo<T>>,
}

impl<T: Real> Default for KnownConstants<T> {
    fn default() -> Self {
        Self {
            lipschitz: None,
            m: None,
            b: None,
            lambda: None,
            minimizer: None,
            curvature: None,
        }
    }
}

/// A potential together with its label and whatever constants are known analytically.
#[derive(Clone)]
pub struct PotentialSpec<T: Real> {
    inner: Arc<dyn Potential<T>>,
    label: String,
    known: KnownConstants<T>,
}

impl<T: Real> fmt::Debug for PotentialSpec<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PotentialSpec")
            .field("label", &self.label)
            .field("dim", &self.dim())
            .field("known", &self.known)
            .finish()
    }
}

impl<T: Real> PotentialSpec<T> {
    pub fn new(
        label: impl Into<String>,
        potential: impl Potential<T> + 'static,
        known: KnownConstants<T>,
    ) -> Self {
        Self {
            inner: Arc::new(potential),
            label: label.into(),
            known,
        }
    }

    pub fn dim(&self) -> usize {
        self.inner.dim()
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn known(&self) -> &KnownConstants<T> {
        &self.known
    }

    pub fn with_known(mut self, known: KnownConstants<T>) -> Self {
        self.known = known;
        self
    }

    /// Unchecked value; callers guarantee `x.len() == dim`.
    #[inline]
    pub fn value_at(&self, x: &[T]) -> T {
        self.inner.value(x)
    }

    /// Unchecked gradient; callers guarantee matching lengths.
    #[inline]
    pub fn gradient_into(&self, x: &[T], out: &mut [T]) {
        self.inner.gradient(x, out)
    }

    pub fn gradient_at(&self, x: &[T]) -> Vec<T> {
        let mut g = vec![T::zero(); self.dim()];
        self.inner.gradient(x, &mut g);
        g
    }

    /// Checked evaluation returning `(f(x), grad f(x))`.
    pub fn eval(&self, x: &[T]) -> Result<(T, Vec<T>)> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("input point".into()));
        }
        Ok((self.value_at(x), self.gradient_at(x)))
    }
}

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

/// Regression/classification rows: `features[i]` has length `dim`, `labels[i]` is the response.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<T> {
    pub features: Vec<Vec<T>>,
    pub labels: Vec<T>,
}

impl<T: Real> Dataset<T> {
    pub fn new(features: Vec<Vec<T>>, labels: Vec<T>) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::EmptyData);
        }
        if features.len() != labels.len() {
            return Err(Error::Dataset(format!(
                "{} feature rows but {} labels",
                features.len(),
                labels.len()
            )));
        }
        let d = features[0].len();
        if d == 0 {
            return Err(Error::Dataset("rows have no features".into()));
        }
        if let Some(bad) = features.iter().find(|r| r.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: bad.len(),
            });
        }
        Ok(Self { features, labels })
    }

    pub fn dim(&self) -> usize {
        self.features[0].len()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Reads CSV with header `feature_1,...,feature_d,label`.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let ncol = headers.len();
        if ncol < 2 {
            return Err(Error::Dataset("need at least one feature and a label column".into()));
        }
        for (j, h) in headers.iter().take(ncol - 1).enumerate() {
            let want = format!("feature_{}", j + 1);
            if h.trim() != want {
                return Err(Error::Dataset(format!("column {} is `{}`, expected `{}`", j + 1, h, want)));
            }
        }
        if headers[ncol - 1].trim() != "label" {
            return Err(Error::Dataset(format!("last column is `{}`, expected `label`", &headers[ncol - 1])));
        }
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != ncol {
                return Err(Error::Dataset(format!("row {} has {} fields", line + 2, rec.len())));
            }
            let parse = |s: &str| -> Result<T> {
                let v: f64 = s
                    .trim()
                    .parse()
                    .map_err(|_| Error::Dataset(format!("row {}: cannot parse `{}`", line + 2, s)))?;
                Ok(T::of(v))
            };
            let row = rec.iter().take(ncol - 1).map(parse).collect::<Result<Vec<T>>>()?;
            features.push(row);
            labels.push(parse(&rec[ncol - 1])?);
        }
        Self::new(features, labels)
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(file)
    }

    /// `V^T V / n`.
    fn covariance(&self) -> Vec<Vec<T>> {
        let d = self.dim();
        let n = T::of_usize(self.len());
        let mut s = vec![vec![T::zero(); d]; d];
        for row in &self.features {
            for i in 0..d {
                for j in 0..d {
                    s[i][j] += row[i] * row[j];
                }
            }
        }
        for r in s.iter_mut() {
            for v in r.iter_mut() {
                *v /= n;
            }
        }
        s
    }
}

// ---------------------------------------------------------------------------
// Library families
// ---------------------------------------------------------------------------

/// Parameters for each family in the potential library.
#[derive(Clone, Debug)]
pub enum LibraryPotential<T: Real> {
    /// `|x|^2/2 + (d/2) log 2 pi`.
    Gaussian { dim: usize },
    /// `|x|^2/2 + (5/4) cos |x|`.
    CosineCanonical { dim: usize },
    /// Equal mixture of `N(a, I)` and `N(-a, I)`.
    GaussianMixture { separation: Vec<T> },
    /// Logistic regression posterior with ridge weight `alpha` (prior precision `alpha * V^T V / n`).
    BayesLogistic { data: Dataset<T>, alpha: T },
    /// `log(1 + |x|^2)/2 + alpha |x|^2 / 2`.
    StudentTRidge { dim: usize, alpha: T },
    /// `-log(beta + exp(-|x|^2))/2 + alpha |x|^2/2`, or its regression form when `data` is given.
    CorruptedRegression {
        dim: usize,
        alpha: T,
        beta: T,
        data: Option<Dataset<T>>,
    },
}

pub fn build_library_potential<T: Real>(kind: LibraryPotential<T>) -> Result<PotentialSpec<T>> {
    match kind {
        LibraryPotential::Gaussian { dim } => {
            check_dim(dim)?;
            Ok(gaussian(dim))
        }
        LibraryPotential::CosineCanonical { dim } => {
            check_dim(dim)?;
            cosine_canonical(dim)
        }
        LibraryPotential::GaussianMixture { separation } => {
            check_dim(separation.len())?;
            gaussian_mixture(separation)
        }
        LibraryPotential::BayesLogistic { data, alpha } => {
            positive("alpha", alpha)?;
            bayes_logistic(data, alpha)
        }
        LibraryPotential::StudentTRidge { dim, alpha } => {
            check_dim(dim)?;
            positive("alpha", alpha)?;
            Ok(student_t_ridge(dim, alpha))
        }
        LibraryPotential::CorruptedRegression {
            dim,
            alpha,
            beta,
            data,
        } => {
            check_dim(dim)?;
            positive("alpha", alpha)?;
            positive("beta", beta)?;
            match data {
                None => corrupted_radial(dim, alpha, beta),
                Some(data) => {
                    if data.dim() != dim {
                        return Err(Error::DimensionMismatch {
                            expected: dim,
                            got: data.dim(),
                        });
                    }
                    corrupted_regression(data, alpha, beta)
                }
            }
        }
    }
}

fn check_dim(dim: usize) -> Result<()> {
    if dim == 0 {
        Err(Error::InvalidParameter("dimension must be positive".into()))
    } else {
        Ok(())
    }
}

fn positive<T: Real>(name: &str, v: T) -> Result<()> {
    if v > T::zero() && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be positive and finite, got {v}")))
    }
}

/// `sin(r)/r`, continuous at 0.
fn sinc<T: Real>(r: T) -> T {
    if r.abs() < T::of(1e-4) {
        let r2 = r * r;
        T::one() - r2 / T::of(6.0) + r2 * r2 / T::of(120.0)
    } else {
        r.sin() / r
    }
}

/// `log(1 + e^z)` without overflow.
fn softplus<T: Real>(z: T) -> T {
    if z > T::zero() {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid<T: Real>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// `log cosh z` without overflow.
fn log_cosh<T: Real>(z: T) -> T {
    let a = z.abs();
    a + (-T::two() * a).exp().ln_1p() - T::of(std::f64::consts::LN_2)
}

#[derive(Debug, Clone)]
struct Gaussian {
    dim: usize,
}

impl<T: Real> Potential<T> for Gaussian {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[T]) -> T {
        T::half() * norm2(x) + T::of_usize(self.dim) * T::half() * T::of(std::f64::consts::TAU).ln()
    }

    fn gradient(&self, x: &[T], out: &mut [T]) {
        out.copy_from_slice(x);
    }
}

fn gaussian<T: Real>(dim: usize) -> PotentialSpec<T> {
    let one = T::one();
    PotentialSpec::new(
        "gaussian",
        Gaussian { dim },
        KnownConstants {
            lipschitz: Some(one),
            m: Some(one),
            b: Some(T::zero()),
            lambda: Some(one),
            minimizer: Some(vec![T::zero(); dim]),
            curvature: Some(CurvatureInfo::StronglyConvex { m: one }),
        },
    )
}

/// `amplitude * cos |x|`: the bounded perturbation inside the cosine example.
#[derive(Debug, Clone)]
pub struct CosineBump<T> {
    pub dim: usize,
    pub amplitude: T,
}

impl<T: Real> Potential<T> for CosineBump<T> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[T]) -> T {
        self.amplitude * norm(x).cos()
    }

    fn gradient(&self, x: &[T], out: &mut [T]) {
        let s = -self.amplitude * sinc(norm(x));
        for (o, &xi) in out.iter_mut().zip(x) {
            *o = s * xi;
        }
    }
}

#[derive(Debug, Clone)]
struct Cosine<T> {
    dim: usize,
    amplitude: T,
}

impl<T: Real> Potential<T> for Cosine<T> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[T]) -> T {
        T::half() * norm2(x) + self.amplitude * norm(x).cos()
    }

    fn gradient(&self, x: &[T], out: &mut [T]) {
        // x (1 - a sin(r)/r); the r -> 0 limit is x (1 - a), which is 0 at the origin.
        let s = T::one() - self.amplitude * sinc(norm(x));
        for (o, &xi) in out.iter_mut().zip(x) {
            *o = s * xi;
        }
    }
}

fn cosine_canonical<T: Real>(dim: usize) -> Result<PotentialSpec<T>> {
    let amplitude = T::of(1.25);
    let split = PerturbationSpec::new(
        gaussian(dim),
        PotentialSpec::new("cosine_bump", CosineBump { dim, amplitude }, KnownConstants::default()),
        amplitude,
    )?;
    let cert = derive_perturbation_constants(&split)?;
    Ok(PotentialSpec::new(
        "cosine_canonical",
        Cosine { dim, amplitude },
        KnownConstants {
            lipschitz: Some(cert.lipschitz.value),
            m: Some(cert.m.value),
            b: Some(cert.b.value),
            lambda: Some(cert.lambda.value),
            minimizer: None,
            curvature: Some(CurvatureInfo::BoundedPerturbation {
                m0: T::one(),
                bound: amplitude,
            }),
        },
    ))
}

#[derive(Debug, Clone)]
struct Mixture<T> {
    a: Vec<T>,
    a2: T,
}

impl<T: Real> Potential<T> for Mixture<T> {
    fn dim(&self) -> usize {
        self.a.len()
    }

    fn value(&self, x: &[T]) -> T {
        let d = T::of_usize(self.a.len());
        T::half() * (norm2(x) + self.a2) - log_cosh(dot(&self.a, x))
            + d * T::half() * T::of(std::f64::consts::TAU).ln()
    }

    fn gradient(&self, x: &[T], out: &mut [T]) {
        let t = dot(&self.a, x).tanh();
        for ((o, &xi), &ai) in out.iter_mut().zip(x).zip(&self.a) {
            *o = xi - t * ai;
        }
    }
}

fn gaussian_mixture<T: Real>(a: Vec<T>) -> Result<PotentialSpec<T>> {
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("mixture separation must be finite".into()));
    }
    let dim = a.len();
    let a2 = norm2(&a);
    // Hess f = I - a a^T sech^2(<a,x>), eigenvalues in [1 - |a|^2, 1].
    let known = if a2 < T::one() {
        let m = T::one() - a2;
        KnownConstants {
            lipschitz: Some(T::one()),
            m: Some(m),
            b: Some(T::zero()),
            lambda: Some(m.recip()),
            minimizer: Some(vec![T::zero(); dim]),
            curvature: Some(CurvatureInfo::StronglyConvex { m }),
        }
    } else {
        // -log cosh has gradient bounded by |a|: bounded-gradient perturbation of |x|^2/2.
        let m = T::half();
        let grad_bound = a2.sqrt();
        KnownConstants {
            lipschitz: Some(T::one().max(a2 - T::one())),
            m: Some(m),
            b: Some(T::two() * grad_bound * grad_bound / m),
            ..KnownConstants::default()
        }
    };
    Ok(PotentialSpec::new("gaussian_mixture", Mixture { a, a2 }, known))
}

#[derive(Debug, Clone)]
struct Logistic<T> {
    data: Dataset<T>,
    alpha: T,
    cov: Vec<Vec<T>>,
}

impl<T: Real> Potential<T> for Logistic<T> {
    fn dim(&self) -> usize {
        self.data.dim()
    }

    fn value(&self, x: &[T]) -> T {
        let mut acc = T::zero();
        for (v, &y) in self.data.features.iter().zip(&self.data.labels) {
            let z = dot(v, x);
            acc += softplus(z) - y * z;
        }
        let quad: T = self.cov.iter().zip(x).map(|(row, &xi)| xi * dot(row, x)).sum();
        acc + T::half() * self.alpha * quad
    }

    fn gradient(&self, x: &[T], out: &mut [T]) {
        for (o, row) in out.iter_mut().zip(&self.cov) {
            *o = self.alpha * dot(row, x);
        }
        for (v, &y) in self.data.features.iter().zip(&self.data.labels) {
            let w = sigmoid(dot(v, x)) - y;
            for (o, &vi) in out.iter_mut().zip(v) {
                *o += w * vi;
            }
        }
    }
}

fn bayes_logistic<T: Real>(data: Dataset<T>, alpha: T) -> Result<PotentialSpec<T>> {
    if data.labels.iter().any(|&y| y != T::zero() && y != T::one()) {
        return Err(Error::Dataset("logistic labels must be 0 or 1".into()));
    }
    let cov = data.covariance();
    let eig = symmetric_eigenvalues(&cov);
    let (lo, hi) = (eig[0], eig[eig.len() - 1]);
    let n = T::of_usize(data.len());
    // Hess f = sum sigma'(z_i) v_i v_i^T + alpha Sigma_V, with 0 < sigma' <= 1/4.
    let lipschitz = (n / T::of(4.0) + alpha) * hi;
    let mut known = KnownConstants {
        lipschitz: Some(lipschitz),
        ..KnownConstants::default()
    };
    if lo > T::zero() {
        let m = alpha * lo;
        known.m = Some(m);
        known.b = Some(T::zero());
        known.lambda = Some(m.recip());
        known.curvature = Some(CurvatureInfo::StronglyConvex { m });
    }
    Ok(PotentialSpec::new("bayes_logistic", Logistic { data, alpha, cov }, known))
}

#[derive(Debug, Clone)]
struct StudentT<T> {
    dim: usize,
    alpha: T,
}

impl<T: Real> Potential<T> for StudentT<T> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[T]) -> T {
        let r2 = norm2(x);
        T::half() * r2.ln_1p() + T::half() * self.alpha * r2
    }

    fn gradient(&self, x: &[T], out: &mut [T]) {
        let s = (T::one() + norm2(x)).recip() + self.alpha;
        for (o, &xi) in out.iter_mut().zip(x) {
            *o = s * xi;
        }
    }
}

/// Curvature data for the Student-t ridge potential: `(m0, k, r)` of the
/// strongly-convex-outside-a-ball description with `r = 1/sqrt(alpha)`.
pub fn student_t_curvature<T: Real>(alpha: T) -> (T, T, T) {
    let r2 = alpha.recip();
    // Radial Hessian eigenvalue alpha + (1 - s^2)/(1 + s^2)^2 is smallest at s^2 = 3.
    let s2 = r2.max(T::of(3.0));
    let m0 = alpha + (T::one() - s2) / ((T::one() + s2) * (T::one() + s2));
    (m0, T::of(0.125), r2.sqrt())
}

fn student_t_ridge<T: Real>(dim: usize, alpha: T) -> PotentialSpec<T> {
    let lipschitz = alpha + T::one();
    let (m0, k, r) = student_t_curvature(alpha);
    let (m, b) = outside_ball_dissipativity(m0, lipschitz, r);
    PotentialSpec::new(
        "student_t_ridge",
        StudentT { dim, alpha },
        KnownConstants {
            lipschitz: Some(lipschitz),
            m: Some(m),
            b: Some(b),
            lambda: None,
            minimizer: Some(vec![T::zero(); dim]),
            curvature: Some(CurvatureInfo::ConvexOutsideBall { m0, k, r }),
        },
    )
}

/// Strong dissipativity `(m0/2, (2/m0)(m0 r + L r)^2)` implied by convexity outside a ball.
pub fn outside_ball_dissipativity<T: Real>(m0: T, lipschitz: T, r: T) -> (T, T) {
    let s = m0 * r + lipschitz * r;
    (T::half() * m0, T::two() / m0 * s * s)
}

/// `u / (beta e^{u^2} + 1)`: derivative of `-log(beta + e^{-u^2})/2`.
fn corrupted_slope<T: Real>(u: T, beta: T) -> T {
    u / (beta * (u * u).exp() + T::one())
}

/// Second derivative of `-log(beta + e^{-u^2})/2`.
fn corrupted_curvature<T: Real>(u: T, beta: T) -> T {
    let e = beta * (u * u).exp();
    if !e.is_finite() {
        return T::zero();
    }
    let den = e + T::one();
    (e * (T::one() - T::two() * u * u) + T::one()) / (den * den)
}

/// Location and value of the minimum of [`corrupted_curvature`] over `u >= 0`.
fn corrupted_curvature_min<T: Real>(beta: T) -> (T, T) {
    let step = 1e-3;
    let mut best = (0.0, corrupted_curvature(T::zero(), beta).to_f64_lossy());
    for i in 1..=12_000 {
        let u = i as f64 * step;
        let v = corrupted_curvature(T::of(u), beta).to_f64_lossy();
        if v < best.1 {
            best = (u, v);
        }
    }
    // Golden-section refinement around the grid minimum.
    let (mut lo, mut hi) = ((best.0 - step).max(0.0), best.0 + step);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..60 {
        let a = hi - g * (hi - lo);
        let b = lo + g * (hi - lo);
        if corrupted_curvature(T::of(a), beta) < corrupted_curvature(T::of(b), beta) {
            hi = b;
        } else {
            lo = a;
        }
    }
    let u = T::of(0.5 * (lo + hi));
    (u, corrupted_curvature(u, beta).min(T::of(best.1)))
}

/// `sup_u |u| / (beta e^{u^2} + 1)` by grid search with a small safety factor.
fn corrupted_slope_bound<T: Real>(beta: T) -> T {
    let mut best = T::zero();
    for i in 0..=12_000 {
        let u = T::of(i as f64 * 1e-3);
        best = best.max(corrupted_slope(u, beta));
    }
    best * T::of(1.0 + 1e-6)
}

/// `m0(r) = alpha + inf_{s >= r} h(s)` for the radial corrupted-noise potential.
pub fn corrupted_curvature_profile<T: Real>(alpha: T, beta: T) -> CurvatureProfile<T> {
    let (s_min, h_min) = corrupted_curvature_min(beta);
    CurvatureProfile::new("corrupted_regression", move |r: T| {
        if r <= s_min {
            alpha + h_min
        } else {
            alpha + corrupted_curvature(r, beta)
        }
    })
}

#[derive(Debug, Clone)]
struct CorruptedRadial<T> {
    dim: usize,
    alpha: T,
    beta: T,
}

impl<T: Real> Potential<T> for CorruptedRadial<T> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[T]) -> T {
        let r2 = norm2(x);
        -T::half() * (self.beta + (-r2).exp()).ln() + T::half() * self.alpha * r2
    }

    fn gradient(&self, x: &[T], out: &mut [T]) {
        let r2 = norm2(x);
        let s = (self.beta * r2.exp() + T::one()).recip() + self.alpha;
        for (o, &xi) in out.iter_mut().zip(x) {
            *o = s * xi;
        }
    }
}

fn corrupted_radial<T: Real>(dim: usize, alpha: T, beta: T) -> Result<PotentialSpec<T>> {
    let lipschitz = alpha + (T::one() + beta).recip();
    let profile = corrupted_curvature_profile(alpha, beta);
    // Pick the smallest radius on a grid whose curvature is at least alpha/2
    // and use the outside-ball dissipativity constants there.
    let mut chosen = None;
    for i in 0..=4000 {
        let r = T::of(i as f64 * 5e-3);
        let m0 = profile.eval(r);
        if m0 >= T::half() * alpha {
            chosen = Some((m0, r));
            break;
        }
    }
    let (m0, r) = chosen.ok_or_else(|| Error::InvalidParameter("curvature profile never reaches alpha/2".into()))?;
    let (m, b) = outside_ball_dissipativity(m0, lipschitz, r);
    Ok(PotentialSpec::new(
        "corrupted_regression",
        CorruptedRadial { dim, alpha, beta },
        KnownConstants {
            lipschitz: Some(lipschitz),
            m: Some(m),
            b: Some(b),
            lambda: None,
            minimizer: Some(vec![T::zero(); dim]),
            curvature: Some(CurvatureInfo::Profile(profile)),
        },
    ))
}

#[derive(Debug, Clone)]
struct CorruptedData<T> {
    data: Dataset<T>,
    alpha: T,
    beta: T,
}

impl<T: Real> Potential<T> for CorruptedData<T> {
    fn dim(&self) -> usize {
        self.data.dim()
    }

    fn value(&self, x: &[T]) -> T {
        let mut acc = T::half() * self.alpha * norm2(x);
        for (v, &y) in self.data.features.iter().zip(&self.data.labels) {
            let u = y - dot(v, x);
            acc -= T::half() * (self.beta + (-(u * u)).exp()).ln();
        }
        acc
    }

    fn gradient(&self, x: &[T], out: &mut [T]) {
        for (o, &xi) in out.iter_mut().zip(x) {
            *o = self.alpha * xi;
        }
        for (v, &y) in self.data.features.iter().zip(&self.data.labels) {
            let w = corrupted_slope(y - dot(v, x), self.beta);
            for (o, &vi) in out.iter_mut().zip(v) {
                *o -= w * vi;
            }
        }
    }
}

fn corrupted_regression<T: Real>(data: Dataset<T>, alpha: T, beta: T) -> Result<PotentialSpec<T>> {
    // alpha |x|^2/2 plus a perturbation whose value (after centring), gradient
    // and Hessian are all bounded.
    let n = T::of_usize(data.len());
    let slope = corrupted_slope_bound(beta);
    let (_, h_min) = corrupted_curvature_min(beta);
    let h_sup = h_min.abs().max((T::one() + beta).recip());
    let gram: Vec<Vec<T>> = data.covariance().into_iter().map(|r| r.into_iter().map(|v| v * n).collect()).collect();
    let gram_top = *symmetric_eigenvalues(&gram).last().expect("non-empty");
    let row_norms: T = data.features.iter().map(|v| norm(v)).sum();
    let value_half_range = T::of(0.25) * n * (beta.recip()).ln_1p();
    let bound = value_half_range.max(slope * row_norms).max(h_sup * gram_top);
    let cert = perturbation_certificate(alpha, alpha, bound);
    Ok(PotentialSpec::new(
        "corrupted_regression",
        CorruptedData { data, alpha, beta },
        KnownConstants {
            lipschitz: Some(cert.lipschitz.value),
            m: Some(cert.m.value),
            b: Some(cert.b.value),
            lambda: Some(cert.lambda.value),
            minimizer: None,
            curvature: Some(CurvatureInfo::BoundedPerturbation { m0: alpha, bound }),
        },
    ))
}

// ---------------------------------------------------------------------------
// Bounded perturbations
// ---------------------------------------------------------------------------

/// `f = base + bump` with `|bump| v |grad bump| v |Hess bump| <= bound`.
#[derive(Clone, Debug)]
pub struct PerturbationSpec<T: Real> {
    pub base: PotentialSpec<T>,
    pub bump: PotentialSpec<T>,
    pub bound: T,
}

impl<T: Real> PerturbationSpec<T> {
    /// Validates `bound` against sampled values and gradients of `bump` on `[-10, 10]^d`.
    pub fn new(base: PotentialSpec<T>, bump: PotentialSpec<T>, bound: T) -> Result<Self> {
        if !(bound >= T::zero() && bound.is_finite()) {
            return Err(Error::InvalidParameter(format!("perturbation bound must be finite and >= 0, got {bound}")));
        }
        if base.dim() != bump.dim() {
            return Err(Error::DimensionMismatch {
                expected: base.dim(),
                got: bump.dim(),
            });
        }
        let spec = Self { base, bump, bound };
        let observed = spec.sampled_sup(T::of(10.0), 1000, 0x5eed);
        if observed > bound * (T::one() + T::of(1e-9)) {
            return Err(Error::InvalidParameter(format!(
                "perturbation bound {bound} is below sampled sup {observed}"
            )));
        }
        Ok(spec)
    }

    /// Sampled `max(|bump|, |grad bump|)` over uniform points in `[-radius, radius]^d`.
    pub fn sampled_sup(&self, radius: T, samples: usize, seed: u64) -> T {
        let d = self.bump.dim();
        let stream = Stream::new(seed, 0);
        let mut x = vec![T::zero(); d];
        let mut g = vec![T::zero(); d];
        let mut sup = T::zero();
        for i in 0..samples as u64 {
            for (j, xj) in x.iter_mut().enumerate() {
                *xj = radius * T::of(2.0 * stream.uniform(i, j as u64) - 1.0);
            }
            self.bump.gradient_into(&x, &mut g);
            sup = sup.max(self.bump.value_at(&x).abs()).max(norm(&g));
        }
        sup
    }
}

fn perturbation_certificate<T: Real>(m0: T, l0: T, bound: T) -> Certificate<T> {
    let m = T::half() * m0;
    Certificate {
        lipschitz: Certified::analytic(l0 + bound),
        m: Certified::analytic(m),
        b: Certified::analytic(T::two() * bound * bound / m),
        lambda: Certified::analytic((T::two() * bound).exp() / m0),
        minimizer: None,
    }
}

/// Constants for a bounded perturbation of a strongly convex base:
/// `m = m0/2`, `b = 2B^2/m`, `L = L0 + B`, `lambda = e^{2B}/m0`.
pub fn derive_perturbation_constants<T: Real>(spec: &PerturbationSpec<T>) -> Result<Certificate<T>> {
    let known = spec.base.known();
    let m0 = known.m.ok_or(Error::MissingConstant("base m0"))?;
    let l0 = known.lipschitz.ok_or(Error::MissingConstant("base L0"))?;
    if known.b.map_or(false, |b| b != T::zero()) {
        return Err(Error::InvalidParameter("base potential must be strongly convex (b = 0)".into()));
    }
    if m0 <= T::zero() {
        return Err(Error::InvalidParameter("base m0 must be positive".into()));
    }
    Ok(perturbation_certificate(m0, l0, spec.bound))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::{PI, TAU};

    fn build(kind: LibraryPotential<f64>) -> PotentialSpec<f64> {
        build_library_potential(kind).unwrap()
    }

    #[test]
    fn gaussian_values() {
        let p = build(LibraryPotential::Gaussian { dim: 1 });
        let (v, g) = p.eval(&[2.0]).unwrap();
        assert_relative_eq!(v, 2.0 + 0.5 * TAU.ln(), epsilon = 1e-14);
        assert_eq!(g, vec![2.0]);
        let p2 = build(LibraryPotential::Gaussian { dim: 2 });
        let (v, g) = p2.eval(&[0.0, 0.0]).unwrap();
        assert_relative_eq!(v, TAU.ln(), epsilon = 1e-14);
        assert_eq!(g, vec![0.0, 0.0]);
    }

    #[test]
    fn cosine_values() {
        let p = build(LibraryPotential::CosineCanonical { dim: 1 });
        let (v, g) = p.eval(&[PI]).unwrap();
        assert_relative_eq!(v, PI * PI / 2.0 - 1.25, epsilon = 1e-12);
        assert_relative_eq!(g[0], PI, epsilon = 1e-12);
        // 0/0 at the origin resolves to the exact limit.
        let (_, g0) = p.eval(&[0.0]).unwrap();
        assert_eq!(g0, vec![0.0]);
        let known = p.known();
        assert_relative_eq!(known.m.unwrap(), 0.5);
        assert_relative_eq!(known.b.unwrap(), 6.25);
        assert_relative_eq!(known.lipschitz.unwrap(), 2.25);
        assert_relative_eq!(known.lambda.unwrap(), 2.5f64.exp(), epsilon = 1e-12);
        assert!(known.lambda.unwrap() <= COSINE_STATED_LSI);
        assert_relative_eq!(COSINE_STATED_LSI, 5f64.exp(), epsilon = 1e-12);
    }

    #[test]
    fn student_t_values() {
        let p = build(LibraryPotential::StudentTRidge { dim: 1, alpha: 0.1 });
        let (_, g) = p.eval(&[1.0]).unwrap();
        assert_relative_eq!(g[0], 0.6, epsilon = 1e-14);
        assert_relative_eq!(p.known().lipschitz.unwrap(), 1.1, epsilon = 1e-14);
        match p.known().curvature.as_ref().unwrap() {
            CurvatureInfo::ConvexOutsideBall { m0, k, r } => {
                assert_relative_eq!(*m0, 0.01 * 3.1 / 1.21, epsilon = 1e-14);
                assert_relative_eq!(*m0, 0.025_619_834_710_743_8, epsilon = 1e-12);
                assert_eq!(*k, 0.125);
                assert_relative_eq!(r * r, 10.0, epsilon = 1e-12);
            }
            other => panic!("unexpected curvature {other:?}"),
        }
    }

    #[test]
    fn perturbation_constants() {
        let mk = |bound: f64| {
            PerturbationSpec::new(
                build(LibraryPotential::Gaussian { dim: 1 }),
                PotentialSpec::new("bump", CosineBump { dim: 1, amplitude: bound }, KnownConstants::default()),
                bound,
            )
            .unwrap()
        };
        let c = derive_perturbation_constants(&mk(0.0)).unwrap();
        assert_eq!((c.m.value, c.b.value, c.lipschitz.value, c.lambda.value), (0.5, 0.0, 1.0, 1.0));
        let c = derive_perturbation_constants(&mk(1.0)).unwrap();
        assert_relative_eq!(c.m.value, 0.5);
        assert_relative_eq!(c.b.value, 4.0);
        assert_relative_eq!(c.lipschitz.value, 2.0);
        assert_relative_eq!(c.lambda.value, 7.389_056_098_930_65, epsilon = 1e-12);
        let c = derive_perturbation_constants(&mk(1.25)).unwrap();
        assert_relative_eq!(c.b.value, 6.25);
        assert_relative_eq!(c.lipschitz.value, 2.25);
        assert_relative_eq!(c.lambda.value, 12.182_493_960_703_473, epsilon = 1e-12);
    }

    #[test]
    fn perturbation_rejects_unsound_bound() {
        let r = PerturbationSpec::new(
            build(LibraryPotential::Gaussian { dim: 2 }),
            PotentialSpec::new("bump", CosineBump { dim: 2, amplitude: 2.0 }, KnownConstants::default()),
            1.0,
        );
        assert!(matches!(r, Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn perturbation_requires_base_constants() {
        let base = PotentialSpec::new("bare", Gaussian { dim: 1 }, KnownConstants::default());
        let bump = PotentialSpec::new("bump", CosineBump { dim: 1, amplitude: 0.1 }, KnownConstants::default());
        let spec = PerturbationSpec::new(base, bump, 0.1).unwrap();
        assert!(matches!(derive_perturbation_constants(&spec), Err(Error::MissingConstant(_))));
    }

    #[test]
    fn parameter_validation() {
        assert!(build_library_potential(LibraryPotential::<f64>::StudentTRidge { dim: 1, alpha: 0.0 }).is_err());
        assert!(build_library_potential(LibraryPotential::<f64>::CorruptedRegression {
            dim: 1,
            alpha: 0.1,
            beta: -1.0,
            data: None
        })
        .is_err());
        assert!(build_library_potential(LibraryPotential::<f64>::Gaussian { dim: 0 }).is_err());
        let data = Dataset::new(vec![vec![1.0, 2.0]], vec![1.0]).unwrap();
        let r = build_library_potential(LibraryPotential::CorruptedRegression {
            dim: 3,
            alpha: 0.1,
            beta: 1.0,
            data: Some(data),
        });
        assert!(matches!(r, Err(Error::DimensionMismatch { .. })));
        assert!(matches!(Dataset::<f64>::new(vec![], vec![]), Err(Error::EmptyData)));
    }

    #[test]
    fn eval_rejects_bad_points() {
        let p = build(LibraryPotential::Gaussian { dim: 2 });
        assert!(matches!(p.eval(&[1.0]), Err(Error::DimensionMismatch { expected: 2, got: 1 })));
        assert!(matches!(p.eval(&[1.0, f64::NAN]), Err(Error::NonFinite(_))));
    }

    #[test]
    fn mixture_with_zero_separation_is_gaussian() {
        let mix = build(LibraryPotential::GaussianMixture { separation: vec![0.0; 3] });
        let gau = build(LibraryPotential::Gaussian { dim: 3 });
        let s = Stream::new(11, 0);
        let mut offset = None;
        for i in 0..200 {
            let x: Vec<f64> = (0..3).map(|j| 8.0 * (s.uniform(i, j) - 0.5)).collect();
            let (v1, g1) = mix.eval(&x).unwrap();
            let (v2, g2) = gau.eval(&x).unwrap();
            let diff = v1 - v2;
            let o = *offset.get_or_insert(diff);
            assert!((diff - o).abs() < 1e-12);
            for (a, b) in g1.iter().zip(&g2) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn csv_dataset_round_trip() {
        let text = "feature_1,feature_2,label\n1.0,2.0,1\n-0.5,0.25,0\n";
        let data = Dataset::<f64>::from_csv_reader(text.as_bytes()).unwrap();
        assert_eq!(data.dim(), 2);
        assert_eq!(data.len(), 2);
        assert_eq!(data.features[1], vec![-0.5, 0.25]);
        assert_eq!(data.labels, vec![1.0, 0.0]);
        let bad = "x1,x2,label\n1,2,0\n";
        assert!(Dataset::<f64>::from_csv_reader(bad.as_bytes()).is_err());
        let ragged = "feature_1,label\n1,2,3\n";
        assert!(Dataset::<f64>::from_csv_reader(ragged.as_bytes()).is_err());
    }

    #[test]
    fn logistic_constants_bound_the_hessian() {
        let data = Dataset::new(
            vec![vec![1.0, 0.5], vec![-0.3, 1.2], vec![0.7, -0.9], vec![-1.1, -0.2]],
            vec![1.0, 0.0, 1.0, 0.0],
        )
        .unwrap();
        let p = build(LibraryPotential::BayesLogistic { data, alpha: 2.0 });
        let k = p.known();
        assert!(k.m.unwrap() > 0.0);
        assert!(k.lipschitz.unwrap() >= k.m.unwrap());
        assert_eq!(k.b, Some(0.0));
    }

    #[test]
    fn works_in_single_precision() {
        let p = build_library_potential(LibraryPotential::<f32>::StudentTRidge { dim: 2, alpha: 0.1 }).unwrap();
        let (_, g) = p.eval(&[1.0, 0.0]).unwrap();
        assert!((g[0] - 0.6).abs() < 1e-6);
    }
}
