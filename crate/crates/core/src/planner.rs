//! Step size and horizon for LMC from certified constants, with every
//! sufficient condition evaluated and reported.

use serde::Serialize;

use crate::certificates::Certificate;
use crate::error::{Error, Result};
use crate::potentials::PotentialSpec;
use crate::scalar::{norm2, Real};

/// Moment factor `beta` of the second-moment bound along the chain.
pub fn compute_beta<T: Real>(sigma2: T, x_star_norm2: T, b: T, d: usize) -> T {
    let dd = T::of_usize(d);
    let s = T::one() + b / dd;
    let quartic =
        sigma2 * sigma2 * (T::one() + T::two() / dd) + T::of(6.0) * sigma2 * x_star_norm2 / dd + x_star_norm2 * x_star_norm2 / (dd * dd);
    let quadratic = sigma2 + x_star_norm2 / dd;
    (T::one() + quartic / (s * s) + quadratic / s).sqrt()
}

/// `C_sigma = 1 + (f(0) + |grad f(0)|^2)/d - log(sigma2 * min(1 + L, 2 pi))`.
pub fn compute_c_sigma<T: Real>(f0: T, grad0_norm2: T, d: usize, sigma2: T, lipschitz: T) -> Result<T> {
    if !(sigma2 > T::zero() && sigma2 <= (T::one() + lipschitz).recip()) {
        return Err(Error::Domain(format!("sigma2 = {sigma2} outside (0, 1/(1+L)] for L = {lipschitz}")));
    }
    let cap = (T::one() + lipschitz).min(T::of(std::f64::consts::TAU));
    Ok(T::one() + (f0 + grad0_norm2) / T::of_usize(d) - (sigma2 * cap).ln())
}

/// Unspecified absolute constants of the convergence guarantees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PlannerConstants<T> {
    pub c1: T,
    pub c2: T,
    pub c3: T,
}

impl<T: Real> Default for PlannerConstants<T> {
    fn default() -> Self {
        Self {
            c1: T::one(),
            c2: T::one(),
            c3: T::one(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlannerInputs<T: Real> {
    pub cert: Certificate<T>,
    pub d: usize,
    pub sigma2: T,
    pub epsilon: T,
    pub alpha: Option<T>,
    pub constants: PlannerConstants<T>,
    pub grad0_norm2: T,
    pub f0: T,
}

impl<T: Real> PlannerInputs<T> {
    /// Reads `f(0)` and `|grad f(0)|^2` off the potential.
    pub fn from_certificate(
        p: &PotentialSpec<T>,
        cert: Certificate<T>,
        sigma2: T,
        epsilon: T,
        alpha: Option<T>,
        constants: PlannerConstants<T>,
    ) -> Result<Self> {
        let (f0, g0) = p.eval(&vec![T::zero(); p.dim()])?;
        let inp = Self {
            cert,
            d: p.dim(),
            sigma2,
            epsilon,
            alpha,
            constants,
            grad0_norm2: norm2(&g0),
            f0,
        };
        inp.validate()?;
        Ok(inp)
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.cert.lipschitz.value;
        let positive = [
            ("L", l),
            ("m", self.cert.m.value),
            ("lambda", self.cert.lambda.value),
            ("c1", self.constants.c1),
            ("c2", self.constants.c2),
            ("c3", self.constants.c3),
        ];
        for (name, v) in positive {
            if !(v > T::zero() && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if !(self.cert.b.value >= T::zero()) {
            return Err(Error::InvalidParameter(format!("b must be nonnegative, got {}", self.cert.b.value)));
        }
        if self.d == 0 {
            return Err(Error::InvalidParameter("dimension must be at least 1".into()));
        }
        if !(self.epsilon > T::zero() && self.epsilon < T::one()) {
            return Err(Error::InvalidParameter(format!("epsilon must lie in (0, 1), got {}", self.epsilon)));
        }
        if !(self.sigma2 > T::zero() && self.sigma2 < (T::one() + l).recip()) {
            return Err(Error::InvalidParameter(format!(
                "sigma2 must be < 1/(1+L) = {} and positive, got {}",
                (T::one() + l).recip(),
                self.sigma2
            )));
        }
        if let Some(a) = self.alpha {
            if !(a > T::one()) {
                return Err(Error::InvalidParameter(format!("Renyi order must exceed 1, got {a}")));
            }
        }
        Ok(())
    }

    pub fn beta(&self) -> Result<T> {
        let x2 = norm2(self.cert.minimizer()?);
        Ok(compute_beta(self.sigma2, x2, self.cert.b.value, self.d))
    }

    pub fn c_sigma(&self) -> Result<T> {
        compute_c_sigma(self.f0, self.grad0_norm2, self.d, self.sigma2, self.cert.lipschitz.value)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PlanMetric<T> {
    Chi2,
    Renyi(T),
}

impl<T: Real> PlanMetric<T> {
    fn alpha(&self) -> Option<T> {
        match *self {
            PlanMetric::Chi2 => None,
            PlanMetric::Renyi(a) => Some(a),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Condition<T> {
    pub name: &'static str,
    pub lhs: T,
    pub rhs: T,
    pub ok: bool,
}

impl<T: Real> Condition<T> {
    fn le(name: &'static str, lhs: T, rhs: T) -> Self {
        Self {
            name,
            lhs,
            rhs,
            ok: lhs <= rhs,
        }
    }
}

const HORIZON_NOTE: &str = "the accuracy guarantee covers iterate 2N; no claim is made for later iterates";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LmcPlan<T> {
    pub eta: T,
    #[serde(rename = "N")]
    pub n: u64,
    pub total_iterations: u64,
    pub beta: T,
    #[serde(rename = "C_sigma")]
    pub c_sigma: T,
    pub metric: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<T>,
    pub feasible: bool,
    /// Set when `eta` or `N` came from an override instead of the formulas.
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub untuned: bool,
    pub conditions: Vec<Condition<T>>,
    pub note: &'static str,
}

/// Shared pieces of both displays.
struct Skeleton<T> {
    beta: T,
    c_sigma: T,
    clog: T,
    log_term: T,
    bd: T,
}

fn skeleton<T: Real>(inp: &PlannerInputs<T>, metric: PlanMetric<T>) -> Result<Skeleton<T>> {
    inp.validate()?;
    let c = &inp.cert;
    let (l, m, lambda) = (c.lipschitz.value, c.m.value, c.lambda.value);
    let beta = inp.beta()?;
    let c_sigma = inp.c_sigma()?;
    let dd = T::of_usize(inp.d);
    let log_arg = match metric {
        PlanMetric::Chi2 => T::of(144.0) * dd * c_sigma / inp.epsilon,
        PlanMetric::Renyi(a) => {
            if !(a > T::one()) {
                return Err(Error::InvalidParameter(format!("Renyi order must exceed 1, got {a}")));
            }
            T::of(6.0) * a * a * dd * c_sigma / ((a - T::one()) * inp.epsilon)
        }
    };
    if !(log_arg > T::one()) {
        return Err(Error::Domain(format!("log factor argument {log_arg} must exceed 1")));
    }
    let l4 = l.powi(4);
    let clog = (lambda * lambda * l4 / (m * m)).ln().max(T::one());
    Ok(Skeleton {
        beta,
        c_sigma,
        clog,
        log_term: log_arg.ln(),
        bd: c.b.value + dd,
    })
}

fn evaluate<T: Real>(inp: &PlannerInputs<T>, metric: PlanMetric<T>, sk: &Skeleton<T>, eta: T, n: u64) -> Vec<Condition<T>> {
    let c = &inp.cert;
    let (l, m, lambda) = (c.lipschitz.value, c.m.value, c.lambda.value);
    let k = &inp.constants;
    let eps = inp.epsilon;
    let nf = T::of(n as f64);
    let alpha = metric.alpha().unwrap_or(T::one());
    let grad_cap = if inp.grad0_norm2 > T::zero() {
        T::two() / inp.grad0_norm2
    } else {
        T::infinity()
    };
    let smooth_cap = T::one().min(m) / (T::of(4.0) * T::one().max(l * l));
    let (lsi_cap, accuracy_cap) = match metric {
        PlanMetric::Chi2 => (T::half() * lambda, k.c3 / (sk.beta * lambda * l * l) * eps / sk.bd),
        PlanMetric::Renyi(a) => (
            T::two() * a * lambda / T::of(3.0),
            k.c3 / (sk.beta * lambda * l * l * a.powf(T::of(17.0 / 8.0))) * eps / sk.bd,
        ),
    };
    let kappa = c.kappa();
    let discretization =
        alpha * alpha * kappa * kappa * l * l * (sk.bd + nf.max(T::one()).ln()) * nf * eta * eta;
    vec![
        Condition::le("eta_le_gradient_at_origin", eta, grad_cap),
        Condition::le("eta_le_smoothness", eta, smooth_cap),
        Condition::le("eta_le_lsi", eta, lsi_cap),
        Condition::le("eta_le_accuracy", eta, accuracy_cap),
        Condition::le("horizon", k.c2 * alpha * lambda * sk.log_term, nf * eta),
        Condition::le("discretization", discretization, k.c1),
        Condition::le("n_at_least_two", T::two(), nf),
    ]
}

fn finish<T: Real>(
    inp: &PlannerInputs<T>,
    metric: PlanMetric<T>,
    sk: Skeleton<T>,
    eta: T,
    n: u64,
    untuned: bool,
) -> LmcPlan<T> {
    let conditions = evaluate(inp, metric, &sk, eta, n);
    LmcPlan {
        eta,
        n,
        total_iterations: 2 * n,
        beta: sk.beta,
        c_sigma: sk.c_sigma,
        metric: match metric {
            PlanMetric::Chi2 => "chi2",
            PlanMetric::Renyi(_) => "renyi",
        },
        alpha: metric.alpha(),
        feasible: eta > T::zero() && conditions.iter().all(|c| c.ok),
        untuned,
        conditions,
        note: HORIZON_NOTE,
    }
}

fn ceil_steps<T: Real>(n_real: T) -> Result<u64> {
    if !(n_real.is_finite() && n_real > T::zero()) {
        return Err(Error::NonFinite(format!("iteration count {n_real}")));
    }
    n_real
        .ceil()
        .to_u64()
        .ok_or_else(|| Error::NonFinite(format!("iteration count {n_real} overflows")))
}

/// `(eta, N_real)` from the displays for `metric`.
fn formulas<T: Real>(inp: &PlannerInputs<T>, metric: PlanMetric<T>, sk: &Skeleton<T>) -> (T, T) {
    let c = &inp.cert;
    let (l, m, lambda) = (c.lipschitz.value, c.m.value, c.lambda.value);
    let k = &inp.constants;
    let l4 = l.powi(4);
    let eta = k.c3 / sk.beta * m * m / (lambda * l4 * sk.clog) * inp.epsilon / (sk.bd * sk.log_term * sk.log_term);
    let n = k.c2 * sk.beta / k.c3 * (lambda * lambda * l4 * sk.clog / (m * m)) * (sk.bd / inp.epsilon) * sk.log_term.powi(3);
    match metric {
        PlanMetric::Chi2 => (eta, n),
        PlanMetric::Renyi(a) => (eta / a.powi(3), n * a.powi(4)),
    }
}

/// Plan targeting `chi^2(rho_{2N} | nu) <= epsilon`.
pub fn plan_chi2<T: Real>(inp: &PlannerInputs<T>) -> Result<LmcPlan<T>> {
    plan(inp, PlanMetric::Chi2)
}

/// Plan targeting `R_alpha(rho_{2N} | nu) <= epsilon`.
pub fn plan_renyi<T: Real>(inp: &PlannerInputs<T>) -> Result<LmcPlan<T>> {
    let a = inp
        .alpha
        .ok_or_else(|| Error::InvalidParameter("Renyi planning needs alpha".into()))?;
    plan(inp, PlanMetric::Renyi(a))
}

pub fn plan<T: Real>(inp: &PlannerInputs<T>, metric: PlanMetric<T>) -> Result<LmcPlan<T>> {
    let sk = skeleton(inp, metric)?;
    let (eta, n_real) = formulas(inp, metric, &sk);
    let n = ceil_steps(n_real)?;
    Ok(finish(inp, metric, sk, eta, n, false))
}

/// Evaluates the conditions at a caller-chosen `eta` and/or `N`; missing
/// values are taken from the formulas. The plan is marked untuned.
pub fn plan_with_overrides<T: Real>(
    inp: &PlannerInputs<T>,
    metric: PlanMetric<T>,
    eta: Option<T>,
    n: Option<u64>,
) -> Result<LmcPlan<T>> {
    let sk = skeleton(inp, metric)?;
    let (eta_f, n_f) = formulas(inp, metric, &sk);
    let eta = eta.unwrap_or(eta_f);
    if !(eta > T::zero() && eta.is_finite()) {
        return Err(Error::InvalidParameter(format!("step size must be positive, got {eta}")));
    }
    let n = match n {
        Some(n) => n,
        None => ceil_steps(n_f)?,
    };
    Ok(finish(inp, metric, sk, eta, n, true))
}

/// Re-evaluates the conditions from `(eta, N)` alone, ignoring any flags stored in the plan.
pub fn recheck<T: Real>(inp: &PlannerInputs<T>, metric: PlanMetric<T>, eta: T, n: u64) -> Result<Vec<Condition<T>>> {
    let sk = skeleton(inp, metric)?;
    Ok(evaluate(inp, metric, &sk, eta, n))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetMetric {
    Kl,
    Tv,
    W2,
}

/// Chi-squared accuracy that implies accuracy `epsilon` in the target metric.
pub fn translate_metric<T: Real>(target: TargetMetric, epsilon: T, lambda: T) -> T {
    match target {
        TargetMetric::Kl => epsilon,
        TargetMetric::Tv => T::two() * epsilon * epsilon,
        TargetMetric::W2 => epsilon * epsilon / (T::two() * lambda),
    }
}

/// Bound `e^{-a k} theta0 + h / a` for `theta_{j+1} <= (1 - a) theta_j + h`.
pub fn iterate_affine_recursion<T: Real>(theta0: T, a: T, h: T, k: u64) -> Result<T> {
    if !(a > T::zero() && a < T::one()) {
        return Err(Error::InvalidParameter(format!("contraction rate must lie in (0, 1), got {a}")));
    }
    if !(h >= T::zero()) {
        return Err(Error::InvalidParameter(format!("offset must be nonnegative, got {h}")));
    }
    Ok((-a * T::of(k as f64)).exp() * theta0 + h / a)
}
