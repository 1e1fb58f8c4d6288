//! Closed-form laws and divergences for isotropic Gaussians against the unit
//! Gaussian target `N(0, I)`.
//!
//! For `f = |x|^2/2` the diffusion is an Ornstein–Uhlenbeck process, the LMC
//! chain started from `N(0, s0 I)` stays Gaussian with variance
//! `s_{k+1} = (1 - eta)^2 s_k + 2 eta`, and the frozen-drift interpolation
//! inside step `k` has variance `(1 - t)^2 s_k + 2t`.

use crate::error::{Error, Result};
use crate::potentials::PotentialSpec;
use crate::scalar::{norm2, ExactField, Real};

/// `N(mean, sigma2 I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianLaw<T> {
    pub mean: Vec<T>,
    pub sigma2: T,
}

impl<T: Real> GaussianLaw<T> {
    pub fn centered(d: usize, sigma2: T) -> Result<Self> {
        Self::new(vec![T::zero(); d], sigma2)
    }

    pub fn new(mean: Vec<T>, sigma2: T) -> Result<Self> {
        if mean.is_empty() {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        if !(sigma2 > T::zero() && sigma2.is_finite()) {
            return Err(Error::InvalidParameter(format!("variance must be positive, got {sigma2}")));
        }
        Ok(Self { mean, sigma2 })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn shift2(&self) -> T {
        norm2(&self.mean)
    }
}

fn check_positive<T: Real>(name: &str, v: T) -> Result<()> {
    if v > T::zero() && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")))
    }
}

fn check_step<T: Real>(eta: T) -> Result<()> {
    if eta > T::zero() && eta < T::one() {
        Ok(())
    } else {
        Err(Error::Domain(format!("step size must lie in (0, 1), got {eta}")))
    }
}

/// Variance of the OU process at time `t` from variance `sigma2_0`.
pub fn ou_variance<T: Real>(sigma2_0: T, t: T) -> Result<T> {
    check_positive("sigma2_0", sigma2_0)?;
    if !(t >= T::zero()) {
        return Err(Error::InvalidParameter(format!("time must be non-negative, got {t}")));
    }
    let decay = (-T::two() * t).exp();
    Ok(decay * sigma2_0 - (-T::two() * t).exp_m1())
}

/// Law of the OU process at time `t` started from `law`; the mean decays as `e^{-t}`.
pub fn ou_law<T: Real>(law: &GaussianLaw<T>, t: T) -> Result<GaussianLaw<T>> {
    let sigma2 = ou_variance(law.sigma2, t)?;
    let decay = (-t).exp();
    GaussianLaw::new(law.mean.iter().map(|&m| m * decay).collect(), sigma2)
}

/// `(1 - eta)^{2k} s0 + (1 - (1 - eta)^{2k}) / (1 - eta/2)`.
pub fn lmc_variance<T: Real>(sigma2_0: T, eta: T, k: u64) -> Result<T> {
    check_step(eta)?;
    let q = (T::one() - eta).powi(2);
    let qk = if k <= i32::MAX as u64 {
        q.powi(k as i32)
    } else {
        q.powf(T::of(k as f64))
    };
    Ok(qk * sigma2_0 + (T::one() - qk) / (T::one() - T::half() * eta))
}

/// [`lmc_variance`] in an exact field.
pub fn lmc_variance_exact<F: ExactField>(sigma2_0: &F, eta: &F, k: usize) -> Result<F> {
    if !(*eta > F::zero() && *eta < F::one()) {
        return Err(Error::Domain("step size must lie in (0, 1)".into()));
    }
    let one = F::one();
    let q = (one.clone() - eta.clone()).powu(2);
    let qk = q.powu(k);
    let fixed = one.clone() / (one.clone() - eta.clone() / (one.clone() + one.clone()));
    Ok(qk.clone() * sigma2_0.clone() + (one - qk) * fixed)
}

/// The stationary variance `1 / (1 - eta/2)` of the Gaussian LMC chain.
pub fn lmc_fixed_point<T: Real>(eta: T) -> Result<T> {
    check_step(eta)?;
    Ok((T::one() - T::half() * eta).recip())
}

/// Variance of the interpolation process at time `horizon = k eta + t`, `0 <= t < eta`.
pub fn interpolation_variance<T: Real>(sigma2_0: T, eta: T, horizon: T) -> Result<T> {
    check_step(eta)?;
    if !(horizon >= T::zero()) {
        return Err(Error::InvalidParameter(format!("time must be non-negative, got {horizon}")));
    }
    let mut k = (horizon / eta).floor();
    // Guard against k eta landing just above the horizon in floating point.
    if k * eta > horizon {
        k = k - T::one();
    }
    let t = horizon - k * eta;
    let sk = lmc_variance(sigma2_0, eta, k.to_u64().unwrap_or(u64::MAX))?;
    Ok((T::one() - t).powi(2) * sk + T::two() * t)
}

/// `E_rho[(rho/nu)^2] = 1 / ((3/s - 2)^{d/2} s^{3d/2})` for `rho = N(0, s I)`, finite for `s < 3/2`.
pub fn squared_ratio_moment<T: Real>(sigma2: T, d: usize) -> Result<T> {
    check_positive("sigma2", sigma2)?;
    if sigma2 >= T::of(1.5) {
        return Err(Error::Domain(format!("moment is infinite for sigma2 = {sigma2} >= 3/2")));
    }
    let half_d = T::of_usize(d) * T::half();
    // Same quantity as ((3 - 2s) s^2)^{-d/2}, which avoids s^{3d/2} overflow.
    let base = (T::of(3.0) - T::two() * sigma2) * sigma2 * sigma2;
    Ok((-half_d * base.ln()).exp())
}

/// [`squared_ratio_moment`] in an exact field; `d` must be even so the power is integral.
pub fn squared_ratio_moment_exact<F: ExactField>(sigma2: &F, d: usize) -> Result<F> {
    if d % 2 != 0 {
        return Err(Error::Domain("exact evaluation needs even dimension".into()));
    }
    let three = F::ratio(3, 1);
    let two = F::ratio(2, 1);
    if !(*sigma2 > F::zero()) || *sigma2 >= F::ratio(3, 2) {
        return Err(Error::Domain("moment requires 0 < sigma2 < 3/2".into()));
    }
    let base = (three - two * sigma2.clone()) * sigma2.clone() * sigma2.clone();
    Ok(F::one() / base.powu(d / 2))
}

/// `chi^2(N(mu, s I) || N(0, I)) = (s (2 - s))^{-d/2} e^{|mu|^2 / (2 - s)} - 1`.
pub fn chi2_isotropic<T: Real>(sigma2: T, d: usize, shift2: T) -> Result<T> {
    check_positive("sigma2", sigma2)?;
    if sigma2 >= T::two() {
        return Err(Error::Domain(format!("chi-squared is infinite for sigma2 = {sigma2} >= 2")));
    }
    let half_d = T::of_usize(d) * T::half();
    let log_f2 = -half_d * (sigma2 * (T::two() - sigma2)).ln() + shift2 / (T::two() - sigma2);
    Ok(log_f2.exp_m1())
}

/// `KL(N(mu, s I) || N(0, I)) = (d/2)(s - 1 - ln s) + |mu|^2 / 2`.
pub fn kl_gaussian<T: Real>(sigma2: T, d: usize, shift2: T) -> Result<T> {
    check_positive("sigma2", sigma2)?;
    Ok(T::of_usize(d) * T::half() * (sigma2 - T::one() - sigma2.ln()) + T::half() * shift2)
}

/// `W_2^2` between `N(mu1, s1 I)` and `N(mu2, s2 I)` with `|mu1 - mu2|^2 = shift2`.
pub fn w2_squared_gaussian<T: Real>(sigma2_1: T, sigma2_2: T, d: usize, shift2: T) -> Result<T> {
    check_positive("sigma2_1", sigma2_1)?;
    check_positive("sigma2_2", sigma2_2)?;
    let gap = sigma2_1.sqrt() - sigma2_2.sqrt();
    Ok(shift2 + T::of_usize(d) * gap * gap)
}

/// Rényi divergence between `N(x, s I)` and `N(0, s I)`: `alpha |x|^2 / (2 s)`.
pub fn renyi_mean_shift<T: Real>(alpha: T, shift2: T, sigma2: T) -> Result<T> {
    if !(alpha > T::one()) {
        return Err(Error::InvalidParameter(format!("Renyi order must exceed 1, got {alpha}")));
    }
    check_positive("sigma2", sigma2)?;
    Ok(alpha * shift2 / (T::two() * sigma2))
}

/// `R_alpha(N(mu, s I) || N(0, I))`; finite when `alpha/s - (alpha - 1) > 0`.
pub fn renyi_isotropic<T: Real>(alpha: T, sigma2: T, d: usize, shift2: T) -> Result<T> {
    if !(alpha > T::one()) {
        return Err(Error::InvalidParameter(format!("Renyi order must exceed 1, got {alpha}")));
    }
    check_positive("sigma2", sigma2)?;
    let a = alpha / sigma2 - (alpha - T::one());
    if !(a > T::zero()) {
        return Err(Error::Domain(format!("R_{alpha} is infinite for sigma2 = {sigma2}")));
    }
    let dd = T::of_usize(d);
    let log_part = -(dd * T::half()) * (alpha * sigma2.ln() + a.ln()) / (alpha - T::one());
    Ok(log_part + alpha * shift2 / (T::two() * sigma2 * a))
}

/// `C_sigma = 1 + (f(0) + |grad f(0)|^2)/d - log(sigma2 * min(1 + L, 2 pi))`.
pub fn c_sigma<T: Real>(p: &PotentialSpec<T>, lipschitz: T, sigma2: T) -> Result<T> {
    check_positive("sigma2", sigma2)?;
    check_positive("L", lipschitz)?;
    let d = p.dim();
    let origin = vec![T::zero(); d];
    let (f0, g0) = p.eval(&origin)?;
    let cap = (T::one() + lipschitz).min(T::of(std::f64::consts::TAU));
    Ok(T::one() + (f0 + norm2(&g0)) / T::of_usize(d) - (sigma2 * cap).ln())
}

/// `(C_sigma, e^{alpha d C_sigma})`: the crude bound on the initial Rényi moment
/// for `N(0, sigma2 I)` initialization, valid for `sigma2 <= 1/(1 + L)`.
pub fn init_moment_bound<T: Real>(p: &PotentialSpec<T>, lipschitz: T, sigma2: T, alpha: T) -> Result<(T, T)> {
    check_positive("L", lipschitz)?;
    if !(sigma2 > T::zero() && sigma2 <= (T::one() + lipschitz).recip()) {
        return Err(Error::Domain(format!(
            "initial variance {sigma2} outside (0, 1/(1+L)] for L = {lipschitz}"
        )));
    }
    if !(alpha >= T::two()) {
        return Err(Error::InvalidParameter(format!("moment order must be >= 2, got {alpha}")));
    }
    let c = c_sigma(p, lipschitz, sigma2)?;
    Ok((c, (alpha * T::of_usize(p.dim()) * c).exp()))
}

/// `int rho^alpha nu^{1 - alpha}` for `rho = N(0, s I)`, `nu = N(0, I)`: the
/// exact moment the crude bound controls on the Gaussian target.
pub fn gaussian_init_moment<T: Real>(sigma2: T, d: usize, alpha: T) -> Result<T> {
    let r = renyi_isotropic(alpha, sigma2, d, T::zero())?;
    Ok(((alpha - T::one()) * r).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::{build_library_potential, LibraryPotential};
    use approx::assert_relative_eq;
    use num_rational::BigRational;

    #[test]
    fn ou_examples() {
        assert_eq!(ou_variance(0.3, 0.0).unwrap(), 0.3);
        assert_relative_eq!(ou_variance(0.3, 50.0).unwrap(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(ou_variance(0.25, 0.5).unwrap(), 0.724_090_4, epsilon = 1e-7);
        assert_relative_eq!(ou_variance(0.25, 0.5).unwrap(), 1.0 - 0.75 * (-1f64).exp(), epsilon = 1e-15);
    }

    #[test]
    fn lmc_examples() {
        let s0 = 0.5 / 0.95;
        assert_eq!(lmc_variance(s0, 0.1, 0).unwrap(), s0);
        assert_relative_eq!(lmc_variance(s0, 0.1, 1).unwrap(), 0.626_315_789_5, epsilon = 1e-9);
        assert_relative_eq!(lmc_variance(s0, 0.1, 10_000).unwrap(), 1.0 / 0.95, epsilon = 1e-10);
        assert!(matches!(lmc_variance(1.0, 1.0, 3), Err(Error::Domain(_))));
        let mut s = s0;
        for k in 0..200 {
            assert_relative_eq!(lmc_variance(s0, 0.1, k).unwrap(), s, epsilon = 1e-13);
            s = 0.81 * s + 0.2;
        }
    }

    #[test]
    fn interpolation_examples() {
        let s0 = 0.5 / 0.95;
        for k in 0..20u64 {
            let at_grid = interpolation_variance(s0, 0.1, k as f64 * 0.1).unwrap();
            assert_relative_eq!(at_grid, lmc_variance(s0, 0.1, k).unwrap(), epsilon = 1e-12);
        }
        assert_relative_eq!(interpolation_variance(s0, 0.1, 0.05).unwrap(), 0.575, epsilon = 1e-12);
        let below = interpolation_variance(s0, 0.1, 0.3 - 1e-13).unwrap();
        assert_relative_eq!(below, lmc_variance(s0, 0.1, 3).unwrap(), epsilon = 1e-11);
    }

    #[test]
    fn moment_examples() {
        assert_relative_eq!(squared_ratio_moment(1.0, 7).unwrap(), 1.0, epsilon = 1e-15);
        assert_relative_eq!(squared_ratio_moment(1.2, 2).unwrap(), 1.0 / (0.5 * 1.728), epsilon = 1e-12);
        assert!(matches!(squared_ratio_moment(1.5, 1), Err(Error::Domain(_))));
        let exact = squared_ratio_moment_exact(&BigRational::ratio(6, 5), 2).unwrap();
        assert_eq!(exact, BigRational::ratio(125, 108));
        assert!(squared_ratio_moment_exact(&BigRational::ratio(6, 5), 3).is_err());
    }

    #[test]
    fn exact_variance_matches_float() {
        let s0 = BigRational::ratio(1000, 1999);
        let eta = BigRational::ratio(1, 1000);
        let e = lmc_variance_exact(&s0, &eta, 50).unwrap();
        let f = lmc_variance(1000.0 / 1999.0, 1e-3, 50).unwrap();
        assert_relative_eq!(e.approx(), f, epsilon = 1e-13);
    }

    #[test]
    fn divergence_examples() {
        assert_eq!(chi2_isotropic(1.0, 3, 0.0).unwrap(), 0.0);
        assert_relative_eq!(chi2_isotropic(0.9, 1, 0.0).unwrap(), 0.005_037_815, epsilon = 1e-9);
        assert_relative_eq!(chi2_isotropic(1.2, 2, 0.0).unwrap(), 1.0 / 0.96 - 1.0, epsilon = 1e-14);
        assert!(matches!(chi2_isotropic(2.0, 1, 0.0), Err(Error::Domain(_))));
        assert_relative_eq!(kl_gaussian(0.9, 1, 0.0).unwrap(), 0.002_680_257_8, epsilon = 1e-10);
        assert_eq!(kl_gaussian(1.0, 4, 0.0).unwrap(), 0.0);
        assert_eq!(w2_squared_gaussian(1.0, 4.0, 3, 0.0).unwrap(), 3.0);
        assert_eq!(w2_squared_gaussian(2.0, 2.0, 3, 0.0).unwrap(), 0.0);
        assert_eq!(renyi_mean_shift(2.0, 1.0, 1.0).unwrap(), 1.0);
        assert_eq!(renyi_mean_shift(2.0, 0.0, 1.0).unwrap(), 0.0);
        assert_eq!(renyi_mean_shift(3.0, 2.0, 0.5).unwrap(), 6.0);
        assert!(renyi_mean_shift(1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn renyi_two_is_log_one_plus_chi2() {
        for &(s, m) in &[(0.5f64, 0.0f64), (0.9, 0.3), (1.3, 1.0)] {
            let r2 = renyi_isotropic(2.0, s, 3, m).unwrap();
            let chi = chi2_isotropic(s, 3, m).unwrap();
            assert_relative_eq!(r2, chi.ln_1p(), epsilon = 1e-12);
        }
        assert_relative_eq!(renyi_isotropic(2.5, 1.0, 2, 0.8).unwrap(), renyi_mean_shift(2.5, 0.8, 1.0).unwrap());
    }

    #[test]
    fn c_sigma_examples() {
        let g = build_library_potential(LibraryPotential::<f64>::Gaussian { dim: 1 }).unwrap();
        let (c, bound) = init_moment_bound(&g, 1.0, 0.25, 2.0).unwrap();
        assert_relative_eq!(c, 2.612_085_713_764_618, epsilon = 1e-12);
        assert_relative_eq!(bound, (2.0 * c).exp(), epsilon = 1e-9);
        assert!(init_moment_bound(&g, 1.0, 0.6, 2.0).is_err());
        for alpha in [2.0, 3.0] {
            for s in [0.1, 0.25, 0.4] {
                let exact = gaussian_init_moment(s, 1, alpha).unwrap();
                let (_, bound) = init_moment_bound(&g, 1.0, s, alpha).unwrap();
                assert!(exact <= bound, "alpha={alpha} s={s}");
            }
        }
    }
}
