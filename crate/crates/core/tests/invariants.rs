use langevin_core::certificates::{Certificate, Certified};
use langevin_core::divergence::{check_metric_chain, quadrature_divergence, DensityGrid, Metric};
use langevin_core::oracle::{chi2_isotropic, kl_gaussian, lmc_variance, renyi_isotropic};
use langevin_core::planner::{
    iterate_affine_recursion, plan, plan_chi2, recheck, PlanMetric, PlannerConstants, PlannerInputs,
};
use proptest::prelude::*;
use std::f64::consts::TAU;

fn normal(mean: f64, var: f64) -> impl Fn(f64) -> f64 {
    move |x| (-(x - mean).powi(2) / (2.0 * var)).exp() / (TAU * var).sqrt()
}

fn grid(mean: f64, var: f64) -> DensityGrid<f64> {
    DensityGrid::from_fn_1d(-14.0, 14.0, 4097, normal(mean, var)).unwrap()
}

fn inputs(l: f64, m: f64, lambda: f64, b: f64, d: usize, eps: f64) -> PlannerInputs<f64> {
    PlannerInputs {
        cert: Certificate {
            lipschitz: Certified::analytic(l),
            m: Certified::analytic(m),
            b: Certified::analytic(b),
            lambda: Certified::analytic(lambda),
            minimizer: Some(Certified::analytic(vec![0.0; d])),
        },
        d,
        sigma2: 0.25 / (1.0 + l),
        epsilon: eps,
        alpha: None,
        constants: PlannerConstants::default(),
        grad0_norm2: 0.0,
        f0: 0.5 * d as f64 * TAU.ln(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn quadrature_matches_gaussian_closed_forms(s in 0.4f64..1.4, mu in -1.0f64..1.0) {
        let (rho, nu) = (grid(mu, s), grid(0.0, 1.0));
        let chi = quadrature_divergence(&rho, &nu, Metric::Chi2, None).unwrap().value;
        prop_assert!((chi - chi2_isotropic(s, 1, mu * mu).unwrap()).abs() < 1e-6 * (1.0 + chi));
        let kl = quadrature_divergence(&rho, &nu, Metric::Kl, None).unwrap().value;
        prop_assert!((kl - kl_gaussian(s, 1, mu * mu).unwrap()).abs() < 1e-6);
        let r3 = quadrature_divergence(&rho, &nu, Metric::Renyi, Some(1.3)).unwrap().value;
        prop_assert!((r3 - renyi_isotropic(1.3, s, 1, mu * mu).unwrap()).abs() < 1e-6);
    }

    #[test]
    fn metric_chain_holds_for_gaussian_pairs(s in 0.3f64..1.5, mu in -2.0f64..2.0) {
        let chain = check_metric_chain(&grid(mu, s), &grid(0.0, 1.0), 1.0).unwrap();
        prop_assert!(chain.all_hold(), "{:?}", chain);
    }

    #[test]
    fn recursion_never_exceeds_bound(theta0 in 0.0f64..100.0, a in 0.001f64..0.999, h in 0.0f64..10.0, k in 0u64..500) {
        let mut theta = theta0;
        for _ in 0..k {
            theta = (1.0 - a) * theta + h;
        }
        let bound = iterate_affine_recursion(theta0, a, h, k).unwrap();
        prop_assert!(theta <= bound * (1.0 + 1e-12) + 1e-12);
    }

    #[test]
    fn feasible_plans_survive_recheck(l in 1.0f64..3.0, lambda in 1.0f64..4.0, d in 1usize..20, eps in 0.001f64..0.2) {
        let inp = inputs(l, 1.0, lambda, 0.5, d, eps);
        let p = plan_chi2(&inp).unwrap();
        let again = recheck(&inp, PlanMetric::Chi2, p.eta, p.n).unwrap();
        prop_assert_eq!(p.feasible, again.iter().all(|c| c.ok));
    }
}

#[test]
fn plan_length_is_monotone() {
    use rand_free::Lcg;
    let mut g = Lcg(7);
    for _ in 0..100 {
        let l = 1.0 + 2.0 * g.next();
        let lambda = 1.0 + 3.0 * g.next();
        let d = 1 + (g.next() * 30.0) as usize;
        let eps = 0.001 + 0.1 * g.next();
        let n = |l, lambda, d, eps| plan_chi2(&inputs(l, 1.0, lambda, 0.5, d, eps)).unwrap().n;
        let base = n(l, lambda, d, eps);
        assert!(n(l, lambda, d, eps * 1.5) <= base);
        assert!(n(l, lambda, d + 1, eps) >= base);
        assert!(n(l, lambda * 1.3, d, eps) >= base);
        assert!(n(l * 1.3, lambda, d, eps) >= base);
    }
}

#[test]
fn renyi_two_plan_is_consistent_with_chi2() {
    for eps in [0.1, 0.01] {
        for d in [1, 4] {
            let inp = inputs(1.0, 1.0, 1.0, 0.0, d, eps);
            let p = plan(&inp, PlanMetric::Renyi(2.0)).unwrap();
            let s = lmc_variance(inp.sigma2, p.eta, p.total_iterations).unwrap();
            assert!(chi2_isotropic(s, d, 0.0).unwrap() <= eps.exp_m1());
        }
    }
}

/// Deterministic parameter stream for sweeps outside proptest.
mod rand_free {
    pub struct Lcg(pub u64);

    impl Lcg {
        pub fn next(&mut self) -> f64 {
            self.0 = langevin_core::rng::mix64(self.0);
            (self.0 >> 11) as f64 / (1u64 << 53) as f64
        }
    }
}
