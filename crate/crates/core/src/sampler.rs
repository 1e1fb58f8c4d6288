//! The LMC chain, its frozen-drift interpolation, synchronously coupled
//! diffusions and the jump monitor.
//!
//! Randomness layout (see [`crate::rng`]): chain `i` under master seed `s`
//! reads `Stream::new(s, i)`. The initial draw uses step 0; the noise that
//! produces `x_{k+1}` uses step `k + 1`. With `J` sub-steps, sub-step `j`
//! of coordinate `c` reads lane `j * d + c`, and `J = 1` reads exactly the
//! lanes the plain chain reads.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::potentials::PotentialSpec;
use crate::rng::Stream;
use crate::scalar::{norm2, Real};

/// States farther than this from the origin count as divergence.
pub const DIVERGENCE_RADIUS: f64 = 1e8;

#[derive(Debug, Clone, PartialEq)]
pub enum Init<T> {
    /// `x0 ~ N(0, sigma2 I)`.
    Gaussian { sigma2: T },
    Point(Vec<T>),
}

#[derive(Debug, Clone)]
pub struct ChainConfig<T: Real> {
    pub potential: PotentialSpec<T>,
    pub eta: T,
    pub n_steps: usize,
    pub seed: u64,
    pub init: Init<T>,
}

impl<T: Real> ChainConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > T::zero() && self.eta.is_finite()) {
            return Err(Error::InvalidParameter(format!("step size must be positive, got {}", self.eta)));
        }
        match &self.init {
            Init::Gaussian { sigma2 } if !(*sigma2 > T::zero() && sigma2.is_finite()) => Err(
                Error::InvalidParameter(format!("initial variance must be positive, got {sigma2}")),
            ),
            Init::Point(x) if x.len() != self.potential.dim() => Err(Error::DimensionMismatch {
                expected: self.potential.dim(),
                got: x.len(),
            }),
            _ => Ok(()),
        }
    }

    fn initial_state(&self, stream: &Stream) -> Vec<T> {
        match &self.init {
            Init::Point(x) => x.clone(),
            Init::Gaussian { sigma2 } => {
                let s = sigma2.sqrt();
                (0..self.potential.dim())
                    .map(|j| s * T::of(stream.normal(0, j as u64)))
                    .collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    /// `x_0, ..., x_N`.
    pub states: Vec<Vec<T>>,
    /// Largest displacement from `x_k` within each interval (interpolation runs only).
    pub jump_stats: Option<Vec<T>>,
    /// Intermediate sub-states of each interval, when requested.
    pub substates: Option<Vec<Vec<Vec<T>>>>,
    pub seed: u64,
    pub chain: u64,
}

impl<T: Real> Trajectory<T> {
    pub fn final_state(&self) -> &[T] {
        self.states.last().expect("trajectory has x0")
    }
}

/// How the standard normal vector `W_k` of one LMC step is produced.
pub trait NoiseSource: Sync {
    fn fill<T: Real>(&self, stream: &Stream, step: u64, out: &mut [T]);
}

/// One standard normal per coordinate.
#[derive(Debug, Clone, Copy, Default)]
pub struct StandardNoise;

impl NoiseSource for StandardNoise {
    fn fill<T: Real>(&self, stream: &Stream, step: u64, out: &mut [T]) {
        for (j, o) in out.iter_mut().enumerate() {
            *o = T::of(stream.normal(step, j as u64));
        }
    }
}

/// `W_k = (z_1 + ... + z_J) / sqrt(J)` from the sub-step draws of an
/// interpolation run, so the chain and the interpolation share one Brownian path.
#[derive(Debug, Clone, Copy)]
pub struct AggregatedNoise {
    pub substeps: usize,
}

impl NoiseSource for AggregatedNoise {
    fn fill<T: Real>(&self, stream: &Stream, step: u64, out: &mut [T]) {
        let d = out.len() as u64;
        let scale = T::of_usize(self.substeps).sqrt().recip();
        for (j, o) in out.iter_mut().enumerate() {
            let mut acc = T::zero();
            for s in 0..self.substeps as u64 {
                acc += T::of(stream.normal(step, s * d + j as u64));
            }
            *o = acc * scale;
        }
    }
}

fn guard<T: Real>(x: &[T], step: usize) -> Result<()> {
    let r2 = norm2(x);
    if r2.is_finite() && r2 <= T::of(DIVERGENCE_RADIUS * DIVERGENCE_RADIUS) {
        Ok(())
    } else {
        Err(Error::Divergence { step })
    }
}

/// `x - eta grad f(x) + sqrt(2 eta) noise`.
pub fn lmc_step<T: Real>(p: &PotentialSpec<T>, x: &[T], eta: T, noise: &[T]) -> Result<Vec<T>> {
    if x.len() != p.dim() || noise.len() != p.dim() {
        return Err(Error::DimensionMismatch {
            expected: p.dim(),
            got: if x.len() != p.dim() { x.len() } else { noise.len() },
        });
    }
    if !(eta > T::zero()) {
        return Err(Error::InvalidParameter("step size must be positive".into()));
    }
    let mut g = vec![T::zero(); x.len()];
    p.gradient_into(x, &mut g);
    let mut out = x.to_vec();
    advance(&mut out, &g, eta, (T::two() * eta).sqrt(), noise);
    if out.iter().all(|v| v.is_finite()) {
        Ok(out)
    } else {
        Err(Error::NonFinite("LMC step".into()))
    }
}

#[inline]
fn advance<T: Real>(x: &mut [T], g: &[T], h: T, diffusion: T, noise: &[T]) {
    for ((xi, &gi), &zi) in x.iter_mut().zip(g).zip(noise) {
        *xi = *xi - h * gi + diffusion * zi;
    }
}

/// Runs chain number `chain` of the ensemble described by `cfg`.
pub fn run_chain_with<T: Real, N: NoiseSource>(
    cfg: &ChainConfig<T>,
    chain: u64,
    noise: &N,
    keep_states: bool,
) -> Result<Trajectory<T>> {
    cfg.validate()?;
    let stream = Stream::new(cfg.seed, chain);
    let d = cfg.potential.dim();
    let mut x = cfg.initial_state(&stream);
    guard(&x, 0)?;
    let mut states = Vec::with_capacity(if keep_states { cfg.n_steps + 1 } else { 1 });
    if keep_states {
        states.push(x.clone());
    }
    let diffusion = (T::two() * cfg.eta).sqrt();
    let mut g = vec![T::zero(); d];
    let mut w = vec![T::zero(); d];
    for k in 0..cfg.n_steps {
        cfg.potential.gradient_into(&x, &mut g);
        noise.fill(&stream, k as u64 + 1, &mut w);
        advance(&mut x, &g, cfg.eta, diffusion, &w);
        guard(&x, k + 1)?;
        if keep_states {
            states.push(x.clone());
        }
    }
    if !keep_states {
        states.push(x);
    }
    Ok(Trajectory {
        states,
        jump_stats: None,
        substates: None,
        seed: cfg.seed,
        chain,
    })
}

/// The LMC chain with standard noise; every state is kept.
pub fn run_chain<T: Real>(cfg: &ChainConfig<T>) -> Result<Trajectory<T>> {
    run_chain_with(cfg, 0, &StandardNoise, true)
}

/// The frozen-drift interpolation with `substeps` Euler sub-steps of length `eta/J`
/// per interval. Interval-end states are kept; sub-states only if `keep_substates`.
pub fn run_interpolation_at<T: Real>(
    cfg: &ChainConfig<T>,
    substeps: usize,
    chain: u64,
    keep_substates: bool,
) -> Result<Trajectory<T>> {
    cfg.validate()?;
    if substeps == 0 {
        return Err(Error::InvalidParameter("need at least one sub-step".into()));
    }
    let stream = Stream::new(cfg.seed, chain);
    let d = cfg.potential.dim();
    let mut x = cfg.initial_state(&stream);
    guard(&x, 0)?;
    let h = cfg.eta / T::of_usize(substeps);
    let diffusion = (T::two() * h).sqrt();
    let mut states = Vec::with_capacity(cfg.n_steps + 1);
    states.push(x.clone());
    let mut jumps = Vec::with_capacity(cfg.n_steps);
    let mut subs = keep_substates.then(|| Vec::with_capacity(cfg.n_steps));
    let mut g = vec![T::zero(); d];
    let mut z = vec![T::zero(); d];
    for k in 0..cfg.n_steps {
        let anchor = x.clone();
        cfg.potential.gradient_into(&anchor, &mut g);
        let mut interval = keep_substates.then(|| Vec::with_capacity(substeps));
        let mut widest = T::zero();
        for s in 0..substeps as u64 {
            for (j, zj) in z.iter_mut().enumerate() {
                *zj = T::of(stream.normal(k as u64 + 1, s * d as u64 + j as u64));
            }
            advance(&mut x, &g, h, diffusion, &z);
            let moved: T = x.iter().zip(&anchor).map(|(&a, &b)| (a - b) * (a - b)).sum::<T>().sqrt();
            widest = widest.max(moved);
            if let Some(v) = interval.as_mut() {
                v.push(x.clone());
            }
        }
        guard(&x, k + 1)?;
        jumps.push(widest);
        if let (Some(all), Some(v)) = (subs.as_mut(), interval) {
            all.push(v);
        }
        states.push(x.clone());
    }
    Ok(Trajectory {
        states,
        jump_stats: Some(jumps),
        substates: subs,
        seed: cfg.seed,
        chain,
    })
}

pub fn run_interpolation<T: Real>(cfg: &ChainConfig<T>, substeps: usize) -> Result<Trajectory<T>> {
    run_interpolation_at(cfg, substeps, 0, false)
}

/// Runs `f(chain)` for every chain index on `workers` threads (the global
/// pool when `None`), returning results in chain order. Failures are
/// collected; divergences are reported together by chain index.
pub fn map_chains<R, F>(n_chains: usize, workers: Option<usize>, f: F) -> Result<Vec<R>>
where
    R: Send,
    F: Fn(u64) -> Result<R> + Sync + Send,
{
    if n_chains == 0 {
        return Err(Error::InvalidParameter("need at least one chain".into()));
    }
    let run = || -> Vec<Result<R>> { (0..n_chains as u64).into_par_iter().map(&f).collect() };
    let results = match workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?
            .install(run),
        None => run(),
    };
    let mut out = Vec::with_capacity(n_chains);
    let mut failed = Vec::new();
    let mut other = None;
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(v) => out.push(v),
            Err(Error::Divergence { .. }) | Err(Error::NonFinite(_)) => failed.push(i),
            Err(e) => {
                other.get_or_insert(e);
            }
        }
    }
    if let Some(e) = other {
        return Err(e);
    }
    if failed.is_empty() {
        Ok(out)
    } else {
        Err(Error::EnsembleDivergence(failed))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Record {
    FinalStates,
    Full,
}

#[derive(Debug, Clone)]
pub struct Ensemble<T> {
    /// One row per chain, in chain order.
    pub finals: Vec<Vec<T>>,
    pub trajectories: Option<Vec<Trajectory<T>>>,
}

/// `n_chains` independent LMC chains; chain `i` uses stream `(seed, i)`.
pub fn run_ensemble<T: Real>(
    cfg: &ChainConfig<T>,
    n_chains: usize,
    record: Record,
    workers: Option<usize>,
) -> Result<Ensemble<T>> {
    cfg.validate()?;
    let full = record == Record::Full;
    let trajectories = map_chains(n_chains, workers, |i| run_chain_with(cfg, i, &StandardNoise, full))?;
    let finals = trajectories.iter().map(|t| t.final_state().to_vec()).collect();
    Ok(Ensemble {
        finals,
        trajectories: full.then_some(trajectories),
    })
}

/// Two Euler paths of the Langevin diffusion from `x0` and `y0` driven by the
/// same Brownian increments. Returns `(t, |z_t - z'_t|)` at every step, starting at `t = 0`.
pub fn couple_diffusions<T: Real>(
    p: &PotentialSpec<T>,
    x0: &[T],
    y0: &[T],
    eta_fine: T,
    t_end: T,
    seed: u64,
) -> Result<Vec<(T, T)>> {
    let d = p.dim();
    if x0.len() != d || y0.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: if x0.len() != d { x0.len() } else { y0.len() },
        });
    }
    if !(eta_fine > T::zero()) || !(t_end > T::zero()) {
        return Err(Error::InvalidParameter("need eta_fine > 0 and t_end > 0".into()));
    }
    let steps = (t_end / eta_fine).ceil().to_usize().unwrap_or(0);
    let stream = Stream::new(seed, 0);
    let diffusion = (T::two() * eta_fine).sqrt();
    let (mut x, mut y) = (x0.to_vec(), y0.to_vec());
    let (mut gx, mut gy, mut z) = (vec![T::zero(); d], vec![T::zero(); d], vec![T::zero(); d]);
    let dist = |x: &[T], y: &[T]| x.iter().zip(y).map(|(&a, &b)| (a - b) * (a - b)).sum::<T>().sqrt();
    let mut path = Vec::with_capacity(steps + 1);
    path.push((T::zero(), dist(&x, &y)));
    for k in 0..steps {
        p.gradient_into(&x, &mut gx);
        p.gradient_into(&y, &mut gy);
        StandardNoise.fill(&stream, k as u64 + 1, &mut z);
        advance(&mut x, &gx, eta_fine, diffusion, &z);
        advance(&mut y, &gy, eta_fine, diffusion, &z);
        guard(&x, k + 1)?;
        guard(&y, k + 1)?;
        path.push((T::of_usize(k + 1) * eta_fine, dist(&x, &y)));
    }
    Ok(path)
}

/// `e^{-mt} r0 + sqrt((b/m)(1 - e^{-2mt}))`: the synchronous-coupling envelope.
pub fn semi_contraction_bound<T: Real>(m: T, b: T, r0: T, t: T) -> T {
    (-m * t).exp() * r0 + (b / m * -(-T::two() * m * t).exp_m1()).sqrt()
}

/// Which jump-radius formula the monitor uses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum JumpForm<T> {
    /// `(2 kappa + 1)(1 + sqrt b + sqrt d + 2 sqrt(log(2(N+1)/delta))) sqrt(2 eta)`.
    Explicit,
    /// `c kappa (sqrt b + sqrt d + sqrt(log(N/delta))) sqrt(eta)`.
    Compact { c: T },
}

#[derive(Debug, Clone, Copy)]
pub struct JumpCheckConfig<T> {
    pub delta: T,
    pub kappa: T,
    pub b: T,
    pub d: usize,
    pub n_steps: usize,
    pub eta: T,
    pub form: JumpForm<T>,
}

impl<T: Real> JumpCheckConfig<T> {
    pub fn threshold(&self) -> Result<T> {
        if !(self.delta > T::zero() && self.delta < T::one()) {
            return Err(Error::InvalidParameter(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        let d = T::of_usize(self.d).sqrt();
        let n = T::of_usize(self.n_steps);
        Ok(match self.form {
            JumpForm::Explicit => {
                let log_term = (T::two() * (n + T::one()) / self.delta).ln();
                (T::two() * self.kappa + T::one())
                    * (T::one() + self.b.sqrt() + d + T::two() * log_term.sqrt())
                    * (T::two() * self.eta).sqrt()
            }
            JumpForm::Compact { c } => {
                let log_term = (n.max(T::one()) / self.delta).ln();
                c * self.kappa * (self.b.sqrt() + d + log_term.sqrt()) * self.eta.sqrt()
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpReport<T> {
    pub threshold: T,
    pub max_observed: T,
    pub violated: bool,
}

/// Compares the largest intra-interval displacement of an interpolation run with the jump radius.
pub fn monitor_jumps<T: Real>(traj: &Trajectory<T>, cfg: &JumpCheckConfig<T>) -> Result<JumpReport<T>> {
    let threshold = cfg.threshold()?;
    let jumps = traj
        .jump_stats
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("trajectory has no interval records; use run_interpolation".into()))?;
    let max_observed = jumps.iter().copied().fold(T::zero(), T::max);
    Ok(JumpReport {
        threshold,
        max_observed,
        violated: max_observed > threshold,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TailKind {
    /// `P(|W| >= sqrt(d) + x) <= e^{-x^2/2}` for `W ~ N(0, I_d)`.
    Normal,
    /// `P(sup_{s <= t} |B_s| >= sqrt(t)(sqrt(d) + x)) <= 2 e^{-x^2/4}`.
    SupBrownian,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct TailRow {
    pub kind: TailKind,
    pub x: f64,
    pub empirical: f64,
    pub bound: f64,
    pub standard_error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone)]
pub struct TailCheckOptions {
    pub n_draws: usize,
    pub d: usize,
    pub seed: u64,
    pub xs: Vec<f64>,
    /// Number of Brownian paths and Euler steps per path on `[0, 1]`.
    pub sup_paths: usize,
    pub sup_steps: usize,
}

impl TailCheckOptions {
    pub fn new(n_draws: usize, d: usize, seed: u64) -> Self {
        Self {
            n_draws,
            d,
            seed,
            xs: vec![0.5, 1.0, 2.0],
            sup_paths: n_draws / 5,
            sup_steps: 500,
        }
    }
}

/// Empirical Gaussian-norm and Brownian-supremum tails against their bounds;
/// a row passes when the empirical frequency is within 3 binomial standard
/// errors of the bound.
pub fn empirical_tail_checks(opts: &TailCheckOptions) -> Result<Vec<TailRow>> {
    if opts.n_draws < 10_000 {
        return Err(Error::InvalidParameter("need at least 1e4 draws".into()));
    }
    if opts.d == 0 || opts.sup_paths == 0 || opts.sup_steps == 0 {
        return Err(Error::InvalidParameter("dimension, paths and steps must be positive".into()));
    }
    let d = opts.d;
    let normal = Stream::new(opts.seed, 0x7a11);
    let norms: Vec<f64> = (0..opts.n_draws as u64)
        .into_par_iter()
        .map(|i| (0..d as u64).map(|j| normal.normal(i, j).powi(2)).sum::<f64>().sqrt())
        .collect();
    let brown = Stream::new(opts.seed, 0xb70);
    let dt = 1.0 / opts.sup_steps as f64;
    let sups: Vec<f64> = (0..opts.sup_paths as u64)
        .into_par_iter()
        .map(|i| {
            let path = brown.child(i);
            let mut b = vec![0.0; d];
            let mut sup: f64 = 0.0;
            for s in 0..opts.sup_steps as u64 {
                for (j, bj) in b.iter_mut().enumerate() {
                    *bj += dt.sqrt() * path.normal(s, j as u64);
                }
                sup = sup.max(b.iter().map(|v| v * v).sum::<f64>().sqrt());
            }
            sup
        })
        .collect();
    let row = |kind, x: f64, samples: &[f64], level: f64, bound: f64| {
        let n = samples.len() as f64;
        let p = samples.iter().filter(|&&v| v >= level).count() as f64 / n;
        let se = (p * (1.0 - p) / n).sqrt();
        TailRow {
            kind,
            x,
            empirical: p,
            bound,
            standard_error: se,
            passed: p <= bound + 3.0 * se,
        }
    };
    let root_d = (d as f64).sqrt();
    let mut rows = Vec::new();
    for &x in &opts.xs {
        rows.push(row(TailKind::Normal, x, &norms, root_d + x, (-x * x / 2.0).exp()));
    }
    for &x in &opts.xs {
        rows.push(row(TailKind::SupBrownian, x, &sups, root_d + x, 2.0 * (-x * x / 4.0).exp()));
    }
    Ok(rows)
}
