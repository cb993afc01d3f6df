//! Linear growth-fragmentation flow `∂ₜu + μ∂ₓ(xu) + μu = Fu`, its
//! mass-normalized steady profile and an empirical relaxation rate.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::frag::FragMatrix;
use crate::grid::{Density, SizeGrid};
use crate::params::ModelParams;
use crate::real::Real;
use crate::transport::{Scheme, Transport};

/// Largest explicit time step keeping every stage of a step nonnegative, for
/// growth speed `c·x`, death rate `mu` and the fragmentation loss.
pub(crate) fn positivity_limit<T: Real>(transport: &Transport<T>, frag: &FragMatrix<T>, c: T, mu: T) -> T {
    let worst = transport
        .stiffness()
        .iter()
        .zip(frag.loss())
        .map(|(&s, &l)| c * s + mu + l)
        .fold(T::zero(), T::max);
    worst.recip()
}

#[derive(Clone, Debug)]
pub struct LinearFlow<T> {
    frag: Arc<FragMatrix<T>>,
    transport: Transport<T>,
    mu: T,
}

impl<T: Real> LinearFlow<T> {
    pub fn new(frag: Arc<FragMatrix<T>>, mu: T, scheme: Scheme) -> Self {
        let transport = Transport::new(frag.grid().clone(), scheme);
        LinearFlow { frag, transport, mu }
    }

    pub fn grid(&self) -> &Arc<SizeGrid<T>> {
        self.frag.grid()
    }

    pub fn frag(&self) -> &Arc<FragMatrix<T>> {
        &self.frag
    }

    pub fn mu(&self) -> T {
        self.mu
    }

    /// Right-hand side `−μ∂ₓ(xu) − μu + Fu`; returns the mass outflow rate at `x_max`.
    pub fn rhs_into(&self, u: &[T], out: &mut [T]) -> T {
        let mut frag = vec![T::zero(); u.len()];
        self.frag.apply_into(u, &mut frag);
        let outflow = self.transport.apply_into(u, out);
        for ((o, &f), &ui) in out.iter_mut().zip(&frag).zip(u) {
            *o = self.mu * (*o - ui) + f;
        }
        self.mu * outflow
    }

    pub fn rhs(&self, u: &Density<T>) -> Vec<T> {
        let mut out = vec![T::zero(); u.values().len()];
        self.rhs_into(u.values(), &mut out);
        out
    }

    /// Stability and positivity bound on `dt`.
    pub fn max_dt(&self) -> T {
        positivity_limit(&self.transport, &self.frag, self.mu, self.mu)
    }

    /// One Heun (SSP-RK2) step.
    pub fn step(&self, u: &Density<T>, dt: T) -> Result<Density<T>> {
        let limit = self.max_dt();
        if !(dt > T::zero()) || dt > limit {
            return Err(Error::Cfl { dt: dt.to_f64_lossy(), limit: limit.to_f64_lossy() });
        }
        let n = u.values().len();
        let (mut k1, mut k2) = (vec![T::zero(); n], vec![T::zero(); n]);
        self.rhs_into(u.values(), &mut k1);
        let stage: Vec<T> = u.values().iter().zip(&k1).map(|(&v, &k)| (v + dt * k).max(T::zero())).collect();
        self.rhs_into(&stage, &mut k2);
        let half = T::lit(0.5);
        let values = u
            .values()
            .iter()
            .zip(&stage)
            .zip(&k2)
            .map(|((&v, &s), &k)| (half * (v + s + dt * k)).max(T::zero()))
            .collect();
        Ok(Density::from_raw(u.grid().clone(), values))
    }
}

/// One explicit step of the linear growth-fragmentation equation.
pub fn linear_gf_step<T: Real>(u: &Density<T>, frag: &Arc<FragMatrix<T>>, mu: T, dt: T) -> Result<Density<T>> {
    LinearFlow::new(frag.clone(), mu, Scheme::default()).step(u, dt)
}

#[derive(Clone, Copy, Debug)]
pub struct ProfileOptions<T> {
    /// Stop once `‖u^{n+1} − u^n‖_X / dt` drops below this.
    pub tol: T,
    pub max_steps: usize,
    /// Fraction of the stability bound used as time step.
    pub safety: T,
    pub scheme: Scheme,
}

impl<T: Real> Default for ProfileOptions<T> {
    fn default() -> Self {
        ProfileOptions { tol: T::lit(1e-13), max_steps: 2_000_000, safety: T::lit(0.9), scheme: Scheme::default() }
    }
}

/// Steady state `U` of the linear flow with `∫xU = 1`.
#[derive(Clone, Debug)]
pub struct Profile<T> {
    pub density: Density<T>,
    pub m0: T,
    pub m1: T,
    pub mp: T,
    pub mr: T,
    /// `‖μ(xU)' + μU − FU‖_X` of the discrete operator.
    pub residual: T,
    /// Relative mass outflow rate `μ J_N / m₁` through `x_max`; the profile is
    /// the Perron vector of the truncated operator, with eigenvalue `−leak_rate`.
    pub leak_rate: T,
    pub n_steps: usize,
    p: T,
    r: T,
}

#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "PascalCase")]
pub struct ProfileSummary {
    pub m0: f64,
    pub m1: f64,
    pub mp: f64,
    pub mr: f64,
    #[serde(rename = "residual")]
    pub residual: f64,
    #[serde(rename = "leak_rate")]
    pub leak_rate: f64,
    #[serde(rename = "truncated")]
    pub truncated: bool,
    #[serde(rename = "n_steps")]
    pub n_steps: usize,
}

impl<T: Real> Profile<T> {
    pub fn moment(&self, alpha: T) -> T {
        if alpha == T::zero() {
            self.m0
        } else if alpha == T::one() {
            self.m1
        } else if alpha == self.p {
            self.mp
        } else if alpha == self.r {
            self.mr
        } else {
            self.density.moment(alpha)
        }
    }

    /// Whether truncation at `x_max` visibly perturbs the profile.
    pub fn truncated(&self) -> bool {
        self.leak_rate > T::lit(1e-6)
    }

    pub fn summary(&self) -> ProfileSummary {
        ProfileSummary {
            m0: self.m0.to_f64_lossy(),
            m1: self.m1.to_f64_lossy(),
            mp: self.mp.to_f64_lossy(),
            mr: self.mr.to_f64_lossy(),
            residual: self.residual.to_f64_lossy(),
            leak_rate: self.leak_rate.to_f64_lossy(),
            truncated: self.truncated(),
            n_steps: self.n_steps,
        }
    }

    /// Builds the profile record for an already converged density.
    pub fn from_density(density: Density<T>, flow: &LinearFlow<T>, params: &ModelParams<T>, n_steps: usize) -> Result<Self> {
        let density = density.with_mass(T::one())?;
        let mut rhs = vec![T::zero(); density.values().len()];
        let outflow = flow.rhs_into(density.values(), &mut rhs);
        let residual = flow.grid().x_norm_of(&rhs, params.r);
        Ok(Profile {
            leak_rate: outflow / density.moment(T::one()),
            m0: density.moment(T::zero()),
            m1: density.moment(T::one()),
            mp: density.moment(params.p),
            mr: density.moment(params.r),
            density,
            residual,
            n_steps,
            p: params.p,
            r: params.r,
        })
    }
}

/// Time-marches the linear flow from a normalized exponential, restoring unit
/// mass after every step, until the increment in `‖·‖_X` per unit time falls
/// below `opts.tol`.
pub fn compute_profile<T: Real>(
    frag: &Arc<FragMatrix<T>>,
    params: &ModelParams<T>,
    opts: &ProfileOptions<T>,
) -> Result<Profile<T>> {
    if !(opts.tol > T::zero()) {
        return Err(Error::Precondition("profile tolerance must be positive".into()));
    }
    let flow = LinearFlow::new(frag.clone(), params.mu, opts.scheme);
    let scale = params.characteristic_size();
    let u0 = Density::from_fn(flow.grid().clone(), |x| (-x / scale).exp())?.with_mass(T::one())?;
    march_to_profile(&flow, params, u0, opts)
}

/// Same march from a caller-supplied positive start.
pub fn march_to_profile<T: Real>(
    flow: &LinearFlow<T>,
    params: &ModelParams<T>,
    u0: Density<T>,
    opts: &ProfileOptions<T>,
) -> Result<Profile<T>> {
    let dt = opts.safety * flow.max_dt();
    let grid = flow.grid().clone();
    let mut u = u0.with_mass(T::one())?;
    let mut increment = T::infinity();
    for n in 1..=opts.max_steps {
        let next = flow.step(&u, dt)?.with_mass(T::one())?;
        let diff: Vec<T> = next.values().iter().zip(u.values()).map(|(&a, &b)| a - b).collect();
        increment = grid.x_norm_of(&diff, params.r) / dt;
        u = next;
        if increment < opts.tol {
            return Profile::from_density(u, flow, params, n);
        }
    }
    Err(Error::NonConvergence { steps: opts.max_steps, increment: increment.to_f64_lossy() })
}

#[derive(Clone, Copy, Debug)]
pub struct GapOptions<T> {
    pub horizon: T,
    /// Spacing of the recorded `d(t)` samples.
    pub sample_every: T,
    /// Fit samples start once `d(t) ≤ transient_ratio·d(0)`.
    pub transient_ratio: T,
    /// Fit samples stop once `d(t) < floor_ratio·d(0)`.
    pub floor_ratio: T,
    pub safety: T,
}

impl<T: Real> Default for GapOptions<T> {
    fn default() -> Self {
        GapOptions {
            horizon: T::lit(40.0),
            sample_every: T::lit(0.25),
            transient_ratio: T::lit(1e-8),
            floor_ratio: T::lit(1e-12),
            safety: T::lit(0.9),
        }
    }
}

/// Exponential envelope `d(t) ≤ C·d(0)·e^{−at}` of `d(t) = ‖u(t) − ϱ₀U‖_X`.
#[derive(Clone, Debug, Serialize)]
pub struct GapEstimate {
    pub a: f64,
    /// `sup_t d(t)e^{at}/d(0)` over the recorded samples up to the window end.
    #[serde(rename = "C")]
    pub c: f64,
    /// RMS residual of the log-linear fit.
    pub fit_residual: f64,
    pub window: (f64, f64),
    pub window_samples: usize,
    /// `sup_t |m₁(t) − m₁(0)| / m₁(0)`.
    pub max_mass_drift: f64,
    #[serde(skip)]
    pub series: Vec<GapSample>,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct GapSample {
    pub t: f64,
    pub d: f64,
    pub m1: f64,
}

/// Least-squares line through `(x, y)`; returns `(slope, intercept, rms residual)`.
pub(crate) fn linear_fit(points: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let rms = (points.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum::<f64>() / n).sqrt();
    (slope, intercept, rms)
}

pub fn estimate_gap<T: Real>(
    flow: &LinearFlow<T>,
    profile: &Profile<T>,
    u0: &Density<T>,
    r: T,
    opts: &GapOptions<T>,
) -> Result<GapEstimate> {
    let grid = flow.grid().clone();
    let rho0 = u0.moment(T::one());
    if !(rho0 > T::zero()) {
        return Err(Error::Degenerate("initial density has zero mass".into()));
    }
    let target = profile.density.scaled(rho0);
    let distance = |u: &Density<T>| {
        let diff: Vec<T> = u.values().iter().zip(target.values()).map(|(&a, &b)| a - b).collect();
        grid.x_norm_of(&diff, r).to_f64_lossy()
    };
    let d0 = distance(u0);
    if d0 <= 1e-12 * u0.x_norm(r).to_f64_lossy() {
        return Err(Error::Degenerate("initial density already equals the rescaled profile".into()));
    }
    let base_dt = opts.safety * flow.max_dt();
    let rho0_f = rho0.to_f64_lossy();
    let mut series = vec![GapSample { t: 0.0, d: d0, m1: rho0_f }];
    let mut u = u0.clone();
    let mut t = T::zero();
    let mut next_sample = opts.sample_every;
    let floor = opts.floor_ratio.to_f64_lossy() * d0;
    while t < opts.horizon {
        let dt = base_dt.min(next_sample - t);
        u = flow.step(&u, dt)?;
        t = t + dt;
        if t >= next_sample - T::lit(1e-12) * opts.sample_every {
            t = next_sample;
            let d = distance(&u);
            series.push(GapSample { t: t.to_f64_lossy(), d, m1: u.moment(T::one()).to_f64_lossy() });
            next_sample = next_sample + opts.sample_every;
            if d < floor * 1e-2 {
                break;
            }
        }
    }
    let max_mass_drift = series.iter().map(|s| (s.m1 - rho0_f).abs() / rho0_f).fold(0.0, f64::max);
    // a run that plateaus before the horizon sits on the profile's own error
    let floor = match series.last() {
        Some(last) if last.d >= floor * 1e-2 => floor.max(1e2 * last.d),
        _ => floor,
    };
    let start = opts.transient_ratio.to_f64_lossy() * d0;
    let window: Vec<(f64, f64)> = series
        .iter()
        .filter(|s| s.d <= start && s.d >= floor)
        .map(|s| (s.t, s.d.ln()))
        .collect();
    if window.len() < 3 {
        return Err(Error::FitFailure(format!(
            "only {} samples between {:e} and {:e} (floor reached or horizon too short)",
            window.len(),
            start,
            floor
        )));
    }
    let (slope, _, fit_residual) = linear_fit(&window);
    let a = -slope;
    if !(a > 0.0) {
        return Err(Error::FitFailure(format!("non-decaying fit, slope {slope}")));
    }
    let t_end = window.last().unwrap().0;
    let c = series
        .iter()
        .filter(|s| s.t <= t_end)
        .map(|s| s.d * (a * s.t).exp() / d0)
        .fold(1.0, f64::max);
    Ok(GapEstimate {
        a,
        c,
        fit_residual,
        window: (window[0].0, t_end),
        window_samples: window.len(),
        max_mass_drift,
        series,
    })
}
