//! The coupled monomer/polymer system
//!
//! ```text
//! dV/dt = λ − δV − τ V m₁ / (1 + ω m_p)
//! ∂ₜu = −c τ ∂ₓ(x u) − μ u + F u,      c = V / (1 + ω m_p)
//! ```

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frag::FragMatrix;
use crate::grid::Density;
use crate::params::ModelParams;
use crate::profile::positivity_limit;
use crate::real::Real;
use crate::transport::{Scheme, Transport};

/// Saturated polymerization rate `f = τ / (1 + ω m_p)`.
pub fn incidence<T: Real>(params: &ModelParams<T>, mp: T) -> T {
    params.tau / (T::one() + params.omega * mp)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SystemState<T> {
    pub t: T,
    pub v: T,
    pub u: Density<T>,
    pub m0: T,
    pub m1: T,
    pub mp: T,
    pub mr: T,
    /// Mass that left the domain through `x_max` so far.
    pub escaped: T,
}

impl<T: Real> SystemState<T> {
    pub fn new(t: T, v: T, u: Density<T>, params: &ModelParams<T>) -> Result<Self> {
        if !(v >= T::zero()) || !v.is_finite() {
            return Err(Error::Precondition(format!("monomer count must be finite and >= 0, got {v}")));
        }
        Ok(Self::from_parts(t, v, u, T::zero(), params))
    }

    fn from_parts(t: T, v: T, u: Density<T>, escaped: T, params: &ModelParams<T>) -> Self {
        SystemState {
            t,
            v,
            m0: u.moment(T::zero()),
            m1: u.moment(T::one()),
            mp: u.moment(params.p),
            mr: u.moment(params.r),
            u,
            escaped,
        }
    }

    pub fn incidence(&self, params: &ModelParams<T>) -> T {
        incidence(params, self.mp)
    }
}

/// Stage data of one Heun step, kept so that quantities driven by the same
/// coefficients (the scaling factor `W`) can be advanced in lockstep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StepRecord {
    pub t: f64,
    pub dt: f64,
    /// `f·V` at the start of the step and at the predictor stage.
    pub fv0: f64,
    pub fv1: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Sample {
    pub t: f64,
    #[serde(rename = "V")]
    pub v: f64,
    pub m0: f64,
    pub m1: f64,
    pub mp: f64,
    pub mr: f64,
    pub x_norm: f64,
    pub escaped_mass: f64,
}

#[derive(Clone, Debug)]
pub struct Trajectory<T> {
    pub samples: Vec<Sample>,
    pub snapshots: Vec<(f64, Density<T>)>,
    pub steps: Vec<StepRecord>,
    pub final_state: SystemState<T>,
    /// Set once escaped mass exceeds `1e−6` of the current mass.
    pub truncation_flag: bool,
    pub rejected_steps: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimOptions {
    pub horizon: f64,
    pub output_every: f64,
    /// Fraction of the positivity bound used as time step.
    pub safety: f64,
    pub max_dt: f64,
    /// Keep a density snapshot every this many output times (0 disables).
    pub snapshot_every: usize,
    pub scheme: Scheme,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions { horizon: 100.0, output_every: 0.5, safety: 0.9, max_dt: 0.05, snapshot_every: 0, scheme: Scheme::default() }
    }
}

#[derive(Clone, Debug)]
pub struct PrionPde<T> {
    params: ModelParams<T>,
    frag: Arc<FragMatrix<T>>,
    transport: Transport<T>,
}

pub struct Rates<T> {
    pub dv: T,
    pub du: Vec<T>,
    /// Rate at which mass leaves through `x_max`.
    pub outflow: T,
}

impl<T: Real> PrionPde<T> {
    pub fn new(params: ModelParams<T>, frag: Arc<FragMatrix<T>>, scheme: Scheme) -> Self {
        let transport = Transport::new(frag.grid().clone(), scheme);
        PrionPde { params, frag, transport }
    }

    pub fn params(&self) -> &ModelParams<T> {
        &self.params
    }

    pub fn frag(&self) -> &Arc<FragMatrix<T>> {
        &self.frag
    }

    fn rates(&self, v: T, u: &[T], m1: T, mp: T) -> Rates<T> {
        let p = &self.params;
        let speed = incidence(p, mp) * v;
        let mut du = vec![T::zero(); u.len()];
        let mut frag = vec![T::zero(); u.len()];
        self.frag.apply_into(u, &mut frag);
        let outflow = self.transport.apply_into(u, &mut du);
        for ((d, &f), &ui) in du.iter_mut().zip(&frag).zip(u) {
            *d = speed * *d - p.mu * ui + f;
        }
        Rates { dv: p.lambda - p.delta * v - speed * m1, du, outflow: speed * outflow }
    }

    pub fn rhs(&self, state: &SystemState<T>) -> Rates<T> {
        self.rates(state.v, state.u.values(), state.m1, state.mp)
    }

    fn limit(&self, v: T, m1: T, mp: T) -> T {
        let f = incidence(&self.params, mp);
        let polymer = positivity_limit(&self.transport, &self.frag, f * v, self.params.mu);
        let monomer = (self.params.delta + f * m1).recip();
        polymer.min(monomer)
    }

    /// Positivity bound on `dt` at `state`.
    pub fn max_dt(&self, state: &SystemState<T>) -> T {
        self.limit(state.v, state.m1, state.mp)
    }

    /// One Heun (SSP-RK2) step with the transport speed frozen per stage.
    pub fn step(&self, state: &SystemState<T>, dt: T) -> Result<(SystemState<T>, StepRecord)> {
        let p = &self.params;
        let check = |limit: T| {
            if !(dt > T::zero()) || dt > limit {
                Err(Error::Cfl { dt: dt.to_f64_lossy(), limit: limit.to_f64_lossy() })
            } else {
                Ok(())
            }
        };
        check(self.max_dt(state))?;
        let grid = state.u.grid();
        let u0 = state.u.values();
        let k1 = self.rhs(state);
        let v1 = state.v + dt * k1.dv;
        let u1: Vec<T> = u0.iter().zip(&k1.du).map(|(&v, &k)| (v + dt * k).max(T::zero())).collect();
        let (m1_1, mp_1) = (grid.moment_of(&u1, T::one()), grid.moment_of(&u1, p.p));
        if !(v1 >= T::zero()) {
            return Err(Error::NegativeMonomer { t: state.t.to_f64_lossy(), value: v1.to_f64_lossy() });
        }
        check(self.limit(v1, m1_1, mp_1))?;
        let k2 = self.rates(v1, &u1, m1_1, mp_1);
        let half = T::lit(0.5);
        let v_new = half * (state.v + v1 + dt * k2.dv);
        if !(v_new >= T::zero()) {
            return Err(Error::NegativeMonomer { t: (state.t + dt).to_f64_lossy(), value: v_new.to_f64_lossy() });
        }
        let u_new: Vec<T> =
            u0.iter().zip(&u1).zip(&k2.du).map(|((&a, &b), &k)| (half * (a + b + dt * k)).max(T::zero())).collect();
        if u_new.iter().any(|x| !x.is_finite()) || !v_new.is_finite() {
            return Err(Error::BlowUp { t: (state.t + dt).to_f64_lossy() });
        }
        let escaped = state.escaped + half * dt * (k1.outflow + k2.outflow);
        let record = StepRecord {
            t: state.t.to_f64_lossy(),
            dt: dt.to_f64_lossy(),
            fv0: (incidence(p, state.mp) * state.v).to_f64_lossy(),
            fv1: (incidence(p, mp_1) * v1).to_f64_lossy(),
        };
        let next = SystemState::from_parts(state.t + dt, v_new, Density::from_raw(grid.clone(), u_new), escaped, p);
        Ok((next, record))
    }

    fn sample(&self, s: &SystemState<T>) -> Sample {
        Sample {
            t: s.t.to_f64_lossy(),
            v: s.v.to_f64_lossy(),
            m0: s.m0.to_f64_lossy(),
            m1: s.m1.to_f64_lossy(),
            mp: s.mp.to_f64_lossy(),
            mr: s.mr.to_f64_lossy(),
            x_norm: s.u.x_norm(self.params.r).to_f64_lossy(),
            escaped_mass: s.escaped.to_f64_lossy(),
        }
    }

    /// Integrates to `opts.horizon`, landing exactly on every output time.
    pub fn simulate(&self, initial: SystemState<T>, opts: &SimOptions) -> Result<Trajectory<T>> {
        if !(opts.horizon > 0.0) || !(opts.output_every > 0.0) {
            return Err(Error::Precondition("horizon and output_every must be positive".into()));
        }
        if !(opts.safety > 0.0 && opts.safety <= 1.0) || !(opts.max_dt > 0.0) {
            return Err(Error::Precondition("safety must lie in (0, 1] and max_dt must be positive".into()));
        }
        let n_out = (opts.horizon / opts.output_every - 1e-9).ceil() as usize;
        let mut state = initial;
        let t0 = state.t;
        let mut traj = Trajectory {
            samples: vec![self.sample(&state)],
            snapshots: Vec::new(),
            steps: Vec::new(),
            final_state: state.clone(),
            truncation_flag: false,
            rejected_steps: 0,
        };
        if opts.snapshot_every > 0 {
            traj.snapshots.push((state.t.to_f64_lossy(), state.u.clone()));
        }
        for k in 1..=n_out {
            let target = t0 + T::lit((k as f64 * opts.output_every).min(opts.horizon));
            while state.t < target {
                let remaining = target - state.t;
                let mut dt = (T::lit(opts.safety) * self.max_dt(&state)).min(T::lit(opts.max_dt));
                // avoid a sliver step just before the output time
                if dt >= remaining * T::lit(0.999) {
                    dt = remaining;
                } else if dt * T::lit(2.0) > remaining {
                    dt = remaining * T::lit(0.5);
                }
                let mut attempts = 0;
                let (next, record) = loop {
                    match self.step(&state, dt) {
                        Ok(ok) => break ok,
                        Err(Error::Cfl { .. } | Error::NegativeMonomer { .. }) if attempts < 40 => {
                            attempts += 1;
                            traj.rejected_steps += 1;
                            dt = dt * T::lit(0.5);
                        }
                        Err(e) => return Err(e),
                    }
                };
                state = next;
                if dt == remaining {
                    state.t = target;
                }
                traj.steps.push(record);
            }
            let sample = self.sample(&state);
            if sample.escaped_mass > 1e-6 * sample.m1 {
                traj.truncation_flag = true;
            }
            traj.samples.push(sample);
            if opts.snapshot_every > 0 && k % opts.snapshot_every == 0 {
                traj.snapshots.push((sample.t, state.u.clone()));
            }
        }
        traj.final_state = state;
        Ok(traj)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;

    fn pde(params: ModelParams<f64>) -> PrionPde<f64> {
        let grid = GridSpec::default().build(&params).unwrap();
        let frag = Arc::new(FragMatrix::assemble(grid, &params).unwrap());
        PrionPde::new(params, frag, Scheme::VanLeer)
    }

    #[test]
    fn dfe_is_stationary() {
        let params = ModelParams::canonical();
        let pde = pde(params);
        let u = Density::zeros(pde.frag().grid().clone());
        let s = SystemState::new(0.0, params.dfe_monomers(), u, &params).unwrap();
        let r = pde.rhs(&s);
        assert_eq!(r.dv, 0.0);
        assert!(r.du.iter().all(|&d| d == 0.0));
        let (next, _) = pde.step(&s, 0.5 * pde.max_dt(&s)).unwrap();
        assert_eq!(next.v, s.v);
        assert!(next.u.is_zero());
    }

    #[test]
    fn saturation_suppresses_polymerization() {
        let params = ModelParams { omega: 1e12, ..ModelParams::canonical() };
        let pde = pde(params);
        let u = Density::from_fn(pde.frag().grid().clone(), |x| (-x).exp()).unwrap();
        let s = SystemState::new(0.0, 1.5, u, &params).unwrap();
        let r = pde.rhs(&s);
        assert!((r.dv - (params.lambda - params.delta * 1.5)).abs() < 1e-9);
    }

    #[test]
    fn injected_profile_stays_nonnegative() {
        let params = ModelParams::canonical();
        let pde = pde(params);
        let u = Density::from_fn(pde.frag().grid().clone(), |x| 1e-6 * (-x).exp()).unwrap();
        let s = SystemState::new(0.0, params.dfe_monomers(), u, &params).unwrap();
        let (next, _) = pde.step(&s, pde.max_dt(&s)).unwrap();
        assert!(next.u.values().iter().all(|&v| v >= 0.0));
        assert!(next.v >= 0.0);
    }

    #[test]
    fn mass_budget_per_step() {
        let params = ModelParams { omega: 1.0, ..ModelParams::canonical() };
        let pde = pde(params);
        let u = Density::from_fn(pde.frag().grid().clone(), |x| 0.3 * x * (-x).exp()).unwrap();
        let s = SystemState::new(0.0, 1.7, u, &params).unwrap();
        for frac in [1.0, 0.5, 0.25] {
            let dt = frac * pde.max_dt(&s);
            let (next, _) = pde.step(&s, dt).unwrap();
            let predicted = dt * (s.incidence(&params) * s.v * params.tau * s.m1 - params.mu * s.m1);
            let err = (next.m1 - s.m1 - predicted).abs();
            assert!(err < 2.0 * dt * dt, "dt={dt}: {err}");
        }
    }

    #[test]
    fn canonical_equilibrium_is_nearly_stationary() {
        let params = ModelParams::canonical();
        let pde = pde(params);
        let u = Density::from_fn(pde.frag().grid().clone(), |x| (-x).exp()).unwrap();
        let s = SystemState::new(0.0, 1.0, u, &params).unwrap();
        let r = pde.rhs(&s);
        assert!(r.dv.abs() < 1e-3);
        assert!(pde.frag().grid().x_norm_of(&r.du, params.r) < 1e-2);
    }

    #[test]
    fn zero_polymers_relax_linearly() {
        let params = ModelParams::canonical();
        let pde = pde(params);
        let u = Density::zeros(pde.frag().grid().clone());
        let s = SystemState::new(0.0, 0.5, u, &params).unwrap();
        let opts = SimOptions { horizon: 3.0, output_every: 1.0, ..SimOptions::default() };
        let traj = pde.simulate(s, &opts).unwrap();
        assert_eq!(traj.samples.len(), 4);
        for smp in &traj.samples {
            let exact = 2.0 - 1.5 * (-smp.t).exp();
            assert!((smp.v - exact).abs() < 1e-4, "{} {}", smp.v, exact);
            assert_eq!(smp.m1, 0.0);
        }
        assert_eq!(traj.samples.last().unwrap().t, 3.0);
    }
}
