//! Self-similar change of variables and the reduced three-dimensional systems.
//!
//! With `k = 1/γ`, `Ẇ = γW(fV − μW)`, `W(0) = 1`, `ḣ = W`, `Q = ϱ₀e^{μ(h−t)}`,
//! the rescaled density `v(h, x) = W^k u(t, W^k x) e^{μ(t−h)}` solves the linear
//! growth-fragmentation equation and `P = W^kQ` is the polymer mass.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Density;
use crate::params::ModelParams;
use crate::pde::Trajectory;
use crate::profile::{linear_fit, LinearFlow, Profile};
use crate::real::Real;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TransformSample {
    pub t: f64,
    #[serde(rename = "W")]
    pub w: f64,
    pub h: f64,
    #[serde(rename = "Q")]
    pub q: f64,
    #[serde(rename = "P")]
    pub p: f64,
    #[serde(rename = "Y")]
    pub y: f64,
    #[serde(rename = "V")]
    pub v: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpsSeries {
    pub times: Vec<f64>,
    pub h: Vec<f64>,
    pub eps_0: Vec<f64>,
    pub eps_1: Vec<f64>,
    pub eps_p: Vec<f64>,
    pub eps_r: Vec<f64>,
}

impl EpsSeries {
    /// `ε_p` at time `t`, piecewise linear, constant beyond the ends.
    pub fn eps_p_at(&self, t: f64) -> f64 {
        interpolate(&self.times, &self.eps_p, t)
    }
}

fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => ys[0],
        n => {
            if x <= xs[0] {
                return ys[0];
            }
            if x >= xs[n - 1] {
                return ys[n - 1];
            }
            let j = xs.partition_point(|&v| v <= x).max(1);
            let th = (x - xs[j - 1]) / (xs[j] - xs[j - 1]);
            ys[j - 1] + th * (ys[j] - ys[j - 1])
        }
    }
}

#[derive(Clone, Debug)]
pub struct Transform<T> {
    pub rho0: f64,
    pub samples: Vec<TransformSample>,
    pub eps: EpsSeries,
    /// `(h, v)` for every density snapshot of the source trajectory.
    pub v_snapshots: Vec<(f64, Density<T>)>,
    /// `max |h − ∫₀ᵗ W|` with the integral taken by the trapezoid rule over the steps.
    pub h_quadrature_gap: f64,
    /// `min_t W(t)(1 + γμt)`.
    pub w_bound_margin: f64,
    /// `min_t [h(t) − ln(1+γμt)/(γμ)]`.
    pub h_bound_margin: f64,
}

/// Builds `W, h, Q` along a PDE trajectory.
///
/// `W` is advanced with the trajectory's own Heun stages. `Q` is taken from
/// the mass identity `m₁ = W^kQ`, which is the integrated form of
/// `Q̇ = μQ(W − 1)` at the discrete level, and `h = t + ln(Q/ϱ₀)/μ`; the
/// trapezoid integral of `W` is kept as an independent check of `ḣ = W`.
pub fn transform_from_pde<T: Real>(
    traj: &Trajectory<T>,
    params: &ModelParams<T>,
    profile: &Profile<T>,
) -> Result<Transform<T>> {
    let first = traj.samples.first().ok_or_else(|| Error::Degenerate("empty trajectory".into()))?;
    let rho0 = first.m1;
    if !(rho0 > 0.0) {
        return Err(Error::Degenerate("initial polymer mass is zero".into()));
    }
    let gamma = params.gamma.to_f64_lossy();
    let mu = params.mu.to_f64_lossy();
    let k = 1.0 / gamma;
    let (p, r) = (params.p.to_f64_lossy(), params.r.to_f64_lossy());
    let moments = [
        profile.m0.to_f64_lossy(),
        profile.m1.to_f64_lossy(),
        profile.mp.to_f64_lossy(),
        profile.mr.to_f64_lossy(),
    ];

    // W and ∫W at every step end
    let mut w = 1.0;
    let mut w_int = 0.0;
    let mut w_at = Vec::with_capacity(traj.samples.len());
    w_at.push((first.t, 1.0, 0.0));
    let mut next = 1;
    for s in &traj.steps {
        let w1 = w + s.dt * gamma * w * (s.fv0 - mu * w);
        let w_new = 0.5 * (w + w1 + s.dt * gamma * w1 * (s.fv1 - mu * w1));
        w_int += 0.5 * s.dt * (w + w_new);
        w = w_new;
        if !(w > 0.0) || !w.is_finite() {
            return Err(Error::BlowUp { t: s.t + s.dt });
        }
        let t_end = s.t + s.dt;
        if next < traj.samples.len() && (t_end - traj.samples[next].t).abs() <= 1e-9 * t_end.abs().max(1.0) {
            w_at.push((traj.samples[next].t, w, w_int));
            next += 1;
        }
    }
    if w_at.len() != traj.samples.len() {
        return Err(Error::Precondition("trajectory steps do not land on its output times".into()));
    }

    let mut samples = Vec::with_capacity(w_at.len());
    let mut eps = EpsSeries::default();
    let mut h_gap: f64 = 0.0;
    let mut w_margin = f64::INFINITY;
    let mut h_margin = f64::INFINITY;
    for (smp, &(t, w, w_int)) in traj.samples.iter().zip(&w_at) {
        let wk = w.powf(k);
        let q = smp.m1 / wk;
        let h = if q > 0.0 { (t - first.t) + (q / rho0).ln() / mu } else { f64::NAN };
        h_gap = h_gap.max((h - w_int).abs());
        let gm = gamma * mu * (t - first.t);
        w_margin = w_margin.min(w * (1.0 + gm));
        h_margin = h_margin.min(h - (1.0 + gm).ln() / (gamma * mu));
        samples.push(TransformSample { t, w, h, q, p: wk * q, y: smp.v + wk * q, v: smp.v });
        let e = |m: f64, big: f64, alpha: f64| m / (big * q * w.powf(k * alpha)) - 1.0;
        eps.times.push(t);
        eps.h.push(h);
        eps.eps_0.push(e(smp.m0, moments[0], 0.0));
        eps.eps_1.push(e(smp.m1, moments[1], 1.0));
        eps.eps_p.push(e(smp.mp, moments[2], p));
        eps.eps_r.push(e(smp.mr, moments[3], r));
    }

    let mut v_snapshots = Vec::with_capacity(traj.snapshots.len());
    for (t, u) in &traj.snapshots {
        let Some(s) = samples.iter().find(|s| (s.t - t).abs() <= 1e-9 * t.abs().max(1.0)) else {
            continue;
        };
        let v = u.rescale(T::lit(s.w.powf(k)))?.scaled(T::lit((mu * (s.t - first.t - s.h)).exp()));
        v_snapshots.push((s.h, v));
    }

    Ok(Transform {
        rho0,
        samples,
        eps,
        v_snapshots,
        h_quadrature_gap: h_gap,
        w_bound_margin: w_margin,
        h_bound_margin: h_margin,
    })
}

/// Relative residual `‖∂_h v + μ∂ₓ(xv) + μv − Fv‖_X / ‖v‖_X` of consecutive
/// rescaled snapshots, with a centred difference in `h`.
pub fn v_snapshot_residual<T: Real>(transform: &Transform<T>, flow: &LinearFlow<T>, r: T) -> Vec<(f64, f64)> {
    let grid = flow.grid().clone();
    transform
        .v_snapshots
        .windows(2)
        .filter_map(|pair| {
            let ((h1, v1), (h2, v2)) = (&pair[0], &pair[1]);
            let dh = h2 - h1;
            if !(dh > 0.0) {
                return None;
            }
            let mid: Vec<T> = v1.values().iter().zip(v2.values()).map(|(&a, &b)| T::lit(0.5) * (a + b)).collect();
            let mut rhs = vec![T::zero(); mid.len()];
            flow.rhs_into(&mid, &mut rhs);
            let res: Vec<T> = v1
                .values()
                .iter()
                .zip(v2.values())
                .zip(&rhs)
                .map(|((&a, &b), &f)| (b - a) / T::lit(dh) - f)
                .collect();
            let scale = grid.x_norm_of(&mid, r);
            Some((0.5 * (h1 + h2), (grid.x_norm_of(&res, r) / scale).to_f64_lossy()))
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Formulation {
    #[serde(rename = "VWQ")]
    Vwq,
    #[serde(rename = "VWP")]
    Vwp,
    #[serde(rename = "YQP")]
    Yqp,
}

/// Three scalars of the chosen formulation: `(V, W, Q)`, `(V, W, P)` or `(Y, Q, P)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReducedState<T> {
    pub formulation: Formulation,
    pub x: [T; 3],
}

impl<T: Real> ReducedState<T> {
    pub fn vwq(v: T, w: T, q: T) -> Self {
        ReducedState { formulation: Formulation::Vwq, x: [v, w, q] }
    }

    /// `(V, W, Q)` of the state.
    pub fn to_vwq(&self, gamma: T) -> [T; 3] {
        let k = gamma.recip();
        let [a, b, c] = self.x;
        match self.formulation {
            Formulation::Vwq => [a, b, c],
            Formulation::Vwp => [a, b, c / b.powf(k)],
            Formulation::Yqp => [a - c, (c / b).powf(gamma), b],
        }
    }

    pub fn convert(&self, target: Formulation, gamma: T) -> Self {
        let [v, w, q] = self.to_vwq(gamma);
        let p = w.powf(gamma.recip()) * q;
        let x = match target {
            Formulation::Vwq => [v, w, q],
            Formulation::Vwp => [v, w, p],
            Formulation::Yqp => [v + p, q, p],
        };
        ReducedState { formulation: target, x }
    }
}

/// `f(ε; I) = τ / (1 + ωM_p(1+ε)I)`.
pub fn reduced_incidence<T: Real>(params: &ModelParams<T>, mp: T, eps: T, i: T) -> T {
    params.tau / (T::one() + params.omega * mp * (T::one() + eps) * i)
}

pub fn reduced_rhs<T: Real>(state: &ReducedState<T>, params: &ModelParams<T>, mp: T, eps_p: T) -> [T; 3] {
    let (gamma, mu, lambda, delta, p) = (params.gamma, params.mu, params.lambda, params.delta, params.p);
    let k = gamma.recip();
    let [a, b, c] = state.x;
    match state.formulation {
        Formulation::Vwq => {
            let (v, w, q) = (a, b, c);
            let f = reduced_incidence(params, mp, eps_p, w.powf(k * p) * q);
            [lambda - v * (delta + f * w.powf(k) * q), gamma * w * (f * v - mu * w), mu * q * (w - T::one())]
        }
        Formulation::Vwp => {
            let (v, w, pp) = (a, b, c);
            let f = reduced_incidence(params, mp, eps_p, w.powf(k * (p - T::one())) * pp);
            [lambda - v * (delta + f * pp), gamma * w * (f * v - mu * w), pp * (f * v - mu)]
        }
        Formulation::Yqp => {
            let (y, q, pp) = (a, b, c);
            let f = reduced_incidence(params, mp, eps_p, pp.powf(p) * q.powf(T::one() - p));
            [
                lambda - delta * y + (delta - mu) * pp,
                mu * q * ((pp / q).powf(gamma) - T::one()),
                pp * (f * (y - pp) - mu),
            ]
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EpsSource {
    #[default]
    Zero,
    /// Sampled `ε_p(t)`, interpolated linearly.
    Series { times: Vec<f64>, values: Vec<f64> },
    /// `ε_p = ε⁰ e^{−a h}`.
    SyntheticDecay { eps0: f64, a: f64 },
}

impl EpsSource {
    pub fn from_series(eps: &EpsSeries) -> Self {
        EpsSource::Series { times: eps.times.clone(), values: eps.eps_p.clone() }
    }

    fn at(&self, t: f64, h: f64) -> f64 {
        match self {
            EpsSource::Zero => 0.0,
            EpsSource::Series { times, values } => interpolate(times, values, t),
            EpsSource::SyntheticDecay { eps0, a } => eps0 * (-a * h).exp(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ReducedSample {
    pub t: f64,
    #[serde(rename = "V")]
    pub v: f64,
    #[serde(rename = "W")]
    pub w: f64,
    #[serde(rename = "Q")]
    pub q: f64,
    #[serde(rename = "P")]
    pub p: f64,
    #[serde(rename = "Y")]
    pub y: f64,
    pub h: f64,
    pub eps_p: f64,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct OdeOptions {
    pub horizon: f64,
    pub dt: f64,
    pub output_every: f64,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions { horizon: 100.0, dt: 1e-3, output_every: 0.5 }
    }
}

const BLOW_UP: f64 = 1e12;

/// Classical RK4 with the auxiliary `ḣ = W`; outputs land on multiples of
/// `output_every`.
pub fn integrate_reduced<T: Real>(
    initial: &ReducedState<T>,
    params: &ModelParams<T>,
    mp: T,
    eps: &EpsSource,
    opts: &OdeOptions,
) -> Result<Vec<ReducedSample>> {
    if !(opts.horizon > 0.0 && opts.dt > 0.0 && opts.output_every > 0.0) {
        return Err(Error::Precondition("horizon, dt and output_every must be positive".into()));
    }
    let gamma = params.gamma;
    let formulation = initial.formulation;
    let w_of = |x: &[T; 3]| ReducedState { formulation, x: *x }.to_vwq(gamma)[1];
    let deriv = |t: f64, x: &[T; 3], h: T| -> ([T; 3], T) {
        let e = T::lit(eps.at(t, h.to_f64_lossy()));
        (reduced_rhs(&ReducedState { formulation, x: *x }, params, mp, e), w_of(x))
    };
    let record = |t: f64, x: &[T; 3], h: T| -> ReducedSample {
        let [v, w, q] = ReducedState { formulation, x: *x }.to_vwq(gamma);
        let p = w.powf(gamma.recip()) * q;
        ReducedSample {
            t,
            v: v.to_f64_lossy(),
            w: w.to_f64_lossy(),
            q: q.to_f64_lossy(),
            p: p.to_f64_lossy(),
            y: (v + p).to_f64_lossy(),
            h: h.to_f64_lossy(),
            eps_p: eps.at(t, h.to_f64_lossy()),
        }
    };
    let n_out = (opts.horizon / opts.output_every - 1e-9).ceil() as usize;
    let sub = (opts.output_every / opts.dt - 1e-9).ceil().max(1.0) as usize;
    let mut x = initial.x;
    let mut h = T::zero();
    let mut out = vec![record(0.0, &x, h)];
    let axpy = |x: &[T; 3], k: &[T; 3], s: T| [x[0] + s * k[0], x[1] + s * k[1], x[2] + s * k[2]];
    let mut t_prev = 0.0;
    for j in 1..=n_out {
        let t_out = (j as f64 * opts.output_every).min(opts.horizon);
        let dt = (t_out - t_prev) / sub as f64;
        let dtt = T::lit(dt);
        let half = T::lit(0.5);
        for i in 0..sub {
            let t = t_prev + i as f64 * dt;
            let (k1, w1) = deriv(t, &x, h);
            let (k2, w2) = deriv(t + 0.5 * dt, &axpy(&x, &k1, half * dtt), h + half * dtt * w1);
            let (k3, w3) = deriv(t + 0.5 * dt, &axpy(&x, &k2, half * dtt), h + half * dtt * w2);
            let (k4, w4) = deriv(t + dt, &axpy(&x, &k3, dtt), h + dtt * w3);
            let sixth = dtt / T::lit(6.0);
            for c in 0..3 {
                x[c] = x[c] + sixth * (k1[c] + T::lit(2.0) * (k2[c] + k3[c]) + k4[c]);
            }
            h = h + sixth * (w1 + T::lit(2.0) * (w2 + w3) + w4);
            if x.iter().any(|v| !v.is_finite() || v.abs() > T::lit(BLOW_UP)) {
                return Err(Error::BlowUp { t: t + dt });
            }
        }
        out.push(record(t_out, &x, h));
        t_prev = t_out;
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct ConsistencyReport {
    pub sup_v: f64,
    pub sup_w: f64,
    pub sup_q: f64,
    pub sup_p: f64,
    pub n: usize,
}

impl ConsistencyReport {
    pub fn max(&self) -> f64 {
        self.sup_v.max(self.sup_w).max(self.sup_q).max(self.sup_p)
    }
}

/// Sup-norm deviations between the transformed PDE and a reduced trajectory.
pub fn consistency_check(pde: &[TransformSample], reduced: &[ReducedSample]) -> Result<ConsistencyReport> {
    if pde.len() != reduced.len() {
        return Err(Error::Precondition(format!("time grids differ in length ({} vs {})", pde.len(), reduced.len())));
    }
    let mut rep = ConsistencyReport { n: pde.len(), ..Default::default() };
    for (a, b) in pde.iter().zip(reduced) {
        if (a.t - b.t).abs() > 1e-9 * a.t.abs().max(1.0) {
            return Err(Error::Precondition(format!("time grids differ at t = {} vs {}", a.t, b.t)));
        }
        rep.sup_v = rep.sup_v.max((a.v - b.v).abs());
        rep.sup_w = rep.sup_w.max((a.w - b.w).abs());
        rep.sup_q = rep.sup_q.max((a.q - b.q).abs());
        rep.sup_p = rep.sup_p.max((a.p - b.p).abs());
    }
    Ok(rep)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DecayFit {
    /// Fitted `a` in `|ε| ≲ C e^{−a h}`; `None` when `|ε|` stays below the floor.
    pub rate: Option<f64>,
    pub fit_residual: f64,
    pub samples: usize,
    pub max_abs: f64,
}

/// Fits the running-max envelope `sup_{s≥h}|ε(s)|` against `h` over the
/// samples where it exceeds `floor`.
pub fn fit_decay(h: &[f64], eps: &[f64], floor: f64) -> DecayFit {
    let mut env = vec![0.0; eps.len()];
    let mut run: f64 = 0.0;
    for i in (0..eps.len()).rev() {
        run = run.max(eps[i].abs());
        env[i] = run;
    }
    let pts: Vec<(f64, f64)> = h.iter().zip(&env).filter(|(_, &e)| e > floor).map(|(&h, &e)| (h, e.ln())).collect();
    let max_abs = env.first().copied().unwrap_or(0.0);
    if pts.len() < 3 {
        return DecayFit { rate: None, fit_residual: 0.0, samples: pts.len(), max_abs };
    }
    let (slope, _, res) = linear_fit(&pts);
    DecayFit { rate: Some(-slope), fit_residual: res, samples: pts.len(), max_abs }
}
