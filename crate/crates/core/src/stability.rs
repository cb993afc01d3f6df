//! Equilibria of the reduced system, linear stability at the endemic state,
//! the cooperative sign pattern, and trajectory monitors.

use num_complex::Complex;
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::params::{FragKernel, ModelParams};
use crate::pde::Sample;
use crate::profile::linear_fit;
use crate::real::Real;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Endemic<T> {
    pub v: T,
    pub q: T,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Equilibria<T> {
    pub r0: T,
    /// Monomers at the disease-free state, `λ/δ`.
    pub v_bar: T,
    /// `τV̄ − μ`, positive exactly when `R0 > 1`.
    pub theta: T,
    pub endemic: Option<Endemic<T>>,
}

pub fn equilibria<T: Real>(params: &ModelParams<T>, mp: T) -> Equilibria<T> {
    let r0 = params.r0();
    let v_bar = params.dfe_monomers();
    let endemic = (r0 > T::one()).then(|| {
        let wm = params.omega * mp;
        Endemic {
            v: (params.mu + params.lambda * wm) / (params.tau + params.delta * wm),
            q: (r0 - T::one()) / (params.tau / params.delta + wm),
        }
    });
    Equilibria { r0, v_bar, theta: params.tau * v_bar - params.mu, endemic }
}

/// Relative residuals of `λ = δV + τVQ/(1+ωM_pQ)` and `μ = τV/(1+ωM_pQ)`.
pub fn endemic_residual<T: Real>(params: &ModelParams<T>, mp: T, ee: &Endemic<T>) -> (T, T) {
    let f = params.tau / (T::one() + params.omega * mp * ee.q);
    let r1 = (params.lambda - params.delta * ee.v - f * ee.v * ee.q).abs() / params.lambda;
    let r2 = (params.mu - f * ee.v).abs() / params.mu;
    (r1, r2)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Jacobian<T> {
    pub matrix: [[T; 3]; 3],
    /// Trace, determinant and sum of principal 2×2 minors, in closed form.
    pub t: T,
    pub d: T,
    pub m: T,
}

pub fn trace<T: Real>(a: &[[T; 3]; 3]) -> T {
    a[0][0] + a[1][1] + a[2][2]
}

pub fn determinant<T: Real>(a: &[[T; 3]; 3]) -> T {
    a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
}

pub fn principal_minor_sum<T: Real>(a: &[[T; 3]; 3]) -> T {
    (a[0][0] * a[1][1] - a[0][1] * a[1][0])
        + (a[0][0] * a[2][2] - a[0][2] * a[2][0])
        + (a[1][1] * a[2][2] - a[1][2] * a[2][1])
}

/// Jacobian of the homogeneous `(V, W, Q)` system at `(V∞, 1, Q∞)`.
pub fn jacobian_ee<T: Real>(params: &ModelParams<T>, mp: T) -> Result<Jacobian<T>> {
    let ee = equilibria(params, mp)
        .endemic
        .ok_or_else(|| Error::Precondition("no endemic equilibrium when R0 <= 1".into()))?;
    let (v, q) = (ee.v, ee.q);
    let (gamma, mu, delta, p, k) = (params.gamma, params.mu, params.delta, params.p, params.k());
    let s = T::one() + params.omega * mp * q;
    let f = params.tau / s;
    let fp = -params.tau * params.omega * mp / (s * s);
    let z = T::zero();
    let matrix = [
        [-delta - q * f, -k * v * q * (p * q * fp + f), -v * (q * fp + f)],
        [gamma * f, p * q * fp * v - gamma * mu, gamma * fp * v],
        [z, mu * q, z],
    ];
    let t = -delta - gamma * mu - q * f + p * v * q * fp;
    let d = gamma * mu * v * q * (delta * fp - f * f);
    let m = gamma * mu * (delta + q * f - v * q * fp) - p * delta * v * q * fp + v * q * f * f;
    Ok(Jacobian { matrix, t, d, m })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RouthHurwitz {
    pub pass: bool,
    /// Roots of `λ³ − Tλ² + Mλ − D` as `(re, im)`.
    pub eigenvalues: Vec<(f64, f64)>,
    pub max_real_part: f64,
    /// `pass` agrees with the sign of the largest real part.
    pub consistent: bool,
}

pub fn routh_hurwitz<T: Real>(t: T, d: T, m: T) -> Result<RouthHurwitz> {
    let pass = t < T::zero() && d < T::zero() && m * t < d;
    let companion = vec![
        vec![t, -m, d],
        vec![T::one(), T::zero(), T::zero()],
        vec![T::zero(), T::one(), T::zero()],
    ];
    let roots = merge_clusters(hessenberg_eigenvalues(companion)?);
    let eigenvalues: Vec<(f64, f64)> = roots.iter().map(|z| (z.re.to_f64_lossy(), z.im.to_f64_lossy())).collect();
    let max_real_part = eigenvalues.iter().map(|e| e.0).fold(f64::NEG_INFINITY, f64::max);
    let consistent = pass == (max_real_part < -1e-10);
    Ok(RouthHurwitz { pass, eigenvalues, max_real_part, consistent })
}

/// Replaces groups of roots closer than `10·ε^{1/3}` (relative) by their mean.
///
/// An `m`-fold root is perturbed by `O(ε^{1/m})` in each simple root, while the
/// cluster mean stays accurate to `O(ε)`.
fn merge_clusters<T: Real>(roots: Vec<Complex<T>>) -> Vec<Complex<T>> {
    let n = roots.len();
    let scale = roots.iter().map(|z| z.norm()).fold(T::one(), T::max);
    let radius = T::lit(10.0) * T::epsilon().cbrt() * scale;
    let mut label: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for j in 0..i {
            if (roots[i] - roots[j]).norm() < radius {
                let (a, b) = (label[i], label[j]);
                for l in label.iter_mut() {
                    if *l == a {
                        *l = b;
                    }
                }
            }
        }
    }
    let mut out = roots.clone();
    for i in 0..n {
        let members: Vec<usize> = (0..n).filter(|&j| label[j] == label[i]).collect();
        if members.len() > 1 {
            let sum = members.iter().fold(Complex::new(T::zero(), T::zero()), |acc, &j| acc + roots[j]);
            out[i] = sum / T::from_usize_lossy(members.len());
        }
    }
    out
}

/// Eigenvalues of an upper Hessenberg matrix by the shifted QR iteration
/// (Francis double shift with exceptional shifts).
pub fn hessenberg_eigenvalues<T: Real>(h: Vec<Vec<T>>) -> Result<Vec<Complex<T>>> {
    let n = h.len();
    // 1-based working copy
    let mut a = vec![vec![T::zero(); n + 1]; n + 1];
    for i in 0..n {
        for j in 0..n {
            a[i + 1][j + 1] = h[i][j];
        }
    }
    let (mut wr, mut wi) = (vec![T::zero(); n + 1], vec![T::zero(); n + 1]);
    let mut anorm = T::zero();
    for i in 1..=n {
        for j in i.saturating_sub(1).max(1)..=n {
            anorm = anorm + a[i][j].abs();
        }
    }
    let (half, zero) = (T::lit(0.5), T::zero());
    let sign = |a: T, b: T| if b >= T::zero() { a.abs() } else { -a.abs() };
    let mut nn = n;
    let mut t = zero;
    let (mut p, mut q, mut r);
    let (mut x, mut y, mut z, mut w);
    while nn >= 1 {
        let mut its = 0;
        loop {
            let mut l = nn;
            while l >= 2 {
                let mut s = a[l - 1][l - 1].abs() + a[l][l].abs();
                if s == zero {
                    s = anorm;
                }
                if a[l][l - 1].abs() + s == s {
                    a[l][l - 1] = zero;
                    break;
                }
                l -= 1;
            }
            x = a[nn][nn];
            if l == nn {
                wr[nn] = x + t;
                wi[nn] = zero;
                nn -= 1;
            } else {
                y = a[nn - 1][nn - 1];
                w = a[nn][nn - 1] * a[nn - 1][nn];
                if l == nn - 1 {
                    p = half * (y - x);
                    q = p * p + w;
                    z = q.abs().sqrt();
                    x = x + t;
                    if q >= zero {
                        z = p + sign(z, p);
                        wr[nn - 1] = x + z;
                        wr[nn] = x + z;
                        if z != zero {
                            wr[nn] = x - w / z;
                        }
                        wi[nn - 1] = zero;
                        wi[nn] = zero;
                    } else {
                        wr[nn - 1] = x + p;
                        wr[nn] = x + p;
                        wi[nn - 1] = -z;
                        wi[nn] = z;
                    }
                    nn -= 2;
                } else {
                    if its == 60 {
                        return Err(Error::NonConvergence { steps: its, increment: a[nn][nn - 1].to_f64_lossy() });
                    }
                    if its == 10 || its == 20 || its == 40 {
                        t = t + x;
                        for i in 1..=nn {
                            a[i][i] = a[i][i] - x;
                        }
                        let s = a[nn][nn - 1].abs() + a[nn - 1][nn - 2].abs();
                        x = T::lit(0.75) * s;
                        y = x;
                        w = T::lit(-0.4375) * s * s;
                    }
                    its += 1;
                    let mut m = nn - 2;
                    loop {
                        z = a[m][m];
                        let r0 = x - z;
                        let s0 = y - z;
                        p = (r0 * s0 - w) / a[m + 1][m] + a[m][m + 1];
                        q = a[m + 1][m + 1] - z - r0 - s0;
                        r = a[m + 2][m + 1];
                        let s = p.abs() + q.abs() + r.abs();
                        p = p / s;
                        q = q / s;
                        r = r / s;
                        if m == l {
                            break;
                        }
                        let u = a[m][m - 1].abs() * (q.abs() + r.abs());
                        let v = p.abs() * (a[m - 1][m - 1].abs() + z.abs() + a[m + 1][m + 1].abs());
                        if u + v == v {
                            break;
                        }
                        m -= 1;
                    }
                    for i in (m + 2)..=nn {
                        a[i][i - 2] = zero;
                        if i != m + 2 {
                            a[i][i - 3] = zero;
                        }
                    }
                    let mut k = m;
                    while k < nn {
                        if k != m {
                            p = a[k][k - 1];
                            q = a[k + 1][k - 1];
                            r = zero;
                            if k != nn - 1 {
                                r = a[k + 2][k - 1];
                            }
                            x = p.abs() + q.abs() + r.abs();
                            if x != zero {
                                p = p / x;
                                q = q / x;
                                r = r / x;
                            }
                        }
                        let s = sign((p * p + q * q + r * r).sqrt(), p);
                        if s != zero {
                            if k == m {
                                if l != m {
                                    a[k][k - 1] = -a[k][k - 1];
                                }
                            } else {
                                a[k][k - 1] = -s * x;
                            }
                            p = p + s;
                            x = p / s;
                            y = q / s;
                            z = r / s;
                            q = q / p;
                            r = r / p;
                            for j in k..=nn {
                                p = a[k][j] + q * a[k + 1][j];
                                if k != nn - 1 {
                                    p = p + r * a[k + 2][j];
                                    a[k + 2][j] = a[k + 2][j] - p * z;
                                }
                                a[k + 1][j] = a[k + 1][j] - p * y;
                                a[k][j] = a[k][j] - p * x;
                            }
                            let mmin = if nn < k + 3 { nn } else { k + 3 };
                            for i in l..=mmin {
                                p = x * a[i][k] + y * a[i][k + 1];
                                if k != nn - 1 {
                                    p = p + z * a[i][k + 2];
                                    a[i][k + 2] = a[i][k + 2] - p * r;
                                }
                                a[i][k + 1] = a[i][k + 1] - p * q;
                                a[i][k] = a[i][k] - p;
                            }
                        }
                        k += 1;
                    }
                }
            }
            if nn < 2 || l + 1 >= nn {
                break;
            }
        }
    }
    Ok((1..=n).map(|i| Complex::new(wr[i], wi[i])).collect())
}

/// Sign of an entry of the linearized `(Y, Q, P)` system; `None` marks a
/// diagonal entry of either sign.
pub type SignPattern = [[Option<i8>; 3]; 3];

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Cooperative {
    /// All off-diagonal signs are nonnegative (`p ≥ 1` and `δ ≥ μ`).
    pub cooperative: bool,
    /// The off-diagonal graph is strongly connected (`p ≠ 1` and `δ ≠ μ`).
    pub irreducible: bool,
    pub sign_pattern: SignPattern,
}

fn sgn<T: Real>(x: T) -> i8 {
    if x > T::zero() {
        1
    } else if x < T::zero() {
        -1
    } else {
        0
    }
}

pub fn cooperative_check<T: Real>(params: &ModelParams<T>) -> Cooperative {
    let a = sgn(params.delta - params.mu);
    let b = sgn(params.p - T::one());
    let sign_pattern = [[Some(-1), Some(0), Some(a)], [Some(0), None, Some(1)], [Some(1), Some(b), None]];
    let off = [(0, 1), (0, 2), (1, 0), (1, 2), (2, 0), (2, 1)];
    let cooperative = off.iter().all(|&(i, j)| sign_pattern[i][j].unwrap_or(0) >= 0);
    // entry (i, j) ≠ 0 is an edge j → i
    let mut reach = [[false; 3]; 3];
    for &(i, j) in &off {
        reach[j][i] = sign_pattern[i][j].unwrap_or(0) != 0;
    }
    for (i, row) in reach.iter_mut().enumerate() {
        row[i] = true;
    }
    for k in 0..3 {
        for i in 0..3 {
            for j in 0..3 {
                reach[i][j] = reach[i][j] || (reach[i][k] && reach[k][j]);
            }
        }
    }
    let irreducible = reach.iter().all(|row| row.iter().all(|&x| x));
    Cooperative { cooperative, irreducible, sign_pattern }
}

#[derive(Clone, Debug, Serialize)]
pub struct StabilityReport {
    #[serde(rename = "R0")]
    pub r0: f64,
    pub v_bar: f64,
    pub theta: f64,
    pub v_inf: Option<f64>,
    pub q_inf: Option<f64>,
    pub ee_residual: Option<(f64, f64)>,
    pub jacobian: Option<[[f64; 3]; 3]>,
    #[serde(rename = "T")]
    pub t: Option<f64>,
    #[serde(rename = "D")]
    pub d: Option<f64>,
    #[serde(rename = "M")]
    pub m: Option<f64>,
    pub routh_hurwitz_pass: Option<bool>,
    pub eigenvalues: Option<Vec<(f64, f64)>>,
    pub max_real_part: Option<f64>,
    pub cooperative: bool,
    pub irreducible: bool,
    pub sign_pattern: SignPattern,
}

pub fn stability_report<T: Real>(params: &ModelParams<T>, mp: T) -> Result<StabilityReport> {
    let eq = equilibria(params, mp);
    let coop = cooperative_check(params);
    let f = |x: T| x.to_f64_lossy();
    let mut rep = StabilityReport {
        r0: f(eq.r0),
        v_bar: f(eq.v_bar),
        theta: f(eq.theta),
        v_inf: None,
        q_inf: None,
        ee_residual: None,
        jacobian: None,
        t: None,
        d: None,
        m: None,
        routh_hurwitz_pass: None,
        eigenvalues: None,
        max_real_part: None,
        cooperative: coop.cooperative,
        irreducible: coop.irreducible,
        sign_pattern: coop.sign_pattern,
    };
    if let Some(ee) = eq.endemic {
        let (r1, r2) = endemic_residual(params, mp, &ee);
        let jac = jacobian_ee(params, mp)?;
        let rh = routh_hurwitz(jac.t, jac.d, jac.m)?;
        rep.v_inf = Some(f(ee.v));
        rep.q_inf = Some(f(ee.q));
        rep.ee_residual = Some((f(r1), f(r2)));
        rep.jacobian = Some(jac.matrix.map(|row| row.map(f)));
        rep.t = Some(f(jac.t));
        rep.d = Some(f(jac.d));
        rep.m = Some(f(jac.m));
        rep.routh_hurwitz_pass = Some(rh.pass);
        rep.eigenvalues = Some(rh.eigenvalues);
        rep.max_real_part = Some(rh.max_real_part);
    }
    Ok(rep)
}

/// Random parameter set with `R0 > 1` together with a profile moment `M_p`:
/// rates log-uniform on `[0.1, 10]`, `p` uniform on `[0, 3]`.
pub fn sample_endemic_params<R: Rng>(rng: &mut R) -> (ModelParams<f64>, f64) {
    let log_uniform = |rng: &mut R| 10f64.powf(rng.random_range(-1.0..=1.0));
    loop {
        let p = rng.random_range(0.0..=3.0);
        let params = ModelParams {
            lambda: log_uniform(rng),
            delta: log_uniform(rng),
            tau: log_uniform(rng),
            mu: log_uniform(rng),
            beta: log_uniform(rng),
            gamma: log_uniform(rng),
            omega: log_uniform(rng),
            p,
            r: p.max(1.0) + 1.0,
            kernel: FragKernel::Uniform,
        };
        let mp = log_uniform(rng);
        if params.r0() > 1.0 {
            return (params, mp);
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LyapunovReport {
    pub t: Vec<f64>,
    pub l: Vec<f64>,
    pub max_l: f64,
    /// Largest forward difference `L(t_{n+1}) − L(t_n)`.
    pub max_increment: f64,
    /// `max_increment ≤ 1e−8·max_l`.
    pub monotone: bool,
    /// Log-linear decay rate of `L` over `[1e−12, 1e−1]·max_l`.
    pub decay_rate: Option<f64>,
    /// `min(μ − τV̄, 2δ)`.
    pub rate_bound: f64,
    /// `sup t·L(t)` over the third and over the last quarter of the run.
    pub tail_tl_q3: f64,
    pub tail_tl_q4: f64,
    /// `C` in `L(t) ≤ 1/(1/L(t₀) + Ct)` fitted on the second half.
    pub algebraic_c: Option<f64>,
}

/// `L = V̄P + (V − V̄)²/2` along a trajectory, with `P = m₁`.
pub fn lyapunov_monitor(samples: &[Sample], params: &ModelParams<f64>) -> LyapunovReport {
    let v_bar = params.dfe_monomers();
    let t: Vec<f64> = samples.iter().map(|s| s.t).collect();
    let l: Vec<f64> = samples.iter().map(|s| v_bar * s.m1 + 0.5 * (s.v - v_bar).powi(2)).collect();
    let max_l = l.iter().copied().fold(0.0, f64::max);
    let max_increment = l.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
    let pts: Vec<(f64, f64)> = t
        .iter()
        .zip(&l)
        .filter(|(_, &v)| v > 1e-12 * max_l && v < 1e-1 * max_l)
        .map(|(&t, &v)| (t, v.ln()))
        .collect();
    let decay_rate = (pts.len() >= 3).then(|| -linear_fit(&pts).0);
    let n = t.len();
    let sup_tl = |from: usize, to: usize| (from..to).map(|i| t[i] * l[i]).fold(0.0, f64::max);
    let half = n / 2;
    let fit: Vec<(f64, f64)> = (half..n).filter(|&i| l[i] > 0.0).map(|i| (t[i] - t[half], 1.0 / l[i] - 1.0 / l[half])).collect();
    let algebraic_c = (fit.len() >= 3 && l[half] > 0.0).then(|| {
        let sxx: f64 = fit.iter().map(|p| p.0 * p.0).sum();
        fit.iter().map(|p| p.0 * p.1).sum::<f64>() / sxx
    });
    LyapunovReport {
        monotone: max_increment <= 1e-8 * max_l,
        max_increment: max_increment.max(0.0),
        rate_bound: (params.mu - params.tau * v_bar).min(2.0 * params.delta),
        decay_rate,
        tail_tl_q3: sup_tl(half, 3 * n / 4),
        tail_tl_q4: sup_tl(3 * n / 4, n),
        algebraic_c,
        t,
        l,
        max_l,
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct PersistenceReport {
    /// `false` when `u₀ ≡ 0`, where persistence is not claimed.
    pub applicable: bool,
    /// `min m₁` over the final `window` fraction of the run.
    pub floor: f64,
    pub window: f64,
    pub threshold: f64,
    pub persists: bool,
    pub max_v_plus_p: f64,
    /// `max(V₀ + P₀, λ / min(δ, μ))`.
    pub bound: f64,
    pub bounded: bool,
}

pub fn persistence_monitor(samples: &[Sample], params: &ModelParams<f64>, window: f64, threshold: f64) -> PersistenceReport {
    let first = samples[0];
    let t_end = samples.last().map(|s| s.t).unwrap_or(first.t);
    let t_from = t_end - window * (t_end - first.t);
    let floor = samples.iter().filter(|s| s.t >= t_from).map(|s| s.m1).fold(f64::INFINITY, f64::min);
    let max_v_plus_p = samples.iter().map(|s| s.v + s.m1).fold(f64::NEG_INFINITY, f64::max);
    let bound = (first.v + first.m1).max(params.lambda / params.delta.min(params.mu));
    let applicable = first.m1 > 0.0;
    PersistenceReport {
        applicable,
        floor,
        window,
        threshold,
        persists: applicable && floor >= threshold,
        max_v_plus_p,
        bound,
        bounded: max_v_plus_p <= bound + 1e-8,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn canonical(omega: f64) -> ModelParams<f64> {
        ModelParams { omega, ..ModelParams::canonical() }
    }

    #[test]
    fn endemic_values() {
        let e = equilibria(&canonical(0.0), 1.0).endemic.unwrap();
        assert!((e.v - 1.0).abs() < 1e-15 && (e.q - 1.0).abs() < 1e-15);
        let params = canonical(1.0);
        let e = equilibria(&params, 1.0).endemic.unwrap();
        assert!((e.v - 1.5).abs() < 1e-15 && (e.q - 0.5).abs() < 1e-15);
        let (r1, r2) = endemic_residual(&params, 1.0, &e);
        assert!(r1 < 1e-15 && r2 < 1e-15);
        let critical = ModelParams { lambda: 1.0, ..ModelParams::canonical() };
        let eq = equilibria(&critical, 1.0);
        assert!(eq.endemic.is_none());
        assert_eq!(eq.v_bar, 1.0);
    }

    #[test]
    fn canonical_jacobian() {
        let jac = jacobian_ee(&canonical(0.0), 1.0).unwrap();
        let expect = [[-2.0, -1.0, -1.0], [1.0, -1.0, 0.0], [0.0, 1.0, 0.0]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((jac.matrix[i][j] - expect[i][j]).abs() < 1e-15);
            }
        }
        assert_eq!((jac.t, jac.d, jac.m), (-3.0, -1.0, 3.0));
        assert!(jacobian_ee(&ModelParams { lambda: 0.5, ..ModelParams::canonical() }, 1.0).is_err());
    }

    #[test]
    fn closed_forms_match_matrix_invariants() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        use rand::SeedableRng;
        for _ in 0..200 {
            let (params, mp) = sample_endemic_params(&mut rng);
            let jac = jacobian_ee(&params, mp).unwrap();
            let scale = jac.matrix.iter().flatten().fold(1.0f64, |a, &b| a.max(b.abs()));
            assert!((trace(&jac.matrix) - jac.t).abs() <= 1e-12 * scale);
            assert!((determinant(&jac.matrix) - jac.d).abs() <= 1e-11 * scale.powi(3));
            assert!((principal_minor_sum(&jac.matrix) - jac.m).abs() <= 1e-11 * scale.powi(2));
        }
    }

    #[test]
    fn triple_root() {
        let rh = routh_hurwitz(-3.0, -1.0, 3.0).unwrap();
        assert!(rh.pass && rh.consistent);
        for (re, im) in rh.eigenvalues {
            assert!((re + 1.0).abs() < 1e-8 && im.abs() < 1e-8, "{re} {im}");
        }
    }

    #[test]
    fn failing_cases() {
        assert!(!routh_hurwitz(1.0, -1.0, 3.0).unwrap().pass);
        let zero = routh_hurwitz(0.0, 0.0, 0.0).unwrap();
        assert!(!zero.pass);
        assert!(zero.eigenvalues.iter().all(|&(re, im)| re.abs() < 1e-12 && im.abs() < 1e-12));
    }

    #[test]
    fn qr_matches_known_spectra() {
        // (λ−1)(λ+2)(λ−3) = λ³ − 2λ² − 5λ + 6 → T=2, M=−5, D=−6
        let mut e = hessenberg_eigenvalues::<f64>(vec![vec![2.0, 5.0, -6.0], vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]).unwrap();
        e.sort_by(|a, b| a.re.partial_cmp(&b.re).unwrap());
        for (z, want) in e.iter().zip([-2.0, 1.0, 3.0]) {
            assert!((z.re - want).abs() < 1e-12 && z.im.abs() < 1e-12);
        }
        // (λ+1)(λ² + 4) → T=−1, M=4, D=−4: roots −1, ±2i
        let rh = routh_hurwitz(-1.0, -4.0, 4.0).unwrap();
        assert!(!rh.pass);
        assert!(rh.max_real_part.abs() < 1e-12);
        let mut im: Vec<f64> = rh.eigenvalues.iter().map(|e| e.1).collect();
        im.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((im[0] + 2.0).abs() < 1e-12 && im[1].abs() < 1e-12 && (im[2] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn cooperative_cases() {
        let base = ModelParams::<f64>::canonical();
        let c = cooperative_check(&base);
        assert!(c.cooperative && !c.irreducible);
        assert!(!cooperative_check(&ModelParams { p: 0.5, ..base }).cooperative);
        assert!(!cooperative_check(&ModelParams { p: 2.0, delta: 0.5, ..base }).cooperative);
        let strict = cooperative_check(&ModelParams { p: 2.0, delta: 2.0, r: 3.0, ..base });
        assert!(strict.cooperative && strict.irreducible);
    }

    fn sample(t: f64, v: f64, m1: f64) -> Sample {
        Sample { t, v, m0: m1, m1, mp: m1, mr: m1, x_norm: m1, escaped_mass: 0.0 }
    }

    #[test]
    fn lyapunov_at_dfe_vanishes() {
        let params = ModelParams::canonical();
        let s: Vec<Sample> = (0..10).map(|i| sample(i as f64, 2.0, 0.0)).collect();
        let rep = lyapunov_monitor(&s, &params);
        assert!(rep.l.iter().all(|&l| l == 0.0));
        assert!(rep.decay_rate.is_none());
    }

    #[test]
    fn persistence_without_polymers_is_not_applicable() {
        let params = ModelParams::canonical();
        let s: Vec<Sample> = (0..10).map(|i| sample(i as f64, 2.0, 0.0)).collect();
        let rep = persistence_monitor(&s, &params, 1.0 / 3.0, 0.5);
        assert!(!rep.applicable && !rep.persists && rep.bounded);
    }
}
