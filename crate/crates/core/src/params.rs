//! Model coefficients and the self-similar fragmentation kernel family.

use std::fmt;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::real::Real;

/// Shape function `℘(z)` on `[0, 1]` of the kernel `κ(x, y) = ℘(x/y)/y`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
#[serde(bound = "T: Real")]
pub enum FragKernel<T> {
    #[default]
    /// `℘ ≡ 1`, i.e. `κ(x, y) = 1/y`.
    Uniform,
    /// `℘(z) = c·zᵃ(1−z)ᵃ` with `c` fixed by `2∫z℘ = 1`.
    SymmetricPower { a: T },
}

impl<T: Real> FragKernel<T> {
    /// Closed-form constant `c`: `2c·B(a+2, a+1) = 1`.
    pub fn normalization_constant(&self) -> T {
        match *self {
            FragKernel::Uniform => T::one(),
            FragKernel::SymmetricPower { a } => {
                let a = a.to_f64_lossy();
                let ln_beta = ln_gamma(a + 2.0) + ln_gamma(a + 1.0) - ln_gamma(2.0 * a + 3.0);
                T::lit(0.5 * (-ln_beta).exp())
            }
        }
    }

    pub fn eval(&self, z: T) -> T {
        match *self {
            FragKernel::Uniform => T::one(),
            FragKernel::SymmetricPower { a } => {
                if a == T::zero() {
                    return T::one();
                }
                let z = z.max(T::zero()).min(T::one());
                self.normalization_constant() * (z * (T::one() - z)).powf(a)
            }
        }
    }

    /// `∫₀¹ |℘'(z)| dz`, in closed form. ℘ is unimodal and symmetric, so the
    /// total variation is `2(℘(½) − ℘(0))`.
    pub fn derivative_total_variation(&self) -> T {
        match *self {
            FragKernel::Uniform => T::zero(),
            FragKernel::SymmetricPower { a } if a == T::zero() => T::zero(),
            FragKernel::SymmetricPower { a } => {
                T::lit(2.0) * self.normalization_constant() * T::lit(0.25).powf(a)
            }
        }
    }

    /// `|2∫₀¹ z℘(z) dz − 1|` with composite Simpson on `quad_points` nodes.
    pub fn normalization_residual(&self, quad_points: usize) -> T {
        let integral = composite_simpson(|z| z * self.eval(z), T::zero(), T::one(), quad_points);
        (T::lit(2.0) * integral - T::one()).abs()
    }

    fn validate(&self, out: &mut Vec<Violation>) {
        if let FragKernel::SymmetricPower { a } = *self {
            if !(a >= T::zero()) || !a.is_finite() {
                out.push(Violation {
                    field: "kernel.a",
                    message: "symmetric power kernel exponent must be finite and >= 0".into(),
                });
            }
        }
    }
}

/// Composite Simpson on `nodes` equally spaced points (a trailing 3/8 panel
/// handles an odd interval count; two nodes fall back to the trapezoid rule).
pub fn composite_simpson<T: Real>(f: impl Fn(T) -> T, lo: T, hi: T, nodes: usize) -> T {
    assert!(nodes >= 2, "quadrature needs at least two nodes");
    let n = nodes - 1;
    let h = (hi - lo) / T::from_usize_lossy(n);
    let x = |i: usize| lo + h * T::from_usize_lossy(i);
    if n == 1 {
        return h * (f(lo) + f(hi)) * T::lit(0.5);
    }
    let (simpson_panels, tail) = if n.is_multiple_of(2) { (n, false) } else { (n - 3, true) };
    let mut acc = T::zero();
    if simpson_panels > 0 {
        let mut s = f(x(0)) + f(x(simpson_panels));
        for i in 1..simpson_panels {
            let wgt = if i % 2 == 1 { T::lit(4.0) } else { T::lit(2.0) };
            s = s + wgt * f(x(i));
        }
        acc = s * h / T::lit(3.0);
    }
    if tail {
        let i = simpson_panels;
        acc = acc
            + T::lit(3.0) * h / T::lit(8.0)
                * (f(x(i)) + T::lit(3.0) * f(x(i + 1)) + T::lit(3.0) * f(x(i + 2)) + f(x(i + 3)));
    }
    acc
}

/// Serialized names of the scalar fields of [`ModelParams`].
pub const PARAM_NAMES: [&str; 9] = ["lambda", "delta", "tau", "mu", "beta", "gamma", "omega", "p", "r"];

/// Scalar coefficients of the prion equation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ModelParams<T> {
    /// Monomer production rate.
    pub lambda: T,
    /// Monomer degradation rate.
    pub delta: T,
    /// Polymerization coefficient, `τ(x) = τx`.
    pub tau: T,
    /// Polymer death rate.
    pub mu: T,
    /// Fragmentation coefficient, `β(x) = βx^γ`.
    pub beta: T,
    pub gamma: T,
    /// Saturation coefficient of the incidence term.
    pub omega: T,
    /// Moment order inside the saturation.
    pub p: T,
    /// Weight exponent of the state space norm.
    pub r: T,
    #[serde(default)]
    pub kernel: FragKernel<T>,
}

impl<T: Real> ModelParams<T> {
    /// `λ=2, δ=τ=μ=β=γ=1, ω=0, p=1, r=2`, uniform kernel.
    pub fn canonical() -> Self {
        let one = T::one();
        ModelParams {
            lambda: T::lit(2.0),
            delta: one,
            tau: one,
            mu: one,
            beta: one,
            gamma: one,
            omega: T::zero(),
            p: one,
            r: T::lit(2.0),
            kernel: FragKernel::Uniform,
        }
    }

    /// `k = 1/γ`.
    #[inline]
    pub fn k(&self) -> T {
        self.gamma.recip()
    }

    /// Basic reproduction rate `λτ/(δμ)`.
    #[inline]
    pub fn r0(&self) -> T {
        self.lambda * self.tau / (self.delta * self.mu)
    }

    /// Monomer level of the disease free equilibrium, `λ/δ`.
    #[inline]
    pub fn dfe_monomers(&self) -> T {
        self.lambda / self.delta
    }

    /// `(μ/β)^{1/γ}`: the size scale at which growth and fragmentation balance.
    pub fn characteristic_size(&self) -> T {
        (self.mu / self.beta).powf(self.k())
    }

    /// Sets a scalar field by its serialized name.
    pub fn set(&mut self, name: &str, value: T) -> bool {
        let slot = match name {
            "lambda" => &mut self.lambda,
            "delta" => &mut self.delta,
            "tau" => &mut self.tau,
            "mu" => &mut self.mu,
            "beta" => &mut self.beta,
            "gamma" => &mut self.gamma,
            "omega" => &mut self.omega,
            "p" => &mut self.p,
            "r" => &mut self.r,
            _ => return false,
        };
        *slot = value;
        true
    }

    pub fn get(&self, name: &str) -> Option<T> {
        Some(match name {
            "lambda" => self.lambda,
            "delta" => self.delta,
            "tau" => self.tau,
            "mu" => self.mu,
            "beta" => self.beta,
            "gamma" => self.gamma,
            "omega" => self.omega,
            "p" => self.p,
            "r" => self.r,
            _ => return None,
        })
    }

    /// Returns the parameters unchanged when every structural constraint holds.
    pub fn validate(self) -> Result<Self, InvalidParams> {
        let mut violations = Vec::new();
        let zero = T::zero();
        let mut positive = |value: T, field: &'static str, what: &str| {
            if !(value > zero) || !value.is_finite() {
                violations.push(Violation { field, message: format!("{field} must be > 0 ({what})") });
            }
        };
        positive(self.lambda, "lambda", "monomer production rate");
        positive(self.delta, "delta", "monomer degradation rate");
        positive(self.tau, "tau", "linear polymerization rate tau*x requires tau > 0");
        positive(self.mu, "mu", "constant polymer death rate requires mu > 0");
        positive(self.beta, "beta", "fragmentation rate beta*x^gamma requires beta > 0");
        positive(self.gamma, "gamma", "fragmentation rate beta*x^gamma requires gamma > 0");
        if !(self.omega >= zero) || !self.omega.is_finite() {
            violations.push(Violation {
                field: "omega",
                message: "omega must be >= 0 (saturation coefficient of the incidence)".into(),
            });
        }
        if !(self.p >= zero) || !self.p.is_finite() {
            violations.push(Violation {
                field: "p",
                message: "p must be >= 0 (moment order of the saturation)".into(),
            });
        }
        if !(self.r > T::one() && self.r >= self.p) || !self.r.is_finite() {
            violations.push(Violation {
                field: "r",
                message: "r must satisfy r>1 and r>=p (weighted space must contain the saturation moment)"
                    .into(),
            });
        }
        self.kernel.validate(&mut violations);
        if violations.is_empty() {
            Ok(self)
        } else {
            Err(InvalidParams { violations })
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub field: &'static str,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InvalidParams {
    pub violations: Vec<Violation>,
}

impl fmt::Display for InvalidParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid parameters: ")?;
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{}", v.message)?;
        }
        Ok(())
    }
}

impl std::error::Error for InvalidParams {}
