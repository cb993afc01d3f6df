//! Conservative transport for the growth term `−c ∂ₓ(x u)`.
//!
//! The term is written on the mass variable as `c (u − ∂ₓ(x² u)/x)`, with the
//! flux `J_i = e_i² u(e_i)` taken from the upwind (left) cell. In this form
//! `Σ x_i w_i T(u)_i = Σ x_i w_i u_i − J_N` holds to rounding for any edge
//! reconstruction, so the discrete first moment obeys the exact balance of the
//! continuous problem. No inflow condition is needed at `x = 0` since `e_0 = 0`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::grid::SizeGrid;
use crate::real::Real;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Piecewise-constant edge values (first order, linear).
    Upwind,
    /// Piecewise-linear edge values with the van Leer limiter.
    #[default]
    VanLeer,
}

#[derive(Clone, Debug)]
pub struct Transport<T> {
    grid: Arc<SizeGrid<T>>,
    scheme: Scheme,
    /// `e_i² / (x_i w_i)`
    inflow_coef: Vec<T>,
    /// `e_{i+1}² / (x_i w_i)`
    outflow_coef: Vec<T>,
    /// Per-cell bound on the loss rate per unit speed.
    stiffness: Vec<T>,
}

impl<T: Real> Transport<T> {
    pub fn new(grid: Arc<SizeGrid<T>>, scheme: Scheme) -> Self {
        let (x, w, e) = (grid.centers(), grid.widths(), grid.edges());
        let n = grid.len();
        let mass: Vec<T> = x.iter().zip(w).map(|(&xi, &wi)| xi * wi).collect();
        let inflow_coef = (0..n).map(|i| e[i] * e[i] / mass[i]).collect();
        let outflow_coef: Vec<T> = (0..n).map(|i| e[i + 1] * e[i + 1] / mass[i]).collect();
        let stiffness = (0..n)
            .map(|i| {
                // the limited edge value never exceeds (1 + w_i/(x_i − x_{i−1}))·u_i
                let overshoot = match scheme {
                    Scheme::VanLeer if i > 0 && i + 1 < n => w[i] / (x[i] - x[i - 1]),
                    _ => T::zero(),
                };
                (T::one() + overshoot) * outflow_coef[i]
            })
            .collect();
        Transport { grid, scheme, inflow_coef, outflow_coef, stiffness }
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn grid(&self) -> &Arc<SizeGrid<T>> {
        &self.grid
    }

    pub fn stiffness(&self) -> &[T] {
        &self.stiffness
    }

    /// Value of `u` reconstructed at the right edge of each cell.
    pub fn edge_values(&self, u: &[T]) -> Vec<T> {
        let n = u.len();
        match self.scheme {
            Scheme::Upwind => u.to_vec(),
            Scheme::VanLeer => {
                let (x, w) = (self.grid.centers(), self.grid.widths());
                let half = T::lit(0.5);
                let two = T::lit(2.0);
                (0..n)
                    .map(|i| {
                        if i == 0 || i + 1 == n {
                            return u[i];
                        }
                        let dl = (u[i] - u[i - 1]) / (x[i] - x[i - 1]);
                        let dr = (u[i + 1] - u[i]) / (x[i + 1] - x[i]);
                        let slope = if dl * dr > T::zero() { two * dl * dr / (dl + dr) } else { T::zero() };
                        u[i] + half * w[i] * slope
                    })
                    .collect()
            }
        }
    }

    /// Writes `T(u)_i = (J_i − J_{i+1})/(x_i w_i) + u_i` into `out` and returns
    /// the outflow flux `J_N` through `x_max` (first-moment units per unit speed).
    pub fn apply_into(&self, u: &[T], out: &mut [T]) -> T {
        let n = u.len();
        let edge = self.edge_values(u);
        for i in 0..n {
            let inflow = if i == 0 { T::zero() } else { self.inflow_coef[i] * edge[i - 1] };
            out[i] = inflow - self.outflow_coef[i] * edge[i] + u[i];
        }
        let x_max = self.grid.x_max();
        x_max * x_max * edge[n - 1]
    }
}
