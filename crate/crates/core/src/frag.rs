//! Discrete fragmentation operator `Fu(x) = 2∫ₓ^∞ β(y)κ(x,y)u(y)dy − β(x)u(x)`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{Density, SizeGrid};
use crate::params::ModelParams;
use crate::real::Real;

/// Gain matrix (dense, `G_ij = 0` for `x_i > y_j`) and loss vector.
///
/// Columns are rescaled after assembly so that `Σ_i x_i w_i G_ij = x_j L_j`,
/// which makes the discrete first moment of `Fu` vanish for every `u`.
#[derive(Clone, Debug)]
pub struct FragMatrix<T> {
    grid: Arc<SizeGrid<T>>,
    gain: Vec<T>,
    loss: Vec<T>,
    raw_column_mass: Vec<T>,
}

impl<T: Real> FragMatrix<T> {
    pub fn assemble(grid: Arc<SizeGrid<T>>, params: &ModelParams<T>) -> Result<Self> {
        let n = grid.len();
        let (x, w, e) = (grid.centers(), grid.widths(), grid.edges());
        let two = T::lit(2.0);
        let half = T::lit(0.5);
        let loss: Vec<T> = x.iter().map(|&xi| params.beta * xi.powf(params.gamma)).collect();
        let mut gain = vec![T::zero(); n * n];
        let mut raw_column_mass = vec![T::zero(); n];
        for j in 0..n {
            let y = x[j];
            let base = two * loss[j] / y;
            let mut mass = T::zero();
            for i in 0..j {
                let g = base * params.kernel.eval(x[i] / y);
                gain[i * n + j] = g;
                mass = mass + x[i] * w[i] * g;
            }
            // fragments of a size-y_j polymer only land in [e_j, y_j]
            let z_diag = (e[j] + y) * half / y;
            let g = half * base * params.kernel.eval(z_diag);
            gain[j * n + j] = g;
            mass = mass + x[j] * w[j] * g;
            raw_column_mass[j] = mass;
            if !(mass > T::zero()) {
                return Err(Error::ZeroColumn { column: j });
            }
            let correction = x[j] * loss[j] / mass;
            for i in 0..=j {
                gain[i * n + j] = gain[i * n + j] * correction;
            }
        }
        Ok(FragMatrix { grid, gain, loss, raw_column_mass })
    }

    pub fn grid(&self) -> &Arc<SizeGrid<T>> {
        &self.grid
    }

    #[inline]
    pub fn gain_entry(&self, i: usize, j: usize) -> T {
        self.gain[i * self.grid.len() + j]
    }

    pub fn loss(&self) -> &[T] {
        &self.loss
    }

    /// `Σ_i x_i w_i G_ij` before the conservation correction.
    pub fn raw_column_mass(&self) -> &[T] {
        &self.raw_column_mass
    }

    /// `(Fu)_i = Σ_j G_ij w_j u_j − L_i u_i`.
    pub fn apply(&self, u: &Density<T>) -> Vec<T> {
        let mut out = vec![T::zero(); self.grid.len()];
        self.apply_into(u.values(), &mut out);
        out
    }

    pub fn apply_into(&self, u: &[T], out: &mut [T]) {
        self.gain_into(u, out);
        for ((o, &l), &ui) in out.iter_mut().zip(&self.loss).zip(u) {
            *o = *o - l * ui;
        }
    }

    /// Gain part only.
    pub fn gain_into(&self, u: &[T], out: &mut [T]) {
        let n = self.grid.len();
        let w = self.grid.widths();
        let wu: Vec<T> = w.iter().zip(u).map(|(&wi, &ui)| wi * ui).collect();
        for i in 0..n {
            let row = &self.gain[i * n + i..(i + 1) * n];
            out[i] = row.iter().zip(&wu[i..]).map(|(&g, &v)| g * v).sum();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use crate::params::FragKernel;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup(params: ModelParams<f64>) -> FragMatrix<f64> {
        let grid = GridSpec::default().build(&params).unwrap();
        FragMatrix::assemble(grid, &params).unwrap()
    }

    #[test]
    fn single_cell_is_forced_conservative() {
        let params = ModelParams::<f64>::canonical();
        let grid = Arc::new(SizeGrid::uniform(1, 2.0).unwrap());
        let f = FragMatrix::assemble(grid.clone(), &params).unwrap();
        let (x0, w0, l0) = (grid.centers()[0], grid.widths()[0], f.loss()[0]);
        assert!((x0 * w0 * f.gain_entry(0, 0) - x0 * l0).abs() < 1e-14);
        let u = Density::new(grid, vec![3.0]).unwrap();
        assert!(f.apply(&u)[0].abs() < 1e-14);
    }

    #[test]
    fn raw_uniform_columns_approach_analytic_mass() {
        // 2∫₀^y x·(β y/y) dx = β y²; the midpoint sums miss it by β w_j²/4
        let params = ModelParams::<f64>::canonical();
        for n in [100, 400, 1600] {
            let grid = Arc::new(SizeGrid::geometric(n, 1e-4, 50.0).unwrap());
            let f = FragMatrix::assemble(grid.clone(), &params).unwrap();
            for ((&y, &w), &m) in grid.centers().iter().zip(grid.widths()).zip(f.raw_column_mass()) {
                let rel = (m / (y * y) - 1.0).abs();
                assert!(rel <= 0.3 * (w / y).powi(2), "n={n} y={y}: {rel}");
            }
        }
    }

    #[test]
    fn zero_density_gives_zero_rate() {
        let f = setup(ModelParams::canonical());
        let u = Density::zeros(f.grid().clone());
        assert!(f.apply(&u).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn largest_cell_spreads_uniformly() {
        let f = setup(ModelParams::canonical());
        let n = f.grid().len();
        let mut values = vec![0.0; n];
        values[n - 1] = 1.0;
        let u = Density::new(f.grid().clone(), values).unwrap();
        let fu = f.apply(&u);
        let first = fu[0];
        assert!(first > 0.0);
        for v in &fu[..n - 1] {
            assert!((v / first - 1.0).abs() < 1e-12);
        }
        assert!(fu[n - 1] < 0.0);
    }

    #[test]
    fn random_densities_conserve_mass() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for params in [
            ModelParams::canonical(),
            ModelParams { gamma: 0.5, beta: 2.0, kernel: FragKernel::SymmetricPower { a: 1.0 }, ..ModelParams::canonical() },
            ModelParams { gamma: 2.0, kernel: FragKernel::SymmetricPower { a: 0.5 }, ..ModelParams::canonical() },
        ] {
            let f = setup(params);
            for _ in 0..50 {
                let values: Vec<f64> = (0..f.grid().len()).map(|_| rng.random::<f64>()).collect();
                let u = Density::new(f.grid().clone(), values).unwrap();
                let fu = f.apply(&u);
                let drift = f.grid().moment_of(&fu, 1.0).abs();
                let scale = params.beta * u.moment(1.0 + params.gamma);
                assert!(drift <= 1e-12 * scale, "{drift} vs {scale}");
                let mut gain = vec![0.0; fu.len()];
                f.gain_into(u.values(), &mut gain);
                assert!(gain.iter().all(|&g| g >= 0.0));
            }
        }
    }

    #[test]
    fn uniform_binary_fragmentation_doubles_number() {
        // 2∫₀^y κ(x,y) dx = 2, so ∫Fu = β∫x^γ u
        let params = ModelParams::canonical();
        let f = setup(params);
        let u = Density::from_fn(f.grid().clone(), |x| (-x).exp()).unwrap();
        let produced = f.grid().moment_of(&f.apply(&u), 0.0);
        let expected = params.beta * u.moment(params.gamma);
        assert!((produced / expected - 1.0).abs() < 1e-2, "{produced} vs {expected}");
    }

    #[test]
    fn symmetric_kernel_with_vanishing_endpoints_assembles() {
        let params = ModelParams { kernel: FragKernel::SymmetricPower { a: 3.0 }, ..ModelParams::canonical() };
        let f = setup(params);
        assert!(f.gain_entry(0, 0) > 0.0);
    }
}
