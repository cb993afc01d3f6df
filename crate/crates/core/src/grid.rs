//! Size-axis discretization, polymer densities and their moments.

use std::io;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ModelParams;
use crate::real::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayoutKind {
    Uniform,
    Geometric,
}

/// Grid description as it appears in run configurations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub n_cells: usize,
    /// Width of the first cell (geometric layout only).
    pub x_min: f64,
    /// Right end of the grid; `None` means 50 characteristic sizes.
    pub x_max: Option<f64>,
    pub layout: LayoutKind,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { n_cells: 400, x_min: 1e-4, x_max: None, layout: LayoutKind::Geometric }
    }
}

pub const DEFAULT_TRUNCATION_FACTOR: f64 = 50.0;

impl GridSpec {
    pub fn resolved_x_max<T: Real>(&self, params: &ModelParams<T>) -> f64 {
        self.x_max
            .unwrap_or_else(|| DEFAULT_TRUNCATION_FACTOR * params.characteristic_size().to_f64_lossy())
    }

    pub fn build<T: Real>(&self, params: &ModelParams<T>) -> Result<Arc<SizeGrid<T>>> {
        let x_max = T::lit(self.resolved_x_max(params));
        let grid = match self.layout {
            LayoutKind::Uniform => SizeGrid::uniform(self.n_cells, x_max)?,
            LayoutKind::Geometric => SizeGrid::geometric(self.n_cells, T::lit(self.x_min), x_max)?,
        };
        Ok(Arc::new(grid))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Layout<T> {
    Uniform,
    /// Constant ratio `w_{i+1}/w_i`.
    Geometric(T),
}

/// Cells `[e_i, e_{i+1}]` covering `(0, x_max)`, with `e_0 = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct SizeGrid<T> {
    edges: Vec<T>,
    centers: Vec<T>,
    widths: Vec<T>,
    layout: Layout<T>,
}

impl<T: Real> SizeGrid<T> {
    pub fn uniform(n_cells: usize, x_max: T) -> Result<Self> {
        if n_cells == 0 {
            return Err(Error::Grid("n_cells must be positive".into()));
        }
        if !(x_max > T::zero()) || !x_max.is_finite() {
            return Err(Error::Grid("x_max must be positive".into()));
        }
        let h = x_max / T::from_usize_lossy(n_cells);
        let edges = (0..=n_cells).map(|i| h * T::from_usize_lossy(i)).collect();
        Ok(Self::from_edges(edges, Layout::Uniform))
    }

    /// First cell `[0, x_min]`, widths in constant ratio, last edge at `x_max`.
    pub fn geometric(n_cells: usize, x_min: T, x_max: T) -> Result<Self> {
        if n_cells == 0 {
            return Err(Error::Grid("n_cells must be positive".into()));
        }
        if !(x_min > T::zero()) || !(x_max > T::zero()) || !x_max.is_finite() {
            return Err(Error::Grid("x_min and x_max must be positive".into()));
        }
        if n_cells == 1 {
            return Ok(Self::from_edges(vec![T::zero(), x_max], Layout::Geometric(T::one())));
        }
        let n = n_cells as i32;
        let (w0, xm) = (x_min.to_f64_lossy(), x_max.to_f64_lossy());
        if xm <= w0 * n_cells as f64 {
            return Err(Error::Grid(format!(
                "geometric layout needs x_max > n_cells * x_min ({xm} <= {})",
                w0 * n_cells as f64
            )));
        }
        let total = |rho: f64| w0 * (rho.powi(n) - 1.0) / (rho - 1.0) - xm;
        let (mut lo, mut hi) = (1.0 + 1e-15, 2.0);
        while total(hi) < 0.0 {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if total(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let ratio = T::lit(0.5 * (lo + hi));
        let mut edges = Vec::with_capacity(n_cells + 1);
        edges.push(T::zero());
        let mut w = x_min;
        for _ in 0..n_cells {
            let last = *edges.last().unwrap();
            edges.push(last + w);
            w = w * ratio;
        }
        Ok(Self::from_edges(edges, Layout::Geometric(ratio)))
    }

    fn from_edges(edges: Vec<T>, layout: Layout<T>) -> Self {
        let half = T::lit(0.5);
        let centers = edges.windows(2).map(|e| (e[0] + e[1]) * half).collect();
        let widths = edges.windows(2).map(|e| e[1] - e[0]).collect();
        SizeGrid { edges, centers, widths, layout }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.centers.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn edges(&self) -> &[T] {
        &self.edges
    }

    pub fn centers(&self) -> &[T] {
        &self.centers
    }

    pub fn widths(&self) -> &[T] {
        &self.widths
    }

    pub fn layout(&self) -> Layout<T> {
        self.layout
    }

    pub fn x_max(&self) -> T {
        *self.edges.last().unwrap()
    }

    /// Quadrature weights `x_i^α w_i` of the midpoint moment.
    pub fn moment_weights(&self, alpha: T) -> Vec<T> {
        self.centers
            .iter()
            .zip(&self.widths)
            .map(|(&x, &w)| pow_or_one(x, alpha) * w)
            .collect()
    }

    /// `Σ x_i^α w_i v_i` for an arbitrary (possibly signed) vector.
    pub fn moment_of(&self, values: &[T], alpha: T) -> T {
        debug_assert_eq!(values.len(), self.len());
        self.centers
            .iter()
            .zip(&self.widths)
            .zip(values)
            .map(|((&x, &w), &v)| pow_or_one(x, alpha) * w * v)
            .sum()
    }

    /// `‖v‖_0 + ‖v‖_r` for an arbitrary vector.
    pub fn x_norm_of(&self, values: &[T], r: T) -> T {
        self.centers
            .iter()
            .zip(&self.widths)
            .zip(values)
            .map(|((&x, &w), &v)| v.abs() * w * (T::one() + x.powf(r)))
            .sum()
    }
}

#[inline]
fn pow_or_one<T: Real>(x: T, alpha: T) -> T {
    if alpha == T::zero() {
        T::one()
    } else if alpha == T::one() {
        x
    } else {
        x.powf(alpha)
    }
}

/// Nonnegative polymer density (per unit size), one value per cell.
#[derive(Clone, Debug, PartialEq)]
pub struct Density<T> {
    grid: Arc<SizeGrid<T>>,
    values: Vec<T>,
}

impl<T: Real> Density<T> {
    pub fn new(grid: Arc<SizeGrid<T>>, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Density(format!(
                "{} values for a grid of {} cells",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !(*v >= T::zero()) || !v.is_finite()) {
            return Err(Error::Density(format!("value {} at cell {i} is not a finite nonnegative number", values[i])));
        }
        Ok(Density { grid, values })
    }

    /// Skips validation; callers guarantee nonnegativity.
    pub(crate) fn from_raw(grid: Arc<SizeGrid<T>>, values: Vec<T>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Density { grid, values }
    }

    pub fn zeros(grid: Arc<SizeGrid<T>>) -> Self {
        let n = grid.len();
        Density { grid, values: vec![T::zero(); n] }
    }

    /// Samples `f` at cell centers; negative samples are an error.
    pub fn from_fn(grid: Arc<SizeGrid<T>>, f: impl Fn(T) -> T) -> Result<Self> {
        let values = grid.centers().iter().map(|&x| f(x)).collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &Arc<SizeGrid<T>> {
        &self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    /// Midpoint value of `∫ x^α u dx`.
    pub fn moment(&self, alpha: T) -> T {
        self.grid.moment_of(&self.values, alpha)
    }

    pub fn x_norm(&self, r: T) -> T {
        self.grid.x_norm_of(&self.values, r)
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| *v == T::zero())
    }

    pub fn scaled(&self, factor: T) -> Self {
        assert!(factor >= T::zero(), "density scale factor must be nonnegative");
        Density::from_raw(self.grid.clone(), self.values.iter().map(|&v| v * factor).collect())
    }

    /// Rescales so that the first moment equals `mass`.
    pub fn with_mass(&self, mass: T) -> Result<Self> {
        let m1 = self.moment(T::one());
        if !(m1 > T::zero()) {
            return Err(Error::Degenerate("cannot normalize a density with zero mass".into()));
        }
        Ok(self.scaled(mass / m1))
    }

    /// Dilation `v(x) = s·u(s·x)` on the same grid.
    ///
    /// Each source cell carries `u_j w_j` polymers at its centre `y_j`; after the
    /// dilation they sit at `y_j/s` and are split between the two neighbouring
    /// target centres so that both the polymer count and the first moment are
    /// reproduced. Content dilated past `x_max` is dropped.
    pub fn rescale(&self, s: T) -> Result<Self> {
        if !(s > T::zero()) || !s.is_finite() {
            return Err(Error::Precondition(format!("dilation factor must be positive, got {s}")));
        }
        if s == T::one() {
            return Ok(self.clone());
        }
        let grid = &self.grid;
        let (x, w) = (grid.centers(), grid.widths());
        let n = grid.len();
        let x_max = grid.x_max();
        let mut number = vec![T::zero(); n];
        for j in 0..n {
            let count = self.values[j] * w[j];
            if count == T::zero() {
                continue;
            }
            let z = x[j] / s;
            if z <= x[0] {
                number[0] = number[0] + count;
                continue;
            }
            if z >= x[n - 1] {
                if z < x_max {
                    number[n - 1] = number[n - 1] + count;
                }
                continue;
            }
            let k = x.partition_point(|&c| c <= z) - 1;
            let theta = (z - x[k]) / (x[k + 1] - x[k]);
            number[k] = number[k] + count * (T::one() - theta);
            number[k + 1] = number[k + 1] + count * theta;
        }
        let values = number.into_iter().zip(w).map(|(c, &wk)| c / wk).collect();
        Ok(Density::from_raw(grid.clone(), values))
    }

    /// Writes `x_center,width,value` rows.
    pub fn write_csv<W: io::Write>(&self, out: W) -> io::Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["x_center", "width", "value"])?;
        for ((x, w), v) in self.grid.centers().iter().zip(self.grid.widths()).zip(&self.values) {
            wtr.write_record([x.to_string(), w.to_string(), v.to_string()])?;
        }
        wtr.flush()
    }

    /// Reads a density previously written by [`Density::write_csv`]; the cell
    /// centres must match `grid`.
    pub fn read_csv<R: io::Read>(grid: Arc<SizeGrid<T>>, input: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        let mut values = Vec::with_capacity(grid.len());
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Density(e.to_string()))?;
            let field = |k: usize| -> Result<f64> {
                rec.get(k)
                    .ok_or_else(|| Error::Density(format!("row {i}: missing column {k}")))?
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Density(format!("row {i}: {e}")))
            };
            let (xc, v) = (field(0)?, field(2)?);
            let expected = grid
                .centers()
                .get(i)
                .ok_or_else(|| Error::Density(format!("more rows than the {} grid cells", grid.len())))?
                .to_f64_lossy();
            if (xc - expected).abs() > 1e-9 * expected.abs().max(1e-300) {
                return Err(Error::Density(format!("row {i}: x_center {xc} does not match grid centre {expected}")));
            }
            values.push(T::lit(v));
        }
        Self::new(grid, values)
    }
}
