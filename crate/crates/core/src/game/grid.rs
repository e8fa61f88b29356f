use serde::{Deserialize, Serialize};

use crate::dynamics::ROAD_WIDTH;
use crate::error::{Error, Result};

/// Largest dimensionality the interpolation kernels support.
pub const MAX_DIMS: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridDim {
    pub name: String,
    pub min: f64,
    pub max: f64,
    pub count: u32,
}

impl GridDim {
    pub fn new(name: impl Into<String>, min: f64, max: f64, count: u32) -> Self {
        Self {
            name: name.into(),
            min,
            max,
            count,
        }
    }

    pub fn spacing(&self) -> f64 {
        (self.max - self.min) / (self.count - 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        if i + 1 == self.count as usize {
            self.max
        } else {
            self.min + i as f64 * self.spacing()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.count as usize).map(|i| self.node(i)).collect()
    }
}

/// Uniform tensor-product grid. Cells are stored row-major in declared
/// dimension order (last dimension fastest).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dims: Vec<GridDim>,
}

impl GridSpec {
    pub fn new(dims: Vec<GridDim>) -> Result<Self> {
        let g = Self { dims };
        g.validate()?;
        Ok(g)
    }

    /// 101 × 17 × 43 over `[x_rel, y_av, v_rel]`.
    pub fn default_3d() -> Self {
        Self {
            dims: vec![
                GridDim::new("x_rel", -50.0, 50.0, 101),
                GridDim::new("y_av", 0.0, ROAD_WIDTH, 17),
                GridDim::new("v_rel", -10.5, 10.5, 43),
            ],
        }
    }

    /// 75 × 12 × 12 × 21 over `[x_rel, y_av, y_human, v_rel]`.
    pub fn default_4d() -> Self {
        Self {
            dims: vec![
                GridDim::new("x_rel", -37.0, 37.0, 75),
                GridDim::new("y_av", 0.0, ROAD_WIDTH, 12),
                GridDim::new("y_human", 0.0, ROAD_WIDTH, 12),
                GridDim::new("v_rel", -10.0, 10.0, 21),
            ],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.is_empty() || self.dims.len() > MAX_DIMS {
            return Err(Error::config(
                "grid.dims",
                format!("expected 1..={MAX_DIMS} dimensions, got {}", self.dims.len()),
            ));
        }
        for d in &self.dims {
            if !(d.min.is_finite() && d.max.is_finite() && d.min < d.max) {
                return Err(Error::config(format!("grid.{}", d.name), "requires finite min < max"));
            }
            if d.count < 2 {
                return Err(Error::config(format!("grid.{}", d.name), "requires at least 2 nodes"));
            }
        }
        Ok(())
    }

    pub fn ndims(&self) -> usize {
        self.dims.len()
    }

    pub fn cell_count(&self) -> usize {
        self.dims.iter().map(|d| d.count as usize).product()
    }

    pub fn dim_index(&self, name: &str) -> Result<usize> {
        self.dims
            .iter()
            .position(|d| d.name == name)
            .ok_or_else(|| Error::UnknownDimension(name.to_string()))
    }

    /// Coordinates of the node with flat index `cell`.
    pub fn node_coords(&self, mut cell: usize, out: &mut [f64]) {
        for (i, d) in self.dims.iter().enumerate().rev() {
            let n = d.count as usize;
            out[i] = d.node(cell % n);
            cell /= n;
        }
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        self.dims
            .iter()
            .zip(idx)
            .fold(0, |acc, (d, &i)| acc * d.count as usize + i)
    }

    pub(crate) fn interpolator(&self) -> Interpolator {
        Interpolator::new(self)
    }
}

/// Precomputed multilinear interpolation over a [`GridSpec`].
#[derive(Debug, Clone)]
pub(crate) struct Interpolator {
    ndims: usize,
    min: [f64; MAX_DIMS],
    inv_spacing: [f64; MAX_DIMS],
    last: [usize; MAX_DIMS],
    stride: [usize; MAX_DIMS],
}

impl Interpolator {
    fn new(grid: &GridSpec) -> Self {
        let ndims = grid.ndims();
        let mut it = Self {
            ndims,
            min: [0.0; MAX_DIMS],
            inv_spacing: [0.0; MAX_DIMS],
            last: [0; MAX_DIMS],
            stride: [0; MAX_DIMS],
        };
        let mut stride = 1;
        for i in (0..ndims).rev() {
            let d = &grid.dims[i];
            it.min[i] = d.min;
            it.inv_spacing[i] = 1.0 / d.spacing();
            it.last[i] = d.count as usize - 1;
            it.stride[i] = stride;
            stride *= d.count as usize;
        }
        it
    }

    /// Lower corner index and fractional offset per dimension, after clamping
    /// the query to the grid box.
    #[inline]
    fn locate(&self, point: &[f64]) -> ([usize; MAX_DIMS], [f64; MAX_DIMS], [bool; MAX_DIMS]) {
        let mut base = [0usize; MAX_DIMS];
        let mut frac = [0.0; MAX_DIMS];
        let mut inside = [false; MAX_DIMS];
        for i in 0..self.ndims {
            let mut t = (point[i] - self.min[i]) * self.inv_spacing[i];
            // Snap rounding noise so node queries return stored values exactly.
            let r = t.round();
            if (t - r).abs() < 1e-10 {
                t = r;
            }
            let last = self.last[i] as f64;
            let tc = t.clamp(0.0, last);
            inside[i] = t > 0.0 && t < last;
            let i0 = (tc.floor() as usize).min(self.last[i] - 1);
            base[i] = i0;
            frac[i] = tc - i0 as f64;
        }
        (base, frac, inside)
    }

    #[inline]
    pub fn eval(&self, values: &[f64], point: &[f64]) -> f64 {
        let (base, frac, _) = self.locate(point);
        let offset: usize = (0..self.ndims).map(|i| base[i] * self.stride[i]).sum();
        let mut acc = 0.0;
        for corner in 0..(1usize << self.ndims) {
            let mut w = 1.0;
            let mut idx = offset;
            for i in 0..self.ndims {
                if corner >> i & 1 == 1 {
                    w *= frac[i];
                    idx += self.stride[i];
                } else {
                    w *= 1.0 - frac[i];
                }
            }
            acc += w * values[idx];
        }
        acc
    }

    /// Value and exact derivative of the interpolant. Outside the grid box
    /// (where the query is clamped) the derivative along that axis is zero.
    pub fn eval_with_grad(&self, values: &[f64], point: &[f64], grad: &mut [f64]) -> f64 {
        let (base, frac, inside) = self.locate(point);
        let offset: usize = (0..self.ndims).map(|i| base[i] * self.stride[i]).sum();
        grad[..self.ndims].iter_mut().for_each(|g| *g = 0.0);
        let mut acc = 0.0;
        for corner in 0..(1usize << self.ndims) {
            let mut idx = offset;
            let mut factors = [0.0; MAX_DIMS];
            let mut signs = [0.0; MAX_DIMS];
            for i in 0..self.ndims {
                if corner >> i & 1 == 1 {
                    factors[i] = frac[i];
                    signs[i] = 1.0;
                    idx += self.stride[i];
                } else {
                    factors[i] = 1.0 - frac[i];
                    signs[i] = -1.0;
                }
            }
            let v = values[idx];
            acc += v * factors[..self.ndims].iter().product::<f64>();
            for j in 0..self.ndims {
                if !inside[j] {
                    continue;
                }
                let mut w = signs[j] * self.inv_spacing[j];
                for (i, f) in factors[..self.ndims].iter().enumerate() {
                    if i != j {
                        w *= f;
                    }
                }
                grad[j] += w * v;
            }
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grids_have_expected_sizes() {
        assert_eq!(GridSpec::default_3d().cell_count(), 101 * 17 * 43);
        assert_eq!(GridSpec::default_4d().cell_count(), 75 * 12 * 12 * 21);
        assert_eq!(GridSpec::default_3d().dims[0].spacing(), 1.0);
        assert_eq!(GridSpec::default_3d().dims[2].spacing(), 0.5);
    }

    #[test]
    fn lane_centers_are_3d_nodes() {
        let g = GridSpec::default_3d();
        assert!((g.dims[1].node(4) - 1.85).abs() < 1e-12);
        assert!((g.dims[1].node(12) - 5.55).abs() < 1e-12);
    }

    #[test]
    fn flat_index_inverts_node_coords() {
        let g = GridSpec::new(vec![GridDim::new("a", 0.0, 2.0, 3), GridDim::new("b", -1.0, 1.0, 5)]).unwrap();
        let mut c = [0.0; 2];
        g.node_coords(g.flat_index(&[2, 3]), &mut c);
        assert_eq!(c, [2.0, 0.5]);
    }

    #[test]
    fn rejects_degenerate_dims() {
        assert!(GridSpec::new(vec![GridDim::new("a", 1.0, 1.0, 3)]).is_err());
        assert!(GridSpec::new(vec![GridDim::new("a", 0.0, 1.0, 1)]).is_err());
    }

    #[test]
    fn interpolant_gradient_is_exact_inside_cells() {
        let g = GridSpec::new(vec![GridDim::new("a", 0.0, 3.0, 4), GridDim::new("b", 0.0, 2.0, 3)]).unwrap();
        let values: Vec<f64> = (0..12).map(|i| ((i * 7) % 5) as f64 - 1.3 * i as f64).collect();
        let it = g.interpolator();
        let p = [1.37, 0.61];
        let mut grad = [0.0; 2];
        it.eval_with_grad(&values, &p, &mut grad);
        let h = 1e-7;
        for j in 0..2 {
            let mut pp = p;
            let mut pm = p;
            pp[j] += h;
            pm[j] -= h;
            let fd = (it.eval(&values, &pp) - it.eval(&values, &pm)) / (2.0 * h);
            assert!((fd - grad[j]).abs() < 1e-6);
        }
    }
}
