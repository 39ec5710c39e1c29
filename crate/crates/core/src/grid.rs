//! Uniform periodic grids in one or two dimensions and trapezoid quadrature.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub center: Vec<f64>,
    pub half_width: Vec<f64>,
    /// Points per axis; a power of two.
    pub points: usize,
    pub dt: f64,
}

impl GridSpec {
    pub fn new_1d(center: f64, half_width: f64, points: usize, dt: f64) -> Result<Self> {
        GridSpec {
            center: vec![center],
            half_width: vec![half_width],
            points,
            dt,
        }
        .validated()
    }

    pub fn new_2d(center: [f64; 2], half_width: [f64; 2], points: usize, dt: f64) -> Result<Self> {
        GridSpec {
            center: center.to_vec(),
            half_width: half_width.to_vec(),
            points,
            dt,
        }
        .validated()
    }

    pub fn validated(self) -> Result<Self> {
        let d = self.center.len();
        if !(1..=2).contains(&d) || self.half_width.len() != d {
            return Err(Error::InvalidInput("grids support d = 1 or d = 2".into()));
        }
        if !self.points.is_power_of_two() || self.points < 4 {
            return Err(Error::InvalidInput(format!(
                "grid points per axis must be a power of two >= 4, got {}",
                self.points
            )));
        }
        if self.half_width.iter().any(|h| *h <= 0.0) || self.dt <= 0.0 {
            return Err(Error::InvalidInput("grid half-widths and dt must be positive".into()));
        }
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        2.0 * self.half_width[axis] / self.points as f64
    }

    pub fn len(&self) -> usize {
        self.points.pow(self.dim() as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Quadrature weight of one cell.
    pub fn cell_volume(&self) -> f64 {
        (0..self.dim()).map(|i| self.spacing(i)).product()
    }

    pub fn axis(&self, axis: usize) -> Vec<f64> {
        let lo = self.center[axis] - self.half_width[axis];
        let h = self.spacing(axis);
        (0..self.points).map(|k| lo + h * k as f64).collect()
    }

    /// All grid points; in 2-D the last axis varies fastest.
    pub fn points(&self) -> Vec<Vec<f64>> {
        match self.dim() {
            1 => self.axis(0).into_iter().map(|x| vec![x]).collect(),
            _ => {
                let xs = self.axis(0);
                let ys = self.axis(1);
                let mut out = Vec::with_capacity(self.len());
                for &x in &xs {
                    for &y in &ys {
                        out.push(vec![x, y]);
                    }
                }
                out
            }
        }
    }

    /// Largest eigenvalue of `-Delta / 2` on the grid.
    pub fn max_kinetic(&self) -> f64 {
        (0..self.dim())
            .map(|i| {
                let kmax = std::f64::consts::PI / self.spacing(i);
                0.5 * kmax * kmax
            })
            .sum()
    }

    /// Same box with twice the points per axis.
    pub fn refined(&self) -> GridSpec {
        GridSpec {
            points: self.points * 2,
            ..self.clone()
        }
    }

    pub fn norm(&self, psi: &[Complex64]) -> f64 {
        (psi.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.cell_volume()).sqrt()
    }

    pub fn inner(&self, a: &[Complex64], b: &[Complex64]) -> Complex64 {
        a.iter().zip(b).map(|(x, y)| x.conj() * y).sum::<Complex64>() * self.cell_volume()
    }

    /// Mass `int |psi|^2` in the cells within `width` of the box boundary
    /// along any axis.
    pub fn boundary_mass(&self, psi: &[Complex64], width: usize) -> f64 {
        let n = self.points;
        let near = |k: usize| k < width || k >= n - width;
        let mut m = 0.0;
        for (flat, z) in psi.iter().enumerate() {
            let edge = match self.dim() {
                1 => near(flat),
                _ => near(flat / n) || near(flat % n),
            };
            if edge {
                m += z.norm_sqr();
            }
        }
        m * self.cell_volume()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_norm() {
        let g = GridSpec::new_1d(0.0, 10.0, 256, 0.01).unwrap();
        let psi: Vec<Complex64> = g
            .axis(0)
            .iter()
            .map(|x| Complex64::new(std::f64::consts::PI.powf(-0.25) * (-x * x / 2.0).exp(), 0.0))
            .collect();
        assert!((g.norm(&psi) - 1.0).abs() < 1e-13);
        assert!(g.boundary_mass(&psi, 4) < 1e-20);
    }

    #[test]
    fn rejects_bad_sizes() {
        assert!(GridSpec::new_1d(0.0, 1.0, 100, 0.1).is_err());
        assert!(GridSpec::new_2d([0.0, 0.0], [1.0, 1.0], 64, 0.1).unwrap().len() == 4096);
    }
}
