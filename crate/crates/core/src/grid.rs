//! Square phase-space grids centered at the origin.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Square grid over [-half_width, half_width]² with `n_points` cells per axis.
///
/// Values live at cell centers, so a 1×1 grid samples the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub half_width: f64,
    pub n_points: usize,
}

impl GridSpec {
    pub fn new(half_width: f64, n_points: usize) -> Result<Self> {
        if !(half_width >= 0.0 && half_width.is_finite()) {
            return Err(Error::domain("half_width", half_width, "finite and >= 0"));
        }
        if n_points == 0 {
            return Err(Error::domain("n_points", 0.0, ">= 1"));
        }
        Ok(Self {
            half_width,
            n_points,
        })
    }

    pub fn step(&self) -> f64 {
        2.0 * self.half_width / self.n_points as f64
    }

    pub fn coord(&self, i: usize) -> f64 {
        -self.half_width + (i as f64 + 0.5) * self.step()
    }

    pub fn coords(&self) -> Vec<f64> {
        (0..self.n_points).map(|i| self.coord(i)).collect()
    }

    pub fn cell_area(&self) -> f64 {
        self.step() * self.step()
    }

    pub fn len(&self) -> usize {
        self.n_points * self.n_points
    }

    pub fn is_empty(&self) -> bool {
        self.n_points == 0
    }

    /// All (q, p) cell centers in storage order.
    pub fn points(&self) -> Vec<(f64, f64)> {
        let c = self.coords();
        let mut out = Vec::with_capacity(self.len());
        for &p in &c {
            for &q in &c {
                out.push((q, p));
            }
        }
        out
    }
}

/// Real field on a [`GridSpec`], row-major with rows indexed by p and
/// columns by q: `values[ip * n + iq] = W(q_iq, p_ip)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WignerGrid {
    spec: GridSpec,
    values: Vec<f64>,
}

impl WignerGrid {
    pub fn from_values(spec: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.len() {
            return Err(Error::Shape(format!(
                "{} values for a {}x{} grid",
                values.len(),
                spec.n_points,
                spec.n_points
            )));
        }
        Ok(Self { spec, values })
    }

    pub fn zeros(spec: GridSpec) -> Self {
        Self {
            spec,
            values: vec![0.0; spec.len()],
        }
    }

    /// Tabulates `f(q, p)` at every cell center.
    pub fn from_fn<F: Fn(f64, f64) -> f64 + Sync>(spec: GridSpec, f: F) -> Self {
        use rayon::prelude::*;
        let coords = spec.coords();
        let n = spec.n_points;
        let mut values = vec![0.0; spec.len()];
        values.par_chunks_mut(n).enumerate().for_each(|(ip, row)| {
            let p = coords[ip];
            for (iq, v) in row.iter_mut().enumerate() {
                *v = f(coords[iq], p);
            }
        });
        Self { spec, values }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, iq: usize, ip: usize) -> f64 {
        self.values[ip * self.spec.n_points + iq]
    }

    /// Cell-center quadrature of ∬ W dq dp.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.spec.cell_area()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Bilinear interpolation between cell centers; zero outside the grid.
    pub fn interpolate(&self, q: f64, p: f64) -> f64 {
        let n = self.spec.n_points;
        let step = self.spec.step();
        if step == 0.0 {
            return if q == 0.0 && p == 0.0 {
                self.values[0]
            } else {
                0.0
            };
        }
        let fq = (q + self.spec.half_width) / step - 0.5;
        let fp = (p + self.spec.half_width) / step - 0.5;
        if fq <= -1.0 || fp <= -1.0 || fq >= n as f64 || fp >= n as f64 {
            return 0.0;
        }
        let iq = fq.floor();
        let ip = fp.floor();
        let tq = fq - iq;
        let tp = fp - ip;
        let (iq, ip) = (iq as isize, ip as isize);
        let at = |a: isize, b: isize| -> f64 {
            if a < 0 || b < 0 || a >= n as isize || b >= n as isize {
                0.0
            } else {
                self.values[b as usize * n + a as usize]
            }
        };
        (1.0 - tp) * ((1.0 - tq) * at(iq, ip) + tq * at(iq + 1, ip))
            + tp * ((1.0 - tq) * at(iq, ip + 1) + tq * at(iq + 1, ip + 1))
    }

    pub(crate) fn check_same_spec(&self, other: &WignerGrid) -> Result<()> {
        if self.spec != other.spec {
            return Err(Error::Shape(format!(
                "grid {:?} vs {:?}",
                self.spec, other.spec
            )));
        }
        Ok(())
    }
}
