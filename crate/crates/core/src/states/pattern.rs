//! Pattern functions and density-matrix reconstruction from homodyne densities.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use super::DensityMatrix;
use crate::error::{Error, Result};
use crate::special::{hermite_functions_into, laguerre, GaussLegendre};

/// Fourier-domain support used for the numeric inverse transform.
const PATTERN_T_MAX: f64 = 40.0;
const PATTERN_PANEL: f64 = 0.25;

/// Required coverage of a density table for reconstruction.
pub const TABLE_MIN_HALF_WIDTH: f64 = 10.0;
pub const TABLE_MAX_STEP: f64 = 0.01;
pub const TABLE_MIN_ANGLES: usize = 180;

fn ordered(j: usize, k: usize) -> (usize, usize) {
    if j >= k {
        (j, k)
    } else {
        (k, j)
    }
}

/// Real amplitude of f̃_{j,k}(t) with the phase (−i)^{j−k} stripped.
fn pattern_amplitude(j: usize, k: usize, t: f64) -> f64 {
    let (j, k) = ordered(j, k);
    let d = j - k;
    let power = ((k + 1)..=j).fold(1.0, |acc, m| acc * t / (2.0 * m as f64).sqrt());
    PI * t.abs() * power * (-t * t / 4.0).exp() * laguerre(k, d as f64, t * t / 2.0)
}

/// Fourier transform f̃_{j,k}(t) of the pattern function; symmetric in (j, k).
pub fn pattern_fourier(j: usize, k: usize, t: f64) -> Complex64 {
    let (j, k) = ordered(j, k);
    let phase = Complex64::new(0.0, -1.0).powu((j - k) as u32);
    phase * pattern_amplitude(j, k, t)
}

/// l_{j,k}(t) = |W_{j,k}(q, p)| at radius t = ‖(q, p)‖, for j ≥ k.
pub fn l_jk(j: usize, k: usize, t: f64) -> f64 {
    let (j, k) = ordered(j, k);
    let d = j - k;
    let power = ((k + 1)..=j).fold(1.0, |acc, m| {
        acc * std::f64::consts::SQRT_2 * t / (m as f64).sqrt()
    });
    power * (-t * t).exp() * laguerre(k, d as f64, 2.0 * t * t).abs() / PI
}

/// Position-space pattern function f_{j,k}(x) = (1/2π) ∫ f̃_{j,k}(t) e^{-itx} dt,
/// by composite Gauss-Legendre quadrature on |t| ≤ 40.
pub fn pattern_function(j: usize, k: usize, xs: &[f64]) -> Vec<f64> {
    let (j, k) = ordered(j, k);
    let d = j - k;
    let panels = (PATTERN_T_MAX / PATTERN_PANEL).round() as usize;
    let (ts, ws) = GaussLegendre::order16().composite_nodes(0.0, PATTERN_T_MAX, panels);
    let amps: Vec<f64> = ts
        .iter()
        .zip(&ws)
        .map(|(&t, &w)| w * pattern_amplitude(j, k, t))
        .collect();
    // cos(tx + πd/2) selected by d mod 4
    let phase = d % 4;
    xs.par_iter()
        .map(|&x| {
            let acc: f64 = ts
                .iter()
                .zip(&amps)
                .map(|(&t, &a)| {
                    let (s, c) = (t * x).sin_cos();
                    a * match phase {
                        0 => c,
                        1 => -s,
                        2 => -c,
                        _ => s,
                    }
                })
                .sum();
            acc / PI
        })
        .collect()
}

/// Joint density p_ρ(x, φ) tabulated on a uniform x grid and midpoint angles
/// φ_a = π(a + ½)/n_phi.
#[derive(Debug, Clone)]
pub struct DensityTable {
    x_min: f64,
    dx: f64,
    n_x: usize,
    n_phi: usize,
    /// values[a * n_x + i] = p(x_i, φ_a)
    values: Vec<f64>,
}

impl DensityTable {
    pub fn from_values(
        x_min: f64,
        dx: f64,
        n_x: usize,
        n_phi: usize,
        values: Vec<f64>,
    ) -> Result<Self> {
        if values.len() != n_x * n_phi || n_x < 2 || n_phi == 0 || !(dx > 0.0) {
            return Err(Error::Shape(format!(
                "density table {n_x}x{n_phi} with {} values",
                values.len()
            )));
        }
        Ok(Self {
            x_min,
            dx,
            n_x,
            n_phi,
            values,
        })
    }

    /// Tabulates the joint density of `rho` on [-half_width, half_width].
    pub fn from_matrix(
        rho: &DensityMatrix,
        half_width: f64,
        dx: f64,
        n_phi: usize,
    ) -> Result<Self> {
        let n_x = (2.0 * half_width / dx).round() as usize + 1;
        let dim = rho.dim();
        let phis: Vec<f64> = (0..n_phi)
            .map(|a| PI * (a as f64 + 0.5) / n_phi as f64)
            .collect();
        let columns: Vec<Vec<f64>> = (0..n_x)
            .into_par_iter()
            .map(|i| {
                let x = -half_width + i as f64 * dx;
                let mut psi = vec![0.0; dim];
                hermite_functions_into(x, &mut psi);
                // diagonal sums S_d = Σ_{j-k=d} ρ_jk ψ_j ψ_k
                let sums: Vec<Complex64> = (0..dim)
                    .map(|d| {
                        (0..dim - d)
                            .map(|k| rho.get(k + d, k) * psi[k + d] * psi[k])
                            .sum()
                    })
                    .collect();
                phis.iter()
                    .map(|&phi| {
                        let mut v = sums[0].re;
                        for (d, s) in sums.iter().enumerate().skip(1) {
                            v += 2.0 * (s * Complex64::from_polar(1.0, -(d as f64) * phi)).re;
                        }
                        v.max(0.0) / PI
                    })
                    .collect()
            })
            .collect();
        let mut values = vec![0.0; n_x * n_phi];
        for (i, col) in columns.iter().enumerate() {
            for (a, v) in col.iter().enumerate() {
                values[a * n_x + i] = *v;
            }
        }
        Self::from_values(-half_width, dx, n_x, n_phi, values)
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.n_x)
            .map(|i| self.x_min + i as f64 * self.dx)
            .collect()
    }

    pub fn phi(&self, a: usize) -> f64 {
        PI * (a as f64 + 0.5) / self.n_phi as f64
    }

    pub fn n_phi(&self) -> usize {
        self.n_phi
    }

    pub fn value(&self, i: usize, a: usize) -> f64 {
        self.values[a * self.n_x + i]
    }

    fn check_coverage(&self) -> Result<()> {
        let x_max = self.x_min + (self.n_x - 1) as f64 * self.dx;
        if self.x_min > -TABLE_MIN_HALF_WIDTH + 1e-9 || x_max < TABLE_MIN_HALF_WIDTH - 1e-9 {
            return Err(Error::Resolution(format!(
                "x range [{}, {x_max}] does not cover |x| <= {TABLE_MIN_HALF_WIDTH}",
                self.x_min
            )));
        }
        if self.dx > TABLE_MAX_STEP + 1e-12 {
            return Err(Error::Resolution(format!(
                "x step {} > {TABLE_MAX_STEP}",
                self.dx
            )));
        }
        if self.n_phi < TABLE_MIN_ANGLES {
            return Err(Error::Resolution(format!(
                "{} angles < {TABLE_MIN_ANGLES}",
                self.n_phi
            )));
        }
        Ok(())
    }

    /// P_d(x_i) = ∫₀^π p(x_i, φ) e^{idφ} dφ for every x node.
    fn angular_moment(&self, d: i64) -> Vec<Complex64> {
        let w = PI / self.n_phi as f64;
        let phases: Vec<Complex64> = (0..self.n_phi)
            .map(|a| Complex64::from_polar(w, d as f64 * self.phi(a)))
            .collect();
        (0..self.n_x)
            .map(|i| (0..self.n_phi).map(|a| phases[a] * self.value(i, a)).sum())
            .collect()
    }

    fn trapezoid_weight(&self, i: usize) -> f64 {
        if i == 0 || i == self.n_x - 1 {
            0.5 * self.dx
        } else {
            self.dx
        }
    }
}

/// ρ_jk ≈ ∫₀^π ∫ p(x, φ) f_jk(x) e^{i(j−k)φ} dx dφ.
pub fn reconstruct_rho_entry(table: &DensityTable, j: usize, k: usize) -> Result<Complex64> {
    table.check_coverage()?;
    let xs = table.xs();
    let f = pattern_function(j, k, &xs);
    let moment = table.angular_moment(j as i64 - k as i64);
    Ok((0..xs.len())
        .map(|i| moment[i] * (f[i] * table.trapezoid_weight(i)))
        .sum())
}

/// All entries up to `dim`, Hermitian by construction, with the trace
/// renormalized to 1. Not validated for positivity.
pub fn reconstruct_matrix(table: &DensityTable, dim: usize) -> Result<DensityMatrix> {
    table.check_coverage()?;
    let mut entries = vec![Complex64::new(0.0, 0.0); dim * dim];
    for j in 0..dim {
        for k in 0..=j {
            let v = reconstruct_rho_entry(table, j, k)?;
            if j == k {
                entries[j * dim + j] = Complex64::new(v.re, 0.0);
            } else {
                entries[j * dim + k] = v;
                entries[k * dim + j] = v.conj();
            }
        }
    }
    let trace: f64 = (0..dim).map(|j| entries[j * dim + j].re).sum();
    if trace.abs() < 1e-300 {
        return Err(Error::InvalidState("reconstructed trace vanishes".into()));
    }
    for e in &mut entries {
        *e /= trace;
    }
    DensityMatrix::from_entries_unchecked(dim, entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pattern_examples() {
        for &t in &[0.0, 0.5, -1.3, 4.0] {
            let v = pattern_fourier(0, 0, t);
            let expected = PI * t.abs() * (-t * t / 4.0).exp();
            assert!((v.re - expected).abs() < 1e-15 && v.im == 0.0);
            assert!((l_jk(0, 0, t.abs()) - (-t * t).exp() / PI).abs() < 1e-15);
        }
        assert_eq!(pattern_fourier(3, 1, 0.7), pattern_fourier(1, 3, 0.7));
    }

    #[test]
    fn pattern_identity_relates_both_forms() {
        for j in 0..=10 {
            for k in 0..=j {
                for m in 1..=400 {
                    let t = -20.0 + 0.1 * m as f64;
                    let lhs = pattern_fourier(j, k, t).norm();
                    let rhs = PI * PI * t.abs() * l_jk(j, k, t.abs() / 2.0);
                    let scale = lhs.abs().max(rhs.abs());
                    if scale > 0.0 {
                        assert!((lhs - rhs).abs() <= 1e-10 * scale, "j={j} k={k} t={t}");
                    }
                }
            }
        }
    }

    #[test]
    fn vacuum_pattern_function_at_origin() {
        // f_00(0) = (1/2π) ∫ π|t| e^{-t²/4} dt = 2
        let f = pattern_function(0, 0, &[0.0]);
        assert!((f[0] - 2.0).abs() < 1e-9, "{}", f[0]);
    }

    #[test]
    fn coverage_is_enforced() {
        let rho = DensityMatrix::vacuum();
        let narrow = DensityTable::from_matrix(&rho, 5.0, 0.01, 180).unwrap();
        assert!(matches!(
            reconstruct_rho_entry(&narrow, 0, 0),
            Err(Error::Resolution(_))
        ));
        let coarse = DensityTable::from_matrix(&rho, 10.0, 0.02, 180).unwrap();
        assert!(matches!(
            reconstruct_rho_entry(&coarse, 0, 0),
            Err(Error::Resolution(_))
        ));
        let few = DensityTable::from_matrix(&rho, 10.0, 0.01, 90).unwrap();
        assert!(matches!(
            reconstruct_rho_entry(&few, 0, 0),
            Err(Error::Resolution(_))
        ));
    }

    #[test]
    fn vacuum_round_trip() {
        let table = DensityTable::from_matrix(&DensityMatrix::vacuum(), 10.0, 0.01, 180).unwrap();
        let r00 = reconstruct_rho_entry(&table, 0, 0).unwrap();
        assert!((r00.re - 1.0).abs() < 1e-3 && r00.im.abs() < 1e-3, "{r00}");
        let r11 = reconstruct_rho_entry(&table, 1, 1).unwrap();
        assert!(r11.norm() < 1e-3, "{r11}");
    }
}
