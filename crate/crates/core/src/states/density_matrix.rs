use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on trace, Hermiticity and populations.
pub const MATRIX_TOLERANCE: f64 = 1e-9;

/// Dropped tail mass allowed when truncating an infinite-dimensional state.
pub const TRUNCATION_TAIL: f64 = 1e-10;

/// Minimum truncation for infinite-dimensional states.
pub const DEFAULT_TRUNCATION: usize = 64;

/// Truncated density matrix in the Fock basis, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDensityMatrix", into = "RawDensityMatrix")]
pub struct DensityMatrix {
    dim: usize,
    entries: Vec<Complex64>,
}

#[derive(Serialize, Deserialize)]
struct RawDensityMatrix {
    dim: usize,
    entries: Vec<Complex64>,
}

impl TryFrom<RawDensityMatrix> for DensityMatrix {
    type Error = Error;
    fn try_from(raw: RawDensityMatrix) -> Result<Self> {
        DensityMatrix::new(raw.dim, raw.entries)
    }
}

impl From<DensityMatrix> for RawDensityMatrix {
    fn from(m: DensityMatrix) -> Self {
        RawDensityMatrix {
            dim: m.dim,
            entries: m.entries,
        }
    }
}

impl DensityMatrix {
    /// Validated constructor: Hermitian, unit trace, nonnegative populations.
    /// The Gershgorin surrogate is reported by [`DensityMatrix::gershgorin_psd`].
    pub fn new(dim: usize, entries: Vec<Complex64>) -> Result<Self> {
        let m = Self::from_entries_unchecked(dim, entries)?;
        m.validate()?;
        Ok(m)
    }

    /// Shape-checked only. Used for raw file input and for testing the
    /// validation paths downstream.
    pub fn from_entries_unchecked(dim: usize, entries: Vec<Complex64>) -> Result<Self> {
        if dim == 0 || entries.len() != dim * dim {
            return Err(Error::Shape(format!(
                "{} entries for dimension {dim}",
                entries.len()
            )));
        }
        Ok(Self { dim, entries })
    }

    /// Pure state |c⟩⟨c| from (possibly unnormalized) amplitudes.
    pub fn pure(amplitudes: &[Complex64]) -> Result<Self> {
        let norm: f64 = amplitudes.iter().map(|c| c.norm_sqr()).sum();
        if amplitudes.is_empty() || norm <= 0.0 {
            return Err(Error::InvalidState("zero state vector".into()));
        }
        let dim = amplitudes.len();
        let mut entries = Vec::with_capacity(dim * dim);
        for a in amplitudes {
            for b in amplitudes {
                entries.push(a * b.conj() / norm);
            }
        }
        // Force exact Hermiticity after rounding.
        for j in 0..dim {
            entries[j * dim + j].im = 0.0;
            for k in 0..j {
                entries[j * dim + k] = entries[k * dim + j].conj();
            }
        }
        Self::new(dim, entries)
    }

    pub fn vacuum() -> Self {
        Self::fock(0)
    }

    pub fn fock(k: usize) -> Self {
        let dim = k + 1;
        let mut entries = vec![Complex64::new(0.0, 0.0); dim * dim];
        entries[k * dim + k] = Complex64::new(1.0, 0.0);
        Self { dim, entries }
    }

    /// Coherent state |α⟩ truncated at 64, or further out if the dropped tail
    /// mass would exceed 1e-10.
    pub fn coherent(alpha: Complex64) -> Result<Self> {
        Self::coherent_truncated(alpha, truncation_for(alpha.norm_sqr()))
    }

    /// Coherent state with entries e^{-|α|²} α^j conj(α)^k / sqrt(j! k!),
    /// truncated at `dim` and renormalized to unit trace.
    pub fn coherent_truncated(alpha: Complex64, dim: usize) -> Result<Self> {
        Self::pure(&coherent_amplitudes(alpha, dim))
    }

    /// Even cat state ∝ |α⟩ + |-α⟩ with real α = q0/√2, whose Wigner function
    /// has lobes at q = ±q0 and fringes cos(2 q0 p).
    pub fn even_cat(q0: f64) -> Result<Self> {
        let alpha = Complex64::new(q0 / std::f64::consts::SQRT_2, 0.0);
        let dim = truncation_for(alpha.norm_sqr());
        let plus = coherent_amplitudes(alpha, dim);
        let minus = coherent_amplitudes(-alpha, dim);
        let amps: Vec<Complex64> = plus.iter().zip(&minus).map(|(a, b)| a + b).collect();
        Self::pure(&amps)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    pub fn get(&self, j: usize, k: usize) -> Complex64 {
        if j >= self.dim || k >= self.dim {
            Complex64::new(0.0, 0.0)
        } else {
            self.entries[j * self.dim + k]
        }
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim).map(|j| self.get(j, j)).sum()
    }

    /// Largest |ρ_jk − conj(ρ_kj)|.
    pub fn hermitian_residue(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for j in 0..self.dim {
            for k in 0..=j {
                worst = worst.max((self.get(j, k) - self.get(k, j).conj()).norm());
            }
        }
        worst
    }

    /// ρ_jj − Σ_{k≠j} |ρ_jk| for each row.
    pub fn gershgorin_lower_bounds(&self) -> Vec<f64> {
        (0..self.dim)
            .map(|j| {
                let off: f64 = (0..self.dim)
                    .filter(|&k| k != j)
                    .map(|k| self.get(j, k).norm())
                    .sum();
                self.get(j, j).re - off
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let residue = self.hermitian_residue();
        if residue > MATRIX_TOLERANCE {
            return Err(Error::NonHermitian { residue });
        }
        let tr = self.trace();
        if (tr.re - 1.0).abs() > MATRIX_TOLERANCE || tr.im.abs() > MATRIX_TOLERANCE {
            return Err(Error::InvalidState(format!("trace {tr} != 1")));
        }
        // Pure states such as |c⟩⟨c| are PSD but generally fail the diagonal-
        // dominance surrogate, so only diagonal negativity is fatal here.
        if let Some(j) = (0..self.dim).find(|&j| self.get(j, j).re < -MATRIX_TOLERANCE) {
            return Err(Error::InvalidState(format!(
                "negative population {} at index {j}",
                self.get(j, j).re
            )));
        }
        Ok(())
    }

    /// Whether every Gershgorin disk lies in Re ≥ -1e-9, a sufficient
    /// condition for positive semidefiniteness.
    pub fn gershgorin_psd(&self) -> bool {
        self.gershgorin_lower_bounds()
            .iter()
            .all(|&b| b >= -MATRIX_TOLERANCE)
    }
}

fn coherent_amplitudes(alpha: Complex64, dim: usize) -> Vec<Complex64> {
    let mut amps = Vec::with_capacity(dim);
    let mut c = Complex64::new((-0.5 * alpha.norm_sqr()).exp(), 0.0);
    for j in 0..dim {
        amps.push(c);
        c = c * alpha / ((j + 1) as f64).sqrt();
    }
    amps
}

/// Dimension N ≥ 64 with Poisson(mean) tail mass beyond N−1 below 1e-10.
fn truncation_for(mean: f64) -> usize {
    let mut p = (-mean).exp();
    let mut cumulative = 0.0;
    let mut n = 0usize;
    while 1.0 - cumulative > TRUNCATION_TAIL && n < 4096 {
        cumulative += p;
        n += 1;
        p *= mean / n as f64;
    }
    n.max(DEFAULT_TRUNCATION)
}
