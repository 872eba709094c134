//! Fock-basis functions, Wigner functions and the analytic test states.
//!
//! Phase-space conventions: ħ = 1, vacuum Wigner function e^{-(q²+p²)}/π,
//! quadrature X_φ = Q cos φ + P sin φ, and the joint density of (X, Φ) on
//! ℝ × [0, π] carries the 1/π factor of the uniform phase.

mod class;
mod density_matrix;
mod pattern;

use std::f64::consts::{PI, SQRT_2};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridSpec, WignerGrid};
use crate::special::{
    hermite_functions_into, laguerre, laguerre_sequence_into, sqrt_factorial_ratio, MAX_FOCK_ORDER,
};

pub use class::{matrix_class_check, smoothness_class_check, smoothness_integral, ClassCheck};
pub use density_matrix::{DensityMatrix, DEFAULT_TRUNCATION, MATRIX_TOLERANCE, TRUNCATION_TAIL};
pub use pattern::{
    l_jk, pattern_fourier, pattern_function, reconstruct_matrix, reconstruct_rho_entry,
    DensityTable,
};

/// Largest imaginary residue tolerated when a real quantity is assembled
/// from complex matrix terms.
pub const IMAGINARY_TOLERANCE: f64 = 1e-9;

/// Scale convention of a state's Wigner function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    /// The closed forms exactly as written for the simulation study; the
    /// single-photon form integrates to π and the cat form to π(1+e^{-q0²}).
    Verbatim,
    /// Divided by the plane integral so that ∬W = 1.
    #[default]
    UnitMass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StateKind {
    Vacuum,
    Fock {
        k: usize,
    },
    Coherent {
        alpha: Complex64,
    },
    SinglePhoton,
    /// Even Schrödinger cat with lobes at q = ±q0.
    Cat {
        q0: f64,
    },
    Matrix {
        rho: DensityMatrix,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSpec {
    #[serde(flatten)]
    pub kind: StateKind,
    #[serde(default)]
    pub normalization: Normalization,
}

impl StateSpec {
    pub fn new(kind: StateKind, normalization: Normalization) -> Result<Self> {
        let spec = Self {
            kind,
            normalization,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn vacuum() -> Self {
        Self::unit(StateKind::Vacuum)
    }

    pub fn single_photon() -> Self {
        Self::unit(StateKind::SinglePhoton)
    }

    pub fn cat(q0: f64) -> Result<Self> {
        Self::new(StateKind::Cat { q0 }, Normalization::UnitMass)
    }

    pub fn fock(k: usize) -> Self {
        Self::unit(StateKind::Fock { k })
    }

    pub fn coherent(alpha: Complex64) -> Self {
        Self::unit(StateKind::Coherent { alpha })
    }

    pub fn matrix(rho: DensityMatrix) -> Self {
        Self::unit(StateKind::Matrix { rho })
    }

    fn unit(kind: StateKind) -> Self {
        Self {
            kind,
            normalization: Normalization::UnitMass,
        }
    }

    pub fn with_normalization(mut self, normalization: Normalization) -> Self {
        self.normalization = normalization;
        self
    }

    pub fn validate(&self) -> Result<()> {
        match &self.kind {
            StateKind::Cat { q0 } if !(*q0 > 0.0 && q0.is_finite()) => {
                Err(Error::domain("q0", *q0, "> 0"))
            }
            StateKind::Fock { k } if *k > MAX_FOCK_ORDER => Err(Error::UnsupportedOrder {
                order: *k,
                max: MAX_FOCK_ORDER,
            }),
            StateKind::Coherent { alpha } if !(alpha.re.is_finite() && alpha.im.is_finite()) => {
                Err(Error::domain("alpha", alpha.norm(), "finite"))
            }
            StateKind::Matrix { rho } => rho.validate(),
            _ => Ok(()),
        }
    }

    /// Short human-readable label, used in file names and reports.
    pub fn label(&self) -> String {
        match &self.kind {
            StateKind::Vacuum => "vacuum".into(),
            StateKind::Fock { k } => format!("fock-{k}"),
            StateKind::Coherent { alpha } => format!("coherent-{}-{}", alpha.re, alpha.im),
            StateKind::SinglePhoton => "single-photon".into(),
            StateKind::Cat { q0 } => format!("cat-{q0}"),
            StateKind::Matrix { rho } => format!("matrix-{}", rho.dim()),
        }
    }

    /// ∬ of the verbatim closed form; 1 for kinds that have no
    /// separate verbatim form.
    pub fn verbatim_integral(&self) -> f64 {
        match &self.kind {
            StateKind::SinglePhoton => PI,
            StateKind::Cat { q0 } => PI * (1.0 + (-q0 * q0).exp()),
            _ => 1.0,
        }
    }

    /// Density-matrix form of the state (truncated for coherent and cat).
    pub fn density_matrix(&self) -> Result<DensityMatrix> {
        match &self.kind {
            StateKind::Vacuum => Ok(DensityMatrix::vacuum()),
            StateKind::Fock { k } => Ok(DensityMatrix::fock(*k)),
            StateKind::SinglePhoton => Ok(DensityMatrix::fock(1)),
            StateKind::Coherent { alpha } => DensityMatrix::coherent(*alpha),
            StateKind::Cat { q0 } => DensityMatrix::even_cat(*q0),
            StateKind::Matrix { rho } => Ok(rho.clone()),
        }
    }

    /// Closed-form Wigner function at (q, p), honoring the normalization.
    /// `None` for the matrix kind.
    pub fn analytic_value(&self, q: f64, p: f64) -> Option<f64> {
        let r2 = q * q + p * p;
        let unit = match &self.kind {
            StateKind::Vacuum => (-r2).exp() / PI,
            StateKind::Fock { k } => {
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                sign * (-r2).exp() * laguerre(*k, 0.0, 2.0 * r2) / PI
            }
            StateKind::Coherent { alpha } => {
                let (q0, p0) = (SQRT_2 * alpha.re, SQRT_2 * alpha.im);
                (-(q - q0).powi(2) - (p - p0).powi(2)).exp() / PI
            }
            StateKind::SinglePhoton => -(1.0 - 2.0 * r2) * (-r2).exp() / PI,
            StateKind::Cat { q0 } => {
                let verbatim = 0.5 * (-(q - q0).powi(2) - p * p).exp()
                    + 0.5 * (-(q + q0).powi(2) - p * p).exp()
                    + (2.0 * q0 * p).cos() * (-r2).exp();
                verbatim / self.verbatim_integral()
            }
            StateKind::Matrix { .. } => return None,
        };
        Some(match self.normalization {
            Normalization::UnitMass => unit,
            Normalization::Verbatim => unit * self.verbatim_integral(),
        })
    }
}

/// ψ_j evaluated at every point of `xs`.
pub fn fock_eval(j: usize, xs: &[f64]) -> Result<Vec<f64>> {
    if j > MAX_FOCK_ORDER {
        return Err(Error::UnsupportedOrder {
            order: j,
            max: MAX_FOCK_ORDER,
        });
    }
    let mut buf = vec![0.0; j + 1];
    Ok(xs
        .iter()
        .map(|&x| {
            hermite_functions_into(x, &mut buf);
            buf[j]
        })
        .collect())
}

/// Wigner function W_{j,k}(q, p) of the operator |j⟩⟨k|.
pub fn wigner_basis(j: usize, k: usize, q: f64, p: f64) -> Complex64 {
    if j < k {
        return wigner_basis(k, j, q, p).conj();
    }
    let r2 = q * q + p * p;
    let d = j - k;
    let z = Complex64::new(-SQRT_2 * q, SQRT_2 * p);
    let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
    let radial =
        sign / PI * sqrt_factorial_ratio(j, k) * (-r2).exp() * laguerre(k, d as f64, 2.0 * r2);
    z.powu(d as u32) * radial
}

/// Σ_{j,k} ρ_jk W_jk(q, p) as a complex number; the imaginary part is the
/// Hermiticity residue.
pub fn wigner_point_from_matrix(rho: &DensityMatrix, q: f64, p: f64) -> Complex64 {
    let n = rho.dim();
    let r2 = q * q + p * p;
    let gauss = (-r2).exp() / PI;
    let z = Complex64::new(-SQRT_2 * q, SQRT_2 * p);
    let mut lag = vec![0.0; n];
    let mut total = Complex64::new(0.0, 0.0);
    // base = z^d / sqrt(d!)
    let mut base = Complex64::new(1.0, 0.0);
    for d in 0..n {
        if d > 0 {
            base = base * z / (d as f64).sqrt();
        }
        let len = n - d;
        laguerre_sequence_into(d as f64, 2.0 * r2, &mut lag[..len]);
        // ratio = sqrt(k! d! / (k+d)!)
        let mut ratio = 1.0;
        for k in 0..len {
            if k > 0 {
                ratio *= (k as f64 / (k + d) as f64).sqrt();
            }
            let j = k + d;
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            let w = base * (sign * ratio * gauss * lag[k]);
            total += rho.get(j, k) * w;
            if d > 0 {
                total += rho.get(k, j) * w.conj();
            }
        }
    }
    total
}

/// Tabulates Σ ρ_jk W_jk over a grid, rejecting imaginary residues above 1e-9.
pub fn wigner_from_matrix(rho: &DensityMatrix, spec: GridSpec) -> Result<WignerGrid> {
    use rayon::prelude::*;
    let points = spec.points();
    let values: Vec<Complex64> = points
        .par_iter()
        .map(|&(q, p)| wigner_point_from_matrix(rho, q, p))
        .collect();
    let residue = values.iter().fold(0.0f64, |m, v| m.max(v.im.abs()));
    if residue > IMAGINARY_TOLERANCE {
        return Err(Error::NonHermitian { residue });
    }
    WignerGrid::from_values(spec, values.into_iter().map(|v| v.re).collect())
}

/// Wigner grid of a state; closed forms where available, otherwise the
/// density-matrix expansion.
pub fn analytic_state(state: &StateSpec, spec: GridSpec) -> Result<WignerGrid> {
    state.validate()?;
    if let StateKind::Matrix { rho } = &state.kind {
        return wigner_from_matrix(rho, spec);
    }
    Ok(WignerGrid::from_fn(spec, |q, p| {
        state.analytic_value(q, p).expect("closed-form kind")
    }))
}

/// Joint density p_ρ(x, φ) of (X, Φ) on ℝ × [0, π], including the 1/π
/// angular factor.
pub fn joint_density(rho: &DensityMatrix, x: f64, phi: f64) -> Result<f64> {
    if !(0.0..=PI).contains(&phi) {
        return Err(Error::domain("phi", phi, "in [0, pi]"));
    }
    let n = rho.dim();
    let mut psi = vec![0.0; n];
    hermite_functions_into(x, &mut psi);
    let mut total = Complex64::new(0.0, 0.0);
    for j in 0..n {
        total += rho.get(j, j) * psi[j] * psi[j];
        for k in 0..j {
            let phase = Complex64::from_polar(1.0, -((j - k) as f64) * phi);
            let w = psi[j] * psi[k];
            total += rho.get(j, k) * phase * w + rho.get(k, j) * phase.conj() * w;
        }
    }
    if total.im.abs() > IMAGINARY_TOLERANCE {
        return Err(Error::NonHermitian {
            residue: total.im.abs(),
        });
    }
    if total.re < -IMAGINARY_TOLERANCE {
        return Err(Error::InvalidState(format!(
            "negative density {} at x = {x}, phi = {phi}",
            total.re
        )));
    }
    Ok(total.re.max(0.0) / PI)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fock_eval_examples() {
        let v = fock_eval(0, &[0.0]).unwrap();
        assert!((v[0] - 0.751_126).abs() < 1e-6);
        assert_eq!(fock_eval(1, &[0.0]).unwrap()[0], 0.0);
        assert!((fock_eval(2, &[0.0]).unwrap()[0] + 0.531_126).abs() < 1e-6);
        assert!(fock_eval(600, &[0.0]).is_err());
    }

    #[test]
    fn wigner_basis_examples() {
        let w00 = wigner_basis(0, 0, 0.0, 0.0);
        assert!((w00.re - 1.0 / PI).abs() < 1e-15 && w00.im == 0.0);
        assert!((wigner_basis(1, 1, 0.0, 0.0).re + 1.0 / PI).abs() < 1e-15);
        assert_eq!(wigner_basis(1, 0, 0.0, 0.0).norm(), 0.0);
        for &(j, k) in &[(3, 1), (5, 0), (7, 4)] {
            for &(q, p) in &[(0.3, -1.1), (2.0, 0.5)] {
                let a = wigner_basis(j, k, q, p);
                let b = wigner_basis(k, j, q, p);
                assert!((a - b.conj()).norm() < 1e-15);
            }
        }
        for j in 0..6 {
            assert_eq!(wigner_basis(j, j, 0.4, 0.9).im, 0.0);
        }
    }

    #[test]
    fn matrix_expansion_agrees_with_basis_sum() {
        let rho = DensityMatrix::coherent_truncated(Complex64::new(0.7, -0.4), 6).unwrap();
        for &(q, p) in &[(0.1, 0.2), (-1.0, 0.8), (1.7, -0.3)] {
            let mut direct = Complex64::new(0.0, 0.0);
            for j in 0..6 {
                for k in 0..6 {
                    direct += rho.get(j, k) * wigner_basis(j, k, q, p);
                }
            }
            let fast = wigner_point_from_matrix(&rho, q, p);
            assert!((direct - fast).norm() < 1e-14);
        }
    }

    #[test]
    fn wigner_from_matrix_examples() {
        let spec = GridSpec::new(3.0, 16).unwrap();
        let vac = wigner_from_matrix(&DensityMatrix::vacuum(), spec).unwrap();
        for ((q, p), v) in spec.points().into_iter().zip(vac.values()) {
            assert!((v - (-(q * q + p * p)).exp() / PI).abs() < 1e-15);
        }
        let one = wigner_from_matrix(&DensityMatrix::fock(1), spec).unwrap();
        let analytic = analytic_state(&StateSpec::single_photon(), spec).unwrap();
        for (a, b) in one.values().iter().zip(analytic.values()) {
            assert!((a - b).abs() < 1e-9);
        }
        let origin = GridSpec::new(0.0, 1).unwrap();
        let w = wigner_from_matrix(&DensityMatrix::fock(1), origin).unwrap();
        assert!((w.values()[0] + 1.0 / PI).abs() < 1e-15);
    }

    #[test]
    fn non_hermitian_matrix_detected() {
        let c = Complex64::new;
        let rho = DensityMatrix::from_entries_unchecked(
            2,
            vec![c(0.5, 0.0), c(0.2, 0.3), c(0.2, 0.3), c(0.5, 0.0)],
        )
        .unwrap();
        let spec = GridSpec::new(1.0, 4).unwrap();
        assert!(matches!(
            wigner_from_matrix(&rho, spec),
            Err(Error::NonHermitian { .. })
        ));
    }

    #[test]
    fn analytic_examples() {
        let sp = StateSpec::single_photon();
        assert!((sp.analytic_value(0.0, 0.0).unwrap() + 1.0 / PI).abs() < 1e-15);
        let verbatim = sp.clone().with_normalization(Normalization::Verbatim);
        assert!((verbatim.analytic_value(0.0, 0.0).unwrap() + 1.0).abs() < 1e-15);
        let cat = StateSpec::cat(3.0)
            .unwrap()
            .with_normalization(Normalization::Verbatim);
        let expected = 0.5 * (-9f64).exp() + 0.5 * (-9f64).exp() + 1.0;
        assert!((cat.analytic_value(0.0, 0.0).unwrap() - expected).abs() < 1e-15);
        assert!((expected - (1.0 + (-9f64).exp())).abs() < 1e-15);
        assert!(StateSpec::cat(0.0).is_err());
        assert!(StateSpec::cat(-1.0).is_err());
    }

    #[test]
    fn closed_forms_match_matrix_forms() {
        let spec = GridSpec::new(7.0, 40).unwrap();
        let states = [
            StateSpec::fock(3),
            StateSpec::coherent(Complex64::new(1.2, -0.8)),
            StateSpec::cat(3.0).unwrap(),
        ];
        for state in &states {
            let closed = analytic_state(state, spec).unwrap();
            let via = wigner_from_matrix(&state.density_matrix().unwrap(), spec).unwrap();
            let worst = closed
                .values()
                .iter()
                .zip(via.values())
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            assert!(worst < 1e-9, "{}: {worst}", state.label());
        }
    }

    #[test]
    fn joint_density_examples() {
        let vac = DensityMatrix::vacuum();
        for &phi in &[0.0, 1.0, PI] {
            let v = joint_density(&vac, 0.0, phi).unwrap();
            assert!((v - 1.0 / (PI * PI.sqrt())).abs() < 1e-15);
            assert!((v - 0.179_587).abs() < 1e-6);
        }
        assert_eq!(
            joint_density(&DensityMatrix::fock(1), 0.0, 0.7).unwrap(),
            0.0
        );
        assert!(joint_density(&vac, 0.0, 4.0).is_err());
    }

    #[test]
    fn joint_density_integrates_to_one() {
        let rho = DensityMatrix::coherent_truncated(Complex64::new(1.0, 0.5), 20).unwrap();
        let n_phi = 64;
        let dx = 0.01;
        let mut total = 0.0;
        for a in 0..n_phi {
            let phi = PI * (a as f64 + 0.5) / n_phi as f64;
            let mut row = 0.0;
            let mut x = -10.0;
            while x <= 10.0 {
                row += joint_density(&rho, x, phi).unwrap() * dx;
                x += dx;
            }
            total += row * PI / n_phi as f64;
        }
        assert!((total - 1.0).abs() < 1e-6, "{total}");
    }

    #[test]
    fn state_spec_json_shape() {
        let cat = StateSpec::cat(3.0).unwrap();
        let text = serde_json::to_string(&cat).unwrap();
        assert_eq!(
            text,
            r#"{"kind":"cat","q0":3.0,"normalization":"unit-mass"}"#
        );
        let back: StateSpec = serde_json::from_str(r#"{"kind":"single-photon"}"#).unwrap();
        assert_eq!(back, StateSpec::single_photon());
        let coh: StateSpec = serde_json::from_str(
            r#"{"kind":"coherent","alpha":[3.0,0.0],"normalization":"verbatim"}"#,
        )
        .unwrap();
        assert_eq!(
            coh.kind,
            StateKind::Coherent {
                alpha: Complex64::new(3.0, 0.0)
            }
        );
    }
}
