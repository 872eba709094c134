//! Noisy homodyne measurements (Z, Φ) drawn under detection efficiency η.

use std::f64::consts::{PI, SQRT_2};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::states::{fock_eval, joint_density, StateKind, StateSpec};

/// Number of angle nodes per half turn for the inverse-CDF tables.
pub const ANGLE_TABLES: usize = 512;
/// Points per cumulative distribution table.
pub const CDF_POINTS: usize = 4096;
/// Negative density below this is clamped and reported.
pub const NEGATIVITY_TOLERANCE: f64 = 1e-12;

/// γ = (1 − η)/(4η) for η in (1/2, 1].
pub fn gamma_from_eta(eta: f64) -> Result<f64> {
    if !(eta > 0.5 && eta <= 1.0) {
        return Err(Error::domain("eta", eta, "in (1/2, 1]"));
    }
    Ok((1.0 - eta) / (4.0 * eta))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawNoise")]
pub struct NoiseModel {
    eta: f64,
    gamma: f64,
}

#[derive(Deserialize)]
struct RawNoise {
    eta: f64,
}

impl TryFrom<RawNoise> for NoiseModel {
    type Error = Error;
    fn try_from(raw: RawNoise) -> Result<Self> {
        NoiseModel::new(raw.eta)
    }
}

impl NoiseModel {
    pub fn new(eta: f64) -> Result<Self> {
        Ok(Self {
            eta,
            gamma: gamma_from_eta(eta)?,
        })
    }

    pub fn ideal() -> Self {
        Self {
            eta: 1.0,
            gamma: 0.0,
        }
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Standard deviation √(2γ) of the additive noise on Z.
    pub fn noise_std(&self) -> f64 {
        (2.0 * self.gamma).sqrt()
    }
}

/// p_ρ(x | φ) tabulated on caller-supplied abscissae.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalDensity {
    pub xs: Vec<f64>,
    pub values: Vec<f64>,
    /// Most negative raw value when it fell below −1e-12, after which the
    /// table was clamped at zero and renormalized.
    pub clamped_from: Option<f64>,
}

/// Unit-mass quadrature density p_ρ(x | φ), whatever the state's declared
/// normalization.
pub fn conditional_density(state: &StateSpec, phi: f64, xs: &[f64]) -> Result<ConditionalDensity> {
    state.validate()?;
    let evaluator = DensityEvaluator::new(state)?;
    let mut values: Vec<f64> = xs
        .iter()
        .map(|&x| evaluator.eval(x, phi))
        .collect::<Result<_>>()?;
    let worst = values.iter().copied().fold(0.0f64, f64::min);
    let mut clamped_from = None;
    for v in values.iter_mut() {
        *v = v.max(0.0);
    }
    if worst < -NEGATIVITY_TOLERANCE {
        clamped_from = Some(worst);
        let mass = trapezoid(xs, &values);
        if mass > 0.0 {
            for v in values.iter_mut() {
                *v /= mass;
            }
        }
    }
    Ok(ConditionalDensity {
        xs: xs.to_vec(),
        values,
        clamped_from,
    })
}

fn trapezoid(xs: &[f64], ys: &[f64]) -> f64 {
    xs.windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
        .sum()
}

enum DensityEvaluator {
    Vacuum,
    Fock(usize),
    Coherent { q0: f64, p0: f64 },
    Cat { q0: f64 },
    Matrix(crate::states::DensityMatrix),
}

impl DensityEvaluator {
    fn new(state: &StateSpec) -> Result<Self> {
        Ok(match &state.kind {
            StateKind::Vacuum => Self::Vacuum,
            StateKind::Fock { k } => Self::Fock(*k),
            StateKind::SinglePhoton => Self::Fock(1),
            StateKind::Coherent { alpha } => Self::Coherent {
                q0: SQRT_2 * alpha.re,
                p0: SQRT_2 * alpha.im,
            },
            StateKind::Cat { q0 } => Self::Cat { q0: *q0 },
            StateKind::Matrix { rho } => Self::Matrix(rho.clone()),
        })
    }

    fn eval(&self, x: f64, phi: f64) -> Result<f64> {
        let sqrt_pi = PI.sqrt();
        Ok(match self {
            Self::Vacuum => (-x * x).exp() / sqrt_pi,
            Self::Fock(1) => 2.0 * x * x * (-x * x).exp() / sqrt_pi,
            Self::Fock(k) => fock_eval(*k, &[x])?[0].powi(2),
            Self::Coherent { q0, p0 } => {
                let mean = q0 * phi.cos() + p0 * phi.sin();
                (-(x - mean).powi(2)).exp() / sqrt_pi
            }
            Self::Cat { q0 } => {
                let (s, c) = phi.sin_cos();
                let lobes =
                    0.5 * sqrt_pi * ((-(x - q0 * c).powi(2)).exp() + (-(x + q0 * c).powi(2)).exp());
                let fringe =
                    sqrt_pi * (-(q0 * c).powi(2)).exp() * (2.0 * q0 * x * s).cos() * (-x * x).exp();
                (lobes + fringe) / (PI * (1.0 + (-q0 * q0).exp()))
            }
            // joint density carries the uniform angle law 1/π
            Self::Matrix(rho) => PI * joint_density(rho, x, phi.clamp(0.0, PI))?,
        })
    }
}

/// Half-width of the quadrature range tabulated for sampling.
fn sampling_half_width(state: &StateSpec) -> f64 {
    let spread = match &state.kind {
        StateKind::Vacuum => 1.0,
        StateKind::SinglePhoton => 3f64.sqrt(),
        StateKind::Fock { k } => ((2 * k + 1) as f64).sqrt(),
        StateKind::Coherent { alpha } => SQRT_2 * alpha.norm() + 1.0,
        StateKind::Cat { q0 } => q0 + 1.0,
        StateKind::Matrix { rho } => ((2 * rho.dim() + 1) as f64).sqrt(),
    };
    7.0 + spread
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomodyneDataset {
    pub z: Vec<f64>,
    pub phi: Vec<f64>,
    pub noise: NoiseModel,
    pub seed: u64,
    pub state: StateSpec,
}

impl HomodyneDataset {
    pub fn new(
        z: Vec<f64>,
        phi: Vec<f64>,
        noise: NoiseModel,
        seed: u64,
        state: StateSpec,
    ) -> Result<Self> {
        if z.len() != phi.len() {
            return Err(Error::Shape(format!(
                "{} z values but {} angles",
                z.len(),
                phi.len()
            )));
        }
        if let Some(bad) = phi.iter().find(|p| !(0.0..=PI).contains(*p)) {
            return Err(Error::domain("phi", *bad, "in [0, pi]"));
        }
        if let Some(bad) = z.iter().find(|v| !v.is_finite()) {
            return Err(Error::domain("z", *bad, "finite"));
        }
        Ok(Self {
            z,
            phi,
            noise,
            seed,
            state,
        })
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    pub fn gamma(&self) -> f64 {
        self.noise.gamma()
    }

    /// Noiseless-scale outcomes Y = Z √η.
    pub fn y(&self) -> Vec<f64> {
        let s = self.noise.eta().sqrt();
        self.z.iter().map(|z| z * s).collect()
    }
}

/// Inverse-CDF tables of p_ρ(· | φ) at angle nodes φ_b = πb/512, b = 0..=512.
struct SamplingTables {
    x_min: f64,
    dx: f64,
    /// cdf[b * CDF_POINTS + i], each row rising from 0 to 1
    cdf: Vec<f64>,
}

impl SamplingTables {
    fn build(state: &StateSpec) -> Result<Self> {
        let half = sampling_half_width(state);
        let dx = 2.0 * half / (CDF_POINTS - 1) as f64;
        let xs: Vec<f64> = (0..CDF_POINTS).map(|i| -half + i as f64 * dx).collect();
        let rows: Vec<Vec<f64>> = (0..=ANGLE_TABLES)
            .into_par_iter()
            .map(|b| {
                let phi = PI * b as f64 / ANGLE_TABLES as f64;
                let density = conditional_density(state, phi, &xs)?;
                let mut cdf = Vec::with_capacity(CDF_POINTS);
                let mut acc = 0.0;
                cdf.push(0.0);
                for w in density.values.windows(2) {
                    acc += 0.5 * dx * (w[0] + w[1]);
                    cdf.push(acc);
                }
                if !(acc > 0.0) {
                    return Err(Error::InvalidState(format!(
                        "zero quadrature density at phi = {phi}"
                    )));
                }
                for c in cdf.iter_mut() {
                    *c /= acc;
                }
                Ok(cdf)
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            x_min: -half,
            dx,
            cdf: rows.concat(),
        })
    }

    fn invert(&self, b: usize, u: f64) -> f64 {
        let row = &self.cdf[b * CDF_POINTS..(b + 1) * CDF_POINTS];
        // first index with cdf > u
        let hi = row.partition_point(|&c| c <= u).clamp(1, CDF_POINTS - 1);
        let lo = hi - 1;
        let width = row[hi] - row[lo];
        let frac = if width > 0.0 {
            (u - row[lo]) / width
        } else {
            0.5
        };
        self.x_min + (lo as f64 + frac) * self.dx
    }
}

/// Draws n i.i.d. pairs: Φ ~ U[0, π], X | Φ from p_ρ(· | Φ), Z = X + √(2γ) ξ.
///
/// X is drawn from the two angle tables bracketing Φ, picked with
/// probabilities given by the linear interpolation weights. Sample ℓ uses its
/// own ChaCha8 stream ℓ keyed by the seed, so the output does not depend on
/// the number of threads.
pub fn sample_homodyne(
    state: &StateSpec,
    n: usize,
    eta: f64,
    seed: u64,
) -> Result<HomodyneDataset> {
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let noise = NoiseModel::new(eta)?;
    let mut unit = state.clone();
    unit.normalization = crate::states::Normalization::UnitMass;
    let tables = SamplingTables::build(&unit)?;
    let sigma = noise.noise_std();
    let base = ChaCha8Rng::seed_from_u64(seed);
    let pairs: Vec<(f64, f64)> = (0..n)
        .into_par_iter()
        .map(|l| {
            let mut rng = base.clone();
            rng.set_stream(l as u64);
            let phi = PI * rng.random::<f64>();
            let pos = phi / PI * ANGLE_TABLES as f64;
            let lower = (pos.floor() as usize).min(ANGLE_TABLES - 1);
            let b = if rng.random::<f64>() < pos - lower as f64 {
                lower + 1
            } else {
                lower
            };
            let x = tables.invert(b, rng.random::<f64>());
            let xi: f64 = rng.sample(StandardNormal);
            (x + sigma * xi, phi)
        })
        .collect();
    let (z, phi) = pairs.into_iter().unzip();
    Ok(HomodyneDataset {
        z,
        phi,
        noise,
        seed,
        state: state.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_examples() {
        assert_eq!(gamma_from_eta(1.0).unwrap(), 0.0);
        assert!((gamma_from_eta(0.9).unwrap() - 1.0 / 36.0).abs() < 1e-15);
        assert!(gamma_from_eta(0.5).is_err());
        assert!(gamma_from_eta(1.01).is_err());
    }

    #[test]
    fn noise_model_from_json_recomputes_gamma() {
        let noise: NoiseModel = serde_json::from_str(r#"{"eta":0.9,"gamma":5.0}"#).unwrap();
        assert!((noise.gamma() - 1.0 / 36.0).abs() < 1e-15);
        assert!(serde_json::from_str::<NoiseModel>(r#"{"eta":0.4}"#).is_err());
    }

    #[test]
    fn closed_forms() {
        let xs: Vec<f64> = (-40..=40).map(|i| i as f64 * 0.1).collect();
        let vac = conditional_density(&StateSpec::vacuum(), 0.3, &xs).unwrap();
        for (x, v) in xs.iter().zip(&vac.values) {
            assert!((v - (-x * x).exp() / PI.sqrt()).abs() < 1e-15);
        }
        let a = conditional_density(&StateSpec::single_photon(), 0.0, &xs).unwrap();
        let b = conditional_density(&StateSpec::single_photon(), PI / 2.0, &xs).unwrap();
        assert_eq!(a.values, b.values);
        assert!(a.clamped_from.is_none());
    }

    #[test]
    fn closed_forms_match_matrix_route() {
        let xs: Vec<f64> = (-80..=80).map(|i| i as f64 * 0.1).collect();
        let states = [
            StateSpec::cat(3.0).unwrap(),
            StateSpec::coherent(num_complex::Complex64::new(0.8, -0.6)),
            StateSpec::fock(3),
        ];
        for state in &states {
            let rho = state.density_matrix().unwrap();
            let via = StateSpec::matrix(rho);
            for &phi in &[0.0, 0.4, PI / 2.0, 2.9] {
                let a = conditional_density(state, phi, &xs).unwrap();
                let b = conditional_density(&via, phi, &xs).unwrap();
                for (u, v) in a.values.iter().zip(&b.values) {
                    assert!((u - v).abs() < 1e-9, "{} phi={phi}", state.label());
                }
            }
        }
    }

    #[test]
    fn sampling_is_reproducible() {
        let s = StateSpec::single_photon();
        let a = sample_homodyne(&s, 1, 0.9, 11).unwrap();
        let b = sample_homodyne(&s, 1, 0.9, 11).unwrap();
        assert_eq!(a.z[0].to_bits(), b.z[0].to_bits());
        assert_eq!(a.phi[0].to_bits(), b.phi[0].to_bits());
        let c = sample_homodyne(&s, 1, 0.9, 12).unwrap();
        assert_ne!(a.z[0], c.z[0]);
        assert!(matches!(
            sample_homodyne(&s, 0, 0.9, 1),
            Err(Error::EmptyDataset)
        ));
        // a prefix of a longer run is the shorter run
        let long = sample_homodyne(&s, 50, 0.9, 11).unwrap();
        assert_eq!(long.z[0].to_bits(), a.z[0].to_bits());
    }

    #[test]
    fn dataset_validation() {
        let noise = NoiseModel::ideal();
        let st = StateSpec::vacuum();
        assert!(HomodyneDataset::new(vec![0.0], vec![], noise, 0, st.clone()).is_err());
        assert!(HomodyneDataset::new(vec![0.0], vec![4.0], noise, 0, st.clone()).is_err());
        assert!(HomodyneDataset::new(vec![], vec![], noise, 0, st)
            .unwrap()
            .is_empty());
    }
}
