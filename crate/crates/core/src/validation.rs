//! Invariant checks run by `qht validate` and the acceptance suite.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::Result;
use crate::estimate::{direct_estimate_grid, grid_estimate, sup_error, Binning};
use crate::grid::GridSpec;
use crate::simulate::sample_homodyne;
use crate::special::hermite_functions_into;
use crate::states::{analytic_state, l_jk, pattern_fourier, Normalization, StateSpec};
use crate::tomography::radon;

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.into(),
            passed,
            detail,
        }
    }
}

/// Gram matrix of ψ_0..ψ_max on [−20, 20] with step 1e-3.
pub fn fock_orthonormality(max: usize) -> CheckResult {
    let step = 1e-3;
    let n = (40.0 / step) as usize;
    let dim = max + 1;
    let gram = (0..=n)
        .into_par_iter()
        .fold(
            || (vec![0.0; dim], vec![0.0; dim * dim]),
            |(mut buf, mut acc), i| {
                let x = -20.0 + i as f64 * step;
                let w = if i == 0 || i == n { 0.5 * step } else { step };
                hermite_functions_into(x, &mut buf);
                for j in 0..dim {
                    for k in 0..dim {
                        acc[j * dim + k] += w * buf[j] * buf[k];
                    }
                }
                (buf, acc)
            },
        )
        .map(|(_, acc)| acc)
        .reduce(
            || vec![0.0; dim * dim],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );
    let worst = (0..dim * dim)
        .map(|i| {
            let target = if i / dim == i % dim { 1.0 } else { 0.0 };
            (gram[i] - target).abs()
        })
        .fold(0.0, f64::max);
    CheckResult::new(
        "fock orthonormality",
        worst <= 1e-6,
        format!("max |<psi_j, psi_k> - delta_jk| = {worst:.3e} for j, k <= {max}"),
    )
}

/// l_jk(t) ≤ 1/π on [0, √J] and ≤ e^{−(t−√J)²}/π beyond, J = j + k + 1.
pub fn laguerre_envelope(max: usize) -> CheckResult {
    let step = 0.01;
    let mut worst_ratio: f64 = 0.0;
    let mut tested = 0usize;
    for j in 0..=max {
        for k in 0..=j {
            let sqrt_j = ((j + k + 1) as f64).sqrt();
            let t_end = sqrt_j + 8.0;
            let count = (t_end / step).ceil() as usize;
            for i in 0..=count {
                let t = i as f64 * step;
                let bound = if t <= sqrt_j {
                    1.0 / PI
                } else {
                    (-(t - sqrt_j).powi(2)).exp() / PI
                };
                let value = l_jk(j, k, t);
                if bound > 1e-250 {
                    worst_ratio = worst_ratio.max(value / bound);
                }
                tested += 1;
            }
        }
    }
    CheckResult::new(
        "laguerre envelope",
        worst_ratio <= 1.0 + 1e-12,
        format!("max l_jk / bound = {worst_ratio:.6} over {tested} points, j, k <= {max}"),
    )
}

/// |f̃_jk(t)| = π²|t| l_jk(|t|/2).
pub fn pattern_identity(max: usize) -> CheckResult {
    let mut worst: f64 = 0.0;
    for j in 0..=max {
        for k in 0..=j {
            for m in 0..=800 {
                let t = -20.0 + 0.05 * m as f64;
                let lhs = pattern_fourier(j, k, t).norm();
                let rhs = PI * PI * t.abs() * l_jk(j, k, t.abs() / 2.0);
                let scale = lhs.max(rhs);
                if scale > 0.0 {
                    worst = worst.max((lhs - rhs).abs() / scale);
                }
            }
        }
    }
    CheckResult::new(
        "pattern identity",
        worst <= 1e-10,
        format!("max relative mismatch {worst:.3e} for j, k <= {max}"),
    )
}

fn test_states() -> Vec<StateSpec> {
    vec![
        StateSpec::vacuum(),
        StateSpec::single_photon(),
        StateSpec::cat(3.0).expect("q0 > 0"),
        StateSpec::fock(3),
        StateSpec::coherent(Complex64::new(1.0, 0.5)),
    ]
}

pub fn unit_mass() -> Result<CheckResult> {
    let spec = GridSpec::new(8.0, 256)?;
    let mut worst: f64 = 0.0;
    let mut detail = Vec::new();
    for s in test_states() {
        let integral = analytic_state(&s, spec)?.integral();
        worst = worst.max((integral - 1.0).abs());
        detail.push(format!("{} {integral:.6}", s.label()));
    }
    Ok(CheckResult::new(
        "unit mass",
        worst <= 1e-3,
        detail.join(", "),
    ))
}

pub fn radon_row_mass() -> Result<CheckResult> {
    let spec = GridSpec::new(8.0, 256)?;
    let mut worst: f64 = 0.0;
    for s in test_states().into_iter().take(3) {
        let sino = radon(
            &analytic_state(&s, spec)?,
            64,
            256,
            8.0 * std::f64::consts::SQRT_2,
        )?;
        for a in 0..sino.n_angles() {
            worst = worst.max((sino.row_mass(a) - 1.0).abs());
        }
    }
    Ok(CheckResult::new(
        "radon row mass",
        worst <= 1e-3,
        format!("max |row mass - 1| = {worst:.3e}"),
    ))
}

/// ∫ R[W_vacuum](x, φ) e^{itx} dx = e^{−t²/4} for |t| ≤ 8.
pub fn fourier_slice() -> Result<CheckResult> {
    let spec = GridSpec::new(6.0, 256)?;
    let sino = radon(&analytic_state(&StateSpec::vacuum(), spec)?, 16, 256, 6.0)?;
    let xs = sino.xs();
    let dx = sino.dx();
    let mut worst: f64 = 0.0;
    for a in 0..sino.n_angles() {
        for m in 0..=160 {
            let t = -8.0 + 0.1 * m as f64;
            let ft: Complex64 = xs
                .iter()
                .zip(sino.row(a))
                .map(|(x, v)| Complex64::from_polar(v * dx, t * x))
                .sum();
            worst = worst.max((ft - (-t * t / 4.0).exp()).norm());
        }
    }
    Ok(CheckResult::new(
        "fourier slice",
        worst <= 1e-3,
        format!("max |row transform - exp(-t^2/4)| = {worst:.3e}"),
    ))
}

#[derive(Debug, Clone, Serialize)]
pub struct EquivalenceCase {
    pub state: String,
    pub gamma: f64,
    pub h: f64,
    pub relative_deviation: f64,
}

/// Binned against direct estimates, n = 200 on 64² grids.
pub fn oracle_equivalence() -> Result<(CheckResult, Vec<EquivalenceCase>)> {
    let mut cases = Vec::new();
    for (si, state) in test_states().into_iter().take(3).enumerate() {
        let hw = if matches!(state.kind, crate::states::StateKind::Cat { .. }) {
            8.0
        } else {
            6.0
        };
        let spec = GridSpec::new(hw, 64)?;
        for (gi, &eta) in [1.0, 0.9].iter().enumerate() {
            let data = sample_homodyne(&state, 200, eta, 1000 + 10 * si as u64 + gi as u64)?;
            for &h in &[0.5, 0.3] {
                let direct = direct_estimate_grid(&data, h, spec, Normalization::UnitMass)?;
                let binned =
                    grid_estimate(&data, h, spec, Binning::default(), Normalization::UnitMass)?;
                cases.push(EquivalenceCase {
                    state: state.label(),
                    gamma: data.gamma(),
                    h,
                    relative_deviation: sup_error(&binned.grid, &direct.grid)?
                        / direct.grid.max_abs(),
                });
            }
        }
    }
    let worst = cases
        .iter()
        .map(|c| c.relative_deviation)
        .fold(0.0, f64::max);
    Ok((
        CheckResult::new(
            "oracle equivalence",
            worst <= 0.05,
            format!(
                "max sup|binned - direct| / sup|direct| = {worst:.4} over {} cases",
                cases.len()
            ),
        ),
        cases,
    ))
}

/// Sample variance of Z for the vacuum against 1/2 + 2γ, within three
/// standard errors σ²√(2/(n−1)).
pub fn vacuum_variance(eta: f64, n: usize, seed: u64) -> Result<CheckResult> {
    let data = sample_homodyne(&StateSpec::vacuum(), n, eta, seed)?;
    let mean = data.z.iter().sum::<f64>() / n as f64;
    let var = data.z.iter().map(|z| (z - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let expected = 0.5 + 2.0 * data.gamma();
    let se = expected * (2.0 / (n - 1) as f64).sqrt();
    let score = (var - expected) / se;
    Ok(CheckResult::new(
        &format!("vacuum variance eta={eta}"),
        score.abs() <= 3.0,
        format!("sample variance {var:.5}, expected {expected:.5}, {score:+.2} standard errors"),
    ))
}

/// E[e^{itZ}] = E[e^{itX}] e^{−γt²}, tested on paired draws: the noiseless
/// run with the same seed reproduces X exactly.
pub fn noise_characteristic_function(
    state: &StateSpec,
    eta: f64,
    n: usize,
    seed: u64,
    ts: &[f64],
) -> Result<CheckResult> {
    let noisy = sample_homodyne(state, n, eta, seed)?;
    let clean = sample_homodyne(state, n, 1.0, seed)?;
    let gamma = noisy.gamma();
    let mut worst: f64 = 0.0;
    let mut detail = Vec::new();
    for &t in ts {
        let factor = (-gamma * t * t).exp();
        let diffs: Vec<Complex64> = noisy
            .z
            .iter()
            .zip(&clean.z)
            .map(|(z, x)| {
                Complex64::from_polar(1.0, t * z) - factor * Complex64::from_polar(1.0, t * x)
            })
            .collect();
        let mean: Complex64 = diffs.iter().sum::<Complex64>() / n as f64;
        let var_re = diffs.iter().map(|d| (d.re - mean.re).powi(2)).sum::<f64>() / (n - 1) as f64;
        let var_im = diffs.iter().map(|d| (d.im - mean.im).powi(2)).sum::<f64>() / (n - 1) as f64;
        let z_re = mean.re / (var_re / n as f64).sqrt();
        let z_im = mean.im / (var_im / n as f64).sqrt();
        let score = z_re.abs().max(z_im.abs());
        worst = worst.max(score);
        let cf_x: Complex64 = clean
            .z
            .iter()
            .map(|x| Complex64::from_polar(1.0, t * x))
            .sum::<Complex64>()
            / n as f64;
        let cf_z: Complex64 = noisy
            .z
            .iter()
            .map(|z| Complex64::from_polar(1.0, t * z))
            .sum::<Complex64>()
            / n as f64;
        let ratio = if cf_x.norm() > 0.0 {
            (cf_z / cf_x).re
        } else {
            f64::NAN
        };
        detail.push(format!(
            "t={t}: cf ratio {ratio:.4} vs {factor:.4} ({score:.2} se)"
        ));
    }
    Ok(CheckResult::new(
        "noise characteristic function",
        worst <= 4.0,
        detail.join("; "),
    ))
}

/// Analytic invariants that need no sampling.
pub fn analytic_suite() -> Result<Vec<CheckResult>> {
    Ok(vec![
        fock_orthonormality(20),
        laguerre_envelope(20),
        pattern_identity(10),
        unit_mass()?,
        radon_row_mass()?,
        fourier_slice()?,
    ])
}

/// Everything `qht validate` runs.
pub fn validation_suite() -> Result<Vec<CheckResult>> {
    let mut checks = analytic_suite()?;
    checks.push(oracle_equivalence()?.0);
    checks.push(vacuum_variance(1.0, 100_000, 7)?);
    checks.push(vacuum_variance(0.9, 100_000, 8)?);
    checks.push(noise_characteristic_function(
        &StateSpec::vacuum(),
        0.9,
        100_000,
        9,
        &[1.0, 2.0, 4.0],
    )?);
    Ok(checks)
}
