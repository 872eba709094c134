//! The deconvolving kernel estimator of the Wigner function: a direct
//! evaluation used as the reference, and a binned filtered-back-projection
//! path for full grids.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridSpec, WignerGrid};
use crate::simulate::HomodyneDataset;
use crate::states::Normalization;
use crate::tomography::{backproject, filter_sinogram, DeconvolutionKernel, Sinogram};

/// Fraction of samples falling outside the radial range above which a
/// binned estimate is flagged.
pub const DROPPED_WARNING_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimateMethod {
    Direct,
    BinnedFbp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateResult {
    pub grid: WignerGrid,
    pub h: f64,
    pub gamma: f64,
    pub n: usize,
    pub method: EstimateMethod,
    /// Kernel cutoff 1/h beyond the radial Nyquist frequency.
    pub cutoff_flag: bool,
    /// Share of samples outside the radial range (binned path only).
    pub dropped_fraction: f64,
}

impl EstimateResult {
    pub fn range_warning(&self) -> bool {
        self.dropped_fraction > DROPPED_WARNING_FRACTION
    }
}

/// Prefactor c in Ŵ = c Σ_ℓ K(·). Unit mass uses 1/(2n), under which the
/// estimator is unbiased for a Wigner function integrating to one when Φ is
/// uniform on [0, π]; the verbatim variant keeps the literal 1/(2πn).
pub fn estimator_prefactor(n: usize, normalization: Normalization) -> f64 {
    match normalization {
        Normalization::UnitMass => 1.0 / (2.0 * n as f64),
        Normalization::Verbatim => 1.0 / (2.0 * PI * n as f64),
    }
}

/// K_h^γ tabulated on [0, s_max] for 4-point Lagrange interpolation.
#[derive(Debug, Clone)]
pub struct KernelTable {
    kernel: DeconvolutionKernel,
    step: f64,
    values: Vec<f64>,
}

impl KernelTable {
    /// Table step 1e-3·h, which keeps interpolation error far below 1e-8 of K(0).
    pub fn new(kernel: DeconvolutionKernel, s_max: f64) -> Self {
        let step = 1e-3 * kernel.h();
        let len = (s_max.max(0.0) / step).ceil() as usize + 4;
        // index i holds K((i − 1)·step) so the stencil at 0 has a left neighbour
        let values = (0..len)
            .into_par_iter()
            .map(|i| kernel.real((i as f64 - 1.0) * step))
            .collect();
        Self {
            kernel,
            step,
            values,
        }
    }

    pub fn kernel(&self) -> &DeconvolutionKernel {
        &self.kernel
    }

    #[inline]
    pub fn eval(&self, s: f64) -> f64 {
        let f = s.abs() / self.step + 1.0;
        let i = f.floor() as usize;
        if i + 2 >= self.values.len() {
            return self.kernel.real(s);
        }
        let t = f - i as f64;
        let [y0, y1, y2, y3] = [
            self.values[i - 1],
            self.values[i],
            self.values[i + 1],
            self.values[i + 2],
        ];
        // Lagrange on nodes −1, 0, 1, 2
        let c0 = -t * (t - 1.0) * (t - 2.0) / 6.0;
        let c1 = (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0;
        let c2 = -(t + 1.0) * t * (t - 2.0) / 2.0;
        let c3 = (t + 1.0) * t * (t - 1.0) / 6.0;
        c0 * y0 + c1 * y1 + c2 * y2 + c3 * y3
    }
}

/// Ŵ_h^γ(q, p) = c Σ_ℓ K_h^γ(q cos Φ_ℓ + p sin Φ_ℓ − Z_ℓ) at each point.
pub fn direct_estimate(
    data: &HomodyneDataset,
    h: f64,
    points: &[(f64, f64)],
    normalization: Normalization,
) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let kernel = DeconvolutionKernel::new(data.gamma(), h)?;
    let reach = points
        .iter()
        .map(|(q, p)| q.hypot(*p))
        .fold(0.0f64, f64::max);
    let z_max = data.z.iter().fold(0.0f64, |m, z| m.max(z.abs()));
    let table = KernelTable::new(kernel, reach + z_max);
    let trig: Vec<(f64, f64)> = data.phi.iter().map(|p| p.sin_cos()).collect();
    let c = estimator_prefactor(data.len(), normalization);
    Ok(points
        .par_iter()
        .map(|&(q, p)| {
            let sum: f64 = trig
                .iter()
                .zip(&data.z)
                .map(|(&(s, co), &z)| table.eval(q * co + p * s - z))
                .sum();
            c * sum
        })
        .collect())
}

/// [`direct_estimate`] over every cell center of a grid.
pub fn direct_estimate_grid(
    data: &HomodyneDataset,
    h: f64,
    spec: GridSpec,
    normalization: Normalization,
) -> Result<EstimateResult> {
    let values = direct_estimate(data, h, &spec.points(), normalization)?;
    Ok(EstimateResult {
        grid: WignerGrid::from_values(spec, values)?,
        h,
        gamma: data.gamma(),
        n: data.len(),
        method: EstimateMethod::Direct,
        cutoff_flag: false,
        dropped_fraction: 0.0,
    })
}

/// Sinogram layout for the binned path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Binning {
    pub n_angle_bins: usize,
    pub n_radial: usize,
    /// Radial half-width; `None` uses √2·grid half-width + 1.
    #[serde(default)]
    pub radial_half_width: Option<f64>,
}

impl Default for Binning {
    fn default() -> Self {
        Self {
            n_angle_bins: 256,
            n_radial: 1024,
            radial_half_width: None,
        }
    }
}

impl Binning {
    pub fn radial_half_width_for(&self, spec: GridSpec) -> f64 {
        self.radial_half_width
            .unwrap_or(std::f64::consts::SQRT_2 * spec.half_width + 1.0)
    }
}

/// Empirical sinogram of a dataset.
#[derive(Debug, Clone)]
pub struct BinnedData {
    pub sinogram: Sinogram,
    pub n: usize,
    pub gamma: f64,
    pub dropped_fraction: f64,
}

/// Deposits every sample bilinearly onto the (angle, radius) lattice.
///
/// Angle nodes are the midpoints π(a + ½)/N; a sample beyond the first or
/// last node is paired with the opposite end through (φ, x) ≡ (φ ± π, −x).
/// Each sample carries total mass N/(nΔx) (divided by π for the verbatim
/// prefactor), so that back-projecting the filtered sinogram reproduces the
/// direct sum up to the binning error.
pub fn bin_dataset(
    data: &HomodyneDataset,
    n_angle_bins: usize,
    n_radial: usize,
    radial_half_width: f64,
    normalization: Normalization,
) -> Result<BinnedData> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut sino = Sinogram::zeros(n_angle_bins, n_radial, radial_half_width)?;
    let dx = sino.dx();
    let n = data.len();
    let mass = 2.0 * n_angle_bins as f64 * estimator_prefactor(n, normalization) / dx;
    let na = n_angle_bins as f64;
    let mut dropped = 0usize;
    for (&z, &phi) in data.z.iter().zip(&data.phi) {
        let fr = (z + radial_half_width) / dx - 0.5;
        let fr_flip = (-z + radial_half_width) / dx - 0.5;
        if fr < -0.5 || fr > n_radial as f64 - 0.5 {
            dropped += 1;
            continue;
        }
        let fa = phi / PI * na - 0.5;
        let lo = fa.floor();
        let ta = fa - lo;
        let lo = lo as i64;
        for (a, wa) in [(lo, 1.0 - ta), (lo + 1, ta)] {
            if wa == 0.0 {
                continue;
            }
            let (row, f) = if a < 0 {
                (n_angle_bins - 1, fr_flip)
            } else if a as usize >= n_angle_bins {
                (0, fr_flip)
            } else {
                (a as usize, fr)
            };
            deposit(sino.row_mut(row), f, wa * mass);
        }
    }
    Ok(BinnedData {
        sinogram: sino,
        n,
        gamma: data.gamma(),
        dropped_fraction: dropped as f64 / n as f64,
    })
}

/// Linear split of weight w between the two radial cells around fractional index f.
fn deposit(row: &mut [f64], f: f64, w: f64) {
    let lo = f.floor();
    let t = f - lo;
    let lo = lo as i64;
    let len = row.len() as i64;
    if (0..len).contains(&lo) {
        row[lo as usize] += w * (1.0 - t);
    }
    if (0..len).contains(&(lo + 1)) {
        row[(lo + 1) as usize] += w * t;
    }
}

/// Filters and back-projects already binned data at bandwidth h.
pub fn estimate_from_bins(binned: &BinnedData, h: f64, spec: GridSpec) -> Result<EstimateResult> {
    let kernel = DeconvolutionKernel::new(binned.gamma, h)?;
    let filtered = filter_sinogram(&binned.sinogram, &kernel);
    Ok(EstimateResult {
        grid: backproject(&filtered.sinogram, spec),
        h,
        gamma: binned.gamma,
        n: binned.n,
        method: EstimateMethod::BinnedFbp,
        cutoff_flag: filtered.cutoff_unresolvable,
        dropped_fraction: binned.dropped_fraction,
    })
}

/// Binned filtered-back-projection estimate on a grid.
pub fn grid_estimate(
    data: &HomodyneDataset,
    h: f64,
    spec: GridSpec,
    binning: Binning,
    normalization: Normalization,
) -> Result<EstimateResult> {
    Ok(grid_estimates(data, &[h], spec, binning, normalization)?.remove(0))
}

/// Estimates at several bandwidths sharing one binning pass.
pub fn grid_estimates(
    data: &HomodyneDataset,
    bandwidths: &[f64],
    spec: GridSpec,
    binning: Binning,
    normalization: Normalization,
) -> Result<Vec<EstimateResult>> {
    for &h in bandwidths {
        DeconvolutionKernel::new(data.gamma(), h)?;
    }
    let binned = bin_dataset(
        data,
        binning.n_angle_bins,
        binning.n_radial,
        binning.radial_half_width_for(spec),
        normalization,
    )?;
    bandwidths
        .iter()
        .map(|&h| estimate_from_bins(&binned, h, spec))
        .collect()
}

/// Bandwidth balancing bias e^{−2β h^{−r}} against variance e^{2γ h^{−2}}/n:
/// γ/h² + β/h^r = (log n)/2.
pub fn oracle_bandwidth(beta: f64, r: f64, gamma: f64, n: usize) -> Result<f64> {
    if !(beta > 0.0) {
        return Err(Error::domain("beta", beta, "> 0"));
    }
    if !(r > 0.0 && r <= 2.0) {
        return Err(Error::domain("r", r, "in (0, 2]"));
    }
    if !(0.0..0.25).contains(&gamma) {
        return Err(Error::domain("gamma", gamma, "in [0, 1/4)"));
    }
    if n < 2 {
        return Err(Error::domain("n", n as f64, ">= 2"));
    }
    let half_log = (n as f64).ln() / 2.0;
    let infeasible = || {
        Error::Infeasible(format!(
            "no bandwidth in (0, 1) for beta = {beta}, r = {r}, gamma = {gamma}, n = {n}"
        ))
    };
    if r == 2.0 {
        let h = ((beta + gamma) / half_log).sqrt();
        return if h < 1.0 { Ok(h) } else { Err(infeasible()) };
    }
    let f = |h: f64| gamma / (h * h) + beta / h.powf(r) - half_log;
    if f(1.0) >= 0.0 {
        return Err(infeasible());
    }
    // f decreases on (0, 1)
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(if f(lo).abs() < f(hi).abs() { lo } else { hi })
}

pub fn sup_error(a: &WignerGrid, b: &WignerGrid) -> Result<f64> {
    a.check_same_spec(b)?;
    Ok(a.values()
        .iter()
        .zip(b.values())
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs())))
}

pub fn l2_error(a: &WignerGrid, b: &WignerGrid) -> Result<f64> {
    a.check_same_spec(b)?;
    let ss: f64 = a
        .values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y).powi(2))
        .sum();
    Ok((ss * a.spec().cell_area()).sqrt())
}

/// sup|a − b| / sup|b|.
pub fn relative_sup(a: &WignerGrid, b: &WignerGrid) -> Result<f64> {
    let scale = b.max_abs();
    if scale == 0.0 {
        return Err(Error::domain("sup|b|", 0.0, "> 0"));
    }
    Ok(sup_error(a, b)? / scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::NoiseModel;
    use crate::states::StateSpec;

    fn one_sample(eta: f64) -> HomodyneDataset {
        HomodyneDataset::new(
            vec![0.0],
            vec![0.0],
            NoiseModel::new(eta).unwrap(),
            0,
            StateSpec::vacuum(),
        )
        .unwrap()
    }

    #[test]
    fn single_sample_values() {
        let h = 0.4;
        let data = one_sample(0.9);
        let g = data.gamma();
        let v = direct_estimate(&data, h, &[(0.0, 0.0)], Normalization::Verbatim).unwrap()[0];
        let expected = (g / (h * h)).exp_m1() / (4.0 * PI * PI * g);
        assert!((v / expected - 1.0).abs() < 1e-12);
        let u = direct_estimate(&data, h, &[(0.0, 0.0)], Normalization::UnitMass).unwrap()[0];
        assert!((u / (PI * expected) - 1.0).abs() < 1e-12);

        let data = one_sample(1.0);
        let v = direct_estimate(&data, h, &[(0.0, 0.0)], Normalization::Verbatim).unwrap()[0];
        assert!((v / (1.0 / (4.0 * PI * PI * h * h)) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_dataset_rejected() {
        let data =
            HomodyneDataset::new(vec![], vec![], NoiseModel::ideal(), 0, StateSpec::vacuum())
                .unwrap();
        assert!(matches!(
            direct_estimate(&data, 0.5, &[(0.0, 0.0)], Normalization::UnitMass),
            Err(Error::EmptyDataset)
        ));
    }

    #[test]
    fn kernel_table_accuracy() {
        for &(g, h) in &[(0.0, 0.5), (1.0 / 36.0, 0.3), (1.0 / 36.0, 0.08)] {
            let k = DeconvolutionKernel::new(g, h).unwrap();
            let table = KernelTable::new(k, 12.0);
            let peak = k.peak();
            for i in 0..2000 {
                let s = -12.0 + 24.0 * (i as f64 + 0.37) / 2000.0;
                assert!(
                    (table.eval(s) - k.real(s)).abs() <= 1e-8 * peak,
                    "g={g} h={h} s={s}"
                );
            }
        }
    }

    #[test]
    fn oracle_bandwidth_examples() {
        let h = oracle_bandwidth(0.5, 2.0, 1.0 / 36.0, 100_000).unwrap();
        // √(2 · 0.527777… / ln 1e5) = 0.3027943…
        assert!((h - 0.302_794_304_147).abs() < 1e-11);
        let h0 = oracle_bandwidth(0.5, 2.0, 0.0, 100_000).unwrap();
        assert!((h0 - (1.0 / 100_000f64.ln()).sqrt()).abs() < 1e-15);
        let g = 1.0 / 36.0;
        let h1 = oracle_bandwidth(1.0, 1.0, g, 100_000).unwrap();
        assert!((g / (h1 * h1) + 1.0 / h1 - 100_000f64.ln() / 2.0).abs() < 1e-12);
        assert!(matches!(
            oracle_bandwidth(3.0, 1.0, g, 10),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn error_metrics() {
        let spec = GridSpec::new(3.0, 31).unwrap();
        let vac = crate::states::analytic_state(&StateSpec::vacuum(), spec).unwrap();
        let zero = WignerGrid::zeros(spec);
        assert_eq!(sup_error(&vac, &vac).unwrap(), 0.0);
        assert!((sup_error(&zero, &vac).unwrap() - 1.0 / PI).abs() < 1e-15);
        assert_eq!(relative_sup(&zero, &vac).unwrap(), 1.0);
        let other = WignerGrid::zeros(GridSpec::new(3.0, 30).unwrap());
        assert!(sup_error(&zero, &other).is_err());
        // ∬ W² = 1/(2π) for the vacuum
        let l2 = l2_error(&zero, &vac).unwrap();
        assert!((l2 - (1.0 / (2.0 * PI)).sqrt()).abs() < 1e-6);
    }
}
