use std::f64::consts::PI;

use qht::estimate::{grid_estimate, oracle_bandwidth, relative_sup, sup_error, Binning};
use qht::grid::GridSpec;
use qht::simulate::{conditional_density, sample_homodyne};
use qht::states::{
    analytic_state, reconstruct_matrix, wigner_from_matrix, DensityMatrix, DensityTable,
    Normalization, StateSpec,
};
use qht::tomography::{backproject, filter_sinogram, radon, DeconvolutionKernel};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

const ANGLE_BINS: usize = 8;
const PHI_NODES: usize = 48;

/// Expected bin probabilities of Z given Φ in [phi_lo, phi_hi): the
/// quadrature density convolved with N(0, 2γ), averaged over the angle bin.
fn expected_probabilities(
    state: &StateSpec,
    gamma: f64,
    phi_lo: f64,
    phi_hi: f64,
    edges: &[f64],
) -> Vec<f64> {
    let step = 0.004;
    let xs: Vec<f64> = (0..=5000).map(|i| -10.0 + step * i as f64).collect();
    let sigma = (2.0 * gamma).sqrt();
    let normal = (sigma > 0.0).then(|| Normal::new(0.0, sigma).unwrap());
    let mut probs = vec![0.0; edges.len() - 1];
    for k in 0..PHI_NODES {
        let phi = phi_lo + (phi_hi - phi_lo) * (k as f64 + 0.5) / PHI_NODES as f64;
        let p = conditional_density(state, phi, &xs).unwrap().values;
        for (b, prob) in probs.iter_mut().enumerate() {
            let (lo, hi) = (edges[b], edges[b + 1]);
            let mass: f64 = xs
                .iter()
                .zip(&p)
                .map(|(&x, &px)| {
                    let inside = match &normal {
                        Some(nd) => nd.cdf(hi - x) - nd.cdf(lo - x),
                        None if x >= lo && x < hi => 1.0,
                        None => 0.0,
                    };
                    px * inside * step
                })
                .sum();
            *prob += mass / PHI_NODES as f64;
        }
    }
    probs
}

/// χ² p-values of the Z histogram in each of eight angle bins.
fn chi_square_p_values(state: &StateSpec, eta: f64, seed: u64) -> Vec<f64> {
    let n = 100_000;
    let data = sample_homodyne(state, n, eta, seed).unwrap();
    let mut edges = vec![f64::NEG_INFINITY];
    edges.extend((0..=40).map(|i| -6.0 + 0.3 * i as f64));
    edges.push(f64::INFINITY);
    let width = PI / ANGLE_BINS as f64;
    let mut p_values = Vec::new();
    for a in 0..ANGLE_BINS {
        let (lo, hi) = (a as f64 * width, (a + 1) as f64 * width);
        let zs: Vec<f64> = data
            .z
            .iter()
            .zip(&data.phi)
            .filter(|(_, &p)| p >= lo && p < hi)
            .map(|(z, _)| *z)
            .collect();
        let probs = expected_probabilities(state, data.gamma(), lo, hi, &edges);
        let total: f64 = probs.iter().sum();
        let mut observed = vec![0.0; probs.len()];
        for z in &zs {
            let b = edges.partition_point(|e| e <= z) - 1;
            observed[b] += 1.0;
        }
        // Merge sparse bins so every expected count is at least 5.
        let m = zs.len() as f64;
        let (mut stat, mut dof, mut acc_o, mut acc_e) = (0.0, 0usize, 0.0, 0.0);
        for (o, p) in observed.iter().zip(&probs) {
            acc_o += o;
            acc_e += m * p / total;
            if acc_e >= 5.0 {
                stat += (acc_o - acc_e).powi(2) / acc_e;
                dof += 1;
                acc_o = 0.0;
                acc_e = 0.0;
            }
        }
        if acc_e > 0.0 {
            stat += (acc_o - acc_e).powi(2) / acc_e;
            dof += 1;
        }
        let chi = ChiSquared::new((dof - 1) as f64).unwrap();
        p_values.push(1.0 - chi.cdf(stat));
    }
    p_values
}

#[test]
fn sampled_quadratures_fit_their_densities() {
    let states = [
        StateSpec::vacuum(),
        StateSpec::single_photon(),
        StateSpec::cat(3.0).unwrap(),
    ];
    for (i, state) in states.iter().enumerate() {
        for (j, eta) in [1.0, 0.9].into_iter().enumerate() {
            let p = chi_square_p_values(state, eta, 40 + 2 * i as u64 + j as u64);
            let worst = p.iter().cloned().fold(1.0, f64::min);
            assert!(worst >= 1e-3, "{} eta {eta}: p-values {p:?}", state.label());
        }
    }
}

#[test]
fn vacuum_estimate_is_close_at_moderate_bandwidth() {
    let spec = GridSpec::new(6.0, 128).unwrap();
    let truth = analytic_state(&StateSpec::vacuum(), spec).unwrap();
    for seed in 0..5 {
        let data = sample_homodyne(&StateSpec::vacuum(), 100_000, 1.0, 60 + seed).unwrap();
        let est = grid_estimate(
            &data,
            0.25,
            spec,
            Binning::default(),
            Normalization::UnitMass,
        )
        .unwrap();
        let err = sup_error(&est.grid, &truth).unwrap();
        assert!(err <= 0.1 / PI, "seed {seed}: {err}");
    }
}

#[test]
fn bias_shrinks_with_bandwidth_without_noise() {
    let spec = GridSpec::new(6.0, 128).unwrap();
    let truth = analytic_state(&StateSpec::vacuum(), spec).unwrap();
    let mut better = 0;
    for seed in 0..5 {
        let data = sample_homodyne(&StateSpec::vacuum(), 100_000, 1.0, 70 + seed).unwrap();
        let coarse = grid_estimate(
            &data,
            0.5,
            spec,
            Binning::default(),
            Normalization::UnitMass,
        )
        .unwrap();
        let fine = grid_estimate(
            &data,
            0.25,
            spec,
            Binning::default(),
            Normalization::UnitMass,
        )
        .unwrap();
        if sup_error(&coarse.grid, &truth).unwrap() > sup_error(&fine.grid, &truth).unwrap() {
            better += 1;
        }
    }
    assert!(better >= 3, "finer bandwidth better in {better} of 5 seeds");
}

#[test]
fn error_at_oracle_bandwidth_falls_with_sample_size() {
    let state = StateSpec::single_photon();
    let spec = GridSpec::new(6.0, 128).unwrap();
    let truth = analytic_state(&state, spec).unwrap();
    let gamma = 1.0 / 36.0;
    let median_error = |n: usize| {
        let h = oracle_bandwidth(0.5, 2.0, gamma, n).unwrap();
        let mut errs: Vec<f64> = (0..5)
            .map(|seed| {
                let data = sample_homodyne(&state, n, 0.9, 80 + seed).unwrap();
                let est =
                    grid_estimate(&data, h, spec, Binning::default(), Normalization::UnitMass)
                        .unwrap();
                relative_sup(&est.grid, &truth).unwrap()
            })
            .collect();
        errs.sort_by(f64::total_cmp);
        errs[2]
    };
    let (small, large) = (median_error(1_000), median_error(100_000));
    assert!(large < small, "n = 1e3: {small}, n = 1e5: {large}");
}

/// Radon, ideal filter and back-projection reproduce a smooth grid.
fn fbp_round_trip(state: &StateSpec) -> f64 {
    let spec = GridSpec::new(6.0, 128).unwrap();
    let truth = analytic_state(state, spec).unwrap();
    let sino = radon(&truth, 256, 1024, 6.0 * std::f64::consts::SQRT_2 + 1.0).unwrap();
    let kernel = DeconvolutionKernel::new(0.0, 1.0 / 64.0).unwrap();
    let filtered = filter_sinogram(&sino, &kernel);
    assert!(!filtered.cutoff_unresolvable);
    sup_error(&backproject(&filtered.sinogram, spec), &truth).unwrap()
}

#[test]
fn noiseless_pipeline_is_nearly_the_identity() {
    let vacuum = fbp_round_trip(&StateSpec::vacuum());
    assert!(vacuum <= 2e-3, "vacuum: {vacuum}");
    let photon = fbp_round_trip(&StateSpec::single_photon());
    assert!(photon <= 5e-3, "single photon: {photon}");
}

#[test]
fn pattern_reconstruction_round_trips() {
    let spec = GridSpec::new(5.0, 64).unwrap();
    for rho in [DensityMatrix::vacuum(), DensityMatrix::fock(1)] {
        let table = DensityTable::from_matrix(&rho, 10.0, 0.01, 180).unwrap();
        let back = reconstruct_matrix(&table, 6).unwrap();
        let err = sup_error(
            &wigner_from_matrix(&back, spec).unwrap(),
            &wigner_from_matrix(&rho, spec).unwrap(),
        )
        .unwrap();
        assert!(err <= 1e-2, "dim {}: {err}", rho.dim());
    }
}
