//! Radon transform, the deconvolution kernel K_h^γ, radial filtering and
//! back-projection.
//!
//! Angles are sampled at midpoints φ_a = π(a + ½)/n_angles and radial
//! samples at cell centers x_i = −R + (i + ½)Δx with Δx = 2R/n_radial.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::grid::{GridSpec, WignerGrid};
use crate::special::GaussLegendre;

/// Radon-domain samples indexed by (angle, radial position).
#[derive(Debug, Clone, PartialEq)]
pub struct Sinogram {
    n_angles: usize,
    n_radial: usize,
    radial_half_width: f64,
    /// values[a * n_radial + i]
    values: Vec<f64>,
}

impl Sinogram {
    pub fn zeros(n_angles: usize, n_radial: usize, radial_half_width: f64) -> Result<Self> {
        Self::from_values(
            n_angles,
            n_radial,
            radial_half_width,
            vec![0.0; n_angles * n_radial],
        )
    }

    pub fn from_values(
        n_angles: usize,
        n_radial: usize,
        radial_half_width: f64,
        values: Vec<f64>,
    ) -> Result<Self> {
        if n_angles == 0 || n_radial < 2 || n_radial % 2 != 0 {
            return Err(Error::Shape(format!(
                "sinogram needs n_angles >= 1 and an even n_radial >= 2, got {n_angles} x {n_radial}"
            )));
        }
        if !(radial_half_width > 0.0 && radial_half_width.is_finite()) {
            return Err(Error::domain("radial_half_width", radial_half_width, "> 0"));
        }
        if values.len() != n_angles * n_radial {
            return Err(Error::Shape(format!(
                "{} values for a {n_angles} x {n_radial} sinogram",
                values.len()
            )));
        }
        Ok(Self {
            n_angles,
            n_radial,
            radial_half_width,
            values,
        })
    }

    pub fn n_angles(&self) -> usize {
        self.n_angles
    }

    pub fn n_radial(&self) -> usize {
        self.n_radial
    }

    pub fn radial_half_width(&self) -> f64 {
        self.radial_half_width
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.radial_half_width / self.n_radial as f64
    }

    pub fn angle(&self, a: usize) -> f64 {
        PI * (a as f64 + 0.5) / self.n_angles as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        -self.radial_half_width + (i as f64 + 0.5) * self.dx()
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.n_radial).map(|i| self.x(i)).collect()
    }

    pub fn row(&self, a: usize) -> &[f64] {
        &self.values[a * self.n_radial..(a + 1) * self.n_radial]
    }

    pub fn row_mut(&mut self, a: usize) -> &mut [f64] {
        &mut self.values[a * self.n_radial..(a + 1) * self.n_radial]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Trapezoid mass of one angle row.
    pub fn row_mass(&self, a: usize) -> f64 {
        self.row(a).iter().sum::<f64>() * self.dx()
    }

    fn same_layout(&self, values: Vec<f64>) -> Self {
        Self {
            n_angles: self.n_angles,
            n_radial: self.n_radial,
            radial_half_width: self.radial_half_width,
            values,
        }
    }
}

/// Line integrals ∫ W(x cos φ + t sin φ, x sin φ − t cos φ) dt with cubic
/// convolution interpolation; W is zero outside its grid.
pub fn radon(
    w: &WignerGrid,
    n_angles: usize,
    n_radial: usize,
    radial_half_width: f64,
) -> Result<Sinogram> {
    if radial_half_width < w.spec().half_width {
        return Err(Error::domain(
            "radial_half_width",
            radial_half_width,
            ">= the grid half width",
        ));
    }
    let mut sino = Sinogram::zeros(n_angles, n_radial, radial_half_width)?;
    let cell = w.spec().step().max(f64::MIN_POSITIVE);
    let dt = 0.5 * cell;
    let reach = std::f64::consts::SQRT_2 * w.spec().half_width + 2.0 * cell;
    let n_t = (reach / dt).ceil() as i64;
    let xs = sino.xs();
    let angles: Vec<f64> = (0..n_angles).map(|a| sino.angle(a)).collect();
    sino.values
        .par_chunks_mut(n_radial)
        .enumerate()
        .for_each(|(a, row)| {
            let (s, c) = angles[a].sin_cos();
            for (v, &x) in row.iter_mut().zip(&xs) {
                let mut acc = 0.0;
                for m in -n_t..=n_t {
                    let t = m as f64 * dt;
                    acc += cubic_sample(w, x * c + t * s, x * s - t * c);
                }
                *v = acc * dt;
            }
        });
    Ok(sino)
}

/// Keys cubic convolution weights (a = −1/2) for fractional offset t.
fn keys_weights(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    [
        0.5 * (-t3 + 2.0 * t2 - t),
        0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
        0.5 * (-3.0 * t3 + 4.0 * t2 + t),
        0.5 * (t3 - t2),
    ]
}

fn cubic_sample(w: &WignerGrid, q: f64, p: f64) -> f64 {
    let spec = w.spec();
    let n = spec.n_points as isize;
    let step = spec.step();
    if step == 0.0 {
        return w.interpolate(q, p);
    }
    let fq = (q + spec.half_width) / step - 0.5;
    let fp = (p + spec.half_width) / step - 0.5;
    if fq <= -2.0 || fp <= -2.0 || fq >= (n + 1) as f64 || fp >= (n + 1) as f64 {
        return 0.0;
    }
    let (iq, ip) = (fq.floor(), fp.floor());
    let (wq, wp) = (keys_weights(fq - iq), keys_weights(fp - ip));
    let (iq, ip) = (iq as isize, ip as isize);
    let values = w.values();
    let mut acc = 0.0;
    for (j, wpj) in wp.iter().enumerate() {
        let b = ip - 1 + j as isize;
        if b < 0 || b >= n {
            continue;
        }
        let row = &values[(b * n) as usize..((b + 1) * n) as usize];
        let mut line = 0.0;
        for (i, wqi) in wq.iter().enumerate() {
            let a = iq - 1 + i as isize;
            if a >= 0 && a < n {
                line += wqi * row[a as usize];
            }
        }
        acc += wpj * line;
    }
    acc
}

/// Band-limited deconvolution kernel with Fourier profile |t| e^{γt²} 1_{|t| ≤ 1/h}.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeconvolutionKernel {
    gamma: f64,
    h: f64,
}

impl DeconvolutionKernel {
    pub fn new(gamma: f64, h: f64) -> Result<Self> {
        if !(h > 0.0 && h < 1.0) {
            return Err(Error::domain("h", h, "in (0, 1)"));
        }
        if !(0.0..0.25).contains(&gamma) {
            return Err(Error::domain("gamma", gamma, "in [0, 1/4)"));
        }
        Ok(Self { gamma, h })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Fourier support bound 1/h.
    pub fn cutoff(&self) -> f64 {
        1.0 / self.h
    }

    pub fn fourier(&self, t: f64) -> f64 {
        if t.abs() <= self.cutoff() {
            t.abs() * (self.gamma * t * t).exp()
        } else {
            0.0
        }
    }

    /// K(s) = (1/2π) ∫ K̃(t) e^{-ist} dt = (1/π) ∫₀^{1/h} t e^{γt²} cos(st) dt.
    pub fn real(&self, s: f64) -> f64 {
        let big_t = self.cutoff();
        let s = s.abs();
        if self.gamma == 0.0 {
            let x = s * big_t;
            if x < 0.1 {
                let x2 = x * x;
                let series = 0.5 - x2 / 8.0 + x2 * x2 / 144.0 - x2 * x2 * x2 / 5760.0
                    + x2 * x2 * x2 * x2 / 403_200.0;
                return big_t * big_t * series / PI;
            }
            return (big_t * (x).sin() / s + ((x).cos() - 1.0) / (s * s)) / PI;
        }
        let gamma = self.gamma;
        let panels = ((s * big_t + gamma * big_t * big_t) / 2.0).ceil() as usize + 2;
        GaussLegendre::order16().integrate(0.0, big_t, panels, |t| {
            t * (gamma * t * t).exp() * (s * t).cos()
        }) / PI
    }

    /// K(0) in closed form: (e^{γ/h²} − 1)/(2πγ), or 1/(2πh²) when γ = 0.
    pub fn peak(&self) -> f64 {
        let big_t2 = self.cutoff().powi(2);
        if self.gamma == 0.0 {
            big_t2 / (2.0 * PI)
        } else {
            (self.gamma * big_t2).exp_m1() / (2.0 * PI * self.gamma)
        }
    }
}

/// Outcome of radial filtering.
#[derive(Debug, Clone)]
pub struct FilteredSinogram {
    pub sinogram: Sinogram,
    /// Set when the cutoff 1/h exceeds the radial Nyquist frequency π/Δx.
    pub cutoff_unresolvable: bool,
}

/// Convolves every angle row with K_h^γ: Δx Σ_j K(x_i − x_j) row_j.
///
/// Implemented as a zero-padded FFT convolution whose transfer function is
/// the transform of the sampled real-space kernel, which makes it equal to
/// the direct sum up to rounding.
pub fn filter_sinogram(s: &Sinogram, kernel: &DeconvolutionKernel) -> FilteredSinogram {
    let n = s.n_radial;
    let n_pad = (2 * n).next_power_of_two();
    let dx = s.dx();
    let mut planner = FftPlanner::<f64>::new();
    let forward = planner.plan_fft_forward(n_pad);
    let inverse = planner.plan_fft_inverse(n_pad);

    let half = n_pad / 2;
    let samples: Vec<f64> = (0..n_pad)
        .into_par_iter()
        .map(|idx| {
            let m = if idx < half {
                idx as f64
            } else {
                idx as f64 - n_pad as f64
            };
            kernel.real(m * dx) * dx
        })
        .collect();
    let mut transfer: Vec<Complex64> = samples.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    forward.process(&mut transfer);
    let scale = 1.0 / n_pad as f64;
    for v in &mut transfer {
        *v *= scale;
    }

    let mut out = vec![0.0; s.values.len()];
    out.par_chunks_mut(n).enumerate().for_each(|(a, dst)| {
        let row = s.row(a);
        if row.iter().all(|&v| v == 0.0) {
            return;
        }
        let mut buf = vec![Complex64::new(0.0, 0.0); n_pad];
        for (b, &v) in buf.iter_mut().zip(row) {
            b.re = v;
        }
        forward.process(&mut buf);
        for (b, t) in buf.iter_mut().zip(&transfer) {
            *b *= t;
        }
        inverse.process(&mut buf);
        for (d, b) in dst.iter_mut().zip(&buf) {
            *d = b.re;
        }
    });
    FilteredSinogram {
        sinogram: s.same_layout(out),
        cutoff_unresolvable: kernel.cutoff() > PI / dx,
    }
}

/// O(n_radial²) direct-sum filtering; the reference for [`filter_sinogram`].
pub fn filter_sinogram_direct(s: &Sinogram, kernel: &DeconvolutionKernel) -> Sinogram {
    let n = s.n_radial;
    let dx = s.dx();
    let taps: Vec<f64> = (0..n).map(|m| kernel.real(m as f64 * dx) * dx).collect();
    let mut out = vec![0.0; s.values.len()];
    out.par_chunks_mut(n).enumerate().for_each(|(a, dst)| {
        let row = s.row(a);
        for (i, d) in dst.iter_mut().enumerate() {
            *d = row
                .iter()
                .enumerate()
                .map(|(j, v)| v * taps[i.abs_diff(j)])
                .sum();
        }
    });
    s.same_layout(out)
}

/// (1/2π)(π/n_angles) Σ_a row_a(q cos φ_a + p sin φ_a) with linear
/// interpolation along each row; rows are zero outside [−R, R].
pub fn backproject(s: &Sinogram, spec: GridSpec) -> WignerGrid {
    let n = spec.n_points;
    let coords = spec.coords();
    let step = spec.step();
    let nr = s.n_radial;
    let dx = s.dx();
    let r = s.radial_half_width;
    // Rows padded with one zero on each side so interpolation never branches
    // on the interior.
    let padded: Vec<Vec<f64>> = (0..s.n_angles)
        .map(|a| {
            let mut v = Vec::with_capacity(nr + 2);
            v.push(0.0);
            v.extend_from_slice(s.row(a));
            v.push(0.0);
            v
        })
        .collect();
    let trig: Vec<(f64, f64)> = (0..s.n_angles).map(|a| s.angle(a).sin_cos()).collect();
    let weight = 1.0 / (2.0 * s.n_angles as f64);
    let q0 = coords.first().copied().unwrap_or(0.0);

    let mut values = vec![0.0; spec.len()];
    values.par_chunks_mut(n).enumerate().for_each(|(ip, out)| {
        let p = coords[ip];
        for (a, &(sin, cos)) in trig.iter().enumerate() {
            let row = &padded[a];
            // fractional index into the padded row
            let f0 = (q0 * cos + p * sin + r) / dx + 0.5;
            let df = step * cos / dx;
            for (iq, o) in out.iter_mut().enumerate() {
                let f = f0 + iq as f64 * df;
                if f <= 0.0 || f >= (nr + 1) as f64 {
                    continue;
                }
                let i = f.floor();
                let t = f - i;
                let i = i as usize;
                *o += row[i] + t * (row[i + 1] - row[i]);
            }
        }
        for o in out.iter_mut() {
            *o *= weight;
        }
    });
    WignerGrid::from_values(spec, values).expect("grid length matches spec")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::states::{analytic_state, StateSpec};

    fn vacuum_grid(n: usize, hw: f64) -> WignerGrid {
        analytic_state(&StateSpec::vacuum(), GridSpec::new(hw, n).unwrap()).unwrap()
    }

    #[test]
    fn kernel_fourier_examples() {
        let k = DeconvolutionKernel::new(0.0, 0.25).unwrap();
        assert_eq!(k.fourier(2.0), 2.0);
        let k = DeconvolutionKernel::new(0.1, 0.25).unwrap();
        assert_eq!(k.fourier(5.0), 0.0);
        assert!((k.fourier(-3.0) - 3.0 * 0.9f64.exp()).abs() < 1e-15);
        assert!(DeconvolutionKernel::new(0.0, 1.0).is_err());
        assert!(DeconvolutionKernel::new(0.0, 0.0).is_err());
        assert!(DeconvolutionKernel::new(0.25, 0.5).is_err());
    }

    #[test]
    fn kernel_real_at_origin_matches_antiderivative() {
        for &h in &[0.9, 0.5, 0.25, 0.1] {
            let k0 = DeconvolutionKernel::new(0.0, h).unwrap();
            assert!((k0.real(0.0) / (1.0 / (2.0 * PI * h * h)) - 1.0).abs() < 1e-14);
            for &g in &[1e-3, 1.0 / 36.0, 0.1, 0.2] {
                let k = DeconvolutionKernel::new(g, h).unwrap();
                let closed = ((g / (h * h)).exp() - 1.0) / (2.0 * PI * g);
                assert!((k.real(0.0) / closed - 1.0).abs() < 1e-12, "g={g} h={h}");
                assert!((k.peak() / closed - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn kernel_real_even_and_consistent_with_quadrature() {
        let k = DeconvolutionKernel::new(0.0, 0.3).unwrap();
        let kg = DeconvolutionKernel::new(1e-14, 0.3).unwrap();
        for &s in &[0.001, 0.02, 0.5, 3.0, 17.0] {
            assert_eq!(k.real(s), k.real(-s));
            // closed form at γ = 0 vs quadrature at vanishing γ
            assert!((k.real(s) - kg.real(s)).abs() < 1e-10 * k.peak(), "s={s}");
        }
    }

    #[test]
    fn radon_of_vacuum_is_gaussian() {
        let w = vacuum_grid(256, 6.0);
        let sino = radon(&w, 16, 256, 6.0).unwrap();
        for a in 0..16 {
            for (i, v) in sino.row(a).iter().enumerate() {
                let x = sino.x(i);
                assert!((v - (-x * x).exp() / PI.sqrt()).abs() < 1e-3);
            }
            assert!((sino.row_mass(a) - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn radon_rejects_narrow_radial_range() {
        let w = vacuum_grid(16, 6.0);
        assert!(radon(&w, 4, 16, 5.0).is_err());
    }

    #[test]
    fn zero_inputs_stay_zero() {
        let s = Sinogram::zeros(8, 64, 4.0).unwrap();
        let k = DeconvolutionKernel::new(0.05, 0.5).unwrap();
        let f = filter_sinogram(&s, &k);
        assert!(f.sinogram.values().iter().all(|&v| v == 0.0));
        let g = backproject(&s, GridSpec::new(3.0, 16).unwrap());
        assert!(g.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn delta_row_gives_kernel_samples() {
        let mut s = Sinogram::zeros(1, 128, 4.0).unwrap();
        s.row_mut(0)[64] = 1.0;
        let k = DeconvolutionKernel::new(0.0, 0.25).unwrap();
        let f = filter_sinogram(&s, &k).sinogram;
        let dx = s.dx();
        let scale = k.peak() * dx;
        for i in 0..128 {
            let expected = k.real(s.x(i) - s.x(64)) * dx;
            assert!((f.row(0)[i] - expected).abs() <= 1e-6 * scale);
        }
    }

    #[test]
    fn fft_and_direct_filters_agree() {
        let mut s = Sinogram::zeros(3, 128, 5.0).unwrap();
        let xs = s.xs();
        for a in 0..3 {
            for (v, x) in s.row_mut(a).iter_mut().zip(&xs) {
                *v = (-(x - 0.3 * a as f64).powi(2)).exp() / PI.sqrt();
            }
        }
        for &(g, h) in &[(0.0, 0.5), (0.05, 0.5), (1.0 / 36.0, 0.2)] {
            let k = DeconvolutionKernel::new(g, h).unwrap();
            let fast = filter_sinogram(&s, &k);
            assert!(!fast.cutoff_unresolvable);
            let slow = filter_sinogram_direct(&s, &k);
            let scale = slow.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for (a, b) in fast.sinogram.values().iter().zip(slow.values()) {
                assert!((a - b).abs() <= 1e-6 * scale);
            }
        }
    }

    #[test]
    fn cutoff_beyond_nyquist_is_flagged() {
        let s = Sinogram::zeros(1, 16, 8.0).unwrap();
        let k = DeconvolutionKernel::new(0.0, 0.1).unwrap();
        assert!(filter_sinogram(&s, &k).cutoff_unresolvable);
    }
}
