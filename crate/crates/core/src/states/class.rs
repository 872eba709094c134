//! Membership checks for the coefficient-decay class R(C, B, r) and the
//! Fourier-smoothness class A(β, r, L).

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;

use super::DensityMatrix;
use crate::grid::WignerGrid;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassCheck {
    pub member: bool,
    /// Worst-case slack: bound minus value, negative when violated.
    pub margin: f64,
}

/// |ρ_mn| ≤ C exp(−B (m+n)^{r/2}) entrywise.
pub fn matrix_class_check(rho: &DensityMatrix, c: f64, b: f64, r: f64) -> ClassCheck {
    let n = rho.dim();
    let mut margin = f64::INFINITY;
    for m in 0..n {
        for k in 0..n {
            let bound = c * (-b * ((m + k) as f64).powf(r / 2.0)).exp();
            margin = margin.min(bound - rho.get(m, k).norm());
        }
    }
    ClassCheck {
        member: margin >= 0.0,
        margin,
    }
}

/// ∬ |f̃(u,v)|² e^{2β‖(u,v)‖^r} du dv by a 2-D discrete Fourier transform of the grid.
pub fn smoothness_integral(grid: &WignerGrid, beta: f64, r: f64) -> f64 {
    let n = grid.spec().n_points;
    let step = grid.spec().step();
    let mut data: Vec<Complex64> = grid
        .values()
        .iter()
        .map(|&v| Complex64::new(v, 0.0))
        .collect();
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(n);
    for row in data.chunks_mut(n) {
        fft.process(row);
    }
    let mut column = vec![Complex64::new(0.0, 0.0); n];
    for c in 0..n {
        for (i, v) in column.iter_mut().enumerate() {
            *v = data[i * n + c];
        }
        fft.process(&mut column);
        for (i, v) in column.iter().enumerate() {
            data[i * n + c] = *v;
        }
    }
    let dk = 2.0 * PI / (n as f64 * step);
    let freq = |i: usize| {
        let s = if i < n.div_ceil(2) {
            i as f64
        } else {
            i as f64 - n as f64
        };
        s * dk
    };
    let cell = step * step;
    let mut total = 0.0;
    for i in 0..n {
        for c in 0..n {
            let norm = freq(i).hypot(freq(c));
            let amp = data[i * n + c].norm_sqr() * cell * cell;
            if amp == 0.0 {
                continue;
            }
            total += amp * (2.0 * beta * norm.powf(r)).exp();
        }
    }
    total * dk * dk
}

/// ∬ |f̃|² e^{2β‖·‖^r} ≤ (2π)² L.
pub fn smoothness_class_check(grid: &WignerGrid, beta: f64, r: f64, l: f64) -> ClassCheck {
    let bound = (2.0 * PI).powi(2) * l;
    let margin = bound - smoothness_integral(grid, beta, r);
    ClassCheck {
        member: margin >= 0.0,
        margin,
    }
}
