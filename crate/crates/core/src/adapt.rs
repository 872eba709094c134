//! Lepski-type bandwidth selection over a finite decreasing grid.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::sup_error;
use crate::grid::WignerGrid;

/// r_n(x) = max(√((1 + x)/n), (1 + x)/n).
pub fn deviation_bound(x: f64, n: usize) -> f64 {
    let v = (1.0 + x) / n as f64;
    v.sqrt().max(v)
}

/// h_m = ½(1 − (m − 1)√(2γ/log n)) for m = 1..M with M = ⌊√(log n/(2γ))⌋.
pub fn default_grid(n: usize, gamma: f64) -> Result<Vec<f64>> {
    if n < 8 {
        return Err(Error::domain("n", n as f64, ">= 8"));
    }
    if !(gamma > 0.0 && gamma < 0.25) {
        return Err(Error::domain(
            "gamma",
            gamma,
            "in (0, 1/4); use geometric_grid for gamma = 0",
        ));
    }
    let log_n = (n as f64).ln();
    let m_count = (log_n / (2.0 * gamma)).sqrt().floor() as usize;
    if m_count < 2 {
        return Err(Error::GridTooCoarse { m: m_count });
    }
    let step = (2.0 * gamma / log_n).sqrt();
    Ok((0..m_count)
        .map(|m| 0.5 * (1.0 - m as f64 * step))
        .collect())
}

/// h_m = 2^{−m} for m = 1..M with M = ⌊log₂ n⌋/2, used when γ = 0.
pub fn geometric_grid(n: usize) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::domain("n", n as f64, ">= 2"));
    }
    let m_count = (n.ilog2() / 2) as usize;
    if m_count < 2 {
        return Err(Error::GridTooCoarse { m: m_count });
    }
    Ok((1..=m_count).map(|m| 0.5f64.powi(m as i32)).collect())
}

/// [`default_grid`] for γ > 0, [`geometric_grid`] for γ = 0.
pub fn grid_for(n: usize, gamma: f64) -> Result<Vec<f64>> {
    if gamma == 0.0 {
        geometric_grid(n)
    } else {
        default_grid(n, gamma)
    }
}

/// Confidence level x of the deviation bound; serialized as `"logM"` or a number.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawLevel", into = "RawLevel")]
pub enum LepskiLevel {
    /// x = log M
    #[default]
    LogM,
    Value(f64),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RawLevel {
    Keyword(String),
    Value(f64),
}

impl TryFrom<RawLevel> for LepskiLevel {
    type Error = String;
    fn try_from(raw: RawLevel) -> std::result::Result<Self, String> {
        match raw {
            RawLevel::Keyword(k) if k == "logM" => Ok(Self::LogM),
            RawLevel::Keyword(k) => Err(format!("expected \"logM\" or a number, found {k:?}")),
            RawLevel::Value(x) => Ok(Self::Value(x)),
        }
    }
}

impl From<LepskiLevel> for RawLevel {
    fn from(level: LepskiLevel) -> Self {
        match level {
            LepskiLevel::LogM => RawLevel::Keyword("logM".into()),
            LepskiLevel::Value(x) => RawLevel::Value(x),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LepskiConfig {
    pub kappa: f64,
    pub x: LepskiLevel,
    pub bandwidths: Vec<f64>,
}

impl LepskiConfig {
    /// κ = 1 and x = log M.
    pub fn new(bandwidths: Vec<f64>) -> Result<Self> {
        let cfg = Self {
            kappa: 1.0,
            x: LepskiLevel::LogM,
            bandwidths,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_kappa(mut self, kappa: f64) -> Self {
        self.kappa = kappa;
        self
    }

    pub fn with_x(mut self, x: f64) -> Self {
        self.x = LepskiLevel::Value(x);
        self
    }

    pub fn m(&self) -> usize {
        self.bandwidths.len()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return Err(Error::config(
                "lepski.kappa",
                format!("{} must be positive", self.kappa),
            ));
        }
        if let LepskiLevel::Value(x) = self.x {
            if !(x > 0.0 && x.is_finite()) {
                return Err(Error::config("lepski.x", format!("{x} must be positive")));
            }
        }
        if self.bandwidths.is_empty() {
            return Err(Error::config(
                "bandwidths",
                "at least one bandwidth required",
            ));
        }
        if let Some(h) = self.bandwidths.iter().find(|h| !(**h > 0.0 && **h < 1.0)) {
            return Err(Error::domain("h", *h, "in (0, 1)"));
        }
        if self.bandwidths.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::UnsortedBandwidths);
        }
        Ok(())
    }

    pub fn x_value(&self) -> f64 {
        match self.x {
            LepskiLevel::LogM => (self.m() as f64).ln(),
            LepskiLevel::Value(x) => x,
        }
    }

    /// r_n(x + log M).
    pub fn deviation(&self, n: usize) -> f64 {
        deviation_bound(self.x_value() + (self.m() as f64).ln(), n)
    }

    /// Penalty 2κ e^{γ h_m^{−2}} r_n(x + log M), m counted from zero.
    pub fn threshold(&self, gamma: f64, n: usize, m: usize) -> f64 {
        let h = self.bandwidths[m];
        2.0 * self.kappa * (gamma / (h * h)).exp() * self.deviation(n)
    }
}

/// Per-candidate quantities of the selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LepskiRow {
    /// One-based index.
    pub m: usize,
    pub h: f64,
    pub functional: f64,
    /// max_{j>m} sup|Ŵ_m − Ŵ_j|, zero for the last candidate.
    pub sup_diff_max: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    /// One-based index of the selected bandwidth.
    pub m_hat: usize,
    pub h: f64,
    pub rows: Vec<LepskiRow>,
}

impl Selection {
    pub fn functional(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.functional).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("m,h_m,L(m),sup_diff_max_j,threshold\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{:?},{:?},{:?},{:?}\n",
                r.m, r.h, r.functional, r.sup_diff_max, r.threshold
            ));
        }
        out
    }
}

/// Pairwise sup-norm differences D[m][j] for m < j.
pub fn pairwise_sup(estimates: &[WignerGrid]) -> Result<Vec<Vec<f64>>> {
    let m = estimates.len();
    for e in estimates.iter().skip(1) {
        estimates[0].check_same_spec(e)?;
    }
    (0..m)
        .into_par_iter()
        .map(|a| {
            (0..m)
                .map(|b| {
                    if b > a {
                        sup_error(&estimates[a], &estimates[b])
                    } else {
                        Ok(0.0)
                    }
                })
                .collect()
        })
        .collect()
}

fn check_inputs(estimates: &[WignerGrid], cfg: &LepskiConfig) -> Result<()> {
    cfg.validate()?;
    if estimates.len() != cfg.m() {
        return Err(Error::Shape(format!(
            "{} estimates for {} bandwidths",
            estimates.len(),
            cfg.m()
        )));
    }
    Ok(())
}

fn functional_from(
    diffs: &[Vec<f64>],
    gamma: f64,
    n: usize,
    cfg: &LepskiConfig,
    m: usize,
) -> LepskiRow {
    let mut best = f64::NEG_INFINITY;
    let mut sup_diff_max = 0.0f64;
    for (j, d) in diffs[m].iter().enumerate().skip(m + 1) {
        best = best.max(d - cfg.threshold(gamma, n, j));
        sup_diff_max = sup_diff_max.max(*d);
    }
    // empty max is zero
    let bias_term = if m + 1 == cfg.m() { 0.0 } else { best };
    let threshold = cfg.threshold(gamma, n, m);
    LepskiRow {
        m: m + 1,
        h: cfg.bandwidths[m],
        functional: bias_term + threshold,
        sup_diff_max,
        threshold,
    }
}

/// L_κ(m) = max_{j>m}{sup|Ŵ_m − Ŵ_j| − 2κ e^{γh_j^{−2}} r} + 2κ e^{γh_m^{−2}} r,
/// with r = r_n(x + log M) and m one-based.
pub fn lepski_functional(
    estimates: &[WignerGrid],
    gamma: f64,
    n: usize,
    cfg: &LepskiConfig,
    m: usize,
) -> Result<f64> {
    check_inputs(estimates, cfg)?;
    if m == 0 || m > cfg.m() {
        return Err(Error::domain("m", m as f64, "in 1..=M"));
    }
    let diffs = pairwise_sup(estimates)?;
    Ok(functional_from(&diffs, gamma, n, cfg, m - 1).functional)
}

/// m̂ = argmin_m L_κ(m), ties to the smallest m.
pub fn select(
    estimates: &[WignerGrid],
    gamma: f64,
    n: usize,
    cfg: &LepskiConfig,
) -> Result<Selection> {
    check_inputs(estimates, cfg)?;
    let diffs = pairwise_sup(estimates)?;
    let rows: Vec<LepskiRow> = (0..cfg.m())
        .map(|m| functional_from(&diffs, gamma, n, cfg, m))
        .collect();
    let mut best = 0;
    for (i, r) in rows.iter().enumerate() {
        if r.functional < rows[best].functional {
            best = i;
        }
    }
    Ok(Selection {
        m_hat: best + 1,
        h: cfg.bandwidths[best],
        rows,
    })
}
