//! Experiment orchestration: simulate, estimate over a bandwidth grid, select
//! with Lepski, score against the known truth and write artifacts.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::adapt::{grid_for, select, LepskiConfig, LepskiLevel};
use crate::error::{Error, Result};
use crate::estimate::{grid_estimates, relative_sup, Binning, EstimateResult};
use crate::grid::{GridSpec, WignerGrid};
use crate::io::{write_atomic, write_dataset, write_estimate, write_grid, write_json};
use crate::simulate::{gamma_from_eta, sample_homodyne, HomodyneDataset};
use crate::states::{analytic_state, Normalization, StateKind, StateSpec};

/// Bandwidth list of an experiment: `"default"` or explicit values.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBandwidths", into = "RawBandwidths")]
pub enum BandwidthChoice {
    #[default]
    Default,
    Explicit(Vec<f64>),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RawBandwidths {
    Keyword(String),
    Explicit(Vec<f64>),
}

impl TryFrom<RawBandwidths> for BandwidthChoice {
    type Error = String;
    fn try_from(raw: RawBandwidths) -> std::result::Result<Self, String> {
        match raw {
            RawBandwidths::Keyword(k) if k == "default" => Ok(Self::Default),
            RawBandwidths::Keyword(k) => {
                Err(format!("expected \"default\" or a list, found {k:?}"))
            }
            RawBandwidths::Explicit(v) => Ok(Self::Explicit(v)),
        }
    }
}

impl From<BandwidthChoice> for RawBandwidths {
    fn from(c: BandwidthChoice) -> Self {
        match c {
            BandwidthChoice::Default => RawBandwidths::Keyword("default".into()),
            BandwidthChoice::Explicit(v) => RawBandwidths::Explicit(v),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LepskiSettings {
    #[serde(default = "one")]
    pub kappa: f64,
    #[serde(default)]
    pub x: LepskiLevel,
}

fn one() -> f64 {
    1.0
}

impl Default for LepskiSettings {
    fn default() -> Self {
        Self {
            kappa: 1.0,
            x: LepskiLevel::LogM,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub state: StateSpec,
    pub n: usize,
    pub eta: f64,
    pub seeds: Vec<u64>,
    pub grid: GridSpec,
    #[serde(default)]
    pub bandwidths: BandwidthChoice,
    #[serde(default)]
    pub lepski: LepskiSettings,
    #[serde(default)]
    pub binning: Binning,
    pub outputs: PathBuf,
    /// Also write every simulated dataset.
    #[serde(default)]
    pub save_datasets: bool,
}

/// Grid half-width used when none is configured: 8 for cat states, 6 otherwise.
pub fn default_half_width(state: &StateSpec) -> f64 {
    match state.kind {
        StateKind::Cat { .. } => 8.0,
        _ => 6.0,
    }
}

impl ExperimentConfig {
    /// Single-photon study: η = 0.9, n = 10⁵, 256² grid of half-width 6.
    pub fn single_photon_study(seeds: usize, outputs: PathBuf) -> Self {
        Self {
            state: StateSpec::single_photon(),
            n: 100_000,
            eta: 0.9,
            seeds: (0..seeds as u64).collect(),
            grid: GridSpec {
                half_width: 6.0,
                n_points: 256,
            },
            bandwidths: BandwidthChoice::Default,
            lepski: LepskiSettings::default(),
            binning: Binning::default(),
            outputs,
            save_datasets: false,
        }
    }

    /// Cat-state study (q0 = 3): η = 0.9, 256² grid of half-width 8.
    pub fn cat_study(seeds: usize, n: usize, outputs: PathBuf) -> Self {
        Self {
            state: StateSpec::cat(3.0).expect("q0 > 0"),
            n,
            grid: GridSpec {
                half_width: 8.0,
                n_points: 256,
            },
            ..Self::single_photon_study(seeds, outputs)
        }
    }

    /// Parses a config, reporting the path of the offending field.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let field = e.path().to_string();
            Error::config(field, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads either a config file or a manifest embedding one.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            message: format!("line {} column {}: {e}", e.line(), e.column()),
        })?;
        match value.get("config") {
            Some(inner) if value.get("artifacts").is_some() => Self::from_json(&inner.to_string()),
            _ => Self::from_json(&text),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.state
            .validate()
            .map_err(|e| Error::config("state", e.to_string()))?;
        if self.n == 0 {
            return Err(Error::config("n", "must be at least 1"));
        }
        gamma_from_eta(self.eta).map_err(|e| Error::config("eta", e.to_string()))?;
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "at least one seed required"));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::config("seeds", "seeds must be distinct"));
        }
        GridSpec::new(self.grid.half_width, self.grid.n_points)
            .map_err(|e| Error::config("grid", e.to_string()))?;
        if self.binning.n_angle_bins == 0 {
            return Err(Error::config("binning.n_angle_bins", "must be positive"));
        }
        if self.binning.n_radial < 2 || self.binning.n_radial % 2 != 0 {
            return Err(Error::config(
                "binning.n_radial",
                "must be even and at least 2",
            ));
        }
        if let Some(r) = self.binning.radial_half_width {
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::config(
                    "binning.radial_half_width",
                    "must be positive",
                ));
            }
        }
        self.lepski_config()?;
        Ok(())
    }

    pub fn gamma(&self) -> Result<f64> {
        gamma_from_eta(self.eta)
    }

    pub fn resolved_bandwidths(&self) -> Result<Vec<f64>> {
        match &self.bandwidths {
            BandwidthChoice::Default => grid_for(self.n, self.gamma()?)
                .map_err(|e| Error::config("bandwidths", e.to_string())),
            BandwidthChoice::Explicit(v) => Ok(v.clone()),
        }
    }

    pub fn lepski_config(&self) -> Result<LepskiConfig> {
        let cfg = LepskiConfig {
            kappa: self.lepski.kappa,
            x: self.lepski.x,
            bandwidths: self.resolved_bandwidths()?,
        };
        cfg.validate().map_err(|e| match e {
            Error::Config { .. } => e,
            other => Error::config("bandwidths", other.to_string()),
        })?;
        Ok(cfg)
    }

    /// SHA-256 of the compact JSON serialization.
    pub fn hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(serde_json::to_vec(self)?)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRow {
    pub seed: u64,
    /// One-based index of the Lepski choice.
    pub m_selected: usize,
    pub h_selected: f64,
    /// One-based index of the smallest error.
    pub m_oracle: usize,
    pub h_oracle: f64,
    /// Relative sup error for every bandwidth.
    pub errors: Vec<f64>,
    pub runtime_ms: f64,
}

impl SeedRow {
    pub fn selected_error(&self) -> f64 {
        self.errors[self.m_selected - 1]
    }

    pub fn oracle_error(&self) -> f64 {
        self.errors[self.m_oracle - 1]
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub gamma: f64,
    pub bandwidths: Vec<f64>,
    pub rows: Vec<SeedRow>,
    pub mean_curve: Vec<f64>,
    pub std_curve: Vec<f64>,
    pub median_curve: Vec<f64>,
    /// Selections per bandwidth index.
    pub histogram: Vec<usize>,
    /// Estimate at the selected bandwidth for the first seed.
    #[serde(skip)]
    pub first_selected: Option<WignerGrid>,
    #[serde(skip)]
    pub truth: Option<WignerGrid>,
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v < values[best] {
            best = i;
        }
    }
    best
}

impl ExperimentReport {
    /// One-based index minimizing the mean error curve.
    pub fn mean_curve_argmin(&self) -> usize {
        argmin(&self.mean_curve) + 1
    }

    /// Whether the mean error curve is minimized away from both ends.
    pub fn interior_minimum(&self) -> bool {
        let m = self.mean_curve_argmin();
        m > 1 && m < self.bandwidths.len()
    }

    /// Share of seeds whose selection lies within `window` indices of their oracle.
    pub fn selection_accuracy(&self, window: usize) -> f64 {
        let hits = self
            .rows
            .iter()
            .filter(|r| r.m_selected.abs_diff(r.m_oracle) <= window)
            .count();
        hits as f64 / self.rows.len() as f64
    }

    pub fn median_selected_error(&self) -> f64 {
        median(
            &self
                .rows
                .iter()
                .map(SeedRow::selected_error)
                .collect::<Vec<_>>(),
        )
    }

    pub fn median_oracle_error(&self) -> f64 {
        median(
            &self
                .rows
                .iter()
                .map(SeedRow::oracle_error)
                .collect::<Vec<_>>(),
        )
    }

    pub fn error_ratio(&self) -> f64 {
        self.median_selected_error() / self.median_oracle_error()
    }

    pub fn errors_csv(&self) -> String {
        let mut out = String::from("seed,m,h,relative_sup_error\n");
        for r in &self.rows {
            for (i, (h, e)) in self.bandwidths.iter().zip(&r.errors).enumerate() {
                out.push_str(&format!("{},{},{h:?},{e:?}\n", r.seed, i + 1));
            }
        }
        out
    }

    pub fn selection_csv(&self) -> String {
        let mut out = String::from(
            "seed,m_selected,h_selected,selected_error,m_oracle,h_oracle,oracle_error\n",
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{:?},{:?},{},{:?},{:?}\n",
                r.seed,
                r.m_selected,
                r.h_selected,
                r.selected_error(),
                r.m_oracle,
                r.h_oracle,
                r.oracle_error()
            ));
        }
        out
    }

    pub fn curve_csv(&self) -> String {
        let mut out = String::from("m,h,inv_h,mean,std,median\n");
        for (i, h) in self.bandwidths.iter().enumerate() {
            out.push_str(&format!(
                "{},{h:?},{:?},{:?},{:?},{:?}\n",
                i + 1,
                1.0 / h,
                self.mean_curve[i],
                self.std_curve[i],
                self.median_curve[i]
            ));
        }
        out
    }

    pub fn histogram_csv(&self) -> String {
        let mut out = String::from("m,h,count\n");
        for (i, (h, c)) in self.bandwidths.iter().zip(&self.histogram).enumerate() {
            out.push_str(&format!("{},{h:?},{c}\n", i + 1));
        }
        out
    }

    pub fn timing_csv(&self) -> String {
        let mut out = String::from("seed,runtime_ms\n");
        for r in &self.rows {
            out.push_str(&format!("{},{:.3}\n", r.seed, r.runtime_ms));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub bytes: u64,
    /// Absent for files whose content varies between runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sha256: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config_sha256: String,
    pub config: ExperimentConfig,
    pub gamma: f64,
    pub bandwidths: Vec<f64>,
    pub seeds: Vec<u64>,
    pub artifacts: Vec<Artifact>,
}

/// Files whose bytes are not reproducible.
pub const VOLATILE_ARTIFACTS: &[&str] = &["timing.csv"];

struct ArtifactWriter<'a> {
    dir: &'a Path,
    written: Vec<Artifact>,
}

impl ArtifactWriter<'_> {
    fn record(&mut self, path: &Path) -> Result<()> {
        let bytes = std::fs::read(path)?;
        let rel = path
            .strip_prefix(self.dir)
            .unwrap_or(path)
            .to_string_lossy()
            .into_owned();
        let volatile = VOLATILE_ARTIFACTS.contains(&rel.as_str());
        self.written.push(Artifact {
            path: rel,
            bytes: bytes.len() as u64,
            sha256: (!volatile).then(|| hex::encode(Sha256::digest(&bytes))),
        });
        Ok(())
    }

    fn text(&mut self, name: &str, text: &str) -> Result<()> {
        let path = self.dir.join(name);
        write_atomic(&path, text.as_bytes())?;
        self.record(&path)
    }
}

struct SeedOutcome {
    row: SeedRow,
    lepski_csv: String,
    selected: Option<EstimateResult>,
    dataset: Option<HomodyneDataset>,
}

#[allow(clippy::too_many_arguments)]
fn run_seed(
    cfg: &ExperimentConfig,
    state: &StateSpec,
    truth: &WignerGrid,
    bandwidths: &[f64],
    gamma: f64,
    lepski: &LepskiConfig,
    spec: GridSpec,
    seed: u64,
    keep_estimate: bool,
) -> Result<SeedOutcome> {
    let started = Instant::now();
    let data = sample_homodyne(state, cfg.n, cfg.eta, seed)?;
    let mut estimates = grid_estimates(
        &data,
        bandwidths,
        spec,
        cfg.binning,
        Normalization::UnitMass,
    )?;
    let errors = estimates
        .iter()
        .map(|e| relative_sup(&e.grid, truth))
        .collect::<Result<Vec<_>>>()?;
    let grids: Vec<WignerGrid> = estimates.iter().map(|e| e.grid.clone()).collect();
    let selection = select(&grids, gamma, cfg.n, lepski)?;
    let m_oracle = argmin(&errors) + 1;
    let selected = keep_estimate.then(|| estimates.swap_remove(selection.m_hat - 1));
    Ok(SeedOutcome {
        row: SeedRow {
            seed,
            m_selected: selection.m_hat,
            h_selected: selection.h,
            m_oracle,
            h_oracle: bandwidths[m_oracle - 1],
            errors,
            runtime_ms: started.elapsed().as_secs_f64() * 1e3,
        },
        lepski_csv: selection.to_csv(),
        selected,
        dataset: cfg.save_datasets.then_some(data),
    })
}

/// Runs the seeds as independent parallel jobs and writes the artifacts under `cfg.outputs`.
///
/// A failing seed aborts the run with [`Error::Seed`].
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let gamma = cfg.gamma()?;
    let lepski = cfg.lepski_config()?;
    let bandwidths = lepski.bandwidths.clone();
    let spec = GridSpec::new(cfg.grid.half_width, cfg.grid.n_points)?;
    let mut unit_state = cfg.state.clone();
    unit_state.normalization = Normalization::UnitMass;
    let truth = analytic_state(&unit_state, spec)?;

    let dir = cfg.outputs.as_path();
    std::fs::create_dir_all(dir)?;
    let mut writer = ArtifactWriter {
        dir,
        written: Vec::new(),
    };
    write_grid(&dir.join("truth.bin"), &truth)?;
    writer.record(&dir.join("truth.bin"))?;

    let outcomes = cfg
        .seeds
        .par_iter()
        .enumerate()
        .map(|(k, &seed)| {
            run_seed(
                cfg,
                &unit_state,
                &truth,
                &bandwidths,
                gamma,
                &lepski,
                spec,
                seed,
                k == 0,
            )
            .map_err(|e| Error::Seed {
                seed,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::with_capacity(outcomes.len());
    let mut first_selected = None;
    for out in outcomes {
        let seed = out.row.seed;
        if let Some(data) = &out.dataset {
            let path = dir.join(format!("dataset_seed{seed}.bin"));
            write_dataset(&path, data)?;
            writer.record(&path)?;
        }
        writer.text(&format!("lepski_seed{seed}.csv"), &out.lepski_csv)?;
        if let Some(chosen) = out.selected {
            let (bin, side) = write_estimate(dir, "estimate_selected", &chosen, seed, &unit_state)?;
            writer.record(&bin)?;
            writer.record(&side)?;
            first_selected = Some(chosen.grid);
        }
        rows.push(out.row);
    }

    let m = bandwidths.len();
    let column = |i: usize| rows.iter().map(|r| r.errors[i]).collect::<Vec<_>>();
    let mean_curve: Vec<f64> = (0..m)
        .map(|i| column(i).iter().sum::<f64>() / rows.len() as f64)
        .collect();
    let std_curve: Vec<f64> = (0..m)
        .map(|i| {
            let c = column(i);
            if c.len() < 2 {
                return 0.0;
            }
            let var =
                c.iter().map(|e| (e - mean_curve[i]).powi(2)).sum::<f64>() / (c.len() - 1) as f64;
            var.sqrt()
        })
        .collect();
    let median_curve: Vec<f64> = (0..m).map(|i| median(&column(i))).collect();
    let mut histogram = vec![0usize; m];
    for r in &rows {
        histogram[r.m_selected - 1] += 1;
    }
    let report = ExperimentReport {
        config: cfg.clone(),
        gamma,
        bandwidths: bandwidths.clone(),
        rows,
        mean_curve,
        std_curve,
        median_curve,
        histogram,
        first_selected,
        truth: Some(truth),
    };

    writer.text("errors.csv", &report.errors_csv())?;
    writer.text("selection.csv", &report.selection_csv())?;
    writer.text("curve.csv", &report.curve_csv())?;
    writer.text("histogram.csv", &report.histogram_csv())?;
    writer.text("timing.csv", &report.timing_csv())?;

    let manifest = Manifest {
        tool: "qht".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config_sha256: cfg.hash()?,
        config: cfg.clone(),
        gamma,
        bandwidths,
        seeds: cfg.seeds.clone(),
        artifacts: writer.written,
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trip() {
        let cfg = ExperimentConfig::cat_study(3, 500_000, PathBuf::from("out/cat"));
        let text = cfg.to_json().unwrap();
        assert_eq!(ExperimentConfig::from_json(&text).unwrap(), cfg);
        let mut explicit = cfg.clone();
        explicit.bandwidths = BandwidthChoice::Explicit(vec![0.4, 0.2]);
        explicit.lepski.x = LepskiLevel::Value(3.0);
        let text = explicit.to_json().unwrap();
        assert!(text.contains("\"bandwidths\": [\n    0.4,"));
        assert_eq!(ExperimentConfig::from_json(&text).unwrap(), explicit);
    }

    #[test]
    fn malformed_config_names_field() {
        let cfg = ExperimentConfig::single_photon_study(1, PathBuf::from("o"));
        let mut value: serde_json::Value = serde_json::from_str(&cfg.to_json().unwrap()).unwrap();
        value["grid"]["n_points"] = serde_json::json!("many");
        let err = ExperimentConfig::from_json(&value.to_string()).unwrap_err();
        assert!(
            matches!(&err, Error::Config { field, .. } if field == "grid.n_points"),
            "{err}"
        );

        let mut value: serde_json::Value = serde_json::from_str(&cfg.to_json().unwrap()).unwrap();
        value["eta"] = serde_json::json!(0.3);
        let err = ExperimentConfig::from_json(&value.to_string()).unwrap_err();
        assert!(
            matches!(&err, Error::Config { field, .. } if field == "eta"),
            "{err}"
        );

        let mut value: serde_json::Value = serde_json::from_str(&cfg.to_json().unwrap()).unwrap();
        value["bandwidths"] = serde_json::json!([0.2, 0.4]);
        let err = ExperimentConfig::from_json(&value.to_string()).unwrap_err();
        assert!(
            matches!(&err, Error::Config { field, .. } if field == "bandwidths"),
            "{err}"
        );
    }

    #[test]
    fn median_and_argmin() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(argmin(&[2.0, 1.0, 1.0]), 1);
    }
}
