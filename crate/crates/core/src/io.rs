//! Binary artifact files.
//!
//! Every file is one line of JSON (the header, terminated by `\n`) followed
//! by a raw little-endian `f64` payload whose length the header determines.
//! Writes go to a temporary sibling and are renamed into place.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::{EstimateMethod, EstimateResult};
use crate::grid::{GridSpec, WignerGrid};
use crate::simulate::{HomodyneDataset, NoiseModel};
use crate::states::{DensityMatrix, StateSpec};
use crate::tomography::Sinogram;

pub const DTYPE_F64: &str = "f64-le";
pub const DTYPE_COMPLEX: &str = "complex128-interleaved";

/// Writes bytes to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|d| !d.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| format_error(path, "path has no file name"))?
        .to_string_lossy();
    let tmp = dir.join(format!(".{name}.tmp-{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn format_error(path: &Path, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn encode<H: Serialize>(header: &H, payload: &[f64]) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec(header)?;
    bytes.push(b'\n');
    bytes.reserve(payload.len() * 8);
    for v in payload {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    Ok(bytes)
}

/// Splits a file into its parsed header and payload values.
fn decode<H: DeserializeOwned>(
    path: &Path,
    bytes: &[u8],
    expected_len: impl Fn(&H) -> usize,
) -> Result<(H, Vec<f64>)> {
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| format_error(path, "no header line"))?;
    let header: H = serde_json::from_slice(&bytes[..newline]).map_err(|e| {
        format_error(
            path,
            format!("header at byte {}: {e}", e.column().saturating_sub(1)),
        )
    })?;
    let body = &bytes[newline + 1..];
    let want = expected_len(&header);
    if body.len() != want * 8 {
        return Err(format_error(
            path,
            format!(
                "payload at byte {} holds {} bytes, expected {}",
                newline + 1,
                body.len(),
                want * 8
            ),
        ));
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Ok((header, values))
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| format_error(path, e.to_string()))
}

fn check_dtype(path: &Path, found: &str, expected: &str) -> Result<()> {
    if found != expected {
        return Err(format_error(
            path,
            format!("dtype {found:?}, expected {expected:?}"),
        ));
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct MatrixHeader {
    dim: usize,
    layout: String,
    dtype: String,
}

pub fn write_density_matrix(path: &Path, rho: &DensityMatrix) -> Result<()> {
    let header = MatrixHeader {
        dim: rho.dim(),
        layout: "row-major".into(),
        dtype: DTYPE_COMPLEX.into(),
    };
    let payload: Vec<f64> = rho.entries().iter().flat_map(|c| [c.re, c.im]).collect();
    write_atomic(path, &encode(&header, &payload)?)
}

/// Reads and validates a density matrix.
pub fn read_density_matrix(path: &Path) -> Result<DensityMatrix> {
    let bytes = read(path)?;
    let (h, v): (MatrixHeader, _) = decode(path, &bytes, |h: &MatrixHeader| 2 * h.dim * h.dim)?;
    check_dtype(path, &h.dtype, DTYPE_COMPLEX)?;
    if h.layout != "row-major" {
        return Err(format_error(path, format!("layout {:?}", h.layout)));
    }
    let entries = v
        .chunks_exact(2)
        .map(|c| Complex64::new(c[0], c[1]))
        .collect();
    DensityMatrix::new(h.dim, entries)
}

#[derive(Debug, Serialize, Deserialize)]
struct SinogramHeader {
    n_angles: usize,
    n_radial: usize,
    radial_half_width: f64,
    dtype: String,
}

pub fn write_sinogram(path: &Path, s: &Sinogram) -> Result<()> {
    let header = SinogramHeader {
        n_angles: s.n_angles(),
        n_radial: s.n_radial(),
        radial_half_width: s.radial_half_width(),
        dtype: DTYPE_F64.into(),
    };
    write_atomic(path, &encode(&header, s.values())?)
}

pub fn read_sinogram(path: &Path) -> Result<Sinogram> {
    let bytes = read(path)?;
    let (h, v): (SinogramHeader, _) =
        decode(path, &bytes, |h: &SinogramHeader| h.n_angles * h.n_radial)?;
    check_dtype(path, &h.dtype, DTYPE_F64)?;
    Sinogram::from_values(h.n_angles, h.n_radial, h.radial_half_width, v)
}

#[derive(Debug, Serialize, Deserialize)]
struct DatasetHeader {
    n: usize,
    eta: f64,
    gamma: f64,
    seed: u64,
    state: StateSpec,
    layout: String,
    dtype: String,
}

/// Dataset file with (z, φ) pairs interleaved.
pub fn write_dataset(path: &Path, data: &HomodyneDataset) -> Result<()> {
    let header = DatasetHeader {
        n: data.len(),
        eta: data.noise.eta(),
        gamma: data.noise.gamma(),
        seed: data.seed,
        state: data.state.clone(),
        layout: "z-phi-interleaved".into(),
        dtype: DTYPE_F64.into(),
    };
    let payload: Vec<f64> = data
        .z
        .iter()
        .zip(&data.phi)
        .flat_map(|(z, p)| [*z, *p])
        .collect();
    write_atomic(path, &encode(&header, &payload)?)
}

pub fn read_dataset(path: &Path) -> Result<HomodyneDataset> {
    let bytes = read(path)?;
    let (h, v): (DatasetHeader, _) = decode(path, &bytes, |h: &DatasetHeader| 2 * h.n)?;
    check_dtype(path, &h.dtype, DTYPE_F64)?;
    let noise = NoiseModel::new(h.eta)?;
    if (noise.gamma() - h.gamma).abs() > 1e-15 {
        return Err(format_error(
            path,
            format!("gamma {} inconsistent with eta {}", h.gamma, h.eta),
        ));
    }
    let (z, phi) = v.chunks_exact(2).map(|c| (c[0], c[1])).unzip();
    HomodyneDataset::new(z, phi, noise, h.seed, h.state)
}

/// Two-column CSV export of a dataset.
pub fn write_dataset_csv(path: &Path, data: &HomodyneDataset) -> Result<()> {
    let mut out = String::from("z,phi\n");
    for (z, p) in data.z.iter().zip(&data.phi) {
        out.push_str(&format!("{z:?},{p:?}\n"));
    }
    write_atomic(path, out.as_bytes())
}

#[derive(Debug, Serialize, Deserialize)]
struct GridHeader {
    half_width: f64,
    n_points: usize,
    /// values[ip * n_points + iq], q varying fastest
    layout: String,
    dtype: String,
}

pub fn write_grid(path: &Path, grid: &WignerGrid) -> Result<()> {
    let header = GridHeader {
        half_width: grid.spec().half_width,
        n_points: grid.spec().n_points,
        layout: "row-major-p-q".into(),
        dtype: DTYPE_F64.into(),
    };
    write_atomic(path, &encode(&header, grid.values())?)
}

pub fn read_grid(path: &Path) -> Result<WignerGrid> {
    let bytes = read(path)?;
    let (h, v): (GridHeader, _) = decode(path, &bytes, |h: &GridHeader| h.n_points * h.n_points)?;
    check_dtype(path, &h.dtype, DTYPE_F64)?;
    WignerGrid::from_values(GridSpec::new(h.half_width, h.n_points)?, v)
}

/// JSON sidecar describing an estimate grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateSidecar {
    pub h: f64,
    pub gamma: f64,
    pub n: usize,
    pub method: EstimateMethod,
    pub seed: u64,
    pub state: StateSpec,
    pub cutoff_flag: bool,
    pub dropped_fraction: f64,
}

/// Writes `<stem>.bin` and `<stem>.json`; returns both paths.
pub fn write_estimate(
    dir: &Path,
    stem: &str,
    est: &EstimateResult,
    seed: u64,
    state: &StateSpec,
) -> Result<(PathBuf, PathBuf)> {
    let grid_path = dir.join(format!("{stem}.bin"));
    let side_path = dir.join(format!("{stem}.json"));
    write_grid(&grid_path, &est.grid)?;
    let side = EstimateSidecar {
        h: est.h,
        gamma: est.gamma,
        n: est.n,
        method: est.method,
        seed,
        state: state.clone(),
        cutoff_flag: est.cutoff_flag,
        dropped_fraction: est.dropped_fraction,
    };
    write_json(&side_path, &side)?;
    Ok((grid_path, side_path))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = read(path)?;
    serde_json::from_slice(&bytes).map_err(|e| {
        format_error(
            path,
            format!("line {} column {}: {e}", e.line(), e.column()),
        )
    })
}
