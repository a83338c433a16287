//! Binary grid files with JSON sidecars, and a log-scale PGM preview.
//!
//! A grid file is a 16-byte header followed by row-major little-endian
//! `f64` values, one per node for real data or `(re, im)` pairs for
//! complex data. The header is the 8-byte magic `HBNGRID\0`, a `u32`
//! format version and a `u32` kind tag (0 real, 1 complex). Everything
//! else lives in a sidecar next to the data file with a `.json` extension.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: [u8; 8] = *b"HBNGRID\0";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridKind {
    Real,
    Complex,
}

impl GridKind {
    fn tag(self) -> u32 {
        match self {
            GridKind::Real => 0,
            GridKind::Complex => 1,
        }
    }

    fn from_tag(tag: u32) -> Result<Self> {
        match tag {
            0 => Ok(GridKind::Real),
            1 => Ok(GridKind::Complex),
            t => Err(Error::Format(format!("unknown grid kind tag {t}"))),
        }
    }
}

/// Sidecar contents. `z` is the slice height in Å for transverse grids and
/// the screen distance in m for far-field patterns; `units` says which.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMeta {
    pub extent: f64,
    pub n_points: usize,
    pub z: f64,
    pub units: String,
    pub kind: GridKind,
    #[serde(default)]
    pub center: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub enum GridData {
    Real(Array2<f64>),
    Complex(Array2<Complex64>),
}

pub fn sidecar_path(data: &Path) -> PathBuf {
    data.with_extension("json")
}

fn header(kind: GridKind) -> [u8; HEADER_LEN] {
    let mut h = [0u8; HEADER_LEN];
    h[..8].copy_from_slice(&MAGIC);
    h[8..12].copy_from_slice(&VERSION.to_le_bytes());
    h[12..].copy_from_slice(&kind.tag().to_le_bytes());
    h
}

fn check_shape(meta: &GridMeta, shape: &[usize]) -> Result<()> {
    if shape != [meta.n_points, meta.n_points] {
        return Err(Error::GridMismatch(format!(
            "array shape {shape:?} does not match n_points {}",
            meta.n_points
        )));
    }
    Ok(())
}

fn write_pair(path: &Path, meta: &GridMeta, bytes: &[u8]) -> Result<[PathBuf; 2]> {
    let mut f = fs::File::create(path)?;
    f.write_all(bytes)?;
    f.flush()?;
    let side = sidecar_path(path);
    let mut json = serde_json::to_string_pretty(meta)?;
    json.push('\n');
    fs::write(&side, json)?;
    Ok([path.to_path_buf(), side])
}

/// Writes a real grid and its sidecar; returns both paths.
pub fn write_real(path: &Path, meta: &GridMeta, values: &Array2<f64>) -> Result<[PathBuf; 2]> {
    let meta = GridMeta { kind: GridKind::Real, ..meta.clone() };
    check_shape(&meta, values.shape())?;
    let mut bytes = Vec::with_capacity(HEADER_LEN + 8 * values.len());
    bytes.extend_from_slice(&header(GridKind::Real));
    for v in values.iter() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    write_pair(path, &meta, &bytes)
}

pub fn write_complex(
    path: &Path,
    meta: &GridMeta,
    values: &Array2<Complex64>,
) -> Result<[PathBuf; 2]> {
    let meta = GridMeta { kind: GridKind::Complex, ..meta.clone() };
    check_shape(&meta, values.shape())?;
    let mut bytes = Vec::with_capacity(HEADER_LEN + 16 * values.len());
    bytes.extend_from_slice(&header(GridKind::Complex));
    for v in values.iter() {
        bytes.extend_from_slice(&v.re.to_le_bytes());
        bytes.extend_from_slice(&v.im.to_le_bytes());
    }
    write_pair(path, &meta, &bytes)
}

/// Reads a grid file and its sidecar, checking them against each other.
pub fn read_grid(path: &Path) -> Result<(GridMeta, GridData)> {
    let meta: GridMeta = serde_json::from_str(&fs::read_to_string(sidecar_path(path))?)?;
    let bytes = fs::read(path)?;
    if bytes.len() < HEADER_LEN || bytes[..8] != MAGIC {
        return Err(Error::Format(format!("{} is not a grid file", path.display())));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != VERSION {
        return Err(Error::Format(format!("unsupported grid version {version}")));
    }
    let kind = GridKind::from_tag(u32::from_le_bytes(bytes[12..16].try_into().unwrap()))?;
    if kind != meta.kind {
        return Err(Error::Format(format!(
            "header says {kind:?} but sidecar says {:?}",
            meta.kind
        )));
    }
    let n = meta.n_points;
    let per_node = match kind {
        GridKind::Real => 1,
        GridKind::Complex => 2,
    };
    let body = &bytes[HEADER_LEN..];
    if body.len() != 8 * per_node * n * n {
        return Err(Error::Format(format!(
            "expected {} data bytes for {n}x{n} {kind:?} grid, found {}",
            8 * per_node * n * n,
            body.len()
        )));
    }
    let floats: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let data = match kind {
        GridKind::Real => GridData::Real(Array2::from_shape_vec((n, n), floats).unwrap()),
        GridKind::Complex => {
            let c = floats.chunks_exact(2).map(|p| Complex64::new(p[0], p[1])).collect();
            GridData::Complex(Array2::from_shape_vec((n, n), c).unwrap())
        }
    };
    Ok((meta, data))
}

/// Maps `values` to 8-bit grey levels on a log scale spanning `decades`
/// below the maximum. Row 0 of the array is the top row of the image.
pub fn log_scale_bytes(values: &Array2<f64>, decades: f64) -> Vec<u8> {
    let max = values.iter().cloned().filter(|v| v.is_finite()).fold(0.0, f64::max);
    if max <= 0.0 || decades <= 0.0 {
        return vec![0; values.len()];
    }
    let floor = max.log10() - decades;
    values
        .iter()
        .map(|&v| {
            if v.is_nan() || v <= 0.0 {
                return 0;
            }
            let t = ((v.log10() - floor) / decades).clamp(0.0, 1.0);
            (t * 255.0).round() as u8
        })
        .collect()
}

pub fn write_pgm_log(path: &Path, values: &Array2<f64>, decades: f64) -> Result<PathBuf> {
    let (rows, cols) = values.dim();
    let mut bytes = format!("P5\n{cols} {rows}\n255\n").into_bytes();
    bytes.extend(log_scale_bytes(values, decades));
    fs::write(path, bytes)?;
    Ok(path.to_path_buf())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta(n: usize) -> GridMeta {
        GridMeta {
            extent: 15.9,
            n_points: n,
            z: 2.0,
            units: "eV".into(),
            kind: GridKind::Real,
            center: [1.0, -2.0],
        }
    }

    #[test]
    fn real_round_trip_is_bit_exact() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path();
        let path = dir.join("slice.bin");
        let a = Array2::from_shape_fn((16, 16), |(i, j)| (i as f64 * 0.3).sin() - j as f64 * 1e-300);
        let written = write_real(&path, &meta(16), &a).unwrap();
        assert_eq!(written[1], dir.join("slice.json"));
        let (m, d) = read_grid(&path).unwrap();
        assert_eq!(m, meta(16));
        assert_eq!(d, GridData::Real(a));
        assert_eq!(fs::metadata(&path).unwrap().len(), 16 + 8 * 256);
    }

    #[test]
    fn complex_layout_is_interleaved() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path();
        let path = dir.join("psi.bin");
        let a = Array2::from_shape_fn((16, 16), |(i, j)| Complex64::new(i as f64, -(j as f64)));
        write_complex(&path, &meta(16), &a).unwrap();
        let bytes = fs::read(&path).unwrap();
        assert_eq!(&bytes[..8], b"HBNGRID\0");
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 1);
        // node [0, 1] is the second complex value
        let im = f64::from_le_bytes(bytes[16 + 24..16 + 32].try_into().unwrap());
        assert_eq!(im, -1.0);
        let (m, d) = read_grid(&path).unwrap();
        assert_eq!(m.kind, GridKind::Complex);
        assert_eq!(d, GridData::Complex(a));
    }

    #[test]
    fn shape_and_corruption_are_rejected() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path();
        let path = dir.join("bad.bin");
        assert!(write_real(&path, &meta(32), &Array2::zeros((16, 16))).is_err());
        write_real(&path, &meta(16), &Array2::zeros((16, 16))).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes.pop();
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(read_grid(&path), Err(Error::Format(_))));
        bytes[0] = b'X';
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(read_grid(&path), Err(Error::Format(_))));
    }

    #[test]
    fn log_scale_spans_requested_decades() {
        let a = Array2::from_shape_vec((1, 5), vec![1.0, 0.1, 1e-3, 1e-9, 0.0]).unwrap();
        assert_eq!(log_scale_bytes(&a, 3.0), vec![255, 170, 0, 0, 0]);
        assert_eq!(log_scale_bytes(&Array2::zeros((2, 2)), 3.0), vec![0; 4]);
    }

    #[test]
    fn pgm_header() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path();
        let path = dir.join("p.pgm");
        write_pgm_log(&path, &Array2::from_elem((3, 4), 1.0), 4.0).unwrap();
        let bytes = fs::read(&path).unwrap();
        assert!(bytes.starts_with(b"P5\n4 3\n255\n"));
        assert_eq!(bytes.len(), 11 + 12);
    }
}
