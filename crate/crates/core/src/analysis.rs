//! Frequency responses, pairwise similarity and CSV reports for a set of
//! convolution weights.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::fdw::tile;
use crate::numerics::{dft2, pad_kernel, Tensor, WeightShape};

/// Default spectrum pad size for visualization.
pub const DEFAULT_PAD: usize = 64;

/// Where a weight's spectrum is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectrumGrid {
    /// Every `k×k` filter zero-padded to `P×P`, magnitudes averaged over
    /// filters.
    Padded(usize),
    /// The tiled `k·C_in × k·C_out` grid the weight was materialized on.
    Native,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumReport {
    pub grid: SpectrumGrid,
    /// One non-negative magnitude grid per weight.
    pub magnitudes: Vec<Tensor>,
}

fn padded_response(w: &Tensor, pad: usize) -> Result<Tensor> {
    let shape = WeightShape::of(w)?;
    if pad < shape.k {
        return Err(Error::InvalidArgument(format!(
            "pad size {pad} smaller than kernel {}",
            shape.k
        )));
    }
    let mut acc = Tensor::zeros(&[pad, pad]);
    for c in 0..shape.c_in {
        for o in 0..shape.c_out {
            let magnitude = dft2(&pad_kernel(w, shape, c, o, pad, pad))?.magnitude();
            for (a, m) in acc.data_mut().iter_mut().zip(magnitude.data()) {
                *a += m;
            }
        }
    }
    Ok(acc.scale(1.0 / (shape.c_in * shape.c_out) as f64))
}

/// Magnitude spectrum of the tiled `k·C_in × k·C_out` grid.
pub fn native_spectrum(w: &Tensor) -> Result<Tensor> {
    let shape = WeightShape::of(w)?;
    Ok(dft2(&tile(w, shape))?.magnitude())
}

pub fn weight_frequency_response(weights: &[Tensor], grid: SpectrumGrid) -> Result<SpectrumReport> {
    let magnitudes = weights
        .iter()
        .map(|w| match grid {
            SpectrumGrid::Padded(p) => padded_response(w, p),
            SpectrumGrid::Native => native_spectrum(w),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SpectrumReport { grid, magnitudes })
}

/// Largest pointwise product of two magnitude grids over all weight pairs,
/// and the summed product energy.
pub fn spectral_overlap(report: &SpectrumReport) -> Result<(f64, f64)> {
    let mut max: f64 = 0.0;
    let mut energy = 0.0;
    let m = &report.magnitudes;
    for i in 0..m.len() {
        for j in i + 1..m.len() {
            m[i].expect_same_shape(&m[j], "spectral_overlap")?;
            for (a, b) in m[i].data().iter().zip(m[j].data()) {
                max = max.max(a * b);
                energy += a * b;
            }
        }
    }
    Ok((max, energy))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityReport {
    /// Row-major `n×n` cosine similarities; rows and columns of zero-norm
    /// weights hold 0.
    pub matrix: Vec<f64>,
    pub n: usize,
    pub zero_norm: Vec<bool>,
}

impl SimilarityReport {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix[i * self.n + j]
    }

    /// Largest `|cos|` off the diagonal among nonzero weights.
    pub fn max_off_diagonal(&self) -> f64 {
        let mut max: f64 = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                if i != j && !self.zero_norm[i] && !self.zero_norm[j] {
                    max = max.max(self.get(i, j).abs());
                }
            }
        }
        max
    }
}

pub fn pairwise_cosine_similarity(weights: &[Tensor]) -> Result<SimilarityReport> {
    if weights.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "similarity needs at least two weights, got {}",
            weights.len()
        )));
    }
    let n = weights.len();
    let norms: Vec<f64> = weights.iter().map(Tensor::norm).collect();
    let zero_norm: Vec<bool> = norms.iter().map(|&v| v == 0.0).collect();
    let mut matrix = vec![0.0; n * n];
    for i in 0..n {
        if zero_norm[i] {
            continue;
        }
        matrix[i * n + i] = 1.0;
        for j in i + 1..n {
            if zero_norm[j] {
                continue;
            }
            let cos = weights[i].dot(&weights[j])? / (norms[i] * norms[j]);
            matrix[i * n + j] = cos;
            matrix[j * n + i] = cos;
        }
    }
    Ok(SimilarityReport { matrix, n, zero_norm })
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

fn grid_csv(t: &Tensor) -> String {
    let (rows, cols) = (t.shape()[0], t.shape()[1]);
    let mut s = (0..cols).map(|c| c.to_string()).collect::<Vec<_>>().join(",");
    s.push('\n');
    for r in 0..rows {
        let line: Vec<String> = t.data()[r * cols..(r + 1) * cols]
            .iter()
            .map(|&v| format_value(v))
            .collect();
        s.push_str(&line.join(","));
        s.push('\n');
    }
    s
}

fn similarity_csv(report: &SimilarityReport) -> String {
    let mut s = String::from("row");
    for j in 0..report.n {
        let _ = write!(s, ",{j}");
    }
    s.push('\n');
    for i in 0..report.n {
        let _ = write!(s, "{i}");
        for j in 0..report.n {
            let _ = write!(s, ",{}", format_value(report.get(i, j)));
        }
        s.push('\n');
    }
    s
}

fn parse_err(path: &Path, msg: impl Into<String>) -> Error {
    Error::InvalidArgument(format!("{}: {}", path.display(), msg.into()))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_values<'a>(path: &Path, cells: impl Iterator<Item = &'a str>) -> Result<Vec<f64>> {
    cells
        .map(|c| {
            c.trim()
                .parse::<f64>()
                .map_err(|e| parse_err(path, format!("bad number {c:?}: {e}")))
        })
        .collect()
}

/// Reads a grid CSV (header of column indices, then one row per line).
pub fn read_grid_csv(path: &Path) -> Result<Tensor> {
    let text = read(path)?;
    let mut lines = text.lines();
    let cols = lines
        .next()
        .ok_or_else(|| parse_err(path, "empty file"))?
        .split(',')
        .count();
    let mut data = Vec::new();
    let mut rows = 0;
    for line in lines.filter(|l| !l.is_empty()) {
        let values = parse_values(path, line.split(','))?;
        if values.len() != cols {
            return Err(parse_err(
                path,
                format!("row {rows} has {} columns, expected {cols}", values.len()),
            ));
        }
        data.extend(values);
        rows += 1;
    }
    Tensor::new(&[rows, cols], data)
}

/// Reads `similarity.csv` back into a row-major matrix.
pub fn read_similarity_csv(path: &Path) -> Result<(usize, Vec<f64>)> {
    let text = read(path)?;
    let mut lines = text.lines();
    let n = lines
        .next()
        .ok_or_else(|| parse_err(path, "empty file"))?
        .split(',')
        .count()
        - 1;
    let mut matrix = Vec::with_capacity(n * n);
    for (i, line) in lines.filter(|l| !l.is_empty()).enumerate() {
        let mut cells = line.split(',');
        let label = cells.next().unwrap_or_default();
        if label.trim() != i.to_string() {
            return Err(parse_err(path, format!("row label {label:?}, expected {i}")));
        }
        let values = parse_values(path, cells)?;
        if values.len() != n {
            return Err(parse_err(
                path,
                format!("row {i} has {} values, expected {n}", values.len()),
            ));
        }
        matrix.extend(values);
    }
    if matrix.len() != n * n {
        return Err(parse_err(path, format!("expected {n} rows")));
    }
    Ok((n, matrix))
}

/// Bundle written by [`export_report`].
#[derive(Debug, Clone, Default)]
pub struct AnalysisReport {
    pub spectra: Option<SpectrumReport>,
    pub similarity: Option<SimilarityReport>,
    /// Extra `H×W` planes written as `<name>.csv`.
    pub planes: Vec<(String, Tensor)>,
    /// Free-form `key = value` lines for the manifest.
    pub manifest: Vec<(String, String)>,
    /// `(check name, passed, detail)`.
    pub checks: Vec<(String, bool, String)>,
}

fn write(path: PathBuf, contents: &str) -> Result<PathBuf> {
    fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Writes `spectrum_<i>.csv`, `similarity.csv`, extra planes and
/// `manifest.txt` under `out_dir`; returns the written paths.
pub fn export_report(report: &AnalysisReport, out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();
    if let Some(spectra) = &report.spectra {
        for (i, m) in spectra.magnitudes.iter().enumerate() {
            written.push(write(out_dir.join(format!("spectrum_{i}.csv")), &grid_csv(m))?);
        }
    }
    if let Some(sim) = &report.similarity {
        written.push(write(out_dir.join("similarity.csv"), &similarity_csv(sim))?);
    }
    for (name, plane) in &report.planes {
        written.push(write(out_dir.join(format!("{name}.csv")), &grid_csv(plane))?);
    }
    let mut manifest = String::new();
    for (k, v) in &report.manifest {
        let _ = writeln!(manifest, "{k} = {v}");
    }
    if let Some(spectra) = &report.spectra {
        let grid = match spectra.grid {
            SpectrumGrid::Padded(p) => format!("padded {p}x{p}"),
            SpectrumGrid::Native => "native".to_string(),
        };
        let _ = writeln!(manifest, "spectrum.grid = {grid}");
        let _ = writeln!(manifest, "spectrum.count = {}", spectra.magnitudes.len());
    }
    for (name, passed, detail) in &report.checks {
        let _ = writeln!(
            manifest,
            "check {name}: {} ({detail})",
            if *passed { "PASS" } else { "FAIL" }
        );
    }
    written.push(write(out_dir.join("manifest.txt"), &manifest)?);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delta_filter_is_flat() {
        let mut w = Tensor::zeros(&[3, 3, 1, 1]);
        w.data_mut()[4] = 1.0;
        let r = weight_frequency_response(&[w], SpectrumGrid::Padded(16)).unwrap();
        assert!(r.magnitudes[0].data().iter().all(|&m| (m - 1.0).abs() < 1e-12));
    }

    #[test]
    fn box_filter_peaks_at_dc() {
        let w = Tensor::ones(&[3, 3, 2, 2]);
        let r = weight_frequency_response(&[w], SpectrumGrid::Padded(DEFAULT_PAD)).unwrap();
        let m = &r.magnitudes[0];
        assert!((m.data()[0] - 9.0).abs() < 1e-12);
        assert!(m.data()[1..].iter().all(|&v| v < m.data()[0]));
    }

    #[test]
    fn pad_smaller_than_kernel_rejected() {
        let w = Tensor::ones(&[5, 5, 1, 1]);
        assert!(weight_frequency_response(&[w], SpectrumGrid::Padded(3)).is_err());
    }

    #[test]
    fn similarity_basics() {
        let w = Tensor::from_fn(&[3, 3, 1, 2], |i| i as f64 - 4.0);
        let r = pairwise_cosine_similarity(&[w.clone(), w.clone(), w.scale(-1.0)]).unwrap();
        assert_eq!(r.get(0, 0), 1.0);
        assert!((r.get(0, 1) - 1.0).abs() < 1e-15);
        assert!((r.get(0, 2) + 1.0).abs() < 1e-15);
        assert!(pairwise_cosine_similarity(&[w]).is_err());
    }

    #[test]
    fn zero_weight_flagged() {
        let w = Tensor::ones(&[1, 1, 1, 2]);
        let r = pairwise_cosine_similarity(&[w, Tensor::zeros(&[1, 1, 1, 2])]).unwrap();
        assert_eq!(r.zero_norm, vec![false, true]);
        assert_eq!(r.get(0, 1), 0.0);
        assert_eq!(r.get(1, 1), 0.0);
        assert_eq!(r.max_off_diagonal(), 0.0);
    }

    #[test]
    fn empty_report_writes_manifest_only() {
        let dir = tempfile::tempdir().unwrap();
        let written = export_report(&AnalysisReport::default(), dir.path()).unwrap();
        assert_eq!(written, vec![dir.path().join("manifest.txt")]);
    }

    #[test]
    fn identical_weights_round_trip_to_ones() {
        let dir = tempfile::tempdir().unwrap();
        let w = Tensor::from_fn(&[3, 3, 2, 1], |i| (i as f64).sin());
        let report = AnalysisReport {
            similarity: Some(pairwise_cosine_similarity(&[w.clone(), w]).unwrap()),
            ..Default::default()
        };
        export_report(&report, dir.path()).unwrap();
        let (n, m) = read_similarity_csv(&dir.path().join("similarity.csv")).unwrap();
        assert_eq!(n, 2);
        assert!(m.iter().all(|&v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn io_error_names_path() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        fs::write(&blocker, "x").unwrap();
        let err = export_report(&AnalysisReport::default(), &blocker.join("sub")).unwrap_err();
        assert!(err.to_string().contains("file"), "{err}");
    }
}
