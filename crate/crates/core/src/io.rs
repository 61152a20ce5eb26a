//! PMGRID / PMDATA containers and 16-bit PGM previews.
//!
//! A container is a 7-line ASCII header followed by little-endian `f64`
//! samples, axis 0 fastest, channels interleaved per sample.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{Array2, GridSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Container {
    /// Spatial grid, axes (x', x_n).
    Grid,
    /// Boundary record, axes (x', t).
    Data,
}

impl Container {
    fn magic(self) -> &'static str {
        match self {
            Container::Grid => "PMGRID1",
            Container::Data => "PMDATA1",
        }
    }
}

/// Multi-channel sampled data together with its sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFile {
    pub kind: Container,
    pub grid: GridSpec,
    pub channels: Vec<Array2<f64>>,
}

impl GridFile {
    pub fn single(kind: Container, grid: GridSpec, data: Array2<f64>) -> Self {
        Self { kind, grid, channels: vec![data] }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let g = &self.grid;
        let mut out = Vec::new();
        let header = format!(
            "{}\ndims {} {}\nspacing {:?} {:?}\norigin {:?} {:?}\nchannels {}\ndtype=float64\nendian=little\n",
            self.kind.magic(),
            g.n[0],
            g.n[1],
            g.spacing[0],
            g.spacing[1],
            g.origin[0],
            g.origin[1],
            self.channels.len()
        );
        out.extend_from_slice(header.as_bytes());
        out.reserve(g.len() * self.channels.len() * 8);
        for i in 0..g.len() {
            for c in &self.channels {
                out.extend_from_slice(&c.data[i].to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let fmt = |reason: String| Error::Format { path: path.to_path_buf(), reason };
        let mut lines = Vec::new();
        let mut pos = 0;
        while lines.len() < 7 {
            let end = bytes[pos..].iter().position(|&b| b == b'\n').ok_or_else(|| fmt("truncated header".into()))?;
            let line = std::str::from_utf8(&bytes[pos..pos + end]).map_err(|_| fmt("header is not UTF-8".into()))?;
            lines.push(line.trim().to_string());
            pos += end + 1;
        }
        let kind = match lines[0].as_str() {
            "PMGRID1" => Container::Grid,
            "PMDATA1" => Container::Data,
            m => return Err(fmt(format!("unknown magic `{m}`"))),
        };
        let pair = |line: &str, key: &str| -> Result<[f64; 2]> {
            let rest = line.strip_prefix(key).ok_or_else(|| fmt(format!("expected `{key}` line, got `{line}`")))?;
            let v: Vec<f64> = rest.split_whitespace().map(|s| s.parse::<f64>()).collect::<std::result::Result<_, _>>().map_err(|e| fmt(format!("{key}: {e}")))?;
            if v.len() != 2 {
                return Err(fmt(format!("{key}: expected 2 values")));
            }
            Ok([v[0], v[1]])
        };
        let dims = pair(&lines[1], "dims")?;
        let spacing = pair(&lines[2], "spacing")?;
        let origin = pair(&lines[3], "origin")?;
        let channels: usize = lines[4]
            .strip_prefix("channels")
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| fmt("bad channels line".into()))?;
        if lines[5] != "dtype=float64" || lines[6] != "endian=little" {
            return Err(fmt("only dtype=float64, endian=little is supported".into()));
        }
        if dims[0] < 1.0 || dims[1] < 1.0 || dims[0].fract() != 0.0 || dims[1].fract() != 0.0 {
            return Err(fmt("bad dims".into()));
        }
        let n = [dims[0] as usize, dims[1] as usize];
        let grid = GridSpec::new(n, spacing, origin).map_err(|e| fmt(e.to_string()))?;
        let body = &bytes[pos..];
        let need = grid.len() * channels * 8;
        if body.len() != need {
            return Err(fmt(format!("expected {need} data bytes, found {}", body.len())));
        }
        let mut chans = vec![Vec::with_capacity(grid.len()); channels];
        for (i, chunk) in body.chunks_exact(8).enumerate() {
            chans[i % channels].push(f64::from_le_bytes(chunk.try_into().unwrap()));
        }
        let channels = chans.into_iter().map(|d| Array2 { n, data: d }).collect();
        Ok(Self { kind, grid, channels })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            }
        }
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}

/// 16-bit binary PGM with a symmetric clip at the given quantile of `|v|`.
pub fn pgm_bytes(a: &Array2<f64>, quantile: f64) -> Vec<u8> {
    let mut mags: Vec<f64> = a.data.iter().map(|v| v.abs()).filter(|v| v.is_finite()).collect();
    mags.sort_by(|x, y| x.total_cmp(y));
    let clip = if mags.is_empty() {
        1.0
    } else {
        let i = ((mags.len() - 1) as f64 * quantile.clamp(0.0, 1.0)).round() as usize;
        let c = mags[i];
        if c > 0.0 {
            c
        } else {
            mags[mags.len() - 1].max(f64::MIN_POSITIVE)
        }
    };
    let mut out = format!("P5\n{} {}\n65535\n", a.n[0], a.n[1]).into_bytes();
    for v in &a.data {
        let x = if v.is_finite() { (v / clip).clamp(-1.0, 1.0) } else { 0.0 };
        let q = ((x + 1.0) * 0.5 * 65535.0).round() as u16;
        out.extend_from_slice(&q.to_be_bytes());
    }
    out
}

pub fn write_pgm(path: &Path, a: &Array2<f64>) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    fs::write(path, pgm_bytes(a, 0.995)).map_err(|e| Error::io(path, e))
}
