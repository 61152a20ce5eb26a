//! Run configuration: flat `key = value` text grouped under `[section]`
//! headers. `#` and `;` start comments. Keys may repeat (lenses, reflector
//! segments); every other key is read as its last occurrence.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::model::{Lens, LineReflector, VelocityModel};

/// Parsed key/value table, keyed by `(section, key)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigTable {
    entries: BTreeMap<(String, String), Vec<String>>,
}

impl ConfigTable {
    pub fn parse(text: &str) -> Result<Self> {
        let mut section = String::new();
        let mut entries: BTreeMap<(String, String), Vec<String>> = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split(['#', ';']).next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| Error::Config(format!("line {}: unterminated section header", lineno + 1)))?;
                section = name.trim().to_ascii_lowercase();
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", lineno + 1)))?;
            let key = k.trim().to_ascii_lowercase();
            if key.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", lineno + 1)));
            }
            entries.entry((section.clone(), key)).or_default().push(v.trim().to_string());
        }
        Ok(Self { entries })
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.entries.get(&(section.to_string(), key.to_string())).and_then(|v| v.last()).map(String::as_str)
    }

    pub fn get_all(&self, section: &str, key: &str) -> &[String] {
        self.entries.get(&(section.to_string(), key.to_string())).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn f64_or(&self, section: &str, key: &str, default: f64) -> Result<f64> {
        self.get(section, key).map_or(Ok(default), |v| parse_f64(section, key, v))
    }

    pub fn f64_req(&self, section: &str, key: &str) -> Result<f64> {
        let v = self.get(section, key).ok_or_else(|| Error::Config(format!("missing [{section}] {key}")))?;
        parse_f64(section, key, v)
    }

    pub fn usize_or(&self, section: &str, key: &str, default: usize) -> Result<usize> {
        self.get(section, key).map_or(Ok(default), |v| {
            v.parse().map_err(|_| Error::Config(format!("[{section}] {key}: `{v}` is not a non-negative integer")))
        })
    }

    pub fn bool_or(&self, section: &str, key: &str, default: bool) -> Result<bool> {
        match self.get(section, key) {
            None => Ok(default),
            Some("true" | "yes" | "1") => Ok(true),
            Some("false" | "no" | "0") => Ok(false),
            Some(v) => Err(Error::Config(format!("[{section}] {key}: `{v}` is not a boolean"))),
        }
    }

    pub fn list_or(&self, section: &str, key: &str, default: &[f64]) -> Result<Vec<f64>> {
        self.get(section, key).map_or(Ok(default.to_vec()), |v| parse_list(section, key, v))
    }
}

fn parse_f64(section: &str, key: &str, v: &str) -> Result<f64> {
    v.parse().map_err(|_| Error::Config(format!("[{section}] {key}: `{v}` is not a number")))
}

/// Comma- or whitespace-separated numbers.
fn parse_list(section: &str, key: &str, v: &str) -> Result<Vec<f64>> {
    v.split([',', ' ', '\t']).filter(|s| !s.is_empty()).map(|s| parse_f64(section, key, s)).collect()
}

fn fixed<const N: usize>(section: &str, key: &str, v: &str) -> Result<[f64; N]> {
    let l = parse_list(section, key, v)?;
    l.try_into().map_err(|l: Vec<f64>| Error::Config(format!("[{section}] {key}: expected {N} numbers, got {}", l.len())))
}

/// Time-interval count: fixed or chosen from ray geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SliceCount {
    Auto,
    Fixed(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub enum SourceSpec {
    /// Ricker point source; `delay` shifts the wavelet peak.
    Point { position: [f64; 2], f_peak: f64, delay: f64 },
    /// Laterally tapered plane pulse at rest at `t = 0`:
    /// `u0 = taper((half_width - |x - center_x|) / taper) ricker(f, (z - depth) / c0)`.
    PlanePulse { center_x: f64, depth: f64, half_width: f64, taper: f64, f_peak: f64 },
}

impl SourceSpec {
    pub fn f_peak(&self) -> f64 {
        match self {
            SourceSpec::Point { f_peak, .. } | SourceSpec::PlanePulse { f_peak, .. } => *f_peak,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FdSection {
    pub dt: f64,
    pub t_max: f64,
    pub record_every: usize,
    pub pad: usize,
    pub snapshot_times: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RtcSection {
    pub k_max: usize,
    pub slices: SliceCount,
    /// Overlap in units of the record time step.
    pub overlap_samples: f64,
    pub ns_max: usize,
    pub det_threshold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub grid: GridSpec,
    pub model: VelocityModel,
    /// Model used for imaging; the truth unless `[model] imaging_shift` is set.
    pub imaging_model: VelocityModel,
    pub reflectors: Vec<LineReflector>,
    pub source: SourceSpec,
    /// Lateral source positions for multi-source imaging.
    pub acquisition: Vec<f64>,
    pub fd: FdSection,
    pub rtc: RtcSection,
    pub gather_positions: Vec<f64>,
    /// Columns averaged on either side of each gather position.
    pub gather_half_width: usize,
    pub out_dir: PathBuf,
    pub deterministic: bool,
    pub threads: usize,
    pub seed: u64,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_table(&ConfigTable::parse(&text)?)
    }

    pub fn from_table(t: &ConfigTable) -> Result<Self> {
        let n = t.usize_or("grid", "n", 256)?;
        let nz = t.usize_or("grid", "nz", n)?;
        let h = t.f64_or("grid", "spacing", 10.0)?;
        let ox = t.f64_or("grid", "origin_x", -(n as f64) * h / 2.0)?;
        let grid = GridSpec::new([n, nz], [h, h], [ox, 0.0]).map_err(|e| Error::Config(e.to_string()))?;

        let c0 = t.f64_or("model", "c0", 3000.0)?;
        let mut model = VelocityModel::constant(c0).map_err(|e| Error::Config(e.to_string()))?;
        for v in t.get_all("model", "lens") {
            let [contrast, cx, cz, wx, wz] = fixed::<5>("model", "lens", v)?;
            model = model
                .with_lens(Lens { contrast, center: [cx, cz], widths: [wx, wz] })
                .map_err(|e| Error::Config(e.to_string()))?;
        }
        model = model.with_boundary_layer(t.f64_or("model", "boundary_layer", 0.0)?).with_bounds(&grid);
        let shift = t.get("model", "imaging_shift").map(|v| fixed::<2>("model", "imaging_shift", v)).transpose()?;
        let imaging_model = shift.map_or_else(|| model.clone(), |s| model.shifted(s));

        let mut reflectors = Vec::new();
        for v in t.get_all("reflectors", "segment") {
            let [x0, z0, x1, z1, r] = fixed::<5>("reflectors", "segment", v)?;
            reflectors.push(LineReflector { a: [x0, z0], b: [x1, z1], reflectivity: r });
        }

        let f_peak = t.f64_or("source", "f_peak", 7.0)?;
        if !(f_peak > 0.0) {
            return Err(Error::Config("[source] f_peak must be positive".into()));
        }
        let source = match t.get("source", "kind").unwrap_or("point") {
            "point" => SourceSpec::Point {
                position: t.get("source", "position").map(|v| fixed::<2>("source", "position", v)).transpose()?.unwrap_or([0.0, 0.0]),
                f_peak,
                delay: t.f64_or("source", "delay", 1.5 / f_peak)?,
            },
            "plane_pulse" => SourceSpec::PlanePulse {
                center_x: t.f64_or("source", "center_x", 0.0)?,
                depth: t.f64_req("source", "depth")?,
                half_width: t.f64_req("source", "half_width")?,
                taper: t.f64_or("source", "taper", 0.0)?,
                f_peak,
            },
            other => return Err(Error::Config(format!("[source] kind `{other}` is not one of point, plane_pulse"))),
        };
        let default_x = match &source {
            SourceSpec::Point { position, .. } => vec![position[0]],
            SourceSpec::PlanePulse { .. } => Vec::new(),
        };
        let acquisition = t.list_or("acquisition", "sources", &default_x)?;

        let fd = FdSection {
            dt: t.f64_or("fd", "dt", 0.001)?,
            t_max: t.f64_req("fd", "t_max")?,
            record_every: t.usize_or("fd", "record_every", 4)?.max(1),
            pad: t.usize_or("fd", "pad", 40)?,
            snapshot_times: t.list_or("fd", "snapshot_times", &[])?,
        };

        let slices = match t.get("rtc", "ns").unwrap_or("auto") {
            "auto" => SliceCount::Auto,
            v => SliceCount::Fixed(v.parse().ok().filter(|&n| n >= 1).ok_or_else(|| Error::Config(format!("[rtc] ns: `{v}` is neither `auto` nor a positive integer")))?),
        };
        let rtc = RtcSection {
            k_max: t.usize_or("rtc", "k_max", 5)?,
            slices,
            overlap_samples: t.f64_or("rtc", "overlap_samples", 2.0)?,
            ns_max: t.usize_or("rtc", "ns_max", 16)?,
            det_threshold: t.f64_or("rtc", "det_threshold", 0.1)?,
        };

        Ok(Self {
            grid,
            model,
            imaging_model,
            reflectors,
            source,
            acquisition,
            fd,
            rtc,
            gather_positions: t.list_or("imaging", "gather_positions", &[0.0])?,
            gather_half_width: t.usize_or("imaging", "gather_half_width", 5)?,
            out_dir: PathBuf::from(t.get("output", "dir").unwrap_or("out")),
            deterministic: t.bool_or("run", "deterministic", false)?,
            threads: t.usize_or("run", "threads", 0)?,
            seed: t.usize_or("run", "seed", 0)? as u64,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "
# lens scene
[grid]
n = 128
spacing = 10

[model]
c0 = 3000
lens = 0.4, 0, 600, 300, 300   ; low-velocity lens

[reflectors]
segment = -500 400 500 400 0.1
segment = -500 800 500 900 0.1

[source]
kind = point
position = 0 0
f_peak = 7

[fd]
t_max = 1.5

[rtc]
ns = 4
";

    #[test]
    fn parses_sections_and_repeats() {
        let c = RunConfig::from_table(&ConfigTable::parse(SAMPLE).unwrap()).unwrap();
        assert_eq!(c.grid.n, [128, 128]);
        assert_eq!(c.grid.origin[0], -640.0);
        assert_eq!(c.model.lenses.len(), 1);
        assert_eq!(c.reflectors.len(), 2);
        assert_eq!(c.reflectors[1].b, [500.0, 900.0]);
        assert_eq!(c.rtc.slices, SliceCount::Fixed(4));
        assert_eq!(c.acquisition, vec![0.0]);
        match c.source {
            SourceSpec::Point { delay, .. } => assert!((delay - 1.5 / 7.0).abs() < 1e-15),
            _ => panic!("expected a point source"),
        }
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(matches!(ConfigTable::parse("[grid\nn = 3"), Err(Error::Config(_))));
        assert!(matches!(ConfigTable::parse("n 3"), Err(Error::Config(_))));
        let t = ConfigTable::parse("[fd]\nt_max = soon").unwrap();
        assert!(matches!(RunConfig::from_table(&t), Err(Error::Config(_))));
        let t = ConfigTable::parse("[fd]\nt_max = 1\n[rtc]\nns = 0").unwrap();
        assert!(matches!(RunConfig::from_table(&t), Err(Error::Config(_))));
    }

    #[test]
    fn missing_required_key_is_config_error() {
        let e = RunConfig::from_table(&ConfigTable::parse("[grid]\nn = 64").unwrap()).unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }
}
