//! File formats: the binary backscatter container, energy-map exports
//! (CSV + PGM + JSON sidecar) and JSON run configuration.
//!
//! Dataset container layout, all integers and floats little-endian:
//!
//! | offset | size      | field                                   |
//! |--------|-----------|-----------------------------------------|
//! | 0      | 8         | magic `MWIBSCAT`                        |
//! | 8      | 4 (u32)   | format version (1)                      |
//! | 12     | 4 (u32)   | antenna count `M`                       |
//! | 16     | 8 (u64)   | samples per channel `N`                 |
//! | 24     | 8 (f64)   | sample interval, s                      |
//! | 32     | 8 (f64)   | record start time `t0`, s               |
//! | 40     | 8 (f64)   | propagation speed, m/s                  |
//! | 48     | 24·M      | antenna positions `x, y, z` (f64), m    |
//! | ...    | 8·M²·N    | channels, row-major `(tx, rx)`, f64     |

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::beamform::{BeamformerKind, EnergyMap};
use crate::coarse2fine::DecimationMode;
use crate::error::{Error, Result};
use crate::geometry::{ArrayGeometry, Disk, ImagingGrid, Point2, Region};
use crate::sim::BackscatterDataset;

pub const DATASET_MAGIC: &[u8; 8] = b"MWIBSCAT";
pub const DATASET_VERSION: u32 = 1;
const FIXED_HEADER: usize = 48;

/// Header size in bytes for `m` antennas.
pub fn dataset_header_len(m: usize) -> usize {
    FIXED_HEADER + 24 * m
}

pub fn encode_dataset(ds: &BackscatterDataset) -> Vec<u8> {
    let m = ds.antenna_count();
    let geom = ds.geometry();
    let mut buf = Vec::with_capacity(dataset_header_len(m) + 8 * ds.signals().len());
    buf.extend_from_slice(DATASET_MAGIC);
    buf.extend_from_slice(&DATASET_VERSION.to_le_bytes());
    buf.extend_from_slice(&(m as u32).to_le_bytes());
    buf.extend_from_slice(&(ds.n_samples() as u64).to_le_bytes());
    buf.extend_from_slice(&geom.sample_interval().to_le_bytes());
    buf.extend_from_slice(&ds.t0().to_le_bytes());
    buf.extend_from_slice(&geom.propagation_speed().to_le_bytes());
    for a in geom.antennas() {
        for c in a {
            buf.extend_from_slice(&c.to_le_bytes());
        }
    }
    for v in ds.signals() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf
}

pub fn decode_dataset(bytes: &[u8], path: &Path) -> Result<BackscatterDataset> {
    let corrupt = |reason: String| Error::CorruptHeader {
        path: path.to_path_buf(),
        reason,
    };
    if bytes.len() < 8 || &bytes[..8] != DATASET_MAGIC {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
        });
    }
    if bytes.len() < FIXED_HEADER {
        return Err(corrupt(format!("header needs {FIXED_HEADER} bytes, file has {}", bytes.len())));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());

    let version = u32_at(8);
    if version != DATASET_VERSION {
        return Err(Error::VersionMismatch {
            path: path.to_path_buf(),
            found: version,
            expected: DATASET_VERSION,
        });
    }
    let m = u32_at(12) as usize;
    let n = u64_at(16);
    let dt = f64_at(24);
    let t0 = f64_at(32);
    let speed = f64_at(40);
    if m < 2 {
        return Err(corrupt(format!("antenna count {m} < 2")));
    }
    if n == 0 || n > (u32::MAX as u64) {
        return Err(corrupt(format!("implausible record length {n}")));
    }
    let n = n as usize;
    let header = dataset_header_len(m);
    let expected = (m as u64)
        .checked_mul(m as u64)
        .and_then(|c| c.checked_mul(n as u64))
        .and_then(|c| c.checked_mul(8))
        .and_then(|c| c.checked_add(header as u64))
        .ok_or_else(|| corrupt("dimensions overflow".into()))?;
    let found = bytes.len() as u64;
    if found < expected {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected,
            found,
        });
    }
    if found > expected {
        return Err(corrupt(format!("{} trailing bytes", found - expected)));
    }

    let antennas = (0..m)
        .map(|i| {
            let o = FIXED_HEADER + 24 * i;
            [f64_at(o), f64_at(o + 8), f64_at(o + 16)]
        })
        .collect();
    let geom = ArrayGeometry::new(antennas, speed, dt).map_err(|e| corrupt(e.to_string()))?;
    let signals = bytes[header..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    BackscatterDataset::new(geom, n, t0, signals).map_err(|e| corrupt(e.to_string()))
}

pub fn save_dataset(ds: &BackscatterDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_dataset(ds)).map_err(|e| Error::io(path, e))
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<BackscatterDataset> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_dataset(&bytes, path)
}

/// Grid and normalization metadata written next to an exported map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapSidecar {
    pub origin: Point2,
    pub resolution: f64,
    pub dims: [usize; 2],
    pub mask: Option<Disk>,
    pub stride: usize,
    pub fine_region: Option<Region>,
    pub entries: usize,
    /// Energies mapped to gray 0 and 255.
    pub normalization: [f64; 2],
    /// PGM rows run from the highest `iy` (top) down to `iy = 0`.
    pub pgm_top_row_iy: usize,
}

/// Paths of the three files written by [`export_energy_map`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExportPaths {
    pub csv: PathBuf,
    pub pgm: PathBuf,
    pub json: PathBuf,
}

impl ExportPaths {
    pub fn from_prefix(prefix: impl AsRef<Path>) -> Self {
        let p = prefix.as_ref().as_os_str().to_owned();
        let with = |ext: &str| {
            let mut s = p.clone();
            s.push(ext);
            PathBuf::from(s)
        };
        Self {
            csv: with(".csv"),
            pgm: with(".pgm"),
            json: with(".json"),
        }
    }
}

pub fn energy_map_csv(map: &EnergyMap) -> String {
    let mut out = String::with_capacity(24 * map.len() + 16);
    out.push_str("ix,iy,energy\n");
    for (ix, iy, v) in map.iter() {
        // `Display` for f64 is the shortest string that parses back exactly.
        out.push_str(&format!("{ix},{iy},{v}\n"));
    }
    out
}

/// Binary 8-bit PGM of the rendered map, min-max normalized over the signed
/// range. A constant map renders all zero.
pub fn energy_map_pgm(map: &EnergyMap) -> (Vec<u8>, [f64; 2]) {
    let [w, h] = map.grid().dims();
    let (lo, hi) = map.min_max().unwrap_or((0.0, 0.0));
    let dense = map.render();
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    for iy in (0..h).rev() {
        for ix in 0..w {
            let g = match dense[iy * w + ix] {
                Some(v) if hi > lo => (255.0 * (v - lo) / (hi - lo)).round().clamp(0.0, 255.0) as u8,
                _ => 0,
            };
            out.push(g);
        }
    }
    (out, [lo, hi])
}

pub fn export_energy_map(map: &EnergyMap, prefix: impl AsRef<Path>) -> Result<ExportPaths> {
    if map.is_empty() {
        return Err(Error::InvalidConfig("refusing to export an empty energy map".into()));
    }
    let paths = ExportPaths::from_prefix(prefix);
    fs::write(&paths.csv, energy_map_csv(map)).map_err(|e| Error::io(&paths.csv, e))?;
    let (pgm, normalization) = energy_map_pgm(map);
    fs::write(&paths.pgm, pgm).map_err(|e| Error::io(&paths.pgm, e))?;
    let grid = map.grid();
    let sidecar = MapSidecar {
        origin: grid.origin(),
        resolution: grid.resolution(),
        dims: grid.dims(),
        mask: grid.mask(),
        stride: map.stride(),
        fine_region: map.fine_region(),
        entries: map.len(),
        normalization,
        pgm_top_row_iy: grid.dims()[1] - 1,
    };
    write_json(&sidecar, &paths.json)?;
    Ok(paths)
}

/// Parses an exported CSV back onto `grid`.
pub fn import_energy_map_csv(path: impl AsRef<Path>, grid: ImagingGrid, stride: usize) -> Result<EnergyMap> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |line: usize, reason: String| Error::MalformedCsv {
        path: path.to_path_buf(),
        line,
        reason,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "ix,iy,energy")) => {}
        _ => return Err(bad(1, "missing `ix,iy,energy` header".into())),
    }
    let mut map = EnergyMap::new(grid, stride);
    for (k, line) in lines {
        let mut fields = line.split(',');
        let (Some(a), Some(b), Some(c), None) = (fields.next(), fields.next(), fields.next(), fields.next()) else {
            return Err(bad(k + 1, format!("expected 3 fields in `{line}`")));
        };
        let ix = a.parse().map_err(|e| bad(k + 1, format!("ix: {e}")))?;
        let iy = b.parse().map_err(|e| bad(k + 1, format!("iy: {e}")))?;
        let v = c.parse().map_err(|e| bad(k + 1, format!("energy: {e}")))?;
        map.insert(ix, iy, v);
    }
    Ok(map)
}

/// Reads back an export written by [`export_energy_map`].
pub fn read_energy_map(prefix: impl AsRef<Path>) -> Result<EnergyMap> {
    let paths = ExportPaths::from_prefix(prefix);
    let sidecar: MapSidecar = read_json(&paths.json)?;
    let extent = [
        sidecar.dims[0] as f64 * sidecar.resolution,
        sidecar.dims[1] as f64 * sidecar.resolution,
    ];
    let mut grid = ImagingGrid::new(sidecar.origin, extent, sidecar.resolution)?;
    if let Some(mask) = sidecar.mask {
        grid = grid.with_mask(mask);
    }
    let mut map = import_energy_map_csv(&paths.csv, grid, sidecar.stride)?;
    map.set_fine_region(sidecar.fine_region);
    Ok(map)
}

pub fn write_json<T: Serialize>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    text.push('\n');
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Everything a framework run needs besides the dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub kind: BeamformerKind,
    pub mode: DecimationMode,
    pub frame_fraction: f64,
    pub n_min: usize,
    /// Final resolution, meters.
    pub resolution: f64,
    /// Imaged disk radius, meters; `None` uses the antenna ring's inscribed circle.
    pub fov_radius: Option<f64>,
    /// Overrides the propagation speed stored in the dataset.
    pub propagation_speed: Option<f64>,
    pub seed: u64,
    pub output: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            kind: BeamformerKind::Das,
            mode: DecimationMode::Automatic {
                min_tumor_diameter: 0.01,
            },
            frame_fraction: 0.25,
            n_min: 4,
            resolution: 0.001,
            fov_radius: None,
            propagation_speed: None,
            seed: 0,
            output: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.resolution) {
            return Err(Error::InvalidConfig(format!("resolution must be positive, got {}", self.resolution)));
        }
        if !(self.frame_fraction.is_finite() && (0.0..=1.0).contains(&self.frame_fraction)) {
            return Err(Error::InvalidConfig(format!(
                "frame fraction must lie in [0, 1], got {}",
                self.frame_fraction
            )));
        }
        if self.n_min < 1 {
            return Err(Error::InvalidConfig("n_min must be at least 1".into()));
        }
        if self.fov_radius.is_some_and(|r| !positive(r)) {
            return Err(Error::InvalidConfig("field-of-view radius must be positive".into()));
        }
        if self.propagation_speed.is_some_and(|v| !positive(v)) {
            return Err(Error::InvalidConfig("propagation speed must be positive".into()));
        }
        self.mode.factor(self.resolution).map(|_| ())
    }

    /// Masked grid over the imaged disk, centered on the antenna centroid.
    pub fn grid_for(&self, geom: &ArrayGeometry) -> Result<ImagingGrid> {
        let center = geom.planar_centroid();
        let radius = self.fov_radius.unwrap_or_else(|| geom.inscribed_radius(center));
        ImagingGrid::covering_disk(Disk { center, radius }, self.resolution)
    }

    pub fn framework_config(&self) -> crate::coarse2fine::FrameworkConfig {
        crate::coarse2fine::FrameworkConfig {
            frame_fraction: self.frame_fraction,
            n_min: self.n_min,
            min_tumor_diameter: match self.mode {
                DecimationMode::Automatic { min_tumor_diameter } => min_tumor_diameter,
                DecimationMode::Manual { .. } => 0.01,
            },
            ..Default::default()
        }
    }
}
