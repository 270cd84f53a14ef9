//! Delay-and-sum and delay-multiply-and-sum synthesized-energy kernels.
//!
//! Every kernel aligns each channel by advancing it by the focal point's
//! round-trip delay, so that an echo arriving `n_ij(r)` samples late lands
//! at the same output sample on every channel, and then integrates over the
//! whole record.
//!
//! Per-point evaluation is strictly sequential, so an [`EnergyMap`] is
//! bit-identical regardless of how many worker threads evaluated it.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ImagingGrid, Point2, Region};
use crate::sim::BackscatterDataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BeamformerKind {
    Das,
    Dmas,
}

impl BeamformerKind {
    pub fn label(self) -> &'static str {
        match self {
            BeamformerKind::Das => "das",
            BeamformerKind::Dmas => "dmas",
        }
    }
}

impl std::fmt::Display for BeamformerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for BeamformerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "das" => Ok(BeamformerKind::Das),
            "dmas" => Ok(BeamformerKind::Dmas),
            other => Err(Error::InvalidConfig(format!("unknown beamformer `{other}` (das|dmas)"))),
        }
    }
}

/// How fractional sample delays are resolved.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interpolation {
    #[default]
    Linear,
    /// Round to the nearest whole sample.
    Nearest,
}

/// Which channels feed the kernel and which delay law aligns them.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Acquisition {
    /// All `M^2` channels, multistatic delays.
    #[default]
    Multistatic,
    /// Diagonal channels only, monostatic delays.
    Monostatic,
}

/// Adds `series(k - delay)` into `out[k]` (and its square into `sq[k]`),
/// reading samples outside the record as zero.
fn accumulate_shifted(
    series: &[f64],
    delay: f64,
    interp: Interpolation,
    out: &mut [f64],
    mut sq: Option<&mut [f64]>,
) {
    let n = series.len() as i64;
    let len = out.len() as i64;
    // out[k] reads series at position p = k - delay.
    let (base, frac) = match interp {
        Interpolation::Linear => {
            let fl = (-delay).floor();
            (fl as i64, -delay - fl)
        }
        Interpolation::Nearest => ((-delay).round() as i64, 0.0),
    };
    let w0 = 1.0 - frac;
    let w1 = frac;
    // Only k with base + k in [-1, n - 1] can touch the record.
    let k_start = (-1 - base).max(0);
    let k_end = (n - base).min(len);
    for k in k_start..k_end {
        let p = base + k;
        let a = if p >= 0 { series[p as usize] } else { 0.0 };
        let b = if p + 1 < n { series[(p + 1) as usize] } else { 0.0 };
        let v = w0 * a + w1 * b;
        out[k as usize] += v;
        if let Some(sq) = sq.as_deref_mut() {
            sq[k as usize] += v * v;
        }
    }
}

/// `output[k] = series(k - delay)` with the chosen interpolation; samples
/// outside the record read as zero.
pub fn shift_series(series: &[f64], delay: f64, interp: Interpolation) -> Vec<f64> {
    let mut out = vec![0.0; series.len()];
    accumulate_shifted(series, delay, interp, &mut out, None);
    out
}

/// Channel `(tx, rx)` advanced by `n_ij(r)` samples so that an echo from `r`
/// lines up at the same output sample on every channel.
pub fn aligned_channel(ds: &BackscatterDataset, tx: usize, rx: usize, r: &Point2) -> Vec<f64> {
    let delay = ds.geometry().delay_multistatic(tx, rx, r);
    shift_series(ds.channel(tx, rx), -delay, Interpolation::Linear)
}

#[derive(Default)]
struct Scratch {
    sum: Vec<f64>,
    sq: Vec<f64>,
}

fn kernel(
    ds: &BackscatterDataset,
    kind: BeamformerKind,
    acq: Acquisition,
    interp: Interpolation,
    r: &Point2,
    scratch: &mut Scratch,
) -> f64 {
    let n = ds.n_samples();
    let geom = ds.geometry();
    let m = ds.antenna_count();
    scratch.sum.clear();
    scratch.sum.resize(n, 0.0);
    let want_sq = kind == BeamformerKind::Dmas;
    if want_sq {
        scratch.sq.clear();
        scratch.sq.resize(n, 0.0);
    }
    let mut add = |i: usize, j: usize, delay: f64| {
        let sq = want_sq.then_some(scratch.sq.as_mut_slice());
        accumulate_shifted(ds.channel(i, j), -delay, interp, &mut scratch.sum, sq);
    };
    match acq {
        Acquisition::Multistatic => {
            for i in 0..m {
                for j in 0..m {
                    add(i, j, geom.delay_multistatic(i, j, r));
                }
            }
        }
        Acquisition::Monostatic => {
            for i in 0..m {
                add(i, i, geom.delay_monostatic(i, r));
            }
        }
    }
    match kind {
        BeamformerKind::Das => scratch.sum.iter().map(|s| s * s).sum(),
        // sum_{k<l} s_k s_l = ((sum s)^2 - sum s^2) / 2
        BeamformerKind::Dmas => scratch
            .sum
            .iter()
            .zip(&scratch.sq)
            .map(|(s, q)| 0.5 * (s * s - q))
            .sum(),
    }
}

/// Multistatic delay-and-sum energy at `r`.
pub fn das_energy(ds: &BackscatterDataset, r: &Point2) -> f64 {
    kernel(ds, BeamformerKind::Das, Acquisition::Multistatic, Interpolation::Linear, r, &mut Scratch::default())
}

/// Delay-multiply-and-sum energy at `r`: the sum over all distinct pairs of
/// the `M^2` aligned channels of their sample-wise products.
pub fn dmas_energy(ds: &BackscatterDataset, r: &Point2) -> f64 {
    kernel(ds, BeamformerKind::Dmas, Acquisition::Multistatic, Interpolation::Linear, r, &mut Scratch::default())
}

/// Monostatic delay-and-sum energy at `r`; only diagonal channels may carry
/// signal.
pub fn das_energy_monostatic(ds: &BackscatterDataset, r: &Point2) -> Result<f64> {
    if let Some((i, j)) = ds.first_cross_channel() {
        return Err(Error::NotMonostatic(i, j));
    }
    Ok(kernel(ds, BeamformerKind::Das, Acquisition::Monostatic, Interpolation::Linear, r, &mut Scratch::default()))
}

/// Sparse map from grid cell to synthesized energy.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyMap {
    grid: ImagingGrid,
    stride: usize,
    fine_region: Option<Region>,
    // Keyed (iy, ix) so iteration runs row by row.
    entries: BTreeMap<(usize, usize), f64>,
}

impl EnergyMap {
    pub fn new(grid: ImagingGrid, stride: usize) -> Self {
        Self {
            grid,
            stride: stride.max(1),
            fine_region: None,
            entries: BTreeMap::new(),
        }
    }

    pub fn grid(&self) -> &ImagingGrid {
        &self.grid
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    /// Region evaluated at full resolution inside a coarser map, if any.
    pub fn fine_region(&self) -> Option<Region> {
        self.fine_region
    }

    pub fn set_fine_region(&mut self, region: Option<Region>) {
        self.fine_region = region;
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(&mut self, ix: usize, iy: usize, energy: f64) {
        self.entries.insert((iy, ix), energy);
    }

    pub fn get(&self, ix: usize, iy: usize) -> Option<f64> {
        self.entries.get(&(iy, ix)).copied()
    }

    /// Entries as `(ix, iy, energy)`, ordered by `(iy, ix)`.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.entries.iter().map(|(&(iy, ix), &v)| (ix, iy, v))
    }

    /// Energies of the entries falling inside `region`.
    pub fn values_in(&self, region: &Region) -> Vec<f64> {
        self.entries
            .range((region.min[1], 0)..=(region.max[1], usize::MAX))
            .filter(|(&(_, ix), _)| (region.min[0]..=region.max[0]).contains(&ix))
            .map(|(_, &v)| v)
            .collect()
    }

    /// Cell with the largest energy; ties resolve to the first in row order.
    pub fn argmax(&self) -> Option<(usize, usize, f64)> {
        self.iter().fold(None, |best, cur| match best {
            Some(b) if b.2 >= cur.2 => Some(b),
            _ => Some(cur),
        })
    }

    pub fn min_max(&self) -> Option<(f64, f64)> {
        self.entries.values().fold(None, |acc, &v| match acc {
            None => Some((v, v)),
            Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
        })
    }

    /// Dense row-major image (`iy` outer). Cells without their own entry hold
    /// the value of their stride block's anchor; masked cells stay `None`.
    pub fn render(&self) -> Vec<Option<f64>> {
        let [w, h] = self.grid.dims();
        let d = self.stride;
        let mut out = Vec::with_capacity(w * h);
        for iy in 0..h {
            for ix in 0..w {
                let v = if !self.grid.is_active(ix, iy) {
                    None
                } else {
                    self.get(ix, iy).or_else(|| self.get(ix - ix % d, iy - iy % d))
                };
                out.push(v);
            }
        }
        out
    }

    /// Overwrites/extends this map with every entry of `other`.
    pub fn overlay(&mut self, other: &EnergyMap) {
        self.entries.extend(other.entries.iter().map(|(k, v)| (*k, *v)));
    }
}

/// A beamformer bound to one dataset. Counts every focal-point evaluation.
pub struct Beamformer<'a> {
    ds: &'a BackscatterDataset,
    kind: BeamformerKind,
    acquisition: Acquisition,
    interpolation: Interpolation,
    evaluated: AtomicU64,
}

impl<'a> Beamformer<'a> {
    pub fn new(ds: &'a BackscatterDataset, kind: BeamformerKind) -> Self {
        Self {
            ds,
            kind,
            acquisition: Acquisition::Multistatic,
            interpolation: Interpolation::Linear,
            evaluated: AtomicU64::new(0),
        }
    }

    /// Monostatic beamformer; fails if any cross channel carries signal.
    pub fn monostatic(ds: &'a BackscatterDataset, kind: BeamformerKind) -> Result<Self> {
        if let Some((i, j)) = ds.first_cross_channel() {
            return Err(Error::NotMonostatic(i, j));
        }
        Ok(Self {
            acquisition: Acquisition::Monostatic,
            ..Self::new(ds, kind)
        })
    }

    pub fn with_interpolation(mut self, interpolation: Interpolation) -> Self {
        self.interpolation = interpolation;
        self
    }

    pub fn kind(&self) -> BeamformerKind {
        self.kind
    }

    pub fn dataset(&self) -> &BackscatterDataset {
        self.ds
    }

    /// Number of focal points evaluated so far.
    pub fn evaluated(&self) -> u64 {
        self.evaluated.load(Ordering::Relaxed)
    }

    pub fn energy(&self, r: &Point2) -> f64 {
        self.evaluated.fetch_add(1, Ordering::Relaxed);
        kernel(self.ds, self.kind, self.acquisition, self.interpolation, r, &mut Scratch::default())
    }

    /// Cells of `region` that a stride-`stride` pass evaluates: active cells
    /// whose absolute indices are multiples of `stride` on both axes.
    pub fn focal_cells(grid: &ImagingGrid, region: &Region, stride: usize) -> Vec<(usize, usize)> {
        let stride = stride.max(1);
        region
            .cells()
            .filter(|&(ix, iy)| ix % stride == 0 && iy % stride == 0 && grid.is_active(ix, iy))
            .collect()
    }

    /// Evaluates the kernel on every stride-aligned active cell of `region`.
    pub fn image(&self, grid: &ImagingGrid, region: &Region, stride: usize) -> Result<EnergyMap> {
        if stride == 0 {
            return Err(Error::InvalidConfig("stride must be at least 1".into()));
        }
        if !grid.contains_region(region) {
            return Err(Error::InvalidRegion(format!(
                "{region:?} exceeds grid dims {:?}",
                grid.dims()
            )));
        }
        let cells = Self::focal_cells(grid, region, stride);
        if cells.is_empty() {
            return Err(Error::EmptyRegion(*region));
        }
        Ok(self.evaluate_cells(grid, &cells, stride))
    }

    /// Evaluates the kernel at the given cell centers.
    pub fn evaluate_cells(&self, grid: &ImagingGrid, cells: &[(usize, usize)], stride: usize) -> EnergyMap {
        let values: Vec<f64> = cells
            .par_iter()
            .map_init(Scratch::default, |scratch, &(ix, iy)| {
                let r = grid.cell_center(ix, iy);
                kernel(self.ds, self.kind, self.acquisition, self.interpolation, &r, scratch)
            })
            .collect();
        self.evaluated.fetch_add(cells.len() as u64, Ordering::Relaxed);

        let mut map = EnergyMap::new(grid.clone(), stride);
        for (&(ix, iy), v) in cells.iter().zip(values) {
            map.insert(ix, iy, v);
        }
        map
    }
}
