//! Timing/accounting comparison of classical and coarse-to-fine imaging.

use std::fmt::Write as _;
use std::time::Instant;

use anyhow::Result;
use mwimg::{run_framework, Beamformer, BackscatterDataset, BeamformerKind, DecimationMode, FrameworkConfig, ImagingGrid};
use serde::{Deserialize, Serialize};

/// One imaging strategy under test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BenchMode {
    /// Classical full-resolution image.
    Basic,
    Framework(DecimationMode),
}

impl BenchMode {
    pub fn family(&self) -> &'static str {
        match self {
            BenchMode::Basic => "basic",
            BenchMode::Framework(DecimationMode::Manual { .. }) => "manual",
            BenchMode::Framework(DecimationMode::Automatic { .. }) => "automatic",
        }
    }

    pub fn label(&self) -> String {
        match self {
            BenchMode::Basic => "basic".into(),
            BenchMode::Framework(DecimationMode::Manual { factor }) => format!("manual:{factor}"),
            BenchMode::Framework(DecimationMode::Automatic { min_tumor_diameter }) => {
                format!("auto:{}", min_tumor_diameter * 100.0)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    /// e.g. `automatic DMAS`.
    pub label: String,
    pub kind: BeamformerKind,
    pub mode: String,
    pub decimation_factor: usize,
    /// Median wall-clock seconds of the kernel passes.
    pub elapsed_s: f64,
    pub iterations: usize,
    pub evaluated_points: u64,
    pub full_equivalent_points: u64,
    /// Full-equivalent points over evaluated points.
    pub reduction_ratio: f64,
    /// Basic elapsed over this elapsed, when a basic run of the same kind exists.
    pub time_ratio: Option<f64>,
    pub detected_cell: [usize; 2],
    pub detected_position: [f64; 2],
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

pub fn run_one(
    ds: &BackscatterDataset,
    kind: BeamformerKind,
    mode: BenchMode,
    grid: &ImagingGrid,
    cfg: &FrameworkConfig,
    repeat: usize,
) -> Result<BenchRecord> {
    let mut times = Vec::with_capacity(repeat);
    let mut last = None;
    for _ in 0..repeat.max(1) {
        match mode {
            BenchMode::Basic => {
                let bf = Beamformer::new(ds, kind).with_interpolation(cfg.interpolation);
                let t = Instant::now();
                let map = bf.image(grid, &grid.full_region(), 1)?;
                times.push(t.elapsed().as_secs_f64());
                let (ix, iy, _) = map.argmax().expect("non-empty image");
                let points = bf.evaluated();
                last = Some((1, 0, points, points, [ix, iy]));
            }
            BenchMode::Framework(dm) => {
                let (_, report) = run_framework(ds, kind, grid, dm, cfg)?;
                times.push(report.elapsed.total());
                last = Some((
                    report.decimation_factor,
                    report.iterations,
                    report.coarse_points_evaluated + report.fine_points_evaluated,
                    report.full_equivalent_points,
                    report.detected_cell,
                ));
            }
        }
    }
    let (factor, iterations, evaluated, full, cell) = last.expect("at least one repetition");
    Ok(BenchRecord {
        label: format!("{} {}", mode.family(), kind.label().to_uppercase()),
        kind,
        mode: mode.label(),
        decimation_factor: factor,
        elapsed_s: median(times),
        iterations,
        evaluated_points: evaluated,
        full_equivalent_points: full,
        reduction_ratio: full as f64 / evaluated as f64,
        time_ratio: None,
        detected_cell: cell,
        detected_position: grid.cell_center(cell[0], cell[1]),
    })
}

pub fn run_bench(
    ds: &BackscatterDataset,
    kinds: &[BeamformerKind],
    modes: &[BenchMode],
    grid: &ImagingGrid,
    cfg: &FrameworkConfig,
    repeat: usize,
) -> Result<Vec<BenchRecord>> {
    let mut records = Vec::new();
    for &kind in kinds {
        let start = records.len();
        for &mode in modes {
            records.push(run_one(ds, kind, mode, grid, cfg, repeat)?);
        }
        let basic = records[start..]
            .iter()
            .find(|r| r.mode == "basic")
            .map(|r| r.elapsed_s);
        if let Some(basic) = basic {
            for r in &mut records[start..] {
                r.time_ratio = Some(basic / r.elapsed_s);
            }
        }
    }
    Ok(records)
}

pub fn to_csv(records: &[BenchRecord]) -> String {
    let mut out = String::from(
        "label,kind,mode,decimation_factor,elapsed_s,iterations,evaluated_points,full_equivalent_points,reduction_ratio,time_ratio,detected_ix,detected_iy,detected_x_m,detected_y_m\n",
    );
    for r in records {
        let time_ratio = r.time_ratio.map(|t| t.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.label,
            r.kind,
            r.mode,
            r.decimation_factor,
            r.elapsed_s,
            r.iterations,
            r.evaluated_points,
            r.full_equivalent_points,
            r.reduction_ratio,
            time_ratio,
            r.detected_cell[0],
            r.detected_cell[1],
            r.detected_position[0],
            r.detected_position[1],
        );
    }
    out
}

pub fn to_table(records: &[BenchRecord]) -> String {
    let mut out = format!(
        "{:<16} {:>4} {:>10} {:>6} {:>9} {:>9} {:>9}  {:>16}\n",
        "algorithm", "D", "time [ms]", "iters", "points", "pt ratio", "t ratio", "detected [cm]"
    );
    for r in records {
        let _ = writeln!(
            out,
            "{:<16} {:>4} {:>10.2} {:>6} {:>9} {:>9.2} {:>9}  ({:>6.2}, {:>6.2})",
            r.label,
            r.decimation_factor,
            r.elapsed_s * 1e3,
            r.iterations,
            r.evaluated_points,
            r.reduction_ratio,
            r.time_ratio.map(|t| format!("{t:.2}")).unwrap_or_else(|| "-".into()),
            r.detected_position[0] * 100.0,
            r.detected_position[1] * 100.0,
        );
    }
    out
}
