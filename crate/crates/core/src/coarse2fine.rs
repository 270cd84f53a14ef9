//! Coarse-to-fine tumor localization.
//!
//! 1. Evaluate the beamformer on a decimated set of focal points.
//! 2. Repeatedly split the current region into quadrants, score each one from
//!    its coarse energies and keep the best, widened by a sliding frame,
//!    while the between-class distance keeps growing and the within-class
//!    distance keeps shrinking.
//! 3. Re-image the final region at full resolution and composite it over the
//!    coarse background.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::beamform::{Beamformer, BeamformerKind, EnergyMap, Interpolation};
use crate::error::{Error, Result};
use crate::geometry::{ImagingGrid, Point2, Region};
use crate::sim::BackscatterDataset;

/// How the spatial decimation factor is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "mode")]
pub enum DecimationMode {
    /// Derived from the smallest tumor diameter (meters) that must not be
    /// skipped.
    Automatic { min_tumor_diameter: f64 },
    /// Fixed stride in final-resolution cells.
    Manual { factor: usize },
}

impl DecimationMode {
    pub fn factor(&self, resolution: f64) -> Result<usize> {
        match *self {
            DecimationMode::Automatic { min_tumor_diameter } => {
                if !(min_tumor_diameter.is_finite() && min_tumor_diameter > 0.0) {
                    return Err(Error::InvalidConfig(format!(
                        "minimum tumor diameter must be positive, got {min_tumor_diameter}"
                    )));
                }
                if !(resolution.is_finite() && resolution > 0.0) {
                    return Err(Error::InvalidConfig(format!("resolution must be positive, got {resolution}")));
                }
                Ok(auto_decimation_factor(min_tumor_diameter, resolution))
            }
            DecimationMode::Manual { factor } if factor >= 1 => Ok(factor),
            DecimationMode::Manual { factor } => {
                Err(Error::InvalidConfig(format!("decimation factor must be at least 1, got {factor}")))
            }
        }
    }
}

/// Largest stride that still drops a focal point inside the square inscribed
/// in a circular tumor of diameter `min_tumor_diameter`.
pub fn auto_decimation_factor(min_tumor_diameter: f64, resolution: f64) -> usize {
    let side = min_tumor_diameter / std::f64::consts::SQRT_2;
    // Absorb round-off so exact multiples are not floored one step short.
    ((side / resolution + 1e-9).floor() as usize).max(1)
}

fn mean_variance(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var)
}

/// Quadrant score and the statistics behind it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricValue {
    pub metric: f64,
    pub mean: f64,
    pub variance: f64,
    /// Mixing weight between mean (0) and variance (1) after clamping.
    pub weight: f64,
    /// Whether the raw weight fell outside `[0, 1]`.
    pub clamped: bool,
}

/// Blends mean and variance of `values` by the relative variance growth over
/// `prev_variance`: `(1 - w) * mean + w * variance` with
/// `w = clamp((var - prev_var) / var, 0, 1)`.
///
/// # Panics
/// If `values` is empty.
pub fn decision_metric(values: &[f64], prev_variance: f64) -> MetricValue {
    assert!(!values.is_empty(), "decision metric needs at least one value");
    let (mean, variance) = mean_variance(values);
    let (weight, clamped) = if variance == 0.0 {
        (0.0, false)
    } else {
        let raw = (variance - prev_variance) / variance;
        let w = raw.clamp(0.0, 1.0);
        (w, w != raw)
    };
    MetricValue {
        metric: (1.0 - weight) * mean + weight * variance,
        mean,
        variance,
        weight,
        clamped,
    }
}

/// Within-class (`W`) and between-class (`B`) scatter of two scalar classes.
pub fn class_distances(class_a: &[f64], class_b: &[f64]) -> (f64, f64) {
    let total = (class_a.len() + class_b.len()) as f64;
    let grand = (class_a.iter().sum::<f64>() + class_b.iter().sum::<f64>()) / total;
    let mut within = 0.0;
    let mut between = 0.0;
    for class in [class_a, class_b] {
        if class.is_empty() {
            continue;
        }
        let mean = class.iter().sum::<f64>() / class.len() as f64;
        within += class.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>();
        between += class.len() as f64 * (mean - grand) * (mean - grand);
    }
    (within, between)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameworkConfig {
    /// Sliding-frame growth per side, as a fraction of the quadrant side.
    pub frame_fraction: f64,
    /// Fewest coarse points a selected quadrant may hold.
    pub n_min: usize,
    /// Smallest tumor the consistency check must still resolve, meters.
    pub min_tumor_diameter: f64,
    pub interpolation: Interpolation,
}

impl Default for FrameworkConfig {
    fn default() -> Self {
        Self {
            frame_fraction: 0.25,
            n_min: 4,
            min_tumor_diameter: 0.01,
            interpolation: Interpolation::Linear,
        }
    }
}

impl FrameworkConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.frame_fraction.is_finite() && (0.0..=1.0).contains(&self.frame_fraction)) {
            return Err(Error::InvalidConfig(format!(
                "frame fraction must lie in [0, 1], got {}",
                self.frame_fraction
            )));
        }
        if self.n_min < 1 {
            return Err(Error::InvalidConfig("n_min must be at least 1".into()));
        }
        if !(self.min_tumor_diameter.is_finite() && self.min_tumor_diameter > 0.0) {
            return Err(Error::InvalidConfig("minimum tumor diameter must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadrantScore {
    pub region: Region,
    pub points: usize,
    /// `None` for quadrants without any coarse point.
    pub score: Option<MetricValue>,
}

/// One accepted subdivision step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub parent: Region,
    pub quadrants: Vec<QuadrantScore>,
    pub selected: usize,
    /// More than one quadrant shared the top score.
    pub tie: bool,
    pub expanded: Region,
    pub within: f64,
    pub between: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricTrace {
    pub records: Vec<IterationRecord>,
}

/// Why region selection stopped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "reason")]
pub enum Termination {
    /// The next step would not have grown `B` and shrunk `W`.
    DistanceCriteria { within: f64, between: f64 },
    /// The best quadrant held fewer than `n_min` coarse points.
    TooFewPoints { points: usize },
    /// The region can no longer be split in four.
    Unsplittable,
    /// Every coarse energy was equal; nothing to discriminate.
    Degenerate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoiSelection {
    pub region: Region,
    pub trace: MetricTrace,
    pub termination: Termination,
}

impl RoiSelection {
    pub fn iterations(&self) -> usize {
        self.trace.records.len()
    }

    pub fn is_degenerate(&self) -> bool {
        self.termination == Termination::Degenerate
    }
}

/// Narrows `breast_region` down to the quadrant chain most likely to hold
/// the tumor, using only the energies already present in `coarse`.
pub fn select_roi(coarse: &EnergyMap, breast_region: &Region, cfg: &FrameworkConfig) -> Result<RoiSelection> {
    cfg.validate()?;
    let mut prev_values = coarse.values_in(breast_region);
    if prev_values.is_empty() {
        return Err(Error::EmptyRegion(*breast_region));
    }
    let (_, mut prev_variance) = mean_variance(&prev_values);
    if prev_variance == 0.0 {
        log::warn!("coarse energies are all equal over {breast_region:?}; keeping the whole region");
        return Ok(RoiSelection {
            region: *breast_region,
            trace: MetricTrace::default(),
            termination: Termination::Degenerate,
        });
    }

    let mut current = *breast_region;
    let mut last_distances: Option<(f64, f64)> = None;
    let mut trace = MetricTrace::default();

    let termination = loop {
        let Some(quads) = current.quadrants() else {
            break Termination::Unsplittable;
        };
        let first = trace.records.is_empty();
        let mut scored = Vec::with_capacity(4);
        for q in quads {
            let values = coarse.values_in(&q);
            let score = (!values.is_empty()).then(|| {
                if first {
                    let (mean, variance) = mean_variance(&values);
                    MetricValue {
                        metric: variance,
                        mean,
                        variance,
                        weight: 1.0,
                        clamped: false,
                    }
                } else {
                    decision_metric(&values, prev_variance)
                }
            });
            scored.push((QuadrantScore {
                region: q,
                points: values.len(),
                score,
            }, values));
        }

        // Strict comparison keeps the lowest index on ties.
        let mut best: Option<(usize, f64)> = None;
        for (k, (qs, _)) in scored.iter().enumerate() {
            if let Some(s) = qs.score {
                if best.is_none_or(|(_, m)| s.metric > m) {
                    best = Some((k, s.metric));
                }
            }
        }
        let Some((selected, top)) = best else {
            break Termination::TooFewPoints { points: 0 };
        };
        let tie = scored
            .iter()
            .enumerate()
            .any(|(k, (qs, _))| k != selected && qs.score.is_some_and(|s| s.metric == top));
        if tie {
            log::debug!("quadrant tie at score {top}; keeping quadrant {selected}");
        }
        let points = scored[selected].0.points;
        if points < cfg.n_min {
            break Termination::TooFewPoints { points };
        }

        let expanded = scored[selected].0.region.expanded(cfg.frame_fraction, &current);
        let values = coarse.values_in(&expanded);
        let (within, between) = class_distances(&prev_values, &values);
        if let Some((prev_w, prev_b)) = last_distances {
            if !(between > prev_b && within < prev_w) {
                break Termination::DistanceCriteria { within, between };
            }
        }

        trace.records.push(IterationRecord {
            parent: current,
            quadrants: scored.into_iter().map(|(qs, _)| qs).collect(),
            selected,
            tie,
            expanded,
            within,
            between,
        });
        last_distances = Some((within, between));
        prev_variance = mean_variance(&values).1;
        prev_values = values;
        if expanded == current {
            // Clipping swallowed the whole frame; no further progress possible.
            break Termination::Unsplittable;
        }
        current = expanded;
    };

    Ok(RoiSelection {
        region: current,
        trace,
        termination,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub coarse: f64,
    pub selection: f64,
    pub fine: f64,
}

impl PhaseTimings {
    /// Kernel passes plus selection.
    pub fn total(&self) -> f64 {
        self.coarse + self.selection + self.fine
    }
}

/// Accounting for one framework run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameworkReport {
    pub kind: BeamformerKind,
    pub decimation_factor: usize,
    pub iterations: usize,
    pub final_region: Region,
    pub termination: Termination,
    pub coarse_points_evaluated: u64,
    pub fine_points_evaluated: u64,
    /// Focal points a classical full-resolution pass would evaluate.
    pub full_equivalent_points: u64,
    /// Beamformer kernel invocations, as counted by the beamformer itself.
    pub kernel_invocations: u64,
    pub reduction_ratio: f64,
    pub detected_cell: [usize; 2],
    pub detected_position: Point2,
    pub detected_energy: f64,
    /// Wall-clock seconds per phase.
    pub elapsed: PhaseTimings,
    pub trace: MetricTrace,
}

/// Runs all three phases and returns the composite image with its report.
pub fn run_framework(
    ds: &BackscatterDataset,
    kind: BeamformerKind,
    grid: &ImagingGrid,
    mode: DecimationMode,
    cfg: &FrameworkConfig,
) -> Result<(EnergyMap, FrameworkReport)> {
    cfg.validate()?;
    let stride = mode.factor(grid.resolution())?;
    let breast = grid.full_region();
    let bf = Beamformer::new(ds, kind).with_interpolation(cfg.interpolation);

    let t = Instant::now();
    let coarse = bf.image(grid, &breast, stride)?;
    let coarse_time = t.elapsed().as_secs_f64();
    let coarse_points = bf.evaluated();

    let t = Instant::now();
    let selection = select_roi(&coarse, &breast, cfg)?;
    let selection_time = t.elapsed().as_secs_f64();

    let t = Instant::now();
    // Cells the coarse pass already evaluated keep their (identical) values.
    let pending: Vec<_> = Beamformer::focal_cells(grid, &selection.region, 1)
        .into_iter()
        .filter(|&(ix, iy)| coarse.get(ix, iy).is_none())
        .collect();
    let fine = bf.evaluate_cells(grid, &pending, 1);
    let fine_time = t.elapsed().as_secs_f64();
    let fine_points = bf.evaluated() - coarse_points;

    let mut composite = coarse;
    composite.overlay(&fine);
    composite.set_fine_region(Some(selection.region));

    let full_equivalent = Beamformer::focal_cells(grid, &breast, 1).len() as u64;
    let (dx, dy, energy) = composite.argmax().expect("composite holds the fine pass");
    let report = FrameworkReport {
        kind,
        decimation_factor: stride,
        iterations: selection.iterations(),
        final_region: selection.region,
        termination: selection.termination,
        coarse_points_evaluated: coarse_points,
        fine_points_evaluated: fine_points,
        full_equivalent_points: full_equivalent,
        kernel_invocations: bf.evaluated(),
        reduction_ratio: full_equivalent as f64 / (coarse_points + fine_points) as f64,
        detected_cell: [dx, dy],
        detected_position: grid.cell_center(dx, dy),
        detected_energy: energy,
        elapsed: PhaseTimings {
            coarse: coarse_time,
            selection: selection_time,
            fine: fine_time,
        },
        trace: selection.trace,
    };
    Ok((composite, report))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "verdict")]
pub enum Verdict {
    /// Both runs agree; holds the overlap of their final regions.
    Confirmed { overlap: Region },
    Inconsistent { first: Region, second: Region },
}

impl Verdict {
    pub fn is_confirmed(&self) -> bool {
        matches!(self, Verdict::Confirmed { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub verdict: Verdict,
    pub factors: [usize; 2],
    /// Distance between the two runs' detected positions, meters.
    pub detected_separation: f64,
    pub first: FrameworkReport,
    pub second: FrameworkReport,
}

/// Runs the framework at two different decimation factors. Agreement on the
/// final region confirms a tumor; disagreement points at artifacts.
pub fn consistency_check(
    ds: &BackscatterDataset,
    kind: BeamformerKind,
    grid: &ImagingGrid,
    d1: usize,
    d2: usize,
    cfg: &FrameworkConfig,
) -> Result<ConsistencyReport> {
    cfg.validate()?;
    if d1 == d2 {
        return Err(Error::InvalidConfig(format!("decimation factors must differ, both are {d1}")));
    }
    let limit = auto_decimation_factor(cfg.min_tumor_diameter, grid.resolution());
    for d in [d1, d2] {
        if d == 0 || d > limit {
            return Err(Error::InvalidConfig(format!(
                "decimation factor {d} outside the acceptable range 1..={limit} for a {} m tumor",
                cfg.min_tumor_diameter
            )));
        }
    }
    let (_, first) = run_framework(ds, kind, grid, DecimationMode::Manual { factor: d1 }, cfg)?;
    let (_, second) = run_framework(ds, kind, grid, DecimationMode::Manual { factor: d2 }, cfg)?;
    let verdict = match first.final_region.intersection(&second.final_region) {
        Some(overlap) => Verdict::Confirmed { overlap },
        None => Verdict::Inconsistent {
            first: first.final_region,
            second: second.final_region,
        },
    };
    let [ax, ay] = first.detected_position;
    let [bx, by] = second.detected_position;
    Ok(ConsistencyReport {
        verdict,
        factors: [d1, d2],
        detected_separation: (ax - bx).hypot(ay - by),
        first,
        second,
    })
}
