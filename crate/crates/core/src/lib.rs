//! Confocal microwave imaging: multistatic DAS/DMAS beamformers, a
//! coarse-to-fine localization framework that skips most focal points, and a
//! point-scatterer backscatter simulator for generating test data.

pub mod beamform;
pub mod coarse2fine;
pub mod error;
pub mod geometry;
pub mod io;
pub mod sim;

pub use beamform::{Beamformer, BeamformerKind, EnergyMap, Interpolation};
pub use coarse2fine::{
    consistency_check, run_framework, select_roi, DecimationMode, FrameworkConfig, FrameworkReport, Verdict,
};
pub use error::{Error, Result};
pub use geometry::{ArrayGeometry, Disk, ImagingGrid, Point2, Point3, Region};
pub use sim::{BackscatterDataset, Phantom, Preset, Pulse, Scatterer, Scenario};
