//! Synthetic multistatic backscatter for a circular phantom holding point
//! scatterers.
//!
//! The forward model is a single-bounce point-scatterer model in a
//! homogeneous background: every transmit/receive pair sees a delayed,
//! spherically-spread copy of the excitation pulse from each scatterer. No
//! skin layer, no clutter.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ring_array, ArrayGeometry, Point2, SPEED_OF_LIGHT};

/// Lower bound on the `d_tx * d_rx` product used for geometric spreading, in m².
pub const SPREADING_FLOOR: f64 = 1e-6;

/// Gaussian-modulated sinusoid used as the excitation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pulse {
    /// Carrier frequency, Hz.
    pub center_frequency: f64,
    /// Gaussian envelope standard deviation, seconds.
    pub envelope_width: f64,
    /// Total pulse length, seconds. The envelope peaks at half of it.
    pub duration: f64,
}

impl Default for Pulse {
    fn default() -> Self {
        Self {
            center_frequency: 4e9,
            envelope_width: 100e-12,
            duration: 1e-9,
        }
    }
}

impl Pulse {
    pub fn center_time(&self) -> f64 {
        self.duration / 2.0
    }

    /// `exp(-(t - tc)^2 / (2 tau^2)) * cos(2 pi fc (t - tc))`
    pub fn amplitude(&self, t: f64) -> f64 {
        let u = t - self.center_time();
        let tau = self.envelope_width;
        (-(u * u) / (2.0 * tau * tau)).exp()
            * (std::f64::consts::TAU * self.center_frequency * u).cos()
    }

    fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if ok(self.center_frequency) && ok(self.envelope_width) && ok(self.duration) {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("pulse parameters must be positive: {self:?}")))
        }
    }
}

/// A point scatterer standing in for a tumor of the given diameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scatterer {
    pub center: Point2,
    pub diameter: f64,
    /// Reflectivity amplitude.
    pub contrast: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phantom {
    pub center: Point2,
    pub radius: f64,
    /// Empty for a tumor-free phantom.
    pub scatterers: Vec<Scatterer>,
}

impl Phantom {
    pub fn with_tumor(center: Point2, radius: f64, tumor: Scatterer) -> Self {
        Self {
            center,
            radius,
            scatterers: vec![tumor],
        }
    }

    pub fn tumor_free(center: Point2, radius: f64) -> Self {
        Self {
            center,
            radius,
            scatterers: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.radius.is_finite() && self.radius > 0.0) {
            return Err(Error::InvalidPhantom(format!("radius must be positive, got {}", self.radius)));
        }
        for (k, s) in self.scatterers.iter().enumerate() {
            if !(s.diameter.is_finite() && s.diameter > 0.0) {
                return Err(Error::InvalidPhantom(format!("scatterer {k}: diameter must be positive")));
            }
            if !(s.contrast.is_finite() && s.contrast >= 0.0) {
                return Err(Error::InvalidPhantom(format!("scatterer {k}: contrast must be non-negative")));
            }
            let off = ((s.center[0] - self.center[0]).powi(2) + (s.center[1] - self.center[1]).powi(2)).sqrt();
            if off.is_nan() || off + s.diameter / 2.0 >= self.radius {
                return Err(Error::InvalidPhantom(format!(
                    "scatterer {k} at {:?} (diameter {}) is not strictly inside the phantom",
                    s.center, s.diameter
                )));
            }
        }
        Ok(())
    }
}

/// Multistatic record: `M x M` channels of `N` samples, channel `(i, j)`
/// being transmit antenna `i`, receive antenna `j`. Sample `k` is taken at
/// `t0 + k * dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct BackscatterDataset {
    geometry: ArrayGeometry,
    n_samples: usize,
    t0: f64,
    signals: Vec<f64>,
}

impl BackscatterDataset {
    /// `signals` holds the channels in row-major `(i, j)` order.
    pub fn new(geometry: ArrayGeometry, n_samples: usize, t0: f64, signals: Vec<f64>) -> Result<Self> {
        let m = geometry.len();
        if n_samples == 0 {
            return Err(Error::InvalidDataset("record length is zero".into()));
        }
        if !t0.is_finite() {
            return Err(Error::InvalidDataset("start time is not finite".into()));
        }
        if signals.len() != m * m * n_samples {
            return Err(Error::InvalidDataset(format!(
                "expected {} samples for {m}x{m} channels of {n_samples}, got {}",
                m * m * n_samples,
                signals.len()
            )));
        }
        Ok(Self {
            geometry,
            n_samples,
            t0,
            signals,
        })
    }

    pub fn zeros(geometry: ArrayGeometry, n_samples: usize, t0: f64) -> Result<Self> {
        let len = geometry.len() * geometry.len() * n_samples;
        Self::new(geometry, n_samples, t0, vec![0.0; len])
    }

    pub fn geometry(&self) -> &ArrayGeometry {
        &self.geometry
    }

    pub fn antenna_count(&self) -> usize {
        self.geometry.len()
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn signals(&self) -> &[f64] {
        &self.signals
    }

    pub fn channel(&self, tx: usize, rx: usize) -> &[f64] {
        let start = (tx * self.antenna_count() + rx) * self.n_samples;
        &self.signals[start..start + self.n_samples]
    }

    pub fn channel_mut(&mut self, tx: usize, rx: usize) -> &mut [f64] {
        let start = (tx * self.antenna_count() + rx) * self.n_samples;
        &mut self.signals[start..start + self.n_samples]
    }

    /// Replaces the propagation speed carried by the geometry.
    pub fn with_propagation_speed(mut self, speed: f64) -> Result<Self> {
        self.geometry = self.geometry.with_propagation_speed(speed)?;
        Ok(self)
    }

    /// First off-diagonal channel carrying a nonzero sample, if any.
    pub fn first_cross_channel(&self) -> Option<(usize, usize)> {
        let m = self.antenna_count();
        (0..m)
            .flat_map(|i| (0..m).map(move |j| (i, j)))
            .filter(|(i, j)| i != j)
            .find(|&(i, j)| self.channel(i, j).iter().any(|&v| v != 0.0))
    }

    pub fn is_monostatic(&self) -> bool {
        self.first_cross_channel().is_none()
    }

    /// Copy with every off-diagonal channel zeroed.
    pub fn to_monostatic(&self) -> Self {
        let mut out = self.clone();
        let m = out.antenna_count();
        for i in 0..m {
            for j in 0..m {
                if i != j {
                    out.channel_mut(i, j).fill(0.0);
                }
            }
        }
        out
    }

    /// Scales every sample, mainly for equivariance checks.
    pub fn scaled(&self, alpha: f64) -> Self {
        let mut out = self.clone();
        out.signals.iter_mut().for_each(|v| *v *= alpha);
        out
    }
}

/// Physical round-trip time `(d_tx + d_rx) / v` from antenna `tx` via `p` to
/// antenna `rx`.
pub fn round_trip_time(geom: &ArrayGeometry, tx: usize, rx: usize, p: &Point2) -> f64 {
    (geom.distance(tx, p) + geom.distance(rx, p)) / geom.propagation_speed()
}

/// Samples needed so that every scatterer echo, including the full pulse,
/// lands inside a record starting at `t = 0`.
pub fn required_samples(phantom: &Phantom, geom: &ArrayGeometry, pulse: &Pulse) -> usize {
    let m = geom.len();
    let longest = phantom
        .scatterers
        .iter()
        .flat_map(|s| {
            (0..m).flat_map(move |i| (0..m).map(move |j| round_trip_time(geom, i, j, &s.center)))
        })
        .fold(0.0_f64, f64::max);
    ((longest + pulse.duration) / geom.sample_interval()).ceil() as usize + 1
}

/// Generates a backscatter record starting at `t0 = 0`:
/// `Y_ij[k] = sum_s contrast_s * pulse(t_k - tau_ij,s) / max(d_i d_j, floor) + noise`.
pub fn simulate(
    phantom: &Phantom,
    geom: &ArrayGeometry,
    pulse: &Pulse,
    n_samples: usize,
    noise_std: f64,
    seed: u64,
) -> Result<BackscatterDataset> {
    phantom.validate()?;
    pulse.validate()?;
    if !(noise_std.is_finite() && noise_std >= 0.0) {
        return Err(Error::InvalidConfig(format!("noise std must be non-negative, got {noise_std}")));
    }
    let needed = required_samples(phantom, geom, pulse);
    if n_samples < needed {
        return Err(Error::RecordTooShort {
            needed,
            available: n_samples,
        });
    }

    let t0 = 0.0;
    let dt = geom.sample_interval();
    let m = geom.len();
    let mut ds = BackscatterDataset::zeros(geom.clone(), n_samples, t0)?;
    for i in 0..m {
        for j in 0..m {
            let channel = ds.channel_mut(i, j);
            for s in &phantom.scatterers {
                if s.contrast == 0.0 {
                    continue;
                }
                let di = geom.distance(i, &s.center);
                let dj = geom.distance(j, &s.center);
                let amp = s.contrast / (di * dj).max(SPREADING_FLOOR);
                let tau = (di + dj) / geom.propagation_speed();
                for (k, y) in channel.iter_mut().enumerate() {
                    *y += amp * pulse.amplitude(t0 + k as f64 * dt - tau);
                }
            }
        }
    }

    if noise_std > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, noise_std).expect("noise std validated above");
        for y in ds.signals.iter_mut() {
            *y += normal.sample(&mut rng);
        }
    }
    Ok(ds)
}

/// The two reference acquisitions: a 12-antenna ring on the skin of a
/// circular phantom with a 1 cm tumor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// 10 cm radius phantom, tumor at (-2, -3) cm.
    Dataset1,
    /// 5 cm radius phantom, tumor at (2, 0) cm.
    Dataset2,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dataset1" => Ok(Preset::Dataset1),
            "dataset2" => Ok(Preset::Dataset2),
            other => Err(Error::InvalidConfig(format!("unknown preset `{other}`"))),
        }
    }
}

/// Everything needed to regenerate a preset acquisition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub phantom: Phantom,
    pub antennas: usize,
    pub ring_radius: f64,
    pub propagation_speed: f64,
    pub sample_interval: f64,
    pub pulse: Pulse,
    pub noise_std: f64,
    pub seed: u64,
}

impl Scenario {
    pub fn preset(preset: Preset) -> Self {
        let (radius, tumor) = match preset {
            Preset::Dataset1 => (0.10, [-0.02, -0.03]),
            Preset::Dataset2 => (0.05, [0.02, 0.0]),
        };
        Self::ring(radius, Some(tumor))
    }

    /// 12-antenna ring at the phantom surface with the default pulse and
    /// sampling; `tumor` places a 1 cm, unit-contrast scatterer.
    pub fn ring(radius: f64, tumor: Option<Point2>) -> Self {
        let center = [0.0, 0.0];
        let phantom = match tumor {
            Some(t) => Phantom::with_tumor(
                center,
                radius,
                Scatterer {
                    center: t,
                    diameter: 0.01,
                    contrast: 1.0,
                },
            ),
            None => Phantom::tumor_free(center, radius),
        };
        Self {
            phantom,
            antennas: 12,
            ring_radius: radius,
            propagation_speed: SPEED_OF_LIGHT,
            sample_interval: 10e-12,
            pulse: Pulse::default(),
            noise_std: 0.0,
            seed: 0,
        }
    }

    pub fn geometry(&self) -> Result<ArrayGeometry> {
        ring_array(
            self.antennas,
            self.ring_radius,
            self.phantom.center,
            self.propagation_speed,
            self.sample_interval,
        )
    }

    /// Record length covering a round trip across the whole ring plus the
    /// pulse, so tumor-free scenarios get the same window as tumor ones.
    pub fn record_length(&self) -> usize {
        let across = 4.0 * self.ring_radius / self.propagation_speed;
        ((across + self.pulse.duration) / self.sample_interval).ceil() as usize + 1
    }

    pub fn simulate(&self) -> Result<BackscatterDataset> {
        let geom = self.geometry()?;
        let n = self.record_length().max(required_samples(&self.phantom, &geom, &self.pulse));
        simulate(&self.phantom, &geom, &self.pulse, n, self.noise_std, self.seed)
    }
}
