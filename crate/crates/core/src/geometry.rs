//! Antenna-array and imaging-grid geometry, plus the round-trip delay math.
//!
//! Imaging happens on a z = 0 slice. Antennas are full 3-D positions so an
//! out-of-plane array still produces correct path lengths; focal points are
//! 2-D and implicitly sit at z = 0.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Vacuum speed of light in m/s.
pub const SPEED_OF_LIGHT: f64 = 2.997_924_58e8;

/// A 2-D position on the imaging plane, in meters.
pub type Point2 = [f64; 2];
/// A 3-D antenna position, in meters.
pub type Point3 = [f64; 3];

#[inline]
fn distance_to_plane_point(a: &Point3, r: &Point2) -> f64 {
    let dx = r[0] - a[0];
    let dy = r[1] - a[1];
    let dz = a[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// Antenna positions together with the propagation speed and sampling
/// interval that turn path lengths into sample delays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    antennas: Vec<Point3>,
    propagation_speed: f64,
    sample_interval: f64,
}

impl ArrayGeometry {
    pub fn new(antennas: Vec<Point3>, propagation_speed: f64, sample_interval: f64) -> Result<Self> {
        if antennas.len() < 2 {
            return Err(Error::InvalidGeometry(format!(
                "need at least 2 antennas, got {}",
                antennas.len()
            )));
        }
        if antennas.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::InvalidGeometry("antenna position is not finite".into()));
        }
        if !(propagation_speed.is_finite() && propagation_speed > 0.0) {
            return Err(Error::InvalidGeometry(format!(
                "propagation speed must be positive, got {propagation_speed}"
            )));
        }
        if !(sample_interval.is_finite() && sample_interval > 0.0) {
            return Err(Error::InvalidGeometry(format!(
                "sample interval must be positive, got {sample_interval}"
            )));
        }
        for (i, a) in antennas.iter().enumerate() {
            for (j, b) in antennas.iter().enumerate().skip(i + 1) {
                if a == b {
                    return Err(Error::InvalidGeometry(format!(
                        "antennas {i} and {j} share a position"
                    )));
                }
            }
        }
        Ok(Self {
            antennas,
            propagation_speed,
            sample_interval,
        })
    }

    pub fn antennas(&self) -> &[Point3] {
        &self.antennas
    }

    pub fn len(&self) -> usize {
        self.antennas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.antennas.is_empty()
    }

    pub fn propagation_speed(&self) -> f64 {
        self.propagation_speed
    }

    pub fn sample_interval(&self) -> f64 {
        self.sample_interval
    }

    /// Same antennas, different propagation speed.
    pub fn with_propagation_speed(&self, speed: f64) -> Result<Self> {
        Self::new(self.antennas.clone(), speed, self.sample_interval)
    }

    /// One-way distance from antenna `i` to focal point `r`.
    #[inline]
    pub fn distance(&self, i: usize, r: &Point2) -> f64 {
        distance_to_plane_point(&self.antennas[i], r)
    }

    /// Monostatic delay in samples: `|r - r_i| / (2 v dt)`.
    ///
    /// The factor 2 sits in the denominator exactly as in the classical
    /// monostatic formula; the distance is the plain one-way distance.
    #[inline]
    pub fn delay_monostatic(&self, i: usize, r: &Point2) -> f64 {
        self.distance(i, r) / (2.0 * self.propagation_speed * self.sample_interval)
    }

    /// Multistatic delay in samples: `(|r - r_tx| + |r - r_rx|) / (v dt)`.
    #[inline]
    pub fn delay_multistatic(&self, tx: usize, rx: usize, r: &Point2) -> f64 {
        let scale = self.propagation_speed * self.sample_interval;
        self.distance(tx, r) / scale + self.distance(rx, r) / scale
    }

    /// Centroid of the antenna positions projected on the imaging plane.
    pub fn planar_centroid(&self) -> Point2 {
        let n = self.antennas.len() as f64;
        let (sx, sy) = self
            .antennas
            .iter()
            .fold((0.0, 0.0), |(sx, sy), a| (sx + a[0], sy + a[1]));
        [sx / n, sy / n]
    }

    /// Smallest in-plane distance from `center` to any antenna.
    pub fn inscribed_radius(&self, center: Point2) -> f64 {
        self.antennas
            .iter()
            .map(|a| ((a[0] - center[0]).powi(2) + (a[1] - center[1]).powi(2)).sqrt())
            .fold(f64::INFINITY, f64::min)
    }
}

/// Builds `n` antennas uniformly spaced on a circle in the z = 0 plane, the
/// first one at angle zero.
pub fn ring_array(
    n: usize,
    radius: f64,
    center: Point2,
    propagation_speed: f64,
    sample_interval: f64,
) -> Result<ArrayGeometry> {
    if n < 2 {
        return Err(Error::InvalidGeometry(format!("ring needs at least 2 antennas, got {n}")));
    }
    if !(radius.is_finite() && radius > 0.0) {
        return Err(Error::InvalidGeometry(format!("ring radius must be positive, got {radius}")));
    }
    let antennas = (0..n)
        .map(|k| {
            let theta = std::f64::consts::TAU * k as f64 / n as f64;
            [center[0] + radius * theta.cos(), center[1] + radius * theta.sin(), 0.0]
        })
        .collect();
    ArrayGeometry::new(antennas, propagation_speed, sample_interval)
}

/// Disk of focal points that are actually imaged; cells outside are skipped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Disk {
    pub center: Point2,
    pub radius: f64,
}

impl Disk {
    pub fn contains(&self, p: &Point2) -> bool {
        let dx = p[0] - self.center[0];
        let dy = p[1] - self.center[1];
        dx * dx + dy * dy <= self.radius * self.radius
    }
}

/// Regular grid of focal points at the final (finest) resolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImagingGrid {
    origin: Point2,
    resolution: f64,
    dims: [usize; 2],
    mask: Option<Disk>,
}

impl ImagingGrid {
    /// Grid covering `extent` (width, height) from `origin`; the cell counts
    /// are `ceil(extent / resolution)`.
    pub fn new(origin: Point2, extent: [f64; 2], resolution: f64) -> Result<Self> {
        if !(resolution.is_finite() && resolution > 0.0) {
            return Err(Error::InvalidGrid(format!("resolution must be positive, got {resolution}")));
        }
        if origin.iter().chain(extent.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidGrid("grid origin/extent must be finite".into()));
        }
        // Tolerate round-off so that 0.2 / 0.001 gives 200 and not 201.
        let count = |e: f64| -> usize {
            let q = e / resolution;
            let r = q.round();
            if (q - r).abs() < 1e-9 * q.abs().max(1.0) {
                r.max(0.0) as usize
            } else {
                q.ceil().max(0.0) as usize
            }
        };
        let dims = [count(extent[0]), count(extent[1])];
        if dims[0] == 0 || dims[1] == 0 {
            return Err(Error::InvalidGrid(format!("grid has no cells: extent {extent:?}")));
        }
        Ok(Self {
            origin,
            resolution,
            dims,
            mask: None,
        })
    }

    /// Square grid over the bounding box of `disk`, masked to the disk.
    pub fn covering_disk(disk: Disk, resolution: f64) -> Result<Self> {
        if !(disk.radius.is_finite() && disk.radius > 0.0) {
            return Err(Error::InvalidGrid(format!("disk radius must be positive, got {}", disk.radius)));
        }
        let origin = [disk.center[0] - disk.radius, disk.center[1] - disk.radius];
        let side = 2.0 * disk.radius;
        Ok(Self::new(origin, [side, side], resolution)?.with_mask(disk))
    }

    pub fn with_mask(mut self, disk: Disk) -> Self {
        self.mask = Some(disk);
        self
    }

    pub fn origin(&self) -> Point2 {
        self.origin
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn dims(&self) -> [usize; 2] {
        self.dims
    }

    pub fn mask(&self) -> Option<Disk> {
        self.mask
    }

    pub fn cell_center(&self, ix: usize, iy: usize) -> Point2 {
        [
            self.origin[0] + (ix as f64 + 0.5) * self.resolution,
            self.origin[1] + (iy as f64 + 0.5) * self.resolution,
        ]
    }

    /// Cell containing `p`, or `None` when `p` lies outside the grid.
    pub fn cell_of(&self, p: Point2) -> Option<(usize, usize)> {
        let fx = ((p[0] - self.origin[0]) / self.resolution).floor();
        let fy = ((p[1] - self.origin[1]) / self.resolution).floor();
        if fx < 0.0 || fy < 0.0 {
            return None;
        }
        let (ix, iy) = (fx as usize, fy as usize);
        (ix < self.dims[0] && iy < self.dims[1]).then_some((ix, iy))
    }

    /// Whether the cell is imaged at all (inside the mask, if any).
    pub fn is_active(&self, ix: usize, iy: usize) -> bool {
        match &self.mask {
            Some(disk) => disk.contains(&self.cell_center(ix, iy)),
            None => true,
        }
    }

    pub fn full_region(&self) -> Region {
        Region {
            min: [0, 0],
            max: [self.dims[0] - 1, self.dims[1] - 1],
        }
    }

    pub fn contains_region(&self, region: &Region) -> bool {
        region.max[0] < self.dims[0] && region.max[1] < self.dims[1]
    }
}

/// Axis-aligned block of grid cells with inclusive bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Region {
    pub min: [usize; 2],
    pub max: [usize; 2],
}

impl Region {
    pub fn new(min: [usize; 2], max: [usize; 2]) -> Result<Self> {
        if min[0] > max[0] || min[1] > max[1] {
            return Err(Error::InvalidRegion(format!("min {min:?} exceeds max {max:?}")));
        }
        Ok(Self { min, max })
    }

    pub fn width(&self) -> usize {
        self.max[0] - self.min[0] + 1
    }

    pub fn height(&self) -> usize {
        self.max[1] - self.min[1] + 1
    }

    pub fn area(&self) -> usize {
        self.width() * self.height()
    }

    pub fn contains(&self, ix: usize, iy: usize) -> bool {
        (self.min[0]..=self.max[0]).contains(&ix) && (self.min[1]..=self.max[1]).contains(&iy)
    }

    pub fn contains_region(&self, other: &Region) -> bool {
        self.contains(other.min[0], other.min[1]) && self.contains(other.max[0], other.max[1])
    }

    pub fn intersection(&self, other: &Region) -> Option<Region> {
        let min = [self.min[0].max(other.min[0]), self.min[1].max(other.min[1])];
        let max = [self.max[0].min(other.max[0]), self.max[1].min(other.max[1])];
        (min[0] <= max[0] && min[1] <= max[1]).then_some(Region { min, max })
    }

    pub fn cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (self.min[1]..=self.max[1])
            .flat_map(move |iy| (self.min[0]..=self.max[0]).map(move |ix| (ix, iy)))
    }

    /// Whether the region can be cut into four non-empty quadrants.
    pub fn can_split(&self) -> bool {
        self.width() >= 2 && self.height() >= 2
    }

    /// Splits into four quadrants ordered (low x, low y), (high x, low y),
    /// (low x, high y), (high x, high y). Odd lengths put the extra cell in
    /// the low-index half.
    pub fn quadrants(&self) -> Option<[Region; 4]> {
        if !self.can_split() {
            return None;
        }
        let split = |lo: usize, len: usize| lo + len.div_ceil(2);
        let sx = split(self.min[0], self.width());
        let sy = split(self.min[1], self.height());
        let q = |x0, x1, y0, y1| Region {
            min: [x0, y0],
            max: [x1, y1],
        };
        Some([
            q(self.min[0], sx - 1, self.min[1], sy - 1),
            q(sx, self.max[0], self.min[1], sy - 1),
            q(self.min[0], sx - 1, sy, self.max[1]),
            q(sx, self.max[0], sy, self.max[1]),
        ])
    }

    /// Grows every side by `ceil(fraction * side_length)` cells, clipped to
    /// `bounds`.
    pub fn expanded(&self, fraction: f64, bounds: &Region) -> Region {
        let mx = (fraction * self.width() as f64).ceil() as usize;
        let my = (fraction * self.height() as f64).ceil() as usize;
        Region {
            min: [
                self.min[0].saturating_sub(mx).max(bounds.min[0]),
                self.min[1].saturating_sub(my).max(bounds.min[1]),
            ],
            max: [
                (self.max[0] + mx).min(bounds.max[0]),
                (self.max[1] + my).min(bounds.max[1]),
            ],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(tx: Point3, rx: Point3, speed: f64, dt: f64) -> ArrayGeometry {
        ArrayGeometry::new(vec![tx, rx], speed, dt).unwrap()
    }

    #[test]
    fn monostatic_zero_at_antenna() {
        let g = pair([0.05, 0.0, 0.0], [-0.05, 0.0, 0.0], 3e8, 1e-10);
        assert_eq!(g.delay_monostatic(0, &[0.05, 0.0]), 0.0);
    }

    #[test]
    fn monostatic_hand_value() {
        let g = pair([0.0, 0.0, 0.0], [1.0, 1.0, 0.0], 3e8, 1e-10);
        let d = g.delay_monostatic(0, &[0.03, 0.0]);
        assert!((d - 0.5).abs() < 1e-12, "{d}");
    }

    #[test]
    fn monostatic_scales_inversely_with_dt() {
        let g1 = pair([0.0, 0.0, 0.0], [1.0, 1.0, 0.0], 3e8, 1e-10);
        let g2 = pair([0.0, 0.0, 0.0], [1.0, 1.0, 0.0], 3e8, 2e-10);
        let r = [0.017, -0.04];
        let ratio = g1.delay_monostatic(0, &r) / g2.delay_monostatic(0, &r);
        assert!((ratio - 2.0).abs() < 1e-12);
    }

    #[test]
    fn multistatic_hand_value() {
        let g = pair([0.1, 0.0, 0.0], [-0.1, 0.0, 0.0], SPEED_OF_LIGHT, 1e-10);
        let d = g.delay_multistatic(0, 1, &[0.0, 0.0]);
        let expected = 0.2 / (SPEED_OF_LIGHT * 1e-10);
        assert!((d - expected).abs() < 1e-12);
        assert!((d - 6.6713).abs() < 1e-4);
        assert_eq!(d, g.delay_multistatic(1, 0, &[0.0, 0.0]));
    }

    #[test]
    fn multistatic_self_pair_at_antenna_is_zero() {
        let g = pair([0.1, 0.0, 0.0], [-0.1, 0.0, 0.0], SPEED_OF_LIGHT, 1e-10);
        assert_eq!(g.delay_multistatic(0, 0, &[0.1, 0.0]), 0.0);
    }

    #[test]
    fn ring_of_four() {
        let g = ring_array(4, 1.0, [0.0, 0.0], SPEED_OF_LIGHT, 1e-11).unwrap();
        let expected = [[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]];
        for (a, e) in g.antennas().iter().zip(expected) {
            assert!((a[0] - e[0]).abs() < 1e-12 && (a[1] - e[1]).abs() < 1e-12, "{a:?}");
        }
    }

    #[test]
    fn ring_of_twelve_spacing() {
        let c = [0.01, -0.02];
        let g = ring_array(12, 0.1, c, SPEED_OF_LIGHT, 1e-11).unwrap();
        let angles: Vec<f64> = g
            .antennas()
            .iter()
            .map(|a| (a[1] - c[1]).atan2(a[0] - c[0]).to_degrees().rem_euclid(360.0))
            .collect();
        for k in 0..12 {
            let gap = (angles[(k + 1) % 12] - angles[k]).rem_euclid(360.0);
            assert!((gap - 30.0).abs() < 1e-9, "gap {gap}");
        }
        for a in g.antennas() {
            let d = ((a[0] - c[0]).powi(2) + (a[1] - c[1]).powi(2)).sqrt();
            assert!((d - 0.1).abs() < 1e-12);
        }
    }

    #[test]
    fn ring_rejects_single_antenna() {
        assert!(matches!(
            ring_array(1, 0.1, [0.0, 0.0], SPEED_OF_LIGHT, 1e-11),
            Err(Error::InvalidGeometry(_))
        ));
    }

    #[test]
    fn geometry_validation() {
        assert!(ArrayGeometry::new(vec![[0.0; 3], [0.0; 3]], 3e8, 1e-11).is_err());
        assert!(ArrayGeometry::new(vec![[0.0; 3], [1.0, 0.0, 0.0]], 0.0, 1e-11).is_err());
        assert!(ArrayGeometry::new(vec![[0.0; 3], [1.0, 0.0, 0.0]], 3e8, -1.0).is_err());
        assert!(ArrayGeometry::new(vec![[f64::NAN, 0.0, 0.0], [1.0, 0.0, 0.0]], 3e8, 1e-11).is_err());
    }

    #[test]
    fn grid_dims_and_cell_centers() {
        let g = ImagingGrid::new([-0.1, -0.1], [0.2, 0.2], 0.001).unwrap();
        assert_eq!(g.dims(), [200, 200]);
        let c = g.cell_center(0, 0);
        assert!((c[0] + 0.0995).abs() < 1e-12);
        assert_eq!(g.cell_of(g.cell_center(17, 123)), Some((17, 123)));
        assert_eq!(g.cell_of([0.2, 0.0]), None);
    }

    #[test]
    fn quadrants_odd_lengths_favour_low_index() {
        let r = Region::new([0, 0], [4, 2]).unwrap();
        let q = r.quadrants().unwrap();
        assert_eq!(q[0], Region { min: [0, 0], max: [2, 1] });
        assert_eq!(q[1], Region { min: [3, 0], max: [4, 1] });
        assert_eq!(q[2], Region { min: [0, 2], max: [2, 2] });
        assert_eq!(q[3], Region { min: [3, 2], max: [4, 2] });
        assert_eq!(q.iter().map(Region::area).sum::<usize>(), r.area());
    }

    #[test]
    fn unsplittable_region() {
        assert!(Region::new([3, 3], [3, 9]).unwrap().quadrants().is_none());
        assert!(Region::new([3, 4], [2, 9]).is_err());
    }

    #[test]
    fn expansion_is_clipped() {
        let parent = Region::new([0, 0], [99, 99]).unwrap();
        let q = Region::new([0, 50], [49, 99]).unwrap();
        let e = q.expanded(0.25, &parent);
        assert_eq!(e, Region { min: [0, 37], max: [62, 99] });
    }
}
