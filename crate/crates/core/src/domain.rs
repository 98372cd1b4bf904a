use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A box `[lower, upper]` in `R^n` (n >= 2) carrying a uniform node grid.
///
/// Nodes are stored in row-major order: the last axis varies fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DomainRaw", into = "DomainRaw")]
pub struct DomainSpec {
    lower: Vec<f64>,
    upper: Vec<f64>,
    resolution: Vec<usize>,
    spacing: Vec<f64>,
    strides: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DomainRaw {
    lower: Vec<f64>,
    upper: Vec<f64>,
    resolution: Vec<usize>,
}

impl TryFrom<DomainRaw> for DomainSpec {
    type Error = Error;

    fn try_from(raw: DomainRaw) -> Result<Self> {
        DomainSpec::new(raw.lower, raw.upper, raw.resolution)
    }
}

impl From<DomainSpec> for DomainRaw {
    fn from(d: DomainSpec) -> Self {
        DomainRaw { lower: d.lower, upper: d.upper, resolution: d.resolution }
    }
}

impl DomainSpec {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, resolution: Vec<usize>) -> Result<Self> {
        let n = lower.len();
        if n < 2 {
            return Err(Error::Invalid(format!("dimension must be >= 2, got {n}")));
        }
        if upper.len() != n || resolution.len() != n {
            return Err(Error::Invalid("bounds and resolution lengths differ".into()));
        }
        for a in 0..n {
            if !(lower[a].is_finite() && upper[a].is_finite() && upper[a] > lower[a]) {
                return Err(Error::Invalid(format!(
                    "axis {a}: need finite lower < upper, got [{}, {}]",
                    lower[a], upper[a]
                )));
            }
            if resolution[a] < 3 {
                return Err(Error::Invalid(format!("axis {a}: resolution must be >= 3, got {}", resolution[a])));
            }
        }
        let spacing = (0..n).map(|a| (upper[a] - lower[a]) / (resolution[a] - 1) as f64).collect();
        let mut strides = vec![1; n];
        for a in (0..n - 1).rev() {
            strides[a] = strides[a + 1] * resolution[a + 1];
        }
        Ok(Self { lower, upper, resolution, spacing, strides })
    }

    /// `[0,1]^n` with `res` nodes per axis.
    pub fn unit_cube(n: usize, res: usize) -> Result<Self> {
        Self::new(vec![0.0; n], vec![1.0; n], vec![res; n])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn resolution(&self) -> &[usize] {
        &self.resolution
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn node_count(&self) -> usize {
        self.resolution.iter().product()
    }

    /// Largest grid spacing.
    pub fn h_max(&self) -> f64 {
        self.spacing.iter().cloned().fold(0.0, f64::max)
    }

    /// Volume of a full interior cell.
    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim()).map(|a| self.upper[a] - self.lower[a]).product()
    }

    /// Unit-ball volume `pi^(n/2) / Gamma(n/2 + 1)`.
    pub fn omega(&self) -> f64 {
        unit_ball_volume(self.dim())
    }

    pub fn multi_index(&self, mut idx: usize) -> Vec<usize> {
        let mut out = vec![0; self.dim()];
        for a in 0..self.dim() {
            out[a] = idx / self.strides[a];
            idx %= self.strides[a];
        }
        out
    }

    /// Per-axis index of node `idx` along `axis`.
    #[inline]
    pub fn axis_index(&self, idx: usize, axis: usize) -> usize {
        (idx / self.strides[axis]) % self.resolution[axis]
    }

    pub fn coord(&self, idx: usize, axis: usize) -> f64 {
        self.lower[axis] + self.axis_index(idx, axis) as f64 * self.spacing[axis]
    }

    pub fn point(&self, idx: usize) -> Vec<f64> {
        let mut p = vec![0.0; self.dim()];
        self.point_into(idx, &mut p);
        p
    }

    pub fn point_into(&self, idx: usize, out: &mut [f64]) {
        for (a, o) in out.iter_mut().enumerate() {
            *o = self.coord(idx, a);
        }
    }

    pub fn is_boundary(&self, idx: usize) -> bool {
        (0..self.dim()).any(|a| {
            let i = self.axis_index(idx, a);
            i == 0 || i + 1 == self.resolution[a]
        })
    }

    /// Control-volume quadrature weight of a node: the volume of its dual
    /// cell clipped to the box, so boundary nodes get half a cell per face.
    pub fn weight(&self, idx: usize) -> f64 {
        let mut w = 1.0;
        for a in 0..self.dim() {
            let i = self.axis_index(idx, a);
            let half = i == 0 || i + 1 == self.resolution[a];
            w *= if half { 0.5 * self.spacing[a] } else { self.spacing[a] };
        }
        w
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && x.iter().enumerate().all(|(a, &v)| v >= self.lower[a] && v <= self.upper[a])
    }

    /// Euclidean distance from `x` to the box boundary (0 if outside).
    pub fn distance_to_boundary(&self, x: &[f64]) -> f64 {
        (0..self.dim()).map(|a| (x[a] - self.lower[a]).min(self.upper[a] - x[a])).fold(f64::INFINITY, f64::min).max(0.0)
    }

    /// `k^n` tensor sample of points including the box corners.
    pub fn sample_points(&self, per_axis: usize) -> Vec<Vec<f64>> {
        let n = self.dim();
        let per_axis = per_axis.max(1);
        let total = per_axis.pow(n as u32);
        (0..total)
            .map(|mut id| {
                let mut p = vec![0.0; n];
                for a in (0..n).rev() {
                    let i = id % per_axis;
                    id /= per_axis;
                    let frac = if per_axis == 1 { 0.5 } else { i as f64 / (per_axis - 1) as f64 };
                    p[a] = self.lower[a] + frac * (self.upper[a] - self.lower[a]);
                }
                p
            })
            .collect()
    }

    /// Midpoint of the box.
    pub fn center(&self) -> Vec<f64> {
        (0..self.dim()).map(|a| 0.5 * (self.lower[a] + self.upper[a])).collect()
    }
}

/// `omega_n = pi^(n/2) / Gamma(n/2 + 1)` via the recursion
/// `omega_n = 2 pi / n * omega_{n-2}`.
pub fn unit_ball_volume(n: usize) -> f64 {
    use std::f64::consts::PI;
    match n {
        0 => 1.0,
        1 => 2.0,
        _ => 2.0 * PI / n as f64 * unit_ball_volume(n - 2),
    }
}
