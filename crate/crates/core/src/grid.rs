use serde::{Deserialize, Serialize};

use crate::error::{config, Result};

/// Square, uniform transverse grid. Node `(iy, ix)` sits at
/// `center + ((ix - n/2) dx, (iy - n/2) dx)`, so the centre is itself a node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Side length, Å.
    pub extent: f64,
    pub n_points: usize,
    /// Centre of the grid in the monolayer plane, Å.
    #[serde(default)]
    pub center: [f64; 2],
}

impl GridSpec {
    pub fn new(extent: f64, n_points: usize, center: [f64; 2]) -> Result<Self> {
        let g = GridSpec { extent, n_points, center };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.extent > 0.0 && self.extent.is_finite()) {
            return config("grid.extent must be positive");
        }
        if self.n_points < 16 || !self.n_points.is_power_of_two() {
            return config(format!(
                "grid.n_points must be a power of two >= 16, got {}",
                self.n_points
            ));
        }
        Ok(())
    }

    pub fn spacing(&self) -> f64 {
        self.extent / self.n_points as f64
    }

    pub fn cell_area(&self) -> f64 {
        let d = self.spacing();
        d * d
    }

    pub fn len(&self) -> usize {
        self.n_points * self.n_points
    }

    pub fn is_empty(&self) -> bool {
        self.n_points == 0
    }

    /// Offset of index `i` from the grid centre along one axis, Å.
    #[inline]
    pub fn offset(&self, i: usize) -> f64 {
        (i as f64 - (self.n_points / 2) as f64) * self.spacing()
    }

    /// In-plane coordinate of node `(iy, ix)`.
    #[inline]
    pub fn node(&self, iy: usize, ix: usize) -> [f64; 2] {
        [self.center[0] + self.offset(ix), self.center[1] + self.offset(iy)]
    }

    /// Half the diagonal, i.e. the largest node distance from the centre (bound).
    pub fn half_diagonal(&self) -> f64 {
        self.extent / std::f64::consts::SQRT_2
    }

    /// Angular wavenumber of FFT bin `i`, 1/Å.
    pub fn wavenumber(&self, i: usize) -> f64 {
        let n = self.n_points as i64;
        let j = i as i64;
        let m = if j < n / 2 { j } else { j - n };
        2.0 * std::f64::consts::PI * m as f64 / self.extent
    }

    pub fn same_as(&self, other: &GridSpec) -> bool {
        self.n_points == other.n_points
            && (self.extent - other.extent).abs() <= 1e-12 * self.extent
            && (self.center[0] - other.center[0]).abs() <= 1e-9
            && (self.center[1] - other.center[1]).abs() <= 1e-9
    }
}
