//! Free propagation of the post-hole field to a distant observation plane.
//!
//! [`kirchhoff_propagate`] evaluates the Kirchhoff integral
//!
//! ```text
//! ψ'(r) = k / (2π i) ∫ d²ρ ψ(ρ) e^{iks} / (2s) · (1 + cos θ),   s = |r - ρ|,  cos θ = L / s
//! ```
//!
//! by direct summation over the source grid. With unit amplitude constant the
//! far-field intensity integrates to the transmitted probability.
//! [`fourier_pattern`] is the Fraunhofer limit of the same integral, a scaled
//! Fourier transform evaluated as two matrix products.

use std::f64::consts::PI;

use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{config, Result};
use crate::tdse::WaveField;

const ANGSTROM: f64 = 1e-10;
const PER_M2_TO_PER_MM2: f64 = 1e-6;

/// Square observation grid in metres, centred like [`GridSpec`](crate::GridSpec):
/// node `(iy, ix)` sits at `center + ((ix - n/2) dx, (iy - n/2) dx)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservationGrid {
    pub extent: f64,
    pub n_points: usize,
    #[serde(default)]
    pub center: [f64; 2],
}

impl ObservationGrid {
    pub fn new(extent: f64, n_points: usize) -> Self {
        ObservationGrid {
            extent,
            n_points,
            center: [0.0, 0.0],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.extent > 0.0 && self.extent.is_finite()) {
            return config("observation extent must be positive");
        }
        if self.n_points < 2 {
            return config("observation grid needs at least 2 points per axis");
        }
        Ok(())
    }

    pub fn spacing(&self) -> f64 {
        self.extent / self.n_points as f64
    }

    #[inline]
    pub fn offset(&self, i: usize) -> f64 {
        (i as f64 - (self.n_points / 2) as f64) * self.spacing()
    }

    #[inline]
    pub fn node(&self, iy: usize, ix: usize) -> [f64; 2] {
        [self.center[0] + self.offset(ix), self.center[1] + self.offset(iy)]
    }
}

/// Default observation window for a given de Broglie wavelength: 8 m per Å,
/// i.e. about 4 m across for helium at 2 km/s.
pub fn default_observation_extent(wavelength: f64) -> f64 {
    8.0 * wavelength
}

#[derive(Debug, Clone)]
pub struct DiffractionPattern {
    pub grid: ObservationGrid,
    /// Probability per mm², indexed `[iy, ix]`.
    pub values: Array2<f64>,
    /// Distance from the monolayer, m.
    pub distance: f64,
    /// de Broglie wavelength, Å.
    pub wavelength: f64,
}

impl DiffractionPattern {
    /// Probability captured by the observation window.
    pub fn integral(&self) -> f64 {
        let cell_mm2 = (self.grid.spacing() * 1e3).powi(2);
        self.values.iter().sum::<f64>() * cell_mm2
    }

    pub fn max(&self) -> f64 {
        self.values.iter().fold(0.0, |m, &v| m.max(v))
    }
}

/// Source nodes carrying amplitude, positions in metres relative to the
/// field's grid centre.
struct Source {
    xi: f64,
    eta: f64,
    amp: Complex64,
}

fn sources(field: &WaveField) -> Vec<Source> {
    let g = &field.grid;
    let n = g.n_points;
    let mut out = Vec::new();
    for iy in 0..n {
        for ix in 0..n {
            let a = field.amplitudes[[iy, ix]];
            if a != Complex64::new(0.0, 0.0) {
                out.push(Source {
                    xi: g.offset(ix) * ANGSTROM,
                    eta: g.offset(iy) * ANGSTROM,
                    // Å⁻¹ → m⁻¹
                    amp: a / ANGSTROM,
                });
            }
        }
    }
    out
}

/// Full width of the region where `|ψ|²` exceeds `1e-12` of its peak, Å.
pub fn support_width(field: &WaveField) -> f64 {
    let peak = field.amplitudes.iter().fold(0.0f64, |m, a| m.max(a.norm_sqr()));
    if peak == 0.0 {
        return 0.0;
    }
    let g = &field.grid;
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for ((iy, ix), a) in field.amplitudes.indexed_iter() {
        if a.norm_sqr() > 1e-12 * peak {
            let p = [g.offset(ix), g.offset(iy)];
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
    }
    (hi[0] - lo[0]).max(hi[1] - lo[1]) + g.spacing()
}

/// Reject observation grids whose spacing exceeds the Nyquist limit
/// `λ L / (2 W)` of the intensity pattern, `W` being the source support width.
pub fn check_sampling(
    field: &WaveField,
    wavelength: f64,
    distance: f64,
    obs: &ObservationGrid,
) -> Result<()> {
    obs.validate()?;
    if !(wavelength > 0.0 && wavelength.is_finite()) {
        return config("wavelength must be positive");
    }
    if !(distance > 0.0 && distance.is_finite()) {
        return config("observation distance must be positive");
    }
    let w = support_width(field) * ANGSTROM;
    if w == 0.0 {
        return Ok(());
    }
    let limit = wavelength * ANGSTROM * distance / (2.0 * w);
    if obs.spacing() > limit {
        return config(format!(
            "observation spacing {:.4e} m aliases the pattern; need <= {:.4e} m \
             (enlarge n_points or shrink extent)",
            obs.spacing(),
            limit
        ));
    }
    Ok(())
}

/// Kirchhoff amplitude at one observation point `(x, y)` (m) on the plane at
/// `distance`. The common phase `e^{ik s₀}`, `s₀` the distance to the grid
/// centre, is omitted.
fn kirchhoff_point(src: &[Source], k: f64, distance: f64, cell: f64, x: f64, y: f64) -> Complex64 {
    let s0 = (distance * distance + x * x + y * y).sqrt();
    let mut acc = Complex64::new(0.0, 0.0);
    for s in src {
        // s² - s₀² without cancellation
        let ds2 = s.xi * s.xi + s.eta * s.eta - 2.0 * (x * s.xi + y * s.eta);
        let dist = ((s0 * s0 + ds2).max(0.0)).sqrt();
        let delta = ds2 / (dist + s0);
        let obliquity = 1.0 + distance / dist;
        acc += s.amp * Complex64::from_polar(obliquity / (2.0 * dist), k * delta);
    }
    // k / (2π i)
    acc * Complex64::new(0.0, -k / (2.0 * PI)) * cell
}

/// Intensity (per mm²) of the Kirchhoff integral at arbitrary points (m).
pub fn kirchhoff_intensity_at(
    field: &WaveField,
    wavelength: f64,
    distance: f64,
    points: &[[f64; 2]],
) -> Vec<f64> {
    let src = sources(field);
    let k = 2.0 * PI / (wavelength * ANGSTROM);
    let cell = field.grid.cell_area() * ANGSTROM * ANGSTROM;
    points
        .par_iter()
        .map(|p| kirchhoff_point(&src, k, distance, cell, p[0], p[1]).norm_sqr() * PER_M2_TO_PER_MM2)
        .collect()
}

/// Direct-summation Kirchhoff propagation onto `obs`.
pub fn kirchhoff_propagate(
    field: &WaveField,
    wavelength: f64,
    distance: f64,
    obs: &ObservationGrid,
) -> Result<DiffractionPattern> {
    check_sampling(field, wavelength, distance, obs)?;
    let n = obs.n_points;
    let src = sources(field);
    let k = 2.0 * PI / (wavelength * ANGSTROM);
    let cell = field.grid.cell_area() * ANGSTROM * ANGSTROM;
    let mut values = vec![0.0; n * n];
    values.par_chunks_mut(n).enumerate().for_each(|(iy, row)| {
        for (ix, v) in row.iter_mut().enumerate() {
            let p = obs.node(iy, ix);
            *v = kirchhoff_point(&src, k, distance, cell, p[0], p[1]).norm_sqr() * PER_M2_TO_PER_MM2;
        }
    });
    Ok(DiffractionPattern {
        grid: *obs,
        values: Array2::from_shape_vec((n, n), values).expect("shape"),
        distance,
        wavelength,
    })
}

/// Fraunhofer pattern `|FT ψ|² / (λL)²` at spatial frequencies `(x, y) / (λL)`,
/// evaluated separably: first along x for every source row, then along y.
pub fn fourier_pattern(
    field: &WaveField,
    wavelength: f64,
    distance: f64,
    obs: &ObservationGrid,
) -> Result<DiffractionPattern> {
    check_sampling(field, wavelength, distance, obs)?;
    let g = &field.grid;
    let (ns, no) = (g.n_points, obs.n_points);
    let k = 2.0 * PI / (wavelength * ANGSTROM);
    let src_pos: Vec<f64> = (0..ns).map(|i| g.offset(i) * ANGSTROM).collect();
    let kern = |o: f64| -> Vec<Complex64> {
        src_pos
            .iter()
            .map(|&s| Complex64::from_polar(1.0, -k * o * s / distance))
            .collect()
    };
    let kx: Vec<Vec<Complex64>> = (0..no).map(|ix| kern(obs.center[0] + obs.offset(ix))).collect();
    let ky: Vec<Vec<Complex64>> = (0..no).map(|iy| kern(obs.center[1] + obs.offset(iy))).collect();

    // partial[iy_src][ix_obs] = Σ_ξ ψ(ξ, η) e^{-ik xξ/L}
    let mut partial = vec![Complex64::new(0.0, 0.0); ns * no];
    partial.par_chunks_mut(no).enumerate().for_each(|(iys, row)| {
        let src_row = field.amplitudes.row(iys);
        for (ixo, out) in row.iter_mut().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for (a, e) in src_row.iter().zip(&kx[ixo]) {
                acc += a * e;
            }
            *out = acc;
        }
    });
    let cell = g.cell_area() * ANGSTROM * ANGSTROM / ANGSTROM;
    let scale = (cell / (wavelength * ANGSTROM * distance)).powi(2) * PER_M2_TO_PER_MM2;
    let mut values = vec![0.0; no * no];
    values.par_chunks_mut(no).enumerate().for_each(|(iyo, row)| {
        for (ixo, v) in row.iter_mut().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for (iys, e) in ky[iyo].iter().enumerate() {
                acc += partial[iys * no + ixo] * e;
            }
            *v = acc.norm_sqr() * scale;
        }
    });
    Ok(DiffractionPattern {
        grid: *obs,
        values: Array2::from_shape_vec((no, no), values).expect("shape"),
        distance,
        wavelength,
    })
}

/// Azimuthal average in annuli of width `bin_width` (m) about `center` (m).
/// Returns `(bin centre radius, mean value)` for every annulus holding at
/// least one node, out to the largest node radius.
pub fn radial_profile(pattern: &DiffractionPattern, center: [f64; 2], bin_width: f64) -> Vec<(f64, f64)> {
    let g = &pattern.grid;
    let mut sums: Vec<(f64, usize)> = Vec::new();
    for ((iy, ix), &v) in pattern.values.indexed_iter() {
        let p = g.node(iy, ix);
        let r = (p[0] - center[0]).hypot(p[1] - center[1]);
        let b = (r / bin_width).floor() as usize;
        if b >= sums.len() {
            sums.resize(b + 1, (0.0, 0));
        }
        sums[b].0 += v;
        sums[b].1 += 1;
    }
    sums.iter()
        .enumerate()
        .filter(|(_, (_, c))| *c > 0)
        .map(|(b, (s, c))| ((b as f64 + 0.5) * bin_width, s / *c as f64))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;

    fn disc(n: usize, extent: f64, diameter: f64) -> WaveField {
        let g = GridSpec::new(extent, n, [0.0, 0.0]).unwrap();
        let mut f = WaveField::zeros(g);
        for ((iy, ix), a) in f.amplitudes.indexed_iter_mut() {
            if g.offset(ix).hypot(g.offset(iy)) < diameter / 2.0 {
                *a = Complex64::new(1.0, 0.0);
            }
        }
        f
    }

    #[test]
    fn zero_field_gives_zero_pattern() {
        let g = GridSpec::new(10.0, 16, [0.0, 0.0]).unwrap();
        let f = WaveField::zeros(g);
        let obs = ObservationGrid::new(0.2, 16);
        let p = kirchhoff_propagate(&f, 0.5, 1.0, &obs).unwrap();
        assert!(p.values.iter().all(|&v| v == 0.0));
        let prof = radial_profile(&p, [0.0, 0.0], 0.02);
        assert!(prof.iter().all(|&(_, v)| v == 0.0));
    }

    #[test]
    fn pattern_scales_with_amplitude_squared() {
        let f = disc(32, 12.0, 5.0);
        let mut g = f.clone();
        g.scale(Complex64::new(0.0, 3.0));
        let obs = ObservationGrid::new(0.4, 16);
        let a = kirchhoff_propagate(&f, 0.5, 1.0, &obs).unwrap();
        let b = kirchhoff_propagate(&g, 0.5, 1.0, &obs).unwrap();
        for (x, y) in a.values.iter().zip(b.values.iter()) {
            assert!((y - 9.0 * x).abs() <= 1e-12 * y.abs().max(1e-300));
        }
    }

    #[test]
    fn coarse_observation_grid_is_rejected() {
        let f = disc(32, 12.0, 10.0);
        // λL/(2W) ≈ 2.5 cm; 2 m / 16 = 12.5 cm
        let obs = ObservationGrid::new(2.0, 16);
        assert!(kirchhoff_propagate(&f, 0.5, 1.0, &obs).is_err());
        assert!(fourier_pattern(&f, 0.5, 1.0, &obs).is_err());
    }

    #[test]
    fn support_width_of_disc() {
        let f = disc(64, 16.0, 8.0);
        let w = support_width(&f);
        assert!((w - 8.0).abs() <= 2.0 * f.grid.spacing());
    }

    #[test]
    fn radial_profile_of_symmetric_pattern() {
        let obs = ObservationGrid::new(2.0, 128);
        let mut values = Array2::zeros((128, 128));
        for ((iy, ix), v) in values.indexed_iter_mut() {
            let p = obs.node(iy, ix);
            *v = (-(p[0] * p[0] + p[1] * p[1])).exp();
        }
        let pat = DiffractionPattern { grid: obs, values, distance: 1.0, wavelength: 0.5 };
        let w = obs.spacing();
        for (r, m) in radial_profile(&pat, [0.0, 0.0], w) {
            if r > 0.9 {
                break;
            }
            // mean of exp(-r²) over an annulus of width w
            let (lo, hi) = (r - w / 2.0, r + w / 2.0);
            let exact = ((-lo * lo).exp() - (-hi * hi).exp()) / (hi * hi - lo * lo);
            assert!((m - exact).abs() < 0.02 * exact + 1e-3, "r={r}: {m} vs {exact}");
        }
    }

    #[test]
    fn far_field_conserves_probability() {
        // Parseval: the full angular spectrum carries the source norm
        let f = disc(64, 16.0, 6.0);
        let norm = f.norm();
        let lam = 0.5;
        let obs = ObservationGrid::new(1.6, 256);
        let p = fourier_pattern(&f, lam, 1.0, &obs).unwrap();
        let captured = p.integral();
        assert!(captured <= norm * 1.001);
        assert!(captured > 0.97 * norm, "{captured} vs {norm}");
    }
}
