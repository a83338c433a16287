//! Transverse Schrödinger propagation through the monolayer.
//!
//! The projectile height follows `z(t) = z_start + v t`; only the `(x, y)`
//! dependence of the wavefunction is evolved. Each step is a symmetric
//! split: half kinetic step in spectral space, full potential phase, half
//! kinetic step, then the absorption filter.

use std::sync::Arc;

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};
use crate::fft2::Fft2;
use crate::grid::GridSpec;
use crate::lattice::MonolayerModel;
use crate::potential::{FilterSlice, PotentialParams, PotentialSlice, SliceCache};
use crate::units::{mass_in_internal, velocity_in_internal, HBAR, HELIUM_MASS_AMU};

/// Complex amplitude on the transverse grid, in Å⁻¹ so that `Σ |ψ|² dx²`
/// is a probability.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveField {
    pub grid: GridSpec,
    /// Indexed `[iy, ix]`.
    pub amplitudes: Array2<Complex64>,
}

impl WaveField {
    pub fn zeros(grid: GridSpec) -> Self {
        let n = grid.n_points;
        WaveField {
            grid,
            amplitudes: Array2::zeros((n, n)),
        }
    }

    /// Constant amplitude with unit norm over the grid.
    pub fn init_uniform(grid: GridSpec) -> Self {
        let n = grid.n_points;
        WaveField {
            grid,
            amplitudes: Array2::from_elem((n, n), Complex64::new(1.0 / grid.extent, 0.0)),
        }
    }

    /// Normalised Gaussian `exp(-r² / 4σ²)` about the grid centre, so `|ψ|²`
    /// has standard deviation `sigma` along each axis.
    pub fn gaussian(grid: GridSpec, sigma: f64) -> Self {
        let n = grid.n_points;
        let mut f = WaveField::zeros(grid);
        for iy in 0..n {
            for ix in 0..n {
                let (x, y) = (grid.offset(ix), grid.offset(iy));
                f.amplitudes[[iy, ix]] = Complex64::new((-(x * x + y * y) / (4.0 * sigma * sigma)).exp(), 0.0);
            }
        }
        let norm = f.norm();
        f.scale(Complex64::new(1.0 / norm.sqrt(), 0.0));
        f
    }

    /// Quadrature of `|ψ|²` over the grid.
    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>() * self.grid.cell_area()
    }

    pub fn scale(&mut self, factor: Complex64) {
        self.amplitudes.mapv_inplace(|a| a * factor);
    }

    pub fn apply_filter(&mut self, filter: &FilterSlice) {
        for (a, f) in self.amplitudes.iter_mut().zip(filter.values.iter()) {
            *a *= *f;
        }
    }

    pub fn max_abs_diff(&self, other: &WaveField) -> f64 {
        self.amplitudes
            .iter()
            .zip(other.amplitudes.iter())
            .fold(0.0, |m, (a, b)| m.max((a - b).norm()))
    }
}

/// Reusable split-operator stepper for one grid, time step and mass.
pub struct SplitStepper {
    grid: GridSpec,
    dt: f64,
    kinetic_half: Vec<Complex64>,
    fft: Fft2,
}

impl SplitStepper {
    pub fn new(grid: GridSpec, dt: f64, mass_amu: f64) -> Self {
        let n = grid.n_points;
        let m = mass_in_internal(mass_amu);
        let k2: Vec<f64> = (0..n).map(|i| grid.wavenumber(i).powi(2)).collect();
        let mut kinetic_half = Vec::with_capacity(n * n);
        // spectral layout is [kx, ky]; the factor is symmetric in the two
        for kx2 in &k2 {
            for ky2 in &k2 {
                let phase = -HBAR * (kx2 + ky2) * dt / (4.0 * m);
                kinetic_half.push(Complex64::from_polar(1.0, phase));
            }
        }
        SplitStepper {
            grid,
            dt,
            kinetic_half,
            fft: Fft2::new(n),
        }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// `exp(-i U dt / ħ)` for every node.
    pub fn potential_phase(&self, potential: &PotentialSlice) -> Vec<Complex64> {
        let c = -self.dt / HBAR;
        potential
            .values
            .iter()
            .map(|&u| Complex64::from_polar(1.0, c * u))
            .collect()
    }

    fn kinetic_half_step(&mut self, data: &mut [Complex64]) {
        self.fft.forward(data);
        for (a, k) in data.iter_mut().zip(&self.kinetic_half) {
            *a *= k;
        }
        self.fft.inverse(data);
    }

    /// One symmetric step followed by the filter. `phase` comes from
    /// [`potential_phase`](Self::potential_phase); `filter` is `None` for
    /// no absorption.
    pub fn step(&mut self, field: &mut WaveField, phase: &[Complex64], filter: Option<&[f64]>) {
        let data = field
            .amplitudes
            .as_slice_mut()
            .expect("wave field must be in standard layout");
        self.kinetic_half_step(data);
        for (a, p) in data.iter_mut().zip(phase) {
            *a *= p;
        }
        self.kinetic_half_step(data);
        if let Some(f) = filter {
            for (a, f) in data.iter_mut().zip(f) {
                *a *= *f;
            }
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }
}

fn check_grid(a: &GridSpec, b: &GridSpec, what: &str) -> Result<()> {
    if a.same_as(b) {
        Ok(())
    } else {
        Err(Error::GridMismatch(format!("{what}: {a:?} vs {b:?}")))
    }
}

/// One split-operator step. Builds a fresh stepper; loops should hold a
/// [`SplitStepper`] instead.
pub fn split_step(
    field: &WaveField,
    potential: &PotentialSlice,
    filter: &FilterSlice,
    dt: f64,
    mass_amu: f64,
) -> Result<WaveField> {
    check_grid(&field.grid, &potential.grid, "potential")?;
    check_grid(&field.grid, &filter.grid, "filter")?;
    let mut stepper = SplitStepper::new(field.grid, dt, mass_amu);
    let phase = stepper.potential_phase(potential);
    let mut out = field.clone();
    stepper.step(
        &mut out,
        &phase,
        Some(filter.values.as_slice().expect("standard layout")),
    );
    Ok(out)
}

/// `∫|ψ|²` over the grid divided by `∫|ψ₀|²` over the comparison circle of
/// area `reference_area` centred on the grid centre.
///
/// The denominator is the mean initial density on nodes inside the circle
/// times the exact circle area, so a uniform `ψ₀` gives exactly
/// `norm / (|ψ₀|² · area)`.
pub fn relative_transmission(
    field: &WaveField,
    reference_area: f64,
    initial: &WaveField,
) -> Result<f64> {
    Ok(field.norm() / circle_norm(initial, reference_area)?)
}

/// `∫_{A_circ} |ψ₀|²` as used in the transmission denominator.
pub fn circle_norm(initial: &WaveField, reference_area: f64) -> Result<f64> {
    if !(reference_area > 0.0 && reference_area.is_finite()) {
        return config("reference area must be positive");
    }
    let g = &initial.grid;
    let r2 = reference_area / std::f64::consts::PI;
    let n = g.n_points;
    let (mut sum, mut count) = (0.0, 0usize);
    for iy in 0..n {
        for ix in 0..n {
            let (x, y) = (g.offset(ix), g.offset(iy));
            if x * x + y * y <= r2 {
                sum += initial.amplitudes[[iy, ix]].norm_sqr();
                count += 1;
            }
        }
    }
    let denom = if count == 0 { 0.0 } else { sum / count as f64 * reference_area };
    if denom <= 0.0 || !denom.is_finite() {
        return config("initial field has no probability inside the reference circle");
    }
    Ok(denom)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// km/s
    pub velocity: f64,
    /// Å
    pub z_start: f64,
    /// Å
    pub z_stop: f64,
    /// Upper bound on the time step, fs. `None` selects it automatically.
    #[serde(default)]
    pub dt: Option<f64>,
    /// Largest potential phase `|U| dt / ħ` per step on open nodes, rad.
    pub max_phase: f64,
    /// Largest height advance per step, Å. `None` uses the slice quantum.
    #[serde(default)]
    pub max_dz: Option<f64>,
    pub grid: GridSpec,
    /// amu
    pub mass: f64,
    pub hole: String,
    /// Comparison-circle area normalising the transmission, Å². `None`
    /// uses the grid area, i.e. records plain norms.
    #[serde(default)]
    pub reference_area: Option<f64>,
    pub snapshot_every: usize,
    /// Height quantum of the slice cache, Å.
    pub z_quantum: f64,
    /// Path length over which the full filter is applied once, Å. Each step
    /// multiplies by `F^(v dt / filter_length)`. `None` applies `F` once
    /// per time step.
    #[serde(default)]
    pub filter_length: Option<f64>,
    pub potential: PotentialParams,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            velocity: 2.0,
            z_start: -4.23,
            z_stop: 4.23,
            dt: None,
            max_phase: 0.3,
            max_dz: None,
            grid: GridSpec {
                extent: 15.9,
                n_points: 128,
                center: [0.0, 0.0],
            },
            mass: HELIUM_MASS_AMU,
            hole: "6A".into(),
            reference_area: None,
            snapshot_every: 50,
            z_quantum: 0.01,
            filter_length: Some(0.01),
            potential: PotentialParams::default(),
        }
    }
}

impl RunConfig {
    /// All violations, not just the first.
    pub fn diagnostics(&self) -> Vec<String> {
        let mut d = Vec::new();
        if !(self.velocity > 0.0 && self.velocity.is_finite()) {
            d.push("velocity must be positive".to_string());
        }
        if !(self.z_start < 0.0 && 0.0 < self.z_stop) {
            d.push("z_start < 0 < z_stop required".to_string());
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                d.push("dt must be positive".to_string());
            }
        }
        if !(self.max_phase > 0.0 && self.max_phase.is_finite()) {
            d.push("max_phase must be positive".to_string());
        }
        if let Some(dz) = self.max_dz {
            if !(dz > 0.0 && dz.is_finite()) {
                d.push("max_dz must be positive".to_string());
            }
        }
        if let Err(e) = self.grid.validate() {
            d.push(e.to_string());
        }
        if !(self.mass > 0.0 && self.mass.is_finite()) {
            d.push("mass must be positive".to_string());
        }
        if let Some(a) = self.reference_area {
            if !(a > 0.0 && a.is_finite()) {
                d.push("reference_area must be positive".to_string());
            }
        }
        if self.snapshot_every == 0 {
            d.push("snapshot_every must be at least 1".to_string());
        }
        if !(self.z_quantum > 0.0 && self.z_quantum.is_finite()) {
            d.push("z_quantum must be positive".to_string());
        }
        if let Some(l) = self.filter_length {
            if !(l > 0.0 && l.is_finite()) {
                d.push("filter_length must be positive".to_string());
            }
        }
        if let Err(e) = self.potential.validate() {
            d.push(e.to_string());
        }
        d
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.diagnostics();
        if d.is_empty() {
            Ok(())
        } else {
            config(d.join("; "))
        }
    }

    pub fn path_length(&self) -> f64 {
        self.z_stop - self.z_start
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub step: usize,
    /// Height at the end of the step, Å.
    pub z: f64,
    pub relative_transmission: f64,
}

#[derive(Debug, Clone)]
pub struct PropagationRecord {
    pub snapshots: Vec<Snapshot>,
    pub final_field: WaveField,
    /// Effective time step, fs.
    pub dt: f64,
    pub steps: usize,
    /// Largest |U| on open nodes along the path, eV, when the time step
    /// was selected automatically.
    pub max_open_potential: Option<f64>,
}

impl PropagationRecord {
    pub fn final_transmission(&self) -> f64 {
        self.snapshots.last().map_or(0.0, |s| s.relative_transmission)
    }

    /// `z_angstrom,relative_transmission` rows with a header.
    pub fn transmission_csv(&self) -> String {
        let mut out = String::from("z_angstrom,relative_transmission\n");
        for s in &self.snapshots {
            out.push_str(&format!("{:.6},{:.12e}\n", s.z, s.relative_transmission));
        }
        out
    }
}

/// Time step and step count for a run: the configured or automatic bound,
/// shrunk so that an integer number of steps lands exactly on `z_stop`.
pub fn select_time_step(cache: &SliceCache, cfg: &RunConfig) -> (f64, usize, Option<f64>) {
    let v = velocity_in_internal(cfg.velocity);
    let mut u_ref = None;
    let bound = match cfg.dt {
        Some(dt) => dt,
        None => {
            let u_ref = *u_ref.insert(cache.max_open_potential(cfg.z_start, cfg.z_stop));
            let dt_phase = if u_ref > 0.0 {
                cfg.max_phase * HBAR / u_ref
            } else {
                f64::INFINITY
            };
            let dz = cfg.max_dz.unwrap_or(cfg.z_quantum);
            dt_phase.min(dz / v)
        }
    };
    let steps = ((cfg.path_length() / (v * bound)).ceil() as usize).max(1);
    (cfg.path_length() / (v * steps as f64), steps, u_ref)
}

/// Per-step filter values: `F^power`, or `F` itself when no power is given.
fn step_filter(filter: &FilterSlice, power: Option<f64>) -> Vec<f64> {
    match power {
        None => filter.values.iter().copied().collect(),
        Some(p) => filter
            .values
            .iter()
            .map(|&f| if f <= 0.0 { 0.0 } else if f >= 1.0 { 1.0 } else { f.powf(p) })
            .collect(),
    }
}

/// Build a slice cache for `model` and propagate.
pub fn propagate(model: &MonolayerModel, cfg: &RunConfig) -> Result<PropagationRecord> {
    cfg.validate()?;
    let cache = SliceCache::new(Arc::new(model.clone()), cfg.grid, cfg.potential, cfg.z_quantum)?;
    propagate_cached(&cache, cfg, |_, _| {})
}

/// Propagate from a uniform field at `z_start` to `z_stop`. `observer` sees
/// every snapshot with the field at that moment.
pub fn propagate_cached<F>(
    cache: &SliceCache,
    cfg: &RunConfig,
    mut observer: F,
) -> Result<PropagationRecord>
where
    F: FnMut(&Snapshot, &WaveField),
{
    cfg.validate()?;
    if !cache.grid().same_as(&cfg.grid) {
        return Err(Error::GridMismatch("slice cache and run config differ".into()));
    }
    let (dt, steps, u_ref) = select_time_step(cache, cfg);
    let v = velocity_in_internal(cfg.velocity);
    let mut field = WaveField::init_uniform(cfg.grid);
    let area = cfg.reference_area.unwrap_or(cfg.grid.extent * cfg.grid.extent);
    let denom = circle_norm(&field, area)?;
    log::debug!(
        "propagate v={} km/s: dt={dt:.5} fs, {steps} steps, max open |U|={u_ref:?} eV",
        cfg.velocity
    );

    let mut stepper = SplitStepper::new(cfg.grid, dt, cfg.mass);
    let first = Snapshot {
        step: 0,
        z: cfg.z_start,
        relative_transmission: field.norm() / denom,
    };
    observer(&first, &field);
    let mut snapshots = vec![first];

    let filter_power = cfg.filter_length.map(|l| v * dt / l);
    let mut current_key = i64::MIN;
    let mut phase = Vec::new();
    let mut filter = Vec::new();
    let mut slice = None;
    for step in 0..steps {
        let z_mid = cfg.z_start + v * (step as f64 + 0.5) * dt;
        let key = cache.key(z_mid);
        if key != current_key {
            let s = cache.get_key(key);
            phase = stepper.potential_phase(&s.potential);
            filter = step_filter(&s.filter, filter_power);
            slice = Some(s);
            current_key = key;
        }
        let s = slice.as_ref().expect("slice loaded");
        stepper.step(&mut field, &phase, Some(&filter));
        let norm = field.norm();
        if !norm.is_finite() {
            return Err(Error::Numerical {
                step,
                z: z_mid,
                max_potential: s.potential.max_abs(),
            });
        }
        let done = step + 1;
        if done % cfg.snapshot_every == 0 || done == steps {
            let snap = Snapshot {
                step: done,
                z: cfg.z_start + v * done as f64 * dt,
                relative_transmission: norm / denom,
            };
            observer(&snap, &field);
            snapshots.push(snap);
        }
    }
    Ok(PropagationRecord {
        snapshots,
        final_field: field,
        dt,
        steps,
        max_open_potential: u_ref,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::tests::test_species;
    use crate::lattice::{build_supercell, HoleSpec};
    use crate::potential::sample_slice;

    fn grid(n: usize, extent: f64) -> GridSpec {
        GridSpec::new(extent, n, [0.0, 0.0]).unwrap()
    }

    #[test]
    fn uniform_init_has_unit_norm() {
        let g = grid(256, 15.9);
        let f = WaveField::init_uniform(g);
        assert!((f.norm() - 1.0).abs() < 1e-12);
        let cell = f.amplitudes[[3, 7]].norm_sqr();
        assert!((cell * 15.9 * 15.9 - 1.0).abs() < 1e-14);
        let coarse = WaveField::init_uniform(grid(32, 15.9));
        assert!((coarse.norm() - f.norm()).abs() < 1e-12);
    }

    #[test]
    fn free_step_conserves_norm() {
        let g = grid(64, 15.9);
        let f = WaveField::gaussian(g, 1.0);
        let out = split_step(
            &f,
            &PotentialSlice::zeros(g, 0.0),
            &FilterSlice::ones(g, 0.0),
            0.5,
            HELIUM_MASS_AMU,
        )
        .unwrap();
        assert!((out.norm() - f.norm()).abs() < 1e-12);
    }

    #[test]
    fn constant_potential_is_a_global_phase() {
        let g = grid(32, 10.0);
        let f = WaveField::gaussian(g, 1.0);
        let (u0, dt) = (0.7, 0.2);
        let out = split_step(
            &f,
            &PotentialSlice::constant(g, 0.0, u0),
            &FilterSlice::ones(g, 0.0),
            dt,
            HELIUM_MASS_AMU,
        )
        .unwrap();
        let free = split_step(
            &f,
            &PotentialSlice::zeros(g, 0.0),
            &FilterSlice::ones(g, 0.0),
            dt,
            HELIUM_MASS_AMU,
        )
        .unwrap();
        let rot = Complex64::from_polar(1.0, -u0 * dt / HBAR);
        for (a, b) in out.amplitudes.iter().zip(free.amplitudes.iter()) {
            assert!((a - b * rot).norm() < 1e-12);
            assert!((a.norm() - b.norm()).abs() < 1e-12);
        }
    }

    #[test]
    fn mismatched_grids_are_rejected() {
        let f = WaveField::init_uniform(grid(32, 10.0));
        let other = grid(64, 10.0);
        let r = split_step(
            &f,
            &PotentialSlice::zeros(other, 0.0),
            &FilterSlice::ones(other, 0.0),
            0.1,
            4.0,
        );
        assert!(matches!(r, Err(Error::GridMismatch(_))));
    }

    #[test]
    fn filter_never_increases_norm() {
        let g = grid(32, 10.0);
        let mut filter = FilterSlice::ones(g, 0.0);
        for (i, v) in filter.values.iter_mut().enumerate() {
            *v = ((i * 7919) % 101) as f64 / 100.0;
        }
        let mut f = WaveField::gaussian(g, 1.5);
        let mut last = f.norm();
        for _ in 0..20 {
            f = split_step(&f, &PotentialSlice::zeros(g, 0.0), &filter, 0.3, 4.0).unwrap();
            let n = f.norm();
            assert!(n <= last * (1.0 + 1e-13));
            last = n;
        }
    }

    #[test]
    fn time_reversal_without_filter() {
        let g = grid(64, 12.0);
        let mut pot = PotentialSlice::zeros(g, 0.0);
        for iy in 0..64 {
            for ix in 0..64 {
                let (x, y) = (g.offset(ix), g.offset(iy));
                pot.values[[iy, ix]] = -0.5 * (-(x * x + y * y) / 4.0).exp();
            }
        }
        let start = WaveField::gaussian(g, 1.2);
        let mut f = start.clone();
        let mut fwd = SplitStepper::new(g, 0.2, 4.0);
        let mut bwd = SplitStepper::new(g, -0.2, 4.0);
        let (pf, pb) = (fwd.potential_phase(&pot), bwd.potential_phase(&pot));
        for _ in 0..200 {
            fwd.step(&mut f, &pf, None);
        }
        assert!(f.max_abs_diff(&start) > 1e-3);
        for _ in 0..200 {
            bwd.step(&mut f, &pb, None);
        }
        assert!(f.max_abs_diff(&start) < 1e-8);
    }

    #[test]
    fn transmission_of_uniform_field_is_area_ratio() {
        let g = grid(128, 15.9);
        let f = WaveField::init_uniform(g);
        let t = relative_transmission(&f, 28.3, &f).unwrap();
        assert!((t - 15.9 * 15.9 / 28.3).abs() < 1e-12);
        let zero = WaveField::zeros(g);
        assert_eq!(relative_transmission(&zero, 28.3, &f).unwrap(), 0.0);
        assert!(relative_transmission(&f, 0.0, &f).is_err());
        assert!(relative_transmission(&f, 28.3, &zero).is_err());
    }

    #[test]
    fn filtered_uniform_field_matches_filter_quadrature() {
        let base = build_supercell(12, 2.504, test_species()).unwrap();
        let model = base.punch_hole(&HoleSpec::circular("6A", 6.0)).unwrap();
        let g = GridSpec::new(15.9, 64, base.default_hole_center()).unwrap();
        let (_, filter) = sample_slice(&model, &g, 0.0, &PotentialParams::default());
        let mut f = WaveField::init_uniform(g);
        let init = f.clone();
        f.apply_filter(&filter);
        let got = relative_transmission(&f, 28.3, &init).unwrap();
        // oracle: Σ F² dx² |ψ₀|² / (|ψ₀|² A_circ)
        let q: f64 = filter.values.iter().map(|v| v * v).sum::<f64>() * g.cell_area();
        let want = q / 28.3;
        assert!((got - want).abs() < 1e-12 * want);
        assert!(got > 0.0 && got < 1.0);
    }

    #[test]
    fn free_run_keeps_geometric_ratio() {
        let base = build_supercell(4, 2.504, test_species()).unwrap();
        let empty = base.emptied();
        let cfg = RunConfig {
            velocity: 20.0,
            grid: GridSpec::new(15.9, 32, [0.0, 0.0]).unwrap(),
            snapshot_every: 10,
            ..Default::default()
        };
        let rec = propagate(&empty, &cfg).unwrap();
        for s in &rec.snapshots {
            assert!((s.relative_transmission - 1.0).abs() < 1e-12);
        }
        let start = WaveField::init_uniform(cfg.grid);
        // a constant field is an eigenstate of the kinetic step
        assert!(rec.final_field.max_abs_diff(&start) < 1e-12);
    }

    #[test]
    fn step_count_lands_on_z_stop() {
        let base = build_supercell(4, 2.504, test_species()).unwrap();
        let cfg = RunConfig {
            velocity: 3.0,
            dt: Some(0.7),
            grid: GridSpec::new(8.0, 16, base.default_hole_center()).unwrap(),
            ..Default::default()
        };
        let cache = SliceCache::new(Arc::new(base), cfg.grid, cfg.potential, cfg.z_quantum).unwrap();
        let (dt, steps, _) = select_time_step(&cache, &cfg);
        assert!(dt <= 0.7);
        let v = velocity_in_internal(3.0);
        assert!((cfg.z_start + v * dt * steps as f64 - cfg.z_stop).abs() < 1e-12);
    }

    #[test]
    fn run_config_reports_every_violation() {
        let cfg = RunConfig {
            velocity: -1.0,
            dt: Some(0.0),
            snapshot_every: 0,
            ..Default::default()
        };
        assert_eq!(cfg.diagnostics().len(), 3);
        assert!(RunConfig::default().validate().is_ok());
    }
}
