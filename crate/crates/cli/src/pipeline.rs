use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use hbnwave::farfield::{fourier_pattern, kirchhoff_propagate, radial_profile, DiffractionPattern, ObservationGrid};
use hbnwave::gridio::{self, GridData, GridMeta, GridKind};
use hbnwave::metrics::{distance_csv, run_velocity_sweep, sweep_csv, SweepOptions};
use hbnwave::potential::sample_slice;
use hbnwave::tdse::propagate_cached;
use hbnwave::{GridSpec, HoleSpec, SliceCache, WaveField};
use serde_json::{json, Value};

use crate::config::{FarfieldMethod, Resolved};
use crate::manifest::FileEntry;
use crate::CliError;

/// Hidden directory inside the output directory collecting a job's files
/// until it has succeeded.
pub struct Staging {
    dir: tempfile::TempDir,
    out: PathBuf,
    files: Vec<String>,
}

impl Staging {
    pub fn new(out: &Path) -> std::io::Result<Self> {
        let dir = tempfile::Builder::new().prefix(".staging-").tempdir_in(out)?;
        Ok(Staging { dir, out: out.to_path_buf(), files: Vec::new() })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.files.push(name.to_string());
        self.dir.path().join(name)
    }

    fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> std::io::Result<()> {
        let p = self.path(name);
        fs::write(p, contents)
    }

    fn grid_real(&mut self, stem: &str, meta: &GridMeta, values: &ndarray::Array2<f64>) -> Result<(), CliError> {
        let p = self.path(&format!("{stem}.bin"));
        self.files.push(format!("{stem}.json"));
        gridio::write_real(&p, meta, values)?;
        Ok(())
    }

    fn grid_complex(&mut self, stem: &str, field: &WaveField, z: f64) -> Result<(), CliError> {
        let p = self.path(&format!("{stem}.bin"));
        self.files.push(format!("{stem}.json"));
        let meta = GridMeta {
            extent: field.grid.extent,
            n_points: field.grid.n_points,
            z,
            units: "psi_per_angstrom".into(),
            kind: GridKind::Complex,
            center: field.grid.center,
        };
        gridio::write_complex(&p, &meta, &field.amplitudes)?;
        Ok(())
    }

    /// Checksums every staged file and moves it into the output directory.
    pub fn commit(self) -> std::io::Result<Vec<FileEntry>> {
        let mut entries = Vec::with_capacity(self.files.len());
        for name in &self.files {
            let staged = self.dir.path().join(name);
            entries.push(FileEntry::of(&staged, Some(name))?);
            fs::rename(&staged, self.out.join(name))?;
        }
        Ok(entries)
    }
}

fn slice_meta(grid: &GridSpec, z: f64, units: &str) -> GridMeta {
    GridMeta {
        extent: grid.extent,
        n_points: grid.n_points,
        z,
        units: units.into(),
        kind: GridKind::Real,
        center: grid.center,
    }
}

fn holed(r: &Resolved) -> Result<(HoleSpec, Arc<hbnwave::MonolayerModel>), CliError> {
    let hole = r.hole(&r.config.hole).clone();
    let model = r.base.punch_hole(&hole)?;
    Ok((hole, Arc::new(model)))
}

pub fn slice_dump(r: &Resolved, st: &mut Staging) -> Result<Value, CliError> {
    let (hole, model) = holed(r)?;
    let grid = r.grid(model.hole_center(&hole));
    let z = r.config.slice.z;
    let (pot, filter) = sample_slice(&model, &grid, z, &r.potential());
    st.grid_real("potential", &slice_meta(&grid, z, "eV"), &pot.values)?;
    if r.config.slice.include_filter {
        st.grid_real("filter", &slice_meta(&grid, z, "dimensionless"), &filter.values)?;
    }
    let min = pot.values.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(json!({
        "hole": hole.name,
        "z_angstrom": z,
        "min_potential_ev": min,
        "max_open_abs_potential_ev": pot.max_abs_where_open(&filter),
        "clamped_nodes": pot.clamped.iter().filter(|&&c| c).count(),
    }))
}

fn pattern(r: &Resolved, field: &WaveField) -> Result<DiffractionPattern, CliError> {
    let f = &r.config.farfield;
    let obs = ObservationGrid::new(f.extent.expect("resolved"), f.n_points);
    let lambda = r.wavelength();
    Ok(match f.method {
        FarfieldMethod::Kirchhoff => kirchhoff_propagate(field, lambda, f.distance, &obs)?,
        FarfieldMethod::Fourier => fourier_pattern(field, lambda, f.distance, &obs)?,
    })
}

fn write_pattern(r: &Resolved, st: &mut Staging, p: &DiffractionPattern) -> Result<Value, CliError> {
    let f = &r.config.farfield;
    let meta = GridMeta {
        extent: p.grid.extent,
        n_points: p.grid.n_points,
        z: p.distance,
        units: "probability_per_mm2".into(),
        kind: GridKind::Real,
        center: p.grid.center,
    };
    st.grid_real("farfield", &meta, &p.values)?;
    if f.pgm {
        let path = st.path("farfield.pgm");
        gridio::write_pgm_log(&path, &p.values, f.pgm_decades)?;
    }
    let mut csv = String::from("radius_m,probability_per_mm2\n");
    for (radius, v) in radial_profile(p, p.grid.center, f.radial_bin.expect("resolved")) {
        csv.push_str(&format!("{radius:.6e},{v:.12e}\n"));
    }
    st.write("farfield_radial.csv", csv)?;
    Ok(json!({
        "distance_m": p.distance,
        "wavelength_angstrom": p.wavelength,
        "captured_probability": p.integral(),
        "peak_per_mm2": p.max(),
    }))
}

struct Propagated {
    record: hbnwave::PropagationRecord,
    summary: Value,
}

fn run_propagation(r: &Resolved, st: &mut Staging, write_outputs: bool) -> Result<Propagated, CliError> {
    let (hole, model) = holed(r)?;
    let cfg = r.run_config(&hole, &model);
    let cache = SliceCache::new(Arc::clone(&model), cfg.grid, cfg.potential, cfg.z_quantum)?;
    let snapshots = write_outputs && r.config.propagation.write_snapshots;
    let mut snapshot_error = None;
    let record = propagate_cached(&cache, &cfg, |snap, field| {
        if snapshots && snapshot_error.is_none() {
            if let Err(e) = st.grid_complex(&format!("snapshot_{:07}", snap.step), field, snap.z) {
                snapshot_error = Some(e);
            }
        }
    })?;
    if let Some(e) = snapshot_error {
        return Err(e);
    }
    if write_outputs {
        let comment = format!("hBN {0}x{0} supercell, hole {1}", r.config.lattice.n_cells, hole.name);
        st.write("structure.xyz", model.to_xyz(&comment))?;
        st.write("transmission.csv", record.transmission_csv())?;
        st.grid_complex("final_field", &record.final_field, cfg.z_stop)?;
    }
    let summary = json!({
        "hole": hole.name,
        "velocity_km_s": cfg.velocity,
        "wavelength_angstrom": r.wavelength(),
        "dt_fs": record.dt,
        "steps": record.steps,
        "max_open_abs_potential_ev": record.max_open_potential,
        "final_relative_transmission": record.final_transmission(),
    });
    Ok(Propagated { record, summary })
}

pub fn propagate(r: &Resolved, st: &mut Staging) -> Result<Value, CliError> {
    let mut p = run_propagation(r, st, true)?;
    if r.config.farfield.enabled {
        let pat = pattern(r, &p.record.final_field)?;
        p.summary["farfield"] = write_pattern(r, st, &pat)?;
    }
    Ok(p.summary)
}

pub fn farfield(r: &Resolved, st: &mut Staging) -> Result<Value, CliError> {
    let (field, source) = match &r.config.farfield.input {
        Some(path) => (read_field(path)?, Value::String(path.display().to_string())),
        None => {
            let p = run_propagation(r, st, false)?;
            (p.record.final_field, p.summary)
        }
    };
    let pat = pattern(r, &field)?;
    Ok(json!({ "source": source, "farfield": write_pattern(r, st, &pat)? }))
}

fn read_field(path: &Path) -> Result<WaveField, CliError> {
    let (meta, data) = gridio::read_grid(path)?;
    let GridData::Complex(amplitudes) = data else {
        return Err(CliError::Config(vec![crate::Diagnostic::new(
            "farfield.input",
            "expected a complex grid",
        )]));
    };
    let grid = GridSpec::new(meta.extent, meta.n_points, meta.center)?;
    Ok(WaveField { grid, amplitudes })
}

pub fn sweep(r: &Resolved, st: &mut Staging) -> Result<Value, CliError> {
    let sw = &r.config.sweep;
    let holes: Vec<HoleSpec> = sw.holes.iter().map(|h| r.hole(h).clone()).collect();
    let template = r.run_config(&holes[0], &r.base);
    let options = SweepOptions {
        record_wall_time: sw.record_wall_time,
        keep_snapshots: sw.write_distance_csv,
    };
    let sweeps = run_velocity_sweep(&r.base, &holes, &sw.velocities, &template, options)?;
    st.write("sweep.csv", sweep_csv(&sweeps))?;
    if sw.write_distance_csv {
        st.write("transmission_vs_z.csv", distance_csv(&sweeps))?;
    }
    let total: usize = sweeps.iter().map(|s| s.points.len()).sum();
    let failed: usize = sweeps
        .iter()
        .flat_map(|s| &s.points)
        .filter(|p| p.relative_transmission.is_none())
        .count();
    if failed == total {
        return Err(CliError::Numerical("every sweep point failed".into()));
    }
    Ok(json!({ "points": total, "failed_points": failed }))
}
