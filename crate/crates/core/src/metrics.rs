//! Transmission against velocity and against distance travelled.

use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{config, Result};
use crate::lattice::{HoleSpec, MonolayerModel};
use crate::potential::SliceCache;
use crate::tdse::{propagate_cached, RunConfig, Snapshot};

pub use crate::units::kinetic_energy;

pub const MIN_VELOCITY: f64 = 0.05;
pub const MAX_VELOCITY: f64 = 200.0;

/// `count` logarithmically spaced velocities from `lo` to `hi` inclusive.
pub fn log_velocities(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..count)
                .map(|i| match i {
                    0 => lo,
                    i if i == count - 1 => hi,
                    _ => (a + (b - a) * i as f64 / (count - 1) as f64).exp(),
                })
                .collect()
        }
    }
}

/// Twelve points from 0.1 to 20 km/s.
pub fn default_velocities() -> Vec<f64> {
    log_velocities(0.1, 20.0, 12)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SweepOptions {
    /// Fill the `wall_time_s` column. Off by default so reruns are
    /// byte-identical.
    #[serde(default)]
    pub record_wall_time: bool,
    /// Keep every transmission-vs-z snapshot of every run.
    #[serde(default)]
    pub keep_snapshots: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub velocity: f64,
    /// `None` when the run failed; `status` then says why.
    pub relative_transmission: Option<f64>,
    pub wall_time_s: Option<f64>,
    pub status: String,
    pub snapshots: Vec<Snapshot>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VelocitySweep {
    pub hole: String,
    pub points: Vec<SweepPoint>,
}

impl VelocitySweep {
    pub fn velocities(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.velocity).collect()
    }

    /// Transmission at `velocity`, if that point exists and succeeded.
    pub fn transmission_at(&self, velocity: f64) -> Option<f64> {
        self.points
            .iter()
            .find(|p| p.velocity == velocity)
            .and_then(|p| p.relative_transmission)
    }

    /// Successful `(velocity, transmission)` pairs.
    pub fn curve(&self) -> Vec<(f64, f64)> {
        self.points
            .iter()
            .filter_map(|p| p.relative_transmission.map(|t| (p.velocity, t)))
            .collect()
    }
}

/// First velocity interval over which `a − b` changes sign from negative
/// to non-negative. Only velocities present in both sweeps count.
pub fn crossover(a: &VelocitySweep, b: &VelocitySweep) -> Option<(f64, f64)> {
    let diffs: Vec<(f64, f64)> = a
        .curve()
        .into_iter()
        .filter_map(|(v, ta)| b.transmission_at(v).map(|tb| (v, ta - tb)))
        .collect();
    diffs
        .windows(2)
        .find(|w| w[0].1 < 0.0 && w[1].1 >= 0.0)
        .map(|w| (w[0].0, w[1].0))
}

pub fn check_velocities(velocities: &[f64]) -> Vec<String> {
    let mut d = Vec::new();
    if velocities.is_empty() {
        d.push("velocity list is empty".to_string());
    }
    for &v in velocities {
        if !(MIN_VELOCITY..=MAX_VELOCITY).contains(&v) {
            d.push(format!("velocity {v} km/s outside [{MIN_VELOCITY}, {MAX_VELOCITY}]"));
        }
    }
    if velocities.windows(2).any(|w| w[1] <= w[0]) {
        d.push("velocities must be strictly increasing".to_string());
    }
    d
}

/// Run template for one hole: grid centred on the hole, reference area from
/// the hole spec.
pub fn hole_config(model: &MonolayerModel, hole: &HoleSpec, template: &RunConfig) -> Result<RunConfig> {
    let mut cfg = template.clone();
    cfg.hole = hole.name.clone();
    cfg.grid.center = model.hole_center(hole);
    cfg.reference_area = Some(hole.reference_circle_area()?);
    cfg.validate()?;
    Ok(cfg)
}

/// Propagates every `(hole, velocity)` pair of `model` with holes punched
/// one at a time. Velocity points of one hole run concurrently and share a
/// slice cache; failures become missing points and the sweep carries on.
pub fn run_velocity_sweep(
    model: &MonolayerModel,
    holes: &[HoleSpec],
    velocities: &[f64],
    template: &RunConfig,
    options: SweepOptions,
) -> Result<Vec<VelocitySweep>> {
    let problems = check_velocities(velocities);
    if !problems.is_empty() {
        return config(problems.join("; "));
    }
    let mut out = Vec::with_capacity(holes.len());
    for hole in holes {
        let holed = Arc::new(model.punch_hole(hole)?);
        let cfg = hole_config(&holed, hole, template)?;
        let cache = SliceCache::new(holed, cfg.grid, cfg.potential, cfg.z_quantum)?;
        let points = velocities
            .par_iter()
            .map(|&v| sweep_point(&cache, &cfg, v, options))
            .collect();
        out.push(VelocitySweep { hole: hole.name.clone(), points });
    }
    Ok(out)
}

fn sweep_point(cache: &SliceCache, template: &RunConfig, velocity: f64, options: SweepOptions) -> SweepPoint {
    let mut cfg = template.clone();
    cfg.velocity = velocity;
    let start = Instant::now();
    let result = propagate_cached(cache, &cfg, |_, _| {});
    let wall = options.record_wall_time.then(|| start.elapsed().as_secs_f64());
    match result {
        Ok(rec) => SweepPoint {
            velocity,
            relative_transmission: Some(rec.final_transmission()),
            wall_time_s: wall,
            status: "ok".into(),
            snapshots: if options.keep_snapshots { rec.snapshots } else { Vec::new() },
        },
        Err(e) => {
            log::warn!("hole {} at {velocity} km/s failed: {e}", template.hole);
            SweepPoint {
                velocity,
                relative_transmission: None,
                wall_time_s: wall,
                status: format!("failed: {e}"),
                snapshots: Vec::new(),
            }
        }
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// `velocity_km_s,hole_name,relative_transmission,wall_time_s,status`.
/// Missing values are left blank.
pub fn sweep_csv(sweeps: &[VelocitySweep]) -> String {
    let mut out = String::from("velocity_km_s,hole_name,relative_transmission,wall_time_s,status\n");
    for s in sweeps {
        for p in &s.points {
            let t = p.relative_transmission.map(|t| format!("{t:.12e}")).unwrap_or_default();
            let w = p.wall_time_s.map(|w| format!("{w:.3}")).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{t},{w},{}\n",
                p.velocity,
                csv_field(&s.hole),
                csv_field(&p.status)
            ));
        }
    }
    out
}

/// `hole_name,velocity_km_s,z_angstrom,relative_transmission` for every
/// kept snapshot.
pub fn distance_csv(sweeps: &[VelocitySweep]) -> String {
    let mut out = String::from("hole_name,velocity_km_s,z_angstrom,relative_transmission\n");
    for s in sweeps {
        for p in &s.points {
            for snap in &p.snapshots {
                out.push_str(&format!(
                    "{},{},{:.6},{:.12e}\n",
                    csv_field(&s.hole),
                    p.velocity,
                    snap.z,
                    snap.relative_transmission
                ));
            }
        }
    }
    out
}
