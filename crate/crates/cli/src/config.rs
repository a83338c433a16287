//! Job configuration: one JSON schema for every mode, dotted-path overrides
//! and validation that reports every problem at once.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use hbnwave::farfield::default_observation_extent;
use hbnwave::lattice::SpeciesFile;
use hbnwave::metrics::{check_velocities, default_velocities};
use hbnwave::potential::PotentialParams;
use hbnwave::units::de_broglie_wavelength;
use hbnwave::{build_supercell, GridSpec, HoleSpec, MonolayerModel, RunConfig};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

/// Overrides the directory searched for relative species files.
pub const DATA_DIR_ENV: &str = "HBNWAVE_DATA_DIR";

pub fn default_data_dir() -> PathBuf {
    match std::env::var_os(DATA_DIR_ENV) {
        Some(d) => PathBuf::from(d),
        None => Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data"),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatticeConfig {
    pub n_cells: usize,
    /// Å
    pub lattice_constant: f64,
}

impl Default for LatticeConfig {
    fn default() -> Self {
        LatticeConfig { n_cells: 12, lattice_constant: 2.504 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    /// Å
    pub extent: f64,
    pub n_points: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { extent: 15.9, n_points: 128 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PotentialConfig {
    /// Å
    pub cutoff: f64,
    /// eV
    pub u_max: f64,
    /// Projectile polarisability volume, Å³. Taken from the species file
    /// when absent.
    pub alpha0: Option<f64>,
}

impl Default for PotentialConfig {
    fn default() -> Self {
        let p = PotentialParams::default();
        PotentialConfig { cutoff: p.cutoff, u_max: p.u_max, alpha0: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PropagationConfig {
    /// km/s
    pub velocity: f64,
    pub z_start: f64,
    pub z_stop: f64,
    /// fs; `null` selects the step automatically.
    pub dt: Option<f64>,
    pub max_phase: f64,
    pub max_dz: Option<f64>,
    pub z_quantum: f64,
    /// Å; `null` applies the filter once per step.
    pub filter_length: Option<f64>,
    pub snapshot_every: usize,
    /// Write the field at every snapshot as a grid file.
    pub write_snapshots: bool,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        let r = RunConfig::default();
        PropagationConfig {
            velocity: r.velocity,
            z_start: r.z_start,
            z_stop: r.z_stop,
            dt: r.dt,
            max_phase: r.max_phase,
            max_dz: r.max_dz,
            z_quantum: r.z_quantum,
            filter_length: r.filter_length,
            snapshot_every: r.snapshot_every,
            write_snapshots: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FarfieldMethod {
    Kirchhoff,
    Fourier,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FarfieldConfig {
    /// Compute a pattern at the end of `propagate` runs.
    pub enabled: bool,
    /// m
    pub distance: f64,
    /// m; defaults to a window scaled with the wavelength.
    pub extent: Option<f64>,
    pub n_points: usize,
    pub method: FarfieldMethod,
    pub pgm: bool,
    pub pgm_decades: f64,
    /// m; radial profile bin width, defaults to one observation cell.
    pub radial_bin: Option<f64>,
    /// `farfield` mode only: complex grid file to diffract instead of
    /// propagating first.
    pub input: Option<PathBuf>,
}

impl Default for FarfieldConfig {
    fn default() -> Self {
        FarfieldConfig {
            enabled: true,
            distance: 1.0,
            extent: None,
            n_points: 512,
            method: FarfieldMethod::Kirchhoff,
            pgm: true,
            pgm_decades: 6.0,
            radial_bin: None,
            input: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Empty means every hole in the species file.
    pub holes: Vec<String>,
    pub velocities: Vec<f64>,
    pub record_wall_time: bool,
    pub write_distance_csv: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            holes: Vec::new(),
            velocities: default_velocities(),
            record_wall_time: false,
            write_distance_csv: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SliceConfig {
    /// Å
    pub z: f64,
    pub include_filter: bool,
}

impl Default for SliceConfig {
    fn default() -> Self {
        SliceConfig { z: 2.0, include_filter: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub species_file: PathBuf,
    pub lattice: LatticeConfig,
    pub hole: String,
    pub grid: GridConfig,
    pub potential: PotentialConfig,
    pub propagation: PropagationConfig,
    pub farfield: FarfieldConfig,
    pub sweep: SweepConfig,
    pub slice: SliceConfig,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            species_file: PathBuf::from("hbn_species.json"),
            lattice: LatticeConfig::default(),
            hole: "6A".into(),
            grid: GridConfig::default(),
            potential: PotentialConfig::default(),
            propagation: PropagationConfig::default(),
            farfield: FarfieldConfig::default(),
            sweep: SweepConfig::default(),
            slice: SliceConfig::default(),
        }
    }
}

/// A problem with one field of the configuration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub path: String,
    pub message: String,
}

impl Diagnostic {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Diagnostic { path: path.into(), message: message.into() }
    }
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.path.is_empty() {
            write!(f, "{}", self.message)
        } else {
            write!(f, "{}: {}", self.path, self.message)
        }
    }
}

/// Applies `key.sub=value` to a JSON tree. The value is parsed as JSON when
/// possible and taken as a string otherwise.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<(), Diagnostic> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Diagnostic::new(assignment, "override must look like key=value"))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(Diagnostic::new(key, "malformed override key"));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = node.as_object_mut().ok_or_else(|| {
            Diagnostic::new(parts[..i].join("."), "cannot override inside a non-object value")
        })?;
        if i == parts.len() - 1 {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Map::new()));
    }
    unreachable!("key has at least one part")
}

fn section<T: DeserializeOwned>(
    root: &Map<String, Value>,
    name: &str,
    default: T,
    diags: &mut Vec<Diagnostic>,
) -> T {
    let Some(v) = root.get(name) else { return default };
    match serde_path_to_error::deserialize(v.clone()) {
        Ok(t) => t,
        Err(e) => {
            let inner = e.path().to_string();
            let path = if inner == "." { name.to_string() } else { format!("{name}.{inner}") };
            diags.push(Diagnostic::new(path, e.into_inner().to_string()));
            default
        }
    }
}

const SECTIONS: [&str; 9] = [
    "species_file",
    "lattice",
    "hole",
    "grid",
    "potential",
    "propagation",
    "farfield",
    "sweep",
    "slice",
];

/// Typed config from a JSON tree. Each section is decoded on its own so
/// that errors in several sections are all reported; a section that fails
/// to decode keeps its defaults.
pub fn from_value(value: &Value) -> (Config, Vec<Diagnostic>) {
    let Some(root) = value.as_object() else {
        return (Config::default(), vec![Diagnostic::new("", "configuration must be a JSON object")]);
    };
    let mut diags = Vec::new();
    for key in root.keys() {
        if !SECTIONS.contains(&key.as_str()) {
            diags.push(Diagnostic::new(key.clone(), format!("unknown field; expected one of {}", SECTIONS.join(", "))));
        }
    }
    let d = Config::default();
    let cfg = Config {
        species_file: section(root, "species_file", d.species_file, &mut diags),
        lattice: section(root, "lattice", d.lattice, &mut diags),
        hole: section(root, "hole", d.hole, &mut diags),
        grid: section(root, "grid", d.grid, &mut diags),
        potential: section(root, "potential", d.potential, &mut diags),
        propagation: section(root, "propagation", d.propagation, &mut diags),
        farfield: section(root, "farfield", d.farfield, &mut diags),
        sweep: section(root, "sweep", d.sweep, &mut diags),
        slice: section(root, "slice", d.slice, &mut diags),
    };
    (cfg, diags)
}

/// Reads a config file, or the `config` member of a run manifest, and
/// applies overrides. Problems that still leave a usable (partly default)
/// config come back alongside it; an unreadable file is an error.
pub fn load(path: &Path, overrides: &[String]) -> Result<(Config, Vec<Diagnostic>), Vec<Diagnostic>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| vec![Diagnostic::new("", format!("cannot read {}: {e}", path.display()))])?;
    let mut value: Value = serde_json::from_str(&text)
        .map_err(|e| vec![Diagnostic::new("", format!("{} is not valid JSON: {e}", path.display()))])?;
    if let Some(inner) = value.get("config").filter(|_| value.get("manifest_version").is_some()) {
        value = inner.clone();
    }
    let mut diags = Vec::new();
    for o in overrides {
        if let Err(d) = apply_override(&mut value, o) {
            diags.push(d);
        }
    }
    let (cfg, more) = from_value(&value);
    diags.extend(more);
    Ok((cfg, diags))
}

/// [`load`] followed by [`resolve`], failing with every diagnostic found.
pub fn load_resolved(path: &Path, overrides: &[String]) -> Result<Resolved, Vec<Diagnostic>> {
    let (cfg, mut diags) = load(path, overrides)?;
    match resolve(cfg, path.parent()) {
        Ok(r) if diags.is_empty() => Ok(r),
        Ok(_) => Err(diags),
        Err(more) => {
            diags.extend(more);
            Err(diags)
        }
    }
}

/// Everything a pipeline needs, derived from a valid config.
pub struct Resolved {
    pub config: Config,
    pub species_path: PathBuf,
    pub species: SpeciesFile,
    pub base: MonolayerModel,
}

impl Resolved {
    pub fn hole(&self, name: &str) -> &HoleSpec {
        self.species.hole_named(name).expect("validated hole name")
    }

    /// Run configuration for `hole` centred on it.
    pub fn run_config(&self, hole: &HoleSpec, model: &MonolayerModel) -> RunConfig {
        let c = &self.config;
        let p = &c.propagation;
        RunConfig {
            velocity: p.velocity,
            z_start: p.z_start,
            z_stop: p.z_stop,
            dt: p.dt,
            max_phase: p.max_phase,
            max_dz: p.max_dz,
            grid: self.grid(model.hole_center(hole)),
            mass: self.species.projectile.mass_amu,
            hole: hole.name.clone(),
            reference_area: hole.reference_circle_area().ok(),
            snapshot_every: p.snapshot_every,
            z_quantum: p.z_quantum,
            filter_length: p.filter_length,
            potential: self.potential(),
        }
    }

    pub fn grid(&self, center: [f64; 2]) -> GridSpec {
        GridSpec {
            extent: self.config.grid.extent,
            n_points: self.config.grid.n_points,
            center,
        }
    }

    pub fn potential(&self) -> PotentialParams {
        let p = &self.config.potential;
        PotentialParams {
            cutoff: p.cutoff,
            u_max: p.u_max,
            alpha0: p.alpha0.unwrap_or(self.species.projectile.alpha0),
        }
    }

    /// de Broglie wavelength at the configured velocity, Å.
    pub fn wavelength(&self) -> f64 {
        de_broglie_wavelength(self.config.propagation.velocity, self.species.projectile.mass_amu)
    }
}

fn resolve_species_path(cfg: &Config, config_dir: Option<&Path>) -> PathBuf {
    let p = &cfg.species_file;
    if p.is_absolute() {
        return p.clone();
    }
    if let Some(dir) = config_dir {
        let candidate = dir.join(p);
        if candidate.exists() {
            return candidate;
        }
    }
    default_data_dir().join(p)
}

fn check_hole(s: &SpeciesFile, base: Option<&MonolayerModel>, path: String, name: &str) -> Vec<Diagnostic> {
    let Some(h) = s.hole_named(name) else {
        let available: Vec<&str> = s.holes.iter().map(|h| h.name.as_str()).collect();
        return vec![Diagnostic::new(
            path,
            format!("unknown hole '{name}'; available: {}", available.join(", ")),
        )];
    };
    let mut d = Vec::new();
    if let Err(e) = h.reference_circle_area() {
        d.push(Diagnostic::new(path.clone(), e.to_string()));
    }
    if let Some(Err(e)) = base.map(|m| m.punch_hole(h)) {
        d.push(Diagnostic::new(path, e.to_string()));
    }
    d
}

fn positive(v: f64) -> bool {
    v > 0.0 && v.is_finite()
}

/// Checks a parsed config against the species file and itself, returning
/// every problem found. On success every default is materialised.
pub fn resolve(mut cfg: Config, config_dir: Option<&Path>) -> Result<Resolved, Vec<Diagnostic>> {
    let mut d = Vec::new();
    let species_path = resolve_species_path(&cfg, config_dir);
    let species = match SpeciesFile::load(&species_path) {
        Ok(s) => Some(s),
        Err(e) => {
            d.push(Diagnostic::new("species_file", format!("{}: {e}", species_path.display())));
            None
        }
    };

    let l = &cfg.lattice;
    if l.n_cells == 0 {
        d.push(Diagnostic::new("lattice.n_cells", "must be at least 1"));
    }
    if !positive(l.lattice_constant) {
        d.push(Diagnostic::new("lattice.lattice_constant", "must be positive"));
    }
    let g = &cfg.grid;
    if !positive(g.extent) {
        d.push(Diagnostic::new("grid.extent", "must be positive"));
    }
    if g.n_points < 16 || !g.n_points.is_power_of_two() {
        d.push(Diagnostic::new("grid.n_points", "must be a power of two, at least 16"));
    }
    let pc = &cfg.potential;
    if !(pc.cutoff >= 0.0 && pc.cutoff.is_finite()) {
        d.push(Diagnostic::new("potential.cutoff", "must be non-negative"));
    }
    if !positive(pc.u_max) {
        d.push(Diagnostic::new("potential.u_max", "must be positive"));
    }
    if let Some(a) = pc.alpha0 {
        if !(a >= 0.0 && a.is_finite()) {
            d.push(Diagnostic::new("potential.alpha0", "must be non-negative"));
        }
    }
    let p = &cfg.propagation;
    if !positive(p.velocity) {
        d.push(Diagnostic::new("propagation.velocity", "must be positive"));
    }
    if !(p.z_start < 0.0 && p.z_start.is_finite()) {
        d.push(Diagnostic::new("propagation.z_start", "must be negative"));
    }
    if !positive(p.z_stop) {
        d.push(Diagnostic::new("propagation.z_stop", "must be positive"));
    }
    for (name, v) in [("dt", p.dt), ("max_dz", p.max_dz), ("filter_length", p.filter_length)] {
        if let Some(v) = v {
            if !positive(v) {
                d.push(Diagnostic::new(format!("propagation.{name}"), "must be positive"));
            }
        }
    }
    if !positive(p.max_phase) {
        d.push(Diagnostic::new("propagation.max_phase", "must be positive"));
    }
    if !positive(p.z_quantum) {
        d.push(Diagnostic::new("propagation.z_quantum", "must be positive"));
    }
    if p.snapshot_every == 0 {
        d.push(Diagnostic::new("propagation.snapshot_every", "must be at least 1"));
    }
    let f = &cfg.farfield;
    if !positive(f.distance) {
        d.push(Diagnostic::new("farfield.distance", "must be positive"));
    }
    if let Some(e) = f.extent {
        if !positive(e) {
            d.push(Diagnostic::new("farfield.extent", "must be positive"));
        }
    }
    if f.n_points < 2 {
        d.push(Diagnostic::new("farfield.n_points", "must be at least 2"));
    }
    if !positive(f.pgm_decades) {
        d.push(Diagnostic::new("farfield.pgm_decades", "must be positive"));
    }
    if let Some(b) = f.radial_bin {
        if !positive(b) {
            d.push(Diagnostic::new("farfield.radial_bin", "must be positive"));
        }
    }
    for msg in check_velocities(&cfg.sweep.velocities) {
        d.push(Diagnostic::new("sweep.velocities", msg));
    }
    if !cfg.slice.z.is_finite() {
        d.push(Diagnostic::new("slice.z", "must be finite"));
    }

    let base = match &species {
        Some(s) if l.n_cells > 0 && positive(l.lattice_constant) => {
            match s.boron_nitrogen().and_then(|bn| build_supercell(l.n_cells, l.lattice_constant, bn)) {
                Ok(m) => Some(m),
                Err(e) => {
                    d.push(Diagnostic::new("species_file", e.to_string()));
                    None
                }
            }
        }
        _ => None,
    };

    if let Some(s) = &species {
        d.extend(check_hole(s, base.as_ref(), "hole".into(), &cfg.hole));
        let mut seen = BTreeSet::new();
        for (i, h) in cfg.sweep.holes.iter().enumerate() {
            let path = format!("sweep.holes[{i}]");
            if seen.insert(h.clone()) {
                d.extend(check_hole(s, base.as_ref(), path, h));
            } else {
                d.push(Diagnostic::new(path, format!("'{h}' listed twice")));
            }
        }
    }

    if !d.is_empty() {
        return Err(d);
    }
    let species = species.expect("no diagnostics");
    let base = base.expect("no diagnostics");

    cfg.species_file = species_path.canonicalize().unwrap_or_else(|_| species_path.clone());
    if let Some(input) = cfg.farfield.input.take() {
        let joined = match config_dir {
            Some(dir) if input.is_relative() => dir.join(input),
            _ => input,
        };
        cfg.farfield.input = Some(joined.canonicalize().unwrap_or(joined));
    }
    cfg.potential.alpha0.get_or_insert(species.projectile.alpha0);
    if cfg.sweep.holes.is_empty() {
        cfg.sweep.holes = species.holes.iter().map(|h| h.name.clone()).collect();
    }
    let lambda = de_broglie_wavelength(cfg.propagation.velocity, species.projectile.mass_amu);
    cfg.farfield.extent.get_or_insert(default_observation_extent(lambda));
    cfg.farfield.radial_bin.get_or_insert(cfg.farfield.extent.unwrap() / cfg.farfield.n_points as f64);
    Ok(Resolved {
        species_path: cfg.species_file.clone(),
        config: cfg,
        species,
        base,
    })
}
