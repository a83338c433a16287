//! hBN monolayer construction: honeycomb supercells, hole punching and the
//! per-species parameters that the potential and absorption models consume.
//!
//! The primitive cell uses `a1 = a (1, 0)` and `a2 = a (1/2, √3/2)` with boron
//! on the lattice points and nitrogen at `(a1 + a2) / 3`. Atom `2 (i n + j)` is
//! the boron of cell `(i, j)` and atom `2 (i n + j) + 1` its nitrogen, so
//! explicit hole masks refer to stable indices of the pristine supercell.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{config, Result};

/// Parameters of one monolayer species as seen by a helium projectile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomSpecies {
    pub name: String,
    /// Dispersion coefficient with helium, eV·Å⁶.
    pub c6: f64,
    /// Polarisability anisotropy, row-major 3×3.
    pub d_matrix: [[f64; 3]; 3],
    /// Partial charge in units of e.
    pub partial_charge: f64,
    /// van der Waals radius, Å.
    pub vdw_radius: f64,
}

impl AtomSpecies {
    pub fn validate(&self) -> Result<()> {
        if !(self.c6 > 0.0 && self.c6.is_finite()) {
            return config(format!("species {}: c6 must be positive", self.name));
        }
        if !(self.vdw_radius > 0.0 && self.vdw_radius.is_finite()) {
            return config(format!("species {}: vdw_radius must be positive", self.name));
        }
        let d = &self.d_matrix;
        #[allow(clippy::needless_range_loop)]
        for i in 0..3 {
            for j in 0..3 {
                if !d[i][j].is_finite() {
                    return config(format!("species {}: d_matrix has non-finite entries", self.name));
                }
                if (d[i][j] - d[j][i]).abs() > 1e-12 * (1.0 + d[i][j].abs()) {
                    return config(format!("species {}: d_matrix is not symmetric", self.name));
                }
            }
        }
        if self.trace() <= 0.0 {
            return config(format!("species {}: d_matrix trace must be positive", self.name));
        }
        Ok(())
    }

    pub fn trace(&self) -> f64 {
        self.d_matrix[0][0] + self.d_matrix[1][1] + self.d_matrix[2][2]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub position: [f64; 3],
    /// Index into [`MonolayerModel::species`].
    pub species: usize,
}

/// The diffraction mask: monolayer atoms and their species table.
#[derive(Debug, Clone)]
pub struct MonolayerModel {
    pub atoms: Vec<Atom>,
    pub species: Arc<Vec<AtomSpecies>>,
    pub lattice_constant: f64,
    pub plane_z: f64,
    pub n_cells: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HoleKind {
    Circular { diameter: f64 },
    Explicit { removed_indices: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoleSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: HoleKind,
    /// In-plane centre in Å. `None` means the hexagon centre closest to the
    /// supercell centroid.
    #[serde(default)]
    pub center: Option<[f64; 2]>,
    /// Area of the comparison circle used to normalise transmission, Å².
    #[serde(default)]
    pub reference_area: Option<f64>,
}

impl HoleSpec {
    pub fn circular(name: &str, diameter: f64) -> Self {
        HoleSpec {
            name: name.to_string(),
            kind: HoleKind::Circular { diameter },
            center: None,
            reference_area: None,
        }
    }

    pub fn explicit(name: &str, removed_indices: Vec<usize>) -> Self {
        HoleSpec {
            name: name.to_string(),
            kind: HoleKind::Explicit { removed_indices },
            center: None,
            reference_area: None,
        }
    }

    pub fn with_reference_area(mut self, area: f64) -> Self {
        self.reference_area = Some(area);
        self
    }

    pub fn validate(&self) -> Result<()> {
        match &self.kind {
            HoleKind::Circular { diameter } => {
                if !(*diameter > 0.0 && diameter.is_finite()) {
                    return config(format!("hole {}: diameter must be positive", self.name));
                }
            }
            HoleKind::Explicit { removed_indices } => {
                let mut seen = HashSet::with_capacity(removed_indices.len());
                for &i in removed_indices {
                    if !seen.insert(i) {
                        return config(format!("hole {}: duplicate index {i}", self.name));
                    }
                }
            }
        }
        if let Some(a) = self.reference_area {
            if !(a > 0.0 && a.is_finite()) {
                return config(format!("hole {}: reference_area must be positive", self.name));
            }
        }
        Ok(())
    }

    /// Area of the central comparison circle, Å².
    ///
    /// The configured value wins; circular holes fall back to `π d² / 4`.
    pub fn reference_circle_area(&self) -> Result<f64> {
        match (self.reference_area, &self.kind) {
            (Some(a), _) => Ok(a),
            (None, HoleKind::Circular { diameter }) => {
                Ok(std::f64::consts::PI * diameter * diameter / 4.0)
            }
            (None, HoleKind::Explicit { .. }) => config(format!(
                "hole {}: explicit holes must declare reference_area",
                self.name
            )),
        }
    }
}

/// Helium projectile constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projectile {
    pub name: String,
    pub mass_amu: f64,
    /// Static polarisability volume α(0)/4πε₀, Å³.
    pub alpha0: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SpeciesEntry {
    name: String,
    c6: f64,
    d_matrix: Vec<f64>,
    partial_charge: f64,
    vdw_radius: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawSpeciesFile {
    projectile: Projectile,
    species: Vec<SpeciesEntry>,
    #[serde(default)]
    holes: Vec<HoleSpec>,
}

/// Contents of a species-parameter file: projectile, monolayer species and
/// named hole geometries.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeciesFile {
    pub projectile: Projectile,
    pub species: Vec<AtomSpecies>,
    pub holes: Vec<HoleSpec>,
}

impl SpeciesFile {
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawSpeciesFile = serde_json::from_str(text)?;
        let mut species = Vec::with_capacity(raw.species.len());
        for s in raw.species {
            if s.d_matrix.len() != 9 {
                return config(format!(
                    "species {}: d_matrix needs 9 numbers, got {}",
                    s.name,
                    s.d_matrix.len()
                ));
            }
            let m = &s.d_matrix;
            let sp = AtomSpecies {
                name: s.name,
                c6: s.c6,
                d_matrix: [[m[0], m[1], m[2]], [m[3], m[4], m[5]], [m[6], m[7], m[8]]],
                partial_charge: s.partial_charge,
                vdw_radius: s.vdw_radius,
            };
            sp.validate()?;
            species.push(sp);
        }
        for h in &raw.holes {
            h.validate()?;
        }
        if !(raw.projectile.mass_amu > 0.0 && raw.projectile.alpha0 >= 0.0) {
            return config("projectile: mass_amu must be positive and alpha0 non-negative");
        }
        Ok(SpeciesFile {
            projectile: raw.projectile,
            species,
            holes: raw.holes,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn species_named(&self, name: &str) -> Option<&AtomSpecies> {
        self.species.iter().find(|s| s.name == name)
    }

    pub fn hole_named(&self, name: &str) -> Option<&HoleSpec> {
        self.holes.iter().find(|h| h.name == name)
    }

    /// The boron/nitrogen pair used to build hBN. Species are matched by
    /// name (`B`/`boron`, `N`/`nitrogen`), falling back to file order.
    pub fn boron_nitrogen(&self) -> Result<(AtomSpecies, AtomSpecies)> {
        let find = |names: &[&str]| {
            self.species
                .iter()
                .find(|s| names.iter().any(|n| s.name.eq_ignore_ascii_case(n)))
                .cloned()
        };
        match (find(&["B", "boron"]), find(&["N", "nitrogen"])) {
            (Some(b), Some(n)) => Ok((b, n)),
            _ if self.species.len() == 2 => Ok((self.species[0].clone(), self.species[1].clone())),
            _ => config("species file must define boron and nitrogen"),
        }
    }
}

fn primitive_vectors(a: f64) -> ([f64; 2], [f64; 2]) {
    ([a, 0.0], [0.5 * a, 0.5 * 3f64.sqrt() * a])
}

/// Build an `n_cells × n_cells` hBN supercell with lattice constant `a` (Å).
pub fn build_supercell(
    n_cells: usize,
    lattice_constant: f64,
    species: (AtomSpecies, AtomSpecies),
) -> Result<MonolayerModel> {
    if n_cells < 1 {
        return config("n_cells must be at least 1");
    }
    if !(lattice_constant > 0.0 && lattice_constant.is_finite()) {
        return config("lattice_constant must be positive");
    }
    species.0.validate()?;
    species.1.validate()?;
    let (a1, a2) = primitive_vectors(lattice_constant);
    let basis_n = [(a1[0] + a2[0]) / 3.0, (a1[1] + a2[1]) / 3.0];
    let mut atoms = Vec::with_capacity(2 * n_cells * n_cells);
    for i in 0..n_cells {
        for j in 0..n_cells {
            let (fi, fj) = (i as f64, j as f64);
            let x = fi * a1[0] + fj * a2[0];
            let y = fi * a1[1] + fj * a2[1];
            atoms.push(Atom { position: [x, y, 0.0], species: 0 });
            atoms.push(Atom {
                position: [x + basis_n[0], y + basis_n[1], 0.0],
                species: 1,
            });
        }
    }
    Ok(MonolayerModel {
        atoms,
        species: Arc::new(vec![species.0, species.1]),
        lattice_constant,
        plane_z: 0.0,
        n_cells,
    })
}

impl MonolayerModel {
    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn species_of(&self, atom: &Atom) -> &AtomSpecies {
        &self.species[atom.species]
    }

    pub fn total_charge(&self) -> f64 {
        self.atoms.iter().map(|a| self.species_of(a).partial_charge).sum()
    }

    /// The same species table with no atoms.
    pub fn emptied(&self) -> MonolayerModel {
        MonolayerModel {
            atoms: Vec::new(),
            ..self.clone()
        }
    }

    /// Hexagon centre nearest to the centroid of the pristine supercell.
    /// Ties break toward the lowest cell index.
    pub fn default_hole_center(&self) -> [f64; 2] {
        let n = self.n_cells as f64;
        let (a1, a2) = primitive_vectors(self.lattice_constant);
        // centroid of the pristine atom set
        let c = (n - 1.0) / 2.0 + 1.0 / 6.0;
        let centroid = [c * (a1[0] + a2[0]), c * (a1[1] + a2[1])];
        let mut best = [0.0, 0.0];
        let mut best_d = f64::INFINITY;
        for i in 0..self.n_cells.max(1) {
            for j in 0..self.n_cells.max(1) {
                let f = [i as f64 + 2.0 / 3.0, j as f64 + 2.0 / 3.0];
                let p = [f[0] * a1[0] + f[1] * a2[0], f[0] * a1[1] + f[1] * a2[1]];
                let d = (p[0] - centroid[0]).hypot(p[1] - centroid[1]);
                if d < best_d - 1e-12 {
                    best_d = d;
                    best = p;
                }
            }
        }
        best
    }

    pub fn hole_center(&self, hole: &HoleSpec) -> [f64; 2] {
        hole.center.unwrap_or_else(|| self.default_hole_center())
    }

    /// Remove the atoms selected by `hole`. Indices of explicit holes refer
    /// to this model's atom order.
    pub fn punch_hole(&self, hole: &HoleSpec) -> Result<MonolayerModel> {
        if self.atoms.is_empty() {
            return config("cannot punch a hole in an empty model");
        }
        hole.validate()?;
        let keep: Vec<bool> = match &hole.kind {
            HoleKind::Circular { diameter } => {
                let c = self.hole_center(hole);
                let r = diameter / 2.0;
                self.atoms
                    .iter()
                    .map(|a| (a.position[0] - c[0]).hypot(a.position[1] - c[1]) >= r)
                    .collect()
            }
            HoleKind::Explicit { removed_indices } => {
                let mut keep = vec![true; self.atoms.len()];
                for &i in removed_indices {
                    if i >= self.atoms.len() {
                        return config(format!(
                            "hole {}: index {i} out of range for {} atoms",
                            hole.name,
                            self.atoms.len()
                        ));
                    }
                    keep[i] = false;
                }
                keep
            }
        };
        let atoms: Vec<Atom> = self
            .atoms
            .iter()
            .zip(&keep)
            .filter(|(_, &k)| k)
            .map(|(a, _)| *a)
            .collect();
        if atoms.is_empty() {
            return config(format!("hole {} removes every atom", hole.name));
        }
        if atoms.len() == self.atoms.len() {
            log::warn!("hole {} removes no atoms", hole.name);
        }
        Ok(MonolayerModel {
            atoms,
            ..self.clone()
        })
    }

    /// Atom coordinates as XYZ text.
    pub fn to_xyz(&self, comment: &str) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{}", self.atoms.len());
        let _ = writeln!(out, "{}", comment.replace('\n', " "));
        for a in &self.atoms {
            let p = a.position;
            let _ = writeln!(
                out,
                "{} {:.6} {:.6} {:.6}",
                self.species_of(a).name,
                p[0],
                p[1],
                p[2]
            );
        }
        out
    }
}
