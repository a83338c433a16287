//! Helium–monolayer interaction potential and the absorption filter.
//!
//! The dispersion term is a pairwise sum over monolayer atoms,
//!
//! ```text
//! U_CP(r) = -Σ_i C6_i / (6 |d|⁶) · [Tr D_i + 3 d·D_i·d / |d|²],   d = r_i - r
//! ```
//!
//! and the electrostatic term is the induced-dipole energy of the projectile
//! in the field of the partial charges,
//!
//! ```text
//! U_el(r) = -(α₀ / 2) · e²/(4πε₀) · (Σ_i q_i / |d|²)²
//! ```
//!
//! with α₀ a polarisability volume in Å³. Absorption by the repulsive cores is
//! a product of per-atom filters that vanish inside `0.8 r_vdW` and ramp as
//! `sin⁴` up to one at `r_vdW`.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;
use std::sync::{Arc, Mutex};

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{config, Result};
use crate::grid::GridSpec;
use crate::lattice::MonolayerModel;
use crate::units::COULOMB_EV_ANGSTROM;

/// Inner edge of the absorption ramp, as a fraction of r_vdW.
pub const FILTER_INNER: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PotentialParams {
    /// Atoms farther than this from a probe point are ignored, Å.
    pub cutoff: f64,
    /// |U| clamp, eV.
    pub u_max: f64,
    /// Projectile polarisability volume α(0)/4πε₀, Å³.
    pub alpha0: f64,
}

impl Default for PotentialParams {
    fn default() -> Self {
        PotentialParams {
            cutoff: 40.0,
            u_max: 100.0,
            alpha0: 0.2050,
        }
    }
}

impl PotentialParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.cutoff > 0.0 && self.cutoff.is_finite()) {
            return config("potential.cutoff must be positive");
        }
        if !(self.u_max > 0.0 && self.u_max.is_finite()) {
            return config("potential.u_max must be positive");
        }
        if !(self.alpha0 >= 0.0 && self.alpha0.is_finite()) {
            return config("potential.alpha0 must be non-negative");
        }
        Ok(())
    }
}

/// Per-atom constants flattened for the inner loops.
#[derive(Debug, Clone, Copy)]
struct AtomTerm {
    pos: [f64; 3],
    c6_sixth: f64,
    d: [[f64; 3]; 3],
    trace_d: f64,
    charge: f64,
    r_vdw: f64,
}

fn atom_terms(model: &MonolayerModel) -> Vec<AtomTerm> {
    model
        .atoms
        .iter()
        .map(|a| {
            let s = model.species_of(a);
            AtomTerm {
                pos: a.position,
                c6_sixth: s.c6 / 6.0,
                d: s.d_matrix,
                trace_d: s.trace(),
                charge: s.partial_charge,
                r_vdw: s.vdw_radius,
            }
        })
        .collect()
}

/// Single-atom absorption filter at separation `r`.
#[inline]
pub fn filter_factor(r: f64, r_vdw: f64) -> f64 {
    let inner = FILTER_INNER * r_vdw;
    if r <= inner {
        0.0
    } else if r >= r_vdw {
        1.0
    } else {
        let s = (FRAC_PI_2 * (r - inner) / (r_vdw - inner)).sin();
        let s2 = s * s;
        s2 * s2
    }
}

/// Accumulated sums at one probe point.
#[derive(Debug, Clone, Copy)]
struct PointSums {
    cp: f64,
    field: f64,
    filter: f64,
}

/// Dispersion sum, charge field and filter product for the nodes `xs` of a
/// row at height `(y, z)`. Each node visits the atoms in index order, so a
/// node's value does not depend on the rest of the row. Atoms beyond the
/// cutoff contribute nothing; a node on top of an atom gets a non-finite
/// dispersion sum.
#[allow(clippy::too_many_arguments)]
fn row_sums(
    terms: &[AtomTerm],
    xs: &[f64],
    y: f64,
    z: f64,
    cutoff2: f64,
    cp: &mut [f64],
    field: &mut [f64],
    filter: &mut [f64],
) {
    let n = xs.len();
    let (cp, field, filter) = (&mut cp[..n], &mut field[..n], &mut filter[..n]);
    for t in terms {
        let dy = t.pos[1] - y;
        let dz = t.pos[2] - z;
        let (dy2, dz2) = (dy * dy, dz * dz);
        let m = &t.d;
        for i in 0..n {
            let dx = t.pos[0] - xs[i];
            let r2 = dx * dx + dy2 + dz2;
            let inv_r2 = if r2 <= cutoff2 { 1.0 / r2 } else { 0.0 };
            let quad = dx * (m[0][0] * dx + m[0][1] * dy + m[0][2] * dz)
                + dy * (m[1][0] * dx + m[1][1] * dy + m[1][2] * dz)
                + dz * (m[2][0] * dx + m[2][1] * dy + m[2][2] * dz);
            let inv_r6 = inv_r2 * inv_r2 * inv_r2;
            cp[i] += -t.c6_sixth * inv_r6 * (t.trace_d + 3.0 * quad * inv_r2);
            field[i] += t.charge * inv_r2;
        }
        let rv2 = t.r_vdw * t.r_vdw;
        if dy2 + dz2 < rv2 {
            for i in 0..n {
                let dx = t.pos[0] - xs[i];
                let r2 = dx * dx + dy2 + dz2;
                if r2 < rv2 {
                    filter[i] *= filter_factor(r2.sqrt(), t.r_vdw);
                }
            }
        }
    }
}

fn point_sums(terms: &[AtomTerm], p: [f64; 3], cutoff2: f64) -> PointSums {
    let (mut cp, mut field, mut filter) = ([0.0], [0.0], [1.0]);
    row_sums(terms, &[p[0]], p[1], p[2], cutoff2, &mut cp, &mut field, &mut filter);
    if terms.iter().any(|t| t.pos == p) {
        cp[0] = f64::NEG_INFINITY;
        field[0] = f64::INFINITY;
    }
    PointSums { cp: cp[0], field: field[0], filter: filter[0] }
}

#[inline]
fn electrostatic_from_field(field: f64, alpha0: f64) -> f64 {
    if alpha0 == 0.0 {
        return 0.0;
    }
    -0.5 * alpha0 * COULOMB_EV_ANGSTROM * field * field
}

/// Dispersion energy at `point` (Å), eV. Atoms beyond `cutoff` are skipped.
/// Returns `-inf` when the point coincides with an atom.
pub fn casimir_polder(point: [f64; 3], model: &MonolayerModel, cutoff: f64) -> f64 {
    point_sums(&atom_terms(model), point, cutoff * cutoff).cp
}

/// Induced-dipole energy in the field of the partial charges, eV. Never positive.
pub fn electrostatic(point: [f64; 3], model: &MonolayerModel, alpha0: f64, cutoff: f64) -> f64 {
    let f = point_sums(&atom_terms(model), point, cutoff * cutoff).field;
    electrostatic_from_field(f, alpha0)
}

/// Product of single-atom filters at `point`, in [0, 1].
pub fn filter_value(point: [f64; 3], model: &MonolayerModel) -> f64 {
    point_sums(&atom_terms(model), point, 0.0).filter
}

/// Real potential sampled on a grid at height `z`.
#[derive(Debug, Clone)]
pub struct PotentialSlice {
    pub grid: GridSpec,
    pub z: f64,
    /// eV, indexed `[iy, ix]`.
    pub values: Array2<f64>,
    pub clamped: Array2<bool>,
}

#[derive(Debug, Clone)]
pub struct FilterSlice {
    pub grid: GridSpec,
    pub z: f64,
    pub values: Array2<f64>,
}

impl PotentialSlice {
    pub fn zeros(grid: GridSpec, z: f64) -> Self {
        let n = grid.n_points;
        PotentialSlice {
            grid,
            z,
            values: Array2::zeros((n, n)),
            clamped: Array2::from_elem((n, n), false),
        }
    }

    pub fn constant(grid: GridSpec, z: f64, u: f64) -> Self {
        let mut s = Self::zeros(grid, z);
        s.values.fill(u);
        s
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Largest |U| over nodes where `filter` lets amplitude through.
    pub fn max_abs_where_open(&self, filter: &FilterSlice) -> f64 {
        self.values
            .iter()
            .zip(filter.values.iter())
            .filter(|(_, &f)| f > 0.0)
            .fold(0.0f64, |m, (v, _)| m.max(v.abs()))
    }
}

impl FilterSlice {
    pub fn ones(grid: GridSpec, z: f64) -> Self {
        let n = grid.n_points;
        FilterSlice {
            grid,
            z,
            values: Array2::from_elem((n, n), 1.0),
        }
    }
}

/// Evaluate potential and filter at every node of `grid` at height `z`.
///
/// Atoms outside the grid are included when they lie within the cutoff of
/// some node. Values are clamped to `|U| <= u_max`.
pub fn sample_slice(
    model: &MonolayerModel,
    grid: &GridSpec,
    z: f64,
    params: &PotentialParams,
) -> (PotentialSlice, FilterSlice) {
    let n = grid.n_points;
    let terms = atom_terms(model);
    let max_vdw = terms.iter().map(|t| t.r_vdw).fold(0.0, f64::max);
    let reach = params.cutoff.max(max_vdw) + grid.half_diagonal();
    let candidates: Vec<AtomTerm> = terms
        .into_iter()
        .filter(|t| {
            let dx = t.pos[0] - grid.center[0];
            let dy = t.pos[1] - grid.center[1];
            let dz = t.pos[2] - z;
            (dx * dx + dy * dy + dz * dz).sqrt() <= reach
        })
        .collect();
    let cutoff2 = params.cutoff * params.cutoff;

    let xs: Vec<f64> = (0..n).map(|ix| grid.node(0, ix)[0]).collect();
    let mut pot = vec![0.0; n * n];
    let mut filt = vec![1.0; n * n];
    let mut clamp = vec![false; n * n];
    pot.par_chunks_mut(n)
        .zip(filt.par_chunks_mut(n))
        .zip(clamp.par_chunks_mut(n))
        .enumerate()
        .for_each(|(iy, ((prow, frow), crow))| {
            let y = grid.node(iy, 0)[1];
            let mut field = vec![0.0; n];
            row_sums(&candidates, &xs, y, z, cutoff2, prow, &mut field, frow);
            for ix in 0..n {
                let mut u = prow[ix] + electrostatic_from_field(field[ix], params.alpha0);
                if !u.is_finite() {
                    u = -params.u_max;
                    crow[ix] = true;
                } else if u.abs() > params.u_max {
                    u = params.u_max.copysign(u);
                    crow[ix] = true;
                }
                prow[ix] = u;
            }
        });
    let shape = (n, n);
    (
        PotentialSlice {
            grid: *grid,
            z,
            values: Array2::from_shape_vec(shape, pot).expect("shape"),
            clamped: Array2::from_shape_vec(shape, clamp).expect("shape"),
        },
        FilterSlice {
            grid: *grid,
            z,
            values: Array2::from_shape_vec(shape, filt).expect("shape"),
        },
    )
}

/// Potential and filter at one height.
#[derive(Debug, Clone)]
pub struct SlicePair {
    pub potential: PotentialSlice,
    pub filter: FilterSlice,
}

impl SlicePair {
    pub fn max_abs_open(&self) -> f64 {
        self.potential.max_abs_where_open(&self.filter)
    }
}

/// Slices keyed by quantized height `round(z / quantum)`; a lookup returns
/// the slice sampled at the nearest node height. Safe to share across runs
/// with the same model, grid and parameters.
pub struct SliceCache {
    model: Arc<MonolayerModel>,
    grid: GridSpec,
    params: PotentialParams,
    quantum: f64,
    capacity: Option<usize>,
    slices: Mutex<BTreeMap<i64, Arc<SlicePair>>>,
    max_open: Mutex<BTreeMap<(i64, i64), f64>>,
}

impl SliceCache {
    pub fn new(
        model: Arc<MonolayerModel>,
        grid: GridSpec,
        params: PotentialParams,
        quantum: f64,
    ) -> Result<Self> {
        grid.validate()?;
        params.validate()?;
        if !(quantum > 0.0 && quantum.is_finite()) {
            return config("potential.z_quantum must be positive");
        }
        Ok(SliceCache {
            model,
            grid,
            params,
            quantum,
            capacity: None,
            slices: Mutex::new(BTreeMap::new()),
            max_open: Mutex::new(BTreeMap::new()),
        })
    }

    /// Retain at most `capacity` slices, evicting those farthest from the
    /// most recent lookup. Suits single runs on large grids.
    pub fn with_capacity(mut self, capacity: usize) -> Self {
        self.capacity = Some(capacity.max(1));
        self
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn model(&self) -> &MonolayerModel {
        &self.model
    }

    pub fn params(&self) -> &PotentialParams {
        &self.params
    }

    pub fn quantum(&self) -> f64 {
        self.quantum
    }

    pub fn key(&self, z: f64) -> i64 {
        (z / self.quantum).round() as i64
    }

    pub fn node_z(&self, key: i64) -> f64 {
        key as f64 * self.quantum
    }

    pub fn len(&self) -> usize {
        self.slices.lock().expect("slice cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get_key(&self, key: i64) -> Arc<SlicePair> {
        if let Some(s) = self.slices.lock().expect("slice cache poisoned").get(&key) {
            return Arc::clone(s);
        }
        let (potential, filter) =
            sample_slice(&self.model, &self.grid, self.node_z(key), &self.params);
        let pair = Arc::new(SlicePair { potential, filter });
        let mut map = self.slices.lock().expect("slice cache poisoned");
        let out = Arc::clone(map.entry(key).or_insert(pair));
        if let Some(cap) = self.capacity {
            while map.len() > cap {
                let (lo, hi) = (*map.keys().next().unwrap(), *map.keys().next_back().unwrap());
                let evict = if key - lo >= hi - key { lo } else { hi };
                map.remove(&evict);
            }
        }
        out
    }

    pub fn get(&self, z: f64) -> Arc<SlicePair> {
        self.get_key(self.key(z))
    }

    /// Sample every node between the two heights (inclusive).
    pub fn prefill(&self, z_from: f64, z_to: f64) {
        let (a, b) = (self.key(z_from.min(z_to)), self.key(z_from.max(z_to)));
        for k in a..=b {
            self.get_key(k);
        }
    }

    /// Largest |U| over open nodes of every slice between the two heights.
    /// Memoised per height range.
    pub fn max_open_potential(&self, z_from: f64, z_to: f64) -> f64 {
        let (a, b) = (self.key(z_from.min(z_to)), self.key(z_from.max(z_to)));
        let mut memo = self.max_open.lock().expect("slice cache poisoned");
        if let Some(&v) = memo.get(&(a, b)) {
            return v;
        }
        let v = (a..=b)
            .map(|k| self.get_key(k).max_abs_open())
            .fold(0.0, f64::max);
        memo.insert((a, b), v);
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::tests::test_species;
    use crate::lattice::{build_supercell, Atom, AtomSpecies, HoleSpec};

    fn single_atom(species: AtomSpecies) -> MonolayerModel {
        let (b, n) = test_species();
        let mut m = build_supercell(1, 2.504, (b, n)).unwrap();
        m.species = Arc::new(vec![species]);
        m.atoms = vec![Atom { position: [0.0, 0.0, 0.0], species: 0 }];
        m
    }

    fn iso(c6: f64, q: f64, r_vdw: f64) -> AtomSpecies {
        AtomSpecies {
            name: "X".into(),
            c6,
            d_matrix: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            partial_charge: q,
            vdw_radius: r_vdw,
        }
    }

    #[test]
    fn isotropic_single_atom_is_minus_c6_over_r6() {
        let m = single_atom(iso(5.0, 0.0, 1.5));
        for r in [2.0, 3.3, 7.1, 12.0] {
            let u = casimir_polder([0.0, 0.0, r], &m, 40.0);
            let want = -5.0 / r.powi(6);
            assert!((u / want - 1.0).abs() < 1e-12, "{r}: {u} vs {want}");
        }
    }

    #[test]
    fn nothing_within_cutoff_gives_zero() {
        let m = single_atom(iso(5.0, 0.4, 1.5));
        assert_eq!(casimir_polder([0.0, 0.0, 20.0], &m, 10.0), 0.0);
        assert_eq!(electrostatic([0.0, 0.0, 20.0], &m, 0.2, 10.0), 0.0);
    }

    #[test]
    fn anisotropic_two_atom_matches_hand_sum() {
        // oracle: explicit two-term sum with vector algebra written out
        let d1 = [[1.2, 0.1, 0.0], [0.1, 0.9, 0.05], [0.0, 0.05, 0.7]];
        let mut m = single_atom(iso(1.0, 0.0, 1.0));
        let sp = AtomSpecies {
            name: "A".into(),
            c6: 4.0,
            d_matrix: d1,
            partial_charge: 0.0,
            vdw_radius: 1.0,
        };
        m.species = Arc::new(vec![sp]);
        m.atoms = vec![
            Atom { position: [-1.0, 0.0, 0.0], species: 0 },
            Atom { position: [1.0, 0.0, 0.0], species: 0 },
        ];
        let p = [0.0, 0.3, 1.7];
        let mut want = 0.0;
        for a in &m.atoms {
            let v: Vec<f64> = (0..3).map(|k| a.position[k] - p[k]).collect();
            let r2: f64 = v.iter().map(|x| x * x).sum();
            let mut q = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    q += v[i] * d1[i][j] * v[j];
                }
            }
            let tr = d1[0][0] + d1[1][1] + d1[2][2];
            want += -4.0 / (6.0 * r2.powi(3)) * (tr + 3.0 * q / r2);
        }
        let got = casimir_polder(p, &m, 100.0);
        assert!((got - want).abs() < 1e-14 * want.abs());
    }

    #[test]
    fn single_charge_closed_form() {
        let m = single_atom(iso(1.0, 0.4, 1.0));
        let d: f64 = 2.5;
        let got = electrostatic([0.0, 0.0, d], &m, 0.205, 40.0);
        let want = -0.205 * COULOMB_EV_ANGSTROM * 0.16 / (2.0 * d.powi(4));
        assert!((got / want - 1.0).abs() < 1e-13);
    }

    #[test]
    fn opposite_charges_at_same_site_cancel() {
        let mut m = single_atom(iso(1.0, 0.4, 1.0));
        let neg = iso(1.0, -0.4, 1.0);
        m.species = Arc::new(vec![iso(1.0, 0.4, 1.0), neg]);
        m.atoms = vec![
            Atom { position: [0.5, 0.5, 0.0], species: 0 },
            Atom { position: [0.5, 0.5, 0.0], species: 1 },
        ];
        assert_eq!(electrostatic([0.0, 0.0, 2.0], &m, 0.2, 40.0), 0.0);
    }

    #[test]
    fn filter_closed_form_points() {
        let rv = 1.55;
        let m = single_atom(iso(1.0, 0.0, rv));
        assert_eq!(filter_value([0.0, 0.0, 0.8 * rv], &m), 0.0);
        assert!((filter_value([0.0, 0.0, 0.9 * rv], &m) - 0.25).abs() < 1e-12);
        assert_eq!(filter_value([0.0, 0.0, rv], &m), 1.0);
        assert_eq!(filter_value([0.0, 3.0, 1.0], &m), 1.0);
        assert_eq!(filter_value([0.0, 0.0, 0.0], &m), 0.0);
    }

    #[test]
    fn filter_ramp_is_flat_at_both_ends() {
        let rv = 1.92;
        let h = 1e-6;
        let slope = |r: f64| (filter_factor(r + h, rv) - filter_factor(r - h, rv)) / (2.0 * h);
        assert!(slope(0.8 * rv).abs() < 1e-4);
        assert!(slope(rv).abs() < 1e-4);
        // continuous across both joins
        assert!(filter_factor(0.8 * rv + 1e-9, rv) < 1e-20);
        assert!((filter_factor(rv - 1e-9, rv) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_model_gives_trivial_slices() {
        let model = build_supercell(2, 2.504, test_species()).unwrap().emptied();
        let grid = GridSpec::new(10.0, 16, [0.0, 0.0]).unwrap();
        let (p, f) = sample_slice(&model, &grid, 0.0, &PotentialParams::default());
        assert!(p.values.iter().all(|&v| v == 0.0));
        assert!(f.values.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn clamp_bounds_values_and_flags_nodes() {
        let model = single_atom(iso(5.0, 0.4, 1.5));
        let grid = GridSpec::new(4.0, 16, [0.0, 0.0]).unwrap();
        let params = PotentialParams { u_max: 2.0, ..Default::default() };
        let (p, _) = sample_slice(&model, &grid, 0.0, &params);
        assert!(p.values.iter().all(|v| v.abs() <= 2.0));
        // the atom sits on the centre node
        assert!(p.clamped[[8, 8]]);
        assert_eq!(p.values[[8, 8]], -2.0);
        assert!(!p.clamped[[0, 0]]);
    }

    #[test]
    fn sampled_slice_matches_pointwise_functions() {
        let base = build_supercell(6, 2.504, test_species()).unwrap();
        let model = base.punch_hole(&HoleSpec::circular("h", 6.0)).unwrap();
        let grid = GridSpec::new(8.0, 16, base.default_hole_center()).unwrap();
        let params = PotentialParams { cutoff: 6.0, u_max: 1e9, alpha0: 0.2 };
        let (p, f) = sample_slice(&model, &grid, 1.3, &params);
        for (iy, ix) in [(0, 0), (3, 11), (8, 8), (15, 2)] {
            let xy = grid.node(iy, ix);
            let pt = [xy[0], xy[1], 1.3];
            let u = casimir_polder(pt, &model, 6.0) + electrostatic(pt, &model, 0.2, 6.0);
            assert_eq!(p.values[[iy, ix]], u);
            assert_eq!(f.values[[iy, ix]], filter_value(pt, &model));
        }
    }

    #[test]
    fn cache_returns_nearest_node() {
        let model = Arc::new(build_supercell(4, 2.504, test_species()).unwrap());
        let grid = GridSpec::new(6.0, 16, model.default_hole_center()).unwrap();
        let cache = SliceCache::new(model, grid, PotentialParams::default(), 0.05).unwrap();
        let a = cache.get(1.01);
        let b = cache.get(0.99);
        assert!(Arc::ptr_eq(&a, &b));
        assert!((a.potential.z - 1.0).abs() < 1e-12);
        assert_eq!(cache.len(), 1);
        cache.prefill(-0.1, 0.1);
        assert_eq!(cache.len(), 6);
    }

    #[test]
    fn bounded_cache_evicts_far_slices() {
        let model = Arc::new(build_supercell(4, 2.504, test_species()).unwrap());
        let grid = GridSpec::new(6.0, 16, model.default_hole_center()).unwrap();
        let cache = SliceCache::new(model, grid, PotentialParams::default(), 0.05)
            .unwrap()
            .with_capacity(3);
        cache.prefill(0.0, 0.5);
        assert_eq!(cache.len(), 3);
        let full = SliceCache::new(
            Arc::new(build_supercell(4, 2.504, test_species()).unwrap()),
            grid,
            PotentialParams::default(),
            0.05,
        )
        .unwrap();
        let (a, b) = (cache.max_open_potential(-0.5, 0.5), full.max_open_potential(-0.5, 0.5));
        assert_eq!(a, b);
    }
}
