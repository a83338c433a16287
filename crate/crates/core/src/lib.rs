//! Helium matter-wave transmission and diffraction through sub-nanometre
//! holes in hexagonal boron nitride.
//!
//! The pipeline builds an hBN supercell with a hole ([`lattice`]), samples
//! the dispersion and electrostatic potential plus an absorption filter on
//! transverse grids ([`potential`]), propagates a uniform wavefront through
//! the layer with a split-operator scheme ([`tdse`]) and carries the result
//! to a distant observation plane ([`farfield`]). [`metrics`] assembles
//! velocity sweeps; [`gridio`] reads and writes binary grids.

pub mod error;
pub mod farfield;
mod fft2;
pub mod grid;
pub mod gridio;
pub mod lattice;
pub mod metrics;
pub mod potential;
pub mod tdse;
pub mod units;

pub use error::{Error, Result};
pub use grid::GridSpec;
pub use lattice::{build_supercell, AtomSpecies, HoleKind, HoleSpec, MonolayerModel, SpeciesFile};
pub use potential::{PotentialParams, PotentialSlice, FilterSlice, SliceCache};
pub use tdse::{propagate, PropagationRecord, RunConfig, WaveField};
