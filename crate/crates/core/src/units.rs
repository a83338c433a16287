//! Internal unit system: lengths in Å, times in fs, masses in amu, energies in eV.
//!
//! Charges are in units of the elementary charge and polarisabilities are
//! polarisability volumes in Å³ (α / 4πε₀).

use std::f64::consts::PI;

/// Reduced Planck constant, eV·fs.
pub const HBAR: f64 = 0.658_211_956_9;

/// Planck constant, eV·fs.
pub const PLANCK: f64 = 2.0 * PI * HBAR;

/// One amu·Å²/fs² expressed in eV.
pub const AMU_A2_PER_FS2_IN_EV: f64 = 103.642_696_5;

/// e² / (4πε₀), eV·Å.
pub const COULOMB_EV_ANGSTROM: f64 = 14.399_645_48;

/// 1 km/s in Å/fs.
pub const KM_PER_S_IN_A_PER_FS: f64 = 0.01;

/// Helium-4 atomic mass, amu.
pub const HELIUM_MASS_AMU: f64 = 4.002_602;

/// Mass in eV·fs²/Å² from a mass in amu.
#[inline]
pub fn mass_in_internal(mass_amu: f64) -> f64 {
    mass_amu * AMU_A2_PER_FS2_IN_EV
}

/// Velocity in Å/fs from km/s.
#[inline]
pub fn velocity_in_internal(velocity_km_s: f64) -> f64 {
    velocity_km_s * KM_PER_S_IN_A_PER_FS
}

/// Kinetic energy ½mv² in eV.
pub fn kinetic_energy(velocity_km_s: f64, mass_amu: f64) -> f64 {
    let v = velocity_in_internal(velocity_km_s);
    0.5 * mass_in_internal(mass_amu) * v * v
}

/// de Broglie wavelength h/(mv) in Å.
pub fn de_broglie_wavelength(velocity_km_s: f64, mass_amu: f64) -> f64 {
    PLANCK / (mass_in_internal(mass_amu) * velocity_in_internal(velocity_km_s))
}
