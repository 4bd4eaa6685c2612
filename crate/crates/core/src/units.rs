//! Physical constants and unit conversions.
//!
//! Radial integrals are evaluated in atomic units; everything that crosses a
//! public boundary is in lab units (V/cm, G, μm, GHz or rad/s). All the
//! conversions live here.

use std::f64::consts::PI;

/// Speed of light (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// Planck constant (J s).
pub const PLANCK: f64 = 6.626_070_15e-34;
/// Reduced Planck constant (J s).
pub const HBAR: f64 = PLANCK / (2.0 * PI);
/// Elementary charge (C).
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
/// Bohr radius (m).
pub const BOHR_RADIUS: f64 = 5.291_772_109_03e-11;
/// Hartree energy expressed as a frequency (Hz).
pub const HARTREE_HZ: f64 = 6.579_683_920_502e15;
/// Atomic unit of electric field (V/cm).
pub const ATOMIC_FIELD_V_PER_CM: f64 = 5.142_206_747_63e9;
/// Atomic unit of time (s).
pub const ATOMIC_TIME_S: f64 = 2.418_884_326_585_7e-17;
/// Bohr magneton over Planck constant (Hz/G).
pub const BOHR_MAGNETON_HZ_PER_GAUSS: f64 = 1.399_624_493_61e6;
/// Electron spin g-factor (magnitude).
pub const ELECTRON_G: f64 = 2.002_319_304_362_56;
/// Rydberg constant for ⁸⁷Rb, reduced-mass corrected (1/cm).
pub const RYDBERG_RB87_PER_CM: f64 = 109_736.623_016_04;
/// Vacuum permittivity (F/m).
pub const EPSILON_0: f64 = 8.854_187_812_8e-12;

/// c·R_Rb in Hz.
pub fn rydberg_rb87_hz() -> f64 {
    SPEED_OF_LIGHT * 100.0 * RYDBERG_RB87_PER_CM
}

pub fn hz_to_rad(f_hz: f64) -> f64 {
    2.0 * PI * f_hz
}

pub fn rad_to_hz(w: f64) -> f64 {
    w / (2.0 * PI)
}

pub fn mhz_to_rad(f_mhz: f64) -> f64 {
    2.0 * PI * f_mhz * 1e6
}

pub fn rad_to_mhz(w: f64) -> f64 {
    w / (2.0 * PI * 1e6)
}

pub fn ghz_to_rad(f_ghz: f64) -> f64 {
    2.0 * PI * f_ghz * 1e9
}

pub fn rad_to_ghz(w: f64) -> f64 {
    w / (2.0 * PI * 1e9)
}

/// Hartree energy as an angular frequency (rad/s).
pub fn hartree_rad() -> f64 {
    hz_to_rad(HARTREE_HZ)
}

/// Field in V/cm to atomic units.
pub fn field_to_au(f_v_per_cm: f64) -> f64 {
    f_v_per_cm / ATOMIC_FIELD_V_PER_CM
}

pub fn field_from_au(f_au: f64) -> f64 {
    f_au * ATOMIC_FIELD_V_PER_CM
}

/// Angular frequency (rad/s) of a dipole of 1 e·a₀ in a field of 1 V/cm.
pub fn dipole_field_rad(dipole_ea0: f64, field_v_per_cm: f64) -> f64 {
    dipole_ea0 * field_to_au(field_v_per_cm) * hartree_rad()
}

/// Converts a rate in atomic units (1/t_au) to 1/s.
pub fn rate_from_au(rate_au: f64) -> f64 {
    rate_au / ATOMIC_TIME_S
}

/// e·a₀ in C·m.
pub fn ea0_si() -> f64 {
    ELEMENTARY_CHARGE * BOHR_RADIUS
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ea0_times_one_volt_per_cm_is_about_1p28_mhz() {
        let f = rad_to_mhz(dipole_field_rad(1.0, 1.0));
        let direct = ea0_si() * 100.0 / PLANCK * 1e-6;
        assert!((f - direct).abs() / direct < 1e-9);
        assert!((f - 1.2795).abs() < 1e-3);
    }

    #[test]
    fn rydberg_frequency() {
        assert!((rydberg_rb87_hz() - 3.289_82e15).abs() / 3.29e15 < 1e-5);
    }
}
