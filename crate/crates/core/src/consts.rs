//! Physical constants (CODATA 2018 exact or recommended values).

/// Planck constant, J·s (exact).
pub const PLANCK_J_S: f64 = 6.626_070_15e-34;

/// Speed of light in vacuum, m/s (exact).
pub const SPEED_OF_LIGHT_M_S: f64 = 299_792_458.0;

/// Bohr magneton over Planck constant, Hz/T.
pub const BOHR_MAGNETON_HZ_PER_T: f64 = 1.399_624_493_61e10;

/// Two-sided 95% normal quantile used for Wald intervals.
pub const Z_95: f64 = 1.96;
