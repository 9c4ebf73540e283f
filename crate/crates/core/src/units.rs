//! Unit conversions and physical constants.
//!
//! All internal math works in linear units (watts and ratios); dB and dBm
//! appear only at I/O boundaries.

/// Boltzmann constant in J/K (SI 2019 exact value).
pub const BOLTZMANN: f64 = 1.380_649e-23;

/// Speed of light in m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Convert a power in dBm to watts.
#[inline]
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Convert a power in watts to dBm.
#[inline]
pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * watts.log10() + 30.0
}

/// Convert a dB value to a linear ratio.
#[inline]
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Convert a linear ratio to dB.
#[inline]
pub fn linear_to_db(ratio: f64) -> f64 {
    10.0 * ratio.log10()
}

/// Thermal noise power kTB scaled by a linear noise figure, in watts.
///
/// `noise_figure_db` is applied as `10^(NF/10)`.
pub fn noise_power(bandwidth_hz: f64, temperature_k: f64, noise_figure_db: f64) -> f64 {
    BOLTZMANN * temperature_k * bandwidth_hz * db_to_linear(noise_figure_db)
}
