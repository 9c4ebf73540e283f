//! System parameters, geometry primitives, and the scenario file.
//!
//! A [`Scenario`] is read from a JSON file with engineering units carried in
//! the key names (`*_dbm`, `*_db`, `*_ghz`, `*_mhz`); [`SystemParams`] holds
//! everything converted to linear units (watts, ratios, meters).

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::units::{dbm_to_watts, db_to_linear, noise_power, SPEED_OF_LIGHT};
use crate::Result;

/// A point in the semicircular service region, in polar coordinates.
///
/// The angle is measured from the positive y-axis (the array axis), so the
/// boresight (+x) sits at 90° and the region of interest is `[0°, 180°]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarPosition {
    /// Range from the access point in meters.
    pub range_m: f64,
    /// Angle from the array axis in degrees, within `[0, 180]`.
    pub angle_deg: f64,
}

impl PolarPosition {
    pub fn new(range_m: f64, angle_deg: f64) -> Result<Self> {
        if !range_m.is_finite() || range_m < 0.0 {
            return Err(Error::Domain(format!("range {range_m} must be finite and >= 0")));
        }
        if !(0.0..=180.0).contains(&angle_deg) {
            return Err(Error::Domain(format!("angle {angle_deg} outside [0, 180]")));
        }
        Ok(Self { range_m, angle_deg })
    }

    /// Cartesian coordinates with the array along +y and boresight along +x.
    pub fn to_cartesian(self) -> (f64, f64) {
        let theta = self.angle_deg.to_radians();
        (self.range_m * theta.sin(), self.range_m * theta.cos())
    }

    /// Euclidean distance to another polar point.
    pub fn distance_to(self, other: PolarPosition) -> f64 {
        let (x1, y1) = self.to_cartesian();
        let (x2, y2) = other.to_cartesian();
        ((x1 - x2).powi(2) + (y1 - y2).powi(2)).sqrt()
    }
}

/// Physical constants, sensitivities, thresholds, and the power budget for
/// one deployment. All fields are in linear units.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemParams {
    /// Number of antenna elements M.
    pub num_antennas: usize,
    /// Carrier wavelength λ in meters.
    pub carrier_wavelength: f64,
    /// Inter-element spacing in meters (λ/2 by default).
    pub element_spacing: f64,
    /// Total transmit power budget P in watts.
    pub total_power: f64,
    /// Number of communication users U.
    pub num_users: usize,
    /// Backscatter modulation efficiency η in (0, 1].
    pub backscatter_efficiency: f64,
    /// Receiver noise bandwidth B in hertz.
    pub noise_bandwidth: f64,
    /// Noise temperature T in kelvin.
    pub noise_temperature: f64,
    /// Reader noise figure in dB.
    pub noise_figure_reader: f64,
    /// User noise figure in dB.
    pub noise_figure_user: f64,
    /// Tag noise figure in dB.
    pub noise_figure_tag: f64,
    /// Tag activation sensitivity in watts.
    pub tag_sensitivity: f64,
    /// Reader detection sensitivity in watts.
    pub reader_sensitivity: f64,
    /// User SINR requirement γ_u as a linear ratio.
    pub user_sinr_threshold: f64,
}

impl SystemParams {
    /// Validate invariants: positivity and M ≥ U + 1 (zero-forcing needs a
    /// null-space direction per user on top of the tag direction).
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("carrier_wavelength", self.carrier_wavelength),
            ("element_spacing", self.element_spacing),
            ("total_power", self.total_power),
            ("backscatter_efficiency", self.backscatter_efficiency),
            ("noise_bandwidth", self.noise_bandwidth),
            ("noise_temperature", self.noise_temperature),
            ("tag_sensitivity", self.tag_sensitivity),
            ("reader_sensitivity", self.reader_sensitivity),
            ("user_sinr_threshold", self.user_sinr_threshold),
        ];
        for (name, v) in positive {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::Config(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        if self.backscatter_efficiency > 1.0 {
            return Err(Error::Config(format!(
                "backscatter_efficiency must lie in (0, 1], got {}",
                self.backscatter_efficiency
            )));
        }
        if self.num_antennas == 0 {
            return Err(Error::Config("num_antennas must be >= 1".into()));
        }
        if self.num_antennas < self.num_users + 1 {
            return Err(Error::Config(format!(
                "num_antennas = {} must be >= num_users + 1 = {}",
                self.num_antennas,
                self.num_users + 1
            )));
        }
        Ok(())
    }

    /// Element spacing as a fraction of the wavelength.
    pub fn spacing_over_wavelength(&self) -> f64 {
        self.element_spacing / self.carrier_wavelength
    }

    /// Tag receiver noise power σ_t² in watts.
    pub fn noise_tag(&self) -> f64 {
        noise_power(self.noise_bandwidth, self.noise_temperature, self.noise_figure_tag)
    }

    /// Reader receiver noise power σ_r² in watts.
    pub fn noise_reader(&self) -> f64 {
        noise_power(self.noise_bandwidth, self.noise_temperature, self.noise_figure_reader)
    }

    /// User receiver noise power σ_u² in watts.
    pub fn noise_user(&self) -> f64 {
        noise_power(self.noise_bandwidth, self.noise_temperature, self.noise_figure_user)
    }

    /// Tag activation SINR threshold γ_t = sensitivity / σ_t².
    pub fn gamma_tag(&self) -> f64 {
        self.tag_sensitivity / self.noise_tag()
    }

    /// Reader detection SINR threshold γ_r = sensitivity / σ_r².
    pub fn gamma_reader(&self) -> f64 {
        self.reader_sensitivity / self.noise_reader()
    }

    /// Copy with a different element count (keeps spacing at the same
    /// fraction of the wavelength).
    pub fn with_antennas(&self, m: usize) -> Self {
        let mut p = self.clone();
        p.num_antennas = m;
        p
    }

    /// Copy with a different user SINR threshold (linear).
    pub fn with_user_sinr(&self, gamma_u: f64) -> Self {
        let mut p = self.clone();
        p.user_sinr_threshold = gamma_u;
        p
    }
}

/// One deployment: parameters plus the fixed user positions.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub params: SystemParams,
    pub users: Vec<PolarPosition>,
}

impl Default for Scenario {
    /// The 2.4 GHz single-user deployment used throughout the experiments:
    /// 30 dBm budget, 10 MHz / 270 K noise floor, 7 dB reader and user noise
    /// figures, −25.5 dBm tag and −94 dBm reader sensitivities, η = 0.16,
    /// 10 dB user SINR requirement, user at (135°, 5 m).
    fn default() -> Self {
        let wavelength = SPEED_OF_LIGHT / 2.4e9;
        let params = SystemParams {
            num_antennas: 4,
            carrier_wavelength: wavelength,
            element_spacing: wavelength / 2.0,
            total_power: dbm_to_watts(30.0),
            num_users: 1,
            backscatter_efficiency: 0.16,
            noise_bandwidth: 10e6,
            noise_temperature: 270.0,
            noise_figure_reader: 7.0,
            noise_figure_user: 7.0,
            noise_figure_tag: 0.0,
            tag_sensitivity: dbm_to_watts(-25.5),
            reader_sensitivity: dbm_to_watts(-94.0),
            user_sinr_threshold: db_to_linear(10.0),
        };
        let users = vec![PolarPosition { range_m: 5.0, angle_deg: 135.0 }];
        Scenario { params, users }
    }
}

impl Scenario {
    /// Parse a scenario from its JSON engineering-unit form.
    pub fn from_json(text: &str) -> Result<Self> {
        let file: ScenarioFile = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("scenario parse error: {e}")))?;
        file.into_scenario()
    }

    /// Load a scenario file from disk.
    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Serialize back to the engineering-unit JSON form.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&ScenarioFile::from_scenario(self))
            .expect("scenario serialization cannot fail")
    }
}

/// On-disk scenario schema. Units are part of the key names.
#[derive(Debug, Serialize, Deserialize)]
struct ScenarioFile {
    num_antennas: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    carrier_ghz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    carrier_wavelength_m: Option<f64>,
    /// Spacing as a fraction of the wavelength; defaults to 0.5.
    #[serde(default = "default_spacing")]
    element_spacing_over_wavelength: f64,
    total_power_dbm: f64,
    noise_bandwidth_mhz: f64,
    noise_temperature_k: f64,
    noise_figure_reader_db: f64,
    noise_figure_user_db: f64,
    noise_figure_tag_db: f64,
    tag_sensitivity_dbm: f64,
    reader_sensitivity_dbm: f64,
    backscatter_efficiency: f64,
    user_sinr_db: f64,
    users: Vec<PolarPosition>,
}

fn default_spacing() -> f64 {
    0.5
}

impl ScenarioFile {
    fn into_scenario(self) -> Result<Scenario> {
        let wavelength = match (self.carrier_wavelength_m, self.carrier_ghz) {
            (Some(w), None) => w,
            (None, Some(f)) => SPEED_OF_LIGHT / (f * 1e9),
            (Some(_), Some(_)) => {
                return Err(Error::Config(
                    "specify exactly one of carrier_ghz / carrier_wavelength_m".into(),
                ))
            }
            (None, None) => {
                return Err(Error::Config(
                    "one of carrier_ghz / carrier_wavelength_m is required".into(),
                ))
            }
        };
        let params = SystemParams {
            num_antennas: self.num_antennas,
            carrier_wavelength: wavelength,
            element_spacing: self.element_spacing_over_wavelength * wavelength,
            total_power: dbm_to_watts(self.total_power_dbm),
            num_users: self.users.len(),
            backscatter_efficiency: self.backscatter_efficiency,
            noise_bandwidth: self.noise_bandwidth_mhz * 1e6,
            noise_temperature: self.noise_temperature_k,
            noise_figure_reader: self.noise_figure_reader_db,
            noise_figure_user: self.noise_figure_user_db,
            noise_figure_tag: self.noise_figure_tag_db,
            tag_sensitivity: dbm_to_watts(self.tag_sensitivity_dbm),
            reader_sensitivity: dbm_to_watts(self.reader_sensitivity_dbm),
            user_sinr_threshold: db_to_linear(self.user_sinr_db),
        };
        params.validate()?;
        for u in &self.users {
            PolarPosition::new(u.range_m, u.angle_deg)?;
        }
        Ok(Scenario { params, users: self.users })
    }

    fn from_scenario(s: &Scenario) -> Self {
        use crate::units::{linear_to_db, watts_to_dbm};
        ScenarioFile {
            num_antennas: s.params.num_antennas,
            carrier_ghz: Some(SPEED_OF_LIGHT / s.params.carrier_wavelength / 1e9),
            carrier_wavelength_m: None,
            element_spacing_over_wavelength: s.params.spacing_over_wavelength(),
            total_power_dbm: watts_to_dbm(s.params.total_power),
            noise_bandwidth_mhz: s.params.noise_bandwidth / 1e6,
            noise_temperature_k: s.params.noise_temperature,
            noise_figure_reader_db: s.params.noise_figure_reader,
            noise_figure_user_db: s.params.noise_figure_user,
            noise_figure_tag_db: s.params.noise_figure_tag,
            tag_sensitivity_dbm: watts_to_dbm(s.params.tag_sensitivity),
            reader_sensitivity_dbm: watts_to_dbm(s.params.reader_sensitivity),
            backscatter_efficiency: s.params.backscatter_efficiency,
            user_sinr_db: linear_to_db(s.params.user_sinr_threshold),
            users: s.users.clone(),
        }
    }
}
