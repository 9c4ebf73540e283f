//! Polar reference grids for sector coverage.
//!
//! A sector `[Θ_min, Θ_max]` is tiled with reference tag positions: angles at
//! `Δθ` spacing and, along each angle, radii at `Δr = R_θ/10` spacing up to
//! that angle's maximum serviceable range.

use crate::channel::{los_channel, tag_user_channel, ChannelVector, C64};
use crate::error::Error;
use crate::params::{PolarPosition, SystemParams};
use crate::Result;

/// One reference tag position with its cached channels.
#[derive(Debug, Clone)]
pub struct GridPoint {
    pub position: PolarPosition,
    /// Access-point-to-point channel g_i.
    pub channel: ChannelVector,
    /// ‖g_i‖², cached for constraint normalizers.
    pub gain: f64,
    /// Point-to-user scalar channels h_{i,u}.
    pub tag_user: Vec<C64>,
}

/// The discretized sector.
#[derive(Debug, Clone)]
pub struct SectorGrid {
    pub theta_min: f64,
    pub theta_max: f64,
    pub delta_theta: f64,
    pub points: Vec<GridPoint>,
    /// Per-angle maximum radius actually used.
    pub radius_by_angle: Vec<(f64, f64)>,
}

impl SectorGrid {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Default angular sub-step in degrees; halved for 1°-wide sectors so a
/// sector never collapses to fewer than three sampled angles.
pub fn default_delta_theta(theta_min: f64, theta_max: f64) -> f64 {
    if theta_max - theta_min <= 1.0 + 1e-9 {
        0.5
    } else {
        1.0
    }
}

/// Number of radial samples per angle (Δr = R_θ / RADIAL_STEPS).
pub const RADIAL_STEPS: usize = 10;

/// Tile `[theta_min, theta_max]` with reference positions. `radius_fn` maps
/// an angle to that direction's maximum serviceable range (meters); angles
/// whose radius comes back nonpositive contribute no points.
pub fn build_grid(
    theta_min: f64,
    theta_max: f64,
    params: &SystemParams,
    users: &[PolarPosition],
    delta_theta: f64,
    radius_fn: &dyn Fn(f64) -> f64,
) -> Result<SectorGrid> {
    if theta_min >= theta_max {
        return Err(Error::Domain(format!("empty sector [{theta_min}, {theta_max}]")));
    }
    if !(0.0..=180.0).contains(&theta_min) || !(0.0..=180.0).contains(&theta_max) {
        return Err(Error::Domain(format!("sector [{theta_min}, {theta_max}] outside [0, 180]")));
    }
    let mut points = Vec::new();
    let mut radius_by_angle = Vec::new();
    let n_angles = ((theta_max - theta_min) / delta_theta).round() as usize;
    for a in 0..=n_angles {
        let theta = (theta_min + a as f64 * delta_theta).min(theta_max);
        let r_max = radius_fn(theta);
        radius_by_angle.push((theta, r_max));
        if r_max <= 0.0 {
            continue;
        }
        let dr = r_max / RADIAL_STEPS as f64;
        for m in 1..=RADIAL_STEPS {
            let position = PolarPosition::new(m as f64 * dr, theta)?;
            let channel = los_channel(params, position)?;
            let gain = channel.norm_squared();
            let tag_user = users
                .iter()
                .map(|&u| tag_user_channel(position, u, params.carrier_wavelength))
                .collect::<Result<Vec<_>>>()?;
            points.push(GridPoint { position, channel, gain, tag_user });
        }
    }
    if points.is_empty() {
        return Err(Error::EmptyGrid(format!(
            "sector [{theta_min}, {theta_max}] has no serviceable reference positions"
        )));
    }
    Ok(SectorGrid { theta_min, theta_max, delta_theta, points, radius_by_angle })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::Scenario;

    #[test]
    fn tiling_counts_match_the_spacing() {
        let s = Scenario::default();
        let grid = build_grid(88.0, 90.0, &s.params, &s.users, 1.0, &|_| 17.0).unwrap();
        // 3 angles x 10 radii
        assert_eq!(grid.len(), 30);
        assert_eq!(grid.radius_by_angle.len(), 3);
        let r_max = grid.points.iter().map(|p| p.position.range_m).fold(0.0, f64::max);
        assert!((r_max - 17.0).abs() < 1e-9);
        let r_min = grid.points.iter().map(|p| p.position.range_m).fold(f64::INFINITY, f64::min);
        assert!((r_min - 1.7).abs() < 1e-9);
    }

    #[test]
    fn narrow_sectors_halve_the_substep() {
        assert_eq!(default_delta_theta(90.0, 91.0), 0.5);
        assert_eq!(default_delta_theta(90.0, 95.0), 1.0);
    }

    #[test]
    fn adaptive_radius_shrinks_near_the_user() {
        let s = Scenario::default();
        // stand-in for the single-tag analysis: a dip centered on the user ray
        let radius = |theta: f64| 17.0 - 12.0 * (-((theta - 135.0) / 4.0).powi(2)).exp();
        let grid = build_grid(130.0, 140.0, &s.params, &s.users, 1.0, &radius).unwrap();
        let at = |theta: f64| {
            grid.radius_by_angle
                .iter()
                .find(|(t, _)| (t - theta).abs() < 1e-9)
                .map(|(_, r)| *r)
                .unwrap()
        };
        assert!(at(135.0) < at(130.0));
        assert!(at(135.0) < at(140.0));
    }

    #[test]
    fn degenerate_sectors_error() {
        let s = Scenario::default();
        assert!(build_grid(90.0, 90.0, &s.params, &s.users, 1.0, &|_| 10.0).is_err());
        let empty = build_grid(80.0, 85.0, &s.params, &s.users, 1.0, &|_| 0.0);
        assert!(matches!(empty, Err(Error::EmptyGrid(_))));
    }
}
