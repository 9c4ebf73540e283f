//! Array response and line-of-sight channel construction.
//!
//! The array is a uniform linear array along the y-axis; angles are measured
//! from that axis so the boresight (+x) sits at 90°. Free-space propagation
//! gives every element the amplitude gain λ/(4πd) and a deterministic phase
//! exp(−j2πd/λ).

use nalgebra::DVector;
use num_complex::Complex;

use crate::error::Error;
use crate::params::{PolarPosition, SystemParams};
use crate::Result;

pub type C64 = Complex<f64>;

/// Complex per-element channel between the array and a point.
pub type ChannelVector = DVector<C64>;

/// Unit-magnitude array response for a uniform linear array.
///
/// Entry m is `exp(j·2π·(d/λ)·m·cos θ)` for m = 0..M−1.
pub fn steering_vector(num_antennas: usize, angle_deg: f64, spacing_over_wavelength: f64) -> Result<ChannelVector> {
    if num_antennas == 0 {
        return Err(Error::Domain("steering vector needs at least one element".into()));
    }
    if !(0.0..=180.0).contains(&angle_deg) {
        return Err(Error::Domain(format!("angle {angle_deg} outside [0, 180]")));
    }
    let phase_step = 2.0 * std::f64::consts::PI * spacing_over_wavelength * angle_deg.to_radians().cos();
    Ok(DVector::from_fn(num_antennas, |m, _| {
        C64::from_polar(1.0, phase_step * m as f64)
    }))
}

/// Line-of-sight channel to a point: Friis amplitude λ/(4πr) on every
/// element, steering phase across the array, and the propagation phase
/// exp(−j2πr/λ).
pub fn los_channel(params: &SystemParams, pos: PolarPosition) -> Result<ChannelVector> {
    if pos.range_m == 0.0 {
        return Err(Error::Singularity("line-of-sight channel at zero range".into()));
    }
    let lambda = params.carrier_wavelength;
    let amplitude = lambda / (4.0 * std::f64::consts::PI * pos.range_m);
    let propagation = C64::from_polar(1.0, -2.0 * std::f64::consts::PI * pos.range_m / lambda);
    let steer = steering_vector(params.num_antennas, pos.angle_deg, params.spacing_over_wavelength())?;
    Ok(steer * (propagation * amplitude))
}

/// Scalar channel between a tag and a user: the same free-space model over
/// the Euclidean distance between the two points.
pub fn tag_user_channel(tag: PolarPosition, user: PolarPosition, wavelength: f64) -> Result<C64> {
    let d = tag.distance_to(user);
    if d == 0.0 {
        return Err(Error::Singularity("tag and user are coincident".into()));
    }
    let amplitude = wavelength / (4.0 * std::f64::consts::PI * d);
    Ok(C64::from_polar(amplitude, -2.0 * std::f64::consts::PI * d / wavelength))
}

/// All channels a designer needs for one tag position.
#[derive(Debug, Clone)]
pub struct TagChannels {
    /// Access-point-to-tag channel g.
    pub g: ChannelVector,
    /// Access-point-to-user channels h_u.
    pub users: Vec<ChannelVector>,
    /// Tag-to-user scalar channels h_{t,u}.
    pub tag_user: Vec<C64>,
}

impl TagChannels {
    /// Build every channel for a tag at `tag_pos` and the given users.
    pub fn build(params: &SystemParams, tag_pos: PolarPosition, users: &[PolarPosition]) -> Result<Self> {
        let g = los_channel(params, tag_pos)?;
        let mut user_channels = Vec::with_capacity(users.len());
        let mut tag_user = Vec::with_capacity(users.len());
        for &u in users {
            user_channels.push(los_channel(params, u)?);
            tag_user.push(tag_user_channel(tag_pos, u, params.carrier_wavelength)?);
        }
        Ok(Self { g, users: user_channels, tag_user })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::Scenario;
    use approx::assert_relative_eq;

    fn params_m(m: usize) -> SystemParams {
        Scenario::default().params.with_antennas(m)
    }

    #[test]
    fn boresight_steering_is_all_ones() {
        let v = steering_vector(2, 90.0, 0.5).unwrap();
        for e in v.iter() {
            assert_relative_eq!(e.re, 1.0, epsilon = 1e-12);
            assert_relative_eq!(e.im, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn endfire_steering_alternates_sign() {
        let v = steering_vector(4, 0.0, 0.5).unwrap();
        let expect = [1.0, -1.0, 1.0, -1.0];
        for (e, want) in v.iter().zip(expect) {
            assert_relative_eq!(e.re, want, epsilon = 1e-12);
            assert_relative_eq!(e.im, 0.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn steering_phase_at_45_degrees() {
        let v = steering_vector(8, 45.0, 0.5).unwrap();
        let phase = std::f64::consts::PI * 45f64.to_radians().cos();
        assert_relative_eq!(phase, 2.221_441_469, epsilon = 1e-8);
        assert_relative_eq!(v[1].re, phase.cos(), epsilon = 1e-12);
        assert_relative_eq!(v[1].im, phase.sin(), epsilon = 1e-12);
        for e in v.iter() {
            assert_relative_eq!(e.norm(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn steering_rejects_out_of_range_angle() {
        assert!(steering_vector(4, -1.0, 0.5).is_err());
        assert!(steering_vector(4, 181.0, 0.5).is_err());
    }

    #[test]
    fn los_amplitude_is_friis() {
        let mut p = params_m(1);
        p.carrier_wavelength = 0.125;
        p.element_spacing = 0.0625;
        let g = los_channel(&p, PolarPosition::new(1.0, 90.0).unwrap()).unwrap();
        assert_relative_eq!(g[0].norm(), 9.947e-3, epsilon = 5e-6);
    }

    #[test]
    fn doubling_range_halves_magnitudes() {
        let p = params_m(4);
        let g1 = los_channel(&p, PolarPosition::new(3.0, 70.0).unwrap()).unwrap();
        let g2 = los_channel(&p, PolarPosition::new(6.0, 70.0).unwrap()).unwrap();
        for (a, b) in g1.iter().zip(g2.iter()) {
            assert_relative_eq!(a.norm(), 2.0 * b.norm(), max_relative = 1e-12);
        }
    }

    #[test]
    fn channel_gain_matches_path_loss_budget() {
        // M = 4, r = 12 m, lambda = 0.125 m: free-space path loss
        // 20*log10(4*pi*d/lambda) less the 10*log10(M) array gain.
        let mut p = params_m(4);
        p.carrier_wavelength = 0.125;
        p.element_spacing = 0.0625;
        let g = los_channel(&p, PolarPosition::new(12.0, 90.0).unwrap()).unwrap();
        let gain_db = 10.0 * g.norm_squared().log10();
        assert_relative_eq!(gain_db, -61.63 + 6.02, epsilon = 0.02);
    }

    #[test]
    fn los_rejects_zero_range() {
        let p = params_m(2);
        assert!(matches!(
            los_channel(&p, PolarPosition { range_m: 0.0, angle_deg: 90.0 }),
            Err(Error::Singularity(_))
        ));
    }

    #[test]
    fn tag_user_friis_magnitude_and_phase() {
        // one meter apart at lambda = 0.125
        let tag = PolarPosition::new(1.0, 0.0).unwrap();
        let user = PolarPosition::new(2.0, 0.0).unwrap();
        let h = tag_user_channel(tag, user, 0.125).unwrap();
        assert_relative_eq!(h.norm(), 9.947e-3, epsilon = 5e-6);

        // distance of exactly one wavelength wraps the phase fully
        let a = PolarPosition::new(1.0, 90.0).unwrap();
        let b = PolarPosition::new(1.0 + 0.125, 90.0).unwrap();
        let h = tag_user_channel(a, b, 0.125).unwrap();
        assert_relative_eq!(h.im, 0.0, epsilon = 1e-9);
        assert!(h.re > 0.0);

        // inverse-distance law
        let far = PolarPosition::new(3.0, 0.0).unwrap();
        let h1 = tag_user_channel(tag, user, 0.125).unwrap();
        let h2 = tag_user_channel(tag, far, 0.125).unwrap();
        assert_relative_eq!(h1.norm(), 2.0 * h2.norm(), max_relative = 1e-12);
    }

    #[test]
    fn tag_user_rejects_coincident_points() {
        let p = PolarPosition::new(1.0, 45.0).unwrap();
        assert!(matches!(tag_user_channel(p, p, 0.125), Err(Error::Singularity(_))));
    }
}
