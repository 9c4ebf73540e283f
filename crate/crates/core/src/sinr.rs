//! SINR expressions and the interrogation success test.
//!
//! These are the ground truth every designer is checked against. The tag sees
//! the sensing beam against comm-beam leakage and its own noise; the reader
//! sees the backscattered round trip; a user sees its beam against the other
//! beams, the backscatter relay, and noise.

use nalgebra::DVector;
use num_complex::Complex;

use crate::channel::{ChannelVector, TagChannels, C64};
use crate::params::SystemParams;

/// A transmit beam (unnormalized: its squared norm is the allocated power).
pub type Beam = DVector<C64>;

fn gain2(channel: &ChannelVector, beam: &Beam) -> f64 {
    channel.dotc(beam).norm_sqr()
}

/// SINR at the tag: |g^H f_s|² / (Σ_u |g^H f_u|² + σ_t²).
pub fn sinr_tag(sensing: &Beam, comm: &[Beam], g: &ChannelVector, sigma_t2: f64) -> f64 {
    let signal = gain2(g, sensing);
    let interference: f64 = comm.iter().map(|f| gain2(g, f)).sum();
    signal / (interference + sigma_t2)
}

/// SINR of the backscattered signal at the access point, for a unit-norm
/// combiner w:
/// η|w^H g|²|g^H f_s|² / (Σ_u η|w^H g|²|g^H f_u|² + η σ_t²|w^H g|² + σ_r²).
pub fn sinr_reader(
    sensing: &Beam,
    comm: &[Beam],
    g: &ChannelVector,
    combiner: &ChannelVector,
    eta: f64,
    sigma_t2: f64,
    sigma_r2: f64,
) -> f64 {
    let wg = combiner.dotc(g).norm_sqr();
    let signal = eta * wg * gain2(g, sensing);
    let interference: f64 = comm.iter().map(|f| eta * wg * gain2(g, f)).sum();
    signal / (interference + eta * sigma_t2 * wg + sigma_r2)
}

/// SINR at user `u`: the intended beam against inter-user leakage, the
/// sensing beam, the backscatter relay of everything the tag re-radiates,
/// and receiver noise.
#[allow(clippy::too_many_arguments)]
pub fn sinr_user(
    u: usize,
    sensing: &Beam,
    comm: &[Beam],
    h_u: &ChannelVector,
    g: &ChannelVector,
    h_tu: C64,
    eta: f64,
    sigma_t2: f64,
    sigma_u2: f64,
) -> f64 {
    let signal = gain2(h_u, &comm[u]);
    let inter_user: f64 = comm
        .iter()
        .enumerate()
        .filter(|(l, _)| *l != u)
        .map(|(_, f)| gain2(h_u, f))
        .sum();
    let sensing_leak = gain2(h_u, sensing);
    let backscatter = eta
        * h_tu.norm_sqr()
        * (gain2(g, sensing) + comm.iter().map(|f| gain2(g, f)).sum::<f64>() + sigma_t2);
    signal / (inter_user + sensing_leak + backscatter + sigma_u2)
}

/// One sensing beam plus the communication beams, with the combiner and the
/// realized link qualities.
#[derive(Debug, Clone)]
pub struct BeamformingSolution {
    /// Sensing beam f_s (‖f_s‖² is the sensing power).
    pub sensing_beam: Beam,
    /// Communication beams f_u.
    pub comm_beams: Vec<Beam>,
    /// Unit-norm receive combiner w.
    pub combiner: ChannelVector,
    /// ‖f_s‖² + Σ‖f_u‖² in watts.
    pub total_power: f64,
    /// Realized (tag, reader, per-user) SINRs as linear ratios.
    pub realized_sinrs: (f64, f64, Vec<f64>),
}

impl BeamformingSolution {
    /// Assemble a solution from beams, normalizing the combiner and
    /// evaluating the realized SINRs from scratch.
    pub fn assemble(
        sensing_beam: Beam,
        comm_beams: Vec<Beam>,
        combiner: ChannelVector,
        channels: &TagChannels,
        params: &SystemParams,
    ) -> Self {
        let w = &combiner / Complex::from(combiner.norm());
        let total_power =
            sensing_beam.norm_squared() + comm_beams.iter().map(|f| f.norm_squared()).sum::<f64>();
        let (sigma_t2, sigma_r2, sigma_u2) =
            (params.noise_tag(), params.noise_reader(), params.noise_user());
        let eta = params.backscatter_efficiency;
        let tag = sinr_tag(&sensing_beam, &comm_beams, &channels.g, sigma_t2);
        let reader =
            sinr_reader(&sensing_beam, &comm_beams, &channels.g, &w, eta, sigma_t2, sigma_r2);
        let users = (0..comm_beams.len())
            .map(|u| {
                sinr_user(
                    u,
                    &sensing_beam,
                    &comm_beams,
                    &channels.users[u],
                    &channels.g,
                    channels.tag_user[u],
                    eta,
                    sigma_t2,
                    sigma_u2,
                )
            })
            .collect();
        Self {
            sensing_beam,
            comm_beams,
            combiner: w,
            total_power,
            realized_sinrs: (tag, reader, users),
        }
    }

    /// Sensing power ‖f_s‖².
    pub fn sensing_power(&self) -> f64 {
        self.sensing_beam.norm_squared()
    }

    /// Per-user powers ‖f_u‖².
    pub fn comm_powers(&self) -> Vec<f64> {
        self.comm_beams.iter().map(|f| f.norm_squared()).collect()
    }
}

/// Both halves of the interrogation round trip: activation at the tag and
/// detection at the reader.
pub fn interrogation_success(
    sol: &BeamformingSolution,
    g: &ChannelVector,
    params: &SystemParams,
) -> (bool, bool) {
    let sigma_t2 = params.noise_tag();
    let tag = sinr_tag(&sol.sensing_beam, &sol.comm_beams, g, sigma_t2);
    let reader = sinr_reader(
        &sol.sensing_beam,
        &sol.comm_beams,
        g,
        &sol.combiner,
        params.backscatter_efficiency,
        sigma_t2,
        params.noise_reader(),
    );
    (tag >= params.gamma_tag(), reader >= params.gamma_reader())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::los_channel;
    use crate::params::{PolarPosition, Scenario};
    use approx::assert_relative_eq;
    use nalgebra::DVector;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn matched_full_power(g: &ChannelVector, p: f64) -> Beam {
        g * Complex::from((p / g.norm_squared()).sqrt())
    }

    fn random_beam(rng: &mut ChaCha8Rng, m: usize) -> Beam {
        DVector::from_fn(m, |_, _| C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
    }

    #[test]
    fn matched_beam_without_interference() {
        let s = Scenario::default();
        let g = los_channel(&s.params, PolarPosition::new(4.0, 60.0).unwrap()).unwrap();
        let sigma_t2 = s.params.noise_tag();
        let f_s = matched_full_power(&g, s.params.total_power);
        let got = sinr_tag(&f_s, &[], &g, sigma_t2);
        assert_relative_eq!(
            got,
            s.params.total_power * g.norm_squared() / sigma_t2,
            max_relative = 1e-12
        );
    }

    #[test]
    fn orthogonal_sensing_beam_gives_zero() {
        let g = DVector::from_vec(vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0)]);
        let f_s = DVector::from_vec(vec![C64::new(0.0, 0.0), C64::new(3.0, 0.0)]);
        assert_eq!(sinr_tag(&f_s, &[], &g, 1e-12), 0.0);
    }

    #[test]
    fn reader_collapses_to_matched_expression() {
        let s = Scenario::default();
        let p = &s.params;
        let g = los_channel(p, PolarPosition::new(10.0, 90.0).unwrap()).unwrap();
        let w = &g / Complex::from(g.norm());
        let f_s = matched_full_power(&g, p.total_power);
        let eta = p.backscatter_efficiency;
        let (st2, sr2) = (p.noise_tag(), p.noise_reader());
        let got = sinr_reader(&f_s, &[], &g, &w, eta, st2, sr2);
        let n2 = g.norm_squared();
        let expect = eta * n2 * p.total_power * n2 / (eta * st2 * n2 + sr2);
        assert_relative_eq!(got, expect, max_relative = 1e-12);
    }

    #[test]
    fn reader_sinr_vanishes_as_noise_grows() {
        let s = Scenario::default();
        let g = los_channel(&s.params, PolarPosition::new(3.0, 80.0).unwrap()).unwrap();
        let w = &g / Complex::from(g.norm());
        let f_s = matched_full_power(&g, 1.0);
        let small = sinr_reader(&f_s, &[], &g, &w, 0.16, 1e-14, 1e6);
        assert!(small < 1e-12);
    }

    #[test]
    fn user_sinr_without_backscatter_path() {
        // single user, matched beam, sensing orthogonal to the user channel
        let h = DVector::from_vec(vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0)]);
        let g = DVector::from_vec(vec![C64::new(0.0, 0.0), C64::new(1.0, 0.0)]);
        let p_u = 0.3;
        let f_u = &h * Complex::from((p_u / h.norm_squared()).sqrt());
        let f_s = DVector::from_vec(vec![C64::new(0.0, 0.0), C64::new(0.7, 0.0)]);
        let sigma_u2 = 2.5e-13;
        let got = sinr_user(0, &f_s, &[f_u], &h, &g, C64::new(0.0, 0.0), 0.0, 1e-14, sigma_u2);
        assert_relative_eq!(got, p_u * h.norm_squared() / sigma_u2, max_relative = 1e-12);
    }

    #[test]
    fn zero_comm_beam_means_zero_user_sinr() {
        let h = DVector::from_vec(vec![C64::new(1.0, 0.2), C64::new(-0.3, 0.1)]);
        let g = DVector::from_vec(vec![C64::new(0.1, 0.0), C64::new(0.5, -0.4)]);
        let f_u = DVector::zeros(2);
        let f_s = DVector::from_vec(vec![C64::new(0.4, 0.0), C64::new(0.0, 0.3)]);
        let got = sinr_user(0, &f_s, &[f_u], &h, &g, C64::new(1e-3, 0.0), 0.16, 1e-14, 1e-13);
        assert_eq!(got, 0.0);
    }

    /// Symbol-level Monte-Carlo estimate of each SINR: unit-power symbol and
    /// tag-data draws with receiver noise, averaging received component
    /// powers. Independent of the closed-form path.
    struct McSinr {
        tag: f64,
        reader: f64,
        users: Vec<f64>,
    }

    fn mc_sinr(
        rng: &mut ChaCha8Rng,
        samples: usize,
        f_s: &Beam,
        comm: &[Beam],
        g: &ChannelVector,
        h: &[ChannelVector],
        h_tu: &[C64],
        w: &ChannelVector,
        eta: f64,
        sigma_t2: f64,
        sigma_r2: f64,
        sigma_u2: f64,
    ) -> McSinr {
        // complex Gaussian via Box-Muller, E|z|^2 = sigma2
        let mut cn = |sigma2: f64| {
            let u1: f64 = rng.gen::<f64>().max(1e-300);
            let u2: f64 = rng.gen();
            let r = (-2.0 * u1.ln() * sigma2 / 2.0).sqrt();
            let phi = 2.0 * std::f64::consts::PI * u2;
            C64::new(r * phi.cos(), r * phi.sin())
        };
        let gs = g.dotc(f_s);
        let gu: Vec<C64> = comm.iter().map(|f| g.dotc(f)).collect();
        let wg = w.dotc(g);
        let mut tag_sig = 0.0;
        let mut tag_int = 0.0;
        let mut rd_sig = 0.0;
        let mut rd_int = 0.0;
        let nu = comm.len();
        let mut us_sig = vec![0.0; nu];
        let mut us_int = vec![0.0; nu];
        for _ in 0..samples {
            let s_t = cn(1.0);
            let s_u: Vec<C64> = (0..nu).map(|_| cn(1.0)).collect();
            let d = cn(1.0);
            let n_t = cn(sigma_t2);
            // at the tag
            tag_sig += (gs * s_t).norm_sqr();
            tag_int += gu.iter().zip(&s_u).map(|(a, s)| (a * s).norm_sqr()).sum::<f64>()
                + n_t.norm_sqr();
            // backscattered at the reader (projected noise is scalar under w)
            let relay = eta.sqrt() * d * wg;
            rd_sig += (relay * gs * s_t).norm_sqr();
            let n_r = cn(sigma_r2);
            rd_int += gu.iter().zip(&s_u).map(|(a, s)| (relay * a * s).norm_sqr()).sum::<f64>()
                + (relay * n_t).norm_sqr()
                + n_r.norm_sqr();
            // at each user
            for u in 0..nu {
                let hu = &h[u];
                let direct: C64 = hu.dotc(&comm[u]) * s_u[u];
                us_sig[u] += direct.norm_sqr();
                let mut inter = C64::new(0.0, 0.0);
                for (l, f) in comm.iter().enumerate() {
                    if l != u {
                        inter += hu.dotc(f) * s_u[l];
                    }
                }
                inter += hu.dotc(f_s) * s_t;
                let incident = gs * s_t + gu.iter().zip(&s_u).map(|(a, s)| a * s).sum::<C64>() + n_t;
                inter += h_tu[u] * eta.sqrt() * d * incident;
                let n_u = cn(sigma_u2);
                us_int[u] += inter.norm_sqr() + n_u.norm_sqr();
            }
        }
        McSinr {
            tag: tag_sig / tag_int,
            reader: rd_sig / rd_int,
            users: us_sig.iter().zip(&us_int).map(|(s, i)| s / i).collect(),
        }
    }

    #[test]
    fn sinr_formulas_match_symbol_level_monte_carlo() {
        let s = Scenario::default();
        let p = s.params.with_antennas(4);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (st2, sr2, su2) = (p.noise_tag(), p.noise_reader(), p.noise_user());
        for trial in 0..3 {
            let g = los_channel(&p, PolarPosition::new(3.0 + trial as f64, 70.0).unwrap()).unwrap();
            let h = los_channel(&p, PolarPosition::new(5.0, 135.0).unwrap()).unwrap();
            let h_tu = C64::new(2e-3, 1e-3);
            let f_s = random_beam(&mut rng, 4) * Complex::from(0.5);
            let f_u = random_beam(&mut rng, 4) * Complex::from(0.3);
            let w = &g / Complex::from(g.norm());
            let comm = vec![f_u];
            let eta = p.backscatter_efficiency;

            let mc = mc_sinr(
                &mut rng, 100_000, &f_s, &comm, &g, &[h.clone()], &[h_tu], &w, eta, st2, sr2, su2,
            );
            let tag = sinr_tag(&f_s, &comm, &g, st2);
            let reader = sinr_reader(&f_s, &comm, &g, &w, eta, st2, sr2);
            let user = sinr_user(0, &f_s, &comm, &h, &g, h_tu, eta, st2, su2);
            assert_relative_eq!(mc.tag, tag, max_relative = 0.01);
            assert_relative_eq!(mc.reader, reader, max_relative = 0.01);
            assert_relative_eq!(mc.users[0], user, max_relative = 0.01);
        }
    }

    #[test]
    fn interrogation_round_trip_over_distance() {
        let s = Scenario::default();
        let p = s.params.with_antennas(4);
        // deep inside the feasible range
        let near = PolarPosition::new(1.0, 90.0).unwrap();
        let g = los_channel(&p, near).unwrap();
        let chans = TagChannels { g: g.clone(), users: vec![], tag_user: vec![] };
        let f_s = matched_full_power(&g, p.total_power);
        let sol = BeamformingSolution::assemble(f_s, vec![], g.clone(), &chans, &p);
        assert_eq!(interrogation_success(&sol, &g, &p), (true, true));

        // far beyond any feasible range
        let far = PolarPosition::new(40.0, 90.0).unwrap();
        let g = los_channel(&p, far).unwrap();
        let chans = TagChannels { g: g.clone(), users: vec![], tag_user: vec![] };
        let f_s = matched_full_power(&g, p.total_power);
        let sol = BeamformingSolution::assemble(f_s, vec![], g.clone(), &chans, &p);
        let (tag_ok, _) = interrogation_success(&sol, &g, &p);
        assert!(!tag_ok);

        // zero beams fail both checks
        let zero = BeamformingSolution::assemble(
            DVector::zeros(4),
            vec![],
            g.clone(),
            &chans,
            &p,
        );
        assert_eq!(interrogation_success(&zero, &g, &p), (false, false));
    }

    #[test]
    fn reader_and_tag_margins_cross_over() {
        // at the crossover distance the two sensitivity margins coincide
        let s = Scenario::default();
        let p = s.params.with_antennas(4);
        let (gt, gr) = (p.gamma_tag(), p.gamma_reader());
        let (st2, sr2) = (p.noise_tag(), p.noise_reader());
        let eta = p.backscatter_efficiency;
        // ||g||^2 at which the two lower bounds of the dominant-constraint
        // analysis agree (tag_sens * eta * n2 = gamma_r * (eta st2 n2 + sr2))
        let n2 = gr * sr2 / (eta * (p.tag_sensitivity - gr * st2));
        let amp = p.carrier_wavelength / (4.0 * std::f64::consts::PI);
        let r = amp * (p.num_antennas as f64 / n2).sqrt();
        assert!((r - 21.1).abs() < 0.5, "crossover at {r:.2} m");
        let g = los_channel(&p, PolarPosition::new(r, 90.0).unwrap()).unwrap();
        let w = &g / Complex::from(g.norm());
        let f_s = matched_full_power(&g, p.total_power);
        let tag_margin = sinr_tag(&f_s, &[], &g, st2) / gt;
        let reader_margin = sinr_reader(&f_s, &[], &g, &w, eta, st2, sr2) / gr;
        assert_relative_eq!(tag_margin, reader_margin, max_relative = 1e-9);
    }
}
