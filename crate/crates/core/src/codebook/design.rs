//! Codebook assembly, verification, persistence, and evaluation.
//!
//! The sector codebook applies the decomposition to each angular slice and
//! extracts rank-1 beams from the covariances. Extraction can break
//! constraints the covariances satisfied, so every codeword is re-verified
//! with exact SINRs: the realized coverage pattern is stored next to the
//! SDR-claimed one, and a user-SINR violation is first fought with the
//! remaining power budget and otherwise flagged.

use num_complex::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{los_channel, TagChannels, C64};
use crate::codebook::gbd::gbd_sector;
use crate::codebook::grid::default_delta_theta;
use crate::codebook::sdr::{forms_for_sector, rank1_extract, SdrForms};
use crate::error::Error;
use crate::joint::{joint_min_power, max_interrogation_distance, Designer, SocpInstance};
use crate::params::{PolarPosition, Scenario};
use crate::sinr::{sinr_reader, sinr_tag, sinr_user, Beam};
use crate::Result;

/// Tuning knobs for codebook construction.
#[derive(Debug, Clone)]
pub struct CodebookOptions {
    /// Decomposition termination gap; 0.5 is exact for the integer objective.
    pub epsilon: f64,
    /// Angular sub-step override in degrees (defaults to 1°, or 0.5° for
    /// 1°-wide sectors).
    pub delta_theta: Option<f64>,
    /// Decomposition iteration cap per sector.
    pub iteration_cap: usize,
    /// Coarse step of the single-tag distance sweep, in meters.
    pub distance_step: f64,
}

impl Default for CodebookOptions {
    fn default() -> Self {
        Self { epsilon: 0.5, delta_theta: None, iteration_cap: 200, distance_step: 0.25 }
    }
}

/// One swept codeword: beams, sector bounds, and coverage bookkeeping.
#[derive(Debug, Clone)]
pub struct Codeword {
    pub theta_min: f64,
    pub theta_max: f64,
    pub sensing: Beam,
    pub comm: Vec<Beam>,
    /// ‖f_s‖² + Σ‖f_u‖² in watts.
    pub power: f64,
    /// Reference positions of the sector grid.
    pub grid_positions: Vec<PolarPosition>,
    /// Coverage the relaxation claimed at the grid points.
    pub claimed: Vec<u8>,
    /// Coverage re-verified with the extracted beams.
    pub realized: Vec<u8>,
    /// User requirement unrecoverable after extraction.
    pub flagged: bool,
    /// Decomposition reached its gap target.
    pub converged: bool,
}

impl Codeword {
    /// Exact interrogation-and-service test for a tag with the given
    /// channels: both sensitivities and every user's SINR under this tag's
    /// backscatter interference.
    pub fn covers(&self, channels: &TagChannels, scenario: &Scenario) -> bool {
        let p = &scenario.params;
        let g = &channels.g;
        let w = g / Complex::from(g.norm());
        let (st2, sr2, su2) = (p.noise_tag(), p.noise_reader(), p.noise_user());
        let eta = p.backscatter_efficiency;
        if sinr_tag(&self.sensing, &self.comm, g, st2) < p.gamma_tag() {
            return false;
        }
        if sinr_reader(&self.sensing, &self.comm, g, &w, eta, st2, sr2) < p.gamma_reader() {
            return false;
        }
        for u in 0..self.comm.len() {
            let s = sinr_user(
                u,
                &self.sensing,
                &self.comm,
                &channels.users[u],
                g,
                channels.tag_user[u],
                eta,
                st2,
                su2,
            );
            if s < p.user_sinr_threshold {
                return false;
            }
        }
        true
    }
}

/// An ordered sweep of codewords.
#[derive(Debug, Clone)]
pub struct Codebook {
    pub theta_step: f64,
    pub codewords: Vec<Codeword>,
    /// Sectors that produced no codeword, with the reason.
    pub failures: Vec<(f64, f64, String)>,
}

/// Angular slices `[kΘ, (k+1)Θ]` covering `[0°, 180°]`, the last one
/// truncated when the step does not divide 180.
pub fn sector_bounds(theta_step: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut lo = 0.0;
    while lo < 180.0 - 1e-9 {
        let hi = (lo + theta_step).min(180.0);
        out.push((lo, hi));
        lo = hi;
    }
    out
}

/// Maximum interrogation distance per angle on a `delta_theta` lattice over
/// `[0°, 180°]`, from the joint single-tag design. Index k holds the radius
/// at angle `k·delta_theta`.
pub fn interrogation_radius_table(
    scenario: &Scenario,
    delta_theta: f64,
    distance_step: f64,
) -> Result<Vec<f64>> {
    let n = (180.0 / delta_theta).round() as usize;
    (0..=n)
        .into_par_iter()
        .map(|k| {
            let angle = (k as f64 * delta_theta).min(180.0);
            Ok(max_interrogation_distance(
                angle,
                &scenario.users,
                &scenario.params,
                Designer::Joint,
                distance_step,
            )?
            .distance)
        })
        .collect()
}

/// Angle-to-radius lookup over a lattice table.
pub fn radius_from_table(table: &[f64], delta_theta: f64, angle: f64) -> f64 {
    let idx = (angle / delta_theta).round() as usize;
    table[idx.min(table.len() - 1)]
}

/// Design the sector-sweeping codebook: one decomposition per slice, rank-1
/// extraction, exact re-verification part of every codeword.
pub fn design_codebook(
    scenario: &Scenario,
    theta_step: f64,
    options: &CodebookOptions,
    radius_fn: Option<&(dyn Fn(f64) -> f64 + Sync)>,
) -> Result<Codebook> {
    let bounds = sector_bounds(theta_step);
    let table;
    let radius: &(dyn Fn(f64) -> f64 + Sync) = match radius_fn {
        Some(f) => f,
        None => {
            let dt = options
                .delta_theta
                .unwrap_or_else(|| default_delta_theta(0.0, theta_step));
            table = (interrogation_radius_table(scenario, dt, options.distance_step)?, dt);
            &move |angle: f64| radius_from_table(&table.0, table.1, angle)
        }
    };

    let results: Vec<std::result::Result<Codeword, (f64, f64, String)>> = bounds
        .par_iter()
        .map(|&(lo, hi)| {
            design_sector(scenario, lo, hi, options, radius).map_err(|e| (lo, hi, e.to_string()))
        })
        .collect();

    let mut codewords = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(cw) => codewords.push(cw),
            Err(f) => failures.push(f),
        }
    }
    Ok(Codebook { theta_step, codewords, failures })
}

fn design_sector(
    scenario: &Scenario,
    theta_min: f64,
    theta_max: f64,
    options: &CodebookOptions,
    radius: &(dyn Fn(f64) -> f64 + Sync),
) -> Result<Codeword> {
    let params = &scenario.params;
    let dt = options
        .delta_theta
        .unwrap_or_else(|| default_delta_theta(theta_min, theta_max));
    let forms = forms_for_sector(theta_min, theta_max, params, &scenario.users, dt, &radius)?;
    let outcome = gbd_sector(&forms, params, options.epsilon, options.iteration_cap)?;

    let mut sensing = rank1_extract(&outcome.f_s);
    let mut comm: Vec<Beam> = outcome.f_u.iter().map(rank1_extract).collect();

    // trace power carries through extraction; clamp rounding overshoot
    let total =
        sensing.norm_squared() + comm.iter().map(|f| f.norm_squared()).sum::<f64>();
    if total > params.total_power {
        let shrink = Complex::from((params.total_power / total).sqrt());
        sensing *= shrink;
        for f in comm.iter_mut() {
            *f *= shrink;
        }
    }

    // re-verify with exact SINRs; a broken user constraint gets the unused
    // budget before the codeword is flagged
    let (mut realized, mut user_ok) = verify_against_grid(&forms, &sensing, &comm);
    let mut flagged = false;
    if !user_ok && !comm.is_empty() {
        let comm_power: f64 = comm.iter().map(|f| f.norm_squared()).sum();
        let headroom = params.total_power - sensing.norm_squared();
        if comm_power > 0.0 && headroom > comm_power {
            let boost = Complex::from((headroom / comm_power).sqrt());
            for f in comm.iter_mut() {
                *f *= boost;
            }
            let redo = verify_against_grid(&forms, &sensing, &comm);
            realized = redo.0;
            user_ok = redo.1;
        }
        flagged = !user_ok;
    }

    let power =
        sensing.norm_squared() + comm.iter().map(|f| f.norm_squared()).sum::<f64>();
    Ok(Codeword {
        theta_min,
        theta_max,
        sensing,
        comm,
        power,
        grid_positions: forms.grid.points.iter().map(|p| p.position).collect(),
        claimed: outcome.claimed,
        realized,
        flagged,
        converged: outcome.state.converged,
    })
}

/// Exact per-grid-point verification of extracted beams: the realized
/// sensitivity pattern and whether every user constraint holds at every
/// reference position.
fn verify_against_grid(forms: &SdrForms, sensing: &Beam, comm: &[Beam]) -> (Vec<u8>, bool) {
    let mut realized = Vec::with_capacity(forms.num_points());
    let mut user_ok = true;
    for point in &forms.grid.points {
        let g = &point.channel;
        let w = g / Complex::from(g.norm());
        let tag = sinr_tag(sensing, comm, g, forms.sigma_t2) >= forms.gamma_t;
        let reader = sinr_reader(sensing, comm, g, &w, forms.eta, forms.sigma_t2, forms.sigma_r2)
            >= forms.gamma_r;
        realized.push(u8::from(tag && reader));
        for (u, h) in forms.user_channels.iter().enumerate() {
            let s = sinr_user(
                u,
                sensing,
                comm,
                h,
                g,
                point.tag_user[u],
                forms.eta,
                forms.sigma_t2,
                forms.sigma_u2,
            );
            if s < forms.gamma_u {
                user_ok = false;
            }
        }
    }
    (realized, user_ok)
}

/// The point-targeting baseline: one single-tag joint design per integer
/// degree, each aimed at the maximum interrogation distance of its angle.
pub fn point_targeting_codebook(
    scenario: &Scenario,
    options: &CodebookOptions,
    radius_fn: Option<&(dyn Fn(f64) -> f64 + Sync)>,
) -> Result<Codebook> {
    let table;
    let radius: &(dyn Fn(f64) -> f64 + Sync) = match radius_fn {
        Some(f) => f,
        None => {
            table = interrogation_radius_table(scenario, 1.0, options.distance_step)?;
            &move |angle: f64| radius_from_table(&table, 1.0, angle)
        }
    };
    let angles: Vec<f64> = (0..=180).map(f64::from).collect();
    let results: Vec<std::result::Result<Option<Codeword>, (f64, f64, String)>> = angles
        .par_iter()
        .map(|&angle| {
            let r = radius(angle);
            if r <= 0.0 {
                return Ok(None);
            }
            let build = || -> Result<Option<Codeword>> {
                let pos = PolarPosition::new(r, angle)?;
                let inst = SocpInstance::new(&scenario.params, pos, &scenario.users)?;
                let Some(sol) = joint_min_power(&inst, &scenario.params)? else {
                    return Ok(None);
                };
                Ok(Some(Codeword {
                    theta_min: angle,
                    theta_max: angle,
                    power: sol.total_power,
                    sensing: sol.sensing_beam,
                    comm: sol.comm_beams,
                    grid_positions: vec![pos],
                    claimed: vec![1],
                    realized: vec![1],
                    flagged: false,
                    converged: true,
                }))
            };
            build().map_err(|e| (angle, angle, e.to_string()))
        })
        .collect();

    let mut codewords = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(Some(cw)) => codewords.push(cw),
            Ok(None) => {}
            Err(f) => failures.push(f),
        }
    }
    Ok(Codebook { theta_step: 1.0, codewords, failures })
}

/// Outcome of sweeping a codebook over a tag population.
#[derive(Debug, Clone)]
pub struct EvalReport {
    /// Fraction of tags some codeword interrogates while serving every user.
    pub success_rate: f64,
    pub covered: Vec<bool>,
    /// No tags were given; the rate is vacuous.
    pub empty: bool,
}

/// Sweep every codeword over every tag and score coverage.
pub fn evaluate_codebook(
    codebook: &Codebook,
    tags: &[PolarPosition],
    scenario: &Scenario,
) -> Result<EvalReport> {
    if tags.is_empty() {
        return Ok(EvalReport { success_rate: 1.0, covered: vec![], empty: true });
    }
    let covered: Vec<bool> = tags
        .par_iter()
        .map(|&tag| {
            let channels = TagChannels::build(&scenario.params, tag, &scenario.users)?;
            Ok(codebook.codewords.iter().any(|cw| cw.covers(&channels, scenario)))
        })
        .collect::<Result<Vec<_>>>()?;
    let hits = covered.iter().filter(|&&c| c).count();
    Ok(EvalReport { success_rate: hits as f64 / tags.len() as f64, covered, empty: false })
}

// ---------------------------------------------------------------------------
// persistence

const CODEBOOK_FORMAT: &str = "tagsweep-codebook";
const CODEBOOK_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ComplexVecFile {
    re: Vec<f64>,
    im: Vec<f64>,
}

impl ComplexVecFile {
    fn from_beam(beam: &Beam) -> Self {
        Self { re: beam.iter().map(|c| c.re).collect(), im: beam.iter().map(|c| c.im).collect() }
    }

    fn to_beam(&self) -> Result<Beam> {
        if self.re.len() != self.im.len() {
            return Err(Error::Config("beam re/im length mismatch".into()));
        }
        Ok(Beam::from_iterator(
            self.re.len(),
            self.re.iter().zip(&self.im).map(|(&r, &i)| C64::new(r, i)),
        ))
    }
}

#[derive(Serialize, Deserialize)]
struct GridEntryFile {
    range_m: f64,
    angle_deg: f64,
    claimed: u8,
    realized: u8,
}

#[derive(Serialize, Deserialize)]
struct CodewordFile {
    theta_min_deg: f64,
    theta_max_deg: f64,
    power_w: f64,
    flagged: bool,
    converged: bool,
    sensing: ComplexVecFile,
    comm: Vec<ComplexVecFile>,
    grid: Vec<GridEntryFile>,
}

#[derive(Serialize, Deserialize)]
struct CodebookFile {
    format: String,
    version: u32,
    theta_step_deg: f64,
    codewords: Vec<CodewordFile>,
    failures: Vec<(f64, f64, String)>,
}

impl Codebook {
    pub fn to_json(&self) -> String {
        let file = CodebookFile {
            format: CODEBOOK_FORMAT.into(),
            version: CODEBOOK_VERSION,
            theta_step_deg: self.theta_step,
            codewords: self
                .codewords
                .iter()
                .map(|cw| CodewordFile {
                    theta_min_deg: cw.theta_min,
                    theta_max_deg: cw.theta_max,
                    power_w: cw.power,
                    flagged: cw.flagged,
                    converged: cw.converged,
                    sensing: ComplexVecFile::from_beam(&cw.sensing),
                    comm: cw.comm.iter().map(ComplexVecFile::from_beam).collect(),
                    grid: cw
                        .grid_positions
                        .iter()
                        .zip(cw.claimed.iter().zip(&cw.realized))
                        .map(|(pos, (&c, &r))| GridEntryFile {
                            range_m: pos.range_m,
                            angle_deg: pos.angle_deg,
                            claimed: c,
                            realized: r,
                        })
                        .collect(),
                })
                .collect(),
            failures: self.failures.clone(),
        };
        serde_json::to_string_pretty(&file).expect("codebook serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: CodebookFile = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("codebook parse error: {e}")))?;
        if file.format != CODEBOOK_FORMAT {
            return Err(Error::Config(format!("unknown codebook format '{}'", file.format)));
        }
        if file.version != CODEBOOK_VERSION {
            return Err(Error::Config(format!("unsupported codebook version {}", file.version)));
        }
        let codewords = file
            .codewords
            .into_iter()
            .map(|cw| {
                Ok(Codeword {
                    theta_min: cw.theta_min_deg,
                    theta_max: cw.theta_max_deg,
                    power: cw.power_w,
                    sensing: cw.sensing.to_beam()?,
                    comm: cw.comm.iter().map(|c| c.to_beam()).collect::<Result<Vec<_>>>()?,
                    grid_positions: cw
                        .grid
                        .iter()
                        .map(|g| PolarPosition::new(g.range_m, g.angle_deg))
                        .collect::<Result<Vec<_>>>()?,
                    claimed: cw.grid.iter().map(|g| g.claimed).collect(),
                    realized: cw.grid.iter().map(|g| g.realized).collect(),
                    flagged: cw.flagged,
                    converged: cw.converged,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Codebook { theta_step: file.theta_step_deg, codewords, failures: file.failures })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json())
            .map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn sector_bounds_cover_the_semicircle() {
        let five = sector_bounds(5.0);
        assert_eq!(five.len(), 36);
        assert_eq!(five[0], (0.0, 5.0));
        assert_eq!(five[35], (175.0, 180.0));
        let one = sector_bounds(1.0);
        assert_eq!(one.len(), 180);
        // non-divisor step truncates the last slice
        let seven = sector_bounds(7.0);
        assert_eq!(seven.len(), 26);
        assert_relative_eq!(seven[25].1, 180.0);
        assert!(seven[25].1 - seven[25].0 < 7.0);
    }

    #[test]
    fn designed_codebook_respects_the_budget() {
        let s = Scenario::default();
        let options = CodebookOptions {
            delta_theta: Some(5.0),
            ..Default::default()
        };
        let cb = design_codebook(&s, 45.0, &options, Some(&|_| 3.0)).unwrap();
        assert!(cb.failures.is_empty(), "failures: {:?}", cb.failures);
        assert_eq!(cb.codewords.len(), 4);
        for cw in &cb.codewords {
            assert!(cw.power <= s.params.total_power * (1.0 + 1e-9));
            assert!(cw.converged);
            assert_eq!(cw.claimed.len(), cw.grid_positions.len());
            assert_eq!(cw.realized.len(), cw.grid_positions.len());
        }
    }

    #[test]
    fn realized_coverage_holds_on_covered_grid_points() {
        let s = Scenario::default();
        let options = CodebookOptions { delta_theta: Some(4.0), ..Default::default() };
        let cb = design_codebook(&s, 8.0, &options, Some(&|_| 3.0)).unwrap();
        // restrict to the sector around boresight
        let cw = cb
            .codewords
            .iter()
            .find(|c| c.theta_min <= 88.0 && 88.0 <= c.theta_max)
            .expect("boresight sector");
        let covered: Vec<_> = cw
            .grid_positions
            .iter()
            .zip(&cw.realized)
            .filter(|(_, &r)| r == 1)
            .map(|(p, _)| *p)
            .collect();
        assert!(!covered.is_empty());
        for pos in covered {
            let chans = TagChannels::build(&s.params, pos, &s.users).unwrap();
            assert!(cw.covers(&chans, &s), "covered grid point {pos:?} fails the exact sweep test");
        }
    }

    #[test]
    fn empty_tag_set_is_vacuously_covered() {
        let s = Scenario::default();
        let cb = Codebook { theta_step: 5.0, codewords: vec![], failures: vec![] };
        let report = evaluate_codebook(&cb, &[], &s).unwrap();
        assert!(report.empty);
        assert_eq!(report.success_rate, 1.0);
    }

    #[test]
    fn codebook_json_round_trip() {
        let s = Scenario::default();
        let options = CodebookOptions { delta_theta: Some(10.0), ..Default::default() };
        let cb = design_codebook(&s, 90.0, &options, Some(&|_| 2.0)).unwrap();
        let text = cb.to_json();
        assert!(text.contains("tagsweep-codebook"));
        let back = Codebook::from_json(&text).unwrap();
        assert_eq!(back.codewords.len(), cb.codewords.len());
        for (a, b) in cb.codewords.iter().zip(&back.codewords) {
            assert_eq!(a.sensing, b.sensing);
            assert_eq!(a.realized, b.realized);
            assert_relative_eq!(a.power, b.power, max_relative = 1e-15);
        }
        // version guard
        let bad = text.replace("\"version\": 1", "\"version\": 9");
        assert!(Codebook::from_json(&bad).is_err());
    }
}
