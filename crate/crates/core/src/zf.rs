//! Zero-forcing beamforming with optimized sensing/communication power
//! allocation.
//!
//! Directions come from the pseudo-inverse of the stacked channel matrix, so
//! each beam nulls every other link exactly. Power allocation then reduces to
//! a small linear program; when tag activation is the binding sensitivity
//! the allocation has a closed form.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;

use crate::channel::{ChannelVector, TagChannels, C64};
use crate::error::Error;
use crate::params::{PolarPosition, SystemParams};
use crate::sinr::{Beam, BeamformingSolution};
use crate::solver::{ConicProblem, LinExpr, SolveStatusKind};
use crate::Result;

/// Relative smallest singular value below which the stacked channel matrix
/// is treated as collinear.
pub const RANK_THRESHOLD: f64 = 1e-9;

/// Normalized zero-forcing directions and their effective gains.
#[derive(Debug, Clone)]
pub struct ZfDirections {
    /// Unit-norm sensing direction.
    pub sensing: Beam,
    /// Unit-norm communication directions, one per user.
    pub comm: Vec<Beam>,
    /// |g^H f̄_s|².
    pub sensing_gain: f64,
    /// |h_u^H f̄_u|² per user.
    pub comm_gains: Vec<f64>,
}

impl ZfDirections {
    /// Largest cross-channel leakage relative to the channel norms; the ZF
    /// construction keeps this at numerical zero.
    pub fn max_relative_leakage(&self, channels: &TagChannels) -> f64 {
        let mut worst = 0.0f64;
        let gn = channels.g.norm();
        for f in &self.comm {
            worst = worst.max(channels.g.dotc(f).norm() / gn);
        }
        for (u, h) in channels.users.iter().enumerate() {
            let hn = h.norm();
            worst = worst.max(h.dotc(&self.sensing).norm() / hn);
            for (l, f) in self.comm.iter().enumerate() {
                if l != u {
                    worst = worst.max(h.dotc(f).norm() / hn);
                }
            }
        }
        worst
    }
}

/// Which sensitivity bounds the sensing power.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DominantKind {
    TagActivation,
    ReaderDetection,
}

/// The binding sensitivity constraint and the sensing-power floor it implies.
#[derive(Debug, Clone, Copy)]
pub struct DominantConstraint {
    pub which: DominantKind,
    /// max of the two lower bounds, in watts.
    pub required_sensing_power: f64,
    /// Tag-activation lower bound on P_s.
    pub tag_bound: f64,
    /// Reader-detection lower bound on P_s.
    pub reader_bound: f64,
}

/// Per-stream powers of an allocation.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerAllocation {
    pub sensing: f64,
    pub comm: Vec<f64>,
}

impl PowerAllocation {
    pub fn total(&self) -> f64 {
        self.sensing + self.comm.iter().sum::<f64>()
    }
}

/// Zero-forcing directions via the pseudo-inverse of H = [g, h_1, …, h_U].
///
/// Errors with [`Error::DegenerateGeometry`] when the stacked channels are
/// collinear (relative smallest singular value below [`RANK_THRESHOLD`]).
pub fn zf_directions(g: &ChannelVector, user_channels: &[ChannelVector]) -> Result<ZfDirections> {
    let m = g.len();
    let cols = 1 + user_channels.len();
    assert!(m >= cols, "need at least U+1 antennas");
    let mut h = DMatrix::<C64>::zeros(m, cols);
    h.column_mut(0).copy_from(g);
    for (u, hu) in user_channels.iter().enumerate() {
        h.column_mut(u + 1).copy_from(hu);
    }

    let svd = h.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smin <= RANK_THRESHOLD * smax {
        return Err(Error::DegenerateGeometry {
            sigma_ratio: smin / smax,
            threshold: RANK_THRESHOLD,
        });
    }
    // H (H^H H)^{-1} = U Σ^{-1} V^H in the thin SVD
    let u = svd.u.as_ref().expect("u requested");
    let vt = svd.v_t.as_ref().expect("v_t requested");
    let sinv = DMatrix::<C64>::from_diagonal(&DVector::from_iterator(
        cols,
        svd.singular_values.iter().map(|&s| Complex::from(1.0 / s)),
    ));
    let tilde = u * sinv * vt;

    let norm_col = |c: usize| {
        let col: Beam = tilde.column(c).into_owned();
        &col / Complex::from(col.norm())
    };
    let sensing = norm_col(0);
    let comm: Vec<Beam> = (0..user_channels.len()).map(|u| norm_col(u + 1)).collect();
    let sensing_gain = g.dotc(&sensing).norm_sqr();
    let comm_gains = user_channels
        .iter()
        .zip(&comm)
        .map(|(h, f)| h.dotc(f).norm_sqr())
        .collect();
    Ok(ZfDirections { sensing, comm, sensing_gain, comm_gains })
}

/// Evaluate both sensing-power lower bounds and return the binding one.
pub fn dominant_constraint(
    g: &ChannelVector,
    sensing_dir: &Beam,
    combiner: &ChannelVector,
    params: &SystemParams,
) -> Result<DominantConstraint> {
    let gain = g.dotc(sensing_dir).norm_sqr();
    if gain == 0.0 {
        return Err(Error::UnreachableTag);
    }
    let wg = combiner.dotc(g).norm_sqr();
    let (sigma_t2, sigma_r2) = (params.noise_tag(), params.noise_reader());
    let eta = params.backscatter_efficiency;
    let tag_bound = params.gamma_tag() * sigma_t2 / gain;
    let reader_bound = params.gamma_reader() * (eta * sigma_t2 * wg + sigma_r2) / (eta * wg * gain);
    let which = if tag_bound >= reader_bound {
        DominantKind::TagActivation
    } else {
        DominantKind::ReaderDetection
    };
    Ok(DominantConstraint {
        which,
        required_sensing_power: tag_bound.max(reader_bound),
        tag_bound,
        reader_bound,
    })
}

/// Closed-form minimum-power allocation when tag activation dominates:
/// the sensing power sits exactly on the activation bound and each user
/// power compensates its channel gain, the backscatter interference the
/// activated tag re-radiates, and receiver noise.
pub fn closed_form_power(
    dirs: &ZfDirections,
    channels: &TagChannels,
    params: &SystemParams,
) -> Result<PowerAllocation> {
    let (sigma_t2, sigma_u2) = (params.noise_tag(), params.noise_user());
    let gamma_t = params.gamma_tag();
    let gamma_u = params.user_sinr_threshold;
    let eta = params.backscatter_efficiency;
    if dirs.sensing_gain == 0.0 {
        return Err(Error::UnreachableTag);
    }
    let sensing = gamma_t * sigma_t2 / dirs.sensing_gain;
    let comm: Vec<f64> = channels
        .tag_user
        .iter()
        .zip(&dirs.comm_gains)
        .map(|(h_tu, &c_u)| {
            gamma_u * (eta * h_tu.norm_sqr() * sigma_t2 * (gamma_t + 1.0) + sigma_u2) / c_u
        })
        .collect();
    let alloc = PowerAllocation { sensing, comm };
    if alloc.total() > params.total_power {
        return Err(Error::BudgetExceeded {
            required: alloc.total(),
            budget: params.total_power,
        });
    }
    Ok(alloc)
}

/// Minimum-power allocation for fixed (not necessarily zero-forcing)
/// directions, as a linear program in the stream powers. Returns `None` when
/// no allocation meets every constraint within the budget.
pub fn power_allocation_lp(
    sensing_dir: &Beam,
    comm_dirs: &[Beam],
    channels: &TagChannels,
    params: &SystemParams,
) -> Result<Option<PowerAllocation>> {
    let nu = comm_dirs.len();
    let fs = sensing_dir / Complex::from(sensing_dir.norm());
    let fu: Vec<Beam> = comm_dirs.iter().map(|f| f / Complex::from(f.norm())).collect();

    // effective gains of the fixed directions
    let a_s = channels.g.dotc(&fs).norm_sqr();
    let a_u: Vec<f64> = fu.iter().map(|f| channels.g.dotc(f).norm_sqr()).collect();
    let b_su: Vec<f64> = channels.users.iter().map(|h| h.dotc(&fs).norm_sqr()).collect();
    let c_lu: Vec<Vec<f64>> = channels
        .users
        .iter()
        .map(|h| fu.iter().map(|f| h.dotc(f).norm_sqr()).collect())
        .collect();

    let (sigma_t2, sigma_r2, sigma_u2) =
        (params.noise_tag(), params.noise_reader(), params.noise_user());
    let (gamma_t, gamma_r, gamma_u) =
        (params.gamma_tag(), params.gamma_reader(), params.user_sinr_threshold);
    let eta = params.backscatter_efficiency;
    let wg = channels.g.norm_squared(); // combiner w = g/||g||

    let mut lp = ConicProblem::new();
    let p0 = lp.add_vars(1 + nu); // sensing power, then user powers
    let mut total = LinExpr::default();
    for i in 0..(1 + nu) {
        total.push(p0 + i, 1.0);
        lp.le(LinExpr::term(p0 + i, -1.0)); // powers nonnegative
    }
    lp.minimize(total.clone());

    // tag activation: gamma_t (Σ p_u a_u + σ_t²) ≤ p_s a_s
    let mut tag = LinExpr::constant(gamma_t * sigma_t2);
    tag.push(p0, -a_s);
    for u in 0..nu {
        tag.push(p0 + 1 + u, gamma_t * a_u[u]);
    }
    lp.le(tag);

    // reader detection: gamma_r (η wg Σ p_u a_u + η σ_t² wg + σ_r²) ≤ η wg p_s a_s
    let mut reader = LinExpr::constant(gamma_r * (eta * sigma_t2 * wg + sigma_r2));
    reader.push(p0, -eta * wg * a_s);
    for u in 0..nu {
        reader.push(p0 + 1 + u, gamma_r * eta * wg * a_u[u]);
    }
    lp.le(reader);

    // each user's SINR requirement
    for u in 0..nu {
        let htu2 = channels.tag_user[u].norm_sqr();
        let mut row = LinExpr::constant(gamma_u * (eta * htu2 * sigma_t2 + sigma_u2));
        row.push(p0, gamma_u * (b_su[u] + eta * htu2 * a_s));
        for l in 0..nu {
            let mut coeff = gamma_u * eta * htu2 * a_u[l];
            if l != u {
                coeff += gamma_u * c_lu[u][l];
            }
            row.push(p0 + 1 + l, coeff);
        }
        row.push(p0 + 1 + u, -c_lu[u][u]);
        lp.le(row);
    }

    // budget
    lp.le(total.offset(-params.total_power));

    let r = lp.solve()?;
    match r.status {
        SolveStatusKind::Optimal => Ok(Some(PowerAllocation {
            sensing: r.x[p0].max(0.0),
            comm: (0..nu).map(|u| r.x[p0 + 1 + u].max(0.0)).collect(),
        })),
        SolveStatusKind::Infeasible => Ok(None),
        SolveStatusKind::Unbounded => Err(Error::SolverFailure {
            status: "power LP unbounded".into(),
            primal: f64::NAN,
            dual: f64::NAN,
            complementarity: f64::NAN,
        }),
        SolveStatusKind::NumericalFailure => unreachable!("solve() errors on failure"),
    }
}

/// End-to-end zero-forcing design for one tag position.
///
/// Returns `Ok(None)` when the geometry is serviceable but the budget cannot
/// cover the required powers; degenerate geometry surfaces as an error.
pub fn zf_solution(
    tag_pos: PolarPosition,
    users: &[PolarPosition],
    params: &SystemParams,
) -> Result<Option<BeamformingSolution>> {
    let channels = TagChannels::build(params, tag_pos, users)?;
    let dirs = zf_directions(&channels.g, &channels.users)?;
    let combiner = &channels.g / Complex::from(channels.g.norm());
    let dominant = dominant_constraint(&channels.g, &dirs.sensing, &combiner, params)?;

    let alloc = match dominant.which {
        DominantKind::TagActivation => match closed_form_power(&dirs, &channels, params) {
            Ok(a) => Some(a),
            Err(Error::BudgetExceeded { .. }) => None,
            Err(e) => return Err(e),
        },
        DominantKind::ReaderDetection => {
            power_allocation_lp(&dirs.sensing, &dirs.comm, &channels, params)?
        }
    };
    let Some(alloc) = alloc else { return Ok(None) };
    if alloc.total() > params.total_power * (1.0 + 1e-9) {
        return Ok(None);
    }

    let f_s = &dirs.sensing * Complex::from(alloc.sensing.sqrt());
    let comm: Vec<Beam> = dirs
        .comm
        .iter()
        .zip(&alloc.comm)
        .map(|(f, &p)| f * Complex::from(p.sqrt()))
        .collect();
    Ok(Some(BeamformingSolution::assemble(f_s, comm, combiner, &channels, params)))
}
