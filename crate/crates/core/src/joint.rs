//! Joint sensing/communication beam design by transmit-power minimization.
//!
//! The fractional SINR constraints become second-order cones after a phase
//! rotation pins each beam's useful inner product to the real axis; the
//! rotated problem is convex and its optimum is a global minimum of the
//! original feasibility problem's power.

use num_complex::Complex;

use nalgebra::DVector;

use crate::channel::{ChannelVector, TagChannels, C64};
use crate::error::Error;
use crate::params::{PolarPosition, SystemParams};
use crate::sinr::{Beam, BeamformingSolution};
use crate::solver::{ConicProblem, LinExpr, SolveStatusKind};
use crate::zf::zf_solution;
use crate::Result;

/// Hard cap on tag ranges explored by the distance sweep, in meters.
const MAX_SWEEP_RANGE: f64 = 60.0;

/// Everything one power-minimization solve needs.
#[derive(Debug, Clone)]
pub struct SocpInstance {
    pub channels: TagChannels,
    pub gamma_t: f64,
    pub gamma_r: f64,
    pub gamma_u: f64,
    pub sigma_t2: f64,
    pub sigma_r2: f64,
    pub sigma_u2: f64,
    pub eta: f64,
    pub budget: f64,
    /// Unit-norm receive combiner.
    pub combiner: ChannelVector,
}

impl SocpInstance {
    /// Build an instance from geometry, with the matched combiner w = g/‖g‖.
    pub fn new(
        params: &SystemParams,
        tag_pos: PolarPosition,
        users: &[PolarPosition],
    ) -> Result<Self> {
        let channels = TagChannels::build(params, tag_pos, users)?;
        Ok(Self::from_channels(params, channels))
    }

    pub fn from_channels(params: &SystemParams, channels: TagChannels) -> Self {
        let combiner = &channels.g / Complex::from(channels.g.norm());
        Self {
            gamma_t: params.gamma_tag(),
            gamma_r: params.gamma_reader(),
            gamma_u: params.user_sinr_threshold,
            sigma_t2: params.noise_tag(),
            sigma_r2: params.noise_reader(),
            sigma_u2: params.noise_user(),
            eta: params.backscatter_efficiency,
            budget: params.total_power,
            combiner,
            channels,
        }
    }
}

/// Indices of one complex beam inside the flat variable vector.
#[derive(Clone, Copy)]
struct BeamVars {
    re: usize,
    im: usize,
    len: usize,
}

impl BeamVars {
    fn alloc(p: &mut ConicProblem, m: usize) -> Self {
        let re = p.add_vars(m);
        let im = p.add_vars(m);
        Self { re, im, len: m }
    }

    /// Re{a^H f} over the beam variables.
    fn re_inner(&self, a: &ChannelVector) -> LinExpr {
        let mut e = LinExpr::default();
        for k in 0..self.len {
            e.push(self.re + k, a[k].re);
            e.push(self.im + k, a[k].im);
        }
        e
    }

    /// Im{a^H f} over the beam variables.
    fn im_inner(&self, a: &ChannelVector) -> LinExpr {
        let mut e = LinExpr::default();
        for k in 0..self.len {
            e.push(self.im + k, a[k].re);
            e.push(self.re + k, -a[k].im);
        }
        e
    }

    fn extract(&self, x: &[f64]) -> Beam {
        DVector::from_fn(self.len, |k, _| C64::new(x[self.re + k], x[self.im + k]))
    }
}

/// Minimize ‖f_s‖² + Σ‖f_u‖² subject to the tag, reader, and user SINR cones
/// and the power budget. Returns `Ok(None)` on a certified infeasibility.
pub fn joint_min_power(
    instance: &SocpInstance,
    params: &SystemParams,
) -> Result<Option<BeamformingSolution>> {
    let m = instance.channels.g.len();
    let nu = instance.channels.users.len();
    let g = &instance.channels.g;

    let mut p = ConicProblem::new();
    let f_s = BeamVars::alloc(&mut p, m);
    let f_u: Vec<BeamVars> = (0..nu).map(|_| BeamVars::alloc(&mut p, m)).collect();
    let t = p.add_vars(1);
    p.minimize(LinExpr::var(t));

    // one phase rotation per beam: the useful inner product is real
    p.eq(f_s.im_inner(g));
    for (u, fu) in f_u.iter().enumerate() {
        p.eq(fu.im_inner(&instance.channels.users[u]));
    }

    // tag activation cone
    let sigma_t = instance.sigma_t2.sqrt();
    let mut tail: Vec<LinExpr> = Vec::new();
    for fu in &f_u {
        tail.push(fu.re_inner(g));
        tail.push(fu.im_inner(g));
    }
    tail.push(LinExpr::constant(sigma_t));
    p.soc(f_s.re_inner(g).scale(1.0 / instance.gamma_t.sqrt()), tail);

    // reader detection cone
    let a = instance.combiner.dotc(g).norm();
    let sqrt_eta = instance.eta.sqrt();
    let mut tail: Vec<LinExpr> = Vec::new();
    for fu in &f_u {
        tail.push(fu.re_inner(g).scale(sqrt_eta * a));
        tail.push(fu.im_inner(g).scale(sqrt_eta * a));
    }
    tail.push(LinExpr::constant(sqrt_eta * a * sigma_t));
    tail.push(LinExpr::constant(instance.sigma_r2.sqrt()));
    p.soc(
        f_s.re_inner(g).scale((instance.eta / instance.gamma_r).sqrt() * a),
        tail,
    );

    // per-user cones: inter-user leakage, sensing leakage, and the full
    // backscatter relay of everything the tag re-radiates
    for (u, fu) in f_u.iter().enumerate() {
        let h_u = &instance.channels.users[u];
        let relay = sqrt_eta * instance.channels.tag_user[u].norm();
        let mut tail: Vec<LinExpr> = Vec::new();
        for (l, fl) in f_u.iter().enumerate() {
            if l != u {
                tail.push(fl.re_inner(h_u));
                tail.push(fl.im_inner(h_u));
            }
        }
        tail.push(f_s.re_inner(h_u));
        tail.push(f_s.im_inner(h_u));
        tail.push(f_s.re_inner(g).scale(relay));
        tail.push(f_s.im_inner(g).scale(relay));
        for fl in &f_u {
            tail.push(fl.re_inner(g).scale(relay));
            tail.push(fl.im_inner(g).scale(relay));
        }
        tail.push(LinExpr::constant(relay * sigma_t));
        tail.push(LinExpr::constant(instance.sigma_u2.sqrt()));
        p.soc(fu.re_inner(h_u).scale(1.0 / instance.gamma_u.sqrt()), tail);
    }

    // total norm and budget
    let mut all: Vec<LinExpr> = Vec::new();
    for k in 0..m {
        all.push(LinExpr::var(f_s.re + k));
        all.push(LinExpr::var(f_s.im + k));
    }
    for fu in &f_u {
        for k in 0..m {
            all.push(LinExpr::var(fu.re + k));
            all.push(LinExpr::var(fu.im + k));
        }
    }
    p.soc(LinExpr::var(t), all);
    p.le(LinExpr::term(t, 1.0).offset(-instance.budget.sqrt()));

    let r = p.solve()?;
    match r.status {
        SolveStatusKind::Optimal => {
            let sensing = f_s.extract(&r.x);
            let comm: Vec<Beam> = f_u.iter().map(|fu| fu.extract(&r.x)).collect();
            Ok(Some(BeamformingSolution::assemble(
                sensing,
                comm,
                instance.combiner.clone(),
                &instance.channels,
                params,
            )))
        }
        SolveStatusKind::Infeasible => Ok(None),
        SolveStatusKind::Unbounded => Err(Error::SolverFailure {
            status: "power minimization cannot be unbounded".into(),
            primal: f64::NAN,
            dual: f64::NAN,
            complementarity: f64::NAN,
        }),
        SolveStatusKind::NumericalFailure => unreachable!("solve() errors on failure"),
    }
}

/// True iff the joint design finds beams meeting every requirement within
/// the power budget.
pub fn check_feasibility(instance: &SocpInstance, params: &SystemParams) -> Result<bool> {
    Ok(joint_min_power(instance, params)?.is_some())
}

/// Which single-tag designer drives a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Designer {
    Zf,
    Joint,
}

impl Designer {
    pub fn label(&self) -> &'static str {
        match self {
            Designer::Zf => "zf",
            Designer::Joint => "joint",
        }
    }
}

/// Result of a maximum-distance search along one direction.
#[derive(Debug, Clone, Copy)]
pub struct MaxDistance {
    /// Largest feasible range found, in meters (0 when nothing is feasible).
    pub distance: f64,
    /// Whether even the minimum probe distance was feasible.
    pub feasible_at_min: bool,
}

fn design_feasible(
    designer: Designer,
    angle_deg: f64,
    range_m: f64,
    users: &[PolarPosition],
    params: &SystemParams,
) -> Result<bool> {
    let pos = PolarPosition::new(range_m, angle_deg)?;
    match designer {
        Designer::Joint => {
            let inst = SocpInstance::new(params, pos, users)?;
            check_feasibility(&inst, params)
        }
        Designer::Zf => match zf_solution(pos, users, params) {
            Ok(sol) => Ok(sol.is_some()),
            Err(Error::DegenerateGeometry { .. }) => Ok(false),
            Err(e) => Err(e),
        },
    }
}

/// Push the tag outward in `step` increments until the design fails, then
/// bisect the bracketing interval down to a resolution of `step / 8`.
pub fn max_interrogation_distance(
    angle_deg: f64,
    users: &[PolarPosition],
    params: &SystemParams,
    designer: Designer,
    step: f64,
) -> Result<MaxDistance> {
    assert!(step > 0.0, "step must be positive");
    if !design_feasible(designer, angle_deg, step, users, params)? {
        return Ok(MaxDistance { distance: 0.0, feasible_at_min: false });
    }
    let mut lo = step;
    while lo + step <= MAX_SWEEP_RANGE
        && design_feasible(designer, angle_deg, lo + step, users, params)?
    {
        lo += step;
    }
    let mut hi = lo + step;
    while hi - lo > step / 8.0 {
        let mid = 0.5 * (lo + hi);
        if design_feasible(designer, angle_deg, mid, users, params)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(MaxDistance { distance: lo, feasible_at_min: true })
}
