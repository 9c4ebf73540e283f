//! Exact branch-and-bound for the binary master problem.
//!
//! Minimizes a linear objective over binary `y` and a free scalar `ω`,
//! subject to linear cuts `a·y + b·ω + c ≤ 0`. LP relaxations go through the
//! conic interface; branching is deterministic: the lowest-index
//! most-fractional variable, 0-branch explored first.

use crate::error::Error;
use crate::solver::{ConicProblem, LinExpr, SolveStatusKind};
use crate::Result;

/// One linear cut `y_coeffs·y + omega_coeff·ω + constant ≤ 0`.
#[derive(Debug, Clone)]
pub struct MasterCut {
    pub y_coeffs: Vec<f64>,
    pub omega_coeff: f64,
    pub constant: f64,
}

impl MasterCut {
    fn eval(&self, y: &[f64], omega: f64) -> f64 {
        let dot: f64 = self.y_coeffs.iter().zip(y).map(|(a, y)| a * y).sum();
        dot + self.omega_coeff * omega + self.constant
    }
}

/// Binary master problem: `min y_cost·y + omega_cost·ω` subject to cuts.
#[derive(Debug, Clone)]
pub struct MasterProblem {
    pub num_binary: usize,
    pub y_cost: Vec<f64>,
    pub omega_cost: f64,
    pub cuts: Vec<MasterCut>,
}

/// Outcome of a master solve.
#[derive(Debug, Clone, PartialEq)]
pub enum MasterSolution {
    Optimal { y: Vec<u8>, omega: f64, objective: f64 },
    Infeasible,
}

const INT_TOL: f64 = 1e-6;
const CUT_TOL: f64 = 1e-7;

/// Solve the master exactly. Errors with [`Error::UnboundedMaster`] when ω is
/// not bounded in the objective direction by any cut.
pub fn solve_binary_lp(problem: &MasterProblem) -> Result<MasterSolution> {
    let n = problem.num_binary;
    assert_eq!(problem.y_cost.len(), n);
    for cut in &problem.cuts {
        assert_eq!(cut.y_coeffs.len(), n);
    }

    // ω must be bounded below (cost > 0 needs a cut with negative ω
    // coefficient) or above (cost < 0, positive coefficient)
    if problem.omega_cost > 0.0 && !problem.cuts.iter().any(|c| c.omega_coeff < 0.0) {
        return Err(Error::UnboundedMaster);
    }
    if problem.omega_cost < 0.0 && !problem.cuts.iter().any(|c| c.omega_coeff > 0.0) {
        return Err(Error::UnboundedMaster);
    }

    let mut best: Option<(Vec<u8>, f64, f64)> = None;

    // DFS stack of partial assignments; None = free. Children are pushed
    // 1-branch first so the 0-branch pops first.
    let mut stack: Vec<Vec<Option<bool>>> = vec![vec![None; n]];
    while let Some(fixed) = stack.pop() {
        let relax = solve_relaxation(problem, &fixed)?;
        let (y_rel, omega_rel, obj_rel) = match relax {
            Relaxation::Infeasible => continue,
            Relaxation::Solved { y, omega, objective } => (y, omega, objective),
        };
        if let Some((_, _, incumbent)) = &best {
            if obj_rel >= incumbent - 1e-9 {
                continue;
            }
        }

        // rounding heuristic: an integral snapshot of the relaxation often
        // prunes the rest of the subtree immediately
        let rounded: Vec<u8> = y_rel.iter().map(|&v| u8::from(v >= 0.5)).collect();
        if let Some((omega, obj)) = integral_value(problem, &rounded) {
            if best.as_ref().map_or(true, |(_, _, b)| obj < b - 1e-9) {
                best = Some((rounded, omega, obj));
            }
        }

        // lowest-index most-fractional free variable
        let mut branch: Option<(usize, f64)> = None;
        for i in 0..n {
            if fixed[i].is_some() {
                continue;
            }
            let frac = y_rel[i].min(1.0 - y_rel[i]);
            if frac > INT_TOL && branch.map_or(true, |(_, f)| frac > f) {
                branch = Some((i, frac));
            }
        }
        match branch {
            None => {
                // integral relaxation: adopt it directly
                let y: Vec<u8> = y_rel.iter().map(|&v| u8::from(v >= 0.5)).collect();
                let (omega, obj) = match integral_value(problem, &y) {
                    Some(v) => v,
                    // relaxation tolerance put a cut marginally over; keep
                    // the LP's own point
                    None => (omega_rel, obj_rel),
                };
                if best.as_ref().map_or(true, |(_, _, b)| obj < b - 1e-9) {
                    best = Some((y, omega, obj));
                }
            }
            Some((i, _)) => {
                let mut one = fixed.clone();
                one[i] = Some(true);
                stack.push(one);
                let mut zero = fixed;
                zero[i] = Some(false);
                stack.push(zero);
            }
        }
    }

    Ok(match best {
        Some((y, omega, objective)) => MasterSolution::Optimal { y, omega, objective },
        None => MasterSolution::Infeasible,
    })
}

enum Relaxation {
    Solved { y: Vec<f64>, omega: f64, objective: f64 },
    Infeasible,
}

fn solve_relaxation(problem: &MasterProblem, fixed: &[Option<bool>]) -> Result<Relaxation> {
    let n = problem.num_binary;
    let mut p = ConicProblem::new();
    let y0 = p.add_vars(n);
    let om = p.add_vars(1);

    let mut obj = LinExpr::term(om, problem.omega_cost);
    for i in 0..n {
        obj.push(y0 + i, problem.y_cost[i]);
    }
    p.minimize(obj);

    for (i, f) in fixed.iter().enumerate() {
        match f {
            Some(v) => p.eq(LinExpr::term(y0 + i, 1.0).offset(-f64::from(u8::from(*v)))),
            None => {
                p.le(LinExpr::term(y0 + i, -1.0)); // y >= 0
                p.le(LinExpr::term(y0 + i, 1.0).offset(-1.0)); // y <= 1
            }
        }
    }
    for cut in &problem.cuts {
        let mut e = LinExpr::term(om, cut.omega_coeff).offset(cut.constant);
        for (i, &a) in cut.y_coeffs.iter().enumerate() {
            if a != 0.0 {
                e.push(y0 + i, a);
            }
        }
        p.le(e);
    }

    let r = p.solve()?;
    Ok(match r.status {
        SolveStatusKind::Optimal => Relaxation::Solved {
            y: r.x[y0..y0 + n].to_vec(),
            omega: r.x[om],
            objective: r.objective,
        },
        SolveStatusKind::Infeasible => Relaxation::Infeasible,
        SolveStatusKind::Unbounded => return Err(Error::UnboundedMaster),
        SolveStatusKind::NumericalFailure => unreachable!("solve() returns Err on failure"),
    })
}

/// Exact feasibility and objective of an integral `y`: ω is a one-variable
/// LP between the cut-implied bounds.
fn integral_value(problem: &MasterProblem, y: &[u8]) -> Option<(f64, f64)> {
    let yf: Vec<f64> = y.iter().map(|&v| f64::from(v)).collect();
    let mut lower = f64::NEG_INFINITY;
    let mut upper = f64::INFINITY;
    for cut in &problem.cuts {
        let rest = cut.eval(&yf, 0.0);
        if cut.omega_coeff == 0.0 {
            if rest > CUT_TOL {
                return None;
            }
        } else if cut.omega_coeff < 0.0 {
            lower = lower.max(rest / -cut.omega_coeff);
        } else {
            upper = upper.min(-rest / cut.omega_coeff);
        }
    }
    if lower > upper + CUT_TOL {
        return None;
    }
    let omega = if problem.omega_cost >= 0.0 {
        if lower.is_finite() {
            lower
        } else if upper.is_finite() {
            upper.min(0.0)
        } else {
            0.0
        }
    } else if upper.is_finite() {
        upper
    } else {
        return None;
    };
    let obj: f64 =
        problem.y_cost.iter().zip(&yf).map(|(c, y)| c * y).sum::<f64>() + problem.omega_cost * omega;
    Some((omega, obj))
}

/// Exhaustive reference optimum; exponential, for tests and small masters.
pub fn enumerate_binary_lp(problem: &MasterProblem) -> MasterSolution {
    let n = problem.num_binary;
    let mut best: Option<(Vec<u8>, f64, f64)> = None;
    for mask in 0u64..(1 << n) {
        let y: Vec<u8> = (0..n).map(|i| ((mask >> i) & 1) as u8).collect();
        if let Some((omega, obj)) = integral_value(problem, &y) {
            if best.as_ref().map_or(true, |(_, _, b)| obj < b - 1e-12) {
                best = Some((y, omega, obj));
            }
        }
    }
    match best {
        Some((y, omega, objective)) => MasterSolution::Optimal { y, omega, objective },
        None => MasterSolution::Infeasible,
    }
}
