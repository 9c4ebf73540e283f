//! Generalized Benders decomposition for one sector.
//!
//! Alternates between the slack-minimization primal (fixed binaries, yields
//! covariances and multipliers) and a cut-accumulating binary master. Because
//! the constraint rows are affine in y with constant coefficients, plugging
//! the primal optimizer into the Lagrangian gives exact cuts: the master is a
//! true relaxation and both bounds are monotone.

use nalgebra::DMatrix;

use crate::channel::C64;
use crate::codebook::sdr::{solve_primal, SdrForms};
use crate::error::Error;
use crate::params::SystemParams;
use crate::solver::{solve_binary_lp, MasterCut, MasterProblem, MasterSolution};
use crate::Result;

/// One logged decomposition iteration: the proposed pattern, the primal
/// outcome, and the stored cut ingredients (multipliers and the
/// y-independent row values at the frozen covariances).
#[derive(Debug, Clone)]
pub struct GbdIterate {
    pub v: usize,
    pub y: Vec<u8>,
    pub feasible: bool,
    pub sum_alpha: f64,
    pub duals: Vec<f64>,
    pub base_values: Vec<f64>,
    /// Bounds after processing this iteration.
    pub ubd: f64,
    pub lbd: f64,
}

/// Bound trajectory and cut pool of one sector's decomposition.
#[derive(Debug, Clone)]
pub struct GbdState {
    pub epsilon: f64,
    pub ubd: f64,
    pub lbd: f64,
    pub converged: bool,
    pub iterates: Vec<GbdIterate>,
}

impl GbdState {
    /// Iteration indices with feasible primals.
    pub fn feasible_set(&self) -> Vec<usize> {
        self.iterates.iter().filter(|it| it.feasible).map(|it| it.v).collect()
    }

    /// Iteration indices with infeasible primals.
    pub fn infeasible_set(&self) -> Vec<usize> {
        self.iterates.iter().filter(|it| !it.feasible).map(|it| it.v).collect()
    }
}

/// Decomposition output: incumbent covariances and claimed pattern.
#[derive(Debug, Clone)]
pub struct GbdOutcome {
    pub f_s: DMatrix<C64>,
    pub f_u: Vec<DMatrix<C64>>,
    /// Best feasible coverage pattern found.
    pub claimed: Vec<u8>,
    pub state: GbdState,
}

/// Build the master cut recorded by one iterate: an optimality cut
/// `ω ≥ −Σy + λᵀc(F⁽ᵛ⁾, y)` when the primal was feasible, a feasibility cut
/// `0 ≥ λᵀc(F⁽ᵛ⁾, y)` otherwise. Rows are affine in y with unit coefficients
/// on the claimed point's tag and reader rows, so the cut coefficient on y_i
/// is λ_tag,i + λ_reader,i (−1 more on optimality cuts from the objective).
pub fn lagrange_cut(forms: &SdrForms, iterate: &GbdIterate) -> MasterCut {
    let n = forms.num_points();
    let lambda_dot_base: f64 =
        iterate.duals.iter().zip(&iterate.base_values).map(|(l, b)| l * b).sum();
    let mut y_coeffs = vec![0.0; n];
    for i in 0..n {
        y_coeffs[i] = iterate.duals[i] + iterate.duals[n + i];
    }
    if iterate.feasible {
        for c in y_coeffs.iter_mut() {
            *c -= 1.0;
        }
        MasterCut { y_coeffs, omega_coeff: -1.0, constant: lambda_dot_base }
    } else {
        MasterCut { y_coeffs, omega_coeff: 0.0, constant: lambda_dot_base }
    }
}

/// Run the decomposition for one sector until `UBD − LBD ≤ epsilon` or the
/// iteration cap; the all-zeros pattern seeds the first optimality cut.
pub fn gbd_sector(
    forms: &SdrForms,
    params: &SystemParams,
    epsilon: f64,
    iteration_cap: usize,
) -> Result<GbdOutcome> {
    let n = forms.num_points();
    let mut cuts: Vec<MasterCut> = Vec::new();
    let mut state = GbdState {
        epsilon,
        ubd: 0.0,
        // trivial lower bound of -Σy over binary patterns
        lbd: -(n as f64),
        converged: false,
        iterates: Vec::new(),
    };

    // iteration 0: the always-serviceable empty pattern
    let y0 = vec![0u8; n];
    let primal0 = solve_primal(&y0, forms, params)?;
    if !primal0.feasible {
        // user service alone is unsatisfiable in this sector
        return Err(Error::SolverFailure {
            status: format!(
                "sector [{}, {}]: user constraints infeasible even with no claimed points (sum_alpha {:.3e})",
                forms.grid.theta_min, forms.grid.theta_max, primal0.sum_alpha
            ),
            primal: primal0.sum_alpha,
            dual: 0.0,
            complementarity: 0.0,
        });
    }
    let mut incumbent = (primal0.f_s.clone(), primal0.f_u.clone(), y0.clone());
    let it0 = GbdIterate {
        v: 0,
        y: y0,
        feasible: true,
        sum_alpha: primal0.sum_alpha,
        duals: primal0.duals,
        base_values: forms.constraint_base(&primal0.f_s, &primal0.f_u),
        ubd: state.ubd,
        lbd: state.lbd,
    };
    cuts.push(lagrange_cut(forms, &it0));
    state.iterates.push(it0);

    let mut v = 0;
    while state.ubd - state.lbd > epsilon && v < iteration_cap {
        v += 1;
        let master = MasterProblem {
            num_binary: n,
            y_cost: vec![0.0; n],
            omega_cost: 1.0,
            cuts: cuts.clone(),
        };
        let (y, omega) = match solve_binary_lp(&master)? {
            MasterSolution::Optimal { y, omega, .. } => (y, omega),
            MasterSolution::Infeasible => {
                // cuts exclude every pattern; the incumbent is optimal
                state.lbd = state.ubd;
                break;
            }
        };
        state.lbd = state.lbd.max(omega);

        let primal = solve_primal(&y, forms, params)?;
        if primal.feasible {
            let value = -(y.iter().map(|&b| f64::from(b)).sum::<f64>());
            if value < state.ubd {
                state.ubd = value;
                incumbent = (primal.f_s.clone(), primal.f_u.clone(), y.clone());
            }
        }
        let it = GbdIterate {
            v,
            y,
            feasible: primal.feasible,
            sum_alpha: primal.sum_alpha,
            duals: primal.duals,
            base_values: forms.constraint_base(&primal.f_s, &primal.f_u),
            ubd: state.ubd,
            lbd: state.lbd,
        };
        cuts.push(lagrange_cut(forms, &it));
        state.iterates.push(it);
    }
    state.converged = state.ubd - state.lbd <= epsilon;

    Ok(GbdOutcome { f_s: incumbent.0, f_u: incumbent.1, claimed: incumbent.2, state })
}
