//! Semidefinite relaxation of the per-sector coverage problem.
//!
//! Beams become Hermitian covariances, making every SINR a ratio of trace
//! forms. Each sensitivity constraint is cleared of its denominator and
//! normalized by its budget-implied maximum `M_row`, so the row reads
//! `(1/M_row)·[γ·(interference + noise) − signal] + (y_i − 1) ≤ 0`: exactly
//! the SINR requirement when the point is claimed (y_i = 1) and vacuous under
//! the power budget when it is not. Rows stay O(1) and affine in y with
//! constant coefficients, which keeps the decomposition cuts exact.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;

use crate::channel::{ChannelVector, C64};
use crate::codebook::grid::SectorGrid;
use crate::error::Error;
use crate::params::{PolarPosition, SystemParams};
use crate::sinr::Beam;
use crate::solver::{ConicProblem, HermitianBlock, LinExpr, SolveStatusKind};
use crate::Result;

/// Fraction of the row count D below which a slack sum still counts as
/// feasible.
pub const FEASIBILITY_TOL_PER_ROW: f64 = 1e-6;

/// Tr(G F) for G = g g^H: the quadratic form g^H F g.
fn quad(g: &ChannelVector, f: &DMatrix<C64>) -> f64 {
    (g.adjoint() * f * g)[(0, 0)].re
}

/// Linearized constraint coefficients for one sector: normalizers, channel
/// data, and evaluation of the constraint vector c(F, y).
#[derive(Debug, Clone)]
pub struct SdrForms {
    pub grid: SectorGrid,
    /// User channels h_u.
    pub user_channels: Vec<ChannelVector>,
    pub gamma_t: f64,
    pub gamma_r: f64,
    pub gamma_u: f64,
    pub sigma_t2: f64,
    pub sigma_r2: f64,
    pub sigma_u2: f64,
    pub eta: f64,
    pub budget: f64,
    /// Row normalizers M_i for the tag rows.
    pub norm_tag: Vec<f64>,
    /// Row normalizers M_i for the reader rows.
    pub norm_reader: Vec<f64>,
    /// Row normalizers M_{i,u} for the user rows (point-major).
    pub norm_user: Vec<f64>,
}

impl SdrForms {
    pub fn new(
        grid: SectorGrid,
        user_channels: Vec<ChannelVector>,
        params: &SystemParams,
    ) -> Self {
        let gamma_t = params.gamma_tag();
        let gamma_r = params.gamma_reader();
        let gamma_u = params.user_sinr_threshold;
        let sigma_t2 = params.noise_tag();
        let sigma_r2 = params.noise_reader();
        let sigma_u2 = params.noise_user();
        let eta = params.backscatter_efficiency;
        let budget = params.total_power;
        let n_users = user_channels.len();

        let norm_tag: Vec<f64> =
            grid.points.iter().map(|p| gamma_t * (p.gain * budget + sigma_t2)).collect();
        let norm_reader: Vec<f64> = grid
            .points
            .iter()
            .map(|p| {
                // matched per-point combiner gives |w^H g_i|² = ‖g_i‖²
                gamma_r * (eta * p.gain * (p.gain * budget + sigma_t2) + sigma_r2)
            })
            .collect();
        let mut norm_user = Vec::with_capacity(grid.len() * n_users);
        for p in &grid.points {
            for (u, h) in user_channels.iter().enumerate() {
                let htu2 = p.tag_user[u].norm_sqr();
                let inter_user = if n_users > 1 { h.norm_squared() * budget } else { 0.0 };
                norm_user.push(
                    gamma_u
                        * (inter_user + eta * htu2 * (2.0 * p.gain * budget + sigma_t2) + sigma_u2),
                );
            }
        }
        Self {
            grid,
            user_channels,
            gamma_t,
            gamma_r,
            gamma_u,
            sigma_t2,
            sigma_r2,
            sigma_u2,
            eta,
            budget,
            norm_tag,
            norm_reader,
            norm_user,
        }
    }

    /// Number of grid points |G|.
    pub fn num_points(&self) -> usize {
        self.grid.len()
    }

    pub fn num_users(&self) -> usize {
        self.user_channels.len()
    }

    /// Constraint vector dimension D = 2|G| + U|G| + 1.
    pub fn dim(&self) -> usize {
        let g = self.num_points();
        2 * g + self.num_users() * g + 1
    }

    /// SDR tag SINR at grid point `i` from covariances.
    pub fn sinr_tag(&self, i: usize, f_s: &DMatrix<C64>, f_u: &[DMatrix<C64>]) -> f64 {
        let g = &self.grid.points[i].channel;
        let interference: f64 = f_u.iter().map(|f| quad(g, f)).sum();
        quad(g, f_s) / (interference + self.sigma_t2)
    }

    /// SDR reader SINR at grid point `i` (matched per-point combiner).
    pub fn sinr_reader(&self, i: usize, f_s: &DMatrix<C64>, f_u: &[DMatrix<C64>]) -> f64 {
        let p = &self.grid.points[i];
        let g = &p.channel;
        let q = p.gain;
        let interference: f64 = f_u.iter().map(|f| self.eta * q * quad(g, f)).sum();
        self.eta * q * quad(g, f_s) / (interference + self.eta * self.sigma_t2 * q + self.sigma_r2)
    }

    /// SDR user SINR at grid point `i` for user `u`.
    pub fn sinr_user(&self, i: usize, u: usize, f_s: &DMatrix<C64>, f_u: &[DMatrix<C64>]) -> f64 {
        let p = &self.grid.points[i];
        let g = &p.channel;
        let h = &self.user_channels[u];
        let signal = quad(h, &f_u[u]);
        let inter_user: f64 = f_u
            .iter()
            .enumerate()
            .filter(|(l, _)| *l != u)
            .map(|(_, f)| quad(h, f))
            .sum();
        let backscatter = self.eta
            * p.tag_user[u].norm_sqr()
            * (quad(g, f_s) + f_u.iter().map(|f| quad(g, f)).sum::<f64>() + self.sigma_t2);
        signal / (inter_user + quad(h, f_s) + backscatter + self.sigma_u2)
    }

    /// The y-independent parts of c(F, ·) at frozen covariances: the value of
    /// every row at y = 0.
    pub fn constraint_base(&self, f_s: &DMatrix<C64>, f_u: &[DMatrix<C64>]) -> Vec<f64> {
        let g_count = self.num_points();
        let nu = self.num_users();
        let mut base = Vec::with_capacity(self.dim());
        for (i, p) in self.grid.points.iter().enumerate() {
            let g = &p.channel;
            let interference: f64 = f_u.iter().map(|f| quad(g, f)).sum();
            let cleared = self.gamma_t * (interference + self.sigma_t2) - quad(g, f_s);
            base.push(cleared / self.norm_tag[i] - 1.0);
        }
        for (i, p) in self.grid.points.iter().enumerate() {
            let g = &p.channel;
            let q = p.gain;
            let interference: f64 = f_u.iter().map(|f| quad(g, f)).sum();
            let cleared = self.gamma_r
                * (self.eta * q * interference + self.eta * self.sigma_t2 * q + self.sigma_r2)
                - self.eta * q * quad(g, f_s);
            base.push(cleared / self.norm_reader[i] - 1.0);
        }
        for (i, p) in self.grid.points.iter().enumerate() {
            let g = &p.channel;
            for (u, h) in self.user_channels.iter().enumerate() {
                let inter_user: f64 = f_u
                    .iter()
                    .enumerate()
                    .filter(|(l, _)| *l != u)
                    .map(|(_, f)| quad(h, f))
                    .sum();
                let backscatter = self.eta
                    * p.tag_user[u].norm_sqr()
                    * (quad(g, f_s) + f_u.iter().map(|f| quad(g, f)).sum::<f64>() + self.sigma_t2);
                let cleared = self.gamma_u
                    * (inter_user + quad(h, f_s) + backscatter + self.sigma_u2)
                    - quad(h, &f_u[u]);
                base.push(cleared / self.norm_user[i * nu + u]);
            }
        }
        let total: f64 = f_s.trace().re + f_u.iter().map(|f| f.trace().re).sum::<f64>();
        base.push((total - self.budget) / self.budget);
        debug_assert_eq!(base.len(), 2 * g_count + nu * g_count + 1);
        base
    }

    /// Full constraint vector c(F, y): the base plus the unit y-coefficients
    /// on the tag and reader rows.
    pub fn constraint_values(
        &self,
        f_s: &DMatrix<C64>,
        f_u: &[DMatrix<C64>],
        y: &[u8],
    ) -> Vec<f64> {
        let mut c = self.constraint_base(f_s, f_u);
        let g = self.num_points();
        for i in 0..g {
            c[i] += f64::from(y[i]);
            c[g + i] += f64::from(y[i]);
        }
        c
    }
}

/// Result of one modified primal solve at fixed binaries.
#[derive(Debug, Clone)]
pub struct PrimalSolve {
    /// Sensing covariance.
    pub f_s: DMatrix<C64>,
    /// Communication covariances.
    pub f_u: Vec<DMatrix<C64>>,
    /// Slack values α.
    pub alphas: Vec<f64>,
    pub sum_alpha: f64,
    /// Multipliers of the c(F, y) ≤ α rows, in row order.
    pub duals: Vec<f64>,
    /// Σα ≤ 1e−6·D: the claimed pattern is achievable.
    pub feasible: bool,
}

/// Solve the slack-minimization primal at fixed `y`: minimize Σα over
/// PSD covariances with c(F, y) ≤ α, α ≥ 0.
pub fn solve_primal(y: &[u8], forms: &SdrForms, params: &SystemParams) -> Result<PrimalSolve> {
    let m = params.num_antennas;
    let n = forms.num_points();
    let nu = forms.num_users();
    assert_eq!(y.len(), n);
    let d = forms.dim();

    let mut p = ConicProblem::new();
    let f_s = p.add_hermitian(m);
    let f_u: Vec<HermitianBlock> = (0..nu).map(|_| p.add_hermitian(m)).collect();
    let alpha0 = p.add_vars(d);

    let mut objective = LinExpr::default();
    for k in 0..d {
        objective.push(alpha0 + k, 1.0);
        p.le(LinExpr::term(alpha0 + k, -1.0)); // α ≥ 0
    }
    p.minimize(objective);

    let mut row_ids = Vec::with_capacity(d);
    let mut row = 0usize;

    // tag rows: (1/M)(γ_t Σ_u Tr(G_i F_u) + γ_t σ_t² − Tr(G_i F_s)) + y_i − 1 ≤ α
    for (i, point) in forms.grid.points.iter().enumerate() {
        let g = &point.channel;
        let m_i = forms.norm_tag[i];
        let mut e = f_s.quad_form(g).scale(-1.0 / m_i);
        for fu in &f_u {
            e = e.add(&fu.quad_form(g).scale(forms.gamma_t / m_i));
        }
        e = e.offset(forms.gamma_t * forms.sigma_t2 / m_i + f64::from(y[i]) - 1.0);
        e.push(alpha0 + row, -1.0);
        row_ids.push(p.le(e));
        row += 1;
    }
    // reader rows
    for (i, point) in forms.grid.points.iter().enumerate() {
        let g = &point.channel;
        let q = point.gain;
        let m_i = forms.norm_reader[i];
        let mut e = f_s.quad_form(g).scale(-forms.eta * q / m_i);
        for fu in &f_u {
            e = e.add(&fu.quad_form(g).scale(forms.gamma_r * forms.eta * q / m_i));
        }
        e = e.offset(
            forms.gamma_r * (forms.eta * forms.sigma_t2 * q + forms.sigma_r2) / m_i
                + f64::from(y[i])
                - 1.0,
        );
        e.push(alpha0 + row, -1.0);
        row_ids.push(p.le(e));
        row += 1;
    }
    // user rows, point-major
    for (i, point) in forms.grid.points.iter().enumerate() {
        let g = &point.channel;
        for (u, h) in forms.user_channels.iter().enumerate() {
            let m_iu = forms.norm_user[i * nu + u];
            let htu2 = point.tag_user[u].norm_sqr();
            let mut e = f_u[u].quad_form(h).scale(-1.0 / m_iu);
            for (l, fl) in f_u.iter().enumerate() {
                if l != u {
                    e = e.add(&fl.quad_form(h).scale(forms.gamma_u / m_iu));
                }
            }
            e = e.add(&f_s.quad_form(h).scale(forms.gamma_u / m_iu));
            let relay = forms.gamma_u * forms.eta * htu2 / m_iu;
            e = e.add(&f_s.quad_form(g).scale(relay));
            for fl in &f_u {
                e = e.add(&fl.quad_form(g).scale(relay));
            }
            e = e.offset(
                forms.gamma_u * (forms.eta * htu2 * forms.sigma_t2 + forms.sigma_u2) / m_iu,
            );
            e.push(alpha0 + row, -1.0);
            row_ids.push(p.le(e));
            row += 1;
        }
    }
    // budget row
    {
        let mut e = f_s.trace();
        for fu in &f_u {
            e = e.add(&fu.trace());
        }
        e = e.scale(1.0 / forms.budget).offset(-1.0);
        e.push(alpha0 + row, -1.0);
        row_ids.push(p.le(e));
        row += 1;
    }
    debug_assert_eq!(row, d);

    let r = p.solve()?;
    if r.status != SolveStatusKind::Optimal {
        return Err(Error::SolverFailure {
            status: format!("primal slack problem: {:?}", r.status),
            primal: r.residuals.primal,
            dual: r.residuals.dual,
            complementarity: r.residuals.complementarity,
        });
    }
    let alphas: Vec<f64> = (0..d).map(|k| r.x[alpha0 + k].max(0.0)).collect();
    let sum_alpha: f64 = alphas.iter().sum();
    let duals: Vec<f64> = row_ids.iter().map(|&id| r.duals[id].max(0.0)).collect();
    Ok(PrimalSolve {
        f_s: f_s.value(&r.x),
        f_u: f_u.iter().map(|b| b.value(&r.x)).collect(),
        alphas,
        sum_alpha,
        duals,
        feasible: sum_alpha <= FEASIBILITY_TOL_PER_ROW * d as f64,
    })
}

/// Dominant-eigenvector beam extraction: `f̂ = √Tr(F)·u₁`, preserving the
/// allocated power exactly.
pub fn rank1_extract(f: &DMatrix<C64>) -> Beam {
    let m = f.nrows();
    let trace = f.trace().re.max(0.0);
    if trace == 0.0 {
        return DVector::zeros(m);
    }
    let eig = f.clone().symmetric_eigen();
    let idx = eig.eigenvalues.imax();
    let u1: Beam = eig.eigenvectors.column(idx).into_owned();
    let u1 = &u1 / Complex::from(u1.norm());
    u1 * Complex::from(trace.sqrt())
}

/// Grid helper used by designers and tests: a forms bundle for an explicit
/// set of reference positions (radius function replaced by given points).
pub fn forms_for_sector(
    theta_min: f64,
    theta_max: f64,
    params: &SystemParams,
    users: &[PolarPosition],
    delta_theta: f64,
    radius_fn: &dyn Fn(f64) -> f64,
) -> Result<SdrForms> {
    let grid = super::grid::build_grid(theta_min, theta_max, params, users, delta_theta, radius_fn)?;
    let user_channels = users
        .iter()
        .map(|&u| crate::channel::los_channel(params, u))
        .collect::<Result<Vec<_>>>()?;
    Ok(SdrForms::new(grid, user_channels, params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::Scenario;
    use crate::sinr;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn small_forms(theta_min: f64, theta_max: f64, radius: f64) -> SdrForms {
        let s = Scenario::default();
        let p = s.params.with_antennas(4);
        forms_for_sector(theta_min, theta_max, &p, &s.users, theta_max - theta_min, &|_| radius)
            .unwrap()
    }

    fn random_beam(rng: &mut ChaCha8Rng, m: usize, scale: f64) -> Beam {
        DVector::from_fn(m, |_, _| {
            C64::new(scale * (rng.gen::<f64>() - 0.5), scale * (rng.gen::<f64>() - 0.5))
        })
    }

    #[test]
    fn rank1_covariances_reproduce_exact_sinrs() {
        let s = Scenario::default();
        let p = s.params.with_antennas(4);
        let forms = small_forms(60.0, 64.0, 8.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..5 {
            let f_s_vec = random_beam(&mut rng, 4, 0.7);
            let f_u_vec = random_beam(&mut rng, 4, 0.4);
            let f_s = &f_s_vec * f_s_vec.adjoint();
            let f_u = vec![&f_u_vec * f_u_vec.adjoint()];
            for (i, point) in forms.grid.points.iter().enumerate() {
                let g = &point.channel;
                let w = g / Complex::from(g.norm());
                let comm = vec![f_u_vec.clone()];
                let exact_tag = sinr::sinr_tag(&f_s_vec, &comm, g, forms.sigma_t2);
                assert_relative_eq!(
                    forms.sinr_tag(i, &f_s, &f_u),
                    exact_tag,
                    max_relative = 1e-10
                );
                let exact_reader = sinr::sinr_reader(
                    &f_s_vec, &comm, g, &w, forms.eta, forms.sigma_t2, forms.sigma_r2,
                );
                assert_relative_eq!(
                    forms.sinr_reader(i, &f_s, &f_u),
                    exact_reader,
                    max_relative = 1e-10
                );
                let exact_user = sinr::sinr_user(
                    0,
                    &f_s_vec,
                    &comm,
                    &forms.user_channels[0],
                    g,
                    point.tag_user[0],
                    forms.eta,
                    forms.sigma_t2,
                    p.noise_user(),
                );
                assert_relative_eq!(
                    forms.sinr_user(i, 0, &f_s, &f_u),
                    exact_user,
                    max_relative = 1e-10
                );
            }
        }
    }

    #[test]
    fn trace_identity_for_random_psd() {
        // Tr(G_i F) over any factorization F = Σ f_k f_k^H
        let forms = small_forms(100.0, 104.0, 6.0);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let factors: Vec<Beam> = (0..3).map(|_| random_beam(&mut rng, 4, 1.0)).collect();
        let mut f = DMatrix::<C64>::zeros(4, 4);
        for fk in &factors {
            f += fk * fk.adjoint();
        }
        for point in &forms.grid.points {
            let g = &point.channel;
            let direct = quad(g, &f);
            let by_factors: f64 = factors.iter().map(|fk| g.dotc(fk).norm_sqr()).sum();
            assert_relative_eq!(direct, by_factors, max_relative = 1e-12);
        }
        // zero covariances zero every numerator
        let zero = DMatrix::<C64>::zeros(4, 4);
        assert_eq!(forms.sinr_tag(0, &zero, &[zero.clone()]), 0.0);
    }

    #[test]
    fn primal_with_no_claims_is_feasible() {
        let s = Scenario::default();
        let p = s.params.with_antennas(4);
        let forms = small_forms(40.0, 44.0, 6.0);
        let y = vec![0u8; forms.num_points()];
        let sol = solve_primal(&y, &forms, &p).unwrap();
        assert!(sol.feasible, "sum_alpha = {}", sol.sum_alpha);
        assert!(sol.duals.iter().all(|&l| l >= 0.0));
    }

    #[test]
    fn primal_all_ones_far_grid_is_infeasible() {
        let s = Scenario::default();
        let p = s.params.with_antennas(4);
        let forms = small_forms(40.0, 44.0, 100.0);
        let y = vec![1u8; forms.num_points()];
        let sol = solve_primal(&y, &forms, &p).unwrap();
        assert!(!sol.feasible, "sum_alpha = {}", sol.sum_alpha);
    }

    #[test]
    fn primal_near_cell_feasible_with_complementary_duals() {
        let s = Scenario::default();
        let p = s.params.with_antennas(4);
        // 2 angles x 2 radii close to the array
        let s2 = Scenario { params: p.clone(), users: s.users.clone() };
        let grid = crate::codebook::grid::build_grid(
            70.0,
            72.0,
            &s2.params,
            &s2.users,
            2.0,
            &|_| 4.0,
        )
        .unwrap();
        let mut small = grid;
        small.points.truncate(4);
        let user_channels = vec![crate::channel::los_channel(&p, s.users[0]).unwrap()];
        let forms = SdrForms::new(small, user_channels, &p);
        let y = vec![1u8; forms.num_points()];
        let sol = solve_primal(&y, &forms, &p).unwrap();
        assert!(sol.feasible, "sum_alpha = {}", sol.sum_alpha);
        // complementary slackness against the recomputed constraint values
        let c = forms.constraint_values(&sol.f_s, &sol.f_u, &y);
        for (d, (&ci, &li)) in c.iter().zip(&sol.duals).enumerate() {
            let slack = sol.alphas[d] - ci;
            assert!(li >= 0.0);
            assert!(li * slack.abs() <= 1e-5, "row {d}: λ {li}, slack {slack}");
        }
    }

    #[test]
    fn rank1_extraction_of_exact_rank1_recovers_the_beam() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let f_vec = random_beam(&mut rng, 4, 1.0);
        let f = &f_vec * f_vec.adjoint();
        let got = rank1_extract(&f);
        // equal up to a global phase
        let overlap = f_vec.dotc(&got).norm() / (f_vec.norm() * got.norm());
        assert_relative_eq!(overlap, 1.0, epsilon = 1e-10);
        assert_relative_eq!(got.norm_squared(), f.trace().re, max_relative = 1e-10);
    }

    #[test]
    fn rank1_extraction_preserves_trace_under_degeneracy() {
        let f = DMatrix::<C64>::identity(2, 2);
        let got = rank1_extract(&f);
        assert_relative_eq!(got.norm_squared(), 2.0, max_relative = 1e-12);
        let zero = DMatrix::<C64>::zeros(3, 3);
        assert_eq!(rank1_extract(&zero).norm(), 0.0);
    }

    #[test]
    fn rank1_extraction_matches_spectral_decomposition() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..10 {
            let a = DMatrix::<C64>::from_fn(4, 4, |_, _| {
                C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
            });
            let f = &a * a.adjoint();
            let got = rank1_extract(&f);
            let eig = f.clone().symmetric_eigen();
            let idx = eig.eigenvalues.imax();
            let u1 = eig.eigenvectors.column(idx);
            // the best rank-1 approximation direction is u1
            let overlap = u1.dotc(&got).norm() / got.norm();
            assert_relative_eq!(overlap, 1.0, epsilon = 1e-9);
            assert_relative_eq!(got.norm_squared(), f.trace().re, max_relative = 1e-9);
        }
    }
}
