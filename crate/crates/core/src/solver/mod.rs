//! Uniform interface for the convex subproblems: LP, SOCP, and SDP with
//! dual-multiplier extraction, plus an exact branch-and-bound binary LP for
//! decomposition masters.
//!
//! Problems are described against a flat real variable vector. Complex
//! Hermitian matrix variables are registered as blocks of M² real parameters
//! and enforced positive semidefinite through the standard real embedding
//! (an M×M Hermitian block becomes a 2M×2M real symmetric cone constraint).
//! The cone engine behind [`ConicProblem::solve`] is Clarabel; every reported
//! optimum is re-verified here against the assembled data (feasibility,
//! stationarity, complementary slackness) before it is accepted.

mod bnb;

pub use bnb::{solve_binary_lp, MasterCut, MasterProblem, MasterSolution};

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettings, DefaultSolver, IPSolver, NonnegativeConeT, PSDTriangleConeT, SolverStatus,
    SupportedConeT, ZeroConeT,
};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex;

use crate::channel::C64;
use crate::error::Error;
use crate::Result;

/// Affine expression over the flat variable vector: `terms · x + constant`.
#[derive(Debug, Clone, Default)]
pub struct LinExpr {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn constant(c: f64) -> Self {
        Self { terms: vec![], constant: c }
    }

    pub fn var(idx: usize) -> Self {
        Self { terms: vec![(idx, 1.0)], constant: 0.0 }
    }

    pub fn term(idx: usize, coeff: f64) -> Self {
        Self { terms: vec![(idx, coeff)], constant: 0.0 }
    }

    pub fn push(&mut self, idx: usize, coeff: f64) {
        self.terms.push((idx, coeff));
    }

    pub fn add(mut self, other: &LinExpr) -> Self {
        self.terms.extend_from_slice(&other.terms);
        self.constant += other.constant;
        self
    }

    pub fn scale(mut self, s: f64) -> Self {
        for t in &mut self.terms {
            t.1 *= s;
        }
        self.constant *= s;
        self
    }

    pub fn offset(mut self, c: f64) -> Self {
        self.constant += c;
        self
    }

    /// Merge duplicate variable indices and drop exact zeros.
    fn canonicalize(&mut self) {
        self.terms.sort_unstable_by_key(|t| t.0);
        let mut out: Vec<(usize, f64)> = Vec::with_capacity(self.terms.len());
        for &(i, v) in &self.terms {
            match out.last_mut() {
                Some(last) if last.0 == i => last.1 += v,
                _ => out.push((i, v)),
            }
        }
        out.retain(|t| t.1 != 0.0);
        self.terms = out;
    }

    fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(i, c)| c * x[i]).sum::<f64>() + self.constant
    }
}

/// Handle to a complex Hermitian matrix variable.
///
/// Parameter layout: M real diagonal entries, then (Re, Im) pairs of the
/// strict upper triangle in row-major pair order.
#[derive(Debug, Clone, Copy)]
pub struct HermitianBlock {
    dim: usize,
    start: usize,
}

impl HermitianBlock {
    pub fn dim(&self) -> usize {
        self.dim
    }

    fn diag(&self, i: usize) -> usize {
        self.start + i
    }

    fn pair(&self, k: usize, l: usize) -> usize {
        debug_assert!(k < l && l < self.dim);
        // pairs (0,1)..(0,m-1),(1,2)..: offset of (k,l)
        let before = k * self.dim - k * (k + 1) / 2;
        self.start + self.dim + 2 * (before + l - k - 1)
    }

    /// Tr(F) as a linear expression.
    pub fn trace(&self) -> LinExpr {
        let mut e = LinExpr::default();
        for i in 0..self.dim {
            e.push(self.diag(i), 1.0);
        }
        e
    }

    /// Tr(g g^H F) = g^H F g as a linear expression over the block.
    pub fn quad_form(&self, g: &DVector<C64>) -> LinExpr {
        assert_eq!(g.len(), self.dim);
        let mut e = LinExpr::default();
        for k in 0..self.dim {
            e.push(self.diag(k), g[k].norm_sqr());
            for l in (k + 1)..self.dim {
                let cross = g[k].conj() * g[l];
                let p = self.pair(k, l);
                e.push(p, 2.0 * cross.re);
                e.push(p + 1, -2.0 * cross.im);
            }
        }
        e
    }

    /// Read the Hermitian matrix value out of a solution vector.
    pub fn value(&self, x: &[f64]) -> DMatrix<C64> {
        let m = self.dim;
        let mut f = DMatrix::<C64>::zeros(m, m);
        for i in 0..m {
            f[(i, i)] = Complex::new(x[self.diag(i)], 0.0);
        }
        for k in 0..m {
            for l in (k + 1)..m {
                let p = self.pair(k, l);
                let v = Complex::new(x[p], x[p + 1]);
                f[(k, l)] = v;
                f[(l, k)] = v.conj();
            }
        }
        f
    }
}

/// Solve status of a conic problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatusKind {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

/// Residuals recomputed from the assembled problem data, independent of the
/// cone engine's own bookkeeping.
#[derive(Debug, Clone, Copy, Default)]
pub struct Residuals {
    /// Worst constraint violation (absolute, after row assembly).
    pub primal: f64,
    /// ‖q + Aᵀz‖∞ stationarity residual.
    pub dual: f64,
    /// |sᵀz| complementary-slackness residual, relative to 1 + |objective|.
    pub complementarity: f64,
}

/// Result of [`ConicProblem::solve`].
#[derive(Debug, Clone)]
pub struct SolveResult {
    pub status: SolveStatusKind,
    /// Primal variable values (meaningful when `Optimal`).
    pub x: Vec<f64>,
    /// Nonnegative multiplier per inequality, in insertion order.
    pub duals: Vec<f64>,
    pub objective: f64,
    pub residuals: Residuals,
}

impl SolveResult {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatusKind::Optimal
    }

    pub fn is_infeasible(&self) -> bool {
        self.status == SolveStatusKind::Infeasible
    }
}

enum RowKind {
    Equality(LinExpr),
    Inequality(LinExpr),
    Soc { head: LinExpr, tail: Vec<LinExpr> },
}

/// A conic optimization problem under construction.
///
/// Constraints are `expr = 0`, `expr ≤ 0`, `head ≥ ‖tail‖`, and Hermitian
/// blocks `F ⪰ 0`; the objective is linear. Solves are deterministic for
/// identical inputs.
pub struct ConicProblem {
    num_vars: usize,
    objective: LinExpr,
    rows: Vec<RowKind>,
    num_inequalities: usize,
    psd_blocks: Vec<HermitianBlock>,
}

impl Default for ConicProblem {
    fn default() -> Self {
        Self::new()
    }
}

impl ConicProblem {
    pub fn new() -> Self {
        Self {
            num_vars: 0,
            objective: LinExpr::default(),
            rows: Vec::new(),
            num_inequalities: 0,
            psd_blocks: Vec::new(),
        }
    }

    /// Allocate `n` free real variables, returning the first index.
    pub fn add_vars(&mut self, n: usize) -> usize {
        let start = self.num_vars;
        self.num_vars += n;
        start
    }

    /// Allocate a complex Hermitian PSD matrix variable of size `dim`.
    pub fn add_hermitian(&mut self, dim: usize) -> HermitianBlock {
        let start = self.add_vars(dim * dim);
        let block = HermitianBlock { dim, start };
        self.psd_blocks.push(block);
        block
    }

    /// Set the linear objective to minimize.
    pub fn minimize(&mut self, expr: LinExpr) {
        self.objective = expr;
    }

    /// Add `expr = 0`.
    pub fn eq(&mut self, expr: LinExpr) {
        self.rows.push(RowKind::Equality(expr));
    }

    /// Add `expr ≤ 0`; returns the inequality's dual index.
    pub fn le(&mut self, expr: LinExpr) -> usize {
        let id = self.num_inequalities;
        self.num_inequalities += 1;
        self.rows.push(RowKind::Inequality(expr));
        id
    }

    /// Add the second-order cone constraint `head ≥ ‖tail‖`.
    pub fn soc(&mut self, head: LinExpr, tail: Vec<LinExpr>) {
        self.rows.push(RowKind::Soc { head, tail });
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    /// Solve with default tolerances, re-verifying the optimum; an ambiguous
    /// status triggers one re-solve at tightened tolerance.
    pub fn solve(&self) -> Result<SolveResult> {
        let assembled = self.assemble();
        let first = assembled.run(false)?;
        if first.needs_retry {
            let second = assembled.run(true)?;
            return assembled.interpret(second, self);
        }
        assembled.interpret(first, self)
    }

    /// Self-describing text listing of the problem for offline debugging.
    pub fn dump_text(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        writeln!(out, "conic-problem v1").unwrap();
        writeln!(out, "vars {}", self.num_vars).unwrap();
        let fmt_expr = |e: &LinExpr| {
            let mut s = String::new();
            for (i, c) in &e.terms {
                write!(s, "{c:+.17e}*x{i} ").unwrap();
            }
            write!(s, "{:+.17e}", e.constant).unwrap();
            s
        };
        writeln!(out, "minimize {}", fmt_expr(&self.objective)).unwrap();
        for b in &self.psd_blocks {
            writeln!(out, "psd hermitian dim {} start {}", b.dim, b.start).unwrap();
        }
        for row in &self.rows {
            match row {
                RowKind::Equality(e) => writeln!(out, "eq {} = 0", fmt_expr(e)).unwrap(),
                RowKind::Inequality(e) => writeln!(out, "le {} <= 0", fmt_expr(e)).unwrap(),
                RowKind::Soc { head, tail } => {
                    writeln!(out, "soc head {}", fmt_expr(head)).unwrap();
                    for t in tail {
                        writeln!(out, "soc tail {}", fmt_expr(t)).unwrap();
                    }
                    writeln!(out, "soc end").unwrap();
                }
            }
        }
        out
    }

    fn assemble(&self) -> Assembled {
        let n = self.num_vars;
        let mut rows_i: Vec<usize> = Vec::new();
        let mut cols: Vec<usize> = Vec::new();
        let mut vals: Vec<f64> = Vec::new();
        let mut b: Vec<f64> = Vec::new();
        let mut cones: Vec<SupportedConeT<f64>> = Vec::new();
        let mut row = 0usize;

        let mut push_expr = |expr: &LinExpr,
                             sign: f64,
                             rows_i: &mut Vec<usize>,
                             cols: &mut Vec<usize>,
                             vals: &mut Vec<f64>,
                             b: &mut Vec<f64>,
                             row: &mut usize| {
            let mut e = expr.clone();
            e.canonicalize();
            for (i, c) in e.terms {
                rows_i.push(*row);
                cols.push(i);
                vals.push(sign * c);
            }
            b.push(if sign > 0.0 { -e.constant } else { e.constant });
            *row += 1;
        };

        // equalities first (zero cone), then inequalities (nonnegative cone),
        // then SOCs, then PSD embeddings — cone order must match row order
        let mut n_eq = 0;
        for r in &self.rows {
            if let RowKind::Equality(e) = r {
                push_expr(e, 1.0, &mut rows_i, &mut cols, &mut vals, &mut b, &mut row);
                n_eq += 1;
            }
        }
        if n_eq > 0 {
            cones.push(ZeroConeT(n_eq));
        }

        let ineq_offset = row;
        let mut n_ineq = 0;
        for r in &self.rows {
            if let RowKind::Inequality(e) = r {
                // expr <= 0 becomes expr + s = 0, s >= 0 with A = +terms
                push_expr(e, 1.0, &mut rows_i, &mut cols, &mut vals, &mut b, &mut row);
                n_ineq += 1;
            }
        }
        if n_ineq > 0 {
            cones.push(NonnegativeConeT(n_ineq));
        }

        for r in &self.rows {
            if let RowKind::Soc { head, tail } = r {
                // s = (head(x), tail(x)) in SOC, so A = -coeffs and b = consts
                push_expr(head, -1.0, &mut rows_i, &mut cols, &mut vals, &mut b, &mut row);
                for t in tail {
                    push_expr(t, -1.0, &mut rows_i, &mut cols, &mut vals, &mut b, &mut row);
                }
                cones.push(clarabel::solver::SecondOrderConeT(tail.len() + 1));
            }
        }

        for block in &self.psd_blocks {
            let m2 = 2 * block.dim;
            // svec of the real embedding [X, -Y; Y, X], upper triangle in
            // column order, off-diagonal entries scaled by sqrt(2)
            for j in 0..m2 {
                for i in 0..=j {
                    let scale = if i == j { 1.0 } else { std::f64::consts::SQRT_2 };
                    if let Some((param, coeff)) = embedding_entry(block, i, j) {
                        rows_i.push(row);
                        cols.push(param);
                        vals.push(-scale * coeff);
                    }
                    b.push(0.0);
                    row += 1;
                }
            }
            cones.push(PSDTriangleConeT(m2));
        }

        let mut q = vec![0.0; n];
        let mut obj = self.objective.clone();
        obj.canonicalize();
        for (i, c) in &obj.terms {
            q[*i] += c;
        }

        let a = CscMatrix::new_from_triplets(row, n, rows_i, cols, vals);
        Assembled {
            a,
            b,
            q,
            cones,
            obj_constant: obj.constant,
            ineq_offset,
            n_ineq,
        }
    }
}

/// Entry (i, j) of the real embedding of a Hermitian block, as a reference to
/// one block parameter with a sign, or `None` for structural zeros.
fn embedding_entry(block: &HermitianBlock, i: usize, j: usize) -> Option<(usize, f64)> {
    let m = block.dim;
    let (bi, ii) = (i / m, i % m);
    let (bj, jj) = (j / m, j % m);
    match (bi, bj) {
        // X on both diagonal blocks
        (0, 0) | (1, 1) => {
            if ii == jj {
                Some((block.diag(ii), 1.0))
            } else if ii < jj {
                Some((block.pair(ii, jj), 1.0))
            } else {
                Some((block.pair(jj, ii), 1.0))
            }
        }
        // upper-right block is -Y = -Im F
        (0, 1) => {
            use std::cmp::Ordering::*;
            match ii.cmp(&jj) {
                Equal => None,
                Less => Some((block.pair(ii, jj) + 1, -1.0)),
                Greater => Some((block.pair(jj, ii) + 1, 1.0)),
            }
        }
        // lower-left block is Y (only reached if svec order ever changes)
        (1, 0) => {
            use std::cmp::Ordering::*;
            match ii.cmp(&jj) {
                Equal => None,
                Less => Some((block.pair(ii, jj) + 1, 1.0)),
                Greater => Some((block.pair(jj, ii) + 1, -1.0)),
            }
        }
        _ => unreachable!(),
    }
}

struct Assembled {
    a: CscMatrix<f64>,
    b: Vec<f64>,
    q: Vec<f64>,
    cones: Vec<SupportedConeT<f64>>,
    obj_constant: f64,
    ineq_offset: usize,
    n_ineq: usize,
}

struct RawSolve {
    status: SolverStatus,
    x: Vec<f64>,
    z: Vec<f64>,
    obj: f64,
    obj_dual: f64,
    needs_retry: bool,
}

impl Assembled {
    fn run(&self, tightened: bool) -> Result<RawSolve> {
        let p = CscMatrix::<f64>::zeros((self.q.len(), self.q.len()));
        let mut settings = DefaultSettings { verbose: false, ..Default::default() };
        if tightened {
            settings.max_iter = 500;
            settings.tol_gap_abs = 1e-10;
            settings.tol_gap_rel = 1e-10;
            settings.tol_feas = 1e-10;
        }
        let mut solver = DefaultSolver::new(&p, &self.q, &self.a, &self.b, &self.cones, settings)
            .map_err(|e| Error::SolverFailure {
                status: format!("setup: {e:?}"),
                primal: f64::NAN,
                dual: f64::NAN,
                complementarity: f64::NAN,
            })?;
        solver.solve();
        let sol = &solver.solution;
        let needs_retry = !tightened
            && matches!(
                sol.status,
                SolverStatus::AlmostSolved
                    | SolverStatus::AlmostPrimalInfeasible
                    | SolverStatus::AlmostDualInfeasible
                    | SolverStatus::MaxIterations
                    | SolverStatus::InsufficientProgress
                    | SolverStatus::NumericalError
            );
        Ok(RawSolve {
            status: sol.status,
            x: sol.x.clone(),
            z: sol.z.clone(),
            obj: sol.obj_val,
            obj_dual: sol.obj_val_dual,
            needs_retry,
        })
    }

    /// Map the engine status to the contract, re-verifying optima.
    fn interpret(&self, raw: RawSolve, problem: &ConicProblem) -> Result<SolveResult> {
        use SolverStatus::*;
        match raw.status {
            PrimalInfeasible | AlmostPrimalInfeasible => Ok(SolveResult {
                status: SolveStatusKind::Infeasible,
                x: raw.x,
                duals: vec![],
                objective: f64::INFINITY,
                residuals: Residuals::default(),
            }),
            DualInfeasible | AlmostDualInfeasible => Ok(SolveResult {
                status: SolveStatusKind::Unbounded,
                x: raw.x,
                duals: vec![],
                objective: f64::NEG_INFINITY,
                residuals: Residuals::default(),
            }),
            Solved | AlmostSolved => {
                let residuals = self.verify(&raw.x, &raw.z, problem);
                let b_scale = 1.0 + self.b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                let q_scale = 1.0 + self.q.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                let gap = (raw.obj - raw.obj_dual).abs() / (1.0 + raw.obj.abs());
                let ok = residuals.primal <= 1e-7 * b_scale
                    && residuals.dual <= 1e-7 * q_scale
                    && residuals.complementarity <= 1e-6
                    && gap <= 1e-6;
                let duals: Vec<f64> =
                    raw.z[self.ineq_offset..self.ineq_offset + self.n_ineq].to_vec();
                if !ok || duals.iter().any(|&l| l < -1e-9) {
                    return Err(Error::SolverFailure {
                        status: format!("{:?} rejected by verification", raw.status),
                        primal: residuals.primal,
                        dual: residuals.dual,
                        complementarity: residuals.complementarity,
                    });
                }
                Ok(SolveResult {
                    status: SolveStatusKind::Optimal,
                    x: raw.x,
                    duals,
                    objective: raw.obj + self.obj_constant,
                    residuals,
                })
            }
            other => Err(Error::SolverFailure {
                status: format!("{other:?}"),
                primal: f64::NAN,
                dual: f64::NAN,
                complementarity: f64::NAN,
            }),
        }
    }

    /// KKT re-verification from the assembled data: feasibility of every row
    /// kind, stationarity, and complementary slackness.
    fn verify(&self, x: &[f64], z: &[f64], problem: &ConicProblem) -> Residuals {
        // primal feasibility per constraint kind
        let mut primal = 0.0f64;
        for row in &problem.rows {
            match row {
                RowKind::Equality(e) => primal = primal.max(e.eval(x).abs()),
                RowKind::Inequality(e) => primal = primal.max(e.eval(x).max(0.0)),
                RowKind::Soc { head, tail } => {
                    let t: f64 = tail.iter().map(|e| e.eval(x).powi(2)).sum::<f64>().sqrt();
                    primal = primal.max(t - head.eval(x)).max(0.0);
                }
            }
        }
        for block in &problem.psd_blocks {
            let f = block.value(x);
            let eig = f.symmetric_eigen();
            let min = eig.eigenvalues.iter().fold(f64::INFINITY, |m, &v| m.min(v));
            primal = primal.max((-min).max(0.0));
        }

        // stationarity: q + A^T z
        let mut atz = vec![0.0f64; self.q.len()];
        for col in 0..self.q.len() {
            let range = self.a.colptr[col]..self.a.colptr[col + 1];
            let mut acc = 0.0;
            for k in range {
                acc += self.a.nzval[k] * z[self.a.rowval[k]];
            }
            atz[col] = acc;
        }
        let dual = self
            .q
            .iter()
            .zip(&atz)
            .fold(0.0f64, |m, (qi, ai)| m.max((qi + ai).abs()));

        // complementary slackness over s = b - Ax
        let mut ax = vec![0.0f64; self.b.len()];
        for col in 0..self.q.len() {
            for k in self.a.colptr[col]..self.a.colptr[col + 1] {
                ax[self.a.rowval[k]] += self.a.nzval[k] * x[col];
            }
        }
        let obj: f64 = self.q.iter().zip(x).map(|(q, x)| q * x).sum();
        let sz: f64 = self
            .b
            .iter()
            .zip(&ax)
            .zip(z)
            .map(|((b, ax), z)| (b - ax) * z)
            .sum();
        let complementarity = sz.abs() / (1.0 + obj.abs());

        Residuals { primal, dual, complementarity }
    }
}
