//! A minimal conic-program representation and its interior-point backend.
//!
//! Problems are stated as
//!
//! ```text
//! minimize    ½ Σ_j p_j x_j² + cᵀx
//! subject to  e_i(x) ∈ K_i
//! ```
//!
//! where each `e_i` is a block of affine expressions and `K_i` is the zero
//! cone, the nonnegative orthant, a second-order cone or a 3-d power cone.
//! Every subproblem in this crate is representable this way; the backend is
//! the Clarabel interior-point solver.

use std::fmt::Write as _;
use std::ops::Range;

use clarabel::algebra::CscMatrix;
use serde::{Deserialize, Serialize};
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub usize);

/// `constant + Σ coef·x`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Affine {
    pub constant: f64,
    pub terms: Vec<(Var, f64)>,
}

impl Affine {
    pub fn constant(c: f64) -> Self {
        Affine {
            constant: c,
            terms: Vec::new(),
        }
    }

    pub fn var(v: Var) -> Self {
        Affine {
            constant: 0.0,
            terms: vec![(v, 1.0)],
        }
    }

    pub fn term(v: Var, coef: f64) -> Self {
        Affine {
            constant: 0.0,
            terms: vec![(v, coef)],
        }
    }

    pub fn plus(mut self, v: Var, coef: f64) -> Self {
        self.terms.push((v, coef));
        self
    }

    pub fn plus_const(mut self, c: f64) -> Self {
        self.constant += c;
        self
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(v, c)| c * x[v.0]).sum::<f64>()
    }

    fn scale(&mut self, s: f64) {
        self.constant *= s;
        for t in &mut self.terms {
            t.1 *= s;
        }
    }

    fn magnitude(&self) -> f64 {
        self.terms
            .iter()
            .map(|t| t.1.abs())
            .fold(self.constant.abs(), f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConeKind {
    /// All rows equal zero.
    Zero,
    /// All rows nonnegative.
    NonNeg,
    /// `row[0] >= ‖row[1..]‖`.
    SecondOrder,
    /// `row[0]^α row[1]^(1−α) >= |row[2]|`.
    Power(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub kind: ConeKind,
    pub label: &'static str,
    pub rows: Vec<Affine>,
}

#[derive(Debug, Clone, PartialEq)]
struct VarGroup {
    name: &'static str,
    range: Range<usize>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConicProgram {
    groups: Vec<VarGroup>,
    n_vars: usize,
    pub objective: Vec<f64>,
    pub objective_constant: f64,
    /// Diagonal quadratic weights `p_j` (objective `½ Σ p_j x_j²`).
    pub quadratic: Vec<f64>,
    pub blocks: Vec<Block>,
}

impl ConicProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_vars(&mut self, name: &'static str, count: usize) -> Range<usize> {
        let range = self.n_vars..self.n_vars + count;
        self.n_vars += count;
        self.objective.resize(self.n_vars, 0.0);
        self.quadratic.resize(self.n_vars, 0.0);
        self.groups.push(VarGroup {
            name,
            range: range.clone(),
        });
        range
    }

    pub fn add_var(&mut self, name: &'static str) -> Var {
        Var(self.add_vars(name, 1).start)
    }

    pub fn num_vars(&self) -> usize {
        self.n_vars
    }

    pub fn num_rows(&self) -> usize {
        self.blocks.iter().map(|b| b.rows.len()).sum()
    }

    pub fn var_name(&self, v: Var) -> String {
        self.groups
            .iter()
            .find(|g| g.range.contains(&v.0))
            .map(|g| {
                if g.range.len() == 1 {
                    g.name.to_string()
                } else {
                    format!("{}[{}]", g.name, v.0 - g.range.start)
                }
            })
            .unwrap_or_else(|| format!("x{}", v.0))
    }

    pub fn push(&mut self, kind: ConeKind, label: &'static str, rows: Vec<Affine>) {
        if let ConeKind::Power(_) = kind {
            debug_assert_eq!(rows.len(), 3);
        }
        if rows.is_empty() {
            return;
        }
        self.blocks.push(Block { kind, label, rows });
    }

    pub fn equal(&mut self, label: &'static str, row: Affine) {
        self.push(ConeKind::Zero, label, vec![row]);
    }

    pub fn nonneg(&mut self, label: &'static str, row: Affine) {
        self.push(ConeKind::NonNeg, label, vec![row]);
    }

    pub fn soc(&mut self, label: &'static str, rows: Vec<Affine>) {
        self.push(ConeKind::SecondOrder, label, rows);
    }

    /// Objective value (including the constant) at `x`.
    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective_constant
            + self
                .objective
                .iter()
                .zip(&self.quadratic)
                .zip(x)
                .map(|((c, p), xi)| c * xi + 0.5 * p * xi * xi)
                .sum::<f64>()
    }

    /// Worst cone violation of `x` over all blocks, in the (normalized)
    /// units the blocks are stored in.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        self.blocks
            .iter()
            .map(|b| block_violation(b, x))
            .fold(0.0, f64::max)
    }

    /// Rescales every block to unit largest coefficient. Linear blocks are
    /// scaled row by row, cone blocks as a whole (cones are invariant under
    /// positive scaling).
    pub fn normalize_rows(&mut self) {
        for block in &mut self.blocks {
            match block.kind {
                ConeKind::Zero | ConeKind::NonNeg => {
                    for row in &mut block.rows {
                        let m = row.magnitude();
                        if m > 0.0 {
                            row.scale(1.0 / m);
                        }
                    }
                }
                ConeKind::SecondOrder | ConeKind::Power(_) => {
                    let m = block.rows.iter().map(Affine::magnitude).fold(0.0, f64::max);
                    if m > 0.0 {
                        for row in &mut block.rows {
                            row.scale(1.0 / m);
                        }
                    }
                }
            }
        }
    }

    /// Plain-text listing: variables, objective, then every constraint row
    /// with its constant and coefficients.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# variables {}", self.n_vars);
        for g in &self.groups {
            let _ = writeln!(out, "var {} {}..{}", g.name, g.range.start, g.range.end);
        }
        let _ = writeln!(out, "# objective: minimize const + sum c_j x_j + 0.5 sum p_j x_j^2");
        let _ = writeln!(out, "const {:e}", self.objective_constant);
        for (j, (&c, &p)) in self.objective.iter().zip(&self.quadratic).enumerate() {
            if c != 0.0 || p != 0.0 {
                let _ = writeln!(out, "obj {} c={:e} p={:e}", self.var_name(Var(j)), c, p);
            }
        }
        let _ = writeln!(out, "# constraints {} blocks, {} rows", self.blocks.len(), self.num_rows());
        for (i, b) in self.blocks.iter().enumerate() {
            let kind = match b.kind {
                ConeKind::Zero => "zero".to_string(),
                ConeKind::NonNeg => "nonneg".to_string(),
                ConeKind::SecondOrder => format!("soc{}", b.rows.len()),
                ConeKind::Power(a) => format!("pow({a})"),
            };
            let _ = writeln!(out, "block {i} {kind} {}", b.label);
            for row in &b.rows {
                let _ = write!(out, "  {:e}", row.constant);
                for &(v, c) in &row.terms {
                    let _ = write!(out, " {:+e}*{}", c, self.var_name(v));
                }
                let _ = writeln!(out);
            }
        }
        out
    }
}

fn block_violation(b: &Block, x: &[f64]) -> f64 {
    let vals: Vec<f64> = b.rows.iter().map(|r| r.eval(x)).collect();
    match b.kind {
        ConeKind::Zero => vals.iter().map(|v| v.abs()).fold(0.0, f64::max),
        ConeKind::NonNeg => vals.iter().map(|v| (-v).max(0.0)).fold(0.0, f64::max),
        ConeKind::SecondOrder => {
            let tail = vals[1..].iter().map(|v| v * v).sum::<f64>().sqrt();
            (tail - vals[0]).max(0.0)
        }
        ConeKind::Power(alpha) => {
            let (a, b2, c) = (vals[0], vals[1], vals[2]);
            let neg = (-a).max(0.0).max((-b2).max(0.0));
            let lhs = a.max(0.0).powf(alpha) * b2.max(0.0).powf(1.0 - alpha);
            neg.max((c.abs() - lhs).max(0.0))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    /// Absolute primal feasibility tolerance on normalized rows.
    pub feas_tol: f64,
    /// Relative duality-gap tolerance.
    pub opt_tol: f64,
    pub max_iter: u32,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            feas_tol: 1e-8,
            opt_tol: 1e-6,
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    IterationLimit,
    NumericalError,
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::IterationLimit => "iteration-limit",
            SolveStatus::NumericalError => "numerical-error",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: u32,
    /// Largest cone violation of `x`.
    pub primal_residual: f64,
}

/// Violation slack accepted on top of `feas_tol` for solutions flagged
/// "almost solved" by the backend.
const ALMOST_SLACK: f64 = 1e3;

/// Solves `program` with the interior-point backend. Failures are reported
/// through [`SolveStatus`], never by panicking.
pub fn solve(program: &ConicProgram, settings: &SolverSettings) -> Solution {
    let n = program.num_vars();
    // Clarabel form: A x + s = b, s ∈ K; with s = constant + Σ coef x
    // we have A = −coef and b = constant.
    let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
    let mut b = Vec::with_capacity(program.num_rows());
    let mut cones = Vec::with_capacity(program.blocks.len());
    let mut row = 0;
    for block in &program.blocks {
        for r in &block.rows {
            for &(v, c) in &r.terms {
                if c != 0.0 {
                    triplets.push((row, v.0, -c));
                }
            }
            b.push(r.constant);
            row += 1;
        }
        let dim = block.rows.len();
        cones.push(match block.kind {
            ConeKind::Zero => SupportedConeT::ZeroConeT(dim),
            ConeKind::NonNeg => SupportedConeT::NonnegativeConeT(dim),
            ConeKind::SecondOrder => SupportedConeT::SecondOrderConeT(dim),
            ConeKind::Power(alpha) => SupportedConeT::PowerConeT(alpha),
        });
    }
    let a = csc_from_triplets(row, n, triplets);
    let p_triplets = program
        .quadratic
        .iter()
        .enumerate()
        .filter(|(_, &p)| p != 0.0)
        .map(|(j, &p)| (j, j, p))
        .collect();
    let p = csc_from_triplets(n, n, p_triplets);

    let clarabel_settings = DefaultSettingsBuilder::default()
        .verbose(false)
        .max_iter(settings.max_iter)
        .tol_feas(settings.feas_tol)
        .tol_gap_rel(settings.opt_tol)
        .tol_gap_abs(settings.opt_tol)
        .build()
        .expect("valid solver settings");

    let mut solver = match DefaultSolver::new(&p, &program.objective, &a, &b, &cones, clarabel_settings) {
        Ok(s) => s,
        Err(e) => {
            log::warn!("solver setup failed: {e:?}");
            return Solution {
                status: SolveStatus::NumericalError,
                x: vec![0.0; n],
                objective: f64::NAN,
                iterations: 0,
                primal_residual: f64::INFINITY,
            };
        }
    };
    solver.solve();
    let sol = &solver.solution;
    let x = sol.x.clone();
    let primal_residual = if x.iter().all(|v| v.is_finite()) {
        program.max_violation(&x)
    } else {
        f64::INFINITY
    };
    let status = match sol.status {
        SolverStatus::Solved if primal_residual <= settings.feas_tol * ALMOST_SLACK => SolveStatus::Optimal,
        SolverStatus::AlmostSolved if primal_residual <= settings.feas_tol * ALMOST_SLACK => {
            SolveStatus::Optimal
        }
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => SolveStatus::Infeasible,
        SolverStatus::MaxIterations | SolverStatus::MaxTime => SolveStatus::IterationLimit,
        _ => SolveStatus::NumericalError,
    };
    Solution {
        status,
        objective: program.objective_value(&x),
        x,
        iterations: sol.iterations,
        primal_residual,
    }
}

fn csc_from_triplets(m: usize, n: usize, mut triplets: Vec<(usize, usize, f64)>) -> CscMatrix<f64> {
    triplets.sort_unstable_by_key(|&(r, c, _)| (c, r));
    let mut colptr = vec![0usize; n + 1];
    let mut rowval = Vec::with_capacity(triplets.len());
    let mut nzval: Vec<f64> = Vec::with_capacity(triplets.len());
    let mut last: Option<(usize, usize)> = None;
    for (r, c, v) in triplets {
        if last == Some((r, c)) {
            *nzval.last_mut().unwrap() += v;
            continue;
        }
        colptr[c + 1] += 1;
        rowval.push(r);
        nzval.push(v);
        last = Some((r, c));
    }
    for j in 0..n {
        colptr[j + 1] += colptr[j];
    }
    CscMatrix::new(m, n, colptr, rowval, nzval)
}
