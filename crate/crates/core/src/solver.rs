//! Thin contract over the LP/MILP backend.
//!
//! Everything above this module talks to [`Gateway`] in terms of [`Program`], a plain
//! column/row description. Row duals are reported as sensitivities of the program's own
//! objective with respect to the active row bound, so for a minimization a binding `≤` row has
//! a nonpositive dual. [`LpSolution`] flips these into the nonnegative convention used by the
//! cut formulas.

use std::ops::Range;

use highs::{HighsModelStatus, HighsSolutionStatus, RowProblem, Sense};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{sparse_dot, LinearProgram};

/// Environment variable selecting the backend.
pub const SOLVER_ENV: &str = "NEAROPT_SOLVER";

/// Feasibility tolerance for LP results and pool verification.
pub const FEAS_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct Column {
    pub lower: f64,
    pub upper: f64,
    pub cost: f64,
    pub integer: bool,
}

/// `lower ≤ coeffsᵀx ≤ upper`.
#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub lower: f64,
    pub upper: f64,
    pub coeffs: Vec<(usize, f64)>,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Program {
    pub cols: Vec<Column>,
    pub rows: Vec<Row>,
    pub maximize: bool,
}

/// Where a [`LinearProgram`] landed inside a [`Program`].
#[derive(Clone, Debug, PartialEq)]
pub struct Embedding {
    pub cols: Range<usize>,
    pub ineq_rows: Range<usize>,
    pub eq_rows: Range<usize>,
}

impl Embedding {
    pub fn col(&self, j: usize) -> usize {
        self.cols.start + j
    }

    pub fn x<'a>(&self, primal: &'a [f64]) -> &'a [f64] {
        &primal[self.cols.clone()]
    }
}

impl Program {
    pub fn minimize() -> Self {
        Self::default()
    }

    pub fn maximize() -> Self {
        Self {
            maximize: true,
            ..Self::default()
        }
    }

    pub fn add_col(&mut self, lower: f64, upper: f64, cost: f64) -> usize {
        self.cols.push(Column {
            lower,
            upper,
            cost,
            integer: false,
        });
        self.cols.len() - 1
    }

    pub fn add_int_col(&mut self, lower: f64, upper: f64, cost: f64) -> usize {
        let j = self.add_col(lower, upper, cost);
        self.cols[j].integer = true;
        j
    }

    pub fn add_binary(&mut self, cost: f64) -> usize {
        self.add_int_col(0.0, 1.0, cost)
    }

    pub fn add_row(&mut self, lower: f64, upper: f64, coeffs: Vec<(usize, f64)>) -> usize {
        self.rows.push(Row { lower, upper, coeffs });
        self.rows.len() - 1
    }

    pub fn add_le(&mut self, coeffs: Vec<(usize, f64)>, rhs: f64) -> usize {
        self.add_row(f64::NEG_INFINITY, rhs, coeffs)
    }

    pub fn add_ge(&mut self, coeffs: Vec<(usize, f64)>, rhs: f64) -> usize {
        self.add_row(rhs, f64::INFINITY, coeffs)
    }

    pub fn add_eq(&mut self, coeffs: Vec<(usize, f64)>, rhs: f64) -> usize {
        self.add_row(rhs, rhs, coeffs)
    }

    /// Appends the model's columns (with zero cost) and rows.
    pub fn embed_model(&mut self, lp: &LinearProgram) -> Embedding {
        let offset = self.cols.len();
        for v in &lp.variables {
            self.add_col(v.lower, v.upper, 0.0);
        }
        let shift = |coeffs: &[(usize, f64)]| coeffs.iter().map(|&(j, a)| (offset + j, a)).collect();
        let start = self.rows.len();
        for row in &lp.inequalities {
            self.add_le(shift(&row.coeffs), row.rhs);
        }
        let mid = self.rows.len();
        for row in &lp.equalities {
            self.add_eq(shift(&row.coeffs), row.rhs);
        }
        Embedding {
            cols: offset..offset + lp.n_vars(),
            ineq_rows: start..mid,
            eq_rows: mid..self.rows.len(),
        }
    }

    /// Adds `scale · coeffs` to the costs of the embedded model columns.
    pub fn add_model_cost(&mut self, emb: &Embedding, coeffs: &[(usize, f64)], scale: f64) {
        for &(j, a) in coeffs {
            self.cols[emb.col(j)].cost += scale * a;
        }
    }

    pub fn has_integers(&self) -> bool {
        self.cols.iter().any(|c| c.integer)
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        self.cols.iter().zip(x).map(|(c, v)| c.cost * v).sum()
    }

    /// Largest bound, row or integrality violation at `x`, each scaled by `1 + |bound|`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let excess = |value: f64, lower: f64, upper: f64| -> f64 {
            let below = if lower.is_finite() { (lower - value) / (1.0 + lower.abs()) } else { 0.0 };
            let above = if upper.is_finite() { (value - upper) / (1.0 + upper.abs()) } else { 0.0 };
            below.max(above).max(0.0)
        };
        let mut worst: f64 = 0.0;
        for (c, &v) in self.cols.iter().zip(x) {
            worst = worst.max(excess(v, c.lower, c.upper));
            if c.integer {
                worst = worst.max((v - v.round()).abs());
            }
        }
        for row in &self.rows {
            worst = worst.max(excess(sparse_dot(&row.coeffs, x), row.lower, row.upper));
        }
        worst
    }

    fn to_highs(&self, zero_objective: bool) -> RowProblem {
        let sign = if self.maximize { -1.0 } else { 1.0 };
        let mut pb = RowProblem::default();
        let cols: Vec<_> = self
            .cols
            .iter()
            .map(|c| {
                let cost = if zero_objective { 0.0 } else { sign * c.cost };
                if c.integer {
                    pb.add_integer_column(cost, c.lower..=c.upper)
                } else {
                    pb.add_column(cost, c.lower..=c.upper)
                }
            })
            .collect();
        for row in &self.rows {
            let factors: Vec<_> = row.coeffs.iter().map(|&(j, a)| (cols[j], a)).collect();
            pb.add_row(row.lower..=row.upper, factors);
        }
        pb
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// Raw solution of a [`Program`].
#[derive(Clone, Debug)]
pub struct ProgramSolution {
    pub status: LpStatus,
    pub objective: f64,
    pub primal: Vec<f64>,
    /// Sensitivity of the objective to each row's active bound.
    pub row_duals: Vec<f64>,
    /// Reduced costs in the same convention.
    pub col_duals: Vec<f64>,
}

/// Solution of a [`LinearProgram`] in the nonnegative-`≤`-dual convention.
#[derive(Clone, Debug)]
pub struct LpSolution {
    pub status: LpStatus,
    pub objective: f64,
    pub primal: Vec<f64>,
    /// `−∂objective/∂rhs`, nonnegative for every `≤` row.
    pub duals_ineq: Vec<f64>,
    /// `−∂objective/∂rhs`.
    pub duals_eq: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MilpStatus {
    Optimal,
    GapLimit,
    TimeLimit,
    Infeasible,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MilpOptions {
    pub rel_gap: f64,
    pub abs_gap: f64,
    pub time_limit_s: f64,
    pub pool_size: usize,
}

impl Default for MilpOptions {
    fn default() -> Self {
        Self {
            rel_gap: 0.1,
            abs_gap: 0.05,
            time_limit_s: 600.0,
            pool_size: 1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct MilpSolution {
    pub status: MilpStatus,
    pub objective: f64,
    /// Dual bound; for a maximization no feasible point exceeds it.
    pub bound: f64,
    pub incumbent: Vec<f64>,
    /// Distinct feasible points (by binary pattern), best first. Starts with the incumbent.
    pub pool: Vec<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Highs,
}

/// Solver settings, echoed into run manifests.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Gateway {
    pub backend: Backend,
    pub threads: u32,
    pub seed: u64,
}

impl Default for Gateway {
    fn default() -> Self {
        Self {
            backend: Backend::Highs,
            threads: 1,
            seed: 0,
        }
    }
}

impl Gateway {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    /// Picks the backend named by `NEAROPT_SOLVER` (default `highs`).
    pub fn from_env(seed: u64) -> Result<Self> {
        match std::env::var(SOLVER_ENV) {
            Ok(name) => Self::with_backend(&name, seed),
            Err(_) => Ok(Self::new(seed)),
        }
    }

    pub fn with_backend(name: &str, seed: u64) -> Result<Self> {
        match name.trim().to_ascii_lowercase().as_str() {
            "" | "highs" => Ok(Self::new(seed)),
            other => Err(Error::SolverUnavailable(other.to_string())),
        }
    }

    fn model(&self, program: &Program, zero_objective: bool) -> highs::Model {
        let mut model = program.to_highs(zero_objective).optimise(Sense::Minimise);
        model.make_quiet();
        model.set_option("threads", self.threads as i32);
        model.set_option("random_seed", (self.seed % (i32::MAX as u64)) as i32);
        model
    }

    /// Solves `program` as an LP. Integer markers, if any, are honored by the backend but
    /// duals are then meaningless.
    pub fn solve_program(&self, program: &Program, warm_start: Option<&[f64]>) -> Result<ProgramSolution> {
        let mut model = self.model(program, false);
        if let Some(x) = warm_start {
            // A rejected hint only costs speed.
            let _ = model.try_set_solution(Some(x), None, None, None);
        }
        let solved = model
            .try_solve()
            .map_err(|s| Error::NumericalFailure(format!("backend returned {s:?}")))?;
        let status = match solved.status() {
            HighsModelStatus::Optimal => LpStatus::Optimal,
            HighsModelStatus::Infeasible => LpStatus::Infeasible,
            HighsModelStatus::Unbounded => LpStatus::Unbounded,
            HighsModelStatus::UnboundedOrInfeasible => self.disambiguate(program)?,
            HighsModelStatus::ModelEmpty => LpStatus::Optimal,
            other => return Err(Error::NumericalFailure(format!("LP status {other:?}"))),
        };
        let n = program.cols.len();
        let m = program.rows.len();
        if status != LpStatus::Optimal {
            return Ok(ProgramSolution {
                status,
                objective: f64::NAN,
                primal: vec![f64::NAN; n],
                row_duals: vec![0.0; m],
                col_duals: vec![0.0; n],
            });
        }
        let sol = solved.get_solution();
        let sign = if program.maximize { -1.0 } else { 1.0 };
        let primal = sol.columns().to_vec();
        let out = ProgramSolution {
            status,
            objective: program.objective(&primal),
            row_duals: sol.dual_rows().iter().map(|d| sign * d).collect(),
            col_duals: sol.dual_columns().iter().map(|d| sign * d).collect(),
            primal,
        };
        if !program.has_integers() {
            debug_assert!(
                program.max_violation(&out.primal) <= FEAS_TOL,
                "LP primal violates constraints by {}",
                program.max_violation(&out.primal)
            );
            debug_assert!(
                (out.objective - dual_objective(program, &out)).abs() <= FEAS_TOL * (1.0 + out.objective.abs()),
                "duality gap {} vs {}",
                out.objective,
                dual_objective(program, &out)
            );
        }
        Ok(out)
    }

    fn disambiguate(&self, program: &Program) -> Result<LpStatus> {
        let solved = self
            .model(program, true)
            .try_solve()
            .map_err(|s| Error::NumericalFailure(format!("backend returned {s:?}")))?;
        match solved.status() {
            HighsModelStatus::Optimal | HighsModelStatus::ModelEmpty => Ok(LpStatus::Unbounded),
            HighsModelStatus::Infeasible | HighsModelStatus::UnboundedOrInfeasible => Ok(LpStatus::Infeasible),
            other => Err(Error::NumericalFailure(format!("feasibility check status {other:?}"))),
        }
    }

    pub fn solve_lp(&self, lp: &LinearProgram, warm_start: Option<&[f64]>) -> Result<LpSolution> {
        let mut program = Program::minimize();
        let emb = program.embed_model(lp);
        program.add_model_cost(&emb, &lp.objective, 1.0);
        let sol = self.solve_program(&program, warm_start)?;
        Ok(LpSolution {
            status: sol.status,
            objective: sol.objective,
            duals_ineq: sol.row_duals[emb.ineq_rows.clone()].iter().map(|d| -d).collect(),
            duals_eq: sol.row_duals[emb.eq_rows.clone()].iter().map(|d| -d).collect(),
            primal: sol.primal,
        })
    }

    /// Solves a mixed-integer program. With `pool_size > 1`, further solutions are found by
    /// excluding each previous binary pattern in turn.
    pub fn solve_milp(&self, program: &Program, opts: &MilpOptions, warm_start: Option<&[f64]>) -> Result<MilpSolution> {
        if !(opts.rel_gap >= 0.0 && opts.abs_gap >= 0.0 && opts.time_limit_s > 0.0) {
            return Err(Error::InvalidArgument("gaps must be nonnegative and time limit positive".into()));
        }
        let first = self.milp_once(program, opts, warm_start)?;
        let Some(mut first) = first else {
            return Ok(MilpSolution {
                status: MilpStatus::Infeasible,
                objective: f64::NAN,
                bound: f64::NAN,
                incumbent: Vec::new(),
                pool: Vec::new(),
            });
        };
        first.pool.push(first.incumbent.clone());
        let binaries: Vec<usize> = (0..program.cols.len())
            .filter(|&j| program.cols[j].integer && program.cols[j].lower == 0.0 && program.cols[j].upper == 1.0)
            .collect();
        if opts.pool_size > 1 && !binaries.is_empty() {
            let mut restricted = program.clone();
            let mut last = first.incumbent.clone();
            while first.pool.len() < opts.pool_size {
                restricted.rows.push(no_good_cut(&binaries, &last));
                match self.milp_once(&restricted, opts, None)? {
                    Some(next) => {
                        if program.max_violation(&next.incumbent) > FEAS_TOL {
                            return Err(Error::NumericalFailure("pool member fails substitution check".into()));
                        }
                        last = next.incumbent.clone();
                        first.pool.push(next.incumbent);
                    }
                    None => break,
                }
            }
        }
        Ok(first)
    }

    fn milp_once(&self, program: &Program, opts: &MilpOptions, warm_start: Option<&[f64]>) -> Result<Option<MilpSolution>> {
        let mut model = self.model(program, false);
        model.set_option("mip_rel_gap", opts.rel_gap);
        model.set_option("mip_abs_gap", opts.abs_gap);
        model.set_option("time_limit", opts.time_limit_s);
        if let Some(x) = warm_start {
            let _ = model.try_set_solution(Some(x), None, None, None);
        }
        let solved = model
            .try_solve()
            .map_err(|s| Error::NumericalFailure(format!("backend returned {s:?}")))?;
        let has_incumbent = solved.primal_solution_status() == HighsSolutionStatus::Feasible;
        let status = solved.status();
        let timed_out = match status {
            HighsModelStatus::Optimal => false,
            HighsModelStatus::ReachedTimeLimit if has_incumbent => true,
            HighsModelStatus::ReachedTimeLimit => return Err(Error::TimeLimitNoIncumbent),
            HighsModelStatus::Infeasible => return Ok(None),
            HighsModelStatus::Unbounded | HighsModelStatus::UnboundedOrInfeasible => {
                return Err(Error::NumericalFailure("MILP reported unbounded".into()))
            }
            other => return Err(Error::NumericalFailure(format!("MILP status {other:?}"))),
        };
        let sign = if program.maximize { -1.0 } else { 1.0 };
        let incumbent = solved.get_solution().columns().to_vec();
        let objective = program.objective(&incumbent);
        let raw_bound = solved
            .double_info_value(c"mip_dual_bound")
            .map_err(|s| Error::NumericalFailure(format!("dual bound unavailable: {s:?}")))?;
        let bound = if program.has_integers() { sign * raw_bound } else { objective };
        if program.max_violation(&incumbent) > FEAS_TOL {
            return Err(Error::NumericalFailure(format!(
                "incumbent violates constraints by {:e}",
                program.max_violation(&incumbent)
            )));
        }
        let gap = (bound - objective).abs();
        let status = if timed_out {
            MilpStatus::TimeLimit
        } else if gap <= 1e-9 * objective.abs().max(1.0) {
            MilpStatus::Optimal
        } else {
            MilpStatus::GapLimit
        };
        Ok(Some(MilpSolution {
            status,
            objective,
            bound,
            incumbent,
            pool: Vec::new(),
        }))
    }
}

/// `Σ_{b: x_b=1} (1 − x_b) + Σ_{b: x_b=0} x_b ≥ 1`.
fn no_good_cut(binaries: &[usize], x: &[f64]) -> Row {
    let mut ones = 0.0;
    let coeffs = binaries
        .iter()
        .map(|&j| {
            if x[j] > 0.5 {
                ones += 1.0;
                (j, -1.0)
            } else {
                (j, 1.0)
            }
        })
        .collect();
    Row {
        lower: 1.0 - ones,
        upper: f64::INFINITY,
        coeffs,
    }
}

/// Dual objective assembled from the active bounds picked by each dual's sign.
fn dual_objective(program: &Program, sol: &ProgramSolution) -> f64 {
    // For a minimization a positive dual means the lower bound binds; flip for maximization.
    let pick = |dual: f64, lower: f64, upper: f64, activity: f64| -> f64 {
        let positive = (dual > 0.0) != program.maximize;
        let bound = if dual == 0.0 {
            return 0.0;
        } else if positive {
            lower
        } else {
            upper
        };
        if bound.is_finite() {
            dual * bound
        } else {
            dual * activity
        }
    };
    let rows: f64 = program
        .rows
        .iter()
        .zip(&sol.row_duals)
        .map(|(r, &d)| pick(d, r.lower, r.upper, sparse_dot(&r.coeffs, &sol.primal)))
        .sum();
    let cols: f64 = program
        .cols
        .iter()
        .zip(&sol.col_duals)
        .zip(&sol.primal)
        .map(|((c, &d), &x)| pick(d, c.lower, c.upper, x))
        .sum();
    rows + cols
}
