//! Exploration specifications: which linear combinations of the decision vector are explored,
//! the cost slack, and the near-optimal problem assembled from a solved model.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{sparse_dot, LinearProgram};
use crate::solver::{Embedding, Gateway, LpStatus, Program};

/// Linear map `z = S x` onto the exploratory variables.
#[derive(Clone, Debug, PartialEq)]
pub struct Projection {
    pub names: Vec<String>,
    pub rows: Vec<Vec<(usize, f64)>>,
}

impl Projection {
    /// One unit row per listed variable.
    pub fn unit(model: &LinearProgram, vars: &[&str]) -> Result<Self> {
        let mut names = Vec::with_capacity(vars.len());
        let mut rows = Vec::with_capacity(vars.len());
        for &name in vars {
            let j = model
                .var_index(name)
                .ok_or_else(|| Error::UnknownVariable(name.to_string()))?;
            names.push(name.to_string());
            rows.push(vec![(j, 1.0)]);
        }
        Ok(Self { names, rows })
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|r| sparse_dot(r, x)).collect()
    }

    /// The variable behind row `j` when that row is exactly `e_var`.
    pub fn unit_var(&self, j: usize) -> Option<usize> {
        match self.rows[j].as_slice() {
            [(v, a)] if *a == 1.0 => Some(*v),
            _ => None,
        }
    }

    pub fn is_unit(&self) -> bool {
        (0..self.dim()).all(|j| self.unit_var(j).is_some())
    }

    fn validate(&self, n_vars: usize) -> Result<()> {
        if self.rows.is_empty() {
            return Err(Error::InvalidSpec("no exploratory variables".into()));
        }
        if self.names.len() != self.rows.len() {
            return Err(Error::InvalidSpec("projection names do not match rows".into()));
        }
        let mut dense = DMatrix::<f64>::zeros(self.dim(), n_vars);
        for (i, row) in self.rows.iter().enumerate() {
            if row.is_empty() {
                return Err(Error::InvalidSpec(format!("projection row {i} is empty")));
            }
            for &(j, a) in row {
                if j >= n_vars {
                    return Err(Error::UnknownVariable(format!("#{j}")));
                }
                dense[(i, j)] += a;
            }
        }
        if self.dim() > n_vars || dense.rank(1e-9) < self.dim() {
            return Err(Error::InvalidSpec("projection rows are linearly dependent".into()));
        }
        Ok(())
    }
}

/// Whether the aggregate cost inequality `(S·c)ᵀz ≤ budget` is added to the outer region.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CostCut {
    /// Enabled when the model structure proves it valid.
    #[default]
    Auto,
    /// Asserted valid by the user.
    On,
    Off,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExplorationSpec {
    pub projection: Projection,
    /// Fractional cost slack ε.
    pub epsilon: f64,
    /// Absolute slack, required when the optimum is not positive.
    pub epsilon_abs: Option<f64>,
    /// Convergence tolerance in z-units (infinity norm).
    pub tolerance: f64,
    pub cost_cut: CostCut,
    /// Import inequality rows supported only on explored variables into the initial outer region.
    pub import_rows: bool,
}

impl ExplorationSpec {
    pub fn new(projection: Projection, epsilon: f64, tolerance: f64) -> Self {
        Self {
            projection,
            epsilon,
            epsilon_abs: None,
            tolerance,
            cost_cut: CostCut::Auto,
            import_rows: true,
        }
    }

    pub fn dim(&self) -> usize {
        self.projection.dim()
    }

    pub fn validate(&self, model: &LinearProgram) -> Result<()> {
        self.projection.validate(model.n_vars())?;
        if !(self.epsilon >= 0.0) {
            return Err(Error::InvalidSpec("epsilon must be nonnegative".into()));
        }
        if let Some(abs) = self.epsilon_abs {
            if !(abs >= 0.0) {
                return Err(Error::InvalidSpec("epsilon_abs must be nonnegative".into()));
            }
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidSpec("tolerance must be positive".into()));
        }
        Ok(())
    }

    /// `S·c`, the per-unit cost the explored variables contribute directly.
    pub fn cost_cut_normal(&self, model: &LinearProgram) -> Vec<f64> {
        let c = model.cost_vector();
        self.projection.rows.iter().map(|r| sparse_dot(r, &c)).collect()
    }

    /// True when `(S·c)ᵀz` is provably no larger than the total cost on the feasible set:
    /// unit projections, and every unexplored cost term nonnegative over its bounds.
    pub fn cost_cut_provably_valid(&self, model: &LinearProgram) -> bool {
        if !self.projection.is_unit() {
            return false;
        }
        let explored: Vec<usize> = (0..self.dim()).filter_map(|j| self.projection.unit_var(j)).collect();
        model.objective.iter().all(|&(j, c)| {
            if explored.contains(&j) {
                return true;
            }
            let v = &model.variables[j];
            (c > 0.0 && v.lower >= 0.0) || (c < 0.0 && v.upper <= 0.0)
        })
    }

    pub fn cost_cut_enabled(&self, model: &LinearProgram) -> bool {
        match self.cost_cut {
            CostCut::On => true,
            CostCut::Off => false,
            CostCut::Auto => self.cost_cut_provably_valid(model),
        }
    }

    pub fn from_json_str(text: &str, model: &LinearProgram) -> Result<Self> {
        let doc: SpecDoc = serde_json::from_str(text).map_err(|e| Error::Syntax {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        let projection = match (doc.explore, doc.projection) {
            (Some(names), None) => {
                let refs: Vec<&str> = names.iter().map(String::as_str).collect();
                Projection::unit(model, &refs)?
            }
            (None, Some(entries)) => {
                let n_rows = entries.iter().map(|e| e.row + 1).max().unwrap_or(0);
                let mut rows = vec![Vec::new(); n_rows];
                for e in entries {
                    let j = model
                        .var_index(&e.var)
                        .ok_or_else(|| Error::UnknownVariable(e.var.clone()))?;
                    rows[e.row].push((j, e.coeff));
                }
                for r in rows.iter_mut() {
                    r.sort_by_key(|&(j, _)| j);
                }
                let names = match doc.names {
                    Some(names) => names,
                    None => (0..n_rows).map(|i| format!("z{i}")).collect(),
                };
                Projection { names, rows }
            }
            _ => {
                return Err(Error::InvalidSpec(
                    "exactly one of `explore` and `projection` is required".into(),
                ))
            }
        };
        let spec = Self {
            projection,
            epsilon: doc.epsilon,
            epsilon_abs: doc.epsilon_abs,
            tolerance: doc.tolerance,
            cost_cut: doc.cost_cut.unwrap_or_default(),
            import_rows: doc.import_rows.unwrap_or(true),
        };
        spec.validate(model)?;
        Ok(spec)
    }

    pub fn to_json_string(&self, model: &LinearProgram) -> Result<String> {
        let unit_names: Option<Vec<String>> = (0..self.dim())
            .map(|j| self.projection.unit_var(j).map(|v| model.variables[v].name.clone()))
            .collect();
        let doc = match unit_names {
            Some(names) => SpecDoc {
                explore: Some(names),
                ..SpecDoc::empty(self)
            },
            None => SpecDoc {
                projection: Some(
                    self.projection
                        .rows
                        .iter()
                        .enumerate()
                        .flat_map(|(row, r)| {
                            r.iter().map(move |&(j, coeff)| ProjectionEntry {
                                row,
                                var: model.variables[j].name.clone(),
                                coeff,
                            })
                        })
                        .collect(),
                ),
                names: Some(self.projection.names.clone()),
                ..SpecDoc::empty(self)
            },
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }
}

#[derive(Serialize, Deserialize)]
struct ProjectionEntry {
    row: usize,
    var: String,
    coeff: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    explore: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    projection: Option<Vec<ProjectionEntry>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    names: Option<Vec<String>>,
    epsilon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    epsilon_abs: Option<f64>,
    tolerance: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cost_cut: Option<CostCut>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    import_rows: Option<bool>,
}

impl SpecDoc {
    fn empty(spec: &ExplorationSpec) -> Self {
        Self {
            explore: None,
            projection: None,
            names: None,
            epsilon: spec.epsilon,
            epsilon_abs: spec.epsilon_abs,
            tolerance: spec.tolerance,
            cost_cut: Some(spec.cost_cut),
            import_rows: Some(spec.import_rows),
        }
    }
}

/// Interval propagation of the variable bounds through `S`.
///
/// Unbounded directions are returned as infinities when the cost cut can close them, and
/// rejected otherwise.
pub fn derive_z_bounds(model: &LinearProgram, spec: &ExplorationSpec) -> Result<(Vec<f64>, Vec<f64>)> {
    let n_z = spec.dim();
    let mut lower = vec![0.0; n_z];
    let mut upper = vec![0.0; n_z];
    for (j, row) in spec.projection.rows.iter().enumerate() {
        for &(v, a) in row {
            let var = &model.variables[v];
            let (lo, hi) = if a >= 0.0 {
                (a * var.lower, a * var.upper)
            } else {
                (a * var.upper, a * var.lower)
            };
            lower[j] += lo;
            upper[j] += hi;
        }
    }
    let cut = spec.cost_cut_enabled(model);
    for j in 0..n_z {
        if !(lower[j].is_finite() && upper[j].is_finite()) && !cut {
            return Err(Error::UnboundedDirection(spec.projection.names[j].clone()));
        }
    }
    Ok((lower, upper))
}

/// A model, its verified optimum and the budgeted near-optimal set projected onto `z`.
#[derive(Clone, Debug)]
pub struct ExplorationProblem {
    pub model: LinearProgram,
    pub spec: ExplorationSpec,
    pub v_star: f64,
    pub budget: f64,
    pub z_lower: Vec<f64>,
    pub z_upper: Vec<f64>,
    /// Witness of the optimum, when known.
    pub x_star: Option<Vec<f64>>,
}

/// Optimal value and a minimizer of `model`.
pub fn optimal_value(model: &LinearProgram, gw: &Gateway) -> Result<(f64, Vec<f64>)> {
    let sol = gw.solve_lp(model, None)?;
    match sol.status {
        LpStatus::Optimal => Ok((sol.objective, sol.primal)),
        LpStatus::Infeasible => Err(Error::Infeasible),
        LpStatus::Unbounded => Err(Error::Unbounded),
    }
}

/// Assembles the near-optimal problem for a model whose optimum is `v_star`.
pub fn build_exploration(
    model: LinearProgram,
    spec: ExplorationSpec,
    v_star: f64,
) -> Result<ExplorationProblem> {
    spec.validate(&model)?;
    let budget = if v_star > 0.0 {
        v_star * (1.0 + spec.epsilon)
    } else {
        match spec.epsilon_abs {
            Some(abs) => v_star + abs,
            None => return Err(Error::DegenerateBudget { v_star }),
        }
    };
    let (z_lower, z_upper) = derive_z_bounds(&model, &spec)?;
    Ok(ExplorationProblem {
        model,
        spec,
        v_star,
        budget,
        z_lower,
        z_upper,
        x_star: None,
    })
}

impl ExplorationProblem {
    /// Solves the model for its optimum, builds the problem and closes any infinite z-bound
    /// by optimizing that coordinate over the budgeted model.
    pub fn solve(model: LinearProgram, spec: ExplorationSpec, gw: &Gateway) -> Result<Self> {
        model.validate()?;
        let (v_star, x_star) = optimal_value(&model, gw)?;
        let mut problem = build_exploration(model, spec, v_star)?;
        problem.x_star = Some(x_star);
        problem.close_infinite_bounds(gw)?;
        Ok(problem)
    }

    pub fn n_z(&self) -> usize {
        self.spec.dim()
    }

    pub fn z_names(&self) -> &[String] {
        &self.spec.projection.names
    }

    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        self.spec.projection.apply(x)
    }

    pub fn z_star(&self) -> Option<Vec<f64>> {
        self.x_star.as_deref().map(|x| self.project(x))
    }

    /// Largest per-coordinate range of the z-box.
    pub fn z_range(&self) -> f64 {
        self.z_lower
            .iter()
            .zip(&self.z_upper)
            .map(|(l, u)| u - l)
            .fold(0.0, f64::max)
    }

    /// The model plus the budget row `cᵀx ≤ budget`.
    pub fn budgeted_program(&self) -> (Program, Embedding) {
        let mut program = Program::minimize();
        let emb = program.embed_model(&self.model);
        program.add_le(self.model.objective.clone(), self.budget);
        (program, emb)
    }

    /// Residual of `x` against the model rows and the budget, scaled as in
    /// [`LinearProgram::max_violation`].
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let budget = (self.model.cost(x) - self.budget) / (1.0 + self.budget.abs());
        self.model.max_violation(x).max(budget)
    }

    fn close_infinite_bounds(&mut self, gw: &Gateway) -> Result<()> {
        for j in 0..self.n_z() {
            for maximize in [false, true] {
                let current = if maximize { self.z_upper[j] } else { self.z_lower[j] };
                if current.is_finite() {
                    continue;
                }
                let (mut program, _) = self.budgeted_program();
                let sign = if maximize { -1.0 } else { 1.0 };
                for &(v, a) in &self.spec.projection.rows[j] {
                    program.cols[v].cost = sign * a;
                }
                let sol = gw.solve_program(&program, None)?;
                match sol.status {
                    LpStatus::Optimal => {
                        let value = sign * sol.objective;
                        if maximize {
                            self.z_upper[j] = value;
                        } else {
                            self.z_lower[j] = value;
                        }
                    }
                    LpStatus::Unbounded => return Err(Error::UnboundedRegion),
                    LpStatus::Infeasible => return Err(Error::Infeasible),
                }
            }
        }
        Ok(())
    }
}
