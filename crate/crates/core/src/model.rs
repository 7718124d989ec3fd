//! Linear programs in the normalized form `min cᵀx  s.t.  Ax ≤ b, Fx = d, l ≤ x ≤ u`.
//!
//! Models are read from and written to a small JSON document:
//!
//! ```json
//! {
//!   "name": "tri",
//!   "vars": [{"name": "x1", "lb": 0, "ub": 1}, {"name": "x2", "lb": 0, "ub": null}],
//!   "objective": {"x1": 1, "x2": 1},
//!   "constraints": [{"name": "c", "coeffs": {"x1": 1, "x2": 1}, "sense": ">=", "rhs": 1}]
//! }
//! ```
//!
//! A `null` (or missing) bound is infinite. `">="` rows are negated into `"<="` rows while
//! parsing, so everything downstream sees a single inequality sense.

use std::collections::HashMap;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coefficients with magnitude below this are pruned.
pub const ZERO_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct Variable {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
}

/// A sparse row `coeffsᵀx (≤ | =) rhs`. Coefficients are sorted by column index.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseRow {
    pub name: String,
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
}

impl SparseRow {
    pub fn dot(&self, x: &[f64]) -> f64 {
        sparse_dot(&self.coeffs, x)
    }
}

pub(crate) fn sparse_dot(coeffs: &[(usize, f64)], x: &[f64]) -> f64 {
    coeffs.iter().map(|&(j, a)| a * x[j]).sum()
}

/// Sorts by index, merges repeated indices and drops near-zero entries.
fn normalize_coeffs(coeffs: &mut Vec<(usize, f64)>) {
    coeffs.sort_by_key(|&(j, _)| j);
    let mut merged: Vec<(usize, f64)> = Vec::with_capacity(coeffs.len());
    for &(j, a) in coeffs.iter() {
        match merged.last_mut() {
            Some((k, b)) if *k == j => *b += a,
            _ => merged.push((j, a)),
        }
    }
    merged.retain(|&(_, a)| a.abs() >= ZERO_TOL);
    *coeffs = merged;
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct LinearProgram {
    pub name: String,
    pub variables: Vec<Variable>,
    pub objective: Vec<(usize, f64)>,
    pub inequalities: Vec<SparseRow>,
    pub equalities: Vec<SparseRow>,
}

impl LinearProgram {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            ..Self::default()
        }
    }

    pub fn add_variable(&mut self, name: impl Into<String>, lower: f64, upper: f64) -> usize {
        self.variables.push(Variable {
            name: name.into(),
            lower,
            upper,
        });
        self.variables.len() - 1
    }

    pub fn set_cost(&mut self, var: usize, cost: f64) {
        self.objective.retain(|&(j, _)| j != var);
        self.objective.push((var, cost));
        normalize_coeffs(&mut self.objective);
    }

    /// Adds `coeffsᵀx ≤ rhs`.
    pub fn add_le(&mut self, name: impl Into<String>, coeffs: &[(usize, f64)], rhs: f64) {
        let mut coeffs = coeffs.to_vec();
        normalize_coeffs(&mut coeffs);
        self.inequalities.push(SparseRow {
            name: name.into(),
            coeffs,
            rhs,
        });
    }

    /// Adds `coeffsᵀx ≥ rhs`, stored negated as a `≤` row.
    pub fn add_ge(&mut self, name: impl Into<String>, coeffs: &[(usize, f64)], rhs: f64) {
        let negated: Vec<_> = coeffs.iter().map(|&(j, a)| (j, -a)).collect();
        self.add_le(name, &negated, -rhs);
    }

    pub fn add_eq(&mut self, name: impl Into<String>, coeffs: &[(usize, f64)], rhs: f64) {
        let mut coeffs = coeffs.to_vec();
        normalize_coeffs(&mut coeffs);
        self.equalities.push(SparseRow {
            name: name.into(),
            coeffs,
            rhs,
        });
    }

    pub fn n_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v.name == name)
    }

    pub fn cost(&self, x: &[f64]) -> f64 {
        sparse_dot(&self.objective, x)
    }

    /// Dense objective vector.
    pub fn cost_vector(&self) -> Vec<f64> {
        let mut c = vec![0.0; self.n_vars()];
        for &(j, a) in &self.objective {
            c[j] = a;
        }
        c
    }

    /// Largest violation of any bound or row at `x`, each scaled by `1 + |rhs|`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (v, &xj) in self.variables.iter().zip(x) {
            worst = worst.max((v.lower - xj) / (1.0 + v.lower.abs()));
            worst = worst.max((xj - v.upper) / (1.0 + v.upper.abs()));
        }
        for row in &self.inequalities {
            worst = worst.max((row.dot(x) - row.rhs) / (1.0 + row.rhs.abs()));
        }
        for row in &self.equalities {
            worst = worst.max((row.dot(x) - row.rhs).abs() / (1.0 + row.rhs.abs()));
        }
        worst
    }

    /// Re-sorts and prunes every coefficient list. Idempotent.
    pub fn normalize(&mut self) {
        normalize_coeffs(&mut self.objective);
        for row in self.inequalities.iter_mut().chain(self.equalities.iter_mut()) {
            normalize_coeffs(&mut row.coeffs);
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashMap::new();
        for (j, v) in self.variables.iter().enumerate() {
            if seen.insert(v.name.as_str(), j).is_some() {
                return Err(Error::DuplicateVariable(v.name.clone()));
            }
            if v.lower.is_nan() || v.upper.is_nan() || v.lower > v.upper {
                return Err(Error::InvertedBounds {
                    name: v.name.clone(),
                    lower: v.lower,
                    upper: v.upper,
                });
            }
        }
        let n = self.n_vars();
        let check_refs = |coeffs: &[(usize, f64)]| -> Result<()> {
            match coeffs.iter().find(|&&(j, _)| j >= n) {
                Some(&(j, _)) => Err(Error::UnknownVariable(format!("#{j}"))),
                None => Ok(()),
            }
        };
        check_refs(&self.objective)?;
        for row in self.inequalities.iter().chain(&self.equalities) {
            check_refs(&row.coeffs)?;
            if row.coeffs.is_empty() {
                return Err(Error::EmptyRow(row.name.clone()));
            }
            if !row.rhs.is_finite() {
                return Err(Error::InvalidModel(format!("row `{}` has a non-finite rhs", row.name)));
            }
        }
        Ok(())
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let doc: ModelDoc = serde_json::from_str(text).map_err(|e| Error::Syntax {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        doc.into_model()
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModelDoc::from_model(self))?)
    }
}

/// Parses and validates a model document.
pub fn parse_model(text: &str) -> Result<LinearProgram> {
    LinearProgram::from_json_str(text)
}

#[derive(Serialize, Deserialize)]
struct VarDoc {
    name: String,
    #[serde(default)]
    lb: Option<f64>,
    #[serde(default)]
    ub: Option<f64>,
}

#[derive(Serialize, Deserialize, Clone, Copy)]
enum SenseDoc {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "=", alias = "==")]
    Eq,
    #[serde(rename = ">=")]
    Ge,
}

#[derive(Serialize, Deserialize)]
struct ConstraintDoc {
    #[serde(default)]
    name: Option<String>,
    coeffs: IndexMap<String, f64>,
    sense: SenseDoc,
    rhs: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDoc {
    name: String,
    vars: Vec<VarDoc>,
    #[serde(default)]
    objective: IndexMap<String, f64>,
    #[serde(default)]
    constraints: Vec<ConstraintDoc>,
}

impl ModelDoc {
    fn into_model(self) -> Result<LinearProgram> {
        let mut lp = LinearProgram::new(self.name);
        let mut index = HashMap::new();
        for v in self.vars {
            if index.contains_key(&v.name) {
                return Err(Error::DuplicateVariable(v.name));
            }
            let j = lp.add_variable(
                v.name.clone(),
                v.lb.unwrap_or(f64::NEG_INFINITY),
                v.ub.unwrap_or(f64::INFINITY),
            );
            index.insert(v.name, j);
        }
        let resolve = |coeffs: IndexMap<String, f64>| -> Result<Vec<(usize, f64)>> {
            coeffs
                .into_iter()
                .map(|(name, a)| match index.get(&name) {
                    Some(&j) => Ok((j, a)),
                    None => Err(Error::UnknownVariable(name)),
                })
                .collect()
        };
        lp.objective = resolve(self.objective)?;
        normalize_coeffs(&mut lp.objective);
        for (i, c) in self.constraints.into_iter().enumerate() {
            let name = c.name.unwrap_or_else(|| format!("r{i}"));
            let coeffs = resolve(c.coeffs)?;
            match c.sense {
                SenseDoc::Le => lp.add_le(name, &coeffs, c.rhs),
                SenseDoc::Ge => lp.add_ge(name, &coeffs, c.rhs),
                SenseDoc::Eq => lp.add_eq(name, &coeffs, c.rhs),
            }
        }
        lp.validate()?;
        Ok(lp)
    }

    fn from_model(lp: &LinearProgram) -> Self {
        let finite = |v: f64| v.is_finite().then_some(v);
        let named = |coeffs: &[(usize, f64)]| -> IndexMap<String, f64> {
            coeffs
                .iter()
                .map(|&(j, a)| (lp.variables[j].name.clone(), a))
                .collect()
        };
        let rows = |rows: &[SparseRow], sense: SenseDoc| -> Vec<ConstraintDoc> {
            rows.iter()
                .map(|r| ConstraintDoc {
                    name: Some(r.name.clone()),
                    coeffs: named(&r.coeffs),
                    sense,
                    rhs: r.rhs,
                })
                .collect()
        };
        let mut constraints = rows(&lp.inequalities, SenseDoc::Le);
        constraints.extend(rows(&lp.equalities, SenseDoc::Eq));
        ModelDoc {
            name: lp.name.clone(),
            vars: lp
                .variables
                .iter()
                .map(|v| VarDoc {
                    name: v.name.clone(),
                    lb: finite(v.lower),
                    ub: finite(v.upper),
                })
                .collect(),
            objective: named(&lp.objective),
            constraints,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toy::generate_toy_model;
    use proptest::prelude::*;

    const TWO_VARS: &str = r#"{
        "name": "small",
        "vars": [{"name": "x1", "lb": 0, "ub": 1}, {"name": "x2", "lb": 0, "ub": null}],
        "objective": {"x1": 1, "x2": 1},
        "constraints": [{"name": "c", "coeffs": {"x1": 1, "x2": 1}, "sense": ">=", "rhs": 1}]
    }"#;

    #[test]
    fn parses_counts_and_flips_ge() {
        let lp = parse_model(TWO_VARS).unwrap();
        assert_eq!(lp.n_vars(), 2);
        assert_eq!(lp.inequalities.len(), 1);
        assert!(lp.equalities.is_empty());
        assert_eq!(lp.inequalities[0].coeffs, vec![(0, -1.0), (1, -1.0)]);
        assert_eq!(lp.inequalities[0].rhs, -1.0);
        assert_eq!(lp.variables[1].upper, f64::INFINITY);
    }

    #[test]
    fn unknown_variable_is_reported() {
        let text = TWO_VARS.replace(r#""coeffs": {"x1": 1, "x2": 1}"#, r#""coeffs": {"x1": 1, "x9": 1}"#);
        assert!(matches!(parse_model(&text), Err(Error::UnknownVariable(v)) if v == "x9"));
    }

    #[test]
    fn duplicate_and_empty_rows_are_rejected() {
        let dup = TWO_VARS.replace(r#"{"name": "x2""#, r#"{"name": "x1""#);
        assert!(matches!(parse_model(&dup), Err(Error::DuplicateVariable(_))));
        let empty = TWO_VARS.replace(r#""coeffs": {"x1": 1, "x2": 1}"#, r#""coeffs": {}"#);
        assert!(matches!(parse_model(&empty), Err(Error::EmptyRow(_))));
    }

    #[test]
    fn syntax_errors_carry_position() {
        match parse_model("{\n  \"name\": \"a\",\n  \"vars\": [,]\n}") {
            Err(Error::Syntax { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn decimals_survive_round_trip() {
        let text = TWO_VARS.replace(r#""rhs": 1"#, r#""rhs": 0.1234567890123"#);
        let lp = parse_model(&text).unwrap();
        assert_eq!(lp.inequalities[0].rhs, -0.1234567890123);
        assert_eq!(parse_model(&lp.to_json_string().unwrap()).unwrap(), lp);
    }

    proptest! {
        #[test]
        fn toy_models_round_trip(seed in 0u64..500, n_tech in 2usize..6, n_periods in 1usize..5) {
            let lp = generate_toy_model(seed, n_tech, n_periods).unwrap();
            let back = parse_model(&lp.to_json_string().unwrap()).unwrap();
            prop_assert_eq!(back, lp);
        }

        #[test]
        fn normalize_is_idempotent(entries in proptest::collection::vec((0usize..5, -3.0f64..3.0), 0..12)) {
            let mut once = entries.clone();
            normalize_coeffs(&mut once);
            let mut twice = once.clone();
            normalize_coeffs(&mut twice);
            prop_assert_eq!(&once, &twice);
            prop_assert!(once.windows(2).all(|w| w[0].0 < w[1].0));
        }
    }
}
