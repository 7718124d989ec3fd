//! Inner approximation (convex hull of verified points) and outer approximation (valid
//! halfspaces over a box) of the projected near-optimal set.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exploration::ExplorationProblem;
use crate::oracle::closest_near_optimal;
use crate::solver::{Gateway, LpStatus, Program, FEAS_TOL};

/// Two points closer than this (∞-norm) are the same point.
pub const DEDUP_TOL: f64 = 1e-8;
/// Tolerance of [`OuterApprox::contains`].
pub const OUTER_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PointOrigin {
    Optimum,
    Known,
    Mga { method: String, iteration: usize },
    Oracle { iteration: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct InnerPoint {
    pub z: Vec<f64>,
    pub origin: PointOrigin,
    /// Inside the hull of the points stored before it.
    pub redundant: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InnerApprox {
    pub names: Vec<String>,
    pub points: Vec<InnerPoint>,
}

/// Result of a hull membership / distance query.
#[derive(Clone, Debug)]
pub struct Membership {
    pub member: bool,
    /// ∞-norm distance from the query to the hull.
    pub distance: f64,
    /// Convex weights of the nearest hull point.
    pub lambda: Vec<f64>,
    pub nearest: Vec<f64>,
    /// Subgradient `w` of the distance at the query: `wᵀ(p − z) ≤ −distance` for every hull
    /// point `p`, so a nonzero `w` separates `z` from the hull.
    pub separator: Vec<f64>,
}

/// ∞-norm distance from `z` to the convex hull of `points`.
pub fn hull_distance(points: &[&[f64]], z: &[f64], gw: &Gateway) -> Result<Membership> {
    if points.is_empty() {
        return Err(Error::EmptyRegion);
    }
    let n = z.len();
    let mut p = Program::minimize();
    let lam: Vec<usize> = points.iter().map(|_| p.add_col(0.0, 1.0, 0.0)).collect();
    let s = p.add_col(0.0, f64::INFINITY, 1.0);
    let mut upper_rows = Vec::with_capacity(n);
    let mut lower_rows = Vec::with_capacity(n);
    for j in 0..n {
        let mut coeffs: Vec<(usize, f64)> = lam.iter().zip(points).map(|(&c, pt)| (c, pt[j])).collect();
        coeffs.push((s, -1.0));
        upper_rows.push(p.add_le(coeffs.clone(), z[j]));
        coeffs.last_mut().unwrap().1 = 1.0;
        lower_rows.push(p.add_ge(coeffs, z[j]));
    }
    p.add_eq(lam.iter().map(|&c| (c, 1.0)).collect(), 1.0);
    let sol = gw.solve_program(&p, None)?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::NumericalFailure(format!("hull distance LP {:?}", sol.status)));
    }
    let lambda: Vec<f64> = lam.iter().map(|&c| sol.primal[c]).collect();
    let nearest = (0..n)
        .map(|j| lambda.iter().zip(points).map(|(l, pt)| l * pt[j]).sum())
        .collect();
    let separator = (0..n)
        .map(|j| sol.row_duals[upper_rows[j]] + sol.row_duals[lower_rows[j]])
        .collect();
    let distance = sol.primal[s].max(0.0);
    Ok(Membership {
        member: false,
        distance,
        lambda,
        nearest,
        separator,
    })
}

fn inf_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

impl InnerApprox {
    pub fn new(names: Vec<String>) -> Self {
        Self {
            names,
            points: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn coords(&self) -> Vec<&[f64]> {
        self.points.iter().map(|p| p.z.as_slice()).collect()
    }

    /// The first `m` points, as stored after `m` insertions.
    pub fn prefix(&self, m: usize) -> Self {
        Self {
            names: self.names.clone(),
            points: self.points[..m.min(self.len())].to_vec(),
        }
    }

    /// Membership of `z` in the hull, within `tol` in ∞-norm.
    pub fn contains(&self, z: &[f64], tol: f64, gw: &Gateway) -> Result<Membership> {
        self.check_dim(z)?;
        let mut m = hull_distance(&self.coords(), z, gw)?;
        m.member = m.distance <= tol;
        Ok(m)
    }

    pub fn distance(&self, z: &[f64], gw: &Gateway) -> Result<f64> {
        Ok(self.contains(z, 0.0, gw)?.distance)
    }

    fn check_dim(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                got: z.len(),
            });
        }
        Ok(())
    }

    /// Stores `z` unless an equal point is already present. Returns whether it was stored.
    /// The caller is responsible for `z` being near-optimal.
    pub fn add_point(&mut self, z: Vec<f64>, origin: PointOrigin, gw: &Gateway) -> Result<bool> {
        self.check_dim(&z)?;
        if self.points.iter().any(|p| inf_dist(&p.z, &z) <= DEDUP_TOL) {
            return Ok(false);
        }
        let redundant = !self.is_empty() && self.contains(&z, 1e-9, gw)?.member;
        self.points.push(InnerPoint { z, origin, redundant });
        Ok(true)
    }

    /// Removes every point (other than the first) lying in the hull of the remaining ones.
    /// Returns how many were removed.
    pub fn prune(&mut self, gw: &Gateway) -> Result<usize> {
        let before = self.len();
        let mut i = 1;
        while i < self.points.len() {
            let others: Vec<&[f64]> = self
                .points
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != i)
                .map(|(_, p)| p.z.as_slice())
                .collect();
            if hull_distance(&others, &self.points[i].z, gw)?.distance <= 1e-9 {
                self.points.remove(i);
            } else {
                i += 1;
            }
        }
        Ok(before - self.len())
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(&self.names)?;
        for p in &self.points {
            w.write_record(p.z.iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads points written by [`write_csv`](Self::write_csv). No verification is done and
    /// every point is tagged [`PointOrigin::Known`].
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let names: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        let mut inner = Self::new(names);
        for rec in r.records() {
            let z = parse_floats(&rec?)?;
            inner.check_dim(&z)?;
            inner.points.push(InnerPoint {
                z,
                origin: PointOrigin::Known,
                redundant: false,
            });
        }
        Ok(inner)
    }
}

fn parse_floats(rec: &csv::StringRecord) -> Result<Vec<f64>> {
    rec.iter()
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::InvalidArgument(format!("bad number `{s}`: {e}")))
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Bound,
    CostCut,
    DualCut,
    ValueCut,
    ModelRow,
    /// Supporting hyperplane from a weighted-objective solve.
    Support,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Bound => "bound",
            Provenance::CostCut => "cost-cut",
            Provenance::DualCut => "dual-cut",
            Provenance::ValueCut => "value-cut",
            Provenance::ModelRow => "model-row",
            Provenance::Support => "support",
        })
    }
}

impl FromStr for Provenance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "bound" => Provenance::Bound,
            "cost-cut" => Provenance::CostCut,
            "dual-cut" => Provenance::DualCut,
            "value-cut" => Provenance::ValueCut,
            "model-row" => Provenance::ModelRow,
            "support" => Provenance::Support,
            other => return Err(Error::InvalidArgument(format!("unknown provenance `{other}`"))),
        })
    }
}

/// `normalᵀz ≤ offset` with `‖normal‖_∞ = 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Halfspace {
    pub normal: Vec<f64>,
    pub offset: f64,
    pub provenance: Provenance,
}

impl Halfspace {
    pub fn new(normal: Vec<f64>, offset: f64, provenance: Provenance) -> Result<Self> {
        let scale = normal.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if !(scale > 1e-12) || !offset.is_finite() {
            return Err(Error::ZeroNormal);
        }
        Ok(Self {
            normal: normal.iter().map(|v| v / scale).collect(),
            offset: offset / scale,
            provenance,
        })
    }

    /// `normalᵀz − offset`; positive means violated.
    pub fn excess(&self, z: &[f64]) -> f64 {
        self.normal.iter().zip(z).map(|(a, b)| a * b).sum::<f64>() - self.offset
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OuterApprox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Cuts in insertion order; the box is kept separately.
    pub halfspaces: Vec<Halfspace>,
}

impl OuterApprox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::Dimension {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        if lower.iter().chain(&upper).any(|v| !v.is_finite()) {
            return Err(Error::UnboundedRegion);
        }
        if lower.iter().zip(&upper).any(|(l, u)| l > u) {
            return Err(Error::EmptyRegion);
        }
        Ok(Self {
            lower,
            upper,
            halfspaces: Vec::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    /// The region after its first `k` cuts.
    pub fn prefix(&self, k: usize) -> Self {
        Self {
            lower: self.lower.clone(),
            upper: self.upper.clone(),
            halfspaces: self.halfspaces[..k.min(self.halfspaces.len())].to_vec(),
        }
    }

    /// ∞-norm diameter of the box.
    pub fn diameter(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| u - l)
            .fold(0.0, f64::max)
    }

    fn box_max(&self, normal: &[f64]) -> f64 {
        normal
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(a, (l, u))| (a * l).max(a * u))
            .sum()
    }

    /// Appends `h` unless the box or an existing parallel cut already implies it. Returns
    /// whether it was appended. A cut that removes a stored inner point is rejected.
    pub fn add_halfspace(&mut self, h: Halfspace, inner: &InnerApprox) -> Result<bool> {
        if h.normal.len() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                got: h.normal.len(),
            });
        }
        let tol = FEAS_TOL * (1.0 + h.offset.abs());
        for (index, p) in inner.points.iter().enumerate() {
            let violation = h.excess(&p.z);
            if violation > tol {
                return Err(Error::InvalidCut { index, violation });
            }
        }
        if self.box_max(&h.normal) <= h.offset + 1e-12 {
            return Ok(false);
        }
        let dominated = self.halfspaces.iter().any(|old| {
            old.offset <= h.offset + 1e-12 && inf_dist(&old.normal, &h.normal) <= 1e-9
        });
        if dominated {
            return Ok(false);
        }
        self.halfspaces.push(h);
        Ok(true)
    }

    pub fn contains(&self, z: &[f64]) -> bool {
        z.len() == self.dim()
            && z
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| *v >= l - OUTER_TOL && *v <= u + OUTER_TOL)
            && self.halfspaces.iter().all(|h| h.excess(z) <= OUTER_TOL)
    }

    /// Box faces as halfspaces followed by the cuts.
    pub fn all_halfspaces(&self) -> Vec<Halfspace> {
        let n = self.dim();
        let mut out = Vec::with_capacity(2 * n + self.halfspaces.len());
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            out.push(Halfspace {
                normal: e.clone(),
                offset: self.upper[j],
                provenance: Provenance::Bound,
            });
            e[j] = -1.0;
            out.push(Halfspace {
                normal: e,
                offset: -self.lower[j],
                provenance: Provenance::Bound,
            });
        }
        out.extend(self.halfspaces.iter().cloned());
        out
    }

    pub fn write_csv<W: Write>(&self, names: &[String], writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = names.to_vec();
        header.push("offset".into());
        header.push("provenance".into());
        w.write_record(&header)?;
        for h in self.all_halfspaces() {
            let mut rec: Vec<String> = h.normal.iter().map(|v| v.to_string()).collect();
            rec.push(h.offset.to_string());
            rec.push(h.provenance.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a file written by [`write_csv`](Self::write_csv); unit-normal `bound` rows
    /// rebuild the box. Returns the z names alongside the region.
    pub fn read_csv<R: Read>(reader: R) -> Result<(Vec<String>, Self)> {
        let mut r = csv::Reader::from_reader(reader);
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        if header.len() < 3 {
            return Err(Error::InvalidArgument("halfspace CSV needs z columns, offset, provenance".into()));
        }
        let n = header.len() - 2;
        let mut lower = vec![f64::NEG_INFINITY; n];
        let mut upper = vec![f64::INFINITY; n];
        let mut cuts = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let provenance: Provenance = rec.get(n + 1).unwrap_or("").parse()?;
            let values = parse_floats(&rec.iter().take(n + 1).collect())?;
            let (normal, offset) = (values[..n].to_vec(), values[n]);
            let unit = normal.iter().filter(|v| **v != 0.0).count() == 1;
            if provenance == Provenance::Bound && unit {
                let j = normal.iter().position(|v| *v != 0.0).unwrap();
                if normal[j] > 0.0 {
                    upper[j] = offset / normal[j];
                } else {
                    lower[j] = offset / normal[j];
                }
            } else {
                cuts.push(Halfspace::new(normal, offset, provenance)?);
            }
        }
        let mut outer = Self::new(lower, upper)?;
        outer.halfspaces = cuts;
        Ok((header[..n].to_vec(), outer))
    }
}

/// Step 1: verified known points (the optimum first) and the initial outer region: box, cost
/// cut when enabled, and model rows expressible in z when requested.
pub fn init_regions(
    problem: &ExplorationProblem,
    known_points: &[Vec<f64>],
    gw: &Gateway,
) -> Result<(InnerApprox, OuterApprox)> {
    let mut inner = InnerApprox::new(problem.z_names().to_vec());
    if let Some(z_star) = problem.z_star() {
        inner.add_point(z_star, PointOrigin::Optimum, gw)?;
    }
    for z in known_points {
        if z.len() != problem.n_z() {
            return Err(Error::Dimension {
                expected: problem.n_z(),
                got: z.len(),
            });
        }
        let closest = closest_near_optimal(problem, z, gw)?;
        if closest.delta > FEAS_TOL {
            return Err(Error::NotNearOptimal {
                distance: closest.delta,
            });
        }
        inner.add_point(z.clone(), PointOrigin::Known, gw)?;
    }
    if inner.is_empty() {
        return Err(Error::EmptyRegion);
    }

    let mut outer = OuterApprox::new(problem.z_lower.clone(), problem.z_upper.clone())?;
    let model = &problem.model;
    let spec = &problem.spec;
    if spec.cost_cut_enabled(model) {
        let normal = spec.cost_cut_normal(model);
        if normal.iter().any(|v| v.abs() > 1e-12) {
            outer.add_halfspace(Halfspace::new(normal, problem.budget, Provenance::CostCut)?, &inner)?;
        }
    }
    if spec.import_rows {
        let position = |var: usize| (0..spec.dim()).find(|&j| spec.projection.unit_var(j) == Some(var));
        let to_z = |coeffs: &[(usize, f64)]| -> Option<Vec<f64>> {
            let mut normal = vec![0.0; spec.dim()];
            for &(v, a) in coeffs {
                normal[position(v)?] += a;
            }
            Some(normal)
        };
        for row in &model.inequalities {
            if let Some(normal) = to_z(&row.coeffs) {
                outer.add_halfspace(Halfspace::new(normal, row.rhs, Provenance::ModelRow)?, &inner)?;
            }
        }
        for row in &model.equalities {
            if let Some(normal) = to_z(&row.coeffs) {
                let negated: Vec<f64> = normal.iter().map(|v| -v).collect();
                outer.add_halfspace(Halfspace::new(normal, row.rhs, Provenance::ModelRow)?, &inner)?;
                outer.add_halfspace(Halfspace::new(negated, -row.rhs, Provenance::ModelRow)?, &inner)?;
            }
        }
    }
    Ok((inner, outer))
}
