//! Independent oracles for integration tests. Everything here talks to HiGHS directly and
//! re-derives geometry from scratch instead of going through the library.

#![allow(dead_code)]

use std::io::Write;

use highs::{HighsModelStatus, RowProblem, Sense};
use nearopt::{ExplorationProblem, LinearProgram, OuterApprox};

/// `(lower, upper, coeffs)` over column indices.
pub type Row = (f64, f64, Vec<(usize, f64)>);

/// Solves a small LP; `None` when infeasible.
pub fn solve(costs: &[f64], bounds: &[(f64, f64)], rows: &[Row], maximize: bool) -> Option<(f64, Vec<f64>)> {
    let mut pb = RowProblem::default();
    let cols: Vec<_> = costs
        .iter()
        .zip(bounds)
        .map(|(&c, &(l, u))| pb.add_column(c, l..=u))
        .collect();
    for (lo, up, coeffs) in rows {
        pb.add_row(*lo..=*up, coeffs.iter().map(|&(j, a)| (cols[j], a)).collect::<Vec<_>>());
    }
    let mut model = pb.optimise(if maximize { Sense::Maximise } else { Sense::Minimise });
    model.make_quiet();
    model.set_option("threads", 1);
    let solved = model.solve();
    match solved.status() {
        HighsModelStatus::Optimal => {
            let x = solved.get_solution().columns().to_vec();
            let obj = costs.iter().zip(&x).map(|(c, v)| c * v).sum();
            Some((obj, x))
        }
        HighsModelStatus::Infeasible => None,
        other => panic!("oracle LP ended with {other:?}"),
    }
}

fn model_rows(lp: &LinearProgram) -> Vec<Row> {
    let mut rows = Vec::new();
    for r in &lp.inequalities {
        rows.push((f64::NEG_INFINITY, r.rhs, r.coeffs.clone()));
    }
    for r in &lp.equalities {
        rows.push((r.rhs, r.rhs, r.coeffs.clone()));
    }
    rows
}

fn bounds(lp: &LinearProgram) -> Vec<(f64, f64)> {
    lp.variables.iter().map(|v| (v.lower, v.upper)).collect()
}

/// Minimum cost with the exploratory coordinates pinned to `z`; `None` if unreachable.
pub fn value_function(problem: &ExplorationProblem, z: &[f64]) -> Option<f64> {
    let lp = &problem.model;
    let mut costs = vec![0.0; lp.n_vars()];
    for &(j, c) in &lp.objective {
        costs[j] += c;
    }
    let mut rows = model_rows(lp);
    for (row, &zi) in problem.spec.projection.rows.iter().zip(z) {
        rows.push((zi, zi, row.clone()));
    }
    solve(&costs, &bounds(lp), &rows, false).map(|(v, _)| v)
}

/// Maximizer of `wᵀz` over the near-optimal set, projected.
pub fn support_point(problem: &ExplorationProblem, w: &[f64]) -> Vec<f64> {
    let lp = &problem.model;
    let mut costs = vec![0.0; lp.n_vars()];
    for (row, &wi) in problem.spec.projection.rows.iter().zip(w) {
        for &(j, a) in row {
            costs[j] += wi * a;
        }
    }
    let mut rows = model_rows(lp);
    rows.push((f64::NEG_INFINITY, problem.budget, lp.objective.clone()));
    let (_, x) = solve(&costs, &bounds(lp), &rows, true).expect("near-optimal set is nonempty");
    project(problem, &x)
}

pub fn project(problem: &ExplorationProblem, x: &[f64]) -> Vec<f64> {
    problem
        .spec
        .projection
        .rows
        .iter()
        .map(|row| row.iter().map(|&(j, a)| a * x[j]).sum())
        .collect()
}

/// Near-optimal points from deterministic pseudo-random directions.
pub fn near_optimal_samples(problem: &ExplorationProblem, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let n = problem.n_z();
    let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    let mut next = || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    };
    (0..count)
        .map(|_| {
            let w: Vec<f64> = (0..n).map(|_| next()).collect();
            support_point(problem, &w)
        })
        .collect()
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Counter-clockwise hull (monotone chain); collinear points dropped.
pub fn hull_2d(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup_by(|a, b| (a[0] - b[0]).abs() < 1e-9 && (a[1] - b[1]).abs() < 1e-9);
    if pts.len() < 3 {
        return pts;
    }
    let mut lower: Vec<[f64; 2]> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 1e-12 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<[f64; 2]> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 1e-12 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Vertices of the projected near-optimal set in 2D, found by pushing every hull edge outwards
/// with a support LP until no edge moves.
pub fn true_vertices_2d(problem: &ExplorationProblem) -> Vec<[f64; 2]> {
    assert_eq!(problem.n_z(), 2);
    let as2 = |z: Vec<f64>| [z[0], z[1]];
    let mut pts: Vec<[f64; 2]> = [[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]]
        .iter()
        .map(|w| as2(support_point(problem, w)))
        .collect();
    let scale = problem.z_range().max(1.0);
    loop {
        let hull = hull_2d(&pts);
        let mut grew = false;
        for i in 0..hull.len() {
            let (a, b) = (hull[i], hull[(i + 1) % hull.len()]);
            let normal = [b[1] - a[1], a[0] - b[0]];
            let len = (normal[0] * normal[0] + normal[1] * normal[1]).sqrt();
            if len < 1e-12 {
                continue;
            }
            let w = [normal[0] / len, normal[1] / len];
            let p = as2(support_point(problem, &w));
            if w[0] * (p[0] - a[0]) + w[1] * (p[1] - a[1]) > 1e-7 * scale {
                pts.push(p);
                grew = true;
            }
        }
        if !grew {
            return hull;
        }
    }
}

/// Vertices of a 2D halfspace intersection by pairwise Cramer solves.
pub fn polygon_vertices(outer: &OuterApprox) -> Vec<[f64; 2]> {
    let mut rows: Vec<([f64; 2], f64)> = Vec::new();
    for j in 0..2 {
        let mut e = [0.0; 2];
        e[j] = 1.0;
        rows.push((e, outer.upper[j]));
        e[j] = -1.0;
        rows.push((e, -outer.lower[j]));
    }
    for h in &outer.halfspaces {
        rows.push(([h.normal[0], h.normal[1]], h.offset));
    }
    let mut out = Vec::new();
    for i in 0..rows.len() {
        for k in i + 1..rows.len() {
            let ((a, p), (b, q)) = (rows[i], rows[k]);
            let det = a[0] * b[1] - a[1] * b[0];
            if det.abs() < 1e-12 {
                continue;
            }
            let z = [(p * b[1] - a[1] * q) / det, (a[0] * q - p * b[0]) / det];
            if rows.iter().all(|(n, o)| n[0] * z[0] + n[1] * z[1] <= o + 1e-9 * (1.0 + o.abs())) {
                out.push(z);
            }
        }
    }
    hull_2d(&out)
}

/// ∞-distance from `z` to the hull of `points`: `min s s.t. |Pᵀλ − z| ≤ s, Σλ = 1`.
pub fn hull_distance(points: &[Vec<f64>], z: &[f64]) -> f64 {
    let m = points.len();
    let n = z.len();
    let mut costs = vec![0.0; m];
    costs.push(1.0);
    let mut bnds = vec![(0.0, f64::INFINITY); m];
    bnds.push((0.0, f64::INFINITY));
    let mut rows = Vec::new();
    for j in 0..n {
        let base: Vec<(usize, f64)> = (0..m).map(|i| (i, points[i][j])).collect();
        let mut up = base.clone();
        up.push((m, -1.0));
        rows.push((f64::NEG_INFINITY, z[j], up));
        let mut lo = base;
        lo.push((m, 1.0));
        rows.push((z[j], f64::INFINITY, lo));
    }
    rows.push((1.0, 1.0, (0..m).map(|i| (i, 1.0)).collect()));
    solve(&costs, &bnds, &rows, false).expect("hull LP feasible").0
}

/// Max over outer vertices of the distance to the inner hull.
pub fn brute_force_d_io(outer: &OuterApprox, inner_points: &[Vec<f64>]) -> f64 {
    polygon_vertices(outer)
        .iter()
        .map(|v| hull_distance(inner_points, v))
        .fold(0.0, f64::max)
}

/// Best `min_i ‖z − c_i‖₁` over grid points of the outer region.
pub fn grid_max_min_l1(outer: &OuterApprox, cloud: &[Vec<f64>], steps: usize) -> (f64, Vec<f64>) {
    let mut best = (f64::NEG_INFINITY, vec![]);
    for a in 0..=steps {
        for b in 0..=steps {
            let z = vec![
                outer.lower[0] + (outer.upper[0] - outer.lower[0]) * a as f64 / steps as f64,
                outer.lower[1] + (outer.upper[1] - outer.lower[1]) * b as f64 / steps as f64,
            ];
            if !outer.halfspaces.iter().all(|h| h.excess(&z) <= 1e-12) {
                continue;
            }
            let d = cloud
                .iter()
                .map(|c| c.iter().zip(&z).map(|(x, y)| (x - y).abs()).sum::<f64>())
                .fold(f64::INFINITY, f64::min);
            if d > best.0 {
                best = (d, z);
            }
        }
    }
    best
}

/// Prints one verdict line and fails the test on FAIL. The line goes straight to the stderr
/// handle so the test harness does not capture it.
pub fn verdict(criterion: u32, title: &str, pass: bool, detail: &str) {
    let line = format!("{} criterion {criterion}: {title} ({detail})", if pass { "PASS" } else { "FAIL" });
    let _ = writeln!(std::io::stderr(), "{line}");
    assert!(pass, "criterion {criterion} failed: {title} ({detail})");
}
