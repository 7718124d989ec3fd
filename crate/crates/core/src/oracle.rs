//! The ORACLE loop: find the point of the outer region furthest from the inner hull, project
//! it onto the near-optimal set, grow the inner hull and cut the outer region.

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exploration::ExplorationProblem;
use crate::regions::{hull_distance, init_regions, Halfspace, InnerApprox, OuterApprox, PointOrigin, Provenance};
use crate::solver::{Gateway, LpStatus, MilpOptions, MilpStatus, Program};
use crate::trace::{Clock, CutRecord, ExplorationResult, IterationRecord};

pub use crate::exploration::optimal_value;

/// A dual cut is only generated when the trial is further than this from the near-optimal set.
pub const STRICT_CUT_TOL: f64 = 1e-7;
/// Default bound on the lower-level duals in the max-min MILP.
pub const DEFAULT_DUAL_BIG_M: f64 = 1e3;

/// Projection of a trial point onto the near-optimal set.
#[derive(Clone, Debug)]
pub struct FeasibleResult {
    pub z_feasible: Vec<f64>,
    /// ‖z_trial − z_feasible‖_∞.
    pub delta: f64,
    /// Gradient of the distance with respect to the trial point.
    pub mu: Vec<f64>,
    pub x_full: Vec<f64>,
}

/// Closest near-optimal point to `z_trial` in ∞-norm.
pub fn closest_near_optimal(problem: &ExplorationProblem, z_trial: &[f64], gw: &Gateway) -> Result<FeasibleResult> {
    let (mut p, emb) = problem.budgeted_program();
    let s = p.add_col(0.0, f64::INFINITY, 1.0);
    let mut above = Vec::with_capacity(z_trial.len());
    let mut below = Vec::with_capacity(z_trial.len());
    for (row, &z) in problem.spec.projection.rows.iter().zip(z_trial) {
        let mut coeffs: Vec<(usize, f64)> = row.iter().map(|&(j, a)| (emb.col(j), a)).collect();
        coeffs.push((s, -1.0));
        above.push(p.add_le(coeffs.clone(), z));
        coeffs.last_mut().unwrap().1 = 1.0;
        below.push(p.add_ge(coeffs, z));
    }
    let sol = gw.solve_program(&p, None)?;
    match sol.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => return Err(Error::Infeasible),
        LpStatus::Unbounded => return Err(Error::NumericalFailure("closest-point LP unbounded".into())),
    }
    let x_full = emb.x(&sol.primal).to_vec();
    let z_feasible = problem.project(&x_full);
    let delta = z_trial
        .iter()
        .zip(&z_feasible)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let mu = above
        .iter()
        .zip(&below)
        .map(|(&a, &b)| sol.row_duals[a] + sol.row_duals[b])
        .collect();
    Ok(FeasibleResult {
        z_feasible,
        delta,
        mu,
        x_full,
    })
}

/// `μᵀz ≤ μᵀz_f`, or `None` when the trial is (numerically) feasible or the dual degenerate.
pub fn separating_cut(result: &FeasibleResult) -> Option<Halfspace> {
    if result.delta <= STRICT_CUT_TOL {
        return None;
    }
    let offset: f64 = result.mu.iter().zip(&result.z_feasible).map(|(m, z)| m * z).sum();
    Halfspace::new(result.mu.clone(), offset, Provenance::DualCut).ok()
}

#[derive(Clone, Debug)]
pub struct ValueCut {
    pub halfspace: Option<Halfspace>,
    /// Minimum cost with `Sx = z_f`; `None` when that is infeasible.
    pub v_f: Option<f64>,
    /// Sensitivity of that cost to `z_f`.
    pub slope: Vec<f64>,
}

/// Linearization of the cost-to-reach-`z` function at `z_f`, turned into
/// `v_f + slopeᵀ(z − z_f) ≤ budget`.
pub fn value_function_cut(
    problem: &ExplorationProblem,
    z_f: &[f64],
    warm_start: Option<&[f64]>,
    gw: &Gateway,
) -> Result<ValueCut> {
    let mut p = Program::minimize();
    let emb = p.embed_model(&problem.model);
    p.add_model_cost(&emb, &problem.model.objective, 1.0);
    let fix: Vec<usize> = problem
        .spec
        .projection
        .rows
        .iter()
        .zip(z_f)
        .map(|(row, &z)| p.add_eq(row.iter().map(|&(j, a)| (emb.col(j), a)).collect(), z))
        .collect();
    let sol = gw.solve_program(&p, warm_start)?;
    match sol.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => {
            return Ok(ValueCut {
                halfspace: None,
                v_f: None,
                slope: vec![0.0; z_f.len()],
            })
        }
        LpStatus::Unbounded => return Err(Error::Unbounded),
    }
    let v_f = sol.objective;
    let slope: Vec<f64> = fix.iter().map(|&r| sol.row_duals[r]).collect();
    let anchor: f64 = slope.iter().zip(z_f).map(|(g, z)| g * z).sum();
    let halfspace = Halfspace::new(slope.clone(), problem.budget - v_f + anchor, Provenance::ValueCut).ok();
    Ok(ValueCut {
        halfspace,
        v_f: Some(v_f),
        slope,
    })
}

/// Column layout of the max-min MILP. Coordinates inside the program are shifted by `shift`
/// so that every inner point and the whole box are nonnegative.
#[derive(Clone, Debug)]
pub struct MaxMinLayout {
    pub z: Range<usize>,
    pub t: usize,
    pub lambda: Range<usize>,
    pub alpha: Range<usize>,
    pub beta: Range<usize>,
    pub gamma: Range<usize>,
    pub eta: usize,
    pub norm_active_a: Range<usize>,
    pub norm_active_b: Range<usize>,
    pub point_inactive: Range<usize>,
    pub shift: Vec<f64>,
    pub big_m_primal: f64,
    pub big_m_dual: f64,
}

impl MaxMinLayout {
    pub fn n_binaries(&self) -> usize {
        self.norm_active_a.len() + self.norm_active_b.len() + self.point_inactive.len()
    }

    pub fn trial(&self, x: &[f64]) -> Vec<f64> {
        x[self.z.clone()].iter().zip(&self.shift).map(|(v, c)| v + c).collect()
    }
}

#[derive(Clone, Debug)]
pub struct MaxMinMilp {
    pub program: Program,
    pub layout: MaxMinLayout,
}

fn range_cols(p: &mut Program, n: usize, f: impl Fn(&mut Program) -> usize) -> Range<usize> {
    let start = p.cols.len();
    for _ in 0..n {
        f(p);
    }
    start..p.cols.len()
}

/// Single-level MILP for `max_{z ∈ outer} min_{y ∈ hull(inner)} ‖z − y‖_∞`, with the inner
/// problem replaced by its KKT conditions and complementarity linearized by big-M binaries.
pub fn build_maxmin_milp(outer: &OuterApprox, inner: &InnerApprox, big_m_dual: f64) -> Result<MaxMinMilp> {
    if inner.is_empty() {
        return Err(Error::EmptyRegion);
    }
    let n = outer.dim();
    let m = inner.len();
    let pts = inner.coords();
    let shift: Vec<f64> = (0..n)
        .map(|j| pts.iter().map(|p| p[j]).fold(outer.lower[j], f64::min))
        .collect();
    let top: Vec<f64> = (0..n)
        .map(|j| pts.iter().map(|p| p[j]).fold(outer.upper[j], f64::max))
        .collect();
    let diameter = (0..n).map(|j| top[j] - shift[j]).fold(0.0, f64::max);
    let zs: Vec<Vec<f64>> = pts
        .iter()
        .map(|p| p.iter().zip(&shift).map(|(v, c)| v - c).collect())
        .collect();
    let m_p = 2.0 * diameter;
    // |η| ≤ D and γ ≤ 2D hold for any optimal multiplier after the shift.
    let m_d = big_m_dual.max(2.02 * diameter + 1.0);

    let mut p = Program::maximize();
    let z_start = p.cols.len();
    for j in 0..n {
        p.add_col(outer.lower[j] - shift[j], outer.upper[j] - shift[j], 0.0);
    }
    let z = z_start..p.cols.len();
    let t = p.add_col(0.0, diameter, 1.0);
    let lambda = range_cols(&mut p, m, |p| p.add_col(0.0, 1.0, 0.0));
    let alpha = range_cols(&mut p, n, |p| p.add_col(0.0, 1.0, 0.0));
    let beta = range_cols(&mut p, n, |p| p.add_col(0.0, 1.0, 0.0));
    let gamma = range_cols(&mut p, m, |p| p.add_col(0.0, m_d, 0.0));
    let eta = p.add_col(-m_d, m_d, 0.0);
    let ua = range_cols(&mut p, n, |p| p.add_binary(0.0));
    let ub = range_cols(&mut p, n, |p| p.add_binary(0.0));
    let v = range_cols(&mut p, m, |p| p.add_binary(0.0));

    for h in &outer.halfspaces {
        let offset = h.offset - h.normal.iter().zip(&shift).map(|(a, c)| a * c).sum::<f64>();
        let coeffs = h.normal.iter().enumerate().filter(|(_, a)| **a != 0.0).map(|(j, &a)| (z.start + j, a)).collect();
        p.add_le(coeffs, offset);
    }
    // Σ_i λ_i Z_ij as coefficient list.
    let hull_coord = |j: usize, sign: f64| -> Vec<(usize, f64)> {
        (0..m).filter(|&i| zs[i][j] != 0.0).map(|i| (lambda.start + i, sign * zs[i][j])).collect()
    };
    for j in 0..n {
        // z_j − y_j ≤ t and y_j − z_j ≤ t.
        let mut a = hull_coord(j, -1.0);
        a.extend([(z.start + j, 1.0), (t, -1.0)]);
        p.add_le(a, 0.0);
        let mut b = hull_coord(j, 1.0);
        b.extend([(z.start + j, -1.0), (t, -1.0)]);
        p.add_le(b, 0.0);
    }
    p.add_eq(lambda.clone().map(|c| (c, 1.0)).collect(), 1.0);
    p.add_eq(alpha.clone().chain(beta.clone()).map(|c| (c, 1.0)).collect(), 1.0);
    for i in 0..m {
        let mut coeffs: Vec<(usize, f64)> = Vec::with_capacity(2 * n + 2);
        for j in 0..n {
            if zs[i][j] != 0.0 {
                coeffs.push((alpha.start + j, -zs[i][j]));
                coeffs.push((beta.start + j, zs[i][j]));
            }
        }
        coeffs.push((gamma.start + i, -1.0));
        coeffs.push((eta, -1.0));
        p.add_eq(coeffs, 0.0);
    }
    for j in 0..n {
        p.add_le(vec![(alpha.start + j, 1.0), (ua.start + j, -1.0)], 0.0);
        // Slack of the first norm row, t − z_j + y_j, vanishes when ua_j = 1.
        let mut a = hull_coord(j, 1.0);
        a.extend([(t, 1.0), (z.start + j, -1.0), (ua.start + j, m_p)]);
        p.add_le(a, m_p);
        p.add_le(vec![(beta.start + j, 1.0), (ub.start + j, -1.0)], 0.0);
        let mut b = hull_coord(j, -1.0);
        b.extend([(t, 1.0), (z.start + j, 1.0), (ub.start + j, m_p)]);
        p.add_le(b, m_p);
    }
    for i in 0..m {
        p.add_le(vec![(gamma.start + i, 1.0), (v.start + i, -m_d)], 0.0);
        p.add_le(vec![(lambda.start + i, 1.0), (v.start + i, 1.0)], 1.0);
    }
    // At most n+1 points carry weight, at least one does.
    let lo = m as f64 - n as f64 - 1.0;
    p.add_row(lo.max(0.0), m as f64 - 1.0, v.clone().map(|c| (c, 1.0)).collect());
    // Between one and n norm rows are active.
    p.add_row(1.0, n as f64, ua.clone().chain(ub.clone()).map(|c| (c, 1.0)).collect());

    Ok(MaxMinMilp {
        program: p,
        layout: MaxMinLayout {
            z,
            t,
            lambda,
            alpha,
            beta,
            gamma,
            eta,
            norm_active_a: ua,
            norm_active_b: ub,
            point_inactive: v,
            shift,
            big_m_primal: m_p,
            big_m_dual: m_d,
        },
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct TrialResult {
    pub z_trial: Vec<f64>,
    pub d_io: f64,
    pub bound: f64,
    pub status: MilpStatus,
    /// Trial points of every pool member, incumbent first.
    pub pool: Vec<Vec<f64>>,
    pub big_m_dual: f64,
}

/// Solves the max-min MILP, growing the dual big-M while any dual sits near it.
pub fn furthest_point(outer: &OuterApprox, inner: &InnerApprox, opts: &MilpOptions, gw: &Gateway) -> Result<TrialResult> {
    let mut big_m = DEFAULT_DUAL_BIG_M;
    for _ in 0..4 {
        let milp = build_maxmin_milp(outer, inner, big_m)?;
        let sol = gw.solve_milp(&milp.program, opts, None)?;
        if sol.status == MilpStatus::Infeasible {
            return Err(Error::EmptyRegion);
        }
        let l = &milp.layout;
        let x = &sol.incumbent;
        let near_m = l
            .gamma
            .clone()
            .chain(std::iter::once(l.eta))
            .any(|c| x[c].abs() >= 0.99 * l.big_m_dual);
        if near_m {
            log::warn!("dual big-M {} is binding; retrying with {}", l.big_m_dual, 10.0 * l.big_m_dual);
            big_m = 10.0 * l.big_m_dual;
            continue;
        }
        let z_trial = l.trial(x);
        let d_io = x[l.t];
        if let Ok(check) = hull_distance(&inner.coords(), &z_trial, gw) {
            if (check.distance - d_io).abs() > 1e-5 * (1.0 + l.big_m_primal) {
                log::warn!("max-min MILP reports {d_io:e} but the trial point is {:e} from the hull", check.distance);
            }
        }
        return Ok(TrialResult {
            pool: sol.pool.iter().map(|p| l.trial(p)).collect(),
            z_trial,
            d_io,
            bound: sol.bound,
            status: sol.status,
            big_m_dual: l.big_m_dual,
        });
    }
    Err(Error::NumericalFailure("dual big-M kept binding".into()))
}

/// Uncertified estimate: the furthest of a few outer-region vertices (extreme in random and
/// axis directions) from the inner hull.
pub fn heuristic_furthest_point(
    outer: &OuterApprox,
    inner: &InnerApprox,
    rng: &mut ChaCha8Rng,
    gw: &Gateway,
) -> Result<(Vec<f64>, f64)> {
    let n = outer.dim();
    let mut directions: Vec<Vec<f64>> = Vec::with_capacity(4 * n);
    for j in 0..n {
        for sign in [1.0, -1.0] {
            let mut e = vec![0.0; n];
            e[j] = sign;
            directions.push(e);
        }
    }
    for _ in 0..2 * n {
        directions.push((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect());
    }
    let mut best: Option<(Vec<f64>, f64)> = None;
    for w in directions {
        let mut p = Program::maximize();
        for j in 0..n {
            p.add_col(outer.lower[j], outer.upper[j], w[j]);
        }
        for h in &outer.halfspaces {
            p.add_le(h.normal.iter().copied().enumerate().collect(), h.offset);
        }
        let sol = gw.solve_program(&p, None)?;
        if sol.status != LpStatus::Optimal {
            return Err(Error::EmptyRegion);
        }
        let d = hull_distance(&inner.coords(), &sol.primal, gw)?.distance;
        if best.as_ref().is_none_or(|(_, b)| d > *b) {
            best = Some((sol.primal, d));
        }
    }
    Ok(best.expect("at least one direction"))
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub milp: MilpOptions,
    pub value_cut: bool,
    /// Iterations between exact (certified) distance solves; 1 means every iteration.
    pub exact_metric_every: usize,
    pub seed: u64,
    /// Record wall-clock timings; when false every timing column is zero.
    pub record_timings: bool,
    /// Near-optimal points to seed the inner hull with, besides the optimum.
    pub known_points: Vec<Vec<f64>>,
}

impl OracleOptions {
    pub fn new(tol: f64) -> Self {
        Self {
            tol,
            max_iter: 300,
            milp: MilpOptions::default(),
            value_cut: true,
            exact_metric_every: 1,
            seed: 0,
            record_timings: true,
            known_points: Vec::new(),
        }
    }
}

pub const ORACLE_METHOD: &str = "oracle";
pub const ORACLE_HEURISTIC_METHOD: &str = "oracle-heuristic";

/// Runs the loop until the certified distance drops to `tol` or `max_iter` refinements have
/// been made. Trace row `i` is the measurement taken after `i` refinements.
pub fn run_oracle(problem: &ExplorationProblem, opts: &OracleOptions, gw: &Gateway) -> Result<ExplorationResult> {
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }
    if opts.max_iter == 0 {
        return Err(Error::InvalidArgument("max_iter must be at least 1".into()));
    }
    let (mut inner, mut outer) = init_regions(problem, &opts.known_points, gw)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut clock = Clock::new(opts.record_timings);
    let mut cum = 0.0;
    let mut trace = Vec::new();
    let mut cuts = Vec::new();
    let mut converged = false;
    let certify_limit = opts.tol + opts.milp.abs_gap;

    for iter in 0..=opts.max_iter {
        clock.lap();
        let inner_m = inner.len();
        let outer_k = outer.halfspaces.len();
        let every = opts.exact_metric_every.max(1);
        let exact = iter % every == 0 || iter == opts.max_iter;
        let (trials, d_io, bound, method) = if exact {
            let mut trial = furthest_point(&outer, &inner, &opts.milp, gw)?;
            if trial.d_io <= opts.tol && trial.bound > certify_limit {
                let tight = MilpOptions {
                    rel_gap: 0.0,
                    ..opts.milp
                };
                trial = furthest_point(&outer, &inner, &tight, gw)?;
            }
            let mut trials = trial.pool.clone();
            if trials.is_empty() {
                trials.push(trial.z_trial.clone());
            }
            (trials, trial.d_io, Some(trial.bound), ORACLE_METHOD)
        } else {
            let (z, d) = heuristic_furthest_point(&outer, &inner, &mut rng, gw)?;
            (vec![z], d, None, ORACLE_HEURISTIC_METHOD)
        };
        let t2 = clock.lap();
        let mut record = IterationRecord {
            iter,
            method: method.to_string(),
            d_io: Some(d_io),
            bound,
            trial_feasible: None,
            cuts_added: 0,
            inner_m,
            outer_k,
            t_step2_ms: t2,
            t_step3_ms: 0.0,
            t_step4_ms: 0.0,
            cum_ms: 0.0,
            trial: Some(trials[0].clone()),
        };
        if exact && d_io <= opts.tol && bound.is_some_and(|b| b <= certify_limit) {
            converged = true;
        }
        if converged || iter == opts.max_iter {
            cum += t2;
            record.cum_ms = cum;
            trace.push(record);
            break;
        }

        let projected: Vec<FeasibleResult> = if trials.len() > 1 {
            trials
                .par_iter()
                .map(|z| closest_near_optimal(problem, z, gw))
                .collect::<Result<_>>()?
        } else {
            vec![closest_near_optimal(problem, &trials[0], gw)?]
        };
        let t3 = clock.lap();

        let mut feasible = true;
        for (z_trial, res) in trials.iter().zip(&projected) {
            inner.add_point(res.z_feasible.clone(), PointOrigin::Oracle { iteration: iter }, gw)?;
            if res.delta <= STRICT_CUT_TOL {
                continue;
            }
            feasible = false;
            let mut new_cuts = Vec::with_capacity(2);
            if let Some(h) = separating_cut(res) {
                new_cuts.push(h);
            }
            if opts.value_cut {
                if let Some(h) = value_function_cut(problem, &res.z_feasible, Some(&res.x_full), gw)?.halfspace {
                    new_cuts.push(h);
                }
            }
            for h in new_cuts {
                let accepted = outer.add_halfspace(h.clone(), &inner)?;
                record.cuts_added += accepted as usize;
                cuts.push(CutRecord {
                    iteration: iter,
                    kind: h.provenance,
                    separation: Some(h.excess(z_trial)),
                    trial: Some(z_trial.clone()),
                    anchor: res.z_feasible.clone(),
                    halfspace: h,
                    accepted,
                });
            }
        }
        let t4 = clock.lap();
        record.trial_feasible = Some(feasible);
        record.t_step3_ms = t3;
        record.t_step4_ms = t4;
        cum += t2 + t3 + t4;
        record.cum_ms = cum;
        trace.push(record);
    }

    let last = trace.last().expect("at least one row");
    Ok(ExplorationResult {
        method: ORACLE_METHOD.to_string(),
        final_d: last.d_io,
        final_bound: last.bound,
        inner,
        outer,
        trace,
        cuts,
        converged,
    })
}
