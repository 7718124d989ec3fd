//! Design generation from converged regions: uniform samples, most-distant designs, diverse sets.

use std::io::Write;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exploration::ExplorationProblem;
use crate::geometry::enumerate_vertices;
use crate::oracle::closest_near_optimal;
use crate::regions::{hull_distance, InnerApprox, OuterApprox};
use crate::solver::{Gateway, LpStatus, MilpOptions, MilpStatus, Program};

/// Every emitted sample must pass its region's membership test within this.
pub const MEMBER_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SampleMethod {
    HitAndRun,
    Diverse,
    Vertices,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SampleTarget {
    /// The certified hull; every point is near-optimal.
    #[default]
    Inner,
    Outer,
}

#[derive(Clone, Debug, Serialize)]
pub struct SampleBatch {
    pub names: Vec<String>,
    pub points: Vec<Vec<f64>>,
    pub method: SampleMethod,
    pub target: SampleTarget,
    pub seed: u64,
    pub burn_in: usize,
    pub thinning: usize,
    /// Dimension of the sampled affine span when it is smaller than the ambient one.
    pub affine_dim: Option<usize>,
    /// Diverse mode: distance of each design to the cloud at the time it was chosen.
    pub deltas: Option<Vec<f64>>,
    /// Diverse mode: nearest seed-cloud point (L1) to each design.
    pub nearest: Option<Vec<Vec<f64>>>,
}

impl SampleBatch {
    fn new(names: Vec<String>, method: SampleMethod, target: SampleTarget) -> Self {
        Self {
            names,
            points: Vec::new(),
            method,
            target,
            seed: 0,
            burn_in: 0,
            thinning: 0,
            affine_dim: None,
            deltas: None,
            nearest: None,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Header = z names, plus `delta` when distances are present.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = self.names.clone();
        if self.deltas.is_some() {
            header.push("delta".into());
        }
        w.write_record(&header)?;
        for (i, p) in self.points.iter().enumerate() {
            let mut row: Vec<String> = p.iter().map(f64::to_string).collect();
            if let Some(d) = &self.deltas {
                row.push(d[i].to_string());
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Each design next to its nearest seed-cloud point, columns `<name>` then `nearest_<name>`.
    pub fn write_nearest_csv<W: Write>(&self, writer: W) -> Result<()> {
        let nearest = self
            .nearest
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("batch has no nearest-point data".into()))?;
        let mut w = csv::Writer::from_writer(writer);
        let mut header = self.names.clone();
        header.extend(self.names.iter().map(|n| format!("nearest_{n}")));
        w.write_record(&header)?;
        for (p, q) in self.points.iter().zip(nearest) {
            w.write_record(p.iter().chain(q).map(f64::to_string))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Centre and radius of the largest ∞-norm ball inside the outer region. Ties are broken
/// lexicographically: rows that bind at the optimal radius are frozen at that clearance and the
/// radius is maximized again over the remaining rows.
pub fn chebyshev_center(outer: &OuterApprox, gw: &Gateway) -> Result<(Vec<f64>, f64)> {
    let n = outer.dim();
    let halfspaces = outer.all_halfspaces();
    let l1: Vec<f64> = halfspaces.iter().map(|h| h.normal.iter().map(|v| v.abs()).sum()).collect();
    let mut frozen: Vec<Option<f64>> = vec![None; halfspaces.len()];
    let mut first: Option<(Vec<f64>, f64)> = None;
    let mut center = Vec::new();
    for _ in 0..halfspaces.len() {
        let mut p = Program::maximize();
        let z: Vec<usize> = (0..n).map(|_| p.add_col(f64::NEG_INFINITY, f64::INFINITY, 0.0)).collect();
        let r = p.add_col(0.0, f64::INFINITY, 1.0);
        let mut free_rows = Vec::new();
        for (i, h) in halfspaces.iter().enumerate() {
            let mut coeffs: Vec<(usize, f64)> = z.iter().zip(&h.normal).map(|(&c, &a)| (c, a)).collect();
            match frozen[i] {
                Some(ri) => {
                    p.add_le(coeffs, h.offset - ri * l1[i]);
                }
                None => {
                    coeffs.push((r, l1[i]));
                    free_rows.push((i, p.add_le(coeffs, h.offset)));
                }
            }
        }
        let sol = gw.solve_program(&p, None)?;
        match sol.status {
            LpStatus::Optimal => {}
            LpStatus::Infeasible if first.is_none() => return Err(Error::EmptyRegion),
            LpStatus::Infeasible => break,
            LpStatus::Unbounded => return Err(Error::UnboundedRegion),
        }
        let radius = sol.primal[r];
        center = z.iter().map(|&c| sol.primal[c]).collect();
        if first.is_none() {
            first = Some((center.clone(), radius));
        }
        let mut newly = 0;
        for &(i, row) in &free_rows {
            if sol.row_duals[row].abs() > 1e-9 {
                frozen[i] = Some(radius);
                newly += 1;
            }
        }
        if newly == 0 || frozen.iter().all(Option::is_some) {
            break;
        }
    }
    let radius = first.map(|(_, r)| r).unwrap_or(0.0);
    Ok((center, radius))
}

#[derive(Clone, Debug)]
pub struct HitAndRunOptions {
    pub k: usize,
    /// Defaults to `100·n_z`.
    pub burn_in: Option<usize>,
    pub thin: usize,
    pub seed: u64,
    /// Sample inside the affine span of a flat hull instead of failing.
    pub affine_span: bool,
    pub target: SampleTarget,
}

impl HitAndRunOptions {
    pub fn new(k: usize, seed: u64) -> Self {
        Self { k, burn_in: None, thin: 10, seed, affine_span: false, target: SampleTarget::Inner }
    }
}

/// Orthonormal basis (columns) of the span of the centred points, with its rank.
fn affine_basis(points: &[&[f64]]) -> (DMatrix<f64>, usize) {
    let n = points[0].len();
    let c = centroid(points);
    let a = DMatrix::from_fn(n, points.len(), |j, i| points[i][j] - c[j]);
    let scale = a.amax().max(1.0);
    let svd = a.svd(true, false);
    let u = svd.u.expect("left vectors requested");
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > 1e-9 * scale)
        .collect();
    let basis = DMatrix::from_fn(n, keep.len(), |j, c| u[(j, keep[c])]);
    (basis, keep.len())
}

fn centroid(points: &[&[f64]]) -> Vec<f64> {
    let n = points[0].len();
    (0..n)
        .map(|j| points.iter().map(|p| p[j]).sum::<f64>() / points.len() as f64)
        .collect()
}

/// `[t_lo, t_hi]` such that `x + t·d` stays in the hull of `points`. Both ends come from one
/// separable LP: maximize `t_hi − t_lo` with a convex combination for each end.
fn inner_chord(points: &[&[f64]], x: &[f64], d: &[f64], gw: &Gateway) -> Result<(f64, f64)> {
    let mut p = Program::maximize();
    let mut ends = [0usize; 2];
    for (slot, sign) in [(0, -1.0), (1, 1.0)] {
        let lam: Vec<usize> = points.iter().map(|_| p.add_col(0.0, f64::INFINITY, 0.0)).collect();
        let t = p.add_col(f64::NEG_INFINITY, f64::INFINITY, sign);
        for j in 0..x.len() {
            let mut coeffs: Vec<(usize, f64)> = lam.iter().zip(points).map(|(&c, pt)| (c, pt[j])).collect();
            coeffs.push((t, -d[j]));
            p.add_eq(coeffs, x[j]);
        }
        p.add_eq(lam.iter().map(|&c| (c, 1.0)).collect(), 1.0);
        ends[slot] = t;
    }
    let sol = gw.solve_program(&p, None)?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::NumericalFailure(format!("chord LP {:?}", sol.status)));
    }
    Ok((sol.primal[ends[0]].min(0.0), sol.primal[ends[1]].max(0.0)))
}

fn outer_chord(outer: &OuterApprox, x: &[f64], d: &[f64]) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for h in outer.all_halfspaces() {
        let a: f64 = h.normal.iter().zip(d).map(|(n, v)| n * v).sum();
        let slack = (-h.excess(x)).max(0.0);
        if a > 1e-15 {
            hi = hi.min(slack / a);
        } else if a < -1e-15 {
            lo = lo.max(slack / a);
        }
    }
    (lo, hi)
}

/// Classic hit-and-run: random direction, exact chord by LP against the hull (or in closed form
/// for the outer region), uniform point on the chord. Starts at the centroid of the hull points
/// (inner) or at the Chebyshev centre (outer).
pub fn hit_and_run(
    inner: &InnerApprox,
    outer: Option<&OuterApprox>,
    opts: &HitAndRunOptions,
    gw: &Gateway,
) -> Result<SampleBatch> {
    if opts.k == 0 {
        return Err(Error::InvalidArgument("sample count must be positive".into()));
    }
    if opts.thin == 0 {
        return Err(Error::InvalidArgument("thinning must be positive".into()));
    }
    let n = inner.dim();
    let burn_in = opts.burn_in.unwrap_or(100 * n);
    let mut batch = SampleBatch::new(inner.names.clone(), SampleMethod::HitAndRun, opts.target);
    batch.seed = opts.seed;
    batch.burn_in = burn_in;
    batch.thinning = opts.thin;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let points = inner.coords();

    let (basis, mut x) = match opts.target {
        SampleTarget::Inner => {
            if points.is_empty() {
                return Err(Error::EmptyRegion);
            }
            let (basis, rank) = affine_basis(&points);
            if rank < n {
                if !opts.affine_span {
                    return Err(Error::DegenerateHull { rank, dim: n });
                }
                batch.affine_dim = Some(rank);
            }
            (basis, centroid(&points))
        }
        SampleTarget::Outer => {
            let outer = outer.ok_or_else(|| Error::InvalidArgument("outer region required".into()))?;
            let (c, r) = chebyshev_center(outer, gw)?;
            if r <= 1e-12 {
                return Err(Error::DegenerateHull { rank: 0, dim: n });
            }
            (DMatrix::identity(n, n), c)
        }
    };
    let span = basis.ncols();

    let total = burn_in + opts.k * opts.thin;
    for step in 1..=total {
        let g: Vec<f64> = (0..span).map(|_| rng.sample(StandardNormal)).collect();
        let mut d: Vec<f64> = (0..n).map(|j| (0..span).map(|c| basis[(j, c)] * g[c]).sum()).collect();
        let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
        if span > 0 && norm > 0.0 {
            d.iter_mut().for_each(|v| *v /= norm);
            let (lo, hi) = match (opts.target, outer) {
                (SampleTarget::Outer, Some(o)) => outer_chord(o, &x, &d),
                _ => inner_chord(&points, &x, &d, gw)?,
            };
            if hi > lo {
                let t = rng.gen_range(lo..=hi);
                x.iter_mut().zip(&d).for_each(|(xi, di)| *xi += t * di);
            }
        }
        if step > burn_in && (step - burn_in).is_multiple_of(opts.thin) {
            batch.points.push(x.clone());
        }
    }
    verify_batch(&batch, inner, outer, gw)?;
    Ok(batch)
}

fn verify_batch(batch: &SampleBatch, inner: &InnerApprox, outer: Option<&OuterApprox>, gw: &Gateway) -> Result<()> {
    let points = inner.coords();
    for z in &batch.points {
        let excess = match (batch.target, outer) {
            (SampleTarget::Outer, Some(o)) => o.all_halfspaces().iter().map(|h| h.excess(z)).fold(0.0, f64::max),
            _ => hull_distance(&points, z, gw)?.distance,
        };
        if excess > MEMBER_TOL {
            return Err(Error::NumericalFailure(format!("sample leaves its region by {excess:e}")));
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DistantDesign {
    pub z: Vec<f64>,
    /// `min_i ‖z − z_i‖₁`, recomputed from `z`.
    pub delta: f64,
    /// MILP dual bound on the best attainable distance.
    pub bound: f64,
    pub status: MilpStatus,
}

/// Sampler MILPs want near-exact optima; the exploration defaults are far looser.
pub fn exact_milp_options() -> MilpOptions {
    MilpOptions { rel_gap: 1e-6, abs_gap: 1e-6, ..MilpOptions::default() }
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Point of the outer region furthest (L1) from its nearest cloud point:
/// `max δ s.t. δ ≤ ‖z − z_i‖₁ ∀i, z ∈ O`. Each `|z_d − c_id|` gets a binary choosing its sign.
pub fn most_distant_design(
    outer: &OuterApprox,
    cloud: &[Vec<f64>],
    opts: &MilpOptions,
    gw: &Gateway,
) -> Result<DistantDesign> {
    if cloud.is_empty() {
        return Err(Error::InvalidArgument("point cloud is empty".into()));
    }
    let n = outer.dim();
    if let Some(bad) = cloud.iter().find(|c| c.len() != n) {
        return Err(Error::Dimension { expected: n, got: bad.len() });
    }
    if outer.lower.iter().chain(&outer.upper).any(|v| !v.is_finite()) {
        return Err(Error::UnboundedRegion);
    }
    let mut p = Program::maximize();
    let z: Vec<usize> = (0..n).map(|j| p.add_col(outer.lower[j], outer.upper[j], 0.0)).collect();
    let delta = p.add_col(0.0, f64::INFINITY, 1.0);
    for h in &outer.halfspaces {
        p.add_le(z.iter().zip(&h.normal).map(|(&c, &a)| (c, a)).collect(), h.offset);
    }
    for c in cloud {
        let mut sum = vec![(delta, 1.0)];
        for j in 0..n {
            // Tight for this pair: |z_j − c_j| + (the discarded sign's value) ≤ 2·max(u − c, c − l).
            let big_m = 2.0 * (outer.upper[j] - c[j]).max(c[j] - outer.lower[j]).max(0.0);
            let e = p.add_col(0.0, f64::INFINITY, 0.0);
            let b = p.add_binary(0.0);
            // e ≤ z − c + M(1 − b)
            p.add_le(vec![(e, 1.0), (z[j], -1.0), (b, big_m)], big_m - c[j]);
            // e ≤ c − z + M·b
            p.add_le(vec![(e, 1.0), (z[j], 1.0), (b, -big_m)], c[j]);
            sum.push((e, -1.0));
        }
        p.add_le(sum, 0.0);
    }
    let sol = gw.solve_milp(&p, opts, None)?;
    if sol.status == MilpStatus::Infeasible {
        return Err(Error::EmptyRegion);
    }
    let zv: Vec<f64> = z.iter().map(|&c| sol.incumbent[c]).collect();
    let d = cloud.iter().map(|c| l1(&zv, c)).fold(f64::INFINITY, f64::min);
    Ok(DistantDesign { z: zv, delta: d, bound: sol.bound, status: sol.status })
}

/// Greedy farthest-point designs. With a problem attached, each design is replaced by its
/// closest near-optimal point (a certified design) before it joins the cloud.
pub fn diverse_set(
    outer: &OuterApprox,
    k: usize,
    seed_cloud: &[Vec<f64>],
    problem: Option<&ExplorationProblem>,
    names: Vec<String>,
    opts: &MilpOptions,
    gw: &Gateway,
) -> Result<SampleBatch> {
    if k == 0 {
        return Err(Error::InvalidArgument("sample count must be positive".into()));
    }
    if seed_cloud.is_empty() {
        return Err(Error::InvalidArgument("seed cloud is empty".into()));
    }
    let mut batch = SampleBatch::new(names, SampleMethod::Diverse, SampleTarget::Outer);
    let mut cloud = seed_cloud.to_vec();
    let mut deltas = Vec::with_capacity(k);
    let mut nearest = Vec::with_capacity(k);
    for _ in 0..k {
        let design = most_distant_design(outer, &cloud, opts, gw)?;
        let z = match problem {
            Some(pb) => {
                let f = closest_near_optimal(pb, &design.z, gw)?;
                if f.delta > pb.spec.tolerance {
                    log::warn!("design is {:e} from the near-optimal set; using its projection", f.delta);
                }
                f.z_feasible
            }
            None => design.z,
        };
        let near = seed_cloud
            .iter()
            .min_by(|a, b| l1(&z, a).total_cmp(&l1(&z, b)))
            .expect("nonempty cloud")
            .clone();
        deltas.push(design.delta);
        nearest.push(near);
        cloud.push(z.clone());
        batch.points.push(z);
    }
    batch.deltas = Some(deltas);
    batch.nearest = Some(nearest);
    Ok(batch)
}

/// Vertices of the outer region (two or three dimensions).
pub fn outer_vertices(outer: &OuterApprox, names: Vec<String>) -> Result<SampleBatch> {
    let mut batch = SampleBatch::new(names, SampleMethod::Vertices, SampleTarget::Outer);
    batch.points = enumerate_vertices(&outer.all_halfspaces(), outer.dim())?;
    batch.points.sort_by(|a, b| a.iter().zip(b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal));
    Ok(batch)
}
