//! Convergence and coverage measures over region snapshots.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry;
use crate::oracle::furthest_point;
use crate::regions::{InnerApprox, OuterApprox};
use crate::solver::{Gateway, MilpOptions};
use crate::trace::ExplorationResult;

/// Membership slack used when classifying Monte Carlo samples.
const MC_MEMBER_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VolumeMethod {
    #[serde(rename = "exact-2d")]
    Exact2d,
    #[serde(rename = "exact-3d")]
    Exact3d,
    MonteCarlo,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VolumeEstimate {
    pub value: f64,
    pub method: VolumeMethod,
    /// 95% binomial halfwidth; zero for exact values.
    pub ci_halfwidth: f64,
    pub samples: usize,
    /// Set when a Monte Carlo estimate saw no hits at all.
    pub zero_hits: bool,
}

impl VolumeEstimate {
    fn exact(value: f64, dim: usize) -> Self {
        Self {
            value,
            method: if dim == 2 { VolumeMethod::Exact2d } else { VolumeMethod::Exact3d },
            ci_halfwidth: 0.0,
            samples: 0,
            zero_hits: false,
        }
    }

    /// Standard error of a Monte Carlo estimate (halfwidth / 1.96).
    pub fn sigma(&self) -> f64 {
        self.ci_halfwidth / 1.96
    }
}

/// Max-min ∞-distance between an outer region and an inner hull, with the maximizing point.
pub fn maxmin_distance(
    outer: &OuterApprox,
    inner: &InnerApprox,
    opts: &MilpOptions,
    gw: &Gateway,
) -> Result<(f64, Vec<f64>)> {
    let t = furthest_point(outer, inner, opts, gw)?;
    Ok((t.d_io, t.z_trial))
}

/// Coverage gap of a method's inner hull measured against a reference outer region.
pub fn distance_to_reference(
    inner: &InnerApprox,
    reference: &OuterApprox,
    opts: &MilpOptions,
    gw: &Gateway,
) -> Result<f64> {
    maxmin_distance(reference, inner, opts, gw).map(|(d, _)| d)
}

pub fn volume_exact_points(points: &[&[f64]], dim: usize) -> Result<VolumeEstimate> {
    geometry::points_volume(points, dim).map(|v| VolumeEstimate::exact(v, dim))
}

pub fn volume_exact_halfspaces(outer: &OuterApprox) -> Result<VolumeEstimate> {
    let dim = outer.dim();
    geometry::halfspace_volume(&outer.all_halfspaces(), dim).map(|v| VolumeEstimate::exact(v, dim))
}

pub fn inner_volume_exact(inner: &InnerApprox) -> Result<VolumeEstimate> {
    volume_exact_points(&inner.coords(), inner.dim())
}

/// A region whose membership can be tested pointwise.
#[derive(Clone, Copy, Debug)]
pub enum Region<'a> {
    Inner(&'a InnerApprox),
    Outer(&'a OuterApprox),
}

impl Region<'_> {
    fn dim(&self) -> usize {
        match self {
            Region::Inner(i) => i.dim(),
            Region::Outer(o) => o.dim(),
        }
    }

    fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            Region::Outer(o) => (o.lower.clone(), o.upper.clone()),
            Region::Inner(i) => inner_box(i),
        }
    }

    fn contains(&self, z: &[f64], gw: &Gateway) -> Result<bool> {
        match self {
            Region::Outer(o) => Ok(o.contains(z)),
            Region::Inner(i) => inner_contains(i, z, gw),
        }
    }
}

fn inner_box(inner: &InnerApprox) -> (Vec<f64>, Vec<f64>) {
    let n = inner.dim();
    let mut lo = vec![f64::INFINITY; n];
    let mut hi = vec![f64::NEG_INFINITY; n];
    for p in inner.coords() {
        for j in 0..n {
            lo[j] = lo[j].min(p[j]);
            hi[j] = hi[j].max(p[j]);
        }
    }
    (lo, hi)
}

fn inner_contains(inner: &InnerApprox, z: &[f64], gw: &Gateway) -> Result<bool> {
    let (lo, hi) = inner_box(inner);
    if z.iter().zip(lo.iter().zip(&hi)).any(|(v, (l, h))| *v < l - MC_MEMBER_TOL || *v > h + MC_MEMBER_TOL) {
        return Ok(false);
    }
    Ok(inner.contains(z, MC_MEMBER_TOL, gw)?.member)
}

fn box_volume(lo: &[f64], hi: &[f64]) -> f64 {
    lo.iter().zip(hi).map(|(l, h)| (h - l).max(0.0)).product()
}

fn sample_box(lo: &[f64], hi: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
    lo.iter()
        .zip(hi)
        .map(|(&l, &h)| if h > l { rng.gen_range(l..h) } else { l })
        .collect()
}

fn binomial_estimate(hits: usize, n: usize, box_vol: f64) -> VolumeEstimate {
    let p = hits as f64 / n as f64;
    let halfwidth = if hits == 0 {
        // Rule of three: one-sided 95% bound when nothing was hit.
        3.0 / n as f64 * box_vol
    } else {
        1.96 * (p * (1.0 - p) / n as f64).sqrt() * box_vol
    };
    if hits == 0 && n >= 10_000 {
        log::warn!("Monte Carlo volume saw no hits in {n} samples");
    }
    VolumeEstimate {
        value: p * box_vol,
        method: VolumeMethod::MonteCarlo,
        ci_halfwidth: halfwidth,
        samples: n,
        zero_hits: hits == 0,
    }
}

/// Rejection sampling in the region's bounding box.
pub fn volume_mc(region: Region<'_>, n_samples: usize, rng: &mut ChaCha8Rng, gw: &Gateway) -> Result<VolumeEstimate> {
    if n_samples == 0 {
        return Err(Error::InvalidArgument("Monte Carlo volume needs at least one sample".into()));
    }
    let (lo, hi) = region.bounding_box();
    if lo.iter().chain(&hi).any(|v| !v.is_finite()) {
        return Err(Error::UnboundedRegion);
    }
    let box_vol = box_volume(&lo, &hi);
    if box_vol == 0.0 {
        return Ok(binomial_estimate(0, n_samples, 0.0));
    }
    let mut hits = 0;
    for _ in 0..n_samples {
        let z = sample_box(&lo, &hi, rng);
        if region.contains(&z, gw)? {
            hits += 1;
        }
    }
    debug_assert_eq!(region.dim(), lo.len());
    Ok(binomial_estimate(hits, n_samples, box_vol))
}

/// Inner and outer volumes by one shared method: exact for two or three dimensions, otherwise
/// Monte Carlo on a single sample stream drawn from the outer box (inner ⊆ outer, so inner is
/// only tested on outer hits).
pub fn region_volumes(
    inner: &InnerApprox,
    outer: &OuterApprox,
    n_samples: usize,
    seed: u64,
    gw: &Gateway,
) -> Result<(VolumeEstimate, VolumeEstimate)> {
    let dim = outer.dim();
    if inner.dim() != dim {
        return Err(Error::Dimension { expected: dim, got: inner.dim() });
    }
    if dim == 2 || dim == 3 {
        return Ok((inner_volume_exact(inner)?, volume_exact_halfspaces(outer)?));
    }
    if n_samples == 0 {
        return Err(Error::InvalidArgument("Monte Carlo volume needs at least one sample".into()));
    }
    let box_vol = box_volume(&outer.lower, &outer.upper);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut in_outer, mut in_inner) = (0, 0);
    for _ in 0..n_samples {
        let z = sample_box(&outer.lower, &outer.upper, &mut rng);
        if outer.contains(&z) {
            in_outer += 1;
            if inner_contains(inner, &z, gw)? {
                in_inner += 1;
            }
        }
    }
    Ok((
        binomial_estimate(in_inner, n_samples, box_vol),
        binomial_estimate(in_outer, n_samples, box_vol),
    ))
}

/// `vol(inner) / vol(outer)`, clamped to `[0, 1]`.
pub fn volume_ratio(inner: &InnerApprox, outer: &OuterApprox, n_samples: usize, seed: u64, gw: &Gateway) -> Result<f64> {
    let (vi, vo) = region_volumes(inner, outer, n_samples, seed, gw)?;
    ratio(&vi, &vo)
}

fn ratio(vi: &VolumeEstimate, vo: &VolumeEstimate) -> Result<f64> {
    if vo.value <= 0.0 {
        return Err(Error::ZeroVolume);
    }
    Ok((vi.value / vo.value).clamp(0.0, 1.0))
}

#[derive(Clone, Debug)]
pub struct MetricsOptions {
    pub milp: MilpOptions,
    /// Samples per Monte Carlo volume (dimensions above three).
    pub mc_samples: usize,
    pub seed: u64,
    pub volumes: bool,
}

impl Default for MetricsOptions {
    fn default() -> Self {
        Self { milp: MilpOptions::default(), mc_samples: 10_000, seed: 0, volumes: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsRecord {
    pub iter: usize,
    pub method: String,
    #[serde(rename = "d_IO")]
    pub d_io: Option<f64>,
    pub vol_inner: Option<f64>,
    pub vol_outer: Option<f64>,
    pub vol_ratio: Option<f64>,
    pub d_to_reference: Option<f64>,
}

pub const METRICS_HEADER: [&str; 7] = ["iter", "method", "d_IO", "vol_inner", "vol_outer", "vol_ratio", "d_to_reference"];

/// One metrics row per trace row. Certified distances already in the trace are reused; other rows
/// are measured afresh.
pub fn metrics_for_trace(
    result: &ExplorationResult,
    reference: Option<&OuterApprox>,
    opts: &MetricsOptions,
    gw: &Gateway,
) -> Result<Vec<MetricsRecord>> {
    result
        .trace
        .par_iter()
        .enumerate()
        .map(|(row, rec)| {
            let (inner, outer) = result.regions_at(row);
            let d_io = match (rec.d_io, rec.bound) {
                (Some(d), Some(_)) => d,
                _ => maxmin_distance(&outer, &inner, &opts.milp, gw)?.0,
            };
            let (vol_inner, vol_outer, vol_ratio) = if opts.volumes {
                let (vi, vo) = region_volumes(&inner, &outer, opts.mc_samples, opts.seed.wrapping_add(row as u64), gw)?;
                let r = ratio(&vi, &vo).ok();
                (Some(vi.value), Some(vo.value), r)
            } else {
                (None, None, None)
            };
            let d_to_reference = reference
                .map(|r| distance_to_reference(&inner, r, &opts.milp, gw))
                .transpose()?;
            Ok(MetricsRecord {
                iter: rec.iter,
                method: rec.method.clone(),
                d_io: Some(d_io),
                vol_inner,
                vol_outer,
                vol_ratio,
                d_to_reference,
            })
        })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_metrics_csv<W: Write>(records: &[MetricsRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(METRICS_HEADER)?;
    for r in records {
        w.write_record([
            r.iter.to_string(),
            r.method.clone(),
            opt(r.d_io),
            opt(r.vol_inner),
            opt(r.vol_outer),
            opt(r.vol_ratio),
            opt(r.d_to_reference),
        ])?;
    }
    w.flush()?;
    Ok(())
}
