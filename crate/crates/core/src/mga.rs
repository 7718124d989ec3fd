//! Modelling-to-generate-alternatives baselines: six weight schemes, the weighted solve they
//! share, and a driver that records the same trace as the ORACLE loop.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exploration::ExplorationProblem;
use crate::oracle::furthest_point;
use crate::regions::{init_regions, Halfspace, PointOrigin, Provenance};
use crate::solver::{Gateway, LpStatus, MilpOptions};
use crate::trace::{Clock, CutRecord, ExplorationResult, IterationRecord};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MgaMethod {
    Hsj,
    HsjRel,
    Random,
    Vmm,
    Erg,
    Spores,
}

impl MgaMethod {
    pub const ALL: [MgaMethod; 6] = [
        MgaMethod::Hsj,
        MgaMethod::HsjRel,
        MgaMethod::Random,
        MgaMethod::Vmm,
        MgaMethod::Erg,
        MgaMethod::Spores,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MgaMethod::Hsj => "hsj",
            MgaMethod::HsjRel => "hsj-rel",
            MgaMethod::Random => "random",
            MgaMethod::Vmm => "vmm",
            MgaMethod::Erg => "erg",
            MgaMethod::Spores => "spores",
        }
    }
}

impl fmt::Display for MgaMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MgaMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        MgaMethod::ALL
            .into_iter()
            .find(|m| m.name() == lower || (lower == "hsjrel" && *m == MgaMethod::HsjRel))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown MGA method `{s}`")))
    }
}

pub const SPORES_ALPHA: f64 = 0.1;
pub const SPORES_BETA: f64 = 10.0;

/// Weight-generation state for one MGA run.
#[derive(Clone, Debug)]
pub struct MgaState {
    pub method: MgaMethod,
    /// `(w_k, z_k)` for every completed iteration.
    pub history: Vec<(Vec<f64>, Vec<f64>)>,
    pub z_lower: Vec<f64>,
    /// Maximum attainable value per coordinate (the z upper bounds).
    pub z_max: Vec<f64>,
    /// Σ indicator(z) over all recorded points.
    pub hsj_weights: Vec<f64>,
    /// Σ z / z_max over all recorded points.
    pub hsj_rel_weights: Vec<f64>,
    pub vmm_queue: VecDeque<(usize, f64)>,
    pub alpha: f64,
    pub beta: f64,
    pub spores_next: usize,
    /// Points known before the first iteration; they count towards the accumulators.
    pub seed_points: Vec<Vec<f64>>,
    rng: ChaCha8Rng,
}

impl MgaState {
    pub fn new(method: MgaMethod, z_lower: Vec<f64>, z_max: Vec<f64>, seed: u64) -> Self {
        let n = z_max.len();
        let vmm_queue = (0..n).flat_map(|j| [(j, 1.0), (j, -1.0)]).collect();
        Self {
            method,
            history: Vec::new(),
            z_lower,
            hsj_weights: vec![0.0; n],
            hsj_rel_weights: vec![0.0; n],
            z_max,
            vmm_queue,
            alpha: SPORES_ALPHA,
            beta: SPORES_BETA,
            spores_next: 0,
            seed_points: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn dim(&self) -> usize {
        self.z_max.len()
    }

    fn accumulate(&mut self, z: &[f64]) {
        for j in 0..self.dim() {
            if z[j].abs() > 1e-6 * self.z_max[j].abs() {
                self.hsj_weights[j] += 1.0;
            }
            if self.z_max[j] > 0.0 {
                self.hsj_rel_weights[j] += z[j] / self.z_max[j];
            }
        }
    }

    /// Registers a point found before the first iteration.
    pub fn add_seed_point(&mut self, z: Vec<f64>) {
        self.accumulate(&z);
        self.seed_points.push(z);
    }

    pub fn record(&mut self, w: Vec<f64>, z: Vec<f64>) {
        self.accumulate(&z);
        self.history.push((w, z));
    }

    fn stored_points(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.seed_points.iter().chain(self.history.iter().map(|(_, z)| z))
    }

    /// `w_k = w_{k−1} + 1[z_{k−1} ≠ 0]`.
    pub fn next_weight_hsj(&mut self) -> Vec<f64> {
        self.hsj_weights.clone()
    }

    /// `w_k = w_{k−1} + z_{k−1} / z_max`; coordinates with `z_max = 0` stay 0.
    pub fn next_weight_hsjrel(&mut self) -> Vec<f64> {
        self.hsj_rel_weights.clone()
    }

    /// Independent uniform draws in (−1, 1).
    pub fn next_weight_random(&mut self) -> Vec<f64> {
        (0..self.dim()).map(|_| self.rng.gen_range(-1.0..1.0)).collect()
    }

    /// `+e_j` (minimize z_j), then `−e_j`, for each j in order, skipping directions whose bound
    /// a stored point already attains; random weights once the queue is exhausted.
    pub fn next_weight_vmm(&mut self) -> Vec<f64> {
        while let Some((j, sign)) = self.vmm_queue.pop_front() {
            let range = (self.z_max[j] - self.z_lower[j]).abs().max(1.0);
            let target = if sign > 0.0 { self.z_lower[j] } else { self.z_max[j] };
            let attained = self.stored_points().any(|z| (z[j] - target).abs() <= 1e-6 * range);
            if attained {
                continue;
            }
            let mut w = vec![0.0; self.dim()];
            w[j] = sign;
            return w;
        }
        self.next_weight_random()
    }

    /// A uniformly drawn number k ∈ {1..n} of distinct coordinates get ±1, the rest 0.
    pub fn next_weight_erg(&mut self) -> Vec<f64> {
        let n = self.dim();
        let k = self.rng.gen_range(1..=n);
        let mut w = vec![0.0; n];
        for j in sample(&mut self.rng, n, k).into_iter() {
            w[j] = if self.rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        }
        w
    }

    /// `α · w_hsjrel + β · e_j`, with j cycling through the coordinates.
    pub fn next_weight_spores(&mut self) -> Vec<f64> {
        let j = self.spores_next;
        self.spores_next = (j + 1) % self.dim();
        let mut w: Vec<f64> = self.hsj_rel_weights.iter().map(|v| self.alpha * v).collect();
        w[j] += self.beta;
        w
    }

    pub fn next_weight(&mut self) -> Vec<f64> {
        match self.method {
            MgaMethod::Hsj => self.next_weight_hsj(),
            MgaMethod::HsjRel => self.next_weight_hsjrel(),
            MgaMethod::Random => self.next_weight_random(),
            MgaMethod::Vmm => self.next_weight_vmm(),
            MgaMethod::Erg => self.next_weight_erg(),
            MgaMethod::Spores => self.next_weight_spores(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct MgaStep {
    pub z: Vec<f64>,
    pub x: Vec<f64>,
    /// The weight was zero, so `z` is an arbitrary near-optimal point.
    pub degenerate: bool,
}

/// `min wᵀ S x` over the budgeted model.
pub fn mga_step(problem: &ExplorationProblem, w: &[f64], gw: &Gateway) -> Result<MgaStep> {
    if w.len() != problem.n_z() {
        return Err(Error::Dimension {
            expected: problem.n_z(),
            got: w.len(),
        });
    }
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("weights must be finite".into()));
    }
    let (mut p, emb) = problem.budgeted_program();
    for (row, &wj) in problem.spec.projection.rows.iter().zip(w) {
        p.add_model_cost(&emb, row, wj);
    }
    let sol = gw.solve_program(&p, None)?;
    match sol.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => return Err(Error::Infeasible),
        LpStatus::Unbounded => return Err(Error::UnboundedRegion),
    }
    let x = emb.x(&sol.primal).to_vec();
    Ok(MgaStep {
        z: problem.project(&x),
        x,
        degenerate: w.iter().all(|v| *v == 0.0),
    })
}

#[derive(Clone, Debug)]
pub struct MgaOptions {
    pub iterations: usize,
    pub seed: u64,
    /// Measure the max-min distance every this many iterations (0 = never). The first and
    /// last rows are always measured when enabled.
    pub measure_every: usize,
    pub milp: MilpOptions,
    /// Stop once a measured distance is within this.
    pub tol: Option<f64>,
    pub record_timings: bool,
    pub alpha: f64,
    pub beta: f64,
    pub known_points: Vec<Vec<f64>>,
}

impl MgaOptions {
    pub fn new(iterations: usize, seed: u64) -> Self {
        Self {
            iterations,
            seed,
            measure_every: 1,
            milp: MilpOptions::default(),
            tol: None,
            record_timings: true,
            alpha: SPORES_ALPHA,
            beta: SPORES_BETA,
            known_points: Vec::new(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct MgaRun {
    pub result: ExplorationResult,
    pub state: MgaState,
    /// Iterations whose weight was zero.
    pub degenerate: Vec<usize>,
}

/// Runs `iterations` MGA solves from the Step-1 regions. Row `k` of the trace is measured after
/// `k` iterations.
pub fn run_mga(problem: &ExplorationProblem, method: MgaMethod, opts: &MgaOptions, gw: &Gateway) -> Result<MgaRun> {
    if opts.iterations == 0 {
        return Err(Error::InvalidArgument("iterations must be at least 1".into()));
    }
    let (mut inner, mut outer) = init_regions(problem, &opts.known_points, gw)?;
    let mut state = MgaState::new(method, problem.z_lower.clone(), problem.z_upper.clone(), opts.seed);
    state.alpha = opts.alpha;
    state.beta = opts.beta;
    for p in &inner.points {
        state.add_seed_point(p.z.clone());
    }
    let mut clock = Clock::new(opts.record_timings);
    let mut cum = 0.0;
    let mut trace = Vec::new();
    let mut cuts = Vec::new();
    let mut degenerate = Vec::new();
    let mut converged = false;

    for iter in 0..=opts.iterations {
        clock.lap();
        let measure = opts.measure_every > 0 && (iter % opts.measure_every == 0 || iter == opts.iterations);
        let (d_io, bound, trial) = if measure {
            let t = furthest_point(&outer, &inner, &opts.milp, gw)?;
            (Some(t.d_io), Some(t.bound), Some(t.z_trial))
        } else {
            (None, None, None)
        };
        let t2 = clock.lap();
        let mut record = IterationRecord {
            iter,
            method: method.name().to_string(),
            d_io,
            bound,
            trial_feasible: None,
            cuts_added: 0,
            inner_m: inner.len(),
            outer_k: outer.halfspaces.len(),
            t_step2_ms: t2,
            t_step3_ms: 0.0,
            t_step4_ms: 0.0,
            cum_ms: 0.0,
            trial,
        };
        if let (Some(tol), Some(d)) = (opts.tol, d_io) {
            converged = d <= tol;
        }
        if converged || iter == opts.iterations {
            cum += t2;
            record.cum_ms = cum;
            trace.push(record);
            break;
        }

        let w = state.next_weight();
        let step = mga_step(problem, &w, gw)?;
        let t3 = clock.lap();
        if step.degenerate {
            log::warn!("{method} iteration {iter}: zero weight vector");
            degenerate.push(iter);
        }
        inner.add_point(
            step.z.clone(),
            PointOrigin::Mga {
                method: method.name().to_string(),
                iteration: iter,
            },
            gw,
        )?;
        if !step.degenerate {
            let normal: Vec<f64> = w.iter().map(|v| -v).collect();
            let offset: f64 = normal.iter().zip(&step.z).map(|(a, b)| a * b).sum();
            if let Ok(h) = Halfspace::new(normal, offset, Provenance::Support) {
                let accepted = outer.add_halfspace(h.clone(), &inner)?;
                record.cuts_added += accepted as usize;
                cuts.push(CutRecord {
                    iteration: iter,
                    kind: Provenance::Support,
                    trial: None,
                    anchor: step.z.clone(),
                    separation: None,
                    halfspace: h,
                    accepted,
                });
            }
        }
        state.record(w, step.z);
        let t4 = clock.lap();
        record.t_step3_ms = t3;
        record.t_step4_ms = t4;
        cum += t2 + t3 + t4;
        record.cum_ms = cum;
        trace.push(record);
    }

    let last_measured = trace.iter().rev().find(|r| r.d_io.is_some());
    let result = ExplorationResult {
        method: method.name().to_string(),
        final_d: last_measured.and_then(|r| r.d_io),
        final_bound: last_measured.and_then(|r| r.bound),
        inner,
        outer,
        trace,
        cuts,
        converged,
    };
    Ok(MgaRun {
        result,
        state,
        degenerate,
    })
}
