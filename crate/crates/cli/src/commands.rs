use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use nearopt::exploration::optimal_value;
use nearopt::sampler::{exact_milp_options, outer_vertices};
use nearopt::toy::toy_spec;
use nearopt::{
    diverse_set, generate_toy_model, hit_and_run, metrics_for_trace, parse_model, read_trace_csv, run_mga,
    run_oracle, write_metrics_csv, write_trace_csv, CostCut, ExplorationProblem, ExplorationResult, ExplorationSpec,
    Gateway, HitAndRunOptions, InnerApprox, IterationRecord, MetricsOptions, MetricsRecord, MgaMethod, MgaOptions,
    MilpOptions, OracleOptions, OuterApprox, SampleTarget,
};
use serde::Serialize;
use serde_json::json;

use crate::{
    CompareArgs, ExploreArgs, MetricsArgs, RunArgs, SampleArgs, SampleMode, SolveArgs, TargetArg, ToyArgs,
    EXIT_NOT_CONVERGED,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Method {
    Oracle,
    Mga(MgaMethod),
}

impl Method {
    fn parse(name: &str) -> Result<Self> {
        if name.eq_ignore_ascii_case("oracle") {
            return Ok(Method::Oracle);
        }
        match name.parse::<MgaMethod>() {
            Ok(m) => Ok(Method::Mga(m)),
            Err(_) => bail!(
                "unknown method `{name}` (expected oracle, {})",
                MgaMethod::ALL.map(|m| m.name()).join(", ")
            ),
        }
    }

    fn name(self) -> &'static str {
        match self {
            Method::Oracle => "oracle",
            Method::Mga(m) => m.name(),
        }
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn open(path: &Path) -> Result<File> {
    File::open(path).with_context(|| format!("opening {}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

/// A file when given, stdout otherwise.
fn output(path: Option<&PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(io::stdout().lock()),
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn milp_options(run: &RunArgs) -> MilpOptions {
    MilpOptions {
        rel_gap: run.rel_gap,
        abs_gap: run.abs_gap,
        time_limit_s: run.time_limit,
        pool_size: run.pool_size,
    }
}

fn load_problem(model: &Path, spec: &Path, tol: Option<f64>, no_cost_cut: bool, gw: &Gateway) -> Result<ExplorationProblem> {
    let lp = parse_model(&read_text(model)?).with_context(|| format!("parsing {}", model.display()))?;
    let mut spec =
        ExplorationSpec::from_json_str(&read_text(spec)?, &lp).with_context(|| format!("parsing {}", spec.display()))?;
    if let Some(t) = tol {
        spec.tolerance = t;
    }
    if no_cost_cut {
        spec.cost_cut = CostCut::Off;
    }
    Ok(ExplorationProblem::solve(lp, spec, gw)?)
}

fn manifest<A: Serialize>(command: &str, args: &A, problem: &ExplorationProblem, gw: &Gateway) -> Result<serde_json::Value> {
    let spec: serde_json::Value = serde_json::from_str(&problem.spec.to_json_string(&problem.model)?)?;
    Ok(json!({
        "tool": "nearopt",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "args": args,
        "model": problem.model.name,
        "spec": spec,
        "solver": gw,
        "solver_env": std::env::var(nearopt::solver::SOLVER_ENV).ok(),
        "v_star": problem.v_star,
        "budget": problem.budget,
        "z_lower": problem.z_lower,
        "z_upper": problem.z_upper,
    }))
}

struct Outcome {
    method: Method,
    result: ExplorationResult,
    degenerate: Vec<usize>,
}

fn run_method(method: Method, problem: &ExplorationProblem, run: &RunArgs, gw: &Gateway) -> Result<Outcome> {
    let milp = milp_options(run);
    Ok(match method {
        Method::Oracle => {
            let opts = OracleOptions {
                max_iter: run.max_iter.unwrap_or(300),
                milp,
                value_cut: !run.no_value_cut,
                exact_metric_every: run.exact_metric_every,
                seed: run.seed,
                record_timings: !run.no_timings,
                ..OracleOptions::new(problem.spec.tolerance)
            };
            Outcome { method, result: run_oracle(problem, &opts, gw)?, degenerate: Vec::new() }
        }
        Method::Mga(m) => {
            let mut opts = MgaOptions::new(run.max_iter.unwrap_or(200), run.seed);
            opts.measure_every = run.measure_every;
            opts.milp = milp;
            opts.tol = Some(problem.spec.tolerance);
            opts.record_timings = !run.no_timings;
            let out = run_mga(problem, m, &opts, gw)?;
            Outcome { method, result: out.result, degenerate: out.degenerate }
        }
    })
}

fn summary(problem: &ExplorationProblem, outcome: &Outcome) -> serde_json::Value {
    let r = &outcome.result;
    json!({
        "method": r.method,
        "converged": r.converged,
        "certified": outcome.method == Method::Oracle && r.converged,
        "final_d_io": r.final_d,
        "final_bound": r.final_bound,
        "tolerance": problem.spec.tolerance,
        "iterations": r.trace.len().saturating_sub(1),
        "inner_points": r.inner.len(),
        "halfspaces": r.outer.halfspaces.len(),
        "v_star": problem.v_star,
        "budget": problem.budget,
        "z_names": problem.z_names(),
        "degenerate_iterations": outcome.degenerate,
    })
}

fn write_run_outputs(dir: &Path, problem: &ExplorationProblem, outcome: &Outcome) -> Result<()> {
    let r = &outcome.result;
    write_trace_csv(&r.trace, create(&dir.join("trace.csv"))?)?;
    r.inner.write_csv(create(&dir.join("points.csv"))?)?;
    r.outer.write_csv(problem.z_names(), create(&dir.join("halfspaces.csv"))?)?;
    write_json(&dir.join("summary.json"), &summary(problem, outcome))
}

fn report(outcome: &Outcome) {
    let r = &outcome.result;
    let d = r.final_d.map_or("n/a".to_string(), |d| format!("{d:.6e}"));
    println!(
        "{}: {} after {} iterations, d_IO = {d}, {} points, {} halfspaces",
        r.method,
        if r.converged { "converged" } else { "not converged" },
        r.trace.len().saturating_sub(1),
        r.inner.len(),
        r.outer.halfspaces.len()
    );
}

pub fn solve(a: &SolveArgs) -> Result<u8> {
    let lp = parse_model(&read_text(&a.model)?).with_context(|| format!("parsing {}", a.model.display()))?;
    let gw = Gateway::from_env(a.seed)?;
    let (v, x) = optimal_value(&lp, &gw)?;
    let path = a.out_dir.join("x_star.csv");
    let mut w = csv::Writer::from_writer(create(&path)?);
    w.write_record(["variable", "value"])?;
    for (var, value) in lp.variables.iter().zip(&x) {
        w.write_record([var.name.clone(), value.to_string()])?;
    }
    w.flush()?;
    println!("optimal value {v}");
    Ok(0)
}

pub fn explore(a: &ExploreArgs) -> Result<u8> {
    let method = Method::parse(&a.method)?;
    let gw = Gateway::from_env(a.run.seed)?;
    let problem = load_problem(&a.run.model, &a.run.spec, a.run.tol, a.run.no_cost_cut, &gw)?;
    fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    write_json(&a.out_dir.join("manifest.json"), &manifest("explore", a, &problem, &gw)?)?;
    let outcome = run_method(method, &problem, &a.run, &gw)?;
    write_run_outputs(&a.out_dir, &problem, &outcome)?;
    report(&outcome);
    Ok(if method == Method::Oracle && !outcome.result.converged { EXIT_NOT_CONVERGED } else { 0 })
}

fn read_regions(points: &Path, halfspaces: &Path) -> Result<(InnerApprox, OuterApprox)> {
    let inner = InnerApprox::read_csv(open(points)?).with_context(|| format!("reading {}", points.display()))?;
    let (names, outer) = read_outer(halfspaces)?;
    ensure!(
        names == inner.names,
        "{} has columns {:?} but {} has {:?}",
        points.display(),
        inner.names,
        halfspaces.display(),
        names
    );
    Ok((inner, outer))
}

fn read_outer(path: &Path) -> Result<(Vec<String>, OuterApprox)> {
    OuterApprox::read_csv(open(path)?).with_context(|| format!("reading {}", path.display()))
}

fn metrics_options(rel_gap: f64, abs_gap: f64, mc_samples: usize, seed: u64, volumes: bool) -> MetricsOptions {
    MetricsOptions {
        milp: MilpOptions { rel_gap, abs_gap, ..MilpOptions::default() },
        mc_samples,
        seed,
        volumes,
    }
}

pub fn metrics(a: &MetricsArgs) -> Result<u8> {
    let (inner, outer) = read_regions(&a.points, &a.halfspaces)?;
    let trace = match &a.trace {
        Some(path) => read_trace_csv(open(path)?).with_context(|| format!("reading {}", path.display()))?,
        None => vec![IterationRecord {
            iter: 0,
            method: "regions".into(),
            d_io: None,
            bound: None,
            trial_feasible: None,
            cuts_added: 0,
            inner_m: inner.len(),
            outer_k: outer.halfspaces.len(),
            t_step2_ms: 0.0,
            t_step3_ms: 0.0,
            t_step4_ms: 0.0,
            cum_ms: 0.0,
            trial: None,
        }],
    };
    for rec in &trace {
        ensure!(
            rec.inner_m <= inner.len() && rec.outer_k <= outer.halfspaces.len() && rec.inner_m > 0,
            "trace row {} refers to {} points and {} cuts, the region files hold {} and {}",
            rec.iter,
            rec.inner_m,
            rec.outer_k,
            inner.len(),
            outer.halfspaces.len()
        );
    }
    let reference = a.reference.as_deref().map(read_outer).transpose()?.map(|(_, o)| o);
    let result = ExplorationResult {
        method: trace.first().map(|r| r.method.clone()).unwrap_or_default(),
        inner,
        outer,
        trace,
        cuts: Vec::new(),
        converged: false,
        final_d: None,
        final_bound: None,
    };
    let gw = Gateway::from_env(a.seed)?;
    let opts = metrics_options(a.rel_gap, a.abs_gap, a.mc_samples, a.seed, !a.no_volumes);
    let rows = metrics_for_trace(&result, reference.as_ref(), &opts, &gw)?;
    write_metrics_csv(&rows, output(a.out.as_ref())?)?;
    Ok(0)
}

pub fn sample(a: &SampleArgs) -> Result<u8> {
    ensure!(a.k > 0, "--k must be at least 1");
    let gw = Gateway::from_env(a.seed)?;
    let inner = InnerApprox::read_csv(open(&a.points)?).with_context(|| format!("reading {}", a.points.display()))?;
    let outer = match &a.halfspaces {
        Some(p) => {
            let (names, o) = read_outer(p)?;
            ensure!(names == inner.names, "points and halfspaces have different columns");
            Some(o)
        }
        None => None,
    };
    let need_outer = || outer.as_ref().context("this mode needs --halfspaces");
    let batch = match a.mode {
        SampleMode::Hitrun => {
            let target = match a.target {
                TargetArg::Inner => SampleTarget::Inner,
                TargetArg::Outer => {
                    need_outer()?;
                    SampleTarget::Outer
                }
            };
            let opts = HitAndRunOptions {
                k: a.k,
                burn_in: a.burn_in,
                thin: a.thin,
                seed: a.seed,
                affine_span: a.affine_span,
                target,
            };
            hit_and_run(&inner, outer.as_ref(), &opts, &gw)?
        }
        SampleMode::Vertices => {
            let mut b = outer_vertices(need_outer()?, inner.names.clone())?;
            b.points.truncate(a.k);
            b
        }
        SampleMode::Diverse => {
            let outer = need_outer()?;
            let cloud: Vec<Vec<f64>> = match &a.cloud {
                Some(p) => InnerApprox::read_csv(open(p)?)?.points.into_iter().map(|p| p.z).collect(),
                None => inner.points.iter().map(|p| p.z.clone()).collect(),
            };
            let problem = match (&a.model, &a.spec) {
                (Some(m), Some(s)) => Some(load_problem(m, s, None, false, &gw)?),
                _ => None,
            };
            let mut batch = diverse_set(outer, a.k, &cloud, problem.as_ref(), inner.names.clone(), &exact_milp_options(), &gw)?;
            batch.seed = a.seed;
            if let Some(path) = &a.nearest_out {
                batch.write_nearest_csv(create(path)?)?;
            }
            batch
        }
    };
    batch.write_csv(output(a.out.as_ref())?)?;
    Ok(0)
}

pub fn compare(a: &CompareArgs) -> Result<u8> {
    let names: Vec<&str> = a.methods.iter().map(|m| m.trim()).filter(|m| !m.is_empty()).collect();
    if names.is_empty() {
        bail!("--methods needs at least one method");
    }
    let methods = names.iter().map(|n| Method::parse(n)).collect::<Result<Vec<_>>>()?;
    for (i, m) in methods.iter().enumerate() {
        ensure!(!methods[..i].contains(m), "method {} listed twice", m.name());
    }
    let gw = Gateway::from_env(a.run.seed)?;
    let problem = load_problem(&a.run.model, &a.run.spec, a.run.tol, a.run.no_cost_cut, &gw)?;
    fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    write_json(&a.out_dir.join("manifest.json"), &manifest("compare", a, &problem, &gw)?)?;

    // Independent problems: each method runs on its own thread with its own solver calls.
    let outcomes: Vec<Outcome> = std::thread::scope(|s| {
        let handles: Vec<_> = methods
            .iter()
            .map(|&m| {
                let (problem, gw) = (&problem, &gw);
                s.spawn(move || run_method(m, problem, &a.run, gw))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("method thread panicked"))
            .collect::<Result<Vec<_>>>()
    })?;

    let reference = outcomes.iter().find(|o| o.method == Method::Oracle).map(|o| {
        if !o.result.converged {
            log::warn!("ORACLE did not converge; its outer region is still used as the reference");
        }
        o.result.outer.clone()
    });
    let opts = metrics_options(a.run.rel_gap, a.run.abs_gap, a.mc_samples, a.run.seed, !a.no_volumes);
    let mut rows: Vec<MetricsRecord> = Vec::new();
    let mut summaries = serde_json::Map::new();
    for outcome in &outcomes {
        let dir = a.out_dir.join(outcome.method.name());
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        write_run_outputs(&dir, &problem, outcome)?;
        rows.extend(metrics_for_trace(&outcome.result, reference.as_ref(), &opts, &gw)?);
        summaries.insert(outcome.method.name().into(), summary(&problem, outcome));
        report(outcome);
    }
    write_metrics_csv(&rows, create(&a.out_dir.join("metrics.csv"))?)?;
    write_json(&a.out_dir.join("summary.json"), &summaries)?;
    Ok(0)
}

pub fn toy(a: &ToyArgs) -> Result<u8> {
    let model = generate_toy_model(a.seed, a.n_tech, a.n_periods)?;
    let mut w = create(&a.out)?;
    writeln!(w, "{}", model.to_json_string()?)?;
    w.flush()?;
    if let Some(path) = &a.spec_out {
        ensure!(a.explore >= 1 && a.explore <= a.n_tech, "--explore must be between 1 and --n-tech");
        let spec = toy_spec(&model, a.explore, a.epsilon, a.tol_fraction)?;
        let mut w = create(path)?;
        writeln!(w, "{}", spec.to_json_string(&model)?)?;
        w.flush()?;
    }
    println!("wrote {} ({} variables)", a.out.display(), model.n_vars());
    Ok(0)
}
