//! Small deterministic models used by tests, examples and the CLI.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::exploration::{ExplorationSpec, Projection};
use crate::model::LinearProgram;

/// Greenfield capacity expansion: pick capacities `cap_t`, dispatch `gen_t_p` to meet demand in
/// every period, paying investment plus variable cost. Same seed, same model.
pub fn generate_toy_model(seed: u64, n_tech: usize, n_periods: usize) -> Result<LinearProgram> {
    if n_tech < 2 || n_periods < 1 {
        return Err(Error::InvalidArgument(format!(
            "toy model needs n_tech ≥ 2 and n_periods ≥ 1, got {n_tech} and {n_periods}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lp = LinearProgram::new(format!("toy-{seed}-{n_tech}-{n_periods}"));

    let cap_max: Vec<f64> = (0..n_tech).map(|_| round3(rng.gen_range(50.0..100.0))).collect();
    let invest: Vec<f64> = (0..n_tech).map(|_| round3(rng.gen_range(5.0..20.0))).collect();
    let variable: Vec<f64> = (0..n_tech).map(|_| round3(rng.gen_range(1.0..10.0))).collect();
    let avail: Vec<Vec<f64>> = (0..n_tech)
        .map(|_| (0..n_periods).map(|_| round3(rng.gen_range(0.3..1.0))).collect())
        .collect();
    let demand: Vec<f64> = (0..n_periods)
        .map(|p| {
            let firm: f64 = (0..n_tech).map(|t| avail[t][p] * cap_max[t]).sum();
            round3(rng.gen_range(0.3..0.6) * firm)
        })
        .collect();

    let caps: Vec<usize> = (0..n_tech)
        .map(|t| lp.add_variable(format!("cap_{t}"), 0.0, cap_max[t]))
        .collect();
    let gens: Vec<Vec<usize>> = (0..n_tech)
        .map(|t| {
            (0..n_periods)
                .map(|p| lp.add_variable(format!("gen_{t}_{p}"), 0.0, cap_max[t]))
                .collect()
        })
        .collect();
    for t in 0..n_tech {
        lp.set_cost(caps[t], invest[t]);
        for p in 0..n_periods {
            lp.set_cost(gens[t][p], variable[t]);
        }
    }
    for t in 0..n_tech {
        for p in 0..n_periods {
            lp.add_le(
                format!("avail_{t}_{p}"),
                &[(gens[t][p], 1.0), (caps[t], -avail[t][p])],
                0.0,
            );
        }
    }
    for p in 0..n_periods {
        let coeffs: Vec<_> = (0..n_tech).map(|t| (gens[t][p], 1.0)).collect();
        lp.add_eq(format!("demand_{p}"), &coeffs, demand[p]);
    }
    Ok(lp)
}

fn round3(v: f64) -> f64 {
    (v * 1000.0).round() / 1000.0
}

/// Exploration of the first `n_explore` capacities with tolerance `tol_fraction` of the widest
/// capacity range.
pub fn toy_spec(model: &LinearProgram, n_explore: usize, epsilon: f64, tol_fraction: f64) -> Result<ExplorationSpec> {
    let names: Vec<String> = (0..n_explore).map(|t| format!("cap_{t}")).collect();
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let projection = Projection::unit(model, &refs)?;
    let range = projection
        .rows
        .iter()
        .map(|r| {
            let v = &model.variables[r[0].0];
            v.upper - v.lower
        })
        .fold(0.0, f64::max);
    Ok(ExplorationSpec::new(projection, epsilon, tol_fraction * range))
}

/// `min x1 + x2  s.t.  x1 + x2 ≥ 1, x ∈ [0,1]²`.
pub fn tri_model() -> LinearProgram {
    let mut lp = LinearProgram::new("tri");
    let a = lp.add_variable("x1", 0.0, 1.0);
    let b = lp.add_variable("x2", 0.0, 1.0);
    lp.set_cost(a, 1.0);
    lp.set_cost(b, 1.0);
    lp.add_ge("cover", &[(a, 1.0), (b, 1.0)], 1.0);
    lp
}

/// Both variables explored with ε = 0.5.
pub fn tri_spec(model: &LinearProgram, tolerance: f64) -> ExplorationSpec {
    let projection = Projection::unit(model, &["x1", "x2"]).expect("tri variables");
    ExplorationSpec::new(projection, 0.5, tolerance)
}
