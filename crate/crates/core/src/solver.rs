//! ADMM max-flow/min-cut inference.
//!
//! Each iteration performs four substeps in order — spatial flow, source flow,
//! sink flow, multiplier — with every substep reading the fields produced by
//! the previous one. Capacity projections keep the iterate feasible after
//! every substep. The multiplier λ is unclamped during iterations and clamped
//! into [0,1] on output only.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use crate::field::{
    divergence, gradient, project_scalar_capacity, project_vector_capacity, GridDomain,
    ScalarField, TvMode, VectorField,
};
use crate::levelset;
use crate::losses;

/// The (C_s, C_t, C_g) triple driving one max-flow problem. All three fields
/// must be nonnegative, finite and share one domain.
#[derive(Clone, Debug)]
pub struct CapacityMaps {
    pub c_source: ScalarField,
    pub c_sink: ScalarField,
    pub c_edge: ScalarField,
}

impl CapacityMaps {
    pub fn new(c_source: ScalarField, c_sink: ScalarField, c_edge: ScalarField) -> Result<Self> {
        let maps = Self {
            c_source,
            c_sink,
            c_edge,
        };
        maps.validate()?;
        Ok(maps)
    }

    pub fn domain(&self) -> GridDomain {
        self.c_source.domain()
    }

    pub fn validate(&self) -> Result<()> {
        if self.c_sink.domain() != self.c_source.domain()
            || self.c_edge.domain() != self.c_source.domain()
        {
            return Err(Error::DomainMismatch(
                "capacity maps must share one grid".into(),
            ));
        }
        for (name, f) in [
            ("c_source", &self.c_source),
            ("c_sink", &self.c_sink),
            ("c_edge", &self.c_edge),
        ] {
            if !f.is_finite() {
                return Err(Error::InvalidCapacity(format!("{name} has non-finite values")));
            }
            if f.min_value() < 0.0 {
                return Err(Error::InvalidCapacity(format!("{name} has negative values")));
            }
        }
        Ok(())
    }
}

/// Solver hyperparameters. Defaults are the published constants: descent rate
/// α = 0.16, penalty c = 0.3 and 15 iterations, thresholded downstream at 0.5.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Ascent/descent rate α shared by all four substeps.
    pub step_size: f64,
    /// Augmented-Lagrangian penalty c.
    pub penalty: f64,
    /// Fixed iteration count N_t.
    pub iterations: usize,
    pub tv_mode: TvMode,
    /// Clamp λ into [0,1] after the final iteration.
    pub clamp_lambda_final: bool,
    /// Record a λ snapshot and the thresholded energy per iteration.
    pub record_trajectory: bool,
    /// Optional residual-based early exit; `None` runs the fixed count.
    pub early_stop_tol: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            step_size: 0.16,
            penalty: 0.3,
            iterations: 15,
            tv_mode: TvMode::Isotropic,
            clamp_lambda_final: true,
            record_trajectory: false,
            early_stop_tol: None,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0) || !(self.penalty > 0.0) || self.iterations == 0 {
            return Err(Error::Config(
                "solver requires step_size > 0, penalty > 0, iterations >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// The primal-dual iterate: source flow, sink flow, spatial flow and the
/// multiplier λ.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowState {
    pub p_source: ScalarField,
    pub p_sink: ScalarField,
    pub p_spatial: VectorField,
    pub lambda: ScalarField,
}

impl FlowState {
    pub fn domain(&self) -> GridDomain {
        self.lambda.domain()
    }
}

/// Solve output with per-iteration diagnostics.
#[derive(Clone, Debug)]
pub struct SolverResult {
    pub final_state: FlowState,
    /// L2 norm of `div p − p_s + p_t` after each iteration.
    pub residual_norms: Vec<f64>,
    /// Binary energy of the λ ≥ 0.5 mask after each iteration, when recorded.
    pub energy_trace: Option<Vec<f64>>,
    /// λ snapshot after each iteration, when recorded.
    pub trajectory: Option<Vec<ScalarField>>,
}

/// Flows start at `p_s = p_t = min(C_s, C_t)`, `p = 0`, `λ = 0.5`, so the
/// conservation residual is zero at iteration 0.
pub fn initialize(caps: &CapacityMaps) -> FlowState {
    let p = caps.c_source.zip_map(&caps.c_sink, f64::min);
    FlowState {
        p_source: p.clone(),
        p_sink: p,
        p_spatial: VectorField::zeros(caps.domain()),
        lambda: ScalarField::constant(caps.domain(), 0.5),
    }
}

/// One full ADMM iteration (four substeps, sequential reads).
pub fn step(state: &FlowState, caps: &CapacityMaps, cfg: &SolverConfig) -> FlowState {
    let alpha = cfg.step_size;
    let c = cfg.penalty;

    // (1) spatial flow: ascent on −(c/2)|div p − p_s + p_t|² + ⟨λ, div p⟩.
    let inner = divergence(&state.p_spatial)
        .zip_map(&state.p_source, |d, ps| d - ps)
        .zip_map(&state.p_sink, |v, pt| v + pt)
        .zip_map(&state.lambda, |v, l| v - l / c);
    let ascent = gradient(&inner);
    let p_spatial = {
        let trial = VectorField::new(
            state
                .p_spatial
                .x()
                .zip_map(ascent.x(), |p, g| p + alpha * g),
            state
                .p_spatial
                .y()
                .zip_map(ascent.y(), |p, g| p + alpha * g),
        );
        project_vector_capacity(&trial, &caps.c_edge, cfg.tv_mode)
    };
    let div_p = divergence(&p_spatial);

    // (2) source flow.
    let p_source = {
        let mut trial = state.p_source.clone();
        for i in 0..trial.values().len() {
            let dir = div_p.values()[i] + state.p_sink.values()[i] - state.p_source.values()[i]
                - (state.lambda.values()[i] - 1.0) / c;
            trial.values_mut()[i] += alpha * dir;
        }
        project_scalar_capacity(&trial, &caps.c_source)
    };

    // (3) sink flow.
    let p_sink = {
        let mut trial = state.p_sink.clone();
        for i in 0..trial.values().len() {
            let dir = -div_p.values()[i] - state.p_sink.values()[i] + p_source.values()[i]
                + state.lambda.values()[i] / c;
            trial.values_mut()[i] += alpha * dir;
        }
        project_scalar_capacity(&trial, &caps.c_sink)
    };

    // (4) multiplier, no clamping during iterations.
    let lambda = {
        let mut l = state.lambda.clone();
        for i in 0..l.values().len() {
            let r = div_p.values()[i] - p_source.values()[i] + p_sink.values()[i];
            l.values_mut()[i] -= alpha * r;
        }
        l
    };

    FlowState {
        p_source,
        p_sink,
        p_spatial,
        lambda,
    }
}

/// The flow-conservation residual `div p − p_s + p_t`.
pub fn residual_field(state: &FlowState) -> ScalarField {
    divergence(&state.p_spatial)
        .zip_map(&state.p_source, |d, ps| d - ps)
        .zip_map(&state.p_sink, |v, pt| v + pt)
}

/// L2 norm of the conservation residual.
pub fn residual_norm(state: &FlowState) -> f64 {
    residual_field(state).norm_l2()
}

/// Run the configured number of iterations from the standard initialization,
/// recording the residual norm per iteration.
pub fn solve(caps: &CapacityMaps, cfg: &SolverConfig) -> Result<SolverResult> {
    caps.validate()?;
    cfg.validate()?;

    let mut state = initialize(caps);
    let mut residual_norms = Vec::with_capacity(cfg.iterations);
    let mut energy_trace = cfg.record_trajectory.then(Vec::new);
    let mut trajectory = cfg.record_trajectory.then(Vec::new);

    for _ in 0..cfg.iterations {
        state = step(&state, caps, cfg);
        let res = residual_norm(&state);
        residual_norms.push(res);
        if let Some(trace) = energy_trace.as_mut() {
            let mask = levelset::threshold(&clamp_unit(&state.lambda), 0.5);
            trace.push(losses::energy(&mask, caps, cfg.tv_mode)?);
        }
        if let Some(traj) = trajectory.as_mut() {
            traj.push(state.lambda.clone());
        }
        if let Some(tol) = cfg.early_stop_tol {
            if res <= tol {
                break;
            }
        }
    }

    if cfg.clamp_lambda_final {
        state.lambda = clamp_unit(&state.lambda);
    }

    Ok(SolverResult {
        final_state: state,
        residual_norms,
        energy_trace,
        trajectory,
    })
}

fn clamp_unit(f: &ScalarField) -> ScalarField {
    f.map(|v| v.clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn uniform_caps(domain: GridDomain, s: f64, t: f64, g: f64) -> CapacityMaps {
        CapacityMaps::new(
            ScalarField::constant(domain, s),
            ScalarField::constant(domain, t),
            ScalarField::constant(domain, g),
        )
        .unwrap()
    }

    fn feasible(state: &FlowState, caps: &CapacityMaps, mode: TvMode) -> bool {
        let n = caps.domain().len();
        let mags = state.p_spatial.dual_magnitude(mode);
        (0..n).all(|i| {
            state.p_source.values()[i] <= caps.c_source.values()[i] + 1e-9
                && state.p_sink.values()[i] <= caps.c_sink.values()[i] + 1e-9
                && mags.values()[i] <= caps.c_edge.values()[i] + 1e-9
        })
    }

    #[test]
    fn initialize_balances_flows() {
        let d = GridDomain::new(3, 3);
        let caps = uniform_caps(d, 1.0, 2.0, 1.0);
        let state = initialize(&caps);
        assert!(state.p_source.values().iter().all(|&v| v == 1.0));
        assert!(state.p_sink.values().iter().all(|&v| v == 1.0));
        assert_eq!(residual_norm(&state), 0.0);
        assert!(feasible(&state, &caps, TvMode::Isotropic));
    }

    #[test]
    fn initialize_is_deterministic() {
        let d = GridDomain::new(4, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mk = |rng: &mut ChaCha8Rng| {
            CapacityMaps::new(
                ScalarField::from_fn(d, |_, _| rng.gen_range(0.0..1.0)),
                ScalarField::from_fn(d, |_, _| rng.gen_range(0.0..1.0)),
                ScalarField::from_fn(d, |_, _| rng.gen_range(0.0..1.0)),
            )
            .unwrap()
        };
        let caps = mk(&mut rng);
        assert_eq!(initialize(&caps), initialize(&caps));
    }

    #[test]
    fn source_only_caps_drive_lambda_to_one() {
        let d = GridDomain::new(8, 8);
        let caps = uniform_caps(d, 1.0, 0.0, 1.0);
        let cfg = SolverConfig::default();
        let mut state = initialize(&caps);
        for _ in 0..200 {
            state = step(&state, &caps, &cfg);
        }
        assert!(state.lambda.values().iter().all(|&l| l >= 0.95));
    }

    #[test]
    fn sink_only_caps_drive_lambda_to_zero() {
        let d = GridDomain::new(8, 8);
        let caps = uniform_caps(d, 0.0, 1.0, 1.0);
        let cfg = SolverConfig::default();
        let mut state = initialize(&caps);
        for _ in 0..200 {
            state = step(&state, &caps, &cfg);
        }
        assert!(state.lambda.values().iter().all(|&l| l <= 0.05));
    }

    #[test]
    fn steps_preserve_feasibility() {
        let d = GridDomain::new(6, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for mode in [TvMode::Isotropic, TvMode::Anisotropic] {
            let caps = CapacityMaps::new(
                ScalarField::from_fn(d, |_, _| rng.gen_range(0.0..1.0)),
                ScalarField::from_fn(d, |_, _| rng.gen_range(0.0..1.0)),
                ScalarField::from_fn(d, |_, _| rng.gen_range(0.0..1.0)),
            )
            .unwrap();
            let cfg = SolverConfig {
                tv_mode: mode,
                ..Default::default()
            };
            let mut state = initialize(&caps);
            for _ in 0..50 {
                state = step(&state, &caps, &cfg);
                assert!(feasible(&state, &caps, mode));
            }
        }
    }

    #[test]
    fn zero_data_caps_are_a_fixed_point() {
        let d = GridDomain::new(5, 5);
        let caps = uniform_caps(d, 0.0, 0.0, 1.0);
        let result = solve(&caps, &SolverConfig::default()).unwrap();
        assert!(result
            .final_state
            .lambda
            .values()
            .iter()
            .all(|&l| l == 0.5));
        assert!(result.residual_norms.iter().all(|&r| r == 0.0));
    }

    #[test]
    fn solve_rejects_negative_caps() {
        let d = GridDomain::new(2, 2);
        let caps = CapacityMaps {
            c_source: ScalarField::constant(d, -0.1),
            c_sink: ScalarField::constant(d, 1.0),
            c_edge: ScalarField::constant(d, 1.0),
        };
        assert!(matches!(
            solve(&caps, &SolverConfig::default()),
            Err(Error::InvalidCapacity(_))
        ));
    }

    #[test]
    fn solve_rejects_mismatched_domains() {
        let caps = CapacityMaps {
            c_source: ScalarField::constant(GridDomain::new(2, 2), 1.0),
            c_sink: ScalarField::constant(GridDomain::new(3, 2), 1.0),
            c_edge: ScalarField::constant(GridDomain::new(2, 2), 1.0),
        };
        assert!(matches!(
            solve(&caps, &SolverConfig::default()),
            Err(Error::DomainMismatch(_))
        ));
    }

    #[test]
    fn residual_norm_of_shifted_source_is_sqrt_n() {
        let d = GridDomain::new(4, 5);
        let caps = uniform_caps(d, 1.0, 2.0, 1.0);
        let mut state = initialize(&caps);
        state.p_source = state.p_source.map(|v| v + 1.0);
        let expected = (d.len() as f64).sqrt();
        assert!((residual_norm(&state) - expected).abs() < 1e-12);
    }

    #[test]
    fn solve_is_bit_deterministic() {
        let d = GridDomain::new(8, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let caps = CapacityMaps::new(
            ScalarField::from_fn(d, |_, _| rng.gen_range(0.0..1.0)),
            ScalarField::from_fn(d, |_, _| rng.gen_range(0.0..1.0)),
            ScalarField::from_fn(d, |_, _| rng.gen_range(0.0..1.0)),
        )
        .unwrap();
        let cfg = SolverConfig {
            iterations: 40,
            ..Default::default()
        };
        let a = solve(&caps, &cfg).unwrap();
        let b = solve(&caps, &cfg).unwrap();
        assert_eq!(a.final_state, b.final_state);
        assert_eq!(a.residual_norms, b.residual_norms);
    }

    #[test]
    fn residual_trace_has_one_entry_per_iteration() {
        let d = GridDomain::new(4, 4);
        let caps = uniform_caps(d, 0.4, 0.7, 0.2);
        let cfg = SolverConfig {
            iterations: 9,
            record_trajectory: true,
            ..Default::default()
        };
        let result = solve(&caps, &cfg).unwrap();
        assert_eq!(result.residual_norms.len(), 9);
        assert_eq!(result.energy_trace.as_ref().unwrap().len(), 9);
        assert_eq!(result.trajectory.as_ref().unwrap().len(), 9);
    }
}
