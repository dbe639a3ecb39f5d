//! Closed-loop scenario execution.
//!
//! Known-target runs quantize the target prior, solve the dynamic program,
//! then steer the carrier by coding the true target state onto the grid at
//! every step. Tracking runs split into two periods: filtering only (the
//! carrier flies its maneuver schedule while the UKF converges), then
//! repeated short-horizon quantize/solve/act cycles seeded by the filter
//! posterior, refreshed at every subinterval boundary.

pub mod config;
pub mod log;

use nalgebra::{Matrix4, Vector2, Vector3, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub use config::{
    CarrierConfig, CostConfig, DiagramConfig, Maneuver, QuantizationConfig, ScenarioConfig,
    ScenarioKind, TargetConfig,
};
pub use log::{compare_runs, CompareSummary, PeriodStats, RunStats, ScenarioLog, StepRecord};

use crate::dp::{self, Direction, Solution, TargetGeometry};
use crate::dynamics::{
    apply_action, join_models, Action, CarrierState, JointChain, TargetChain, TargetModel,
    TargetState,
};
use crate::error::{Error, Result};
use crate::quantize::{clvq_train, estimate_transitions, nearest, QuantizedChain};
use crate::tma::{measure, project_measurement, ukf_predict, ukf_update, UkfState};
use crate::util::derive_seed;

// Seed stream tags; the index distinguishes targets or subintervals.
const TAG_TRUTH: u64 = 0x54;
const TAG_MEAS: u64 = 0x4D;
const TAG_TRAIN: u64 = 0x43;
const TAG_EST: u64 = 0x45;

/// Dispatch on the configured scenario kind. `baseline` replaces every
/// optimized action by the zero action, leaving period-1 behavior untouched.
pub fn run_scenario(cfg: &ScenarioConfig, baseline: bool) -> Result<ScenarioLog> {
    if cfg.scenario_kind.is_known() {
        run_known_impl(cfg, baseline)
    } else {
        run_bot_impl(cfg, baseline)
    }
}

/// Known-target control loop.
pub fn run_known(cfg: &ScenarioConfig) -> Result<ScenarioLog> {
    if !cfg.scenario_kind.is_known() {
        return Err(Error::Config(format!(
            "run_known called on {:?}",
            cfg.scenario_kind
        )));
    }
    run_known_impl(cfg, false)
}

/// Bearings-only tracking loop with horizon splitting.
pub fn run_bot(cfg: &ScenarioConfig) -> Result<ScenarioLog> {
    if cfg.scenario_kind.is_known() {
        return Err(Error::Config(format!(
            "run_bot called on {:?}",
            cfg.scenario_kind
        )));
    }
    run_bot_impl(cfg, false)
}

/// True target trajectories, one per target, simulated over the full horizon
/// on dedicated seed streams.
fn simulate_truths(cfg: &ScenarioConfig) -> Vec<Vec<Vector4<f64>>> {
    let models = cfg.target_models();
    cfg.targets
        .iter()
        .zip(models)
        .enumerate()
        .map(|(k, (tc, model))| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, TAG_TRUTH, k as u64));
            let mut w = tc.true_initial_state();
            let mut out = Vec::with_capacity(cfg.total_steps + 1);
            out.push(w);
            for _ in 0..cfg.total_steps {
                w = model.step(&w, &model.sample_noise(&mut rng));
                out.push(w);
            }
            out
        })
        .collect()
}

fn scheduled_displacement(cfg: &ScenarioConfig, t: usize) -> Vector3<f64> {
    for m in &cfg.maneuver_schedule {
        if t >= m.start_step && t < m.start_step + m.duration_steps {
            return Vector3::from_column_slice(&m.displacement);
        }
    }
    Vector3::from_column_slice(&cfg.carrier.cruise_displacement)
}

/// Quantize one prior (single or joint) over `horizon` steps.
fn build_chain(
    models: &[TargetModel],
    cfg: &ScenarioConfig,
    horizon: usize,
    sub_index: u64,
    metric: &[f64],
) -> Result<QuantizedChain> {
    let params = cfg
        .quantization
        .clvq_params(horizon, derive_seed(cfg.seed, TAG_TRAIN, sub_index));
    let est_seed = derive_seed(cfg.seed, TAG_EST, sub_index);
    match models {
        [single] => {
            let sim = TargetChain::new(single);
            let grids = clvq_train(&sim, &params, metric, None)?;
            estimate_transitions(&sim, grids, metric, cfg.quantization.sample_runs, est_seed)
        }
        [a, b] => {
            let sim = JointChain::new(&join_models(a, b)?);
            let grids = clvq_train(&sim, &params, metric, None)?;
            estimate_transitions(&sim, grids, metric, cfg.quantization.sample_runs, est_seed)
        }
        _ => Err(Error::Config(format!(
            "unsupported target count {}",
            models.len()
        ))),
    }
}

/// Quantize the configured target prior over `horizon` steps — the offline
/// pipeline entry behind the `quantize` subcommand.
pub fn build_prior_chain(cfg: &ScenarioConfig, horizon: usize) -> Result<QuantizedChain> {
    cfg.validate()?;
    let metric = cfg.quantization.metric(4 * cfg.targets.len());
    build_chain(&cfg.target_models(), cfg, horizon, 0, &metric)
}

struct ActiveSub {
    t0: usize,
    h: usize,
    chain: QuantizedChain,
    sol: Solution,
    /// Carrier offset from the subinterval's start position.
    rel: [i32; 3],
}

impl ActiveSub {
    fn advance(&mut self, action: &Action) {
        for j in 0..3 {
            self.rel[j] += action.steps[j];
        }
    }

    fn pos_index(&self, t: usize) -> usize {
        self.sol.grid.layers[t - self.t0]
            .index_of(&self.rel)
            .expect("carrier stayed on its reachable lattice")
    }
}

fn geometries_at(cfg: &ScenarioConfig, truths: &[Vec<Vector4<f64>>], t: usize) -> Vec<TargetGeometry> {
    cfg.targets
        .iter()
        .enumerate()
        .map(|(k, tc)| TargetGeometry {
            x: truths[k][t][0],
            y: truths[k][t][2],
            depth: tc.depth,
        })
        .collect()
}

fn stack_states(truths: &[Vec<Vector4<f64>>], t: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(4 * truths.len());
    for track in truths {
        out.extend_from_slice(track[t].as_slice());
    }
    out
}

fn run_known_impl(cfg: &ScenarioConfig, baseline: bool) -> Result<ScenarioLog> {
    cfg.validate()?;
    let n = cfg.total_steps;
    let space = cfg.action_space();
    let cost = cfg.cost_model()?;
    let depths = cfg.target_depths();
    let models = cfg.target_models();
    let truths = simulate_truths(cfg);
    let metric = cfg.quantization.metric(4 * models.len());
    let meas_model = cfg.measurement.clone();
    let dt = cfg.step_seconds;
    let h_step = cfg.subinterval_length.unwrap_or(n);
    let split_mode = cfg.subinterval_length.is_some();

    let mut s = cfg.carrier_start();
    let mut prev_disp = Vector3::from_column_slice(&cfg.carrier.cruise_displacement);
    let mut records = Vec::with_capacity(n + 1);
    let mut subinterval_starts = Vec::new();
    let mut active: Option<ActiveSub> = None;
    let mut sub_counter: u64 = 0;

    for t in 0..=n {
        if !baseline && t < n && active.as_ref().is_none_or(|a| t - a.t0 >= a.h) {
            let h = h_step.min(n - t);
            // split mode restarts each subinterval from the exact target state
            let prior_models: Vec<TargetModel> = if split_mode {
                models
                    .iter()
                    .enumerate()
                    .map(|(k, m)| TargetModel {
                        mu0: truths[k][t],
                        sigma0: Matrix4::zeros(),
                        ..m.clone()
                    })
                    .collect()
            } else {
                models.clone()
            };
            let chain = build_chain(&prior_models, cfg, h, sub_counter, &metric)?;
            let sol = dp::solve(&chain, &space, &s, &cost, &depths, Direction::Min)?;
            subinterval_starts.push(t);
            active = Some(ActiveSub {
                t0: t,
                h,
                chain,
                sol,
                rel: [0, 0, 0],
            });
            sub_counter += 1;
        }

        let geoms = geometries_at(cfg, &truths, t);
        let stacked = stack_states(&truths, t);
        let cell: i64 = active
            .as_ref()
            .map_or(-1, |a| nearest(&a.chain.grids[t - a.t0], &stacked, &metric) as i64);
        let action = if t == n || baseline {
            Action::ZERO
        } else {
            let a = active.as_ref().expect("solution active before the horizon");
            a.sol.policy.action(t - a.t0, a.pos_index(t), cell as usize)
        };

        let obs_vel = prev_disp / dt;
        // noise-free diagnostics; degenerate geometry logs as NaN
        let (bearing, frequency) = project_measurement(&truths[0][t], &s, &obs_vel, &meas_model)
            .map_or((f64::NAN, f64::NAN), |z| (z[0], z[1]));
        records.push(StepRecord {
            t,
            carrier: [s.x(), s.y(), s.depth()],
            action: action.displacement(&space).into(),
            targets_xy: geoms.iter().map(|g| [g.x, g.y]).collect(),
            est_mean: truths[0][t].into(),
            cov_trace: 0.0,
            cov: None,
            bearing,
            frequency,
            nearest_index: cell,
            stage_cost: cost.stage_cost(&s, &geoms)?,
            c_w: cost.target_loss(0, &s, &geoms[0])?,
            c_s: if cost.carrier_field.is_some() {
                cost.carrier_loss(&s, &geoms[0])?
            } else {
                f64::NAN
            },
        });
        if t == n {
            break;
        }
        s = apply_action(&space, &s, &action)?;
        if let Some(a) = active.as_mut() {
            if !baseline {
                a.advance(&action);
            }
        }
        prev_disp = action.displacement(&space);
    }

    Ok(ScenarioLog {
        period1_end: 0,
        records,
        subinterval_starts,
        diverged: None,
    })
}

fn run_bot_impl(cfg: &ScenarioConfig, baseline: bool) -> Result<ScenarioLog> {
    cfg.validate()?;
    let n = cfg.total_steps;
    let space = cfg.action_space();
    let cost = cfg.cost_model()?;
    let depths = cfg.target_depths();
    let base_model = cfg.target_models().remove(0);
    let truths = simulate_truths(cfg);
    let metric = cfg.quantization.metric(4);
    let meas_model = cfg.measurement.clone();
    let ukf_params = cfg.ukf;
    let dt = cfg.step_seconds;
    let target_depth = cfg.targets[0].depth;

    let mut s = cfg.carrier_start();
    let mut prev_disp = Vector3::from_column_slice(&cfg.carrier.cruise_displacement);
    let mut filter = UkfState {
        mean: base_model.mu0,
        cov: base_model.sigma0,
        t: 0,
    };
    let mut meas_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, TAG_MEAS, 0));
    let mut records = Vec::with_capacity(n + 1);
    let mut subinterval_starts = Vec::new();
    let mut diverged = None;
    let mut active: Option<ActiveSub> = None;
    let mut sub_counter: u64 = 0;

    for t in 0..=n {
        let truth = TargetState::new(truths[0][t], target_depth);
        let obs_vel = prev_disp / dt;
        let noise: (f64, f64) = (
            meas_rng.sample(StandardNormal),
            meas_rng.sample(StandardNormal),
        );
        let measured = measure(&truth, &s, &obs_vel, &meas_model, noise, t).and_then(|z| {
            ukf_update(&filter, &z, &s, &obs_vel, &meas_model, &ukf_params).map(|f| (z, f))
        });
        let z = match measured {
            Ok((z, updated)) => {
                filter = updated;
                z
            }
            Err(Error::Numerical(_)) => {
                diverged = Some(t);
                break;
            }
            Err(e) => return Err(e),
        };

        let in_period2 = t >= cfg.period1_end && t < n;
        if in_period2 && !baseline && active.as_ref().is_none_or(|a| t - a.t0 >= a.h) {
            // fresh cycle: the posterior becomes the chain's initial law
            let h = cfg
                .subinterval_length
                .expect("validated for tracking scenarios")
                .min(n - t);
            let prior = TargetModel {
                mu0: filter.mean,
                sigma0: filter.cov,
                ..base_model.clone()
            };
            let chain = build_chain(&[prior], cfg, h, sub_counter, &metric)?;
            let sol = dp::solve(&chain, &space, &s, &cost, &depths, Direction::Min)?;
            subinterval_starts.push(t);
            active = Some(ActiveSub {
                t0: t,
                h,
                chain,
                sol,
                rel: [0, 0, 0],
            });
            sub_counter += 1;
        }

        enum Move {
            Scheduled(Vector3<f64>),
            Optimized(Action),
        }
        let (cell, decided): (i64, Option<Move>) = if t == n {
            let cell = active
                .as_ref()
                .map_or(-1, |a| {
                    nearest(&a.chain.grids[t - a.t0], filter.mean.as_slice(), &metric) as i64
                });
            (cell, None)
        } else if t < cfg.period1_end {
            (-1, Some(Move::Scheduled(scheduled_displacement(cfg, t))))
        } else if baseline {
            (-1, Some(Move::Optimized(Action::ZERO)))
        } else {
            let a = active.as_ref().expect("active cycle in period 2");
            let cell = nearest(&a.chain.grids[t - a.t0], filter.mean.as_slice(), &metric);
            let action = a.sol.policy.action(t - a.t0, a.pos_index(t), cell);
            (cell as i64, Some(Move::Optimized(action)))
        };

        let geom = TargetGeometry {
            x: truth.w[0],
            y: truth.w[2],
            depth: target_depth,
        };
        let action_disp = match &decided {
            None => Vector3::zeros(),
            Some(Move::Scheduled(d)) => *d,
            Some(Move::Optimized(a)) => a.displacement(&space),
        };
        records.push(StepRecord {
            t,
            carrier: [s.x(), s.y(), s.depth()],
            action: action_disp.into(),
            targets_xy: vec![[geom.x, geom.y]],
            est_mean: filter.mean.into(),
            cov_trace: filter.cov.trace(),
            cov: Some(flatten_cov(&filter.cov)),
            bearing: z.bearing,
            frequency: z.frequency,
            nearest_index: cell,
            stage_cost: cost.stage_cost(&s, &[geom])?,
            c_w: cost.target_loss(0, &s, &geom)?,
            c_s: if cost.carrier_field.is_some() {
                cost.carrier_loss(&s, &geom)?
            } else {
                f64::NAN
            },
        });
        let Some(decided) = decided else { break };

        match decided {
            Move::Scheduled(d) => {
                let dest = s.pos + d;
                if !space.contains(&dest) {
                    return Err(Error::Config(format!(
                        "maneuver schedule leaves the carrier bounds at step {t}"
                    )));
                }
                s = CarrierState { pos: dest };
                prev_disp = d;
            }
            Move::Optimized(action) => {
                s = apply_action(&space, &s, &action)?;
                if let Some(a) = active.as_mut() {
                    a.advance(&action);
                }
                prev_disp = action.displacement(&space);
            }
        }
        filter = match ukf_predict(&filter, &base_model) {
            Ok(f) => f,
            Err(Error::Numerical(_)) => {
                diverged = Some(t + 1);
                break;
            }
            Err(e) => return Err(e),
        };
    }

    Ok(ScenarioLog {
        period1_end: cfg.period1_end,
        records,
        subinterval_starts,
        diverged,
    })
}

fn flatten_cov(cov: &Matrix4<f64>) -> [f64; 16] {
    let mut out = [0.0; 16];
    for i in 0..4 {
        for j in 0..4 {
            out[i * 4 + j] = cov[(i, j)];
        }
    }
    out
}

/// Recover a covariance matrix from a flattened log record.
pub fn unflatten_cov(flat: &[f64; 16]) -> Matrix4<f64> {
    Matrix4::from_fn(|i, j| flat[i * 4 + j])
}

/// Innovation-free helper for tests and diagnostics: noise-free measurement
/// of a target from an observer, as a `(bearing, frequency)` pair.
pub fn clean_measurement(
    target: &Vector4<f64>,
    observer: &CarrierState,
    observer_velocity: &Vector3<f64>,
    cfg: &ScenarioConfig,
) -> Result<Vector2<f64>> {
    project_measurement(target, observer, observer_velocity, &cfg.measurement)
}
