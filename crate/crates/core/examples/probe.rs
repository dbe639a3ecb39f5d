// Temporary calibration probe; not part of the deliverable.
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use subplan_core::acoustics::PropagationField;
use subplan_core::control::*;
use subplan_core::dp::TerminalMode;
use subplan_core::quantize::*;
use subplan_core::tma::{MeasurementModel, UkfParams};

struct IidGaussian;
impl ChainSimulator for IidGaussian {
    fn dim(&self) -> usize {
        2
    }
    fn sample_path(&self, horizon: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..(horizon + 1) * 2).map(|_| rng.sample(StandardNormal)).collect()
    }
}

fn probe_distortion() {
    let sim = IidGaussian;
    let metric = vec![1.0, 1.0];
    let mut eval_rng = ChaCha8Rng::seed_from_u64(999);
    let held_out: Vec<f64> = (0..200_000).map(|_| eval_rng.sample(StandardNormal)).collect();
    for gamma0 in [0.1, 0.3] {
        let mut ds = Vec::new();
        for m in [1usize, 4, 16, 64] {
            let params = ClvqParams {
                points: m,
                runs: 100_000,
                horizon: 0,
                gamma0,
                gamma_decay: ClvqParams::default_decay(gamma0, m, 100_000),
                seed: 4242,
            };
            let grids = clvq_train(&sim, &params, &metric, None).unwrap();
            let d = distortion(&grids[0], &held_out, &metric);
            ds.push(d);
            println!("gamma0={gamma0} M={m:3} D={d:.5}");
        }
        println!(
            "gamma0={gamma0} ratio D64/D16 = {:.4}, strictly decreasing: {}",
            ds[3] / ds[2],
            ds.windows(2).all(|w| w[1] < w[0])
        );
    }
}

fn scenario1_cfg(modulation: f64) -> ScenarioConfig {
    ScenarioConfig {
        scenario_kind: ScenarioKind::KnownSingle,
        total_steps: 40,
        step_seconds: 60.0,
        seed: 20_240_601,
        carrier: CarrierConfig {
            start: [0.0, 0.0, 300.0],
            cruise_displacement: [0.0, 0.0, 0.0],
            action_deltas: [0.0, 0.0, 100.0],
            action_ranges: [0, 0, 1],
            depth_bounds: [0.0, 1000.0],
            horizontal_bounds: None,
            emitter: None,
        },
        targets: vec![TargetConfig {
            depth: 500.0,
            mu0: [30_000.0, -10.0, 0.0, 0.0],
            sigma0_diag: [1.0e6, 4.0, 1.0e6, 4.0],
            sigma_eps: 0.01,
            true_initial: None,
            emitter: PropagationField {
                modulation_amp: modulation,
                ..PropagationField::default()
            },
        }],
        maneuver_schedule: Vec::new(),
        period1_end: 0,
        subinterval_length: None,
        quantization: QuantizationConfig {
            points: 32,
            train_runs: 20_000,
            sample_runs: 20_000,
            ..QuantizationConfig::default()
        },
        cost: CostConfig::default(),
        measurement: MeasurementModel::default(),
        ukf: UkfParams::default(),
        diagram: DiagramConfig::default(),
    }
}

fn probe_control_benefit() {
    for modulation in [25.0, 35.0, 40.0] {
        for l3 in [1u32, 2] {
            let mut cfg = scenario1_cfg(modulation);
            cfg.carrier.action_ranges = [0, 0, l3];
            let controlled = run_scenario(&cfg, false).unwrap();
            let baseline = run_scenario(&cfg, true).unwrap();
            let sc = RunStats::from_log(&controlled);
            let sb = RunStats::from_log(&baseline);
            println!(
                "mod={modulation} L3={l3}: controlled mean {:.2} baseline mean {:.2} gain {:.2} dB",
                sc.mean_stage_cost,
                sb.mean_stage_cost,
                sb.mean_stage_cost - sc.mean_stage_cost
            );
        }
    }
}

fn scenario3_cfg(seed: u64, maneuvers: bool, tradeoff: bool) -> ScenarioConfig {
    ScenarioConfig {
        scenario_kind: if tradeoff {
            ScenarioKind::BotTradeoff
        } else {
            ScenarioKind::BotSingle
        },
        total_steps: 45,
        step_seconds: 60.0,
        seed,
        carrier: CarrierConfig {
            start: [0.0, 0.0, 300.0],
            cruise_displacement: [0.0, 600.0, 0.0],
            action_deltas: [300.0, 300.0, 100.0],
            action_ranges: [1, 1, 1],
            depth_bounds: [50.0, 950.0],
            horizontal_bounds: None,
            emitter: Some(PropagationField {
                source_depth: 300.0,
                cz_period: 25_000.0,
                ..PropagationField::default()
            }),
        },
        targets: vec![TargetConfig {
            depth: 300.0,
            mu0: [25_000.0, -8.0, 12_000.0, 4.0],
            sigma0_diag: [4.0e6, 9.0, 4.0e6, 9.0],
            sigma_eps: 0.01,
            true_initial: None,
            emitter: PropagationField {
                source_depth: 300.0,
                ..PropagationField::default()
            },
        }],
        maneuver_schedule: if maneuvers {
            vec![
                Maneuver {
                    start_step: 10,
                    duration_steps: 2,
                    displacement: [600.0, 0.0, 0.0],
                },
                Maneuver {
                    start_step: 20,
                    duration_steps: 2,
                    displacement: [-600.0, 0.0, 0.0],
                },
            ]
        } else {
            Vec::new()
        },
        period1_end: 22,
        subinterval_length: Some(5),
        quantization: QuantizationConfig {
            points: 32,
            train_runs: 8000,
            sample_runs: 10_000,
            ..QuantizationConfig::default()
        },
        cost: CostConfig::default(),
        measurement: MeasurementModel {
            sigma_freq: 1.0,
            ..MeasurementModel::default()
        },
        ukf: UkfParams::default(),
        diagram: DiagramConfig::default(),
    }
}

fn probe_observability() {
    use nalgebra::{Matrix4, Vector4};
    use subplan_core::control;
    let sigma_freq: f64 = std::env::args()
        .nth(2)
        .and_then(|s| s.parse().ok())
        .unwrap_or(0.05);
    let range0: f64 = std::env::args()
        .nth(3)
        .and_then(|s| s.parse().ok())
        .unwrap_or(30_000.0);
    let runs = 50;
    let mut rmse = [0.0f64; 2];
    let mut nees_sum = 0.0;
    let mut nees_count = 0usize;
    for (mi, with_m) in [true, false].into_iter().enumerate() {
        let mut sq = 0.0;
        for k in 0..runs {
            let mut cfg = scenario3_cfg(7000 + k, with_m, false);
            cfg.period1_end = 23;
            cfg.total_steps = 23;
            cfg.subinterval_length = Some(5);
            cfg.measurement.sigma_freq = sigma_freq;
            if range0 > 0.0 {
                cfg.targets[0].mu0[0] = range0;
            }
            // draw the true initial state from the prior
            let mut rng = ChaCha8Rng::seed_from_u64(31_000 + k);
            let mut w = [0.0f64; 4];
            for (j, v) in w.iter_mut().enumerate() {
                let n: f64 = rng.sample(StandardNormal);
                *v = cfg.targets[0].mu0[j] + n * cfg.targets[0].sigma0_diag[j].sqrt();
            }
            cfg.targets[0].true_initial = Some(w);
            let log = run_scenario(&cfg, false).unwrap();
            let r = &log.records[22];
            let dx = r.est_mean[0] - r.targets_xy[0][0];
            let dy = r.est_mean[2] - r.targets_xy[0][1];
            sq += dx * dx + dy * dy;
            if with_m {
                // NEES against the full state
                let truth_vel = {
                    // finite difference of logged truth positions
                    let r2 = &log.records[23];
                    [
                        (r2.targets_xy[0][0] - r.targets_xy[0][0]) / 60.0,
                        (r2.targets_xy[0][1] - r.targets_xy[0][1]) / 60.0,
                    ]
                };
                let err = Vector4::new(
                    r.est_mean[0] - r.targets_xy[0][0],
                    r.est_mean[1] - truth_vel[0],
                    r.est_mean[2] - r.targets_xy[0][1],
                    r.est_mean[3] - truth_vel[1],
                );
                let cov = control::unflatten_cov(r.cov.as_ref().unwrap());
                if let Some(inv) = Matrix4::try_inverse(cov) {
                    nees_sum += (err.transpose() * inv * err)[(0, 0)];
                    nees_count += 1;
                }
            }
        }
        rmse[mi] = (sq / runs as f64).sqrt();
    }
    println!(
        "RMSE@22 maneuvered {:.1} m straight {:.1} m; mean NEES {:.2} over {} runs",
        rmse[0],
        rmse[1],
        nees_sum / nees_count as f64,
        nees_count
    );
}

fn probe_tradeoff() {
    let mut cs3 = Vec::new();
    let mut cs4 = Vec::new();
    let mut cw3 = Vec::new();
    let mut cw4 = Vec::new();
    for k in 0..10u64 {
        let cfg3 = scenario3_cfg(5000 + k, true, false);
        let cfg4 = scenario3_cfg(5000 + k, true, true);
        let log3 = run_scenario(&cfg3, false).unwrap();
        let log4 = run_scenario(&cfg4, false).unwrap();
        let s3 = RunStats::from_log(&log3);
        let s4 = RunStats::from_log(&log4);
        cs3.push(s3.period2.mean_c_s);
        cs4.push(s4.period2.mean_c_s);
        cw3.push(s3.period2.mean_c_w);
        cw4.push(s4.period2.mean_c_w);
        println!(
            "seed {k}: cs3 {:.1} cs4 {:.1} | cw3 {:.1} cw4 {:.1}",
            s3.period2.mean_c_s, s4.period2.mean_c_s, s3.period2.mean_c_w, s4.period2.mean_c_w
        );
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    println!(
        "mean cs: 3 -> {:.2}, 4 -> {:.2} (delta {:+.2}); mean cw: 3 -> {:.2}, 4 -> {:.2} (delta {:+.2})",
        mean(&cs3),
        mean(&cs4),
        mean(&cs4) - mean(&cs3),
        mean(&cw3),
        mean(&cw4),
        mean(&cw4) - mean(&cw3)
    );
}

fn probe_split() {
    // M=1 deterministic toy: split vs unsplit totals
    let mut cfg = scenario1_cfg(25.0);
    cfg.total_steps = 8;
    cfg.targets[0].sigma_eps = 0.0;
    cfg.targets[0].sigma0_diag = [0.0; 4];
    cfg.quantization.points = 1;
    cfg.quantization.train_runs = 50;
    cfg.quantization.sample_runs = 50;
    cfg.cost.terminal_mode = TerminalMode::Zero;
    let unsplit = run_scenario(&cfg, false).unwrap();
    let mut cfg_split = cfg.clone();
    cfg_split.subinterval_length = Some(2);
    let split = run_scenario(&cfg_split, false).unwrap();
    println!(
        "unsplit total {:.4}, split total {:.4}, ratio {:.6}",
        unsplit.total_stage_cost(),
        split.total_stage_cost(),
        split.total_stage_cost() / unsplit.total_stage_cost()
    );
}

fn main() {
    let what = std::env::args().nth(1).unwrap_or_else(|| "all".into());
    match what.as_str() {
        "distortion" => probe_distortion(),
        "benefit" => probe_control_benefit(),
        "observability" => probe_observability(),
        "tradeoff" => probe_tradeoff(),
        "split" => probe_split(),
        _ => {
            probe_distortion();
            probe_control_benefit();
            probe_observability();
            probe_tradeoff();
            probe_split();
        }
    }
}
