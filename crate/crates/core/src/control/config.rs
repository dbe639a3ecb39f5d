//! Declarative scenario configuration (JSON). Unknown keys are rejected;
//! every optional knob documents its default through `Default` impls.

use std::fs::File;
use std::io::Read;
use std::path::Path;

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::acoustics::PropagationField;
use crate::dp::{CostKind, CostModel, TerminalMode};
use crate::dynamics::{ActionSpace, CarrierState, HorizontalBounds, TargetModel};
use crate::error::{Error, Result};
use crate::quantize::{self, ClvqParams};
use crate::tma::{MeasurementModel, UkfParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    /// One target with known state; detection-only cost.
    KnownSingle,
    /// Two known targets; weighted-sum cost on the joint chain.
    KnownDouble,
    /// One unknown target tracked by the UKF; detection-only cost.
    BotSingle,
    /// One unknown target; detection/stealth trade-off cost.
    BotTradeoff,
}

impl ScenarioKind {
    pub fn is_known(self) -> bool {
        matches!(self, ScenarioKind::KnownSingle | ScenarioKind::KnownDouble)
    }

    pub fn target_count(self) -> usize {
        match self {
            ScenarioKind::KnownDouble => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CarrierConfig {
    /// Initial position `(x, y, depth)`.
    pub start: [f64; 3],
    /// Per-step displacement when no control or maneuver applies (m/step).
    #[serde(default)]
    pub cruise_displacement: [f64; 3],
    /// Action lattice quantum per axis (m).
    pub action_deltas: [f64; 3],
    /// Action lattice range per axis.
    pub action_ranges: [u32; 3],
    #[serde(default = "default_depth_bounds")]
    pub depth_bounds: [f64; 2],
    #[serde(default)]
    pub horizontal_bounds: Option<HorizontalBounds>,
    /// The carrier's own emitter field (needed by the trade-off cost and the
    /// logged stealth diagnostics).
    #[serde(default)]
    pub emitter: Option<PropagationField>,
}

fn default_depth_bounds() -> [f64; 2] {
    [0.0, 1000.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetConfig {
    /// Constant depth (m).
    pub depth: f64,
    /// Prior mean of `(x, vx, y, vy)`.
    pub mu0: [f64; 4],
    /// Prior covariance diagonal (variances).
    #[serde(default = "default_sigma0_diag")]
    pub sigma0_diag: [f64; 4],
    #[serde(default = "default_sigma_eps")]
    pub sigma_eps: f64,
    /// Actual initial state driving the simulated truth; defaults to `mu0`.
    #[serde(default)]
    pub true_initial: Option<[f64; 4]>,
    #[serde(default)]
    pub emitter: PropagationField,
}

fn default_sigma0_diag() -> [f64; 4] {
    [1.0e6, 4.0, 1.0e6, 4.0]
}

fn default_sigma_eps() -> f64 {
    0.01
}

impl TargetConfig {
    pub fn model(&self, step_seconds: f64) -> TargetModel {
        TargetModel {
            step_seconds,
            sigma_eps: self.sigma_eps,
            mu0: Vector4::from_column_slice(&self.mu0),
            sigma0: Matrix4::from_diagonal(&Vector4::from_column_slice(&self.sigma0_diag)),
            depth: self.depth,
        }
    }

    pub fn true_initial_state(&self) -> Vector4<f64> {
        Vector4::from_column_slice(&self.true_initial.unwrap_or(self.mu0))
    }
}

/// One scheduled maneuver leg: a per-step displacement override.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Maneuver {
    pub start_step: usize,
    pub duration_steps: usize,
    pub displacement: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuantizationConfig {
    /// Grid points per time step (M).
    pub points: usize,
    /// CLVQ training trajectories (NR).
    pub train_runs: usize,
    /// Monte Carlo trajectories for weights/transitions (NS).
    pub sample_runs: usize,
    pub gamma0: f64,
    /// Learning-rate decay constant; derived from `gamma0`, `points` and
    /// `train_runs` when absent.
    pub gamma_decay: Option<f64>,
    /// Seconds-per-step weight making velocity errors commensurate with the
    /// position errors they cause over one step.
    pub metric_lambda: f64,
}

impl Default for QuantizationConfig {
    fn default() -> Self {
        QuantizationConfig {
            points: 32,
            train_runs: 10_000,
            sample_runs: 20_000,
            gamma0: 0.1,
            gamma_decay: None,
            metric_lambda: 60.0,
        }
    }
}

impl QuantizationConfig {
    pub fn clvq_params(&self, horizon: usize, seed: u64) -> ClvqParams {
        ClvqParams {
            points: self.points,
            runs: self.train_runs,
            horizon,
            gamma0: self.gamma0,
            gamma_decay: self
                .gamma_decay
                .unwrap_or_else(|| ClvqParams::default_decay(self.gamma0, self.points, self.train_runs)),
            seed,
        }
    }

    pub fn metric(&self, dim: usize) -> Vec<f64> {
        quantize::default_metric(dim, self.metric_lambda)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostConfig {
    /// Multi-target weights; equal weights when absent.
    pub alphas: Option<Vec<f64>>,
    /// Trade-off floor multiplier.
    pub epsilon: f64,
    pub terminal_mode: TerminalMode,
    pub scale: f64,
    pub shift: f64,
}

impl Default for CostConfig {
    fn default() -> Self {
        CostConfig {
            alphas: None,
            epsilon: 0.1,
            terminal_mode: TerminalMode::SameAsStage,
            scale: 1.0,
            shift: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagramConfig {
    pub range_max: f64,
    pub n_range: usize,
    pub n_depth: usize,
    /// Saturation level (dB); `null` renders unsaturated.
    pub saturation: Option<f64>,
}

impl Default for DiagramConfig {
    fn default() -> Self {
        DiagramConfig {
            range_max: 60_000.0,
            n_range: 121,
            n_depth: 51,
            saturation: Some(120.0),
        }
    }
}

/// Complete declarative scenario description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario_kind: ScenarioKind,
    /// Overall horizon N (steps).
    pub total_steps: usize,
    #[serde(default = "default_step_seconds")]
    pub step_seconds: f64,
    /// Master seed; every random stream in a run derives from it.
    pub seed: u64,
    pub carrier: CarrierConfig,
    pub targets: Vec<TargetConfig>,
    #[serde(default)]
    pub maneuver_schedule: Vec<Maneuver>,
    /// First period (filtering only) ends at this step; 0 disables it.
    #[serde(default)]
    pub period1_end: usize,
    /// Horizon-splitting subinterval length H; absent = one full-horizon solve.
    #[serde(default)]
    pub subinterval_length: Option<usize>,
    #[serde(default)]
    pub quantization: QuantizationConfig,
    #[serde(default)]
    pub cost: CostConfig,
    #[serde(default)]
    pub measurement: MeasurementModel,
    #[serde(default)]
    pub ukf: UkfParams,
    #[serde(default)]
    pub diagram: DiagramConfig,
}

fn default_step_seconds() -> f64 {
    60.0
}

impl ScenarioConfig {
    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let cfg: ScenarioConfig = serde_json::from_reader(reader)
            .map_err(|e| Error::Config(format!("invalid scenario config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path<P: AsRef<Path>>(path: P) -> Result<Self> {
        let file = File::open(path.as_ref()).map_err(Error::Io)?;
        Self::from_reader(file)
    }

    /// Canonical byte serialization used for config hashing.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("scenario config serializes")
    }

    pub fn action_space(&self) -> ActionSpace {
        ActionSpace {
            deltas: self.carrier.action_deltas,
            ranges: self.carrier.action_ranges,
            depth_bounds: self.carrier.depth_bounds,
            horizontal_bounds: self.carrier.horizontal_bounds,
        }
    }

    pub fn carrier_start(&self) -> CarrierState {
        CarrierState::new(
            self.carrier.start[0],
            self.carrier.start[1],
            self.carrier.start[2],
        )
    }

    pub fn target_models(&self) -> Vec<TargetModel> {
        self.targets
            .iter()
            .map(|t| t.model(self.step_seconds))
            .collect()
    }

    pub fn target_depths(&self) -> Vec<f64> {
        self.targets.iter().map(|t| t.depth).collect()
    }

    pub fn cost_model(&self) -> Result<CostModel> {
        let kind = match self.scenario_kind {
            ScenarioKind::KnownSingle | ScenarioKind::BotSingle => CostKind::SingleTarget,
            ScenarioKind::KnownDouble => {
                let alphas = self
                    .cost
                    .alphas
                    .clone()
                    .unwrap_or_else(|| vec![1.0 / self.targets.len() as f64; self.targets.len()]);
                CostKind::MultiTarget { alphas }
            }
            ScenarioKind::BotTradeoff => CostKind::Tradeoff {
                epsilon: self.cost.epsilon,
            },
        };
        let model = CostModel {
            kind,
            target_fields: self.targets.iter().map(|t| t.emitter.clone()).collect(),
            carrier_field: self.carrier.emitter.clone(),
            terminal: self.cost.terminal_mode,
            scale: self.cost.scale,
            shift: self.cost.shift,
        };
        model.validate(self.targets.len())?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if self.total_steps == 0 {
            return Err(Error::Config("total_steps must be at least 1".into()));
        }
        if !(self.step_seconds > 0.0) {
            return Err(Error::Config("step_seconds must be positive".into()));
        }
        let expected = self.scenario_kind.target_count();
        if self.targets.len() != expected {
            return Err(Error::Config(format!(
                "{:?} needs exactly {} target(s), got {}",
                self.scenario_kind,
                expected,
                self.targets.len()
            )));
        }
        if self.period1_end > self.total_steps {
            return Err(Error::Config(format!(
                "period1_end {} beyond total_steps {}",
                self.period1_end, self.total_steps
            )));
        }
        if let Some(h) = self.subinterval_length {
            if h == 0 {
                return Err(Error::Config("subinterval_length must be at least 1".into()));
            }
            if self.scenario_kind.is_known() && self.quantization.points > 1 {
                return Err(Error::Config(
                    "known-target horizon splitting restarts each subinterval from the exact \
                     target state, so it needs quantization.points = 1"
                        .into(),
                ));
            }
        }
        if self.scenario_kind.is_known() && self.period1_end != 0 {
            return Err(Error::Config(
                "known-target scenarios have no filtering-only period".into(),
            ));
        }
        if !self.scenario_kind.is_known() && self.subinterval_length.is_none() {
            return Err(Error::Config(
                "tracking scenarios need subinterval_length for the online solver".into(),
            ));
        }
        let space = self.action_space();
        space.validate()?;
        let start = self.carrier_start();
        if start.depth() < space.depth_bounds[0] || start.depth() > space.depth_bounds[1] {
            return Err(Error::Config(format!(
                "carrier start depth {} outside depth_bounds {:?}",
                start.depth(),
                space.depth_bounds
            )));
        }
        if self.quantization.points == 0 {
            return Err(Error::Config("quantization.points must be at least 1".into()));
        }
        for model in self.target_models() {
            model.validate()?;
        }
        self.measurement.validate()?;
        self.ukf.validate()?;
        // receiver depths must stay inside every relevant water column
        for t in &self.targets {
            t.emitter.validate()?;
            if space.depth_bounds[1] > t.emitter.water_depth {
                return Err(Error::Config(format!(
                    "carrier depth bound {} exceeds target emitter water depth {}",
                    space.depth_bounds[1], t.emitter.water_depth
                )));
            }
            if t.depth < 0.0 {
                return Err(Error::Config("target depth above the surface".into()));
            }
        }
        if let Some(f) = &self.carrier.emitter {
            f.validate()?;
            for t in &self.targets {
                if t.depth > f.water_depth {
                    return Err(Error::Config(format!(
                        "target depth {} exceeds carrier emitter water depth {}",
                        t.depth, f.water_depth
                    )));
                }
            }
        }
        self.cost_model()?;
        Ok(())
    }
}
