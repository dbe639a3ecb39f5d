//! Target stochastic motion, carrier kinematics, and the feasible action set.
//!
//! A target is a nearly-constant-velocity planar chain at fixed depth:
//! per axis, (position, velocity) evolve as `[1 T; 0 1]` with acceleration
//! noise entering through `[T^2/2; T]`. The carrier moves deterministically
//! on a 3-d lattice of displacement multiples; an action is feasible when the
//! destination stays inside the configured water-column (and optional
//! horizontal) bounds.

use nalgebra::{Matrix2, Matrix4, Matrix4x2, SymmetricEigen, Vector2, Vector3, Vector4};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantize::ChainSimulator;

/// Planar target state `(x, vx, y, vy)` plus its constant depth.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetState {
    pub w: Vector4<f64>,
    pub depth: f64,
}

impl TargetState {
    pub fn new(w: Vector4<f64>, depth: f64) -> Self {
        TargetState { w, depth }
    }

    pub fn position(&self) -> Vector2<f64> {
        Vector2::new(self.w[0], self.w[2])
    }

    pub fn velocity(&self) -> Vector2<f64> {
        Vector2::new(self.w[1], self.w[3])
    }
}

/// Linear-Gaussian target model: step length, acceleration noise, initial law.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetModel {
    /// Decision/measurement step (s).
    pub step_seconds: f64,
    /// Acceleration noise std (m/s^2), isotropic over both axes.
    pub sigma_eps: f64,
    /// Initial mean.
    pub mu0: Vector4<f64>,
    /// Initial covariance (symmetric PSD).
    pub sigma0: Matrix4<f64>,
    /// Constant depth (m).
    pub depth: f64,
}

impl TargetModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_seconds > 0.0) {
            return Err(Error::Config("target step_seconds must be positive".into()));
        }
        if self.sigma_eps < 0.0 {
            return Err(Error::Config("sigma_eps must be nonnegative".into()));
        }
        let asym = (self.sigma0 - self.sigma0.transpose()).abs().max();
        if asym > 1e-9 {
            return Err(Error::Config(format!(
                "sigma0 not symmetric (max asymmetry {asym:.3e})"
            )));
        }
        let eig = SymmetricEigen::new(self.sigma0);
        if eig.eigenvalues.min() < -1e-9 {
            return Err(Error::Config("sigma0 not positive semi-definite".into()));
        }
        Ok(())
    }

    /// State transition: per-axis `[1 T; 0 1]` on (position, velocity).
    pub fn transition_matrix(&self) -> Matrix4<f64> {
        let t = self.step_seconds;
        #[rustfmt::skip]
        let f = Matrix4::new(
            1.0, t,   0.0, 0.0,
            0.0, 1.0, 0.0, 0.0,
            0.0, 0.0, 1.0, t,
            0.0, 0.0, 0.0, 1.0,
        );
        f
    }

    /// Noise gain: per-axis `[T^2/2; T]` against the 2-d acceleration noise.
    pub fn noise_gain(&self) -> Matrix4x2<f64> {
        let t = self.step_seconds;
        #[rustfmt::skip]
        let k = Matrix4x2::new(
            t * t / 2.0, 0.0,
            t,           0.0,
            0.0,         t * t / 2.0,
            0.0,         t,
        );
        k
    }

    /// Process-noise covariance `K (sigma_eps^2 I) K'`.
    pub fn process_noise_cov(&self) -> Matrix4<f64> {
        let k = self.noise_gain();
        k * Matrix2::identity() * self.sigma_eps.powi(2) * k.transpose()
    }

    /// One transition `F w + K eps` for a given acceleration noise draw.
    pub fn step(&self, w: &Vector4<f64>, noise: &Vector2<f64>) -> Vector4<f64> {
        self.transition_matrix() * w + self.noise_gain() * noise
    }

    /// Draw an acceleration noise `N(0, sigma_eps^2 I)`.
    pub fn sample_noise(&self, rng: &mut ChaCha8Rng) -> Vector2<f64> {
        let a: f64 = rng.sample(StandardNormal);
        let b: f64 = rng.sample(StandardNormal);
        Vector2::new(a, b) * self.sigma_eps
    }
}

/// One transition of the target state; depth is carried through unchanged.
pub fn step_target(model: &TargetModel, state: &TargetState, noise: &Vector2<f64>) -> TargetState {
    TargetState {
        w: model.step(&state.w, noise),
        depth: state.depth,
    }
}

/// Two independent targets regrouped into one 8-d chain with block-diagonal
/// transition and noise gain.
#[derive(Debug, Clone, PartialEq)]
pub struct JointTargetModel {
    pub models: Vec<TargetModel>,
}

pub fn join_models(m1: &TargetModel, m2: &TargetModel) -> Result<JointTargetModel> {
    if (m1.step_seconds - m2.step_seconds).abs() > 0.0 {
        return Err(Error::Config(format!(
            "joint targets need a common step: {} vs {}",
            m1.step_seconds, m2.step_seconds
        )));
    }
    Ok(JointTargetModel {
        models: vec![m1.clone(), m2.clone()],
    })
}

impl JointTargetModel {
    pub fn dim(&self) -> usize {
        4 * self.models.len()
    }

    /// Step the stacked state with independent per-target noises.
    pub fn step(&self, w: &[f64], noises: &[Vector2<f64>]) -> Vec<f64> {
        assert_eq!(w.len(), self.dim());
        assert_eq!(noises.len(), self.models.len());
        let mut out = Vec::with_capacity(w.len());
        for (k, model) in self.models.iter().enumerate() {
            let wk = Vector4::from_column_slice(&w[4 * k..4 * k + 4]);
            let next = model.step(&wk, &noises[k]);
            out.extend_from_slice(next.as_slice());
        }
        out
    }
}

/// Symmetric PSD square root via eigendecomposition, clamping tiny negative
/// eigenvalues to zero. Works for singular covariances (deterministic chains).
pub fn psd_sqrt(m: &Matrix4<f64>) -> Matrix4<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let sqrt_vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    let mut out = Matrix4::zeros();
    for i in 0..4 {
        let col = eig.eigenvectors.column(i);
        out += col * col.transpose() * sqrt_vals[i];
    }
    out
}

/// Seedable trajectory sampler for a single target; caches the matrices.
#[derive(Debug, Clone)]
pub struct TargetChain {
    model: TargetModel,
    f: Matrix4<f64>,
    k: Matrix4x2<f64>,
    sqrt0: Matrix4<f64>,
}

impl TargetChain {
    pub fn new(model: &TargetModel) -> Self {
        TargetChain {
            f: model.transition_matrix(),
            k: model.noise_gain(),
            sqrt0: psd_sqrt(&model.sigma0),
            model: model.clone(),
        }
    }

    pub fn model(&self) -> &TargetModel {
        &self.model
    }

    fn sample_initial(&self, rng: &mut ChaCha8Rng) -> Vector4<f64> {
        let xi = Vector4::from_fn(|_, _| rng.sample(StandardNormal));
        self.model.mu0 + self.sqrt0 * xi
    }

    fn sample_step(&self, w: &Vector4<f64>, rng: &mut ChaCha8Rng) -> Vector4<f64> {
        let a: f64 = rng.sample(StandardNormal);
        let b: f64 = rng.sample(StandardNormal);
        self.f * w + self.k * (Vector2::new(a, b) * self.model.sigma_eps)
    }
}

impl ChainSimulator for TargetChain {
    fn dim(&self) -> usize {
        4
    }

    fn sample_path(&self, horizon: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mut out = Vec::with_capacity((horizon + 1) * 4);
        let mut w = self.sample_initial(rng);
        out.extend_from_slice(w.as_slice());
        for _ in 0..horizon {
            w = self.sample_step(&w, rng);
            out.extend_from_slice(w.as_slice());
        }
        out
    }
}

/// Trajectory sampler for the joint two-target chain (independent noises).
#[derive(Debug, Clone)]
pub struct JointChain {
    chains: Vec<TargetChain>,
}

impl JointChain {
    pub fn new(joint: &JointTargetModel) -> Self {
        JointChain {
            chains: joint.models.iter().map(TargetChain::new).collect(),
        }
    }
}

impl ChainSimulator for JointChain {
    fn dim(&self) -> usize {
        4 * self.chains.len()
    }

    fn sample_path(&self, horizon: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let dim = self.dim();
        let mut states: Vec<Vector4<f64>> = self
            .chains
            .iter()
            .map(|c| c.sample_initial(rng))
            .collect();
        let mut out = Vec::with_capacity((horizon + 1) * dim);
        for s in &states {
            out.extend_from_slice(s.as_slice());
        }
        for _ in 0..horizon {
            for (k, chain) in self.chains.iter().enumerate() {
                states[k] = chain.sample_step(&states[k], rng);
            }
            for s in &states {
                out.extend_from_slice(s.as_slice());
            }
        }
        out
    }
}

/// Carrier position `(x, y, depth)`, depth positive down from the surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CarrierState {
    pub pos: Vector3<f64>,
}

impl CarrierState {
    pub fn new(x: f64, y: f64, depth: f64) -> Self {
        CarrierState {
            pos: Vector3::new(x, y, depth),
        }
    }

    pub fn x(&self) -> f64 {
        self.pos[0]
    }

    pub fn y(&self) -> f64 {
        self.pos[1]
    }

    pub fn depth(&self) -> f64 {
        self.pos[2]
    }

    /// Horizontal range to a planar point.
    pub fn range_to(&self, x: f64, y: f64) -> f64 {
        ((self.pos[0] - x).powi(2) + (self.pos[1] - y).powi(2)).sqrt()
    }
}

/// Inclusive horizontal box constraint, used when a scenario is not open ocean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HorizontalBounds {
    pub x: [f64; 2],
    pub y: [f64; 2],
}

/// Carrier action lattice: per-axis displacement quantum and range, plus the
/// positional bounds that decide feasibility.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionSpace {
    /// Per-axis displacement quantum (m).
    pub deltas: [f64; 3],
    /// Per-axis index range; axis j allows indices in `[-ranges[j], ranges[j]]`.
    pub ranges: [u32; 3],
    /// Depth interval the carrier must stay within (m, inclusive).
    pub depth_bounds: [f64; 2],
    /// Optional horizontal box (open ocean when absent).
    pub horizontal_bounds: Option<HorizontalBounds>,
}

impl ActionSpace {
    pub fn validate(&self) -> Result<()> {
        if self.depth_bounds[0] > self.depth_bounds[1] {
            return Err(Error::Config("depth_bounds reversed".into()));
        }
        if self.depth_bounds[0] < 0.0 {
            return Err(Error::Config("depth_bounds must not go above the surface".into()));
        }
        for j in 0..3 {
            if self.ranges[j] > 0 && self.deltas[j] <= 0.0 {
                return Err(Error::Config(format!(
                    "axis {j} has range {} but nonpositive delta {}",
                    self.ranges[j], self.deltas[j]
                )));
            }
        }
        Ok(())
    }

    /// Unconstrained action count `prod(2 L_j + 1)`.
    pub fn cardinality(&self) -> usize {
        self.ranges.iter().map(|&l| 2 * l as usize + 1).product()
    }

    /// Whether a position satisfies the depth (and optional horizontal) bounds.
    pub fn contains(&self, pos: &Vector3<f64>) -> bool {
        if pos[2] < self.depth_bounds[0] || pos[2] > self.depth_bounds[1] {
            return false;
        }
        if let Some(hb) = &self.horizontal_bounds {
            if pos[0] < hb.x[0] || pos[0] > hb.x[1] || pos[1] < hb.y[0] || pos[1] > hb.y[1] {
                return false;
            }
        }
        true
    }
}

/// One lattice action: per-axis integer multiples of the space deltas.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Action {
    pub steps: [i32; 3],
}

impl Action {
    pub const ZERO: Action = Action { steps: [0, 0, 0] };

    pub fn displacement(&self, space: &ActionSpace) -> Vector3<f64> {
        Vector3::new(
            self.steps[0] as f64 * space.deltas[0],
            self.steps[1] as f64 * space.deltas[1],
            self.steps[2] as f64 * space.deltas[2],
        )
    }
}

/// All actions whose destination stays in bounds, in lexicographic
/// `(i1, i2, i3)` order. The zero action is always present for an in-bounds
/// carrier, so the list is never empty.
pub fn feasible_actions(space: &ActionSpace, s: &CarrierState) -> Vec<Action> {
    let l = space.ranges;
    let mut out = Vec::with_capacity(space.cardinality());
    for i1 in -(l[0] as i32)..=l[0] as i32 {
        for i2 in -(l[1] as i32)..=l[1] as i32 {
            for i3 in -(l[2] as i32)..=l[2] as i32 {
                let action = Action {
                    steps: [i1, i2, i3],
                };
                let dest = s.pos + action.displacement(space);
                if space.contains(&dest) {
                    out.push(action);
                }
            }
        }
    }
    out
}

/// Apply a feasible action; rejects actions outside the lattice or whose
/// destination leaves the bounds.
pub fn apply_action(space: &ActionSpace, s: &CarrierState, action: &Action) -> Result<CarrierState> {
    for j in 0..3 {
        if action.steps[j].unsigned_abs() > space.ranges[j] {
            return Err(Error::Contract(format!(
                "action {:?} outside lattice ranges {:?}",
                action.steps, space.ranges
            )));
        }
    }
    let dest = s.pos + action.displacement(space);
    if !space.contains(&dest) {
        return Err(Error::Contract(format!(
            "action {:?} leaves bounds from ({}, {}, {})",
            action.steps,
            s.x(),
            s.y(),
            s.depth()
        )));
    }
    Ok(CarrierState { pos: dest })
}
