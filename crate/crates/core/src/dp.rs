//! Finite-horizon backward dynamic programming over the product of the
//! carrier lattice and the quantized target chain, plus the stage-cost
//! models driving it.
//!
//! The carrier component is controlled and deterministic; the quantized
//! target is uncontrolled, so the product transition factorizes into an
//! indicator on the carrier move times the estimated target matrix. The
//! backward sweep is sequential in time; within a layer every (position,
//! cell) state is independent and is mapped in parallel, with results
//! written in index order so the tables never depend on the worker count.

use std::collections::HashMap;
use std::io::{Read, Write};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::acoustics::PropagationField;
use crate::dynamics::{feasible_actions, Action, ActionSpace, CarrierState};
use crate::error::{Error, Result};
use crate::exec;
use crate::quantize::QuantizedChain;
use crate::util::derive_seed;

/// Optimization sense of the Bellman recursion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Min,
    Max,
}

/// Terminal cost choice: zero, or the stage cost evaluated at the final state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalMode {
    Zero,
    SameAsStage,
}

/// Stage-cost family.
#[derive(Debug, Clone, PartialEq)]
pub enum CostKind {
    /// Loss of the single target's emission as heard at the carrier.
    SingleTarget,
    /// Convex combination of per-target losses.
    MultiTarget { alphas: Vec<f64> },
    /// Detection/stealth trade-off: target loss times a piecewise-linear
    /// attenuation of the carrier's own loss at the target.
    Tradeoff { epsilon: f64 },
}

/// Geometry of one emitting target as seen by the cost functions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetGeometry {
    pub x: f64,
    pub y: f64,
    pub depth: f64,
}

/// Complete cost specification: kind, emitter fields, terminal handling and
/// an affine rescaling of the stage cost.
#[derive(Debug, Clone, PartialEq)]
pub struct CostModel {
    pub kind: CostKind,
    /// One field per target emitter.
    pub target_fields: Vec<PropagationField>,
    /// The carrier's own emitter field (required by the trade-off cost).
    pub carrier_field: Option<PropagationField>,
    pub terminal: TerminalMode,
    /// Stage cost is `raw * scale + shift`.
    pub scale: f64,
    pub shift: f64,
}

impl CostModel {
    pub fn validate(&self, n_targets: usize) -> Result<()> {
        for f in &self.target_fields {
            f.validate()?;
        }
        if let Some(f) = &self.carrier_field {
            f.validate()?;
        }
        match &self.kind {
            CostKind::SingleTarget => {
                if n_targets != 1 || self.target_fields.len() != 1 {
                    return Err(Error::Config(format!(
                        "single-target cost needs exactly one target and field, got {} targets / {} fields",
                        n_targets,
                        self.target_fields.len()
                    )));
                }
            }
            CostKind::MultiTarget { alphas } => {
                if alphas.len() != n_targets || self.target_fields.len() != n_targets {
                    return Err(Error::Config(format!(
                        "multi-target cost arity mismatch: {} alphas, {} fields, {} targets",
                        alphas.len(),
                        self.target_fields.len(),
                        n_targets
                    )));
                }
                if alphas.iter().any(|&a| a < 0.0) {
                    return Err(Error::Config("alphas must be nonnegative".into()));
                }
                let s: f64 = alphas.iter().sum();
                if (s - 1.0).abs() > 1e-9 {
                    return Err(Error::Config(format!("alphas must sum to 1, got {s}")));
                }
            }
            CostKind::Tradeoff { epsilon } => {
                if !(*epsilon > 0.0 && *epsilon < 1.0) {
                    return Err(Error::Config(format!(
                        "tradeoff epsilon {epsilon} outside (0, 1)"
                    )));
                }
                if n_targets != 1 || self.target_fields.len() != 1 {
                    return Err(Error::Config(
                        "tradeoff cost is defined for a single target".into(),
                    ));
                }
                if self.carrier_field.is_none() {
                    return Err(Error::Config(
                        "tradeoff cost needs the carrier emitter field".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Loss of target `k`'s emission at the carrier.
    pub fn target_loss(&self, k: usize, carrier: &CarrierState, tgt: &TargetGeometry) -> Result<f64> {
        let range = carrier.range_to(tgt.x, tgt.y);
        self.target_fields[k].loss_at(range, carrier.depth())
    }

    /// Loss of the carrier's emission at the target.
    pub fn carrier_loss(&self, carrier: &CarrierState, tgt: &TargetGeometry) -> Result<f64> {
        let field = self
            .carrier_field
            .as_ref()
            .ok_or_else(|| Error::Config("no carrier emitter field configured".into()))?;
        let range = carrier.range_to(tgt.x, tgt.y);
        field.loss_at(range, tgt.depth)
    }

    /// Stage cost at a carrier position against the listed targets.
    pub fn stage_cost(&self, carrier: &CarrierState, targets: &[TargetGeometry]) -> Result<f64> {
        let raw = match &self.kind {
            CostKind::SingleTarget => {
                if targets.len() != 1 {
                    return Err(Error::Config(format!(
                        "single-target cost got {} targets",
                        targets.len()
                    )));
                }
                self.target_loss(0, carrier, &targets[0])?
            }
            CostKind::MultiTarget { alphas } => {
                if targets.len() != alphas.len() {
                    return Err(Error::Config(format!(
                        "multi-target cost got {} targets for {} alphas",
                        targets.len(),
                        alphas.len()
                    )));
                }
                let mut acc = 0.0;
                for (k, tgt) in targets.iter().enumerate() {
                    acc += alphas[k] * self.target_loss(k, carrier, tgt)?;
                }
                acc
            }
            CostKind::Tradeoff { epsilon } => {
                if targets.len() != 1 {
                    return Err(Error::Config(format!(
                        "tradeoff cost got {} targets",
                        targets.len()
                    )));
                }
                let cw = self.target_loss(0, carrier, &targets[0])?;
                let cs = self.carrier_loss(carrier, &targets[0])?;
                cw * f_multiplier(cs, *epsilon)
            }
        };
        Ok(raw * self.scale + self.shift)
    }

    pub fn terminal_cost(&self, carrier: &CarrierState, targets: &[TargetGeometry]) -> Result<f64> {
        match self.terminal {
            TerminalMode::Zero => Ok(0.0),
            TerminalMode::SameAsStage => self.stage_cost(carrier, targets),
        }
    }
}

/// Piecewise-linear multiplier: 1 below 80 dB, `epsilon` at or above 200 dB,
/// linear in between with f(80) = 1 and f(200) = epsilon.
pub fn f_multiplier(x: f64, epsilon: f64) -> f64 {
    if x < 80.0 {
        1.0
    } else if x >= 200.0 {
        epsilon
    } else {
        let a = (epsilon - 1.0) / 120.0;
        let b = (200.0 - 80.0 * epsilon) / 120.0;
        a * x + b
    }
}

/// Split a flat (4 per target) chain point into per-target geometries.
pub fn target_geometries(point: &[f64], depths: &[f64]) -> Vec<TargetGeometry> {
    assert_eq!(point.len(), 4 * depths.len());
    depths
        .iter()
        .enumerate()
        .map(|(k, &depth)| TargetGeometry {
            x: point[4 * k],
            y: point[4 * k + 2],
            depth,
        })
        .collect()
}

/// One layer of carrier positions reachable at a given time, keyed by the
/// integer offset triple from the start position.
#[derive(Debug, Clone)]
pub struct CarrierLayer {
    /// Offsets in lexicographic order.
    pub offsets: Vec<[i32; 3]>,
    index: HashMap<[i32; 3], usize>,
}

impl CarrierLayer {
    fn from_offsets(offsets: Vec<[i32; 3]>) -> Self {
        let index = offsets
            .iter()
            .enumerate()
            .map(|(i, &o)| (o, i))
            .collect();
        CarrierLayer { offsets, index }
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    pub fn index_of(&self, offset: &[i32; 3]) -> Option<usize> {
        self.index.get(offset).copied()
    }
}

/// Reachable carrier lattice, one layer per time step.
#[derive(Debug, Clone)]
pub struct CarrierGrid {
    pub s0: CarrierState,
    pub space: ActionSpace,
    pub layers: Vec<CarrierLayer>,
}

impl CarrierGrid {
    /// Breadth-first expansion of the reachable offsets over `horizon` steps.
    pub fn build(space: &ActionSpace, s0: &CarrierState, horizon: usize) -> Result<Self> {
        space.validate()?;
        if !(s0.depth() >= space.depth_bounds[0] && s0.depth() <= space.depth_bounds[1]) {
            return Err(Error::Config(format!(
                "carrier start depth {} outside bounds {:?}",
                s0.depth(),
                space.depth_bounds
            )));
        }
        let mut layers = vec![CarrierLayer::from_offsets(vec![[0, 0, 0]])];
        for _ in 0..horizon {
            let prev = layers.last().unwrap();
            let mut next: std::collections::BTreeSet<[i32; 3]> = Default::default();
            for off in &prev.offsets {
                let here = position_of(s0, space, off);
                for a in feasible_actions(space, &here) {
                    next.insert([
                        off[0] + a.steps[0],
                        off[1] + a.steps[1],
                        off[2] + a.steps[2],
                    ]);
                }
            }
            layers.push(CarrierLayer::from_offsets(next.into_iter().collect()));
        }
        Ok(CarrierGrid {
            s0: *s0,
            space: space.clone(),
            layers,
        })
    }

    pub fn position(&self, offset: &[i32; 3]) -> CarrierState {
        position_of(&self.s0, &self.space, offset)
    }
}

fn position_of(s0: &CarrierState, space: &ActionSpace, offset: &[i32; 3]) -> CarrierState {
    CarrierState::new(
        s0.x() + offset[0] as f64 * space.deltas[0],
        s0.y() + offset[1] as f64 * space.deltas[1],
        s0.depth() + offset[2] as f64 * space.deltas[2],
    )
}

/// Cost-to-go `J*_t` for every (position, cell) product state.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    pub cells: usize,
    /// `values[t][pos_idx * cells + cell]`.
    pub values: Vec<Vec<f64>>,
}

impl ValueTable {
    pub fn value(&self, t: usize, pos_idx: usize, cell: usize) -> f64 {
        self.values[t][pos_idx * self.cells + cell]
    }
}

/// Optimal action for every (position, cell) product state, `t = 0..horizon`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyTable {
    pub cells: usize,
    /// `actions[t][pos_idx * cells + cell]`.
    pub actions: Vec<Vec<Action>>,
}

impl PolicyTable {
    pub fn action(&self, t: usize, pos_idx: usize, cell: usize) -> Action {
        self.actions[t][pos_idx * self.cells + cell]
    }
}

/// Solver output bundle.
#[derive(Debug, Clone)]
pub struct Solution {
    pub grid: CarrierGrid,
    pub values: ValueTable,
    pub policy: PolicyTable,
}

/// Per-position stage costs against every cell of a grid layer.
fn cost_layer(
    grid: &CarrierGrid,
    chain: &QuantizedChain,
    cost: &CostModel,
    depths: &[f64],
    t: usize,
    terminal: bool,
) -> Result<Vec<Vec<f64>>> {
    let layer = &grid.layers[t];
    let qgrid = &chain.grids[t];
    let m = qgrid.len();
    let rows = exec::map_indexed(layer.len(), |pos_idx| {
        let carrier = grid.position(&layer.offsets[pos_idx]);
        let mut row = Vec::with_capacity(m);
        for j in 0..m {
            let targets = target_geometries(qgrid.point(j), depths);
            let c = if terminal {
                cost.terminal_cost(&carrier, &targets)
            } else {
                cost.stage_cost(&carrier, &targets)
            };
            match c {
                Ok(v) => row.push(v),
                Err(e) => return Err(e),
            }
        }
        Ok(row)
    });
    rows.into_iter().collect()
}

/// Backward dynamic programming over the product space. Stage costs are
/// evaluated at the destination state `(l + a, j)`; ties between actions are
/// broken by the lexicographic action order.
pub fn solve(
    chain: &QuantizedChain,
    space: &ActionSpace,
    s0: &CarrierState,
    cost: &CostModel,
    target_depths: &[f64],
    direction: Direction,
) -> Result<Solution> {
    let horizon = chain.horizon();
    if chain.grids.len() != horizon + 1 {
        return Err(Error::Config(format!(
            "chain has {} grids for horizon {}",
            chain.grids.len(),
            horizon
        )));
    }
    if chain.dim != 4 * target_depths.len() {
        return Err(Error::Config(format!(
            "chain dim {} does not match {} targets",
            chain.dim,
            target_depths.len()
        )));
    }
    cost.validate(target_depths.len())?;
    for &d in target_depths {
        for f in &cost.target_fields {
            if d < 0.0 || d > f.water_depth {
                return Err(Error::Config(format!(
                    "target depth {d} outside the water column"
                )));
            }
        }
    }
    let grid = CarrierGrid::build(space, s0, horizon)?;
    let m = chain.points();
    let mut values = vec![Vec::new(); horizon + 1];
    let mut actions = vec![Vec::new(); horizon];

    // terminal layer
    let terminal_costs = cost_layer(&grid, chain, cost, target_depths, horizon, true)?;
    values[horizon] = terminal_costs.into_iter().flatten().collect();

    for t in (0..horizon).rev() {
        let stage_costs = cost_layer(&grid, chain, cost, target_depths, t + 1, false)?;
        let layer = &grid.layers[t];
        let next_layer = &grid.layers[t + 1];
        let j_next = &values[t + 1];
        let results = exec::map_indexed(layer.len(), |pos_idx| {
            let offset = layer.offsets[pos_idx];
            let here = grid.position(&offset);
            let acts = feasible_actions(&grid.space, &here);
            let mut best_q = vec![
                match direction {
                    Direction::Min => f64::INFINITY,
                    Direction::Max => f64::NEG_INFINITY,
                };
                m
            ];
            let mut best_a = vec![Action::ZERO; m];
            let mut dest_value = vec![0.0; m];
            for a in &acts {
                let dest = [
                    offset[0] + a.steps[0],
                    offset[1] + a.steps[1],
                    offset[2] + a.steps[2],
                ];
                let dest_idx = next_layer
                    .index_of(&dest)
                    .expect("feasible destination missing from the reachable layer");
                for j in 0..m {
                    dest_value[j] = stage_costs[dest_idx][j] + j_next[dest_idx * m + j];
                }
                for i in 0..m {
                    let row = chain.transition_row(t, i);
                    let mut q = 0.0;
                    for j in 0..m {
                        q += row[j] * dest_value[j];
                    }
                    let better = match direction {
                        Direction::Min => q < best_q[i],
                        Direction::Max => q > best_q[i],
                    };
                    if better {
                        best_q[i] = q;
                        best_a[i] = *a;
                    }
                }
            }
            (best_q, best_a)
        });
        let mut layer_values = Vec::with_capacity(layer.len() * m);
        let mut layer_actions = Vec::with_capacity(layer.len() * m);
        for (q, a) in results {
            layer_values.extend(q);
            layer_actions.extend(a);
        }
        values[t] = layer_values;
        actions[t] = layer_actions;
    }

    Ok(Solution {
        grid,
        values: ValueTable { cells: m, values },
        policy: PolicyTable { cells: m, actions },
    })
}

/// Monte Carlo estimate of the expected total cost of following `policy`
/// on the quantized chain from `(s0, start_cell)`; when `start_cell` is
/// `None` the initial cell is drawn from the chain's time-0 weights.
/// Returns `(mean, standard error)`.
pub fn evaluate_policy(
    solution: &Solution,
    chain: &QuantizedChain,
    cost: &CostModel,
    target_depths: &[f64],
    runs: usize,
    seed: u64,
    start_cell: Option<usize>,
) -> Result<(f64, f64)> {
    if runs == 0 {
        return Err(Error::Config("need at least one evaluation run".into()));
    }
    let horizon = chain.horizon();
    if solution.policy.actions.len() != horizon {
        return Err(Error::Config("policy horizon does not match the chain".into()));
    }
    const CHUNK: usize = 256;
    let n_chunks = runs.div_ceil(CHUNK);
    let chunk_stats = exec::map_indexed(n_chunks, |c| -> Result<(f64, f64, usize)> {
        let lo = c * CHUNK;
        let hi = ((c + 1) * CHUNK).min(runs);
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0xE7A1, c as u64));
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in lo..hi {
            let mut cell = match start_cell {
                Some(i) => i,
                None => sample_index(&chain.weights[0], rng.random::<f64>()),
            };
            let mut pos = 0usize; // index of [0,0,0] is 0 in layer 0
            let mut total = 0.0;
            for t in 0..horizon {
                let a = solution.policy.action(t, pos, cell);
                let offset = solution.grid.layers[t].offsets[pos];
                let dest = [
                    offset[0] + a.steps[0],
                    offset[1] + a.steps[1],
                    offset[2] + a.steps[2],
                ];
                pos = solution.grid.layers[t + 1]
                    .index_of(&dest)
                    .ok_or_else(|| Error::Contract("policy walked off the reachable grid".into()))?;
                cell = sample_index(chain.transition_row(t, cell), rng.random::<f64>());
                let carrier = solution.grid.position(&dest);
                let targets = target_geometries(chain.grids[t + 1].point(cell), target_depths);
                total += cost.stage_cost(&carrier, &targets)?;
            }
            let offset = solution.grid.layers[horizon].offsets[pos];
            let carrier = solution.grid.position(&offset);
            let targets = target_geometries(chain.grids[horizon].point(cell), target_depths);
            total += cost.terminal_cost(&carrier, &targets)?;
            sum += total;
            sumsq += total * total;
        }
        Ok((sum, sumsq, hi - lo))
    });
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    let mut n = 0usize;
    for s in chunk_stats {
        let (a, b, k) = s?;
        sum += a;
        sumsq += b;
        n += k;
    }
    let mean = sum / n as f64;
    let var = if n > 1 {
        ((sumsq - n as f64 * mean * mean) / (n as f64 - 1.0)).max(0.0)
    } else {
        0.0
    };
    Ok((mean, (var / n as f64).sqrt()))
}

fn sample_index(weights: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}

/// Flat archive of a solved instance, keyed by time, carrier offset and cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TablesArchive {
    pub horizon: usize,
    pub cells: usize,
    pub layers: Vec<ArchiveLayer>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveLayer {
    pub t: usize,
    pub entries: Vec<ArchiveEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveEntry {
    /// Carrier offset triple from the start position.
    pub offset: [i32; 3],
    /// Quantization cell index.
    pub cell: usize,
    /// Cost-to-go.
    pub value: f64,
    /// Optimal action; absent on the terminal layer.
    pub action: Option<[i32; 3]>,
}

pub fn to_archive(solution: &Solution) -> TablesArchive {
    let m = solution.values.cells;
    let horizon = solution.policy.actions.len();
    let layers = (0..=horizon)
        .map(|t| {
            let layer = &solution.grid.layers[t];
            let mut entries = Vec::with_capacity(layer.len() * m);
            for (pos_idx, offset) in layer.offsets.iter().enumerate() {
                for cell in 0..m {
                    entries.push(ArchiveEntry {
                        offset: *offset,
                        cell,
                        value: solution.values.value(t, pos_idx, cell),
                        action: (t < horizon)
                            .then(|| solution.policy.action(t, pos_idx, cell).steps),
                    });
                }
            }
            ArchiveLayer { t, entries }
        })
        .collect();
    TablesArchive {
        horizon,
        cells: m,
        layers,
    }
}

pub fn save_tables<W: Write>(archive: &TablesArchive, out: W) -> Result<()> {
    serde_json::to_writer(out, archive)
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}

pub fn load_tables<R: Read>(input: R) -> Result<TablesArchive> {
    serde_json::from_reader(input)
        .map_err(|e| Error::Config(format!("invalid tables archive: {e}")))
}
