//! Marginal quantization of a Markov chain.
//!
//! The continuous-state target chain is approximated by per-step point grids
//! trained with competitive learning vector quantization: for every simulated
//! trajectory and time step, the closest grid point (competitive phase) is
//! pulled toward the sample by the current learning rate (learning phase).
//! Weights and transition matrices between consecutive grids are then
//! estimated from fresh Monte Carlo trajectories by cell counting, which
//! makes every row stochastic by construction.
//!
//! Distances are weighted squared Euclidean so that velocity components can
//! be made commensurate with positions over one decision step.

use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::util::derive_seed;

/// Anything that can draw i.i.d. trajectories of the chain to be quantized.
pub trait ChainSimulator: Sync {
    fn dim(&self) -> usize;

    /// One trajectory `(w_0, ..., w_horizon)`, flattened to
    /// `(horizon + 1) * dim` values.
    fn sample_path(&self, horizon: usize, rng: &mut ChaCha8Rng) -> Vec<f64>;
}

/// Grid of `M` points in `dim` dimensions for one time step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizationGrid {
    pub t: usize,
    pub dim: usize,
    /// Row-major `M x dim` point storage.
    pub points: Vec<f64>,
}

impl QuantizationGrid {
    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }
}

/// Finite-chain approximation: per-step grids, cell weights, and row-stochastic
/// transition matrices between consecutive grids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizedChain {
    pub dim: usize,
    /// Grids for `t = 0..=horizon`.
    pub grids: Vec<QuantizationGrid>,
    /// `weights[t][i]`: probability of cell `i` at time `t`.
    pub weights: Vec<Vec<f64>>,
    /// `transitions[t]`: row-major `M x M` matrix from grid `t` to grid `t+1`.
    pub transitions: Vec<Vec<f64>>,
}

impl QuantizedChain {
    pub fn horizon(&self) -> usize {
        self.transitions.len()
    }

    pub fn points(&self) -> usize {
        self.grids.first().map_or(0, |g| g.len())
    }

    pub fn transition_row(&self, t: usize, i: usize) -> &[f64] {
        let m = self.grids[t].len();
        &self.transitions[t][i * m..(i + 1) * m]
    }
}

/// CLVQ training parameters. The learning-rate sequence is
/// `gamma_m = gamma0 / (1 + gamma_decay * m)` over the trajectory counter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClvqParams {
    /// Points per grid (M).
    pub points: usize,
    /// Training trajectories (NR).
    pub runs: usize,
    /// Chain horizon: grids are built for `t = 0..=horizon`.
    pub horizon: usize,
    pub gamma0: f64,
    pub gamma_decay: f64,
    pub seed: u64,
}

impl ClvqParams {
    /// Decay constant that leaves the final step around `gamma0 / (1 + gamma0 M)`.
    pub fn default_decay(gamma0: f64, points: usize, runs: usize) -> f64 {
        if runs == 0 {
            0.0
        } else {
            gamma0 * points as f64 / runs as f64
        }
    }

    pub fn new(points: usize, runs: usize, horizon: usize, seed: u64) -> Self {
        let gamma0 = 0.1;
        ClvqParams {
            points,
            runs,
            horizon,
            gamma0,
            gamma_decay: Self::default_decay(gamma0, points, runs),
            seed,
        }
    }

    pub fn gamma(&self, m: usize) -> f64 {
        self.gamma0 / (1.0 + self.gamma_decay * m as f64)
    }

    pub fn validate(&self) -> Result<()> {
        if self.points == 0 {
            return Err(Error::Config("quantization needs at least one point".into()));
        }
        if !(self.gamma0 > 0.0 && self.gamma0 <= 1.0) {
            return Err(Error::Config(format!(
                "gamma0 {} outside (0, 1]",
                self.gamma0
            )));
        }
        if self.gamma_decay < 0.0 {
            return Err(Error::Config("gamma_decay must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Metric weights `(1, lambda^2)` per (position, velocity) pair, so a velocity
/// error of `e` counts like the `lambda * e` position error it causes over one
/// step of `lambda` seconds.
pub fn default_metric(dim: usize, lambda: f64) -> Vec<f64> {
    (0..dim)
        .map(|k| if k % 2 == 0 { 1.0 } else { lambda * lambda })
        .collect()
}

fn weighted_sq_dist(a: &[f64], b: &[f64], metric: &[f64]) -> f64 {
    let mut acc = 0.0;
    for k in 0..a.len() {
        let d = a[k] - b[k];
        acc += metric[k] * d * d;
    }
    acc
}

/// Index of the grid point closest to `p` under the weighted squared
/// Euclidean metric; ties go to the lowest index.
pub fn nearest(grid: &QuantizationGrid, p: &[f64], metric: &[f64]) -> usize {
    debug_assert!(!grid.is_empty());
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for i in 0..grid.len() {
        let d = weighted_sq_dist(grid.point(i), p, metric);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

fn init_grids<S: ChainSimulator>(
    sim: &S,
    points: usize,
    horizon: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<QuantizationGrid>> {
    let dim = sim.dim();
    let mut grids: Vec<Vec<f64>> = vec![Vec::with_capacity(points * dim); horizon + 1];
    let max_paths = 1000.max(200 * points);
    for _ in 0..max_paths {
        if grids.iter().all(|g| g.len() == points * dim) {
            break;
        }
        let path = sim.sample_path(horizon, rng);
        for (t, grid) in grids.iter_mut().enumerate() {
            if grid.len() == points * dim {
                continue;
            }
            let w = &path[t * dim..(t + 1) * dim];
            let duplicate = grid.chunks(dim).any(|q| q == w);
            if !duplicate {
                grid.extend_from_slice(w);
            }
        }
    }
    if let Some((t, g)) = grids
        .iter()
        .enumerate()
        .find(|(_, g)| g.len() != points * dim)
    {
        return Err(Error::Init(format!(
            "could not collect {} distinct samples for grid t={} (got {})",
            points,
            t,
            g.len() / dim
        )));
    }
    Ok(grids
        .into_iter()
        .enumerate()
        .map(|(t, points)| QuantizationGrid { t, dim, points })
        .collect())
}

/// Train per-step grids with the extended CLVQ scheme: one competitive +
/// learning update per time step of each simulated trajectory. Deterministic
/// for a fixed `params.seed`.
pub fn clvq_train<S: ChainSimulator>(
    sim: &S,
    params: &ClvqParams,
    metric: &[f64],
    init: Option<Vec<QuantizationGrid>>,
) -> Result<Vec<QuantizationGrid>> {
    params.validate()?;
    let dim = sim.dim();
    if metric.len() != dim {
        return Err(Error::Config(format!(
            "metric has {} weights for a dim-{} chain",
            metric.len(),
            dim
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut grids = match init {
        Some(grids) => {
            if grids.len() != params.horizon + 1 {
                return Err(Error::Config(format!(
                    "expected {} initial grids, got {}",
                    params.horizon + 1,
                    grids.len()
                )));
            }
            for g in &grids {
                if g.dim != dim || g.len() != params.points {
                    return Err(Error::Config("initial grid shape mismatch".into()));
                }
            }
            grids
        }
        None => init_grids(sim, params.points, params.horizon, &mut rng)?,
    };
    for m in 0..params.runs {
        let gamma = params.gamma(m);
        let path = sim.sample_path(params.horizon, &mut rng);
        for (t, grid) in grids.iter_mut().enumerate() {
            let w = &path[t * dim..(t + 1) * dim];
            let winner = nearest(grid, w, metric);
            let y = &mut grid.points[winner * dim..(winner + 1) * dim];
            for k in 0..dim {
                y[k] -= gamma * (y[k] - w[k]);
            }
        }
    }
    Ok(grids)
}

/// Mean weighted squared distance from each sample (flat `n x dim`) to its
/// nearest grid point.
pub fn distortion(grid: &QuantizationGrid, samples: &[f64], metric: &[f64]) -> f64 {
    let dim = grid.dim;
    assert!(!samples.is_empty() && samples.len() % dim == 0);
    let n = samples.len() / dim;
    let mut acc = 0.0;
    for s in samples.chunks(dim) {
        let i = nearest(grid, s, metric);
        acc += weighted_sq_dist(grid.point(i), s, metric);
    }
    acc / n as f64
}

const ESTIMATE_CHUNK: usize = 1024;

struct CellCounts {
    visits: Vec<u64>,
    joint: Vec<u64>,
}

/// Estimate cell weights and transition matrices from `samples` fresh
/// trajectories. Trajectories are counted in fixed-size chunks with seeds
/// derived from `(seed, chunk index)` and merged in chunk order, so the
/// result is identical for any worker count.
pub fn estimate_transitions<S: ChainSimulator>(
    sim: &S,
    grids: Vec<QuantizationGrid>,
    metric: &[f64],
    samples: usize,
    seed: u64,
) -> Result<QuantizedChain> {
    if grids.is_empty() {
        return Err(Error::Config("no grids to estimate transitions on".into()));
    }
    if samples == 0 {
        return Err(Error::Config("need at least one sample trajectory".into()));
    }
    let dim = sim.dim();
    if metric.len() != dim || grids.iter().any(|g| g.dim != dim) {
        return Err(Error::Config("grid/metric dimension mismatch".into()));
    }
    let m = grids[0].len();
    if grids.iter().any(|g| g.len() != m) {
        return Err(Error::Config("grids must share a common point count".into()));
    }
    let horizon = grids.len() - 1;
    let n_chunks = samples.div_ceil(ESTIMATE_CHUNK);
    let grids_ref = &grids;
    let chunk_counts = exec::map_indexed(n_chunks, |c| {
        let lo = c * ESTIMATE_CHUNK;
        let hi = ((c + 1) * ESTIMATE_CHUNK).min(samples);
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x51, c as u64));
        let mut counts = CellCounts {
            visits: vec![0; (horizon + 1) * m],
            joint: vec![0; horizon.max(1) * m * m],
        };
        let mut cells = vec![0usize; horizon + 1];
        for _ in lo..hi {
            let path = sim.sample_path(horizon, &mut rng);
            for t in 0..=horizon {
                let w = &path[t * dim..(t + 1) * dim];
                cells[t] = nearest(&grids_ref[t], w, metric);
                counts.visits[t * m + cells[t]] += 1;
            }
            for t in 0..horizon {
                counts.joint[t * m * m + cells[t] * m + cells[t + 1]] += 1;
            }
        }
        counts
    });
    let mut visits = vec![0u64; (horizon + 1) * m];
    let mut joint = vec![0u64; horizon.max(1) * m * m];
    for c in chunk_counts {
        for (acc, v) in visits.iter_mut().zip(&c.visits) {
            *acc += v;
        }
        for (acc, v) in joint.iter_mut().zip(&c.joint) {
            *acc += v;
        }
    }
    let weights: Vec<Vec<f64>> = (0..=horizon)
        .map(|t| {
            (0..m)
                .map(|i| visits[t * m + i] as f64 / samples as f64)
                .collect()
        })
        .collect();
    let mut transitions = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let mut matrix = vec![0.0; m * m];
        for i in 0..m {
            let denom = visits[t * m + i];
            if denom == 0 {
                // unvisited cell: send all mass to the next grid's closest point
                let j = nearest(&grids[t + 1], grids[t].point(i), metric);
                matrix[i * m + j] = 1.0;
            } else {
                for j in 0..m {
                    matrix[i * m + j] = joint[t * m * m + i * m + j] as f64 / denom as f64;
                }
            }
        }
        transitions.push(matrix);
    }
    Ok(QuantizedChain {
        dim,
        grids,
        weights,
        transitions,
    })
}

pub fn save_chain<W: Write>(chain: &QuantizedChain, out: W) -> Result<()> {
    serde_json::to_writer(out, chain)
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}

pub fn load_chain<R: Read>(input: R) -> Result<QuantizedChain> {
    serde_json::from_reader(input)
        .map_err(|e| Error::Config(format!("invalid chain archive: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    /// i.i.d. standard Gaussian at every step (no temporal structure).
    struct IidGaussian {
        dim: usize,
    }

    impl ChainSimulator for IidGaussian {
        fn dim(&self) -> usize {
            self.dim
        }

        fn sample_path(&self, horizon: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
            (0..(horizon + 1) * self.dim)
                .map(|_| rng.sample(StandardNormal))
                .collect()
        }
    }

    /// Stationary AR(1): w' = (w + e)/sqrt(2), stationary N(0,1), corr 1/sqrt(2).
    struct Ar1 {
        horizon_dim: usize,
    }

    impl ChainSimulator for Ar1 {
        fn dim(&self) -> usize {
            self.horizon_dim
        }

        fn sample_path(&self, horizon: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
            let mut w: f64 = rng.sample(StandardNormal);
            let mut out = vec![w];
            for _ in 0..horizon {
                let e: f64 = rng.sample(StandardNormal);
                w = (w + e) / 2f64.sqrt();
                out.push(w);
            }
            out
        }
    }

    /// Constant-in-time chain: w_t = w_0 ~ N(0, I).
    struct Frozen {
        dim: usize,
    }

    impl ChainSimulator for Frozen {
        fn dim(&self) -> usize {
            self.dim
        }

        fn sample_path(&self, horizon: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
            let w: Vec<f64> = (0..self.dim).map(|_| rng.sample(StandardNormal)).collect();
            let mut out = Vec::with_capacity((horizon + 1) * self.dim);
            for _ in 0..=horizon {
                out.extend_from_slice(&w);
            }
            out
        }
    }

    fn grid_from(points: Vec<f64>, dim: usize) -> QuantizationGrid {
        QuantizationGrid { t: 0, dim, points }
    }

    #[test]
    fn nearest_is_idempotent_on_grid_points() {
        let grid = grid_from(vec![0.0, 0.0, 3.0, 4.0, -1.0, 2.0], 2);
        let metric = vec![1.0, 1.0];
        for i in 0..grid.len() {
            assert_eq!(nearest(&grid, grid.point(i), &metric), i);
        }
    }

    #[test]
    fn nearest_breaks_ties_low() {
        // points at +/-1 are equidistant from 0; index 0 must win
        let grid = grid_from(vec![1.0, -1.0, 5.0], 1);
        assert_eq!(nearest(&grid, &[0.0], &[1.0]), 0);
    }

    #[test]
    fn nearest_matches_linear_scan_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let dim = 3;
        let metric = vec![1.0, 4.0, 0.25];
        let points: Vec<f64> = (0..40 * dim).map(|_| rng.sample(StandardNormal)).collect();
        let grid = grid_from(points, dim);
        for _ in 0..1000 {
            let q: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for i in 0..grid.len() {
                let p = grid.point(i);
                let d: f64 = (0..dim).map(|k| metric[k] * (p[k] - q[k]).powi(2)).sum();
                if d < best_d {
                    best_d = d;
                    best = i;
                }
            }
            assert_eq!(nearest(&grid, &q, &metric), best);
        }
    }

    #[test]
    fn zero_learning_rate_keeps_grids() {
        let sim = IidGaussian { dim: 2 };
        let params = ClvqParams {
            points: 8,
            runs: 500,
            horizon: 2,
            gamma0: 1e-300, // effectively zero while satisfying gamma0 > 0
            gamma_decay: 0.0,
            seed: 9,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let init = init_grids(&sim, 8, 2, &mut rng).unwrap();
        let trained = clvq_train(&sim, &params, &[1.0, 1.0], Some(init.clone())).unwrap();
        for (a, b) in init.iter().zip(&trained) {
            for (x, y) in a.points.iter().zip(&b.points) {
                assert!((x - y).abs() < 1e-290);
            }
        }
    }

    #[test]
    fn single_point_converges_to_running_mean() {
        // with M=1 and gamma_m = 1/(1+m), CLVQ is exactly the running mean
        let sim = IidGaussian { dim: 2 };
        let params = ClvqParams {
            points: 1,
            runs: 20_000,
            horizon: 0,
            gamma0: 1.0,
            gamma_decay: 1.0,
            seed: 31,
        };
        let trained = clvq_train(&sim, &params, &[1.0, 1.0], None).unwrap();
        // oracle: mean of the same training stream, reproduced by reseeding
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let _init = init_grids(&sim, 1, 0, &mut rng).unwrap();
        let mut sum = [0.0f64; 2];
        for _ in 0..params.runs {
            let p = sim.sample_path(0, &mut rng);
            sum[0] += p[0];
            sum[1] += p[1];
        }
        let mean = [sum[0] / params.runs as f64, sum[1] / params.runs as f64];
        let pt = trained[0].point(0);
        assert!(
            (pt[0] - mean[0]).abs() < 0.1 && (pt[1] - mean[1]).abs() < 0.1,
            "point {pt:?} vs mean {mean:?}"
        );
    }

    #[test]
    fn training_reduces_distortion() {
        let sim = IidGaussian { dim: 2 };
        let params = ClvqParams {
            points: 16,
            runs: 100_000,
            horizon: 0,
            gamma0: 0.1,
            gamma_decay: ClvqParams::default_decay(0.1, 16, 100_000),
            seed: 77,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let init = init_grids(&sim, 16, 0, &mut rng).unwrap();
        let trained = clvq_train(&sim, &params, &[1.0, 1.0], Some(init.clone())).unwrap();
        let mut eval_rng = ChaCha8Rng::seed_from_u64(1234);
        let held_out: Vec<f64> = (0..200_000).map(|_| eval_rng.sample(StandardNormal)).collect();
        let d_init = distortion(&init[0], &held_out, &[1.0, 1.0]);
        let d_trained = distortion(&trained[0], &held_out, &[1.0, 1.0]);
        assert!(
            d_trained < d_init,
            "trained {d_trained} not below initial {d_init}"
        );
    }

    #[test]
    fn init_fails_without_enough_distinct_samples() {
        // deterministic constant chain: exactly one distinct value ever
        struct Constant;
        impl ChainSimulator for Constant {
            fn dim(&self) -> usize {
                1
            }
            fn sample_path(&self, horizon: usize, _rng: &mut ChaCha8Rng) -> Vec<f64> {
                vec![1.0; horizon + 1]
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            init_grids(&Constant, 2, 1, &mut rng),
            Err(Error::Init(_))
        ));
        assert!(init_grids(&Constant, 1, 1, &mut rng).is_ok());
    }

    #[test]
    fn distortion_on_grid_points_is_zero() {
        let grid = grid_from(vec![0.0, 1.0, 2.0, 3.0], 2);
        let samples = grid.points.clone();
        assert_eq!(distortion(&grid, &samples, &[1.0, 1.0]), 0.0);
    }

    #[test]
    fn single_point_distortion_is_sample_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 5000;
        let samples: Vec<f64> = (0..2 * n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let mut mean = [0.0f64; 2];
        for s in samples.chunks(2) {
            mean[0] += s[0];
            mean[1] += s[1];
        }
        mean[0] /= n as f64;
        mean[1] /= n as f64;
        let grid = grid_from(vec![mean[0], mean[1]], 2);
        let d = distortion(&grid, &samples, &[1.0, 1.0]);
        let mut trace = 0.0;
        for s in samples.chunks(2) {
            trace += (s[0] - mean[0]).powi(2) + (s[1] - mean[1]).powi(2);
        }
        trace /= n as f64;
        assert!((d - trace).abs() < 1e-10);
    }

    #[test]
    fn degenerate_chain_gives_identity_transitions() {
        let sim = Frozen { dim: 2 };
        let params = ClvqParams {
            points: 6,
            runs: 2000,
            horizon: 3,
            gamma0: 0.1,
            gamma_decay: ClvqParams::default_decay(0.1, 6, 2000),
            seed: 17,
        };
        let grids = clvq_train(&sim, &params, &[1.0, 1.0], None).unwrap();
        let chain = estimate_transitions(&sim, grids, &[1.0, 1.0], 4000, 18).unwrap();
        let m = chain.points();
        for t in 0..chain.horizon() {
            for i in 0..m {
                for j in 0..m {
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert_eq!(chain.transitions[t][i * m + j], expect, "t={t} i={i} j={j}");
                }
            }
        }
    }

    #[test]
    fn two_point_grid_matches_gaussian_orthant_probability() {
        // AR(1) with corr rho = 1/sqrt(2); cells split at 0 for grids {-c, +c}:
        // P(stay positive) = (1/4 + asin(rho)/(2pi)) / (1/2) = 3/4
        let sim = Ar1 { horizon_dim: 1 };
        let c = 0.7979;
        let grids = vec![
            grid_from(vec![-c, c], 1),
            QuantizationGrid {
                t: 1,
                dim: 1,
                points: vec![-c, c],
            },
        ];
        let ns = 200_000;
        let chain = estimate_transitions(&sim, grids, &[1.0], ns, 99).unwrap();
        let p_stay = chain.transitions[0][1 * 2 + 1];
        let se = (0.75 * 0.25 / (ns as f64 / 2.0)).sqrt();
        assert!(
            (p_stay - 0.75).abs() < 3.0 * se,
            "p_stay {p_stay} vs 0.75 +- {}",
            3.0 * se
        );
    }

    #[test]
    fn rows_sum_to_one_and_weights_normalize() {
        let sim = Ar1 { horizon_dim: 1 };
        let params = ClvqParams::new(12, 5000, 4, 41);
        let grids = clvq_train(&sim, &params, &[1.0], None).unwrap();
        let chain = estimate_transitions(&sim, grids, &[1.0], 20_000, 42).unwrap();
        let m = chain.points();
        for t in 0..chain.horizon() {
            for i in 0..m {
                let s: f64 = chain.transition_row(t, i).iter().sum();
                assert!((s - 1.0).abs() < 1e-9, "row sum {s}");
                assert!(chain.transition_row(t, i).iter().all(|&p| p >= 0.0));
            }
        }
        for w in &chain.weights {
            let s: f64 = w.iter().sum();
            assert!((s - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn chapman_consistency_of_weights() {
        let sim = Ar1 { horizon_dim: 1 };
        let params = ClvqParams::new(8, 4000, 3, 13);
        let grids = clvq_train(&sim, &params, &[1.0], None).unwrap();
        let chain = estimate_transitions(&sim, grids, &[1.0], 50_000, 14).unwrap();
        let m = chain.points();
        for t in 0..chain.horizon() {
            for j in 0..m {
                let propagated: f64 = (0..m)
                    .map(|i| chain.weights[t][i] * chain.transitions[t][i * m + j])
                    .sum();
                assert!(
                    (propagated - chain.weights[t + 1][j]).abs() < 1e-9,
                    "chapman slack at t={t} j={j}"
                );
            }
        }
    }

    #[test]
    fn grid_self_coding() {
        let sim = Ar1 { horizon_dim: 1 };
        let params = ClvqParams::new(10, 3000, 2, 55);
        let grids = clvq_train(&sim, &params, &[1.0], None).unwrap();
        for g in &grids {
            for i in 0..g.len() {
                assert_eq!(nearest(g, g.point(i), &[1.0]), i);
            }
        }
    }

    #[test]
    fn archive_round_trip_is_exact() {
        let sim = Ar1 { horizon_dim: 1 };
        let params = ClvqParams::new(5, 1500, 2, 3);
        let grids = clvq_train(&sim, &params, &[1.0], None).unwrap();
        let chain = estimate_transitions(&sim, grids, &[1.0], 4000, 4).unwrap();
        let mut buf = Vec::new();
        save_chain(&chain, &mut buf).unwrap();
        let loaded = load_chain(buf.as_slice()).unwrap();
        assert_eq!(chain, loaded);
    }

    #[test]
    fn estimation_is_deterministic_for_a_seed() {
        let sim = IidGaussian { dim: 2 };
        let params = ClvqParams::new(6, 800, 2, 21);
        let metric = vec![1.0, 1.0];
        let grids = clvq_train(&sim, &params, &metric, None).unwrap();
        let a = estimate_transitions(&sim, grids.clone(), &metric, 3000, 7).unwrap();
        let b = estimate_transitions(&sim, grids, &metric, 3000, 7).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]
        #[test]
        fn estimated_chains_are_stochastic(seed in 0u64..1000, m in 1usize..5, horizon in 1usize..4) {
            let sim = IidGaussian { dim: 2 };
            let params = ClvqParams::new(m, 300, horizon, seed);
            let metric = vec![1.0, 1.0];
            let grids = clvq_train(&sim, &params, &metric, None).unwrap();
            let chain = estimate_transitions(&sim, grids, &metric, 500, seed ^ 0xabc).unwrap();
            for t in 0..chain.horizon() {
                for i in 0..m {
                    let s: f64 = chain.transition_row(t, i).iter().sum();
                    prop_assert!((s - 1.0).abs() < 1e-9);
                }
            }
            for w in &chain.weights {
                let s: f64 = w.iter().sum();
                prop_assert!((s - 1.0).abs() < 1e-9);
            }
        }
    }
}
