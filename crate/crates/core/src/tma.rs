//! Target motion analysis: bearing/frequency measurements and an unscented
//! Kalman filter over the 4-d target state.
//!
//! The dynamics are linear-Gaussian, so prediction is the exact Kalman
//! recursion; only the update goes through sigma points. Bearings are
//! measured clockwise from north (+y) and live in `(-pi, pi]`; all angle
//! arithmetic in the update is wrapped so an estimate near +pi and a
//! measurement near -pi produce a small innovation, not one of ~2 pi.

use nalgebra::{Cholesky, Matrix2, Matrix4, SymmetricEigen, Vector2, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::dynamics::{CarrierState, TargetModel, TargetState};
use crate::error::{Error, Result};

/// One sensor report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    /// Radians, clockwise from north, in `(-pi, pi]`.
    pub bearing: f64,
    /// Received frequency (Hz).
    pub frequency: f64,
    pub t: usize,
}

/// Sensor model: emitted frequency, sound speed and noise levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeasurementModel {
    pub f0: f64,
    pub c_sound: f64,
    pub sigma_bearing: f64,
    pub sigma_freq: f64,
}

impl Default for MeasurementModel {
    fn default() -> Self {
        MeasurementModel {
            f0: 300.0,
            c_sound: 1500.0,
            sigma_bearing: 1.0_f64.to_radians(),
            sigma_freq: 0.05,
        }
    }
}

impl MeasurementModel {
    pub fn validate(&self) -> Result<()> {
        if self.sigma_bearing <= 0.0 || self.sigma_freq <= 0.0 {
            return Err(Error::Config("measurement noise stds must be positive".into()));
        }
        if self.c_sound <= 0.0 {
            return Err(Error::Config("sound speed must be positive".into()));
        }
        Ok(())
    }

    pub fn noise_cov(&self) -> Matrix2<f64> {
        Matrix2::new(
            self.sigma_bearing.powi(2),
            0.0,
            0.0,
            self.sigma_freq.powi(2),
        )
    }
}

/// Filter state: Gaussian posterior over the 4-d target state.
#[derive(Debug, Clone, PartialEq)]
pub struct UkfState {
    pub mean: Vector4<f64>,
    pub cov: Matrix4<f64>,
    pub t: usize,
}

/// Sigma-point scaling parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UkfParams {
    pub alpha: f64,
    pub beta: f64,
    pub kappa: f64,
}

impl Default for UkfParams {
    fn default() -> Self {
        UkfParams {
            alpha: 0.5,
            beta: 2.0,
            kappa: 0.0,
        }
    }
}

impl UkfParams {
    const N: f64 = 4.0;

    fn lambda(&self) -> f64 {
        self.alpha * self.alpha * (Self::N + self.kappa) - Self::N
    }

    pub fn validate(&self) -> Result<()> {
        if Self::N + self.lambda() <= 0.0 {
            return Err(Error::Config(format!(
                "sigma-point scaling gives n + lambda = {} <= 0",
                Self::N + self.lambda()
            )));
        }
        Ok(())
    }
}

/// Wrap an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let mut x = a % TAU;
    if x <= -PI {
        x += TAU;
    } else if x > PI {
        x -= TAU;
    }
    x
}

/// Noise-free bearing/frequency of a target as seen from an observer.
/// Fails on horizontally coincident positions, where neither is defined.
pub fn project_measurement(
    w: &Vector4<f64>,
    observer: &CarrierState,
    observer_velocity: &Vector3<f64>,
    model: &MeasurementModel,
) -> Result<Vector2<f64>> {
    let dx = w[0] - observer.x();
    let dy = w[2] - observer.y();
    let range = (dx * dx + dy * dy).sqrt();
    if range < 1e-9 {
        return Err(Error::Numerical(
            "degenerate geometry: observer and target horizontally coincident".into(),
        ));
    }
    let bearing = dx.atan2(dy);
    let range_rate =
        (dx * (w[1] - observer_velocity[0]) + dy * (w[3] - observer_velocity[1])) / range;
    let frequency = model.f0 * (1.0 - range_rate / model.c_sound);
    Ok(Vector2::new(bearing, frequency))
}

/// Draw one noisy measurement; `noise` holds two standard-normal deviates.
pub fn measure(
    target: &TargetState,
    observer: &CarrierState,
    observer_velocity: &Vector3<f64>,
    model: &MeasurementModel,
    noise: (f64, f64),
    t: usize,
) -> Result<Measurement> {
    let clean = project_measurement(&target.w, observer, observer_velocity, model)?;
    Ok(Measurement {
        bearing: wrap_angle(clean[0] + noise.0 * model.sigma_bearing),
        frequency: clean[1] + noise.1 * model.sigma_freq,
        t,
    })
}

/// Exact linear-Gaussian prediction: `mean <- F mean`,
/// `cov <- F cov F' + K sigma^2 K'`.
pub fn ukf_predict(state: &UkfState, model: &TargetModel) -> Result<UkfState> {
    check_covariance(&state.cov)?;
    let f = model.transition_matrix();
    Ok(UkfState {
        mean: f * state.mean,
        cov: f * state.cov * f.transpose() + model.process_noise_cov(),
        t: state.t + 1,
    })
}

fn check_covariance(cov: &Matrix4<f64>) -> Result<()> {
    let asym = (cov - cov.transpose()).abs().max();
    if asym > 1e-9 {
        return Err(Error::Numerical(format!(
            "covariance asymmetry {asym:.3e} exceeds 1e-9"
        )));
    }
    let eig = SymmetricEigen::new(*cov);
    let min = eig.eigenvalues.min();
    if min < -1e-9 * eig.eigenvalues.max().max(1.0) {
        return Err(Error::Numerical(format!(
            "covariance not PSD (min eigenvalue {min:.3e})"
        )));
    }
    Ok(())
}

/// Measurement map fed to the unscented update. The residual hook lets the
/// bearing component wrap; the default is plain subtraction, which keeps the
/// transform exact for linear maps.
pub trait MeasurementMap {
    fn project(&self, w: &Vector4<f64>) -> Result<Vector2<f64>>;

    fn residual(&self, a: &Vector2<f64>, b: &Vector2<f64>) -> Vector2<f64> {
        a - b
    }

    fn normalize(&self, z: Vector2<f64>) -> Vector2<f64> {
        z
    }
}

/// The bearing/frequency map for a fixed observer state.
pub struct BearingFrequencyMap<'a> {
    pub model: &'a MeasurementModel,
    pub observer: CarrierState,
    pub observer_velocity: Vector3<f64>,
}

impl MeasurementMap for BearingFrequencyMap<'_> {
    fn project(&self, w: &Vector4<f64>) -> Result<Vector2<f64>> {
        project_measurement(w, &self.observer, &self.observer_velocity, self.model)
    }

    fn residual(&self, a: &Vector2<f64>, b: &Vector2<f64>) -> Vector2<f64> {
        Vector2::new(wrap_angle(a[0] - b[0]), a[1] - b[1])
    }

    fn normalize(&self, z: Vector2<f64>) -> Vector2<f64> {
        Vector2::new(wrap_angle(z[0]), z[1])
    }
}

/// Linear surrogate map `z = H w`, used to check the update against the
/// exact Kalman recursion.
pub struct LinearMap {
    pub h: nalgebra::Matrix2x4<f64>,
}

impl MeasurementMap for LinearMap {
    fn project(&self, w: &Vector4<f64>) -> Result<Vector2<f64>> {
        Ok(self.h * w)
    }
}

fn cholesky_with_jitter(cov: &Matrix4<f64>) -> Result<Cholesky<f64, nalgebra::U4>> {
    if let Some(chol) = Cholesky::new(*cov) {
        return Ok(chol);
    }
    let jitter = 1e-9 * cov.trace() / 4.0;
    let bumped = cov + Matrix4::identity() * jitter;
    Cholesky::new(bumped).ok_or_else(|| {
        Error::Numerical(format!(
            "covariance factorization failed even with jitter {jitter:.3e}"
        ))
    })
}

/// Unscented measurement update with an arbitrary map and noise covariance.
pub fn ukf_update_with<Mp: MeasurementMap>(
    state: &UkfState,
    z: &Vector2<f64>,
    map: &Mp,
    noise_cov: &Matrix2<f64>,
    params: &UkfParams,
) -> Result<UkfState> {
    params.validate()?;
    check_covariance(&state.cov)?;
    let n = 4usize;
    let lambda = params.lambda();
    let scale = (n as f64 + lambda).sqrt();
    let chol = cholesky_with_jitter(&state.cov)?;
    let l = chol.l();

    // 2n + 1 sigma points around the mean
    let mut points = Vec::with_capacity(2 * n + 1);
    points.push(state.mean);
    for k in 0..n {
        let col = scale * l.column(k);
        points.push(state.mean + col);
        points.push(state.mean - col);
    }
    let wm0 = lambda / (n as f64 + lambda);
    let wc0 = wm0 + 1.0 - params.alpha * params.alpha + params.beta;
    let wi = 1.0 / (2.0 * (n as f64 + lambda));

    let projected: Vec<Vector2<f64>> = points
        .iter()
        .map(|p| map.project(p))
        .collect::<Result<_>>()?;

    // mean via residuals against the central point, exact for linear maps
    let mut mean_acc = Vector2::zeros();
    for (i, zp) in projected.iter().enumerate() {
        let w = if i == 0 { wm0 } else { wi };
        mean_acc += w * map.residual(zp, &projected[0]);
    }
    let z_mean = map.normalize(projected[0] + mean_acc);

    let mut s = *noise_cov;
    let mut cross = nalgebra::Matrix4x2::<f64>::zeros();
    for (i, zp) in projected.iter().enumerate() {
        let w = if i == 0 { wc0 } else { wi };
        let dz = map.residual(zp, &z_mean);
        s += w * dz * dz.transpose();
        let dx = points[i] - state.mean;
        cross += w * dx * dz.transpose();
    }
    let s_inv = s.try_inverse().ok_or_else(|| {
        Error::Numerical("innovation covariance is singular; filter diverged".into())
    })?;
    let gain = cross * s_inv;
    let innovation = map.residual(z, &z_mean);
    let mean = state.mean + gain * innovation;
    let cov = state.cov - gain * s * gain.transpose();
    let cov = (cov + cov.transpose()) * 0.5;
    Ok(UkfState {
        mean,
        cov,
        t: state.t,
    })
}

/// Unscented update with the bearing/frequency map.
pub fn ukf_update(
    state: &UkfState,
    z: &Measurement,
    observer: &CarrierState,
    observer_velocity: &Vector3<f64>,
    model: &MeasurementModel,
    params: &UkfParams,
) -> Result<UkfState> {
    let map = BearingFrequencyMap {
        model,
        observer: *observer,
        observer_velocity: *observer_velocity,
    };
    ukf_update_with(
        state,
        &Vector2::new(z.bearing, z.frequency),
        &map,
        &model.noise_cov(),
        params,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::Matrix2x4;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn target(w: [f64; 4]) -> TargetState {
        TargetState::new(Vector4::from_column_slice(&w), 300.0)
    }

    fn still_observer() -> (CarrierState, Vector3<f64>) {
        (CarrierState::new(0.0, 0.0, 300.0), Vector3::zeros())
    }

    #[test]
    fn bearing_convention_east_and_north() {
        let (obs, vel) = still_observer();
        let model = MeasurementModel::default();
        let east = measure(&target([1000.0, 0.0, 0.0, 0.0]), &obs, &vel, &model, (0.0, 0.0), 0)
            .unwrap();
        assert_relative_eq!(east.bearing, FRAC_PI_2, epsilon = 1e-12);
        let north = measure(&target([0.0, 0.0, 1000.0, 0.0]), &obs, &vel, &model, (0.0, 0.0), 0)
            .unwrap();
        assert_relative_eq!(north.bearing, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn doppler_shift_for_closing_geometry() {
        // target due east closing at 10 m/s: f = 300 (1 + 10/1500) = 302
        let (obs, vel) = still_observer();
        let model = MeasurementModel::default();
        let z = measure(
            &target([10_000.0, -10.0, 0.0, 0.0]),
            &obs,
            &vel,
            &model,
            (0.0, 0.0),
            0,
        )
        .unwrap();
        assert_relative_eq!(z.frequency, 302.0, epsilon = 1e-12);
    }

    #[test]
    fn coincident_positions_are_degenerate() {
        let (obs, vel) = still_observer();
        let model = MeasurementModel::default();
        assert!(matches!(
            measure(&target([0.0, 1.0, 0.0, 1.0]), &obs, &vel, &model, (0.0, 0.0), 0),
            Err(Error::Numerical(_))
        ));
    }

    fn cv_model(sigma_eps: f64) -> TargetModel {
        TargetModel {
            step_seconds: 60.0,
            sigma_eps,
            mu0: Vector4::zeros(),
            sigma0: Matrix4::identity(),
            depth: 300.0,
        }
    }

    #[test]
    fn prediction_with_zero_covariance_tracks_the_deterministic_step() {
        let model = cv_model(0.0);
        let state = UkfState {
            mean: Vector4::new(100.0, 2.0, -50.0, 1.0),
            cov: Matrix4::zeros(),
            t: 0,
        };
        let next = ukf_predict(&state, &model).unwrap();
        assert_eq!(next.mean, model.step(&state.mean, &Vector2::zeros()));
        assert_eq!(next.cov, Matrix4::zeros());
        assert_eq!(next.t, 1);
    }

    #[test]
    fn unit_covariance_propagates_as_f_ft() {
        let model = TargetModel {
            step_seconds: 1.0,
            ..cv_model(0.0)
        };
        let state = UkfState {
            mean: Vector4::zeros(),
            cov: Matrix4::identity(),
            t: 0,
        };
        let next = ukf_predict(&state, &model).unwrap();
        let f = model.transition_matrix();
        assert_relative_eq!(next.cov, f * f.transpose(), epsilon = 1e-14);
    }

    #[test]
    fn fifty_step_prediction_matches_kalman_oracle() {
        let model = cv_model(0.02);
        let f = model.transition_matrix();
        let q = model.process_noise_cov();
        let mut state = UkfState {
            mean: Vector4::new(1000.0, -3.0, 2000.0, 4.0),
            cov: Matrix4::identity() * 100.0,
            t: 0,
        };
        let mut mean = state.mean;
        let mut cov = state.cov;
        for _ in 0..50 {
            state = ukf_predict(&state, &model).unwrap();
            mean = f * mean;
            cov = f * cov * f.transpose() + q;
        }
        assert_relative_eq!(state.mean, mean, epsilon = 1e-10);
        assert_relative_eq!(state.cov, cov, epsilon = 1e-10);
        assert_eq!(state.t, 50);
    }

    #[test]
    fn non_psd_covariance_is_rejected() {
        let model = cv_model(0.0);
        let mut cov = Matrix4::identity();
        cov[(0, 0)] = -1.0;
        let state = UkfState {
            mean: Vector4::zeros(),
            cov,
            t: 0,
        };
        assert!(matches!(ukf_predict(&state, &model), Err(Error::Numerical(_))));
    }

    #[test]
    fn linear_map_update_equals_kalman_update() {
        let h = Matrix2x4::new(1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0);
        let map = LinearMap { h };
        let r = Matrix2::new(25.0, 0.0, 0.0, 16.0);
        let params = UkfParams::default();
        let prior = UkfState {
            mean: Vector4::new(100.0, 1.0, -200.0, 2.0),
            cov: Matrix4::new(
                400.0, 10.0, 0.0, 0.0, 10.0, 4.0, 0.0, 0.0, 0.0, 0.0, 900.0, -20.0, 0.0, 0.0,
                -20.0, 9.0,
            ),
            t: 3,
        };
        let z = Vector2::new(130.0, -180.0);
        let posterior = ukf_update_with(&prior, &z, &map, &r, &params).unwrap();

        // exact Kalman update
        let s = h * prior.cov * h.transpose() + r;
        let k = prior.cov * h.transpose() * s.try_inverse().unwrap();
        let mean = prior.mean + k * (z - h * prior.mean);
        let cov = prior.cov - k * s * k.transpose();
        assert_relative_eq!(posterior.mean, mean, epsilon = 1e-8);
        assert_relative_eq!(posterior.cov, (cov + cov.transpose()) * 0.5, epsilon = 1e-8);
    }

    #[test]
    fn infinite_noise_update_is_a_near_no_op() {
        let model = MeasurementModel {
            sigma_bearing: 1.0_f64.to_radians() * 1e6,
            sigma_freq: 0.05 * 1e6,
            ..MeasurementModel::default()
        };
        let (obs, vel) = still_observer();
        let params = UkfParams::default();
        let prior = UkfState {
            mean: Vector4::new(10_000.0, -5.0, 5000.0, 1.0),
            cov: Matrix4::identity() * 1000.0,
            t: 0,
        };
        let z = Measurement {
            bearing: 1.0,
            frequency: 300.5,
            t: 0,
        };
        let post = ukf_update(&prior, &z, &obs, &vel, &model, &params).unwrap();
        for i in 0..4 {
            let rel = (post.mean[i] - prior.mean[i]).abs() / prior.mean[i].abs().max(1.0);
            assert!(rel < 1e-6, "component {i} moved by {rel}");
        }
        let cov_rel = (post.cov - prior.cov).abs().max() / 1000.0;
        assert!(cov_rel < 1e-6);
    }

    #[test]
    fn bearing_wrap_keeps_innovations_small() {
        // estimate just west of south (bearing near +pi), measurement just
        // east of south (near -pi): the wrapped innovation must stay small
        let (obs, vel) = still_observer();
        let model = MeasurementModel::default();
        let prior_mean = Vector4::new(-200.0, 0.0, -10_000.0, 0.0);
        let prior = UkfState {
            mean: prior_mean,
            cov: Matrix4::from_diagonal(&Vector4::new(1.0e4, 1.0, 1.0e4, 1.0)),
            t: 0,
        };
        let map = BearingFrequencyMap {
            model: &model,
            observer: obs,
            observer_velocity: vel,
        };
        let prior_bearing = map.project(&prior_mean).unwrap()[0];
        assert!(prior_bearing < -3.1, "prior bearing {prior_bearing}");
        let z_bearing = wrap_angle(prior_bearing - 0.05); // crosses the cut
        assert!(z_bearing > 3.1);
        let innovation = map.residual(
            &Vector2::new(z_bearing, 300.0),
            &Vector2::new(prior_bearing, 300.0),
        );
        assert!(innovation[0].abs() < FRAC_PI_2, "innovation {}", innovation[0]);
        // and the update moves the estimate, not explodes it
        let z = Measurement {
            bearing: z_bearing,
            frequency: 300.0,
            t: 0,
        };
        let post = ukf_update(&prior, &z, &obs, &vel, &model, &params_default()).unwrap();
        assert!((post.mean - prior.mean).norm() < 1000.0);
    }

    fn params_default() -> UkfParams {
        UkfParams::default()
    }

    #[test]
    fn posterior_covariance_stays_symmetric_psd_over_cycles() {
        let model = cv_model(0.01);
        let meas_model = MeasurementModel::default();
        let params = UkfParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let obs = CarrierState::new(0.0, 0.0, 300.0);
        let vel = Vector3::new(5.0, 0.0, 0.0);
        let mut truth = Vector4::new(15_000.0, -8.0, 8000.0, -2.0);
        let mut state = UkfState {
            mean: truth + Vector4::new(2000.0, 1.0, -1500.0, 0.5),
            cov: Matrix4::from_diagonal(&Vector4::new(1e6, 4.0, 1e6, 4.0)),
            t: 0,
        };
        for t in 0..30 {
            let n1: f64 = rng.sample(StandardNormal);
            let n2: f64 = rng.sample(StandardNormal);
            let z = measure(
                &TargetState::new(truth, 300.0),
                &obs,
                &vel,
                &meas_model,
                (n1, n2),
                t,
            )
            .unwrap();
            state = ukf_update(&state, &z, &obs, &vel, &meas_model, &params).unwrap();
            let asym = (state.cov - state.cov.transpose()).abs().max();
            assert!(asym <= 1e-9);
            let eig = SymmetricEigen::new(state.cov);
            assert!(eig.eigenvalues.min() >= -1e-9 * eig.eigenvalues.max());
            state = ukf_predict(&state, &model).unwrap();
            truth = model.step(&truth, &model.sample_noise(&mut rng));
        }
    }

    proptest! {
        #[test]
        fn wrap_angle_lands_in_half_open_interval(a in -50.0..50.0f64) {
            let w = wrap_angle(a);
            prop_assert!(w > -PI && w <= PI);
            // wrapping preserves the angle modulo 2 pi
            let diff = (a - w) / (2.0 * PI);
            prop_assert!((diff - diff.round()).abs() < 1e-9);
        }
    }
}
