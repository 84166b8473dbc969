//! Constant-velocity Kalman filter over (cx, cy, w, h) box state.
//!
//! State: `[cx, cy, w, h, vcx, vcy, vw, vh]`, one frame per step. Noise standard
//! deviations scale with the current box height so the filter behaves the same
//! at any image resolution.

use nalgebra::{SMatrix, SVector};
use serde::Deserialize;
use thiserror::Error;

use crate::geometry::BoundingBox;

pub type StateVector = SVector<f64, 8>;
pub type StateCovariance = SMatrix<f64, 8, 8>;
type MeasurementVector = SVector<f64, 4>;
type MeasurementMatrix = SMatrix<f64, 4, 8>;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("degenerate Kalman state: w={w}, h={h}")]
pub struct DegenerateState {
    pub w: f64,
    pub h: f64,
}

/// Noise weights, each multiplied by box height to give a standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KalmanConfig {
    pub init_position_weight: f64,
    pub init_velocity_weight: f64,
    pub process_position_weight: f64,
    pub process_velocity_weight: f64,
    pub measurement_weight: f64,
}

impl Default for KalmanConfig {
    fn default() -> Self {
        Self {
            init_position_weight: 1.0 / 20.0,
            init_velocity_weight: 1.0 / 2.0,
            process_position_weight: 1.0 / 20.0,
            process_velocity_weight: 1.0 / 160.0,
            measurement_weight: 1.0 / 20.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KalmanState {
    pub mean: StateVector,
    pub covariance: StateCovariance,
}

impl KalmanState {
    /// Converts the position/size part of the mean back to a box.
    pub fn to_box(&self) -> Result<BoundingBox, DegenerateState> {
        let (cx, cy, w, h) = (self.mean[0], self.mean[1], self.mean[2], self.mean[3]);
        if !(w > 0.0 && h > 0.0) {
            return Err(DegenerateState { w, h });
        }
        BoundingBox::from_center(cx, cy, w, h).map_err(|_| DegenerateState { w, h })
    }
}

fn measurement_of(b: &BoundingBox) -> MeasurementVector {
    let (cx, cy) = b.center();
    MeasurementVector::new(cx, cy, b.w(), b.h())
}

fn diag8(pos_std: f64, vel_std: f64) -> StateCovariance {
    let mut d = StateVector::zeros();
    for k in 0..4 {
        d[k] = pos_std * pos_std;
        d[k + 4] = vel_std * vel_std;
    }
    StateCovariance::from_diagonal(&d)
}

fn symmetrize(p: &StateCovariance) -> StateCovariance {
    (p + p.transpose()) * 0.5
}

#[derive(Debug, Clone)]
pub struct KalmanFilter {
    config: KalmanConfig,
    transition: StateCovariance,
    observation: MeasurementMatrix,
}

impl Default for KalmanFilter {
    fn default() -> Self {
        Self::new(KalmanConfig::default())
    }
}

impl KalmanFilter {
    pub fn new(config: KalmanConfig) -> Self {
        let mut transition = StateCovariance::identity();
        let mut observation = MeasurementMatrix::zeros();
        for k in 0..4 {
            transition[(k, k + 4)] = 1.0;
            observation[(k, k)] = 1.0;
        }
        Self {
            config,
            transition,
            observation,
        }
    }

    pub fn config(&self) -> &KalmanConfig {
        &self.config
    }

    pub fn initiate(&self, b: &BoundingBox) -> KalmanState {
        let z = measurement_of(b);
        let mut mean = StateVector::zeros();
        mean.fixed_rows_mut::<4>(0).copy_from(&z);
        let h = b.h();
        KalmanState {
            mean,
            covariance: diag8(
                self.config.init_position_weight * h,
                self.config.init_velocity_weight * h,
            ),
        }
    }

    pub fn predict(&self, s: &KalmanState) -> KalmanState {
        let h = s.mean[3].abs();
        let q = diag8(
            self.config.process_position_weight * h,
            self.config.process_velocity_weight * h,
        );
        let f = &self.transition;
        KalmanState {
            mean: f * s.mean,
            covariance: symmetrize(&(f * s.covariance * f.transpose() + q)),
        }
    }

    /// Measurement update in Joseph form.
    pub fn update(&self, s: &KalmanState, z: &BoundingBox) -> KalmanState {
        let std = self.config.measurement_weight * s.mean[3].abs();
        let r = SMatrix::<f64, 4, 4>::from_diagonal_element(std * std);
        let h = &self.observation;
        let innovation = measurement_of(z) - h * s.mean;
        let projected = h * s.covariance * h.transpose() + r;
        let pht = s.covariance * h.transpose();
        // K = P Hᵀ S⁻¹, solved as Sᵀ Kᵀ = (P Hᵀ)ᵀ with S symmetric.
        let gain = match projected.cholesky() {
            Some(chol) => chol.solve(&pht.transpose()).transpose(),
            None => pht * projected.try_inverse().unwrap_or_else(SMatrix::zeros),
        };
        let ikh = StateCovariance::identity() - gain * h;
        let covariance = ikh * s.covariance * ikh.transpose() + gain * r * gain.transpose();
        KalmanState {
            mean: s.mean + gain * innovation,
            covariance: symmetrize(&covariance),
        }
    }

    /// Innovation `z - H·mean` for a candidate measurement.
    pub fn innovation(&self, s: &KalmanState, z: &BoundingBox) -> [f64; 4] {
        let y = measurement_of(z) - self.observation * s.mean;
        [y[0], y[1], y[2], y[3]]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::SymmetricEigen;
    use proptest::prelude::*;

    fn bb(x: f64, y: f64, w: f64, h: f64) -> BoundingBox {
        BoundingBox::new(x, y, w, h).unwrap()
    }

    fn assert_sym_psd(p: &StateCovariance) {
        for i in 0..8 {
            for j in 0..8 {
                assert!((p[(i, j)] - p[(j, i)]).abs() <= 1e-9);
            }
        }
        let eig = SymmetricEigen::new(*p);
        assert!(eig.eigenvalues.iter().all(|&e| e >= -1e-9), "{:?}", eig.eigenvalues);
    }

    #[test]
    fn initiate_centers_box() {
        let kf = KalmanFilter::default();
        let s = kf.initiate(&bb(0.0, 0.0, 10.0, 10.0));
        assert_eq!(s.mean.as_slice(), &[5.0, 5.0, 10.0, 10.0, 0.0, 0.0, 0.0, 0.0]);
        let s = kf.initiate(&bb(10.0, 20.0, 4.0, 8.0));
        assert_eq!(s.mean.as_slice(), &[12.0, 24.0, 4.0, 8.0, 0.0, 0.0, 0.0, 0.0]);
        assert_sym_psd(&s.covariance);
        assert!(s.covariance[(4, 4)] > 10.0 * s.covariance[(0, 0)]);
        for i in 0..8 {
            for j in 0..8 {
                if i != j {
                    assert_eq!(s.covariance[(i, j)], 0.0);
                }
            }
        }
    }

    #[test]
    fn predict_zero_velocity_fixed_point() {
        let kf = KalmanFilter::new(KalmanConfig {
            process_position_weight: 0.0,
            process_velocity_weight: 0.0,
            ..KalmanConfig::default()
        });
        let s = kf.initiate(&bb(3.0, 4.0, 5.0, 6.0));
        let p = kf.predict(&s);
        assert_eq!(p.mean, s.mean);
    }

    #[test]
    fn predict_one_euler_step() {
        let kf = KalmanFilter::default();
        let mut s = kf.initiate(&bb(-1.0, -1.0, 2.0, 2.0));
        s.mean[4] = 1.0;
        let p = kf.predict(&s);
        assert_eq!((p.mean[0], p.mean[1]), (1.0, 0.0));
    }

    #[test]
    fn exact_measurement_limit() {
        let h = 10.0;
        let kf = KalmanFilter::new(KalmanConfig {
            measurement_weight: 1e-9f64.sqrt() / h,
            ..KalmanConfig::default()
        });
        let s = kf.predict(&kf.initiate(&bb(0.0, 0.0, 10.0, h)));
        let z = bb(3.0, -2.0, 11.0, 10.5);
        let post = kf.update(&s, &z);
        let (cx, cy) = z.center();
        let expect = [cx, cy, z.w(), z.h()];
        for (k, e) in expect.iter().enumerate() {
            assert!((post.mean[k] - e).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_innovation_keeps_mean() {
        let kf = KalmanFilter::default();
        let mut s = kf.initiate(&bb(10.0, 10.0, 20.0, 40.0));
        s.mean[4] = 2.0;
        s.mean[5] = -1.0;
        let prior = kf.predict(&s);
        let z = prior.to_box().unwrap();
        let post = kf.update(&prior, &z);
        for k in 0..8 {
            assert!((post.mean[k] - prior.mean[k]).abs() < 1e-10);
        }
    }

    #[test]
    fn update_shrinks_measured_variance() {
        let kf = KalmanFilter::default();
        let prior = kf.predict(&kf.initiate(&bb(0.0, 0.0, 30.0, 60.0)));
        let post = kf.update(&prior, &bb(1.0, 2.0, 31.0, 59.0));
        for k in 0..4 {
            assert!(post.covariance[(k, k)] <= prior.covariance[(k, k)]);
        }
        // Loewner order on the measured block: prior - posterior is PSD.
        let diff = prior.covariance.fixed_view::<4, 4>(0, 0) - post.covariance.fixed_view::<4, 4>(0, 0);
        let eig = SymmetricEigen::new(diff.into_owned());
        assert!(eig.eigenvalues.iter().all(|&e| e >= -1e-9));
    }

    #[test]
    fn state_to_box_round_trip_and_degenerate() {
        let kf = KalmanFilter::default();
        let b = bb(0.0, 0.0, 10.0, 10.0);
        assert_eq!(kf.initiate(&b).to_box().unwrap(), b);
        let mut s = kf.initiate(&b);
        s.mean[2] = 0.0;
        assert!(s.to_box().is_err());
        s.mean[2] = 5.0;
        s.mean[3] = -1.0;
        assert!(s.to_box().is_err());
    }

    #[test]
    fn repeated_update_innovation_non_increasing() {
        let kf = KalmanFilter::default();
        let mut s = kf.predict(&kf.initiate(&bb(0.0, 0.0, 20.0, 40.0)));
        let z = bb(7.0, -3.0, 22.0, 41.0);
        let norm = |y: [f64; 4]| y.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut last = norm(kf.innovation(&s, &z));
        for _ in 0..50 {
            s = kf.update(&s, &z);
            let n = norm(kf.innovation(&s, &z));
            assert!(n <= last + 1e-12);
            last = n;
        }
    }

    /// Two-state (position, velocity) filter written out by hand.
    struct ScalarFilter {
        x: [f64; 2],
        p: [[f64; 2]; 2],
        q: [f64; 2],
        r: f64,
    }

    impl ScalarFilter {
        fn predict(&mut self) {
            let [[a, b], [c, d]] = self.p;
            self.x = [self.x[0] + self.x[1], self.x[1]];
            // F P Fᵀ with F = [[1,1],[0,1]]
            self.p = [[a + b + c + d + self.q[0], b + d], [c + d, d + self.q[1]]];
        }

        fn update(&mut self, z: f64) {
            let [[a, b], [c, _]] = self.p;
            let s = a + self.r;
            let k = [a / s, c / s];
            let y = z - self.x[0];
            self.x = [self.x[0] + k[0] * y, self.x[1] + k[1] * y];
            let d = self.p[1][1];
            self.p = [[a - k[0] * a, b - k[0] * b], [c - k[1] * a, d - k[1] * b]];
        }
    }

    #[test]
    fn single_coordinate_matches_scalar_filter() {
        let kf = KalmanFilter::default();
        let cfg = *kf.config();
        let h = 50.0;
        let start = bb(0.0, 0.0, 20.0, h);
        let mut s = kf.initiate(&start);
        let var = |wt: f64| (wt * h) * (wt * h);
        let mut oracle = ScalarFilter {
            x: [start.center().0, 0.0],
            p: [
                [var(cfg.init_position_weight), 0.0],
                [0.0, var(cfg.init_velocity_weight)],
            ],
            q: [var(cfg.process_position_weight), var(cfg.process_velocity_weight)],
            r: var(cfg.measurement_weight),
        };
        for t in 1..40 {
            let z = bb(1.7 * t as f64 + ((t * 7) % 5) as f64, 0.0, 20.0, h);
            s = kf.predict(&s);
            oracle.predict();
            s = kf.update(&s, &z);
            oracle.update(z.center().0);
            assert!((s.mean[0] - oracle.x[0]).abs() < 1e-10);
            assert!((s.mean[4] - oracle.x[1]).abs() < 1e-10);
            assert!((s.covariance[(0, 0)] - oracle.p[0][0]).abs() < 1e-10);
            assert!((s.covariance[(0, 4)] - oracle.p[0][1]).abs() < 1e-10);
            assert!((s.covariance[(4, 4)] - oracle.p[1][1]).abs() < 1e-10);
        }
    }

    proptest! {
        #[test]
        fn predict_update_keep_covariance_valid(
            x in -100.0..100.0f64, y in -100.0..100.0f64,
            w in 5.0..100.0f64, h in 5.0..200.0f64,
            moves in proptest::collection::vec((-5.0..5.0f64, -5.0..5.0f64, -1.0..1.0f64, -1.0..1.0f64), 1..12),
        ) {
            let kf = KalmanFilter::default();
            let mut s = kf.initiate(&bb(x, y, w, h));
            let (mut bx, mut by, mut bw, mut bh) = (x, y, w, h);
            for (dx, dy, dw, dh) in moves {
                s = kf.predict(&s);
                assert_sym_psd(&s.covariance);
                bx += dx; by += dy; bw = (bw + dw).max(1.0); bh = (bh + dh).max(1.0);
                s = kf.update(&s, &bb(bx, by, bw, bh));
                assert_sym_psd(&s.covariance);
                prop_assert!(s.mean[2] > 0.0 && s.mean[3] > 0.0);
            }
        }
    }
}
