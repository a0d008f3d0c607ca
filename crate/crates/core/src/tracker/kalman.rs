use nalgebra::{SMatrix, SVector};

use crate::types::PixelBox;

pub type Vec7 = SVector<f64, 7>;
pub type Mat7 = SMatrix<f64, 7, 7>;
pub type Vec4 = SVector<f64, 4>;
pub type Mat4 = SMatrix<f64, 4, 4>;
type Mat47 = SMatrix<f64, 4, 7>;

pub const S_MIN: f64 = 1.0;
const R_MIN: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("innovation covariance is numerically singular")]
pub struct SingularInnovation;

/// Box state `[u, v, s, r, du, dv, ds]`: center, area, aspect ratio (w/h)
/// and the rates of the first three, per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct KalmanState {
    pub mean: Vec7,
    pub covariance: Mat7,
}

/// `[u, v, s, r]` of a box.
pub fn box_to_z(b: &PixelBox) -> Vec4 {
    let c = b.center();
    Vec4::new(c.x, c.y, b.area(), b.width() / b.height())
}

fn height(s: f64, r: f64) -> f64 {
    (s.max(S_MIN) / r.max(R_MIN)).sqrt()
}

fn transition(dt: f64) -> Mat7 {
    let mut f = Mat7::identity();
    f[(0, 4)] = dt;
    f[(1, 5)] = dt;
    f[(2, 6)] = dt;
    f
}

fn observation() -> Mat47 {
    Mat47::from_fn(|i, j| if i == j { 1.0 } else { 0.0 })
}

/// Per-frame process noise, scaled to the current box.
pub fn process_noise(mean: &Vec7) -> Mat7 {
    let (s, r) = (mean[2].max(S_MIN), mean[3].max(R_MIN));
    let h = height(s, r);
    let pos = (h / 20.0).powi(2);
    let vel = (h / 160.0).powi(2);
    Mat7::from_diagonal(&Vec7::from([
        pos,
        pos,
        (s / 10.0).powi(2),
        (r / 100.0).powi(2),
        vel,
        vel,
        (s / 80.0).powi(2),
    ]))
}

/// Measurement noise for a measured `[u, v, s, r]`: a third of the
/// per-frame process spread, so the posterior follows turning boxes.
pub fn measurement_noise(z: &Vec4) -> Mat4 {
    let (s, r) = (z[2].max(S_MIN), z[3].max(R_MIN));
    let h = height(s, r);
    Mat4::from_diagonal(&Vec4::new((h / 60.0).powi(2), (h / 60.0).powi(2), (s / 30.0).powi(2), (r / 60.0).powi(2)))
}

impl KalmanState {
    pub fn from_box(b: &PixelBox) -> Self {
        let z = box_to_z(b);
        let mut mean = Vec7::zeros();
        mean.fixed_rows_mut::<4>(0).copy_from(&z);
        let (s, r) = (z[2].max(S_MIN), z[3].max(R_MIN));
        let h = height(s, r);
        let covariance = Mat7::from_diagonal(&Vec7::from([
            (h / 10.0).powi(2),
            (h / 10.0).powi(2),
            (s / 5.0).powi(2),
            (r / 10.0).powi(2),
            (h / 16.0).powi(2),
            (h / 16.0).powi(2),
            (s / 8.0).powi(2),
        ]));
        Self { mean, covariance }
    }

    pub fn to_box(&self) -> PixelBox {
        let s = self.mean[2].max(S_MIN);
        let r = self.mean[3].max(R_MIN);
        let w = (s * r).sqrt();
        let h = s / w;
        PixelBox::from_center(self.mean[0], self.mean[1], w, h)
    }

    /// One constant-velocity step of one frame.
    pub fn predict_one(&self) -> Self {
        let f = transition(1.0);
        let mut mean = f * self.mean;
        mean[2] = mean[2].max(S_MIN);
        let q = process_noise(&self.mean);
        let covariance = symmetrize(f * self.covariance * f.transpose() + q);
        Self { mean, covariance }
    }

    /// Advances `dt` frames as `dt` unit steps, so skipping a frame costs
    /// the same uncertainty as predicting through it.
    pub fn predict(&self, dt: u32) -> Self {
        let mut s = self.clone();
        for _ in 0..dt.max(1) {
            s = s.predict_one();
        }
        s
    }

    pub fn update(&self, measurement: &PixelBox) -> Result<Self, SingularInnovation> {
        let z = box_to_z(measurement);
        self.update_with_noise(&z, &measurement_noise(&z))
    }

    /// Joseph-form correction with an explicit measurement covariance.
    pub fn update_with_noise(&self, z: &Vec4, r: &Mat4) -> Result<Self, SingularInnovation> {
        let h = observation();
        let p = &self.covariance;
        let s = h * p * h.transpose() + r;
        let chol = s.cholesky().ok_or(SingularInnovation)?;
        // K = P H^T S^-1, solved as S K^T = H P
        let k = chol.solve(&(h * p)).transpose();
        let innovation = z - h * self.mean;
        let mut mean = self.mean + k * innovation;
        mean[2] = mean[2].max(S_MIN);
        mean[3] = mean[3].max(R_MIN);
        let i_kh = Mat7::identity() - k * h;
        let covariance = symmetrize(i_kh * p * i_kh.transpose() + k * r * k.transpose());
        if covariance.iter().any(|v| !v.is_finite()) {
            return Err(SingularInnovation);
        }
        Ok(Self { mean, covariance })
    }
}

fn symmetrize(m: Mat7) -> Mat7 {
    (m + m.transpose()) * 0.5
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state() -> KalmanState {
        KalmanState::from_box(&PixelBox::new(100.0, 100.0, 190.0, 136.0))
    }

    #[test]
    fn zero_velocity_grows_by_q() {
        // with no velocity uncertainty the transition leaves P unchanged
        let mut s = state();
        for i in 4..7 {
            s.covariance[(i, i)] = 0.0;
        }
        let p = s.predict(1);
        assert_eq!(p.mean, s.mean);
        let q = process_noise(&s.mean);
        for i in 0..7 {
            assert!((p.covariance[(i, i)] - s.covariance[(i, i)] - q[(i, i)]).abs() < 1e-9);
        }
    }

    #[test]
    fn velocity_advances_center() {
        let mut s = state();
        s.mean[4] = 3.0;
        assert!((s.predict(1).mean[0] - (s.mean[0] + 3.0)).abs() < 1e-12);
    }

    #[test]
    fn area_floor() {
        let mut s = state();
        s.mean[2] = 2.0;
        s.mean[6] = -10.0;
        assert_eq!(s.predict(1).mean[2], S_MIN);
    }

    #[test]
    fn uninformative_measurement_keeps_mean() {
        let s = state();
        let z = box_to_z(&PixelBox::new(120.0, 90.0, 200.0, 130.0));
        let r = measurement_noise(&z) * 1e12;
        let u = s.update_with_noise(&z, &r).unwrap();
        assert!((u.mean - s.mean).amax() < 1e-6);
    }

    #[test]
    fn precise_measurement_contracts() {
        let s = state().predict(1);
        let z = box_to_z(&s.to_box());
        let u = s.update_with_noise(&z, &(Mat4::identity() * 1e-6)).unwrap();
        assert!(u.covariance.trace() < s.covariance.trace());
        assert!((u.mean.fixed_rows::<4>(0) - z).amax() < 1e-6);
    }

    #[test]
    fn scalar_analog() {
        // only u is informative: other measured components get huge noise
        let mut s = state();
        s.mean[0] = 0.0;
        s.covariance = Mat7::identity();
        s.covariance[(0, 0)] = 4.0;
        let mut z = s.mean.fixed_rows::<4>(0).into_owned();
        z[0] = 2.0;
        let mut r = Mat4::identity() * 1e18;
        r[(0, 0)] = 4.0;
        let u = s.update_with_noise(&z, &r).unwrap();
        // closed form: m = (0*4 + 2*4)/(4+4) = 1, var = 4*4/(4+4) = 2
        assert!((u.mean[0] - 1.0).abs() < 1e-9);
        assert!((u.covariance[(0, 0)] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn singular_innovation() {
        let mut s = state();
        s.covariance = Mat7::zeros();
        let z = box_to_z(&s.to_box());
        assert_eq!(s.update_with_noise(&z, &Mat4::zeros()), Err(SingularInnovation));
    }

    #[test]
    fn box_round_trip() {
        let b = PixelBox::new(10.0, 20.0, 40.0, 30.0);
        let back = KalmanState::from_box(&b).to_box();
        assert!((back.x_min - b.x_min).abs() < 1e-9 && (back.y_max - b.y_max).abs() < 1e-9);
    }
}
