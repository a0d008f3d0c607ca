use nalgebra::{DMatrix, Matrix3, Vector3};

use super::GeometryError;

const DET_EPS: f64 = 1e-12;
const W_EPS: f64 = 1e-12;
const NORMALIZE_EPS: f64 = 1e-9;

/// Planar projective map. Stored row-major and scaled so `m[2][2] == 1`
/// whenever that coefficient is not vanishingly small.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography {
    m: Matrix3<f64>,
}

impl Homography {
    pub fn new(m: Matrix3<f64>) -> Result<Self, GeometryError> {
        if !m.iter().all(|v| v.is_finite()) {
            return Err(GeometryError::SingularMatrix);
        }
        let m = if m[(2, 2)].abs() > NORMALIZE_EPS {
            m / m[(2, 2)]
        } else {
            m
        };
        if m.determinant().abs() <= DET_EPS {
            return Err(GeometryError::SingularMatrix);
        }
        Ok(Self { m })
    }

    pub fn from_rows(rows: [[f64; 3]; 3]) -> Result<Self, GeometryError> {
        Self::new(Matrix3::from_fn(|r, c| rows[r][c]))
    }

    pub fn identity() -> Self {
        Self {
            m: Matrix3::identity(),
        }
    }

    /// Similarity used by the bird's-eye camera model: `scale` pixels per
    /// meter, world origin at pixel `(cx, cy)`, image y pointing south.
    /// The returned map goes pixel -> world.
    pub fn birdseye(scale: f64, cx: f64, cy: f64) -> Result<Self, GeometryError> {
        Self::from_rows([
            [1.0 / scale, 0.0, -cx / scale],
            [0.0, -1.0 / scale, cy / scale],
            [0.0, 0.0, 1.0],
        ])
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.m
    }

    pub fn rows(&self) -> [[f64; 3]; 3] {
        let mut out = [[0.0; 3]; 3];
        for (r, row) in out.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = self.m[(r, c)];
            }
        }
        out
    }

    /// Projective multiply-and-divide.
    pub fn apply(&self, x: f64, y: f64) -> Result<(f64, f64), GeometryError> {
        let v = self.m * Vector3::new(x, y, 1.0);
        if v.z.abs() < W_EPS {
            return Err(GeometryError::DegenerateProjection);
        }
        Ok((v.x / v.z, v.y / v.z))
    }

    pub fn inverse(&self) -> Result<Self, GeometryError> {
        let inv = self
            .m
            .try_inverse()
            .ok_or(GeometryError::SingularMatrix)?;
        Self::new(inv)
    }

    /// `self` applied after `first`.
    pub fn compose(&self, first: &Homography) -> Result<Self, GeometryError> {
        Self::new(self.m * first.m)
    }

    /// Translation in the source domain: returns the map `p -> self(p + (dx, dy))`.
    pub fn pre_translate(&self, dx: f64, dy: f64) -> Result<Self, GeometryError> {
        let t = Matrix3::new(1.0, 0.0, dx, 0.0, 1.0, dy, 0.0, 0.0, 1.0);
        Self::new(self.m * t)
    }

    /// Largest absolute coefficient difference after normalization.
    pub fn max_abs_diff(&self, other: &Homography) -> f64 {
        (self.m - other.m).abs().max()
    }
}

/// One pixel <-> world correspondence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub pixel: (f64, f64),
    pub world: (f64, f64),
}

impl Correspondence {
    pub const fn new(px: f64, py: f64, wx: f64, wy: f64) -> Self {
        Self {
            pixel: (px, py),
            world: (wx, wy),
        }
    }
}

/// Similarity transform that moves the centroid to the origin and sets the
/// mean distance to sqrt(2).
fn conditioning(points: impl Iterator<Item = (f64, f64)> + Clone) -> Matrix3<f64> {
    let n = points.clone().count() as f64;
    let (sx, sy) = points.clone().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
    let (cx, cy) = (sx / n, sy / n);
    let mean_dist = points.map(|p| (p.0 - cx).hypot(p.1 - cy)).sum::<f64>() / n;
    let s = if mean_dist > 0.0 {
        std::f64::consts::SQRT_2 / mean_dist
    } else {
        1.0
    };
    Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0)
}

fn collinear(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> bool {
    let cross = (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0);
    let scale = [(b.0 - a.0).hypot(b.1 - a.1), (c.0 - a.0).hypot(c.1 - a.1)]
        .iter()
        .product::<f64>();
    scale == 0.0 || cross.abs() <= 1e-10 * scale
}

/// Pixel -> world homography from `n >= 4` correspondences, normalized DLT,
/// least squares when overdetermined.
pub fn calibrate(correspondences: &[Correspondence]) -> Result<Homography, GeometryError> {
    let n = correspondences.len();
    if n < 4 {
        return Err(GeometryError::TooFewCorrespondences(n));
    }
    if n == 4 {
        for i in 0..4 {
            for j in (i + 1)..4 {
                for k in (j + 1)..4 {
                    let [a, b, c] = [i, j, k].map(|ix| correspondences[ix]);
                    if collinear(a.pixel, b.pixel, c.pixel) || collinear(a.world, b.world, c.world) {
                        return Err(GeometryError::DegenerateConfiguration);
                    }
                }
            }
        }
    }

    let t_px = conditioning(correspondences.iter().map(|c| c.pixel));
    let t_w = conditioning(correspondences.iter().map(|c| c.world));

    let rows = (2 * n).max(9);
    let mut a = DMatrix::<f64>::zeros(rows, 9);
    for (i, c) in correspondences.iter().enumerate() {
        let p = t_px * Vector3::new(c.pixel.0, c.pixel.1, 1.0);
        let w = t_w * Vector3::new(c.world.0, c.world.1, 1.0);
        let (x, y) = (p.x / p.z, p.y / p.z);
        let (u, v) = (w.x / w.z, w.y / w.z);
        let r = 2 * i;
        a.row_mut(r)
            .copy_from_slice(&[-x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u]);
        a.row_mut(r + 1)
            .copy_from_slice(&[0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v]);
    }

    let svd = a.svd(false, true);
    let v_t = svd.v_t.ok_or(GeometryError::DegenerateConfiguration)?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let largest = svd.singular_values[order[0]];
    let second_smallest = svd.singular_values[order[7]];
    if largest <= 0.0 || second_smallest / largest < 1e-10 {
        return Err(GeometryError::DegenerateConfiguration);
    }
    let h = v_t.row(order[8]);
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
    let t_w_inv = t_w.try_inverse().ok_or(GeometryError::DegenerateConfiguration)?;
    Homography::new(t_w_inv * hn * t_px).map_err(|_| GeometryError::DegenerateConfiguration)
}

/// Largest world-space residual of `h` over `correspondences`, meters.
pub fn max_residual(h: &Homography, correspondences: &[Correspondence]) -> Result<f64, GeometryError> {
    correspondences.iter().try_fold(0.0f64, |acc, c| {
        let (x, y) = h.apply(c.pixel.0, c.pixel.1)?;
        Ok(acc.max((x - c.world.0).hypot(y - c.world.1)))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct homogeneous multiply-and-divide, written out by hand.
    fn oracle_apply(m: [[f64; 3]; 3], x: f64, y: f64) -> (f64, f64) {
        let hx = m[0][0] * x + m[0][1] * y + m[0][2];
        let hy = m[1][0] * x + m[1][1] * y + m[1][2];
        let w = m[2][0] * x + m[2][1] * y + m[2][2];
        (hx / w, hy / w)
    }

    #[test]
    fn apply_examples() {
        let id = Homography::identity();
        assert_eq!(id.apply(100.0, 200.0).unwrap(), (100.0, 200.0));

        let s = Homography::from_rows([[2.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 1.0]]).unwrap();
        assert_eq!(s.apply(10.0, 20.0).unwrap(), (20.0, 40.0));

        let rows = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.001, 1.0]];
        let p = Homography::from_rows(rows).unwrap();
        let expected = oracle_apply(rows, 0.0, 1000.0);
        assert_eq!(expected, (0.0, 500.0));
        let got = p.apply(0.0, 1000.0).unwrap();
        assert!((got.0 - expected.0).abs() < 1e-12 && (got.1 - expected.1).abs() < 1e-12);
    }

    #[test]
    fn degenerate_projection_on_line_at_infinity() {
        let p = Homography::from_rows([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.001, 1.0]]).unwrap();
        assert_eq!(p.apply(5.0, -1000.0), Err(GeometryError::DegenerateProjection));
    }

    #[test]
    fn singular_matrix_rejected() {
        let r = Homography::from_rows([[1.0, 2.0, 3.0], [2.0, 4.0, 6.0], [0.0, 0.0, 1.0]]);
        assert_eq!(r, Err(GeometryError::SingularMatrix));
    }

    #[test]
    fn normalization_sets_m22() {
        let h = Homography::from_rows([[4.0, 0.0, 2.0], [0.0, 4.0, 0.0], [0.0, 0.0, 2.0]]).unwrap();
        assert_eq!(h.rows()[2][2], 1.0);
        assert_eq!(h.rows()[0][0], 2.0);
    }

    #[test]
    fn calibrate_fixed_points_is_identity() {
        let c: Vec<_> = [(0.0, 0.0), (100.0, 0.0), (100.0, 100.0), (0.0, 100.0)]
            .iter()
            .map(|&(x, y)| Correspondence::new(x, y, x, y))
            .collect();
        let h = calibrate(&c).unwrap();
        assert!(h.max_abs_diff(&Homography::identity()) < 1e-9);
    }

    #[test]
    fn calibrate_translation_checked_on_held_out_point() {
        let c: Vec<_> = [(0.0, 0.0), (10.0, 0.0), (10.0, 10.0), (0.0, 10.0)]
            .iter()
            .map(|&(x, y)| Correspondence::new(x, y, x + 5.0, y - 3.0))
            .collect();
        let h = calibrate(&c).unwrap();
        let r = h.rows();
        assert!((r[0][2] - 5.0).abs() < 1e-9 && (r[1][2] + 3.0).abs() < 1e-9);
        let (x, y) = h.apply(3.7, 8.1).unwrap();
        assert!((x - 8.7).abs() < 1e-9 && (y - 5.1).abs() < 1e-9);
    }

    #[test]
    fn calibrate_unit_square_to_twenty_meters() {
        let c: Vec<_> = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]
            .iter()
            .map(|&(x, y)| Correspondence::new(x, y, 20.0 * x, 20.0 * y))
            .collect();
        let h = calibrate(&c).unwrap();
        let expected = Homography::from_rows([[20.0, 0.0, 0.0], [0.0, 20.0, 0.0], [0.0, 0.0, 1.0]]).unwrap();
        assert!(h.max_abs_diff(&expected) < 1e-9);
        assert!(max_residual(&h, &c).unwrap() < 1e-9);
        let inv = h.inverse().unwrap();
        for cc in &c {
            let (px, py) = inv.apply(cc.world.0, cc.world.1).unwrap();
            assert!((px - cc.pixel.0).abs() < 1e-12 && (py - cc.pixel.1).abs() < 1e-12);
        }
    }

    #[test]
    fn calibrate_rejects_collinear_and_short_input() {
        let c: Vec<_> = [(0.0, 0.0), (1.0, 1.0), (2.0, 2.0), (0.0, 5.0)]
            .iter()
            .map(|&(x, y)| Correspondence::new(x, y, x, y))
            .collect();
        assert_eq!(calibrate(&c), Err(GeometryError::DegenerateConfiguration));
        assert_eq!(calibrate(&c[..3]), Err(GeometryError::TooFewCorrespondences(3)));
    }

    #[test]
    fn overdetermined_rank_deficient_input_rejected() {
        // every point on one line
        let c: Vec<_> = (0..8)
            .map(|i| Correspondence::new(i as f64, 2.0 * i as f64, i as f64, i as f64))
            .collect();
        assert_eq!(calibrate(&c), Err(GeometryError::DegenerateConfiguration));
    }
}
