//! Core 3-D types, rigid transforms, and the closed-form least-squares
//! alignment kernel used inside ICP.
//!
//! All lengths are millimeters.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Orthonormality / determinant tolerance for [`RigidTransform`] validation.
const ROTATION_TOL: f64 = 1e-9;

/// Relative singular-value floor below which a point configuration is
/// treated as rank-deficient (collinear or coincident). Singular values are
/// recovered as sqrt of eigenvalues, so the noise floor is ~sqrt(eps).
const RANK_TOL: f64 = 1e-7;

/// A 3-D point (or displacement) in millimeters.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point3<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Real> Point3<T> {
    pub fn new(x: T, y: T, z: T) -> Self {
        Point3 { x, y, z }
    }

    pub fn zero() -> Self {
        Point3::new(T::zero(), T::zero(), T::zero())
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn dot(&self, other: &Self) -> T {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn cross(&self, other: &Self) -> Self {
        Point3::new(
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        )
    }

    pub fn norm_squared(&self) -> T {
        self.dot(self)
    }

    pub fn norm(&self) -> T {
        self.norm_squared().sqrt()
    }

    pub fn distance(&self, other: &Self) -> T {
        (*self - *other).norm()
    }

    /// Unit vector in the same direction, or `None` for (near-)zero input.
    pub fn normalized(&self) -> Option<Self> {
        let n = self.norm();
        if n <= T::zero() || !n.is_finite() {
            None
        } else {
            Some(*self / n)
        }
    }

    pub fn centroid(points: &[Self]) -> Self {
        let n = T::from_usize(points.len().max(1)).unwrap();
        let sum = points
            .iter()
            .fold(Point3::zero(), |acc, p| acc + *p);
        sum / n
    }
}

impl<T: Real> std::ops::Add for Point3<T> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Point3::new(self.x + rhs.x, self.y + rhs.y, self.z + rhs.z)
    }
}

impl<T: Real> std::ops::Sub for Point3<T> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Point3::new(self.x - rhs.x, self.y - rhs.y, self.z - rhs.z)
    }
}

impl<T: Real> std::ops::Neg for Point3<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Point3::new(-self.x, -self.y, -self.z)
    }
}

impl<T: Real> std::ops::Mul<T> for Point3<T> {
    type Output = Self;
    fn mul(self, s: T) -> Self {
        Point3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl<T: Real> std::ops::Div<T> for Point3<T> {
    type Output = Self;
    fn div(self, s: T) -> Self {
        Point3::new(self.x / s, self.y / s, self.z / s)
    }
}

/// Row-major 3x3 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat3<T> {
    pub rows: [[T; 3]; 3],
}

impl<T: Real> Mat3<T> {
    pub fn new(rows: [[T; 3]; 3]) -> Self {
        Mat3 { rows }
    }

    pub fn identity() -> Self {
        let (o, z) = (T::one(), T::zero());
        Mat3::new([[o, z, z], [z, o, z], [z, z, o]])
    }

    pub fn zero() -> Self {
        Mat3::new([[T::zero(); 3]; 3])
    }

    pub fn transpose(&self) -> Self {
        let m = &self.rows;
        Mat3::new([
            [m[0][0], m[1][0], m[2][0]],
            [m[0][1], m[1][1], m[2][1]],
            [m[0][2], m[1][2], m[2][2]],
        ])
    }

    pub fn det(&self) -> T {
        let m = &self.rows;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    pub fn mul_vec(&self, p: &Point3<T>) -> Point3<T> {
        let m = &self.rows;
        Point3::new(
            m[0][0] * p.x + m[0][1] * p.y + m[0][2] * p.z,
            m[1][0] * p.x + m[1][1] * p.y + m[1][2] * p.z,
            m[2][0] * p.x + m[2][1] * p.y + m[2][2] * p.z,
        )
    }

    pub fn mul_mat(&self, other: &Self) -> Self {
        let mut out = [[T::zero(); 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                let mut acc = T::zero();
                for k in 0..3 {
                    acc = acc + self.rows[i][k] * other.rows[k][j];
                }
                *cell = acc;
            }
        }
        Mat3::new(out)
    }

    pub fn is_finite(&self) -> bool {
        self.rows.iter().flatten().all(|v| v.is_finite())
    }

    /// Column `j` as a vector.
    pub fn col(&self, j: usize) -> Point3<T> {
        Point3::new(self.rows[0][j], self.rows[1][j], self.rows[2][j])
    }

    /// Build from three column vectors.
    pub fn from_cols(c0: Point3<T>, c1: Point3<T>, c2: Point3<T>) -> Self {
        Mat3::new([
            [c0.x, c1.x, c2.x],
            [c0.y, c1.y, c2.y],
            [c0.z, c1.z, c2.z],
        ])
    }

    /// Rotation about the z axis by `angle` radians.
    pub fn rotation_z(angle: T) -> Self {
        let (s, c) = (angle.sin(), angle.cos());
        let z = T::zero();
        Mat3::new([[c, -s, z], [s, c, z], [z, z, T::one()]])
    }
}

/// A proper rigid transform: rotation (orthonormal, det +1) plus translation
/// in millimeters. Maps sensor-frame points into the reference frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform<T> {
    rotation: Mat3<T>,
    translation: Point3<T>,
}

impl<T: Real> RigidTransform<T> {
    /// Validates the rotation invariants: RᵀR = I elementwise within 1e-9
    /// and det(R) = +1 within 1e-9.
    pub fn new(rotation: Mat3<T>, translation: Point3<T>) -> Result<Self> {
        if !rotation.is_finite() || !translation.is_finite() {
            return Err(Error::invalid_input("non-finite rigid transform"));
        }
        let tol = T::from_f64_const(ROTATION_TOL);
        let rtr = rotation.transpose().mul_mat(&rotation);
        let id = Mat3::identity();
        for i in 0..3 {
            for j in 0..3 {
                let dev = (rtr.rows[i][j] - id.rows[i][j]).abs();
                if dev > tol {
                    return Err(Error::invalid_input(format!(
                        "rotation not orthonormal: |RᵀR - I|[{i}][{j}] = {dev}"
                    )));
                }
            }
        }
        let det_dev = (rotation.det() - T::one()).abs();
        if det_dev > tol {
            return Err(Error::invalid_input(format!(
                "rotation determinant off +1 by {det_dev} (reflection or scale)"
            )));
        }
        Ok(RigidTransform {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        RigidTransform {
            rotation: Mat3::identity(),
            translation: Point3::zero(),
        }
    }

    pub fn rotation(&self) -> &Mat3<T> {
        &self.rotation
    }

    pub fn translation(&self) -> &Point3<T> {
        &self.translation
    }

    /// R·p + t for a single point.
    pub fn apply(&self, p: &Point3<T>) -> Point3<T> {
        self.rotation.mul_vec(p) + self.translation
    }

    /// Inverse transform (Rᵀ, -Rᵀt).
    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        let t = -rt.mul_vec(&self.translation);
        RigidTransform {
            rotation: rt,
            translation: t,
        }
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &Self) -> Self {
        RigidTransform {
            rotation: self.rotation.mul_mat(&other.rotation),
            translation: self.rotation.mul_vec(&other.translation) + self.translation,
        }
    }
}

/// Apply `t` to an ordered point list, preserving order.
pub fn apply_transform<T: Real>(
    t: &RigidTransform<T>,
    pts: &[Point3<T>],
) -> Result<Vec<Point3<T>>> {
    if pts.is_empty() {
        return Err(Error::invalid_input("apply_transform: empty point list"));
    }
    if let Some(i) = pts.iter().position(|p| !p.is_finite()) {
        return Err(Error::invalid_input(format!(
            "apply_transform: non-finite point at index {i}"
        )));
    }
    Ok(pts.iter().map(|p| t.apply(p)).collect())
}

/// Root-mean-square distance between positionally corresponded point lists.
pub fn rmsd<T: Real>(a: &[Point3<T>], b: &[Point3<T>]) -> Result<T> {
    if a.is_empty() || a.len() != b.len() {
        return Err(Error::invalid_input(format!(
            "rmsd: need equal non-empty lengths, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let sum: T = a
        .iter()
        .zip(b)
        .map(|(p, q)| (*p - *q).norm_squared())
        .sum();
    Ok((sum / T::from_usize(a.len()).unwrap()).sqrt())
}

/// Eigendecomposition of a symmetric 3x3 matrix by cyclic Jacobi rotations.
/// Returns eigenvalues in descending order and the matching orthonormal
/// eigenvectors as matrix columns.
fn jacobi_eigen_sym3<T: Real>(a: &Mat3<T>) -> ([T; 3], Mat3<T>) {
    let mut m = a.rows;
    let mut v = Mat3::<T>::identity().rows;

    for _sweep in 0..64 {
        let off = (m[0][1] * m[0][1] + m[0][2] * m[0][2] + m[1][2] * m[1][2]).sqrt();
        let scale = m[0][0].abs() + m[1][1].abs() + m[2][2].abs();
        if off <= T::epsilon() * scale.max(T::min_positive_value()) {
            break;
        }
        for &(p, q) in &[(0usize, 1usize), (0, 2), (1, 2)] {
            let apq = m[p][q];
            if apq == T::zero() {
                continue;
            }
            // Classic Jacobi rotation for the (p, q) pivot.
            let theta = (m[q][q] - m[p][p]) / (apq + apq);
            let t = {
                let denom = theta.abs() + (theta * theta + T::one()).sqrt();
                let t = T::one() / denom;
                if theta < T::zero() {
                    -t
                } else {
                    t
                }
            };
            let c = T::one() / (t * t + T::one()).sqrt();
            let s = t * c;

            // Rotate rows/columns p and q of m.
            for k in 0..3 {
                let mkp = m[k][p];
                let mkq = m[k][q];
                m[k][p] = c * mkp - s * mkq;
                m[k][q] = s * mkp + c * mkq;
            }
            for k in 0..3 {
                let mpk = m[p][k];
                let mqk = m[q][k];
                m[p][k] = c * mpk - s * mqk;
                m[q][k] = s * mpk + c * mqk;
            }
            // Accumulate the rotation into the eigenvector matrix.
            for row in v.iter_mut() {
                let vp = row[p];
                let vq = row[q];
                row[p] = c * vp - s * vq;
                row[q] = s * vp + c * vq;
            }
        }
    }

    let mut pairs = [(m[0][0], 0usize), (m[1][1], 1), (m[2][2], 2)];
    pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal));

    let vals = [pairs[0].0, pairs[1].0, pairs[2].0];
    let vm = Mat3::new(v);
    let vecs = Mat3::from_cols(vm.col(pairs[0].1), vm.col(pairs[1].1), vm.col(pairs[2].1));
    (vals, vecs)
}

/// Proper rigid transform minimizing Σ‖R·sᵢ + t − tᵢ‖² over positionally
/// corresponded point lists (Kabsch, via SVD of the 3x3 cross-covariance
/// with determinant sign fix).
pub fn least_squares_align<T: Real>(
    source: &[Point3<T>],
    target: &[Point3<T>],
) -> Result<RigidTransform<T>> {
    if source.len() != target.len() {
        return Err(Error::invalid_input(format!(
            "least_squares_align: length mismatch ({} vs {})",
            source.len(),
            target.len()
        )));
    }
    if source.len() < 3 {
        return Err(Error::invalid_input(
            "least_squares_align: need at least 3 point pairs",
        ));
    }
    if source.iter().chain(target).any(|p| !p.is_finite()) {
        return Err(Error::invalid_input(
            "least_squares_align: non-finite point",
        ));
    }

    let sc = Point3::centroid(source);
    let tc = Point3::centroid(target);

    // Cross-covariance H = Σ (s-s̄)(t-t̄)ᵀ.
    let mut h = Mat3::<T>::zero();
    for (s, t) in source.iter().zip(target) {
        let sd = *s - sc;
        let td = *t - tc;
        let sv = [sd.x, sd.y, sd.z];
        let tv = [td.x, td.y, td.z];
        for i in 0..3 {
            for j in 0..3 {
                h.rows[i][j] = h.rows[i][j] + sv[i] * tv[j];
            }
        }
    }

    // SVD of H through the eigendecomposition of HᵀH: right-singular
    // vectors v_i, singular values sqrt(λ_i), left-singular u_i = Hv_i/σ_i.
    let hth = h.transpose().mul_mat(&h);
    let (vals, vmat) = jacobi_eigen_sym3(&hth);
    let sigma1 = vals[0].max(T::zero()).sqrt();
    let sigma2 = vals[1].max(T::zero()).sqrt();
    let rank_floor = sigma1 * T::from_f64_const(RANK_TOL);
    if sigma1 <= T::zero() || sigma2 <= rank_floor {
        return Err(Error::degenerate(format!(
            "cross-covariance rank < 2 (singular values {sigma1}, {sigma2}); \
             points coincident or collinear"
        )));
    }

    let v1 = vmat.col(0);
    let v2full = vmat.col(1);
    // Orthonormalize against v1; Jacobi already returns near-orthonormal
    // columns, this only trims roundoff.
    let v2 = (v2full - v1 * v2full.dot(&v1)).normalized().unwrap_or(v2full);
    let v3 = v1.cross(&v2);

    let u1 = h.mul_vec(&v1).normalized().ok_or_else(|| {
        Error::degenerate("cross-covariance annihilates dominant direction")
    })?;
    let u2raw = h.mul_vec(&v2) / sigma2;
    let u2 = (u2raw - u1 * u2raw.dot(&u1))
        .normalized()
        .ok_or_else(|| Error::degenerate("cross-covariance rank < 2"))?;
    let u3 = u1.cross(&u2);

    // R = v1·u1ᵀ + v2·u2ᵀ + v3·u3ᵀ maximizes tr(R·H) over SO(3). The
    // cross-product completions force det(U) = det(V) = +1, which pushes
    // any reflection sign of H onto the smallest singular value, where the
    // proper-rotation optimum discards it.
    let mut r = Mat3::<T>::zero();
    let vs = [v1, v2, v3];
    let us = [u1, u2, u3];
    for (vcol, ucol) in vs.iter().zip(&us) {
        let va = [vcol.x, vcol.y, vcol.z];
        let ua = [ucol.x, ucol.y, ucol.z];
        for i in 0..3 {
            for j in 0..3 {
                r.rows[i][j] = r.rows[i][j] + va[i] * ua[j];
            }
        }
    }

    let translation = tc - r.mul_vec(&sc);
    RigidTransform::new(r, translation).map_err(|e| match e {
        Error::InvalidInput(detail) => Error::degenerate(format!(
            "alignment produced an invalid rotation: {detail}"
        )),
        other => other,
    })
}
