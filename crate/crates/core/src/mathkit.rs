//! Quaternion and direction-cosine algebra, fixed-step RK4, and the seeded
//! random stream shared by every stochastic component.
//!
//! Quaternions are scalar-first `(q0, q1, q2, q3)` and obey the kinematics
//! `q̇ = ½ q ⊗ (0, ω)` with `ω` in body axes, so `q` rotates body vectors into
//! the inertial frame and [`dcm_from_quat`] returns its transpose (inertial to
//! body).

use std::ops::{Mul, Neg};

use nalgebra::{Matrix3, Vector3};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quaternion {
    pub q0: f64,
    pub q1: f64,
    pub q2: f64,
    pub q3: f64,
}

impl Quaternion {
    pub const IDENTITY: Quaternion = Quaternion { q0: 1.0, q1: 0.0, q2: 0.0, q3: 0.0 };

    pub const fn new(q0: f64, q1: f64, q2: f64, q3: f64) -> Self {
        Self { q0, q1, q2, q3 }
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.q0, self.q1, self.q2, self.q3]
    }

    /// Rotation of `angle` radians about `axis` (need not be normalized).
    pub fn from_axis_angle(axis: &Vec3, angle: f64) -> Self {
        let n = axis.norm();
        if n == 0.0 {
            return Self::IDENTITY;
        }
        let (s, c) = (0.5 * angle).sin_cos();
        let a = axis / n * s;
        Self::new(c, a.x, a.y, a.z)
    }

    /// Quaternion whose rotation matrix (body to inertial) equals `r`.
    pub fn from_rotation_matrix(r: &Mat3) -> Self {
        // Shepperd's method: branch on the largest diagonal term.
        let tr = r[(0, 0)] + r[(1, 1)] + r[(2, 2)];
        let q = if tr > r[(0, 0)] && tr > r[(1, 1)] && tr > r[(2, 2)] {
            let s = (1.0 + tr).sqrt() * 2.0;
            Self::new(
                0.25 * s,
                (r[(2, 1)] - r[(1, 2)]) / s,
                (r[(0, 2)] - r[(2, 0)]) / s,
                (r[(1, 0)] - r[(0, 1)]) / s,
            )
        } else if r[(0, 0)] > r[(1, 1)] && r[(0, 0)] > r[(2, 2)] {
            let s = (1.0 + r[(0, 0)] - r[(1, 1)] - r[(2, 2)]).sqrt() * 2.0;
            Self::new(
                (r[(2, 1)] - r[(1, 2)]) / s,
                0.25 * s,
                (r[(0, 1)] + r[(1, 0)]) / s,
                (r[(0, 2)] + r[(2, 0)]) / s,
            )
        } else if r[(1, 1)] > r[(2, 2)] {
            let s = (1.0 + r[(1, 1)] - r[(0, 0)] - r[(2, 2)]).sqrt() * 2.0;
            Self::new(
                (r[(0, 2)] - r[(2, 0)]) / s,
                (r[(0, 1)] + r[(1, 0)]) / s,
                0.25 * s,
                (r[(1, 2)] + r[(2, 1)]) / s,
            )
        } else {
            let s = (1.0 + r[(2, 2)] - r[(0, 0)] - r[(1, 1)]).sqrt() * 2.0;
            Self::new(
                (r[(1, 0)] - r[(0, 1)]) / s,
                (r[(0, 2)] + r[(2, 0)]) / s,
                (r[(1, 2)] + r[(2, 1)]) / s,
                0.25 * s,
            )
        };
        q.normalized()
    }

    pub fn vector(&self) -> Vec3 {
        Vec3::new(self.q1, self.q2, self.q3)
    }

    pub fn dot(&self, other: &Quaternion) -> f64 {
        self.q0 * other.q0 + self.q1 * other.q1 + self.q2 * other.q2 + self.q3 * other.q3
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn normalized(&self) -> Self {
        let n = self.norm();
        Self::new(self.q0 / n, self.q1 / n, self.q2 / n, self.q3 / n)
    }

    pub fn conjugate(&self) -> Self {
        Self::new(self.q0, -self.q1, -self.q2, -self.q3)
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    /// Rotation angle in `[0, π]`.
    pub fn rotation_angle(&self) -> f64 {
        2.0 * self.q0.abs().min(1.0).acos()
    }

    /// Body-to-inertial rotation matrix, `C_BNᵀ`.
    pub fn rotation_matrix(&self) -> Mat3 {
        let Quaternion { q0, q1, q2, q3 } = *self;
        Mat3::new(
            1.0 - 2.0 * (q2 * q2 + q3 * q3),
            2.0 * (q1 * q2 - q0 * q3),
            2.0 * (q1 * q3 + q0 * q2),
            2.0 * (q1 * q2 + q0 * q3),
            1.0 - 2.0 * (q1 * q1 + q3 * q3),
            2.0 * (q2 * q3 - q0 * q1),
            2.0 * (q1 * q3 - q0 * q2),
            2.0 * (q2 * q3 + q0 * q1),
            1.0 - 2.0 * (q1 * q1 + q2 * q2),
        )
    }

    pub fn scale(&self, k: f64) -> Self {
        Self::new(self.q0 * k, self.q1 * k, self.q2 * k, self.q3 * k)
    }

    pub fn add(&self, o: &Quaternion) -> Self {
        Self::new(self.q0 + o.q0, self.q1 + o.q1, self.q2 + o.q2, self.q3 + o.q3)
    }
}

impl Default for Quaternion {
    fn default() -> Self {
        Self::IDENTITY
    }
}

/// Hamilton product.
impl Mul for Quaternion {
    type Output = Quaternion;

    fn mul(self, p: Quaternion) -> Quaternion {
        let q = self;
        Quaternion::new(
            q.q0 * p.q0 - q.q1 * p.q1 - q.q2 * p.q2 - q.q3 * p.q3,
            q.q0 * p.q1 + q.q1 * p.q0 + q.q2 * p.q3 - q.q3 * p.q2,
            q.q0 * p.q2 - q.q1 * p.q3 + q.q2 * p.q0 + q.q3 * p.q1,
            q.q0 * p.q3 + q.q1 * p.q2 - q.q2 * p.q1 + q.q3 * p.q0,
        )
    }
}

impl Neg for Quaternion {
    type Output = Quaternion;

    fn neg(self) -> Quaternion {
        self.scale(-1.0)
    }
}

/// Direction cosine matrix mapping inertial-frame vectors into the body frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dcm(Mat3);

impl Dcm {
    pub fn identity() -> Self {
        Self(Mat3::identity())
    }

    pub fn from_matrix(m: Mat3) -> Self {
        Self(m)
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn determinant(&self) -> f64 {
        self.0.determinant()
    }

    /// Largest deviation of `CᵀC` from the identity.
    pub fn orthonormality_error(&self) -> f64 {
        (self.0.transpose() * self.0 - Mat3::identity()).amax()
    }
}

impl Mul<Vec3> for Dcm {
    type Output = Vec3;

    fn mul(self, v: Vec3) -> Vec3 {
        self.0 * v
    }
}

impl Mul<&Vec3> for &Dcm {
    type Output = Vec3;

    fn mul(self, v: &Vec3) -> Vec3 {
        self.0 * v
    }
}

impl Mul for Dcm {
    type Output = Dcm;

    fn mul(self, o: Dcm) -> Dcm {
        Dcm(self.0 * o.0)
    }
}

/// Inertial-to-body DCM for attitude `q`.
pub fn dcm_from_quat(q: &Quaternion) -> Result<Dcm> {
    if !q.is_finite() {
        return Err(SimError::InvalidArgument(format!("non-finite quaternion {q:?}")));
    }
    if (q.norm() - 1.0).abs() > 1e-6 {
        return Err(SimError::InvalidArgument(format!(
            "quaternion norm {} is not unit",
            q.norm()
        )));
    }
    Ok(Dcm(q.rotation_matrix().transpose()))
}

/// `q̇ = ½ Ω(q) (0, ω)`, i.e. `½ q ⊗ (0, ω)`.
pub fn quat_derivative(q: &Quaternion, omega: &Vec3) -> Quaternion {
    let Quaternion { q0, q1, q2, q3 } = *q;
    let (w0, w1, w2) = (omega.x, omega.y, omega.z);
    Quaternion::new(
        0.5 * (-q1 * w0 - q2 * w1 - q3 * w2),
        0.5 * (q0 * w0 - q3 * w1 + q2 * w2),
        0.5 * (q3 * w0 + q0 * w1 - q1 * w2),
        0.5 * (-q2 * w0 + q1 * w1 + q0 * w2),
    )
}

/// One classical fourth-order Runge-Kutta step of `ẋ = f(x)`.
///
/// No renormalization is applied; callers owning quaternion components
/// renormalize after the step.
pub fn rk4_step<const N: usize, F>(state: &[f64; N], mut f: F, dt: f64) -> Result<[f64; N]>
where
    F: FnMut(&[f64; N]) -> [f64; N],
{
    if !(dt > 0.0) {
        return Err(SimError::InvalidArgument(format!("rk4 step dt = {dt} must be positive")));
    }
    let check = |d: &[f64; N]| -> Result<()> {
        match d.iter().position(|v| !v.is_finite()) {
            Some(index) => Err(SimError::IntegrationFault { index, time: None }),
            None => Ok(()),
        }
    };
    let offset = |k: &[f64; N], h: f64| -> [f64; N] {
        let mut x = *state;
        for (xi, ki) in x.iter_mut().zip(k) {
            *xi += h * ki;
        }
        x
    };

    let k1 = f(state);
    check(&k1)?;
    let k2 = f(&offset(&k1, 0.5 * dt));
    check(&k2)?;
    let k3 = f(&offset(&k2, 0.5 * dt));
    check(&k3)?;
    let k4 = f(&offset(&k3, dt));
    check(&k4)?;

    let mut out = *state;
    for i in 0..N {
        out[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    check(&out)?;
    Ok(out)
}

/// Deterministic random stream keyed by `(seed, stream_id)`.
///
/// Backed by ChaCha8 with the stream id mapped onto the cipher's stream
/// counter, so every `(seed, stream_id)` pair yields the same sequence on
/// every platform and episodes can draw independently in any order.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self { seed, stream_id, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Uniform draw in `[0, 1)`.
    pub fn unit(&mut self) -> f64 {
        // 53 random mantissa bits.
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw in `[lo, hi]`; returns `lo` when the range is empty.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        if hi <= lo {
            return lo;
        }
        lo + (hi - lo) * self.unit()
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    pub fn normal(&mut self, sigma: f64) -> f64 {
        if sigma == 0.0 {
            0.0
        } else {
            sigma * self.standard_normal()
        }
    }

    /// Uniform integer in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        assert!(n > 0);
        ((self.unit() * n as f64) as usize).min(n - 1)
    }

    /// Uniform direction on the unit sphere.
    pub fn unit_vector(&mut self) -> Vec3 {
        let z = self.uniform(-1.0, 1.0);
        let phi = self.uniform(0.0, std::f64::consts::TAU);
        let s = (1.0 - z * z).max(0.0).sqrt();
        Vec3::new(s * phi.cos(), s * phi.sin(), z)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.rng.fill_bytes(dest)
    }
}

/// Any unit vector orthogonal to `v` (which must be nonzero).
pub fn orthogonal_unit(v: &Vec3) -> Vec3 {
    let n = v.normalize();
    let helper = if n.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    n.cross(&helper).normalize()
}
