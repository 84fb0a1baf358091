//! Symmetric 3×3 tensors.
//!
//! Stresses, strains and visco-elastic strains all live in the space of
//! symmetric matrices. Only the six independent components are stored, so
//! symmetry holds by construction. The Mandel representation
//! `[a11, a22, a33, √2 a23, √2 a13, √2 a12]` turns the double contraction
//! `A:B` into an ordinary dot product, which is what the elasticity
//! operator acts on.

use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use nalgebra::{Matrix3, Vector4, Vector6};

const SQRT2: f64 = std::f64::consts::SQRT_2;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SymTensor3 {
    pub a11: f64,
    pub a22: f64,
    pub a33: f64,
    pub a12: f64,
    pub a13: f64,
    pub a23: f64,
}

impl SymTensor3 {
    pub const ZERO: SymTensor3 = SymTensor3 {
        a11: 0.0,
        a22: 0.0,
        a33: 0.0,
        a12: 0.0,
        a13: 0.0,
        a23: 0.0,
    };

    pub fn new(a11: f64, a22: f64, a33: f64, a12: f64, a13: f64, a23: f64) -> Self {
        SymTensor3 {
            a11,
            a22,
            a33,
            a12,
            a13,
            a23,
        }
    }

    pub fn identity() -> Self {
        Self::diag(1.0, 1.0, 1.0)
    }

    pub fn diag(a11: f64, a22: f64, a33: f64) -> Self {
        Self::new(a11, a22, a33, 0.0, 0.0, 0.0)
    }

    /// Plane tensor with vanishing out-of-plane shear.
    pub fn plane(a11: f64, a22: f64, a33: f64, a12: f64) -> Self {
        Self::new(a11, a22, a33, a12, 0.0, 0.0)
    }

    pub fn trace(&self) -> f64 {
        self.a11 + self.a22 + self.a33
    }

    /// Deviatoric (traceless) part `A - tr(A)/3 I`.
    pub fn dev(&self) -> Self {
        let m = self.trace() / 3.0;
        Self::new(
            self.a11 - m,
            self.a22 - m,
            self.a33 - m,
            self.a12,
            self.a13,
            self.a23,
        )
    }

    /// Double contraction `A:B = Σ a_ij b_ij`.
    pub fn ddot(&self, other: &Self) -> f64 {
        self.a11 * other.a11
            + self.a22 * other.a22
            + self.a33 * other.a33
            + 2.0 * (self.a12 * other.a12 + self.a13 * other.a13 + self.a23 * other.a23)
    }

    /// Frobenius norm `|A| = sqrt(A:A)`.
    pub fn norm(&self) -> f64 {
        self.ddot(self).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.to_mandel().iter().all(|v| v.is_finite())
    }

    pub fn to_mandel(&self) -> Vector6<f64> {
        Vector6::new(
            self.a11,
            self.a22,
            self.a33,
            SQRT2 * self.a23,
            SQRT2 * self.a13,
            SQRT2 * self.a12,
        )
    }

    pub fn from_mandel(v: &Vector6<f64>) -> Self {
        Self::new(v[0], v[1], v[2], v[5] / SQRT2, v[4] / SQRT2, v[3] / SQRT2)
    }

    /// Plane components `[a11, a22, a33, √2 a12]`; the out-of-plane shears
    /// are dropped.
    pub fn to_plane(&self) -> Vector4<f64> {
        Vector4::new(self.a11, self.a22, self.a33, SQRT2 * self.a12)
    }

    pub fn from_plane(v: &Vector4<f64>) -> Self {
        Self::plane(v[0], v[1], v[2], v[3] / SQRT2)
    }

    pub fn to_matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            self.a11, self.a12, self.a13, self.a12, self.a22, self.a23, self.a13, self.a23,
            self.a33,
        )
    }

    /// Symmetric part of an arbitrary matrix.
    pub fn from_matrix(m: &Matrix3<f64>) -> Self {
        Self::new(
            m[(0, 0)],
            m[(1, 1)],
            m[(2, 2)],
            0.5 * (m[(0, 1)] + m[(1, 0)]),
            0.5 * (m[(0, 2)] + m[(2, 0)]),
            0.5 * (m[(1, 2)] + m[(2, 1)]),
        )
    }
}

impl Add for SymTensor3 {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(
            self.a11 + o.a11,
            self.a22 + o.a22,
            self.a33 + o.a33,
            self.a12 + o.a12,
            self.a13 + o.a13,
            self.a23 + o.a23,
        )
    }
}

impl AddAssign for SymTensor3 {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl Sub for SymTensor3 {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        self + (-o)
    }
}

impl SubAssign for SymTensor3 {
    fn sub_assign(&mut self, o: Self) {
        *self = *self - o;
    }
}

impl Neg for SymTensor3 {
    type Output = Self;
    fn neg(self) -> Self {
        self * -1.0
    }
}

impl Mul<f64> for SymTensor3 {
    type Output = Self;
    fn mul(self, s: f64) -> Self {
        Self::new(
            s * self.a11,
            s * self.a22,
            s * self.a33,
            s * self.a12,
            s * self.a13,
            s * self.a23,
        )
    }
}

impl Mul<SymTensor3> for f64 {
    type Output = SymTensor3;
    fn mul(self, t: SymTensor3) -> SymTensor3 {
        t * self
    }
}
