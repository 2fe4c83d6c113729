//! Second-order jets carrying value, gradient and Laplacian.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Add, Mul, Neg, Sub};

/// `(value, ∇, Δ)` of a scalar field at a point.
///
/// Jets are closed under sums, products and composition with scalar
/// functions:
///
/// * `Δ(fg) = fΔg + gΔf + 2∇f·∇g`
/// * `Δh(f) = h″(f)|∇f|² + h′(f)Δf`
///
/// so no mixed second derivatives are ever needed.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet2 {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub laplacian: f64,
}

impl Jet2 {
    pub fn constant(value: f64, dim: usize) -> Self {
        Self {
            value,
            gradient: vec![0.0; dim],
            laplacian: 0.0,
        }
    }

    pub fn zero(dim: usize) -> Self {
        Self::constant(0.0, dim)
    }

    /// The coordinate function `x_axis` evaluated at `value`.
    pub fn variable(value: f64, axis: usize, dim: usize) -> Self {
        let mut gradient = vec![0.0; dim];
        gradient[axis] = 1.0;
        Self {
            value,
            gradient,
            laplacian: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.gradient.len()
    }

    pub fn grad_norm_sq(&self) -> f64 {
        self.gradient.iter().map(|g| g * g).sum()
    }

    /// `h(self)` given `h(v)`, `h′(v)` and `h″(v)` at `v = self.value`.
    pub fn compose(&self, h: f64, dh: f64, d2h: f64) -> Self {
        Self {
            value: h,
            gradient: self.gradient.iter().map(|g| dh * g).collect(),
            laplacian: d2h * self.grad_norm_sq() + dh * self.laplacian,
        }
    }

    pub fn scale(&self, k: f64) -> Self {
        Self {
            value: k * self.value,
            gradient: self.gradient.iter().map(|g| k * g).collect(),
            laplacian: k * self.laplacian,
        }
    }

    /// `self += k * other`.
    pub fn add_scaled(&mut self, k: f64, other: &Jet2) {
        self.value += k * other.value;
        for (a, b) in self.gradient.iter_mut().zip(&other.gradient) {
            *a += k * b;
        }
        self.laplacian += k * other.laplacian;
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
            && self.laplacian.is_finite()
            && self.gradient.iter().all(|g| g.is_finite())
    }
}

impl Add for &Jet2 {
    type Output = Jet2;
    fn add(self, rhs: &Jet2) -> Jet2 {
        let mut out = self.clone();
        out.add_scaled(1.0, rhs);
        out
    }
}

impl Sub for &Jet2 {
    type Output = Jet2;
    fn sub(self, rhs: &Jet2) -> Jet2 {
        let mut out = self.clone();
        out.add_scaled(-1.0, rhs);
        out
    }
}

impl Mul for &Jet2 {
    type Output = Jet2;
    fn mul(self, rhs: &Jet2) -> Jet2 {
        let cross: f64 = self
            .gradient
            .iter()
            .zip(&rhs.gradient)
            .map(|(a, b)| a * b)
            .sum();
        Jet2 {
            value: self.value * rhs.value,
            gradient: self
                .gradient
                .iter()
                .zip(&rhs.gradient)
                .map(|(a, b)| a * rhs.value + self.value * b)
                .collect(),
            laplacian: self.value * rhs.laplacian + rhs.value * self.laplacian + 2.0 * cross,
        }
    }
}

impl Neg for &Jet2 {
    type Output = Jet2;
    fn neg(self) -> Jet2 {
        self.scale(-1.0)
    }
}
