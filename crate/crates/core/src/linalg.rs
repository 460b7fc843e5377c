//! Minimal 3-vector arithmetic for real and complex fields.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::ops::{Add, Index, Mul, Neg, Sub};

/// Real 3-vector (meters for positions, dimensionless for directions).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vec3(pub [f64; 3]);

impl Vec3 {
    pub const ZERO: Vec3 = Vec3([0.0; 3]);

    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3([x, y, z])
    }

    pub fn x(&self) -> f64 {
        self.0[0]
    }
    pub fn y(&self) -> f64 {
        self.0[1]
    }
    pub fn z(&self) -> f64 {
        self.0[2]
    }

    pub fn dot(&self, other: &Vec3) -> f64 {
        self.0[0] * other.0[0] + self.0[1] * other.0[1] + self.0[2] * other.0[2]
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn normalized(&self) -> Vec3 {
        let n = self.norm();
        Vec3([self.0[0] / n, self.0[1] / n, self.0[2] / n])
    }

    pub fn cross(&self, other: &Vec3) -> Vec3 {
        Vec3([
            self.0[1] * other.0[2] - self.0[2] * other.0[1],
            self.0[2] * other.0[0] - self.0[0] * other.0[2],
            self.0[0] * other.0[1] - self.0[1] * other.0[0],
        ])
    }

    pub fn scale(&self, s: f64) -> Vec3 {
        Vec3([self.0[0] * s, self.0[1] * s, self.0[2] * s])
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3([self.0[0] + o.0[0], self.0[1] + o.0[1], self.0[2] + o.0[2]])
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3([self.0[0] - o.0[0], self.0[1] - o.0[1], self.0[2] - o.0[2]])
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3([-self.0[0], -self.0[1], -self.0[2]])
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        self.scale(s)
    }
}

impl Index<usize> for Vec3 {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Complex 3-vector (field values, spectrum samples).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CVec3(pub [Complex64; 3]);

impl CVec3 {
    pub const ZERO: CVec3 = CVec3([Complex64::new(0.0, 0.0); 3]);

    pub fn from_real(v: Vec3) -> Self {
        CVec3([
            Complex64::new(v.0[0], 0.0),
            Complex64::new(v.0[1], 0.0),
            Complex64::new(v.0[2], 0.0),
        ])
    }

    /// Bilinear dot with a real vector (no conjugation).
    pub fn dot_real(&self, v: &Vec3) -> Complex64 {
        self.0[0] * v.0[0] + self.0[1] * v.0[1] + self.0[2] * v.0[2]
    }

    /// Hermitian inner product ⟨self, other⟩ = Σ conj(self_i)·other_i.
    pub fn inner(&self, other: &CVec3) -> Complex64 {
        self.0[0].conj() * other.0[0] + self.0[1].conj() * other.0[1] + self.0[2].conj() * other.0[2]
    }

    pub fn norm(&self) -> f64 {
        self.inner(self).re.sqrt()
    }

    pub fn scale(&self, s: Complex64) -> CVec3 {
        CVec3([self.0[0] * s, self.0[1] * s, self.0[2] * s])
    }

    pub fn conj(&self) -> CVec3 {
        CVec3([self.0[0].conj(), self.0[1].conj(), self.0[2].conj()])
    }

    /// Transverse projection (I − k̂k̂ᵀ)·self for a real unit direction.
    pub fn project_transverse(&self, khat: &Vec3) -> CVec3 {
        let radial = self.dot_real(khat);
        CVec3([
            self.0[0] - radial * khat.0[0],
            self.0[1] - radial * khat.0[1],
            self.0[2] - radial * khat.0[2],
        ])
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }
}

impl Add for CVec3 {
    type Output = CVec3;
    fn add(self, o: CVec3) -> CVec3 {
        CVec3([self.0[0] + o.0[0], self.0[1] + o.0[1], self.0[2] + o.0[2]])
    }
}

impl Sub for CVec3 {
    type Output = CVec3;
    fn sub(self, o: CVec3) -> CVec3 {
        CVec3([self.0[0] - o.0[0], self.0[1] - o.0[1], self.0[2] - o.0[2]])
    }
}

impl Index<usize> for CVec3 {
    type Output = Complex64;
    fn index(&self, i: usize) -> &Complex64 {
        &self.0[i]
    }
}

/// Cartesian field component selected for probing and normalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Component {
    X,
    Y,
    Z,
}

impl Component {
    pub fn index(&self) -> usize {
        match self {
            Component::X => 0,
            Component::Y => 1,
            Component::Z => 2,
        }
    }

    pub fn unit(&self) -> Vec3 {
        match self {
            Component::X => Vec3::new(1.0, 0.0, 0.0),
            Component::Y => Vec3::new(0.0, 1.0, 0.0),
            Component::Z => Vec3::new(0.0, 0.0, 1.0),
        }
    }

    pub fn all() -> [Component; 3] {
        [Component::X, Component::Y, Component::Z]
    }
}

impl std::fmt::Display for Component {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Component::X => write!(f, "x"),
            Component::Y => write!(f, "y"),
            Component::Z => write!(f, "z"),
        }
    }
}

impl std::str::FromStr for Component {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "x" | "X" => Ok(Component::X),
            "y" | "Y" => Ok(Component::Y),
            "z" | "Z" => Ok(Component::Z),
            other => Err(format!("unknown component '{other}', expected x, y, or z")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cross_product_right_handed() {
        let x = Vec3::new(1.0, 0.0, 0.0);
        let y = Vec3::new(0.0, 1.0, 0.0);
        assert_eq!(x.cross(&y), Vec3::new(0.0, 0.0, 1.0));
    }

    #[test]
    fn transverse_projection_removes_radial_part() {
        let khat = Vec3::new(0.0, 0.0, 1.0);
        let v = CVec3([
            Complex64::new(1.0, 2.0),
            Complex64::new(-0.5, 0.0),
            Complex64::new(3.0, -1.0),
        ]);
        let t = v.project_transverse(&khat);
        assert_eq!(t.dot_real(&khat), Complex64::new(0.0, 0.0));
        assert_eq!(t[0], v[0]);
        assert_eq!(t[1], v[1]);
    }
}
