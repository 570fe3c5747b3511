//! Moments of spherical triangles.
//!
//! A spherical triangle is the central projection of its planar chordal
//! triangle. For `x` on the chordal plane at distance `h` from the origin the
//! surface element transforms as `dσ = h / |x|³ dA`, so any integrand on the
//! sphere becomes a smooth integrand on the planar triangle. The planar
//! integral uses a 7-point degree-5 symmetric rule with recursive 4-way
//! subdivision until the relative change drops below the requested tolerance.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

pub const DEFAULT_REL_TOL: f64 = 1e-9;
const MAX_DEPTH: u32 = 14;

/// Zeroth and second moments `∫ 1 dσ` and `∫ p pᵀ dσ` over a spherical triangle.
#[derive(Clone, Copy, Debug)]
pub struct Moments {
    pub area: f64,
    pub second: Matrix3<f64>,
}

impl Moments {
    fn zero() -> Self {
        Moments {
            area: 0.0,
            second: Matrix3::zeros(),
        }
    }

    fn add(&mut self, other: &Moments) {
        self.area += other.area;
        self.second += other.second;
    }

    fn distance(&self, other: &Moments) -> f64 {
        ((self.area - other.area).powi(2) + (self.second - other.second).norm_squared()).sqrt()
    }

    fn magnitude(&self) -> f64 {
        (self.area.powi(2) + self.second.norm_squared()).sqrt()
    }
}

/// Radon's 7-point rule: (barycentric point, weight) with weights summing to 1.
fn radon7() -> [([f64; 3], f64); 7] {
    let s15 = 15f64.sqrt();
    let a1 = (6.0 - s15) / 21.0;
    let a2 = (6.0 + s15) / 21.0;
    let w1 = (155.0 - s15) / 1200.0;
    let w2 = (155.0 + s15) / 1200.0;
    let t = 1.0 / 3.0;
    [
        ([t, t, t], 9.0 / 40.0),
        ([a1, a1, 1.0 - 2.0 * a1], w1),
        ([a1, 1.0 - 2.0 * a1, a1], w1),
        ([1.0 - 2.0 * a1, a1, a1], w1),
        ([a2, a2, 1.0 - 2.0 * a2], w2),
        ([a2, 1.0 - 2.0 * a2, a2], w2),
        ([1.0 - 2.0 * a2, a2, a2], w2),
    ]
}

fn rule(a: &Vector3<f64>, b: &Vector3<f64>, c: &Vector3<f64>, h: f64) -> Moments {
    let flat_area = 0.5 * (b - a).cross(&(c - a)).norm();
    let mut m = Moments::zero();
    for (l, w) in radon7() {
        let x = a * l[0] + b * l[1] + c * l[2];
        let r = x.norm();
        let p = x / r;
        let weight = w * flat_area * h / (r * r * r);
        m.area += weight;
        m.second += p * p.transpose() * weight;
    }
    m
}

fn adapt(
    a: &Vector3<f64>,
    b: &Vector3<f64>,
    c: &Vector3<f64>,
    h: f64,
    coarse: Moments,
    rel_tol: f64,
    depth: u32,
) -> Result<Moments> {
    let ab = (a + b) / 2.0;
    let bc = (b + c) / 2.0;
    let ca = (c + a) / 2.0;
    let children = [(*a, ab, ca), (ab, *b, bc), (ca, bc, *c), (ab, bc, ca)];
    let parts: Vec<Moments> = children.iter().map(|(x, y, z)| rule(x, y, z, h)).collect();
    let mut fine = Moments::zero();
    for p in &parts {
        fine.add(p);
    }
    if fine.distance(&coarse) <= rel_tol * fine.magnitude() {
        return Ok(fine);
    }
    if depth >= MAX_DEPTH {
        return Err(Error::numeric(format!(
            "spherical triangle quadrature did not reach relative tolerance {rel_tol:e} after {MAX_DEPTH} subdivisions"
        )));
    }
    let mut total = Moments::zero();
    for ((x, y, z), part) in children.iter().zip(parts) {
        total.add(&adapt(x, y, z, h, part, rel_tol, depth + 1)?);
    }
    Ok(total)
}

/// Moments of the spherical triangle with unit-vector corners `a`, `b`, `c`.
pub fn spherical_moments(
    a: &Vector3<f64>,
    b: &Vector3<f64>,
    c: &Vector3<f64>,
    rel_tol: f64,
) -> Result<Moments> {
    let normal = (b - a).cross(&(c - a));
    let nn = normal.norm();
    if nn <= 0.0 {
        return Err(Error::numeric("degenerate triangle in quadrature"));
    }
    let h = (normal / nn).dot(a).abs();
    let coarse = rule(a, b, c, h);
    adapt(a, b, c, h, coarse, rel_tol, 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{icosphere_mesh, spherical_triangle_area};
    use std::f64::consts::PI;

    #[test]
    fn rule_weights_sum_to_one() {
        let s: f64 = radon7().iter().map(|(_, w)| w).sum();
        assert!((s - 1.0).abs() < 1e-15);
    }

    #[test]
    fn octant_moments_are_exact() {
        let (a, b, c) = (Vector3::x(), Vector3::y(), Vector3::z());
        let m = spherical_moments(&a, &b, &c, 1e-11).unwrap();
        assert!((m.area - PI / 2.0).abs() < 1e-9);
        // ∫ x² over an octant is (4π/3)/8; off-diagonals ∫ x y = 1/3 · (1/2)... by symmetry all equal
        assert!((m.second[(0, 0)] - PI / 6.0).abs() < 1e-9);
        let xy = m.second[(0, 1)];
        assert!((xy - m.second[(1, 2)]).abs() < 1e-10);
        // ∫_{octant} x y dσ = 1/3
        assert!((xy - 1.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn area_matches_closed_form_on_mesh() {
        let tri = icosphere_mesh(1).unwrap();
        let mut total = Matrix3::zeros();
        for f in 0..tri.faces().len() {
            let [a, b, c] = tri.face_corners(f);
            let m = spherical_moments(&a, &b, &c, DEFAULT_REL_TOL).unwrap();
            assert!((m.area - spherical_triangle_area(&a, &b, &c)).abs() < 1e-10);
            total += m.second;
        }
        // ∫_{S²} p pᵀ = (4π/3) I
        assert!((total - Matrix3::identity() * (4.0 * PI / 3.0)).norm() < 1e-8);
    }
}
