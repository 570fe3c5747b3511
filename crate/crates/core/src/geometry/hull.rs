use nalgebra::Vector3;

use super::{SphericalTriangulation, UnitVector3};
use crate::error::{Error, Result};

const DEGENERACY_TOL: f64 = 1e-10;
const VISIBILITY_TOL: f64 = 1e-12;

fn orient(a: &Vector3<f64>, b: &Vector3<f64>, c: &Vector3<f64>, p: &Vector3<f64>) -> f64 {
    (b - a).cross(&(c - a)).dot(&(p - a))
}

fn initial_simplex(p: &[Vector3<f64>]) -> Result<[usize; 4]> {
    let i0 = 0;
    let i1 = (0..p.len())
        .max_by(|&a, &b| (p[a] - p[i0]).norm().total_cmp(&(p[b] - p[i0]).norm()))
        .unwrap();
    if (p[i1] - p[i0]).norm() < DEGENERACY_TOL {
        return Err(Error::Geometry("all points coincide".into()));
    }
    let line = p[i1] - p[i0];
    let i2 = (0..p.len())
        .max_by(|&a, &b| {
            (p[a] - p[i0])
                .cross(&line)
                .norm()
                .total_cmp(&(p[b] - p[i0]).cross(&line).norm())
        })
        .unwrap();
    if (p[i2] - p[i0]).cross(&line).norm() < DEGENERACY_TOL {
        return Err(Error::Geometry("points are collinear".into()));
    }
    let i3 = (0..p.len())
        .max_by(|&a, &b| {
            orient(&p[i0], &p[i1], &p[i2], &p[a])
                .abs()
                .total_cmp(&orient(&p[i0], &p[i1], &p[i2], &p[b]).abs())
        })
        .unwrap();
    if orient(&p[i0], &p[i1], &p[i2], &p[i3]).abs() < DEGENERACY_TOL {
        return Err(Error::Geometry(
            "points do not span three dimensions".into(),
        ));
    }
    Ok([i0, i1, i2, i3])
}

/// Spherical Delaunay triangulation of points on the unit sphere, computed as
/// their convex hull with outward-oriented faces.
pub fn spherical_delaunay(points: Vec<UnitVector3>) -> Result<SphericalTriangulation> {
    if points.len() < 4 {
        return Err(Error::Geometry(format!(
            "need at least 4 points, got {}",
            points.len()
        )));
    }
    let p: Vec<Vector3<f64>> = points.iter().map(|v| *v.as_vector()).collect();
    for i in 0..p.len() {
        for j in i + 1..p.len() {
            if (p[i] - p[j]).norm() < DEGENERACY_TOL {
                return Err(Error::Geometry(format!("points {i} and {j} coincide")));
            }
        }
    }

    let s = initial_simplex(&p)?;
    let interior = (p[s[0]] + p[s[1]] + p[s[2]] + p[s[3]]) / 4.0;
    let mut faces: Vec<[usize; 3]> = Vec::new();
    let mut alive: Vec<bool> = Vec::new();
    for &(a, b, c) in &[
        (s[0], s[1], s[2]),
        (s[0], s[1], s[3]),
        (s[0], s[2], s[3]),
        (s[1], s[2], s[3]),
    ] {
        let face = if orient(&p[a], &p[b], &p[c], &interior) < 0.0 {
            [a, b, c]
        } else {
            [a, c, b]
        };
        faces.push(face);
        alive.push(true);
    }

    for (idx, q) in p.iter().enumerate() {
        if s.contains(&idx) {
            continue;
        }
        let visible: Vec<usize> = (0..faces.len())
            .filter(|&f| alive[f])
            .filter(|&f| {
                let [a, b, c] = faces[f];
                orient(&p[a], &p[b], &p[c], q) > VISIBILITY_TOL
            })
            .collect();
        if visible.is_empty() {
            return Err(Error::Geometry(format!(
                "point {idx} is not an extreme point of the hull"
            )));
        }
        let mut directed: Vec<(usize, usize)> = Vec::with_capacity(3 * visible.len());
        for &f in &visible {
            let [a, b, c] = faces[f];
            directed.extend_from_slice(&[(a, b), (b, c), (c, a)]);
            alive[f] = false;
        }
        let horizon: Vec<(usize, usize)> = directed
            .iter()
            .copied()
            .filter(|&(a, b)| !directed.contains(&(b, a)))
            .collect();
        for (a, b) in horizon {
            faces.push([a, b, idx]);
            alive.push(true);
        }
    }

    let faces: Vec<[usize; 3]> = faces
        .into_iter()
        .zip(alive)
        .filter_map(|(f, a)| a.then_some(f))
        .collect();
    SphericalTriangulation::from_parts(points, faces)
}
