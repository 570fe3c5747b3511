use std::collections::HashMap;

use nalgebra::Vector3;

use super::{SphericalTriangulation, UnitVector3};
use crate::error::{Error, Result};

pub const MAX_ICOSPHERE_SUBDIVISION: u32 = 7;

fn icosahedron() -> (Vec<Vector3<f64>>, Vec<[usize; 3]>) {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let raw = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ];
    let vertices = raw
        .iter()
        .map(|p| Vector3::new(p[0], p[1], p[2]).normalize())
        .collect();
    let faces = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    (vertices, faces)
}

fn subdivide(vertices: &mut Vec<Vector3<f64>>, faces: &[[usize; 3]]) -> Vec<[usize; 3]> {
    let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
    let mut mid = |a: usize, b: usize, vertices: &mut Vec<Vector3<f64>>| -> usize {
        let key = (a.min(b), a.max(b));
        *midpoint.entry(key).or_insert_with(|| {
            vertices.push((vertices[a] + vertices[b]).normalize());
            vertices.len() - 1
        })
    };
    let mut out = Vec::with_capacity(faces.len() * 4);
    for &[a, b, c] in faces {
        let ab = mid(a, b, vertices);
        let bc = mid(b, c, vertices);
        let ca = mid(c, a, vertices);
        out.push([a, ab, ca]);
        out.push([b, bc, ab]);
        out.push([c, ca, bc]);
        out.push([ab, bc, ca]);
    }
    out
}

fn mesh(subdivision: u32) -> Result<(Vec<Vector3<f64>>, Vec<[usize; 3]>)> {
    if subdivision > MAX_ICOSPHERE_SUBDIVISION {
        return Err(Error::Resource(format!(
            "icosphere subdivision {subdivision} exceeds the maximum of {MAX_ICOSPHERE_SUBDIVISION}"
        )));
    }
    let (mut vertices, mut faces) = icosahedron();
    for _ in 0..subdivision {
        faces = subdivide(&mut vertices, &faces);
    }
    Ok((vertices, faces))
}

/// Vertices of the `subdivision`-times refined icosahedron: `10·4^s + 2` points.
pub fn icosphere(subdivision: u32) -> Result<Vec<UnitVector3>> {
    let (vertices, _) = mesh(subdivision)?;
    Ok(vertices
        .into_iter()
        .map(UnitVector3::from_vector_unchecked)
        .collect())
}

/// Icosphere vertices together with the subdivision faces.
pub fn icosphere_mesh(subdivision: u32) -> Result<SphericalTriangulation> {
    let (vertices, faces) = mesh(subdivision)?;
    let vertices = vertices
        .into_iter()
        .map(UnitVector3::from_vector_unchecked)
        .collect();
    SphericalTriangulation::from_parts(vertices, faces)
}

/// Golden-angle spiral with `n` nearly equispaced points.
pub fn fibonacci_sphere(n: usize) -> Vec<UnitVector3> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden * i as f64;
            UnitVector3::from_vector_unchecked(Vector3::new(r * phi.cos(), r * phi.sin(), z).normalize())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vertex_counts() {
        assert_eq!(icosphere(0).unwrap().len(), 12);
        assert_eq!(icosphere(1).unwrap().len(), 42);
        assert_eq!(icosphere(2).unwrap().len(), 162);
        assert_eq!(icosphere(4).unwrap().len(), 10 * 4usize.pow(4) + 2);
    }

    #[test]
    fn too_fine_is_a_resource_error() {
        assert!(matches!(icosphere(8), Err(Error::Resource(_))));
    }

    #[test]
    fn meshes_are_valid_triangulations() {
        for s in 0..3 {
            let tri = icosphere_mesh(s).unwrap();
            tri.validate().unwrap();
            assert_eq!(tri.faces().len(), 20 * 4usize.pow(s));
        }
    }

    #[test]
    fn near_uniform_spacing() {
        let v = icosphere(2).unwrap();
        let nearest: Vec<f64> = v
            .iter()
            .enumerate()
            .map(|(i, a)| {
                v.iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .map(|(_, b)| a.geodesic_distance(b))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let max = nearest.iter().cloned().fold(0.0, f64::max);
        let min = nearest.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(max / min < 1.3, "spacing ratio {}", max / min);
    }

    #[test]
    fn fibonacci_points_are_unit_and_distinct() {
        let v = fibonacci_sphere(36);
        assert_eq!(v.len(), 36);
        for (i, a) in v.iter().enumerate() {
            assert!((a.as_vector().norm() - 1.0).abs() < 1e-12);
            for b in &v[i + 1..] {
                assert!(a.geodesic_distance(b) > 0.2);
            }
        }
    }
}
