use std::collections::HashMap;

use nalgebra::{Matrix3, Vector3};

use super::UnitVector3;
use crate::error::{Error, Result};

/// Slack allowed below zero for the barycentric coordinates of a containing face.
pub const BARY_TOL: f64 = 1e-12;

const AREA_TOL: f64 = 1e-9;

/// Area of the spherical triangle with unit-vector corners `a`, `b`, `c`.
pub fn spherical_triangle_area(a: &Vector3<f64>, b: &Vector3<f64>, c: &Vector3<f64>) -> f64 {
    let triple = a.dot(&b.cross(c)).abs();
    let denom = 1.0 + a.dot(b) + b.dot(c) + c.dot(a);
    2.0 * triple.atan2(denom)
}

/// Face containing a point and the point's spherical barycentric coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Location {
    pub face: usize,
    pub bary: [f64; 3],
}

/// A triangulation of the whole unit sphere.
///
/// Faces are counter-clockwise seen from outside, so `det[v1 v2 v3] > 0`.
#[derive(Clone, Debug)]
pub struct SphericalTriangulation {
    vertices: Vec<UnitVector3>,
    faces: Vec<[usize; 3]>,
    /// `neighbors[f][i]` is the face across the edge opposite corner `i`.
    neighbors: Vec<[usize; 3]>,
    /// Inverse of the corner matrix `[v1 v2 v3]`; row `i` is the linear
    /// functional that evaluates the `i`-th barycentric coordinate.
    inverses: Vec<Matrix3<f64>>,
    areas: Vec<f64>,
}

impl SphericalTriangulation {
    /// Build from vertices and outward-oriented faces, checking all invariants.
    pub fn from_parts(vertices: Vec<UnitVector3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let nv = vertices.len();
        if nv < 4 {
            return Err(Error::Geometry(format!(
                "a spherical triangulation needs at least 4 vertices, got {nv}"
            )));
        }
        let mut inverses = Vec::with_capacity(faces.len());
        let mut areas = Vec::with_capacity(faces.len());
        for (f, face) in faces.iter().enumerate() {
            if face.iter().any(|&i| i >= nv) {
                return Err(Error::Geometry(format!("face {f} references a missing vertex")));
            }
            let [a, b, c] = face.map(|i| *vertices[i].as_vector());
            let m = Matrix3::from_columns(&[a, b, c]);
            let det = m.determinant();
            if det <= 1e-14 {
                return Err(Error::Geometry(format!(
                    "face {f} is degenerate or inward oriented (det = {det:e})"
                )));
            }
            inverses.push(m.try_inverse().ok_or_else(|| {
                Error::Geometry(format!("face {f} has linearly dependent corners"))
            })?);
            areas.push(spherical_triangle_area(&a, &b, &c));
        }

        let mut edge_owner: HashMap<(usize, usize), (usize, usize)> = HashMap::new();
        for (f, face) in faces.iter().enumerate() {
            for i in 0..3 {
                let (p, q) = (face[(i + 1) % 3], face[(i + 2) % 3]);
                if edge_owner.insert((p, q), (f, i)).is_some() {
                    return Err(Error::Geometry(format!(
                        "directed edge ({p}, {q}) appears twice; faces overlap or are misoriented"
                    )));
                }
            }
        }
        let mut neighbors = vec![[usize::MAX; 3]; faces.len()];
        for (&(p, q), &(f, i)) in &edge_owner {
            match edge_owner.get(&(q, p)) {
                Some(&(g, _)) => neighbors[f][i] = g,
                None => {
                    return Err(Error::Geometry(format!(
                        "edge ({p}, {q}) has no opposite face; the surface is not closed"
                    )))
                }
            }
        }

        let tri = SphericalTriangulation {
            vertices,
            faces,
            neighbors,
            inverses,
            areas,
        };
        tri.validate()?;
        Ok(tri)
    }

    /// Check Euler characteristic, total area and vertex usage.
    pub fn validate(&self) -> Result<()> {
        let v = self.vertices.len() as i64;
        let f = self.faces.len() as i64;
        let e = 3 * f / 2;
        if 3 * f % 2 != 0 || v - e + f != 2 {
            return Err(Error::Geometry(format!(
                "Euler characteristic V - E + F = {} (V={v}, E={e}, F={f}), expected 2",
                v - e + f
            )));
        }
        let total: f64 = self.areas.iter().sum();
        if (total - 4.0 * std::f64::consts::PI).abs() > AREA_TOL {
            return Err(Error::Geometry(format!(
                "faces cover an area of {total}, expected 4π"
            )));
        }
        let mut used = vec![false; self.vertices.len()];
        for face in &self.faces {
            for &i in face {
                used[i] = true;
            }
        }
        if let Some(i) = used.iter().position(|u| !u) {
            return Err(Error::Geometry(format!("vertex {i} belongs to no face")));
        }
        Ok(())
    }

    pub fn vertices(&self) -> &[UnitVector3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_edges(&self) -> usize {
        3 * self.faces.len() / 2
    }

    pub fn neighbors(&self, face: usize) -> [usize; 3] {
        self.neighbors[face]
    }

    pub fn face_area(&self, face: usize) -> f64 {
        self.areas[face]
    }

    pub fn face_areas(&self) -> &[f64] {
        &self.areas
    }

    /// Inverse corner matrix of a face (rows are barycentric functionals).
    pub fn face_inverse(&self, face: usize) -> &Matrix3<f64> {
        &self.inverses[face]
    }

    pub fn face_corners(&self, face: usize) -> [Vector3<f64>; 3] {
        self.faces[face].map(|i| *self.vertices[i].as_vector())
    }

    /// Barycentric weights of each vertex: one third of the adjacent face areas.
    pub fn vertex_areas(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.vertices.len()];
        for (face, &area) in self.faces.iter().zip(&self.areas) {
            for &i in face {
                out[i] += area / 3.0;
            }
        }
        out
    }

    /// Raw barycentric coordinates of `p` with respect to `face`.
    pub fn barycentric(&self, face: usize, p: &Vector3<f64>) -> [f64; 3] {
        let b = self.inverses[face] * p;
        [b.x, b.y, b.z]
    }

    /// Find the face containing `p`; on shared edges and vertices the lowest
    /// face index wins.
    pub fn locate(&self, p: &UnitVector3) -> Location {
        let v = p.as_vector();
        let mut best = (f64::NEG_INFINITY, 0usize, [0.0; 3]);
        for face in 0..self.faces.len() {
            let b = self.barycentric(face, v);
            let min = b[0].min(b[1]).min(b[2]);
            if min >= -BARY_TOL {
                return Location { face, bary: b };
            }
            if min > best.0 {
                best = (min, face, b);
            }
        }
        // Only reachable through rounding on a seam; take the least violating face.
        Location {
            face: best.1,
            bary: best.2,
        }
    }

    /// Faces incident to each vertex.
    pub fn vertex_faces(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.vertices.len()];
        for (f, face) in self.faces.iter().enumerate() {
            for &i in face {
                out[i].push(f);
            }
        }
        out
    }
}

/// Free function form of [`SphericalTriangulation::locate`].
pub fn locate_barycentric(tri: &SphericalTriangulation, p: &UnitVector3) -> Location {
    tri.locate(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{icosphere_mesh, spherical_delaunay};
    use rand::Rng;

    fn octahedron() -> SphericalTriangulation {
        let pts = [
            [1.0, 0.0, 0.0],
            [-1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, -1.0, 0.0],
            [0.0, 0.0, 1.0],
            [0.0, 0.0, -1.0],
        ]
        .iter()
        .map(|p| UnitVector3::new(p[0], p[1], p[2]).unwrap())
        .collect();
        spherical_delaunay(pts).unwrap()
    }

    #[test]
    fn octant_center_has_symmetric_coordinates() {
        let tri = octahedron();
        let p = UnitVector3::normalize(1.0, 1.0, 1.0).unwrap();
        let loc = tri.locate(&p);
        let mut b = loc.bary;
        b.sort_by(f64::total_cmp);
        for x in b {
            assert!((x - 1.0 / 3f64.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn arc_midpoint_coordinates() {
        let tri = octahedron();
        let p = UnitVector3::normalize(1.0, 1.0, 0.0).unwrap();
        let loc = tri.locate(&p);
        let mut b = loc.bary;
        b.sort_by(f64::total_cmp);
        assert!(b[0].abs() < 1e-12);
        assert!((b[1] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert!((b[2] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        // lowest face id among the two faces sharing the edge
        let owners: Vec<usize> = (0..tri.faces().len())
            .filter(|&f| tri.barycentric(f, p.as_vector()).iter().all(|&x| x >= -BARY_TOL))
            .collect();
        assert_eq!(owners.len(), 2);
        assert_eq!(loc.face, owners[0]);
    }

    #[test]
    fn vertices_are_nodal() {
        let tri = icosphere_mesh(1).unwrap();
        for (f, face) in tri.faces().iter().enumerate() {
            for (corner, &vi) in face.iter().enumerate() {
                let b = tri.barycentric(f, tri.vertices()[vi].as_vector());
                for (k, &x) in b.iter().enumerate() {
                    let expected = if k == corner { 1.0 } else { 0.0 };
                    assert!((x - expected).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn every_random_point_is_located_with_small_residual() {
        let tri = icosphere_mesh(2).unwrap();
        let mut rng = crate::rng::stream(11, &[]);
        for _ in 0..2000 {
            let v = Vector3::new(
                rng.random::<f64>() - 0.5,
                rng.random::<f64>() - 0.5,
                rng.random::<f64>() - 0.5,
            );
            let p = UnitVector3::from_vector(v).unwrap();
            let loc = tri.locate(&p);
            assert!(loc.bary.iter().all(|&b| b >= -BARY_TOL));
            let [a, b, c] = tri.face_corners(loc.face);
            let r = a * loc.bary[0] + b * loc.bary[1] + c * loc.bary[2] - p.as_vector();
            assert!(r.norm() <= 1e-12);
        }
    }

    #[test]
    fn rejects_open_surfaces() {
        let tri = octahedron();
        let mut faces = tri.faces().to_vec();
        faces.pop();
        assert!(SphericalTriangulation::from_parts(tri.vertices().to_vec(), faces).is_err());
    }

    #[test]
    fn rejects_inverted_faces() {
        let tri = octahedron();
        let mut faces = tri.faces().to_vec();
        faces[0].swap(0, 1);
        assert!(SphericalTriangulation::from_parts(tri.vertices().to_vec(), faces).is_err());
    }

    #[test]
    fn vertex_areas_sum_to_sphere_area() {
        let tri = icosphere_mesh(2).unwrap();
        let total: f64 = tri.vertex_areas().iter().sum();
        assert!((total - 4.0 * std::f64::consts::PI).abs() < 1e-9);
    }
}
