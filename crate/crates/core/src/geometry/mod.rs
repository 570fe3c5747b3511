//! Points on the two-sphere domain, spherical triangulations and the
//! degree-1 spherical spline basis.

mod basis;
mod hull;
mod icosphere;
mod prune;
pub(crate) mod quadrature;
mod triangulation;

pub use basis::{
    eval_basis_matrix, mass_matrix, penalty_matrix, thin_svd, BasisOperators, SplineBasisSystem,
    ThinSvd, SINGULAR_VALUE_RTOL,
};
pub use hull::spherical_delaunay;
pub use icosphere::{fibonacci_sphere, icosphere, icosphere_mesh, MAX_ICOSPHERE_SUBDIVISION};
pub use prune::prune_vertices;
pub use triangulation::{locate_barycentric, spherical_triangle_area, Location, SphericalTriangulation, BARY_TOL};

use nalgebra::Vector3;

use crate::error::{Error, Result};

/// A point on the unit sphere.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UnitVector3(Vector3<f64>);

impl UnitVector3 {
    /// Accepted deviation of the Euclidean norm from one.
    pub const NORM_TOL: f64 = 1e-9;

    /// Wrap coordinates that are already unit norm.
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        let v = Vector3::new(x, y, z);
        let norm = v.norm();
        if !norm.is_finite() || (norm - 1.0).abs() > Self::NORM_TOL {
            return Err(Error::arg(format!(
                "({x}, {y}, {z}) is not a unit vector (norm {norm})"
            )));
        }
        Ok(UnitVector3(v))
    }

    /// Project a nonzero vector onto the sphere.
    pub fn normalize(x: f64, y: f64, z: f64) -> Result<Self> {
        Self::from_vector(Vector3::new(x, y, z))
    }

    pub fn from_vector(v: Vector3<f64>) -> Result<Self> {
        let norm = v.norm();
        if !norm.is_finite() || norm <= f64::MIN_POSITIVE {
            return Err(Error::arg("cannot normalize a zero or non-finite vector"));
        }
        Ok(UnitVector3(v / norm))
    }

    pub(crate) fn from_vector_unchecked(v: Vector3<f64>) -> Self {
        UnitVector3(v)
    }

    pub fn x(&self) -> f64 {
        self.0.x
    }
    pub fn y(&self) -> f64 {
        self.0.y
    }
    pub fn z(&self) -> f64 {
        self.0.z
    }

    pub fn as_vector(&self) -> &Vector3<f64> {
        &self.0
    }

    pub fn dot(&self, other: &UnitVector3) -> f64 {
        self.0.dot(&other.0)
    }

    /// Great-circle distance in radians.
    pub fn geodesic_distance(&self, other: &UnitVector3) -> f64 {
        let cross = self.0.cross(&other.0).norm();
        cross.atan2(self.dot(other))
    }
}

/// Which copy of the sphere a point lives on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SphereId {
    One,
    Two,
}

impl SphereId {
    pub const BOTH: [SphereId; 2] = [SphereId::One, SphereId::Two];

    /// Zero-based block index.
    pub fn index(self) -> usize {
        match self {
            SphereId::One => 0,
            SphereId::Two => 1,
        }
    }

    /// One-based label used in files.
    pub fn label(self) -> u8 {
        self.index() as u8 + 1
    }

    pub fn from_label(label: i64) -> Result<Self> {
        match label {
            1 => Ok(SphereId::One),
            2 => Ok(SphereId::Two),
            other => Err(Error::arg(format!("sphere id must be 1 or 2, got {other}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpherePoint {
    pub sphere: SphereId,
    pub v: UnitVector3,
}

impl SpherePoint {
    pub fn new(sphere: SphereId, v: UnitVector3) -> Self {
        SpherePoint { sphere, v }
    }
}

/// Evaluation grid over both spheres, sphere-1 block first.
#[derive(Clone, Debug, PartialEq)]
pub struct GridOmega {
    points: Vec<SpherePoint>,
    n1: usize,
    n2: usize,
}

impl GridOmega {
    pub const MIN_POINTS: usize = 8;

    pub fn new(sphere1: &[UnitVector3], sphere2: &[UnitVector3]) -> Result<Self> {
        let (n1, n2) = (sphere1.len(), sphere2.len());
        if n1 + n2 < Self::MIN_POINTS || n1 == 0 || n2 == 0 {
            return Err(Error::arg(format!(
                "grid needs points on both spheres and at least {} in total (got {n1} + {n2})",
                Self::MIN_POINTS
            )));
        }
        let points = sphere1
            .iter()
            .map(|&v| SpherePoint::new(SphereId::One, v))
            .chain(sphere2.iter().map(|&v| SpherePoint::new(SphereId::Two, v)))
            .collect();
        Ok(GridOmega { points, n1, n2 })
    }

    /// Same icosphere subdivision on both spheres.
    pub fn icosphere(subdivision: u32) -> Result<Self> {
        let v = icosphere(subdivision)?;
        Self::new(&v, &v)
    }

    pub fn points(&self) -> &[SpherePoint] {
        &self.points
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn n2(&self) -> usize {
        self.n2
    }

    pub fn len(&self) -> usize {
        self.n1 + self.n2
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn block_len(&self, sphere: SphereId) -> usize {
        match sphere {
            SphereId::One => self.n1,
            SphereId::Two => self.n2,
        }
    }

    /// Offset of the first point of `sphere` in the stacked ordering.
    pub fn block_offset(&self, sphere: SphereId) -> usize {
        match sphere {
            SphereId::One => 0,
            SphereId::Two => self.n1,
        }
    }

    pub fn block(&self, sphere: SphereId) -> &[SpherePoint] {
        let o = self.block_offset(sphere);
        &self.points[o..o + self.block_len(sphere)]
    }

    pub fn block_vectors(&self, sphere: SphereId) -> Vec<UnitVector3> {
        self.block(sphere).iter().map(|p| p.v).collect()
    }
}
