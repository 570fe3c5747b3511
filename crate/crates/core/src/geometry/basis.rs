use nalgebra::{DMatrix, DVector, Matrix3};

use super::quadrature::{spherical_moments, Moments, DEFAULT_REL_TOL};
use super::{GridOmega, SphereId, SphericalTriangulation};
use crate::error::{Error, Result};

/// Singular values below this fraction of the largest are treated as zero.
pub const SINGULAR_VALUE_RTOL: f64 = 1e-10;

/// Degree-1 spherical spline spaces on the two spheres.
///
/// Basis function `j` of a block is the hat function of vertex `j`: on each
/// face it equals the spherical barycentric coordinate of that vertex.
#[derive(Clone, Debug)]
pub struct SplineBasisSystem {
    tri: [SphericalTriangulation; 2],
}

impl SplineBasisSystem {
    pub fn new(tri1: SphericalTriangulation, tri2: SphericalTriangulation) -> Result<Self> {
        for (d, t) in [&tri1, &tri2].iter().enumerate() {
            if t.num_vertices() < 4 {
                return Err(Error::arg(format!(
                    "sphere {} basis needs at least 4 vertices",
                    d + 1
                )));
            }
        }
        Ok(SplineBasisSystem { tri: [tri1, tri2] })
    }

    pub fn triangulation(&self, sphere: SphereId) -> &SphericalTriangulation {
        &self.tri[sphere.index()]
    }

    pub fn m1(&self) -> usize {
        self.tri[0].num_vertices()
    }

    pub fn m2(&self) -> usize {
        self.tri[1].num_vertices()
    }

    pub fn m(&self) -> usize {
        self.m1() + self.m2()
    }

    /// Column offset of a block in the stacked coefficient vector.
    pub fn offset(&self, sphere: SphereId) -> usize {
        match sphere {
            SphereId::One => 0,
            SphereId::Two => self.m1(),
        }
    }
}

/// Basis evaluation matrix: `Φ[i, j] = φ_j(x_i)`, block diagonal across spheres.
pub fn eval_basis_matrix(basis: &SplineBasisSystem, grid: &GridOmega) -> DMatrix<f64> {
    let mut phi = DMatrix::zeros(grid.len(), basis.m());
    for (row, p) in grid.points().iter().enumerate() {
        let tri = basis.triangulation(p.sphere);
        let off = basis.offset(p.sphere);
        let loc = tri.locate(&p.v);
        for (corner, &vi) in tri.faces()[loc.face].iter().enumerate() {
            phi[(row, off + vi)] = loc.bary[corner];
        }
    }
    phi
}

fn face_moments(tri: &SphericalTriangulation) -> Result<Vec<Moments>> {
    (0..tri.faces().len())
        .map(|f| {
            let [a, b, c] = tri.face_corners(f);
            spherical_moments(&a, &b, &c, DEFAULT_REL_TOL)
        })
        .collect()
}

/// Assemble `Σ_faces A_f K_f A_fᵀ` into a block-diagonal M×M matrix, where
/// `A_f` is the face's barycentric functional matrix.
fn assemble(
    basis: &SplineBasisSystem,
    local: impl Fn(&Moments) -> Matrix3<f64>,
) -> Result<DMatrix<f64>> {
    let mut out = DMatrix::zeros(basis.m(), basis.m());
    for sphere in SphereId::BOTH {
        let tri = basis.triangulation(sphere);
        let off = basis.offset(sphere);
        for (f, mom) in face_moments(tri)?.iter().enumerate() {
            let a = tri.face_inverse(f);
            let k = a * local(mom) * a.transpose();
            let face = tri.faces()[f];
            for (i, &vi) in face.iter().enumerate() {
                for (j, &vj) in face.iter().enumerate() {
                    out[(off + vi, off + vj)] += k[(i, j)];
                }
            }
        }
    }
    // exact symmetry; assembly is symmetric up to rounding only
    let sym = (&out + out.transpose()) * 0.5;
    Ok(sym)
}

/// Gram matrix `J[j, l] = ∫ φ_j φ_l` over the relevant sphere.
pub fn mass_matrix(basis: &SplineBasisSystem) -> Result<DMatrix<f64>> {
    assemble(basis, |m| m.second)
}

/// Roughness matrix with `cᵀQc = ∫ ‖∇ ξ‖²` for `ξ = cᵀφ`.
///
/// On a face `φ_i(p) = a_i·p`, whose surface gradient is `(I − ppᵀ) a_i`, so
/// the local matrix is `A (∫ (I − ppᵀ) dσ) Aᵀ`.
pub fn penalty_matrix(basis: &SplineBasisSystem) -> Result<DMatrix<f64>> {
    assemble(basis, |m| Matrix3::identity() * m.area - m.second)
}

/// Thin SVD `Φ_d = U D Vᵀ` of one basis block.
#[derive(Clone, Debug)]
pub struct ThinSvd {
    pub u: DMatrix<f64>,
    pub d: DVector<f64>,
    pub v: DMatrix<f64>,
}

/// Thin SVD with singular values sorted in descending order. Columns of `V`
/// are signed so their largest-magnitude entry is positive.
///
/// `block` only labels the error when the block is rank deficient.
pub fn thin_svd(phi: &DMatrix<f64>, block: usize) -> Result<ThinSvd> {
    let (n, m) = phi.shape();
    if n < m {
        return Err(Error::RankDeficient {
            block,
            rank: n,
            columns: m,
        });
    }
    let svd = phi.clone().svd(true, true);
    let u_raw = svd.u.expect("left singular vectors requested");
    let vt_raw = svd.v_t.expect("right singular vectors requested");
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let smax = svd.singular_values[order[0]];
    let rank = order
        .iter()
        .filter(|&&i| svd.singular_values[i] > SINGULAR_VALUE_RTOL * smax)
        .count();
    if rank < m || smax <= 0.0 {
        return Err(Error::RankDeficient {
            block,
            rank,
            columns: m,
        });
    }
    let mut u = DMatrix::zeros(n, m);
    let mut v = DMatrix::zeros(m, m);
    let mut d = DVector::zeros(m);
    for (k, &i) in order.iter().enumerate() {
        let vcol = vt_raw.row(i).transpose();
        let pivot = vcol.iter().copied().fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        v.set_column(k, &(vcol * sign));
        u.set_column(k, &(u_raw.column(i) * sign));
        d[k] = svd.singular_values[i];
    }
    Ok(ThinSvd { u, d, v })
}

/// Everything the fitting algorithm needs about the basis on a given grid.
///
/// All matrices are stored dense but are block diagonal across spheres.
#[derive(Clone, Debug)]
pub struct BasisOperators {
    pub basis: SplineBasisSystem,
    pub grid: GridOmega,
    /// (n1+n2) × M evaluation matrix Φ.
    pub phi: DMatrix<f64>,
    /// Mass matrix J.
    pub mass: DMatrix<f64>,
    /// Roughness matrix Q.
    pub penalty: DMatrix<f64>,
    /// (n1+n2) × M, orthonormal columns.
    pub u: DMatrix<f64>,
    /// Singular values, block 1 then block 2 (each block descending).
    pub d: DVector<f64>,
    /// M × M orthogonal.
    pub v: DMatrix<f64>,
    dvt: DMatrix<f64>,
    vdinv: DMatrix<f64>,
    mass_min_eig: f64,
}

impl BasisOperators {
    pub fn build(basis: SplineBasisSystem, grid: GridOmega) -> Result<Self> {
        let phi = eval_basis_matrix(&basis, &grid);
        let mass = mass_matrix(&basis)?;
        let penalty = penalty_matrix(&basis)?;
        let (n, m) = (grid.len(), basis.m());
        let mut u = DMatrix::zeros(n, m);
        let mut v = DMatrix::zeros(m, m);
        let mut d = DVector::zeros(m);
        for sphere in SphereId::BOTH {
            let r0 = grid.block_offset(sphere);
            let nr = grid.block_len(sphere);
            let c0 = basis.offset(sphere);
            let nc = basis.triangulation(sphere).num_vertices();
            let block = phi.view((r0, c0), (nr, nc)).into_owned();
            let svd = thin_svd(&block, sphere.index() + 1)?;
            u.view_mut((r0, c0), (nr, nc)).copy_from(&svd.u);
            v.view_mut((c0, c0), (nc, nc)).copy_from(&svd.v);
            d.rows_mut(c0, nc).copy_from(&svd.d);
        }
        let dvt = DMatrix::from_diagonal(&d) * v.transpose();
        let vdinv = &v * DMatrix::from_diagonal(&d.map(|x| 1.0 / x));
        let mass_min_eig = mass.clone().symmetric_eigen().eigenvalues.min();
        if !(mass_min_eig > 0.0) {
            return Err(Error::numeric("mass matrix is not positive definite"));
        }
        Ok(BasisOperators {
            basis,
            grid,
            phi,
            mass,
            penalty,
            u,
            d,
            v,
            dvt,
            vdinv,
            mass_min_eig,
        })
    }

    pub fn m(&self) -> usize {
        self.basis.m()
    }

    pub fn n(&self) -> usize {
        self.grid.len()
    }

    /// `D Vᵀ`, mapping coefficients to reduced coordinates.
    pub fn dvt(&self) -> &DMatrix<f64> {
        &self.dvt
    }

    /// Smallest eigenvalue of J.
    pub fn mass_min_eigenvalue(&self) -> f64 {
        self.mass_min_eig
    }

    /// `V D⁻¹`, mapping reduced coordinates back to coefficients.
    pub fn vdinv(&self) -> &DMatrix<f64> {
        &self.vdinv
    }
}
