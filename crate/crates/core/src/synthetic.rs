//! Generative models for the simulation studies and doubly stochastic
//! sampling of endpoint pairs from an intensity on Ω×Ω.
//!
//! Every draw comes from a keyed stream (see [`crate::rng`]), so a dataset is
//! a pure function of its configuration and seed.

use nalgebra::{DMatrix, DVector, Vector3};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::{Bernoulli, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    fibonacci_sphere, spherical_delaunay, BasisOperators, GridOmega, SphereId, SpherePoint,
    SphericalTriangulation, SplineBasisSystem, UnitVector3,
};
use crate::kde::{symmetrized_kernel, HeatKernel, HeatKernelParams, PointPattern};
use crate::linalg::Tensor3;
use crate::rng::{domain, stream};

/// Basis on Fibonacci vertices (`basis_vertices` per sphere) and an
/// icosphere grid on both spheres.
pub fn build_operators(basis_vertices: usize, grid_subdivision: u32) -> Result<BasisOperators> {
    let tri = spherical_delaunay(fibonacci_sphere(basis_vertices))?;
    let basis = SplineBasisSystem::new(tri.clone(), tri)?;
    BasisOperators::build(basis, GridOmega::icosphere(grid_subdivision)?)
}

/// Rank-`K_true` population of symmetric separable fields.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Sim61Config {
    pub k_true: usize,
    /// Standard deviation of the spline coefficients.
    pub coef_sd: f64,
    /// `Var(S_k) = k^(-score_decay)`.
    pub score_decay: f64,
    /// Basis vertices per sphere.
    pub basis_vertices: usize,
    pub grid_subdivision: u32,
    pub n: usize,
    pub seed: u64,
}

impl Default for Sim61Config {
    fn default() -> Self {
        Sim61Config {
            k_true: 20,
            coef_sd: 0.2,
            score_decay: 1.0,
            basis_vertices: 36,
            grid_subdivision: 2,
            n: 50,
            seed: 0,
        }
    }
}

impl Sim61Config {
    pub fn validate(&self) -> Result<()> {
        if self.k_true < 1 {
            return Err(Error::arg("k_true must be at least 1"));
        }
        if !(self.coef_sd > 0.0 && self.coef_sd.is_finite()) {
            return Err(Error::arg("coef_sd must be positive"));
        }
        if !self.score_decay.is_finite() {
            return Err(Error::arg("score_decay must be finite"));
        }
        if self.basis_vertices < 4 {
            return Err(Error::arg("basis_vertices must be at least 4"));
        }
        if self.n < 1 {
            return Err(Error::arg("n must be at least 1"));
        }
        Ok(())
    }
}

/// Two-group model: a localized group effect on top of a sparse common field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Sim63Config {
    /// Difference of the group means of the effect size.
    pub v0: f64,
    /// Within-group standard deviation of the effect size.
    pub eta: f64,
    pub bump_bandwidth: f64,
    /// Geodesic radius (radians) of the bump support on each coordinate.
    pub bump_radius: f64,
    /// Probability that a common-field coefficient is active.
    pub mask_prob: f64,
    pub k_true: usize,
    pub coef_sd: f64,
    pub score_decay: f64,
    pub basis_vertices: usize,
    pub grid_subdivision: u32,
    pub group_sizes: [usize; 2],
    pub seed: u64,
}

impl Default for Sim63Config {
    fn default() -> Self {
        Sim63Config {
            v0: 0.025,
            eta: 0.1,
            bump_bandwidth: 0.4,
            bump_radius: 0.1,
            mask_prob: 0.1,
            k_true: 20,
            coef_sd: 0.2,
            score_decay: 1.0,
            basis_vertices: 36,
            grid_subdivision: 2,
            group_sizes: [50, 50],
            seed: 0,
        }
    }
}

impl Sim63Config {
    pub fn validate(&self) -> Result<()> {
        if !(self.v0 >= 0.0 && self.v0.is_finite()) {
            return Err(Error::arg("v0 must be nonnegative"));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::arg("eta must be nonnegative"));
        }
        if !(self.bump_bandwidth > 0.0) {
            return Err(Error::arg("bump_bandwidth must be positive"));
        }
        if !(self.bump_radius > 0.0) {
            return Err(Error::arg("bump_radius must be positive"));
        }
        if !(0.0..=1.0).contains(&self.mask_prob) {
            return Err(Error::arg("mask_prob must lie in [0, 1]"));
        }
        if self.k_true < 1 {
            return Err(Error::arg("k_true must be at least 1"));
        }
        if !(self.coef_sd > 0.0) {
            return Err(Error::arg("coef_sd must be positive"));
        }
        if self.basis_vertices < 4 {
            return Err(Error::arg("basis_vertices must be at least 4"));
        }
        if self.group_sizes.iter().any(|&n| n < 1) {
            return Err(Error::arg("each group needs at least one subject"));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.group_sizes[0] + self.group_sizes[1]
    }
}

/// `Σ_k s_ik ξ_k ⊗ ξ_k` for every subject, with `ξ_k = φᵀc_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct LowRankField {
    /// M × K coefficients.
    pub c: DMatrix<f64>,
    /// N × K scores.
    pub s: DMatrix<f64>,
}

impl LowRankField {
    /// Grid evaluations, one n × n matrix per subject.
    pub fn grid_slices(&self, ops: &BasisOperators) -> Vec<DMatrix<f64>> {
        let xi = &ops.phi * &self.c;
        (0..self.s.nrows())
            .map(|i| separable_sum(&xi, self.s.row(i).transpose().as_slice()))
            .collect()
    }

    /// Coefficient-space slices `DVᵀC diag(s_i − center) CᵀVD`.
    pub fn transformed(&self, ops: &BasisOperators, center: &DVector<f64>) -> Tensor3 {
        let ct = ops.dvt() * &self.c;
        let slices: Vec<DMatrix<f64>> = (0..self.s.nrows())
            .map(|i| {
                let w: Vec<f64> = (0..self.s.ncols()).map(|k| self.s[(i, k)] - center[k]).collect();
                separable_sum(&ct, &w)
            })
            .collect();
        Tensor3::from_slices(&slices).expect("slices share one shape")
    }

    /// Column means of the scores.
    pub fn mean_scores(&self) -> DVector<f64> {
        self.s.row_mean().transpose()
    }
}

/// Exactly symmetric `A diag(w) Aᵀ`.
fn separable_sum(a: &DMatrix<f64>, w: &[f64]) -> DMatrix<f64> {
    let mut aw = a.clone();
    for (k, &wk) in w.iter().enumerate() {
        aw.column_mut(k).scale_mut(wk);
    }
    let y = aw * a.transpose();
    (&y + y.transpose()) * 0.5
}

/// `c_k ~ N(0, sd²I)`, one stream per component.
pub fn draw_coefficients(seed: u64, m: usize, k_true: usize, sd: f64) -> DMatrix<f64> {
    let mut c = DMatrix::zeros(m, k_true);
    for k in 0..k_true {
        let mut rng = stream(seed, &[domain::COEFFICIENTS, k as u64]);
        for r in 0..m {
            let z: f64 = rng.sample(StandardNormal);
            c[(r, k)] = sd * z;
        }
    }
    c
}

/// Bernoulli(`p`) activity pattern of the coefficients of component `k`.
pub fn draw_mask(seed: u64, k: usize, m: usize, p: f64) -> Result<Vec<bool>> {
    let dist = Bernoulli::new(p).map_err(|e| Error::arg(format!("mask probability: {e}")))?;
    let mut rng = stream(seed, &[domain::MASK, k as u64]);
    Ok((0..m).map(|_| dist.sample(&mut rng)).collect())
}

/// Scores `S_ik ~ N(0, k^-decay)` (k counted from 1), one stream per subject
/// in the given stream domain.
pub fn draw_scores(seed: u64, stream_domain: u64, n: usize, k_true: usize, decay: f64) -> DMatrix<f64> {
    let mut s = DMatrix::zeros(n, k_true);
    for i in 0..n {
        let mut rng = stream(seed, &[stream_domain, i as u64]);
        for k in 0..k_true {
            let z: f64 = rng.sample(StandardNormal);
            s[(i, k)] = z * ((k + 1) as f64).powf(-decay / 2.0);
        }
    }
    s
}

/// Coefficients and training scores of the rank-`K_true` model.
pub fn rank1_field(cfg: &Sim61Config, m: usize) -> Result<LowRankField> {
    cfg.validate()?;
    Ok(LowRankField {
        c: draw_coefficients(cfg.seed, m, cfg.k_true, cfg.coef_sd),
        s: draw_scores(cfg.seed, domain::SUBJECT, cfg.n, cfg.k_true, cfg.score_decay),
    })
}

/// Independent subjects from the same population as [`rank1_field`].
pub fn rank1_test_field(cfg: &Sim61Config, m: usize, n_test: usize) -> Result<LowRankField> {
    cfg.validate()?;
    Ok(LowRankField {
        c: draw_coefficients(cfg.seed, m, cfg.k_true, cfg.coef_sd),
        s: draw_scores(cfg.seed, domain::TEST_SUBJECT, n_test, cfg.k_true, cfg.score_decay),
    })
}

/// Grid-pair location of the group effect.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BumpCenter {
    /// Grid indices of `(ω1*, ω2*)`.
    pub index: [usize; 2],
    pub points: [SpherePoint; 2],
}

/// Everything a simulation produces.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticDataset {
    pub y: Vec<DMatrix<f64>>,
    pub c_true: DMatrix<f64>,
    pub s_true: DMatrix<f64>,
    /// Group labels in {1, 2}; empty for single-population data.
    pub labels: Vec<u8>,
    /// Per-subject effect sizes `S_0i` (two-group data only).
    pub group_effect: Option<DVector<f64>>,
    pub center: Option<BumpCenter>,
}

fn check_basis(ops: &BasisOperators, basis_vertices: usize, grid_subdivision: u32) -> Result<()> {
    let expect_n = 10 * 4usize.pow(grid_subdivision) + 2;
    if ops.basis.m1() != basis_vertices || ops.basis.m2() != basis_vertices {
        return Err(Error::arg(format!(
            "operators have M1 = {}, M2 = {} but the configuration asks for {basis_vertices}",
            ops.basis.m1(),
            ops.basis.m2()
        )));
    }
    if ops.grid.n1() != expect_n || ops.grid.n2() != expect_n {
        return Err(Error::arg(format!(
            "operators have a {}+{} grid but the configuration asks for 2×{expect_n}",
            ops.grid.n1(),
            ops.grid.n2()
        )));
    }
    Ok(())
}

/// Grid evaluations of the rank-`K_true` population.
pub fn gen_rank1_population(cfg: &Sim61Config, ops: &BasisOperators) -> Result<SyntheticDataset> {
    check_basis(ops, cfg.basis_vertices, cfg.grid_subdivision)?;
    let field = rank1_field(cfg, ops.m())?;
    Ok(SyntheticDataset {
        y: field.grid_slices(ops),
        c_true: field.c,
        s_true: field.s,
        labels: Vec::new(),
        group_effect: None,
        center: None,
    })
}

/// Two-group population before evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoGroupField {
    pub common: LowRankField,
    /// Per-subject effect sizes.
    pub s0: DVector<f64>,
    pub labels: Vec<u8>,
    /// Unit-effect bump on the grid.
    pub bump: DMatrix<f64>,
    pub center: BumpCenter,
}

impl TwoGroupField {
    pub fn grid_slices(&self, ops: &BasisOperators) -> Vec<DMatrix<f64>> {
        self.common
            .grid_slices(ops)
            .into_iter()
            .enumerate()
            .map(|(i, y)| y + &self.bump * self.s0[i])
            .collect()
    }

    /// Centered coefficient-space slices; equal to `transform_input` of the
    /// grid slices.
    pub fn transformed(&self, ops: &BasisOperators) -> Tensor3 {
        let mut g = self.common.transformed(ops, &self.common.mean_scores());
        let b = ops.u.transpose() * &self.bump * &ops.u;
        let b = (&b + b.transpose()) * 0.5;
        let mean = self.s0.mean();
        for i in 0..self.s0.len() {
            let mut slice = g.slice_mut(i);
            slice += &b * (self.s0[i] - mean);
        }
        g
    }
}

/// Symmetrized heat-kernel bump restricted to grid pairs within `radius` of
/// the center on both coordinates (in either order).
pub fn bump_matrix(grid: &GridOmega, center: &BumpCenter, bandwidth: f64, radius: f64) -> Result<DMatrix<f64>> {
    let kernel = HeatKernel::new(HeatKernelParams::new(bandwidth)?);
    let pts = grid.points();
    let near = |p: &SpherePoint, c: &SpherePoint| p.sphere == c.sphere && p.v.geodesic_distance(&c.v) < radius;
    let [a, b] = center.points;
    let n = grid.len();
    let mut out = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let inside = (near(&pts[i], &a) && near(&pts[j], &b)) || (near(&pts[i], &b) && near(&pts[j], &a));
            if inside {
                out[(i, j)] = symmetrized_kernel(&pts[i], &pts[j], &a, &b, &kernel);
            }
        }
    }
    Ok(out)
}

/// Draw `(ω1*, ω2*)` uniformly among grid points.
pub fn draw_center(grid: &GridOmega, seed: u64) -> BumpCenter {
    let mut rng = stream(seed, &[domain::CENTER]);
    let index = [rng.random_range(0..grid.len()), rng.random_range(0..grid.len())];
    BumpCenter {
        index,
        points: index.map(|i| grid.points()[i]),
    }
}

/// Labels (group 1 first) and effect sizes `S_0i ~ N(∓v0/2, η²)`.
pub fn draw_group_effects(cfg: &Sim63Config) -> (Vec<u8>, DVector<f64>) {
    let n = cfg.n();
    let labels: Vec<u8> = (0..n).map(|i| if i < cfg.group_sizes[0] { 1 } else { 2 }).collect();
    let s0 = DVector::from_fn(n, |i, _| {
        let mean = if labels[i] == 1 { -cfg.v0 / 2.0 } else { cfg.v0 / 2.0 };
        let z: f64 = stream(cfg.seed, &[domain::GROUP_EFFECT, i as u64]).sample(StandardNormal);
        mean + cfg.eta * z
    });
    (labels, s0)
}

/// Draw the two-group population without evaluating it.
pub fn two_group_field(cfg: &Sim63Config, ops: &BasisOperators) -> Result<TwoGroupField> {
    cfg.validate()?;
    check_basis(ops, cfg.basis_vertices, cfg.grid_subdivision)?;
    let m = ops.m();
    let mut c = draw_coefficients(cfg.seed, m, cfg.k_true, cfg.coef_sd);
    for k in 0..cfg.k_true {
        let mask = draw_mask(cfg.seed, k, m, cfg.mask_prob)?;
        for (r, on) in mask.into_iter().enumerate() {
            if !on {
                c[(r, k)] = 0.0;
            }
        }
    }
    let s = draw_scores(cfg.seed, domain::SUBJECT, cfg.n(), cfg.k_true, cfg.score_decay);
    let center = draw_center(&ops.grid, cfg.seed);
    let bump = bump_matrix(&ops.grid, &center, cfg.bump_bandwidth, cfg.bump_radius)?;
    let (labels, s0) = draw_group_effects(cfg);
    Ok(TwoGroupField {
        common: LowRankField { c, s },
        s0,
        labels,
        bump,
        center,
    })
}

/// Grid evaluations of the two-group population.
pub fn gen_two_group(cfg: &Sim63Config, ops: &BasisOperators) -> Result<SyntheticDataset> {
    let field = two_group_field(cfg, ops)?;
    Ok(SyntheticDataset {
        y: field.grid_slices(ops),
        c_true: field.common.c.clone(),
        s_true: field.common.s.clone(),
        labels: field.labels.clone(),
        group_effect: Some(field.s0.clone()),
        center: Some(field.center),
    })
}

/// How many endpoint pairs to draw.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PatternSize {
    Fixed(usize),
    Poisson(f64),
}

/// Triangles of the grid on both spheres, used as sampling cells.
#[derive(Clone, Debug)]
pub struct GridCells {
    meshes: [SphericalTriangulation; 2],
    offsets: [usize; 2],
    /// (sphere, face) for every cell, sphere 1 first.
    cells: Vec<(SphereId, usize)>,
}

impl GridCells {
    pub fn new(grid: &GridOmega) -> Result<Self> {
        let mesh = |s| spherical_delaunay(grid.block_vectors(s));
        let meshes = [mesh(SphereId::One)?, mesh(SphereId::Two)?];
        let cells = SphereId::BOTH
            .iter()
            .flat_map(|&s| (0..meshes[s.index()].faces().len()).map(move |f| (s, f)))
            .collect();
        Ok(GridCells {
            meshes,
            offsets: [grid.block_offset(SphereId::One), grid.block_offset(SphereId::Two)],
            cells,
        })
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn mesh(&self, sphere: SphereId) -> &SphericalTriangulation {
        &self.meshes[sphere.index()]
    }

    /// Cell index of the face on `sphere`.
    pub fn cell_index(&self, sphere: SphereId, face: usize) -> usize {
        match sphere {
            SphereId::One => face,
            SphereId::Two => self.meshes[0].faces().len() + face,
        }
    }

    fn corners(&self, cell: usize) -> [usize; 3] {
        let (s, f) = self.cells[cell];
        self.meshes[s.index()].faces()[f].map(|v| v + self.offsets[s.index()])
    }

    fn area(&self, cell: usize) -> f64 {
        let (s, f) = self.cells[cell];
        self.meshes[s.index()].face_area(f)
    }

    /// Probabilities of the cell pairs `(a, b)` (row-major, `a·len + b`):
    /// area product times the mean clamped density over the corner pairs.
    pub fn pair_probabilities(&self, density: &DMatrix<f64>) -> Result<Vec<f64>> {
        let nc = self.len();
        let mut w = vec![0.0; nc * nc];
        for a in 0..nc {
            let ca = self.corners(a);
            let aa = self.area(a);
            for b in 0..nc {
                let cb = self.corners(b);
                let mut mean = 0.0;
                for &i in &ca {
                    for &j in &cb {
                        mean += density[(i, j)].max(0.0);
                    }
                }
                w[a * nc + b] = aa * self.area(b) * mean / 9.0;
            }
        }
        let total: f64 = w.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::Degenerate("density has no positive mass".into()));
        }
        w.iter_mut().for_each(|x| *x /= total);
        Ok(w)
    }

    /// Uniform point in the spherical triangle of `cell`.
    fn uniform_point<R: Rng>(&self, cell: usize, rng: &mut R) -> SpherePoint {
        let (s, f) = self.cells[cell];
        let [a, b, c] = self.meshes[s.index()].face_corners(f);
        let normal = (b - a).cross(&(c - a)).normalize();
        let h = normal.dot(&a).abs();
        loop {
            let (mut u, mut v): (f64, f64) = (rng.random(), rng.random());
            if u + v > 1.0 {
                u = 1.0 - u;
                v = 1.0 - v;
            }
            let x: Vector3<f64> = a + (b - a) * u + (c - a) * v;
            let r = x.norm();
            if rng.random::<f64>() <= (h / r).powi(3) {
                return SpherePoint::new(s, UnitVector3::from_vector(x / r).expect("nonzero"));
            }
        }
    }
}

/// Draw endpoint pairs from the density `F` given at grid points: the cell
/// pair is chosen with probability proportional to area times density, then
/// each endpoint is placed uniformly inside its triangle.
pub fn sample_point_pattern(
    density: &DMatrix<f64>,
    cells: &GridCells,
    size: PatternSize,
    subject_id: u64,
    seed: u64,
) -> Result<PointPattern> {
    let n = cells.offsets[1] + cells.meshes[1].num_vertices();
    if density.nrows() != n || density.ncols() != n {
        return Err(Error::arg(format!(
            "density is {}×{} but the grid has {n} points",
            density.nrows(),
            density.ncols()
        )));
    }
    let probs = cells.pair_probabilities(density)?;
    let mut rng = stream(seed, &[domain::PATTERN, subject_id]);
    let q = match size {
        PatternSize::Fixed(q) => q,
        PatternSize::Poisson(lambda) => {
            if lambda == 0.0 {
                0
            } else {
                let dist = Poisson::new(lambda).map_err(|e| Error::arg(format!("Poisson mean: {e}")))?;
                dist.sample(&mut rng) as usize
            }
        }
    };
    let index = WeightedIndex::new(&probs).map_err(|e| Error::numeric(format!("cell weights: {e}")))?;
    let nc = cells.len();
    let pairs = (0..q)
        .map(|_| {
            let pair = index.sample(&mut rng);
            let p1 = cells.uniform_point(pair / nc, &mut rng);
            let p2 = cells.uniform_point(pair % nc, &mut rng);
            (p1, p2)
        })
        .collect();
    Ok(PointPattern::new(subject_id, pairs))
}
