//! Greedy construction of a rank-K symmetric separable basis by alternating
//! optimization in the SVD-reduced coordinates, and everything built on the
//! fitted basis (embedding, reconstruction, rank criteria).
//!
//! Coordinates: for coefficients `c` (length M) the reduced vector is
//! `c̃ = D Vᵀ c`, and `⟨Y − Ȳ, (Φc)(Φc)ᵀ⟩_F = c̃ᵀ G c̃` with `G = Uᵀ(Y − Ȳ)U`.

mod threshold;

pub use threshold::{auto_threshold, MAX_CLUSTERS};

use nalgebra::{DMatrix, DMatrixView, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BasisOperators;
use crate::linalg::{
    apply_sign_convention, leading_gevp, mode12_vectors, mode3_vector, truncate_top_n,
    Tensor3,
};

use std::f64::consts::PI;

/// Sparsity control on the coefficient vectors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sparsity {
    None,
    /// Keep this many largest-magnitude coefficients.
    Fixed(usize),
    /// Threshold chosen by one-dimensional clustering.
    Auto,
}

/// Scaling of the discrete inner product on grid pairs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightConvention {
    /// `(n1·n2)⁻¹`.
    #[default]
    GridCount,
    /// Each grid pair carries area `(8π/(n1+n2))²`.
    Area,
}

impl WeightConvention {
    pub fn weight(self, n1: usize, n2: usize) -> f64 {
        match self {
            WeightConvention::GridCount => 1.0 / (n1 as f64 * n2 as f64),
            WeightConvention::Area => (8.0 * PI / (n1 + n2) as f64).powi(2),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub k: usize,
    pub alpha1: f64,
    pub sparsity: Sparsity,
    pub inner_tol: f64,
    pub max_inner: usize,
    pub seed: u64,
    pub weight: WeightConvention,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            k: 1,
            alpha1: 0.0,
            sparsity: Sparsity::None,
            inner_tol: 1e-6,
            max_inner: 50,
            seed: 0,
            weight: WeightConvention::GridCount,
        }
    }
}

impl FitConfig {
    pub fn validate(&self, m: usize) -> Result<()> {
        if self.k < 1 {
            return Err(Error::arg("K must be at least 1"));
        }
        if self.k > m {
            return Err(Error::arg(format!("K = {} exceeds the basis dimension M = {m}", self.k)));
        }
        if !(self.alpha1 >= 0.0 && self.alpha1.is_finite()) {
            return Err(Error::arg("alpha1 must be a finite nonnegative number"));
        }
        if let Sparsity::Fixed(n) = self.sparsity {
            if n < 1 {
                return Err(Error::arg("fixed sparsity must keep at least one coefficient"));
            }
        }
        if !(self.inner_tol > 0.0) || self.max_inner < 1 {
            return Err(Error::arg("inner_tol must be positive and max_inner at least 1"));
        }
        Ok(())
    }
}

/// Per-component record of the inner loop.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentDiagnostics {
    pub iterations: usize,
    pub converged: bool,
    /// `½‖s‖² − α₁ cᵀQc` after each inner iteration.
    pub objective_trace: Vec<f64>,
    /// Sparsity threshold, when automatic.
    pub threshold: Option<f64>,
    /// Number of nonzero coefficients.
    pub support: usize,
    /// `‖G_k‖²_F` after deflating this component.
    pub residual_norm_sq: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReducedRankModel {
    /// M × K coefficients.
    pub c: DMatrix<f64>,
    /// N × K subject scores.
    pub s: DMatrix<f64>,
    /// Grid mean of the training data.
    pub ybar: DMatrix<f64>,
    pub config: FitConfig,
    /// Discrete inner-product weight actually used.
    pub weight: f64,
    pub diagnostics: Vec<ComponentDiagnostics>,
    /// `‖G_0‖²_F`.
    pub initial_norm_sq: f64,
    /// True when the residual vanished before K components.
    pub stopped_early: bool,
}

impl ReducedRankModel {
    pub fn k(&self) -> usize {
        self.c.ncols()
    }

    pub fn n_subjects(&self) -> usize {
        self.s.nrows()
    }

    /// Fraction of `‖G_0‖²` explained after each component.
    pub fn variance_explained_curve(&self) -> Vec<f64> {
        self.diagnostics
            .iter()
            .map(|d| (1.0 - d.residual_norm_sq / self.initial_norm_sq).clamp(0.0, 1.0))
            .collect()
    }
}

/// `Ȳ` and `G_i = Uᵀ(Y_i − Ȳ)U`.
pub fn transform_input(slices: &[DMatrix<f64>], u: &DMatrix<f64>) -> Result<(DMatrix<f64>, Tensor3)> {
    let first = slices.first().ok_or_else(|| Error::arg("no subjects supplied"))?;
    let n = first.nrows();
    if first.shape() != (n, n) || u.nrows() != n {
        return Err(Error::arg(format!(
            "connectivity matrices must be {}×{} to match the grid",
            u.nrows(),
            u.nrows()
        )));
    }
    if slices.iter().any(|y| y.shape() != (n, n)) {
        return Err(Error::arg("connectivity matrices differ in shape"));
    }
    let mut ybar = DMatrix::zeros(n, n);
    for y in slices {
        ybar += y;
    }
    ybar /= slices.len() as f64;
    let ut = u.transpose();
    let g: Vec<DMatrix<f64>> = slices
        .iter()
        .map(|y| {
            let g = &ut * (y - &ybar) * u;
            (&g + g.transpose()) * 0.5
        })
        .collect();
    Ok((ybar, Tensor3::from_slices(&g)?))
}

/// Starting values: `s⁰` from the mode-3 unfolding, `c⁰ = V D⁻¹ ã` with `ã`
/// from the mode-1 unfolding. Both carry the sign convention.
pub fn init_rank1(g: &Tensor3, ops: &BasisOperators) -> Result<(DVector<f64>, DVector<f64>)> {
    let [m, _, n] = g.dims();
    if g.norm_squared() == 0.0 {
        return Err(Error::Degenerate("residual tensor is zero".into()));
    }
    // Columns are vec(G_i): the Gram is ⟨G_i, G_j⟩.
    let stacked = DMatrixView::from_slice(g.as_slice(), m * m, n);
    let gram3 = stacked.transpose() * stacked;
    let mut s0 = leading_eigenvector(&gram3);
    apply_sign_convention(&mut s0);
    // [G_1 … G_N] side by side: W Wᵀ = Σ_i G_i G_iᵀ
    let wide = DMatrixView::from_slice(g.as_slice(), m, m * n);
    let gram1 = &wide * wide.transpose();
    let a = leading_eigenvector(&gram1);
    let mut c0 = ops.vdinv() * a;
    apply_sign_convention(&mut c0);
    Ok((c0, s0))
}

fn leading_eigenvector(sym: &DMatrix<f64>) -> DVector<f64> {
    let eig = sym.clone().symmetric_eigen();
    let mut best = 0;
    for i in 1..eig.eigenvalues.len() {
        if eig.eigenvalues[i] > eig.eigenvalues[best] {
            best = i;
        }
    }
    eig.eigenvectors.column(best).into_owned()
}

/// Reduced-coordinate projector `P = D Vᵀ C (CᵀJC)⁻¹ CᵀJ V D⁻¹`.
pub fn projector(c_prev: &DMatrix<f64>, ops: &BasisOperators) -> Result<DMatrix<f64>> {
    let m = ops.m();
    if c_prev.ncols() == 0 {
        return Ok(DMatrix::zeros(m, m));
    }
    let pi_c = coefficient_complement(c_prev, &ops.mass)?;
    // (I − P) D Vᵀ = D Vᵀ Π  ⇒  P = I − D Vᵀ Π V D⁻¹
    Ok(DMatrix::identity(m, m) - ops.dvt() * pi_c * ops.vdinv())
}

/// `Π = I − C (CᵀJC)⁻¹ CᵀJ`, the J-orthogonal projector onto the
/// complement of the previous components.
pub fn coefficient_complement(c_prev: &DMatrix<f64>, j: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let m = j.nrows();
    if c_prev.ncols() == 0 {
        return Ok(DMatrix::identity(m, m));
    }
    let jc = j * c_prev;
    let gram = c_prev.transpose() * &jc;
    let gram = (&gram + gram.transpose()) * 0.5;
    let diag_max = gram.diagonal().max();
    let eig_min = gram.clone().symmetric_eigen().eigenvalues.min();
    if !(eig_min > 1e-12 * diag_max) {
        return Err(Error::numeric(
            "previous components are linearly dependent (singular CᵀJC)",
        ));
    }
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::numeric("singular CᵀJC"))?;
    let sol = chol.solve(&jc.transpose());
    Ok(DMatrix::identity(m, m) - c_prev * sol)
}

/// Result of one coefficient update.
#[derive(Clone, Debug)]
pub struct CoefficientUpdate {
    pub c: DVector<f64>,
    /// Generalized eigenvalue of the update matrix.
    pub value: f64,
    /// Threshold applied, when automatic sparsity is used.
    pub threshold: Option<f64>,
}

/// Coefficient update: leading generalized eigenvector (w.r.t. J) of
/// `Πᵀ [V D (G ×₃ s) D Vᵀ − α₁ Q] Π`, optionally sparsified and rescaled to
/// `cᵀJc = 1`.
pub fn update_c(
    g: &Tensor3,
    s: &DVector<f64>,
    complement: &DMatrix<f64>,
    ops: &BasisOperators,
    alpha1: f64,
    sparsity: Sparsity,
    warm: Option<&DVector<f64>>,
) -> Result<CoefficientUpdate> {
    let gs = mode3_vector(g, s)?;
    let dvt = ops.dvt();
    let mut a0 = dvt.transpose() * gs * dvt;
    if alpha1 != 0.0 {
        a0 -= &ops.penalty * alpha1;
    }
    let a = complement.transpose() * a0 * complement;
    let a = (&a + a.transpose()) * 0.5;
    let j = &ops.mass;
    let constrained = complement != &DMatrix::<f64>::identity(j.nrows(), j.nrows());

    let mut sol = leading_gevp(&a, j, warm)?;
    let scale = a.norm().max(f64::MIN_POSITIVE);
    if constrained && sol.value <= 1e-12 * scale {
        // The span of the previous components carries eigenvalue zero; lift
        // the complement above it.
        let shift = 2.0 * scale / ops.mass_min_eigenvalue();
        let lifted = &a + complement.transpose() * j * complement * shift;
        sol = leading_gevp(&lifted, j, warm)?;
        sol.value -= shift;
    }
    let mut c = complement * &sol.vector;
    normalize_j(&mut c, j)?;
    apply_sign_convention(&mut c);

    let mut threshold = None;
    match sparsity {
        Sparsity::None => {}
        Sparsity::Fixed(n) => {
            c = truncate_top_n(&c, n);
            normalize_j(&mut c, j)?;
        }
        Sparsity::Auto => {
            let (tau, sparse) = auto_threshold(&c);
            threshold = Some(tau);
            c = sparse;
            normalize_j(&mut c, j)?;
        }
    }
    Ok(CoefficientUpdate {
        c,
        value: sol.value,
        threshold,
    })
}

fn normalize_j(c: &mut DVector<f64>, j: &DMatrix<f64>) -> Result<()> {
    let norm = (c.transpose() * j * &*c)[0].sqrt();
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(Error::numeric("coefficient vector has zero J-norm"));
    }
    *c /= norm;
    Ok(())
}

/// `s_i = c̃ᵀ G_i c̃` with `c̃ = D Vᵀ c`.
pub fn update_s(g: &Tensor3, c: &DVector<f64>, ops: &BasisOperators) -> Result<DVector<f64>> {
    let ct = ops.dvt() * c;
    mode12_vectors(g, &ct, &ct)
}

/// Subtract `c̃ ⊗ c̃ ⊗ s / ‖c̃‖⁴`, the projection of every slice onto `c̃c̃ᵀ`.
fn deflate(g: &mut Tensor3, ct: &DVector<f64>, s: &DVector<f64>) {
    let norm4 = ct.norm_squared().powi(2);
    let outer = ct * ct.transpose();
    for i in 0..g.dims()[2] {
        let mut slice = g.slice_mut(i);
        slice -= &outer * (s[i] / norm4);
    }
}

/// Fit from raw connectivity matrices on the operator grid.
pub fn fit(slices: &[DMatrix<f64>], ops: &BasisOperators, config: &FitConfig) -> Result<ReducedRankModel> {
    let (ybar, g0) = transform_input(slices, &ops.u)?;
    fit_transformed(ybar, g0, ops, config)
}

/// Fit from an already transformed tensor.
pub fn fit_transformed(
    ybar: DMatrix<f64>,
    g0: Tensor3,
    ops: &BasisOperators,
    config: &FitConfig,
) -> Result<ReducedRankModel> {
    let m = ops.m();
    config.validate(m)?;
    let [gm, gm2, n] = g0.dims();
    if gm != m || gm2 != m {
        return Err(Error::arg(format!(
            "transformed tensor is {gm}×{gm2} but the basis has M = {m}"
        )));
    }
    if n < 2 {
        return Err(Error::arg("at least two subjects are required"));
    }
    let weight = config.weight.weight(ops.grid.n1(), ops.grid.n2());
    let initial_norm_sq = g0.norm_squared();
    if initial_norm_sq == 0.0 {
        return Err(Error::Degenerate("centered data are identically zero".into()));
    }

    let mut g = g0;
    let mut cols: Vec<DVector<f64>> = Vec::new();
    let mut scores: Vec<DVector<f64>> = Vec::new();
    let mut diagnostics = Vec::new();
    let mut stopped_early = false;

    for _k in 0..config.k {
        if g.norm_squared() <= 1e-24 * initial_norm_sq {
            stopped_early = true;
            break;
        }
        let c_prev = if cols.is_empty() { DMatrix::zeros(m, 0) } else { DMatrix::from_columns(&cols) };
        let complement = coefficient_complement(&c_prev, &ops.mass)?;
        let (c0, mut s) = init_rank1(&g, ops)?;
        orient_scores(&g, &mut s)?;

        let mut c = c0;
        let mut trace = Vec::new();
        let mut converged = false;
        let mut iterations = 0;
        for _t in 0..config.max_inner {
            iterations += 1;
            let upd = update_c(&g, &s, &complement, ops, config.alpha1, Sparsity::None, Some(&c))?;
            c = upd.c;
            s = update_s(&g, &c, ops)?;
            let obj = objective(&s, &c, ops, config.alpha1);
            let done = trace
                .last()
                .is_some_and(|&prev: &f64| (obj - prev).abs() <= config.inner_tol * prev.abs().max(f64::MIN_POSITIVE));
            trace.push(obj);
            if done {
                converged = true;
                break;
            }
        }

        let mut threshold = None;
        if config.sparsity != Sparsity::None {
            let j = &ops.mass;
            match config.sparsity {
                Sparsity::Fixed(keep) => c = truncate_top_n(&c, keep),
                Sparsity::Auto => {
                    let (tau, sparse) = auto_threshold(&c);
                    threshold = Some(tau);
                    c = sparse;
                }
                Sparsity::None => unreachable!(),
            }
            normalize_j(&mut c, j)?;
            s = update_s(&g, &c, ops)?;
        }

        let ct = ops.dvt() * &c;
        deflate(&mut g, &ct, &s);
        let norm_ct = ct.norm_squared();
        scores.push(&s * (weight.sqrt() / norm_ct));
        diagnostics.push(ComponentDiagnostics {
            iterations,
            converged,
            objective_trace: trace,
            threshold,
            support: c.iter().filter(|x| **x != 0.0).count(),
            residual_norm_sq: g.norm_squared(),
        });
        cols.push(c);
    }

    let k = cols.len();
    let c = if k == 0 { DMatrix::zeros(m, 0) } else { DMatrix::from_columns(&cols) };
    let s = if k == 0 { DMatrix::zeros(n, 0) } else { DMatrix::from_columns(&scores) };
    Ok(ReducedRankModel {
        c,
        s,
        ybar,
        config: config.clone(),
        weight,
        diagnostics,
        initial_norm_sq,
        stopped_early,
    })
}

/// `½ Σ s_i² − α₁ cᵀQc`, which the alternating updates never decrease.
pub fn objective(s: &DVector<f64>, c: &DVector<f64>, ops: &BasisOperators, alpha1: f64) -> f64 {
    let pen = if alpha1 != 0.0 { alpha1 * (c.transpose() * &ops.penalty * c)[0] } else { 0.0 };
    0.5 * s.norm_squared() - pen
}

/// The objective depends on `s` only through `G ×₃ s`, whose sign the
/// singular-vector initialization cannot fix; pick the orientation whose
/// dominant eigenvalue is positive.
fn orient_scores(g: &Tensor3, s: &mut DVector<f64>) -> Result<()> {
    let gs = mode3_vector(g, s)?;
    let eig = gs.symmetric_eigen().eigenvalues;
    if eig.len() > 0 && eig.min().abs() > eig.max().abs() {
        s.neg_mut();
    }
    Ok(())
}

/// Sequential scores of one transformed, centered matrix `G = Uᵀ(Y − Ȳ)U`.
/// Returns the scores and the residual `G_K`.
pub fn embed_transformed(
    g: &DMatrix<f64>,
    model: &ReducedRankModel,
    ops: &BasisOperators,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let (s, r, _) = embed_path(g, model, ops)?;
    Ok((s, r))
}

/// `‖G_k‖²` after each of the first `k = 1..=K` components.
pub fn embedding_residual_path(g: &DMatrix<f64>, model: &ReducedRankModel, ops: &BasisOperators) -> Result<Vec<f64>> {
    Ok(embed_path(g, model, ops)?.2)
}

fn embed_path(
    g: &DMatrix<f64>,
    model: &ReducedRankModel,
    ops: &BasisOperators,
) -> Result<(DVector<f64>, DMatrix<f64>, Vec<f64>)> {
    let m = ops.m();
    if g.shape() != (m, m) || model.c.nrows() != m {
        return Err(Error::arg("transformed matrix does not match the model basis"));
    }
    let mut r = g.clone();
    let mut s = DVector::zeros(model.k());
    let mut path = Vec::with_capacity(model.k());
    for k in 0..model.k() {
        let ct = ops.dvt() * model.c.column(k);
        let raw = (ct.transpose() * &r * &ct)[0];
        let norm_ct = ct.norm_squared();
        s[k] = raw * model.weight.sqrt() / norm_ct;
        r -= &ct * ct.transpose() * (raw / (norm_ct * norm_ct));
        path.push(r.norm_squared());
    }
    Ok((s, r, path))
}

/// Scores of a new connectivity matrix on the model grid.
pub fn embed(y: &DMatrix<f64>, model: &ReducedRankModel, ops: &BasisOperators) -> Result<DVector<f64>> {
    let n = ops.n();
    if y.shape() != (n, n) || model.ybar.shape() != (n, n) {
        return Err(Error::arg(format!(
            "connectivity matrix is {}×{} but the model grid has {n} points",
            y.nrows(),
            y.ncols()
        )));
    }
    let g = ops.u.transpose() * (y - &model.ybar) * &ops.u;
    let g = (&g + g.transpose()) * 0.5;
    Ok(embed_transformed(&g, model, ops)?.0)
}

/// Grid element `e_k = ξ_k ξ_kᵀ / ‖ξ_k ξ_kᵀ‖_w` of component `k`.
pub fn component_element(model: &ReducedRankModel, ops: &BasisOperators, k: usize) -> DMatrix<f64> {
    let xi = &ops.phi * model.c.column(k);
    let norm = xi.norm_squared() * model.weight.sqrt();
    &xi * xi.transpose() / norm
}

/// `Ȳ + Σ_k s_k e_k`.
pub fn reconstruct(model: &ReducedRankModel, ops: &BasisOperators, scores: &DVector<f64>) -> Result<DMatrix<f64>> {
    if scores.len() != model.k() {
        return Err(Error::arg(format!(
            "expected {} scores, got {}",
            model.k(),
            scores.len()
        )));
    }
    let mut y = model.ybar.clone();
    for k in 0..model.k() {
        if scores[k] != 0.0 {
            y += component_element(model, ops, k) * scores[k];
        }
    }
    Ok(y)
}

/// Reconstruction of training subject `i`.
pub fn reconstruct_subject(model: &ReducedRankModel, ops: &BasisOperators, i: usize) -> Result<DMatrix<f64>> {
    if i >= model.n_subjects() {
        return Err(Error::arg(format!(
            "subject index {i} out of range for {} subjects",
            model.n_subjects()
        )));
    }
    reconstruct(model, ops, &model.s.row(i).transpose())
}

/// `1 − ‖G_K‖²/‖G_0‖²`, clamped to `[0, 1]`.
pub fn variance_explained(g0: &Tensor3, gk: &Tensor3) -> Result<f64> {
    if g0.dims() != gk.dims() {
        return Err(Error::arg("tensors differ in shape"));
    }
    let base = g0.norm_squared();
    if base == 0.0 {
        return Err(Error::Degenerate("initial tensor has zero norm".into()));
    }
    Ok((1.0 - gk.norm_squared() / base).clamp(0.0, 1.0))
}

/// `‖𝒴 ×₁ Uᵀ ×₂ Uᵀ‖² / ‖𝒴‖²` for a candidate basis.
pub fn marginal_rank_criterion(y: &Tensor3, u: &DMatrix<f64>) -> Result<f64> {
    let [n, n2, count] = y.dims();
    if n != n2 || u.nrows() != n {
        return Err(Error::arg("basis does not match the tensor grid"));
    }
    let total = y.norm_squared();
    if total == 0.0 {
        return Err(Error::Degenerate("tensor has zero norm".into()));
    }
    let ut = u.transpose();
    let mut kept = 0.0;
    for i in 0..count {
        kept += (&ut * y.slice(i) * u).norm_squared();
    }
    Ok((kept / total).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests;
