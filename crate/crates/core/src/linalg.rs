//! Dense 3-tensor kernels and the generalized eigen-solver used by the
//! alternating optimization.

use nalgebra::{DMatrix, DMatrixView, DMatrixViewMut, DVector};

use crate::error::{Error, Result};

/// Dense 3-tensor stored as `n3` column-major `n1 × n2` slices.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor3 {
    dims: [usize; 3],
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(dims: [usize; 3]) -> Self {
        Tensor3 {
            dims,
            data: vec![0.0; dims[0] * dims[1] * dims[2]],
        }
    }

    /// Wrap raw storage; `data[i + n1*j + n1*n2*k]` is entry `(i, j, k)`.
    pub fn from_vec(dims: [usize; 3], data: Vec<f64>) -> Result<Self> {
        let len = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::arg("tensor dimensions overflow"))?;
        if len != data.len() {
            return Err(Error::arg(format!(
                "tensor of dims {dims:?} needs {len} entries, got {}",
                data.len()
            )));
        }
        Ok(Tensor3 { dims, data })
    }

    /// Stack equally shaped matrices along mode 3.
    pub fn from_slices(slices: &[DMatrix<f64>]) -> Result<Self> {
        let first = slices
            .first()
            .ok_or_else(|| Error::arg("cannot stack an empty list of slices"))?;
        let (r, c) = first.shape();
        let mut data = Vec::with_capacity(r * c * slices.len());
        for s in slices {
            if s.shape() != (r, c) {
                return Err(Error::arg("slices differ in shape"));
            }
            data.extend_from_slice(s.as_slice());
        }
        Ok(Tensor3 {
            dims: [r, c, slices.len()],
            data,
        })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        let [n1, n2, _] = self.dims;
        self.data[i + n1 * j + n1 * n2 * k]
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, value: f64) {
        let [n1, n2, _] = self.dims;
        self.data[i + n1 * j + n1 * n2 * k] = value;
    }

    pub fn slice(&self, k: usize) -> DMatrixView<'_, f64> {
        let [n1, n2, _] = self.dims;
        DMatrixView::from_slice(&self.data[n1 * n2 * k..n1 * n2 * (k + 1)], n1, n2)
    }

    pub fn slice_mut(&mut self, k: usize) -> DMatrixViewMut<'_, f64> {
        let [n1, n2, _] = self.dims;
        DMatrixViewMut::from_slice(&mut self.data[n1 * n2 * k..n1 * n2 * (k + 1)], n1, n2)
    }

    pub fn slices(&self) -> Vec<DMatrix<f64>> {
        (0..self.dims[2]).map(|k| self.slice(k).into_owned()).collect()
    }

    pub fn norm_squared(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_squared().sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        self.data.iter_mut().for_each(|x| *x *= factor);
    }

    /// Largest asymmetry `|T(i,j,k) − T(j,i,k)|` over all slices.
    pub fn max_asymmetry(&self) -> f64 {
        let [n1, n2, n3] = self.dims;
        if n1 != n2 {
            return f64::INFINITY;
        }
        let mut worst = 0.0f64;
        for k in 0..n3 {
            for j in 0..n2 {
                for i in 0..j {
                    worst = worst.max((self.get(i, j, k) - self.get(j, i, k)).abs());
                }
            }
        }
        worst
    }
}

fn check_mode(mode: usize) -> Result<()> {
    if (1..=3).contains(&mode) {
        Ok(())
    } else {
        Err(Error::arg(format!("mode must be 1, 2 or 3, got {mode}")))
    }
}

/// Mode-`mode` product `T ×_mode A` with `A` of shape `p × n_mode`.
pub fn mode_multiply(t: &Tensor3, a: &DMatrix<f64>, mode: usize) -> Result<Tensor3> {
    check_mode(mode)?;
    let dims = t.dims();
    let extent = dims[mode - 1];
    if a.ncols() != extent {
        return Err(Error::arg(format!(
            "matrix has {} columns but the tensor has extent {extent} along mode {mode}",
            a.ncols()
        )));
    }
    let mut out_dims = dims;
    out_dims[mode - 1] = a.nrows();
    match mode {
        1 => {
            let slices: Vec<DMatrix<f64>> = (0..dims[2]).map(|k| a * t.slice(k)).collect();
            if slices.is_empty() {
                return Ok(Tensor3::zeros(out_dims));
            }
            Tensor3::from_slices(&slices)
        }
        2 => {
            let at = a.transpose();
            let slices: Vec<DMatrix<f64>> = (0..dims[2]).map(|k| t.slice(k) * &at).collect();
            if slices.is_empty() {
                return Ok(Tensor3::zeros(out_dims));
            }
            Tensor3::from_slices(&slices)
        }
        _ => {
            let unfolded = matricize(t, 3)?;
            fold(&(a * unfolded), 3, out_dims)
        }
    }
}

/// `Σ_k s_k T(:, :, k)`.
pub fn mode3_vector(t: &Tensor3, s: &DVector<f64>) -> Result<DMatrix<f64>> {
    let [n1, n2, n3] = t.dims();
    if s.len() != n3 {
        return Err(Error::arg(format!(
            "vector of length {} cannot contract mode 3 of extent {n3}",
            s.len()
        )));
    }
    let mut out = DMatrix::zeros(n1, n2);
    for k in 0..n3 {
        out += t.slice(k) * s[k];
    }
    Ok(out)
}

/// Bilinear contraction of modes 1 and 2: `v_k = aᵀ T(:, :, k) b`.
pub fn mode12_vectors(t: &Tensor3, a: &DVector<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let [n1, n2, n3] = t.dims();
    if a.len() != n1 || b.len() != n2 {
        return Err(Error::arg("vector lengths do not match tensor modes 1 and 2"));
    }
    let mut out = DVector::zeros(n3);
    let plane = n1 * n2;
    for k in 0..n3 {
        let block = &t.data[plane * k..plane * (k + 1)];
        let mut acc = 0.0;
        for j in 0..n2 {
            let col = &block[n1 * j..n1 * (j + 1)];
            let dot: f64 = col.iter().zip(a.iter()).map(|(x, y)| x * y).sum();
            acc += dot * b[j];
        }
        out[k] = acc;
    }
    Ok(out)
}

/// Unfold along `mode` following the usual convention: the remaining indices
/// enumerate columns with the lower mode varying fastest.
pub fn matricize(t: &Tensor3, mode: usize) -> Result<DMatrix<f64>> {
    check_mode(mode)?;
    let [n1, n2, n3] = t.dims();
    Ok(match mode {
        1 => DMatrix::from_column_slice(n1, n2 * n3, &t.data),
        2 => DMatrix::from_fn(n2, n1 * n3, |j, col| t.get(col % n1, j, col / n1)),
        _ => DMatrix::from_fn(n3, n1 * n2, |k, col| t.get(col % n1, col / n1, k)),
    })
}

/// Inverse of [`matricize`].
pub fn fold(m: &DMatrix<f64>, mode: usize, dims: [usize; 3]) -> Result<Tensor3> {
    check_mode(mode)?;
    let [n1, n2, n3] = dims;
    let expected = match mode {
        1 => (n1, n2 * n3),
        2 => (n2, n1 * n3),
        _ => (n3, n1 * n2),
    };
    if m.shape() != expected {
        return Err(Error::arg(format!(
            "matrix of shape {:?} cannot fold into {dims:?} along mode {mode}",
            m.shape()
        )));
    }
    let mut t = Tensor3::zeros(dims);
    for k in 0..n3 {
        for j in 0..n2 {
            for i in 0..n1 {
                let v = match mode {
                    1 => m[(i, j + n2 * k)],
                    2 => m[(j, i + n1 * k)],
                    _ => m[(k, i + n1 * j)],
                };
                t.set(i, j, k, v);
            }
        }
    }
    Ok(t)
}

/// Frobenius inner product.
pub fn frobenius_inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Flip the sign so the largest-magnitude entry (first on ties) is positive.
pub fn apply_sign_convention(v: &mut DVector<f64>) {
    let mut best = 0usize;
    for i in 1..v.len() {
        if v[i].abs() > v[best].abs() {
            best = i;
        }
    }
    if !v.is_empty() && v[best] < 0.0 {
        v.neg_mut();
    }
}

/// Leading generalized eigenpair.
#[derive(Clone, Debug)]
pub struct GevpSolution {
    pub value: f64,
    /// Normalized so `cᵀJc = 1`.
    pub vector: DVector<f64>,
    /// Power iterations used; zero when solved densely.
    pub iterations: usize,
}

/// Problems up to this size are solved by a dense symmetric eigensolver.
pub const DENSE_GEVP_MAX: usize = 64;
const POWER_TOL: f64 = 1e-12;

/// Leading pair of `Ac = λJc` with `J` symmetric positive definite.
///
/// `warm` seeds the power iteration; it is ignored for small problems.
pub fn leading_gevp(
    a: &DMatrix<f64>,
    j: &DMatrix<f64>,
    warm: Option<&DVector<f64>>,
) -> Result<GevpSolution> {
    let m = a.nrows();
    if a.shape() != (m, m) || j.shape() != (m, m) || m == 0 {
        return Err(Error::arg("GEVP matrices must be square and of equal size"));
    }
    let chol = j
        .clone()
        .cholesky()
        .ok_or_else(|| Error::numeric("mass matrix is not positive definite"))?;
    let l = chol.l();
    // B = L⁻¹ A L⁻ᵀ
    let linv_a = l
        .solve_lower_triangular(a)
        .ok_or_else(|| Error::numeric("singular Cholesky factor"))?;
    let b_t = l
        .solve_lower_triangular(&linv_a.transpose())
        .ok_or_else(|| Error::numeric("singular Cholesky factor"))?;
    let b = (&b_t + b_t.transpose()) * 0.5;
    if !b.iter().all(|x| x.is_finite()) {
        return Err(Error::numeric("non-finite entries in the GEVP matrix"));
    }

    let (value, y, iterations) = if m <= DENSE_GEVP_MAX {
        let (v, y) = dense_leading(&b);
        (v, y, 0)
    } else {
        let start = warm.map(|c| l.transpose() * c);
        match power_leading(&b, start) {
            Some(found) => found,
            None => {
                let (v, y) = dense_leading(&b);
                (v, y, 0)
            }
        }
    };
    let mut c = l
        .transpose()
        .solve_upper_triangular(&y)
        .ok_or_else(|| Error::numeric("singular Cholesky factor"))?;
    let norm = (c.transpose() * j * &c)[0].sqrt();
    if !(norm.is_finite() && norm > 0.0) {
        return Err(Error::numeric("generalized eigenvector has zero J-norm"));
    }
    c /= norm;
    apply_sign_convention(&mut c);
    Ok(GevpSolution {
        value,
        vector: c,
        iterations,
    })
}

fn dense_leading(b: &DMatrix<f64>) -> (f64, DVector<f64>) {
    let eig = b.clone().symmetric_eigen();
    let mut best = 0;
    for i in 1..eig.eigenvalues.len() {
        if eig.eigenvalues[i] > eig.eigenvalues[best] {
            best = i;
        }
    }
    (eig.eigenvalues[best], eig.eigenvectors.column(best).into_owned())
}

fn power_leading(b: &DMatrix<f64>, start: Option<DVector<f64>>) -> Option<(f64, DVector<f64>, usize)> {
    let m = b.nrows();
    // Gershgorin lower bound; the shift makes B + σI positive semidefinite
    let mut lower = f64::INFINITY;
    let mut scale = 0.0f64;
    for i in 0..m {
        let off: f64 = (0..m).filter(|&k| k != i).map(|k| b[(i, k)].abs()).sum();
        lower = lower.min(b[(i, i)] - off);
        scale = scale.max(b[(i, i)].abs() + off);
    }
    if scale == 0.0 {
        return Some((0.0, unit_start(m), 0));
    }
    let shift = (-lower).max(0.0);
    // a fixed perturbation keeps a warm start that is an exact non-leading
    // eigenvector from stalling
    let mut x = unit_start(m) * 1e-3;
    if let Some(s) = start {
        let n = s.norm();
        if n > 0.0 && n.is_finite() {
            x += s / n;
        }
    }
    x /= x.norm();
    let max_iter = 20 * m + 2000;
    for it in 1..=max_iter {
        let bx = b * &x;
        let lambda = x.dot(&bx);
        let resid = (&bx - &x * lambda).norm();
        if resid <= POWER_TOL * scale {
            return Some((lambda, x, it));
        }
        let mut next = bx + &x * shift;
        let n = next.norm();
        if n == 0.0 || !n.is_finite() {
            return None;
        }
        next /= n;
        x = next;
    }
    None
}

fn unit_start(m: usize) -> DVector<f64> {
    // deterministic, generic direction
    let v = DVector::from_fn(m, |i, _| 1.0 + ((i as f64 + 1.0) * 0.618_033_988_749_895).fract());
    let n = v.norm();
    v / n
}

/// Keep the `n` largest-magnitude entries, zeroing the rest. On ties the
/// lower index is kept.
pub fn truncate_top_n(c: &DVector<f64>, n: usize) -> DVector<f64> {
    if n >= c.len() {
        return c.clone();
    }
    let mut order: Vec<usize> = (0..c.len()).collect();
    order.sort_by(|&i, &k| c[k].abs().total_cmp(&c[i].abs()).then(i.cmp(&k)));
    let mut out = DVector::zeros(c.len());
    for &i in order.iter().take(n) {
        out[i] = c[i];
    }
    out
}
