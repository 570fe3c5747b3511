//! Spherical heat kernel and kernel density estimates of endpoint pairs.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{GridOmega, SpherePoint, UnitVector3};

use std::f64::consts::PI;

/// Parameters of the truncated spectral heat kernel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HeatKernelParams {
    /// Diffusion time.
    pub h: f64,
    /// Hard cap on the Legendre degree.
    pub l_max: usize,
    /// Terms whose coefficient falls below this are dropped.
    pub tail_tol: f64,
}

impl HeatKernelParams {
    pub const DEFAULT_L_MAX: usize = 2000;
    pub const DEFAULT_TAIL_TOL: f64 = 1e-16;

    pub fn new(h: f64) -> Result<Self> {
        Self::with_truncation(h, Self::DEFAULT_L_MAX, Self::DEFAULT_TAIL_TOL)
    }

    pub fn with_truncation(h: f64, l_max: usize, tail_tol: f64) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::arg(format!("bandwidth must be positive, got {h}")));
        }
        if l_max < 1 {
            return Err(Error::arg("l_max must be at least 1"));
        }
        if !(tail_tol > 0.0) {
            return Err(Error::arg("tail tolerance must be positive"));
        }
        Ok(HeatKernelParams { h, l_max, tail_tol })
    }
}

/// Heat kernel with its series coefficients precomputed.
#[derive(Clone, Debug)]
pub struct HeatKernel {
    params: HeatKernelParams,
    coef: Vec<f64>,
}

impl HeatKernel {
    pub fn new(params: HeatKernelParams) -> Self {
        let mut coef = Vec::new();
        for l in 0..=params.l_max {
            let lf = l as f64;
            let c = (2.0 * lf + 1.0) / (4.0 * PI) * (-lf * (lf + 1.0) * params.h).exp();
            if l > 0 && c < params.tail_tol {
                break;
            }
            coef.push(c);
        }
        HeatKernel { params, coef }
    }

    pub fn params(&self) -> HeatKernelParams {
        self.params
    }

    /// Highest Legendre degree kept.
    pub fn degree(&self) -> usize {
        self.coef.len() - 1
    }

    /// Kernel value as a function of `t = ⟨x, y⟩`.
    pub fn eval_cos(&self, t: f64) -> f64 {
        let t = t.clamp(-1.0, 1.0);
        let mut p_prev = 1.0;
        let mut sum = self.coef[0];
        if self.coef.len() > 1 {
            let mut p = t;
            sum += self.coef[1] * p;
            for l in 1..self.coef.len() - 1 {
                let lf = l as f64;
                let next = ((2.0 * lf + 1.0) * t * p - lf * p_prev) / (lf + 1.0);
                p_prev = p;
                p = next;
                sum += self.coef[l + 1] * p;
            }
        }
        debug_assert!(sum > -1e-8, "truncated heat kernel went negative: {sum}");
        sum.max(0.0)
    }

    pub fn eval(&self, x: &UnitVector3, y: &UnitVector3) -> f64 {
        self.eval_cos(x.dot(y))
    }

    /// Kernel on Ω: zero across spheres.
    pub fn eval_omega(&self, x: &SpherePoint, y: &SpherePoint) -> f64 {
        if x.sphere == y.sphere {
            self.eval(&x.v, &y.v)
        } else {
            0.0
        }
    }
}

/// `κ_h(x, y)` on a single sphere.
pub fn heat_kernel(x: &UnitVector3, y: &UnitVector3, params: &HeatKernelParams) -> Result<f64> {
    let params = HeatKernelParams::with_truncation(params.h, params.l_max, params.tail_tol)?;
    Ok(HeatKernel::new(params).eval(x, y))
}

/// `κ_h(ω1, p1)·κ_h(ω2, p2)` on Ω×Ω.
pub fn product_kernel(
    omega1: &SpherePoint,
    omega2: &SpherePoint,
    p1: &SpherePoint,
    p2: &SpherePoint,
    kernel: &HeatKernel,
) -> f64 {
    kernel.eval_omega(omega1, p1) * kernel.eval_omega(omega2, p2)
}

/// Symmetrized product kernel `[κ(ω1,p1)κ(ω2,p2) + κ(ω1,p2)κ(ω2,p1)] / 2`.
pub fn symmetrized_kernel(
    omega1: &SpherePoint,
    omega2: &SpherePoint,
    p1: &SpherePoint,
    p2: &SpherePoint,
    kernel: &HeatKernel,
) -> f64 {
    0.5 * (product_kernel(omega1, omega2, p1, p2, kernel)
        + product_kernel(omega1, omega2, p2, p1, kernel))
}

/// Endpoint pairs of one subject.
#[derive(Clone, Debug, PartialEq)]
pub struct PointPattern {
    pub subject_id: u64,
    pub pairs: Vec<(SpherePoint, SpherePoint)>,
}

impl PointPattern {
    pub fn new(subject_id: u64, pairs: Vec<(SpherePoint, SpherePoint)>) -> Self {
        PointPattern { subject_id, pairs }
    }

    pub fn q(&self) -> usize {
        self.pairs.len()
    }
}

/// How the second term of the density estimate treats endpoint order.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Symmetrization {
    /// Average the pair with its endpoint-swapped copy.
    #[default]
    Swapped,
    /// Two identical terms, reproducing the printed formula verbatim. The
    /// result is not symmetric in general.
    Literal,
}

/// Smoothed connectivity of one subject on a grid.
#[derive(Clone, Debug)]
pub struct ConnectivityMatrix {
    pub grid: GridOmega,
    /// Density per steradian², `(n1+n2) × (n1+n2)`.
    pub f_hat: DMatrix<f64>,
    pub q: usize,
}

impl ConnectivityMatrix {
    /// Intensity estimate `q · F̂`.
    pub fn u_hat(&self) -> DMatrix<f64> {
        &self.f_hat * self.q as f64
    }
}

const KDE_CHUNK: usize = 2048;

/// Kernel density estimate of the endpoint-pair distribution on the grid.
pub fn kde_estimate(
    pattern: &PointPattern,
    grid: &GridOmega,
    kernel: &HeatKernel,
    mode: Symmetrization,
) -> Result<ConnectivityMatrix> {
    let q = pattern.q();
    if q == 0 {
        return Err(Error::EmptyPattern);
    }
    let n = grid.len();
    let points = grid.points();
    let mut cross = DMatrix::<f64>::zeros(n, n);
    for chunk in pattern.pairs.chunks(KDE_CHUNK) {
        let width = chunk.len();
        // k1[:, j] = κ(·, p1_j), k2[:, j] = κ(·, p2_j); columns are independent
        let columns: Vec<(Vec<f64>, Vec<f64>)> = chunk
            .par_iter()
            .map(|(p1, p2)| {
                let c1 = points.iter().map(|x| kernel.eval_omega(x, p1)).collect();
                let c2 = points.iter().map(|x| kernel.eval_omega(x, p2)).collect();
                (c1, c2)
            })
            .collect();
        let mut k1 = DMatrix::<f64>::zeros(n, width);
        let mut k2 = DMatrix::<f64>::zeros(n, width);
        for (j, (c1, c2)) in columns.iter().enumerate() {
            k1.column_mut(j).copy_from_slice(c1);
            k2.column_mut(j).copy_from_slice(c2);
        }
        cross.gemm(1.0, &k1, &k2.transpose(), 1.0);
    }
    let f_hat = match mode {
        Symmetrization::Swapped => (&cross + cross.transpose()) / (2.0 * q as f64),
        Symmetrization::Literal => cross / q as f64,
    };
    Ok(ConnectivityMatrix {
        grid: grid.clone(),
        f_hat,
        q,
    })
}
