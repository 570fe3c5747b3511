//! Simulation drivers: reconstruction error against rank, cost of the
//! alternating updates, and two-group subnetwork detection.
//!
//! Each driver is a pure function of its settings except for the wall-clock
//! columns of the timing study.

use std::str::FromStr;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{
    embedding_residual_path, fit_transformed, update_c, update_s, FitConfig, Sparsity,
};
use crate::geometry::BasisOperators;
use crate::inference::{build_cover, local_test, sim_metrics, split_groups, CoverOutcome, SimMetrics};
use crate::rng::{derive_seed, domain};
use crate::synthetic::{build_operators, rank1_field, rank1_test_field, two_group_field, Sim61Config, Sim63Config};

/// Preset sizes of the simulation studies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    /// Desk scale: icosphere-2 grids, 36 basis vertices per sphere.
    Small,
    /// The published configuration.
    Paper,
}

impl FromStr for Scale {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "small" => Ok(Scale::Small),
            "paper" => Ok(Scale::Paper),
            other => Err(Error::arg(format!("unknown scale {other:?}, expected small or paper"))),
        }
    }
}

/// Fits are run directly on the transformed tensor; the grid mean is never
/// needed.
fn no_mean() -> DMatrix<f64> {
    DMatrix::zeros(0, 0)
}

// ---------------------------------------------------------------------------
// Reconstruction error

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ErrorCurveSettings {
    pub k_true: usize,
    pub coef_sd: f64,
    pub basis_vertices: usize,
    pub grid_subdivision: u32,
    pub sample_sizes: Vec<usize>,
    pub k_max: usize,
    pub n_test: usize,
    pub replicates: usize,
    pub alpha1: f64,
    pub seed: u64,
}

impl Default for ErrorCurveSettings {
    fn default() -> Self {
        Self::for_scale(Scale::Small)
    }
}

impl ErrorCurveSettings {
    pub fn for_scale(scale: Scale) -> Self {
        match scale {
            Scale::Small => ErrorCurveSettings {
                k_true: 10,
                coef_sd: 0.2,
                basis_vertices: 36,
                grid_subdivision: 2,
                sample_sizes: vec![10, 50],
                k_max: 10,
                n_test: 100,
                replicates: 10,
                alpha1: 1e-8,
                seed: 61,
            },
            Scale::Paper => ErrorCurveSettings {
                k_true: 20,
                coef_sd: 0.2,
                basis_vertices: 410,
                grid_subdivision: 4,
                sample_sizes: vec![10, 50, 100],
                k_max: 25,
                n_test: 100,
                replicates: 100,
                alpha1: 1e-8,
                seed: 61,
            },
        }
    }

    fn population(&self, n: usize, replicate: usize) -> Sim61Config {
        Sim61Config {
            k_true: self.k_true,
            coef_sd: self.coef_sd,
            score_decay: 1.0,
            basis_vertices: self.basis_vertices,
            grid_subdivision: self.grid_subdivision,
            n,
            seed: derive_seed(self.seed, &[domain::REPLICATE, replicate as u64, n as u64]),
        }
    }
}

/// Mean squared error per subject at rank `k`, averaged over replicates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorCurveRow {
    pub k: usize,
    pub n: usize,
    pub train_mse: f64,
    pub test_mse: f64,
}

/// Extend a residual path to `len` entries by repeating the last value.
fn pad(mut v: Vec<f64>, len: usize, fill: f64) -> Vec<f64> {
    let last = v.last().copied().unwrap_or(fill);
    v.resize(len, last);
    v
}

/// Train and test error curves of one replicate.
fn error_curve_replicate(settings: &ErrorCurveSettings, ops: &BasisOperators, n: usize, r: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let cfg = settings.population(n, r);
    let train = rank1_field(&cfg, ops.m())?;
    let center = train.mean_scores();
    let g = train.transformed(ops, &center);
    let fit_cfg = FitConfig { k: settings.k_max, alpha1: settings.alpha1, seed: cfg.seed, ..FitConfig::default() };
    let model = fit_transformed(no_mean(), g.clone(), ops, &fit_cfg)?;
    let w = model.weight;
    let train_path: Vec<f64> = model.diagnostics.iter().map(|d| w * d.residual_norm_sq / n as f64).collect();
    let test = rank1_test_field(&cfg, ops.m(), settings.n_test)?;
    let gt = test.transformed(ops, &center);
    let mut test_path = vec![0.0; model.k()];
    for i in 0..settings.n_test {
        let path = embedding_residual_path(&gt.slice(i).into_owned(), &model, ops)?;
        for (acc, v) in test_path.iter_mut().zip(path) {
            *acc += w * v / settings.n_test as f64;
        }
    }
    let test_start = w * gt.norm_squared() / settings.n_test as f64;
    Ok((
        pad(train_path, settings.k_max, 0.0),
        pad(test_path, settings.k_max, test_start),
    ))
}

/// Error against rank for every sample size, on the given operators.
pub fn run_error_curves_with(settings: &ErrorCurveSettings, ops: &BasisOperators) -> Result<Vec<ErrorCurveRow>> {
    if settings.replicates < 1 || settings.k_max < 1 || settings.n_test < 1 {
        return Err(Error::arg("replicates, k_max and n_test must be positive"));
    }
    let mut rows = Vec::new();
    for &n in &settings.sample_sizes {
        if n < 2 {
            return Err(Error::arg("sample sizes must be at least 2"));
        }
        let reps: Vec<(Vec<f64>, Vec<f64>)> = (0..settings.replicates)
            .into_par_iter()
            .map(|r| error_curve_replicate(settings, ops, n, r))
            .collect::<Result<_>>()?;
        for k in 0..settings.k_max {
            let mean = |f: &dyn Fn(&(Vec<f64>, Vec<f64>)) -> f64| reps.iter().map(f).sum::<f64>() / reps.len() as f64;
            rows.push(ErrorCurveRow {
                k: k + 1,
                n,
                train_mse: mean(&|r| r.0[k]),
                test_mse: mean(&|r| r.1[k]),
            });
        }
    }
    Ok(rows)
}

pub fn run_error_curves(settings: &ErrorCurveSettings) -> Result<Vec<ErrorCurveRow>> {
    let ops = build_operators(settings.basis_vertices, settings.grid_subdivision)?;
    run_error_curves_with(settings, &ops)
}

/// `2·train_mse(1)/(K+1)` for every row, with the rank-1 error of the same N.
pub fn rank_bound(rows: &[ErrorCurveRow]) -> Vec<f64> {
    rows.iter()
        .map(|row| {
            let rank1 = rows
                .iter()
                .find(|r| r.n == row.n && r.k == 1)
                .map(|r| r.train_mse)
                .unwrap_or(f64::NAN);
            2.0 * rank1 / (row.k as f64 + 1.0)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Cost of the updates

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimingSettings {
    pub k_true: usize,
    pub coef_sd: f64,
    /// Total marginal ranks M = M1 + M2.
    pub marginal_ranks: Vec<usize>,
    pub sample_sizes: Vec<usize>,
    pub instances: usize,
    pub grid_subdivision: u32,
    pub alpha1: f64,
    /// Timed batches per update; the fastest batch is reported.
    pub batches: usize,
    pub seed: u64,
}

impl Default for TimingSettings {
    fn default() -> Self {
        Self::for_scale(Scale::Small)
    }
}

impl TimingSettings {
    pub fn for_scale(scale: Scale) -> Self {
        match scale {
            Scale::Small => TimingSettings {
                k_true: 10,
                coef_sd: 0.2,
                marginal_ranks: vec![36, 132],
                sample_sizes: vec![10, 50],
                instances: 5,
                grid_subdivision: 2,
                alpha1: 1e-8,
                batches: 7,
                seed: 62,
            },
            Scale::Paper => TimingSettings {
                k_true: 20,
                coef_sd: 0.2,
                marginal_ranks: vec![36, 132, 516, 2052],
                sample_sizes: vec![10, 50, 100, 200],
                instances: 10,
                grid_subdivision: 4,
                alpha1: 1e-8,
                batches: 5,
                seed: 62,
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub m: usize,
    pub n: usize,
    pub instance: usize,
    /// Inner iterations of the first component.
    pub iterations: usize,
    pub converged: bool,
    pub c_update_seconds: f64,
    pub s_update_seconds: f64,
}

/// Per-call time of `f`: batches sized to last about a millisecond, fastest
/// batch wins.
fn time_per_call<F: FnMut() -> Result<()>>(batches: usize, mut f: F) -> Result<f64> {
    let start = Instant::now();
    f()?;
    let once = start.elapsed().as_secs_f64().max(1e-9);
    let reps = ((1e-3 / once).ceil() as usize).clamp(1, 100_000);
    let mut best = f64::INFINITY;
    for _ in 0..batches.max(1) {
        let start = Instant::now();
        for _ in 0..reps {
            f()?;
        }
        best = best.min(start.elapsed().as_secs_f64() / reps as f64);
    }
    Ok(best)
}

pub fn run_timing(settings: &TimingSettings) -> Result<Vec<TimingRow>> {
    let mut rows = Vec::new();
    for &m in &settings.marginal_ranks {
        if m % 2 != 0 || m < 8 {
            return Err(Error::arg(format!("marginal rank {m} must be even and at least 8")));
        }
        let ops = build_operators(m / 2, settings.grid_subdivision)?;
        for &n in &settings.sample_sizes {
            for instance in 0..settings.instances {
                let cfg = Sim61Config {
                    k_true: settings.k_true,
                    coef_sd: settings.coef_sd,
                    score_decay: 1.0,
                    basis_vertices: m / 2,
                    grid_subdivision: settings.grid_subdivision,
                    n,
                    seed: derive_seed(settings.seed, &[domain::REPLICATE, m as u64, n as u64, instance as u64]),
                };
                let field = rank1_field(&cfg, ops.m())?;
                let g = field.transformed(&ops, &field.mean_scores());
                let fit_cfg = FitConfig { k: 1, alpha1: settings.alpha1, ..FitConfig::default() };
                let model = fit_transformed(no_mean(), g.clone(), &ops, &fit_cfg)?;
                let diag = &model.diagnostics[0];
                let c: DVector<f64> = model.c.column(0).into_owned();
                let s = update_s(&g, &c, &ops)?;
                let eye = DMatrix::identity(ops.m(), ops.m());
                let c_secs = time_per_call(settings.batches, || {
                    update_c(&g, &s, &eye, &ops, settings.alpha1, Sparsity::None, Some(&c)).map(|_| ())
                })?;
                let s_secs = time_per_call(settings.batches, || update_s(&g, &c, &ops).map(|_| ()))?;
                rows.push(TimingRow {
                    m,
                    n,
                    instance,
                    iterations: diag.iterations,
                    converged: diag.converged,
                    c_update_seconds: c_secs,
                    s_update_seconds: s_secs,
                });
            }
        }
    }
    Ok(rows)
}

/// Least-squares slope of `ln y` on `ln x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Mean `s`-update time per (M, N).
pub fn mean_s_time(rows: &[TimingRow], m: usize, n: usize) -> f64 {
    let sel: Vec<f64> = rows.iter().filter(|r| r.m == m && r.n == n).map(|r| r.s_update_seconds).collect();
    sel.iter().sum::<f64>() / sel.len() as f64
}

/// Slopes of the `s`-update time in N (at fixed M) and in M (at fixed N),
/// averaged over the other factor.
pub fn s_update_slopes(rows: &[TimingRow]) -> (f64, f64) {
    let mut ms: Vec<usize> = rows.iter().map(|r| r.m).collect();
    let mut ns: Vec<usize> = rows.iter().map(|r| r.n).collect();
    ms.sort();
    ms.dedup();
    ns.sort();
    ns.dedup();
    let slope_n = ms
        .iter()
        .map(|&m| loglog_slope(&ns.iter().map(|&n| (n as f64, mean_s_time(rows, m, n))).collect::<Vec<_>>()))
        .sum::<f64>()
        / ms.len() as f64;
    let slope_m = ns
        .iter()
        .map(|&n| loglog_slope(&ms.iter().map(|&m| (m as f64, mean_s_time(rows, m, n))).collect::<Vec<_>>()))
        .sum::<f64>()
        / ns.len() as f64;
    (slope_n, slope_m)
}

// ---------------------------------------------------------------------------
// Subnetwork detection

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectionSettings {
    /// Effect sizes; `0` is the null.
    pub effect_sizes: Vec<f64>,
    /// Total sample sizes, split equally between the groups.
    pub sample_sizes: Vec<usize>,
    /// Sample sizes used for the null effect.
    pub null_sample_sizes: Vec<usize>,
    pub replicates: usize,
    pub null_replicates: usize,
    pub k_true: usize,
    pub basis_vertices: usize,
    pub grid_subdivision: u32,
    pub k: usize,
    pub alpha1: f64,
    pub alpha: f64,
    pub permutations: usize,
    pub eta: f64,
    pub bump_bandwidth: f64,
    pub bump_radius: f64,
    pub mask_prob: f64,
    pub seed: u64,
}

impl Default for DetectionSettings {
    fn default() -> Self {
        Self::for_scale(Scale::Small)
    }
}

impl DetectionSettings {
    pub fn for_scale(scale: Scale) -> Self {
        let base = DetectionSettings {
            effect_sizes: vec![0.0, 0.025],
            sample_sizes: vec![30, 100],
            null_sample_sizes: vec![30],
            replicates: 100,
            null_replicates: 200,
            k_true: 10,
            basis_vertices: 36,
            grid_subdivision: 2,
            k: 25,
            alpha1: 1e-8,
            alpha: 0.05,
            permutations: 999,
            eta: 0.1,
            bump_bandwidth: 0.4,
            bump_radius: 0.1,
            mask_prob: 0.1,
            seed: 63,
        };
        match scale {
            Scale::Small => base,
            Scale::Paper => DetectionSettings {
                effect_sizes: vec![0.0, 0.005, 0.0075, 0.01, 0.0125, 0.025],
                sample_sizes: vec![30, 50, 100],
                null_sample_sizes: vec![30, 50, 100],
                null_replicates: 100,
                k_true: 20,
                basis_vertices: 410,
                grid_subdivision: 4,
                ..base
            },
        }
    }

    fn population(&self, v0: f64, n: usize, replicate: usize) -> Sim63Config {
        Sim63Config {
            v0,
            eta: self.eta,
            bump_bandwidth: self.bump_bandwidth,
            bump_radius: self.bump_radius,
            mask_prob: self.mask_prob,
            k_true: self.k_true,
            coef_sd: 0.2,
            score_decay: 1.0,
            basis_vertices: self.basis_vertices,
            grid_subdivision: self.grid_subdivision,
            group_sizes: [n / 2, n - n / 2],
            seed: derive_seed(self.seed, &[domain::REPLICATE, v0.to_bits(), n as u64, replicate as u64]),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionRow {
    pub v0: f64,
    pub n: usize,
    pub replicates: usize,
    #[serde(flatten)]
    pub metrics: SimMetrics,
}

/// One simulated dataset through fit, local tests and cover.
pub fn detection_replicate(settings: &DetectionSettings, ops: &BasisOperators, v0: f64, n: usize, r: usize) -> Result<CoverOutcome> {
    let cfg = settings.population(v0, n, r);
    let field = two_group_field(&cfg, ops)?;
    let g = field.transformed(ops);
    let fit_cfg = FitConfig {
        k: settings.k.min(ops.m()),
        alpha1: settings.alpha1,
        sparsity: Sparsity::Auto,
        seed: cfg.seed,
        ..FitConfig::default()
    };
    let model = fit_transformed(no_mean(), g, ops, &fit_cfg)?;
    let (g1, g2) = split_groups(&model.s, &field.labels)?;
    let result = local_test(&g1, &g2, settings.alpha, settings.permutations, cfg.seed)?;
    let cover = build_cover(&result, &model, &ops.basis)?;
    let truth = (field.center.points[0], field.center.points[1]);
    Ok(cover.outcome(&ops.basis, &truth))
}

pub fn run_detection_with(settings: &DetectionSettings, ops: &BasisOperators) -> Result<Vec<DetectionRow>> {
    let mut rows = Vec::new();
    for &v0 in &settings.effect_sizes {
        let (reps, sizes) = if v0 == 0.0 {
            (settings.null_replicates, &settings.null_sample_sizes)
        } else {
            (settings.replicates, &settings.sample_sizes)
        };
        for &n in sizes {
            if n < 4 {
                return Err(Error::arg("sample sizes must be at least 4"));
            }
            let outcomes: Vec<CoverOutcome> = (0..reps)
                .into_par_iter()
                .map(|r| detection_replicate(settings, ops, v0, n, r))
                .collect::<Result<_>>()?;
            rows.push(DetectionRow { v0, n, replicates: reps, metrics: sim_metrics(&outcomes)? });
        }
    }
    Ok(rows)
}

pub fn run_detection(settings: &DetectionSettings) -> Result<Vec<DetectionRow>> {
    let ops = build_operators(settings.basis_vertices, settings.grid_subdivision)?;
    run_detection_with(settings, &ops)
}
