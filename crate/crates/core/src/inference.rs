//! Two-group inference on subject scores.
//!
//! The global test compares the score distributions with an unbiased MMD²
//! statistic; the local tests compare each coefficient separately and are
//! Holm corrected. Rejected components induce a subnetwork cover of Ω×Ω.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::ReducedRankModel;
use crate::geometry::{SphereId, SpherePoint, SplineBasisSystem, BARY_TOL};
use crate::rng::{domain, stream};

/// Smallest permutation count accepted.
pub const MIN_PERMUTATIONS: usize = 99;

/// Relative slack when comparing a permuted statistic with the observed one.
const TIE_TOL: f64 = 1e-12;

/// Scores of one group, one row per subject.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupSample {
    pub label: u8,
    pub scores: DMatrix<f64>,
}

impl GroupSample {
    pub fn new(label: u8, scores: DMatrix<f64>) -> Result<Self> {
        if label != 1 && label != 2 {
            return Err(Error::arg(format!("group label must be 1 or 2, got {label}")));
        }
        Ok(GroupSample { label, scores })
    }

    pub fn n(&self) -> usize {
        self.scores.nrows()
    }
}

/// Split the rows of `scores` by label.
pub fn split_groups(scores: &DMatrix<f64>, labels: &[u8]) -> Result<(GroupSample, GroupSample)> {
    if labels.len() != scores.nrows() {
        return Err(Error::arg(format!(
            "{} labels for {} subjects",
            labels.len(),
            scores.nrows()
        )));
    }
    let pick = |l: u8| -> Result<GroupSample> {
        let rows: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == l).collect();
        GroupSample::new(l, scores.select_rows(rows.iter()))
    };
    if let Some(bad) = labels.iter().find(|&&l| l != 1 && l != 2) {
        return Err(Error::arg(format!("group label must be 1 or 2, got {bad}")));
    }
    Ok((pick(1)?, pick(2)?))
}

fn check_groups(g1: &GroupSample, g2: &GroupSample, b: usize) -> Result<()> {
    if g1.n() < 2 || g2.n() < 2 {
        return Err(Error::arg(format!(
            "each group needs at least two subjects, got {} and {}",
            g1.n(),
            g2.n()
        )));
    }
    if g1.scores.ncols() != g2.scores.ncols() {
        return Err(Error::arg(format!(
            "groups have {} and {} score columns",
            g1.scores.ncols(),
            g2.scores.ncols()
        )));
    }
    if b < MIN_PERMUTATIONS {
        return Err(Error::arg(format!("need at least {MIN_PERMUTATIONS} permutations, got {b}")));
    }
    Ok(())
}

/// `(1 + #{T_b ≥ T}) / (1 + B)`.
pub fn permutation_p_value(observed: f64, permuted: &[f64]) -> f64 {
    let cut = observed - TIE_TOL * observed.abs();
    let count = permuted.iter().filter(|&&t| t >= cut).count();
    (1 + count) as f64 / (1 + permuted.len()) as f64
}

/// Pooled rows, group 1 first.
fn pooled(g1: &GroupSample, g2: &GroupSample) -> DMatrix<f64> {
    let (n1, n2, k) = (g1.n(), g2.n(), g1.scores.ncols());
    DMatrix::from_fn(n1 + n2, k, |i, j| if i < n1 { g1.scores[(i, j)] } else { g2.scores[(i - n1, j)] })
}

/// A random relabelling: the first `n1` entries form group 1.
fn permutation(n: usize, seed: u64, test: u64, b: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut stream(seed, &[domain::PERMUTATION, test, b as u64]));
    idx
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MmdResult {
    pub statistic: f64,
    pub p_value: f64,
    pub bandwidth: f64,
    pub permutations: usize,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Unbiased MMD² from a pooled Gram matrix, with `idx[..n1]` as group 1.
fn mmd_unbiased(gram: &DMatrix<f64>, idx: &[usize], n1: usize) -> f64 {
    let n = idx.len();
    let n2 = n - n1;
    let (mut xx, mut yy, mut xy) = (0.0, 0.0, 0.0);
    for a in 0..n {
        for b in 0..n {
            if a == b {
                continue;
            }
            let v = gram[(idx[a], idx[b])];
            match (a < n1, b < n1) {
                (true, true) => xx += v,
                (false, false) => yy += v,
                (true, false) => xy += v,
                (false, true) => {}
            }
        }
    }
    xx / (n1 * (n1 - 1)) as f64 + yy / (n2 * (n2 - 1)) as f64 - 2.0 * xy / (n1 * n2) as f64
}

/// Global permutation test with a Gaussian kernel whose bandwidth is the
/// median pairwise distance of the pooled sample.
pub fn mmd_test(g1: &GroupSample, g2: &GroupSample, b: usize, seed: u64) -> Result<MmdResult> {
    check_groups(g1, g2, b)?;
    let z = pooled(g1, g2);
    let n = z.nrows();
    let mut dist = DMatrix::zeros(n, n);
    let mut pairwise = Vec::with_capacity(n * (n - 1) / 2);
    for a in 0..n {
        for c in a + 1..n {
            let d = (z.row(a) - z.row(c)).norm();
            dist[(a, c)] = d;
            dist[(c, a)] = d;
            pairwise.push(d);
        }
    }
    let mut bandwidth = median(pairwise.clone());
    if bandwidth == 0.0 {
        let positive: Vec<f64> = pairwise.into_iter().filter(|&d| d > 0.0).collect();
        if positive.is_empty() {
            return Ok(MmdResult { statistic: 0.0, p_value: 1.0, bandwidth: 0.0, permutations: b });
        }
        bandwidth = median(positive);
    }
    let gram = dist.map(|d| (-d * d / (2.0 * bandwidth * bandwidth)).exp());
    let n1 = g1.n();
    let identity: Vec<usize> = (0..n).collect();
    let statistic = mmd_unbiased(&gram, &identity, n1);
    let permuted: Vec<f64> = (0..b)
        .into_par_iter()
        .map(|r| mmd_unbiased(&gram, &permutation(n, seed, 0, r), n1))
        .collect();
    Ok(MmdResult {
        statistic,
        p_value: permutation_p_value(statistic, &permuted),
        bandwidth,
        permutations: b,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientTests {
    /// `|mean₁ − mean₂|` per column.
    pub statistics: Vec<f64>,
    pub p_values: Vec<f64>,
}

fn abs_mean_difference(column: &[f64], idx: &[usize], n1: usize) -> f64 {
    let s1: f64 = idx[..n1].iter().map(|&i| column[i]).sum();
    let s2: f64 = idx[n1..].iter().map(|&i| column[i]).sum();
    (s1 / n1 as f64 - s2 / (idx.len() - n1) as f64).abs()
}

/// Per-column permutation tests of the absolute mean difference. Column `k`
/// uses its own permutation stream.
pub fn coefficient_tests(g1: &GroupSample, g2: &GroupSample, b: usize, seed: u64) -> Result<CoefficientTests> {
    check_groups(g1, g2, b)?;
    let z = pooled(g1, g2);
    let (n, n1) = (z.nrows(), g1.n());
    let identity: Vec<usize> = (0..n).collect();
    let (statistics, p_values) = (0..z.ncols())
        .into_par_iter()
        .map(|k| {
            let col: Vec<f64> = z.column(k).iter().copied().collect();
            let obs = abs_mean_difference(&col, &identity, n1);
            let permuted: Vec<f64> = (0..b)
                .map(|r| abs_mean_difference(&col, &permutation(n, seed, k as u64 + 1, r), n1))
                .collect();
            (obs, permutation_p_value(obs, &permuted))
        })
        .unzip();
    Ok(CoefficientTests { statistics, p_values })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolmResult {
    pub adjusted: Vec<f64>,
    /// Indices with `adjusted ≤ α`, ascending.
    pub rejected: Vec<usize>,
}

/// Holm step-down adjustment.
pub fn holm_correct(pvals: &[f64], alpha: f64) -> Result<HolmResult> {
    if let Some(p) = pvals.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::arg(format!("p-value {p} outside [0, 1]")));
    }
    let k = pvals.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| pvals[a].total_cmp(&pvals[b]).then(a.cmp(&b)));
    let mut adjusted = vec![0.0; k];
    let mut running: f64 = 0.0;
    for (j, &i) in order.iter().enumerate() {
        running = running.max(((k - j) as f64 * pvals[i]).min(1.0));
        adjusted[i] = running;
    }
    let rejected = (0..k).filter(|&i| adjusted[i] <= alpha).collect();
    Ok(HolmResult { adjusted, rejected })
}

/// Outcome of the local tests.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalTestResult {
    pub statistics: Vec<f64>,
    pub raw: Vec<f64>,
    pub adjusted: Vec<f64>,
    pub rejected: Vec<usize>,
    pub alpha: f64,
    pub permutations: usize,
    pub seed: u64,
}

/// Coefficient tests followed by Holm correction at level `alpha`.
pub fn local_test(g1: &GroupSample, g2: &GroupSample, alpha: f64, b: usize, seed: u64) -> Result<LocalTestResult> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::arg(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let tests = coefficient_tests(g1, g2, b, seed)?;
    let holm = holm_correct(&tests.p_values, alpha)?;
    Ok(LocalTestResult {
        statistics: tests.statistics,
        raw: tests.p_values,
        adjusted: holm.adjusted,
        rejected: holm.rejected,
        alpha,
        permutations: b,
        seed,
    })
}

/// Support of one rejected component.
#[derive(Clone, Debug, PartialEq)]
pub struct ComponentSupport {
    pub component: usize,
    /// Vertices with nonzero coefficient, per sphere.
    pub vertices: [Vec<bool>; 2],
    /// Triangles with at least one such vertex, per sphere.
    pub faces: [Vec<bool>; 2],
}

/// Union over rejected components of `Supp(ξ_k) × Supp(ξ_k)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SubnetworkCover {
    pub supports: Vec<ComponentSupport>,
    /// Covered fraction of the area of Ω×Ω.
    pub domain_coverage: f64,
}

/// Support of `ξ = φᵀc` on both spheres.
pub fn component_support(c: &[f64], basis: &SplineBasisSystem, component: usize) -> ComponentSupport {
    let mut vertices: [Vec<bool>; 2] = Default::default();
    let mut faces: [Vec<bool>; 2] = Default::default();
    for s in SphereId::BOTH {
        let tri = basis.triangulation(s);
        let off = basis.offset(s);
        let v: Vec<bool> = (0..tri.num_vertices()).map(|i| c[off + i] != 0.0).collect();
        faces[s.index()] = tri.faces().iter().map(|f| f.iter().any(|&i| v[i])).collect();
        vertices[s.index()] = v;
    }
    ComponentSupport { component, vertices, faces }
}

impl SubnetworkCover {
    pub fn is_empty(&self) -> bool {
        self.supports.is_empty()
    }

    /// Whether `p` lies in the support of component slot `slot`.
    fn point_in_support(&self, basis: &SplineBasisSystem, slot: usize, p: &SpherePoint) -> bool {
        let tri = basis.triangulation(p.sphere);
        let faces = &self.supports[slot].faces[p.sphere.index()];
        (0..tri.faces().len()).any(|f| {
            faces[f] && tri.barycentric(f, p.v.as_vector()).iter().all(|&b| b >= -BARY_TOL)
        })
    }

    /// Whether `(ω1, ω2)` is covered.
    pub fn contains(&self, basis: &SplineBasisSystem, omega1: &SpherePoint, omega2: &SpherePoint) -> bool {
        (0..self.supports.len())
            .any(|slot| self.point_in_support(basis, slot, omega1) && self.point_in_support(basis, slot, omega2))
    }

    /// Replicate summary against the true differential pair.
    pub fn outcome(&self, basis: &SplineBasisSystem, truth: &(SpherePoint, SpherePoint)) -> CoverOutcome {
        CoverOutcome {
            nonempty: !self.is_empty(),
            covers_truth: self.contains(basis, &truth.0, &truth.1),
            domain_coverage: self.domain_coverage,
        }
    }
}

/// Build the cover from the rejected components of a fitted model.
pub fn build_cover(result: &LocalTestResult, model: &ReducedRankModel, basis: &SplineBasisSystem) -> Result<SubnetworkCover> {
    if model.c.nrows() != basis.m() {
        return Err(Error::arg(format!(
            "model has {} coefficients per component but the basis has {}",
            model.c.nrows(),
            basis.m()
        )));
    }
    if let Some(&k) = result.rejected.iter().find(|&&k| k >= model.k()) {
        return Err(Error::arg(format!("rejected component {k} but the model has K = {}", model.k())));
    }
    let supports: Vec<ComponentSupport> = result
        .rejected
        .iter()
        .map(|&k| component_support(model.c.column(k).as_slice(), basis, k))
        .collect();
    let domain_coverage = cover_area_fraction(&supports, basis);
    Ok(SubnetworkCover { supports, domain_coverage })
}

/// `area(⋃_k S_k × S_k) / (8π)²` over the triangle pairs.
fn cover_area_fraction(supports: &[ComponentSupport], basis: &SplineBasisSystem) -> f64 {
    if supports.is_empty() {
        return 0.0;
    }
    let words = supports.len().div_ceil(64);
    let mut areas = Vec::new();
    let mut masks: Vec<Vec<u64>> = Vec::new();
    for s in SphereId::BOTH {
        let tri = basis.triangulation(s);
        for f in 0..tri.faces().len() {
            let mut mask = vec![0u64; words];
            for (slot, sup) in supports.iter().enumerate() {
                if sup.faces[s.index()][f] {
                    mask[slot / 64] |= 1 << (slot % 64);
                }
            }
            areas.push(tri.face_area(f));
            masks.push(mask);
        }
    }
    let total: f64 = areas.iter().sum();
    let mut covered = 0.0;
    for (a, ma) in masks.iter().enumerate() {
        if ma.iter().all(|&w| w == 0) {
            continue;
        }
        for (b, mb) in masks.iter().enumerate() {
            if ma.iter().zip(mb).any(|(x, y)| x & y != 0) {
                covered += areas[a] * areas[b];
            }
        }
    }
    (covered / (total * total)).min(1.0)
}

/// One Monte-Carlo replicate of the detection study.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverOutcome {
    pub nonempty: bool,
    pub covers_truth: bool,
    pub domain_coverage: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimMetrics {
    /// Coverage proportion.
    pub cp: f64,
    /// False coverage proportion.
    pub fcp: f64,
    /// Mean domain coverage over nonempty covers, 0 if none.
    pub dc: f64,
}

pub fn sim_metrics(outcomes: &[CoverOutcome]) -> Result<SimMetrics> {
    if outcomes.is_empty() {
        return Err(Error::arg("need at least one replicate"));
    }
    let n = outcomes.len() as f64;
    let cp = outcomes.iter().filter(|o| o.covers_truth).count() as f64 / n;
    let fcp = outcomes.iter().filter(|o| o.nonempty && !o.covers_truth).count() as f64 / n;
    let nonempty: Vec<f64> = outcomes.iter().filter(|o| o.nonempty).map(|o| o.domain_coverage).collect();
    let dc = if nonempty.is_empty() { 0.0 } else { nonempty.iter().sum::<f64>() / nonempty.len() as f64 };
    Ok(SimMetrics { cp, fcp, dc })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fit::{FitConfig, ReducedRankModel, WeightConvention};
    use crate::geometry::{fibonacci_sphere, spherical_delaunay, UnitVector3};
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn gaussian_group(label: u8, n: usize, k: usize, shift: f64, seed: u64) -> GroupSample {
        let mut rng = stream(seed, &[label as u64]);
        let scores = DMatrix::from_fn(n, k, |_, _| rng.sample::<f64, _>(StandardNormal) + shift);
        GroupSample::new(label, scores).unwrap()
    }

    #[test]
    fn identical_groups_give_nonpositive_statistic() {
        let g = gaussian_group(1, 10, 3, 0.0, 1);
        let g2 = GroupSample::new(2, g.scores.clone()).unwrap();
        let r = mmd_test(&g, &g2, 199, 4).unwrap();
        assert!(r.statistic <= 1e-12);
        assert!(r.p_value >= 0.5);
    }

    #[test]
    fn constant_pooled_sample_is_degenerate() {
        let a = GroupSample::new(1, DMatrix::from_element(3, 2, 1.5)).unwrap();
        let b = GroupSample::new(2, DMatrix::from_element(4, 2, 1.5)).unwrap();
        let r = mmd_test(&a, &b, 99, 0).unwrap();
        assert_eq!((r.statistic, r.p_value), (0.0, 1.0));
    }

    #[test]
    fn separated_clusters_reach_minimal_p_value() {
        let g1 = gaussian_group(1, 20, 2, 0.0, 2);
        let mut g2 = gaussian_group(2, 20, 2, 0.0, 3);
        // 10 median distances apart
        g2.scores.add_scalar_mut(50.0);
        let r = mmd_test(&g1, &g2, 999, 5).unwrap();
        assert_eq!(r.p_value, 1.0 / 1000.0);
    }

    #[test]
    fn four_plus_four_separated_statistic_is_maximal() {
        // every other split mixes the clusters and has a smaller statistic
        let g1 = GroupSample::new(1, DMatrix::from_column_slice(4, 1, &[0.0, 0.1, 0.2, 0.3])).unwrap();
        let g2 = GroupSample::new(2, DMatrix::from_column_slice(4, 1, &[10.0, 10.1, 10.2, 10.3])).unwrap();
        let z = pooled(&g1, &g2);
        let mut pairwise = Vec::new();
        for a in 0..8 {
            for c in a + 1..8 {
                pairwise.push((z[a] - z[c]).abs());
            }
        }
        let bw = median(pairwise);
        let gram = DMatrix::from_fn(8, 8, |a, c| (-(z[a] - z[c]).powi(2) / (2.0 * bw * bw)).exp());
        let obs = mmd_unbiased(&gram, &(0..8).collect::<Vec<_>>(), 4);
        let mut at_least = 0;
        for mask in 0u32..256 {
            if mask.count_ones() != 4 {
                continue;
            }
            let mut idx: Vec<usize> = (0..8).filter(|i| mask & (1 << i) != 0).collect();
            idx.extend((0..8).filter(|i| mask & (1 << i) == 0));
            if mmd_unbiased(&gram, &idx, 4) >= obs - 1e-12 {
                at_least += 1;
            }
        }
        // the split and its mirror image
        assert_eq!(at_least, 2);
    }

    #[test]
    fn mmd_null_calibration() {
        let rejections = (0..200)
            .filter(|&rep| {
                let g1 = gaussian_group(1, 15, 3, 0.0, 1000 + rep);
                let g2 = gaussian_group(2, 15, 3, 0.0, 5000 + rep);
                mmd_test(&g1, &g2, 199, rep).unwrap().p_value <= 0.05
            })
            .count();
        assert!(rejections as f64 / 200.0 <= 0.08, "rejection rate {}", rejections as f64 / 200.0);
    }

    #[test]
    fn coefficient_test_examples() {
        let a = GroupSample::new(1, DMatrix::from_fn(6, 2, |i, j| if j == 0 { 2.0 } else { i as f64 })).unwrap();
        let b = GroupSample::new(2, DMatrix::from_fn(5, 2, |i, j| if j == 0 { 2.0 } else { i as f64 + 0.5 })).unwrap();
        let r = coefficient_tests(&a, &b, 199, 1).unwrap();
        assert_eq!(r.p_values[0], 1.0);
        assert_eq!(r.statistics[0], 0.0);

        let g1 = gaussian_group(1, 30, 2, 0.0, 7);
        let mut g2 = gaussian_group(2, 30, 2, 0.0, 8);
        // 5 pooled standard deviations
        g2.scores.column_mut(1).add_scalar_mut(5.0);
        let r = coefficient_tests(&g1, &g2, 999, 2).unwrap();
        assert_eq!(r.p_values[1], 1.0 / 1000.0);
    }

    #[test]
    fn small_groups_match_exhaustive_enumeration() {
        let g1 = GroupSample::new(1, DMatrix::from_column_slice(2, 1, &[0.3, 1.1])).unwrap();
        let g2 = GroupSample::new(2, DMatrix::from_column_slice(2, 1, &[1.7, 2.0])).unwrap();
        let z = [0.3, 1.1, 1.7, 2.0];
        let obs = abs_mean_difference(&z, &[0, 1, 2, 3], 2);
        let mut hits = 0;
        let mut total = 0;
        for a in 0..4 {
            for c in a + 1..4 {
                let mut idx = vec![a, c];
                idx.extend((0..4).filter(|&i| i != a && i != c));
                if abs_mean_difference(&z, &idx, 2) >= obs - 1e-12 {
                    hits += 1;
                }
                total += 1;
            }
        }
        let exact = hits as f64 / total as f64;
        let b = 4999;
        let mc = coefficient_tests(&g1, &g2, b, 3).unwrap().p_values[0];
        assert!((mc - exact).abs() <= 2.0 / (b as f64).sqrt(), "{mc} vs {exact}");
    }

    #[test]
    fn argument_checks() {
        let g1 = gaussian_group(1, 1, 2, 0.0, 1);
        let g2 = gaussian_group(2, 5, 2, 0.0, 1);
        assert!(mmd_test(&g1, &g2, 199, 0).is_err());
        let g1 = gaussian_group(1, 5, 2, 0.0, 1);
        assert!(coefficient_tests(&g1, &g2, 10, 0).is_err());
        let g3 = gaussian_group(2, 5, 3, 0.0, 1);
        assert!(mmd_test(&g1, &g3, 199, 0).is_err());
        assert!(GroupSample::new(3, DMatrix::zeros(2, 2)).is_err());
        assert!(split_groups(&DMatrix::zeros(3, 2), &[1, 2]).is_err());
    }

    #[test]
    fn split_by_label() {
        let s = DMatrix::from_fn(5, 2, |i, j| (i * 2 + j) as f64);
        let (a, b) = split_groups(&s, &[2, 1, 2, 1, 1]).unwrap();
        assert_eq!(a.scores.column(0).as_slice(), &[2.0, 6.0, 8.0]);
        assert_eq!(b.scores.column(0).as_slice(), &[0.0, 4.0]);
    }

    #[test]
    fn holm_examples() {
        let r = holm_correct(&[0.01, 0.04], 0.05).unwrap();
        assert_eq!(r.rejected, vec![0, 1]);
        assert_eq!(r.adjusted, vec![0.02, 0.04]);
        let r = holm_correct(&[0.03, 0.04], 0.05).unwrap();
        assert!(r.rejected.is_empty());
        let r = holm_correct(&[], 0.05).unwrap();
        assert!(r.adjusted.is_empty() && r.rejected.is_empty());
        assert!(holm_correct(&[1.2], 0.05).is_err());
    }

    #[test]
    fn holm_matches_step_down_and_is_order_invariant() {
        let mut rng = stream(11, &[]);
        for _ in 0..200 {
            let k = rng.random_range(1..12);
            let p: Vec<f64> = (0..k).map(|_| (rng.random::<f64>() * 0.1 * 100.0).round() / 100.0 * 0.5).collect();
            let r = holm_correct(&p, 0.05).unwrap();
            // literal step-down
            let mut order: Vec<usize> = (0..k).collect();
            order.sort_by(|&a, &b| p[a].total_cmp(&p[b]));
            let mut expected = Vec::new();
            for (j, &i) in order.iter().enumerate() {
                if p[i] <= 0.05 / (k - j) as f64 {
                    expected.push(i);
                } else {
                    break;
                }
            }
            expected.sort();
            assert_eq!(r.rejected, expected);
            for i in 0..k {
                assert!(r.adjusted[i] >= p[i]);
            }
            // reversing the input reverses the output
            let rev: Vec<f64> = p.iter().rev().copied().collect();
            let rr = holm_correct(&rev, 0.05).unwrap();
            let mut mapped: Vec<usize> = rr.rejected.iter().map(|&i| k - 1 - i).collect();
            mapped.sort();
            assert_eq!(mapped, r.rejected);
            // duplicating every p-value only tightens the thresholds
            let dup: Vec<f64> = p.iter().chain(p.iter()).copied().collect();
            let rd = holm_correct(&dup, 0.05).unwrap();
            assert!(rd.rejected.iter().filter(|&&i| i < k).all(|i| r.rejected.contains(i)));
        }
    }

    fn small_basis() -> SplineBasisSystem {
        let tri = spherical_delaunay(fibonacci_sphere(12)).unwrap();
        SplineBasisSystem::new(tri.clone(), tri).unwrap()
    }

    fn model_with(c: DMatrix<f64>) -> ReducedRankModel {
        let k = c.ncols();
        ReducedRankModel {
            c,
            s: DMatrix::zeros(4, k),
            ybar: DMatrix::zeros(1, 1),
            config: FitConfig { k, ..FitConfig::default() },
            weight: WeightConvention::GridCount.weight(1, 1),
            diagnostics: Vec::new(),
            initial_norm_sq: 1.0,
            stopped_early: false,
        }
    }

    fn result_rejecting(rejected: Vec<usize>) -> LocalTestResult {
        LocalTestResult {
            statistics: vec![],
            raw: vec![],
            adjusted: vec![],
            rejected,
            alpha: 0.05,
            permutations: 99,
            seed: 0,
        }
    }

    #[test]
    fn cover_examples() {
        let basis = small_basis();
        let mut c = DMatrix::zeros(24, 2);
        c.column_mut(0).fill(1.0);
        c[(3, 1)] = 1.0;
        let model = model_with(c);
        let empty = build_cover(&result_rejecting(vec![]), &model, &basis).unwrap();
        assert!(empty.is_empty());
        assert_eq!(empty.domain_coverage, 0.0);
        let full = build_cover(&result_rejecting(vec![0]), &model, &basis).unwrap();
        assert!((full.domain_coverage - 1.0).abs() < 1e-12);
        assert!(build_cover(&result_rejecting(vec![5]), &model, &basis).is_err());

        // local support: the faces around vertex 3 of sphere 1
        let local = build_cover(&result_rejecting(vec![1]), &model, &basis).unwrap();
        let tri = basis.triangulation(SphereId::One);
        let star: f64 = tri
            .faces()
            .iter()
            .enumerate()
            .filter(|(_, f)| f.contains(&3))
            .map(|(i, _)| tri.face_area(i))
            .sum();
        let expected = (star / (8.0 * std::f64::consts::PI)).powi(2);
        assert!((local.domain_coverage - expected).abs() < 1e-12);
        let v3 = SpherePoint::new(SphereId::One, tri.vertices()[3]);
        let other = tri.vertices().iter().enumerate().max_by(|a, b| {
            a.1.geodesic_distance(&tri.vertices()[3]).total_cmp(&b.1.geodesic_distance(&tri.vertices()[3]))
        });
        let far = SpherePoint::new(SphereId::One, *other.unwrap().1);
        assert!(local.contains(&basis, &v3, &v3));
        assert!(!local.contains(&basis, &v3, &far));
        let on_two = SpherePoint::new(SphereId::Two, tri.vertices()[3]);
        assert!(!local.contains(&basis, &v3, &on_two));
    }

    #[test]
    fn membership_matches_definition_on_random_points() {
        let basis = small_basis();
        let mut rng = stream(21, &[]);
        let c = DMatrix::from_fn(24, 3, |_, _| if rng.random::<f64>() < 0.2 { 1.0 } else { 0.0 });
        let model = model_with(c.clone());
        let cover = build_cover(&result_rejecting(vec![0, 2]), &model, &basis).unwrap();
        let rand_point = |rng: &mut rand_chacha::ChaCha8Rng| {
            let s = if rng.random::<bool>() { SphereId::One } else { SphereId::Two };
            let v = UnitVector3::normalize(rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal)).unwrap();
            SpherePoint::new(s, v)
        };
        for _ in 0..300 {
            let p1 = rand_point(&mut rng);
            let p2 = rand_point(&mut rng);
            // oracle: a point is supported iff its containing face touches a
            // vertex with nonzero coefficient
            let in_supp = |p: &SpherePoint, k: usize| {
                let tri = basis.triangulation(p.sphere);
                let loc = tri.locate(&p.v);
                tri.faces()[loc.face].iter().any(|&v| c[(basis.offset(p.sphere) + v, k)] != 0.0)
            };
            let expected = [0, 2].iter().any(|&k| in_supp(&p1, k) && in_supp(&p2, k));
            assert_eq!(cover.contains(&basis, &p1, &p2), expected);
        }
    }

    #[test]
    fn sim_metric_examples() {
        let hit = CoverOutcome { nonempty: true, covers_truth: true, domain_coverage: 0.2 };
        let miss = CoverOutcome { nonempty: true, covers_truth: false, domain_coverage: 0.4 };
        let none = CoverOutcome { nonempty: false, covers_truth: false, domain_coverage: 0.0 };
        let m = sim_metrics(&[hit, hit]).unwrap();
        assert_eq!((m.cp, m.fcp), (1.0, 0.0));
        let m = sim_metrics(&[hit, miss]).unwrap();
        assert_eq!((m.cp, m.fcp), (0.5, 0.5));
        assert!((m.dc - 0.3).abs() < 1e-15);
        let m = sim_metrics(&[none, none]).unwrap();
        assert_eq!((m.cp, m.fcp, m.dc), (0.0, 0.0, 0.0));
        assert!(sim_metrics(&[]).is_err());
    }

    #[test]
    fn local_test_rejects_shifted_coefficient_only() {
        let g1 = gaussian_group(1, 30, 4, 0.0, 31);
        let mut g2 = gaussian_group(2, 30, 4, 0.0, 32);
        g2.scores.column_mut(2).add_scalar_mut(5.0);
        let r = local_test(&g1, &g2, 0.05, 999, 9).unwrap();
        assert!(r.rejected.contains(&2));
        assert!(r.adjusted.iter().zip(&r.raw).all(|(a, p)| a >= p));
        assert!(local_test(&g1, &g2, 1.5, 999, 9).is_err());
    }
}
