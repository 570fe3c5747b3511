use super::*;
use crate::geometry::{fibonacci_sphere, icosphere, spherical_delaunay, GridOmega, SplineBasisSystem};
use crate::linalg::{frobenius_inner, matricize};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

fn ops(md: usize, grid_sub: u32) -> BasisOperators {
    let tri = spherical_delaunay(fibonacci_sphere(md)).unwrap();
    let basis = SplineBasisSystem::new(tri.clone(), tri).unwrap();
    let v = icosphere(grid_sub).unwrap();
    BasisOperators::build(basis, GridOmega::new(&v, &v).unwrap()).unwrap()
}

/// Generalized eigenvectors of (ΦᵀΦ, J): J-orthonormal and with mutually
/// orthogonal grid evaluations.
fn discrete_orthogonal_basis(ops: &BasisOperators) -> DMatrix<f64> {
    let l = ops.mass.clone().cholesky().unwrap().l();
    let li = l.clone().try_inverse().unwrap();
    let gram = ops.phi.transpose() * &ops.phi;
    let b = &li * gram * li.transpose();
    let eig = ((&b + b.transpose()) * 0.5).symmetric_eigen();
    li.transpose() * eig.eigenvectors
}

fn in_span_data(ops: &BasisOperators, truth: &DMatrix<f64>, n: usize, sds: &[f64], seed: u64) -> Vec<DMatrix<f64>> {
    let mut rng = crate::rng::stream(seed, &[]);
    (0..n)
        .map(|_| {
            let mut y = DMatrix::zeros(ops.n(), ops.n());
            for (k, sd) in sds.iter().enumerate() {
                let xi = &ops.phi * truth.column(k);
                let z: f64 = rng.sample(StandardNormal);
                y += &xi * xi.transpose() * (sd * z);
            }
            y
        })
        .collect()
}

fn pick_truth(ops: &BasisOperators, idx: &[usize]) -> DMatrix<f64> {
    let all = discrete_orthogonal_basis(ops);
    DMatrix::from_columns(&idx.iter().map(|&i| all.column(i).into_owned()).collect::<Vec<_>>())
}

fn angle(a: &DVector<f64>, b: &DVector<f64>, j: &DMatrix<f64>) -> f64 {
    let ab = (a.transpose() * j * b)[0].abs();
    let aa = (a.transpose() * j * a)[0];
    let bb = (b.transpose() * j * b)[0];
    (ab / (aa * bb).sqrt()).clamp(-1.0, 1.0).acos()
}

#[test]
fn square_basis_transform_is_centering() {
    let mut rng = crate::rng::stream(1, &[]);
    let slices: Vec<DMatrix<f64>> = (0..4)
        .map(|_| {
            let a = DMatrix::from_fn(6, 6, |_, _| rng.random::<f64>());
            &a + a.transpose()
        })
        .collect();
    let (ybar, g) = transform_input(&slices, &DMatrix::identity(6, 6)).unwrap();
    for (i, y) in slices.iter().enumerate() {
        assert!((g.slice(i) - (y - &ybar)).amax() < 1e-15);
    }
}

#[test]
fn transformed_slices_sum_to_zero_and_preserve_inner_products() {
    let ops = ops(12, 1);
    let truth = pick_truth(&ops, &[0, 1]);
    let mut slices = in_span_data(&ops, &truth, 5, &[1.0, 0.5], 2);
    // add an out-of-span perturbation
    let mut rng = crate::rng::stream(3, &[]);
    for y in slices.iter_mut() {
        let e = DMatrix::from_fn(ops.n(), ops.n(), |_, _| rng.random::<f64>() - 0.5);
        *y += &e + e.transpose();
    }
    let (ybar, g) = transform_input(&slices, &ops.u).unwrap();
    let mut sum = DMatrix::zeros(ops.m(), ops.m());
    for i in 0..5 {
        sum += g.slice(i);
    }
    assert!(sum.amax() < 1e-10);
    for trial in 0..10 {
        let c = DVector::from_fn(ops.m(), |_, _| rng.random::<f64>() - 0.5);
        let xi = &ops.phi * &c;
        let ct = ops.dvt() * &c;
        let i = trial % 5;
        let lhs = frobenius_inner(&(&slices[i] - &ybar), &(&xi * xi.transpose()));
        let rhs = (ct.transpose() * g.slice(i) * &ct)[0];
        assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0));
    }
}

#[test]
fn grid_mismatch_is_rejected() {
    let ops = ops(12, 1);
    let bad = vec![DMatrix::zeros(5, 5)];
    assert!(transform_input(&bad, &ops.u).is_err());
}

#[test]
fn init_recovers_rank_one_directions() {
    let ops = ops(12, 1);
    let m = ops.m();
    let a = DVector::from_fn(m, |i, _| ((i * 7 % 11) as f64 - 5.0) / 5.0);
    let sigma = DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0]);
    let slices: Vec<DMatrix<f64>> = sigma.iter().map(|s| &a * a.transpose() * *s).collect();
    let g = Tensor3::from_slices(&slices).unwrap();
    let (c0, s0) = init_rank1(&g, &ops).unwrap();
    let ct = ops.dvt() * &c0;
    let cos_c = ct.dot(&a).abs() / (ct.norm() * a.norm());
    let cos_s = s0.dot(&sigma).abs() / (s0.norm() * sigma.norm());
    assert!((1.0 - cos_c).abs() < 1e-12 && cos_c.acos() < 1e-8 || cos_c > 1.0 - 1e-15);
    assert!(cos_s > 1.0 - 1e-15);
    // sign convention: the largest entry of s⁰ is positive
    let imax = s0.iamax();
    assert!(s0[imax] > 0.0);
    // brute-force SVD of the mode-3 unfolding agrees up to sign
    let svd = matricize(&g, 3).unwrap().svd(true, false);
    let u0 = svd.u.unwrap().column(0).into_owned();
    assert!((u0.dot(&s0).abs() - 1.0).abs() < 1e-12);
}

#[test]
fn zero_tensor_cannot_be_initialized() {
    let ops = ops(12, 1);
    let g = Tensor3::zeros([ops.m(), ops.m(), 3]);
    assert!(matches!(init_rank1(&g, &ops), Err(Error::Degenerate(_))));
}

fn rank1_tensor(ops: &BasisOperators, c: &DVector<f64>, sigma: &[f64]) -> Tensor3 {
    let ct = ops.dvt() * c;
    let slices: Vec<DMatrix<f64>> = sigma.iter().map(|s| &ct * ct.transpose() * *s).collect();
    Tensor3::from_slices(&slices).unwrap()
}

#[test]
fn update_c_finds_generating_direction() {
    let ops = ops(12, 1);
    let truth = pick_truth(&ops, &[3]);
    let c_true = truth.column(0).into_owned();
    let sigma = [1.0, -0.5, 2.0, 0.3];
    let g = rank1_tensor(&ops, &c_true, &sigma);
    let s = DVector::from_row_slice(&sigma);
    let eye = DMatrix::identity(ops.m(), ops.m());
    let upd = update_c(&g, &s, &eye, &ops, 0.0, Sparsity::None, None).unwrap();
    assert!(angle(&upd.c, &c_true, &ops.mass) < 1e-6);
    // dense oracle on the assembled matrix
    let a = ops.dvt().transpose() * mode3_vector(&g, &s).unwrap() * ops.dvt();
    let l = ops.mass.clone().cholesky().unwrap().l();
    let li = l.try_inverse().unwrap();
    let b = &li * &a * li.transpose();
    let top = ((&b + b.transpose()) * 0.5).symmetric_eigen().eigenvalues.max();
    assert!((top - upd.value).abs() < 1e-8 * top.abs());
}

#[test]
fn update_c_respects_previous_components() {
    let ops = ops(12, 1);
    let mut rng = crate::rng::stream(5, &[]);
    let prev = DMatrix::from_fn(ops.m(), 3, |_, _| rng.random::<f64>() - 0.5);
    let complement = coefficient_complement(&prev, &ops.mass).unwrap();
    let slices: Vec<DMatrix<f64>> = (0..6)
        .map(|_| {
            let a = DMatrix::from_fn(ops.m(), ops.m(), |_, _| rng.random::<f64>() - 0.5);
            &a + a.transpose()
        })
        .collect();
    let g = Tensor3::from_slices(&slices).unwrap();
    let s = DVector::from_fn(6, |_, _| rng.random::<f64>() - 0.5);
    let upd = update_c(&g, &s, &complement, &ops, 0.0, Sparsity::None, None).unwrap();
    assert!(((upd.c.transpose() * &ops.mass * &upd.c)[0] - 1.0).abs() < 1e-8);
    let cross = prev.transpose() * &ops.mass * &upd.c;
    assert!(cross.amax() < 1e-8);
}

#[test]
fn update_c_with_negative_spectrum_stays_in_complement() {
    let ops = ops(12, 1);
    let truth = pick_truth(&ops, &[0, 1]);
    let prev = truth.columns(0, 1).into_owned();
    let complement = coefficient_complement(&prev, &ops.mass).unwrap();
    // G ×₃ s negative definite: every admissible direction has negative value
    let c = truth.column(1).into_owned();
    let g = rank1_tensor(&ops, &c, &[-1.0, -2.0]);
    let s = DVector::from_vec(vec![1.0, 1.0]);
    let upd = update_c(&g, &s, &complement, &ops, 1.0, Sparsity::None, None).unwrap();
    assert!((prev.transpose() * &ops.mass * &upd.c).amax() < 1e-8);
    assert!(upd.value < 0.0);
}

#[test]
fn large_roughness_weight_gives_smoother_solution() {
    let ops = ops(12, 1);
    let mut rng = crate::rng::stream(9, &[]);
    let slices: Vec<DMatrix<f64>> = (0..5)
        .map(|_| {
            let a = DMatrix::from_fn(ops.m(), ops.m(), |_, _| rng.random::<f64>() - 0.5);
            &a + a.transpose()
        })
        .collect();
    let g = Tensor3::from_slices(&slices).unwrap();
    let s = DVector::from_fn(5, |_, _| rng.random::<f64>() - 0.5);
    let eye = DMatrix::identity(ops.m(), ops.m());
    let rough = update_c(&g, &s, &eye, &ops, 0.0, Sparsity::None, None).unwrap().c;
    let smooth = update_c(&g, &s, &eye, &ops, 1e6, Sparsity::None, None).unwrap().c;
    let pen = |c: &DVector<f64>| (c.transpose() * &ops.penalty * c)[0];
    assert!(pen(&smooth) < pen(&rough));
}

#[test]
fn sparse_update_is_normalized_and_sparse() {
    let ops = ops(12, 1);
    let truth = pick_truth(&ops, &[2]);
    let g = rank1_tensor(&ops, &truth.column(0).into_owned(), &[1.0, 2.0, -1.0]);
    let s = DVector::from_vec(vec![1.0, 2.0, -1.0]);
    let eye = DMatrix::identity(ops.m(), ops.m());
    let upd = update_c(&g, &s, &eye, &ops, 0.0, Sparsity::Fixed(5), None).unwrap();
    assert_eq!(upd.c.iter().filter(|x| **x != 0.0).count(), 5);
    assert!(((upd.c.transpose() * &ops.mass * &upd.c)[0] - 1.0).abs() < 1e-10);
}

#[test]
fn update_s_examples() {
    let ops = ops(12, 1);
    let mut rng = crate::rng::stream(4, &[]);
    let slices: Vec<DMatrix<f64>> = (0..4)
        .map(|_| {
            let a = DMatrix::from_fn(ops.m(), ops.m(), |_, _| rng.random::<f64>() - 0.5);
            &a + a.transpose()
        })
        .collect();
    let g = Tensor3::from_slices(&slices).unwrap();
    assert_eq!(update_s(&g, &DVector::zeros(ops.m()), &ops).unwrap(), DVector::zeros(4));
    let c = DVector::from_fn(ops.m(), |_, _| rng.random::<f64>() - 0.5);
    let mut g2 = g.clone();
    g2.scale(2.0);
    let s1 = update_s(&g, &c, &ops).unwrap();
    let s2 = update_s(&g2, &c, &ops).unwrap();
    assert!((s2 - &s1 * 2.0).amax() < 1e-12 * s1.amax());
    let sigma = [0.5, -1.5, 2.0];
    let ct = ops.dvt() * &c;
    let g = rank1_tensor(&ops, &c, &sigma);
    let s = update_s(&g, &c, &ops).unwrap();
    for (i, sig) in sigma.iter().enumerate() {
        let expected = sig * ct.norm_squared().powi(2);
        assert!((s[i] - expected).abs() < 1e-10 * expected.abs());
    }
}

#[test]
fn projector_properties() {
    let ops = ops(12, 1);
    let m = ops.m();
    assert_eq!(projector(&DMatrix::zeros(m, 0), &ops).unwrap(), DMatrix::zeros(m, m));
    let mut rng = crate::rng::stream(6, &[]);
    let c = DMatrix::from_fn(m, 3, |_, _| rng.random::<f64>() - 0.5);
    let p = projector(&c, &ops).unwrap();
    assert!((&p * &p - &p).amax() < 1e-10 * p.amax().max(1.0));
    let annihilated = (DMatrix::identity(m, m) - &p) * ops.dvt() * &c;
    assert!(annihilated.amax() < 1e-10);
    // literal formula
    let j = &ops.mass;
    let gram = c.transpose() * j * &c;
    let direct = ops.dvt() * &c * gram.try_inverse().unwrap() * c.transpose() * j * ops.vdinv();
    assert!((direct - &p).amax() < 1e-9);
}

#[test]
fn duplicate_components_make_the_projector_singular() {
    let ops = ops(12, 1);
    let v = DVector::from_fn(ops.m(), |i, _| i as f64);
    let c = DMatrix::from_columns(&[v.clone(), v]);
    assert!(matches!(projector(&c, &ops), Err(Error::Numeric(_))));
}

#[test]
fn fit_recovers_exact_rank_three() {
    let ops = ops(12, 2);
    let truth = pick_truth(&ops, &[1, 4, 9]);
    let slices = in_span_data(&ops, &truth, 12, &[3.0, 2.0, 1.0], 10);
    let cfg = FitConfig { k: 3, ..FitConfig::default() };
    let model = fit(&slices, &ops, &cfg).unwrap();
    let last = model.diagnostics.last().unwrap().residual_norm_sq;
    assert!(last / model.initial_norm_sq <= 1e-3);
    let ctjc = model.c.transpose() * &ops.mass * &model.c;
    assert!((ctjc - DMatrix::<f64>::identity(3, 3)).amax() <= 1e-8);
    for k in 0..3 {
        let fitted = model.c.column(k).into_owned();
        let best = (0..3)
            .map(|t| angle(&fitted, &truth.column(t).into_owned(), &ops.mass))
            .fold(f64::INFINITY, f64::min);
        assert!(best < 1e-3, "component {k}: angle {best}");
    }
    for d in &model.diagnostics {
        for w in d.objective_trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-10 * w[0].abs());
        }
    }
    let res: Vec<f64> = model.diagnostics.iter().map(|d| d.residual_norm_sq).collect();
    assert!(res.windows(2).all(|w| w[1] <= w[0]));
    assert!(model.variance_explained_curve()[2] >= 0.999);
}

#[test]
fn fit_is_deterministic() {
    let ops = ops(12, 1);
    let truth = pick_truth(&ops, &[0, 2]);
    let slices = in_span_data(&ops, &truth, 8, &[1.0, 0.7], 3);
    let cfg = FitConfig { k: 2, ..FitConfig::default() };
    let a = fit(&slices, &ops, &cfg).unwrap();
    let b = fit(&slices, &ops, &cfg).unwrap();
    assert_eq!(a, b);
}

#[test]
fn fit_rejects_too_many_components() {
    let ops = ops(12, 1);
    let truth = pick_truth(&ops, &[0]);
    let slices = in_span_data(&ops, &truth, 4, &[1.0], 3);
    let cfg = FitConfig { k: ops.m() + 1, ..FitConfig::default() };
    assert!(matches!(fit(&slices, &ops, &cfg), Err(Error::Argument(_))));
}

#[test]
fn fit_stops_early_on_exhausted_residual() {
    let ops = ops(12, 1);
    let truth = pick_truth(&ops, &[0]);
    let slices = in_span_data(&ops, &truth, 6, &[1.0], 8);
    let cfg = FitConfig { k: 4, ..FitConfig::default() };
    let model = fit(&slices, &ops, &cfg).unwrap();
    assert!(model.stopped_early);
    assert_eq!(model.k(), 1);
}

#[test]
fn embedding_properties() {
    let ops = ops(12, 2);
    let truth = pick_truth(&ops, &[1, 4, 9]);
    let slices = in_span_data(&ops, &truth, 10, &[3.0, 2.0, 1.0], 21);
    let model = fit(&slices, &ops, &FitConfig { k: 3, ..FitConfig::default() }).unwrap();
    assert!(embed(&model.ybar, &model, &ops).unwrap().amax() == 0.0);
    for i in [0, 4, 9] {
        let s = embed(&slices[i], &model, &ops).unwrap();
        assert!((s.transpose() - model.s.row(i)).amax() < 1e-8);
        // Parseval against the discrete norm of the centered data
        let centered = &slices[i] - &model.ybar;
        let norm = model.weight * centered.norm_squared();
        assert!((s.norm_squared() - norm).abs() <= 1e-6 * norm);
        let recon = reconstruct(&model, &ops, &s).unwrap();
        assert!((&recon - recon.transpose()).amax() <= 1e-12 * recon.amax());
        let rel = (&slices[i] - &recon).norm() / centered.norm();
        assert!(rel <= 1e-3);
        let by_index = reconstruct_subject(&model, &ops, i).unwrap();
        assert!((by_index - recon).amax() < 1e-8 * slices[i].amax());
    }
    assert_eq!(reconstruct(&model, &ops, &DVector::zeros(3)).unwrap(), model.ybar);
    assert!(reconstruct_subject(&model, &ops, 10).is_err());
    assert!(embed(&DMatrix::zeros(3, 3), &model, &ops).is_err());
}

#[test]
fn sparse_fit_keeps_unit_diagonal() {
    let ops = ops(18, 2);
    let truth = pick_truth(&ops, &[0, 3, 7]);
    let slices = in_span_data(&ops, &truth, 10, &[2.0, 1.5, 1.0], 2);
    for sparsity in [Sparsity::Fixed(8), Sparsity::Auto] {
        let cfg = FitConfig { k: 3, sparsity, ..FitConfig::default() };
        let model = fit(&slices, &ops, &cfg).unwrap();
        let ctjc = model.c.transpose() * &ops.mass * &model.c;
        for k in 0..model.k() {
            assert!((ctjc[(k, k)] - 1.0).abs() < 1e-8);
        }
        if sparsity == Sparsity::Auto {
            assert!(model.diagnostics.iter().all(|d| d.threshold.is_some()));
        }
    }
}

#[test]
fn variance_explained_examples() {
    let mut rng = crate::rng::stream(8, &[]);
    let g0 = Tensor3::from_vec([2, 2, 2], (0..8).map(|_| rng.random::<f64>()).collect()).unwrap();
    assert_eq!(variance_explained(&g0, &g0).unwrap(), 0.0);
    let zero = Tensor3::zeros([2, 2, 2]);
    assert_eq!(variance_explained(&g0, &zero).unwrap(), 1.0);
    assert!(variance_explained(&zero, &zero).is_err());
}

#[test]
fn variance_explained_is_monotone_in_k() {
    let ops = ops(12, 1);
    let mut rng = crate::rng::stream(12, &[]);
    let slices: Vec<DMatrix<f64>> = (0..8)
        .map(|_| {
            let a = DMatrix::from_fn(ops.n(), ops.n(), |_, _| rng.random::<f64>() - 0.5);
            &a + a.transpose()
        })
        .collect();
    let model = fit(&slices, &ops, &FitConfig { k: 5, ..FitConfig::default() }).unwrap();
    let curve = model.variance_explained_curve();
    assert!(curve.windows(2).all(|w| w[1] >= w[0]));
}

#[test]
fn marginal_criterion_examples() {
    let mut rng = crate::rng::stream(13, &[]);
    let n = 6;
    let slices: Vec<DMatrix<f64>> = (0..3)
        .map(|_| {
            let a = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() - 0.5);
            &a + a.transpose()
        })
        .collect();
    let y = Tensor3::from_slices(&slices).unwrap();
    let q = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>()).qr().q();
    assert!((marginal_rank_criterion(&y, &q).unwrap() - 1.0).abs() < 1e-12);
    let mut prev = 0.0;
    for cols in 1..=n {
        let u = q.columns(0, cols).into_owned();
        let frac = marginal_rank_criterion(&y, &u).unwrap();
        assert!(frac >= prev - 1e-15);
        // brute-force projection oracle
        let p = &u * u.transpose();
        let kept: f64 = slices.iter().map(|s| (&p * s * &p).norm_squared()).sum();
        let total: f64 = slices.iter().map(|s| s.norm_squared()).sum();
        assert!((frac - kept / total).abs() < 1e-10);
        prev = frac;
    }
    assert!(marginal_rank_criterion(&Tensor3::zeros([n, n, 2]), &q).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]
    #[test]
    fn deflation_never_increases_residual(seed in 0u64..1000) {
        let ops = ops(8, 0);
        let mut rng = crate::rng::stream(seed, &[]);
        let slices: Vec<DMatrix<f64>> = (0..5)
            .map(|_| {
                let a = DMatrix::from_fn(ops.n(), ops.n(), |_, _| rng.random::<f64>() - 0.5);
                &a + a.transpose()
            })
            .collect();
        let model = fit(&slices, &ops, &FitConfig { k: 4, ..FitConfig::default() }).unwrap();
        let mut prev = model.initial_norm_sq;
        for d in &model.diagnostics {
            prop_assert!(d.residual_norm_sq <= prev * (1.0 + 1e-12));
            prev = d.residual_norm_sq;
        }
    }
}

#[test]
fn residual_path_matches_training_deflation() {
    let ops = ops(12, 1);
    let truth = pick_truth(&ops, &[0, 2, 5]);
    let slices = in_span_data(&ops, &truth, 6, &[2.0, 1.0, 0.5], 17);
    let model = fit(&slices, &ops, &FitConfig { k: 3, ..FitConfig::default() }).unwrap();
    let (_, g0) = transform_input(&slices, &ops.u).unwrap();
    let mut total = vec![0.0; 3];
    for i in 0..6 {
        let path = embedding_residual_path(&g0.slice(i).into_owned(), &model, &ops).unwrap();
        let (_, r) = embed_transformed(&g0.slice(i).into_owned(), &model, &ops).unwrap();
        assert_eq!(path[2], r.norm_squared());
        for k in 0..3 {
            total[k] += path[k];
        }
    }
    for k in 0..3 {
        let expected = model.diagnostics[k].residual_norm_sq;
        assert!((total[k] - expected).abs() <= 1e-9 * model.initial_norm_sq);
    }
}
