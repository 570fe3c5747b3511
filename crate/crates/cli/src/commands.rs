use std::path::Path;

use nalgebra::DMatrix;
use serde::Serialize;
use serde_json::Value;

use ccrr_core::experiments::{
    rank_bound, run_detection, run_error_curves, run_timing, s_update_slopes, DetectionSettings,
    ErrorCurveSettings, Scale, TimingSettings,
};
use ccrr_core::fit::{embed as embed_subject, fit as fit_model, FitConfig, ReducedRankModel, Sparsity};
use ccrr_core::geometry::{BasisOperators, SphereId, SplineBasisSystem};
use ccrr_core::inference::{build_cover, local_test, mmd_test, split_groups, MmdResult};
use ccrr_core::io::{
    fmt_f64, read_dataset, read_model, write_cover_csv, write_dataset, write_model, write_report,
    write_table, write_tensor, write_text, StoredDataset, StoredModel, TensorFile,
};
use ccrr_core::synthetic::{build_operators, gen_rank1_population, gen_two_group, Sim61Config, Sim63Config};

use crate::config::resolve;
use crate::svg::{Plot, Series};
use crate::{
    CliError, CliResult, EmbedArgs, FitArgs, ReproduceArgs, Scenario, SimulateArgs, Study, TestArgs,
};

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn seed_flag(seed: Option<u64>) -> Vec<(&'static str, Value)> {
    seed.map(|s| vec![("seed", Value::from(s))]).unwrap_or_default()
}

fn to_json<T: Serialize>(v: &T) -> CliResult<Value> {
    serde_json::to_value(v).map_err(|e| usage(format!("cannot encode configuration: {e}")))
}

pub fn simulate(args: &SimulateArgs) -> CliResult<()> {
    let flags = seed_flag(args.seed);
    match args.scenario {
        Scenario::Rank1 => {
            let cfg: Sim61Config = resolve(&Sim61Config::default(), &args.overrides, flags)?;
            cfg.validate()?;
            let ops = build_operators(cfg.basis_vertices, cfg.grid_subdivision)?;
            let data = gen_rank1_population(&cfg, &ops)?;
            write_dataset(&args.out, "rank1", to_json(&cfg)?, &data, &ops.basis, &ops.grid)?;
        }
        Scenario::Twogroup => {
            let cfg: Sim63Config = resolve(&Sim63Config::default(), &args.overrides, flags)?;
            cfg.validate()?;
            let ops = build_operators(cfg.basis_vertices, cfg.grid_subdivision)?;
            let data = gen_two_group(&cfg, &ops)?;
            write_dataset(&args.out, "twogroup", to_json(&cfg)?, &data, &ops.basis, &ops.grid)?;
        }
    }
    Ok(())
}

fn parse_sparsity(raw: &str) -> CliResult<Sparsity> {
    match raw {
        "none" => Ok(Sparsity::None),
        "auto" => Ok(Sparsity::Auto),
        n => n
            .parse()
            .map(Sparsity::Fixed)
            .map_err(|_| usage(format!("--sparsity expects none, auto or a count, got {n:?}"))),
    }
}

fn same_basis(a: &SplineBasisSystem, b: &SplineBasisSystem) -> bool {
    SphereId::BOTH.iter().all(|&s| {
        let (ta, tb) = (a.triangulation(s), b.triangulation(s));
        ta.vertices() == tb.vertices() && ta.faces() == tb.faces()
    })
}

fn check_geometry(model: &StoredModel, data: &StoredDataset) -> CliResult<()> {
    if model.grid != data.grid || !same_basis(&model.basis, &data.basis) {
        return Err(usage("model and dataset were built on different grids or bases"));
    }
    Ok(())
}

fn trace_rows(model: &ReducedRankModel) -> (Vec<Vec<String>>, Vec<Vec<String>>) {
    let mut summary = Vec::new();
    let mut trace = Vec::new();
    for (k, d) in model.diagnostics.iter().enumerate() {
        summary.push(vec![
            (k + 1).to_string(),
            d.iterations.to_string(),
            d.converged.to_string(),
            d.threshold.map(fmt_f64).unwrap_or_default(),
            d.support.to_string(),
            fmt_f64(d.residual_norm_sq),
        ]);
        for (t, obj) in d.objective_trace.iter().enumerate() {
            trace.push(vec![(k + 1).to_string(), (t + 1).to_string(), fmt_f64(*obj)]);
        }
    }
    (summary, trace)
}

pub fn fit(args: &FitArgs) -> CliResult<()> {
    let mut flags = seed_flag(args.seed);
    if let Some(k) = args.k {
        flags.push(("k", Value::from(k)));
    }
    if let Some(a) = args.alpha1 {
        flags.push(("alpha1", Value::from(a)));
    }
    if let Some(s) = &args.sparsity {
        flags.push(("sparsity", to_json(&parse_sparsity(s)?)?));
    }
    let cfg: FitConfig = resolve(&FitConfig::default(), &args.overrides, flags)?;
    let data = read_dataset(&args.data)?;
    let ops = BasisOperators::build(data.basis.clone(), data.grid.clone())?;
    cfg.validate(ops.m())?;
    let model = fit_model(&data.y, &ops, &cfg)?;
    write_model(&args.out, &model, &ops.basis, &ops.grid)?;
    let (summary, trace) = trace_rows(&model);
    write_table(
        &args.out.join("diagnostics.csv"),
        &["component", "iterations", "converged", "threshold", "support", "residual_norm_sq"],
        &summary,
    )?;
    write_table(&args.out.join("objective_trace.csv"), &["component", "iteration", "objective"], &trace)?;
    Ok(())
}

fn load_pair(model: &Path, data: &Path) -> CliResult<(StoredModel, StoredDataset, BasisOperators)> {
    let model = read_model(model)?;
    let data = read_dataset(data)?;
    check_geometry(&model, &data)?;
    let ops = BasisOperators::build(model.basis.clone(), model.grid.clone())?;
    Ok((model, data, ops))
}

pub fn embed(args: &EmbedArgs) -> CliResult<()> {
    let (stored, data, ops) = load_pair(&args.model, &args.data)?;
    let model = &stored.model;
    let mut scores = DMatrix::zeros(data.y.len(), model.k());
    for (i, y) in data.y.iter().enumerate() {
        let s = embed_subject(y, model, &ops)?;
        scores.row_mut(i).copy_from(&s.transpose());
    }
    std::fs::create_dir_all(&args.out).map_err(|e| usage(format!("cannot create {}: {e}", args.out.display())))?;
    write_tensor(&args.out.join("scores.ccrt"), &TensorFile::from_matrix(&scores))?;
    let header: Vec<String> = std::iter::once("subject".to_string())
        .chain((1..=model.k()).map(|k| format!("s{k}")))
        .collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows: Vec<Vec<String>> = (0..scores.nrows())
        .map(|i| std::iter::once(i.to_string()).chain(scores.row(i).iter().map(|&x| fmt_f64(x))).collect())
        .collect();
    write_table(&args.out.join("scores.csv"), &header, &rows)?;
    Ok(())
}

fn groups(args: &TestArgs) -> CliResult<(StoredModel, StoredDataset)> {
    let model = read_model(&args.model)?;
    let data = read_dataset(&args.data)?;
    check_geometry(&model, &data)?;
    if data.manifest.labels.len() != model.model.n_subjects() {
        return Err(usage(format!(
            "dataset has {} labeled subjects but the model was fitted to {}",
            data.manifest.labels.len(),
            model.model.n_subjects()
        )));
    }
    std::fs::create_dir_all(&args.out).map_err(|e| usage(format!("cannot create {}: {e}", args.out.display())))?;
    Ok((model, data))
}

#[derive(Serialize)]
struct GlobalReport {
    test: &'static str,
    #[serde(flatten)]
    result: MmdResult,
    seed: u64,
    group_sizes: [usize; 2],
}

pub fn test_global(args: &TestArgs) -> CliResult<()> {
    let (stored, data) = groups(args)?;
    let (g1, g2) = split_groups(&stored.model.s, &data.manifest.labels)?;
    let result = mmd_test(&g1, &g2, args.permutations, args.seed)?;
    let report = GlobalReport {
        test: "mmd",
        result,
        seed: args.seed,
        group_sizes: [g1.n(), g2.n()],
    };
    write_report(&args.out.join("report.json"), &report)?;
    Ok(())
}

#[derive(Serialize)]
struct LocalReport {
    test: &'static str,
    #[serde(flatten)]
    result: ccrr_core::inference::LocalTestResult,
    domain_coverage: f64,
    /// Whether the cover contains the simulated effect center, when known.
    covers_center: Option<bool>,
}

pub fn test_local(args: &TestArgs) -> CliResult<()> {
    let (stored, data) = groups(args)?;
    let (g1, g2) = split_groups(&stored.model.s, &data.manifest.labels)?;
    let result = local_test(&g1, &g2, args.alpha, args.permutations, args.seed)?;
    let cover = build_cover(&result, &stored.model, &stored.basis)?;
    let covers_center = data.center_points().map(|truth| cover.outcome(&stored.basis, &truth).covers_truth);
    write_cover_csv(&args.out.join("cover.csv"), &cover)?;
    let report = LocalReport {
        test: "local",
        domain_coverage: cover.domain_coverage,
        result,
        covers_center,
    };
    write_report(&args.out.join("report.json"), &report)?;
    Ok(())
}

fn write_svg(path: &Path, plot: &Plot) -> CliResult<()> {
    Ok(write_text(path, &plot.render())?)
}

fn distinct<T: PartialOrd + Copy>(items: impl Iterator<Item = T>) -> Vec<T> {
    let mut v: Vec<T> = Vec::new();
    for x in items {
        if !v.contains(&x) {
            v.push(x);
        }
    }
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v
}

pub fn reproduce(args: &ReproduceArgs) -> CliResult<()> {
    let scale: Scale = args.scale.into();
    let flags = seed_flag(args.seed);
    std::fs::create_dir_all(&args.out).map_err(|e| usage(format!("cannot create {}: {e}", args.out.display())))?;
    match args.study {
        Study::Sim61 => {
            let settings: ErrorCurveSettings = resolve(&ErrorCurveSettings::for_scale(scale), &args.overrides, flags)?;
            write_report(&args.out.join("settings.json"), &settings)?;
            let rows = run_error_curves(&settings)?;
            let table: Vec<Vec<String>> = rows
                .iter()
                .map(|r| vec![r.k.to_string(), r.n.to_string(), fmt_f64(r.train_mse), fmt_f64(r.test_mse)])
                .collect();
            write_table(&args.out.join("error_curves.csv"), &["K", "N", "train_mse", "test_mse"], &table)?;
            let bound = rank_bound(&rows);
            let mut series = Vec::new();
            for n in distinct(rows.iter().map(|r| r.n)) {
                let pick = |f: &dyn Fn(usize) -> f64| -> Vec<(f64, f64)> {
                    rows.iter()
                        .enumerate()
                        .filter(|(_, r)| r.n == n)
                        .map(|(i, r)| (r.k as f64, f(i)))
                        .collect()
                };
                series.push(Series { name: format!("train N={n}"), points: pick(&|i| rows[i].train_mse), dashed: false, color: None });
                series.push(Series { name: format!("test N={n}"), points: pick(&|i| rows[i].test_mse), dashed: true, color: None });
                series.push(Series { name: format!("2·MSE(1)/(K+1), N={n}"), points: pick(&|i| bound[i]), dashed: true, color: Some("black") });
            }
            let plot = Plot {
                title: "Reconstruction error against rank".into(),
                x_label: "K".into(),
                y_label: "MSE".into(),
                log_x: false,
                log_y: true,
                series,
            };
            write_svg(&args.out.join("error_curves.svg"), &plot)
        }
        Study::Sim62 => {
            let settings: TimingSettings = resolve(&TimingSettings::for_scale(scale), &args.overrides, flags)?;
            write_report(&args.out.join("settings.json"), &settings)?;
            let rows = run_timing(&settings)?;
            let table: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    vec![
                        r.m.to_string(),
                        r.n.to_string(),
                        r.instance.to_string(),
                        r.iterations.to_string(),
                        fmt_f64(r.c_update_seconds),
                        fmt_f64(r.s_update_seconds),
                    ]
                })
                .collect();
            write_table(
                &args.out.join("timing.csv"),
                &["M", "N", "instance", "iterations", "c_update_seconds", "s_update_seconds"],
                &table,
            )?;
            let ms = distinct(rows.iter().map(|r| r.m));
            let ns = distinct(rows.iter().map(|r| r.n));
            let mean = |m: usize, n: usize, f: fn(&ccrr_core::experiments::TimingRow) -> f64| {
                let sel: Vec<f64> = rows.iter().filter(|r| r.m == m && r.n == n).map(f).collect();
                sel.iter().sum::<f64>() / sel.len() as f64
            };
            let mut by_n = Vec::new();
            for &m in &ms {
                by_n.push(Series { name: format!("c update, M={m}"), points: ns.iter().map(|&n| (n as f64, mean(m, n, |r| r.c_update_seconds))).collect(), dashed: false, color: None });
                by_n.push(Series { name: format!("s update, M={m}"), points: ns.iter().map(|&n| (n as f64, mean(m, n, |r| r.s_update_seconds))).collect(), dashed: true, color: None });
            }
            let mut by_m = Vec::new();
            for &n in &ns {
                by_m.push(Series { name: format!("c update, N={n}"), points: ms.iter().map(|&m| (m as f64, mean(m, n, |r| r.c_update_seconds))).collect(), dashed: false, color: None });
                by_m.push(Series { name: format!("s update, N={n}"), points: ms.iter().map(|&m| (m as f64, mean(m, n, |r| r.s_update_seconds))).collect(), dashed: true, color: None });
            }
            let (slope_n, slope_m) = s_update_slopes(&rows);
            write_svg(
                &args.out.join("timing_n.svg"),
                &Plot { title: format!("Seconds per update against N (s slope {slope_n:.2})"), x_label: "N".into(), y_label: "seconds".into(), log_x: true, log_y: true, series: by_n },
            )?;
            write_svg(
                &args.out.join("timing_m.svg"),
                &Plot { title: format!("Seconds per update against M (s slope {slope_m:.2})"), x_label: "M".into(), y_label: "seconds".into(), log_x: true, log_y: true, series: by_m },
            )
        }
        Study::Sim63 => {
            let settings: DetectionSettings = resolve(&DetectionSettings::for_scale(scale), &args.overrides, flags)?;
            write_report(&args.out.join("settings.json"), &settings)?;
            let rows = run_detection(&settings)?;
            let table: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    vec![
                        fmt_f64(r.v0),
                        r.n.to_string(),
                        r.replicates.to_string(),
                        fmt_f64(r.metrics.cp),
                        fmt_f64(r.metrics.fcp),
                        fmt_f64(r.metrics.dc),
                    ]
                })
                .collect();
            write_table(&args.out.join("detection.csv"), &["v0", "N", "replicates", "CP", "FCP", "DC"], &table)?;
            let series = distinct(rows.iter().map(|r| r.n))
                .into_iter()
                .map(|n| Series {
                    name: format!("CP, N={n}"),
                    points: rows.iter().filter(|r| r.n == n).map(|r| (r.v0, r.metrics.cp)).collect(),
                    dashed: false,
                    color: None,
                })
                .collect();
            write_svg(
                &args.out.join("detection.svg"),
                &Plot { title: "Coverage of the differential pair".into(), x_label: "v0".into(), y_label: "CP".into(), log_x: false, log_y: false, series },
            )
        }
    }
}
