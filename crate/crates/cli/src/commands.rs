use std::fs;
use std::path::{Path, PathBuf};

use copula_ot::clustering::{cluster_copulas, write_model, ClusterParams};
use copula_ot::copula::{
    pair_copulas, reference_copula, CopulaHistogram, PairCopula, TargetKind, TargetSpec,
};
use copula_ot::dependence::{tfdc_matrix, TfdcSpec};
use copula_ot::io::{
    load_csv, read_cop, render_cop, render_heatmap, render_matrix_csv, render_table_csv,
    write_atomic,
};
use copula_ot::power::{estimate_power, render_power_csv, tfdc_power_targets, Coefficient, LEVEL};
use copula_ot::synth::{Scenario, ScenarioSpec};
use copula_ot::transport::{
    distances_to, pairwise_distance_matrix, pairwise_divergence_matrix, GroundCost, SinkhornConfig,
};
use copula_ot::Error;
use serde_json::{json, Value};

use crate::args::{CoefficientKind, Command, ReferenceKind, ScenarioKind, SolverArgs};
use crate::Failure;

type Outcome = Result<(), Failure>;

const DEFAULT_M: usize = 20;

pub fn run(command: Command) -> Outcome {
    match command {
        Command::Copula { io, m, heatmaps } => {
            let table = load_csv(&io.input)?;
            let names = table.names().to_vec();
            let pairs = pair_copulas(&table, m)?;
            let mut files = Vec::new();
            let mut index = Vec::new();
            for p in &pairs {
                let stem = format!("pair_{}_{}", p.i, p.j);
                files.push((format!("{stem}.cop"), render_cop(&p.copula)));
                if heatmaps {
                    files.push((format!("{stem}.pgm"), render_heatmap(&p.copula)));
                }
                index.push(vec![
                    p.i.to_string(),
                    p.j.to_string(),
                    names[p.i].clone(),
                    names[p.j].clone(),
                    format!("{stem}.cop"),
                ]);
            }
            files.push((
                "pairs.csv".into(),
                render_table_csv(&["i", "j", "name_i", "name_j", "file"], index),
            ));
            let params = json!({ "m": m, "heatmaps": heatmaps });
            emit(&io.out, "copula", Some(&io.input), params, None, files)
        }
        Command::Dist { io, solver } => {
            let table = load_csv(&io.input)?;
            let m = solver.m.unwrap_or(DEFAULT_M);
            let (cost, cfg) = solver_setup(&solver, m)?;
            let pairs = pair_copulas(&table, m)?;
            let hists = copulas(&pairs);
            let matrix = if solver.debias {
                pairwise_divergence_matrix(&hists, &cost, &cfg)?
            } else {
                pairwise_distance_matrix(&hists, &cost, &cfg)?
            };
            let labels: Vec<String> = pairs
                .iter()
                .map(|p| format!("{}:{}", table.names()[p.i], table.names()[p.j]))
                .collect();
            let csv = render_matrix_csv(&labels, &matrix)?;
            let files = vec![("distance-matrix.csv".into(), csv)];
            emit(
                &io.out,
                "dist",
                Some(&io.input),
                solver_params(&solver, &cfg, m),
                None,
                files,
            )
        }
        Command::Cluster {
            io,
            solver,
            k,
            seed,
            max_rounds,
        } => {
            let table = load_csv(&io.input)?;
            let m = solver.m.unwrap_or(DEFAULT_M);
            let (cost, cfg) = solver_setup(&solver, m)?;
            let pairs = pair_copulas(&table, m)?;
            let params = ClusterParams {
                k,
                seed,
                max_rounds,
                debias: solver.debias,
            };
            let model = cluster_copulas(&copulas(&pairs), &cost, &cfg, &params)?;
            let labels: Vec<(String, String)> = pairs
                .iter()
                .map(|p| (table.names()[p.i].clone(), table.names()[p.j].clone()))
                .collect();
            ensure_dir(&io.out)?;
            write_model(&model, &labels, &io.out)?;
            let mut meta = solver_params(&solver, &cfg, m);
            meta["k"] = json!(k);
            meta["max_rounds"] = json!(max_rounds);
            meta["rounds"] = json!(model.objective_trace.len());
            meta["objective"] = json!(model.objective());
            emit(
                &io.out,
                "cluster",
                Some(&io.input),
                meta,
                Some(seed),
                Vec::new(),
            )
        }
        Command::Tfdc {
            io,
            solver,
            targets,
            forgets,
        } => {
            let table = load_csv(&io.input)?;
            let target_hists = read_all(&targets)?;
            let forget_hists = read_all(&forgets)?;
            let m = solver.m.unwrap_or(target_hists[0].m());
            let (cost, cfg) = solver_setup(&solver, m)?;
            let spec = TfdcSpec::new(target_hists, forget_hists, cost, cfg, solver.debias)?;
            let matrix = tfdc_matrix(&table, &spec)?;
            let csv = render_matrix_csv(table.names(), &matrix)?;
            let mut meta = solver_params(&solver, &cfg, m);
            meta["targets"] = paths_json(&targets);
            meta["forgets"] = paths_json(&forgets);
            let files = vec![("tfdc-matrix.csv".into(), csv)];
            emit(&io.out, "tfdc", Some(&io.input), meta, None, files)
        }
        Command::Query {
            io,
            solver,
            targets,
        } => {
            let table = load_csv(&io.input)?;
            let target_hists = read_all(&targets)?;
            let m = solver.m.unwrap_or(target_hists[0].m());
            let (cost, cfg) = solver_setup(&solver, m)?;
            let pairs = pair_copulas(&table, m)?;
            let hists = copulas(&pairs);
            // nearest target per pair; the first target wins ties
            let mut best: Vec<(f64, usize)> = vec![(f64::INFINITY, 0); hists.len()];
            for (t, target) in target_hists.iter().enumerate() {
                let d = distances_to(&hists, target, &cost, &cfg, solver.debias)?;
                for (b, v) in best.iter_mut().zip(d) {
                    if v < b.0 {
                        *b = (v, t);
                    }
                }
            }
            let mut order: Vec<usize> = (0..hists.len()).collect();
            order.sort_by(|&a, &b| best[a].0.total_cmp(&best[b].0));
            let names = table.names();
            let rows = order.iter().enumerate().map(|(rank, &h)| {
                vec![
                    (rank + 1).to_string(),
                    names[pairs[h].i].clone(),
                    names[pairs[h].j].clone(),
                    format!("{}", best[h].0),
                    file_stem(&targets[best[h].1]),
                ]
            });
            let csv = render_table_csv(&["rank", "pair_i", "pair_j", "distance", "target"], rows);
            let mut meta = solver_params(&solver, &cfg, m);
            meta["targets"] = paths_json(&targets);
            let files = vec![("query-ranking.csv".into(), csv)];
            emit(&io.out, "query", Some(&io.input), meta, None, files)
        }
        Command::Reference {
            kind,
            rho,
            m,
            name,
            out,
        } => {
            let target = match (kind, rho) {
                (ReferenceKind::Gaussian, Some(rho)) => TargetKind::Gaussian { rho },
                (ReferenceKind::Gaussian, None) => {
                    return Err(Failure::Usage("--kind gaussian needs --rho".into()))
                }
                (_, Some(_)) => {
                    return Err(Failure::Usage(
                        "--rho only applies to --kind gaussian".into(),
                    ))
                }
                (ReferenceKind::Upper, None) => TargetKind::Upper,
                (ReferenceKind::Lower, None) => TargetKind::Lower,
                (ReferenceKind::Independence, None) => TargetKind::Independence,
            };
            let h = reference_copula(&TargetSpec::new(target, m))?;
            let stem = name.unwrap_or_else(|| kind.to_string());
            let files = vec![
                (format!("{stem}.cop"), render_cop(&h)),
                (format!("{stem}.pgm"), render_heatmap(&h)),
            ];
            let params = json!({ "kind": kind.to_string(), "rho": rho, "m": m });
            emit(&out, "reference", None, params, None, files)
        }
        Command::Synth {
            scenario,
            a,
            offset,
            pattern,
            noise,
            rho,
            t,
            seed,
            out,
        } => {
            let need = |v: Option<f64>, flag: &str| {
                v.ok_or_else(|| Failure::Usage(format!("this scenario needs --{flag}")))
            };
            let kind = scenario;
            let scenario = match kind {
                ScenarioKind::Discontinuity => Scenario::Discontinuity { a: need(a, "a")? },
                ScenarioKind::Parabola => Scenario::NoisyParabola {
                    offset: need(offset, "offset")?,
                },
                ScenarioKind::Pattern => Scenario::PowerPattern {
                    pattern: pattern
                        .ok_or_else(|| Failure::Usage("this scenario needs --pattern".into()))?,
                    noise: need(noise, "noise")?,
                },
                ScenarioKind::Gaussian => Scenario::GaussianPair {
                    rho: need(rho, "rho")?,
                },
            };
            let (x, y) = ScenarioSpec { scenario, t, seed }.generate()?;
            let rows = x
                .iter()
                .zip(&y)
                .map(|(a, b)| vec![a.to_string(), b.to_string()]);
            let csv = render_table_csv(&["x", "y"], rows);
            let params = json!({
                "scenario": kind.to_string(),
                "a": a,
                "offset": offset,
                "pattern": pattern.map(|p| p.name()),
                "noise": noise,
                "rho": rho,
                "t": t,
            });
            emit(
                &out,
                "synth",
                None,
                params,
                Some(seed),
                vec![("synth.csv".into(), csv)],
            )
        }
        Command::Power {
            patterns,
            noise,
            coefficients,
            n_sims,
            sample_size,
            seed,
            tfdc_m,
            target_samples,
            out,
        } => {
            let coefs =
                coefficients
                    .iter()
                    .map(|c| {
                        Ok(match c {
                            CoefficientKind::Pearson => Coefficient::Pearson,
                            CoefficientKind::Spearman => Coefficient::Spearman,
                            CoefficientKind::Dcor => Coefficient::DistanceCorrelation,
                            CoefficientKind::Rdc => Coefficient::Rdc,
                            CoefficientKind::Tfdc => Coefficient::Tfdc(Box::new(
                                tfdc_power_targets(tfdc_m, target_samples, seed)?,
                            )),
                        })
                    })
                    .collect::<Result<Vec<_>, Error>>()?;
            let mut results = Vec::new();
            for &pattern in &patterns {
                for &level in &noise {
                    for c in &coefs {
                        results.push(estimate_power(
                            pattern,
                            level,
                            c,
                            n_sims,
                            sample_size,
                            seed,
                        )?);
                    }
                }
            }
            let failures: usize = results.iter().map(|r| r.failures).sum();
            let params = json!({
                "patterns": patterns.iter().map(|p| p.name()).collect::<Vec<_>>(),
                "noise": noise,
                "coefficients": coefficients.iter().map(|c| c.to_string()).collect::<Vec<_>>(),
                "n_sims": n_sims,
                "sample_size": sample_size,
                "tfdc_m": tfdc_m,
                "target_samples": target_samples,
                "level": LEVEL,
                "null": "permutation of y",
                "failed_replicates": failures,
            });
            let files = vec![("power.csv".into(), render_power_csv(&results))];
            emit(&out, "power", None, params, Some(seed), files)
        }
    }
}

fn solver_setup(s: &SolverArgs, m: usize) -> Result<(GroundCost, SinkhornConfig), Failure> {
    if m < 2 {
        return Err(Failure::Usage(format!("--m {m}: need at least 2")));
    }
    let mut cfg = SinkhornConfig::for_resolution(m)
        .with_tol(s.tol)
        .with_max_iter(s.max_iter);
    if let Some(lambda) = s.lambda {
        cfg = cfg.with_lambda(lambda);
    }
    cfg.validate()?;
    Ok((GroundCost::squared_euclidean(m), cfg))
}

fn solver_params(s: &SolverArgs, cfg: &SinkhornConfig, m: usize) -> Value {
    json!({
        "m": m,
        "lambda": cfg.lambda,
        "tol": cfg.tol,
        "max_iter": cfg.max_iter,
        "debias": s.debias,
        "cost": "squared-euclidean",
    })
}

fn copulas(pairs: &[PairCopula]) -> Vec<CopulaHistogram> {
    pairs.iter().map(|p| p.copula.clone()).collect()
}

fn read_all(paths: &[PathBuf]) -> Result<Vec<CopulaHistogram>, Error> {
    paths.iter().map(|p| read_cop(p)).collect()
}

fn paths_json(paths: &[PathBuf]) -> Value {
    json!(paths
        .iter()
        .map(|p| p.display().to_string())
        .collect::<Vec<_>>())
}

fn file_stem(p: &Path) -> String {
    p.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn ensure_dir(dir: &Path) -> Result<(), Error> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.display().to_string(),
        message: e.to_string(),
    })
}

/// Write the computed artifacts, then the manifest. Nothing touches the
/// output directory before this point.
fn emit(
    dir: &Path,
    command: &str,
    input: Option<&Path>,
    parameters: Value,
    seed: Option<u64>,
    files: Vec<(String, String)>,
) -> Outcome {
    ensure_dir(dir)?;
    for (name, body) in &files {
        write_atomic(&dir.join(name), body.as_bytes())?;
    }
    let meta = json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "input": input.map(|p| p.display().to_string()),
        "seed": seed,
        "parameters": parameters,
        "outputs": files.iter().map(|f| f.0.as_str()).collect::<Vec<_>>(),
    });
    let mut text = serde_json::to_string_pretty(&meta).expect("json values serialize");
    text.push('\n');
    write_atomic(&dir.join("run-meta.json"), text.as_bytes())?;
    Ok(())
}
