use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{debug, info, warn};
use serde::Serialize;
use serde_json::{json, Value};

use super::args::*;
use super::CliError;
use crate::eval_harness::{
    evaluate, imbalance_experiment, kfold_cv, noise_sweep, noise_sweep_model, pmu_study,
    rank_pmu_buses, reference_schemes, stratified_holdout, MetricsReport, PMUPlan,
};
use crate::ghm_boost::{feature_importance, fit, load_model, save_model, Ensemble};
use crate::grid_case::{parse_case, GridCase};
use crate::transient_sim::{
    describe_feature, feature_count, generate_dataset_with, Dataset, GenerationOptions,
};
use crate::util::fmt_sig;
use crate::Error;

type CmdResult = Result<(), CliError>;

fn require_file(path: &Path, what: &str) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "{what} {} does not exist",
            path.display()
        )))
    }
}

fn load_case(common: &CommonArgs) -> Result<GridCase, CliError> {
    match &common.case {
        None => Ok(GridCase::ne39()),
        Some(p) => {
            require_file(p, "case file")?;
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            Ok(parse_case(&text)?)
        }
    }
}

fn load_dataset(path: &Path) -> Result<Dataset, CliError> {
    require_file(path, "dataset")?;
    Ok(Dataset::load_csv(path)?)
}

fn load_model_file(path: &Path) -> Result<Ensemble, CliError> {
    require_file(path, "model file")?;
    Ok(load_model(path)?)
}

fn out_dir(common: &CommonArgs) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(&common.out).map_err(|e| Error::io(&common.out, e))?;
    Ok(common.out.clone())
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Data(Error::io(path, e)))
}

/// Writes `<out>/<stem>.json` with the config echo and case digest around `result`.
fn write_report<C: Serialize>(
    out: &Path,
    stem: &str,
    command: &str,
    config: &C,
    case: &GridCase,
    result: Value,
) -> CmdResult {
    let report = json!({
        "command": command,
        "config": config,
        "case_digest": case.digest(),
        "result": result,
    });
    let path = out.join(format!("{stem}.json"));
    write_text(
        &path,
        &(serde_json::to_string_pretty(&report).expect("report serializes") + "\n"),
    )?;
    info!("wrote {}", path.display());
    Ok(())
}

fn check_width(model: &Ensemble, ds: &Dataset) -> Result<(), CliError> {
    if model.feature_count != ds.n_features() {
        return Err(Error::FeatureLength {
            expected: model.feature_count,
            actual: ds.n_features(),
        }
        .into());
    }
    Ok(())
}

pub fn generate(a: &GenerateArgs) -> CmdResult {
    let case = load_case(&a.common)?;
    let out = out_dir(&a.common)?;
    let dataset_path = a.dataset.clone().unwrap_or_else(|| out.join("dataset.csv"));
    let opts = GenerationOptions {
        n_scenarios: a.n,
        dt: a.dt,
        horizon: a.horizon,
        seed: a.seed,
        threads: a.common.threads,
        ..GenerationOptions::new(a.n, a.seed)
    };
    let start = Instant::now();
    let (ds, rep) = generate_dataset_with(&case, &opts)?;
    let elapsed = start.elapsed().as_secs_f64();
    ds.save_csv(&dataset_path)?;
    if rep.n_stable == 0 || rep.n_unstable == 0 {
        warn!(
            "dataset contains a single class ({} stable, {} unstable)",
            rep.n_stable, rep.n_unstable
        );
    }
    info!(
        "{} of {} scenarios accepted: {} stable, {} unstable ({:.1}% unstable); {} failed, {} loading redraws; {:.1}s",
        rep.accepted,
        rep.requested,
        rep.n_stable,
        rep.n_unstable,
        100.0 * rep.n_unstable as f64 / rep.accepted.max(1) as f64,
        rep.failures.len(),
        rep.loading_redraws,
        elapsed
    );
    let failures: Vec<Value> = rep
        .failures
        .iter()
        .map(|f| json!({"scenario_id": f.scenario_id, "reason": f.reason}))
        .collect();
    let result = json!({
        "dataset": dataset_path,
        "requested": rep.requested,
        "accepted": rep.accepted,
        "rejected": rep.failures.len(),
        "failures": failures,
        "loading_redraws": rep.loading_redraws,
        "stable": rep.n_stable,
        "unstable": rep.n_unstable,
        "unstable_fraction": rep.n_unstable as f64 / rep.accepted.max(1) as f64,
        "wall_time_s": elapsed,
    });
    write_report(&out, "generation", "generate", a, &case, result)
}

fn metrics_json(r: &MetricsReport) -> Value {
    serde_json::to_value(r).expect("metrics serialize")
}

pub fn train(a: &TrainArgs) -> CmdResult {
    let case = load_case(&a.common)?;
    let ds = load_dataset(&a.dataset)?;
    let out = out_dir(&a.common)?;
    let model_path = a.model.clone().unwrap_or_else(|| out.join("model.json"));
    let config = a.training.to_config(a.seed);
    let labels = ds.labels();
    let (train_idx, test_idx) = stratified_holdout(&labels, a.holdout, a.seed)?;
    let train_ds = ds.subset(&train_idx);
    let test_ds = ds.subset(&test_idx);

    let start = Instant::now();
    let model = fit(&train_ds.rows(), &train_ds.labels(), &config)?;
    let train_time = start.elapsed().as_secs_f64();
    save_model(&model, &model_path)?;
    info!(
        "trained {} trees in {:.2}s; wrote {}",
        model.trees.len(),
        train_time,
        model_path.display()
    );

    let mut train_report = evaluate(&model, &train_ds.rows(), &train_ds.labels())?;
    train_report.wall_time_s = train_time;
    let test_report = if test_ds.is_empty() {
        None
    } else {
        let mut r = evaluate(&model, &test_ds.rows(), &test_ds.labels())?;
        r.wall_time_s = train_time;
        Some(r)
    };
    let label = a.training.label();
    let headline = test_report.as_ref().unwrap_or(&train_report);
    let row = headline.table_row(&label);
    println!("{row}");

    let summary = out.join("train_summary.csv");
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&summary)
        .map_err(|e| Error::io(&summary, e))?;
    writeln!(f, "{row}").map_err(|e| Error::io(&summary, e))?;

    let stem = model_path
        .file_stem()
        .map_or_else(|| "model".to_string(), |s| s.to_string_lossy().into_owned());
    if a.save_split == OnOff::On {
        train_ds.save_csv(out.join(format!("{stem}_train.csv")))?;
        test_ds.save_csv(out.join(format!("{stem}_holdout.csv")))?;
    }
    let meta = model.training_meta.as_ref().expect("fresh model");
    let result = json!({
        "model": model_path,
        "trees": model.trees.len(),
        "train_samples": train_ds.len(),
        "holdout_samples": test_ds.len(),
        "train_wall_time_s": train_time,
        "single_class": meta.single_class,
        "initial_loss": meta.initial_loss,
        "final_loss": meta.losses.last(),
        "loss_curve": meta.losses,
        "train_metrics": metrics_json(&train_report),
        "holdout_metrics": test_report.as_ref().map(metrics_json),
        "table_row": row,
    });
    write_report(&out, &format!("{stem}_report"), "train", a, &case, result)
}

pub fn eval(a: &EvalArgs) -> CmdResult {
    let case = load_case(&a.common)?;
    let ds = load_dataset(&a.dataset)?;
    let out = out_dir(&a.common)?;
    let (report, folds, label) = match &a.model {
        Some(path) => {
            let model = load_model_file(path)?;
            check_width(&model, &ds)?;
            let start = Instant::now();
            let mut r = evaluate(&model, &ds.rows(), &ds.labels())?;
            r.wall_time_s = start.elapsed().as_secs_f64();
            (r, None, format!("model {}", path.display()))
        }
        None => {
            let seed = a
                .seed
                .ok_or_else(|| CliError::Usage("--seed is required for cross-validation".into()))?;
            let cv = kfold_cv(&ds, a.k, &a.training.to_config(seed), seed)?;
            (
                cv.mean,
                Some(cv.folds),
                format!("{} {}-fold", a.training.label(), a.k),
            )
        }
    };
    let row = report.table_row(&label);
    println!("{row}");
    let csv = format!(
        "acc,far,frr,wall_time_s,tp,fp,fn,tn\n{},{},{},{},{},{},{},{}\n",
        fmt_sig(report.acc, 9),
        report.far.map(|v| fmt_sig(v, 9)).unwrap_or_default(),
        report.frr.map(|v| fmt_sig(v, 9)).unwrap_or_default(),
        fmt_sig(report.wall_time_s, 6),
        report.counts.tp,
        report.counts.fp,
        report.counts.fn_,
        report.counts.tn
    );
    write_text(&out.join("eval.csv"), &csv)?;
    let result = json!({
        "metrics": metrics_json(&report),
        "folds": folds.map(|f| f.iter().map(metrics_json).collect::<Vec<_>>()),
        "table_row": row,
    });
    write_report(&out, "eval", "eval", a, &case, result)
}

pub fn sweep_noise(a: &NoiseArgs) -> CmdResult {
    let case = load_case(&a.common)?;
    let ds = load_dataset(&a.dataset)?;
    let out = out_dir(&a.common)?;
    let sweep = match &a.model {
        Some(path) => {
            let model = load_model_file(path)?;
            check_width(&model, &ds)?;
            noise_sweep_model(&model, &ds, &a.levels, a.seed)?
        }
        None => noise_sweep(&ds, &a.levels, &a.training.to_config(a.seed), a.k, a.seed)?,
    };
    for p in &sweep.points {
        println!(
            "{}",
            p.report
                .table_row(&format!("noise {}%", fmt_sig(p.setting, 6)))
        );
    }
    sweep.write_files(&out, "noise_sweep")?;
    write_report(
        &out,
        "noise_sweep",
        "sweep-noise",
        a,
        &case,
        sweep.to_json(),
    )
}

pub fn sweep_imbalance(a: &ImbalanceArgs) -> CmdResult {
    let case = load_case(&a.common)?;
    let ds = load_dataset(&a.dataset)?;
    let out = out_dir(&a.common)?;
    let mut on_args = a.training.clone();
    on_args.ghm = OnOff::On;
    let mut off_args = a.training.clone();
    off_args.ghm = OnOff::Off;
    let r = imbalance_experiment(
        &ds,
        a.train_size,
        a.test_size,
        &a.ratios,
        &on_args.to_config(a.seed),
        &off_args.to_config(a.seed),
        a.seed,
    )?;
    for (on, off) in r.with_ghm.points.iter().zip(&r.without_ghm.points) {
        let ratio = fmt_sig(on.setting, 6);
        println!(
            "{}",
            on.report
                .table_row(&format!("{ratio}:1 {}", on_args.label()))
        );
        println!(
            "{}",
            off.report
                .table_row(&format!("{ratio}:1 {}", off_args.label()))
        );
    }
    r.with_ghm.write_files(&out, "imbalance_ghm_on")?;
    r.without_ghm.write_files(&out, "imbalance_ghm_off")?;
    let result = json!({
        "ghm_on": r.with_ghm.to_json(),
        "ghm_off": r.without_ghm.to_json(),
        "plans": r.plans,
        "skipped_ratios": r.skipped,
        "test_size": r.test_indices.len(),
    });
    write_report(&out, "imbalance_sweep", "sweep-imbalance", a, &case, result)
}

pub fn importance(a: &ImportanceArgs) -> CmdResult {
    let case = load_case(&a.common)?;
    let model = load_model_file(&a.model)?;
    let out = out_dir(&a.common)?;
    let imp = feature_importance(&model);
    let matches_case = model.feature_count == feature_count(&case);
    let name = |f: usize| {
        if matches_case {
            describe_feature(&case, f)
        } else {
            format!("feature {f}")
        }
    };
    let mut csv = String::from("rank,feature_index,name,score\n");
    let mut rows = Vec::new();
    for (rank, f, score) in imp.top(a.top) {
        let n = name(f);
        println!("{rank:>3}  {f:>4}  {n:<40} {score:>7.2}");
        csv.push_str(&format!("{rank},{f},\"{n}\",{}\n", fmt_sig(score, 6)));
        rows.push(json!({"rank": rank, "feature_index": f, "name": n, "score": score}));
    }
    if imp.ranking.is_empty() {
        warn!("model has no informative splits; all importance scores are zero");
    }
    write_text(&out.join("importance.csv"), &csv)?;
    let plan = if matches_case && !imp.ranking.is_empty() {
        Some(rank_pmu_buses(&imp, &case, a.pmu_count)?)
    } else {
        None
    };
    if let Some(p) = &plan {
        println!("top {} PMU buses: {:?}", p.buses.len(), p.buses);
    }
    let result = json!({
        "top": rows,
        "scores": imp.scores,
        "pmu_plan": plan,
    });
    write_report(&out, "importance", "importance", a, &case, result)
}

fn parse_bus_list(s: &str) -> Result<Vec<u32>, CliError> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<u32>()
                .map_err(|_| CliError::Usage(format!("bad bus id `{t}` in scheme `{s}`")))
        })
        .collect()
}

pub fn pmu(a: &PmuArgs) -> CmdResult {
    let case = load_case(&a.common)?;
    let ds = load_dataset(&a.dataset)?;
    let out = out_dir(&a.common)?;
    let mut schemes = reference_schemes();
    for s in &a.schemes {
        let id = schemes.len() as u32 + 1;
        schemes.push(
            PMUPlan::new(id, &parse_bus_list(s)?).map_err(|e| CliError::Usage(e.to_string()))?,
        );
    }
    if let Some(path) = &a.model {
        let model = load_model_file(path)?;
        check_width(&model, &ds)?;
        let mut plan = rank_pmu_buses(&feature_importance(&model), &case, a.pmu_count)?;
        plan.scheme_id = schemes.len() as u32 + 1;
        info!(
            "importance-ranked scheme {}: {:?}",
            plan.scheme_id, plan.buses
        );
        schemes.push(plan);
    }
    let sweep = pmu_study(
        &ds,
        &case,
        &schemes,
        &a.training.to_config(a.seed),
        a.k,
        a.seed,
    )?;
    for p in &sweep.points {
        let label = if p.setting == 0.0 {
            "all features".to_string()
        } else {
            format!("scheme {}", p.setting)
        };
        println!("{}", p.report.table_row(&label));
    }
    sweep.write_files(&out, "pmu_study")?;
    let result = json!({ "schemes": schemes, "sweep": sweep.to_json() });
    write_report(&out, "pmu_study", "pmu-study", a, &case, result)
}

/// Feature rows from raw comma-separated lines or a dataset CSV with header.
fn read_rows(text: &str, width: usize) -> Result<Vec<Vec<f64>>, CliError> {
    let first = text.lines().find(|l| !l.trim().is_empty());
    let has_header = first.is_some_and(|l| l.split(',').any(|t| t.trim().parse::<f64>().is_err()));
    if has_header {
        let ds = Dataset::read_csv(text.as_bytes())?;
        if ds.n_features() != width {
            return Err(Error::FeatureLength {
                expected: width,
                actual: ds.n_features(),
            }
            .into());
        }
        return Ok(ds.samples.into_iter().map(|s| s.features).collect());
    }
    let mut rows = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<Result<Vec<f64>, _>>()
            .map_err(|_| Error::DatasetRow {
                row: n + 1,
                message: "not a numeric feature row".into(),
            })?;
        if row.len() != width {
            return Err(Error::FeatureLength {
                expected: width,
                actual: row.len(),
            }
            .into());
        }
        if let Some(c) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteFeature {
                row: n + 1,
                column: c,
            }
            .into());
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn predict(a: &PredictArgs) -> CmdResult {
    let model = load_model_file(&a.model)?;
    let mut text = String::new();
    match a.input.as_deref() {
        None => std::io::stdin().lock().read_to_string(&mut text),
        Some(p) if p == Path::new("-") => std::io::stdin().lock().read_to_string(&mut text),
        Some(p) => {
            require_file(p, "input")?;
            std::fs::File::open(p).and_then(|mut f| f.read_to_string(&mut text))
        }
    }
    .map_err(|e| Error::io(a.input.clone().unwrap_or_else(|| "<stdin>".into()), e))?;
    let rows = read_rows(&text, model.feature_count)?;
    let stdout = std::io::stdout();
    let mut w = std::io::BufWriter::new(stdout.lock());
    let all = Instant::now();
    for (i, row) in rows.iter().enumerate() {
        let t = Instant::now();
        let p = model.predict_proba(row)?;
        debug!("row {}: {:.1} us", i + 1, t.elapsed().as_secs_f64() * 1e6);
        writeln!(w, "{},{}", fmt_sig(p, 9), (p >= 0.5) as u8)
            .map_err(|e| Error::io("<stdout>", e))?;
    }
    w.flush().map_err(|e| Error::io("<stdout>", e))?;
    if !rows.is_empty() {
        info!(
            "scored {} rows, mean latency {:.1} us",
            rows.len(),
            all.elapsed().as_secs_f64() * 1e6 / rows.len() as f64
        );
    }
    Ok(())
}
