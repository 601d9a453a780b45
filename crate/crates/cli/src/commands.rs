use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use apgdiag_core::analytics::{fit_baseline, median};
use apgdiag_core::engine::{explain_cause, render_report, DiagnosisConfig};
use apgdiag_core::ingest::{
    load_config_events, load_db_events, load_metrics_dir, load_topology, IngestError, MetricFilter,
    RunStore,
};
use apgdiag_core::model::build_apg;
use apgdiag_core::sim::{builtin_scenario, generate, Scenario};
use apgdiag_core::symptoms::{default_symptoms_db, load_symptoms_db};
use apgdiag_core::{DataDir, DiagnosisReport};

use crate::DiagnoseArgs;

const CONFIG_FILE: &str = "diagnose.toml";

fn print(text: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    out.write_all(text.as_bytes())?;
    out.flush()?;
    Ok(())
}

pub fn simulate(scenario: &str, seed: Option<u64>, out: &Path) -> Result<ExitCode> {
    let mut spec = match builtin_scenario(scenario) {
        Some(s) if !Path::new(scenario).exists() => s,
        _ => Scenario::load(Path::new(scenario))
            .with_context(|| format!("loading scenario {scenario}"))?,
    };
    if let Some(seed) = seed {
        spec.seed = seed;
    }
    let dataset = generate(&spec)?;
    dataset.write(out)?;

    let mut text = format!(
        "scenario {} seed {}: {} runs, {} metric series\n",
        spec.name,
        spec.seed,
        dataset.runs.len(),
        dataset.metrics.len()
    );
    for r in dataset
        .ground_truth
        .runs
        .iter()
        .filter(|r| !r.causes.is_empty())
    {
        text.push_str(&format!(
            "  {} {}: {}\n",
            r.query_id,
            r.run_id,
            r.causes.join(", ")
        ));
    }
    print(&text)?;
    Ok(ExitCode::SUCCESS)
}

fn load_config(data: &Path, args: &DiagnoseArgs) -> Result<DiagnosisConfig> {
    let path = data.join(CONFIG_FILE);
    let mut config = if path.exists() {
        let text = std::fs::read_to_string(&path)
            .with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
    } else {
        DiagnosisConfig::default()
    };
    if let Some(v) = args.theta {
        config.theta = v;
    }
    if let Some(v) = args.tau {
        config.tau = v;
    }
    if let Some(v) = args.delta {
        config.delta = v;
    }
    if let Some(v) = args.k {
        config.min_history = v;
    }
    if let Some(v) = args.floor_s {
        config.floor_s = v;
    }
    if let Some(v) = args.history_limit {
        config.history_limit = v;
    }
    config.validate()?;
    Ok(config)
}

pub fn diagnose(args: &DiagnoseArgs) -> Result<ExitCode> {
    let config = load_config(&args.data, args)?;
    let symptoms = match &args.symptoms {
        Some(path) => load_symptoms_db(path)?,
        None => default_symptoms_db(),
    };
    let data = DataDir::open(&args.data)
        .with_context(|| format!("opening data directory {}", args.data.display()))?;
    let report = apgdiag_core::diagnose(&data, &args.query, &args.run, &symptoms, &config)?;
    print(&render_report(&report, args.format))?;
    Ok(if report.verdict.slowed && !report.causes.is_empty() {
        ExitCode::from(2)
    } else {
        ExitCode::SUCCESS
    })
}

pub fn baseline(data: &Path, query: &str) -> Result<ExitCode> {
    let store = RunStore::open_existing(data.join(DataDir::RUNS))?;
    let runs = store.runs(query);
    if runs.is_empty() {
        bail!("no runs of query `{query}` in {}", data.display());
    }
    let latest = &runs[runs.len() - 1].fingerprint;
    let mut by_plan: BTreeMap<&str, Vec<_>> = BTreeMap::new();
    for r in runs {
        by_plan.entry(r.fingerprint.as_str()).or_default().push(r);
    }

    let mut out = format!(
        "query {query}: {} runs, {} plan(s)\n",
        runs.len(),
        by_plan.len()
    );
    let row = |name: &str, values: &[f64]| -> String {
        let b = fit_baseline(values).expect("at least one run");
        format!(
            "  {name:<28} {:>5} {:>10.3} {:>10.3} {:>10.3} {:>10.3} {:>10.3}\n",
            b.n,
            median(values).expect("non-empty"),
            b.mean,
            b.std,
            b.min,
            b.max
        )
    };
    for (fp, plan_runs) in &by_plan {
        let marker = if fp == latest { " (latest)" } else { "" };
        out.push_str(&format!("\nplan {fp}{marker}\n"));
        out.push_str(&format!(
            "  {:<28} {:>5} {:>10} {:>10} {:>10} {:>10} {:>10}\n",
            "", "n", "median_s", "mean_s", "std_s", "min_s", "max_s"
        ));
        let totals: Vec<f64> = plan_runs.iter().map(|r| r.total_s()).collect();
        out.push_str(&row("total", &totals));
        let first = plan_runs[0].snapshot.operators();
        for (i, op) in first.iter().enumerate() {
            let times: Vec<f64> = plan_runs
                .iter()
                .filter_map(|r| r.snapshot.operators().get(i).map(|o| o.elapsed_s))
                .collect();
            out.push_str(&row(&format!("{} {}", op.op_id, op.op_kind), &times));
        }
    }
    print(&out)?;
    Ok(ExitCode::SUCCESS)
}

fn describe(err: &IngestError) -> Vec<String> {
    match err {
        IngestError::SchemaViolation { path, violations } => violations
            .iter()
            .map(|v| format!("{}: {v}", path.display()))
            .collect(),
        other => vec![other.to_string()],
    }
}

pub fn validate(data: &Path) -> Result<ExitCode> {
    if !data.is_dir() {
        bail!("{} is not a directory", data.display());
    }
    let mut problems: Vec<String> = Vec::new();
    let topology = load_topology(&data.join(DataDir::TOPOLOGY))
        .map_err(|e| problems.extend(describe(&e)))
        .ok();
    let store = RunStore::open_existing(data.join(DataDir::RUNS))
        .map_err(|e| problems.extend(describe(&e)))
        .ok();
    let series = load_metrics_dir(&data.join(DataDir::METRICS), &MetricFilter::default())
        .map_err(|e| problems.extend(describe(&e)))
        .ok();
    let _ =
        load_config_events(&data.join(DataDir::EVENTS)).map_err(|e| problems.extend(describe(&e)));
    let _ =
        load_db_events(&data.join(DataDir::DB_EVENTS)).map_err(|e| problems.extend(describe(&e)));

    let mut run_count = 0;
    if let (Some(topology), Some(store)) = (&topology, &store) {
        let queries: Vec<String> = store.query_ids().map(str::to_string).collect();
        for q in queries {
            for r in store.runs(&q) {
                run_count += 1;
                if let Err(e) = build_apg(&r.snapshot, topology) {
                    problems.push(format!("run {}: {e}", r.run_id()));
                }
            }
        }
    }

    if problems.is_empty() {
        print(&format!(
            "{}: ok ({run_count} runs, {} metric series)\n",
            data.display(),
            series.map_or(0, |s| s.len())
        ))?;
        Ok(ExitCode::SUCCESS)
    } else {
        let mut text = String::new();
        for p in &problems {
            text.push_str(p);
            text.push('\n');
        }
        print(&text)?;
        eprintln!("{} violation(s) found", problems.len());
        Ok(ExitCode::from(1))
    }
}

pub fn explain(report: &Path, cause: &str) -> Result<ExitCode> {
    let text =
        std::fs::read_to_string(report).with_context(|| format!("reading {}", report.display()))?;
    let report: DiagnosisReport = serde_json::from_str(&text)
        .with_context(|| format!("{} is not a JSON diagnosis report", report.display()))?;
    match explain_cause(&report, cause) {
        Some(trace) => {
            print(&trace)?;
            Ok(ExitCode::SUCCESS)
        }
        None => {
            let known: Vec<&str> = report.causes.iter().map(|c| c.cause_id.as_str()).collect();
            if known.is_empty() {
                bail!("cause `{cause}` is not in the report (it lists no causes)");
            }
            bail!(
                "cause `{cause}` is not in the report (causes: {})",
                known.join(", ")
            );
        }
    }
}
