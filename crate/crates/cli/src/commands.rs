use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{anyhow, Context};
use nft_audit::corpus::{
    load_corpus, parse_time, write_corpus, ApiClient, ApiConfig, Corpus, QueryWindow,
};
use nft_audit::market_stats::{
    holder_concentration, lorenz, quarterly_volume, timeline, write_concentration_csv,
    write_lorenz_csv, write_quarterly_csv, write_timeline_csv, yearly_totals, Side,
};
use nft_audit::output::{write_csv, write_json};
use nft_audit::synth::{evaluate, generate, LabeledCorpus, ScenarioConfig};
use nft_audit::wash_audit::{
    aggregate_audit, audit_corpus, read_detail_files, write_audit_report_csv, write_detail_files,
    write_marketplace_shares_csv, write_wtr_histogram_csv, AuditConfig, AUDIT_REPORT_CSV,
    DETAILS_DIR, MARKETPLACE_SHARES_CSV, WTR_HISTOGRAM_CSV,
};
use serde_json::{json, Value};
use tracing::info;

use crate::config::FileConfig;
use crate::{
    AuditArgs, Cli, Command, EvaluateArgs, Failure, IngestArgs, ReportArgs, SimulateArgs,
    StatsArgs,
};

pub const SUMMARY_JSON: &str = "summary.json";

fn usage(msg: impl std::fmt::Display) -> Failure {
    Failure::Usage(anyhow!("{msg}"))
}

fn show(verbose: bool, settings: &[(&str, String)]) {
    if verbose {
        for (k, v) in settings {
            eprintln!("config: {k} = {v}");
        }
    }
}

pub fn run(cli: Cli) -> Result<(), Failure> {
    let file = FileConfig::load(cli.config.as_deref()).map_err(Failure::Usage)?;
    let jobs = cli.jobs.or(file.jobs);
    if jobs == Some(0) {
        return Err(usage("--jobs must be >= 1"));
    }
    if let Some(n) = jobs {
        // Fails only if a pool already exists, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    show(
        cli.verbose,
        &[(
            "jobs",
            jobs.map_or("all cores".to_string(), |n| n.to_string()),
        )],
    );
    match cli.command {
        Command::Ingest(a) => ingest(a, &file, jobs, cli.verbose),
        Command::Stats(a) => stats(a),
        Command::Audit(a) => audit(a, &file, cli.verbose),
        Command::Simulate(a) => simulate(a, &file, cli.verbose),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Report(a) => report(a),
    }
}

fn ingest(
    a: IngestArgs,
    file: &FileConfig,
    jobs: Option<usize>,
    verbose: bool,
) -> Result<(), Failure> {
    let f = &file.ingest;
    let base = a
        .base_url
        .or_else(|| f.base_url.clone())
        .ok_or_else(|| usage("missing --base-url"))?;
    let base = url::Url::parse(&base).map_err(|e| usage(format!("--base-url: {e}")))?;
    let time = |flag: Option<String>, cfg: &Option<String>, name: &str| {
        let s = flag
            .or_else(|| cfg.clone())
            .ok_or_else(|| usage(format!("missing --{name}")))?;
        parse_time(&s).map_err(|e| usage(format!("--{name}: {e}")))
    };
    let start = time(a.window_start, &f.window_start, "window-start")?;
    let end = time(a.window_end, &f.window_end, "window-end")?;
    let page_size = a.page_size.or(f.page_size).unwrap_or(100);
    let window = QueryWindow::new(start, end, page_size).map_err(usage)?;

    let mut cfg = ApiConfig::new(base).with_env_api_key();
    if let Some(h) = a.window_step_hours.or(f.window_step_hours) {
        if h == 0 {
            return Err(usage("--window-step-hours must be >= 1"));
        }
        cfg.window_step = chrono::Duration::hours(i64::from(h));
    }
    if let Some(r) = a.rate_limit.or(f.rate_limit) {
        if !(r.is_finite() && r > 0.0) {
            return Err(usage("--rate-limit must be > 0"));
        }
        cfg.rate_limit_per_sec = r;
    }
    if let Some(m) = a.max_retries.or(f.max_retries) {
        cfg.max_retries = m;
    }
    cfg.jobs = jobs.unwrap_or(1);
    let collections = if a.collections.is_empty() {
        f.collections.clone()
    } else {
        Some(a.collections)
    };
    show(
        verbose,
        &[
            ("base_url", cfg.base_url.to_string()),
            ("window", window.to_string()),
            ("page_size", page_size.to_string()),
            ("window_step", cfg.window_step.to_string()),
            ("rate_limit", cfg.rate_limit_per_sec.to_string()),
            ("api_key", if cfg.api_key.is_some() { "set" } else { "unset" }.into()),
        ],
    );

    let client = ApiClient::new(cfg)?;
    let outcome = client.ingest_all(window, collections.as_deref())?;
    let corpus = Corpus::from_records(outcome.records)?;
    write_corpus(&corpus, &a.out_dir)?;
    println!("{}", serde_json::to_string(&outcome.stats)?);
    Ok(())
}

fn stats(a: StatsArgs) -> Result<(), Failure> {
    let corpus = load_corpus(&a.corpus)?;
    let out = &a.out_dir;
    let quarters = quarterly_volume(&corpus);
    write_quarterly_csv(&out.join("quarterly.csv"), &quarters)?;
    write_csv(
        &out.join("yearly.csv"),
        &["year", "total_usd"],
        yearly_totals(&quarters)
            .into_iter()
            .map(|(y, v)| [y.to_string(), v.to_string()]),
    )?;
    write_timeline_csv(&out.join("timeline.csv"), &timeline(&corpus))?;
    let buyers = lorenz(&corpus, Side::Buyer).ok();
    let sellers = lorenz(&corpus, Side::Seller).ok();
    write_lorenz_csv(&out.join("lorenz.csv"), buyers.as_ref())?;
    write_lorenz_csv(&out.join("lorenz_seller.csv"), sellers.as_ref())?;
    write_json(
        &out.join("gini.json"),
        &json!({
            "weight": "trades",
            "buyer_gini": buyers.map(|c| c.gini),
            "seller_gini": sellers.map(|c| c.gini),
        }),
    )?;
    write_concentration_csv(
        &out.join("concentration.csv"),
        &holder_concentration(corpus.holders()),
    )?;
    info!(sales = corpus.len(), "stats written");
    Ok(())
}

fn audit_config(a: &AuditArgs, file: &FileConfig) -> Result<AuditConfig, Failure> {
    let f = &file.audit;
    let d = AuditConfig::default();
    let cfg = AuditConfig {
        k: a.k.or(f.k).unwrap_or(d.k),
        lof_threshold: a.threshold.or(f.threshold).unwrap_or(d.lof_threshold),
        rule: a.rule.map(Into::into).or(f.rule).unwrap_or(d.rule),
        reachability: a
            .reachability
            .map(Into::into)
            .or(f.reachability)
            .unwrap_or(d.reachability),
        min_addresses: a.min_addresses.or(f.min_addresses).unwrap_or(d.min_addresses),
    };
    cfg.validate().map_err(|e| Failure::Usage(e.into()))?;
    Ok(cfg)
}

fn audit(a: AuditArgs, file: &FileConfig, verbose: bool) -> Result<(), Failure> {
    let cfg = audit_config(&a, file)?;
    show(
        verbose,
        &[
            ("k", cfg.k.to_string()),
            ("threshold", cfg.lof_threshold.to_string()),
            ("rule", format!("{:?}", cfg.rule)),
            ("reachability", format!("{:?}", cfg.reachability)),
            ("min_addresses", cfg.min_addresses.to_string()),
        ],
    );
    let corpus = load_corpus(&a.corpus)?;
    let run = audit_corpus(&corpus, &cfg)?;
    let out = &a.out_dir;

    write_audit_report_csv(&out.join(AUDIT_REPORT_CSV), &run.reports)?;
    let details = out.join(DETAILS_DIR);
    clear_json_files(&details)?;
    write_detail_files(&details, &run.reports)?;
    write_csv(
        &out.join("skipped.csv"),
        &["collection_id", "reason"],
        run.skipped
            .iter()
            .map(|s| [s.collection_id.clone(), s.reason.clone()]),
    )?;
    let summary = (!run.reports.is_empty())
        .then(|| aggregate_audit(&run.reports))
        .transpose()?;
    write_marketplace_shares_csv(&out.join(MARKETPLACE_SHARES_CSV), summary.as_ref())?;
    write_wtr_histogram_csv(&out.join(WTR_HISTOGRAM_CSV), summary.as_ref())?;
    write_json(
        &out.join("audit_summary.json"),
        &json!({ "config": cfg, "skipped": run.skipped.len(), "summary": summary }),
    )?;
    info!(
        audited = run.reports.len(),
        skipped = run.skipped.len(),
        "audit written"
    );
    Ok(())
}

/// Stale detail files from an earlier run would otherwise be read back by
/// `evaluate`.
fn clear_json_files(dir: &Path) -> anyhow::Result<()> {
    let Ok(entries) = fs::read_dir(dir) else {
        return Ok(());
    };
    for e in entries {
        let p = e?.path();
        if p.extension().is_some_and(|x| x == "json") {
            fs::remove_file(&p).with_context(|| format!("removing {}", p.display()))?;
        }
    }
    Ok(())
}

fn simulate(a: SimulateArgs, file: &FileConfig, verbose: bool) -> Result<(), Failure> {
    let path = a
        .scenario
        .or_else(|| file.simulate.scenario.as_ref().map(Into::into));
    let mut scenario = match &path {
        Some(p) => ScenarioConfig::from_json_file(p).map_err(|e| Failure::Usage(e.into()))?,
        None => ScenarioConfig::default(),
    };
    if let Some(seed) = a.seed.or(file.simulate.seed) {
        scenario.seed = seed;
    }
    scenario.validate().map_err(|e| Failure::Usage(e.into()))?;
    show(
        verbose,
        &[("scenario", serde_json::to_string(&scenario)?)],
    );
    let labeled = generate(&scenario)?;
    labeled.write(&a.out_dir, &scenario)?;
    write_json(&a.out_dir.join("scenario.json"), &scenario)?;
    info!(
        sales = labeled.corpus.len(),
        wash_trades = labeled.wash_tx_ids.len(),
        "scenario written"
    );
    Ok(())
}

fn evaluate_cmd(a: EvaluateArgs) -> Result<(), Failure> {
    let labeled = LabeledCorpus::load(&a.corpus)?;
    let details = a.audit_dir.join(DETAILS_DIR);
    let reports = read_detail_files(&details)
        .with_context(|| format!("reading audit details from {}", details.display()))?;
    let metrics = evaluate(&labeled, &reports)?;
    write_json(&a.out_dir.join("evaluation.json"), &metrics)?;
    println!(
        "address precision {:.4} recall {:.4} | trade precision {:.4} recall {:.4}",
        metrics.address.precision,
        metrics.address.recall,
        metrics.trade.precision,
        metrics.trade.recall
    );
    Ok(())
}

fn csv_rows(path: &Path) -> anyhow::Result<Value> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let row: serde_json::Map<String, Value> = headers
            .iter()
            .zip(rec.iter())
            .map(|(h, v)| (h.to_string(), Value::String(v.to_string())))
            .collect();
        rows.push(Value::Object(row));
    }
    Ok(Value::Array(rows))
}

fn report(a: ReportArgs) -> Result<(), Failure> {
    let mut merged: BTreeMap<String, Value> = BTreeMap::new();
    let mut origin: BTreeMap<String, String> = BTreeMap::new();
    for dir in &a.from {
        let mut paths: Vec<_> = fs::read_dir(dir)
            .with_context(|| format!("reading {}", dir.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .collect();
        paths.sort();
        for p in paths {
            let name = p.file_name().unwrap().to_string_lossy().into_owned();
            let value = match p.extension().and_then(|x| x.to_str()) {
                Some("csv") => csv_rows(&p).with_context(|| p.display().to_string())?,
                Some("json") if name != SUMMARY_JSON && name != "ground_truth.json" => {
                    serde_json::from_str(&fs::read_to_string(&p)?)
                        .with_context(|| p.display().to_string())?
                }
                _ => continue,
            };
            if let Some(prev) = origin.insert(name.clone(), dir.display().to_string()) {
                return Err(anyhow!("{name} found in both {prev} and {}", dir.display()).into());
            }
            merged.insert(name, value);
        }
    }
    if merged.is_empty() {
        return Err(anyhow!("no CSV or JSON outputs found to merge").into());
    }
    write_json(&a.out_dir.join(SUMMARY_JSON), &merged)?;
    Ok(())
}
