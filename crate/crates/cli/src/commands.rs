use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Args;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};
use talr_core::dataset::{
    features_to_bytes, features_to_csv, gaussian_clusters, labels_to_bytes, labels_to_csv,
    SynthConfig,
};
use talr_core::eval::{
    audit_rows_csv, audit_summary_csv, evaluate, tiebreak_audit, AuditRow, AuditSummary,
};
use talr_core::gradient::{
    run_gradcheck, run_gradcheck_with, BackpropPath, FdOptions, GradcheckCase, ObjectiveSetup,
};
use talr_core::metrics::{MetricReport, RankMetric};
use talr_core::relaxed::{LogForm, Objective};
use talr_core::report::RunReport;
use talr_core::train::{train as fit, TrainConfig, TrainSet, ValidationSet};
use talr_core::{AffinityLevels, BinaryCodebook, HashModel64, Result, TalrError};

use crate::data::{AffinityArgs, DataArgs, Dataset};
use crate::{Failure, EXIT_NUMERIC};

// stdout may be a closed pipe (`talr eval | head`)
macro_rules! out {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

const GRADCHECK_TOLERANCE: f64 = 1e-4;

fn config_error(field: &'static str, reason: impl Into<String>) -> TalrError {
    TalrError::Config {
        field,
        reason: reason.into(),
    }
}

fn parse_objective(s: &str) -> Result<Objective> {
    s.parse()
}

fn parse_backprop(s: &str) -> Result<BackpropPath> {
    serde_json::from_value(json!(s.replace('-', "_").to_lowercase())).map_err(|_| {
        config_error(
            "backprop",
            format!("unknown path `{s}` (expected fused, matrix, naive or naive_numeric)"),
        )
    })
}

fn parse_log_form(s: &str) -> Result<LogForm> {
    match s.to_lowercase().as_str() {
        "shifted" => Ok(LogForm::Shifted),
        "unshifted" => Ok(LogForm::Unshifted),
        _ => Err(config_error(
            "log_form",
            format!("unknown form `{s}` (expected shifted or unshifted)"),
        )),
    }
}

fn parse_pair(s: &str) -> std::result::Result<(usize, usize), String> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| format!("expected BIT,COL, got `{s}`"))?;
    let p = |x: &str| x.trim().parse::<usize>().map_err(|e| e.to_string());
    Ok((p(a)?, p(b)?))
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn select_codes(codes: &BinaryCodebook, rows: &[usize]) -> Result<BinaryCodebook> {
    BinaryCodebook::from_pm1(&codes.to_pm1().select_rows(rows))
}

fn write_report(report: &mut RunReport, path: Option<&Path>) -> Result<()> {
    report.seal()?;
    if let Some(p) = path {
        report.save(p)?;
    }
    Ok(())
}

fn print_metrics(metrics: &[MetricReport]) {
    for m in metrics {
        let mean = m
            .mean
            .map_or("undefined".to_string(), |v| format!("{v:.6}"));
        let cutoff = m.cutoff.map_or(String::new(), |k| format!(" (k = {k})"));
        out!(
            "{}{cutoff}: {mean} over {} queries, {} undefined",
            m.metric,
            m.num_defined,
            m.num_undefined
        );
    }
}

/// Tie-aware metrics plus pessimistic/optimistic tie-breaking bounds.
fn ranking_metrics(
    queries: &BinaryCodebook,
    database: &BinaryCodebook,
    affinities: &[AffinityLevels],
    k: Option<usize>,
    tiebreak: bool,
    seed: u64,
) -> Result<Vec<MetricReport>> {
    let rows = |q: usize| Ok(affinities[q].clone());
    let res = evaluate(queries, database, &rows, k)?;
    let mut out = vec![res.ap];
    out.extend(res.ap_at_k);
    out.push(res.dcg);
    out.push(res.ndcg);
    if tiebreak {
        for (metric, name) in [(RankMetric::Ap, "AP"), (RankMetric::Ndcg, "NDCG")] {
            let (audit, _) = tiebreak_audit(queries, database, &rows, metric, seed)?;
            let mut lo = vec![None; queries.num_items()];
            let mut hi = vec![None; queries.num_items()];
            for r in &audit {
                lo[r.query] = Some(r.pessimistic);
                hi[r.query] = Some(r.optimistic);
            }
            out.push(MetricReport::from_values(
                format!("{name}_pessimistic"),
                None,
                lo,
            ));
            out.push(MetricReport::from_values(
                format!("{name}_optimistic"),
                None,
                hi,
            ));
        }
    }
    Ok(out)
}

/// Everything `train` can read from a JSON config; flags override it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub bits: usize,
    pub bias: bool,
    /// Cutoff for the AP@k report.
    pub eval_k: Option<usize>,
    pub affinity: AffinityArgs,
    pub training: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            bits: 16,
            bias: false,
            eval_k: Some(5000),
            affinity: AffinityArgs::default(),
            training: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub affinity: AffinityArgs,
    /// JSON config; flags given on the command line take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub bits: Option<usize>,
    /// Append a constant input so each hash function has a bias.
    #[arg(long)]
    pub bias: bool,
    /// AP_s, DCG_s, AP_r or DCG_r.
    #[arg(long)]
    pub objective: Option<String>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub momentum: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Initial tanh scale.
    #[arg(long, allow_negative_numbers = true)]
    pub alpha: Option<f64>,
    /// Per-epoch multiplier of the tanh scale.
    #[arg(long)]
    pub alpha_growth: Option<f64>,
    #[arg(long)]
    pub alpha_cap: Option<f64>,
    /// Width of the triangular histogram kernel.
    #[arg(long, allow_negative_numbers = true)]
    pub delta: Option<f64>,
    /// fused, matrix, naive or naive_numeric.
    #[arg(long)]
    pub backprop: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Cutoff for the AP@k report.
    #[arg(long)]
    pub k: Option<usize>,
    /// Start from this checkpoint instead of a random model.
    #[arg(long)]
    pub init: Option<PathBuf>,
    /// Skip the per-epoch held-out evaluation.
    #[arg(long)]
    pub no_validation: bool,
    /// Checkpoint to write.
    #[arg(long)]
    pub out: PathBuf,
    /// JSON run report to write.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

impl TrainArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => serde_json::from_slice::<RunConfig>(&std::fs::read(p)?)
                .map_err(|e| config_error("config", e.to_string()))?,
            None => RunConfig::default(),
        };
        cfg.affinity.merge(&self.affinity);
        let t = &mut cfg.training;
        if let Some(v) = self.bits {
            cfg.bits = v;
        }
        cfg.bias |= self.bias;
        if let Some(k) = self.k {
            cfg.eval_k = Some(k);
        }
        if let Some(o) = &self.objective {
            t.objective = parse_objective(o)?;
        }
        if let Some(v) = self.batch_size {
            t.batch_size = v;
        }
        if let Some(v) = self.lr {
            t.learning_rate = v;
        }
        if let Some(v) = self.momentum {
            t.momentum = v;
        }
        if let Some(v) = self.epochs {
            t.epochs = v;
        }
        if let Some(v) = self.alpha {
            t.alpha = v;
            if self.alpha_cap.is_none() {
                t.alpha_cap = t.alpha_cap.max(v);
            }
        }
        if let Some(v) = self.alpha_growth {
            t.alpha_growth = v;
        }
        if let Some(v) = self.alpha_cap {
            t.alpha_cap = v;
        }
        if let Some(v) = self.delta {
            t.bin_slope = v;
        }
        if let Some(b) = &self.backprop {
            t.backprop = parse_backprop(b)?;
        }
        if let Some(v) = self.seed {
            t.seed = v;
        }
        if cfg.bits == 0 {
            return Err(config_error("bits", "must be at least 1"));
        }
        if cfg.eval_k == Some(0) {
            return Err(config_error("k", "must be at least 1"));
        }
        cfg.training.validate()?;
        Ok(cfg)
    }
}

pub fn train(args: TrainArgs) -> std::result::Result<(), Failure> {
    let cfg = args.resolve()?;
    let t = &cfg.training;
    let ds = Dataset::load(&args.data, &cfg.affinity, t.seed)?;
    if !ds.has_features {
        return Err(config_error("features", "training needs a feature file").into());
    }
    let dim = ds.data.features.cols();
    let mut model = match &args.init {
        Some(p) => {
            let mut m = HashModel64::load(p)?;
            m.set_alpha(t.alpha);
            m
        }
        None => HashModel64::random(
            cfg.bits,
            dim,
            cfg.bias,
            t.alpha,
            &mut ChaCha8Rng::seed_from_u64(t.seed),
        )?,
    };
    let validation = if args.no_validation || ds.split.query.is_empty() {
        None
    } else {
        Some(ValidationSet::new(
            &ds.data,
            &ds.oracle,
            &ds.split.query,
            &ds.split.database,
            t.metric(),
        )?)
    };
    let set = TrainSet {
        data: &ds.data,
        rows: &ds.split.train,
        oracle: &ds.oracle,
    };
    let start = Instant::now();
    let history = fit(&mut model, &set, t, validation.as_ref(), &mut |e| {
        eprintln!(
            "epoch {:>3}  objective {:.5}  exact {:.5}  |code| {:.4}  alpha {:.3}  lr {:.3e}{}",
            e.epoch,
            e.objective,
            e.exact_metric,
            e.mean_abs_code,
            e.alpha,
            e.learning_rate,
            e.validation
                .map_or(String::new(), |v| format!("  validation {v:.5}"))
        )
    })?;
    let train_secs = start.elapsed().as_secs_f64();
    model.save(&args.out)?;

    let mut report = RunReport::new("train", serde_json::to_value(&cfg)?);
    let start = Instant::now();
    if !ds.split.query.is_empty() && !ds.split.database.is_empty() {
        let q = model.encode(&ds.data.features.select_rows(&ds.split.query))?;
        let db = model.encode(&ds.data.features.select_rows(&ds.split.database))?;
        report.metrics =
            ranking_metrics(&q, &db, &ds.query_affinities()?, cfg.eval_k, true, t.seed)?;
    }
    report.timings.insert("train".into(), train_secs);
    report
        .timings
        .insert("eval".into(), start.elapsed().as_secs_f64());
    report.history = Some(history);
    report.details = json!({
        "checkpoint_sha256": sha256_hex(&model.to_bytes()?),
        "num_bits": model.num_bits(),
        "input_dim": model.input_dim(),
        "affinity_mode": ds.oracle.mode,
        "threshold_cuts": ds.oracle.cuts,
    });
    write_report(&mut report, args.report.as_deref())?;
    print_metrics(&report.metrics);
    out!("report sha256 {}", report.content_sha256);
    Ok(())
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub affinity: AffinityArgs,
    /// Hash model checkpoint applied to the features.
    #[arg(long, required_unless_present = "codes", conflicts_with = "codes")]
    pub model: Option<PathBuf>,
    /// TALRCODE codebook with one row per item.
    #[arg(long)]
    pub codes: Option<PathBuf>,
    /// Cutoff for AP@k; clamped to the database size.
    #[arg(long, default_value_t = 5000)]
    pub k: usize,
    /// Seeds the threshold sampling.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Leave out the tie-breaking bounds.
    #[arg(long)]
    pub skip_tiebreak: bool,
    /// Write the codes of every item (with --model).
    #[arg(long, requires = "model")]
    pub out_codes: Option<PathBuf>,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

pub fn eval(args: EvalArgs) -> std::result::Result<(), Failure> {
    if args.k == 0 {
        return Err(config_error("k", "must be at least 1").into());
    }
    let start = Instant::now();
    let (ds, all_codes) = match (&args.model, &args.codes) {
        (Some(p), _) => {
            let model = HashModel64::load(p)?;
            let ds = Dataset::load(&args.data, &args.affinity, args.seed)?;
            if !ds.has_features {
                return Err(config_error("features", "--model needs a feature file").into());
            }
            let codes = model.encode(&ds.data.features)?;
            (ds, codes)
        }
        (None, Some(p)) => {
            let codes = BinaryCodebook::load(p)?;
            let ds = Dataset::load_with(
                &args.data,
                &args.affinity,
                args.seed,
                Some(codes.num_items()),
            )?;
            if ds.data.features.rows() != codes.num_items() {
                return Err(TalrError::Dimension(format!(
                    "{} codes for {} items",
                    codes.num_items(),
                    ds.data.features.rows()
                ))
                .into());
            }
            (ds, codes)
        }
        (None, None) => return Err(Failure::usage("pass --model or --codes")),
    };
    if let Some(p) = &args.out_codes {
        all_codes.save(p)?;
    }
    let load_secs = start.elapsed().as_secs_f64();
    let start = Instant::now();
    let q = select_codes(&all_codes, &ds.split.query)?;
    let db = select_codes(&all_codes, &ds.split.database)?;
    let mut report = RunReport::new(
        "eval",
        json!({
            "k": args.k,
            "seed": args.seed,
            "affinity": args.affinity,
            "num_bits": all_codes.num_bits(),
            "num_queries": q.num_items(),
            "num_database": db.num_items(),
        }),
    );
    report.metrics = ranking_metrics(
        &q,
        &db,
        &ds.query_affinities()?,
        Some(args.k),
        !args.skip_tiebreak,
        args.seed,
    )?;
    report.timings.insert("load".into(), load_secs);
    report
        .timings
        .insert("eval".into(), start.elapsed().as_secs_f64());
    write_report(&mut report, args.report.as_deref())?;
    print_metrics(&report.metrics);
    Ok(())
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub affinity: AffinityArgs,
    /// Code lengths of seeded random linear hashes to audit.
    #[arg(long, value_delimiter = ',')]
    pub bits: Vec<usize>,
    /// Trained checkpoints to audit; repeatable.
    #[arg(long)]
    pub model: Vec<PathBuf>,
    /// Codebooks with one row per item; repeatable.
    #[arg(long)]
    pub codes: Vec<PathBuf>,
    /// ap or ndcg.
    #[arg(long, default_value = "ap")]
    pub metric: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Per-query table.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Per-code-length table; printed when not given.
    #[arg(long)]
    pub summary_csv: Option<PathBuf>,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

pub fn audit(args: AuditArgs) -> std::result::Result<(), Failure> {
    let metric = match args.metric.to_lowercase().as_str() {
        "ap" => RankMetric::Ap,
        "ndcg" => RankMetric::Ndcg,
        other => {
            return Err(config_error(
                "metric",
                format!("unknown metric `{other}` (expected ap or ndcg)"),
            )
            .into())
        }
    };
    let bits = if args.bits.is_empty() && args.model.is_empty() && args.codes.is_empty() {
        vec![12, 24, 32, 48]
    } else {
        args.bits.clone()
    };
    if bits.contains(&0) {
        return Err(config_error("bits", "must be at least 1").into());
    }
    let codebooks = args
        .codes
        .iter()
        .map(BinaryCodebook::load)
        .collect::<Result<Vec<_>>>()?;
    let num_items = codebooks.first().map(BinaryCodebook::num_items);
    let ds = Dataset::load_with(&args.data, &args.affinity, args.seed, num_items)?;
    let mut all = codebooks;
    if !bits.is_empty() || !args.model.is_empty() {
        if !ds.has_features {
            return Err(config_error("features", "random or trained hashes need features").into());
        }
        let dim = ds.data.features.cols();
        for &b in &bits {
            let mut rng = ChaCha8Rng::seed_from_u64(args.seed.wrapping_add(b as u64));
            let model = HashModel64::random(b, dim, false, 1.0, &mut rng)?;
            all.push(model.encode(&ds.data.features)?);
        }
        for p in &args.model {
            all.push(HashModel64::load(p)?.encode(&ds.data.features)?);
        }
    }
    let affinities = ds.query_affinities()?;
    let start = Instant::now();
    let mut rows: Vec<AuditRow> = Vec::new();
    let mut summaries: Vec<AuditSummary> = Vec::new();
    for codes in &all {
        if codes.num_items() != ds.data.features.rows() {
            return Err(TalrError::Dimension(format!(
                "{} codes for {} items",
                codes.num_items(),
                ds.data.features.rows()
            ))
            .into());
        }
        let q = select_codes(codes, &ds.split.query)?;
        let db = select_codes(codes, &ds.split.database)?;
        let (r, s) = tiebreak_audit(&q, &db, &|i| Ok(affinities[i].clone()), metric, args.seed)?;
        rows.extend(r);
        summaries.push(s);
    }
    let mut report = RunReport::new(
        "tiebreak-audit",
        json!({
            "metric": metric,
            "seed": args.seed,
            "bits": bits,
            "models": args.model,
            "codes": args.codes,
            "affinity": args.affinity,
        }),
    );
    report.tiebreak = summaries.clone();
    report.details = json!({ "rows": rows });
    report
        .timings
        .insert("audit".into(), start.elapsed().as_secs_f64());
    write_report(&mut report, args.report.as_deref())?;
    if let Some(p) = &args.csv {
        std::fs::write(p, audit_rows_csv(&rows)).map_err(TalrError::from)?;
    }
    let table = audit_summary_csv(&summaries);
    match &args.summary_csv {
        Some(p) => std::fs::write(p, table).map_err(TalrError::from)?,
        None => out!("{}", table.trim_end()),
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Check only this objective (default: all four).
    #[arg(long)]
    pub objective: Option<String>,
    /// Items per batch.
    #[arg(long, default_value_t = 12)]
    pub batch: usize,
    #[arg(long, default_value_t = 6)]
    pub bits: usize,
    /// Feature dimension of synthetic batches.
    #[arg(long, default_value_t = 8)]
    pub dim: usize,
    /// Affinity levels of synthetic batches.
    #[arg(long, default_value_t = 3)]
    pub levels: usize,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    pub delta: f64,
    #[arg(long, default_value = "fused")]
    pub backprop: String,
    /// shifted or unshifted.
    #[arg(long, default_value = "shifted")]
    pub log_form: String,
    #[arg(long, default_value_t = 1e-5)]
    pub step: f64,
    #[arg(long, default_value_t = 10)]
    pub max_resamples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Test hook: perturb the analytic gradient at BIT,COL.
    #[arg(long, value_parser = parse_pair)]
    pub corrupt_coordinate: Option<(usize, usize)>,
    /// Draw batches from the training split of a dataset instead.
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub affinity: AffinityArgs,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

pub fn gradcheck(args: GradcheckArgs) -> std::result::Result<(), Failure> {
    let objectives = match &args.objective {
        Some(o) => vec![parse_objective(o)?],
        None => Objective::ALL.to_vec(),
    };
    if args.batch < 2 || args.bits == 0 || args.dim == 0 {
        return Err(config_error("batch", "need batch >= 2, bits >= 1 and dim >= 1").into());
    }
    let path = parse_backprop(&args.backprop)?;
    let log_form = parse_log_form(&args.log_form)?;
    let use_file = args.data.data.is_some() || args.data.features.is_some();
    let ds = if use_file {
        let ds = Dataset::load(&args.data, &args.affinity, args.seed)?;
        if ds.split.train.len() < args.batch {
            return Err(TalrError::InvalidInput(format!(
                "{} training rows for batches of {}",
                ds.split.train.len(),
                args.batch
            ))
            .into());
        }
        Some(ds)
    } else {
        None
    };
    let opts = FdOptions {
        step: args.step,
        seed: args.seed,
        corrupt: args.corrupt_coordinate,
        ..FdOptions::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let mut results = Vec::new();
    let mut failed = Vec::new();
    let start = Instant::now();
    for obj in objectives {
        let mut setup = ObjectiveSetup::new(obj);
        setup.path = path;
        setup.bin_slope = args.delta;
        setup.options.log_form = log_form;
        let outcome = match &ds {
            None => run_gradcheck(
                &mut rng,
                &setup,
                args.batch,
                args.bits,
                args.dim,
                args.levels,
                args.alpha,
                args.max_resamples,
                &opts,
            )?,
            Some(ds) => run_gradcheck_with(&setup, args.max_resamples, &opts, || {
                let rows: Vec<usize> = sample(&mut rng, ds.split.train.len(), args.batch)
                    .into_iter()
                    .map(|i| ds.split.train[i])
                    .collect();
                let model = HashModel64::random(
                    args.bits,
                    ds.data.features.cols(),
                    false,
                    args.alpha,
                    &mut rng,
                )?;
                Ok(GradcheckCase {
                    model,
                    features: ds.data.features.select_rows(&rows),
                    affinities: ds.oracle.batch(&ds.data, &rows)?,
                })
            })?,
        };
        let r = &outcome.report;
        let pass = r.max_rel_error <= GRADCHECK_TOLERANCE;
        out!(
            "{:<6} path {:<13} max_rel_error {:.3e}  worst (bit {}, col {})  analytic {:.6e}  numeric {:.6e}  coords {}  resamples {}{}  {}",
            obj.name(),
            serde_json::to_value(outcome.path)?.as_str().unwrap_or_default(),
            r.max_rel_error,
            r.worst.0,
            r.worst.1,
            r.analytic,
            r.numeric,
            r.coordinates_checked,
            outcome.resamples,
            if outcome.kink_adjacent { " (kink-adjacent)" } else { "" },
            if pass { "PASS" } else { "FAIL" }
        );
        if !pass {
            failed.push(format!(
                "{} at coordinate (bit {}, col {}): relative error {:.3e}",
                obj.name(),
                r.worst.0,
                r.worst.1,
                r.max_rel_error
            ));
        }
        results.push(outcome);
    }
    let mut report = RunReport::new(
        "gradcheck",
        json!({
            "batch": args.batch,
            "bits": args.bits,
            "dim": args.dim,
            "levels": args.levels,
            "alpha": args.alpha,
            "delta": args.delta,
            "backprop": path,
            "log_form": log_form,
            "step": args.step,
            "seed": args.seed,
            "tolerance": GRADCHECK_TOLERANCE,
            "corrupt_coordinate": args.corrupt_coordinate,
            "from_file": use_file,
        }),
    );
    report.details = json!({ "objectives": results, "passed": failed.is_empty() });
    report
        .timings
        .insert("gradcheck".into(), start.elapsed().as_secs_f64());
    write_report(&mut report, args.report.as_deref())?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure {
            code: EXIT_NUMERIC,
            message: format!("gradient check failed: {}", failed.join("; ")),
        })
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory; created if missing.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub classes: usize,
    #[arg(long, default_value_t = 32)]
    pub dim: usize,
    #[arg(long, default_value_t = 2000)]
    pub train: usize,
    #[arg(long, default_value_t = 400)]
    pub query: usize,
    #[arg(long, default_value_t = 1600)]
    pub database: usize,
    /// Distance between cluster centres in units of sigma.
    #[arg(long, default_value_t = 4.0)]
    pub separation: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write CSV instead of binary features and labels.
    #[arg(long)]
    pub csv: bool,
}

pub fn synth(args: SynthArgs) -> std::result::Result<(), Failure> {
    let cfg = SynthConfig {
        classes: args.classes,
        dim: args.dim,
        train: args.train,
        query: args.query,
        database: args.database,
        separation: args.separation,
        sigma: args.sigma,
        seed: args.seed,
    };
    let data = gaussian_clusters(&cfg)?;
    std::fs::create_dir_all(&args.out).map_err(TalrError::from)?;
    let write = |name: &str, bytes: Vec<u8>| -> Result<()> {
        std::fs::write(args.out.join(name), bytes)?;
        Ok(())
    };
    if args.csv {
        write("features.csv", features_to_csv(&data.features).into_bytes())?;
        write("labels.csv", labels_to_csv(&data.labels).into_bytes())?;
    } else {
        write("features.bin", features_to_bytes(&data.features)?)?;
        write("labels.bin", labels_to_bytes(&data.labels)?)?;
    }
    data.split.save(args.out.join("split.json"))?;
    out!(
        "wrote {} items ({} train, {} query, {} database) in {} dims to {}",
        data.features.rows(),
        cfg.train,
        cfg.query,
        cfg.database,
        cfg.dim,
        args.out.display()
    );
    Ok(())
}
