//! Command-line interface and the end-to-end audit pipeline.
//!
//! `run_audit` is the library entry point the `audit` subcommand (and the
//! examples) drive: ingest → fit → every KPI module → scored report.

use crate::accuracy::per_group_accuracy;
use crate::audit::{
    self, assemble_report, Annotation, Annotations, AuditReport, KpiEntry, Metadata,
    ModelSummary, RagBands, ASSUMPTIONS_ANNOTATION_KEY, BAND_CONVENTION_NOTE, VIF_GREEN_NOTE,
};
use crate::config::{sha256_hex, AuditConfig, OutputFormat};
use crate::error::{AuditError, Result};
use crate::explain_eval::{
    evaluate_explainer_with, instance_comparison, training_scales, EvalSettings, GroupEval,
    Protocol,
};
use crate::explainers::{BackgroundSet, LimeConfig, Method};
use crate::fairness::{
    diff_ind_mlm_scan, disparate_impact, equalized_odds, scan_similar_pairs, statistical_parity,
    GroupFairnessInput, PairScanOutcome, SimilaritySpec,
};
use crate::ingest::{derive_target, load_csv, split, Dataset};
use crate::mlm::{fit, MlmModel};
use crate::stattests::{breusch_pagan_variant, random_effect_normality, shapiro_wilk, vif,
    EffectNormality, SWT_MAX_N};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

/// Exit code when `--fail-on-red` finds at least one red KPI.
pub const EXIT_RED_GATE: i32 = 3;
/// Exit code for operational failures (bad input, I/O, numerical trouble).
pub const EXIT_ERROR: i32 = 1;

// ---------------------------------------------------------------------------
// pipeline
// ---------------------------------------------------------------------------

/// Everything the audit produced.
#[derive(Debug, Clone)]
pub struct AuditOutcome {
    pub report: AuditReport,
    pub model: MlmModel,
}

fn now_timestamp() -> String {
    let secs = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    format!("unix:{secs}")
}

/// Hard and soft predictions for every row of `data`.
fn predictions(model: &MlmModel, data: &Dataset, threshold: f64) -> Result<(Vec<f64>, Vec<u8>)> {
    let mut probs = Vec::with_capacity(data.n_rows());
    let mut preds = Vec::with_capacity(data.n_rows());
    for i in 0..data.n_rows() {
        let p = model.predict_proba(&data.features[i], &data.group[i])?;
        probs.push(p);
        preds.push(u8::from(p >= threshold));
    }
    Ok((probs, preds))
}

/// Errors that describe a data shape rather than a bug: reported as flagged
/// non-results instead of aborting the audit.
fn data_shape_flag(e: &AuditError) -> Option<String> {
    match e {
        AuditError::EmptySide(_)
        | AuditError::ZeroDenominator
        | AuditError::UndefinedRate { .. }
        | AuditError::InsufficientGroups { .. } => Some(e.to_string()),
        _ => None,
    }
}

fn vif_entry(full: &Dataset, bands: &RagBands) -> Result<KpiEntry> {
    if full.n_features() < 2 {
        return KpiEntry::non_result(
            "vif",
            Value::Null,
            vec!["needs at least two feature columns".into(), VIF_GREEN_NOTE.into()],
        );
    }
    let columns: Vec<Vec<f64>> = (0..full.n_features())
        .map(|k| full.features.iter().map(|r| r[k]).collect())
        .collect();
    let values = vif(&columns, &full.feature_names)?;
    let worst = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let per_feature: BTreeMap<&str, Value> = full
        .feature_names
        .iter()
        .zip(&values)
        .map(|(name, v)| {
            let cell = if v.is_finite() { json!(v) } else { json!("inf") };
            (name.as_str(), cell)
        })
        .collect();
    let mut flags = vec![
        "headline is the worst per-feature value; the breakdown is per feature".to_string(),
        VIF_GREEN_NOTE.to_string(),
    ];
    let high: Vec<&str> = full
        .feature_names
        .iter()
        .zip(&values)
        .filter(|(_, v)| **v > 5.0)
        .map(|(n, _)| n.as_str())
        .collect();
    if !high.is_empty() {
        flags.push(format!("collinear features: {}", high.join(", ")));
    }
    KpiEntry::scored("vif", "vif", worst, json!(per_feature), flags, bands)
}

fn residual_test_entries(
    model: &MlmModel,
    full: &Dataset,
    cfg: &AuditConfig,
    bands: &RagBands,
) -> Result<(KpiEntry, KpiEntry)> {
    let residuals = model.residuals(full, cfg.stattests.residual_kind)?;
    let mut swt_flags = vec![format!(
        "computed on {:?} residuals over all {} rows",
        cfg.stattests.residual_kind,
        full.n_rows()
    )];
    if residuals.clamped_rows > 0 {
        swt_flags.push(format!(
            "{} fitted probabilities clamped away from 0/1",
            residuals.clamped_rows
        ));
    }
    let mut bpt_flags = swt_flags.clone();

    let swt_sample: Vec<f64> = if residuals.values.len() > SWT_MAX_N {
        swt_flags.push(format!(
            "normality test subsampled {} of {} residuals (even stride)",
            SWT_MAX_N,
            residuals.values.len()
        ));
        (0..SWT_MAX_N)
            .map(|i| residuals.values[i * residuals.values.len() / SWT_MAX_N])
            .collect()
    } else {
        residuals.values.clone()
    };
    let swt = shapiro_wilk(&swt_sample)?;
    swt_flags.push(format!("W = {:.6}, n = {}", swt.statistic, swt.sample_size));
    if let Some(note) = &swt.notes {
        swt_flags.push(note.clone());
    }
    let swt_entry = KpiEntry::scored("swt", "swt", swt.p_value, Value::Null, swt_flags, bands)?;

    let bpt = breusch_pagan_variant(&residuals, &full.features, cfg.stattests.bp_form)?;
    bpt_flags.push(format!(
        "LM = {:.6} ({:?} form), n = {}",
        bpt.statistic, cfg.stattests.bp_form, bpt.sample_size
    ));
    if let Some(note) = &bpt.notes {
        bpt_flags.push(note.clone());
    }
    let bpt_entry = KpiEntry::scored("bpt", "bpt", bpt.p_value, Value::Null, bpt_flags, bands)?;
    Ok((swt_entry, bpt_entry))
}

fn effect_normality_entry(model: &MlmModel, bands: &RagBands) -> Result<KpiEntry> {
    match random_effect_normality(model)? {
        EffectNormality::InsufficientGroups { have, need } => KpiEntry::non_result(
            "random_effect_normality",
            Value::Null,
            vec![format!(
                "screen skipped: needs at least {need} groups, model has {have}"
            )],
        ),
        EffectNormality::Tested(results) => {
            let per_family: BTreeMap<String, Value> = results
                .iter()
                .map(|(family, r)| (family.clone(), json!({"p": r.p_value, "w": r.statistic})))
                .collect();
            let worst = results
                .iter()
                .map(|(_, r)| r.p_value)
                .fold(f64::INFINITY, f64::min);
            KpiEntry::scored(
                "random_effect_normality",
                "swt",
                worst,
                json!(per_family),
                vec!["headline is the smallest per-family p-value".into()],
                bands,
            )
        }
    }
}

fn accuracy_entries(
    model: &MlmModel,
    test: &Dataset,
    threshold: f64,
    bands: &RagBands,
) -> Result<(KpiEntry, KpiEntry)> {
    let acc = per_group_accuracy(model, test, threshold)?;
    let per_group: BTreeMap<&str, Value> = acc
        .per_group
        .iter()
        .map(|g| {
            (
                g.group.as_str(),
                json!({"f1": g.f1, "auc": g.auc, "n_rows": g.n_rows, "note": g.note}),
            )
        })
        .collect();
    let mut flags = vec![format!(
        "macro average over {} groups of the test split",
        acc.per_group.len()
    )];
    if !acc.excluded_groups.is_empty() {
        flags.push(format!(
            "groups excluded from at least one average: {}",
            acc.excluded_groups.join(", ")
        ));
    }
    let auc = KpiEntry::scored(
        "auc_roc",
        "auc_roc",
        acc.average_auc,
        json!(per_group),
        flags.clone(),
        bands,
    )?;
    let f1 = KpiEntry::scored(
        "f1",
        "f1",
        acc.average_f1,
        json!(per_group),
        flags,
        bands,
    )?;
    Ok((auc, f1))
}

fn group_fairness_entries(
    model: &MlmModel,
    test: &Dataset,
    cfg: &AuditConfig,
    bands: &RagBands,
) -> Result<Vec<KpiEntry>> {
    let (_, y_pred) = predictions(model, test, cfg.model.decision_threshold)?;
    let input = GroupFairnessInput::from_dataset(
        test,
        y_pred,
        &cfg.dataset.sensitive_privileged_value,
    )?;

    // SP and DI: headline over the whole test split, per-group breakdown.
    let mut entries = Vec::new();
    for (name, f) in [
        ("sp", statistical_parity as fn(&GroupFairnessInput) -> Result<f64>),
        ("di", disparate_impact as fn(&GroupFairnessInput) -> Result<f64>),
    ] {
        let mut per_group = BTreeMap::new();
        let mut flags = vec![format!(
            "privileged class: {} = {:?}; evaluated on the test split",
            cfg.dataset.sensitive_column, cfg.dataset.sensitive_privileged_value
        )];
        for g in &test.groups {
            match f(&input.slice_group(g)) {
                Ok(v) => {
                    per_group.insert(g.clone(), json!(v));
                }
                Err(e) => match data_shape_flag(&e) {
                    Some(why) => {
                        per_group.insert(g.clone(), Value::Null);
                        flags.push(format!("group {g}: {why}"));
                    }
                    None => return Err(e),
                },
            }
        }
        match f(&input) {
            Ok(v) => entries.push(KpiEntry::scored(
                name,
                name,
                v,
                json!(per_group),
                flags,
                bands,
            )?),
            Err(e) => match data_shape_flag(&e) {
                Some(why) => {
                    flags.push(why);
                    entries.push(KpiEntry::non_result(name, json!(per_group), flags)?);
                }
                None => return Err(e),
            },
        }
    }

    // Equalized odds is scored per group; the headline is the worst group.
    let mut per_group = BTreeMap::new();
    let mut flags = vec!["headline is the worst per-group score".to_string()];
    let mut worst: Option<(String, f64)> = None;
    for g in &test.groups {
        match equalized_odds(&input.slice_group(g)) {
            Ok(eo) => {
                per_group.insert(
                    g.clone(),
                    json!({
                        "equal_odds": eo.equal_odds,
                        "diff_fpr": eo.diff_fpr,
                        "diff_tpr": eo.diff_tpr,
                    }),
                );
                if worst.as_ref().map_or(true, |(_, w)| eo.equal_odds > *w) {
                    worst = Some((g.clone(), eo.equal_odds));
                }
            }
            Err(e) => match data_shape_flag(&e) {
                Some(why) => {
                    per_group.insert(g.clone(), Value::Null);
                    flags.push(format!("group {g}: {why}"));
                }
                None => return Err(e),
            },
        }
    }
    match worst {
        Some((g, v)) => {
            flags.push(format!("worst group: {g}"));
            entries.push(KpiEntry::scored(
                "equal_odds",
                "equal_odds",
                v,
                json!(per_group),
                flags,
                bands,
            )?);
        }
        None => {
            flags.push("undefined in every group on this test split".into());
            entries.push(KpiEntry::non_result("equal_odds", json!(per_group), flags)?);
        }
    }
    Ok(entries)
}

fn individual_fairness_entries(
    model: &MlmModel,
    train: &Dataset,
    full: &Dataset,
    test: &Dataset,
    cfg: &AuditConfig,
    bands: &RagBands,
) -> Result<Vec<KpiEntry>> {
    let spec = SimilaritySpec::from_training(
        train,
        &cfg.similarity.excluded_features,
        cfg.similarity.delta,
    )?;
    let mut entries = Vec::new();

    // Similar-pair scan over every row of the dataset: local smoothness is a
    // property of the fitted surface, so the scan uses all available rows.
    let scans = scan_similar_pairs(model, full, &spec)?;
    let mut per_group = BTreeMap::new();
    let mut flags = vec![format!(
        "similarity: scaled Euclidean distance <= {} (scales from the training split); \
         scanned all {} rows; headline is the worst per-group max difference",
        cfg.similarity.delta,
        full.n_rows()
    )];
    if !cfg.similarity.excluded_features.is_empty() {
        flags.push(format!(
            "features excluded from the distance: {}",
            cfg.similarity.excluded_features.join(", ")
        ));
    }
    let mut worst: Option<f64> = None;
    let mut total_pairs = 0usize;
    for scan in &scans {
        match &scan.outcome {
            PairScanOutcome::Pairs(stats) => {
                per_group.insert(
                    scan.group.clone(),
                    json!({
                        "max_diff": stats.max_diff,
                        "mean_diff": stats.mean_diff,
                        "pair_count": stats.pair_count,
                    }),
                );
                total_pairs += stats.pair_count;
                if worst.map_or(true, |w| stats.max_diff > w) {
                    worst = Some(stats.max_diff);
                }
            }
            PairScanOutcome::NoSimilarPairs => {
                per_group.insert(scan.group.clone(), json!("no_similar_pairs"));
                flags.push(format!("group {}: no similar pairs at this delta", scan.group));
            }
        }
    }
    flags.push(format!("{total_pairs} qualifying pairs in total"));
    match worst {
        Some(v) => entries.push(KpiEntry::scored(
            "diff_ind",
            "diff_ind",
            v,
            json!(per_group),
            flags,
            bands,
        )?),
        None => {
            flags.push("no group had a similar pair; consider a larger delta".into());
            entries.push(KpiEntry::non_result("diff_ind", json!(per_group), flags)?);
        }
    }

    // Cross-group counterfactual: per test instance, the worst probability
    // change a group swap could cause; headline averages those worst cases.
    match diff_ind_mlm_scan(model, test) {
        Ok(scan) => {
            let per_pair: BTreeMap<String, Value> = scan
                .pair_means
                .iter()
                .map(|(a, b, m)| (format!("{a}|{b}"), json!(m)))
                .collect();
            let flags = vec![
                format!(
                    "mean over {} test instances of the per-instance worst group-pair gap",
                    scan.n_instances
                ),
                format!("absolute worst instance gap: {:.6}", scan.max_worst_case),
                "breakdown is the mean gap per group pair".to_string(),
            ];
            entries.push(KpiEntry::scored(
                "diff_ind_mlm",
                "diff_ind_mlm",
                scan.mean_worst_case,
                json!(per_pair),
                flags,
                bands,
            )?);
        }
        Err(e) => match data_shape_flag(&e) {
            Some(why) => {
                entries.push(KpiEntry::non_result("diff_ind_mlm", Value::Null, vec![why])?)
            }
            None => return Err(e),
        },
    }
    Ok(entries)
}

/// Shared convention note on every explainability row.
const EXPLAIN_CONVENTION_NOTE: &str =
    "sensitive to attribution conventions: intrinsic contributions are beta*x, kernel SHAP \
     contributions are beta*(x - background mean), surrogate contributions are slope*x; \
     rank and sign agreement shift with feature centering";

fn explainability_entries(
    model: &MlmModel,
    train: &Dataset,
    cfg: &AuditConfig,
    bands: &RagBands,
    progress: &mut dyn FnMut(&str),
) -> Result<Vec<KpiEntry>> {
    let protocol = Protocol {
        n_instances: cfg.protocol.n_instances,
        n_repeats: cfg.protocol.n_repeats,
        seed: cfg.seed,
    };
    let settings = EvalSettings {
        background_max_rows: cfg.explainers.background_max_rows,
        lime_n_samples: cfg.explainers.lime.n_samples,
        lime_ridge_lambda: cfg.explainers.lime.ridge_lambda,
        lime_kernel_width: cfg.explainers.lime.kernel_width,
    };
    let mut entries = Vec::new();
    for method in [Method::KernelShap, Method::LinearLime] {
        progress(&format!("evaluating {method} against intrinsic attributions"));
        let eval = evaluate_explainer_with(model, train, method, &protocol, &settings)?;
        let shared_flags = method_flags(&eval.per_group, &protocol);
        for (kpi, larger_is_worse) in [("rho_order", false), ("pux", true), ("poifs", true)] {
            let name = format!("{kpi}_{method}");
            let mut per_group = BTreeMap::new();
            let mut headline: Option<f64> = None;
            for ge in &eval.per_group {
                let summary = match kpi {
                    "rho_order" => &ge.rho_order,
                    "pux" => &ge.pux,
                    _ => &ge.poifs,
                };
                match summary {
                    Some(s) => {
                        per_group
                            .insert(ge.group.clone(), json!({"mean": s.mean, "std": s.std}));
                        let better = headline.map_or(true, |h| {
                            if larger_is_worse {
                                s.mean > h
                            } else {
                                s.mean < h
                            }
                        });
                        if better {
                            headline = Some(s.mean);
                        }
                    }
                    None => {
                        per_group.insert(ge.group.clone(), Value::Null);
                    }
                }
            }
            let mut flags = vec![
                "headline is the worst per-group mean over protocol repeats".to_string(),
                EXPLAIN_CONVENTION_NOTE.to_string(),
            ];
            flags.extend(shared_flags.iter().cloned());
            match headline {
                Some(v) => {
                    entries.push(KpiEntry::scored(&name, kpi, v, json!(per_group), flags, bands)?)
                }
                None => {
                    flags.push("undefined in every group (constant attribution vectors)".into());
                    entries.push(KpiEntry::non_result(&name, json!(per_group), flags)?);
                }
            }
        }
    }
    Ok(entries)
}

fn method_flags(per_group: &[GroupEval], protocol: &Protocol) -> Vec<String> {
    let mut flags = vec![format!(
        "protocol: {} instances x {} repeats per group",
        protocol.n_instances, protocol.n_repeats
    )];
    let excluded: usize = per_group.iter().map(|g| g.excluded).sum();
    if excluded > 0 {
        flags.push(format!("{excluded} instance explanations excluded"));
    }
    let invalid: usize = per_group.iter().map(|g| g.invalid_repeats).sum();
    if invalid > 0 {
        flags.push(format!(
            "{invalid} repeats exceeded the exclusion budget and are unreliable"
        ));
    }
    let with_replacement: Vec<&str> = per_group
        .iter()
        .filter(|g| g.sampled_with_replacement)
        .map(|g| g.group.as_str())
        .collect();
    if !with_replacement.is_empty() {
        flags.push(format!(
            "sampled with replacement (group smaller than the protocol): {}",
            with_replacement.join(", ")
        ));
    }
    flags
}

/// Runs the complete audit described by `cfg`. `config_text` is the literal
/// configuration document (hashed into the report metadata); `progress`
/// receives one human-readable line per stage.
pub fn run_audit(
    cfg: &AuditConfig,
    config_text: &str,
    progress: &mut dyn FnMut(&str),
) -> Result<AuditOutcome> {
    cfg.validate()?;
    let bands = cfg.resolved_bands()?;
    let roles = cfg.dataset.roles();

    progress(&format!("loading {}", cfg.dataset.path));
    let bytes = std::fs::read(&cfg.dataset.path)
        .map_err(|e| AuditError::io(format!("reading {}", cfg.dataset.path), e))?;
    let dataset_sha256 = sha256_hex(&bytes);
    let raw = load_csv(&cfg.dataset.path, &roles)?;
    let full = derive_target(&raw, &roles)?;
    progress(&format!(
        "loaded {} rows, {} features, {} groups",
        full.n_rows(),
        full.n_features(),
        full.groups.len()
    ));

    let (train, test) = split(&full, &cfg.split.spec())?;
    progress(&format!(
        "split: {} train / {} test rows (split seed {})",
        train.n_rows(),
        test.n_rows(),
        cfg.split.seed
    ));

    progress("fitting the multilevel model");
    let model = fit(&train, &cfg.model.mlm_spec(), &cfg.fit.options())?;
    progress(&format!(
        "fit finished in {} iterations (converged: {})",
        model.fit_meta.iterations, model.fit_meta.converged
    ));

    progress("statistical properties");
    let vif_e = vif_entry(&full, &bands)?;
    let (swt_e, bpt_e) = residual_test_entries(&model, &full, cfg, &bands)?;
    let normality_e = effect_normality_entry(&model, &bands)?;
    let statistical_properties = vec![vif_e, swt_e, bpt_e, normality_e];

    progress("accuracy on the test split");
    let (auc_e, f1_e) = accuracy_entries(&model, &test, cfg.model.decision_threshold, &bands)?;
    let accuracy = vec![auc_e, f1_e];

    progress("group fairness on the test split");
    let group_fairness = group_fairness_entries(&model, &test, cfg, &bands)?;

    progress("individual fairness");
    let individual_fairness =
        individual_fairness_entries(&model, &train, &full, &test, cfg, &bands)?;

    let explainability = explainability_entries(&model, &train, cfg, &bands, progress)?;

    let mut annotations: Annotations = cfg.annotations.clone();
    annotations
        .entry(ASSUMPTIONS_ANNOTATION_KEY.to_string())
        .or_insert_with(Annotation::default);

    let metadata = Metadata {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        timestamp: now_timestamp(),
        dataset_path: cfg.dataset.path.clone(),
        dataset_sha256,
        config_sha256: sha256_hex(config_text.as_bytes()),
        master_seed: cfg.seed,
        split_seed: cfg.split.seed,
        n_rows: full.n_rows(),
        n_train: train.n_rows(),
        n_test: test.n_rows(),
        band_convention: BAND_CONVENTION_NOTE.to_string(),
    };
    let summary = ModelSummary::from_model(&model, cfg.model.decision_threshold)?;
    let report = assemble_report(
        metadata,
        summary,
        statistical_properties,
        accuracy,
        group_fairness,
        individual_fairness,
        explainability,
        annotations,
    );
    progress(&format!(
        "report assembled: {} red / {} amber / {} green / {} not scored",
        report.overall.red, report.overall.amber, report.overall.green, report.overall.not_scored
    ));
    Ok(AuditOutcome { report, model })
}

// ---------------------------------------------------------------------------
// command-line interface
// ---------------------------------------------------------------------------

/// Audit toolkit for multilevel logistic classifiers.
#[derive(Debug, Parser)]
#[command(name = "mlm-audit", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the full audit and write the traffic-light report.
    Audit(AuditArgs),
    /// Fit the multilevel model and export its coefficients as JSON.
    Fit(FitArgs),
    /// Explain one instance: intrinsic vs kernel SHAP vs linear surrogate.
    Explain(ExplainArgs),
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    /// Configuration file (TOML); defaults to the built-in configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override the master seed. Sampled protocols move; the train/test
    /// split keeps its own seed from the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (overrides the configuration).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Report files to write: json, markdown, or both.
    #[arg(long)]
    pub format: Option<String>,
    /// Exit with code 3 when any KPI scores red.
    #[arg(long)]
    pub fail_on_red: bool,
    /// Print the default configuration as TOML and exit.
    #[arg(long)]
    pub print_defaults: bool,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Configuration file (TOML); defaults to the built-in configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override the master seed (kept for interface symmetry; the fit itself
    /// is deterministic).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file for the model JSON (default: <output dir>/model.json).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    /// Configuration file (TOML); defaults to the built-in configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override the master seed (drives the background subsample and the
    /// surrogate's perturbations).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file for the comparison JSON (default: <output dir>/explain.json).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// The instance as comma-separated feature assignments,
    /// e.g. "age=35,bmi=40,children=3". Must cover every feature exactly once.
    #[arg(long)]
    pub instance: String,
    /// Group whose coefficients explain the instance.
    #[arg(long)]
    pub group: String,
}

/// Dispatches a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let outcome = match cli.command {
        Command::Audit(args) => cmd_audit(&args),
        Command::Fit(args) => cmd_fit(&args),
        Command::Explain(args) => cmd_explain(&args),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}

fn load_config(path: &Option<PathBuf>) -> Result<(AuditConfig, String)> {
    match path {
        Some(p) => AuditConfig::load(p),
        None => Ok((AuditConfig::default(), AuditConfig::default_toml())),
    }
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)
                .map_err(|e| AuditError::io(format!("creating {}", dir.display()), e))?;
        }
    }
    std::fs::write(path, content)
        .map_err(|e| AuditError::io(format!("writing {}", path.display()), e))
}

fn cmd_audit(args: &AuditArgs) -> Result<i32> {
    if args.print_defaults {
        print!("{}", AuditConfig::default_toml());
        return Ok(0);
    }
    let (mut cfg, config_text) = load_config(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.output.directory = out.display().to_string();
    }
    if let Some(fmt) = &args.format {
        cfg.output.format = fmt.parse::<OutputFormat>()?;
    }

    let outcome = run_audit(&cfg, &config_text, &mut |line| println!("[audit] {line}"))?;
    let dir = PathBuf::from(&cfg.output.directory);
    if cfg.output.format.wants_json() {
        let path = dir.join(&cfg.output.json_name);
        write_file(&path, &audit::render_json(&outcome.report))?;
        println!("[audit] wrote {}", path.display());
    }
    if cfg.output.format.wants_markdown() {
        let path = dir.join(&cfg.output.markdown_name);
        write_file(&path, &audit::render_markdown(&outcome.report))?;
        println!("[audit] wrote {}", path.display());
    }
    if args.fail_on_red && outcome.report.overall.red > 0 {
        println!(
            "[audit] {} KPI(s) scored red; exiting {} as requested",
            outcome.report.overall.red, EXIT_RED_GATE
        );
        return Ok(EXIT_RED_GATE);
    }
    Ok(0)
}

/// Ingests, splits, and fits exactly as the audit pipeline does.
pub fn fit_from_config(cfg: &AuditConfig) -> Result<(Dataset, Dataset, MlmModel)> {
    cfg.validate()?;
    let roles = cfg.dataset.roles();
    let raw = load_csv(&cfg.dataset.path, &roles)?;
    let full = derive_target(&raw, &roles)?;
    let (train, test) = split(&full, &cfg.split.spec())?;
    let model = fit(&train, &cfg.model.mlm_spec(), &cfg.fit.options())?;
    Ok((train, test, model))
}

fn cmd_fit(args: &FitArgs) -> Result<i32> {
    let (mut cfg, _) = load_config(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    println!("[audit] loading {}", cfg.dataset.path);
    let (train, _, model) = fit_from_config(&cfg)?;
    println!(
        "[audit] fitted on {} training rows in {} iterations (converged: {})",
        train.n_rows(),
        model.fit_meta.iterations,
        model.fit_meta.converged
    );
    let summary = ModelSummary::from_model(&model, cfg.model.decision_threshold)?;
    let mut body = serde_json::to_string_pretty(&summary).expect("model serializes");
    body.push('\n');
    let path = args
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(&cfg.output.directory).join("model.json"));
    write_file(&path, &body)?;
    println!("[audit] wrote {}", path.display());
    Ok(0)
}

/// Parses "name=value,name=value" into feature order; every feature must be
/// assigned exactly once.
pub fn parse_instance(spec: &str, feature_names: &[String]) -> Result<Vec<f64>> {
    let mut seen: BTreeMap<&str, f64> = BTreeMap::new();
    for part in spec.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let (name, value) = part.split_once('=').ok_or_else(|| {
            AuditError::InvalidConfig(format!(
                "instance entry {part:?} is not of the form name=value"
            ))
        })?;
        let name = name.trim();
        let value: f64 = value.trim().parse().map_err(|_| {
            AuditError::InvalidConfig(format!("instance entry {part:?} has a non-numeric value"))
        })?;
        if !feature_names.iter().any(|f| f == name) {
            return Err(AuditError::InvalidConfig(format!(
                "unknown feature {name:?}; expected one of {feature_names:?}"
            )));
        }
        if seen.insert(name, value).is_some() {
            return Err(AuditError::InvalidConfig(format!(
                "feature {name:?} assigned twice"
            )));
        }
    }
    feature_names
        .iter()
        .map(|f| {
            seen.get(f.as_str()).copied().ok_or_else(|| {
                AuditError::InvalidConfig(format!("feature {f:?} missing from the instance"))
            })
        })
        .collect()
}

fn cmd_explain(args: &ExplainArgs) -> Result<i32> {
    let (mut cfg, _) = load_config(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let x = parse_instance(&args.instance, &cfg.dataset.feature_columns)?;
    println!("[audit] loading {}", cfg.dataset.path);
    let (train, _, model) = fit_from_config(&cfg)?;
    println!("[audit] explaining the instance with group {:?}", args.group);
    let bg = BackgroundSet::from_group(
        &train,
        &args.group,
        cfg.explainers.background_max_rows,
        cfg.seed,
    )?;
    let mut lime_cfg = LimeConfig::new(training_scales(&train), cfg.seed);
    lime_cfg.n_samples = cfg.explainers.lime.n_samples;
    lime_cfg.ridge_lambda = cfg.explainers.lime.ridge_lambda;
    if let Some(w) = cfg.explainers.lime.kernel_width {
        lime_cfg.kernel_width = w;
    }
    lime_cfg.stream_label = format!("explain/{}", args.group);
    let record = instance_comparison(&model, &x, &args.group, &bg, &lime_cfg)?;
    for flag in &record.flags {
        println!("[audit] note: {flag}");
    }
    let mut body = serde_json::to_string_pretty(&record).expect("comparison serializes");
    body.push('\n');
    let path = args
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(&cfg.output.directory).join("explain.json"));
    write_file(&path, &body)?;
    println!("[audit] wrote {}", path.display());
    Ok(0)
}
