//! Explain a single prediction three ways and compare.
//!
//! The fitted model is linear on the log-odds scale, so it carries its own
//! ground-truth attribution (beta_k * x_k per feature). Kernel SHAP and a
//! linear LIME surrogate explain the same prediction as if the model were a
//! black box; the comparison flags every rank or sign disagreement against
//! the intrinsic attribution. SHAP measures contributions against a
//! background sample (beta_k * (x_k - background mean_k)), so its signs can
//! legitimately differ from the intrinsic convention — that discrepancy is
//! the point of the comparison, not a bug in either method.
//!
//! Run with: `cargo run --example explain_instance`

use mlm_audit::config::AuditConfig;
use mlm_audit::explain_eval::{instance_comparison, training_scales};
use mlm_audit::explainers::{BackgroundSet, LimeConfig};
use mlm_audit::ingest::{derive_target, load_csv, split};
use mlm_audit::mlm;

fn main() -> anyhow::Result<()> {
    let mut cfg = AuditConfig::default();
    cfg.dataset.path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/case_study.csv").into();

    let roles = cfg.dataset.roles();
    let data = derive_target(&load_csv(&cfg.dataset.path, &roles)?, &roles)?;
    let (train, test) = split(&data, &cfg.split.spec())?;
    let model = mlm::fit(&train, &cfg.model.mlm_spec(), &cfg.fit.options())?;

    // Explain the first held-out row.
    let x = test.features[0].clone();
    let group = test.group[0].clone();
    let p = model.predict_proba(&x, &group)?;
    println!("instance: group {group:?}, features {:?}", x);
    println!("model prediction: P(y=1) = {p:.4} (log-odds {:+.4})\n", model.log_odds(&x, &group)?);

    let bg = BackgroundSet::from_group(&train, &group, cfg.explainers.background_max_rows, cfg.seed)?;
    let mut lime_cfg = LimeConfig::new(training_scales(&train), cfg.seed);
    lime_cfg.n_samples = cfg.explainers.lime.n_samples;
    lime_cfg.ridge_lambda = cfg.explainers.lime.ridge_lambda;

    let cmp = instance_comparison(&model, &x, &group, &bg, &lime_cfg)?;

    println!("log-odds contributions per feature:");
    println!("  {:<10} {:>10} {:>12} {:>12}", "feature", "intrinsic", "kernel SHAP", "linear LIME");
    for (k, name) in cmp.feature_names.iter().enumerate() {
        println!(
            "  {name:<10} {:>10.4} {:>12.4} {:>12.4}",
            cmp.intrinsic.attribution.contributions[k],
            cmp.shap.attribution.contributions[k],
            cmp.lime.attribution.contributions[k],
        );
    }
    println!(
        "  {:<10} {:>10.4} {:>12.4} {:>12.4}",
        "base",
        cmp.intrinsic.attribution.base,
        cmp.shap.attribution.base,
        cmp.lime.attribution.base
    );
    println!(
        "  {:<10} {:>10.4} {:>12.4}           --",
        "total",
        cmp.intrinsic.attribution.total(),
        cmp.shap.attribution.total(),
    );
    println!("\n(intrinsic and SHAP totals reconstruct the log-odds; LIME slopes are local, not additive)");

    if cmp.flags.is_empty() {
        println!("\nno disagreements with the intrinsic attribution");
    } else {
        println!("\ndisagreements:");
        for flag in &cmp.flags {
            println!("  - {flag}");
        }
    }

    Ok(())
}
