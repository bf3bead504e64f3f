//! Per-group F1 and AUC-ROC on the held-out split, with macro and weighted
//! averaging.
//!
//! Accuracy is always reported per group first: a model can look strong on
//! average while one region carries it. Groups that cannot be scored (a
//! single observed class leaves AUC undefined) are flagged and excluded
//! from the average instead of failing the run.
//!
//! Run with: `cargo run --example accuracy_metrics`

use mlm_audit::accuracy::{per_group_accuracy_with, Averaging};
use mlm_audit::config::AuditConfig;
use mlm_audit::ingest::{derive_target, load_csv, split};
use mlm_audit::mlm;

fn main() -> anyhow::Result<()> {
    let mut cfg = AuditConfig::default();
    cfg.dataset.path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/case_study.csv").into();

    let roles = cfg.dataset.roles();
    let data = derive_target(&load_csv(&cfg.dataset.path, &roles)?, &roles)?;
    let (train, test) = split(&data, &cfg.split.spec())?;
    let model = mlm::fit(&train, &cfg.model.mlm_spec(), &cfg.fit.options())?;

    let threshold = cfg.model.decision_threshold;
    for averaging in [Averaging::Macro, Averaging::Weighted] {
        let scores = per_group_accuracy_with(&model, &test, threshold, averaging)?;
        println!("{averaging:?} averaging over {} test rows:", test.n_rows());
        for gs in &scores.per_group {
            let f1 = gs.f1.map_or("   --".into(), |v| format!("{v:.3}"));
            let auc = gs.auc.map_or("   --".into(), |v| format!("{v:.3}"));
            print!("  {:<10} n = {:>3}  F1 {f1}  AUC {auc}", gs.group, gs.n_rows);
            match &gs.note {
                Some(note) => println!("  ({note})"),
                None => println!(),
            }
        }
        println!("  average: F1 {:.3}, AUC {:.3}", scores.average_f1, scores.average_auc);
        if !scores.excluded_groups.is_empty() {
            println!("  excluded from at least one average: {:?}", scores.excluded_groups);
        }
        println!();
    }

    Ok(())
}
