//! Group and individual fairness on the bundled data.
//!
//! Group metrics compare predictions across the sensitive attribute (sex,
//! privileged value "male"): statistical parity is the positive-rate gap,
//! disparate impact the positive-rate ratio, equalized odds the mean of the
//! TPR and FPR gaps. Individual metrics ask whether similar people get
//! similar predictions: Diff_Ind scans all within-group pairs closer than
//! delta in scaled feature space, and the multilevel variant asks how much
//! the prediction for one feature vector moves when only the group
//! membership changes.
//!
//! Run with: `cargo run --example fairness_metrics`

use mlm_audit::config::AuditConfig;
use mlm_audit::fairness::{
    diff_ind_mlm_scan, disparate_impact, equalized_odds, scan_similar_pairs, statistical_parity,
    GroupFairnessInput, PairScanOutcome, SimilaritySpec,
};
use mlm_audit::ingest::{derive_target, load_csv, split};
use mlm_audit::mlm;

fn main() -> anyhow::Result<()> {
    let mut cfg = AuditConfig::default();
    cfg.dataset.path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/case_study.csv").into();

    let roles = cfg.dataset.roles();
    let data = derive_target(&load_csv(&cfg.dataset.path, &roles)?, &roles)?;
    let (train, test) = split(&data, &cfg.split.spec())?;
    let model = mlm::fit(&train, &cfg.model.mlm_spec(), &cfg.fit.options())?;

    // --- Group fairness on the held-out split.
    let threshold = cfg.model.decision_threshold;
    let preds: Vec<u8> = (0..test.n_rows())
        .map(|i| model.predict_class(&test.features[i], &test.group[i], threshold))
        .collect::<Result<_, _>>()?;
    let input = GroupFairnessInput::from_dataset(&test, preds, &cfg.dataset.sensitive_privileged_value)?;

    println!("group fairness, privileged class {} = {:?}:", cfg.dataset.sensitive_column, cfg.dataset.sensitive_privileged_value);
    println!("  statistical parity |gap|  {:.4}", statistical_parity(&input)?);
    println!("  disparate impact ratio    {:.4}", disparate_impact(&input)?);
    let eo = equalized_odds(&input)?;
    println!(
        "  equalized odds            {:.4}  (TPR gap {:.4}, FPR gap {:.4})",
        eo.equal_odds, eo.diff_tpr, eo.diff_fpr
    );
    println!("  per group:");
    for g in &test.groups {
        let slice = input.slice_group(g);
        match equalized_odds(&slice) {
            Ok(eo) => println!("    {g:<10} equalized odds {:.4}", eo.equal_odds),
            Err(e) => println!("    {g:<10} undefined ({e})"),
        }
    }

    // --- Individual fairness. Similarity scales come from the training
    // split; the pair scan covers every row of the dataset.
    let spec = SimilaritySpec::from_training(&train, &cfg.similarity.excluded_features, cfg.similarity.delta)?;
    println!("\nwithin-group similar pairs (scaled distance <= {}):", cfg.similarity.delta);
    for scan in scan_similar_pairs(&model, &data, &spec)? {
        match scan.outcome {
            PairScanOutcome::Pairs(stats) => println!(
                "  {:<10} {:>5} pairs  max |dP| {:.4}  mean |dP| {:.4}",
                scan.group, stats.pair_count, stats.max_diff, stats.mean_diff
            ),
            PairScanOutcome::NoSimilarPairs => {
                println!("  {:<10} no pairs pass the similarity gate", scan.group)
            }
        }
    }

    let cross = diff_ind_mlm_scan(&model, &test)?;
    println!(
        "\ncross-group sensitivity over {} test instances:",
        cross.n_instances
    );
    println!(
        "  mean worst-case |dP| {:.4}, single worst instance {:.4}",
        cross.mean_worst_case, cross.max_worst_case
    );
    for (a, b, mean) in &cross.pair_means {
        println!("  {a} vs {b}: mean |dP| {mean:.4}");
    }

    Ok(())
}
