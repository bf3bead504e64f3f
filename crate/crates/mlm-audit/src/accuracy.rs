//! Accuracy-of-predictions KPIs: F1 score and AUC-ROC, per model group and
//! averaged across groups.

use crate::error::{AuditError, Result};
use crate::ingest::Dataset;
use crate::mlm::MlmModel;
use serde::{Deserialize, Serialize};

/// Binary-classification confusion counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// Tallies the confusion matrix of 0/1 predictions against 0/1 truths.
pub fn confusion(y_true: &[u8], y_pred: &[u8]) -> Result<ConfusionCounts> {
    if y_true.len() != y_pred.len() {
        return Err(AuditError::LengthMismatch(format!(
            "{} truths but {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    if y_true.is_empty() {
        return Err(AuditError::EmptyDataset(
            "confusion counts need at least one row".into(),
        ));
    }
    let mut c = ConfusionCounts {
        tp: 0,
        fp: 0,
        tn: 0,
        fn_: 0,
    };
    for (&t, &p) in y_true.iter().zip(y_pred) {
        match (t, p) {
            (1, 1) => c.tp += 1,
            (0, 1) => c.fp += 1,
            (0, 0) => c.tn += 1,
            (1, 0) => c.fn_ += 1,
            _ => {
                return Err(AuditError::InvalidConfig(
                    "confusion counts need strictly 0/1 labels".into(),
                ))
            }
        }
    }
    Ok(c)
}

/// F1 outcome: the harmonic mean of precision and recall, or the structured
/// no-positives case (tp = fp = fn = 0) that averages must exclude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum F1Outcome {
    Score(f64),
    /// No true positives, false positives, or false negatives anywhere:
    /// precision and recall are both 0/0 and the score is undefined.
    NoPositives,
}

impl F1Outcome {
    pub fn value(&self) -> Option<f64> {
        match self {
            F1Outcome::Score(v) => Some(*v),
            F1Outcome::NoPositives => None,
        }
    }
}

/// F1 = 2·precision·recall / (precision + recall).
///
/// When tp = 0 but positives exist somewhere (fp > 0 or fn > 0) the score is
/// 0 by convention; when the task has no positives at all the outcome is
/// [`F1Outcome::NoPositives`] rather than an arbitrary number.
pub fn f1_score(y_true: &[u8], y_pred: &[u8]) -> Result<F1Outcome> {
    let c = confusion(y_true, y_pred)?;
    if c.tp == 0 {
        return Ok(if c.fp == 0 && c.fn_ == 0 {
            F1Outcome::NoPositives
        } else {
            F1Outcome::Score(0.0)
        });
    }
    let tp = c.tp as f64;
    Ok(F1Outcome::Score(
        2.0 * tp / (2.0 * tp + c.fp as f64 + c.fn_ as f64),
    ))
}

/// AUC-ROC via the Mann–Whitney rank-sum with mid-ranks for ties:
/// P(score⁺ > score⁻) + ½·P(score⁺ = score⁻).
pub fn auc_roc(y_true: &[u8], scores: &[f64]) -> Result<f64> {
    let n = y_true.len();
    if n != scores.len() {
        return Err(AuditError::LengthMismatch(format!(
            "{} truths but {} scores",
            n,
            scores.len()
        )));
    }
    for &s in scores {
        if !s.is_finite() {
            return Err(AuditError::NonFiniteValue {
                kpi: "auc_roc".into(),
                value: s,
            });
        }
    }
    let n_pos = y_true.iter().filter(|&&y| y == 1).count();
    let n_neg = n - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(AuditError::AucUndefined(format!(
            "need both classes, got {n_pos} positives and {n_neg} negatives"
        )));
    }

    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());
    // mid-ranks: runs of tied scores share the average of their 1-based ranks
    let mut rank_sum_pos = 0.0;
    let mut start = 0;
    while start < n {
        let mut end = start;
        while end + 1 < n && scores[idx[end + 1]] == scores[idx[start]] {
            end += 1;
        }
        let avg_rank = (start + end) as f64 / 2.0 + 1.0;
        for &i in &idx[start..=end] {
            if y_true[i] == 1 {
                rank_sum_pos += avg_rank;
            }
        }
        start = end + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// How per-group scores are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Averaging {
    /// Unweighted mean across groups (default).
    Macro,
    /// Mean weighted by each group's evaluated row count.
    Weighted,
}

/// One group's accuracy KPIs. `None` with a note means the group could not
/// be scored on that metric and is excluded from the average.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupScore {
    pub group: String,
    pub n_rows: usize,
    pub f1: Option<f64>,
    pub auc: Option<f64>,
    pub note: Option<String>,
}

/// Per-group F1/AUC plus their averages.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupAccuracy {
    /// Group-label sort order.
    pub per_group: Vec<GroupScore>,
    pub average_f1: f64,
    pub average_auc: f64,
    pub averaging: Averaging,
    /// Groups excluded from at least one average.
    pub excluded_groups: Vec<String>,
}

/// Scores the model on each group of `test` with macro averaging.
pub fn per_group_accuracy(
    model: &MlmModel,
    test: &Dataset,
    threshold: f64,
) -> Result<GroupAccuracy> {
    per_group_accuracy_with(model, test, threshold, Averaging::Macro)
}

/// Scores the model on each group of `test`. A group with a single observed
/// class (no AUC) or no positives at all (no F1) is flagged and excluded from
/// that metric's average rather than failing the audit.
pub fn per_group_accuracy_with(
    model: &MlmModel,
    test: &Dataset,
    threshold: f64,
    averaging: Averaging,
) -> Result<GroupAccuracy> {
    if test.target.len() != test.n_rows() {
        return Err(AuditError::InvalidConfig(
            "accuracy metrics need a derived target".into(),
        ));
    }
    if test.n_rows() == 0 {
        return Err(AuditError::EmptyDataset("empty test set".into()));
    }
    let mut per_group = Vec::new();
    let mut excluded = Vec::new();
    for g in &test.groups {
        let rows = test.rows_of_group(g);
        let y: Vec<u8> = rows.iter().map(|&i| test.target[i]).collect();
        let mut scores = Vec::with_capacity(rows.len());
        let mut preds = Vec::with_capacity(rows.len());
        for &i in &rows {
            let p = model.predict_proba(&test.features[i], g)?;
            scores.push(p);
            preds.push(u8::from(p >= threshold));
        }
        let mut notes: Vec<String> = Vec::new();
        let f1 = match f1_score(&y, &preds)? {
            F1Outcome::Score(v) => Some(v),
            F1Outcome::NoPositives => {
                notes.push("no positives in truth or predictions; F1 undefined".into());
                None
            }
        };
        let auc = match auc_roc(&y, &scores) {
            Ok(v) => Some(v),
            Err(AuditError::AucUndefined(reason)) => {
                notes.push(format!("AUC undefined: {reason}"));
                None
            }
            Err(e) => return Err(e),
        };
        if f1.is_none() || auc.is_none() {
            excluded.push(g.clone());
        }
        per_group.push(GroupScore {
            group: g.clone(),
            n_rows: rows.len(),
            f1,
            auc,
            note: if notes.is_empty() {
                None
            } else {
                Some(notes.join("; "))
            },
        });
    }

    let average = |pick: &dyn Fn(&GroupScore) -> Option<f64>| -> Result<f64> {
        let mut num = 0.0;
        let mut den = 0.0;
        for gs in &per_group {
            if let Some(v) = pick(gs) {
                let w = match averaging {
                    Averaging::Macro => 1.0,
                    Averaging::Weighted => gs.n_rows as f64,
                };
                num += w * v;
                den += w;
            }
        }
        if den == 0.0 {
            return Err(AuditError::AucUndefined(
                "every group was excluded; no average can be formed".into(),
            ));
        }
        Ok(num / den)
    };
    let average_f1 = average(&|gs: &GroupScore| gs.f1)?;
    let average_auc = average(&|gs: &GroupScore| gs.auc)?;

    Ok(GroupAccuracy {
        per_group,
        average_f1,
        average_auc,
        averaging,
        excluded_groups: excluded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlm::FitMeta;
    use crate::seeding;
    use approx::assert_abs_diff_eq;
    use rand::seq::SliceRandom;
    use rand::RngCore;

    // ---- F1 -----------------------------------------------------------------

    #[test]
    fn perfect_predictions_score_one() {
        let y = [1u8, 0, 1, 1, 0];
        assert_eq!(f1_score(&y, &y).unwrap(), F1Outcome::Score(1.0));
    }

    #[test]
    fn f1_hand_computed_confusion() {
        // tp=8, fp=2, fn=2, tn=3: precision 0.8, recall 0.8, F1 0.8
        let mut y_true = vec![1u8; 8];
        let mut y_pred = vec![1u8; 8];
        y_true.extend([0, 0]); // fp
        y_pred.extend([1, 1]);
        y_true.extend([1, 1]); // fn
        y_pred.extend([0, 0]);
        y_true.extend([0, 0, 0]); // tn
        y_pred.extend([0, 0, 0]);
        let c = confusion(&y_true, &y_pred).unwrap();
        assert_eq!((c.tp, c.fp, c.fn_, c.tn), (8, 2, 2, 3));
        assert_eq!(c.total(), y_true.len());
        match f1_score(&y_true, &y_pred).unwrap() {
            F1Outcome::Score(v) => assert_abs_diff_eq!(v, 0.8, epsilon = 1e-15),
            other => panic!("expected a score, got {other:?}"),
        }
    }

    #[test]
    fn f1_zero_division_policy() {
        // no positives anywhere: structured outcome
        assert_eq!(
            f1_score(&[0, 0, 0], &[0, 0, 0]).unwrap(),
            F1Outcome::NoPositives
        );
        // tp = 0 but a false positive exists: plain 0
        assert_eq!(
            f1_score(&[0, 0, 0], &[0, 1, 0]).unwrap(),
            F1Outcome::Score(0.0)
        );
        // tp = 0 but a false negative exists: plain 0
        assert_eq!(
            f1_score(&[0, 1, 0], &[0, 0, 0]).unwrap(),
            F1Outcome::Score(0.0)
        );
    }

    #[test]
    fn f1_is_permutation_invariant() {
        let y_true = [1u8, 0, 1, 1, 0, 0, 1, 0, 1, 1];
        let y_pred = [1u8, 1, 0, 1, 0, 0, 1, 0, 0, 1];
        let base = f1_score(&y_true, &y_pred).unwrap().value().unwrap();
        let mut rng = seeding::stream(7, "f1-perm");
        let mut order: Vec<usize> = (0..y_true.len()).collect();
        for _ in 0..5 {
            order.shuffle(&mut rng);
            let t: Vec<u8> = order.iter().map(|&i| y_true[i]).collect();
            let p: Vec<u8> = order.iter().map(|&i| y_pred[i]).collect();
            assert_eq!(f1_score(&t, &p).unwrap().value().unwrap(), base);
        }
    }

    #[test]
    fn f1_input_validation() {
        assert!(matches!(
            f1_score(&[1, 0], &[1]),
            Err(AuditError::LengthMismatch(_))
        ));
        assert!(matches!(
            f1_score(&[], &[]),
            Err(AuditError::EmptyDataset(_))
        ));
        assert!(matches!(
            f1_score(&[2, 0], &[1, 0]),
            Err(AuditError::InvalidConfig(_))
        ));
    }

    // ---- AUC-ROC ---------------------------------------------------------------

    #[test]
    fn separated_scores_give_auc_one_and_ties_give_half() {
        let y = [0u8, 0, 0, 1, 1, 1];
        let s = [0.1, 0.2, 0.3, 0.7, 0.8, 0.9];
        assert_abs_diff_eq!(auc_roc(&y, &s).unwrap(), 1.0, epsilon = 1e-15);
        let flat = [0.4; 6];
        assert_abs_diff_eq!(auc_roc(&y, &flat).unwrap(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn six_point_example_is_eight_ninths() {
        let y = [1u8, 1, 1, 0, 0, 0];
        let s = [0.9, 0.8, 0.4, 0.7, 0.3, 0.2];
        // pairs where positive outranks negative: 8 of 9
        assert_abs_diff_eq!(auc_roc(&y, &s).unwrap(), 8.0 / 9.0, epsilon = 1e-12);
    }

    /// Exhaustive O(n⁺·n⁻) pair counting with explicit ½-credit for ties.
    fn brute_force_auc(y: &[u8], s: &[f64]) -> f64 {
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for i in 0..y.len() {
            for j in 0..y.len() {
                if y[i] == 1 && y[j] == 0 {
                    pairs += 1.0;
                    if s[i] > s[j] {
                        wins += 1.0;
                    } else if s[i] == s[j] {
                        wins += 0.5;
                    }
                }
            }
        }
        wins / pairs
    }

    #[test]
    fn rank_sum_matches_pair_enumeration_with_ties() {
        let mut rng = seeding::stream(13, "auc-oracle");
        let n = 1000;
        let y: Vec<u8> = (0..n).map(|_| u8::from(rng.next_u64() % 5 > 1)).collect();
        // quantized scores force plenty of exact ties
        let s: Vec<f64> = (0..n)
            .map(|_| (rng.next_u64() % 10) as f64 / 10.0)
            .collect();
        let got = auc_roc(&y, &s).unwrap();
        let want = brute_force_auc(&y, &s);
        assert_abs_diff_eq!(got, want, epsilon = 1e-12);
    }

    #[test]
    fn auc_is_invariant_under_increasing_transforms() {
        let mut rng = seeding::stream(17, "auc-monotone");
        let n = 200;
        let y: Vec<u8> = (0..n).map(|_| u8::from(rng.next_u64() % 2 == 0)).collect();
        let s: Vec<f64> = (0..n)
            .map(|_| (rng.next_u64() % 1000) as f64 / 1000.0)
            .collect();
        let transformed: Vec<f64> = s.iter().map(|v| (2.0 * v + 1.0).exp()).collect();
        assert_abs_diff_eq!(
            auc_roc(&y, &s).unwrap(),
            auc_roc(&y, &transformed).unwrap(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn auc_complement_symmetry() {
        let mut rng = seeding::stream(19, "auc-complement");
        let n = 300;
        let y: Vec<u8> = (0..n).map(|_| u8::from(rng.next_u64() % 3 == 0)).collect();
        let s: Vec<f64> = (0..n).map(|_| (rng.next_u64() % 7) as f64).collect();
        let flipped: Vec<u8> = y.iter().map(|&v| 1 - v).collect();
        let total = auc_roc(&y, &s).unwrap() + auc_roc(&flipped, &s).unwrap();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn auc_input_validation() {
        assert!(matches!(
            auc_roc(&[1, 1, 1], &[0.1, 0.2, 0.3]),
            Err(AuditError::AucUndefined(_))
        ));
        assert!(matches!(
            auc_roc(&[1, 0], &[0.1]),
            Err(AuditError::LengthMismatch(_))
        ));
        assert!(matches!(
            auc_roc(&[1, 0], &[f64::NAN, 0.2]),
            Err(AuditError::NonFiniteValue { .. })
        ));
    }

    // ---- per-group -----------------------------------------------------------

    fn toy_model(groups: &[&str], alpha: f64, beta: f64) -> MlmModel {
        MlmModel {
            groups: groups.iter().map(|s| s.to_string()).collect(),
            feature_names: vec!["x0".into()],
            varying_intercept: false,
            varying_features: vec![],
            alpha: vec![alpha],
            beta_varying: vec![],
            beta_fixed: vec![beta],
            mu_alpha: alpha,
            sigma2_alpha: 0.0,
            mu_beta: vec![],
            sigma2_beta: vec![],
            fit_meta: FitMeta {
                iterations: 0,
                converged: true,
                penalized_loglik: 0.0,
            },
        }
    }

    fn dataset(rows: &[(&str, f64, u8)]) -> Dataset {
        let mut groups: Vec<String> = rows.iter().map(|(g, _, _)| g.to_string()).collect();
        groups.sort();
        groups.dedup();
        Dataset {
            header: vec!["x0".into(), "g".into(), "s".into(), "t".into()],
            feature_names: vec!["x0".into()],
            features: rows.iter().map(|&(_, x, _)| vec![x]).collect(),
            group: rows.iter().map(|(g, _, _)| g.to_string()).collect(),
            sensitive: vec!["s".into(); rows.len()],
            raw_target: rows.iter().map(|&(_, _, y)| y.to_string()).collect(),
            target: rows.iter().map(|&(_, _, y)| y).collect(),
            groups,
        }
    }

    #[test]
    fn constant_model_gives_auc_half_per_group() {
        let m = toy_model(&["a", "b"], 0.0, 0.0); // p = 0.5 everywhere
        let ds = dataset(&[
            ("a", 0.1, 1),
            ("a", 0.4, 0),
            ("a", 0.9, 1),
            ("b", 0.2, 0),
            ("b", 0.6, 1),
            ("b", 0.8, 0),
        ]);
        let acc = per_group_accuracy(&m, &ds, 0.5).unwrap();
        for gs in &acc.per_group {
            assert_abs_diff_eq!(gs.auc.unwrap(), 0.5, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(acc.average_auc, 0.5, epsilon = 1e-15);
        // p = 0.5 ≥ threshold: everything predicted positive.
        // group a: tp=2 fp=1 → F1 = 4/5; group b: tp=1 fp=2 → F1 = 1/2
        assert_abs_diff_eq!(acc.per_group[0].f1.unwrap(), 0.8, epsilon = 1e-15);
        assert_abs_diff_eq!(acc.per_group[1].f1.unwrap(), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(acc.average_f1, 0.65, epsilon = 1e-15);
        assert!(acc.excluded_groups.is_empty());
    }

    #[test]
    fn separable_groups_score_perfectly() {
        let m = toy_model(&["a", "b"], 0.0, 10.0); // p > 0.5 iff x > 0
        let ds = dataset(&[
            ("a", -2.0, 0),
            ("a", -1.0, 0),
            ("a", 1.0, 1),
            ("a", 2.0, 1),
            ("b", -1.5, 0),
            ("b", 1.5, 1),
            ("b", 2.5, 1),
        ]);
        let acc = per_group_accuracy(&m, &ds, 0.5).unwrap();
        assert_abs_diff_eq!(acc.average_f1, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(acc.average_auc, 1.0, epsilon = 1e-15);
        for gs in &acc.per_group {
            assert_eq!(gs.f1, Some(1.0));
            assert_eq!(gs.auc, Some(1.0));
            assert!(gs.note.is_none());
        }
    }

    #[test]
    fn single_class_group_is_flagged_and_excluded() {
        let m = toy_model(&["a", "b"], 0.0, 10.0);
        let ds = dataset(&[
            ("a", -1.0, 0),
            ("a", 1.0, 1),
            ("b", 1.0, 1), // group b: positives only
            ("b", 2.0, 1),
        ]);
        let acc = per_group_accuracy(&m, &ds, 0.5).unwrap();
        let b = acc.per_group.iter().find(|g| g.group == "b").unwrap();
        assert!(b.auc.is_none());
        assert!(b.note.as_deref().unwrap().contains("AUC undefined"));
        assert_eq!(acc.excluded_groups, vec!["b".to_string()]);
        // macro-AUC over group a only
        assert_abs_diff_eq!(acc.average_auc, 1.0, epsilon = 1e-15);
        // F1 still defined for b (tp=2): macro over both
        assert_abs_diff_eq!(acc.average_f1, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn weighted_averaging_uses_row_counts() {
        let m = toy_model(&["a", "b"], 0.0, 10.0);
        // group a (2 rows): perfect. group b (4 rows): one false positive.
        let ds = dataset(&[
            ("a", -1.0, 0),
            ("a", 1.0, 1),
            ("b", 1.0, 1),
            ("b", 2.0, 1),
            ("b", 3.0, 0), // predicted positive, truth negative
            ("b", -1.0, 0),
        ]);
        let macro_avg = per_group_accuracy(&m, &ds, 0.5).unwrap();
        let weighted =
            per_group_accuracy_with(&m, &ds, 0.5, Averaging::Weighted).unwrap();
        let f1_a = 1.0;
        let f1_b = 0.8; // tp=2 fp=1 fn=0
        assert_abs_diff_eq!(macro_avg.average_f1, (f1_a + f1_b) / 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(
            weighted.average_f1,
            (2.0 * f1_a + 4.0 * f1_b) / 6.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn groups_are_reported_in_sorted_order() {
        let m = toy_model(&["a", "b", "c"], 0.0, 10.0);
        let ds = dataset(&[
            ("c", -1.0, 0),
            ("c", 1.0, 1),
            ("a", -1.0, 0),
            ("a", 1.0, 1),
            ("b", -1.0, 0),
            ("b", 1.0, 1),
        ]);
        let acc = per_group_accuracy(&m, &ds, 0.5).unwrap();
        let order: Vec<&str> = acc.per_group.iter().map(|g| g.group.as_str()).collect();
        assert_eq!(order, vec!["a", "b", "c"]);
    }
}
