//! Fairness KPIs: group fairness (statistical parity, disparate impact,
//! equalized odds) over a binary sensitive attribute, and individual
//! fairness (same-group similar pairs and cross-group probability gaps).

use crate::error::{AuditError, Result};
use crate::ingest::Dataset;
use crate::mlm::MlmModel;
use serde::{Deserialize, Serialize};

// ---------------------------------------------------------------------------
// group fairness
// ---------------------------------------------------------------------------

/// Row-aligned inputs for the group-fairness KPIs. `s` marks privileged
/// membership (1 = privileged); `group` carries the model-group label so
/// results can be sliced per group.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupFairnessInput {
    pub y_true: Vec<u8>,
    pub y_pred: Vec<u8>,
    pub s: Vec<u8>,
    pub group: Vec<String>,
}

impl GroupFairnessInput {
    pub fn new(y_true: Vec<u8>, y_pred: Vec<u8>, s: Vec<u8>, group: Vec<String>) -> Result<Self> {
        let n = y_true.len();
        if y_pred.len() != n || s.len() != n || group.len() != n {
            return Err(AuditError::LengthMismatch(format!(
                "y_true {} / y_pred {} / s {} / group {}",
                n,
                y_pred.len(),
                s.len(),
                group.len()
            )));
        }
        if n == 0 {
            return Err(AuditError::EmptyDataset(
                "group fairness needs at least one row".into(),
            ));
        }
        if y_true
            .iter()
            .chain(&y_pred)
            .chain(&s)
            .any(|&v| v != 0 && v != 1)
        {
            return Err(AuditError::InvalidConfig(
                "group fairness labels must be strictly 0/1".into(),
            ));
        }
        Ok(GroupFairnessInput {
            y_true,
            y_pred,
            s,
            group,
        })
    }

    /// Builds the input from a dataset with a derived target: predictions
    /// supplied by the caller, privilege = (sensitive column == value).
    pub fn from_dataset(data: &Dataset, y_pred: Vec<u8>, privileged_value: &str) -> Result<Self> {
        if data.target.len() != data.n_rows() {
            return Err(AuditError::InvalidConfig(
                "group fairness needs a derived target".into(),
            ));
        }
        let s = data
            .sensitive
            .iter()
            .map(|v| u8::from(v == privileged_value))
            .collect();
        GroupFairnessInput::new(data.target.clone(), y_pred, s, data.group.clone())
    }

    /// The rows belonging to one model group.
    pub fn slice_group(&self, g: &str) -> GroupFairnessInput {
        let keep: Vec<usize> = (0..self.y_true.len())
            .filter(|&i| self.group[i] == g)
            .collect();
        GroupFairnessInput {
            y_true: keep.iter().map(|&i| self.y_true[i]).collect(),
            y_pred: keep.iter().map(|&i| self.y_pred[i]).collect(),
            s: keep.iter().map(|&i| self.s[i]).collect(),
            group: keep.iter().map(|&i| self.group[i].clone()).collect(),
        }
    }

    /// Positive-prediction rates (privileged, under-privileged).
    fn positive_rates(&self) -> Result<(f64, f64)> {
        let mut counts = [0usize; 2]; // rows per side
        let mut positives = [0usize; 2];
        for i in 0..self.y_true.len() {
            let side = self.s[i] as usize;
            counts[side] += 1;
            positives[side] += self.y_pred[i] as usize;
        }
        if counts[1] == 0 {
            return Err(AuditError::EmptySide(
                "no privileged rows (s = 1)".into(),
            ));
        }
        if counts[0] == 0 {
            return Err(AuditError::EmptySide(
                "no under-privileged rows (s = 0)".into(),
            ));
        }
        Ok((
            positives[1] as f64 / counts[1] as f64,
            positives[0] as f64 / counts[0] as f64,
        ))
    }
}

/// Statistical parity: |P[Ŷ=1 | S=1] − P[Ŷ=1 | S≠1]|.
pub fn statistical_parity(input: &GroupFairnessInput) -> Result<f64> {
    let (priv_rate, unpriv_rate) = input.positive_rates()?;
    Ok((priv_rate - unpriv_rate).abs())
}

/// Disparate impact: P[Ŷ=1 | S≠1] / P[Ŷ=1 | S=1] — the under-privileged
/// rate over the privileged rate, so values below 1 signal disadvantage to
/// the under-privileged side and the four-fifths rule reads directly.
pub fn disparate_impact(input: &GroupFairnessInput) -> Result<f64> {
    let (priv_rate, unpriv_rate) = input.positive_rates()?;
    if priv_rate == 0.0 {
        return Err(AuditError::ZeroDenominator);
    }
    Ok(unpriv_rate / priv_rate)
}

/// The equalized-odds decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EqualizedOdds {
    /// |FPR₁ − FPR₀|
    pub diff_fpr: f64,
    /// |TPR₁ − TPR₀|
    pub diff_tpr: f64,
    /// ½·(diff_fpr + diff_tpr)
    pub equal_odds: f64,
}

/// Equalized odds across the sensitive split. Each side needs at least one
/// actual positive and one actual negative; otherwise the offending rate is
/// reported as undefined rather than silently zero.
pub fn equalized_odds(input: &GroupFairnessInput) -> Result<EqualizedOdds> {
    // [side][actual]: counts and predicted-positive counts
    let mut rows = [[0usize; 2]; 2];
    let mut pred_pos = [[0usize; 2]; 2];
    for i in 0..input.y_true.len() {
        let side = input.s[i] as usize;
        let actual = input.y_true[i] as usize;
        rows[side][actual] += 1;
        pred_pos[side][actual] += input.y_pred[i] as usize;
    }
    if rows[1][0] + rows[1][1] == 0 {
        return Err(AuditError::EmptySide("no privileged rows (s = 1)".into()));
    }
    if rows[0][0] + rows[0][1] == 0 {
        return Err(AuditError::EmptySide(
            "no under-privileged rows (s = 0)".into(),
        ));
    }
    let side_name = |side: usize| if side == 1 { "privileged" } else { "under-privileged" };
    for side in [1usize, 0] {
        if rows[side][1] == 0 {
            return Err(AuditError::UndefinedRate {
                group: side_name(side).into(),
                reason: "no actual positives, TPR undefined".into(),
            });
        }
        if rows[side][0] == 0 {
            return Err(AuditError::UndefinedRate {
                group: side_name(side).into(),
                reason: "no actual negatives, FPR undefined".into(),
            });
        }
    }
    let fpr = |side: usize| pred_pos[side][0] as f64 / rows[side][0] as f64;
    let tpr = |side: usize| pred_pos[side][1] as f64 / rows[side][1] as f64;
    let diff_fpr = (fpr(1) - fpr(0)).abs();
    let diff_tpr = (tpr(1) - tpr(0)).abs();
    Ok(EqualizedOdds {
        diff_fpr,
        diff_tpr,
        equal_odds: 0.5 * (diff_fpr + diff_tpr),
    })
}

// ---------------------------------------------------------------------------
// individual fairness
// ---------------------------------------------------------------------------

/// Similarity metric for individual fairness: Euclidean distance over
/// non-excluded features, each scaled by its training standard deviation.
/// Two rows are "similar" when their distance is at most `delta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilaritySpec {
    pub delta: f64,
    /// Population standard deviation per feature, from the training slice.
    pub feature_stds: Vec<f64>,
    /// Feature indices left out of the distance (e.g. one doubling as the
    /// sensitive attribute).
    pub excluded: Vec<usize>,
}

impl SimilaritySpec {
    /// Builds the metric from training data. `excluded_features` names any
    /// features to leave out of the distance.
    pub fn from_training(train: &Dataset, excluded_features: &[String], delta: f64) -> Result<Self> {
        if !(delta.is_finite() && delta >= 0.0) {
            return Err(AuditError::InvalidConfig(format!(
                "similarity delta must be finite and >= 0, got {delta}"
            )));
        }
        if train.n_rows() == 0 {
            return Err(AuditError::EmptyDataset(
                "similarity scaling needs training rows".into(),
            ));
        }
        let mut excluded = Vec::new();
        for name in excluded_features {
            let idx = train
                .feature_names
                .iter()
                .position(|f| f == name)
                .ok_or_else(|| {
                    AuditError::InvalidConfig(format!(
                        "excluded similarity feature {name:?} is not a dataset feature"
                    ))
                })?;
            if !excluded.contains(&idx) {
                excluded.push(idx);
            }
        }
        excluded.sort_unstable();
        if excluded.len() == train.n_features() {
            return Err(AuditError::InvalidConfig(
                "all features excluded; similarity distance undefined".into(),
            ));
        }
        let n = train.n_rows() as f64;
        let mut stds = Vec::with_capacity(train.n_features());
        for k in 0..train.n_features() {
            let mean = train.features.iter().map(|r| r[k]).sum::<f64>() / n;
            let var = train
                .features
                .iter()
                .map(|r| (r[k] - mean) * (r[k] - mean))
                .sum::<f64>()
                / n;
            let std = var.sqrt();
            if std <= 0.0 && !excluded.contains(&k) {
                return Err(AuditError::ConstantColumn {
                    column: train.feature_names[k].clone(),
                    context: "similarity distance needs a positive scale".into(),
                });
            }
            stds.push(std);
        }
        Ok(SimilaritySpec {
            delta,
            feature_stds: stds,
            excluded,
        })
    }

    /// d(a, b) = sqrt( Σ_k ((a_k − b_k)/σ_k)² ) over non-excluded features.
    pub fn distance(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        let m = self.feature_stds.len();
        if a.len() != m || b.len() != m {
            return Err(AuditError::DimensionMismatch {
                expected: m,
                got: if a.len() != m { a.len() } else { b.len() },
            });
        }
        let mut sum = 0.0;
        for k in 0..m {
            if self.excluded.contains(&k) {
                continue;
            }
            let z = (a[k] - b[k]) / self.feature_stds[k];
            sum += z * z;
        }
        Ok(sum.sqrt())
    }
}

/// One same-group pair comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiffInd {
    pub distance: f64,
    /// |P(Ŷ=1 | a) − P(Ŷ=1 | b)| under the group's coefficients.
    pub diff: f64,
    /// Whether the pair passes the similarity gate (distance ≤ delta). The
    /// gate is recorded, never used to suppress the diff.
    pub similar: bool,
}

/// Individual fairness for one within-group pair.
pub fn diff_ind(
    model: &MlmModel,
    a: &[f64],
    b: &[f64],
    group: &str,
    spec: &SimilaritySpec,
) -> Result<DiffInd> {
    let distance = spec.distance(a, b)?;
    let pa = model.predict_proba(a, group)?;
    let pb = model.predict_proba(b, group)?;
    Ok(DiffInd {
        distance,
        diff: (pa - pb).abs(),
        similar: distance <= spec.delta,
    })
}

/// Cross-group individual fairness: the probability gap for one feature
/// vector evaluated under two groups' coefficients.
pub fn diff_ind_mlm(model: &MlmModel, x: &[f64], g_a: &str, g_b: &str) -> Result<f64> {
    let pa = model.predict_proba(x, g_a)?;
    let pb = model.predict_proba(x, g_b)?;
    Ok((pa - pb).abs())
}

/// Aggregates over the qualifying pairs of one group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimilarPairStats {
    pub max_diff: f64,
    pub mean_diff: f64,
    pub pair_count: usize,
}

/// Per-group scan outcome: stats, or the structured no-pairs case.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PairScanOutcome {
    Pairs(SimilarPairStats),
    /// No pair in the group passed the similarity gate.
    NoSimilarPairs,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupPairScan {
    pub group: String,
    pub outcome: PairScanOutcome,
}

/// Exhaustive within-group scan: every pair with distance ≤ delta
/// contributes its probability diff. Groups are reported in label order.
pub fn scan_similar_pairs(
    model: &MlmModel,
    data: &Dataset,
    spec: &SimilaritySpec,
) -> Result<Vec<GroupPairScan>> {
    let mut out = Vec::new();
    for g in &data.groups {
        let rows = data.rows_of_group(g);
        let probs: Vec<f64> = rows
            .iter()
            .map(|&i| model.predict_proba(&data.features[i], g))
            .collect::<Result<_>>()?;
        let mut max_diff = 0.0f64;
        let mut sum = 0.0;
        let mut count = 0usize;
        for i in 0..rows.len() {
            for j in (i + 1)..rows.len() {
                let d = spec.distance(&data.features[rows[i]], &data.features[rows[j]])?;
                if d <= spec.delta {
                    let diff = (probs[i] - probs[j]).abs();
                    max_diff = max_diff.max(diff);
                    sum += diff;
                    count += 1;
                }
            }
        }
        out.push(GroupPairScan {
            group: g.clone(),
            outcome: if count == 0 {
                PairScanOutcome::NoSimilarPairs
            } else {
                PairScanOutcome::Pairs(SimilarPairStats {
                    max_diff,
                    mean_diff: sum / count as f64,
                    pair_count: count,
                })
            },
        });
    }
    Ok(out)
}

/// Cross-group scan aggregates.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossGroupScan {
    /// Mean over instances of the worst probability gap across group pairs —
    /// the headline Diff_Ind_MLM number.
    pub mean_worst_case: f64,
    /// Largest single-instance gap observed (surfaced as a flag, not the
    /// headline: a lone tail instance should not recolor the metric).
    pub max_worst_case: f64,
    /// Mean gap per unordered group pair, in label order.
    pub pair_means: Vec<(String, String, f64)>,
    pub n_instances: usize,
}

/// Evaluates every row of `data` under every group's coefficients and
/// aggregates the cross-group probability gaps.
pub fn diff_ind_mlm_scan(model: &MlmModel, data: &Dataset) -> Result<CrossGroupScan> {
    let j = model.groups.len();
    if j < 2 {
        return Err(AuditError::InsufficientGroups { have: j, need: 2 });
    }
    if data.n_rows() == 0 {
        return Err(AuditError::EmptyDataset(
            "cross-group scan needs rows".into(),
        ));
    }
    let mut worst_sum = 0.0;
    let mut worst_max = 0.0f64;
    let mut pair_sums = vec![0.0; j * j];
    for row in &data.features {
        let probs: Vec<f64> = model
            .groups
            .iter()
            .map(|g| model.predict_proba(row, g))
            .collect::<Result<_>>()?;
        let mut row_worst = 0.0f64;
        for a in 0..j {
            for b in (a + 1)..j {
                let gap = (probs[a] - probs[b]).abs();
                pair_sums[a * j + b] += gap;
                row_worst = row_worst.max(gap);
            }
        }
        worst_sum += row_worst;
        worst_max = worst_max.max(row_worst);
    }
    let n = data.n_rows();
    let mut pair_means = Vec::new();
    for a in 0..j {
        for b in (a + 1)..j {
            pair_means.push((
                model.groups[a].clone(),
                model.groups[b].clone(),
                pair_sums[a * j + b] / n as f64,
            ));
        }
    }
    Ok(CrossGroupScan {
        mean_worst_case: worst_sum / n as f64,
        max_worst_case: worst_max,
        pair_means,
        n_instances: n,
    })
}
