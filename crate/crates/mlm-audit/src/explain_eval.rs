//! Explainability-accuracy KPIs — rank agreement (`rho_order`), probability
//! unexplained (PUX), and sign disagreement (POIFS) — plus the sampled
//! per-group evaluation protocol that compares an explainer against the
//! model-intrinsic attribution.

use crate::error::{AuditError, Result};
use crate::explainers::{
    kernel_shap, linear_lime, Attribution, BackgroundSet, LimeConfig, Method,
};
use crate::ingest::Dataset;
use crate::mlm::{sigmoid, MlmModel};
use crate::seeding;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// |value| below this is sign-neutral: it matches any sign in POIFS and
/// renders as sign 0 in comparison records. Avoids penalizing exact zeros
/// from dummy features.
pub const SIGN_TOLERANCE: f64 = 1e-12;

/// Default protocol size: instances sampled per repeat.
pub const EVAL_N_INSTANCES: usize = 50;
/// Default protocol size: repeats per group.
pub const EVAL_N_REPEATS: usize = 10;
/// A repeat with more than this fraction of excluded instances is flagged.
pub const MAX_EXCLUSION_FRACTION: f64 = 0.2;
/// Background rows drawn per group for Kernel SHAP.
pub const BACKGROUND_MAX_ROWS: usize = 100;

// ---------------------------------------------------------------------------
// per-instance KPIs
// ---------------------------------------------------------------------------

/// Mid-ranks of `values` in descending order (rank 1 = largest). Ties get
/// the average of the ranks they span.
fn midranks_desc(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_unstable_by(|&i, &j| values[j].total_cmp(&values[i]));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation of two contribution vectors, with ranks taken
/// over contribution magnitudes (descending, ties mid-ranked) and the
/// correlation computed as the Pearson correlation of the rank vectors —
/// the tie-adjusted form.
pub fn spearman_rho(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(AuditError::LengthMismatch(format!(
            "rank correlation inputs: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(AuditError::InvalidConfig(
            "rank correlation needs at least 2 features".into(),
        ));
    }
    let mag = |v: &[f64]| -> Vec<f64> { v.iter().map(|x| x.abs()).collect() };
    let ma = mag(a);
    let mb = mag(b);
    for (name, m) in [("first", &ma), ("second", &mb)] {
        let first = m[0];
        if m.iter().all(|&x| x == first) {
            return Err(AuditError::ConstantVector(format!(
                "{name} contribution vector"
            )));
        }
    }
    let ra = midranks_desc(&ma);
    let rb = midranks_desc(&mb);
    let n = ra.len() as f64;
    let mean_a = ra.iter().sum::<f64>() / n;
    let mean_b = rb.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_a = 0.0;
    let mut var_b = 0.0;
    for k in 0..ra.len() {
        let da = ra[k] - mean_a;
        let db = rb[k] - mean_b;
        cov += da * db;
        var_a += da * da;
        var_b += db * db;
    }
    Ok((cov / (var_a * var_b).sqrt()).clamp(-1.0, 1.0))
}

/// Probability unexplained: the gap between the class-1 probabilities that
/// the two attributions reconstruct from their log-odds totals.
pub fn pux(intrinsic: &Attribution, explained: &Attribution) -> f64 {
    (sigmoid(intrinsic.total()) - sigmoid(explained.total())).abs()
}

/// Sign of a contribution under the neutrality tolerance.
pub fn sign_of(value: f64) -> i8 {
    if value.abs() < SIGN_TOLERANCE {
        0
    } else if value > 0.0 {
        1
    } else {
        -1
    }
}

/// Percentage of features whose contribution sign disagrees with the
/// intrinsic sign. Neutral (≈0) contributions on either side match
/// everything; the denominator is always the full feature count.
pub fn poifs(intrinsic: &Attribution, explained: &Attribution) -> Result<f64> {
    let m = intrinsic.contributions.len();
    if explained.contributions.len() != m {
        return Err(AuditError::LengthMismatch(format!(
            "POIFS inputs: {} vs {} contributions",
            m,
            explained.contributions.len()
        )));
    }
    if m == 0 {
        return Err(AuditError::InvalidConfig(
            "POIFS needs at least one feature".into(),
        ));
    }
    let wrong = intrinsic
        .contributions
        .iter()
        .zip(&explained.contributions)
        .filter(|(&i, &e)| {
            let si = sign_of(i);
            let se = sign_of(e);
            si != 0 && se != 0 && si != se
        })
        .count();
    Ok(100.0 * wrong as f64 / m as f64)
}

// ---------------------------------------------------------------------------
// the sampled evaluation protocol
// ---------------------------------------------------------------------------

/// Sampling protocol: `n_instances` training rows per repeat, `n_repeats`
/// repeats per group, all streams derived from `seed`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Protocol {
    pub n_instances: usize,
    pub n_repeats: usize,
    pub seed: u64,
}

impl Protocol {
    /// The default 50 × 10 protocol.
    pub fn with_seed(seed: u64) -> Self {
        Protocol {
            n_instances: EVAL_N_INSTANCES,
            n_repeats: EVAL_N_REPEATS,
            seed,
        }
    }
}

/// Mean and sample standard deviation of the repeat means.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KpiSummary {
    pub mean: f64,
    pub std: f64,
}

fn summarize(repeat_means: &[f64]) -> Option<KpiSummary> {
    if repeat_means.is_empty() {
        return None;
    }
    let n = repeat_means.len() as f64;
    let mean = repeat_means.iter().sum::<f64>() / n;
    let std = if repeat_means.len() < 2 {
        0.0
    } else {
        (repeat_means.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    Some(KpiSummary { mean, std })
}

/// One group's evaluation. A summary is `None` only if every sampled
/// instance in every repeat was excluded for that KPI.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupEval {
    pub group: String,
    pub rho_order: Option<KpiSummary>,
    pub pux: Option<KpiSummary>,
    pub poifs: Option<KpiSummary>,
    /// (instance, repeat) slots excluded from at least one KPI mean —
    /// explainer failures and constant-magnitude rank vectors.
    pub excluded: usize,
    /// Repeats where exclusions exceeded [`MAX_EXCLUSION_FRACTION`].
    pub invalid_repeats: usize,
    /// True when the group had fewer training rows than `n_instances`, so
    /// sampling fell back to with-replacement.
    pub sampled_with_replacement: bool,
}

/// Full result of [`evaluate_explainer`] for one method.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExplainEvalResult {
    pub method: Method,
    pub protocol: Protocol,
    pub per_group: Vec<GroupEval>,
}

/// Population std of each training feature, used as the LIME perturbation
/// scale. Zero-variance features get scale 0 (held fixed by LIME).
pub fn training_scales(train: &Dataset) -> Vec<f64> {
    let n = train.n_rows() as f64;
    (0..train.n_features())
        .map(|k| {
            let mean = train.features.iter().map(|r| r[k]).sum::<f64>() / n;
            (train
                .features
                .iter()
                .map(|r| (r[k] - mean) * (r[k] - mean))
                .sum::<f64>()
                / n)
                .sqrt()
        })
        .collect()
}

/// Explainer settings the evaluation applies on top of the protocol.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSettings {
    /// Background rows per group for kernel SHAP.
    pub background_max_rows: usize,
    pub lime_n_samples: usize,
    pub lime_ridge_lambda: f64,
    /// `None` keeps the surrogate's default width, 0.75·sqrt(M).
    pub lime_kernel_width: Option<f64>,
}

impl Default for EvalSettings {
    fn default() -> Self {
        // lime_* mirror LimeConfig::new (checked by a test).
        EvalSettings {
            background_max_rows: BACKGROUND_MAX_ROWS,
            lime_n_samples: 5000,
            lime_ridge_lambda: 1e-3,
            lime_kernel_width: None,
        }
    }
}

/// Runs the sampled protocol: per group and repeat `r`, draws `n_instances`
/// training rows without replacement from stream `eval/<group>/<r>`,
/// explains each with `method`, scores it against the intrinsic attribution,
/// and aggregates the per-repeat means. Deterministic per seed; instances
/// whose explanation or KPI fails are excluded and counted.
pub fn evaluate_explainer(
    model: &MlmModel,
    train: &Dataset,
    method: Method,
    protocol: &Protocol,
) -> Result<ExplainEvalResult> {
    evaluate_explainer_with(model, train, method, protocol, &EvalSettings::default())
}

/// [`evaluate_explainer`] with explicit explainer settings.
pub fn evaluate_explainer_with(
    model: &MlmModel,
    train: &Dataset,
    method: Method,
    protocol: &Protocol,
    settings: &EvalSettings,
) -> Result<ExplainEvalResult> {
    if protocol.n_instances == 0 || protocol.n_repeats == 0 {
        return Err(AuditError::InvalidConfig(
            "protocol needs n_instances >= 1 and n_repeats >= 1".into(),
        ));
    }
    if train.n_features() != model.feature_names.len() {
        return Err(AuditError::DimensionMismatch {
            expected: model.feature_names.len(),
            got: train.n_features(),
        });
    }
    let lime_scales = training_scales(train);
    let mut per_group = Vec::with_capacity(model.groups.len());
    for g in &model.groups {
        let rows = train.rows_of_group(g);
        if rows.is_empty() {
            return Err(AuditError::EmptyDataset(format!(
                "group {g:?} has no training rows to sample"
            )));
        }
        let with_replacement = rows.len() < protocol.n_instances;
        let (alpha, betas) = model.coefficients_for(g)?;
        let f = |x: &[f64]| alpha + betas.iter().zip(x).map(|(b, v)| b * v).sum::<f64>();
        let bg = if method == Method::KernelShap {
            Some(BackgroundSet::from_group(
                train,
                g,
                settings.background_max_rows,
                protocol.seed,
            )?)
        } else {
            None
        };

        let mut rho_means = Vec::new();
        let mut pux_means = Vec::new();
        let mut poifs_means = Vec::new();
        let mut excluded = 0usize;
        let mut invalid_repeats = 0usize;
        for r in 0..protocol.n_repeats {
            let mut rng = seeding::stream(protocol.seed, &format!("eval/{g}/{r}"));
            let sampled: Vec<usize> = if with_replacement {
                (0..protocol.n_instances)
                    .map(|_| rows[rng.gen_range(0..rows.len())])
                    .collect()
            } else {
                rand::seq::index::sample(&mut rng, rows.len(), protocol.n_instances)
                    .iter()
                    .map(|i| rows[i])
                    .collect()
            };
            let mut rho_vals = Vec::new();
            let mut pux_vals = Vec::new();
            let mut poifs_vals = Vec::new();
            let mut excluded_here = 0usize;
            for idx in sampled {
                let x = &train.features[idx];
                let intrinsic = model.intrinsic_attribution(x, g)?;
                let explained = match method {
                    Method::Intrinsic => Ok(intrinsic.clone()),
                    Method::KernelShap => {
                        kernel_shap(&f, x, bg.as_ref().expect("background built above"))
                    }
                    Method::LinearLime => {
                        let mut cfg = LimeConfig::new(lime_scales.clone(), protocol.seed);
                        cfg.n_samples = settings.lime_n_samples;
                        cfg.ridge_lambda = settings.lime_ridge_lambda;
                        if let Some(w) = settings.lime_kernel_width {
                            cfg.kernel_width = w;
                        }
                        cfg.stream_label = format!("lime/{g}/row{idx}");
                        linear_lime(&f, x, &cfg)
                    }
                };
                let explained = match explained {
                    Ok(a) => a,
                    Err(_) => {
                        excluded_here += 1;
                        continue;
                    }
                };
                pux_vals.push(pux(&intrinsic, &explained));
                poifs_vals.push(poifs(&intrinsic, &explained)?);
                match spearman_rho(&intrinsic.contributions, &explained.contributions) {
                    Ok(rho) => rho_vals.push(rho),
                    Err(AuditError::ConstantVector(_)) => excluded_here += 1,
                    Err(e) => return Err(e),
                }
            }
            if excluded_here as f64 > MAX_EXCLUSION_FRACTION * protocol.n_instances as f64 {
                invalid_repeats += 1;
            }
            excluded += excluded_here;
            let mean_of = |v: &Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
            if !rho_vals.is_empty() {
                rho_means.push(mean_of(&rho_vals));
            }
            if !pux_vals.is_empty() {
                pux_means.push(mean_of(&pux_vals));
                poifs_means.push(mean_of(&poifs_vals));
            }
        }
        per_group.push(GroupEval {
            group: g.clone(),
            rho_order: summarize(&rho_means),
            pux: summarize(&pux_means),
            poifs: summarize(&poifs_means),
            excluded,
            invalid_repeats,
            sampled_with_replacement: with_replacement,
        });
    }
    Ok(ExplainEvalResult {
        method,
        protocol: *protocol,
        per_group,
    })
}

// ---------------------------------------------------------------------------
// side-by-side instance records
// ---------------------------------------------------------------------------

/// One method's view of an instance: the attribution plus derived magnitude
/// mid-ranks (1 = largest) and signs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodRecord {
    pub attribution: Attribution,
    pub magnitude_ranks: Vec<f64>,
    pub signs: Vec<i8>,
}

impl MethodRecord {
    fn from(attribution: Attribution) -> Self {
        let mags: Vec<f64> = attribution.contributions.iter().map(|c| c.abs()).collect();
        let magnitude_ranks = midranks_desc(&mags);
        let signs = attribution.contributions.iter().map(|&c| sign_of(c)).collect();
        MethodRecord {
            attribution,
            magnitude_ranks,
            signs,
        }
    }
}

/// Side-by-side comparison of intrinsic, Kernel SHAP, and Linear LIME on one
/// instance, with named flags for every sign or rank-order disagreement —
/// the raw material for outlier inspection.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InstanceComparison {
    pub group: String,
    pub feature_names: Vec<String>,
    pub features: Vec<f64>,
    pub intrinsic: MethodRecord,
    pub shap: MethodRecord,
    pub lime: MethodRecord,
    pub flags: Vec<String>,
}

/// Explains `x` with all three methods and flags disagreements against the
/// intrinsic attribution.
pub fn instance_comparison(
    model: &MlmModel,
    x: &[f64],
    group: &str,
    bg: &BackgroundSet,
    lime_cfg: &LimeConfig,
) -> Result<InstanceComparison> {
    let (alpha, betas) = model.coefficients_for(group)?;
    let f = |row: &[f64]| alpha + betas.iter().zip(row).map(|(b, v)| b * v).sum::<f64>();
    let intrinsic = MethodRecord::from(model.intrinsic_attribution(x, group)?);
    let shap = MethodRecord::from(kernel_shap(&f, x, bg)?);
    let lime = MethodRecord::from(linear_lime(&f, x, lime_cfg)?);
    let mut flags = Vec::new();
    for (name, rec) in [("kernel_shap", &shap), ("linear_lime", &lime)] {
        if rec.magnitude_ranks != intrinsic.magnitude_ranks {
            flags.push(format!("{name}: magnitude rank order differs from intrinsic"));
        }
        for k in 0..x.len() {
            let si = intrinsic.signs[k];
            let se = rec.signs[k];
            if si != 0 && se != 0 && si != se {
                flags.push(format!(
                    "{name}: sign of {feature} disagrees with intrinsic",
                    feature = model.feature_names[k]
                ));
            }
        }
    }
    Ok(InstanceComparison {
        group: group.to_string(),
        feature_names: model.feature_names.clone(),
        features: x.to_vec(),
        intrinsic,
        shap,
        lime,
        flags,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlm::FitMeta;
    use approx::assert_abs_diff_eq;
    use rand::RngCore;

    fn attr(base: f64, contributions: &[f64]) -> Attribution {
        Attribution {
            method: Method::Intrinsic,
            base,
            contributions: contributions.to_vec(),
            slopes: None,
            instance_id: None,
            group: None,
        }
    }

    // ---- spearman ----------------------------------------------------------

    #[test]
    fn identical_orderings_give_one() {
        assert_abs_diff_eq!(
            spearman_rho(&[3.0, -1.0, 0.5], &[6.0, -2.0, 1.0]).unwrap(),
            1.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn reversed_orderings_give_minus_one() {
        assert_abs_diff_eq!(
            spearman_rho(&[3.0, 1.0, 0.5], &[0.5, 1.0, 3.0]).unwrap(),
            -1.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn tied_magnitudes_midrank() {
        // a = (3,1,1), b = (2,1,1): identical tie structure → 1.0
        assert_abs_diff_eq!(
            spearman_rho(&[3.0, 1.0, 1.0], &[2.0, 1.0, 1.0]).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        // hand-computed tie-adjusted value, cross-checked independently:
        // ranks desc a = (1, 2.5, 2.5, 4), b = (2, 1, 3.5, 3.5) → 0.5
        assert_abs_diff_eq!(
            spearman_rho(&[5.0, 4.0, 4.0, 1.0], &[4.0, 5.0, 1.0, 1.0]).unwrap(),
            0.5,
            epsilon = 1e-12
        );
    }

    #[test]
    fn self_correlation_is_one_and_monotone_invariant() {
        let mut rng = seeding::stream(41, "rho-prop");
        for _ in 0..25 {
            let n = 3 + (rng.next_u64() % 8) as usize;
            let a: Vec<f64> = (0..n)
                .map(|_| (rng.next_u64() % 2000) as f64 / 100.0 - 10.0)
                .collect();
            let b: Vec<f64> = (0..n)
                .map(|_| (rng.next_u64() % 2000) as f64 / 100.0 - 10.0)
                .collect();
            let (Ok(base), Ok(self_rho)) = (spearman_rho(&a, &b), spearman_rho(&a, &a)) else {
                continue; // tied-constant draw
            };
            assert_abs_diff_eq!(self_rho, 1.0, epsilon = 1e-12);
            // strictly increasing transform of magnitudes: m → m + m³
            let grow = |v: &[f64]| -> Vec<f64> {
                v.iter()
                    .map(|&x| x.signum() * (x.abs() + x.abs().powi(3)))
                    .collect()
            };
            let transformed = spearman_rho(&grow(&a), &grow(&b)).unwrap();
            assert_abs_diff_eq!(base, transformed, epsilon = 1e-12);
        }
    }

    #[test]
    fn constant_magnitudes_are_rejected() {
        assert!(matches!(
            spearman_rho(&[1.0, -1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(AuditError::ConstantVector(_))
        ));
        assert!(matches!(
            spearman_rho(&[1.0, 2.0, 3.0], &[0.0, 0.0, 0.0]),
            Err(AuditError::ConstantVector(_))
        ));
        assert!(spearman_rho(&[1.0], &[2.0]).is_err());
        assert!(spearman_rho(&[1.0, 2.0], &[2.0]).is_err());
    }

    // ---- pux / poifs ---------------------------------------------------------

    #[test]
    fn pux_zero_for_identical_and_hand_value() {
        let a = attr(0.3, &[0.2, -0.1]);
        assert_eq!(pux(&a, &a), 0.0);
        let b = attr(0.0, &[-0.5, 0.3]);
        // totals 0.4 and −0.2
        let want = (sigmoid(0.4) - sigmoid(-0.2)).abs();
        assert_abs_diff_eq!(pux(&a, &b), want, epsilon = 1e-15);
        assert!(want > 0.14 && want < 0.15);
    }

    #[test]
    fn pux_is_symmetric_and_bounded() {
        let mut rng = seeding::stream(43, "pux-prop");
        for _ in 0..50 {
            let f = |rng: &mut dyn RngCore| (rng.next_u64() % 4000) as f64 / 100.0 - 20.0;
            let a = attr(f(&mut rng), &[f(&mut rng), f(&mut rng)]);
            let b = attr(f(&mut rng), &[f(&mut rng), f(&mut rng)]);
            let ab = pux(&a, &b);
            assert_abs_diff_eq!(ab, pux(&b, &a), epsilon = 1e-15);
            assert!((0.0..=1.0).contains(&ab));
        }
    }

    #[test]
    fn poifs_counts_sign_flips() {
        let i = attr(0.0, &[1.0, 2.0, -3.0]);
        assert_eq!(poifs(&i, &i).unwrap(), 0.0);
        let one_flip = attr(0.0, &[1.0, 2.0, 3.0]);
        assert_abs_diff_eq!(poifs(&i, &one_flip).unwrap(), 100.0 / 3.0, epsilon = 1e-12);
        let all_flip = attr(0.0, &[-1.0, -2.0, 3.0]);
        assert_abs_diff_eq!(poifs(&i, &all_flip).unwrap(), 100.0, epsilon = 1e-12);
    }

    #[test]
    fn poifs_neutral_zeros_match_everything() {
        let i = attr(0.0, &[0.0, 1e-13, 2.0]);
        let e = attr(0.0, &[-5.0, -7.0, 2.0]);
        assert_eq!(poifs(&i, &e).unwrap(), 0.0);
        // neutrality is mutual: explained-side zeros also match
        let e2 = attr(0.0, &[0.0, 0.0, -2.0]);
        assert_abs_diff_eq!(poifs(&i, &e2).unwrap(), 100.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn poifs_is_quantized_to_multiples_of_100_over_m() {
        let mut rng = seeding::stream(47, "poifs-prop");
        for _ in 0..40 {
            let draw = |rng: &mut dyn RngCore| (rng.next_u64() % 21) as f64 - 10.0;
            let i = attr(0.0, &(0..4).map(|_| draw(&mut rng)).collect::<Vec<_>>());
            let e = attr(0.0, &(0..4).map(|_| draw(&mut rng)).collect::<Vec<_>>());
            let v = poifs(&i, &e).unwrap();
            let quantum = v / 25.0;
            assert_abs_diff_eq!(quantum, quantum.round(), epsilon = 1e-12);
        }
        assert!(poifs(&attr(0.0, &[1.0]), &attr(0.0, &[1.0, 2.0])).is_err());
    }

    // ---- the protocol ----------------------------------------------------------

    fn toy_model() -> MlmModel {
        MlmModel {
            groups: vec!["a".into(), "b".into()],
            feature_names: vec!["x0".into(), "x1".into()],
            varying_intercept: true,
            varying_features: vec![],
            alpha: vec![0.4, -0.6],
            beta_varying: vec![],
            beta_fixed: vec![0.9, -1.3],
            mu_alpha: -0.1,
            sigma2_alpha: 0.25,
            mu_beta: vec![],
            sigma2_beta: vec![],
            fit_meta: FitMeta {
                iterations: 1,
                converged: true,
                penalized_loglik: 0.0,
            },
        }
    }

    fn toy_train(rows_per_group: usize) -> Dataset {
        let mut rng = seeding::stream(53, "eval-train");
        let mut features = Vec::new();
        let mut group = Vec::new();
        for g in ["a", "b"] {
            for _ in 0..rows_per_group {
                let x0 = (rng.next_u64() % 1000) as f64 / 100.0 - 5.0;
                let x1 = (rng.next_u64() % 1000) as f64 / 200.0 - 2.5;
                features.push(vec![x0, x1]);
                group.push(g.to_string());
            }
        }
        let n = features.len();
        Dataset {
            header: vec!["x0".into(), "x1".into(), "g".into(), "s".into(), "t".into()],
            feature_names: vec!["x0".into(), "x1".into()],
            features,
            group,
            sensitive: vec!["s".into(); n],
            raw_target: vec!["0".into(); n],
            target: vec![0; n],
            groups: vec!["a".into(), "b".into()],
        }
    }

    #[test]
    fn intrinsic_self_test_is_perfect() {
        let m = toy_model();
        let train = toy_train(20);
        let protocol = Protocol {
            n_instances: 8,
            n_repeats: 4,
            seed: 99,
        };
        let res = evaluate_explainer(&m, &train, Method::Intrinsic, &protocol).unwrap();
        assert_eq!(res.per_group.len(), 2);
        for ge in &res.per_group {
            let rho = ge.rho_order.unwrap();
            assert_eq!(rho.mean, 1.0);
            assert_eq!(rho.std, 0.0);
            let p = ge.pux.unwrap();
            assert_eq!(p.mean, 0.0);
            assert_eq!(p.std, 0.0);
            let s = ge.poifs.unwrap();
            assert_eq!(s.mean, 0.0);
            assert_eq!(s.std, 0.0);
            assert_eq!(ge.excluded, 0);
            assert_eq!(ge.invalid_repeats, 0);
            assert!(!ge.sampled_with_replacement);
        }
    }

    #[test]
    fn same_seed_is_bit_identical_different_seed_differs() {
        let m = toy_model();
        let train = toy_train(20);
        let protocol = Protocol {
            n_instances: 6,
            n_repeats: 3,
            seed: 1234,
        };
        let r1 = evaluate_explainer(&m, &train, Method::KernelShap, &protocol).unwrap();
        let r2 = evaluate_explainer(&m, &train, Method::KernelShap, &protocol).unwrap();
        assert_eq!(r1, r2);
        assert_eq!(
            serde_json::to_string(&r1).unwrap(),
            serde_json::to_string(&r2).unwrap()
        );
        let other = Protocol {
            seed: 4321,
            ..protocol
        };
        let r3 = evaluate_explainer(&m, &train, Method::KernelShap, &other).unwrap();
        assert_eq!(r3.protocol.seed, 4321);
        // different sampled instances: at least one group mean moves
        let moved = r1
            .per_group
            .iter()
            .zip(&r3.per_group)
            .any(|(a, b)| a.rho_order.unwrap().mean != b.rho_order.unwrap().mean);
        assert!(moved);
    }

    #[test]
    fn shap_reconstruction_gap_is_numerically_zero() {
        // exact-enumeration kernel SHAP on a linear log-odds model satisfies
        // efficiency, so PUX must vanish to solver precision
        let m = toy_model();
        let train = toy_train(15);
        let protocol = Protocol {
            n_instances: 10,
            n_repeats: 2,
            seed: 7,
        };
        let res = evaluate_explainer(&m, &train, Method::KernelShap, &protocol).unwrap();
        for ge in &res.per_group {
            assert!(ge.pux.unwrap().mean < 1e-9);
            assert_eq!(ge.excluded, 0);
        }
    }

    #[test]
    fn small_groups_fall_back_to_replacement_sampling() {
        let m = toy_model();
        let train = toy_train(4);
        let protocol = Protocol {
            n_instances: 9,
            n_repeats: 2,
            seed: 5,
        };
        let res = evaluate_explainer(&m, &train, Method::Intrinsic, &protocol).unwrap();
        for ge in &res.per_group {
            assert!(ge.sampled_with_replacement);
            assert_eq!(ge.rho_order.unwrap().mean, 1.0);
        }
    }

    #[test]
    fn zero_coefficients_exclude_rho_but_keep_pux_poifs() {
        let mut m = toy_model();
        m.beta_fixed = vec![0.0, 0.0];
        let train = toy_train(12);
        let protocol = Protocol {
            n_instances: 5,
            n_repeats: 3,
            seed: 11,
        };
        // intrinsic contributions are identically zero → every rank vector is
        // constant → all instances excluded for rho, flagged invalid repeats
        let res = evaluate_explainer(&m, &train, Method::KernelShap, &protocol).unwrap();
        for ge in &res.per_group {
            assert!(ge.rho_order.is_none());
            assert_eq!(ge.excluded, 15);
            assert_eq!(ge.invalid_repeats, 3);
            // SHAP of a constant black box is all-zero → PUX and POIFS still 0
            let p = ge.pux.unwrap();
            assert!(p.mean < 1e-12);
            assert_eq!(ge.poifs.unwrap().mean, 0.0);
        }
    }

    #[test]
    fn protocol_validation() {
        let m = toy_model();
        let train = toy_train(5);
        for bad in [
            Protocol {
                n_instances: 0,
                n_repeats: 3,
                seed: 1,
            },
            Protocol {
                n_instances: 5,
                n_repeats: 0,
                seed: 1,
            },
        ] {
            assert!(evaluate_explainer(&m, &train, Method::Intrinsic, &bad).is_err());
        }
        let defaults = Protocol::with_seed(77);
        assert_eq!(defaults.n_instances, EVAL_N_INSTANCES);
        assert_eq!(defaults.n_repeats, EVAL_N_REPEATS);
    }

    // ---- instance comparison -----------------------------------------------------

    #[test]
    fn comparison_record_flags_disagreements() {
        let m = toy_model();
        let train = toy_train(25);
        let bg = BackgroundSet::from_group(&train, "a", 100, 3).unwrap();
        let cfg = LimeConfig::new(training_scales(&train), 3);
        let x = vec![1.5, -2.0];
        let rec = instance_comparison(&m, &x, "a", &bg, &cfg).unwrap();
        assert_eq!(rec.group, "a");
        assert_eq!(rec.feature_names, vec!["x0", "x1"]);
        // intrinsic: contributions (0.9·1.5, −1.3·−2.0) = (1.35, 2.6), both
        // positive, rank order (2, 1)
        assert_eq!(rec.intrinsic.signs, vec![1, 1]);
        assert_eq!(rec.intrinsic.magnitude_ranks, vec![2.0, 1.0]);
        // LIME recovers the exact linear slopes → same signs and ranks
        assert_eq!(rec.lime.signs, vec![1, 1]);
        assert_eq!(rec.lime.magnitude_ranks, vec![2.0, 1.0]);
        assert!(!rec
            .flags
            .iter()
            .any(|f| f.starts_with("linear_lime: sign")));
        // serializes into one JSON record
        let json = serde_json::to_value(&rec).unwrap();
        assert!(json.get("intrinsic").is_some());
        assert!(json.get("flags").is_some());
    }

    #[test]
    fn comparison_flags_name_the_flipped_feature() {
        // background far above x makes SHAP's centered contribution negative
        // where the intrinsic contribution is positive
        let m = toy_model();
        let mut train = toy_train(25);
        for row in &mut train.features {
            row[0] = row[0].abs() + 10.0; // x0 ∈ [10, 15]
        }
        let bg = BackgroundSet::from_group(&train, "a", 100, 3).unwrap();
        let cfg = LimeConfig::new(training_scales(&train), 3);
        let x = vec![10.1, 1.0]; // below the x0 background mean
        let rec = instance_comparison(&m, &x, "a", &bg, &cfg).unwrap();
        assert_eq!(rec.intrinsic.signs[0], 1);
        assert_eq!(rec.shap.signs[0], -1);
        assert!(rec
            .flags
            .iter()
            .any(|f| f.contains("kernel_shap") && f.contains("x0")));
    }

    #[test]
    fn eval_settings_default_matches_lime_config() {
        let s = EvalSettings::default();
        let cfg = LimeConfig::new(vec![1.0, 1.0], 0);
        assert_eq!(s.lime_n_samples, cfg.n_samples);
        assert_eq!(s.lime_ridge_lambda, cfg.ridge_lambda);
        assert_eq!(s.lime_kernel_width, None);
        assert_eq!(s.background_max_rows, BACKGROUND_MAX_ROWS);
    }
}
