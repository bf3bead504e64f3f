//! Statistical-property KPIs: variance inflation factors, the Shapiro–Wilk
//! normality test (Royston's AS R94 approximation, implemented from the
//! published algorithm), the Breusch–Pagan heteroskedasticity test, and a
//! normality screen for fitted random effects.

use crate::dist;
use crate::error::{AuditError, Result};
use crate::mlm::{MlmModel, Residuals};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Outcome of a hypothesis test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    /// In [0, 1].
    pub p_value: f64,
    pub sample_size: usize,
    pub notes: Option<String>,
}

// ---------------------------------------------------------------------------
// ordinary least squares helper
// ---------------------------------------------------------------------------

/// R² of the OLS regression of `y` on the given columns plus an intercept.
/// Returns `(r_squared, design_full_rank)`. The caller guarantees `y` is
/// non-constant (SST > 0).
fn ols_r_squared(columns: &[&[f64]], y: &[f64]) -> Result<(f64, bool)> {
    let n = y.len();
    let k = columns.len();
    let mut design = DMatrix::<f64>::zeros(n, k + 1);
    for i in 0..n {
        design[(i, 0)] = 1.0;
        for (c, col) in columns.iter().enumerate() {
            design[(i, c + 1)] = col[i];
        }
    }
    let rhs = DVector::from_column_slice(y);
    let svd = design.clone().svd(true, true);
    let full_rank = svd.rank(1e-10) == k + 1;
    let beta = svd
        .solve(&rhs, 1e-12)
        .map_err(|e| AuditError::SolveFailed(format!("least squares failed: {e}")))?;
    let fitted = design * beta;
    let mean = y.iter().sum::<f64>() / n as f64;
    let mut ssr = 0.0;
    let mut sst = 0.0;
    for i in 0..n {
        ssr += (y[i] - fitted[i]) * (y[i] - fitted[i]);
        sst += (y[i] - mean) * (y[i] - mean);
    }
    Ok(((1.0 - ssr / sst).clamp(0.0, 1.0), full_rank))
}

// ---------------------------------------------------------------------------
// variance inflation factor
// ---------------------------------------------------------------------------

/// Variance inflation factor of every feature column: VIF_k = 1/(1 − R²_k)
/// with R²_k from regressing column k (with intercept) on all others.
///
/// Always ≥ 1. A column that is perfectly explained by the others
/// (R² ≥ 1 − 1e-12) gets `+∞`, which downstream reporting flags as perfect
/// collinearity. `names` supplies the column labels used in errors.
pub fn vif(columns: &[Vec<f64>], names: &[String]) -> Result<Vec<f64>> {
    if columns.len() != names.len() {
        return Err(AuditError::LengthMismatch(format!(
            "{} feature columns but {} names",
            columns.len(),
            names.len()
        )));
    }
    if columns.len() < 2 {
        return Err(AuditError::InvalidConfig(
            "variance inflation factors need at least 2 feature columns".into(),
        ));
    }
    let n = columns[0].len();
    for (col, name) in columns.iter().zip(names) {
        if col.len() != n {
            return Err(AuditError::LengthMismatch(format!(
                "column {name:?} has {} rows, expected {n}",
                col.len()
            )));
        }
    }
    if n <= columns.len() + 1 {
        return Err(AuditError::InvalidConfig(format!(
            "variance inflation factors need more than {} rows for {} features, got {n}",
            columns.len() + 1,
            columns.len()
        )));
    }
    for (col, name) in columns.iter().zip(names) {
        let (lo, hi) = col
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        if hi - lo <= 0.0 {
            return Err(AuditError::ConstantColumn {
                column: name.clone(),
                context: "variance inflation factors need varying columns".into(),
            });
        }
    }

    let mut out = Vec::with_capacity(columns.len());
    for k in 0..columns.len() {
        let others: Vec<&[f64]> = columns
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != k)
            .map(|(_, c)| c.as_slice())
            .collect();
        let (r2, _) = ols_r_squared(&others, &columns[k])?;
        if r2 >= 1.0 - 1e-12 {
            out.push(f64::INFINITY);
        } else {
            out.push((1.0 / (1.0 - r2)).max(1.0));
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Shapiro–Wilk (Royston AS R94)
// ---------------------------------------------------------------------------

/// Supported Shapiro–Wilk sample sizes (Royston's approximation range).
pub const SWT_MIN_N: usize = 3;
pub const SWT_MAX_N: usize = 5000;

/// Horner evaluation of c[0] + c[1]·x + c[2]·x² + …
fn poly(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &ci| acc * x + ci)
}

/// Shapiro–Wilk W test for normality, per Royston's AS R94 approximation
/// (valid for 3 ≤ n ≤ 5000). Larger samples are refused rather than silently
/// subsampled. The normal quantiles feeding the weights come from the
/// high-precision quantile in [`crate::dist`].
pub fn shapiro_wilk(sample: &[f64]) -> Result<TestResult> {
    let n = sample.len();
    if !(SWT_MIN_N..=SWT_MAX_N).contains(&n) {
        return Err(AuditError::SampleSizeOutOfRange {
            test: "shapiro_wilk",
            n,
            min: SWT_MIN_N,
            max: SWT_MAX_N,
        });
    }
    if sample.iter().any(|v| !v.is_finite()) {
        return Err(AuditError::InvalidConfig(
            "shapiro_wilk sample contains non-finite values".into(),
        ));
    }
    let mut x = sample.to_vec();
    x.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if x[n - 1] - x[0] < 1e-19 {
        return Err(AuditError::ConstantVector(
            "shapiro_wilk sample is constant".into(),
        ));
    }

    // Weight magnitudes for the n/2 most extreme order statistics.
    let n2 = n / 2;
    let an = n as f64;
    let mut a = vec![0.0; n2];
    if n == 3 {
        a[0] = std::f64::consts::FRAC_1_SQRT_2;
    } else {
        // Blom-style normal scores of the lower half (negative values).
        let an25 = an + 0.25;
        let mut m = vec![0.0; n2];
        let mut summ2 = 0.0;
        for (i, mi) in m.iter_mut().enumerate() {
            *mi = dist::normal_quantile((i as f64 + 1.0 - 0.375) / an25)?;
            summ2 += *mi * *mi;
        }
        summ2 *= 2.0;
        let ssumm2 = summ2.sqrt();
        let rsn = 1.0 / an.sqrt();
        const C1: [f64; 6] = [0.0, 0.221157, -0.147981, -2.071190, 4.434685, -2.706056];
        const C2: [f64; 6] = [0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633];
        let a1 = poly(&C1, rsn) - m[0] / ssumm2;
        if n > 5 {
            let a2 = poly(&C2, rsn) - m[1] / ssumm2;
            let fac = ((summ2 - 2.0 * m[0] * m[0] - 2.0 * m[1] * m[1])
                / (1.0 - 2.0 * a1 * a1 - 2.0 * a2 * a2))
                .sqrt();
            a[0] = a1;
            a[1] = a2;
            for i in 2..n2 {
                a[i] = -m[i] / fac;
            }
        } else {
            let fac = ((summ2 - 2.0 * m[0] * m[0]) / (1.0 - 2.0 * a1 * a1)).sqrt();
            a[0] = a1;
            for i in 1..n2 {
                a[i] = -m[i] / fac;
            }
        }
    }

    // W as the squared correlation between the sorted sample and the
    // antisymmetric weight vector; 1 − W computed directly for accuracy.
    let xbar = x.iter().sum::<f64>() / an;
    let mut ssa = 0.0;
    let mut sax = 0.0;
    let mut ssx = 0.0;
    for (i, &xi) in x.iter().enumerate() {
        let coef = if i < n2 {
            -a[i]
        } else if i >= n - n2 {
            a[n - 1 - i]
        } else {
            0.0 // middle order statistic of an odd-sized sample
        };
        ssa += coef * coef;
        sax += coef * (xi - xbar);
        ssx += (xi - xbar) * (xi - xbar);
    }
    let ssassx = (ssa * ssx).sqrt();
    let w1 = ((ssassx - sax) * (ssassx + sax)) / (ssa * ssx);
    let w = 1.0 - w1;

    // Significance per Royston's published constants (exact for n = 3).
    const PI6: f64 = 1.909859;
    const STQR: f64 = 1.047198;
    const C3: [f64; 4] = [0.5440, -0.39978, 0.025054, -6.714e-4];
    const C4: [f64; 4] = [1.3822, -0.77857, 0.062767, -0.0020322];
    const C5: [f64; 4] = [-1.5861, -0.31082, -0.083751, 0.0038915];
    const C6: [f64; 3] = [-0.4803, -0.082676, 0.0030302];
    const G: [f64; 2] = [-2.273, 0.459];
    let p = if n == 3 {
        (PI6 * (w.clamp(0.0, 1.0).sqrt().asin() - STQR)).clamp(0.0, 1.0)
    } else {
        let y = w1.max(1e-300).ln();
        let (zm, zs, y) = if n <= 11 {
            let gamma = poly(&G, an);
            if y >= gamma {
                return Ok(TestResult {
                    statistic: w,
                    p_value: 1e-19,
                    sample_size: n,
                    notes: None,
                });
            }
            (poly(&C3, an), poly(&C4, an).exp(), -(gamma - y).ln())
        } else {
            let xx = an.ln();
            (poly(&C5, xx), poly(&C6, xx).exp(), y)
        };
        dist::normal_sf((y - zm) / zs).clamp(0.0, 1.0)
    };

    Ok(TestResult {
        statistic: w,
        p_value: p,
        sample_size: n,
        notes: None,
    })
}

// ---------------------------------------------------------------------------
// Breusch–Pagan
// ---------------------------------------------------------------------------

/// Which Breusch–Pagan statistic to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BpVariant {
    /// LM = n·R² from regressing squared residuals on the design (default).
    NTimesRSquared,
    /// LM = ½·ESS from regressing u²/mean(u²) on the design (the classic
    /// Cook–Weisberg score form, exact under normal errors).
    ScaledEss,
}

/// Breusch–Pagan heteroskedasticity test with the default `NTimesRSquared`
/// statistic. `design_rows` holds one feature row per residual (an intercept
/// is appended internally); p-values come from the χ² distribution with one
/// degree of freedom per design column.
pub fn breusch_pagan(residuals: &Residuals, design_rows: &[Vec<f64>]) -> Result<TestResult> {
    breusch_pagan_variant(residuals, design_rows, BpVariant::NTimesRSquared)
}

/// Breusch–Pagan with an explicit statistic variant.
pub fn breusch_pagan_variant(
    residuals: &Residuals,
    design_rows: &[Vec<f64>],
    variant: BpVariant,
) -> Result<TestResult> {
    let u = &residuals.values;
    let n = u.len();
    if n != design_rows.len() {
        return Err(AuditError::LengthMismatch(format!(
            "{} residuals but {} design rows",
            n,
            design_rows.len()
        )));
    }
    if n == 0 {
        return Err(AuditError::EmptyDataset("Breusch-Pagan needs rows".into()));
    }
    let k = design_rows[0].len();
    if k == 0 {
        return Err(AuditError::InvalidConfig(
            "Breusch-Pagan needs at least one design column".into(),
        ));
    }
    if design_rows.iter().any(|r| r.len() != k) {
        return Err(AuditError::LengthMismatch(
            "Breusch-Pagan design rows have unequal lengths".into(),
        ));
    }
    if n <= k + 1 {
        return Err(AuditError::InvalidConfig(format!(
            "Breusch-Pagan needs more than {} rows for {k} design columns, got {n}",
            k + 1
        )));
    }

    // The auxiliary regressand: squared residuals, optionally scaled.
    let mean_u2 = u.iter().map(|v| v * v).sum::<f64>() / n as f64;
    let y: Vec<f64> = match variant {
        BpVariant::NTimesRSquared => u.iter().map(|v| v * v).collect(),
        BpVariant::ScaledEss => {
            if mean_u2 <= 0.0 {
                return Err(AuditError::ConstantVector(
                    "Breusch-Pagan residuals are all zero".into(),
                ));
            }
            u.iter().map(|v| v * v / mean_u2).collect()
        }
    };
    let ybar = y.iter().sum::<f64>() / n as f64;
    let sst = y.iter().map(|v| (v - ybar) * (v - ybar)).sum::<f64>();

    let cols_owned: Vec<Vec<f64>> = (0..k)
        .map(|c| design_rows.iter().map(|r| r[c]).collect())
        .collect();
    let cols: Vec<&[f64]> = cols_owned.iter().map(|c| c.as_slice()).collect();

    if sst <= 1e-30 {
        // Squared residuals are constant: nothing to explain.
        return Ok(TestResult {
            statistic: 0.0,
            p_value: 1.0,
            sample_size: n,
            notes: Some("squared residuals are constant; LM = 0".into()),
        });
    }

    let (r2, full_rank) = ols_r_squared(&cols, &y)?;
    if !full_rank {
        return Err(AuditError::SolveFailed(
            "Breusch-Pagan design is rank-deficient (with intercept appended)".into(),
        ));
    }
    let lm = match variant {
        BpVariant::NTimesRSquared => n as f64 * r2,
        BpVariant::ScaledEss => 0.5 * r2 * sst,
    };
    let p = dist::chi_square_sf(lm, k as f64)?;
    Ok(TestResult {
        statistic: lm,
        p_value: p,
        sample_size: n,
        notes: match variant {
            BpVariant::NTimesRSquared => None,
            BpVariant::ScaledEss => Some("scaled-ESS (Cook-Weisberg score) variant".into()),
        },
    })
}

// ---------------------------------------------------------------------------
// random-effect normality
// ---------------------------------------------------------------------------

/// Groups needed before a normality test on random effects has any power.
pub const MIN_GROUPS_FOR_EFFECT_NORMALITY: usize = 8;

/// Outcome of the random-effect normality screen.
#[derive(Debug, Clone, PartialEq)]
pub enum EffectNormality {
    /// One Shapiro–Wilk result per varying effect ("alpha", "beta_<feature>").
    Tested(Vec<(String, TestResult)>),
    /// Too few groups for the test to mean anything; reported as-is rather
    /// than as a p-value without power.
    InsufficientGroups { have: usize, need: usize },
}

/// Shapiro–Wilk applied to each family of fitted random effects, provided the
/// model has at least [`MIN_GROUPS_FOR_EFFECT_NORMALITY`] groups.
pub fn random_effect_normality(model: &MlmModel) -> Result<EffectNormality> {
    let j = model.groups.len();
    if j < MIN_GROUPS_FOR_EFFECT_NORMALITY {
        return Ok(EffectNormality::InsufficientGroups {
            have: j,
            need: MIN_GROUPS_FOR_EFFECT_NORMALITY,
        });
    }
    let mut results = Vec::new();
    if model.varying_intercept {
        results.push(("alpha".to_string(), shapiro_wilk(&model.alpha)?));
    }
    for (v, feat) in model.varying_features.iter().enumerate() {
        results.push((format!("beta_{feat}"), shapiro_wilk(&model.beta_varying[v])?));
    }
    Ok(EffectNormality::Tested(results))
}
