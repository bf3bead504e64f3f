//! Feature-attribution explainers over a black-box log-odds function:
//! exact-enumeration Kernel SHAP and linear LIME.
//!
//! Both explainers see the model only as `f: &[f64] -> f64` returning
//! log-odds. Explanations are in log-odds space throughout; probability-space
//! explanation is out of scope.

use crate::error::{AuditError, Result};
use crate::ingest::Dataset;
use crate::seeding;
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::RngCore;
use serde::{Deserialize, Serialize};

/// Which procedure produced an [`Attribution`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Intrinsic,
    KernelShap,
    LinearLime,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Method::Intrinsic => write!(f, "intrinsic"),
            Method::KernelShap => write!(f, "kernel_shap"),
            Method::LinearLime => write!(f, "linear_lime"),
        }
    }
}

/// A base value plus one contribution per feature, in log-odds space.
///
/// Additivity: for `kernel_shap` the efficiency constraint makes
/// `base + Σ contributions` equal the black-box log-odds at the instance
/// (within 1e-9); for `intrinsic` the identity is exact by construction.
/// LIME carries no additivity guarantee — its raw regression slopes are
/// retained in `slopes` for diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub method: Method,
    /// Log-odds base value (intrinsic: α of the instance's group; SHAP: mean
    /// prediction over the background; LIME: fitted intercept).
    pub base: f64,
    /// Per-feature contributions in feature order.
    pub contributions: Vec<f64>,
    /// Raw local slopes (LIME only; `None` for the other methods).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slopes: Option<Vec<f64>>,
    /// Provenance: identifier of the explained instance, if any.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub instance_id: Option<String>,
    /// Provenance: MLM-group of the explained instance, if any.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
}

impl Attribution {
    /// `base + Σ contributions` — the explainer's reconstruction of the
    /// black-box log-odds.
    pub fn total(&self) -> f64 {
        self.base + self.contributions.iter().sum::<f64>()
    }
}

/// Serializes an attribution together with the explained instance's feature
/// vector — one JSON record of the comparison data behind a Figure-1-style
/// plot.
pub fn attribution_record(attr: &Attribution, features: &[f64]) -> serde_json::Value {
    serde_json::json!({
        "method": attr.method,
        "group": attr.group,
        "instance_id": attr.instance_id,
        "features": features,
        "base": attr.base,
        "contributions": attr.contributions,
        "slopes": attr.slopes,
        "total": attr.total(),
    })
}

/// Reference rows Kernel SHAP marginalizes missing features over. Drawn from
/// the training rows of one MLM-group so the reference distribution matches
/// the group whose coefficients produce the prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct BackgroundSet {
    pub rows: Vec<Vec<f64>>,
    pub seed: u64,
}

impl BackgroundSet {
    /// Samples up to `max_rows` feature vectors from `group`'s rows in `ds`,
    /// deterministically for a fixed seed (stream label `bg/<group>`). Takes
    /// every row when the group has at most `max_rows`.
    pub fn from_group(ds: &Dataset, group: &str, max_rows: usize, seed: u64) -> Result<Self> {
        if max_rows == 0 {
            return Err(AuditError::DegenerateBackground(
                "max_rows must be at least 1".into(),
            ));
        }
        let rows_idx = ds.rows_of_group(group);
        if rows_idx.is_empty() {
            return Err(AuditError::DegenerateBackground(format!(
                "group {group:?} has no rows to draw a background from"
            )));
        }
        let mut idx = rows_idx;
        if idx.len() > max_rows {
            let mut rng = seeding::stream(seed, &format!("bg/{group}"));
            idx.shuffle(&mut rng);
            idx.truncate(max_rows);
            idx.sort_unstable();
        }
        Ok(BackgroundSet {
            rows: idx.iter().map(|&i| ds.features[i].clone()).collect(),
            seed,
        })
    }

    /// Per-feature mean of the background rows.
    pub fn mean(&self) -> Vec<f64> {
        let m = self.rows[0].len();
        let mut out = vec![0.0; m];
        for row in &self.rows {
            for (k, v) in row.iter().enumerate() {
                out[k] += v;
            }
        }
        for v in &mut out {
            *v /= self.rows.len() as f64;
        }
        out
    }
}

/// Largest feature count for exact coalition enumeration.
pub const MAX_SHAP_FEATURES: usize = 15;

/// Exact Kernel SHAP: enumerates all 2^M coalitions, marginalizes missing
/// features by averaging `f` over background substitutions, and solves the
/// Shapley-kernel weighted least squares with the efficiency constraint
/// `base + Σφ = f(x)` imposed exactly. For this exact setup the result equals
/// the classical Shapley value of the game v(T) = E_bg[f(x_T, X_T̄)].
pub fn kernel_shap<F: Fn(&[f64]) -> f64>(
    f: F,
    x: &[f64],
    bg: &BackgroundSet,
) -> Result<Attribution> {
    let m = x.len();
    if m > MAX_SHAP_FEATURES {
        return Err(AuditError::TooManyFeatures {
            got: m,
            max: MAX_SHAP_FEATURES,
        });
    }
    if bg.rows.is_empty() {
        return Err(AuditError::DegenerateBackground(
            "background set has no rows".into(),
        ));
    }
    if m == 0 {
        return Err(AuditError::InvalidExplainerConfig(
            "cannot explain a zero-length feature vector".into(),
        ));
    }
    for row in &bg.rows {
        if row.len() != m {
            return Err(AuditError::DimensionMismatch {
                expected: m,
                got: row.len(),
            });
        }
    }

    // Value function over coalitions encoded as bitmasks.
    let value = |mask: usize| -> f64 {
        if mask == (1usize << m) - 1 {
            return f(x);
        }
        let mut acc = 0.0;
        let mut z = vec![0.0; m];
        for row in &bg.rows {
            for k in 0..m {
                z[k] = if mask & (1 << k) != 0 { x[k] } else { row[k] };
            }
            acc += f(&z);
        }
        acc / bg.rows.len() as f64
    };

    let base = value(0);
    let fx = f(x);
    let delta = fx - base;

    if m == 1 {
        // No non-trivial coalitions; the efficiency constraint determines φ.
        return Ok(Attribution {
            method: Method::KernelShap,
            base,
            contributions: vec![delta],
            slopes: None,
            instance_id: None,
            group: None,
        });
    }

    // Shapley kernel weight for coalition size s (0 < s < M):
    // (M−1) / (C(M,s) · s · (M−s)).
    let binom = |n: usize, k: usize| -> f64 {
        let mut v = 1.0;
        for i in 0..k {
            v = v * (n - i) as f64 / (i + 1) as f64;
        }
        v
    };
    let weights: Vec<f64> = (0..=m)
        .map(|s| {
            if s == 0 || s == m {
                0.0
            } else {
                (m as f64 - 1.0) / (binom(m, s) * s as f64 * (m - s) as f64)
            }
        })
        .collect();

    // Eliminate φ_{M−1} via the constraint Σφ = Δ, leaving an (M−1)-variable
    // weighted least squares over non-trivial coalitions.
    let d = m - 1;
    let mut gram = DMatrix::<f64>::zeros(d, d);
    let mut rhs = DVector::<f64>::zeros(d);
    let mut a = vec![0.0; d];
    for mask in 1..(1usize << m) - 1 {
        let s = mask.count_ones() as usize;
        let w = weights[s];
        let has_last = mask & (1 << d) != 0;
        for (k, ak) in a.iter_mut().enumerate() {
            *ak = f64::from(u8::from(mask & (1 << k) != 0)) - f64::from(u8::from(has_last));
        }
        let y = value(mask) - base - if has_last { delta } else { 0.0 };
        for i in 0..d {
            if a[i] == 0.0 {
                continue;
            }
            rhs[i] += w * a[i] * y;
            for j in 0..d {
                gram[(i, j)] += w * a[i] * a[j];
            }
        }
    }
    let psi = solve_symmetric(gram, rhs)?;

    let mut contributions: Vec<f64> = psi.iter().copied().collect();
    let last = delta - contributions.iter().sum::<f64>();
    contributions.push(last);

    Ok(Attribution {
        method: Method::KernelShap,
        base,
        contributions,
        slopes: None,
        instance_id: None,
        group: None,
    })
}

/// Configuration for [`linear_lime`].
#[derive(Debug, Clone, PartialEq)]
pub struct LimeConfig {
    /// Number of Gaussian perturbations (must be ≥ 10 × feature count).
    pub n_samples: usize,
    /// Kernel width on standardized distance; weights are exp(−d²/width²).
    pub kernel_width: f64,
    /// Ridge penalty added to each slope (the intercept is unpenalized).
    pub ridge_lambda: f64,
    /// Per-feature perturbation std, conventionally the training-data std.
    /// Features with scale 0 are held fixed and get contribution exactly 0.
    pub perturbation_scale: Vec<f64>,
    /// Seed for the perturbation stream.
    pub seed: u64,
    /// Stream label namespacing this call (e.g. `lime/<group>/row<idx>`), so
    /// explanations of distinct instances draw independent streams from the
    /// same seed.
    pub stream_label: String,
}

impl LimeConfig {
    /// Defaults from the perturbation scales: n_samples = 5000,
    /// kernel_width = 0.75·√M, ridge_lambda = 1e-3.
    pub fn new(perturbation_scale: Vec<f64>, seed: u64) -> Self {
        let m = perturbation_scale.len();
        LimeConfig {
            n_samples: 5000,
            kernel_width: 0.75 * (m as f64).sqrt(),
            ridge_lambda: 1e-3,
            perturbation_scale,
            seed,
            stream_label: "lime".to_string(),
        }
    }

    fn validate(&self, m: usize) -> Result<()> {
        if self.perturbation_scale.len() != m {
            return Err(AuditError::DimensionMismatch {
                expected: m,
                got: self.perturbation_scale.len(),
            });
        }
        if self.n_samples < 10 * m {
            return Err(AuditError::InvalidExplainerConfig(format!(
                "n_samples = {} is below 10 × {m} features",
                self.n_samples
            )));
        }
        if !(self.kernel_width > 0.0) {
            return Err(AuditError::InvalidExplainerConfig(format!(
                "kernel_width must be positive, got {}",
                self.kernel_width
            )));
        }
        if !(self.ridge_lambda >= 0.0) {
            return Err(AuditError::InvalidExplainerConfig(format!(
                "ridge_lambda must be non-negative, got {}",
                self.ridge_lambda
            )));
        }
        if self
            .perturbation_scale
            .iter()
            .any(|s| !s.is_finite() || *s < 0.0)
        {
            return Err(AuditError::InvalidExplainerConfig(
                "perturbation scales must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Linear LIME: draws Gaussian perturbations around `x`, weights them by
/// exp(−d²/width²) with d the standardized Euclidean distance to `x`, fits a
/// weighted ridge regression of `f` on the perturbations, and reports
/// contribution_k = slope_k · x_k with the fitted intercept as base.
/// Deterministic for a fixed (seed, stream_label).
pub fn linear_lime<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], cfg: &LimeConfig) -> Result<Attribution> {
    let m = x.len();
    cfg.validate(m)?;
    let active: Vec<usize> = (0..m).filter(|&k| cfg.perturbation_scale[k] > 0.0).collect();
    let mut slopes = vec![0.0; m];
    if active.is_empty() {
        // Nothing varies: the local surrogate is the constant f(x).
        return Ok(Attribution {
            method: Method::LinearLime,
            base: f(x),
            contributions: vec![0.0; m],
            slopes: Some(slopes),
            instance_id: None,
            group: None,
        });
    }

    let mut rng = seeding::stream(cfg.seed, &cfg.stream_label);
    let n = cfg.n_samples;
    let d = active.len();
    let mut z = x.to_vec();
    let kw2 = cfg.kernel_width * cfg.kernel_width;

    // Weighted normal equations for [intercept, slopes over active features].
    let mut gram = DMatrix::<f64>::zeros(d + 1, d + 1);
    let mut rhs = DVector::<f64>::zeros(d + 1);
    let mut row = vec![0.0; d + 1];
    let mut any_weight = false;
    for _ in 0..n {
        let mut dist2 = 0.0;
        for (a, &k) in active.iter().enumerate() {
            let eps = standard_normal(&mut rng) * cfg.perturbation_scale[k];
            z[k] = x[k] + eps;
            let std_step = eps / cfg.perturbation_scale[k];
            dist2 += std_step * std_step;
            row[a + 1] = z[k];
        }
        row[0] = 1.0;
        let w = (-dist2 / kw2).exp();
        if w >= 1e-12 {
            any_weight = true;
        }
        let y = f(&z);
        for i in 0..=d {
            rhs[i] += w * row[i] * y;
            for j in 0..=d {
                gram[(i, j)] += w * row[i] * row[j];
            }
        }
    }
    if !any_weight {
        return Err(AuditError::DegenerateWeights { threshold: 1e-12 });
    }
    for i in 1..=d {
        gram[(i, i)] += cfg.ridge_lambda;
    }
    let coef = solve_symmetric(gram, rhs)?;

    for (a, &k) in active.iter().enumerate() {
        slopes[k] = coef[a + 1];
    }
    let contributions: Vec<f64> = (0..m).map(|k| slopes[k] * x[k]).collect();
    Ok(Attribution {
        method: Method::LinearLime,
        base: coef[0],
        contributions,
        slopes: Some(slopes),
        instance_id: None,
        group: None,
    })
}

/// Standard normal draw by inverse-CDF over a full-precision uniform in the
/// open interval (0,1): u = (k + 0.5) / 2^53 with k uniform over 53 bits.
fn standard_normal<R: RngCore>(rng: &mut R) -> f64 {
    let k = rng.next_u64() >> 11; // top 53 bits
    let u = (k as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0); // 2^53
    crate::dist::normal_quantile(u).expect("u is strictly inside (0,1)")
}

/// Solves a small symmetric positive-definite system, falling back to LU when
/// Cholesky fails (e.g. semidefinite numerical edge).
fn solve_symmetric(a: DMatrix<f64>, b: DVector<f64>) -> Result<DVector<f64>> {
    let n = a.nrows();
    if let Some(chol) = a.clone().cholesky() {
        return Ok(chol.solve(&b));
    }
    a.lu()
        .solve(&b)
        .ok_or_else(|| AuditError::SolveFailed(format!("{n}×{n} symmetric system is singular")))
}
