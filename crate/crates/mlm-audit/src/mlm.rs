//! The varying-intercept / varying-slope logistic regression multilevel
//! model: representation, penalized-IRLS fitting with EM-style variance
//! updates, prediction, residuals, and model-intrinsic attributions.
//!
//! # Fitting scheme
//!
//! Let J be the number of groups. Varying coefficients (the intercept and any
//! varying-slope feature) form *families* of J parameters assumed drawn from
//! a common normal distribution; fixed coefficients are shared. The fit
//! alternates two coordinate-ascent steps on the penalized objective
//!
//! ```text
//! h(θ, μ, σ²) = ℓ(θ) − Σ_fam [ Σ_j (θ_fam,j − μ_fam)² / (2σ²_fam)
//!                              + (J/2)·ln σ²_fam ]
//! ```
//!
//! 1. **θ-step**: penalized IRLS — ridge penalties 1/σ² pulling each family
//!    toward its mean μ, with step-halving so the step never decreases h.
//! 2. **(μ, σ²)-step**: closed-form maximizers μ = mean(family),
//!    σ² = mean squared deviation (floored), i.e. EM-style moment updates.
//!
//! Both steps are ascent steps, so h is monotone and convergence is declared
//! on its relative change.
//!
//! # Variance initialization
//!
//! The σ² update is a moment estimator, so its fixed point at zero is
//! absorbing: start the iteration with σ² far below the data's real
//! inter-group spread and every family collapses to complete pooling before
//! the spread can be measured. Symmetric or diffuse constant initializations
//! both fail on collinear designs (per-group unpooled estimates are noise).
//! Instead σ² is initialized from *staged per-group offset refits*: holding
//! the pooled fit, each group gets a one-dimensional Newton refit of an
//! intercept offset (full-information curvature), then of each varying
//! slope's offset given those intercept offsets; each family's σ² starts at
//! the measured spread of its offsets. The initializer is deterministic — no
//! RNG enters the fit.

use crate::error::{AuditError, Result};
use crate::explainers::{Attribution, Method};
use crate::ingest::Dataset;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Which coefficients vary per group.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlmSpec {
    /// One intercept per group (true) or a single shared intercept (false).
    pub varying_intercept: bool,
    /// Features whose slopes vary per group; the rest share one slope each.
    pub varying_slope_features: Vec<String>,
}

impl MlmSpec {
    /// Case-study default: varying intercept, all slopes fixed unless listed.
    pub fn new(varying_intercept: bool, varying_slope_features: Vec<String>) -> Self {
        MlmSpec {
            varying_intercept,
            varying_slope_features,
        }
    }

    /// Checks the varying set against the dataset's features and returns it
    /// canonicalized to feature order.
    fn canonical_varying(&self, feature_names: &[String]) -> Result<Vec<String>> {
        let mut seen = std::collections::HashSet::new();
        for v in &self.varying_slope_features {
            if !feature_names.contains(v) {
                return Err(AuditError::InvalidConfig(format!(
                    "varying slope feature {v:?} is not a dataset feature (features: {feature_names:?})"
                )));
            }
            if !seen.insert(v.clone()) {
                return Err(AuditError::InvalidConfig(format!(
                    "varying slope feature {v:?} listed twice"
                )));
            }
        }
        Ok(feature_names
            .iter()
            .filter(|f| self.varying_slope_features.contains(f))
            .cloned()
            .collect())
    }
}

/// Tolerances and limits for [`fit`].
#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    /// Outer (θ ↔ variance) iteration cap.
    pub max_outer_iters: usize,
    /// IRLS iteration cap inside each θ-step.
    pub inner_iters: usize,
    /// Convergence: relative change of the penalized log-likelihood.
    pub tol: f64,
    /// Any |coefficient| beyond this signals quasi-complete separation.
    pub coef_bound: f64,
    /// Lower bound for variance components.
    pub variance_floor: f64,
    /// Freeze every varying family's σ² at this value (skipping both the
    /// staged initialization and the EM updates). Used to probe the
    /// partial-pooling limits: σ² → 0 collapses groups to their common mean,
    /// σ² → ∞ approaches unpenalized per-group fits.
    pub forced_sigma2: Option<f64>,
    /// Return an error when the outer iteration cap is hit, instead of a
    /// model flagged `converged = false`.
    pub error_on_no_convergence: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_outer_iters: 200,
            inner_iters: 50,
            tol: 1e-8,
            coef_bound: 1e4,
            variance_floor: 1e-8,
            forced_sigma2: None,
            error_on_no_convergence: false,
        }
    }
}

/// How the fit ended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitMeta {
    /// Outer iterations consumed.
    pub iterations: usize,
    /// True when the relative change of the penalized log-likelihood fell
    /// below tolerance before the iteration cap.
    pub converged: bool,
    /// Final value of the penalized objective h.
    pub penalized_loglik: f64,
}

/// A fitted multilevel logistic model.
///
/// `alpha` has one entry per group when the intercept varies, otherwise a
/// single shared entry. `beta_varying[v]` holds the per-group slopes of
/// `varying_features[v]`; `beta_fixed` holds one shared slope per remaining
/// feature, in feature order. Variance components: `mu_alpha`/`sigma2_alpha`
/// describe the intercept distribution (σ² = 0 when the intercept is fixed),
/// `mu_beta`/`sigma2_beta` one entry per varying feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlmModel {
    pub groups: Vec<String>,
    pub feature_names: Vec<String>,
    pub varying_intercept: bool,
    pub varying_features: Vec<String>,
    pub alpha: Vec<f64>,
    pub beta_varying: Vec<Vec<f64>>,
    pub beta_fixed: Vec<f64>,
    pub mu_alpha: f64,
    pub sigma2_alpha: f64,
    pub mu_beta: Vec<f64>,
    pub sigma2_beta: Vec<f64>,
    pub fit_meta: FitMeta,
}

/// Residual flavor for the statistical-property tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualKind {
    /// y − p̂
    Response,
    /// (y − p̂) / sqrt(p̂(1 − p̂))
    Pearson,
    /// sign(y − p̂) · sqrt(−2[y ln p̂ + (1−y) ln(1−p̂)])
    Deviance,
}

/// One residual per training row.
#[derive(Debug, Clone, PartialEq)]
pub struct Residuals {
    pub kind: ResidualKind,
    pub values: Vec<f64>,
    /// Rows whose p̂ had to be clamped into [1e-12, 1 − 1e-12].
    pub clamped_rows: usize,
}

/// Numerically stable logistic function.
pub fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + e^x) without overflow.
fn ln1pexp(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Bernoulli log-likelihood of linear predictors `eta` against 0/1 targets.
fn log_likelihood(eta: &DVector<f64>, y: &[u8]) -> f64 {
    let mut ll = 0.0;
    for (i, &yi) in y.iter().enumerate() {
        // y ln p + (1−y) ln(1−p) = −ln(1+e^{−η}) for y=1, −ln(1+e^{η}) for y=0
        ll -= ln1pexp(if yi == 1 { -eta[i] } else { eta[i] });
    }
    ll
}

/// Index layout of the stacked parameter vector.
#[derive(Debug, Clone, Copy)]
enum Slot {
    Varying { start: usize },
    Fixed { pos: usize },
}

struct Layout {
    intercept: Slot,
    features: Vec<Slot>,
    n_params: usize,
    n_groups: usize,
    /// (display name, start offset) of each varying family, intercept first.
    varying_families: Vec<(String, usize)>,
    /// Human-readable name per parameter index (for separation reports).
    param_names: Vec<String>,
}

impl Layout {
    fn build(
        feature_names: &[String],
        varying_features: &[String],
        varying_intercept: bool,
        groups: &[String],
    ) -> Layout {
        let j = groups.len();
        let mut names = Vec::new();
        let mut varying_families = Vec::new();
        let mut next = 0usize;
        let intercept = if varying_intercept {
            let start = next;
            varying_families.push(("alpha".to_string(), start));
            for g in groups {
                names.push(format!("alpha[{g}]"));
            }
            next += j;
            Slot::Varying { start }
        } else {
            names.push("alpha".to_string());
            next += 1;
            Slot::Fixed { pos: next - 1 }
        };
        let mut features = Vec::new();
        for f in feature_names {
            if varying_features.contains(f) {
                let start = next;
                varying_families.push((format!("beta_{f}"), start));
                for g in groups {
                    names.push(format!("beta_{f}[{g}]"));
                }
                next += j;
                features.push(Slot::Varying { start });
            } else {
                names.push(format!("beta_{f}"));
                next += 1;
                features.push(Slot::Fixed { pos: next - 1 });
            }
        }
        Layout {
            intercept,
            features,
            n_params: next,
            n_groups: j,
            varying_families,
            param_names: names,
        }
    }
}

/// One varying family's state during fitting.
struct Family {
    start: usize,
    mu: f64,
    sigma2: f64,
}

/// Penalized IRLS θ-step: maximizes ℓ(θ) − Σ pen_k (θ_k − c_k)²/2 with
/// step-halving; errors on separation or a failed solve.
#[allow(clippy::too_many_arguments)]
fn irls_step(
    design: &DMatrix<f64>,
    y: &[u8],
    pen: &DVector<f64>,
    centers: &DVector<f64>,
    theta0: DVector<f64>,
    max_iters: usize,
    coef_bound: f64,
    param_names: &[String],
    outer_iteration: usize,
) -> Result<DVector<f64>> {
    let penalized = |theta: &DVector<f64>| -> f64 {
        let eta = design * theta;
        let mut h = log_likelihood(&eta, y);
        for k in 0..theta.len() {
            let d = theta[k] - centers[k];
            h -= 0.5 * pen[k] * d * d;
        }
        h
    };

    let n = design.nrows();
    let p = design.ncols();
    let mut theta = theta0;
    let mut h_cur = penalized(&theta);

    for _ in 0..max_iters {
        let eta = design * &theta;
        // Normal equations of the weighted working-response regression:
        // (DᵀWD + diag(pen)) θ' = Dᵀ(Wη + (y − p)) + pen ∘ centers
        let mut weighted = design.clone();
        let mut rhs_vec = DVector::<f64>::zeros(n);
        for i in 0..n {
            let pi = sigmoid(eta[i]);
            let w = (pi * (1.0 - pi)).max(1e-10);
            rhs_vec[i] = w * eta[i] + (f64::from(y[i]) - pi);
            for k in 0..p {
                weighted[(i, k)] *= w;
            }
        }
        let mut normal = design.transpose() * &weighted;
        let mut rhs = design.transpose() * rhs_vec;
        for k in 0..p {
            normal[(k, k)] += pen[k];
            rhs[k] += pen[k] * centers[k];
        }
        let target = match normal.clone().cholesky() {
            Some(ch) => ch.solve(&rhs),
            None => normal
                .lu()
                .solve(&rhs)
                .ok_or_else(|| AuditError::SolveFailed("IRLS normal equations singular".into()))?,
        };
        if target.iter().any(|v| !v.is_finite()) {
            return Err(AuditError::SolveFailed(
                "IRLS produced non-finite coefficients".into(),
            ));
        }

        // Step-halving: never accept a step that lowers the penalized objective.
        let full_step = &target - &theta;
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let cand = &theta + &full_step * scale;
            let h_new = penalized(&cand);
            if h_new.is_finite() && h_new >= h_cur - 1e-12 * (1.0 + h_cur.abs()) {
                let moved = full_step.amax() * scale;
                theta = cand;
                h_cur = h_new;
                accepted = true;
                if moved < 1e-10 {
                    // converged inside the step
                    return check_bound(theta, coef_bound, param_names, outer_iteration);
                }
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            break; // cannot improve further at this working-weight linearization
        }
        for k in 0..p {
            if theta[k].abs() > coef_bound {
                return Err(AuditError::SeparationDetected {
                    coefficient: param_names[k].clone(),
                    value: theta[k],
                    bound: coef_bound,
                    iteration: outer_iteration,
                });
            }
        }
    }
    check_bound(theta, coef_bound, param_names, outer_iteration)
}

fn check_bound(
    theta: DVector<f64>,
    coef_bound: f64,
    param_names: &[String],
    outer_iteration: usize,
) -> Result<DVector<f64>> {
    for k in 0..theta.len() {
        if theta[k].abs() > coef_bound {
            return Err(AuditError::SeparationDetected {
                coefficient: param_names[k].clone(),
                value: theta[k],
                bound: coef_bound,
                iteration: outer_iteration,
            });
        }
    }
    Ok(theta)
}

/// One-dimensional Newton refit: maximizes the log-likelihood over a scalar
/// coefficient `t` on column `col`, with fixed per-row offsets.
fn offset_refit_1d(col: &[f64], y: &[u8], offset: &[f64]) -> f64 {
    let mut t = 0.0;
    for _ in 0..25 {
        let mut grad = 0.0;
        let mut curv = 0.0;
        for i in 0..col.len() {
            let p = sigmoid(offset[i] + t * col[i]);
            grad += col[i] * (f64::from(y[i]) - p);
            curv += col[i] * col[i] * (p * (1.0 - p)).max(1e-10);
        }
        if curv < 1e-12 {
            break;
        }
        let step = grad / curv;
        t += step;
        if step.abs() < 1e-12 {
            break;
        }
    }
    t
}

/// Fits the multilevel model on `train`.
///
/// Preconditions: the target is derived, every group carries both classes,
/// and features are finite. See the module docs for the algorithm.
pub fn fit(train: &Dataset, spec: &MlmSpec, options: &FitOptions) -> Result<MlmModel> {
    let n = train.n_rows();
    let k = train.n_features();
    if n == 0 {
        return Err(AuditError::EmptyDataset("cannot fit on zero rows".into()));
    }
    if train.target.len() != n {
        return Err(AuditError::InvalidConfig(
            "training target has not been derived (call derive_target first)".into(),
        ));
    }
    for (i, row) in train.features.iter().enumerate() {
        if row.len() != k {
            return Err(AuditError::DimensionMismatch {
                expected: k,
                got: row.len(),
            });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(AuditError::InvalidConfig(format!(
                "non-finite feature value in training row {}",
                i + 1
            )));
        }
    }
    // Every group must have both target classes.
    for g in &train.groups {
        let rows = train.rows_of_group(g);
        let pos: usize = rows.iter().map(|&i| train.target[i] as usize).sum();
        if pos == 0 || pos == rows.len() {
            return Err(AuditError::DegenerateGroup {
                group: g.clone(),
                rows: rows.len(),
                class: u8::from(pos != 0),
            });
        }
    }

    let varying_features = spec.canonical_varying(&train.feature_names)?;
    let layout = Layout::build(
        &train.feature_names,
        &varying_features,
        spec.varying_intercept,
        &train.groups,
    );
    let j = layout.n_groups;
    let group_of: Vec<usize> = train
        .group
        .iter()
        .map(|g| train.groups.iter().position(|x| x == g).expect("row group in groups"))
        .collect();

    // Design matrix of the stacked parameterization.
    let mut design = DMatrix::<f64>::zeros(n, layout.n_params);
    for i in 0..n {
        let g = group_of[i];
        match layout.intercept {
            Slot::Varying { start } => design[(i, start + g)] = 1.0,
            Slot::Fixed { pos } => design[(i, pos)] = 1.0,
        }
        for (f, slot) in layout.features.iter().enumerate() {
            let v = train.features[i][f];
            match *slot {
                Slot::Varying { start } => design[(i, start + g)] = v,
                Slot::Fixed { pos } => design[(i, pos)] = v,
            }
        }
    }

    // --- pooled initialization -------------------------------------------
    let mut pooled_design = DMatrix::<f64>::zeros(n, k + 1);
    for i in 0..n {
        pooled_design[(i, 0)] = 1.0;
        for f in 0..k {
            pooled_design[(i, f + 1)] = train.features[i][f];
        }
    }
    let pooled_names: Vec<String> = std::iter::once("alpha".to_string())
        .chain(train.feature_names.iter().map(|f| format!("beta_{f}")))
        .collect();
    let zero_pen = DVector::<f64>::zeros(k + 1);
    let zero_centers = DVector::<f64>::zeros(k + 1);
    let pooled = irls_step(
        &pooled_design,
        &train.target,
        &zero_pen,
        &zero_centers,
        DVector::<f64>::zeros(k + 1),
        100,
        options.coef_bound,
        &pooled_names,
        0,
    )?;

    let mut theta = DVector::<f64>::zeros(layout.n_params);
    match layout.intercept {
        Slot::Varying { start } => {
            for g in 0..j {
                theta[start + g] = pooled[0];
            }
        }
        Slot::Fixed { pos } => theta[pos] = pooled[0],
    }
    for (f, slot) in layout.features.iter().enumerate() {
        match *slot {
            Slot::Varying { start } => {
                for g in 0..j {
                    theta[start + g] = pooled[f + 1];
                }
            }
            Slot::Fixed { pos } => theta[pos] = pooled[f + 1],
        }
    }

    // --- staged variance initialization ----------------------------------
    let mut families: Vec<Family> = Vec::new();
    if !layout.varying_families.is_empty() {
        let pooled_eta = &pooled_design * &pooled;
        let group_rows: Vec<Vec<usize>> = train
            .groups
            .iter()
            .map(|g| train.rows_of_group(g))
            .collect();
        // Intercept offsets at pooled slopes (zero when the intercept is fixed).
        let mut a_off = vec![0.0; j];
        if spec.varying_intercept {
            for g in 0..j {
                let rows = &group_rows[g];
                let ones = vec![1.0; rows.len()];
                let yg: Vec<u8> = rows.iter().map(|&i| train.target[i]).collect();
                let off: Vec<f64> = rows.iter().map(|&i| pooled_eta[i]).collect();
                a_off[g] = offset_refit_1d(&ones, &yg, &off);
            }
        }
        let spread = |vals: &[f64]| -> f64 {
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / vals.len() as f64
        };
        for (name, start) in &layout.varying_families {
            let sigma2 = if let Some(s2) = options.forced_sigma2 {
                s2
            } else if name == "alpha" {
                spread(&a_off).max(options.variance_floor)
            } else {
                // Per-group slope offsets given the intercept offsets.
                let f = varying_feature_index(&train.feature_names, &varying_features, name);
                let mut devs = vec![0.0; j];
                for g in 0..j {
                    let rows = &group_rows[g];
                    let col: Vec<f64> = rows.iter().map(|&i| train.features[i][f]).collect();
                    let yg: Vec<u8> = rows.iter().map(|&i| train.target[i]).collect();
                    let off: Vec<f64> =
                        rows.iter().map(|&i| pooled_eta[i] + a_off[group_of[i]]).collect();
                    devs[g] = offset_refit_1d(&col, &yg, &off);
                }
                spread(&devs).max(options.variance_floor)
            };
            let mu = {
                // family values are currently all the pooled value
                theta[*start]
            };
            families.push(Family {
                start: *start,
                mu,
                sigma2,
            });
        }
    }

    // --- outer loop: θ-step then variance step ---------------------------
    let mut pen = DVector::<f64>::zeros(layout.n_params);
    let mut centers = DVector::<f64>::zeros(layout.n_params);
    let mut h_prev: Option<f64> = None;
    let mut converged = false;
    let mut iterations = 0;
    let mut last_change = f64::INFINITY;

    for outer in 1..=options.max_outer_iters {
        iterations = outer;
        pen.fill(0.0);
        centers.fill(0.0);
        for fam in &families {
            for g in 0..j {
                pen[fam.start + g] = 1.0 / fam.sigma2;
                centers[fam.start + g] = fam.mu;
            }
        }
        theta = irls_step(
            &design,
            &train.target,
            &pen,
            &centers,
            theta,
            options.inner_iters,
            options.coef_bound,
            &layout.param_names,
            outer,
        )?;

        if options.forced_sigma2.is_none() {
            for fam in &mut families {
                let vals: Vec<f64> = (0..j).map(|g| theta[fam.start + g]).collect();
                fam.mu = vals.iter().sum::<f64>() / j as f64;
                fam.sigma2 = (vals.iter().map(|v| (v - fam.mu) * (v - fam.mu)).sum::<f64>()
                    / j as f64)
                    .max(options.variance_floor);
            }
        } else {
            for fam in &mut families {
                let vals: Vec<f64> = (0..j).map(|g| theta[fam.start + g]).collect();
                fam.mu = vals.iter().sum::<f64>() / j as f64;
            }
        }

        let eta = &design * &theta;
        let mut h = log_likelihood(&eta, &train.target);
        for fam in &families {
            let mut dev_sum = 0.0;
            for g in 0..j {
                let d = theta[fam.start + g] - fam.mu;
                dev_sum += d * d;
            }
            h -= 0.5 * dev_sum / fam.sigma2 + 0.5 * j as f64 * fam.sigma2.ln();
        }
        if let Some(hp) = h_prev {
            last_change = (h - hp).abs() / (1.0 + hp.abs());
            if last_change <= options.tol {
                converged = true;
                h_prev = Some(h);
                break;
            }
        }
        h_prev = Some(h);
    }

    if !converged && options.error_on_no_convergence {
        return Err(AuditError::NoConvergence {
            iterations,
            last_change,
            tolerance: options.tol,
        });
    }

    // --- unpack θ into the model ------------------------------------------
    let alpha: Vec<f64> = match layout.intercept {
        Slot::Varying { start } => (0..j).map(|g| theta[start + g]).collect(),
        Slot::Fixed { pos } => vec![theta[pos]],
    };
    let mut beta_varying: Vec<Vec<f64>> = Vec::new();
    let mut beta_fixed: Vec<f64> = Vec::new();
    for (f, slot) in layout.features.iter().enumerate() {
        match *slot {
            Slot::Varying { start } => {
                beta_varying.push((0..j).map(|g| theta[start + g]).collect());
            }
            Slot::Fixed { pos } => {
                let _ = f;
                beta_fixed.push(theta[pos]);
            }
        }
    }
    let (mu_alpha, sigma2_alpha) = if spec.varying_intercept {
        let fam = families
            .iter()
            .find(|f| matches!(layout.intercept, Slot::Varying { start } if start == f.start))
            .expect("intercept family exists");
        (fam.mu, fam.sigma2)
    } else {
        (alpha[0], 0.0)
    };
    let mut mu_beta = Vec::new();
    let mut sigma2_beta = Vec::new();
    for (name, start) in &layout.varying_families {
        if name != "alpha" {
            let fam = families
                .iter()
                .find(|f| f.start == *start)
                .expect("family exists");
            mu_beta.push(fam.mu);
            sigma2_beta.push(fam.sigma2);
        }
    }

    Ok(MlmModel {
        groups: train.groups.clone(),
        feature_names: train.feature_names.clone(),
        varying_intercept: spec.varying_intercept,
        varying_features,
        alpha,
        beta_varying,
        beta_fixed,
        mu_alpha,
        sigma2_alpha,
        mu_beta,
        sigma2_beta,
        fit_meta: FitMeta {
            iterations,
            converged,
            penalized_loglik: h_prev.unwrap_or(f64::NEG_INFINITY),
        },
    })
}

fn varying_feature_index(
    feature_names: &[String],
    varying_features: &[String],
    family_name: &str,
) -> usize {
    let feat = family_name.strip_prefix("beta_").expect("slope family name");
    let _ = varying_features;
    feature_names
        .iter()
        .position(|f| f == feat)
        .expect("family feature exists")
}

impl MlmModel {
    /// Resolves the intercept and full slope vector (feature order) for a group.
    pub fn coefficients_for(&self, group: &str) -> Result<(f64, Vec<f64>)> {
        let g = self
            .groups
            .iter()
            .position(|x| x == group)
            .ok_or_else(|| AuditError::UnknownGroup {
                group: group.to_string(),
                known: self.groups.clone(),
            })?;
        let alpha = if self.varying_intercept {
            self.alpha[g]
        } else {
            self.alpha[0]
        };
        let mut slopes = Vec::with_capacity(self.feature_names.len());
        let mut vi = 0usize;
        let mut fi = 0usize;
        for f in &self.feature_names {
            if self.varying_features.contains(f) {
                slopes.push(self.beta_varying[vi][g]);
                vi += 1;
            } else {
                slopes.push(self.beta_fixed[fi]);
                fi += 1;
            }
        }
        Ok((alpha, slopes))
    }

    /// Linear predictor α_[g] + Σ_k β^k x^k.
    pub fn log_odds(&self, x: &[f64], group: &str) -> Result<f64> {
        if x.len() != self.feature_names.len() {
            return Err(AuditError::DimensionMismatch {
                expected: self.feature_names.len(),
                got: x.len(),
            });
        }
        let (alpha, slopes) = self.coefficients_for(group)?;
        Ok(alpha + slopes.iter().zip(x).map(|(b, v)| b * v).sum::<f64>())
    }

    /// P(y = 1 | x, group): the inverse logit of [`Self::log_odds`], clamped
    /// into [1e-15, 1 − 1e-15] so the result is strictly inside (0, 1).
    pub fn predict_proba(&self, x: &[f64], group: &str) -> Result<f64> {
        Ok(sigmoid(self.log_odds(x, group)?).clamp(1e-15, 1.0 - 1e-15))
    }

    /// Class decision: 1 iff predict_proba ≥ threshold (inclusive boundary).
    pub fn predict_class(&self, x: &[f64], group: &str, threshold: f64) -> Result<u8> {
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(AuditError::InvalidConfig(format!(
                "decision threshold must be in (0,1), got {threshold}"
            )));
        }
        Ok(u8::from(self.predict_proba(x, group)? >= threshold))
    }

    /// Residuals of the model on a dataset (conventionally its training set).
    pub fn residuals(&self, data: &Dataset, kind: ResidualKind) -> Result<Residuals> {
        if data.target.len() != data.n_rows() {
            return Err(AuditError::InvalidConfig(
                "residuals need a derived target".into(),
            ));
        }
        let mut values = Vec::with_capacity(data.n_rows());
        let mut clamped = 0usize;
        for i in 0..data.n_rows() {
            let p_raw = self.predict_proba(&data.features[i], &data.group[i])?;
            let p = p_raw.clamp(1e-12, 1.0 - 1e-12);
            if p != p_raw {
                clamped += 1;
            }
            let y = f64::from(data.target[i]);
            let v = match kind {
                ResidualKind::Response => y - p,
                ResidualKind::Pearson => (y - p) / (p * (1.0 - p)).sqrt(),
                ResidualKind::Deviance => {
                    let dev = -2.0 * (y * p.ln() + (1.0 - y) * (1.0 - p).ln());
                    (y - p).signum() * dev.max(0.0).sqrt()
                }
            };
            values.push(v);
        }
        Ok(Residuals {
            kind,
            values,
            clamped_rows: clamped,
        })
    }

    /// Model-intrinsic attribution: base = α_[g], contribution_k = β^k x^k,
    /// in log-odds space. `base + Σ contributions` equals the log-odds
    /// exactly (same arithmetic, no approximation).
    pub fn intrinsic_attribution(&self, x: &[f64], group: &str) -> Result<Attribution> {
        if x.len() != self.feature_names.len() {
            return Err(AuditError::DimensionMismatch {
                expected: self.feature_names.len(),
                got: x.len(),
            });
        }
        let (alpha, slopes) = self.coefficients_for(group)?;
        Ok(Attribution {
            method: Method::Intrinsic,
            base: alpha,
            contributions: slopes.iter().zip(x).map(|(b, v)| b * v).collect(),
            slopes: None,
            instance_id: None,
            group: Some(group.to_string()),
        })
    }

    /// Serializes the model as versioned JSON. Finite values round-trip
    /// bit-exactly through [`MlmModel::from_json`].
    pub fn to_json(&self) -> String {
        let doc = serde_json::json!({
            "format_version": MODEL_FORMAT_VERSION,
            "model": self,
        });
        serde_json::to_string_pretty(&doc).expect("model serializes")
    }

    /// Parses a model exported by [`MlmModel::to_json`], checking the format
    /// version and structural invariants.
    pub fn from_json(text: &str) -> Result<MlmModel> {
        let doc: serde_json::Value = serde_json::from_str(text)
            .map_err(|e| AuditError::InvalidConfig(format!("model JSON: {e}")))?;
        let version = doc
            .get("format_version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| AuditError::InvalidConfig("model JSON lacks format_version".into()))?;
        if version != MODEL_FORMAT_VERSION {
            return Err(AuditError::InvalidConfig(format!(
                "unsupported model format_version {version} (expected {MODEL_FORMAT_VERSION})"
            )));
        }
        let model: MlmModel = serde_json::from_value(
            doc.get("model")
                .cloned()
                .ok_or_else(|| AuditError::InvalidConfig("model JSON lacks `model`".into()))?,
        )
        .map_err(|e| AuditError::InvalidConfig(format!("model JSON: {e}")))?;
        model.validate()?;
        Ok(model)
    }

    /// Structural invariants: coefficient array lengths match groups and
    /// features, variances non-negative.
    pub fn validate(&self) -> Result<()> {
        let j = self.groups.len();
        let expected_alpha = if self.varying_intercept { j } else { 1 };
        if self.alpha.len() != expected_alpha {
            return Err(AuditError::InvalidConfig(format!(
                "alpha has {} entries, expected {expected_alpha}",
                self.alpha.len()
            )));
        }
        if self.beta_varying.len() != self.varying_features.len()
            || self.mu_beta.len() != self.varying_features.len()
            || self.sigma2_beta.len() != self.varying_features.len()
        {
            return Err(AuditError::InvalidConfig(
                "varying slope arrays do not match varying_features".into(),
            ));
        }
        for (f, per_group) in self.varying_features.iter().zip(&self.beta_varying) {
            if per_group.len() != j {
                return Err(AuditError::InvalidConfig(format!(
                    "beta_varying[{f}] has {} entries, expected {j}",
                    per_group.len()
                )));
            }
            if !self.feature_names.contains(f) {
                return Err(AuditError::InvalidConfig(format!(
                    "varying feature {f:?} is not in feature_names"
                )));
            }
        }
        let fixed_count = self.feature_names.len() - self.varying_features.len();
        if self.beta_fixed.len() != fixed_count {
            return Err(AuditError::InvalidConfig(format!(
                "beta_fixed has {} entries, expected {fixed_count}",
                self.beta_fixed.len()
            )));
        }
        if self.sigma2_alpha < 0.0 || self.sigma2_beta.iter().any(|s| *s < 0.0) {
            return Err(AuditError::InvalidConfig(
                "variance components must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Version tag of the model JSON export.
pub const MODEL_FORMAT_VERSION: u64 = 1;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    // ---- independent oracle: plain logistic Newton with its own solver ----

    /// Gauss-Jordan elimination with partial pivoting — deliberately not
    /// nalgebra, so the oracle shares no linear-algebra code with the crate.
    fn gauss_jordan(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
                .unwrap();
            a.swap(col, pivot);
            b.swap(col, pivot);
            let d = a[col][col];
            assert!(d.abs() > 1e-14, "oracle system singular");
            for k in col..n {
                a[col][k] /= d;
            }
            b[col] /= d;
            for row in 0..n {
                if row != col && a[row][col] != 0.0 {
                    let factor = a[row][col];
                    for k in col..n {
                        a[row][k] -= factor * a[col][k];
                    }
                    b[row] -= factor * b[col];
                }
            }
        }
        b
    }

    /// Plain (unpenalized) logistic regression via Newton iterations on
    /// [1 | X]; returns [intercept, slopes...].
    fn oracle_logistic(x_rows: &[Vec<f64>], y: &[u8]) -> Vec<f64> {
        let n = x_rows.len();
        let p = x_rows[0].len() + 1;
        let mut theta = vec![0.0; p];
        for _ in 0..100 {
            let mut grad = vec![0.0; p];
            let mut hess = vec![vec![0.0; p]; p];
            for i in 0..n {
                let mut eta = theta[0];
                for k in 0..p - 1 {
                    eta += theta[k + 1] * x_rows[i][k];
                }
                let pi = sigmoid(eta);
                let w = pi * (1.0 - pi);
                let mut d = vec![1.0; p];
                d[1..p].copy_from_slice(&x_rows[i][..(p - 1)]);
                for r in 0..p {
                    grad[r] += d[r] * (f64::from(y[i]) - pi);
                    for c in 0..p {
                        hess[r][c] += w * d[r] * d[c];
                    }
                }
            }
            let step = gauss_jordan(hess, grad);
            let mut max_step: f64 = 0.0;
            for r in 0..p {
                theta[r] += step[r];
                max_step = max_step.max(step[r].abs());
            }
            if max_step < 1e-12 {
                break;
            }
        }
        theta
    }

    // ---- synthetic data --------------------------------------------------

    /// Logistic data with per-group intercept deviations and shared slopes.
    fn gen_dataset(
        groups: &[(&str, usize, f64)], // (label, rows, intercept offset)
        beta: &[f64],
        alpha0: f64,
        seed: u64,
    ) -> Dataset {
        let mut rng = seeding::stream(seed, "mlm-test-data");
        let k = beta.len();
        let mut ds = Dataset {
            header: vec!["x".into(), "g".into(), "s".into(), "t".into()],
            feature_names: (0..k).map(|i| format!("x{i}")).collect(),
            features: Vec::new(),
            group: Vec::new(),
            sensitive: Vec::new(),
            raw_target: Vec::new(),
            target: Vec::new(),
            groups: {
                let mut g: Vec<String> = groups.iter().map(|(l, _, _)| l.to_string()).collect();
                g.sort();
                g
            },
        };
        for (label, rows, offset) in groups {
            for _ in 0..*rows {
                let x: Vec<f64> = (0..k).map(|_| rng.gen::<f64>() * 4.0 - 2.0).collect();
                let eta = alpha0 + offset + beta.iter().zip(&x).map(|(b, v)| b * v).sum::<f64>();
                let p = sigmoid(eta);
                let y = u8::from(rng.gen::<f64>() < p);
                ds.features.push(x);
                ds.group.push(label.to_string());
                ds.sensitive.push("s".into());
                ds.raw_target.push(y.to_string());
                ds.target.push(y);
            }
        }
        ds
    }

    fn pooled_spec() -> MlmSpec {
        MlmSpec::new(false, vec![])
    }

    /// Hand-built single-group model with fixed coefficients.
    fn toy_model(alpha: f64, betas: &[f64]) -> MlmModel {
        MlmModel {
            groups: vec!["g".into()],
            feature_names: (0..betas.len()).map(|i| format!("x{i}")).collect(),
            varying_intercept: false,
            varying_features: vec![],
            alpha: vec![alpha],
            beta_varying: vec![],
            beta_fixed: betas.to_vec(),
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

    // ---- fit vs oracle -----------------------------------------------------

    #[test]
    fn pooled_fit_matches_independent_irls_oracle() {
        let ds = gen_dataset(&[("only", 400, 0.0)], &[1.2, -0.7], 0.3, 11);
        let model = fit(&ds, &pooled_spec(), &FitOptions::default()).unwrap();
        let oracle = oracle_logistic(&ds.features, &ds.target);
        assert_abs_diff_eq!(model.alpha[0], oracle[0], epsilon = 1e-6);
        assert_abs_diff_eq!(model.beta_fixed[0], oracle[1], epsilon = 1e-6);
        assert_abs_diff_eq!(model.beta_fixed[1], oracle[2], epsilon = 1e-6);
        assert!(model.fit_meta.converged);
    }

    #[test]
    fn degenerate_group_is_refused() {
        let mut ds = gen_dataset(&[("a", 100, 0.0)], &[1.0], 0.0, 3);
        // group "b": all targets 0
        for i in 0..20 {
            ds.features.push(vec![i as f64 / 10.0]);
            ds.group.push("b".into());
            ds.sensitive.push("s".into());
            ds.raw_target.push("0".into());
            ds.target.push(0);
        }
        ds.groups = vec!["a".into(), "b".into()];
        match fit(&ds, &pooled_spec(), &FitOptions::default()) {
            Err(AuditError::DegenerateGroup { group, class, .. }) => {
                assert_eq!(group, "b");
                assert_eq!(class, 0);
            }
            other => panic!("expected DegenerateGroup, got {other:?}"),
        }
    }

    #[test]
    fn separation_is_detected() {
        // y = 1 exactly when x > 0: quasi-complete separation.
        let mut ds = gen_dataset(&[("a", 10, 0.0)], &[1.0], 0.0, 5);
        ds.features.clear();
        ds.group.clear();
        ds.sensitive.clear();
        ds.raw_target.clear();
        ds.target.clear();
        for i in 0..40 {
            let x = (i as f64 - 19.5) / 10.0;
            ds.features.push(vec![x]);
            ds.group.push("a".into());
            ds.sensitive.push("s".into());
            let y = u8::from(x > 0.0);
            ds.raw_target.push(y.to_string());
            ds.target.push(y);
        }
        let opts = FitOptions {
            coef_bound: 25.0,
            ..FitOptions::default()
        };
        match fit(&ds, &pooled_spec(), &opts) {
            Err(AuditError::SeparationDetected { coefficient, .. }) => {
                assert!(coefficient.contains("beta_x0") || coefficient.contains("alpha"));
            }
            other => panic!("expected SeparationDetected, got {other:?}"),
        }
    }

    // ---- partial-pooling limits -------------------------------------------

    #[test]
    fn forced_tiny_variance_collapses_to_pooled() {
        let ds = gen_dataset(
            &[("a", 150, 0.8), ("b", 150, -0.2), ("c", 150, -0.6)],
            &[1.0],
            0.2,
            17,
        );
        let spec = MlmSpec::new(true, vec!["x0".into()]);
        let opts = FitOptions {
            forced_sigma2: Some(1e-12),
            ..FitOptions::default()
        };
        let model = fit(&ds, &spec, &opts).unwrap();
        let oracle = oracle_logistic(&ds.features, &ds.target);
        for g in 0..3 {
            assert_abs_diff_eq!(model.alpha[g], oracle[0], epsilon = 1e-3);
            assert_abs_diff_eq!(model.beta_varying[0][g], oracle[1], epsilon = 1e-3);
        }
    }

    #[test]
    fn forced_huge_variance_approaches_per_group_fits() {
        let ds = gen_dataset(
            &[("a", 200, 0.9), ("b", 200, -0.5), ("c", 200, 0.1)],
            &[1.1],
            0.0,
            23,
        );
        let spec = MlmSpec::new(true, vec!["x0".into()]);
        let opts = FitOptions {
            forced_sigma2: Some(1e12),
            ..FitOptions::default()
        };
        let model = fit(&ds, &spec, &opts).unwrap();
        for (g, label) in ["a", "b", "c"].iter().enumerate() {
            let rows = ds.rows_of_group(label);
            let xg: Vec<Vec<f64>> = rows.iter().map(|&i| ds.features[i].clone()).collect();
            let yg: Vec<u8> = rows.iter().map(|&i| ds.target[i]).collect();
            let oracle = oracle_logistic(&xg, &yg);
            assert_abs_diff_eq!(model.alpha[g], oracle[0], epsilon = 1e-3);
            assert_abs_diff_eq!(model.beta_varying[0][g], oracle[1], epsilon = 1e-3);
        }
    }

    #[test]
    fn staged_initialization_keeps_real_intercept_spread() {
        // Six groups with a strong two-scale intercept pattern; a collapsed
        // fit would put sigma2_alpha at the floor and all alphas equal.
        let ds = gen_dataset(
            &[
                ("a", 150, 1.2),
                ("b", 150, -1.0),
                ("c", 150, 0.8),
                ("d", 150, -0.9),
                ("e", 150, 1.1),
                ("f", 150, -1.2),
            ],
            &[0.9],
            0.0,
            29,
        );
        let spec = MlmSpec::new(true, vec![]);
        let model = fit(&ds, &spec, &FitOptions::default()).unwrap();
        assert!(model.fit_meta.converged);
        assert!(
            model.sigma2_alpha > 0.2,
            "variance collapsed: sigma2_alpha = {}",
            model.sigma2_alpha
        );
        // fitted deviations follow the generating sign pattern
        let devs: Vec<f64> = model.alpha.iter().map(|a| a - model.mu_alpha).collect();
        for (i, want_positive) in [true, false, true, false, true, false].iter().enumerate() {
            assert_eq!(
                devs[i] > 0.0,
                *want_positive,
                "group {i} deviation {} has the wrong sign",
                devs[i]
            );
        }
        // shared slope stays near truth
        assert!((model.beta_fixed[0] - 0.9).abs() < 0.15);
    }

    #[test]
    fn fit_is_deterministic() {
        let ds = gen_dataset(&[("a", 120, 0.5), ("b", 120, -0.5)], &[0.8, -0.3], 0.1, 31);
        let spec = MlmSpec::new(true, vec!["x1".into()]);
        let m1 = fit(&ds, &spec, &FitOptions::default()).unwrap();
        let m2 = fit(&ds, &spec, &FitOptions::default()).unwrap();
        assert_eq!(m1, m2, "same inputs must give bit-identical models");
    }

    #[test]
    fn iteration_cap_flags_or_errors() {
        let ds = gen_dataset(&[("a", 150, 0.7), ("b", 150, -0.7)], &[1.0], 0.0, 37);
        let spec = MlmSpec::new(true, vec![]);
        let lenient = FitOptions {
            max_outer_iters: 1,
            ..FitOptions::default()
        };
        let model = fit(&ds, &spec, &lenient).unwrap();
        assert!(!model.fit_meta.converged);
        assert_eq!(model.fit_meta.iterations, 1);
        let strict = FitOptions {
            max_outer_iters: 1,
            error_on_no_convergence: true,
            ..FitOptions::default()
        };
        assert!(matches!(
            fit(&ds, &spec, &strict),
            Err(AuditError::NoConvergence { iterations: 1, .. })
        ));
    }

    #[test]
    fn longer_fit_never_has_lower_objective() {
        let ds = gen_dataset(&[("a", 150, 0.7), ("b", 150, -0.7)], &[1.0], 0.0, 41);
        let spec = MlmSpec::new(true, vec![]);
        let one = fit(
            &ds,
            &spec,
            &FitOptions {
                max_outer_iters: 1,
                ..FitOptions::default()
            },
        )
        .unwrap();
        let full = fit(&ds, &spec, &FitOptions::default()).unwrap();
        assert!(
            full.fit_meta.penalized_loglik >= one.fit_meta.penalized_loglik - 1e-9,
            "objective decreased: {} then {}",
            one.fit_meta.penalized_loglik,
            full.fit_meta.penalized_loglik
        );
    }

    // ---- prediction arithmetic ---------------------------------------------

    #[test]
    fn log_odds_hand_arithmetic() {
        let zero = toy_model(0.0, &[0.0, 0.0, 0.0]);
        assert_eq!(zero.log_odds(&[5.0, -3.0, 100.0], "g").unwrap(), 0.0);
        let m = toy_model(1.0, &[2.0, 0.0, 0.0]);
        assert_abs_diff_eq!(m.log_odds(&[3.0, 5.0, 7.0], "g").unwrap(), 7.0, epsilon = 1e-15);
    }

    #[test]
    fn predict_proba_analytic_points() {
        let m0 = toy_model(0.0, &[0.0]);
        assert_abs_diff_eq!(m0.predict_proba(&[0.0], "g").unwrap(), 0.5, epsilon = 1e-15);
        let m1 = toy_model(3.0f64.ln(), &[0.0]);
        assert_abs_diff_eq!(m1.predict_proba(&[0.0], "g").unwrap(), 0.75, epsilon = 1e-12);
        let m2 = toy_model(-(3.0f64.ln()), &[0.0]);
        assert_abs_diff_eq!(m2.predict_proba(&[0.0], "g").unwrap(), 0.25, epsilon = 1e-12);
        // strictly inside (0,1) even at saturating log-odds
        let m3 = toy_model(500.0, &[0.0]);
        assert!(m3.predict_proba(&[0.0], "g").unwrap() < 1.0);
        let m4 = toy_model(-500.0, &[0.0]);
        assert!(m4.predict_proba(&[0.0], "g").unwrap() > 0.0);
    }

    #[test]
    fn predict_class_inclusive_boundary() {
        let m = toy_model(0.0, &[0.0]);
        assert_eq!(m.predict_class(&[0.0], "g", 0.5).unwrap(), 1, "p = 0.5 at threshold 0.5");
        // p just below 0.5
        let logit_049 = (0.49f64 / 0.51).ln();
        let m2 = toy_model(logit_049, &[0.0]);
        assert_eq!(m2.predict_class(&[0.0], "g", 0.5).unwrap(), 0);
        assert!(m.predict_class(&[0.0], "g", 0.0).is_err());
        assert!(m.predict_class(&[0.0], "g", 1.0).is_err());
    }

    #[test]
    fn unknown_group_is_reported() {
        let m = toy_model(0.0, &[1.0]);
        match m.log_odds(&[1.0], "nope") {
            Err(AuditError::UnknownGroup { group, known }) => {
                assert_eq!(group, "nope");
                assert_eq!(known, vec!["g".to_string()]);
            }
            other => panic!("expected UnknownGroup, got {other:?}"),
        }
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let m = toy_model(0.0, &[1.0, 2.0]);
        assert!(matches!(
            m.log_odds(&[1.0], "g"),
            Err(AuditError::DimensionMismatch { expected: 2, got: 1 })
        ));
    }

    // ---- residuals -----------------------------------------------------------

    fn tiny_dataset(xs: &[f64], ys: &[u8]) -> Dataset {
        Dataset {
            header: vec!["x0".into(), "g".into(), "s".into(), "t".into()],
            feature_names: vec!["x0".into()],
            features: xs.iter().map(|&x| vec![x]).collect(),
            group: vec!["g".into(); xs.len()],
            sensitive: vec!["s".into(); xs.len()],
            raw_target: ys.iter().map(|y| y.to_string()).collect(),
            target: ys.to_vec(),
            groups: vec!["g".into()],
        }
    }

    #[test]
    fn residual_hand_values() {
        let m = toy_model(0.0, &[0.0]); // p̂ = 0.5 everywhere
        let ds = tiny_dataset(&[1.0, 2.0], &[1, 0]);
        let pearson = m.residuals(&ds, ResidualKind::Pearson).unwrap();
        assert_abs_diff_eq!(pearson.values[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(pearson.values[1], -1.0, epsilon = 1e-12);
        let response = m.residuals(&ds, ResidualKind::Response).unwrap();
        assert_abs_diff_eq!(response.values[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(response.values[1], -0.5, epsilon = 1e-15);
        let deviance = m.residuals(&ds, ResidualKind::Deviance).unwrap();
        // −2 ln 0.5 = 2 ln 2; signed square root
        let want = (2.0 * 2.0f64.ln()).sqrt();
        assert_abs_diff_eq!(deviance.values[0], want, epsilon = 1e-12);
        assert_abs_diff_eq!(deviance.values[1], -want, epsilon = 1e-12);
        assert_eq!(pearson.clamped_rows, 0);
    }

    #[test]
    fn saturated_probabilities_are_clamped_and_counted() {
        let m = toy_model(40.0, &[0.0]); // p̂ ~ 1 − 4e-18: clamped to 1 − 1e-12
        let ds = tiny_dataset(&[0.0], &[0]);
        let r = m.residuals(&ds, ResidualKind::Pearson).unwrap();
        assert_eq!(r.clamped_rows, 1);
        assert!(r.values[0].is_finite());
    }

    // ---- intrinsic attribution -----------------------------------------------

    #[test]
    fn intrinsic_attribution_hand_values() {
        let m = toy_model(2.5, &[1.0, -2.0]);
        let zero = m.intrinsic_attribution(&[0.0, 0.0], "g").unwrap();
        assert_eq!(zero.contributions, vec![0.0, 0.0]);
        assert_eq!(zero.base, 2.5);
        let m2 = toy_model(0.0, &[1.0, -2.0]);
        let attr = m2.intrinsic_attribution(&[3.0, 1.0], "g").unwrap();
        assert_eq!(attr.contributions, vec![3.0, -2.0]);
        assert_eq!(attr.base, 0.0);
        assert_eq!(attr.method, Method::Intrinsic);
    }

    #[test]
    fn intrinsic_attribution_is_additive_on_fitted_model() {
        let ds = gen_dataset(&[("a", 120, 0.4), ("b", 120, -0.4)], &[0.7, -0.5], 0.2, 43);
        let spec = MlmSpec::new(true, vec!["x0".into()]);
        let model = fit(&ds, &spec, &FitOptions::default()).unwrap();
        for i in (0..ds.n_rows()).step_by(7) {
            let x = &ds.features[i];
            let g = &ds.group[i];
            let attr = model.intrinsic_attribution(x, g).unwrap();
            let lo = model.log_odds(x, g).unwrap();
            assert_abs_diff_eq!(attr.total(), lo, epsilon = 1e-12);
        }
    }

    // ---- export / import -------------------------------------------------------

    #[test]
    fn model_json_round_trips_bit_exactly() {
        let ds = gen_dataset(&[("a", 100, 0.3), ("b", 100, -0.3)], &[0.9], 0.1, 47);
        let spec = MlmSpec::new(true, vec!["x0".into()]);
        let model = fit(&ds, &spec, &FitOptions::default()).unwrap();
        let back = MlmModel::from_json(&model.to_json()).unwrap();
        assert_eq!(model, back);
        // bit-exactness of a representative float
        assert_eq!(model.alpha[0].to_bits(), back.alpha[0].to_bits());
    }

    #[test]
    fn model_json_rejects_wrong_version_and_garbage() {
        let ds = gen_dataset(&[("a", 80, 0.0)], &[0.5], 0.0, 53);
        let model = fit(&ds, &pooled_spec(), &FitOptions::default()).unwrap();
        let tampered = model.to_json().replace("\"format_version\": 1", "\"format_version\": 99");
        assert!(MlmModel::from_json(&tampered).is_err());
        assert!(MlmModel::from_json("not json").is_err());
    }

    #[test]
    fn spec_rejects_unknown_or_duplicate_varying_features() {
        let ds = gen_dataset(&[("a", 80, 0.0), ("b", 80, 0.0)], &[0.5], 0.0, 59);
        let bad = MlmSpec::new(true, vec!["zz".into()]);
        assert!(matches!(
            fit(&ds, &bad, &FitOptions::default()),
            Err(AuditError::InvalidConfig(_))
        ));
        let dup = MlmSpec::new(true, vec!["x0".into(), "x0".into()]);
        assert!(matches!(
            fit(&ds, &dup, &FitOptions::default()),
            Err(AuditError::InvalidConfig(_))
        ));
    }
}
