//! Audit toolkit for multilevel (hierarchical) logistic-regression binary
//! classifiers.
//!
//! The crate fits a varying-intercept / varying-slope logistic model with
//! partial pooling across groups, then scores the fitted classifier on three
//! fronts and rolls everything up into a traffic-light (red / amber / green)
//! audit report:
//!
//! * **statistical properties** — multicollinearity (VIF), residual
//!   normality (Shapiro–Wilk), heteroskedasticity (Breusch–Pagan);
//! * **accuracy and fairness** — macro F1 and AUC-ROC, statistical parity,
//!   disparate impact, equalized odds, and individual-fairness probes both
//!   within and across groups;
//! * **explainer quality** — from-scratch Kernel SHAP and linear LIME
//!   compared against the model's intrinsic attributions via rank agreement
//!   (Spearman), probability reconstruction error, and sign-flip rate.
//!
//! # Examples
//!
//! The `examples/` directory is the front door; each file is runnable from
//! the workspace root and exercises one capability end to end:
//!
//! ```text
//! cargo run --example fit_and_predict        # load CSV, fit the MLM, inspect coefficients
//! cargo run --example statistical_properties # VIF, Shapiro–Wilk, Breusch–Pagan
//! cargo run --example accuracy_metrics       # per-group and macro F1 / AUC-ROC
//! cargo run --example fairness_metrics       # SP, DI, equalized odds, individual fairness
//! cargo run --example explain_instance       # intrinsic vs Kernel SHAP vs LIME for one row
//! cargo run --example explainer_evaluation   # the resampled explainer-agreement protocol
//! cargo run --example full_audit             # everything above -> rendered audit report
//! ```
//!
//! The same pipeline is exposed as one thin binary:
//!
//! ```text
//! cargo run -- audit --config configs/case_study.toml --format both --out target/audit
//! ```

pub mod accuracy;
pub mod audit;
pub mod cli;
pub mod config;
pub mod dist;
pub mod error;
pub mod explain_eval;
pub mod explainers;
pub mod fairness;
pub mod ingest;
pub mod mlm;
pub mod seeding;
pub mod stattests;

pub use error::AuditError;
