//! Fit the multilevel logistic model on the bundled insurance data and
//! predict a few held-out rows.
//!
//! The model learns a population-level intercept and slopes plus per-group
//! (per-region) deviations, shrunk toward the population values in
//! proportion to the estimated between-group variance. With four regions
//! the intercepts separate while the slopes pool almost completely.
//!
//! Run with: `cargo run --example fit_and_predict`

use mlm_audit::config::AuditConfig;
use mlm_audit::ingest::{derive_target, load_csv, split};
use mlm_audit::mlm;

fn main() -> anyhow::Result<()> {
    let mut cfg = AuditConfig::default();
    cfg.dataset.path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/case_study.csv").into();

    let roles = cfg.dataset.roles();
    let raw = load_csv(&cfg.dataset.path, &roles)?;
    let data = derive_target(&raw, &roles)?;
    let (train, test) = split(&data, &cfg.split.spec())?;
    println!(
        "loaded {} rows ({} train / {} test), {:.1}% positive",
        data.n_rows(),
        train.n_rows(),
        test.n_rows(),
        100.0 * data.positive_fraction()
    );

    let model = mlm::fit(&train, &cfg.model.mlm_spec(), &cfg.fit.options())?;
    println!(
        "fit: {} outer iterations, converged = {}\n",
        model.fit_meta.iterations, model.fit_meta.converged
    );

    println!("population level: mu_alpha = {:.4} (sigma2 = {:.4})", model.mu_alpha, model.sigma2_alpha);
    for (v, name) in model.varying_features.iter().enumerate() {
        println!(
            "                  mu_beta[{name}] = {:.4} (sigma2 = {:.2e})",
            model.mu_beta[v], model.sigma2_beta[v]
        );
    }

    println!("\nper-group coefficients (intercepts separate, slopes pool):");
    for g in &model.groups {
        let (alpha, betas) = model.coefficients_for(g)?;
        let slopes: Vec<String> = model
            .feature_names
            .iter()
            .zip(&betas)
            .map(|(n, b)| format!("{n} {b:+.4}"))
            .collect();
        println!("  {g:<10} alpha {alpha:+.4}  {}", slopes.join("  "));
    }

    println!("\nfirst five held-out rows:");
    let threshold = cfg.model.decision_threshold;
    for i in 0..5.min(test.n_rows()) {
        let x = &test.features[i];
        let g = &test.group[i];
        let p = model.predict_proba(x, g)?;
        let yhat = model.predict_class(x, g, threshold)?;
        println!(
            "  {g:<10} x = {:>5.1?}  P(y=1) = {p:.3}  predicted {yhat}  actual {}",
            x, test.target[i]
        );
    }

    Ok(())
}
