//! Run the complete audit pipeline in-process and render the report.
//!
//! This is what `mlm-audit audit` does: load and split the data, fit the
//! multilevel model, compute every KPI suite (statistical properties,
//! accuracy, group and individual fairness, explainer agreement), score
//! each KPI against its traffic-light bands, and render the result as JSON
//! and markdown. Here the report files land in a temporary directory and
//! the row summary is printed.
//!
//! Run with: `cargo run --example full_audit`

use mlm_audit::audit::{render_json, render_markdown};
use mlm_audit::cli::run_audit;
use mlm_audit::config::AuditConfig;

fn main() -> anyhow::Result<()> {
    let mut cfg = AuditConfig::default();
    cfg.dataset.path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/case_study.csv").into();

    let outcome = run_audit(&cfg, &cfg.to_toml(), &mut |line| println!("[stage] {line}"))?;
    let report = &outcome.report;

    println!("\nscored rows:");
    for (section, entries) in report.sections() {
        for e in entries {
            let rag = e.rag.map_or("not scored".into(), |r| r.to_string());
            let value = e.value.map_or("--".into(), |v| format!("{v:.4}"));
            println!("  {section:<24} {:<24} {value:>10}  {rag}", e.name);
        }
    }
    println!(
        "\noverall: {} red, {} amber, {} green, {} not scored",
        report.overall.red, report.overall.amber, report.overall.green, report.overall.not_scored
    );

    let out_dir = std::env::temp_dir().join("mlm-audit-example");
    std::fs::create_dir_all(&out_dir)?;
    let json_path = out_dir.join("audit_report.json");
    let md_path = out_dir.join("audit_report.md");
    std::fs::write(&json_path, render_json(report))?;
    std::fs::write(&md_path, render_markdown(report))?;
    println!("\nwrote {} and {}", json_path.display(), md_path.display());

    Ok(())
}
