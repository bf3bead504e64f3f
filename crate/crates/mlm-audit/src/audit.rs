//! RAG scoring and report assembly: maps every KPI value to a
//! red/amber/green score against configurable bands and assembles the full
//! audit report with JSON and markdown renderings.

use crate::error::{AuditError, Result};
use crate::mlm::{FitMeta, MlmModel};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

// ---------------------------------------------------------------------------
// scores and bands
// ---------------------------------------------------------------------------

/// Traffic-light score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rag {
    Red,
    Amber,
    Green,
}

impl Rag {
    /// Badness for monotonicity checks: green 0, amber 1, red 2.
    pub fn badness(self) -> u8 {
        match self {
            Rag::Green => 0,
            Rag::Amber => 1,
            Rag::Red => 2,
        }
    }
}

impl fmt::Display for Rag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rag::Red => write!(f, "RED"),
            Rag::Amber => write!(f, "AMBER"),
            Rag::Green => write!(f, "GREEN"),
        }
    }
}

/// One segment of a band chain: covers values from the previous boundary up
/// to `upper` (inclusive when `upper_inclusive`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub upper: f64,
    pub upper_inclusive: bool,
    pub score: Rag,
}

/// The full band chain of one KPI: a closed lower bound and ascending
/// segments that cover the KPI's range with no gaps or overlaps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KpiBands {
    pub lower: f64,
    pub segments: Vec<Segment>,
}

impl KpiBands {
    fn new(lower: f64, segments: &[(f64, bool, Rag)]) -> Self {
        KpiBands {
            lower,
            segments: segments
                .iter()
                .map(|&(upper, upper_inclusive, score)| Segment {
                    upper,
                    upper_inclusive,
                    score,
                })
                .collect(),
        }
    }

    fn validate(&self, kpi: &str) -> Result<()> {
        if self.segments.is_empty() {
            return Err(AuditError::InvalidBands {
                kpi: kpi.into(),
                reason: "no segments".into(),
            });
        }
        if !self.lower.is_finite() && self.lower != f64::NEG_INFINITY {
            return Err(AuditError::InvalidBands {
                kpi: kpi.into(),
                reason: format!("lower bound {} is not a number", self.lower),
            });
        }
        let mut prev = self.lower;
        for s in &self.segments {
            if s.upper.is_nan() || s.upper <= prev {
                return Err(AuditError::InvalidBands {
                    kpi: kpi.into(),
                    reason: format!(
                        "segment uppers must ascend strictly from the lower bound; \
                         got {} after {}",
                        s.upper, prev
                    ),
                });
            }
            prev = s.upper;
        }
        let last = self.segments.last().expect("nonempty");
        if !last.upper_inclusive && last.upper.is_infinite() {
            return Err(AuditError::InvalidBands {
                kpi: kpi.into(),
                reason: "an infinite top boundary must be inclusive".into(),
            });
        }
        Ok(())
    }

    fn score(&self, kpi: &str, value: f64) -> Result<Rag> {
        if value.is_nan() {
            return Err(AuditError::NonFiniteValue {
                kpi: kpi.into(),
                value,
            });
        }
        if value < self.lower {
            return Err(AuditError::InvalidBands {
                kpi: kpi.into(),
                reason: format!("value {value} below the band domain ({})", self.lower),
            });
        }
        for s in &self.segments {
            if value < s.upper || (s.upper_inclusive && value == s.upper) {
                return Ok(s.score);
            }
        }
        Err(AuditError::InvalidBands {
            kpi: kpi.into(),
            reason: format!("value {value} above the band domain"),
        })
    }
}

/// All KPI band chains, keyed by KPI identifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RagBands {
    pub kpis: BTreeMap<String, KpiBands>,
}

/// Standing note carried by every VIF entry: the literal green band is
/// algebraically unreachable.
pub const VIF_GREEN_NOTE: &str =
    "green band (< 1.0) is algebraically unattainable since VIF >= 1; \
     amber is the practical best score";

impl Default for RagBands {
    /// The default bands. Fuzzy edges are concretized one-sidedly (edges
    /// belong to the worse score except where bracket notation says
    /// otherwise); every edge is configurable.
    fn default() -> Self {
        use Rag::*;
        let inf = f64::INFINITY;
        let mut kpis = BTreeMap::new();
        let mut put = |name: &str, bands: KpiBands| {
            kpis.insert(name.to_string(), bands);
        };
        // VIF: kept literal (green unreachable, see VIF_GREEN_NOTE)
        put(
            "vif",
            KpiBands::new(0.0, &[(1.0, false, Green), (5.0, true, Amber), (inf, true, Red)]),
        );
        // p-values: p = 0.05 scores red, p = 0.1 amber (edges to the worse)
        for test in ["swt", "bpt"] {
            put(
                test,
                KpiBands::new(
                    0.0,
                    &[(0.05, true, Red), (0.1, true, Amber), (1.0, true, Green)],
                ),
            );
        }
        // accuracy: [0,0.5] red, (0.5,0.8) amber, [0.8,1.0] green
        for kpi in ["auc_roc", "f1"] {
            put(
                kpi,
                KpiBands::new(
                    0.0,
                    &[(0.5, true, Red), (0.8, false, Amber), (1.0, true, Green)],
                ),
            );
        }
        // differences where smaller is better: green < 0.2, amber [0.2,0.3]
        for kpi in ["sp", "diff_ind", "diff_ind_mlm"] {
            put(
                kpi,
                KpiBands::new(
                    0.0,
                    &[(0.2, false, Green), (0.3, true, Amber), (inf, true, Red)],
                ),
            );
        }
        // DI: red < 0.7, amber [0.7,0.8), green >= 0.8
        put(
            "di",
            KpiBands::new(0.0, &[(0.7, false, Red), (0.8, false, Amber), (inf, true, Green)]),
        );
        // equalized odds: green < 0.1, amber [0.1,0.2], red > 0.2
        put(
            "equal_odds",
            KpiBands::new(
                0.0,
                &[(0.1, false, Green), (0.2, true, Amber), (inf, true, Red)],
            ),
        );
        // rank correlation: red [-1,0.3], amber (0.3,0.8), green [0.8,1]
        put(
            "rho_order",
            KpiBands::new(
                -1.0,
                &[(0.3, true, Red), (0.8, false, Amber), (1.0, true, Green)],
            ),
        );
        // probability unexplained: green < 0.1, amber [0.1,0.2], red > 0.2
        put(
            "pux",
            KpiBands::new(
                0.0,
                &[(0.1, false, Green), (0.2, true, Amber), (1.0, true, Red)],
            ),
        );
        // sign disagreement percentage: green [0,10), amber [10,20), red [20,100]
        put(
            "poifs",
            KpiBands::new(
                0.0,
                &[(10.0, false, Green), (20.0, false, Amber), (100.0, true, Red)],
            ),
        );
        RagBands { kpis }
    }
}

impl RagBands {
    pub fn validate(&self) -> Result<()> {
        for (kpi, bands) in &self.kpis {
            bands.validate(kpi)?;
        }
        Ok(())
    }

    /// Replaces the band chain of one KPI.
    pub fn override_kpi(&mut self, kpi: &str, bands: KpiBands) -> Result<()> {
        bands.validate(kpi)?;
        if !self.kpis.contains_key(kpi) {
            return Err(AuditError::UnknownKpi(kpi.into()));
        }
        self.kpis.insert(kpi.into(), bands);
        Ok(())
    }
}

/// Scores one KPI value against its band chain.
pub fn score_kpi(name: &str, value: f64, bands: &RagBands) -> Result<Rag> {
    let kpi = bands
        .kpis
        .get(name)
        .ok_or_else(|| AuditError::UnknownKpi(name.into()))?;
    kpi.score(name, value)
}

// ---------------------------------------------------------------------------
// report structure
// ---------------------------------------------------------------------------

/// One KPI row of the report. `value`/`rag` are both absent only for an
/// explicit flagged non-result — `flags` must then say why.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KpiEntry {
    pub name: String,
    pub value: Option<f64>,
    /// Breakdown of the headline value: per MLM-group, per feature, or per
    /// group pair, depending on the KPI. `null` when no breakdown applies.
    pub per_group: serde_json::Value,
    pub rag: Option<Rag>,
    pub flags: Vec<String>,
}

impl KpiEntry {
    /// A scored entry: looks `band_key` up in `bands` and scores `value`.
    pub fn scored(
        name: &str,
        band_key: &str,
        value: f64,
        per_group: serde_json::Value,
        flags: Vec<String>,
        bands: &RagBands,
    ) -> Result<KpiEntry> {
        let rag = score_kpi(band_key, value, bands)?;
        Ok(KpiEntry {
            name: name.to_string(),
            value: Some(value),
            per_group,
            rag: Some(rag),
            flags,
        })
    }

    /// An explicit non-result; requires at least one flag explaining it.
    pub fn non_result(
        name: &str,
        per_group: serde_json::Value,
        flags: Vec<String>,
    ) -> Result<KpiEntry> {
        if flags.is_empty() {
            return Err(AuditError::InvalidConfig(format!(
                "non-result KPI {name:?} needs at least one explanatory flag"
            )));
        }
        Ok(KpiEntry {
            name: name.to_string(),
            value: None,
            per_group,
            rag: None,
            flags,
        })
    }
}

/// How fuzzy band edges were concretized; carried in every report.
pub const BAND_CONVENTION_NOTE: &str =
    "band edges score as the worse side, except where bracket notation pins \
     a boundary to a band (e.g. accuracy 0.8 scores green)";

/// Report provenance. The timestamp is excluded from the canonical
/// (hash-checked) body so identical runs produce identical bodies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub tool_version: String,
    pub timestamp: String,
    pub dataset_path: String,
    pub dataset_sha256: String,
    pub config_sha256: String,
    pub master_seed: u64,
    pub split_seed: u64,
    pub n_rows: usize,
    pub n_train: usize,
    pub n_test: usize,
    /// See [`BAND_CONVENTION_NOTE`].
    pub band_convention: String,
}

/// Per-group coefficient row of the model summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupCoefficients {
    pub group: String,
    pub alpha: f64,
    pub slopes: BTreeMap<String, f64>,
}

/// The fitted model as reported: coefficients, variance components, fit
/// diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub groups: Vec<String>,
    pub feature_names: Vec<String>,
    pub varying_intercept: bool,
    pub varying_features: Vec<String>,
    pub coefficients: Vec<GroupCoefficients>,
    pub mu_alpha: f64,
    pub sigma2_alpha: f64,
    pub mu_beta: BTreeMap<String, f64>,
    pub sigma2_beta: BTreeMap<String, f64>,
    pub fit_meta: FitMeta,
    pub decision_threshold: f64,
}

impl ModelSummary {
    pub fn from_model(model: &MlmModel, decision_threshold: f64) -> Result<Self> {
        let coefficients = model
            .groups
            .iter()
            .map(|g| {
                let (alpha, slopes) = model.coefficients_for(g)?;
                Ok(GroupCoefficients {
                    group: g.clone(),
                    alpha,
                    slopes: model
                        .feature_names
                        .iter()
                        .cloned()
                        .zip(slopes)
                        .collect(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let keyed = |vals: &[f64]| -> BTreeMap<String, f64> {
            model
                .varying_features
                .iter()
                .cloned()
                .zip(vals.iter().copied())
                .collect()
        };
        Ok(ModelSummary {
            groups: model.groups.clone(),
            feature_names: model.feature_names.clone(),
            varying_intercept: model.varying_intercept,
            varying_features: model.varying_features.clone(),
            coefficients,
            mu_alpha: model.mu_alpha,
            sigma2_alpha: model.sigma2_alpha,
            mu_beta: keyed(&model.mu_beta),
            sigma2_beta: keyed(&model.sigma2_beta),
            fit_meta: model.fit_meta.clone(),
            decision_threshold,
        })
    }
}

/// One manual annotation: free text plus an auditor-chosen score. Never
/// computed, never counted in `overall`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct Annotation {
    pub text: String,
    pub rag: Option<Rag>,
}

/// The annotation section keyed by field name; the qualitative
/// model-assumptions-documentation KPI lives here under
/// [`ASSUMPTIONS_ANNOTATION_KEY`].
pub type Annotations = BTreeMap<String, Annotation>;

pub const ASSUMPTIONS_ANNOTATION_KEY: &str = "model_assumptions_documentation";

/// Counts of computed KPI scores. Manual annotations are excluded: their
/// scores are auditor opinions, not measurements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Overall {
    pub red: usize,
    pub amber: usize,
    pub green: usize,
    pub not_scored: usize,
}

/// The complete audit report body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub metadata: Metadata,
    pub model: ModelSummary,
    pub statistical_properties: Vec<KpiEntry>,
    pub accuracy: Vec<KpiEntry>,
    pub group_fairness: Vec<KpiEntry>,
    pub individual_fairness: Vec<KpiEntry>,
    pub explainability: Vec<KpiEntry>,
    pub annotations: Annotations,
    pub overall: Overall,
}

impl AuditReport {
    /// All KPI sections in report order.
    pub fn sections(&self) -> [(&'static str, &[KpiEntry]); 5] {
        [
            ("statistical_properties", &self.statistical_properties),
            ("accuracy", &self.accuracy),
            ("group_fairness", &self.group_fairness),
            ("individual_fairness", &self.individual_fairness),
            ("explainability", &self.explainability),
        ]
    }

    /// Finds a KPI entry by name across all sections.
    pub fn entry(&self, name: &str) -> Option<&KpiEntry> {
        self.sections()
            .into_iter()
            .flat_map(|(_, entries)| entries)
            .find(|e| e.name == name)
    }
}

/// Assembles the report and computes the overall counts. Total: any set of
/// entries assembles.
#[allow(clippy::too_many_arguments)]
pub fn assemble_report(
    metadata: Metadata,
    model: ModelSummary,
    statistical_properties: Vec<KpiEntry>,
    accuracy: Vec<KpiEntry>,
    group_fairness: Vec<KpiEntry>,
    individual_fairness: Vec<KpiEntry>,
    explainability: Vec<KpiEntry>,
    annotations: Annotations,
) -> AuditReport {
    let mut overall = Overall {
        red: 0,
        amber: 0,
        green: 0,
        not_scored: 0,
    };
    for entries in [
        &statistical_properties,
        &accuracy,
        &group_fairness,
        &individual_fairness,
        &explainability,
    ] {
        for e in entries.iter() {
            match e.rag {
                Some(Rag::Red) => overall.red += 1,
                Some(Rag::Amber) => overall.amber += 1,
                Some(Rag::Green) => overall.green += 1,
                None => overall.not_scored += 1,
            }
        }
    }
    AuditReport {
        metadata,
        model,
        statistical_properties,
        accuracy,
        group_fairness,
        individual_fairness,
        explainability,
        annotations,
        overall,
    }
}

// ---------------------------------------------------------------------------
// rendering
// ---------------------------------------------------------------------------

/// The JSON rendering: pretty-printed, trailing newline.
pub fn render_json(report: &AuditReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

/// The canonical body used for determinism checks and hashing: the JSON
/// rendering with the timestamp field blanked.
pub fn canonical_body(report: &AuditReport) -> String {
    let mut clone = report.clone();
    clone.metadata.timestamp = String::new();
    render_json(&clone)
}

fn fmt_value(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else if v.abs() < 1e-4 {
        format!("{v:.3e}")
    } else {
        let s = format!("{v:.6}");
        let s = s.trim_end_matches('0').trim_end_matches('.');
        s.to_string()
    }
}

fn rag_cell(rag: Option<Rag>) -> String {
    match rag {
        Some(r) => format!("● {r}"),
        None => "— not scored".to_string(),
    }
}

fn push_section(out: &mut String, title: &str, entries: &[KpiEntry]) {
    out.push_str(&format!("\n## {title}\n\n"));
    if entries.is_empty() {
        out.push_str("No KPIs computed for this section.\n");
        return;
    }
    out.push_str("| KPI | Value | RAG | Notes |\n|---|---|---|---|\n");
    for e in entries {
        let value = e.value.map(fmt_value).unwrap_or_else(|| "—".into());
        let notes = if e.flags.is_empty() {
            String::new()
        } else {
            e.flags.join("; ")
        };
        out.push_str(&format!(
            "| {} | {} | {} | {} |\n",
            e.name,
            value,
            rag_cell(e.rag),
            notes.replace('|', "\\|")
        ));
    }
    // per-group breakdowns as nested bullets under the table
    for e in entries {
        if let serde_json::Value::Object(map) = &e.per_group {
            if map.is_empty() {
                continue;
            }
            out.push_str(&format!("\n- `{}` breakdown:\n", e.name));
            for (k, v) in map {
                out.push_str(&format!("  - {k}: {v}\n"));
            }
        }
    }
}

/// The markdown rendering: one table per aspect with ●-glyph RAG cells.
pub fn render_markdown(report: &AuditReport) -> String {
    let m = &report.metadata;
    let mut out = String::new();
    out.push_str("# Model audit report\n\n");
    out.push_str(&format!(
        "- tool version: {}\n- timestamp: {}\n- dataset: `{}` (sha256 {})\n\
         - configuration sha256: {}\n- master seed: {} (split seed {})\n\
         - rows: {} total, {} train, {} test\n",
        m.tool_version,
        m.timestamp,
        m.dataset_path,
        m.dataset_sha256,
        m.config_sha256,
        m.master_seed,
        m.split_seed,
        m.n_rows,
        m.n_train,
        m.n_test
    ));
    out.push_str(&format!("- band convention: {}\n", m.band_convention));

    out.push_str("\n## Model\n\n");
    let ms = &report.model;
    out.push_str(&format!(
        "Multilevel logistic model over groups {:?}; varying intercept: {}; \
         varying slopes: {:?}; decision threshold {}.\n\n",
        ms.groups, ms.varying_intercept, ms.varying_features, ms.decision_threshold
    ));
    out.push_str("| Group | alpha |");
    for f in &ms.feature_names {
        out.push_str(&format!(" beta_{f} |"));
    }
    out.push_str("\n|---|---|");
    for _ in &ms.feature_names {
        out.push_str("---|");
    }
    out.push('\n');
    for gc in &ms.coefficients {
        out.push_str(&format!("| {} | {} |", gc.group, fmt_value(gc.alpha)));
        for f in &ms.feature_names {
            out.push_str(&format!(" {} |", fmt_value(gc.slopes[f])));
        }
        out.push('\n');
    }
    out.push_str(&format!(
        "\nVariance components: mu_alpha = {}, sigma2_alpha = {}",
        fmt_value(ms.mu_alpha),
        fmt_value(ms.sigma2_alpha)
    ));
    for (f, mu) in &ms.mu_beta {
        out.push_str(&format!(
            ", mu_beta[{f}] = {}, sigma2_beta[{f}] = {}",
            fmt_value(*mu),
            fmt_value(ms.sigma2_beta[f])
        ));
    }
    out.push_str(&format!(
        ". Fit: {} iterations, converged = {}.\n",
        ms.fit_meta.iterations, ms.fit_meta.converged
    ));

    push_section(&mut out, "Statistical properties", &report.statistical_properties);
    push_section(&mut out, "Accuracy", &report.accuracy);
    push_section(&mut out, "Group fairness", &report.group_fairness);
    push_section(&mut out, "Individual fairness", &report.individual_fairness);
    push_section(&mut out, "Explainability", &report.explainability);

    out.push_str("\n## Annotations\n\n");
    if report.annotations.is_empty()
        || report.annotations.values().all(|a| a.text.trim().is_empty())
    {
        out.push_str("Not assessed.\n");
    } else {
        for (key, ann) in &report.annotations {
            let rag = ann
                .rag
                .map(|r| format!(" — auditor score: ● {r}"))
                .unwrap_or_default();
            let text = if ann.text.trim().is_empty() {
                "not assessed"
            } else {
                ann.text.trim()
            };
            out.push_str(&format!("- **{key}**: {text}{rag}\n"));
        }
        out.push_str(
            "\nAnnotation scores are auditor opinions and are excluded from the overall counts.\n",
        );
    }

    let o = &report.overall;
    out.push_str(&format!(
        "\n## Overall\n\n● RED: {} ● AMBER: {} ● GREEN: {} — not scored: {}\n",
        o.red, o.amber, o.green, o.not_scored
    ));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn bands() -> RagBands {
        RagBands::default()
    }

    #[test]
    fn table_band_examples() {
        let b = bands();
        // bracket boundaries and literal edges
        assert_eq!(score_kpi("auc_roc", 0.91, &b).unwrap(), Rag::Green);
        assert_eq!(score_kpi("auc_roc", 0.8, &b).unwrap(), Rag::Green);
        assert_eq!(score_kpi("auc_roc", 0.79, &b).unwrap(), Rag::Amber);
        assert_eq!(score_kpi("auc_roc", 0.5, &b).unwrap(), Rag::Red);
        assert_eq!(score_kpi("vif", 7.5, &b).unwrap(), Rag::Red);
        assert_eq!(score_kpi("vif", 5.0, &b).unwrap(), Rag::Amber);
        assert_eq!(score_kpi("vif", 1.0, &b).unwrap(), Rag::Amber);
        assert_eq!(score_kpi("vif", 0.99, &b).unwrap(), Rag::Green);
        assert_eq!(score_kpi("vif", f64::INFINITY, &b).unwrap(), Rag::Red);
        // p-value edges belong to the worse score
        for test in ["swt", "bpt"] {
            assert_eq!(score_kpi(test, 0.04, &b).unwrap(), Rag::Red);
            assert_eq!(score_kpi(test, 0.05, &b).unwrap(), Rag::Red);
            assert_eq!(score_kpi(test, 0.07, &b).unwrap(), Rag::Amber);
            assert_eq!(score_kpi(test, 0.1, &b).unwrap(), Rag::Amber);
            assert_eq!(score_kpi(test, 0.2, &b).unwrap(), Rag::Green);
        }
        // difference KPIs
        assert_eq!(score_kpi("sp", 0.19, &b).unwrap(), Rag::Green);
        assert_eq!(score_kpi("sp", 0.2, &b).unwrap(), Rag::Amber);
        assert_eq!(score_kpi("sp", 0.3, &b).unwrap(), Rag::Amber);
        assert_eq!(score_kpi("sp", 0.31, &b).unwrap(), Rag::Red);
        assert_eq!(score_kpi("di", 1.3, &b).unwrap(), Rag::Green);
        assert_eq!(score_kpi("di", 0.8, &b).unwrap(), Rag::Green);
        assert_eq!(score_kpi("di", 0.7, &b).unwrap(), Rag::Amber);
        assert_eq!(score_kpi("di", 0.69, &b).unwrap(), Rag::Red);
        assert_eq!(score_kpi("equal_odds", 0.09, &b).unwrap(), Rag::Green);
        assert_eq!(score_kpi("equal_odds", 0.1, &b).unwrap(), Rag::Amber);
        assert_eq!(score_kpi("equal_odds", 0.25, &b).unwrap(), Rag::Red);
        // explainability
        assert_eq!(score_kpi("rho_order", 0.3, &b).unwrap(), Rag::Red);
        assert_eq!(score_kpi("rho_order", 0.79, &b).unwrap(), Rag::Amber);
        assert_eq!(score_kpi("rho_order", 0.8, &b).unwrap(), Rag::Green);
        assert_eq!(score_kpi("rho_order", -1.0, &b).unwrap(), Rag::Red);
        assert_eq!(score_kpi("pux", 0.05, &b).unwrap(), Rag::Green);
        assert_eq!(score_kpi("pux", 0.1, &b).unwrap(), Rag::Amber);
        assert_eq!(score_kpi("pux", 0.21, &b).unwrap(), Rag::Red);
        assert_eq!(score_kpi("poifs", 0.0, &b).unwrap(), Rag::Green);
        assert_eq!(score_kpi("poifs", 9.99, &b).unwrap(), Rag::Green);
        assert_eq!(score_kpi("poifs", 10.0, &b).unwrap(), Rag::Amber);
        assert_eq!(score_kpi("poifs", 20.0, &b).unwrap(), Rag::Red);
        assert_eq!(score_kpi("poifs", 100.0, &b).unwrap(), Rag::Red);
    }

    #[test]
    fn scoring_errors() {
        let b = bands();
        assert!(matches!(
            score_kpi("nope", 0.5, &b),
            Err(AuditError::UnknownKpi(_))
        ));
        assert!(matches!(
            score_kpi("auc_roc", f64::NAN, &b),
            Err(AuditError::NonFiniteValue { .. })
        ));
        // out of the band domain
        assert!(score_kpi("rho_order", -1.1, &b).is_err());
        assert!(score_kpi("auc_roc", 1.1, &b).is_err());
        assert!(score_kpi("poifs", 100.1, &b).is_err());
    }

    #[test]
    fn default_bands_are_valid_and_monotone() {
        let b = bands();
        b.validate().unwrap();
        let grid = |lo: f64, hi: f64| -> Vec<f64> {
            (0..=400).map(|i| lo + (hi - lo) * i as f64 / 400.0).collect()
        };
        let check = |kpi: &str, lo: f64, hi: f64, larger_is_worse: bool| {
            let mut last: Option<u8> = None;
            for v in grid(lo, hi) {
                let badness = score_kpi(kpi, v, &b).unwrap().badness();
                if let Some(prev) = last {
                    if larger_is_worse {
                        assert!(badness >= prev, "{kpi} got better as {v} increased");
                    } else {
                        assert!(badness <= prev, "{kpi} got worse as {v} increased");
                    }
                }
                last = Some(badness);
            }
        };
        for kpi in ["vif", "sp", "equal_odds", "diff_ind", "diff_ind_mlm"] {
            check(kpi, 0.0, 12.0, true);
        }
        check("pux", 0.0, 1.0, true);
        check("poifs", 0.0, 100.0, true);
        for kpi in ["auc_roc", "f1"] {
            check(kpi, 0.0, 1.0, false);
        }
        check("di", 0.0, 3.0, false);
        check("rho_order", -1.0, 1.0, false);
        for kpi in ["swt", "bpt"] {
            check(kpi, 0.0, 1.0, false);
        }
    }

    #[test]
    fn band_totality_on_defaults() {
        // every finite value in the KPI's domain maps to exactly one score
        let b = bands();
        for (kpi, lo, hi) in [
            ("auc_roc", 0.0, 1.0),
            ("rho_order", -1.0, 1.0),
            ("poifs", 0.0, 100.0),
            ("vif", 0.0, 1e9),
        ] {
            for i in 0..=1000 {
                let v = lo + (hi - lo) * i as f64 / 1000.0;
                score_kpi(kpi, v, &b).unwrap();
            }
        }
    }

    #[test]
    fn overrides_and_validation() {
        let mut b = bands();
        // custom stricter SP bands
        b.override_kpi(
            "sp",
            KpiBands::new(
                0.0,
                &[
                    (0.05, false, Rag::Green),
                    (0.1, true, Rag::Amber),
                    (f64::INFINITY, true, Rag::Red),
                ],
            ),
        )
        .unwrap();
        assert_eq!(score_kpi("sp", 0.07, &b).unwrap(), Rag::Amber);
        // unknown KPI refuses the override
        assert!(b
            .override_kpi("bogus", KpiBands::new(0.0, &[(1.0, true, Rag::Green)]))
            .is_err());
        // invalid chains are rejected
        assert!(KpiBands::new(0.0, &[])
            .validate("x")
            .is_err());
        assert!(
            KpiBands::new(0.0, &[(0.5, true, Rag::Red), (0.4, true, Rag::Green)])
                .validate("x")
                .is_err()
        );
        assert!(
            KpiBands::new(0.0, &[(f64::INFINITY, false, Rag::Green)])
                .validate("x")
                .is_err()
        );
    }

    fn tiny_report() -> AuditReport {
        let b = bands();
        let metadata = Metadata {
            tool_version: "0.1.0".into(),
            timestamp: "unix:1755600000".into(),
            dataset_path: "data/x.csv".into(),
            dataset_sha256: "ab".into(),
            config_sha256: "cd".into(),
            master_seed: 7,
            split_seed: 3,
            n_rows: 10,
            n_train: 8,
            n_test: 2,
            band_convention: BAND_CONVENTION_NOTE.into(),
        };
        let model = ModelSummary {
            groups: vec!["a".into()],
            feature_names: vec!["x0".into()],
            varying_intercept: true,
            varying_features: vec![],
            coefficients: vec![GroupCoefficients {
                group: "a".into(),
                alpha: 0.5,
                slopes: [("x0".to_string(), 1.25)].into_iter().collect(),
            }],
            mu_alpha: 0.5,
            sigma2_alpha: 0.01,
            mu_beta: BTreeMap::new(),
            sigma2_beta: BTreeMap::new(),
            fit_meta: FitMeta {
                iterations: 3,
                converged: true,
                penalized_loglik: -1.0,
            },
            decision_threshold: 0.5,
        };
        let stat = vec![
            KpiEntry::scored("vif", "vif", 7.5, json!({"x0": 7.5}), vec![VIF_GREEN_NOTE.into()], &b)
                .unwrap(),
            KpiEntry::non_result(
                "random_effect_normality",
                serde_json::Value::Null,
                vec!["needs at least 8 groups, have 1".into()],
            )
            .unwrap(),
        ];
        let acc = vec![
            KpiEntry::scored("auc_roc", "auc_roc", 0.91, json!({"a": 0.91}), vec![], &b).unwrap(),
            KpiEntry::scored("f1", "f1", 0.6, json!({"a": 0.6}), vec![], &b).unwrap(),
        ];
        let mut annotations = Annotations::new();
        annotations.insert(
            ASSUMPTIONS_ANNOTATION_KEY.into(),
            Annotation {
                text: "Assumptions are documented in the model card.".into(),
                rag: Some(Rag::Amber),
            },
        );
        assemble_report(
            metadata,
            model,
            stat,
            acc,
            vec![],
            vec![],
            vec![],
            annotations,
        )
    }

    #[test]
    fn overall_counts_and_annotation_exclusion() {
        let r = tiny_report();
        // vif red, auc green, f1 amber, one not scored; annotation amber NOT counted
        assert_eq!(
            r.overall,
            Overall {
                red: 1,
                amber: 1,
                green: 1,
                not_scored: 1
            }
        );
        assert!(r.entry("vif").is_some());
        assert!(r.entry("nothere").is_none());
    }

    #[test]
    fn json_round_trip_is_equal() {
        let r = tiny_report();
        let json = render_json(&r);
        let back: AuditReport = serde_json::from_str(&json).unwrap();
        assert_eq!(r, back);
        // exact top-level schema keys
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        let obj = v.as_object().unwrap();
        let keys: Vec<&String> = obj.keys().collect();
        for want in [
            "metadata",
            "model",
            "statistical_properties",
            "accuracy",
            "group_fairness",
            "individual_fairness",
            "explainability",
            "annotations",
            "overall",
        ] {
            assert!(keys.iter().any(|k| *k == want), "missing key {want}");
        }
        // KPI entry keys
        let e = &v["statistical_properties"][0];
        for want in ["name", "value", "per_group", "rag", "flags"] {
            assert!(e.get(want).is_some(), "missing entry key {want}");
        }
        assert_eq!(e["rag"], json!("red"));
    }

    #[test]
    fn canonical_body_excludes_timestamp() {
        let r1 = tiny_report();
        let mut r2 = tiny_report();
        r2.metadata.timestamp = "unix:9999999999".into();
        assert_ne!(render_json(&r1), render_json(&r2));
        assert_eq!(canonical_body(&r1), canonical_body(&r2));
    }

    #[test]
    fn markdown_has_a_row_per_kpi_and_glyphs() {
        let r = tiny_report();
        let md = render_markdown(&r);
        assert!(md.contains("| vif | 7.5 | ● RED |"));
        assert!(md.contains("| auc_roc | 0.91 | ● GREEN |"));
        assert!(md.contains("| f1 | 0.6 | ● AMBER |"));
        assert!(md.contains("| random_effect_normality | — | — not scored |"));
        assert!(md.contains("## Overall"));
        assert!(md.contains("● RED: 1 ● AMBER: 1 ● GREEN: 1 — not scored: 1"));
        assert!(md.contains(ASSUMPTIONS_ANNOTATION_KEY));
        // per-group breakdown bullet
        assert!(md.contains("`vif` breakdown"));
    }

    #[test]
    fn empty_annotations_render_as_not_assessed() {
        let mut r = tiny_report();
        r.annotations = Annotations::new();
        let md = render_markdown(&r);
        assert!(md.contains("Not assessed."));
    }

    #[test]
    fn non_results_need_flags() {
        assert!(KpiEntry::non_result("x", serde_json::Value::Null, vec![]).is_err());
    }
}
