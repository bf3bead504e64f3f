//! CSV ingestion, column-role application, target derivation, and seeded
//! train/test splits.
//!
//! The functions here are pure over immutable inputs: loading never mutates
//! the file, splitting never mutates the dataset, and every operation is
//! deterministic for fixed arguments (splits draw randomness only from the
//! seed in [`SplitSpec`]).

use crate::error::{AuditError, Result};
use crate::seeding;
use rand::seq::SliceRandom;

/// Maps dataset columns onto the roles the audit needs: model features, the
/// multilevel grouping label, the sensitive attribute for fairness splits,
/// and the raw outcome column the binary target is derived from.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnRoles {
    /// Ordered list of numeric feature columns (the model's x vector).
    pub feature_columns: Vec<String>,
    /// Column whose labels define the MLM groups (one intercept/slope set per label).
    pub group_column: String,
    /// Column whose labels define the fairness split.
    pub sensitive_column: String,
    /// The sensitive-column category treated as the privileged class (S = 1).
    pub sensitive_privileged_value: String,
    /// Raw outcome column the binary target is thresholded from.
    pub target_column: String,
    /// Threshold in the units of `target_column`; target = 1 iff value > threshold.
    pub target_threshold: f64,
}

impl ColumnRoles {
    /// Checks the role invariants against a header: all named columns exist,
    /// the role columns are pairwise distinct, and there is at least one
    /// feature column.
    pub fn validate(&self, header: &[String]) -> Result<()> {
        if self.feature_columns.is_empty() {
            return Err(AuditError::InvalidConfig(
                "feature_columns must not be empty".into(),
            ));
        }
        let mut assigned: Vec<(&str, &'static str)> = Vec::new();
        for f in &self.feature_columns {
            assigned.push((f.as_str(), "features"));
        }
        assigned.push((self.group_column.as_str(), "group"));
        assigned.push((self.sensitive_column.as_str(), "sensitive"));
        assigned.push((self.target_column.as_str(), "target"));
        for (i, (col, role)) in assigned.iter().enumerate() {
            if !header.iter().any(|h| h == col) {
                return Err(AuditError::MissingColumn {
                    column: (*col).to_string(),
                    header: header.to_vec(),
                });
            }
            if let Some((_, first_role)) = assigned[..i].iter().find(|(c, _)| c == col) {
                return Err(AuditError::DuplicateRole {
                    column: (*col).to_string(),
                    first: first_role,
                    second: role,
                });
            }
        }
        Ok(())
    }
}

/// An ingested tabular dataset with typed columns.
///
/// Feature values are parsed reals; group and sensitive values are kept as
/// categorical labels; the raw target column is kept verbatim for provenance
/// and [`derive_target`] fills `target` with exact 0/1 values. `groups`
/// lists the distinct group labels in lexicographic order (stable under row
/// shuffles, so group indexing is reproducible).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// Full header of the source file, in file order.
    pub header: Vec<String>,
    /// Feature column names, in the order given by [`ColumnRoles`].
    pub feature_names: Vec<String>,
    /// Per-row feature vectors (row-major; `features[i][k]` is feature k of row i).
    pub features: Vec<Vec<f64>>,
    /// Per-row group label.
    pub group: Vec<String>,
    /// Per-row sensitive label.
    pub sensitive: Vec<String>,
    /// Per-row raw target value, verbatim from the file.
    pub raw_target: Vec<String>,
    /// Per-row binary target; empty until [`derive_target`] runs.
    pub target: Vec<u8>,
    /// Distinct group labels, lexicographically sorted.
    pub groups: Vec<String>,
}

impl Dataset {
    /// Number of data rows.
    pub fn n_rows(&self) -> usize {
        self.features.len()
    }

    /// Number of feature columns.
    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    /// Index of `label` within `groups`, if present.
    pub fn group_index(&self, label: &str) -> Option<usize> {
        self.groups.iter().position(|g| g == label)
    }

    /// Row indices belonging to `label`, in row order.
    pub fn rows_of_group(&self, label: &str) -> Vec<usize> {
        (0..self.n_rows()).filter(|&i| self.group[i] == label).collect()
    }

    /// Fraction of rows with target 1. Panics if the target has not been
    /// derived yet (programming error, not data error).
    pub fn positive_fraction(&self) -> f64 {
        assert_eq!(
            self.target.len(),
            self.n_rows(),
            "positive_fraction requires a derived target"
        );
        if self.target.is_empty() {
            return 0.0;
        }
        self.target.iter().map(|&t| t as usize).sum::<usize>() as f64 / self.target.len() as f64
    }

    /// New dataset containing the given rows (indices into this dataset, in
    /// the order given). `groups` is recomputed from the surviving rows.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut groups: Vec<String> = Vec::new();
        for &i in indices {
            if !groups.contains(&self.group[i]) {
                groups.push(self.group[i].clone());
            }
        }
        groups.sort();
        Dataset {
            header: self.header.clone(),
            feature_names: self.feature_names.clone(),
            features: indices.iter().map(|&i| self.features[i].clone()).collect(),
            group: indices.iter().map(|&i| self.group[i].clone()).collect(),
            sensitive: indices.iter().map(|&i| self.sensitive[i].clone()).collect(),
            raw_target: indices.iter().map(|&i| self.raw_target[i].clone()).collect(),
            target: if self.target.len() == self.n_rows() {
                indices.iter().map(|&i| self.target[i]).collect()
            } else {
                Vec::new()
            },
            groups,
        }
    }
}

/// How to partition a dataset into train and test rows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    /// Fraction of rows assigned to the test set; strictly between 0 and 1.
    pub test_fraction: f64,
    /// Seed for the split's random choice of rows. Independent of the audit
    /// master seed so the partition can be held fixed while other seeded
    /// protocols move.
    pub seed: u64,
    /// When true (default), the test fraction is applied within each group so
    /// every group appears in both partitions.
    pub stratify_by_group: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            test_fraction: 0.05,
            seed: 0,
            stratify_by_group: true,
        }
    }
}

/// Loads a CSV file and applies column roles.
///
/// The first line must be a header; fields are comma-separated with decimal
/// points. Feature values must parse as finite reals; empty cells anywhere in
/// a role column are rejected (an auditor must not silently impute). Row
/// order is preserved. The returned dataset has no derived target yet — see
/// [`derive_target`].
pub fn load_csv(path: &str, roles: &ColumnRoles) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => {
                let msg = e.to_string();
                AuditError::io(path, std::io::Error::other(msg))
            }
            _ => AuditError::Csv(e),
        })?;
    let header: Vec<String> = reader
        .headers()
        .map_err(AuditError::Csv)?
        .iter()
        .map(|s| s.to_string())
        .collect();
    roles.validate(&header)?;

    let col_idx = |name: &str| -> usize {
        header.iter().position(|h| h == name).expect("validated above")
    };
    let feature_idx: Vec<usize> = roles.feature_columns.iter().map(|c| col_idx(c)).collect();
    let group_idx = col_idx(&roles.group_column);
    let sensitive_idx = col_idx(&roles.sensitive_column);
    let target_idx = col_idx(&roles.target_column);

    let mut features: Vec<Vec<f64>> = Vec::new();
    let mut group: Vec<String> = Vec::new();
    let mut sensitive: Vec<String> = Vec::new();
    let mut raw_target: Vec<String> = Vec::new();

    for (row_i, record) in reader.records().enumerate() {
        let record = record.map_err(AuditError::Csv)?;
        let row = row_i + 1; // 1-based data-row index for error messages
        let get = |idx: usize, column: &str| -> Result<String> {
            match record.get(idx) {
                Some(v) if !v.is_empty() => Ok(v.to_string()),
                _ => Err(AuditError::MissingValue {
                    row,
                    column: column.to_string(),
                }),
            }
        };
        let mut x = Vec::with_capacity(feature_idx.len());
        for (k, &idx) in feature_idx.iter().enumerate() {
            let column = &roles.feature_columns[k];
            let raw = get(idx, column)?;
            let v: f64 = raw.parse().map_err(|_| AuditError::ParseError {
                row,
                column: column.clone(),
                value: raw.clone(),
            })?;
            if !v.is_finite() {
                return Err(AuditError::ParseError {
                    row,
                    column: column.clone(),
                    value: raw,
                });
            }
            x.push(v);
        }
        features.push(x);
        group.push(get(group_idx, &roles.group_column)?);
        sensitive.push(get(sensitive_idx, &roles.sensitive_column)?);
        raw_target.push(get(target_idx, &roles.target_column)?);
    }

    if features.is_empty() {
        return Err(AuditError::EmptyDataset(format!(
            "{path} has a header but no data rows"
        )));
    }

    let mut groups: Vec<String> = Vec::new();
    for g in &group {
        if !groups.contains(g) {
            groups.push(g.clone());
        }
    }
    groups.sort();

    Ok(Dataset {
        header,
        feature_names: roles.feature_columns.clone(),
        features,
        group,
        sensitive,
        raw_target,
        target: Vec::new(),
        groups,
    })
}

/// Derives the binary target: 1 iff the raw target value is strictly greater
/// than the threshold, else 0. The raw column is retained for provenance.
/// Idempotent; depends only on the raw target column and the threshold.
pub fn derive_target(ds: &Dataset, roles: &ColumnRoles) -> Result<Dataset> {
    let mut out = ds.clone();
    out.target = Vec::with_capacity(ds.n_rows());
    for (i, raw) in ds.raw_target.iter().enumerate() {
        let v: f64 = raw.parse().map_err(|_| AuditError::ParseError {
            row: i + 1,
            column: roles.target_column.clone(),
            value: raw.clone(),
        })?;
        out.target.push(u8::from(v > roles.target_threshold));
    }
    Ok(out)
}

/// Splits a dataset into disjoint train and test partitions.
///
/// Stratified mode draws `round(test_fraction × group size)` test rows
/// (minimum 1) independently per group, so adding or removing one group never
/// changes another group's partition. Membership is decided by a seeded
/// shuffle; rows inside each partition keep their original dataset order.
/// Each group must retain at least `n_features + 2` training rows.
pub fn split(ds: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset)> {
    if !(spec.test_fraction > 0.0 && spec.test_fraction < 1.0) {
        return Err(AuditError::InvalidConfig(format!(
            "test_fraction must be in (0,1), got {}",
            spec.test_fraction
        )));
    }
    if ds.n_rows() == 0 {
        return Err(AuditError::EmptyDataset("cannot split an empty dataset".into()));
    }
    let min_train = ds.n_features() + 2;
    let mut test_idx: Vec<usize> = Vec::new();

    if spec.stratify_by_group {
        for g in &ds.groups {
            let rows = ds.rows_of_group(g);
            let n = rows.len();
            let n_test = ((spec.test_fraction * n as f64).round() as usize).max(1);
            if n < n_test + min_train {
                return Err(AuditError::GroupTooSmall {
                    group: g.clone(),
                    rows: n,
                    min_train,
                    fraction: spec.test_fraction,
                });
            }
            let mut shuffled = rows;
            let mut rng = seeding::stream(spec.seed, &format!("split/{g}"));
            shuffled.shuffle(&mut rng);
            test_idx.extend_from_slice(&shuffled[..n_test]);
        }
    } else {
        let n = ds.n_rows();
        let n_test = ((spec.test_fraction * n as f64).round() as usize).max(1);
        if n < n_test + min_train {
            return Err(AuditError::GroupTooSmall {
                group: "<all rows>".into(),
                rows: n,
                min_train,
                fraction: spec.test_fraction,
            });
        }
        let mut shuffled: Vec<usize> = (0..n).collect();
        let mut rng = seeding::stream(spec.seed, "split");
        shuffled.shuffle(&mut rng);
        test_idx.extend_from_slice(&shuffled[..n_test]);
    }

    test_idx.sort_unstable();
    let in_test: std::collections::HashSet<usize> = test_idx.iter().copied().collect();
    let train_idx: Vec<usize> = (0..ds.n_rows()).filter(|i| !in_test.contains(i)).collect();
    Ok((ds.subset(&train_idx), ds.subset(&test_idx)))
}
