//! Dataset model: the measurement schema, per-subject records, and the
//! delimited file format shared by every command.
//!
//! A dataset pairs pre-treatment item responses `y0`, covariates `x`, a
//! treatment arm in {-1,+1} with its randomization probability, and the
//! post-treatment responses `y1`. Items are either discrete with categories
//! coded `0..num_categories-1` or continuous. Validation is total: every
//! malformed input yields a structured [`DataError`] naming the offending
//! row and column, never a partially constructed [`Dataset`].

use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use thiserror::Error;

/// Column name holding the assigned arm.
pub const TREATMENT_COLUMN: &str = "treatment";
/// Column name holding the randomization probability of the assigned arm.
pub const PROPENSITY_COLUMN: &str = "propensity";
/// Prefix for pre-treatment item columns.
pub const Y0_PREFIX: &str = "y0_";
/// Prefix for post-treatment item columns.
pub const Y1_PREFIX: &str = "y1_";

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed delimited data: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: invalid schema JSON: {source}")]
    SchemaJson {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("missing column `{column}`")]
    MissingColumn { column: String },
    #[error("unexpected column `{column}`")]
    UnexpectedColumn { column: String },
    #[error("duplicate column `{column}`")]
    DuplicateColumn { column: String },
    #[error("row {row}: missing value in column `{column}`")]
    MissingValue { row: usize, column: String },
    #[error("row {row}: non-numeric value `{value}` in column `{column}`")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}: non-finite value in column `{column}`")]
    NonFinite { row: usize, column: String },
    #[error("row {row}: item `{item}` expects an integer category, got `{value}`")]
    NonIntegerCategory {
        row: usize,
        item: String,
        value: String,
    },
    #[error("row {row}: item `{item}` category {value} outside 0..={max}")]
    CategoryOutOfRange {
        row: usize,
        item: String,
        value: i64,
        max: usize,
    },
    #[error("row {row}: treatment `{value}` is not -1 or 1")]
    InvalidTreatment { row: usize, value: String },
    #[error("row {row}: propensity {value} outside the open interval (0, 1)")]
    InvalidPropensity { row: usize, value: f64 },
    #[error("record {row}: {message}")]
    InvalidRecord { row: usize, message: String },
}

impl DataError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        DataError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Treatment arm label, stored as -1/+1 in files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "i8", into = "i8")]
pub enum Arm {
    Neg,
    Pos,
}

impl Arm {
    pub const BOTH: [Arm; 2] = [Arm::Neg, Arm::Pos];

    /// -1.0 or +1.0, the value entering the transition-network interaction.
    pub fn sign(self) -> f64 {
        match self {
            Arm::Neg => -1.0,
            Arm::Pos => 1.0,
        }
    }

    pub fn label(self) -> i8 {
        match self {
            Arm::Neg => -1,
            Arm::Pos => 1,
        }
    }

    pub fn opposite(self) -> Arm {
        match self {
            Arm::Neg => Arm::Pos,
            Arm::Pos => Arm::Neg,
        }
    }
}

impl TryFrom<i8> for Arm {
    type Error = String;

    fn try_from(value: i8) -> Result<Self, Self::Error> {
        match value {
            -1 => Ok(Arm::Neg),
            1 => Ok(Arm::Pos),
            other => Err(format!("treatment label must be -1 or 1, got {other}")),
        }
    }
}

impl From<Arm> for i8 {
    fn from(arm: Arm) -> i8 {
        arm.label()
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.label())
    }
}

impl std::str::FromStr for Arm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "-1" => Ok(Arm::Neg),
            "1" | "+1" => Ok(Arm::Pos),
            other => Err(format!("treatment label must be -1 or 1, got `{other}`")),
        }
    }
}

/// Kind of a measurement item.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ItemKind {
    /// Categories coded 0..num_categories-1.
    Discrete { num_categories: usize },
    Continuous,
}

/// One measurement item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: ItemKind,
}

impl ItemSpec {
    pub fn discrete(name: impl Into<String>, num_categories: usize) -> Self {
        ItemSpec {
            name: name.into(),
            kind: ItemKind::Discrete { num_categories },
        }
    }

    pub fn continuous(name: impl Into<String>) -> Self {
        ItemSpec {
            name: name.into(),
            kind: ItemKind::Continuous,
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self.kind, ItemKind::Discrete { .. })
    }
}

/// Ordered sequence of measurement items shared by y0 and y1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemSchema {
    pub items: Vec<ItemSpec>,
}

impl ItemSchema {
    pub fn new(items: Vec<ItemSpec>) -> Self {
        ItemSchema { items }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Number of categories for item `j`, or None when continuous.
    pub fn num_categories(&self, j: usize) -> Option<usize> {
        match self.items[j].kind {
            ItemKind::Discrete { num_categories } => Some(num_categories),
            ItemKind::Continuous => None,
        }
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.items.iter().position(|item| item.name == name)
    }

    pub fn discrete_indices(&self) -> Vec<usize> {
        self.items
            .iter()
            .enumerate()
            .filter(|(_, item)| item.is_discrete())
            .map(|(j, _)| j)
            .collect()
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if self.items.is_empty() {
            return Err(DataError::InvalidSchema(
                "schema needs at least one item".into(),
            ));
        }
        let mut seen = HashSet::new();
        for item in &self.items {
            if item.name.is_empty() {
                return Err(DataError::InvalidSchema("empty item name".into()));
            }
            if !seen.insert(item.name.as_str()) {
                return Err(DataError::InvalidSchema(format!(
                    "duplicate item name `{}`",
                    item.name
                )));
            }
            if let ItemKind::Discrete { num_categories } = item.kind {
                if num_categories < 2 {
                    return Err(DataError::InvalidSchema(format!(
                        "item `{}` needs at least 2 categories, got {num_categories}",
                        item.name
                    )));
                }
            }
        }
        Ok(())
    }

    /// Validate one item-value vector against the schema.
    ///
    /// `row` and `phase` ("y0"/"y1") only shape the error message.
    pub fn validate_values(&self, values: &[f64], row: usize, phase: &str) -> Result<(), DataError> {
        if values.len() != self.items.len() {
            return Err(DataError::InvalidRecord {
                row,
                message: format!(
                    "{phase} has {} values for {} items",
                    values.len(),
                    self.items.len()
                ),
            });
        }
        for (item, &v) in self.items.iter().zip(values) {
            let column = format!(
                "{}{}",
                if phase == "y0" { Y0_PREFIX } else { Y1_PREFIX },
                item.name
            );
            if !v.is_finite() {
                return Err(DataError::NonFinite { row, column });
            }
            if let ItemKind::Discrete { num_categories } = item.kind {
                if v.fract() != 0.0 {
                    return Err(DataError::NonIntegerCategory {
                        row,
                        item: item.name.clone(),
                        value: format!("{v}"),
                    });
                }
                let c = v as i64;
                if c < 0 || c as usize >= num_categories {
                    return Err(DataError::CategoryOutOfRange {
                        row,
                        item: item.name.clone(),
                        value: c,
                        max: num_categories - 1,
                    });
                }
            }
        }
        Ok(())
    }
}

/// On-disk schema file: items plus covariate names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaFile {
    pub items: Vec<ItemSpec>,
    pub covariates: Vec<String>,
}

impl SchemaFile {
    pub fn new(schema: &ItemSchema, covariates: &[String]) -> Self {
        SchemaFile {
            items: schema.items.clone(),
            covariates: covariates.to_vec(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, DataError> {
        let text = std::fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
        let file: SchemaFile = serde_json::from_str(&text).map_err(|e| DataError::SchemaJson {
            path: path.to_path_buf(),
            source: e,
        })?;
        file.validate()?;
        Ok(file)
    }

    pub fn save(&self, path: &Path) -> Result<(), DataError> {
        let text = serde_json::to_string_pretty(self).expect("schema serializes");
        std::fs::write(path, text + "\n").map_err(|e| DataError::io(path, e))
    }

    pub fn schema(&self) -> ItemSchema {
        ItemSchema::new(self.items.clone())
    }

    pub fn validate(&self) -> Result<(), DataError> {
        self.schema().validate()?;
        let mut seen = HashSet::new();
        for name in &self.covariates {
            if name.is_empty() {
                return Err(DataError::InvalidSchema("empty covariate name".into()));
            }
            if !seen.insert(name.as_str()) {
                return Err(DataError::InvalidSchema(format!(
                    "duplicate covariate name `{name}`"
                )));
            }
            if name == TREATMENT_COLUMN || name == PROPENSITY_COLUMN {
                return Err(DataError::InvalidSchema(format!(
                    "covariate name `{name}` collides with a reserved column"
                )));
            }
        }
        Ok(())
    }
}

/// One subject: pre-treatment items, covariates, assigned arm with its
/// randomization probability, and post-treatment items.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectRecord {
    pub y0: Vec<f64>,
    pub x: Vec<f64>,
    pub arm: Arm,
    pub propensity: f64,
    pub y1: Vec<f64>,
}

/// A validated dataset. Immutable after construction; safe to share
/// read-only across parallel workers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub schema: ItemSchema,
    pub covariate_names: Vec<String>,
    pub records: Vec<SubjectRecord>,
}

/// Baseline-only view of a subject, the input to treatment recommendation.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineRow {
    pub y0: Vec<f64>,
    pub x: Vec<f64>,
}

impl Dataset {
    /// Build and validate a dataset in one step.
    pub fn new(
        schema: ItemSchema,
        covariate_names: Vec<String>,
        records: Vec<SubjectRecord>,
    ) -> Result<Self, DataError> {
        let ds = Dataset {
            schema,
            covariate_names,
            records,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn n(&self) -> usize {
        self.records.len()
    }

    pub fn has_both_arms(&self) -> bool {
        let mut pos = false;
        let mut neg = false;
        for r in &self.records {
            match r.arm {
                Arm::Pos => pos = true,
                Arm::Neg => neg = true,
            }
        }
        pos && neg
    }

    pub fn baseline_rows(&self) -> Vec<BaselineRow> {
        self.records
            .iter()
            .map(|r| BaselineRow {
                y0: r.y0.clone(),
                x: r.x.clone(),
            })
            .collect()
    }

    pub fn validate(&self) -> Result<(), DataError> {
        self.schema.validate()?;
        SchemaFile::new(&self.schema, &self.covariate_names).validate()?;
        for (i, r) in self.records.iter().enumerate() {
            let row = i + 1;
            self.schema.validate_values(&r.y0, row, "y0")?;
            self.schema.validate_values(&r.y1, row, "y1")?;
            if r.x.len() != self.covariate_names.len() {
                return Err(DataError::InvalidRecord {
                    row,
                    message: format!(
                        "{} covariates for {} names",
                        r.x.len(),
                        self.covariate_names.len()
                    ),
                });
            }
            for (name, &v) in self.covariate_names.iter().zip(&r.x) {
                if !v.is_finite() {
                    return Err(DataError::NonFinite {
                        row,
                        column: name.clone(),
                    });
                }
            }
            if !(r.propensity > 0.0 && r.propensity < 1.0) {
                return Err(DataError::InvalidPropensity {
                    row,
                    value: r.propensity,
                });
            }
        }
        Ok(())
    }

    /// Records `range` as a standalone dataset (train/test slicing).
    pub fn slice(&self, range: std::ops::Range<usize>) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            covariate_names: self.covariate_names.clone(),
            records: self.records[range].to_vec(),
        }
    }

    /// Subset by record indices, preserving the given order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            covariate_names: self.covariate_names.clone(),
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
        }
    }
}

fn format_value(kind: &ItemKind, v: f64) -> String {
    match kind {
        ItemKind::Discrete { .. } => format!("{}", v as i64),
        ItemKind::Continuous => format!("{v}"),
    }
}

/// Write `ds` as UTF-8 comma-delimited text with a header row. Columns are
/// `y0_*` items in schema order, `y1_*` items, covariates, `treatment`,
/// `propensity`. Continuous values use the shortest round-trip decimal form.
pub fn save_dataset(ds: &Dataset, path: &Path) -> Result<(), DataError> {
    ds.validate()?;
    let mut writer = csv::WriterBuilder::new()
        .from_path(path)
        .map_err(|e| DataError::Csv {
            path: path.to_path_buf(),
            source: e,
        })?;
    let mut header: Vec<String> = Vec::new();
    for item in &ds.schema.items {
        header.push(format!("{Y0_PREFIX}{}", item.name));
    }
    for item in &ds.schema.items {
        header.push(format!("{Y1_PREFIX}{}", item.name));
    }
    header.extend(ds.covariate_names.iter().cloned());
    header.push(TREATMENT_COLUMN.to_string());
    header.push(PROPENSITY_COLUMN.to_string());
    let write_err = |e: csv::Error| DataError::Csv {
        path: path.to_path_buf(),
        source: e,
    };
    writer.write_record(&header).map_err(write_err)?;
    for r in &ds.records {
        let mut row: Vec<String> = Vec::with_capacity(header.len());
        for (item, &v) in ds.schema.items.iter().zip(&r.y0) {
            row.push(format_value(&item.kind, v));
        }
        for (item, &v) in ds.schema.items.iter().zip(&r.y1) {
            row.push(format_value(&item.kind, v));
        }
        for &v in &r.x {
            row.push(format!("{v}"));
        }
        row.push(r.arm.to_string());
        row.push(format!("{}", r.propensity));
        writer.write_record(&row).map_err(write_err)?;
    }
    writer
        .flush()
        .map_err(|e| DataError::io(path, e))?;
    Ok(())
}

struct HeaderIndex {
    positions: Vec<usize>,
}

fn index_header(
    header: &csv::StringRecord,
    expected: &[String],
    allow_extra: &dyn Fn(&str) -> bool,
) -> Result<HeaderIndex, DataError> {
    let mut seen = HashSet::new();
    for name in header.iter() {
        if !seen.insert(name) {
            return Err(DataError::DuplicateColumn {
                column: name.to_string(),
            });
        }
    }
    let mut positions = Vec::with_capacity(expected.len());
    for want in expected {
        match header.iter().position(|h| h == want) {
            Some(p) => positions.push(p),
            None => {
                return Err(DataError::MissingColumn {
                    column: want.clone(),
                })
            }
        }
    }
    for name in header.iter() {
        if !expected.iter().any(|w| w == name) && !allow_extra(name) {
            return Err(DataError::UnexpectedColumn {
                column: name.to_string(),
            });
        }
    }
    Ok(HeaderIndex { positions })
}

fn parse_cell(field: &str, row: usize, column: &str) -> Result<f64, DataError> {
    let trimmed = field.trim();
    if trimmed.is_empty() {
        return Err(DataError::MissingValue {
            row,
            column: column.to_string(),
        });
    }
    let v: f64 = trimmed.parse().map_err(|_| DataError::NonNumeric {
        row,
        column: column.to_string(),
        value: field.to_string(),
    })?;
    if !v.is_finite() {
        return Err(DataError::NonFinite {
            row,
            column: column.to_string(),
        });
    }
    Ok(v)
}

fn read_rows(path: &Path) -> Result<(csv::StringRecord, Vec<csv::StringRecord>), DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| DataError::Csv {
            path: path.to_path_buf(),
            source: e,
        })?;
    let header = reader
        .headers()
        .map_err(|e| DataError::Csv {
            path: path.to_path_buf(),
            source: e,
        })?
        .clone();
    let mut rows = Vec::new();
    for record in reader.records() {
        rows.push(record.map_err(|e| DataError::Csv {
            path: path.to_path_buf(),
            source: e,
        })?);
    }
    Ok((header, rows))
}

/// Load a full dataset from `path`, validated against the schema file at
/// `schema_path`. Row order is preserved.
pub fn load_dataset(path: &Path, schema_path: &Path) -> Result<Dataset, DataError> {
    let schema_file = SchemaFile::load(schema_path)?;
    load_dataset_with(path, &schema_file)
}

/// Load a full dataset against an already-parsed schema.
pub fn load_dataset_with(path: &Path, schema_file: &SchemaFile) -> Result<Dataset, DataError> {
    schema_file.validate()?;
    let schema = schema_file.schema();
    let (header, rows) = read_rows(path)?;

    let mut expected: Vec<String> = Vec::new();
    for item in &schema.items {
        expected.push(format!("{Y0_PREFIX}{}", item.name));
    }
    for item in &schema.items {
        expected.push(format!("{Y1_PREFIX}{}", item.name));
    }
    expected.extend(schema_file.covariates.iter().cloned());
    expected.push(TREATMENT_COLUMN.to_string());
    expected.push(PROPENSITY_COLUMN.to_string());
    let index = index_header(&header, &expected, &|_| false)?;

    let j = schema.items.len();
    let p = schema_file.covariates.len();
    let mut records = Vec::with_capacity(rows.len());
    for (i, record) in rows.iter().enumerate() {
        let row = i + 1;
        let cell = |slot: usize| -> &str { record.get(index.positions[slot]).unwrap_or("") };
        let mut y0 = Vec::with_capacity(j);
        let mut y1 = Vec::with_capacity(j);
        for (slot, item) in schema.items.iter().enumerate() {
            y0.push(parse_cell(cell(slot), row, &expected[slot])?);
            let _ = item;
        }
        for slot in j..2 * j {
            y1.push(parse_cell(cell(slot), row, &expected[slot])?);
        }
        let mut x = Vec::with_capacity(p);
        for slot in 2 * j..2 * j + p {
            x.push(parse_cell(cell(slot), row, &expected[slot])?);
        }
        let arm_text = cell(2 * j + p);
        let arm: Arm = arm_text.parse().map_err(|_| DataError::InvalidTreatment {
            row,
            value: arm_text.to_string(),
        })?;
        let propensity = parse_cell(cell(2 * j + p + 1), row, PROPENSITY_COLUMN)?;
        records.push(SubjectRecord {
            y0,
            x,
            arm,
            propensity,
            y1,
        });
    }
    Dataset::new(schema, schema_file.covariates.clone(), records)
}

/// Load baseline-only rows (`y0_*` items plus covariates) for
/// recommendation. Post-treatment, treatment, and propensity columns are
/// permitted and ignored, so both new-patient files and full dataset files
/// are accepted.
pub fn load_baseline(path: &Path, schema_file: &SchemaFile) -> Result<Vec<BaselineRow>, DataError> {
    schema_file.validate()?;
    let schema = schema_file.schema();
    let (header, rows) = read_rows(path)?;

    let mut expected: Vec<String> = Vec::new();
    for item in &schema.items {
        expected.push(format!("{Y0_PREFIX}{}", item.name));
    }
    expected.extend(schema_file.covariates.iter().cloned());
    let y1_names: HashSet<String> = schema
        .items
        .iter()
        .map(|item| format!("{Y1_PREFIX}{}", item.name))
        .collect();
    let allow_extra = |name: &str| {
        name == TREATMENT_COLUMN || name == PROPENSITY_COLUMN || y1_names.contains(name)
    };
    let index = index_header(&header, &expected, &allow_extra)?;

    let j = schema.items.len();
    let mut out = Vec::with_capacity(rows.len());
    for (i, record) in rows.iter().enumerate() {
        let row = i + 1;
        let cell = |slot: usize| -> &str { record.get(index.positions[slot]).unwrap_or("") };
        let mut y0 = Vec::with_capacity(j);
        for slot in 0..j {
            y0.push(parse_cell(cell(slot), row, &expected[slot])?);
        }
        schema.validate_values(&y0, row, "y0")?;
        let mut x = Vec::with_capacity(schema_file.covariates.len());
        for slot in j..j + schema_file.covariates.len() {
            let v = parse_cell(cell(slot), row, &expected[slot])?;
            x.push(v);
        }
        out.push(BaselineRow { y0, x });
    }
    Ok(out)
}
