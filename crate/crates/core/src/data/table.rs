use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::DataError;
use crate::numerics::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Group {
    #[serde(rename = "CN")]
    Cn,
    #[serde(rename = "PT")]
    Pt,
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Group::Cn => "CN",
            Group::Pt => "PT",
        })
    }
}

impl FromStr for Group {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "CN" => Ok(Group::Cn),
            "PT" => Ok(Group::Pt),
            _ => Err(()),
        }
    }
}

/// Per-row age (years) and sex (0/1).
#[derive(Debug, Clone, PartialEq)]
pub struct Covariates {
    pub age: Vec<f64>,
    pub sex: Vec<f64>,
}

/// Participants × ROI features, with group labels and optional covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct RoiTable {
    pub ids: Vec<String>,
    pub groups: Vec<Group>,
    pub covariates: Option<Covariates>,
    pub feature_names: Vec<String>,
    pub values: Matrix,
}

const RESERVED: [&str; 4] = ["id", "group", "age", "sex"];

impl RoiTable {
    /// Validates row counts, unique feature names and finiteness.
    pub fn new(
        ids: Vec<String>,
        groups: Vec<Group>,
        covariates: Option<Covariates>,
        feature_names: Vec<String>,
        values: Matrix,
    ) -> Result<Self, DataError> {
        let n = values.rows();
        if ids.len() != n || groups.len() != n {
            return Err(DataError::SpecInvalid(format!(
                "{n} value rows but {} ids and {} groups",
                ids.len(),
                groups.len()
            )));
        }
        if feature_names.len() != values.cols() {
            return Err(DataError::SpecInvalid(format!(
                "{} feature names for {} columns",
                feature_names.len(),
                values.cols()
            )));
        }
        if let Some(c) = &covariates {
            if c.age.len() != n || c.sex.len() != n {
                return Err(DataError::SpecInvalid("covariate length differs from row count".into()));
            }
            if !c.age.iter().chain(&c.sex).all(|v| v.is_finite()) {
                return Err(DataError::SpecInvalid("non-finite covariate".into()));
            }
        }
        let mut seen = HashSet::new();
        for name in &feature_names {
            if name.is_empty() || RESERVED.contains(&name.as_str()) || !seen.insert(name.as_str()) {
                return Err(DataError::Schema(name.clone()));
            }
        }
        if !values.is_finite() {
            return Err(DataError::SpecInvalid("non-finite ROI value".into()));
        }
        Ok(Self { ids, groups, covariates, feature_names, values })
    }

    pub fn len(&self) -> usize {
        self.values.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn num_features(&self) -> usize {
        self.values.cols()
    }

    pub fn indices_of(&self, group: Group) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.groups[i] == group).collect()
    }

    pub fn rows_of(&self, group: Group) -> Matrix {
        self.values.select_rows(&self.indices_of(group))
    }

    pub fn ids_of(&self, group: Group) -> Vec<String> {
        self.indices_of(group).into_iter().map(|i| self.ids[i].clone()).collect()
    }

    pub fn cn_rows(&self) -> Matrix {
        self.rows_of(Group::Cn)
    }

    pub fn pt_rows(&self) -> Matrix {
        self.rows_of(Group::Pt)
    }

    /// Sub-table of the given rows, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            ids: indices.iter().map(|&i| self.ids[i].clone()).collect(),
            groups: indices.iter().map(|&i| self.groups[i]).collect(),
            covariates: self.covariates.as_ref().map(|c| Covariates {
                age: indices.iter().map(|&i| c.age[i]).collect(),
                sex: indices.iter().map(|&i| c.sex[i]).collect(),
            }),
            feature_names: self.feature_names.clone(),
            values: self.values.select_rows(indices),
        }
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self, DataError> {
        let mut text = String::new();
        File::open(path)?.read_to_string(&mut text)?;
        Self::from_csv_str(&text)
    }

    pub fn from_csv_str(text: &str) -> Result<Self, DataError> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
        let header: Vec<String> = reader
            .headers()
            .map_err(|e| DataError::Parse { line: 1, column: e.to_string() })?
            .iter()
            .map(str::to_owned)
            .collect();

        match header.first().map(String::as_str) {
            Some("id") => {}
            _ => return Err(DataError::Schema("id".into())),
        }
        if header.get(1).map(String::as_str) != Some("group") {
            return Err(DataError::Schema("group".into()));
        }
        let has_cov = match (header.get(2).map(String::as_str), header.get(3).map(String::as_str)) {
            (Some("age"), Some("sex")) => true,
            (Some("age"), _) => return Err(DataError::Schema("sex".into())),
            (Some("sex"), _) => return Err(DataError::Schema("age".into())),
            _ => false,
        };
        let first_roi = if has_cov { 4 } else { 2 };
        let feature_names: Vec<String> = header[first_roi..].to_vec();
        let mut seen = HashSet::new();
        for name in &feature_names {
            if name.is_empty() || RESERVED.contains(&name.as_str()) || !seen.insert(name.as_str()) {
                return Err(DataError::Schema(name.clone()));
            }
        }

        let d = feature_names.len();
        let (mut ids, mut groups, mut age, mut sex, mut values) =
            (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for (row_idx, record) in reader.records().enumerate() {
            let line = row_idx + 2;
            let record = record.map_err(|e| DataError::Parse { line, column: e.to_string() })?;
            if record.len() != header.len() {
                return Err(DataError::Parse { line, column: format!("expected {} fields", header.len()) });
            }
            ids.push(record[0].to_owned());
            groups.push(
                record[1]
                    .parse::<Group>()
                    .map_err(|_| DataError::Parse { line, column: "group".into() })?,
            );
            let num = |col: usize| -> Result<f64, DataError> {
                record[col]
                    .trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| DataError::Parse { line, column: header[col].clone() })
            };
            if has_cov {
                age.push(num(2)?);
                sex.push(num(3)?);
            }
            for c in first_roi..first_roi + d {
                values.push(num(c)?);
            }
        }
        let n = ids.len();
        let values = Matrix::new(n, d, values).map_err(|e| DataError::SpecInvalid(e.to_string()))?;
        Self::new(ids, groups, has_cov.then_some(Covariates { age, sex }), feature_names, values)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<(), DataError> {
        let mut file = File::create(path)?;
        file.write_all(self.to_csv_string().as_bytes())?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
        let mut header = vec!["id".to_owned(), "group".to_owned()];
        if self.covariates.is_some() {
            header.push("age".into());
            header.push("sex".into());
        }
        header.extend(self.feature_names.iter().cloned());
        w.write_record(&header).expect("in-memory write");
        for i in 0..self.len() {
            let mut rec = vec![self.ids[i].clone(), self.groups[i].to_string()];
            if let Some(c) = &self.covariates {
                rec.push(format_value(c.age[i]));
                rec.push(format_value(c.sex[i]));
            }
            rec.extend(self.values.row(i).iter().map(|&v| format_value(v)));
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 output")
    }
}

/// 17 significant digits in scientific notation; parses back bit-exactly.
pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}
