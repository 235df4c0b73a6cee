use serde::{Deserialize, Serialize};

use super::{DataError, Group, RoiTable};
use crate::numerics::{least_squares_fit, Matrix};

/// Target CN mean and standard deviation of every preprocessed ROI.
pub const CN_MEAN: f64 = 1.0;
pub const CN_SD: f64 = 0.1;

/// Everything needed to replay preprocessing on new rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessStats {
    pub feature_names: Vec<String>,
    /// Per-ROI `[intercept, age, sex]` coefficients fitted on CN rows, when
    /// covariate effects were removed.
    pub coefficients: Option<Vec<[f64; 3]>>,
    /// Per-ROI CN mean after residualization.
    pub shift: Vec<f64>,
    /// Per-ROI CN standard deviation after residualization.
    pub scale: Vec<f64>,
}

/// Removes CN-fitted age/sex effects (keeping the intercept), then rescales
/// each ROI so the CN rows have mean 1 and standard deviation 0.1.
pub fn preprocess(table: &RoiTable, residualize: bool) -> Result<(RoiTable, PreprocessStats), DataError> {
    let cn = table.indices_of(Group::Cn);
    if cn.len() < 2 {
        return Err(DataError::InsufficientCn(cn.len()));
    }
    let d = table.num_features();

    let coefficients = if residualize {
        let cov = table.covariates.as_ref().ok_or(DataError::MissingCovariates)?;
        let mut design = Matrix::zeros(cn.len(), 3);
        for (r, &i) in cn.iter().enumerate() {
            design.row_mut(r).copy_from_slice(&[1.0, cov.age[i], cov.sex[i]]);
        }
        let mut coefs = Vec::with_capacity(d);
        for j in 0..d {
            let y: Vec<f64> = cn.iter().map(|&i| table.values.get(i, j)).collect();
            let b = least_squares_fit(&design, &y)?;
            coefs.push([b[0], b[1], b[2]]);
        }
        Some(coefs)
    } else {
        None
    };

    let mut stats = PreprocessStats {
        feature_names: table.feature_names.clone(),
        coefficients,
        shift: vec![0.0; d],
        scale: vec![1.0; d],
    };
    let residual = stats.residualize(table)?;
    let n = cn.len() as f64;
    for j in 0..d {
        let col: Vec<f64> = cn.iter().map(|&i| residual.get(i, j)).collect();
        let mean = col.iter().sum::<f64>() / n;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        if var <= 0.0 {
            return Err(DataError::DegenerateFeature(table.feature_names[j].clone()));
        }
        stats.shift[j] = mean;
        stats.scale[j] = var.sqrt();
    }
    let out = stats.apply(table)?;
    Ok((out, stats))
}

impl PreprocessStats {
    fn residualize(&self, table: &RoiTable) -> Result<Matrix, DataError> {
        if table.feature_names != self.feature_names {
            return Err(DataError::Schema("feature names differ from the fitted table".into()));
        }
        let mut values = table.values.clone();
        if let Some(coefs) = &self.coefficients {
            let cov = table.covariates.as_ref().ok_or(DataError::MissingCovariates)?;
            for i in 0..table.len() {
                for (v, c) in values.row_mut(i).iter_mut().zip(coefs) {
                    *v -= c[1] * cov.age[i] + c[2] * cov.sex[i];
                }
            }
        }
        Ok(values)
    }

    /// Applies the stored transform to any table with the same ROI columns.
    pub fn apply(&self, table: &RoiTable) -> Result<RoiTable, DataError> {
        let mut values = self.residualize(table)?;
        for i in 0..values.rows() {
            for ((v, m), s) in values.row_mut(i).iter_mut().zip(&self.shift).zip(&self.scale) {
                *v = CN_MEAN + CN_SD * (*v - m) / s;
            }
        }
        Ok(RoiTable { values, ..table.clone() })
    }
}
