//! Training-progress metrics and the stopping rule.
//!
//! Each epoch compares, for every subtype `i`, a Gaussian fitted to the
//! mapped CN cohort `f(CN, e_i)` with a Gaussian fitted to the PT rows that
//! `g` currently assigns to `i`, using the closed-form squared 2-Wasserstein
//! distance. Label stability (alteration quantity) and the cluster loss are
//! tracked alongside.

use std::collections::VecDeque;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffnet::cross_entropy_batch;
use crate::model::{constant_subtype_batch, dominant_patterns, sample_subtype_batch, ModelError, SmileGanModel};
use crate::numerics::{sample_moments, sym_sqrt, CovKind, Covariance, GaussianMoments, Matrix, NumericsError};

/// Number of prior epochs whose labels feed the alteration quantity.
pub const AQ_WINDOW: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonitorConfig {
    pub cov_kind: CovKind,
    /// Clusters with fewer assigned PT rows get no distance.
    pub min_cluster_size: usize,
    /// Added to every variance before the full-covariance distance.
    pub ridge: f64,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        Self { cov_kind: CovKind::Diagonal, min_cluster_size: 5, ridge: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StopConfig {
    pub warmup_epochs: usize,
    pub wd_patience: usize,
    pub wd_min_delta: f64,
    /// `None` means 1% of the PT count, rounded down.
    pub aq_threshold: Option<usize>,
    pub cluster_loss_threshold: f64,
}

impl Default for StopConfig {
    fn default() -> Self {
        Self {
            warmup_epochs: 200,
            wd_patience: 100,
            wd_min_delta: 1e-4,
            aq_threshold: None,
            cluster_loss_threshold: 0.1,
        }
    }
}

impl StopConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.wd_min_delta >= 0.0 && self.wd_min_delta.is_finite()) {
            return Err(format!("wd_min_delta must be non-negative, got {}", self.wd_min_delta));
        }
        if !(self.cluster_loss_threshold >= 0.0) {
            return Err(format!("cluster_loss_threshold must be non-negative, got {}", self.cluster_loss_threshold));
        }
        if self.wd_patience == 0 {
            return Err("wd_patience must be positive".into());
        }
        Ok(())
    }

    pub fn aq_limit(&self, n_pt: usize) -> usize {
        self.aq_threshold.unwrap_or(n_pt / 100)
    }
}

/// Metrics of one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorRecord {
    pub epoch: usize,
    /// Distance per subtype; `None` for clusters below the minimum size.
    pub wd_per_cluster: Vec<Option<f64>>,
    /// Mean over the populated clusters.
    pub wd_aggregate: Option<f64>,
    pub alteration_quantity: usize,
    pub cluster_loss: f64,
    pub stop: bool,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MonitorError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("covariance kinds differ")]
    KindMismatch,
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Squared 2-Wasserstein distance between two Gaussians.
///
/// Full kind: `‖m1 − m2‖² + tr C1 + tr C2 − 2 tr (C1^½ C2 C1^½)^½`.
/// Diagonal kind: `Σ (m1 − m2)² + (√v1 − √v2)²`.
pub fn wd_gaussian(a: &GaussianMoments, b: &GaussianMoments) -> Result<f64, MonitorError> {
    if a.dim() != b.dim() {
        return Err(MonitorError::DimensionMismatch(a.dim(), b.dim()));
    }
    if a == b {
        return Ok(0.0);
    }
    let mean_term: f64 = a.mean.iter().zip(&b.mean).map(|(x, y)| (x - y).powi(2)).sum();
    let cov_term = match (&a.cov, &b.cov) {
        (Covariance::Diagonal(va), Covariance::Diagonal(vb)) => {
            va.iter().zip(vb).map(|(x, y)| (x.max(0.0).sqrt() - y.max(0.0).sqrt()).powi(2)).sum()
        }
        (Covariance::Full(ca), Covariance::Full(cb)) => {
            let s = sym_sqrt(ca)?;
            let mut inner = s.matmul(cb)?.matmul(&s)?;
            inner.symmetrize();
            let cross = sym_sqrt(&inner)?.trace();
            ca.trace() + cb.trace() - 2.0 * cross
        }
        _ => return Err(MonitorError::KindMismatch),
    };
    Ok((mean_term + cov_term).max(0.0))
}

/// Dominant-pattern vectors of recent epochs, oldest first.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabelHistory {
    window: VecDeque<Vec<usize>>,
}

impl LabelHistory {
    pub fn push(&mut self, labels: Vec<usize>) {
        if self.window.len() == AQ_WINDOW {
            self.window.pop_front();
        }
        self.window.push_back(labels);
    }

    pub fn len(&self) -> usize {
        self.window.len()
    }

    pub fn is_empty(&self) -> bool {
        self.window.is_empty()
    }

    /// Participants whose label in `current` differs from their label in
    /// any stored epoch.
    pub fn alteration_quantity(&self, current: &[usize]) -> usize {
        (0..current.len())
            .filter(|&j| self.window.iter().any(|past| past.get(j).is_some_and(|&l| l != current[j])))
            .count()
    }
}

/// Metrics of `model` against the CN and PT rows, plus the current PT labels.
/// `rng` supplies the subtypes for the cluster loss.
pub fn epoch_monitor<R: Rng>(
    model: &SmileGanModel,
    cn: &Matrix,
    pt: &Matrix,
    history: &LabelHistory,
    rng: &mut R,
) -> Result<(MonitorRecord, Vec<usize>), ModelError> {
    let cfg = &model.config.monitor;
    let m = model.m();
    let labels = dominant_patterns(&model.forward_g(pt)?);
    let numerics = |e: NumericsError| ModelError::Numerical(e.to_string());

    let mut wd_per_cluster = Vec::with_capacity(m);
    for i in 0..m {
        let members: Vec<usize> = (0..labels.len()).filter(|&j| labels[j] == i).collect();
        if members.len() < cfg.min_cluster_size.max(2) || cn.rows() < 2 {
            wd_per_cluster.push(None);
            continue;
        }
        let (mapped, _) = model.forward_f(cn, &constant_subtype_batch(m, cn.rows(), i))?;
        let mut a = sample_moments(&mapped, cfg.cov_kind).map_err(numerics)?;
        let mut b = sample_moments(&pt.select_rows(&members), cfg.cov_kind).map_err(numerics)?;
        if cfg.cov_kind == CovKind::Full {
            a.add_ridge(cfg.ridge);
            b.add_ridge(cfg.ridge);
        }
        let wd = wd_gaussian(&a, &b).map_err(|e| ModelError::Numerical(e.to_string()))?;
        wd_per_cluster.push(Some(wd));
    }
    let present: Vec<f64> = wd_per_cluster.iter().flatten().copied().collect();
    let wd_aggregate = (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64);

    let z = sample_subtype_batch(m, cn.rows(), rng);
    let (y, _) = model.forward_f(cn, &z)?;
    let (cluster_loss, _) = cross_entropy_batch(&z, &model.forward_g(&y)?)?;

    let record = MonitorRecord {
        epoch: model.epoch,
        wd_per_cluster,
        wd_aggregate,
        alteration_quantity: history.alteration_quantity(&labels),
        cluster_loss,
        stop: false,
    };
    Ok((record, labels))
}

/// Stop once past warmup, the aggregate distance has stalled for the
/// patience window, labels are stable and the cluster loss is small.
pub fn should_stop(records: &[MonitorRecord], cfg: &StopConfig, n_pt: usize) -> bool {
    let Some(last) = records.last() else { return false };
    if last.epoch <= cfg.warmup_epochs
        || last.alteration_quantity > cfg.aq_limit(n_pt)
        || !(last.cluster_loss <= cfg.cluster_loss_threshold)
    {
        return false;
    }
    if records.len() <= cfg.wd_patience {
        return false;
    }
    let (before, recent) = records.split_at(records.len() - cfg.wd_patience);
    let min_of = |rs: &[MonitorRecord]| rs.iter().filter_map(|r| r.wd_aggregate).reduce(f64::min);
    match (min_of(before), min_of(recent)) {
        (Some(best), Some(recent_best)) => recent_best > best - cfg.wd_min_delta,
        (Some(_), None) => true,
        _ => false,
    }
}

fn cell(v: Option<f64>) -> String {
    v.map(crate::data::format_value).unwrap_or_default()
}

/// Monitor log as CSV: `epoch,wd_aggregate,wd_c0..,aq,cluster_loss,stop`.
pub fn monitor_csv_string(records: &[MonitorRecord], m: usize) -> String {
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    let mut header = vec!["epoch".to_string(), "wd_aggregate".to_string()];
    header.extend((0..m).map(|i| format!("wd_c{i}")));
    header.extend(["aq", "cluster_loss", "stop"].map(String::from));
    w.write_record(&header).expect("in-memory write");
    for r in records {
        let mut row = vec![r.epoch.to_string(), cell(r.wd_aggregate)];
        row.extend((0..m).map(|i| cell(r.wd_per_cluster.get(i).copied().flatten())));
        row.push(r.alteration_quantity.to_string());
        row.push(crate::data::format_value(r.cluster_loss));
        row.push(if r.stop { "1" } else { "0" }.to_string());
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii csv")
}

pub fn write_monitor_csv(records: &[MonitorRecord], m: usize, path: impl AsRef<Path>) -> std::io::Result<()> {
    std::fs::File::create(path)?.write_all(monitor_csv_string(records, m).as_bytes())
}
